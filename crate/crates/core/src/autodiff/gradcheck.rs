//! Central finite-difference verification of analytic gradients.
//!
//! The oracle rebuilds the forward pass twice per perturbed element and never
//! touches the backward code path, so it stays independent of what it checks.

use ndarray::Array4;

use super::{Graph, Node};

/// Result of comparing one tensor's analytic gradient to finite differences.
#[derive(Debug)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst_index: usize,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    pub checked: usize,
}

/// Relative error with an absolute floor so near-zero gradient pairs compare
/// sanely.
fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Check d(scalar output)/d(inputs[target]) by central differences with step
/// `h`. `build` must construct the same forward pass for any input values;
/// inputs are inserted as trainable leaves in order.
pub fn check_gradients(
    build: &dyn Fn(&mut Graph<f64>, &[Node]) -> Node,
    inputs: &[Array4<f64>],
    target: usize,
    h: f64,
    floor: f64,
) -> GradCheckReport {
    // analytic pass
    let mut g = Graph::<f64>::new();
    let leaves: Vec<Node> = inputs.iter().map(|x| g.leaf(x.clone(), true)).collect();
    let root = build(&mut g, &leaves);
    let grads = g.backward(root).expect("backward");
    let analytic = grads[leaves[target].0]
        .clone()
        .unwrap_or_else(|| Array4::zeros(inputs[target].dim()));

    let eval = |perturbed: &Array4<f64>| -> f64 {
        let mut g = Graph::<f64>::new();
        let leaves: Vec<Node> = inputs
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let v = if i == target { perturbed.clone() } else { x.clone() };
                g.leaf(v, false)
            })
            .collect();
        let root = build(&mut g, &leaves);
        g.scalar(root)
    };

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_index: 0,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
        checked: 0,
    };
    let base = &inputs[target];
    let flat_analytic: Vec<f64> = analytic.iter().copied().collect();
    for (i, &a) in flat_analytic.iter().enumerate() {
        let mut plus = base.clone();
        let mut minus = base.clone();
        {
            let p = plus.as_slice_mut().unwrap();
            p[i] += h;
        }
        {
            let m = minus.as_slice_mut().unwrap();
            m[i] -= h;
        }
        let numeric = (eval(&plus) - eval(&minus)) / (2.0 * h);
        let err = rel_err(a, numeric, floor);
        report.checked += 1;
        if err > report.max_rel_err {
            report.max_rel_err = err;
            report.worst_index = i;
            report.worst_analytic = a;
            report.worst_numeric = numeric;
        }
    }
    report
}
