//! A small define-by-run reverse-mode tape over (N, C, H, W) tensors.
//!
//! Every builder method computes its value eagerly and records enough context
//! to replay the backward pass. The op set is exactly what the restoration
//! networks need: dilated 3x3 / 1x1 convolutions, activations, channel
//! concatenation, squeeze-and-excitation plumbing, the centered Fourier pair,
//! the data-consistency blend, and mean-squared-error reductions.
//!
//! Weight sharing falls out naturally: a parameter leaf used by several ops
//! accumulates gradient contributions from each use.

mod conv;
pub mod gradcheck;

use ndarray::{s, Array2, Array3, Array4, Axis};
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::transforms::{fft2c_array, ifft2c_array};
use crate::Real;

pub use conv::{conv2d_raw, Conv2dShape};

/// Handle to a tensor in the graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Node(pub(crate) usize);

enum Op<F: Real> {
    Leaf,
    Conv2d { x: Node, w: Node, b: Node, dilation: usize },
    LeakyRelu { x: Node, slope: F },
    Sigmoid { x: Node },
    Concat { xs: Vec<Node> },
    Add { a: Node, b: Node },
    GlobalAvgPool { x: Node },
    /// x * gates with gates broadcast from (N, C, 1, 1).
    ScaleChannels { x: Node, gates: Node },
    /// Per-sample scalar multiply.
    ScaleSamples { x: Node, factors: Vec<F> },
    Fft2c { x: Node },
    Ifft2c { x: Node },
    DataConsistency { x: Node, mask: Array3<F>, lambda: F },
    /// Mean squared error against a constant target, optionally with a
    /// per-sample scale applied to both sides first.
    Mse { x: Node, target: Array4<F> },
    /// Weighted sum of scalar nodes.
    SumScalars { terms: Vec<(Node, F)> },
}

pub struct Graph<F: Real> {
    vals: Vec<Array4<F>>,
    ops: Vec<Op<F>>,
    needs: Vec<bool>,
}

impl<F: Real> Default for Graph<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Real> Graph<F> {
    pub fn new() -> Self {
        Self { vals: Vec::new(), ops: Vec::new(), needs: Vec::new() }
    }

    fn push(&mut self, val: Array4<F>, op: Op<F>, needs: bool) -> Node {
        self.vals.push(val);
        self.ops.push(op);
        self.needs.push(needs);
        Node(self.vals.len() - 1)
    }

    fn needs_any(&self, nodes: &[Node]) -> bool {
        nodes.iter().any(|n| self.needs[n.0])
    }

    pub fn value(&self, n: Node) -> &Array4<F> {
        &self.vals[n.0]
    }

    pub fn scalar(&self, n: Node) -> F {
        debug_assert_eq!(self.vals[n.0].len(), 1);
        self.vals[n.0][[0, 0, 0, 0]]
    }

    /// Insert a leaf tensor. `trainable` marks it as a gradient target.
    pub fn leaf(&mut self, val: Array4<F>, trainable: bool) -> Node {
        self.push(val, Op::Leaf, trainable)
    }

    /// Same-padded 2D convolution. Kernel must be square with odd side 1 or 3;
    /// weight layout (Cout, Cin, k, k), bias (1, Cout, 1, 1).
    pub fn conv2d(&mut self, x: Node, w: Node, b: Node, dilation: usize) -> Node {
        let val = conv::conv2d_forward(&self.vals[x.0], &self.vals[w.0], &self.vals[b.0], dilation);
        let needs = self.needs_any(&[x, w, b]);
        self.push(val, Op::Conv2d { x, w, b, dilation }, needs)
    }

    pub fn leaky_relu(&mut self, x: Node, slope: F) -> Node {
        let val = self.vals[x.0].mapv(|v| if v > F::zero() { v } else { v * slope });
        let needs = self.needs[x.0];
        self.push(val, Op::LeakyRelu { x, slope }, needs)
    }

    pub fn relu(&mut self, x: Node) -> Node {
        self.leaky_relu(x, F::zero())
    }

    pub fn sigmoid(&mut self, x: Node) -> Node {
        let one = F::one();
        let val = self.vals[x.0].mapv(|v| one / (one + (-v).exp()));
        let needs = self.needs[x.0];
        self.push(val, Op::Sigmoid { x }, needs)
    }

    pub fn concat(&mut self, xs: &[Node]) -> Node {
        let views: Vec<_> = xs.iter().map(|n| self.vals[n.0].view()).collect();
        let val = ndarray::concatenate(Axis(1), &views).expect("concat shapes");
        let needs = self.needs_any(xs);
        self.push(val, Op::Concat { xs: xs.to_vec() }, needs)
    }

    pub fn add(&mut self, a: Node, b: Node) -> Node {
        let val = &self.vals[a.0] + &self.vals[b.0];
        let needs = self.needs_any(&[a, b]);
        self.push(val, Op::Add { a, b }, needs)
    }

    pub fn global_avg_pool(&mut self, x: Node) -> Node {
        let v = &self.vals[x.0];
        let (n, c, h, w) = v.dim();
        let scale = F::from_usize(h * w).unwrap();
        let mut out = Array4::zeros((n, c, 1, 1));
        for i in 0..n {
            for ch in 0..c {
                out[[i, ch, 0, 0]] = v.slice(s![i, ch, .., ..]).sum() / scale;
            }
        }
        let needs = self.needs[x.0];
        self.push(out, Op::GlobalAvgPool { x }, needs)
    }

    pub fn scale_channels(&mut self, x: Node, gates: Node) -> Node {
        let xv = &self.vals[x.0];
        let gv = &self.vals[gates.0];
        let (n, c, h, w) = xv.dim();
        debug_assert_eq!(gv.dim(), (n, c, 1, 1));
        let mut out = xv.clone();
        for i in 0..n {
            for ch in 0..c {
                let g = gv[[i, ch, 0, 0]];
                out.slice_mut(s![i, ch, .., ..]).mapv_inplace(|v| v * g);
            }
        }
        let _ = (h, w);
        let needs = self.needs_any(&[x, gates]);
        self.push(out, Op::ScaleChannels { x, gates }, needs)
    }

    pub fn scale_samples(&mut self, x: Node, factors: &[F]) -> Node {
        let xv = &self.vals[x.0];
        debug_assert_eq!(xv.dim().0, factors.len());
        let mut out = xv.clone();
        for (i, &f) in factors.iter().enumerate() {
            out.index_axis_mut(Axis(0), i).mapv_inplace(|v| v * f);
        }
        let needs = self.needs[x.0];
        self.push(out, Op::ScaleSamples { x, factors: factors.to_vec() }, needs)
    }

    /// Centered orthonormal FFT on a (N, 2, H, W) two-channel tensor.
    pub fn fft2c(&mut self, x: Node) -> Node {
        let val = fourier_channels(&self.vals[x.0], false);
        let needs = self.needs[x.0];
        self.push(val, Op::Fft2c { x }, needs)
    }

    pub fn ifft2c(&mut self, x: Node) -> Node {
        let val = fourier_channels(&self.vals[x.0], true);
        let needs = self.needs[x.0];
        self.push(val, Op::Ifft2c { x }, needs)
    }

    /// Data consistency against constant measurements `k_u`, with one mask
    /// plane per sample.
    pub fn data_consistency(&mut self, x: Node, k_u: Array4<F>, mask: Array3<F>, lambda: F) -> Node {
        let xv = &self.vals[x.0];
        let (n, c, h, w) = xv.dim();
        debug_assert_eq!((n, h, w), mask.dim());
        let plane = h * w;
        let mut out = xv.clone();
        {
            let out_s = out.as_slice_mut().expect("row-major");
            let ku_s = k_u.as_slice().expect("row-major");
            let m_s = mask.as_slice().expect("row-major");
            let denom = lambda + F::one();
            for i in 0..n {
                let mp = &m_s[i * plane..(i + 1) * plane];
                for ch in 0..c {
                    let off = (i * c + ch) * plane;
                    let o = &mut out_s[off..off + plane];
                    let ku = &ku_s[off..off + plane];
                    if lambda == F::zero() {
                        for ((ov, &kv), &mv) in o.iter_mut().zip(ku).zip(mp) {
                            if mv == F::one() {
                                *ov = kv;
                            }
                        }
                    } else {
                        for ((ov, &kv), &mv) in o.iter_mut().zip(ku).zip(mp) {
                            if mv == F::one() {
                                *ov = (*ov * lambda + kv) / denom;
                            }
                        }
                    }
                }
            }
        }
        let needs = self.needs[x.0];
        self.push(out, Op::DataConsistency { x, mask, lambda }, needs)
    }

    /// Mean of squared differences against a constant target, over all
    /// elements and samples.
    pub fn mse(&mut self, x: Node, target: Array4<F>) -> Node {
        let xv = &self.vals[x.0];
        debug_assert_eq!(xv.dim(), target.dim());
        let numel = F::from_usize(xv.len()).unwrap();
        let sum = xv
            .iter()
            .zip(target.iter())
            .fold(F::zero(), |acc, (a, t)| acc + (*a - *t) * (*a - *t));
        let val = Array4::from_elem((1, 1, 1, 1), sum / numel);
        let needs = self.needs[x.0];
        self.push(val, Op::Mse { x, target }, needs)
    }

    /// Weighted sum of scalar nodes.
    pub fn sum_scalars(&mut self, terms: &[(Node, F)]) -> Node {
        let total = terms
            .iter()
            .fold(F::zero(), |acc, (n, w)| acc + self.scalar(*n) * *w);
        let val = Array4::from_elem((1, 1, 1, 1), total);
        let needs = self.needs_any(&terms.iter().map(|(n, _)| *n).collect::<Vec<_>>());
        self.push(val, Op::SumScalars { terms: terms.to_vec() }, needs)
    }

    /// Reverse pass from a scalar root. Returns per-node gradients for every
    /// node that participates in the root's history and needs gradients.
    pub fn backward(&self, root: Node) -> Result<Vec<Option<Array4<F>>>> {
        if self.vals[root.0].len() != 1 {
            return Err(Error::validation("backward root must be a scalar"));
        }
        let mut grads: Vec<Option<Array4<F>>> = vec![None; self.vals.len()];
        grads[root.0] = Some(Array4::from_elem((1, 1, 1, 1), F::one()));
        for idx in (0..=root.0).rev() {
            if !self.needs[idx] {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.backprop_op(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(grads)
    }

    fn accumulate(grads: &mut [Option<Array4<F>>], node: Node, delta: Array4<F>) {
        match &mut grads[node.0] {
            Some(g) => *g += &delta,
            slot @ None => *slot = Some(delta),
        }
    }

    fn backprop_op(&self, idx: usize, g: &Array4<F>, grads: &mut Vec<Option<Array4<F>>>) {
        match &self.ops[idx] {
            Op::Leaf => {}
            Op::Conv2d { x, w, b, dilation } => {
                let (gx, gw, gb) = conv::conv2d_backward(
                    &self.vals[x.0],
                    &self.vals[w.0],
                    g,
                    *dilation,
                    self.needs[x.0],
                );
                if self.needs[x.0] {
                    Self::accumulate(grads, *x, gx.expect("requested input grad"));
                }
                if self.needs[w.0] {
                    Self::accumulate(grads, *w, gw);
                }
                if self.needs[b.0] {
                    Self::accumulate(grads, *b, gb);
                }
            }
            Op::LeakyRelu { x, slope } => {
                if self.needs[x.0] {
                    let xv = &self.vals[x.0];
                    let mut gx = g.clone();
                    gx.zip_mut_with(xv, |gv, &v| {
                        if v <= F::zero() {
                            *gv = *gv * *slope;
                        }
                    });
                    Self::accumulate(grads, *x, gx);
                }
            }
            Op::Sigmoid { x } => {
                if self.needs[x.0] {
                    let y = &self.vals[idx];
                    let mut gx = g.clone();
                    gx.zip_mut_with(y, |gv, &s| *gv = *gv * s * (F::one() - s));
                    Self::accumulate(grads, *x, gx);
                }
            }
            Op::Concat { xs } => {
                let mut offset = 0;
                for n in xs {
                    let c = self.vals[n.0].dim().1;
                    if self.needs[n.0] {
                        let part = g.slice(s![.., offset..offset + c, .., ..]).to_owned();
                        Self::accumulate(grads, *n, part);
                    }
                    offset += c;
                }
            }
            Op::Add { a, b } => {
                if self.needs[a.0] {
                    Self::accumulate(grads, *a, g.clone());
                }
                if self.needs[b.0] {
                    Self::accumulate(grads, *b, g.clone());
                }
            }
            Op::GlobalAvgPool { x } => {
                if self.needs[x.0] {
                    let (n, c, h, w) = self.vals[x.0].dim();
                    let scale = F::one() / F::from_usize(h * w).unwrap();
                    let mut gx = Array4::zeros((n, c, h, w));
                    for i in 0..n {
                        for ch in 0..c {
                            let v = g[[i, ch, 0, 0]] * scale;
                            gx.slice_mut(s![i, ch, .., ..]).fill(v);
                        }
                    }
                    Self::accumulate(grads, *x, gx);
                }
            }
            Op::ScaleChannels { x, gates } => {
                let xv = &self.vals[x.0];
                let gv = &self.vals[gates.0];
                let (n, c, _, _) = xv.dim();
                if self.needs[x.0] {
                    let mut gx = g.clone();
                    for i in 0..n {
                        for ch in 0..c {
                            let s_ = gv[[i, ch, 0, 0]];
                            gx.slice_mut(s![i, ch, .., ..]).mapv_inplace(|v| v * s_);
                        }
                    }
                    Self::accumulate(grads, *x, gx);
                }
                if self.needs[gates.0] {
                    let mut gg = Array4::zeros((n, c, 1, 1));
                    for i in 0..n {
                        for ch in 0..c {
                            let dot = g
                                .slice(s![i, ch, .., ..])
                                .iter()
                                .zip(xv.slice(s![i, ch, .., ..]).iter())
                                .fold(F::zero(), |acc, (a, b)| acc + *a * *b);
                            gg[[i, ch, 0, 0]] = dot;
                        }
                    }
                    Self::accumulate(grads, *gates, gg);
                }
            }
            Op::ScaleSamples { x, factors } => {
                if self.needs[x.0] {
                    let mut gx = g.clone();
                    for (i, &f) in factors.iter().enumerate() {
                        gx.index_axis_mut(Axis(0), i).mapv_inplace(|v| v * f);
                    }
                    Self::accumulate(grads, *x, gx);
                }
            }
            // The centered orthonormal transform is unitary, so the adjoint of
            // the forward map is the inverse map applied to the gradient.
            Op::Fft2c { x } => {
                if self.needs[x.0] {
                    Self::accumulate(grads, *x, fourier_channels(g, true));
                }
            }
            Op::Ifft2c { x } => {
                if self.needs[x.0] {
                    Self::accumulate(grads, *x, fourier_channels(g, false));
                }
            }
            Op::DataConsistency { x, mask, lambda } => {
                if self.needs[x.0] {
                    let factor = if *lambda == F::zero() {
                        F::zero()
                    } else {
                        *lambda / (*lambda + F::one())
                    };
                    let (n, c, h, w) = g.dim();
                    let plane = h * w;
                    let mut gx = g.clone();
                    {
                        let gx_s = gx.as_slice_mut().expect("row-major");
                        let m_s = mask.as_slice().expect("row-major");
                        for i in 0..n {
                            let mp = &m_s[i * plane..(i + 1) * plane];
                            for ch in 0..c {
                                let off = (i * c + ch) * plane;
                                for (gv, &mv) in gx_s[off..off + plane].iter_mut().zip(mp) {
                                    if mv == F::one() {
                                        *gv = *gv * factor;
                                    }
                                }
                            }
                        }
                    }
                    Self::accumulate(grads, *x, gx);
                }
            }
            Op::Mse { x, target } => {
                if self.needs[x.0] {
                    let xv = &self.vals[x.0];
                    let numel = F::from_usize(xv.len()).unwrap();
                    let gscalar = g[[0, 0, 0, 0]];
                    let two = F::from_f64(2.0).unwrap();
                    let mut gx = xv - target;
                    gx.mapv_inplace(|v| v * two / numel * gscalar);
                    Self::accumulate(grads, *x, gx);
                }
            }
            Op::SumScalars { terms } => {
                let gscalar = g[[0, 0, 0, 0]];
                for (n, w) in terms {
                    if self.needs[n.0] {
                        Self::accumulate(
                            grads,
                            *n,
                            Array4::from_elem((1, 1, 1, 1), gscalar * *w),
                        );
                    }
                }
            }
        }
    }
}

/// Apply the centered orthonormal (i)FFT to each sample of a (N, 2, H, W)
/// two-channel tensor.
fn fourier_channels<F: Real>(x: &Array4<F>, inverse: bool) -> Array4<F> {
    let (n, c, h, w) = x.dim();
    debug_assert_eq!(c, 2, "fourier ops expect two-channel tensors");
    let mut out = Array4::zeros((n, 2, h, w));
    for i in 0..n {
        let cx = Array2::from_shape_fn((h, w), |(y, z)| {
            Complex::new(x[[i, 0, y, z]], x[[i, 1, y, z]])
        });
        let k = if inverse { ifft2c_array(&cx) } else { fft2c_array(&cx) };
        for ((y, z), v) in k.indexed_iter() {
            out[[i, 0, y, z]] = v.re;
            out[[i, 1, y, z]] = v.im;
        }
    }
    out
}

#[cfg(test)]
mod tests;
