//! Graph builders for the restoration networks and the recurrent
//! dual-domain assembly.

use std::collections::HashMap;

use ndarray::{Array2, Array3, Array4};
use num_complex::Complex;

use crate::autodiff::{Graph, Node};
use crate::error::{Error, Result};
use crate::field::{ComplexField, Domain};
use crate::sampling::SamplingMask;
use crate::transforms::{fft2c_array, ifft2c_array};
use crate::Real;

use super::{ModelConfig, ParamSet};

/// Slope of the leaky rectifier inside the dense blocks.
pub const LEAKY_SLOPE: f64 = 0.2;

const K_SCALE_FLOOR: f64 = 1e-8;

/// Parameter leaves bound into a graph, looked up by name.
pub struct BoundParams {
    nodes: HashMap<String, Node>,
}

impl BoundParams {
    /// Insert every parameter as a graph leaf.
    pub fn bind<F: Real>(g: &mut Graph<F>, params: &ParamSet<F>, trainable: bool) -> Self {
        let mut nodes = HashMap::new();
        for (name, value) in params.iter() {
            nodes.insert(name.to_string(), g.leaf(value.clone(), trainable));
        }
        Self { nodes }
    }

    /// Wrap an existing name -> node mapping (used by gradient checks that
    /// need to treat parameters as ordinary inputs).
    pub fn from_nodes(nodes: HashMap<String, Node>) -> Self {
        Self { nodes }
    }

    pub fn node(&self, name: &str) -> Node {
        *self
            .nodes
            .get(name)
            .unwrap_or_else(|| panic!("parameter {name} not bound"))
    }

    /// Map parameter order to gradients produced by a backward pass.
    pub fn collect_grads<F: Real>(
        &self,
        params: &ParamSet<F>,
        grads: &[Option<Array4<F>>],
    ) -> Vec<Array4<F>> {
        params
            .iter()
            .map(|(name, value)| {
                grads[self.node(name).0]
                    .clone()
                    .unwrap_or_else(|| Array4::zeros(value.dim()))
            })
            .collect()
    }
}

fn conv<F: Real>(g: &mut Graph<F>, bound: &BoundParams, layer: &str, x: Node, dilation: usize) -> Node {
    g.conv2d(x, bound.node(&format!("{layer}.w")), bound.node(&format!("{layer}.b")), dilation)
}

/// One squeeze-and-excitation dilated dense block on a (N, G0, H, W) tensor.
pub fn sdrdb_forward<F: Real>(
    g: &mut Graph<F>,
    bound: &BoundParams,
    prefix: &str,
    f_in: Node,
    cfg: &ModelConfig,
) -> Node {
    let slope = F::from_f64(LEAKY_SLOPE).unwrap();
    let dilations = cfg.effective_dilations();
    let mut feats = vec![f_in];
    for (t, &d) in dilations.iter().enumerate() {
        let x = if feats.len() == 1 { feats[0] } else { g.concat(&feats) };
        let y = conv(g, bound, &format!("{prefix}.conv{t}"), x, d);
        let y = g.leaky_relu(y, slope);
        feats.push(y);
    }
    let fused = g.concat(&feats);
    let lff = conv(g, bound, &format!("{prefix}.lff"), fused, 1);
    // channel gating: pool -> bottleneck -> gate in (0, 1)
    let pooled = g.global_avg_pool(lff);
    let z = conv(g, bound, &format!("{prefix}.se1"), pooled, 1);
    let z = g.relu(z);
    let z = conv(g, bound, &format!("{prefix}.se2"), z, 1);
    let gates = g.sigmoid(z);
    let gated = g.scale_channels(lff, gates);
    g.add(gated, f_in)
}

/// One restoration network on a (N, 2(1+prior), H, W) input, producing a
/// two-channel field.
pub fn drdnet_forward<F: Real>(
    g: &mut Graph<F>,
    bound: &BoundParams,
    prefix: &str,
    input: Node,
    cfg: &ModelConfig,
) -> Node {
    let f_m1 = conv(g, bound, &format!("{prefix}.ife1"), input, 1);
    let f_m1 = g.relu(f_m1);
    let f0 = conv(g, bound, &format!("{prefix}.ife2"), f_m1, 1);
    let f0 = g.relu(f0);
    let mut f = f0;
    let mut locals = Vec::with_capacity(cfg.n_sdrdb);
    for b in 0..cfg.n_sdrdb {
        f = sdrdb_forward(g, bound, &format!("{prefix}.sdrdb{b}"), f, cfg);
        locals.push(f);
    }
    let fused = if locals.len() == 1 { locals[0] } else { g.concat(&locals) };
    let gf = conv(g, bound, &format!("{prefix}.gff1"), fused, 1);
    let gf = g.relu(gf);
    let gf = conv(g, bound, &format!("{prefix}.gff2"), gf, 1);
    let gf = g.relu(gf);
    let merged = g.add(gf, f_m1);
    conv(g, bound, &format!("{prefix}.final"), merged, 1)
}

/// Batched inputs to the recurrent model, all in two-channel layout.
#[derive(Clone, Debug)]
pub struct BatchInputs<F> {
    /// Zero-filled reconstruction (N, 2, H, W).
    pub x_u: Array4<F>,
    /// Undersampled k-space (N, 2, H, W).
    pub k_u: Array4<F>,
    /// Per-sample mask planes (N, H, W) with entries 0/1.
    pub mask: Array3<F>,
    /// Prior image channels, present iff the model uses the prior.
    pub x_prior: Option<Array4<F>>,
    /// Prior k-space, normalized by its own peak magnitude.
    pub k_prior: Option<Array4<F>>,
    /// Per-sample peak magnitude of `k_u`; the k-space networks run on
    /// k / scale and are rescaled before data consistency.
    pub k_scale: Vec<F>,
}

fn complex_plane_to_channels<F: Real>(out: &mut Array4<F>, i: usize, plane: &Array2<Complex<F>>) {
    for ((y, z), v) in plane.indexed_iter() {
        out[[i, 0, y, z]] = v.re;
        out[[i, 1, y, z]] = v.im;
    }
}

impl<F: Real> BatchInputs<F> {
    /// Assemble a batch from per-sample undersampled k-space and priors.
    /// `k_u` entries must already be zero at unsampled locations.
    pub fn new(
        k_u_fields: &[ComplexField<F>],
        masks: &[&SamplingMask],
        priors: Option<&[ComplexField<F>]>,
    ) -> Result<Self> {
        let n = k_u_fields.len();
        if n == 0 || masks.len() != n {
            return Err(Error::validation("batch needs matching k_u and mask lists"));
        }
        if let Some(p) = priors {
            if p.len() != n {
                return Err(Error::validation("prior list length mismatch"));
            }
        }
        let (h, w) = k_u_fields[0].shape();
        let mut k_u = Array4::zeros((n, 2, h, w));
        let mut x_u = Array4::zeros((n, 2, h, w));
        let mut mask = Array3::zeros((n, h, w));
        let mut k_scale = Vec::with_capacity(n);
        let mut x_prior = priors.map(|_| Array4::zeros((n, 2, h, w)));
        let mut k_prior = priors.map(|_| Array4::zeros((n, 2, h, w)));
        for i in 0..n {
            let kf = &k_u_fields[i];
            if kf.shape() != (h, w) || masks[i].shape() != (h, w) {
                return Err(Error::validation("all samples in a batch must share H x W"));
            }
            if kf.domain() != Domain::Kspace {
                return Err(Error::validation("k_u fields must be k-space"));
            }
            complex_plane_to_channels(&mut k_u, i, kf.data());
            complex_plane_to_channels(&mut x_u, i, &ifft2c_array(kf.data()));
            for ((y, z), &m) in masks[i].mask().indexed_iter() {
                mask[[i, y, z]] = F::from_u8(m).unwrap();
            }
            k_scale.push(kf.max_magnitude().max(F::from_f64(K_SCALE_FLOOR).unwrap()));
            if let Some(p) = priors {
                let xp = &p[i];
                if xp.shape() != (h, w) || xp.domain() != Domain::Image {
                    return Err(Error::validation("priors must be image-domain with matching shape"));
                }
                complex_plane_to_channels(x_prior.as_mut().unwrap(), i, xp.data());
                let kp = fft2c_array(xp.data());
                let peak = kp
                    .iter()
                    .fold(F::zero(), |m, c| m.max(c.norm()))
                    .max(F::from_f64(K_SCALE_FLOOR).unwrap());
                let kp_norm = kp.mapv(|c| c / peak);
                complex_plane_to_channels(k_prior.as_mut().unwrap(), i, &kp_norm);
            }
        }
        Ok(Self { x_u, k_u, mask, x_prior, k_prior, k_scale })
    }

    pub fn batch_len(&self) -> usize {
        self.k_scale.len()
    }
}

/// Graph nodes produced by one recurrent forward pass.
pub struct ForwardNodes {
    /// Image restorations per block, before data consistency.
    pub x_blocks: Vec<Node>,
    /// K-space outputs per block, after the block's last data consistency.
    pub k_blocks: Vec<Node>,
    /// Final reconstruction, the inverse transform of the last k output.
    pub x_final: Node,
}

fn prefixes_for_block(cfg: &ModelConfig, block: usize) -> (String, String) {
    if cfg.share_weights {
        ("idrd".into(), "kdrd".into())
    } else {
        (format!("block{block}.idrd"), format!("block{block}.kdrd"))
    }
}

/// Build the full recurrent dual-domain forward pass.
pub fn build_forward<F: Real>(
    g: &mut Graph<F>,
    bound: &BoundParams,
    cfg: &ModelConfig,
    inputs: &BatchInputs<F>,
) -> Result<ForwardNodes> {
    cfg.validate()?;
    if cfg.use_prior && (inputs.x_prior.is_none() || inputs.k_prior.is_none()) {
        return Err(Error::config("model uses the prior but the batch carries none"));
    }
    let lambda = F::from_f64(cfg.lambda_dc).unwrap();
    let n = inputs.batch_len();
    let inv_scale: Vec<F> = inputs.k_scale.iter().map(|&s| F::one() / s).collect();
    let scale: Vec<F> = inputs.k_scale.clone();

    let x_prior_leaf = inputs.x_prior.as_ref().map(|p| g.leaf(p.clone(), false));
    let k_prior_leaf = inputs.k_prior.as_ref().map(|p| g.leaf(p.clone(), false));
    let mut x = g.leaf(inputs.x_u.clone(), false);

    let mut x_blocks = Vec::with_capacity(cfg.n_rec);
    let mut k_blocks = Vec::with_capacity(cfg.n_rec);
    debug_assert_eq!(inputs.mask.dim().0, n);
    for block in 0..cfg.n_rec {
        let (ipfx, kpfx) = prefixes_for_block(cfg, block);
        let inp = match x_prior_leaf {
            Some(p) => g.concat(&[x, p]),
            None => x,
        };
        let x_hat = drdnet_forward(g, bound, &ipfx, inp, cfg);
        x_blocks.push(x_hat);
        let k_pred = g.fft2c(x_hat);
        let k_dc = g.data_consistency(k_pred, inputs.k_u.clone(), inputs.mask.clone(), lambda);
        let k_out = if cfg.use_dual_domain {
            let kn = g.scale_samples(k_dc, &inv_scale);
            let kin = match k_prior_leaf {
                Some(p) => g.concat(&[kn, p]),
                None => kn,
            };
            let k_hat = drdnet_forward(g, bound, &kpfx, kin, cfg);
            let k_hat = g.scale_samples(k_hat, &scale);
            g.data_consistency(k_hat, inputs.k_u.clone(), inputs.mask.clone(), lambda)
        } else {
            k_dc
        };
        k_blocks.push(k_out);
        x = g.ifft2c(k_out);
    }
    Ok(ForwardNodes { x_blocks, k_blocks, x_final: x })
}

/// Per-block outputs of a single-sample forward pass.
#[derive(Debug)]
pub struct BlockOutputs<F> {
    pub x_blocks: Vec<ComplexField<F>>,
    pub k_blocks: Vec<ComplexField<F>>,
    pub x_final: ComplexField<F>,
}

fn channels_to_plane<F: Real>(t: &Array4<F>, i: usize) -> Array2<Complex<F>> {
    let (_, _, h, w) = t.dim();
    Array2::from_shape_fn((h, w), |(y, z)| Complex::new(t[[i, 0, y, z]], t[[i, 1, y, z]]))
}

/// Run the recurrent model on one sample. `x_prior` must be present iff the
/// configuration uses the prior.
pub fn dudornet_forward<F: Real>(
    k_u: &ComplexField<F>,
    mask: &SamplingMask,
    x_prior: Option<&ComplexField<F>>,
    cfg: &ModelConfig,
    params: &ParamSet<F>,
) -> Result<BlockOutputs<F>> {
    match (cfg.use_prior, x_prior) {
        (true, None) => return Err(Error::config("configuration uses the prior but none was given")),
        (false, Some(_)) => return Err(Error::config("prior given but configuration ignores it")),
        _ => {}
    }
    let priors: Option<Vec<ComplexField<F>>> = x_prior.map(|p| vec![p.clone()]);
    let inputs = BatchInputs::new(&[k_u.clone()], &[mask], priors.as_deref())?;
    let scale = inputs.k_scale[0];
    let mut g = Graph::new();
    let bound = BoundParams::bind(&mut g, params, false);
    let nodes = build_forward(&mut g, &bound, cfg, &inputs)?;
    let to_field = |node: Node, domain: Domain, ns: F| -> Result<ComplexField<F>> {
        ComplexField::with_norm_scale(channels_to_plane(g.value(node), 0), domain, ns)
    };
    let one = F::one();
    let outputs = BlockOutputs {
        x_blocks: nodes
            .x_blocks
            .iter()
            .map(|&n| to_field(n, Domain::Image, one))
            .collect::<Result<_>>()?,
        k_blocks: nodes
            .k_blocks
            .iter()
            .map(|&n| to_field(n, Domain::Kspace, scale))
            .collect::<Result<_>>()?,
        x_final: to_field(nodes.x_final, Domain::Image, one)?,
    };
    debug_assert_eq!(outputs.x_blocks.len(), cfg.n_rec);
    Ok(outputs)
}

/// Per-layer receptive field R = K + (K-1)(D-1), composed over layers as
/// R_total = R_total + R_layer - 1.
pub fn receptive_field(kernel: usize, dilations: &[usize]) -> usize {
    assert!(kernel >= 1 && kernel % 2 == 1, "kernel must be odd");
    assert!(!dilations.is_empty() && dilations.iter().all(|&d| d >= 1));
    let mut total = 0;
    for (i, &d) in dilations.iter().enumerate() {
        let r = kernel + (kernel - 1) * (d - 1);
        total = if i == 0 { r } else { total + r - 1 };
    }
    total
}
