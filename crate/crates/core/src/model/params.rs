//! Named parameter tensors, initialization, and checkpoint I/O.
//!
//! Checkpoints are a directory with one `.dar` file per parameter (stored
//! flat; the manifest carries the logical shape) plus `params.manifest.txt`
//! and the model configuration as `config.txt`.

use std::collections::HashMap;
use std::path::Path;

use ndarray::Array4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::dar::{load_array, save_array, DarArray};
use crate::error::{Error, Result};
use crate::Real;

use super::ModelConfig;

pub const MANIFEST_FILE: &str = "params.manifest.txt";
pub const CONFIG_FILE: &str = "config.txt";

/// Ordered, named parameter tensors. Order is fixed by construction so
/// optimizer state can align by index.
#[derive(Clone, Debug)]
pub struct ParamSet<F> {
    names: Vec<String>,
    values: Vec<Array4<F>>,
    index: HashMap<String, usize>,
}

impl<F: Real> Default for ParamSet<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Real> ParamSet<F> {
    pub fn new() -> Self {
        Self { names: Vec::new(), values: Vec::new(), index: HashMap::new() }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Array4<F>) {
        let name = name.into();
        debug_assert!(!self.index.contains_key(&name), "duplicate param {name}");
        self.index.insert(name.clone(), self.values.len());
        self.names.push(name);
        self.values.push(value);
    }

    pub fn get(&self, name: &str) -> Option<&Array4<F>> {
        self.index.get(name).map(|&i| &self.values[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Array4<F>> {
        self.index.get(name).map(|&i| &mut self.values[i])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Array4<F>)> {
        self.names.iter().map(|n| n.as_str()).zip(self.values.iter())
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[Array4<F>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Array4<F>] {
        &mut self.values
    }

    /// Total scalar parameter count.
    pub fn count_parameters(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    pub fn cast<G: Real>(&self) -> ParamSet<G> {
        let mut out = ParamSet::new();
        for (name, v) in self.iter() {
            out.insert(name, v.mapv(|x| G::from_f64(x.to_f64().unwrap()).unwrap()));
        }
        out
    }

    /// Write one flat `.dar` per parameter plus a manifest of
    /// name / logical shape / file / content hash.
    pub fn save_checkpoint(&self, dir: impl AsRef<Path>, cfg: &ModelConfig) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let mut manifest = String::new();
        for (i, (name, value)) in self.iter().enumerate() {
            let file = format!("p{i:04}.dar");
            let flat: Vec<f64> = value.iter().map(|v| v.to_f64().unwrap()).collect();
            let arr = if F::is_f32() {
                DarArray::F32(
                    ndarray::Array1::from_vec(flat.iter().map(|&v| v as f32).collect()).into_dyn(),
                )
            } else {
                DarArray::F64(ndarray::Array1::from_vec(flat).into_dyn())
            };
            let path = dir.join(&file);
            save_array(&path, &arr)?;
            let digest = Sha256::digest(std::fs::read(&path)?);
            let shape = value
                .shape()
                .iter()
                .map(|d| d.to_string())
                .collect::<Vec<_>>()
                .join(",");
            manifest.push_str(&format!("{name}\t{shape}\t{file}\t{digest:x}\n"));
        }
        std::fs::write(dir.join(MANIFEST_FILE), manifest)?;
        std::fs::write(dir.join(CONFIG_FILE), cfg.to_kv())?;
        Ok(())
    }

    pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<(Self, ModelConfig)> {
        let dir = dir.as_ref();
        let manifest = std::fs::read_to_string(dir.join(MANIFEST_FILE))?;
        let cfg = ModelConfig::from_kv(&std::fs::read_to_string(dir.join(CONFIG_FILE))?)?;
        let mut params = ParamSet::new();
        for (lineno, line) in manifest.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split('\t').collect();
            if parts.len() != 4 {
                return Err(Error::format(format!(
                    "manifest line {}: expected 4 tab-separated fields",
                    lineno + 1
                )));
            }
            let shape: Vec<usize> = parts[1]
                .split(',')
                .map(|p| p.parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::format(format!("manifest shape: {e}")))?;
            if shape.len() != 4 {
                return Err(Error::format("parameter shapes must have 4 dims"));
            }
            let path = dir.join(parts[2]);
            let digest = Sha256::digest(std::fs::read(&path)?);
            if format!("{digest:x}") != parts[3] {
                return Err(Error::format(format!(
                    "checkpoint file {} does not match its manifest hash",
                    parts[2]
                )));
            }
            let flat: Vec<f64> = match load_array(&path)? {
                DarArray::F32(a) => a.iter().map(|&v| v as f64).collect(),
                DarArray::F64(a) => a.iter().copied().collect(),
                _ => return Err(Error::format("parameter files must be real-valued")),
            };
            let numel: usize = shape.iter().product();
            if flat.len() != numel {
                return Err(Error::format(format!(
                    "parameter {} has {} values, expected {}",
                    parts[0],
                    flat.len(),
                    numel
                )));
            }
            let arr = Array4::from_shape_vec(
                (shape[0], shape[1], shape[2], shape[3]),
                flat.iter().map(|&v| F::from_f64(v).unwrap()).collect(),
            )
            .map_err(|e| Error::format(e.to_string()))?;
            params.insert(parts[0], arr);
        }
        if params.is_empty() {
            return Err(Error::format("checkpoint manifest lists no parameters"));
        }
        Ok((params, cfg))
    }
}

fn he_normal<F: Real>(rng: &mut ChaCha8Rng, shape: (usize, usize, usize, usize)) -> Array4<F> {
    let fan_in = (shape.1 * shape.2 * shape.3) as f64;
    let std = (2.0 / fan_in).sqrt();
    Array4::from_shape_fn(shape, |_| {
        // Box-Muller from two uniforms
        let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = rng.gen_range(0.0..1.0);
        let z = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
        F::from_f64(z * std).unwrap()
    })
}

struct LayerSpec {
    name: String,
    c_out: usize,
    c_in: usize,
    kernel: usize,
}

fn drd_layer_specs(prefix: &str, cfg: &ModelConfig) -> Vec<LayerSpec> {
    let g0 = cfg.base_channels;
    let g = cfg.growth_channels;
    let cin = cfg.input_channels();
    let mut specs = vec![
        LayerSpec { name: format!("{prefix}.ife1"), c_out: g0, c_in: cin, kernel: 3 },
        LayerSpec { name: format!("{prefix}.ife2"), c_out: g0, c_in: g0, kernel: 3 },
    ];
    for b in 0..cfg.n_sdrdb {
        for t in 0..4 {
            specs.push(LayerSpec {
                name: format!("{prefix}.sdrdb{b}.conv{t}"),
                c_out: g,
                c_in: g0 + t * g,
                kernel: 3,
            });
        }
        specs.push(LayerSpec {
            name: format!("{prefix}.sdrdb{b}.lff"),
            c_out: g0,
            c_in: g0 + 4 * g,
            kernel: 1,
        });
        specs.push(LayerSpec {
            name: format!("{prefix}.sdrdb{b}.se1"),
            c_out: g0 / cfg.se_reduction,
            c_in: g0,
            kernel: 1,
        });
        specs.push(LayerSpec {
            name: format!("{prefix}.sdrdb{b}.se2"),
            c_out: g0,
            c_in: g0 / cfg.se_reduction,
            kernel: 1,
        });
    }
    specs.push(LayerSpec {
        name: format!("{prefix}.gff1"),
        c_out: g0,
        c_in: cfg.n_sdrdb * g0,
        kernel: 1,
    });
    specs.push(LayerSpec { name: format!("{prefix}.gff2"), c_out: g0, c_in: g0, kernel: 3 });
    specs.push(LayerSpec { name: format!("{prefix}.final"), c_out: 2, c_in: g0, kernel: 3 });
    specs
}

/// Prefixes of the distinct restoration networks in a model.
pub fn network_prefixes(cfg: &ModelConfig) -> Vec<String> {
    let mut domains = vec!["idrd".to_string()];
    if cfg.use_dual_domain {
        domains.push("kdrd".to_string());
    }
    if cfg.share_weights {
        domains
    } else {
        (0..cfg.n_rec)
            .flat_map(|b| domains.iter().map(move |d| format!("block{b}.{d}")))
            .collect()
    }
}

/// Initialize all parameters. Weights are He-normal; biases start at zero.
/// With `zero_final` the output convolution of every network starts at zero,
/// so the initial reconstruction equals the data-consistency pass-through.
pub fn init_params<F: Real>(cfg: &ModelConfig, seed: u64, zero_final: bool) -> Result<ParamSet<F>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamSet::new();
    for prefix in network_prefixes(cfg) {
        for spec in drd_layer_specs(&prefix, cfg) {
            let shape = (spec.c_out, spec.c_in, spec.kernel, spec.kernel);
            let is_final = spec.name.ends_with(".final");
            let w = if is_final && zero_final {
                Array4::zeros(shape)
            } else {
                he_normal(&mut rng, shape)
            };
            params.insert(format!("{}.w", spec.name), w);
            params.insert(format!("{}.b", spec.name), Array4::zeros((1, spec.c_out, 1, 1)));
        }
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn init_is_deterministic() {
        let cfg = ModelConfig::toy();
        let a: ParamSet<f32> = init_params(&cfg, 7, true).unwrap();
        let b: ParamSet<f32> = init_params(&cfg, 7, true).unwrap();
        assert_eq!(a.names(), b.names());
        for (x, y) in a.values().iter().zip(b.values()) {
            assert_eq!(x, y);
        }
        let c: ParamSet<f32> = init_params(&cfg, 8, true).unwrap();
        assert!(a.values().iter().zip(c.values()).any(|(x, y)| x != y));
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let cfg = ModelConfig::toy();
        let params: ParamSet<f32> = init_params(&cfg, 3, false).unwrap();
        let dir = tempdir().unwrap();
        params.save_checkpoint(dir.path(), &cfg).unwrap();
        let (back, cfg2) = ParamSet::<f32>::load_checkpoint(dir.path()).unwrap();
        assert_eq!(cfg, cfg2);
        assert_eq!(params.names(), back.names());
        for (a, b) in params.values().iter().zip(back.values()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn corrupted_checkpoint_is_rejected() {
        let cfg = ModelConfig::toy();
        let params: ParamSet<f32> = init_params(&cfg, 3, false).unwrap();
        let dir = tempdir().unwrap();
        params.save_checkpoint(dir.path(), &cfg).unwrap();
        // flip one payload byte in the first parameter file
        let p = dir.path().join("p0000.dar");
        let mut bytes = std::fs::read(&p).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 0xff;
        std::fs::write(&p, bytes).unwrap();
        assert!(ParamSet::<f32>::load_checkpoint(dir.path()).is_err());
    }
}
