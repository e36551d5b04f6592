//! Architecture hyperparameters and their key=value text form.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    /// Number of recurrent blocks.
    pub n_rec: usize,
    /// Restoration blocks per network.
    pub n_sdrdb: usize,
    /// Feature width G0.
    pub base_channels: usize,
    /// Growth width G of each dense layer.
    pub growth_channels: usize,
    /// Dilation factors of the four dense layers (used when `use_dilation`).
    pub dilations: [usize; 4],
    /// Convolution kernel side.
    pub kernel: usize,
    /// Squeeze-and-excitation bottleneck reduction.
    pub se_reduction: usize,
    /// Data-consistency blend weight.
    pub lambda_dc: f64,
    /// Feed the short-protocol prior into both restoration networks.
    pub use_prior: bool,
    /// Run the k-space restoration half of each block.
    pub use_dual_domain: bool,
    /// Use the dilated feature pyramid (false forces dilations to 1).
    pub use_dilation: bool,
    /// Share one parameter set across recurrent blocks.
    pub share_weights: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n_rec: 5,
            n_sdrdb: 2,
            base_channels: 64,
            growth_channels: 32,
            dilations: [1, 2, 4, 4],
            kernel: 3,
            se_reduction: 8,
            lambda_dc: 0.01,
            use_prior: true,
            use_dual_domain: true,
            use_dilation: true,
            share_weights: true,
        }
    }
}

impl ModelConfig {
    /// A small configuration for tests and quick runs.
    pub fn toy() -> Self {
        Self {
            base_channels: 16,
            growth_channels: 8,
            n_rec: 2,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=10).contains(&self.n_rec) {
            return Err(Error::config(format!("n_rec must be in [1, 10], got {}", self.n_rec)));
        }
        if !(1..=8).contains(&self.n_sdrdb) {
            return Err(Error::config(format!("n_sdrdb must be in [1, 8], got {}", self.n_sdrdb)));
        }
        if self.kernel != 3 {
            return Err(Error::config(format!("kernel must be 3, got {}", self.kernel)));
        }
        if self.se_reduction == 0
            || self.base_channels % self.se_reduction != 0
            || self.growth_channels % self.se_reduction != 0
        {
            return Err(Error::config(format!(
                "base ({}) and growth ({}) channels must be multiples of se_reduction ({})",
                self.base_channels, self.growth_channels, self.se_reduction
            )));
        }
        if self.dilations.iter().any(|&d| d == 0) {
            return Err(Error::config("dilations must be positive"));
        }
        if !(self.lambda_dc >= 0.0) {
            return Err(Error::config(format!("lambda_dc must be >= 0, got {}", self.lambda_dc)));
        }
        Ok(())
    }

    /// Dilations actually applied: all ones when dilation is toggled off.
    pub fn effective_dilations(&self) -> [usize; 4] {
        if self.use_dilation {
            self.dilations
        } else {
            [1, 1, 1, 1]
        }
    }

    /// Input channels of each restoration network.
    pub fn input_channels(&self) -> usize {
        if self.use_prior {
            4
        } else {
            2
        }
    }

    pub fn to_kv(&self) -> String {
        let d = self.dilations;
        format!(
            "n_rec={}\nn_sdrdb={}\nbase_channels={}\ngrowth_channels={}\n\
             dilations={},{},{},{}\nkernel={}\nse_reduction={}\nlambda_dc={}\n\
             use_prior={}\nuse_dual_domain={}\nuse_dilation={}\nshare_weights={}\n",
            self.n_rec,
            self.n_sdrdb,
            self.base_channels,
            self.growth_channels,
            d[0],
            d[1],
            d[2],
            d[3],
            self.kernel,
            self.se_reduction,
            self.lambda_dc,
            self.use_prior,
            self.use_dual_domain,
            self.use_dilation,
            self.share_weights,
        )
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::format(format!("line {}: expected key=value", lineno + 1)))?;
            let value = value.trim();
            let parse_usize = |v: &str| {
                v.parse::<usize>()
                    .map_err(|e| Error::format(format!("{key}: {e}")))
            };
            let parse_bool = |v: &str| {
                v.parse::<bool>()
                    .map_err(|e| Error::format(format!("{key}: {e}")))
            };
            match key.trim() {
                "n_rec" => cfg.n_rec = parse_usize(value)?,
                "n_sdrdb" => cfg.n_sdrdb = parse_usize(value)?,
                "base_channels" => cfg.base_channels = parse_usize(value)?,
                "growth_channels" => cfg.growth_channels = parse_usize(value)?,
                "dilations" => {
                    let parts: Vec<usize> = value
                        .split(',')
                        .map(|p| p.trim().parse::<usize>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|e| Error::format(format!("dilations: {e}")))?;
                    if parts.len() != 4 {
                        return Err(Error::format("dilations must have 4 entries"));
                    }
                    cfg.dilations = [parts[0], parts[1], parts[2], parts[3]];
                }
                "kernel" => cfg.kernel = parse_usize(value)?,
                "se_reduction" => cfg.se_reduction = parse_usize(value)?,
                "lambda_dc" => {
                    cfg.lambda_dc = value
                        .parse::<f64>()
                        .map_err(|e| Error::format(format!("lambda_dc: {e}")))?
                }
                "use_prior" => cfg.use_prior = parse_bool(value)?,
                "use_dual_domain" => cfg.use_dual_domain = parse_bool(value)?,
                "use_dilation" => cfg.use_dilation = parse_bool(value)?,
                "share_weights" => cfg.share_weights = parse_bool(value)?,
                other => return Err(Error::format(format!("unknown model key '{other}'"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kv_round_trip() {
        let mut cfg = ModelConfig::toy();
        cfg.use_prior = false;
        cfg.lambda_dc = 0.25;
        let back = ModelConfig::from_kv(&cfg.to_kv()).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn validation_rejects_bad_widths() {
        let cfg = ModelConfig { base_channels: 10, ..ModelConfig::default() };
        assert!(cfg.validate().is_err());
        let cfg = ModelConfig { n_rec: 0, ..ModelConfig::default() };
        assert!(cfg.validate().is_err());
        let cfg = ModelConfig { n_rec: 11, ..ModelConfig::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn dilation_toggle_flattens() {
        let cfg = ModelConfig { use_dilation: false, ..ModelConfig::default() };
        assert_eq!(cfg.effective_dilations(), [1, 1, 1, 1]);
    }
}
