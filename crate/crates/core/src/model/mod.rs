//! The recurrent dual-domain reconstruction model.
//!
//! Each recurrent block runs an image restoration network, transforms to
//! k-space for a data-consistency pass, then (in dual-domain mode) runs a
//! k-space restoration network followed by a second data-consistency pass.
//! Blocks share parameters by default. The prior image is concatenated
//! channel-wise into both networks, in its own domain.

mod config;
mod net;
mod params;

pub use config::ModelConfig;
pub use net::{
    build_forward, drdnet_forward, dudornet_forward, receptive_field, sdrdb_forward,
    BatchInputs, BlockOutputs, BoundParams, ForwardNodes, LEAKY_SLOPE,
};
pub use params::{init_params, network_prefixes, ParamSet, CONFIG_FILE, MANIFEST_FILE};

#[cfg(test)]
mod tests;
