//! Dual-domain recurrent MRI reconstruction at desk scale.
//!
//! Given undersampled k-space of a long-protocol scan plus a fully sampled
//! short-protocol prior image, the model alternates learned restoration in the
//! image domain and the k-space domain, with data-consistency layers
//! interleaved, and recovers the fully sampled image. The crate also ships the
//! surrounding tooling: undersampling mask generators, a paired-contrast
//! phantom generator, a training loop, and PSNR/SSIM/MSE evaluation.

pub mod autodiff;
pub mod dar;
pub mod error;
pub mod evaluation;
pub mod field;
pub mod model;
pub mod phantom;
pub mod sampling;
pub mod training;
pub mod transforms;

pub use error::{Error, Result};
pub use field::{channels_to_complex, complex_to_channels, ComplexField, Domain};
pub use sampling::{Pattern, SamplingMask};

/// Default fully sampled center band for Cartesian masks, as a fraction of H.
pub const DEFAULT_CENTER_FRACTION: f64 = 0.08;

/// Floating-point element type of fields and tensors. `f32` is the training
/// width, `f64` the oracle/gradient-check width.
pub trait Real:
    ndarray::NdFloat
    + rustfft::FftNum
    + num_traits::FromPrimitive
    + num_traits::Float
    + Send
    + Sync
{
    /// Whether this is the 32-bit width (used to pick file dtypes).
    fn is_f32() -> bool;
}

impl Real for f32 {
    fn is_f32() -> bool {
        true
    }
}

impl Real for f64 {
    fn is_f32() -> bool {
        false
    }
}
