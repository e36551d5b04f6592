//! Complex-valued 2D fields and the two-channel convention used by the networks.
//!
//! A [`ComplexField`] is either an image or a k-space plane. Networks consume
//! complex data as two real channels (real, imaginary); magnitude is only used
//! for metrics and plots.

use ndarray::{Array2, Array3};
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::Real;

/// Which domain a field lives in.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Domain {
    Image,
    Kspace,
}

/// A 2D complex-valued array with domain metadata.
#[derive(Clone, Debug)]
pub struct ComplexField<F> {
    data: Array2<Complex<F>>,
    domain: Domain,
    /// Factor by which the field was normalized (1.0 when unnormalized).
    norm_scale: F,
}

impl<F: Real> ComplexField<F> {
    /// Minimum side length accepted for a field.
    pub const MIN_SIDE: usize = 8;

    pub fn new(data: Array2<Complex<F>>, domain: Domain) -> Result<Self> {
        Self::with_norm_scale(data, domain, F::one())
    }

    pub fn with_norm_scale(data: Array2<Complex<F>>, domain: Domain, norm_scale: F) -> Result<Self> {
        let (h, w) = data.dim();
        if h < Self::MIN_SIDE || w < Self::MIN_SIDE {
            return Err(Error::validation(format!(
                "field must be at least {s}x{s}, got {h}x{w}",
                s = Self::MIN_SIDE
            )));
        }
        if !data.iter().all(|c| c.re.is_finite() && c.im.is_finite()) {
            return Err(Error::validation("field contains non-finite values"));
        }
        if !(norm_scale > F::zero()) {
            return Err(Error::validation("norm_scale must be positive"));
        }
        Ok(Self { data, domain, norm_scale })
    }

    pub fn data(&self) -> &Array2<Complex<F>> {
        &self.data
    }

    pub fn into_data(self) -> Array2<Complex<F>> {
        self.data
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn norm_scale(&self) -> F {
        self.norm_scale
    }

    pub fn shape(&self) -> (usize, usize) {
        self.data.dim()
    }

    /// Magnitude image |f| as a real array.
    pub fn magnitude(&self) -> Array2<F> {
        self.data.mapv(|c| c.norm())
    }

    /// L2 norm over all entries.
    pub fn l2_norm(&self) -> F {
        self.data
            .iter()
            .fold(F::zero(), |acc, c| acc + c.norm_sqr())
            .sqrt()
    }

    /// Maximum entry magnitude.
    pub fn max_magnitude(&self) -> F {
        self.data
            .iter()
            .fold(F::zero(), |acc, c| acc.max(c.norm()))
    }
}

/// Split a complex field into a (2, H, W) real array: channel 0 = real,
/// channel 1 = imaginary.
pub fn complex_to_channels<F: Real>(field: &ComplexField<F>) -> Array3<F> {
    let (h, w) = field.shape();
    let mut out = Array3::zeros((2, h, w));
    for ((i, j), c) in field.data().indexed_iter() {
        out[[0, i, j]] = c.re;
        out[[1, i, j]] = c.im;
    }
    out
}

/// Rebuild a complex field from a (2, H, W) channel array. Inverts
/// [`complex_to_channels`] exactly.
pub fn channels_to_complex<F: Real>(channels: &Array3<F>, domain: Domain) -> Result<ComplexField<F>> {
    let shape = channels.dim();
    if shape.0 != 2 {
        return Err(Error::validation(format!(
            "expected 2 channels, got {}",
            shape.0
        )));
    }
    let (h, w) = (shape.1, shape.2);
    let data = Array2::from_shape_fn((h, w), |(i, j)| {
        Complex::new(channels[[0, i, j]], channels[[1, i, j]])
    });
    ComplexField::new(data, domain)
}
