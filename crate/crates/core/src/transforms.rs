//! Centered orthonormal Fourier transforms and the data-consistency layer.
//!
//! `fft2c` places the zero frequency at the array center (floor(H/2),
//! floor(W/2)) and scales by 1/sqrt(H*W), so the transform is unitary:
//! round trips and Parseval hold to float precision, and image/k-space
//! magnitudes stay on comparable scales.

use ndarray::Array2;
use num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::field::{ComplexField, Domain};
use crate::sampling::SamplingMask;
use crate::Real;

/// Data-consistency blend weight.
#[derive(Clone, Copy, Debug)]
pub struct DcConfig {
    lambda: f64,
}

impl DcConfig {
    pub const DEFAULT_LAMBDA: f64 = 0.01;

    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) {
            return Err(Error::validation(format!("lambda must be >= 0, got {lambda}")));
        }
        Ok(Self { lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

impl Default for DcConfig {
    fn default() -> Self {
        Self { lambda: Self::DEFAULT_LAMBDA }
    }
}

/// Circular roll along both axes: out[i][j] = in[(i - di) mod H][(j - dj) mod W].
fn roll2<F: Real>(a: &Array2<Complex<F>>, di: usize, dj: usize) -> Array2<Complex<F>> {
    let (h, w) = a.dim();
    Array2::from_shape_fn((h, w), |(i, j)| a[[(i + h - di) % h, (j + w - dj) % w]])
}

fn fftshift2<F: Real>(a: &Array2<Complex<F>>) -> Array2<Complex<F>> {
    let (h, w) = a.dim();
    roll2(a, h / 2, w / 2)
}

fn ifftshift2<F: Real>(a: &Array2<Complex<F>>) -> Array2<Complex<F>> {
    let (h, w) = a.dim();
    roll2(a, h - h / 2, w - w / 2)
}

fn fft2_inplace<F: Real>(a: &mut Array2<Complex<F>>, inverse: bool) {
    let (h, w) = a.dim();
    let mut planner = FftPlanner::<F>::new();
    let row_fft = if inverse {
        planner.plan_fft_inverse(w)
    } else {
        planner.plan_fft_forward(w)
    };
    for mut row in a.rows_mut() {
        let slice = row.as_slice_mut().expect("row-major layout");
        row_fft.process(slice);
    }
    let col_fft = if inverse {
        planner.plan_fft_inverse(h)
    } else {
        planner.plan_fft_forward(h)
    };
    let mut scratch = vec![Complex::new(F::zero(), F::zero()); h];
    for j in 0..w {
        for i in 0..h {
            scratch[i] = a[[i, j]];
        }
        col_fft.process(&mut scratch);
        for i in 0..h {
            a[[i, j]] = scratch[i];
        }
    }
}

/// Centered orthonormal 2D FFT on a raw complex array.
pub fn fft2c_array<F: Real>(x: &Array2<Complex<F>>) -> Array2<Complex<F>> {
    let (h, w) = x.dim();
    let mut a = ifftshift2(x);
    fft2_inplace(&mut a, false);
    let scale = F::one() / F::from_f64(((h * w) as f64).sqrt()).unwrap();
    let mut out = fftshift2(&a);
    out.mapv_inplace(|c| c * scale);
    out
}

/// Centered orthonormal 2D inverse FFT on a raw complex array.
pub fn ifft2c_array<F: Real>(k: &Array2<Complex<F>>) -> Array2<Complex<F>> {
    let (h, w) = k.dim();
    let mut a = ifftshift2(k);
    fft2_inplace(&mut a, true);
    let scale = F::one() / F::from_f64(((h * w) as f64).sqrt()).unwrap();
    let mut out = fftshift2(&a);
    out.mapv_inplace(|c| c * scale);
    out
}

/// Image -> k-space.
pub fn fft2c<F: Real>(x: &ComplexField<F>) -> Result<ComplexField<F>> {
    if x.domain() != Domain::Image {
        return Err(Error::validation("fft2c expects an image-domain field"));
    }
    ComplexField::with_norm_scale(fft2c_array(x.data()), Domain::Kspace, x.norm_scale())
}

/// K-space -> image.
pub fn ifft2c<F: Real>(k: &ComplexField<F>) -> Result<ComplexField<F>> {
    if k.domain() != Domain::Kspace {
        return Err(Error::validation("ifft2c expects a k-space field"));
    }
    ComplexField::with_norm_scale(ifft2c_array(k.data()), Domain::Image, k.norm_scale())
}

fn check_mask_shape<F: Real>(k: &ComplexField<F>, mask: &SamplingMask) -> Result<()> {
    if k.shape() != mask.shape() {
        return Err(Error::validation(format!(
            "k-space {:?} and mask {:?} shapes differ",
            k.shape(),
            mask.shape()
        )));
    }
    Ok(())
}

/// Element-wise undersampling: out(z) = k(z) * M(z).
pub fn apply_mask<F: Real>(k: &ComplexField<F>, mask: &SamplingMask) -> Result<ComplexField<F>> {
    if k.domain() != Domain::Kspace {
        return Err(Error::validation("apply_mask expects a k-space field"));
    }
    check_mask_shape(k, mask)?;
    let m = mask.mask();
    let data = Array2::from_shape_fn(k.shape(), |(i, j)| {
        if m[[i, j]] == 1 {
            k.data()[[i, j]]
        } else {
            Complex::new(F::zero(), F::zero())
        }
    });
    ComplexField::with_norm_scale(data, Domain::Kspace, k.norm_scale())
}

fn check_consistent_with_mask<F: Real>(k_u: &ComplexField<F>, mask: &SamplingMask) -> Result<()> {
    let m = mask.mask();
    for ((i, j), c) in k_u.data().indexed_iter() {
        if m[[i, j]] == 0 && (c.re != F::zero() || c.im != F::zero()) {
            return Err(Error::validation(format!(
                "k_u has data at unsampled location ({i}, {j})"
            )));
        }
    }
    Ok(())
}

/// Zero-filled reconstruction: inverse transform of the undersampled k-space.
pub fn zero_fill_recon<F: Real>(k_u: &ComplexField<F>, mask: &SamplingMask) -> Result<ComplexField<F>> {
    check_mask_shape(k_u, mask)?;
    check_consistent_with_mask(k_u, mask)?;
    ifft2c(k_u)
}

/// Data-consistency layer. At sampled locations the prediction is blended
/// with the measurement, (lambda * k_pred + k_u) / (lambda + 1); elsewhere the
/// prediction passes through. With lambda = 0 the measurement directly
/// substitutes the prediction.
pub fn data_consistency<F: Real>(
    k_pred: &ComplexField<F>,
    k_u: &ComplexField<F>,
    mask: &SamplingMask,
    cfg: &DcConfig,
) -> Result<ComplexField<F>> {
    if k_pred.shape() != k_u.shape() {
        return Err(Error::validation("k_pred and k_u shapes differ"));
    }
    check_mask_shape(k_pred, mask)?;
    check_consistent_with_mask(k_u, mask)?;
    let lambda = F::from_f64(cfg.lambda()).unwrap();
    let m = mask.mask();
    let data = if cfg.lambda() == 0.0 {
        Array2::from_shape_fn(k_pred.shape(), |(i, j)| {
            if m[[i, j]] == 1 {
                k_u.data()[[i, j]]
            } else {
                k_pred.data()[[i, j]]
            }
        })
    } else {
        let denom = lambda + F::one();
        Array2::from_shape_fn(k_pred.shape(), |(i, j)| {
            if m[[i, j]] == 1 {
                (k_pred.data()[[i, j]] * lambda + k_u.data()[[i, j]]) / denom
            } else {
                k_pred.data()[[i, j]]
            }
        })
    };
    ComplexField::with_norm_scale(data, Domain::Kspace, k_pred.norm_scale())
}
