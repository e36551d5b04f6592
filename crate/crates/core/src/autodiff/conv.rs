//! Same-padded dilated 2D convolution.
//!
//! 3x3 kernels run as direct vectorized loops over padded rows (im2col's 9x
//! memory inflation is slower than FLOP-bound direct loops on typical
//! hardware); 1x1 kernels reduce to a plain GEMM.

use ndarray::{s, Array2, Array3, Array4, ArrayView3, Axis};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::Real;

/// Shape bookkeeping for a convolution.
#[derive(Clone, Copy, Debug)]
pub struct Conv2dShape {
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub dilation: usize,
}

impl Conv2dShape {
    pub fn pad(&self) -> usize {
        self.dilation * (self.kernel - 1) / 2
    }
}

fn pad_sample<F: Real>(x: &ArrayView3<F>, pad: usize) -> Array3<F> {
    let (c, h, w) = x.dim();
    let mut out = Array3::zeros((c, h + 2 * pad, w + 2 * pad));
    out.slice_mut(s![.., pad..pad + h, pad..pad + w]).assign(x);
    out
}

/// axpy over one row: dst += a * src.
#[inline]
fn row_axpy<F: Real>(dst: &mut [F], src: &[F], a: F) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d = *d + a * *s;
    }
}

#[inline]
fn row_dot<F: Real>(a: &[F], b: &[F]) -> F {
    let mut acc = F::zero();
    for (x, y) in a.iter().zip(b) {
        acc = acc + *x * *y;
    }
    acc
}

fn conv_single<F: Real>(
    x: &ArrayView3<F>,
    w: &Array4<F>,
    bias: &Array4<F>,
    shape: Conv2dShape,
) -> Array3<F> {
    let (c_in, h, wid) = x.dim();
    debug_assert_eq!(c_in, shape.c_in);
    let (k, d) = (shape.kernel, shape.dilation);
    if k == 1 {
        let x_mat = x.to_shape((c_in, h * wid)).expect("reshape");
        let w_mat = w
            .view()
            .into_shape_with_order((shape.c_out, c_in))
            .expect("weight reshape");
        let mut out = w_mat
            .dot(&x_mat)
            .into_shape_with_order((shape.c_out, h, wid))
            .expect("reshape");
        for c in 0..shape.c_out {
            let b = bias[[0, c, 0, 0]];
            out.index_axis_mut(Axis(0), c).mapv_inplace(|v| v + b);
        }
        return out;
    }

    let xpad = pad_sample(x, shape.pad());
    let (_, hp, wp) = xpad.dim();
    let xp = xpad.as_slice().expect("row-major");
    let ws = w.as_slice().expect("row-major");
    let mut out = Array3::zeros((shape.c_out, h, wid));
    {
        let os = out.as_slice_mut().expect("row-major");
        for i in 0..h {
            for co in 0..shape.c_out {
                let dst = &mut os[(co * h + i) * wid..(co * h + i + 1) * wid];
                let b = bias[[0, co, 0, 0]];
                dst.fill(b);
                for c in 0..c_in {
                    let wbase = ((co * c_in) + c) * k * k;
                    for ky in 0..k {
                        let src_row = (c * hp + i + ky * d) * wp;
                        for kx in 0..k {
                            let a = ws[wbase + ky * k + kx];
                            let off = src_row + kx * d;
                            row_axpy(dst, &xp[off..off + wid], a);
                        }
                    }
                }
            }
        }
    }
    out
}

fn shape_of<F: Real>(x: &Array4<F>, w: &Array4<F>, dilation: usize) -> Conv2dShape {
    let (c_out, c_in, k, k2) = w.dim();
    debug_assert_eq!(k, k2, "square kernels only");
    debug_assert!(k == 1 || k == 3, "kernel side must be 1 or 3");
    debug_assert_eq!(x.dim().1, c_in);
    Conv2dShape { c_in, c_out, kernel: k, dilation: if k == 1 { 1 } else { dilation } }
}

/// Forward convolution on a batch.
pub fn conv2d_forward<F: Real>(x: &Array4<F>, w: &Array4<F>, b: &Array4<F>, dilation: usize) -> Array4<F> {
    let shape = shape_of(x, w, dilation);
    let (n, _, h, wid) = x.dim();
    let samples: Vec<Array3<F>> = {
        #[cfg(feature = "parallel")]
        {
            (0..n)
                .into_par_iter()
                .map(|i| conv_single(&x.index_axis(Axis(0), i), w, b, shape))
                .collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            (0..n)
                .map(|i| conv_single(&x.index_axis(Axis(0), i), w, b, shape))
                .collect()
        }
    };
    let mut out = Array4::zeros((n, shape.c_out, h, wid));
    for (i, sample) in samples.into_iter().enumerate() {
        out.index_axis_mut(Axis(0), i).assign(&sample);
    }
    out
}

/// Plain convolution entry point used outside the graph (probes, demos).
pub fn conv2d_raw<F: Real>(x: &Array4<F>, w: &Array4<F>, b: &Array4<F>, dilation: usize) -> Array4<F> {
    conv2d_forward(x, w, b, dilation)
}

type SampleGrads<F> = (Option<Array3<F>>, Array4<F>);

fn conv_backward_single<F: Real>(
    x: &ArrayView3<F>,
    w: &Array4<F>,
    gout: &ArrayView3<F>,
    shape: Conv2dShape,
    need_gx: bool,
) -> SampleGrads<F> {
    let (c_in, h, wid) = x.dim();
    let (k, d) = (shape.kernel, shape.dilation);
    if k == 1 {
        let g_mat = gout
            .to_shape((shape.c_out, h * wid))
            .expect("grad reshape")
            .to_owned();
        let x_mat = x.to_shape((c_in, h * wid)).expect("reshape");
        // dot may hand back an F-order result; normalize before reshaping
        let gw_mat = g_mat.dot(&x_mat.t());
        let gw = Array4::from_shape_fn((shape.c_out, c_in, 1, 1), |(a, b, _, _)| gw_mat[[a, b]]);
        let gx = need_gx.then(|| {
            let w_mat = w
                .view()
                .into_shape_with_order((shape.c_out, c_in))
                .expect("weight reshape");
            let gx_mat = w_mat.t().dot(&g_mat);
            let gx_std = gx_mat.as_standard_layout().into_owned();
            gx_std
                .into_shape_with_order((c_in, h, wid))
                .expect("reshape")
        });
        return (gx, gw);
    }

    let pad = shape.pad();
    let xpad = pad_sample(x, pad);
    let (_, hp, wp) = xpad.dim();
    let xp = xpad.as_slice().expect("row-major");
    let gs = gout.to_slice().expect("row-major grad");
    let ws = w.as_slice().expect("row-major");

    let mut gw = Array4::zeros((shape.c_out, c_in, k, k));
    {
        // row-outer order keeps the x rows for one i hot across all c_out
        let gws = gw.as_slice_mut().expect("row-major");
        for i in 0..h {
            for co in 0..shape.c_out {
                let g_row = &gs[(co * h + i) * wid..(co * h + i + 1) * wid];
                for c in 0..c_in {
                    let wbase = ((co * c_in) + c) * k * k;
                    for ky in 0..k {
                        let src_row = (c * hp + i + ky * d) * wp;
                        for kx in 0..k {
                            let off = src_row + kx * d;
                            gws[wbase + ky * k + kx] =
                                gws[wbase + ky * k + kx] + row_dot(g_row, &xp[off..off + wid]);
                        }
                    }
                }
            }
        }
    }

    let gx = need_gx.then(|| {
        let mut gxpad = Array3::<F>::zeros((c_in, hp, wp));
        {
            let gxs = gxpad.as_slice_mut().expect("row-major");
            for i in 0..h {
                for co in 0..shape.c_out {
                    let g_row = &gs[(co * h + i) * wid..(co * h + i + 1) * wid];
                    for c in 0..c_in {
                        let wbase = ((co * c_in) + c) * k * k;
                        for ky in 0..k {
                            let dst_row = (c * hp + i + ky * d) * wp;
                            for kx in 0..k {
                                let a = ws[wbase + ky * k + kx];
                                let off = dst_row + kx * d;
                                row_axpy(&mut gxs[off..off + wid], g_row, a);
                            }
                        }
                    }
                }
            }
        }
        gxpad.slice(s![.., pad..pad + h, pad..pad + wid]).to_owned()
    });
    (gx, gw)
}

/// Backward convolution. Returns (grad_x, grad_w, grad_b); `grad_x` is `None`
/// unless requested. Per-sample work runs in parallel; reductions are summed
/// in sample order so results are deterministic.
pub fn conv2d_backward<F: Real>(
    x: &Array4<F>,
    w: &Array4<F>,
    gout: &Array4<F>,
    dilation: usize,
    need_gx: bool,
) -> (Option<Array4<F>>, Array4<F>, Array4<F>) {
    let shape = shape_of(x, w, dilation);
    let (n, _, h, wid) = x.dim();
    let per_sample: Vec<SampleGrads<F>> = {
        #[cfg(feature = "parallel")]
        {
            (0..n)
                .into_par_iter()
                .map(|i| {
                    conv_backward_single(
                        &x.index_axis(Axis(0), i),
                        w,
                        &gout.index_axis(Axis(0), i),
                        shape,
                        need_gx,
                    )
                })
                .collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            (0..n)
                .map(|i| {
                    conv_backward_single(
                        &x.index_axis(Axis(0), i),
                        w,
                        &gout.index_axis(Axis(0), i),
                        shape,
                        need_gx,
                    )
                })
                .collect()
        }
    };

    let mut gw = Array4::<F>::zeros(w.dim());
    let mut gx = need_gx.then(|| Array4::zeros((n, shape.c_in, h, wid)));
    for (i, (gx_i, gw_i)) in per_sample.into_iter().enumerate() {
        gw += &gw_i;
        if let (Some(gx_all), Some(gx_i)) = (gx.as_mut(), gx_i) {
            gx_all.index_axis_mut(Axis(0), i).assign(&gx_i);
        }
    }

    let mut gb = Array4::zeros((1, shape.c_out, 1, 1));
    for c in 0..shape.c_out {
        gb[[0, c, 0, 0]] = gout.slice(s![.., c, .., ..]).sum();
    }
    (gx, gw, gb)
}
