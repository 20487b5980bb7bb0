//! Strided 2-D convolution and transposed convolution via im2col + GEMM.
//!
//! Shapes follow the (N, C, H, W) convention. Convolution weights are
//! (C_out, C_in, K, K); transposed-convolution weights are (C_in, C_out, K, K).
//! The transposed forward pass is exactly the data-gradient of the matching
//! convolution, which keeps the two backward passes symmetric.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, Array4, ArrayView2, ArrayViewMut2, Axis, NdFloat};

/// floor((n + 2p - k)/s) + 1
pub fn conv_out_size(n: usize, k: usize, stride: usize, pad: usize) -> usize {
    assert!(n + 2 * pad >= k, "input {n} too small for kernel {k} pad {pad}");
    (n + 2 * pad - k) / stride + 1
}

/// (n - 1)s - 2p + k
pub fn tconv_out_size(n: usize, k: usize, stride: usize, pad: usize) -> usize {
    (n - 1) * stride + k - 2 * pad
}

/// Gathers conv patches of one (C, H, W) sample into a (C*K*K, Ho*Wo) matrix.
/// `xs` is the sample's contiguous slice.
#[allow(clippy::too_many_arguments)]
fn im2col<F: NdFloat>(
    xs: &[F],
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
) -> Array2<F> {
    let mut cols = Array2::<F>::zeros((c * k * k, ho * wo));
    let cs = cols.as_slice_mut().expect("freshly allocated is contiguous");
    for ci in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let row_base = row * ho * wo;
                // valid ox range so that ix = ox*stride + kx - pad lands in [0, w)
                let ox_lo = if kx >= pad { 0 } else { (pad - kx).div_ceil(stride) };
                let ox_hi = if w + pad > kx {
                    (((w + pad - kx - 1) / stride) + 1).min(wo)
                } else {
                    0
                };
                for oy in 0..ho {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src_base = (ci * h + iy as usize) * w;
                    let dst_base = row_base + oy * wo;
                    if stride == 1 {
                        let ix0 = ox_lo + kx - pad;
                        let len = ox_hi - ox_lo;
                        cs[dst_base + ox_lo..dst_base + ox_lo + len]
                            .copy_from_slice(&xs[src_base + ix0..src_base + ix0 + len]);
                    } else {
                        for ox in ox_lo..ox_hi {
                            let ix = ox * stride + kx - pad;
                            cs[dst_base + ox] = xs[src_base + ix];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Scatter-add of a (C*K*K, Ho*Wo) matrix back onto a (C, H, W) image slice.
#[allow(clippy::too_many_arguments)]
fn col2im<F: NdFloat>(
    cols: &Array2<F>,
    img: &mut [F],
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
) {
    let cs = cols.as_slice().expect("cols contiguous");
    for ci in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let row_base = row * ho * wo;
                let ox_lo = if kx >= pad { 0 } else { (pad - kx).div_ceil(stride) };
                let ox_hi = if w + pad > kx {
                    (((w + pad - kx - 1) / stride) + 1).min(wo)
                } else {
                    0
                };
                for oy in 0..ho {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst_base = (ci * h + iy as usize) * w;
                    let src_base = row_base + oy * wo;
                    for ox in ox_lo..ox_hi {
                        let ix = ox * stride + kx - pad;
                        img[dst_base + ix] += cs[src_base + ox];
                    }
                }
            }
        }
    }
}

fn sample_slice<F: NdFloat>(x: &Array4<F>, n: usize) -> &[F] {
    let (_, c, h, w) = x.dim();
    let xs = x.as_slice().expect("standard layout");
    &xs[n * c * h * w..(n + 1) * c * h * w]
}

fn view2<F>(data: &[F], rows: usize, cols: usize) -> ArrayView2<'_, F> {
    ArrayView2::from_shape((rows, cols), data).expect("view shape")
}

fn view2_mut<F>(data: &mut [F], rows: usize, cols: usize) -> ArrayViewMut2<'_, F> {
    ArrayViewMut2::from_shape((rows, cols), data).expect("view shape")
}

/// y = conv(x, w) + b with square kernel, symmetric stride/pad.
pub fn conv2d_forward<F: NdFloat>(
    x: &Array4<F>,
    w: &Array4<F>,
    b: &Array1<F>,
    stride: usize,
    pad: usize,
) -> Array4<F> {
    let (n, c_in, h, wd) = x.dim();
    let (c_out, c_in_w, k, _) = w.dim();
    assert_eq!(c_in, c_in_w, "conv input channels");
    let ho = conv_out_size(h, k, stride, pad);
    let wo = conv_out_size(wd, k, stride, pad);
    let w2 = view2(w.as_slice().expect("weights contiguous"), c_out, c_in * k * k);
    let mut y = Array4::<F>::zeros((n, c_out, ho, wo));
    for ni in 0..n {
        let cols = im2col(sample_slice(x, ni), c_in, h, wd, k, stride, pad, ho, wo);
        let ys = y.as_slice_mut().expect("y contiguous");
        let mut y2 = view2_mut(
            &mut ys[ni * c_out * ho * wo..(ni + 1) * c_out * ho * wo],
            c_out,
            ho * wo,
        );
        general_mat_mul(F::one(), &w2, &cols.view(), F::zero(), &mut y2);
    }
    for ci in 0..c_out {
        y.index_axis_mut(Axis(1), ci).mapv_inplace(|v| v + b[ci]);
    }
    y
}

/// Gradients of a conv layer. Returns (gw, gb, gx); `gx` is skipped when the
/// input gradient is not needed (first layer of a network).
pub fn conv2d_backward<F: NdFloat>(
    x: &Array4<F>,
    w: &Array4<F>,
    gy: &Array4<F>,
    stride: usize,
    pad: usize,
    need_gx: bool,
) -> (Array4<F>, Array1<F>, Option<Array4<F>>) {
    let (n, c_in, h, wd) = x.dim();
    let (c_out, _, k, _) = w.dim();
    let (_, _, ho, wo) = gy.dim();
    let w2 = view2(w.as_slice().expect("weights contiguous"), c_out, c_in * k * k);

    let mut gw = Array2::<F>::zeros((c_out, c_in * k * k));
    let mut gx = need_gx.then(|| Array4::<F>::zeros((n, c_in, h, wd)));
    for ni in 0..n {
        let cols = im2col(sample_slice(x, ni), c_in, h, wd, k, stride, pad, ho, wo);
        let gy2 = view2(sample_slice(gy, ni), c_out, ho * wo);
        general_mat_mul(F::one(), &gy2, &cols.t(), F::one(), &mut gw.view_mut());
        if let Some(gx) = gx.as_mut() {
            let mut gcols = Array2::<F>::zeros((c_in * k * k, ho * wo));
            general_mat_mul(F::one(), &w2.t(), &gy2, F::zero(), &mut gcols.view_mut());
            let gxs = gx.as_slice_mut().expect("gx contiguous");
            col2im(
                &gcols,
                &mut gxs[ni * c_in * h * wd..(ni + 1) * c_in * h * wd],
                c_in,
                h,
                wd,
                k,
                stride,
                pad,
                ho,
                wo,
            );
        }
    }
    let mut gb = Array1::<F>::zeros(c_out);
    for ci in 0..c_out {
        gb[ci] = gy.index_axis(Axis(1), ci).sum();
    }
    let gw4 = gw.into_shape_with_order((c_out, c_in, k, k)).expect("gw shape");
    (gw4, gb, gx)
}

/// y = conv_transpose(x, w) + b; weight layout (C_in, C_out, K, K).
pub fn conv_transpose2d_forward<F: NdFloat>(
    x: &Array4<F>,
    w: &Array4<F>,
    b: &Array1<F>,
    stride: usize,
    pad: usize,
) -> Array4<F> {
    let (n, c_in, h, wd) = x.dim();
    let (c_in_w, c_out, k, _) = w.dim();
    assert_eq!(c_in, c_in_w, "tconv input channels");
    let ho = tconv_out_size(h, k, stride, pad);
    let wo = tconv_out_size(wd, k, stride, pad);
    debug_assert_eq!(conv_out_size(ho, k, stride, pad), h);
    let w2 = view2(w.as_slice().expect("weights contiguous"), c_in, c_out * k * k);
    let mut y = Array4::<F>::zeros((n, c_out, ho, wo));
    for ni in 0..n {
        let x2 = view2(sample_slice(x, ni), c_in, h * wd);
        let mut cols = Array2::<F>::zeros((c_out * k * k, h * wd));
        general_mat_mul(F::one(), &w2.t(), &x2, F::zero(), &mut cols.view_mut());
        let ys = y.as_slice_mut().expect("y contiguous");
        col2im(
            &cols,
            &mut ys[ni * c_out * ho * wo..(ni + 1) * c_out * ho * wo],
            c_out,
            ho,
            wo,
            k,
            stride,
            pad,
            h,
            wd,
        );
    }
    for ci in 0..c_out {
        y.index_axis_mut(Axis(1), ci).mapv_inplace(|v| v + b[ci]);
    }
    y
}

/// Gradients of a transposed-conv layer; mirror image of [`conv2d_backward`].
pub fn conv_transpose2d_backward<F: NdFloat>(
    x: &Array4<F>,
    w: &Array4<F>,
    gy: &Array4<F>,
    stride: usize,
    pad: usize,
    need_gx: bool,
) -> (Array4<F>, Array1<F>, Option<Array4<F>>) {
    let (n, c_in, h, wd) = x.dim();
    let (_, c_out, k, _) = w.dim();
    let (_, _, ho, wo) = gy.dim();
    let w2 = view2(w.as_slice().expect("weights contiguous"), c_in, c_out * k * k);

    let mut gw = Array2::<F>::zeros((c_in, c_out * k * k));
    let mut gx = need_gx.then(|| Array4::<F>::zeros((n, c_in, h, wd)));
    for ni in 0..n {
        // patches of the *output* gradient, on the tconv-input grid
        let gcols = im2col(sample_slice(gy, ni), c_out, ho, wo, k, stride, pad, h, wd);
        let x2 = view2(sample_slice(x, ni), c_in, h * wd);
        general_mat_mul(F::one(), &x2, &gcols.t(), F::one(), &mut gw.view_mut());
        if let Some(gx) = gx.as_mut() {
            let gxs = gx.as_slice_mut().expect("gx contiguous");
            let mut gx2 = view2_mut(&mut gxs[ni * c_in * h * wd..(ni + 1) * c_in * h * wd], c_in, h * wd);
            general_mat_mul(F::one(), &w2, &gcols.view(), F::zero(), &mut gx2);
        }
    }
    let mut gb = Array1::<F>::zeros(c_out);
    for ci in 0..c_out {
        gb[ci] = gy.index_axis(Axis(1), ci).sum();
    }
    let gw4 = gw.into_shape_with_order((c_in, c_out, k, k)).expect("gw shape");
    (gw4, gb, gx)
}
