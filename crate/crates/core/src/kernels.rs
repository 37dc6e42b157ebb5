//! Raw convolution kernels on NCHW buffers.
//!
//! Dense convolutions lower to GEMM through im2col; depthwise convolutions
//! run direct plane loops. Batch samples are processed in parallel and any
//! cross-sample reduction (weight gradients) is summed in sample order, so
//! results do not depend on the worker count.

use rayon::prelude::*;

use crate::tensor::{Shape, Tensor};

/// Spatial geometry of a cross-correlation from a `h x w` plane onto a
/// `ho x wo` plane.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    /// Geometry of a forward convolution; `None` if the kernel does not fit.
    pub fn conv(h: usize, w: usize, k: usize, stride: usize, pad: usize) -> Option<Self> {
        if k == 0 || stride == 0 || h + 2 * pad < k || w + 2 * pad < k {
            return None;
        }
        Some(ConvGeom {
            h,
            w,
            k,
            stride,
            pad,
            ho: (h + 2 * pad - k) / stride + 1,
            wo: (w + 2 * pad - k) / stride + 1,
        })
    }

    /// Geometry of the convolution whose adjoint is a transposed convolution
    /// taking `h x w` inputs. The returned `(h, w)` are the transposed
    /// output size and `(ho, wo)` the transposed input size.
    pub fn transposed(h: usize, w: usize, k: usize, stride: usize, pad: usize) -> Option<Self> {
        if k == 0 || stride == 0 || h == 0 || w == 0 {
            return None;
        }
        let oh = ((h - 1) * stride + k).checked_sub(2 * pad)?;
        let ow = ((w - 1) * stride + k).checked_sub(2 * pad)?;
        let g = Self::conv(oh, ow, k, stride, pad)?;
        (g.ho == h && g.wo == w).then_some(g)
    }

    /// Valid output columns `[lo, hi)` for kernel column offset `kx`.
    #[inline]
    fn out_range(
        in_len: usize,
        out_len: usize,
        kx: usize,
        stride: usize,
        pad: usize,
    ) -> (usize, usize) {
        // need 0 <= o*stride + kx - pad < in_len
        let lo = if pad > kx {
            (pad - kx).div_ceil(stride)
        } else {
            0
        };
        let hi = if in_len + pad > kx {
            ((in_len + pad - kx - 1) / stride + 1).min(out_len)
        } else {
            0
        };
        (lo, hi.max(lo))
    }
}

/// `c (m x n) = a (m x k) * b (k x n) + beta * c` with explicit strides.
#[allow(clippy::too_many_arguments)]
#[inline]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: usize,
    csa: usize,
    b: &[f64],
    rsb: usize,
    csb: usize,
    beta: f64,
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(a.len() > (m - 1) * rsa + (k.max(1) - 1) * csa || k == 0);
    assert!(b.len() > (k.max(1) - 1) * rsb + (n - 1) * csb || k == 0);
    assert!(c.len() >= m * n);
    // SAFETY: the asserts above bound every index the kernel touches.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Unfolds one `(c, h, w)` sample into a `(c*k*k) x (ho*wo)` matrix.
pub fn im2col(x: &[f64], c: usize, g: &ConvGeom, cols: &mut [f64]) {
    let (k, s, p) = (g.k, g.stride, g.pad);
    let plane = g.ho * g.wo;
    debug_assert_eq!(cols.len(), c * k * k * plane);
    for ci in 0..c {
        let xin = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let dst = &mut cols[row * plane..(row + 1) * plane];
                let (lo, hi) = ConvGeom::out_range(g.w, g.wo, kx, s, p);
                for oy in 0..g.ho {
                    let line = &mut dst[oy * g.wo..(oy + 1) * g.wo];
                    let iy = (oy * s + ky) as isize - p as isize;
                    if iy < 0 || iy >= g.h as isize {
                        line.fill(0.0);
                        continue;
                    }
                    let src = &xin[iy as usize * g.w..(iy as usize + 1) * g.w];
                    line[..lo].fill(0.0);
                    line[hi..].fill(0.0);
                    if s == 1 {
                        let start = lo + kx - p;
                        line[lo..hi].copy_from_slice(&src[start..start + (hi - lo)]);
                    } else {
                        for ox in lo..hi {
                            line[ox] = src[ox * s + kx - p];
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates columns back into a sample.
pub fn col2im(cols: &[f64], c: usize, g: &ConvGeom, x: &mut [f64]) {
    let (k, s, p) = (g.k, g.stride, g.pad);
    let plane = g.ho * g.wo;
    for ci in 0..c {
        let xout = &mut x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let src = &cols[row * plane..(row + 1) * plane];
                let (lo, hi) = ConvGeom::out_range(g.w, g.wo, kx, s, p);
                for oy in 0..g.ho {
                    let iy = (oy * s + ky) as isize - p as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut xout[iy as usize * g.w..(iy as usize + 1) * g.w];
                    let line = &src[oy * g.wo..(oy + 1) * g.wo];
                    for ox in lo..hi {
                        dst[ox * s + kx - p] += line[ox];
                    }
                }
            }
        }
    }
}

fn is_pointwise(g: &ConvGeom) -> bool {
    g.k == 1 && g.stride == 1 && g.pad == 0
}

fn add_bias(out: &mut [f64], bias: &[f64], plane: usize) {
    for (chunk, &b) in out.chunks_mut(plane).zip(bias) {
        if b != 0.0 {
            chunk.iter_mut().for_each(|v| *v += b);
        }
    }
}

fn bias_grad(dout: &Tensor) -> Vec<f64> {
    let s = dout.shape();
    let mut db = vec![0.0; s.c];
    for n in 0..s.n {
        for (c, chunk) in dout.sample(n).chunks(s.plane()).enumerate() {
            db[c] += chunk.iter().sum::<f64>();
        }
    }
    db
}

/// Sums per-sample partials in sample order.
fn reduce_ordered(parts: Vec<Vec<f64>>, len: usize) -> Vec<f64> {
    let mut acc = vec![0.0; len];
    for p in parts {
        for (a, b) in acc.iter_mut().zip(p) {
            *a += b;
        }
    }
    acc
}

/// Standard convolution. `weight` is `(cout, cin, k, k)`, `bias` has `cout` entries.
pub fn conv2d_forward(x: &Tensor, weight: &Tensor, bias: &[f64], g: &ConvGeom) -> Tensor {
    let xs = x.shape();
    let ws = weight.shape();
    let (cin, cout) = (ws.c, ws.n);
    let rows = cin * g.k * g.k;
    let plane = g.ho * g.wo;
    let mut out = Tensor::zeros(Shape::new(xs.n, cout, g.ho, g.wo));
    let wdata = weight.data();
    out.data_mut()
        .par_chunks_mut(cout * plane)
        .enumerate()
        .for_each(|(n, out_n)| {
            let xn = x.sample(n);
            if is_pointwise(g) {
                gemm(cout, rows, plane, wdata, rows, 1, xn, plane, 1, 0.0, out_n);
            } else {
                let mut cols = vec![0.0; rows * plane];
                im2col(xn, cin, g, &mut cols);
                gemm(
                    cout, rows, plane, wdata, rows, 1, &cols, plane, 1, 0.0, out_n,
                );
            }
            add_bias(out_n, bias, plane);
        });
    out
}

pub struct ConvGrads {
    pub dx: Option<Tensor>,
    pub dw: Option<Tensor>,
    pub db: Vec<f64>,
}

pub fn conv2d_backward(
    x: &Tensor,
    weight: &Tensor,
    dout: &Tensor,
    g: &ConvGeom,
    need_dx: bool,
    need_dw: bool,
) -> ConvGrads {
    let xs = x.shape();
    let ws = weight.shape();
    let (cin, cout) = (ws.c, ws.n);
    let rows = cin * g.k * g.k;
    let plane = g.ho * g.wo;
    let wdata = weight.data();
    let pointwise = is_pointwise(g);
    // For stride 1 the input gradient is a correlation of `dout` with the
    // flipped, channel-swapped kernel; unfolding `dout` is cheaper when it
    // has fewer channels than the input.
    let flipped = (need_dx && g.stride == 1 && !pointwise && cout < cin).then(|| {
        let k = g.k;
        let mut wf = vec![0.0; ws.numel()];
        for co in 0..cout {
            for ci in 0..cin {
                for ky in 0..k {
                    for kx in 0..k {
                        wf[((ci * cout + co) * k + (k - 1 - ky)) * k + (k - 1 - kx)] =
                            wdata[((co * cin + ci) * k + ky) * k + kx];
                    }
                }
            }
        }
        let gf = ConvGeom::conv(g.ho, g.wo, k, 1, k - 1 - g.pad).expect("adjoint geometry");
        debug_assert_eq!((gf.ho, gf.wo), (g.h, g.w));
        (wf, gf)
    });

    let per_sample: Vec<(Option<Vec<f64>>, Option<Vec<f64>>)> = (0..xs.n)
        .into_par_iter()
        .map(|n| {
            let dn = dout.sample(n);
            let xn = x.sample(n);
            let dw = need_dw.then(|| {
                let mut dw = vec![0.0; cout * rows];
                if pointwise {
                    gemm(cout, plane, rows, dn, plane, 1, xn, 1, plane, 0.0, &mut dw);
                } else {
                    let mut cols = vec![0.0; rows * plane];
                    im2col(xn, cin, g, &mut cols);
                    gemm(
                        cout, plane, rows, dn, plane, 1, &cols, 1, plane, 0.0, &mut dw,
                    );
                }
                dw
            });
            let dx = need_dx.then(|| {
                let mut dx = vec![0.0; xs.sample_len()];
                if pointwise {
                    gemm(
                        rows, cout, plane, wdata, 1, rows, dn, plane, 1, 0.0, &mut dx,
                    );
                } else if let Some((wf, gf)) = &flipped {
                    let frows = cout * gf.k * gf.k;
                    let mut cols = vec![0.0; frows * g.h * g.w];
                    im2col(dn, cout, gf, &mut cols);
                    gemm(
                        cin,
                        frows,
                        g.h * g.w,
                        wf,
                        frows,
                        1,
                        &cols,
                        g.h * g.w,
                        1,
                        0.0,
                        &mut dx,
                    );
                } else {
                    let mut dcols = vec![0.0; rows * plane];
                    gemm(
                        rows, cout, plane, wdata, 1, rows, dn, plane, 1, 0.0, &mut dcols,
                    );
                    col2im(&dcols, cin, g, &mut dx);
                }
                dx
            });
            (dx, dw)
        })
        .collect();

    let (dxs, dws): (Vec<_>, Vec<_>) = per_sample.into_iter().unzip();
    let dx = need_dx.then(|| {
        let data: Vec<f64> = dxs.into_iter().flat_map(Option::unwrap).collect();
        Tensor::from_vec(xs, data).expect("dx shape")
    });
    let dw = need_dw.then(|| {
        let parts = dws.into_iter().map(Option::unwrap).collect();
        Tensor::from_vec(ws, reduce_ordered(parts, ws.numel())).expect("dw shape")
    });
    ConvGrads {
        dx,
        dw,
        db: bias_grad(dout),
    }
}

/// Transposed convolution. `weight` is `(cin, cout, k, k)`; `g` comes from
/// [`ConvGeom::transposed`].
pub fn conv_transpose2d_forward(x: &Tensor, weight: &Tensor, bias: &[f64], g: &ConvGeom) -> Tensor {
    let xs = x.shape();
    let ws = weight.shape();
    let (cin, cout) = (ws.n, ws.c);
    let rows = cout * g.k * g.k;
    let in_plane = g.ho * g.wo;
    let out_plane = g.h * g.w;
    let mut out = Tensor::zeros(Shape::new(xs.n, cout, g.h, g.w));
    let wdata = weight.data();
    out.data_mut()
        .par_chunks_mut(cout * out_plane)
        .enumerate()
        .for_each(|(n, out_n)| {
            let mut cols = vec![0.0; rows * in_plane];
            gemm(
                rows,
                cin,
                in_plane,
                wdata,
                1,
                rows,
                x.sample(n),
                in_plane,
                1,
                0.0,
                &mut cols,
            );
            col2im(&cols, cout, g, out_n);
            add_bias(out_n, bias, out_plane);
        });
    out
}

pub fn conv_transpose2d_backward(
    x: &Tensor,
    weight: &Tensor,
    dout: &Tensor,
    g: &ConvGeom,
    need_dx: bool,
    need_dw: bool,
) -> ConvGrads {
    let xs = x.shape();
    let ws = weight.shape();
    let (cin, cout) = (ws.n, ws.c);
    let rows = cout * g.k * g.k;
    let in_plane = g.ho * g.wo;
    let wdata = weight.data();

    let per_sample: Vec<(Option<Vec<f64>>, Option<Vec<f64>>)> = (0..xs.n)
        .into_par_iter()
        .map(|n| {
            let mut dcols = vec![0.0; rows * in_plane];
            im2col(dout.sample(n), cout, g, &mut dcols);
            let dx = need_dx.then(|| {
                let mut dx = vec![0.0; cin * in_plane];
                gemm(
                    cin, rows, in_plane, wdata, rows, 1, &dcols, in_plane, 1, 0.0, &mut dx,
                );
                dx
            });
            let dw = need_dw.then(|| {
                let mut dw = vec![0.0; cin * rows];
                gemm(
                    cin,
                    in_plane,
                    rows,
                    x.sample(n),
                    in_plane,
                    1,
                    &dcols,
                    1,
                    in_plane,
                    0.0,
                    &mut dw,
                );
                dw
            });
            (dx, dw)
        })
        .collect();

    let (dxs, dws): (Vec<_>, Vec<_>) = per_sample.into_iter().unzip();
    let dx = need_dx.then(|| {
        let data: Vec<f64> = dxs.into_iter().flat_map(Option::unwrap).collect();
        Tensor::from_vec(xs, data).expect("dx shape")
    });
    let dw = need_dw.then(|| {
        let parts = dws.into_iter().map(Option::unwrap).collect();
        Tensor::from_vec(ws, reduce_ordered(parts, ws.numel())).expect("dw shape")
    });
    ConvGrads {
        dx,
        dw,
        db: bias_grad(dout),
    }
}

// Plane-level depthwise primitives. `big` is the `h x w` side of `g`,
// `small` the `ho x wo` side.

/// `small[o] += sum_k kern[k] * big[o*s + k - p]`
fn gather_plane(big: &[f64], small: &mut [f64], kern: &[f64], g: &ConvGeom) {
    let (k, s, p) = (g.k, g.stride, g.pad);
    for ky in 0..k {
        for kx in 0..k {
            let wv = kern[ky * k + kx];
            let (lo, hi) = ConvGeom::out_range(g.w, g.wo, kx, s, p);
            for oy in 0..g.ho {
                let iy = (oy * s + ky) as isize - p as isize;
                if iy < 0 || iy >= g.h as isize {
                    continue;
                }
                let src = &big[iy as usize * g.w..(iy as usize + 1) * g.w];
                let dst = &mut small[oy * g.wo..(oy + 1) * g.wo];
                if s == 1 {
                    let off = kx as isize - p as isize;
                    for ox in lo..hi {
                        dst[ox] += wv * src[(ox as isize + off) as usize];
                    }
                } else {
                    for ox in lo..hi {
                        dst[ox] += wv * src[ox * s + kx - p];
                    }
                }
            }
        }
    }
}

/// Adjoint of [`gather_plane`] with respect to `big`.
fn scatter_plane(small: &[f64], big: &mut [f64], kern: &[f64], g: &ConvGeom) {
    let (k, s, p) = (g.k, g.stride, g.pad);
    for ky in 0..k {
        for kx in 0..k {
            let wv = kern[ky * k + kx];
            let (lo, hi) = ConvGeom::out_range(g.w, g.wo, kx, s, p);
            for oy in 0..g.ho {
                let iy = (oy * s + ky) as isize - p as isize;
                if iy < 0 || iy >= g.h as isize {
                    continue;
                }
                let dst = &mut big[iy as usize * g.w..(iy as usize + 1) * g.w];
                let src = &small[oy * g.wo..(oy + 1) * g.wo];
                for ox in lo..hi {
                    dst[ox * s + kx - p] += wv * src[ox];
                }
            }
        }
    }
}

/// Adjoint of [`gather_plane`] with respect to `kern`.
fn correlate_plane(big: &[f64], small: &[f64], dkern: &mut [f64], g: &ConvGeom) {
    let (k, s, p) = (g.k, g.stride, g.pad);
    for ky in 0..k {
        for kx in 0..k {
            let (lo, hi) = ConvGeom::out_range(g.w, g.wo, kx, s, p);
            let mut acc = 0.0;
            for oy in 0..g.ho {
                let iy = (oy * s + ky) as isize - p as isize;
                if iy < 0 || iy >= g.h as isize {
                    continue;
                }
                let b = &big[iy as usize * g.w..(iy as usize + 1) * g.w];
                let sm = &small[oy * g.wo..(oy + 1) * g.wo];
                for ox in lo..hi {
                    acc += b[ox * s + kx - p] * sm[ox];
                }
            }
            dkern[ky * k + kx] += acc;
        }
    }
}

/// Depthwise convolution, `weight` is `(c, 1, k, k)`.
pub fn depthwise_forward(x: &Tensor, weight: &Tensor, bias: &[f64], g: &ConvGeom) -> Tensor {
    let xs = x.shape();
    let kk = g.k * g.k;
    let mut out = Tensor::zeros(Shape::new(xs.n, xs.c, g.ho, g.wo));
    let wdata = weight.data();
    let in_plane = g.h * g.w;
    let out_plane = g.ho * g.wo;
    out.data_mut()
        .par_chunks_mut(out_plane)
        .enumerate()
        .for_each(|(i, dst)| {
            let c = i % xs.c;
            let src = &x.data()[i * in_plane..(i + 1) * in_plane];
            gather_plane(src, dst, &wdata[c * kk..(c + 1) * kk], g);
            if bias[c] != 0.0 {
                dst.iter_mut().for_each(|v| *v += bias[c]);
            }
        });
    out
}

pub fn depthwise_backward(
    x: &Tensor,
    weight: &Tensor,
    dout: &Tensor,
    g: &ConvGeom,
    need_dx: bool,
    need_dw: bool,
) -> ConvGrads {
    let xs = x.shape();
    let kk = g.k * g.k;
    let in_plane = g.h * g.w;
    let out_plane = g.ho * g.wo;
    let wdata = weight.data();
    let dx = need_dx.then(|| {
        let mut dx = Tensor::zeros(xs);
        dx.data_mut()
            .par_chunks_mut(in_plane)
            .enumerate()
            .for_each(|(i, dst)| {
                let c = i % xs.c;
                let src = &dout.data()[i * out_plane..(i + 1) * out_plane];
                scatter_plane(src, dst, &wdata[c * kk..(c + 1) * kk], g);
            });
        dx
    });
    let dw = need_dw.then(|| {
        let mut dw = vec![0.0; xs.c * kk];
        for n in 0..xs.n {
            for c in 0..xs.c {
                let i = n * xs.c + c;
                correlate_plane(
                    &x.data()[i * in_plane..(i + 1) * in_plane],
                    &dout.data()[i * out_plane..(i + 1) * out_plane],
                    &mut dw[c * kk..(c + 1) * kk],
                    g,
                );
            }
        }
        Tensor::from_vec(weight.shape(), dw).expect("dw shape")
    });
    ConvGrads {
        dx,
        dw,
        db: bias_grad(dout),
    }
}

/// Depthwise transposed convolution, `weight` is `(c, 1, k, k)`; `g` comes
/// from [`ConvGeom::transposed`].
pub fn depthwise_transpose_forward(
    x: &Tensor,
    weight: &Tensor,
    bias: &[f64],
    g: &ConvGeom,
) -> Tensor {
    let xs = x.shape();
    let kk = g.k * g.k;
    let mut out = Tensor::zeros(Shape::new(xs.n, xs.c, g.h, g.w));
    let wdata = weight.data();
    let in_plane = g.ho * g.wo;
    let out_plane = g.h * g.w;
    out.data_mut()
        .par_chunks_mut(out_plane)
        .enumerate()
        .for_each(|(i, dst)| {
            let c = i % xs.c;
            let src = &x.data()[i * in_plane..(i + 1) * in_plane];
            scatter_plane(src, dst, &wdata[c * kk..(c + 1) * kk], g);
            if bias[c] != 0.0 {
                dst.iter_mut().for_each(|v| *v += bias[c]);
            }
        });
    out
}

pub fn depthwise_transpose_backward(
    x: &Tensor,
    weight: &Tensor,
    dout: &Tensor,
    g: &ConvGeom,
    need_dx: bool,
    need_dw: bool,
) -> ConvGrads {
    let xs = x.shape();
    let kk = g.k * g.k;
    let in_plane = g.ho * g.wo;
    let out_plane = g.h * g.w;
    let wdata = weight.data();
    let dx = need_dx.then(|| {
        let mut dx = Tensor::zeros(xs);
        dx.data_mut()
            .par_chunks_mut(in_plane)
            .enumerate()
            .for_each(|(i, dst)| {
                let c = i % xs.c;
                let src = &dout.data()[i * out_plane..(i + 1) * out_plane];
                gather_plane(src, dst, &wdata[c * kk..(c + 1) * kk], g);
            });
        dx
    });
    let dw = need_dw.then(|| {
        let mut dw = vec![0.0; xs.c * kk];
        for n in 0..xs.n {
            for c in 0..xs.c {
                let i = n * xs.c + c;
                correlate_plane(
                    &dout.data()[i * out_plane..(i + 1) * out_plane],
                    &x.data()[i * in_plane..(i + 1) * in_plane],
                    &mut dw[c * kk..(c + 1) * kk],
                    g,
                );
            }
        }
        Tensor::from_vec(weight.shape(), dw).expect("dw shape")
    });
    ConvGrads {
        dx,
        dw,
        db: bias_grad(dout),
    }
}
