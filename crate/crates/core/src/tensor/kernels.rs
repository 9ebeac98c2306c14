//! Forward and backward kernels on raw row-major slices.
//!
//! The graph in `graph.rs` records operations and calls into these; the
//! perceptual-distance network and the batch evaluation paths call them
//! directly without recording.

use super::Real;
use crate::error::{Error, Result};
use crate::par;

/// `c[m×n] = a[m×k] · b[k×n]`
pub fn matmul<T: Real>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut c = vec![T::zero(); m * n];
    par::for_each_chunk(&mut c, n.max(1), m * k * n, |i, row| {
        let a_row = &a[i * k..(i + 1) * k];
        for (p, &av) in a_row.iter().enumerate() {
            if av == T::zero() {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (cv, &bv) in row.iter_mut().zip(b_row) {
                *cv += av * bv;
            }
        }
    });
    c
}

/// `c[m×k] = a[m×n] · b[k×n]ᵀ`
pub fn matmul_nt<T: Real>(a: &[T], b: &[T], m: usize, n: usize, k: usize) -> Vec<T> {
    let mut c = vec![T::zero(); m * k];
    par::for_each_chunk(&mut c, k.max(1), m * k * n, |i, row| {
        let a_row = &a[i * n..(i + 1) * n];
        for (j, cv) in row.iter_mut().enumerate() {
            let b_row = &b[j * n..(j + 1) * n];
            *cv = a_row.iter().zip(b_row).map(|(&x, &y)| x * y).sum();
        }
    });
    c
}

/// `c[k×n] = a[m×k]ᵀ · b[m×n]`
pub fn matmul_tn<T: Real>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut c = vec![T::zero(); k * n];
    par::for_each_chunk(&mut c, n.max(1), m * k * n, |p, row| {
        for i in 0..m {
            let av = a[i * k + p];
            if av == T::zero() {
                continue;
            }
            let b_row = &b[i * n..(i + 1) * n];
            for (cv, &bv) in row.iter_mut().zip(b_row) {
                *cv += av * bv;
            }
        }
    });
    c
}

pub fn transpose<T: Real>(x: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = vec![T::zero(); rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = x[r * cols + c];
        }
    }
    out
}

/// Geometry of a grouped 2-D cross-correlation over a single `C×H×W` input.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub c_out: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeom {
    pub fn new(
        input: &[usize],
        weight: &[usize],
        stride: usize,
        padding: usize,
        groups: usize,
    ) -> Result<Self> {
        let &[c_in, h, w] = input else {
            return Err(Error::Dimension(format!(
                "conv2d input must be C×H×W, got {input:?}"
            )));
        };
        let &[c_out, c_in_g, kh, kw] = weight else {
            return Err(Error::Dimension(format!(
                "conv2d weight must be Cout×Cin/g×kh×kw, got {weight:?}"
            )));
        };
        if groups == 0 || stride == 0 {
            return Err(Error::Dimension("conv2d groups and stride must be ≥ 1".into()));
        }
        if c_in % groups != 0 || c_out % groups != 0 {
            return Err(Error::Dimension(format!(
                "conv2d channels in={c_in} out={c_out} not divisible by groups={groups}"
            )));
        }
        if c_in / groups != c_in_g {
            return Err(Error::Dimension(format!(
                "conv2d weight {weight:?} expects {c_in_g} input channels per group, input {input:?} with groups={groups} gives {}",
                c_in / groups
            )));
        }
        let span_h = h + 2 * padding;
        let span_w = w + 2 * padding;
        if span_h < kh || span_w < kw {
            return Err(Error::Dimension(format!(
                "conv2d kernel {kh}×{kw} larger than padded input {span_h}×{span_w}"
            )));
        }
        Ok(Self {
            c_in,
            h,
            w,
            c_out,
            kh,
            kw,
            stride,
            padding,
            groups,
            out_h: (span_h - kh) / stride + 1,
            out_w: (span_w - kw) / stride + 1,
        })
    }

    fn c_in_per_group(&self) -> usize {
        self.c_in / self.groups
    }

    fn c_out_per_group(&self) -> usize {
        self.c_out / self.groups
    }

    /// Input coordinate hit by output `o` at kernel tap `k`, if inside.
    #[inline]
    fn src(&self, o: usize, k: usize, extent: usize) -> Option<usize> {
        let pos = (o * self.stride + k) as isize - self.padding as isize;
        (pos >= 0 && (pos as usize) < extent).then_some(pos as usize)
    }

    fn work(&self) -> usize {
        self.c_out * self.c_in_per_group() * self.kh * self.kw * self.out_h * self.out_w
    }
}

pub fn conv2d_forward<T: Real>(
    x: &[T],
    weight: &[T],
    bias: Option<&[T]>,
    g: &ConvGeom,
) -> Vec<T> {
    let plane = g.out_h * g.out_w;
    let cig = g.c_in_per_group();
    let cog = g.c_out_per_group();
    let mut out = vec![T::zero(); g.c_out * plane];
    par::for_each_chunk(&mut out, plane, g.work(), |co, dst| {
        if let Some(b) = bias {
            dst.iter_mut().for_each(|v| *v = b[co]);
        }
        let group = co / cog;
        for cl in 0..cig {
            let ci = group * cig + cl;
            let src = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
            for ky in 0..g.kh {
                for kx in 0..g.kw {
                    let wv = weight[((co * cig + cl) * g.kh + ky) * g.kw + kx];
                    if wv == T::zero() {
                        continue;
                    }
                    for oy in 0..g.out_h {
                        let Some(iy) = g.src(oy, ky, g.h) else { continue };
                        let row = &src[iy * g.w..(iy + 1) * g.w];
                        let drow = &mut dst[oy * g.out_w..(oy + 1) * g.out_w];
                        for (ox, d) in drow.iter_mut().enumerate() {
                            if let Some(ix) = g.src(ox, kx, g.w) {
                                *d += wv * row[ix];
                            }
                        }
                    }
                }
            }
        }
    });
    out
}

/// Gradient with respect to the conv input.
pub fn conv2d_backward_input<T: Real>(dy: &[T], weight: &[T], g: &ConvGeom) -> Vec<T> {
    let plane_in = g.h * g.w;
    let plane_out = g.out_h * g.out_w;
    let cig = g.c_in_per_group();
    let cog = g.c_out_per_group();
    let mut dx = vec![T::zero(); g.c_in * plane_in];
    par::for_each_chunk(&mut dx, plane_in, g.work(), |ci, dst| {
        let group = ci / cig;
        let cl = ci % cig;
        for co in group * cog..(group + 1) * cog {
            let gy = &dy[co * plane_out..(co + 1) * plane_out];
            for ky in 0..g.kh {
                for kx in 0..g.kw {
                    let wv = weight[((co * cig + cl) * g.kh + ky) * g.kw + kx];
                    if wv == T::zero() {
                        continue;
                    }
                    for oy in 0..g.out_h {
                        let Some(iy) = g.src(oy, ky, g.h) else { continue };
                        for ox in 0..g.out_w {
                            if let Some(ix) = g.src(ox, kx, g.w) {
                                dst[iy * g.w + ix] += wv * gy[oy * g.out_w + ox];
                            }
                        }
                    }
                }
            }
        }
    });
    dx
}

/// Gradient with respect to the conv weight.
pub fn conv2d_backward_weight<T: Real>(dy: &[T], x: &[T], g: &ConvGeom) -> Vec<T> {
    let plane_in = g.h * g.w;
    let plane_out = g.out_h * g.out_w;
    let cig = g.c_in_per_group();
    let cog = g.c_out_per_group();
    let per_out = cig * g.kh * g.kw;
    let mut dw = vec![T::zero(); g.c_out * per_out];
    par::for_each_chunk(&mut dw, per_out, g.work(), |co, dst| {
        let group = co / cog;
        let gy = &dy[co * plane_out..(co + 1) * plane_out];
        for cl in 0..cig {
            let ci = group * cig + cl;
            let src = &x[ci * plane_in..(ci + 1) * plane_in];
            for ky in 0..g.kh {
                for kx in 0..g.kw {
                    let mut acc = T::zero();
                    for oy in 0..g.out_h {
                        let Some(iy) = g.src(oy, ky, g.h) else { continue };
                        for ox in 0..g.out_w {
                            if let Some(ix) = g.src(ox, kx, g.w) {
                                acc += gy[oy * g.out_w + ox] * src[iy * g.w + ix];
                            }
                        }
                    }
                    dst[(cl * g.kh + ky) * g.kw + kx] = acc;
                }
            }
        }
    });
    dw
}

pub fn conv2d_backward_bias<T: Real>(dy: &[T], g: &ConvGeom) -> Vec<T> {
    let plane = g.out_h * g.out_w;
    dy.chunks(plane).map(|c| c.iter().copied().sum()).collect()
}

/// Per-axis bilinear taps `(i0, i1, frac)` with half-pixel centers and edge
/// clamping: `src = (i + 0.5) · in / out − 0.5`.
pub fn bilinear_taps(input: usize, output: usize) -> Vec<(usize, usize, f64)> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|i| {
            let src = ((i as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(input - 1);
            let i1 = (i0 + 1).min(input - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

pub fn upsample_forward<T: Real>(
    x: &[T],
    c: usize,
    h: usize,
    w: usize,
    out_h: usize,
    out_w: usize,
) -> Vec<T> {
    let ty = bilinear_taps(h, out_h);
    let tx = bilinear_taps(w, out_w);
    let mut out = vec![T::zero(); c * out_h * out_w];
    par::for_each_chunk(&mut out, out_h * out_w, c * out_h * out_w * 4, |ch, dst| {
        let src = &x[ch * h * w..(ch + 1) * h * w];
        for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
            let fy = T::of(fy);
            for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                let fx = T::of(fx);
                let top = src[y0 * w + x0] * (T::one() - fx) + src[y0 * w + x1] * fx;
                let bot = src[y1 * w + x0] * (T::one() - fx) + src[y1 * w + x1] * fx;
                dst[oy * out_w + ox] = top * (T::one() - fy) + bot * fy;
            }
        }
    });
    out
}

pub fn upsample_backward<T: Real>(
    dy: &[T],
    c: usize,
    h: usize,
    w: usize,
    out_h: usize,
    out_w: usize,
) -> Vec<T> {
    let ty = bilinear_taps(h, out_h);
    let tx = bilinear_taps(w, out_w);
    let mut dx = vec![T::zero(); c * h * w];
    par::for_each_chunk(&mut dx, h * w, c * out_h * out_w * 4, |ch, dst| {
        let g = &dy[ch * out_h * out_w..(ch + 1) * out_h * out_w];
        for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
            let fy = T::of(fy);
            for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                let fx = T::of(fx);
                let v = g[oy * out_w + ox];
                let top = v * (T::one() - fy);
                let bot = v * fy;
                dst[y0 * w + x0] += top * (T::one() - fx);
                dst[y0 * w + x1] += top * fx;
                dst[y1 * w + x0] += bot * (T::one() - fx);
                dst[y1 * w + x1] += bot * fx;
            }
        }
    });
    dx
}

/// Softmax over the middle axis of an `outer × len × inner` layout.
pub fn softmax<T: Real>(x: &[T], outer: usize, len: usize, inner: usize) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |j: usize| (o * len + j) * inner + i;
            let max = (0..len).map(|j| x[at(j)]).fold(T::neg_infinity(), T::max);
            let mut sum = T::zero();
            for j in 0..len {
                let e = (x[at(j)] - max).exp();
                out[at(j)] = e;
                sum += e;
            }
            for j in 0..len {
                out[at(j)] /= sum;
            }
        }
    }
    out
}

pub fn softmax_backward<T: Real>(
    y: &[T],
    dy: &[T],
    outer: usize,
    len: usize,
    inner: usize,
) -> Vec<T> {
    let mut dx = vec![T::zero(); y.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |j: usize| (o * len + j) * inner + i;
            let dot: T = (0..len).map(|j| y[at(j)] * dy[at(j)]).sum();
            for j in 0..len {
                dx[at(j)] = y[at(j)] * (dy[at(j)] - dot);
            }
        }
    }
    dx
}

/// Row-wise layer normalization. Returns the output and, per row, the mean
/// and reciprocal standard deviation needed by the backward pass.
pub fn layer_norm<T: Real>(
    x: &[T],
    gamma: &[T],
    beta: &[T],
    rows: usize,
    cols: usize,
    eps: T,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let n = T::of(cols as f64);
    let mut out = vec![T::zero(); x.len()];
    let mut means = Vec::with_capacity(rows);
    let mut rstds = Vec::with_capacity(rows);
    for r in 0..rows {
        let row = &x[r * cols..(r + 1) * cols];
        let mean = row.iter().copied().sum::<T>() / n;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
        let rstd = T::one() / (var + eps).sqrt();
        for c in 0..cols {
            out[r * cols + c] = (row[c] - mean) * rstd * gamma[c] + beta[c];
        }
        means.push(mean);
        rstds.push(rstd);
    }
    (out, means, rstds)
}

/// Returns `(dx, dgamma, dbeta)`.
#[allow(clippy::too_many_arguments)]
pub fn layer_norm_backward<T: Real>(
    x: &[T],
    gamma: &[T],
    means: &[T],
    rstds: &[T],
    dy: &[T],
    rows: usize,
    cols: usize,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let n = T::of(cols as f64);
    let mut dx = vec![T::zero(); x.len()];
    let mut dgamma = vec![T::zero(); cols];
    let mut dbeta = vec![T::zero(); cols];
    let mut xhat = vec![T::zero(); cols];
    let mut dxhat = vec![T::zero(); cols];
    for r in 0..rows {
        let (mean, rstd) = (means[r], rstds[r]);
        for c in 0..cols {
            let i = r * cols + c;
            xhat[c] = (x[i] - mean) * rstd;
            dxhat[c] = dy[i] * gamma[c];
            dgamma[c] += dy[i] * xhat[c];
            dbeta[c] += dy[i];
        }
        let sum_d = dxhat.iter().copied().sum::<T>();
        let sum_dx = dxhat.iter().zip(&xhat).map(|(&a, &b)| a * b).sum::<T>();
        for c in 0..cols {
            dx[r * cols + c] = rstd / n * (n * dxhat[c] - sum_d - xhat[c] * sum_dx);
        }
    }
    (dx, dgamma, dbeta)
}

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;
const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// `x · Φ(x)` with the exact normal CDF.
#[inline]
pub fn gelu<T: Real>(x: T) -> T {
    x * T::of(0.5) * (T::one() + (x * T::of(FRAC_1_SQRT_2)).erf())
}

#[inline]
pub fn gelu_grad<T: Real>(x: T) -> T {
    let cdf = T::of(0.5) * (T::one() + (x * T::of(FRAC_1_SQRT_2)).erf());
    let pdf = T::of(FRAC_1_SQRT_2PI) * (-(x * x) * T::of(0.5)).exp();
    cdf + x * pdf
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_variants_agree() {
        let a: Vec<f64> = (0..6).map(|v| v as f64 - 2.0).collect(); // 2×3
        let b: Vec<f64> = (0..12).map(|v| (v as f64) * 0.5).collect(); // 3×4
        let c = matmul(&a, &b, 2, 3, 4);
        let bt = transpose(&b, 3, 4);
        assert_eq!(matmul_nt(&a, &bt, 2, 3, 4), c);
        let at = transpose(&a, 2, 3);
        assert_eq!(matmul_tn(&at, &b, 3, 2, 4), c);
    }

    #[test]
    fn conv_geometry_errors() {
        assert!(ConvGeom::new(&[3, 8, 8], &[4, 3, 3, 3], 1, 1, 1).is_ok());
        assert!(ConvGeom::new(&[3, 8, 8], &[4, 1, 3, 3], 1, 1, 2).is_err());
        assert!(ConvGeom::new(&[3, 2, 2], &[4, 3, 5, 5], 1, 0, 1).is_err());
        let g = ConvGeom::new(&[3, 64, 64], &[16, 3, 7, 7], 4, 3, 1).unwrap();
        assert_eq!((g.out_h, g.out_w), (16, 16));
    }

    #[test]
    fn taps_match_half_pixel_rule() {
        let t = bilinear_taps(2, 4);
        let v: Vec<f64> = t
            .iter()
            .map(|&(i0, i1, f)| [0.0, 1.0][i0] * (1.0 - f) + [0.0, 1.0][i1] * f)
            .collect();
        assert_eq!(v, vec![0.0, 0.25, 0.75, 1.0]);
    }
}
