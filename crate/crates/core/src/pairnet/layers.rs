//! Slice-level kernels: strided 3x3 convolution via im2col, dense layers and
//! their reverse-mode counterparts. All loops run in a fixed order so results
//! are bitwise reproducible.

use crate::scalar::Scalar;

pub(crate) const KERNEL: usize = 3;
pub(crate) const STRIDE: usize = 2;
pub(crate) const PAD: usize = 1;

pub(crate) fn conv_out(n: usize) -> usize {
    (n + 2 * PAD - KERNEL) / STRIDE + 1
}

/// Unfolds `[c, h, w]` into `[c * 9, oh * ow]` columns (zero padding).
pub(crate) fn im2col<T: Scalar>(x: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let (oh, ow) = (conv_out(h), conv_out(w));
    let p = oh * ow;
    let mut col = vec![T::zero(); c * KERNEL * KERNEL * p];
    for ci in 0..c {
        let plane = &x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = &mut col[((ci * KERNEL + ky) * KERNEL + kx) * p..][..p];
                for oy in 0..oh {
                    let iy = (oy * STRIDE + ky) as isize - PAD as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src = &plane[iy as usize * w..][..w];
                    let dst = &mut row[oy * ow..][..ow];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * STRIDE + kx) as isize - PAD as isize;
                        if ix >= 0 && ix < w as isize {
                            *d = src[ix as usize];
                        }
                    }
                }
            }
        }
    }
    col
}

/// Folds column gradients back onto the `[c, h, w]` input.
pub(crate) fn col2im<T: Scalar>(col: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let (oh, ow) = (conv_out(h), conv_out(w));
    let p = oh * ow;
    let mut x = vec![T::zero(); c * h * w];
    for ci in 0..c {
        let plane = &mut x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = &col[((ci * KERNEL + ky) * KERNEL + kx) * p..][..p];
                for oy in 0..oh {
                    let iy = (oy * STRIDE + ky) as isize - PAD as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for ox in 0..ow {
                        let ix = (ox * STRIDE + kx) as isize - PAD as isize;
                        if ix >= 0 && ix < w as isize {
                            plane[iy as usize * w + ix as usize] += row[oy * ow + ox];
                        }
                    }
                }
            }
        }
    }
    x
}

/// `out[o][p] = bias[o] + sum_k weight[o][k] * col[k][p]`.
pub(crate) fn matmul_bias<T: Scalar>(
    weight: &[T],
    bias: &[T],
    col: &[T],
    k: usize,
    p: usize,
) -> Vec<T> {
    let o = bias.len();
    let mut out = vec![T::zero(); o * p];
    for oi in 0..o {
        let dst = &mut out[oi * p..(oi + 1) * p];
        dst.iter_mut().for_each(|v| *v = bias[oi]);
        for ki in 0..k {
            let wv = weight[oi * k + ki];
            let src = &col[ki * p..(ki + 1) * p];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d += wv * s;
            }
        }
    }
    out
}

const LANES: usize = 8;

/// Eight interleaved partial sums combined in a fixed order; vectorizes while
/// staying bitwise reproducible.
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut lanes = [T::zero(); LANES];
    let split = n - n % LANES;
    for (ca, cb) in a[..split]
        .chunks_exact(LANES)
        .zip(b[..split].chunks_exact(LANES))
    {
        for l in 0..LANES {
            lanes[l] += ca[l] * cb[l];
        }
    }
    let mut acc = T::zero();
    for v in lanes {
        acc += v;
    }
    for (&x, &y) in a[split..].iter().zip(&b[split..]) {
        acc += x * y;
    }
    acc
}

/// Accumulates weight/bias gradients of `matmul_bias` and returns the column
/// gradient when `want_input` is set.
pub(crate) fn matmul_backward<T: Scalar>(
    weight: &[T],
    col: &[T],
    dout: &[T],
    k: usize,
    p: usize,
    dweight: &mut [T],
    dbias: &mut [T],
    want_input: bool,
) -> Option<Vec<T>> {
    let o = dbias.len();
    for oi in 0..o {
        let g = &dout[oi * p..(oi + 1) * p];
        let mut s = T::zero();
        for &v in g {
            s += v;
        }
        dbias[oi] += s;
        for ki in 0..k {
            dweight[oi * k + ki] += dot(g, &col[ki * p..(ki + 1) * p]);
        }
    }
    if !want_input {
        return None;
    }
    let mut dcol = vec![T::zero(); k * p];
    for oi in 0..o {
        let g = &dout[oi * p..(oi + 1) * p];
        for ki in 0..k {
            let wv = weight[oi * k + ki];
            let dst = &mut dcol[ki * p..(ki + 1) * p];
            for (d, &s) in dst.iter_mut().zip(g) {
                *d += wv * s;
            }
        }
    }
    Some(dcol)
}

/// `y = W x + b` for a row-major `[out, in]` weight.
pub(crate) fn dense<T: Scalar>(weight: &[T], bias: &[T], x: &[T]) -> Vec<T> {
    let n_in = x.len();
    bias.iter()
        .enumerate()
        .map(|(o, &b)| b + dot(&weight[o * n_in..(o + 1) * n_in], x))
        .collect()
}

/// Accumulates `dW += dy x^T`, `db += dy` and returns `W^T dy`.
pub(crate) fn dense_backward<T: Scalar>(
    weight: &[T],
    x: &[T],
    dy: &[T],
    dweight: &mut [T],
    dbias: &mut [T],
) -> Vec<T> {
    let n_in = x.len();
    let mut dx = vec![T::zero(); n_in];
    for (o, &g) in dy.iter().enumerate() {
        dbias[o] += g;
        let row = &weight[o * n_in..(o + 1) * n_in];
        let drow = &mut dweight[o * n_in..(o + 1) * n_in];
        for i in 0..n_in {
            drow[i] += g * x[i];
            dx[i] += g * row[i];
        }
    }
    dx
}

pub(crate) fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct strided convolution with explicit bounds checks.
    fn naive_conv(
        x: &[f64],
        c: usize,
        h: usize,
        w: usize,
        weight: &[f64],
        bias: &[f64],
    ) -> Vec<f64> {
        let (oh, ow) = (conv_out(h), conv_out(w));
        let mut out = Vec::new();
        for (o, &b) in bias.iter().enumerate() {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = b;
                    for ci in 0..c {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let iy = (oy * 2 + ky) as isize - 1;
                                let ix = (ox * 2 + kx) as isize - 1;
                                if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                    acc += weight[((o * c + ci) * 3 + ky) * 3 + kx]
                                        * x[(ci * h + iy as usize) * w + ix as usize];
                                }
                            }
                        }
                    }
                    out.push(acc);
                }
            }
        }
        out
    }

    #[test]
    fn im2col_conv_matches_naive() {
        let (c, h, w, o) = (3, 7, 6, 4);
        let x: Vec<f64> = (0..c * h * w)
            .map(|i| ((i * 31) % 17) as f64 / 17.0 - 0.4)
            .collect();
        let weight: Vec<f64> = (0..o * c * 9)
            .map(|i| ((i * 13) % 11) as f64 / 11.0 - 0.5)
            .collect();
        let bias = vec![0.1, -0.2, 0.3, 0.0];
        let col = im2col(&x, c, h, w);
        let got = matmul_bias(&weight, &bias, &col, c * 9, conv_out(h) * conv_out(w));
        let want = naive_conv(&x, c, h, w, &weight, &bias);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), y> == <x, col2im(y)>
        let (c, h, w) = (2, 5, 8);
        let x: Vec<f64> = (0..c * h * w).map(|i| (i as f64 * 0.37).sin()).collect();
        let k = c * 9 * conv_out(h) * conv_out(w);
        let y: Vec<f64> = (0..k).map(|i| (i as f64 * 0.11).cos()).collect();
        let lhs = dot(&im2col(&x, c, h, w), &y);
        let rhs = dot(&x, &col2im(&y, c, h, w));
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0f64), 0.5);
        assert!(sigmoid(-800.0f64) >= 0.0);
        assert_eq!(sigmoid(800.0f64), 1.0);
        assert!((sigmoid(2.0f64) + sigmoid(-2.0f64) - 1.0).abs() < 1e-15);
    }
}
