//! 3×3 zero-padded convolutions on `[channels, height, width]` buffers via
//! im2col and GEMM, and their exact adjoints.

use crate::tracking::BufferToken;

pub const KSIZE: usize = 3;
pub const KAREA: usize = KSIZE * KSIZE;

/// A stack of `channels` real planes in row-major `[c][y][x]` order.
#[derive(Debug, Clone)]
pub struct FeatureMap {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
    _token: BufferToken,
}

impl FeatureMap {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self::from_vec(channels, height, width, vec![0.0; channels * height * width])
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), channels * height * width);
        FeatureMap {
            channels,
            height,
            width,
            data,
            _token: BufferToken::new(channels),
        }
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let p = self.plane_len();
        &self.data[c * p..(c + 1) * p]
    }
}

/// Unfolds `input` into a `[channels·9, h·w]` matrix whose row
/// `i·9 + ky·3 + kx` holds the input shifted by `(ky − 1, kx − 1)`.
pub fn im2col(input: &FeatureMap) -> FeatureMap {
    let (h, w) = (input.height, input.width);
    let mut col = FeatureMap::zeros(input.channels * KAREA, h, w);
    let p = h * w;
    for i in 0..input.channels {
        let src = input.plane(i);
        for ky in 0..KSIZE {
            for kx in 0..KSIZE {
                let row = &mut col.data[(i * KAREA + ky * KSIZE + kx) * p..][..p];
                let (y0, y1) = (1usize.saturating_sub(ky), (h + 1 - ky).min(h));
                let (x0, x1) = (1usize.saturating_sub(kx), (w + 1 - kx).min(w));
                for y in y0..y1 {
                    let sy = y + ky - 1;
                    let dst = &mut row[y * w + x0..y * w + x1];
                    let s = &src[sy * w + x0 + kx - 1..sy * w + x1 + kx - 1];
                    dst.copy_from_slice(s);
                }
            }
        }
    }
    col
}

/// Adjoint of [`im2col`]: scatters and sums the unfolded rows back into
/// `channels` planes.
pub fn col2im(col: &FeatureMap, channels: usize) -> FeatureMap {
    let (h, w) = (col.height, col.width);
    let mut out = FeatureMap::zeros(channels, h, w);
    let p = h * w;
    for i in 0..channels {
        let dst = &mut out.data[i * p..(i + 1) * p];
        for ky in 0..KSIZE {
            for kx in 0..KSIZE {
                let row = &col.data[(i * KAREA + ky * KSIZE + kx) * p..][..p];
                let (y0, y1) = (1usize.saturating_sub(ky), (h + 1 - ky).min(h));
                let (x0, x1) = (1usize.saturating_sub(kx), (w + 1 - kx).min(w));
                for y in y0..y1 {
                    let sy = y + ky - 1;
                    let s = &row[y * w + x0..y * w + x1];
                    let d = &mut dst[sy * w + x0 + kx - 1..sy * w + x1 + kx - 1];
                    for (a, b) in d.iter_mut().zip(s) {
                        *a += b;
                    }
                }
            }
        }
    }
    out
}

/// `C (m×n) = alpha · op(A) · op(B) + beta · C` on row-major slices, with
/// transposition expressed through strides.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], a_trans: bool, b: &[f64], b_trans: bool, beta: f64, c: &mut [f64]) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if a_trans { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_trans { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserts above bound every index the strides can produce.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `out[o] = Σ_i W[o, i] ⋆ input[i] + bias[o]` with weight layout
/// `[out][in][ky][kx]`.
pub fn conv_forward(input: &FeatureMap, weight: &[f64], bias: &[f64], out_ch: usize) -> FeatureMap {
    let col = im2col(input);
    conv_forward_col(&col, weight, bias, out_ch)
}

pub fn conv_forward_col(col: &FeatureMap, weight: &[f64], bias: &[f64], out_ch: usize) -> FeatureMap {
    let p = col.plane_len();
    let k = col.channels;
    let mut out = FeatureMap::zeros(out_ch, col.height, col.width);
    for (o, &b) in bias.iter().enumerate() {
        out.data[o * p..(o + 1) * p].fill(b);
    }
    gemm(out_ch, k, p, weight, false, &col.data, false, 1.0, &mut out.data);
    out
}

/// Adjoint of the linear part of [`conv_forward`] (the transposed convolution
/// with the same kernels).
pub fn conv_transpose(grad_out: &FeatureMap, weight: &[f64], in_ch: usize) -> FeatureMap {
    let p = grad_out.plane_len();
    let k = in_ch * KAREA;
    let mut dcol = FeatureMap::zeros(k, grad_out.height, grad_out.width);
    gemm(
        k,
        grad_out.channels,
        p,
        weight,
        true,
        &grad_out.data,
        false,
        0.0,
        &mut dcol.data,
    );
    col2im(&dcol, in_ch)
}

/// Accumulates `∂/∂W += grad_out · colᵀ` and `∂/∂b += Σ_p grad_out`.
pub fn conv_param_grad(grad_out: &FeatureMap, col: &FeatureMap, dweight: &mut [f64], dbias: &mut [f64]) {
    let p = grad_out.plane_len();
    gemm(
        grad_out.channels,
        p,
        col.channels,
        &grad_out.data,
        false,
        &col.data,
        true,
        1.0,
        dweight,
    );
    for (o, db) in dbias.iter_mut().enumerate() {
        *db += grad_out.data[o * p..(o + 1) * p].iter().sum::<f64>();
    }
}
