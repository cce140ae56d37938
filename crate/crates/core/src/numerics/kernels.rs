//! Slice-level arithmetic shared by the graph ops and the cached decoder.
//!
//! All loops run in a fixed order so that computing one row here gives the
//! same bits as computing the same row inside a larger batch.

use super::Real;

/// `out[m×n] = a[m×k] · b[k×n]`, accumulated in i-k-j order.
///
/// Zero entries of `a` are skipped; this only changes the sign of exact
/// zeros and lets masked attention rows cost nothing past the diagonal.
pub fn matmul(a: &[Real], b: &[Real], m: usize, k: usize, n: usize) -> Vec<Real> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += aip * bv;
            }
        }
    }
    out
}

pub fn transpose(a: &[Real], rows: usize, cols: usize) -> Vec<Real> {
    let mut out = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = a[i * cols + j];
        }
    }
    out
}

/// Softmax over the entries of `row` flagged visible; hidden entries are 0.
///
/// Returns `false` when nothing is visible.
pub fn softmax_visible(row: &[Real], visible: &[bool], out: &mut [Real]) -> bool {
    let mut max = Real::NEG_INFINITY;
    for (&x, &v) in row.iter().zip(visible) {
        if v && x > max {
            max = x;
        }
    }
    if max == Real::NEG_INFINITY {
        return false;
    }
    let mut sum = 0.0;
    for ((o, &x), &v) in out.iter_mut().zip(row).zip(visible) {
        if v {
            *o = (x - max).exp();
            sum += *o;
        } else {
            *o = 0.0;
        }
    }
    for (o, &v) in out.iter_mut().zip(visible) {
        if v {
            *o /= sum;
        }
    }
    true
}

/// Layer norm of one row. Returns `(mean, 1/sqrt(var + eps))`.
pub fn layer_norm_row(
    x: &[Real],
    gain: &[Real],
    bias: &[Real],
    eps: Real,
    out: &mut [Real],
) -> (Real, Real) {
    let d = x.len() as Real;
    let mean = x.iter().sum::<Real>() / d;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<Real>() / d;
    let rstd = 1.0 / (var + eps).sqrt();
    for (j, o) in out.iter_mut().enumerate() {
        *o = (x[j] - mean) * rstd * gain[j] + bias[j];
    }
    (mean, rstd)
}

const GELU_C: Real = 0.797_884_560_802_865_4; // sqrt(2/pi)

/// Tanh-approximated GELU.
pub fn gelu(x: Real) -> Real {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

pub fn gelu_grad(x: Real) -> Real {
    let inner = GELU_C * (x + 0.044715 * x * x * x);
    let t = inner.tanh();
    let dinner = GELU_C * (1.0 + 3.0 * 0.044715 * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner
}

pub fn relu(x: Real) -> Real {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// Adds `bias` to every row of `x` in place.
pub fn add_row_inplace(x: &mut [Real], bias: &[Real]) {
    let d = bias.len();
    for row in x.chunks_mut(d) {
        for (v, b) in row.iter_mut().zip(bias) {
            *v += b;
        }
    }
}

/// Log-sum-exp of a row, stabilized by its maximum.
pub fn log_sum_exp(row: &[Real]) -> Real {
    let max = row.iter().copied().fold(Real::NEG_INFINITY, Real::max);
    max + row.iter().map(|v| (v - max).exp()).sum::<Real>().ln()
}

/// Index of the largest value; ties resolve to the lowest index.
pub fn argmax(row: &[Real]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}
