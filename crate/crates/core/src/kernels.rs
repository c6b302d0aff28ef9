//! Raw loops behind the tensor primitives.
//!
//! Inner loops are written as `row += scalar * row` or as four-lane dot
//! products so that LLVM vectorizes them without reassociating reductions.

/// `c[m×n] += a[m×k] · b[k×n]`.
pub fn matmul_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let c_row = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                *cv += aip * bv;
            }
        }
    }
}

/// `c[m×n] += aᵀ · b` where `a` is stored as `k×m`.
pub fn matmul_at_b_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    for p in 0..k {
        let b_row = &b[p * n..(p + 1) * n];
        for i in 0..m {
            let api = a[p * m + i];
            if api == 0.0 {
                continue;
            }
            let c_row = &mut c[i * n..(i + 1) * n];
            for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                *cv += api * bv;
            }
        }
    }
}

/// `c[m×n] += a · bᵀ` where `b` is stored as `n×k`.
pub fn matmul_a_bt_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        for j in 0..n {
            c[i * n + j] += dot(a_row, &b[j * k..(j + 1) * k]);
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Geometry of a batched, multi-channel, valid-padding 1-D convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub batch: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub in_len: usize,
}

impl ConvGeometry {
    pub fn out_len(&self) -> usize {
        (self.in_len - self.kernel) / self.stride + 1
    }

    fn patch(&self) -> usize {
        self.in_channels * self.kernel
    }
}

/// Unfolds one batch item `x[c_in×t_in]` into `cols[(c_in·k)×t_out]`.
fn im2col(g: &ConvGeometry, x: &[f64], cols: &mut [f64]) {
    let t_out = g.out_len();
    for c in 0..g.in_channels {
        let x_row = &x[c * g.in_len..(c + 1) * g.in_len];
        for j in 0..g.kernel {
            let dst = &mut cols[(c * g.kernel + j) * t_out..(c * g.kernel + j + 1) * t_out];
            for (t, d) in dst.iter_mut().enumerate() {
                *d = x_row[t * g.stride + j];
            }
        }
    }
}

/// Forward pass: `x[b×c_in×t_in]`, `w[c_out×c_in×k]` → `y[b×c_out×t_out]`.
pub fn conv1d_forward(g: &ConvGeometry, x: &[f64], w: &[f64]) -> Vec<f64> {
    let t_out = g.out_len();
    let patch = g.patch();
    let mut y = vec![0.0; g.batch * g.out_channels * t_out];
    let mut cols = vec![0.0; patch * t_out];
    for b in 0..g.batch {
        im2col(g, &x[b * g.in_channels * g.in_len..(b + 1) * g.in_channels * g.in_len], &mut cols);
        let y_b = &mut y[b * g.out_channels * t_out..(b + 1) * g.out_channels * t_out];
        matmul_acc(w, &cols, y_b, g.out_channels, patch, t_out);
    }
    y
}

/// Backward pass. Accumulates into `grad_w` and, when given, `grad_x`.
pub fn conv1d_backward(
    g: &ConvGeometry,
    x: &[f64],
    w: &[f64],
    grad_y: &[f64],
    grad_w: Option<&mut [f64]>,
    grad_x: Option<&mut [f64]>,
) {
    let t_out = g.out_len();
    let patch = g.patch();
    let x_item = g.in_channels * g.in_len;
    let y_item = g.out_channels * t_out;

    if let Some(gw) = grad_w {
        let mut cols = vec![0.0; patch * t_out];
        for b in 0..g.batch {
            im2col(g, &x[b * x_item..(b + 1) * x_item], &mut cols);
            matmul_a_bt_acc(&grad_y[b * y_item..(b + 1) * y_item], &cols, gw, g.out_channels, t_out, patch);
        }
    }

    if let Some(gx) = grad_x {
        let mut grad_cols = vec![0.0; patch * t_out];
        for b in 0..g.batch {
            grad_cols.iter_mut().for_each(|v| *v = 0.0);
            matmul_at_b_acc(w, &grad_y[b * y_item..(b + 1) * y_item], &mut grad_cols, patch, g.out_channels, t_out);
            let gx_b = &mut gx[b * x_item..(b + 1) * x_item];
            for c in 0..g.in_channels {
                for j in 0..g.kernel {
                    let src = &grad_cols[(c * g.kernel + j) * t_out..(c * g.kernel + j + 1) * t_out];
                    let dst = &mut gx_b[c * g.in_len..(c + 1) * g.in_len];
                    for (t, &v) in src.iter().enumerate() {
                        dst[t * g.stride + j] += v;
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    c[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        c
    }

    #[test]
    fn matmul_variants_agree_with_naive() {
        for (m, k, n) in [(3, 5, 4), (7, 9, 11), (8, 3, 8), (1, 1, 1)] {
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64 * 0.91).cos()).collect();
        let expect = naive_matmul(&a, &b, m, k, n);

        let mut c = vec![0.0; m * n];
        matmul_acc(&a, &b, &mut c, m, k, n);
        let close = |x: &[f64]| x.iter().zip(&expect).all(|(u, v)| (u - v).abs() < 1e-12);
        assert!(close(&c));

        let mut at = vec![0.0; k * m];
        for i in 0..m {
            for p in 0..k {
                at[p * m + i] = a[i * k + p];
            }
        }
        let mut c = vec![0.0; m * n];
        matmul_at_b_acc(&at, &b, &mut c, m, k, n);
        assert!(close(&c));

        let mut bt = vec![0.0; n * k];
        for p in 0..k {
            for j in 0..n {
                bt[j * k + p] = b[p * n + j];
            }
        }
        let mut c = vec![0.0; m * n];
        matmul_a_bt_acc(&a, &bt, &mut c, m, k, n);
        assert!(close(&c));
        }
    }

    #[test]
    fn dot_handles_tails() {
        let a: Vec<f64> = (1..=7).map(f64::from).collect();
        assert_eq!(dot(&a, &a), 140.0);
    }
}
