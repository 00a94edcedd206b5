//! Small dense helpers on row-major `Vec<f64>` matrices.
//!
//! Dimensions here are tiny (d ≤ 5, m ≤ 9), so plain slices beat pulling a
//! matrix type through every hot loop.

/// `out = A x` for row-major `A` of shape `rows × cols`.
pub fn matvec(a: &[f64], rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.len(), rows * cols);
    debug_assert_eq!(x.len(), cols);
    a.chunks_exact(cols)
        .map(|row| row.iter().zip(x).map(|(w, v)| w * v).sum())
        .collect()
}

/// `out = Aᵀ g` for row-major `A` of shape `rows × cols`.
pub fn matvec_t(a: &[f64], rows: usize, cols: usize, g: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.len(), rows * cols);
    debug_assert_eq!(g.len(), rows);
    let mut out = vec![0.0; cols];
    for (row, gi) in a.chunks_exact(cols).zip(g) {
        for (o, w) in out.iter_mut().zip(row) {
            *o += w * gi;
        }
    }
    out
}

/// Solves `L w = b` for lower-triangular row-major `L` (d × d).
pub fn solve_lower(l: &[f64], d: usize, b: &[f64]) -> Vec<f64> {
    let mut w = vec![0.0; d];
    for r in 0..d {
        let row = &l[r * d..r * d + r];
        let s: f64 = row.iter().zip(&w).map(|(a, x)| a * x).sum();
        w[r] = (b[r] - s) / l[r * d + r];
    }
    w
}

/// Lower Cholesky factor of a symmetric positive-definite row-major matrix.
/// Returns `None` if a pivot is not strictly positive.
pub fn cholesky(a: &[f64], d: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut s = a[i * d + j];
            for k in 0..j {
                s -= l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if !(s > 0.0) {
                    return None;
                }
                l[i * d + i] = s.sqrt();
            } else {
                l[i * d + j] = s / l[j * d + j];
            }
        }
    }
    Some(l)
}

/// `L Lᵀ` for a row-major lower-triangular `L`.
pub fn lower_outer(l: &[f64], d: usize) -> Vec<f64> {
    let mut s = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            s[i * d + j] = (0..=i.min(j)).map(|k| l[i * d + k] * l[j * d + k]).sum();
        }
    }
    s
}
