//! Small dense linear algebra on row-major slices.
//!
//! The spatial Jacobian of the encoder is lower triangular, so every solve in
//! the hot path is a forward substitution. Nothing here forms an inverse.

use alloc::vec;
use alloc::vec::Vec;

/// Solves `L * Y = B` in place for lower-triangular `L` (`n x n`), where `B`
/// is `n x m` row-major and is overwritten by `Y`.
///
/// Returns `false` if a diagonal entry is zero or the result is non-finite.
pub fn forward_substitute(l: &[f64], n: usize, b: &mut [f64], m: usize) -> bool {
    debug_assert_eq!(l.len(), n * n);
    debug_assert_eq!(b.len(), n * m);
    for row in 0..n {
        for prev in 0..row {
            let f = l[row * n + prev];
            if f != 0.0 {
                let (done, rest) = b.split_at_mut(row * m);
                let src = &done[prev * m..prev * m + m];
                for (dst, s) in rest[..m].iter_mut().zip(src) {
                    *dst -= f * s;
                }
            }
        }
        let d = l[row * n + row];
        if d == 0.0 || !d.is_finite() {
            return false;
        }
        for v in &mut b[row * m..row * m + m] {
            *v /= d;
        }
    }
    b.iter().all(|v| v.is_finite())
}

/// Determinant of a general square matrix via partial-pivot elimination.
pub fn determinant(a: &[f64], n: usize) -> f64 {
    let mut m = a.to_vec();
    let mut det = 1.0;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i * n + col].abs().total_cmp(&m[j * n + col].abs()))
            .unwrap_or(col);
        let p = m[pivot * n + col];
        if p == 0.0 {
            return 0.0;
        }
        if pivot != col {
            for k in 0..n {
                m.swap(pivot * n + k, col * n + k);
            }
            det = -det;
        }
        det *= p;
        for row in col + 1..n {
            let f = m[row * n + col] / p;
            if f != 0.0 {
                for k in col..n {
                    m[row * n + k] -= f * m[col * n + k];
                }
            }
        }
    }
    det
}

/// Column `col` of the `n x n` row-major matrix `a`, with its components along
/// every other column removed (modified Gram-Schmidt).
///
/// Returns `None` when the remainder vanishes relative to the original column.
pub fn orthogonalized_column(a: &[f64], n: usize, col: usize) -> Option<Vec<f64>> {
    let column = |j: usize| -> Vec<f64> { (0..n).map(|r| a[r * n + j]).collect() };
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n.saturating_sub(1));
    for j in (0..n).filter(|&j| j != col) {
        let mut v = column(j);
        for q in &basis {
            let d = dot(&v, q);
            v.iter_mut().zip(q).for_each(|(x, y)| *x -= d * y);
        }
        let norm = dot(&v, &v).sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    let target = column(col);
    let scale = dot(&target, &target).sqrt();
    let mut v = target;
    // two passes keep the result orthogonal to working precision
    for _ in 0..2 {
        for q in &basis {
            let d = dot(&v, q);
            v.iter_mut().zip(q).for_each(|(x, y)| *x -= d * y);
        }
    }
    let norm = dot(&v, &v).sqrt();
    if !(norm > 1e-14 * scale) || scale == 0.0 {
        return None;
    }
    Some(v)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `n x n` identity, row-major.
pub fn identity(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = 1.0;
    }
    m
}
