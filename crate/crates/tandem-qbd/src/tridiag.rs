//! Sturm-sequence bisection for symmetric tridiagonal eigenvalues.
//!
//! The characteristic matrices of this crate are tridiagonal with positive
//! off-diagonals, hence similar to symmetric tridiagonal matrices; their
//! eigenvalues are computed here with certified bisection brackets.

const PIVOT_GUARD: f64 = 1e-300;

/// Number of eigenvalues strictly below `x`, via the LDL^T pivot signs.
pub fn sturm_count(diag: &[f64], off: f64, x: f64) -> usize {
    let n = diag.len();
    if n == 0 {
        return 0;
    }
    let off2 = off * off;
    let mut count = 0usize;
    let mut q = diag[0] - x;
    if q < 0.0 {
        count += 1;
    }
    for d in &diag[1..] {
        let q_safe = if q.abs() < PIVOT_GUARD {
            if q >= 0.0 {
                PIVOT_GUARD
            } else {
                -PIVOT_GUARD
            }
        } else {
            q
        };
        q = (d - x) - off2 / q_safe;
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

fn gershgorin_bounds(diag: &[f64], off: f64) -> (f64, f64) {
    let n = diag.len();
    let e = off.abs();
    let mut lo = f64::MAX;
    let mut hi = f64::MIN;
    for (i, &d) in diag.iter().enumerate() {
        let r = match (i > 0, i + 1 < n) {
            (true, true) => 2.0 * e,
            (false, false) => 0.0,
            _ => e,
        };
        lo = lo.min(d - r);
        hi = hi.max(d + r);
    }
    (lo - 1.0, hi + 1.0)
}

/// The `k`-th smallest eigenvalue (0-based), bisected to machine precision.
pub fn eigenvalue_k(diag: &[f64], off: f64, k: usize) -> f64 {
    assert!(k < diag.len(), "eigenvalue index out of range");
    if diag.len() == 1 {
        return diag[0];
    }
    let (mut a, mut b) = gershgorin_bounds(diag, off);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if (b - a) < 2.0 * f64::EPSILON * mid.abs().max(1.0) {
            break;
        }
        if sturm_count(diag, off, mid) <= k {
            a = mid;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}

/// Largest eigenvalue.
pub fn largest_eigenvalue(diag: &[f64], off: f64) -> f64 {
    eigenvalue_k(diag, off, diag.len() - 1)
}

/// All eigenvalues in ascending order.
pub fn eigenvalues(diag: &[f64], off: f64) -> Vec<f64> {
    (0..diag.len())
        .map(|k| eigenvalue_k(diag, off, k))
        .collect()
}
