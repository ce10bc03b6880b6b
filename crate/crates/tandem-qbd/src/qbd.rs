//! Generic finite-phase QBD solvers: the R-matrix fixed point, the stationary
//! distribution built on it, and dense eigenvalue extraction.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::model::QbdBlocks;

/// Minimal nonnegative solution of `Q0 + R Q1 + R^2 Q2 = 0`.
#[derive(Debug, Clone)]
pub struct RSolution {
    pub r: DMatrix<f64>,
    pub spectral_radius: f64,
    pub iterations: usize,
    /// Max-abs entry of `Q0 + R Q1 + R^2 Q2` for the returned iterate.
    pub residual: f64,
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |acc, &v| acc.max(v.abs()))
}

/// Natural fixed-point iteration `R <- -(Q0 + R^2 Q2) Q1^{-1}` from `R = 0`.
///
/// Iterates are entrywise nondecreasing and converge to the minimal
/// nonnegative solution; the loop stops only once both the successive
/// difference and the defining-equation residual are below `tol`.
pub fn solve_r(blocks: &QbdBlocks, tol: f64) -> Result<RSolution> {
    solve_r_capped(blocks, tol, 1_000_000)
}

/// [`solve_r`] with an explicit iteration cap.
pub fn solve_r_capped(blocks: &QbdBlocks, tol: f64, cap: usize) -> Result<RSolution> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter("tol must be positive".into()));
    }
    let n = blocks.phase_count;
    let q1_t_lu = blocks.q1.transpose().lu();
    if !q1_t_lu.is_invertible() {
        return Err(Error::Singular("solve_r: Q1"));
    }
    let mut r = DMatrix::zeros(n, n);
    let mut residual = max_abs(&blocks.q0);
    let divergence_bound = 1e6 * n as f64;
    for it in 1..=cap {
        // X Q1 = -(Q0 + R^2 Q2)  solved via the transposed system.
        let rhs = -(&blocks.q0 + &r * &r * &blocks.q2);
        let next_t = q1_t_lu
            .solve(&rhs.transpose())
            .ok_or(Error::Singular("solve_r: Q1"))?;
        let next = next_t.transpose();
        let diff = max_abs(&(&next - &r));
        if it % 10 == 0 {
            let slack = 1e-13 * (1.0 + max_abs(&next));
            for (a, b) in r.iter().zip(next.iter()) {
                debug_assert!(*b >= *a - slack, "R iteration lost monotonicity");
            }
            if next.sum() > divergence_bound {
                return Err(Error::IterationCap {
                    cap: it,
                    context: "solve_r diverged (entry sum exceeded bound)",
                    residual,
                });
            }
        }
        r = next;
        if diff < tol {
            residual = max_abs(&(&blocks.q0 + &r * &blocks.q1 + &r * &r * &blocks.q2));
            if residual < tol {
                let spectral_radius = spectral_radius(&r)?;
                return Ok(RSolution {
                    r,
                    spectral_radius,
                    iterations: it,
                    residual,
                });
            }
        }
    }
    Err(Error::IterationCap {
        cap,
        context: "solve_r",
        residual,
    })
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64> {
    Ok(eigen_spectrum(m)?.first().map(|c| c.norm()).unwrap_or(0.0))
}

/// Full complex spectrum of a real square matrix, sorted by modulus
/// (descending, deterministic tie-break).
pub fn eigen_spectrum(m: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    let schur = m
        .clone()
        .try_schur(1e-14, 100_000)
        .ok_or(Error::EigenFailure("Schur iteration did not converge"))?;
    let mut eigs: Vec<Complex<f64>> = schur.complex_eigenvalues().iter().copied().collect();
    eigs.sort_by(|a, b| {
        b.norm()
            .partial_cmp(&a.norm())
            .unwrap()
            .then(b.re.partial_cmp(&a.re).unwrap())
            .then(b.im.partial_cmp(&a.im).unwrap())
    });
    Ok(eigs)
}

/// Roots of `det(Q0 + z Q1 + z^2 Q2)` strictly inside the unit circle,
/// computed from the companion linearization of the quadratic pencil.
/// These are exactly the eigenvalues of both `R` and `H` for a stable
/// irreducible QBD.
pub fn characteristic_roots(blocks: &QbdBlocks) -> Result<Vec<Complex<f64>>> {
    let n = blocks.phase_count;
    let q2_t_lu = blocks.q2.transpose().lu();
    if !q2_t_lu.is_invertible() {
        return Err(Error::Singular("characteristic_roots: Q2"));
    }
    let w_q0 = q2_t_lu
        .solve(&blocks.q0.transpose())
        .ok_or(Error::Singular("characteristic_roots: Q2"))?;
    let w_q1 = q2_t_lu
        .solve(&blocks.q1.transpose())
        .ok_or(Error::Singular("characteristic_roots: Q2"))?;
    let mut companion = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        companion[(i, n + i)] = 1.0;
    }
    companion.view_mut((n, 0), (n, n)).copy_from(&(-&w_q0));
    companion.view_mut((n, n), (n, n)).copy_from(&(-&w_q1));
    let mut roots = eigen_spectrum(&companion)?;
    roots.retain(|z| z.norm() < 1.0 - 1e-8);
    Ok(roots)
}

/// Eigenvalue moduli above `cutoff`, sorted ascending. The structural zero
/// eigenvalues of the rate and ladder matrices sit in defective clusters
/// which dense eigensolvers resolve only to about eps^(1/multiplicity), so a
/// cutoff is needed to separate them from the genuine spectrum.
pub fn nonzero_eigenvalue_moduli(m: &DMatrix<f64>, cutoff: f64) -> Result<Vec<f64>> {
    let mut v: Vec<f64> = eigen_spectrum(m)?
        .iter()
        .map(|c| c.norm())
        .filter(|&x| x > cutoff)
        .collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(v)
}

/// Stationary distribution in matrix-geometric form, emitted up to a level
/// cap: `pi_k = pi_0 R^k` with `pi_0 = y_0 / (y_0 nu)`, `nu = (I-R)^{-1} 1`.
#[derive(Debug, Clone)]
pub struct StationaryDistribution {
    /// Level vectors `pi_0 ..= pi_L`.
    pub pi: Vec<DVector<f64>>,
    pub level_cap: usize,
    /// `|1 - (emitted mass + geometric tail bound)|`.
    pub normalization_error: f64,
}

impl StationaryDistribution {
    /// Marginal probability of each emitted level.
    pub fn level_marginals(&self) -> Vec<f64> {
        self.pi.iter().map(|v| v.sum()).collect()
    }
}

/// Left null vector of a conservative generator-like matrix (unique up to
/// scale for an irreducible one), found by fixing the first component to 1
/// and solving the reduced system; the full residual is verified afterwards.
pub(crate) fn null_left_vector(b: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = b.nrows();
    if n == 1 {
        return Ok(DVector::from_element(1, 1.0));
    }
    let mut reduced = DMatrix::zeros(n - 1, n - 1);
    let mut rhs = DVector::zeros(n - 1);
    for j in 1..n {
        rhs[j - 1] = -b[(0, j)];
        for i in 1..n {
            reduced[(j - 1, i - 1)] = b[(i, j)];
        }
    }
    let lu = reduced.lu();
    let x = lu
        .solve(&rhs)
        .ok_or_else(|| Error::DegenerateBoundary("reduced boundary system is singular".into()))?;
    let mut y = DVector::zeros(n);
    y[0] = 1.0;
    for i in 1..n {
        y[i] = x[i - 1];
    }
    // Verify the full residual, including the omitted column.
    let res = (y.transpose() * b).abs().max();
    let scale = b.iter().fold(0.0f64, |a, &v| a.max(v.abs())) * y.abs().max();
    if res > 1e-8 * scale.max(1.0) {
        return Err(Error::DegenerateBoundary(format!(
            "null-vector residual {res:.3e} exceeds tolerance"
        )));
    }
    if y.iter().any(|&v| v < -1e-9 * y.abs().max()) {
        return Err(Error::DegenerateBoundary(
            "boundary null vector is not nonnegative".into(),
        ));
    }
    Ok(y)
}

/// Stationary distribution of the QBD from the level-0 filtered-balance equations.
pub fn stationary(
    blocks: &QbdBlocks,
    r_solution: &RSolution,
    level_cap: usize,
) -> Result<StationaryDistribution> {
    if r_solution.spectral_radius >= 1.0 {
        return Err(Error::Unstable(format!(
            "sp(R) = {} >= 1",
            r_solution.spectral_radius
        )));
    }
    let n = blocks.phase_count;
    let r = &r_solution.r;
    let b = &blocks.q1_boundary + r * &blocks.q2;
    let y = null_left_vector(&b)?;

    let identity = DMatrix::identity(n, n);
    let i_minus_r_lu = (&identity - r).lu();
    let nu = i_minus_r_lu
        .solve(&DVector::from_element(n, 1.0))
        .ok_or(Error::Singular("stationary: I - R"))?;

    let y_nu = y.dot(&nu);
    if !(y_nu > 0.0) || !y_nu.is_finite() {
        return Err(Error::DegenerateBoundary(format!(
            "y0 . nu = {y_nu} is not a positive finite normalizer"
        )));
    }
    let pi0 = (&y / y_nu).transpose();

    let mut pi = Vec::with_capacity(level_cap + 1);
    let mut current = pi0;
    let mut emitted = 0.0;
    for _ in 0..=level_cap {
        emitted += current.sum();
        pi.push(current.transpose());
        current = &pi[pi.len() - 1].transpose() * r;
    }
    // `current` is now pi_{L+1}; the tail mass is pi_{L+1} (I-R)^{-1} 1.
    let tail = current.transpose().dot(&nu);
    let normalization_error = (1.0 - (emitted + tail)).abs();
    Ok(StationaryDistribution {
        pi,
        level_cap,
        normalization_error,
    })
}
