//! Invariant measures `w` of the infinite-phase rate matrix: `w R = z w`
//! normalized to `w_0 = 1`, in closed form across the three regimes of the
//! characteristic equation `mu1 u^2 - (lambda + mu1 + mu2(1-z)) z u
//! + lambda z = 0`, with their l1 and positivity classification.
//!
//! Only `|z| < 1` is handled. When `mu1 < mu2`, measures at `z` in
//! `[mu1/mu2, 1)` are never summable (only `z = mu1/mu2` could support a
//! level-phase-independent regime, through an overloaded first queue); such
//! rates are classified infeasible and not otherwise computed.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{self, TandemParams};

/// Sign regime of the characteristic discriminant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MeasureRegime {
    /// Distinct real roots: `-1 < z < 0` or `eta < z < 1`.
    RealRoots,
    /// Double root at `z = eta`.
    Degenerate,
    /// Complex roots: `0 < z < eta`.
    Oscillating,
}

/// Regime-specific coefficients of the closed form.
#[derive(Debug, Clone, Serialize)]
pub enum RegimeCoeffs {
    /// `w_k = c1 u1^k + c2 u2^k`.
    RealRoots { u1: f64, u2: f64, c1: f64, c2: f64 },
    /// `w_k = u^k (1 + c k)`.
    Degenerate { u: f64, c: f64 },
    /// `w_k = (cos(k phi) + c sin(k phi)) |u|^k`.
    Oscillating { u_abs: f64, phi: f64, c: f64 },
}

/// A `z^{-1}`-invariant measure with `w_0 = 1`.
#[derive(Debug, Clone, Serialize)]
pub struct InvariantMeasure {
    pub z: f64,
    pub regime: MeasureRegime,
    pub coeffs: RegimeCoeffs,
    /// Materialized prefix `w_0 ..= w_{n_terms - 1}`.
    pub w: Vec<f64>,
    /// Whether `w` is absolutely summable (`z1 < z < mu1/mu2`).
    pub in_ell1: bool,
    /// Whether `w` is entrywise positive (`z > 0` and `chi1(z) <= 0`).
    pub positive: bool,
}

impl InvariantMeasure {
    /// Closed-form `w_k`.
    pub fn w_at(&self, k: usize) -> f64 {
        let kf = k as f64;
        match self.coeffs {
            RegimeCoeffs::RealRoots { u1, u2, c1, c2 } => {
                c1 * u1.powi(k as i32) + c2 * u2.powi(k as i32)
            }
            RegimeCoeffs::Degenerate { u, c } => u.powi(k as i32) * (1.0 + c * kf),
            RegimeCoeffs::Oscillating { u_abs, phi, c } => {
                ((kf * phi).cos() + c * (kf * phi).sin()) * u_abs.powi(k as i32)
            }
        }
    }

    /// A positive envelope dominating `|w_k|`; the natural scale for relative
    /// comparisons near oscillation zeros.
    pub fn envelope(&self, k: usize) -> f64 {
        let kf = k as f64;
        match self.coeffs {
            RegimeCoeffs::RealRoots { u1, u2, c1, c2 } => {
                c1.abs() * u1.abs().powi(k as i32) + c2.abs() * u2.abs().powi(k as i32)
            }
            RegimeCoeffs::Degenerate { u, c } => u.powi(k as i32) * (1.0 + c.abs() * kf),
            RegimeCoeffs::Oscillating { u_abs, phi: _, c } => {
                (1.0 + c.abs()) * u_abs.powi(k as i32)
            }
        }
    }

    /// `sum_{k >= i} w_k` in closed form; requires the measure to be in l1.
    pub fn tail_sum(&self, i: usize) -> Result<f64> {
        if !self.in_ell1 {
            return Err(Error::InvalidParameter(format!(
                "tail sums need an l1 measure (z = {})",
                self.z
            )));
        }
        match self.coeffs {
            RegimeCoeffs::RealRoots { u1, u2, c1, c2 } => {
                Ok(c1 * u1.powi(i as i32) / (1.0 - u1) + c2 * u2.powi(i as i32) / (1.0 - u2))
            }
            RegimeCoeffs::Degenerate { u, c } => {
                let ui = u.powi(i as i32);
                Ok(ui * ((1.0 + c * i as f64) / (1.0 - u) + c * u / ((1.0 - u) * (1.0 - u))))
            }
            RegimeCoeffs::Oscillating { .. } => Err(Error::InvalidParameter(
                "tail sums are not provided in the oscillating regime".into(),
            )),
        }
    }
}

fn check_z(z: f64) -> Result<()> {
    if z == 0.0 {
        return Err(Error::InvalidParameter(
            "z = 0 corresponds to the structural eigenvector (1, 0, 0, ...); rejected".into(),
        ));
    }
    if !(z.abs() < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "invariant measures need |z| < 1, got {z}"
        )));
    }
    Ok(())
}

/// Solves the boundary and interior balance equations for `w` with `w_0 = 1`,
/// choosing the regime by the sign of the characteristic discriminant, and
/// materializes `n_terms` entries.
pub fn solve_w(params: &TandemParams, z: f64, n_terms: usize) -> Result<InvariantMeasure> {
    if n_terms < 2 {
        return Err(Error::InvalidParameter("n_terms must be >= 2".into()));
    }
    check_z(z)?;
    let TandemParams {
        lambda, mu1, mu2, ..
    } = *params;
    let a = lambda + mu1 + mu2 * (1.0 - z);
    let az = a * z;
    let disc = az * az - 4.0 * lambda * mu1 * z;
    let total = lambda + mu1 + mu2;
    let degenerate_band = 1e-10 * total * total;

    let coeffs = if disc.abs() < degenerate_band {
        // Double root; at z = eta this is u = sqrt(rho1 eta),
        // c = 1 - sqrt(eta/rho1).
        let u = az / (2.0 * mu1);
        let w1 = (lambda + mu2 * (1.0 - z)) * z / mu1;
        let c = w1 / u - 1.0;
        RegimeCoeffs::Degenerate { u, c }
    } else if disc > 0.0 {
        let sq = disc.sqrt();
        let u1 = (az + sq) / (2.0 * mu1);
        let u2 = (az - sq) / (2.0 * mu1);
        let c1 = 0.5 + (lambda - mu1 + mu2 * (1.0 - z)) * z / (2.0 * sq);
        let c2 = 1.0 - c1;
        RegimeCoeffs::RealRoots { u1, u2, c1, c2 }
    } else {
        let sq = (-disc).sqrt();
        let u_abs = (lambda * z / mu1).sqrt();
        let phi = sq.atan2(az);
        let c = ((lambda + mu2 * (1.0 - z)) * (z / (lambda * mu1)).sqrt() - phi.cos()) / phi.sin();
        RegimeCoeffs::Oscillating { u_abs, phi, c }
    };
    let regime = match coeffs {
        RegimeCoeffs::RealRoots { .. } => MeasureRegime::RealRoots,
        RegimeCoeffs::Degenerate { .. } => MeasureRegime::Degenerate,
        RegimeCoeffs::Oscillating { .. } => MeasureRegime::Oscillating,
    };
    let class = classify(params, z)?;
    let mut measure = InvariantMeasure {
        z,
        regime,
        coeffs,
        w: Vec::new(),
        in_ell1: class.in_ell1,
        positive: class.positive,
    };
    measure.w = (0..n_terms).map(|k| measure.w_at(k)).collect();
    Ok(measure)
}

/// Independent oracle: `w` materialized directly from the balance equations,
/// `w_0 = 1`, `w_1` from the boundary equation, then the interior recursion
/// `w_{k+1} = ((lambda + mu1 + mu2(1-z)) z w_k - lambda z w_{k-1}) / mu1`.
pub fn w_recursion_oracle(params: &TandemParams, z: f64, n: usize) -> Result<Vec<f64>> {
    if n < 1 {
        return Err(Error::InvalidParameter("n must be >= 1".into()));
    }
    if z == 0.0 {
        return Err(Error::InvalidParameter("z must be nonzero".into()));
    }
    let TandemParams {
        lambda, mu1, mu2, ..
    } = *params;
    let mut w = Vec::with_capacity(n + 1);
    w.push(1.0);
    w.push((lambda + mu2 * (1.0 - z)) * z / mu1);
    let a = lambda + mu1 + mu2 * (1.0 - z);
    for k in 1..n {
        let next = (a * z * w[k] - lambda * z * w[k - 1]) / mu1;
        w.push(next);
    }
    Ok(w)
}

/// l1 membership, positivity, and joint feasibility of the measure at `z`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Classification {
    pub in_ell1: bool,
    pub positive: bool,
    /// `in_ell1 && positive`; for `z` in (0,1) this coincides with membership
    /// in the feasible decay interval.
    pub feasible: bool,
}

pub fn classify(params: &TandemParams, z: f64) -> Result<Classification> {
    check_z(z)?;
    let z1 = model::compute_z1(params);
    let in_ell1 = z1 < z && z < params.mu1 / params.mu2;
    let positive = if z > 0.0 {
        let tol = 1e-12 * (params.lambda + params.mu1 + params.mu2);
        model::chi1(params, z)? <= tol
    } else {
        false
    };
    Ok(Classification {
        in_ell1,
        positive,
        feasible: in_ell1 && positive,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orthopoly::{PolyFamily, PolyKind};

    fn p132() -> TandemParams {
        TandemParams::infinite(1.0, 3.0, 2.0).unwrap()
    }

    fn p123() -> TandemParams {
        TandemParams::infinite(1.0, 2.0, 3.0).unwrap()
    }

    fn assert_matches_oracle(params: &TandemParams, z: f64, n: usize) {
        let m = solve_w(params, z, n + 1).unwrap();
        let oracle = w_recursion_oracle(params, z, n).unwrap();
        for (k, &o) in oracle.iter().enumerate() {
            let scale = m.envelope(k).max(o.abs()).max(1e-300);
            assert!(
                (m.w[k] - o).abs() <= 1e-10 * scale,
                "z={z} k={k}: closed {} vs oracle {}",
                m.w[k],
                o
            );
        }
    }

    #[test]
    fn geometric_special_case_at_rho2() {
        // mu1 > mu2 at z = rho2: w_k = rho1^k exactly.
        let p = p132();
        let m = solve_w(&p, 0.5, 40).unwrap();
        for (k, &w) in m.w.iter().enumerate() {
            let expected = (1.0f64 / 3.0).powi(k as i32);
            assert!(
                (w - expected).abs() <= 1e-12 * expected,
                "k={k}: {w} vs {expected}"
            );
        }
        match m.coeffs {
            RegimeCoeffs::RealRoots { u1, u2, c1, c2 } => {
                assert!((u1 - 0.5).abs() < 1e-14);
                assert!((u2 - 1.0 / 3.0).abs() < 1e-14);
                assert!(c1.abs() < 1e-13);
                assert!((c2 - 1.0).abs() < 1e-13);
            }
            _ => panic!("expected real roots at z = rho2"),
        }
    }

    #[test]
    fn degenerate_form_at_eta() {
        let p = p123();
        let eta = model::compute_eta(&p, 1e-16).unwrap();
        let m = solve_w(&p, eta, 10).unwrap();
        assert_eq!(m.regime, MeasureRegime::Degenerate);
        match m.coeffs {
            RegimeCoeffs::Degenerate { u, c } => {
                let rho1 = p.rho1();
                assert!((u - (rho1 * eta).sqrt()).abs() < 1e-7);
                assert!((c - (1.0 - (eta / rho1).sqrt())).abs() < 1e-7);
            }
            _ => panic!("expected degenerate regime at eta"),
        }
        assert_matches_oracle(&p, eta, 200);
    }

    #[test]
    fn closed_forms_match_recursion_all_regimes() {
        let p = p123();
        // oscillating, degenerate-adjacent, real roots, negative z
        for z in [0.1, 0.25, 0.32, 0.5, 0.64, -0.2, -0.05] {
            assert_matches_oracle(&p, z, 200);
        }
        let p = p132();
        for z in [0.2, 0.4679, 0.55, 0.9, -0.3] {
            assert_matches_oracle(&p, z, 200);
        }
    }

    #[test]
    fn w1_boundary_value() {
        let p = p132();
        let w = w_recursion_oracle(&p, 0.5, 3).unwrap();
        assert!((w[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_z() {
        let p = p132();
        assert!(solve_w(&p, 0.0, 5).is_err());
        assert!(solve_w(&p, 1.0, 5).is_err());
        assert!(solve_w(&p, -1.2, 5).is_err());
        assert!(solve_w(&p, 0.5, 1).is_err());
    }

    #[test]
    fn ell1_sum_matches_generating_function() {
        // sum w_k = mu1 / (mu1 - mu2 z) on the feasible range
        for (p, z) in [(p132(), 0.5), (p132(), 0.7), (p123(), 0.35)] {
            let m = solve_w(&p, z, 4).unwrap();
            assert!(m.in_ell1);
            let expected = p.mu1 / (p.mu1 - p.mu2 * z);
            let got = m.tail_sum(0).unwrap();
            assert!(
                (got - expected).abs() < 1e-12 * expected,
                "{got} vs {expected}"
            );
        }
    }

    #[test]
    fn classification_examples() {
        let p = p132();
        let c = classify(&p, 0.7).unwrap();
        assert!(c.feasible);

        let p = p123();
        let c = classify(&p, 0.7).unwrap();
        assert!(!c.in_ell1); // above mu1/mu2 = 2/3

        let c = classify(&p, 0.2).unwrap();
        assert!(!c.positive); // below eta: chi1 = tau > 0
        assert!(c.in_ell1);

        let c = classify(&p, -0.5).unwrap();
        assert!(!c.in_ell1); // below z1 = -0.257
        assert!(!c.positive);
    }

    #[test]
    fn w_matches_polynomials_at_zero() {
        // w_n = P_n(0; z), the bridge to the orthogonal-polynomial module.
        for (p, z) in [(p132(), 0.55), (p123(), 0.4), (p123(), 0.25)] {
            let m = solve_w(&p, z, 61).unwrap();
            let fam = PolyFamily::new(p.clone(), z, PolyKind::P).unwrap();
            for k in 0..=60 {
                let pk = fam.eval(k, 0.0);
                let scale = m.envelope(k).max(1e-300);
                assert!(
                    (m.w[k] - pk).abs() <= 1e-10 * scale,
                    "k={k}, z={z}: w={} P={pk}",
                    m.w[k]
                );
            }
        }
    }

    #[test]
    fn positivity_boundary_scan() {
        // At the lower feasible endpoint w stays nonnegative over a long
        // horizon; one percent below it, a sign change appears quickly.
        let p = p132();
        let at = solve_w(&p, 0.5, 501).unwrap();
        assert!(at.w.iter().all(|&v| v >= 0.0));
        let below = solve_w(&p, 0.49, 501).unwrap();
        assert!(below.w.iter().any(|&v| v < 0.0));

        let p = p123();
        let eta = model::compute_eta(&p, 1e-16).unwrap();
        let at = solve_w(&p, eta, 501).unwrap();
        assert!(at.w.iter().all(|&v| v >= 0.0));
        let below = solve_w(&p, eta - 1e-2, 501).unwrap();
        assert!(below.w.iter().any(|&v| v < 0.0));
    }
}
