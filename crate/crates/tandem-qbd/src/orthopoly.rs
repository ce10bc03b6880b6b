//! The orthogonal-polynomial families behind the finite-capacity decay
//! rates: evaluation, zeros, and the root `zhat_{m+1}` at which the largest
//! zero of the capped polynomial crosses zero.
//!
//! Two families share the same three-term recursion and differ only in their
//! low-order terms: `P_n` (zeros = eigenvalues of the interior truncation of
//! the characteristic matrix) and the capped `Phat_n` (zeros = eigenvalues of
//! the finite-capacity characteristic matrix, whose last row lacks the
//! arrival term).

use crate::error::{Error, Result};
use crate::model::{
    self, Capacity, CharacteristicKind, CharacteristicMatrix, Regime, TandemParams,
};
use crate::tridiag;

/// Which polynomial family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolyKind {
    P,
    PHat,
}

impl PolyKind {
    fn characteristic(self) -> CharacteristicKind {
        match self {
            PolyKind::P => CharacteristicKind::Interior,
            PolyKind::PHat => CharacteristicKind::Capped,
        }
    }
}

/// A polynomial family pinned to a parameter set and an evaluation point
/// `z > 0` of the decay variable.
#[derive(Debug, Clone)]
pub struct PolyFamily {
    pub params: TandemParams,
    pub z: f64,
    pub kind: PolyKind,
}

/// Magnitude bound beyond which the evaluation recursion rescales by powers
/// of two, tracking the exponent exactly.
const RESCALE_LIMIT: f64 = 1e150;

impl PolyFamily {
    pub fn new(params: TandemParams, z: f64, kind: PolyKind) -> Result<Self> {
        if !(z > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "polynomial family needs z > 0, got {z}"
            )));
        }
        Ok(Self { params, z, kind })
    }

    /// Evaluates the degree-`n` polynomial at `x`.
    pub fn eval(&self, n: usize, x: f64) -> f64 {
        let (mantissa, exp) = self.eval_scaled(n, x);
        mantissa * 2f64.powi(exp.clamp(i32::MIN as i64, i32::MAX as i64) as i32)
    }

    /// Evaluation as `mantissa * 2^exp`, immune to overflow and underflow;
    /// the sign of the mantissa is the sign of the polynomial.
    pub fn eval_scaled(&self, n: usize, x: f64) -> (f64, i64) {
        let TandemParams {
            lambda, mu1, mu2, ..
        } = self.params;
        let z = self.z;
        if n == 0 {
            return (1.0, 0);
        }
        let z_over_mu1 = z / mu1;
        let p1 = match self.kind {
            PolyKind::P => z_over_mu1 * (x + lambda + mu2 * (1.0 - z)),
            PolyKind::PHat => z_over_mu1 * (x + mu2 * (1.0 - z)),
        };
        if n == 1 {
            return (p1, 0);
        }
        let a = x + lambda + mu1 + mu2 * (1.0 - z);
        // Degree-2 seed differs between the families.
        let p2 = match self.kind {
            PolyKind::P => z_over_mu1 * (a * p1 - lambda),
            PolyKind::PHat => z_over_mu1 * (a * p1 - lambda * (1.0 - z)),
        };
        let mut prev = p1;
        let mut cur = p2;
        let mut exp: i64 = 0;
        for _ in 3..=n {
            let next = z_over_mu1 * (a * cur - lambda * prev);
            prev = cur;
            cur = next;
            let mag = cur.abs().max(prev.abs());
            if mag > RESCALE_LIMIT || (mag < 1.0 / RESCALE_LIMIT && mag > 0.0) {
                let shift = -(mag.log2().round() as i64);
                let f = 2f64.powi(shift as i32);
                prev *= f;
                cur *= f;
                exp -= shift;
            }
        }
        (cur, exp)
    }

    /// Values `w_k = P_k(0; z)` for `k = 0..=n` (the invariant-measure bridge).
    pub fn values_at_zero(&self, n: usize) -> Vec<f64> {
        (0..=n).map(|k| self.eval(k, 0.0)).collect()
    }

    /// All `n` zeros, computed as eigenvalues of the corresponding tridiagonal
    /// characteristic matrix after a symmetrizing similarity.
    pub fn zeros(&self, n: usize) -> Result<ZeroSet> {
        if n == 0 {
            return Err(Error::InvalidParameter(
                "zero set needs degree n >= 1".into(),
            ));
        }
        let cm = CharacteristicMatrix::new(&self.params, self.z, n, self.kind.characteristic())?;
        let zeros = tridiag::eigenvalues(cm.diagonal(), cm.symmetrized_off_diagonal());
        Ok(ZeroSet { degree: n, zeros })
    }
}

/// Sorted zeros of one polynomial.
#[derive(Debug, Clone)]
pub struct ZeroSet {
    pub degree: usize,
    /// Strictly increasing.
    pub zeros: Vec<f64>,
}

impl ZeroSet {
    pub fn largest(&self) -> f64 {
        *self.zeros.last().expect("degree >= 1")
    }
}

/// Largest eigenvalue of the capped characteristic matrix of size `m + 1`,
/// i.e. the largest zero of `Phat_{m+1}(.; z)`.
fn largest_capped_eigenvalue(params: &TandemParams, m: usize, z: f64) -> Result<f64> {
    let cm = CharacteristicMatrix::new(params, z, m + 1, CharacteristicKind::Capped)?;
    Ok(tridiag::largest_eigenvalue(
        cm.diagonal(),
        cm.symmetrized_off_diagonal(),
    ))
}

/// The unique `z` in (0, 1) at which the largest zero of `Phat_{m+1}(.; z)`
/// equals zero; equals the spectral radius of `R_m` and `H_m`.
///
/// The bracket relies on the sign convention g(z) = largest eigenvalue of the
/// capped matrix: g > 0 left of the root and g < 0 right of it (the matrix is
/// conservative at z = 1, where g returns to zero from below).
pub fn compute_zhat(params: &TandemParams, m: usize, tol: f64) -> Result<f64> {
    if m < 1 {
        return Err(Error::InvalidParameter("compute_zhat needs m >= 1".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter("tol must be positive".into()));
    }
    let finite = TandemParams::new(params.lambda, params.mu1, params.mu2, Capacity::Finite(m))?;
    let stab = model::stability_check(&finite);
    if !stab.stable {
        return Err(Error::Unstable(format!(
            "compute_zhat at m = {m}: {} fails ({} >= {})",
            stab.condition, stab.lhs, stab.rhs
        )));
    }
    let eps = 1e-9;
    let (mut lo, mut hi) = (eps, 1.0 - eps);
    let g_lo = largest_capped_eigenvalue(params, m, lo)?;
    let g_hi = largest_capped_eigenvalue(params, m, hi)?;
    if !(g_lo > 0.0 && g_hi < 0.0) {
        return Err(Error::NoBracket {
            lo,
            hi,
            context: "compute_zhat: largest capped eigenvalue has no sign change",
        });
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if largest_capped_eigenvalue(params, m, mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// The `zhat` sequence over `m = 1..=m_max` with its monotonicity verdict and
/// the gap to the regime limit (`eta` when `mu1 <= mu2`, `rho2` otherwise).
#[derive(Debug, Clone)]
pub struct ZhatStudy {
    /// `(m, zhat_{m+1})` rows.
    pub zhats: Vec<(usize, f64)>,
    pub strictly_increasing: bool,
    pub regime: Regime,
    /// Theoretical limit of the sequence.
    pub limit: f64,
    /// `limit - zhat_{m+1}` per row (positive while converging from below).
    pub gaps: Vec<f64>,
}

pub fn zhat_limit_study(params: &TandemParams, m_max: usize, tol: f64) -> Result<ZhatStudy> {
    if m_max < 1 {
        return Err(Error::InvalidParameter("m_max must be >= 1".into()));
    }
    let regime = params.regime();
    let limit = match regime {
        Regime::FirstBottleneck => model::compute_eta(params, tol.min(1e-12))?,
        Regime::SecondBottleneck => params.rho2(),
    };
    let mut zhats = Vec::with_capacity(m_max);
    for m in 1..=m_max {
        zhats.push((m, compute_zhat(params, m, tol)?));
    }
    let strictly_increasing = zhats.windows(2).all(|w| w[1].1 > w[0].1);
    let gaps = zhats.iter().map(|&(_, v)| limit - v).collect();
    Ok(ZhatStudy {
        zhats,
        strictly_increasing,
        regime,
        limit,
        gaps,
    })
}
