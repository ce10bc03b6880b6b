//! Tandem-network parameters, generator blocks, characteristic matrices and
//! the scalar spectral functions that drive every downstream computation.
//!
//! The network is two exponential queues in series: Poisson arrivals at rate
//! `lambda` into queue 1 (service rate `mu1`, waiting room `capacity`), then
//! queue 2 (service rate `mu2`, unbounded). Viewed as a QBD process, the
//! *level* is the queue-2 length and the *phase* is the queue-1 length.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};

/// Waiting-room size of the first queue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Capacity {
    /// Room for `m >= 1` customers; arrivals finding it full are rejected.
    Finite(usize),
    /// Unlimited waiting room.
    Infinite,
}

/// Which queue is the bottleneck; decides the limit of the truncation decay
/// rates and the feasible decay interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    /// `mu1 <= mu2`: the first queue is the bottleneck.
    FirstBottleneck,
    /// `mu1 > mu2`: the second queue is the bottleneck.
    SecondBottleneck,
}

/// The tandem network: all rates strictly positive.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TandemParams {
    pub lambda: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub capacity: Capacity,
}

impl TandemParams {
    pub fn new(lambda: f64, mu1: f64, mu2: f64, capacity: Capacity) -> Result<Self> {
        for (name, v) in [("lambda", lambda), ("mu1", mu1), ("mu2", mu2)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be strictly positive and finite, got {v}"
                )));
            }
        }
        if let Capacity::Finite(m) = capacity {
            if m < 1 {
                return Err(Error::InvalidParameter(
                    "finite capacity must be at least 1".into(),
                ));
            }
        }
        Ok(Self {
            lambda,
            mu1,
            mu2,
            capacity,
        })
    }

    /// Shorthand for an infinite-capacity network.
    pub fn infinite(lambda: f64, mu1: f64, mu2: f64) -> Result<Self> {
        Self::new(lambda, mu1, mu2, Capacity::Infinite)
    }

    /// Shorthand for a finite-capacity network.
    pub fn finite(lambda: f64, mu1: f64, mu2: f64, m: usize) -> Result<Self> {
        Self::new(lambda, mu1, mu2, Capacity::Finite(m))
    }

    /// Utilization of queue 1.
    pub fn rho1(&self) -> f64 {
        self.lambda / self.mu1
    }

    /// Utilization of queue 2.
    pub fn rho2(&self) -> f64 {
        self.lambda / self.mu2
    }

    pub fn regime(&self) -> Regime {
        if self.mu1 <= self.mu2 {
            Regime::FirstBottleneck
        } else {
            Regime::SecondBottleneck
        }
    }
}

/// Outcome of the stability test, with the applied condition spelled out.
#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    pub stable: bool,
    /// Which inequality was applied.
    pub condition: String,
    /// Left-hand side of the inequality.
    pub lhs: f64,
    /// Right-hand side of the inequality.
    pub rhs: f64,
}

/// Stability of the tandem network.
///
/// Finite capacity `m`: `rho2 < (1 - rho1^(m+1)) / (1 - rho1^m)` when
/// `rho1 != 1`, and `rho2 < 1 + 1/m` when `rho1 = 1`. Infinite capacity:
/// `lambda < min(mu1, mu2)`.
pub fn stability_check(params: &TandemParams) -> StabilityReport {
    let (rho1, rho2) = (params.rho1(), params.rho2());
    match params.capacity {
        Capacity::Infinite => {
            let rhs = params.mu1.min(params.mu2);
            StabilityReport {
                stable: params.lambda < rhs,
                condition: "lambda < min(mu1, mu2)".into(),
                lhs: params.lambda,
                rhs,
            }
        }
        Capacity::Finite(m) => {
            if (rho1 - 1.0).abs() < 1e-14 {
                let rhs = 1.0 + 1.0 / m as f64;
                StabilityReport {
                    stable: rho2 < rhs,
                    condition: "rho2 < 1 + 1/m (rho1 = 1)".into(),
                    lhs: rho2,
                    rhs,
                }
            } else {
                let rhs = (1.0 - rho1.powi(m as i32 + 1)) / (1.0 - rho1.powi(m as i32));
                StabilityReport {
                    stable: rho2 < rhs,
                    condition: "rho2 < (1 - rho1^(m+1))/(1 - rho1^m)".into(),
                    lhs: rho2,
                    rhs,
                }
            }
        }
    }
}

/// The four generator blocks of the level-independent QBD representation:
/// `q0` moves one level up, `q2` one level down, `q1` within an interior
/// level and `q1_boundary` within level 0.
#[derive(Debug, Clone)]
pub struct QbdBlocks {
    /// Number of phases, `m + 1`.
    pub phase_count: usize,
    pub q0: DMatrix<f64>,
    pub q1: DMatrix<f64>,
    pub q2: DMatrix<f64>,
    pub q1_boundary: DMatrix<f64>,
}

/// Builds the generator blocks at `phase_cap + 1` phases.
///
/// A `Finite(m)` network must be built with `phase_cap = m`; an `Infinite`
/// network is truncated to a finite surrogate with `phase_cap` phases (the
/// resulting blocks are exactly those of the capacity-`phase_cap` network).
pub fn build_blocks(params: &TandemParams, phase_cap: usize) -> Result<QbdBlocks> {
    if phase_cap < 1 {
        return Err(Error::InvalidParameter(
            "phase_cap must be at least 1".into(),
        ));
    }
    if let Capacity::Finite(m) = params.capacity {
        if phase_cap != m {
            return Err(Error::InvalidParameter(format!(
                "finite capacity m = {m} requires phase_cap = m, got {phase_cap}"
            )));
        }
    }
    let n = phase_cap + 1;
    let (lambda, mu1, mu2) = (params.lambda, params.mu1, params.mu2);

    let mut q0 = DMatrix::zeros(n, n);
    let mut q1 = DMatrix::zeros(n, n);
    let mut q2 = DMatrix::zeros(n, n);
    let mut q1b = DMatrix::zeros(n, n);
    for i in 0..n {
        q2[(i, i)] = mu2;
        if i > 0 {
            q0[(i, i - 1)] = mu1;
        }
        let mu1_here = if i > 0 { mu1 } else { 0.0 };
        if i + 1 < n {
            q1[(i, i + 1)] = lambda;
            q1b[(i, i + 1)] = lambda;
            q1[(i, i)] = -(lambda + mu1_here + mu2);
            q1b[(i, i)] = -(lambda + mu1_here);
        } else {
            // first queue full: arrivals rejected
            q1[(i, i)] = -(mu1_here + mu2);
            q1b[(i, i)] = -mu1_here;
        }
    }
    Ok(QbdBlocks {
        phase_count: n,
        q0,
        q1,
        q2,
        q1_boundary: q1b,
    })
}

/// Variant of the characteristic matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CharacteristicKind {
    /// Northwest-corner truncation of the infinite-phase matrix `Q(z)`.
    Interior,
    /// Finite-capacity matrix: the last diagonal entry lacks the arrival term.
    Capped,
}

/// The tridiagonal matrix `(Q0 + z Q1 + z^2 Q2) / z` as explicit diagonals:
/// sub-diagonal `mu1/z`, super-diagonal `lambda`, and the diagonal returned
/// by [`CharacteristicMatrix::diagonal`].
#[derive(Debug, Clone)]
pub struct CharacteristicMatrix {
    pub z: f64,
    pub size: usize,
    pub kind: CharacteristicKind,
    diag: Vec<f64>,
    sub: f64,
    sup: f64,
}

impl CharacteristicMatrix {
    pub fn new(
        params: &TandemParams,
        z: f64,
        size: usize,
        kind: CharacteristicKind,
    ) -> Result<Self> {
        if !(z > 0.0) || z > 1.0 {
            return Err(Error::InvalidParameter(format!(
                "characteristic matrix needs z in (0, 1], got {z}"
            )));
        }
        if size == 0 {
            return Err(Error::InvalidParameter(
                "characteristic matrix needs size >= 1".into(),
            ));
        }
        let (lambda, mu1, mu2) = (params.lambda, params.mu1, params.mu2);
        let interior = -lambda - mu1 - mu2 * (1.0 - z);
        let mut diag = vec![interior; size];
        diag[0] = -lambda - mu2 * (1.0 - z);
        if kind == CharacteristicKind::Capped {
            // Size 1 keeps the boundary row without the arrival term.
            diag[size - 1] = if size == 1 {
                -mu2 * (1.0 - z)
            } else {
                -mu1 - mu2 * (1.0 - z)
            };
        }
        Ok(Self {
            z,
            size,
            kind,
            diag,
            sub: mu1 / z,
            sup: lambda,
        })
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    pub fn sub_diagonal(&self) -> f64 {
        self.sub
    }

    pub fn super_diagonal(&self) -> f64 {
        self.sup
    }

    /// Dense form, mostly for tests and cross-checks.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.size;
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = self.diag[i];
            if i + 1 < n {
                m[(i, i + 1)] = self.sup;
                m[(i + 1, i)] = self.sub;
            }
        }
        m
    }

    /// Off-diagonal of the symmetric tridiagonal matrix similar to this one
    /// (both off-diagonals are positive, so the similarity is diagonal).
    pub fn symmetrized_off_diagonal(&self) -> f64 {
        (self.sub * self.sup).sqrt()
    }
}

/// `tau(z) = -lambda - mu1 - mu2(1-z) + 2 sqrt(lambda mu1 / z)`, the upper
/// edge of the continuous spectrum support.
pub fn tau(params: &TandemParams, z: f64) -> Result<f64> {
    check_z_positive(z)?;
    Ok(-params.lambda - params.mu1 - params.mu2 * (1.0 - z)
        + 2.0 * (params.lambda * params.mu1 / z).sqrt())
}

/// `sigma(z) = -lambda - mu1 - mu2(1-z) - 2 sqrt(lambda mu1 / z)`, the lower
/// support edge.
pub fn sigma(params: &TandemParams, z: f64) -> Result<f64> {
    check_z_positive(z)?;
    Ok(-params.lambda
        - params.mu1
        - params.mu2 * (1.0 - z)
        - 2.0 * (params.lambda * params.mu1 / z).sqrt())
}

/// `chi(z) = (lambda/z - mu2)(1 - z)`, the isolated spectral point present
/// for `z > rho1`.
pub fn chi(params: &TandemParams, z: f64) -> Result<f64> {
    check_z_positive(z)?;
    Ok((params.lambda / z - params.mu2) * (1.0 - z))
}

/// Largest point of the spectral support: `tau(z)` for `z <= rho1` and
/// `chi(z)` for `z > rho1`. The two branches agree at `z = rho1`, where both
/// equal `(1 - rho1)(mu1 - mu2)`.
pub fn chi1(params: &TandemParams, z: f64) -> Result<f64> {
    if z <= params.rho1() {
        tau(params, z)
    } else {
        chi(params, z)
    }
}

fn check_z_positive(z: f64) -> Result<()> {
    if !(z > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "z must be strictly positive, got {z}"
        )));
    }
    Ok(())
}

/// The unique root of `tau` in (0, 1).
///
/// `tau` blows up at 0+, is convex, and `tau(1) = -(sqrt(lambda)-sqrt(mu1))^2`,
/// so a sign change on `(eps, 1-eps)` is guaranteed whenever `lambda != mu1`;
/// bisection is unconditionally safe. When no interior sign change exists
/// (`lambda = mu1` with `mu2 >= mu1`) the root sits at the boundary z = 1 and
/// an error is returned.
pub fn compute_eta(params: &TandemParams, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter("tol must be positive".into()));
    }
    let eps = 1e-12;
    let (mut lo, mut hi) = (eps, 1.0 - eps);
    let f_hi = tau(params, hi)?;
    if f_hi >= 0.0 {
        return Err(Error::NoBracket {
            lo,
            hi,
            context: "compute_eta: tau has no interior root (eta at the z = 1 boundary)",
        });
    }
    // tau(lo) > 0 by the 1/sqrt(z) blow-up; no need to evaluate. Small tol
    // requests bisect down to adjacent floats, then stop.
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if tau(params, mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Closed-form lower boundary of the l1 interval:
/// `z1 = (2 lambda + mu1 + mu2 - sqrt((2 lambda + mu1 + mu2)^2 + 4 mu1 mu2)) / (2 mu2)`,
/// always in (-1, 0).
pub fn compute_z1(params: &TandemParams) -> f64 {
    let s = 2.0 * params.lambda + params.mu1 + params.mu2;
    (s - (s * s + 4.0 * params.mu1 * params.mu2).sqrt()) / (2.0 * params.mu2)
}

/// Aggregated spectral quantities of the infinite-capacity network.
#[derive(Debug, Clone, Serialize)]
pub struct SpectralReport {
    pub rho1: f64,
    pub rho2: f64,
    /// Root of `tau` in (0, 1).
    pub eta: f64,
    /// Lower l1 boundary, in (-1, 0).
    pub z1: f64,
    pub regime: Regime,
    /// Decay rates `z` admitting positive l1 invariant measures:
    /// `[eta, mu1/mu2)` when `mu1 <= mu2`, `[rho2, 1)` when `mu1 > mu2`.
    pub feasible_decay_interval: (f64, f64),
}

/// Computes the full spectral report; fails if the network is unstable.
pub fn spectral_report(params: &TandemParams, tol: f64) -> Result<SpectralReport> {
    let stab = stability_check(params);
    if !stab.stable {
        return Err(Error::Unstable(format!(
            "{} fails: {} >= {}",
            stab.condition, stab.lhs, stab.rhs
        )));
    }
    let eta = compute_eta(params, tol)?;
    let regime = params.regime();
    let feasible = match regime {
        Regime::FirstBottleneck => (eta, params.mu1 / params.mu2),
        Regime::SecondBottleneck => (params.rho2(), 1.0),
    };
    Ok(SpectralReport {
        rho1: params.rho1(),
        rho2: params.rho2(),
        eta,
        z1: compute_z1(params),
        regime,
        feasible_decay_interval: feasible,
    })
}
