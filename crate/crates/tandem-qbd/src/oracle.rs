//! Brute-force verification: direct stationary solves of the truncated
//! two-dimensional chain, geometric-decay estimation from level marginals,
//! and seeded Monte Carlo simulation of first-passage events.

use nalgebra::{DMatrix, DVector, RowDVector};
use rand_core::{RngCore, SeedableRng};

use crate::error::{Error, Result};
use crate::model::{Capacity, QbdBlocks, TandemParams};
use crate::qbd;

/// The tandem chain truncated to levels `0..=level_cap` and phases
/// `0..=phase_cap`, in block form. Truncation is reflecting: rates leaving
/// the box are dropped and the diagonal adjusted, so the generator stays
/// conservative and the chain irreducible.
#[derive(Debug, Clone)]
pub struct TruncatedChain {
    pub level_cap: usize,
    pub phase_cap: usize,
    /// Within-level block at level 0.
    pub d0: DMatrix<f64>,
    /// Within-level block at interior levels.
    pub d: DMatrix<f64>,
    /// Within-level block at the level cap (up-rates folded into the diagonal).
    pub d_top: DMatrix<f64>,
    /// One level up.
    pub up: DMatrix<f64>,
    /// One level down.
    pub down: DMatrix<f64>,
}

/// Builds the truncated chain of an (unmodified) tandem network directly
/// from the transition rates. `phase_cap = 0` and `level_cap = 0` are legal
/// degenerate boxes.
pub fn truncated_chain(
    params: &TandemParams,
    level_cap: usize,
    phase_cap: usize,
) -> Result<TruncatedChain> {
    if let Capacity::Finite(m) = params.capacity {
        if m != phase_cap {
            return Err(Error::InvalidParameter(format!(
                "finite capacity m = {m} requires phase_cap = m, got {phase_cap}"
            )));
        }
    }
    let n = phase_cap + 1;
    let (lambda, mu1, mu2) = (params.lambda, params.mu1, params.mu2);
    let mut up = DMatrix::zeros(n, n);
    let mut down = DMatrix::zeros(n, n);
    let mut d = DMatrix::zeros(n, n);
    let mut d0 = DMatrix::zeros(n, n);
    let mut d_top = DMatrix::zeros(n, n);
    for j in 0..n {
        let arr = if j + 1 < n { lambda } else { 0.0 };
        let srv1 = if j >= 1 { mu1 } else { 0.0 };
        if j >= 1 {
            up[(j, j - 1)] = mu1;
        }
        down[(j, j)] = mu2;
        if j + 1 < n {
            d[(j, j + 1)] = lambda;
            d0[(j, j + 1)] = lambda;
            d_top[(j, j + 1)] = lambda;
        }
        d[(j, j)] = -(arr + srv1 + mu2);
        d0[(j, j)] = -(arr + srv1);
        d_top[(j, j)] = -(arr + mu2); // queue-1 completions dropped at the cap
    }
    Ok(TruncatedChain {
        level_cap,
        phase_cap,
        d0,
        d,
        d_top,
        up,
        down,
    })
}

/// Truncates the level variable of an arbitrary QBD block set (the phase
/// truncation is whatever the blocks encode, including modified boundaries).
pub fn truncated_chain_from_blocks(blocks: &QbdBlocks, level_cap: usize) -> TruncatedChain {
    let n = blocks.phase_count;
    let mut d_top = blocks.q1.clone();
    for i in 0..n {
        let up_out: f64 = blocks.q0.row(i).sum();
        d_top[(i, i)] += up_out;
    }
    TruncatedChain {
        level_cap,
        phase_cap: n - 1,
        d0: blocks.q1_boundary.clone(),
        d: blocks.q1.clone(),
        d_top,
        up: blocks.q0.clone(),
        down: blocks.q2.clone(),
    }
}

/// Stationary distribution of a truncated chain, solved exactly.
#[derive(Debug, Clone)]
pub struct DirectStationary {
    /// One probability row per level.
    pub pi: Vec<DVector<f64>>,
    /// Max-abs entry of `pi Q` over all retained states.
    pub residual: f64,
}

impl DirectStationary {
    pub fn entry(&self, level: usize, phase: usize) -> f64 {
        self.pi[level][phase]
    }

    pub fn level_marginals(&self) -> Vec<f64> {
        self.pi.iter().map(|v| v.sum()).collect()
    }
}

/// `up * (-s)^{-1}`, the propagation matrix mapping `pi_{k-1}` to `pi_k`.
fn propagation(up: &DMatrix<f64>, s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let lu = (-s).transpose().lu();
    Ok(lu
        .solve(&up.transpose())
        .ok_or(Error::Singular("solve_stationary_direct: censored block"))?
        .transpose())
}

/// Global-balance solve by block elimination on the level variable.
///
/// A backward sweep censors levels from the top down (`S_k` is the diagonal
/// block of the chain observed on levels `<= k`); the sweep reuses the
/// converged censored block once successive iterates agree to machine
/// precision, which is exact for a level-independent interior. The forward
/// substitution then only multiplies nonnegative propagation matrices, so
/// small probabilities keep componentwise relative accuracy (a generic
/// sparse solve with a replaced normalization row would not).
pub fn solve_stationary_direct(chain: &TruncatedChain) -> Result<DirectStationary> {
    let l = chain.level_cap;
    let freeze_tol = 1e-13;

    let up_fold = {
        let n = chain.phase_cap + 1;
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = chain.up.row(i).sum();
        }
        m
    };

    let s0;
    let mut ms_top: Vec<DMatrix<f64>> = Vec::new(); // M_L, M_{L-1}, ...
    let mut m_frozen: Option<DMatrix<f64>> = None;
    let mut frozen_below = 0usize;
    if l == 0 {
        s0 = &chain.d0 + &up_fold;
    } else {
        let mut s = chain.d_top.clone();
        let mut prev_interior: Option<DMatrix<f64>> = None;
        let mut s_level0: Option<DMatrix<f64>> = None;
        for k in (1..=l).rev() {
            let m_k = propagation(&chain.up, &s)?;
            if k > 1 {
                let s_next = &chain.d + &m_k * &chain.down;
                let converged = prev_interior
                    .as_ref()
                    .map(|p| (&s_next - p).abs().max() < freeze_tol * (1.0 + s_next.abs().max()))
                    .unwrap_or(false);
                if converged {
                    frozen_below = k;
                    s_level0 = Some(&chain.d0 + &m_k * &chain.down);
                    m_frozen = Some(m_k);
                    break;
                }
                prev_interior = Some(s_next.clone());
                ms_top.push(m_k);
                s = s_next;
            } else {
                s_level0 = Some(&chain.d0 + &m_k * &chain.down);
                ms_top.push(m_k);
            }
        }
        s0 = s_level0.expect("level-0 censored block");
    }

    let m_at = |k: usize| -> &DMatrix<f64> {
        match &m_frozen {
            Some(mf) if k <= frozen_below => mf,
            _ => &ms_top[l - k],
        }
    };

    let pi0 = qbd::null_left_vector(&s0)?;
    let mut pi: Vec<RowDVector<f64>> = Vec::with_capacity(l + 1);
    pi.push(pi0.transpose());
    for k in 1..=l {
        let next = &pi[k - 1] * m_at(k);
        pi.push(next);
    }
    let total: f64 = pi.iter().map(|row| row.sum()).sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::DegenerateBoundary(format!(
            "truncated solve produced non-normalizable mass {total}"
        )));
    }
    for row in &mut pi {
        *row /= total;
    }

    // Residual of the full global balance, blockwise.
    let mut residual = 0.0f64;
    for k in 0..=l {
        let mut v = if k == 0 && l == 0 {
            &pi[0] * (&chain.d0 + &up_fold)
        } else if k == 0 {
            &pi[0] * &chain.d0
        } else if k == l {
            &pi[l] * &chain.d_top
        } else {
            &pi[k] * &chain.d
        };
        if k >= 1 {
            v += &pi[k - 1] * &chain.up;
        }
        if k < l {
            v += &pi[k + 1] * &chain.down;
        }
        residual = residual.max(v.abs().max());
    }
    let rate_scale = chain
        .d
        .abs()
        .max()
        .max(chain.d0.abs().max())
        .max(chain.d_top.abs().max())
        .max(1.0);
    if residual > 1e-10 * rate_scale {
        return Err(Error::DegenerateBoundary(format!(
            "global-balance residual {residual:.3e} exceeds the 1e-10 contract"
        )));
    }
    Ok(DirectStationary {
        pi: pi.into_iter().map(|r| r.transpose()).collect(),
        residual,
    })
}

/// Geometric decay fitted from level marginals: the median of successive
/// ratios over the window `lo..hi` (ratio `k` compares levels `k+1` and `k`).
/// The window must stay clear of both the reflecting cap and level 0.
pub fn estimate_decay(level_marginals: &[f64], window: (usize, usize)) -> Result<f64> {
    let (lo, hi) = window;
    let len = level_marginals.len();
    if lo < 1 || hi <= lo || hi + 2 > len {
        return Err(Error::InvalidParameter(format!(
            "decay window ({lo}, {hi}) touches the caps (marginal count {len})"
        )));
    }
    let mut ratios: Vec<f64> = (lo..hi)
        .map(|k| level_marginals[k + 1] / level_marginals[k])
        .collect();
    ratios.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = ratios.len() / 2;
    Ok(if ratios.len() % 2 == 1 {
        ratios[mid]
    } else {
        0.5 * (ratios[mid - 1] + ratios[mid])
    })
}

/// Empirical first-passage distribution from repeated jump-chain runs.
#[derive(Debug, Clone)]
pub struct HittingEstimate {
    /// `probs[j]`: relative frequency of first hitting the target level in
    /// phase `j` (before level 0).
    pub probs: Vec<f64>,
    /// Binomial standard error per phase.
    pub std_errs: Vec<f64>,
    /// Raw hit counts per phase.
    pub counts: Vec<u64>,
    pub replications: usize,
}

impl HittingEstimate {
    pub fn total_hit_probability(&self) -> f64 {
        self.probs.iter().sum()
    }
}

fn uniform_f64(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Simulates the embedded jump chain from `start = (level, phase)` until the
/// process hits level 0 or `k_target`, counting the phase at an upper hit.
///
/// Holding times never influence which state is hit first, so the jump chain
/// is exact for these probabilities. Each replication owns stream `rep` of a
/// counter-based generator keyed by `seed`, making the estimate bitwise
/// reproducible for a fixed `(seed, replications)` regardless of scheduling.
pub fn simulate_hitting(
    params: &TandemParams,
    start: (usize, usize),
    k_target: usize,
    replications: usize,
    seed: u64,
) -> Result<HittingEstimate> {
    if k_target < 2 {
        return Err(Error::InvalidParameter("k_target must be >= 2".into()));
    }
    if replications == 0 {
        return Err(Error::InvalidParameter("replications must be >= 1".into()));
    }
    if start.0 >= k_target {
        return Err(Error::InvalidParameter(
            "start level must lie below k_target".into(),
        ));
    }
    if let Capacity::Finite(m) = params.capacity {
        if start.1 > m {
            return Err(Error::InvalidParameter(format!(
                "start phase {} exceeds capacity {m}",
                start.1
            )));
        }
    }
    if start.0 == 0 {
        // T_0^K starts at an absorbing level: the upper level is never hit.
        return Ok(HittingEstimate {
            probs: vec![0.0],
            std_errs: vec![0.0],
            counts: vec![0],
            replications,
        });
    }
    let TandemParams {
        lambda, mu1, mu2, ..
    } = *params;
    let cap = match params.capacity {
        Capacity::Finite(m) => Some(m),
        Capacity::Infinite => None,
    };
    let mut counts: Vec<u64> = Vec::new();
    for rep in 0..replications {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(rep as u64);
        let (mut k, mut j) = start;
        loop {
            let arr = match cap {
                Some(m) if j >= m => 0.0,
                _ => lambda,
            };
            let srv1 = if j >= 1 { mu1 } else { 0.0 };
            let total = arr + srv1 + mu2;
            let u = uniform_f64(&mut rng) * total;
            if u < arr {
                j += 1;
            } else if u < arr + srv1 {
                j -= 1;
                k += 1;
            } else {
                k -= 1;
            }
            if k == 0 {
                break;
            }
            if k == k_target {
                if counts.len() <= j {
                    counts.resize(j + 1, 0);
                }
                counts[j] += 1;
                break;
            }
        }
    }
    if counts.is_empty() {
        counts.push(0);
    }
    let r = replications as f64;
    let probs: Vec<f64> = counts.iter().map(|&c| c as f64 / r).collect();
    let std_errs: Vec<f64> = probs.iter().map(|&p| (p * (1.0 - p) / r).sqrt()).collect();
    Ok(HittingEstimate {
        probs,
        std_errs,
        counts,
        replications,
    })
}
