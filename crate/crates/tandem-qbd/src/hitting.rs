//! First-passage ladders: the matrices `H_k` of hitting level `k+1` before
//! level 0 from level `k`, their limit `H`, ordered exit products
//! `P_k^K = H_k H_{k+1} ... H_{K-1}`, and decay-rate estimators for the exit
//! probabilities.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::QbdBlocks;

/// Ladder of one-level-up first-passage matrices.
#[derive(Debug, Clone)]
pub struct HittingLadder {
    /// `H_1, H_2, ...` up to the requested depth or convergence.
    pub h_seq: Vec<DMatrix<f64>>,
    /// Fixed point of the ladder recursion when iterated to convergence.
    pub h_star: Option<DMatrix<f64>>,
    /// Max-abs entry of `Q0 + Q1 H + Q2 H^2` for the last iterate.
    pub residual: f64,
    /// Index (1-based) from which the stored sequence repeats its last entry.
    pub converged_at: Option<usize>,
}

impl HittingLadder {
    /// `H_k`, falling through to the fixed point (or the last converged
    /// iterate) beyond the stored ladder.
    pub fn h_at(&self, k: usize) -> &DMatrix<f64> {
        assert!(k >= 1, "ladder starts at H_1");
        if k <= self.h_seq.len() {
            &self.h_seq[k - 1]
        } else if let Some(h) = &self.h_star {
            h
        } else {
            self.h_seq.last().expect("ladder is never empty")
        }
    }
}

fn ladder_step(blocks: &QbdBlocks, h_prev: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let a = &blocks.q1 + &blocks.q2 * h_prev;
    let lu = a.lu();
    lu.solve(&(-&blocks.q0))
        .ok_or(Error::Singular("hitting ladder step"))
}

fn ladder_residual(blocks: &QbdBlocks, h: &DMatrix<f64>) -> f64 {
    (&blocks.q0 + &blocks.q1 * h + &blocks.q2 * h * h)
        .abs()
        .max()
}

/// First `k_max` ladder matrices from `H_0 = 0`:
/// `H_k = -(Q1 + Q2 H_{k-1})^{-1} Q0`, entrywise nondecreasing in `k`.
/// Storage stops early once the iterates agree to machine precision.
pub fn h_sequence(blocks: &QbdBlocks, k_max: usize) -> Result<HittingLadder> {
    if k_max < 1 {
        return Err(Error::InvalidParameter("k_max must be >= 1".into()));
    }
    let n = blocks.phase_count;
    let mut h_seq = Vec::new();
    let mut h_prev = DMatrix::zeros(n, n);
    let mut converged_at = None;
    for k in 1..=k_max {
        let h_k = ladder_step(blocks, &h_prev)?;
        let diff = (&h_k - &h_prev).abs().max();
        h_prev = h_k.clone();
        h_seq.push(h_k);
        if diff < 1e-15 {
            converged_at = Some(k);
            break;
        }
    }
    let residual = ladder_residual(blocks, h_seq.last().expect("k_max >= 1"));
    Ok(HittingLadder {
        h_seq,
        h_star: None,
        residual,
        converged_at,
    })
}

/// Iterates the ladder to its minimal nonnegative fixed point
/// (`Q0 + Q1 H + Q2 H^2 = 0`), stopping when the successive max-abs
/// difference falls below `tol`.
pub fn solve_h(blocks: &QbdBlocks, tol: f64) -> Result<HittingLadder> {
    solve_h_capped(blocks, tol, 1_000_000)
}

/// [`solve_h`] with an explicit iteration cap.
pub fn solve_h_capped(blocks: &QbdBlocks, tol: f64, cap: usize) -> Result<HittingLadder> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter("tol must be positive".into()));
    }
    let n = blocks.phase_count;
    let mut h_seq = Vec::new();
    let mut h_prev = DMatrix::zeros(n, n);
    for k in 1..=cap {
        let h_k = ladder_step(blocks, &h_prev)?;
        let diff = (&h_k - &h_prev).abs().max();
        h_prev = h_k.clone();
        if h_seq.len() < 64 {
            h_seq.push(h_k.clone());
        }
        if diff < tol {
            let residual = ladder_residual(blocks, &h_k);
            return Ok(HittingLadder {
                h_seq,
                h_star: Some(h_k),
                residual,
                converged_at: Some(k),
            });
        }
    }
    let residual = ladder_residual(blocks, &h_prev);
    Err(Error::IterationCap {
        cap,
        context: "solve_h",
        residual,
    })
}

/// Ordered exit product `P_k^K = H_k H_{k+1} ... H_{K-1}`: the probability,
/// starting one step into the ladder at level `k`, of first hitting level `K`
/// (before level 0) in each phase.
pub fn exit_probabilities(blocks: &QbdBlocks, k: usize, k_upper: usize) -> Result<DMatrix<f64>> {
    if k < 1 || k >= k_upper {
        return Err(Error::InvalidParameter(format!(
            "exit probabilities need 1 <= k < K, got k = {k}, K = {k_upper}"
        )));
    }
    let ladder = h_sequence(blocks, k_upper - 1)?;
    let mut product = ladder.h_at(k).clone();
    for step in (k + 1)..k_upper {
        product *= ladder.h_at(step);
    }
    Ok(product)
}

/// Decay diagnostics of `P_1^K(i, j)` as `K` grows.
#[derive(Debug, Clone)]
pub struct DecayEstimate {
    /// Successive ratios `P_1^{K+1}(i,j) / P_1^K(i,j)`, for `K = 2..k_max`.
    pub ratios: Vec<f64>,
    /// Final ratio (the estimator of record).
    pub final_ratio: f64,
    /// `log(P_1^{k_max}(i,j)) / k_max`, the slower log-slope estimator.
    pub log_slope: f64,
}

/// Tracks the `(i, j)` entry of the exit products in log space; raw products
/// underflow near `K ~ 700` for decay rates around 0.3, so each step rescales
/// by the max entry and accumulates the logarithm.
pub fn hitting_decay_estimate(
    blocks: &QbdBlocks,
    i: usize,
    j: usize,
    k_max: usize,
) -> Result<DecayEstimate> {
    let n = blocks.phase_count;
    if i >= n || j >= n {
        return Err(Error::InvalidParameter(format!(
            "phases ({i}, {j}) out of range for {n} phases"
        )));
    }
    if k_max < 4 {
        return Err(Error::InvalidParameter("k_max must be >= 4".into()));
    }
    let ladder = h_sequence(blocks, k_max - 1)?;
    let mut product = ladder.h_at(1).clone();
    let mut log_scale = 0.0f64;
    let entry_log = |m: &DMatrix<f64>, ls: f64| -> Result<f64> {
        let v = m[(i, j)];
        if v <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "entry ({i}, {j}) of the exit product vanishes; pick a reachable phase pair"
            )));
        }
        Ok(v.ln() + ls)
    };
    let mut prev_log = entry_log(&product, log_scale)?; // log P_1^2(i,j)
    let mut ratios = Vec::with_capacity(k_max - 2);
    for k_next in 3..=k_max {
        product *= ladder.h_at(k_next - 1);
        let scale = product.abs().max();
        if scale > 0.0 {
            product /= scale;
            log_scale += scale.ln();
        }
        let cur_log = entry_log(&product, log_scale)?;
        ratios.push((cur_log - prev_log).exp());
        prev_log = cur_log;
    }
    Ok(DecayEstimate {
        final_ratio: *ratios.last().expect("k_max >= 4"),
        log_slope: prev_log / k_max as f64,
        ratios,
    })
}

/// Decay diagnostics of the row sums `sum_j P_1^K(i, j)`: the total
/// probability of reaching level `K` before 0 from `(1, i)`. Exploratory
/// estimator only; no theoretical limit is asserted for it.
pub fn row_sum_decay_estimate(blocks: &QbdBlocks, i: usize, k_max: usize) -> Result<DecayEstimate> {
    let weights = vec![1.0; blocks.phase_count];
    aggregate_decay_estimate(blocks, Start::Phase(i), &weights, k_max)
}

/// Decay diagnostics of `(x_1 P_1^K)(j)` for a start distribution `x_1` over
/// the phases at level 1 (for example the stationary phase distribution).
/// Exploratory estimator only; no theoretical limit is asserted for it.
pub fn weighted_start_decay_estimate(
    blocks: &QbdBlocks,
    x1: &[f64],
    j: usize,
    k_max: usize,
) -> Result<DecayEstimate> {
    if x1.len() != blocks.phase_count {
        return Err(Error::InvalidParameter(format!(
            "start distribution has {} entries for {} phases",
            x1.len(),
            blocks.phase_count
        )));
    }
    let mut weights = vec![0.0; blocks.phase_count];
    weights[j] = 1.0;
    aggregate_decay_estimate(blocks, Start::Distribution(x1.to_vec()), &weights, k_max)
}

enum Start {
    Phase(usize),
    Distribution(Vec<f64>),
}

fn aggregate_decay_estimate(
    blocks: &QbdBlocks,
    start: Start,
    weights: &[f64],
    k_max: usize,
) -> Result<DecayEstimate> {
    let n = blocks.phase_count;
    if k_max < 4 {
        return Err(Error::InvalidParameter("k_max must be >= 4".into()));
    }
    let ladder = h_sequence(blocks, k_max - 1)?;
    let row = |m: &DMatrix<f64>, ls: f64| -> Result<f64> {
        let mut acc = 0.0;
        for jj in 0..n {
            let v = match &start {
                Start::Phase(i) => m[(*i, jj)],
                Start::Distribution(x) => (0..n).map(|i| x[i] * m[(i, jj)]).sum(),
            };
            acc += v * weights[jj];
        }
        if acc <= 0.0 {
            return Err(Error::InvalidParameter(
                "aggregated exit probability vanishes".into(),
            ));
        }
        Ok(acc.ln() + ls)
    };
    let mut product = ladder.h_at(1).clone();
    let mut log_scale = 0.0f64;
    let mut prev_log = row(&product, log_scale)?;
    let mut ratios = Vec::with_capacity(k_max - 2);
    for k_next in 3..=k_max {
        product *= ladder.h_at(k_next - 1);
        let scale = product.abs().max();
        if scale > 0.0 {
            product /= scale;
            log_scale += scale.ln();
        }
        let cur_log = row(&product, log_scale)?;
        ratios.push((cur_log - prev_log).exp());
        prev_log = cur_log;
    }
    Ok(DecayEstimate {
        final_ratio: *ratios.last().expect("k_max >= 4"),
        log_slope: prev_log / k_max as f64,
        ratios,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_blocks, TandemParams};
    use crate::orthopoly;
    use crate::qbd;

    fn blocks(lambda: f64, mu1: f64, mu2: f64, m: usize) -> QbdBlocks {
        let p = TandemParams::finite(lambda, mu1, mu2, m).unwrap();
        build_blocks(&p, m).unwrap()
    }

    #[test]
    fn h1_m1_exact() {
        let b = blocks(1.0, 3.0, 2.0, 1);
        let ladder = h_sequence(&b, 1).unwrap();
        let h1 = &ladder.h_seq[0];
        assert!((h1[(0, 0)] - 0.2).abs() < 1e-14);
        assert!((h1[(1, 0)] - 0.6).abs() < 1e-14);
        assert!(h1[(0, 1)].abs() < 1e-15);
        assert!(h1[(1, 1)].abs() < 1e-15);
    }

    #[test]
    fn top_phase_column_is_zero() {
        // Hitting one level up always lowers the phase, so the last column of
        // every ladder matrix vanishes.
        let b = blocks(1.0, 2.0, 3.0, 4);
        let ladder = h_sequence(&b, 10).unwrap();
        for h in &ladder.h_seq {
            for i in 0..4 {
                assert!(h[(i, 4)].abs() < 1e-15);
            }
        }
    }

    #[test]
    fn ladder_is_monotone_and_substochastic() {
        let b = blocks(1.0, 3.0, 2.0, 3);
        let ladder = h_sequence(&b, 40).unwrap();
        for pair in ladder.h_seq.windows(2) {
            for (a, c) in pair[0].iter().zip(pair[1].iter()) {
                assert!(*c >= *a - 1e-14);
            }
        }
        for h in &ladder.h_seq {
            for i in 0..h.nrows() {
                let rs: f64 = h.row(i).sum();
                assert!(rs <= 1.0 + 1e-12, "row sum {rs}");
                assert!(h.row(i).iter().all(|&v| v >= -1e-15));
            }
        }
    }

    #[test]
    fn fixed_point_residual_below_tolerance() {
        let b = blocks(1.0, 3.0, 2.0, 4);
        let ladder = solve_h(&b, 1e-12).unwrap();
        assert!(ladder.residual < 1e-11, "residual {}", ladder.residual);
    }

    #[test]
    fn h_and_r_share_their_spectra() {
        // The genuine spectra coincide; both matrices also carry defective
        // zero clusters that eigensolvers only resolve to ~eps^(1/mult).
        for m in 1..=6 {
            let b = blocks(1.0, 3.0, 2.0, m);
            let h = solve_h(&b, 1e-13).unwrap().h_star.unwrap();
            let r = qbd::solve_r(&b, 1e-13).unwrap().r;
            let he = qbd::nonzero_eigenvalue_moduli(&h, 1e-3).unwrap();
            let re = qbd::nonzero_eigenvalue_moduli(&r, 1e-3).unwrap();
            assert_eq!(he.len(), re.len(), "m={m}");
            for (a, c) in he.iter().zip(re.iter()) {
                assert!((a - c).abs() < 1e-8, "m={m}: |H eig| {a} vs |R eig| {c}");
            }
        }
    }

    #[test]
    fn spectral_radius_of_h_is_zhat() {
        for m in [1usize, 3, 5] {
            let params = TandemParams::infinite(1.0, 2.0, 3.0).unwrap();
            let b = blocks(1.0, 2.0, 3.0, m);
            let h = solve_h(&b, 1e-13).unwrap().h_star.unwrap();
            let sp = qbd::spectral_radius(&h).unwrap();
            let zhat = orthopoly::compute_zhat(&params, m, 1e-12).unwrap();
            assert!((sp - zhat).abs() < 1e-8, "m={m}: sp(H)={sp} zhat={zhat}");
        }
    }

    #[test]
    fn single_factor_product_is_h_k() {
        let b = blocks(1.0, 3.0, 2.0, 2);
        let ladder = h_sequence(&b, 3).unwrap();
        let p34 = exit_probabilities(&b, 3, 4).unwrap();
        assert_eq!(p34, *ladder.h_at(3));
        assert!(exit_probabilities(&b, 3, 3).is_err());
        assert!(exit_probabilities(&b, 0, 3).is_err());
    }

    #[test]
    fn exit_product_max_entry_nonincreasing_in_k() {
        let b = blocks(1.0, 3.0, 2.0, 3);
        let mut last = f64::INFINITY;
        for k_upper in 2..=30 {
            let p = exit_probabilities(&b, 1, k_upper).unwrap();
            let m = p.abs().max();
            assert!(m <= last + 1e-15, "K={k_upper}: {m} > {last}");
            assert!(p.iter().all(|&v| (-1e-15..=1.0 + 1e-12).contains(&v)));
            last = m;
        }
    }

    #[test]
    fn ratio_estimator_converges_to_zhat() {
        let params = TandemParams::infinite(1.0, 3.0, 2.0).unwrap();
        let b = blocks(1.0, 3.0, 2.0, 1);
        let est = hitting_decay_estimate(&b, 0, 0, 200).unwrap();
        let zhat = orthopoly::compute_zhat(&params, 1, 1e-12).unwrap();
        assert!(
            (est.final_ratio - zhat).abs() < 1e-4,
            "ratio {} vs zhat {zhat}",
            est.final_ratio
        );
        // the log-slope estimator agrees more loosely (1/K convergence)
        assert!((est.log_slope.exp() - zhat).abs() < 2e-2);
    }

    #[test]
    fn ratio_and_log_slope_agree() {
        let b = blocks(1.0, 2.0, 3.0, 4);
        let est = hitting_decay_estimate(&b, 1, 1, 200).unwrap();
        assert!((est.final_ratio.ln() - est.log_slope).abs() < 1e-3 * 10.0);
    }

    #[test]
    fn aggregate_estimators_produce_sane_rates() {
        // Exploratory estimators: well-defined geometric rates in (0, 1);
        // no theoretical limit is asserted.
        let b = blocks(1.0, 2.0, 3.0, 5);
        let row = row_sum_decay_estimate(&b, 1, 200).unwrap();
        assert!(row.final_ratio > 0.0 && row.final_ratio < 1.0);

        let x1 = vec![0.5, 0.2, 0.1, 0.1, 0.05, 0.05];
        let weighted = weighted_start_decay_estimate(&b, &x1, 0, 200).unwrap();
        assert!(weighted.final_ratio > 0.0 && weighted.final_ratio < 1.0);
        // single-entry aggregation with a point start reduces to the
        // entrywise estimator
        let point = vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0];
        let reduced = weighted_start_decay_estimate(&b, &point, 0, 200).unwrap();
        let entry = hitting_decay_estimate(&b, 1, 0, 200).unwrap();
        assert!((reduced.final_ratio - entry.final_ratio).abs() < 1e-12);

        let bad = vec![1.0; 3];
        assert!(weighted_start_decay_estimate(&b, &bad, 0, 200).is_err());
    }

    #[test]
    fn h_star_positive_pattern_strongly_connected_off_top_phase() {
        // All phases except the unreachable top one communicate under H.
        let b = blocks(1.0, 3.0, 2.0, 4);
        let h = solve_h(&b, 1e-12).unwrap().h_star.unwrap();
        let n = 4; // phases 0..=3 (phase 4 has a structurally zero column)
        for i in 0..n {
            for j in 0..n {
                let reachable = reachable(&h, i, j, n);
                assert!(reachable, "no positive path {i} -> {j}");
            }
        }
    }

    // Positive path of length >= 1 from `from` to `to`.
    fn reachable(h: &DMatrix<f64>, from: usize, to: usize, n: usize) -> bool {
        let mut seen = vec![false; n];
        let mut stack: Vec<usize> = (0..n).filter(|&w| h[(from, w)] > 1e-12).collect();
        while let Some(v) = stack.pop() {
            if v == to {
                return true;
            }
            if seen[v] {
                continue;
            }
            seen[v] = true;
            for w in 0..n {
                if h[(v, w)] > 1e-12 && !seen[w] {
                    stack.push(w);
                }
            }
        }
        false
    }
}
