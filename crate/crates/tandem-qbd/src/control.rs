//! Level-0 boundary redesigns that force an arbitrary feasible decay rate:
//! phase-dependent arrival rates, extra removal rates, the modified block
//! assembly, and product-form verification against the truncated-chain
//! oracle.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::invariant::{self, InvariantMeasure, RegimeCoeffs};
use crate::model::{self, QbdBlocks, TandemParams};
use crate::oracle;
use crate::orthopoly;

/// Which level-0 modification realizes the target decay rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DesignKind {
    /// Phase-dependent arrival rates at level 0 (replaces each lambda).
    ArrivalMod,
    /// Extra removal rates from `(0, i)` to `(0, i-1)`.
    RemovalMod,
}

/// A boundary design targeting decay rate `target_z`, with its rates
/// materialized to the phase cap and the invariant measure it is built on.
#[derive(Debug, Clone)]
pub struct BoundaryDesign {
    pub kind: DesignKind,
    pub target_z: f64,
    /// `ArrivalMod`: `rates[i]` is the arrival rate in phase `i`.
    /// `RemovalMod`: `rates[i]` is the removal rate from phase `i` (index 0
    /// is unused and stored as zero).
    pub rates: Vec<f64>,
    pub w: InvariantMeasure,
}

fn require_feasible(params: &TandemParams, z: f64) -> Result<()> {
    let class = invariant::classify(params, z)?;
    if !class.feasible {
        let detail = if class.in_ell1 {
            "the measure is not positive"
        } else {
            "the measure is not absolutely summable"
        };
        return Err(Error::InfeasibleTarget {
            z,
            reason: detail.into(),
        });
    }
    Ok(())
}

/// Phase-dependent arrival rates forcing decay `z`: `rate_0 = mu2 z` and
/// `rate_i w_i = (mu1 - mu2 z) sum_{j > i} w_j`, the stable closed form of
/// the recursion `rate_i = rate_{i-1} w_{i-1}/w_i + mu2 z - mu1` (the raw
/// recursion loses positivity in floating point once `rate_i w_i` decays
/// near roundoff level).
pub fn design_arrival_rates(
    params: &TandemParams,
    z: f64,
    phase_cap: usize,
) -> Result<BoundaryDesign> {
    require_feasible(params, z)?;
    if phase_cap < 1 {
        return Err(Error::InvalidParameter("phase_cap must be >= 1".into()));
    }
    let w = invariant::solve_w(params, z, phase_cap + 2)?;
    let mut rates = Vec::with_capacity(phase_cap + 1);
    rates.push(params.mu2 * z);
    let coef = params.mu1 - params.mu2 * z;
    for i in 1..=phase_cap {
        let rate = coef * w.tail_sum(i + 1)? / w.w[i];
        if !(rate > 0.0) {
            return Err(Error::InfeasibleTarget {
                z,
                reason: format!("arrival rate at phase {i} is {rate}; w materialization failed"),
            });
        }
        rates.push(rate);
    }
    Ok(BoundaryDesign {
        kind: DesignKind::ArrivalMod,
        target_z: z,
        rates,
        w,
    })
}

/// Extra removal rates forcing decay `z` when the first queue is the slower
/// server (`mu1 < mu2`), valid on `z` in `[eta, rho2)`:
/// `rate_i w_i = lambda w_{i-1} - (mu1 - mu2 z) sum_{j >= i} w_j`, evaluated
/// per characteristic mode for relative accuracy.
pub fn design_removal_rates(
    params: &TandemParams,
    z: f64,
    phase_cap: usize,
) -> Result<BoundaryDesign> {
    if params.mu1 >= params.mu2 {
        return Err(Error::InvalidParameter(
            "removal design needs mu1 < mu2".into(),
        ));
    }
    if phase_cap < 1 {
        return Err(Error::InvalidParameter("phase_cap must be >= 1".into()));
    }
    let rho2 = params.rho2();
    if z >= rho2 {
        // At z = rho2 the first removal rate vanishes and the construction
        // degenerates (the unmodified network already has decay rho2).
        return Err(Error::InfeasibleTarget {
            z,
            reason: format!("removal design needs z < rho2 = {rho2}"),
        });
    }
    require_feasible(params, z)?;
    let w = invariant::solve_w(params, z, phase_cap + 2)?;
    let coef = params.mu1 - params.mu2 * z;
    let lambda = params.lambda;
    let mut rates = vec![0.0];
    for i in 1..=phase_cap {
        let y_i = match w.coeffs {
            RegimeCoeffs::RealRoots { u1, u2, c1, c2 } => {
                let g1 = lambda - coef * u1 / (1.0 - u1);
                let g2 = lambda - coef * u2 / (1.0 - u2);
                c1 * u1.powi(i as i32 - 1) * g1 + c2 * u2.powi(i as i32 - 1) * g2
            }
            _ => lambda * w.w[i - 1] - coef * w.tail_sum(i)?,
        };
        let rate = y_i / w.w[i];
        if !(rate > 0.0) {
            return Err(Error::InfeasibleTarget {
                z,
                reason: format!("removal rate at phase {i} is {rate}"),
            });
        }
        rates.push(rate);
    }
    Ok(BoundaryDesign {
        kind: DesignKind::RemovalMod,
        target_z: z,
        rates,
        w,
    })
}

/// Assembles the QBD blocks of the modified network at `phase_cap + 1`
/// phases: only the level-0 block differs from the unmodified build.
pub fn build_modified_blocks(
    params: &TandemParams,
    design: &BoundaryDesign,
    phase_cap: usize,
) -> Result<QbdBlocks> {
    if design.rates.len() < phase_cap + 1 {
        return Err(Error::InvalidParameter(format!(
            "design materialized {} rates, phase_cap {phase_cap} needs {}",
            design.rates.len(),
            phase_cap + 1
        )));
    }
    let mut blocks = model::build_blocks(params, phase_cap)?;
    let n = blocks.phase_count;
    let q1b = &mut blocks.q1_boundary;
    match design.kind {
        DesignKind::ArrivalMod => {
            for i in 0..n {
                let mu1_here = if i > 0 { params.mu1 } else { 0.0 };
                if i + 1 < n {
                    q1b[(i, i + 1)] = design.rates[i];
                    q1b[(i, i)] = -(design.rates[i] + mu1_here);
                } else {
                    q1b[(i, i)] = -mu1_here;
                }
            }
        }
        DesignKind::RemovalMod => {
            for i in 1..n {
                q1b[(i, i - 1)] = design.rates[i];
                q1b[(i, i)] -= design.rates[i];
            }
        }
    }
    Ok(blocks)
}

/// Product-form verdict of a modified network against `pi_k ~ c z^k w`.
#[derive(Debug, Clone, Serialize)]
pub struct ProductFormReport {
    pub target_z: f64,
    /// Median successive-ratio decay of the level marginals in the window.
    pub measured_decay: f64,
    /// Scale `c` fitted by least squares on `log pi` over the bulk window.
    pub fitted_scale: f64,
    /// Max of `|pi_kj / (c z^k w_j) - 1|` over the windowed states.
    pub max_rel_deviation: f64,
    /// Level window used (ratio indices).
    pub level_window: (usize, usize),
    /// Highest phase included in the deviation scan.
    pub max_phase: usize,
}

/// Solves the truncated modified chain with the independent oracle and
/// compares it against the designed product form.
///
/// The blocks must carry a tandem-structured interior (only the level-0
/// block may be modified); stability is pre-checked through the decay-root
/// bracket of the interior truncation, which for these blocks is the
/// spectral radius of the rate matrix.
pub fn verify_product_form(
    blocks: &QbdBlocks,
    z: f64,
    w: &InvariantMeasure,
    level_cap: usize,
) -> Result<ProductFormReport> {
    let n = blocks.phase_count;
    if level_cap < 8 {
        return Err(Error::InvalidParameter(
            "level_cap too small for a bulk window".into(),
        ));
    }
    // Recover the interior rates; the interior of a modified tandem build is
    // untouched by construction.
    let lambda = blocks.q1[(0, 1)];
    let mu1 = blocks.q0[(1, 0)];
    let mu2 = blocks.q2[(0, 0)];
    let interior = TandemParams::infinite(lambda, mu1, mu2)?;
    orthopoly::compute_zhat(&interior, n - 1, 1e-10).map_err(|e| {
        Error::Unstable(format!(
            "modified blocks fail the decay-root stability check: {e}"
        ))
    })?;

    let chain = oracle::truncated_chain_from_blocks(blocks, level_cap);
    let st = oracle::solve_stationary_direct(&chain)?;
    let marginals = st.level_marginals();
    let window = (level_cap / 4, 3 * level_cap / 4);
    let measured_decay = oracle::estimate_decay(&marginals, window)?;

    // Fit c on log pi over the window, then scan the same states.
    let max_phase = ((n - 1) / 2).max(1);
    let mut phases: Vec<usize> = Vec::new();
    for j in 0..=max_phase {
        if j < w.w.len() && w.w[j] > 1e-9 * w.w[0] {
            phases.push(j);
        }
    }
    if phases.is_empty() {
        return Err(Error::InvalidParameter(
            "no phases above the mass cutoff for the product-form fit".into(),
        ));
    }
    let ln_z = z.ln();
    let mut sum = 0.0;
    let mut count = 0usize;
    for k in window.0..window.1 {
        for &j in &phases {
            let p = st.entry(k, j);
            if p > 0.0 {
                sum += p.ln() - (k as f64 * ln_z + w.w[j].ln());
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::InvalidParameter(
            "no positive stationary mass in the fit window".into(),
        ));
    }
    let fitted_scale = (sum / count as f64).exp();
    let mut max_rel_deviation = 0.0f64;
    for k in window.0..window.1 {
        for &j in &phases {
            let model_val = fitted_scale * (k as f64 * ln_z).exp() * w.w[j];
            let dev = (st.entry(k, j) / model_val - 1.0).abs();
            max_rel_deviation = max_rel_deviation.max(dev);
        }
    }
    Ok(ProductFormReport {
        target_z: z,
        measured_decay,
        fitted_scale,
        max_rel_deviation,
        level_window: window,
        max_phase: *phases.last().unwrap(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p132() -> TandemParams {
        TandemParams::infinite(1.0, 3.0, 2.0).unwrap()
    }

    fn p123() -> TandemParams {
        TandemParams::infinite(1.0, 2.0, 3.0).unwrap()
    }

    #[test]
    fn arrival_rate_zero_is_mu2_z() {
        let d = design_arrival_rates(&p132(), 0.7, 40).unwrap();
        assert!((d.rates[0] - 1.4).abs() < 1e-14);
    }

    #[test]
    fn arrival_rate_one_matches_recursion() {
        // rate_1 = rate_0 w_0/w_1 + mu2 z - mu1 on the (1,3,2), z = 0.7 instance
        let d = design_arrival_rates(&p132(), 0.7, 40).unwrap();
        let w1 = d.w.w[1];
        let expected = 1.4 / w1 + 1.4 - 3.0;
        assert!(expected > 0.0);
        assert!(
            (d.rates[1] - expected).abs() < 1e-12,
            "{} vs {expected}",
            d.rates[1]
        );
    }

    #[test]
    fn arrival_rates_match_raw_recursion_prefix() {
        // The closed form and the textbook recursion agree while the latter
        // is still numerically healthy (its absolute-error floor overtakes
        // the geometrically decaying y_i past i ~ 60).
        for z in [0.55, 0.7, 0.9] {
            let d = design_arrival_rates(&p132(), z, 60).unwrap();
            let mut rec = vec![d.rates[0]];
            for i in 1..=20 {
                let v = rec[i - 1] * d.w.w[i - 1] / d.w.w[i] + 2.0 * z - 3.0;
                rec.push(v);
            }
            for (i, &r) in rec.iter().enumerate() {
                assert!(
                    (d.rates[i] - r).abs() < 1e-8 * r.abs().max(1.0),
                    "z={z} i={i}: {} vs {}",
                    d.rates[i],
                    r
                );
            }
        }
    }

    #[test]
    fn arrival_rates_positive_far_out() {
        for z in [0.55, 0.7, 0.9] {
            let d = design_arrival_rates(&p132(), z, 500).unwrap();
            assert!(d.rates.iter().all(|&r| r > 0.0), "z = {z}");
        }
        // mu1 <= mu2 instances are admitted whenever classify passes
        let d = design_arrival_rates(&p123(), 0.5, 500).unwrap();
        assert!(d.rates.iter().all(|&r| r > 0.0));
    }

    #[test]
    fn arrival_mod_y_sequence_decreases_to_zero() {
        let d = design_arrival_rates(&p132(), 0.7, 200).unwrap();
        let ys: Vec<f64> = (0..=200).map(|i| d.rates[i] * d.w.w[i]).collect();
        for w in ys.windows(2) {
            assert!(w[1] < w[0] + 1e-15);
        }
        assert!(ys[200] < 1e-10);
    }

    #[test]
    fn arrival_rejects_infeasible_targets() {
        assert!(matches!(
            design_arrival_rates(&p132(), 0.4, 10),
            Err(Error::InfeasibleTarget { .. })
        ));
        assert!(matches!(
            design_arrival_rates(&p123(), 0.7, 10),
            Err(Error::InfeasibleTarget { .. })
        ));
    }

    #[test]
    fn removal_rates_positive_and_first_value() {
        let p = p123();
        let d = design_removal_rates(&p, 0.32, 500).unwrap();
        assert!(d.rates[1..].iter().all(|&r| r > 0.0));
        // nu_1 = (lambda - mu2 z) w_0 / w_1
        let expected = (1.0 - 3.0 * 0.32) / d.w.w[1];
        assert!((d.rates[1] - expected).abs() < 1e-10 * expected);
    }

    #[test]
    fn removal_rates_match_raw_recursion_prefix() {
        let p = p123();
        let d = design_removal_rates(&p, 0.33, 60).unwrap();
        let w = &d.w.w;
        let mz = 3.0 * 0.33;
        let mut rec = vec![0.0, (1.0 - mz) * w[0] / w[1]];
        for i in 1..=20 {
            rec.push(((rec[i] + 1.0 + 2.0 - mz) * w[i] - 1.0 * w[i - 1]) / w[i + 1]);
        }
        for (i, &r) in rec.iter().enumerate().take(21).skip(1) {
            assert!(
                (d.rates[i] - r).abs() < 1e-8 * r.abs().max(1e-6),
                "i={i}: {} vs {}",
                d.rates[i],
                r
            );
        }
    }

    #[test]
    fn removal_y_sequence_strictly_decreasing() {
        let d = design_removal_rates(&p123(), 0.32, 300).unwrap();
        let ys: Vec<f64> = (1..=300).map(|i| d.rates[i] * d.w.w[i]).collect();
        for w in ys.windows(2) {
            assert!(w[1] < w[0]);
        }
    }

    #[test]
    fn inequality_56_holds_in_removal_range() {
        // (lambda + mu1 - mu2 z) w_i < lambda w_{i-1}
        let p = p123();
        for z in [0.32, 0.33] {
            let d = design_removal_rates(&p, z, 400).unwrap();
            let a = 1.0 + 2.0 - 3.0 * z;
            for i in 1..=400 {
                assert!(a * d.w.w[i] < 1.0 * d.w.w[i - 1], "z={z} i={i}");
            }
        }
    }

    #[test]
    fn removal_rejects_bad_ranges() {
        let p = p123();
        // z = rho2 = 1/3 degenerates (nu_1 = 0): rejected
        assert!(design_removal_rates(&p, 1.0 / 3.0, 10).is_err());
        // z below eta is not positive
        assert!(design_removal_rates(&p, 0.2, 10).is_err());
        // mu1 >= mu2 is out of scope for removals
        assert!(design_removal_rates(&p132(), 0.55, 10).is_err());
    }

    #[test]
    fn modified_blocks_conserve_and_embed_rates() {
        let p = p132();
        let d = design_arrival_rates(&p, 0.7, 30).unwrap();
        let b = build_modified_blocks(&p, &d, 30).unwrap();
        let ones = nalgebra::DVector::from_element(31, 1.0);
        let rowsum = (&b.q1_boundary + &b.q0) * &ones;
        assert!(rowsum.amax() < 1e-12);
        for i in 0..30 {
            assert!((b.q1_boundary[(i, i + 1)] - d.rates[i]).abs() < 1e-15);
        }

        let p = p123();
        let d = design_removal_rates(&p, 0.32, 30).unwrap();
        let b = build_modified_blocks(&p, &d, 30).unwrap();
        let rowsum = (&b.q1_boundary + &b.q0) * &ones;
        assert!(rowsum.amax() < 1e-12);
        for i in 1..=30 {
            assert!((b.q1_boundary[(i, i - 1)] - d.rates[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn unmodified_rates_reproduce_plain_blocks() {
        let p = p132();
        let w = invariant::solve_w(&p, 0.5, 33).unwrap();
        let identity_design = BoundaryDesign {
            kind: DesignKind::ArrivalMod,
            target_z: 0.5,
            rates: vec![1.0; 31],
            w: w.clone(),
        };
        let modified = build_modified_blocks(&p, &identity_design, 30).unwrap();
        let plain = model::build_blocks(&p, 30).unwrap();
        assert_eq!(modified.q1_boundary, plain.q1_boundary);

        let zero_removals = BoundaryDesign {
            kind: DesignKind::RemovalMod,
            target_z: 0.5,
            rates: vec![0.0; 31],
            w,
        };
        let modified = build_modified_blocks(&p, &zero_removals, 30).unwrap();
        assert_eq!(modified.q1_boundary, plain.q1_boundary);
    }

    #[test]
    fn short_rate_vector_is_rejected() {
        let p = p132();
        let d = design_arrival_rates(&p, 0.7, 10).unwrap();
        assert!(build_modified_blocks(&p, &d, 20).is_err());
    }

    #[test]
    fn jackson_product_form_is_the_unmodified_case() {
        // z = rho2 with w_k = rho1^k: the unmodified network already has the
        // designed boundary (rates identically lambda).
        let p = p132();
        let d = design_arrival_rates(&p, 0.5, 40).unwrap();
        for (i, &r) in d.rates.iter().enumerate() {
            assert!((r - 1.0).abs() < 1e-10, "rate {i} = {r}");
        }
        let b = build_modified_blocks(&p, &d, 40).unwrap();
        let plain = model::build_blocks(&p, 40).unwrap();
        assert!((&b.q1_boundary - &plain.q1_boundary).abs().max() < 1e-10);
    }

    #[test]
    fn product_form_verification_small_instance() {
        let p = p132();
        let z = 0.55;
        let d = design_arrival_rates(&p, z, 120).unwrap();
        let b = build_modified_blocks(&p, &d, 120).unwrap();
        let report = verify_product_form(&b, z, &d.w, 80).unwrap();
        assert!(
            (report.measured_decay - z).abs() < 1e-3,
            "decay {}",
            report.measured_decay
        );
        assert!(
            report.max_rel_deviation < 1e-4,
            "deviation {}",
            report.max_rel_deviation
        );
    }
}
