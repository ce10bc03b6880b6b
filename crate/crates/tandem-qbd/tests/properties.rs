//! Property tests for the structural invariants: generator conservation,
//! convexity and sign structure of the spectral functions, regime orderings,
//! closed forms against the balance recursion, ladder monotonicity, and
//! design-rate positivity.

use proptest::prelude::*;
use tandem_qbd::invariant;
use tandem_qbd::model::{
    build_blocks, chi, chi1, compute_eta, compute_z1, tau, Capacity, TandemParams,
};
use tandem_qbd::{control, hitting};

fn rate() -> impl Strategy<Value = f64> {
    0.2f64..5.0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn blocks_conserve_rates(lambda in rate(), mu1 in rate(), mu2 in rate(), m in 1usize..12) {
        let params = TandemParams::new(lambda, mu1, mu2, Capacity::Finite(m)).unwrap();
        let b = build_blocks(&params, m).unwrap();
        let ones = nalgebra::DVector::from_element(m + 1, 1.0);
        let interior = (&b.q0 + &b.q1 + &b.q2) * &ones;
        let boundary = (&b.q1_boundary + &b.q0) * &ones;
        let scale = lambda + mu1 + mu2;
        prop_assert!(interior.amax() <= 1e-13 * scale);
        prop_assert!(boundary.amax() <= 1e-13 * scale);
        // tandem structure: q0 subdiagonal mu1, q2 = mu2 I
        for i in 0..=m {
            for j in 0..=m {
                if i == j {
                    prop_assert_eq!(b.q2[(i, j)], mu2);
                } else {
                    prop_assert_eq!(b.q2[(i, j)], 0.0);
                }
                let expected_q0 = if i >= 1 && j + 1 == i { mu1 } else { 0.0 };
                prop_assert_eq!(b.q0[(i, j)], expected_q0);
            }
        }
    }

    #[test]
    fn tau_is_midpoint_convex(lambda in rate(), mu1 in rate(), mu2 in rate(),
                              a in 0.01f64..0.99, b in 0.01f64..0.99) {
        let params = TandemParams::infinite(lambda, mu1, mu2).unwrap();
        let mid = 0.5 * (a + b);
        let lhs = tau(&params, mid).unwrap();
        let rhs = 0.5 * (tau(&params, a).unwrap() + tau(&params, b).unwrap());
        prop_assert!(lhs <= rhs + 1e-12 * (lambda + mu1 + mu2));
    }

    #[test]
    fn tau_sign_flips_exactly_at_eta(lambda in rate(), mu1 in rate(), mu2 in rate(),
                                     z in 0.01f64..0.99) {
        prop_assume!((lambda / mu1 - 1.0).abs() > 1e-3);
        let params = TandemParams::infinite(lambda, mu1, mu2).unwrap();
        if let Ok(eta) = compute_eta(&params, 1e-14) {
            prop_assume!((z - eta).abs() > 1e-10);
            let t = tau(&params, z).unwrap();
            prop_assert_eq!(t < 0.0, z > eta, "tau({}) = {} with eta = {}", z, t, eta);
        }
    }

    #[test]
    fn bottleneck_orderings_hold(lambda_frac in 0.05f64..0.95, mu1 in rate(), mu2 in rate()) {
        // Bottleneck orderings under stability.
        prop_assume!((mu1 - mu2).abs() > 1e-6);
        let lambda = lambda_frac * mu1.min(mu2);
        let params = TandemParams::infinite(lambda, mu1, mu2).unwrap();
        let eta = compute_eta(&params, 1e-13).unwrap();
        let (rho1, rho2) = (params.rho1(), params.rho2());
        if mu1 < mu2 {
            prop_assert!(0.0 < eta && eta <= rho2 + 1e-12 && rho2 <= rho1 && rho1 < 1.0);
        } else {
            prop_assert!(0.0 < rho1 && rho1 < eta && eta < rho2 && rho2 < 1.0);
        }
    }

    #[test]
    fn z1_lies_in_minus_one_zero(lambda in rate(), mu1 in rate(), mu2 in rate()) {
        let params = TandemParams::infinite(lambda, mu1, mu2).unwrap();
        let z1 = compute_z1(&params);
        prop_assert!(z1 > -1.0 && z1 < 0.0, "z1 = {}", z1);
    }

    #[test]
    fn chi1_follows_the_branch_rule(lambda in rate(), mu1 in rate(), mu2 in rate(),
                                    z in 0.01f64..1.0) {
        // tau <= chi always, with equality exactly at rho1; chi1 takes the
        // tau branch below rho1 and the chi branch (the max) above it.
        let params = TandemParams::infinite(lambda, mu1, mu2).unwrap();
        let t = tau(&params, z).unwrap();
        let c = chi(&params, z).unwrap();
        let x1 = chi1(&params, z).unwrap();
        let scale = lambda + mu1 + mu2;
        prop_assert!(t <= c + 1e-12 * scale);
        if z <= params.rho1() {
            prop_assert_eq!(x1, t);
        } else {
            prop_assert_eq!(x1, c);
            prop_assert!((x1 - t.max(c)).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn closed_form_w_matches_recursion(lambda_frac in 0.1f64..0.95,
                                       mu1 in rate(), mu2 in rate(),
                                       z_raw in -0.9f64..0.95) {
        let lambda = lambda_frac * mu1.min(mu2);
        let params = TandemParams::infinite(lambda, mu1, mu2).unwrap();
        let eta = compute_eta(&params, 1e-14).unwrap();
        prop_assume!(z_raw.abs() > 1e-3);
        // the degenerate band trades accuracy for continuity; skip its
        // immediate neighborhood (exact-eta agreement is tested separately)
        prop_assume!((z_raw - eta).abs() > 1e-4);
        let measure = invariant::solve_w(&params, z_raw, 201).unwrap();
        let oracle = invariant::w_recursion_oracle(&params, z_raw, 200).unwrap();
        for (k, &o) in oracle.iter().enumerate() {
            let scale = measure.envelope(k).max(o.abs()).max(1e-300);
            prop_assert!(
                (measure.w[k] - o).abs() <= 1e-10 * scale,
                "k = {}, z = {}: {} vs {}", k, z_raw, measure.w[k], o
            );
        }
    }

    #[test]
    fn ladder_is_monotone(lambda in rate(), mu1 in rate(), mu2 in rate(), m in 1usize..6) {
        let params = TandemParams::new(lambda, mu1, mu2, Capacity::Finite(m)).unwrap();
        let b = build_blocks(&params, m).unwrap();
        let ladder = hitting::h_sequence(&b, 25).unwrap();
        for pair in ladder.h_seq.windows(2) {
            for (a, c) in pair[0].iter().zip(pair[1].iter()) {
                prop_assert!(*c >= *a - 1e-13);
            }
        }
        for h in &ladder.h_seq {
            for i in 0..h.nrows() {
                let rs: f64 = h.row(i).sum();
                prop_assert!((-1e-15..=1.0 + 1e-12).contains(&rs));
            }
        }
    }

    #[test]
    fn arrival_design_rates_stay_positive(lambda_frac in 0.1f64..0.9,
                                          mu2 in rate(), ratio in 1.05f64..4.0,
                                          z_frac in 0.01f64..0.99) {
        // mu1 > mu2 instances, z drawn inside [rho2, 1).
        let mu1 = mu2 * ratio;
        let lambda = lambda_frac * mu2;
        let params = TandemParams::infinite(lambda, mu1, mu2).unwrap();
        let z = params.rho2() + z_frac * (1.0 - 1e-3 - params.rho2());
        // materialize only down to where w stays far above the f64 floor
        let m = invariant::solve_w(&params, z, 501).unwrap();
        let cap = (1..=500usize).take_while(|&i| m.envelope(i) > 1e-250).count().max(1);
        prop_assume!(cap >= 10);
        let design = control::design_arrival_rates(&params, z, cap).unwrap();
        prop_assert!(design.rates.iter().all(|&r| r > 0.0));
    }

    #[test]
    fn removal_design_rates_stay_positive(lambda_frac in 0.1f64..0.9,
                                          mu1 in rate(), ratio in 1.05f64..4.0,
                                          z_frac in 0.05f64..0.95) {
        // mu1 < mu2 instances, z drawn inside [eta + margin, rho2 - margin].
        let mu2 = mu1 * ratio;
        let lambda = lambda_frac * mu1;
        let params = TandemParams::infinite(lambda, mu1, mu2).unwrap();
        let eta = compute_eta(&params, 1e-13).unwrap();
        let rho2 = params.rho2();
        let lo = eta + 1e-3 * (rho2 - eta);
        let hi = rho2 - 1e-3 * (rho2 - eta);
        prop_assume!(hi > lo);
        let z = lo + z_frac * (hi - lo);
        let m = invariant::solve_w(&params, z, 501).unwrap();
        let cap = (1..=500usize).take_while(|&i| m.envelope(i) > 1e-250).count().max(1);
        prop_assume!(cap >= 10);
        let design = control::design_removal_rates(&params, z, cap).unwrap();
        prop_assert!(design.rates[1..].iter().all(|&r| r > 0.0));
    }
}
