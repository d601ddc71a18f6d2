//! Randomized invariants over small scenarios.

use nalgebra::Point3;
use proptest::prelude::*;
use ris_chanest::channel_model::{build_statistics, DirectLink, FadingParams, SystemGeometry};
use ris_chanest::estimators::{normalized_mse, EstimatorKind, UserContext};
use ris_chanest::montecarlo::pilot_power_for_snr;
use ris_chanest::report::format_float;
use ris_chanest::training::{Grouping, TrainingConfig};
use ris_chanest::Statistics;

const SIGMA_W2: f64 = 1e-12;

fn context(m: usize, kappa_a_db: f64, eta: f64, open_direct: bool, n_groups: usize) -> (Statistics, UserContext<f64>) {
    let geometry = SystemGeometry {
        bs_position: Point3::new(0.0, 0.0, 15.0),
        ris_position: Point3::new(0.0, 50.0, 10.0),
        ue_positions: vec![Point3::new(-8.0, 44.0, 5.0), Point3::new(5.0, 40.0, 5.0)],
        n_x: 4,
        n_y: 2,
        m_antennas: m,
        delta_x: 0.05,
        delta_y: 0.05,
        delta_0: 0.05,
        wavelength: 0.1,
        bs_aoa: 1.0,
    };
    let fading = FadingParams {
        kappa_a: 10f64.powf(kappa_a_db / 10.0),
        kappa_g: 2.0,
        alpha_a: 2.5,
        alpha_g: 2.2,
        alpha_b: 3.5,
        rho_0: 1e-3,
        eta: vec![eta; 3],
        direct_link: if open_direct { DirectLink::PathLoss } else { DirectLink::Blocked },
    };
    let st = build_statistics(&geometry, &fading).unwrap();
    let cfg = TrainingConfig::new(Grouping::contiguous(8, n_groups).unwrap(), n_groups + 1, vec![1.0; 2], SIGMA_W2).unwrap();
    let ctx = UserContext::new(&st, &cfg, 1).unwrap();
    (st, ctx)
}

fn theory(ctx: &UserContext<f64>, kind: EstimatorKind, rho: f64) -> f64 {
    let est = ctx.build(kind, rho, SIGMA_W2).unwrap();
    normalized_mse(&ctx.error_covariance(&est, rho, SIGMA_W2).unwrap(), &ctx.prior.cov_ss).normalized
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn lmmse_is_the_best_affine_estimator(
        m in 1usize..4,
        kappa_a_db in -20.0f64..10.0,
        eta in 0.0f64..0.999,
        open_direct in any::<bool>(),
        groups in prop::sample::select(vec![1usize, 2, 4]),
        snr_db in -20.0f64..60.0,
    ) {
        let (st, ctx) = context(m, kappa_a_db, eta, open_direct, groups);
        let rho = pilot_power_for_snr(&st, snr_db, SIGMA_W2);
        let lmmse = theory(&ctx, EstimatorKind::Lmmse, rho);
        let tol = 1e-9;
        prop_assert!((-tol..=1.0 + tol).contains(&lmmse));
        for kind in [EstimatorKind::GroupingLs, EstimatorKind::GroupingLmmse, EstimatorKind::CorrelatedGroupingLmmse] {
            let other = theory(&ctx, kind, rho);
            prop_assert!(other >= lmmse * (1.0 - 1e-9) - tol, "{kind} {other} < LMMSE {lmmse}");
        }
        let cg = theory(&ctx, EstimatorKind::CorrelatedGroupingLmmse, rho);
        prop_assert!(cg <= 1.0 + tol);
        let floor = ctx.floor(EstimatorKind::CorrelatedGroupingLmmse).unwrap().nmse.normalized;
        prop_assert!(cg >= floor * (1.0 - 1e-6) - tol, "below floor: {cg} < {floor}");
    }

    #[test]
    fn csv_floats_round_trip(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
        prop_assert_eq!(format_float(x).parse::<f64>().unwrap(), x);
    }
}
