use feller_core::analytic::*;
use feller_core::experiment::{Family, RESIDUAL_GRID, SYMMETRY_STEP};
use feller_core::lagrange::{
    build_mass_grid, lagrangian_rhs, total_probability, InitialCondition, MeanKind, ParticleState,
};
use feller_core::reconstruct::{read_snapshot_csv, reconstruct_pdf, write_snapshot_csv};
use feller_core::specfun::{exp_integral_e1, exp_integral_ei, kummer_m, SeriesControl};
use feller_core::MassGrid;
use proptest::prelude::*;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

proptest! {
    #[test]
    fn ei_of_negative_argument_is_minus_e1(log_x in -6.0f64..50f64.log10()) {
        let x = 10f64.powf(log_x);
        let e1 = exp_integral_e1(x).unwrap();
        prop_assert!(rel(-exp_integral_ei(-x).unwrap(), e1) <= 1e-12);
    }

    #[test]
    fn e1_is_positive_and_decreasing(x in 1e-6f64..50.0, dx in 1e-6f64..1.0) {
        let (a, b) = (exp_integral_e1(x).unwrap(), exp_integral_e1(x + dx).unwrap());
        prop_assert!(a > b && b > 0.0);
    }

    #[test]
    fn kummer_series_solves_its_ode(a in -2.0f64..3.0, b in 0.5f64..4.0, z in 0.5f64..8.0) {
        // fourth-order differences; M grows like e^z, so scale by max(|M|, 1)
        let h = 2f64.powi(-8);
        let ctrl = SeriesControl::default();
        let f: Vec<f64> = (-2..=2).map(|i| kummer_m(a, b, z + i as f64 * h, &ctrl).unwrap()).collect();
        let d1 = (f[0] - 8.0 * f[1] + 8.0 * f[3] - f[4]) / (12.0 * h);
        let d2 = (-f[0] + 16.0 * f[1] - 30.0 * f[2] + 16.0 * f[3] - f[4]) / (12.0 * h * h);
        let residual = (z * d2 + (b - z) * d1 - a * f[2]) / f[2].abs().max(1.0);
        prop_assert!(residual.abs() <= 1e-8, "residual {residual}");
    }

    #[test]
    fn time_shift_round_trip(t in 0.0f64..5.0, x in 0.01f64..10.0, p in -3.0f64..3.0, eps in -1.0f64..1.0) {
        let params = FellerParams { gamma: 0.7, eta: 1.3 };
        let s = SolutionSample { t, x, p };
        let tr = SymmetryTransform::new(SymmetryKind::TimeShift, eps);
        let back = apply_point_symmetry(&tr.inverse(), &params, apply_point_symmetry(&tr, &params, s).unwrap()).unwrap();
        prop_assert!((back.t - t).abs() <= 1e-13 * t.abs().max(1.0));
        prop_assert_eq!((back.x, back.p), (x, p));
    }

    #[test]
    fn exponential_rescalings_compose_additively(
        t in 0.0f64..2.0,
        x in 0.01f64..10.0,
        p in 0.1f64..3.0,
        e1 in -0.2f64..0.2,
        e2 in -0.2f64..0.2,
        gamma in prop_oneof![-1.0f64..-0.1, 0.1f64..1.0],
    ) {
        let params = FellerParams { gamma, eta: 1.0 };
        for kind in [SymmetryKind::ExpScale3, SymmetryKind::ExpScale4] {
            let step = |eps, s| apply_point_symmetry(&SymmetryTransform::new(kind, eps), &params, s);
            let s = SolutionSample { t, x, p };
            let (Ok(mid), Ok(direct)) = (step(e1, s), step(e1 + e2, s)) else { continue };
            let Ok(twice) = step(e2, mid) else { continue };
            for (a, b) in [(twice.t, direct.t), (twice.x, direct.x), (twice.p, direct.p)] {
                prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{kind:?}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn snapshot_csv_round_trip_is_lossless(gaps in prop::collection::vec(1e-3f64..2.0, 3..40), t in 0.0f64..10.0) {
        let params = FellerParams { gamma: -0.3, eta: 1.0 };
        let n = gaps.len();
        let cumulative: Vec<f64> = (0..=n).map(|k| k as f64 / n as f64).collect();
        let grid = MassGrid::from_cumulative(cumulative, MeanKind::Arithmetic).unwrap();
        let y: Vec<f64> = std::iter::once(0.0).chain(gaps.iter().scan(0.0, |s, g| { *s += g; Some(*s) })).collect();
        let snap = reconstruct_pdf(&ParticleState::new(t, y).unwrap(), &grid, &params).unwrap();
        let mut buf = Vec::new();
        write_snapshot_csv(std::slice::from_ref(&snap), &mut buf).unwrap();
        let back = read_snapshot_csv(buf.as_slice(), MeanKind::Arithmetic, &params).unwrap();
        prop_assert_eq!(back.len(), 1);
        prop_assert_eq!(back[0].t.to_bits(), snap.t.to_bits());
        prop_assert_eq!(&back[0].x, &snap.x);
        prop_assert_eq!(&back[0].y, &snap.y);
        prop_assert_eq!(&back[0].p, &snap.p);
        prop_assert_eq!(&back[0].cumulative, &snap.cumulative);
    }

    #[test]
    fn reconstructed_density_carries_the_grid_mass(gaps in prop::collection::vec(1e-3f64..2.0, 3..40)) {
        let params = FellerParams { gamma: 1.0, eta: 1.0 };
        let n = gaps.len();
        let cumulative: Vec<f64> = (0..=n).map(|k| (k as f64 / n as f64).powi(2)).collect();
        let grid = MassGrid::from_cumulative(cumulative, MeanKind::Arithmetic).unwrap();
        let y: Vec<f64> = std::iter::once(0.0).chain(gaps.iter().scan(0.0, |s, g| { *s += g; Some(*s) })).collect();
        let snap = reconstruct_pdf(&ParticleState::new(0.0, y).unwrap(), &grid, &params).unwrap();
        let mass: f64 = snap.density_points().zip(snap.x.windows(2)).map(|((_, p), w)| p * (w[1] - w[0])).sum();
        prop_assert!((mass - total_probability(&grid)).abs() <= 1e-12);
        prop_assert!(snap.p.iter().all(|p| *p > 0.0));
    }

    #[test]
    fn rhs_pins_the_origin_and_preserves_ordering_direction(gaps in prop::collection::vec(1e-2f64..1.0, 3..30), t in 0.0f64..3.0) {
        let params = FellerParams { gamma: 0.5, eta: 1.0 };
        let n = gaps.len();
        let grid = MassGrid::from_cumulative((0..=n).map(|k| k as f64 / n as f64).collect(), MeanKind::Geometric).unwrap();
        let y: Vec<f64> = std::iter::once(0.0).chain(gaps.iter().scan(0.0, |s, g| { *s += g; Some(*s) })).collect();
        let rate = lagrangian_rhs(&ParticleState::new(t, y).unwrap(), &grid, &params).unwrap();
        prop_assert_eq!(rate[0], 0.0);
        // the last node only ever moves outward
        prop_assert!(rate[n] > 0.0);
    }
}

#[test]
fn every_map_on_every_family_stays_within_tenfold_baseline() {
    for family in Family::ALL {
        let params = family.params();
        let base = |t: f64, x: f64| family.evaluate(t, x);
        let baseline = pde_residual(base, &params, &RESIDUAL_GRID, SYMMETRY_STEP, SYMMETRY_STEP)
            .unwrap()
            .max;
        for kind in SymmetryKind::ALL {
            for eps in [0.1, -0.1] {
                let image = transformed_solution(SymmetryTransform::new(kind, eps), params, base);
                let r = pde_residual(image, &params, &RESIDUAL_GRID, SYMMETRY_STEP, SYMMETRY_STEP)
                    .unwrap()
                    .max;
                assert!(
                    r <= 10.0 * baseline,
                    "{} {} eps={eps}: {r:e} vs {baseline:e}",
                    family.name(),
                    kind.name()
                );
            }
        }
    }
}

#[test]
fn exp_scale_3_maps_the_exponential_steady_state_to_a_solution() {
    let params = FellerParams {
        gamma: 1.0,
        eta: 1.0,
    };
    let ss = SteadyStateParams { c1: 0.0, c2: 1.0 };
    let image = transformed_solution(
        SymmetryTransform::new(SymmetryKind::ExpScale3, 0.3),
        params,
        |_, x| steady_state_p(&params, &ss, x),
    );
    let errors: Vec<f64> = [0.1, 0.05, 0.025]
        .iter()
        .map(|&h| {
            pde_residual(&image, &params, &RESIDUAL_GRID, h, h)
                .unwrap()
                .max
        })
        .collect();
    for order in observed_orders(&errors) {
        assert!((order - 2.0).abs() <= 0.3, "order {order}");
    }
}

#[test]
fn imposed_flux_of_general_steady_states() {
    for (gamma, c1, c2) in [(-0.5, 1.0, 0.5), (0.8, 0.3, 1.0), (-1.2, -2.0, 0.0)] {
        let params = FellerParams { gamma, eta: 1.7 };
        let ss = SteadyStateParams { c1, c2 };
        for x in [0.3, 1.0, 2.5] {
            let h = 1e-5;
            let p = steady_state_p(&params, &ss, x).unwrap();
            let p_x = (steady_state_p(&params, &ss, x + h).unwrap()
                - steady_state_p(&params, &ss, x - h).unwrap())
                / (2.0 * h);
            let flux = physical_flux(&params, x, p, p_x);
            assert!(
                (flux - c1 * params.eta).abs() <= 1e-7,
                "flux {flux} at x={x}"
            );
        }
    }
}

#[test]
fn steady_initial_condition_moves_only_its_last_node_at_first() {
    // the discrete interior is not exactly balanced; only the sign of the
    // boundary motion is structural
    let params = FellerParams {
        gamma: 1.0,
        eta: 1.0,
    };
    let ic = InitialCondition::steady(&params, 1.0).unwrap();
    let positions: Vec<f64> = (0..=50).map(|k| 8.0 * k as f64 / 50.0).collect();
    let (grid, state) = build_mass_grid(&ic, &positions, MeanKind::Arithmetic).unwrap();
    let rate = lagrangian_rhs(&state, &grid, &params).unwrap();
    let interior = rate[1..50]
        .iter()
        .zip(&state.y[1..50])
        .map(|(r, y)| (r - y).abs() / y)
        .fold(0.0, f64::max);
    assert!(interior < 0.05, "interior drift {interior}");
    assert!(rate[50] > 0.0);
}
