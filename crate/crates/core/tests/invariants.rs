//! Property tests of the public invariants, on random grids, data and parameters.

use std::sync::Arc;

use mnchemo::{
    boundedness_threshold, build_initial_data, Coupling, DiffusionLaw, Field, InitialSpec, ModelParams, ProfileKind,
    RadialGrid, Solver, SolverError, SolverOptions, Source, Spacing, WProfileKind,
};
use proptest::prelude::*;

fn grid_strategy() -> impl Strategy<Value = RadialGrid<f64>> {
    (1u32..=3, 0.5f64..3.0, 4usize..64, prop::bool::ANY, 1e-6f64..1e-2).prop_map(|(n, r, cells, geo, w)| {
        let spacing = if geo { Spacing::Geometric { min_width: w * r / cells as f64 } } else { Spacing::Uniform };
        RadialGrid::new(n, r, cells, spacing).unwrap()
    })
}

fn grid_and_values() -> impl Strategy<Value = (RadialGrid<f64>, Vec<f64>)> {
    grid_strategy().prop_flat_map(|g| {
        let m = g.cells();
        (Just(g), prop::collection::vec(0.0f64..10.0, m))
    })
}

fn params(coupling: Coupling, m: f64, chi: f64, phi: f64) -> ModelParams<f64> {
    ModelParams {
        n: 2,
        coupling,
        chi,
        diffusion: DiffusionLaw::Prototype { m },
        phi_star: phi,
        radius: 1.0,
        m_bar: None,
    }
}

proptest! {
    #[test]
    fn ball_mass_at_radius_is_the_integral((g, f) in grid_and_values()) {
        prop_assert_eq!(g.ball_mass(&f, g.radius()).unwrap().to_bits(), g.integral(&f).to_bits());
    }

    #[test]
    fn ball_mass_nondecreasing((g, f) in grid_and_values(), mut radii in prop::collection::vec(0.0f64..1.0, 2..20)) {
        radii.sort_by(f64::total_cmp);
        let masses: Vec<f64> = radii.iter().map(|&x| g.ball_mass(&f, x * g.radius()).unwrap()).collect();
        for w in masses.windows(2) {
            prop_assert!(w[1] >= w[0], "{masses:?}");
        }
    }

    #[test]
    fn l1_bounded_by_holder((g, f) in grid_and_values(), p in 1.0f64..20.0) {
        let l1 = g.lp_norm(&f, 1.0).unwrap();
        let lp = g.lp_norm(&f, p).unwrap();
        let bound = g.domain_measure().powf(1.0 - 1.0 / p) * lp;
        prop_assert!(l1 <= bound * (1.0 + 1e-12), "{l1} > {bound}");
    }

    #[test]
    fn prototype_diffusion_positive_and_monotone_with_m(m in -3.0f64..4.0, mut us in prop::collection::vec(0.0f64..1e3, 2..40)) {
        us.sort_by(f64::total_cmp);
        let law = DiffusionLaw::Prototype { m };
        let d: Vec<f64> = us.iter().map(|&u| law.eval(u).unwrap()).collect();
        for (w, x) in d.windows(2).zip(us.windows(2)) {
            prop_assert!(w[0] > 0.0 && w[1] > 0.0);
            if x[1] > x[0] {
                if m > 1.0 { prop_assert!(w[1] >= w[0]); }
                if m < 1.0 { prop_assert!(w[1] <= w[0]); }
            }
        }
    }

    #[test]
    fn initial_data_passes_its_own_check(
        mu in 0.01f64..100.0,
        alpha in 0.01f64..5.0,
        spread in 0.0f64..5.0,
        r_star in prop::option::of(1e-3f64..0.5),
        profile in prop_oneof![Just(ProfileKind::Uniform), Just(ProfileKind::SmoothBump), Just(ProfileKind::Gaussian)],
        cosine in prop::bool::ANY,
        parabolic in prop::bool::ANY,
    ) {
        prop_assume!(!(r_star.is_some() && profile == ProfileKind::Uniform));
        let coupling = if parabolic { Coupling::Parabolic } else { Coupling::Elliptic };
        let p = params(coupling, 0.5, 5.0, 0.0);
        let grid = Arc::new(RadialGrid::new(2, 1.0, 256, Spacing::Geometric { min_width: 1e-5 }).unwrap());
        let spec = InitialSpec {
            mu,
            alpha,
            beta: alpha + spread,
            r_star,
            u_profile: profile,
            w_profile: if cosine { WProfileKind::Cosine } else { WProfileKind::Uniform },
            v_profile: parabolic.then_some((ProfileKind::SmoothBump, 0.5)),
        };
        let data = build_initial_data(&p, &spec, &grid).unwrap();
        data.check(&p, 1e-10).unwrap();
        prop_assert!(((data.u0.integral() - mu) / mu).abs() <= 1e-12);
    }

    #[test]
    fn accepted_steps_stay_nonnegative(
        u in prop::collection::vec(0.0f64..5.0, 48),
        w in prop::collection::vec(0.0f64..2.0, 48),
        m in 0.3f64..3.0,
        chi in 0.0f64..20.0,
        parabolic in prop::bool::ANY,
        dt in 1e-5f64..1e-2,
    ) {
        let coupling = if parabolic { Coupling::Parabolic } else { Coupling::Elliptic };
        let grid = Arc::new(RadialGrid::uniform(2, 1.0, 48).unwrap());
        let s = Solver::new(params(coupling, m, chi, 0.0), Source::Zero, SolverOptions::default(), Arc::clone(&grid)).unwrap();
        let v = parabolic.then(|| Field::constant(Arc::clone(&grid), 0.5));
        let st = s.state(0.0, Field::new(Arc::clone(&grid), u).unwrap(), v, Field::new(Arc::clone(&grid), w).unwrap()).unwrap();
        let dt = dt.min(s.chemotaxis_dt_limit(&st));
        match s.step(&st, dt) {
            Ok(next) => {
                prop_assert!(next.u.min() >= 0.0 && next.v.min() >= 0.0 && next.w.min() >= 0.0);
                prop_assert!((next.t - dt).abs() <= 1e-15);
            }
            Err(SolverError::NonPositive { .. }) => {}
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        }
    }

    #[test]
    fn elliptic_v_integral_equals_uw(
        u in prop::collection::vec(0.0f64..5.0, 40),
        w in prop::collection::vec(0.0f64..2.0, 40),
    ) {
        let grid = Arc::new(RadialGrid::new(2, 1.0, 40, Spacing::Geometric { min_width: 1e-4 }).unwrap());
        let s = Solver::new(params(Coupling::Elliptic, 0.5, 5.0, 0.0), Source::Zero, SolverOptions::default(), Arc::clone(&grid)).unwrap();
        let uf = Field::new(Arc::clone(&grid), u).unwrap();
        let wf = Field::new(Arc::clone(&grid), w).unwrap();
        let v = s.solve_elliptic_v(&uf, &wf).unwrap();
        let uw = uf.product(&wf).integral();
        prop_assert!((v.integral() - uw).abs() <= 1e-9 * uw.max(1e-300));
        prop_assert!(v.min() >= 0.0);
    }
}

#[test]
fn threshold_gap_between_couplings_is_one_half() {
    let gap =
        boundedness_threshold::<f64>(2, Coupling::Elliptic) - boundedness_threshold::<f64>(2, Coupling::Parabolic);
    assert_eq!(gap, 0.5);
}
