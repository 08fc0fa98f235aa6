use gasnet::gas_model::{
    friction_source, friction_source_from_pressure, from_riemann, to_riemann, PipeGeometry, PressureLaw,
};
use gasnet::integrate::{step_upwind, EndValue, Method};
use gasnet::schemes::{cfl_dt, rhs, PipeGrid, PipeState, Row, Scheme, SchemeOptions};
use gasnet::studies::{uniform_flow_study, UniformFlowOutlet};
use proptest::prelude::*;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

/// Isothermal or affine law; the affine coefficient keeps densities up to
/// 200 kg/m³ admissible (`1 - α c² ρ > 0`).
fn law() -> impl Strategy<Value = PressureLaw> {
    prop_oneof![
        (100.0..700.0f64).prop_map(|c| PressureLaw::isothermal(c).unwrap()),
        (100.0..700.0f64, 0.0..1.0f64).prop_map(|(c, s)| PressureLaw::affine(c, -s / (c * c * 400.0)).unwrap()),
    ]
}

fn geometry() -> impl Strategy<Value = PipeGeometry> {
    (100.0..20_000.0f64, 0.1..1.5f64, 0.001..0.05f64).prop_map(|(l, d, f)| PipeGeometry::new(l, d, f).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn riemann_round_trip(law in law(), geom in geometry(), rho in 1.0..200.0f64, q in -500.0..500.0f64) {
        let w = to_riemann(&law, &geom, rho, q).unwrap();
        let (r2, q2) = from_riemann(&law, &geom, w).unwrap();
        prop_assert!(rel(rho, r2) <= 1e-10, "rho {} -> {}", rho, r2);
        prop_assert!((q - q2).abs() <= 1e-10 * q.abs().max(1.0), "q {} -> {}", q, q2);
    }

    #[test]
    fn eigenvalue_matches_finite_difference(law in law(), rho in 1.0..200.0f64) {
        let h = 1e-6;
        let dp = law.p_of_rho(rho + h).unwrap() - law.p_of_rho(rho - h).unwrap();
        let fd = (dp / (2.0 * h)).sqrt();
        prop_assert!(rel(law.lambda_of_rho(rho).unwrap(), fd) <= 1e-5);
    }

    #[test]
    fn conversions_are_inverse(law in law(), rho in 1.0..200.0f64) {
        let p = law.p_of_rho(rho).unwrap();
        prop_assert!(rel(law.rho_of_p(p).unwrap(), rho) <= 1e-12);
        prop_assert!(rel(law.z(p).unwrap() * rho, p) <= 1e-12);
        let i = law.invariant_integral(rho).unwrap();
        prop_assert!(rel(law.invariant_integral_inv(i).unwrap(), rho) <= 1e-10);
    }

    #[test]
    fn model_is_strictly_hyperbolic(law in law(), rho in 1.0..200.0f64) {
        let lambda = law.lambda_of_rho(rho).unwrap();
        prop_assert!(lambda > 0.0 && -lambda < 0.0);
    }

    #[test]
    fn friction_forms_agree_and_are_odd(law in law(), geom in geometry(), rho in 1.0..200.0f64, q in -500.0..500.0f64) {
        let p = law.p_of_rho(rho).unwrap();
        let direct = friction_source(&geom, rho, q);
        let via_p = friction_source_from_pressure(&law, &geom, p, q).unwrap();
        prop_assert!((direct - via_p).abs() <= 1e-12 * direct.abs().max(1e-300));
        prop_assert_eq!(friction_source(&geom, rho, -q), -direct);
    }
}

fn random_pipe() -> impl Strategy<Value = (PipeGrid, PipeState)> {
    (law(), geometry(), 3usize..9).prop_flat_map(|(law, geom, n)| {
        let grid = PipeGrid::new(geom, law, n).unwrap();
        let p_hi = law.p_of_rho(150.0).unwrap();
        let p_lo = law.p_of_rho(5.0).unwrap();
        (
            Just(grid),
            proptest::collection::vec(p_lo..p_hi, n + 1),
            proptest::collection::vec(-300.0..300.0f64, n + 1),
        )
            .prop_map(|(grid, p, q)| (grid, PipeState { p, q }))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn cfl_step_is_positive_and_minimal((grid, state) in random_pipe()) {
        let dt = cfl_dt([(&grid, &state)]).unwrap();
        prop_assert!(dt > 0.0);
        let brute = state.p.iter().map(|&p| {
            let rho = grid.law.rho_of_p(p).unwrap();
            grid.dx / grid.law.lambda_of_rho(rho).unwrap()
        }).fold(f64::INFINITY, f64::min);
        prop_assert!(rel(dt, brute) <= 1e-14);
    }

    #[test]
    fn rows_only_see_neighbouring_points((grid, state) in random_pipe(), pick in 0usize..100, bump in 0.01..0.1f64) {
        let opts = SchemeOptions::default();
        let j = pick % (grid.n + 1);
        let mut moved = state.clone();
        moved.p[j] *= 1.0 + bump;
        moved.q[j] += 50.0 * bump;
        for scheme in Scheme::ALL {
            let before = rhs(scheme, &grid, &state, &opts).unwrap();
            let after = rhs(scheme, &grid, &moved, &opts).unwrap();
            for (slot, (a, b)) in before.rows.iter().zip(&after.rows).enumerate() {
                if (slot / 2).abs_diff(j) > 1 {
                    prop_assert_eq!(a, b, "{} slot {} changed when point {} moved", scheme, slot, j);
                }
                if let Row::Differential(row) = a {
                    prop_assert!(row.mass.iter().all(|&(k, _)| (k / 2).abs_diff(slot / 2) <= 1));
                }
            }
        }
    }
}

/// Max-norm of the Riemann invariants, the variables the upwind scheme
/// transports.
fn invariant_norm(grid: &PipeGrid, s: &PipeState) -> f64 {
    s.p.iter()
        .zip(&s.q)
        .map(|(&p, &q)| {
            let w = to_riemann(&grid.law, &grid.geom, grid.law.rho_of_p(p).unwrap(), q).unwrap();
            w.w_plus.abs().max(w.w_minus.abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn upwind_stepping_below_cfl_stays_bounded() {
    let geom = PipeGeometry::new(3000.0, 0.762, 0.0).unwrap();
    let grid = PipeGrid::new(geom, PressureLaw::isothermal(383.0735).unwrap(), 50).unwrap();
    let p0 = 50e5;
    let mut s = PipeState {
        p: (0..=grid.n)
            .map(|i| p0 * (1.0 + 0.02 * (std::f64::consts::PI * grid.x(i) / 3000.0).sin().powi(2)))
            .collect(),
        q: vec![0.0; grid.n + 1],
    };
    let start = invariant_norm(&grid, &s);
    let opts = SchemeOptions::default();
    for _ in 0..1000 {
        let dt = 0.9 * cfl_dt([(&grid, &s)]).unwrap();
        s = step_upwind(&grid, &s, &opts, EndValue::Pressure(p0), EndValue::Flux(0.0), dt, true).unwrap();
        assert!(invariant_norm(&grid, &s) <= start * (1.0 + 1e-6));
    }
}

#[test]
fn time_integrators_reach_their_nominal_order() {
    let ie = uniform_flow_study(4, Method::ImplicitEuler, UniformFlowOutlet::Pressure, 2.0).unwrap();
    assert!(
        (ie.slope - 1.0).abs() <= 0.2,
        "implicit Euler slope {}\n{}",
        ie.slope,
        ie.table()
    );
    let bdf2 = uniform_flow_study(4, Method::Bdf2, UniformFlowOutlet::Pressure, 2.0).unwrap();
    assert!(
        (bdf2.slope - 2.0).abs() <= 0.3,
        "BDF2 slope {}\n{}",
        bdf2.slope,
        bdf2.table()
    );
}
