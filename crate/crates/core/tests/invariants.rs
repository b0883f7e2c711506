use proptest::prelude::*;

use ctlab::bmo::{bmo_seminorm, CubeFamily};
use ctlab::csvio::{read_density, write_density};
use ctlab::driver::coarsen;
use ctlab::eulerian::solve_fv_series;
use ctlab::fields::{Domain, Grid, GriddedDensity, ScalarField, VectorField};
use ctlab::fit;
use ctlab::flow::FlowOptions;
use ctlab::gronwall::{bound_from, choose_tau0_from};
use ctlab::lagrangian::{solve_representation, InitialData};
use ctlab::renorm::{admissibility_samples, beta_delta};

fn grid(dim: usize, n: usize) -> Grid {
    Grid::new(Domain::new(dim, 1.0, 1.0).unwrap(), n, 0.25).unwrap()
}

fn density(g: Grid, values: Vec<f64>) -> GriddedDensity {
    GriddedDensity::new(g, 0.0, values).unwrap()
}

/// `∫_start^τ` of the piecewise linear interpolant, evaluated forward.
fn integral_to(times: &[f64], g: &[f64], start: f64, tau: f64) -> f64 {
    let at = |t: f64| {
        let k = times.windows(2).position(|w| t <= w[1]).unwrap_or(times.len() - 2);
        g[k] + (g[k + 1] - g[k]) * (t - times[k]) / (times[k + 1] - times[k])
    };
    let mut knots = vec![start];
    knots.extend(times.iter().copied().filter(|t| *t > start && *t < tau));
    knots.push(tau);
    knots.windows(2).map(|w| 0.5 * (w[1] - w[0]) * (at(w[0]) + at(w[1]))).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn beta_delta_is_admissible(exp in -8.0f64..2.0) {
        let delta = 10f64.powf(exp);
        let beta = beta_delta(delta).unwrap();
        prop_assert_eq!(beta.beta(0.0), 0.0);
        for r in admissibility_samples() {
            let v = beta.beta(r);
            prop_assert!(v >= 0.0 && v <= beta.sup_beta() * (1.0 + 1e-12));
            prop_assert!((r * beta.derivative(r)).abs() <= 2.0 * (1.0 + 1e-12));
        }
        // β_δ is even and nondecreasing in |r|.
        prop_assert_eq!(beta.beta(-0.7), beta.beta(0.7));
        prop_assert!(beta.beta(1.0) <= beta.beta(2.0));
    }

    #[test]
    fn bmo_seminorm_ignores_constants_and_scales(
        values in prop::collection::vec(-5.0f64..5.0, 256),
        alpha in -4.0f64..4.0,
        shift in -10.0f64..10.0,
    ) {
        let g = grid(2, 16);
        let family = CubeFamily::new(&g, 3, true).unwrap();
        let s = bmo_seminorm(&density(g, values.clone()), &family).unwrap();
        let scaled = bmo_seminorm(&density(g, values.iter().map(|v| alpha * v).collect()), &family).unwrap();
        let shifted = bmo_seminorm(&density(g, values.iter().map(|v| v + shift).collect()), &family).unwrap();
        prop_assert!((scaled - alpha.abs() * s).abs() <= 1e-12 * (1.0 + s * alpha.abs()));
        prop_assert!((shifted - s).abs() <= 1e-12 * (1.0 + s + shift.abs()));
    }

    #[test]
    fn gronwall_bound_is_monotone(
        a in 0.0f64..3.0, b in 0.0f64..3.0, c in 0.0f64..3.0, d in 0.0f64..3.0,
        e1 in -8.0f64..0.0, e2 in -8.0f64..0.0, bump in 0.0f64..1.0,
    ) {
        let (small, large) = (10f64.powf(e1.min(e2)), 10f64.powf(e1.max(e2)));
        prop_assert!(bound_from(a, b, c, d, small) >= bound_from(a, b, c, d, large));
        let base = bound_from(a, b, c, d, large);
        prop_assert!(bound_from(a + bump, b, c, d, large) >= base);
        prop_assert!(bound_from(a, b + bump, c, d, large) >= base);
        prop_assert!(bound_from(a, b, c + bump, d, large) >= base);
        prop_assert!(bound_from(a, b, c, d + bump, large) >= base);
    }

    #[test]
    fn tau0_exhausts_the_budget(
        g in prop::collection::vec(0.0f64..5.0, 11),
        budget in 0.01f64..2.0,
        start in 0.0f64..0.5,
    ) {
        let times: Vec<f64> = (0..=10).map(|k| k as f64 / 10.0).collect();
        let tau = choose_tau0_from(&times, &g, start, budget).unwrap();
        prop_assert!(tau >= start && tau <= 1.0);
        let used = integral_to(&times, &g, start, tau);
        if tau < 1.0 {
            prop_assert!((used - budget).abs() <= 1e-9 * (1.0 + budget), "used {} of {}", used, budget);
        } else {
            prop_assert!(used <= budget * (1.0 + 1e-9));
        }
    }

    #[test]
    fn power_laws_are_recovered(k in 0.1f64..10.0, p in 0.2f64..4.0) {
        let hs: [f64; 4] = [0.1, 0.05, 0.025, 0.0125];
        let errs: Vec<f64> = hs.iter().map(|h| k * h.powf(p)).collect();
        prop_assert!((fit::order(&hs, &errs).unwrap() - p).abs() <= 1e-9);
        let (kf, pf) = fit::power_law(&hs, &errs).unwrap();
        prop_assert!((kf - k).abs() <= 1e-8 * k && (pf - p).abs() <= 1e-9);
    }

    #[test]
    fn coarsening_preserves_mass(values in prop::collection::vec(0.0f64..3.0, 256)) {
        let fine = density(grid(2, 16), values);
        let coarse = coarsen(&fine, &grid(2, 4)).unwrap();
        prop_assert!((coarse.mass() - fine.mass()).abs() <= 1e-12 * (1.0 + fine.mass()));
    }

    #[test]
    fn density_csv_round_trips(values in prop::collection::vec(-1e6f64..1e6, 64)) {
        let u = density(grid(3, 4), values);
        let mut buf = Vec::new();
        write_density(&u, &mut buf).unwrap();
        let back = read_density(buf.as_slice()).unwrap();
        prop_assert_eq!(back.values(), u.values());
        prop_assert_eq!(back.time(), u.time());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn finite_volumes_account_for_all_mass(vx in -1.5f64..1.5, vy in -1.5f64..1.5) {
        let g = Grid::new(Domain::new(2, 1.0, 0.5).unwrap(), 24, 0.125).unwrap();
        let u0 = InitialData::Field(ScalarField::spatial(|x| (-8.0 * (x[0] * x[0] + x[1] * x[1])).exp()));
        let (series, audit) = solve_fv_series(&u0, &VectorField::constant(&[vx, vy]), &ScalarField::zero(), &g, 0.9).unwrap();
        let m0 = series[0].mass();
        let m1 = series.last().unwrap().mass();
        prop_assert!((m1 + audit.outflow_mass - m0).abs() <= 1e-12 * m0);
        prop_assert!(series.iter().all(|u| u.values().iter().all(|v| *v >= 0.0)));
    }

    #[test]
    fn representation_without_flow_is_pointwise_damping(c in -3.0f64..3.0, t in 0.05f64..1.0) {
        let g = Grid::new(Domain::new(2, 1.0, 1.0).unwrap(), 16, 0.25).unwrap();
        let u0f = ScalarField::spatial(|x| 1.0 + x[0] * x[0] - 0.5 * x[1]);
        let u0 = InitialData::Field(u0f.clone());
        let opts = FlowOptions::new(0.05, *g.domain());
        let (u, _) = solve_representation(&u0, &VectorField::zero(2), &ScalarField::constant(c), t, &g, &opts).unwrap();
        let expected = u0f.sample(&g, 0.0);
        for (a, e) in u.values().iter().zip(expected.values()) {
            prop_assert!((a - e * (c * t).exp()).abs() <= 1e-12 * e.abs() * (c * t).exp());
        }
    }
}
