//! Invariants that hold across the parameter space.

use proptest::prelude::*;

use tipping_kit::dynsys::{locate_fold, normal_form_coefficients, DynamicalSystem, EscapeBox};
use tipping_kit::escape::fpe1d::{MASS_GROWTH_TOL, NEGATIVITY_TOL};
use tipping_kit::escape::{monte_carlo_escape, solve_fpe_1d, FpeGrid1D, McSpec};
use tipping_kit::forcing::ForcingProfile;
use tipping_kit::monsoon::{analyze_fold, escape_box, MonsoonParams, A_INF, GUESS};
use tipping_kit::tipping::{
    classify_by_simulation, criterion_inverse_square, critical_curve, exceedance_time, Sech2Family, SimulationSetup,
};

proptest! {
    #[test]
    fn criterion_is_monotone(
        d_b in 1.0f64..1000.0,
        r in 0.0f64..0.1,
        t_e in 0.1f64..10.0,
        fr in 0.0f64..1.0,
        ft in 0.01f64..1.0,
    ) {
        if !criterion_inverse_square(d_b, r, t_e).unwrap().tipped {
            prop_assert!(!criterion_inverse_square(d_b, r * fr, t_e * ft).unwrap().tipped);
        }
    }

    #[test]
    fn parabolic_exceedance_matches_closed_form(
        r0 in 0.01f64..5.0,
        r2 in 0.01f64..5.0,
        eps in 1e-3f64..0.5,
        q_b in -1.0f64..1.0,
    ) {
        let f = ForcingProfile::parabolic(r0, r2, eps, q_b);
        let ex = exceedance_time(&f, q_b).unwrap();
        let closed = 2.0 * (r0 / (eps * r2)).sqrt();
        prop_assert!((ex.t_e - closed).abs() <= 1e-6 * closed, "{} vs {}", ex.t_e, closed);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn fpe_mass_decays_and_density_stays_nonnegative(p0 in -3.0f64..2.0, p2 in 0.2f64..4.0) {
        let grid = FpeGrid1D { nx: 401, ..Default::default() };
        let sol = solve_fpe_1d(p0, p2, &grid).unwrap();
        prop_assert!(sol.min_density >= NEGATIVITY_TOL);
        prop_assert!(sol.mass.windows(2).all(|w| w[1] <= w[0] + MASS_GROWTH_TOL));
        prop_assert!((0.0..=1.0).contains(&sol.p_esc));
    }
}

#[test]
fn escape_probability_is_monotone_in_p0_and_p2() {
    let grid = FpeGrid1D::default();
    let p = |p0: f64, p2: f64| solve_fpe_1d(p0, p2, &grid).unwrap().p_esc;
    let along_p0: Vec<f64> = [-2.0, -1.0, 0.0, 1.0, 2.0].iter().map(|&p0| p(p0, 1.0)).collect();
    assert!(along_p0.windows(2).all(|w| w[1] > w[0]), "{along_p0:?}");
    let along_p2: Vec<f64> = [0.25, 0.5, 1.0, 2.0, 4.0].iter().map(|&p2| p(0.0, p2)).collect();
    assert!(along_p2.windows(2).all(|w| w[1] < w[0]), "{along_p2:?}");
}

#[test]
fn two_routes_to_d_b_agree() {
    let report = analyze_fold(&MonsoonParams::default()).unwrap();
    assert!(report.fold.d_b_discrepancy() <= 1e-3, "{}", report.fold.d_b_discrepancy());

    let sys = DynamicalSystem::scalar(|y, q| 2.0 * q + 0.5 * y * y);
    let loc = locate_fold(&sys, (-1.0, 1.0), &[-2.0]).unwrap();
    let fp = normal_form_coefficients(&sys, &loc).unwrap();
    assert!((fp.d_b - 4.0).abs() < 1e-6 && fp.d_b_discrepancy() <= 1e-3);
}

/// Criterion margins within `BAND * eps` of zero are not compared.
const BAND: f64 = 40.0;

#[test]
fn normal_form_simulation_agrees_with_criterion_outside_the_band() {
    // y' = q + y^2: stable for q < 0, d_b = 4, t_e = 2 sqrt(R0 / (eps R2)).
    let sys = DynamicalSystem::scalar(|y, q| q + y * y);
    for eps in [1e-2, 1e-3] {
        for r2 in [0.25, 1.0, 4.0] {
            for f in [0.5, 0.9, 0.99, 0.999, 1.001, 1.01, 1.1, 1.5] {
                let r0 = f * f64::sqrt(r2);
                let forcing = ForcingProfile::parabolic(r0, r2, eps, 0.0);
                let t_e = exceedance_time(&forcing, 0.0).unwrap().t_e;
                let crit = criterion_inverse_square(4.0, eps * r0, t_e).unwrap();
                if crit.margin.abs() <= BAND * eps {
                    continue;
                }
                let mut setup = SimulationSetup::new(EscapeBox::cube(1, 1e3), vec![-1.0]);
                setup.t_span = forcing.parabolic_window(1.0);
                let sim = classify_by_simulation(&sys, &forcing, &setup).unwrap();
                assert_eq!(sim.tipped, crit.tipped, "eps {eps}, R2 {r2}, R0/sqrt(R2) {f}");
            }
        }
    }
}

#[test]
fn monte_carlo_is_reproducible_and_thread_independent() {
    let spec = McSpec::canonical(0.0, 1.0, &FpeGrid1D::default(), 2e-3);
    let run = |threads: usize, seed: u64| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| monte_carlo_escape(&spec, 4_500, seed).unwrap())
    };
    let a = run(1, 9);
    assert_eq!(a, run(1, 9));
    assert_eq!(a, run(3, 9));
    assert_ne!(a.escaped, run(1, 10).escaped);
}

#[test]
fn critical_curve_approaches_the_asymptote_from_below() {
    let params = MonsoonParams::default();
    let report = analyze_fold(&params).unwrap();
    let d_b = report.fold.d_b;
    let sys = params.system(report.weights);
    let family = Sech2Family::new(A_INF, report.fold.q_b);
    let setup = SimulationSetup::new(escape_box(), GUESS.to_vec());
    let t_e = [1.0, 1.5, 2.0, 3.0, 4.0];
    let points = critical_curve(&sys, &family, &t_e, d_b, &setup, 1e-6);
    let scaled: Vec<f64> = points.iter().map(|p| p.r_crit.unwrap() * p.t_e * p.t_e).collect();
    assert!(scaled.windows(2).all(|w| w[1] >= w[0]), "{scaled:?}");
    assert!(scaled.iter().all(|s| *s <= 16.0 / d_b));
}
