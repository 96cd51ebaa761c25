use habitgrowth::hjb::{feedback, g_reduced, g_value, value_function, StateSample};
use habitgrowth::oracle::DiscreteProblem;
use habitgrowth::simulate::simulate_integral_form;
use habitgrowth::spectral::{phi, real_root, regime, Regime};
use habitgrowth::{validate, HistoryGrid, InitialState, ModelParams};
use proptest::prelude::*;

fn valid_params() -> impl Strategy<Value = ModelParams> {
    (
        0.1f64..3.0,
        0.05f64..=1.0,
        0.2f64..5.0,
        0.01f64..0.1,
        0.02f64..0.4,
        0.01f64..0.3,
        prop_oneof![0.2f64..0.95, 1.05f64..5.0],
    )
        .prop_map(|(eta, frac, tau, delta, net, rho, gamma)| {
            ModelParams::new(frac * eta, eta, tau, delta + net, delta, rho, gamma)
        })
        .prop_filter("standing assumptions", |p| validate(p).is_ok())
}

fn any_memory() -> impl Strategy<Value = ModelParams> {
    (0.05f64..3.0, 0.05f64..3.0, 0.1f64..10.0)
        .prop_map(|(eps, eta, tau)| ModelParams::new(eps, eta, tau, 0.3, 0.05, 0.04, 2.0))
}

fn smooth_past(tau: f64, n: usize, level: f64, amp: f64, freq: f64) -> HistoryGrid {
    HistoryGrid::from_fn(tau, n, |s| level * (1.0 + amp * (freq * s).sin())).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn phi_is_increasing(p in any_memory(), a in -5.0f64..5.0, d in 1e-3f64..3.0) {
        prop_assert!(phi(a + d, &p) > phi(a, &p));
    }

    #[test]
    fn regime_tag_follows_root_sign(p in any_memory()) {
        let l0 = real_root(&p).unwrap();
        prop_assert!(phi(l0, &p).abs() < 1e-12);
        let s = 1.0 - p.eps * (1.0 - (-p.eta * p.tau).exp()) / p.eta;
        let tag = regime(&p).unwrap();
        if s.abs() > 1e-9 {
            prop_assert_eq!(tag == Regime::PositiveRoot, l0 > 0.0);
            prop_assert_eq!(tag == Regime::NegativeRoots, l0 < 0.0);
        }
        prop_assert!(l0 < p.eps - p.eta);
    }

    #[test]
    fn growth_identity(p in valid_params()) {
        let d = validate(&p).unwrap();
        prop_assert!((d.r - d.alpha - d.growth).abs() < 1e-12 * (1.0 + d.r.abs()));
        prop_assert!(d.alpha > 0.0);
        prop_assert!(d.kappa0 > 0.0 && d.kappa0 <= 1.0);
    }

    #[test]
    fn state_functions_are_homogeneous(
        p in valid_params(),
        level in 0.1f64..3.0,
        amp in 0.0f64..0.5,
        extra in 0.5f64..5.0,
        scale in 0.1f64..10.0,
    ) {
        // keep eta * step small so the two G quadratures agree to the cross-check tolerance
        let n = (1000.0 * p.eta * p.tau).ceil().max(400.0) as usize;
        let past = smooth_past(p.tau, n, level, amp, 2.0);
        let outside = g_reduced(&StateSample::new(0.0, past.clone()).unwrap(), &p);
        let k0 = (-outside / p.kappa0()).max(0.0) * (1.0 + extra) + 0.1 * level;
        let st = StateSample::new(k0, past.clone()).unwrap();
        let big = StateSample::new(scale * k0, past.scaled(scale)).unwrap();
        let (g, gs) = (g_value(&st, &p).unwrap(), g_value(&big, &p).unwrap());
        prop_assert!((gs - scale * g).abs() <= 1e-12 * gs.abs().max(1.0));
        let (v, vs) = (value_function(&st, &p).unwrap(), value_function(&big, &p).unwrap());
        prop_assert!((vs - scale.powf(1.0 - p.gamma) * v).abs() <= 1e-10 * vs.abs());
        let (c, cs) = (feedback(&st, &p).unwrap(), feedback(&big, &p).unwrap());
        prop_assert!((cs - scale * c).abs() <= 1e-12 * cs.abs());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn trajectories_scale_with_initial_data(scale in 0.1f64..10.0) {
        let p = ModelParams::baseline();
        let hist = HistoryGrid::constant(1.0, 100, 1.0).unwrap();
        let a = simulate_integral_form(&p, &InitialState::new(10.0, hist.clone()).unwrap(), 3.0, 100).unwrap();
        let b = simulate_integral_form(&p, &InitialState::new(10.0 * scale, hist.scaled(scale)).unwrap(), 3.0, 100).unwrap();
        for (x, y) in a.rows.iter().zip(&b.rows) {
            prop_assert!((y.k - scale * x.k).abs() <= 1e-11 * y.k.abs());
            prop_assert!((y.c - scale * x.c).abs() <= 1e-11 * y.c.abs());
        }
    }

    #[test]
    fn objective_is_concave_along_segments(
        wa in 0.0f64..0.3,
        wb in 0.0f64..0.3,
        fa in 0.5f64..4.0,
        fb in 0.5f64..4.0,
    ) {
        let p = ModelParams::baseline();
        let init = InitialState::new(10.0, HistoryGrid::constant(1.0, 20, 1.0).unwrap()).unwrap();
        let prob = DiscreteProblem::new(&p, &init, 2.0, 40).unwrap();
        let base = prob.minimal_start().unwrap();
        let make = |w: f64, f: f64| -> Vec<f64> {
            base.iter().enumerate().map(|(j, c)| c * (1.2 + w * (f * j as f64 * 0.05).sin())).collect()
        };
        let (a, b) = (make(wa, fa), make(wb, fb));
        let (ja, jb) = (prob.evaluate_objective(&a).unwrap(), prob.evaluate_objective(&b).unwrap());
        prop_assume!(ja.is_finite() && jb.is_finite());
        let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
        let jm = prob.evaluate_objective(&mid).unwrap();
        prop_assert!(jm >= 0.5 * (ja + jb) - 1e-12 * jm.abs());
    }
}
