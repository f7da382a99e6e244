//! Structural properties of the drift transform, the quadrature engine and
//! the classifier.

use martcheck::classifier::{
    boundary_profile, boundary_profile_with, classify_martingale, classify_positive_inf,
    classify_positive_t, classify_ui, full_report, full_report_with, Finiteness, Profile,
    ProfileFlags, SideFlags, Verdict,
};
use martcheck::diffusion::{
    check_assumption_h, q_drift, Boundary, CorrelationScheme, DiffusionSpec, StateInterval,
};
use martcheck::exec::Execution;
use martcheck::expr::ParamBindings;
use martcheck::quadrature::{
    scale_at, scale_limit, scale_limit_scaled, test_v_at, test_v_limit, Measure, QuadConfig,
    TailAnnotation,
};
use martcheck::scott::{analytic_profile, scott_spec, tail_annotations, ScottParams};
use proptest::prelude::*;

fn grid_params() -> Vec<ScottParams> {
    let vals = [0.5, 1.0, 2.0];
    let mut out = Vec::new();
    for &alpha in &vals {
        for &m in &vals {
            for &beta in &vals {
                out.push(ScottParams::new(alpha, m, beta, 1.0).unwrap());
            }
        }
    }
    out
}

fn schemes() -> Vec<CorrelationScheme> {
    let mut v: Vec<_> = [-1.0, -0.5, 0.0, 0.25, 0.5, 1.0]
        .iter()
        .map(|&r| CorrelationScheme::cholesky(r).unwrap())
        .collect();
    v.extend([0.0, 0.5, 1.0].iter().map(|&r| CorrelationScheme::wu_yor(r).unwrap()));
    v
}

fn cfg() -> QuadConfig {
    QuadConfig::default()
}

// ---------------------------------------------------------------- drift

proptest! {
    #[test]
    fn cholesky_drift_adds_rho_b_sigma(
        alpha in 0.1f64..3.0, m in 0.1f64..3.0, beta in 0.1f64..3.0,
        rho in -1.0f64..=1.0, x in 0.01f64..5.0,
    ) {
        let spec = scott_spec(ScottParams::new(alpha, m, beta, 1.0).unwrap()).unwrap();
        let q = q_drift(&spec, &CorrelationScheme::cholesky(rho).unwrap());
        let lhs = q.eval(x).unwrap() - spec.mu().eval(x).unwrap();
        let rhs = rho * spec.b().eval(x).unwrap() * spec.sigma().eval(x).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1.0), "{} vs {}", lhs, rhs);
    }

    #[test]
    fn wu_yor_drift_ignores_rho(r1 in 0.0f64..=1.0, r2 in 0.0f64..=1.0, x in 0.01f64..5.0) {
        let spec = scott_spec(ScottParams::default()).unwrap();
        let a = q_drift(&spec, &CorrelationScheme::wu_yor(r1).unwrap()).eval(x).unwrap();
        let b = q_drift(&spec, &CorrelationScheme::wu_yor(r2).unwrap()).eval(x).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn scott_satisfies_regularity_checks() {
    for p in grid_params() {
        let spec = scott_spec(p).unwrap();
        assert!(check_assumption_h(&spec, 500).is_empty(), "{p:?}");
    }
}

// ---------------------------------------------------------------- quadrature

#[test]
fn scale_is_strictly_increasing_and_test_functions_nonnegative() {
    let xs = [0.05, 0.3, 0.7, 1.0, 1.4, 2.0, 3.0];
    for p in grid_params() {
        let spec = scott_spec(p).unwrap();
        for scheme in [
            CorrelationScheme::cholesky(-0.5).unwrap(),
            CorrelationScheme::cholesky(1.0).unwrap(),
            CorrelationScheme::wu_yor(0.0).unwrap(),
        ] {
            let drift = q_drift(&spec, &scheme);
            let b2 = spec.b().squared();
            let j = spec.interval();
            // increments rather than values: far out they drop below one ulp of s
            for w in xs.windows(2) {
                let inc = scale_at(&drift, spec.sigma(), j, w[0], w[1], &cfg()).value().unwrap();
                assert!(inc > 0.0, "{p:?} {w:?}");
            }
            for &x in &xs {
                let v = test_v_at(&drift, spec.sigma(), &b2, j, 1.0, x, &cfg()).value().unwrap();
                if x == 1.0 {
                    assert_eq!(v, 0.0);
                } else {
                    assert!(v > 0.0, "{p:?} x={x} v_b={v}");
                }
            }
        }
    }
}

fn finiteness(v: &martcheck::quadrature::IntegralVerdict) -> Finiteness {
    v.into()
}

#[test]
fn limit_verdicts_do_not_depend_on_the_base_point() {
    for p in [ScottParams::default(), ScottParams::new(2.0, 0.5, 0.5, 1.0).unwrap()] {
        let spec = scott_spec(p).unwrap();
        for scheme in schemes() {
            let drift = q_drift(&spec, &scheme);
            let ann = tail_annotations(p, &scheme);
            let one = martcheck::diffusion::CoefficientField::constant(1.0);
            for boundary in [Boundary::Lower, Boundary::Upper] {
                let a = ann
                    .iter()
                    .find(|a| a.boundary == boundary && a.measure == Measure::Q);
                let run = |c: f64| {
                    (
                        finiteness(&scale_limit(&drift, spec.sigma(), spec.interval(), c, boundary, a, &cfg())),
                        finiteness(&test_v_limit(&drift, spec.sigma(), &one, spec.interval(), c, boundary, a, &cfg())),
                    )
                };
                let base = run(1.0);
                assert!(base.0 != Finiteness::Unknown && base.1 != Finiteness::Unknown);
                for c in [0.5, 2.0] {
                    assert_eq!(run(c), base, "{p:?} {scheme:?} {boundary:?} c={c}");
                }
            }
        }
    }
}

#[test]
fn annotations_never_contradict_raw_limits() {
    for p in [ScottParams::default(), ScottParams::new(0.5, 2.0, 2.0, 1.0).unwrap()] {
        let spec = scott_spec(p).unwrap();
        for scheme in schemes() {
            let drift = q_drift(&spec, &scheme);
            let b2 = spec.b().squared();
            for a in tail_annotations(p, &scheme) {
                if a.measure != Measure::Q {
                    continue;
                }
                let j = spec.interval();
                let pairs = [
                    (
                        scale_limit(&drift, spec.sigma(), j, 1.0, a.boundary, None, &cfg()),
                        scale_limit(&drift, spec.sigma(), j, 1.0, a.boundary, Some(&a), &cfg()),
                    ),
                    (
                        test_v_limit(&drift, spec.sigma(), &b2, j, 1.0, a.boundary, None, &cfg()),
                        test_v_limit(&drift, spec.sigma(), &b2, j, 1.0, a.boundary, Some(&a), &cfg()),
                    ),
                ];
                for (raw, annotated) in pairs {
                    if !raw.is_inconclusive() {
                        assert_eq!(finiteness(&raw), finiteness(&annotated), "{p:?} {scheme:?} {:?}", a.boundary);
                    }
                }
            }
        }
    }
}

#[test]
fn rescaling_the_scale_density_keeps_verdicts() {
    let ln_1e100 = 100.0 * std::f64::consts::LN_10;
    for p in [ScottParams::default(), ScottParams::new(2.0, 0.5, 0.5, 1.0).unwrap()] {
        let spec = scott_spec(p).unwrap();
        for scheme in schemes() {
            let drift = q_drift(&spec, &scheme);
            let ann = tail_annotations(p, &scheme);
            for boundary in [Boundary::Lower, Boundary::Upper] {
                let a: Option<&TailAnnotation> = ann
                    .iter()
                    .find(|a| a.boundary == boundary && a.measure == Measure::Q);
                let at = |shift: f64| {
                    finiteness(&scale_limit_scaled(
                        &drift,
                        spec.sigma(),
                        spec.interval(),
                        1.0,
                        boundary,
                        a,
                        &cfg(),
                        shift,
                    ))
                };
                let base = at(0.0);
                assert_ne!(base, Finiteness::Unknown);
                assert_eq!(at(ln_1e100), base, "{p:?} {scheme:?} {boundary:?} x1e100");
                assert_eq!(at(-ln_1e100), base, "{p:?} {scheme:?} {boundary:?} x1e-100");
            }
        }
    }
}

// ---------------------------------------------------------------- classifier

fn finiteness_strategy() -> impl Strategy<Value = Finiteness> {
    prop::sample::select(vec![Finiteness::Finite, Finiteness::Infinite, Finiteness::Unknown])
}

fn side_strategy() -> impl Strategy<Value = SideFlags> {
    prop::array::uniform6(finiteness_strategy()).prop_map(|f| SideFlags {
        s_lower: f[0],
        s_upper: f[1],
        v_lower: f[2],
        v_upper: f[3],
        vb_lower: f[4],
        vb_upper: f[5],
    })
}

fn fields(s: &mut SideFlags) -> [&mut Finiteness; 6] {
    [
        &mut s.s_lower,
        &mut s.s_upper,
        &mut s.v_lower,
        &mut s.v_upper,
        &mut s.vb_lower,
        &mut s.vb_upper,
    ]
}

/// Replace every unknown slot using the bits of `mask`.
fn complete(mut f: ProfileFlags, mask: u32) -> ProfileFlags {
    let mut bit = 0;
    for side in [&mut f.p, &mut f.q] {
        for slot in fields(side) {
            if *slot == Finiteness::Unknown {
                *slot = if mask >> bit & 1 == 1 {
                    Finiteness::Finite
                } else {
                    Finiteness::Infinite
                };
                bit += 1;
            }
        }
    }
    f
}

fn all_verdicts(f: &ProfileFlags) -> [Verdict; 4] {
    [
        classify_martingale(f),
        classify_ui(f),
        classify_positive_t(f),
        classify_positive_inf(f),
    ]
}

proptest! {
    /// A decided answer on a partially known profile survives every way of
    /// filling in the unknown slots.
    #[test]
    fn decided_verdicts_are_sound(p in side_strategy(), q in side_strategy(), b_is_zero: bool, mask: u32) {
        let partial = ProfileFlags { p, q, b_is_zero };
        let full = complete(partial, mask);
        for (a, b) in all_verdicts(&partial).into_iter().zip(all_verdicts(&full)) {
            match a {
                Verdict::Unknown => prop_assert_ne!(b, Verdict::Unknown),
                Verdict::No => prop_assert_eq!(b, Verdict::No),
                Verdict::Yes(_) => prop_assert!(b.is_yes()),
            }
        }
    }

    #[test]
    fn fully_known_profiles_always_decide(p in side_strategy(), q in side_strategy(), b_is_zero: bool, mask: u32) {
        let full = complete(ProfileFlags { p, q, b_is_zero }, mask);
        for v in all_verdicts(&full) {
            prop_assert_ne!(v, Verdict::Unknown);
        }
    }
}

#[test]
fn ui_implies_martingale_on_computed_profiles() {
    for p in grid_params() {
        let spec = scott_spec(p).unwrap();
        for scheme in schemes() {
            let prof = boundary_profile(&spec, &scheme, 1.0, &cfg(), &tail_annotations(p, &scheme)).unwrap();
            if classify_ui(&prof).is_yes() {
                assert!(classify_martingale(&prof).is_yes(), "{p:?} {scheme:?}");
            }
        }
    }
}

#[test]
fn reports_are_stable_across_base_points_and_modes() {
    for p in [
        ScottParams::new(1.0, 1.0, 1.0, 1.0).unwrap(),
        ScottParams::new(2.0, 0.5, 0.5, 0.25).unwrap(),
    ] {
        let spec = scott_spec(p).unwrap();
        for scheme in schemes() {
            let ann = tail_annotations(p, &scheme);
            let x0 = p.x0;
            let base = full_report(&spec, &scheme, x0, &cfg(), &ann).unwrap();
            for c in [x0 / 2.0, 2.0 * x0] {
                let r = full_report(&spec, &scheme, c, &cfg(), &ann).unwrap();
                assert_eq!(r.verdicts(), base.verdicts(), "{p:?} {scheme:?} c={c}");
            }
            let seq = full_report_with(&spec, &scheme, x0, &cfg(), &ann, Execution::Sequential).unwrap();
            assert_eq!(seq, base);
        }
    }
}

#[test]
fn zero_correlation_leaves_the_drift_unchanged() {
    let params = ParamBindings::from([("k", 0.7)]);
    let generic = DiffusionSpec::parse(
        StateInterval::new(f64::NEG_INFINITY, f64::INFINITY).unwrap(),
        "-k*x",
        "1 + x^2/10",
        "x^2 + 1",
        0.0,
        params,
    )
    .unwrap();
    let scott = scott_spec(ScottParams::new(0.5, 2.0, 1.5, 1.0).unwrap()).unwrap();
    for spec in [generic, scott] {
        let scheme = CorrelationScheme::cholesky(0.0).unwrap();
        let c = spec.default_base_point();
        let prof = boundary_profile_with(&spec, &scheme, c, &cfg(), &[], Execution::Sequential).unwrap();
        assert_eq!(prof.flags().p, prof.flags().q);
        assert_eq!(prof.p, prof.q);
    }
}

#[test]
fn analytic_rows_are_internally_consistent() {
    // v infinite forces v_b infinite when b^2 >= 1, as for exp(x) on (0, inf)
    for scheme in schemes() {
        let a = analytic_profile(ScottParams::default(), &scheme);
        for side in [a.p, a.q] {
            if side.v_upper == Finiteness::Infinite {
                assert_eq!(side.vb_upper, Finiteness::Infinite);
            }
            if side.v_lower == Finiteness::Infinite {
                assert_eq!(side.vb_lower, Finiteness::Infinite);
            }
        }
    }
}
