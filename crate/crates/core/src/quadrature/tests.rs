use super::*;
use crate::diffusion::StateInterval;

fn scott_p(alpha: f64, m: f64, beta: f64) -> (CoefficientField, CoefficientField) {
    (
        CoefficientField::new(move |x| Ok(alpha * (m - x)), None),
        CoefficientField::constant(beta),
    )
}

fn scott_q(alpha: f64, m: f64, beta: f64, rho: f64) -> (CoefficientField, CoefficientField) {
    (
        CoefficientField::new(move |x| Ok(alpha * (m - x) + rho * beta * x.exp()), None),
        CoefficientField::constant(beta),
    )
}

fn half() -> StateInterval {
    StateInterval::positive_half_line()
}

/// Composite Simpson on `n` panels.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

#[test]
fn log_density_scott() {
    let (mu, sig) = scott_p(1.0, 1.0, 1.0);
    assert_eq!(log_scale_density(&mu, &sig, 1.0, 1.0).unwrap(), 0.0);
    let l = log_scale_density(&mu, &sig, 1.0, 2.0).unwrap();
    assert!((l - 1.0).abs() < 1e-12);
    let (mu, sig) = scott_q(1.0, 1.0, 1.0, 1.0);
    let l = log_scale_density(&mu, &sig, 1.0, 2.0).unwrap();
    // -int_1^2 2((1 - z) + e^z) dz = 1 - 2(e^2 - e)
    let want = 1.0 - 2.0 * (2f64.exp() - 1f64.exp());
    assert!((l - want).abs() < 1e-12);
}

#[test]
fn scale_at_matches_simpson() {
    let (mu, sig) = scott_p(1.0, 1.0, 1.0);
    let cfg = QuadConfig::default();
    let s2 = scale_at(&mu, &sig, half(), 1.0, 2.0, &cfg).value().unwrap();
    let want = simpson(|y| ((y - 1.0) * (y - 1.0)).exp(), 1.0, 2.0, 2000);
    assert!((s2 / want - 1.0).abs() < 1e-10, "{s2} vs {want}");
    assert!((s2 - 1.46265).abs() < 1e-4 * 1.46265);
    let s05 = scale_at(&mu, &sig, half(), 1.0, 0.5, &cfg).value().unwrap();
    let want = -simpson(|y| ((y - 1.0) * (y - 1.0)).exp(), 0.5, 1.0, 2000);
    assert!((s05 / want - 1.0).abs() < 1e-10);
    assert_eq!(scale_at(&mu, &sig, half(), 1.0, 1.0, &cfg).value(), Some(0.0));
}

#[test]
fn test_v_matches_iterated_form() {
    let (mu, sig) = scott_p(1.0, 1.0, 1.0);
    let cfg = QuadConfig::default();
    let g = |y: f64| ((y - 1.0) * (y - 1.0)).exp();
    for (weight, wf) in [
        (CoefficientField::constant(1.0), (|_: f64| 1.0) as fn(f64) -> f64),
        (CoefficientField::new(|x: f64| Ok((2.0 * x).exp()), None), |y: f64| (2.0 * y).exp()),
    ] {
        let v = test_v_at(&mu, &sig, &weight, half(), 1.0, 2.0, &cfg).value().unwrap();
        let want = 2.0 * simpson(|y| simpson(g, y, 2.0, 200) * wf(y) / g(y), 1.0, 2.0, 200);
        assert!((v / want - 1.0).abs() < 1e-8, "{v} vs {want}");
    }
}

#[test]
fn scott_limits() {
    let cfg = QuadConfig::default();
    let one = CoefficientField::constant(1.0);
    let b2 = CoefficientField::new(|x: f64| Ok((2.0 * x).exp()), None);
    let (mu, sig) = scott_p(1.0, 1.0, 1.0);
    assert!(scale_limit(&mu, &sig, half(), 1.0, Boundary::Upper, None, &cfg).is_infinite());
    let s0 = scale_limit(&mu, &sig, half(), 1.0, Boundary::Lower, None, &cfg);
    let want = -simpson(|y| ((y - 1.0) * (y - 1.0)).exp(), 0.0, 1.0, 4000);
    assert!((s0.value().unwrap() / want - 1.0).abs() < 1e-7, "{s0:?}");
    assert!(test_v_limit(&mu, &sig, &one, half(), 1.0, Boundary::Upper, None, &cfg).is_infinite());
    assert!(test_v_limit(&mu, &sig, &b2, half(), 1.0, Boundary::Lower, None, &cfg).is_finite());

    let (mu, sig) = scott_q(1.0, 1.0, 1.0, 0.5);
    assert!(scale_limit(&mu, &sig, half(), 1.0, Boundary::Upper, None, &cfg).is_finite());
    assert!(test_v_limit(&mu, &sig, &one, half(), 1.0, Boundary::Upper, None, &cfg).is_finite());
    assert!(test_v_limit(&mu, &sig, &b2, half(), 1.0, Boundary::Upper, None, &cfg).is_infinite());

    let (mu, sig) = scott_q(1.0, 1.0, 1.0, -0.5);
    assert!(scale_limit(&mu, &sig, half(), 1.0, Boundary::Upper, None, &cfg).is_infinite());
    assert!(test_v_limit(&mu, &sig, &one, half(), 1.0, Boundary::Upper, None, &cfg).is_infinite());
}

#[test]
fn annotated_paths_agree() {
    let cfg = QuadConfig::default();
    let one = CoefficientField::constant(1.0);
    let (mu, sig) = scott_q(1.0, 1.0, 1.0, 0.5);
    let ann = TailAnnotation {
        boundary: Boundary::Upper,
        measure: Measure::Q,
        equivalent: CoefficientField::new(|y: f64| Ok((-y).exp()), None),
    };
    let raw = scale_limit(&mu, &sig, half(), 1.0, Boundary::Upper, None, &cfg);
    let an = scale_limit(&mu, &sig, half(), 1.0, Boundary::Upper, Some(&ann), &cfg);
    assert_eq!(raw, an);
    let raw = test_v_limit(&mu, &sig, &one, half(), 1.0, Boundary::Upper, None, &cfg);
    let an = test_v_limit(&mu, &sig, &one, half(), 1.0, Boundary::Upper, Some(&ann), &cfg);
    assert_eq!(raw, an);
    // a wrong-boundary annotation is refused
    let bad = TailAnnotation { boundary: Boundary::Lower, ..ann };
    assert!(scale_limit(&mu, &sig, half(), 1.0, Boundary::Upper, Some(&bad), &cfg).is_inconclusive());
}

#[test]
fn verdict_json_shape() {
    let v = IntegralVerdict::Finite { value: 1.5, err: 0.0 };
    assert_eq!(serde_json::to_string(&v).unwrap(), r#"{"kind":"finite","value":1.5,"err":0.0}"#);
    let v = IntegralVerdict::Infinite { sign: -1 };
    assert_eq!(serde_json::to_string(&v).unwrap(), r#"{"kind":"infinite","sign":-1}"#);
}

#[test]
fn inner_integral_is_smooth_far_from_the_base_point() {
    // s' tends to a constant, so H(z) saturates; rounding noise in H would
    // stall the outer adaptive integration of v
    let drift = CoefficientField::new(|x| Ok(-0.7 * x), None);
    let sigma = CoefficientField::new(|x| Ok(1.0 + x * x / 10.0), None);
    let j = StateInterval::new(f64::NEG_INFINITY, f64::INFINITY).unwrap();
    let mut eng = engine::Engine::new(&drift, &sigma, None, j, 0.0, &QuadConfig::default());
    let hs: Vec<f64> = (0..8)
        .map(|i| eng.log_h(1e8 + i as f64 * 1e6).unwrap())
        .collect();
    let (lo, hi) = hs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &h| (a.min(h), b.max(h)));
    assert!(hi - lo < 1e-12, "{hs:?}");
    let one = CoefficientField::constant(1.0);
    let v = test_v_limit(&drift, &sigma, &one, j, 0.0, Boundary::Upper, None, &QuadConfig::default());
    assert!(v.is_infinite(), "{v:?}");
}
