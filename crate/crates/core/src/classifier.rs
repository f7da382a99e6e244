//! Boundary profiles and the four classification questions: martingale,
//! uniform integrability, positivity at a finite horizon, positivity at
//! infinity.
//!
//! Conditions are evaluated in three-valued logic. A literal built on an
//! inconclusive limit is unknown; a condition is satisfied when all its
//! literals hold, fails when any literal fails, and is otherwise unknown.
//! A question is answered `yes` by its first satisfied condition, `no` when
//! every condition fails, and `unknown` otherwise.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffusion::{
    check_assumption_h, q_drift, Boundary, CoefficientField, CorrelationScheme, DiffusionSpec,
    Warning,
};
use crate::exec::{map_ordered, Execution};
use crate::expr::{square_lower_bound, Interval};
use crate::quadrature::{
    scale_limit, test_v_limit, IntegralVerdict, Measure, QuadConfig, TailAnnotation,
};

/// The six boundary limits under one measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureProfile {
    pub s_lower: IntegralVerdict,
    pub s_upper: IntegralVerdict,
    pub v_lower: IntegralVerdict,
    pub v_upper: IntegralVerdict,
    pub vb_lower: IntegralVerdict,
    pub vb_upper: IntegralVerdict,
}

/// Boundary limits of the scale and test functions under both measures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryProfile {
    /// Under the original measure (drift `mu`).
    pub p: MeasureProfile,
    /// Under the price-numeraire measure (corrected drift).
    pub q: MeasureProfile,
    pub b_is_zero: bool,
}

impl BoundaryProfile {
    pub fn measure(&self, m: Measure) -> &MeasureProfile {
        match m {
            Measure::P => &self.p,
            Measure::Q => &self.q,
        }
    }
}

/// Label of the condition that decided a `yes`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Witness {
    A,
    B,
    C,
    D,
    #[serde(rename = "A'")]
    APrime,
    #[serde(rename = "B'")]
    BPrime,
    #[serde(rename = "C'")]
    CPrime,
    #[serde(rename = "D'")]
    DPrime,
    #[serde(rename = "1")]
    One,
    #[serde(rename = "2")]
    Two,
    #[serde(rename = "3")]
    Three,
    #[serde(rename = "4")]
    Four,
}

impl Witness {
    pub fn label(self) -> &'static str {
        match self {
            Witness::A => "A",
            Witness::B => "B",
            Witness::C => "C",
            Witness::D => "D",
            Witness::APrime => "A'",
            Witness::BPrime => "B'",
            Witness::CPrime => "C'",
            Witness::DPrime => "D'",
            Witness::One => "1",
            Witness::Two => "2",
            Witness::Three => "3",
            Witness::Four => "4",
        }
    }
}

impl fmt::Display for Witness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Answer to one classification question.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "VerdictRepr", try_from = "VerdictRepr")]
pub enum Verdict {
    Yes(Witness),
    No,
    Unknown,
}

impl Verdict {
    pub fn is_yes(&self) -> bool {
        matches!(self, Verdict::Yes(_))
    }

    pub fn witness(&self) -> Option<Witness> {
        match self {
            Verdict::Yes(w) => Some(*w),
            _ => None,
        }
    }

    pub fn keyword(&self) -> &'static str {
        match self {
            Verdict::Yes(_) => "yes",
            Verdict::No => "no",
            Verdict::Unknown => "unknown",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Yes(w) => write!(f, "yes ({w})"),
            other => f.write_str(other.keyword()),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct VerdictRepr {
    verdict: String,
    witness: Option<Witness>,
}

impl From<Verdict> for VerdictRepr {
    fn from(v: Verdict) -> Self {
        VerdictRepr {
            verdict: v.keyword().to_string(),
            witness: v.witness(),
        }
    }
}

impl TryFrom<VerdictRepr> for Verdict {
    type Error = String;

    fn try_from(r: VerdictRepr) -> Result<Self, Self::Error> {
        match (r.verdict.as_str(), r.witness) {
            ("yes", Some(w)) => Ok(Verdict::Yes(w)),
            ("no", None) => Ok(Verdict::No),
            ("unknown", None) => Ok(Verdict::Unknown),
            (v, w) => Err(format!("invalid verdict {v:?} with witness {w:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleReport {
    pub martingale_on_compacts: Verdict,
    pub uniformly_integrable: Verdict,
    pub positive_finite_t: Verdict,
    pub positive_at_infinity: Verdict,
    pub profile: BoundaryProfile,
    pub warnings: Vec<Warning>,
}

impl MartingaleReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn verdicts(&self) -> [(&'static str, Verdict); 4] {
        [
            ("martingale_on_compacts", self.martingale_on_compacts),
            ("uniformly_integrable", self.uniformly_integrable),
            ("positive_finite_t", self.positive_finite_t),
            ("positive_at_infinity", self.positive_at_infinity),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClassifierError {
    #[error("base point {0} is outside the state interval")]
    BasePoint(f64),
    #[error(
        "inconsistent profile under {measure:?} at the {boundary:?} boundary: \
         v is infinite but v_b is finite although b^2 is bounded below"
    )]
    Inconsistent { measure: Measure, boundary: Boundary },
}

/// Whether a boundary limit is finite, as far as is known.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Finiteness {
    Finite,
    Infinite,
    Unknown,
}

impl From<&IntegralVerdict> for Finiteness {
    fn from(v: &IntegralVerdict) -> Self {
        match v {
            IntegralVerdict::Finite { .. } => Finiteness::Finite,
            IntegralVerdict::Infinite { .. } => Finiteness::Infinite,
            IntegralVerdict::Inconclusive { .. } => Finiteness::Unknown,
        }
    }
}

/// Finiteness of the six limits under one measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SideFlags {
    pub s_lower: Finiteness,
    pub s_upper: Finiteness,
    pub v_lower: Finiteness,
    pub v_upper: Finiteness,
    pub vb_lower: Finiteness,
    pub vb_upper: Finiteness,
}

impl From<&MeasureProfile> for SideFlags {
    fn from(m: &MeasureProfile) -> Self {
        SideFlags {
            s_lower: (&m.s_lower).into(),
            s_upper: (&m.s_upper).into(),
            v_lower: (&m.v_lower).into(),
            v_upper: (&m.v_upper).into(),
            vb_lower: (&m.vb_lower).into(),
            vb_upper: (&m.vb_upper).into(),
        }
    }
}

/// Everything the conditions look at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ProfileFlags {
    pub p: SideFlags,
    pub q: SideFlags,
    pub b_is_zero: bool,
}

/// Anything the condition tables can be evaluated on.
pub trait Profile {
    fn flags(&self) -> ProfileFlags;
}

impl Profile for ProfileFlags {
    fn flags(&self) -> ProfileFlags {
        *self
    }
}

impl Profile for BoundaryProfile {
    fn flags(&self) -> ProfileFlags {
        ProfileFlags {
            p: (&self.p).into(),
            q: (&self.q).into(),
            b_is_zero: self.b_is_zero,
        }
    }
}

/// Three-valued truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Tv {
    True,
    False,
    Unknown,
}

fn finite(v: Finiteness) -> Tv {
    match v {
        Finiteness::Finite => Tv::True,
        Finiteness::Infinite => Tv::False,
        Finiteness::Unknown => Tv::Unknown,
    }
}

fn infinite(v: Finiteness) -> Tv {
    match v {
        Finiteness::Finite => Tv::False,
        Finiteness::Infinite => Tv::True,
        Finiteness::Unknown => Tv::Unknown,
    }
}

fn both(a: Tv, b: Tv) -> Tv {
    match (a, b) {
        (Tv::False, _) | (_, Tv::False) => Tv::False,
        (Tv::True, Tv::True) => Tv::True,
        _ => Tv::Unknown,
    }
}

fn holds(b: bool) -> Tv {
    if b {
        Tv::True
    } else {
        Tv::False
    }
}

fn decide(conditions: [(Witness, Tv); 4]) -> Verdict {
    if let Some((w, _)) = conditions.iter().find(|(_, t)| *t == Tv::True) {
        return Verdict::Yes(*w);
    }
    if conditions.iter().all(|(_, t)| *t == Tv::False) {
        Verdict::No
    } else {
        Verdict::Unknown
    }
}

/// Conditions (A)-(D) on the price-numeraire side.
pub fn classify_martingale(p: &impl Profile) -> Verdict {
    let q = p.flags().q;
    decide([
        (Witness::A, both(infinite(q.v_lower), infinite(q.v_upper))),
        (Witness::B, both(finite(q.vb_upper), infinite(q.v_upper))),
        (Witness::C, both(finite(q.vb_lower), infinite(q.v_upper))),
        (Witness::D, both(finite(q.vb_upper), finite(q.vb_lower))),
    ])
}

/// Conditions (A')-(D').
pub fn classify_ui(p: &impl Profile) -> Verdict {
    let f = p.flags();
    let q = f.q;
    decide([
        (Witness::APrime, holds(f.b_is_zero)),
        (Witness::BPrime, both(finite(q.vb_upper), infinite(q.s_lower))),
        (Witness::CPrime, both(finite(q.vb_lower), infinite(q.s_upper))),
        (Witness::DPrime, both(finite(q.vb_upper), finite(q.vb_lower))),
    ])
}

/// Conditions 1-4 for positivity at a finite horizon: (A)-(D) under the
/// original measure.
pub fn classify_positive_t(p: &impl Profile) -> Verdict {
    let m = p.flags().p;
    decide([
        (Witness::One, both(infinite(m.v_lower), infinite(m.v_upper))),
        (Witness::Two, both(finite(m.vb_upper), infinite(m.v_upper))),
        (Witness::Three, both(finite(m.vb_lower), infinite(m.v_upper))),
        (Witness::Four, both(finite(m.vb_upper), finite(m.vb_lower))),
    ])
}

/// Conditions 1-4 for positivity at infinity, reported as evaluated: `yes`
/// names the first condition that holds, `no` means none holds.
pub fn classify_positive_inf(p: &impl Profile) -> Verdict {
    let f = p.flags();
    let m = f.p;
    decide([
        (Witness::One, holds(f.b_is_zero)),
        (Witness::Two, both(finite(m.vb_upper), infinite(m.s_lower))),
        (Witness::Three, both(finite(m.vb_lower), infinite(m.s_upper))),
        (Witness::Four, both(finite(m.vb_upper), finite(m.vb_lower))),
    ])
}

/// Number of probe points for the numeric `b = 0` fallback.
const ZERO_PROBES: usize = 1000;

/// Whether `b` vanishes identically: symbolically if the expression is the
/// literal zero, otherwise heuristically on a probe grid (with a warning).
pub fn b_is_zero(spec: &DiffusionSpec) -> (bool, Option<Warning>) {
    if spec.b_expr().is_literal_zero() {
        return (true, None);
    }
    let grid = spec.interval().probe_grid(ZERO_PROBES);
    let zero = grid
        .iter()
        .all(|&x| matches!(spec.b().eval(x), Ok(v) if v.abs() < 1e-14));
    let warning = zero.then(|| Warning {
        x: None,
        message: format!(
            "b treated as identically zero: |b| < 1e-14 on {ZERO_PROBES} probe points \
             (numerical check, not a proof)"
        ),
    });
    (zero, warning)
}

#[derive(Debug, Clone, Copy)]
enum Slot {
    S,
    V,
    Vb,
}

fn side_interval(spec: &DiffusionSpec, c: f64, boundary: Boundary) -> Interval {
    match boundary {
        Boundary::Lower => Interval::new(spec.interval().lower(), c),
        Boundary::Upper => Interval::new(c, spec.interval().upper()),
    }
}

/// All twelve boundary limits. Slots are evaluated independently (in
/// parallel under [`Execution::Parallel`]).
pub fn boundary_profile(
    spec: &DiffusionSpec,
    scheme: &CorrelationScheme,
    c: f64,
    cfg: &QuadConfig,
    annotations: &[TailAnnotation],
) -> Result<BoundaryProfile, ClassifierError> {
    boundary_profile_with(spec, scheme, c, cfg, annotations, Execution::default())
}

pub fn boundary_profile_with(
    spec: &DiffusionSpec,
    scheme: &CorrelationScheme,
    c: f64,
    cfg: &QuadConfig,
    annotations: &[TailAnnotation],
    exec: Execution,
) -> Result<BoundaryProfile, ClassifierError> {
    let interval = spec.interval();
    if !interval.contains(c) {
        return Err(ClassifierError::BasePoint(c));
    }
    let (zero_b, _) = b_is_zero(spec);
    let q_drift_field = q_drift(spec, scheme);
    // identical drifts give identical limits
    let q_same = zero_b || scheme.drift_lambda() == 0.0;
    let one = CoefficientField::constant(1.0);
    let b2 = spec.b().squared();

    let mut slots = Vec::new();
    let measures: &[Measure] = if q_same {
        &[Measure::P]
    } else {
        &[Measure::P, Measure::Q]
    };
    for &m in measures {
        for boundary in [Boundary::Lower, Boundary::Upper] {
            for slot in [Slot::S, Slot::V, Slot::Vb] {
                slots.push((m, boundary, slot));
            }
        }
    }
    let results = map_ordered(exec, &slots, |&(m, boundary, slot)| {
        let drift = match m {
            Measure::P => spec.mu(),
            Measure::Q => &q_drift_field,
        };
        let ann = annotations
            .iter()
            .find(|a| a.measure == m && a.boundary == boundary);
        match slot {
            Slot::S => scale_limit(drift, spec.sigma(), interval, c, boundary, ann, cfg),
            Slot::V => test_v_limit(drift, spec.sigma(), &one, interval, c, boundary, ann, cfg),
            Slot::Vb => test_v_limit(drift, spec.sigma(), &b2, interval, c, boundary, ann, cfg),
        }
    });
    let mut it = results.into_iter();
    let mut next_profile = || {
        let mut take = || it.next().expect("slot count");
        let (s_lower, v_lower, vb_lower) = (take(), take(), take());
        let (s_upper, v_upper, vb_upper) = (take(), take(), take());
        MeasureProfile {
            s_lower,
            s_upper,
            v_lower,
            v_upper,
            vb_lower,
            vb_upper,
        }
    };
    let p = next_profile();
    let q = if q_same { p.clone() } else { next_profile() };
    let profile = BoundaryProfile {
        p,
        q,
        b_is_zero: zero_b,
    };
    check_consistency(spec, c, &profile)?;
    Ok(profile)
}

/// Reject profiles where `v` diverges but `v_b` converges at a boundary
/// near which `b^2` is certifiably bounded below (impossible, since then
/// `v_b >= delta v`). Skipped where no bound can be certified.
fn check_consistency(
    spec: &DiffusionSpec,
    c: f64,
    p: &BoundaryProfile,
) -> Result<(), ClassifierError> {
    for boundary in [Boundary::Lower, Boundary::Upper] {
        let dom = side_interval(spec, c, boundary);
        if square_lower_bound(spec.b_expr(), dom, spec.params()).is_none() {
            continue;
        }
        for m in [Measure::P, Measure::Q] {
            let mp = p.measure(m);
            let (v, vb) = match boundary {
                Boundary::Lower => (&mp.v_lower, &mp.vb_lower),
                Boundary::Upper => (&mp.v_upper, &mp.vb_upper),
            };
            if v.is_infinite() && vb.is_finite() {
                return Err(ClassifierError::Inconsistent {
                    measure: m,
                    boundary,
                });
            }
        }
    }
    Ok(())
}

/// Profile, all four classifications, and regularity warnings.
pub fn full_report(
    spec: &DiffusionSpec,
    scheme: &CorrelationScheme,
    c: f64,
    cfg: &QuadConfig,
    annotations: &[TailAnnotation],
) -> Result<MartingaleReport, ClassifierError> {
    full_report_with(spec, scheme, c, cfg, annotations, Execution::default())
}

pub fn full_report_with(
    spec: &DiffusionSpec,
    scheme: &CorrelationScheme,
    c: f64,
    cfg: &QuadConfig,
    annotations: &[TailAnnotation],
    exec: Execution,
) -> Result<MartingaleReport, ClassifierError> {
    let profile = boundary_profile_with(spec, scheme, c, cfg, annotations, exec)?;
    let mut warnings = check_assumption_h(spec, 200);
    if let (_, Some(w)) = b_is_zero(spec) {
        warnings.push(w);
    }
    Ok(MartingaleReport {
        martingale_on_compacts: classify_martingale(&profile),
        uniformly_integrable: classify_ui(&profile),
        positive_finite_t: classify_positive_t(&profile),
        positive_at_infinity: classify_positive_inf(&profile),
        profile,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::StateInterval;
    use crate::expr::ParamBindings;

    fn fin() -> IntegralVerdict {
        IntegralVerdict::Finite { value: 1.0, err: 0.0 }
    }
    fn inf() -> IntegralVerdict {
        IntegralVerdict::Infinite { sign: 1 }
    }
    fn unk() -> IntegralVerdict {
        IntegralVerdict::Inconclusive {
            reason: "test".into(),
        }
    }

    fn side(s: [IntegralVerdict; 6]) -> MeasureProfile {
        let [s_lower, s_upper, v_lower, v_upper, vb_lower, vb_upper] = s;
        MeasureProfile {
            s_lower,
            s_upper,
            v_lower,
            v_upper,
            vb_lower,
            vb_upper,
        }
    }

    /// Scott-like rows: Cholesky rho <= 0 on the Q side.
    fn scott_like(q: [IntegralVerdict; 6]) -> BoundaryProfile {
        BoundaryProfile {
            p: side([fin(), inf(), fin(), inf(), fin(), inf()]),
            q: side(q),
            b_is_zero: false,
        }
    }

    #[test]
    fn scott_rows() {
        let neg = scott_like([fin(), inf(), fin(), inf(), fin(), inf()]);
        assert_eq!(classify_martingale(&neg), Verdict::Yes(Witness::C));
        assert_eq!(classify_ui(&neg), Verdict::Yes(Witness::CPrime));
        assert_eq!(classify_positive_t(&neg), Verdict::Yes(Witness::Three));
        assert_eq!(classify_positive_inf(&neg), Verdict::Yes(Witness::Three));
        let pos = scott_like([fin(), fin(), fin(), fin(), fin(), inf()]);
        assert_eq!(classify_martingale(&pos), Verdict::No);
        assert_eq!(classify_ui(&pos), Verdict::No);
    }

    #[test]
    fn unknown_propagation() {
        // C cannot be decided and nothing else holds
        let p = scott_like([fin(), inf(), fin(), unk(), fin(), inf()]);
        assert_eq!(classify_martingale(&p), Verdict::Unknown);
        // an unknown literal in a condition that fails anyway does not matter
        let p = scott_like([fin(), inf(), unk(), inf(), fin(), inf()]);
        assert_eq!(classify_martingale(&p), Verdict::Yes(Witness::C));
        let p = scott_like([fin(), fin(), fin(), fin(), fin(), unk()]);
        assert_eq!(classify_martingale(&p), Verdict::Unknown);
    }

    #[test]
    fn artificial_rows() {
        let p = BoundaryProfile {
            p: side([fin(), fin(), fin(), fin(), fin(), fin()]),
            q: side([fin(), fin(), fin(), fin(), fin(), fin()]),
            b_is_zero: false,
        };
        assert_eq!(classify_positive_t(&p), Verdict::Yes(Witness::Four));
        assert_eq!(classify_martingale(&p), Verdict::Yes(Witness::D));
        let none = BoundaryProfile {
            p: side([fin(), fin(), inf(), inf(), inf(), inf()]),
            q: side([fin(), fin(), inf(), inf(), inf(), inf()]),
            b_is_zero: false,
        };
        assert_eq!(classify_positive_inf(&none), Verdict::No);
        let zero = BoundaryProfile {
            b_is_zero: true,
            ..none
        };
        assert_eq!(classify_positive_inf(&zero), Verdict::Yes(Witness::One));
        assert_eq!(classify_ui(&zero), Verdict::Yes(Witness::APrime));
    }

    #[test]
    fn verdict_json() {
        let s = serde_json::to_string(&Verdict::Yes(Witness::CPrime)).unwrap();
        assert_eq!(s, r#"{"verdict":"yes","witness":"C'"}"#);
        let s = serde_json::to_string(&Verdict::Unknown).unwrap();
        assert_eq!(s, r#"{"verdict":"unknown","witness":null}"#);
        let v: Verdict = serde_json::from_str(r#"{"verdict":"yes","witness":"3"}"#).unwrap();
        assert_eq!(v, Verdict::Yes(Witness::Three));
        assert!(serde_json::from_str::<Verdict>(r#"{"verdict":"no","witness":"A"}"#).is_err());
    }

    #[test]
    fn zero_b_model() {
        let params = ParamBindings::from([("alpha", 1.0), ("m", 1.0), ("beta", 1.0)]);
        let spec = DiffusionSpec::parse(
            StateInterval::positive_half_line(),
            "alpha*(m-x)",
            "beta",
            "0",
            1.0,
            params.clone(),
        )
        .unwrap();
        assert_eq!(b_is_zero(&spec), (true, None));
        let scheme = CorrelationScheme::cholesky(0.7).unwrap();
        let r = full_report(&spec, &scheme, 1.0, &QuadConfig::default(), &[]).unwrap();
        assert_eq!(r.profile.p, r.profile.q);
        assert_eq!(r.uniformly_integrable, Verdict::Yes(Witness::APrime));
        assert!(r.positive_finite_t.is_yes());
        assert_eq!(r.positive_at_infinity, Verdict::Yes(Witness::One));

        let numeric = DiffusionSpec::parse(
            StateInterval::positive_half_line(),
            "alpha*(m-x)",
            "beta",
            "0*x",
            1.0,
            params,
        )
        .unwrap();
        let (z, w) = b_is_zero(&numeric);
        assert!(z && w.is_some());
    }

    #[test]
    fn inconsistent_profiles_are_rejected() {
        let params = ParamBindings::from([("alpha", 1.0), ("m", 1.0), ("beta", 1.0)]);
        let spec = DiffusionSpec::parse(
            StateInterval::positive_half_line(),
            "alpha*(m-x)",
            "beta",
            "exp(x)",
            1.0,
            params,
        )
        .unwrap();
        let bad = scott_like([fin(), inf(), fin(), inf(), fin(), fin()]);
        assert!(matches!(
            check_consistency(&spec, 1.0, &bad),
            Err(ClassifierError::Inconsistent {
                boundary: Boundary::Upper,
                ..
            })
        ));
        let good = scott_like([fin(), inf(), fin(), inf(), fin(), inf()]);
        assert!(check_consistency(&spec, 1.0, &good).is_ok());
    }
}
