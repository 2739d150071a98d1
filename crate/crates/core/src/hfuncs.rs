//! Per-coordinate weight functions `h` and their derivatives.
//!
//! Every estimator in this crate weights the squared score of coordinate `j`
//! by `h_j(x_j)`. The weights must be non-negative, a.e. positive and
//! nondecreasing; bounded or slowly growing choices give the best
//! estimators. Built-in kinds are addressed by short text identifiers:
//!
//! | identifier        | h(x)                                   |
//! |-------------------|----------------------------------------|
//! | `pow:a`           | `x^a`                                  |
//! | `log1p`           | `log(1 + x)`                           |
//! | `min_pow:a:c`     | `min(x, c)^a`                          |
//! | `min_log1p:c`     | `log(1 + min(x, c))`                   |
//! | `mcp:k[:s]`       | `s (x - x²/2k)` up to `k`, then `s k/2` |
//! | `scad:k[:s]`      | SCAD-shaped ramp, constant past `k`    |
//! | `const:v`         | `v`                                    |
//!
//! At kink points the derivative returned is the left derivative.
//!
//! ```
//! use hscore::hfuncs::HFunction;
//!
//! let h: HFunction = "min_pow:1:3".parse().unwrap();
//! assert_eq!(h.eval(5.0).unwrap(), (3.0, 0.0));
//! assert_eq!(h.to_string(), "min_pow:1:3");
//! ```

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};

/// SCAD's second-segment parameter, the conventional 3.7.
const SCAD_A: f64 = 3.7;

type CustomFn = dyn Fn(f64) -> (f64, f64) + Send + Sync;

/// A user-supplied weight function, evaluated through a closure returning
/// `(h(x), h'(x))`.
#[derive(Clone)]
pub struct CustomH {
    name: String,
    f: Arc<CustomFn>,
    bound: Option<f64>,
    bound_derivative: Option<f64>,
}

impl fmt::Debug for CustomH {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomH")
            .field("name", &self.name)
            .field("bound", &self.bound)
            .field("bound_derivative", &self.bound_derivative)
            .finish()
    }
}

#[derive(Clone, Debug)]
pub enum HKind {
    Power { a: f64 },
    Log1p,
    TruncatedPower { a: f64, c: f64 },
    TruncatedLog1p { c: f64 },
    Mcp { knee: f64, slope: f64 },
    Scad { knee: f64, slope: f64 },
    Constant { value: f64 },
    Custom(CustomH),
}

/// A weight function `h: [0, ∞) → [0, ∞)` together with its derivative.
///
/// Values are immutable once built and cheap to clone (custom closures are
/// reference counted), so one `HFunction` can be shared across workers.
#[derive(Clone, Debug)]
pub struct HFunction {
    kind: HKind,
}

impl PartialEq for HFunction {
    fn eq(&self, other: &Self) -> bool {
        use HKind::*;
        match (&self.kind, &other.kind) {
            (Power { a }, Power { a: b }) => a == b,
            (Log1p, Log1p) => true,
            (TruncatedPower { a, c }, TruncatedPower { a: a2, c: c2 }) => a == a2 && c == c2,
            (TruncatedLog1p { c }, TruncatedLog1p { c: c2 }) => c == c2,
            (Mcp { knee, slope }, Mcp { knee: k2, slope: s2 }) => knee == k2 && slope == s2,
            (Scad { knee, slope }, Scad { knee: k2, slope: s2 }) => knee == k2 && slope == s2,
            (Constant { value }, Constant { value: v2 }) => value == v2,
            (Custom(a), Custom(b)) => Arc::ptr_eq(&a.f, &b.f),
            _ => false,
        }
    }
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::Domain(format!("{name} must be a finite positive number, got {v}")))
    }
}

impl HFunction {
    /// `h(x) = x^a`.
    pub fn power(a: f64) -> Result<Self> {
        Ok(Self { kind: HKind::Power { a: positive("exponent a", a)? } })
    }

    pub fn log1p() -> Self {
        Self { kind: HKind::Log1p }
    }

    /// `h(x) = min(x, c)^a`: the power function frozen past the truncation point `c`.
    pub fn truncated_power(a: f64, c: f64) -> Result<Self> {
        Ok(Self {
            kind: HKind::TruncatedPower {
                a: positive("exponent a", a)?,
                c: positive("truncation point c", c)?,
            },
        })
    }

    pub fn truncated_log1p(c: f64) -> Result<Self> {
        Ok(Self { kind: HKind::TruncatedLog1p { c: positive("truncation point c", c)? } })
    }

    /// MCP-shaped weight: slope `s` at the origin, derivative falling
    /// linearly to zero at `knee`, constant afterwards.
    pub fn mcp(knee: f64, slope: f64) -> Result<Self> {
        Ok(Self {
            kind: HKind::Mcp { knee: positive("knee", knee)?, slope: positive("slope", slope)? },
        })
    }

    /// SCAD-shaped weight: linear with slope `s` up to `knee / 3.7`, then a
    /// quadratic ramp flattening out at `knee`.
    pub fn scad(knee: f64, slope: f64) -> Result<Self> {
        Ok(Self {
            kind: HKind::Scad { knee: positive("knee", knee)?, slope: positive("slope", slope)? },
        })
    }

    pub fn constant(value: f64) -> Result<Self> {
        if !value.is_finite() || value < 0.0 {
            return Err(Error::Domain(format!("constant h must be finite and >= 0, got {value}")));
        }
        Ok(Self { kind: HKind::Constant { value } })
    }

    /// Wraps a closure returning `(h(x), h'(x))`. Declared bounds are
    /// trusted by estimators and checked by [`HFunction::validate`].
    pub fn custom<F>(name: &str, f: F, bound: Option<f64>, bound_derivative: Option<f64>) -> Self
    where
        F: Fn(f64) -> (f64, f64) + Send + Sync + 'static,
    {
        Self {
            kind: HKind::Custom(CustomH {
                name: name.to_string(),
                f: Arc::new(f),
                bound,
                bound_derivative,
            }),
        }
    }

    pub fn kind(&self) -> &HKind {
        &self.kind
    }

    /// Named real parameters of the function, in identifier order.
    pub fn params(&self) -> Vec<(&'static str, f64)> {
        match &self.kind {
            HKind::Power { a } => vec![("a", *a)],
            HKind::Log1p | HKind::Custom(_) => vec![],
            HKind::TruncatedPower { a, c } => vec![("a", *a), ("c", *c)],
            HKind::TruncatedLog1p { c } => vec![("c", *c)],
            HKind::Mcp { knee, slope } | HKind::Scad { knee, slope } => {
                vec![("knee", *knee), ("slope", *slope)]
            }
            HKind::Constant { value } => vec![("value", *value)],
        }
    }

    /// An a.e. upper bound on `h` over `[0, ∞)`, if one exists.
    pub fn bound(&self) -> Option<f64> {
        match &self.kind {
            HKind::Power { .. } | HKind::Log1p => None,
            HKind::TruncatedPower { a, c } => Some(c.powf(*a)),
            HKind::TruncatedLog1p { c } => Some(c.ln_1p()),
            HKind::Mcp { knee, slope } => Some(slope * knee / 2.0),
            HKind::Scad { knee, slope } => {
                let lam = knee / SCAD_A;
                Some(slope * lam * (SCAD_A + 1.0) / 2.0)
            }
            HKind::Constant { value } => Some(*value),
            HKind::Custom(c) => c.bound,
        }
    }

    /// An a.e. upper bound on `h'`, if one exists.
    pub fn bound_derivative(&self) -> Option<f64> {
        match &self.kind {
            HKind::Power { a } => (*a == 1.0).then_some(1.0),
            HKind::Log1p => Some(1.0),
            HKind::TruncatedPower { a, c } => (*a >= 1.0).then(|| a * c.powf(a - 1.0)),
            HKind::TruncatedLog1p { .. } => Some(1.0),
            HKind::Mcp { slope, .. } | HKind::Scad { slope, .. } => Some(*slope),
            HKind::Constant { .. } => Some(0.0),
            HKind::Custom(c) => c.bound_derivative,
        }
    }

    /// Points where `h` or `h'` fails to be smooth. Adaptive quadrature
    /// splits its range here.
    pub fn kink_points(&self) -> Vec<f64> {
        match &self.kind {
            HKind::TruncatedPower { c, .. } | HKind::TruncatedLog1p { c } => vec![*c],
            HKind::Mcp { knee, .. } => vec![*knee],
            HKind::Scad { knee, .. } => vec![knee / SCAD_A, *knee],
            _ => vec![],
        }
    }

    /// Returns `(h(x), h'(x))`, rejecting negative or NaN arguments.
    pub fn eval(&self, x: f64) -> Result<(f64, f64)> {
        if x.is_nan() || x < 0.0 {
            return Err(Error::Domain(format!("h evaluated at {x}; arguments must be >= 0")));
        }
        Ok(self.eval_unchecked(x))
    }

    /// [`HFunction::eval`] without the domain check, for inner loops over
    /// data that was validated once up front.
    #[inline]
    pub fn eval_unchecked(&self, x: f64) -> (f64, f64) {
        match &self.kind {
            HKind::Power { a } => power(x, *a),
            HKind::Log1p => (x.ln_1p(), 1.0 / (1.0 + x)),
            HKind::TruncatedPower { a, c } => {
                if x <= *c {
                    power(x, *a)
                } else {
                    (c.powf(*a), 0.0)
                }
            }
            HKind::TruncatedLog1p { c } => {
                if x <= *c {
                    (x.ln_1p(), 1.0 / (1.0 + x))
                } else {
                    (c.ln_1p(), 0.0)
                }
            }
            HKind::Mcp { knee, slope } => {
                if x <= *knee {
                    (slope * (x - x * x / (2.0 * knee)), slope * (1.0 - x / knee))
                } else {
                    (slope * knee / 2.0, 0.0)
                }
            }
            HKind::Scad { knee, slope } => {
                let lam = knee / SCAD_A;
                if x <= lam {
                    (slope * x, *slope)
                } else if x <= *knee {
                    let v = (2.0 * SCAD_A * lam * x - x * x - lam * lam) / (2.0 * (SCAD_A - 1.0));
                    (slope * v / lam, slope * (knee - x) / ((SCAD_A - 1.0) * lam))
                } else {
                    (slope * lam * (SCAD_A + 1.0) / 2.0, 0.0)
                }
            }
            HKind::Constant { value } => (*value, 0.0),
            HKind::Custom(c) => (c.f)(x),
        }
    }

    /// Checks the shape requirements on a dense grid over `[0, 100]`.
    pub fn validate(&self) -> ValidationReport {
        let grid: Vec<f64> = (1..=1000).map(|i| i as f64 * 0.1).collect();
        let evals: Vec<(f64, f64)> = grid.iter().map(|&x| self.eval_unchecked(x)).collect();

        let positivity = match grid.iter().zip(&evals).find(|(_, (v, _))| !(*v > 0.0)) {
            None => Check::Pass,
            Some((x, (v, _))) => Check::Fail(format!("h({x}) = {v} is not positive")),
        };

        let (h0, _) = self.eval_unchecked(1e-12);
        let limit_zero = if h0.abs() <= 1e-6 {
            Check::Pass
        } else {
            Check::Warn(format!(
                "h(0+) = {h0} != 0; only admissible in special cases (e.g. known zero mean)"
            ))
        };

        let mut nondecreasing = Check::Pass;
        for (i, (x, (v, d))) in grid.iter().zip(&evals).enumerate() {
            if !(*d >= -1e-12) {
                nondecreasing = Check::Fail(format!("h'({x}) = {d} < 0"));
                break;
            }
            if i > 0 && *v < evals[i - 1].0 - 1e-12 {
                nondecreasing = Check::Fail(format!("h decreases near x = {x}"));
                break;
            }
        }

        let max_v = evals.iter().map(|e| e.0).fold(f64::NEG_INFINITY, f64::max);
        let bounded_value = match self.bound() {
            Some(b) if max_v <= b + 1e-12 * b.abs().max(1.0) => Check::Pass,
            Some(b) => Check::Fail(format!("declared bound {b} exceeded: max h = {max_v}")),
            None => Check::Warn("h is unbounded".into()),
        };
        let max_d = evals.iter().map(|e| e.1).fold(f64::NEG_INFINITY, f64::max);
        let bounded_derivative = match self.bound_derivative() {
            Some(b) if max_d <= b + 1e-12 * b.abs().max(1.0) => Check::Pass,
            Some(b) => Check::Fail(format!("declared bound {b} exceeded: max h' = {max_d}")),
            None => Check::Warn("h' is unbounded".into()),
        };

        ValidationReport {
            positivity,
            limit_zero,
            nondecreasing,
            bounded_value,
            bounded_derivative,
        }
    }
}

#[inline]
fn power(x: f64, a: f64) -> (f64, f64) {
    if a == 1.0 {
        (x, 1.0)
    } else if a == 2.0 {
        (x * x, 2.0 * x)
    } else {
        (x.powf(a), a * x.powf(a - 1.0))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Check {
    Pass,
    Warn(String),
    Fail(String),
}

impl Check {
    pub fn is_pass(&self) -> bool {
        matches!(self, Check::Pass)
    }
    pub fn is_warn(&self) -> bool {
        matches!(self, Check::Warn(_))
    }
    pub fn is_fail(&self) -> bool {
        matches!(self, Check::Fail(_))
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Check::Pass => write!(f, "pass"),
            Check::Warn(m) => write!(f, "warn ({m})"),
            Check::Fail(m) => write!(f, "FAIL ({m})"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ValidationReport {
    pub positivity: Check,
    pub limit_zero: Check,
    pub nondecreasing: Check,
    pub bounded_value: Check,
    pub bounded_derivative: Check,
}

impl ValidationReport {
    /// No check failed (warnings allowed).
    pub fn is_ok(&self) -> bool {
        self.checks().iter().all(|(_, c)| !c.is_fail())
    }

    pub fn checks(&self) -> [(&'static str, &Check); 5] {
        [
            ("positive a.e.", &self.positivity),
            ("h(0+) = 0", &self.limit_zero),
            ("nondecreasing", &self.nondecreasing),
            ("h bounded", &self.bounded_value),
            ("h' bounded", &self.bounded_derivative),
        ]
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (name, check) in self.checks() {
            writeln!(f, "{name:<15} {check}")?;
        }
        Ok(())
    }
}

impl fmt::Display for HFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            HKind::Power { a } => write!(f, "pow:{a}"),
            HKind::Log1p => write!(f, "log1p"),
            HKind::TruncatedPower { a, c } => write!(f, "min_pow:{a}:{c}"),
            HKind::TruncatedLog1p { c } => write!(f, "min_log1p:{c}"),
            HKind::Mcp { knee, slope } if *slope == 1.0 => write!(f, "mcp:{knee}"),
            HKind::Mcp { knee, slope } => write!(f, "mcp:{knee}:{slope}"),
            HKind::Scad { knee, slope } if *slope == 1.0 => write!(f, "scad:{knee}"),
            HKind::Scad { knee, slope } => write!(f, "scad:{knee}:{slope}"),
            HKind::Constant { value } => write!(f, "const:{value}"),
            HKind::Custom(c) => write!(f, "custom:{}", c.name),
        }
    }
}

impl FromStr for HFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let num = |i: usize| -> Result<f64> {
            let raw = parts
                .get(i)
                .ok_or_else(|| Error::Parse(format!("h identifier '{s}' is missing a parameter")))?;
            raw.parse::<f64>()
                .map_err(|_| Error::Parse(format!("h identifier '{s}': '{raw}' is not a number")))
        };
        let arity = |n: usize| -> Result<()> {
            if parts.len() == n {
                Ok(())
            } else {
                Err(Error::Parse(format!(
                    "h identifier '{s}' expects {} parameter(s)",
                    n - 1
                )))
            }
        };
        match parts[0] {
            "pow" => {
                arity(2)?;
                HFunction::power(num(1)?)
            }
            "log1p" => {
                arity(1)?;
                Ok(HFunction::log1p())
            }
            "min_pow" => {
                arity(3)?;
                HFunction::truncated_power(num(1)?, num(2)?)
            }
            "min_log1p" => {
                arity(2)?;
                HFunction::truncated_log1p(num(1)?)
            }
            "mcp" | "scad" => {
                if parts.len() != 2 && parts.len() != 3 {
                    return Err(Error::Parse(format!("h identifier '{s}' expects knee[:slope]")));
                }
                let slope = if parts.len() == 3 { num(2)? } else { 1.0 };
                if parts[0] == "mcp" {
                    HFunction::mcp(num(1)?, slope)
                } else {
                    HFunction::scad(num(1)?, slope)
                }
            }
            "const" => {
                arity(2)?;
                HFunction::constant(num(1)?)
            }
            other => Err(Error::Parse(format!(
                "unknown h kind '{other}' (expected pow, log1p, min_pow, min_log1p, mcp, scad, const)"
            ))),
        }
    }
}

/// Replicates one `h` across `m` coordinates.
pub fn shared(h: &HFunction, m: usize) -> Vec<HFunction> {
    vec![h.clone(); m]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn builtins() -> Vec<HFunction> {
        ["pow:1", "pow:2", "pow:1.5", "log1p", "min_pow:1:3", "min_pow:2:1.5", "min_log1p:2", "mcp:2", "scad:3:0.5", "const:1"]
            .iter()
            .map(|s| s.parse().unwrap())
            .collect()
    }

    #[test]
    fn worked_values() {
        let h = HFunction::truncated_power(1.0, 3.0).unwrap();
        assert_eq!(h.eval(5.0).unwrap(), (3.0, 0.0));
        let h = HFunction::power(2.0).unwrap();
        assert_eq!(h.eval(1.5).unwrap(), (2.25, 3.0));
        assert_eq!(HFunction::log1p().eval(0.0).unwrap(), (0.0, 1.0));
    }

    #[test]
    fn negative_argument_is_domain_error() {
        assert!(matches!(HFunction::log1p().eval(-0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn kink_uses_left_derivative() {
        let h = HFunction::truncated_power(1.0, 3.0).unwrap();
        assert_eq!(h.eval(3.0).unwrap(), (3.0, 1.0));
        let h = HFunction::truncated_log1p(2.0).unwrap();
        assert_eq!(h.eval(2.0).unwrap().1, 1.0 / 3.0);
    }

    #[test]
    fn validation_reports() {
        let r = HFunction::power(2.0).unwrap().validate();
        assert!(r.positivity.is_pass());
        assert!(r.limit_zero.is_pass());
        assert!(r.nondecreasing.is_pass());
        assert!(r.bounded_value.is_warn());

        let r = HFunction::constant(1.0).unwrap().validate();
        assert!(r.limit_zero.is_warn());
        assert!(r.is_ok());

        let bump = HFunction::custom("bump", |x| (x * (-x).exp(), (1.0 - x) * (-x).exp()), None, None);
        let r = bump.validate();
        assert!(r.nondecreasing.is_fail());
        assert!(!r.is_ok());
    }

    #[test]
    fn declared_bound_violation_fails() {
        let h = HFunction::custom("liar", |x| (x, 1.0), Some(5.0), Some(1.0));
        assert!(h.validate().bounded_value.is_fail());
    }

    #[test]
    fn builtin_bounds_hold_on_grid() {
        for h in builtins() {
            let r = h.validate();
            assert!(r.is_ok(), "{h}: {r}");
            if let Some(b) = h.bound() {
                for i in 0..=1000 {
                    assert!(h.eval_unchecked(i as f64 * 0.1).0 <= b + 1e-12, "{h}");
                }
            }
        }
    }

    #[test]
    fn derivative_matches_finite_differences() {
        for h in builtins() {
            let kinks = h.kink_points();
            for i in 1..=1000 {
                let x = i as f64 * 0.1;
                let step = 1e-5 * x.max(1.0);
                if kinks.iter().any(|k| (x - k).abs() < 2.0 * step) {
                    continue;
                }
                let (_, d) = h.eval_unchecked(x);
                let fd = (h.eval_unchecked(x + step).0 - h.eval_unchecked(x - step).0) / (2.0 * step);
                let err = (d - fd).abs() / d.abs().max(1e-3);
                assert!(err < 1e-6, "{h} at {x}: analytic {d} vs fd {fd}");
            }
        }
    }

    #[test]
    fn truncated_agrees_with_base_below_cut() {
        let pairs = [("min_pow:1:3", "pow:1"), ("min_pow:2:1.5", "pow:2"), ("min_log1p:2", "log1p")];
        for (t, b) in pairs {
            let t: HFunction = t.parse().unwrap();
            let b: HFunction = b.parse().unwrap();
            let c = t.kink_points()[0];
            for i in 0..200 {
                let x = i as f64 * 0.05;
                if x <= c {
                    assert_eq!(t.eval_unchecked(x), b.eval_unchecked(x));
                } else {
                    assert_eq!(t.eval_unchecked(x), (t.eval_unchecked(c).0, 0.0));
                }
            }
        }
    }

    #[test]
    fn parse_errors() {
        assert!("pow".parse::<HFunction>().is_err());
        assert!("pow:-1".parse::<HFunction>().is_err());
        assert!("min_pow:1".parse::<HFunction>().is_err());
        assert!("cubic:2".parse::<HFunction>().is_err());
        assert!("log1p:3".parse::<HFunction>().is_err());
    }

    proptest! {
        #[test]
        fn identifiers_round_trip(a in 0.01f64..10.0, c in 0.01f64..50.0, which in 0usize..7) {
            let h = match which {
                0 => HFunction::power(a).unwrap(),
                1 => HFunction::log1p(),
                2 => HFunction::truncated_power(a, c).unwrap(),
                3 => HFunction::truncated_log1p(c).unwrap(),
                4 => HFunction::mcp(c, a).unwrap(),
                5 => HFunction::scad(c, 1.0).unwrap(),
                _ => HFunction::constant(a).unwrap(),
            };
            let text = h.to_string();
            let back: HFunction = text.parse().unwrap();
            prop_assert_eq!(&back, &h);
            prop_assert_eq!(back.to_string(), text);
        }
    }
}
