//! Variable exponent functions `p(x)` for the diffusion term `ξ x^{p(x)}`.
//!
//! Every exponent carries its analytic derivative and a set of declared
//! bounds (`p⁻`, `p⁺`, the neighbourhood radius `δ` near zero and the
//! declared `sup |p'|` on `(0, δ)`). [`validate_hypotheses`] checks the
//! admissibility conditions `1/2 ≤ p⁻`, `p⁺ ≤ 1` and a bounded derivative
//! near zero numerically on a log-spaced grid.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};

/// Default tolerance applied to the range check in [`validate_hypotheses`].
pub const HYPOTHESIS_TOL: f64 = 1e-12;

/// Neighbourhood radius used for the builtins. They all have globally
/// bounded derivatives, so any positive value works.
pub const DEFAULT_DELTA: f64 = 1.0;

/// Point at which `p(0⁺)` is estimated.
pub const ZERO_PLUS: f64 = 1e-12;

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Exponent selection as written in configs and on the command line:
/// `p1`, `p2`, `p3` or `const:<float>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExponentSpec {
    P1,
    P2,
    P3,
    Constant(f64),
}

impl FromStr for ExponentSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "p1" => Ok(ExponentSpec::P1),
            "p2" => Ok(ExponentSpec::P2),
            "p3" => Ok(ExponentSpec::P3),
            _ => {
                let value = s
                    .strip_prefix("const:")
                    .and_then(|c| c.trim().parse::<f64>().ok())
                    .filter(|c| c.is_finite());
                value
                    .map(ExponentSpec::Constant)
                    .ok_or_else(|| Error::UnknownSpec {
                        kind: "exponent",
                        name: s.to_string(),
                    })
            }
        }
    }
}

impl fmt::Display for ExponentSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExponentSpec::P1 => f.write_str("p1"),
            ExponentSpec::P2 => f.write_str("p2"),
            ExponentSpec::P3 => f.write_str("p3"),
            ExponentSpec::Constant(c) => write!(f, "const:{c}"),
        }
    }
}

#[derive(Clone)]
pub enum ExponentKind {
    P1,
    P2,
    P3,
    Constant(f64),
    Custom {
        name: String,
        eval: ScalarFn,
        deriv: ScalarFn,
    },
}

impl fmt::Debug for ExponentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExponentKind::P1 => f.write_str("P1"),
            ExponentKind::P2 => f.write_str("P2"),
            ExponentKind::P3 => f.write_str("P3"),
            ExponentKind::Constant(c) => f.debug_tuple("Constant").field(c).finish(),
            ExponentKind::Custom { name, .. } => {
                f.debug_struct("Custom").field("name", name).finish()
            }
        }
    }
}

/// A differentiable exponent function on `[0, ∞)` together with its
/// declared bounds.
#[derive(Debug, Clone)]
pub struct ExponentFunction {
    kind: ExponentKind,
    declared_pminus: f64,
    declared_pplus: f64,
    delta: f64,
    dsup: f64,
}

impl ExponentFunction {
    /// Builds the function named by `spec` without checking admissibility.
    ///
    /// Used where an inadmissible exponent must still be inspected, e.g. to
    /// produce a failing [`HypothesisReport`]. Use [`make_builtin`] otherwise.
    pub fn from_spec_unchecked(spec: ExponentSpec) -> Self {
        match spec {
            ExponentSpec::P1 => Self::with_bounds(ExponentKind::P1, 0.5, 0.8, 0.3),
            ExponentSpec::P2 => Self::with_bounds(ExponentKind::P2, 0.6, 0.8, 0.2),
            ExponentSpec::P3 => Self::with_bounds(ExponentKind::P3, 0.55, 0.75, 0.2),
            ExponentSpec::Constant(c) => Self::constant(c),
        }
    }

    /// Constant exponent `p ≡ c`. No range check.
    pub fn constant(c: f64) -> Self {
        Self::with_bounds(ExponentKind::Constant(c), c, c, 0.0)
    }

    /// User-supplied exponent. Both the function and its derivative must be
    /// given; nothing is differentiated automatically.
    #[allow(clippy::too_many_arguments)]
    pub fn custom<F, D>(
        name: impl Into<String>,
        eval: F,
        deriv: D,
        declared_pminus: f64,
        declared_pplus: f64,
        delta: f64,
        dsup: f64,
    ) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "delta must be positive, got {delta}"
            )));
        }
        Ok(Self {
            kind: ExponentKind::Custom {
                name: name.into(),
                eval: Arc::new(eval),
                deriv: Arc::new(deriv),
            },
            declared_pminus,
            declared_pplus,
            delta,
            dsup,
        })
    }

    fn with_bounds(kind: ExponentKind, pminus: f64, pplus: f64, dsup: f64) -> Self {
        Self {
            kind,
            declared_pminus: pminus,
            declared_pplus: pplus,
            delta: DEFAULT_DELTA,
            dsup,
        }
    }

    pub fn kind(&self) -> &ExponentKind {
        &self.kind
    }

    pub fn declared_pminus(&self) -> f64 {
        self.declared_pminus
    }

    pub fn declared_pplus(&self) -> f64 {
        self.declared_pplus
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn dsup(&self) -> f64 {
        self.dsup
    }

    /// Constant value if the exponent does not depend on the state.
    pub fn as_constant(&self) -> Option<f64> {
        match self.kind {
            ExponentKind::Constant(c) => Some(c),
            _ => None,
        }
    }

    /// Short identifier used in file names and manifests.
    pub fn id(&self) -> String {
        match &self.kind {
            ExponentKind::P1 => "p1".into(),
            ExponentKind::P2 => "p2".into(),
            ExponentKind::P3 => "p3".into(),
            ExponentKind::Constant(c) => format!("const{c}"),
            ExponentKind::Custom { name, .. } => name.clone(),
        }
    }

    #[inline]
    pub(crate) fn value(&self, x: f64) -> f64 {
        match &self.kind {
            ExponentKind::P1 => 0.5 - 0.3 * (-x).exp_m1(),
            ExponentKind::P2 => 0.6 + 0.2 * x.tanh(),
            ExponentKind::P3 => 0.55 + 0.2 * x / (1.0 + x),
            ExponentKind::Constant(c) => *c,
            ExponentKind::Custom { eval, .. } => eval(x),
        }
    }

    #[inline]
    pub(crate) fn slope(&self, x: f64) -> f64 {
        match &self.kind {
            ExponentKind::P1 => 0.3 * (-x).exp(),
            ExponentKind::P2 => {
                let c = x.cosh();
                0.2 / (c * c)
            }
            ExponentKind::P3 => 0.2 / ((1.0 + x) * (1.0 + x)),
            ExponentKind::Constant(_) => 0.0,
            ExponentKind::Custom { deriv, .. } => deriv(x),
        }
    }

    /// `p(x)` for `x ≥ 0`.
    pub fn eval(&self, x: f64) -> Result<f64> {
        if !x.is_finite() || x < 0.0 {
            return Err(Error::domain("exponent", x));
        }
        let p = self.value(x);
        if p.is_finite() {
            Ok(p)
        } else {
            Err(Error::domain("exponent (non-finite value)", x))
        }
    }

    /// `p'(x)` for `x > 0`.
    pub fn eval_deriv(&self, x: f64) -> Result<f64> {
        if !x.is_finite() || x <= 0.0 {
            return Err(Error::domain("exponent derivative", x));
        }
        let d = self.slope(x);
        if d.is_finite() {
            Ok(d)
        } else {
            Err(Error::domain("exponent derivative (non-finite value)", x))
        }
    }

    /// Largest `|p'|` over a dense grid on `[lo, hi]`.
    pub fn sup_abs_deriv(&self, lo: f64, hi: f64, points: usize) -> Result<f64> {
        if !(lo > 0.0 && hi >= lo) || points == 0 {
            return Err(Error::InvalidParameter(format!(
                "bad derivative interval [{lo}, {hi}]"
            )));
        }
        let mut sup = 0.0_f64;
        for i in 0..=points {
            let x = lo + (hi - lo) * i as f64 / points as f64;
            sup = sup.max(self.eval_deriv(x)?.abs());
        }
        Ok(sup)
    }
}

/// Builds an admissible exponent: the three builtins or a constant in
/// `[1/2, 1]`.
pub fn make_builtin(spec: ExponentSpec) -> Result<ExponentFunction> {
    if let ExponentSpec::Constant(c) = spec {
        if !(0.5..=1.0).contains(&c) {
            return Err(Error::HypothesisViolation(format!("constant exponent {c}")));
        }
    }
    Ok(ExponentFunction::from_spec_unchecked(spec))
}

/// Evaluation grid for [`validate_hypotheses`].
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GridConfig {
    pub x_min: f64,
    pub x_max: f64,
    /// Log-spaced points on `[x_min, x_max]`.
    pub points: usize,
    /// Uniform points on `(0, δ]`.
    pub near_zero_points: usize,
    pub tol: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            x_min: 1e-12,
            x_max: 1e12,
            points: 10_000,
            near_zero_points: 10_000,
            tol: HYPOTHESIS_TOL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum HypothesisClause {
    /// `inf p ≥ 1/2`
    LowerBound,
    /// `sup p ≤ 1`
    UpperBound,
    /// `sup |p'| < ∞` on `(0, δ)`
    DerivativeNearZero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "verdict", content = "failing_clause", rename_all = "snake_case")]
pub enum HypothesisVerdict {
    Pass,
    Fail(HypothesisClause),
}

#[derive(Debug, Clone, Serialize)]
pub struct HypothesisReport {
    pub exponent: String,
    pub observed_inf: f64,
    pub observed_sup: f64,
    pub observed_dsup_near_zero: f64,
    /// `sup |p'|` over the whole log grid. Reported alongside the near-zero
    /// value; the verdict only uses the latter.
    pub observed_dsup_global: f64,
    pub p_at_zero_plus: f64,
    pub grid_used: GridConfig,
    pub delta: f64,
    #[serde(flatten)]
    pub verdict: HypothesisVerdict,
}

impl HypothesisReport {
    pub fn passed(&self) -> bool {
        self.verdict == HypothesisVerdict::Pass
    }
}

/// Numerical check of `1/2 ≤ inf p`, `sup p ≤ 1` and bounded `p'` near 0.
///
/// Infimum and supremum are taken over a finite log grid, so they are
/// approximations bounded by the grid endpoints recorded in the report.
pub fn validate_hypotheses(p: &ExponentFunction, grid: &GridConfig) -> Result<HypothesisReport> {
    if grid.points < 2 || grid.near_zero_points == 0 {
        return Err(Error::Empty("hypothesis grid"));
    }
    if !(grid.x_min > 0.0 && grid.x_max > grid.x_min && grid.x_max.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "grid bounds must satisfy 0 < x_min < x_max, got [{}, {}]",
            grid.x_min, grid.x_max
        )));
    }

    let (log_lo, log_hi) = (grid.x_min.ln(), grid.x_max.ln());
    let steps = (grid.points - 1) as f64;
    let mut inf = f64::INFINITY;
    let mut sup = f64::NEG_INFINITY;
    let mut dsup_global = 0.0_f64;
    for i in 0..grid.points {
        let x = (log_lo + (log_hi - log_lo) * i as f64 / steps).exp();
        let v = p.eval(x)?;
        inf = inf.min(v);
        sup = sup.max(v);
        dsup_global = dsup_global.max(p.eval_deriv(x)?.abs());
    }

    let delta = p.delta();
    let mut dsup_near_zero = 0.0_f64;
    for i in 1..=grid.near_zero_points {
        let x = delta * i as f64 / grid.near_zero_points as f64;
        let v = p.eval(x)?;
        inf = inf.min(v);
        sup = sup.max(v);
        dsup_near_zero = dsup_near_zero.max(p.eval_deriv(x)?.abs());
    }
    // the left end of (0, δ) is covered by the log grid
    for i in 0..grid.points {
        let x = (log_lo + (log_hi - log_lo) * i as f64 / steps).exp();
        if x >= delta {
            break;
        }
        dsup_near_zero = dsup_near_zero.max(p.eval_deriv(x)?.abs());
    }

    let verdict = if inf < 0.5 - grid.tol {
        HypothesisVerdict::Fail(HypothesisClause::LowerBound)
    } else if sup > 1.0 + grid.tol {
        HypothesisVerdict::Fail(HypothesisClause::UpperBound)
    } else if !dsup_near_zero.is_finite() {
        HypothesisVerdict::Fail(HypothesisClause::DerivativeNearZero)
    } else {
        HypothesisVerdict::Pass
    };

    Ok(HypothesisReport {
        exponent: p.id(),
        observed_inf: inf,
        observed_sup: sup,
        observed_dsup_near_zero: dsup_near_zero,
        observed_dsup_global: dsup_global,
        p_at_zero_plus: p.eval(grid.x_min.min(ZERO_PLUS))?,
        grid_used: *grid,
        delta,
        verdict,
    })
}
