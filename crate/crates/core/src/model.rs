//! Drift and diffusion coefficients, the boundary test at zero, the
//! infinitesimal generator and the linear growth constant.
//!
//! Three model families share one parameter record `(κ, θ, ξ, v₀)`:
//!
//! * `Gm`: `dv = κ(θ − v)dt + ξ v^{p(v)} dW` with a variable exponent `p`
//! * `Cir`: the square-root process, `p ≡ 1/2`
//! * `Pkm { a, b }`: `dv = κ v^a (θ − v)dt + ξ v^b dW`

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exponent::{make_builtin, ExponentFunction, ExponentSpec, ZERO_PLUS};

/// Tolerance used to decide `p(0⁺) = 1/2`.
pub const HALF_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub kappa: f64,
    pub theta: f64,
    pub xi: f64,
    pub v0: f64,
}

impl ModelParams {
    pub fn new(kappa: f64, theta: f64, xi: f64, v0: f64) -> Result<Self> {
        let params = Self {
            kappa,
            theta,
            xi,
            v0,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("kappa", self.kappa),
            ("theta", self.theta),
            ("xi", self.xi),
            ("v0", self.v0),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive and finite, got {value}"
                )));
            }
        }
        Ok(())
    }
}

impl Default for ModelParams {
    /// κ = 2, θ = 0.05, ξ = 0.3, v₀ = 0.05.
    fn default() -> Self {
        Self {
            kappa: 2.0,
            theta: 0.05,
            xi: 0.3,
            v0: 0.05,
        }
    }
}

/// Model selection: `gm:<exponent>`, `cir` or `pkm:a=<0|1>,b=<0.5|1|1.5>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelSpec {
    Gm(ExponentSpec),
    Cir,
    Pkm { a: u8, b: f64 },
}

impl FromStr for ModelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let unknown = || Error::UnknownSpec {
            kind: "model",
            name: s.to_string(),
        };
        if s == "cir" {
            return Ok(ModelSpec::Cir);
        }
        if let Some(exp) = s.strip_prefix("gm:") {
            return Ok(ModelSpec::Gm(exp.parse()?));
        }
        let body = s.strip_prefix("pkm:").ok_or_else(unknown)?;
        let (mut a, mut b) = (None, None);
        for part in body.split(',') {
            match part.trim().split_once('=') {
                Some(("a", v)) => a = v.trim().parse::<u8>().ok(),
                Some(("b", v)) => b = v.trim().parse::<f64>().ok(),
                _ => return Err(unknown()),
            }
        }
        match (a, b) {
            (Some(a @ (0 | 1)), Some(b)) if [0.5, 1.0, 1.5].contains(&b) => {
                Ok(ModelSpec::Pkm { a, b })
            }
            _ => Err(unknown()),
        }
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelSpec::Gm(e) => write!(f, "gm:{e}"),
            ModelSpec::Cir => f.write_str("cir"),
            ModelSpec::Pkm { a, b } => write!(f, "pkm:a={a},b={b}"),
        }
    }
}

#[derive(Debug, Clone)]
pub enum ModelKind {
    Gm(ExponentFunction),
    Cir,
    Pkm { a: u8, b: f64 },
}

#[derive(Debug, Clone)]
pub struct Model {
    pub params: ModelParams,
    pub kind: ModelKind,
}

impl Model {
    pub fn new(params: ModelParams, kind: ModelKind) -> Result<Self> {
        params.validate()?;
        if let ModelKind::Pkm { a, b } = kind {
            if a > 1 || ![0.5, 1.0, 1.5].contains(&b) {
                return Err(Error::InvalidParameter(format!("pkm a = {a}, b = {b}")));
            }
        }
        Ok(Self { params, kind })
    }

    pub fn gm(params: ModelParams, exponent: ExponentFunction) -> Result<Self> {
        Self::new(params, ModelKind::Gm(exponent))
    }

    pub fn cir(params: ModelParams) -> Result<Self> {
        Self::new(params, ModelKind::Cir)
    }

    pub fn from_spec(spec: ModelSpec, params: ModelParams) -> Result<Self> {
        let kind = match spec {
            ModelSpec::Gm(e) => ModelKind::Gm(make_builtin(e)?),
            ModelSpec::Cir => ModelKind::Cir,
            ModelSpec::Pkm { a, b } => ModelKind::Pkm { a, b },
        };
        Self::new(params, kind)
    }

    /// Identifier used for output file names.
    pub fn id(&self) -> String {
        match &self.kind {
            ModelKind::Gm(p) => format!("gm_{}", p.id()),
            ModelKind::Cir => "cir".into(),
            ModelKind::Pkm { a, b } => format!("pkm_a{a}_b{b}"),
        }
    }

    /// Diffusion exponent as a function of the state. CIR and PKM have
    /// constant exponents (1/2 and `b`).
    pub fn exponent(&self) -> ExponentFunction {
        match &self.kind {
            ModelKind::Gm(p) => p.clone(),
            ModelKind::Cir => ExponentFunction::constant(0.5),
            ModelKind::Pkm { b, .. } => ExponentFunction::constant(*b),
        }
    }

    #[inline]
    pub(crate) fn drift_unchecked(&self, x: f64) -> f64 {
        let ModelParams { kappa, theta, .. } = self.params;
        match self.kind {
            ModelKind::Pkm { a: 1, .. } => kappa * x * (theta - x),
            _ => kappa * (theta - x),
        }
    }

    /// Requires `x ≥ 0`; `0^p = 0`.
    #[inline]
    pub(crate) fn diffusion_unchecked(&self, x: f64) -> f64 {
        let xi = self.params.xi;
        if x == 0.0 {
            return 0.0;
        }
        match &self.kind {
            ModelKind::Gm(p) => xi * x.powf(p.value(x)),
            ModelKind::Cir => xi * x.sqrt(),
            ModelKind::Pkm { b, .. } => xi * x.powf(*b),
        }
    }

    pub fn drift(&self, x: f64) -> Result<f64> {
        if !x.is_finite() || x < 0.0 {
            return Err(Error::domain("drift", x));
        }
        Ok(self.drift_unchecked(x))
    }

    pub fn diffusion(&self, x: f64) -> Result<f64> {
        if !x.is_finite() || x < 0.0 {
            return Err(Error::domain("diffusion", x));
        }
        Ok(self.diffusion_unchecked(x))
    }

    /// `K` with `|f(x)|² ∨ |g(x)|² ≤ K(1 + x²)` for all `x ≥ 0`.
    ///
    /// Uses `κ²(θ − x)² ≤ 2κ² max(θ², 1)(1 + x²)` and `x^{2p} ≤ 1 + x²` for
    /// `p ∈ [1/2, 1]`. PKM variants with `a = 1` or `b > 1` have
    /// superlinear coefficients and no such constant.
    pub fn growth_constant(&self) -> Result<f64> {
        match self.kind {
            ModelKind::Pkm { a, b } if a == 1 || b > 1.0 => {
                return Err(Error::NotApplicable("linear growth constant"))
            }
            _ => {}
        }
        let ModelParams {
            kappa, theta, xi, ..
        } = self.params;
        Ok((2.0 * kappa * kappa * (theta * theta).max(1.0)).max(xi * xi))
    }

    /// `T_p(x) = f(x) − ½ (g²)'(x)`, the quantity whose limit at `0⁺`
    /// decides whether zero is reachable.
    pub fn feller_function(&self, x: f64) -> Result<f64> {
        if !x.is_finite() || x <= 0.0 {
            return Err(Error::domain("boundary function", x));
        }
        let xi2 = self.params.xi * self.params.xi;
        let value = match &self.kind {
            ModelKind::Gm(p) => {
                let (pv, dp) = (p.eval(x)?, p.eval_deriv(x)?);
                self.drift_unchecked(x) - xi2 * x.powf(2.0 * pv) * (dp * x.ln() + pv / x)
            }
            ModelKind::Cir => self.drift_unchecked(x) - 0.5 * xi2,
            ModelKind::Pkm { b, .. } => self.drift_unchecked(x) - xi2 * b * x.powf(2.0 * b - 1.0),
        };
        Ok(value)
    }

    /// `A h(x) = ½ g(x)² h''(x) + f(x) h'(x)` given `h'(x)` and `h''(x)`.
    pub fn generator_apply(&self, x: f64, h1: f64, h2: f64) -> Result<f64> {
        if !x.is_finite() || x <= 0.0 {
            return Err(Error::domain("generator", x));
        }
        let g = self.diffusion_unchecked(x);
        Ok(0.5 * g * g * h2 + self.drift_unchecked(x) * h1)
    }

    /// Closed-form `lim_{x→0⁺} T_p(x)` and the case it came from.
    fn boundary_limit(&self) -> Result<(f64, FellerCriterion)> {
        let ModelParams {
            kappa, theta, xi, ..
        } = self.params;
        let drift_at_zero = match self.kind {
            ModelKind::Pkm { a: 1, .. } => 0.0,
            _ => kappa * theta,
        };
        let half_gap = match &self.kind {
            ModelKind::Cir => {
                return Ok((drift_at_zero - 0.5 * xi * xi, FellerCriterion::ConstantHalf))
            }
            ModelKind::Gm(p) if p.as_constant() == Some(0.5) => {
                return Ok((drift_at_zero - 0.5 * xi * xi, FellerCriterion::ConstantHalf))
            }
            ModelKind::Gm(p) => p.eval(ZERO_PLUS)? - 0.5,
            ModelKind::Pkm { b, .. } => b - 0.5,
        };
        if half_gap.abs() <= HALF_TOL {
            Ok((drift_at_zero - 0.5 * xi * xi, FellerCriterion::P0EqualHalf))
        } else if half_gap > 0.0 {
            Ok((drift_at_zero, FellerCriterion::P0AboveHalf))
        } else {
            Err(Error::HypothesisViolation(format!(
                "p(0+) = {}",
                half_gap + 0.5
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FellerCriterion {
    P0AboveHalf,
    P0EqualHalf,
    ConstantHalf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FellerVerdict {
    NonAttainable,
    Attainable,
    Inconclusive,
}

/// Log grid for the numeric boundary profile.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FellerGrid {
    pub x_min: f64,
    /// Upper end; `None` means the exponent's `δ`.
    pub x_max: Option<f64>,
    pub points: usize,
    /// Sign consistency is only checked below this state.
    pub check_below: f64,
}

impl Default for FellerGrid {
    fn default() -> Self {
        Self {
            x_min: 1e-10,
            x_max: None,
            points: 200,
            check_below: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FellerReport {
    pub model: String,
    pub analytic_limit: f64,
    pub numeric_profile: Vec<(f64, f64)>,
    pub criterion_used: FellerCriterion,
    pub verdict: FellerVerdict,
    /// For `p ≡ 1/2`: `(2κθ, ξ²)`, non-attainable iff the first is at least
    /// the second.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classical_condition: Option<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl FellerReport {
    fn inconclusive(model: String, note: String) -> Self {
        Self {
            model,
            analytic_limit: f64::NAN,
            numeric_profile: Vec::new(),
            criterion_used: FellerCriterion::P0AboveHalf,
            verdict: FellerVerdict::Inconclusive,
            classical_condition: None,
            note: Some(note),
        }
    }
}

/// Boundary classification at zero.
///
/// The limit of `T_p` at `0⁺` is `κθ` when `p(0⁺) > 1/2` and `κθ − ξ²/2`
/// when `p(0⁺) = 1/2`: in the second case `x^{2p(x)−1} p(x) → 1/2`. Zero is
/// non-attainable iff the limit is nonnegative and the sampled profile of
/// `T_p` below `check_below` does not contradict its sign. Failures while
/// evaluating produce an inconclusive report rather than an error.
pub fn feller_check(model: &Model, grid: &FellerGrid) -> FellerReport {
    let id = model.id();
    let (limit, criterion) = match model.boundary_limit() {
        Ok(v) => v,
        Err(e) => return FellerReport::inconclusive(id, e.to_string()),
    };
    let x_max = grid.x_max.unwrap_or_else(|| model.exponent().delta());
    if grid.points < 2 || !(grid.x_min > 0.0 && x_max > grid.x_min) {
        return FellerReport::inconclusive(id, "empty boundary grid".into());
    }

    let (lo, hi) = (grid.x_min.ln(), x_max.ln());
    let mut profile = Vec::with_capacity(grid.points);
    for i in 0..grid.points {
        let x = match i {
            0 => grid.x_min,
            _ if i == grid.points - 1 => x_max,
            _ => (lo + (hi - lo) * i as f64 / (grid.points - 1) as f64).exp(),
        };
        match model.feller_function(x) {
            Ok(t) if t.is_finite() => profile.push((x, t)),
            Ok(t) => return FellerReport::inconclusive(id, format!("T_p({x}) = {t}")),
            Err(e) => return FellerReport::inconclusive(id, e.to_string()),
        }
    }

    let classical_condition = (criterion == FellerCriterion::ConstantHalf).then(|| {
        let ModelParams {
            kappa, theta, xi, ..
        } = model.params;
        (2.0 * kappa * theta, xi * xi)
    });

    let verdict = if let Some((lhs, rhs)) = classical_condition {
        if lhs >= rhs {
            FellerVerdict::NonAttainable
        } else {
            FellerVerdict::Attainable
        }
    } else if limit < 0.0 {
        FellerVerdict::Attainable
    } else {
        let contradicted = limit > 0.0
            && profile
                .iter()
                .any(|&(x, t)| x < grid.check_below && t < 0.0);
        if contradicted {
            FellerVerdict::Inconclusive
        } else {
            FellerVerdict::NonAttainable
        }
    };

    FellerReport {
        model: id,
        analytic_limit: limit,
        numeric_profile: profile,
        criterion_used: criterion,
        verdict,
        classical_condition,
        note: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exponent::ExponentSpec;

    fn baseline() -> ModelParams {
        ModelParams::default()
    }

    fn gm(spec: ExponentSpec) -> Model {
        Model::gm(baseline(), make_builtin(spec).unwrap()).unwrap()
    }

    fn cir(kappa: f64, theta: f64, xi: f64) -> Model {
        Model::cir(ModelParams::new(kappa, theta, xi, 0.05).unwrap()).unwrap()
    }

    #[test]
    fn params_must_be_positive() {
        assert!(ModelParams::new(0.0, 0.05, 0.3, 0.05).is_err());
        assert!(ModelParams::new(2.0, 0.05, -0.3, 0.05).is_err());
        assert!(ModelParams::new(2.0, f64::NAN, 0.3, 0.05).is_err());
        assert!(ModelParams::new(2.0, 0.05, 0.3, 0.05).is_ok());
    }

    #[test]
    fn drift_values() {
        let m = gm(ExponentSpec::P1);
        assert_eq!(m.drift(0.05).unwrap(), 0.0);
        assert!((m.drift(0.0).unwrap() - 0.1).abs() < 1e-15);
        let pkm = Model::new(baseline(), ModelKind::Pkm { a: 1, b: 0.5 }).unwrap();
        assert_eq!(pkm.drift(0.0).unwrap(), 0.0);
        assert!(m.drift(f64::NAN).is_err());
    }

    #[test]
    fn diffusion_values() {
        let m = cir(2.0, 0.05, 0.3);
        assert!((m.diffusion(0.04).unwrap() - 0.06).abs() < 1e-15);
        assert_eq!(m.diffusion(0.0).unwrap(), 0.0);
        assert!(m.diffusion(-1e-9).is_err());

        // 0.3·0.05^{p1(0.05)}, p1(0.05) = 0.5 + 0.3(1 − e^{−0.05})
        let p = 0.5 + 0.3 * (1.0 - (-0.05f64).exp());
        assert!((p - 0.514631).abs() < 1e-6);
        let expected = 0.3 * (p * 0.05f64.ln()).exp();
        let g = gm(ExponentSpec::P1).diffusion(0.05).unwrap();
        assert!((g - expected).abs() < 1e-15);
        assert!((g - 0.0642).abs() < 1e-4);
    }

    #[test]
    fn cir_matches_gm_with_half_exponent() {
        let c = Model::cir(baseline()).unwrap();
        let g = Model::gm(baseline(), ExponentFunction::constant(0.5)).unwrap();
        for i in 0..1000 {
            let x = i as f64 * 0.01;
            assert_eq!(c.drift(x).unwrap(), g.drift(x).unwrap());
            let (a, b) = (c.diffusion(x).unwrap(), g.diffusion(x).unwrap());
            assert!((a - b).abs() <= 1e-15 * a.max(1e-300), "{x}: {a} vs {b}");
        }
    }

    #[test]
    fn drift_vanishes_at_theta() {
        let models = [
            gm(ExponentSpec::P1),
            gm(ExponentSpec::P2),
            Model::cir(baseline()).unwrap(),
            Model::new(baseline(), ModelKind::Pkm { a: 1, b: 1.5 }).unwrap(),
            Model::new(baseline(), ModelKind::Pkm { a: 0, b: 1.0 }).unwrap(),
        ];
        for m in &models {
            assert_eq!(m.drift(baseline().theta).unwrap(), 0.0);
        }
    }

    #[test]
    fn diffusion_nondecreasing_near_zero() {
        for spec in [ExponentSpec::P1, ExponentSpec::P2, ExponentSpec::P3] {
            let m = gm(spec);
            let mut prev = 0.0;
            for i in 0..=1000 {
                let g = m.diffusion(i as f64 / 1000.0).unwrap();
                assert!(g >= 0.0 && g >= prev);
                prev = g;
            }
        }
    }

    #[test]
    fn growth_constant_values() {
        assert_eq!(gm(ExponentSpec::P1).growth_constant().unwrap(), 8.0);
        assert_eq!(cir(1.0, 1.0, 1.0).growth_constant().unwrap(), 2.0);
        let pkm = Model::new(baseline(), ModelKind::Pkm { a: 1, b: 0.5 }).unwrap();
        assert!(pkm.growth_constant().is_err());
    }

    #[test]
    fn growth_constant_bounds_coefficients() {
        for spec in [ExponentSpec::P1, ExponentSpec::P2, ExponentSpec::P3] {
            for params in [baseline(), ModelParams::new(0.3, 4.0, 2.5, 1.0).unwrap()] {
                let m = Model::gm(params, make_builtin(spec).unwrap()).unwrap();
                let k = m.growth_constant().unwrap();
                for i in 0..=100_000 {
                    let x = i as f64 * 0.01;
                    let (f, g) = (m.drift(x).unwrap(), m.diffusion(x).unwrap());
                    assert!(f * f <= k * (1.0 + x * x) && g * g <= k * (1.0 + x * x));
                }
            }
        }
    }

    #[test]
    fn feller_function_constant_half() {
        let m = cir(2.0, 0.05, 0.3);
        assert!((m.feller_function(0.05).unwrap() + 0.045).abs() < 1e-15);
        let g = Model::gm(baseline(), ExponentFunction::constant(0.5)).unwrap();
        for i in 1..=1000 {
            let x = i as f64 * 1e-3;
            let expected = 2.0 * (0.05 - x) - 0.09 / 2.0;
            assert!((g.feller_function(x).unwrap() - expected).abs() < 1e-15);
            assert!((m.feller_function(x).unwrap() - expected).abs() < 1e-15);
        }
        assert!(m.feller_function(0.0).is_err());
    }

    #[test]
    fn feller_function_limit_p2() {
        let m = gm(ExponentSpec::P2);
        let t = m.feller_function(1e-12).unwrap();
        assert!((t - 0.1).abs() < 1e-3, "{t}");
    }

    #[test]
    fn feller_check_cir_default_params() {
        let r = feller_check(&cir(2.0, 0.05, 0.3), &FellerGrid::default());
        assert_eq!(r.criterion_used, FellerCriterion::ConstantHalf);
        assert_eq!(r.verdict, FellerVerdict::NonAttainable);
        let (lhs, rhs) = r.classical_condition.unwrap();
        assert!((lhs - 0.2).abs() < 1e-15 && (rhs - 0.09).abs() < 1e-15);
        assert_eq!(r.numeric_profile.len(), 200);
    }

    #[test]
    fn feller_check_cir_counterexample() {
        let r = feller_check(&cir(0.1, 0.1, 0.5), &FellerGrid::default());
        assert_eq!(r.verdict, FellerVerdict::Attainable);
        assert!(r.analytic_limit < 0.0);
    }

    #[test]
    fn feller_check_p1_uses_half_case() {
        let r = feller_check(&gm(ExponentSpec::P1), &FellerGrid::default());
        assert_eq!(r.criterion_used, FellerCriterion::P0EqualHalf);
        assert!((r.analytic_limit - 0.055).abs() < 1e-15);
        assert_eq!(r.verdict, FellerVerdict::NonAttainable);
        // the sampled profile approaches the closed-form limit
        let (x, t) = r.numeric_profile[0];
        assert_eq!(x, 1e-10);
        assert!((t - 0.055).abs() < 1e-6, "{t}");
    }

    #[test]
    fn feller_check_p2_p3_above_half() {
        for spec in [ExponentSpec::P2, ExponentSpec::P3] {
            let r = feller_check(&gm(spec), &FellerGrid::default());
            assert_eq!(r.criterion_used, FellerCriterion::P0AboveHalf);
            assert!((r.analytic_limit - 0.1).abs() < 1e-15);
            assert_eq!(r.verdict, FellerVerdict::NonAttainable);
            assert!(r.classical_condition.is_none());
        }
    }

    #[test]
    fn feller_check_p1_violating_params_is_attainable() {
        let params = ModelParams::new(0.1, 0.1, 0.5, 0.05).unwrap();
        let m = Model::gm(params, make_builtin(ExponentSpec::P1).unwrap()).unwrap();
        assert_eq!(
            feller_check(&m, &FellerGrid::default()).verdict,
            FellerVerdict::Attainable
        );
    }

    #[test]
    fn feller_check_pkm() {
        let grid = FellerGrid::default();
        let m = |a, b| Model::new(baseline(), ModelKind::Pkm { a, b }).unwrap();
        assert_eq!(
            feller_check(&m(0, 0.5), &grid).verdict,
            FellerVerdict::NonAttainable
        );
        assert_eq!(
            feller_check(&m(1, 0.5), &grid).verdict,
            FellerVerdict::Attainable
        );
        assert_eq!(
            feller_check(&m(0, 1.0), &grid).verdict,
            FellerVerdict::NonAttainable
        );
        assert_eq!(
            feller_check(&m(1, 1.5), &grid).criterion_used,
            FellerCriterion::P0AboveHalf
        );
    }

    #[test]
    fn feller_check_inconclusive_on_bad_exponent() {
        let m = Model::gm(baseline(), ExponentFunction::constant(0.3)).unwrap();
        assert_eq!(
            feller_check(&m, &FellerGrid::default()).verdict,
            FellerVerdict::Inconclusive
        );
    }

    #[test]
    fn generator_values() {
        let m = Model::cir(baseline()).unwrap();
        for i in 1..100 {
            let x = i as f64 * 0.01;
            assert_eq!(m.generator_apply(x, 1.0, 0.0).unwrap(), m.drift(x).unwrap());
            assert_eq!(m.generator_apply(x, 0.0, 0.0).unwrap(), 0.0);
        }
        // h(x) = x², p = 1/2: ξ²x + 2xκ(θ − x)
        let x: f64 = 0.05;
        let v = m.generator_apply(x, 2.0 * x, 2.0).unwrap();
        assert!((v - 0.0045).abs() < 1e-15);
        assert!(m.generator_apply(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn model_spec_grammar() {
        assert_eq!("cir".parse::<ModelSpec>().unwrap(), ModelSpec::Cir);
        assert_eq!(
            "gm:p2".parse::<ModelSpec>().unwrap(),
            ModelSpec::Gm(ExponentSpec::P2)
        );
        assert_eq!(
            "pkm:a=1,b=1.5".parse::<ModelSpec>().unwrap(),
            ModelSpec::Pkm { a: 1, b: 1.5 }
        );
        assert!("pkm:a=2,b=1".parse::<ModelSpec>().is_err());
        assert!("pkm:a=0,b=0.7".parse::<ModelSpec>().is_err());
        assert!("heston".parse::<ModelSpec>().is_err());
        assert!("gm:const:1.2".parse::<ModelSpec>().is_ok());
        assert!(Model::from_spec("gm:const:1.2".parse().unwrap(), baseline()).is_err());
        for s in ["cir", "gm:p1", "pkm:a=0,b=0.5", "gm:const:0.75"] {
            assert_eq!(s.parse::<ModelSpec>().unwrap().to_string(), s);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn drift_fixed_point(k in 0.01f64..10.0, th in 0.001f64..5.0, xi in 0.01f64..3.0) {
                let params = ModelParams::new(k, th, xi, 0.1).unwrap();
                for spec in [ExponentSpec::P1, ExponentSpec::P3] {
                    let m = Model::gm(params, make_builtin(spec).unwrap()).unwrap();
                    prop_assert_eq!(m.drift(th).unwrap(), 0.0);
                }
            }

            #[test]
            fn generator_first_order_is_drift(x in 1e-6f64..100.0) {
                for spec in [ExponentSpec::P1, ExponentSpec::P2, ExponentSpec::P3] {
                    let m = gm(spec);
                    prop_assert_eq!(m.generator_apply(x, 1.0, 0.0).unwrap(), m.drift(x).unwrap());
                }
            }
        }
    }
}
