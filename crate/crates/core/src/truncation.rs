//! Radial truncation onto the band `[1/n, n]` and the truncated
//! coefficients used by the successive-approximation construction.
//!
//! `θ_n` is `1/n` on `[0, 1/n]`, the identity on `[1/n + ε, n − ε]` and `n`
//! on `[n, ∞)`. The two gaps are bridged by cubic Hermite segments matching
//! values and slopes (0 → 1 on the lower gap, 1 → 0 on the upper), so `θ_n`
//! is C¹, nondecreasing, and its slope never exceeds 4/3.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Model, ModelKind};
use crate::stochastic::{open_unit, random_words};

/// Number of grid points used for the numerical sup-norms.
pub const SUP_GRID_POINTS: usize = 10_000;

/// Number of random pairs sampled for the empirical Lipschitz quotient.
pub const LIPSCHITZ_PAIRS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TruncationParams {
    pub n: u32,
    pub epsilon: f64,
}

impl TruncationParams {
    pub fn new(n: u32, epsilon: f64) -> Result<Self> {
        if n < 1 {
            return Err(Error::InvalidParameter(
                "truncation level n must be at least 1".into(),
            ));
        }
        let nf = n as f64;
        if !(epsilon > 0.0 && epsilon < 1.0 / (nf * nf)) {
            return Err(Error::InvalidParameter(format!(
                "epsilon = {epsilon} must lie in (0, 1/n²) for n = {n}"
            )));
        }
        if 1.0 / nf + epsilon >= nf - epsilon {
            return Err(Error::InvalidParameter(format!(
                "bands collapse for n = {n}, epsilon = {epsilon}"
            )));
        }
        Ok(Self { n, epsilon })
    }

    /// `ε = 1/(2n²)`.
    pub fn with_default_epsilon(n: u32) -> Result<Self> {
        let nf = n.max(1) as f64;
        Self::new(n, 0.5 / (nf * nf))
    }

    fn lower(&self) -> f64 {
        1.0 / self.n as f64
    }

    fn upper(&self) -> f64 {
        self.n as f64
    }

    /// Is `x` in the band where the truncation is the identity?
    pub fn in_identity_band(&self, x: f64) -> bool {
        x >= self.lower() + self.epsilon && x <= self.upper() - self.epsilon
    }
}

#[inline]
fn theta_unchecked(tp: &TruncationParams, r: f64) -> f64 {
    let (lo, hi, eps) = (tp.lower(), tp.upper(), tp.epsilon);
    if r <= lo {
        lo
    } else if r < lo + eps {
        let s = (r - lo) / eps;
        lo + eps * s * s * (2.0 - s)
    } else if r <= hi - eps {
        r
    } else if r < hi {
        let s = (r - (hi - eps)) / eps;
        hi - eps + eps * s * (1.0 + s - s * s)
    } else {
        hi
    }
}

#[inline]
fn theta_slope(tp: &TruncationParams, r: f64) -> f64 {
    let (lo, hi, eps) = (tp.lower(), tp.upper(), tp.epsilon);
    if r <= lo || r >= hi {
        0.0
    } else if r < lo + eps {
        let s = (r - lo) / eps;
        s * (4.0 - 3.0 * s)
    } else if r <= hi - eps {
        1.0
    } else {
        let s = (r - (hi - eps)) / eps;
        1.0 + 2.0 * s - 3.0 * s * s
    }
}

/// Band function `θ_n(r)` for `r ≥ 0`, always in `[1/n, n]`.
pub fn theta_n(tp: &TruncationParams, r: f64) -> Result<f64> {
    if !r.is_finite() || r < 0.0 {
        return Err(Error::domain("band function", r));
    }
    Ok(theta_unchecked(tp, r))
}

/// Radial truncation `ρ_n(x) = θ_n(|x|)·sgn(x)`, `ρ_n(0) = 0`.
pub fn rho_n(tp: &TruncationParams, x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::domain("radial truncation", x));
    }
    Ok(rho_unchecked(tp, x))
}

#[inline]
fn rho_unchecked(tp: &TruncationParams, x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        theta_unchecked(tp, x.abs()).copysign(x)
    }
}

fn require_gm(model: &Model) -> Result<()> {
    match model.kind {
        ModelKind::Pkm { .. } => Err(Error::NotApplicable("truncation")),
        _ => Ok(()),
    }
}

/// `f_n(x) = κ(θ − ρ_n(x))`, defined on the whole real line.
pub fn truncated_drift(tp: &TruncationParams, model: &Model, x: f64) -> Result<f64> {
    require_gm(model)?;
    let r = rho_n(tp, x)?;
    Ok(model.params.kappa * (model.params.theta - r))
}

/// `g_n(x) = ξ ρ_n(x)^{p(ρ_n(x))}` for `x ≥ 0`.
///
/// Negative inputs are a domain error: `ρ_n` is negative there and no
/// signed-power convention is assumed.
pub fn truncated_diffusion(tp: &TruncationParams, model: &Model, x: f64) -> Result<f64> {
    require_gm(model)?;
    if !x.is_finite() || x < 0.0 {
        return Err(Error::domain("truncated diffusion", x));
    }
    Ok(model.diffusion_unchecked(rho_unchecked(tp, x)))
}

/// Truncated coefficients bound to one model, for use in hot loops.
#[derive(Debug, Clone)]
pub struct TruncatedCoefficients<'a> {
    pub tp: TruncationParams,
    pub model: &'a Model,
}

impl<'a> TruncatedCoefficients<'a> {
    pub fn new(tp: TruncationParams, model: &'a Model) -> Result<Self> {
        require_gm(model)?;
        Ok(Self { tp, model })
    }

    #[inline]
    pub fn drift(&self, x: f64) -> f64 {
        self.model.params.kappa * (self.model.params.theta - rho_unchecked(&self.tp, x))
    }

    /// Requires `x ≥ 0`.
    #[inline]
    pub fn diffusion(&self, x: f64) -> f64 {
        self.model.diffusion_unchecked(rho_unchecked(&self.tp, x))
    }

    /// `f_n` at `x⁺` through the right limit `θ_n(x⁺)`, so `x ≤ 0` gives
    /// `f_n(0⁺)` rather than the isolated value `f_n(0)`. Continuous in `x`.
    #[inline]
    pub fn drift_plus(&self, x: f64) -> f64 {
        self.model.params.kappa * (self.model.params.theta - theta_unchecked(&self.tp, x.max(0.0)))
    }

    /// `g_n` at `x⁺` through `θ_n(x⁺)`; defined and continuous on the whole line.
    #[inline]
    pub fn diffusion_plus(&self, x: f64) -> f64 {
        self.model
            .diffusion_unchecked(theta_unchecked(&self.tp, x.max(0.0)))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LipschitzReport {
    pub n: u32,
    pub epsilon: f64,
    #[serde(rename = "L_n")]
    pub l_n: f64,
    #[serde(rename = "C_n")]
    pub c_n: f64,
    #[serde(rename = "Lf_n")]
    pub lf_n: f64,
    #[serde(rename = "Lg_n")]
    pub lg_n: f64,
    #[serde(rename = "Lhat_n")]
    pub lhat_n: f64,
    pub empirical_sup_quotient: f64,
    #[serde(skip)]
    pub empirical_drift_quotient: f64,
    #[serde(skip)]
    pub empirical_diffusion_quotient: f64,
    #[serde(skip)]
    pub phi_deriv_sup: f64,
    #[serde(skip)]
    pub p_deriv_sup: f64,
}

impl LipschitzReport {
    pub fn holds(&self) -> bool {
        self.empirical_drift_quotient <= self.lf_n && self.empirical_diffusion_quotient <= self.lg_n
    }
}

/// `sup |φ_n'|` on `[1/n, n]`, where `φ_n(r) = θ_n(r)/r`.
///
/// Uniform grid on the band plus dense refinement of both gaps.
pub fn phi_deriv_sup(tp: &TruncationParams) -> f64 {
    let phi_prime = |r: f64| (theta_slope(tp, r) * r - theta_unchecked(tp, r)) / (r * r);
    let (lo, hi, eps) = (tp.lower(), tp.upper(), tp.epsilon);
    let mut sup = 0.0_f64;
    let mut scan = |a: f64, b: f64, pts: usize| {
        for i in 0..=pts {
            let r = a + (b - a) * i as f64 / pts as f64;
            sup = sup.max(phi_prime(r).abs());
        }
    };
    scan(lo, hi, SUP_GRID_POINTS);
    scan(lo, lo + eps, 1000);
    scan(hi - eps, hi, 1000);
    sup
}

/// Closed-form Lipschitz constants of the truncated coefficients plus an
/// empirical check on random pairs in `[1/n, n]`.
///
/// `C_n = n^{p⁺}(n p⁺ + ‖p'‖ ln n)` with `‖p'‖` the sup over `[1/n, n]`,
/// `L_n = 1 + n ‖φ_n'‖`, `Lf_n = κ L_n`, `Lg_n = ξ L_n C_n`,
/// `L̂_n = max(Lf_n², Lg_n²)`.
pub fn lipschitz_constants(
    tp: &TruncationParams,
    model: &Model,
    seed: u64,
) -> Result<LipschitzReport> {
    let coeffs = TruncatedCoefficients::new(*tp, model)?;
    let exponent = model.exponent();
    let nf = tp.n as f64;
    let pplus = exponent.declared_pplus();
    let p_deriv_sup = exponent.sup_abs_deriv(tp.lower(), tp.upper(), SUP_GRID_POINTS)?;
    let c_n = nf.powf(pplus) * (nf * pplus + p_deriv_sup * nf.ln());
    let phi_sup = phi_deriv_sup(tp);
    let l_n = 1.0 + nf * phi_sup;
    let lf_n = model.params.kappa * l_n;
    let lg_n = model.params.xi * l_n * c_n;

    let (lo, hi) = (tp.lower(), tp.upper());
    let mut words = random_words(seed, 0, 2 * LIPSCHITZ_PAIRS).into_iter();
    let mut sup_f = 0.0_f64;
    let mut sup_g = 0.0_f64;
    for _ in 0..LIPSCHITZ_PAIRS {
        let x = lo + (hi - lo) * open_unit(words.next().unwrap_or_default());
        let y = lo + (hi - lo) * open_unit(words.next().unwrap_or_default());
        if x == y {
            continue;
        }
        let d = (x - y).abs();
        sup_f = sup_f.max((coeffs.drift(x) - coeffs.drift(y)).abs() / d);
        sup_g = sup_g.max((coeffs.diffusion(x) - coeffs.diffusion(y)).abs() / d);
    }

    Ok(LipschitzReport {
        n: tp.n,
        epsilon: tp.epsilon,
        l_n,
        c_n,
        lf_n,
        lg_n,
        lhat_n: (lf_n * lf_n).max(lg_n * lg_n),
        empirical_sup_quotient: sup_f.max(sup_g),
        empirical_drift_quotient: sup_f,
        empirical_diffusion_quotient: sup_g,
        phi_deriv_sup: phi_sup,
        p_deriv_sup,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exponent::{make_builtin, ExponentFunction, ExponentSpec};
    use crate::model::ModelParams;

    fn tp(n: u32) -> TruncationParams {
        TruncationParams::with_default_epsilon(n).unwrap()
    }

    fn gm(spec: ExponentSpec) -> Model {
        Model::gm(ModelParams::default(), make_builtin(spec).unwrap()).unwrap()
    }

    #[test]
    fn positive_part_coefficients_are_continuous_at_zero() {
        let m = gm(ExponentSpec::P1);
        let c = TruncatedCoefficients::new(tp(10), &m).unwrap();
        // ρ_n jumps at the origin; the positive-part form does not
        assert_eq!(c.drift(0.0), 0.1);
        assert!((c.drift(1e-300) - (-0.1)).abs() < 1e-15);
        for x in [-3.0, -1e-9, 0.0, 1e-300, 0.05] {
            assert_eq!(c.drift_plus(x), c.drift(0.1));
            assert_eq!(c.diffusion_plus(x), c.diffusion(0.1));
        }
        for x in [0.2, 1.0, 9.99, 50.0] {
            assert_eq!(c.drift_plus(x), c.drift(x));
            assert_eq!(c.diffusion_plus(x), c.diffusion(x));
        }
    }

    #[test]
    fn params_validation() {
        assert!(TruncationParams::new(10, 0.005).is_ok());
        assert!(TruncationParams::new(10, 0.01).is_err());
        assert!(TruncationParams::new(10, 0.0).is_err());
        assert!(TruncationParams::new(0, 0.1).is_err());
        // n = 1 collapses: 1 + ε ≥ 1 − ε
        assert!(TruncationParams::with_default_epsilon(1).is_err());
        assert_eq!(tp(10).epsilon, 0.005);
    }

    #[test]
    fn theta_branches() {
        let t = TruncationParams::new(10, 0.005).unwrap();
        assert_eq!(theta_n(&t, 0.05).unwrap(), 0.1);
        assert_eq!(theta_n(&t, 0.0).unwrap(), 0.1);
        assert_eq!(theta_n(&t, 5.0).unwrap(), 5.0);
        assert_eq!(theta_n(&t, 50.0).unwrap(), 10.0);
        assert_eq!(theta_n(&t, 10.0).unwrap(), 10.0);
        assert!(theta_n(&t, -1.0).is_err());
        assert!(theta_n(&t, f64::NAN).is_err());
    }

    #[test]
    fn rho_values() {
        let t = tp(10);
        assert_eq!(rho_n(&t, 0.0).unwrap(), 0.0);
        assert_eq!(rho_n(&t, -5.0).unwrap(), -5.0);
        assert_eq!(rho_n(&t, 1e6).unwrap(), 10.0);
        assert!(rho_n(&t, f64::INFINITY).is_err());
    }

    #[test]
    fn theta_continuous_monotone_bounded() {
        for n in [2, 3, 10, 100] {
            let t = tp(n);
            let (lo, hi) = (1.0 / n as f64, n as f64);
            let pts = 200_000;
            let mut prev = theta_n(&t, 0.0).unwrap();
            for i in 1..=pts {
                let r = 1.2 * hi * i as f64 / pts as f64;
                let v = theta_n(&t, r).unwrap();
                assert!(v >= prev && (lo..=hi).contains(&v));
                // step 1.2n/pts, slope ≤ 4/3
                assert!(v - prev <= 4.0 / 3.0 * 1.2 * hi / pts as f64 + 1e-12);
                prev = v;
            }
        }
    }

    #[test]
    fn theta_is_c1_at_gap_edges() {
        let t = tp(4);
        let (lo, hi, eps) = (0.25, 4.0, t.epsilon);
        for (r, slope) in [(lo, 0.0), (lo + eps, 1.0), (hi - eps, 1.0), (hi, 0.0)] {
            let h = 1e-9;
            let left = (theta_unchecked(&t, r) - theta_unchecked(&t, r - h)) / h;
            let right = (theta_unchecked(&t, r + h) - theta_unchecked(&t, r)) / h;
            assert!(
                (left - slope).abs() < 1e-5 && (right - slope).abs() < 1e-5,
                "r = {r}"
            );
        }
    }

    #[test]
    fn theta_slope_matches_difference_quotient() {
        let t = tp(3);
        for i in 1..10_000 {
            let r = 3.5 * i as f64 / 10_000.0;
            let h = 1e-8;
            let fd = (theta_unchecked(&t, r + h) - theta_unchecked(&t, r - h)) / (2.0 * h);
            assert!((fd - theta_slope(&t, r)).abs() < 1e-4, "r = {r}");
        }
    }

    #[test]
    fn truncated_coefficients_agree_on_band() {
        for spec in [ExponentSpec::P1, ExponentSpec::P2, ExponentSpec::P3] {
            let m = gm(spec);
            for n in [2, 10, 100] {
                let t = tp(n);
                let (a, b) = (1.0 / n as f64 + t.epsilon, n as f64 - t.epsilon);
                for i in 0..=1000 {
                    let x = a + (b - a) * i as f64 / 1000.0;
                    assert_eq!(truncated_drift(&t, &m, x).unwrap(), m.drift(x).unwrap());
                    assert_eq!(
                        truncated_diffusion(&t, &m, x).unwrap(),
                        m.diffusion(x).unwrap()
                    );
                }
            }
        }
    }

    #[test]
    fn truncation_levels_nest() {
        let m = gm(ExponentSpec::P2);
        for n in [2, 5, 10, 50] {
            let (t, t1) = (tp(n), tp(n + 1));
            let (a, b) = (1.0 / n as f64 + t.epsilon, n as f64 - t.epsilon);
            for i in 0..=500 {
                let x = a + (b - a) * i as f64 / 500.0;
                assert_eq!(
                    truncated_diffusion(&t, &m, x).unwrap(),
                    truncated_diffusion(&t1, &m, x).unwrap()
                );
            }
        }
    }

    #[test]
    fn truncated_values() {
        let m = gm(ExponentSpec::P1);
        let t = tp(10);
        assert!((truncated_drift(&t, &m, 1e6).unwrap() + 19.9).abs() < 1e-12);
        assert!(truncated_drift(&t, &m, -3.0).is_ok());
        assert!(truncated_diffusion(&t, &m, -3.0).is_err());
        assert_eq!(truncated_diffusion(&t, &m, 0.0).unwrap(), 0.0);
        let pkm = Model::new(ModelParams::default(), ModelKind::Pkm { a: 0, b: 1.0 }).unwrap();
        assert!(truncated_drift(&t, &pkm, 1.0).is_err());
    }

    #[test]
    fn c_n_closed_form_constant_exponent() {
        let m = Model::gm(ModelParams::default(), ExponentFunction::constant(1.0)).unwrap();
        let r = lipschitz_constants(&tp(2), &m, 1).unwrap();
        assert_eq!(r.c_n, 4.0);
        assert_eq!(r.p_deriv_sup, 0.0);
    }

    #[test]
    fn phi_sup_is_attained_at_lower_edge() {
        // φ_n'(1/n) = −θ_n(1/n)·n² = −n
        for n in [2, 10, 100] {
            let s = phi_deriv_sup(&tp(n));
            assert!((s - n as f64).abs() < 1e-9 * n as f64, "n = {n}: {s}");
        }
    }

    #[test]
    fn lipschitz_report_consistent() {
        for spec in [ExponentSpec::P1, ExponentSpec::P2, ExponentSpec::P3] {
            let m = gm(spec);
            for n in [2, 10, 100] {
                let r = lipschitz_constants(&tp(n), &m, 7).unwrap();
                assert!(r.holds());
                assert!(r.empirical_sup_quotient <= r.lf_n.max(r.lg_n));
                assert!(r.lf_n > 0.0 && r.lg_n > 0.0);
                assert_eq!(r.lhat_n, (r.lf_n * r.lf_n).max(r.lg_n * r.lg_n));
            }
        }
    }

    #[test]
    fn lipschitz_json_keys() {
        let r = lipschitz_constants(&tp(10), &gm(ExponentSpec::P1), 1).unwrap();
        let json = serde_json::to_value(&r).unwrap();
        let mut keys: Vec<_> = json.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(
            keys,
            [
                "C_n",
                "L_n",
                "Lf_n",
                "Lg_n",
                "Lhat_n",
                "empirical_sup_quotient",
                "epsilon",
                "n"
            ]
        );
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn rho_is_odd(x in -1e4f64..1e4, n in 2u32..200) {
                let t = tp(n);
                prop_assert_eq!(rho_n(&t, -x).unwrap(), -rho_n(&t, x).unwrap());
                prop_assert!(rho_n(&t, x).unwrap().abs() <= n as f64);
            }

            #[test]
            fn rho_lipschitz_on_band(u in 0.0f64..1.0, w in 0.0f64..1.0, n in 2u32..200) {
                let t = tp(n);
                let (lo, hi) = (1.0 / n as f64, n as f64);
                let (x, y) = (lo + (hi - lo) * u, lo + (hi - lo) * w);
                let l_n = 1.0 + n as f64 * phi_deriv_sup(&t);
                let lhs = (rho_n(&t, x).unwrap() - rho_n(&t, y).unwrap()).abs();
                prop_assert!(lhs <= l_n * (x - y).abs() + 1e-15);
                // same on the mirrored band
                let lhs = (rho_n(&t, -x).unwrap() - rho_n(&t, -y).unwrap()).abs();
                prop_assert!(lhs <= l_n * (x - y).abs() + 1e-15);
            }
        }
    }
}
