//! Monte Carlo statistics over simulated path batches: empirical moments
//! against their closed-form bounds, the martingale statistic
//! `M_h(t) = v(t) − ∫₀ᵗ f(v) ds`, and terminal histograms.
//!
//! All reductions run sequentially in path order.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Model, ModelParams};
use crate::solver::{Path, PathBatch, PositivityPolicy};
use crate::stochastic::TimeGrid;

/// Number of standard errors tolerated by the statistical checks.
pub const SIGMA_MULTIPLIER: f64 = 4.0;

/// Sample mean and standard error (`s / √M`, `s` with `M − 1`
/// denominator; zero for a single sample).
pub fn mean_stderr(values: impl Iterator<Item = f64>) -> Result<(f64, f64)> {
    let xs: Vec<f64> = values.collect();
    if xs.is_empty() {
        return Err(Error::Empty("sample"));
    }
    let n = xs.len() as f64;
    // shifted by the first sample, so a constant sample has exact mean
    let shift = xs[0];
    let mean = shift + xs.iter().map(|x| x - shift).sum::<f64>() / n;
    if xs.len() == 1 {
        return Ok((mean, 0.0));
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

/// `E[v(t)^m]` over the batch with its standard error.
pub fn empirical_moment(batch: &PathBatch, t: f64, m: u32) -> Result<(f64, f64)> {
    if batch.is_empty() {
        return Err(Error::Empty("path batch"));
    }
    if m == 0 {
        return Err(Error::InvalidParameter(
            "moment order must be at least 1".into(),
        ));
    }
    let j = batch.grid.index_of(t)?;
    mean_stderr(batch.column(j).map(|v| v.powi(m as i32)))
}

/// `C_m = mκ(θ+1) + (ξ²/2)m(m−1)` and the bound `2^{m−1}(1 + v₀^m)e^{C_m t}`.
pub fn moment_bound(params: &ModelParams, m: u32, t: f64) -> Result<(f64, f64)> {
    if m < 2 {
        return Err(Error::InvalidParameter(format!(
            "moment bound needs m ≥ 2, got {m}"
        )));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidParameter(format!("t = {t}")));
    }
    let ModelParams {
        kappa,
        theta,
        xi,
        v0,
    } = *params;
    let mf = m as f64;
    let c_m = mf * kappa * (theta + 1.0) + 0.5 * xi * xi * mf * (mf - 1.0);
    let bound = 2f64.powi(m as i32 - 1) * (1.0 + v0.powi(m as i32)) * (c_m * t).exp();
    Ok((c_m, bound))
}

#[derive(Debug, Clone, Serialize)]
pub struct MomentReport {
    pub order: u32,
    pub t: f64,
    pub empirical: f64,
    pub stderr: f64,
    pub theoretical_bound: f64,
    #[serde(rename = "C_m")]
    pub c_m: f64,
    pub satisfied: bool,
}

pub fn check_moment_bounds(
    batch: &PathBatch,
    params: &ModelParams,
    orders: &[u32],
    checkpoints: &[f64],
) -> Result<Vec<MomentReport>> {
    let mut out = Vec::with_capacity(orders.len() * checkpoints.len());
    for &m in orders {
        for &t in checkpoints {
            let (c_m, bound) = moment_bound(params, m, t)?;
            let (empirical, stderr) = empirical_moment(batch, t, m)?;
            out.push(MomentReport {
                order: m,
                t,
                empirical,
                stderr,
                theoretical_bound: bound,
                c_m,
                satisfied: empirical <= bound,
            });
        }
    }
    Ok(out)
}

/// Ceiling for `E sup_t |v(t)|²` from the linear growth constant:
/// `(1 + 3v₀²) exp(3K T (T + 4))`.
pub fn second_moment_bound(model: &Model, grid: &TimeGrid) -> Result<f64> {
    let k = model.growth_constant()?;
    Ok(second_moment_bound_with(k, model.params.v0, grid.horizon))
}

pub fn second_moment_bound_with(k: f64, v0: f64, horizon: f64) -> f64 {
    (1.0 + 3.0 * v0 * v0) * (3.0 * k * horizon * (horizon + 4.0)).exp()
}

/// `M_h(t_j) = v(t_j) − Σ_{i<j} f(v(t_i)) dt` along one path.
pub fn martingale_statistic(path: &Path, model: &Model) -> Vec<f64> {
    let dt = path.grid.dt;
    let mut integral = 0.0;
    let mut out = Vec::with_capacity(path.values.len());
    for (j, &v) in path.values.iter().enumerate() {
        if j > 0 {
            integral += model.drift_unchecked(path.values[j - 1].max(0.0)) * dt;
        }
        out.push(v - integral);
    }
    out
}

/// Discrete Itô sum `v₀ + Σ_{i<j} g(v_i⁺) ΔW_i` along one path.
pub fn ito_sum(path: &Path, model: &Model, increments: &[f64]) -> Vec<f64> {
    let mut acc = model.params.v0;
    let mut out = Vec::with_capacity(path.values.len());
    out.push(acc);
    for (v, dw) in path.values.iter().zip(increments) {
        acc += model.diffusion_unchecked(v.max(0.0)) * dw;
        out.push(acc);
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct MartingaleReport {
    pub v0: f64,
    pub checkpoints: Vec<f64>,
    pub mh_means: Vec<f64>,
    pub mh_stderrs: Vec<f64>,
    pub max_abs_drift: f64,
    pub bias_allowance: f64,
    pub satisfied: bool,
}

impl MartingaleReport {
    /// Same test without the discretisation allowance.
    pub fn within_sigma(&self, k: f64) -> bool {
        self.mh_means
            .iter()
            .zip(&self.mh_stderrs)
            .all(|(m, s)| (m - self.v0).abs() <= k * s)
    }
}

/// Batch means of `M_h` at each checkpoint. Satisfied when every mean is
/// within `4·stderr + κ(θ + v₀)dt` of `v₀`.
pub fn martingale_report(
    batch: &PathBatch,
    model: &Model,
    checkpoints: &[f64],
) -> Result<MartingaleReport> {
    if checkpoints.is_empty() {
        return Err(Error::Empty("checkpoint list"));
    }
    if batch.is_empty() {
        return Err(Error::Empty("path batch"));
    }
    let idx = checkpoints
        .iter()
        .map(|&t| batch.grid.index_of(t))
        .collect::<Result<Vec<_>>>()?;
    let per_path: Vec<Vec<f64>> = batch
        .paths
        .iter()
        .map(|p| {
            let mh = martingale_statistic(p, model);
            idx.iter().map(|&j| mh[j]).collect()
        })
        .collect();

    let ModelParams {
        kappa, theta, v0, ..
    } = model.params;
    let bias_allowance = kappa * (theta + v0) * batch.grid.dt;
    let mut mh_means = Vec::with_capacity(idx.len());
    let mut mh_stderrs = Vec::with_capacity(idx.len());
    for c in 0..idx.len() {
        let (m, s) = mean_stderr(per_path.iter().map(|row| row[c]))?;
        mh_means.push(m);
        mh_stderrs.push(s);
    }
    let max_abs_drift = mh_means
        .iter()
        .fold(0.0_f64, |acc, m| acc.max((m - v0).abs()));
    let satisfied = mh_means
        .iter()
        .zip(&mh_stderrs)
        .all(|(m, s)| (m - v0).abs() <= SIGMA_MULTIPLIER * s + bias_allowance);
    Ok(MartingaleReport {
        v0,
        checkpoints: checkpoints.to_vec(),
        mh_means,
        mh_stderrs,
        max_abs_drift,
        bias_allowance,
        satisfied,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Histogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub densities: Vec<f64>,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Equal-width histogram of `v(t)` over `[min, max]`.
///
/// If every value is identical the result is one bin of width
/// `8·ε·max(|c|, 1)` centred on the value, whatever `n_bins` is.
pub fn terminal_histogram(batch: &PathBatch, t: f64, n_bins: usize) -> Result<Histogram> {
    if n_bins == 0 {
        return Err(Error::InvalidParameter(
            "histogram needs at least one bin".into(),
        ));
    }
    if batch.is_empty() {
        return Err(Error::Empty("path batch"));
    }
    let j = batch.grid.index_of(t)?;
    histogram(batch.column(j), n_bins)
}

pub fn histogram(values: impl Iterator<Item = f64>, n_bins: usize) -> Result<Histogram> {
    let xs: Vec<f64> = values.collect();
    if xs.is_empty() {
        return Err(Error::Empty("sample"));
    }
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let total = xs.len() as f64;
    if lo == hi {
        let w = 8.0 * f64::EPSILON * lo.abs().max(1.0);
        return Ok(Histogram {
            bin_edges: vec![lo - 0.5 * w, lo + 0.5 * w],
            counts: vec![xs.len() as u64],
            densities: vec![1.0 / w],
        });
    }
    let width = (hi - lo) / n_bins as f64;
    let bin_edges: Vec<f64> = (0..=n_bins)
        .map(|i| {
            if i == n_bins {
                hi
            } else {
                lo + width * i as f64
            }
        })
        .collect();
    let mut counts = vec![0u64; n_bins];
    for &x in &xs {
        let b = (((x - lo) / width) as usize).min(n_bins - 1);
        counts[b] += 1;
    }
    let densities = counts
        .iter()
        .zip(bin_edges.windows(2))
        .map(|(&c, e)| c as f64 / (total * (e[1] - e[0])))
        .collect();
    Ok(Histogram {
        bin_edges,
        counts,
        densities,
    })
}

/// Checkpoints `T/4, T/2, 3T/4, T` snapped to grid nodes.
pub fn default_checkpoints(grid: &TimeGrid) -> Vec<f64> {
    (1..=4).map(|q| grid.time((grid.n_steps * q) / 4)).collect()
}

/// Per-model run summary written as JSON.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub model: String,
    pub seed: u64,
    pub policy: PositivityPolicy,
    pub paths: usize,
    pub terminal_mean: f64,
    pub terminal_stderr: f64,
    pub exact_mean: f64,
    pub moments: Vec<MomentReport>,
    pub second_moment_bound: Option<f64>,
    pub martingale: MartingaleReport,
    pub histogram: Histogram,
}

/// `E v(t) = θ + (v₀ − θ)e^{−κt}` for the linear drift.
pub fn exact_mean(params: &ModelParams, t: f64) -> f64 {
    params.theta + (params.v0 - params.theta) * (-params.kappa * t).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exponent::{make_builtin, ExponentSpec};
    use crate::solver::{euler_maruyama, simulate_batch};
    use crate::stochastic::{make_grid, sample_batch};

    fn constant_batch(grid: TimeGrid, values: &[f64]) -> PathBatch {
        PathBatch {
            grid,
            policy: PositivityPolicy::default(),
            paths: values.iter().map(|&c| Path::constant(grid, c)).collect(),
            increment_checksum: String::new(),
        }
    }

    fn p1_model() -> Model {
        Model::gm(
            ModelParams::default(),
            make_builtin(ExponentSpec::P1).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn moments_of_constant_batch() {
        let grid = make_grid(1.0, 0.1).unwrap();
        let b = constant_batch(grid, &[0.3; 10]);
        for m in 1..5 {
            let (mean, se) = empirical_moment(&b, 0.5, m).unwrap();
            assert!((mean - 0.3f64.powi(m as i32)).abs() < 1e-15);
            assert!(se < 1e-15);
        }
        assert!(empirical_moment(&b, 0.55, 1).is_err());
        assert!(empirical_moment(&b, 0.5, 0).is_err());
        assert!(empirical_moment(&constant_batch(grid, &[]), 0.5, 1).is_err());
    }

    #[test]
    fn initial_moment_is_v0() {
        let grid = make_grid(1.0, 0.01).unwrap();
        let batch = sample_batch(1, 50, &grid).unwrap();
        let pb = simulate_batch(&p1_model(), &batch, PositivityPolicy::default()).unwrap();
        assert_eq!(empirical_moment(&pb, 0.0, 1).unwrap(), (0.05, 0.0));
    }

    #[test]
    fn moment_bound_values() {
        let (c2, b) = moment_bound(&ModelParams::default(), 2, 1.0).unwrap();
        assert!((c2 - 4.29).abs() < 1e-12);
        // 2·(1 + 0.0025)·e^{4.29}
        assert!((b - 146.29776934176377).abs() < 1e-9, "{b}");
        let p = ModelParams {
            v0: 1.0,
            ..ModelParams::default()
        };
        assert_eq!(moment_bound(&p, 2, 0.0).unwrap().1, 4.0);
        assert!(moment_bound(&p, 1, 1.0).is_err());
        let cs: Vec<f64> = (2..8)
            .map(|m| moment_bound(&p, m, 1.0).unwrap().0)
            .collect();
        assert!(cs.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn degenerate_batch_satisfies_bounds() {
        let grid = make_grid(1.0, 0.25).unwrap();
        let params = ModelParams::default();
        let b = constant_batch(grid, &[params.v0; 4]);
        let r = check_moment_bounds(&b, &params, &[2, 3, 4, 6], &[0.0, 0.5, 1.0]).unwrap();
        assert_eq!(r.len(), 12);
        assert!(r.iter().all(|m| m.satisfied));
        assert!(check_moment_bounds(&b, &params, &[1], &[1.0]).is_err());
    }

    #[test]
    fn second_moment_bound_values() {
        let grid = make_grid(1.0, 0.001).unwrap();
        let b = second_moment_bound(&p1_model(), &grid).unwrap();
        let expected = (1.0 + 3.0 * 0.0025) * 120f64.exp();
        assert!((b / expected - 1.0).abs() < 1e-14);
        let v0 = 0.05;
        assert!((second_moment_bound_with(8.0, v0, 1e-12) - (1.0 + 3.0 * v0 * v0)).abs() < 1e-9);
        let (b1, b2) = (
            second_moment_bound_with(0.5, v0, 1.0),
            second_moment_bound_with(1.0, v0, 1.0),
        );
        assert!((b2 / (b1 * b1 / (1.0 + 3.0 * v0 * v0)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn martingale_zero_noise_is_v0() {
        let grid = make_grid(1.0, 0.001).unwrap();
        let params = ModelParams {
            v0: 0.3,
            ..ModelParams::default()
        };
        let m = Model::cir(params).unwrap();
        let path =
            euler_maruyama(&m, &grid, &vec![0.0; 1000], PositivityPolicy::default()).unwrap();
        for mh in martingale_statistic(&path, &m) {
            assert!((mh - 0.3).abs() < 1e-14);
        }
    }

    #[test]
    fn martingale_at_zero_is_exact() {
        let grid = make_grid(1.0, 0.01).unwrap();
        let batch = sample_batch(2, 100, &grid).unwrap();
        let m = p1_model();
        let pb = simulate_batch(&m, &batch, PositivityPolicy::default()).unwrap();
        let r = martingale_report(&pb, &m, &[0.0, 0.5, 1.0]).unwrap();
        assert_eq!(r.mh_means[0], 0.05);
        assert_eq!(r.mh_stderrs[0], 0.0);
        assert!(martingale_report(&pb, &m, &[]).is_err());
        assert!(martingale_report(&pb, &m, &[0.123]).is_err());
    }

    #[test]
    fn telescoping_identity() {
        let grid = make_grid(1.0, 0.001).unwrap();
        let batch = sample_batch(99, 10, &grid).unwrap();
        let m = p1_model();
        let pb = simulate_batch(&m, &batch, PositivityPolicy::default()).unwrap();
        for (j, p) in pb.paths.iter().enumerate() {
            assert_eq!(p.clamp_count, 0);
            let mh = martingale_statistic(p, &m);
            let ito = ito_sum(p, &m, batch.row(j));
            for (a, b) in mh.iter().zip(&ito) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn jensen_on_batches() {
        let grid = make_grid(1.0, 0.01).unwrap();
        let batch = sample_batch(4, 500, &grid).unwrap();
        let pb = simulate_batch(&p1_model(), &batch, PositivityPolicy::default()).unwrap();
        for t in default_checkpoints(&grid) {
            let (m1, _) = empirical_moment(&pb, t, 1).unwrap();
            let (m2, _) = empirical_moment(&pb, t, 2).unwrap();
            assert!(m2 >= m1 * m1);
        }
    }

    #[test]
    fn histogram_conservation() {
        let grid = make_grid(1.0, 0.01).unwrap();
        let batch = sample_batch(4, 777, &grid).unwrap();
        let pb = simulate_batch(&p1_model(), &batch, PositivityPolicy::default()).unwrap();
        let h = terminal_histogram(&pb, 1.0, 50).unwrap();
        assert_eq!(h.total(), 777);
        assert_eq!(h.counts.len(), 50);
        assert_eq!(h.bin_edges.len(), 51);
        assert!(h.bin_edges.windows(2).all(|w| w[1] > w[0]));
        let mass: f64 = h
            .densities
            .iter()
            .zip(h.bin_edges.windows(2))
            .map(|(d, e)| d * (e[1] - e[0]))
            .sum();
        assert!((mass - 1.0).abs() < 1e-12);
        assert!(terminal_histogram(&pb, 1.0, 0).is_err());
    }

    #[test]
    fn histogram_degenerate() {
        let grid = make_grid(1.0, 0.5).unwrap();
        let h = terminal_histogram(&constant_batch(grid, &[0.05; 9]), 1.0, 50).unwrap();
        assert_eq!(h.counts, vec![9]);
        let w = h.bin_edges[1] - h.bin_edges[0];
        assert!(w > 0.0 && (h.densities[0] * w - 1.0).abs() < 1e-12);
    }

    #[test]
    fn default_checkpoints_on_grid() {
        let grid = make_grid(1.0, 0.001).unwrap();
        assert_eq!(default_checkpoints(&grid), vec![0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn mean_stderr_matches_textbook() {
        let (m, s) = mean_stderr([1.0, 2.0, 3.0, 4.0].into_iter()).unwrap();
        assert_eq!(m, 2.5);
        // sample variance 5/3, stderr sqrt(5/3/4)
        assert!((s - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn histogram_counts_everything(xs in proptest::collection::vec(-1e3f64..1e3, 1..400), bins in 1usize..80) {
                let h = histogram(xs.iter().copied(), bins).unwrap();
                prop_assert_eq!(h.total(), xs.len() as u64);
                let mass: f64 = h.densities.iter().zip(h.bin_edges.windows(2)).map(|(d, e)| d * (e[1] - e[0])).sum();
                prop_assert!((mass - 1.0).abs() < 1e-12);
            }

            #[test]
            fn second_moment_dominates_squared_mean(xs in proptest::collection::vec(0.0f64..10.0, 2..200)) {
                let grid = make_grid(1.0, 1.0).unwrap();
                let b = constant_batch(grid, &xs);
                let (m1, _) = empirical_moment(&b, 1.0, 1).unwrap();
                let (m2, _) = empirical_moment(&b, 1.0, 2).unwrap();
                prop_assert!(m2 >= m1 * m1 * (1.0 - 1e-12));
            }
        }
    }
}
