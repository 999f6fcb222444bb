//! Path solvers: Euler–Maruyama for simulation and the discrete
//! successive-approximation (Picard) scheme on truncated coefficients.
//!
//! The Picard map uses left-point Itô sums on the same grid as the Euler
//! recursion, so the Euler path on the truncated coefficients is exactly its
//! fixed point. The two are computed by separate code paths and compared.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Model;
use crate::stochastic::{BrownianBatch, TimeGrid};
use crate::truncation::{TruncatedCoefficients, TruncationParams};

/// How a step that lands below zero is handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum PositivityPolicy {
    /// Coefficients at `max(v, 0)`, stored state clamped at 0.
    #[default]
    #[serde(rename = "full-trunc")]
    FullTruncation,
    /// Stored state replaced by `|v|`.
    #[serde(rename = "reflect")]
    Reflection,
}

impl FromStr for PositivityPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "full-trunc" => Ok(Self::FullTruncation),
            "reflect" => Ok(Self::Reflection),
            other => Err(Error::UnknownSpec {
                kind: "policy",
                name: other.to_string(),
            }),
        }
    }
}

impl fmt::Display for PositivityPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::FullTruncation => "full-trunc",
            Self::Reflection => "reflect",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub grid: TimeGrid,
    pub values: Vec<f64>,
    /// Steps whose pre-clamp state was negative.
    pub clamp_count: usize,
}

impl Path {
    pub fn constant(grid: TimeGrid, value: f64) -> Self {
        Self {
            grid,
            values: vec![value; grid.n_steps + 1],
            clamp_count: 0,
        }
    }

    pub fn at(&self, t: f64) -> Result<f64> {
        Ok(self.values[self.grid.index_of(t)?])
    }
}

fn check_row(grid: &TimeGrid, increments: &[f64]) -> Result<()> {
    if increments.len() != grid.n_steps {
        return Err(Error::InvalidParameter(format!(
            "increment row has {} entries, grid has {} steps",
            increments.len(),
            grid.n_steps
        )));
    }
    Ok(())
}

/// Euler–Maruyama path of `model` driven by one row of increments.
pub fn euler_maruyama(
    model: &Model,
    grid: &TimeGrid,
    increments: &[f64],
    policy: PositivityPolicy,
) -> Result<Path> {
    check_row(grid, increments)?;
    let dt = grid.dt;
    let mut values = Vec::with_capacity(grid.n_steps + 1);
    let mut v = model.params.v0;
    values.push(v);
    let mut clamp_count = 0;
    for (j, &dw) in increments.iter().enumerate() {
        let x = v.max(0.0);
        let mut next = v + model.drift_unchecked(x) * dt + model.diffusion_unchecked(x) * dw;
        if !next.is_finite() {
            return Err(Error::NonFinite { step: j });
        }
        if next < 0.0 {
            clamp_count += 1;
            next = match policy {
                PositivityPolicy::FullTruncation => 0.0,
                PositivityPolicy::Reflection => -next,
            };
        }
        values.push(next);
        v = next;
    }
    Ok(Path {
        grid: *grid,
        values,
        clamp_count,
    })
}

/// Euler recursion on the truncated coefficients `f_n`, `g_n`, evaluated at
/// `max(v, 0)` through the continuous band function `θ_n`. The state itself
/// is not clamped; `clamp_count` records the steps that ended below zero.
pub fn euler_truncated(
    tp: &TruncationParams,
    model: &Model,
    grid: &TimeGrid,
    increments: &[f64],
) -> Result<Path> {
    check_row(grid, increments)?;
    let coeffs = TruncatedCoefficients::new(*tp, model)?;
    let dt = grid.dt;
    let mut values = Vec::with_capacity(grid.n_steps + 1);
    values.push(model.params.v0);
    let mut clamp_count = 0;
    for (j, &dw) in increments.iter().enumerate() {
        let v = values[j];
        let next = v + coeffs.drift_plus(v) * dt + coeffs.diffusion_plus(v) * dw;
        if !next.is_finite() {
            return Err(Error::NonFinite { step: j });
        }
        if next < 0.0 {
            clamp_count += 1;
        }
        values.push(next);
    }
    Ok(Path {
        grid: *grid,
        values,
        clamp_count,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct ClampStats {
    pub total_clamps: usize,
    pub paths_with_clamps: usize,
    /// `total_clamps / (paths · steps)`.
    pub clamp_fraction: f64,
}

#[derive(Debug, Clone)]
pub struct PathBatch {
    pub grid: TimeGrid,
    pub policy: PositivityPolicy,
    pub paths: Vec<Path>,
    pub increment_checksum: String,
}

impl PathBatch {
    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn clamp_stats(&self) -> ClampStats {
        let total: usize = self.paths.iter().map(|p| p.clamp_count).sum();
        let steps = self.paths.len() * self.grid.n_steps;
        ClampStats {
            total_clamps: total,
            paths_with_clamps: self.paths.iter().filter(|p| p.clamp_count > 0).count(),
            clamp_fraction: if steps == 0 {
                0.0
            } else {
                total as f64 / steps as f64
            },
        }
    }

    /// Values of every path at grid node `j`, in path order.
    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.paths.iter().map(move |p| p.values[j])
    }
}

/// One Euler path per batch row. Rows are independent, so paths are
/// computed in parallel and collected in row order.
pub fn simulate_batch(
    model: &Model,
    batch: &BrownianBatch,
    policy: PositivityPolicy,
) -> Result<PathBatch> {
    let grid = *batch.grid();
    let results: Vec<Result<Path>> = (0..batch.m_paths())
        .into_par_iter()
        .map(|j| euler_maruyama(model, &grid, batch.row(j), policy))
        .collect();
    let mut paths = Vec::with_capacity(results.len());
    for (j, r) in results.into_iter().enumerate() {
        paths.push(r.map_err(|e| Error::Path {
            path: j,
            source: Box::new(e),
        })?);
    }
    Ok(PathBatch {
        grid,
        policy,
        paths,
        increment_checksum: batch.checksum(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PicardReport {
    pub iterations_used: usize,
    pub sup_diffs: Vec<f64>,
    pub converged: bool,
    #[serde(skip)]
    pub fixed_point: Path,
    /// Fitted constant of the `(M̂t)^k / k!` envelope; diagnostic only.
    pub rate_envelope_constant: Option<f64>,
}

impl PicardReport {
    /// `d_k` nonincreasing for all `k ≥ burn_in`.
    pub fn tail_nonincreasing(&self, burn_in: usize) -> bool {
        self.sup_diffs
            .iter()
            .skip(burn_in)
            .zip(self.sup_diffs.iter().skip(burn_in + 1))
            .all(|(a, b)| b <= a)
    }
}

/// Successive approximations `v⁽ᵏ⁺¹⁾(t_j) = v₀ + Σ_{i<j} f_n(v⁽ᵏ⁾_i) dt +
/// Σ_{i<j} g_n(v⁽ᵏ⁾_i) ΔW_i` starting from the constant path `v₀`.
///
/// Stops once the sup-norm change `d_k` drops to `tol` or after `k_max`
/// maps; non-convergence is reported, not raised.
pub fn picard_solve(
    tp: &TruncationParams,
    model: &Model,
    grid: &TimeGrid,
    increments: &[f64],
    tol: f64,
    k_max: usize,
) -> Result<PicardReport> {
    if tol.is_nan() || tol <= 0.0 || k_max == 0 {
        return Err(Error::InvalidParameter(format!(
            "tol = {tol}, k_max = {k_max}"
        )));
    }
    check_row(grid, increments)?;
    let coeffs = TruncatedCoefficients::new(*tp, model)?;
    let v0 = model.params.v0;
    let dt = grid.dt;

    let mut current = vec![v0; grid.n_steps + 1];
    let mut next = vec![0.0; grid.n_steps + 1];
    let mut sup_diffs = Vec::new();
    let mut converged = false;
    for _ in 0..k_max {
        next[0] = v0;
        for (j, &dw) in increments.iter().enumerate() {
            let x = current[j];
            next[j + 1] = next[j] + coeffs.drift_plus(x) * dt + coeffs.diffusion_plus(x) * dw;
        }
        if let Some(j) = next.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                step: j.saturating_sub(1),
            });
        }
        let d = current
            .iter()
            .zip(&next)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        sup_diffs.push(d);
        std::mem::swap(&mut current, &mut next);
        if d <= tol {
            converged = true;
            break;
        }
    }

    let clamp_count = current.iter().skip(1).filter(|v| **v < 0.0).count();
    Ok(PicardReport {
        iterations_used: sup_diffs.len(),
        rate_envelope_constant: fit_envelope(&sup_diffs, grid.horizon),
        sup_diffs,
        converged,
        fixed_point: Path {
            grid: *grid,
            values: current,
            clamp_count,
        },
    })
}

/// Least squares of `ln d_k + ln (k+1)!` on `k + 1`; the slope is
/// `ln(M̂ T)`.
fn fit_envelope(sup_diffs: &[f64], horizon: f64) -> Option<f64> {
    let mut ln_fact = 0.0;
    let mut pts = Vec::new();
    for (k, &d) in sup_diffs.iter().enumerate() {
        ln_fact += ((k + 1) as f64).ln();
        if d > 0.0 {
            pts.push(((k + 1) as f64, d.ln() + ln_fact));
        }
    }
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some((sxy / sxx).exp() / horizon)
}

/// First grid index at which the path leaves `[1/n, n]`.
pub fn band_exit_index(path: &Path, n: u32) -> Option<usize> {
    let (lo, hi) = (1.0 / n.max(1) as f64, n.max(1) as f64);
    path.values.iter().position(|&v| v < lo || v > hi)
}
