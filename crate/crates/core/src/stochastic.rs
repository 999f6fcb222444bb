//! Seed-reproducible Brownian increments.
//!
//! Every increment is addressed by `(seed, path, step)`: path `j` reads
//! ChaCha8 stream `j` of the key derived from `seed`, one 64-bit word per
//! step. Rows can therefore be generated in any order, on any number of
//! threads, or regenerated one at a time, and always come out bit-identical.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Largest batch kept in memory (2^30 increments, 8 GiB). Larger runs must
/// regenerate rows with [`sample_row`].
pub const MAX_STORED_INCREMENTS: u128 = 1 << 30;

/// Uniform time grid `t_j = j·dt`, `j = 0..=n_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeGrid {
    pub horizon: f64,
    pub dt: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, dt: f64) -> Result<Self> {
        make_grid(horizon, dt)
    }

    #[inline]
    pub fn time(&self, j: usize) -> f64 {
        j as f64 * self.dt
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n_steps).map(|j| self.time(j))
    }

    /// Index of the node at time `t`, if `t` is one.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        if !t.is_finite() || t < 0.0 {
            return Err(Error::NotOnGrid(t));
        }
        let j = (t / self.dt).round();
        if j > self.n_steps as f64 || (j * self.dt - t).abs() > 1e-9 * self.dt.max(t) {
            return Err(Error::NotOnGrid(t));
        }
        Ok(j as usize)
    }
}

pub fn make_grid(horizon: f64, dt: f64) -> Result<TimeGrid> {
    if !(horizon > 0.0 && horizon.is_finite()) || !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidGrid(format!(
            "T = {horizon} and dt = {dt} must be positive"
        )));
    }
    let ratio = horizon / dt;
    let n = ratio.round();
    if n < 1.0 || (ratio - n).abs() > 1e-9 * n.max(1.0) {
        return Err(Error::InvalidGrid(format!(
            "T / dt = {ratio} is not a whole number of steps"
        )));
    }
    if n > usize::MAX as f64 {
        return Err(Error::InvalidGrid(format!("{n} steps")));
    }
    Ok(TimeGrid {
        horizon,
        dt,
        n_steps: n as usize,
    })
}

/// Inverse of the standard normal CDF (Wichura, AS 241 `PPND16`).
///
/// Relative accuracy is about 1e-16 over `(0, 1)`.
#[allow(clippy::excessive_precision)]
pub fn normal_quantile(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0);
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q
            * (((((((r * 2509.0809287301226727 + 33430.575583588128105) * r
                + 67265.770927008700853)
                * r
                + 45921.953931549871457)
                * r
                + 13731.693765509461125)
                * r
                + 1971.5909503065514427)
                * r
                + 133.14166789178437745)
                * r
                + 3.387132872796366608)
            / (((((((r * 5226.495278852545925 + 28729.085735721942674) * r
                + 39307.89580009271061)
                * r
                + 21213.794301586595867)
                * r
                + 5394.1960214247511077)
                * r
                + 687.1870074920579083)
                * r
                + 42.313330701600911252)
                * r
                + 1.0);
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-tail.ln()).sqrt();
    let val = if r <= 5.0 {
        r -= 1.6;
        (((((((r * 7.7454501427834140764e-4 + 0.0227238449892691845833) * r
            + 0.24178072517745061177)
            * r
            + 1.27045825245236838258)
            * r
            + 3.64784832476320460504)
            * r
            + 5.7694972214606914055)
            * r
            + 4.6303378461565452959)
            * r
            + 1.42343711074968357734)
            / (((((((r * 1.05075007164441684324e-9 + 5.475938084995344946e-4) * r
                + 0.0151986665636164571966)
                * r
                + 0.14810397642748007459)
                * r
                + 0.68976733498510000455)
                * r
                + 1.6763848301838038494)
                * r
                + 2.05319162663775882187)
                * r
                + 1.0)
    } else {
        r -= 5.0;
        (((((((r * 2.01033439929228813265e-7 + 2.71155556874348757815e-5) * r
            + 0.0012426609473880784386)
            * r
            + 0.026532189526576123093)
            * r
            + 0.29656057182850489123)
            * r
            + 1.7848265399172913358)
            * r
            + 5.4637849111641143699)
            * r
            + 6.6579046435011037772)
            / (((((((r * 2.04426310338993978564e-15 + 1.4215117583164458887e-7) * r
                + 1.8463183175100546818e-5)
                * r
                + 7.868691311456132591e-4)
                * r
                + 0.0148753612908506148525)
                * r
                + 0.13692988092273580531)
                * r
                + 0.59983220655588793769)
                * r
                + 1.0)
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

/// Maps a 64-bit word to the open interval `(0, 1)` using its top 52 bits;
/// the result lies in `[2^-53, 1 − 2^-53]`.
#[inline]
pub fn open_unit(word: u64) -> f64 {
    ((word >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos(0);
    rng
}

/// Raw 64-bit words of stream `stream` under `seed`.
pub fn random_words(seed: u64, stream: u64, n: usize) -> Vec<u64> {
    let mut rng = stream_rng(seed, stream);
    (0..n).map(|_| rng.next_u64()).collect()
}

/// Standard normal draws for `(seed, path, 0..n)`.
pub fn standard_normals(seed: u64, path: usize, n: usize) -> Vec<f64> {
    let mut rng = stream_rng(seed, path as u64);
    (0..n)
        .map(|_| normal_quantile(open_unit(rng.next_u64())))
        .collect()
}

/// Brownian increments of path `path`, `N(0, dt)` each. Identical to row
/// `path` of [`sample_batch`] with the same seed and grid.
pub fn sample_row(seed: u64, path: usize, grid: &TimeGrid) -> Vec<f64> {
    let scale = grid.dt.sqrt();
    let mut row = standard_normals(seed, path, grid.n_steps);
    row.iter_mut().for_each(|z| *z *= scale);
    row
}

/// `m_paths × n_steps` matrix of Brownian increments, row-major.
#[derive(Debug, Clone)]
pub struct BrownianBatch {
    seed: u64,
    m_paths: usize,
    grid: TimeGrid,
    increments: Vec<f64>,
}

impl BrownianBatch {
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn m_paths(&self) -> usize {
        self.m_paths
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn row(&self, path: usize) -> &[f64] {
        let n = self.grid.n_steps;
        &self.increments[path * n..(path + 1) * n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.increments.chunks_exact(self.grid.n_steps)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.increments
    }

    /// SHA-256 over the little-endian bytes of every increment, hex encoded.
    pub fn checksum(&self) -> String {
        let mut hasher = Sha256::new();
        for x in &self.increments {
            hasher.update(x.to_le_bytes());
        }
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

pub fn sample_batch(seed: u64, m_paths: usize, grid: &TimeGrid) -> Result<BrownianBatch> {
    if m_paths == 0 {
        return Err(Error::InvalidParameter("m_paths must be at least 1".into()));
    }
    let requested = m_paths as u128 * grid.n_steps as u128;
    if requested > MAX_STORED_INCREMENTS {
        return Err(Error::ResourceLimit {
            requested,
            limit: MAX_STORED_INCREMENTS,
        });
    }
    let n = grid.n_steps;
    let scale = grid.dt.sqrt();
    let mut increments = vec![0.0; m_paths * n];
    increments
        .par_chunks_mut(n)
        .enumerate()
        .for_each(|(path, row)| {
            let mut rng = stream_rng(seed, path as u64);
            for dw in row.iter_mut() {
                *dw = scale * normal_quantile(open_unit(rng.next_u64()));
            }
        });
    Ok(BrownianBatch {
        seed,
        m_paths,
        grid: *grid,
        increments,
    })
}
