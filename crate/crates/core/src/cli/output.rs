//! File emission. Every file is written to a sibling temp file and renamed
//! into place, so readers never observe a partial artifact.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path as FsPath;

use serde::Serialize;

use crate::analysis::Histogram;
use crate::solver::{ClampStats, Path, PathBatch, PositivityPolicy};

use super::config::RunConfig;
use super::CliError;

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_atomic(path: &FsPath, bytes: &[u8]) -> Result<(), CliError> {
    let io_err = |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty());
    if let Some(dir) = dir {
        fs::create_dir_all(dir).map_err(io_err)?;
    }
    let name = path
        .file_name()
        .ok_or_else(|| CliError::Usage(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);

    let result = (|| {
        let mut file = fs::File::create(&tmp)?;
        file.write_all(bytes)?;
        file.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map_err(io_err)
}

pub fn write_json<T: Serialize>(path: &FsPath, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("report types serialize");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// `t,path_id,v` rows for the given paths, in path order.
pub fn paths_csv<'a>(paths: impl Iterator<Item = (usize, &'a Path)>) -> String {
    let mut out = String::from("t,path_id,v\n");
    for (id, path) in paths {
        for (t, v) in path.grid.times().zip(&path.values) {
            let _ = writeln!(out, "{},{id},{}", fmt_f64(t), fmt_f64(*v));
        }
    }
    out
}

pub fn histogram_csv(h: &Histogram) -> String {
    let mut out = String::from("bin_left,bin_right,count,density\n");
    for ((e, c), d) in h.bin_edges.windows(2).zip(&h.counts).zip(&h.densities) {
        let _ = writeln!(
            out,
            "{},{},{c},{}",
            fmt_f64(e[0]),
            fmt_f64(e[1]),
            fmt_f64(*d)
        );
    }
    out
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub rng: &'static str,
    pub model: String,
    pub seed: u64,
    pub policy: PositivityPolicy,
    pub paths: usize,
    pub n_steps: usize,
    pub clamp_stats: ClampStats,
    pub increment_checksum: &'a str,
    pub files: Vec<String>,
    pub config: &'a RunConfig,
}

impl<'a> Manifest<'a> {
    pub fn new(
        model: String,
        batch: &'a PathBatch,
        config: &'a RunConfig,
        files: Vec<String>,
    ) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            rng: "chacha8/as241",
            model,
            seed: config.seed,
            policy: batch.policy,
            paths: batch.len(),
            n_steps: batch.grid.n_steps,
            clamp_stats: batch.clamp_stats(),
            increment_checksum: &batch.increment_checksum,
            files,
            config,
        }
    }
}
