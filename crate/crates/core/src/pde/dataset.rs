//! Seeded datasets and their on-disk format.
//!
//! A dataset is a pair of files sharing a stem: `<stem>.json` holds the
//! metadata and `<stem>.bin` the samples in index order, each as its input
//! values followed by its target values, little-endian `f64`, no padding.

use super::{PdeKind, PdeSpec};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::par::{map_indexed, Execution};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const DATASET_FORMAT_VERSION: u32 = 1;

/// One input/target pair, both point-major (`[n, channels]` row-major).
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub a: Vec<f64>,
    pub u: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Splits {
    pub fn get(&self, name: &str) -> Option<&[usize]> {
        match name {
            "train" => Some(&self.train),
            "val" => Some(&self.val),
            "test" => Some(&self.test),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub spec: PdeSpec,
    pub grid: Grid,
    pub seed: u64,
    pub fractions: [f64; 3],
    pub splits: Splits,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn in_channels(&self) -> usize {
        self.spec.in_channels()
    }

    pub fn out_channels(&self) -> usize {
        self.spec.out_channels()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Split sizes `(train, val, test)` for `n` samples: rounded fractions with
/// at least one sample in every split.
pub fn split_sizes(n: usize, fractions: [f64; 3]) -> Result<(usize, usize, usize)> {
    if fractions.iter().any(|f| !(*f > 0.0)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split fractions {fractions:?} must be positive and sum to 1")));
    }
    if n < 3 {
        return Err(Error::Config(format!("{n} samples cannot fill three splits")));
    }
    let val = ((n as f64 * fractions[1]).round() as usize).max(1);
    let test = ((n as f64 * fractions[2]).round() as usize).max(1);
    if val + test >= n {
        return Err(Error::Config(format!("{n} samples leave no training data")));
    }
    Ok((n - val - test, val, test))
}

/// Warning text for datasets too small for the split fractions to be
/// meaningful.
pub fn small_split_warning(n: usize) -> Option<String> {
    (n < 10).then(|| format!("only {n} samples: splits are forced to hold at least one sample each"))
}

/// Deterministic shuffle of `0..n` under `seed`, cut into sorted splits.
pub fn split_indices(n: usize, fractions: [f64; 3], seed: u64) -> Result<Splits> {
    let (train, val, _) = split_sizes(n, fractions)?;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let part = |r: std::ops::Range<usize>| {
        let mut v = idx[r].to_vec();
        v.sort_unstable();
        v
    };
    Ok(Splits {
        train: part(0..train),
        val: part(train..train + val),
        test: part(train + val..n),
    })
}

/// Generates `n` samples with per-sample seeds `seed ^ index`.
pub fn build_dataset(spec: &PdeSpec, n: usize, seed: u64, fractions: [f64; 3], exec: Execution) -> Result<Dataset> {
    spec.validate()?;
    let grid = spec.grid()?;
    let splits = split_indices(n, fractions, seed)?;
    let samples = map_indexed(n, exec, |i| spec.generate(seed ^ i as u64))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        spec: spec.clone(),
        grid,
        seed,
        fractions,
        splits,
        samples,
    })
}

#[derive(Serialize, Deserialize)]
struct Metadata {
    format_version: u32,
    pde: PdeSpec,
    boundary: String,
    input_construction: String,
    grid: Grid,
    dtype: String,
    samples: usize,
    input_shape: Vec<usize>,
    output_shape: Vec<usize>,
    seed: u64,
    fractions: [f64; 3],
    splits: Splits,
}

fn describe(spec: &PdeSpec) -> (String, String) {
    match spec.kind {
        PdeKind::DiffusionReaction1d => (
            "periodic".into(),
            format!(
                "random Fourier series, {} modes, coefficient std 1/k, mapped affinely onto [0.1, 0.9]",
                spec.ic_modes
            ),
        ),
        PdeKind::AllenCahn1d => (
            "homogeneous Neumann".into(),
            format!("random Fourier series, {} modes, coefficient std 1/k, scaled to max-abs 1", spec.ic_modes),
        ),
        PdeKind::Darcy2d => (
            "homogeneous Dirichlet".into(),
            format!(
                "squared-exponential Gaussian random field, length scale {}, thresholded at 0 to {{{}, {}}}",
                spec.length_scale, spec.permeability_low, spec.permeability_high
            ),
        ),
    }
}

/// Paths of the metadata and payload files for `stem` (any extension on
/// `stem` is replaced).
pub fn dataset_paths(stem: impl AsRef<Path>) -> (PathBuf, PathBuf) {
    let stem = stem.as_ref();
    (stem.with_extension("json"), stem.with_extension("bin"))
}

pub fn write_dataset(stem: impl AsRef<Path>, ds: &Dataset) -> Result<(PathBuf, PathBuf)> {
    let (json_path, bin_path) = dataset_paths(stem);
    let n = ds.grid.len();
    let (boundary, input_construction) = describe(&ds.spec);
    let meta = Metadata {
        format_version: DATASET_FORMAT_VERSION,
        pde: ds.spec.clone(),
        boundary,
        input_construction,
        grid: ds.grid.clone(),
        dtype: "f64".into(),
        samples: ds.samples.len(),
        input_shape: vec![n, ds.in_channels()],
        output_shape: vec![n, ds.out_channels()],
        seed: ds.seed,
        fractions: ds.fractions,
        splits: ds.splits.clone(),
    };
    let mut payload = Vec::with_capacity(ds.samples.len() * n * (ds.in_channels() + ds.out_channels()) * 8);
    for s in &ds.samples {
        for v in s.a.iter().chain(&s.u) {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut json = serde_json::to_string_pretty(&meta)?;
    json.push('\n');
    std::fs::write(&json_path, json)?;
    std::fs::write(&bin_path, payload)?;
    Ok((json_path, bin_path))
}

fn format_err(offset: u64, msg: impl Into<String>) -> Error {
    Error::Format {
        offset,
        msg: msg.into(),
    }
}

pub fn read_dataset(stem: impl AsRef<Path>) -> Result<Dataset> {
    let (json_path, bin_path) = dataset_paths(stem);
    let text = std::fs::read(&json_path)?;
    let meta: Metadata =
        serde_json::from_slice(&text).map_err(|e| format_err(0, format!("{}: {e}", json_path.display())))?;
    if meta.format_version != DATASET_FORMAT_VERSION {
        return Err(format_err(0, format!("unsupported dataset version {}", meta.format_version)));
    }
    if meta.dtype != "f64" {
        return Err(format_err(0, format!("unsupported dtype {}", meta.dtype)));
    }
    let expected_grid = meta.pde.grid().map_err(|e| format_err(0, e.to_string()))?;
    let n = meta.grid.len();
    if meta.grid != expected_grid
        || meta.input_shape != [n, meta.pde.in_channels()]
        || meta.output_shape != [n, meta.pde.out_channels()]
    {
        return Err(format_err(0, "metadata grid and shapes are inconsistent"));
    }
    let mut seen = vec![false; meta.samples];
    for &i in meta.splits.train.iter().chain(&meta.splits.val).chain(&meta.splits.test) {
        if i >= meta.samples || std::mem::replace(&mut seen[i], true) {
            return Err(format_err(0, format!("split index {i} is out of range or repeated")));
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(format_err(0, "splits do not cover every sample"));
    }

    let bytes = std::fs::read(&bin_path)?;
    let (na, nu) = (meta.input_shape[0] * meta.input_shape[1], meta.output_shape[0] * meta.output_shape[1]);
    let per_sample = (na + nu) * 8;
    let expected = per_sample as u64 * meta.samples as u64;
    if bytes.len() as u64 != expected {
        let offset = (bytes.len() as u64).min(expected);
        return Err(format_err(
            offset,
            format!("{} has {} bytes, metadata implies {expected}", bin_path.display(), bytes.len()),
        ));
    }
    let samples = bytes
        .chunks_exact(per_sample)
        .map(|chunk| {
            let vals: Vec<f64> = chunk
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
                .collect();
            Sample {
                a: vals[..na].to_vec(),
                u: vals[na..].to_vec(),
            }
        })
        .collect();
    Ok(Dataset {
        spec: meta.pde,
        grid: meta.grid,
        seed: meta.seed,
        fractions: meta.fractions,
        splits: meta.splits,
        samples,
    })
}
