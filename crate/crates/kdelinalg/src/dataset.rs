//! Dataset ingestion, emission and synthetic generators.
//!
//! The on-disk format is one point per line, coordinates separated by
//! whitespace, commas, or both. Blank lines are ignored; every non-blank
//! line must have the same number of coordinates as the first one, and
//! violations are reported with their 1-based line number. Emission
//! ([`format_points`]) prints every coordinate with 17 significant digits,
//! which round-trips `f64` values bit-exactly through [`parse_points`].
//!
//! Generators produce the standard test geometries. `identical` puts all
//! points at one random location (kernel matrix of all ones), `separated`
//! spaces points so far apart that every off-diagonal kernel value is
//! below `1e-12` (kernel matrix within dust of the identity),
//! `gaussian_blobs` draws balanced isotropic clusters, and `dp` delegates
//! to the two-mass stress distribution
//! ([`generate_dp_dataset`](crate::kernelsum::generate_dp_dataset)).
//! Separation distances default to
//! [`dp_separation_scale`](crate::kernelsum::dp_separation_scale) for the
//! kernel in use, so "separated" means separated *for that kernel*.
//!
//! Generator specs are written `kind:key=value,key=value`, e.g.
//! `identical:n=500,d=3` or `gaussian_blobs:n=200,d=5,k=4`.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};
use crate::kernels::KernelSpec;
use crate::kernelsum::{dp_separation_scale, generate_dp_dataset};
use crate::points::PointSet;

/// Synthetic dataset families understood by [`parse_gen_spec`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenKind {
    /// All `n` points at one random location.
    Identical,
    /// Points spaced so every off-diagonal kernel value is below `1e-12`.
    Separated,
    /// `k` balanced isotropic Gaussian clusters.
    GaussianBlobs,
    /// The two-mass stress distribution `D(p)` in dimension `n`.
    Dp,
}

impl FromStr for GenKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identical" => Ok(GenKind::Identical),
            "separated" => Ok(GenKind::Separated),
            "gaussian_blobs" | "gaussian-blobs" => Ok(GenKind::GaussianBlobs),
            "dp" => Ok(GenKind::Dp),
            other => Err(invalid(format!(
                "unknown generator kind '{other}' (expected identical, separated, \
                 gaussian_blobs, or dp)"
            ))),
        }
    }
}

/// Parsed generator spec; see [`parse_gen_spec`] for the syntax and
/// [`generate`] for the semantics of each field.
#[derive(Debug, Clone, PartialEq)]
pub struct GenSpec {
    pub kind: GenKind,
    /// Number of points; required.
    pub n: usize,
    /// Ambient dimension (ignored by `dp`, which uses `n`). Default 3.
    pub dim: usize,
    /// Cluster count for `gaussian_blobs`. Default 5.
    pub clusters: usize,
    /// Cluster-center scale for `gaussian_blobs`. Default 10.
    pub spread: f64,
    /// Within-cluster standard deviation for `gaussian_blobs`. Default 1.
    pub std: f64,
    /// Origin probability for `dp`. Default `1 / sqrt(n)`.
    pub p: Option<f64>,
    /// Separation distance override for `separated` and `dp`. Default:
    /// the kernel's separation scale.
    pub scale: Option<f64>,
}

/// Parses `kind` or `kind:key=value,key=value`. Recognized keys: `n`
/// (required), `d`, `k`, `spread`, `std`, `p`, `scale`.
pub fn parse_gen_spec(text: &str) -> Result<GenSpec> {
    let (kind_str, args) = match text.split_once(':') {
        Some((k, rest)) => (k, rest),
        None => (text, ""),
    };
    let kind: GenKind = kind_str.trim().parse()?;
    let mut spec = GenSpec {
        kind,
        n: 0,
        dim: 3,
        clusters: 5,
        spread: 10.0,
        std: 1.0,
        p: None,
        scale: None,
    };
    let mut saw_n = false;
    for pair in args.split(',').filter(|p| !p.trim().is_empty()) {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| invalid(format!("generator argument '{pair}' is not key=value")))?;
        let key = key.trim();
        let value = value.trim();
        let bad = |what: &str| invalid(format!("generator argument {key}={value}: {what}"));
        match key {
            "n" => {
                spec.n = value.parse().map_err(|_| bad("expected a positive integer"))?;
                saw_n = true;
            }
            "d" => spec.dim = value.parse().map_err(|_| bad("expected a positive integer"))?,
            "k" => {
                spec.clusters = value.parse().map_err(|_| bad("expected a positive integer"))?
            }
            "spread" => spec.spread = value.parse().map_err(|_| bad("expected a number"))?,
            "std" => spec.std = value.parse().map_err(|_| bad("expected a number"))?,
            "p" => spec.p = Some(value.parse().map_err(|_| bad("expected a number"))?),
            "scale" => spec.scale = Some(value.parse().map_err(|_| bad("expected a number"))?),
            other => {
                return Err(invalid(format!(
                    "unknown generator key '{other}' (expected n, d, k, spread, std, p, scale)"
                )))
            }
        }
    }
    if !saw_n || spec.n == 0 {
        return Err(invalid("generator spec requires n=<positive integer>"));
    }
    if spec.dim == 0 {
        return Err(invalid("generator dimension d must be positive"));
    }
    if spec.clusters == 0 {
        return Err(invalid("generator cluster count k must be positive"));
    }
    Ok(spec)
}

/// Materializes a generator spec. The kernel determines default separation
/// scales; the draw is fully determined by `(spec, kernel, seed)`.
pub fn generate(spec: &GenSpec, kernel: &KernelSpec, seed: u64) -> Result<PointSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match spec.kind {
        GenKind::Identical => {
            let point: Vec<f64> = (0..spec.dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            PointSet::from_rows(&vec![point; spec.n])
        }
        GenKind::Separated => {
            let gap = match spec.scale {
                Some(s) if s.is_finite() && s > 0.0 => s,
                Some(_) => return Err(invalid("scale must be finite and positive")),
                None => dp_separation_scale(kernel),
            };
            let rows: Vec<Vec<f64>> = (0..spec.n)
                .map(|i| {
                    let mut row = vec![0.0; spec.dim];
                    row[0] = i as f64 * gap;
                    row
                })
                .collect();
            PointSet::from_rows(&rows)
        }
        GenKind::GaussianBlobs => {
            if !(spec.spread.is_finite() && spec.std.is_finite() && spec.std >= 0.0) {
                return Err(invalid("blob spread/std must be finite, std non-negative"));
            }
            let centers: Vec<Vec<f64>> = (0..spec.clusters)
                .map(|_| {
                    (0..spec.dim)
                        .map(|_| spec.spread * rng.sample::<f64, _>(StandardNormal))
                        .collect()
                })
                .collect();
            let rows: Vec<Vec<f64>> = (0..spec.n)
                .map(|i| {
                    let c = &centers[i % spec.clusters];
                    c.iter()
                        .map(|&cv| cv + spec.std * rng.sample::<f64, _>(StandardNormal))
                        .collect()
                })
                .collect();
            PointSet::from_rows(&rows)
        }
        GenKind::Dp => {
            let p = spec.p.unwrap_or(1.0 / (spec.n as f64).sqrt());
            let scale = match spec.scale {
                Some(s) => s,
                None => dp_separation_scale(kernel),
            };
            generate_dp_dataset(spec.n, p, scale, seed)
        }
    }
}

/// Parses the one-point-per-line text format; see the module docs.
pub fn parse_points(text: &str) -> Result<PointSet> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width: Option<usize> = None;
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut row = Vec::with_capacity(width.unwrap_or(4));
        for field in line.split(|c: char| c == ',' || c.is_whitespace()) {
            let field = field.trim();
            if field.is_empty() {
                continue;
            }
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                line: lineno,
                message: format!("'{field}' is not a number"),
            })?;
            row.push(v);
        }
        if row.is_empty() {
            continue;
        }
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("expected {w} coordinates, found {}", row.len()),
                });
            }
            Some(_) => {}
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "no points in input".to_string(),
        });
    }
    PointSet::from_rows(&rows)
}

/// Renders points in the text format with 17 significant digits per
/// coordinate, so that [`parse_points`] reproduces the set bit-exactly.
pub fn format_points(xs: &PointSet) -> String {
    let mut out = String::with_capacity(xs.len() * xs.dim() * 24);
    for row in xs.iter() {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push(' ');
            }
            write!(out, "{v:.16e}").expect("writing to a String cannot fail");
        }
        out.push('\n');
    }
    out
}

/// Reads and parses a dataset file.
pub fn read_points(path: impl AsRef<Path>) -> Result<PointSet> {
    let text = std::fs::read_to_string(path)?;
    parse_points(&text)
}

/// Writes a dataset in the round-trippable text format.
pub fn write_points(path: impl AsRef<Path>, xs: &PointSet) -> Result<()> {
    std::fs::write(path, format_points(xs))?;
    Ok(())
}
