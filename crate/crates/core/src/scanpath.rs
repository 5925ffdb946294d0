//! Fixation and saccade statistics of glimpse sequences.
//!
//! A fixation is a maximal run of consecutive glimpses whose step-to-step
//! distance stays strictly below a pixel threshold; a saccade is any step
//! between consecutive glimpses.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};

pub const DEFAULT_THRESHOLD: f64 = 6.0;

/// Pixel-space glimpse sequence of one episode.
#[derive(Clone, Debug, PartialEq)]
pub struct ScanPath {
    pub image_id: u64,
    pub label: Option<usize>,
    pub model_tag: String,
    pub points: Vec<(f64, f64)>,
}

/// A fixation: `len` glimpses starting at index `start`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Run {
    pub start: usize,
    pub len: usize,
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    libm::hypot(a.0 - b.0, a.1 - b.1)
}

pub fn segment_fixations(points: &[(f64, f64)], threshold: f64) -> Result<Vec<Run>> {
    if !(threshold > 0.0) {
        return Err(Error::Config(format!("fixation threshold must be positive, got {threshold}")));
    }
    let mut runs = Vec::new();
    if points.is_empty() {
        return Ok(runs);
    }
    let mut cur = Run { start: 0, len: 1 };
    for i in 1..points.len() {
        if dist(points[i - 1], points[i]) < threshold {
            cur.len += 1;
        } else {
            runs.push(cur);
            cur = Run { start: i, len: 1 };
        }
    }
    runs.push(cur);
    Ok(runs)
}

pub fn saccade_distances(points: &[(f64, f64)]) -> Vec<f64> {
    points.windows(2).map(|w| dist(w[0], w[1])).collect()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Scott's rule `1.06·σ̂·N^(-1/5)` with the unbiased standard deviation.
/// Degenerate samples (one point, or no spread) fall back to a bandwidth
/// of 1.
pub fn scott_bandwidth(samples: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("kde samples"));
    }
    let n = samples.len() as f64;
    if samples.len() < 2 {
        return Ok(1.0);
    }
    let m = mean(samples);
    let sd = libm::sqrt(samples.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0));
    if sd > 0.0 {
        Ok(1.06 * sd * libm::pow(n, -0.2))
    } else {
        Ok(1.0)
    }
}

/// Gaussian kernel density estimate evaluated on `grid`.
pub fn kde(samples: &[f64], bandwidth: f64, grid: &[f64]) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::Empty("kde samples"));
    }
    if !(bandwidth > 0.0) {
        return Err(Error::Config(format!("kde bandwidth must be positive, got {bandwidth}")));
    }
    let norm = 1.0 / (samples.len() as f64 * bandwidth * libm::sqrt(2.0 * core::f64::consts::PI));
    Ok(grid
        .iter()
        .map(|&x| {
            norm * samples
                .iter()
                .map(|&s| {
                    let z = (x - s) / bandwidth;
                    libm::exp(-0.5 * z * z)
                })
                .sum::<f64>()
        })
        .collect())
}

/// `n` evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => alloc::vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Trapezoidal integral of `values` over `grid`.
pub fn trapezoid(grid: &[f64], values: &[f64]) -> f64 {
    grid.windows(2)
        .zip(values.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Density {
    pub bandwidth: f64,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

fn density(samples: &[f64], bandwidth: Option<f64>, points: usize) -> Result<Density> {
    let h = match bandwidth {
        Some(h) => h,
        None => scott_bandwidth(samples)?,
    };
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min) - 5.0 * h;
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 5.0 * h;
    let grid = linspace(lo, hi, points);
    let values = kde(samples, h, &grid)?;
    Ok(Density {
        bandwidth: h,
        grid,
        values,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnalyzeConfig {
    pub threshold: f64,
    /// Fixed KDE bandwidth; Scott's rule per series when absent.
    pub bandwidth: Option<f64>,
    /// Jump size counted as a long saccade in the summary (the patch side).
    pub long_jump: f64,
    pub grid_points: usize,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        AnalyzeConfig {
            threshold: DEFAULT_THRESHOLD,
            bandwidth: None,
            long_jump: 8.0,
            grid_points: 256,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub paths: usize,
    pub glimpses: usize,
    pub fixations: usize,
    pub mean_duration: f64,
    pub median_duration: f64,
    pub mean_distance: f64,
    pub median_distance: f64,
    /// Share of paths holding both a fixation of two or more glimpses and a
    /// jump of at least `long_jump` pixels.
    pub mixed_fraction: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FixationReport {
    pub durations: Vec<usize>,
    pub distances: Vec<f64>,
    pub duration_density: Density,
    /// `None` when every path is a single glimpse.
    pub distance_density: Option<Density>,
    pub summary: Summary,
}

/// Pools durations and distances over all paths.
pub fn analyze(paths: &[ScanPath], cfg: &AnalyzeConfig) -> Result<FixationReport> {
    if paths.is_empty() {
        return Err(Error::Empty("scan paths"));
    }
    let mut durations = Vec::new();
    let mut distances = Vec::new();
    let mut glimpses = 0;
    let mut mixed = 0;
    for p in paths {
        if p.points.is_empty() {
            return Err(Error::Empty("scan path points"));
        }
        let runs = segment_fixations(&p.points, cfg.threshold)?;
        let d = saccade_distances(&p.points);
        let covered: usize = runs.iter().map(|r| r.len).sum();
        if covered != p.points.len() || d.len() + 1 != p.points.len() {
            return Err(Error::Dimension {
                op: "analyze",
                detail: format!("path {} breaks the duration/distance invariants", p.image_id),
            });
        }
        if runs.iter().any(|r| r.len >= 2) && d.iter().any(|&x| x >= cfg.long_jump) {
            mixed += 1;
        }
        glimpses += p.points.len();
        durations.extend(runs.iter().map(|r| r.len));
        distances.extend(d);
    }
    let dur_f: Vec<f64> = durations.iter().map(|&d| d as f64).collect();
    let duration_density = density(&dur_f, cfg.bandwidth, cfg.grid_points)?;
    let distance_density = if distances.is_empty() {
        None
    } else {
        Some(density(&distances, cfg.bandwidth, cfg.grid_points)?)
    };
    let summary = Summary {
        paths: paths.len(),
        glimpses,
        fixations: durations.len(),
        mean_duration: mean(&dur_f),
        median_duration: median(&dur_f),
        mean_distance: if distances.is_empty() { 0.0 } else { mean(&distances) },
        median_distance: if distances.is_empty() { 0.0 } else { median(&distances) },
        mixed_fraction: mixed as f64 / paths.len() as f64,
    };
    Ok(FixationReport {
        durations,
        distances,
        duration_density,
        distance_density,
        summary,
    })
}

/// One report per class label; paths without a label are skipped.
pub fn analyze_by_label(paths: &[ScanPath], cfg: &AnalyzeConfig) -> Result<BTreeMap<usize, FixationReport>> {
    let mut groups: BTreeMap<usize, Vec<ScanPath>> = BTreeMap::new();
    for p in paths {
        if let Some(l) = p.label {
            groups.entry(l).or_default().push(p.clone());
        }
    }
    groups.into_iter().map(|(l, ps)| Ok((l, analyze(&ps, cfg)?))).collect()
}
