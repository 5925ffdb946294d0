//! Subcommand implementations, kept out of `main` so tests can drive them.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use saccade_core::data::{Dataset, Split};
use saccade_core::models::{param_count, Model};
use saccade_core::nn::adam::{AdamConfig, AdamState};
use saccade_core::rng::{stream, Domain};
use saccade_core::scanpath::{analyze as analyze_paths, analyze_by_label, AnalyzeConfig, FixationReport};
use saccade_core::training::{evaluate, fit, EpochRecord};
use serde::{Deserialize, Serialize};

use crate::checkpoint::{self, Checkpoint, RunMeta};
use crate::config::{DatasetKind, RunConfig};
use crate::datasets::{apply_stats, load_splits, normalized};
use crate::error::{Error, Result};
use crate::tracelog::{read_jsonl, write_jsonl, TraceRecord};

pub const METRICS_HEADER: &str = "epoch\ttrain_loss\ttrain_acc\tval_acc\tlr\tepoch_seconds";

/// One metrics line; every column but the last is a pure function of the
/// configuration.
pub fn metrics_line(r: &EpochRecord, seconds: f64) -> String {
    format!(
        "{}\t{}\t{}\t{}\t{}\t{:.3}",
        r.epoch, r.train_loss, r.train_acc, r.val_acc, r.lr, seconds
    )
}

/// `<output_dir>/<UTC timestamp>-<config hash>`.
pub fn run_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
    Ok(cfg.output_dir.join(format!("{stamp}-{}", cfg.hash()?)))
}

fn create_dir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

fn write_text(p: &Path, text: &str) -> Result<()> {
    std::fs::write(p, text).map_err(|e| Error::io(p, e))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub dataset: String,
    pub split: String,
    pub images: usize,
    pub accuracy: f64,
    pub params: usize,
    pub ms_per_image: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub run_dir: PathBuf,
    pub config_hash: String,
    pub epochs: usize,
    pub best_epoch: usize,
    pub best_val_acc: f64,
    pub stopped_early: bool,
    pub test: EvalReport,
}

fn timed_eval(model: &Model<f32>, ds: &Dataset, seed: u64, batch: usize, keep: usize) -> Result<(EvalReport, Vec<TraceRecord>)> {
    let start = Instant::now();
    let ev = evaluate(model, ds, seed, batch, keep)?;
    let secs = start.elapsed().as_secs_f64();
    let spec = model.spec();
    let traces = ev
        .traces
        .iter()
        .map(|t| TraceRecord::new(t, &spec.tag(), spec.image_size))
        .collect();
    Ok((
        EvalReport {
            model: spec.tag(),
            dataset: ds.name.clone(),
            split: ds.split.name().into(),
            images: ds.len(),
            accuracy: ev.accuracy(),
            params: param_count(spec),
            ms_per_image: if ds.is_empty() { 0.0 } else { 1e3 * secs / ds.len() as f64 },
        },
        traces,
    ))
}

/// Trains one configuration into `dir` (a fresh run directory when `None`).
///
/// Files written: `config.txt`, `metrics.tsv`, `best.ckpt`, `last.ckpt`,
/// `summary.json` and, when tracing is on, `traces.jsonl` for the test set.
pub fn train(cfg: &RunConfig, dir: Option<PathBuf>, log: &mut dyn Write) -> Result<TrainSummary> {
    cfg.validate()?;
    let spec = cfg.model_spec()?;
    let dir = match dir {
        Some(d) => d,
        None => run_dir(cfg)?,
    };
    create_dir(&dir)?;
    write_text(&dir.join("config.txt"), &cfg.snapshot()?)?;

    let raw = load_splits(cfg.dataset, &cfg.data_root(), cfg.train_limit, cfg.test_limit, cfg.train.val_fraction)?;
    let (splits, norm) = normalized(raw)?;
    let t = cfg.train;
    let mut model = Model::<f32>::new(spec.clone(), &mut stream(t.seed, Domain::Init, 0, 0))?;
    let mut adam = AdamState::new(AdamConfig {
        lr: t.lr,
        ..AdamConfig::default()
    });
    let _ = writeln!(
        log,
        "{} on {}: {} params, {} train / {} val / {} test images -> {}",
        spec.tag(),
        cfg.dataset.name(),
        param_count(&spec),
        splits.train.len(),
        splits.val.len(),
        splits.test.len(),
        dir.display()
    );

    let metrics_path = dir.join("metrics.tsv");
    let mut metrics = std::fs::File::create(&metrics_path).map_err(|e| Error::io(&metrics_path, e))?;
    writeln!(metrics, "{METRICS_HEADER}").map_err(|e| Error::io(&metrics_path, e))?;
    let mut meta = RunMeta {
        dataset: cfg.dataset.name().into(),
        norm,
        seed: t.seed,
        epoch: 0,
        val_acc: 0.0,
    };
    let best_path = dir.join("best.ckpt");
    let last_path = dir.join("last.ckpt");
    let mut clock = Instant::now();
    let mut io_error: Option<Error> = None;
    let mut on_epoch = |rec: &EpochRecord, m: &Model<f32>, a: &AdamState<f32>| -> Result<()> {
        let secs = clock.elapsed().as_secs_f64();
        clock = Instant::now();
        let line = metrics_line(rec, secs);
        writeln!(metrics, "{line}")
            .and_then(|_| metrics.flush())
            .map_err(|e| Error::io(&metrics_path, e))?;
        let _ = writeln!(log, "{line}");
        meta.epoch = rec.epoch;
        meta.val_acc = rec.val_acc;
        if rec.improved {
            checkpoint::save(&best_path, m, a, &meta)?;
        }
        checkpoint::save(&last_path, m, a, &meta)
    };
    let fitted = fit(&mut model, &mut adam, &splits.train, &splits.val, &t, &mut |rec, m, a| {
        on_epoch(rec, m, a).map_err(|e| {
            let msg = e.to_string();
            io_error = Some(e);
            saccade_core::Error::Config(msg)
        })
    });
    let outcome = match (fitted, io_error) {
        (_, Some(e)) => return Err(e),
        (r, None) => r?,
    };

    let keep = if cfg.trace {
        if cfg.trace_images == 0 {
            usize::MAX
        } else {
            cfg.trace_images
        }
    } else {
        0
    };
    let (test, traces) = timed_eval(&outcome.best, &splits.test, t.seed, t.batch_size, keep)?;
    if cfg.trace && !traces.is_empty() {
        write_jsonl(&dir.join("traces.jsonl"), &traces)?;
    }
    let summary = TrainSummary {
        run_dir: dir.clone(),
        config_hash: cfg.hash()?,
        epochs: outcome.history.len(),
        best_epoch: outcome.best_epoch,
        best_val_acc: outcome.best_val_acc,
        stopped_early: outcome.stopped_early,
        test,
    };
    write_text(
        &dir.join("summary.json"),
        &serde_json::to_string_pretty(&summary).map_err(|e| Error::Format(e.to_string()))?,
    )?;
    let _ = writeln!(
        log,
        "best epoch {} (val {:.4}); test accuracy {:.4} over {} images",
        summary.best_epoch, summary.best_val_acc, summary.test.accuracy, summary.test.images
    );
    Ok(summary)
}

/// Where to evaluate a checkpoint.
#[derive(Clone, Debug)]
pub struct EvalTarget {
    pub data_root: PathBuf,
    pub split: Split,
    /// 0 = all images of the split.
    pub limit: usize,
    pub batch_size: usize,
    /// Training subset size the checkpoint was trained with; needed to
    /// rebuild the same validation split.
    pub train_limit: usize,
    pub val_fraction: f64,
}

fn split_for(ck: &Checkpoint, target: &EvalTarget) -> Result<Dataset> {
    let kind = DatasetKind::parse(&ck.meta.dataset)?;
    let mut s = load_splits(kind, &target.data_root, target.train_limit, 0, target.val_fraction)?;
    apply_stats(&mut s, &ck.meta.norm);
    let ds = match target.split {
        Split::Train => s.train,
        Split::Val => s.val,
        Split::Test => s.test,
    };
    Ok(if target.limit == 0 { ds } else { ds.take(target.limit) })
}

pub fn eval(checkpoint_path: &Path, target: &EvalTarget) -> Result<EvalReport> {
    let ck = checkpoint::load(checkpoint_path)?;
    let ds = split_for(&ck, target)?;
    Ok(timed_eval(&ck.model, &ds, ck.meta.seed, target.batch_size, 0)?.0)
}

pub fn trace(checkpoint_path: &Path, target: &EvalTarget, n_images: usize, out: &Path) -> Result<usize> {
    let ck = checkpoint::load(checkpoint_path)?;
    if !ck.model.spec().variant.is_attention() {
        return Err(Error::Usage("LeNet has no glimpses to trace".into()));
    }
    let ds = split_for(&ck, target)?;
    let ds = if n_images == 0 { ds } else { ds.take(n_images) };
    let (_, traces) = timed_eval(&ck.model, &ds, ck.meta.seed, target.batch_size, usize::MAX)?;
    write_jsonl(out, &traces)?;
    Ok(traces.len())
}

fn report_json(r: &FixationReport) -> serde_json::Value {
    let s = &r.summary;
    serde_json::json!({
        "paths": s.paths,
        "glimpses": s.glimpses,
        "fixations": s.fixations,
        "mean_duration": s.mean_duration,
        "median_duration": s.median_duration,
        "mean_distance": s.mean_distance,
        "median_distance": s.median_distance,
        "mixed_fraction": s.mixed_fraction,
        "duration_bandwidth": r.duration_density.bandwidth,
        "distance_bandwidth": r.distance_density.as_ref().map(|d| d.bandwidth),
    })
}

/// Writes `durations.tsv`, `distances.tsv`, `density.tsv` and
/// `summary.json` into `out_dir`.
pub fn analyze(traces: &Path, cfg: &AnalyzeConfig, by_label: bool, out_dir: &Path) -> Result<FixationReport> {
    let records = read_jsonl(traces)?;
    let paths: Vec<_> = records.iter().map(TraceRecord::scan_path).collect();
    let pooled = analyze_paths(&paths, cfg)?;
    create_dir(out_dir)?;

    let mut groups: Vec<(String, FixationReport)> = vec![("all".into(), pooled.clone())];
    if by_label {
        for (label, r) in analyze_by_label(&paths, cfg)? {
            groups.push((format!("label{label}"), r));
        }
    }
    let mut durations = String::from("group\tduration\n");
    let mut distances = String::from("group\tdistance\n");
    let mut density = String::from("series\tgroup\tx\tdensity\n");
    let mut summary = serde_json::Map::new();
    for (name, r) in &groups {
        for d in &r.durations {
            let _ = writeln!(durations, "{name}\t{d}");
        }
        for d in &r.distances {
            let _ = writeln!(distances, "{name}\t{d}");
        }
        for (x, y) in r.duration_density.grid.iter().zip(&r.duration_density.values) {
            let _ = writeln!(density, "duration\t{name}\t{x}\t{y}");
        }
        if let Some(dd) = &r.distance_density {
            for (x, y) in dd.grid.iter().zip(&dd.values) {
                let _ = writeln!(density, "distance\t{name}\t{x}\t{y}");
            }
        }
        summary.insert(name.clone(), report_json(r));
    }
    summary.insert("threshold".into(), cfg.threshold.into());
    summary.insert("model".into(), records.first().map(|r| r.model.clone()).unwrap_or_default().into());
    write_text(&out_dir.join("durations.tsv"), &durations)?;
    write_text(&out_dir.join("distances.tsv"), &distances)?;
    write_text(&out_dir.join("density.tsv"), &density)?;
    write_text(
        &out_dir.join("summary.json"),
        &serde_json::to_string_pretty(&serde_json::Value::Object(summary)).map_err(|e| Error::Format(e.to_string()))?,
    )?;
    Ok(pooled)
}

/// Finds a finished run of exactly this configuration under its output
/// directory.
pub fn cached_run(cfg: &RunConfig) -> Result<Option<PathBuf>> {
    let suffix = format!("-{}", cfg.hash()?);
    let Ok(entries) = std::fs::read_dir(&cfg.output_dir) else {
        return Ok(None);
    };
    let mut found: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.ends_with(&suffix))
                && p.join("summary.json").is_file()
                && p.join("best.ckpt").is_file()
        })
        .collect();
    found.sort();
    Ok(found.pop())
}

/// Trains (or reuses) every cell of a comparison matrix and renders a
/// results table. Each matrix line is a set of `key=value` overrides on
/// top of `base`.
pub fn compare(base: &RunConfig, matrix: &str, log: &mut dyn Write) -> Result<String> {
    let mut table = String::from("Model\tParams (M)\tInfer Time (ms/im)\tAccuracy\n");
    for (i, line) in matrix.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut cfg = base.clone();
        cfg.apply(line.split_whitespace()).map_err(|e| match e {
            Error::Usage(d) => Error::Usage(format!("matrix line {}: {d}", i + 1)),
            other => other,
        })?;
        let spec = cfg.model_spec()?;
        let summary: TrainSummary = match cached_run(&cfg)? {
            Some(dir) => {
                let _ = writeln!(log, "{}: reusing {}", spec.tag(), dir.display());
                let p = dir.join("summary.json");
                let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
                serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", p.display())))?
            }
            None => train(&cfg, None, log)?,
        };
        let _ = writeln!(
            table,
            "{}\t{:.3}\t{:.2}\t{:.2}%",
            spec.tag(),
            param_count(&spec) as f64 / 1e6,
            summary.test.ms_per_image,
            100.0 * summary.test.accuracy
        );
    }
    Ok(table)
}
