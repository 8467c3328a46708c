//! Experiment orchestration and artifact export.
//!
//! Each experiment writes its CSVs plus a `manifest.json` into an output directory.
//! The manifest carries the full configuration and experiment options, so
//! [`replay`] regenerates the same CSVs byte for byte.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::alloc::{sweep_targets, write_slots_csv, write_sweep_csv, EpisodeOptions, ScenarioTrace, SweepRow};
use crate::channel::{fmt_f64, write_trace_csv};
use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::gp::{sample_prior, GpModel, RbfKernel, TrainingSet, WindowTuner, Z95};
use crate::predict::{write_predictions_csv, PredictionRecord, Predictor, PredictorKind};
use crate::seed::{derive_seed, rng_from_seed};
use crate::units::linear_to_db;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const PRIOR_CSV_HEADER: &str = "slot,mean_db,ci_low_db,ci_high_db,sample_1,sample_2,sample_3";
pub const POSTERIOR_CSV_HEADER: &str = "slot,true_db,pred_db,ci_low_db,ci_high_db,observed";
pub const BLOCKS_CSV_HEADER: &str = "block,train_first,train_last,predict_first,predict_last,output_scale,length_scale";
pub const TUNE_CSV_HEADER: &str = "output_scale,length_scale,log_marginal_likelihood";

/// Number of prior sample paths drawn for the prior panel.
pub const PRIOR_PATHS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    PredictionTrace,
    OutageSweep,
    TuneKernel,
}

/// Switches that are not part of the scenario itself.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunOptions {
    /// Write one per-slot CSV for every (predictor, target) pair of the sweep.
    pub slot_csv: bool,
}

/// Everything needed to re-run an experiment, plus what it produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub experiment: Experiment,
    pub version: String,
    pub config: ScenarioConfig,
    pub options: RunOptions,
    /// Derived stream seeds by label.
    pub seeds: BTreeMap<String, u64>,
    /// Output files, relative to the output directory.
    pub outputs: Vec<String>,
    pub duration_secs: f64,
}

impl RunManifest {
    fn new(experiment: Experiment, cfg: &ScenarioConfig, options: RunOptions) -> Self {
        RunManifest {
            experiment,
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: cfg.clone(),
            options,
            seeds: BTreeMap::from([("master".to_string(), cfg.master_seed)]),
            outputs: Vec::new(),
            duration_secs: 0.0,
        }
    }

    fn seed(&mut self, label: &str) -> u64 {
        let s = derive_seed(self.config.master_seed, label, 0);
        self.seeds.insert(label.to_string(), s);
        s
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: RunManifest = serde_json::from_str(&text)?;
        m.config.validate()?;
        Ok(m)
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Writes one artifact through a single buffered writer and records it in the manifest.
fn write_artifact(
    dir: &Path,
    name: &str,
    manifest: &mut RunManifest,
    body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<()> {
    let path = dir.join(name);
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(&path, e))?;
    manifest.outputs.push(name.to_string());
    Ok(())
}

fn finish(dir: &Path, mut manifest: RunManifest, started: Instant) -> Result<RunManifest> {
    manifest.duration_secs = started.elapsed().as_secs_f64();
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// One posterior panel: the fit over the training window and the forecast block.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorBlock {
    /// Slots of the training window (1-based).
    pub train_slots: Vec<u64>,
    /// Forecast slots following the window.
    pub predict_slots: Vec<u64>,
    pub kernel: RbfKernel,
    /// Rows over `train_slots` then `predict_slots`: (mean, low, high) in dB.
    pub rows: Vec<(u64, f64, f64, f64)>,
}

/// Fits the window ending at `end` (exclusive, 0-based) and forecasts `horizon` slots.
fn posterior_block(
    cfg: &ScenarioConfig,
    db: &[f64],
    end: usize,
    horizon: usize,
    tuner: Option<&WindowTuner>,
) -> Result<PosteriorBlock> {
    let start = end - cfg.window;
    let window = &db[start..end];
    let centre = window.iter().sum::<f64>() / window.len() as f64;
    let centred: Vec<f64> = window.iter().map(|x| x - centre).collect();
    let kernel = tuner.map(|t| t.tune(&centred)).unwrap_or(cfg.kernel);
    let train_slots: Vec<u64> = (start as u64 + 1..=end as u64).collect();
    let predict_slots: Vec<u64> = (end as u64 + 1..=(end + horizon) as u64).collect();
    let inputs: Vec<f64> = train_slots.iter().map(|&s| s as f64).collect();
    let train = TrainingSet::new(inputs, centred, cfg.noise_eps * cfg.noise_eps)?;
    let query: Vec<f64> = train_slots.iter().chain(&predict_slots).map(|&s| s as f64).collect();
    let post = GpModel::fit(kernel, train)?.predict(&query, false)?.shifted(centre);
    let rows = train_slots
        .iter()
        .chain(&predict_slots)
        .enumerate()
        .map(|(i, &s)| (s, post.mean[i], post.lower95[i], post.upper95[i]))
        .collect();
    Ok(PosteriorBlock {
        train_slots,
        predict_slots,
        kernel,
        rows,
    })
}

/// Artifacts of the prediction-trace replay, also returned in memory.
#[derive(Debug, Clone)]
pub struct PredictionTraceOutput {
    pub manifest: RunManifest,
    pub prior_samples: Vec<Vec<f64>>,
    pub blocks: Vec<PosteriorBlock>,
    pub predictions: Vec<PredictionRecord>,
}

/// Prior panel plus one posterior panel per forecast block as the window slides.
///
/// Writes `trace.csv`, `prior.csv`, `posterior_block_<k>.csv`, `blocks.csv` and
/// `predictions.csv`. The prior is expressed in centred dB (zero mean).
pub fn experiment_prediction_trace(cfg: &ScenarioConfig, out: &Path) -> Result<PredictionTraceOutput> {
    experiment_prediction_trace_with(cfg, RunOptions::default(), out)
}

fn experiment_prediction_trace_with(
    cfg: &ScenarioConfig,
    options: RunOptions,
    out: &Path,
) -> Result<PredictionTraceOutput> {
    cfg.validate()?;
    let started = Instant::now();
    create_dir(out)?;
    let mut manifest = RunManifest::new(Experiment::PredictionTrace, cfg, options);
    let trace_seed = manifest.seed("trace");
    let prior_seed = manifest.seed("prior");
    let noise_seed = manifest.seed("trace_noise");

    let n = cfg.trace_slots;
    let scenario = ScenarioTrace::generate(cfg, n - cfg.window, trace_seed)?;
    let trace = &scenario.interference;
    write_artifact(out, "trace.csv", &mut manifest, |w| {
        write_trace_csv(w, trace, &scenario.desired_gain)
    })?;

    let slots: Vec<f64> = trace.times.iter().map(|&t| t as f64).collect();
    let prior_samples = sample_prior(&cfg.kernel, &slots, PRIOR_PATHS, prior_seed)?;
    let half = Z95 * cfg.kernel.output_scale;
    write_artifact(out, "prior.csv", &mut manifest, |w| {
        writeln!(w, "{PRIOR_CSV_HEADER}")?;
        for (i, t) in trace.times.iter().enumerate() {
            write!(w, "{t},{},{},{}", fmt_f64(0.0), fmt_f64(-half), fmt_f64(half))?;
            for path in &prior_samples {
                write!(w, ",{}", fmt_f64(path[i]))?;
            }
            writeln!(w)?;
        }
        Ok(())
    })?;

    let db: Vec<f64> = trace.total.iter().map(|&x| linear_to_db(x)).collect();
    let gpr = cfg.trace_gpr_config();
    let tuner = if cfg.tune {
        Some(WindowTuner::new(&cfg.grid, gpr.noise_variance(), cfg.window)?)
    } else {
        None
    };
    let mut blocks = Vec::new();
    let mut end = cfg.window;
    while end < n {
        let h = cfg.horizon.min(n - end);
        blocks.push(posterior_block(cfg, &db, end, h, tuner.as_ref())?);
        end += h;
    }
    for (k, b) in blocks.iter().enumerate() {
        let observed = b.train_slots.len();
        write_artifact(out, &format!("posterior_block_{}.csv", k + 1), &mut manifest, |w| {
            writeln!(w, "{POSTERIOR_CSV_HEADER}")?;
            for (i, &(s, m, lo, hi)) in b.rows.iter().enumerate() {
                let truth = db[(s - 1) as usize];
                writeln!(
                    w,
                    "{s},{},{},{},{},{}",
                    fmt_f64(truth),
                    fmt_f64(m),
                    fmt_f64(lo),
                    fmt_f64(hi),
                    u8::from(i < observed)
                )?;
            }
            Ok(())
        })?;
    }
    write_artifact(out, "blocks.csv", &mut manifest, |w| {
        writeln!(w, "{BLOCKS_CSV_HEADER}")?;
        for (k, b) in blocks.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                k + 1,
                b.train_slots[0],
                b.train_slots[b.train_slots.len() - 1],
                b.predict_slots[0],
                b.predict_slots[b.predict_slots.len() - 1],
                fmt_f64(b.kernel.output_scale),
                fmt_f64(b.kernel.length_scale)
            )?;
        }
        Ok(())
    })?;

    let mut predictor = Predictor::new(PredictorKind::GprSlidingWindow(gpr))?.with_noise_injection(rng_from_seed(noise_seed));
    for &x in &trace.total[..cfg.window] {
        predictor.observe(x);
    }
    let mut predictions = Vec::with_capacity(n - cfg.window);
    for t in cfg.window..n {
        let mut rec = predictor.predict(trace.total[t])?;
        rec.slot = trace.times[t];
        predictions.push(rec);
        predictor.observe(trace.total[t]);
    }
    write_artifact(out, "predictions.csv", &mut manifest, |w| {
        write_predictions_csv(w, &predictions, trace)
    })?;

    let manifest = finish(out, manifest, started)?;
    Ok(PredictionTraceOutput {
        manifest,
        prior_samples,
        blocks,
        predictions,
    })
}

/// Achieved outage for every (predictor, target) pair on one shared channel.
///
/// Writes `sweep.csv` and, with [`RunOptions::slot_csv`], `slots_<predictor>_<k>.csv`
/// where `k` indexes the configured targets.
pub fn experiment_outage_sweep(cfg: &ScenarioConfig, options: RunOptions, out: &Path) -> Result<(RunManifest, Vec<SweepRow>)> {
    cfg.validate()?;
    let started = Instant::now();
    create_dir(out)?;
    let mut manifest = RunManifest::new(Experiment::OutageSweep, cfg, options);
    let seed = manifest.seed("outage_sweep");
    let opts = EpisodeOptions {
        keep_outcomes: options.slot_csv,
        empirical: cfg.empirical,
    };
    let mut rows = sweep_targets(cfg, &cfg.predictors(), &cfg.targets, cfg.n_slots, seed, opts)?;
    write_artifact(out, "sweep.csv", &mut manifest, |w| write_sweep_csv(w, &rows))?;
    if options.slot_csv {
        for (i, row) in rows.iter_mut().enumerate() {
            let name = format!("slots_{}_{}.csv", row.predictor, i % cfg.targets.len() + 1);
            let outcomes = std::mem::take(&mut row.result.outcomes);
            write_artifact(out, &name, &mut manifest, |w| write_slots_csv(w, &outcomes))?;
        }
    }
    Ok((finish(out, manifest, started)?, rows))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneReport {
    /// Training window, 1-based inclusive.
    pub first_slot: u64,
    pub last_slot: u64,
    pub best: RbfKernel,
    pub best_score: f64,
    pub scores: Vec<(RbfKernel, f64)>,
}

/// Log-marginal-likelihood grid over the first window of the replay trace.
///
/// Writes `tune.csv` with one row per grid point.
pub fn experiment_tune_kernel(cfg: &ScenarioConfig, out: &Path) -> Result<(RunManifest, TuneReport)> {
    cfg.validate()?;
    let started = Instant::now();
    create_dir(out)?;
    let mut manifest = RunManifest::new(Experiment::TuneKernel, cfg, RunOptions::default());
    let trace_seed = manifest.seed("trace");
    let scenario = ScenarioTrace::generate(cfg, cfg.trace_slots - cfg.window, trace_seed)?;
    let db: Vec<f64> = scenario.interference.total[..cfg.window]
        .iter()
        .map(|&x| linear_to_db(x))
        .collect();
    let centre = db.iter().sum::<f64>() / db.len() as f64;
    let centred: Vec<f64> = db.iter().map(|x| x - centre).collect();
    let tuner = WindowTuner::new(&cfg.grid, cfg.noise_eps * cfg.noise_eps, cfg.window)?;
    let scores = tuner.scores(&centred);
    let best = tuner.tune(&centred);
    let best_score = scores
        .iter()
        .find(|(k, _)| *k == best)
        .map(|(_, s)| *s)
        .unwrap_or(f64::NEG_INFINITY);
    write_artifact(out, "tune.csv", &mut manifest, |w| {
        writeln!(w, "{TUNE_CSV_HEADER}")?;
        for (k, s) in &scores {
            writeln!(w, "{},{},{}", fmt_f64(k.output_scale), fmt_f64(k.length_scale), fmt_f64(*s))?;
        }
        Ok(())
    })?;
    let report = TuneReport {
        first_slot: 1,
        last_slot: cfg.window as u64,
        best,
        best_score,
        scores,
    };
    Ok((finish(out, manifest, started)?, report))
}

/// Re-runs the experiment recorded in a manifest into `out`.
pub fn replay(manifest_path: &Path, out: &Path) -> Result<RunManifest> {
    let m = RunManifest::load(manifest_path)?;
    run(m.experiment, &m.config, m.options, out)
}

pub fn run(experiment: Experiment, cfg: &ScenarioConfig, options: RunOptions, out: &Path) -> Result<RunManifest> {
    match experiment {
        Experiment::PredictionTrace => experiment_prediction_trace_with(cfg, options, out).map(|o| o.manifest),
        Experiment::OutageSweep => experiment_outage_sweep(cfg, options, out).map(|(m, _)| m),
        Experiment::TuneKernel => experiment_tune_kernel(cfg, out).map(|(m, _)| m),
    }
}

/// Paths of a manifest's outputs inside `dir`.
pub fn output_paths(manifest: &RunManifest, dir: &Path) -> Vec<PathBuf> {
    manifest.outputs.iter().map(|o| dir.join(o)).collect()
}
