//! One-step-ahead interference predictors.
//!
//! A [`Predictor`] owns its observation history. The driving loop alternates
//! [`Predictor::predict`] (for the coming slot) and [`Predictor::observe`] (once the
//! slot's interference has been measured), so a prediction can only depend on
//! interference that was observed before it.
//!
//! * GPR sliding window: the last `window` observations are converted to dB, centred
//!   on their mean and fitted with a zero-mean GP. Each fit forecasts a block of
//!   `horizon` slots; the block is consumed slot by slot and the model is refitted
//!   once `horizon` new observations have arrived. Before `window` observations exist
//!   the predictor falls back to a moving average with `α = 0.5`.
//! * Moving average: first-order IIR filter `I_p = α I_{t-1} + (1 - α) I_t` on linear
//!   power. By default `I_{t-1}` is the previous filter output; [`MaMode::RawPrevious`]
//!   uses the previous raw sample instead.
//! * Genie: returns the true next-slot interference.

use std::collections::HashMap;
use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::channel::{fmt_f64, InterferenceTrace};
use crate::error::{Error, Result};
use crate::gp::{HyperGrid, RbfKernel, WindowPredictor, WindowTuner};
use crate::seed::SimRng;
use crate::units::{db_to_linear, linear_to_db};

/// Forgetting factor used while a GPR predictor is still filling its window.
pub const WARMUP_ALPHA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaMode {
    /// `I_{t-1}` is the previous filter output (true IIR).
    #[default]
    Filtered,
    /// `I_{t-1}` is the previous raw observation.
    RawPrevious,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GprConfig {
    pub window: usize,
    pub horizon: usize,
    pub kernel: RbfKernel,
    /// Observation-noise standard deviation in the centred dB domain.
    pub noise_std: f64,
    /// Re-select the kernel by marginal likelihood at every refit.
    pub tune: bool,
    pub grid: HyperGrid,
    /// Report the upper 95 % bound instead of the posterior mean.
    pub conservative: bool,
}

impl GprConfig {
    pub fn noise_variance(&self) -> f64 {
        self.noise_std * self.noise_std
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PredictorKind {
    GprSlidingWindow(GprConfig),
    MovingAverage { alpha: f64, mode: MaMode },
    GenieAided,
}

impl PredictorKind {
    pub fn moving_average(alpha: f64) -> Self {
        PredictorKind::MovingAverage {
            alpha,
            mode: MaMode::Filtered,
        }
    }

    /// Short stable label used in CSV output.
    pub fn label(&self) -> &'static str {
        match self {
            PredictorKind::GprSlidingWindow(c) if c.conservative => "gpr_ucb",
            PredictorKind::GprSlidingWindow(_) => "gpr",
            PredictorKind::MovingAverage { .. } => "ma",
            PredictorKind::GenieAided => "genie",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            PredictorKind::GprSlidingWindow(c) => {
                if c.window < 2 {
                    return Err(Error::param("window", format!("must be at least 2, got {}", c.window)));
                }
                if c.horizon < 1 {
                    return Err(Error::param("horizon", "must be at least 1"));
                }
                if !(c.noise_std.is_finite() && c.noise_std >= 0.0) {
                    return Err(Error::param("noise_eps", format!("must be non-negative, got {}", c.noise_std)));
                }
                c.kernel.validate()?;
                c.grid.validate()
            }
            PredictorKind::MovingAverage { alpha, .. } => {
                if !(*alpha > 0.0 && *alpha < 1.0) {
                    return Err(Error::param("alpha", format!("must lie in (0, 1), got {alpha}")));
                }
                Ok(())
            }
            PredictorKind::GenieAided => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionRecord {
    pub slot: u64,
    pub predicted_linear: f64,
    pub predicted_db: f64,
    pub ci_low_db: f64,
    pub ci_high_db: f64,
    /// The GPR window was not yet full and the moving-average fallback answered.
    pub warmup: bool,
}

impl PredictionRecord {
    fn point(slot: u64, linear: f64, warmup: bool) -> Self {
        let db = linear_to_db(linear);
        PredictionRecord {
            slot,
            predicted_linear: linear,
            predicted_db: db,
            ci_low_db: db,
            ci_high_db: db,
            warmup,
        }
    }
}

#[derive(Debug, Clone)]
struct Block {
    mean_db: Vec<f64>,
    low_db: Vec<f64>,
    high_db: Vec<f64>,
    kernel: RbfKernel,
}

#[derive(Debug)]
struct GprState {
    cfg: GprConfig,
    window_db: Vec<f64>,
    observed_since_fit: usize,
    block: Option<Block>,
    models: HashMap<(u64, u64), WindowPredictor>,
    tuner: Option<WindowTuner>,
    noise_rng: Option<SimRng>,
    warmup_estimate: Option<f64>,
}

impl GprState {
    fn model(&mut self, kernel: RbfKernel) -> Result<&WindowPredictor> {
        let key = (kernel.output_scale.to_bits(), kernel.length_scale.to_bits());
        if !self.models.contains_key(&key) {
            let wp = WindowPredictor::new(kernel, self.cfg.noise_variance(), self.cfg.window, self.cfg.horizon)?;
            self.models.insert(key, wp);
        }
        Ok(&self.models[&key])
    }

    fn refit(&mut self) -> Result<()> {
        let mean = self.window_db.iter().sum::<f64>() / self.window_db.len() as f64;
        let centred: Vec<f64> = self.window_db.iter().map(|y| y - mean).collect();
        let kernel = if self.cfg.tune {
            if self.tuner.is_none() {
                self.tuner = Some(WindowTuner::new(&self.cfg.grid, self.cfg.noise_variance(), self.cfg.window)?);
            }
            self.tuner.as_ref().map(|t| t.tune(&centred)).unwrap_or(self.cfg.kernel)
        } else {
            self.cfg.kernel
        };
        let post = self.model(kernel)?.predict(&centred).shifted(mean);
        self.block = Some(Block {
            mean_db: post.mean,
            low_db: post.lower95,
            high_db: post.upper95,
            kernel,
        });
        self.observed_since_fit = 0;
        Ok(())
    }
}

#[derive(Debug)]
enum State {
    Gpr(Box<GprState>),
    MovingAverage { alpha: f64, mode: MaMode, estimate: Option<f64>, last: Option<f64> },
    Genie,
}

/// Stateful predictor; see the module docs for the protocol.
#[derive(Debug)]
pub struct Predictor {
    kind: PredictorKind,
    state: State,
    observed: u64,
}

impl Predictor {
    pub fn new(kind: PredictorKind) -> Result<Self> {
        kind.validate()?;
        let state = match kind {
            PredictorKind::GprSlidingWindow(cfg) => State::Gpr(Box::new(GprState {
                cfg,
                window_db: Vec::with_capacity(cfg.window + 1),
                observed_since_fit: 0,
                block: None,
                models: HashMap::new(),
                tuner: None,
                noise_rng: None,
                warmup_estimate: None,
            })),
            PredictorKind::MovingAverage { alpha, mode } => State::MovingAverage {
                alpha,
                mode,
                estimate: None,
                last: None,
            },
            PredictorKind::GenieAided => State::Genie,
        };
        Ok(Predictor {
            kind,
            state,
            observed: 0,
        })
    }

    /// Adds `ε ~ N(0, noise_std²)` (dB) to every GPR point prediction.
    ///
    /// Visualisation only; allocation runs never enable it.
    pub fn with_noise_injection(mut self, rng: SimRng) -> Self {
        if let State::Gpr(g) = &mut self.state {
            g.noise_rng = Some(rng);
        }
        self
    }

    pub fn kind(&self) -> &PredictorKind {
        &self.kind
    }

    pub fn observed(&self) -> u64 {
        self.observed
    }

    /// Kernel behind the most recent GPR fit.
    pub fn current_kernel(&self) -> Option<RbfKernel> {
        match &self.state {
            State::Gpr(g) => g.block.as_ref().map(|b| b.kernel),
            _ => None,
        }
    }

    /// Records the interference measured in the slot just finished.
    pub fn observe(&mut self, interference: f64) {
        self.observed += 1;
        match &mut self.state {
            State::Gpr(g) => {
                g.window_db.push(linear_to_db(interference));
                if g.window_db.len() > g.cfg.window {
                    g.window_db.remove(0);
                }
                g.observed_since_fit += 1;
                g.warmup_estimate = Some(match g.warmup_estimate {
                    None => interference,
                    Some(prev) => WARMUP_ALPHA * prev + (1.0 - WARMUP_ALPHA) * interference,
                });
            }
            State::MovingAverage {
                alpha,
                mode,
                estimate,
                last,
            } => {
                *estimate = Some(match (*mode, *estimate, *last) {
                    (_, None, _) => interference,
                    (MaMode::Filtered, Some(prev), _) => *alpha * prev + (1.0 - *alpha) * interference,
                    (MaMode::RawPrevious, _, Some(prev)) => *alpha * prev + (1.0 - *alpha) * interference,
                    (MaMode::RawPrevious, Some(_), None) => interference,
                });
                *last = Some(interference);
            }
            State::Genie => {}
        }
    }

    /// Predicts the interference of the next slot. `truth_next` is read only by the genie.
    pub fn predict(&mut self, truth_next: f64) -> Result<PredictionRecord> {
        let slot = self.observed + 1;
        match &mut self.state {
            State::Genie => Ok(PredictionRecord::point(slot, truth_next, false)),
            State::MovingAverage { estimate, .. } => {
                let est = estimate.ok_or_else(|| Error::InvalidInput("moving average has no history".into()))?;
                Ok(PredictionRecord::point(slot, est, self.observed < 2))
            }
            State::Gpr(g) => {
                if g.window_db.len() < g.cfg.window {
                    let est = g
                        .warmup_estimate
                        .ok_or_else(|| Error::InvalidInput("GPR predictor has no history".into()))?;
                    return Ok(PredictionRecord::point(slot, est, true));
                }
                if g.block.is_none() || g.observed_since_fit >= g.cfg.horizon {
                    g.refit()?;
                }
                let conservative = g.cfg.conservative;
                let noise_std = g.cfg.noise_std;
                let block = g.block.as_ref().expect("fitted above");
                // Step within the block is set by how many slots have been observed since the fit.
                let step = g.observed_since_fit;
                let mut mean = block.mean_db[step];
                let (low, high) = (block.low_db[step], block.high_db[step]);
                if let Some(rng) = g.noise_rng.as_mut() {
                    mean += noise_std * rng.sample::<f64, _>(StandardNormal);
                }
                let reported = if conservative { high } else { mean };
                Ok(PredictionRecord {
                    slot,
                    predicted_linear: db_to_linear(reported),
                    predicted_db: mean,
                    ci_low_db: low.min(mean),
                    ci_high_db: high.max(mean),
                    warmup: false,
                })
            }
        }
    }
}

/// One-shot prediction from an explicit history (oldest first).
pub fn predict_next(kind: &PredictorKind, history: &[f64], truth_next: f64) -> Result<PredictionRecord> {
    let mut p = Predictor::new(*kind)?;
    for &x in history {
        p.observe(x);
    }
    p.predict(truth_next)
}

/// Replays a trace: the first `train_len` slots are observed only, every later slot is
/// predicted and then observed.
pub fn run_prediction_trace(
    kind: &PredictorKind,
    trace: &InterferenceTrace,
    train_len: usize,
) -> Result<Vec<PredictionRecord>> {
    if trace.len() <= train_len {
        return Err(Error::InvalidInput(format!(
            "trace of {} slots is not longer than the training span {train_len}",
            trace.len()
        )));
    }
    if train_len == 0 {
        return Err(Error::param("train_len", "must be at least 1"));
    }
    let mut p = Predictor::new(*kind)?;
    for &x in &trace.total[..train_len] {
        p.observe(x);
    }
    let mut out = Vec::with_capacity(trace.len() - train_len);
    for t in train_len..trace.len() {
        let mut rec = p.predict(trace.total[t])?;
        rec.slot = trace.times[t];
        out.push(rec);
        p.observe(trace.total[t]);
    }
    Ok(out)
}

/// Root-mean-square error in dB between predictions and the trace.
pub fn db_rmse(records: &[PredictionRecord], trace: &InterferenceTrace) -> f64 {
    let first = trace.times[0];
    let sq: f64 = records
        .iter()
        .map(|r| {
            let truth = linear_to_db(trace.total[(r.slot - first) as usize]);
            (linear_to_db(r.predicted_linear) - truth).powi(2)
        })
        .sum();
    (sq / records.len() as f64).sqrt()
}

pub const PREDICTION_CSV_HEADER: &str = "slot,true_db,pred_db,ci_low_db,ci_high_db,pred_linear";

pub fn write_predictions_csv<W: Write>(
    mut out: W,
    records: &[PredictionRecord],
    trace: &InterferenceTrace,
) -> std::io::Result<()> {
    writeln!(out, "{PREDICTION_CSV_HEADER}")?;
    let first = trace.times[0];
    for r in records {
        let truth = linear_to_db(trace.total[(r.slot - first) as usize]);
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.slot,
            fmt_f64(truth),
            fmt_f64(r.predicted_db),
            fmt_f64(r.ci_low_db),
            fmt_f64(r.ci_high_db),
            fmt_f64(r.predicted_linear)
        )?;
    }
    Ok(())
}
