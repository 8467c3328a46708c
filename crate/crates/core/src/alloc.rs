//! Proactive allocation loop.
//!
//! Per slot: predict the interference, form the predicted SINR with the known
//! desired-link gain, pick the smallest blocklength meeting the target, then measure
//! the real interference and evaluate the decoding error the chosen blocklength
//! actually achieves.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;

use crate::channel::{build_interference_trace, fmt_f64, generate_rayleigh_gains, InterferenceTrace};
use crate::config::ScenarioConfig;
use crate::error::Result;
use crate::fbl::{achieved_error, required_channel_uses, CodingSpec};
use crate::predict::{run_prediction_trace, PredictionRecord, Predictor, PredictorKind};
use crate::seed::{derive_seed, rng_from_seed};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotOutcome {
    pub slot: u64,
    pub predicted_interference: f64,
    pub actual_interference: f64,
    pub desired_gain: f64,
    pub predicted_sinr: f64,
    pub actual_sinr: f64,
    /// `None` marks an unallocatable slot (no capacity at the predicted SINR).
    pub channel_uses: Option<u64>,
    pub target_error: f64,
    pub achieved_error: f64,
    pub decode_failure: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    /// Per-slot detail, kept only when requested.
    pub outcomes: Vec<SlotOutcome>,
    pub achieved_outage_analytic: f64,
    pub achieved_outage_empirical: Option<f64>,
    pub slots_evaluated: usize,
    pub mean_channel_uses: f64,
    pub unallocatable_slots: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EpisodeOptions {
    pub keep_outcomes: bool,
    /// Draw a Bernoulli decoding failure per slot.
    pub empirical: bool,
}

/// Interference and desired-link gains for one episode.
///
/// The first `warmup` slots are observed by every predictor but never allocated.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioTrace {
    pub interference: InterferenceTrace,
    pub desired_gain: Vec<f64>,
    pub warmup: usize,
}

impl ScenarioTrace {
    /// Channel streams come from `seed` by label, so predictors evaluated on the same
    /// seed see bit-identical channels.
    pub fn generate(cfg: &ScenarioConfig, n_slots: usize, seed: u64) -> Result<Self> {
        let warmup = cfg.window;
        let total = warmup + n_slots;
        let interference =
            build_interference_trace(&cfg.interferer_links(), total, derive_seed(seed, "interference", 0))?;
        let desired_gain = if cfg.desired_fading {
            let mut unit = cfg.desired_link();
            unit.mean_power = 1.0;
            generate_rayleigh_gains(&unit, total, derive_seed(seed, "desired", 0))?.gains
        } else {
            vec![1.0; total]
        };
        Ok(ScenarioTrace {
            interference,
            desired_gain,
            warmup,
        })
    }

    pub fn n_slots(&self) -> usize {
        self.interference.len() - self.warmup
    }
}

struct Accumulator {
    opts: EpisodeOptions,
    outcomes: Vec<SlotOutcome>,
    sum_error: f64,
    failures: usize,
    sum_uses: f64,
    allocated: usize,
    unallocatable: usize,
    n: usize,
}

impl Accumulator {
    fn new(opts: EpisodeOptions) -> Self {
        Accumulator {
            opts,
            outcomes: Vec::new(),
            sum_error: 0.0,
            failures: 0,
            sum_uses: 0.0,
            allocated: 0,
            unallocatable: 0,
            n: 0,
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn slot<R: Rng>(
        &mut self,
        spec: &CodingSpec,
        desired_power: f64,
        slot: u64,
        predicted: f64,
        actual: f64,
        gain: f64,
        rng: &mut R,
    ) {
        let signal = desired_power * gain;
        let predicted_sinr = signal / (predicted + 1.0);
        let actual_sinr = signal / (actual + 1.0);
        let alloc = required_channel_uses(spec, predicted_sinr);
        let achieved = match alloc {
            Some(a) => achieved_error(spec, a.channel_uses, actual_sinr),
            None => 1.0,
        };
        let decode_failure = self.opts.empirical.then(|| rng.random::<f64>() < achieved);
        self.n += 1;
        self.sum_error += achieved;
        if decode_failure == Some(true) {
            self.failures += 1;
        }
        match alloc {
            Some(a) => {
                self.allocated += 1;
                self.sum_uses += a.channel_uses as f64;
            }
            None => self.unallocatable += 1,
        }
        if self.opts.keep_outcomes {
            self.outcomes.push(SlotOutcome {
                slot,
                predicted_interference: predicted,
                actual_interference: actual,
                desired_gain: gain,
                predicted_sinr,
                actual_sinr,
                channel_uses: alloc.map(|a| a.channel_uses),
                target_error: spec.target_error,
                achieved_error: achieved,
                decode_failure,
            });
        }
    }

    fn finish(self) -> EpisodeResult {
        let n = self.n.max(1) as f64;
        EpisodeResult {
            outcomes: self.outcomes,
            achieved_outage_analytic: self.sum_error / n,
            achieved_outage_empirical: self.opts.empirical.then(|| self.failures as f64 / n),
            slots_evaluated: self.n,
            mean_channel_uses: if self.allocated > 0 {
                self.sum_uses / self.allocated as f64
            } else {
                f64::NAN
            },
            unallocatable_slots: self.unallocatable,
        }
    }
}

/// Runs the causal slot loop on a pre-generated trace.
pub fn run_episode_on(
    trace: &ScenarioTrace,
    desired_power: f64,
    predictor: &PredictorKind,
    spec: &CodingSpec,
    opts: EpisodeOptions,
    decode_seed: u64,
) -> Result<EpisodeResult> {
    let mut p = Predictor::new(*predictor)?;
    let total = &trace.interference.total;
    for &x in &total[..trace.warmup] {
        p.observe(x);
    }
    let mut rng = rng_from_seed(decode_seed);
    let mut acc = Accumulator::new(opts);
    for t in trace.warmup..total.len() {
        let actual = total[t];
        let rec = p.predict(actual)?;
        acc.slot(
            spec,
            desired_power,
            trace.interference.times[t],
            rec.predicted_linear,
            actual,
            trace.desired_gain[t],
            &mut rng,
        );
        p.observe(actual);
    }
    Ok(acc.finish())
}

/// Evaluates allocation for precomputed predictions (one per allocated slot, in order).
///
/// Equivalent to [`run_episode_on`] because predictions never depend on allocation.
pub fn evaluate_predictions(
    trace: &ScenarioTrace,
    desired_power: f64,
    predictions: &[PredictionRecord],
    spec: &CodingSpec,
    opts: EpisodeOptions,
    decode_seed: u64,
) -> EpisodeResult {
    let mut rng = rng_from_seed(decode_seed);
    let mut acc = Accumulator::new(opts);
    for (rec, t) in predictions.iter().zip(trace.warmup..) {
        acc.slot(
            spec,
            desired_power,
            trace.interference.times[t],
            rec.predicted_linear,
            trace.interference.total[t],
            trace.desired_gain[t],
            &mut rng,
        );
    }
    acc.finish()
}

/// Generates the channel for `seed` and runs one episode.
pub fn run_episode(
    scenario: &ScenarioConfig,
    predictor: &PredictorKind,
    spec: &CodingSpec,
    n_slots: usize,
    seed: u64,
    opts: EpisodeOptions,
) -> Result<EpisodeResult> {
    let trace = ScenarioTrace::generate(scenario, n_slots, seed)?;
    run_episode_on(
        &trace,
        scenario.desired_link().mean_power,
        predictor,
        spec,
        opts,
        derive_seed(seed, "decode", 0),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub predictor: String,
    pub target: f64,
    pub result: EpisodeResult,
}

pub const SWEEP_CSV_HEADER: &str =
    "predictor,target,achieved_analytic,achieved_empirical,slots,mean_R,unallocatable_slots";

/// Every `(predictor, target)` pair on one shared channel realisation.
///
/// Each predictor's forecasts are computed once and reused across targets. Decoding
/// draws use a stream per pair derived from `seed`.
pub fn sweep_targets(
    scenario: &ScenarioConfig,
    predictors: &[PredictorKind],
    targets: &[f64],
    n_slots: usize,
    seed: u64,
    opts: EpisodeOptions,
) -> Result<Vec<SweepRow>> {
    let specs = targets
        .iter()
        .map(|&t| scenario.coding_spec(t))
        .collect::<Result<Vec<_>>>()?;
    let trace = ScenarioTrace::generate(scenario, n_slots, seed)?;
    let desired_power = scenario.desired_link().mean_power;
    let forecasts = predictors
        .par_iter()
        .map(|kind| run_prediction_trace(kind, &trace.interference, trace.warmup))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, usize)> = (0..predictors.len())
        .flat_map(|p| (0..specs.len()).map(move |s| (p, s)))
        .collect();
    Ok(jobs
        .par_iter()
        .map(|&(p, s)| {
            let decode_seed = derive_seed(seed, "decode", (p * specs.len() + s) as u64);
            SweepRow {
                predictor: predictors[p].label().to_string(),
                target: targets[s],
                result: evaluate_predictions(&trace, desired_power, &forecasts[p], &specs[s], opts, decode_seed),
            }
        })
        .collect())
}

pub fn write_sweep_csv<W: Write>(mut out: W, rows: &[SweepRow]) -> std::io::Result<()> {
    writeln!(out, "{SWEEP_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.predictor,
            fmt_f64(r.target),
            fmt_f64(r.result.achieved_outage_analytic),
            r.result.achieved_outage_empirical.map(fmt_f64).unwrap_or_default(),
            r.result.slots_evaluated,
            fmt_f64(r.result.mean_channel_uses),
            r.result.unallocatable_slots
        )?;
    }
    Ok(())
}

pub const SLOT_CSV_HEADER: &str = "slot,pred_interference,actual_interference,desired_gain,pred_sinr,actual_sinr,channel_uses,target,achieved,decode_failure";

pub fn write_slots_csv<W: Write>(mut out: W, outcomes: &[SlotOutcome]) -> std::io::Result<()> {
    writeln!(out, "{SLOT_CSV_HEADER}")?;
    for o in outcomes {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            o.slot,
            fmt_f64(o.predicted_interference),
            fmt_f64(o.actual_interference),
            fmt_f64(o.desired_gain),
            fmt_f64(o.predicted_sinr),
            fmt_f64(o.actual_sinr),
            o.channel_uses.map(|r| r.to_string()).unwrap_or_default(),
            fmt_f64(o.target_error),
            fmt_f64(o.achieved_error),
            o.decode_failure.map(|f| u8::from(f).to_string()).unwrap_or_default()
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const EMPIRICAL: EpisodeOptions = EpisodeOptions {
        keep_outcomes: false,
        empirical: true,
    };

    fn small_cfg() -> ScenarioConfig {
        ScenarioConfig {
            window: 20,
            horizon: 2,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn genie_meets_target_every_slot() {
        let cfg = small_cfg();
        let spec = cfg.coding_spec(1e-3).unwrap();
        let opts = EpisodeOptions {
            keep_outcomes: true,
            empirical: false,
        };
        let r = run_episode(&cfg, &PredictorKind::GenieAided, &spec, 2000, 1, opts).unwrap();
        assert_eq!(r.slots_evaluated, 2000);
        assert!(r.outcomes.iter().all(|o| o.achieved_error <= 1e-3));
        assert!(r.outcomes.iter().all(|o| o.predicted_sinr == o.actual_sinr));
        assert!(r.achieved_outage_analytic <= 1e-3);
    }

    #[test]
    fn overprediction_never_hurts() {
        let cfg = small_cfg();
        let spec = cfg.coding_spec(1e-2).unwrap();
        let trace = ScenarioTrace::generate(&cfg, 500, 3).unwrap();
        let p = cfg.desired_link().mean_power;
        let opts = EpisodeOptions {
            keep_outcomes: true,
            empirical: false,
        };
        let truth: Vec<PredictionRecord> = run_prediction_trace(&PredictorKind::GenieAided, &trace.interference, trace.warmup).unwrap();
        let inflated: Vec<PredictionRecord> = truth
            .iter()
            .enumerate()
            .map(|(i, r)| PredictionRecord {
                predicted_linear: r.predicted_linear * (1.0 + (i % 7) as f64 * 0.3),
                ..*r
            })
            .collect();
        let a = evaluate_predictions(&trace, p, &truth, &spec, opts, 0);
        let b = evaluate_predictions(&trace, p, &inflated, &spec, opts, 0);
        for (x, y) in a.outcomes.iter().zip(&b.outcomes) {
            assert!(y.achieved_error <= x.achieved_error);
            assert!(y.achieved_error <= 1e-2);
        }
    }

    #[test]
    fn loop_and_cached_forecasts_agree() {
        let cfg = small_cfg();
        let spec = cfg.coding_spec(1e-2).unwrap();
        let trace = ScenarioTrace::generate(&cfg, 400, 5).unwrap();
        let p = cfg.desired_link().mean_power;
        let opts = EpisodeOptions {
            keep_outcomes: true,
            empirical: true,
        };
        for kind in cfg.predictors() {
            let a = run_episode_on(&trace, p, &kind, &spec, opts, 9).unwrap();
            let preds = run_prediction_trace(&kind, &trace.interference, trace.warmup).unwrap();
            let b = evaluate_predictions(&trace, p, &preds, &spec, opts, 9);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn unallocatable_slots_count_as_outage() {
        let cfg = small_cfg();
        let spec = cfg.coding_spec(1e-2).unwrap();
        let trace = ScenarioTrace::generate(&cfg, 10, 5).unwrap();
        let preds: Vec<PredictionRecord> = (0..10)
            .map(|i| PredictionRecord {
                slot: (cfg.window + i + 1) as u64,
                predicted_linear: f64::INFINITY,
                predicted_db: f64::INFINITY,
                ci_low_db: f64::INFINITY,
                ci_high_db: f64::INFINITY,
                warmup: false,
            })
            .collect();
        let r = evaluate_predictions(&trace, 100.0, &preds, &spec, EpisodeOptions::default(), 0);
        assert_eq!(r.unallocatable_slots, 10);
        assert_eq!(r.achieved_outage_analytic, 1.0);
        assert!(r.mean_channel_uses.is_nan());
    }

    #[test]
    fn sweep_shape_and_determinism() {
        let cfg = small_cfg();
        let rows = sweep_targets(&cfg, &cfg.predictors(), &cfg.targets, 300, 11, EMPIRICAL).unwrap();
        assert_eq!(rows.len(), 15);
        for r in rows.iter().filter(|r| r.predictor == "genie") {
            assert!(r.result.achieved_outage_analytic <= r.target);
        }
        let again = sweep_targets(&cfg, &cfg.predictors(), &cfg.targets, 300, 11, EMPIRICAL).unwrap();
        assert_eq!(rows, again);
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some(SWEEP_CSV_HEADER));
        assert_eq!(text.lines().count(), 16);
    }

    #[test]
    fn frozen_desired_link() {
        let cfg = ScenarioConfig {
            desired_fading: false,
            ..small_cfg()
        };
        let trace = ScenarioTrace::generate(&cfg, 50, 1).unwrap();
        assert!(trace.desired_gain.iter().all(|&g| g == 1.0));
    }
}
