//! Scenario configuration.
//!
//! Config files are flat `key = value` lines with `#` comments (a subset of TOML).
//! Every key is optional; missing keys take the defaults below, unknown keys are
//! rejected so typos surface immediately.
//!
//! ```text
//! desired_snr_db = 20
//! interferer_inrs_db = [5, 2, 0, -3, -10, 1]
//! alpha = 0.01
//! targets = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5]
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::{FadingModel, LinkConfig};
use crate::error::{Error, Result};
use crate::fbl::CodingSpec;
use crate::gp::{HyperGrid, LogRange, RbfKernel};
use crate::predict::{GprConfig, MaMode, PredictorKind};

/// Full experiment parameterisation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub desired_snr_db: f64,
    pub interferer_inrs_db: Vec<f64>,
    pub coherence: f64,
    pub fading_model: FadingModel,
    /// When false the desired-link gain is frozen at 1.
    pub desired_fading: bool,
    pub kernel: RbfKernel,
    /// Observation noise standard deviation ε (centred dB domain).
    pub noise_eps: f64,
    pub tune: bool,
    pub grid: HyperGrid,
    pub alpha: f64,
    pub ma_mode: MaMode,
    pub payload_bits: u32,
    pub targets: Vec<f64>,
    pub window: usize,
    /// Prediction block length for the trace replay.
    pub horizon: usize,
    /// Prediction block length inside the allocation loop.
    pub alloc_horizon: usize,
    /// Allocate against the upper 95 % interference bound.
    pub conservative: bool,
    /// Draw Bernoulli decoding failures in addition to the analytic outage.
    pub empirical: bool,
    pub n_slots: usize,
    /// Length of the prediction-trace replay (observed span plus predicted blocks).
    pub trace_slots: usize,
    pub master_seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            desired_snr_db: 20.0,
            interferer_inrs_db: vec![5.0, 2.0, 0.0, -3.0, -10.0, 1.0],
            coherence: 0.95,
            fading_model: FadingModel::GaussianDoppler,
            desired_fading: true,
            kernel: RbfKernel {
                output_scale: 0.5,
                length_scale: 2.5,
            },
            noise_eps: 1e-3,
            tune: true,
            grid: HyperGrid::default(),
            alpha: 0.01,
            ma_mode: MaMode::Filtered,
            payload_bits: 50,
            targets: vec![1e-1, 1e-2, 1e-3, 1e-4, 1e-5],
            window: 75,
            horizon: 5,
            alloc_horizon: 1,
            conservative: false,
            empirical: false,
            n_slots: 100_000,
            trace_slots: 100,
            master_seed: 2025,
        }
    }
}

/// On-disk form: every key optional, nothing else allowed.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    desired_snr_db: Option<f64>,
    interferer_inrs_db: Option<Vec<f64>>,
    coherence: Option<f64>,
    fading_model: Option<FadingModel>,
    desired_fading: Option<bool>,
    output_scale: Option<f64>,
    length_scale: Option<f64>,
    noise_eps: Option<f64>,
    tune: Option<bool>,
    grid_output_scale_min: Option<f64>,
    grid_output_scale_max: Option<f64>,
    grid_output_scale_count: Option<usize>,
    grid_length_scale_min: Option<f64>,
    grid_length_scale_max: Option<f64>,
    grid_length_scale_count: Option<usize>,
    alpha: Option<f64>,
    ma_mode: Option<MaMode>,
    payload_bits: Option<u32>,
    targets: Option<Vec<f64>>,
    window: Option<usize>,
    horizon: Option<usize>,
    alloc_horizon: Option<usize>,
    conservative: Option<bool>,
    empirical: Option<bool>,
    n_slots: Option<usize>,
    trace_slots: Option<usize>,
    master_seed: Option<u64>,
}

fn field(field: &'static str, message: impl Into<String>) -> Error {
    Error::ConfigField {
        field,
        message: message.into(),
    }
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
                .unwrap_or(0);
            Error::Config {
                line,
                message: e.message().to_string(),
            }
        })?;
        let mut cfg = ScenarioConfig::default();
        macro_rules! take {
            ($($name:ident),*) => { $( if let Some(v) = raw.$name { cfg.$name = v; } )* };
        }
        take!(
            desired_snr_db, interferer_inrs_db, coherence, fading_model, desired_fading,
            noise_eps, tune, alpha, ma_mode, payload_bits, targets, window, horizon,
            alloc_horizon, conservative, empirical, n_slots, trace_slots, master_seed
        );
        if let Some(v) = raw.output_scale {
            cfg.kernel.output_scale = v;
        }
        if let Some(v) = raw.length_scale {
            cfg.kernel.length_scale = v;
        }
        let g = &mut cfg.grid;
        for (dst, src) in [
            (&mut g.output_scale.min, raw.grid_output_scale_min),
            (&mut g.output_scale.max, raw.grid_output_scale_max),
            (&mut g.length_scale.min, raw.grid_length_scale_min),
            (&mut g.length_scale.max, raw.grid_length_scale_max),
        ] {
            if let Some(v) = src {
                *dst = v;
            }
        }
        if let Some(v) = raw.grid_output_scale_count {
            g.output_scale.count = v;
        }
        if let Some(v) = raw.grid_length_scale_count {
            g.length_scale.count = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.desired_snr_db.is_finite() {
            return Err(field("desired_snr_db", "must be finite"));
        }
        if self.interferer_inrs_db.is_empty() {
            return Err(field("interferer_inrs_db", "at least one interferer is required"));
        }
        if let Some(x) = self.interferer_inrs_db.iter().find(|x| !x.is_finite()) {
            return Err(field("interferer_inrs_db", format!("entries must be finite, got {x}")));
        }
        if !(0.0..1.0).contains(&self.coherence) {
            return Err(field("coherence", format!("must lie in [0, 1), got {}", self.coherence)));
        }
        if !(self.kernel.output_scale.is_finite() && self.kernel.output_scale > 0.0) {
            return Err(field("output_scale", format!("must be positive, got {}", self.kernel.output_scale)));
        }
        if !(self.kernel.length_scale.is_finite() && self.kernel.length_scale > 0.0) {
            return Err(field("length_scale", format!("must be positive, got {}", self.kernel.length_scale)));
        }
        if !(self.noise_eps.is_finite() && self.noise_eps >= 0.0) {
            return Err(field("noise_eps", format!("must be non-negative, got {}", self.noise_eps)));
        }
        for (name, r) in [("grid_output_scale", self.grid.output_scale), ("grid_length_scale", self.grid.length_scale)] {
            validate_range(name, &r)?;
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(field("alpha", format!("must lie in the open interval (0, 1), got {}", self.alpha)));
        }
        if self.payload_bits == 0 {
            return Err(field("payload_bits", "must be at least 1"));
        }
        if self.targets.is_empty() {
            return Err(field("targets", "at least one target error rate is required"));
        }
        if let Some(t) = self.targets.iter().find(|t| !(**t > 0.0 && **t < 0.5)) {
            return Err(field("targets", format!("each target must lie in (0, 0.5), got {t}")));
        }
        if self.window < 2 {
            return Err(field("window", format!("must be at least 2, got {}", self.window)));
        }
        if self.horizon < 1 {
            return Err(field("horizon", "must be at least 1"));
        }
        if self.alloc_horizon < 1 {
            return Err(field("alloc_horizon", "must be at least 1"));
        }
        if self.n_slots < 1 {
            return Err(field("n_slots", "must be at least 1"));
        }
        if self.trace_slots <= self.window {
            return Err(field(
                "trace_slots",
                format!("must exceed the window ({}), got {}", self.window, self.trace_slots),
            ));
        }
        Ok(())
    }

    pub fn desired_link(&self) -> LinkConfig {
        LinkConfig::from_db(self.desired_snr_db, self.coherence).with_model(self.fading_model)
    }

    pub fn interferer_links(&self) -> Vec<LinkConfig> {
        self.interferer_inrs_db
            .iter()
            .map(|&db| LinkConfig::from_db(db, self.coherence).with_model(self.fading_model))
            .collect()
    }

    /// GPR settings used by the allocation loop.
    pub fn gpr_config(&self) -> GprConfig {
        GprConfig {
            horizon: self.alloc_horizon,
            ..self.trace_gpr_config()
        }
    }

    /// GPR settings used by the block-wise prediction-trace replay.
    pub fn trace_gpr_config(&self) -> GprConfig {
        GprConfig {
            window: self.window,
            horizon: self.horizon,
            kernel: self.kernel,
            noise_std: self.noise_eps,
            tune: self.tune,
            grid: self.grid,
            conservative: self.conservative,
        }
    }

    /// The three compared predictors: GPR, moving average and genie.
    pub fn predictors(&self) -> Vec<PredictorKind> {
        vec![
            PredictorKind::GprSlidingWindow(self.gpr_config()),
            PredictorKind::MovingAverage {
                alpha: self.alpha,
                mode: self.ma_mode,
            },
            PredictorKind::GenieAided,
        ]
    }

    pub fn coding_spec(&self, target: f64) -> Result<CodingSpec> {
        CodingSpec::new(self.payload_bits, target)
    }

    /// Flat `key = value` rendering that [`load_config`] reads back to an equal config.
    pub fn to_config_text(&self) -> String {
        let list = |v: &[f64]| {
            let items: Vec<String> = v.iter().map(|x| format!("{x:?}")).collect();
            format!("[{}]", items.join(", "))
        };
        let mode = |m: &MaMode| match m {
            MaMode::Filtered => "filtered",
            MaMode::RawPrevious => "raw_previous",
        };
        let mut s = String::new();
        let mut kv = |k: &str, v: String| s.push_str(&format!("{k} = {v}\n"));
        kv("desired_snr_db", format!("{:?}", self.desired_snr_db));
        kv("interferer_inrs_db", list(&self.interferer_inrs_db));
        kv("coherence", format!("{:?}", self.coherence));
        kv("fading_model", format!("\"{}\"", self.fading_model));
        kv("desired_fading", self.desired_fading.to_string());
        kv("output_scale", format!("{:?}", self.kernel.output_scale));
        kv("length_scale", format!("{:?}", self.kernel.length_scale));
        kv("noise_eps", format!("{:?}", self.noise_eps));
        kv("tune", self.tune.to_string());
        kv("grid_output_scale_min", format!("{:?}", self.grid.output_scale.min));
        kv("grid_output_scale_max", format!("{:?}", self.grid.output_scale.max));
        kv("grid_output_scale_count", self.grid.output_scale.count.to_string());
        kv("grid_length_scale_min", format!("{:?}", self.grid.length_scale.min));
        kv("grid_length_scale_max", format!("{:?}", self.grid.length_scale.max));
        kv("grid_length_scale_count", self.grid.length_scale.count.to_string());
        kv("alpha", format!("{:?}", self.alpha));
        kv("ma_mode", format!("\"{}\"", mode(&self.ma_mode)));
        kv("payload_bits", self.payload_bits.to_string());
        kv("targets", list(&self.targets));
        kv("window", self.window.to_string());
        kv("horizon", self.horizon.to_string());
        kv("alloc_horizon", self.alloc_horizon.to_string());
        kv("conservative", self.conservative.to_string());
        kv("empirical", self.empirical.to_string());
        kv("n_slots", self.n_slots.to_string());
        kv("trace_slots", self.trace_slots.to_string());
        kv("master_seed", self.master_seed.to_string());
        s
    }
}

fn validate_range(name: &'static str, r: &LogRange) -> Result<()> {
    r.validate().map_err(|e| field(name, e.to_string()))
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ScenarioConfig::parse(&text)
}
