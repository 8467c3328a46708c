//! Temporally correlated Rayleigh fading, aggregate co-channel interference and SINR.
//!
//! Powers are expressed relative to the noise floor (`N0 = 1`), so a link's mean
//! power is its SNR or INR in linear units and the SINR denominator is `I + 1`.
//!
//! Each link's complex amplitude is a unit-variance circularly symmetric Gaussian
//! process. Two temporal models are available, both parameterised by the lag-1
//! correlation coefficient `coherence` of the complex amplitude:
//!
//! * [`FadingModel::GaussianDoppler`]: white complex noise filtered by a sampled
//!   Gaussian pulse, giving a Gaussian-shaped autocorrelation (Gaussian Doppler
//!   spectrum). Sample paths are smooth.
//! * [`FadingModel::FirstOrderAr`]: `h[t] = ρ h[t-1] + sqrt(1-ρ²) w[t]`, giving an
//!   exponential autocorrelation. Sample paths are rough (Markov).
//!
//! With `coherence = 0` both reduce to i.i.d. block fading.

use std::io::Write;

use nalgebra::Complex;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{rng_from_seed, SimRng};
use crate::units::db_to_linear;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FadingModel {
    #[default]
    GaussianDoppler,
    FirstOrderAr,
}

impl std::fmt::Display for FadingModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FadingModel::GaussianDoppler => f.write_str("gaussian_doppler"),
            FadingModel::FirstOrderAr => f.write_str("first_order_ar"),
        }
    }
}

/// A single link: its mean received power over noise and its fading dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkConfig {
    /// Mean power relative to noise, linear (SNR for the desired link, INR for an interferer).
    pub mean_power: f64,
    /// Lag-1 correlation of the complex amplitude, in `[0, 1)`.
    pub coherence: f64,
    pub model: FadingModel,
}

impl LinkConfig {
    pub fn new(mean_power: f64, coherence: f64) -> Self {
        LinkConfig {
            mean_power,
            coherence,
            model: FadingModel::default(),
        }
    }

    pub fn from_db(mean_power_db: f64, coherence: f64) -> Self {
        Self::new(db_to_linear(mean_power_db), coherence)
    }

    pub fn with_model(mut self, model: FadingModel) -> Self {
        self.model = model;
        self
    }

    /// Zero mean power is accepted as the degenerate "switched off" link.
    pub fn validate(&self) -> Result<()> {
        if !(self.mean_power.is_finite() && self.mean_power >= 0.0) {
            return Err(Error::param(
                "mean_power",
                format!("must be finite and non-negative, got {}", self.mean_power),
            ));
        }
        validate_coherence(self.coherence)
    }
}

fn validate_coherence(rho: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::param(
            "coherence",
            format!("must lie in [0, 1), got {rho}"),
        ));
    }
    Ok(())
}

/// Squared channel magnitudes `|h(t)|²`, unit mean.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub gains: Vec<f64>,
}

/// Aggregate interference `I(t) = Σ_i P_i |h_i(t)|²` with its per-interferer decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct InterferenceTrace {
    /// Slot indices, starting at 1.
    pub times: Vec<u64>,
    pub total: Vec<f64>,
    /// `per_interferer[i][t]`.
    pub per_interferer: Vec<Vec<f64>>,
}

impl InterferenceTrace {
    pub fn len(&self) -> usize {
        self.total.len()
    }

    pub fn is_empty(&self) -> bool {
        self.total.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinrSample {
    pub desired_power: f64,
    pub interference: f64,
    pub sinr: f64,
}

/// Unit-energy sampled Gaussian pulse whose discrete lag-1 autocorrelation equals `rho`.
///
/// The taps `g[k] ∝ exp(-k² / (2 s²))` are truncated at `|k| ≤ 6s`; `s` is found by
/// bisection on the exact discrete lag-1 correlation `Σ g[k] g[k+1] / Σ g[k]²`.
pub fn gaussian_doppler_taps(rho: f64) -> Vec<f64> {
    if rho <= 0.0 {
        return vec![1.0];
    }
    let build = |s: f64| -> Vec<f64> {
        let half = (6.0 * s).ceil().max(1.0) as i64;
        let mut taps: Vec<f64> = (-half..=half)
            .map(|k| (-((k * k) as f64) / (2.0 * s * s)).exp())
            .collect();
        let energy: f64 = taps.iter().map(|g| g * g).sum();
        let norm = energy.sqrt();
        taps.iter_mut().for_each(|g| *g /= norm);
        taps
    };
    let lag1 = |taps: &[f64]| -> f64 { taps.windows(2).map(|w| w[0] * w[1]).sum() };

    // Continuous approximation exp(-1/(4 s²)) = rho brackets the root.
    let guess = 1.0 / (2.0 * (-rho.ln()).sqrt());
    let (mut lo, mut hi) = (1e-3, 2.0 * guess + 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if lag1(&build(mid)) < rho {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 * hi {
            break;
        }
    }
    build(0.5 * (lo + hi))
}

fn complex_normal(rng: &mut SimRng) -> Complex<f64> {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Unit-variance circularly symmetric complex Gaussian amplitudes with lag-1 correlation `coherence`.
pub fn generate_complex_amplitudes(
    coherence: f64,
    model: FadingModel,
    n_steps: usize,
    rng: &mut SimRng,
) -> Result<Vec<Complex<f64>>> {
    validate_coherence(coherence)?;
    if n_steps == 0 {
        return Err(Error::param("n_steps", "must be at least 1"));
    }
    let out = match model {
        FadingModel::FirstOrderAr => {
            let innovation = (1.0 - coherence * coherence).sqrt();
            let mut h = complex_normal(rng);
            let mut out = Vec::with_capacity(n_steps);
            out.push(h);
            for _ in 1..n_steps {
                h = h * coherence + complex_normal(rng) * innovation;
                out.push(h);
            }
            out
        }
        FadingModel::GaussianDoppler => {
            let taps = gaussian_doppler_taps(coherence);
            let width = taps.len();
            let white: Vec<Complex<f64>> = (0..n_steps + width - 1)
                .map(|_| complex_normal(rng))
                .collect();
            white
                .windows(width)
                .map(|w| {
                    w.iter()
                        .zip(&taps)
                        .fold(Complex::new(0.0, 0.0), |acc, (x, g)| acc + x * *g)
                })
                .collect()
        }
    };
    Ok(out)
}

pub fn generate_rayleigh_gains_with(
    cfg: &LinkConfig,
    n_steps: usize,
    rng: &mut SimRng,
) -> Result<ChannelRealization> {
    let amps = generate_complex_amplitudes(cfg.coherence, cfg.model, n_steps, rng)?;
    Ok(ChannelRealization {
        gains: amps.iter().map(|h| h.norm_sqr()).collect(),
    })
}

/// Unit-mean exponential power gains of a correlated Rayleigh link.
pub fn generate_rayleigh_gains(
    cfg: &LinkConfig,
    n_steps: usize,
    seed: u64,
) -> Result<ChannelRealization> {
    generate_rayleigh_gains_with(cfg, n_steps, &mut rng_from_seed(seed))
}

/// Independently faded interferers summed into the received interference power.
pub fn build_interference_trace(
    interferers: &[LinkConfig],
    n_steps: usize,
    seed: u64,
) -> Result<InterferenceTrace> {
    if interferers.is_empty() {
        return Err(Error::param("interferers", "at least one interferer is required"));
    }
    for cfg in interferers {
        cfg.validate()?;
    }
    let mut rng = rng_from_seed(seed);
    let mut per_interferer = Vec::with_capacity(interferers.len());
    for cfg in interferers {
        let gains = generate_rayleigh_gains_with(cfg, n_steps, &mut rng)?.gains;
        per_interferer.push(gains.into_iter().map(|g| cfg.mean_power * g).collect::<Vec<_>>());
    }
    let total = (0..n_steps)
        .map(|t| per_interferer.iter().map(|row| row[t]).sum())
        .collect();
    Ok(InterferenceTrace {
        times: (1..=n_steps as u64).collect(),
        total,
        per_interferer,
    })
}

/// SINR with the noise power normalised to one.
pub fn compute_sinr(desired: &LinkConfig, desired_gain: f64, interference: f64) -> SinrSample {
    let desired_power = desired.mean_power * desired_gain;
    SinrSample {
        desired_power,
        interference,
        sinr: desired_power / (interference + 1.0),
    }
}

pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes `t,total,i1..iN,desired_gain`, one row per slot.
pub fn write_trace_csv<W: Write>(
    mut out: W,
    trace: &InterferenceTrace,
    desired_gain: &[f64],
) -> std::io::Result<()> {
    if desired_gain.len() != trace.len() {
        return Err(std::io::Error::new(
            std::io::ErrorKind::InvalidInput,
            "desired gain series and trace differ in length",
        ));
    }
    let mut header = String::from("t,total");
    for i in 1..=trace.per_interferer.len() {
        header.push_str(&format!(",i{i}"));
    }
    header.push_str(",desired_gain");
    writeln!(out, "{header}")?;
    for (t, slot) in trace.times.iter().enumerate() {
        let mut row = format!("{slot},{}", fmt_f64(trace.total[t]));
        for series in &trace.per_interferer {
            row.push(',');
            row.push_str(&fmt_f64(series[t]));
        }
        row.push(',');
        row.push_str(&fmt_f64(desired_gain[t]));
        writeln!(out, "{row}")?;
    }
    Ok(())
}
