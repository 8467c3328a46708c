//! Exact Gaussian-process regression over a scalar (time) input with an RBF kernel.
//!
//! The prior mean is zero; callers centre their targets first. All solves go through
//! a Cholesky factor of `K + σ_n² I + jitter I`. The jitter starts at `1e-10 σ_f²` and
//! is escalated tenfold up to `1e-6 σ_f²` before the factorisation is declared failed.
//!
//! Posterior predictions carry the latent variance `diag(Σ)`; the 95 % band is built
//! from the predictive variance `diag(Σ) + σ_n²` so it covers noisy observations.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_from_seed;

/// Two-sided 95 % standard-normal quantile.
pub const Z95: f64 = 1.96;

const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-6;
/// Variances in `[-VARIANCE_CLAMP, 0)` are roundoff and are clamped to zero.
const VARIANCE_CLAMP: f64 = 1e-10;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Squared-exponential covariance `σ_f² exp(-(a-b)² / (2ℓ²))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RbfKernel {
    pub output_scale: f64,
    pub length_scale: f64,
}

impl RbfKernel {
    pub fn new(output_scale: f64, length_scale: f64) -> Result<Self> {
        let k = RbfKernel {
            output_scale,
            length_scale,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.output_scale.is_finite() && self.output_scale > 0.0) {
            return Err(Error::param(
                "output_scale",
                format!("must be positive, got {}", self.output_scale),
            ));
        }
        if !(self.length_scale.is_finite() && self.length_scale > 0.0) {
            return Err(Error::param(
                "length_scale",
                format!("must be positive, got {}", self.length_scale),
            ));
        }
        Ok(())
    }

    #[inline]
    pub fn variance(&self) -> f64 {
        self.output_scale * self.output_scale
    }

    #[inline]
    pub fn eval(&self, a: f64, b: f64) -> f64 {
        let d = a - b;
        self.variance() * (-(d * d) / (2.0 * self.length_scale * self.length_scale)).exp()
    }
}

pub fn kernel_matrix(k: &RbfKernel, a: &[f64], b: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(a.len(), b.len(), |i, j| k.eval(a[i], b[j]))
}

/// Observations with a zero-mean prior in mind.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
    pub noise_variance: f64,
}

impl TrainingSet {
    pub fn new(inputs: Vec<f64>, targets: Vec<f64>, noise_variance: f64) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::InvalidInput("training set is empty".into()));
        }
        if inputs.len() != targets.len() {
            return Err(Error::InvalidInput(format!(
                "{} inputs but {} targets",
                inputs.len(),
                targets.len()
            )));
        }
        if let Some(i) = inputs.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput(format!(
                "training inputs must be strictly increasing (index {} -> {})",
                i,
                i + 1
            )));
        }
        if !(noise_variance.is_finite() && noise_variance >= 0.0) {
            return Err(Error::param(
                "noise_variance",
                format!("must be non-negative, got {noise_variance}"),
            ));
        }
        Ok(TrainingSet {
            inputs,
            targets,
            noise_variance,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorPrediction {
    pub query_inputs: Vec<f64>,
    pub mean: Vec<f64>,
    /// Latent posterior variance, `diag(Σ)`.
    pub variance: Vec<f64>,
    pub noise_variance: f64,
    pub lower95: Vec<f64>,
    pub upper95: Vec<f64>,
    pub full_covariance: Option<DMatrix<f64>>,
}

impl PosteriorPrediction {
    fn assemble(
        query_inputs: Vec<f64>,
        mean: Vec<f64>,
        variance: Vec<f64>,
        noise_variance: f64,
        full_covariance: Option<DMatrix<f64>>,
    ) -> Self {
        let (lower95, upper95) = mean
            .iter()
            .zip(&variance)
            .map(|(m, v)| {
                let half = Z95 * (v + noise_variance).sqrt();
                (m - half, m + half)
            })
            .unzip();
        PosteriorPrediction {
            query_inputs,
            mean,
            variance,
            noise_variance,
            lower95,
            upper95,
            full_covariance,
        }
    }

    pub fn predictive_variance(&self, i: usize) -> f64 {
        self.variance[i] + self.noise_variance
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    /// Shifts mean and band by `offset`, undoing target centring.
    pub fn shifted(mut self, offset: f64) -> Self {
        for x in self
            .mean
            .iter_mut()
            .chain(self.lower95.iter_mut())
            .chain(self.upper95.iter_mut())
        {
            *x += offset;
        }
        self
    }
}

fn clamp_variance(v: f64) -> f64 {
    if (-VARIANCE_CLAMP..0.0).contains(&v) {
        0.0
    } else {
        v
    }
}

/// Cholesky of `m + jitter I`, walking the jitter ladder.
pub(crate) fn factorize(m: &DMatrix<f64>, signal_variance: f64) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let mut jitter = JITTER_START * signal_variance;
    loop {
        let mut a = m.clone();
        for i in 0..a.nrows() {
            a[(i, i)] += jitter;
        }
        if let Some(ch) = a.cholesky() {
            return Ok((ch, jitter));
        }
        if jitter >= JITTER_MAX * signal_variance * (1.0 - 1e-9) {
            return Err(Error::NotPositiveDefinite {
                size: m.nrows(),
                jitter,
            });
        }
        jitter *= 10.0;
    }
}

/// A fitted GP: kernel, training data and the cached factorisation of `K + σ_n² I`.
#[derive(Debug, Clone)]
pub struct GpModel {
    kernel: RbfKernel,
    train: TrainingSet,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    jitter: f64,
}

impl GpModel {
    pub fn fit(kernel: RbfKernel, train: TrainingSet) -> Result<Self> {
        kernel.validate()?;
        let mut k = kernel_matrix(&kernel, &train.inputs, &train.inputs);
        for i in 0..k.nrows() {
            k[(i, i)] += train.noise_variance;
        }
        let (chol, jitter) = factorize(&k, kernel.variance())?;
        let alpha = chol.solve(&DVector::from_column_slice(&train.targets));
        Ok(GpModel {
            kernel,
            train,
            chol,
            alpha,
            jitter,
        })
    }

    pub fn kernel(&self) -> &RbfKernel {
        &self.kernel
    }

    pub fn training_set(&self) -> &TrainingSet {
        &self.train
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn predict(&self, query: &[f64], full_covariance: bool) -> Result<PosteriorPrediction> {
        if query.is_empty() {
            return Err(Error::InvalidInput("query set is empty".into()));
        }
        let k_star = kernel_matrix(&self.kernel, &self.train.inputs, query);
        let mean = k_star.tr_mul(&self.alpha);
        // v = L⁻¹ K(X, X*); Σ = K(X*,X*) - vᵀv
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&k_star)
            .expect("cholesky factor has a non-zero diagonal");
        let cov = if full_covariance {
            let mut c = kernel_matrix(&self.kernel, query, query);
            c -= v.tr_mul(&v);
            Some(c)
        } else {
            None
        };
        let variance = (0..query.len())
            .map(|j| {
                let col = v.column(j);
                clamp_variance(self.kernel.variance() - col.dot(&col))
            })
            .collect();
        Ok(PosteriorPrediction::assemble(
            query.to_vec(),
            mean.iter().copied().collect(),
            variance,
            self.train.noise_variance,
            cov,
        ))
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        let y = DVector::from_column_slice(&self.train.targets);
        let n = self.train.len() as f64;
        let log_det_half: f64 = self.chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
        -0.5 * y.dot(&self.alpha) - log_det_half - 0.5 * n * LN_2PI
    }
}

/// Posterior mean, variance and full covariance at `query`.
pub fn posterior(k: &RbfKernel, train: &TrainingSet, query: &[f64]) -> Result<PosteriorPrediction> {
    GpModel::fit(*k, train.clone())?.predict(query, true)
}

/// `log p(y | X, θ) = -½ yᵀ(K+σ_n²I)⁻¹y - ½ log|K+σ_n²I| - (n/2) log 2π`.
pub fn log_marginal_likelihood(k: &RbfKernel, train: &TrainingSet) -> Result<f64> {
    Ok(GpModel::fit(*k, train.clone())?.log_marginal_likelihood())
}

/// Draws `n_paths` functions from the zero-mean prior at `inputs`.
pub fn sample_prior(k: &RbfKernel, inputs: &[f64], n_paths: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    k.validate()?;
    if n_paths == 0 {
        return Err(Error::param("n_paths", "must be at least 1"));
    }
    if inputs.is_empty() {
        return Err(Error::InvalidInput("no input points".into()));
    }
    let (chol, _) = factorize(&kernel_matrix(k, inputs, inputs), k.variance())?;
    let l = chol.l();
    let mut rng = rng_from_seed(seed);
    Ok((0..n_paths)
        .map(|_| {
            let z = DVector::from_fn(inputs.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
            (&l * z).iter().copied().collect()
        })
        .collect())
}

/// `count` log-spaced values from `min` to `max` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRange {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl LogRange {
    pub fn new(min: f64, max: f64, count: usize) -> Result<Self> {
        let r = LogRange { min, max, count };
        r.validate()?;
        Ok(r)
    }

    pub fn single(value: f64) -> Self {
        LogRange {
            min: value,
            max: value,
            count: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::param("grid", "range must contain at least one point"));
        }
        if !(self.min > 0.0 && self.max >= self.min && self.max.is_finite()) {
            return Err(Error::param(
                "grid",
                format!("need 0 < min <= max, got [{}, {}]", self.min, self.max),
            ));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.min];
        }
        let (a, b) = (self.min.ln(), self.max.ln());
        let step = (b - a) / (self.count - 1) as f64;
        (0..self.count)
            .map(|i| {
                if i == self.count - 1 {
                    self.max
                } else {
                    (a + step * i as f64).exp()
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperGrid {
    pub output_scale: LogRange,
    pub length_scale: LogRange,
}

impl Default for HyperGrid {
    fn default() -> Self {
        HyperGrid {
            output_scale: LogRange {
                min: 0.05,
                max: 5.0,
                count: 20,
            },
            length_scale: LogRange {
                min: 0.25,
                max: 25.0,
                count: 20,
            },
        }
    }
}

impl HyperGrid {
    pub fn validate(&self) -> Result<()> {
        self.output_scale.validate()?;
        self.length_scale.validate()
    }

    /// Grid points in scan order: length scale descending, then output scale ascending.
    ///
    /// Scanning with a strict `>` keeps the first maximiser, so ties resolve toward the
    /// larger length scale (then the smaller output scale).
    pub fn points(&self) -> Vec<RbfKernel> {
        let sf = self.output_scale.values();
        let mut ls = self.length_scale.values();
        ls.reverse();
        ls.iter()
            .flat_map(|&l| {
                sf.iter().map(move |&s| RbfKernel {
                    output_scale: s,
                    length_scale: l,
                })
            })
            .collect()
    }
}

fn argmax_first(scores: impl Iterator<Item = (RbfKernel, f64)>) -> Option<(RbfKernel, f64)> {
    let mut best: Option<(RbfKernel, f64)> = None;
    for (k, s) in scores {
        if !s.is_finite() {
            continue;
        }
        match best {
            Some((_, b)) if s <= b => {}
            _ => best = Some((k, s)),
        }
    }
    best
}

/// Grid search maximising the log marginal likelihood.
///
/// Grid points whose kernel matrix cannot be factorised are skipped. If none can be,
/// the first grid point is returned.
pub fn tune_hyperparameters(train: &TrainingSet, grid: &HyperGrid) -> Result<RbfKernel> {
    grid.validate()?;
    let points = grid.points();
    let best = argmax_first(points.iter().map(|k| {
        let s = log_marginal_likelihood(k, train).unwrap_or(f64::NEG_INFINITY);
        (*k, s)
    }));
    Ok(best.map(|(k, _)| k).unwrap_or(points[0]))
}

/// Precomputed posterior for a window of `window` unit-spaced observations predicting
/// the next `horizon` steps.
///
/// Because the kernel is stationary, the posterior of a sliding window depends on the
/// data only through a fixed linear map: `mean = weights · y` and a data-independent
/// latent variance. Inputs are taken relative to the window start (`0..window`).
#[derive(Debug, Clone)]
pub struct WindowPredictor {
    kernel: RbfKernel,
    noise_variance: f64,
    window: usize,
    /// `horizon × window`, rows are `K(x*, X)(K + σ_n² I)⁻¹`.
    weights: DMatrix<f64>,
    variance: Vec<f64>,
}

impl WindowPredictor {
    pub fn new(kernel: RbfKernel, noise_variance: f64, window: usize, horizon: usize) -> Result<Self> {
        if window == 0 || horizon == 0 {
            return Err(Error::param("window", "window and horizon must be positive"));
        }
        let inputs: Vec<f64> = (0..window).map(|i| i as f64).collect();
        let query: Vec<f64> = (window..window + horizon).map(|i| i as f64).collect();
        let mut k = kernel_matrix(&kernel, &inputs, &inputs);
        for i in 0..window {
            k[(i, i)] += noise_variance;
        }
        let (chol, _) = factorize(&k, kernel.variance())?;
        let k_star = kernel_matrix(&kernel, &inputs, &query);
        let weights = chol.solve(&k_star).transpose();
        let v = chol
            .l_dirty()
            .solve_lower_triangular(&k_star)
            .expect("cholesky factor has a non-zero diagonal");
        let variance = (0..horizon)
            .map(|j| {
                let col = v.column(j);
                clamp_variance(kernel.variance() - col.dot(&col))
            })
            .collect();
        Ok(WindowPredictor {
            kernel,
            noise_variance,
            window,
            weights,
            variance,
        })
    }

    pub fn kernel(&self) -> &RbfKernel {
        &self.kernel
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn horizon(&self) -> usize {
        self.variance.len()
    }

    /// Predicts the `horizon` steps after `targets`, which must hold exactly `window`
    /// values already on the zero-mean scale. Query inputs are `window..window+horizon`.
    pub fn predict(&self, targets: &[f64]) -> PosteriorPrediction {
        assert_eq!(targets.len(), self.window, "window length mismatch");
        let mean = (0..self.horizon())
            .map(|h| self.weights.row(h).iter().zip(targets).map(|(w, y)| w * y).sum())
            .collect();
        let query = (self.window..self.window + self.horizon())
            .map(|i| i as f64)
            .collect();
        PosteriorPrediction::assemble(query, mean, self.variance.clone(), self.noise_variance, None)
    }
}

/// Grid search over windows of fixed length.
///
/// For a fixed length scale the unit-variance kernel `K̃` of the window has a single
/// eigendecomposition `U Λ Uᵀ`, and every output scale on the grid shares it:
/// `K = U (σ_f² (Λ + jitter) + σ_n²) Uᵀ`. The log-determinants are data independent and
/// precomputed, so scoring a window costs one `Uᵀ y` per length scale plus a diagonal
/// sum per grid point. The maximiser agrees with [`tune_hyperparameters`] on
/// `inputs = 0..window` up to floating-point ties.
#[derive(Debug, Clone)]
pub struct WindowTuner {
    window: usize,
    noise_variance: f64,
    output_scales: Vec<f64>,
    /// Length scales in scan order (descending).
    length_scales: Vec<f64>,
    /// Transposed eigenvectors, one per length scale.
    basis_t: Vec<DMatrix<f64>>,
    /// `σ_f² (λ_i + jitter) + σ_n²` for each (length scale, output scale) pair.
    spectra: Vec<Vec<Vec<f64>>>,
    /// `-½ log det - (n/2) log 2π` for each pair.
    offsets: Vec<Vec<f64>>,
}

impl WindowTuner {
    pub fn new(grid: &HyperGrid, noise_variance: f64, window: usize) -> Result<Self> {
        grid.validate()?;
        if window == 0 {
            return Err(Error::param("window", "must be positive"));
        }
        let inputs: Vec<f64> = (0..window).map(|i| i as f64).collect();
        let output_scales = grid.output_scale.values();
        let mut length_scales = grid.length_scale.values();
        length_scales.reverse();
        let n = window as f64;
        let mut basis_t = Vec::with_capacity(length_scales.len());
        let mut spectra = Vec::with_capacity(length_scales.len());
        let mut offsets = Vec::with_capacity(length_scales.len());
        for &l in &length_scales {
            let unit = RbfKernel {
                output_scale: 1.0,
                length_scale: l,
            };
            let eig = kernel_matrix(&unit, &inputs, &inputs).symmetric_eigen();
            let lambdas: Vec<f64> = eig.eigenvalues.iter().map(|&v| v.max(0.0) + JITTER_START).collect();
            let mut per_scale = Vec::with_capacity(output_scales.len());
            let mut off = Vec::with_capacity(output_scales.len());
            for &sf in &output_scales {
                let d: Vec<f64> = lambdas.iter().map(|&lam| sf * sf * lam + noise_variance).collect();
                off.push(-0.5 * d.iter().map(|x| x.ln()).sum::<f64>() - 0.5 * n * LN_2PI);
                per_scale.push(d);
            }
            basis_t.push(eig.eigenvectors.transpose());
            spectra.push(per_scale);
            offsets.push(off);
        }
        Ok(WindowTuner {
            window,
            noise_variance,
            output_scales,
            length_scales,
            basis_t,
            spectra,
            offsets,
        })
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    /// Log marginal likelihood of `targets` at every grid point, in scan order.
    pub fn scores(&self, targets: &[f64]) -> Vec<(RbfKernel, f64)> {
        assert_eq!(targets.len(), self.window, "window length mismatch");
        let y = DVector::from_column_slice(targets);
        let mut out = Vec::with_capacity(self.length_scales.len() * self.output_scales.len());
        for (li, &l) in self.length_scales.iter().enumerate() {
            let z = &self.basis_t[li] * &y;
            let z2: Vec<f64> = z.iter().map(|v| v * v).collect();
            for (si, &sf) in self.output_scales.iter().enumerate() {
                let quad: f64 = z2.iter().zip(&self.spectra[li][si]).map(|(a, d)| a / d).sum();
                out.push((
                    RbfKernel {
                        output_scale: sf,
                        length_scale: l,
                    },
                    self.offsets[li][si] - 0.5 * quad,
                ));
            }
        }
        out
    }

    pub fn tune(&self, targets: &[f64]) -> RbfKernel {
        let scores = self.scores(targets);
        let fallback = scores[0].0;
        argmax_first(scores.into_iter()).map(|(k, _)| k).unwrap_or(fallback)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;
    use proptest::prelude::*;
    use rand::Rng;

    fn default_kernel() -> RbfKernel {
        RbfKernel::new(0.5, 2.5).unwrap()
    }

    #[test]
    fn kernel_values() {
        let k = default_kernel();
        assert_eq!(k.eval(3.0, 3.0), 0.25);
        assert!((k.eval(0.0, 2.5) - 0.151_632_664_928_158_1).abs() < 1e-12);
        assert!(k.eval(0.0, 1e3) < 1e-300);
        let m = kernel_matrix(&k, &[0.0, 1.0, 4.0], &[0.0, 1.0, 4.0]);
        assert_eq!(m, m.transpose());
    }

    #[test]
    fn kernel_rejects_nonpositive_scales() {
        assert!(RbfKernel::new(0.0, 1.0).is_err());
        assert!(RbfKernel::new(1.0, -1.0).is_err());
        assert!(RbfKernel::new(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn training_set_validation() {
        assert!(TrainingSet::new(vec![], vec![], 0.0).is_err());
        assert!(TrainingSet::new(vec![0.0, 1.0], vec![0.0], 0.0).is_err());
        assert!(TrainingSet::new(vec![0.0, 0.0], vec![0.0, 1.0], 0.0).is_err());
        assert!(TrainingSet::new(vec![1.0, 0.0], vec![0.0, 1.0], 0.0).is_err());
        assert!(TrainingSet::new(vec![0.0], vec![0.0], -1.0).is_err());
    }

    #[test]
    fn noiseless_interpolation() {
        let k = default_kernel();
        let xs = vec![0.0, 1.0, 2.5, 4.0, 7.0];
        let ys = vec![0.1, -0.3, 0.2, 0.4, -0.1];
        let train = TrainingSet::new(xs.clone(), ys.clone(), 0.0).unwrap();
        let post = posterior(&k, &train, &xs).unwrap();
        for i in 0..xs.len() {
            assert!((post.mean[i] - ys[i]).abs() < 1e-8, "{i}: {}", post.mean[i]);
            assert!(post.variance[i] <= 1e-8);
        }
    }

    #[test]
    fn reverts_to_prior_far_away() {
        let k = default_kernel();
        let train = TrainingSet::new(vec![0.0, 1.0, 2.0], vec![1.0, 0.5, -0.2], 1e-6).unwrap();
        let post = posterior(&k, &train, &[500.0]).unwrap();
        assert!(post.mean[0].abs() < 1e-12);
        assert!((post.variance[0] - 0.25).abs() < 1e-12);
        let half = post.upper95[0] - post.mean[0];
        assert!((half - Z95 * (0.25f64 + 1e-6).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn empty_query_rejected() {
        let train = TrainingSet::new(vec![0.0], vec![0.0], 0.0).unwrap();
        assert!(posterior(&default_kernel(), &train, &[]).is_err());
    }

    #[test]
    fn lml_scalar_gaussian() {
        let k = RbfKernel::new(1.0, 1.0).unwrap();
        let train = TrainingSet::new(vec![0.0], vec![0.0], 0.0).unwrap();
        let v = log_marginal_likelihood(&k, &train).unwrap();
        // jitter of 1e-10 perturbs log det by ~5e-11
        assert!((v - (-0.918_938_533_204_672_7)).abs() < 1e-9, "{v}");
    }

    #[test]
    fn lml_penalises_scaled_data() {
        let xs: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 0.4 * (x / 3.0).sin()).collect();
        let k = RbfKernel::new(0.4, 3.0).unwrap();
        let a = log_marginal_likelihood(&k, &TrainingSet::new(xs.clone(), ys.clone(), 1e-4).unwrap()).unwrap();
        let scaled: Vec<f64> = ys.iter().map(|y| 10.0 * y).collect();
        let b = log_marginal_likelihood(&k, &TrainingSet::new(xs, scaled, 1e-4).unwrap()).unwrap();
        assert!(b < a);
    }

    #[test]
    fn single_point_grid() {
        let train = TrainingSet::new(vec![0.0, 1.0], vec![0.3, 0.1], 1e-6).unwrap();
        let grid = HyperGrid {
            output_scale: LogRange::single(0.7),
            length_scale: LogRange::single(1.3),
        };
        assert_eq!(
            tune_hyperparameters(&train, &grid).unwrap(),
            RbfKernel::new(0.7, 1.3).unwrap()
        );
    }

    #[test]
    fn zero_targets_pick_smallest_output_scale() {
        let xs: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let train = TrainingSet::new(xs, vec![0.0; 20], 1e-6).unwrap();
        let grid = HyperGrid::default();
        let k = tune_hyperparameters(&train, &grid).unwrap();
        assert!((k.output_scale - 0.05).abs() < 1e-12, "{k:?}");
    }

    #[test]
    fn log_range_endpoints() {
        let v = LogRange::new(0.25, 25.0, 20).unwrap().values();
        assert_eq!(v.len(), 20);
        assert!((v[0] - 0.25).abs() < 1e-15);
        assert_eq!(v[19], 25.0);
        assert!(v.windows(2).all(|w| w[1] > w[0]));
        assert!(LogRange::new(1.0, 0.5, 3).is_err());
        assert!(LogRange::new(1.0, 2.0, 0).is_err());
    }

    #[test]
    fn window_predictor_matches_posterior() {
        let k = RbfKernel::new(1.3, 1.7).unwrap();
        let wp = WindowPredictor::new(k, 1e-4, 30, 5).unwrap();
        let mut rng = rng_from_seed(3);
        let ys: Vec<f64> = (0..30).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let xs: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let direct = posterior(&k, &TrainingSet::new(xs, ys.clone(), 1e-4).unwrap(), &[30.0, 31.0, 32.0, 33.0, 34.0]).unwrap();
        let fast = wp.predict(&ys);
        for i in 0..5 {
            assert!((direct.mean[i] - fast.mean[i]).abs() < 1e-9);
            assert!((direct.variance[i] - fast.variance[i]).abs() < 1e-9);
            assert!((direct.upper95[i] - fast.upper95[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn window_tuner_matches_direct_search() {
        let grid = HyperGrid {
            output_scale: LogRange::new(0.1, 3.0, 6).unwrap(),
            length_scale: LogRange::new(0.5, 10.0, 6).unwrap(),
        };
        let tuner = WindowTuner::new(&grid, 1e-4, 25).unwrap();
        let xs: Vec<f64> = (0..25).map(|i| i as f64).collect();
        for seed in 0..5 {
            let truth = RbfKernel::new(0.5 + seed as f64 * 0.3, 1.0 + seed as f64).unwrap();
            let ys = sample_prior(&truth, &xs, 1, seed).unwrap().remove(0);
            let train = TrainingSet::new(xs.clone(), ys.clone(), 1e-4).unwrap();
            assert_eq!(tuner.tune(&ys), tune_hyperparameters(&train, &grid).unwrap());
            for (k, score) in tuner.scores(&ys) {
                let direct = log_marginal_likelihood(&k, &train).unwrap();
                assert!((score - direct).abs() < 1e-6 * direct.abs().max(1.0), "{k:?}: {score} vs {direct}");
            }
        }
    }

    #[test]
    fn prior_sample_shapes() {
        let xs: Vec<f64> = (0..40).map(|i| i as f64 * 0.5).collect();
        let paths = sample_prior(&default_kernel(), &xs, 3, 1).unwrap();
        assert_eq!(paths.len(), 3);
        assert!(paths.iter().all(|p| p.len() == 40));
        assert_eq!(paths, sample_prior(&default_kernel(), &xs, 3, 1).unwrap());
        assert!(sample_prior(&default_kernel(), &xs, 0, 1).is_err());
    }

    #[test]
    fn prior_single_point_variance() {
        let paths = sample_prior(&default_kernel(), &[0.0], 10_000, 17).unwrap();
        let var = paths.iter().map(|p| p[0] * p[0]).sum::<f64>() / paths.len() as f64;
        assert!((var / 0.25 - 1.0).abs() < 0.05, "{var}");
    }

    #[test]
    fn prior_empirical_covariance() {
        let k = default_kernel();
        let xs = [0.0, 1.0];
        let paths = sample_prior(&k, &xs, 10_000, 23).unwrap();
        let n = paths.len() as f64;
        let c = |i: usize, j: usize| paths.iter().map(|p| p[i] * p[j]).sum::<f64>() / n;
        let km = kernel_matrix(&k, &xs, &xs);
        for (i, j) in [(0, 0), (0, 1), (1, 1)] {
            let rel = c(i, j) / km[(i, j)] - 1.0;
            assert!(rel.abs() < 0.05, "({i},{j}) rel err {rel}");
        }
    }

    #[test]
    fn tuning_recovers_length_scale() {
        let truth = default_kernel();
        let xs: Vec<f64> = (0..75).map(|i| i as f64).collect();
        let grid = HyperGrid::default();
        let tuner = WindowTuner::new(&grid, 1e-6, 75).unwrap();
        let mut rng = rng_from_seed(99);
        let mut hits = 0;
        for trial in 0..100 {
            let mut ys = sample_prior(&truth, &xs, 1, 1000 + trial).unwrap().remove(0);
            for y in &mut ys {
                *y += 1e-3 * rng.sample::<f64, _>(StandardNormal);
            }
            let k = tuner.tune(&ys);
            if k.length_scale >= 1.25 && k.length_scale <= 5.0 {
                hits += 1;
            }
        }
        assert!(hits >= 80, "{hits}/100");
    }

    fn symmetric_min_eig(m: &DMatrix<f64>) -> f64 {
        m.clone().symmetric_eigen().eigenvalues.min()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn kernel_is_psd(
            xs in prop::collection::vec(-20.0f64..20.0, 1..30),
            sf in 0.1f64..3.0,
            ls in 0.2f64..5.0,
        ) {
            let k = RbfKernel::new(sf, ls).unwrap();
            prop_assert!(symmetric_min_eig(&kernel_matrix(&k, &xs, &xs)) >= -1e-8);
        }

        #[test]
        fn posterior_variance_bounded_and_monotone(
            n in 1usize..20,
            q in -5.0f64..30.0,
            sf in 0.2f64..2.0,
            ls in 0.5f64..4.0,
            seed in 0u64..1000,
        ) {
            let k = RbfKernel::new(sf, ls).unwrap();
            let xs: Vec<f64> = (0..n).map(|i| i as f64 * 1.3).collect();
            let ys = sample_prior(&k, &xs, 1, seed).unwrap().remove(0);
            let train = TrainingSet::new(xs.clone(), ys.clone(), 1e-3).unwrap();
            let before = posterior(&k, &train, &[q]).unwrap();
            prop_assert!(before.variance[0] <= k.variance() + 1e-8);
            prop_assert!(before.lower95[0] <= before.mean[0] && before.mean[0] <= before.upper95[0]);

            // add an observation at q
            let mut pairs: Vec<(f64, f64)> = xs.into_iter().zip(ys).collect();
            if pairs.iter().all(|(x, _)| (x - q).abs() > 1e-9) {
                pairs.push((q, 0.0));
                pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
                let (xs2, ys2): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
                let after = posterior(&k, &TrainingSet::new(xs2, ys2, 1e-3).unwrap(), &[q]).unwrap();
                prop_assert!(after.variance[0] <= before.variance[0] + 1e-8);
            }
        }

        #[test]
        fn marginalisation_consistency(
            n in 1usize..15,
            queries in prop::collection::vec(-3.0f64..25.0, 2..8),
            seed in 0u64..1000,
        ) {
            let k = default_kernel();
            let xs: Vec<f64> = (0..n).map(|i| i as f64).collect();
            let ys = sample_prior(&k, &xs, 1, seed).unwrap().remove(0);
            let train = TrainingSet::new(xs, ys, 1e-6).unwrap();
            let all = posterior(&k, &train, &queries).unwrap();
            let sub: Vec<f64> = queries.iter().step_by(2).copied().collect();
            let part = posterior(&k, &train, &sub).unwrap();
            let full = all.full_covariance.as_ref().unwrap();
            let part_cov = part.full_covariance.as_ref().unwrap();
            for (a, i) in (0..queries.len()).step_by(2).enumerate() {
                prop_assert!((all.mean[i] - part.mean[a]).abs() < 1e-8);
                prop_assert!((all.variance[i] - part.variance[a]).abs() < 1e-8);
                for (b, j) in (0..queries.len()).step_by(2).enumerate() {
                    prop_assert!((full[(i, j)] - part_cov[(a, b)]).abs() < 1e-8);
                }
            }
        }
    }
}
