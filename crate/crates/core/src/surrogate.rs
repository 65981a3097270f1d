//! Gaussian-process surrogates over pooling policies and policy selection.
//!
//! A surrogate maps policy features `(k, lambda_max, mean rate, rate std)`
//! to either accuracy or average RU consumption. Inputs are z-scored with the
//! training statistics; the kernel is squared-exponential with one length
//! scale per feature and the prior mean is the training-target mean.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const N_FEATURES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyFeatures {
    pub k: usize,
    pub lambda_max: f64,
    pub rate_mean: f64,
    pub rate_std: f64,
}

impl PolicyFeatures {
    pub fn to_vec(&self) -> Vec<f64> {
        vec![self.k as f64, self.lambda_max, self.rate_mean, self.rate_std]
    }
}

/// Workload half of the feature vector; the policy supplies `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkloadFeatures {
    pub lambda_max: f64,
    pub rate_mean: f64,
    pub rate_std: f64,
}

impl WorkloadFeatures {
    pub fn with_k(&self, k: usize) -> PolicyFeatures {
        PolicyFeatures {
            k,
            lambda_max: self.lambda_max,
            rate_mean: self.rate_mean,
            rate_std: self.rate_std,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyObservation {
    pub features: PolicyFeatures,
    pub accuracy: f64,
    pub avg_ru_per_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Accuracy,
    Cost,
}

impl Target {
    fn of(&self, obs: &PolicyObservation) -> f64 {
        match self {
            Target::Accuracy => obs.accuracy,
            Target::Cost => obs.avg_ru_per_s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PriorMean {
    /// Mean of the training targets.
    TargetMean,
    Constant(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GprHyperparams {
    /// One per input dimension, or a single value shared by all.
    pub length_scales: Vec<f64>,
    pub signal_variance: f64,
    pub noise_variance: f64,
    /// Z-score the inputs and divide residuals by the target standard
    /// deviation, so variances are relative to the target spread.
    pub standardize: bool,
    pub prior_mean: PriorMean,
}

impl Default for GprHyperparams {
    fn default() -> Self {
        Self {
            length_scales: vec![1.0],
            signal_variance: 1.0,
            noise_variance: 1e-4,
            standardize: true,
            prior_mean: PriorMean::TargetMean,
        }
    }
}

const JITTER_START: f64 = 1e-8;
const JITTER_MAX: f64 = 1e-2;

/// Lower Cholesky factor of a row-major `n x n` SPD matrix, or `None` if a
/// pivot is not strictly positive.
pub fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for p in 0..j {
                s -= l[i * n + p] * l[j * n + p];
            }
            if i == j {
                if !s.is_finite() || s <= 0.0 {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// Solves `L x = b` in place.
fn forward_subst(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut s = b[i];
        for p in 0..i {
            s -= l[i * n + p] * b[p];
        }
        b[i] = s / l[i * n + i];
    }
}

/// Solves `Lᵀ x = b` in place.
fn backward_subst(l: &[f64], n: usize, b: &mut [f64]) {
    for i in (0..n).rev() {
        let mut s = b[i];
        for p in i + 1..n {
            s -= l[p * n + i] * b[p];
        }
        b[i] = s / l[i * n + i];
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GprSurrogate {
    hyper: GprHyperparams,
    /// Per-dimension length scales, expanded.
    scales: Vec<f64>,
    center: Vec<f64>,
    spread: Vec<f64>,
    /// Standardized training inputs, row-major.
    inputs: Vec<Vec<f64>>,
    chol: Vec<f64>,
    alpha: Vec<f64>,
    prior_mean: f64,
    target_scale: f64,
    /// Diagonal jitter added on top of the noise variance, zero if none.
    pub jitter: f64,
}

impl GprSurrogate {
    pub fn fit(inputs: &[Vec<f64>], targets: &[f64], hyper: &GprHyperparams) -> Result<Self> {
        let n = inputs.len();
        if n == 0 {
            return Err(Error::invalid("GPR needs at least one observation"));
        }
        if targets.len() != n {
            return Err(Error::Shape(format!("{} targets for {n} inputs", targets.len())));
        }
        if targets.iter().any(|y| !y.is_finite()) {
            return Err(Error::invalid("GPR targets must be finite"));
        }
        let dim = inputs[0].len();
        if inputs.iter().any(|x| x.len() != dim) {
            return Err(Error::Shape("GPR inputs of differing dimension".into()));
        }
        if inputs.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("GPR inputs must be finite"));
        }
        let scales = match hyper.length_scales.len() {
            1 => vec![hyper.length_scales[0]; dim],
            d if d == dim => hyper.length_scales.clone(),
            d => {
                return Err(Error::Shape(format!("{d} length scales for {dim} features")));
            }
        };
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !scales.iter().all(|&l| positive(l))
            || !positive(hyper.signal_variance)
            || !(hyper.noise_variance.is_finite() && hyper.noise_variance >= 0.0)
        {
            return Err(Error::invalid("GPR hyperparameters must be positive"));
        }

        let (center, spread) = if hyper.standardize {
            let mut center = vec![0.0; dim];
            let mut spread = vec![0.0; dim];
            for d in 0..dim {
                let mean = inputs.iter().map(|x| x[d]).sum::<f64>() / n as f64;
                let var = inputs.iter().map(|x| (x[d] - mean).powi(2)).sum::<f64>() / n as f64;
                center[d] = mean;
                spread[d] = if var > 0.0 { var.sqrt() } else { 1.0 };
            }
            (center, spread)
        } else {
            (vec![0.0; dim], vec![1.0; dim])
        };

        let std_inputs: Vec<Vec<f64>> = inputs
            .iter()
            .map(|x| {
                x.iter()
                    .zip(&center)
                    .zip(&spread)
                    .map(|((v, c), s)| (v - c) / s)
                    .collect()
            })
            .collect();

        let prior_mean = match hyper.prior_mean {
            PriorMean::TargetMean => targets.iter().sum::<f64>() / n as f64,
            PriorMean::Constant(c) => c,
        };
        let target_scale = if hyper.standardize {
            let mean = targets.iter().sum::<f64>() / n as f64;
            let var = targets.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n as f64;
            if var > 0.0 {
                var.sqrt()
            } else {
                1.0
            }
        } else {
            1.0
        };

        let mut surrogate = Self {
            hyper: hyper.clone(),
            scales,
            center,
            spread,
            inputs: std_inputs,
            chol: Vec::new(),
            alpha: Vec::new(),
            prior_mean,
            target_scale,
            jitter: 0.0,
        };

        let mut gram = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                gram[i * n + j] = surrogate.kernel(&surrogate.inputs[i], &surrogate.inputs[j]);
            }
        }
        let mut jitter = 0.0;
        let chol = loop {
            let mut a = gram.clone();
            for i in 0..n {
                a[i * n + i] += hyper.noise_variance + jitter;
            }
            if let Some(l) = cholesky(&a, n) {
                break l;
            }
            jitter = if jitter == 0.0 { JITTER_START } else { jitter * 2.0 };
            if jitter > JITTER_MAX {
                return Err(Error::NotPositiveDefinite { jitter: JITTER_MAX });
            }
        };

        let mut alpha: Vec<f64> = targets.iter().map(|y| (y - prior_mean) / target_scale).collect();
        forward_subst(&chol, n, &mut alpha);
        backward_subst(&chol, n, &mut alpha);

        surrogate.chol = chol;
        surrogate.alpha = alpha;
        surrogate.jitter = jitter;
        Ok(surrogate)
    }

    fn kernel(&self, a: &[f64], b: &[f64]) -> f64 {
        let r2: f64 = a
            .iter()
            .zip(b)
            .zip(&self.scales)
            .map(|((x, y), l)| ((x - y) / l).powi(2))
            .sum();
        self.hyper.signal_variance * (-0.5 * r2).exp()
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn hyperparams(&self) -> &GprHyperparams {
        &self.hyper
    }

    pub fn prior_mean(&self) -> f64 {
        self.prior_mean
    }

    /// Target units per unit of latent function; 1 without standardization.
    pub fn target_scale(&self) -> f64 {
        self.target_scale
    }

    /// Posterior mean and latent-function variance at `x`, in target units.
    pub fn predict(&self, x: &[f64]) -> Result<(f64, f64)> {
        if x.len() != self.dim() {
            return Err(Error::Shape(format!(
                "query of dimension {} for a surrogate over {}",
                x.len(),
                self.dim()
            )));
        }
        let z: Vec<f64> = x
            .iter()
            .zip(&self.center)
            .zip(&self.spread)
            .map(|((v, c), s)| (v - c) / s)
            .collect();
        let n = self.len();
        let mut kstar: Vec<f64> = self.inputs.iter().map(|xi| self.kernel(xi, &z)).collect();
        let s = self.target_scale;
        let mean = self.prior_mean + s * kstar.iter().zip(&self.alpha).map(|(k, a)| k * a).sum::<f64>();
        forward_subst(&self.chol, n, &mut kstar);
        let explained: f64 = kstar.iter().map(|v| v * v).sum();
        let variance = s * s * (self.hyper.signal_variance - explained).max(0.0);
        Ok((mean, variance))
    }
}

#[derive(Debug, Clone)]
pub struct PolicySurrogate {
    pub target: Target,
    pub gpr: GprSurrogate,
}

impl PolicySurrogate {
    pub fn predict(&self, features: &PolicyFeatures) -> Result<(f64, f64)> {
        self.gpr.predict(&features.to_vec())
    }
}

pub fn gpr_fit(observations: &[PolicyObservation], target: Target, hyper: &GprHyperparams) -> Result<PolicySurrogate> {
    let inputs: Vec<Vec<f64>> = observations.iter().map(|o| o.features.to_vec()).collect();
    let targets: Vec<f64> = observations.iter().map(|o| target.of(o)).collect();
    Ok(PolicySurrogate {
        target,
        gpr: GprSurrogate::fit(&inputs, &targets, hyper)?,
    })
}

pub fn gpr_predict(surrogate: &PolicySurrogate, features: &PolicyFeatures) -> Result<(f64, f64)> {
    surrogate.predict(features)
}

/// Leave-one-out absolute errors: each observation predicted by a surrogate
/// refit on the others.
pub fn loo_errors(observations: &[PolicyObservation], target: Target, hyper: &GprHyperparams) -> Result<Vec<f64>> {
    if observations.len() < 2 {
        return Err(Error::invalid("leave-one-out needs at least two observations"));
    }
    (0..observations.len())
        .map(|i| {
            let rest: Vec<PolicyObservation> = observations
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, o)| *o)
                .collect();
            let s = gpr_fit(&rest, target, hyper)?;
            let (mean, _) = s.predict(&observations[i].features)?;
            Ok((mean - target.of(&observations[i])).abs())
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub k: usize,
    pub predicted_accuracy: f64,
    pub accuracy_variance: f64,
    pub predicted_cost: f64,
    pub cost_variance: f64,
}

/// Candidates whose predicted accuracy meets `required_accuracy`, cheapest
/// first; equal predicted costs favor the larger `k`.
pub fn select_policy(
    accuracy: &PolicySurrogate,
    cost: &PolicySurrogate,
    candidate_ks: &[usize],
    workload: &WorkloadFeatures,
    required_accuracy: f64,
) -> Result<Vec<Candidate>> {
    let mut out = Vec::new();
    for &k in candidate_ks {
        let f = workload.with_k(k);
        let (predicted_accuracy, accuracy_variance) = accuracy.predict(&f)?;
        if predicted_accuracy < required_accuracy {
            continue;
        }
        let (predicted_cost, cost_variance) = cost.predict(&f)?;
        out.push(Candidate {
            k,
            predicted_accuracy,
            accuracy_variance,
            predicted_cost,
            cost_variance,
        });
    }
    out.sort_by(|a, b| a.predicted_cost.total_cmp(&b.predicted_cost).then(b.k.cmp(&a.k)));
    Ok(out)
}

/// Plain-text summary of a fitted surrogate.
pub struct SurrogateReport<'a> {
    pub surrogate: &'a PolicySurrogate,
    pub loo_mae: Option<f64>,
}

impl fmt::Display for SurrogateReport<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let g = &self.surrogate.gpr;
        let h = g.hyperparams();
        writeln!(f, "target: {:?}", self.surrogate.target)?;
        writeln!(f, "kernel: squared exponential")?;
        writeln!(f, "length_scales: {:?}", h.length_scales)?;
        writeln!(f, "signal_variance: {}", h.signal_variance)?;
        writeln!(f, "noise_variance: {}", h.noise_variance)?;
        writeln!(f, "jitter: {}", g.jitter)?;
        writeln!(f, "prior_mean: {}", g.prior_mean())?;
        writeln!(f, "target_scale: {}", g.target_scale())?;
        writeln!(f, "training_size: {}", g.len())?;
        match self.loo_mae {
            Some(e) => writeln!(f, "loo_mae: {e}"),
            None => writeln!(f, "loo_mae: n/a"),
        }
    }
}
