//! Two-layer fully connected classifier (784-200-10 by default).
//!
//! Hidden units use ReLU, the output layer is linear, and the loss is softmax
//! cross-entropy averaged over the batch. All kernels run single-threaded so
//! results are bit-reproducible.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dataset::{LabeledDataset, IMAGE_DIM, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::rng::{self, stream};

pub const HIDDEN: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub inputs: usize,
    pub hidden: usize,
    pub outputs: usize,
}

impl Layout {
    pub const MNIST: Layout = Layout {
        inputs: IMAGE_DIM,
        hidden: HIDDEN,
        outputs: NUM_CLASSES,
    };

    pub fn n_params(&self) -> usize {
        self.hidden * self.inputs + self.hidden + self.outputs * self.hidden + self.outputs
    }
}

/// Weights are row-major: `w1` is `hidden x inputs`, `w2` is `outputs x hidden`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParameters {
    pub layout: Layout,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl MlpParameters {
    pub fn zeros(layout: Layout) -> Self {
        Self {
            layout,
            w1: vec![0.0; layout.hidden * layout.inputs],
            b1: vec![0.0; layout.hidden],
            w2: vec![0.0; layout.outputs * layout.hidden],
            b2: vec![0.0; layout.outputs],
        }
    }

    /// Parameter tensors in a fixed order: w1, b1, w2, b2.
    pub fn tensors(&self) -> [&[f64]; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn tensors_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn check_shape(&self) -> Result<()> {
        let l = self.layout;
        let ok = self.w1.len() == l.hidden * l.inputs
            && self.b1.len() == l.hidden
            && self.w2.len() == l.outputs * l.hidden
            && self.b2.len() == l.outputs;
        if ok {
            Ok(())
        } else {
            Err(Error::Shape(format!("parameter tensors do not match {l:?}")))
        }
    }
}

/// Glorot-uniform weights, zero biases.
pub fn init_mlp(seed: u64) -> MlpParameters {
    init_with_layout(Layout::MNIST, seed)
}

pub fn init_with_layout(layout: Layout, seed: u64) -> MlpParameters {
    let mut rng = rng::seeded(seed, stream::INIT);
    let mut p = MlpParameters::zeros(layout);
    let a1 = (6.0 / (layout.inputs + layout.hidden) as f64).sqrt();
    for w in &mut p.w1 {
        *w = rng.random_range(-a1..a1);
    }
    let a2 = (6.0 / (layout.hidden + layout.outputs) as f64).sqrt();
    for w in &mut p.w2 {
        *w = rng.random_range(-a2..a2);
    }
    p
}

/// A contiguous batch of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub inputs: Vec<f64>,
    pub labels: Vec<u8>,
}

impl Batch {
    pub fn gather(dataset: &LabeledDataset, indices: &[usize]) -> Self {
        let mut inputs = Vec::with_capacity(indices.len() * dataset.dim());
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            inputs.extend_from_slice(dataset.sample(i));
            labels.push(dataset.label(i));
        }
        Self { inputs, labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

impl From<&LabeledDataset> for Batch {
    fn from(ds: &LabeledDataset) -> Self {
        Self {
            inputs: ds.features().to_vec(),
            labels: ds.labels().to_vec(),
        }
    }
}

/// `c = a · op(b)` for row-major `a` (m×k); `b` is k×n, or n×k when
/// `b_transposed`. `c` is m×n and overwritten.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], a_transposed: bool, b: &[f64], b_transposed: bool, c: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if a_transposed { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_transposed { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the strides above address exactly the m×k, k×n and m×n buffers
    // whose lengths are asserted in debug builds and guaranteed by callers.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

struct Activations {
    hidden: Vec<f64>,
    logits: Vec<f64>,
}

fn check_batch(params: &MlpParameters, batch: &Batch) -> Result<()> {
    params.check_shape()?;
    if batch.inputs.len() != batch.labels.len() * params.layout.inputs {
        return Err(Error::Shape(format!(
            "{} input values for {} samples of width {}",
            batch.inputs.len(),
            batch.labels.len(),
            params.layout.inputs
        )));
    }
    if let Some(&l) = batch.labels.iter().find(|&&l| l as usize >= params.layout.outputs) {
        return Err(Error::Shape(format!(
            "label {l} beyond {} outputs",
            params.layout.outputs
        )));
    }
    Ok(())
}

fn activations(params: &MlpParameters, inputs: &[f64], n: usize) -> Activations {
    let l = params.layout;
    let mut hidden = vec![0.0; n * l.hidden];
    gemm(n, l.inputs, l.hidden, inputs, false, &params.w1, true, &mut hidden);
    for row in hidden.chunks_exact_mut(l.hidden) {
        for (h, b) in row.iter_mut().zip(&params.b1) {
            *h = (*h + b).max(0.0);
        }
    }
    let mut logits = vec![0.0; n * l.outputs];
    gemm(n, l.hidden, l.outputs, &hidden, false, &params.w2, true, &mut logits);
    for row in logits.chunks_exact_mut(l.outputs) {
        for (z, b) in row.iter_mut().zip(&params.b2) {
            *z += b;
        }
    }
    Activations { hidden, logits }
}

/// Writes softmax probabilities into `row` and returns `-log p[label]`.
fn softmax_xent(row: &mut [f64], label: usize) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let shifted_label = row[label] - max;
    let mut sum = 0.0;
    for z in row.iter_mut() {
        *z = (*z - max).exp();
        sum += *z;
    }
    let loss = sum.ln() - shifted_label;
    for z in row.iter_mut() {
        *z /= sum;
    }
    loss
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    /// Row-major `n x outputs`.
    pub logits: Vec<f64>,
    pub loss: f64,
}

pub fn forward(params: &MlpParameters, batch: &Batch) -> Result<ForwardOutput> {
    check_batch(params, batch)?;
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let n = batch.len();
    let act = activations(params, &batch.inputs, n);
    let mut probs = act.logits.clone();
    let loss = probs
        .chunks_exact_mut(params.layout.outputs)
        .zip(&batch.labels)
        .map(|(row, &y)| softmax_xent(row, y as usize))
        .sum::<f64>()
        / n as f64;
    Ok(ForwardOutput {
        logits: act.logits,
        loss,
    })
}

/// Exact gradient of the mean loss, returned as a parameter-shaped value,
/// together with the loss itself.
pub fn gradients(params: &MlpParameters, batch: &Batch) -> Result<(MlpParameters, f64)> {
    check_batch(params, batch)?;
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let l = params.layout;
    let n = batch.len();
    let Activations { hidden, logits } = activations(params, &batch.inputs, n);

    // dL/dz = (softmax - onehot) / n
    let mut delta_out = logits;
    let mut loss = 0.0;
    for (row, &y) in delta_out.chunks_exact_mut(l.outputs).zip(&batch.labels) {
        loss += softmax_xent(row, y as usize);
        row[y as usize] -= 1.0;
        for d in row.iter_mut() {
            *d /= n as f64;
        }
    }
    loss /= n as f64;

    let mut grad = MlpParameters::zeros(l);
    gemm(l.outputs, n, l.hidden, &delta_out, true, &hidden, false, &mut grad.w2);
    for row in delta_out.chunks_exact(l.outputs) {
        for (g, d) in grad.b2.iter_mut().zip(row) {
            *g += d;
        }
    }

    let mut delta_hidden = vec![0.0; n * l.hidden];
    gemm(
        n,
        l.outputs,
        l.hidden,
        &delta_out,
        false,
        &params.w2,
        false,
        &mut delta_hidden,
    );
    for (d, h) in delta_hidden.iter_mut().zip(&hidden) {
        if *h <= 0.0 {
            *d = 0.0;
        }
    }
    gemm(
        l.hidden,
        n,
        l.inputs,
        &delta_hidden,
        true,
        &batch.inputs,
        false,
        &mut grad.w1,
    );
    for row in delta_hidden.chunks_exact(l.hidden) {
        for (g, d) in grad.b1.iter_mut().zip(row) {
            *g += d;
        }
    }
    Ok((grad, loss))
}

/// One plain SGD step on the mean loss. Returns the pre-step loss.
pub fn sgd_step(params: &mut MlpParameters, batch: &Batch, lr: f64) -> Result<f64> {
    let (grad, loss) = gradients(params, batch)?;
    for (p, g) in params.tensors_mut().into_iter().zip(grad.tensors()) {
        for (w, d) in p.iter_mut().zip(g) {
            *w -= lr * d;
        }
    }
    Ok(loss)
}

/// Weighted parameter mean with weights normalized to sum to one.
pub fn fedavg(models: &[MlpParameters], weights: &[f64]) -> Result<MlpParameters> {
    let Some(first) = models.first() else {
        return Err(Error::invalid("fedavg needs at least one model"));
    };
    if weights.len() != models.len() {
        return Err(Error::Shape(format!(
            "{} weights for {} models",
            weights.len(),
            models.len()
        )));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::invalid("fedavg weights must be finite and non-negative"));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::invalid("fedavg weights sum to zero"));
    }
    for m in models {
        m.check_shape()?;
        if m.layout != first.layout {
            return Err(Error::Shape("fedavg over models with different layouts".into()));
        }
    }

    let mut out = MlpParameters::zeros(first.layout);
    for (m, &w) in models.iter().zip(weights) {
        let frac = w / total;
        for (acc, src) in out.tensors_mut().into_iter().zip(m.tensors()) {
            for (a, s) in acc.iter_mut().zip(src) {
                *a += frac * s;
            }
        }
    }
    Ok(out)
}

/// Index of the largest logit, ties to the lowest class.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

const EVAL_CHUNK: usize = 512;

/// Accuracy on `testset` and mean loss over its first `probe` samples.
pub fn evaluate(params: &MlpParameters, testset: &LabeledDataset, probe: usize) -> Result<(f64, f64)> {
    if testset.is_empty() {
        return Err(Error::invalid("empty test set"));
    }
    params.check_shape()?;
    if testset.dim() != params.layout.inputs {
        return Err(Error::Shape(format!(
            "test samples of width {} for {} inputs",
            testset.dim(),
            params.layout.inputs
        )));
    }
    let l = params.layout;
    let probe = probe.min(testset.len());
    let mut correct = 0usize;
    let mut loss = 0.0;
    for start in (0..testset.len()).step_by(EVAL_CHUNK) {
        let end = (start + EVAL_CHUNK).min(testset.len());
        let inputs = &testset.features()[start * l.inputs..end * l.inputs];
        let mut logits = activations(params, inputs, end - start).logits;
        for (i, row) in logits.chunks_exact_mut(l.outputs).enumerate() {
            let y = testset.label(start + i) as usize;
            if argmax(row) == y {
                correct += 1;
            }
            if start + i < probe {
                loss += softmax_xent(row, y);
            }
        }
    }
    let probe_loss = if probe > 0 { loss / probe as f64 } else { f64::NAN };
    Ok((correct as f64 / testset.len() as f64, probe_loss))
}

pub fn evaluate_accuracy(params: &MlpParameters, testset: &LabeledDataset) -> Result<f64> {
    evaluate(params, testset, 0).map(|(acc, _)| acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TINY: Layout = Layout {
        inputs: 3,
        hidden: 2,
        outputs: 2,
    };

    fn tiny_params() -> MlpParameters {
        MlpParameters {
            layout: TINY,
            w1: vec![0.1, -0.2, 0.3, 0.5, 0.4, -0.1],
            b1: vec![0.05, -0.02],
            w2: vec![0.7, -0.3, -0.6, 0.2],
            b2: vec![0.01, 0.0],
        }
    }

    /// Straight-line scalar evaluation of the same network.
    #[allow(clippy::needless_range_loop)]
    fn scalar_loss(p: &MlpParameters, x: &[f64], y: usize) -> f64 {
        let mut h = [0.0; 2];
        for j in 0..2 {
            let mut s = p.b1[j];
            for i in 0..3 {
                s += p.w1[j * 3 + i] * x[i];
            }
            h[j] = if s > 0.0 { s } else { 0.0 };
        }
        let mut z = [0.0; 2];
        for o in 0..2 {
            z[o] = p.b2[o] + p.w2[o * 2] * h[0] + p.w2[o * 2 + 1] * h[1];
        }
        let lse = (z[0].exp() + z[1].exp()).ln();
        lse - z[y]
    }

    #[test]
    fn zero_params_give_ln10() {
        let p = MlpParameters::zeros(Layout::MNIST);
        let batch = Batch {
            inputs: vec![0.5; 2 * IMAGE_DIM],
            labels: vec![3, 9],
        };
        let out = forward(&p, &batch).unwrap();
        assert!((out.loss - 10f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn tiny_forward_matches_scalar() {
        let p = tiny_params();
        let x = [0.2, 0.9, 0.4];
        let batch = Batch {
            inputs: x.to_vec(),
            labels: vec![1],
        };
        let out = forward(&p, &batch).unwrap();
        assert!((out.loss - scalar_loss(&p, &x, 1)).abs() < 1e-15);
    }

    #[test]
    fn duplicating_sample_keeps_mean_loss() {
        let p = tiny_params();
        let one = Batch {
            inputs: vec![0.2, 0.9, 0.4],
            labels: vec![0],
        };
        let two = Batch {
            inputs: vec![0.2, 0.9, 0.4, 0.2, 0.9, 0.4],
            labels: vec![0, 0],
        };
        let a = forward(&p, &one).unwrap().loss;
        let b = forward(&p, &two).unwrap().loss;
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let p = tiny_params();
        let bad = Batch {
            inputs: vec![0.1; 4],
            labels: vec![0],
        };
        assert!(matches!(forward(&p, &bad), Err(Error::Shape(_))));
        let bad_label = Batch {
            inputs: vec![0.1; 3],
            labels: vec![5],
        };
        assert!(forward(&p, &bad_label).is_err());
    }

    #[test]
    fn init_bounds_and_determinism() {
        let a = init_mlp(3);
        assert_eq!(a, init_mlp(3));
        assert_ne!(a, init_mlp(4));
        assert!(a.b1.iter().chain(&a.b2).all(|&b| b == 0.0));
        let bound = (6.0f64 / 984.0).sqrt();
        assert!((bound - 0.0781).abs() < 1e-4);
        assert!(a.w1.iter().all(|w| w.abs() < bound));
        assert!(a.w2.iter().all(|w| w.abs() < (6.0f64 / 210.0).sqrt()));
    }

    #[test]
    fn zero_lr_is_identity() {
        let mut p = tiny_params();
        let before = p.clone();
        let batch = Batch {
            inputs: vec![0.2, 0.9, 0.4],
            labels: vec![1],
        };
        sgd_step(&mut p, &batch, 0.0).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn tiny_gradient_matches_central_differences() {
        let p = tiny_params();
        let x = [0.2, 0.9, 0.4];
        let batch = Batch {
            inputs: x.to_vec(),
            labels: vec![1],
        };
        let (g, _) = gradients(&p, &batch).unwrap();
        let eps = 1e-6;
        for t in 0..4 {
            for i in 0..p.tensors()[t].len() {
                let mut plus = p.clone();
                plus.tensors_mut()[t][i] += eps;
                let mut minus = p.clone();
                minus.tensors_mut()[t][i] -= eps;
                let fd = (scalar_loss(&plus, &x, 1) - scalar_loss(&minus, &x, 1)) / (2.0 * eps);
                let an = g.tensors()[t][i];
                assert!((fd - an).abs() < 1e-8, "tensor {t} index {i}: {fd} vs {an}");
            }
        }
    }

    #[test]
    fn fedavg_hand_cases() {
        let mk = |v: f64| MlpParameters {
            layout: Layout {
                inputs: 1,
                hidden: 1,
                outputs: 1,
            },
            w1: vec![v],
            b1: vec![v],
            w2: vec![v],
            b2: vec![v],
        };
        let avg = fedavg(&[mk(2.0), mk(6.0)], &[3.0, 1.0]).unwrap();
        assert_eq!(avg, mk(3.0));
        let mean = fedavg(&[mk(1.0), mk(4.0)], &[5.0, 5.0]).unwrap();
        assert_eq!(mean, mk(2.5));
        assert!(fedavg(&[mk(1.0)], &[0.0]).is_err());
        assert!(fedavg(&[], &[]).is_err());
        assert!(fedavg(&[mk(1.0)], &[1.0, 2.0]).is_err());
        assert!(fedavg(&[mk(1.0)], &[-1.0]).is_err());
    }

    #[test]
    fn argmax_ties_low() {
        assert_eq!(argmax(&[0.0, 0.0, 0.0]), 0);
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
    }

    #[test]
    fn accuracy_of_memorizing_model() {
        // one test sample with label 1; a bias-only model predicting 1
        let mut p = MlpParameters::zeros(TINY);
        p.b2 = vec![0.0, 1.0];
        let ds = LabeledDataset::new(vec![0.3, 0.3, 0.3], vec![1], 3).unwrap();
        assert_eq!(evaluate_accuracy(&p, &ds).unwrap(), 1.0);
        assert!(evaluate_accuracy(&p, &ds.head(0)).is_err());
    }
}
