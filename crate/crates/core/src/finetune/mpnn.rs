use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::ToyGraphSample;
use crate::error::{Error, Result};

/// Message-passing network with mean aggregation over closed
/// neighbourhoods, `tanh` updates and a mean-pooled linear readout:
///
/// `H_k = tanh(Â H_{k-1} W_k + b_k)`, `logits = mean_i(H_K) R`,
///
/// where `Â` is `A + I` with rows scaled to sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyMpnn {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
    pub readout: Array2<f64>,
}

/// Output of [`ToyMpnn::forward`].
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    /// `H_1, ..., H_K`, each `n x d`.
    pub embeddings: Vec<Array2<f64>>,
    pub logits: Array1<f64>,
}

/// Everything the backward pass needs.
#[derive(Debug, Clone)]
pub(crate) struct Trace {
    pub agg: Array2<f64>,
    /// `H_0, ..., H_K`.
    pub hidden: Vec<Array2<f64>>,
    pub logits: Array1<f64>,
}

/// Row-normalised `A + I`.
pub fn mean_aggregator(sample: &ToyGraphSample) -> Array2<f64> {
    let mut a = sample.topology.adjacency_with_self_loops();
    for mut row in a.rows_mut() {
        let s = row.sum();
        row /= s;
    }
    a
}

impl ToyMpnn {
    pub fn zeros(layers: usize, width: usize, classes: usize) -> Self {
        Self {
            weights: vec![Array2::zeros((width, width)); layers],
            biases: vec![Array1::zeros(width); layers],
            readout: Array2::zeros((width, classes)),
        }
    }

    /// Gaussian weights with variance `1 / width`, zero biases.
    pub fn random<R: Rng + ?Sized>(layers: usize, width: usize, classes: usize, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, 1.0 / (width as f64).sqrt()).expect("valid std");
        let mut draw = |shape: (usize, usize)| Array2::from_shape_simple_fn(shape, || normal.sample(rng));
        let weights = (0..layers).map(|_| draw((width, width))).collect();
        let readout = draw((width, classes));
        Self { weights, biases: vec![Array1::zeros(width); layers], readout }
    }

    pub fn layers(&self) -> usize {
        self.weights.len()
    }

    pub fn width(&self) -> usize {
        self.readout.nrows()
    }

    pub fn classes(&self) -> usize {
        self.readout.ncols()
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
            + self.readout.len()
    }

    /// All parameters in a fixed order: weights, biases, readout.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for w in &self.weights {
            out.extend(w.iter());
        }
        for b in &self.biases {
            out.extend(b.iter());
        }
        out.extend(self.readout.iter());
        out
    }

    /// Inverse of [`ToyMpnn::to_flat`], reusing this model's shapes.
    pub fn with_flat(&self, flat: &[f64]) -> Result<Self> {
        if flat.len() != self.parameter_count() {
            return Err(Error::DimensionMismatch(format!(
                "{} parameters for a model with {}",
                flat.len(),
                self.parameter_count()
            )));
        }
        let mut out = self.clone();
        let mut it = flat.iter().copied();
        for w in &mut out.weights {
            w.iter_mut().for_each(|x| *x = it.next().expect("length checked"));
        }
        for b in &mut out.biases {
            b.iter_mut().for_each(|x| *x = it.next().expect("length checked"));
        }
        out.readout.iter_mut().for_each(|x| *x = it.next().expect("length checked"));
        Ok(out)
    }

    /// `self += alpha * other`.
    pub fn scaled_add(&mut self, alpha: f64, other: &ToyMpnn) {
        for (w, o) in self.weights.iter_mut().zip(&other.weights) {
            w.scaled_add(alpha, o);
        }
        for (b, o) in self.biases.iter_mut().zip(&other.biases) {
            b.scaled_add(alpha, o);
        }
        self.readout.scaled_add(alpha, &other.readout);
    }

    /// Euclidean norm of the difference of all parameters.
    pub fn distance(&self, other: &ToyMpnn) -> f64 {
        self.to_flat().iter().zip(other.to_flat()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
    }

    fn check_sample(&self, sample: &ToyGraphSample) -> Result<()> {
        let (n, d) = sample.node_features.dim();
        if d != self.width() {
            return Err(Error::DimensionMismatch(format!("features have width {d}, model expects {}", self.width())));
        }
        if n != sample.topology.n {
            return Err(Error::DimensionMismatch(format!(
                "{n} feature rows for {} vertices",
                sample.topology.n
            )));
        }
        if sample.label >= self.classes() {
            return Err(Error::DimensionMismatch(format!(
                "label {} for {} classes",
                sample.label,
                self.classes()
            )));
        }
        Ok(())
    }

    pub(crate) fn trace(&self, sample: &ToyGraphSample) -> Result<Trace> {
        self.check_sample(sample)?;
        let agg = mean_aggregator(sample);
        let mut hidden = vec![sample.node_features.clone()];
        for (w, b) in self.weights.iter().zip(&self.biases) {
            let z = agg.dot(hidden.last().expect("nonempty")).dot(w) + b;
            hidden.push(z.mapv(f64::tanh));
        }
        let pooled = hidden.last().expect("nonempty").mean_axis(Axis(0)).expect("at least one vertex");
        let logits = pooled.dot(&self.readout);
        Ok(Trace { agg, hidden, logits })
    }

    pub fn forward(&self, sample: &ToyGraphSample) -> Result<Forward> {
        let t = self.trace(sample)?;
        Ok(Forward { embeddings: t.hidden[1..].to_vec(), logits: t.logits })
    }

    /// Parameter gradient given the logit gradient and optional extra
    /// gradients on `H_k` (keyed by embedding index `k - 1`).
    pub(crate) fn backward(&self, t: &Trace, dlogits: &Array1<f64>, extra: &[(usize, Array2<f64>)]) -> ToyMpnn {
        let k = self.layers();
        let n = t.agg.nrows() as f64;
        let mut grad = ToyMpnn::zeros(k, self.width(), self.classes());
        let pooled = t.hidden[k].mean_axis(Axis(0)).expect("at least one vertex");
        grad.readout = outer(&pooled, dlogits);
        let row = self.readout.dot(dlogits) / n;
        let mut dh = Array2::from_shape_fn(t.hidden[k].dim(), |(_, j)| row[j]);
        for layer in (0..k).rev() {
            for (idx, g) in extra {
                if *idx == layer {
                    dh += g;
                }
            }
            let h = &t.hidden[layer + 1];
            let dz = &dh * &h.mapv(|x| 1.0 - x * x);
            let aggregated = t.agg.dot(&t.hidden[layer]);
            grad.weights[layer] = aggregated.t().dot(&dz);
            grad.biases[layer] = dz.sum_axis(Axis(0));
            dh = t.agg.t().dot(&dz.dot(&self.weights[layer].t()));
        }
        grad
    }
}

fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    Array2::from_shape_fn((a.len(), b.len()), |(i, j)| a[i] * b[j])
}
