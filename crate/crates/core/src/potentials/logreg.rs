//! Bayesian logistic regression with a Gaussian prior, plus minibatch
//! gradients for the stochastic-gradient experiments.

use super::{MinibatchSpec, Potential};
use crate::error::Result;
use crate::rng::RngStream;
use std::path::Path;

/// Negative log-posterior `Σ_i log(1 + exp(−y_i a_i·w)) + (λ/2)‖w‖²` with
/// labels `y_i ∈ {−1, +1}`.
#[derive(Clone, Debug)]
pub struct LogisticRegression {
    dim: usize,
    /// Row-major `n × dim`.
    features: Vec<f64>,
    labels: Vec<f64>,
    prior_precision: f64,
}

pub const DEFAULT_PRIOR_PRECISION: f64 = 1.0;

#[inline]
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl LogisticRegression {
    /// Panics if `features.len() != labels.len() * dim` or a label is not ±1.
    pub fn from_data(dim: usize, features: Vec<f64>, labels: Vec<f64>) -> Self {
        assert!(dim > 0 && !labels.is_empty());
        assert_eq!(features.len(), labels.len() * dim, "feature matrix shape");
        assert!(labels.iter().all(|&y| y == 1.0 || y == -1.0), "labels must be ±1");
        Self {
            dim,
            features,
            labels,
            prior_precision: DEFAULT_PRIOR_PRECISION,
        }
    }

    pub fn with_prior_precision(mut self, lambda: f64) -> Self {
        self.prior_precision = lambda;
        self
    }

    pub fn prior_precision(&self) -> f64 {
        self.prior_precision
    }

    pub fn n_data(&self) -> usize {
        self.labels.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    /// Adds `scale · ∇ℓ_i(w)` to `out`.
    #[inline]
    pub fn add_datum_gradient(&self, i: usize, w: &[f64], scale: f64, out: &mut [f64]) {
        let a = self.row(i);
        let y = self.labels[i];
        let margin: f64 = a.iter().zip(w).map(|(ai, wi)| ai * wi).sum();
        let coef = -scale * y * sigmoid(-y * margin);
        for (o, ai) in out.iter_mut().zip(a) {
            *o += coef * ai;
        }
    }

    /// Writes the prior gradient `λw` into `out`.
    pub fn prior_gradient_into(&self, w: &[f64], out: &mut [f64]) {
        for (o, wi) in out.iter_mut().zip(w) {
            *o = self.prior_precision * wi;
        }
    }

    /// Fraction of data points whose label matches the sign of `a·w`.
    pub fn accuracy(&self, w: &[f64]) -> f64 {
        let hits = (0..self.n_data())
            .filter(|&i| {
                let m: f64 = self.row(i).iter().zip(w).map(|(a, b)| a * b).sum();
                m * self.labels[i] > 0.0
            })
            .count();
        hits as f64 / self.n_data() as f64
    }

    /// Dumps the dataset as CSV with columns `feature_0, …, label`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = (0..self.dim).map(|j| format!("feature_{j}")).collect();
        header.push("label".into());
        w.write_record(&header)?;
        for i in 0..self.n_data() {
            let mut rec: Vec<String> = self.row(i).iter().map(|v| format!("{v:.17e}")).collect();
            rec.push(format!("{}", self.labels[i] as i32));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

impl Potential for LogisticRegression {
    fn name(&self) -> &str {
        "logreg"
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn energy(&self, w: &[f64]) -> f64 {
        let nll: f64 = (0..self.n_data())
            .map(|i| {
                let m: f64 = self.row(i).iter().zip(w).map(|(a, b)| a * b).sum();
                softplus(-self.labels[i] * m)
            })
            .sum();
        nll + 0.5 * self.prior_precision * w.iter().map(|v| v * v).sum::<f64>()
    }
    fn gradient_into(&self, w: &[f64], out: &mut [f64]) {
        self.prior_gradient_into(w, out);
        for i in 0..self.n_data() {
            self.add_datum_gradient(i, w, 1.0, out);
        }
    }
    fn as_data_model(&self) -> Option<&LogisticRegression> {
        Some(self)
    }
}

/// Two Gaussian blobs with unit covariance and centers `±(separation/2)·u`,
/// `u = (1, …, 1)/√dim`. Labels alternate `+1, −1, +1, …`.
pub fn make_synthetic_logreg(n_samples: usize, dim: usize, separation: f64, seed: u64) -> LogisticRegression {
    let mut rng = RngStream::new(seed, 0);
    let offset = 0.5 * separation / (dim as f64).sqrt();
    let mut features = Vec::with_capacity(n_samples * dim);
    let mut labels = Vec::with_capacity(n_samples);
    let mut noise = vec![0.0; dim];
    for i in 0..n_samples {
        let y = if i % 2 == 0 { 1.0 } else { -1.0 };
        rng.fill_normal(&mut noise);
        features.extend(noise.iter().map(|z| y * offset + z));
        labels.push(y);
    }
    LogisticRegression::from_data(dim, features, labels)
}

/// Draws minibatches and evaluates the unbiased gradient estimate
/// `(N_D/B)·Σ_{i∈batch} ∇ℓ_i + ∇(prior)`.
///
/// Sampling without replacement uses a partial Fisher–Yates shuffle over a
/// persistent permutation, so each call draws a uniformly random subset.
#[derive(Clone, Debug)]
pub struct Minibatcher {
    spec: MinibatchSpec,
    perm: Vec<usize>,
}

impl Minibatcher {
    pub fn new(spec: MinibatchSpec) -> Self {
        Self {
            spec,
            perm: (0..spec.dataset_size).collect(),
        }
    }

    pub fn spec(&self) -> MinibatchSpec {
        self.spec
    }

    pub fn set_batch_size(&mut self, batch_size: usize) {
        debug_assert!(batch_size >= 1 && batch_size <= self.spec.dataset_size);
        self.spec.batch_size = batch_size;
    }

    pub fn gradient_into(&mut self, model: &LogisticRegression, w: &[f64], rng: &mut RngStream, out: &mut [f64]) {
        if self.spec.is_full_batch() {
            model.gradient_into(w, out);
            return;
        }
        let n = self.spec.dataset_size;
        let b = self.spec.batch_size;
        let scale = n as f64 / b as f64;
        model.prior_gradient_into(w, out);
        if self.spec.with_replacement {
            for _ in 0..b {
                let i = rng.index_below(n);
                model.add_datum_gradient(i, w, scale, out);
            }
        } else {
            for k in 0..b {
                let j = k + rng.index_below(n - k);
                self.perm.swap(k, j);
                model.add_datum_gradient(self.perm[k], w, scale, out);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::{gradient, stochastic_gradient};

    #[test]
    fn synthetic_dataset_is_reproducible() {
        let a = make_synthetic_logreg(40, 3, 1.5, 99);
        let b = make_synthetic_logreg(40, 3, 1.5, 99);
        assert_eq!(a.features, b.features);
        assert_eq!(a.labels, b.labels);
        let c = make_synthetic_logreg(40, 3, 1.5, 100);
        assert_ne!(a.features, c.features);
    }

    #[test]
    fn full_batch_equals_exact_gradient() {
        let m = make_synthetic_logreg(64, 4, 2.0, 1);
        let w = [0.3, -0.2, 0.5, 1.0];
        let spec = MinibatchSpec::new(64, 64, false).unwrap();
        let mut rng = RngStream::new(0, 0);
        let sg = stochastic_gradient(&m, &w, &spec, &mut rng).unwrap();
        assert_eq!(sg, gradient(&m, &w).unwrap());
    }

    #[test]
    fn single_datum_batch_of_one_equals_gradient() {
        let m = LogisticRegression::from_data(2, vec![0.7, -1.3], vec![1.0]);
        let w = [0.4, 0.1];
        let exact = gradient(&m, &w).unwrap();
        for replacement in [false, true] {
            let spec = MinibatchSpec::new(1, 1, replacement).unwrap();
            let mut rng = RngStream::new(3, 0);
            let sg = stochastic_gradient(&m, &w, &spec, &mut rng).unwrap();
            for (a, b) in sg.iter().zip(&exact) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn stochastic_gradient_is_unbiased() {
        let m = make_synthetic_logreg(200, 3, 2.0, 5);
        let w = [0.5, -0.4, 0.2];
        let exact = gradient(&m, &w).unwrap();
        for replacement in [false, true] {
            let spec = MinibatchSpec::new(200, 5, replacement).unwrap();
            let mut batcher = Minibatcher::new(spec);
            let mut rng = RngStream::new(17, replacement as u64);
            let draws = 100_000;
            let mut sum = [0.0; 3];
            let mut sumsq = [0.0; 3];
            let mut g = vec![0.0; 3];
            for _ in 0..draws {
                batcher.gradient_into(&m, &w, &mut rng, &mut g);
                for j in 0..3 {
                    sum[j] += g[j];
                    sumsq[j] += g[j] * g[j];
                }
            }
            for j in 0..3 {
                let mean = sum[j] / draws as f64;
                let var = sumsq[j] / draws as f64 - mean * mean;
                let se = (var / draws as f64).sqrt();
                assert!(
                    (mean - exact[j]).abs() < 3.0 * se,
                    "component {j}: mean {mean} exact {} se {se}",
                    exact[j]
                );
            }
        }
    }

    #[test]
    fn symmetric_features_leave_prior_only_gradient_at_zero() {
        // features ±1 with a shared label: likelihood terms cancel at w = 0
        let m = LogisticRegression::from_data(1, vec![1.0, -1.0], vec![1.0, 1.0]);
        assert_eq!(gradient(&m, &[0.0]).unwrap(), vec![0.0]);
        // opposite labels on the same point cancel as well
        let m = LogisticRegression::from_data(1, vec![0.8, 0.8], vec![1.0, -1.0]);
        assert_eq!(gradient(&m, &[0.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn zero_separation_mode_near_origin() {
        let m = make_synthetic_logreg(400, 3, 0.0, 11);
        // plain gradient descent as the optimizer oracle
        let mut w = vec![1.0, -1.0, 1.0];
        let mut g = vec![0.0; 3];
        for _ in 0..5_000 {
            m.gradient_into(&w, &mut g);
            for (wi, gi) in w.iter_mut().zip(&g) {
                *wi -= 1e-3 * gi;
            }
        }
        m.gradient_into(&w, &mut g);
        assert!(g.iter().map(|v| v * v).sum::<f64>().sqrt() < 1e-6);
        let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm < 0.5, "mode norm {norm}");
    }

    #[test]
    fn csv_dump_has_header_and_rows() {
        let m = make_synthetic_logreg(5, 2, 1.0, 0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        m.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "feature_0,feature_1,label");
        assert_eq!(lines.count(), 5);
    }
}
