//! Energy landscapes `U(x)` with analytic gradients.
//!
//! All models are immutable after construction and can be shared across
//! trajectory workers. The hot path uses the unchecked trait methods; the free
//! functions [`energy`], [`gradient`] and [`stochastic_gradient`] validate
//! dimensions first.

mod benchmarks;
mod logreg;

pub use benchmarks::{Beale, DoubleWell, EntropicBarrier, Funnel2d, Funnel9d, Quadratic, Star};
pub use logreg::{make_synthetic_logreg, LogisticRegression, Minibatcher};

use crate::error::{Error, Result};
use crate::rng::RngStream;
use serde::{Deserialize, Serialize};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

pub trait Potential: Send + Sync {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    fn energy(&self, x: &[f64]) -> f64;

    /// Writes `∇U(x)` into `out` (length `dim`).
    fn gradient_into(&self, x: &[f64], out: &mut [f64]);

    /// Log-density reported by the `log_posterior` observable. Defaults to
    /// `-U(x)`; models with a known normalization override it.
    fn log_posterior(&self, x: &[f64]) -> f64 {
        -self.energy(x)
    }

    /// Models whose energy decomposes as a sum over data points.
    fn as_data_model(&self) -> Option<&LogisticRegression> {
        None
    }
}

fn check_dim(model: &dyn Potential, x: &[f64]) -> Result<()> {
    if x.len() != model.dim() {
        return Err(Error::Dimension {
            expected: model.dim(),
            got: x.len(),
        });
    }
    Ok(())
}

pub fn energy(model: &dyn Potential, x: &[f64]) -> Result<f64> {
    check_dim(model, x)?;
    Ok(model.energy(x))
}

pub fn gradient(model: &dyn Potential, x: &[f64]) -> Result<Vec<f64>> {
    check_dim(model, x)?;
    let mut g = vec![0.0; model.dim()];
    model.gradient_into(x, &mut g);
    Ok(g)
}

/// Data-subsampling rule for stochastic gradients.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinibatchSpec {
    pub dataset_size: usize,
    pub batch_size: usize,
    /// Draw indices with replacement (otherwise a fresh subset per step).
    #[serde(default)]
    pub with_replacement: bool,
}

impl MinibatchSpec {
    pub fn new(dataset_size: usize, batch_size: usize, with_replacement: bool) -> Result<Self> {
        let spec = Self {
            dataset_size,
            batch_size,
            with_replacement,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dataset_size == 0 {
            return Err(Error::config("minibatch.dataset_size", "must be positive"));
        }
        if self.batch_size == 0 || self.batch_size > self.dataset_size {
            return Err(Error::config(
                "minibatch.batch_size",
                format!("must lie in 1..={}", self.dataset_size),
            ));
        }
        Ok(())
    }

    pub fn is_full_batch(&self) -> bool {
        self.batch_size == self.dataset_size && !self.with_replacement
    }
}

/// `(N_D/B)·Σ_{i∈batch} ∇ℓ_i(x) + ∇(prior)` for a freshly drawn batch.
pub fn stochastic_gradient(
    model: &dyn Potential,
    x: &[f64],
    batch: &MinibatchSpec,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    check_dim(model, x)?;
    let data = model.as_data_model().ok_or_else(|| {
        Error::Unsupported(format!(
            "potential `{}` has no data decomposition for stochastic gradients",
            model.name()
        ))
    })?;
    batch.validate()?;
    if batch.dataset_size != data.n_data() {
        return Err(Error::config(
            "minibatch.dataset_size",
            format!("model has {} data points", data.n_data()),
        ));
    }
    let mut batcher = Minibatcher::new(*batch);
    let mut g = vec![0.0; model.dim()];
    batcher.gradient_into(data, x, rng, &mut g);
    Ok(g)
}

/// Counts gradient evaluations of the wrapped model.
pub struct CountingPotential<P: ?Sized> {
    inner: Arc<P>,
    calls: AtomicU64,
}

impl<P: Potential + ?Sized> CountingPotential<P> {
    pub fn new(inner: Arc<P>) -> Self {
        Self {
            inner,
            calls: AtomicU64::new(0),
        }
    }

    pub fn gradient_calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.calls.store(0, Ordering::Relaxed);
    }
}

impl<P: Potential + ?Sized> Potential for CountingPotential<P> {
    fn name(&self) -> &str {
        self.inner.name()
    }
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn energy(&self, x: &[f64]) -> f64 {
        self.inner.energy(x)
    }
    fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.gradient_into(x, out)
    }
    fn log_posterior(&self, x: &[f64]) -> f64 {
        self.inner.log_posterior(x)
    }
    fn as_data_model(&self) -> Option<&LogisticRegression> {
        self.inner.as_data_model()
    }
}

pub const POTENTIAL_NAMES: &[&str] = &[
    "quadratic",
    "star",
    "double_well",
    "funnel2d",
    "funnel9d",
    "entropic",
    "beale",
    "logreg",
];

/// Potential selection as it appears in a run configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    pub name: String,
    /// Dimension for `quadratic`, feature count for `logreg`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, rename = "L", skip_serializing_if = "Option::is_none")]
    pub l: Option<f64>,
    /// Confinement strength of the 2D funnel.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// Number of latent `x_i` of the multi-dimensional funnel.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_latent: Option<usize>,
    /// Confining-prior variance of the multi-dimensional funnel.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub separation: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior_precision: Option<f64>,
}

impl PotentialSpec {
    pub fn named(name: &str) -> Self {
        Self {
            name: name.to_string(),
            dim: None,
            b: None,
            l: None,
            epsilon: None,
            n_latent: None,
            sigma2: None,
            n_samples: None,
            separation: None,
            data_seed: None,
            prior_precision: None,
        }
    }

    pub fn build(&self) -> Result<Arc<dyn Potential>> {
        let positive = |field: &str, v: f64| -> Result<f64> {
            if v.is_finite() && v > 0.0 {
                Ok(v)
            } else {
                Err(Error::config(
                    format!("potential.{field}"),
                    "must be positive and finite",
                ))
            }
        };
        let model: Arc<dyn Potential> = match self.name.as_str() {
            "quadratic" => {
                let d = self.dim.unwrap_or(1);
                if d == 0 {
                    return Err(Error::config("potential.dim", "must be positive"));
                }
                Arc::new(Quadratic::new(d))
            }
            "star" => Arc::new(Star),
            "double_well" => Arc::new(DoubleWell::new(
                positive("b", self.b.unwrap_or(DoubleWell::DEFAULT_B))?,
                positive("L", self.l.unwrap_or(DoubleWell::DEFAULT_L))?,
            )),
            "funnel2d" => Arc::new(Funnel2d::new(positive(
                "epsilon",
                self.epsilon.unwrap_or(Funnel2d::DEFAULT_EPSILON),
            )?)),
            "funnel9d" => {
                let n = self.n_latent.unwrap_or(Funnel9d::DEFAULT_LATENT);
                if n == 0 {
                    return Err(Error::config("potential.n_latent", "must be positive"));
                }
                Arc::new(Funnel9d::new(
                    n,
                    positive("sigma2", self.sigma2.unwrap_or(Funnel9d::DEFAULT_SIGMA2))?,
                ))
            }
            "entropic" => Arc::new(EntropicBarrier),
            "beale" => Arc::new(Beale),
            "logreg" => {
                let n = self.n_samples.unwrap_or(1000);
                let d = self.dim.unwrap_or(2);
                if n < 2 {
                    return Err(Error::config("potential.n_samples", "must be at least 2"));
                }
                if d == 0 {
                    return Err(Error::config("potential.dim", "must be positive"));
                }
                let mut model =
                    make_synthetic_logreg(n, d, self.separation.unwrap_or(2.0), self.data_seed.unwrap_or(0));
                if let Some(lambda) = self.prior_precision {
                    model = model.with_prior_precision(positive("prior_precision", lambda)?);
                }
                Arc::new(model)
            }
            other => {
                return Err(Error::UnknownName {
                    kind: "potential",
                    name: other.to_string(),
                    valid: POTENTIAL_NAMES.join(", "),
                })
            }
        };
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Central finite differences with step `h`.
    fn fd_gradient(model: &dyn Potential, x: &[f64], h: f64) -> Vec<f64> {
        let mut xp = x.to_vec();
        (0..x.len())
            .map(|i| {
                xp[i] = x[i] + h;
                let up = model.energy(&xp);
                xp[i] = x[i] - h;
                let down = model.energy(&xp);
                xp[i] = x[i];
                (up - down) / (2.0 * h)
            })
            .collect()
    }

    fn norm(v: &[f64]) -> f64 {
        v.iter().map(|a| a * a).sum::<f64>().sqrt()
    }

    fn check_fd(model: &dyn Potential, lo: &[f64], hi: &[f64], seed: u64) {
        let mut rng = RngStream::new(seed, 0);
        for _ in 0..100 {
            let x: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| a + (b - a) * rng.uniform()).collect();
            let g = gradient(model, &x).unwrap();
            assert_eq!(g.len(), model.dim());
            let fd = fd_gradient(model, &x, 1e-5);
            let diff: Vec<f64> = g.iter().zip(&fd).map(|(a, b)| a - b).collect();
            let rel = norm(&diff) / norm(&g).max(1.0);
            assert!(
                rel < 1e-5,
                "{}: rel err {rel} at {x:?} (g={g:?}, fd={fd:?})",
                model.name()
            );
            assert!(model.energy(&x).is_finite());
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        check_fd(&Quadratic::new(3), &[-3.0; 3], &[3.0; 3], 1);
        check_fd(&Star, &[-1.0, -1.0], &[1.0, 1.0], 2);
        check_fd(&DoubleWell::default(), &[-2.0], &[3.5], 3);
        check_fd(&Funnel2d::default(), &[-3.0, -4.0], &[3.0, 6.0], 4);
        check_fd(&Funnel9d::default(), &[-4.0; 9], &[4.0; 9], 5);
        check_fd(&EntropicBarrier, &[-4.0, -2.0], &[4.0, 2.0], 6);
        check_fd(&Beale, &[-4.0, -4.0], &[4.0, 4.0], 7);
        let lr = make_synthetic_logreg(50, 3, 2.0, 8);
        check_fd(&lr, &[-2.0; 3], &[2.0; 3], 8);
    }

    #[test]
    fn energy_examples() {
        assert_eq!(Star.energy(&[0.0, 0.0]), 0.0);
        assert_eq!(Star.energy(&[1.0, 1.0]), 1002.0);
        // first three squared terms vanish at (3, 1/2)
        let expected = 0.3 * (1e-5 * (3f64.powi(6) + 0.5f64.powi(6))).exp();
        assert!((Beale.energy(&[3.0, 0.5]) - 0.3021950).abs() < 1e-6);
        assert!((Beale.energy(&[3.0, 0.5]) - expected).abs() < 1e-15);
        assert_eq!(DoubleWell::new(1.5, 2.0).energy(&[-1.0]), 0.0);
    }

    #[test]
    fn gradient_examples() {
        assert_eq!(gradient(&Star, &[1.0, 1.0]).unwrap(), vec![2002.0, 2002.0]);
        for theta in [-3.0, 0.0, 2.5] {
            let g = gradient(&Funnel2d::default(), &[0.0, theta]).unwrap();
            assert_eq!(g[0], 0.0);
        }
        let x = [0.3, -1.2, 4.0];
        assert_eq!(gradient(&Quadratic::new(3), &x).unwrap(), x.to_vec());
    }

    #[test]
    fn dimension_mismatch_is_config_error() {
        assert!(matches!(
            energy(&Star, &[1.0]),
            Err(Error::Dimension { expected: 2, got: 1 })
        ));
        assert!(gradient(&Funnel9d::default(), &[0.0; 3]).is_err());
    }

    #[test]
    fn stochastic_gradient_requires_data_model() {
        let spec = MinibatchSpec::new(10, 2, false).unwrap();
        let mut rng = RngStream::new(0, 0);
        let err = stochastic_gradient(&Star, &[0.0, 0.0], &spec, &mut rng).unwrap_err();
        assert!(matches!(err, Error::Unsupported(_)));
    }

    #[test]
    fn counting_wrapper_counts() {
        let c = CountingPotential::new(Arc::new(Star));
        let mut g = [0.0; 2];
        c.gradient_into(&[1.0, 0.0], &mut g);
        c.gradient_into(&[1.0, 0.0], &mut g);
        let _ = c.energy(&[0.0, 0.0]);
        assert_eq!(c.gradient_calls(), 2);
    }

    #[test]
    fn registry_resolves_names() {
        for name in POTENTIAL_NAMES {
            let m = PotentialSpec::named(name).build().unwrap();
            assert!(m.dim() >= 1);
        }
        let err = PotentialSpec::named("rosenbrock").build().err().unwrap();
        assert!(err.to_string().contains("double_well"));
    }
}
