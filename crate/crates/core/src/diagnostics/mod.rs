//! Ground-truth oracles, weak-order measurement, autocorrelation and
//! effective sample size on non-uniform time grids, and stability scans.

mod acf;
mod quadrature;
mod scan;

pub use acf::{
    acf_from_grid, acf_uniform, autocorrelation, ess_per_sample, fit_decay_rate, integrated_autocorrelation_time,
    interpolate_uniform, AcfResult, UniformResampler,
};
pub use quadrature::{gauss_legendre, quadrature_expectation, QuadratureOracle, PANEL_ORDER};
pub use scan::{ensemble_stability, stability_scan, write_scan_csv, EnsembleStability, ScanCell, ScanFlag, ScanSpec};

use crate::error::{Error, Result};
use serde::Serialize;

/// Power-law fit `error ≈ C·Δτ^slope`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeakOrderFit {
    pub slope: f64,
    pub log_prefactor: f64,
    pub dtaus: Vec<f64>,
    pub errors: Vec<f64>,
}

impl WeakOrderFit {
    /// Error at the largest `Δτ` exceeds the error at the smallest.
    pub fn is_monotone(&self) -> bool {
        let (mut lo, mut hi) = (0, 0);
        for i in 0..self.dtaus.len() {
            if self.dtaus[i] < self.dtaus[lo] {
                lo = i;
            }
            if self.dtaus[i] > self.dtaus[hi] {
                hi = i;
            }
        }
        self.errors[hi] > self.errors[lo]
    }
}

/// Least-squares slope of `log(error)` against `log(Δτ)`.
pub fn fit_weak_order(dtaus: &[f64], errors: &[f64]) -> Result<WeakOrderFit> {
    if dtaus.len() != errors.len() {
        return Err(Error::Dimension {
            expected: dtaus.len(),
            got: errors.len(),
        });
    }
    if dtaus.len() < 4 {
        return Err(Error::Diagnostic(format!(
            "need at least 4 stepsizes, got {}",
            dtaus.len()
        )));
    }
    if dtaus.iter().chain(errors).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::Diagnostic(
            "stepsizes and errors must be positive and finite".into(),
        ));
    }
    let pts: Vec<(f64, f64)> = dtaus.iter().zip(errors).map(|(h, e)| (h.ln(), e.ln())).collect();
    let (slope, log_prefactor) = acf::least_squares(&pts)?;
    Ok(WeakOrderFit {
        slope,
        log_prefactor,
        dtaus: dtaus.to_vec(),
        errors: errors.to_vec(),
    })
}

/// Runs `estimate(Δτ)` for each stepsize, which returns one absolute error
/// per observable (or `None` if the configuration diverged), and fits a
/// slope per observable. Diverged stepsizes are excluded and listed in the
/// second return value.
pub fn measure_weak_order<F>(
    dtaus: &[f64],
    n_observables: usize,
    mut estimate: F,
) -> Result<(Vec<WeakOrderFit>, Vec<f64>)>
where
    F: FnMut(f64) -> Result<Option<Vec<f64>>>,
{
    let mut kept = Vec::new();
    let mut errors = vec![Vec::new(); n_observables];
    let mut excluded = Vec::new();
    for &h in dtaus {
        match estimate(h)? {
            Some(errs) => {
                if errs.len() != n_observables {
                    return Err(Error::Dimension {
                        expected: n_observables,
                        got: errs.len(),
                    });
                }
                kept.push(h);
                for (e, v) in errors.iter_mut().zip(errs) {
                    e.push(v);
                }
            }
            None => excluded.push(h),
        }
    }
    let fits = errors
        .iter()
        .map(|e| fit_weak_order(&kept, e))
        .collect::<Result<Vec<_>>>()?;
    Ok((fits, excluded))
}
