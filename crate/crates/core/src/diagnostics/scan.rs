use crate::error::{Error, Result};
use crate::integrators::ForceField;
use crate::potentials::Potential;
use crate::rng::RngStream;
use crate::sampler::{run_trajectory, Sampler, TrajectoryInit};
use rayon::prelude::*;
use serde::Serialize;
use std::path::Path;

/// Grid of `(α, Ω)` cells, each swept over increasing `Δτ`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScanSpec {
    pub alphas: Vec<f64>,
    pub omegas: Vec<f64>,
    /// Tried in increasing order.
    pub dtaus: Vec<f64>,
    pub n_trajectories: u64,
    /// Steps at `Δτ = dtau0`; other `Δτ` run `n0·dtau0/Δτ` steps so every
    /// test covers the same virtual time.
    pub n0: u64,
    pub dtau0: f64,
    pub seed: u64,
    /// Threshold of the fixed-step reference scheme; cells below it are
    /// flagged as degraded.
    pub baseline: Option<f64>,
}

impl ScanSpec {
    pub fn steps_for(&self, dtau: f64) -> u64 {
        ((self.n0 as f64 * self.dtau0 / dtau).ceil() as u64).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.alphas.is_empty() || self.omegas.is_empty() || self.dtaus.is_empty() {
            return Err(Error::config("scan", "alpha, omega and dtau grids must be non-empty"));
        }
        if self.dtaus.windows(2).any(|w| !(w[1] > w[0])) || !(self.dtaus[0] > 0.0) {
            return Err(Error::config("scan.dtaus", "must be positive and increasing"));
        }
        if self.n_trajectories == 0 || self.n0 == 0 {
            return Err(Error::config("scan", "need at least one trajectory and one step"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanFlag {
    Stable,
    /// Stable somewhere, but below the reference threshold.
    Degraded,
    /// Diverges already at the smallest `Δτ`.
    HighlyUnstable,
}

impl ScanFlag {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Stable => "stable",
            Self::Degraded => "degraded",
            Self::HighlyUnstable => "highly_unstable",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScanCell {
    pub alpha: f64,
    pub omega: f64,
    /// Largest `⟨Δt⟩` among the `Δτ` values with no divergence.
    pub max_mean_dt: Option<f64>,
    pub flag: ScanFlag,
    /// `(Δτ, ⟨Δt⟩, diverged)` for each tested value.
    pub tested: Vec<(f64, f64, bool)>,
    /// Stable `Δτ` values above an unstable one (stochastic boundary noise).
    pub monotonicity_violations: usize,
}

/// Outcome of one ensemble at fixed sampler settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnsembleStability {
    pub mean_dt: f64,
    pub diverged: bool,
}

/// Runs up to `n_trajectories` chains of `n_steps`, stopping at the first
/// divergence.
pub fn ensemble_stability(
    sampler: &Sampler,
    model: &dyn Potential,
    init: &TrajectoryInit,
    n_trajectories: u64,
    n_steps: u64,
    seed: u64,
) -> Result<EnsembleStability> {
    let (mut t, mut steps) = (0.0, 0u64);
    for traj in 0..n_trajectories {
        let mut forces = ForceField::exact(model);
        let mut rng = RngStream::new(seed, traj);
        let rep = run_trajectory(sampler, init, &mut forces, &mut rng, n_steps, u64::MAX, |_| {})?;
        t += rep.t_phys;
        steps += rep.steps;
        if rep.diverged_at.is_some() {
            return Ok(EnsembleStability {
                mean_dt: t / steps.max(1) as f64,
                diverged: true,
            });
        }
    }
    Ok(EnsembleStability {
        mean_dt: t / steps as f64,
        diverged: false,
    })
}

/// Stop sweeping a cell after this many consecutive unstable `Δτ` values.
const MAX_CONSECUTIVE_FAILURES: usize = 2;

/// Stability threshold per `(α, Ω)` cell. `make(α, Ω, Δτ)` builds the
/// sampler for one test; cells run in parallel on the rayon pool.
pub fn stability_scan<F>(
    spec: &ScanSpec,
    model: &dyn Potential,
    init: &TrajectoryInit,
    make: F,
) -> Result<Vec<ScanCell>>
where
    F: Fn(f64, f64, f64) -> Result<Sampler> + Sync,
{
    spec.validate()?;
    let cells: Vec<(f64, f64)> = spec
        .alphas
        .iter()
        .flat_map(|&a| spec.omegas.iter().map(move |&o| (a, o)))
        .collect();
    cells
        .par_iter()
        .map(|&(alpha, omega)| {
            let mut tested = Vec::new();
            let mut failures = 0;
            for &dtau in &spec.dtaus {
                let sampler = make(alpha, omega, dtau)?;
                let r = ensemble_stability(
                    &sampler,
                    model,
                    init,
                    spec.n_trajectories,
                    spec.steps_for(dtau),
                    spec.seed,
                )?;
                tested.push((dtau, r.mean_dt, r.diverged));
                failures = if r.diverged { failures + 1 } else { 0 };
                if failures >= MAX_CONSECUTIVE_FAILURES {
                    break;
                }
            }
            Ok(summarize(alpha, omega, tested, spec.baseline))
        })
        .collect()
}

fn summarize(alpha: f64, omega: f64, tested: Vec<(f64, f64, bool)>, baseline: Option<f64>) -> ScanCell {
    let max_mean_dt = tested
        .iter()
        .filter(|t| !t.2)
        .map(|t| t.1)
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))));
    let first_fail = tested.iter().position(|t| t.2);
    let monotonicity_violations = first_fail.map_or(0, |i| tested[i..].iter().filter(|t| !t.2).count());
    let flag = match (tested.first(), max_mean_dt) {
        (Some(first), _) if first.2 => ScanFlag::HighlyUnstable,
        (_, Some(m)) if baseline.is_some_and(|b| m < b) => ScanFlag::Degraded,
        _ => ScanFlag::Stable,
    };
    ScanCell {
        alpha,
        omega,
        max_mean_dt,
        flag,
        tested,
        monotonicity_violations,
    }
}

/// Columns `alpha, omega, max_mean_dt, flag`; an empty threshold means no
/// stable `Δτ` was found.
pub fn write_scan_csv(cells: &[ScanCell], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["alpha", "omega", "max_mean_dt", "flag"])?;
    for c in cells {
        w.write_record([
            format!("{}", c.alpha),
            format!("{}", c.omega),
            c.max_mean_dt.map(|v| format!("{v:.16e}")).unwrap_or_default(),
            c.flag.as_str().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
