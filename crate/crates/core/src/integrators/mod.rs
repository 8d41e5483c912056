//! Splitting integrators for Langevin dynamics and their time-rescaled
//! adaptive versions.
//!
//! The state carries the gradient at the current position. Every scheme here
//! refreshes it exactly once per step (after the last position update), and
//! both the next step's leading kick and the monitor function reuse it, so a
//! step costs one gradient evaluation.

mod adaptive;
mod splitting;

pub use adaptive::{baoabz_step, zbaoab_step, zbaoabz_step, zphiz_wrap, AdaptiveScheme, StepOutcome, ZPlacement};
pub use splitting::{baoab_step, euler_maruyama_step, oba_step, obabo_step, step_a, step_b, step_o, BaseIntegrator};

use crate::adaptivity::MonitorFunction;
use crate::error::{Error, Result};
use crate::potentials::{LogisticRegression, MinibatchSpec, Minibatcher, Potential};
use crate::rng::RngStream;
use serde::{Deserialize, Serialize};

/// Friction `γ`, temperature `T = β⁻¹` and virtual stepsize `Δτ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LangevinParams {
    pub gamma: f64,
    pub temperature: f64,
    pub dtau: f64,
}

impl LangevinParams {
    pub fn new(gamma: f64, temperature: f64, dtau: f64) -> Result<Self> {
        let check = |field: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::config(field, "must be positive and finite"))
            }
        };
        check("langevin.gamma", gamma)?;
        check("langevin.temperature", temperature)?;
        check("run.dtau", dtau)?;
        Ok(Self {
            gamma,
            temperature,
            dtau,
        })
    }
}

/// Thresholds that mark a trajectory as diverged.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DivergenceCriteria {
    pub max_position_norm: f64,
    pub max_energy: f64,
    /// Evaluating `U` each step doubles the cost for data-sum models; the
    /// driver turns this off for them.
    pub check_energy: bool,
}

impl Default for DivergenceCriteria {
    fn default() -> Self {
        Self {
            max_position_norm: 1e8,
            max_energy: 1e12,
            check_energy: true,
        }
    }
}

/// Position, momentum, control variable and physical-time bookkeeping of one
/// trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedState {
    pub x: Vec<f64>,
    pub p: Vec<f64>,
    pub zeta: f64,
    pub t_phys: f64,
    pub step_count: u64,
    /// Gradient at `x` (possibly a minibatch estimate).
    pub grad: Vec<f64>,
    pub diverged_at: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZetaInit {
    /// `ζ₀ = 0`, so the first stepsize is `MΔτ`.
    Zero,
    /// `ζ₀ = g(x₀, p₀)`.
    Monitor,
}

impl AugmentedState {
    /// Builds the initial state and evaluates the first gradient.
    pub fn new(
        x0: Vec<f64>,
        p0: Vec<f64>,
        forces: &mut ForceField<'_>,
        zeta_init: ZetaInit,
        monitor: &MonitorFunction,
    ) -> Result<Self> {
        let d = forces.model().dim();
        if x0.len() != d {
            return Err(Error::config(
                "init.x",
                format!("expected {d} components, got {}", x0.len()),
            ));
        }
        if p0.len() != d {
            return Err(Error::config(
                "init.p",
                format!("expected {d} components, got {}", p0.len()),
            ));
        }
        let mut grad = vec![0.0; d];
        forces.eval(&x0, 0, &mut grad);
        let zeta = match zeta_init {
            ZetaInit::Zero => 0.0,
            ZetaInit::Monitor => monitor.eval(&grad, &p0),
        };
        if !(zeta >= 0.0 && zeta.is_finite()) {
            return Err(Error::config("init.x", "monitor is not finite at x₀"));
        }
        Ok(Self {
            x: x0,
            p: p0,
            zeta,
            t_phys: 0.0,
            step_count: 0,
            grad,
            diverged_at: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn is_diverged(&self) -> bool {
        self.diverged_at.is_some()
    }

    /// Re-evaluates the cached gradient at the current position.
    #[inline]
    pub fn refresh_gradient(&mut self, forces: &mut ForceField<'_>) {
        forces.eval(&self.x, self.step_count, &mut self.grad);
    }

    /// Flags the trajectory as diverged if the state left the admissible
    /// region. Returns `true` if diverged.
    pub fn check_divergence(&mut self, model: &dyn Potential, criteria: &DivergenceCriteria) -> bool {
        if self.diverged_at.is_some() {
            return true;
        }
        let mut norm_sq = 0.0;
        let mut finite = self.zeta.is_finite();
        for i in 0..self.x.len() {
            let (x, p, g) = (self.x[i], self.p[i], self.grad[i]);
            finite &= x.is_finite() && p.is_finite() && g.is_finite();
            norm_sq += x * x;
        }
        let mut bad = !finite || !(norm_sq <= criteria.max_position_norm * criteria.max_position_norm);
        if !bad && criteria.check_energy {
            let u = model.energy(&self.x);
            bad = !(u <= criteria.max_energy);
        }
        if bad {
            self.diverged_at = Some(self.step_count);
        }
        bad
    }
}

/// Batch size as a function of the step index.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BatchSchedule {
    Constant {
        batch_size: usize,
    },
    /// Cycles through `sizes`, switching every `period` steps.
    Alternating {
        sizes: Vec<usize>,
        period: u64,
    },
}

impl BatchSchedule {
    pub fn batch_size_at(&self, step: u64) -> usize {
        match self {
            Self::Constant { batch_size } => *batch_size,
            Self::Alternating { sizes, period } => sizes[((step / period.max(&1)) % sizes.len() as u64) as usize],
        }
    }

    pub fn validate(&self, dataset_size: usize) -> Result<()> {
        let ok = |b: usize| b >= 1 && b <= dataset_size;
        match self {
            Self::Constant { batch_size } if ok(*batch_size) => Ok(()),
            Self::Alternating { sizes, period } if !sizes.is_empty() && *period > 0 && sizes.iter().all(|&b| ok(b)) => {
                Ok(())
            }
            _ => Err(Error::config(
                "minibatch",
                format!("batch sizes must lie in 1..={dataset_size} and period must be positive"),
            )),
        }
    }
}

struct BatchDriver<'a> {
    data: &'a LogisticRegression,
    batcher: Minibatcher,
    schedule: BatchSchedule,
    rng: RngStream,
}

/// Gradient provider for one trajectory: the exact gradient, or a minibatch
/// estimate drawn from a dedicated random stream.
pub struct ForceField<'a> {
    model: &'a dyn Potential,
    batch: Option<BatchDriver<'a>>,
    evaluations: u64,
}

/// Lane of [`RngStream::substream`] reserved for minibatch selection.
pub const MINIBATCH_LANE: u64 = 1;

impl<'a> ForceField<'a> {
    pub fn exact(model: &'a dyn Potential) -> Self {
        Self {
            model,
            batch: None,
            evaluations: 0,
        }
    }

    /// Stochastic gradients following `schedule`. Batch indices come from
    /// `rng` so the Langevin noise sequence is unaffected by the batch size.
    pub fn minibatch(
        model: &'a dyn Potential,
        schedule: BatchSchedule,
        with_replacement: bool,
        rng: RngStream,
    ) -> Result<Self> {
        let data = model.as_data_model().ok_or_else(|| {
            Error::Unsupported(format!(
                "potential `{}` does not support minibatch gradients",
                model.name()
            ))
        })?;
        schedule.validate(data.n_data())?;
        let spec = MinibatchSpec::new(data.n_data(), schedule.batch_size_at(0), with_replacement)?;
        Ok(Self {
            model,
            batch: Some(BatchDriver {
                data,
                batcher: Minibatcher::new(spec),
                schedule,
                rng,
            }),
            evaluations: 0,
        })
    }

    pub fn model(&self) -> &'a dyn Potential {
        self.model
    }

    pub fn evaluations(&self) -> u64 {
        self.evaluations
    }

    #[inline]
    pub fn eval(&mut self, x: &[f64], step: u64, out: &mut [f64]) {
        self.evaluations += 1;
        match &mut self.batch {
            None => self.model.gradient_into(x, out),
            Some(b) => {
                let size = b.schedule.batch_size_at(step);
                if size != b.batcher.spec().batch_size {
                    b.batcher.set_batch_size(size);
                }
                b.batcher.gradient_into(b.data, x, &mut b.rng, out);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adaptivity::SundmanKernel;
    use crate::potentials::{CountingPotential, Quadratic, Star};
    use std::sync::Arc;

    fn params(dtau: f64) -> LangevinParams {
        LangevinParams::new(1.0, 1.0, dtau).unwrap()
    }

    fn state(model: &dyn Potential, x0: Vec<f64>, zeta: ZetaInit, mon: &MonitorFunction) -> AugmentedState {
        let d = x0.len();
        let mut forces = ForceField::exact(model);
        AugmentedState::new(x0, vec![0.0; d], &mut forces, zeta, mon).unwrap()
    }

    #[test]
    fn constant_kernel_reproduces_baoab_bitwise() {
        let model = Star;
        let mon = MonitorFunction::force_norm_power(1.0, 2.0).unwrap();
        let scheme = AdaptiveScheme::new(SundmanKernel::constant(1.0).unwrap(), mon, 1.0, 0.01).unwrap();
        let p = params(0.01);
        let mut a = state(&model, vec![0.3, -0.2], ZetaInit::Monitor, &mon);
        let mut b = a.clone();
        let (mut fa, mut fb) = (ForceField::exact(&model), ForceField::exact(&model));
        let (mut ra, mut rb) = (RngStream::new(7, 0), RngStream::new(7, 0));
        for _ in 0..1000 {
            let out = zbaoabz_step(&mut a, &scheme, &p, &mut fa, &mut ra);
            assert_eq!(out.weight, 1.0);
            baoab_step(&mut b, 0.01, &p, &mut fb, &mut rb);
        }
        assert_eq!(a.x, b.x);
        assert_eq!(a.p, b.p);
    }

    #[test]
    fn one_gradient_per_step() {
        let counted = CountingPotential::new(Arc::new(Quadratic::new(3)));
        let mon = MonitorFunction::force_norm_power(1.0, 2.0).unwrap();
        let scheme = AdaptiveScheme::new(SundmanKernel::psi1(0.1, 10.0, 0.5).unwrap(), mon, 1.0, 0.01).unwrap();
        let p = params(0.01);
        let mut forces = ForceField::exact(&counted);
        let mut s = AugmentedState::new(vec![1.0; 3], vec![0.0; 3], &mut forces, ZetaInit::Monitor, &mon).unwrap();
        counted.reset();
        let mut rng = RngStream::new(1, 0);
        for placement in [ZPlacement::Symmetric, ZPlacement::Leading, ZPlacement::Trailing] {
            for base in [
                BaseIntegrator::Baoab,
                BaseIntegrator::Obabo,
                BaseIntegrator::Oba,
                BaseIntegrator::EulerMaruyama,
            ] {
                let before = counted.gradient_calls();
                for _ in 0..100 {
                    zphiz_wrap(base, placement, &mut s, &scheme, &p, &mut forces, &mut rng);
                }
                assert_eq!(counted.gradient_calls() - before, 100, "{base:?} {placement:?}");
            }
        }
    }

    #[test]
    fn physical_time_is_sum_of_stepsizes() {
        let model = Star;
        let mon = MonitorFunction::force_norm_power(1.0, 1.0).unwrap();
        let scheme = AdaptiveScheme::new(SundmanKernel::psi2(0.01, 2.0, 0.5).unwrap(), mon, 0.5, 0.02).unwrap();
        let p = params(0.02);
        let mut s = state(&model, vec![1.0, 1.0], ZetaInit::Zero, &mon);
        let mut forces = ForceField::exact(&model);
        let mut rng = RngStream::new(3, 0);
        let mut total = 0.0;
        for n in 1..=500 {
            let out = zbaoabz_step(&mut s, &scheme, &p, &mut forces, &mut rng);
            assert!(out.dt >= 0.01 * 0.02 && out.dt <= 2.0 * 0.02);
            assert!(s.zeta >= 0.0);
            total += out.dt;
            assert_eq!(s.step_count, n);
        }
        assert!((s.t_phys - total).abs() <= 1e-12 * total);
    }

    #[test]
    fn first_stepsize_from_zero_zeta_is_upper_bound() {
        // ζ₀ = 0 and a zero monitor keep ζ at 0, so Δt = MΔτ throughout
        let model = Quadratic::new(1);
        let mon = MonitorFunction::zero();
        let scheme = AdaptiveScheme::new(SundmanKernel::psi1(0.1, 10.0, 1.0).unwrap(), mon, 1.0, 0.01).unwrap();
        let mut s = state(&model, vec![0.5], ZetaInit::Zero, &mon);
        let mut forces = ForceField::exact(&model);
        let mut rng = RngStream::new(0, 0);
        let out = zbaoabz_step(&mut s, &scheme, &params(0.01), &mut forces, &mut rng);
        assert!((out.dt - 0.1).abs() < 1e-15);
        assert!((out.weight - 10.0).abs() < 1e-12);
    }

    #[test]
    fn leading_and_trailing_share_the_stepsize_recursion() {
        // trailing started from ζ₁ = Φ(ζ₀, g(x₀)) replays leading started from ζ₀
        let model = Star;
        let mon = MonitorFunction::force_norm_power(2.0, 1.0).unwrap();
        let scheme = AdaptiveScheme::new(SundmanKernel::psi1(0.05, 5.0, 0.5).unwrap(), mon, 2.0, 0.01).unwrap();
        let p = params(0.01);
        let mut lead = state(&model, vec![0.7, 0.2], ZetaInit::Monitor, &mon);
        let mut trail = lead.clone();
        trail.zeta = scheme.relax.full_step(lead.zeta, mon.eval(&lead.grad, &lead.p));
        let (mut fa, mut fb) = (ForceField::exact(&model), ForceField::exact(&model));
        let (mut ra, mut rb) = (RngStream::new(5, 2), RngStream::new(5, 2));
        for _ in 0..300 {
            let a = zbaoab_step(&mut lead, &scheme, &p, &mut fa, &mut ra);
            let b = baoabz_step(&mut trail, &scheme, &p, &mut fb, &mut rb);
            assert_eq!(a.dt, b.dt);
        }
        assert_eq!(lead.x, trail.x);
    }

    fn long_run_variance(base: BaseIntegrator, dt: f64, steps: usize) -> f64 {
        let model = Quadratic::new(1);
        let mon = MonitorFunction::zero();
        let p = params(dt);
        let mut s = state(&model, vec![0.0], ZetaInit::Zero, &mon);
        let mut forces = ForceField::exact(&model);
        let mut rng = RngStream::new(11, 0);
        let mut acc = 0.0;
        for _ in 0..steps {
            base.step(&mut s, dt, &p, &mut forces, &mut rng);
            acc += s.x[0] * s.x[0];
        }
        acc / steps as f64
    }

    #[test]
    fn baoab_is_exact_for_harmonic_configurations() {
        // BAOAB's invariant x-marginal is exactly N(0, T) for U = x²/2
        let v = long_run_variance(BaseIntegrator::Baoab, 0.8, 400_000);
        assert!((v - 1.0).abs() < 0.03, "variance {v}");
    }

    #[test]
    fn euler_maruyama_variance_matches_closed_form() {
        // x' = (1−h)x + √(2h)ξ has stationary variance 2/(2−h)
        let h = 0.2;
        let v = long_run_variance(BaseIntegrator::EulerMaruyama, h, 400_000);
        assert!((v - 2.0 / (2.0 - h)).abs() < 0.03, "variance {v}");
    }

    #[test]
    fn stepsize_shrinks_where_forces_are_large() {
        let model = Star;
        let mon = MonitorFunction::force_norm_power(1.0, 1.0).unwrap();
        let scheme = AdaptiveScheme::new(SundmanKernel::psi1(0.1, 10.0, 0.5).unwrap(), mon, 1e6, 0.01).unwrap();
        let p = params(0.01);
        let mut dts = Vec::new();
        for r in [0.1, 0.5, 1.0, 2.0] {
            let mut s = state(&model, vec![r, r], ZetaInit::Monitor, &mon);
            let mut forces = ForceField::exact(&model);
            let mut rng = RngStream::new(0, 0);
            dts.push(zbaoab_step(&mut s, &scheme, &p, &mut forces, &mut rng).dt);
        }
        assert!(dts.windows(2).all(|w| w[1] < w[0]), "{dts:?}");
    }

    #[test]
    fn divergence_is_flagged() {
        let model = Quadratic::new(2);
        let mon = MonitorFunction::zero();
        let mut s = state(&model, vec![0.0, 0.0], ZetaInit::Zero, &mon);
        let crit = DivergenceCriteria::default();
        assert!(!s.check_divergence(&model, &crit));
        s.x[1] = f64::NAN;
        s.step_count = 9;
        assert!(s.check_divergence(&model, &crit));
        assert_eq!(s.diverged_at, Some(9));
        let mut s = state(&model, vec![2e6, 0.0], ZetaInit::Zero, &mon);
        // U = 2e12 exceeds the energy threshold before the norm threshold
        assert!(s.check_divergence(&model, &crit));
    }

    #[test]
    fn batch_schedule_alternates() {
        let sched = BatchSchedule::Alternating {
            sizes: vec![10, 100],
            period: 3,
        };
        let got: Vec<usize> = (0..8).map(|n| sched.batch_size_at(n)).collect();
        assert_eq!(got, vec![10, 10, 10, 100, 100, 100, 10, 10]);
        assert!(sched.validate(50).is_err());
        assert!(sched.validate(100).is_ok());
    }

    #[test]
    fn minibatch_forces_need_data_model() {
        let model = Quadratic::new(2);
        let r = ForceField::minibatch(
            &model,
            BatchSchedule::Constant { batch_size: 1 },
            false,
            RngStream::new(0, 0),
        );
        assert!(matches!(r, Err(Error::Unsupported(_))));
    }
}
