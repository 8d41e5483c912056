//! Trajectory driver: runs one chain of a chosen scheme and streams weighted
//! samples to a caller-provided sink.

use crate::adaptivity::MonitorFunction;
use crate::error::Result;
use crate::integrators::{
    zphiz_wrap, AdaptiveScheme, AugmentedState, BaseIntegrator, DivergenceCriteria, ForceField, LangevinParams,
    StepOutcome, ZPlacement, ZetaInit,
};
use crate::rng::RngStream;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Scheme {
    /// Base integrator at the fixed stepsize `Δτ`, unit weights.
    Fixed(BaseIntegrator),
    Adaptive {
        base: BaseIntegrator,
        placement: ZPlacement,
        scheme: AdaptiveScheme,
    },
}

impl Scheme {
    pub fn label(&self) -> String {
        match self {
            Self::Fixed(b) => b.name().to_string(),
            Self::Adaptive {
                base: BaseIntegrator::Baoab,
                placement,
                ..
            } => match placement {
                ZPlacement::Symmetric => "zbaoabz".into(),
                ZPlacement::Leading => "zbaoab".into(),
                ZPlacement::Trailing => "baoabz".into(),
            },
            Self::Adaptive { base, .. } => format!("zphiz:{}", base.name()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sampler {
    pub scheme: Scheme,
    pub params: LangevinParams,
    pub divergence: DivergenceCriteria,
}

impl Sampler {
    pub fn new(scheme: Scheme, params: LangevinParams) -> Self {
        Self {
            scheme,
            params,
            divergence: DivergenceCriteria::default(),
        }
    }

    pub fn monitor(&self) -> MonitorFunction {
        match &self.scheme {
            Scheme::Fixed(_) => MonitorFunction::zero(),
            Scheme::Adaptive { scheme, .. } => scheme.monitor,
        }
    }

    pub fn weight(&self, zeta: f64) -> f64 {
        match &self.scheme {
            Scheme::Fixed(_) => 1.0,
            Scheme::Adaptive { scheme, .. } => scheme.weight(zeta),
        }
    }

    /// Advances one step and checks for divergence.
    #[inline]
    pub fn step(&self, state: &mut AugmentedState, forces: &mut ForceField<'_>, rng: &mut RngStream) -> StepOutcome {
        let out = match &self.scheme {
            Scheme::Fixed(base) => {
                let dt = self.params.dtau;
                base.step(state, dt, &self.params, forces, rng);
                state.t_phys += dt;
                state.step_count += 1;
                StepOutcome { dt, weight: 1.0 }
            }
            Scheme::Adaptive {
                base,
                placement,
                scheme,
            } => zphiz_wrap(*base, *placement, state, scheme, &self.params, forces, rng),
        };
        if state.check_divergence(forces.model(), &self.divergence) {
            return StepOutcome {
                dt: out.dt,
                weight: 0.0,
            };
        }
        out
    }
}

/// Read-only view of a recorded sample.
#[derive(Clone, Copy, Debug)]
pub struct SampleView<'s> {
    pub step: u64,
    pub t_phys: f64,
    pub weight: f64,
    /// Stepsize of the step that produced this sample (0 for the initial state).
    pub dt: f64,
    pub zeta: f64,
    pub x: &'s [f64],
    pub p: &'s [f64],
    pub grad: &'s [f64],
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrajectoryReport {
    pub steps: u64,
    pub t_phys: f64,
    pub diverged_at: Option<u64>,
    /// Including the initial evaluation.
    pub gradient_evaluations: u64,
    pub dt_min: f64,
    pub dt_max: f64,
}

impl TrajectoryReport {
    pub fn mean_dt(&self) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            self.t_phys / self.steps as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryInit {
    pub x0: Vec<f64>,
    pub p0: Vec<f64>,
    pub zeta: ZetaInit,
}

/// Runs `n_steps` steps, handing the initial state and every
/// `record_every`-th state to `sink`. Stops early on divergence.
pub fn run_trajectory(
    sampler: &Sampler,
    init: &TrajectoryInit,
    forces: &mut ForceField<'_>,
    rng: &mut RngStream,
    n_steps: u64,
    record_every: u64,
    mut sink: impl FnMut(&SampleView<'_>),
) -> Result<TrajectoryReport> {
    let record_every = record_every.max(1);
    let mut state = AugmentedState::new(init.x0.clone(), init.p0.clone(), forces, init.zeta, &sampler.monitor())?;
    let mut report = TrajectoryReport {
        dt_min: f64::INFINITY,
        dt_max: 0.0,
        ..Default::default()
    };
    sink(&view(&state, sampler.weight(state.zeta), 0.0));
    for _ in 0..n_steps {
        let out = sampler.step(&mut state, forces, rng);
        if state.is_diverged() {
            break;
        }
        report.dt_min = report.dt_min.min(out.dt);
        report.dt_max = report.dt_max.max(out.dt);
        if state.step_count % record_every == 0 {
            sink(&view(&state, out.weight, out.dt));
        }
    }
    report.steps = state.step_count;
    report.t_phys = state.t_phys;
    report.diverged_at = state.diverged_at;
    report.gradient_evaluations = forces.evaluations();
    if report.steps == 0 {
        report.dt_min = 0.0;
    }
    Ok(report)
}

fn view(state: &AugmentedState, weight: f64, dt: f64) -> SampleView<'_> {
    SampleView {
        step: state.step_count,
        t_phys: state.t_phys,
        weight,
        dt,
        zeta: state.zeta,
        x: &state.x,
        p: &state.p,
        grad: &state.grad,
    }
}
