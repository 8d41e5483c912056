use super::{AugmentedState, BaseIntegrator, ForceField, LangevinParams};
use crate::adaptivity::{MonitorFunction, SundmanKernel, ZetaRelaxation};
use crate::error::Result;
use crate::rng::RngStream;
use serde::{Deserialize, Serialize};

/// Kernel, monitor and relaxation flow that together set the stepsize.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdaptiveScheme {
    pub kernel: SundmanKernel,
    pub monitor: MonitorFunction,
    pub relax: ZetaRelaxation,
}

impl AdaptiveScheme {
    pub fn new(kernel: SundmanKernel, monitor: MonitorFunction, alpha: f64, dtau: f64) -> Result<Self> {
        Ok(Self {
            kernel,
            monitor,
            relax: ZetaRelaxation::new(alpha, dtau)?,
        })
    }

    pub fn dtau(&self) -> f64 {
        self.relax.dtau
    }

    /// Weight of a state with control variable `zeta`.
    #[inline]
    pub fn weight(&self, zeta: f64) -> f64 {
        self.kernel.eval(zeta)
    }
}

/// Where the `ζ` update sits relative to the base step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZPlacement {
    /// Half update before and half after (symmetric).
    Symmetric,
    /// Full update before the step.
    Leading,
    /// Full update after the step.
    Trailing,
}

/// Result of one step: the physical stepsize used and the weight of the new
/// sample. A diverged step reports `weight = 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    pub dt: f64,
    pub weight: f64,
}

#[inline]
fn monitor_at(state: &mut AugmentedState, scheme: &AdaptiveScheme) -> Option<f64> {
    let g = scheme.monitor.eval(&state.grad, &state.p);
    if g.is_finite() {
        Some(g)
    } else {
        state.diverged_at = Some(state.step_count);
        None
    }
}

const DIVERGED: StepOutcome = StepOutcome { dt: 0.0, weight: 0.0 };

/// Generic adaptive step around `base` with the `ζ` update placed according
/// to `placement`. Costs exactly one gradient evaluation (inside the base
/// step); the monitor reuses the cached gradient.
pub fn zphiz_wrap(
    base: BaseIntegrator,
    placement: ZPlacement,
    state: &mut AugmentedState,
    scheme: &AdaptiveScheme,
    params: &LangevinParams,
    forces: &mut ForceField<'_>,
    rng: &mut RngStream,
) -> StepOutcome {
    let relax = &scheme.relax;
    match placement {
        ZPlacement::Symmetric => {
            let Some(g) = monitor_at(state, scheme) else {
                return DIVERGED;
            };
            state.zeta = relax.half_step(state.zeta, g);
        }
        ZPlacement::Leading => {
            let Some(g) = monitor_at(state, scheme) else {
                return DIVERGED;
            };
            state.zeta = relax.full_step(state.zeta, g);
        }
        ZPlacement::Trailing => {}
    }
    let dt = scheme.kernel.eval(state.zeta) * scheme.dtau();
    base.step(state, dt, params, forces, rng);
    state.t_phys += dt;
    state.step_count += 1;
    match placement {
        ZPlacement::Symmetric => {
            let Some(g) = monitor_at(state, scheme) else {
                return DIVERGED;
            };
            state.zeta = relax.half_step(state.zeta, g);
        }
        ZPlacement::Trailing => {
            let Some(g) = monitor_at(state, scheme) else {
                return DIVERGED;
            };
            state.zeta = relax.full_step(state.zeta, g);
        }
        ZPlacement::Leading => {}
    }
    StepOutcome {
        dt,
        weight: scheme.weight(state.zeta),
    }
}

/// Symmetric adaptive BAOAB.
pub fn zbaoabz_step(
    state: &mut AugmentedState,
    scheme: &AdaptiveScheme,
    params: &LangevinParams,
    forces: &mut ForceField<'_>,
    rng: &mut RngStream,
) -> StepOutcome {
    zphiz_wrap(
        BaseIntegrator::Baoab,
        ZPlacement::Symmetric,
        state,
        scheme,
        params,
        forces,
        rng,
    )
}

/// Full `ζ` update, then BAOAB; the weight is the kernel of the `ζ` that set
/// the stepsize.
pub fn zbaoab_step(
    state: &mut AugmentedState,
    scheme: &AdaptiveScheme,
    params: &LangevinParams,
    forces: &mut ForceField<'_>,
    rng: &mut RngStream,
) -> StepOutcome {
    zphiz_wrap(
        BaseIntegrator::Baoab,
        ZPlacement::Leading,
        state,
        scheme,
        params,
        forces,
        rng,
    )
}

/// BAOAB with the current `ζ`, then a full `ζ` update at the new position.
pub fn baoabz_step(
    state: &mut AugmentedState,
    scheme: &AdaptiveScheme,
    params: &LangevinParams,
    forces: &mut ForceField<'_>,
    rng: &mut RngStream,
) -> StepOutcome {
    zphiz_wrap(
        BaseIntegrator::Baoab,
        ZPlacement::Trailing,
        state,
        scheme,
        params,
        forces,
        rng,
    )
}
