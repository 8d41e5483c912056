use super::{AugmentedState, ForceField, LangevinParams};
use crate::rng::RngStream;
use serde::{Deserialize, Serialize};

/// Drift: `x ← x + dt·p`.
#[inline]
pub fn step_a(state: &mut AugmentedState, dt: f64) {
    for (x, p) in state.x.iter_mut().zip(&state.p) {
        *x += dt * p;
    }
}

/// Kick with the cached gradient: `p ← p − dt·∇U(x)`.
#[inline]
pub fn step_b(state: &mut AugmentedState, dt: f64) {
    for (p, g) in state.p.iter_mut().zip(&state.grad) {
        *p -= dt * g;
    }
}

/// Exact Ornstein–Uhlenbeck update `p ← c p + √((1−c²)T) ξ`, `c = e^{−γ dt}`.
///
/// Normals are drawn in Box–Muller pairs; for odd dimension the last sine
/// value is discarded, matching [`RngStream::fill_normal`].
#[inline]
pub fn step_o(state: &mut AugmentedState, dt: f64, params: &LangevinParams, rng: &mut RngStream) {
    let c = (-params.gamma * dt).exp();
    // 1 − c² = −expm1(−2γ dt), accurate for small γ dt
    let sigma = (-(-2.0 * params.gamma * dt).exp_m1() * params.temperature).sqrt();
    let mut chunks = state.p.chunks_exact_mut(2);
    for pair in &mut chunks {
        let (z0, z1) = rng.normal_pair();
        pair[0] = c * pair[0] + sigma * z0;
        pair[1] = c * pair[1] + sigma * z1;
    }
    if let [last] = chunks.into_remainder() {
        let (z0, _) = rng.normal_pair();
        *last = c * *last + sigma * z0;
    }
}

/// One BAOAB step at stepsize `dt`, finishing with a gradient refresh.
pub fn baoab_step(
    state: &mut AugmentedState,
    dt: f64,
    params: &LangevinParams,
    forces: &mut ForceField<'_>,
    rng: &mut RngStream,
) {
    let h = 0.5 * dt;
    step_b(state, h);
    step_a(state, h);
    step_o(state, dt, params, rng);
    step_a(state, h);
    state.refresh_gradient(forces);
    step_b(state, h);
}

/// One OBABO step.
pub fn obabo_step(
    state: &mut AugmentedState,
    dt: f64,
    params: &LangevinParams,
    forces: &mut ForceField<'_>,
    rng: &mut RngStream,
) {
    let h = 0.5 * dt;
    step_o(state, h, params, rng);
    step_b(state, h);
    step_a(state, dt);
    state.refresh_gradient(forces);
    step_b(state, h);
    step_o(state, h, params, rng);
}

/// First-order scheme `p' = c p − dt∇U(x) + √((1−c²)T) ξ`, `x' = x + dt p`
/// (the drift uses the old momentum).
pub fn oba_step(
    state: &mut AugmentedState,
    dt: f64,
    params: &LangevinParams,
    forces: &mut ForceField<'_>,
    rng: &mut RngStream,
) {
    step_a(state, dt);
    // step_a already used the old p; the new p only needs the old gradient
    step_o(state, dt, params, rng);
    step_b(state, dt);
    state.refresh_gradient(forces);
}

/// Overdamped Euler–Maruyama `x' = x − dt∇U + √(2 dt T) ξ`. Momentum is
/// left untouched.
pub fn euler_maruyama_step(
    state: &mut AugmentedState,
    dt: f64,
    params: &LangevinParams,
    forces: &mut ForceField<'_>,
    rng: &mut RngStream,
) {
    let sigma = (2.0 * dt * params.temperature).sqrt();
    let d = state.x.len();
    let mut i = 0;
    while i < d {
        let (z0, z1) = rng.normal_pair();
        state.x[i] += -dt * state.grad[i] + sigma * z0;
        if i + 1 < d {
            state.x[i + 1] += -dt * state.grad[i + 1] + sigma * z1;
        }
        i += 2;
    }
    state.refresh_gradient(forces);
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseIntegrator {
    Baoab,
    Obabo,
    Oba,
    EulerMaruyama,
}

impl BaseIntegrator {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Baoab => "baoab",
            Self::Obabo => "obabo",
            Self::Oba => "oba",
            Self::EulerMaruyama => "euler_maruyama",
        }
    }

    #[inline]
    pub fn step(
        &self,
        state: &mut AugmentedState,
        dt: f64,
        params: &LangevinParams,
        forces: &mut ForceField<'_>,
        rng: &mut RngStream,
    ) {
        match self {
            Self::Baoab => baoab_step(state, dt, params, forces, rng),
            Self::Obabo => obabo_step(state, dt, params, forces, rng),
            Self::Oba => oba_step(state, dt, params, forces, rng),
            Self::EulerMaruyama => euler_maruyama_step(state, dt, params, forces, rng),
        }
    }
}
