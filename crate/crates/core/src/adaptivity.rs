//! Stepsize control: Sundman kernels `ψ(ζ)`, the monitor function `g`, and
//! the exact flow of the relaxation `dζ/dτ = −αζ + g(x, p)` at fixed `(x, p)`.
//!
//! The physical stepsize of one integrator step is `Δt = ψ(ζ)·Δτ` where `Δτ`
//! is the fixed virtual stepsize. `ζ` is an exponentially weighted moving
//! average of `g` with rate `α`, so large recent forces shrink `Δt`.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelVariant {
    Psi1,
    Psi2,
    AdamRaw,
    Constant,
}

/// Bounded decreasing map `ζ ↦ ψ(ζ)`.
///
/// * `psi1`: `m(ζ^r + M)/(ζ^r + m)`
/// * `psi2`: `m(ζ^r + M/m)/(ζ^r + 1)`
/// * `adam_raw`: `1/√(ζ + ε)` (unbounded above as `ε → 0`)
/// * `constant`: `c`, which disables adaptivity
///
/// Both filtered kernels satisfy `ψ(0) = M`, `ψ(∞) = m` and `m < ψ ≤ M`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SundmanKernel {
    Psi1 { m: f64, big_m: f64, r: f64 },
    Psi2 { m: f64, big_m: f64, r: f64 },
    AdamRaw { epsilon: f64 },
    Constant { value: f64 },
}

impl SundmanKernel {
    pub fn psi1(m: f64, big_m: f64, r: f64) -> Result<Self> {
        check_bounds(m, big_m, r)?;
        Ok(Self::Psi1 { m, big_m, r })
    }

    pub fn psi2(m: f64, big_m: f64, r: f64) -> Result<Self> {
        check_bounds(m, big_m, r)?;
        Ok(Self::Psi2 { m, big_m, r })
    }

    pub fn adam_raw(epsilon: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::config("kernel.epsilon", "must be positive"));
        }
        Ok(Self::AdamRaw { epsilon })
    }

    pub fn constant(value: f64) -> Result<Self> {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::config("kernel.value", "must be positive"));
        }
        Ok(Self::Constant { value })
    }

    pub fn variant(&self) -> KernelVariant {
        match self {
            Self::Psi1 { .. } => KernelVariant::Psi1,
            Self::Psi2 { .. } => KernelVariant::Psi2,
            Self::AdamRaw { .. } => KernelVariant::AdamRaw,
            Self::Constant { .. } => KernelVariant::Constant,
        }
    }

    /// `(m, M)` for the filtered kernels; `None` for kernels without
    /// stepsize bounds.
    pub fn bounds(&self) -> Option<(f64, f64)> {
        match *self {
            Self::Psi1 { m, big_m, .. } | Self::Psi2 { m, big_m, .. } => Some((m, big_m)),
            Self::Constant { value } => Some((value, value)),
            Self::AdamRaw { .. } => None,
        }
    }

    /// Panics on negative `ζ`: the relaxation flow keeps `ζ ≥ 0`, so a
    /// negative value means the integrator is broken.
    #[inline]
    pub fn eval(&self, zeta: f64) -> f64 {
        assert!(zeta >= 0.0, "negative control variable ζ = {zeta}");
        match *self {
            Self::Psi1 { m, big_m, r } => {
                let z = zeta.powf(r);
                if z.is_infinite() {
                    m
                } else {
                    m * (z + big_m) / (z + m)
                }
            }
            Self::Psi2 { m, big_m, r } => {
                let z = zeta.powf(r);
                if z.is_infinite() {
                    m
                } else {
                    (m * z + big_m) / (z + 1.0)
                }
            }
            Self::AdamRaw { epsilon } => 1.0 / (zeta + epsilon).sqrt(),
            Self::Constant { value } => value,
        }
    }
}

fn check_bounds(m: f64, big_m: f64, r: f64) -> Result<()> {
    if !(m.is_finite() && m > 0.0) {
        return Err(Error::config("kernel.m", "must be positive"));
    }
    if !(big_m.is_finite() && big_m > m) {
        return Err(Error::config("kernel.M", "must be finite and exceed kernel.m"));
    }
    if !(r.is_finite() && r > 0.0) {
        return Err(Error::config("kernel.r", "must be positive"));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MonitorMode {
    ForceNormPower,
    Zero,
}

/// `g(x, p) = Ω⁻¹‖∇U(x)‖^s`, or identically zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MonitorFunction {
    pub omega: f64,
    pub s: f64,
    pub mode: MonitorMode,
}

impl MonitorFunction {
    pub fn force_norm_power(omega: f64, s: f64) -> Result<Self> {
        if !(omega > 0.0) || omega.is_nan() {
            return Err(Error::config("monitor.omega", "must be positive"));
        }
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::config("monitor.s", "must be positive"));
        }
        Ok(Self {
            omega,
            s,
            mode: MonitorMode::ForceNormPower,
        })
    }

    pub fn zero() -> Self {
        Self {
            omega: 1.0,
            s: 1.0,
            mode: MonitorMode::Zero,
        }
    }

    /// The momentum is accepted for generality; the force-norm monitor
    /// ignores it. A non-finite gradient yields a non-finite value, which the
    /// trajectory driver treats as divergence.
    #[inline]
    pub fn eval(&self, grad: &[f64], _p: &[f64]) -> f64 {
        match self.mode {
            MonitorMode::Zero => 0.0,
            MonitorMode::ForceNormPower => {
                let sq: f64 = grad.iter().map(|g| g * g).sum();
                let value = if self.s == 2.0 {
                    sq
                } else if self.s == 1.0 {
                    sq.sqrt()
                } else {
                    sq.powf(0.5 * self.s)
                };
                value / self.omega
            }
        }
    }
}

/// Exact solution of `dζ/dτ = −αζ + g` over a fraction `a` of `Δτ` with `g`
/// frozen: `ρ^a ζ + α⁻¹(1 − ρ^a) g`, `ρ = exp(−αΔτ)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ZetaRelaxation {
    pub alpha: f64,
    pub dtau: f64,
    rho: f64,
    rho_half: f64,
    gain: f64,
    gain_half: f64,
}

impl ZetaRelaxation {
    pub fn new(alpha: f64, dtau: f64) -> Result<Self> {
        if !(alpha > 0.0) || alpha.is_nan() {
            return Err(Error::config("relax.alpha", "must be positive"));
        }
        if !(dtau.is_finite() && dtau > 0.0) {
            return Err(Error::config("run.dtau", "must be positive"));
        }
        Ok(Self {
            alpha,
            dtau,
            rho: (-alpha * dtau).exp(),
            rho_half: (-0.5 * alpha * dtau).exp(),
            gain: Self::gain_for(alpha, dtau, 1.0),
            gain_half: Self::gain_for(alpha, dtau, 0.5),
        })
    }

    /// `α⁻¹(1 − ρ^a)`, computed with `expm1` so the `α → 0` limit `aΔτ` is
    /// accurate.
    fn gain_for(alpha: f64, dtau: f64, a: f64) -> f64 {
        if alpha.is_infinite() {
            return 0.0;
        }
        -(-alpha * dtau * a).exp_m1() / alpha
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    #[inline]
    pub fn step(&self, zeta: f64, g: f64, a: f64) -> f64 {
        if a == 0.5 {
            self.half_step(zeta, g)
        } else if a == 1.0 {
            self.full_step(zeta, g)
        } else {
            self.rho.powf(a) * zeta + Self::gain_for(self.alpha, self.dtau, a) * g
        }
    }

    #[inline]
    pub fn half_step(&self, zeta: f64, g: f64) -> f64 {
        self.rho_half * zeta + self.gain_half * g
    }

    #[inline]
    pub fn full_step(&self, zeta: f64, g: f64) -> f64 {
        self.rho * zeta + self.gain * g
    }
}

/// `Φ̂^Z_a` as a free function.
pub fn zeta_step(relax: &ZetaRelaxation, zeta: f64, g_val: f64, a: f64) -> f64 {
    debug_assert!(zeta >= 0.0 && g_val >= 0.0);
    debug_assert!(a > 0.0 && a <= 1.0);
    relax.step(zeta, g_val, a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn psi1_examples() {
        for r in [0.25, 0.5, 1.0, 3.0] {
            let k = SundmanKernel::psi1(0.1, 10.0, r).unwrap();
            assert!((k.eval(0.0) - 10.0).abs() < 1e-12);
            // ψ(1) = m(1 + M)/(1 + m) = 0.1·11/1.1
            assert!((k.eval(1.0) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn psi2_limit_and_origin() {
        let k = SundmanKernel::psi2(0.1, 10.0, 1.0).unwrap();
        assert!((k.eval(0.0) - 10.0).abs() < 1e-12);
        assert!(k.eval(1e12) - 0.1 < 1e-2);
        assert!(k.eval(1e12) > 0.1);
        assert_eq!(k.eval(f64::INFINITY), 0.1);
    }

    #[test]
    fn adam_raw_and_constant() {
        assert_eq!(SundmanKernel::adam_raw(1.0).unwrap().eval(0.0), 1.0);
        let c = SundmanKernel::constant(0.7).unwrap();
        assert_eq!(c.eval(0.0), 0.7);
        assert_eq!(c.eval(123.0), 0.7);
    }

    #[test]
    #[should_panic(expected = "negative control variable")]
    fn negative_zeta_panics() {
        SundmanKernel::psi1(0.1, 10.0, 0.25).unwrap().eval(-1e-3);
    }

    #[test]
    fn kernel_parameter_validation() {
        assert!(SundmanKernel::psi1(1.0, 0.5, 1.0).is_err());
        assert!(SundmanKernel::psi2(0.0, 1.0, 1.0).is_err());
        assert!(SundmanKernel::psi1(0.1, 1.0, 0.0).is_err());
        assert!(SundmanKernel::adam_raw(0.0).is_err());
    }

    #[test]
    fn monitor_examples() {
        let g = MonitorFunction::force_norm_power(1.0, 2.0).unwrap();
        assert_eq!(g.eval(&[0.0, 0.0], &[]), 0.0);
        assert_eq!(g.eval(&[3.0, 4.0], &[]), 25.0);
        let g = MonitorFunction::force_norm_power(5.0, 1.0).unwrap();
        assert_eq!(g.eval(&[3.0, 4.0], &[]), 1.0);
        let g = MonitorFunction::force_norm_power(2.0, 0.5).unwrap();
        assert!((g.eval(&[3.0, 4.0], &[]) - 5f64.sqrt() / 2.0).abs() < 1e-15);
        assert_eq!(MonitorFunction::zero().eval(&[1e6, 1e6], &[1.0]), 0.0);
        let nan = MonitorFunction::force_norm_power(1.0, 2.0).unwrap();
        assert!(nan.eval(&[f64::NAN], &[]).is_nan());
    }

    #[test]
    fn zeta_step_examples() {
        let z = ZetaRelaxation::new(1.3, 0.05).unwrap();
        assert!(z.rho() > 0.0 && z.rho() < 1.0);
        assert!((zeta_step(&z, 2.0, 0.0, 1.0) - z.rho() * 2.0).abs() < 1e-15);
        let g = 0.8;
        let fixed = g / z.alpha;
        for a in [0.25, 0.5, 1.0] {
            assert!((zeta_step(&z, fixed, g, a) - fixed).abs() < 1e-15);
        }
    }

    #[test]
    fn small_alpha_limit_is_euler_accumulation() {
        // lim α→0: ζ + Ω⁻¹Δτ‖∇U‖^s, with the monitor value already scaled
        let dtau = 0.01;
        let z = ZetaRelaxation::new(1e-10, dtau).unwrap();
        let monitor = MonitorFunction::force_norm_power(4.0, 2.0).unwrap();
        let g = monitor.eval(&[1.0, 2.0], &[]);
        let zeta = 0.3;
        let expected = zeta + dtau * 5.0 / 4.0;
        let got = zeta_step(&z, zeta, g, 1.0);
        assert!(((got - expected) / expected).abs() < 1e-6);
    }

    #[test]
    fn moving_average_closed_form() {
        let z = ZetaRelaxation::new(0.7, 0.03).unwrap();
        let (zeta0, g) = (2.5, 1.7);
        let mut zeta = zeta0;
        for n in 1..=100 {
            zeta = zeta_step(&z, zeta, g, 1.0);
            let rho_n = z.rho().powi(n);
            let closed = rho_n * zeta0 + (1.0 - rho_n) * g / z.alpha;
            assert!((zeta - closed).abs() < 1e-12, "n={n}: {zeta} vs {closed}");
        }
    }

    #[test]
    fn limiting_cases() {
        let k = SundmanKernel::psi1(0.1, 10.0, 0.25).unwrap();
        let dtau = 0.01;
        let grad = [3.0, 4.0];
        let step_dt = |alpha: f64, omega: f64, n: usize| {
            let z = ZetaRelaxation::new(alpha, dtau).unwrap();
            let g = MonitorFunction::force_norm_power(omega, 2.0).unwrap().eval(&grad, &[]);
            let mut zeta = 1.0;
            for _ in 0..n {
                zeta = zeta_step(&z, zeta, g, 1.0);
            }
            k.eval(zeta) * dtau
        };
        // α → ∞: ζ → 0, Δt → MΔτ
        assert!((step_dt(1e30, 1.0, 1) - 10.0 * dtau).abs() < 1e-3 * dtau);
        // Ω → ∞: ζ decays geometrically to 0, Δt → MΔτ
        assert!((step_dt(1.0, 1e300, 20_000) - 10.0 * dtau).abs() < 1e-3 * dtau);
        // Ω → 0: ζ → ∞, Δt → mΔτ
        assert!((step_dt(1.0, 1e-300, 1) - 0.1 * dtau).abs() < 1e-3 * dtau);
        // α → 0 with persistent forcing: ζ grows without bound, Δt → mΔτ
        assert!((step_dt(1e-12, 1e-3, 100_000) - 0.1 * dtau).abs() < 0.05 * dtau);
    }

    #[test]
    fn half_steps_compose_to_full_step() {
        let z = ZetaRelaxation::new(2.0, 0.07).unwrap();
        let g = 3.3;
        let two_halves = z.half_step(z.half_step(0.4, g), g);
        assert!((two_halves - z.full_step(0.4, g)).abs() < 1e-15);
        assert!((z.step(0.4, g, 0.3) - (z.rho().powf(0.3) * 0.4 + (1.0 - z.rho().powf(0.3)) * g / 2.0)).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn filtered_kernels_bounded_and_monotone(
            m in 1e-3f64..1.0, ratio in 1.01f64..1e3, r in 0.1f64..3.0,
            z1 in 0.0f64..1e3, dz in 0.0f64..1e3,
        ) {
            let big_m = m * ratio;
            for k in [SundmanKernel::psi1(m, big_m, r).unwrap(), SundmanKernel::psi2(m, big_m, r).unwrap()] {
                let a = k.eval(z1);
                let b = k.eval(z1 + dz);
                prop_assert!(a > m && a <= big_m * (1.0 + 1e-15));
                prop_assert!(b <= a * (1.0 + 1e-14));
            }
        }

        #[test]
        fn relaxation_keeps_zeta_nonnegative(
            alpha in 1e-6f64..1e4, dtau in 1e-4f64..1.0, zeta in 0.0f64..1e6, g in 0.0f64..1e6,
        ) {
            let z = ZetaRelaxation::new(alpha, dtau).unwrap();
            prop_assert!(z.rho() > 0.0 && z.rho() < 1.0 || alpha * dtau > 700.0);
            prop_assert!(z.half_step(zeta, g) >= 0.0);
            let h = z.half_step(z.half_step(zeta, g), g);
            let f = z.full_step(zeta, g);
            prop_assert!((h - f).abs() <= 1e-12 * f.abs().max(1.0));
        }
    }
}
