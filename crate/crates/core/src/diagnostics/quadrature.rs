use crate::averaging::Observable;
use crate::error::{Error, Result};
use crate::potentials::Potential;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // Chebyshev-type initial guess, then Newton on P_n
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = nf * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Nodes per panel of the composite rule.
pub const PANEL_ORDER: usize = 10;

/// Tensor-product composite Gauss–Legendre integration of expectations
/// under `e^{−U/T}` restricted to a box.
#[derive(Clone, Debug)]
pub struct QuadratureOracle {
    pub domain: Vec<(f64, f64)>,
    pub temperature: f64,
    nodes: Vec<Vec<f64>>,
    weights: Vec<Vec<f64>>,
}

impl QuadratureOracle {
    pub const MAX_DIM: usize = 3;

    /// `nodes_per_axis` is rounded up to a multiple of [`PANEL_ORDER`]; the
    /// box is split into equal panels.
    pub fn new(domain: Vec<(f64, f64)>, nodes_per_axis: usize, temperature: f64) -> Result<Self> {
        if domain.is_empty() || domain.len() > Self::MAX_DIM {
            return Err(Error::Oracle(format!(
                "tensor quadrature supports 1 to {} dimensions, got {}",
                Self::MAX_DIM,
                domain.len()
            )));
        }
        if domain
            .iter()
            .any(|(lo, hi)| !(lo < hi) || !lo.is_finite() || !hi.is_finite())
        {
            return Err(Error::Oracle("quadrature box must be finite with lo < hi".into()));
        }
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::Oracle("temperature must be positive".into()));
        }
        let panels = nodes_per_axis.div_ceil(PANEL_ORDER).max(1);
        let (gx, gw) = gauss_legendre(PANEL_ORDER);
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for &(lo, hi) in &domain {
            let h = (hi - lo) / panels as f64;
            let mut n = Vec::with_capacity(panels * PANEL_ORDER);
            let mut w = Vec::with_capacity(panels * PANEL_ORDER);
            for k in 0..panels {
                let mid = lo + (k as f64 + 0.5) * h;
                for (x, wx) in gx.iter().zip(&gw) {
                    n.push(mid + 0.5 * h * x);
                    w.push(0.5 * h * wx);
                }
            }
            nodes.push(n);
            weights.push(w);
        }
        Ok(Self {
            domain,
            temperature,
            nodes,
            weights,
        })
    }

    pub fn nodes_per_axis(&self) -> usize {
        self.nodes[0].len()
    }

    /// `∫ f(x, ∇U(x)) e^{−U/T} dx / ∫ e^{−U/T} dx` over the box.
    pub fn expectation_with(&self, model: &dyn Potential, f: impl Fn(&[f64], &[f64]) -> f64) -> Result<f64> {
        let d = self.domain.len();
        if model.dim() != d {
            return Err(Error::Dimension {
                expected: model.dim(),
                got: d,
            });
        }
        let sizes: Vec<usize> = self.nodes.iter().map(Vec::len).collect();
        let total: usize = sizes.iter().product();
        let mut x = vec![0.0; d];
        let mut g = vec![0.0; d];
        let point = |mut idx: usize, x: &mut [f64]| -> f64 {
            let mut w = 1.0;
            for k in (0..d).rev() {
                let i = idx % sizes[k];
                idx /= sizes[k];
                x[k] = self.nodes[k][i];
                w *= self.weights[k][i];
            }
            w
        };
        let mut u_min = f64::INFINITY;
        for idx in 0..total {
            point(idx, &mut x);
            let u = model.energy(&x);
            if u < u_min {
                u_min = u;
            }
        }
        if !u_min.is_finite() {
            return Err(Error::Oracle("potential is not finite anywhere on the grid".into()));
        }
        let (mut z, mut num) = (0.0, 0.0);
        for idx in 0..total {
            let w = point(idx, &mut x);
            let u = model.energy(&x);
            let b = w * (-(u - u_min) / self.temperature).exp();
            if b > 0.0 {
                model.gradient_into(&x, &mut g);
                num += b * f(&x, &g);
            }
            z += b;
        }
        if !(z > 0.0 && z.is_finite() && num.is_finite()) {
            return Err(Error::Oracle("normalizing constant is not positive and finite".into()));
        }
        Ok(num / z)
    }

    /// Expectation of a registry observable. Momentum observables use the
    /// Gaussian momentum marginal, under which `E[T_kin] = T`.
    pub fn expectation(&self, model: &dyn Potential, obs: &Observable) -> Result<f64> {
        match obs {
            Observable::TKin => Ok(self.temperature),
            _ => {
                obs.check_dim(model.dim())?;
                self.expectation_with(model, |x, g| obs.eval_position(model, x, g))
            }
        }
    }
}

/// Shorthand for a one-off oracle evaluation.
pub fn quadrature_expectation(
    model: &dyn Potential,
    obs: &Observable,
    domain: Vec<(f64, f64)>,
    nodes_per_axis: usize,
    temperature: f64,
) -> Result<f64> {
    QuadratureOracle::new(domain, nodes_per_axis, temperature)?.expectation(model, obs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::{Beale, DoubleWell, Quadratic, Star};

    /// Independent reference values at `T = 0.4`, `b = 1.5`, `L = 2`, from
    /// adaptive 1D quadrature.
    const DW_MEAN_X: f64 = 1.8398051263259845;
    const DW_P_BELOW_HALF: f64 = 0.03923517063177836;

    #[test]
    fn legendre_rule_integrates_polynomials() {
        let (x, w) = gauss_legendre(PANEL_ORDER);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        // exact up to degree 2n − 1
        let m18: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(18)).sum();
        assert!((m18 - 2.0 / 19.0).abs() < 1e-14);
        let (x1, w1) = gauss_legendre(1);
        assert_eq!((x1[0], w1[0]), (0.0, 2.0));
    }

    #[test]
    fn gaussian_second_moment() {
        let model = Quadratic::new(1);
        let v = quadrature_expectation(&model, &"moment:0:2".parse().unwrap(), vec![(-12.0, 12.0)], 200, 1.0).unwrap();
        assert!((v - 1.0).abs() < 1e-8, "{v}");
        let m = quadrature_expectation(&model, &Observable::X0, vec![(-12.0, 12.0)], 200, 1.0).unwrap();
        assert!(m.abs() < 1e-10);
    }

    #[test]
    fn symmetric_two_dimensional_means_vanish() {
        let o = QuadratureOracle::new(vec![(-5.0, 5.0), (-5.0, 5.0)], 1600, 1.0).unwrap();
        for obs in ["x0", "x_coord:1"] {
            let m = o.expectation(&Star, &obs.parse().unwrap()).unwrap();
            assert!(m.abs() < 1e-10, "{obs}: {m}");
        }
        // E[x·∇U]/d equals T when the box holds essentially all the mass
        let t = o.expectation(&Star, &Observable::TConf).unwrap();
        assert!((t - 1.0).abs() < 1e-6, "{t}");
        assert_eq!(o.expectation(&Star, &Observable::TKin).unwrap(), 1.0);
    }

    #[test]
    fn double_well_matches_independent_reference() {
        let model = DoubleWell::default();
        let o = QuadratureOracle::new(vec![(-1.5, 3.5)], 1000, 0.4).unwrap();
        let mean = o.expectation(&model, &Observable::X0).unwrap();
        let p = o.expectation(&model, &"indicator:x0<0.5".parse().unwrap()).unwrap();
        assert!((mean - DW_MEAN_X).abs() < 1e-8, "{mean}");
        assert!((p - DW_P_BELOW_HALF).abs() < 1e-8, "{p}");
    }

    #[test]
    fn grid_refinement_converges() {
        let model = DoubleWell::default();
        for obs in ["x0", "indicator:x0<0.5"] {
            let obs: Observable = obs.parse().unwrap();
            let a = quadrature_expectation(&model, &obs, vec![(-1.5, 3.5)], 500, 0.4).unwrap();
            let b = quadrature_expectation(&model, &obs, vec![(-1.5, 3.5)], 1000, 0.4).unwrap();
            assert!(((a - b) / b).abs() < 1e-6);
        }
        let dom = vec![(-4.5, 4.5), (-2.5, 2.5)];
        for obs in ["x0", "x_coord:1"] {
            let obs: Observable = obs.parse().unwrap();
            let a = quadrature_expectation(&Beale, &obs, dom.clone(), 200, 1.0).unwrap();
            let b = quadrature_expectation(&Beale, &obs, dom.clone(), 400, 1.0).unwrap();
            assert!(((a - b) / b).abs() < 1e-6, "{a} {b}");
        }
    }

    #[test]
    fn rejects_high_dimension_and_overflow() {
        let q = Quadratic::new(4);
        assert!(matches!(
            quadrature_expectation(&q, &Observable::X0, vec![(-1.0, 1.0); 4], 10, 1.0),
            Err(Error::Oracle(_))
        ));
        struct Inf;
        impl Potential for Inf {
            fn name(&self) -> &str {
                "inf"
            }
            fn dim(&self) -> usize {
                1
            }
            fn energy(&self, _: &[f64]) -> f64 {
                f64::INFINITY
            }
            fn gradient_into(&self, _: &[f64], out: &mut [f64]) {
                out[0] = 0.0;
            }
        }
        assert!(matches!(
            quadrature_expectation(&Inf, &Observable::X0, vec![(-1.0, 1.0)], 10, 1.0),
            Err(Error::Oracle(_))
        ));
    }
}
