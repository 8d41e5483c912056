use super::Potential;

/// `U(x) = ‖x‖²/2`.
#[derive(Clone, Copy, Debug)]
pub struct Quadratic {
    dim: usize,
}

impl Quadratic {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }
}

impl Potential for Quadratic {
    fn name(&self) -> &str {
        "quadratic"
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn energy(&self, x: &[f64]) -> f64 {
        0.5 * x.iter().map(|v| v * v).sum::<f64>()
    }
    fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(x);
    }
}

/// Star-shaped landscape `U(x, y) = x² + 1000x²y² + y²`.
#[derive(Clone, Copy, Debug, Default)]
pub struct Star;

impl Potential for Star {
    fn name(&self) -> &str {
        "star"
    }
    fn dim(&self) -> usize {
        2
    }
    fn energy(&self, x: &[f64]) -> f64 {
        let (a, b) = (x[0], x[1]);
        a * a + 1000.0 * a * a * b * b + b * b
    }
    fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        let (a, b) = (x[0], x[1]);
        out[0] = 2.0 * a + 2000.0 * a * b * b;
        out[1] = 2.0 * b + 2000.0 * a * a * b;
    }
}

/// Asymmetric double well `U(x) = (b/L)(x+1)²(x−L)⁶`: a narrow well at
/// `x = -1` and a flat sixth-order well at `x = L`.
#[derive(Clone, Copy, Debug)]
pub struct DoubleWell {
    pub b: f64,
    pub l: f64,
}

impl DoubleWell {
    pub const DEFAULT_B: f64 = 1.5;
    pub const DEFAULT_L: f64 = 2.0;

    pub fn new(b: f64, l: f64) -> Self {
        Self { b, l }
    }
}

impl Default for DoubleWell {
    fn default() -> Self {
        Self::new(Self::DEFAULT_B, Self::DEFAULT_L)
    }
}

impl Potential for DoubleWell {
    fn name(&self) -> &str {
        "double_well"
    }
    fn dim(&self) -> usize {
        1
    }
    fn energy(&self, x: &[f64]) -> f64 {
        let u = x[0] + 1.0;
        let v = x[0] - self.l;
        self.b / self.l * u * u * v.powi(6)
    }
    fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        let u = x[0] + 1.0;
        let v = x[0] - self.l;
        let v5 = v.powi(5);
        out[0] = self.b / self.l * (2.0 * u * v5 * v + 6.0 * u * u * v5);
    }
}

/// Two-dimensional funnel on coordinates `(x, θ)`:
/// `U = x²/(2e^θ) + (ε/2)(x² + θ²)`.
#[derive(Clone, Copy, Debug)]
pub struct Funnel2d {
    pub epsilon: f64,
}

impl Funnel2d {
    pub const DEFAULT_EPSILON: f64 = 0.1;

    pub fn new(epsilon: f64) -> Self {
        Self { epsilon }
    }
}

impl Default for Funnel2d {
    fn default() -> Self {
        Self::new(Self::DEFAULT_EPSILON)
    }
}

impl Potential for Funnel2d {
    fn name(&self) -> &str {
        "funnel2d"
    }
    fn dim(&self) -> usize {
        2
    }
    fn energy(&self, q: &[f64]) -> f64 {
        let (x, theta) = (q[0], q[1]);
        0.5 * x * x * (-theta).exp() + 0.5 * self.epsilon * (x * x + theta * theta)
    }
    fn gradient_into(&self, q: &[f64], out: &mut [f64]) {
        let (x, theta) = (q[0], q[1]);
        let e = (-theta).exp();
        out[0] = x * e + self.epsilon * x;
        out[1] = -0.5 * x * x * e + self.epsilon * theta;
    }
}

/// Neal's funnel with a confining Gaussian prior on the latent variables,
/// on coordinates `(θ, x_1, …, x_n)`:
///
/// `θ ~ N(0, 3)`, `x_i | θ ~ N(0, e^θ) × N(0, σ_x²)`.
///
/// The energy drops every additive constant:
/// `U = θ²/6 + nθ/2 + Σ x_i² (1/(2e^θ) + 1/(2σ_x²))`.
///
/// [`Potential::log_posterior`] reports the normalized log-density of the
/// unconfined funnel, `−θ²/6 − nθ/2 − Σx_i²/(2e^θ) − (n/2)ln 2π − ½ ln 6π`,
/// evaluated on samples of the confined target.
#[derive(Clone, Copy, Debug)]
pub struct Funnel9d {
    pub n_latent: usize,
    pub sigma2: f64,
}

impl Funnel9d {
    pub const DEFAULT_LATENT: usize = 8;
    pub const DEFAULT_SIGMA2: f64 = 20.0;
    pub const THETA_VARIANCE: f64 = 3.0;

    pub fn new(n_latent: usize, sigma2: f64) -> Self {
        Self { n_latent, sigma2 }
    }

    /// Additive constant of [`Potential::log_posterior`].
    pub fn log_normalizer(&self) -> f64 {
        let n = self.n_latent as f64;
        -0.5 * n * std::f64::consts::TAU.ln() - 0.5 * (std::f64::consts::TAU * Self::THETA_VARIANCE).ln()
    }
}

impl Default for Funnel9d {
    fn default() -> Self {
        Self::new(Self::DEFAULT_LATENT, Self::DEFAULT_SIGMA2)
    }
}

impl Potential for Funnel9d {
    fn name(&self) -> &str {
        "funnel9d"
    }
    fn dim(&self) -> usize {
        self.n_latent + 1
    }
    fn energy(&self, q: &[f64]) -> f64 {
        let theta = q[0];
        let sq: f64 = q[1..].iter().map(|v| v * v).sum();
        let n = self.n_latent as f64;
        theta * theta / (2.0 * Self::THETA_VARIANCE) + 0.5 * n * theta + sq * (0.5 * (-theta).exp() + 0.5 / self.sigma2)
    }
    fn gradient_into(&self, q: &[f64], out: &mut [f64]) {
        let theta = q[0];
        let e = (-theta).exp();
        let n = self.n_latent as f64;
        let mut sq = 0.0;
        let prec = e + 1.0 / self.sigma2;
        for (o, &v) in out[1..].iter_mut().zip(&q[1..]) {
            sq += v * v;
            *o = v * prec;
        }
        out[0] = theta / Self::THETA_VARIANCE + 0.5 * n - 0.5 * sq * e;
    }
    fn log_posterior(&self, q: &[f64]) -> f64 {
        let theta = q[0];
        let sq: f64 = q[1..].iter().map(|v| v * v).sum();
        let n = self.n_latent as f64;
        -theta * theta / (2.0 * Self::THETA_VARIANCE) - 0.5 * n * theta - 0.5 * sq * (-theta).exp()
            + self.log_normalizer()
    }
}

/// Entropic barrier `U(x, y) = y²/(1 + 10x⁴) + 0.001(x² − 9)²`.
#[derive(Clone, Copy, Debug, Default)]
pub struct EntropicBarrier;

impl Potential for EntropicBarrier {
    fn name(&self) -> &str {
        "entropic"
    }
    fn dim(&self) -> usize {
        2
    }
    fn energy(&self, q: &[f64]) -> f64 {
        let (x, y) = (q[0], q[1]);
        let w = x * x - 9.0;
        y * y / (1.0 + 10.0 * x.powi(4)) + 0.001 * w * w
    }
    fn gradient_into(&self, q: &[f64], out: &mut [f64]) {
        let (x, y) = (q[0], q[1]);
        let den = 1.0 + 10.0 * x.powi(4);
        out[0] = -y * y * 40.0 * x.powi(3) / (den * den) + 0.004 * x * (x * x - 9.0);
        out[1] = 2.0 * y / den;
    }
}

/// Beale function with a sixth-order exponential confinement.
#[derive(Clone, Copy, Debug, Default)]
pub struct Beale;

impl Potential for Beale {
    fn name(&self) -> &str {
        "beale"
    }
    fn dim(&self) -> usize {
        2
    }
    fn energy(&self, q: &[f64]) -> f64 {
        let (x, y) = (q[0], q[1]);
        let t1 = 1.5 - x + x * y;
        let t2 = 2.25 - x + x * y * y;
        let t3 = 2.625 - x + x * y * y * y;
        t1 * t1 + t2 * t2 + t3 * t3 + 0.3 * (1e-5 * (x.powi(6) + y.powi(6))).exp()
    }
    fn gradient_into(&self, q: &[f64], out: &mut [f64]) {
        let (x, y) = (q[0], q[1]);
        let (y2, y3) = (y * y, y * y * y);
        let t1 = 1.5 - x + x * y;
        let t2 = 2.25 - x + x * y2;
        let t3 = 2.625 - x + x * y3;
        let conf = 0.3 * (1e-5 * (x.powi(6) + y.powi(6))).exp() * 6e-5;
        out[0] = 2.0 * (t1 * (y - 1.0) + t2 * (y2 - 1.0) + t3 * (y3 - 1.0)) + conf * x.powi(5);
        out[1] = 2.0 * x * (t1 + 2.0 * t2 * y + 3.0 * t3 * y2) + conf * y.powi(5);
    }
}
