use crate::error::{Error, Result};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use std::path::Path;

/// Autocorrelation of a time series resampled onto a uniform physical-time
/// grid.
#[derive(Clone, Debug, PartialEq)]
pub struct AcfResult {
    pub lags: Vec<f64>,
    pub values: Vec<f64>,
    pub grid_dt: f64,
    /// Length of the resampled series.
    pub n_grid: usize,
}

impl AcfResult {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["lag", "rho"])?;
        for (l, r) in self.lags.iter().zip(&self.values) {
            w.write_record([format!("{l:.16e}"), format!("{r:.16e}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Linear interpolation of `(times, values)` at `t₀ + k·grid_dt`.
pub fn interpolate_uniform(times: &[f64], values: &[f64], grid_dt: f64) -> Result<Vec<f64>> {
    if times.len() != values.len() {
        return Err(Error::Dimension {
            expected: times.len(),
            got: values.len(),
        });
    }
    if times.len() < 2 {
        return Err(Error::Diagnostic("need at least two samples".into()));
    }
    if !(grid_dt > 0.0) {
        return Err(Error::Diagnostic("grid spacing must be positive".into()));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Diagnostic("sample times must be strictly increasing".into()));
    }
    let t0 = times[0];
    let n = ((times[times.len() - 1] - t0) / grid_dt).floor() as usize + 1;
    let mut out = Vec::with_capacity(n);
    let mut j = 0;
    for k in 0..n {
        let t = t0 + k as f64 * grid_dt;
        while j + 2 < times.len() && times[j + 1] < t {
            j += 1;
        }
        let (ta, tb) = (times[j], times[j + 1]);
        let s = ((t - ta) / (tb - ta)).clamp(0.0, 1.0);
        out.push(values[j] + s * (values[j + 1] - values[j]));
    }
    Ok(out)
}

/// Biased autocorrelation estimate of a uniformly spaced series up to lag
/// index `max_k`, via zero-padded FFT.
pub fn autocorrelation(series: &[f64], max_k: usize) -> Result<Vec<f64>> {
    let n = series.len();
    if n < 2 {
        return Err(Error::Diagnostic("series too short".into()));
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let m = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = series
        .iter()
        .map(|v| Complex::new(v - mean, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(m)
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(m).process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(m).process(&mut buf);
    let c0 = buf[0].re;
    let scale = series.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
    if !(c0 > 1e-24 * scale * scale * n as f64 * m as f64) {
        return Err(Error::Diagnostic(
            "series has zero variance; autocorrelation undefined".into(),
        ));
    }
    Ok(buf[..=max_k.min(n - 1)].iter().map(|c| c.re / c0).collect())
}

/// Resamples `values` observed at `times` onto a grid of spacing `grid_dt`
/// and estimates the autocorrelation up to physical lag `max_lag`.
pub fn acf_uniform(times: &[f64], values: &[f64], grid_dt: f64, max_lag: f64) -> Result<AcfResult> {
    if !(max_lag >= grid_dt) {
        return Err(Error::Diagnostic("max_lag must be at least grid_dt".into()));
    }
    if let (Some(a), Some(b)) = (times.first(), times.last()) {
        check_span(b - a, max_lag)?;
    }
    let grid = interpolate_uniform(times, values, grid_dt)?;
    acf_from_grid(&grid, grid_dt, max_lag)
}

fn check_span(span: f64, max_lag: f64) -> Result<()> {
    if span < 10.0 * max_lag {
        return Err(Error::Diagnostic(format!(
            "trajectory spans {span} time units, need at least 10·max_lag = {}",
            10.0 * max_lag
        )));
    }
    Ok(())
}

/// Autocorrelation of a series already on a uniform grid of spacing `grid_dt`.
pub fn acf_from_grid(grid: &[f64], grid_dt: f64, max_lag: f64) -> Result<AcfResult> {
    if !(grid_dt > 0.0 && max_lag >= grid_dt) {
        return Err(Error::Diagnostic("need grid_dt > 0 and max_lag ≥ grid_dt".into()));
    }
    check_span(grid.len().saturating_sub(1) as f64 * grid_dt, max_lag)?;
    let max_k = (max_lag / grid_dt).floor() as usize;
    let values = autocorrelation(grid, max_k)?;
    Ok(AcfResult {
        lags: (0..values.len()).map(|k| k as f64 * grid_dt).collect(),
        values,
        grid_dt,
        n_grid: grid.len(),
    })
}

/// Streaming version of [`interpolate_uniform`]: keeps only the grid values,
/// not the raw samples.
#[derive(Clone, Debug)]
pub struct UniformResampler {
    grid_dt: f64,
    t0: f64,
    prev: Option<(f64, f64)>,
    pub values: Vec<f64>,
}

impl UniformResampler {
    pub fn new(grid_dt: f64) -> Result<Self> {
        if !(grid_dt > 0.0 && grid_dt.is_finite()) {
            return Err(Error::Diagnostic("grid spacing must be positive".into()));
        }
        Ok(Self {
            grid_dt,
            t0: 0.0,
            prev: None,
            values: Vec::new(),
        })
    }

    /// Samples must arrive in strictly increasing time; others are ignored.
    pub fn push(&mut self, t: f64, v: f64) {
        match self.prev {
            None => {
                self.t0 = t;
                self.values.push(v);
            }
            Some((ta, va)) => {
                if !(t > ta) {
                    return;
                }
                loop {
                    let next = self.t0 + self.values.len() as f64 * self.grid_dt;
                    if next > t {
                        break;
                    }
                    let s = ((next - ta) / (t - ta)).clamp(0.0, 1.0);
                    self.values.push(va + s * (v - va));
                }
            }
        }
        self.prev = Some((t, v));
    }

    pub fn acf(&self, max_lag: f64) -> Result<AcfResult> {
        acf_from_grid(&self.values, self.grid_dt, max_lag)
    }
}

/// `1 + 2Σ_{k≥1} ρ_k` in grid steps, summing until the first negative `ρ_k`.
pub fn integrated_autocorrelation_time(acf: &AcfResult) -> f64 {
    let mut tau = 1.0;
    for &r in &acf.values[1..] {
        if r < 0.0 {
            break;
        }
        tau += 2.0 * r;
    }
    tau
}

/// Effective sample size of the resampled series divided by the number of
/// recorded samples it came from.
pub fn ess_per_sample(acf: &AcfResult, n_samples: usize) -> f64 {
    acf.n_grid as f64 / integrated_autocorrelation_time(acf) / n_samples as f64
}

/// Least-squares decay rate `λ` of `ρ(t) ≈ C e^{−λt}` over lags in `[lo, hi]`
/// with positive `ρ`.
pub fn fit_decay_rate(acf: &AcfResult, lo: f64, hi: f64) -> Result<f64> {
    let pts: Vec<(f64, f64)> = acf
        .lags
        .iter()
        .zip(&acf.values)
        .filter(|(l, r)| **l >= lo && **l <= hi && **r > 0.0)
        .map(|(l, r)| (*l, r.ln()))
        .collect();
    let (slope, _) = least_squares(&pts)?;
    Ok(-slope)
}

/// Ordinary least-squares line `y = a·x + b`; returns `(a, b)`.
pub(crate) fn least_squares(pts: &[(f64, f64)]) -> Result<(f64, f64)> {
    if pts.len() < 2 {
        return Err(Error::Diagnostic("need at least two points for a fit".into()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Diagnostic("fit abscissae are all equal".into()));
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let a = sxy / sxx;
    Ok((a, my - a * mx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adaptivity::MonitorFunction;
    use crate::integrators::{baoab_step, AugmentedState, ForceField, LangevinParams, ZetaInit};
    use crate::potentials::Quadratic;
    use crate::rng::RngStream;

    #[test]
    fn interpolation_is_linear() {
        let g = interpolate_uniform(&[0.0, 1.0, 3.0], &[0.0, 2.0, 0.0], 0.5).unwrap();
        assert_eq!(g, vec![0.0, 1.0, 2.0, 1.5, 1.0, 0.5, 0.0]);
        assert!(interpolate_uniform(&[0.0, 0.0], &[1.0, 2.0], 0.1).is_err());
    }

    #[test]
    fn streaming_matches_batch_interpolation() {
        let times = [0.0, 0.3, 0.35, 1.2, 2.0, 2.05, 3.3];
        let vals = [1.0, -2.0, 0.5, 4.0, 0.0, 1.0, -1.0];
        let mut r = UniformResampler::new(0.25).unwrap();
        for (t, v) in times.iter().zip(&vals) {
            r.push(*t, *v);
        }
        let batch = interpolate_uniform(&times, &vals, 0.25).unwrap();
        assert_eq!(r.values.len(), batch.len());
        for (a, b) in r.values.iter().zip(&batch) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn lag_zero_is_one_and_bounded() {
        let mut rng = RngStream::new(4, 0);
        let v = rng.normal_vector(5_000);
        let t: Vec<f64> = (0..v.len()).map(|i| i as f64).collect();
        let acf = acf_uniform(&t, &v, 1.0, 50.0).unwrap();
        assert_eq!(acf.values[0], 1.0);
        assert!(acf.values.iter().all(|r| r.abs() <= 1.0 + 1e-6));
        assert_eq!(acf.lags[3], 3.0);
    }

    #[test]
    fn constant_series_is_signalled() {
        let t: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        let err = acf_uniform(&t, &vec![2.5; 1000], 1.0, 10.0).unwrap_err();
        assert!(matches!(err, Error::Diagnostic(_)));
    }

    #[test]
    fn short_span_is_rejected() {
        let t: Vec<f64> = (0..50).map(|i| i as f64).collect();
        assert!(acf_uniform(&t, &t, 1.0, 10.0).is_err());
    }

    #[test]
    fn white_noise_ess_near_one() {
        let mut rng = RngStream::new(8, 0);
        let n = 100_000;
        let v = rng.normal_vector(n);
        let t: Vec<f64> = (0..n).map(|i| i as f64 * 0.1).collect();
        let acf = acf_uniform(&t, &v, 0.1, 20.0).unwrap();
        let ess = ess_per_sample(&acf, n);
        assert!((ess - 1.0).abs() < 0.1, "{ess}");
    }

    #[test]
    fn nearly_constant_series_has_tiny_ess() {
        let mut rng = RngStream::new(9, 0);
        let n = 20_000;
        // slow drift plus tiny noise
        let v: Vec<f64> = (0..n)
            .map(|i| 1.0 + (i as f64 / n as f64 * 3.0).sin() + 1e-6 * rng.normal_pair().0)
            .collect();
        let t: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let acf = acf_uniform(&t, &v, 1.0, 1_000.0).unwrap();
        assert!(ess_per_sample(&acf, n) < 0.01);
    }

    #[test]
    fn ou_decay_rate_matches_theory() {
        // underdamped harmonic oscillator with γ = 10: the slow x-mode decays
        // at γ/2 − √(γ²/4 − 1)
        let gamma = 10.0;
        let dt = 0.05;
        let params = LangevinParams::new(gamma, 1.0, dt).unwrap();
        let model = Quadratic::new(1);
        let mut forces = ForceField::exact(&model);
        let mut s = AugmentedState::new(
            vec![0.0],
            vec![0.0],
            &mut forces,
            ZetaInit::Zero,
            &MonitorFunction::zero(),
        )
        .unwrap();
        let mut rng = RngStream::new(21, 0);
        let n = 2_000_000;
        let mut xs = Vec::with_capacity(n);
        for _ in 0..n {
            baoab_step(&mut s, dt, &params, &mut forces, &mut rng);
            xs.push(s.x[0]);
        }
        let t: Vec<f64> = (0..n).map(|i| i as f64 * dt).collect();
        let acf = acf_uniform(&t, &xs, dt, 40.0).unwrap();
        let rate = fit_decay_rate(&acf, 5.0, 20.0).unwrap();
        let theory = gamma / 2.0 - (gamma * gamma / 4.0 - 1.0f64).sqrt();
        assert!(((rate - theory) / theory).abs() < 0.15, "rate {rate} theory {theory}");
    }
}
