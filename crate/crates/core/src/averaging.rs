//! Reweighted ergodic averages, two-stage confidence intervals, weighted
//! histograms and the observable registry.

use crate::error::{Error, Result};
use crate::potentials::Potential;
use crate::sampler::SampleView;
use statrs::distribution::{ContinuousCDF, StudentsT};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    #[inline]
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Streaming `Σ φ μ / Σ μ`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct WeightedMean {
    weighted: CompensatedSum,
    weights: CompensatedSum,
    count: u64,
}

impl WeightedMean {
    #[inline]
    pub fn push(&mut self, value: f64, weight: f64) {
        self.weighted.add(value * weight);
        self.weights.add(weight);
        self.count += 1;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.value()
    }

    pub fn mean(&self) -> Result<f64> {
        let w = self.weights.value();
        if !(w > 0.0) || !w.is_finite() {
            return Err(Error::Estimation(format!(
                "total weight {w} over {} samples is not positive",
                self.count
            )));
        }
        Ok(self.weighted.value() / w)
    }
}

/// `Σ φ_n μ_n / Σ μ_n`.
pub fn reweighted_mean(values: &[f64], weights: &[f64]) -> Result<f64> {
    if values.len() != weights.len() {
        return Err(Error::Dimension {
            expected: values.len(),
            got: weights.len(),
        });
    }
    if values.is_empty() {
        return Err(Error::Estimation("no samples".into()));
    }
    if weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::Estimation("weights must be non-negative".into()));
    }
    let mut acc = WeightedMean::default();
    for (v, w) in values.iter().zip(weights) {
        acc.push(*v, *w);
    }
    acc.mean()
}

/// Mean across independent trajectories with a Student-t confidence interval.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct TwoStageEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_trajectories: usize,
}

impl TwoStageEstimate {
    pub fn contains(&self, value: f64) -> bool {
        self.ci_low <= value && value <= self.ci_high
    }
}

pub const CONFIDENCE_LEVEL: f64 = 0.95;

/// Second stage of the estimator: `per_trajectory` holds one reweighted mean
/// per independent chain.
pub fn mean_across_trajectories(per_trajectory: &[f64]) -> Result<TwoStageEstimate> {
    let n = per_trajectory.len();
    if n < 2 {
        return Err(Error::Estimation(format!(
            "need at least 2 trajectories for an interval, got {n}"
        )));
    }
    if per_trajectory.iter().any(|v| !v.is_finite()) {
        return Err(Error::Estimation("non-finite trajectory mean".into()));
    }
    let nf = n as f64;
    let mean = per_trajectory.iter().sum::<f64>() / nf;
    let var = per_trajectory.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    let std_error = (var / nf).sqrt();
    let t = StudentsT::new(0.0, 1.0, nf - 1.0)
        .map_err(|e| Error::Estimation(e.to_string()))?
        .inverse_cdf(0.5 + 0.5 * CONFIDENCE_LEVEL);
    Ok(TwoStageEstimate {
        mean,
        std_error,
        ci_low: mean - t * std_error,
        ci_high: mean + t * std_error,
        n_trajectories: n,
    })
}

/// Observable values and weights of one trajectory, in sample order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrajectorySeries {
    pub values: Vec<f64>,
    pub weights: Vec<f64>,
    pub diverged_at: Option<u64>,
}

/// Reweighted mean per trajectory after dropping the first `burn_in`
/// samples, then the mean across trajectories with a t-interval. Diverged
/// trajectories are excluded.
pub fn two_stage_mean(trajectories: &[TrajectorySeries], burn_in: usize) -> Result<TwoStageEstimate> {
    let mut means = Vec::with_capacity(trajectories.len());
    let mut diverged = Vec::new();
    for (i, t) in trajectories.iter().enumerate() {
        if let Some(step) = t.diverged_at {
            diverged.push(format!("trajectory {i} at step {step}"));
            continue;
        }
        let n = t.values.len().min(t.weights.len());
        if burn_in >= n {
            return Err(Error::Estimation(format!(
                "trajectory {i} has {n} samples, not more than burn-in {burn_in}"
            )));
        }
        means.push(reweighted_mean(&t.values[burn_in..n], &t.weights[burn_in..n])?);
    }
    if means.is_empty() && !diverged.is_empty() {
        return Err(Error::Estimation(format!(
            "all trajectories diverged: {}",
            diverged.join(", ")
        )));
    }
    mean_across_trajectories(&means)
}

/// Uniform bins on `[lo, hi)` along one coordinate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HistogramAxis {
    pub coord: usize,
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
}

impl HistogramAxis {
    pub fn new(coord: usize, lo: f64, hi: f64, bins: usize) -> Result<Self> {
        if !(lo < hi) || bins == 0 {
            return Err(Error::config("histogram", "need lo < hi and at least one bin"));
        }
        Ok(Self { coord, lo, hi, bins })
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.bins as f64
    }

    pub fn center(&self, i: usize) -> f64 {
        self.lo + (i as f64 + 0.5) * self.width()
    }

    #[inline]
    pub fn bin_of(&self, v: f64) -> Option<usize> {
        if v >= self.lo && v < self.hi {
            Some((((v - self.lo) / self.width()) as usize).min(self.bins - 1))
        } else {
            None
        }
    }
}

/// Weighted tensor-product histogram. Bin mass is the bin's weight over the
/// total weight, so masses sum to one minus the out-of-range mass.
#[derive(Clone, Debug, PartialEq)]
pub struct HistogramGrid {
    pub axes: Vec<HistogramAxis>,
    weight: Vec<f64>,
    total_weight: f64,
}

impl HistogramGrid {
    pub fn new(axes: Vec<HistogramAxis>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::config("histogram", "need at least one axis"));
        }
        let cells = axes.iter().map(|a| a.bins).product();
        Ok(Self {
            axes,
            weight: vec![0.0; cells],
            total_weight: 0.0,
        })
    }

    /// One-axis grid over coordinate 0.
    pub fn uniform(lo: f64, hi: f64, bins: usize) -> Result<Self> {
        Self::new(vec![HistogramAxis::new(0, lo, hi, bins)?])
    }

    #[inline]
    fn cell_of(&self, x: &[f64]) -> Option<usize> {
        let mut idx = 0;
        for a in &self.axes {
            idx = idx * a.bins + a.bin_of(x[a.coord])?;
        }
        Some(idx)
    }

    /// Adds a sample; `x` is indexed by each axis' `coord`.
    #[inline]
    pub fn push(&mut self, x: &[f64], w: f64) {
        self.total_weight += w;
        if let Some(i) = self.cell_of(x) {
            self.weight[i] += w;
        }
    }

    pub fn merge(&mut self, other: &HistogramGrid) {
        debug_assert_eq!(self.axes, other.axes);
        self.total_weight += other.total_weight;
        for (a, b) in self.weight.iter_mut().zip(&other.weight) {
            *a += b;
        }
    }

    pub fn total_weight(&self) -> f64 {
        self.total_weight
    }

    /// Bin masses in row-major order (last axis fastest).
    pub fn mass(&self) -> Vec<f64> {
        if self.total_weight > 0.0 {
            self.weight.iter().map(|w| w / self.total_weight).collect()
        } else {
            vec![0.0; self.weight.len()]
        }
    }

    /// Bin centers of cell `i`, one per axis.
    pub fn centers(&self, mut i: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.axes.len()];
        for (k, a) in self.axes.iter().enumerate().rev() {
            out[k] = a.center(i % a.bins);
            i /= a.bins;
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = self.axes.iter().map(|a| format!("bin_center_x{}", a.coord)).collect();
        header.push("mass".into());
        w.write_record(&header)?;
        for (i, m) in self.mass().iter().enumerate() {
            let mut rec: Vec<String> = self.centers(i).iter().map(|c| format!("{c:.16e}")).collect();
            rec.push(format!("{m:.16e}"));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Histogram of `points` (each a full coordinate vector) weighted by
/// `weights` on the grid `axes`.
pub fn weighted_histogram(points: &[Vec<f64>], weights: &[f64], axes: Vec<HistogramAxis>) -> Result<HistogramGrid> {
    if points.len() != weights.len() {
        return Err(Error::Dimension {
            expected: points.len(),
            got: weights.len(),
        });
    }
    let mut h = HistogramGrid::new(axes)?;
    for (x, w) in points.iter().zip(weights) {
        h.push(x, *w);
    }
    Ok(h)
}

/// Kinetic temperature `‖p‖²/d`.
#[inline]
pub fn t_kin(p: &[f64]) -> f64 {
    p.iter().map(|v| v * v).sum::<f64>() / p.len() as f64
}

/// Configurational temperature `x·∇U/d`.
#[inline]
pub fn t_conf(x: &[f64], grad: &[f64]) -> f64 {
    x.iter().zip(grad).map(|(a, b)| a * b).sum::<f64>() / x.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Comparison {
    Less,
    Greater,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Observable {
    /// First position coordinate.
    X0,
    Coord(usize),
    /// `x_i^k`.
    Moment {
        axis: usize,
        power: i32,
    },
    TKin,
    TConf,
    PotentialEnergy,
    LogPosterior,
    /// `1{x_axis < value}` or `1{x_axis > value}`.
    Indicator {
        axis: usize,
        op: Comparison,
        value: f64,
    },
}

impl Observable {
    #[inline]
    pub fn eval(&self, model: &dyn Potential, s: &SampleView<'_>) -> f64 {
        self.eval_parts(model, s.x, s.p, s.grad)
    }

    #[inline]
    pub fn eval_parts(&self, model: &dyn Potential, x: &[f64], p: &[f64], grad: &[f64]) -> f64 {
        match *self {
            Self::X0 => x[0],
            Self::Coord(i) => x[i],
            Self::Moment { axis, power } => x[axis].powi(power),
            Self::TKin => t_kin(p),
            Self::TConf => t_conf(x, grad),
            Self::PotentialEnergy => model.energy(x),
            Self::LogPosterior => model.log_posterior(x),
            Self::Indicator { axis, op, value } => {
                let hit = match op {
                    Comparison::Less => x[axis] < value,
                    Comparison::Greater => x[axis] > value,
                };
                hit as u8 as f64
            }
        }
    }

    pub fn depends_on_momentum(&self) -> bool {
        matches!(self, Self::TKin)
    }

    /// Evaluation for position-only observables.
    #[inline]
    pub fn eval_position(&self, model: &dyn Potential, x: &[f64], grad: &[f64]) -> f64 {
        debug_assert!(!self.depends_on_momentum());
        self.eval_parts(model, x, &[], grad)
    }

    /// Largest coordinate index referenced, if any.
    pub fn max_axis(&self) -> Option<usize> {
        match *self {
            Self::X0 => Some(0),
            Self::Coord(i) | Self::Moment { axis: i, .. } | Self::Indicator { axis: i, .. } => Some(i),
            _ => None,
        }
    }

    /// Rejects observables that index past the model dimension.
    pub fn check_dim(&self, dim: usize) -> Result<()> {
        match self.max_axis() {
            Some(i) if i >= dim => Err(Error::config(
                "observables",
                format!("`{self}` indexes axis {i} of a {dim}-dimensional model"),
            )),
            _ => Ok(()),
        }
    }
}

pub const OBSERVABLE_FORMS: &str = "x0, x_coord:<i>, moment:<i>:<k>, t_kin, t_conf, \
potential_energy, log_posterior, indicator:x<i><op><value> with op `<` or `>`";

impl FromStr for Observable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::UnknownName {
            kind: "observable",
            name: s.to_string(),
            valid: OBSERVABLE_FORMS.to_string(),
        };
        let parse_axis = |t: &str| t.trim().parse::<usize>().map_err(|_| bad());
        match s.trim() {
            "x0" => return Ok(Self::X0),
            "t_kin" => return Ok(Self::TKin),
            "t_conf" => return Ok(Self::TConf),
            "potential_energy" => return Ok(Self::PotentialEnergy),
            "log_posterior" => return Ok(Self::LogPosterior),
            _ => {}
        }
        if let Some(rest) = s.trim().strip_prefix("x_coord:") {
            return Ok(Self::Coord(parse_axis(rest)?));
        }
        if let Some(rest) = s.trim().strip_prefix("moment:") {
            let (a, k) = rest.split_once(':').ok_or_else(bad)?;
            let power = k.trim().parse::<i32>().map_err(|_| bad())?;
            return Ok(Self::Moment {
                axis: parse_axis(a)?,
                power,
            });
        }
        if let Some(rest) = s.trim().strip_prefix("indicator:") {
            let rest = rest.trim().strip_prefix('x').ok_or_else(bad)?;
            let (pos, op) = rest
                .find('<')
                .map(|i| (i, Comparison::Less))
                .or_else(|| rest.find('>').map(|i| (i, Comparison::Greater)))
                .ok_or_else(bad)?;
            let axis = parse_axis(&rest[..pos])?;
            let value = rest[pos + 1..].trim().parse::<f64>().map_err(|_| bad())?;
            if !value.is_finite() {
                return Err(bad());
            }
            return Ok(Self::Indicator { axis, op, value });
        }
        Err(bad())
    }
}

impl fmt::Display for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Self::X0 => write!(f, "x0"),
            Self::Coord(i) => write!(f, "x_coord:{i}"),
            Self::Moment { axis, power } => write!(f, "moment:{axis}:{power}"),
            Self::TKin => write!(f, "t_kin"),
            Self::TConf => write!(f, "t_conf"),
            Self::PotentialEnergy => write!(f, "potential_energy"),
            Self::LogPosterior => write!(f, "log_posterior"),
            Self::Indicator { axis, op, value } => {
                let c = if op == Comparison::Less { '<' } else { '>' };
                write!(f, "indicator:x{axis}{c}{value}")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::Quadratic;

    #[test]
    fn unit_weights_give_arithmetic_mean() {
        let v = [1.0, 2.0, 3.0, 10.0];
        assert_eq!(reweighted_mean(&v, &[1.0; 4]).unwrap(), 4.0);
        assert_eq!(reweighted_mean(&[1.0, 3.0], &[1.0, 3.0]).unwrap(), 2.5);
    }

    #[test]
    fn weights_reweight() {
        assert_eq!(reweighted_mean(&[0.0, 1.0], &[1.0, 3.0]).unwrap(), 0.75);
        // uniform rescaling of the weights changes nothing
        let a = reweighted_mean(&[0.3, -2.0, 5.0], &[0.1, 0.7, 0.2]).unwrap();
        let b = reweighted_mean(&[0.3, -2.0, 5.0], &[1.0, 7.0, 2.0]).unwrap();
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn reweighted_mean_rejects_bad_input() {
        assert!(matches!(
            reweighted_mean(&[1.0], &[1.0, 2.0]),
            Err(Error::Dimension { .. })
        ));
        assert!(reweighted_mean(&[1.0, 2.0], &[0.0, 0.0]).is_err());
        assert!(reweighted_mean(&[], &[]).is_err());
        assert!(reweighted_mean(&[1.0], &[-1.0]).is_err());
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut s = CompensatedSum::default();
        s.add(1e16);
        for _ in 0..1000 {
            s.add(1.0);
        }
        s.add(-1e16);
        assert_eq!(s.value(), 1000.0);
    }

    #[test]
    fn two_stage_interval() {
        let est = mean_across_trajectories(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(est.mean, 3.0);
        let se = (2.5f64 / 5.0).sqrt();
        assert!((est.std_error - se).abs() < 1e-15);
        // t_{0.975, 4} = 2.776445105
        assert!((est.ci_high - (3.0 + 2.776445105 * se)).abs() < 1e-8);
        assert!(est.contains(3.5) && !est.contains(10.0));
        assert!(mean_across_trajectories(&[1.0]).is_err());
    }

    fn series(values: &[f64]) -> TrajectorySeries {
        TrajectorySeries {
            values: values.to_vec(),
            weights: vec![1.0; values.len()],
            diverged_at: None,
        }
    }

    #[test]
    fn two_stage_from_trajectories() {
        let est = two_stage_mean(&[series(&[9.0, 1.0]), series(&[9.0, 3.0])], 1).unwrap();
        assert_eq!(est.mean, 2.0);
        let same = two_stage_mean(&[series(&[1.0, 2.0]), series(&[1.0, 2.0])], 0).unwrap();
        assert_eq!(same.ci_high - same.ci_low, 0.0);
        let mut bad = series(&[1.0]);
        bad.diverged_at = Some(17);
        let err = two_stage_mean(&[bad.clone(), bad], 0).unwrap_err();
        assert!(err.to_string().contains("step 17"));
        assert!(two_stage_mean(&[series(&[1.0]), series(&[1.0])], 1).is_err());
    }

    #[test]
    fn histogram_masses() {
        let h = weighted_histogram(&[vec![0.5]], &[2.0], vec![HistogramAxis::new(0, 0.0, 1.0, 4).unwrap()]).unwrap();
        assert_eq!(h.mass(), vec![0.0, 0.0, 1.0, 0.0]);
        let pts: Vec<Vec<f64>> = [-0.9, -0.1, 0.1, 0.9, 5.0].iter().map(|v| vec![*v]).collect();
        let h = weighted_histogram(&pts, &[1.0; 5], vec![HistogramAxis::new(0, -1.0, 1.0, 4).unwrap()]).unwrap();
        let m = h.mass();
        assert_eq!(m, vec![0.2, 0.2, 0.2, 0.2]);
        assert!((m.iter().sum::<f64>() - 0.8).abs() < 1e-15);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.csv");
        h.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        assert!(text.starts_with("bin_center_x0,mass"));
        assert_eq!(text.lines().count(), 5);
    }

    #[test]
    fn two_axis_histogram_layout() {
        let axes = vec![
            HistogramAxis::new(1, 0.0, 2.0, 2).unwrap(),
            HistogramAxis::new(0, 0.0, 3.0, 3).unwrap(),
        ];
        let h = weighted_histogram(&[vec![2.5, 0.5]], &[1.0], axes).unwrap();
        let m = h.mass();
        assert_eq!(m[2], 1.0);
        assert_eq!(h.centers(2), vec![0.5, 2.5]);
    }

    #[test]
    fn temperatures() {
        assert_eq!(t_kin(&[1.0, 2.0, 2.0]), 3.0);
        // U = ‖x‖²/2 ⇒ x·∇U = ‖x‖²
        assert_eq!(t_conf(&[1.0, 3.0], &[1.0, 3.0]), 5.0);
    }

    #[test]
    fn observable_parsing_round_trips() {
        for s in [
            "x0",
            "x_coord:3",
            "moment:1:2",
            "t_kin",
            "t_conf",
            "potential_energy",
            "log_posterior",
            "indicator:x0<0.5",
            "indicator:x1>-2",
        ] {
            let o: Observable = s.parse().unwrap();
            assert_eq!(o.to_string(), s);
        }
        for s in ["x9", "indicator:y0<1", "indicator:x0=1", "moment:1", "nope"] {
            assert!(matches!(s.parse::<Observable>(), Err(Error::UnknownName { .. })));
        }
        let o: Observable = "x_coord:2".parse().unwrap();
        assert!(o.check_dim(2).is_err());
        assert!(o.check_dim(3).is_ok());
    }

    #[test]
    fn observable_evaluation() {
        let model = Quadratic::new(2);
        let (x, p, g) = ([0.4, -1.0], [1.0, 1.0], [0.4, -1.0]);
        let s = SampleView {
            step: 0,
            t_phys: 0.0,
            weight: 1.0,
            dt: 0.0,
            zeta: 0.0,
            x: &x,
            p: &p,
            grad: &g,
        };
        let eval = |name: &str| name.parse::<Observable>().unwrap().eval(&model, &s);
        assert_eq!(eval("x0"), 0.4);
        assert_eq!(eval("moment:1:2"), 1.0);
        assert_eq!(eval("t_kin"), 1.0);
        assert_eq!(eval("indicator:x0<0.5"), 1.0);
        assert_eq!(eval("indicator:x0>0.5"), 0.0);
        assert!((eval("potential_energy") - 0.58).abs() < 1e-15);
        assert!((eval("log_posterior") + 0.58).abs() < 1e-15);
    }
}
