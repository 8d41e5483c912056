//! Ensemble driver: runs independent trajectories of a [`RunConfig`] in
//! parallel and reduces them into a [`RunSummary`].

use crate::averaging::{mean_across_trajectories, HistogramGrid, Observable, WeightedMean};
use crate::config::RunConfig;
use crate::diagnostics::{acf_uniform, ess_per_sample, AcfResult};
use crate::error::{Error, Result};
use crate::integrators::{ForceField, MINIBATCH_LANE};
use crate::potentials::Potential;
use crate::rng::RngStream;
use crate::sampler::{run_trajectory, Sampler, TrajectoryInit, TrajectoryReport};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Map, Value};
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ObservableSummary {
    pub name: String,
    pub mean: f64,
    /// Interval fields need at least two surviving trajectories.
    pub std_error: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub potential: String,
    pub scheme: String,
    pub n_trajectories: u64,
    pub n_steps: u64,
    pub observables: Vec<ObservableSummary>,
    pub mean_dt: f64,
    pub min_dt: f64,
    pub max_dt: f64,
    pub n_diverged: u64,
    /// `(trajectory, step)` of every divergence.
    pub divergences: Vec<(u64, u64)>,
    pub gradient_evaluations: u64,
    pub wall_time_s: f64,
    /// Mean over trajectories of the ESS per recorded sample.
    pub ess_per_sample: Option<f64>,
    pub warnings: Vec<String>,
}

impl RunSummary {
    pub fn all_diverged(&self) -> bool {
        self.n_trajectories > 0 && self.n_diverged == self.n_trajectories
    }

    pub fn observable(&self, name: &str) -> Option<&ObservableSummary> {
        self.observables.iter().find(|o| o.name == name)
    }

    /// Single-level JSON object; observables appear as `obs.<name>.<field>`.
    pub fn to_flat_json(&self) -> Value {
        let mut m = Map::new();
        m.insert("potential".into(), json!(self.potential));
        m.insert("scheme".into(), json!(self.scheme));
        m.insert("n_trajectories".into(), json!(self.n_trajectories));
        m.insert("n_steps".into(), json!(self.n_steps));
        for o in &self.observables {
            m.insert(format!("obs.{}.mean", o.name), json!(o.mean));
            m.insert(format!("obs.{}.std_error", o.name), json!(o.std_error));
            m.insert(format!("obs.{}.ci_low", o.name), json!(o.ci_low));
            m.insert(format!("obs.{}.ci_high", o.name), json!(o.ci_high));
        }
        m.insert("dt.mean".into(), json!(self.mean_dt));
        m.insert("dt.min".into(), json!(self.min_dt));
        m.insert("dt.max".into(), json!(self.max_dt));
        m.insert("divergence.count".into(), json!(self.n_diverged));
        m.insert(
            "divergence.trajectories".into(),
            json!(self.divergences.iter().map(|d| d.0).collect::<Vec<_>>()),
        );
        m.insert(
            "divergence.steps".into(),
            json!(self.divergences.iter().map(|d| d.1).collect::<Vec<_>>()),
        );
        m.insert("gradient_evaluations".into(), json!(self.gradient_evaluations));
        m.insert("wall_time_s".into(), json!(self.wall_time_s));
        m.insert("ess_per_sample".into(), json!(self.ess_per_sample));
        m.insert("warnings".into(), json!(self.warnings));
        Value::Object(m)
    }
}

struct TrajectoryResult {
    report: TrajectoryReport,
    means: Vec<WeightedMean>,
    histogram: Option<HistogramGrid>,
    dt_histogram: Option<HistogramGrid>,
    acf: Option<Result<(AcfResult, f64)>>,
}

/// Everything a worker needs, built once per run.
struct Plan<'a> {
    cfg: &'a RunConfig,
    model: &'a dyn Potential,
    sampler: Sampler,
    init: TrajectoryInit,
    observables: Vec<Observable>,
    acf_observable: Option<Observable>,
    sample_dir: Option<PathBuf>,
}

/// Runs the ensemble described by `cfg` on `workers` threads (the global
/// rayon pool when `None`). Results do not depend on the worker count.
pub fn run_experiment(cfg: &RunConfig, workers: Option<usize>) -> Result<RunSummary> {
    match workers {
        None => run_inner(cfg),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::Unsupported(format!("cannot start worker pool: {e}")))?
            .install(|| run_inner(cfg)),
    }
}

fn run_inner(cfg: &RunConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let start = Instant::now();
    let model = cfg.build_model()?;
    let d = model.dim();
    let out_dir = cfg.output.dir.clone();
    let sample_dir = match &out_dir {
        Some(dir) if cfg.output.samples => {
            let s = dir.join("samples");
            std::fs::create_dir_all(&s)?;
            Some(s)
        }
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            None
        }
        None => None,
    };
    if let Some(dir) = &out_dir {
        std::fs::write(dir.join("config.toml"), cfg.to_toml()?)?;
    }
    let plan = Plan {
        cfg,
        model: model.as_ref(),
        sampler: cfg.build_sampler(model.as_ref())?,
        init: cfg.build_init(d)?,
        observables: cfg.build_observables(d)?,
        acf_observable: cfg.acf.as_ref().map(|a| a.observable.parse()).transpose()?,
        sample_dir,
    };
    let results: Vec<TrajectoryResult> = (0..cfg.run.n_trajectories)
        .into_par_iter()
        .map(|i| run_one(&plan, i))
        .collect::<Result<_>>()?;

    let mut summary = reduce(&plan, &results)?;
    summary.wall_time_s = start.elapsed().as_secs_f64();
    if let Some(dir) = &out_dir {
        let survivors = results.iter().filter(|r| r.report.diverged_at.is_none());
        if cfg.histogram.is_some() {
            if let Some(h) = merge_grids(survivors.clone().filter_map(|r| r.histogram.as_ref())) {
                h.write_csv(&dir.join("histogram.csv"))?;
            }
        }
        if cfg.dt_histogram.is_some() {
            if let Some(h) = merge_grids(results.iter().filter_map(|r| r.dt_histogram.as_ref())) {
                h.write_csv(&dir.join("dt_histogram.csv"))?;
            }
        }
        if let Some(acf) = averaged_acf(survivors.filter_map(|r| r.acf.as_ref()?.as_ref().ok())) {
            acf.write_csv(&dir.join("acf.csv"))?;
        }
        std::fs::write(
            dir.join("summary.json"),
            serde_json::to_string_pretty(&summary.to_flat_json())?,
        )?;
    }
    Ok(summary)
}

fn run_one(plan: &Plan<'_>, traj: u64) -> Result<TrajectoryResult> {
    let cfg = plan.cfg;
    let mut rng = RngStream::new(cfg.run.seed, traj);
    let mut forces = match &cfg.minibatch {
        None => ForceField::exact(plan.model),
        Some(mb) => ForceField::minibatch(
            plan.model,
            mb.schedule.clone(),
            mb.with_replacement,
            rng.substream(MINIBATCH_LANE),
        )?,
    };
    let mut writer = match &plan.sample_dir {
        Some(dir) => Some(sample_writer(
            &dir.join(format!("traj_{traj:05}.csv")),
            plan.model.dim(),
        )?),
        None => None,
    };
    let mut means = vec![WeightedMean::default(); plan.observables.len()];
    let mut histogram = cfg.histogram.as_ref().map(|h| h.build()).transpose()?;
    let mut dt_histogram = cfg
        .dt_histogram
        .as_ref()
        .map(|h| HistogramGrid::uniform(h.lo, h.hi, h.bins))
        .transpose()?;
    let (mut acf_t, mut acf_v) = (Vec::new(), Vec::new());
    let mut index = 0u64;
    let mut write_error: Option<csv::Error> = None;
    let mut row = Vec::new();

    let report = run_trajectory(
        &plan.sampler,
        &plan.init,
        &mut forces,
        &mut rng,
        cfg.run.n_steps,
        cfg.run.n_meas,
        |s| {
            if let Some(w) = writer.as_mut() {
                if index.is_multiple_of(cfg.output.thin) && write_error.is_none() {
                    row.clear();
                    row.push(format!("{:.16e}", s.t_phys));
                    row.push(format!("{:.16e}", s.weight));
                    row.extend(s.x.iter().chain(s.p).map(|v| format!("{v:.16e}")));
                    row.push(format!("{:.16e}", s.dt));
                    write_error = w.write_record(&row).err();
                }
            }
            if index >= cfg.run.burn_in {
                for (acc, o) in means.iter_mut().zip(&plan.observables) {
                    acc.push(o.eval(plan.model, s), s.weight);
                }
                if let Some(h) = histogram.as_mut() {
                    h.push(s.x, s.weight);
                }
                if let Some(h) = dt_histogram.as_mut() {
                    if s.step > 0 {
                        h.push(&[s.dt], 1.0);
                    }
                }
                if let Some(o) = &plan.acf_observable {
                    acf_t.push(s.t_phys);
                    acf_v.push(o.eval(plan.model, s));
                }
            }
            index += 1;
        },
    )?;
    if let Some(e) = write_error {
        return Err(e.into());
    }
    if let Some(mut w) = writer {
        w.flush()?;
    }
    let acf = cfg.acf.as_ref().map(|a| {
        let n = acf_v.len();
        acf_uniform(&acf_t, &acf_v, a.grid_dt, a.max_lag).map(|r| {
            let ess = ess_per_sample(&r, n);
            (r, ess)
        })
    });
    Ok(TrajectoryResult {
        report,
        means,
        histogram,
        dt_histogram,
        acf,
    })
}

fn sample_writer(path: &Path, dim: usize) -> Result<csv::Writer<BufWriter<File>>> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    let mut header = vec!["t_phys".to_string(), "weight".to_string()];
    header.extend((0..dim).map(|i| format!("x_{i}")));
    header.extend((0..dim).map(|i| format!("p_{i}")));
    header.push("dt_used".into());
    w.write_record(&header)?;
    Ok(w)
}

fn reduce(plan: &Plan<'_>, results: &[TrajectoryResult]) -> Result<RunSummary> {
    let mut warnings = Vec::new();
    let divergences: Vec<(u64, u64)> = results
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.report.diverged_at.map(|s| (i as u64, s)))
        .collect();
    let survivors: Vec<&TrajectoryResult> = results.iter().filter(|r| r.report.diverged_at.is_none()).collect();

    let mut observables = Vec::new();
    if !survivors.is_empty() {
        for (k, o) in plan.observables.iter().enumerate() {
            let per: Vec<f64> = survivors.iter().map(|r| r.means[k].mean()).collect::<Result<_>>()?;
            let name = o.to_string();
            observables.push(if per.len() >= 2 {
                let e = mean_across_trajectories(&per)?;
                ObservableSummary {
                    name,
                    mean: e.mean,
                    std_error: Some(e.std_error),
                    ci_low: Some(e.ci_low),
                    ci_high: Some(e.ci_high),
                }
            } else {
                ObservableSummary {
                    name,
                    mean: per[0],
                    std_error: None,
                    ci_low: None,
                    ci_high: None,
                }
            });
        }
    } else {
        warnings.push("all trajectories diverged; no estimates".to_string());
    }

    let (t, steps) = results
        .iter()
        .fold((0.0, 0u64), |(t, n), r| (t + r.report.t_phys, n + r.report.steps));
    let stepped: Vec<&TrajectoryReport> = results.iter().map(|r| &r.report).filter(|r| r.steps > 0).collect();

    let mut ess = Vec::new();
    for (i, r) in results.iter().enumerate() {
        match &r.acf {
            Some(Ok((_, e))) if r.report.diverged_at.is_none() => ess.push(*e),
            Some(Err(e)) => warnings.push(format!("trajectory {i}: {e}")),
            _ => {}
        }
    }

    Ok(RunSummary {
        potential: plan.model.name().to_string(),
        scheme: plan.sampler.scheme.label(),
        n_trajectories: plan.cfg.run.n_trajectories,
        n_steps: plan.cfg.run.n_steps,
        observables,
        mean_dt: if steps > 0 { t / steps as f64 } else { 0.0 },
        min_dt: stepped
            .iter()
            .map(|r| r.dt_min)
            .fold(f64::INFINITY, f64::min)
            .min(f64::MAX),
        max_dt: stepped.iter().map(|r| r.dt_max).fold(0.0, f64::max),
        n_diverged: divergences.len() as u64,
        divergences,
        gradient_evaluations: results.iter().map(|r| r.report.gradient_evaluations).sum(),
        wall_time_s: 0.0,
        ess_per_sample: (!ess.is_empty()).then(|| ess.iter().sum::<f64>() / ess.len() as f64),
        warnings,
    })
}

fn merge_grids<'a>(mut grids: impl Iterator<Item = &'a HistogramGrid>) -> Option<HistogramGrid> {
    let mut acc = grids.next()?.clone();
    for g in grids {
        acc.merge(g);
    }
    Some(acc)
}

/// Lag-wise mean of per-trajectory autocorrelations over their common range.
fn averaged_acf<'a>(acfs: impl Iterator<Item = &'a (AcfResult, f64)>) -> Option<AcfResult> {
    let acfs: Vec<&AcfResult> = acfs.map(|a| &a.0).collect();
    let first = *acfs.first()?;
    let len = acfs.iter().map(|a| a.values.len()).min()?;
    let n = acfs.len() as f64;
    Some(AcfResult {
        lags: first.lags[..len].to_vec(),
        values: (0..len)
            .map(|k| acfs.iter().map(|a| a.values[k]).sum::<f64>() / n)
            .collect(),
        grid_dt: first.grid_dt,
        n_grid: acfs.iter().map(|a| a.n_grid).min()?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{AcfSpec, AxisSpec, DtHistogramSpec, HistogramSpec};

    fn config(dir: Option<PathBuf>) -> RunConfig {
        let mut cfg = RunConfig::from_toml(
            r#"
[potential]
name = "double_well"
[integrator]
scheme = "zbaoabz"
[langevin]
temperature = 0.4
[run]
dtau = 0.01
n_steps = 2000
n_trajectories = 6
burn_in = 5
n_meas = 3
seed = 11
[init]
zeta_mode = "monitor"
x = [2.0]
[observables]
names = ["x0", "t_kin"]
[output]
thin = 4
"#,
        )
        .unwrap();
        cfg.output.dir = dir;
        cfg
    }

    #[test]
    fn outputs_are_complete() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = config(Some(dir.path().to_path_buf()));
        cfg.histogram = Some(HistogramSpec {
            axes: vec![AxisSpec {
                coord: 0,
                lo: -1.5,
                hi: 3.5,
                bins: 25,
            }],
        });
        cfg.dt_histogram = Some(DtHistogramSpec {
            lo: 0.0,
            hi: 0.1,
            bins: 10,
        });
        cfg.acf = Some(AcfSpec {
            observable: "x0".into(),
            grid_dt: 0.02,
            max_lag: 1.0,
        });
        let s = run_experiment(&cfg, Some(2)).unwrap();
        assert_eq!(s.n_diverged, 0);
        assert_eq!(s.gradient_evaluations, 6 * 2001);
        assert!(s.mean_dt > 0.001 && s.mean_dt <= 0.1);
        assert!(s.observable("x0").unwrap().ci_low.is_some());
        assert!(s.ess_per_sample.is_some());
        // 2000/3 + 1 = 667 recorded samples, every 4th kept
        let expected_rows = 667usize.div_ceil(4);
        for i in 0..6 {
            let text = std::fs::read_to_string(dir.path().join(format!("samples/traj_{i:05}.csv"))).unwrap();
            let mut lines = text.lines();
            assert_eq!(lines.next().unwrap(), "t_phys,weight,x_0,p_0,dt_used");
            assert_eq!(lines.count(), expected_rows);
        }
        for f in [
            "config.toml",
            "summary.json",
            "histogram.csv",
            "dt_histogram.csv",
            "acf.csv",
        ] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let copy = RunConfig::load(&dir.path().join("config.toml")).unwrap();
        assert_eq!(copy, cfg);
        let json: Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
        assert!(json.as_object().unwrap().values().all(|v| !v.is_object()));
        assert!(json["obs.x0.mean"].is_number());
    }

    #[test]
    fn worker_count_does_not_change_samples() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let sa = run_experiment(&config(Some(a.path().to_path_buf())), Some(1)).unwrap();
        let sb = run_experiment(&config(Some(b.path().to_path_buf())), Some(8)).unwrap();
        for i in 0..6 {
            let f = format!("samples/traj_{i:05}.csv");
            assert_eq!(
                std::fs::read(a.path().join(&f)).unwrap(),
                std::fs::read(b.path().join(&f)).unwrap()
            );
        }
        assert_eq!(sa.observables, sb.observables);
    }

    #[test]
    fn zero_steps_fail_validation() {
        let mut cfg = config(None);
        cfg.run.n_steps = 0;
        let err = run_experiment(&cfg, Some(1)).unwrap_err();
        assert!(err.to_string().contains("n_steps ≥ 1"));
    }

    #[test]
    fn divergence_is_reported_not_fatal() {
        let mut cfg = config(None);
        cfg.integrator.scheme = "baoab".into();
        cfg.run.dtau = 0.5;
        cfg.run.n_trajectories = 3;
        let s = run_experiment(&cfg, Some(1)).unwrap();
        assert!(s.all_diverged());
        assert_eq!(s.divergences.len(), 3);
        assert!(s.observables.is_empty());
    }
}
