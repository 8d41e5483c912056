//! Run configuration: a sectioned TOML file whose dotted keys mirror the
//! library parameters (`kernel.M`, `relax.alpha`, `run.dtau`, ...).

use crate::adaptivity::{KernelVariant, MonitorFunction, MonitorMode, SundmanKernel};
use crate::averaging::{HistogramAxis, HistogramGrid, Observable};
use crate::diagnostics::ScanSpec;
use crate::error::{Error, Result};
use crate::integrators::{AdaptiveScheme, BaseIntegrator, BatchSchedule, LangevinParams, ZPlacement, ZetaInit};
use crate::potentials::{Potential, PotentialSpec};
use crate::sampler::{Sampler, Scheme, TrajectoryInit};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::sync::Arc;

pub const INTEGRATOR_NAMES: &str =
    "baoab, obabo, oba, euler_maruyama_overdamped, zbaoabz, zphiz:<base>, zbaoab, baoabz";

/// Resolves an integrator name to its base scheme and, for adaptive
/// schemes, the placement of the `ζ` update.
pub fn parse_integrator(name: &str) -> Result<(BaseIntegrator, Option<ZPlacement>)> {
    let base = |n: &str| match n {
        "baoab" => Some(BaseIntegrator::Baoab),
        "obabo" => Some(BaseIntegrator::Obabo),
        "oba" => Some(BaseIntegrator::Oba),
        "euler_maruyama_overdamped" | "euler_maruyama" => Some(BaseIntegrator::EulerMaruyama),
        _ => None,
    };
    let name = name.trim();
    let parsed = match name {
        "zbaoabz" => Some((BaseIntegrator::Baoab, Some(ZPlacement::Symmetric))),
        "zbaoab" => Some((BaseIntegrator::Baoab, Some(ZPlacement::Leading))),
        "baoabz" => Some((BaseIntegrator::Baoab, Some(ZPlacement::Trailing))),
        _ => match name.strip_prefix("zphiz:") {
            Some(b) => base(b.trim()).map(|b| (b, Some(ZPlacement::Symmetric))),
            None => base(name).map(|b| (b, None)),
        },
    };
    parsed.ok_or_else(|| Error::UnknownName {
        kind: "integrator",
        name: name.to_string(),
        valid: INTEGRATOR_NAMES.to_string(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSpec {
    pub scheme: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelSpec {
    pub variant: KernelVariant,
    pub m: f64,
    #[serde(rename = "M")]
    pub big_m: f64,
    pub r: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// Stepsize factor of the constant kernel.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self {
            variant: KernelVariant::Psi1,
            m: 0.1,
            big_m: 10.0,
            r: 0.25,
            epsilon: None,
            value: None,
        }
    }
}

impl KernelSpec {
    pub fn build(&self) -> Result<SundmanKernel> {
        match self.variant {
            KernelVariant::Psi1 => SundmanKernel::psi1(self.m, self.big_m, self.r),
            KernelVariant::Psi2 => SundmanKernel::psi2(self.m, self.big_m, self.r),
            KernelVariant::AdamRaw => SundmanKernel::adam_raw(self.epsilon.unwrap_or(1e-8)),
            KernelVariant::Constant => SundmanKernel::constant(self.value.unwrap_or(1.0)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MonitorSpec {
    pub mode: MonitorMode,
    pub omega: f64,
    pub s: f64,
}

impl Default for MonitorSpec {
    fn default() -> Self {
        Self {
            mode: MonitorMode::ForceNormPower,
            omega: 1.0,
            s: 2.0,
        }
    }
}

impl MonitorSpec {
    pub fn build(&self) -> Result<MonitorFunction> {
        match self.mode {
            MonitorMode::ForceNormPower => MonitorFunction::force_norm_power(self.omega, self.s),
            MonitorMode::Zero => Ok(MonitorFunction::zero()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RelaxSpec {
    pub alpha: f64,
}

impl Default for RelaxSpec {
    fn default() -> Self {
        Self { alpha: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LangevinSpec {
    pub gamma: f64,
    pub temperature: f64,
}

impl Default for LangevinSpec {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            temperature: 1.0,
        }
    }
}

fn one() -> u64 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub dtau: f64,
    pub n_steps: u64,
    #[serde(default = "one")]
    pub n_trajectories: u64,
    /// Leading recorded samples discarded from every average.
    #[serde(default)]
    pub burn_in: u64,
    /// Record every `n_meas`-th step.
    #[serde(default = "one")]
    pub n_meas: u64,
    #[serde(default)]
    pub seed: u64,
}

impl RunSpec {
    /// Recorded samples per trajectory, including the initial state.
    pub fn recorded_samples(&self) -> u64 {
        self.n_steps / self.n_meas.max(1) + 1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSpec {
    #[serde(default = "zero_init")]
    pub zeta_mode: ZetaInit,
    /// Defaults to the origin.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<f64>>,
    /// Defaults to zero.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<Vec<f64>>,
}

fn zero_init() -> ZetaInit {
    ZetaInit::Zero
}

impl Default for InitSpec {
    fn default() -> Self {
        Self {
            zeta_mode: ZetaInit::Zero,
            x: None,
            p: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObservablesSpec {
    pub names: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    /// Write per-trajectory sample files.
    pub samples: bool,
    /// Keep every `thin`-th recorded sample in the sample files.
    pub thin: u64,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: None,
            samples: true,
            thin: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    pub coord: usize,
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
}

/// Reweighted position histogram over one or more coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistogramSpec {
    pub axes: Vec<AxisSpec>,
}

impl HistogramSpec {
    pub fn build(&self) -> Result<HistogramGrid> {
        let axes = self
            .axes
            .iter()
            .map(|a| HistogramAxis::new(a.coord, a.lo, a.hi, a.bins))
            .collect::<Result<Vec<_>>>()?;
        HistogramGrid::new(axes)
    }
}

/// Unweighted histogram of the stepsizes used.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DtHistogramSpec {
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinibatchConfig {
    pub schedule: BatchSchedule,
    #[serde(default)]
    pub with_replacement: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcfSpec {
    pub observable: String,
    pub grid_dt: f64,
    pub max_lag: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    pub alphas: Vec<f64>,
    pub omegas: Vec<f64>,
    pub dtaus: Vec<f64>,
    pub n_trajectories: u64,
    pub n0: u64,
    pub dtau0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSpec {
    /// `[lo, hi]` per axis.
    pub domain: Vec<[f64; 2]>,
    pub nodes_per_axis: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub potential: PotentialSpec,
    pub integrator: IntegratorSpec,
    #[serde(default)]
    pub kernel: KernelSpec,
    #[serde(default)]
    pub monitor: MonitorSpec,
    #[serde(default)]
    pub relax: RelaxSpec,
    #[serde(default)]
    pub langevin: LangevinSpec,
    pub run: RunSpec,
    #[serde(default)]
    pub init: InitSpec,
    #[serde(default)]
    pub observables: ObservablesSpec,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub histogram: Option<HistogramSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_histogram: Option<DtHistogramSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub minibatch: Option<MinibatchConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acf: Option<AcfSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan: Option<ScanConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleSpec>,
}

impl RunConfig {
    /// Parses without validating.
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    /// Reads and validates a configuration file.
    pub fn load(path: &Path) -> Result<Self> {
        let cfg = Self::from_toml(&std::fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks every section, reporting all problems at once.
    pub fn validate(&self) -> Result<()> {
        let issues = self.issues();
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(issues))
        }
    }

    fn issues(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut note = |r: Result<()>| {
            if let Err(e) = r {
                out.push(describe(&e));
            }
        };
        let model = self.build_model();
        let adaptive = match parse_integrator(&self.integrator.scheme) {
            Ok((_, placement)) => placement.is_some(),
            Err(e) => {
                note(Err(Error::config("integrator.scheme", e.to_string())));
                false
            }
        };
        if adaptive {
            note(self.kernel.build().map(drop));
            note(self.monitor.build().map(drop));
            if !(self.relax.alpha.is_finite() && self.relax.alpha > 0.0) {
                note(Err(Error::config("relax.alpha", "must be positive")));
            }
        }
        note(LangevinParams::new(self.langevin.gamma, self.langevin.temperature, self.run.dtau).map(drop));
        let run = &self.run;
        if run.n_steps < 1 {
            note(Err(Error::config("run.n_steps", "n_steps ≥ 1 required")));
        }
        if run.n_trajectories < 1 {
            note(Err(Error::config("run.n_trajectories", "must be at least 1")));
        }
        if run.n_meas < 1 {
            note(Err(Error::config("run.n_meas", "must be at least 1")));
        }
        if run.n_steps >= 1 && run.burn_in >= run.recorded_samples() {
            note(Err(Error::config(
                "run.burn_in",
                format!("must be below the {} recorded samples", run.recorded_samples()),
            )));
        }
        if self.output.thin < 1 {
            note(Err(Error::config("output.thin", "must be at least 1")));
        }
        for name in &self.observables.names {
            if let Err(e) = name.parse::<Observable>() {
                note(Err(Error::config("observables.names", e.to_string())));
            }
        }
        if let Some(a) = &self.acf {
            if let Err(e) = a.observable.parse::<Observable>() {
                note(Err(Error::config("acf.observable", e.to_string())));
            }
            if !(a.grid_dt > 0.0 && a.max_lag >= a.grid_dt) {
                note(Err(Error::config("acf", "need grid_dt > 0 and max_lag ≥ grid_dt")));
            }
        }
        if let Some(h) = &self.histogram {
            note(
                h.build()
                    .map(drop)
                    .map_err(|e| Error::config("histogram", describe(&e))),
            );
        }
        if let Some(h) = &self.dt_histogram {
            note(
                HistogramGrid::uniform(h.lo, h.hi, h.bins)
                    .map(drop)
                    .map_err(|e| Error::config("dt_histogram", describe(&e))),
            );
        }
        if let Some(s) = &self.scan {
            note(self.scan_spec_from(s).validate());
        }
        if let Some(o) = &self.oracle {
            if o.nodes_per_axis == 0 {
                note(Err(Error::config("oracle.nodes_per_axis", "must be positive")));
            }
        }
        match model {
            Err(e) => note(Err(e)),
            Ok(model) => {
                let d = model.dim();
                note(self.build_init(d).map(drop));
                note(self.build_observables(d).map(drop));
                if let Some(a) = &self.acf {
                    if let Ok(o) = a.observable.parse::<Observable>() {
                        note(
                            o.check_dim(d)
                                .map_err(|e| Error::config("acf.observable", describe(&e))),
                        );
                    }
                }
                if let Some(h) = &self.histogram {
                    if h.axes.iter().any(|a| a.coord >= d) {
                        note(Err(Error::config(
                            "histogram.axes",
                            format!("coordinates must be below {d}"),
                        )));
                    }
                }
                if let Some(o) = &self.oracle {
                    if o.domain.len() != d {
                        note(Err(Error::config(
                            "oracle.domain",
                            format!("expected {d} intervals, got {}", o.domain.len()),
                        )));
                    }
                }
                if let Some(mb) = &self.minibatch {
                    match model.as_data_model() {
                        None => note(Err(Error::config(
                            "minibatch",
                            format!("potential `{}` has no data decomposition", model.name()),
                        ))),
                        Some(data) => note(mb.schedule.validate(data.n_data())),
                    }
                }
            }
        }
        out
    }

    pub fn build_model(&self) -> Result<Arc<dyn Potential>> {
        self.potential.build()
    }

    pub fn langevin_params(&self) -> Result<LangevinParams> {
        LangevinParams::new(self.langevin.gamma, self.langevin.temperature, self.run.dtau)
    }

    /// Sampler with overridden `(α, Ω, Δτ)`; used by stability scans.
    pub fn build_sampler_with(&self, model: &dyn Potential, alpha: f64, omega: f64, dtau: f64) -> Result<Sampler> {
        let (base, placement) = parse_integrator(&self.integrator.scheme)?;
        let params = LangevinParams::new(self.langevin.gamma, self.langevin.temperature, dtau)?;
        let scheme = match placement {
            None => Scheme::Fixed(base),
            Some(placement) => {
                let monitor = MonitorSpec {
                    omega,
                    ..self.monitor.clone()
                };
                Scheme::Adaptive {
                    base,
                    placement,
                    scheme: AdaptiveScheme::new(self.kernel.build()?, monitor.build()?, alpha, dtau)?,
                }
            }
        };
        let mut sampler = Sampler::new(scheme, params);
        // log-likelihood energies of data models are large but harmless
        sampler.divergence.check_energy = model.as_data_model().is_none();
        Ok(sampler)
    }

    pub fn build_sampler(&self, model: &dyn Potential) -> Result<Sampler> {
        self.build_sampler_with(model, self.relax.alpha, self.monitor.omega, self.run.dtau)
    }

    pub fn build_observables(&self, dim: usize) -> Result<Vec<Observable>> {
        self.observables
            .names
            .iter()
            .map(|n| {
                let o: Observable = n.parse()?;
                o.check_dim(dim)?;
                Ok(o)
            })
            .collect()
    }

    pub fn build_init(&self, dim: usize) -> Result<TrajectoryInit> {
        let get = |v: &Option<Vec<f64>>, field: &str| -> Result<Vec<f64>> {
            match v {
                None => Ok(vec![0.0; dim]),
                Some(v) if v.len() == dim => Ok(v.clone()),
                Some(v) => Err(Error::config(
                    field,
                    format!("expected {dim} components, got {}", v.len()),
                )),
            }
        };
        Ok(TrajectoryInit {
            x0: get(&self.init.x, "init.x")?,
            p0: get(&self.init.p, "init.p")?,
            zeta: self.init.zeta_mode,
        })
    }

    fn scan_spec_from(&self, s: &ScanConfig) -> ScanSpec {
        ScanSpec {
            alphas: s.alphas.clone(),
            omegas: s.omegas.clone(),
            dtaus: s.dtaus.clone(),
            n_trajectories: s.n_trajectories,
            n0: s.n0,
            dtau0: s.dtau0,
            seed: self.run.seed,
            baseline: s.baseline,
        }
    }

    pub fn scan_spec(&self) -> Result<ScanSpec> {
        let s = self
            .scan
            .as_ref()
            .ok_or_else(|| Error::config("scan", "section missing"))?;
        Ok(self.scan_spec_from(s))
    }
}

fn describe(e: &Error) -> String {
    match e {
        Error::Config { field, message } => format!("{field}: {message}"),
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DOUBLE_WELL: &str = r#"
[potential]
name = "double_well"

[integrator]
scheme = "zbaoabz"

[kernel]
variant = "psi1"
m = 0.1
M = 10.0
r = 0.25

[monitor]
omega = 1.0
s = 2.0

[relax]
alpha = 1.0

[langevin]
gamma = 1.0
temperature = 0.4

[run]
dtau = 0.01
n_steps = 1000
n_trajectories = 4
burn_in = 10
seed = 7

[init]
zeta_mode = "monitor"
x = [2.0]

[observables]
names = ["x0", "indicator:x0<0.5", "t_kin"]

[histogram]
axes = [{ coord = 0, lo = -1.5, hi = 3.5, bins = 50 }]

[oracle]
domain = [[-1.5, 3.5]]
nodes_per_axis = 400
"#;

    #[test]
    fn parses_and_validates() {
        let cfg = RunConfig::from_toml(DOUBLE_WELL).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.kernel.big_m, 10.0);
        assert_eq!(cfg.run.n_meas, 1);
        let model = cfg.build_model().unwrap();
        let s = cfg.build_sampler(model.as_ref()).unwrap();
        assert_eq!(s.scheme.label(), "zbaoabz");
        assert_eq!(cfg.build_init(1).unwrap().x0, vec![2.0]);
        assert_eq!(cfg.build_observables(1).unwrap().len(), 3);
    }

    #[test]
    fn round_trip_is_identity() {
        let cfg = RunConfig::from_toml(DOUBLE_WELL).unwrap();
        let again = RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(cfg, again);

        let mut logreg = cfg.clone();
        logreg.potential = PotentialSpec::named("logreg");
        logreg.minibatch = Some(MinibatchConfig {
            schedule: BatchSchedule::Alternating {
                sizes: vec![1, 100],
                period: 50,
            },
            with_replacement: true,
        });
        logreg.acf = Some(AcfSpec {
            observable: "x0".into(),
            grid_dt: 0.1,
            max_lag: 5.0,
        });
        logreg.dt_histogram = Some(DtHistogramSpec {
            lo: 0.0,
            hi: 0.1,
            bins: 20,
        });
        let again = RunConfig::from_toml(&logreg.to_toml().unwrap()).unwrap();
        assert_eq!(logreg, again);
    }

    #[test]
    fn zero_steps_rejected() {
        let text = DOUBLE_WELL.replace("n_steps = 1000", "n_steps = 0");
        let err = RunConfig::from_toml(&text).unwrap().validate().unwrap_err();
        assert!(err.to_string().contains("run.n_steps: n_steps ≥ 1"), "{err}");
    }

    #[test]
    fn all_problems_are_listed_with_paths() {
        let text = DOUBLE_WELL
            .replace("M = 10.0", "M = 0.05")
            .replace("x = [2.0]", "x = [2.0, 1.0]")
            .replace("\"t_kin\"", "\"bogus\"");
        let err = RunConfig::from_toml(&text).unwrap().validate().unwrap_err();
        let msg = err.to_string();
        for path in ["kernel.M", "init.x", "observables.names"] {
            assert!(msg.contains(path), "{path} missing from {msg}");
        }
    }

    #[test]
    fn unknown_keys_and_names_are_errors() {
        let text = DOUBLE_WELL.replace("alpha = 1.0", "alpha = 1.0\nbeta = 2.0");
        assert!(matches!(RunConfig::from_toml(&text), Err(Error::TomlRead(_))));
        assert!(parse_integrator("leapfrog").is_err());
        assert_eq!(
            parse_integrator("zphiz:obabo").unwrap(),
            (BaseIntegrator::Obabo, Some(ZPlacement::Symmetric))
        );
        assert_eq!(parse_integrator("euler_maruyama_overdamped").unwrap().1, None);
    }

    #[test]
    fn minibatch_needs_data_model() {
        let mut cfg = RunConfig::from_toml(DOUBLE_WELL).unwrap();
        cfg.minibatch = Some(MinibatchConfig {
            schedule: BatchSchedule::Constant { batch_size: 1 },
            with_replacement: false,
        });
        assert!(cfg.validate().unwrap_err().to_string().contains("minibatch"));
    }
}
