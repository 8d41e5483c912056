use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use samadams::config::RunConfig;
use samadams::diagnostics::{stability_scan, write_scan_csv, QuadratureOracle};
use samadams::run::run_experiment;
use samadams::suites::{run_paper_suite, SuiteOptions, DEFAULT_SEED};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "samadams", version, about = "Adaptive-stepsize Langevin sampling")]
struct Cli {
    /// Worker threads; all cores when unset.
    #[arg(long, global = true, env = "SAMADAMS_WORKERS")]
    workers: Option<usize>,
    /// Output directory, overrides the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Random seed, overrides the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the trajectory ensemble described by a configuration file.
    Run { config: PathBuf },
    /// Run a named benchmark preset and check it against its criteria.
    Suite { name: String },
    /// Stability thresholds over the `[scan]` grid of a configuration file.
    Scan { config: PathBuf },
    /// Quadrature reference values of the configured observables.
    Oracle { config: PathBuf },
}

fn main() {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(2);
        }
    }
}

fn dispatch(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Run { config } => run(cli, config),
        Command::Suite { name } => suite(cli, name),
        Command::Scan { config } => with_pool(cli.workers, || scan(cli, config)),
        Command::Oracle { config } => with_pool(cli.workers, || oracle(cli, config)),
    }
}

fn with_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match workers {
        None => f(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .context("cannot start worker pool")?
            .install(f),
    }
}

fn load(cli: &Cli, path: &Path) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(seed) = cli.seed {
        cfg.run.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = Some(out.clone());
    }
    Ok(cfg)
}

fn out_dir(cli: &Cli, cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cli
        .out
        .clone()
        .or_else(|| cfg.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn run(cli: &Cli, path: &Path) -> Result<i32> {
    let cfg = load(cli, path)?;
    let summary = run_experiment(&cfg, cli.workers)?;
    println!("{}", serde_json::to_string_pretty(&summary.to_flat_json())?);
    for w in &summary.warnings {
        eprintln!("warning: {w}");
    }
    if summary.all_diverged() {
        eprintln!("error: all {} trajectories diverged", summary.n_trajectories);
        return Ok(1);
    }
    Ok(0)
}

fn suite(cli: &Cli, name: &str) -> Result<i32> {
    let opts = SuiteOptions {
        seed: cli.seed.unwrap_or(DEFAULT_SEED),
        out_dir: Some(cli.out.clone().unwrap_or_else(|| PathBuf::from("results").join(name))),
    };
    let report = run_paper_suite(name, &opts, cli.workers)?;
    for c in &report.criteria {
        println!("{c}");
    }
    if let Some(dir) = &opts.out_dir {
        println!("report written to {}", dir.join("report.json").display());
    }
    Ok(if report.passed { 0 } else { 1 })
}

fn scan(cli: &Cli, path: &Path) -> Result<i32> {
    let cfg = load(cli, path)?;
    let spec = cfg.scan_spec()?;
    let model = cfg.build_model()?;
    let init = cfg.build_init(model.dim())?;
    let cells = stability_scan(&spec, model.as_ref(), &init, |alpha, omega, dtau| {
        cfg.build_sampler_with(model.as_ref(), alpha, omega, dtau)
    })?;
    let path = out_dir(cli, &cfg)?.join("scan.csv");
    write_scan_csv(&cells, &path)?;
    println!("{:>10} {:>10} {:>14}  flag", "alpha", "omega", "max <dt>");
    for c in &cells {
        let dt = c.max_mean_dt.map_or("-".to_string(), |v| format!("{v:.5}"));
        println!("{:>10} {:>10} {:>14}  {}", c.alpha, c.omega, dt, c.flag.as_str());
    }
    println!("written {}", path.display());
    Ok(0)
}

fn oracle(cli: &Cli, path: &Path) -> Result<i32> {
    let cfg = load(cli, path)?;
    let spec = cfg
        .oracle
        .as_ref()
        .ok_or_else(|| anyhow!("{}: no [oracle] section", path.display()))?;
    let model = cfg.build_model()?;
    let observables = cfg.build_observables(model.dim())?;
    if observables.is_empty() {
        bail!("{}: no observables to evaluate", path.display());
    }
    let domain = spec.domain.iter().map(|[lo, hi]| (*lo, *hi)).collect();
    let quad = QuadratureOracle::new(domain, spec.nodes_per_axis, cfg.langevin.temperature)?;
    let mut values = BTreeMap::new();
    for (name, obs) in cfg.observables.names.iter().zip(&observables) {
        let v = quad.expectation(model.as_ref(), obs)?;
        println!("{name} = {v:.16e}");
        values.insert(name.clone(), v);
    }
    let path = out_dir(cli, &cfg)?.join("oracle.json");
    std::fs::write(&path, serde_json::to_string_pretty(&values)?)?;
    println!("written {}", path.display());
    Ok(0)
}
