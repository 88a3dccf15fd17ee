use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use dislo_core::barriers::{run_barrier_suite, BarrierSuiteConfig};
use dislo_core::correctors::{default_psi_grid, q_lattice, solve_psi, verify_corrector_bounds, QField};
use dislo_core::criteria;
use dislo_core::harness::{energy_monotone, run_sweep, CriterionStatus, SweepConfig};
use dislo_core::io;
use dislo_core::layer::{compute_constants, default_layer_grid, layer_for, LayerProfile};
use dislo_core::ode::{check_distance_bound, integrate, Orientation, ParticleState};
use dislo_core::potential::PotentialSpec;
use dislo_core::solver::{run_with_layer, ExperimentConfig, LayerChoice};
use log::info;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

#[derive(Parser, Debug)]
#[command(name = "dislo", version, about = "Multilayer dislocation dynamics: simulation and verification")]
struct Cli {
    /// JSON configuration file (simulate, sweep).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[arg(long, global = true, default_value = "info")]
    log_level: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Runs the coupled bulk/interface solver from a JSON config.
    Simulate {
        #[arg(long, value_enum)]
        layer: Option<LayerArg>,
    },
    /// Integrates the particle system.
    Ode(OdeArgs),
    /// Solves the correctors and fits their decay constants.
    Correctors(CorrectorArgs),
    /// Verifies the barrier inequalities and the sandwich property.
    Barriers(BarrierArgs),
    /// Runs an ε-sweep (the demo sweep without --config).
    Sweep,
    /// Runs acceptance criteria.
    Verify {
        /// Comma-separated criterion ids, or "all".
        #[arg(long, default_value = "all")]
        criteria: String,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LayerArg {
    Explicit,
    General,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum OrientationArg {
    Super,
    None,
    Sub,
}

impl From<OrientationArg> for Orientation {
    fn from(o: OrientationArg) -> Self {
        match o {
            OrientationArg::Super => Orientation::Super,
            OrientationArg::None => Orientation::None,
            OrientationArg::Sub => Orientation::Sub,
        }
    }
}

#[derive(Args, Debug)]
struct OdeArgs {
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    centers: Vec<f64>,
    /// Defaults to the value computed from the layer.
    #[arg(long)]
    c0: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    delta: f64,
    #[arg(long, value_enum, default_value = "none")]
    orientation: OrientationArg,
    #[arg(long = "T", default_value_t = 1.0)]
    t_final: f64,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
}

#[derive(Args, Debug)]
struct CorrectorArgs {
    #[arg(long, value_enum, default_value = "explicit")]
    layer: LayerArg,
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    /// Sets `b = min(1, a)/2` for the cutoff radius `R = 2ε^{−b}`.
    #[arg(long, default_value_t = 1.0)]
    a: f64,
}

#[derive(Args, Debug)]
struct BarrierArgs {
    #[arg(long, default_value_t = 1.0)]
    a: f64,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-0.5,0.5")]
    centers: Vec<f64>,
    #[arg(long = "T", default_value_t = 0.5)]
    t_final: f64,
}

fn main() {
    let cli = Cli::parse();
    env_logger::Builder::new().parse_filters(&cli.log_level).init();
    match execute(&cli) {
        Ok(true) => {}
        Ok(false) => std::process::exit(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(2);
        }
    }
}

/// Returns whether every check of the command passed.
fn execute(cli: &Cli) -> Result<bool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.max(1))
        .build_global()
        .context("configuring the worker pool")?;
    fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    let statuses = match &cli.command {
        Command::Simulate { layer } => simulate(cli, *layer)?,
        Command::Ode(args) => ode(cli, args)?,
        Command::Correctors(args) => correctors(cli, args)?,
        Command::Barriers(args) => barriers(cli, args)?,
        Command::Sweep => sweep(cli)?,
        Command::Verify { criteria: sel } => criteria::run_selected(&criteria::parse_selection(sel)?)?,
    };
    for s in &statuses {
        println!("{} {} measured={:.6e} threshold={:.6e}", s.status, s.criterion_id, s.measured, s.threshold);
    }
    io::write_json(&cli.out.join("summary.json"), &statuses)?;
    Ok(statuses.iter().all(CriterionStatus::passed))
}

fn read_config(path: Option<&Path>) -> Result<Option<String>> {
    path.map(|p| fs::read_to_string(p).with_context(|| format!("reading {}", p.display())))
        .transpose()
}

fn simulate(cli: &Cli, layer: Option<LayerArg>) -> Result<Vec<CriterionStatus>> {
    let Some(text) = read_config(cli.config.as_deref())? else {
        bail!("simulate needs --config");
    };
    let mut cfg = ExperimentConfig::from_json(&text)?;
    if let Some(l) = layer {
        cfg.layer = match l {
            LayerArg::Explicit => LayerChoice::Explicit,
            LayerArg::General => LayerChoice::General,
        };
    }
    let potential = PotentialSpec::from_config_value(&cfg.potential)?;
    let profile = layer_for(&potential, cfg.layer == LayerChoice::Explicit)?;
    if matches!(profile, LayerProfile::Tabulated(_)) {
        io::write_layer(&cli.out, &profile, &default_layer_grid())?;
    }
    let rec = run_with_layer(&cfg, &potential, &profile)?;
    io::write_record(&cli.out, &rec, true)?;
    io::write_json(&cli.out.join("config.json"), &cfg)?;
    info!("simulate: {} steps, config hash {}", rec.steps, rec.config_hash);
    let (ok, worst) = energy_monotone(&rec.energy, 1e-6);
    Ok(vec![CriterionStatus::new("energy_non_increasing", ok, worst, 1e-6)])
}

fn ode(cli: &Cli, args: &OdeArgs) -> Result<Vec<CriterionStatus>> {
    let c0 = match args.c0 {
        Some(c) => c,
        None => compute_constants(&LayerProfile::explicit(), &PotentialSpec::sinusoidal())?.0,
    };
    let orientation: Orientation = args.orientation.into();
    let traj = integrate(&ParticleState::new(args.centers.clone())?, c0, args.delta, orientation, args.t_final, args.tol)?;
    let n = traj.n();
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("z_{i}")));
    header.extend((1..=n).map(|i| format!("v_{i}")));
    let rows: Vec<Vec<f64>> = traj
        .samples
        .iter()
        .map(|s| std::iter::once(s.time).chain(s.positions.iter().copied()).chain(s.velocities.iter().copied()).collect())
        .collect();
    io::write_table_csv(&cli.out.join("trajectory.csv"), &header, &rows)?;
    if n >= 2 && orientation == Orientation::None {
        let rep = check_distance_bound(&traj)?;
        let slack = rep.checks.iter().map(|c| c.measured - c.threshold).fold(f64::INFINITY, f64::min);
        Ok(vec![CriterionStatus::new("distance_bound", rep.all_passed(), slack, 0.0)])
    } else {
        Ok(Vec::new())
    }
}

fn correctors(cli: &Cli, args: &CorrectorArgs) -> Result<Vec<CriterionStatus>> {
    let potential = PotentialSpec::sinusoidal();
    let layer = layer_for(&potential, matches!(args.layer, LayerArg::Explicit))?;
    if matches!(layer, LayerProfile::Tabulated(_)) {
        io::write_layer(&cli.out, &layer, &default_layer_grid())?;
    }
    let psi = solve_psi(&layer, &potential, layer.c0(), layer.alpha(), default_psi_grid())?;
    let rows: Vec<Vec<f64>> = (-2000..=2000)
        .map(|k| {
            let x = k as f64 * 0.05;
            vec![x, psi.trace_at(x)]
        })
        .collect();
    io::write_table_csv(&cli.out.join("psi_trace.csv"), &["x".into(), "psi0".into()], &rows)?;
    let b = args.a.min(1.0) / 2.0;
    let r = 2.0 * args.eps.powf(-b);
    let mut q = QField::new(&layer, r)?;
    let pts = q_lattice(r);
    q.precompute(&pts)?;
    let rows: Vec<Vec<f64>> = pts
        .iter()
        .map(|&(x, y)| {
            let (v, gx, gy) = q.value_grad(x, y);
            vec![x, y, v, gx, gy]
        })
        .collect();
    let header: Vec<String> = ["x", "y", "q", "qx", "qy"].iter().map(|s| s.to_string()).collect();
    io::write_table_csv(&cli.out.join("q_samples.csv"), &header, &rows)?;
    let report = verify_corrector_bounds(&q, &psi)?;
    io::write_json(&cli.out.join("bounds_report.json"), &report)?;
    Ok(report
        .checks
        .iter()
        .map(|c| CriterionStatus::new(c.name.clone(), c.passed, c.measured, c.threshold))
        .collect())
}

fn barriers(cli: &Cli, args: &BarrierArgs) -> Result<Vec<CriterionStatus>> {
    let potential = PotentialSpec::sinusoidal();
    let layer = Arc::new(LayerProfile::explicit());
    let psi = Arc::new(solve_psi(&layer, &potential, layer.c0(), layer.alpha(), default_psi_grid())?);
    let cfg = BarrierSuiteConfig::new(args.eps, args.a, args.delta, args.centers.clone(), args.t_final);
    let o = run_barrier_suite(&cfg, layer, psi, &potential)?;
    io::write_json(&cli.out.join("exponents.json"), &o.exponents)?;
    let path = cli.out.join("residuals.csv");
    let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(["kind", "x", "y", "t", "case", "margin", "tol"])?;
    for s in &o.samples {
        let r = &s.sample;
        w.write_record([
            format!("{:?}", s.kind).to_lowercase(),
            r.x.to_string(),
            r.y.to_string(),
            r.t.to_string(),
            r.case.to_string(),
            r.margin.to_string(),
            r.tol.to_string(),
        ])?;
    }
    w.flush()?;
    let sandwich = serde_json::json!({
        "scheme_error": o.scheme_error,
        "q_term_constant": o.q_constant,
        "initial_ordering": o.initial,
        "sandwich": o.sandwich,
        "residuals": o.residual_reports,
        "exponent_checks": o.exponent_report,
    });
    io::write_json(&cli.out.join("sandwich_report.json"), &sandwich)?;
    let mut out = Vec::new();
    for rep in std::iter::once(&o.exponent_report)
        .chain(&o.residual_reports)
        .chain([&o.initial, &o.sandwich])
    {
        out.push(CriterionStatus::new(
            rep.title.clone(),
            rep.all_passed(),
            rep.failures().count() as f64,
            0.0,
        ));
    }
    Ok(out)
}

fn sweep(cli: &Cli) -> Result<Vec<CriterionStatus>> {
    let cfg = match read_config(cli.config.as_deref())? {
        Some(text) => serde_json::from_str::<SweepConfig>(&text).context("parsing sweep config")?,
        None => SweepConfig::demo(),
    };
    let outcome = run_sweep(&cfg, Some(&cli.out))?;
    Ok(outcome.summary)
}
