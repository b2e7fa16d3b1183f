//! `ddspin` command-line driver.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ddspin::config::RunConfig;
use ddspin::export::{
    emit_plotdata, write_bimodality, write_fixed_points, write_mf_intervals, write_observables, write_snapshot,
    write_spectrum, write_trajectory,
};
use ddspin::meanfield::{mf_bistability_scan, mf_integrate, mf_tolerances};
use ddspin::mfqf::{mfqf_integrate, CorrelationObservables, MfqfState, RelaxationTrace};
use ddspin::sweep::{detect_branches, persist_diagram, persist_results, run_sweep, spectrum_scan, SteadyStateRecord, Tier};
use ddspin::{BlochVector, Error};

/// Eigenvalues written by `exact-scan` when the spectrum is requested.
const SPECTRUM_COUNT: usize = 6;

#[derive(Parser)]
#[command(name = "ddspin", version, about = "Driven-dissipative spin lattice solvers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Meanfield fixed points and bistable intervals over a sweep grid.
    MfScan(RunArgs),
    /// One correlator-closure trajectory from the all-down state.
    MfqfRun(RunArgs),
    /// Correlator-closure steady states over a sweep grid.
    MfqfSweep(RunArgs),
    /// Exact steady states, distributions and bimodality over a sweep grid.
    ExactScan(RunArgs),
    /// Plot-ready curve files from result directories.
    EmitPlotdata(PlotArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Defaults to `output` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// `key.path=value`, applied in order before validation.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long)]
    figure: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    threads: Option<usize>,
    /// Result directories written by the sweep commands.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{command} needs a config with tier '{want}', got '{got}'")]
    WrongTier { command: &'static str, want: Tier, got: Tier },
    #[error("no output directory: pass --out or set 'output' in the config")]
    NoOutput,
    #[error("{failed} of {total} points did not converge")]
    Unconverged { failed: usize, total: usize },
    #[error("thread pool: {0}")]
    Threads(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(Error::Config(_) | Error::InvalidParams(_) | Error::InvalidLattice(_) | Error::Capacity(_))
            | CliError::WrongTier { .. }
            | CliError::NoOutput
            | CliError::Threads(_) => 2,
            _ => 1,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

struct Prepared {
    config: RunConfig,
    out: PathBuf,
}

fn set_threads(threads: Option<usize>) -> Result<()> {
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Threads(e.to_string()))?;
    }
    Ok(())
}

fn prepare(args: &RunArgs, command: &'static str, tier: Tier) -> Result<Prepared> {
    set_threads(args.threads)?;
    let mut config = RunConfig::load(&args.config, &args.overrides)?;
    if config.tier != tier {
        return Err(CliError::WrongTier {
            command,
            want: tier,
            got: config.tier,
        });
    }
    if args.seed.is_some() {
        config.seed = args.seed;
    }
    let out = args.out.clone().or_else(|| config.output.clone()).ok_or(CliError::NoOutput)?;
    config.output = Some(out.clone());
    Ok(Prepared { config, out })
}

fn create_out(prep: &Prepared) -> Result<()> {
    fs::create_dir_all(&prep.out).map_err(|e| Error::io(&prep.out, e))?;
    let path = prep.out.join("config.json");
    fs::write(&path, prep.config.to_json() + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(())
}

fn check_converged(records: &[SteadyStateRecord]) -> Result<()> {
    let failed = records.iter().filter(|r| !r.converged).count();
    if failed > 0 {
        return Err(CliError::Unconverged {
            failed,
            total: records.len(),
        });
    }
    Ok(())
}

fn write_sweep(prep: &Prepared, records: &[SteadyStateRecord]) -> Result<()> {
    let plan = prep.config.sweep_plan()?;
    create_out(prep)?;
    persist_results(&plan, records, prep.config.seed, &prep.out)?;
    persist_diagram(&detect_branches(records)?, &prep.out)?;
    Ok(())
}

fn mf_scan(args: &RunArgs) -> Result<()> {
    let prep = prepare(args, "mf-scan", Tier::Mf)?;
    let plan = prep.config.sweep_plan()?;
    let z = plan.lattice.connectivity() as f64;
    let scan = mf_bistability_scan(&plan.params, plan.parameter, &plan.ascending(), z)?;
    let records = run_sweep(&plan)?;
    write_sweep(&prep, &records)?;
    write_fixed_points(&prep.out.join("fixed_points.csv"), &scan)?;
    write_mf_intervals(&prep.out.join("mf_intervals.csv"), &scan)?;
    for (a, b) in &scan.region.intervals {
        println!("bistable {} in [{a:.4}, {b:.4}]", plan.parameter);
    }
    check_converged(&records)
}

/// Meanfield flow from the all-down state sampled at `times`.
fn mf_reference(times: &[f64], prep: &Prepared) -> Result<RelaxationTrace> {
    let p = prep.config.params()?;
    let z = prep.config.lattice.connectivity() as f64;
    let mut out = RelaxationTrace::default();
    let mut mu = BlochVector::new(0.0, 0.0, -1.0);
    let mut now = 0.0;
    for &t in times {
        if t > now {
            mu = mf_integrate(mu, &p, z, t - now, mf_tolerances())
                .map_err(Error::from)?
                .last();
            now = t;
        }
        out.push(t, mu, ddspin::meanfield::mf_rhs(mu, &p, z));
    }
    Ok(out)
}

fn mfqf_run(args: &RunArgs) -> Result<()> {
    let prep = prepare(args, "mfqf-run", Tier::Mfqf)?;
    let run_cfg = prep
        .config
        .run
        .clone()
        .ok_or_else(|| Error::Config("mfqf-run needs a 'run' section".into()))?;
    let p = prep.config.params()?;
    let start = MfqfState::down(&prep.config.lattice)?;
    let opts = prep.config.tolerances.mfqf;
    let run = mfqf_integrate(&start, &p, run_cfg.t_final, &opts, &run_cfg.snapshot_times);
    let run = match run {
        Ok(r) => r,
        Err(failure) => {
            create_out(&prep)?;
            write_trajectory(&prep.out.join("trajectory.csv"), &failure.trace)?;
            write_snapshot(&prep.out.join("snapshot_failed.csv"), &failure.snapshot)?;
            return Err(failure.error.into());
        }
    };
    let reference = mf_reference(&run.trace.times, &prep)?;
    create_out(&prep)?;
    write_trajectory(&prep.out.join("trajectory.csv"), &run.trace)?;
    write_trajectory(&prep.out.join("mf_reference.csv"), &reference)?;
    for (i, s) in run.snapshots.iter().enumerate() {
        write_snapshot(&prep.out.join(format!("snapshot_{i:03}.csv")), s)?;
    }
    write_snapshot(&prep.out.join("snapshot_final.csv"), &run.final_state)?;
    let obs = CorrelationObservables::measure(&run.final_state.field, &run.trace);
    write_observables(&prep.out.join("observables.csv"), &obs)?;
    let mu = run.final_state.mu;
    println!(
        "t = {} mu = ({:.6}, {:.6}, {:.6}) residual {:.2e} steady {}",
        run.final_state.time, mu.x, mu.y, mu.z, run.residual, run.steady
    );
    Ok(())
}

fn mfqf_sweep(args: &RunArgs) -> Result<()> {
    let prep = prepare(args, "mfqf-sweep", Tier::Mfqf)?;
    let records = run_sweep(&prep.config.sweep_plan()?)?;
    write_sweep(&prep, &records)?;
    report_intervals(&records)?;
    check_converged(&records)
}

fn exact_scan(args: &RunArgs) -> Result<()> {
    let prep = prepare(args, "exact-scan", Tier::Exact)?;
    let plan = prep.config.sweep_plan()?;
    let records = run_sweep(&plan)?;
    let spectrum = if plan.exact.spectrum {
        Some(spectrum_scan(&plan, SPECTRUM_COUNT)?)
    } else {
        None
    };
    write_sweep(&prep, &records)?;
    write_bimodality(&prep.out.join("bimodality.csv"), &records)?;
    if let Some(rows) = spectrum {
        write_spectrum(&prep.out.join("spectrum.csv"), &rows)?;
    }
    let peak = records.iter().filter_map(|r| r.b_x).fold(0.0, f64::max);
    println!("max b_x {peak}");
    check_converged(&records)
}

fn report_intervals(records: &[SteadyStateRecord]) -> Result<()> {
    let d = detect_branches(records)?;
    for (a, b) in &d.intervals {
        println!("bistable {} in [{a}, {b}]", d.parameter);
    }
    Ok(())
}

fn plotdata(args: &PlotArgs) -> Result<()> {
    set_threads(args.threads)?;
    let manifest = emit_plotdata(&args.figure, &args.inputs, &args.out)?;
    for c in &manifest.curves {
        println!("{}", Path::new(&c.file).display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::MfScan(a) => mf_scan(a),
        Command::MfqfRun(a) => mfqf_run(a),
        Command::MfqfSweep(a) => mfqf_sweep(a),
        Command::ExactScan(a) => exact_scan(a),
        Command::EmitPlotdata(a) => plotdata(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
