//! Command-line front end: `analyze`, `simulate`, `validate`, and `sweep`
//! subcommands that wire workload specs through the analyzer and simulators
//! and emit CSV/JSON artifacts.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::chain::{build_saturated_chain, build_sss_chain, DEFAULT_STATE_CAP};
use crate::closed_form::{closed_form_k2, K2Params};
use crate::error::{Error, Result};
use crate::marc::{analyze, MarcSolution};
use crate::sim::{simulate_atleastk, simulate_coupled, simulate_mmsr, simulate_msj, SimConfig, SimResult};
use crate::workload::{exponential_class, load_spec, WorkloadSpec};

#[derive(Parser)]
#[command(name = "marc-queue", version, about = "Mean response time analysis and simulation of multiserver-job FCFS queues")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the MARC quantities of a workload and report the prediction.
    Analyze(AnalyzeArgs),
    /// Run a simulator over a grid of loads and emit a CSV of estimates.
    Simulate(SimulateArgs),
    /// Compare simulated mean response time against the prediction.
    Validate(ValidateArgs),
    /// Sweep a parameter of a two-class {1, k} family and record delta(Y_d)
    /// against the prediction's relative error at a fixed load.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Workload config (JSON).
    #[arg(long)]
    spec: PathBuf,
    /// Cross-check against the two-server two-class closed forms.
    #[arg(long)]
    closed_form_k2: bool,
    /// Also build and solve the full saturated chain.
    #[arg(long)]
    full_sat: bool,
    /// State-count cap for chain enumeration.
    #[arg(long, default_value_t = DEFAULT_STATE_CAP)]
    cap: usize,
    /// Dump the chain's transitions and state legend as CSV.
    #[arg(long)]
    dump_chain: bool,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct SimGrid {
    /// Workload config (JSON).
    #[arg(long)]
    spec: PathBuf,
    /// Grid of lambda/lambda* values in (0, 1).
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99])]
    loads: Vec<f64>,
    #[arg(long, default_value_t = 1_000_000)]
    arrivals: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    reps: u32,
    #[arg(long, default_value_t = DEFAULT_STATE_CAP)]
    cap: usize,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    grid: SimGrid,
    /// Which system to simulate.
    #[arg(long, value_enum, default_value_t = SystemKind::Msj)]
    system: SystemKind,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    grid: SimGrid,
}

#[derive(Copy, Clone, ValueEnum)]
enum SystemKind {
    Msj,
    Mmsr,
    Ak,
    Coupled,
}

impl SystemKind {
    fn name(self) -> &'static str {
        match self {
            SystemKind::Msj => "msj",
            SystemKind::Mmsr => "mmsr",
            SystemKind::Ak => "ak",
            SystemKind::Coupled => "coupled",
        }
    }
}

#[derive(Copy, Clone, ValueEnum)]
enum SweepParam {
    P1,
    Mu1,
}

#[derive(Args)]
struct SweepArgs {
    /// Server count of the two-class {1, k} family.
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Which parameter to sweep.
    #[arg(long, value_enum)]
    param: SweepParam,
    #[arg(long)]
    min: f64,
    #[arg(long)]
    max: f64,
    /// Number of grid points; p1 is spaced evenly, mu1 multiplicatively.
    #[arg(long, default_value_t = 100)]
    points: usize,
    /// Fixed p1 while sweeping mu1.
    #[arg(long, default_value_t = 0.5)]
    p1: f64,
    /// Fixed mu1 while sweeping p1.
    #[arg(long, default_value_t = 1.0)]
    mu1: f64,
    /// Rate of the need-k class.
    #[arg(long, default_value_t = 1.0)]
    mu2: f64,
    /// Fixed load lambda/lambda* for the relative-error column.
    #[arg(long, default_value_t = 0.8)]
    load: f64,
    #[arg(long, default_value_t = 100_000)]
    arrivals: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    reps: u32,
    #[arg(long, default_value_t = DEFAULT_STATE_CAP)]
    cap: usize,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

/// Parse arguments, run, and map errors to the documented exit codes:
/// 0 success, 2 validation error, 3 numeric failure, 4 instability abort.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::Parse(_) | Error::Validation(_) | Error::Domain(_) | Error::Io(_) => 2,
                Error::CapExceeded { .. } | Error::Numeric(_) => 3,
                Error::Unstable(_) => 4,
            };
            ExitCode::from(code)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Analyze(args) => cmd_analyze(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Validate(args) => cmd_validate(args),
        Command::Sweep(args) => cmd_sweep(args),
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    spec_sha256: Option<String>,
    seed: Option<u64>,
    arrivals: Option<u64>,
    replications: Option<u32>,
    loads: Option<&'a [f64]>,
}

fn write_manifest(out: &Path, m: &Manifest) -> Result<()> {
    fs::create_dir_all(out)?;
    fs::write(
        out.join("manifest.json"),
        serde_json::to_string_pretty(m).expect("manifest serializes"),
    )?;
    Ok(())
}

fn spec_hash(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    Ok(format!("{:x}", Sha256::digest(bytes)))
}

fn check_loads(loads: &[f64]) -> Result<()> {
    if loads.is_empty() {
        return Err(Error::Validation("load grid is empty".into()));
    }
    if loads.iter().any(|&l| !(l > 0.0 && l < 1.0)) {
        return Err(Error::Validation(
            "load grid values must lie strictly in (0, 1)".into(),
        ));
    }
    Ok(())
}

fn solution_csv(sol: &MarcSolution) -> String {
    let mut out = String::from("state,pi,yd,delta\n");
    for (i, label) in sol.states.iter().enumerate() {
        out.push_str(&format!(
            "\"{}\",{},{},{}\n",
            label, sol.stationary[i], sol.departure[i], sol.delta[i]
        ));
    }
    out
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<()> {
    let spec = load_spec(&args.spec)?;
    let sss = build_sss_chain(&spec, args.cap)?;
    let sol = analyze(&sss)?;

    fs::create_dir_all(&args.out)?;
    fs::write(
        args.out.join("analysis.json"),
        serde_json::to_string_pretty(&sol).expect("solution serializes"),
    )?;
    fs::write(args.out.join("analysis.csv"), solution_csv(&sol))?;
    if args.dump_chain {
        fs::write(args.out.join("chain.csv"), sss.dump_csv())?;
        fs::write(args.out.join("chain_legend.csv"), sss.legend_csv())?;
    }
    write_manifest(
        &args.out,
        &Manifest {
            command: "analyze",
            version: env!("CARGO_PKG_VERSION"),
            spec_sha256: Some(spec_hash(&args.spec)?),
            seed: None,
            arrivals: None,
            replications: None,
            loads: None,
        },
    )?;

    println!("SSS states: {}", sss.len());
    println!("lambda* = {}", sol.lambda_star);
    println!("delta(Y_d) = {}", sol.delta_yd);
    println!(
        "E[T] dominant term: (1/{:.6}) * (1 + {:.6}) / (1 - lambda/{:.6})",
        sol.lambda_star, sol.delta_yd, sol.lambda_star
    );

    if args.full_sat {
        let sat = build_saturated_chain(&spec, args.cap)?;
        let sat_sol = analyze(&sat)?;
        println!(
            "Sat states: {} (lambda* = {}, delta(Y_d) = {})",
            sat.len(),
            sat_sol.lambda_star,
            sat_sol.delta_yd
        );
    }

    if args.closed_form_k2 {
        let params = k2_params_of(&spec)?;
        let cf = closed_form_k2(params)?;
        println!(
            "closed-form k=2: lambda* = {}, delta(Y_d) = {} (gap {:.3e}, {:.3e})",
            cf.lambda_star,
            cf.delta_yd,
            (cf.lambda_star - sol.lambda_star).abs(),
            (cf.delta_yd - sol.delta_yd).abs()
        );
    }
    Ok(())
}

/// Interpret a workload as the two-server two-class exponential family.
fn k2_params_of(spec: &WorkloadSpec) -> Result<K2Params> {
    let classes = spec.classes();
    if spec.k() != 2
        || classes.len() != 2
        || classes.iter().any(|c| c.duration.num_phases() != 1)
    {
        return Err(Error::Validation(
            "--closed-form-k2 needs k = 2 with two exponential classes".into(),
        ));
    }
    let (c1, c2) = if classes[0].need == 1 && classes[1].need == 2 {
        (&classes[0], &classes[1])
    } else if classes[0].need == 2 && classes[1].need == 1 {
        (&classes[1], &classes[0])
    } else {
        return Err(Error::Validation(
            "--closed-form-k2 needs one need-1 class and one need-2 class".into(),
        ));
    };
    Ok(K2Params {
        p1: c1.prob,
        mu1: c1.duration.exit()[0],
        mu2: c2.duration.exit()[0],
    })
}

fn sim_config(grid: &SimGrid, lambda: f64) -> SimConfig {
    let mut cfg = SimConfig::new(lambda, grid.seed);
    cfg.n_arrivals = grid.arrivals;
    cfg.replications = grid.reps;
    cfg
}

fn opt(e: Option<crate::sim::Estimate>) -> (String, String) {
    match e {
        Some(e) => (e.mean.to_string(), e.ci.to_string()),
        None => (String::new(), String::new()),
    }
}

fn simulate_row(system: SystemKind, lambda: f64, load: f64, res: &SimResult, grid: &SimGrid) -> String {
    let (mm, mm_ci) = opt(res.mismatch_fraction);
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
        system.name(),
        lambda,
        load,
        res.mean_t.mean,
        res.mean_t.ci,
        res.mean_n.mean,
        res.mean_n.ci,
        res.p_queue_empty.mean,
        res.p_queue_empty.ci,
        mm,
        mm_ci,
        grid.arrivals,
        grid.seed
    )
}

const SIM_HEADER: &str = "system,lambda,lambda_over_lambda_star,mean_T,ci_T,mean_N,ci_N,p_empty,ci_empty,mismatch,ci_mismatch,n_arrivals,seed\n";

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let grid = &args.grid;
    check_loads(&grid.loads)?;
    let spec = load_spec(&grid.spec)?;
    let chain = build_sss_chain(&spec, grid.cap)?;
    let sol = analyze(&chain)?;

    let mut csv = String::from(SIM_HEADER);
    let mut loads = grid.loads.clone();
    loads.sort_by(f64::total_cmp);
    for &load in &loads {
        let lambda = load * sol.lambda_star;
        let cfg = sim_config(grid, lambda);
        let res = match args.system {
            SystemKind::Msj => simulate_msj(&spec, &cfg)?,
            SystemKind::Mmsr => simulate_mmsr(&chain, &cfg)?,
            SystemKind::Ak => simulate_atleastk(&spec, &cfg)?,
            SystemKind::Coupled => simulate_coupled(&spec, &cfg)?,
        };
        csv.push_str(&simulate_row(args.system, lambda, load, &res, grid));
    }

    fs::create_dir_all(&grid.out)?;
    fs::write(grid.out.join("simulate.csv"), &csv)?;
    write_manifest(
        &grid.out,
        &Manifest {
            command: "simulate",
            version: env!("CARGO_PKG_VERSION"),
            spec_sha256: Some(spec_hash(&grid.spec)?),
            seed: Some(grid.seed),
            arrivals: Some(grid.arrivals),
            replications: Some(grid.reps),
            loads: Some(&loads),
        },
    )?;
    print!("{csv}");
    Ok(())
}

/// Spearman rank correlation; ties get their first-occurrence rank, which is
/// adequate for trend reporting over a small load grid.
fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    let rank = |v: &[f64]| -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        for (pos, &i) in idx.iter().enumerate() {
            r[i] = pos as f64;
        }
        r
    };
    let rx = rank(xs);
    let ry = rank(ys);
    let n = xs.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

fn cmd_validate(args: ValidateArgs) -> Result<()> {
    let grid = &args.grid;
    check_loads(&grid.loads)?;
    let spec = load_spec(&grid.spec)?;
    let chain = build_sss_chain(&spec, grid.cap)?;
    let sol = analyze(&chain)?;

    let mut loads = grid.loads.clone();
    loads.sort_by(f64::total_cmp);
    let mut csv = String::from("load,sim_T,pred_T,abs_gap,rel_error\n");
    let mut rel_errors = Vec::new();
    for &load in &loads {
        let lambda = load * sol.lambda_star;
        let cfg = sim_config(grid, lambda);
        let res = simulate_msj(&spec, &cfg)?;
        let (pred_t, _) = crate::marc::predict(sol.lambda_star, sol.delta_yd, lambda)?;
        let sim_t = res.mean_t.mean;
        let abs_gap = (sim_t - pred_t).abs();
        let rel_error = abs_gap / sim_t;
        rel_errors.push(rel_error);
        csv.push_str(&format!("{load},{sim_t},{pred_t},{abs_gap},{rel_error}\n"));
    }

    fs::create_dir_all(&grid.out)?;
    fs::write(grid.out.join("validate.csv"), &csv)?;
    write_manifest(
        &grid.out,
        &Manifest {
            command: "validate",
            version: env!("CARGO_PKG_VERSION"),
            spec_sha256: Some(spec_hash(&grid.spec)?),
            seed: Some(grid.seed),
            arrivals: Some(grid.arrivals),
            replications: Some(grid.reps),
            loads: Some(&loads),
        },
    )?;
    print!("{csv}");
    if loads.len() > 1 {
        println!(
            "spearman(load, rel_error) = {:.3} (expected <= 0: relative error shrinks toward saturation)",
            spearman(&loads, &rel_errors)
        );
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    if args.points == 0 {
        return Err(Error::Validation("sweep needs at least one point".into()));
    }
    if !(args.load > 0.0 && args.load < 1.0) {
        return Err(Error::Validation("sweep load must lie in (0, 1)".into()));
    }
    if !(args.min > 0.0 && args.max >= args.min) {
        return Err(Error::Validation(
            "sweep range needs 0 < min <= max".into(),
        ));
    }

    let grid_values: Vec<f64> = match args.param {
        SweepParam::P1 => (0..args.points)
            .map(|i| {
                if args.points == 1 {
                    args.min
                } else {
                    args.min + (args.max - args.min) * i as f64 / (args.points - 1) as f64
                }
            })
            .collect(),
        SweepParam::Mu1 => (0..args.points)
            .map(|i| {
                if args.points == 1 {
                    args.min
                } else {
                    let f = i as f64 / (args.points - 1) as f64;
                    args.min * (args.max / args.min).powf(f)
                }
            })
            .collect(),
    };

    let mut csv = String::from("param,lambda_star,delta_yd,rel_error\n");
    for &v in &grid_values {
        let (p1, mu1) = match args.param {
            SweepParam::P1 => (v, args.mu1),
            SweepParam::Mu1 => (args.p1, v),
        };
        let spec = WorkloadSpec::new(
            args.k,
            vec![
                exponential_class(1, p1, mu1)?,
                exponential_class(args.k, 1.0 - p1, args.mu2)?,
            ],
        )?;
        let chain = build_sss_chain(&spec, args.cap)?;
        let sol = analyze(&chain)?;
        let lambda = args.load * sol.lambda_star;
        let mut cfg = SimConfig::new(lambda, args.seed);
        cfg.n_arrivals = args.arrivals;
        cfg.replications = args.reps;
        let res = simulate_msj(&spec, &cfg)?;
        let (pred_t, _) = crate::marc::predict(sol.lambda_star, sol.delta_yd, lambda)?;
        let rel_error = (res.mean_t.mean - pred_t).abs() / res.mean_t.mean;
        csv.push_str(&format!("{v},{},{},{rel_error}\n", sol.lambda_star, sol.delta_yd));
    }

    fs::create_dir_all(&args.out)?;
    fs::write(args.out.join("sweep.csv"), &csv)?;
    write_manifest(
        &args.out,
        &Manifest {
            command: "sweep",
            version: env!("CARGO_PKG_VERSION"),
            spec_sha256: None,
            seed: Some(args.seed),
            arrivals: Some(args.arrivals),
            replications: Some(args.reps),
            loads: Some(std::slice::from_ref(&args.load)),
        },
    )?;
    print!("{csv}");
    Ok(())
}
