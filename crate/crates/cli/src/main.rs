//! `armagm`: simulate ARMA graphical models, identify them from data, and run
//! the benchmark studies.

mod config;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Mutex;

use armagm::bench::{self, LevelSetGrid, RESULTS_HEADER};
use armagm::gml::Method;
use armagm::synth::{random_model, simulate};
use armagm::{Error, TimeSeries};
use clap::{Parser, Subcommand};
use log::warn;
use serde::Serialize;

use config::{Overrides, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "armagm", version, about = "Sparse ARMA graphical model identification")]
struct Cli {
    #[command(subcommand)]
    verb: Option<Verb>,

    /// JSON run configuration; built-in defaults when absent.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    #[arg(long, global = true, value_parser = parse_method, value_name = "me|gml|gml-ar")]
    method: Option<Method>,

    /// Threads for Monte Carlo trials.
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,

    /// Frequency grid size.
    #[arg(long, global = true, value_name = "K")]
    grid: Option<usize>,

    /// Print the effective configuration as JSON and exit.
    #[arg(long, global = true)]
    dump_config: bool,
}

#[derive(Subcommand, Debug)]
enum Verb {
    /// Draw a random model and a sample path; writes model.json and series.csv.
    Simulate,
    /// Estimate a model from a CSV series; writes model.json, report.json and edges.csv.
    Identify {
        /// Input CSV with header ch1,...,chm.
        input: Option<PathBuf>,
    },
    /// Monte Carlo comparison; writes results.csv and summary.json.
    Montecarlo,
    /// Level-set sweeps of the two posterior bounds; writes one CSV matrix each.
    Levelsets {
        /// Series to sweep instead of simulated data.
        input: Option<PathBuf>,
    },
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Failure classes with their exit codes.
enum Failure {
    Input(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_input_error() || matches!(e, Error::Io(_)) {
            Failure::Input(e.to_string())
        } else {
            Failure::Numerical(e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Numerical(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_path(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?,
        None => RunConfig::default(),
    };
    let input = match &cli.verb {
        Some(Verb::Identify { input }) | Some(Verb::Levelsets { input }) => input.clone(),
        _ => None,
    };
    cfg.apply(&Overrides {
        seed: cli.seed,
        out: cli.out.clone(),
        method: cli.method,
        jobs: cli.jobs,
        grid: cli.grid,
        input,
    });
    cfg.validate()?;
    if cli.dump_config {
        println!("{}", to_json(&cfg)?);
        return Ok(());
    }
    match cli.verb {
        Some(Verb::Simulate) => cmd_simulate(&cfg),
        Some(Verb::Identify { .. }) => cmd_identify(&cfg),
        Some(Verb::Montecarlo) => cmd_montecarlo(&cfg),
        Some(Verb::Levelsets { .. }) => cmd_levelsets(&cfg),
        None => Err(Failure::Input("no command given (simulate, identify, montecarlo or levelsets)".into())),
    }
}

fn to_json<T: Serialize>(v: &T) -> Result<String, Failure> {
    serde_json::to_string_pretty(v).map_err(|e| Failure::Numerical(format!("serialization: {e}")))
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<(), Failure> {
    fs::write(path, to_json(v)? + "\n")?;
    Ok(())
}

fn cmd_simulate(cfg: &RunConfig) -> Result<(), Failure> {
    let s = &cfg.simulate;
    let model = random_model(&s.recipe)?;
    let y = simulate(&model, s.n_obs, s.burn_in, cfg.seed)?;
    fs::create_dir_all(&cfg.out)?;
    model.write_json(&cfg.out.join("model.json"))?;
    y.write_csv_path(&cfg.out.join("series.csv"))?;
    println!("wrote {} samples of {} channels to {}", y.len(), y.dim(), cfg.out.display());
    Ok(())
}

fn cmd_identify(cfg: &RunConfig) -> Result<(), Failure> {
    let id = &cfg.identify;
    let path = id
        .input
        .as_ref()
        .ok_or_else(|| Failure::Input("identify needs an input CSV (positional argument or identify.input)".into()))?;
    let y = TimeSeries::read_csv_path(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    let est = id.gml.moments(&y)?;
    let (model, report) = id.method.run(&est, &id.gml)?;
    if !report.converged {
        warn!("{} did not fully converge; see report.json", id.method.name());
    }
    fs::create_dir_all(&cfg.out)?;
    model.write_json(&cfg.out.join("model.json"))?;
    write_json(&cfg.out.join("report.json"), &report)?;
    let mut w = BufWriter::new(File::create(cfg.out.join("edges.csv"))?);
    writeln!(w, "j,h")?;
    for [j, h] in &report.support {
        writeln!(w, "{j},{h}")?;
    }
    w.flush()?;
    let list: Vec<String> = report.support.iter().map(|[j, h]| format!("{j}-{h}")).collect();
    println!("{}: {} edges [{}]", id.method.name(), list.len(), list.join(" "));
    Ok(())
}

fn cmd_montecarlo(cfg: &RunConfig) -> Result<(), Failure> {
    let mc = &cfg.montecarlo;
    fs::create_dir_all(&cfg.out)?;
    write_json(&cfg.out.join("config.json"), cfg)?;
    let final_path = cfg.out.join("results.csv");
    let partial_path = cfg.out.join("results.csv.partial");
    // rows land here in completion order; the name marks the file as
    // incomplete until the sorted results replace it
    let mut partial = File::create(&partial_path)?;
    writeln!(partial, "{RESULTS_HEADER}")?;
    let partial = Mutex::new(partial);
    let io_error = Mutex::new(None::<std::io::Error>);
    let rows = bench::monte_carlo(mc, cfg.seed, cfg.jobs, |rows| {
        let mut f = partial.lock().expect("poisoned");
        for r in rows {
            if let Err(e) = writeln!(f, "{}", bench::result_csv_line(r)) {
                io_error.lock().expect("poisoned").get_or_insert(e);
            }
        }
        let _ = f.flush();
    })?;
    if let Some(e) = io_error.into_inner().expect("poisoned") {
        return Err(e.into());
    }
    let mut w = BufWriter::new(File::create(&final_path)?);
    bench::write_results_csv(&mut w, &rows)?;
    w.flush()?;
    drop(partial);
    fs::remove_file(&partial_path)?;
    let summary = bench::summarize(&rows, &mc.estimators, cfg.seed);
    write_json(&cfg.out.join("summary.json"), &summary)?;
    for s in &summary.estimators {
        let med = |q: &Option<bench::Quartiles>| q.as_ref().map(|q| format!("{:.4}", q.median)).unwrap_or("-".into());
        println!(
            "{:7} median err {} median e_sp {} failures {}/{}",
            s.estimator.name(),
            med(&s.err),
            med(&s.e_sp),
            s.failures,
            s.trials
        );
    }
    if rows.iter().all(|r| r.failed()) {
        return Err(Failure::Numerical("every trial failed".into()));
    }
    Ok(())
}

#[derive(Serialize)]
struct LevelsetSummary {
    alpha: f64,
    resolution: usize,
    tilde_minimizer: [f64; 2],
    check_minimizer: [f64; 2],
    /// `(p1, p2)` of the eight-neighbour local minima.
    tilde_minima: Vec<[f64; 2]>,
    check_minima: Vec<[f64; 2]>,
}

fn minima(g: &LevelSetGrid) -> Vec<[f64; 2]> {
    g.local_minima().into_iter().map(|(r, c)| [g.p1[c], g.p2[r]]).collect()
}

fn cmd_levelsets(cfg: &RunConfig) -> Result<(), Failure> {
    let ls = &cfg.levelsets;
    let series = match &ls.input {
        Some(p) => Some(TimeSeries::read_csv_path(p).map_err(|e| Failure::Input(format!("{}: {e}", p.display())))?),
        None => None,
    };
    let outcome = bench::levelset_study(&ls.study, series.as_ref(), cfg.seed)?;
    fs::create_dir_all(&cfg.out)?;
    for g in [&outcome.tilde, &outcome.check] {
        let mut w = BufWriter::new(File::create(cfg.out.join(format!("levelset_{}.csv", g.objective.name())))?);
        g.write_csv(&mut w)?;
        w.flush()?;
    }
    let coeffs = |x: &armagm::DualPoint| [x.p.coeffs[0], x.p.coeffs[1]];
    let summary = LevelsetSummary {
        alpha: outcome.alpha,
        resolution: ls.study.range.resolution,
        tilde_minimizer: coeffs(&outcome.tilde_point),
        check_minimizer: coeffs(&outcome.check_point),
        tilde_minima: minima(&outcome.tilde),
        check_minima: minima(&outcome.check),
    };
    write_json(&cfg.out.join("levelsets.json"), &summary)?;
    println!(
        "local minima: tilde {}, check {} (alpha {:.4})",
        summary.tilde_minima.len(),
        summary.check_minima.len(),
        summary.alpha
    );
    Ok(())
}
