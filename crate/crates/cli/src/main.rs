//! `ogb`: batch runner for output-matching experiments.
//!
//! Exit status: 0 success or feasible, 2 infeasible (or rank condition not
//! met), 3 configuration error, 4 numerical failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use ogb_core::error::Error;
use ogb_core::experiment::{
    empirical_min_length, min_length, prepare, rank_check, run_match, simulate, structure, sweep,
    write_sweep_csv, ExperimentConfig, Prepared,
};
use ogb_core::hankel::GpeVerdict;
use ogb_core::signal::{numbered_labels, Trajectory};

#[derive(Parser)]
#[command(
    name = "ogb",
    version,
    about = "Data-driven output matching experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Data lengths, comma separated.
    #[arg(long, value_delimiter = ',')]
    lengths: Option<Vec<usize>>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate plant data and the extended trajectory.
    Simulate(Common),
    /// Solve the matching problem and roll the plant out.
    Match(Common),
    /// Repeat matching on truncated data, one row per length.
    SweepLength(Common),
    /// Check the rank condition on the data Hankel matrix.
    RankCheck(Common),
    /// Minimal data lengths, from the formula and from the data.
    MinLength(Common),
    /// Estimate the difference-equation structure.
    Structure(Common),
}

enum Failure {
    Config(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Numerical(_)
            | Error::NonFinite { .. }
            | Error::Domain { .. }
            | Error::NegativeLevel { .. } => Failure::Numerical(e.to_string()),
            _ => Failure::Config(e.to_string()),
        }
    }
}

type Outcome = Result<bool, Failure>;

fn load(common: &Common) -> Result<ExperimentConfig, Failure> {
    let mut config = ExperimentConfig::load(&common.config)
        .map_err(|e| Failure::Config(format!("{}: {e}", common.config.display())))?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(lengths) = &common.lengths {
        config.lengths = lengths.clone();
    }
    fs::create_dir_all(&common.out)
        .map_err(|e| Failure::Config(format!("{}: {e}", common.out.display())))?;
    Ok(config)
}

fn write_json(dir: &Path, name: &str, value: &Value) -> Result<(), Failure> {
    let path = dir.join(name);
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Config(e.to_string()))?;
    fs::write(&path, text + "\n").map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn write_csv(dir: &Path, name: &str, t: &Trajectory) -> Result<(), Failure> {
    Ok(t.save_csv(dir.join(name))?)
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types serialize")
}

fn cmd_simulate(c: &Common) -> Outcome {
    let config = load(c)?;
    let p = prepare(&config)?;
    let (data, ext) = simulate(&p)?;
    write_csv(&c.out, "data.csv", &data)?;
    write_csv(&c.out, "extended.csv", &ext)?;
    println!(
        "simulated {} samples ({} extended samples, {} additional inputs)",
        data.len(),
        ext.len(),
        p.model.n_nl()
    );
    Ok(true)
}

fn cmd_match(c: &Common) -> Outcome {
    let config = load(c)?;
    let p = prepare(&config)?;
    let run = run_match(&p, None)?;
    let r = &run.report;
    let status = if r.feasible { "feasible" } else { "infeasible" };
    write_json(
        &c.out,
        "match.json",
        &json!({ "status": status, "report": to_value(r), "diagnostics": to_value(&run.solution.diagnostics) }),
    )?;
    write_csv(&c.out, "solution.csv", &run.solution.table()?)?;
    let n_y = p.y_r.channels();
    let outputs = Trajectory::stack(&[
        &p.y_r.clone().relabel(numbered_labels("y_ref", n_y))?,
        &run.y_realized
            .clone()
            .relabel(numbered_labels("y_real", n_y))?,
    ])?;
    write_csv(&c.out, "outputs.csv", &outputs)?;
    println!(
        "{status}: rrmse {:.3e}, {} free parameters, residual {:.3e}",
        r.rrmse, r.parameter_count, r.residual
    );
    Ok(r.feasible)
}

fn lengths_of(p: &Prepared) -> Vec<usize> {
    if p.config.lengths.is_empty() {
        vec![p.config.data.excitation.length]
    } else {
        p.config.lengths.clone()
    }
}

fn cmd_sweep(c: &Common) -> Outcome {
    let config = load(c)?;
    let p = prepare(&config)?;
    let reports = sweep(&p, &lengths_of(&p))?;
    let path = c.out.join("sweep.csv");
    let file =
        fs::File::create(&path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    write_sweep_csv(&reports, file)?;
    write_json(&c.out, "sweep.json", &to_value(&reports))?;
    for r in &reports {
        println!(
            "T = {:>6}  rrmse {:.3e}  {}",
            r.length,
            r.rrmse,
            if r.feasible { "feasible" } else { "infeasible" }
        );
    }
    Ok(true)
}

fn cmd_rank(c: &Common) -> Outcome {
    let config = load(c)?;
    let p = prepare(&config)?;
    let mut rows = Vec::new();
    let mut all = true;
    for t in lengths_of(&p) {
        let g = rank_check(&p, Some(t))?;
        all &= g.verdict == GpeVerdict::Satisfied;
        println!(
            "T = {t}: rank {} of required {} ({:?})",
            g.rank, g.required, g.verdict
        );
        rows.push(json!({ "length": t, "report": to_value(&g) }));
    }
    write_json(&c.out, "rank.json", &Value::Array(rows))?;
    Ok(all)
}

fn cmd_min_length(c: &Common) -> Outcome {
    let config = load(c)?;
    let formula = min_length(&config);
    let p = prepare(&config)?;
    let empirical = empirical_min_length(&p)?;
    write_json(
        &c.out,
        "min_length.json",
        &json!({ "formula": to_value(&formula), "empirical": empirical }),
    )?;
    println!(
        "T_ogb = {}, T_lti = {}, extra = {}, empirical = {}",
        formula.ogb,
        formula.lti,
        formula.extra,
        empirical.map_or("not reached".to_string(), |t| t.to_string())
    );
    Ok(true)
}

fn cmd_structure(c: &Common) -> Outcome {
    let config = load(c)?;
    let p = prepare(&config)?;
    let rep = structure(&p)?;
    let lines = rep.describe(&p.model);
    write_json(
        &c.out,
        "structure.json",
        &json!({ "report": to_value(&rep), "summary": lines }),
    )?;
    for l in &lines {
        println!("{l}");
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match &cli.command {
        Command::Simulate(c) => cmd_simulate(c),
        Command::Match(c) => cmd_match(c),
        Command::SweepLength(c) => cmd_sweep(c),
        Command::RankCheck(c) => cmd_rank(c),
        Command::MinLength(c) => cmd_min_length(c),
        Command::Structure(c) => cmd_structure(c),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(Failure::Config(m)) => {
            eprintln!("configuration error: {m}");
            ExitCode::from(3)
        }
        Err(Failure::Numerical(m)) => {
            eprintln!("numerical failure: {m}");
            ExitCode::from(4)
        }
    }
}
