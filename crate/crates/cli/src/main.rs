//! `tnes`: fit, simulate and study four-parameter truncated normal models.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use truncnorm_es::asymptotics::{jacobian, musigma_limit_cov, Mat2, Mat4};
use truncnorm_es::classify::{
    iris_petal_length, parse_labeled_csv, run_split_study, write_confusion, write_confusion_header,
    OddSplit, SplitConfig,
};
use truncnorm_es::simulate::{
    fmt_g17, log_grid, run_bound_dist_study, run_consistency_study, select_cases,
    summarize_quantiles, write_bound_record, write_header, write_quantile_table, write_record,
    InitMode, SimRecord, StudyPlan,
};
use truncnorm_es::solver::{fit, EsConfig};
use truncnorm_es::truncnorm::TnParams;

const DEFAULT_SEED: u64 = 20_240_601;

#[derive(Parser, Debug)]
#[command(name = "tnes", version, about = "Truncated normal estimation with unknown bounds")]
struct Cli {
    /// Worker threads for simulate, bound-dist and classify (0 = all cores)
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw a sorted sample and write it as a one-column CSV
    Sample(SampleArgs),
    /// Fit all four parameters to a one-column CSV of observations
    Fit(FitArgs),
    /// Consistency study: replicate sample-and-fit over cases and sizes
    Simulate(StudyArgs),
    /// Bound-estimator study: adds the scaled bound errors z_l, z_u
    BoundDist(StudyArgs),
    /// Limiting covariance, moment matrices and Jacobian at a parameter
    Asymptotics(AsymptoticsArgs),
    /// Repeated train/test splits comparing TQDA with QDA + atypicality
    Classify(ClassifyArgs),
}

#[derive(Args, Debug)]
struct SampleArgs {
    /// Parameters as mu,sigma,tau-l,tau-u
    #[arg(long, value_parser = parse_theta, allow_hyphen_values = true)]
    theta: TnParams,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Output file (default: stdout)
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct EsArgs {
    /// Stop when the relative log-likelihood change drops below this
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 500)]
    max_iters: usize,
    /// Box for mu as lo,hi
    #[arg(long, value_parser = parse_pair, default_value = "-10,10", allow_hyphen_values = true)]
    mu_box: (f64, f64),
    /// Box for sigma as lo,hi
    #[arg(long, value_parser = parse_pair, default_value = "0.001,10")]
    sigma_box: (f64, f64),
    /// Cap on each bound correction, in units of sigma
    #[arg(long, default_value_t = 10.0)]
    width_cap: f64,
}

impl EsArgs {
    fn config(&self) -> EsConfig {
        EsConfig {
            tol_rel_loglik: self.tol,
            max_iters: self.max_iters,
            mu_box: self.mu_box,
            sigma_box: self.sigma_box,
            width_cap_multiplier: self.width_cap,
            record_trace: false,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum InitArg {
    /// Sample mean, standard deviation, minimum and maximum
    Sample,
    /// The value given by --theta
    Truth,
}

#[derive(Args, Debug)]
struct FitArgs {
    /// One-column CSV of observations; an optional non-numeric header line is skipped
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = InitArg::Sample)]
    init: InitArg,
    /// Starting value for --init truth, as mu,sigma,tau-l,tau-u
    #[arg(long, value_parser = parse_theta, allow_hyphen_values = true)]
    theta: Option<TnParams>,
    /// Also write the result as JSON to this file
    #[arg(long)]
    json: Option<PathBuf>,
    #[command(flatten)]
    es: EsArgs,
}

#[derive(Args, Debug)]
struct StudyArgs {
    /// Case numbers 1-6, comma separated (default: all)
    #[arg(long, value_delimiter = ',')]
    cases: Vec<usize>,
    /// Sample sizes, comma separated (default depends on the study)
    #[arg(long, value_delimiter = ',')]
    n: Vec<usize>,
    /// Number of log-spaced sizes in [10, 1000] when --n is absent (simulate only)
    #[arg(long, default_value_t = 8)]
    grid_len: usize,
    /// Replicates per (case, n) cell (default 100 for simulate, 2000 for bound-dist)
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = InitArg::Sample)]
    init: InitArg,
    /// Record CSV (default: stdout)
    #[arg(long)]
    output: Option<PathBuf>,
    /// Write per-cell quantiles of the estimates to this file
    #[arg(long)]
    summary: Option<PathBuf>,
    #[command(flatten)]
    es: EsArgs,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug)]
struct AsymptoticsArgs {
    /// True parameters as mu,sigma,tau-l,tau-u
    #[arg(long, value_parser = parse_theta, allow_hyphen_values = true)]
    theta: TnParams,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum OddArg {
    Floor,
    Ceil,
}

#[derive(Args, Debug)]
struct ClassifyArgs {
    /// CSV with header label,value (default: bundled iris petal lengths)
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "setosa,versicolor")]
    known: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "virginica")]
    holdout: Vec<String>,
    #[arg(long, default_value_t = 500)]
    splits: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Atypicality cutoff for the QDA baseline
    #[arg(long, default_value_t = 0.05)]
    cutoff: f64,
    /// Where the extra observation of an odd-sized class goes: floor keeps it in test
    #[arg(long, value_enum, default_value_t = OddArg::Floor)]
    odd: OddArg,
    #[arg(long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    es: EsArgs,
}

fn parse_numbers(s: &str, count: usize) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != count {
        return Err(format!("expected {count} comma-separated numbers, got `{s}`"));
    }
    parts
        .iter()
        .map(|p| p.parse::<f64>().map_err(|_| format!("`{p}` is not a number")))
        .collect()
}

fn parse_theta(s: &str) -> Result<TnParams, String> {
    let v = parse_numbers(s, 4)?;
    TnParams::new(v[0], v[1], v[2], v[3]).map_err(|e| e.to_string())
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let v = parse_numbers(s, 2)?;
    Ok((v[0], v[1]))
}

/// Failure after argument parsing; always exit code 2.
#[derive(Debug)]
struct Failure(String);

impl From<truncnorm_es::error::Error> for Failure {
    fn from(e: truncnorm_es::error::Error) -> Self {
        Failure(e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure(format!("I/O error: {e}"))
    }
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    match path {
        Some(p) => {
            let f = File::create(p).map_err(|e| Failure(format!("cannot create {}: {e}", p.display())))?;
            Ok(Box::new(BufWriter::new(f)))
        }
        None => Ok(Box::new(BufWriter::new(io::stdout().lock()))),
    }
}

fn read_text(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure(format!("cannot read {}: {e}", path.display())))
}

/// Parses a one-column CSV. A non-numeric first line is a header.
fn parse_observations(text: &str) -> Result<Vec<f64>, Failure> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if line.contains(',') {
            return Err(Failure(format!("line {}: expected a single column, got `{line}`", i + 1)));
        }
        match line.parse::<f64>() {
            Ok(v) if v.is_finite() => out.push(v),
            Err(_) if i == 0 => {}
            _ => return Err(Failure(format!("line {}: `{line}` is not a finite number", i + 1))),
        }
    }
    Ok(out)
}

fn cmd_sample(a: &SampleArgs) -> Result<(), Failure> {
    let draws = a.theta.sample(a.n, a.seed)?;
    let mut w = open_output(a.output.as_deref())?;
    writeln!(w, "x")?;
    for x in draws {
        writeln!(w, "{}", fmt_g17(x))?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_fit(a: &FitArgs) -> Result<(), Failure> {
    let data = parse_observations(&read_text(&a.input)?)?;
    let init = match (a.init, a.theta) {
        (InitArg::Truth, Some(t)) => Some(t),
        (InitArg::Truth, None) => return Err(Failure("--init truth needs --theta".into())),
        (InitArg::Sample, _) => None,
    };
    let r = fit(&data, init, &a.es.config())?;
    let t = r.theta_hat;
    let mut out = io::stdout().lock();
    writeln!(out, "n={}", data.len())?;
    writeln!(out, "mu={}", fmt_g17(t.mu()))?;
    writeln!(out, "sigma={}", fmt_g17(t.sigma()))?;
    writeln!(out, "tau_l={}", fmt_g17(t.tau_l()))?;
    writeln!(out, "tau_u={}", fmt_g17(t.tau_u()))?;
    writeln!(out, "residual_norm={}", fmt_g17(r.residual_norm))?;
    writeln!(out, "iterations={}", r.iterations)?;
    writeln!(out, "status={}", r.status)?;
    writeln!(out, "loglik={}", fmt_g17(r.loglik))?;
    if let Some(p) = &a.json {
        let v = json!({
            "n": data.len(),
            "mu": t.mu(),
            "sigma": t.sigma(),
            "tau_l": t.tau_l(),
            "tau_u": t.tau_u(),
            "residual_norm": r.residual_norm,
            "iterations": r.iterations,
            "status": r.status.as_str(),
            "loglik": r.loglik,
        });
        let mut w = open_output(Some(p))?;
        serde_json::to_writer_pretty(&mut w, &v).map_err(|e| Failure(e.to_string()))?;
        writeln!(w)?;
        w.flush()?;
    }
    Ok(())
}

fn study_plan(a: &StudyArgs, default_n: Vec<usize>, default_reps: usize) -> Result<StudyPlan, Failure> {
    let mut plan = StudyPlan::consistency_default(a.seed);
    if !a.cases.is_empty() {
        plan.cases = select_cases(&a.cases)?;
    }
    plan.n_grid = if a.n.is_empty() { default_n } else { a.n.clone() };
    plan.reps_per_cell = a.reps.unwrap_or(default_reps);
    plan.init_mode = match a.init {
        InitArg::Sample => InitMode::SampleStats,
        InitArg::Truth => InitMode::Truth,
    };
    plan.validate()?;
    Ok(plan)
}

fn write_summary(path: &Path, records: &[SimRecord]) -> Result<(), Failure> {
    let probs = [0.25, 0.5, 0.75];
    let rows = summarize_quantiles(records, &probs);
    let mut w = open_output(Some(path))?;
    write_quantile_table(&mut w, &rows, &probs)?;
    w.flush()?;
    Ok(())
}

fn cmd_simulate(a: &StudyArgs, threads: usize) -> Result<(), Failure> {
    let plan = study_plan(a, log_grid(10, 1000, a.grid_len), 100)?;
    let mut w = open_output(a.output.as_deref())?;
    write_header(&mut w, false)?;
    let mut kept = Vec::new();
    run_consistency_study(&plan, &a.es.config(), threads, |r| {
        write_record(&mut w, &r)?;
        w.flush()?;
        if a.summary.is_some() {
            kept.push(r);
        }
        Ok(())
    })?;
    if let Some(p) = &a.summary {
        write_summary(p, &kept)?;
    }
    Ok(())
}

fn cmd_bound_dist(a: &StudyArgs, threads: usize) -> Result<(), Failure> {
    let plan = study_plan(a, vec![30, 50, 100], 2000)?;
    let mut w = open_output(a.output.as_deref())?;
    write_header(&mut w, true)?;
    let mut kept = Vec::new();
    run_bound_dist_study(&plan, &a.es.config(), threads, |r| {
        write_bound_record(&mut w, &r)?;
        w.flush()?;
        if a.summary.is_some() {
            kept.push(r.record);
        }
        Ok(())
    })?;
    if let Some(p) = &a.summary {
        write_summary(p, &kept)?;
    }
    Ok(())
}

fn mat_json<const N: usize>(m: &[[f64; N]; N]) -> serde_json::Value {
    json!(m.iter().map(|r| r.to_vec()).collect::<Vec<_>>())
}

fn cmd_asymptotics(a: &AsymptoticsArgs) -> Result<(), Failure> {
    let lc = musigma_limit_cov(&a.theta)?;
    let jac = jacobian(&a.theta);
    let mut w = open_output(a.output.as_deref())?;
    match a.format {
        Format::Json => {
            let v = json!({
                "theta0": a.theta.to_array(),
                "sigma": mat_json(&lc.sigma_mat),
                "gamma": mat_json(&lc.gamma_mat),
                "musigma_cov": mat_json(&lc.musigma_cov),
                "jacobian": mat_json(&jac),
            });
            serde_json::to_writer_pretty(&mut w, &v).map_err(|e| Failure(e.to_string()))?;
            writeln!(w)?;
        }
        Format::Csv => {
            writeln!(w, "matrix,row,col,value")?;
            let two: [(&str, &Mat2); 3] =
                [("sigma", &lc.sigma_mat), ("gamma", &lc.gamma_mat), ("musigma_cov", &lc.musigma_cov)];
            for (name, m) in two {
                for (i, row) in m.iter().enumerate() {
                    for (j, v) in row.iter().enumerate() {
                        writeln!(w, "{name},{},{},{}", i + 1, j + 1, fmt_g17(*v))?;
                    }
                }
            }
            let four: &Mat4 = &jac;
            for (i, row) in four.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    writeln!(w, "jacobian,{},{},{}", i + 1, j + 1, fmt_g17(*v))?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn cmd_classify(a: &ClassifyArgs, threads: usize) -> Result<(), Failure> {
    let data = match &a.input {
        Some(p) => parse_labeled_csv(&read_text(p)?)?,
        None => iris_petal_length(),
    };
    let config = SplitConfig {
        n_splits: a.splits,
        seed: a.seed,
        odd: match a.odd {
            OddArg::Floor => OddSplit::FloorToTrain,
            OddArg::Ceil => OddSplit::CeilToTrain,
        },
        cutoff: a.cutoff,
        threads,
        es: a.es.config(),
    };
    let known: Vec<&str> = a.known.iter().map(String::as_str).collect();
    let holdout: Vec<&str> = a.holdout.iter().map(String::as_str).collect();
    let (tqda, qda) = run_split_study(&data, &known, &holdout, &config)?;
    let mut w = open_output(a.output.as_deref())?;
    write_confusion_header(&mut w)?;
    write_confusion(&mut w, "TQDA", &tqda)?;
    write_confusion(&mut w, "QDA", &qda)?;
    w.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Sample(a) => cmd_sample(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Simulate(a) => cmd_simulate(a, cli.threads),
        Command::BoundDist(a) => cmd_bound_dist(a, cli.threads),
        Command::Asymptotics(a) => cmd_asymptotics(a),
        Command::Classify(a) => cmd_classify(a, cli.threads),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(msg)) => {
            eprintln!("tnes: {msg}");
            ExitCode::from(2)
        }
    }
}
