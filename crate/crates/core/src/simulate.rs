//! Monte Carlo study harness: repeated sample-and-fit over a grid of true
//! bounds and sample sizes, with schedule-independent output order.

use std::io::{self, Write};

use rayon::prelude::*;

use crate::error::{domain, Result};
use crate::solver::{fit, EsConfig, EsStatus};
use crate::truncnorm::TnParams;

/// The six (τ_l0, τ_u0) pairs studied with μ₀ = 0, σ₀ = 1.
pub const STUDY_CASES: [(f64, f64); 6] = [
    (-3.0, -1.0),
    (-2.0, 1.0),
    (-2.0, 2.0),
    (-1.0, 1.0),
    (-1.0, 2.0),
    (1.0, 3.0),
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Case {
    /// 1-based identifier written to the output.
    pub id: usize,
    pub tau_l: f64,
    pub tau_u: f64,
}

pub fn default_cases() -> Vec<Case> {
    STUDY_CASES
        .iter()
        .enumerate()
        .map(|(i, &(tau_l, tau_u))| Case { id: i + 1, tau_l, tau_u })
        .collect()
}

/// Looks up cases by their 1-based identifiers.
pub fn select_cases(ids: &[usize]) -> Result<Vec<Case>> {
    let all = default_cases();
    ids.iter()
        .map(|&id| {
            all.get(id.wrapping_sub(1))
                .copied()
                .ok_or_else(|| domain(format!("unknown case {id}; valid cases are 1..={}", all.len())))
        })
        .collect()
}

/// `count` sample sizes evenly spaced on the log scale over `[lo, hi]`,
/// rounded to integers.
pub fn log_grid(lo: usize, hi: usize, count: usize) -> Vec<usize> {
    if count <= 1 {
        return vec![lo];
    }
    let (a, b) = ((lo as f64).log10(), (hi as f64).log10());
    (0..count)
        .map(|i| {
            let t = i as f64 / (count - 1) as f64;
            10f64.powf(a + t * (b - a)).round() as usize
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitMode {
    /// Sample mean, standard deviation, minimum and maximum.
    SampleStats,
    /// The generating parameters.
    Truth,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyPlan {
    pub cases: Vec<Case>,
    pub mu0: f64,
    pub sigma0: f64,
    pub n_grid: Vec<usize>,
    pub reps_per_cell: usize,
    pub base_seed: u64,
    pub init_mode: InitMode,
}

impl StudyPlan {
    /// Consistency study at desk scale: all cases, 8 sizes from 10 to 1000,
    /// 100 replicates.
    pub fn consistency_default(base_seed: u64) -> Self {
        StudyPlan {
            cases: default_cases(),
            mu0: 0.0,
            sigma0: 1.0,
            n_grid: log_grid(10, 1000, 8),
            reps_per_cell: 100,
            base_seed,
            init_mode: InitMode::SampleStats,
        }
    }

    /// Bound-distribution study: n in {30, 50, 100}, 2000 replicates.
    pub fn bound_dist_default(base_seed: u64) -> Self {
        StudyPlan {
            n_grid: vec![30, 50, 100],
            reps_per_cell: 2000,
            ..Self::consistency_default(base_seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.cases.is_empty() || self.n_grid.is_empty() || self.reps_per_cell == 0 {
            return Err(domain("study plan needs at least one case, sample size and replicate"));
        }
        if let Some(&n) = self.n_grid.iter().find(|&&n| n < 3) {
            return Err(domain(format!("sample sizes must be at least 3, got {n}")));
        }
        for c in &self.cases {
            self.truth(c)?;
        }
        Ok(())
    }

    pub fn truth(&self, case: &Case) -> Result<TnParams> {
        TnParams::new(self.mu0, self.sigma0, case.tau_l, case.tau_u)
    }

    pub fn len(&self) -> usize {
        self.cases.len() * self.n_grid.len() * self.reps_per_cell
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordStatus {
    Fit(EsStatus),
    /// The fit returned an error; estimates are absent.
    Failed,
}

impl RecordStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            RecordStatus::Fit(s) => s.as_str(),
            RecordStatus::Failed => "Failed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimRecord {
    pub case_id: usize,
    pub n: usize,
    pub rep: usize,
    pub seed: u64,
    pub theta_hat: Option<TnParams>,
    pub residual_norm: f64,
    pub status: RecordStatus,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundRecord {
    pub record: SimRecord,
    pub z_l: f64,
    pub z_u: f64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-replicate seed: splitmix64 folded over (base, case, n, rep).
pub fn replicate_seed(base_seed: u64, case_id: usize, n: usize, rep: usize) -> u64 {
    [case_id as u64, n as u64, rep as u64]
        .iter()
        .fold(splitmix64(base_seed), |h, &v| splitmix64(h ^ v))
}

#[derive(Debug, Clone, Copy)]
struct Job {
    case: Case,
    n: usize,
    rep: usize,
}

fn jobs(plan: &StudyPlan) -> Vec<Job> {
    let mut out = Vec::with_capacity(plan.len());
    for &case in &plan.cases {
        for &n in &plan.n_grid {
            for rep in 0..plan.reps_per_cell {
                out.push(Job { case, n, rep });
            }
        }
    }
    out
}

fn run_job(plan: &StudyPlan, config: &EsConfig, job: &Job) -> SimRecord {
    let seed = replicate_seed(plan.base_seed, job.case.id, job.n, job.rep);
    let mut record = SimRecord {
        case_id: job.case.id,
        n: job.n,
        rep: job.rep,
        seed,
        theta_hat: None,
        residual_norm: f64::NAN,
        status: RecordStatus::Failed,
    };
    // plan was validated, so truth and sampling cannot fail
    let truth = plan.truth(&job.case).expect("validated case");
    let data = truth.sample(job.n, seed).expect("n >= 3");
    let init = match plan.init_mode {
        InitMode::SampleStats => None,
        InitMode::Truth => Some(truth),
    };
    if let Ok(r) = fit(&data, init, config) {
        record.theta_hat = Some(r.theta_hat);
        record.residual_norm = r.residual_norm;
        record.status = RecordStatus::Fit(r.status);
    }
    record
}

fn run_ordered<T, F, S>(plan: &StudyPlan, threads: usize, work: F, mut sink: S) -> Result<()>
where
    T: Send,
    F: Fn(&Job) -> T + Sync,
    S: FnMut(T) -> io::Result<()>,
{
    plan.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| domain(format!("cannot start worker pool: {e}")))?;
    let all = jobs(plan);
    // chunks bound memory; collect() keeps job order inside each chunk
    let chunk = 256 * pool.current_num_threads().max(1);
    for block in all.chunks(chunk) {
        let results: Vec<T> = pool.install(|| block.par_iter().map(&work).collect());
        for r in results {
            sink(r).map_err(|e| domain(format!("write failed: {e}")))?;
        }
    }
    Ok(())
}

/// Runs every (case, n, rep) cell and hands records to `sink` in
/// lexicographic order. `threads = 0` uses all available cores.
pub fn run_consistency_study<S>(plan: &StudyPlan, config: &EsConfig, threads: usize, sink: S) -> Result<()>
where
    S: FnMut(SimRecord) -> io::Result<()>,
{
    config.validate()?;
    run_ordered(plan, threads, |job| run_job(plan, config, job), sink)
}

/// As [`run_consistency_study`], adding n·f_θ₀(τ₀)·(τ̂ − τ₀) for each bound.
pub fn run_bound_dist_study<S>(plan: &StudyPlan, config: &EsConfig, threads: usize, sink: S) -> Result<()>
where
    S: FnMut(BoundRecord) -> io::Result<()>,
{
    config.validate()?;
    let work = |job: &Job| {
        let record = run_job(plan, config, job);
        let truth = plan.truth(&job.case).expect("validated case");
        let nf = job.n as f64;
        let (z_l, z_u) = match record.theta_hat {
            Some(t) => (
                nf * truth.density(truth.tau_l()) * (t.tau_l() - truth.tau_l()),
                nf * truth.density(truth.tau_u()) * (t.tau_u() - truth.tau_u()),
            ),
            None => (f64::NAN, f64::NAN),
        };
        BoundRecord { record, z_l, z_u }
    };
    run_ordered(plan, threads, work, sink)
}

/// Collects a consistency study into memory.
pub fn collect_consistency(plan: &StudyPlan, config: &EsConfig, threads: usize) -> Result<Vec<SimRecord>> {
    let mut out = Vec::with_capacity(plan.len());
    run_consistency_study(plan, config, threads, |r| {
        out.push(r);
        Ok(())
    })?;
    Ok(out)
}

pub fn collect_bound_dist(plan: &StudyPlan, config: &EsConfig, threads: usize) -> Result<Vec<BoundRecord>> {
    let mut out = Vec::with_capacity(plan.len());
    run_bound_dist_study(plan, config, threads, |r| {
        out.push(r);
        Ok(())
    })?;
    Ok(out)
}

/// Formats like C's `%.17g`: 17 significant digits, shortest of fixed or
/// exponent notation, trailing zeros removed.
pub fn fmt_g17(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{x:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..17).contains(&exp) {
        let decimals = (16 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}"))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{}{:02}", trim_zeros(mantissa), sign, exp.abs())
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

pub fn write_header<W: Write>(w: &mut W, with_z: bool) -> io::Result<()> {
    write!(w, "case,n,rep,seed,mu_hat,sigma_hat,tau_l_hat,tau_u_hat,residual_norm,status")?;
    if with_z {
        write!(w, ",z_l,z_u")?;
    }
    writeln!(w)
}

fn write_fields<W: Write>(w: &mut W, r: &SimRecord) -> io::Result<()> {
    let est = r.theta_hat.map(|t| t.to_array()).unwrap_or([f64::NAN; 4]);
    write!(w, "{},{},{},{}", r.case_id, r.n, r.rep, r.seed)?;
    for v in est {
        write!(w, ",{}", fmt_g17(v))?;
    }
    write!(w, ",{},{}", fmt_g17(r.residual_norm), r.status.as_str())
}

pub fn write_record<W: Write>(w: &mut W, r: &SimRecord) -> io::Result<()> {
    write_fields(w, r)?;
    writeln!(w)
}

pub fn write_bound_record<W: Write>(w: &mut W, r: &BoundRecord) -> io::Result<()> {
    write_fields(w, &r.record)?;
    writeln!(w, ",{},{}", fmt_g17(r.z_l), fmt_g17(r.z_u))
}

/// Sample quantile by linear interpolation between order statistics
/// (type 7). `sorted` must be ascending and nonempty.
pub fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Number of values outside [Q1 − 1.5·IQR, Q3 + 1.5·IQR].
pub fn outlier_count(sorted: &[f64]) -> usize {
    let q1 = quantile_type7(sorted, 0.25);
    let q3 = quantile_type7(sorted, 0.75);
    let iqr = q3 - q1;
    let (lo, hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    sorted.iter().filter(|&&x| x < lo || x > hi).count()
}

pub const PARAM_NAMES: [&str; 4] = ["mu_hat", "sigma_hat", "tau_l_hat", "tau_u_hat"];

#[derive(Debug, Clone, PartialEq)]
pub struct QuantileRow {
    pub case_id: usize,
    pub n: usize,
    pub parameter: &'static str,
    pub count: usize,
    pub quantiles: Vec<f64>,
    pub outliers: usize,
}

/// Per (case, n, parameter) quantiles of the estimates over successful fits,
/// in order of first appearance.
pub fn summarize_quantiles(records: &[SimRecord], probs: &[f64]) -> Vec<QuantileRow> {
    let mut groups: Vec<((usize, usize), Vec<[f64; 4]>)> = Vec::new();
    for r in records {
        let Some(t) = r.theta_hat else { continue };
        let key = (r.case_id, r.n);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(t.to_array()),
            None => groups.push((key, vec![t.to_array()])),
        }
    }
    let mut rows = Vec::new();
    for ((case_id, n), est) in groups {
        for (j, &parameter) in PARAM_NAMES.iter().enumerate() {
            let mut col: Vec<f64> = est.iter().map(|e| e[j]).collect();
            col.sort_by(f64::total_cmp);
            rows.push(QuantileRow {
                case_id,
                n,
                parameter,
                count: col.len(),
                quantiles: probs.iter().map(|&p| quantile_type7(&col, p)).collect(),
                outliers: outlier_count(&col),
            });
        }
    }
    rows
}

pub fn write_quantile_table<W: Write>(w: &mut W, rows: &[QuantileRow], probs: &[f64]) -> io::Result<()> {
    writeln!(w, "# empirical quantiles: type 7 (linear interpolation); outliers: 1.5*IQR rule")?;
    write!(w, "case,n,parameter,count")?;
    for p in probs {
        write!(w, ",q{}", fmt_g17(*p))?;
    }
    writeln!(w, ",outliers")?;
    for r in rows {
        write!(w, "{},{},{},{}", r.case_id, r.n, r.parameter, r.count)?;
        for q in &r.quantiles {
            write!(w, ",{}", fmt_g17(*q))?;
        }
        writeln!(w, ",{}", r.outliers)?;
    }
    Ok(())
}

/// One-sample Kolmogorov–Smirnov distance sup |F_n − F|.
pub fn ks_statistic<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> f64 {
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    d
}

/// Two-sample Kolmogorov–Smirnov distance.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(f64::total_cmp);
    xb.sort_by(f64::total_cmp);
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < xa.len() && j < xb.len() {
        let x = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= x {
            i += 1;
        }
        while j < xb.len() && xb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}
