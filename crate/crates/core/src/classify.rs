//! Univariate discriminant analysis with a "no known class" outcome:
//! truncated-normal class models (TQDA) against normal class models with an
//! atypicality cutoff (QDA).

use std::io::{self, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{domain, Error, Result};
use crate::simulate::{fmt_g17, replicate_seed};
use crate::solver::{fit, EsConfig};
use crate::specfns::{self, ln_phi};
use crate::truncnorm::TnParams;

pub type Labeled = (String, f64);

#[derive(Debug, Clone, PartialEq)]
pub enum ClassParams {
    Truncated(Vec<TnParams>),
    /// (mean, standard deviation) per class.
    Normal(Vec<(f64, f64)>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassModel {
    pub labels: Vec<String>,
    pub params: ClassParams,
    pub priors: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Prediction {
    /// Index into the model's labels.
    Label(usize),
    NoClass,
}

/// Groups values by label in order of first appearance.
fn group(train: &[Labeled]) -> Vec<(String, Vec<f64>)> {
    let mut groups: Vec<(String, Vec<f64>)> = Vec::new();
    for (label, x) in train {
        match groups.iter_mut().find(|(l, _)| l == label) {
            Some((_, v)) => v.push(*x),
            None => groups.push((label.clone(), vec![*x])),
        }
    }
    groups
}

fn check_sizes(groups: &[(String, Vec<f64>)], required: usize) -> Result<()> {
    if groups.is_empty() {
        return Err(domain("training set is empty"));
    }
    for (label, v) in groups {
        if v.len() < required {
            return Err(Error::ClassTooSmall { label: label.clone(), size: v.len(), required });
        }
    }
    Ok(())
}

fn priors(groups: &[(String, Vec<f64>)]) -> Vec<f64> {
    let total: usize = groups.iter().map(|(_, v)| v.len()).sum();
    groups.iter().map(|(_, v)| v.len() as f64 / total as f64).collect()
}

/// Fits one truncated normal per class with the ES algorithm from the
/// default starting value.
pub fn fit_tqda(train: &[Labeled], config: &EsConfig) -> Result<ClassModel> {
    let groups = group(train);
    check_sizes(&groups, 3)?;
    let params = groups
        .iter()
        .map(|(_, v)| fit(v, None, config).map(|r| r.theta_hat))
        .collect::<Result<Vec<_>>>()?;
    Ok(ClassModel {
        labels: groups.iter().map(|(l, _)| l.clone()).collect(),
        priors: priors(&groups),
        params: ClassParams::Truncated(params),
    })
}

/// Fits a normal (mean, sample standard deviation) per class.
pub fn fit_qda_atypicality(train: &[Labeled]) -> Result<ClassModel> {
    let groups = group(train);
    check_sizes(&groups, 2)?;
    let mut params = Vec::with_capacity(groups.len());
    for (label, v) in &groups {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let sd = (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt();
        if !(sd > 0.0) {
            return Err(Error::Degenerate(format!("class `{label}` has zero spread")));
        }
        params.push((mean, sd));
    }
    Ok(ClassModel {
        labels: groups.iter().map(|(l, _)| l.clone()).collect(),
        priors: priors(&groups),
        params: ClassParams::Normal(params),
    })
}

/// Index of the largest score; ties go to the earliest label.
fn argmax(scores: impl Iterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in scores.enumerate() {
        if s > f64::NEG_INFINITY && best.map_or(true, |(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i)
}

/// Most probable class by prior·density, or `NoClass` when `x` lies outside
/// every fitted support.
pub fn predict_tqda(model: &ClassModel, x: f64) -> Prediction {
    let ClassParams::Truncated(params) = &model.params else {
        return Prediction::NoClass;
    };
    let scores = params.iter().zip(&model.priors).map(|(t, p)| p.ln() + t.ln_density(x));
    argmax(scores).map_or(Prediction::NoClass, Prediction::Label)
}

/// Two-sided normal tail probability of `x` under (mean, sd).
pub fn typicality(x: f64, mean: f64, sd: f64) -> f64 {
    2.0 * specfns::sf(((x - mean) / sd).abs())
}

/// `NoClass` when the typicality under every class is below `cutoff`
/// (strictly), otherwise the class with the largest prior·density.
pub fn predict_qda(model: &ClassModel, x: f64, cutoff: f64) -> Prediction {
    let ClassParams::Normal(params) = &model.params else {
        return Prediction::NoClass;
    };
    let best_typicality = params
        .iter()
        .map(|&(m, s)| typicality(x, m, s))
        .fold(0.0, f64::max);
    if best_typicality < cutoff {
        return Prediction::NoClass;
    }
    let scores = params
        .iter()
        .zip(&model.priors)
        .map(|(&(m, s), p)| p.ln() + ln_phi((x - m) / s) - s.ln());
    argmax(scores).map_or(Prediction::NoClass, Prediction::Label)
}

/// How an odd class size is split between training and testing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OddSplit {
    FloorToTrain,
    CeilToTrain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitConfig {
    pub n_splits: usize,
    pub seed: u64,
    pub odd: OddSplit,
    pub cutoff: f64,
    pub threads: usize,
    pub es: EsConfig,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            n_splits: 500,
            seed: 20_240_601,
            odd: OddSplit::FloorToTrain,
            cutoff: 0.05,
            threads: 0,
            es: EsConfig::default(),
        }
    }
}

/// Element-wise mean and standard deviation of confusion matrices. Rows are
/// true labels; columns are the known labels followed by "NoClass".
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionSummary {
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub mean: Vec<Vec<f64>>,
    pub sd: Vec<Vec<f64>>,
}

pub const NO_CLASS: &str = "NoClass";

impl ConfusionSummary {
    pub fn cell(&self, true_label: &str, predicted: &str) -> Option<(f64, f64)> {
        let i = self.row_labels.iter().position(|l| l == true_label)?;
        let j = self.col_labels.iter().position(|l| l == predicted)?;
        Some((self.mean[i][j], self.sd[i][j]))
    }
}

type Counts = Vec<Vec<u32>>;

fn summarize(row_labels: Vec<String>, col_labels: Vec<String>, mats: &[Counts]) -> ConfusionSummary {
    let (r, c) = (row_labels.len(), col_labels.len());
    let k = mats.len() as f64;
    let mut mean = vec![vec![0.0; c]; r];
    let mut sd = vec![vec![0.0; c]; r];
    for i in 0..r {
        for j in 0..c {
            let m = mats.iter().map(|x| x[i][j] as f64).sum::<f64>() / k;
            let ss = mats.iter().map(|x| (x[i][j] as f64 - m).powi(2)).sum::<f64>();
            mean[i][j] = m;
            sd[i][j] = if mats.len() > 1 { (ss / (k - 1.0)).sqrt() } else { 0.0 };
        }
    }
    ConfusionSummary { row_labels, col_labels, mean, sd }
}

/// Repeated random half splits of the known classes; holdout classes go
/// entirely to the test set. Returns (TQDA, QDA) summaries.
pub fn run_split_study(
    data: &[Labeled],
    known: &[&str],
    holdout: &[&str],
    config: &SplitConfig,
) -> Result<(ConfusionSummary, ConfusionSummary)> {
    if config.n_splits == 0 {
        return Err(domain("need at least one split"));
    }
    if !(config.cutoff > 0.0 && config.cutoff < 1.0) {
        return Err(domain(format!("cutoff must lie in (0, 1), got {}", config.cutoff)));
    }
    config.es.validate()?;
    let grouped = group(data);
    let lookup = |name: &str| -> Result<Vec<f64>> {
        grouped
            .iter()
            .find(|(l, _)| l == name)
            .map(|(_, v)| v.clone())
            .ok_or_else(|| domain(format!("label `{name}` not present in the data")))
    };
    let known_data: Vec<Vec<f64>> = known.iter().map(|k| lookup(k)).collect::<Result<_>>()?;
    let holdout_data: Vec<Vec<f64>> = holdout.iter().map(|k| lookup(k)).collect::<Result<_>>()?;
    for (name, v) in known.iter().zip(&known_data) {
        if v.len() < 6 {
            return Err(Error::ClassTooSmall { label: name.to_string(), size: v.len(), required: 6 });
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| domain(format!("cannot start worker pool: {e}")))?;
    let one_split = |split: usize| -> Result<(Counts, Counts)> {
        let mut rng = ChaCha8Rng::seed_from_u64(replicate_seed(config.seed, 0, 0, split));
        let mut train: Vec<Labeled> = Vec::new();
        let mut test: Vec<(usize, f64)> = Vec::new();
        for (ci, (name, values)) in known.iter().zip(&known_data).enumerate() {
            let mut v = values.clone();
            v.shuffle(&mut rng);
            let n_train = match config.odd {
                OddSplit::FloorToTrain => v.len() / 2,
                OddSplit::CeilToTrain => v.len().div_ceil(2),
            };
            train.extend(v[..n_train].iter().map(|&x| (name.to_string(), x)));
            test.extend(v[n_train..].iter().map(|&x| (ci, x)));
        }
        for (hi, values) in holdout_data.iter().enumerate() {
            test.extend(values.iter().map(|&x| (known.len() + hi, x)));
        }
        let tqda = fit_tqda(&train, &config.es)?;
        let qda = fit_qda_atypicality(&train)?;
        let rows = known.len() + holdout.len();
        let cols = known.len() + 1;
        let mut ct = vec![vec![0u32; cols]; rows];
        let mut cq = vec![vec![0u32; cols]; rows];
        let col = |p: Prediction| match p {
            Prediction::Label(j) => j,
            Prediction::NoClass => known.len(),
        };
        for &(row, x) in &test {
            ct[row][col(predict_tqda(&tqda, x))] += 1;
            cq[row][col(predict_qda(&qda, x, config.cutoff))] += 1;
        }
        Ok((ct, cq))
    };
    let results: Vec<(Counts, Counts)> = pool.install(|| {
        (0..config.n_splits)
            .into_par_iter()
            .map(one_split)
            .collect::<Result<Vec<_>>>()
    })?;

    let row_labels: Vec<String> = known.iter().chain(holdout).map(|s| s.to_string()).collect();
    let mut col_labels: Vec<String> = known.iter().map(|s| s.to_string()).collect();
    col_labels.push(NO_CLASS.to_string());
    let (ts, qs): (Vec<Counts>, Vec<Counts>) = results.into_iter().unzip();
    Ok((
        summarize(row_labels.clone(), col_labels.clone(), &ts),
        summarize(row_labels, col_labels, &qs),
    ))
}

pub fn write_confusion_header<W: Write>(w: &mut W) -> io::Result<()> {
    writeln!(w, "method,true_label,predicted,mean,sd")
}

pub fn write_confusion<W: Write>(w: &mut W, method: &str, s: &ConfusionSummary) -> io::Result<()> {
    for (i, row) in s.row_labels.iter().enumerate() {
        for (j, col) in s.col_labels.iter().enumerate() {
            writeln!(w, "{method},{row},{col},{},{}", fmt_g17(s.mean[i][j]), fmt_g17(s.sd[i][j]))?;
        }
    }
    Ok(())
}

/// Parses `label,value` CSV text with a header row. Errors name the
/// offending 1-based line.
pub fn parse_labeled_csv(text: &str) -> Result<Vec<Labeled>> {
    let mut out = Vec::new();
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim().eq_ignore_ascii_case("label,value") => {}
        Some((_, h)) => return Err(domain(format!("line 1: expected header `label,value`, got `{h}`"))),
        None => return Err(domain("empty input")),
    }
    for (i, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parsed = line.split_once(',').and_then(|(l, v)| {
            let v: f64 = v.trim().parse().ok()?;
            (v.is_finite() && !l.trim().is_empty()).then(|| (l.trim().to_string(), v))
        });
        match parsed {
            Some(p) => out.push(p),
            None => return Err(domain(format!("line {}: expected `label,value`, got `{line}`", i + 1))),
        }
    }
    Ok(out)
}

const IRIS_CSV: &str = include_str!("../data/iris_petal_length.csv");

/// Petal lengths of Anderson's iris data, labelled by species.
pub fn iris_petal_length() -> Vec<Labeled> {
    parse_labeled_csv(IRIS_CSV).expect("bundled data parse")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn labeled(label: &str, xs: &[f64]) -> Vec<Labeled> {
        xs.iter().map(|&x| (label.to_string(), x)).collect()
    }

    #[test]
    fn iris_loads() {
        let d = iris_petal_length();
        assert_eq!(d.len(), 150);
        let setosa: f64 = d.iter().filter(|(l, _)| l == "setosa").map(|(_, x)| x).sum();
        assert_abs_diff_eq!(setosa, 73.1, epsilon = 1e-9);
    }

    #[test]
    fn separated_classes_get_disjoint_supports() {
        let a = TnParams::new(0.0, 1.0, -1.0, 1.0).unwrap().sample(40, 1).unwrap();
        let b = TnParams::new(10.0, 1.0, 9.0, 11.0).unwrap().sample(40, 2).unwrap();
        let mut train = labeled("a", &a);
        train.extend(labeled("b", &b));
        let m = fit_tqda(&train, &EsConfig::default()).unwrap();
        let ClassParams::Truncated(p) = &m.params else { panic!() };
        assert!(p[0].tau_u() < p[1].tau_l());
        assert_eq!(m.priors, vec![0.5, 0.5]);
        assert_eq!(predict_tqda(&m, 0.0), Prediction::Label(0));
        assert_eq!(predict_tqda(&m, 10.0), Prediction::Label(1));
        assert_eq!(predict_tqda(&m, 5.0), Prediction::NoClass);
        for (_, x) in &train {
            assert_ne!(predict_tqda(&m, *x), Prediction::NoClass);
        }
    }

    #[test]
    fn single_class_has_prior_one() {
        let m = fit_qda_atypicality(&labeled("only", &[1.0, 2.0, 4.0])).unwrap();
        assert_eq!(m.priors, vec![1.0]);
    }

    #[test]
    fn small_class_is_named() {
        let mut t = labeled("big", &[1.0, 2.0, 3.0, 4.0]);
        t.extend(labeled("tiny", &[1.0, 2.0]));
        match fit_tqda(&t, &EsConfig::default()) {
            Err(Error::ClassTooSmall { label, .. }) => assert_eq!(label, "tiny"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn qda_atypicality_rules() {
        let m = ClassModel {
            labels: vec!["a".into()],
            params: ClassParams::Normal(vec![(0.0, 1.0)]),
            priors: vec![1.0],
        };
        assert_eq!(predict_qda(&m, 0.0, 0.05), Prediction::Label(0));
        // mpmath: 2*(1 - ncdf(1.96))
        assert_abs_diff_eq!(typicality(1.96, 0.0, 1.0), 0.049_995_790_296_440_96, epsilon = 1e-15);
        assert_eq!(predict_qda(&m, 1.96, 0.05), Prediction::NoClass);
        assert_eq!(predict_qda(&m, 1.95, 0.05), Prediction::Label(0));
        assert_eq!(predict_qda(&m, 10.0, 0.05), Prediction::NoClass);
        assert!(matches!(fit_qda_atypicality(&labeled("z", &[1.0, 1.0])), Err(Error::Degenerate(_))));
    }

    #[test]
    fn overlapping_supports_use_prior_times_density() {
        let m = ClassModel {
            labels: vec!["a".into(), "b".into()],
            params: ClassParams::Truncated(vec![
                TnParams::new(0.0, 1.0, -2.0, 2.0).unwrap(),
                TnParams::new(1.0, 0.5, 0.0, 3.0).unwrap(),
            ]),
            priors: vec![0.7, 0.3],
        };
        for x in [0.2, 0.8, 1.5, 1.99] {
            let ta = 0.7 * TnParams::new(0.0, 1.0, -2.0, 2.0).unwrap().density(x);
            let tb = 0.3 * TnParams::new(1.0, 0.5, 0.0, 3.0).unwrap().density(x);
            let want = if ta >= tb { 0 } else { 1 };
            assert_eq!(predict_tqda(&m, x), Prediction::Label(want), "x = {x}");
        }
    }

    #[test]
    fn csv_errors_carry_line_numbers() {
        let e = parse_labeled_csv("label,value\na,1\nb,oops\n").unwrap_err();
        assert!(e.to_string().contains("line 3"), "{e}");
        assert!(parse_labeled_csv("x,y\n").is_err());
    }

    #[test]
    fn split_rows_sum_to_test_sizes() {
        let d = iris_petal_length();
        let cfg = SplitConfig { n_splits: 3, threads: 1, ..SplitConfig::default() };
        let (t, q) = run_split_study(&d, &["setosa", "versicolor"], &["virginica"], &cfg).unwrap();
        for s in [&t, &q] {
            let sums: Vec<f64> = s.mean.iter().map(|r| r.iter().sum()).collect();
            assert_eq!(sums, vec![25.0, 25.0, 50.0]);
        }
        let cfg2 = SplitConfig { threads: 2, ..cfg };
        assert_eq!(run_split_study(&d, &["setosa", "versicolor"], &["virginica"], &cfg2).unwrap().0, t);
    }
}
