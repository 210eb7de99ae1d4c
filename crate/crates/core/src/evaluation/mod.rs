//! The simulation protocol and its reports.
//!
//! Each trial draws a fresh half of the training pool, lets every algorithm
//! select m rows from that same half, fits a ridge model per selection and
//! correlates its rounded predictions with the scores of a fixed test set.
//! A reference model trained on the whole half-sample is recorded alongside.
//! Summaries compare each algorithm against the random baseline with
//! Fisher-Z transformed correlations and Welch's t-test.
//!
//! Trials are independent: each derives its seeds from (master_seed,
//! set_id, m, iteration, role), so parallel and sequential runs produce
//! identical output.

mod stats;

pub use stats::{fisher_z, pearson, percent_change, welch_t_test};

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{half_sample, FeatureMatrix, LabeledDataset};
use crate::error::{Error, Result};
use crate::regression::fit_ridge;
use crate::sampling::{
    fedorov_exchange, kennard_stone, kmeans_sample, persistence, random_sample, Design,
    SamplerConfig,
};
use crate::seed::derive_seed;
use stats::{ci95_half_width, mean_and_sd};

/// Selection strategies raced by the protocol. The declaration order is the
/// canonical sort order of trial and summary files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "fedorov")]
    Fedorov,
    #[serde(rename = "kennard_stone")]
    KennardStone,
    #[serde(rename = "kmeans")]
    KMeans,
    #[serde(rename = "random")]
    Random,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::Fedorov,
        Algorithm::KennardStone,
        Algorithm::KMeans,
        Algorithm::Random,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Algorithm::Fedorov => "fedorov",
            Algorithm::KennardStone => "kennard_stone",
            Algorithm::KMeans => "kmeans",
            Algorithm::Random => "random",
        }
    }

    /// Runs the strategy on a pool. Random selection uses the seed carried
    /// by the config directly; the others consume it through their own
    /// restart schedules.
    pub fn select(&self, pool: &FeatureMatrix, m: usize, config: &SamplerConfig) -> Result<Design> {
        match self {
            Algorithm::Fedorov => fedorov_exchange(pool, m, config),
            Algorithm::KennardStone => kennard_stone(pool, m, config),
            Algorithm::KMeans => kmeans_sample(pool, m, config),
            Algorithm::Random => random_sample(pool, m, config.seed),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Algorithm> {
        match s {
            "fedorov" => Ok(Algorithm::Fedorov),
            "kennard_stone" => Ok(Algorithm::KennardStone),
            "kmeans" => Ok(Algorithm::KMeans),
            "random" => Ok(Algorithm::Random),
            other => Err(Error::Validation(format!(
                "unknown algorithm '{other}', expected fedorov, kennard_stone, kmeans or random"
            ))),
        }
    }
}

/// Everything one simulation run depends on besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationPlan {
    pub m_grid: Vec<usize>,
    pub iterations: usize,
    pub algorithms: Vec<Algorithm>,
    pub sampler_config: SamplerConfig,
    pub lambda: f64,
    pub master_seed: u64,
    pub persistence_step: usize,
}

impl Default for SimulationPlan {
    fn default() -> Self {
        SimulationPlan {
            m_grid: (1..=10).map(|k| k * 10).collect(),
            iterations: 300,
            algorithms: Algorithm::ALL.to_vec(),
            sampler_config: SamplerConfig::default(),
            lambda: 1.0,
            master_seed: 0,
            persistence_step: 1,
        }
    }
}

impl SimulationPlan {
    pub fn validate(&self) -> Result<()> {
        if self.m_grid.is_empty() {
            return Err(Error::Validation("m_grid must not be empty".into()));
        }
        if self.m_grid[0] == 0 {
            return Err(Error::Validation("m values must be positive".into()));
        }
        if self.m_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Validation(format!(
                "m_grid must be strictly increasing, got {:?}",
                self.m_grid
            )));
        }
        if self.iterations == 0 {
            return Err(Error::Validation("iterations must be at least 1".into()));
        }
        if self.algorithms.is_empty() {
            return Err(Error::Validation("at least one algorithm is required".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for algorithm in &self.algorithms {
            if !seen.insert(algorithm) {
                return Err(Error::Validation(format!(
                    "algorithm {algorithm} listed twice"
                )));
            }
        }
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(Error::Validation(format!(
                "lambda must be finite and non-negative, got {}",
                self.lambda
            )));
        }
        self.sampler_config.validate()
    }
}

/// One fitted model's score. A trial whose model could not be fit or whose
/// predictions were constant carries no r and is marked skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub set_id: String,
    pub algorithm: Algorithm,
    pub m: usize,
    pub iteration: usize,
    pub r: Option<f64>,
    pub reference_r: Option<f64>,
    pub skipped: bool,
}

/// Aggregate of one (set, algorithm, m) group of trials.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub set_id: String,
    pub algorithm: Algorithm,
    pub m: usize,
    pub mean_r: f64,
    pub sd_r: f64,
    pub ci95_low: f64,
    pub ci95_high: f64,
    pub pct_change: f64,
    pub significant: bool,
}

/// Runs the full protocol for one dataset pair. Returns one trial per
/// (algorithm, m, iteration), sorted canonically.
pub fn run_simulation(
    train: &LabeledDataset,
    test: &LabeledDataset,
    plan: &SimulationPlan,
) -> Result<Vec<TrialResult>> {
    plan.validate()?;
    if train.p() != test.p() {
        return Err(Error::Shape(format!(
            "train has {} features but test has {}",
            train.p(),
            test.p()
        )));
    }
    let half_n = train.n() / 2;
    let largest = *plan.m_grid.last().expect("validated non-empty");
    if largest > half_n {
        return Err(Error::Size(format!(
            "m = {largest} exceeds the half-sample size {half_n} of a pool with {} rows",
            train.n()
        )));
    }

    let mut cells = Vec::with_capacity(plan.m_grid.len() * plan.iterations);
    for &m in &plan.m_grid {
        for iteration in 0..plan.iterations {
            cells.push((m, iteration));
        }
    }

    let nested: Vec<Vec<TrialResult>> = cells
        .par_iter()
        .map(|&(m, iteration)| run_cell(train, test, plan, m, iteration))
        .collect::<Result<_>>()?;

    let mut trials: Vec<TrialResult> = nested.into_iter().flatten().collect();
    sort_trials(&mut trials);
    Ok(trials)
}

fn sort_trials(trials: &mut [TrialResult]) {
    trials.sort_by(|a, b| {
        (a.set_id.as_str(), a.algorithm, a.m, a.iteration)
            .cmp(&(b.set_id.as_str(), b.algorithm, b.m, b.iteration))
    });
}

/// One (m, iteration) cell: a shared half-sample, a reference model on the
/// whole half, and one trial per algorithm.
fn run_cell(
    train: &LabeledDataset,
    test: &LabeledDataset,
    plan: &SimulationPlan,
    m: usize,
    iteration: usize,
) -> Result<Vec<TrialResult>> {
    let set_id = train.manifest().set_id();
    let m_tag = m.to_string();
    let iteration_tag = iteration.to_string();

    let half_seed = derive_seed(plan.master_seed, &["half", set_id, &m_tag, &iteration_tag]);
    let half = half_sample(train, half_seed)?;
    let reference_r = model_r(&half, test, plan.lambda)?;

    let mut out = Vec::with_capacity(plan.algorithms.len());
    for &algorithm in &plan.algorithms {
        let seed = derive_seed(
            plan.master_seed,
            &[algorithm.label(), set_id, &m_tag, &iteration_tag],
        );
        let config = plan.sampler_config.clone().with_seed(seed);
        let design = algorithm.select(half.features(), m, &config)?;
        let subset = half.subset(design.indices())?;
        let r = model_r(&subset, test, plan.lambda)?;
        out.push(TrialResult {
            set_id: set_id.to_string(),
            algorithm,
            m,
            iteration,
            r,
            reference_r,
            skipped: r.is_none(),
        });
    }
    Ok(out)
}

/// Fits on the given rows, predicts rounded scores for the test set and
/// correlates them with the test scores. A model that cannot be fit or
/// predicts a constant yields None.
fn model_r(train: &LabeledDataset, test: &LabeledDataset, lambda: f64) -> Result<Option<f64>> {
    let model = match fit_ridge(
        train.features(),
        &train.scores_f64(),
        lambda,
        train.manifest().score_range(),
    ) {
        Ok(model) => model,
        Err(Error::Numeric(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    let predicted: Vec<f64> = model
        .predict_scores(test.features())?
        .into_iter()
        .map(f64::from)
        .collect();
    match pearson(&predicted, &test.scores_f64()) {
        Ok(r) => Ok(Some(r)),
        Err(Error::Degenerate(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// How much of each design survives growing it by `step` rows. Each size is
/// selected independently with its own derived seed, so stochastic
/// algorithms are compared across genuinely separate runs.
pub fn persistence_curve(
    pool: &FeatureMatrix,
    algorithm: Algorithm,
    m_values: &[usize],
    step: usize,
    config: &SamplerConfig,
) -> Result<Vec<(usize, f64)>> {
    if m_values.is_empty() {
        return Err(Error::Size("persistence curve needs at least one m".into()));
    }
    let mut sizes = std::collections::BTreeSet::new();
    for &m in m_values {
        if m + step > pool.n() {
            return Err(Error::Size(format!(
                "persistence at m = {m} with step {step} needs {} rows, pool has {}",
                m + step,
                pool.n()
            )));
        }
        sizes.insert(m);
        sizes.insert(m + step);
    }

    let mut designs: BTreeMap<usize, Design> = BTreeMap::new();
    for &size in &sizes {
        let seeded = config
            .clone()
            .with_seed(derive_seed(config.seed, &["persistence", &size.to_string()]));
        designs.insert(size, algorithm.select(pool, size, &seeded)?);
    }

    m_values
        .iter()
        .map(|&m| Ok((m, persistence(&designs[&m], &designs[&(m + step)])?)))
        .collect()
}

/// Groups unskipped trials by (set, algorithm, m) and compares each group
/// against the random baseline of the same set and m.
pub fn summarize(trials: &[TrialResult]) -> Result<Vec<SummaryRow>> {
    if trials.is_empty() {
        return Err(Error::Size("no trials to summarize".into()));
    }
    let mut groups: BTreeMap<(String, Algorithm, usize), Vec<f64>> = BTreeMap::new();
    for trial in trials {
        if trial.skipped {
            continue;
        }
        let r = trial.r.ok_or_else(|| {
            Error::Validation(format!(
                "trial without r is not marked skipped: set {} {} m={} iteration {}",
                trial.set_id, trial.algorithm, trial.m, trial.iteration
            ))
        })?;
        groups
            .entry((trial.set_id.clone(), trial.algorithm, trial.m))
            .or_default()
            .push(r);
    }
    if groups.is_empty() {
        return Err(Error::Size("every trial was skipped".into()));
    }

    let mut rows = Vec::with_capacity(groups.len());
    for ((set_id, algorithm, m), values) in &groups {
        let (mean_r, sd_r) = mean_and_sd(values);
        let half_width = ci95_half_width(sd_r, values.len());

        let (pct_change, significant) = if *algorithm == Algorithm::Random {
            (0.0, false)
        } else {
            let baseline = groups
                .get(&(set_id.clone(), Algorithm::Random, *m))
                .ok_or_else(|| {
                    Error::MissingBaseline(format!(
                        "no random trials for set {set_id} at m = {m}"
                    ))
                })?;
            let (baseline_mean, _) = mean_and_sd(baseline);
            let pct = percent_change(mean_r, baseline_mean)?;
            let significant = if values.len() < 2 || baseline.len() < 2 {
                false
            } else {
                let za: Vec<f64> = values.iter().map(|&r| fisher_z(r)).collect::<Result<_>>()?;
                let zb: Vec<f64> =
                    baseline.iter().map(|&r| fisher_z(r)).collect::<Result<_>>()?;
                match welch_t_test(&za, &zb) {
                    Ok((_, p)) => p < 0.001,
                    Err(Error::Degenerate(_)) => true,
                    Err(e) => return Err(e),
                }
            };
            (pct, significant)
        };

        rows.push(SummaryRow {
            set_id: set_id.clone(),
            algorithm: *algorithm,
            m: *m,
            mean_r,
            sd_r,
            ci95_low: mean_r - half_width,
            ci95_high: mean_r + half_width,
            pct_change,
            significant,
        });
    }
    Ok(rows)
}

const TRIAL_HEADER: [&str; 7] = [
    "set_id",
    "algorithm",
    "m",
    "iteration",
    "r",
    "reference_r",
    "skipped",
];

const SUMMARY_HEADER: [&str; 9] = [
    "set_id",
    "algorithm",
    "m",
    "mean_r",
    "sd_r",
    "ci95_low",
    "ci95_high",
    "pct_change",
    "significant",
];

fn csv_error(path: &Path, error: csv::Error) -> Error {
    Error::schema(path.display().to_string(), error.to_string())
}

fn optional_field(value: Option<f64>) -> String {
    value.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_trials(path: impl AsRef<Path>, trials: &[TrialResult]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = csv::Writer::from_writer(BufWriter::new(file));
    writer
        .write_record(TRIAL_HEADER)
        .map_err(|e| csv_error(path, e))?;
    for trial in trials {
        writer
            .write_record(&[
                trial.set_id.clone(),
                trial.algorithm.to_string(),
                trial.m.to_string(),
                trial.iteration.to_string(),
                optional_field(trial.r),
                optional_field(trial.reference_r),
                trial.skipped.to_string(),
            ])
            .map_err(|e| csv_error(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

pub fn read_trials(path: impl AsRef<Path>) -> Result<Vec<TrialResult>> {
    let path = path.as_ref();
    let location = path.display().to_string();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);

    let headers = reader.headers().map_err(|e| csv_error(path, e))?;
    if headers.iter().ne(TRIAL_HEADER) {
        return Err(Error::schema(
            &location,
            format!(
                "expected header '{}', got '{}'",
                TRIAL_HEADER.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }

    let mut trials = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |pos| pos.line());
        let here = format!("{location}:{line}");
        let field = |index: usize, name: &str| -> Result<&str> {
            record
                .get(index)
                .ok_or_else(|| Error::schema(&here, format!("missing column {name}")))
        };

        let set_id = field(0, "set_id")?.to_string();
        let algorithm: Algorithm = field(1, "algorithm")?
            .parse()
            .map_err(|e| Error::schema(&here, format!("{e}")))?;
        let m: usize = field(2, "m")?
            .parse()
            .map_err(|_| Error::schema(&here, format!("bad m '{}'", &record[2])))?;
        let iteration: usize = field(3, "iteration")?
            .parse()
            .map_err(|_| Error::schema(&here, format!("bad iteration '{}'", &record[3])))?;
        let r = parse_optional_r(field(4, "r")?, &here, "r")?;
        let reference_r = parse_optional_r(field(5, "reference_r")?, &here, "reference_r")?;
        let skipped = match field(6, "skipped")? {
            "true" => true,
            "false" => false,
            other => {
                return Err(Error::schema(&here, format!("bad skipped flag '{other}'")))
            }
        };
        if skipped == r.is_some() {
            return Err(Error::schema(
                &here,
                "skipped flag does not match the presence of r".to_string(),
            ));
        }
        trials.push(TrialResult {
            set_id,
            algorithm,
            m,
            iteration,
            r,
            reference_r,
            skipped,
        });
    }
    Ok(trials)
}

fn parse_optional_r(text: &str, here: &str, name: &str) -> Result<Option<f64>> {
    if text.is_empty() {
        return Ok(None);
    }
    let value: f64 = text
        .parse()
        .map_err(|_| Error::schema(here, format!("bad {name} '{text}'")))?;
    if !value.is_finite() || value.abs() > 1.0 {
        return Err(Error::schema(
            here,
            format!("{name} must lie in [-1, 1], got {text}"),
        ));
    }
    Ok(Some(value))
}

pub fn write_summary(path: impl AsRef<Path>, rows: &[SummaryRow]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = csv::Writer::from_writer(BufWriter::new(file));
    writer
        .write_record(SUMMARY_HEADER)
        .map_err(|e| csv_error(path, e))?;
    for row in rows {
        writer
            .write_record(&[
                row.set_id.clone(),
                row.algorithm.to_string(),
                row.m.to_string(),
                row.mean_r.to_string(),
                row.sd_r.to_string(),
                row.ci95_low.to_string(),
                row.ci95_high.to_string(),
                row.pct_change.to_string(),
                row.significant.to_string(),
            ])
            .map_err(|e| csv_error(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

/// Writes per-(set, algorithm) plot inputs: `mean_<set>_<algorithm>.csv`
/// with the m, mean and CI columns and `sd_<set>_<algorithm>.csv` with the
/// m and sd columns. Returns the created paths.
pub fn write_plot_data(dir: impl AsRef<Path>, rows: &[SummaryRow]) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let mut groups: BTreeMap<(&str, Algorithm), Vec<&SummaryRow>> = BTreeMap::new();
    for row in rows {
        groups
            .entry((row.set_id.as_str(), row.algorithm))
            .or_default()
            .push(row);
    }

    let mut written = Vec::with_capacity(groups.len() * 2);
    for ((set_id, algorithm), mut group) in groups {
        group.sort_by_key(|row| row.m);

        let mean_path = dir.join(format!("mean_{set_id}_{algorithm}.csv"));
        let file = File::create(&mean_path).map_err(|e| Error::io(&mean_path, e))?;
        let mut writer = csv::Writer::from_writer(BufWriter::new(file));
        writer
            .write_record(["m", "mean_r", "ci95_low", "ci95_high"])
            .map_err(|e| csv_error(&mean_path, e))?;
        for row in &group {
            writer
                .write_record(&[
                    row.m.to_string(),
                    row.mean_r.to_string(),
                    row.ci95_low.to_string(),
                    row.ci95_high.to_string(),
                ])
                .map_err(|e| csv_error(&mean_path, e))?;
        }
        writer.flush().map_err(|e| Error::io(&mean_path, e))?;
        written.push(mean_path);

        let sd_path = dir.join(format!("sd_{set_id}_{algorithm}.csv"));
        let file = File::create(&sd_path).map_err(|e| Error::io(&sd_path, e))?;
        let mut writer = csv::Writer::from_writer(BufWriter::new(file));
        writer
            .write_record(["m", "sd_r"])
            .map_err(|e| csv_error(&sd_path, e))?;
        for row in &group {
            writer
                .write_record(&[row.m.to_string(), row.sd_r.to_string()])
                .map_err(|e| csv_error(&sd_path, e))?;
        }
        writer.flush().map_err(|e| Error::io(&sd_path, e))?;
        written.push(sd_path);
    }
    Ok(written)
}

pub fn write_persistence(path: impl AsRef<Path>, curve: &[(usize, f64)]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = csv::Writer::from_writer(BufWriter::new(file));
    writer
        .write_record(["m", "persistence"])
        .map_err(|e| csv_error(path, e))?;
    for (m, value) in curve {
        writer
            .write_record(&[m.to_string(), value.to_string()])
            .map_err(|e| csv_error(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

/// Renders percent change over the random baseline as one aligned text
/// block per algorithm: sets as rows, m values as columns, insignificant
/// entries starred.
pub fn format_percent_table(rows: &[SummaryRow]) -> String {
    let mut m_values: Vec<usize> = rows.iter().map(|row| row.m).collect();
    m_values.sort_unstable();
    m_values.dedup();
    let mut sets: Vec<&str> = rows.iter().map(|row| row.set_id.as_str()).collect();
    sets.sort_unstable();
    sets.dedup();
    let mut algorithms: Vec<Algorithm> = rows
        .iter()
        .map(|row| row.algorithm)
        .filter(|algorithm| *algorithm != Algorithm::Random)
        .collect();
    algorithms.sort_unstable();
    algorithms.dedup();

    let mut cells: BTreeMap<(Algorithm, &str, usize), String> = BTreeMap::new();
    let mut any_insignificant = false;
    for row in rows {
        if row.algorithm == Algorithm::Random {
            continue;
        }
        let mut text = format!("{:.0}", row.pct_change);
        if text == "-0" {
            text = "0".to_string();
        }
        if !row.significant {
            text.push('*');
            any_insignificant = true;
        }
        cells.insert((row.algorithm, row.set_id.as_str(), row.m), text);
    }

    let set_width = sets.iter().map(|s| s.len()).chain(["set".len()]).max().unwrap_or(3);
    let widths: Vec<usize> = m_values
        .iter()
        .map(|&m| {
            let mut width = format!("m={m}").len();
            for algorithm in &algorithms {
                for set in &sets {
                    if let Some(text) = cells.get(&(*algorithm, set, m)) {
                        width = width.max(text.len());
                    }
                }
            }
            width
        })
        .collect();

    let mut out = String::new();
    for algorithm in &algorithms {
        out.push_str(&format!("{algorithm}: percent change in mean r vs random\n"));
        out.push_str(&format!("{:<set_width$}", "set"));
        for (&m, &width) in m_values.iter().zip(&widths) {
            out.push_str(&format!("  {:>width$}", format!("m={m}")));
        }
        out.push('\n');
        for set in &sets {
            out.push_str(&format!("{set:<set_width$}"));
            for (&m, &width) in m_values.iter().zip(&widths) {
                let text = cells
                    .get(&(*algorithm, set, m))
                    .map(String::as_str)
                    .unwrap_or("-");
                out.push_str(&format!("  {text:>width$}"));
            }
            out.push('\n');
        }
        out.push('\n');
    }
    if any_insignificant {
        out.push_str("* not significant at the 0.001 level\n");
    }
    out
}

/// Counts skipped trials overall and per (set, algorithm, m) group.
pub fn format_diagnostics(trials: &[TrialResult]) -> String {
    let total = trials.len();
    let skipped = trials.iter().filter(|t| t.skipped).count();
    let mut out = format!("{total} trials, {skipped} skipped\n");
    if skipped == 0 {
        return out;
    }
    let mut counts: BTreeMap<(&str, Algorithm, usize), usize> = BTreeMap::new();
    for trial in trials.iter().filter(|t| t.skipped) {
        *counts
            .entry((trial.set_id.as_str(), trial.algorithm, trial.m))
            .or_default() += 1;
    }
    for ((set_id, algorithm, m), count) in counts {
        out.push_str(&format!("  set {set_id} {algorithm} m={m}: {count} skipped\n"));
    }
    out
}
