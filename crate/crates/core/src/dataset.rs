//! Candidate pools, score metadata and dataset I/O.
//!
//! A pool is a feature matrix with one row per scored response and an integer
//! score attached to each row. Real datasets arrive as a feature CSV next to
//! a JSON manifest describing the scoring scale; synthetic pools come from a
//! seeded linear generator so experiments can be rerun bit for bit.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write as _};
use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::regression::round_score;
use crate::seed::seeded_rng;

/// A dense n x p matrix of real-valued features with one id per row.
///
/// Rows are stored contiguously, so `row(i)` is a cheap slice. Values must be
/// finite and row ids unique; both are checked at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    row_ids: Vec<String>,
    data: Vec<f64>,
    n: usize,
    p: usize,
}

impl FeatureMatrix {
    /// Builds a matrix from row-major data with `p` columns.
    pub fn new(row_ids: Vec<String>, data: Vec<f64>, p: usize) -> Result<Self> {
        if p == 0 {
            return Err(Error::Size("a feature matrix needs at least one column".into()));
        }
        if data.len() % p != 0 {
            return Err(Error::Shape(format!(
                "{} values do not fill rows of width {p}",
                data.len()
            )));
        }
        let n = data.len() / p;
        if n == 0 {
            return Err(Error::Size("a feature matrix needs at least one row".into()));
        }
        if row_ids.len() != n {
            return Err(Error::Shape(format!(
                "{} row ids for {n} rows",
                row_ids.len()
            )));
        }
        for (i, row) in data.chunks_exact(p).enumerate() {
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::Validation(format!(
                    "non-finite feature for row '{}' in column {}",
                    row_ids[i],
                    j + 1
                )));
            }
        }
        let mut seen = HashSet::with_capacity(n);
        for id in &row_ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::Validation(format!("duplicate row id '{id}'")));
            }
        }
        Ok(FeatureMatrix { row_ids, data, n, p })
    }

    /// Builds a matrix from one `Vec` per row.
    pub fn from_rows(row_ids: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Size("a feature matrix needs at least one row".into()));
        }
        let p = rows[0].len();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != p {
                return Err(Error::Shape(format!(
                    "row {i} has {} values, expected {p}",
                    row.len()
                )));
            }
        }
        let mut data = Vec::with_capacity(rows.len() * p);
        for row in &rows {
            data.extend_from_slice(row);
        }
        Self::new(row_ids, data, p)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.p..(i + 1) * self.p]
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    pub fn id(&self, i: usize) -> &str {
        &self.row_ids[i]
    }

    /// Row-major view of all values.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Content fingerprint used to tie designs back to the pool they were
    /// selected from. Covers the shape, the row ids and every value bit.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.n as u64).to_le_bytes());
        hasher.update((self.p as u64).to_le_bytes());
        for id in &self.row_ids {
            hasher.update([0u8]);
            hasher.update(id.as_bytes());
        }
        for v in &self.data {
            hasher.update(v.to_bits().to_le_bytes());
        }
        let digest = hasher.finalize();
        let mut out = String::with_capacity(16);
        for byte in &digest[..8] {
            out.push_str(&format!("{byte:02x}"));
        }
        out
    }

    /// Maps row ids back to indices, erroring on any id the pool lacks.
    pub fn indices_for_ids<S: AsRef<str>>(&self, ids: &[S]) -> Result<Vec<usize>> {
        let lookup: std::collections::HashMap<&str, usize> = self
            .row_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        ids.iter()
            .map(|id| {
                lookup
                    .get(id.as_ref())
                    .copied()
                    .ok_or_else(|| Error::Validation(format!("unknown row id '{}'", id.as_ref())))
            })
            .collect()
    }

    /// Extracts the given rows, in the given order, as a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> Result<FeatureMatrix> {
        if indices.is_empty() {
            return Err(Error::Size("row selection must be non-empty".into()));
        }
        let mut seen = HashSet::with_capacity(indices.len());
        let mut row_ids = Vec::with_capacity(indices.len());
        let mut data = Vec::with_capacity(indices.len() * self.p);
        for &i in indices {
            if i >= self.n {
                return Err(Error::Validation(format!(
                    "row index {i} out of bounds for {} rows",
                    self.n
                )));
            }
            if !seen.insert(i) {
                return Err(Error::Validation(format!("row index {i} selected twice")));
            }
            row_ids.push(self.row_ids[i].clone());
            data.extend_from_slice(self.row(i));
        }
        FeatureMatrix::new(row_ids, data, self.p)
    }
}

/// Inclusive integer scoring scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawScoreRange")]
pub struct ScoreRange {
    min_score: i32,
    max_score: i32,
}

#[derive(Deserialize)]
struct RawScoreRange {
    min_score: i32,
    max_score: i32,
}

impl TryFrom<RawScoreRange> for ScoreRange {
    type Error = Error;

    fn try_from(raw: RawScoreRange) -> Result<Self> {
        ScoreRange::new(raw.min_score, raw.max_score)
    }
}

impl ScoreRange {
    pub fn new(min_score: i32, max_score: i32) -> Result<Self> {
        if min_score >= max_score {
            return Err(Error::Validation(format!(
                "score range needs min < max, got {min_score}..={max_score}"
            )));
        }
        Ok(ScoreRange { min_score, max_score })
    }

    pub fn min_score(&self) -> i32 {
        self.min_score
    }

    pub fn max_score(&self) -> i32 {
        self.max_score
    }

    pub fn contains(&self, score: i32) -> bool {
        (self.min_score..=self.max_score).contains(&score)
    }
}

impl fmt::Display for ScoreRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..={}", self.min_score, self.max_score)
    }
}

/// Prompt genre of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Persuasive,
    Source,
    Narrative,
    Synthetic,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Task::Persuasive => "persuasive",
            Task::Source => "source",
            Task::Narrative => "narrative",
            Task::Synthetic => "synthetic",
        };
        f.write_str(name)
    }
}

/// Metadata sidecar for one dataset: identifier, task, scale and optional
/// declared split sizes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ManifestFile", into = "ManifestFile")]
pub struct SetManifest {
    set_id: String,
    task: Task,
    score_range: ScoreRange,
    train_n: Option<usize>,
    test_n: Option<usize>,
    degenerate: bool,
}

impl SetManifest {
    pub fn new(set_id: impl Into<String>, task: Task, score_range: ScoreRange) -> Result<Self> {
        let set_id = set_id.into();
        if set_id.is_empty() {
            return Err(Error::Validation("set_id must be non-empty".into()));
        }
        Ok(SetManifest {
            set_id,
            task,
            score_range,
            train_n: None,
            test_n: None,
            degenerate: false,
        })
    }

    pub fn with_counts(mut self, train_n: Option<usize>, test_n: Option<usize>) -> Self {
        self.train_n = train_n;
        self.test_n = test_n;
        self
    }

    pub fn with_degenerate(mut self, degenerate: bool) -> Self {
        self.degenerate = degenerate;
        self
    }

    pub fn set_id(&self) -> &str {
        &self.set_id
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn score_range(&self) -> ScoreRange {
        self.score_range
    }

    pub fn train_n(&self) -> Option<usize> {
        self.train_n
    }

    pub fn test_n(&self) -> Option<usize> {
        self.test_n
    }

    /// True when a synthetic generator could not spread its raw targets and
    /// collapsed every score to the bottom of the scale.
    pub fn degenerate(&self) -> bool {
        self.degenerate
    }
}

/// On-disk manifest layout. `set_id` may be a JSON string or number.
#[derive(Serialize, Deserialize)]
struct ManifestFile {
    #[serde(deserialize_with = "set_id_as_string")]
    set_id: String,
    task: Task,
    min_score: i32,
    max_score: i32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    train_n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    test_n: Option<usize>,
    #[serde(default, skip_serializing_if = "is_false")]
    degenerate: bool,
}

fn is_false(flag: &bool) -> bool {
    !*flag
}

fn set_id_as_string<'de, D>(deserializer: D) -> std::result::Result<String, D::Error>
where
    D: serde::Deserializer<'de>,
{
    use serde::de::Error as _;
    let value = serde_json::Value::deserialize(deserializer)?;
    match value {
        serde_json::Value::String(s) => Ok(s),
        serde_json::Value::Number(n) => Ok(n.to_string()),
        other => Err(D::Error::custom(format!(
            "set_id must be a string or number, got {other}"
        ))),
    }
}

impl TryFrom<ManifestFile> for SetManifest {
    type Error = Error;

    fn try_from(file: ManifestFile) -> Result<Self> {
        let range = ScoreRange::new(file.min_score, file.max_score)?;
        Ok(SetManifest::new(file.set_id, file.task, range)?
            .with_counts(file.train_n, file.test_n)
            .with_degenerate(file.degenerate))
    }
}

impl From<SetManifest> for ManifestFile {
    fn from(manifest: SetManifest) -> Self {
        ManifestFile {
            set_id: manifest.set_id,
            task: manifest.task,
            min_score: manifest.score_range.min_score(),
            max_score: manifest.score_range.max_score(),
            train_n: manifest.train_n,
            test_n: manifest.test_n,
            degenerate: manifest.degenerate,
        }
    }
}

/// A feature matrix paired with per-row integer scores and its manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: FeatureMatrix,
    scores: Vec<i32>,
    manifest: SetManifest,
}

impl LabeledDataset {
    pub fn new(features: FeatureMatrix, scores: Vec<i32>, manifest: SetManifest) -> Result<Self> {
        if scores.len() != features.n() {
            return Err(Error::Shape(format!(
                "{} scores for {} rows",
                scores.len(),
                features.n()
            )));
        }
        let range = manifest.score_range();
        for (i, &score) in scores.iter().enumerate() {
            if !range.contains(score) {
                return Err(Error::Validation(format!(
                    "score {score} for row '{}' outside {range}",
                    features.id(i)
                )));
            }
        }
        let n = features.n();
        let declared = [manifest.train_n(), manifest.test_n()];
        if declared.iter().any(Option::is_some) && !declared.contains(&Some(n)) {
            return Err(Error::Validation(format!(
                "{n} rows loaded but the manifest declares train_n={:?}, test_n={:?}",
                manifest.train_n(),
                manifest.test_n()
            )));
        }
        Ok(LabeledDataset {
            features,
            scores,
            manifest,
        })
    }

    pub fn features(&self) -> &FeatureMatrix {
        &self.features
    }

    pub fn scores(&self) -> &[i32] {
        &self.scores
    }

    pub fn scores_f64(&self) -> Vec<f64> {
        self.scores.iter().map(|&s| f64::from(s)).collect()
    }

    pub fn manifest(&self) -> &SetManifest {
        &self.manifest
    }

    pub fn n(&self) -> usize {
        self.features.n()
    }

    pub fn p(&self) -> usize {
        self.features.p()
    }

    /// Extracts the given rows as a new dataset. Declared split sizes no
    /// longer apply to a subset, so the child manifest drops them.
    pub fn subset(&self, indices: &[usize]) -> Result<LabeledDataset> {
        let features = self.features.select_rows(indices)?;
        let scores = indices.iter().map(|&i| self.scores[i]).collect();
        let manifest = self.manifest.clone().with_counts(None, None);
        LabeledDataset::new(features, scores, manifest)
    }

    /// Swaps in a new manifest, revalidating scores and declared counts.
    pub fn with_manifest(self, manifest: SetManifest) -> Result<LabeledDataset> {
        LabeledDataset::new(self.features, self.scores, manifest)
    }
}

/// Loads a feature CSV and its JSON manifest into a validated dataset.
pub fn load_dataset(
    features_path: impl AsRef<Path>,
    manifest_path: impl AsRef<Path>,
) -> Result<LabeledDataset> {
    let manifest = read_manifest(manifest_path.as_ref())?;
    let (features, scores) = read_features_csv(features_path.as_ref())?;
    LabeledDataset::new(features, scores, manifest)
}

/// Reads just the manifest sidecar.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<SetManifest> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_reader(BufReader::new(file))
        .map_err(|e| Error::schema(path.display().to_string(), e.to_string()))
}

/// Writes just the manifest sidecar.
pub fn write_manifest(manifest: &SetManifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut writer, manifest)
        .map_err(|e| Error::schema(path.display().to_string(), e.to_string()))?;
    writer.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn read_features_csv(path: &Path) -> Result<(FeatureMatrix, Vec<i32>)> {
    let location = |detail: String| format!("{}{}", path.display(), detail);
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(BufReader::new(file));

    let headers = reader
        .headers()
        .map_err(|e| Error::schema(location(String::new()), e.to_string()))?
        .clone();
    if headers.len() < 3 || &headers[0] != "id" || &headers[1] != "score" {
        return Err(Error::schema(
            location(String::new()),
            format!(
                "header must be 'id,score,f1,...,fp' with at least one feature column, got '{}'",
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    let p = headers.len() - 2;

    let mut row_ids = Vec::new();
    let mut scores = Vec::new();
    let mut data = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::schema(location(String::new()), e.to_string()))?;
        let line = record
            .position()
            .map(|pos| pos.line().to_string())
            .unwrap_or_else(|| (row + 2).to_string());
        let id = record[0].to_string();
        let score: i32 = record[1].trim().parse().map_err(|_| {
            Error::schema(
                location(format!(" line {line}")),
                format!("column 'score': '{}' is not an integer", &record[1]),
            )
        })?;
        for (j, field) in record.iter().skip(2).enumerate() {
            let value: f64 = field.trim().parse().map_err(|_| {
                Error::schema(
                    location(format!(" line {line}")),
                    format!("column '{}': '{field}' is not a real number", &headers[j + 2]),
                )
            })?;
            if !value.is_finite() {
                return Err(Error::schema(
                    location(format!(" line {line}")),
                    format!("column '{}': value must be finite", &headers[j + 2]),
                ));
            }
            data.push(value);
        }
        row_ids.push(id);
        scores.push(score);
    }

    let features = FeatureMatrix::new(row_ids, data, p)?;
    Ok((features, scores))
}

/// Writes the dataset back out as a feature CSV plus JSON manifest, in the
/// same layout `load_dataset` reads.
pub fn write_dataset(
    dataset: &LabeledDataset,
    features_path: impl AsRef<Path>,
    manifest_path: impl AsRef<Path>,
) -> Result<()> {
    let path = features_path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = csv::Writer::from_writer(BufWriter::new(file));

    let mut header = Vec::with_capacity(dataset.p() + 2);
    header.push("id".to_string());
    header.push("score".to_string());
    for j in 1..=dataset.p() {
        header.push(format!("f{j}"));
    }
    writer
        .write_record(&header)
        .map_err(|e| Error::schema(path.display().to_string(), e.to_string()))?;

    let features = dataset.features();
    for i in 0..dataset.n() {
        let mut record = Vec::with_capacity(dataset.p() + 2);
        record.push(features.id(i).to_string());
        record.push(dataset.scores()[i].to_string());
        for value in features.row(i) {
            record.push(value.to_string());
        }
        writer
            .write_record(&record)
            .map_err(|e| Error::schema(path.display().to_string(), e.to_string()))?;
    }
    writer
        .flush()
        .map_err(|e| Error::io(path, e))?;

    write_manifest(dataset.manifest(), manifest_path)
}

/// Draws the feature matrix and raw (pre-rounding) targets of a synthetic
/// linear pool. Split out so tests can check the generative family directly.
fn synthesize_raw(
    n: usize,
    p: usize,
    beta: &[f64],
    noise_sd: f64,
    seed: u64,
) -> (Vec<f64>, Vec<f64>) {
    let mut rng = seeded_rng(seed);
    let normal = StandardNormal;
    let mut data = Vec::with_capacity(n * p);
    for _ in 0..n * p {
        let v: f64 = normal.sample(&mut rng);
        data.push(v);
    }
    let mut raw = Vec::with_capacity(n);
    for row in data.chunks_exact(p) {
        let signal: f64 = row.iter().zip(beta).map(|(x, b)| x * b).sum();
        let noise = if noise_sd > 0.0 {
            let e: f64 = normal.sample(&mut rng);
            noise_sd * e
        } else {
            0.0
        };
        raw.push(signal + noise);
    }
    (data, raw)
}

/// Generates a synthetic pool: standard-normal features, a linear raw target
/// `X beta + noise`, and integer scores obtained by mapping the raw range
/// onto the scale and rounding to the nearest label.
///
/// If the raw targets do not spread (zero beta and zero noise, or n = 1) the
/// pool is still returned, with every score at the bottom of the scale and
/// the manifest flagged as degenerate.
pub fn generate_synthetic(
    n: usize,
    p: usize,
    beta: &[f64],
    noise_sd: f64,
    score_range: ScoreRange,
    seed: u64,
) -> Result<LabeledDataset> {
    if n == 0 {
        return Err(Error::Size("synthetic pool needs at least one row".into()));
    }
    if p == 0 {
        return Err(Error::Size("synthetic pool needs at least one feature".into()));
    }
    if beta.len() != p {
        return Err(Error::Shape(format!(
            "beta has {} entries for {p} features",
            beta.len()
        )));
    }
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::Validation("beta must be finite".into()));
    }
    if !noise_sd.is_finite() || noise_sd < 0.0 {
        return Err(Error::Validation(format!(
            "noise_sd must be finite and non-negative, got {noise_sd}"
        )));
    }

    let (data, raw) = synthesize_raw(n, p, beta, noise_sd, seed);
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let degenerate = !(hi > lo);

    let scores = if degenerate {
        vec![score_range.min_score(); n]
    } else {
        let span = f64::from(score_range.max_score() - score_range.min_score());
        raw.iter()
            .map(|&y| {
                let scaled = f64::from(score_range.min_score()) + (y - lo) / (hi - lo) * span;
                round_score(scaled, score_range)
            })
            .collect()
    };

    let row_ids = (0..n).map(|i| format!("s{i}")).collect();
    let features = FeatureMatrix::new(row_ids, data, p)?;
    let manifest =
        SetManifest::new("synthetic", Task::Synthetic, score_range)?.with_degenerate(degenerate);
    LabeledDataset::new(features, scores, manifest)
}

/// Draws floor(n/2) rows without replacement, keeping pool order.
pub fn half_sample(dataset: &LabeledDataset, seed: u64) -> Result<LabeledDataset> {
    let n = dataset.n();
    if n < 2 {
        return Err(Error::Size(format!(
            "half-sampling needs at least two rows, got {n}"
        )));
    }
    let mut rng = seeded_rng(seed);
    let mut indices = rand::seq::index::sample(&mut rng, n, n / 2).into_vec();
    indices.sort_unstable();
    dataset.subset(&indices)
}
