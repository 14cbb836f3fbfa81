//! Samples, label sets, vocabularies and the split-managed dataset store.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Concept {
    pub name: String,
    pub index: usize,
}

/// Presence/absence of each vocabulary concept.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelSet {
    bits: Vec<bool>,
}

impl LabelSet {
    pub fn empty(vocab_size: usize) -> Self {
        LabelSet {
            bits: vec![false; vocab_size],
        }
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        LabelSet { bits }
    }

    pub fn from_indices(vocab_size: usize, indices: &[usize]) -> Result<Self> {
        let mut set = LabelSet::empty(vocab_size);
        for &d in indices {
            if d >= vocab_size {
                return Err(Error::UnknownConcept(format!("#{d}")));
            }
            set.bits[d] = true;
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn contains(&self, concept: usize) -> bool {
        self.bits.get(concept).copied().unwrap_or(false)
    }

    pub fn insert(&mut self, concept: usize) {
        self.bits[concept] = true;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// Number of positive concepts.
    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn positives(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(d, b)| b.then_some(d))
    }

    /// True when both sets have at least one concept in common.
    pub fn shares_any(&self, other: &LabelSet) -> bool {
        self.bits.iter().zip(&other.bits).any(|(a, b)| *a && *b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    /// Features as read from the file.
    pub raw_features: Vec<f64>,
    /// Z-scored copy using training-split statistics.
    pub features: Vec<f64>,
    pub labels: Option<LabelSet>,
}

/// Sample indices of the three disjoint splits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub initial_labeled: Vec<usize>,
    pub unlabeled: Vec<usize>,
    pub test: Vec<usize>,
}

impl Splits {
    /// Initial labeled followed by unlabeled indices: the clustered universe.
    pub fn training(&self) -> impl Iterator<Item = usize> + '_ {
        self.initial_labeled.iter().chain(&self.unlabeled).copied()
    }
}

/// Per-dimension z-score parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Dimensions with zero training variance; mapped to constant 0.
    pub constant: Vec<bool>,
}

impl Normalization {
    /// Population statistics over `rows`. A dimension whose spread is
    /// negligible relative to its magnitude is marked constant.
    pub fn fit<'a, I>(rows: I, dim: usize) -> Self
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let rows: Vec<&[f64]> = rows.into_iter().collect();
        let n = rows.len().max(1) as f64;
        let mut mean = vec![0.0; dim];
        for r in &rows {
            for (m, x) in mean.iter_mut().zip(r.iter()) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for r in &rows {
            for ((v, x), m) in var.iter_mut().zip(r.iter()).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        var.iter_mut().for_each(|v| *v /= n);
        let std: Vec<f64> = var.iter().map(|v| v.sqrt()).collect();
        let constant = std
            .iter()
            .zip(&mean)
            .map(|(s, m)| *s <= 1e-12 * (1.0 + m.abs()))
            .collect();
        Normalization {
            mean,
            std,
            constant,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, raw: &[f64]) -> Result<Vec<f64>> {
        if raw.len() != self.dim() {
            return Err(Error::dims(self.dim(), raw.len()));
        }
        Ok(raw
            .iter()
            .enumerate()
            .map(|(i, x)| {
                if self.constant[i] {
                    0.0
                } else {
                    (x - self.mean[i]) / self.std[i]
                }
            })
            .collect())
    }

    /// Indices of dimensions that carry information.
    pub fn active_dims(&self) -> Vec<usize> {
        (0..self.dim()).filter(|&i| !self.constant[i]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetFormat {
    Json,
    Csv,
}

impl DatasetFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => DatasetFormat::Csv,
            _ => DatasetFormat::Json,
        }
    }
}

impl FromStr for DatasetFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(DatasetFormat::Json),
            "csv" => Ok(DatasetFormat::Csv),
            other => Err(Error::InvalidParameter(format!("unknown format `{other}`"))),
        }
    }
}

impl fmt::Display for DatasetFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetFormat::Json => "json",
            DatasetFormat::Csv => "csv",
        })
    }
}

/// On-disk JSON layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetFile {
    pub vocabulary: Vec<String>,
    pub feature_dim: usize,
    pub samples: Vec<SampleRecord>,
    pub splits: SplitsRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRecord {
    pub id: String,
    pub features: Vec<f64>,
    pub labels: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitsRecord {
    pub initial_labeled: Vec<String>,
    pub unlabeled: Vec<String>,
    pub test: Vec<String>,
}

/// Sidecar accompanying a CSV dataset, `<stem>.splits.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSidecar {
    #[serde(default)]
    pub vocabulary: Option<Vec<String>>,
    pub splits: SplitsRecord,
}

pub fn csv_sidecar_path(csv_path: &Path) -> PathBuf {
    let stem = csv_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    csv_path.with_file_name(format!("{stem}.splits.json"))
}

/// Immutable sample store with vocabulary, splits and normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    vocabulary: Vec<Concept>,
    samples: Vec<Sample>,
    index: HashMap<String, usize>,
    splits: Splits,
    feature_dim: usize,
    normalization: Normalization,
}

impl Dataset {
    pub fn load(path: &Path, format: DatasetFormat) -> Result<Self> {
        Dataset::from_record(read_record(path, format)?)
    }

    pub fn save(&self, path: &Path, format: DatasetFormat) -> Result<()> {
        match format {
            DatasetFormat::Json => fs::write(path, self.to_json()?)?,
            DatasetFormat::Csv => write_csv(&self.to_record(), path)?,
        }
        Ok(())
    }

    /// Canonical JSON form: pretty-printed, labels in vocabulary order.
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(&self.to_record())?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_record(record: DatasetFile) -> Result<Self> {
        let DatasetFile {
            vocabulary: names,
            feature_dim,
            samples: records,
            splits: split_record,
        } = record;

        if names.is_empty() {
            return Err(Error::Malformed("vocabulary is empty".into()));
        }
        let mut concept_index = HashMap::new();
        let mut vocabulary = Vec::with_capacity(names.len());
        for (index, name) in names.into_iter().enumerate() {
            if name.is_empty() {
                return Err(Error::Malformed("empty concept name".into()));
            }
            if concept_index.insert(name.clone(), index).is_some() {
                return Err(Error::Malformed(format!("duplicate concept `{name}`")));
            }
            vocabulary.push(Concept { name, index });
        }
        if feature_dim == 0 {
            return Err(Error::Malformed("feature_dim must be positive".into()));
        }
        let d = vocabulary.len();

        let mut index = HashMap::with_capacity(records.len());
        let mut samples = Vec::with_capacity(records.len());
        for (i, rec) in records.into_iter().enumerate() {
            if rec.id.is_empty() {
                return Err(Error::Malformed(format!("sample #{i} has an empty id")));
            }
            if rec.features.len() != feature_dim {
                return Err(Error::DimensionMismatch {
                    expected: feature_dim,
                    actual: rec.features.len(),
                    context: Some(format!("sample `{}`", rec.id)),
                });
            }
            if rec.features.iter().any(|x| !x.is_finite()) {
                return Err(Error::Malformed(format!(
                    "sample `{}` has a non-finite feature",
                    rec.id
                )));
            }
            let labels = match rec.labels {
                None => None,
                Some(names) => {
                    let mut set = LabelSet::empty(d);
                    for name in names {
                        let c = concept_index
                            .get(&name)
                            .ok_or_else(|| Error::UnknownConcept(name.clone()))?;
                        set.insert(*c);
                    }
                    Some(set)
                }
            };
            if index.insert(rec.id.clone(), i).is_some() {
                return Err(Error::Malformed(format!(
                    "duplicate sample id `{}`",
                    rec.id
                )));
            }
            samples.push(Sample {
                id: rec.id,
                raw_features: rec.features,
                features: Vec::new(),
                labels,
            });
        }

        let resolve = |ids: Vec<String>, name: &str| -> Result<Vec<usize>> {
            ids.into_iter()
                .map(|id| {
                    index.get(&id).copied().ok_or_else(|| {
                        Error::SplitViolation(format!("{name} split names unknown sample `{id}`"))
                    })
                })
                .collect()
        };
        let splits = Splits {
            initial_labeled: resolve(split_record.initial_labeled, "initial_labeled")?,
            unlabeled: resolve(split_record.unlabeled, "unlabeled")?,
            test: resolve(split_record.test, "test")?,
        };
        validate_splits(&splits, &samples, d, &vocabulary)?;

        let normalization = Normalization::fit(
            splits
                .training()
                .map(|i| samples[i].raw_features.as_slice()),
            feature_dim,
        );
        for s in &mut samples {
            s.features = normalization.apply(&s.raw_features)?;
        }

        Ok(Dataset {
            vocabulary,
            samples,
            index,
            splits,
            feature_dim,
            normalization,
        })
    }

    pub fn to_record(&self) -> DatasetFile {
        let ids = |v: &[usize]| v.iter().map(|&i| self.samples[i].id.clone()).collect();
        DatasetFile {
            vocabulary: self.vocabulary.iter().map(|c| c.name.clone()).collect(),
            feature_dim: self.feature_dim,
            samples: self
                .samples
                .iter()
                .map(|s| SampleRecord {
                    id: s.id.clone(),
                    features: s.raw_features.clone(),
                    labels: s.labels.as_ref().map(|l| self.concept_names(l)),
                })
                .collect(),
            splits: SplitsRecord {
                initial_labeled: ids(&self.splits.initial_labeled),
                unlabeled: ids(&self.splits.unlabeled),
                test: ids(&self.splits.test),
            },
        }
    }

    pub fn vocabulary(&self) -> &[Concept] {
        &self.vocabulary
    }

    pub fn vocab_size(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn concept_index(&self, name: &str) -> Option<usize> {
        self.vocabulary.iter().position(|c| c.name == name)
    }

    pub fn concept_names(&self, labels: &LabelSet) -> Vec<String> {
        labels
            .positives()
            .map(|d| self.vocabulary[d].name.clone())
            .collect()
    }

    /// Builds a label set from concept names.
    pub fn label_set(&self, names: &[String]) -> Result<LabelSet> {
        let mut set = LabelSet::empty(self.vocab_size());
        for n in names {
            let d = self
                .concept_index(n)
                .ok_or_else(|| Error::UnknownConcept(n.clone()))?;
            set.insert(d);
        }
        Ok(set)
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn sample(&self, idx: usize) -> &Sample {
        &self.samples[idx]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn splits(&self) -> &Splits {
        &self.splits
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn normalization(&self) -> &Normalization {
        &self.normalization
    }

    /// Normalized features of every sample, indexed like [`Dataset::samples`].
    pub fn feature_table(&self) -> Vec<Vec<f64>> {
        self.samples.iter().map(|s| s.features.clone()).collect()
    }

    pub fn ids(&self) -> Vec<String> {
        self.samples.iter().map(|s| s.id.clone()).collect()
    }
}

/// Parses a dataset file without validating splits or normalizing.
pub fn read_record(path: &Path, format: DatasetFormat) -> Result<DatasetFile> {
    match format {
        DatasetFormat::Json => {
            let text = fs::read_to_string(path)?;
            serde_json::from_str(&text)
                .map_err(|e| Error::Malformed(format!("{}: {e}", path.display())))
        }
        DatasetFormat::Csv => read_csv(path),
    }
}

fn validate_splits(
    splits: &Splits,
    samples: &[Sample],
    vocab_size: usize,
    vocabulary: &[Concept],
) -> Result<()> {
    let mut seen = HashSet::new();
    for (name, part) in [
        ("initial_labeled", &splits.initial_labeled),
        ("unlabeled", &splits.unlabeled),
        ("test", &splits.test),
    ] {
        for &i in part {
            if !seen.insert(i) {
                return Err(Error::SplitViolation(format!(
                    "sample `{}` appears more than once ({name})",
                    samples[i].id
                )));
            }
        }
    }
    if seen.len() != samples.len() {
        let missing = samples
            .iter()
            .enumerate()
            .find(|(i, _)| !seen.contains(i))
            .map(|(_, s)| s.id.clone())
            .unwrap_or_default();
        return Err(Error::SplitViolation(format!(
            "sample `{missing}` belongs to no split"
        )));
    }
    for &i in &splits.test {
        if samples[i].labels.is_none() {
            return Err(Error::SplitViolation(format!(
                "test sample `{}` has no labels",
                samples[i].id
            )));
        }
    }
    let mut covered = vec![false; vocab_size];
    for &i in &splits.initial_labeled {
        let labels = samples[i].labels.as_ref().ok_or_else(|| {
            Error::SplitViolation(format!(
                "initial labeled sample `{}` has no labels",
                samples[i].id
            ))
        })?;
        for d in labels.positives() {
            covered[d] = true;
        }
    }
    if let Some(d) = covered.iter().position(|c| !c) {
        return Err(Error::SplitViolation(format!(
            "concept `{}` has no positive example in the initial labeled set",
            vocabulary[d].name
        )));
    }
    Ok(())
}

fn read_csv(path: &Path) -> Result<DatasetFile> {
    let sidecar_path = csv_sidecar_path(path);
    let sidecar: CsvSidecar =
        serde_json::from_str(&fs::read_to_string(&sidecar_path).map_err(|e| {
            Error::Malformed(format!(
                "missing split sidecar {}: {e}",
                sidecar_path.display()
            ))
        })?)
        .map_err(|e| Error::Malformed(format!("{}: {e}", sidecar_path.display())))?;

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let n = headers.len();
    if n < 3 || &headers[0] != "id" || &headers[n - 1] != "labels" {
        return Err(Error::Malformed(
            "csv header must be `id,f0,...,f{M-1},labels`".into(),
        ));
    }
    let feature_dim = n - 2;
    for (i, h) in headers.iter().skip(1).take(feature_dim).enumerate() {
        if h != format!("f{i}") {
            return Err(Error::Malformed(format!(
                "expected column f{i}, found `{h}`"
            )));
        }
    }

    let mut samples = Vec::new();
    let mut seen_concepts: Vec<String> = Vec::new();
    for row in reader.records() {
        let row = row?;
        if row.len() != n {
            return Err(Error::DimensionMismatch {
                expected: feature_dim,
                actual: row.len().saturating_sub(2),
                context: Some(format!("csv row `{}`", row.get(0).unwrap_or(""))),
            });
        }
        let features = (1..=feature_dim)
            .map(|c| {
                row[c].trim().parse::<f64>().map_err(|e| {
                    Error::Malformed(format!("row `{}` column f{}: {e}", &row[0], c - 1))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let raw_labels = row[n - 1].trim();
        let labels = if raw_labels.is_empty() {
            None
        } else {
            let names: Vec<String> = raw_labels
                .split('|')
                .map(|s| s.trim().to_string())
                .collect();
            for name in &names {
                if !seen_concepts.contains(name) {
                    seen_concepts.push(name.clone());
                }
            }
            Some(names)
        };
        samples.push(SampleRecord {
            id: row[0].to_string(),
            features,
            labels,
        });
    }
    let vocabulary = sidecar.vocabulary.unwrap_or_else(|| {
        seen_concepts.sort();
        seen_concepts
    });
    Ok(DatasetFile {
        vocabulary,
        feature_dim,
        samples,
        splits: sidecar.splits,
    })
}

fn write_csv(record: &DatasetFile, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let mut header = vec!["id".to_string()];
    header.extend((0..record.feature_dim).map(|i| format!("f{i}")));
    header.push("labels".into());
    writer.write_record(&header)?;
    for s in &record.samples {
        let mut row = vec![s.id.clone()];
        row.extend(s.features.iter().map(|x| format!("{x:?}")));
        row.push(s.labels.as_ref().map(|l| l.join("|")).unwrap_or_default());
        writer.write_record(&row)?;
    }
    writer.flush()?;
    let sidecar = CsvSidecar {
        vocabulary: Some(record.vocabulary.clone()),
        splits: record.splits.clone(),
    };
    fs::write(
        csv_sidecar_path(path),
        serde_json::to_string_pretty(&sidecar)?,
    )?;
    Ok(())
}
