//! Right-censored survival datasets: CSV ingestion, preprocessing and
//! resampling.
//!
//! Z-scoring uses the population standard deviation (divide by N). Rows with
//! any missing feature cell are dropped at load time; nothing is imputed.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One subject: covariates, record time and event indicator.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalRecord {
    /// Numeric covariates, aligned with [`Dataset::feature_names`].
    pub covariates: Vec<f64>,
    /// Raw categorical levels, aligned with [`Dataset::categorical_names`].
    pub categories: Vec<String>,
    pub time: f64,
    /// `true` when the event was observed, `false` when censored.
    pub event: bool,
}

impl SurvivalRecord {
    pub fn new(covariates: Vec<f64>, time: f64, event: bool) -> Self {
        Self {
            covariates,
            categories: Vec::new(),
            time,
            event,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub categorical_names: Vec<String>,
    pub records: Vec<SurvivalRecord>,
    /// Rows dropped at load time because a feature cell was missing.
    pub dropped_rows: usize,
}

impl Dataset {
    /// Builds a purely numeric dataset, checking every record against `feature_names`.
    pub fn new(feature_names: Vec<String>, records: Vec<SurvivalRecord>) -> Result<Self> {
        let ds = Self {
            feature_names,
            categorical_names: Vec::new(),
            records,
            dropped_rows: 0,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.records.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let d = self.feature_names.len();
        let c = self.categorical_names.len();
        for r in &self.records {
            if r.covariates.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: r.covariates.len(),
                });
            }
            if r.categories.len() != c {
                return Err(Error::DimensionMismatch {
                    expected: c,
                    got: r.categories.len(),
                });
            }
            if !(r.time.is_finite() && r.time >= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "record time must be finite and non-negative, got {}",
                    r.time
                )));
            }
        }
        Ok(())
    }

    /// Numeric dimensionality d.
    pub fn dim(&self) -> usize {
        self.feature_names.len()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.time).collect()
    }

    pub fn events(&self) -> Vec<bool> {
        self.records.iter().map(|r| r.event).collect()
    }

    pub fn covariates(&self) -> Vec<&[f64]> {
        self.records.iter().map(|r| r.covariates.as_slice()).collect()
    }

    pub fn event_fraction(&self) -> f64 {
        self.records.iter().filter(|r| r.event).count() as f64 / self.len().max(1) as f64
    }

    /// Rows at `indices`, in that order. Metadata is carried over.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            feature_names: self.feature_names.clone(),
            categorical_names: self.categorical_names.clone(),
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
            dropped_rows: 0,
        }
    }

    /// Writes the dataset as `time,event,<features...>` with a header row.
    pub fn write_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["time".to_string(), "event".to_string()];
        header.extend(self.feature_names.iter().cloned());
        header.extend(self.categorical_names.iter().cloned());
        w.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![r.time.to_string(), (r.event as u8).to_string()];
            row.extend(r.covariates.iter().map(|v| v.to_string()));
            row.extend(r.categories.iter().cloned());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Column roles for [`load_csv`].
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Schema {
    pub time: String,
    pub event: String,
    /// Feature columns; `None` takes every column other than time and event.
    #[serde(default)]
    pub features: Option<Vec<String>>,
    /// Feature columns kept as raw strings for one-hot expansion.
    #[serde(default)]
    pub categorical: Vec<String>,
}

impl Schema {
    pub fn new(time: &str, event: &str) -> Self {
        Self {
            time: time.to_string(),
            event: event.to_string(),
            features: None,
            categorical: Vec::new(),
        }
    }
}

pub fn load_csv<P: AsRef<Path>>(path: P, schema: &Schema) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    read_csv(file, schema)
}

fn parse_event(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "1.0" | "true" => Some(true),
        "0" | "0.0" | "false" => Some(false),
        _ => None,
    }
}

fn is_missing(s: &str) -> bool {
    matches!(s.trim(), "" | "NA" | "NaN" | "nan" | "null")
}

pub fn read_csv<R: Read>(reader: R, schema: &Schema) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("missing required column `{name}`")))
    };
    let time_col = col(&schema.time)?;
    let event_col = col(&schema.event)?;
    let feature_cols: Vec<String> = match &schema.features {
        Some(f) => f.clone(),
        None => headers
            .iter()
            .filter(|h| **h != schema.time && **h != schema.event)
            .cloned()
            .collect(),
    };
    for c in &schema.categorical {
        if !feature_cols.contains(c) {
            return Err(Error::Schema(format!(
                "categorical column `{c}` is not a feature column"
            )));
        }
    }
    let mut numeric = Vec::new();
    let mut categorical = Vec::new();
    for name in &feature_cols {
        let idx = col(name)?;
        if schema.categorical.contains(name) {
            categorical.push((name.clone(), idx));
        } else {
            numeric.push((name.clone(), idx));
        }
    }

    let mut records = Vec::new();
    let mut dropped = 0;
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        let cell = |i: usize| row.get(i).unwrap_or("");
        let time: f64 = cell(time_col).parse().map_err(|_| Error::Parse {
            line,
            msg: format!("time `{}` is not a number", cell(time_col)),
        })?;
        if !(time.is_finite() && time >= 0.0) {
            return Err(Error::Parse {
                line,
                msg: format!("time {time} must be finite and non-negative"),
            });
        }
        let event = parse_event(cell(event_col)).ok_or_else(|| Error::Parse {
            line,
            msg: format!("event `{}` is not 0/1 or true/false", cell(event_col)),
        })?;

        if numeric
            .iter()
            .chain(categorical.iter())
            .any(|(_, i)| is_missing(cell(*i)))
        {
            dropped += 1;
            continue;
        }
        let mut covariates = Vec::with_capacity(numeric.len());
        for (name, i) in &numeric {
            let v: f64 = cell(*i).parse().map_err(|_| Error::Parse {
                line,
                msg: format!("feature `{name}` value `{}` is not a number", cell(*i)),
            })?;
            covariates.push(v);
        }
        let categories = categorical.iter().map(|(_, i)| cell(*i).to_string()).collect();
        records.push(SurvivalRecord {
            covariates,
            categories,
            time,
            event,
        });
    }
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(Dataset {
        feature_names: numeric.into_iter().map(|(n, _)| n).collect(),
        categorical_names: categorical.into_iter().map(|(n, _)| n).collect(),
        records,
        dropped_rows: dropped,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct NumericColumn {
    pub name: String,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CategoricalColumn {
    pub name: String,
    pub categories: Vec<String>,
}

/// Train-fitted z-score and one-hot transform.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
pub struct PreprocessSpec {
    pub numeric: Vec<NumericColumn>,
    pub categorical: Vec<CategoricalColumn>,
    /// Zero-variance numeric columns removed from the output.
    pub dropped: Vec<String>,
}

impl PreprocessSpec {
    /// Column names produced by [`apply_preprocess`].
    pub fn output_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.numeric.iter().map(|c| c.name.clone()).collect();
        for c in &self.categorical {
            names.extend(c.categories.iter().map(|lvl| format!("{}={}", c.name, lvl)));
        }
        names
    }

    pub fn output_dim(&self) -> usize {
        self.numeric.len() + self.categorical.iter().map(|c| c.categories.len()).sum::<usize>()
    }
}

/// Where a source column lives in a [`Dataset`].
#[derive(Clone, Copy)]
enum Source {
    Numeric(usize),
    Categorical(usize),
}

fn locate(ds: &Dataset, name: &str) -> Result<Source> {
    if let Some(i) = ds.feature_names.iter().position(|n| n == name) {
        return Ok(Source::Numeric(i));
    }
    if let Some(i) = ds.categorical_names.iter().position(|n| n == name) {
        return Ok(Source::Categorical(i));
    }
    Err(Error::Schema(format!("column `{name}` not present in dataset")))
}

fn level(r: &SurvivalRecord, src: Source) -> String {
    match src {
        Source::Numeric(i) => r.covariates[i].to_string(),
        Source::Categorical(i) => r.categories[i].clone(),
    }
}

/// Fits z-score statistics and category lists on `train`.
///
/// Columns named in `categorical` (or loaded as categorical) are one-hot
/// expanded; every other numeric column is z-scored. Constant numeric
/// columns are listed in `dropped` rather than raising an error.
pub fn fit_preprocess(train: &Dataset, categorical: &[String]) -> Result<PreprocessSpec> {
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut spec = PreprocessSpec::default();
    let n = train.len() as f64;
    for (i, name) in train.feature_names.iter().enumerate() {
        if categorical.contains(name) {
            continue;
        }
        let mean = train.records.iter().map(|r| r.covariates[i]).sum::<f64>() / n;
        let var = train
            .records
            .iter()
            .map(|r| (r.covariates[i] - mean).powi(2))
            .sum::<f64>()
            / n;
        let std = var.sqrt();
        if std > 1e-12 * mean.abs().max(1.0) {
            spec.numeric.push(NumericColumn {
                name: name.clone(),
                mean,
                std,
            });
        } else {
            spec.dropped.push(name.clone());
        }
    }
    let mut cat_names: Vec<String> = train
        .feature_names
        .iter()
        .filter(|n| categorical.contains(n))
        .cloned()
        .collect();
    cat_names.extend(train.categorical_names.iter().cloned());
    for c in categorical {
        if !cat_names.contains(c) {
            return Err(Error::Schema(format!("column `{c}` not present in dataset")));
        }
    }
    for name in cat_names {
        let src = locate(train, &name)?;
        let mut categories: Vec<String> = Vec::new();
        for r in &train.records {
            let lvl = level(r, src);
            if !categories.contains(&lvl) {
                categories.push(lvl);
            }
        }
        spec.categorical.push(CategoricalColumn { name, categories });
    }
    Ok(spec)
}

/// Applies a fitted spec. Categories unseen at fit time map to an all-zeros block.
pub fn apply_preprocess(ds: &Dataset, spec: &PreprocessSpec) -> Result<Dataset> {
    let numeric: Vec<(usize, &NumericColumn)> = spec
        .numeric
        .iter()
        .map(|c| match locate(ds, &c.name)? {
            Source::Numeric(i) => Ok((i, c)),
            Source::Categorical(_) => Err(Error::Schema(format!(
                "column `{}` is categorical in the dataset but numeric in the spec",
                c.name
            ))),
        })
        .collect::<Result<_>>()?;
    let categorical: Vec<(Source, HashMap<&str, usize>)> = spec
        .categorical
        .iter()
        .map(|c| {
            let lookup = c
                .categories
                .iter()
                .enumerate()
                .map(|(k, lvl)| (lvl.as_str(), k))
                .collect();
            Ok((locate(ds, &c.name)?, lookup))
        })
        .collect::<Result<_>>()?;

    let records = ds
        .records
        .iter()
        .map(|r| {
            let mut x = Vec::with_capacity(spec.output_dim());
            x.extend(numeric.iter().map(|(i, c)| (r.covariates[*i] - c.mean) / c.std));
            for ((src, lookup), col) in categorical.iter().zip(&spec.categorical) {
                let start = x.len();
                x.resize(start + col.categories.len(), 0.0);
                if let Some(&k) = lookup.get(level(r, *src).as_str()) {
                    x[start + k] = 1.0;
                }
            }
            SurvivalRecord::new(x, r.time, r.event)
        })
        .collect();
    Ok(Dataset {
        feature_names: spec.output_names(),
        categorical_names: Vec::new(),
        records,
        dropped_rows: ds.dropped_rows,
    })
}

/// Shuffled train/validation/test index sets. Sizes are rounded from the
/// fractions, test takes the remainder.
pub fn split_indices(n: usize, fractions: (f64, f64, f64), seed: u64) -> Result<[Vec<usize>; 3]> {
    let (a, b, c) = fractions;
    if a <= 0.0 || b <= 0.0 || c <= 0.0 {
        return Err(Error::InvalidArgument("split fractions must be positive".into()));
    }
    if (a + b + c - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "split fractions sum to {}, expected 1",
            a + b + c
        )));
    }
    let n_train = (a * n as f64).round() as usize;
    let n_val = (b * n as f64).round() as usize;
    if n_train == 0 || n_val == 0 || n_train + n_val >= n {
        return Err(Error::InvalidArgument(format!(
            "split of {n} records leaves an empty part"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = idx.split_off(n_train + n_val);
    let val = idx.split_off(n_train);
    Ok([idx, val, test])
}

pub fn split(ds: &Dataset, fractions: (f64, f64, f64), seed: u64) -> Result<(Dataset, Dataset, Dataset)> {
    let [tr, va, te] = split_indices(ds.len(), fractions, seed)?;
    Ok((ds.subset(&tr), ds.subset(&va), ds.subset(&te)))
}

/// K-fold (train, test) index pairs. With `stratify_by_event`, events and
/// censored records are dealt round-robin so each fold's event count is
/// within one of the others.
pub fn kfold(
    events: &[bool],
    k: usize,
    seed: u64,
    stratify_by_event: bool,
) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    let n = events.len();
    if k < 2 {
        return Err(Error::InvalidArgument("k must be at least 2".into()));
    }
    if k > n {
        return Err(Error::InvalidArgument(format!("k = {k} exceeds N = {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let groups: Vec<Vec<usize>> = if stratify_by_event {
        let ev: Vec<usize> = (0..n).filter(|&i| events[i]).collect();
        let ce: Vec<usize> = (0..n).filter(|&i| !events[i]).collect();
        if ev.len() < k || ce.len() < k {
            return Err(Error::InvalidArgument(format!(
                "stratified {k}-fold needs at least {k} events and {k} censored records"
            )));
        }
        vec![ev, ce]
    } else {
        vec![(0..n).collect()]
    };
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for mut g in groups {
        g.shuffle(&mut rng);
        for i in g {
            folds[next].push(i);
            next = (next + 1) % k;
        }
    }
    Ok(folds
        .iter()
        .enumerate()
        .map(|(f, test)| {
            let mut test = test.clone();
            test.sort_unstable();
            let train = folds
                .iter()
                .enumerate()
                .filter(|(g, _)| *g != f)
                .flat_map(|(_, v)| v.iter().copied())
                .collect::<std::collections::BTreeSet<_>>()
                .into_iter()
                .collect();
            (train, test)
        })
        .collect())
}
