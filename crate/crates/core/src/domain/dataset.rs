//! Enumerated benchmark datasets with measured yields.

use std::collections::HashMap;

use sha2::{Digest, Sha256};

use super::space::{CategoricalParam, ContinuousParam, EncodedPoint, Experiment, ParamValue, ParameterSpace};
use super::DomainError;

/// Ground-truth lookup table `x -> y` over a finite candidate set.
#[derive(Debug, Clone)]
pub struct YieldDataset {
    name: String,
    space: ParameterSpace,
    experiments: Vec<Experiment>,
    yields: Vec<f64>,
    index: HashMap<Experiment, usize>,
}

/// Where the parameter space of a CSV comes from.
#[derive(Debug, Clone, Copy)]
pub enum SpaceSource<'a> {
    Declared(&'a ParameterSpace),
    /// Non-numeric columns become categoricals (levels in order of first
    /// appearance); numeric columns with at least two distinct values become
    /// continuous parameters whose grid is the sorted distinct values.
    Infer,
}

impl YieldDataset {
    pub fn new(
        name: impl Into<String>,
        space: ParameterSpace,
        experiments: Vec<Experiment>,
        yields: Vec<f64>,
    ) -> Result<Self, DomainError> {
        if experiments.len() != yields.len() {
            return Err(DomainError::InvalidDataset(format!(
                "{} experiments but {} yields",
                experiments.len(),
                yields.len()
            )));
        }
        if experiments.is_empty() {
            return Err(DomainError::InvalidDataset("dataset is empty".into()));
        }
        if let Some((i, y)) = yields.iter().enumerate().find(|(_, y)| !(y.is_finite() && **y >= 0.0)) {
            return Err(DomainError::InvalidDataset(format!(
                "row {i}: yield {y} must be finite and >= 0"
            )));
        }
        let mut index = HashMap::with_capacity(experiments.len());
        for (i, x) in experiments.iter().enumerate() {
            // re-validate against the space so foreign experiments cannot sneak in
            space.experiment_from_values(x.values().to_vec())?;
            if let Some(prev) = index.insert(x.clone(), i) {
                return Err(DomainError::DuplicateExperiment { first: prev, second: i });
            }
        }
        Ok(Self {
            name: name.into(),
            space,
            experiments,
            yields,
            index,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn space(&self) -> &ParameterSpace {
        &self.space
    }

    pub fn experiments(&self) -> &[Experiment] {
        &self.experiments
    }

    pub fn yields(&self) -> &[f64] {
        &self.yields
    }

    pub fn len(&self) -> usize {
        self.experiments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.experiments.is_empty()
    }

    pub fn index_of(&self, x: &Experiment) -> Option<usize> {
        self.index.get(x).copied()
    }

    pub fn yield_of(&self, x: &Experiment) -> Option<f64> {
        self.index_of(x).map(|i| self.yields[i])
    }

    pub fn max_yield(&self) -> f64 {
        self.yields.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Index of the best experiment (lowest index among ties).
    pub fn argmax(&self) -> usize {
        let max = self.max_yield();
        self.yields.iter().position(|y| *y == max).expect("non-empty")
    }

    /// True when no two experiments share a yield.
    pub fn is_tie_free(&self) -> bool {
        let mut sorted = self.yields.clone();
        sorted.sort_by(|a, b| a.total_cmp(b));
        sorted.windows(2).all(|w| w[0] != w[1])
    }

    pub fn encode_all(&self) -> Vec<EncodedPoint> {
        self.experiments
            .iter()
            .map(|x| self.space.encode(x).expect("validated at construction"))
            .collect()
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Serializes to CSV: one column per parameter then `yield`.
    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
        let mut header: Vec<&str> = self.space.param_names();
        header.push("yield");
        w.write_record(&header).expect("in-memory write");
        for (x, y) in self.experiments.iter().zip(&self.yields) {
            let mut row: Vec<String> = x.values().iter().map(ToString::to_string).collect();
            row.push(y.to_string());
            w.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }

    /// Git-style content hash of the CSV serialization: SHA-256 of
    /// `"blob <len>\0<content>"`, hex encoded.
    pub fn content_hash(&self) -> String {
        git_blob_hash(self.to_csv().as_bytes())
    }
}

pub fn git_blob_hash(content: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", content.len()).as_bytes());
    h.update(content);
    hex::encode(h.finalize())
}

/// Parses a benchmark CSV with a header row and a `yield` column.
pub fn parse_dataset(
    csv_text: &str,
    source: SpaceSource<'_>,
    name: &str,
) -> Result<YieldDataset, DomainError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(csv_text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| DomainError::Format(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let yield_col = header
        .iter()
        .position(|h| h == "yield")
        .ok_or(DomainError::MissingYieldColumn)?;
    let mut rows: Vec<Vec<String>> = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| DomainError::Format(e.to_string()))?;
        rows.push(rec.iter().map(str::to_string).collect());
    }

    let param_cols: Vec<usize> = (0..header.len()).filter(|c| *c != yield_col).collect();
    let space = match source {
        SpaceSource::Declared(s) => s.clone(),
        SpaceSource::Infer => infer_space(&header, &param_cols, &rows)?,
    };

    let mut experiments = Vec::with_capacity(rows.len());
    let mut yields = Vec::with_capacity(rows.len());
    let n_cat = space.categoricals().len();
    for (r, row) in rows.iter().enumerate() {
        let y: f64 = row[yield_col].parse().map_err(|_| DomainError::NonNumericYield {
            row: r,
            value: row[yield_col].clone(),
        })?;
        let mut assignments = Vec::with_capacity(param_cols.len());
        for &c in &param_cols {
            let name = header[c].as_str();
            let is_cont = space
                .param_names()
                .iter()
                .position(|n| *n == name)
                .map(|p| p >= n_cat)
                .ok_or_else(|| DomainError::UnknownParameter(name.to_string()))?;
            let value = if is_cont {
                ParamValue::Real(row[c].parse().map_err(|_| {
                    DomainError::Format(format!("row {r}: `{name}` value `{}` is not numeric", row[c]))
                })?)
            } else {
                ParamValue::Level(row[c].clone())
            };
            assignments.push((name, value));
        }
        experiments.push(space.experiment(assignments)?);
        yields.push(y);
    }
    YieldDataset::new(name, space, experiments, yields)
}

fn infer_space(
    header: &[String],
    param_cols: &[usize],
    rows: &[Vec<String>],
) -> Result<ParameterSpace, DomainError> {
    let mut cats = Vec::new();
    let mut conts = Vec::new();
    for &c in param_cols {
        let numeric: Option<Vec<f64>> = rows.iter().map(|r| r[c].parse::<f64>().ok()).collect();
        let mut distinct: Vec<f64> = numeric.clone().unwrap_or_default();
        distinct.sort_by(|a, b| a.total_cmp(b));
        distinct.dedup();
        match numeric {
            Some(_) if distinct.len() >= 2 => conts.push(ContinuousParam {
                name: header[c].clone(),
                min: distinct[0],
                max: *distinct.last().expect("len >= 2"),
                unit: String::new(),
                grid: distinct,
            }),
            _ => {
                let mut levels: Vec<String> = Vec::new();
                for r in rows {
                    if !levels.contains(&r[c]) {
                        levels.push(r[c].clone());
                    }
                }
                cats.push(CategoricalParam {
                    name: header[c].clone(),
                    levels,
                });
            }
        }
    }
    ParameterSpace::new(cats, conts)
}
