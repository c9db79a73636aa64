//! Parameter spaces, experiments and their one-hot encoding.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::DomainError;

/// A categorical reaction parameter (ligand, base, solvent, ...).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalParam {
    pub name: String,
    pub levels: Vec<String>,
}

/// A bounded real-valued parameter. `grid` lists the values present in an
/// enumerated benchmark; it may be empty when a grid is supplied separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousParam {
    pub name: String,
    pub min: f64,
    pub max: f64,
    #[serde(default)]
    pub unit: String,
    #[serde(default)]
    pub grid: Vec<f64>,
}

/// Declared set of categorical and continuous parameters.
///
/// Parameters are ordered: all categoricals in declaration order, then all
/// continuous parameters. That order fixes both the layout of [`Experiment`]
/// values and the block order of [`EncodedPoint`] vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSpace {
    categoricals: Vec<CategoricalParam>,
    continuous: Vec<ContinuousParam>,
}

/// Value assigned to one parameter.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamValue {
    Level(String),
    Real(f64),
}

impl ParamValue {
    pub fn as_level(&self) -> Option<&str> {
        match self {
            ParamValue::Level(s) => Some(s),
            ParamValue::Real(_) => None,
        }
    }

    pub fn as_real(&self) -> Option<f64> {
        match self {
            ParamValue::Real(v) => Some(*v),
            ParamValue::Level(_) => None,
        }
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Level(s) => f.write_str(s),
            ParamValue::Real(v) => write!(f, "{v}"),
        }
    }
}

impl From<&str> for ParamValue {
    fn from(s: &str) -> Self {
        ParamValue::Level(s.to_string())
    }
}

impl From<f64> for ParamValue {
    fn from(v: f64) -> Self {
        ParamValue::Real(v)
    }
}

/// One candidate experiment: a value for every parameter of its space, stored
/// in the space's parameter order.
#[derive(Debug, Clone)]
pub struct Experiment {
    values: Vec<ParamValue>,
}

impl Experiment {
    pub fn values(&self) -> &[ParamValue] {
        &self.values
    }
}

// Reals compare by bit pattern (with -0.0 folded into 0.0) so experiments can
// key hash maps.
fn real_bits(v: f64) -> u64 {
    if v == 0.0 {
        0
    } else {
        v.to_bits()
    }
}

impl PartialEq for Experiment {
    fn eq(&self, other: &Self) -> bool {
        self.values.len() == other.values.len()
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| match (a, b) {
                    (ParamValue::Level(x), ParamValue::Level(y)) => x == y,
                    (ParamValue::Real(x), ParamValue::Real(y)) => real_bits(*x) == real_bits(*y),
                    _ => false,
                })
    }
}

impl Eq for Experiment {}

impl Hash for Experiment {
    fn hash<H: Hasher>(&self, state: &mut H) {
        for v in &self.values {
            match v {
                ParamValue::Level(s) => {
                    0u8.hash(state);
                    s.hash(state);
                }
                ParamValue::Real(x) => {
                    1u8.hash(state);
                    real_bits(*x).hash(state);
                }
            }
        }
    }
}

/// Encoded experiment: concatenated one-hot blocks followed by min-max scaled
/// continuous values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EncodedPoint(pub Vec<f64>);

impl EncodedPoint {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

impl ParameterSpace {
    pub fn new(
        categoricals: Vec<CategoricalParam>,
        continuous: Vec<ContinuousParam>,
    ) -> Result<Self, DomainError> {
        let mut names = HashSet::new();
        for c in &categoricals {
            if c.levels.is_empty() {
                return Err(DomainError::InvalidSpace(format!(
                    "categorical `{}` has no levels",
                    c.name
                )));
            }
            let mut seen = HashSet::new();
            for l in &c.levels {
                if !seen.insert(l.as_str()) {
                    return Err(DomainError::InvalidSpace(format!(
                        "categorical `{}` repeats level `{l}`",
                        c.name
                    )));
                }
            }
            if !names.insert(c.name.as_str()) {
                return Err(DomainError::InvalidSpace(format!(
                    "duplicate parameter name `{}`",
                    c.name
                )));
            }
        }
        for c in &continuous {
            if !(c.min.is_finite() && c.max.is_finite() && c.min < c.max) {
                return Err(DomainError::InvalidSpace(format!(
                    "continuous `{}` needs finite min < max (got {} .. {})",
                    c.name, c.min, c.max
                )));
            }
            if let Some(v) = c.grid.iter().find(|v| !(c.min..=c.max).contains(*v)) {
                return Err(DomainError::OutOfRange {
                    param: c.name.clone(),
                    value: *v,
                });
            }
            if !names.insert(c.name.as_str()) {
                return Err(DomainError::InvalidSpace(format!(
                    "duplicate parameter name `{}`",
                    c.name
                )));
            }
        }
        if names.is_empty() {
            return Err(DomainError::InvalidSpace("space has no parameters".into()));
        }
        Ok(Self {
            categoricals,
            continuous,
        })
    }

    /// Shorthand for an all-categorical space.
    pub fn categorical<S: AsRef<str>>(params: &[(&str, &[S])]) -> Result<Self, DomainError> {
        let cats = params
            .iter()
            .map(|(name, levels)| CategoricalParam {
                name: name.to_string(),
                levels: levels.iter().map(|l| l.as_ref().to_string()).collect(),
            })
            .collect();
        Self::new(cats, Vec::new())
    }

    pub fn categoricals(&self) -> &[CategoricalParam] {
        &self.categoricals
    }

    pub fn continuous(&self) -> &[ContinuousParam] {
        &self.continuous
    }

    pub fn n_params(&self) -> usize {
        self.categoricals.len() + self.continuous.len()
    }

    /// Parameter names in canonical order.
    pub fn param_names(&self) -> Vec<&str> {
        self.categoricals
            .iter()
            .map(|c| c.name.as_str())
            .chain(self.continuous.iter().map(|c| c.name.as_str()))
            .collect()
    }

    /// Length of an encoded vector: Σ|levels| + #continuous.
    pub fn encoded_dim(&self) -> usize {
        self.categoricals.iter().map(|c| c.levels.len()).sum::<usize>() + self.continuous.len()
    }

    fn position(&self, name: &str) -> Option<usize> {
        self.param_names().iter().position(|n| *n == name)
    }

    /// Builds a validated experiment from `(name, value)` assignments given in
    /// any order.
    pub fn experiment<'a, I, V>(&self, assignments: I) -> Result<Experiment, DomainError>
    where
        I: IntoIterator<Item = (&'a str, V)>,
        V: Into<ParamValue>,
    {
        let mut slots: Vec<Option<ParamValue>> = vec![None; self.n_params()];
        for (name, value) in assignments {
            let pos = self
                .position(name)
                .ok_or_else(|| DomainError::UnknownParameter(name.to_string()))?;
            if slots[pos].is_some() {
                return Err(DomainError::InvalidExperiment(format!(
                    "parameter `{name}` assigned twice"
                )));
            }
            slots[pos] = Some(value.into());
        }
        let names = self.param_names();
        let values = slots
            .into_iter()
            .enumerate()
            .map(|(i, v)| {
                v.ok_or_else(|| DomainError::InvalidExperiment(format!("missing `{}`", names[i])))
            })
            .collect::<Result<Vec<_>, _>>()?;
        self.experiment_from_values(values)
    }

    /// Builds an experiment from values already in canonical order.
    pub fn experiment_from_values(&self, values: Vec<ParamValue>) -> Result<Experiment, DomainError> {
        if values.len() != self.n_params() {
            return Err(DomainError::InvalidExperiment(format!(
                "expected {} values, got {}",
                self.n_params(),
                values.len()
            )));
        }
        let n_cat = self.categoricals.len();
        for (i, v) in values.iter().enumerate() {
            if i < n_cat {
                let param = &self.categoricals[i];
                match v {
                    ParamValue::Level(l) if param.levels.contains(l) => {}
                    ParamValue::Level(l) => {
                        return Err(DomainError::UnknownLevel {
                            param: param.name.clone(),
                            level: l.clone(),
                        })
                    }
                    ParamValue::Real(x) => {
                        return Err(DomainError::UnknownLevel {
                            param: param.name.clone(),
                            level: x.to_string(),
                        })
                    }
                }
            } else {
                let param = &self.continuous[i - n_cat];
                match v {
                    ParamValue::Real(x) if x.is_finite() && (param.min..=param.max).contains(x) => {}
                    ParamValue::Real(x) => {
                        return Err(DomainError::OutOfRange {
                            param: param.name.clone(),
                            value: *x,
                        })
                    }
                    ParamValue::Level(l) => {
                        return Err(DomainError::InvalidExperiment(format!(
                            "continuous `{}` given non-numeric value `{l}`",
                            param.name
                        )))
                    }
                }
            }
        }
        Ok(Experiment { values })
    }

    pub fn value<'e>(&self, x: &'e Experiment, name: &str) -> Option<&'e ParamValue> {
        self.position(name).and_then(|p| x.values.get(p))
    }

    /// Index of each categorical value within its level list.
    pub fn level_indices(&self, x: &Experiment) -> Result<Vec<usize>, DomainError> {
        self.categoricals
            .iter()
            .zip(&x.values)
            .map(|(param, v)| {
                let level = v.as_level().unwrap_or_default();
                param
                    .levels
                    .iter()
                    .position(|l| l == level)
                    .ok_or_else(|| DomainError::UnknownLevel {
                        param: param.name.clone(),
                        level: v.to_string(),
                    })
            })
            .collect()
    }

    /// Continuous values scaled to `[0, 1]`.
    pub fn scaled_continuous(&self, x: &Experiment) -> Result<Vec<f64>, DomainError> {
        let n_cat = self.categoricals.len();
        self.continuous
            .iter()
            .enumerate()
            .map(|(j, param)| {
                let v = x
                    .values
                    .get(n_cat + j)
                    .and_then(ParamValue::as_real)
                    .ok_or_else(|| {
                        DomainError::InvalidExperiment(format!("`{}` is not numeric", param.name))
                    })?;
                if !(param.min..=param.max).contains(&v) {
                    return Err(DomainError::OutOfRange {
                        param: param.name.clone(),
                        value: v,
                    });
                }
                Ok((v - param.min) / (param.max - param.min))
            })
            .collect()
    }

    pub fn encode(&self, x: &Experiment) -> Result<EncodedPoint, DomainError> {
        if x.values.len() != self.n_params() {
            return Err(DomainError::InvalidExperiment(
                "experiment does not belong to this space".into(),
            ));
        }
        let mut out = Vec::with_capacity(self.encoded_dim());
        for (param, idx) in self.categoricals.iter().zip(self.level_indices(x)?) {
            out.extend((0..param.levels.len()).map(|k| if k == idx { 1.0 } else { 0.0 }));
        }
        out.extend(self.scaled_continuous(x)?);
        Ok(EncodedPoint(out))
    }

    /// Inverts [`ParameterSpace::encode`]. One-hot blocks must hold exactly one 1.0.
    pub fn decode(&self, p: &EncodedPoint) -> Result<Experiment, DomainError> {
        if p.dim() != self.encoded_dim() {
            return Err(DomainError::InvalidExperiment(format!(
                "encoded dimension {} != {}",
                p.dim(),
                self.encoded_dim()
            )));
        }
        let mut values = Vec::with_capacity(self.n_params());
        let mut offset = 0;
        for param in &self.categoricals {
            let block = &p.0[offset..offset + param.levels.len()];
            let ones: Vec<usize> = block
                .iter()
                .enumerate()
                .filter(|(_, v)| **v == 1.0)
                .map(|(i, _)| i)
                .collect();
            let zeros = block.iter().filter(|v| **v == 0.0).count();
            if ones.len() != 1 || zeros + 1 != block.len() {
                return Err(DomainError::InvalidExperiment(format!(
                    "malformed one-hot block for `{}`",
                    param.name
                )));
            }
            values.push(ParamValue::Level(param.levels[ones[0]].clone()));
            offset += param.levels.len();
        }
        for (j, param) in self.continuous.iter().enumerate() {
            let s = p.0[offset + j];
            values.push(ParamValue::Real(param.min + s * (param.max - param.min)));
        }
        self.experiment_from_values(values)
    }

    /// Full factorial over the declared continuous grids.
    pub fn enumerate(&self) -> Result<Vec<Experiment>, DomainError> {
        let grids = self
            .continuous
            .iter()
            .map(|c| (c.name.clone(), c.grid.clone()))
            .collect();
        enumerate_space(self, &grids)
    }

    /// Experiment as a JSON object `{param: value}` in canonical order.
    pub fn experiment_to_json(&self, x: &Experiment) -> Value {
        let mut map = Map::new();
        for (name, v) in self.param_names().into_iter().zip(&x.values) {
            let json = match v {
                ParamValue::Level(s) => Value::String(s.clone()),
                ParamValue::Real(r) => serde_json::Number::from_f64(*r)
                    .map(Value::Number)
                    .unwrap_or(Value::Null),
            };
            map.insert(name.to_string(), json);
        }
        Value::Object(map)
    }

    pub fn experiment_from_json(&self, value: &Value) -> Result<Experiment, DomainError> {
        let obj = value
            .as_object()
            .ok_or_else(|| DomainError::InvalidExperiment("expected a JSON object".into()))?;
        let n_cat = self.categoricals.len();
        let mut assignments = Vec::with_capacity(obj.len());
        for (name, v) in obj {
            let pos = self
                .position(name)
                .ok_or_else(|| DomainError::UnknownParameter(name.clone()))?;
            let pv = if pos < n_cat {
                match v {
                    Value::String(s) => ParamValue::Level(s.clone()),
                    other => ParamValue::Level(other.to_string()),
                }
            } else {
                ParamValue::Real(v.as_f64().ok_or_else(|| {
                    DomainError::InvalidExperiment(format!("`{name}` must be numeric"))
                })?)
            };
            assignments.push((name.as_str(), pv));
        }
        self.experiment(assignments)
    }

    /// Human-readable bullet list used in oracle prompts.
    pub fn describe(&self, x: &Experiment) -> String {
        let n_cat = self.categoricals.len();
        let mut lines = Vec::with_capacity(self.n_params());
        for (i, (name, v)) in self.param_names().into_iter().zip(&x.values).enumerate() {
            let unit = if i >= n_cat {
                let u = &self.continuous[i - n_cat].unit;
                if u.is_empty() {
                    String::new()
                } else {
                    format!(" {u}")
                }
            } else {
                String::new()
            };
            lines.push(format!("- {name}: {v}{unit}"));
        }
        lines.join("\n")
    }
}

/// Full factorial product of categorical levels and continuous grids,
/// lexicographic in declaration order (last parameter varies fastest).
pub fn enumerate_space(
    space: &ParameterSpace,
    grids: &BTreeMap<String, Vec<f64>>,
) -> Result<Vec<Experiment>, DomainError> {
    let mut axes: Vec<Vec<ParamValue>> = space
        .categoricals
        .iter()
        .map(|c| c.levels.iter().cloned().map(ParamValue::Level).collect())
        .collect();
    for c in &space.continuous {
        let grid = grids
            .get(&c.name)
            .filter(|g| !g.is_empty())
            .ok_or_else(|| DomainError::EmptyGrid(c.name.clone()))?;
        if let Some(v) = grid.iter().find(|v| !(c.min..=c.max).contains(*v)) {
            return Err(DomainError::OutOfRange {
                param: c.name.clone(),
                value: *v,
            });
        }
        axes.push(grid.iter().copied().map(ParamValue::Real).collect());
    }
    let total: usize = axes.iter().map(Vec::len).product();
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; axes.len()];
    for _ in 0..total {
        let values = idx.iter().zip(&axes).map(|(i, a)| a[*i].clone()).collect();
        out.push(Experiment { values });
        for k in (0..axes.len()).rev() {
            idx[k] += 1;
            if idx[k] < axes[k].len() {
                break;
            }
            idx[k] = 0;
        }
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct ContinuousDecl {
    min: f64,
    max: f64,
    #[serde(default)]
    unit: String,
    #[serde(default)]
    grid: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct SpaceDecl {
    #[serde(default)]
    categoricals: serde_json::Map<String, Value>,
    #[serde(default)]
    continuous: serde_json::Map<String, Value>,
}

impl ParameterSpace {
    /// Parses a space declaration:
    /// `{"categoricals": {name: [levels]}, "continuous": {name: {min, max, unit, grid}}}`.
    pub fn from_json(text: &str) -> Result<Self, DomainError> {
        let decl: SpaceDecl =
            serde_json::from_str(text).map_err(|e| DomainError::Format(e.to_string()))?;
        let mut cats = Vec::new();
        for (name, levels) in decl.categoricals {
            let levels: Vec<String> = serde_json::from_value(levels)
                .map_err(|e| DomainError::Format(format!("levels of `{name}`: {e}")))?;
            cats.push(CategoricalParam { name, levels });
        }
        let mut conts = Vec::new();
        for (name, body) in decl.continuous {
            let d: ContinuousDecl = serde_json::from_value(body)
                .map_err(|e| DomainError::Format(format!("continuous `{name}`: {e}")))?;
            conts.push(ContinuousParam {
                name,
                min: d.min,
                max: d.max,
                unit: d.unit,
                grid: d.grid,
            });
        }
        Self::new(cats, conts)
    }

    pub fn to_json(&self) -> String {
        let mut cats = Map::new();
        for c in &self.categoricals {
            cats.insert(c.name.clone(), serde_json::json!(c.levels));
        }
        let mut conts = Map::new();
        for c in &self.continuous {
            let d = ContinuousDecl {
                min: c.min,
                max: c.max,
                unit: c.unit.clone(),
                grid: c.grid.clone(),
            };
            conts.insert(c.name.clone(), serde_json::to_value(d).expect("plain struct"));
        }
        let decl = serde_json::json!({ "categoricals": cats, "continuous": conts });
        serde_json::to_string_pretty(&decl).expect("plain json")
    }
}
