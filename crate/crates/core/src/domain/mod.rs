//! Reaction parameter spaces, candidate experiments and yield datasets.

mod dataset;
mod space;
mod synthetic;

pub use dataset::{git_blob_hash, parse_dataset, SpaceSource, YieldDataset};
pub use space::{
    enumerate_space, CategoricalParam, ContinuousParam, EncodedPoint, Experiment, ParamValue,
    ParameterSpace,
};
pub use synthetic::{
    dataset_from_effects, gen_synthetic_dataset, reaction_space, EffectSpec, Interaction,
    SyntheticDataset, SyntheticEffects,
};

#[derive(Debug, thiserror::Error)]
pub enum DomainError {
    #[error("invalid parameter space: {0}")]
    InvalidSpace(String),
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("`{level}` is not a level of `{param}`")]
    UnknownLevel { param: String, level: String },
    #[error("value {value} of `{param}` is outside its range")]
    OutOfRange { param: String, value: f64 },
    #[error("continuous parameter `{0}` has no grid")]
    EmptyGrid(String),
    #[error("invalid experiment: {0}")]
    InvalidExperiment(String),
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("dataset has no `yield` column")]
    MissingYieldColumn,
    #[error("row {row}: yield `{value}` is not numeric")]
    NonNumericYield { row: usize, value: String },
    #[error("rows {first} and {second} describe the same experiment")]
    DuplicateExperiment { first: usize, second: usize },
    #[error("malformed input: {0}")]
    Format(String),
}
