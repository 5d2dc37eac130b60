//! Shared fixtures for the benchmarks.

use std::f64::consts::PI;

use vipose::model::ModelConfig;
use vipose::skeleton::{generate_synthetic, SyntheticSample};
use vipose::train::{NormStats, TrainingSet};
use vipose::{Pipeline, Scheme, SkeletonTopology, TrainConfig};

pub fn samples(count: usize, seed: u64) -> Vec<SyntheticSample> {
    generate_synthetic(seed, count, PI, 5.0).expect("valid synthetic config")
}

pub fn training_set(count: usize, seed: u64) -> TrainingSet {
    TrainingSet::from_samples(&samples(count, seed), &SkeletonTopology::default_topology()).expect("consistent samples")
}

/// Reduced base width keeps a benchmark iteration in the millisecond range.
pub fn bench_model() -> ModelConfig {
    ModelConfig {
        base_width: 256,
        ..ModelConfig::default()
    }
}

pub fn bench_train_config() -> TrainConfig {
    TrainConfig {
        pretrain_epochs: 0,
        epochs: 1,
        model: bench_model(),
        ..TrainConfig::default()
    }
}

pub fn pipeline(scheme: Scheme, data: &TrainingSet) -> Pipeline {
    let stats = NormStats::fit(&data.inputs, &data.targets).expect("non-empty data");
    Pipeline::new(SkeletonTopology::default_topology(), scheme, bench_model(), stats, 0).expect("valid model")
}
