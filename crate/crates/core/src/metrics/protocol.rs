use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{evaluate, EvalOptions, EvalReport};
use crate::model::Scheme;
use crate::skeleton::{Pose3D, SkeletonTopology};
use crate::train::{EpochRecord, TrainConfig, Trainer, TrainingSet};
use crate::{Error, Result};

/// How a dataset is divided into training and test parts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitSpec {
    /// Cross-view: whole view buckets go to one side.
    Views { train: Vec<usize>, test: Vec<usize> },
    /// Explicit sample ids.
    Ids { train: Vec<u64>, test: Vec<u64> },
}

fn disjoint<T: Eq + std::hash::Hash + Copy + std::fmt::Debug>(a: &[T], b: &[T]) -> Result<()> {
    let left: HashSet<T> = a.iter().copied().collect();
    let shared: Vec<T> = b.iter().copied().filter(|x| left.contains(x)).collect();
    if shared.is_empty() {
        Ok(())
    } else {
        Err(Error::OverlappingSplits(format!("{shared:?} appear on both sides")))
    }
}

/// Splits `data` according to `spec`. Both sides must be non-empty and
/// must not share views or ids.
pub fn split_dataset(data: &TrainingSet, spec: &SplitSpec) -> Result<(TrainingSet, TrainingSet)> {
    let (train_rows, test_rows): (Vec<usize>, Vec<usize>) = match spec {
        SplitSpec::Views { train, test } => {
            disjoint(train, test)?;
            let buckets = data
                .view_buckets
                .as_ref()
                .ok_or_else(|| Error::invalid("view split needs per-sample view buckets"))?;
            let pick = |set: &[usize]| -> Vec<usize> {
                (0..data.len()).filter(|&i| set.contains(&buckets[i])).collect()
            };
            (pick(train), pick(test))
        }
        SplitSpec::Ids { train, test } => {
            disjoint(train, test)?;
            let pick = |set: &[u64]| -> Vec<usize> {
                let set: HashSet<u64> = set.iter().copied().collect();
                (0..data.len()).filter(|&i| set.contains(&data.ids[i])).collect()
            };
            (pick(train), pick(test))
        }
    };
    if train_rows.is_empty() || test_rows.is_empty() {
        return Err(Error::invalid(format!(
            "split leaves {} training and {} test samples",
            train_rows.len(),
            test_rows.len()
        )));
    }
    Ok((data.subset(&train_rows), data.subset(&test_rows)))
}

/// Anything that can be fitted on a training split and queried on a test
/// split.
pub trait ProtocolModel {
    fn fit(&mut self, train: &TrainingSet) -> Result<()>;
    /// Root-centered predictions in millimeters, one per test row.
    fn predict(&self, test: &TrainingSet) -> Result<Vec<Pose3D>>;
}

/// Returns the ground truth. Useful for checking protocol plumbing.
#[derive(Clone, Copy, Debug, Default)]
pub struct OracleModel;

impl ProtocolModel for OracleModel {
    fn fit(&mut self, _train: &TrainingSet) -> Result<()> {
        Ok(())
    }

    fn predict(&self, test: &TrainingSet) -> Result<Vec<Pose3D>> {
        Ok(test.target_poses())
    }
}

/// A pipeline of one scheme trained from scratch by [`ProtocolModel::fit`].
pub struct SchemeModel {
    pub scheme: Scheme,
    pub topology: SkeletonTopology,
    pub config: TrainConfig,
    pub trainer: Option<Trainer>,
}

impl SchemeModel {
    pub fn new(scheme: Scheme, topology: SkeletonTopology, config: TrainConfig) -> Self {
        SchemeModel {
            scheme,
            topology,
            config,
            trainer: None,
        }
    }
}

fn trainer_predict(t: &Trainer, data: &TrainingSet) -> Result<Vec<Pose3D>> {
    let x = t.pipeline.stats().normalize_2d(&data.inputs)?;
    let out = t.pipeline.infer(&x)?;
    out.final_pose
        .rows()
        .into_iter()
        .map(|r| Pose3D::from_flat(r.as_slice().expect("standard layout")))
        .collect()
}

impl ProtocolModel for SchemeModel {
    fn fit(&mut self, train: &TrainingSet) -> Result<()> {
        let mut t = Trainer::from_data(train, self.topology.clone(), self.scheme, self.config.clone())?;
        t.fit(train, None, &mut |_| {})?;
        self.trainer = Some(t);
        Ok(())
    }

    fn predict(&self, test: &TrainingSet) -> Result<Vec<Pose3D>> {
        let t = self.trainer.as_ref().ok_or(Error::MissingForward)?;
        trainer_predict(t, test)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolReport {
    pub train_count: usize,
    pub test_count: usize,
    pub report: EvalReport,
}

/// Splits, fits on the training side and evaluates root-relative on the
/// test side.
pub fn run_protocol(
    data: &TrainingSet,
    spec: &SplitSpec,
    model: &mut dyn ProtocolModel,
    topo: &SkeletonTopology,
) -> Result<ProtocolReport> {
    let (train, test) = split_dataset(data, spec)?;
    model.fit(&train)?;
    let preds = model.predict(&test)?;
    if preds.len() != test.len() {
        return Err(Error::shape(format!("{} predictions for {} test samples", preds.len(), test.len())));
    }
    Ok(ProtocolReport {
        train_count: train.len(),
        test_count: test.len(),
        report: evaluate(&preds, &test.target_poses(), topo, EvalOptions::default())?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub scheme: Scheme,
    pub report: EvalReport,
    pub final_train_l2_mm2: f64,
}

/// Trains every scheme in `schemes` on `train` and evaluates on `test`.
///
/// The base network is pretrained once and every scheme starts its joint
/// phase from a copy of it, so rows differ only in the refinement stages.
pub fn run_ablation(
    train: &TrainingSet,
    test: &TrainingSet,
    topo: &SkeletonTopology,
    config: &TrainConfig,
    schemes: &[Scheme],
    log: &mut dyn FnMut(Scheme, &EpochRecord),
) -> Result<Vec<AblationRow>> {
    let mut pre = Trainer::from_data(train, topo.clone(), Scheme::Baseline, config.clone())?;
    let mut pretrain_log = |r: &EpochRecord| log(Scheme::Baseline, r);
    let pre_cfg = TrainConfig {
        epochs: 0,
        ..config.clone()
    };
    pre.config = pre_cfg;
    pre.fit(train, None, &mut pretrain_log)?;
    let base = pre.pipeline.nets.base.clone();

    let joint_cfg = TrainConfig {
        pretrain_epochs: 0,
        ..config.clone()
    };
    let gts = test.target_poses();
    schemes
        .iter()
        .map(|&scheme| {
            let mut t = Trainer::from_data(train, topo.clone(), scheme, joint_cfg.clone())?;
            t.pipeline.nets.base = base.clone();
            let records = t.fit(train, None, &mut |r| log(scheme, r))?;
            let preds = trainer_predict(&t, test)?;
            Ok(AblationRow {
                scheme,
                report: evaluate(&preds, &gts, topo, EvalOptions::default())?,
                final_train_l2_mm2: records.last().map_or(f64::NAN, |r| r.l2_mm2),
            })
        })
        .collect()
}
