use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{bone_error, bone_std, mpjpe, pa_mpjpe, per_joint_error, symmetry};
use crate::skeleton::{Pose3D, SkeletonTopology};
use crate::Result;

/// Labelled per-item values and their mean.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedValues {
    pub names: Vec<String>,
    pub values: Vec<f64>,
    pub mean: f64,
}

impl NamedValues {
    fn new(names: Vec<String>, values: Vec<f64>) -> Self {
        let mean = if values.is_empty() {
            0.0
        } else {
            values.iter().sum::<f64>() / values.len() as f64
        };
        NamedValues { names, values, mean }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.values[i])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    /// Subtract the root joint from predictions and ground truth first.
    pub root_relative: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { root_relative: true }
    }
}

/// All metrics of one evaluated set, in millimeters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mpjpe: f64,
    pub pa_mpjpe: f64,
    pub per_joint_error: NamedValues,
    pub bone_error: NamedValues,
    /// `None` for single-sample sets.
    pub bone_std: Option<NamedValues>,
    pub symmetry: NamedValues,
    pub sample_count: usize,
    pub root_relative: bool,
}

pub fn evaluate(
    preds: &[Pose3D],
    gts: &[Pose3D],
    topo: &SkeletonTopology,
    opts: EvalOptions,
) -> Result<EvalReport> {
    let (p, g): (Vec<_>, Vec<_>) = if opts.root_relative {
        for pose in preds.iter().chain(gts) {
            pose.check(topo)?;
        }
        (
            preds.iter().map(|x| x.root_centered(topo)).collect(),
            gts.iter().map(|x| x.root_centered(topo)).collect(),
        )
    } else {
        (preds.to_vec(), gts.to_vec())
    };
    let bone_names: Vec<String> = (0..topo.bones().len()).map(|b| topo.bone_name(b)).collect();
    let bone_std = if p.len() >= 2 {
        Some(NamedValues::new(bone_names.clone(), bone_std(&p, topo)?))
    } else {
        None
    };
    Ok(EvalReport {
        mpjpe: mpjpe(&p, &g)?,
        pa_mpjpe: pa_mpjpe(&p, &g)?,
        per_joint_error: NamedValues::new(topo.joint_names().to_vec(), per_joint_error(&p, &g)?),
        bone_error: NamedValues::new(bone_names, bone_error(&p, &g, topo)?),
        bone_std,
        symmetry: NamedValues::new(
            topo.limb_pairs().iter().map(|l| l.name.clone()).collect(),
            symmetry(&p, topo)?,
        ),
        sample_count: p.len(),
        root_relative: opts.root_relative,
    })
}

const LABEL_WIDTH: usize = 14;

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Header for [`EvalReport::table_row`], limb-pair columns taken from
    /// this report.
    pub fn table_header(&self) -> String {
        let mut s = format!(
            "{:<LABEL_WIDTH$} {:>8} {:>8} {:>8} {:>8}",
            "Scheme", "MPJPE", "PA-MPJPE", "BoneErr", "BoneStd"
        );
        for name in &self.symmetry.names {
            let _ = write!(s, " {:>10}", format!("Sym:{name}"));
        }
        let _ = write!(s, " {:>10}", "Sym:mean");
        s
    }

    pub fn table_row(&self, label: &str) -> String {
        let std = self.bone_std.as_ref().map_or(f64::NAN, |b| b.mean);
        let mut s = format!(
            "{:<LABEL_WIDTH$} {:>8.2} {:>8.2} {:>8.2} {:>8.2}",
            label, self.mpjpe, self.pa_mpjpe, self.bone_error.mean, std
        );
        for v in &self.symmetry.values {
            let _ = write!(s, " {v:>10.2}");
        }
        let _ = write!(s, " {:>10.2}", self.symmetry.mean);
        s
    }

    /// Header plus one row per labelled report.
    pub fn table(rows: &[(String, &EvalReport)]) -> String {
        let Some((_, first)) = rows.first() else {
            return String::new();
        };
        let mut out = first.table_header();
        out.push('\n');
        for (label, r) in rows {
            out.push_str(&r.table_row(label));
            out.push('\n');
        }
        out
    }

    pub fn all_finite_non_negative(&self) -> bool {
        let mut values = vec![self.mpjpe, self.pa_mpjpe, self.bone_error.mean, self.symmetry.mean];
        values.extend(&self.per_joint_error.values);
        values.extend(&self.bone_error.values);
        values.extend(&self.symmetry.values);
        if let Some(b) = &self.bone_std {
            values.extend(&b.values);
        }
        values.iter().all(|v| v.is_finite() && *v >= 0.0)
    }
}
