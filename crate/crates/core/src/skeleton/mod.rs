//! Skeleton topology, pose containers, pose files and synthetic data.

mod io;
mod pose;
mod synth;

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

pub use io::{
    read_poses, read_poses_2d, read_poses_3d, read_scenes, write_poses_2d, write_poses_3d,
    write_poses_3d_json, write_scenes, PoseRecords, SceneRecord,
};
pub use pose::{Pose2D, Pose3D};
pub use synth::{
    generate_camera_rig, generate_synthetic, generate_synthetic_with, project_orthographic,
    view_bucket, SynthConfig, SyntheticSample, SyntheticScene, VIEW_BUCKETS,
};

/// A body part that receives its own local canonical frame.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PartSpec {
    pub name: String,
    pub joints: Vec<usize>,
    /// Three joints spanning the part plane; the normal is
    /// `(p1 - p0) x (p2 - p0)`.
    pub plane_triple: [usize; 3],
    /// The local `+Z` axis runs from `axis_pair[0]` to `axis_pair[1]`.
    pub axis_pair: [usize; 2],
    pub origin_joint: usize,
}

/// Left/right bone pair compared by the symmetry metric.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LimbPair {
    pub name: String,
    /// Bone indices into [`SkeletonTopology::bones`].
    pub left: usize,
    pub right: usize,
}

/// Joint layout and every derived geometric rule (bones, planes, parts).
///
/// Built either from [`SkeletonTopology::default_topology`] or from a TOML
/// document (see [`TopologyConfig`]). Construction validates the tree
/// property and all index references, so a value of this type is always
/// internally consistent.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SkeletonTopology {
    joint_names: Vec<String>,
    parent: Vec<Option<usize>>,
    bones: Vec<(usize, usize)>,
    limb_pairs: Vec<LimbPair>,
    plane_joints: [usize; 3],
    root_pair: [usize; 2],
    parts: Vec<PartSpec>,
}

/// Name-based, serializable form of a topology.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopologyConfig {
    pub joints: Vec<String>,
    /// `[child, parent]` pairs. Every joint except the single tree root has
    /// exactly one entry.
    pub bones: Vec<[String; 2]>,
    /// `(left_hip, right_hip, chest)`.
    pub plane_joints: [String; 3],
    #[serde(default)]
    pub limb_pairs: Vec<LimbPairConfig>,
    #[serde(default)]
    pub parts: Vec<PartConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimbPairConfig {
    pub name: String,
    pub left: [String; 2],
    pub right: [String; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartConfig {
    pub name: String,
    pub joints: Vec<String>,
    pub plane_triple: [String; 3],
    pub axis_pair: [String; 2],
    pub origin_joint: String,
}

const DEFAULT_JOINTS: [&str; 17] = [
    "root",
    "right_hip",
    "right_knee",
    "right_ankle",
    "left_hip",
    "left_knee",
    "left_ankle",
    "chest",
    "thorax",
    "jaw",
    "head",
    "left_shoulder",
    "left_elbow",
    "left_wrist",
    "right_shoulder",
    "right_elbow",
    "right_wrist",
];

const DEFAULT_BONES: [(&str, &str); 16] = [
    ("right_hip", "root"),
    ("right_knee", "right_hip"),
    ("right_ankle", "right_knee"),
    ("left_hip", "root"),
    ("left_knee", "left_hip"),
    ("left_ankle", "left_knee"),
    ("chest", "root"),
    ("thorax", "chest"),
    ("jaw", "thorax"),
    ("head", "jaw"),
    ("left_shoulder", "thorax"),
    ("left_elbow", "left_shoulder"),
    ("left_wrist", "left_elbow"),
    ("right_shoulder", "thorax"),
    ("right_elbow", "right_shoulder"),
    ("right_wrist", "right_elbow"),
];

fn s(v: &str) -> String {
    v.to_string()
}

impl TopologyConfig {
    /// The 17-joint layout in Human3.6M order. Joint 0 (`root`) is the pelvis,
    /// which coincides with the hip midpoint in synthetic data; `chest` is the
    /// spine joint and `thorax` the neck base where the shoulders attach.
    pub fn default_config() -> Self {
        let limb = |name: &str, l: [&str; 2], r: [&str; 2]| LimbPairConfig {
            name: s(name),
            left: [s(l[0]), s(l[1])],
            right: [s(r[0]), s(r[1])],
        };
        let chain = |side: &str, a: &str, b: &str, c: &str| {
            let (a, b, c) = (
                format!("{side}_{a}"),
                format!("{side}_{b}"),
                format!("{side}_{c}"),
            );
            PartConfig {
                name: String::new(),
                joints: vec![a.clone(), b.clone(), c.clone()],
                plane_triple: [a.clone(), b.clone(), c],
                axis_pair: [a.clone(), b],
                origin_joint: a,
            }
        };
        let named = |name: &str, mut p: PartConfig| {
            p.name = s(name);
            p
        };
        TopologyConfig {
            joints: DEFAULT_JOINTS.iter().map(|j| s(j)).collect(),
            bones: DEFAULT_BONES.iter().map(|(c, p)| [s(c), s(p)]).collect(),
            plane_joints: [s("left_hip"), s("right_hip"), s("chest")],
            limb_pairs: vec![
                limb(
                    "upper_arm",
                    ["left_elbow", "left_shoulder"],
                    ["right_elbow", "right_shoulder"],
                ),
                limb(
                    "lower_arm",
                    ["left_wrist", "left_elbow"],
                    ["right_wrist", "right_elbow"],
                ),
                limb(
                    "upper_leg",
                    ["left_knee", "left_hip"],
                    ["right_knee", "right_hip"],
                ),
                limb(
                    "lower_leg",
                    ["left_ankle", "left_knee"],
                    ["right_ankle", "right_knee"],
                ),
            ],
            parts: vec![
                named("left_arm", chain("left", "shoulder", "elbow", "wrist")),
                named("right_arm", chain("right", "shoulder", "elbow", "wrist")),
                named("left_leg", chain("left", "hip", "knee", "ankle")),
                named("right_leg", chain("right", "hip", "knee", "ankle")),
                PartConfig {
                    name: s("head_chain"),
                    joints: vec![s("chest"), s("thorax"), s("jaw"), s("head")],
                    plane_triple: [s("chest"), s("thorax"), s("jaw")],
                    axis_pair: [s("chest"), s("thorax")],
                    origin_joint: s("chest"),
                },
            ],
        }
    }
}

impl SkeletonTopology {
    /// The 17-joint default layout with five parts and the
    /// `(left_hip, right_hip, chest)` torso plane.
    pub fn default_topology() -> Self {
        Self::from_config(&TopologyConfig::default_config())
            .expect("default topology is valid")
    }

    pub fn from_config(cfg: &TopologyConfig) -> Result<Self> {
        let j = cfg.joints.len();
        if j == 0 {
            return Err(Error::Topology("no joints declared".into()));
        }
        let mut index = HashMap::with_capacity(j);
        for (i, name) in cfg.joints.iter().enumerate() {
            if index.insert(name.as_str(), i).is_some() {
                return Err(Error::Topology(format!("duplicate joint `{name}`")));
            }
        }
        let lookup = |name: &str| {
            index
                .get(name)
                .copied()
                .ok_or_else(|| Error::Topology(format!("unknown joint `{name}`")))
        };

        let mut parent = vec![None; j];
        let mut bones = Vec::with_capacity(cfg.bones.len());
        for [child, par] in &cfg.bones {
            let (c, p) = (lookup(child)?, lookup(par)?);
            if c == p {
                return Err(Error::Topology(format!("joint `{child}` is its own parent")));
            }
            if parent[c].replace(p).is_some() {
                return Err(Error::Topology(format!("joint `{child}` has two parents")));
            }
            bones.push((c, p));
        }

        let find_bone = |pair: &[String; 2]| -> Result<usize> {
            let (c, p) = (lookup(&pair[0])?, lookup(&pair[1])?);
            bones
                .iter()
                .position(|&b| b == (c, p))
                .ok_or_else(|| {
                    Error::Topology(format!("limb pair bone {}-{} is not a bone", pair[0], pair[1]))
                })
        };
        let limb_pairs = cfg
            .limb_pairs
            .iter()
            .map(|lp| {
                Ok(LimbPair {
                    name: lp.name.clone(),
                    left: find_bone(&lp.left)?,
                    right: find_bone(&lp.right)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let plane_joints = [
            lookup(&cfg.plane_joints[0])?,
            lookup(&cfg.plane_joints[1])?,
            lookup(&cfg.plane_joints[2])?,
        ];
        let parts = cfg
            .parts
            .iter()
            .map(|p| {
                Ok(PartSpec {
                    name: p.name.clone(),
                    joints: p.joints.iter().map(|n| lookup(n)).collect::<Result<_>>()?,
                    plane_triple: [
                        lookup(&p.plane_triple[0])?,
                        lookup(&p.plane_triple[1])?,
                        lookup(&p.plane_triple[2])?,
                    ],
                    axis_pair: [lookup(&p.axis_pair[0])?, lookup(&p.axis_pair[1])?],
                    origin_joint: lookup(&p.origin_joint)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let topo = SkeletonTopology {
            joint_names: cfg.joints.clone(),
            parent,
            bones,
            limb_pairs,
            root_pair: [plane_joints[0], plane_joints[1]],
            plane_joints,
            parts,
        };
        topo.validate()?;
        Ok(topo)
    }

    fn validate(&self) -> Result<()> {
        let j = self.joint_count();
        let roots: Vec<_> = (0..j).filter(|&i| self.parent[i].is_none()).collect();
        if roots.len() != 1 {
            return Err(Error::Topology(format!(
                "expected exactly one parentless joint, found {}",
                roots.len()
            )));
        }
        // Walking up from every joint must reach the root within J steps.
        for start in 0..j {
            let mut cur = start;
            let mut steps = 0;
            while let Some(p) = self.parent[cur] {
                cur = p;
                steps += 1;
                if steps > j {
                    return Err(Error::Topology(format!(
                        "cycle through joint `{}`",
                        self.joint_names[start]
                    )));
                }
            }
        }
        let [a, b, c] = self.plane_joints;
        if a == b || b == c || a == c {
            return Err(Error::Topology("plane joints must be distinct".into()));
        }
        let mut covered = vec![false; j];
        for part in &self.parts {
            for &pj in part.plane_triple.iter().chain(&part.axis_pair).chain([&part.origin_joint]) {
                if !part.joints.contains(&pj) {
                    return Err(Error::Topology(format!(
                        "part `{}` references joint `{}` outside its joint list",
                        part.name, self.joint_names[pj]
                    )));
                }
            }
            if part.axis_pair[0] == part.axis_pair[1] {
                return Err(Error::Topology(format!(
                    "part `{}` axis joints must be distinct",
                    part.name
                )));
            }
            for &pj in &part.joints {
                if std::mem::replace(&mut covered[pj], true) {
                    return Err(Error::Topology(format!(
                        "joint `{}` belongs to more than one part",
                        self.joint_names[pj]
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: TopologyConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_config(&cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_config(&self) -> TopologyConfig {
        let n = |i: usize| self.joint_names[i].clone();
        let bone = |b: usize| [n(self.bones[b].0), n(self.bones[b].1)];
        TopologyConfig {
            joints: self.joint_names.clone(),
            bones: self.bones.iter().map(|&(c, p)| [n(c), n(p)]).collect(),
            plane_joints: self.plane_joints.map(n),
            limb_pairs: self
                .limb_pairs
                .iter()
                .map(|lp| LimbPairConfig {
                    name: lp.name.clone(),
                    left: bone(lp.left),
                    right: bone(lp.right),
                })
                .collect(),
            parts: self
                .parts
                .iter()
                .map(|p| PartConfig {
                    name: p.name.clone(),
                    joints: p.joints.iter().map(|&j| n(j)).collect(),
                    plane_triple: p.plane_triple.map(n),
                    axis_pair: p.axis_pair.map(n),
                    origin_joint: n(p.origin_joint),
                })
                .collect(),
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(&self.to_config()).expect("topology config serializes")
    }

    /// Stable content hash (hex, 16 chars) used to tie checkpoints and pose
    /// files to the layout they were made with.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(&self.to_config()).expect("serializable");
        let digest = Sha256::digest(json.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn joint_count(&self) -> usize {
        self.joint_names.len()
    }

    pub fn joint_names(&self) -> &[String] {
        &self.joint_names
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.joint_names.iter().position(|n| n == name)
    }

    pub fn parent(&self, joint: usize) -> Option<usize> {
        self.parent[joint]
    }

    /// `(child, parent)` pairs.
    pub fn bones(&self) -> &[(usize, usize)] {
        &self.bones
    }

    pub fn bone_name(&self, bone: usize) -> String {
        let (c, p) = self.bones[bone];
        format!("{}->{}", self.joint_names[c], self.joint_names[p])
    }

    pub fn limb_pairs(&self) -> &[LimbPair] {
        &self.limb_pairs
    }

    /// `(left_hip, right_hip, chest)`.
    pub fn plane_joints(&self) -> [usize; 3] {
        self.plane_joints
    }

    /// `(left_hip, right_hip)`; the body root is their midpoint.
    pub fn root_pair(&self) -> [usize; 2] {
        self.root_pair
    }

    pub fn parts(&self) -> &[PartSpec] {
        &self.parts
    }

    pub fn part(&self, name: &str) -> Option<&PartSpec> {
        self.parts.iter().find(|p| p.name == name)
    }

    /// Joints that belong to no part.
    pub fn unassigned_joints(&self) -> Vec<usize> {
        (0..self.joint_count())
            .filter(|j| !self.parts.iter().any(|p| p.joints.contains(j)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_counts() {
        let t = SkeletonTopology::default_topology();
        assert_eq!(t.joint_count(), 17);
        assert_eq!(t.bones().len(), 16);
        assert_eq!(t.parts().len(), 5);
        assert_eq!(t.limb_pairs().len(), 4);
    }

    #[test]
    fn default_is_a_single_tree() {
        let t = SkeletonTopology::default_topology();
        let root = t.joint_index("root").unwrap();
        // Every joint reaches the root and the edge count is J - 1.
        for j in 0..t.joint_count() {
            let mut cur = j;
            let mut depth = 0;
            while let Some(p) = t.parent(cur) {
                cur = p;
                depth += 1;
                assert!(depth < t.joint_count());
            }
            assert_eq!(cur, root);
        }
        assert_eq!(t.bones().len(), t.joint_count() - 1);
    }

    #[test]
    fn default_part_axes() {
        let t = SkeletonTopology::default_topology();
        let idx = |n| t.joint_index(n).unwrap();
        let arm = t.part("left_arm").unwrap();
        assert_eq!(arm.axis_pair, [idx("left_shoulder"), idx("left_elbow")]);
        let leg = t.part("right_leg").unwrap();
        assert_eq!(leg.axis_pair, [idx("right_hip"), idx("right_knee")]);
        let head = t.part("head_chain").unwrap();
        assert_eq!(head.axis_pair, [idx("chest"), idx("thorax")]);
        assert_eq!(
            t.plane_joints(),
            [idx("left_hip"), idx("right_hip"), idx("chest")]
        );
    }

    #[test]
    fn parts_cover_non_torso_joints_once() {
        let t = SkeletonTopology::default_topology();
        assert_eq!(t.unassigned_joints(), vec![t.joint_index("root").unwrap()]);
        let total: usize = t.parts().iter().map(|p| p.joints.len()).sum();
        assert_eq!(total, t.joint_count() - 1);
    }

    #[test]
    fn toml_round_trip() {
        let t = SkeletonTopology::default_topology();
        let text = t.to_toml_string();
        let back = SkeletonTopology::from_toml_str(&text).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.hash(), t.hash());
    }

    #[test]
    fn rejects_cycle_and_unknown_names() {
        let mut cfg = TopologyConfig::default_config();
        cfg.bones.push([s("root"), s("head")]);
        assert!(matches!(
            SkeletonTopology::from_config(&cfg),
            Err(Error::Topology(_))
        ));

        let mut cfg = TopologyConfig::default_config();
        cfg.parts[0].origin_joint = s("tail");
        assert!(SkeletonTopology::from_config(&cfg).is_err());
    }

    #[test]
    fn rejects_overlapping_parts() {
        let mut cfg = TopologyConfig::default_config();
        cfg.parts[4].joints.push(s("left_shoulder"));
        assert!(SkeletonTopology::from_config(&cfg).is_err());
    }

    #[test]
    fn custom_layout_without_code_change() {
        let text = r#"
            joints = ["pelvis", "lh", "rh", "spine", "lk", "rk"]
            bones = [["lh", "pelvis"], ["rh", "pelvis"], ["spine", "pelvis"], ["lk", "lh"], ["rk", "rh"]]
            plane_joints = ["lh", "rh", "spine"]
            [[limb_pairs]]
            name = "thigh"
            left = ["lk", "lh"]
            right = ["rk", "rh"]
        "#;
        let t = SkeletonTopology::from_toml_str(text).unwrap();
        assert_eq!(t.joint_count(), 6);
        assert_eq!(t.root_pair(), [1, 2]);
        assert!(t.parts().is_empty());
    }
}
