//! Pose files.
//!
//! One record per frame. A record is either a CSV line
//! `frame,x0,y0[,z0],x1,...` or a JSON object
//! `{"frame": 3, "joints": [[x, y, z], ...]}` on a single line. Blank lines and
//! lines starting with `#` are skipped, as is a leading CSV header. Whether a
//! file holds 2D or 3D poses is decided by the column count (`1 + 2J` vs
//! `1 + 3J`) or the JSON inner array length.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use super::{Pose2D, Pose3D, SkeletonTopology, SyntheticSample};
use crate::geometry::RigidTransform;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum PoseRecords {
    TwoD(Vec<(u64, Pose2D)>),
    ThreeD(Vec<(u64, Pose3D)>),
}

impl PoseRecords {
    pub fn len(&self) -> usize {
        match self {
            PoseRecords::TwoD(v) => v.len(),
            PoseRecords::ThreeD(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Deserialize)]
struct JsonRecord {
    frame: u64,
    joints: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct JsonRecordOut<'a> {
    frame: u64,
    joints: &'a [[f64; 3]],
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

pub fn read_poses(path: &Path, topo: &SkeletonTopology) -> Result<PoseRecords> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let j = topo.joint_count();
    let mut dim: Option<usize> = None;
    let mut rows: Vec<(u64, Vec<f64>)> = Vec::new();
    let mut seen_data = false;

    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let (frame, coords, d) = if text.starts_with('{') {
            let rec: JsonRecord = serde_json::from_str(text)
                .map_err(|e| parse_err(path, lineno, e.to_string()))?;
            if rec.joints.len() != j {
                return Err(parse_err(
                    path,
                    lineno,
                    format!("{} joints, topology has {j}", rec.joints.len()),
                ));
            }
            let d = rec.joints.first().map_or(0, Vec::len);
            if !(d == 2 || d == 3) || rec.joints.iter().any(|p| p.len() != d) {
                return Err(parse_err(path, lineno, "joints must all be 2D or all 3D"));
            }
            (rec.frame, rec.joints.concat(), d)
        } else {
            let fields: Vec<&str> = text.split(',').map(str::trim).collect();
            let frame = match fields[0].parse::<u64>() {
                Ok(f) => f,
                Err(_) if !seen_data => {
                    // header
                    seen_data = true;
                    continue;
                }
                Err(_) => return Err(parse_err(path, lineno, "bad frame id")),
            };
            let cols = fields.len() - 1;
            let d = if cols == 2 * j {
                2
            } else if cols == 3 * j {
                3
            } else {
                return Err(parse_err(
                    path,
                    lineno,
                    format!("{cols} coordinates fit neither 2x{j} nor 3x{j}"),
                ));
            };
            let coords = fields[1..]
                .iter()
                .map(|v| v.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| parse_err(path, lineno, e.to_string()))?;
            (frame, coords, d)
        };
        seen_data = true;
        match dim {
            None => dim = Some(d),
            Some(prev) if prev != d => {
                return Err(parse_err(path, lineno, "mixed 2D and 3D records"));
            }
            _ => {}
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(parse_err(path, lineno, "non-finite coordinate"));
        }
        rows.push((frame, coords));
    }

    Ok(match dim {
        Some(2) => PoseRecords::TwoD(
            rows.into_iter()
                .map(|(f, c)| Ok((f, Pose2D::from_flat(&c)?)))
                .collect::<Result<_>>()?,
        ),
        Some(_) => PoseRecords::ThreeD(
            rows.into_iter()
                .map(|(f, c)| Ok((f, Pose3D::from_flat(&c)?)))
                .collect::<Result<_>>()?,
        ),
        None => PoseRecords::ThreeD(Vec::new()),
    })
}

pub fn read_poses_3d(path: &Path, topo: &SkeletonTopology) -> Result<Vec<(u64, Pose3D)>> {
    match read_poses(path, topo)? {
        PoseRecords::ThreeD(v) => Ok(v),
        PoseRecords::TwoD(_) => Err(parse_err(path, 0, "expected 3D poses, found 2D")),
    }
}

pub fn read_poses_2d(path: &Path, topo: &SkeletonTopology) -> Result<Vec<(u64, Pose2D)>> {
    match read_poses(path, topo)? {
        PoseRecords::TwoD(v) => Ok(v),
        PoseRecords::ThreeD(v) if v.is_empty() => Ok(Vec::new()),
        PoseRecords::ThreeD(_) => Err(parse_err(path, 0, "expected 2D poses, found 3D")),
    }
}

fn header(topo: &SkeletonTopology, axes: &[&str]) -> String {
    let mut h = String::from("frame");
    for name in topo.joint_names() {
        for a in axes {
            write!(h, ",{name}_{a}").unwrap();
        }
    }
    h
}

fn write_rows<'a>(
    path: &Path,
    head: &str,
    rows: impl Iterator<Item = (u64, Vec<f64>)> + 'a,
) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{head}")?;
    for (frame, coords) in rows {
        write!(out, "{frame}")?;
        for v in coords {
            // `{}` on f64 prints the shortest representation that round-trips.
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_poses_2d(
    path: &Path,
    topo: &SkeletonTopology,
    poses: &[(u64, Pose2D)],
) -> Result<()> {
    write_rows(
        path,
        &header(topo, &["x", "y"]),
        poses.iter().map(|(f, p)| (*f, p.to_flat())),
    )
}

pub fn write_poses_3d(
    path: &Path,
    topo: &SkeletonTopology,
    poses: &[(u64, Pose3D)],
) -> Result<()> {
    write_rows(
        path,
        &header(topo, &["x", "y", "z"]),
        poses.iter().map(|(f, p)| (*f, p.to_flat())),
    )
}

/// Writes 3D poses as JSON lines.
pub fn write_poses_3d_json(path: &Path, poses: &[(u64, Pose3D)]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for (frame, pose) in poses {
        let joints: Vec<[f64; 3]> = pose.joints().iter().map(|p| [p.x, p.y, p.z]).collect();
        serde_json::to_writer(&mut out, &JsonRecordOut { frame: *frame, joints: &joints })?;
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

/// Per-sample scene metadata as stored next to synthetic pose files.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneRecord {
    pub frame: u64,
    pub view_bucket: usize,
    pub subject: usize,
    pub noise_sigma: f64,
    pub camera_focal: f64,
    pub view_rotation: RigidTransform,
}

pub fn write_scenes(path: &Path, samples: &[SyntheticSample]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        out,
        "frame,view_bucket,subject,noise_sigma,camera_focal,r00,r01,r02,r10,r11,r12,r20,r21,r22"
    )?;
    for s in samples {
        let r = s.scene.view_rotation.rotation();
        write!(
            out,
            "{},{},{},{},{}",
            s.id, s.scene.view_bucket, s.scene.subject, s.scene.noise_sigma, s.scene.camera_focal
        )?;
        for i in 0..3 {
            for k in 0..3 {
                write!(out, ",{}", r[(i, k)])?;
            }
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_scenes(path: &Path) -> Result<Vec<SceneRecord>> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let text = line.trim();
        if lineno == 0 || text.is_empty() || text.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = text.split(',').collect();
        if f.len() != 14 {
            return Err(parse_err(path, lineno + 1, "scene records have 14 fields"));
        }
        let err = |e: String| parse_err(path, lineno + 1, e);
        let num = |i: usize| f[i].trim().parse::<f64>().map_err(|e| err(e.to_string()));
        let mut r = Matrix3::zeros();
        for i in 0..9 {
            r[(i / 3, i % 3)] = num(5 + i)?;
        }
        out.push(SceneRecord {
            frame: f[0].trim().parse().map_err(|e: std::num::ParseIntError| err(e.to_string()))?,
            view_bucket: f[1]
                .trim()
                .parse()
                .map_err(|e: std::num::ParseIntError| err(e.to_string()))?,
            subject: f[2]
                .trim()
                .parse()
                .map_err(|e: std::num::ParseIntError| err(e.to_string()))?,
            noise_sigma: num(3)?,
            camera_focal: num(4)?,
            view_rotation: RigidTransform::from_rotation(r)
                .map_err(|e| err(e.to_string()))?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::generate_synthetic;

    #[test]
    fn csv_and_json_detection() {
        let dir = tempfile::tempdir().unwrap();
        let topo = SkeletonTopology::default_topology();
        let samples = generate_synthetic(1, 5, 1.0, 3.0).unwrap();
        let p3: Vec<_> = samples.iter().map(|s| (s.id, s.pose3d.clone())).collect();
        let p2: Vec<_> = samples.iter().map(|s| (s.id, s.pose2d.clone())).collect();

        let f3 = dir.path().join("p3.csv");
        let f2 = dir.path().join("p2.csv");
        let fj = dir.path().join("p3.jsonl");
        write_poses_3d(&f3, &topo, &p3).unwrap();
        write_poses_2d(&f2, &topo, &p2).unwrap();
        write_poses_3d_json(&fj, &p3).unwrap();

        assert_eq!(read_poses(&f3, &topo).unwrap(), PoseRecords::ThreeD(p3.clone()));
        assert_eq!(read_poses(&f2, &topo).unwrap(), PoseRecords::TwoD(p2));
        assert_eq!(read_poses_3d(&fj, &topo).unwrap(), p3);
        assert!(read_poses_2d(&f3, &topo).is_err());
    }

    #[test]
    fn rejects_bad_column_count() {
        let dir = tempfile::tempdir().unwrap();
        let topo = SkeletonTopology::default_topology();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "0,1,2,3\n").unwrap();
        let err = read_poses(&path, &topo).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
    }

    #[test]
    fn scenes_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let samples = generate_synthetic(2, 4, 2.0, 0.0).unwrap();
        let path = dir.path().join("scenes.csv");
        write_scenes(&path, &samples).unwrap();
        let back = read_scenes(&path).unwrap();
        assert_eq!(back.len(), 4);
        for (r, s) in back.iter().zip(&samples) {
            assert_eq!(r.view_bucket, s.scene.view_bucket);
            assert_eq!(r.view_rotation, s.scene.view_rotation);
        }
    }
}
