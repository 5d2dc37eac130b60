use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use vipose::geometry::canonicalize;
use vipose::metrics::{evaluate, run_ablation, split_dataset, AblationRow, EvalOptions, SplitSpec};
use vipose::model::{load_pipeline, save_pipeline};
use vipose::skeleton::{
    generate_synthetic, generate_synthetic_with, read_poses_2d, read_poses_3d, read_scenes, write_poses_2d,
    write_poses_3d, write_poses_3d_json, write_scenes, SynthConfig, VIEW_BUCKETS,
};
use vipose::train::{EpochRecord, Trainer, TrainingSet};
use vipose::{EvalReport, Error, Pose3D, RigidTransform, Scheme, SkeletonTopology, TrainConfig};

use crate::args::{AblateArgs, Cli, Command, EvalArgs, SplitKind, SynthArgs, TrainArgs, TransformArgs};
use crate::config::{config_hash, resolve_topology, resolve_train_config};
use crate::manifest::RunManifest;
use crate::CliError;

pub const POSES_2D: &str = "poses_2d.csv";
pub const POSES_3D: &str = "poses_3d.csv";
pub const POSES_3D_JSON: &str = "poses_3d.jsonl";
pub const SCENES: &str = "scenes.csv";
pub const TRAIN_LOG: &str = "train_log.csv";
pub const RUN_MANIFEST: &str = "run_manifest.json";

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn check_usage(cmd: &Command) -> Result<(), CliError> {
    match cmd {
        Command::Synth(a) => {
            if a.count == 0 {
                return Err(usage("--count must be positive"));
            }
            if !(a.spread >= 0.0 && a.noise >= 0.0) {
                return Err(usage("--spread and --noise must be non-negative"));
            }
        }
        Command::Train(a) => {
            a.scheme.parse::<Scheme>().map_err(|e| usage(e.to_string()))?;
        }
        Command::Ablate(a) => {
            for s in &a.schemes {
                s.parse::<Scheme>().map_err(|e| usage(e.to_string()))?;
            }
            if a.test_view >= VIEW_BUCKETS {
                return Err(usage(format!("--test-view must be below {VIEW_BUCKETS}")));
            }
            if a.data_2d.is_none() && (a.train_count < 2 || a.test_count == 0) {
                return Err(usage("--train-count must be at least 2 and --test-count positive"));
            }
        }
        Command::Transform(_) | Command::Eval(_) => {}
    }
    Ok(())
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    check_usage(&cli.command)?;
    let (topo, topo_path) = resolve_topology(cli.topology.as_deref())?;
    let (name, default_manifest) = match &cli.command {
        Command::Synth(a) => ("synth", a.out_dir.join(RUN_MANIFEST)),
        Command::Transform(a) => ("transform", sibling(&a.output, ".manifest.json")),
        Command::Train(a) => ("train", a.out_dir.join(RUN_MANIFEST)),
        Command::Eval(a) => ("eval", sibling(&a.out, ".manifest.json")),
        Command::Ablate(a) => ("ablate", a.out_dir.join(RUN_MANIFEST)),
    };
    let manifest_path = cli.manifest.clone().unwrap_or(default_manifest);
    let mut m = RunManifest::new(name, topo.hash());
    if let Some(p) = &topo_path {
        m.add_input(p)?;
    }
    m.write(&manifest_path)?;
    let result = match &cli.command {
        Command::Synth(a) => synth(a, &topo, &mut m),
        Command::Transform(a) => transform(a, &topo, &mut m),
        Command::Train(a) => train(a, &topo, &mut m),
        Command::Eval(a) => eval(a, &topo, &mut m),
        Command::Ablate(a) => ablate(a, &topo, &mut m),
    };
    m.finish(result.as_ref().err().map(ToString::to_string));
    let written = m.write(&manifest_path);
    result?;
    written?;
    Ok(())
}

fn require_builtin(topo: &SkeletonTopology, what: &str) -> Result<(), CliError> {
    if topo.hash() != SkeletonTopology::default_topology().hash() {
        return Err(usage(format!("{what} only supports the built-in skeleton")));
    }
    Ok(())
}

fn synth(a: &SynthArgs, topo: &SkeletonTopology, m: &mut RunManifest) -> Result<(), CliError> {
    require_builtin(topo, "synth")?;
    let cfg = if a.rig {
        SynthConfig::camera_rig(a.spread, a.noise)
    } else {
        SynthConfig::uniform(a.spread, a.noise)
    };
    let samples = generate_synthetic_with(a.seed, a.count, &cfg)?;
    m.seed = Some(a.seed);
    m.config = Some(serde_json::json!({
        "count": a.count, "spread": a.spread, "noise": a.noise, "rig": a.rig,
    }));
    fs::create_dir_all(&a.out_dir)?;
    let p2: Vec<_> = samples.iter().map(|s| (s.id, s.pose2d.clone())).collect();
    let p3: Vec<_> = samples.iter().map(|s| (s.id, s.pose3d.clone())).collect();
    let out2 = a.out_dir.join(POSES_2D);
    write_poses_2d(&out2, topo, &p2)?;
    let out3 = if a.json {
        let p = a.out_dir.join(POSES_3D_JSON);
        write_poses_3d_json(&p, &p3)?;
        p
    } else {
        let p = a.out_dir.join(POSES_3D);
        write_poses_3d(&p, topo, &p3)?;
        p
    };
    let scenes = a.out_dir.join(SCENES);
    write_scenes(&scenes, &samples)?;
    m.outputs = vec![out2, out3, scenes];
    eprintln!("synth: {} samples written to {}", samples.len(), a.out_dir.display());
    Ok(())
}

const SIDECAR_HEADER: &str = "frame,r00,r01,r02,r10,r11,r12,r20,r21,r22,t0,t1,t2";

fn write_sidecar(path: &Path, transforms: &[(u64, RigidTransform)]) -> Result<(), CliError> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{SIDECAR_HEADER}")?;
    for (frame, t) in transforms {
        write!(out, "{frame}")?;
        for v in t.to_array() {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

fn read_sidecar(path: &Path) -> Result<HashMap<u64, RigidTransform>, CliError> {
    let parse = |line: usize, msg: String| -> CliError {
        Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        }
        .into()
    };
    let mut out = HashMap::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        let text = line.trim();
        if i == 0 || text.is_empty() {
            continue;
        }
        let fields: Vec<&str> = text.split(',').map(str::trim).collect();
        if fields.len() != 13 {
            return Err(parse(i + 1, "sidecar records have a frame id and 12 floats".into()));
        }
        let frame: u64 = fields[0].parse().map_err(|e| parse(i + 1, format!("{e}")))?;
        let values = fields[1..]
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| parse(i + 1, format!("{e}")))?;
        let t = RigidTransform::from_array(&values).map_err(|e| parse(i + 1, e.to_string()))?;
        out.insert(frame, t);
    }
    Ok(out)
}

fn transform(a: &TransformArgs, topo: &SkeletonTopology, m: &mut RunManifest) -> Result<(), CliError> {
    m.add_input(&a.input)?;
    let poses = read_poses_3d(&a.input, topo)?;
    let out: Vec<(u64, Pose3D)> = if a.invert {
        m.add_input(&a.sidecar)?;
        let sidecar = read_sidecar(&a.sidecar)?;
        poses
            .iter()
            .map(|(frame, pose)| {
                let t = sidecar.get(frame).ok_or_else(|| {
                    CliError::Core(Error::invalid(format!("frame {frame} has no sidecar transform")))
                })?;
                Ok((*frame, t.inverse().apply(pose)))
            })
            .collect::<Result<_, CliError>>()?
    } else {
        let mut degenerate = 0;
        let mut transforms = Vec::with_capacity(poses.len());
        let mut canonical = Vec::with_capacity(poses.len());
        for (frame, pose) in &poses {
            let (c, t, deg) = canonicalize(pose, topo);
            if deg {
                degenerate += 1;
                eprintln!("transform: frame {frame}: degenerate global frame, identity used");
            }
            transforms.push((*frame, t));
            canonical.push((*frame, c));
        }
        write_sidecar(&a.sidecar, &transforms)?;
        m.outputs.push(a.sidecar.clone());
        eprintln!("transform: {} records, {degenerate} degenerate", poses.len());
        canonical
    };
    write_poses_3d(&a.output, topo, &out)?;
    m.outputs.push(a.output.clone());
    Ok(())
}

/// Pairs 2D and 3D files that list the same frames in the same order.
fn load_pairs(p2: &Path, p3: &Path, topo: &SkeletonTopology, m: &mut RunManifest) -> Result<TrainingSet, CliError> {
    m.add_input(p2)?;
    m.add_input(p3)?;
    let a = read_poses_2d(p2, topo)?;
    let b = read_poses_3d(p3, topo)?;
    if a.len() != b.len() || a.iter().zip(&b).any(|(x, y)| x.0 != y.0) {
        return Err(Error::shape(format!(
            "{} and {} must list the same frames in the same order",
            p2.display(),
            p3.display()
        ))
        .into());
    }
    let ids = a.iter().map(|r| r.0).collect();
    let poses2: Vec<_> = a.into_iter().map(|r| r.1).collect();
    let poses3: Vec<_> = b.into_iter().map(|r| r.1).collect();
    Ok(TrainingSet::from_poses(ids, &poses2, &poses3, topo)?)
}

fn record_config(m: &mut RunManifest, cfg: &TrainConfig, path: Option<&Path>) -> Result<(), CliError> {
    if let Some(p) = path {
        m.add_input(p)?;
    }
    m.config = Some(serde_json::to_value(cfg).map_err(Error::from)?);
    m.config_hash = Some(config_hash(cfg));
    m.seed = Some(cfg.seed);
    Ok(())
}

const LOG_HEADER: &str = "epoch,phase,l2_pose,l2_pose_mm2,generator_adv,discriminator,lambda,total,eval_mpjpe";

fn log_row(r: &EpochRecord, lambda: f64) -> String {
    let eval = r.eval_mpjpe.map_or(String::new(), |v| v.to_string());
    let lambda = if r.phase == "pretrain" { 0.0 } else { lambda };
    format!(
        "{},{},{},{},{},{},{},{},{}",
        r.epoch, r.phase, r.l2, r.l2_mm2, r.adv_g, r.adv_d, lambda, r.total, eval
    )
}

fn train(a: &TrainArgs, topo: &SkeletonTopology, m: &mut RunManifest) -> Result<(), CliError> {
    let scheme: Scheme = a.scheme.parse().map_err(|e: Error| usage(e.to_string()))?;
    let (cfg, cfg_path) = resolve_train_config(&a.overrides)?;
    record_config(m, &cfg, cfg_path.as_deref())?;
    let train = load_pairs(&a.data_2d, &a.data_3d, topo, m)?;
    let eval = match (&a.eval_2d, &a.eval_3d) {
        (Some(p2), Some(p3)) => Some(load_pairs(p2, p3, topo, m)?),
        _ => None,
    };

    fs::create_dir_all(&a.out_dir)?;
    let log_path = a.out_dir.join(TRAIN_LOG);
    let mut log = BufWriter::new(File::create(&log_path)?);
    writeln!(log, "{LOG_HEADER}")?;
    let mut log_err = None;
    let mut trainer = Trainer::from_data(&train, topo.clone(), scheme, cfg.clone())?;
    trainer.fit(&train, eval.as_ref(), &mut |r| {
        eprintln!(
            "train: {} {:>3} l2 {:.1} mm^2 adv_g {:.4} adv_d {:.4}",
            r.phase, r.epoch, r.l2_mm2, r.adv_g, r.adv_d
        );
        if let Err(e) = writeln!(log, "{}", log_row(r, cfg.lambda)).and_then(|_| log.flush()) {
            log_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = log_err {
        return Err(e.into());
    }
    if trainer.skipped_steps() > 0 {
        eprintln!("train: warning: {} updates skipped on non-finite gradients", trainer.skipped_steps());
    }
    let saved = save_pipeline(&a.out_dir, &trainer.pipeline)?;
    let cfg_out = a.out_dir.join("train_config.toml");
    fs::write(&cfg_out, cfg.to_toml_string())?;
    m.outputs = vec![
        a.out_dir.join(vipose::model::MANIFEST_FILE),
        a.out_dir.join(&saved.weights),
        log_path,
        cfg_out,
    ];
    Ok(())
}

fn by_frame(records: Vec<(u64, Pose3D)>, gt_frames: &[u64], what: &str) -> Result<Vec<Pose3D>, CliError> {
    let mut map: HashMap<u64, Pose3D> = records.into_iter().collect();
    gt_frames
        .iter()
        .map(|f| {
            map.remove(f)
                .ok_or_else(|| Error::shape(format!("{what} has no pose for frame {f}")).into())
        })
        .collect()
}

fn write_report(out: &Path, label: &str, report: &EvalReport) -> Result<PathBuf, CliError> {
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(out, report.to_json())?;
    let table = out.with_extension("txt");
    fs::write(&table, EvalReport::table(&[(label.to_string(), report)]))?;
    Ok(table)
}

fn eval(a: &EvalArgs, topo: &SkeletonTopology, m: &mut RunManifest) -> Result<(), CliError> {
    m.add_input(&a.data_3d)?;
    let gt = read_poses_3d(&a.data_3d, topo)?;
    let frames: Vec<u64> = gt.iter().map(|r| r.0).collect();
    let gts: Vec<Pose3D> = gt.into_iter().map(|r| r.1).collect();
    let (preds, label) = if let Some(dir) = &a.model {
        let p2 = a.data_2d.as_ref().ok_or_else(|| usage("--model needs --data-2d"))?;
        m.add_input(&dir.join(vipose::model::MANIFEST_FILE))?;
        m.add_input(p2)?;
        let pipe = load_pipeline(dir, Some(topo))?;
        m.seed = Some(pipe.seed());
        let inputs = read_poses_2d(p2, topo)?;
        let ids: Vec<u64> = inputs.iter().map(|r| r.0).collect();
        let poses: Vec<_> = inputs.into_iter().map(|r| r.1).collect();
        let outs = pipe.estimate_batch(&poses)?;
        let estimated = ids.into_iter().zip(outs.into_iter().map(|o| o.final_pose)).collect();
        (by_frame(estimated, &frames, "model output")?, pipe.scheme().name().to_string())
    } else {
        let p = a.predictions.as_ref().expect("clap requires a source");
        m.add_input(p)?;
        (by_frame(read_poses_3d(p, topo)?, &frames, "prediction file")?, "predictions".to_string())
    };
    let report = evaluate(
        &preds,
        &gts,
        topo,
        EvalOptions {
            root_relative: !a.no_root_align,
        },
    )?;
    let table = write_report(&a.out, &label, &report)?;
    m.outputs = vec![a.out.clone(), table];
    eprintln!("eval: {} samples, MPJPE {:.2} mm, PA-MPJPE {:.2} mm", report.sample_count, report.mpjpe, report.pa_mpjpe);
    Ok(())
}

fn ablation_data(a: &AblateArgs, topo: &SkeletonTopology, m: &mut RunManifest) -> Result<TrainingSet, CliError> {
    match (&a.data_2d, &a.data_3d) {
        (Some(p2), Some(p3)) => {
            let mut data = load_pairs(p2, p3, topo, m)?;
            if let Some(path) = &a.scenes {
                m.add_input(path)?;
                let buckets: HashMap<u64, usize> =
                    read_scenes(path)?.into_iter().map(|s| (s.frame, s.view_bucket)).collect();
                let per_row = data
                    .ids
                    .iter()
                    .map(|id| {
                        buckets
                            .get(id)
                            .copied()
                            .ok_or_else(|| Error::shape(format!("scene file has no frame {id}")))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                data.view_buckets = Some(per_row);
            }
            Ok(data)
        }
        _ => {
            require_builtin(topo, "synthetic ablation")?;
            let samples = generate_synthetic(a.data_seed, a.train_count + a.test_count, a.spread, a.noise)?;
            Ok(TrainingSet::from_samples(&samples, topo)?)
        }
    }
}

fn ablate(a: &AblateArgs, topo: &SkeletonTopology, m: &mut RunManifest) -> Result<(), CliError> {
    let schemes: Vec<Scheme> = if a.schemes.is_empty() {
        Scheme::ALL.to_vec()
    } else {
        a.schemes
            .iter()
            .map(|s| s.parse())
            .collect::<Result<_, Error>>()
            .map_err(|e| usage(e.to_string()))?
    };
    let (cfg, cfg_path) = resolve_train_config(&a.overrides)?;
    record_config(m, &cfg, cfg_path.as_deref())?;
    let data = ablation_data(a, topo, m)?;
    let spec = match a.split {
        SplitKind::Ids => {
            let n_test = if a.data_2d.is_some() { a.test_count.min(data.len().saturating_sub(2)) } else { a.test_count };
            let cut = data.len() - n_test;
            SplitSpec::Ids {
                train: data.ids[..cut].to_vec(),
                test: data.ids[cut..].to_vec(),
            }
        }
        SplitKind::Views => SplitSpec::Views {
            train: (0..VIEW_BUCKETS).filter(|&b| b != a.test_view).collect(),
            test: vec![a.test_view],
        },
    };
    let (train, test) = split_dataset(&data, &spec)?;
    eprintln!("ablate: {} training and {} test samples", train.len(), test.len());

    fs::create_dir_all(&a.out_dir)?;
    let log_path = a.out_dir.join("ablation_log.csv");
    let mut log = BufWriter::new(File::create(&log_path)?);
    writeln!(log, "scheme,{LOG_HEADER}")?;
    let mut log_err = None;
    let rows: Vec<AblationRow> = run_ablation(&train, &test, topo, &cfg, &schemes, &mut |s, r| {
        eprintln!("ablate: {s} {} {:>3} l2 {:.1} mm^2", r.phase, r.epoch, r.l2_mm2);
        if let Err(e) = writeln!(log, "{s},{}", log_row(r, cfg.lambda)).and_then(|_| log.flush()) {
            log_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = log_err {
        return Err(e.into());
    }
    let json_path = a.out_dir.join("ablation.json");
    fs::write(&json_path, serde_json::to_string_pretty(&rows).map_err(Error::from)?)?;
    let labelled: Vec<(String, &EvalReport)> = rows.iter().map(|r| (r.scheme.name().to_string(), &r.report)).collect();
    let table_path = a.out_dir.join("ablation.txt");
    fs::write(&table_path, EvalReport::table(&labelled))?;
    m.outputs = vec![json_path, table_path, log_path];
    Ok(())
}
