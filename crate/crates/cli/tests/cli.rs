use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn vipose() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_vipose"));
    c.env_remove("VIPOSE_CONFIG_DIR");
    c
}

fn run(args: &[&str]) -> Output {
    vipose().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path, count: usize, seed: u64) -> PathBuf {
    let out = dir.join(format!("synth_{seed}_{count}"));
    let o = run(&["synth", "--seed", &seed.to_string(), "--count", &count.to_string(), "--spread", "3.14", "--out-dir", p(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    out
}

fn numbers(path: &Path) -> Vec<Vec<f64>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|f| f.trim().parse().unwrap()).collect())
        .collect()
}

fn tiny_config(dir: &Path) -> PathBuf {
    let path = dir.join("tiny.toml");
    std::fs::write(
        &path,
        "batch_size = 16\npretrain_epochs = 1\nepochs = 2\n\n[model]\nbase_width = 24\nbase_blocks = 1\nrefiner_widths = [8, 12]\ndisc_widths = [8]\n",
    )
    .unwrap();
    path
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn synth_writes_requested_count_deterministically() {
    let dir = TempDir::new().unwrap();
    let a = synth(dir.path(), 100, 1);
    assert_eq!(numbers(&a.join("poses_2d.csv")).len(), 100);
    assert_eq!(numbers(&a.join("poses_3d.csv")).len(), 100);
    assert_eq!(numbers(&a.join("scenes.csv")).len(), 100);

    let b = dir.path().join("again");
    let o = run(&["synth", "--seed", "1", "--count", "100", "--spread", "3.14", "--out-dir", p(&b)]);
    assert_eq!(code(&o), 0);
    for f in ["poses_2d.csv", "poses_3d.csv", "scenes.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let m = json(&a.join("run_manifest.json"));
    assert_eq!(m["status"], "ok");
    assert_eq!(m["seed"], 1);
    assert_eq!(m["outputs"].as_array().unwrap().len(), 3);
}

#[test]
fn usage_errors_exit_one() {
    let dir = TempDir::new().unwrap();
    let o = run(&["synth", "--count", "0", "--out-dir", p(dir.path())]);
    assert_eq!(code(&o), 1);
    assert_eq!(code(&run(&["synth", "--bogus"])), 1);
    assert_eq!(code(&run(&[])), 1);
    assert_eq!(code(&run(&["--help"])), 0);
    let o = run(&["train", "--data-2d", "a", "--data-3d", "b", "--scheme", "B+XX", "--out-dir", p(dir.path())]);
    assert_eq!(code(&o), 1);
}

#[test]
fn missing_input_is_data_error() {
    let dir = TempDir::new().unwrap();
    let o = run(&[
        "transform",
        "--input",
        p(&dir.path().join("absent.csv")),
        "--output",
        p(&dir.path().join("o.csv")),
        "--sidecar",
        p(&dir.path().join("s.csv")),
    ]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    let m = json(&dir.path().join("o.csv.manifest.json"));
    assert_eq!(m["status"], "failed");
}

#[test]
fn transform_round_trip_and_identity_on_canonical_input() {
    let dir = TempDir::new().unwrap();
    let data = synth(dir.path(), 50, 2);
    let orig = data.join("poses_3d.csv");
    let canon = dir.path().join("canon.csv");
    let side = dir.path().join("side.csv");
    let o = run(&["transform", "--input", p(&orig), "--output", p(&canon), "--sidecar", p(&side)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stderr(&o).contains("50 records, 0 degenerate"));

    let back = dir.path().join("back.csv");
    let o = run(&["transform", "--invert", "--input", p(&canon), "--output", p(&back), "--sidecar", p(&side)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (a, b) = (numbers(&orig), numbers(&back));
    assert_eq!(a.len(), b.len());
    for (ra, rb) in a.iter().zip(&b) {
        assert_eq!(ra[0], rb[0]);
        for (x, y) in ra[1..].iter().zip(&rb[1..]) {
            assert!((x - y).abs() <= 1e-6, "{x} vs {y}");
        }
    }

    let side2 = dir.path().join("side2.csv");
    let o = run(&["transform", "--input", p(&canon), "--output", p(&dir.path().join("c2.csv")), "--sidecar", p(&side2)]);
    assert_eq!(code(&o), 0);
    let identity = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0];
    for row in numbers(&side2) {
        for (v, e) in row[1..].iter().zip(identity) {
            assert!((v - e).abs() < 1e-9, "{row:?}");
        }
    }
}

#[test]
fn collinear_record_is_reported_not_fatal() {
    let dir = TempDir::new().unwrap();
    let data = synth(dir.path(), 3, 3);
    let text = std::fs::read_to_string(data.join("poses_3d.csv")).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let line: Vec<String> = std::iter::once("99".to_string())
        .chain((0..17).flat_map(|j| [format!("{}", 10.0 * j as f64), "0".into(), "0".into()]))
        .collect();
    lines.push(line.join(","));
    let input = dir.path().join("with_line.csv");
    std::fs::write(&input, lines.join("\n") + "\n").unwrap();
    let o = run(&[
        "transform",
        "--input",
        p(&input),
        "--output",
        p(&dir.path().join("o.csv")),
        "--sidecar",
        p(&dir.path().join("s.csv")),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stderr(&o).contains("4 records, 1 degenerate"), "{}", stderr(&o));
    assert!(stderr(&o).contains("frame 99"));
}

#[test]
fn train_then_eval_with_zero_lambda() {
    let dir = TempDir::new().unwrap();
    let data = synth(dir.path(), 48, 4);
    let cfg = tiny_config(dir.path());
    let model = dir.path().join("model");
    let (d2, d3) = (data.join("poses_2d.csv"), data.join("poses_3d.csv"));
    let o = run(&[
        "train", "--data-2d", p(&d2), "--data-3d", p(&d3), "--scheme", "B+VI-HC-VID", "--config", p(&cfg),
        "--lambda", "0", "--out-dir", p(&model),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let log = std::fs::read_to_string(model.join("train_log.csv")).unwrap();
    let rows: Vec<Vec<&str>> = log.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 3);
    let joint: Vec<_> = rows.iter().filter(|r| r[1] == "joint").collect();
    assert_eq!(joint.len(), 2);
    for r in joint {
        let (l2, adv_g, lambda, total) = (r[2].parse::<f64>().unwrap(), r[4].parse::<f64>().unwrap(), r[6], r[7].parse::<f64>().unwrap());
        assert_eq!(lambda, "0");
        assert!(adv_g > 0.0, "discriminator still reports its loss");
        assert_eq!(total, l2);
    }
    let m = json(&model.join("run_manifest.json"));
    assert_eq!(m["status"], "ok");
    assert_eq!(m["config"]["lambda"], 0.0);
    assert_eq!(m["config"]["epochs"], 2);
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 16);

    let report = dir.path().join("report.json");
    let o = run(&["eval", "--model", p(&model), "--data-2d", p(&d2), "--data-3d", p(&d3), "--out", p(&report)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = json(&report);
    assert!(r["mpjpe"].as_f64().unwrap() > 0.0);
    assert!(r["pa_mpjpe"].as_f64().unwrap() <= r["mpjpe"].as_f64().unwrap() + 1e-9);
    assert_eq!(r["sample_count"], 48);
    let table = std::fs::read_to_string(report.with_extension("txt")).unwrap();
    assert!(table.lines().nth(1).unwrap().starts_with("B+VI-HC-VID"));
}

#[test]
fn training_is_reproducible_bitwise() {
    let dir = TempDir::new().unwrap();
    let data = synth(dir.path(), 40, 5);
    let cfg = tiny_config(dir.path());
    let weights: Vec<Vec<u8>> = ["m1", "m2"]
        .iter()
        .map(|name| {
            let out = dir.path().join(name);
            let o = run(&[
                "train", "--data-2d", p(&data.join("poses_2d.csv")), "--data-3d", p(&data.join("poses_3d.csv")),
                "--scheme", "B+VI-HC", "--config", p(&cfg), "--out-dir", p(&out),
            ]);
            assert_eq!(code(&o), 0, "{}", stderr(&o));
            std::fs::read(out.join("weights.bin")).unwrap()
        })
        .collect();
    assert_eq!(weights[0], weights[1]);
}

#[test]
fn eval_oracle_predictions_are_zero() {
    let dir = TempDir::new().unwrap();
    let data = synth(dir.path(), 20, 6);
    let gt = data.join("poses_3d.csv");
    let report = dir.path().join("r.json");
    let o = run(&["eval", "--predictions", p(&gt), "--data-3d", p(&gt), "--out", p(&report)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = json(&report);
    assert_eq!(r["mpjpe"], 0.0);
    assert_eq!(r["bone_error"]["mean"], 0.0);
    assert!(r["pa_mpjpe"].as_f64().unwrap() < 1e-9);
}

#[test]
fn eval_rejects_missing_checkpoint_and_topology_mismatch() {
    let dir = TempDir::new().unwrap();
    let data = synth(dir.path(), 40, 7);
    let (d2, d3) = (data.join("poses_2d.csv"), data.join("poses_3d.csv"));
    let report = dir.path().join("r.json");
    let o = run(&["eval", "--model", p(&dir.path().join("nothing")), "--data-2d", p(&d2), "--data-3d", p(&d3), "--out", p(&report)]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));

    let model = dir.path().join("model");
    let cfg = tiny_config(dir.path());
    let o = run(&["train", "--data-2d", p(&d2), "--data-3d", p(&d3), "--scheme", "B", "--config", p(&cfg), "--out-dir", p(&model)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let topo = vipose::SkeletonTopology::default_topology().to_toml_string().replace("jaw", "nose");
    let topo_path = dir.path().join("renamed.toml");
    std::fs::write(&topo_path, topo).unwrap();
    let o = run(&[
        "eval", "--topology", p(&topo_path), "--model", p(&model), "--data-2d", p(&d2), "--data-3d", p(&d3), "--out", p(&report),
    ]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn diverging_training_is_numeric_failure() {
    let dir = TempDir::new().unwrap();
    let data = synth(dir.path(), 40, 8);
    let cfg = tiny_config(dir.path());
    let o = run(&[
        "train", "--data-2d", p(&data.join("poses_2d.csv")), "--data-3d", p(&data.join("poses_3d.csv")),
        "--scheme", "B+VI-HC", "--config", p(&cfg), "--generator-lr", "1e300", "--pretrain-epochs", "3",
        "--out-dir", p(&dir.path().join("m")),
    ]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

#[test]
fn config_dir_env_and_flag_precedence() {
    let dir = TempDir::new().unwrap();
    let data = synth(dir.path(), 40, 9);
    let conf = dir.path().join("conf");
    std::fs::create_dir_all(&conf).unwrap();
    std::fs::copy(tiny_config(dir.path()), conf.join("train.toml")).unwrap();
    let out = dir.path().join("m");
    let o = vipose()
        .env("VIPOSE_CONFIG_DIR", &conf)
        .args([
            "train", "--data-2d", p(&data.join("poses_2d.csv")), "--data-3d", p(&data.join("poses_3d.csv")),
            "--scheme", "B", "--epochs", "1", "--out-dir", p(&out),
        ])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m = json(&out.join("run_manifest.json"));
    assert_eq!(m["config"]["epochs"], 1, "flag wins over file");
    assert_eq!(m["config"]["model"]["base_width"], 24, "file wins over defaults");
    assert_eq!(m["config"]["lambda"], 0.001, "defaults fill the rest");
}

#[test]
fn ablate_emits_the_seven_scheme_ladder() {
    let dir = TempDir::new().unwrap();
    let cfg = tiny_config(dir.path());
    let out = dir.path().join("abl");
    let o = run(&[
        "ablate", "--train-count", "40", "--test-count", "12", "--config", p(&cfg), "--epochs", "1", "--out-dir", p(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let table = std::fs::read_to_string(out.join("ablation.txt")).unwrap();
    let names: Vec<&str> = table.lines().skip(1).map(|l| l.split_whitespace().next().unwrap()).collect();
    assert_eq!(names, ["B", "B+HC", "B+VI-GC", "B+VI-LC", "B+VI-HC", "B+VI-HC-D", "B+VI-HC-VID"]);
    let rows = json(&out.join("ablation.json"));
    assert_eq!(rows.as_array().unwrap().len(), 7);
    for r in rows.as_array().unwrap() {
        assert_eq!(r["report"]["sample_count"], 12);
    }
}

#[test]
fn ablate_view_split_holds_out_one_bucket() {
    let dir = TempDir::new().unwrap();
    let data = synth(dir.path(), 80, 10);
    let cfg = tiny_config(dir.path());
    let out = dir.path().join("abl");
    let o = run(&[
        "ablate", "--data-2d", p(&data.join("poses_2d.csv")), "--data-3d", p(&data.join("poses_3d.csv")),
        "--scenes", p(&data.join("scenes.csv")), "--split", "views", "--test-view", "3", "--schemes", "B,B+VI-HC-VID",
        "--config", p(&cfg), "--out-dir", p(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let held_out = numbers(&data.join("scenes.csv")).iter().filter(|r| r[1] == 3.0).count();
    let rows = json(&out.join("ablation.json"));
    assert_eq!(rows.as_array().unwrap().len(), 2);
    assert_eq!(rows[0]["report"]["sample_count"], held_out);

    let o = run(&[
        "ablate", "--data-2d", p(&data.join("poses_2d.csv")), "--data-3d", p(&data.join("poses_3d.csv")),
        "--split", "views", "--config", p(&cfg), "--out-dir", p(&out),
    ]);
    assert_eq!(code(&o), 2, "views without scene metadata: {}", stderr(&o));
}
