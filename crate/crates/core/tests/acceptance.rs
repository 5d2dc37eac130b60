//! Acceptance gate. Runs every criterion, prints one line each and exits
//! non-zero if any fails.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::{Matrix3, Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vipose::geometry::{canonicalize, global_frame, procrustes_align};
use vipose::metrics::{self, run_ablation, split_dataset, SplitSpec};
use vipose::model::{ModelConfig, PipelineProbe};
use vipose::nn::gradcheck::{check_gradients, GradCheckConfig, NetProbe};
use vipose::nn::{BatchNorm, Dense, Dropout, Layer, Relu, ResidualBlock, Sequential, Sigmoid, Tensor2};
use vipose::skeleton::generate_synthetic;
use vipose::train::{Trainer, TrainingSet};
use vipose::{Pose3D, RigidTransform, Scheme, SkeletonTopology, TrainConfig};

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: String) -> Self {
        Outcome { pass, detail }
    }
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

fn random_rigid(rng: &mut impl Rng) -> RigidTransform {
    let rot = RigidTransform::from_euler(rng.random_range(-PI..PI), rng.random_range(-PI..PI), rng.random_range(-PI..PI));
    let t = Vector3::new(
        rng.random_range(-1000.0..1000.0),
        rng.random_range(-1000.0..1000.0),
        rng.random_range(-1000.0..1000.0),
    );
    RigidTransform::new(*rot.rotation(), t).expect("proper rotation")
}

fn extent(p: &Pose3D) -> f64 {
    p.joints().iter().map(|v| v.norm()).fold(1.0, f64::max)
}

fn geometry_suite(topo: &SkeletonTopology) -> Outcome {
    let start = Instant::now();
    let poses: Vec<Pose3D> = generate_synthetic(101, 1000, PI, 10.0).unwrap().into_iter().map(|s| s.pose3d).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let (mut idem, mut round, mut ortho, mut equi) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut degenerate = 0;
    for pose in &poses {
        let (canon, t, deg) = canonicalize(pose, topo);
        degenerate += deg as usize;
        let (again, _, _) = canonicalize(&canon, topo);
        idem = idem.max(again.max_distance(&canon));
        round = round.max(t.inverse().apply(&canon).max_distance(pose));
        ortho = ortho.max(t.orthonormality_error());

        let q = random_rigid(&mut rng);
        let moved = q.apply(pose);
        let (f0, f1) = (global_frame(pose, topo), global_frame(&moved, topo));
        let r = q.rotation();
        let origin_expected = q.apply_point(&f0.origin);
        let scale = extent(pose) + q.translation().norm();
        let rel = [
            (f1.normal - r * f0.normal).norm(),
            (f1.axis - r * f0.axis).norm(),
            (f1.origin - origin_expected).norm() / scale,
            canonicalize(&moved, topo).0.max_distance(&canon) / scale,
        ];
        equi = rel.iter().fold(equi, |m, v| m.max(*v));
    }
    let elapsed = start.elapsed();
    let pass = degenerate == 0 && idem <= 1e-6 && round <= 1e-6 && ortho <= 1e-9 && equi <= 1e-9 && within(elapsed, 5.0);
    Outcome::new(
        pass,
        format!(
            "idempotence {idem:.2e} mm, round trip {round:.2e} mm, orthonormality {ortho:.2e}, equivariance {equi:.2e}, degenerate {degenerate}, {:.2}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn random_pose(rng: &mut impl Rng, joints: usize, extent: f64) -> Pose3D {
    Pose3D::new(
        (0..joints)
            .map(|_| Vector3::new(rng.random_range(-extent..extent), rng.random_range(-extent..extent), rng.random_range(-extent..extent)))
            .collect(),
    )
    .unwrap()
}

fn rms(a: &Pose3D, b: &Pose3D) -> f64 {
    let s: f64 = a.joints().iter().zip(b.joints()).map(|(x, y)| (x - y).norm_squared()).sum();
    (s / a.len() as f64).sqrt()
}

/// Best residual for a fixed rotation, with translation and non-negative
/// scale solved in closed form for that rotation.
fn residual_for_rotation(est: &[Vector3<f64>], refp: &[Vector3<f64>], r: &Matrix3<f64>) -> f64 {
    let n = est.len() as f64;
    let me = est.iter().sum::<Vector3<f64>>() / n;
    let mr = refp.iter().sum::<Vector3<f64>>() / n;
    let ec: Vec<_> = est.iter().map(|p| r * (p - me)).collect();
    let rc: Vec<_> = refp.iter().map(|p| p - mr).collect();
    let s = ec.iter().zip(&rc).map(|(a, b)| a.dot(b)).sum::<f64>().max(0.0) / ec.iter().map(|a| a.norm_squared()).sum::<f64>();
    ec.iter().zip(&rc).map(|(a, b)| (s * a - b).norm_squared()).sum()
}

/// Coarse axis-angle grid over the rotation ball, then shrinking local grids.
fn grid_oracle_rms(est: &Pose3D, refp: &Pose3D) -> f64 {
    let (e, r) = (est.joints(), refp.joints());
    let eval = |w: &Vector3<f64>| residual_for_rotation(e, r, Rotation3::new(*w).matrix());
    let coarse = 0.25;
    let n = (PI / coarse).ceil() as i32;
    let mut best = Vector3::zeros();
    let mut best_val = f64::INFINITY;
    for i in -n..=n {
        for j in -n..=n {
            for k in -n..=n {
                let w = Vector3::new(i as f64, j as f64, k as f64) * coarse;
                if w.norm() <= PI + coarse {
                    let v = eval(&w);
                    if v < best_val {
                        best_val = v;
                        best = w;
                    }
                }
            }
        }
    }
    let mut step = coarse / 2.0;
    while step >= 1e-7 {
        loop {
            let center = best;
            for i in -2..=2 {
                for j in -2..=2 {
                    for k in -2..=2 {
                        let w = center + Vector3::new(i as f64, j as f64, k as f64) * step;
                        let v = eval(&w);
                        if v < best_val {
                            best_val = v;
                            best = w;
                        }
                    }
                }
            }
            if best == center {
                break;
            }
        }
        step /= 2.0;
    }
    (best_val / e.len() as f64).sqrt()
}

fn procrustes_suite(topo: &SkeletonTopology) -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(201);
    let poses: Vec<Pose3D> = generate_synthetic(202, 1000, PI, 5.0).unwrap().into_iter().map(|s| s.pose3d).collect();
    let others: Vec<Pose3D> = generate_synthetic(203, 1000, PI, 5.0).unwrap().into_iter().map(|s| s.pose3d).collect();

    let mut rigid_err = 0.0f64;
    let mut order_violations = 0;
    for (p, q) in poses.iter().zip(&others) {
        let copy = random_rigid(&mut rng).apply(p);
        let (_, aligned) = procrustes_align(&copy, p).unwrap();
        rigid_err = rigid_err.max(aligned.max_distance(p));

        let pr = p.root_centered(topo);
        let qr = q.root_centered(topo);
        let unaligned = metrics::mpjpe(std::slice::from_ref(&qr), std::slice::from_ref(&pr)).unwrap();
        let pa = metrics::pa_mpjpe(std::slice::from_ref(&qr), std::slice::from_ref(&pr)).unwrap();
        if pa > unaligned + 1e-9 {
            order_violations += 1;
        }
    }

    let mut gap = 0.0f64;
    let mut below_oracle = true;
    for _ in 0..20 {
        let refp = random_pose(&mut rng, 4, 100.0);
        let noisy = random_rigid(&mut rng).apply(&refp).map(|p| {
            p + Vector3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0))
        });
        let closed = rms(&procrustes_align(&noisy, &refp).unwrap().1, &refp);
        let oracle = grid_oracle_rms(&noisy, &refp);
        below_oracle &= closed <= oracle + 1e-9;
        gap = gap.max((oracle - closed).abs());
    }
    let elapsed = start.elapsed();
    let pass = rigid_err <= 1e-6 && order_violations == 0 && below_oracle && gap <= 1e-3 && within(elapsed, 30.0);
    Outcome::new(
        pass,
        format!(
            "rigid-copy PA {rigid_err:.2e} mm, PA > unaligned in {order_violations}/1000, oracle gap {gap:.2e} mm, {:.2}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn input(rows: usize, cols: usize, seed: u64) -> Tensor2 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor2::from_shape_fn((rows, cols), |_| rng.random_range(-2.0..2.0))
}

fn gradient_suite() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(301);
    let mut bn = BatchNorm::new(6);
    bn.running_mean.fill(0.3);
    bn.running_var.fill(2.0);
    bn.gamma.value = Tensor2::from_shape_fn((1, 6), |(_, j)| 0.5 + 0.3 * j as f64);

    let dense = Sequential::new(vec![Layer::Dense(Dense::kaiming(6, 12, &mut rng))]);
    let batchnorm = Sequential::new(vec![Layer::Dense(Dense::kaiming(6, 6, &mut rng)), Layer::BatchNorm(bn)]);
    let relu = Sequential::new(vec![Layer::Relu(Relu::default())]);
    let dropout = Sequential::new(vec![Layer::Dropout(Dropout::new(0.5, 7))]);
    let sigmoid = Sequential::new(vec![Layer::Sigmoid(Sigmoid::default())]);
    let residual = Sequential::new(vec![
        Layer::Dense(Dense::kaiming(6, 10, &mut rng)),
        Layer::Residual(ResidualBlock::new(10, 0.25, &mut rng)),
        Layer::Dense(Dense::kaiming(10, 3, &mut rng)),
    ]);

    // (label, network, wrt input, eval mode)
    let cases: Vec<(&str, Sequential, bool, bool)> = vec![
        ("dense/params", dense.clone(), false, false),
        ("dense/input", dense, true, false),
        ("batchnorm/params", batchnorm.clone(), false, false),
        ("batchnorm/input", batchnorm.clone(), true, false),
        ("batchnorm-eval/input", batchnorm, true, true),
        ("relu/input", relu, true, false),
        ("dropout/input", dropout, true, false),
        ("sigmoid/input", sigmoid, true, false),
        ("residual/params", residual.clone(), false, false),
        ("residual/input", residual, true, false),
    ];
    let config = GradCheckConfig::default();
    let mut worst = ("", 0.0f64);
    let mut pass_all = true;
    for (label, net, wrt_input, eval) in cases {
        let mut probe = NetProbe::new(net, input(8, 6, 302), 303, wrt_input).unwrap();
        if eval {
            probe = probe.eval_mode();
        }
        let err = check_gradients(&mut probe, &config).unwrap().max_relative_error();
        pass_all &= err < 1e-5;
        if err >= worst.1 {
            worst = (label, err);
        }
    }

    let topo = SkeletonTopology::default_topology();
    let data = TrainingSet::from_samples(&generate_synthetic(304, 6, PI, 5.0).unwrap(), &topo).unwrap();
    let cfg = ModelConfig {
        base_width: 24,
        base_blocks: 1,
        refiner_widths: [10, 12],
        disc_widths: vec![8, 6, 4],
        dropout: 0.25,
        coord_unit_mm: 100.0,
    };
    let stats = vipose::train::NormStats::fit(&data.inputs, &data.targets).unwrap();
    let mut pipe = vipose::Pipeline::new(topo, Scheme::ViHc, cfg, stats.clone(), 305).unwrap();
    let mut prng = ChaCha8Rng::seed_from_u64(306);
    for net in pipe.nets.generator_mut() {
        for p in net.params_mut() {
            p.value.mapv_inplace(|v| v + 0.02 * prng.random_range(-1.0..1.0));
        }
    }
    let x = stats.normalize_2d(&data.inputs).unwrap();
    let mut probe = PipelineProbe::new(pipe, x, 307).unwrap();
    let stack = check_gradients(&mut probe, &config).unwrap().max_relative_error();
    pass_all &= stack < 1e-5;

    let elapsed = start.elapsed();
    Outcome::new(
        pass_all && within(elapsed, 60.0),
        format!(
            "worst layer {} {:.2e}, VI-HC stack {stack:.2e}, {:.2}s",
            worst.0,
            worst.1,
            elapsed.as_secs_f64()
        ),
    )
}

fn metric_suite(topo: &SkeletonTopology) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(401);
    let j = topo.joint_count();
    let preds: Vec<Pose3D> = (0..50).map(|_| random_pose(&mut rng, j, 1.0)).collect();
    let gts: Vec<Pose3D> = (0..50).map(|_| random_pose(&mut rng, j, 1.0)).collect();
    let dist = |a: &Pose3D, b: &Pose3D, k: usize| {
        let d = a.joints()[k] - b.joints()[k];
        (d.x * d.x + d.y * d.y + d.z * d.z).sqrt()
    };
    let mut naive_mpjpe = 0.0;
    for (p, g) in preds.iter().zip(&gts) {
        for k in 0..j {
            naive_mpjpe += dist(p, g, k);
        }
    }
    naive_mpjpe /= (preds.len() * j) as f64;

    // Umeyama, written out independently of the library routine.
    let naive_align = |p: &Pose3D, g: &Pose3D| -> Pose3D {
        let n = j as f64;
        let mp = p.joints().iter().sum::<Vector3<f64>>() / n;
        let mg = g.joints().iter().sum::<Vector3<f64>>() / n;
        let mut cov = Matrix3::zeros();
        let mut var = 0.0;
        for k in 0..j {
            let a = p.joints()[k] - mp;
            let b = g.joints()[k] - mg;
            cov += b * a.transpose() / n;
            var += a.norm_squared() / n;
        }
        let svd = cov.svd(true, true);
        let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
        let mut d = Matrix3::identity();
        if (u * vt).determinant() < 0.0 {
            d[(2, 2)] = -1.0;
        }
        let r = u * d * vt;
        let s = (svd.singular_values[0] * d[(0, 0)] + svd.singular_values[1] * d[(1, 1)] + svd.singular_values[2] * d[(2, 2)]) / var;
        p.map(|x| s * (r * (x - mp)) + mg)
    };
    let mut naive_pa = 0.0;
    for (p, g) in preds.iter().zip(&gts) {
        let a = naive_align(p, g);
        for k in 0..j {
            naive_pa += dist(&a, g, k);
        }
    }
    naive_pa /= (preds.len() * j) as f64;

    let bones = topo.bones();
    let len = |p: &Pose3D, b: (usize, usize)| {
        let d = p.joints()[b.1] - p.joints()[b.0];
        (d.x * d.x + d.y * d.y + d.z * d.z).sqrt()
    };
    let n = preds.len() as f64;
    let naive_bone_error: Vec<f64> = bones
        .iter()
        .map(|&b| {
            preds
                .iter()
                .zip(&gts)
                .map(|(p, g)| {
                    let d = (p.joints()[b.1] - p.joints()[b.0]) - (g.joints()[b.1] - g.joints()[b.0]);
                    (d.x * d.x + d.y * d.y + d.z * d.z).sqrt()
                })
                .sum::<f64>()
                / n
        })
        .collect();
    let naive_bone_std: Vec<f64> = bones
        .iter()
        .map(|&b| {
            let mean = preds.iter().map(|p| len(p, b)).sum::<f64>() / n;
            (preds.iter().map(|p| (len(p, b) - mean).powi(2)).sum::<f64>() / n).sqrt()
        })
        .collect();
    let naive_symmetry: Vec<f64> = topo
        .limb_pairs()
        .iter()
        .map(|pair| preds.iter().map(|p| (len(p, bones[pair.left]) - len(p, bones[pair.right])).abs()).sum::<f64>() / n)
        .collect();

    let max_diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let diffs = [
        (metrics::mpjpe(&preds, &gts).unwrap() - naive_mpjpe).abs(),
        (metrics::pa_mpjpe(&preds, &gts).unwrap() - naive_pa).abs(),
        max_diff(&metrics::bone_error(&preds, &gts, topo).unwrap(), &naive_bone_error),
        max_diff(&metrics::bone_std(&preds, topo).unwrap(), &naive_bone_std),
        max_diff(&metrics::symmetry(&preds, topo).unwrap(), &naive_symmetry),
    ];
    let oracle = diffs.iter().copied().fold(0.0, f64::max);

    let base = Pose3D::new((0..j).map(|k| Vector3::new(k as f64, -2.0 * k as f64, 7.0)).collect()).unwrap();
    let offset = base.translated(&Vector3::new(3.0, 4.0, 0.0));
    let three_four_five = metrics::mpjpe(std::slice::from_ref(&offset), std::slice::from_ref(&base)).unwrap();
    let rigid: Vec<Pose3D> = (0..20).map(|_| random_rigid(&mut rng).apply(&gts[0])).collect();
    let rigid_std = metrics::bone_std(&rigid, topo).unwrap().into_iter().fold(0.0, f64::max);

    Outcome::new(
        oracle <= 1e-12 && three_four_five == 5.0 && rigid_std <= 1e-12,
        format!("oracle diff {oracle:.2e}, 3-4-5 offset {three_four_five}, rigid bone_std {rigid_std:.2e}"),
    )
}

/// Desk-scale training budget shared by the two trained criteria.
fn ablation_config() -> TrainConfig {
    TrainConfig {
        model: ModelConfig {
            base_width: 256,
            ..ModelConfig::default()
        },
        ..TrainConfig::default()
    }
}

fn synthetic_data(topo: &SkeletonTopology) -> TrainingSet {
    TrainingSet::from_samples(&generate_synthetic(11, 2500, PI, 5.0).unwrap(), topo).unwrap()
}

fn ablation_suite(topo: &SkeletonTopology) -> Outcome {
    let start = Instant::now();
    let data = synthetic_data(topo);
    let spec = SplitSpec::Ids {
        train: data.ids[..2000].to_vec(),
        test: data.ids[2000..].to_vec(),
    };
    let (train, test) = split_dataset(&data, &spec).unwrap();
    let schemes = [Scheme::Baseline, Scheme::Hc, Scheme::ViHc, Scheme::ViHcVid];
    let rows = run_ablation(&train, &test, topo, &ablation_config(), &schemes, &mut |_, _| {}).unwrap();
    let m: Vec<f64> = rows.iter().map(|r| r.report.mpjpe).collect();
    let (b, hc, vihc, vid) = (m[0], m[1], m[2], m[3]);
    let elapsed = start.elapsed();
    Outcome::new(
        vid < vihc && vihc < b && vihc < hc && within(elapsed, 900.0),
        format!(
            "MPJPE B {b:.3}, B+HC {hc:.3}, B+VI-HC {vihc:.3}, B+VI-HC-VID {vid:.3} mm, {:.0}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn held_out_view_suite(topo: &SkeletonTopology) -> Outcome {
    let start = Instant::now();
    let data = synthetic_data(topo);
    let spec = SplitSpec::Views {
        train: vec![0, 1, 2],
        test: vec![3],
    };
    let (train, test) = split_dataset(&data, &spec).unwrap();
    let rows = run_ablation(&train, &test, topo, &ablation_config(), &[Scheme::Baseline, Scheme::ViHcVid], &mut |_, _| {}).unwrap();
    let (b, full) = (rows[0].report.mpjpe, rows[1].report.mpjpe);
    let elapsed = start.elapsed();
    Outcome::new(
        full < b && within(elapsed, 900.0),
        format!(
            "train {} / test {}, MPJPE B {b:.3}, B+VI-HC-VID {full:.3} mm, {:.0}s",
            train.len(),
            test.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn lambda_decoupling_suite(topo: &SkeletonTopology) -> Outcome {
    let train = TrainingSet::from_samples(&generate_synthetic(701, 96, PI, 5.0).unwrap(), topo).unwrap();
    let cfg = TrainConfig {
        lambda: 0.0,
        batch_size: 16,
        pretrain_epochs: 2,
        epochs: 3,
        seed: 702,
        model: ModelConfig {
            base_width: 32,
            base_blocks: 1,
            refiner_widths: [16, 24],
            disc_widths: vec![16, 8],
            ..ModelConfig::default()
        },
        ..TrainConfig::default()
    };
    let run = |cfg: TrainConfig| -> Vec<u64> {
        let mut t = Trainer::from_data(&train, topo.clone(), Scheme::ViHcVid, cfg).unwrap();
        t.fit(&train, None, &mut |_| {}).unwrap();
        t.pipeline.nets.generator().iter().flat_map(|n| n.flat_params()).map(f64::to_bits).collect()
    };
    let with = run(cfg.clone());
    let without = run(TrainConfig {
        adversarial: false,
        ..cfg
    });
    let differing = with.iter().zip(&without).filter(|(a, b)| a != b).count();
    Outcome::new(
        with.len() == without.len() && differing == 0,
        format!("{} generator parameters, {differing} differ", with.len()),
    )
}

type Criterion<'a> = Box<dyn Fn() -> Outcome + 'a>;

fn main() -> ExitCode {
    // libtest flags such as --nocapture are ignored; other arguments select
    // criteria by substring.
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let filters: Vec<&String> = args.iter().filter(|a| !a.starts_with('-')).collect();
    let topo = SkeletonTopology::default_topology();
    let criteria: Vec<(&str, Criterion)> = vec![
        ("1 geometry", Box::new(|| geometry_suite(&topo))),
        ("2 procrustes", Box::new(|| procrustes_suite(&topo))),
        ("3 gradients", Box::new(gradient_suite)),
        ("4 metric oracles", Box::new(|| metric_suite(&topo))),
        ("5 synthetic ablation", Box::new(|| ablation_suite(&topo))),
        ("6 held-out view", Box::new(|| held_out_view_suite(&topo))),
        ("7 lambda decoupling", Box::new(|| lambda_decoupling_suite(&topo))),
    ];
    let selected: Vec<_> = criteria
        .iter()
        .filter(|(name, _)| filters.is_empty() || filters.iter().any(|f| name.contains(f.as_str())))
        .collect();
    let mut failed = 0;
    for (name, run) in &selected {
        let outcome = run();
        failed += !outcome.pass as usize;
        println!("criterion {name}: {} ({})", if outcome.pass { "PASS" } else { "FAIL" }, outcome.detail);
    }
    println!("acceptance: {}/{} passed", selected.len() - failed, selected.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
