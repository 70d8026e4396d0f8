//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line per
//! criterion and exits non-zero if any of them failed.
//!
//! The oracles here are deliberately written without the library's own
//! helpers: scalar loops for the error metrics, Horn's quaternion method for
//! similarity alignment and a search-plus-Newton solve for yaw alignment.

use std::sync::OnceLock;
use std::time::{Duration, Instant};

use mocap_lift::diffusion::{
    make_schedule, train, DenoiserModel, ModelConfig, ModelMode, MotionLayout, OracleDenoiser, ScheduleKind, Stage,
    TrainConfig, TrainLog, TrainingSet,
};
use mocap_lift::geometry::{project_rig, triangulate};
use mocap_lift::lifting::{consistency_project, lift, reprojection_residual};
use mocap_lift::metrics::{
    abs_mpjpe, accel_error, foot_sliding, jitter, mpjpe, pa_mpjpe, procrustes, t_root, w_mpjpe, wa_mpjpe, MpjpeMode,
    CONTACT_HEIGHT,
};
use mocap_lift::motion::{GlobalMotion2D, Motion3};
use mocap_lift::refine::{bone_jacobian, bone_lengths, bone_residuals, fit_skeleton, FitConfig};
use mocap_lift::representation::{decode, encode};
use mocap_lift::synth::{build_samples, generate_motion, rigid_transform, AugmentParams, DatasetSpec, MotionKind, Sample};
use mocap_lift::Skeleton;
use nalgebra::{Matrix3, Matrix4, Rotation3, UnitQuaternion, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

// Toy-scale ablations (criteria 7 and 8) train on the same 2000-sample,
// 16-frame set as criterion 6, for a fixed equal budget per run.
const ABLATION_TRAIN: usize = 2000;
const ABLATION_EPOCHS: usize = 5;
const ABLATION_HELD_OUT: usize = 8;
const ABLATION_FRAMES: usize = 16;
const SEEDS: [u64; 3] = [1, 2, 3];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Default rig, no camera augmentation, random body yaw and translation.
fn fixed_rig_spec(count: usize, frames: usize, seed: u64) -> DatasetSpec {
    let mut spec = DatasetSpec::new(count, frames, seed);
    spec.augment = AugmentParams {
        cam_pitch_range: 0.0,
        cam_yaw_range: 0.0,
        cam_roll_range: 0.0,
        cam_distance_range: 0.0,
        ..spec.augment
    };
    spec
}

// ---------------------------------------------------------------- oracles

fn loop_abs(p: &Motion3<f64>, g: &Motion3<f64>) -> f64 {
    let mut s = 0.0;
    for t in 0..p.frames() {
        for j in 0..p.joints() {
            let (a, b) = (p.at(t, j), g.at(t, j));
            s += ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
        }
    }
    1000.0 * s / (p.frames() * p.joints()) as f64
}

fn loop_root_aligned(p: &Motion3<f64>, g: &Motion3<f64>, root: usize) -> f64 {
    let mut s = 0.0;
    for t in 0..p.frames() {
        for j in 0..p.joints() {
            let mut d2 = 0.0;
            for k in 0..3 {
                let d = (p.at(t, j)[k] - p.at(t, root)[k]) - (g.at(t, j)[k] - g.at(t, root)[k]);
                d2 += d * d;
            }
            s += d2.sqrt();
        }
    }
    1000.0 * s / (p.frames() * p.joints()) as f64
}

/// Horn's closed form: rotation from the top eigenvector of the 4×4
/// quaternion matrix, then the least-squares scale and translation.
fn horn_similarity(x: &[Vector3<f64>], y: &[Vector3<f64>]) -> (Matrix3<f64>, Vector3<f64>, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<Vector3<f64>>() / n;
    let my = y.iter().sum::<Vector3<f64>>() / n;
    let mut s = [[0.0; 3]; 3];
    let mut sxx = 0.0;
    for (a, b) in x.iter().zip(y) {
        let (a, b) = (a - mx, b - my);
        for i in 0..3 {
            for k in 0..3 {
                s[i][k] += a[i] * b[k];
            }
        }
        sxx += a.norm_squared();
    }
    let (xx, xy, xz) = (s[0][0], s[0][1], s[0][2]);
    let (yx, yy, yz) = (s[1][0], s[1][1], s[1][2]);
    let (zx, zy, zz) = (s[2][0], s[2][1], s[2][2]);
    let nm = Matrix4::new(
        xx + yy + zz, yz - zy, zx - xz, xy - yx,
        yz - zy, xx - yy - zz, xy + yx, zx + xz,
        zx - xz, xy + yx, -xx + yy - zz, yz + zy,
        xy - yx, zx + xz, yz + zy, -xx - yy + zz,
    );
    let eig = nm.symmetric_eigen();
    let best = (0..4).max_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b])).unwrap();
    let q = eig.eigenvectors.column(best);
    let r = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]))
        .to_rotation_matrix()
        .into_inner();
    let mut num = 0.0;
    for (a, b) in x.iter().zip(y) {
        num += (r * (a - mx)).dot(&(b - my));
    }
    let scale = num / sxx;
    (r, my - r * mx * scale, scale)
}

fn loop_pa(p: &Motion3<f64>, g: &Motion3<f64>) -> f64 {
    let mut s = 0.0;
    for t in 0..p.frames() {
        let (r, tr, sc) = horn_similarity(p.frame(t), g.frame(t));
        for j in 0..p.joints() {
            s += (r * p.at(t, j) * sc + tr - g.at(t, j)).norm();
        }
    }
    1000.0 * s / (p.frames() * p.joints()) as f64
}

/// Yaw minimizing the squared error after centering, by a dense search
/// followed by Newton steps on the one-dimensional objective.
fn oracle_yaw_fit(x: &[Vector3<f64>], y: &[Vector3<f64>]) -> (f64, Vector3<f64>) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<Vector3<f64>>() / n;
    let my = y.iter().sum::<Vector3<f64>>() / n;
    let cost = |th: f64| {
        let (s, c) = th.sin_cos();
        x.iter()
            .zip(y)
            .map(|(a, b)| {
                let (ax, ay) = (a[0] - mx[0], a[1] - mx[1]);
                let (bx, by) = (b[0] - my[0], b[1] - my[1]);
                (c * ax - s * ay - bx).powi(2) + (s * ax + c * ay - by).powi(2)
            })
            .sum::<f64>()
    };
    let mut th = (0..7200)
        .map(|i| -std::f64::consts::PI + i as f64 * std::f64::consts::TAU / 7200.0)
        .min_by(|a, b| cost(*a).total_cmp(&cost(*b)))
        .unwrap();
    for _ in 0..50 {
        let h = 1e-4;
        let d1 = (cost(th + h) - cost(th - h)) / (2.0 * h);
        let d2 = (cost(th + h) - 2.0 * cost(th) + cost(th - h)) / (h * h);
        if d2 <= 0.0 {
            break;
        }
        let step = d1 / d2;
        th -= step;
        if step.abs() < 1e-15 {
            break;
        }
    }
    let r = Rotation3::from_axis_angle(&Vector3::z_axis(), th);
    (th, my - r * mx)
}

fn loop_yaw_aligned(p: &Motion3<f64>, g: &Motion3<f64>, fit_frames: usize) -> f64 {
    let k = fit_frames * p.joints();
    let (th, tr) = oracle_yaw_fit(&p.coords()[..k], &g.coords()[..k]);
    let r = Rotation3::from_axis_angle(&Vector3::z_axis(), th);
    loop_abs(&p.map(|q| r * q + tr), g)
}

fn loop_t_root(p: &Motion3<f64>, g: &Motion3<f64>, root: usize) -> f64 {
    let mut s = 0.0;
    for t in 0..p.frames() {
        let (a, b) = (p.at(t, root), g.at(t, root));
        s += ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
    }
    1000.0 * s / p.frames() as f64
}

fn loop_accel(p: &Motion3<f64>, g: &Motion3<f64>) -> f64 {
    let mut s = 0.0;
    for t in 1..p.frames() - 1 {
        for j in 0..p.joints() {
            let mut d2 = 0.0;
            for k in 0..3 {
                let ap = p.at(t - 1, j)[k] - 2.0 * p.at(t, j)[k] + p.at(t + 1, j)[k];
                let ag = g.at(t - 1, j)[k] - 2.0 * g.at(t, j)[k] + g.at(t + 1, j)[k];
                d2 += (ap - ag).powi(2);
            }
            s += d2.sqrt();
        }
    }
    1000.0 * s / ((p.frames() - 2) * p.joints()) as f64
}

fn loop_jitter(p: &Motion3<f64>) -> f64 {
    let mut s = 0.0;
    for t in 0..p.frames() - 3 {
        for j in 0..p.joints() {
            let mut d2 = 0.0;
            for k in 0..3 {
                let d = p.at(t + 3, j)[k] - 3.0 * p.at(t + 2, j)[k] + 3.0 * p.at(t + 1, j)[k] - p.at(t, j)[k];
                d2 += d * d;
            }
            s += d2.sqrt();
        }
    }
    1000.0 * s / ((p.frames() - 3) * p.joints()) as f64
}

fn loop_fs(p: &Motion3<f64>, feet: &[usize], h: f64) -> f64 {
    let (mut s, mut n) = (0.0, 0);
    for &j in feet {
        for t in 0..p.frames() - 1 {
            if p.at(t, j)[2] < h && p.at(t + 1, j)[2] < h {
                s += ((p.at(t + 1, j)[0] - p.at(t, j)[0]).powi(2) + (p.at(t + 1, j)[1] - p.at(t, j)[1]).powi(2)).sqrt();
                n += 1;
            }
        }
    }
    if n == 0 {
        0.0
    } else {
        1000.0 * s / n as f64
    }
}

// ---------------------------------------------------------------- criteria

fn c1_geometric_exactness() -> Outcome {
    let start = Instant::now();
    let samples = build_samples(&fixed_rig_spec(50, 32, 101)).unwrap();
    let mut worst: f64 = 0.0;
    for s in &samples {
        let views = project_rig(&s.rig, &s.motion).unwrap();
        let m = triangulate(&s.rig, &views, None).unwrap();
        worst = worst.max(abs_mpjpe(&m, &s.motion).unwrap() / 1000.0);
    }
    let elapsed = start.elapsed();
    outcome(
        worst < 1e-6 && elapsed < Duration::from_secs(5),
        format!("max Abs-MPJPE {worst:.2e} m over 50 motions, {:.2} s", elapsed.as_secs_f64()),
    )
}

fn c2_representation_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (frames, joints) = (1000, 8);
    let mut coords = Vec::with_capacity(frames * joints);
    let mut degenerate = 0;
    for t in 0..frames {
        if t % 10 == 0 {
            let p = Vector2::new(rng.random_range(0.0..1000.0), rng.random_range(0.0..1000.0));
            coords.extend(std::iter::repeat_n(p, joints));
            degenerate += 1;
        } else {
            for _ in 0..joints {
                coords.push(Vector2::new(rng.random_range(-200.0..1200.0), rng.random_range(-200.0..1200.0)));
            }
        }
    }
    let m = GlobalMotion2D::new(frames, joints, coords, 0, 30.0).unwrap();
    let mut worst: f64 = 0.0;
    let mut root_exact = true;
    for root in [0, 3] {
        let back = decode(&encode(&m, root).unwrap()).unwrap();
        worst = worst.max(back.max_abs_diff(&m));
        root_exact &= (0..frames).all(|t| back.at(t, root) == m.at(t, root));
    }
    outcome(
        worst < 1e-9 && root_exact,
        format!("max error {worst:.2e} px on {frames} frames ({degenerate} coincident), root exact: {root_exact}"),
    )
}

fn c3_oracle_end_to_end() -> Outcome {
    let samples = build_samples(&DatasetSpec::new(3, 32, 303)).unwrap();
    let schedule = make_schedule(100, ScheduleKind::Cosine).unwrap();
    let layout = MotionLayout::new(8, 0, true).unwrap();
    let (mut err, mut res, mut slowest): (f64, f64, Duration) = (0.0, 0.0, Duration::ZERO);
    for s in &samples {
        let oracle = OracleDenoiser::new(layout.encode(&s.views, &s.rig).unwrap(), layout);
        let start = Instant::now();
        let r = lift(&s.views[s.rig.primary_index], &s.rig, &oracle, &schedule, 7).unwrap();
        slowest = slowest.max(start.elapsed());
        err = err.max(abs_mpjpe(&r.motion3d, &s.motion).unwrap() / 1000.0);
        res = res.max(r.per_step_residuals.iter().cloned().fold(0.0, f64::max));
    }
    outcome(
        err < 1e-6 && res < 1e-9 && slowest < Duration::from_secs(30),
        format!(
            "Abs-MPJPE {err:.2e} m, max residual {res:.2e} px, slowest {:.2} s per sequence",
            slowest.as_secs_f64()
        ),
    )
}

fn c4_consistency_idempotence() -> Outcome {
    let samples = build_samples(&DatasetSpec::new(100, 8, 404)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let noise = Normal::new(0.0, 5.0).unwrap();
    let (mut worst_rep, mut worst_3d): (f64, f64) = (0.0, 0.0);
    let mut resid: f64 = 0.0;
    for s in &samples {
        let views: Vec<_> = s
            .views
            .iter()
            .map(|v| {
                let c = v.coords().iter().map(|p| p + Vector2::new(noise.sample(&mut rng), noise.sample(&mut rng))).collect();
                GlobalMotion2D::new(v.frames(), v.joints(), c, v.view_index, v.fps).unwrap()
            })
            .collect();
        let enc: Vec<_> = views.iter().map(|v| encode(v, 0).unwrap()).collect();
        let (m1, once) = consistency_project(&s.rig, &enc).unwrap();
        let (m2, twice) = consistency_project(&s.rig, &once).unwrap();
        for (a, b) in once.iter().zip(&twice) {
            worst_rep = worst_rep.max(a.max_abs_diff(b));
        }
        worst_3d = worst_3d.max(m1.max_abs_diff(&m2));
        let dec: Vec<_> = once.iter().map(|d| decode(d).unwrap()).collect();
        resid = resid.max(reprojection_residual(&s.rig, &dec).unwrap());
    }
    outcome(
        worst_rep < 1e-9 && worst_3d < 1e-9,
        format!("100 trials: representation Δ {worst_rep:.2e}, 3D Δ {worst_3d:.2e} m, residual after one pass {resid:.2e} px"),
    )
}

fn random_pair(rng: &mut ChaCha8Rng, i: usize) -> (Motion3<f64>, Motion3<f64>) {
    let sk = Skeleton::toy8();
    let kind = MotionKind::ALL[i % 4];
    let gt = generate_motion(&sk, kind, 12, 1000 + i as u64, 30.0).unwrap();
    let yaw = rng.random_range(-0.5..0.5);
    let moved = rigid_transform(&gt, yaw, rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3));
    let sigma = rng.random_range(0.005..0.08);
    let n = Normal::new(0.0, sigma).unwrap();
    let mut pred = moved;
    for p in pred.coords_mut() {
        *p += Vector3::new(n.sample(rng), n.sample(rng), n.sample(rng));
    }
    (pred, gt)
}

fn c5_metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let feet = Skeleton::toy8().foot_joints;
    let mut worst: f64 = 0.0;
    let mut chain = true;
    for i in 0..100 {
        let (p, g) = random_pair(&mut rng, i);
        let pairs = [
            (mpjpe(&p, &g, MpjpeMode::None).unwrap(), loop_abs(&p, &g)),
            (mpjpe(&p, &g, MpjpeMode::RootAligned { root: 0 }).unwrap(), loop_root_aligned(&p, &g, 0)),
            (pa_mpjpe(&p, &g).unwrap(), loop_pa(&p, &g)),
            (w_mpjpe(&p, &g).unwrap(), loop_yaw_aligned(&p, &g, 2)),
            (wa_mpjpe(&p, &g).unwrap(), loop_yaw_aligned(&p, &g, p.frames())),
            (t_root(&p, &g, 0).unwrap(), loop_t_root(&p, &g, 0)),
            (accel_error(&p, &g).unwrap(), loop_accel(&p, &g)),
            (jitter(&p).unwrap(), loop_jitter(&p)),
            (foot_sliding(&p, &feet, CONTACT_HEIGHT).unwrap(), loop_fs(&p, &feet, CONTACT_HEIGHT)),
        ];
        for (a, b) in pairs {
            worst = worst.max((a - b).abs());
        }
        chain &= pairs[2].0 <= pairs[1].0 && pairs[4].0 <= pairs[0].0;
    }

    // Randomized optimality: no sampled similarity beats the closed form.
    let mut beaten = 0usize;
    let mut tried = 0usize;
    for c in 0..20 {
        let k = 6 + c % 10;
        let x: Vec<Vector3<f64>> = (0..k).map(|_| Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0))).collect();
        let y: Vec<Vector3<f64>> = (0..k).map(|_| Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0))).collect();
        let best = procrustes(&x, &y, true).unwrap();
        let sse = |r: &Matrix3<f64>, t: &Vector3<f64>, s: f64| -> f64 {
            x.iter().zip(&y).map(|(a, b)| (r * a * s + t - b).norm_squared()).sum()
        };
        let optimum = sse(&best.rotation, &best.translation, best.scale);
        for i in 0..100_000 {
            let (r, t, s) = if i % 2 == 0 {
                let q = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(
                    StandardNormal.sample(&mut rng),
                    StandardNormal.sample(&mut rng),
                    StandardNormal.sample(&mut rng),
                    StandardNormal.sample(&mut rng),
                ));
                (
                    q.to_rotation_matrix().into_inner(),
                    Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0)),
                    rng.random_range(0.0..2.0),
                )
            } else {
                let w = Vector3::from_fn(|_, _| rng.random_range(-1e-3..1e-3));
                (
                    Rotation3::new(w).into_inner() * best.rotation,
                    best.translation + Vector3::from_fn(|_, _| rng.random_range(-1e-3..1e-3)),
                    best.scale + rng.random_range(-1e-3..1e-3),
                )
            };
            tried += 1;
            if sse(&r, &t, s) < optimum - 1e-12 {
                beaten += 1;
            }
        }
    }
    outcome(
        worst < 1e-9 && beaten == 0 && chain,
        format!(
            "max |metric − oracle| {worst:.2e} mm over 100 pairs; Procrustes beaten {beaten}/{tried} times; ordering chain {}",
            if chain { "holds" } else { "violated" }
        ),
    )
}

fn toy_layout(decouple: bool, samples: &[Sample]) -> MotionLayout {
    MotionLayout::new(8, 0, decouple).unwrap().fitted(samples).unwrap()
}

fn c6_training_convergence() -> Outcome {
    let start = Instant::now();
    let samples = build_samples(&DatasetSpec::new(2000, 16, 606)).unwrap();
    let layout = toy_layout(true, &samples);
    let data = TrainingSet::from_samples(&samples, layout).unwrap();
    let cfg = ModelConfig::new(layout, ModelMode::MultiView, true);
    assert_eq!((cfg.width, cfg.blocks), (64, 4));
    let run = |epochs: usize, target: Option<f64>| -> TrainLog {
        let mut model = DenoiserModel::<f32>::new(cfg.clone(), 6).unwrap();
        let mut tc = TrainConfig::new(Stage::FinetuneMv, epochs, 6);
        tc.target_ratio = target;
        train(&mut model, &data, &tc).unwrap()
    };
    let log = run(200, Some(0.2));
    let reached = log.epochs_to(0.2 * log.initial_probe_loss);
    let repeat = run(log.epochs.len().min(2), None);
    let reproducible = repeat.initial_probe_loss.to_bits() == log.initial_probe_loss.to_bits()
        && repeat.epochs.iter().zip(&log.epochs).all(|(a, b)| {
            a.train_loss.to_bits() == b.train_loss.to_bits() && a.probe_loss.to_bits() == b.probe_loss.to_bits()
        });
    let elapsed = start.elapsed();
    outcome(
        reached.is_some() && reproducible && elapsed < Duration::from_secs(3600),
        format!(
            "initial {:.4}, final {:.4} ({:.1}%), 20% reached at epoch {:?}; rerun bit-identical: {reproducible}; {:.0} s",
            log.initial_probe_loss,
            log.final_probe_loss(),
            100.0 * log.final_probe_loss() / log.initial_probe_loss,
            reached,
            elapsed.as_secs_f64()
        ),
    )
}

fn ablation_config(layout: MotionLayout, pointmaps: bool) -> ModelConfig {
    ModelConfig::new(layout, ModelMode::MultiView, pointmaps)
}

fn train_toy(data: &TrainingSet, pointmaps: bool, seed: u64) -> (DenoiserModel<f32>, TrainLog) {
    let mut model = DenoiserModel::<f32>::new(ablation_config(data.layout, pointmaps), seed).unwrap();
    let tc = TrainConfig::new(Stage::FinetuneMv, ABLATION_EPOCHS, seed);
    let log = train(&mut model, data, &tc).unwrap();
    (model, log)
}

fn ablation_samples() -> &'static [Sample] {
    static SAMPLES: OnceLock<Vec<Sample>> = OnceLock::new();
    SAMPLES.get_or_init(|| build_samples(&DatasetSpec::new(ABLATION_TRAIN, ABLATION_FRAMES, 707)).unwrap())
}

/// Decoupled models with pointmaps, one per seed. Both ablations use them.
fn reference_runs() -> &'static [(DenoiserModel<f32>, TrainLog)] {
    static RUNS: OnceLock<Vec<(DenoiserModel<f32>, TrainLog)>> = OnceLock::new();
    RUNS.get_or_init(|| {
        let data = TrainingSet::from_samples(ablation_samples(), toy_layout(true, ablation_samples())).unwrap();
        SEEDS.iter().map(|&seed| train_toy(&data, true, seed)).collect()
    })
}

fn c7_decoupling_direction() -> Outcome {
    let held_out = build_samples(&DatasetSpec::new(ABLATION_HELD_OUT, ABLATION_FRAMES, 7070)).unwrap();
    let direct = TrainingSet::from_samples(ablation_samples(), toy_layout(false, ablation_samples())).unwrap();
    let mut medians = Vec::new();
    let mut report = Vec::new();
    for decouple in [true, false] {
        let (mut per_seed, mut abs_per_seed) = (Vec::new(), Vec::new());
        for (i, seed) in SEEDS.into_iter().enumerate() {
            let trained;
            let model = if decouple {
                &reference_runs()[i].0
            } else {
                trained = train_toy(&direct, true, seed).0;
                &trained
            };
            let schedule = make_schedule(model.config.steps, model.config.schedule).unwrap();
            let (mut rel, mut abs) = (0.0, 0.0);
            for s in &held_out {
                let r = lift(&s.views[s.rig.primary_index], &s.rig, model, &schedule, seed).unwrap();
                rel += mpjpe(&r.motion3d, &s.motion, MpjpeMode::RootAligned { root: 0 }).unwrap();
                abs += abs_mpjpe(&r.motion3d, &s.motion).unwrap();
            }
            per_seed.push(rel / held_out.len() as f64);
            abs_per_seed.push(abs / held_out.len() as f64);
        }
        report.push(format!(
            "{}: {:.1} mm (seeds {:.1?}; Abs-MPJPE median {:.1})",
            if decouple { "decoupled" } else { "direct" },
            median(per_seed.clone()),
            per_seed,
            median(abs_per_seed)
        ));
        medians.push(median(per_seed));
    }
    outcome(medians[0] < medians[1], format!("median held-out MPJPE {}", report.join(" vs ")))
}

fn c8_pointmap_direction() -> Outcome {
    let data = TrainingSet::from_samples(ablation_samples(), toy_layout(true, ablation_samples())).unwrap();
    let (mut off_epochs, mut on_epochs) = (Vec::new(), Vec::new());
    for (i, seed) in SEEDS.into_iter().enumerate() {
        let (_, off) = train_toy(&data, false, seed);
        let on = &reference_runs()[i].1;
        let target = off.final_probe_loss();
        let never = (ABLATION_EPOCHS + 1) as f64;
        off_epochs.push(off.epochs_to(target).map_or(never, |e| e as f64));
        on_epochs.push(on.epochs_to(target).map_or(never, |e| e as f64));
    }
    let (m_on, m_off) = (median(on_epochs.clone()), median(off_epochs.clone()));
    outcome(
        m_on < m_off,
        format!(
            "median epochs to the off-run's final loss: on {m_on} {on_epochs:?} vs off {m_off} {off_epochs:?} \
             ({} = not reached)",
            ABLATION_EPOCHS + 1
        ),
    )
}

fn c9_refinement() -> Outcome {
    let sk = Skeleton::toy8();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let noise = Normal::new(0.0, 0.01).unwrap();
    let (mut improved, mut worst_dev, mut monotone) = (true, 0.0f64, true);
    let mut rmses = Vec::new();
    for (i, kind) in MotionKind::ALL.iter().enumerate() {
        let gt = generate_motion(&sk, *kind, 30, 90 + i as u64, 30.0).unwrap();
        let mut w = gt.clone();
        for p in w.coords_mut() {
            *p += Vector3::new(noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng));
        }
        let out = fit_skeleton(&w, &sk, &FitConfig::default()).unwrap();
        let rmse = |m: &Motion3<f64>| {
            (m.coords().iter().zip(gt.coords()).map(|(a, b)| (a - b).norm_squared()).sum::<f64>() / m.coords().len() as f64).sqrt()
        };
        let (before, after) = (rmse(&w), rmse(&out.motion));
        rmses.push((before, after));
        improved &= after < before;
        monotone &= out.costs.windows(2).all(|c| c[1] <= c[0]);
        for t in 0..gt.frames() {
            for (j, l) in bone_lengths(out.motion.frame(t), &sk).iter().enumerate() {
                if sk.parent[j] != j {
                    worst_dev = worst_dev.max((l - sk.rest_bone_lengths[j]).abs() / sk.rest_bone_lengths[j]);
                }
            }
        }
    }
    let mut jac_err: f64 = 0.0;
    for _ in 0..20 {
        let frame: Vec<Vector3<f64>> = (0..8).map(|_| Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0))).collect();
        let jac = bone_jacobian(&frame, &sk);
        let h = 1e-6;
        for c in 0..24 {
            let (mut plus, mut minus) = (frame.clone(), frame.clone());
            plus[c / 3][c % 3] += h;
            minus[c / 3][c % 3] -= h;
            let (rp, rm) = (bone_residuals(&plus, &sk), bone_residuals(&minus, &sk));
            for r in 0..rp.len() {
                let fd = (rp[r] - rm[r]) / (2.0 * h);
                jac_err = jac_err.max((fd - jac[(r, c)]).abs() / jac[(r, c)].abs().max(1.0));
            }
        }
    }
    outcome(
        improved && worst_dev < 0.01 && monotone && jac_err < 1e-5,
        format!(
            "RMSE before/after (mm) {:?}; max bone deviation {:.3}%; cost non-increasing: {monotone}; Jacobian rel. error {jac_err:.1e}",
            rmses.iter().map(|(a, b)| format!("{:.2}/{:.2}", a * 1e3, b * 1e3)).collect::<Vec<_>>(),
            worst_dev * 100.0
        ),
    )
}

fn c10_gravity_aligned_metrics() -> Outcome {
    let sk = Skeleton::toy8();
    let gt = generate_motion(&sk, MotionKind::Walker, 32, 10, 30.0).unwrap();
    let pred = rigid_transform(&gt, 30f64.to_radians(), 0.6, 0.8);
    let (w, wa, abs) = (w_mpjpe(&pred, &gt).unwrap(), wa_mpjpe(&pred, &gt).unwrap(), abs_mpjpe(&pred, &gt).unwrap());
    outcome(
        w < 1e-9 && wa < 1e-9 && abs > 500.0,
        format!("W-MPJPE {w:.1e} mm, WA-MPJPE {wa:.1e} mm, Abs-MPJPE {abs:.1} mm"),
    )
}

/// Name, check and whether the criterion is soft (reported but not gating).
type Criterion = (&'static str, fn() -> Outcome, bool);

fn main() {
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let criteria: [Criterion; 10] = [
        ("1 geometric exactness", c1_geometric_exactness, false),
        ("2 representation exactness", c2_representation_exactness, false),
        ("3 oracle end-to-end lift", c3_oracle_end_to_end, false),
        ("4 consistency idempotence", c4_consistency_idempotence, false),
        ("5 metric oracle equivalence", c5_metric_oracles, false),
        ("6 toy training convergence", c6_training_convergence, false),
        ("7 decoupling ablation direction", c7_decoupling_direction, false),
        ("8 pointmap convergence direction", c8_pointmap_direction, true),
        ("9 skeleton refinement", c9_refinement, false),
        ("10 gravity-aligned metrics", c10_gravity_aligned_metrics, false),
    ];
    let mut failed = Vec::new();
    for (name, f, soft) in criteria {
        if filter.as_deref().is_some_and(|p| !name.contains(p)) {
            continue;
        }
        let start = Instant::now();
        let o = f();
        let verdict = match (o.pass, soft) {
            (true, _) => "PASS",
            (false, false) => "FAIL",
            (false, true) => "FAIL (soft, not gating)",
        };
        println!("criterion {name}: {verdict} ({:.1} s) {}", start.elapsed().as_secs_f64(), o.detail);
        if !o.pass && !soft {
            failed.push(name);
        }
    }
    if !failed.is_empty() {
        println!("failed: {}", failed.join(", "));
        std::process::exit(1);
    }
}
