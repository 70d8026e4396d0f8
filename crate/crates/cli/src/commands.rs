use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use mocap_lift::diffusion::checkpoint;
use mocap_lift::diffusion::{
    make_schedule, train_with, Denoiser, DenoiserModel, ModelMode, OracleDenoiser, Stage, TrainConfig, TrainingSet,
};
use mocap_lift::geometry::{project_rig, rig_from_json};
use mocap_lift::io::{read_motion, read_motion2d, read_text, write_atomic, write_motion, write_motion2d};
use mocap_lift::lifting::lift as lift_motion;
use mocap_lift::metrics::{evaluate_all, EvalOptions, MetricsReport, CSV_HEADER};
use mocap_lift::refine::fit_skeleton;
use mocap_lift::synth::{build_dataset, check_sample, load_dataset};
use mocap_lift::{Error, Skeleton};

use crate::config::PipelineConfig;
use crate::Failure;

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const LOSS_FILE: &str = "loss.csv";

pub enum Source {
    Checkpoint(PathBuf),
    Oracle(PathBuf),
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e).into())
}

pub fn synth(c: &PipelineConfig) -> Result<(), Failure> {
    let spec = c.dataset_spec()?;
    let s = build_dataset(&spec, &c.out)?;
    println!(
        "wrote {} samples ({} frames, {} joints, {} views) to {}",
        s.count,
        s.frames,
        s.joints,
        s.views,
        c.out.display()
    );
    println!("world extent {:?} .. {:?} m", s.world_min, s.world_max);
    println!("pixel extent {:?} .. {:?} px", s.pixel_min, s.pixel_max);
    Ok(())
}

pub fn train(c: &PipelineConfig, pretrain: bool, data: &Path, init_from: Option<&Path>) -> Result<(), Failure> {
    let (manifest, samples) = load_dataset(data)?;
    let skeleton = Skeleton::by_name(&manifest.skeleton)?;
    let layout = c.layout(&skeleton)?.fitted(&samples)?;
    let mut set = TrainingSet::from_samples(&samples, layout)?;
    let (stage, mut model) = if pretrain {
        if init_from.is_some() {
            return Err(Failure::Usage("--init-from applies to fine-tuning only".into()));
        }
        (Stage::Pretrain2d, DenoiserModel::<f32>::new(c.model_config(layout, ModelMode::SingleView), c.seed)?)
    } else if let Some(path) = init_from {
        let pre = checkpoint::load::<f32>(path)?;
        if !pre.config.layout.same_structure(&layout) {
            return Err(Error::DatasetModeMismatch(format!(
                "checkpoint layout {:?} does not match dataset layout {:?}",
                pre.config.layout, layout
            ))
            .into());
        }
        // Keep the row statistics the pretrained model was trained with.
        set = TrainingSet::from_samples(&samples, pre.config.layout)?;
        let cfg = pre.config.to_multi_view(c.diffusion.pointmaps);
        (Stage::FinetuneMv, DenoiserModel::from_pretrained(&pre, cfg, c.seed)?)
    } else {
        (Stage::FinetuneMv, DenoiserModel::<f32>::new(c.model_config(layout, ModelMode::MultiView), c.seed)?)
    };
    let t = &c.train;
    let cfg = TrainConfig {
        stage,
        epochs: t.epochs,
        batch_size: t.batch_size,
        lr: t.lr,
        momentum: t.momentum,
        clip_norm: t.clip_norm,
        seed: c.seed,
        probe_samples: t.probe_samples,
        target_ratio: t.target_ratio,
    };
    let log = train_with(&mut model, &set, &cfg, |e| {
        println!("epoch {:4}  train {:.6}  probe {:.6}  |g| {:.3}", e.epoch, e.train_loss, e.probe_loss, e.grad_norm);
    })?;
    create_dir(&c.out)?;
    checkpoint::save(&model, &c.out.join(CHECKPOINT_FILE))?;
    write_atomic(&c.out.join(LOSS_FILE), log.to_csv().as_bytes())?;
    println!(
        "initial probe loss {:.6}, final {:.6}; checkpoint {}",
        log.initial_probe_loss,
        log.final_probe_loss(),
        c.out.join(CHECKPOINT_FILE).display()
    );
    Ok(())
}

pub fn lift(c: &PipelineConfig, input: &Path, source: &Source, fit: bool) -> Result<(), Failure> {
    let (m0, names) = read_motion2d(input)?;
    let rig = c.rig()?;
    let skeleton = c.skeleton()?;
    let (denoiser, schedule): (Box<dyn Denoiser>, _) = match source {
        Source::Checkpoint(path) => {
            let model = checkpoint::load::<f32>(path)?;
            let schedule = make_schedule(model.config.steps, model.config.schedule)?;
            (Box::new(model), schedule)
        }
        Source::Oracle(path) => {
            let (gt, _) = read_motion(path)?;
            let layout = if gt.joints() == skeleton.joint_count() {
                c.layout(&skeleton)?
            } else {
                mocap_lift::diffusion::MotionLayout::new(gt.joints(), 0, c.diffusion.decouple)?
            };
            let tensor = layout.encode(&project_rig(&rig, &gt)?, &rig)?;
            let schedule = make_schedule(c.diffusion.steps, c.diffusion.schedule)?;
            (Box::new(OracleDenoiser::new(tensor, layout)), schedule)
        }
    };
    let result = lift_motion(&m0, &rig, denoiser.as_ref(), &schedule, c.seed)?;
    create_dir(&c.out)?;
    write_motion(&c.out.join("motion3d.json"), &result.motion3d, &names)?;
    for (v, view) in result.per_view_2d.iter().enumerate() {
        write_motion2d(&c.out.join(format!("view_{v}.json")), view, &names)?;
    }
    let mut csv = String::from("iteration,step,residual_px,raw_residual_px\n");
    let steps = result.per_step_residuals.len();
    for (i, (r, raw)) in result.per_step_residuals.iter().zip(&result.raw_residuals).enumerate() {
        let _ = writeln!(csv, "{i},{},{r:e},{raw:e}", steps - 1 - i);
    }
    write_atomic(&c.out.join("residuals.csv"), csv.as_bytes())?;
    if fit {
        if result.motion3d.joints() != skeleton.joint_count() {
            return Err(Error::ShapeMismatch(format!(
                "--fit needs a {}-joint motion for skeleton {}",
                skeleton.joint_count(),
                skeleton.name
            ))
            .into());
        }
        let report = fit_skeleton(&result.motion3d, &skeleton, &c.fit)?;
        write_motion(&c.out.join("refined.json"), &report.motion, &names)?;
        println!("fit: {} iterations, cost {:.6e}", report.iterations, report.costs.last().unwrap_or(&0.0));
    }
    println!(
        "lifted {} frames; final residual {:.3e} px; output in {}",
        result.motion3d.frames(),
        result.per_step_residuals.last().unwrap_or(&0.0),
        c.out.display()
    );
    Ok(())
}

fn json_files(dir: &Path) -> Result<Vec<String>, Failure> {
    let mut names = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.ends_with(".json") {
            names.push(name);
        }
    }
    names.sort();
    Ok(names)
}

pub fn eval(c: &PipelineConfig, pred: &Path, gt: &Path, out: Option<&Path>) -> Result<(), Failure> {
    let pairs: Vec<(String, PathBuf, PathBuf)> = if pred.is_dir() {
        if !gt.is_dir() {
            return Err(Failure::Usage("--pred is a directory, so --gt must be one too".into()));
        }
        json_files(pred)?
            .into_iter()
            .map(|n| (n.trim_end_matches(".json").to_string(), pred.join(&n), gt.join(&n)))
            .collect()
    } else {
        let name = pred.file_stem().map_or("sequence".into(), |s| s.to_string_lossy().into_owned());
        vec![(name, pred.to_path_buf(), gt.to_path_buf())]
    };
    if pairs.is_empty() {
        return Err(Failure::Usage(format!("no motion files in {}", pred.display())));
    }
    let rig = match &c.rig {
        Some(p) => Some(rig_from_json(&read_text(p)?)?),
        None => None,
    };
    let skeleton = c.skeleton()?;
    let mut table = format!("{CSV_HEADER}\n");
    let mut reports = Vec::new();
    for (name, p, g) in &pairs {
        let (pm, _) = read_motion(p)?;
        let (gm, _) = read_motion(g)?;
        let opts = if gm.joints() == skeleton.joint_count() {
            EvalOptions::for_skeleton(&skeleton)
        } else {
            return Err(Error::ShapeMismatch(format!(
                "{} has {} joints; skeleton {} has {}",
                g.display(),
                gm.joints(),
                skeleton.name,
                skeleton.joint_count()
            ))
            .into());
        };
        let r = evaluate_all(&pm, &gm, rig.as_ref(), &opts)?;
        eprintln!("{name}: {}", r.summary());
        let _ = writeln!(table, "{}", r.csv_row(name));
        reports.push(r);
    }
    if reports.len() > 1 {
        let mean = MetricsReport::mean(&reports).expect("non-empty");
        let _ = writeln!(table, "{}", mean.csv_row("mean"));
    }
    print!("{table}");
    if let Some(path) = out {
        write_atomic(path, table.as_bytes())?;
    }
    Ok(())
}

pub fn verify(data: &Path) -> Result<(), Failure> {
    let (_, samples) = load_dataset(data)?;
    let mut failed = 0;
    for s in &samples {
        let check = check_sample(s)?;
        let status = if check.passes() { "ok" } else { "FAIL" };
        if !check.passes() {
            failed += 1;
        }
        println!(
            "sample {:5}  projection {:.2e} px  roundtrip {:.2e} px  pointmap {:.2e} m  {status}",
            s.index, check.projection_error, check.roundtrip_error, check.pointmap_plane_error
        );
    }
    if failed > 0 {
        return Err(Failure::Check(format!("{failed} of {} samples failed verification", samples.len())));
    }
    println!("all {} samples consistent", samples.len());
    Ok(())
}
