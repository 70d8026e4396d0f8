//! Pipeline configuration file.
//!
//! A single TOML document; every key is optional. Example:
//!
//! ```toml
//! skeleton = "toy8"      # toy8 | smpl22 | coco17
//! rig = "rig.json"       # optional; default is a ring of `views` cameras
//! views = 4
//! seed = 0
//! out = "out"
//!
//! [dataset]
//! count = 100
//! frames = 32
//! fps = 30.0
//! grid = 16
//! kinds = ["walker", "circle", "squat", "random_smooth"]
//! [dataset.augment]
//! yaw_range = 3.14159
//!
//! [diffusion]
//! steps = 100
//! schedule = "cosine"    # cosine | linear
//! width = 64
//! blocks = 4
//! heads = 4
//! ffn = 128
//! pointmaps = true
//! decouple = true
//!
//! [train]
//! epochs = 50
//! batch_size = 16
//! lr = 0.05
//!
//! [fit]
//! bone_weight = 100.0
//! smooth_weight = 1.0
//! ```

use std::path::{Path, PathBuf};

use mocap_lift::diffusion::{ModelConfig, ModelMode, MotionLayout, ScheduleKind};
use mocap_lift::geometry::{rig_from_json, CameraRig};
use mocap_lift::io::read_text;
use mocap_lift::refine::FitConfig;
use mocap_lift::synth::{AugmentParams, DatasetSpec};
use mocap_lift::{Error, MotionKind, Result, Skeleton};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub skeleton: String,
    pub rig: Option<PathBuf>,
    pub views: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub dataset: DatasetConfig,
    pub diffusion: DiffusionConfig,
    pub train: TrainSection,
    pub fit: FitConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub count: usize,
    pub frames: usize,
    pub fps: f64,
    pub grid: usize,
    pub kinds: Vec<MotionKind>,
    pub augment: AugmentParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiffusionConfig {
    pub steps: usize,
    pub schedule: ScheduleKind,
    pub width: usize,
    pub blocks: usize,
    pub heads: usize,
    pub ffn: usize,
    pub pointmaps: bool,
    pub decouple: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub clip_norm: f64,
    pub probe_samples: usize,
    pub target_ratio: Option<f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            skeleton: "toy8".into(),
            rig: None,
            views: 4,
            seed: 0,
            out: PathBuf::from("out"),
            dataset: DatasetConfig::default(),
            diffusion: DiffusionConfig::default(),
            train: TrainSection::default(),
            fit: FitConfig::default(),
        }
    }
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            count: 100,
            frames: 32,
            fps: 30.0,
            grid: 16,
            kinds: MotionKind::ALL.to_vec(),
            augment: AugmentParams::default(),
        }
    }
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        DiffusionConfig {
            steps: 100,
            schedule: ScheduleKind::Cosine,
            width: 64,
            blocks: 4,
            heads: 4,
            ffn: 128,
            pointmaps: true,
            decouple: true,
        }
    }
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            epochs: 50,
            batch_size: 16,
            lr: 0.05,
            momentum: 0.9,
            clip_norm: 1.0,
            probe_samples: 64,
            target_ratio: None,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        toml::from_str(&text).map_err(|e| Error::Parse {
            context: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        Skeleton::by_name(&self.skeleton)?;
        if let Some(rig) = &self.rig {
            if !rig.is_file() {
                return Err(Error::io(rig, std::io::Error::from(std::io::ErrorKind::NotFound)));
            }
        }
        if self.views < 2 {
            return Err(Error::InvalidArgument("views must be at least 2".into()));
        }
        if self.dataset.count == 0 || self.dataset.frames < 4 || self.dataset.kinds.is_empty() {
            return Err(Error::InvalidArgument("dataset needs count ≥ 1, frames ≥ 4 and a motion kind".into()));
        }
        self.dataset.augment.validate()?;
        self.fit.validate()?;
        if self.train.epochs == 0 || self.train.batch_size == 0 {
            return Err(Error::InvalidArgument("epochs and batch size must be positive".into()));
        }
        Ok(())
    }

    pub fn skeleton(&self) -> Result<Skeleton> {
        Skeleton::by_name(&self.skeleton)
    }

    /// The configured rig file, or a ring of `views` cameras.
    pub fn rig(&self) -> Result<CameraRig<f64>> {
        match &self.rig {
            Some(path) => rig_from_json(&read_text(path)?),
            None => CameraRig::ring(self.views, 3.0, 1.6, 1000.0, 1000, 1000),
        }
    }

    pub fn dataset_spec(&self) -> Result<DatasetSpec> {
        Ok(DatasetSpec {
            skeleton: self.skeleton()?,
            kinds: self.dataset.kinds.clone(),
            count: self.dataset.count,
            frames: self.dataset.frames,
            fps: self.dataset.fps,
            base_rig: self.rig()?,
            augment: AugmentParams {
                seed: self.seed,
                ..self.dataset.augment.clone()
            },
            grid: self.dataset.grid,
        })
    }

    pub fn layout(&self, skeleton: &Skeleton) -> Result<MotionLayout> {
        MotionLayout::new(skeleton.joint_count(), skeleton.root(), self.diffusion.decouple)
    }

    pub fn model_config(&self, layout: MotionLayout, mode: ModelMode) -> ModelConfig {
        let d = &self.diffusion;
        ModelConfig {
            width: d.width,
            blocks: d.blocks,
            heads: d.heads,
            ffn: d.ffn,
            grid: self.dataset.grid,
            steps: d.steps,
            schedule: d.schedule,
            ..ModelConfig::new(layout, mode, d.pointmaps && mode == ModelMode::MultiView)
        }
    }
}
