//! The denoiser interface used by the lifting loop.

use super::model::{camera_features, pointmap_features, token_features, DenoiserModel, ModelInput, ModelMode, CAMERA_FEATURES};
use super::tensor::{MotionLayout, MotionTensor};
use crate::error::{Error, Result};
use crate::geometry::{rig_pointmaps, CameraRig, DEFAULT_GRID};
use crate::motion::GlobalMotion2D;
use crate::scalar::Real;

/// Conditioning shared by every denoising step of one sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct Conditioning {
    /// Observed primary-view motion in tensor layout (one view).
    pub m0: MotionTensor<f64>,
    pub primary: usize,
    /// `views × CAMERA_FEATURES`.
    pub cameras: Vec<f64>,
    /// `views × grid² × CELL_FEATURES`.
    pub pointmaps: Vec<f64>,
    pub grid: usize,
}

impl Conditioning {
    pub fn new(m0: &GlobalMotion2D<f64>, rig: &CameraRig<f64>, layout: &MotionLayout, grid: usize) -> Result<Self> {
        let primary = rig.primary_index;
        let cam = rig.primary();
        let mut t = MotionTensor::zeros(1, m0.frames(), layout.rows());
        layout.encode_view(m0, (cam.image_w, cam.image_h), &mut t, 0)?;
        let cameras = rig.cameras.iter().flat_map(camera_features).collect();
        let pointmaps = rig_pointmaps(rig, grid, grid)?.iter().flat_map(pointmap_features).collect();
        Ok(Conditioning {
            m0: t,
            primary,
            cameras,
            pointmaps,
            grid,
        })
    }

    /// Same conditioning with every signal replaced by zeros.
    pub fn zeroed(&self) -> Self {
        Conditioning {
            m0: MotionTensor::zeros(1, self.m0.frames, self.m0.rows),
            primary: self.primary,
            cameras: vec![0.0; self.cameras.len()],
            pointmaps: vec![0.0; self.pointmaps.len()],
            grid: self.grid,
        }
    }

    pub fn views(&self) -> usize {
        self.cameras.len() / CAMERA_FEATURES
    }
}

/// Predicts the clean sample from a noisy one.
pub trait Denoiser {
    fn layout(&self) -> MotionLayout;

    /// Pointmap cells per side expected in the conditioning.
    fn grid(&self) -> usize {
        DEFAULT_GRID
    }

    fn denoise(&self, x_n: &MotionTensor<f64>, n: usize, cond: &Conditioning) -> Result<MotionTensor<f64>>;
}

impl<T: Real> Denoiser for DenoiserModel<T> {
    fn layout(&self) -> MotionLayout {
        self.config.layout
    }

    fn grid(&self) -> usize {
        self.config.grid
    }

    fn denoise(&self, x_n: &MotionTensor<f64>, n: usize, cond: &Conditioning) -> Result<MotionTensor<f64>> {
        if x_n.views > 1 && self.config.mode == ModelMode::SingleView {
            return Err(Error::ModeMismatch(format!(
                "single-view model cannot denoise {} views",
                x_n.views
            )));
        }
        if x_n.rows != self.config.layout.rows() || cond.m0.frames != x_n.frames {
            return Err(Error::ShapeMismatch("input does not match the model layout".into()));
        }
        let multi = self.config.mode == ModelMode::MultiView;
        if multi && cond.views() != x_n.views {
            return Err(Error::ShapeMismatch("conditioning views differ from input views".into()));
        }
        if self.config.pointmaps && cond.grid != self.config.grid {
            return Err(Error::ShapeMismatch("pointmap grid differs from the model's".into()));
        }
        let f = x_n.features();
        let x32 = x_n.cast::<T>();
        let m0 = cond.m0.cast::<T>();
        let mut tokens = Vec::with_capacity(x_n.views * x_n.frames * self.config.input_features());
        for v in 0..x_n.views {
            for t in 0..x_n.frames {
                let noisy = &x32.data[(v * x_n.frames + t) * f..][..f];
                let primary = (multi && v == cond.primary).then(|| &m0.data[t * f..(t + 1) * f]);
                token_features(&mut tokens, noisy, primary);
            }
        }
        let cameras = if multi {
            cond.cameras.iter().map(|&c| T::of(c)).collect()
        } else {
            let p = cond.primary * CAMERA_FEATURES;
            cond.cameras[p..p + CAMERA_FEATURES].iter().map(|&c| T::of(c)).collect()
        };
        let input = ModelInput {
            batch: 1,
            views: x_n.views,
            frames: x_n.frames,
            tokens,
            steps: vec![n],
            cameras,
            pointmaps: self
                .config
                .pointmaps
                .then(|| cond.pointmaps.iter().map(|&c| T::of(c)).collect()),
        };
        let y = self.predict(&input)?;
        MotionTensor::from_data(x_n.views, x_n.frames, x_n.rows, y.iter().map(|v| v.to_f64_lossy()).collect())
    }
}

/// Test double that ignores its input and returns a fixed clean sample.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleDenoiser {
    pub gt: MotionTensor<f64>,
    pub layout: MotionLayout,
}

impl OracleDenoiser {
    pub fn new(gt: MotionTensor<f64>, layout: MotionLayout) -> Self {
        OracleDenoiser { gt, layout }
    }
}

impl Denoiser for OracleDenoiser {
    fn layout(&self) -> MotionLayout {
        self.layout
    }

    fn denoise(&self, x_n: &MotionTensor<f64>, _n: usize, _cond: &Conditioning) -> Result<MotionTensor<f64>> {
        x_n.same_shape(&self.gt)?;
        Ok(self.gt.clone())
    }
}
