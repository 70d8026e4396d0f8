//! Joint trajectory containers.

use nalgebra::{Vector2, Vector3};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub const DEFAULT_FPS: f64 = 30.0;

/// `frames × joints` world-space joint positions in meters.
#[derive(Clone, Debug, PartialEq)]
pub struct Motion3<T: Real> {
    pub fps: f64,
    frames: usize,
    joints: usize,
    coords: Vec<Vector3<T>>,
}

impl<T: Real> Motion3<T> {
    pub fn new(frames: usize, joints: usize, coords: Vec<Vector3<T>>, fps: f64) -> Result<Self> {
        if coords.len() != frames * joints {
            return Err(Error::ShapeMismatch(format!(
                "expected {frames}x{joints} joints, got {}",
                coords.len()
            )));
        }
        Ok(Self {
            fps,
            frames,
            joints,
            coords,
        })
    }

    pub fn zeros(frames: usize, joints: usize, fps: f64) -> Self {
        Self {
            fps,
            frames,
            joints,
            coords: vec![Vector3::zeros(); frames * joints],
        }
    }

    pub fn from_frames(frames: &[Vec<Vector3<T>>], fps: f64) -> Result<Self> {
        let joints = frames.first().map_or(0, Vec::len);
        if frames.iter().any(|f| f.len() != joints) {
            return Err(Error::ShapeMismatch("ragged frames".into()));
        }
        Self::new(frames.len(), joints, frames.concat(), fps)
    }

    #[inline]
    pub fn frames(&self) -> usize {
        self.frames
    }

    #[inline]
    pub fn joints(&self) -> usize {
        self.joints
    }

    #[inline]
    pub fn at(&self, frame: usize, joint: usize) -> Vector3<T> {
        self.coords[frame * self.joints + joint]
    }

    #[inline]
    pub fn at_mut(&mut self, frame: usize, joint: usize) -> &mut Vector3<T> {
        &mut self.coords[frame * self.joints + joint]
    }

    pub fn frame(&self, frame: usize) -> &[Vector3<T>] {
        &self.coords[frame * self.joints..(frame + 1) * self.joints]
    }

    pub fn frame_mut(&mut self, frame: usize) -> &mut [Vector3<T>] {
        &mut self.coords[frame * self.joints..(frame + 1) * self.joints]
    }

    pub fn coords(&self) -> &[Vector3<T>] {
        &self.coords
    }

    pub fn coords_mut(&mut self) -> &mut [Vector3<T>] {
        &mut self.coords
    }

    pub fn same_shape(&self, other: &Self) -> Result<()> {
        if self.frames != other.frames || self.joints != other.joints {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} vs {}x{}",
                self.frames, self.joints, other.frames, other.joints
            )));
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(&Vector3<T>) -> Vector3<T>) -> Self {
        Self {
            fps: self.fps,
            frames: self.frames,
            joints: self.joints,
            coords: self.coords.iter().map(f).collect(),
        }
    }

    pub fn cast<U: Real>(&self) -> Motion3<U> {
        Motion3 {
            fps: self.fps,
            frames: self.frames,
            joints: self.joints,
            coords: self
                .coords
                .iter()
                .map(|p| p.map(|x| U::of(x.to_f64_lossy())))
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.coords.iter().all(|p| p.iter().all(|x| x.is_finite()))
    }

    /// Largest joint-wise distance to `other`.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| (a - b).norm())
            .fold(T::zero(), |m, d| if d > m { d } else { m })
    }
}

/// `frames × joints` pixel coordinates observed in one view
/// (the per-view global 2D motion).
#[derive(Clone, Debug, PartialEq)]
pub struct GlobalMotion2D<T: Real> {
    pub view_index: usize,
    pub fps: f64,
    frames: usize,
    joints: usize,
    coords: Vec<Vector2<T>>,
}

impl<T: Real> GlobalMotion2D<T> {
    pub fn new(
        frames: usize,
        joints: usize,
        coords: Vec<Vector2<T>>,
        view_index: usize,
        fps: f64,
    ) -> Result<Self> {
        if coords.len() != frames * joints {
            return Err(Error::ShapeMismatch(format!(
                "expected {frames}x{joints} joints, got {}",
                coords.len()
            )));
        }
        if frames < 1 || joints < 2 {
            return Err(Error::ShapeMismatch(format!(
                "2D motion needs at least 1 frame and 2 joints, got {frames}x{joints}"
            )));
        }
        if coords.iter().any(|p| !p.iter().all(|x| x.is_finite())) {
            return Err(Error::InvalidArgument("non-finite 2D coordinate".into()));
        }
        Ok(Self {
            view_index,
            fps,
            frames,
            joints,
            coords,
        })
    }

    #[inline]
    pub fn frames(&self) -> usize {
        self.frames
    }

    #[inline]
    pub fn joints(&self) -> usize {
        self.joints
    }

    #[inline]
    pub fn at(&self, frame: usize, joint: usize) -> Vector2<T> {
        self.coords[frame * self.joints + joint]
    }

    pub fn frame(&self, frame: usize) -> &[Vector2<T>] {
        &self.coords[frame * self.joints..(frame + 1) * self.joints]
    }

    pub fn coords(&self) -> &[Vector2<T>] {
        &self.coords
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| (a - b).amax())
            .fold(T::zero(), |m, d| if d > m { d } else { m })
    }

    pub fn translated(&self, delta: Vector2<T>) -> Self {
        Self {
            coords: self.coords.iter().map(|p| p + delta).collect(),
            ..self.clone()
        }
    }
}
