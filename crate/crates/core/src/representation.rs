//! Disentangled per-view 2D motion: root-relative local pose plus a
//! trajectory/scale pair.
//!
//! For a frame with root pixel `τ` and bounding-box half extents `s`, every
//! non-root joint is stored as `(p − τ) / s` (componentwise). Decoding is the
//! exact inverse `local · s + τ`, with the root placed at `τ`.

use nalgebra::Vector2;

use crate::error::{Error, Result};
use crate::motion::GlobalMotion2D;
use crate::scalar::Real;

/// Floor applied to bounding-box half extents (pixels).
pub const SCALE_FLOOR: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct DisentangledMotion<T: Real> {
    pub root_joint: usize,
    pub view_index: usize,
    pub fps: f64,
    frames: usize,
    joints: usize,
    /// `frames × (joints − 1)`, root removed.
    pub local: Vec<Vector2<T>>,
    /// Root pixel per frame.
    pub trajectory: Vec<Vector2<T>>,
    /// Bounding-box half extents per frame.
    pub scale: Vec<Vector2<T>>,
}

impl<T: Real> DisentangledMotion<T> {
    pub fn new(
        frames: usize,
        joints: usize,
        root_joint: usize,
        local: Vec<Vector2<T>>,
        trajectory: Vec<Vector2<T>>,
        scale: Vec<Vector2<T>>,
    ) -> Result<Self> {
        if joints < 2 || root_joint >= joints {
            return Err(Error::ShapeMismatch(format!(
                "root {root_joint} invalid for {joints} joints"
            )));
        }
        if local.len() != frames * (joints - 1) || trajectory.len() != frames || scale.len() != frames {
            return Err(Error::ShapeMismatch("disentangled motion arrays".into()));
        }
        Ok(Self {
            root_joint,
            view_index: 0,
            fps: crate::motion::DEFAULT_FPS,
            frames,
            joints,
            local,
            trajectory,
            scale,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    /// Joint count of the decoded motion (root included).
    pub fn joints(&self) -> usize {
        self.joints
    }

    pub fn local_at(&self, frame: usize, local_index: usize) -> Vector2<T> {
        self.local[frame * (self.joints - 1) + local_index]
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        let d = |a: &[Vector2<T>], b: &[Vector2<T>]| {
            a.iter()
                .zip(b)
                .map(|(x, y)| (x - y).amax())
                .fold(T::zero(), |m, v| m.max(v))
        };
        d(&self.local, &other.local)
            .max(d(&self.trajectory, &other.trajectory))
            .max(d(&self.scale, &other.scale))
    }
}

/// Per-frame bounding boxes: `(centers, half_extents)`, extents floored at
/// [`SCALE_FLOOR`].
pub fn bbox_per_frame<T: Real>(motion: &GlobalMotion2D<T>) -> (Vec<Vector2<T>>, Vec<Vector2<T>>) {
    let floor = T::of(SCALE_FLOOR);
    let half = T::of(0.5);
    (0..motion.frames())
        .map(|t| {
            let frame = motion.frame(t);
            let mut lo = frame[0];
            let mut hi = frame[0];
            for p in &frame[1..] {
                lo = lo.inf(p);
                hi = hi.sup(p);
            }
            let center = (lo + hi) * half;
            let ext = ((hi - lo) * half).map(|x| x.max(floor));
            (center, ext)
        })
        .unzip()
}

/// Maps local joint index (root removed) to the original joint index.
#[inline]
pub fn original_joint(root: usize, local_index: usize) -> usize {
    if local_index < root {
        local_index
    } else {
        local_index + 1
    }
}

pub fn encode<T: Real>(motion: &GlobalMotion2D<T>, root_joint: usize) -> Result<DisentangledMotion<T>> {
    let joints = motion.joints();
    if root_joint >= joints {
        return Err(Error::InvalidArgument(format!(
            "root joint {root_joint} out of range for {joints} joints"
        )));
    }
    let (_, scale) = bbox_per_frame(motion);
    let trajectory: Vec<_> = (0..motion.frames()).map(|t| motion.at(t, root_joint)).collect();
    let mut local = Vec::with_capacity(motion.frames() * (joints - 1));
    for t in 0..motion.frames() {
        let (tau, s) = (trajectory[t], scale[t]);
        for (j, p) in motion.frame(t).iter().enumerate() {
            if j != root_joint {
                local.push((p - tau).component_div(&s));
            }
        }
    }
    let mut d = DisentangledMotion::new(motion.frames(), joints, root_joint, local, trajectory, scale)?;
    d.view_index = motion.view_index;
    d.fps = motion.fps;
    Ok(d)
}

pub fn decode<T: Real>(d: &DisentangledMotion<T>) -> Result<GlobalMotion2D<T>> {
    let joints = d.joints();
    let mut coords = Vec::with_capacity(d.frames() * joints);
    for t in 0..d.frames() {
        let (tau, s) = (d.trajectory[t], d.scale[t]);
        for j in 0..joints {
            if j == d.root_joint {
                coords.push(tau);
            } else {
                let li = if j < d.root_joint { j } else { j - 1 };
                coords.push(d.local_at(t, li).component_mul(&s) + tau);
            }
        }
    }
    GlobalMotion2D::new(d.frames(), joints, coords, d.view_index, d.fps)
}
