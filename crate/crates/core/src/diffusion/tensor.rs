//! Multi-view motion tensors and their row layouts.
//!
//! A [`MotionTensor`] holds `views × frames × rows × 2` values. With the
//! decoupled layout the rows of a view are
//!
//! ```text
//! 0 ..= J−2   local pose (root removed), dimensionless
//! J−1         root trajectory / (W, H), standardized
//! J           bounding-box half extents / (W, H), standardized
//! ```
//!
//! Trajectory and scale divided by the image size have a much smaller spread
//! than the local pose (roughly 0.03 to 0.2 against 0.4 to 1), so they are
//! shifted and scaled by per-coordinate statistics of the training views.
//! [`RowStats::default`] is the identity.
//!
//! With the direct layout there are `J` rows holding every joint's pixel
//! position divided by the image size.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::CameraRig;
use crate::motion::GlobalMotion2D;
use crate::representation::{self, DisentangledMotion};
use crate::scalar::Real;
use crate::synth::Sample;

#[derive(Clone, Debug, PartialEq)]
pub struct MotionTensor<T: Real> {
    pub views: usize,
    pub frames: usize,
    pub rows: usize,
    pub data: Vec<T>,
}

impl<T: Real> MotionTensor<T> {
    pub fn zeros(views: usize, frames: usize, rows: usize) -> Self {
        MotionTensor {
            views,
            frames,
            rows,
            data: vec![T::zero(); views * frames * rows * 2],
        }
    }

    pub fn from_data(views: usize, frames: usize, rows: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != views * frames * rows * 2 {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {views}×{frames}×{rows}×2 tensor",
                data.len()
            )));
        }
        Ok(MotionTensor {
            views,
            frames,
            rows,
            data,
        })
    }

    /// Values per (view, frame) token.
    pub fn features(&self) -> usize {
        self.rows * 2
    }

    pub fn index(&self, view: usize, frame: usize, row: usize) -> usize {
        ((view * self.frames + frame) * self.rows + row) * 2
    }

    pub fn get(&self, view: usize, frame: usize, row: usize) -> Vector2<T> {
        let i = self.index(view, frame, row);
        Vector2::new(self.data[i], self.data[i + 1])
    }

    pub fn set(&mut self, view: usize, frame: usize, row: usize, p: Vector2<T>) {
        let i = self.index(view, frame, row);
        self.data[i] = p.x;
        self.data[i + 1] = p.y;
    }

    pub fn view(&self, view: usize) -> &[T] {
        let n = self.frames * self.features();
        &self.data[view * n..(view + 1) * n]
    }

    pub fn same_shape(&self, other: &Self) -> Result<()> {
        if (self.views, self.frames, self.rows) != (other.views, other.frames, other.rows) {
            return Err(Error::ShapeMismatch(format!(
                "{}×{}×{} vs {}×{}×{}",
                self.views, self.frames, self.rows, other.views, other.frames, other.rows
            )));
        }
        Ok(())
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        MotionTensor {
            views: self.views,
            frames: self.frames,
            rows: self.rows,
            data: self.data.iter().zip(&other.data).map(|(a, b)| f(*a, *b)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |m, (a, b)| m.max((*a - *b).abs()))
    }

    pub fn cast<U: Real>(&self) -> MotionTensor<U> {
        MotionTensor {
            views: self.views,
            frames: self.frames,
            rows: self.rows,
            data: self.data.iter().map(|x| U::of(x.to_f64_lossy())).collect(),
        }
    }
}

/// Mean and standard deviation per coordinate of the image-normalized
/// trajectory and scale rows.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RowStats {
    pub trajectory_mean: [f64; 2],
    pub trajectory_std: [f64; 2],
    pub scale_mean: [f64; 2],
    pub scale_std: [f64; 2],
}

impl Default for RowStats {
    fn default() -> Self {
        RowStats {
            trajectory_mean: [0.0; 2],
            trajectory_std: [1.0; 2],
            scale_mean: [0.0; 2],
            scale_std: [1.0; 2],
        }
    }
}

const MIN_ROW_STD: f64 = 1e-3;

impl RowStats {
    /// Statistics over every view and frame of `samples`.
    pub fn fit(samples: &[Sample]) -> Result<Self> {
        let mut acc = [[0.0f64; 2]; 4];
        let mut sq = [[0.0f64; 2]; 4];
        let mut n = 0.0;
        for s in samples {
            for (d, cam) in s.encoded.iter().zip(&s.rig.cameras) {
                let size = [cam.image_w as f64, cam.image_h as f64];
                for t in 0..d.frames() {
                    for k in 0..2 {
                        let (tr, sc) = (d.trajectory[t][k] / size[k], d.scale[t][k] / size[k]);
                        acc[0][k] += tr;
                        sq[0][k] += tr * tr;
                        acc[1][k] += sc;
                        sq[1][k] += sc * sc;
                    }
                    n += 1.0;
                }
            }
        }
        if n == 0.0 {
            return Err(Error::InvalidArgument("no frames to fit row statistics".into()));
        }
        let stat = |i: usize| {
            let mean = [acc[i][0] / n, acc[i][1] / n];
            let std = [0, 1].map(|k| (sq[i][k] / n - mean[k] * mean[k]).max(0.0).sqrt().max(MIN_ROW_STD));
            (mean, std)
        };
        let ((trajectory_mean, trajectory_std), (scale_mean, scale_std)) = (stat(0), stat(1));
        Ok(RowStats {
            trajectory_mean,
            trajectory_std,
            scale_mean,
            scale_std,
        })
    }

    fn affine<T: Real>(mean: [f64; 2], std: [f64; 2]) -> (Vector2<T>, Vector2<T>) {
        (Vector2::new(T::of(mean[0]), T::of(mean[1])), Vector2::new(T::of(std[0]), T::of(std[1])))
    }
}

/// How per-view 2D motion is laid out in tensor rows.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionLayout {
    pub joints: usize,
    pub root_joint: usize,
    /// Disentangled local/trajectory/scale rows when true, raw normalized
    /// pixel positions when false.
    pub decouple: bool,
    /// Standardization of the trajectory and scale rows (decoupled only).
    #[serde(default)]
    pub stats: RowStats,
}

impl MotionLayout {
    pub fn new(joints: usize, root_joint: usize, decouple: bool) -> Result<Self> {
        if joints < 2 || root_joint >= joints {
            return Err(Error::InvalidArgument(format!(
                "layout needs ≥2 joints and a valid root, got J={joints}, root={root_joint}"
            )));
        }
        Ok(MotionLayout {
            joints,
            root_joint,
            decouple,
            stats: RowStats::default(),
        })
    }

    /// Same layout with row statistics fitted to `samples`. The direct
    /// layout is returned unchanged.
    pub fn fitted(self, samples: &[Sample]) -> Result<Self> {
        if !self.decouple {
            return Ok(self);
        }
        Ok(MotionLayout {
            stats: RowStats::fit(samples)?,
            ..self
        })
    }

    /// Equal up to the row statistics.
    pub fn same_structure(&self, other: &Self) -> bool {
        (self.joints, self.root_joint, self.decouple) == (other.joints, other.root_joint, other.decouple)
    }

    pub fn rows(&self) -> usize {
        if self.decouple {
            self.joints + 1
        } else {
            self.joints
        }
    }

    pub fn features(&self) -> usize {
        self.rows() * 2
    }

    /// Writes one view into row block `view` of `out`.
    pub fn encode_view<T: Real>(
        &self,
        motion: &GlobalMotion2D<T>,
        image: (u32, u32),
        out: &mut MotionTensor<T>,
        view: usize,
    ) -> Result<()> {
        if motion.joints() != self.joints || motion.frames() != out.frames || out.rows != self.rows() {
            return Err(Error::ShapeMismatch("motion does not fit tensor layout".into()));
        }
        let norm = Vector2::new(T::of(image.0 as f64), T::of(image.1 as f64));
        if self.decouple {
            let d = representation::encode(motion, self.root_joint)?;
            self.write_disentangled(&d, norm, out, view);
        } else {
            for t in 0..motion.frames() {
                for j in 0..self.joints {
                    out.set(view, t, j, motion.at(t, j).component_div(&norm));
                }
            }
        }
        Ok(())
    }

    fn write_disentangled<T: Real>(&self, d: &DisentangledMotion<T>, norm: Vector2<T>, out: &mut MotionTensor<T>, view: usize) {
        let local = self.joints - 1;
        let st = &self.stats;
        let (tm, ts) = RowStats::affine::<T>(st.trajectory_mean, st.trajectory_std);
        let (sm, ss) = RowStats::affine::<T>(st.scale_mean, st.scale_std);
        for t in 0..d.frames() {
            for r in 0..local {
                out.set(view, t, r, d.local_at(t, r));
            }
            out.set(view, t, local, (d.trajectory[t].component_div(&norm) - tm).component_div(&ts));
            out.set(view, t, local + 1, (d.scale[t].component_div(&norm) - sm).component_div(&ss));
        }
    }

    pub fn encode<T: Real>(&self, views: &[GlobalMotion2D<T>], rig: &CameraRig<T>) -> Result<MotionTensor<T>> {
        if views.len() != rig.views() {
            return Err(Error::ShapeMismatch(format!("{} views for {} cameras", views.len(), rig.views())));
        }
        let frames = views.first().map_or(0, |v| v.frames());
        let mut out = MotionTensor::zeros(views.len(), frames, self.rows());
        for (v, m) in views.iter().enumerate() {
            let cam = &rig.cameras[v];
            self.encode_view(m, (cam.image_w, cam.image_h), &mut out, v)?;
        }
        Ok(out)
    }

    /// Disentangled representation of one view (decoupled layout only).
    pub fn to_disentangled<T: Real>(&self, x: &MotionTensor<T>, view: usize, image: (u32, u32)) -> Result<DisentangledMotion<T>> {
        if !self.decouple {
            return Err(Error::InvalidArgument("direct layout has no disentangled form".into()));
        }
        let norm = Vector2::new(T::of(image.0 as f64), T::of(image.1 as f64));
        let local_rows = self.joints - 1;
        let mut local = Vec::with_capacity(x.frames * local_rows);
        let mut trajectory = Vec::with_capacity(x.frames);
        let mut scale = Vec::with_capacity(x.frames);
        let st = &self.stats;
        let (tm, ts) = RowStats::affine::<T>(st.trajectory_mean, st.trajectory_std);
        let (sm, ss) = RowStats::affine::<T>(st.scale_mean, st.scale_std);
        for t in 0..x.frames {
            for r in 0..local_rows {
                local.push(x.get(view, t, r));
            }
            trajectory.push((x.get(view, t, local_rows).component_mul(&ts) + tm).component_mul(&norm));
            scale.push((x.get(view, t, local_rows + 1).component_mul(&ss) + sm).component_mul(&norm));
        }
        let mut d = DisentangledMotion::new(x.frames, self.joints, self.root_joint, local, trajectory, scale)?;
        d.view_index = view;
        Ok(d)
    }

    pub fn from_disentangled<T: Real>(&self, views: &[DisentangledMotion<T>], rig: &CameraRig<T>) -> Result<MotionTensor<T>> {
        if !self.decouple {
            return Err(Error::InvalidArgument("direct layout has no disentangled form".into()));
        }
        let frames = views.first().map_or(0, |v| v.frames());
        let mut out = MotionTensor::zeros(views.len(), frames, self.rows());
        for (v, d) in views.iter().enumerate() {
            if d.joints() != self.joints || d.frames() != frames || d.root_joint != self.root_joint {
                return Err(Error::ShapeMismatch("disentangled motion does not fit layout".into()));
            }
            let cam = &rig.cameras[v];
            let norm = Vector2::new(T::of(cam.image_w as f64), T::of(cam.image_h as f64));
            self.write_disentangled(d, norm, &mut out, v);
        }
        Ok(out)
    }

    /// Global pixel coordinates of one view.
    pub fn decode_view<T: Real>(&self, x: &MotionTensor<T>, view: usize, image: (u32, u32), fps: f64) -> Result<GlobalMotion2D<T>> {
        if x.rows != self.rows() {
            return Err(Error::ShapeMismatch("tensor rows do not match layout".into()));
        }
        if self.decouple {
            let mut d = self.to_disentangled(x, view, image)?;
            d.fps = fps;
            representation::decode(&d)
        } else {
            let norm = Vector2::new(T::of(image.0 as f64), T::of(image.1 as f64));
            let coords = (0..x.frames)
                .flat_map(|t| (0..self.joints).map(move |j| (t, j)))
                .map(|(t, j)| x.get(view, t, j).component_mul(&norm))
                .collect();
            GlobalMotion2D::new(x.frames, self.joints, coords, view, fps)
        }
    }

    pub fn decode<T: Real>(&self, x: &MotionTensor<T>, rig: &CameraRig<T>, fps: f64) -> Result<Vec<GlobalMotion2D<T>>> {
        if x.views != rig.views() {
            return Err(Error::ShapeMismatch(format!("{}-view tensor for {} cameras", x.views, rig.views())));
        }
        rig.cameras
            .iter()
            .enumerate()
            .map(|(v, c)| self.decode_view(x, v, (c.image_w, c.image_h), fps))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{build_samples, DatasetSpec};

    #[test]
    fn layout_round_trips_both_modes() {
        let s = &build_samples(&DatasetSpec::new(1, 6, 11)).unwrap()[0];
        for decouple in [true, false] {
            let layout = MotionLayout::new(8, 0, decouple).unwrap();
            let x = layout.encode(&s.views, &s.rig).unwrap();
            assert_eq!((x.views, x.frames, x.rows), (4, 6, layout.rows()));
            let back = layout.decode(&x, &s.rig, 30.0).unwrap();
            for (a, b) in back.iter().zip(&s.views) {
                assert!(a.max_abs_diff(b) < 1e-9);
            }
        }
        let layout = MotionLayout::new(8, 0, true).unwrap();
        let x = layout.encode(&s.views, &s.rig).unwrap();
        let d: Vec<_> = (0..4).map(|v| layout.to_disentangled(&x, v, (1000, 1000)).unwrap()).collect();
        assert!(d[2].max_abs_diff(&s.encoded[2]) < 1e-12);
        assert!(layout.from_disentangled(&d, &s.rig).unwrap().max_abs_diff(&x) < 1e-15);
    }

    #[test]
    fn row_layout_is_local_then_trajectory_then_scale() {
        let s = &build_samples(&DatasetSpec::new(1, 3, 2)).unwrap()[0];
        let layout = MotionLayout::new(8, 0, true).unwrap();
        let x = layout.encode(&s.views, &s.rig).unwrap();
        let e = &s.encoded[1];
        assert_eq!(x.get(1, 2, 0), e.local_at(2, 0));
        assert_eq!(x.get(1, 2, 7), e.trajectory[2] / 1000.0);
        assert_eq!(x.get(1, 2, 8), e.scale[2] / 1000.0);
    }

    #[test]
    fn fitted_rows_are_standardized_and_invertible() {
        let samples = build_samples(&DatasetSpec::new(40, 8, 9)).unwrap();
        let layout = MotionLayout::new(8, 0, true).unwrap().fitted(&samples).unwrap();
        assert!(layout.same_structure(&MotionLayout::new(8, 0, true).unwrap()));
        let xs: Vec<_> = samples.iter().map(|s| layout.encode(&s.views, &s.rig).unwrap()).collect();
        for row in [7, 8] {
            for k in 0..2 {
                let vals: Vec<f64> = xs
                    .iter()
                    .flat_map(|x| (0..x.views).flat_map(move |v| (0..x.frames).map(move |t| x.get(v, t, row)[k])))
                    .collect();
                let n = vals.len() as f64;
                let mean = vals.iter().sum::<f64>() / n;
                let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                assert!(mean.abs() < 1e-9 && (var - 1.0).abs() < 1e-9, "row {row}.{k}: {mean} {var}");
            }
        }
        let back = layout.decode(&xs[3], &samples[3].rig, 30.0).unwrap();
        for (a, b) in back.iter().zip(&samples[3].views) {
            assert!(a.max_abs_diff(b) < 1e-9);
        }
        let direct = MotionLayout::new(8, 0, false).unwrap();
        assert_eq!(direct.fitted(&samples).unwrap(), direct);
    }
}
