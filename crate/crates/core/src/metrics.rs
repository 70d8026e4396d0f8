//! Pose and motion error metrics.
//!
//! Positions are in meters; every reported error is in millimeters.
//! Smoothness errors use per-frame finite differences (mm/frame² and
//! mm/frame³) so they do not depend on the frame rate; see
//! [`per_frame2_to_si`] and [`per_frame3_to_si`] for SI conversions.
//!
//! Alignment classes:
//!
//! | metric      | alignment                                             |
//! |-------------|-------------------------------------------------------|
//! | `mpjpe`     | per-frame root subtraction                            |
//! | `pa_mpjpe`  | per-frame similarity (rotation, translation, scale)   |
//! | `w_mpjpe`   | yaw + translation fitted on frames 0 and 1            |
//! | `wa_mpjpe`  | yaw + translation fitted on the whole sequence        |
//! | `abs_mpjpe` | none                                                  |

use std::fmt::Write as _;

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::CameraRig;
use crate::motion::Motion3;
use crate::scalar::Real;
use crate::skeleton::Skeleton;

const MM: f64 = 1000.0;
/// Default foot-contact height in meters.
pub const CONTACT_HEIGHT: f64 = 0.05;
/// Ratio of the middle to the largest spread eigenvalue below which a
/// point set is treated as collinear.
const COLLINEAR_RATIO: f64 = 1e-10;

/// `y ≈ scale · rotation · x + translation`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Similarity<T: Real> {
    pub rotation: Matrix3<T>,
    pub translation: Vector3<T>,
    pub scale: T,
}

impl<T: Real> Similarity<T> {
    pub fn apply(&self, p: &Vector3<T>) -> Vector3<T> {
        self.rotation * p * self.scale + self.translation
    }
}

fn centroid<T: Real>(p: &[Vector3<T>]) -> Vector3<T> {
    p.iter().fold(Vector3::zeros(), |a, b| a + b) / T::of(p.len() as f64)
}

fn spread_is_planar<T: Real>(p: &[Vector3<T>], mu: &Vector3<T>) -> bool {
    let cov = p.iter().fold(Matrix3::zeros(), |a, x| {
        let d = x - mu;
        a + d * d.transpose()
    });
    let mut ev: Vec<f64> = cov.symmetric_eigenvalues().iter().map(|v| v.to_f64_lossy().abs()).collect();
    ev.sort_by(f64::total_cmp);
    ev[2] > 0.0 && ev[1] > COLLINEAR_RATIO * ev[2]
}

/// Least-squares similarity aligning `x` onto `y` (Umeyama's method).
///
/// The rotation is always proper. With `with_scale = false` the scale is
/// fixed at one.
pub fn procrustes<T: Real>(x: &[Vector3<T>], y: &[Vector3<T>], with_scale: bool) -> Result<Similarity<T>> {
    if x.len() != y.len() {
        return Err(Error::ShapeMismatch(format!("{} vs {} points", x.len(), y.len())));
    }
    if x.len() < 3 {
        return Err(Error::DegenerateConfiguration);
    }
    let (mx, my) = (centroid(x), centroid(y));
    if !spread_is_planar(x, &mx) || !spread_is_planar(y, &my) {
        return Err(Error::DegenerateConfiguration);
    }
    let n = T::of(x.len() as f64);
    let mut cov = Matrix3::zeros();
    let mut var_x = T::zero();
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        cov += db * da.transpose();
        var_x += da.norm_squared();
    }
    cov /= n;
    var_x /= n;
    let svd = cov.svd(true, true);
    let (u, v_t) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
    let mut s = Matrix3::identity();
    if (u.determinant() * v_t.determinant()) < T::zero() {
        s[(2, 2)] = -T::one();
    }
    let rotation = u * s * v_t;
    let scale = if with_scale {
        (svd.singular_values[0] * s[(0, 0)] + svd.singular_values[1] * s[(1, 1)] + svd.singular_values[2] * s[(2, 2)])
            / var_x
    } else {
        T::one()
    };
    Ok(Similarity {
        rotation,
        translation: my - rotation * mx * scale,
        scale,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MpjpeMode {
    /// Subtract each frame's root joint from both motions first.
    RootAligned { root: usize },
    /// Raw world positions (Abs-MPJPE).
    None,
}

fn f64_motion<T: Real>(m: &Motion3<T>) -> Motion3<f64> {
    m.cast::<f64>()
}

fn check_pair<T: Real>(pred: &Motion3<T>, gt: &Motion3<T>) -> Result<()> {
    pred.same_shape(gt)?;
    if pred.frames() == 0 || pred.joints() == 0 {
        return Err(Error::ShapeMismatch("empty motion".into()));
    }
    Ok(())
}

fn mean_distance(pred: &Motion3<f64>, gt: &Motion3<f64>) -> f64 {
    let s: f64 = pred.coords().iter().zip(gt.coords()).map(|(a, b)| (a - b).norm()).sum();
    s / pred.coords().len() as f64 * MM
}

pub fn mpjpe<T: Real>(pred: &Motion3<T>, gt: &Motion3<T>, mode: MpjpeMode) -> Result<f64> {
    check_pair(pred, gt)?;
    let (p, g) = (f64_motion(pred), f64_motion(gt));
    match mode {
        MpjpeMode::None => Ok(mean_distance(&p, &g)),
        MpjpeMode::RootAligned { root } => {
            if root >= p.joints() {
                return Err(Error::InvalidArgument(format!("root joint {root} out of range")));
            }
            let mut s = 0.0;
            for t in 0..p.frames() {
                let (rp, rg) = (p.at(t, root), g.at(t, root));
                for j in 0..p.joints() {
                    s += ((p.at(t, j) - rp) - (g.at(t, j) - rg)).norm();
                }
            }
            Ok(s / p.coords().len() as f64 * MM)
        }
    }
}

/// Unaligned MPJPE.
pub fn abs_mpjpe<T: Real>(pred: &Motion3<T>, gt: &Motion3<T>) -> Result<f64> {
    mpjpe(pred, gt, MpjpeMode::None)
}

/// Per-frame similarity-aligned MPJPE.
pub fn pa_mpjpe<T: Real>(pred: &Motion3<T>, gt: &Motion3<T>) -> Result<f64> {
    check_pair(pred, gt)?;
    let (p, g) = (f64_motion(pred), f64_motion(gt));
    let mut s = 0.0;
    for t in 0..p.frames() {
        let sim = procrustes(p.frame(t), g.frame(t), true)?;
        s += p.frame(t).iter().zip(g.frame(t)).map(|(a, b)| (sim.apply(a) - b).norm()).sum::<f64>();
    }
    Ok(s / p.coords().len() as f64 * MM)
}

/// Rotation about the z axis plus translation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct YawTranslation {
    pub yaw: f64,
    pub translation: Vector3<f64>,
}

impl YawTranslation {
    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        Rotation3::from_axis_angle(&Vector3::z_axis(), self.yaw) * p + self.translation
    }
}

/// Least-squares yaw and translation taking `x` onto `y`.
pub fn fit_yaw_translation(x: &[Vector3<f64>], y: &[Vector3<f64>]) -> YawTranslation {
    let (mx, my) = (centroid(x), centroid(y));
    let (mut a, mut b) = (0.0, 0.0);
    for (p, q) in x.iter().zip(y) {
        let (dp, dq) = (p - mx, q - my);
        a += dp.x * dq.x + dp.y * dq.y;
        b += dp.x * dq.y - dp.y * dq.x;
    }
    let yaw = if a == 0.0 && b == 0.0 { 0.0 } else { b.atan2(a) };
    let r = Rotation3::from_axis_angle(&Vector3::z_axis(), yaw);
    YawTranslation {
        yaw,
        translation: my - r * mx,
    }
}

fn aligned_abs(pred: &Motion3<f64>, gt: &Motion3<f64>, fit_frames: usize) -> f64 {
    let n = fit_frames * pred.joints();
    let fit = fit_yaw_translation(&pred.coords()[..n], &gt.coords()[..n]);
    mean_distance(&pred.map(|p| fit.apply(p)), gt)
}

/// Unaligned MPJPE after a yaw + translation fit on the first two frames.
pub fn w_mpjpe<T: Real>(pred: &Motion3<T>, gt: &Motion3<T>) -> Result<f64> {
    check_pair(pred, gt)?;
    if pred.frames() < 2 {
        return Err(Error::TooShort { needed: 2, got: pred.frames() });
    }
    Ok(aligned_abs(&f64_motion(pred), &f64_motion(gt), 2))
}

/// Unaligned MPJPE after a yaw + translation fit on all frames.
pub fn wa_mpjpe<T: Real>(pred: &Motion3<T>, gt: &Motion3<T>) -> Result<f64> {
    check_pair(pred, gt)?;
    if pred.frames() < 2 {
        return Err(Error::TooShort { needed: 2, got: pred.frames() });
    }
    Ok(aligned_abs(&f64_motion(pred), &f64_motion(gt), pred.frames()))
}

/// Mean root position error, unaligned.
pub fn t_root<T: Real>(pred: &Motion3<T>, gt: &Motion3<T>, root: usize) -> Result<f64> {
    check_pair(pred, gt)?;
    if root >= pred.joints() {
        return Err(Error::InvalidArgument(format!("root joint {root} out of range")));
    }
    let s: f64 = (0..pred.frames())
        .map(|t| (pred.at(t, root) - gt.at(t, root)).norm().to_f64_lossy())
        .sum();
    Ok(s / pred.frames() as f64 * MM)
}

fn second_difference(m: &Motion3<f64>, t: usize, j: usize) -> Vector3<f64> {
    m.at(t - 1, j) - m.at(t, j) * 2.0 + m.at(t + 1, j)
}

/// Mean norm of the difference of second central differences (mm/frame²).
pub fn accel_error<T: Real>(pred: &Motion3<T>, gt: &Motion3<T>) -> Result<f64> {
    check_pair(pred, gt)?;
    if pred.frames() < 3 {
        return Err(Error::TooShort { needed: 3, got: pred.frames() });
    }
    let (p, g) = (f64_motion(pred), f64_motion(gt));
    let mut s = 0.0;
    for t in 1..p.frames() - 1 {
        for j in 0..p.joints() {
            s += (second_difference(&p, t, j) - second_difference(&g, t, j)).norm();
        }
    }
    Ok(s / ((p.frames() - 2) * p.joints()) as f64 * MM)
}

/// Mean norm of the third forward difference (mm/frame³).
pub fn jitter<T: Real>(pred: &Motion3<T>) -> Result<f64> {
    if pred.frames() < 4 {
        return Err(Error::TooShort { needed: 4, got: pred.frames() });
    }
    let p = f64_motion(pred);
    let mut s = 0.0;
    for t in 0..p.frames() - 3 {
        for j in 0..p.joints() {
            s += (p.at(t + 3, j) - p.at(t + 2, j) * 3.0 + p.at(t + 1, j) * 3.0 - p.at(t, j)).norm();
        }
    }
    Ok(s / ((p.frames() - 3) * p.joints()) as f64 * MM)
}

/// Mean horizontal foot displacement (mm) between consecutive frames in
/// which the foot is below `contact_height` in both. Zero when no foot is
/// ever in contact.
pub fn foot_sliding<T: Real>(pred: &Motion3<T>, foot_joints: &[usize], contact_height: f64) -> Result<f64> {
    if foot_joints.is_empty() || foot_joints.iter().any(|&j| j >= pred.joints()) {
        return Err(Error::InvalidArgument("foot joints empty or out of range".into()));
    }
    if pred.frames() < 2 {
        return Err(Error::TooShort { needed: 2, got: pred.frames() });
    }
    let p = f64_motion(pred);
    let mut s = 0.0;
    let mut count = 0usize;
    for &j in foot_joints {
        for t in 0..p.frames() - 1 {
            let (a, b) = (p.at(t, j), p.at(t + 1, j));
            if a.z < contact_height && b.z < contact_height {
                s += (b.xy() - a.xy()).norm();
                count += 1;
            }
        }
    }
    Ok(if count == 0 { 0.0 } else { s / count as f64 * MM })
}

/// Converts a mm/frame² value to m/s².
pub fn per_frame2_to_si(value: f64, fps: f64) -> f64 {
    value / MM * fps * fps
}

/// Converts a mm/frame³ value to m/s³.
pub fn per_frame3_to_si(value: f64, fps: f64) -> f64 {
    value / MM * fps * fps * fps
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub root_joint: usize,
    pub foot_joints: Vec<usize>,
    pub contact_height: f64,
}

impl EvalOptions {
    pub fn for_skeleton(skeleton: &Skeleton) -> Self {
        EvalOptions {
            root_joint: skeleton.root(),
            foot_joints: skeleton.foot_joints.clone(),
            contact_height: CONTACT_HEIGHT,
        }
    }
}

/// Every metric for one sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub pa_mpjpe: f64,
    pub mpjpe: f64,
    pub w_mpjpe: f64,
    pub wa_mpjpe: f64,
    pub abs_mpjpe: f64,
    pub t_root: f64,
    pub accel: f64,
    pub jitter: f64,
    pub fs: f64,
    pub frame_count: usize,
    pub joint_count: usize,
    /// True when MPJPE and PA-MPJPE were computed in the primary camera frame.
    pub camera_frame: bool,
}

/// Column order of [`MetricsReport::csv_row`].
pub const CSV_HEADER: &str =
    "sequence,pa_mpjpe,mpjpe,w_mpjpe,wa_mpjpe,abs_mpjpe,t_root,accel,jitter,fs,frames,joints,camera_frame";

impl MetricsReport {
    fn values(&self) -> [f64; 9] {
        [
            self.pa_mpjpe,
            self.mpjpe,
            self.w_mpjpe,
            self.wa_mpjpe,
            self.abs_mpjpe,
            self.t_root,
            self.accel,
            self.jitter,
            self.fs,
        ]
    }

    pub fn csv_row(&self, name: &str) -> String {
        let mut s = name.to_string();
        for v in self.values() {
            let _ = write!(s, ",{v}");
        }
        let _ = write!(s, ",{},{},{}", self.frame_count, self.joint_count, self.camera_frame);
        s
    }

    pub fn summary(&self) -> String {
        format!(
            "PA-MPJPE {:.2} mm | MPJPE {:.2} mm | W-MPJPE {:.2} mm | WA-MPJPE {:.2} mm | Abs-MPJPE {:.2} mm | \
             T_root {:.2} mm | Accel {:.3} mm/f² | Jitter {:.3} mm/f³ | FS {:.3} mm ({} frames, {} joints, {} frame)",
            self.pa_mpjpe,
            self.mpjpe,
            self.w_mpjpe,
            self.wa_mpjpe,
            self.abs_mpjpe,
            self.t_root,
            self.accel,
            self.jitter,
            self.fs,
            self.frame_count,
            self.joint_count,
            if self.camera_frame { "camera" } else { "world" }
        )
    }

    /// Field-wise arithmetic mean; counts are summed.
    pub fn mean(reports: &[MetricsReport]) -> Option<MetricsReport> {
        let n = reports.len() as f64;
        let first = reports.first()?;
        let avg = |f: fn(&MetricsReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        Some(MetricsReport {
            pa_mpjpe: avg(|r| r.pa_mpjpe),
            mpjpe: avg(|r| r.mpjpe),
            w_mpjpe: avg(|r| r.w_mpjpe),
            wa_mpjpe: avg(|r| r.wa_mpjpe),
            abs_mpjpe: avg(|r| r.abs_mpjpe),
            t_root: avg(|r| r.t_root),
            accel: avg(|r| r.accel),
            jitter: avg(|r| r.jitter),
            fs: avg(|r| r.fs),
            frame_count: reports.iter().map(|r| r.frame_count).sum(),
            joint_count: first.joint_count,
            camera_frame: first.camera_frame,
        })
    }
}

/// Computes every metric. With a rig, MPJPE and PA-MPJPE are evaluated in
/// the primary camera's frame; everything else stays in world coordinates.
pub fn evaluate_all<T: Real>(
    pred: &Motion3<T>,
    gt: &Motion3<T>,
    rig: Option<&CameraRig<T>>,
    opts: &EvalOptions,
) -> Result<MetricsReport> {
    check_pair(pred, gt)?;
    let (p, g) = (f64_motion(pred), f64_motion(gt));
    let (cp, cg) = match rig {
        Some(r) => {
            let cam = r.primary().cast::<f64>();
            (p.map(|x| cam.to_camera(x)), g.map(|x| cam.to_camera(x)))
        }
        None => (p.clone(), g.clone()),
    };
    Ok(MetricsReport {
        pa_mpjpe: pa_mpjpe(&cp, &cg)?,
        mpjpe: mpjpe(&cp, &cg, MpjpeMode::RootAligned { root: opts.root_joint })?,
        w_mpjpe: w_mpjpe(&p, &g)?,
        wa_mpjpe: wa_mpjpe(&p, &g)?,
        abs_mpjpe: abs_mpjpe(&p, &g)?,
        t_root: t_root(&p, &g, opts.root_joint)?,
        accel: accel_error(&p, &g)?,
        jitter: jitter(&p)?,
        fs: foot_sliding(&p, &opts.foot_joints, opts.contact_height)?,
        frame_count: p.frames(),
        joint_count: p.joints(),
        camera_frame: rig.is_some(),
    })
}
