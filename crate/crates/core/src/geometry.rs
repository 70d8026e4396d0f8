//! Pinhole cameras, projection, linear triangulation and ground-plane
//! pointmaps.
//!
//! World frame is z-up with the ground plane at `z = 0`. Camera frames
//! follow the usual computer-vision convention: x right, y down, z along the
//! optical axis.

use nalgebra::{Matrix3, Matrix3x4, SymmetricEigen, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::motion::{GlobalMotion2D, Motion3};
use crate::scalar::Real;

/// Minimum camera-frame depth accepted by [`project`].
pub const MIN_DEPTH: f64 = 1e-9;
/// Normal-matrix condition number above which triangulation is rejected.
pub const MAX_CONDITION: f64 = 1e10;
/// Tolerance used when validating rotation matrices.
pub const ROTATION_TOL: f64 = 1e-9;
/// Default pointmap token grid.
pub const DEFAULT_GRID: usize = 16;

#[derive(Clone, Debug, PartialEq)]
pub struct Camera<T: Real> {
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
    /// World → camera rotation.
    pub rotation: Matrix3<T>,
    /// World → camera translation (meters).
    pub translation: Vector3<T>,
    pub image_w: u32,
    pub image_h: u32,
}

impl<T: Real> Camera<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        fx: T,
        fy: T,
        cx: T,
        cy: T,
        rotation: Matrix3<T>,
        translation: Vector3<T>,
        image_w: u32,
        image_h: u32,
    ) -> Result<Self> {
        let cam = Self {
            fx,
            fy,
            cx,
            cy,
            rotation,
            translation,
            image_w,
            image_h,
        };
        cam.validate()?;
        Ok(cam)
    }

    /// Camera at `eye` whose optical axis passes through `target`, with image
    /// "up" as close to world `+z` as possible.
    pub fn look_at(
        eye: Vector3<T>,
        target: Vector3<T>,
        focal: T,
        image_w: u32,
        image_h: u32,
    ) -> Result<Self> {
        let rotation = look_at_rotation(eye, target)?;
        let translation = -(rotation * eye);
        Self::new(
            focal,
            focal,
            T::of(image_w as f64 / 2.0),
            T::of(image_h as f64 / 2.0),
            rotation,
            translation,
            image_w,
            image_h,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > T::zero() && self.fy > T::zero()) {
            return Err(Error::InvalidCamera("focal lengths must be positive".into()));
        }
        if self.image_w == 0 || self.image_h == 0 {
            return Err(Error::InvalidCamera("image size must be positive".into()));
        }
        check_rotation(&self.rotation, T::of(ROTATION_TOL))
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vector3<T> {
        -(self.rotation.transpose() * self.translation)
    }

    pub fn to_camera(&self, p: &Vector3<T>) -> Vector3<T> {
        self.rotation * p + self.translation
    }

    pub fn intrinsics(&self) -> Matrix3<T> {
        let (z, o) = (T::zero(), T::one());
        Matrix3::new(self.fx, z, self.cx, z, self.fy, self.cy, z, z, o)
    }

    /// `K [R | t]`.
    pub fn projection_matrix(&self) -> Matrix3x4<T> {
        let mut rt = Matrix3x4::zeros();
        rt.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        rt.set_column(3, &self.translation);
        self.intrinsics() * rt
    }

    /// Projects one point; `None` when its depth is below [`MIN_DEPTH`].
    pub fn project_point(&self, p: &Vector3<T>) -> Option<Vector2<T>> {
        let c = self.to_camera(p);
        if c.z <= T::of(MIN_DEPTH) {
            return None;
        }
        Some(Vector2::new(
            self.fx * c.x / c.z + self.cx,
            self.fy * c.y / c.z + self.cy,
        ))
    }

    /// World-space direction of the ray through `pixel` (not normalized).
    pub fn pixel_ray(&self, pixel: &Vector2<T>) -> Vector3<T> {
        let dir_cam = Vector3::new(
            (pixel.x - self.cx) / self.fx,
            (pixel.y - self.cy) / self.fy,
            T::one(),
        );
        self.rotation.transpose() * dir_cam
    }

    /// The same physical camera after the world is moved by `x ↦ r·x + t`.
    pub fn transformed(&self, r: &Matrix3<T>, t: &Vector3<T>) -> Self {
        let rotation = self.rotation * r.transpose();
        let translation = self.translation - rotation * t;
        Self {
            rotation,
            translation,
            ..self.clone()
        }
    }

    pub fn cast<U: Real>(&self) -> Camera<U> {
        let c = |x: T| U::of(x.to_f64_lossy());
        Camera {
            fx: c(self.fx),
            fy: c(self.fy),
            cx: c(self.cx),
            cy: c(self.cy),
            rotation: self.rotation.map(c),
            translation: self.translation.map(c),
            image_w: self.image_w,
            image_h: self.image_h,
        }
    }
}

fn check_rotation<T: Real>(r: &Matrix3<T>, tol: T) -> Result<()> {
    let err = (r.transpose() * r - Matrix3::identity()).amax();
    if !(err <= tol) {
        return Err(Error::InvalidCamera(format!(
            "rotation is not orthonormal (max |RᵀR − I| = {err})"
        )));
    }
    let det = r.determinant();
    if !((det - T::one()).abs() <= tol) {
        return Err(Error::InvalidCamera(format!(
            "rotation determinant is {det}, expected 1"
        )));
    }
    Ok(())
}

/// World → camera rotation for a camera at `eye` looking at `target`.
pub fn look_at_rotation<T: Real>(eye: Vector3<T>, target: Vector3<T>) -> Result<Matrix3<T>> {
    let forward = target - eye;
    let norm = forward.norm();
    if norm <= T::of(1e-12) {
        return Err(Error::InvalidCamera("eye and target coincide".into()));
    }
    let z = forward / norm;
    let mut up = Vector3::z();
    if z.cross(&up).norm() < T::of(1e-9) {
        // Looking straight up or down: pick +y as the image-up reference.
        up = Vector3::y();
    }
    // Image y points down, so x = z × up (right-handed with y = z × x).
    let x = z.cross(&up).normalize();
    let y = z.cross(&x);
    Ok(Matrix3::from_rows(&[
        x.transpose(),
        y.transpose(),
        z.transpose(),
    ]))
}

#[derive(Clone, Debug, PartialEq)]
pub struct CameraRig<T: Real> {
    pub cameras: Vec<Camera<T>>,
    pub primary_index: usize,
}

impl<T: Real> CameraRig<T> {
    pub fn new(cameras: Vec<Camera<T>>, primary_index: usize) -> Result<Self> {
        let rig = Self {
            cameras,
            primary_index,
        };
        rig.validate()?;
        Ok(rig)
    }

    pub fn validate(&self) -> Result<()> {
        if self.cameras.is_empty() {
            return Err(Error::InvalidRig("rig has no cameras".into()));
        }
        if self.primary_index >= self.cameras.len() {
            return Err(Error::InvalidRig(format!(
                "primary_index {} out of range for {} cameras",
                self.primary_index,
                self.cameras.len()
            )));
        }
        for cam in &self.cameras {
            cam.validate()?;
        }
        Ok(())
    }

    pub fn views(&self) -> usize {
        self.cameras.len()
    }

    pub fn primary(&self) -> &Camera<T> {
        &self.cameras[self.primary_index]
    }

    /// `views` cameras evenly spaced on a horizontal circle, all aimed at the
    /// origin. Camera 0 sits on the +x axis and is the primary view.
    pub fn ring(views: usize, radius: T, height: T, focal: T, image_w: u32, image_h: u32) -> Result<Self> {
        let cameras = (0..views)
            .map(|v| {
                let a = T::two_pi() * T::of(v as f64) / T::of(views as f64);
                let eye = Vector3::new(radius * a.cos(), radius * a.sin(), height);
                Camera::look_at(eye, Vector3::zeros(), focal, image_w, image_h)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(cameras, 0)
    }

    /// The default four-camera rig: 3 m radius, 1.6 m height, 90° apart,
    /// `fx = fy = 1000`, 1000×1000 images.
    pub fn default_ring() -> Self {
        Self::ring(4, T::of(3.0), T::of(1.6), T::of(1000.0), 1000, 1000)
            .expect("default rig is valid")
    }

    pub fn cast<U: Real>(&self) -> CameraRig<U> {
        CameraRig {
            cameras: self.cameras.iter().map(Camera::cast).collect(),
            primary_index: self.primary_index,
        }
    }
}

/// Perspective projection of every joint of `motion` into `camera`.
pub fn project<T: Real>(camera: &Camera<T>, motion: &Motion3<T>) -> Result<GlobalMotion2D<T>> {
    let mut coords = Vec::with_capacity(motion.frames() * motion.joints());
    for t in 0..motion.frames() {
        for (j, p) in motion.frame(t).iter().enumerate() {
            let uv = camera
                .project_point(p)
                .ok_or(Error::NonPositiveDepth { frame: t, joint: j })?;
            coords.push(uv);
        }
    }
    GlobalMotion2D::new(motion.frames(), motion.joints(), coords, 0, motion.fps)
}

/// Projects `motion` into every camera of the rig.
pub fn project_rig<T: Real>(rig: &CameraRig<T>, motion: &Motion3<T>) -> Result<Vec<GlobalMotion2D<T>>> {
    rig.cameras
        .iter()
        .enumerate()
        .map(|(v, cam)| {
            let mut m = project(cam, motion)?;
            m.view_index = v;
            Ok(m)
        })
        .collect()
}

/// Linear least-squares triangulation of one point from `(P, pixel)` pairs.
///
/// Each observation contributes the two DLT rows `u·p₃ − p₁` and `v·p₃ − p₂`;
/// the inhomogeneous 3-unknown system is solved through its normal equations.
pub fn triangulate_point<T: Real>(
    observations: &[(Matrix3x4<T>, Vector2<T>)],
    frame: usize,
    joint: usize,
) -> Result<Vector3<T>> {
    if observations.len() < 2 {
        return Err(Error::InsufficientViews { frame, joint });
    }
    let mut ata = Matrix3::<T>::zeros();
    let mut atb = Vector3::<T>::zeros();
    for (p, uv) in observations {
        for (coord, row) in [(uv.x, 0usize), (uv.y, 1usize)] {
            let a = Vector3::new(
                coord * p[(2, 0)] - p[(row, 0)],
                coord * p[(2, 1)] - p[(row, 1)],
                coord * p[(2, 2)] - p[(row, 2)],
            );
            let b = -(coord * p[(2, 3)] - p[(row, 3)]);
            ata += a * a.transpose();
            atb += a * b;
        }
    }
    let eig = SymmetricEigen::new(ata);
    let max = eig.eigenvalues.iter().fold(T::zero(), |m, &x| m.max(x.abs()));
    let min = eig.eigenvalues.iter().fold(max, |m, &x| m.min(x.abs()));
    let condition = if min > T::zero() {
        (max / min).to_f64_lossy()
    } else {
        f64::INFINITY
    };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::DegenerateGeometry {
            frame,
            joint,
            condition,
        });
    }
    let chol = ata.cholesky().ok_or(Error::DegenerateGeometry {
        frame,
        joint,
        condition,
    })?;
    Ok(chol.solve(&atb))
}

/// Triangulates every (frame, joint) from per-view pixel observations.
///
/// `mask`, when given, is laid out `views × frames × joints`; `false` drops
/// that observation.
pub fn triangulate<T: Real>(
    rig: &CameraRig<T>,
    observations: &[GlobalMotion2D<T>],
    mask: Option<&[bool]>,
) -> Result<Motion3<T>> {
    let views = rig.views();
    if observations.len() != views {
        return Err(Error::ShapeMismatch(format!(
            "{} observation sets for {views} cameras",
            observations.len()
        )));
    }
    let (frames, joints) = (observations[0].frames(), observations[0].joints());
    if observations
        .iter()
        .any(|o| o.frames() != frames || o.joints() != joints)
    {
        return Err(Error::ShapeMismatch("views disagree on frames/joints".into()));
    }
    if let Some(m) = mask {
        if m.len() != views * frames * joints {
            return Err(Error::ShapeMismatch("mask size".into()));
        }
    }
    let projections: Vec<_> = rig.cameras.iter().map(Camera::projection_matrix).collect();
    let mut coords = Vec::with_capacity(frames * joints);
    let mut obs = Vec::with_capacity(views);
    for t in 0..frames {
        for j in 0..joints {
            obs.clear();
            for v in 0..views {
                if mask.is_some_and(|m| !m[(v * frames + t) * joints + j]) {
                    continue;
                }
                obs.push((projections[v], observations[v].at(t, j)));
            }
            coords.push(triangulate_point(&obs, t, j)?);
        }
    }
    Motion3::new(frames, joints, coords, observations[0].fps)
}

/// Intersection of the ray through `pixel` with the ground plane `z = 0`.
///
/// Returns `None` when the ray is parallel to the plane or meets it behind
/// the camera.
pub fn ray_ground_intersect<T: Real>(camera: &Camera<T>, pixel: &Vector2<T>) -> Option<Vector3<T>> {
    let origin = camera.center();
    let dir = camera.pixel_ray(pixel);
    if dir.z.abs() <= T::of(1e-12) {
        return None;
    }
    let s = -origin.z / dir.z;
    if !(s > T::zero()) {
        return None;
    }
    let mut hit = origin + dir * s;
    hit.z = T::zero();
    Some(hit)
}

/// Per-cell pixel → ground-plane correspondences for one camera.
#[derive(Clone, Debug, PartialEq)]
pub struct Pointmap<T: Real> {
    pub grid_w: usize,
    pub grid_h: usize,
    /// Row-major `grid_h × grid_w` world points; `(0,0,0)` where invalid.
    pub points: Vec<Vector3<T>>,
    pub valid: Vec<bool>,
    pub view_index: usize,
}

impl<T: Real> Pointmap<T> {
    /// Pixel at the center of cell `(row, col)`.
    pub fn cell_center(camera: &Camera<T>, grid_w: usize, grid_h: usize, row: usize, col: usize) -> Vector2<T> {
        Vector2::new(
            T::of((col as f64 + 0.5) * camera.image_w as f64 / grid_w as f64),
            T::of((row as f64 + 0.5) * camera.image_h as f64 / grid_h as f64),
        )
    }

    pub fn valid_fraction(&self) -> f64 {
        self.valid.iter().filter(|&&v| v).count() as f64 / self.valid.len() as f64
    }
}

pub fn pointmap_generate<T: Real>(camera: &Camera<T>, grid_w: usize, grid_h: usize) -> Result<Pointmap<T>> {
    if grid_w < 2 || grid_h < 2 {
        return Err(Error::InvalidArgument(format!(
            "pointmap grid must be at least 2x2, got {grid_w}x{grid_h}"
        )));
    }
    let mut points = Vec::with_capacity(grid_w * grid_h);
    let mut valid = Vec::with_capacity(grid_w * grid_h);
    for row in 0..grid_h {
        for col in 0..grid_w {
            let px = Pointmap::cell_center(camera, grid_w, grid_h, row, col);
            match ray_ground_intersect(camera, &px) {
                Some(p) => {
                    points.push(p);
                    valid.push(true);
                }
                None => {
                    points.push(Vector3::zeros());
                    valid.push(false);
                }
            }
        }
    }
    Ok(Pointmap {
        grid_w,
        grid_h,
        points,
        valid,
        view_index: 0,
    })
}

/// Pointmaps for every camera of a rig.
pub fn rig_pointmaps<T: Real>(rig: &CameraRig<T>, grid_w: usize, grid_h: usize) -> Result<Vec<Pointmap<T>>> {
    rig.cameras
        .iter()
        .enumerate()
        .map(|(v, cam)| {
            let mut pm = pointmap_generate(cam, grid_w, grid_h)?;
            pm.view_index = v;
            Ok(pm)
        })
        .collect()
}

/// On-disk form of one camera.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CameraDoc {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Row-major world → camera rotation.
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
    pub image_w: u32,
    pub image_h: u32,
}

/// On-disk form of a rig (JSON).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RigDoc {
    pub format_version: u32,
    pub primary_index: usize,
    pub cameras: Vec<CameraDoc>,
}

pub const RIG_FORMAT_VERSION: u32 = 1;

impl From<&CameraRig<f64>> for RigDoc {
    fn from(rig: &CameraRig<f64>) -> Self {
        RigDoc {
            format_version: RIG_FORMAT_VERSION,
            primary_index: rig.primary_index,
            cameras: rig
                .cameras
                .iter()
                .map(|c| {
                    let r = &c.rotation;
                    CameraDoc {
                        fx: c.fx,
                        fy: c.fy,
                        cx: c.cx,
                        cy: c.cy,
                        rotation: [
                            r[(0, 0)],
                            r[(0, 1)],
                            r[(0, 2)],
                            r[(1, 0)],
                            r[(1, 1)],
                            r[(1, 2)],
                            r[(2, 0)],
                            r[(2, 1)],
                            r[(2, 2)],
                        ],
                        translation: [c.translation.x, c.translation.y, c.translation.z],
                        image_w: c.image_w,
                        image_h: c.image_h,
                    }
                })
                .collect(),
        }
    }
}

impl TryFrom<&RigDoc> for CameraRig<f64> {
    type Error = Error;

    fn try_from(doc: &RigDoc) -> Result<Self> {
        if doc.format_version != RIG_FORMAT_VERSION {
            return Err(Error::Parse {
                context: "rig".into(),
                message: format!("unsupported format_version {}", doc.format_version),
            });
        }
        let cameras = doc
            .cameras
            .iter()
            .enumerate()
            .map(|(i, c)| {
                Camera::new(
                    c.fx,
                    c.fy,
                    c.cx,
                    c.cy,
                    Matrix3::from_row_slice(&c.rotation),
                    Vector3::from(c.translation),
                    c.image_w,
                    c.image_h,
                )
                .map_err(|e| Error::Parse {
                    context: format!("rig cameras[{i}]"),
                    message: e.to_string(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        CameraRig::new(cameras, doc.primary_index)
    }
}

pub fn rig_to_json(rig: &CameraRig<f64>) -> String {
    serde_json::to_string_pretty(&RigDoc::from(rig)).expect("rig serializes")
}

pub fn rig_from_json(text: &str) -> Result<CameraRig<f64>> {
    let doc: RigDoc = serde_json::from_str(text).map_err(|e| Error::Parse {
        context: "rig".into(),
        message: e.to_string(),
    })?;
    CameraRig::try_from(&doc)
}
