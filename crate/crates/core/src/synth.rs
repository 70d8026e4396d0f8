//! Synthetic ground truth: procedural 3D motions, rigid and camera
//! augmentation, and multi-view 2D datasets built from them.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{Matrix3, Rotation3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, look_at_rotation, Camera, CameraRig, Pointmap, RigDoc};
use crate::io::{write_atomic, MotionDoc};
use crate::motion::{GlobalMotion2D, Motion3};
use crate::representation::{self, DisentangledMotion};
use crate::skeleton::{euler_zyx, Skeleton};

pub const DATASET_FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionKind {
    Walker,
    Circle,
    Squat,
    RandomSmooth,
}

impl MotionKind {
    pub const ALL: [MotionKind; 4] = [
        MotionKind::Walker,
        MotionKind::Circle,
        MotionKind::Squat,
        MotionKind::RandomSmooth,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MotionKind::Walker => "walker",
            MotionKind::Circle => "circle",
            MotionKind::Squat => "squat",
            MotionKind::RandomSmooth => "random_smooth",
        }
    }
}

impl fmt::Display for MotionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MotionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MotionKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::UnknownKind(s.to_string()))
    }
}

/// SplitMix64 finalizer, used to derive independent per-sample seeds.
pub fn mix_seed(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn sample_seed(base: u64, index: usize) -> u64 {
    mix_seed(base ^ mix_seed(index as u64 + 1))
}

fn sym(rng: &mut impl Rng, range: f64) -> f64 {
    if range > 0.0 {
        rng.random_range(-range..=range)
    } else {
        0.0
    }
}

/// Sum of up to three sine harmonics of a base frequency.
#[derive(Clone, Debug)]
struct Harmonics {
    freq: f64,
    amps: [f64; 3],
    phases: [f64; 3],
}

impl Harmonics {
    fn random(rng: &mut impl Rng, freq: f64, amplitude: f64) -> Self {
        let mut amps = [0.0; 3];
        let mut phases = [0.0; 3];
        for k in 0..3 {
            amps[k] = amplitude * rng.random_range(0.0..1.0) / (k + 1) as f64;
            phases[k] = rng.random_range(0.0..std::f64::consts::TAU);
        }
        Harmonics { freq, amps, phases }
    }

    fn eval(&self, time: f64) -> f64 {
        (0..3)
            .map(|k| {
                self.amps[k] * (std::f64::consts::TAU * (k + 1) as f64 * self.freq * time + self.phases[k]).sin()
            })
            .sum()
    }
}

/// Per-joint three-axis jitter curves.
struct JointJitter(Vec<[Harmonics; 3]>);

impl JointJitter {
    fn new(rng: &mut impl Rng, joints: usize, freq: f64, amplitude: f64) -> Self {
        JointJitter(
            (0..joints)
                .map(|_| {
                    [
                        Harmonics::random(rng, freq, amplitude),
                        Harmonics::random(rng, freq, amplitude),
                        Harmonics::random(rng, freq, amplitude),
                    ]
                })
                .collect(),
        )
    }

    fn rotation(&self, joint: usize, time: f64) -> Matrix3<f64> {
        let h = &self.0[joint];
        euler_zyx(h[0].eval(time), h[1].eval(time), h[2].eval(time))
    }
}

/// Procedural motion by forward kinematics from smooth joint-angle curves.
///
/// Every frame is shifted vertically so its lowest joint rests on `z = 0`.
pub fn generate_motion(skeleton: &Skeleton, kind: MotionKind, frames: usize, seed: u64, fps: f64) -> Result<Motion3<f64>> {
    if frames < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 frames, got {frames}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = skeleton.joint_count();
    let order = skeleton.topological_order();
    let roles = &skeleton.roles;
    let duration = (frames - 1) as f64 / fps;
    let tau = std::f64::consts::TAU;

    let step_freq = rng.random_range(0.8..1.1);
    let swing = rng.random_range(0.3..0.45);
    let speed = rng.random_range(0.9..1.4);
    let jitter_amp = if kind == MotionKind::RandomSmooth { 0.25 } else { 0.03 };
    let jitter_freq = rng.random_range(0.3..0.8);
    let jitter = JointJitter::new(&mut rng, n, jitter_freq, jitter_amp);
    let phase = rng.random_range(0.0..tau);
    let circle_radius = rng.random_range(1.0..1.5);
    let squat_depth = rng.random_range(0.25..0.4);
    let root_xy = [
        Harmonics::random(&mut rng, 0.25, 0.4),
        Harmonics::random(&mut rng, 0.25, 0.4),
    ];
    let root_yaw = Harmonics::random(&mut rng, 0.2, 0.5);

    let mut coords = Vec::with_capacity(frames * n);
    let mut local = vec![Matrix3::identity(); n];
    for f in 0..frames {
        let time = f as f64 / fps;
        let centered = time - duration / 2.0;
        for (j, r) in local.iter_mut().enumerate() {
            *r = jitter.rotation(j, time);
        }
        let gait = swing * (tau * step_freq * time + phase).sin();
        let (root_pos, heading) = match kind {
            MotionKind::Walker => (Vector3::new(speed * centered, 0.0, 0.0), 0.0),
            MotionKind::Circle => {
                let a = speed / circle_radius * centered;
                (
                    Vector3::new(circle_radius * a.cos(), circle_radius * a.sin(), 0.0),
                    a + std::f64::consts::FRAC_PI_2,
                )
            }
            MotionKind::Squat => (Vector3::zeros(), 0.0),
            MotionKind::RandomSmooth => (
                Vector3::new(root_xy[0].eval(time), root_xy[1].eval(time), 0.0),
                root_yaw.eval(time),
            ),
        };
        match kind {
            MotionKind::Walker | MotionKind::Circle => {
                local[roles.left_leg] *= euler_zyx(0.0, gait, 0.0);
                local[roles.right_leg] *= euler_zyx(0.0, -gait, 0.0);
                if let Some(a) = roles.right_arm {
                    local[a] *= euler_zyx(0.0, 0.6 * gait, 0.0);
                }
                if let Some(a) = roles.left_arm {
                    local[a] *= euler_zyx(0.0, -0.6 * gait, 0.0);
                }
                if let Some(s) = roles.spine {
                    local[s] *= euler_zyx(0.0, 0.08, 0.0);
                }
            }
            MotionKind::Squat => {
                let depth = squat_depth * 0.5 * (1.0 - (tau * 0.5 * step_freq * time + phase).cos());
                local[roles.left_leg] *= euler_zyx(0.0, 0.0, -depth * 1.4);
                local[roles.right_leg] *= euler_zyx(0.0, 0.0, depth * 1.4);
                if let Some(s) = roles.spine {
                    local[s] *= euler_zyx(0.0, depth * 1.5, 0.0);
                }
                for a in [roles.left_arm, roles.right_arm].into_iter().flatten() {
                    local[a] *= euler_zyx(0.0, -depth * 3.0, 0.0);
                }
            }
            MotionKind::RandomSmooth => {}
        }
        let root_rot = euler_zyx(heading, 0.0, 0.0) * local[skeleton.root()];
        let mut pos = skeleton.forward_kinematics(root_pos, &root_rot, &local, &order);
        let min_z = pos.iter().map(|p| p.z).fold(f64::INFINITY, f64::min);
        for p in &mut pos {
            p.z -= min_z;
        }
        coords.extend(pos);
    }
    Motion3::new(frames, n, coords, fps)
}

/// Ranges for the random rigid and camera augmentations. All ranges are
/// symmetric (`±range`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentParams {
    pub yaw_range: f64,
    pub translation_range: f64,
    pub cam_pitch_range: f64,
    pub cam_yaw_range: f64,
    pub cam_roll_range: f64,
    pub cam_distance_range: f64,
    pub seed: u64,
}

impl Default for AugmentParams {
    fn default() -> Self {
        AugmentParams {
            yaw_range: std::f64::consts::PI,
            translation_range: 0.5,
            cam_pitch_range: 0.15,
            cam_yaw_range: 0.35,
            cam_roll_range: 0.05,
            cam_distance_range: 0.5,
            seed: 0,
        }
    }
}

impl AugmentParams {
    pub fn none() -> Self {
        AugmentParams {
            yaw_range: 0.0,
            translation_range: 0.0,
            cam_pitch_range: 0.0,
            cam_yaw_range: 0.0,
            cam_roll_range: 0.0,
            cam_distance_range: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let r = [
            self.yaw_range,
            self.translation_range,
            self.cam_pitch_range,
            self.cam_yaw_range,
            self.cam_roll_range,
            self.cam_distance_range,
        ];
        if r.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
            return Err(Error::InvalidArgument("augmentation ranges must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// Rotates `m` about the world z-axis by `yaw` and shifts it by `(tx, ty)`.
pub fn rigid_transform(m: &Motion3<f64>, yaw: f64, tx: f64, ty: f64) -> Motion3<f64> {
    let (s, c) = yaw.sin_cos();
    m.map(|p| Vector3::new(c * p.x - s * p.y + tx, s * p.x + c * p.y + ty, p.z))
}

/// Random yaw and horizontal translation drawn from `p` (seeded by `p.seed`).
pub fn augment_motion(m: &Motion3<f64>, p: &AugmentParams) -> Motion3<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let yaw = sym(&mut rng, p.yaw_range);
    let tx = sym(&mut rng, p.translation_range);
    let ty = sym(&mut rng, p.translation_range);
    if yaw == 0.0 && tx == 0.0 && ty == 0.0 {
        return m.clone();
    }
    rigid_transform(m, yaw, tx, ty)
}

/// Explicit look-at perturbation of one camera.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CameraPerturbation {
    pub pitch: f64,
    pub yaw: f64,
    pub roll: f64,
    /// Added to the camera's distance from the origin (meters).
    pub distance: f64,
}

impl CameraPerturbation {
    pub fn is_zero(&self) -> bool {
        self.pitch == 0.0 && self.yaw == 0.0 && self.roll == 0.0 && self.distance == 0.0
    }
}

/// Moves a camera on its sphere around the origin (elevation, azimuth,
/// radius), re-aims it at the origin and rolls it about its optical axis.
pub fn perturb_camera(camera: &Camera<f64>, pert: &CameraPerturbation) -> Result<Camera<f64>> {
    if pert.is_zero() {
        return Ok(camera.clone());
    }
    let c = camera.center();
    let radius = c.norm();
    let azimuth = c.y.atan2(c.x) + pert.yaw;
    let elevation = (c.z / radius).asin() + pert.pitch;
    let new_radius = radius + pert.distance;
    if !(new_radius > 0.0) {
        return Err(Error::InvalidCamera("perturbed camera distance is not positive".into()));
    }
    let eye = Vector3::new(
        new_radius * elevation.cos() * azimuth.cos(),
        new_radius * elevation.cos() * azimuth.sin(),
        new_radius * elevation.sin(),
    );
    let aim = look_at_rotation(eye, Vector3::zeros())?;
    let roll = Rotation3::from_axis_angle(&Vector3::z_axis(), pert.roll).into_inner();
    let rotation = roll * aim;
    Camera::new(
        camera.fx,
        camera.fy,
        camera.cx,
        camera.cy,
        rotation,
        -(rotation * eye),
        camera.image_w,
        camera.image_h,
    )
}

/// Perturbs every non-primary camera of `base`; the primary view is kept.
pub fn sample_camera_rig(base: &CameraRig<f64>, p: &AugmentParams, seed: u64) -> Result<CameraRig<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cameras = base
        .cameras
        .iter()
        .enumerate()
        .map(|(v, cam)| {
            let pert = CameraPerturbation {
                pitch: sym(&mut rng, p.cam_pitch_range),
                yaw: sym(&mut rng, p.cam_yaw_range),
                roll: sym(&mut rng, p.cam_roll_range),
                distance: sym(&mut rng, p.cam_distance_range),
            };
            if v == base.primary_index {
                Ok(cam.clone())
            } else {
                perturb_camera(cam, &pert)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    CameraRig::new(cameras, base.primary_index)
}

/// One multi-view training example.
#[derive(Clone, Debug)]
pub struct Sample {
    pub index: usize,
    pub seed: u64,
    pub kind: MotionKind,
    pub motion: Motion3<f64>,
    pub rig: CameraRig<f64>,
    pub views: Vec<GlobalMotion2D<f64>>,
    pub encoded: Vec<DisentangledMotion<f64>>,
    pub pointmaps: Vec<Pointmap<f64>>,
}

#[derive(Clone, Debug)]
pub struct DatasetSpec {
    pub skeleton: Skeleton,
    pub kinds: Vec<MotionKind>,
    pub count: usize,
    pub frames: usize,
    pub fps: f64,
    pub base_rig: CameraRig<f64>,
    pub augment: AugmentParams,
    pub grid: usize,
}

impl DatasetSpec {
    pub fn new(count: usize, frames: usize, seed: u64) -> Self {
        DatasetSpec {
            skeleton: Skeleton::toy8(),
            kinds: MotionKind::ALL.to_vec(),
            count,
            frames,
            fps: crate::motion::DEFAULT_FPS,
            base_rig: CameraRig::default_ring(),
            augment: AugmentParams {
                seed,
                ..AugmentParams::default()
            },
            grid: geometry::DEFAULT_GRID,
        }
    }
}

type ViewArrays = (Vec<GlobalMotion2D<f64>>, Vec<DisentangledMotion<f64>>, Vec<Pointmap<f64>>);

/// Assembles the per-view arrays for a motion seen by a rig.
pub fn make_views(
    motion: &Motion3<f64>,
    rig: &CameraRig<f64>,
    root: usize,
    grid: usize,
) -> Result<ViewArrays> {
    let views = geometry::project_rig(rig, motion)?;
    let encoded = views
        .iter()
        .map(|v| representation::encode(v, root))
        .collect::<Result<Vec<_>>>()?;
    let pointmaps = geometry::rig_pointmaps(rig, grid, grid)?;
    Ok((views, encoded, pointmaps))
}

pub fn build_sample(spec: &DatasetSpec, index: usize) -> Result<Sample> {
    if spec.kinds.is_empty() {
        return Err(Error::InvalidArgument("no motion kinds requested".into()));
    }
    let kind = spec.kinds[index % spec.kinds.len()];
    let seed = sample_seed(spec.augment.seed, index);
    let mut last_err = None;
    // Rare draws put a joint behind a camera; redraw deterministically.
    for attempt in 0..8u64 {
        let s = mix_seed(seed.wrapping_add(attempt));
        let raw = generate_motion(&spec.skeleton, kind, spec.frames, mix_seed(s ^ 1), spec.fps)?;
        let motion = augment_motion(
            &raw,
            &AugmentParams {
                seed: mix_seed(s ^ 2),
                ..spec.augment.clone()
            },
        );
        let rig = sample_camera_rig(&spec.base_rig, &spec.augment, mix_seed(s ^ 3))?;
        match make_views(&motion, &rig, spec.skeleton.root(), spec.grid) {
            Ok((views, encoded, pointmaps)) => {
                return Ok(Sample {
                    index,
                    seed,
                    kind,
                    motion,
                    rig,
                    views,
                    encoded,
                    pointmaps,
                })
            }
            Err(e @ Error::NonPositiveDepth { .. }) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last_err.expect("loop ran"))
}

pub fn build_samples(spec: &DatasetSpec) -> Result<Vec<Sample>> {
    if spec.count < 1 {
        return Err(Error::InvalidArgument("dataset count must be at least 1".into()));
    }
    spec.augment.validate()?;
    (0..spec.count).map(|i| build_sample(spec, i)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub count: usize,
    pub frames: usize,
    pub joints: usize,
    pub views: usize,
    pub world_min: [f64; 3],
    pub world_max: [f64; 3],
    pub pixel_min: [f64; 2],
    pub pixel_max: [f64; 2],
}

impl DatasetSummary {
    pub fn of(samples: &[Sample]) -> Self {
        let mut wmin = [f64::INFINITY; 3];
        let mut wmax = [f64::NEG_INFINITY; 3];
        let mut pmin = [f64::INFINITY; 2];
        let mut pmax = [f64::NEG_INFINITY; 2];
        for s in samples {
            for p in s.motion.coords() {
                for k in 0..3 {
                    wmin[k] = wmin[k].min(p[k]);
                    wmax[k] = wmax[k].max(p[k]);
                }
            }
            for v in &s.views {
                for p in v.coords() {
                    for k in 0..2 {
                        pmin[k] = pmin[k].min(p[k]);
                        pmax[k] = pmax[k].max(p[k]);
                    }
                }
            }
        }
        let first = &samples[0];
        DatasetSummary {
            count: samples.len(),
            frames: first.motion.frames(),
            joints: first.motion.joints(),
            views: first.rig.views(),
            world_min: wmin,
            world_max: wmax,
            pixel_min: pmin,
            pixel_max: pmax,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EncodedDoc {
    pub root_joint: usize,
    pub local: Vec<Vec<[f64; 2]>>,
    pub trajectory: Vec<[f64; 2]>,
    pub scale: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PointmapDoc {
    pub grid_w: usize,
    pub grid_h: usize,
    pub points: Vec<[f64; 3]>,
    pub valid: Vec<bool>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ViewDoc {
    pub view_index: usize,
    pub coords: Vec<Vec<[f64; 2]>>,
    pub encoded: EncodedDoc,
    pub pointmap: PointmapDoc,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SampleDoc {
    pub format_version: u32,
    pub index: usize,
    pub seed: u64,
    pub kind: MotionKind,
    pub motion: MotionDoc,
    pub rig: RigDoc,
    pub views: Vec<ViewDoc>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub skeleton: String,
    pub count: usize,
    pub frames: usize,
    pub fps: f64,
    pub grid: usize,
    pub kinds: Vec<MotionKind>,
    pub augment: AugmentParams,
    pub base_rig: RigDoc,
    pub files: Vec<String>,
    pub sample_seeds: Vec<u64>,
    pub summary: DatasetSummary,
}

fn v2(p: &Vector2<f64>) -> [f64; 2] {
    [p.x, p.y]
}

impl SampleDoc {
    pub fn from_sample(s: &Sample, joint_names: &[String]) -> Self {
        let views = (0..s.rig.views())
            .map(|v| {
                let g = &s.views[v];
                let e = &s.encoded[v];
                let pm = &s.pointmaps[v];
                let per = e.joints() - 1;
                ViewDoc {
                    view_index: v,
                    coords: (0..g.frames()).map(|t| g.frame(t).iter().map(v2).collect()).collect(),
                    encoded: EncodedDoc {
                        root_joint: e.root_joint,
                        local: e.local.chunks(per).map(|c| c.iter().map(v2).collect()).collect(),
                        trajectory: e.trajectory.iter().map(v2).collect(),
                        scale: e.scale.iter().map(v2).collect(),
                    },
                    pointmap: PointmapDoc {
                        grid_w: pm.grid_w,
                        grid_h: pm.grid_h,
                        points: pm.points.iter().map(|p| [p.x, p.y, p.z]).collect(),
                        valid: pm.valid.clone(),
                    },
                }
            })
            .collect();
        SampleDoc {
            format_version: DATASET_FORMAT_VERSION,
            index: s.index,
            seed: s.seed,
            kind: s.kind,
            motion: MotionDoc::from_motion(&s.motion, joint_names),
            rig: RigDoc::from(&s.rig),
            views,
        }
    }

    pub fn to_sample(&self) -> Result<Sample> {
        let motion = self.motion.to_motion()?;
        let rig = CameraRig::try_from(&self.rig)?;
        if self.views.len() != rig.views() {
            return Err(Error::Parse {
                context: format!("sample {}", self.index),
                message: "view count differs from rig".into(),
            });
        }
        let mut views = Vec::new();
        let mut encoded = Vec::new();
        let mut pointmaps = Vec::new();
        let joints = motion.joints();
        for vd in &self.views {
            let frames = vd.coords.len();
            let coords = vd.coords.iter().flatten().map(|p| Vector2::from(*p)).collect();
            views.push(GlobalMotion2D::new(frames, joints, coords, vd.view_index, motion.fps)?);
            let e = &vd.encoded;
            let mut d = DisentangledMotion::new(
                frames,
                joints,
                e.root_joint,
                e.local.iter().flatten().map(|p| Vector2::from(*p)).collect(),
                e.trajectory.iter().map(|p| Vector2::from(*p)).collect(),
                e.scale.iter().map(|p| Vector2::from(*p)).collect(),
            )?;
            d.view_index = vd.view_index;
            d.fps = motion.fps;
            encoded.push(d);
            let pm = &vd.pointmap;
            if pm.points.len() != pm.grid_w * pm.grid_h || pm.valid.len() != pm.points.len() {
                return Err(Error::Parse {
                    context: format!("sample {} view {}", self.index, vd.view_index),
                    message: "pointmap size".into(),
                });
            }
            pointmaps.push(Pointmap {
                grid_w: pm.grid_w,
                grid_h: pm.grid_h,
                points: pm.points.iter().map(|p| Vector3::from(*p)).collect(),
                valid: pm.valid.clone(),
                view_index: vd.view_index,
            });
        }
        Ok(Sample {
            index: self.index,
            seed: self.seed,
            kind: self.kind,
            motion,
            rig,
            views,
            encoded,
            pointmaps,
        })
    }
}

pub fn sample_file_name(index: usize) -> String {
    format!("sample_{index:05}.json")
}

/// Writes `spec.count` samples plus a manifest into `out_dir` (created if
/// missing).
pub fn build_dataset(spec: &DatasetSpec, out_dir: &Path) -> Result<DatasetSummary> {
    let samples = build_samples(spec)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut files = Vec::with_capacity(samples.len());
    for s in &samples {
        let name = sample_file_name(s.index);
        let doc = SampleDoc::from_sample(s, &spec.skeleton.joint_names);
        let text = serde_json::to_string(&doc).expect("sample serializes");
        write_atomic(&out_dir.join(&name), text.as_bytes())?;
        files.push(name);
    }
    let summary = DatasetSummary::of(&samples);
    let manifest = Manifest {
        format_version: DATASET_FORMAT_VERSION,
        skeleton: spec.skeleton.name.clone(),
        count: spec.count,
        frames: spec.frames,
        fps: spec.fps,
        grid: spec.grid,
        kinds: spec.kinds.clone(),
        augment: spec.augment.clone(),
        base_rig: RigDoc::from(&spec.base_rig),
        files,
        sample_seeds: samples.iter().map(|s| s.seed).collect(),
        summary: summary.clone(),
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_atomic(&out_dir.join(MANIFEST_FILE), text.as_bytes())?;
    Ok(summary)
}

pub fn load_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = crate::io::read_text(&path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        context: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn load_dataset(dir: &Path) -> Result<(Manifest, Vec<Sample>)> {
    let manifest = load_manifest(dir)?;
    let samples = manifest
        .files
        .iter()
        .map(|f| {
            let path = dir.join(f);
            let text = crate::io::read_text(&path)?;
            let doc: SampleDoc = serde_json::from_str(&text).map_err(|e| Error::Parse {
                context: path.display().to_string(),
                message: e.to_string(),
            })?;
            doc.to_sample()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest, samples))
}

/// Self-consistency measurements for one stored sample.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleCheck {
    /// Max |stored 2D − project(rig, motion)| (px).
    pub projection_error: f64,
    /// Max |triangulate(decode(encoded)) − motion| (m).
    pub roundtrip_error: f64,
    /// Max |z| over valid pointmap cells (m).
    pub pointmap_plane_error: f64,
}

impl SampleCheck {
    pub const PROJECTION_TOL: f64 = 1e-9;
    pub const ROUNDTRIP_TOL: f64 = 1e-6;
    pub const PLANE_TOL: f64 = 1e-9;

    pub fn passes(&self) -> bool {
        self.projection_error <= Self::PROJECTION_TOL
            && self.roundtrip_error <= Self::ROUNDTRIP_TOL
            && self.pointmap_plane_error <= Self::PLANE_TOL
    }
}

pub fn check_sample(s: &Sample) -> Result<SampleCheck> {
    let projected = geometry::project_rig(&s.rig, &s.motion)?;
    let projection_error = projected
        .iter()
        .zip(&s.views)
        .map(|(a, b)| a.max_abs_diff(b))
        .fold(0.0, f64::max);
    let decoded = s
        .encoded
        .iter()
        .map(representation::decode)
        .collect::<Result<Vec<_>>>()?;
    let tri = geometry::triangulate(&s.rig, &decoded, None)?;
    let roundtrip_error = tri.max_abs_diff(&s.motion);
    let pointmap_plane_error = s
        .pointmaps
        .iter()
        .flat_map(|pm| pm.points.iter().zip(&pm.valid).filter(|(_, &v)| v).map(|(p, _)| p.z.abs()))
        .fold(0.0, f64::max);
    Ok(SampleCheck {
        projection_error,
        roundtrip_error,
        pointmap_plane_error,
    })
}
