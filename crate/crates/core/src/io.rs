//! JSON documents for 3D and 2D motions.
//!
//! ```text
//! { "format_version": 1, "fps": 30.0, "joint_names": [...],
//!   "frames": [[[x, y, z], ...], ...] }          // T × J × 3, meters
//! { "format_version": 1, "fps": 30.0, "joint_names": [...], "view_index": 0,
//!   "frames": [[[u, v], ...], ...] }             // T × J × 2, pixels
//! ```
//!
//! Numbers are written with shortest round-trip formatting, so files reload
//! bit-exactly.

use std::fs;
use std::path::Path;

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::motion::{GlobalMotion2D, Motion3};

pub const MOTION_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MotionDoc {
    pub format_version: u32,
    pub fps: f64,
    pub joint_names: Vec<String>,
    pub frames: Vec<Vec<[f64; 3]>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Motion2Doc {
    pub format_version: u32,
    pub fps: f64,
    pub joint_names: Vec<String>,
    #[serde(default)]
    pub view_index: usize,
    pub frames: Vec<Vec<[f64; 2]>>,
}

fn parse_err(context: &str, message: impl ToString) -> Error {
    Error::Parse {
        context: context.to_string(),
        message: message.to_string(),
    }
}

fn check_frames<const N: usize>(context: &str, names: &[String], frames: &[Vec<[f64; N]>]) -> Result<()> {
    if frames.is_empty() {
        return Err(parse_err(context, "field `frames` is empty"));
    }
    for (t, f) in frames.iter().enumerate() {
        if f.len() != names.len() {
            return Err(parse_err(
                context,
                format!(
                    "field `frames[{t}]` has {} joints but `joint_names` lists {}",
                    f.len(),
                    names.len()
                ),
            ));
        }
        for (j, p) in f.iter().enumerate() {
            if p.iter().any(|x| !x.is_finite()) {
                return Err(parse_err(context, format!("field `frames[{t}][{j}]` is not finite")));
            }
        }
    }
    Ok(())
}

impl MotionDoc {
    pub fn from_motion(m: &Motion3<f64>, joint_names: &[String]) -> Self {
        MotionDoc {
            format_version: MOTION_FORMAT_VERSION,
            fps: m.fps,
            joint_names: joint_names.to_vec(),
            frames: (0..m.frames())
                .map(|t| m.frame(t).iter().map(|p| [p.x, p.y, p.z]).collect())
                .collect(),
        }
    }

    pub fn to_motion(&self) -> Result<Motion3<f64>> {
        let ctx = "motion";
        if self.format_version != MOTION_FORMAT_VERSION {
            return Err(parse_err(ctx, format!("unsupported `format_version` {}", self.format_version)));
        }
        check_frames(ctx, &self.joint_names, &self.frames)?;
        let coords = self.frames.iter().flatten().map(|p| Vector3::from(*p)).collect();
        Motion3::new(self.frames.len(), self.joint_names.len(), coords, self.fps)
    }
}

impl Motion2Doc {
    pub fn from_motion(m: &GlobalMotion2D<f64>, joint_names: &[String]) -> Self {
        Motion2Doc {
            format_version: MOTION_FORMAT_VERSION,
            fps: m.fps,
            joint_names: joint_names.to_vec(),
            view_index: m.view_index,
            frames: (0..m.frames())
                .map(|t| m.frame(t).iter().map(|p| [p.x, p.y]).collect())
                .collect(),
        }
    }

    pub fn to_motion(&self) -> Result<GlobalMotion2D<f64>> {
        let ctx = "2d motion";
        if self.format_version != MOTION_FORMAT_VERSION {
            return Err(parse_err(ctx, format!("unsupported `format_version` {}", self.format_version)));
        }
        check_frames(ctx, &self.joint_names, &self.frames)?;
        let coords = self.frames.iter().flatten().map(|p| Vector2::from(*p)).collect();
        GlobalMotion2D::new(self.frames.len(), self.joint_names.len(), coords, self.view_index, self.fps)
    }
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Writes `bytes` to a sibling temporary file and renames it into place, so
/// readers never observe a partially written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("{} has no file name", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, bytes).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

pub fn parse_motion(text: &str) -> Result<(Motion3<f64>, Vec<String>)> {
    let doc: MotionDoc = serde_json::from_str(text).map_err(|e| parse_err("motion", e))?;
    Ok((doc.to_motion()?, doc.joint_names))
}

pub fn parse_motion2d(text: &str) -> Result<(GlobalMotion2D<f64>, Vec<String>)> {
    let doc: Motion2Doc = serde_json::from_str(text).map_err(|e| parse_err("2d motion", e))?;
    Ok((doc.to_motion()?, doc.joint_names))
}

pub fn read_motion(path: &Path) -> Result<(Motion3<f64>, Vec<String>)> {
    parse_motion(&read_text(path)?).map_err(|e| with_path(e, path))
}

pub fn read_motion2d(path: &Path) -> Result<(GlobalMotion2D<f64>, Vec<String>)> {
    parse_motion2d(&read_text(path)?).map_err(|e| with_path(e, path))
}

pub fn write_motion(path: &Path, m: &Motion3<f64>, joint_names: &[String]) -> Result<()> {
    let text = serde_json::to_string(&MotionDoc::from_motion(m, joint_names)).expect("motion serializes");
    write_atomic(path, text.as_bytes())
}

pub fn write_motion2d(path: &Path, m: &GlobalMotion2D<f64>, joint_names: &[String]) -> Result<()> {
    let text = serde_json::to_string(&Motion2Doc::from_motion(m, joint_names)).expect("motion serializes");
    write_atomic(path, text.as_bytes())
}

fn with_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Parse { context, message } => Error::Parse {
            context: format!("{context} ({})", path.display()),
            message,
        },
        other => other,
    }
}
