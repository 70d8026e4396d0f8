//! Joint topologies and forward kinematics.
//!
//! Rest poses are z-up, facing `+x`, with the body's left on `+y`. Each
//! joint stores the offset from its parent in the rest pose. A per-joint
//! rotation `R_j` turns the bone that ends at `j`: the global frame is
//! `G_j = G_parent · R_j` and the position `p_j = p_parent + G_j · offset_j`.

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Joints that drive the procedural gaits. Each entry names the joint at the
/// far end of the bone that the motion rotates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaitRoles {
    pub left_leg: usize,
    pub right_leg: usize,
    pub left_arm: Option<usize>,
    pub right_arm: Option<usize>,
    pub spine: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Skeleton {
    pub name: String,
    pub joint_names: Vec<String>,
    /// `parent[root] == root`.
    pub parent: Vec<usize>,
    pub rest_offsets: Vec<[f64; 3]>,
    /// Distance to parent; 0 for the root.
    pub rest_bone_lengths: Vec<f64>,
    pub foot_joints: Vec<usize>,
    pub roles: GaitRoles,
}

impl Skeleton {
    pub fn new(
        name: &str,
        joint_names: &[&str],
        parent: &[usize],
        rest_offsets: &[[f64; 3]],
        foot_joints: &[usize],
        roles: GaitRoles,
    ) -> Result<Self> {
        let rest_bone_lengths = rest_offsets
            .iter()
            .map(|o| Vector3::from(*o).norm())
            .collect();
        let s = Skeleton {
            name: name.to_string(),
            joint_names: joint_names.iter().map(|s| s.to_string()).collect(),
            parent: parent.to_vec(),
            rest_offsets: rest_offsets.to_vec(),
            rest_bone_lengths,
            foot_joints: foot_joints.to_vec(),
            roles,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn joint_count(&self) -> usize {
        self.parent.len()
    }

    pub fn root(&self) -> usize {
        self.parent
            .iter()
            .enumerate()
            .find(|(j, &p)| *j == p)
            .map(|(j, _)| j)
            .expect("validated skeleton has a root")
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.parent.len();
        let bad = |m: String| Err(Error::InvalidSkeleton(m));
        if n < 2 {
            return bad("need at least two joints".into());
        }
        if self.joint_names.len() != n || self.rest_offsets.len() != n || self.rest_bone_lengths.len() != n {
            return bad("per-joint arrays disagree in length".into());
        }
        let roots: Vec<_> = (0..n).filter(|&j| self.parent[j] == j).collect();
        if roots.len() != 1 {
            return bad(format!("expected exactly one root, found {}", roots.len()));
        }
        for j in 0..n {
            if self.parent[j] >= n {
                return bad(format!("joint {j} has out-of-range parent"));
            }
            let mut k = j;
            for _ in 0..=n {
                k = self.parent[k];
            }
            if k != roots[0] {
                return bad(format!("joint {j} does not reach the root (cycle)"));
            }
            if j != roots[0] && !(self.rest_bone_lengths[j] > 0.0) {
                return bad(format!("bone ending at joint {j} has zero rest length"));
            }
        }
        let r = &self.roles;
        let all = [Some(r.left_leg), Some(r.right_leg), r.left_arm, r.right_arm, r.spine];
        if all.iter().flatten().chain(&self.foot_joints).any(|&j| j >= n) {
            return bad("role or foot joint out of range".into());
        }
        Ok(())
    }

    /// Joints ordered so every parent precedes its children.
    pub fn topological_order(&self) -> Vec<usize> {
        let n = self.joint_count();
        let depth = |mut j: usize| {
            let mut d = 0;
            while self.parent[j] != j {
                j = self.parent[j];
                d += 1;
            }
            d
        };
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&j| (depth(j), j));
        order
    }

    /// Forward kinematics for one frame.
    ///
    /// `root_rotation` orients the whole body, `local` holds one rotation
    /// per joint (the root entry is ignored).
    pub fn forward_kinematics(
        &self,
        root_position: Vector3<f64>,
        root_rotation: &Matrix3<f64>,
        local: &[Matrix3<f64>],
        order: &[usize],
    ) -> Vec<Vector3<f64>> {
        let n = self.joint_count();
        let mut global = vec![Matrix3::identity(); n];
        let mut pos = vec![Vector3::zeros(); n];
        for &j in order {
            let p = self.parent[j];
            if p == j {
                global[j] = *root_rotation;
                pos[j] = root_position;
            } else {
                global[j] = global[p] * local[j];
                pos[j] = pos[p] + global[j] * Vector3::from(self.rest_offsets[j]);
            }
        }
        pos
    }

    /// Compact 8-joint body used by default.
    pub fn toy8() -> Self {
        Skeleton::new(
            "toy8",
            &["pelvis", "chest", "head", "l_hip", "l_foot", "r_hip", "r_foot", "r_hand"],
            &[0, 0, 1, 0, 3, 0, 5, 1],
            &[
                [0.0, 0.0, 0.0],
                [0.0, 0.0, 0.45],
                [0.0, 0.0, 0.25],
                [0.0, 0.12, -0.08],
                [0.0, 0.0, -0.85],
                [0.0, -0.12, -0.08],
                [0.0, 0.0, -0.85],
                [0.0, -0.22, -0.35],
            ],
            &[4, 6],
            GaitRoles {
                left_leg: 4,
                right_leg: 6,
                left_arm: None,
                right_arm: Some(7),
                spine: Some(1),
            },
        )
        .expect("toy8 is valid")
    }

    /// SMPL 22-joint body topology with approximate adult rest offsets.
    pub fn smpl22() -> Self {
        Skeleton::new(
            "smpl22",
            &[
                "pelvis", "l_hip", "r_hip", "spine1", "l_knee", "r_knee", "spine2", "l_ankle",
                "r_ankle", "spine3", "l_foot", "r_foot", "neck", "l_collar", "r_collar", "head",
                "l_shoulder", "r_shoulder", "l_elbow", "r_elbow", "l_wrist", "r_wrist",
            ],
            &[0, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19],
            &[
                [0.0, 0.0, 0.0],
                [0.0, 0.06, -0.09],
                [0.0, -0.06, -0.09],
                [0.0, 0.0, 0.11],
                [0.0, 0.0, -0.38],
                [0.0, 0.0, -0.38],
                [0.0, 0.0, 0.13],
                [0.0, 0.0, -0.40],
                [0.0, 0.0, -0.40],
                [0.0, 0.0, 0.05],
                [0.12, 0.0, -0.05],
                [0.12, 0.0, -0.05],
                [0.0, 0.0, 0.21],
                [0.0, 0.07, 0.12],
                [0.0, -0.07, 0.12],
                [0.01, 0.0, 0.09],
                [0.0, 0.11, 0.02],
                [0.0, -0.11, 0.02],
                [0.0, 0.02, -0.26],
                [0.0, -0.02, -0.26],
                [0.0, 0.0, -0.25],
                [0.0, 0.0, -0.25],
            ],
            &[10, 11],
            GaitRoles {
                left_leg: 4,
                right_leg: 5,
                left_arm: Some(18),
                right_arm: Some(19),
                spine: Some(3),
            },
        )
        .expect("smpl22 is valid")
    }

    /// COCO 17-keypoint topology rooted at the left hip.
    pub fn coco17() -> Self {
        Skeleton::new(
            "coco17",
            &[
                "nose", "l_eye", "r_eye", "l_ear", "r_ear", "l_shoulder", "r_shoulder", "l_elbow",
                "r_elbow", "l_wrist", "r_wrist", "l_hip", "r_hip", "l_knee", "r_knee", "l_ankle",
                "r_ankle",
            ],
            &[5, 0, 0, 1, 2, 11, 5, 5, 6, 7, 8, 11, 11, 11, 12, 13, 14],
            &[
                [0.08, -0.18, 0.20],
                [-0.02, 0.03, 0.03],
                [-0.02, -0.03, 0.03],
                [-0.06, 0.04, 0.0],
                [-0.06, -0.04, 0.0],
                [0.0, 0.02, 0.52],
                [0.0, -0.36, 0.0],
                [0.0, 0.02, -0.28],
                [0.0, -0.02, -0.28],
                [0.0, 0.0, -0.25],
                [0.0, 0.0, -0.25],
                [0.0, 0.0, 0.0],
                [0.0, -0.18, 0.0],
                [0.0, 0.0, -0.42],
                [0.0, 0.0, -0.42],
                [0.0, 0.0, -0.42],
                [0.0, 0.0, -0.42],
            ],
            &[15, 16],
            GaitRoles {
                left_leg: 13,
                right_leg: 14,
                left_arm: Some(7),
                right_arm: Some(8),
                spine: Some(5),
            },
        )
        .expect("coco17 is valid")
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "toy8" => Ok(Self::toy8()),
            "smpl22" => Ok(Self::smpl22()),
            "coco17" => Ok(Self::coco17()),
            other => Err(Error::InvalidSkeleton(format!("unknown skeleton `{other}`"))),
        }
    }
}

/// `Rz(yaw) · Ry(pitch) · Rx(roll)`.
pub fn euler_zyx(yaw: f64, pitch: f64, roll: f64) -> Matrix3<f64> {
    Rotation3::from_euler_angles(roll, pitch, yaw).into_inner()
}
