//! The 17-joint human skeleton: joint indices, bone tree, and body-part tags.

use serde::{Deserialize, Serialize};

/// Number of joints in a pose.
pub const JOINT_COUNT: usize = 17;
/// Number of bones (edges of the skeleton tree).
pub const BONE_COUNT: usize = 16;

pub const PELVIS: usize = 0;
pub const R_HIP: usize = 1;
pub const R_KNEE: usize = 2;
pub const R_ANKLE: usize = 3;
pub const L_HIP: usize = 4;
pub const L_KNEE: usize = 5;
pub const L_ANKLE: usize = 6;
pub const SPINE: usize = 7;
pub const THORAX: usize = 8;
pub const NECK: usize = 9;
pub const HEAD: usize = 10;
pub const L_SHOULDER: usize = 11;
pub const L_ELBOW: usize = 12;
pub const L_WRIST: usize = 13;
pub const R_SHOULDER: usize = 14;
pub const R_ELBOW: usize = 15;
pub const R_WRIST: usize = 16;

pub const JOINT_NAMES: [&str; JOINT_COUNT] = [
    "pelvis",
    "r_hip",
    "r_knee",
    "r_ankle",
    "l_hip",
    "l_knee",
    "l_ankle",
    "spine",
    "thorax",
    "neck",
    "head",
    "l_shoulder",
    "l_elbow",
    "l_wrist",
    "r_shoulder",
    "r_elbow",
    "r_wrist",
];

/// Coarse body-part tag carried by each bone, used for contact masking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BodyPart {
    PelvisHip,
    Thigh,
    ShankFoot,
    Torso,
    Head,
    Arm,
}

impl BodyPart {
    /// Bit used in per-voxel part masks.
    pub const fn bit(self) -> u8 {
        1 << (self as u8)
    }
}

/// One skeleton edge (parent joint, child joint, part tag).
#[derive(Debug, Clone, Copy)]
pub struct Bone {
    pub a: usize,
    pub b: usize,
    pub part: BodyPart,
}

const fn bone(a: usize, b: usize, part: BodyPart) -> Bone {
    Bone { a, b, part }
}

/// The skeleton tree rooted at the pelvis: 16 bones spanning all 17 joints.
pub const BONES: [Bone; BONE_COUNT] = [
    bone(PELVIS, R_HIP, BodyPart::PelvisHip),
    bone(R_HIP, R_KNEE, BodyPart::Thigh),
    bone(R_KNEE, R_ANKLE, BodyPart::ShankFoot),
    bone(PELVIS, L_HIP, BodyPart::PelvisHip),
    bone(L_HIP, L_KNEE, BodyPart::Thigh),
    bone(L_KNEE, L_ANKLE, BodyPart::ShankFoot),
    bone(PELVIS, SPINE, BodyPart::Torso),
    bone(SPINE, THORAX, BodyPart::Torso),
    bone(THORAX, NECK, BodyPart::Torso),
    bone(NECK, HEAD, BodyPart::Head),
    bone(THORAX, L_SHOULDER, BodyPart::Arm),
    bone(L_SHOULDER, L_ELBOW, BodyPart::Arm),
    bone(L_ELBOW, L_WRIST, BodyPart::Arm),
    bone(THORAX, R_SHOULDER, BodyPart::Arm),
    bone(R_SHOULDER, R_ELBOW, BodyPart::Arm),
    bone(R_ELBOW, R_WRIST, BodyPart::Arm),
];

/// Whether a pose stands or sits. Decides which body parts count as contact
/// parts: feet for standing, thighs plus pelvis region for sitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoseCategory {
    Standing,
    Sitting,
}

impl PoseCategory {
    /// Bit mask over [`BodyPart`] of the parts expected to touch a surface.
    pub fn contact_parts(self) -> u8 {
        match self {
            PoseCategory::Standing => BodyPart::ShankFoot.bit(),
            PoseCategory::Sitting => BodyPart::Thigh.bit() | BodyPart::PelvisHip.bit(),
        }
    }
}

impl std::fmt::Display for PoseCategory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PoseCategory::Standing => write!(f, "standing"),
            PoseCategory::Sitting => write!(f, "sitting"),
        }
    }
}
