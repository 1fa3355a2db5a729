//! Pose containers, normalization, the 30-class pose library, and
//! nearest-neighbor retrieval of 3D gestures for 2D queries.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::skeleton::{PoseCategory, JOINT_COUNT, PELVIS};

/// Reserved class id for "no pose here" in location heat maps.
pub const BACKGROUND_CLASS: u32 = 31;
/// Number of foreground pose classes.
pub const CLASS_COUNT: u32 = 30;

/// A 3D pose: 17 world-frame joints plus the standing/sitting category.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose3D {
    joints: [Vector3<f64>; JOINT_COUNT],
    pub category: PoseCategory,
}

impl Pose3D {
    pub fn new(joints: [Vector3<f64>; JOINT_COUNT], category: PoseCategory) -> Result<Self> {
        for (j, p) in joints.iter().enumerate() {
            if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
                return Err(Error::DegeneratePose(format!(
                    "joint {j} has non-finite coordinates"
                )));
            }
        }
        Ok(Self { joints, category })
    }

    pub fn joints(&self) -> &[Vector3<f64>; JOINT_COUNT] {
        &self.joints
    }

    pub fn pelvis(&self) -> Vector3<f64> {
        self.joints[PELVIS]
    }

    /// Rigidly translated copy.
    pub fn translated(&self, delta: Vector3<f64>) -> Self {
        let mut joints = self.joints;
        for j in joints.iter_mut() {
            *j += delta;
        }
        Self {
            joints,
            category: self.category,
        }
    }
}

/// Centers the pelvis at the origin and scales so the farthest joint sits at
/// distance 1. No rotation is applied, so gesture orientation survives.
pub fn normalize_pose(
    joints: &[Vector3<f64>; JOINT_COUNT],
) -> Result<[Vector3<f64>; JOINT_COUNT]> {
    let pelvis = joints[PELVIS];
    let mut out = [Vector3::zeros(); JOINT_COUNT];
    let mut radius: f64 = 0.0;
    for (o, j) in out.iter_mut().zip(joints.iter()) {
        *o = j - pelvis;
        radius = radius.max(o.norm());
    }
    if radius <= 0.0 || !radius.is_finite() {
        return Err(Error::DegeneratePose(
            "all joints coincide, cannot normalize".into(),
        ));
    }
    for o in out.iter_mut() {
        *o /= radius;
    }
    Ok(out)
}

/// 2D counterpart of [`normalize_pose`]: pelvis-centered, unit max radius.
pub fn normalize_pose_2d(joints: &[[f64; 2]; JOINT_COUNT]) -> Result<[[f64; 2]; JOINT_COUNT]> {
    let pelvis = joints[PELVIS];
    let mut out = [[0.0; 2]; JOINT_COUNT];
    let mut radius: f64 = 0.0;
    for (o, j) in out.iter_mut().zip(joints.iter()) {
        o[0] = j[0] - pelvis[0];
        o[1] = j[1] - pelvis[1];
        radius = radius.max((o[0] * o[0] + o[1] * o[1]).sqrt());
    }
    if radius <= 0.0 || !radius.is_finite() {
        return Err(Error::DegeneratePose(
            "all 2D joints coincide, cannot normalize".into(),
        ));
    }
    for o in out.iter_mut() {
        o[0] /= radius;
        o[1] /= radius;
    }
    Ok(out)
}

/// One of the 30 gesture classes, represented by its normalized center pose.
#[derive(Debug, Clone)]
pub struct PoseClass {
    pub class_id: u32,
    pub category: PoseCategory,
    pub center: [Vector3<f64>; JOINT_COUNT],
}

/// The 30-entry class library. Class ids are 1..=30; 31 is the background
/// class and never appears here.
#[derive(Debug, Clone)]
pub struct PoseClassLibrary {
    classes: Vec<PoseClass>,
}

impl PoseClassLibrary {
    /// Validates and sorts the entries: ids must cover 1..=30 exactly and
    /// every center must be a fixed point of [`normalize_pose`] within 1e-9.
    pub fn new(mut classes: Vec<PoseClass>) -> Result<Self> {
        if classes.len() != CLASS_COUNT as usize {
            return Err(Error::invalid(format!(
                "class library must hold {CLASS_COUNT} entries, got {}",
                classes.len()
            )));
        }
        classes.sort_by_key(|c| c.class_id);
        for (i, c) in classes.iter().enumerate() {
            if c.class_id != i as u32 + 1 {
                return Err(Error::invalid(format!(
                    "class ids must cover 1..={CLASS_COUNT} uniquely; missing or duplicate id near {}",
                    c.class_id
                )));
            }
            let renorm = normalize_pose(&c.center)?;
            let drift = c
                .center
                .iter()
                .zip(renorm.iter())
                .map(|(a, b)| (a - b).abs().max())
                .fold(0.0_f64, f64::max);
            if drift > 1e-9 {
                return Err(Error::invalid(format!(
                    "center of class {} is not normalized (drift {drift})",
                    c.class_id
                )));
            }
        }
        Ok(Self { classes })
    }

    pub fn classes(&self) -> &[PoseClass] {
        &self.classes
    }

    pub fn get(&self, class_id: u32) -> Result<&PoseClass> {
        if !(1..=CLASS_COUNT).contains(&class_id) {
            return Err(Error::UnknownClass(class_id));
        }
        Ok(&self.classes[class_id as usize - 1])
    }
}

/// Looks up the standing/sitting tag of a class.
pub fn pose_category(class_id: u32, lib: &PoseClassLibrary) -> Result<PoseCategory> {
    Ok(lib.get(class_id)?.category)
}

/// Assigns a pose to the class whose normalized center is nearest in
/// Euclidean distance; ties go to the smallest class id.
pub fn assign_pose_class(
    joints: &[Vector3<f64>; JOINT_COUNT],
    lib: &PoseClassLibrary,
) -> Result<u32> {
    let q = normalize_pose(joints)?;
    let mut best = (f64::INFINITY, 0_u32);
    for c in &lib.classes {
        let d2: f64 = q
            .iter()
            .zip(c.center.iter())
            .map(|(a, b)| (a - b).norm_squared())
            .sum();
        if d2 < best.0 {
            best = (d2, c.class_id);
        }
    }
    Ok(best.1)
}

/// An exemplar 3D pose available for 2D-to-3D gesture retrieval. Exemplars
/// live in a view-aligned frame: x maps to image right, y to image down, and
/// z to depth away from the viewer.
#[derive(Debug, Clone)]
pub struct ExemplarPose {
    pub joints: [Vector3<f64>; JOINT_COUNT],
    pub category: PoseCategory,
}

/// Library of exemplar 3D poses for nearest-neighbor retrieval.
#[derive(Debug, Clone, Default)]
pub struct Pose3DLibrary {
    pub exemplars: Vec<ExemplarPose>,
}

impl Pose3DLibrary {
    pub fn new(exemplars: Vec<ExemplarPose>) -> Self {
        Self { exemplars }
    }

    pub fn len(&self) -> usize {
        self.exemplars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exemplars.is_empty()
    }
}

/// The k-th of `count` rotation angles on the grid `-pi + 2*pi*k/count`.
pub fn rotation_angle(k: usize, count: usize) -> f64 {
    -std::f64::consts::PI + std::f64::consts::TAU * (k as f64) / (count as f64)
}

/// Rotates all joints about the z axis by `theta`.
pub fn rotate_z(
    joints: &[Vector3<f64>; JOINT_COUNT],
    theta: f64,
) -> [Vector3<f64>; JOINT_COUNT] {
    let (s, c) = theta.sin_cos();
    let mut out = *joints;
    for j in out.iter_mut() {
        let (x, y) = (j.x, j.y);
        j.x = c * x - s * y;
        j.y = s * x + c * y;
    }
    out
}

/// Drops the z coordinate.
pub fn project_xy(joints: &[Vector3<f64>; JOINT_COUNT]) -> [[f64; 2]; JOINT_COUNT] {
    let mut out = [[0.0; 2]; JOINT_COUNT];
    for (o, j) in out.iter_mut().zip(joints.iter()) {
        o[0] = j.x;
        o[1] = j.y;
    }
    out
}

/// Outcome of a 2D-to-3D retrieval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseMatch {
    pub library_index: usize,
    pub rotation_index: usize,
    pub theta: f64,
    pub distance: f64,
}

impl PoseMatch {
    /// The matched exemplar rotated into the query's view.
    pub fn rotated_pose(&self, lib: &Pose3DLibrary) -> [Vector3<f64>; JOINT_COUNT] {
        rotate_z(&lib.exemplars[self.library_index].joints, self.theta)
    }
}

fn candidate_distance(
    q: &[[f64; 2]; JOINT_COUNT],
    exemplar: &[Vector3<f64>; JOINT_COUNT],
    theta: f64,
) -> Option<f64> {
    let projected = project_xy(&rotate_z(exemplar, theta));
    let cand = normalize_pose_2d(&projected).ok()?;
    let d2: f64 = q
        .iter()
        .zip(cand.iter())
        .map(|(a, b)| {
            let dx = a[0] - b[0];
            let dy = a[1] - b[1];
            dx * dx + dy * dy
        })
        .sum();
    Some(d2.sqrt())
}

/// Finds the exemplar and z rotation whose xy projection is nearest to the
/// 2D query. Query and candidates are both pelvis-centered and scaled to unit
/// max radius before the distance is taken. Ties break toward the smallest
/// (library index, rotation index).
pub fn map_2d_to_3d(
    query2d: &[[f64; 2]; JOINT_COUNT],
    lib: &Pose3DLibrary,
    rotation_count: usize,
) -> Result<PoseMatch> {
    if lib.is_empty() {
        return Err(Error::EmptyLibrary);
    }
    if rotation_count == 0 {
        return Err(Error::invalid("rotation count must be >= 1"));
    }
    let q = normalize_pose_2d(query2d)?;
    let mut best: Option<PoseMatch> = None;
    for (pi, exemplar) in lib.exemplars.iter().enumerate() {
        for k in 0..rotation_count {
            let theta = rotation_angle(k, rotation_count);
            let Some(distance) = candidate_distance(&q, &exemplar.joints, theta) else {
                continue;
            };
            let better = match &best {
                None => true,
                Some(b) => distance < b.distance,
            };
            if better {
                best = Some(PoseMatch {
                    library_index: pi,
                    rotation_index: k,
                    theta,
                    distance,
                });
            }
        }
    }
    best.ok_or_else(|| Error::DegeneratePose("no candidate projection is normalizable".into()))
}

/// Stochastic variant: rotation angles drawn uniformly from [-pi, pi) instead
/// of the fixed grid. Same tie-breaking over (library index, draw index).
pub fn map_2d_to_3d_sampled<R: rand::Rng>(
    query2d: &[[f64; 2]; JOINT_COUNT],
    lib: &Pose3DLibrary,
    samples: usize,
    rng: &mut R,
) -> Result<PoseMatch> {
    if lib.is_empty() {
        return Err(Error::EmptyLibrary);
    }
    if samples == 0 {
        return Err(Error::invalid("sample count must be >= 1"));
    }
    let q = normalize_pose_2d(query2d)?;
    let thetas: Vec<f64> = (0..samples)
        .map(|_| rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI))
        .collect();
    let mut best: Option<PoseMatch> = None;
    for (pi, exemplar) in lib.exemplars.iter().enumerate() {
        for (k, &theta) in thetas.iter().enumerate() {
            let Some(distance) = candidate_distance(&q, &exemplar.joints, theta) else {
                continue;
            };
            if best.as_ref().map_or(true, |b| distance < b.distance) {
                best = Some(PoseMatch {
                    library_index: pi,
                    rotation_index: k,
                    theta,
                    distance,
                });
            }
        }
    }
    best.ok_or_else(|| Error::DegeneratePose("no candidate projection is normalizable".into()))
}

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

/// One line of a pose JSONL file. At least one of `joints2d`/`joints3d` must
/// be present; 2D-only poses are completed by gesture retrieval downstream.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoseRecord {
    pub id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub joints2d: Option<Vec<[f64; 2]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub depth_offsets: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub joints3d: Option<Vec<[f64; 3]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub class: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub category: Option<PoseCategory>,
}

impl PoseRecord {
    pub fn validate(&self) -> Result<()> {
        if self.joints2d.is_none() && self.joints3d.is_none() {
            return Err(Error::invalid(format!(
                "pose '{}' carries neither joints2d nor joints3d",
                self.id
            )));
        }
        for (name, len) in [
            ("joints2d", self.joints2d.as_ref().map(Vec::len)),
            ("depth_offsets", self.depth_offsets.as_ref().map(Vec::len)),
            ("joints3d", self.joints3d.as_ref().map(Vec::len)),
        ] {
            if let Some(len) = len {
                if len != JOINT_COUNT {
                    return Err(Error::invalid(format!(
                        "pose '{}': {name} must hold {JOINT_COUNT} entries, got {len}",
                        self.id
                    )));
                }
            }
        }
        if let Some(class) = self.class {
            if !(1..=CLASS_COUNT).contains(&class) {
                return Err(Error::UnknownClass(class));
            }
        }
        Ok(())
    }

    pub fn joints3d_array(&self) -> Option<[Vector3<f64>; JOINT_COUNT]> {
        let v = self.joints3d.as_ref()?;
        let mut out = [Vector3::zeros(); JOINT_COUNT];
        for (o, j) in out.iter_mut().zip(v.iter()) {
            *o = Vector3::new(j[0], j[1], j[2]);
        }
        Some(out)
    }

    pub fn joints2d_array(&self) -> Option<[[f64; 2]; JOINT_COUNT]> {
        let v = self.joints2d.as_ref()?;
        let mut out = [[0.0; 2]; JOINT_COUNT];
        out.copy_from_slice(v);
        Some(out)
    }
}

/// Reads a pose JSONL file, validating every record.
pub fn load_pose_jsonl(path: &std::path::Path) -> Result<Vec<PoseRecord>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: PoseRecord = serde_json::from_str(line).map_err(|e| {
            Error::invalid(format!("{}:{}: {e}", path.display(), ln + 1))
        })?;
        rec.validate()
            .map_err(|e| Error::invalid(format!("{}:{}: {e}", path.display(), ln + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

/// JSON shape of one class-library entry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassEntryFile {
    pub class: u32,
    pub category: PoseCategory,
    pub center: Vec<[f64; 3]>,
}

/// Reads the 30-class library from its JSON file.
pub fn load_class_library(path: &std::path::Path) -> Result<PoseClassLibrary> {
    let text = std::fs::read_to_string(path)?;
    let entries: Vec<ClassEntryFile> = serde_json::from_str(&text)?;
    class_library_from_entries(&entries)
}

pub fn class_library_from_entries(entries: &[ClassEntryFile]) -> Result<PoseClassLibrary> {
    let mut classes = Vec::with_capacity(entries.len());
    for e in entries {
        if e.center.len() != JOINT_COUNT {
            return Err(Error::invalid(format!(
                "class {}: center must hold {JOINT_COUNT} joints, got {}",
                e.class,
                e.center.len()
            )));
        }
        let mut center = [Vector3::zeros(); JOINT_COUNT];
        for (c, j) in center.iter_mut().zip(e.center.iter()) {
            *c = Vector3::new(j[0], j[1], j[2]);
        }
        classes.push(PoseClass {
            class_id: e.class,
            category: e.category,
            center,
        });
    }
    PoseClassLibrary::new(classes)
}

/// Serializes a class library back to its JSON entry list.
pub fn class_library_to_entries(lib: &PoseClassLibrary) -> Vec<ClassEntryFile> {
    lib.classes()
        .iter()
        .map(|c| ClassEntryFile {
            class: c.class_id,
            category: c.category,
            center: c.center.iter().map(|v| [v.x, v.y, v.z]).collect(),
        })
        .collect()
}

/// Builds an exemplar library from pose records that carry `joints3d`.
pub fn pose3d_library_from_records(records: &[PoseRecord]) -> Result<Pose3DLibrary> {
    let mut exemplars = Vec::new();
    for rec in records {
        let Some(joints) = rec.joints3d_array() else {
            return Err(Error::invalid(format!(
                "exemplar '{}' lacks joints3d",
                rec.id
            )));
        };
        let category = rec.category.ok_or_else(|| {
            Error::invalid(format!("exemplar '{}' lacks a category tag", rec.id))
        })?;
        exemplars.push(ExemplarPose { joints, category });
    }
    Ok(Pose3DLibrary::new(exemplars))
}
