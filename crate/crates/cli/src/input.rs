//! Input loading and validation shared by the subcommands: everything is
//! checked up front so a run either starts with all files parsed or exits
//! with code 2 before any computation.

use serde::Deserialize;
use std::path::{Path, PathBuf};

use scenepose::camera::{load_camera, CameraExtrinsics, CameraIntrinsics};
use scenepose::constraint::{ConstraintConfig, SceneGrids};
use scenepose::pipeline::{read_records_jsonl, AffordanceRecord};
use scenepose::pose::{
    load_class_library, load_pose_jsonl, pose3d_library_from_records, Pose3D, Pose3DLibrary,
    PoseClassLibrary, PoseRecord,
};
use scenepose::voxel::{load_label_table, read_svx, SceneVoxelGrid};

use crate::{CliError, ConstraintFlags};

pub fn ensure_exists(path: &Path) -> Result<(), CliError> {
    if !path.is_file() {
        return Err(CliError::BadInput(format!(
            "missing file: {}",
            path.display()
        )));
    }
    Ok(())
}

pub fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

pub fn load_scene(scene: &Path, labels: &Path) -> Result<SceneVoxelGrid, CliError> {
    ensure_exists(scene)?;
    ensure_exists(labels)?;
    let table = load_label_table(labels).map_err(CliError::from_input)?;
    read_svx(scene, table).map_err(CliError::from_input)
}

pub fn build_grids(scene: &Path, labels: &Path) -> Result<SceneGrids, CliError> {
    let scene = load_scene(scene, labels)?;
    SceneGrids::build(scene).map_err(CliError::from_input)
}

pub fn load_camera_file(
    path: &Path,
) -> Result<(CameraIntrinsics, CameraExtrinsics), CliError> {
    ensure_exists(path)?;
    load_camera(path).map_err(CliError::from_input)
}

pub fn load_classes(path: &Path) -> Result<PoseClassLibrary, CliError> {
    ensure_exists(path)?;
    load_class_library(path).map_err(CliError::from_input)
}

pub fn load_proposals(path: &Path) -> Result<Vec<PoseRecord>, CliError> {
    ensure_exists(path)?;
    load_pose_jsonl(path).map_err(CliError::from_input)
}

pub fn load_exemplars(path: &Path) -> Result<Pose3DLibrary, CliError> {
    let records = load_proposals(path)?;
    pose3d_library_from_records(&records).map_err(CliError::from_input)
}

/// Either a records file from a previous run or a plain pose file.
pub enum WorldPoseFile {
    Records(Vec<AffordanceRecord>),
    Poses(Vec<PoseRecord>),
}

/// Loads a JSONL file that may hold either schema; records are recognized by
/// their `status` field.
pub fn load_world_pose_file(path: &Path) -> Result<WorldPoseFile, CliError> {
    ensure_exists(path)?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::BadInput(format!("{}: {e}", path.display())))?;
    let first = text.lines().find(|l| !l.trim().is_empty());
    let is_records = match first {
        Some(line) => serde_json::from_str::<serde_json::Value>(line)
            .map(|v| v.get("status").is_some())
            .unwrap_or(false),
        None => false,
    };
    if is_records {
        Ok(WorldPoseFile::Records(
            read_records_jsonl(path).map_err(CliError::from_input)?,
        ))
    } else {
        Ok(WorldPoseFile::Poses(
            load_pose_jsonl(path).map_err(CliError::from_input)?,
        ))
    }
}

/// A world pose entry extracted from either schema. `pose` is `None` when a
/// record never produced one (degenerate proposals).
pub struct WorldPoseEntry {
    pub id: String,
    pub pose: Option<Pose3D>,
}

impl WorldPoseFile {
    /// Flattens to (id, pose) entries. For records, `accepted_only` keeps
    /// only accepted ones. Plain poses must carry world joints and a
    /// category.
    pub fn entries(&self, accepted_only: bool) -> Result<Vec<WorldPoseEntry>, CliError> {
        match self {
            WorldPoseFile::Records(records) => Ok(records
                .iter()
                .filter(|r| {
                    !accepted_only
                        || r.status == scenepose::pipeline::RecordStatus::Accepted
                })
                .map(|r| WorldPoseEntry {
                    id: r.proposal_id.clone(),
                    pose: r.pose(),
                })
                .collect()),
            WorldPoseFile::Poses(poses) => {
                let mut out = Vec::with_capacity(poses.len());
                for p in poses {
                    let joints = p.joints3d_array().ok_or_else(|| {
                        CliError::BadInput(format!("pose '{}' has no world joints", p.id))
                    })?;
                    let category = p.category.ok_or_else(|| {
                        CliError::BadInput(format!("pose '{}' has no category", p.id))
                    })?;
                    let pose = Pose3D::new(joints, category).map_err(CliError::from_input)?;
                    out.push(WorldPoseEntry {
                        id: p.id.clone(),
                        pose: Some(pose),
                    });
                }
                Ok(out)
            }
        }
    }
}

/// Constraint parameters accepted from a TOML or JSON config file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    t_f: Option<u32>,
    t_s: Option<f64>,
    support_proximity: Option<i64>,
    search_radius_m: Option<f64>,
    bone_radius: Option<i64>,
}

/// Defaults, overlaid by the config file, overlaid by explicit flags.
pub fn resolve_constraints(
    config: Option<&PathBuf>,
    flags: &ConstraintFlags,
) -> Result<ConstraintConfig, CliError> {
    let mut cfg = ConstraintConfig::default();
    if let Some(path) = config {
        ensure_exists(path)?;
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::BadInput(format!("{}: {e}", path.display())))?;
        let file: ConfigFile = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text)
                .map_err(|e| CliError::BadInput(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text)
                .map_err(|e| CliError::BadInput(format!("{}: {e}", path.display())))?
        };
        if let Some(v) = file.t_f {
            cfg.t_f = v;
        }
        if let Some(v) = file.t_s {
            cfg.t_s = v;
        }
        if let Some(v) = file.support_proximity {
            cfg.support_proximity = v;
        }
        if let Some(v) = file.search_radius_m {
            cfg.search_radius_m = v;
        }
        if let Some(v) = file.bone_radius {
            cfg.bone_radius = v;
        }
    }
    if let Some(v) = flags.tf {
        cfg.t_f = v;
    }
    if let Some(v) = flags.ts {
        cfg.t_s = v;
    }
    if let Some(v) = flags.support_proximity {
        cfg.support_proximity = v;
    }
    if let Some(v) = flags.search_radius_m {
        cfg.search_radius_m = v;
    }
    if let Some(v) = flags.bone_radius {
        cfg.bone_radius = v;
    }
    cfg.validate()
        .map_err(|e| CliError::BadInput(e.to_string()))?;
    Ok(cfg)
}

/// Worker count from the flag, else the SCENEPOSE_WORKERS env var.
pub fn resolve_workers(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("SCENEPOSE_WORKERS") {
        Ok(s) => {
            let n: usize = s.parse().map_err(|_| {
                CliError::BadInput(format!("SCENEPOSE_WORKERS must be an integer, got '{s}'"))
            })?;
            Ok(Some(n))
        }
        Err(_) => Ok(None),
    }
}
