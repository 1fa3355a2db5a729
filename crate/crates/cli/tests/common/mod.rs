//! Shared fixtures for the CLI and acceptance suites: scenes, cameras,
//! pose libraries, and stick-figure poses written through the public file
//! formats.

#![allow(dead_code)]

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use scenepose::camera::{
    world_to_camera, world_to_pixel, CameraExtrinsics, CameraFile, CameraIntrinsics,
};
use scenepose::pose::{
    class_library_to_entries, normalize_pose, ClassEntryFile, Pose3D, PoseClass,
    PoseClassLibrary, PoseRecord, CLASS_COUNT,
};
use scenepose::skeleton::{self, PoseCategory, JOINT_COUNT};
use scenepose::voxel::{write_svx, LabelDef, LabelTable, SceneVoxelGrid};

pub const VOXEL: f64 = 0.02;

pub fn scenepose_bin() -> &'static str {
    env!("CARGO_BIN_EXE_scenepose")
}

pub fn run_cli(args: &[&str]) -> Output {
    Command::new(scenepose_bin())
        .args(args)
        .output()
        .expect("spawn scenepose")
}

pub fn run_cli_env(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(scenepose_bin());
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("spawn scenepose")
}

pub fn label_table() -> LabelTable {
    LabelTable::new(vec![
        LabelDef {
            label: 1,
            name: "floor".into(),
            occupies_space: true,
            affordable: true,
        },
        LabelDef {
            label: 2,
            name: "bed".into(),
            occupies_space: true,
            affordable: true,
        },
        LabelDef {
            label: 3,
            name: "wall".into(),
            occupies_space: true,
            affordable: false,
        },
    ])
    .unwrap()
}

pub fn labels_json() -> &'static str {
    r#"[
  {"label": 1, "name": "floor", "occupies_space": true, "affordable": true},
  {"label": 2, "name": "bed", "occupies_space": true, "affordable": true},
  {"label": 3, "name": "wall", "occupies_space": true, "affordable": false}
]"#
}

pub fn empty_scene(dims: [usize; 3]) -> SceneVoxelGrid {
    SceneVoxelGrid::empty(dims, VOXEL, Vector3::zeros(), 2, label_table()).unwrap()
}

/// Writes a scene plus its label table; returns (svx, labels) paths.
pub fn write_scene(dir: &Path, name: &str, scene: &SceneVoxelGrid) -> (PathBuf, PathBuf) {
    let svx = dir.join(format!("{name}.svx"));
    let labels = dir.join(format!("{name}.labels.json"));
    write_svx(&svx, scene).unwrap();
    std::fs::write(&labels, labels_json()).unwrap();
    (svx, labels)
}

/// Camera 1 m in front of the scene box looking along world +y, image down
/// mapped to world -z, gravity on the third extrinsics row.
pub fn horizontal_camera(scene_w: f64, scene_h: f64) -> (CameraIntrinsics, CameraExtrinsics) {
    let k = CameraIntrinsics::new(300.0, 0.0, 0.0).unwrap();
    let r = Matrix3::new(
        1.0, 0.0, 0.0, //
        0.0, 0.0, 1.0, //
        0.0, -1.0, 0.0,
    );
    let t = Vector3::new(scene_w / 2.0, -1.0, scene_h / 2.0);
    let e = CameraExtrinsics::from_camera_to_world(r, t, 2).unwrap();
    (k, e)
}

pub fn write_camera(
    dir: &Path,
    name: &str,
    k: &CameraIntrinsics,
    e: &CameraExtrinsics,
) -> PathBuf {
    let path = dir.join(format!("{name}.camera.json"));
    let file = CameraFile::from_parts(k, e);
    std::fs::write(&path, serde_json::to_string_pretty(&file).unwrap()).unwrap();
    path
}

/// A straight standing figure with 1.65 m head-to-ankle extent.
pub fn standing_pose(pelvis: Vector3<f64>) -> Pose3D {
    let up = Vector3::new(0.0, 0.0, 1.0);
    let side = Vector3::new(1.0, 0.0, 0.0);
    let mut joints = [pelvis; JOINT_COUNT];
    joints[skeleton::R_HIP] = pelvis - side * 0.10;
    joints[skeleton::L_HIP] = pelvis + side * 0.10;
    joints[skeleton::R_KNEE] = pelvis - side * 0.10 - up * 0.45;
    joints[skeleton::L_KNEE] = pelvis + side * 0.10 - up * 0.45;
    joints[skeleton::R_ANKLE] = pelvis - side * 0.10 - up * 0.90;
    joints[skeleton::L_ANKLE] = pelvis + side * 0.10 - up * 0.90;
    joints[skeleton::SPINE] = pelvis + up * 0.20;
    joints[skeleton::THORAX] = pelvis + up * 0.40;
    joints[skeleton::NECK] = pelvis + up * 0.55;
    joints[skeleton::HEAD] = pelvis + up * 0.75;
    joints[skeleton::L_SHOULDER] = pelvis + up * 0.40 + side * 0.15;
    joints[skeleton::L_ELBOW] = pelvis + up * 0.20 + side * 0.18;
    joints[skeleton::L_WRIST] = pelvis + side * 0.18;
    joints[skeleton::R_SHOULDER] = pelvis + up * 0.40 - side * 0.15;
    joints[skeleton::R_ELBOW] = pelvis + up * 0.20 - side * 0.18;
    joints[skeleton::R_WRIST] = pelvis - side * 0.18;
    Pose3D::new(joints, PoseCategory::Standing).unwrap()
}

/// A seated figure: thighs horizontal along +y, shins vertical.
pub fn sitting_pose(pelvis: Vector3<f64>) -> Pose3D {
    let up = Vector3::new(0.0, 0.0, 1.0);
    let side = Vector3::new(1.0, 0.0, 0.0);
    let fwd = Vector3::new(0.0, 1.0, 0.0);
    let mut joints = [pelvis; JOINT_COUNT];
    joints[skeleton::R_HIP] = pelvis - side * 0.10;
    joints[skeleton::L_HIP] = pelvis + side * 0.10;
    joints[skeleton::R_KNEE] = pelvis - side * 0.10 + fwd * 0.40;
    joints[skeleton::L_KNEE] = pelvis + side * 0.10 + fwd * 0.40;
    joints[skeleton::R_ANKLE] = pelvis - side * 0.10 + fwd * 0.40 - up * 0.40;
    joints[skeleton::L_ANKLE] = pelvis + side * 0.10 + fwd * 0.40 - up * 0.40;
    joints[skeleton::SPINE] = pelvis + up * 0.20;
    joints[skeleton::THORAX] = pelvis + up * 0.40;
    joints[skeleton::NECK] = pelvis + up * 0.55;
    joints[skeleton::HEAD] = pelvis + up * 0.70;
    joints[skeleton::L_SHOULDER] = pelvis + up * 0.40 + side * 0.15;
    joints[skeleton::L_ELBOW] = pelvis + up * 0.25 + side * 0.18;
    joints[skeleton::L_WRIST] = pelvis + up * 0.10 + side * 0.18 + fwd * 0.15;
    joints[skeleton::R_SHOULDER] = pelvis + up * 0.40 - side * 0.15;
    joints[skeleton::R_ELBOW] = pelvis + up * 0.25 - side * 0.18;
    joints[skeleton::R_WRIST] = pelvis + up * 0.10 - side * 0.18 + fwd * 0.15;
    Pose3D::new(joints, PoseCategory::Sitting).unwrap()
}

/// Projects a world pose into the 2D-proposal shape (pixels + depth offsets).
pub fn project_to_proposal(
    pose: &Pose3D,
    e: &CameraExtrinsics,
    k: &CameraIntrinsics,
    id: &str,
) -> PoseRecord {
    let pelvis_d = world_to_camera(&pose.pelvis(), e).z;
    let mut joints2d = Vec::with_capacity(JOINT_COUNT);
    let mut offsets = Vec::with_capacity(JOINT_COUNT);
    for w in pose.joints() {
        let p = world_to_pixel(w, e, k).unwrap();
        joints2d.push([p.u, p.v]);
        offsets.push(p.d.unwrap() - pelvis_d);
    }
    PoseRecord {
        id: id.into(),
        joints2d: Some(joints2d),
        depth_offsets: Some(offsets),
        joints3d: None,
        class: None,
        category: Some(pose.category),
    }
}

pub fn pose_record_3d(pose: &Pose3D, id: &str) -> PoseRecord {
    PoseRecord {
        id: id.into(),
        joints2d: None,
        depth_offsets: None,
        joints3d: Some(pose.joints().iter().map(|j| [j.x, j.y, j.z]).collect()),
        class: None,
        category: Some(pose.category),
    }
}

pub fn write_pose_jsonl(dir: &Path, name: &str, records: &[PoseRecord]) -> PathBuf {
    let path = dir.join(format!("{name}.jsonl"));
    let mut text = String::new();
    for r in records {
        text.push_str(&serde_json::to_string(r).unwrap());
        text.push('\n');
    }
    std::fs::write(&path, text).unwrap();
    path
}

/// A deterministic 30-class library of random normalized centers; even ids
/// are sitting, odd ids standing.
pub fn class_library() -> PoseClassLibrary {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut classes = Vec::new();
    for id in 1..=CLASS_COUNT {
        let mut joints = [Vector3::zeros(); JOINT_COUNT];
        for j in joints.iter_mut() {
            *j = Vector3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
        }
        joints[1] = joints[0] + Vector3::new(0.5, 0.0, 0.0);
        let center = normalize_pose(&joints).unwrap();
        classes.push(PoseClass {
            class_id: id,
            category: if id % 2 == 0 {
                PoseCategory::Sitting
            } else {
                PoseCategory::Standing
            },
            center,
        });
    }
    PoseClassLibrary::new(classes).unwrap()
}

pub fn write_class_library(dir: &Path) -> PathBuf {
    let path = dir.join("classes.json");
    let entries: Vec<ClassEntryFile> = class_library_to_entries(&class_library());
    std::fs::write(&path, serde_json::to_string(&entries).unwrap()).unwrap();
    path
}

/// A flat-floor scene tall enough for a standing figure.
pub fn flat_floor_scene(dims: [usize; 3]) -> SceneVoxelGrid {
    let mut scene = empty_scene(dims);
    scene.fill_box([0, 0, 0], [dims[0], dims[1], 2], 1).unwrap();
    scene
}
