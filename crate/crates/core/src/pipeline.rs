//! End-to-end pose synthesis: ingest proposals, sample heights, estimate
//! depths, lift to 3D, adjust against the scene, and emit dataset records;
//! plus the geometry-score evaluator.

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::path::Path;

use crate::camera::{
    estimate_pose_depth, lift_pose, pixel_to_camera, world_to_camera, world_to_pixel,
    CameraExtrinsics, CameraIntrinsics, PixelPoint,
};
use crate::constraint::{
    adjust_pose, check_pose, AdjustOutcome, CheckReport, ConstraintConfig, SceneGrids,
};
use crate::error::{Error, Result};
use crate::heatmap::{sample_locations, LocationHeatmap};
use crate::io::json_f64;
use crate::pose::{
    assign_pose_class, map_2d_to_3d, pose_category, Pose3D, Pose3DLibrary, PoseClassLibrary,
    PoseRecord,
};
use crate::skeleton::{PoseCategory, BONES, JOINT_COUNT, PELVIS};

/// Gaussian priors over real-world human heights, clamped at three sigma.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct HeightPrior {
    pub standing_mean: f64,
    pub standing_std: f64,
    pub sitting_mean: f64,
    pub sitting_std: f64,
    pub clamp_sigmas: f64,
}

impl Default for HeightPrior {
    fn default() -> Self {
        Self {
            standing_mean: 1.65,
            standing_std: 0.10,
            sitting_mean: 1.20,
            sitting_std: 0.10,
            clamp_sigmas: 3.0,
        }
    }
}

impl HeightPrior {
    pub fn params(&self, category: PoseCategory) -> (f64, f64) {
        match category {
            PoseCategory::Standing => (self.standing_mean, self.standing_std),
            PoseCategory::Sitting => (self.sitting_mean, self.sitting_std),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, std, mean) in [
            ("standing", self.standing_std, self.standing_mean),
            ("sitting", self.sitting_std, self.sitting_mean),
        ] {
            if !(std > 0.0) {
                return Err(Error::invalid(format!("{name} std must be > 0")));
            }
            if !(mean - self.clamp_sigmas * std > 0.0) {
                return Err(Error::invalid(format!(
                    "{name} clamp bound must stay positive"
                )));
            }
        }
        Ok(())
    }
}

/// One Gaussian height draw for the category, clamped to the prior's bounds.
pub fn sample_height<R: rand::Rng>(
    category: PoseCategory,
    prior: &HeightPrior,
    rng: &mut R,
) -> f64 {
    let (mean, std) = prior.params(category);
    let normal = Normal::new(mean, std).expect("validated prior");
    let x: f64 = normal.sample(rng);
    x.clamp(
        mean - prior.clamp_sigmas * std,
        mean + prior.clamp_sigmas * std,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordStatus {
    Accepted,
    Discarded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscardReason {
    /// No feasible, sufficiently supported placement in the search window.
    NoSupport,
    /// The proposal could not be turned into a world pose at all.
    Degenerate,
}

/// One synthesized (or rejected) pose with everything needed to audit it.
#[derive(Debug, Clone, Deserialize)]
pub struct AffordanceRecord {
    pub scene_id: String,
    pub camera_id: String,
    pub proposal_id: String,
    #[serde(default)]
    pub class: Option<u32>,
    #[serde(default)]
    pub category: Option<PoseCategory>,
    #[serde(default)]
    pub sampled_h: Option<f64>,
    #[serde(default)]
    pub estimated_d: Option<f64>,
    /// Final world pose (adjusted when accepted, as-lifted when discarded).
    #[serde(default)]
    pub joints3d: Option<Vec<[f64; 3]>>,
    /// Projection of the final pose; `null` entries are behind the camera.
    #[serde(default)]
    pub joints2d: Option<Vec<Option<[f64; 2]>>>,
    #[serde(default)]
    pub r_f: Option<u32>,
    #[serde(default)]
    pub r_s: Option<f64>,
    pub status: RecordStatus,
    #[serde(default)]
    pub discard_reason: Option<DiscardReason>,
    #[serde(default)]
    pub note: Option<String>,
    pub seed: u64,
}

impl AffordanceRecord {
    /// Serializes with floats at 17 significant digits so record files are
    /// byte-stable and round-trip exactly.
    pub fn to_json_value(&self) -> Result<Value> {
        let opt_f = |v: Option<f64>| -> Result<Value> {
            Ok(match v {
                Some(x) => Value::Number(json_f64(x)?),
                None => Value::Null,
            })
        };
        let mut m = serde_json::Map::new();
        m.insert("scene_id".into(), Value::String(self.scene_id.clone()));
        m.insert("camera_id".into(), Value::String(self.camera_id.clone()));
        m.insert(
            "proposal_id".into(),
            Value::String(self.proposal_id.clone()),
        );
        m.insert(
            "class".into(),
            self.class.map_or(Value::Null, |c| c.into()),
        );
        m.insert("category".into(), serde_json::to_value(self.category)?);
        m.insert("sampled_h".into(), opt_f(self.sampled_h)?);
        m.insert("estimated_d".into(), opt_f(self.estimated_d)?);
        let joints3d = match &self.joints3d {
            None => Value::Null,
            Some(joints) => Value::Array(
                joints
                    .iter()
                    .map(|j| -> Result<Value> {
                        Ok(Value::Array(vec![
                            Value::Number(json_f64(j[0])?),
                            Value::Number(json_f64(j[1])?),
                            Value::Number(json_f64(j[2])?),
                        ]))
                    })
                    .collect::<Result<_>>()?,
            ),
        };
        m.insert("joints3d".into(), joints3d);
        let joints2d = match &self.joints2d {
            None => Value::Null,
            Some(joints) => Value::Array(
                joints
                    .iter()
                    .map(|j| -> Result<Value> {
                        Ok(match j {
                            None => Value::Null,
                            Some([u, v]) => Value::Array(vec![
                                Value::Number(json_f64(*u)?),
                                Value::Number(json_f64(*v)?),
                            ]),
                        })
                    })
                    .collect::<Result<_>>()?,
            ),
        };
        m.insert("joints2d".into(), joints2d);
        m.insert(
            "r_f".into(),
            self.r_f.map_or(Value::Null, |c| c.into()),
        );
        m.insert("r_s".into(), opt_f(self.r_s)?);
        m.insert("status".into(), serde_json::to_value(self.status)?);
        m.insert(
            "discard_reason".into(),
            serde_json::to_value(self.discard_reason)?,
        );
        m.insert(
            "note".into(),
            self.note
                .as_ref()
                .map_or(Value::Null, |n| Value::String(n.clone())),
        );
        m.insert("seed".into(), self.seed.into());
        Ok(Value::Object(m))
    }

    /// The final pose, when the record carries one.
    pub fn pose(&self) -> Option<Pose3D> {
        let joints = self.joints3d.as_ref()?;
        let category = self.category?;
        if joints.len() != JOINT_COUNT {
            return None;
        }
        let mut arr = [Vector3::zeros(); JOINT_COUNT];
        for (a, j) in arr.iter_mut().zip(joints.iter()) {
            *a = Vector3::new(j[0], j[1], j[2]);
        }
        Pose3D::new(arr, category).ok()
    }
}

/// Writes records as JSONL, one record per line, atomically.
pub fn write_records_jsonl(path: &Path, records: &[AffordanceRecord]) -> Result<()> {
    let mut out = String::new();
    for rec in records {
        out.push_str(&serde_json::to_string(&rec.to_json_value()?)?);
        out.push('\n');
    }
    crate::io::write_atomic(path, out.as_bytes())
}

pub fn read_records_jsonl(path: &Path) -> Result<Vec<AffordanceRecord>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: AffordanceRecord = serde_json::from_str(line).map_err(|e| {
            Error::invalid(format!("{}:{}: {e}", path.display(), ln + 1))
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// Run totals emitted next to the records file.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthesisSummary {
    pub proposed: usize,
    pub accepted: usize,
    pub discarded_no_support: usize,
    pub discarded_degenerate: usize,
}

/// Everything fixed for one scene-camera run.
pub struct SceneContext<'a> {
    pub grids: &'a SceneGrids,
    pub intrinsics: CameraIntrinsics,
    pub extrinsics: CameraExtrinsics,
    pub class_library: &'a PoseClassLibrary,
    pub exemplars: Option<&'a Pose3DLibrary>,
    pub scene_id: String,
    pub camera_id: String,
}

#[derive(Debug, Clone)]
pub struct SynthesisOptions {
    pub constraints: ConstraintConfig,
    pub prior: HeightPrior,
    pub seed: u64,
    /// Worker thread count; `None` uses the global thread pool.
    pub workers: Option<usize>,
    /// Rotation grid size for 2D-to-3D gesture retrieval.
    pub rotation_count: usize,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self {
            constraints: ConstraintConfig::default(),
            prior: HeightPrior::default(),
            seed: 0,
            workers: None,
            rotation_count: 36,
        }
    }
}

/// The camera- and library-level inputs needed to turn one proposal into a
/// world pose, independent of any scene grid.
pub struct ProposalEnv<'a> {
    pub intrinsics: &'a CameraIntrinsics,
    pub extrinsics: &'a CameraExtrinsics,
    /// Needed only when a proposal's category must be resolved via its class
    /// or by nearest-center assignment.
    pub class_library: Option<&'a PoseClassLibrary>,
    pub exemplars: Option<&'a Pose3DLibrary>,
    pub rotation_count: usize,
    pub prior: HeightPrior,
}

fn require_classes<'a>(env: &ProposalEnv<'a>) -> Result<&'a PoseClassLibrary> {
    env.class_library
        .ok_or_else(|| Error::invalid("a class library is required to resolve the category"))
}

/// A proposal resolved into a world pose, before any scene adjustment.
#[derive(Debug, Clone)]
pub struct PreparedPose {
    pub category: PoseCategory,
    pub sampled_h: Option<f64>,
    pub estimated_d: Option<f64>,
    pub pose: Pose3D,
}

/// Resolves the category, fixes a height (sampled unless overridden), and
/// builds the world pose for one proposal: 2D proposals are completed with
/// depth offsets (given, derived from their own 3D joints, or retrieved from
/// the exemplar library), depth-estimated, and lifted; 3D proposals are taken
/// as world coordinates directly.
pub fn build_world_pose(
    rec: &PoseRecord,
    env: &ProposalEnv<'_>,
    height_override: Option<f64>,
    rng: &mut ChaCha8Rng,
) -> Result<PreparedPose> {
    rec.validate()?;
    // Retrieval is only consulted when the proposal is 2D and carries no
    // gesture of its own.
    let mut retrieved: Option<[Vector3<f64>; JOINT_COUNT]> = None;
    let mut retrieved_category: Option<PoseCategory> = None;
    let retrieve = |q2: &[[f64; 2]; JOINT_COUNT],
                        retrieved: &mut Option<[Vector3<f64>; JOINT_COUNT]>,
                        retrieved_category: &mut Option<PoseCategory>|
     -> Result<()> {
        if retrieved.is_some() {
            return Ok(());
        }
        let lib = env
            .exemplars
            .ok_or_else(|| Error::invalid("2D proposal needs a 3D exemplar library"))?;
        let m = map_2d_to_3d(q2, lib, env.rotation_count)?;
        *retrieved = Some(m.rotated_pose(lib));
        *retrieved_category = Some(lib.exemplars[m.library_index].category);
        Ok(())
    };

    let category = if let Some(c) = rec.category {
        c
    } else if let Some(class) = rec.class {
        pose_category(class, require_classes(env)?)?
    } else if let Some(j3) = rec.joints3d_array() {
        let lib = require_classes(env)?;
        let class = assign_pose_class(&j3, lib)?;
        pose_category(class, lib)?
    } else {
        let q2 = rec
            .joints2d_array()
            .ok_or_else(|| Error::invalid("proposal has neither joints nor category"))?;
        retrieve(&q2, &mut retrieved, &mut retrieved_category)?;
        retrieved_category.expect("retrieval sets the category")
    };

    let h = height_override.unwrap_or_else(|| sample_height(category, &env.prior, rng));

    if let Some(q2) = rec.joints2d_array() {
        let offsets: [f64; JOINT_COUNT] = if let Some(v) = &rec.depth_offsets {
            let mut arr = [0.0; JOINT_COUNT];
            arr.copy_from_slice(v);
            arr
        } else if let Some(j3) = rec.joints3d_array() {
            let mut arr = [0.0; JOINT_COUNT];
            for (a, j) in arr.iter_mut().zip(j3.iter()) {
                *a = j.z - j3[PELVIS].z;
            }
            arr
        } else {
            retrieve(&q2, &mut retrieved, &mut retrieved_category)?;
            let g = retrieved.expect("retrieval sets the gesture");
            let mut arr = [0.0; JOINT_COUNT];
            for (a, j) in arr.iter_mut().zip(g.iter()) {
                *a = j.z - g[PELVIS].z;
            }
            arr
        };
        let px: [PixelPoint; JOINT_COUNT] =
            std::array::from_fn(|j| PixelPoint::new(q2[j][0], q2[j][1]));
        let d = estimate_pose_depth(&px, h, env.extrinsics, env.intrinsics)?;
        let pose = lift_pose(&px, &offsets, d, env.extrinsics, env.intrinsics, category)?;
        Ok(PreparedPose {
            category,
            sampled_h: Some(h),
            estimated_d: Some(d),
            pose,
        })
    } else {
        let j3 = rec.joints3d_array().expect("validated earlier");
        let pose = Pose3D::new(j3, category)?;
        let z_c = world_to_camera(&pose.pelvis(), env.extrinsics).z;
        Ok(PreparedPose {
            category,
            sampled_h: Some(h),
            estimated_d: (z_c > 0.0).then_some(z_c),
            pose,
        })
    }
}

fn project_joints(
    pose: &Pose3D,
    ctx: &SceneContext<'_>,
) -> Vec<Option<[f64; 2]>> {
    pose.joints()
        .iter()
        .map(|w| {
            world_to_pixel(w, &ctx.extrinsics, &ctx.intrinsics)
                .ok()
                .map(|p| [p.u, p.v])
        })
        .collect()
}

fn process_proposal(
    index: usize,
    rec: &PoseRecord,
    ctx: &SceneContext<'_>,
    opts: &SynthesisOptions,
) -> AffordanceRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(index as u64 + 1);

    let mut record = AffordanceRecord {
        scene_id: ctx.scene_id.clone(),
        camera_id: ctx.camera_id.clone(),
        proposal_id: rec.id.clone(),
        class: rec.class,
        category: rec.category,
        sampled_h: None,
        estimated_d: None,
        joints3d: None,
        joints2d: None,
        r_f: None,
        r_s: None,
        status: RecordStatus::Discarded,
        discard_reason: None,
        note: None,
        seed: opts.seed,
    };

    let env = ProposalEnv {
        intrinsics: &ctx.intrinsics,
        extrinsics: &ctx.extrinsics,
        class_library: Some(ctx.class_library),
        exemplars: ctx.exemplars,
        rotation_count: opts.rotation_count,
        prior: opts.prior,
    };
    let prepared = match build_world_pose(rec, &env, None, &mut rng) {
        Ok(p) => p,
        Err(e) => {
            record.discard_reason = Some(DiscardReason::Degenerate);
            record.note = Some(e.to_string());
            return record;
        }
    };
    record.category = Some(prepared.category);
    record.sampled_h = prepared.sampled_h;
    record.estimated_d = prepared.estimated_d;

    let outcome = match adjust_pose(&prepared.pose, ctx.grids, &opts.constraints) {
        Ok(o) => o,
        Err(e) => {
            record.discard_reason = Some(DiscardReason::Degenerate);
            record.note = Some(e.to_string());
            return record;
        }
    };

    let final_pose = match outcome {
        AdjustOutcome::Adjusted(adj) => {
            record.status = RecordStatus::Accepted;
            record.r_f = Some(adj.r_f);
            record.r_s = Some(adj.r_s);
            adj.pose
        }
        AdjustOutcome::Discarded(info) => {
            record.discard_reason = Some(DiscardReason::NoSupport);
            record.r_f = Some(info.best_r_f);
            record.r_s = info.best_r_s;
            prepared.pose
        }
    };
    record.class = rec
        .class
        .or_else(|| assign_pose_class(final_pose.joints(), ctx.class_library).ok());
    record.joints2d = Some(project_joints(&final_pose, ctx));
    record.joints3d = Some(
        final_pose
            .joints()
            .iter()
            .map(|j| [j.x, j.y, j.z])
            .collect(),
    );
    record
}

/// Runs the full pipeline over the proposals. Records come back in proposal
/// order; each proposal draws from its own seeded stream, so the output is a
/// pure function of (inputs, seed) no matter how many workers run.
pub fn synthesize(
    ctx: &SceneContext<'_>,
    proposals: &[PoseRecord],
    opts: &SynthesisOptions,
) -> Result<(Vec<AffordanceRecord>, SynthesisSummary)> {
    opts.constraints.validate()?;
    opts.prior.validate()?;
    if opts.rotation_count == 0 {
        return Err(Error::invalid("rotation count must be >= 1"));
    }

    let run = || {
        proposals
            .par_iter()
            .enumerate()
            .map(|(i, rec)| process_proposal(i, rec, ctx, opts))
            .collect::<Vec<_>>()
    };
    let records = match opts.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    };

    let mut summary = SynthesisSummary {
        proposed: records.len(),
        ..SynthesisSummary::default()
    };
    for r in &records {
        match (r.status, r.discard_reason) {
            (RecordStatus::Accepted, _) => summary.accepted += 1,
            (RecordStatus::Discarded, Some(DiscardReason::Degenerate)) => {
                summary.discarded_degenerate += 1
            }
            (RecordStatus::Discarded, _) => summary.discarded_no_support += 1,
        }
    }
    Ok((records, summary))
}

/// Per-pose entry of a geometry-score report.
#[derive(Debug, Clone, Serialize)]
pub struct PoseScore {
    pub id: String,
    pub category: PoseCategory,
    pub report: CheckReport,
}

/// The geometry score: the fraction of poses satisfying both constraints.
#[derive(Debug, Clone, Serialize)]
pub struct GeometryScore {
    pub score: f64,
    pub total: usize,
    pub valid: usize,
    /// Set when the input pose set was empty; the score is then 0 by
    /// definition rather than a measurement.
    pub empty: bool,
    pub per_pose: Vec<PoseScore>,
}

/// Checks every pose and reports the valid fraction. An empty input scores
/// zero with the `empty` flag set.
pub fn geometry_score(
    poses: &[(String, Pose3D)],
    grids: &SceneGrids,
    cfg: &ConstraintConfig,
) -> Result<GeometryScore> {
    let mut per_pose = Vec::with_capacity(poses.len());
    let mut valid = 0;
    for (id, pose) in poses {
        let report = check_pose(pose, grids, cfg)?;
        if report.valid() {
            valid += 1;
        }
        per_pose.push(PoseScore {
            id: id.clone(),
            category: pose.category,
            report,
        });
    }
    let empty = poses.is_empty();
    let score = if empty {
        0.0
    } else {
        valid as f64 / poses.len() as f64
    };
    Ok(GeometryScore {
        score,
        total: poses.len(),
        valid,
        empty,
        per_pose,
    })
}

/// A joint projected into the image, with its camera depth.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ProjectedJoint {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

/// 2D overlay data for one pose: projected joints (None = behind camera)
/// and the bone segments whose endpoints are both visible.
#[derive(Debug, Clone, Serialize)]
pub struct ProjectedPose {
    pub joints: Vec<Option<ProjectedJoint>>,
    pub bones: Vec<[usize; 2]>,
}

pub fn project_pose(
    pose: &Pose3D,
    e: &CameraExtrinsics,
    k: &CameraIntrinsics,
) -> ProjectedPose {
    let joints: Vec<Option<ProjectedJoint>> = pose
        .joints()
        .iter()
        .map(|w| {
            world_to_pixel(w, e, k).ok().map(|p| ProjectedJoint {
                u: p.u,
                v: p.v,
                depth: p.d.expect("projection carries depth"),
            })
        })
        .collect();
    let bones = BONES
        .iter()
        .filter(|b| joints[b.a].is_some() && joints[b.b].is_some())
        .map(|b| [b.a, b.b])
        .collect();
    ProjectedPose { joints, bones }
}

/// Builds 3D pose proposals from a location heat map: sample locations and
/// classes, march the pelvis ray to the first matching support surface, and
/// drop the class's center gesture there, scaled to a sampled height.
///
/// Locations whose ray never meets a surface keep a far placement and are
/// left for the adjustment stage to discard.
pub fn proposals_from_heatmap(
    hm: &LocationHeatmap,
    n: usize,
    tau: f64,
    ctx: &SceneContext<'_>,
    prior: &HeightPrior,
    seed: u64,
) -> Result<Vec<PoseRecord>> {
    let rng = &mut ChaCha8Rng::seed_from_u64(seed);
    let samples = sample_locations(hm, n, tau, rng)?;
    let scene = &ctx.grids.scene;
    let up_axis = scene.up_axis;

    let mut out = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let category = pose_category(s.class, ctx.class_library)?;
        let h = sample_height(category, prior, rng);

        // Gesture: the class center, re-oriented so canonical z maps to the
        // scene's up axis, scaled so its vertical extent equals the height.
        let center = &ctx.class_library.get(s.class)?.center;
        let oriented: [Vector3<f64>; JOINT_COUNT] = std::array::from_fn(|j| {
            let c = center[j];
            match up_axis {
                0 => Vector3::new(c.z, c.x, c.y),
                1 => Vector3::new(c.y, c.z, c.x),
                _ => c,
            }
        });
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for j in &oriented {
            lo = lo.min(j[up_axis]);
            hi = hi.max(j[up_axis]);
        }
        let extent = hi - lo;
        let scale = if extent > 1e-6 { h / extent } else { h };

        // March the pixel ray; the parameter equals the camera depth.
        let dir_c = pixel_to_camera(
            &PixelPoint::with_depth(s.x as f64, s.y as f64, 1.0),
            &ctx.intrinsics,
        )?;
        let dir_w = ctx.extrinsics.rotation() * dir_c;
        let origin = *ctx.extrinsics.translation();
        let mut far: f64 = 0.0;
        for corner in 0..8 {
            let c = Vector3::new(
                scene.origin.x
                    + if corner & 1 != 0 {
                        scene.dims[0] as f64 * scene.voxel_size
                    } else {
                        0.0
                    },
                scene.origin.y
                    + if corner & 2 != 0 {
                        scene.dims[1] as f64 * scene.voxel_size
                    } else {
                        0.0
                    },
                scene.origin.z
                    + if corner & 4 != 0 {
                        scene.dims[2] as f64 * scene.voxel_size
                    } else {
                        0.0
                    },
            );
            far = far.max((c - origin).norm());
        }
        let step = scene.voxel_size / (2.0 * dir_w.norm());
        let field = ctx.grids.support_for(category);
        let mut hit: Option<Vector3<f64>> = None;
        let mut last_inside: Option<Vector3<f64>> = None;
        let mut t = step;
        while t * dir_w.norm() <= far + scene.voxel_size {
            let w = origin + dir_w * t;
            let v = scene.world_to_voxel(&w);
            if scene.in_bounds(v) {
                last_inside = Some(w);
                if field.get(v[0] as usize, v[1] as usize, v[2] as usize) > 0.0 {
                    hit = Some(scene.voxel_to_world(v));
                    break;
                }
            }
            t += step;
        }
        let base = hit
            .or(last_inside)
            .unwrap_or_else(|| origin + dir_w * 2.0);
        let mut up_vec = Vector3::zeros();
        up_vec[up_axis] = 1.0;
        // Rest the gesture's lowest joint one voxel above the hit voxel.
        let pelvis = base + up_vec * (scene.voxel_size - lo * scale);
        let joints3d: Vec<[f64; 3]> = oriented
            .iter()
            .map(|j| {
                let w = pelvis + j * scale;
                [w.x, w.y, w.z]
            })
            .collect();
        out.push(PoseRecord {
            id: format!("hm{i:04}"),
            joints2d: None,
            depth_offsets: None,
            joints3d: Some(joints3d),
            class: Some(s.class),
            category: Some(category),
        });
    }
    Ok(out)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::constraint::tests::{empty_scene, stick_sitting, stick_standing};
    use crate::pose::tests::test_class_library;
    use crate::skeleton;
    use crate::voxel::SceneVoxelGrid;
    use nalgebra::Matrix3;

    /// Camera 1 m in front of the scene box, looking along world +y, image
    /// down mapped to world -z.
    pub(crate) fn test_camera(scene_w: f64, scene_h: f64) -> (CameraIntrinsics, CameraExtrinsics) {
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

    /// Projects a world pose into 2D joints plus per-joint depth offsets, the
    /// shape a 2D proposal file carries.
    pub(crate) fn project_to_proposal(
        pose: &Pose3D,
        e: &CameraExtrinsics,
        k: &CameraIntrinsics,
        id: &str,
    ) -> PoseRecord {
        let mut joints2d = Vec::with_capacity(JOINT_COUNT);
        let mut offsets = Vec::with_capacity(JOINT_COUNT);
        let pelvis_d = world_to_camera(&pose.pelvis(), e).z;
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

    /// A standing stick figure with vertical extent exactly 1.65 m (head to
    /// ankle), so sampled heights land near the true scale.
    pub(crate) fn calibrated_standing(pelvis: Vector3<f64>) -> Pose3D {
        let mut joints = *stick_standing(pelvis).joints();
        joints[skeleton::HEAD] = pelvis + Vector3::new(0.0, 0.0, 0.75);
        Pose3D::new(joints, PoseCategory::Standing).unwrap()
    }

    fn flat_floor_scene() -> SceneVoxelGrid {
        let mut scene = empty_scene([96, 96, 112]);
        scene.fill_box([0, 0, 0], [96, 96, 2], 1).unwrap();
        scene
    }

    fn test_options() -> SynthesisOptions {
        SynthesisOptions {
            constraints: ConstraintConfig {
                t_s: 5.0,
                ..ConstraintConfig::default()
            },
            prior: HeightPrior {
                standing_std: 0.03,
                sitting_std: 0.03,
                ..HeightPrior::default()
            },
            seed: 42,
            ..SynthesisOptions::default()
        }
    }

    #[test]
    fn height_sampling_is_clamped_and_seeded() {
        let prior = HeightPrior::default();
        let (mean, std) = prior.params(PoseCategory::Standing);
        let (lo, hi) = (
            mean - prior.clamp_sigmas * std,
            mean + prior.clamp_sigmas * std,
        );
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20_000 {
            let h = sample_height(PoseCategory::Standing, &prior, &mut rng);
            assert!((lo..=hi).contains(&h));
        }
        let a = sample_height(
            PoseCategory::Sitting,
            &prior,
            &mut ChaCha8Rng::seed_from_u64(9),
        );
        let b = sample_height(
            PoseCategory::Sitting,
            &prior,
            &mut ChaCha8Rng::seed_from_u64(9),
        );
        assert_eq!(a, b);
    }

    #[test]
    fn flat_floor_proposals_all_accepted_and_revalidate() {
        let scene = flat_floor_scene();
        let (k, e) = test_camera(96.0 * 0.02, 112.0 * 0.02);
        let grids = SceneGrids::build(scene).unwrap();
        let class_lib = test_class_library();
        let mut proposals = Vec::new();
        for i in 0..10 {
            let pelvis = Vector3::new(0.5 + 0.1 * i as f64, 0.8 + 0.05 * i as f64, 0.945);
            let pose = calibrated_standing(pelvis);
            proposals.push(project_to_proposal(&pose, &e, &k, &format!("p{i}")));
        }
        let ctx = SceneContext {
            grids: &grids,
            intrinsics: k,
            extrinsics: e,
            class_library: &class_lib,
            exemplars: None,
            scene_id: "flat".into(),
            camera_id: "cam".into(),
        };
        let opts = test_options();
        let (records, summary) = synthesize(&ctx, &proposals, &opts).unwrap();
        assert_eq!(summary.proposed, 10);
        assert_eq!(summary.accepted, 10, "summary: {summary:?}");
        // Pipeline self-consistency: every accepted record re-validates.
        let poses: Vec<(String, Pose3D)> = records
            .iter()
            .map(|r| (r.proposal_id.clone(), r.pose().unwrap()))
            .collect();
        let score = geometry_score(&poses, &grids, &opts.constraints).unwrap();
        assert_eq!(score.score, 1.0, "{:#?}", score.per_pose);
    }

    #[test]
    fn void_proposal_is_discarded_no_support() {
        let scene = flat_floor_scene();
        let (k, e) = test_camera(96.0 * 0.02, 112.0 * 0.02);
        let grids = SceneGrids::build(scene).unwrap();
        let class_lib = test_class_library();
        // A sitting pose floating far above anything that could support it.
        let pose = stick_sitting(Vector3::new(0.9, 0.9, 1.6));
        let rec = PoseRecord {
            id: "void".into(),
            joints2d: None,
            depth_offsets: None,
            joints3d: Some(pose.joints().iter().map(|j| [j.x, j.y, j.z]).collect()),
            class: None,
            category: Some(PoseCategory::Sitting),
        };
        let ctx = SceneContext {
            grids: &grids,
            intrinsics: k,
            extrinsics: e,
            class_library: &class_lib,
            exemplars: None,
            scene_id: "flat".into(),
            camera_id: "cam".into(),
        };
        let (records, summary) = synthesize(&ctx, &[rec], &test_options()).unwrap();
        assert_eq!(summary.discarded_no_support, 1);
        assert_eq!(records[0].status, RecordStatus::Discarded);
        assert_eq!(records[0].discard_reason, Some(DiscardReason::NoSupport));
    }

    #[test]
    fn same_seed_same_bytes_any_worker_count() {
        let scene = flat_floor_scene();
        let (k, e) = test_camera(96.0 * 0.02, 112.0 * 0.02);
        let grids = SceneGrids::build(scene).unwrap();
        let class_lib = test_class_library();
        let mut proposals = Vec::new();
        for i in 0..8 {
            let pose = calibrated_standing(Vector3::new(0.5 + 0.1 * i as f64, 0.9, 0.945));
            proposals.push(project_to_proposal(&pose, &e, &k, &format!("p{i}")));
        }
        let ctx = SceneContext {
            grids: &grids,
            intrinsics: k,
            extrinsics: e,
            class_library: &class_lib,
            exemplars: None,
            scene_id: "flat".into(),
            camera_id: "cam".into(),
        };
        let mut lines = Vec::new();
        for workers in [Some(1), Some(8), None] {
            let opts = SynthesisOptions {
                workers,
                ..test_options()
            };
            let (records, _) = synthesize(&ctx, &proposals, &opts).unwrap();
            let text: Vec<String> = records
                .iter()
                .map(|r| serde_json::to_string(&r.to_json_value().unwrap()).unwrap())
                .collect();
            lines.push(text.join("\n"));
        }
        assert_eq!(lines[0], lines[1]);
        assert_eq!(lines[0], lines[2]);
    }

    #[test]
    fn records_roundtrip_through_jsonl() {
        let scene = flat_floor_scene();
        let (k, e) = test_camera(96.0 * 0.02, 112.0 * 0.02);
        let grids = SceneGrids::build(scene).unwrap();
        let class_lib = test_class_library();
        let pose = calibrated_standing(Vector3::new(0.9, 0.9, 0.945));
        let proposals = vec![project_to_proposal(&pose, &e, &k, "p0")];
        let ctx = SceneContext {
            grids: &grids,
            intrinsics: k,
            extrinsics: e,
            class_library: &class_lib,
            exemplars: None,
            scene_id: "flat".into(),
            camera_id: "cam".into(),
        };
        let (records, _) = synthesize(&ctx, &proposals, &test_options()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("records.jsonl");
        write_records_jsonl(&p, &records).unwrap();
        let again = read_records_jsonl(&p).unwrap();
        assert_eq!(records.len(), again.len());
        let a = records[0].to_json_value().unwrap();
        let b = again[0].to_json_value().unwrap();
        assert_eq!(a, b);
        // Bit-exact float round trip through the file.
        assert_eq!(
            records[0].joints3d.as_ref().unwrap()[0][2].to_bits(),
            again[0].joints3d.as_ref().unwrap()[0][2].to_bits()
        );
    }

    #[test]
    fn lift_then_project_recovers_proposal_pixels() {
        let (k, e) = test_camera(1.0, 1.0);
        let pose = calibrated_standing(Vector3::new(0.5, 0.9, 0.945));
        let rec = project_to_proposal(&pose, &e, &k, "p0");
        let q2 = rec.joints2d_array().unwrap();
        let px: [PixelPoint; JOINT_COUNT] =
            std::array::from_fn(|j| PixelPoint::new(q2[j][0], q2[j][1]));
        let mut offsets = [0.0; JOINT_COUNT];
        offsets.copy_from_slice(rec.depth_offsets.as_ref().unwrap());
        // Lift at the true pelvis depth and re-project.
        let d = world_to_camera(&pose.pelvis(), &e).z;
        let lifted = lift_pose(&px, &offsets, d, &e, &k, PoseCategory::Standing).unwrap();
        let projected = project_pose(&lifted, &e, &k);
        for (j, pj) in projected.joints.iter().enumerate() {
            let pj = pj.as_ref().unwrap();
            assert!((pj.u - q2[j][0]).abs() < 1e-6);
            assert!((pj.v - q2[j][1]).abs() < 1e-6);
        }
        assert_eq!(projected.bones.len(), 16);
    }

    #[test]
    fn behind_camera_joint_is_flagged() {
        let (k, e) = test_camera(1.0, 1.0);
        // One joint placed behind the camera plane (world y < -1).
        let mut joints = *calibrated_standing(Vector3::new(0.5, 0.9, 0.945)).joints();
        joints[skeleton::L_WRIST] = Vector3::new(0.5, -1.5, 0.9);
        let pose = Pose3D::new(joints, PoseCategory::Standing).unwrap();
        let projected = project_pose(&pose, &e, &k);
        assert!(projected.joints[skeleton::L_WRIST].is_none());
        assert!(projected
            .bones
            .iter()
            .all(|b| b[0] != skeleton::L_WRIST && b[1] != skeleton::L_WRIST));
    }

    #[test]
    fn geometry_score_counts_and_empty_flag() {
        let scene = flat_floor_scene();
        let grids = SceneGrids::build(scene).unwrap();
        let cfg = ConstraintConfig {
            t_s: 5.0,
            ..ConstraintConfig::default()
        };
        // Three feet-on-floor poses and one floating high above it.
        let mut poses = Vec::new();
        for i in 0..3 {
            poses.push((
                format!("ok{i}"),
                calibrated_standing(Vector3::new(0.5 + 0.2 * i as f64, 0.9, 0.945)),
            ));
        }
        poses.push((
            "floating".into(),
            calibrated_standing(Vector3::new(0.9, 0.9, 1.6)),
        ));
        let score = geometry_score(&poses, &grids, &cfg).unwrap();
        assert_eq!(score.total, 4);
        assert_eq!(score.valid, 3);
        assert!((score.score - 0.75).abs() < 1e-12);
        assert!(!score.empty);
        let none = geometry_score(&[], &grids, &cfg).unwrap();
        assert_eq!(none.score, 0.0);
        assert!(none.empty);
    }

    #[test]
    fn degenerate_proposal_recorded_not_fatal() {
        let scene = flat_floor_scene();
        let (k, e) = test_camera(96.0 * 0.02, 112.0 * 0.02);
        let grids = SceneGrids::build(scene).unwrap();
        let class_lib = test_class_library();
        // 2D proposal with no way to obtain depth offsets (no exemplars).
        let rec = PoseRecord {
            id: "bad".into(),
            joints2d: Some(vec![[0.0, 0.0]; JOINT_COUNT]),
            depth_offsets: None,
            joints3d: None,
            class: Some(1),
            category: None,
        };
        let ctx = SceneContext {
            grids: &grids,
            intrinsics: k,
            extrinsics: e,
            class_library: &class_lib,
            exemplars: None,
            scene_id: "flat".into(),
            camera_id: "cam".into(),
        };
        let (records, summary) = synthesize(&ctx, &[rec], &test_options()).unwrap();
        assert_eq!(summary.discarded_degenerate, 1);
        assert_eq!(records[0].discard_reason, Some(DiscardReason::Degenerate));
        assert!(records[0].note.is_some());
    }

    #[test]
    fn heatmap_proposals_land_on_the_floor() {
        let scene = flat_floor_scene();
        let (k, e) = test_camera(96.0 * 0.02, 112.0 * 0.02);
        let grids = SceneGrids::build(scene).unwrap();
        let class_lib = test_class_library();
        let ctx = SceneContext {
            grids: &grids,
            intrinsics: k,
            extrinsics: e,
            class_library: &class_lib,
            exemplars: None,
            scene_id: "flat".into(),
            camera_id: "cam".into(),
        };
        // Strong spike for class 1 (standing in the test library) at a pixel
        // whose ray descends steeply enough to hit the floor inside the box.
        let hm = crate::heatmap::tests::heatmap_with(256, 64, &[(32, 150, 1, 0.95)]);
        let prior = HeightPrior::default();
        let proposals = proposals_from_heatmap(&hm, 4, 0.5, &ctx, &prior, 7).unwrap();
        assert_eq!(proposals.len(), 4);
        for p in &proposals {
            assert_eq!(p.class, Some(1));
            let j3 = p.joints3d_array().unwrap();
            // The gesture's lowest joint rests just above the floor hit.
            let min_z = j3.iter().map(|j| j.z).fold(f64::INFINITY, f64::min);
            assert!((0.0..0.12).contains(&min_z), "min_z = {min_z}");
        }
        // Deterministic for a fixed seed.
        let again = proposals_from_heatmap(&hm, 4, 0.5, &ctx, &prior, 7).unwrap();
        for (a, b) in proposals.iter().zip(again.iter()) {
            assert_eq!(a.joints3d, b.joints3d);
        }
    }
}
