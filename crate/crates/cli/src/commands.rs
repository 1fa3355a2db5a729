//! Subcommand implementations: each loads and validates its inputs, invokes
//! one library operation, and serializes the result.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::path::PathBuf;

use scenepose::camera::world_to_pixel;
use scenepose::constraint::{adjust_pose, check_pose, AdjustOutcome};
use scenepose::depthmap::{render_depth_heatmap, write_dhm};
use scenepose::heatmap::read_hm31;
use scenepose::pipeline::{
    build_world_pose, geometry_score, project_pose, proposals_from_heatmap,
    write_records_jsonl, HeightPrior, PoseScore, ProposalEnv, SceneContext, SynthesisOptions,
};
use scenepose::pose::{Pose3D, PoseRecord};
use scenepose::skeleton::{PoseCategory, JOINT_COUNT};

use crate::input::{
    build_grids, ensure_exists, file_stem, load_camera_file, load_classes, load_exemplars,
    load_proposals, load_world_pose_file, resolve_constraints, resolve_workers, WorldPoseEntry,
};
use crate::{
    AdjustArgs, Cli, CliError, Command, LiftArgs, ProjectArgs, RenderHeatmapArgs, ScoreArgs,
    SynthesizeArgs, ValidateArgs,
};

pub fn run(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Synthesize(args) => cmd_synthesize(&cli, args),
        Command::Score(args) => cmd_score(&cli, args),
        Command::Validate(args) => cmd_validate(&cli, args),
        Command::Lift(args) => cmd_lift(&cli, args),
        Command::Adjust(args) => cmd_adjust(&cli, args),
        Command::RenderHeatmap(args) => cmd_render_heatmap(&cli, args),
        Command::Project(args) => cmd_project(&cli, args),
    }
}

fn write_text(path: Option<&PathBuf>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => scenepose::io::write_atomic(p, text.as_bytes()).map_err(CliError::from_output),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_synthesize(cli: &Cli, args: &SynthesizeArgs) -> Result<(), CliError> {
    // Fail fast: every referenced file must exist and parse before work starts.
    let constraints = resolve_constraints(cli.config.as_ref(), &args.constraints)?;
    let grids = build_grids(&args.scene, &args.labels)?;
    let (intrinsics, extrinsics) = load_camera_file(&args.camera)?;
    let class_library = load_classes(&args.classes)?;
    let exemplars = args.pose_lib.as_deref().map(load_exemplars).transpose()?;

    let ctx = SceneContext {
        grids: &grids,
        intrinsics,
        extrinsics,
        class_library: &class_library,
        exemplars: exemplars.as_ref(),
        scene_id: args
            .scene_id
            .clone()
            .unwrap_or_else(|| file_stem(&args.scene)),
        camera_id: args
            .camera_id
            .clone()
            .unwrap_or_else(|| file_stem(&args.camera)),
    };
    let opts = SynthesisOptions {
        constraints,
        prior: HeightPrior::default(),
        seed: cli.seed,
        workers: resolve_workers(cli.workers)?,
        rotation_count: args.rotations,
    };

    let proposals = match (&args.poses, &args.heatmap) {
        (Some(path), None) => load_proposals(path)?,
        (None, Some(path)) => {
            ensure_exists(path)?;
            let hm = read_hm31(path).map_err(CliError::from_input)?;
            proposals_from_heatmap(&hm, args.num_proposals, args.tau, &ctx, &opts.prior, cli.seed)
                .map_err(CliError::from_input)?
        }
        _ => {
            return Err(CliError::BadInput(
                "exactly one of --poses or --heatmap is required".into(),
            ))
        }
    };

    let (records, summary) =
        scenepose::pipeline::synthesize(&ctx, &proposals, &opts).map_err(CliError::from_input)?;
    write_records_jsonl(&args.out, &records).map_err(CliError::from_output)?;
    let summary_path = args
        .summary
        .clone()
        .unwrap_or_else(|| args.out.with_extension("summary.json"));
    let summary_text = serde_json::to_string_pretty(&summary)
        .map_err(|e| CliError::Io(e.to_string()))?;
    write_text(Some(&summary_path), &format!("{summary_text}\n"))?;
    println!(
        "proposed {}, accepted {}, discarded_no_support {}, discarded_degenerate {} -> {}",
        summary.proposed,
        summary.accepted,
        summary.discarded_no_support,
        summary.discarded_degenerate,
        args.out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct ScoreOutput {
    score: f64,
    total: usize,
    valid: usize,
    empty: bool,
    /// Selected records that never produced a pose; they count as invalid.
    missing_pose: Vec<String>,
    per_pose: Vec<PoseScore>,
}

fn cmd_score(cli: &Cli, args: &ScoreArgs) -> Result<(), CliError> {
    let constraints = resolve_constraints(cli.config.as_ref(), &args.constraints)?;
    let grids = build_grids(&args.scene, &args.labels)?;
    let file = load_world_pose_file(&args.records)?;
    let entries = file.entries(!args.all)?;

    let mut posed: Vec<(String, Pose3D)> = Vec::new();
    let mut missing_pose = Vec::new();
    for e in entries {
        match e.pose {
            Some(p) => posed.push((e.id, p)),
            None => missing_pose.push(e.id),
        }
    }
    let inner = geometry_score(&posed, &grids, &constraints).map_err(CliError::from_input)?;
    let total = posed.len() + missing_pose.len();
    let out = ScoreOutput {
        score: if total == 0 {
            0.0
        } else {
            inner.valid as f64 / total as f64
        },
        total,
        valid: inner.valid,
        empty: total == 0,
        missing_pose,
        per_pose: inner.per_pose,
    };
    if cli.json {
        println!(
            "{}",
            serde_json::to_string(&out).map_err(|e| CliError::Io(e.to_string()))?
        );
    } else {
        for p in &out.per_pose {
            println!(
                "{}\t{}\tfree_ok={}\tsupport_ok={}\tr_f={}",
                p.id, p.category, p.report.free_ok, p.report.support_ok, p.report.r_f
            );
        }
        for id in &out.missing_pose {
            println!("{id}\t-\tno pose");
        }
        if out.empty {
            eprintln!("warning: empty pose set, score is 0 by definition");
        }
        println!("geometry_score = {:.6} ({}/{})", out.score, out.valid, out.total);
    }
    Ok(())
}

#[derive(Serialize)]
struct ValidateLine<'a> {
    id: &'a str,
    valid: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    report: Option<&'a scenepose::constraint::CheckReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    note: Option<&'a str>,
}

fn cmd_validate(cli: &Cli, args: &ValidateArgs) -> Result<(), CliError> {
    let constraints = resolve_constraints(cli.config.as_ref(), &args.constraints)?;
    let grids = build_grids(&args.scene, &args.labels)?;
    let file = load_world_pose_file(&args.poses)?;
    let entries = file.entries(false)?;

    let mut lines = String::new();
    for e in &entries {
        let line = match &e.pose {
            Some(pose) => {
                let report = check_pose(pose, &grids, &constraints)
                    .map_err(CliError::from_input)?;
                serde_json::to_string(&ValidateLine {
                    id: &e.id,
                    valid: report.valid(),
                    report: Some(&report),
                    note: None,
                })
            }
            None => serde_json::to_string(&ValidateLine {
                id: &e.id,
                valid: false,
                report: None,
                note: Some("no pose"),
            }),
        }
        .map_err(|e| CliError::Io(e.to_string()))?;
        lines.push_str(&line);
        lines.push('\n');
    }
    write_text(args.out.as_ref(), &lines)
}

fn cmd_lift(cli: &Cli, args: &LiftArgs) -> Result<(), CliError> {
    let (intrinsics, extrinsics) = load_camera_file(&args.camera)?;
    let proposals = load_proposals(&args.poses)?;
    let class_library = args.classes.as_deref().map(load_classes).transpose()?;
    let exemplars = args.pose_lib.as_deref().map(load_exemplars).transpose()?;
    let env = ProposalEnv {
        intrinsics: &intrinsics,
        extrinsics: &extrinsics,
        class_library: class_library.as_ref(),
        exemplars: exemplars.as_ref(),
        rotation_count: args.rotations,
        prior: HeightPrior::default(),
    };

    let mut lines = String::new();
    for (i, rec) in proposals.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
        rng.set_stream(i as u64 + 1);
        let prepared = build_world_pose(rec, &env, args.height, &mut rng)
            .map_err(|e| CliError::BadInput(format!("pose '{}': {e}", rec.id)))?;
        let out = PoseRecord {
            id: rec.id.clone(),
            joints2d: rec.joints2d.clone(),
            depth_offsets: rec.depth_offsets.clone(),
            joints3d: Some(
                prepared
                    .pose
                    .joints()
                    .iter()
                    .map(|j| [j.x, j.y, j.z])
                    .collect(),
            ),
            class: rec.class,
            category: Some(prepared.category),
        };
        lines.push_str(&serde_json::to_string(&out).map_err(|e| CliError::Io(e.to_string()))?);
        lines.push('\n');
    }
    write_text(args.out.as_ref(), &lines)
}

#[derive(Serialize)]
struct AdjustLine<'a> {
    id: &'a str,
    outcome: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    translation: Option<[i64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    r_f: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    r_s: Option<f64>,
}

fn cmd_adjust(cli: &Cli, args: &AdjustArgs) -> Result<(), CliError> {
    let constraints = resolve_constraints(cli.config.as_ref(), &args.constraints)?;
    let grids = build_grids(&args.scene, &args.labels)?;
    let file = load_world_pose_file(&args.poses)?;
    let entries = file.entries(false)?;

    let mut adjusted_lines = String::new();
    for e in &entries {
        let Some(pose) = &e.pose else {
            println!(
                "{}",
                serde_json::to_string(&AdjustLine {
                    id: &e.id,
                    outcome: "skipped_no_pose",
                    translation: None,
                    r_f: None,
                    r_s: None,
                })
                .map_err(|er| CliError::Io(er.to_string()))?
            );
            continue;
        };
        let outcome =
            adjust_pose(pose, &grids, &constraints).map_err(CliError::from_input)?;
        let line = match &outcome {
            AdjustOutcome::Adjusted(adj) => {
                let rec = PoseRecord {
                    id: e.id.clone(),
                    joints2d: None,
                    depth_offsets: None,
                    joints3d: Some(
                        adj.pose.joints().iter().map(|j| [j.x, j.y, j.z]).collect(),
                    ),
                    class: None,
                    category: Some(adj.pose.category),
                };
                adjusted_lines.push_str(
                    &serde_json::to_string(&rec).map_err(|er| CliError::Io(er.to_string()))?,
                );
                adjusted_lines.push('\n');
                AdjustLine {
                    id: &e.id,
                    outcome: "adjusted",
                    translation: Some(adj.translation),
                    r_f: Some(adj.r_f),
                    r_s: Some(adj.r_s),
                }
            }
            AdjustOutcome::Discarded(info) => AdjustLine {
                id: &e.id,
                outcome: "discarded",
                translation: None,
                r_f: Some(info.best_r_f),
                r_s: info.best_r_s,
            },
        };
        println!(
            "{}",
            serde_json::to_string(&line).map_err(|er| CliError::Io(er.to_string()))?
        );
    }
    if args.out.is_some() {
        write_text(args.out.as_ref(), &adjusted_lines)?;
    }
    Ok(())
}

fn cmd_render_heatmap(cli: &Cli, args: &RenderHeatmapArgs) -> Result<(), CliError> {
    let (intrinsics, extrinsics) = load_camera_file(&args.camera)?;
    let file = load_world_pose_file(&args.poses)?;
    let entries = file.entries(false)?;
    let entry: &WorldPoseEntry = entries.get(args.index).ok_or_else(|| {
        CliError::BadInput(format!(
            "index {} out of range, file holds {} poses",
            args.index,
            entries.len()
        ))
    })?;
    let pose = entry.pose.as_ref().ok_or_else(|| {
        CliError::BadInput(format!("pose '{}' has no world joints", entry.id))
    })?;

    let mut joints2d = [[0.0; 2]; JOINT_COUNT];
    let mut depths = [0.0; JOINT_COUNT];
    for (j, w) in pose.joints().iter().enumerate() {
        let p = world_to_pixel(w, &extrinsics, &intrinsics)
            .map_err(|e| CliError::BadInput(format!("pose '{}', joint {j}: {e}", entry.id)))?;
        joints2d[j] = [p.u, p.v];
        depths[j] = p.d.expect("projection carries depth");
    }
    let map = render_depth_heatmap(&joints2d, &depths, args.height, args.width)
        .map_err(CliError::from_input)?;
    if cli.json {
        let rows: Vec<&[f64]> = map.values.chunks(map.w).collect();
        let text = serde_json::to_string(&serde_json::json!({
            "h": map.h,
            "w": map.w,
            "values": rows,
        }))
        .map_err(|e| CliError::Io(e.to_string()))?;
        write_text(Some(&args.out), &format!("{text}\n"))
    } else {
        write_dhm(&args.out, &map).map_err(CliError::from_output)
    }
}

#[derive(Serialize)]
struct ProjectLine<'a> {
    id: &'a str,
    category: PoseCategory,
    projection: scenepose::pipeline::ProjectedPose,
}

fn cmd_project(_cli: &Cli, args: &ProjectArgs) -> Result<(), CliError> {
    let (intrinsics, extrinsics) = load_camera_file(&args.camera)?;
    let file = load_world_pose_file(&args.poses)?;
    let entries = file.entries(false)?;
    let mut lines = String::new();
    for e in &entries {
        let Some(pose) = &e.pose else { continue };
        let projection = project_pose(pose, &extrinsics, &intrinsics);
        let line = serde_json::to_string(&ProjectLine {
            id: &e.id,
            category: pose.category,
            projection,
        })
        .map_err(|er| CliError::Io(er.to_string()))?;
        lines.push_str(&line);
        lines.push('\n');
    }
    write_text(args.out.as_ref(), &lines)
}
