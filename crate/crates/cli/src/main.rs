//! Command-line front end: thin shells over the library operations, with a
//! fixed exit-code contract (0 success, 2 bad input, 3 write failure).

mod commands;
mod input;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

/// Flags layered over a config file (file values first, flags win).
#[derive(Debug, Clone, Args)]
pub struct ConstraintFlags {
    /// Max intersecting voxels tolerated by the free-space constraint.
    #[arg(long)]
    pub tf: Option<u32>,
    /// Min support response for a valid placement.
    #[arg(long)]
    pub ts: Option<f64>,
    /// Chebyshev proximity radius in voxels for validity checks.
    #[arg(long)]
    pub support_proximity: Option<i64>,
    /// Local adjustment window half-width in meters.
    #[arg(long)]
    pub search_radius_m: Option<f64>,
    /// Bone capsule dilation radius in voxels.
    #[arg(long)]
    pub bone_radius: Option<i64>,
}

#[derive(Debug, Parser)]
#[command(
    name = "scenepose",
    version,
    about = "Synthesize and validate 3D human poses in voxelized indoor scenes"
)]
pub struct Cli {
    /// RNG seed for every stochastic stage.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (default: SCENEPOSE_WORKERS env var, then all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// TOML or JSON file with constraint parameters.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Machine-readable JSON output where a command offers it.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the full pipeline: lift proposals into the scene, adjust, and
    /// write accepted/discarded records.
    Synthesize(SynthesizeArgs),
    /// Compute the geometry score of a record or pose file against a scene.
    Score(ScoreArgs),
    /// Check the free-space and support constraints for each pose.
    Validate(ValidateArgs),
    /// Estimate depth and lift 2D poses to world coordinates.
    Lift(LiftArgs),
    /// Locally adjust world poses to their best supported placement.
    Adjust(AdjustArgs),
    /// Rasterize a pose into a depth heat map image.
    RenderHeatmap(RenderHeatmapArgs),
    /// Project world poses into image-space overlay data.
    Project(ProjectArgs),
}

#[derive(Debug, Args)]
pub struct SynthesizeArgs {
    /// Scene voxel grid (.svx).
    #[arg(long)]
    pub scene: PathBuf,
    /// Label table sidecar JSON.
    #[arg(long)]
    pub labels: PathBuf,
    /// Camera JSON.
    #[arg(long)]
    pub camera: PathBuf,
    /// Pose proposals (JSONL). Mutually exclusive with --heatmap.
    #[arg(long, conflicts_with = "heatmap")]
    pub poses: Option<PathBuf>,
    /// Location heat map (.hm31) to sample proposals from.
    #[arg(long)]
    pub heatmap: Option<PathBuf>,
    /// Proposals to draw from the heat map.
    #[arg(long, default_value_t = 30)]
    pub num_proposals: usize,
    /// Heat-map foreground threshold.
    #[arg(long, default_value_t = 0.5)]
    pub tau: f64,
    /// 30-class pose library JSON.
    #[arg(long)]
    pub classes: PathBuf,
    /// Exemplar 3D pose library (JSONL) for 2D-only proposals.
    #[arg(long)]
    pub pose_lib: Option<PathBuf>,
    /// Rotation grid size for 2D-to-3D retrieval.
    #[arg(long, default_value_t = 36)]
    pub rotations: usize,
    /// Output records JSONL.
    #[arg(long)]
    pub out: PathBuf,
    /// Summary JSON path (default: <out>.summary.json).
    #[arg(long)]
    pub summary: Option<PathBuf>,
    /// Scene id stored in records (default: scene file stem).
    #[arg(long)]
    pub scene_id: Option<String>,
    /// Camera id stored in records (default: camera file stem).
    #[arg(long)]
    pub camera_id: Option<String>,
    #[command(flatten)]
    pub constraints: ConstraintFlags,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    /// Records JSONL (or a pose JSONL with world joints).
    #[arg(long)]
    pub records: PathBuf,
    /// Score every record, not only the accepted ones.
    #[arg(long)]
    pub all: bool,
    #[command(flatten)]
    pub constraints: ConstraintFlags,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    /// Poses to check: records JSONL or pose JSONL with world joints.
    #[arg(long)]
    pub poses: PathBuf,
    /// Report JSONL path (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub constraints: ConstraintFlags,
}

#[derive(Debug, Args)]
pub struct LiftArgs {
    #[arg(long)]
    pub camera: PathBuf,
    /// 2D pose proposals (JSONL).
    #[arg(long)]
    pub poses: PathBuf,
    /// 30-class pose library JSON (needed when categories come from classes).
    #[arg(long)]
    pub classes: Option<PathBuf>,
    /// Exemplar 3D pose library (JSONL) for proposals without depth offsets.
    #[arg(long)]
    pub pose_lib: Option<PathBuf>,
    /// Fixed height in meters; sampled from the prior when omitted.
    #[arg(long)]
    pub height: Option<f64>,
    /// Rotation grid size for 2D-to-3D retrieval.
    #[arg(long, default_value_t = 36)]
    pub rotations: usize,
    /// Output pose JSONL with world joints (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AdjustArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    /// World poses: records JSONL or pose JSONL with world joints.
    #[arg(long)]
    pub poses: PathBuf,
    /// Adjusted pose JSONL (discarded poses are dropped from this file).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub constraints: ConstraintFlags,
}

#[derive(Debug, Args)]
pub struct RenderHeatmapArgs {
    /// Records JSONL or pose JSONL with world joints.
    #[arg(long)]
    pub poses: PathBuf,
    #[arg(long)]
    pub camera: PathBuf,
    /// Which entry of the file to render.
    #[arg(long, default_value_t = 0)]
    pub index: usize,
    #[arg(long)]
    pub width: usize,
    #[arg(long)]
    pub height: usize,
    /// Output path: binary .dhm, or JSON with --json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    /// Records JSONL or pose JSONL with world joints.
    #[arg(long)]
    pub poses: PathBuf,
    #[arg(long)]
    pub camera: PathBuf,
    /// Overlay JSONL path (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// CLI failure classes, mapped onto the exit-code contract.
#[derive(Debug)]
pub enum CliError {
    /// Missing or malformed input: exit code 2.
    BadInput(String),
    /// Failure writing results: exit code 3.
    Io(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::BadInput(m) => write!(f, "{m}"),
            CliError::Io(m) => write!(f, "{m}"),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::BadInput(_) => 2,
            CliError::Io(_) => 3,
        }
    }

    /// Library errors raised while loading inputs count as bad input.
    pub fn from_input(e: scenepose::Error) -> Self {
        CliError::BadInput(e.to_string())
    }

    /// Library errors raised while writing results count as I/O failures.
    pub fn from_output(e: scenepose::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = commands::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
