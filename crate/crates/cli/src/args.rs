use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "lawforge", version, about = "Discover constitutive laws from observed particle dynamics")]
pub struct Cli {
    /// Worker threads for parallel evaluation (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a scene's hidden reference law and write the ground truth.
    GenScene(GenSceneArgs),
    /// Search for a law that reproduces a generated scene.
    Discover(DiscoverArgs),
    /// Compare trajectories frame by frame.
    Eval(EvalArgs),
    /// Run a law file on a scene.
    Simulate(SimulateArgs),
    /// Render a trajectory to PPM frames.
    Render(RenderArgs),
    /// Print the candidate table of a discovery run.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct GenSceneArgs {
    /// Bundled scene name (bouncy, jelly, plasticine, sand) or a scene TOML file.
    pub scene: String,
    /// Parent directory; the scene is written to `<out-dir>/<name>/`.
    #[arg(long, default_value = "scenes")]
    pub out_dir: PathBuf,
    /// Override the particle-jitter seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the number of simulated frames.
    #[arg(long)]
    pub frames: Option<usize>,
    /// Also write PPM frames for every camera (needed for visual losses).
    #[arg(long)]
    pub render: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OperatorKind {
    Mock,
    Live,
}

#[derive(Debug, Args)]
pub struct DiscoverArgs {
    /// Scene directory written by gen-scene.
    pub scene_dir: PathBuf,
    /// Run directory (default: `<scene_dir>/runs/<schedule>-seed<seed>`).
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Evolution config TOML; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// decoupled or joint_only.
    #[arg(long)]
    pub schedule: Option<String>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub alternating_iterations: Option<usize>,
    #[arg(long)]
    pub parents_k: Option<usize>,
    #[arg(long)]
    pub offspring_m: Option<usize>,
    #[arg(long)]
    pub eval_budget: Option<usize>,
    #[arg(long)]
    pub refit_budget: Option<usize>,
    /// chamfer, visual or mixed.
    #[arg(long)]
    pub loss: Option<String>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Fit only the first N frames of the ground truth.
    #[arg(long)]
    pub train_frames: Option<usize>,
    #[arg(long, value_enum, default_value = "mock")]
    pub operator: OperatorKind,
    /// Serve live responses only from this transcript directory (no network, no credentials).
    #[arg(long)]
    pub replay: Option<PathBuf>,
    /// Chat-completions URL for the live operator.
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Model name for the live operator.
    #[arg(long)]
    pub model: Option<String>,
    /// Environment variable holding the API key.
    #[arg(long)]
    pub api_key_env: Option<String>,
    #[arg(long)]
    pub max_in_flight: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Reference trajectory (VLTJ).
    pub reference: PathBuf,
    /// One or more trajectories to score against the reference.
    #[arg(required = true)]
    pub candidates: Vec<PathBuf>,
    /// Compare only the common prefix when frame counts differ.
    #[arg(long)]
    pub truncate: bool,
    /// Column labels, one per candidate (default: file names).
    #[arg(long, value_delimiter = ',')]
    pub labels: Vec<String>,
    /// Reference frame directory (view subdirectories of PPMs) for image metrics.
    #[arg(long)]
    pub reference_frames: Option<PathBuf>,
    /// Candidate frame directories, one per candidate.
    #[arg(long, value_delimiter = ',')]
    pub candidate_frames: Vec<PathBuf>,
    /// Also write per-frame Chamfer as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Law source file.
    pub law: PathBuf,
    /// Scene directory, scene TOML file or bundled scene name.
    pub scene: String,
    /// Parameter override `name=value`; repeatable.
    #[arg(long = "theta", value_name = "NAME=VALUE")]
    pub theta: Vec<String>,
    /// Frames to simulate (default: the scene's).
    #[arg(long)]
    pub frames: Option<usize>,
    /// Output trajectory path.
    #[arg(long, default_value = "sim.vltj")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// Trajectory to render.
    pub trajectory: PathBuf,
    /// Scene the trajectory belongs to (colors, opacity and splat sizes).
    #[arg(long)]
    pub scene: String,
    /// Camera axis: +x, -x, +y, -y, +z or -z.
    #[arg(long, allow_hyphen_values = true)]
    pub axis: Option<String>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long, default_value = "frames")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Run directory written by discover.
    pub run_dir: PathBuf,
    /// Print the full report TOML instead of the table.
    #[arg(long)]
    pub toml: bool,
}
