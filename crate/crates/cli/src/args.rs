use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "jacdeform", version, about = "Mesh deformation through weighted per-face Jacobian fields")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimize a Jacobian field over the whole mesh.
    Deform(DeformArgs),
    /// Optimize only the faces of a region or mask; the rest stay frozen.
    Edit(EditArgs),
    /// Write OBJ frames interpolating between two fields.
    Morph(MorphArgs),
    /// Mesh quality report as JSON.
    Metrics(MetricsArgs),
    /// Render a diagnostic image or an opacity map.
    Render(RenderArgs),
    /// Inspect or check configuration files.
    Config {
        #[command(subcommand)]
        action: ConfigAction,
    },
    /// Re-run the command recorded in a manifest and compare output hashes.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Source mesh (OBJ).
    #[arg(long)]
    pub mesh: PathBuf,
    /// Flat `key = value` configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Landmark vertex indices, one per line.
    #[arg(long)]
    pub landmarks: Option<PathBuf>,
    /// Per-vertex integer region labels, one per line.
    #[arg(long)]
    pub regions: Option<PathBuf>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Extra config overrides, applied after the file and before the named flags.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Continue from a run checkpoint written with the same config.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[command(flatten)]
    pub guidance: GuidanceArgs,
}

#[derive(Debug, Args)]
#[group(id = "guidance_source", multiple = false)]
pub struct GuidanceArgs {
    /// Target positions, lines of `vertex x y z`.
    #[arg(long, value_name = "FILE")]
    pub guidance_landmarks: Option<PathBuf>,
    /// Target mesh whose silhouettes are matched from evenly spaced azimuths.
    #[arg(long, value_name = "OBJ")]
    pub guidance_silhouette: Option<PathBuf>,
    /// Region label whose radius is driven toward `--region-scale`.
    #[arg(long, value_name = "LABEL", allow_negative_numbers = true)]
    pub guidance_region: Option<i64>,
    /// Guidance server endpoint; defaults to the JACDEFORM_GUIDANCE_URL variable.
    #[arg(long, value_name = "URL")]
    pub guidance_url: Option<String>,
}

#[derive(Debug, Args)]
pub struct GuidanceTuning {
    #[arg(long, default_value_t = 2.0)]
    pub region_scale: f64,
    #[arg(long, default_value_t = 4)]
    pub silhouette_views: usize,
    /// Seconds per guidance request.
    #[arg(long, default_value_t = 30.0)]
    pub guidance_timeout: f64,
    /// Extra attempts after a transport failure.
    #[arg(long, default_value_t = 3)]
    pub guidance_retries: usize,
}

#[derive(Debug, Args)]
pub struct DeformArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub tuning: GuidanceTuning,
}

#[derive(Debug, Args)]
pub struct EditArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub tuning: GuidanceTuning,
    /// Region label whose touching faces are optimized.
    #[arg(long, allow_negative_numbers = true, conflicts_with = "mask", required_unless_present = "mask")]
    pub region: Option<i64>,
    /// Per-face 0/1 mask file.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Add every vertex farther than N rings from the editable faces as a landmark.
    #[arg(long, value_name = "N")]
    pub anchor_rings: Option<usize>,
}

#[derive(Debug, Args)]
pub struct MorphArgs {
    #[arg(long)]
    pub mesh: PathBuf,
    #[arg(long)]
    pub field_a: PathBuf,
    #[arg(long)]
    pub field_b: PathBuf,
    /// Number of frames, endpoints included.
    #[arg(long)]
    pub steps: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[arg(long)]
    pub mesh: PathBuf,
    /// Test every face pair instead of using the bounding volume hierarchy.
    #[arg(long)]
    pub brute: bool,
    /// Also write the report to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RenderMode {
    Normals,
    Flat,
    Weights,
    /// Soft silhouette; `.pgm` writes a 16-bit PGM, anything else a raw `f32` dump.
    Opacity,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub mesh: PathBuf,
    #[arg(long, value_enum)]
    pub mode: RenderMode,
    /// Field to apply before rendering; required for the weight colormap.
    #[arg(long)]
    pub field: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub camera: CameraArgs,
    /// Rasterizer sharpness in pixels (opacity mode).
    #[arg(long, default_value_t = jacdeform::raster::DEFAULT_SIGMA)]
    pub sigma: f64,
}

#[derive(Debug, Args)]
pub struct CameraArgs {
    /// Degrees around the vertical axis.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub azimuth: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub elevation: f64,
    /// Distance from the mesh centroid.
    #[arg(long, default_value_t = 3.0)]
    pub distance: f64,
    /// Vertical field of view in degrees.
    #[arg(long, default_value_t = 45.0)]
    pub fov: f64,
    #[arg(long, default_value_t = 256)]
    pub width: usize,
    #[arg(long, default_value_t = 256)]
    pub height: usize,
}

#[derive(Debug, Subcommand)]
pub enum ConfigAction {
    /// Print the resolved configuration with every key documented.
    Show(ConfigArgs),
    /// Check a configuration and print its hash.
    Validate(ConfigArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory for the replayed outputs.
    #[arg(long)]
    pub out: PathBuf,
}
