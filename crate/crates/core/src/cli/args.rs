use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Orientation and spin estimation for dotted balls.
#[derive(Debug, Parser)]
#[command(name = "spindoe", version)]
pub struct Cli {
    /// Seed for every random choice the command makes.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// JSON file overriding model and algorithm parameters (radians).
    #[arg(long, global = true, env = "SPINDOE_CONFIG")]
    pub config: Option<PathBuf>,

    /// Where to write the run manifest. Defaults to the primary output
    /// path with `.manifest.json` appended.
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate or evaluate dot patterns.
    #[command(subcommand)]
    Pattern(PatternCmd),
    /// Build hash tables.
    #[command(subcommand)]
    Hash(HashCmd),
    /// Recognize the ball orientation in every frame of an observation file.
    Orient(OrientArgs),
    /// Fit the spin of an orientation sequence.
    Spin(SpinArgs),
    /// Fit exponential spin decay.
    Dampen(DampenArgs),
    /// Generate synthetic observations.
    #[command(subcommand)]
    Synth(SynthCmd),
    /// Monte Carlo benchmarks as CSV.
    Bench(BenchArgs),
    /// Re-run the command recorded in a manifest and compare outputs.
    Rerun(RerunArgs),
}

#[derive(Debug, Subcommand)]
pub enum PatternCmd {
    /// Random pattern, optionally optimized for hash-space spread.
    Gen {
        #[arg(long, default_value_t = 20)]
        n: usize,
        /// Optimizer iterations; 0 keeps the random pattern.
        #[arg(long, default_value_t = 300)]
        iters: usize,
        /// Minimum separation of the random pattern, degrees.
        #[arg(long, default_value_t = 0.0)]
        min_sep: f64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Monte Carlo recognition success rate under dot noise.
    Eval {
        #[arg(long)]
        pattern: PathBuf,
        /// Dot noise, degrees.
        #[arg(long, default_value_t = 3.0)]
        sigma: f64,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        /// Report file; printed to stdout when absent.
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum HashCmd {
    Build {
        #[arg(long)]
        pattern: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct OrientArgs {
    #[arg(long)]
    pub pattern: PathBuf,
    /// Prebuilt hash table; built from the pattern when absent.
    #[arg(long)]
    pub table: Option<PathBuf>,
    #[arg(long)]
    pub obs: PathBuf,
    #[arg(short, long)]
    pub out: PathBuf,
    /// Ball radius in the units of `x,y` observation files.
    #[arg(long, default_value_t = 1.0)]
    pub radius: f64,
}

#[derive(Debug, Args)]
pub struct RansacArgs {
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Inlier gate, degrees.
    #[arg(long)]
    pub gate: Option<f64>,
    #[arg(long)]
    pub min_inliers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SpinArgs {
    /// Orientation CSV (`t,qw,qx,qy,qz[,rmse]`, or the output of `orient`).
    #[arg(long)]
    pub orient: PathBuf,
    /// Recompute timestamps as frame / fps (row index when there is no
    /// frame column).
    #[arg(long)]
    pub fps: Option<f64>,
    /// Samples per fit; the whole sequence when absent.
    #[arg(long)]
    pub window: Option<usize>,
    /// Samples between window starts; defaults to the window length.
    #[arg(long)]
    pub step: Option<usize>,
    #[command(flatten)]
    pub ransac: RansacArgs,
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DampenArgs {
    /// Orientation CSV; spin norms come from finite differences or windows.
    #[arg(long, conflicts_with = "spin", required_unless_present = "spin")]
    pub orient: Option<PathBuf>,
    /// Spin CSV written by `spin`.
    #[arg(long)]
    pub spin: Option<PathBuf>,
    /// Samples per spin fit; 0 uses finite differences of neighbors.
    #[arg(long, default_value_t = 0)]
    pub window: usize,
    #[arg(long)]
    pub fps: Option<f64>,
    #[command(flatten)]
    pub ransac: RansacArgs,
    /// Also report the straight-line fit.
    #[arg(long)]
    pub linear: bool,
    /// Air viscosity for the theoretical coefficient, kg/(m s).
    #[arg(long, requires_all = ["ball_radius", "mass"])]
    pub nu: Option<f64>,
    /// Ball radius, meters.
    #[arg(long)]
    pub ball_radius: Option<f64>,
    /// Ball mass, kilograms.
    #[arg(long)]
    pub mass: Option<f64>,
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct NoiseArgs {
    /// Dot noise, degrees.
    #[arg(long, default_value_t = 3.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0.05)]
    pub dropout: f64,
    /// Expected spurious dots per frame.
    #[arg(long, default_value_t = 0.3)]
    pub spurious: f64,
    /// Zero noise, dropout and spurious dots.
    #[arg(long)]
    pub clean: bool,
}

#[derive(Debug, Subcommand)]
pub enum SynthCmd {
    /// Independent frames at random orientations.
    Obs {
        #[arg(long)]
        pattern: PathBuf,
        #[arg(long, default_value_t = 100)]
        frames: usize,
        #[arg(long, default_value_t = 350.0)]
        fps: f64,
        #[command(flatten)]
        noise: NoiseArgs,
        #[arg(short, long)]
        output: PathBuf,
        /// Ground-truth CSV.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// A spinning ball filmed at a fixed frame rate.
    Seq {
        #[arg(long)]
        pattern: PathBuf,
        /// Spin rate, revolutions per second.
        #[arg(long, default_value_t = 50.0)]
        rps: f64,
        /// Spin axis `x,y,z`; random when absent.
        #[arg(long, value_parser = parse_axis, allow_hyphen_values = true)]
        axis: Option<[f64; 3]>,
        #[arg(long, default_value_t = 350.0)]
        fps: f64,
        #[arg(long, default_value_t = 10)]
        frames: usize,
        /// Decay rate of the spin, 1/s.
        #[arg(long)]
        dampening: Option<f64>,
        #[command(flatten)]
        noise: NoiseArgs,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        truth: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Orientation,
    Spin,
    Sensitivity,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_enum)]
    pub suite: Suite,
    /// Required by the orientation and sensitivity suites.
    #[arg(long)]
    pub pattern: Option<PathBuf>,
    #[arg(long, default_value_t = 10_000)]
    pub trials: usize,
    /// Noise levels in degrees: dot noise, or orientation noise for the
    /// spin suite.
    #[arg(long, value_delimiter = ',', default_value = "0,1,3,5,8")]
    pub sigmas: Vec<f64>,
    #[arg(long, default_value_t = 50.0)]
    pub rps: f64,
    #[arg(long, default_value_t = 350.0)]
    pub fps: f64,
    #[arg(long, default_value_t = 10)]
    pub frames: usize,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct RerunArgs {
    pub manifest: PathBuf,
}

fn parse_axis(s: &str) -> Result<[f64; 3], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|c| c.trim().parse::<f64>().map_err(|e| format!("{c:?}: {e}")))
        .collect::<Result<_, _>>()?;
    <[f64; 3]>::try_from(v).map_err(|v| format!("expected x,y,z, got {} values", v.len()))
}
