//! Command-line surface. Every command parameter is optional here so that a
//! config file or preset can supply it; defaults are applied after layering
//! and are listed in each flag's help text.

use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Parser, Debug)]
#[command(
    name = "twistlab",
    version,
    about = "Twisted-state stability, bifurcation and ring simulation"
)]
pub struct Cli {
    /// Flat key/value TOML file with parameters for the command (flags win).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Named parameter set; see `twistlab presets`.
    #[arg(long, global = true)]
    pub preset: Option<String>,

    /// Directory for the JSON envelope and CSV tables. Without it the
    /// envelope is printed to stdout and no files are written.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Which files to write under --out [default: both].
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,

    /// Also write a gnuplot script next to the CSV tables (with --out).
    #[arg(long, global = true)]
    pub plot: bool,

    /// Seed for every random draw [default: 0].
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads: a positive integer or "auto" [default: $TWISTLAB_THREADS, else auto].
    #[arg(long, global = true)]
    pub threads: Option<Threads>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Fourier coefficients of the indicator kernel and the c2..c6 coefficients.
    Kernel(KernelArgs),
    /// Spectrum of the linearization at a q-twisted state.
    Spectrum(SpectrumArgs),
    /// Threshold radii (continuum and, with --m, finite ring).
    Thresholds(ThresholdArgs),
    /// Pitchfork coefficients along a parameter curve.
    Gamma(GammaArgs),
    /// Branch profiles, Newton refinement and error scaling on a finite ring.
    Branch(BranchArgs),
    /// Time integration of a finite ring from a perturbed twisted state.
    Simulate(SimulateArgs),
    /// Newton refinement of an equilibrium of a finite ring.
    Equilibrium(EquilibriumArgs),
    /// Maximal eigenvalue over an (r, lambda) grid with its zero contour.
    StabilityMap(StabilityMapArgs),
    /// Tabulate the slope function iota.
    Iota(IotaArgs),
    /// List the named presets.
    Presets,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Kernel(_) => "kernel",
            Command::Spectrum(_) => "spectrum",
            Command::Thresholds(_) => "thresholds",
            Command::Gamma(_) => "gamma",
            Command::Branch(_) => "branch",
            Command::Simulate(_) => "simulate",
            Command::Equilibrium(_) => "equilibrium",
            Command::StabilityMap(_) => "stability-map",
            Command::Iota(_) => "iota",
            Command::Presets => "presets",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Json,
    Csv,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Threads {
    Count(usize),
    Auto(AutoTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoTag {
    Auto,
}

impl FromStr for Threads {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s == "auto" {
            return Ok(Threads::Auto(AutoTag::Auto));
        }
        match s.parse::<usize>() {
            Ok(0) | Err(_) => Err(format!(
                "threads must be a positive integer or \"auto\" (got {s:?})"
            )),
            Ok(n) => Ok(Threads::Count(n)),
        }
    }
}

/// A mode cutoff: "auto" or a positive integer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cutoff {
    Modes(i64),
    Auto(AutoTag),
}

impl FromStr for Cutoff {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s == "auto" {
            return Ok(Cutoff::Auto(AutoTag::Auto));
        }
        match s.parse::<i64>() {
            Ok(n) if n >= 1 => Ok(Cutoff::Modes(n)),
            _ => Err(format!(
                "kmax must be a positive integer or \"auto\" (got {s:?})"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignArg {
    Attractive,
    Repulsive,
}

impl From<SignArg> for twistlab::Sign {
    fn from(s: SignArg) -> Self {
        match s {
            SignArg::Attractive => twistlab::Sign::Attractive,
            SignArg::Repulsive => twistlab::Sign::Repulsive,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdArg {
    Attractive,
    Repulsive,
    RStar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyArg {
    RLinear,
    LambdaLinear,
    Mixed,
    TFamily,
}

/// Where a curve or a ring radius is anchored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Anchor {
    AttractiveThreshold,
    RepulsiveThreshold,
    Point,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoefficientArg {
    C1,
    C2,
    C3,
    C4,
    C5,
    C6,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrderArg {
    Pairwise,
    Triplet,
    Quadruplet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitArg {
    Twisted,
    Z1,
    Z2,
    Perturbed,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct KernelArgs {
    /// Coupling range r in (0, 1/2].
    #[arg(long)]
    pub r: Option<f64>,
    /// Largest Fourier index listed [default: 10].
    #[arg(long)]
    pub kmax: Option<i64>,
    /// Also evaluate one linearization coefficient (needs --q and --k).
    #[arg(long, value_enum)]
    pub coefficient: Option<CoefficientArg>,
    #[arg(long)]
    pub q: Option<u32>,
    #[arg(long, allow_hyphen_values = true)]
    pub k: Option<i64>,
    /// Second mode index for c3/c4.
    #[arg(long, allow_hyphen_values = true)]
    pub second_mode: Option<i64>,
    /// Triplet strength [default: 0].
    #[arg(long, allow_hyphen_values = true)]
    pub lambda: Option<f64>,
    /// Quadruplet strength [default: 0].
    #[arg(long, allow_hyphen_values = true)]
    pub mu: Option<f64>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct SpectrumArgs {
    /// Twist number q >= 1.
    #[arg(long)]
    pub q: Option<u32>,
    /// Coupling range r in (0, 1/2].
    #[arg(long)]
    pub r: Option<f64>,
    /// Triplet strength [default: 0].
    #[arg(long, allow_hyphen_values = true)]
    pub lambda: Option<f64>,
    /// Quadruplet strength [default: 0].
    #[arg(long, allow_hyphen_values = true)]
    pub mu: Option<f64>,
    /// Listed modes: "auto" (certified truncation) or an integer [default: auto].
    #[arg(long)]
    pub kmax: Option<Cutoff>,
    /// [default: attractive]
    #[arg(long, value_enum)]
    pub sign: Option<SignArg>,
    /// Accuracy of the supremum [default: 1e-9].
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ThresholdArgs {
    /// Twist number q >= 1.
    #[arg(long)]
    pub q: Option<u32>,
    /// [default: attractive]
    #[arg(long, value_enum)]
    pub kind: Option<ThresholdArg>,
    /// Ring size for the finite-ring threshold (attractive/repulsive only).
    #[arg(long)]
    pub m: Option<usize>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct GammaArgs {
    /// Twist number q >= 1.
    #[arg(long)]
    pub q: Option<u32>,
    /// [default: r-linear]
    #[arg(long, value_enum)]
    pub family: Option<FamilyArg>,
    /// Base point: a threshold radius (lambda = mu = 0) or the given --r/--lambda/--mu [default: point].
    #[arg(long, value_enum)]
    pub at: Option<Anchor>,
    #[arg(long)]
    pub r: Option<f64>,
    /// [default: 0]
    #[arg(long, allow_hyphen_values = true)]
    pub lambda: Option<f64>,
    /// [default: 0]
    #[arg(long, allow_hyphen_values = true)]
    pub mu: Option<f64>,
    /// Critical mode; 1 at the attractive threshold, detected otherwise.
    #[arg(long)]
    pub ell: Option<i64>,
    /// Curve direction dr,dlambda,dmu for the mixed family.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub direction: Option<Vec<f64>>,
    /// Trade-off parameter of the t-family [default: 0].
    #[arg(long, allow_hyphen_values = true)]
    pub t: Option<f64>,
    /// Curve offset for the branch amplitude estimate.
    #[arg(long, allow_hyphen_values = true)]
    pub s0: Option<f64>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct BranchArgs {
    /// Twist number q >= 1.
    #[arg(long)]
    pub q: Option<u32>,
    /// Threshold the branch bifurcates from [default: attractive-threshold].
    #[arg(long, value_enum)]
    pub at: Option<Anchor>,
    /// Critical mode; 1 at the attractive threshold, detected otherwise.
    #[arg(long)]
    pub ell: Option<i64>,
    /// Offset from the threshold along r.
    #[arg(long, allow_hyphen_values = true)]
    pub s0: Option<f64>,
    /// Ring size (also the profile grid) [default: 1000].
    #[arg(long)]
    pub m: Option<usize>,
    /// Refine the first-order profile by Newton on the ring at threshold + s0.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub refine: Option<bool>,
    /// Comma-separated offsets for the error-scaling sweep.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub scaling: Option<Vec<f64>>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct RingArgs {
    /// Ring size M >= 4 [default: 1000].
    #[arg(long)]
    pub m: Option<usize>,
    /// Twist number of the reference state [default: 1].
    #[arg(long)]
    pub q: Option<u32>,
    /// Coupling range; required unless --at names a threshold.
    #[arg(long)]
    pub r: Option<f64>,
    /// Radius anchor: the finite-ring threshold plus --s, or --r [default: point].
    #[arg(long, value_enum)]
    pub at: Option<Anchor>,
    /// Offset from the finite-ring threshold [default: 0].
    #[arg(long, allow_hyphen_values = true)]
    pub s: Option<f64>,
    /// [default: 0]
    #[arg(long, allow_hyphen_values = true)]
    pub lambda: Option<f64>,
    /// [default: 0]
    #[arg(long, allow_hyphen_values = true)]
    pub mu: Option<f64>,
    /// [default: attractive]
    #[arg(long, value_enum)]
    pub sign: Option<SignArg>,
    /// Interaction orders [default: pairwise, plus triplet/quadruplet when lambda/mu are nonzero].
    #[arg(long, value_enum, value_delimiter = ',')]
    pub orders: Option<Vec<OrderArg>>,
    /// Drop the fractional boundary weight.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub integer_weights: Option<bool>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct SimulateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub ring: RingArgs,
    /// Uniform perturbation amplitude of the initial twisted state [default: 0.01].
    #[arg(long)]
    pub amplitude: Option<f64>,
    /// [default: 1000]
    #[arg(long)]
    pub t_end: Option<f64>,
    /// Local error tolerance [default: 1e-9].
    #[arg(long)]
    pub tol: Option<f64>,
    /// Record the state every this many time units.
    #[arg(long)]
    pub sample_interval: Option<f64>,
    /// Newton-polish the final state.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub polish: Option<bool>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct EquilibriumArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub ring: RingArgs,
    /// Starting point [default: twisted].
    #[arg(long, value_enum)]
    pub init: Option<InitArg>,
    /// Branch critical mode for z1/z2 starts [default: 1 attractive, detected repulsive].
    #[arg(long)]
    pub ell: Option<i64>,
    /// Perturbation amplitude for the perturbed start [default: 0.01].
    #[arg(long)]
    pub amplitude: Option<f64>,
    /// [default: 50]
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Residual tolerance [default: 1e-12].
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct StabilityMapArgs {
    /// Twist number q >= 1.
    #[arg(long)]
    pub q: Option<u32>,
    /// r axis as start:stop:n.
    #[arg(long)]
    pub r: Option<String>,
    /// lambda axis as start:stop:n.
    #[arg(long, allow_hyphen_values = true)]
    pub lambda: Option<String>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct IotaArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub from: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub to: Option<f64>,
    /// Number of intervals [default: 100].
    #[arg(long)]
    pub steps: Option<usize>,
}
