//! Command-line surface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use owc_core::allocate::Objective;
use owc_core::linkbudget::{AmbientPolicy, DEFAULT_KAPPA};
use owc_core::metrics::BandwidthConvention;
use owc_core::raytrace::Resolution;

#[derive(Parser, Debug)]
#[command(name = "owc", version, about = "Indoor optical wireless channel simulator and WDMA allocator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Trace every (user, branch, AP) link and write channel.csv.
    Simulate(CommonArgs),
    /// Assign (AP, wavelength) channels and write allocation.csv.
    Allocate(CommonArgs),
    /// Write per-user figure tables from a simulate + allocate run directory.
    Report(ReportArgs),
    /// Check the qualitative SINR claims on the built-in layouts.
    Calibrate(CalibrateArgs),
}

#[derive(Args, Debug, Clone)]
pub struct CommonArgs {
    /// Built-in layout name or path to a scenario JSON file.
    #[arg(long)]
    pub scenario: String,
    /// Element-size preset; defaults to the scenario's own element sizes.
    #[arg(long, value_enum)]
    pub resolution: Option<ResolutionArg>,
    /// Highest reflection order.
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(0..=2))]
    pub bounces: u8,
    /// Overrides the scenario's objective.
    #[arg(long, value_enum)]
    pub objective: Option<ObjectiveArg>,
    #[arg(long, value_enum, default_value_t = SolverArg::Exact)]
    pub solver: SolverArg,
    #[arg(long, default_value = "owc-out")]
    pub out: PathBuf,
    #[command(flatten)]
    pub cache: CacheArgs,
    #[arg(long, value_enum, default_value_t = BwConventionArg::Optical)]
    pub bw_convention: BwConventionArg,
    /// Supported bit/s per Hz of usable bandwidth.
    #[arg(long, default_value_t = DEFAULT_KAPPA, allow_negative_numbers = true)]
    pub kappa: f64,
    /// Which non-signal emissions drive shot noise.
    #[arg(long, value_enum, default_value_t = AmbientArg::All)]
    pub ambient: AmbientArg,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    pub threads: Option<usize>,
}

impl CommonArgs {
    /// Defaults for `scenario`, writing to `out`.
    pub fn new(scenario: impl Into<String>, out: impl Into<PathBuf>) -> Self {
        Self {
            scenario: scenario.into(),
            resolution: None,
            bounces: 2,
            objective: None,
            solver: SolverArg::Exact,
            out: out.into(),
            cache: CacheArgs::default(),
            bw_convention: BwConventionArg::Optical,
            kappa: DEFAULT_KAPPA,
            ambient: AmbientArg::All,
            threads: None,
        }
    }
}

#[derive(Args, Debug, Clone, Default)]
pub struct CacheArgs {
    /// Channel cache directory [default: .owc-cache].
    #[arg(long, env = "OWC_CACHE_DIR")]
    pub cache_dir: Option<PathBuf>,
    /// Always trace; neither read nor write the cache.
    #[arg(long)]
    pub no_cache: bool,
}

#[derive(Args, Debug, Clone)]
pub struct ReportArgs {
    /// Run directory holding channel.csv and allocation.csv.
    #[arg(long, default_value = "owc-out")]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct CalibrateArgs {
    #[arg(long, value_enum)]
    pub resolution: Option<ResolutionArg>,
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(0..=2))]
    pub bounces: u8,
    #[arg(long, default_value = "owc-out")]
    pub out: PathBuf,
    #[command(flatten)]
    pub cache: CacheArgs,
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ResolutionArg {
    Paper,
    Desk,
}

impl From<ResolutionArg> for Resolution {
    fn from(r: ResolutionArg) -> Self {
        match r {
            ResolutionArg::Paper => Resolution::Paper,
            ResolutionArg::Desk => Resolution::Desk,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ObjectiveArg {
    Db,
    Linear,
}

impl From<ObjectiveArg> for Objective {
    fn from(o: ObjectiveArg) -> Self {
        match o {
            ObjectiveArg::Db => Objective::DbSum,
            ObjectiveArg::Linear => Objective::LinearSum,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverArg {
    Exact,
    Exhaustive,
    Greedy,
}

impl SolverArg {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Exact => "exact",
            Self::Exhaustive => "exhaustive",
            Self::Greedy => "greedy",
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum BwConventionArg {
    Optical,
    Electrical,
}

impl From<BwConventionArg> for BandwidthConvention {
    fn from(c: BwConventionArg) -> Self {
        match c {
            BwConventionArg::Optical => BandwidthConvention::Optical,
            BwConventionArg::Electrical => BandwidthConvention::Electrical,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum AmbientArg {
    All,
    ExcludeServing,
}

impl From<AmbientArg> for AmbientPolicy {
    fn from(a: AmbientArg) -> Self {
        match a {
            AmbientArg::All => AmbientPolicy::AllEmissions,
            AmbientArg::ExcludeServing => AmbientPolicy::ExcludeServingUnit,
        }
    }
}
