use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "opachain",
    version,
    about = "Squeezed-light measurement chain modelling"
)]
pub struct Cli {
    /// Scenario file (`section.key = value` lines).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Directory for written artifacts. Overrides `run.output_dir`.
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,

    /// RNG seed. Overrides OPACHAIN_SEED and `run.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the rippled spectrum for the scenario's levels and dispersion.
    SimulateSpectrum(SimulateSpectrum),
    /// Estimate |D| from the ripples of a trace file.
    EstimateDispersion(EstimateDispersion),
    /// Length of compensating fiber for a link.
    DesignDcf(DesignDcf),
    /// Band over which the phase stays near its value at the lock point.
    Band(Band),
    /// Correct measured levels for finite OPA gain, or predict the bias.
    CorrectSqueezing(CorrectSqueezing),
    /// Phase deviation equivalent to a finite measuring gain.
    ThetaEff(ThetaEff),
    /// Smallest gain keeping the squeezing bias under a tolerance.
    RequiredGain(RequiredGain),
    /// Fit pump coefficient and loss to a pump sweep.
    FitCalibration(FitCalibration),
    /// Multiply a loss chain, optionally inferring one stage.
    Chain(Chain),
    /// Run the integral phase lock.
    SimulateLock(SimulateLock),
    /// Reproduce the reference numbers and print a pass/fail table.
    ReplicatePaper(ReplicatePaper),
}

#[derive(Debug, Clone, Default, Args)]
pub struct LevelArgs {
    /// Squeezed level R-, dB.
    #[arg(long, allow_hyphen_values = true, requires = "r_plus_db")]
    pub r_minus_db: Option<f64>,
    /// Anti-squeezed level R+, dB.
    #[arg(long, allow_hyphen_values = true, requires = "r_minus_db")]
    pub r_plus_db: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GainArgs {
    /// Measuring OPA power gain, linear.
    #[arg(long, conflicts_with = "gain_db")]
    pub gain: Option<f64>,
    /// Measuring OPA power gain, dB.
    #[arg(long)]
    pub gain_db: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct DispersionArgs {
    /// Net second-order dispersion, ps/nm.
    #[arg(long, allow_hyphen_values = true)]
    pub d: Option<f64>,
    /// Center frequency, THz.
    #[arg(long)]
    pub f0: Option<f64>,
    /// Phase offset at the lock point, rad.
    #[arg(long, allow_hyphen_values = true)]
    pub phi0: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GridArgs {
    #[arg(long)]
    pub start_nm: Option<f64>,
    #[arg(long)]
    pub stop_nm: Option<f64>,
    #[arg(long)]
    pub step_nm: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum)]
pub enum UnitArg {
    #[default]
    Ratio,
    Db,
}

#[derive(Debug, Args)]
pub struct SimulateSpectrum {
    #[command(flatten)]
    pub levels: LevelArgs,
    #[command(flatten)]
    pub dispersion: DispersionArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long, value_enum, default_value_t)]
    pub unit: UnitArg,
    /// Output file name inside the output directory.
    #[arg(long, default_value = "spectrum.csv")]
    pub out: String,
    #[arg(long)]
    pub label: Option<String>,
}

#[derive(Debug, Args)]
pub struct EstimateDispersion {
    /// Trace CSV to analyse.
    #[arg(long)]
    pub input: PathBuf,
    /// Center frequency, THz. Defaults to the scenario's, else 194.
    #[arg(long)]
    pub f0: Option<f64>,
    #[arg(long, default_value_t = 0.1)]
    pub smoothing_nm: f64,
    /// Minimum swing for an extremum, as a fraction of the trace's range.
    #[arg(long, default_value_t = 0.1)]
    pub min_prominence: f64,
}

#[derive(Debug, Args)]
pub struct DesignDcf {
    /// Fiber segment as LENGTH_M:PS_PER_NM_PER_M; repeatable.
    #[arg(long = "segment", value_parser = parse_segment, allow_hyphen_values = true)]
    pub segments: Vec<(f64, f64)>,
    /// Net link dispersion, ps/nm, instead of segments.
    #[arg(long, conflicts_with = "segments", allow_hyphen_values = true)]
    pub net: Option<f64>,
    /// Dispersion of the compensating fiber, ps/nm/m. The default is
    /// back-solved from 0.70 m taking 0.033 down to 0.0045 ps/nm.
    #[arg(long, default_value_t = -0.0407, allow_hyphen_values = true)]
    pub dcf_rate: f64,
    /// Residual dispersion to leave, ps/nm.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub target: f64,
    /// Insertion loss of the compensating fiber, dB, applied to the levels.
    #[arg(long)]
    pub insertion_loss_db: Option<f64>,
    #[command(flatten)]
    pub levels: LevelArgs,
}

#[derive(Debug, Args)]
pub struct Band {
    #[command(flatten)]
    pub levels: LevelArgs,
    #[command(flatten)]
    pub dispersion: DispersionArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Lock wavelength, nm.
    #[arg(long)]
    pub lock_nm: Option<f64>,
    /// Allowed phase deviation, rad. Defaults to the phase costing
    /// `degradation-db` of squeezing.
    #[arg(long)]
    pub max_dev: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub degradation_db: f64,
}

#[derive(Debug, Args)]
pub struct CorrectSqueezing {
    #[command(flatten)]
    pub gain: GainArgs,
    /// Measured squeezed level, dB. Without measured levels the scenario
    /// levels are treated as true and the measurement is predicted.
    #[arg(long, allow_hyphen_values = true, requires = "measured_plus_db")]
    pub measured_minus_db: Option<f64>,
    #[arg(long, allow_hyphen_values = true, requires = "measured_minus_db")]
    pub measured_plus_db: Option<f64>,
    #[command(flatten)]
    pub levels: LevelArgs,
}

#[derive(Debug, Args)]
pub struct ThetaEff {
    #[command(flatten)]
    pub gain: GainArgs,
}

#[derive(Debug, Args)]
pub struct RequiredGain {
    #[command(flatten)]
    pub levels: LevelArgs,
    /// Largest acceptable squeezing bias, dB.
    #[arg(long, default_value_t = 0.05)]
    pub tolerance_db: f64,
    /// Gain step, dB.
    #[arg(long, default_value_t = 1.0)]
    pub step_db: f64,
    /// Search the exact threshold instead of gain steps.
    #[arg(long)]
    pub continuous: bool,
}

#[derive(Debug, Args)]
pub struct FitCalibration {
    /// Sweep CSV (`pump_w,r_minus_db,r_plus_db`). Defaults to `fit.sweep`.
    #[arg(long)]
    pub sweep: Option<PathBuf>,
    #[arg(long, default_value_t = 500)]
    pub max_iterations: usize,
}

#[derive(Debug, Args)]
pub struct Chain {
    /// Element as LABEL:TRANSMISSION; repeatable, applied in order.
    #[arg(long = "element", value_parser = parse_element, required = true)]
    pub elements: Vec<(String, f64)>,
    /// Measured total efficiency; the remaining stage is inferred.
    #[arg(long)]
    pub total: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SimulateLock {
    #[command(flatten)]
    pub levels: LevelArgs,
    #[command(flatten)]
    pub dispersion: DispersionArgs,
    /// PD3 target, ratio. Defaults to mid-slope.
    #[arg(long)]
    pub target: Option<f64>,
    #[arg(long)]
    pub lock_nm: Option<f64>,
    #[arg(long)]
    pub ki: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub noise_rms: Option<f64>,
    #[arg(long)]
    pub drift_rate: Option<f64>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Output file name inside the output directory.
    #[arg(long, default_value = "lock_trace.csv")]
    pub out: String,
}

#[derive(Debug, Args)]
pub struct ReplicatePaper {
    /// Exit with status 1 if any check fails.
    #[arg(long)]
    pub strict: bool,
}

fn parse_segment(s: &str) -> Result<(f64, f64), String> {
    let (len, rate) = s
        .split_once(':')
        .ok_or_else(|| format!("expected LENGTH:RATE, got `{s}`"))?;
    let num = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}"));
    Ok((num(len)?, num(rate)?))
}

fn parse_element(s: &str) -> Result<(String, f64), String> {
    let (label, t) = s
        .rsplit_once(':')
        .ok_or_else(|| format!("expected LABEL:TRANSMISSION, got `{s}`"))?;
    let t = t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}"))?;
    Ok((label.trim().to_string(), t))
}
