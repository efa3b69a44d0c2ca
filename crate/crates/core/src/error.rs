use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("correction is singular for gain {gain} (requires G > 1)")]
    SingularCorrection { gain: f64 },

    #[error("measurement inconsistent with any physical state: corrected r_minus = {r_minus}")]
    UnphysicalLevels { r_minus: f64 },

    #[error("no gain up to {max_gain} meets a tolerance of {tolerance_db} dB")]
    NoSolution { max_gain: f64, tolerance_db: f64 },

    #[error("{0}")]
    EmptyInput(&'static str),

    #[error("found {found} usable ripple extrema, at least 2 at distinct offsets are needed")]
    InsufficientRipples { found: usize },

    #[error(
        "DCF dispersion {dcf_rate} ps/nm/m cannot cancel a net {net} ps/nm towards {target} ps/nm"
    )]
    DcfDesign {
        dcf_rate: f64,
        net: f64,
        target: f64,
    },

    #[error("degenerate sweep: {0}")]
    DegenerateData(&'static str),

    #[error("fit did not converge after {iterations} iterations (cost {cost}, lambda {lambda})")]
    FitDiverged {
        iterations: usize,
        cost: f64,
        lambda: f64,
    },

    #[error("inconsistent efficiencies: total {total} exceeds upstream {upstream}")]
    InconsistentEfficiencies { total: f64, upstream: f64 },

    #[error("lock loop diverged at step {step}")]
    LockUnstable { step: usize },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{0}")]
    Validation(String),

    #[error("trace row {row}: {message}")]
    Trace { row: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_))
    }

    /// Short stable identifier used in machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::SingularCorrection { .. } => "singular_correction",
            Error::UnphysicalLevels { .. } => "unphysical_levels",
            Error::NoSolution { .. } => "no_solution",
            Error::EmptyInput(_) => "empty_input",
            Error::InsufficientRipples { .. } => "insufficient_ripples",
            Error::DcfDesign { .. } => "dcf_design",
            Error::DegenerateData(_) => "degenerate_data",
            Error::FitDiverged { .. } => "fit_diverged",
            Error::InconsistentEfficiencies { .. } => "inconsistent_efficiencies",
            Error::LockUnstable { .. } => "lock_unstable",
            Error::Parse { .. } => "parse",
            Error::Validation(_) => "validation",
            Error::Trace { .. } => "trace",
            Error::Io(_) => "io",
        }
    }
}

pub(crate) fn ensure(
    cond: bool,
    name: &'static str,
    value: f64,
    reason: &'static str,
) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            reason,
        })
    }
}
