//! Squeezed-light chain modelling: quadrature levels, finite-gain OPA
//! measurement, fiber dispersion, phase locking and loss calibration.

pub mod calibration;
pub mod dispersion;
pub mod error;
pub mod lockloop;
pub mod measurement;
pub mod replicate;
pub mod report;
pub mod scenario;
pub mod sideband;
pub mod spectrum;
pub mod trace;

pub use calibration::{FitOptions, FitResult, LossChain, LossElement, SweepPoint};
pub use dispersion::{DispersionModel, FiberSegment, FrequencyBand};
pub use error::{Error, Result};
pub use lockloop::{LockLoopConfig, LockResult, LockStatus};
pub use measurement::{GainResolution, MeasuredLevels, OpaGain};
pub use report::RunReport;
pub use scenario::{GridSpec, LockSection, ScenarioConfig};
pub use sideband::{PhaseAngle, QuadLevels, SqueezerParams};
pub use spectrum::{DispersionEstimate, ExtremumOptions};
pub use trace::{SpectrumTrace, TraceMeta, TracePoint, Unit};
