//! Shared inputs for the benchmarks.

use opachain_core::calibration::{synthesize_sweep, SweepPoint};
use opachain_core::lockloop::LockLoopConfig;
use opachain_core::spectrum::spectrum;
use opachain_core::{DispersionModel, QuadLevels, ScenarioConfig, SpectrumTrace};

pub struct Inputs {
    pub levels: QuadLevels,
    pub model: DispersionModel,
    pub grid: Vec<f64>,
    pub trace: SpectrumTrace,
    pub sweep: Vec<SweepPoint>,
    pub lock: LockLoopConfig,
    pub seed: u64,
}

impl Inputs {
    pub fn replica() -> Self {
        let cfg = ScenarioConfig::paper_replica();
        let levels = cfg.require_levels().expect("replica levels");
        let model = cfg.require_dispersion().expect("replica dispersion");
        let grid = cfg.grid.expect("replica grid").wavelengths().expect("grid");
        let trace = spectrum(&model, &levels, &grid).expect("spectrum");
        let sweep = synthesize_sweep(20.1, 0.487, &[0.025, 0.05, 0.1, 0.15, 0.2]).expect("sweep");
        let lock = cfg
            .lock
            .expect("replica lock")
            .to_config(&levels)
            .expect("lock config");
        Inputs {
            levels,
            model,
            grid,
            trace,
            sweep,
            lock,
            seed: cfg.seed.unwrap_or(0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replica_inputs_build() {
        let i = Inputs::replica();
        assert_eq!(i.grid.len(), 901);
        assert_eq!(i.trace.len(), i.grid.len());
        assert_eq!(i.sweep.len(), 5);
    }
}
