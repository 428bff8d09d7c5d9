//! Shared fixtures for the kernel benchmarks.

use hocov::covariance::{build_covariance, HigherOrderCovariance};
use hocov::dynamics::{build_hamiltonian, propagate, InteractionSpec};
use hocov::fock::{ModeLayout, QuantumState, TruncatedOperator};
use hocov::sweep::SweepConfig;

pub struct Fixture {
    pub config: SweepConfig,
    pub hamiltonian: TruncatedOperator,
    pub initial: QuantumState,
    /// Initial state propagated to `xi = 0.4`.
    pub evolved: QuantumState,
}

impl Fixture {
    pub fn new(k: usize, l: usize, alpha_p: f64, dims: [usize; 3]) -> hocov::Result<Self> {
        let layout = ModeLayout::three_mode(dims[0], dims[1], dims[2])?;
        let config = SweepConfig::new(k, l, alpha_p, layout.clone());
        let hamiltonian = build_hamiltonian(&InteractionSpec::new(k, l, layout))?;
        let initial = config.initial_state()?;
        let t = config.evolution_config().time_of(0.4);
        let evolved = propagate(&initial, &hamiltonian, t, config.tolerance)?;
        Ok(Self { config, hamiltonian, initial, evolved })
    }

    /// Small `k = 1, l = 2` problem that still exercises every kernel.
    pub fn three_mode_small() -> Self {
        Self::new(1, 2, 2.0, [16, 20, 39]).expect("fixture dims are valid")
    }

    pub fn covariance(&self, n: usize) -> HigherOrderCovariance {
        build_covariance(&self.evolved, n, self.config.k, self.config.l).expect("fixture covariance")
    }
}
