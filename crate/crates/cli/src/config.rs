//! Run configuration. Every section has defaults; unknown keys are errors.

use std::path::PathBuf;

use evsurrogate::dataset::{CircuitKind, CircuitSpec, Generation};
use evsurrogate::models::TrainConfig;
use evsurrogate::netsim::{AnnConfig, SnnConfig, StateMode, CLASSES, PIXELS};
use evsurrogate::par::Strategy;
use evsurrogate::rng::derive;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Master seed; every section seed is derived from it.
    pub seed: u64,
    pub circuit: CircuitSection,
    pub generation: GenerationSection,
    pub training: TrainConfig,
    pub simulation: SimulationSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CircuitSection {
    pub kind: CircuitKind,
    pub substeps_per_clock: Option<usize>,
    pub output_change_epsilon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerationSection {
    pub n_runs: usize,
    pub n_steps: usize,
    pub alpha: f64,
    /// Worker threads; 0 uses every core.
    pub parallelism: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorSource {
    /// The trained bundle.
    Bundle,
    /// The transient simulator answering every query.
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSection {
    pub predictors: PredictorSource,
    /// Held-out digits used by `simulate`, taken from the end of the corpus.
    pub n_test: usize,
    /// Also run every image through the transient simulator.
    pub oracle_baseline: bool,
    pub snn_mode: StateMode,
    pub ann: AnnConfig,
    pub snn: SnnConfig,
    pub bench_sizes: Vec<usize>,
    pub bench_steps: usize,
    pub study_neurons: usize,
    pub study_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

/// TOML integers are signed, so section seeds keep 63 bits.
fn sub_seed(master: u64, tag: &str) -> u64 {
    derive(master, tag, 0) >> 1
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            circuit: CircuitSection::default(),
            generation: GenerationSection::default(),
            training: TrainConfig::default(),
            simulation: SimulationSection::default(),
            output: OutputSection::default(),
        }
    }
}

impl Default for CircuitSection {
    fn default() -> Self {
        CircuitSection { kind: CircuitKind::LifNeuron, substeps_per_clock: None, output_change_epsilon: None }
    }
}

impl Default for GenerationSection {
    fn default() -> Self {
        GenerationSection { n_runs: 400, n_steps: 100, alpha: 0.5, parallelism: 0 }
    }
}

impl Default for SimulationSection {
    fn default() -> Self {
        SimulationSection {
            predictors: PredictorSource::Bundle,
            n_test: 300,
            oracle_baseline: true,
            snn_mode: StateMode::PredictedState,
            ann: AnnConfig::default(),
            snn: SnnConfig::default(),
            bench_sizes: vec![10, 100, 1000],
            bench_steps: 100,
            study_neurons: 500,
            study_steps: 100,
        }
    }
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: PathBuf::from("out") }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    /// Apply the master seed to every section.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.training.seed = sub_seed(seed, "training");
        self.simulation.ann.seed = sub_seed(seed, "ann");
        self.simulation.snn.seed = sub_seed(seed, "snn");
        self
    }

    /// Named sub-seed of the master seed.
    pub fn seed_for(&self, tag: &str, index: u64) -> u64 {
        derive(self.seed, tag, index)
    }

    pub fn spec(&self) -> CircuitSpec {
        let mut s = CircuitSpec::preset(self.circuit.kind);
        if let Some(n) = self.circuit.substeps_per_clock {
            s.substeps_per_clock = n;
        }
        if let Some(e) = self.circuit.output_change_epsilon {
            s.output_change_epsilon = e;
        }
        s
    }

    pub fn generation(&self) -> Generation {
        let g = &self.generation;
        Generation { n_runs: g.n_runs, n_steps: g.n_steps, alpha: g.alpha, seed: self.seed_for("generation", 0) }
    }

    pub fn strategy(&self) -> Strategy {
        match self.generation.parallelism {
            0 => Strategy::Parallel,
            1 => Strategy::Sequential,
            n => Strategy::Threads(n),
        }
    }

    /// Check every precondition the commands rely on.
    pub fn validate(&self) -> Result<(), String> {
        if self.seed > i64::MAX as u64 {
            return Err("seed must be below 2^63".into());
        }
        self.spec().validate().map_err(|e| e.to_string())?;
        let g = &self.generation;
        if g.n_runs == 0 || g.n_steps == 0 {
            return Err("generation.n_runs and generation.n_steps must be >= 1".into());
        }
        if !(g.alpha > 0.0 && g.alpha <= 1.0) {
            return Err(format!("generation.alpha must be in (0, 1], got {}", g.alpha));
        }
        let t = &self.training;
        if t.families.is_empty() {
            return Err("training.families is empty".into());
        }
        if [t.gbt.depth.len(), t.gbt.trees.len(), t.gbt.learning_rate.len(), t.gbt.l2.len(), t.mlp.learning_rate.len(), t.mlp.l2.len()]
            .contains(&0)
        {
            return Err("every training grid axis needs at least one value".into());
        }
        if t.mlp.base.hidden.is_empty() || t.mlp.base.batch == 0 || t.mlp.base.max_epochs == 0 {
            return Err("training.mlp.base needs hidden layers, batch >= 1 and max_epochs >= 1".into());
        }
        let s = &self.simulation;
        if s.n_test == 0 {
            return Err("simulation.n_test must be >= 1".into());
        }
        for (name, dims) in [("ann", &s.ann.dims), ("snn", &s.snn.dims)] {
            if dims.len() < 2 || dims[0] != PIXELS || dims[dims.len() - 1] != CLASSES || dims.contains(&0) {
                return Err(format!("simulation.{name}.dims must run from {PIXELS} to {CLASSES} with no empty layer"));
            }
        }
        for b in [s.ann.adc_bits, s.ann.dac_bits].into_iter().flatten() {
            if !(1..=52).contains(&b) {
                return Err("simulation.ann converter bits must be in 1..=52".into());
            }
        }
        if s.snn.timesteps == 0 || !(0.0..=1.0).contains(&s.snn.rate_gain) {
            return Err("simulation.snn needs timesteps >= 1 and rate_gain in [0, 1]".into());
        }
        if s.bench_sizes.is_empty() || s.bench_sizes[0] == 0 || s.bench_sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err("simulation.bench_sizes must be positive and strictly ascending".into());
        }
        if s.bench_steps == 0 || s.study_neurons == 0 || s.study_steps == 0 {
            return Err("simulation bench_steps, study_neurons and study_steps must be >= 1".into());
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}
