//! Characterize a LIF neuron, train the predictors, and run 1000 neurons
//! through the engine next to the transient simulator.

use evsurrogate::dataset::{build_dataset, characterize_events, run_characterization, CircuitSpec, Generation};
use evsurrogate::engine::{characterization_schedule, run_sequence, EngineState};
use evsurrogate::models::{train_all, Family, TrainConfig};
use evsurrogate::oracle::trapezoid;
use evsurrogate::par::Strategy;

fn main() -> evsurrogate::Result<()> {
    let mut spec = CircuitSpec::lif_neuron();
    spec.output_change_epsilon = spec.spike_threshold();
    let g = Generation { n_runs: 200, n_steps: 100, alpha: 0.8, seed: 1 };
    let ds = build_dataset(&spec, characterize_events(&spec, &g, Strategy::Parallel)?, 0)?;
    let cfg = TrainConfig { families: vec![Family::Linear, Family::Gbt], ..Default::default() };
    let trained = train_all(&ds, &cfg, Strategy::Parallel)?;

    let layer = Generation { n_runs: 1000, seed: 2, ..g };
    let tbs: Vec<_> = (0..layer.n_runs as u64).map(|i| layer.testbench(&spec, i)).collect::<evsurrogate::Result<_>>()?;
    let (params, schedule) = characterization_schedule(&spec, &tbs)?;
    let mut engine = EngineState::new(&spec, params)?;
    let result = run_sequence(&mut engine, &schedule, &trained.bundle)?;

    let truth: f64 = run_characterization(&spec, &layer, Strategy::Parallel)?
        .iter()
        .map(|(_, tr)| trapezoid(&tr.power, tr.dt))
        .sum();
    println!("engine {:.4e} J, transient {:.4e} J", result.total_energy, truth);
    Ok(())
}
