use rand::Rng as _;

use super::pwl::PwlSet;
use super::spec::{CircuitKind, CircuitSpec, Domain};
use crate::error::invalid;
use crate::rng;
use crate::Result;

/// One randomized characterization run.
#[derive(Debug, Clone, PartialEq)]
pub struct Testbench {
    pub run_id: u64,
    pub params: Vec<f64>,
    pub pwl: PwlSet,
    pub seed: u64,
    pub duration: f64,
    pub clock_period: f64,
}

impl Testbench {
    pub fn n_steps(&self) -> usize {
        (self.duration / self.clock_period).round() as usize
    }

    /// Per-clock input vectors.
    pub fn steps(&self) -> Result<Vec<Vec<f64>>> {
        self.pwl.clock_values(self.duration, self.clock_period)
    }
}

pub fn sample_params(spec: &CircuitSpec, rng: &mut rng::Rng) -> Vec<f64> {
    spec.param_schema
        .iter()
        .map(|p| match p.domain {
            Domain::Ternary => rng.gen_range(-1i32..=1) as f64,
            Domain::Interval { low, high } if low == high => low,
            Domain::Interval { low, high } => rng.gen_range(low..=high),
        })
        .collect()
}

/// Draw a random testbench. Each clock is active with probability `alpha`
/// (the first always is); active clocks draw fresh inputs, static clocks
/// hold the crossbar inputs or deliver no spikes to the neuron.
pub fn generate_testbench(spec: &CircuitSpec, run_id: u64, n_steps: usize, alpha: f64, seed: u64) -> Result<Testbench> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(invalid(format!("alpha must be in (0, 1], got {alpha}")));
    }
    if n_steps < 2 {
        return Err(invalid("n_steps must be >= 2"));
    }
    spec.validate()?;
    let mut r = rng::rng(seed);
    let params = sample_params(spec, &mut r);
    let [lo, hi] = spec.input_range;
    let width = spec.x_width();
    let mut steps: Vec<Vec<f64>> = Vec::with_capacity(n_steps);
    let mut prev = vec![0.0; width];
    for k in 0..n_steps {
        let active = k == 0 || alpha >= 1.0 || r.gen_bool(alpha);
        let x = match (spec.kind, active) {
            (CircuitKind::CrossbarRow, true) => (0..width).map(|_| r.gen_range(lo..=hi)).collect(),
            (CircuitKind::CrossbarRow, false) => prev.clone(),
            (CircuitKind::LifNeuron, true) => {
                let n = r.gen_range(0..=spec.max_spikes_per_step);
                let [wlo, whi] = spec.synapse_weight_range;
                let sum: f64 = (0..n).map(|_| r.gen_range(wlo..=whi) * r.gen_range(lo..=hi)).sum();
                vec![sum, n as f64]
            }
            (CircuitKind::LifNeuron, false) => vec![0.0, 0.0],
        };
        prev.clone_from(&x);
        steps.push(x);
    }
    Ok(Testbench {
        run_id,
        params,
        pwl: PwlSet::from_clock_values(&steps, spec.clock_period),
        seed,
        duration: n_steps as f64 * spec.clock_period,
        clock_period: spec.clock_period,
    })
}
