//! Rate-coded spiking network of LIF neurons.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::ann::argmax;
use super::digits::Digit;
use crate::dataset::{CircuitKind, CircuitSpec};
use crate::engine::{EngineState, PredictorSet, SequenceResult};
use crate::oracle::{trapezoid, Boundary, Circuit, OutputMode};
use crate::par::Strategy;
use crate::{error::invalid, rng, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SnnConfig {
    pub dims: Vec<usize>,
    pub timesteps: usize,
    /// Knob voltages shared by every neuron, in schema order.
    pub knobs: Vec<f64>,
    /// Amplitude of a forwarded spike (V).
    pub spike_amplitude: f64,
    /// Pixel intensity 1 fires with this probability per step.
    pub rate_gain: f64,
    pub epochs: usize,
    pub batch: usize,
    pub learning_rate: f64,
    pub logit_scale: f64,
    pub seed: u64,
}

impl Default for SnnConfig {
    fn default() -> Self {
        SnnConfig {
            dims: vec![64, 32, 10],
            timesteps: 100,
            knobs: vec![0.58, 0.5, 0.5, 0.5],
            spike_amplitude: 1.0,
            rate_gain: 1.0,
            epochs: 40,
            batch: 32,
            learning_rate: 0.01,
            logit_scale: 4.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpikingNet {
    pub spec: CircuitSpec,
    pub dims: Vec<usize>,
    /// Per layer, row-major `[n_out x n_in]`, each in the synapse range.
    pub weights: Vec<Vec<f64>>,
    /// Per neuron, all layers concatenated.
    pub params: Vec<Vec<f64>>,
    pub timesteps: usize,
    pub spike_amplitude: f64,
    pub rate_gain: f64,
}

/// How the surrogate network carries state between steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateMode {
    /// Predicted state is fed back.
    PredictedState,
    /// The true state of the same neuron under the same inputs replaces
    /// each prediction.
    OracleState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnnOutput {
    pub counts: Vec<usize>,
    pub class: usize,
    pub energy: f64,
    /// Spikes per layer per step, `[layer][step][neuron]`.
    pub spikes: Vec<Vec<Vec<bool>>>,
    /// Engine results; empty for the transient reference.
    pub sequence: SequenceResult,
}

/// Independent per-pixel Bernoulli spike trains, `[step][pixel]`.
pub fn poisson_encode(intensities: &[f64], n_steps: usize, seed: u64) -> Result<Vec<Vec<bool>>> {
    if let Some(p) = intensities.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(invalid(format!("intensity {p} outside [0, 1]")));
    }
    let mut r = rng::rng(seed);
    Ok((0..n_steps).map(|_| intensities.iter().map(|&p| r.gen_bool(p)).collect()).collect())
}

impl SpikingNet {
    pub fn new(spec: &CircuitSpec, dims: Vec<usize>, weights: Vec<Vec<f64>>, cfg: &SnnConfig) -> Result<Self> {
        if spec.kind != CircuitKind::LifNeuron {
            return Err(invalid("a spiking network needs a LIF circuit"));
        }
        if dims.len() < 2 || weights.len() != dims.len() - 1 {
            return Err(invalid("need one weight matrix per layer"));
        }
        let [lo, hi] = spec.synapse_weight_range;
        for (l, w) in weights.iter().enumerate() {
            if w.len() != dims[l] * dims[l + 1] || w.iter().any(|v| !(lo..=hi).contains(v)) {
                return Err(invalid(format!("layer {l}: weights must be {}x{} in [{lo}, {hi}]", dims[l + 1], dims[l])));
            }
        }
        let [alo, ahi] = spec.input_range;
        if !(alo..=ahi).contains(&cfg.spike_amplitude) || !(0.0..=1.0).contains(&cfg.rate_gain) {
            return Err(invalid("spike amplitude outside the input range or rate gain outside [0, 1]"));
        }
        let n: usize = dims[1..].iter().sum();
        spec.instantiate(&cfg.knobs)?;
        Ok(SpikingNet {
            spec: spec.clone(),
            dims,
            weights,
            params: vec![cfg.knobs.clone(); n],
            timesteps: cfg.timesteps,
            spike_amplitude: cfg.spike_amplitude,
            rate_gain: cfg.rate_gain,
        })
    }

    pub fn n_neurons(&self) -> usize {
        self.params.len()
    }

    fn offset(&self, l: usize) -> usize {
        self.dims[1..=l].iter().sum::<usize>()
    }

    /// Encoder spikes for one image.
    pub fn encode(&self, pixels: &[f64], seed: u64) -> Result<Vec<Vec<bool>>> {
        let p: Vec<f64> = pixels.iter().map(|&v| v * self.rate_gain).collect();
        poisson_encode(&p, self.timesteps, seed)
    }

    /// Per-neuron input `(weighted amplitude sum, spike count)` of layer `l`
    /// from upstream spikes; `None` when no spike arrives. Counts saturate
    /// like the circuit's input stage.
    fn layer_inputs(&self, l: usize, upstream: &[bool]) -> Vec<Option<Vec<f64>>> {
        let n_in = self.dims[l];
        let fired: Vec<usize> = (0..n_in).filter(|&i| upstream[i]).collect();
        let count = fired.len().min(self.spec.max_spikes_per_step) as f64;
        let w = &self.weights[l];
        (0..self.dims[l + 1])
            .map(|j| {
                if fired.is_empty() {
                    return None;
                }
                let sum: f64 = fired.iter().map(|&i| w[j * n_in + i]).sum::<f64>() * self.spike_amplitude;
                Some(vec![sum, count])
            })
            .collect()
    }

    fn check_schedule(&self, schedule: &[Vec<bool>]) -> Result<()> {
        if schedule.len() != self.timesteps || schedule.iter().any(|s| s.len() != self.dims[0]) {
            return Err(invalid(format!("schedule must be {} steps of {} inputs", self.timesteps, self.dims[0])));
        }
        Ok(())
    }
}

/// One neuron advanced clock by clock with the transient simulator.
struct OracleNeuron {
    circuit: Circuit,
    at: Boundary,
    before: Vec<f64>,
}

impl OracleNeuron {
    fn new(circuit: Circuit) -> Self {
        OracleNeuron { at: circuit.rest(), circuit, before: vec![0.0; 2] }
    }

    /// Advance one clock; returns (peak output, energy).
    fn clock(&mut self, x: &[f64], spec: &CircuitSpec) -> (f64, f64) {
        let grid = spec.grid();
        let s = self.circuit.replay(self.at, &self.before, &[x], &grid);
        self.at = Boundary { output: s.output[s.len() - 1], state: s.state[s.len() - 1] };
        self.before = x.to_vec();
        debug_assert_eq!(self.circuit.output_mode(), OutputMode::Pulse);
        (s.output.iter().copied().fold(f64::NEG_INFINITY, f64::max), trapezoid(&s.power, grid.dt()))
    }
}

/// Surrogate simulation. Layer `l` sees the spikes layer `l-1` emitted one
/// clock earlier; each clock is one engine step over every neuron with an
/// incoming spike.
pub fn run_snn(net: &SpikingNet, schedule: &[Vec<bool>], predictors: &dyn PredictorSet, mode: StateMode) -> Result<SnnOutput> {
    net.check_schedule(schedule)?;
    let spec = &net.spec;
    let thr = spec.spike_threshold();
    let mut eng = EngineState::new(spec, net.params.clone())?.with_strategy(Strategy::Sequential);
    let mut oracle: Vec<OracleNeuron> = match mode {
        StateMode::PredictedState => Vec::new(),
        StateMode::OracleState => {
            net.params.iter().map(|p| spec.instantiate(p).map(OracleNeuron::new)).collect::<Result<_>>()?
        }
    };
    // true state at the start of each clock, filled as the oracle advances
    let mut truth: Vec<Vec<f64>> = vec![vec![0.0]; net.n_neurons()];
    let n_layers = net.dims.len() - 1;
    let mut spikes: Vec<Vec<Vec<bool>>> = vec![Vec::with_capacity(net.timesteps); n_layers];
    let mut out = SequenceResult { circuit_energy: vec![0.0; net.n_neurons()], ..Default::default() };
    let idle = [0.0, 0.0];
    for c in 0..net.timesteps {
        let mut ids = Vec::new();
        let mut xs = Vec::new();
        let mut layer_x: Vec<Vec<Option<Vec<f64>>>> = Vec::with_capacity(n_layers);
        for l in 0..n_layers {
            let upstream: Vec<bool> = if l == 0 {
                schedule[c].clone()
            } else if c == 0 {
                vec![false; net.dims[l]]
            } else {
                spikes[l - 1][c - 1].clone()
            };
            let inputs = net.layer_inputs(l, &upstream);
            for (j, x) in inputs.iter().enumerate() {
                if let Some(x) = x {
                    ids.push(net.offset(l) + j);
                    xs.push(x.clone());
                }
            }
            layer_x.push(inputs);
        }
        if mode == StateMode::OracleState {
            for l in 0..n_layers {
                for (j, x) in layer_x[l].iter().enumerate() {
                    let n = net.offset(l) + j;
                    oracle[n].clock(x.as_deref().unwrap_or(&idle), spec);
                    truth[n].push(oracle[n].at.state);
                }
            }
        }
        let r = match mode {
            StateMode::PredictedState => eng.step(c as u64, &ids, &xs, predictors)?,
            StateMode::OracleState => eng.step_observed(c as u64, &ids, &xs, predictors, &|n, k| truth[n][k as usize])?,
        };
        let mut fired = vec![false; net.n_neurons()];
        for (i, &n) in r.ids.iter().enumerate() {
            fired[n] = r.output[i] > thr;
            out.circuit_energy[n] += r.energy[i];
        }
        for (l, layer) in spikes.iter_mut().enumerate() {
            let o = net.offset(l);
            layer.push(fired[o..o + net.dims[l + 1]].to_vec());
        }
        out.steps.push(r);
    }
    let f = eng.flush(net.timesteps as u64, predictors)?;
    for (&n, &e) in f.ids.iter().zip(&f.energy) {
        out.circuit_energy[n] += e;
    }
    out.flush = f;
    out.total_energy = out.circuit_energy.iter().sum();
    out.negative_energy = eng.negative_energy();
    Ok(finish(net, spikes, out.total_energy, out))
}

fn finish(net: &SpikingNet, spikes: Vec<Vec<Vec<bool>>>, energy: f64, sequence: SequenceResult) -> SnnOutput {
    let last = spikes.last().expect("at least one layer");
    let classes = net.dims[net.dims.len() - 1];
    let counts: Vec<usize> = (0..classes).map(|k| last.iter().filter(|s| s[k]).count()).collect();
    let as_f: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    SnnOutput { class: argmax(&as_f), counts, energy, spikes, sequence }
}

/// Reference run of the same network by transient simulation of every
/// neuron, spikes decided from the simulated output.
pub fn run_snn_oracle(net: &SpikingNet, schedule: &[Vec<bool>]) -> Result<SnnOutput> {
    net.check_schedule(schedule)?;
    let spec = &net.spec;
    let thr = spec.spike_threshold();
    let mut neurons: Vec<OracleNeuron> =
        net.params.iter().map(|p| spec.instantiate(p).map(OracleNeuron::new)).collect::<Result<_>>()?;
    let n_layers = net.dims.len() - 1;
    let mut spikes: Vec<Vec<Vec<bool>>> = vec![Vec::with_capacity(net.timesteps); n_layers];
    let mut energy = 0.0;
    let idle = [0.0, 0.0];
    for c in 0..net.timesteps {
        for l in 0..n_layers {
            let upstream: Vec<bool> = if l == 0 {
                schedule[c].clone()
            } else if c == 0 {
                vec![false; net.dims[l]]
            } else {
                spikes[l - 1][c - 1].clone()
            };
            let inputs = net.layer_inputs(l, &upstream);
            let fired: Vec<bool> = inputs
                .iter()
                .enumerate()
                .map(|(j, x)| {
                    let (peak, e) = neurons[net.offset(l) + j].clock(x.as_deref().unwrap_or(&idle), spec);
                    energy += e;
                    peak > thr
                })
                .collect();
            spikes[l].push(fired);
        }
    }
    Ok(finish(net, spikes, energy, SequenceResult::default()))
}

/// Train the rate model the network approximates, then use its clipped
/// weights as synapses. A hidden neuron's firing probability is modelled as
/// `clamp(k * sum_i w_i p_i, 0, 1)`, with `k` the membrane voltage step per
/// unit of input over the threshold.
pub fn train_snn(spec: &CircuitSpec, train: &[Digit], cfg: &SnnConfig) -> Result<SpikingNet> {
    if cfg.dims.len() < 2 || train.iter().any(|d| d.pixels.len() != cfg.dims[0]) {
        return Err(invalid("dims do not match the training images"));
    }
    let circuit = spec.instantiate(&cfg.knobs)?;
    let Circuit::Lif(p) = &circuit else {
        return Err(invalid("a spiking network needs a LIF circuit"));
    };
    let c = &p.constants;
    let pulse = 0.5 * spec.clock_period / spec.max_spikes_per_step as f64;
    let k = c.synaptic_gain * pulse / c.membrane_capacitance * cfg.spike_amplitude / p.v_th;
    let [wlo, whi] = spec.synapse_weight_range;
    let mut r = rng::sub_rng(cfg.seed, "snn", 0);
    let n_layers = cfg.dims.len() - 1;
    let mut w: Vec<Vec<f64>> = (0..n_layers)
        .map(|l| {
            let s = 1.0 / (cfg.dims[l] as f64).sqrt();
            (0..cfg.dims[l] * cfg.dims[l + 1]).map(|_| r.gen_range(-s..s)).collect()
        })
        .collect();
    let mut m: Vec<Vec<f64>> = w.iter().map(|v| vec![0.0; v.len()]).collect();
    let mut v2: Vec<Vec<f64>> = m.clone();
    let mut t = 0;
    let mut order: Vec<usize> = (0..train.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut r);
        for batch in order.chunks(cfg.batch.max(1)) {
            let mut g: Vec<Vec<f64>> = w.iter().map(|v| vec![0.0; v.len()]).collect();
            for &i in batch {
                rate_backprop(&w, &cfg.dims, k, cfg, &train[i], &mut g);
            }
            t += 1;
            let (c1, c2) = (1.0 - 0.9f64.powi(t), 1.0 - 0.999f64.powi(t));
            for l in 0..n_layers {
                for q in 0..w[l].len() {
                    let gi = g[l][q] / batch.len() as f64;
                    m[l][q] = 0.9 * m[l][q] + 0.1 * gi;
                    v2[l][q] = 0.999 * v2[l][q] + 0.001 * gi * gi;
                    let step = cfg.learning_rate * (m[l][q] / c1) / ((v2[l][q] / c2).sqrt() + 1e-8);
                    w[l][q] = (w[l][q] - step).clamp(wlo, whi);
                }
            }
        }
    }
    SpikingNet::new(spec, cfg.dims.clone(), w, cfg)
}

fn rate_backprop(w: &[Vec<f64>], dims: &[usize], k: f64, cfg: &SnnConfig, d: &Digit, g: &mut [Vec<f64>]) {
    let n_layers = dims.len() - 1;
    let mut acts = vec![d.pixels.iter().map(|&p| p * cfg.rate_gain).collect::<Vec<f64>>()];
    let mut pre = Vec::new();
    for l in 0..n_layers {
        let (ni, no) = (dims[l], dims[l + 1]);
        let z: Vec<f64> = (0..no).map(|j| k * (0..ni).map(|i| w[l][j * ni + i] * acts[l][i]).sum::<f64>()).collect();
        let a: Vec<f64> = if l + 1 < n_layers { z.iter().map(|&v| v.clamp(0.0, 1.0)).collect() } else { z.clone() };
        pre.push(z);
        acts.push(a);
    }
    let scores = &acts[n_layers];
    let mx = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ex: Vec<f64> = scores.iter().map(|&s| (cfg.logit_scale * (s - mx)).exp()).collect();
    let tot: f64 = ex.iter().sum();
    let mut delta: Vec<f64> =
        ex.iter().enumerate().map(|(c, &v)| cfg.logit_scale * (v / tot - if c == d.label { 1.0 } else { 0.0 })).collect();
    for l in (0..n_layers).rev() {
        let (ni, no) = (dims[l], dims[l + 1]);
        if l + 1 < n_layers {
            for (dj, &z) in delta.iter_mut().zip(&pre[l]) {
                if !(0.0..1.0).contains(&z) {
                    *dj = 0.0;
                }
            }
        }
        let mut back = vec![0.0; ni];
        for j in 0..no {
            let dz = delta[j] * k;
            if dz == 0.0 {
                continue;
            }
            for i in 0..ni {
                g[l][j * ni + i] += dz * acts[l][i];
                back[i] += dz * w[l][j * ni + i];
            }
        }
        delta = back;
    }
}
