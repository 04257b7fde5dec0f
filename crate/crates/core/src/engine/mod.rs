//! Batched, event-driven inference over many circuit instances.
//!
//! Time is counted in clocks. A circuit last updated at clock `t'` has been
//! accounted up to the end of that clock; a step at clock `c` first charges
//! the idle gap `t'+1 .. c-1` as one merged event, then predicts the step
//! itself. Circuits that are never stepped are charged lazily by [`EngineState::flush`].

mod log;
mod predictors;

pub use log::{write_step_log, LogRow, Path};
pub use predictors::{oracle_predictors, OraclePredictors, PredictorSet, Query};

use crate::dataset::{input_change_flags, CircuitKind, CircuitSpec, Testbench};
use crate::models::Predictor;
use crate::par::Strategy;
use crate::{Error, Result};

const IDLE_PREDICTORS: [Predictor; 2] = [Predictor::State, Predictor::StaticEnergy];

/// Per-circuit engine state.
#[derive(Debug, Clone)]
pub struct EngineState {
    spec: CircuitSpec,
    params: Vec<Vec<f64>>,
    /// Clock of the latest update; -1 before the first clock.
    last: Vec<i64>,
    state: Vec<f64>,
    /// Previous output used for the change test and as `o_prev`.
    output: Vec<f64>,
    /// Last input applied by a step.
    applied: Vec<Vec<f64>>,
    zero: Vec<f64>,
    negative_energy: u64,
    strategy: Strategy,
}

/// Result of one step, one entry per stepped circuit in the order given.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepResult {
    pub clock: u64,
    pub ids: Vec<usize>,
    /// Energy charged at this step, idle gap included (J).
    pub energy: Vec<f64>,
    /// Energy of the step alone.
    pub event_energy: Vec<f64>,
    /// Latency of the output transition, 0 without one (s).
    pub latency: Vec<f64>,
    pub output: Vec<f64>,
    pub dynamic: Vec<bool>,
    /// State after the step.
    pub state: Vec<f64>,
    pub idle_clocks: Vec<u64>,
    pub idle_energy: Vec<f64>,
    /// State at the end of the idle gap, before the step.
    pub idle_state: Vec<f64>,
}

/// Idle energy charged by a flush.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlushResult {
    pub end_clock: u64,
    pub ids: Vec<usize>,
    pub clocks: Vec<u64>,
    pub energy: Vec<f64>,
    pub state: Vec<f64>,
}

/// One scheduled step: the circuits with an input change at `clock` and
/// their inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleStep {
    pub clock: u64,
    pub ids: Vec<usize>,
    pub inputs: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Schedule {
    /// Simulation length; the final flush charges idle time up to here.
    pub n_clocks: u64,
    pub steps: Vec<ScheduleStep>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SequenceResult {
    pub steps: Vec<StepResult>,
    pub flush: FlushResult,
    pub total_energy: f64,
    pub circuit_energy: Vec<f64>,
    pub negative_energy: u64,
}

impl EngineState {
    pub fn new(spec: &CircuitSpec, params: Vec<Vec<f64>>) -> Result<Self> {
        spec.validate()?;
        let mut output = Vec::with_capacity(params.len());
        for (n, p) in params.iter().enumerate() {
            let c = spec.instantiate(p).map_err(|e| Error::Contract { circuit: n, message: e.to_string() })?;
            output.push(c.rest().output);
        }
        let n = params.len();
        let w = spec.x_width();
        Ok(EngineState {
            spec: spec.clone(),
            params,
            last: vec![-1; n],
            state: vec![0.0; n],
            output,
            applied: vec![vec![0.0; w]; n],
            zero: vec![0.0; w],
            negative_energy: 0,
            strategy: Strategy::Parallel,
        })
    }

    pub fn with_strategy(mut self, strategy: Strategy) -> Self {
        self.strategy = strategy;
        self
    }

    pub fn spec(&self) -> &CircuitSpec {
        &self.spec
    }

    pub fn n_circuits(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self, n: usize) -> &[f64] {
        &self.params[n]
    }

    /// Clock of the latest update of circuit `n`, if any.
    pub fn last_update(&self, n: usize) -> Option<u64> {
        u64::try_from(self.last[n]).ok()
    }

    pub fn states(&self) -> &[f64] {
        &self.state
    }

    pub fn outputs(&self) -> &[f64] {
        &self.output
    }

    /// Overwrite a state, e.g. with an externally known true value.
    pub fn set_state(&mut self, n: usize, v: f64) {
        self.state[n] = self.clamp_state(v);
    }

    /// Negative energy predictions clamped to zero so far.
    pub fn negative_energy(&self) -> u64 {
        self.negative_energy
    }

    fn clamp_state(&self, v: f64) -> f64 {
        let (lo, hi) = self.spec.state_range();
        v.clamp(lo, hi)
    }

    fn clamp_energy(&mut self, e: f64) -> f64 {
        if e < 0.0 {
            self.negative_energy += 1;
            0.0
        } else {
            e
        }
    }

    /// Input in force while circuit `n` idles.
    fn idle_input(&self, n: usize) -> &[f64] {
        match self.spec.kind {
            CircuitKind::CrossbarRow => &self.applied[n],
            CircuitKind::LifNeuron => &self.zero,
        }
    }

    /// Clock index of time `t`, which must be a clock boundary.
    pub fn clock_of(&self, t: f64) -> Result<u64> {
        let f = t / self.spec.clock_period;
        let k = f.round();
        if !(k >= 0.0) || (f - k).abs() > 1e-9 * k.max(1.0) {
            return Err(Error::Contract { circuit: 0, message: format!("t = {t:e} s is not a clock boundary") });
        }
        Ok(k as u64)
    }

    fn check_step(&self, clock: u64, ids: &[usize], inputs: &[Vec<f64>]) -> Result<()> {
        let contract = |circuit: usize, message: String| Err(Error::Contract { circuit, message });
        if ids.len() != inputs.len() {
            return contract(0, format!("{} circuits but {} input rows", ids.len(), inputs.len()));
        }
        let mut seen = vec![false; self.n_circuits()];
        let w = self.spec.x_width();
        let [lo, hi] = self.spec.input_range;
        for (&n, x) in ids.iter().zip(inputs) {
            if n >= self.n_circuits() {
                return contract(n, format!("no such circuit (have {})", self.n_circuits()));
            }
            if std::mem::replace(&mut seen[n], true) {
                return contract(n, "stepped twice in one step".into());
            }
            if self.last[n] >= clock as i64 {
                return contract(n, format!("step at clock {clock} not after last update at clock {}", self.last[n]));
            }
            if x.len() != w || x.iter().any(|v| !v.is_finite()) {
                return contract(n, format!("input must be {w} finite values"));
            }
            let ok = match self.spec.kind {
                CircuitKind::CrossbarRow => x.iter().all(|v| (lo..=hi).contains(v)),
                CircuitKind::LifNeuron => {
                    x[1] >= 0.0 && x[1].fract() == 0.0 && x[1] <= self.spec.max_spikes_per_step as f64
                }
            };
            if !ok {
                return contract(n, format!("input {x:?} outside the characterized range"));
            }
        }
        Ok(())
    }

    fn idle_query(&self, n: usize, clocks: u64) -> Query<'_> {
        Query {
            x: &self.zero,
            v: self.state[n],
            clocks,
            tau: clocks as f64 * self.spec.clock_period,
            params: &self.params[n],
            o_prev: self.output[n],
            before: &self.applied[n],
            idle: true,
        }
    }

    /// Charge the idle gaps of `ids` up to (not including) `clock`. Returns
    /// the gap length, energy and end state per circuit.
    fn charge_idle(&mut self, clock: u64, ids: &[usize], predictors: &dyn PredictorSet) -> Result<(Vec<u64>, Vec<f64>)> {
        let gaps: Vec<u64> = ids.iter().map(|&n| (clock as i64 - self.last[n] - 1).max(0) as u64).collect();
        let mut energy = vec![0.0; ids.len()];
        let idle: Vec<usize> = (0..ids.len()).filter(|&i| gaps[i] > 0).collect();
        if idle.is_empty() {
            return Ok((gaps, energy));
        }
        let queries: Vec<Query> = idle.iter().map(|&i| self.idle_query(ids[i], gaps[i])).collect();
        let out = predictors.predict(&IDLE_PREDICTORS, &queries, self.strategy)?;
        drop(queries);
        for (j, &i) in idle.iter().enumerate() {
            let n = ids[i];
            self.state[n] = self.clamp_state(out[0][j]);
            energy[i] = self.clamp_energy(out[1][j]);
        }
        Ok((gaps, energy))
    }

    /// One step of the inference wrapper at `clock` for circuits `ids` with
    /// inputs `inputs`.
    pub fn step(&mut self, clock: u64, ids: &[usize], inputs: &[Vec<f64>], predictors: &dyn PredictorSet) -> Result<StepResult> {
        self.step_inner(clock, ids, inputs, predictors, None)
    }

    /// Like [`EngineState::step`], but every prediction starts from the
    /// state `truth(n, k)` of circuit `n` at the start of clock `k`.
    /// Predicted states are still reported; they are replaced by the truth
    /// right after they are produced.
    pub fn step_observed(
        &mut self,
        clock: u64,
        ids: &[usize],
        inputs: &[Vec<f64>],
        predictors: &dyn PredictorSet,
        truth: &dyn Fn(usize, u64) -> f64,
    ) -> Result<StepResult> {
        self.step_inner(clock, ids, inputs, predictors, Some(truth))
    }

    fn step_inner(
        &mut self,
        clock: u64,
        ids: &[usize],
        inputs: &[Vec<f64>],
        predictors: &dyn PredictorSet,
        truth: Option<&dyn Fn(usize, u64) -> f64>,
    ) -> Result<StepResult> {
        self.check_step(clock, ids, inputs)?;
        if let Some(f) = truth {
            for &n in ids {
                if let Some(k) = self.last_update(n) {
                    self.state[n] = self.clamp_state(f(n, k + 1));
                }
            }
        }
        let (idle_clocks, idle_energy) = self.charge_idle(clock, ids, predictors)?;
        let idle_state: Vec<f64> = ids.iter().map(|&n| self.state[n]).collect();
        if let Some(f) = truth {
            for &n in ids {
                self.state[n] = self.clamp_state(f(n, clock));
            }
        }

        let before: Vec<&[f64]> = ids
            .iter()
            .zip(&idle_clocks)
            .map(|(&n, &g)| if g > 0 { self.idle_input(n) } else { &self.applied[n][..] })
            .collect();
        let queries: Vec<Query> = ids
            .iter()
            .zip(inputs)
            .zip(&before)
            .map(|((&n, x), b)| Query {
                x,
                v: self.state[n],
                clocks: 1,
                tau: self.spec.clock_period,
                params: &self.params[n],
                o_prev: self.output[n],
                before: b,
                idle: false,
            })
            .collect();
        let out = predictors.predict(&Predictor::ALL, &queries, self.strategy)?;
        drop(queries);
        drop(before);

        let eps = self.spec.output_change_epsilon;
        let (olo, ohi) = self.spec.output_range();
        let pulse = self.spec.output_mode() == crate::oracle::OutputMode::Pulse;
        let mut r = StepResult {
            clock,
            ids: ids.to_vec(),
            idle_clocks,
            idle_energy: idle_energy.clone(),
            idle_state,
            ..Default::default()
        };
        for (i, (&n, x)) in ids.iter().zip(inputs).enumerate() {
            let o = out[Predictor::Output.index()][i].clamp(olo, ohi);
            let changed = (o - self.output[n]).abs() > eps;
            let (e, l) = if changed {
                let e = out[Predictor::DynamicEnergy.index()][i];
                (self.clamp_energy(e), out[Predictor::Latency.index()][i].max(0.0))
            } else {
                (self.clamp_energy(out[Predictor::StaticEnergy.index()][i]), 0.0)
            };
            self.state[n] = self.clamp_state(out[Predictor::State.index()][i]);
            self.last[n] = clock as i64;
            self.applied[n].clone_from(x);
            self.output[n] = if pulse { self.spec.rest_output() } else { o };
            r.energy.push(idle_energy[i] + e);
            r.event_energy.push(e);
            r.latency.push(l);
            r.output.push(o);
            r.dynamic.push(changed);
            r.state.push(self.state[n]);
            if let Some(f) = truth {
                self.state[n] = self.clamp_state(f(n, clock + 1));
            }
        }
        Ok(r)
    }

    /// Step at time `t` in seconds.
    pub fn step_at(&mut self, t: f64, ids: &[usize], inputs: &[Vec<f64>], predictors: &dyn PredictorSet) -> Result<StepResult> {
        let clock = self.clock_of(t)?;
        self.step(clock, ids, inputs, predictors)
    }

    /// Charge every circuit's idle time up to the end of clock `end_clock - 1`.
    pub fn flush(&mut self, end_clock: u64, predictors: &dyn PredictorSet) -> Result<FlushResult> {
        if let Some(n) = (0..self.n_circuits()).find(|&n| self.last[n] >= end_clock as i64) {
            return Err(Error::Contract { circuit: n, message: format!("flush to clock {end_clock} is in the past") });
        }
        let ids: Vec<usize> = (0..self.n_circuits()).collect();
        let (clocks, energy) = self.charge_idle(end_clock, &ids, predictors)?;
        for n in 0..self.n_circuits() {
            self.last[n] = end_clock as i64 - 1;
        }
        let state = self.state.clone();
        Ok(FlushResult { end_clock, ids, clocks, energy, state })
    }
}

/// Fold [`EngineState::step`] over a schedule, then flush to its end.
pub fn run_sequence(state: &mut EngineState, schedule: &Schedule, predictors: &dyn PredictorSet) -> Result<SequenceResult> {
    fold_schedule(state, schedule, predictors, None)
}

/// [`run_sequence`] with [`EngineState::step_observed`] in place of
/// [`EngineState::step`].
pub fn run_sequence_observed(
    state: &mut EngineState,
    schedule: &Schedule,
    predictors: &dyn PredictorSet,
    truth: &dyn Fn(usize, u64) -> f64,
) -> Result<SequenceResult> {
    fold_schedule(state, schedule, predictors, Some(truth))
}

fn fold_schedule(
    state: &mut EngineState,
    schedule: &Schedule,
    predictors: &dyn PredictorSet,
    truth: Option<&dyn Fn(usize, u64) -> f64>,
) -> Result<SequenceResult> {
    let mut prev: Option<u64> = None;
    let mut out = SequenceResult { circuit_energy: vec![0.0; state.n_circuits()], ..Default::default() };
    for s in &schedule.steps {
        if prev.is_some_and(|p| s.clock <= p) || s.clock >= schedule.n_clocks {
            return Err(crate::error::invalid(format!("schedule clock {} out of order or past the end", s.clock)));
        }
        prev = Some(s.clock);
        let r = state.step_inner(s.clock, &s.ids, &s.inputs, predictors, truth)?;
        for (&n, &e) in r.ids.iter().zip(&r.energy) {
            out.circuit_energy[n] += e;
        }
        out.steps.push(r);
    }
    let f = state.flush(schedule.n_clocks, predictors)?;
    for (&n, &e) in f.ids.iter().zip(&f.energy) {
        out.circuit_energy[n] += e;
    }
    out.flush = f;
    out.total_energy = out.circuit_energy.iter().sum();
    out.negative_energy = state.negative_energy();
    Ok(out)
}

/// The schedule a set of characterization runs implies: circuit `i` runs
/// testbench `i`, stepped at its input-change clocks.
pub fn characterization_schedule(spec: &CircuitSpec, tbs: &[Testbench]) -> Result<(Vec<Vec<f64>>, Schedule)> {
    let n_clocks = tbs.first().map_or(0, |t| t.n_steps());
    if tbs.iter().any(|t| t.n_steps() != n_clocks) {
        return Err(crate::error::invalid("testbenches of a schedule must have equal length"));
    }
    let all_steps: Vec<Vec<Vec<f64>>> = tbs.iter().map(|t| t.steps()).collect::<Result<_>>()?;
    let flags: Vec<Vec<bool>> = all_steps.iter().map(|s| input_change_flags(spec, s)).collect();
    let mut steps = Vec::new();
    for c in 0..n_clocks {
        let ids: Vec<usize> = (0..tbs.len()).filter(|&i| flags[i][c]).collect();
        if ids.is_empty() {
            continue;
        }
        let inputs = ids.iter().map(|&i| all_steps[i][c].clone()).collect();
        steps.push(ScheduleStep { clock: c as u64, ids, inputs });
    }
    let params = tbs.iter().map(|t| t.params.clone()).collect();
    Ok((params, Schedule { n_clocks: n_clocks as u64, steps }))
}

#[cfg(test)]
mod tests;
