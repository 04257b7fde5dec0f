use serde::{Deserialize, Serialize};

use super::spec::CircuitSpec;
use super::testbench::Testbench;
use crate::error::invalid;
use crate::oracle::{trapezoid, window_latency, OutputMode, TransientTrace};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EventKind {
    /// Input change with an output change.
    E1,
    /// Merged idle period.
    E2,
    /// Input change without an output change.
    E3,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::E1 => "E1",
            EventKind::E2 => "E2",
            EventKind::E3 => "E3",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "E1" => Some(EventKind::E1),
            "E2" => Some(EventKind::E2),
            "E3" => Some(EventKind::E3),
            _ => None,
        }
    }

    pub fn energy_class(self) -> EnergyClass {
        if self == EventKind::E1 {
            EnergyClass::Dynamic
        } else {
            EnergyClass::Static
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnergyClass {
    Dynamic,
    Static,
}

impl EnergyClass {
    pub fn as_str(self) -> &'static str {
        match self {
            EnergyClass::Dynamic => "dynamic",
            EnergyClass::Static => "static",
        }
    }
}

/// One labeled event.
#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub kind: EventKind,
    pub run_id: u64,
    /// Index of the first clock of the event.
    pub start_clock: u64,
    /// Event length in clocks.
    pub clocks: u64,
    pub t_start: f64,
    pub t_end: f64,
    pub tau: f64,
    /// Input applied during the event; zero for idle periods.
    pub x: Vec<f64>,
    pub v_start: f64,
    pub v_end: f64,
    pub o_prev: f64,
    pub o: f64,
    pub params: Vec<f64>,
    pub energy: f64,
    pub energy_class: EnergyClass,
    pub latency: Option<f64>,
}

impl EventRecord {
    pub fn is_input_change(&self) -> bool {
        self.kind != EventKind::E2
    }
}

/// Kind implied by an input-change flag and the output change.
pub fn classify(input_change: bool, o_prev: f64, o: f64, epsilon: f64) -> EventKind {
    if !input_change {
        EventKind::E2
    } else if (o - o_prev).abs() > epsilon {
        EventKind::E1
    } else {
        EventKind::E3
    }
}

/// Per-clock input-change flags; the input before the first clock is zero.
pub fn input_change_flags(spec: &CircuitSpec, steps: &[Vec<f64>]) -> Vec<bool> {
    let zero = vec![0.0; spec.x_width()];
    let mut prev: &[f64] = &zero;
    steps
        .iter()
        .map(|x| {
            let c = spec.input_changed(prev, x);
            prev = x;
            c
        })
        .collect()
}

/// Split a run into events. Every clock belongs to exactly one event;
/// maximal runs of idle clocks merge into one E2, including a trailing one.
pub fn decompose_events(trace: &TransientTrace, tb: &Testbench, spec: &CircuitSpec) -> Result<Vec<EventRecord>> {
    let steps = tb.steps()?;
    let n = steps.len();
    let s = spec.substeps_per_clock;
    if trace.substeps_per_clock != s
        || trace.clock_period != spec.clock_period
        || trace.len() != n * s + 1
        || trace.input_width != spec.x_width()
    {
        return Err(invalid(format!(
            "trace of {} samples ({} per clock) does not cover run {} of {n} clocks",
            trace.len(),
            trace.substeps_per_clock,
            tb.run_id
        )));
    }
    let flags = input_change_flags(spec, &steps);
    let eps = spec.output_change_epsilon;
    let mode = spec.output_mode();
    let period = spec.clock_period;
    let mut events = Vec::new();
    let mut k = 0;
    while k < n {
        let change = flags[k];
        let len = if change {
            1
        } else {
            flags[k..].iter().take_while(|&&f| !f).count()
        };
        let (i0, i1) = (k * s, (k + len) * s);
        let window = &trace.output[i0..=i1];
        let o_prev = window[0];
        let o = match mode {
            OutputMode::Level => window[window.len() - 1],
            OutputMode::Pulse => window.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        };
        let kind = classify(change, o_prev, o, eps);
        let latency = if kind == EventKind::E1 {
            let l = window_latency(window, trace.dt, mode.latency_mode(), eps);
            debug_assert!(l.is_some());
            l
        } else {
            None
        };
        let x = if change { steps[k].clone() } else { vec![0.0; steps[k].len()] };
        let start_clock = k as u64;
        let clocks = len as u64;
        events.push(EventRecord {
            kind,
            run_id: tb.run_id,
            start_clock,
            clocks,
            t_start: start_clock as f64 * period,
            t_end: (start_clock + clocks) as f64 * period,
            tau: clocks as f64 * period,
            x,
            v_start: trace.state[i0],
            v_end: trace.state[i1],
            o_prev,
            o,
            params: tb.params.clone(),
            energy: trapezoid(&trace.power[i0..=i1], trace.dt),
            energy_class: kind.energy_class(),
            latency,
        });
        k += len;
    }
    Ok(events)
}
