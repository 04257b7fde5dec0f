use std::io::Write;

use serde::Serialize;

use super::SequenceResult;
use crate::Result;

/// Which branch of the step produced a row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Path {
    /// Merged idle gap charged before a step.
    Idle,
    Dynamic,
    Static,
    /// Idle tail charged at the end of the simulation.
    Flush,
}

/// One row of the step-trace log. Idle rows carry no output or latency.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogRow {
    pub t: f64,
    pub start_clock: u64,
    pub clocks: u64,
    pub circuit: usize,
    pub path: Path,
    pub energy: f64,
    pub latency: Option<f64>,
    pub output: Option<f64>,
    pub state: f64,
}

impl SequenceResult {
    /// Rows in simulation order; within a step, idle rows precede the step
    /// rows.
    pub fn log(&self, clock_period: f64) -> Vec<LogRow> {
        let mut rows = Vec::new();
        for s in &self.steps {
            for i in 0..s.ids.len() {
                let g = s.idle_clocks[i];
                if g > 0 {
                    let start = s.clock - g;
                    rows.push(LogRow {
                        t: start as f64 * clock_period,
                        start_clock: start,
                        clocks: g,
                        circuit: s.ids[i],
                        path: Path::Idle,
                        energy: s.idle_energy[i],
                        latency: None,
                        output: None,
                        state: s.idle_state[i],
                    });
                }
            }
            for i in 0..s.ids.len() {
                rows.push(LogRow {
                    t: s.clock as f64 * clock_period,
                    start_clock: s.clock,
                    clocks: 1,
                    circuit: s.ids[i],
                    path: if s.dynamic[i] { Path::Dynamic } else { Path::Static },
                    energy: s.event_energy[i],
                    latency: Some(s.latency[i]),
                    output: Some(s.output[i]),
                    state: s.state[i],
                });
            }
        }
        let f = &self.flush;
        for i in 0..f.ids.len() {
            if f.clocks[i] > 0 {
                let start = f.end_clock - f.clocks[i];
                rows.push(LogRow {
                    t: start as f64 * clock_period,
                    start_clock: start,
                    clocks: f.clocks[i],
                    circuit: f.ids[i],
                    path: Path::Flush,
                    energy: f.energy[i],
                    latency: None,
                    output: None,
                    state: f.state[i],
                });
            }
        }
        rows
    }
}

pub fn write_step_log(rows: &[LogRow], sink: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
