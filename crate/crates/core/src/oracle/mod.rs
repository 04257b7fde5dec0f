//! Analytical transient simulator for the two reference circuits.
//!
//! Both circuits are simulated one clock period at a time by a kernel that
//! depends only on the boundary state at the start of the clock, the input
//! applied during that clock and the circuit parameters. A whole-run trace is
//! the concatenation of per-clock kernels, so replaying any event from its
//! boundary conditions reproduces the trace samples bit for bit.
//!
//! Sample convention: the sample at a clock edge belongs to the clock period
//! that ends there and carries that period's input.

mod crossbar;
mod lif;
mod trace;

pub use crossbar::{simulate_crossbar_row, CrossbarConstants, CrossbarRowParams};
pub use lif::{simulate_lif_neuron, LifConstants, LifParams, SpikeSchedule, SpikeStep};
pub use trace::{integrate_energy, measure_latency, trapezoid, window_latency, LatencyMode, TransientTrace};

use crate::{error::invalid, Error, Result};

/// Uniform time grid of one clock period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClockGrid {
    pub period: f64,
    pub substeps: usize,
}

impl ClockGrid {
    pub fn new(period: f64, substeps: usize) -> Result<Self> {
        if !(period > 0.0) || !period.is_finite() {
            return Err(invalid(format!("clock period must be positive, got {period}")));
        }
        if substeps < 10 {
            return Err(invalid(format!("substeps_per_clock must be >= 10, got {substeps}")));
        }
        Ok(ClockGrid { period, substeps })
    }

    pub fn dt(&self) -> f64 {
        self.period / self.substeps as f64
    }
}

/// Circuit state observable at a clock edge.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Boundary {
    pub output: f64,
    /// Internal state; zero for stateless circuits.
    pub state: f64,
}

/// How the event output is read off the output waveform.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputMode {
    /// Output is a level; the event output is the end-boundary value and
    /// latency is the 90% rise time.
    Level,
    /// Output is a pulse returning to rest within the clock; the event output
    /// is the peak value and latency is the time to peak.
    Pulse,
}

impl OutputMode {
    pub fn latency_mode(self) -> LatencyMode {
        match self {
            OutputMode::Level => LatencyMode::Rise90,
            OutputMode::Pulse => LatencyMode::SpikePeak,
        }
    }
}

/// Samples produced while simulating.
#[derive(Debug, Clone, Default)]
pub struct Samples {
    pub input_width: usize,
    pub inputs: Vec<f64>,
    pub output: Vec<f64>,
    pub state: Vec<f64>,
    pub power: Vec<f64>,
}

impl Samples {
    pub fn with_capacity(input_width: usize, n: usize) -> Self {
        Samples {
            input_width,
            inputs: Vec::with_capacity(n * input_width),
            output: Vec::with_capacity(n),
            state: Vec::with_capacity(n),
            power: Vec::with_capacity(n),
        }
    }

    #[inline]
    pub(crate) fn push(&mut self, input: &[f64], output: f64, state: f64, power: f64) {
        self.inputs.extend_from_slice(input);
        self.output.push(output);
        self.state.push(state);
        self.power.push(power);
    }

    pub fn len(&self) -> usize {
        self.output.len()
    }

    pub fn is_empty(&self) -> bool {
        self.output.is_empty()
    }
}

/// One instantiated reference circuit.
#[derive(Debug, Clone, PartialEq)]
pub enum Circuit {
    Crossbar(CrossbarRowParams),
    Lif(LifParams),
}

impl Circuit {
    /// Width of the per-clock input vector.
    pub fn input_width(&self) -> usize {
        match self {
            Circuit::Crossbar(p) => p.weights.len(),
            Circuit::Lif(_) => 2,
        }
    }

    pub fn output_mode(&self) -> OutputMode {
        match self {
            Circuit::Crossbar(_) => OutputMode::Level,
            Circuit::Lif(_) => OutputMode::Pulse,
        }
    }

    /// Settled boundary with zero input applied: the power-on condition.
    /// A biased crossbar row rests at its bias output.
    pub fn rest(&self) -> Boundary {
        match self {
            Circuit::Crossbar(p) => Boundary { output: p.target(&vec![0.0; p.weights.len()]), state: 0.0 },
            Circuit::Lif(_) => Boundary::default(),
        }
    }

    /// Input in force during clocks without an input change, given the last
    /// applied input. Crossbar inputs are held by the driving DAC; a neuron
    /// receives no spikes.
    pub fn idle_input(&self, applied: &[f64]) -> Vec<f64> {
        match self {
            Circuit::Crossbar(_) => applied.to_vec(),
            Circuit::Lif(_) => vec![0.0; 2],
        }
    }

    /// Power sample at a clock edge, as reported by the clock period that
    /// ends there with `input` applied.
    pub fn edge_power(&self, at: Boundary, input: &[f64]) -> f64 {
        match self {
            Circuit::Crossbar(p) => p.edge_power(at.output, input),
            Circuit::Lif(p) => p.edge_power(at.state),
        }
    }

    /// Advance one clock period, appending `grid.substeps` samples.
    pub fn run_clock(&self, start: Boundary, input: &[f64], grid: &ClockGrid, out: &mut Samples) -> Boundary {
        match self {
            Circuit::Crossbar(p) => p.run_clock(start, input, grid, out),
            Circuit::Lif(p) => p.run_clock(start, input, grid, out),
        }
    }

    /// Simulate from `start` with `applied` in force before the first clock.
    /// The returned samples start with the edge sample at `start`.
    pub fn replay(&self, start: Boundary, applied: &[f64], clocks: &[&[f64]], grid: &ClockGrid) -> Samples {
        let mut out = Samples::with_capacity(self.input_width(), clocks.len() * grid.substeps + 1);
        out.push(applied, start.output, start.state, self.edge_power(start, applied));
        let mut b = start;
        for x in clocks {
            b = self.run_clock(b, x, grid, &mut out);
        }
        out
    }

    /// Full-run simulation from [`Circuit::rest`] with zero input before the
    /// first clock.
    pub fn simulate(&self, steps: &[Vec<f64>], grid: &ClockGrid) -> Result<TransientTrace> {
        let w = self.input_width();
        for (k, x) in steps.iter().enumerate() {
            if x.len() != w {
                return Err(invalid(format!("clock {k}: input width {} != {w}", x.len())));
            }
            if let Some(i) = x.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFiniteInput { input: i, time: k as f64 * grid.period });
            }
        }
        let zero = vec![0.0; w];
        let clocks: Vec<&[f64]> = steps.iter().map(|s| s.as_slice()).collect();
        let s = self.replay(self.rest(), &zero, &clocks, grid);
        Ok(TransientTrace::from_samples(s, *grid))
    }
}
