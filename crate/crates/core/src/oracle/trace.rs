use super::{ClockGrid, Samples};
use crate::{error::invalid, Error, Result};

/// Uniformly sampled waveforms of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct TransientTrace {
    pub dt: f64,
    pub clock_period: f64,
    pub substeps_per_clock: usize,
    pub input_width: usize,
    /// Row-major `[samples x input_width]`.
    pub inputs: Vec<f64>,
    pub output: Vec<f64>,
    pub state: Vec<f64>,
    pub power: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatencyMode {
    /// Time to reach 90% of the end-of-window change.
    Rise90,
    /// Time of the output maximum.
    SpikePeak,
}

impl TransientTrace {
    pub(crate) fn from_samples(s: Samples, grid: ClockGrid) -> Self {
        TransientTrace {
            dt: grid.dt(),
            clock_period: grid.period,
            substeps_per_clock: grid.substeps,
            input_width: s.input_width,
            inputs: s.inputs,
            output: s.output,
            state: s.state,
            power: s.power,
        }
    }

    pub fn len(&self) -> usize {
        self.output.len()
    }

    pub fn is_empty(&self) -> bool {
        self.output.is_empty()
    }

    /// Number of whole clock periods covered.
    pub fn clocks(&self) -> usize {
        self.len().saturating_sub(1) / self.substeps_per_clock
    }

    pub fn duration(&self) -> f64 {
        self.clocks() as f64 * self.clock_period
    }

    pub fn input_row(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.input_width..(i + 1) * self.input_width]
    }

    /// Sample index of time `t`, which must sit on a sample.
    pub fn sample_index(&self, t: f64) -> Result<usize> {
        let f = t / self.dt;
        let i = f.round();
        if (f - i).abs() > 1e-6 || i < 0.0 || i as usize >= self.len() {
            return Err(invalid(format!("time {t:e} s is not a sample inside the trace")));
        }
        Ok(i as usize)
    }

    /// Sample index of clock edge `k`.
    pub fn edge(&self, k: usize) -> usize {
        k * self.substeps_per_clock
    }
}

/// Trapezoidal integral of uniformly spaced samples.
pub fn trapezoid(samples: &[f64], dt: f64) -> f64 {
    samples.windows(2).map(|w| 0.5 * (w[0] + w[1]) * dt).sum()
}

/// Energy drawn over `[t0, t1]`.
pub fn integrate_energy(trace: &TransientTrace, t0: f64, t1: f64) -> Result<f64> {
    let (i0, i1) = (trace.sample_index(t0)?, trace.sample_index(t1)?);
    if i0 >= i1 {
        return Err(Error::InvalidArgument(format!("empty energy window [{t0:e}, {t1:e}]")));
    }
    Ok(trapezoid(&trace.power[i0..=i1], trace.dt))
}

/// Latency of the output transition inside a window of samples, measured
/// from the first sample. `None` when the output moves by no more than
/// `epsilon`.
pub fn window_latency(output: &[f64], dt: f64, mode: LatencyMode, epsilon: f64) -> Option<f64> {
    let start = *output.first()?;
    match mode {
        LatencyMode::Rise90 => {
            let end = *output.last()?;
            let delta = end - start;
            if delta.abs() <= epsilon {
                return None;
            }
            let target = start + 0.9 * delta;
            let reached = |o: f64| if delta > 0.0 { o >= target } else { o <= target };
            let i = output.iter().position(|&o| reached(o))?;
            if i == 0 {
                return Some(0.0);
            }
            let (a, b) = (output[i - 1], output[i]);
            let frac = if b != a { (target - a) / (b - a) } else { 1.0 };
            Some(((i - 1) as f64 + frac) * dt)
        }
        LatencyMode::SpikePeak => {
            let (mut best, mut at) = (start, 0usize);
            for (i, &o) in output.iter().enumerate() {
                if o > best {
                    best = o;
                    at = i;
                }
            }
            if best - start <= epsilon {
                None
            } else {
                Some(at as f64 * dt)
            }
        }
    }
}

/// Latency of the output transition in `[window_start, window_end]`.
pub fn measure_latency(
    trace: &TransientTrace,
    window_start: f64,
    window_end: f64,
    mode: LatencyMode,
    epsilon: f64,
) -> Option<f64> {
    let i0 = trace.sample_index(window_start).ok()?;
    let i1 = trace.sample_index(window_end).ok()?;
    if i1 <= i0 {
        return None;
    }
    window_latency(&trace.output[i0..=i1], trace.dt, mode, epsilon)
}
