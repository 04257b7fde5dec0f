use serde::{Deserialize, Serialize};

use super::{Boundary, Circuit, ClockGrid, Samples, TransientTrace};
use crate::dataset::PwlSet;
use crate::{error::invalid, Result};

/// Fixed electrical constants of a crossbar row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CrossbarConstants {
    /// Differential amplifier gain (V/V).
    pub gain: f64,
    pub rail_low: f64,
    pub rail_high: f64,
    /// First-order settling time constant (s).
    pub settle_tau: f64,
    /// Conductance of one bitcell pair (S).
    pub unit_conductance: f64,
    /// Output load (F).
    pub load_capacitance: f64,
    /// Voltage applied to the bias column (V).
    pub bias_reference: f64,
    /// Amplifier quiescent power (W).
    pub quiescent_power: f64,
}

impl Default for CrossbarConstants {
    fn default() -> Self {
        CrossbarConstants {
            gain: 0.25,
            rail_low: -2.0,
            rail_high: 2.0,
            settle_tau: 80e-12,
            unit_conductance: 10e-6,
            load_capacitance: 500e-15,
            bias_reference: 0.8,
            quiescent_power: 20e-6,
        }
    }
}

impl CrossbarConstants {
    pub fn validate(&self) -> Result<()> {
        if !(self.rail_low < self.rail_high) {
            return Err(invalid("crossbar rail_low must be below rail_high"));
        }
        if !(self.settle_tau > 0.0) || !(self.gain > 0.0) {
            return Err(invalid("crossbar settle_tau and gain must be positive"));
        }
        Ok(())
    }
}

/// One crossbar row: ternary weights, ternary bias and the row constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossbarRowParams {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub constants: CrossbarConstants,
}

impl CrossbarRowParams {
    pub fn new(weights: Vec<f64>, bias: f64, constants: CrossbarConstants) -> Result<Self> {
        if weights.is_empty() {
            return Err(invalid("crossbar row needs at least one input"));
        }
        let ternary = |v: f64| v == -1.0 || v == 0.0 || v == 1.0;
        if !weights.iter().all(|&w| ternary(w)) || !ternary(bias) {
            return Err(invalid("crossbar weights and bias must be in {-1, 0, 1}"));
        }
        constants.validate()?;
        Ok(CrossbarRowParams { weights, bias, constants })
    }

    /// Clamped steady-state output for input `x`.
    pub fn target(&self, x: &[f64]) -> f64 {
        let c = &self.constants;
        let acc: f64 = self.weights.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() + self.bias * c.bias_reference;
        (c.gain * acc).clamp(c.rail_low, c.rail_high)
    }

    fn static_power(&self, x: &[f64]) -> f64 {
        let c = &self.constants;
        c.quiescent_power + c.unit_conductance * x.iter().map(|v| v * v).sum::<f64>()
    }

    #[inline]
    fn power(&self, static_power: f64, target: f64, o: f64) -> f64 {
        let c = &self.constants;
        let slope = (target - o) / c.settle_tau;
        static_power + c.load_capacitance * (o * slope).abs()
    }

    pub(super) fn edge_power(&self, o: f64, x: &[f64]) -> f64 {
        self.power(self.static_power(x), self.target(x), o)
    }

    pub(super) fn run_clock(&self, start: Boundary, x: &[f64], grid: &ClockGrid, out: &mut Samples) -> Boundary {
        let tau = self.constants.settle_tau;
        let dt = grid.dt();
        let y = self.target(x);
        let ps = self.static_power(x);
        let mut o = start.output;
        for _ in 0..grid.substeps {
            // Heun step of do/dt = (y - o) / tau
            let k1 = (y - o) / tau;
            let k2 = (y - (o + dt * k1)) / tau;
            o += 0.5 * dt * (k1 + k2);
            if (y - o).abs() <= 4.0 * f64::EPSILON * y.abs().max(1.0) {
                o = y;
            }
            out.push(x, o, 0.0, self.power(ps, y, o));
        }
        Boundary { output: o, state: 0.0 }
    }
}

/// Simulate a crossbar row driven by per-input PWL waveforms.
///
/// Breakpoints are read as the value applied during the clock that starts at
/// the breakpoint.
pub fn simulate_crossbar_row(
    params: &CrossbarRowParams,
    inputs: &PwlSet,
    duration: f64,
    grid: ClockGrid,
) -> Result<TransientTrace> {
    if inputs.channels.len() != params.weights.len() {
        return Err(invalid(format!(
            "expected {} PWL inputs, got {}",
            params.weights.len(),
            inputs.channels.len()
        )));
    }
    let steps = inputs.clock_values(duration, grid.period)?;
    Circuit::Crossbar(params.clone()).simulate(&steps, &grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{measure_latency, LatencyMode};
    use rand::Rng;

    fn grid() -> ClockGrid {
        ClockGrid::new(4e-9, 100).unwrap()
    }

    fn row(weights: Vec<f64>, bias: f64) -> Circuit {
        Circuit::Crossbar(CrossbarRowParams::new(weights, bias, CrossbarConstants::default()).unwrap())
    }

    #[test]
    fn zero_input_settles_to_zero() {
        let c = row(vec![1.0, -1.0, 0.0, 1.0], 0.0);
        let tr = c.simulate(&vec![vec![0.0; 4]; 5], &grid()).unwrap();
        assert!(tr.output.iter().all(|&o| o == 0.0));
        assert!(tr.state.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn settles_to_clamped_weighted_sum() {
        let mut rng = crate::rng::rng(3);
        let w: Vec<f64> = (0..32).map(|_| rng.gen_range(-1i32..=1) as f64).collect();
        let x: Vec<f64> = (0..32).map(|_| rng.gen_range(-0.8..0.8)).collect();
        let c = row(w.clone(), 1.0);
        let tr = c.simulate(&[x.clone()], &grid()).unwrap();
        let expect = (0.25 * (w.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() + 0.8)).clamp(-2.0, 2.0);
        // 5 tau = 0.4 ns = 10 substeps
        let o = tr.output[10];
        assert!((o - expect).abs() <= 0.01 * expect.abs().max(1e-3), "{o} vs {expect}");
    }

    #[test]
    fn saturates_at_rails() {
        let c = row(vec![1.0; 32], 1.0);
        let tr = c.simulate(&[vec![0.8; 32]], &grid()).unwrap();
        assert_eq!(*tr.output.last().unwrap(), 2.0);
        let c = row(vec![-1.0; 32], -1.0);
        let tr = c.simulate(&[vec![0.8; 32]], &grid()).unwrap();
        assert_eq!(*tr.output.last().unwrap(), -2.0);
    }

    #[test]
    fn linear_before_clamping() {
        let w = vec![1.0, -1.0, 1.0, 0.0];
        let c = row(w, 0.0);
        let x = vec![0.3, -0.2, 0.1, 0.7];
        let x2: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let a = *c.simulate(&[x], &grid()).unwrap().output.last().unwrap();
        let b = *c.simulate(&[x2], &grid()).unwrap().output.last().unwrap();
        assert!(((b - 2.0 * a) / (2.0 * a)).abs() < 1e-6);
    }

    #[test]
    fn rise_time_matches_exponential() {
        let c = row(vec![1.0], 0.0);
        let g = grid();
        let tr = c.simulate(&[vec![0.8]], &g).unwrap();
        let lat = measure_latency(&tr, 0.0, 4e-9, LatencyMode::Rise90, 1e-3).unwrap();
        let tau = CrossbarConstants::default().settle_tau;
        assert!((lat - tau * 10f64.ln()).abs() <= g.dt(), "{lat}");
    }

    #[test]
    fn output_is_a_fixed_point_after_one_clock() {
        // An idle clock leaves a settled output unchanged.
        let c = row(vec![1.0, -1.0, 1.0], 1.0);
        let x = vec![0.5, 0.1, -0.3];
        let tr = c.simulate(&[x.clone(), x.clone(), x], &grid()).unwrap();
        assert_eq!(tr.output[100], tr.output[200]);
        assert_eq!(tr.output[200], tr.output[300]);
    }

    #[test]
    fn rejects_non_finite_input() {
        let c = row(vec![1.0, 1.0], 0.0);
        let err = c.simulate(&[vec![0.1, 0.1], vec![0.2, f64::NAN]], &grid()).unwrap_err();
        assert!(matches!(err, crate::Error::NonFiniteInput { input: 1, .. }), "{err}");
    }
}
