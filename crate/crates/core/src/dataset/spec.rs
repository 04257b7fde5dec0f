use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::invalid;
use crate::oracle::{Circuit, ClockGrid, CrossbarConstants, CrossbarRowParams, LifConstants, LifParams, OutputMode};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CircuitKind {
    CrossbarRow,
    LifNeuron,
}

/// Sampling domain of one tunable parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Domain {
    /// Uniform over {-1, 0, 1}.
    Ternary,
    /// Uniform over `[low, high]`.
    Interval { low: f64, high: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamDomain {
    pub name: String,
    pub domain: Domain,
}

/// Everything the oracle and the characterization flow need to know about a
/// circuit template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitSpec {
    pub kind: CircuitKind,
    /// Number of physical inputs (crossbar row length; 1 synaptic port for
    /// the neuron).
    pub input_dims: usize,
    /// Input voltage range (crossbar inputs; neuron spike amplitudes).
    pub input_range: [f64; 2],
    pub param_schema: Vec<ParamDomain>,
    pub clock_period: f64,
    pub output_change_epsilon: f64,
    /// Neuron only: spikes per clock are drawn from `0..=max`.
    #[serde(default)]
    pub max_spikes_per_step: usize,
    /// Neuron only: synapse weight range for generated spikes.
    #[serde(default = "default_weight_range")]
    pub synapse_weight_range: [f64; 2],
    #[serde(default = "default_substeps")]
    pub substeps_per_clock: usize,
    #[serde(default)]
    pub crossbar: CrossbarConstants,
    #[serde(default)]
    pub lif: LifConstants,
}

fn default_weight_range() -> [f64; 2] {
    [-1.0, 1.0]
}

fn default_substeps() -> usize {
    100
}

impl CircuitSpec {
    /// 32-input ternary crossbar row at 250 MHz.
    pub fn crossbar_row() -> Self {
        let k = 32;
        let mut param_schema: Vec<ParamDomain> = (0..k)
            .map(|i| ParamDomain { name: format!("w{i}"), domain: Domain::Ternary })
            .collect();
        param_schema.push(ParamDomain { name: "bias".into(), domain: Domain::Ternary });
        let crossbar = CrossbarConstants::default();
        CircuitSpec {
            kind: CircuitKind::CrossbarRow,
            input_dims: k,
            input_range: [-0.8, 0.8],
            param_schema,
            clock_period: 4e-9,
            output_change_epsilon: 0.01 * (crossbar.rail_high - crossbar.rail_low),
            max_spikes_per_step: 0,
            synapse_weight_range: default_weight_range(),
            substeps_per_clock: 100,
            crossbar,
            lif: LifConstants::default(),
        }
    }

    /// Analog LIF neuron with four voltage knobs at 200 MHz.
    pub fn lif_neuron() -> Self {
        let lif = LifConstants::default();
        let knob = Domain::Interval { low: lif.knob_low, high: lif.knob_high };
        let param_schema = ["v_leak", "v_th", "v_adap", "v_refrac"]
            .iter()
            .map(|n| ParamDomain { name: n.to_string(), domain: knob })
            .collect();
        CircuitSpec {
            kind: CircuitKind::LifNeuron,
            input_dims: 1,
            input_range: [0.0, 1.5],
            param_schema,
            clock_period: 5e-9,
            output_change_epsilon: 0.01 * lif.voltage_max,
            max_spikes_per_step: lif.max_spikes_per_step,
            synapse_weight_range: default_weight_range(),
            substeps_per_clock: 100,
            crossbar: CrossbarConstants::default(),
            lif,
        }
    }

    pub fn preset(kind: CircuitKind) -> Self {
        match kind {
            CircuitKind::CrossbarRow => Self::crossbar_row(),
            CircuitKind::LifNeuron => Self::lif_neuron(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.input_range[0] < self.input_range[1]) {
            return Err(invalid("input_range low must be below high"));
        }
        if !(self.output_change_epsilon > 0.0) {
            return Err(invalid("output_change_epsilon must be positive"));
        }
        ClockGrid::new(self.clock_period, self.substeps_per_clock)?;
        for p in &self.param_schema {
            if let Domain::Interval { low, high } = p.domain {
                if !(low <= high) {
                    return Err(invalid(format!("parameter {} has an empty interval", p.name)));
                }
            }
        }
        match self.kind {
            CircuitKind::CrossbarRow => {
                if self.input_dims == 0 || self.param_schema.len() != self.input_dims + 1 {
                    return Err(invalid("crossbar schema must hold input_dims weights plus a bias"));
                }
                self.crossbar.validate()?;
            }
            CircuitKind::LifNeuron => {
                if self.param_schema.len() != 4 {
                    return Err(invalid("neuron schema must hold the four knobs"));
                }
                if self.max_spikes_per_step == 0 {
                    return Err(invalid("max_spikes_per_step must be >= 1"));
                }
                if self.lif.spike_width >= self.clock_period {
                    return Err(invalid("spike_width must be shorter than the clock period"));
                }
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> ClockGrid {
        ClockGrid { period: self.clock_period, substeps: self.substeps_per_clock }
    }

    /// Width of the per-clock input vector `x`.
    pub fn x_width(&self) -> usize {
        match self.kind {
            CircuitKind::CrossbarRow => self.input_dims,
            CircuitKind::LifNeuron => 2,
        }
    }

    pub fn n_params(&self) -> usize {
        self.param_schema.len()
    }

    pub fn output_mode(&self) -> OutputMode {
        match self.kind {
            CircuitKind::CrossbarRow => OutputMode::Level,
            CircuitKind::LifNeuron => OutputMode::Pulse,
        }
    }

    /// Whether clock input `cur` is an input change after `prev`.
    pub fn input_changed(&self, prev: &[f64], cur: &[f64]) -> bool {
        match self.kind {
            CircuitKind::CrossbarRow => prev != cur,
            CircuitKind::LifNeuron => cur[1] > 0.0,
        }
    }

    /// Valid range of the internal state.
    pub fn state_range(&self) -> (f64, f64) {
        match self.kind {
            CircuitKind::CrossbarRow => (0.0, 0.0),
            CircuitKind::LifNeuron => (0.0, self.lif.voltage_max),
        }
    }

    pub fn output_range(&self) -> (f64, f64) {
        match self.kind {
            CircuitKind::CrossbarRow => (self.crossbar.rail_low, self.crossbar.rail_high),
            CircuitKind::LifNeuron => (0.0, self.lif.voltage_max),
        }
    }

    /// Output voltage between clocks when nothing happens (pulse circuits).
    pub fn rest_output(&self) -> f64 {
        0.0
    }

    /// Analog-to-binary threshold for pulse outputs.
    pub fn spike_threshold(&self) -> f64 {
        0.5 * self.lif.supply_voltage
    }

    pub fn instantiate(&self, params: &[f64]) -> Result<Circuit> {
        if params.len() != self.n_params() {
            return Err(invalid(format!("expected {} parameters, got {}", self.n_params(), params.len())));
        }
        Ok(match self.kind {
            CircuitKind::CrossbarRow => {
                let k = self.input_dims;
                Circuit::Crossbar(CrossbarRowParams::new(params[..k].to_vec(), params[k], self.crossbar)?)
            }
            CircuitKind::LifNeuron => {
                let mut c = self.lif;
                c.max_spikes_per_step = self.max_spikes_per_step;
                Circuit::Lif(LifParams::new(params[0], params[1], params[2], params[3], c)?)
            }
        })
    }

    /// Stable identifier of the spec; models trained on one spec refuse to
    /// load against another.
    pub fn fingerprint(&self) -> String {
        let canon = serde_json::to_vec(self).expect("spec serializes");
        let digest = Sha256::digest(&canon);
        hex::encode(&digest[..12])
    }
}
