//! Layered ternary network on crossbar rows, with ADC, sigmoid lookup and
//! DAC between layers.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::digits::Digit;
use super::quant::Quantizer;
use crate::dataset::{CircuitKind, CircuitSpec};
use crate::engine::{EngineState, PredictorSet};
use crate::oracle::{trapezoid, window_latency, OutputMode};
use crate::par::Strategy;
use crate::{error::invalid, rng, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnnConfig {
    pub dims: Vec<usize>,
    /// `None` disables quantization.
    pub adc_bits: Option<u32>,
    pub dac_bits: Option<u32>,
    /// Activation `sigmoid(slope * s + offset)` of the summed ADC outputs.
    pub slope: f64,
    pub offset: f64,
    /// Latent weights with `|w|` above this become +-1, the rest 0.
    pub ternary_threshold: f64,
    pub epochs: usize,
    pub batch: usize,
    pub learning_rate: f64,
    /// Softmax temperature applied to output scores during training.
    pub logit_scale: f64,
    pub seed: u64,
}

impl Default for AnnConfig {
    fn default() -> Self {
        AnnConfig {
            dims: vec![64, 32, 10],
            adc_bits: Some(8),
            dac_bits: Some(8),
            slope: 2.0,
            offset: 0.0,
            ternary_threshold: 0.4,
            epochs: 40,
            batch: 32,
            learning_rate: 0.01,
            logit_scale: 3.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnLayer {
    pub n_in: usize,
    pub n_out: usize,
    /// Ternary, row-major `[n_out x n_in]`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Electrical view of the network: the constants the digital path needs.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Electrical {
    k: usize,
    gain: f64,
    bias_ref: f64,
    rails: (f64, f64),
    inputs: (f64, f64),
}

impl Electrical {
    fn of(spec: &CircuitSpec) -> Self {
        let c = &spec.crossbar;
        Electrical {
            k: spec.input_dims,
            gain: c.gain,
            bias_ref: c.bias_reference,
            rails: (c.rail_low, c.rail_high),
            inputs: (spec.input_range[0], spec.input_range[1]),
        }
    }

    fn volts(&self, a: f64) -> f64 {
        self.inputs.0 + (self.inputs.1 - self.inputs.0) * a
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayeredAnn {
    pub spec: CircuitSpec,
    pub layers: Vec<AnnLayer>,
    pub adc: Quantizer,
    pub dac: Quantizer,
    pub slope: f64,
    pub offset: f64,
    /// Per layer: activation table indexed by summed ADC code.
    luts: Vec<Option<Vec<f64>>>,
}

/// One inference.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnOutput {
    pub scores: Vec<f64>,
    pub class: usize,
    pub energy: f64,
    /// Sum over layers of the slowest row.
    pub latency: f64,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Index of the maximum; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

impl LayeredAnn {
    pub fn new(spec: &CircuitSpec, layers: Vec<AnnLayer>, cfg: &AnnConfig) -> Result<Self> {
        if spec.kind != CircuitKind::CrossbarRow {
            return Err(invalid("a layered ANN needs a crossbar-row circuit"));
        }
        if layers.is_empty() {
            return Err(invalid("network has no layers"));
        }
        for (l, w) in layers.iter().enumerate() {
            let ternary = |v: &f64| *v == -1.0 || *v == 0.0 || *v == 1.0;
            if w.weights.len() != w.n_in * w.n_out || w.bias.len() != w.n_out {
                return Err(invalid(format!("layer {l}: weight shape mismatch")));
            }
            if !w.weights.iter().all(ternary) || !w.bias.iter().all(ternary) {
                return Err(invalid(format!("layer {l}: weights must be ternary")));
            }
            if l > 0 && layers[l - 1].n_out != w.n_in {
                return Err(invalid(format!("layer {l}: fan-in {} != previous fan-out", w.n_in)));
            }
        }
        let e = Electrical::of(spec);
        let adc = Quantizer::new(cfg.adc_bits, e.rails.0, e.rails.1);
        let dac = Quantizer::new(cfg.dac_bits, e.inputs.0, e.inputs.1);
        let mut net = LayeredAnn { spec: spec.clone(), layers, adc, dac, slope: cfg.slope, offset: cfg.offset, luts: vec![] };
        net.luts = (0..net.layers.len()).map(|l| net.build_lut(l)).collect();
        Ok(net)
    }

    fn segments(&self, l: usize) -> usize {
        self.layers[l].n_in.div_ceil(self.spec.input_dims)
    }

    /// Smallest summed ADC output of layer `l`.
    fn sum_floor(&self, l: usize) -> f64 {
        self.segments(l) as f64 * self.adc.level(0)
    }

    fn build_lut(&self, l: usize) -> Option<Vec<f64>> {
        let n = self.adc.levels()?;
        let size = self.segments(l) * (n as usize - 1) + 1;
        let (lo, step) = (self.sum_floor(l), self.adc.step());
        Some((0..size).map(|i| sigmoid(self.slope * (lo + i as f64 * step) + self.offset)).collect())
    }

    /// Activation of a summed ADC output.
    fn activate(&self, l: usize, s: f64) -> f64 {
        match &self.luts[l] {
            None => sigmoid(self.slope * s + self.offset),
            Some(t) => {
                let i = ((s - self.sum_floor(l)) / self.adc.step()).round();
                t[(i.max(0.0) as usize).min(t.len() - 1)]
            }
        }
    }

    /// Number of crossbar-row instances.
    pub fn n_rows(&self) -> usize {
        (0..self.layers.len()).map(|l| self.layers[l].n_out * self.segments(l)).sum()
    }

    /// Parameter vectors of every row instance, layer by layer, neuron by
    /// neuron, segment by segment. The bias sits on segment 0.
    pub fn row_params(&self) -> Vec<Vec<f64>> {
        let k = self.spec.input_dims;
        let mut out = Vec::with_capacity(self.n_rows());
        for (l, layer) in self.layers.iter().enumerate() {
            for j in 0..layer.n_out {
                let w = &layer.weights[j * layer.n_in..(j + 1) * layer.n_in];
                for s in 0..self.segments(l) {
                    let mut p = vec![0.0; k + 1];
                    let seg = &w[s * k..((s + 1) * k).min(layer.n_in)];
                    p[..seg.len()].copy_from_slice(seg);
                    p[k] = if s == 0 { layer.bias[j] } else { 0.0 };
                    out.push(p);
                }
            }
        }
        out
    }

    /// DAC voltages of each segment of layer `l` for activations `a`.
    fn segment_inputs(&self, l: usize, a: &[f64]) -> Vec<Vec<f64>> {
        let k = self.spec.input_dims;
        let e = Electrical::of(&self.spec);
        let u: Vec<f64> = a.iter().map(|&v| self.dac.quantize(e.volts(v))).collect();
        (0..self.segments(l))
            .map(|s| {
                let mut x = vec![0.0; k];
                let seg = &u[s * k..((s + 1) * k).min(u.len())];
                x[..seg.len()].copy_from_slice(seg);
                x
            })
            .collect()
    }

    /// Digital post-processing of one layer's row outputs: ADC, segment sum
    /// and, for hidden layers, the activation.
    fn digital(&self, l: usize, row_outputs: &[f64]) -> Vec<f64> {
        let s = self.segments(l);
        let last = l + 1 == self.layers.len();
        row_outputs
            .chunks(s)
            .map(|c| {
                let sum: f64 = c.iter().map(|&o| self.adc.quantize(o)).sum();
                if last {
                    sum
                } else {
                    self.activate(l, sum)
                }
            })
            .collect()
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.layers[0].n_in || !input.iter().all(|v| (0.0..=1.0).contains(v)) {
            return Err(invalid(format!("input must be {} values in [0, 1]", self.layers[0].n_in)));
        }
        Ok(())
    }
}

/// Surrogate inference: layer `l` is one engine step at clock `l` over all
/// its row instances.
pub fn run_ann_inference(net: &LayeredAnn, input: &[f64], predictors: &dyn PredictorSet) -> Result<AnnOutput> {
    net.check_input(input)?;
    let mut eng = EngineState::new(&net.spec, net.row_params())?.with_strategy(Strategy::Sequential);
    let mut a = input.to_vec();
    let mut first = 0;
    let mut energy = 0.0;
    let mut latency = 0.0;
    for l in 0..net.layers.len() {
        let segs = net.segments(l);
        let n = net.layers[l].n_out * segs;
        let ids: Vec<usize> = (first..first + n).collect();
        let seg_x = net.segment_inputs(l, &a);
        let xs: Vec<Vec<f64>> = (0..n).map(|r| seg_x[r % segs].clone()).collect();
        let r = eng.step(l as u64, &ids, &xs, predictors)?;
        energy += r.energy.iter().sum::<f64>();
        latency += r.latency.iter().copied().fold(0.0, f64::max);
        a = net.digital(l, &r.output);
        first += n;
    }
    energy += eng.flush(net.layers.len() as u64, predictors)?.energy.iter().sum::<f64>();
    Ok(AnnOutput { class: argmax(&a), scores: a, energy, latency })
}

/// Reference inference by transient simulation of every row over the whole
/// inference window.
pub fn run_ann_oracle(net: &LayeredAnn, input: &[f64]) -> Result<AnnOutput> {
    net.check_input(input)?;
    let grid = net.spec.grid();
    let s = grid.substeps;
    let n_layers = net.layers.len();
    let eps = net.spec.output_change_epsilon;
    let params = net.row_params();
    let zero = vec![0.0; net.spec.input_dims];
    let mut a = input.to_vec();
    let mut first = 0;
    let (mut energy, mut latency) = (0.0, 0.0);
    for l in 0..n_layers {
        let segs = net.segments(l);
        let n = net.layers[l].n_out * segs;
        let seg_x = net.segment_inputs(l, &a);
        let mut outputs = Vec::with_capacity(n);
        let mut slowest = 0.0f64;
        for r in 0..n {
            let c = net.spec.instantiate(&params[first + r])?;
            let x = &seg_x[r % segs];
            let clocks: Vec<&[f64]> = (0..n_layers).map(|k| if k < l { &zero[..] } else { &x[..] }).collect();
            let tr = c.replay(c.rest(), &zero, &clocks, &grid);
            energy += trapezoid(&tr.power, grid.dt());
            let window = &tr.output[l * s..=(l + 1) * s];
            debug_assert_eq!(c.output_mode(), OutputMode::Level);
            outputs.push(window[s]);
            slowest = slowest.max(window_latency(window, grid.dt(), OutputMode::Level.latency_mode(), eps).unwrap_or(0.0));
        }
        latency += slowest;
        a = net.digital(l, &outputs);
        first += n;
    }
    Ok(AnnOutput { class: argmax(&a), scores: a, energy, latency })
}

/// Latent-weight trainer with straight-through ternarization over the ideal
/// (unquantized, fully settled) crossbar math.
pub fn train_ann(spec: &CircuitSpec, train: &[Digit], cfg: &AnnConfig) -> Result<LayeredAnn> {
    if cfg.dims.len() < 2 || cfg.dims.iter().any(|&d| d == 0) {
        return Err(invalid("dims needs at least an input and an output size"));
    }
    if train.is_empty() || train.iter().any(|d| d.pixels.len() != cfg.dims[0]) {
        return Err(invalid("training images must match the input size"));
    }
    let e = Electrical::of(spec);
    let mut r = rng::sub_rng(cfg.seed, "ann", 0);
    let n_layers = cfg.dims.len() - 1;
    let mut latent: Vec<(Vec<f64>, Vec<f64>)> = (0..n_layers)
        .map(|l| {
            let w = (0..cfg.dims[l] * cfg.dims[l + 1]).map(|_| r.gen_range(-1.0..1.0)).collect();
            let b = (0..cfg.dims[l + 1]).map(|_| r.gen_range(-1.0..1.0)).collect();
            (w, b)
        })
        .collect();
    let mut adam: Vec<(Adam, Adam)> =
        latent.iter().map(|(w, b)| (Adam::new(w.len()), Adam::new(b.len()))).collect();
    let tern = |v: f64| if v > cfg.ternary_threshold { 1.0 } else if v < -cfg.ternary_threshold { -1.0 } else { 0.0 };
    let mut order: Vec<usize> = (0..train.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut r);
        for batch in order.chunks(cfg.batch.max(1)) {
            let layers: Vec<AnnLayer> = latent
                .iter()
                .enumerate()
                .map(|(l, (w, b))| AnnLayer {
                    n_in: cfg.dims[l],
                    n_out: cfg.dims[l + 1],
                    weights: w.iter().map(|&v| tern(v)).collect(),
                    bias: b.iter().map(|&v| tern(v)).collect(),
                })
                .collect();
            let mut grads: Vec<(Vec<f64>, Vec<f64>)> =
                latent.iter().map(|(w, b)| (vec![0.0; w.len()], vec![0.0; b.len()])).collect();
            for &i in batch {
                backprop(&e, cfg, &layers, &train[i], &mut grads);
            }
            let scale = 1.0 / batch.len() as f64;
            for ((lw, lb), ((gw, gb), (aw, ab))) in latent.iter_mut().zip(grads.iter().zip(adam.iter_mut())) {
                aw.update(lw, gw, scale, cfg.learning_rate);
                ab.update(lb, gb, scale, cfg.learning_rate);
            }
        }
    }
    let layers = latent
        .iter()
        .enumerate()
        .map(|(l, (w, b))| AnnLayer {
            n_in: cfg.dims[l],
            n_out: cfg.dims[l + 1],
            weights: w.iter().map(|&v| tern(v)).collect(),
            bias: b.iter().map(|&v| tern(v)).collect(),
        })
        .collect();
    LayeredAnn::new(spec, layers, cfg)
}

/// Ideal forward pass keeping what backprop needs: per layer the input
/// volts and per-(neuron, segment) pre-clamp sums.
fn backprop(e: &Electrical, cfg: &AnnConfig, layers: &[AnnLayer], d: &Digit, grads: &mut [(Vec<f64>, Vec<f64>)]) {
    let k = e.k;
    let mut acts = vec![d.pixels.clone()];
    let mut pre: Vec<Vec<f64>> = Vec::new();
    for (l, layer) in layers.iter().enumerate() {
        let u: Vec<f64> = acts[l].iter().map(|&a| e.volts(a)).collect();
        let segs = layer.n_in.div_ceil(k);
        let mut z = vec![0.0; layer.n_out * segs];
        let mut out = vec![0.0; layer.n_out];
        for j in 0..layer.n_out {
            let w = &layer.weights[j * layer.n_in..(j + 1) * layer.n_in];
            for s in 0..segs {
                let hi = ((s + 1) * k).min(layer.n_in);
                let mut acc: f64 = (s * k..hi).map(|i| w[i] * u[i]).sum();
                if s == 0 {
                    acc += layer.bias[j] * e.bias_ref;
                }
                z[j * segs + s] = e.gain * acc;
                out[j] += (e.gain * acc).clamp(e.rails.0, e.rails.1);
            }
        }
        pre.push(z);
        if l + 1 < layers.len() {
            out.iter_mut().for_each(|s| *s = sigmoid(cfg.slope * *s + cfg.offset));
        }
        acts.push(out);
    }
    // softmax cross-entropy on scaled scores
    let scores = &acts[layers.len()];
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ex: Vec<f64> = scores.iter().map(|&s| (cfg.logit_scale * (s - m)).exp()).collect();
    let tot: f64 = ex.iter().sum();
    let mut g: Vec<f64> =
        ex.iter().enumerate().map(|(c, &v)| cfg.logit_scale * (v / tot - if c == d.label { 1.0 } else { 0.0 })).collect();
    for l in (0..layers.len()).rev() {
        let layer = &layers[l];
        let segs = layer.n_in.div_ceil(k);
        if l + 1 < layers.len() {
            for (gj, &a) in g.iter_mut().zip(&acts[l + 1]) {
                *gj *= cfg.slope * a * (1.0 - a);
            }
        }
        let u: Vec<f64> = acts[l].iter().map(|&a| e.volts(a)).collect();
        let mut gu = vec![0.0; layer.n_in];
        let (gw, gb) = &mut grads[l];
        for j in 0..layer.n_out {
            for s in 0..segs {
                let z = pre[l][j * segs + s];
                if z <= e.rails.0 || z >= e.rails.1 {
                    continue;
                }
                let dz = g[j] * e.gain;
                for i in s * k..((s + 1) * k).min(layer.n_in) {
                    gw[j * layer.n_in + i] += dz * u[i];
                    gu[i] += dz * layer.weights[j * layer.n_in + i];
                }
                if s == 0 {
                    gb[j] += dz * e.bias_ref;
                }
            }
        }
        g = gu.iter().map(|&v| v * (e.inputs.1 - e.inputs.0)).collect();
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Adam { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    /// One step on latent weights clipped to `[-1, 1]`.
    fn update(&mut self, w: &mut [f64], g: &[f64], scale: f64, lr: f64) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        self.t += 1;
        let (c1, c2) = (1.0 - B1.powi(self.t), 1.0 - B2.powi(self.t));
        for i in 0..w.len() {
            let gi = g[i] * scale;
            self.m[i] = B1 * self.m[i] + (1.0 - B1) * gi;
            self.v[i] = B2 * self.v[i] + (1.0 - B2) * gi * gi;
            w[i] = (w[i] - lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + 1e-8)).clamp(-1.0, 1.0);
        }
    }
}

/// Fraction of images whose predicted class matches the label.
pub fn accuracy(classes: &[usize], data: &[Digit]) -> f64 {
    let hits = classes.iter().zip(data).filter(|(c, d)| **c == d.label).count();
    hits as f64 / data.len().max(1) as f64
}
