use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::Predictor;
use crate::dataset::{CircuitSpec, Dataset, EventRecord, Split};

/// Feature layout `(x.., v_start, tau, p..)`, plus `o_prev` for the
/// dynamic-energy and latency predictors, with per-feature normalization
/// fitted on the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSchema {
    pub predictor: Predictor,
    pub x_width: usize,
    pub n_params: usize,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Unnormalized event description, shared by dataset records and engine
/// queries.
#[derive(Debug, Clone, Copy)]
pub struct RawEvent<'a> {
    pub x: &'a [f64],
    pub v_start: f64,
    pub tau: f64,
    pub params: &'a [f64],
    pub o_prev: f64,
}

impl<'a> From<&'a EventRecord> for RawEvent<'a> {
    fn from(r: &'a EventRecord) -> Self {
        RawEvent { x: &r.x, v_start: r.v_start, tau: r.tau, params: &r.params, o_prev: r.o_prev }
    }
}

impl FeatureSchema {
    /// Identity normalization.
    pub fn unfitted(spec: &CircuitSpec, predictor: Predictor) -> Self {
        let mut s = FeatureSchema {
            predictor,
            x_width: spec.x_width(),
            n_params: spec.n_params(),
            mean: Vec::new(),
            std: Vec::new(),
        };
        let w = s.width();
        s.mean = vec![0.0; w];
        s.std = vec![1.0; w];
        s
    }

    /// Fit mean and standard deviation on `records`; constant features get
    /// a standard deviation of 1.
    pub fn fit<'a>(spec: &CircuitSpec, predictor: Predictor, records: impl IntoIterator<Item = &'a EventRecord>) -> Self {
        let mut s = Self::unfitted(spec, predictor);
        let w = s.width();
        let mut sum = vec![0.0; w];
        let mut sq = vec![0.0; w];
        let mut n = 0usize;
        let mut buf = vec![0.0; w];
        let rows: Vec<&EventRecord> = records.into_iter().collect();
        for r in &rows {
            s.raw_into(&RawEvent::from(*r), &mut buf);
            for (j, v) in buf.iter().enumerate() {
                sum[j] += v;
            }
            n += 1;
        }
        if n == 0 {
            return s;
        }
        let mean: Vec<f64> = sum.iter().map(|v| v / n as f64).collect();
        for r in &rows {
            s.raw_into(&RawEvent::from(*r), &mut buf);
            for (j, v) in buf.iter().enumerate() {
                sq[j] += (v - mean[j]) * (v - mean[j]);
            }
        }
        s.std = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| {
                let sd = (q / n as f64).sqrt();
                if sd.is_finite() && sd > 1e-12 * m.abs().max(1.0) {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        s.mean = mean;
        s
    }

    pub fn width(&self) -> usize {
        self.x_width + 2 + self.n_params + usize::from(self.predictor.uses_o_prev())
    }

    pub fn names(&self) -> Vec<String> {
        let mut v: Vec<String> = (0..self.x_width).map(|i| format!("x{i}")).collect();
        v.push("v_start".into());
        v.push("tau".into());
        v.extend((0..self.n_params).map(|i| format!("p{i}")));
        if self.predictor.uses_o_prev() {
            v.push("o_prev".into());
        }
        v
    }

    /// Raw layout; `tau` in nanoseconds.
    pub fn raw_into(&self, e: &RawEvent, out: &mut [f64]) {
        let k = self.x_width;
        out[..k].copy_from_slice(e.x);
        out[k] = e.v_start;
        out[k + 1] = e.tau * 1e9;
        out[k + 2..k + 2 + self.n_params].copy_from_slice(e.params);
        if self.predictor.uses_o_prev() {
            out[k + 2 + self.n_params] = e.o_prev;
        }
    }

    pub fn normalize_in_place(&self, row: &mut [f64]) {
        for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
            *v = (*v - m) / s;
        }
    }

    /// Normalized features of one event.
    pub fn features_into(&self, e: &RawEvent, out: &mut [f64]) {
        self.raw_into(e, out);
        self.normalize_in_place(out);
    }
}

pub fn build_features(record: &EventRecord, schema: &FeatureSchema) -> Vec<f64> {
    let mut out = vec![0.0; schema.width()];
    schema.features_into(&RawEvent::from(record), &mut out);
    out
}

/// Normalized features and scaled targets of one predictor's training view.
#[derive(Debug, Clone)]
pub struct View {
    pub x: Array2<f64>,
    pub y: Vec<f64>,
}

impl View {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn from_records<'a>(schema: &FeatureSchema, records: impl IntoIterator<Item = &'a EventRecord>) -> Self {
        let p = schema.predictor;
        let rows: Vec<&EventRecord> = records.into_iter().filter(|r| p.accepts(r.kind)).collect();
        let w = schema.width();
        let mut x = Array2::zeros((rows.len(), w));
        let mut y = Vec::with_capacity(rows.len());
        for (i, r) in rows.iter().enumerate() {
            let mut row = x.row_mut(i);
            schema.features_into(&RawEvent::from(*r), row.as_slice_mut().expect("row-major"));
            y.push(p.scaled_target(r).expect("filtered view has targets"));
        }
        View { x, y }
    }
}

/// Schema fitted on the training split and the train/val/test views of one
/// predictor.
pub fn views(ds: &Dataset, predictor: Predictor) -> (FeatureSchema, View, View, View) {
    let schema = FeatureSchema::fit(
        &ds.spec,
        predictor,
        ds.records_in(Split::Train).filter(|r| predictor.accepts(r.kind)),
    );
    let v = |s| View::from_records(&schema, ds.records_in(s));
    let (tr, va, te) = (v(Split::Train), v(Split::Val), v(Split::Test));
    (schema, tr, va, te)
}
