use ndarray::Array2;

use crate::dataset::CircuitSpec;
use crate::models::{ModelBundle, Predictor, RawEvent};
use crate::oracle::{window_latency, Boundary, OutputMode};
use crate::par::{self, Strategy};
use crate::{oracle::trapezoid, Result};

/// One event the engine asks predictions for.
#[derive(Debug, Clone, Copy)]
pub struct Query<'a> {
    /// Input of the event; all zero for idle periods.
    pub x: &'a [f64],
    pub v: f64,
    pub clocks: u64,
    /// Event length in seconds.
    pub tau: f64,
    pub params: &'a [f64],
    pub o_prev: f64,
    /// Input in force during the clock before the event. Only the oracle
    /// needs it: a held crossbar input keeps drawing static power.
    pub before: &'a [f64],
    pub idle: bool,
}

/// Anything that answers the five per-event predictors. Results are in SI
/// units, one vector per requested predictor, rows in query order.
pub trait PredictorSet: Sync {
    fn predict(&self, which: &[Predictor], queries: &[Query], strategy: Strategy) -> Result<Vec<Vec<f64>>>;
}

impl PredictorSet for ModelBundle {
    fn predict(&self, which: &[Predictor], queries: &[Query], strategy: Strategy) -> Result<Vec<Vec<f64>>> {
        which
            .iter()
            .map(|&p| {
                let model = self.get(p);
                let schema = &model.schema;
                let w = schema.width();
                let mut z = Array2::<f64>::zeros((queries.len(), w));
                for (q, mut row) in queries.iter().zip(z.rows_mut()) {
                    let e = RawEvent { x: q.x, v_start: q.v, tau: q.tau, params: q.params, o_prev: q.o_prev };
                    schema.features_into(&e, row.as_slice_mut().expect("standard layout"));
                }
                model.predict_batch_with(strategy, z.view())
            })
            .collect()
    }
}

/// Test double answering every query by replaying the analytical simulator
/// from the query's boundary conditions.
#[derive(Debug, Clone)]
pub struct OraclePredictors {
    spec: CircuitSpec,
}

pub fn oracle_predictors(spec: &CircuitSpec) -> OraclePredictors {
    OraclePredictors { spec: spec.clone() }
}

/// Oracle labels of one event, indexed like [`Predictor::ALL`].
fn oracle_answer(spec: &CircuitSpec, q: &Query) -> Result<[f64; 5]> {
    let circuit = spec.instantiate(q.params)?;
    let grid = spec.grid();
    let window = if q.idle { circuit.idle_input(q.before) } else { q.x.to_vec() };
    let clocks: Vec<&[f64]> = (0..q.clocks).map(|_| window.as_slice()).collect();
    let s = circuit.replay(Boundary { output: q.o_prev, state: q.v }, q.before, &clocks, &grid);
    let o = match spec.output_mode() {
        OutputMode::Level => s.output[s.len() - 1],
        OutputMode::Pulse => s.output.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    };
    let v = s.state[s.len() - 1];
    let e = trapezoid(&s.power, grid.dt());
    let l = window_latency(&s.output, grid.dt(), spec.output_mode().latency_mode(), spec.output_change_epsilon).unwrap_or(0.0);
    Ok([o, v, e, e, l])
}

impl PredictorSet for OraclePredictors {
    fn predict(&self, which: &[Predictor], queries: &[Query], strategy: Strategy) -> Result<Vec<Vec<f64>>> {
        let answers = par::map(strategy, queries, |q| oracle_answer(&self.spec, q));
        let answers: Vec<[f64; 5]> = answers.into_iter().collect::<Result<_>>()?;
        Ok(which.iter().map(|p| answers.iter().map(|a| a[p.index()]).collect()).collect())
    }
}
