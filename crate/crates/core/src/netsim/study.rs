//! Error propagation with predicted vs. observed state, and the
//! runtime-scaling comparison against the transient simulator.

use std::collections::HashMap;
use std::io::Write;
use std::time::Instant;

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::dataset::{decompose_events, run_characterization, CircuitKind, CircuitSpec, EventKind, EventRecord, Generation};
use crate::engine::{characterization_schedule, run_sequence, run_sequence_observed, EngineState, LogRow, PredictorSet};
use crate::models::{mape, mse, Predictor, MAPE_FLOOR};
use crate::oracle::trapezoid;
use crate::par::{self, Strategy};
use crate::{error::invalid, Error, Result};

/// Least-squares trend of a per-timestep series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Trend {
    pub points: usize,
    pub slope: f64,
    pub stderr: f64,
    /// `slope / stderr`.
    pub t: f64,
    /// One-sided 95% critical value with `points - 2` degrees of freedom.
    pub t_crit: f64,
    /// Fraction of consecutive defined points where the series rises.
    pub frac_increasing: f64,
    pub first_quartile_mean: f64,
    pub last_quartile_mean: f64,
}

impl Trend {
    /// The hypothesis `slope <= 0` is not rejected at 95%.
    pub fn slope_not_positive(&self) -> bool {
        !(self.t > self.t_crit)
    }

    pub fn quartile_ratio(&self) -> f64 {
        self.last_quartile_mean / self.first_quartile_mean
    }
}

/// Trend of `series` over its index, skipping NaN entries.
pub fn trend(series: &[f64]) -> Trend {
    let pts: Vec<(f64, f64)> = series.iter().enumerate().filter(|(_, y)| y.is_finite()).map(|(k, &y)| (k as f64, y)).collect();
    let n = pts.len();
    let nan = f64::NAN;
    let mean = |v: &[(f64, f64)]| if v.is_empty() { nan } else { v.iter().map(|p| p.1).sum::<f64>() / v.len() as f64 };
    let q = n / 4;
    let (first, last) = if q == 0 { (nan, nan) } else { (mean(&pts[..q]), mean(&pts[n - q..])) };
    let rising = pts.windows(2).filter(|w| w[1].1 > w[0].1).count();
    let frac = if n < 2 { nan } else { rising as f64 / (n - 1) as f64 };
    if n < 3 {
        return Trend { points: n, slope: nan, stderr: nan, t: nan, t_crit: nan, frac_increasing: frac, first_quartile_mean: first, last_quartile_mean: last };
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n as f64;
    let my = mean(&pts);
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let sse: f64 = pts.iter().map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2)).sum();
    let df = (n - 2) as f64;
    let stderr = (sse / df / sxx).sqrt();
    let t = if stderr > 0.0 {
        slope / stderr
    } else if slope > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    let t_crit = StudentsT::new(0.0, 1.0, df).expect("df > 0").inverse_cdf(0.95);
    Trend { points: n, slope, stderr, t, t_crit, frac_increasing: frac, first_quartile_mean: first, last_quartile_mean: last }
}

/// Errors of one predictor in one inference mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeErrors {
    /// Scaled units as in the model metrics (V, fJ, ps).
    pub mse: f64,
    pub mape: f64,
    /// Per-timestep MSE over events ending in that step, divided by the
    /// variance of the truth over all events; NaN where no event ends.
    pub series: Vec<f64>,
    pub trend: Trend,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictorStudy {
    pub predictor: Predictor,
    pub events: usize,
    pub predicted: ModeErrors,
    pub observed: ModeErrors,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyResult {
    pub n_circuits: usize,
    pub n_steps: usize,
    pub predictors: Vec<PredictorStudy>,
    /// Spike agreement on input-change events (pulse circuits only).
    pub spike_accuracy: Option<(f64, f64)>,
}

impl StudyResult {
    pub fn get(&self, p: Predictor) -> &PredictorStudy {
        &self.predictors[p.index()]
    }
}

/// The value the engine reported for `p` on the event logged as `row`.
fn reported(p: Predictor, row: &LogRow) -> f64 {
    match p {
        Predictor::Output => row.output.unwrap_or(f64::NAN),
        Predictor::State => row.state,
        Predictor::DynamicEnergy | Predictor::StaticEnergy => row.energy,
        Predictor::Latency => row.latency.unwrap_or(0.0),
    }
}

fn truth_of(p: Predictor, r: &EventRecord) -> f64 {
    match p {
        Predictor::Latency => r.latency.unwrap_or(0.0),
        _ => p.target(r).expect("predictor accepts the event"),
    }
}

/// Match every labelled event to the engine's log row for it.
fn join<'a>(rows: &'a [LogRow], records: &[EventRecord]) -> Result<Vec<&'a LogRow>> {
    let idx: HashMap<(usize, u64), &LogRow> = rows.iter().map(|r| ((r.circuit, r.start_clock), r)).collect();
    records
        .iter()
        .map(|r| {
            let row = idx.get(&(r.run_id as usize, r.start_clock)).copied();
            row.filter(|row| row.clocks == r.clocks).ok_or_else(|| {
                Error::Schema(format!("no engine event for circuit {} at clock {} ({} clocks)", r.run_id, r.start_clock, r.clocks))
            })
        })
        .collect()
}

fn mode_errors(p: Predictor, records: &[&EventRecord], rows: &[&LogRow], n_steps: usize) -> Result<ModeErrors> {
    let scale = p.target_scale();
    let y: Vec<f64> = records.iter().map(|r| truth_of(p, r) * scale).collect();
    let yhat: Vec<f64> = rows.iter().map(|r| reported(p, r) * scale).collect();
    let m = y.iter().sum::<f64>() / y.len() as f64;
    let var = y.iter().map(|v| (v - m).powi(2)).sum::<f64>() / y.len() as f64;
    let mut sum = vec![0.0; n_steps];
    let mut cnt = vec![0usize; n_steps];
    for ((r, a), b) in records.iter().zip(&yhat).zip(&y) {
        let k = (r.start_clock + r.clocks - 1) as usize;
        sum[k] += (a - b).powi(2);
        cnt[k] += 1;
    }
    let series: Vec<f64> = sum
        .iter()
        .zip(&cnt)
        .map(|(&s, &c)| if c == 0 { f64::NAN } else if var > 0.0 { s / c as f64 / var } else { s / c as f64 })
        .collect();
    Ok(ModeErrors { mse: mse(&yhat, &y)?, mape: mape(&yhat, &y, MAPE_FLOOR * scale)?, trend: trend(&series), series })
}

/// Run one layer of independent circuits (one random testbench each) twice:
/// feeding back predicted state, and with the transient simulator's state
/// substituted after every step. Errors are measured against the labelled
/// events of the same runs.
pub fn error_propagation_study(spec: &CircuitSpec, g: &Generation, predictors: &dyn PredictorSet, strategy: Strategy) -> Result<StudyResult> {
    let runs = run_characterization(spec, g, strategy)?;
    let records: Vec<EventRecord> = par::map(strategy, &runs, |(tb, trace)| decompose_events(trace, tb, spec))
        .into_iter()
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let tbs: Vec<_> = runs.iter().map(|r| r.0.clone()).collect();
    let (params, schedule) = characterization_schedule(spec, &tbs)?;
    let period = spec.clock_period;

    let mut eng = EngineState::new(spec, params.clone())?.with_strategy(strategy);
    let p_rows = run_sequence(&mut eng, &schedule, predictors)?.log(period);
    let truth = |n: usize, k: u64| {
        let tr = &runs[n].1;
        tr.state[tr.edge(k as usize)]
    };
    let mut eng = EngineState::new(spec, params)?.with_strategy(strategy);
    let o_rows = run_sequence_observed(&mut eng, &schedule, predictors, &truth)?.log(period);

    let p_join = join(&p_rows, &records)?;
    let o_join = join(&o_rows, &records)?;
    let mut out = Vec::new();
    for p in Predictor::ALL {
        let sel: Vec<usize> = (0..records.len()).filter(|&i| p.accepts(records[i].kind)).collect();
        if sel.is_empty() {
            return Err(invalid(format!("no {} events in the study", p.name())));
        }
        let recs: Vec<&EventRecord> = sel.iter().map(|&i| &records[i]).collect();
        let pr: Vec<&LogRow> = sel.iter().map(|&i| p_join[i]).collect();
        let or: Vec<&LogRow> = sel.iter().map(|&i| o_join[i]).collect();
        out.push(PredictorStudy {
            predictor: p,
            events: sel.len(),
            predicted: mode_errors(p, &recs, &pr, g.n_steps)?,
            observed: mode_errors(p, &recs, &or, g.n_steps)?,
        });
    }
    let spike_accuracy = (spec.kind == CircuitKind::LifNeuron).then(|| {
        let thr = spec.spike_threshold();
        let sel: Vec<usize> = (0..records.len()).filter(|&i| records[i].kind != EventKind::E2).collect();
        let acc = |rows: &[&LogRow]| {
            let ok = sel.iter().filter(|&&i| (rows[i].output.unwrap_or(0.0) > thr) == (records[i].o > thr)).count();
            ok as f64 / sel.len().max(1) as f64
        };
        (acc(&p_join), acc(&o_join))
    });
    Ok(StudyResult { n_circuits: g.n_runs, n_steps: g.n_steps, predictors: out, spike_accuracy })
}

/// One row of the scaling table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub n: usize,
    pub steps: usize,
    pub oracle_seconds: f64,
    pub engine_seconds: f64,
    pub speedup: f64,
    pub oracle_energy: f64,
    pub engine_energy: f64,
}

/// Wall-clock the transient simulator and the engine on the same random
/// layers of `n` circuits for each `n` in `sizes`.
pub fn runtime_benchmark(
    spec: &CircuitSpec,
    sizes: &[usize],
    steps: usize,
    alpha: f64,
    predictors: &dyn PredictorSet,
    seed: u64,
    strategy: Strategy,
) -> Result<Vec<BenchRow>> {
    if sizes.is_empty() || sizes.windows(2).any(|w| w[0] >= w[1]) || sizes[0] == 0 {
        return Err(invalid("sizes must be positive and strictly ascending"));
    }
    let mut out = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let g = Generation { n_runs: n, n_steps: steps, alpha, seed };
        let tbs = (0..n as u64).map(|i| g.testbench(spec, i)).collect::<Result<Vec<_>>>()?;
        let inputs = tbs.iter().map(|t| t.steps()).collect::<Result<Vec<_>>>()?;
        let (params, schedule) = characterization_schedule(spec, &tbs)?;

        let grid = spec.grid();
        let t0 = Instant::now();
        let energies = par::map_range(strategy, n, |i| -> Result<f64> {
            let trace = spec.instantiate(&tbs[i].params)?.simulate(&inputs[i], &grid)?;
            Ok(trapezoid(&trace.power, trace.dt))
        });
        let oracle_seconds = t0.elapsed().as_secs_f64();
        let oracle_energy = energies.into_iter().sum::<Result<f64>>()?;

        let t0 = Instant::now();
        let mut eng = EngineState::new(spec, params)?.with_strategy(strategy);
        let seq = run_sequence(&mut eng, &schedule, predictors)?;
        let engine_seconds = t0.elapsed().as_secs_f64();
        out.push(BenchRow {
            n,
            steps,
            oracle_seconds,
            engine_seconds,
            speedup: oracle_seconds / engine_seconds,
            oracle_energy,
            engine_energy: seq.total_energy,
        });
    }
    Ok(out)
}

/// Scaling table without timings (`n, steps, oracle_energy, engine_energy`),
/// so the body is reproducible; timings go to [`write_bench_timing`].
pub fn write_bench(rows: &[BenchRow], sink: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["n", "steps", "oracle_energy", "engine_energy"])?;
    for r in rows {
        w.write_record([r.n.to_string(), r.steps.to_string(), r.oracle_energy.to_string(), r.engine_energy.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_bench_timing(rows: &[BenchRow], sink: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Long-format series: `predictor,mode,step,nmse`.
pub fn write_study_series(s: &StudyResult, sink: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["predictor", "mode", "step", "nmse"])?;
    for p in &s.predictors {
        for (mode, e) in [("predicted", &p.predicted), ("observed", &p.observed)] {
            for (k, v) in e.series.iter().enumerate() {
                w.write_record([p.predictor.name(), mode, &k.to_string(), &v.to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    predictor: &'a str,
    mode: &'a str,
    events: usize,
    mse: f64,
    mape: f64,
    slope: f64,
    slope_stderr: f64,
    slope_t: f64,
    t_crit: f64,
    frac_increasing: f64,
    first_quartile: f64,
    last_quartile: f64,
}

pub fn write_study_summary(s: &StudyResult, sink: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    for p in &s.predictors {
        for (mode, e) in [("predicted", &p.predicted), ("observed", &p.observed)] {
            w.serialize(SummaryRow {
                predictor: p.predictor.name(),
                mode,
                events: p.events,
                mse: e.mse,
                mape: e.mape,
                slope: e.trend.slope,
                slope_stderr: e.trend.stderr,
                slope_t: e.trend.t,
                t_crit: e.trend.t_crit,
                frac_increasing: e.trend.frac_increasing,
                first_quartile: e.trend.first_quartile_mean,
                last_quartile: e.trend.last_quartile_mean,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Per-inference workload result.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InferenceRow {
    pub image: usize,
    pub truth: usize,
    pub class: usize,
    pub energy: f64,
    /// Critical-path latency where the network defines one.
    pub latency: Option<f64>,
}

pub fn write_inferences(rows: &[InferenceRow], sink: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
