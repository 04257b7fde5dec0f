use rand::seq::SliceRandom;
use rand::Rng as _;

use super::*;
use crate::dataset::{characterize_events, EventKind, EventRecord, Generation};
use crate::rng;

/// Deterministic stand-in whose answers depend on every query field.
struct Synthetic;

impl PredictorSet for Synthetic {
    fn predict(&self, which: &[Predictor], queries: &[Query], _: Strategy) -> Result<Vec<Vec<f64>>> {
        Ok(which
            .iter()
            .map(|p| {
                queries
                    .iter()
                    .map(|q| {
                        let s: f64 = q.x.iter().sum::<f64>() + q.params.iter().sum::<f64>();
                        let k = p.index() as f64;
                        (s * 0.37 + q.v * 0.5 + q.tau * 1e8 + q.o_prev * 0.11 + k).sin().abs() * 1e-12
                    })
                    .collect()
            })
            .collect())
    }
}

struct Constant([f64; 5]);

impl PredictorSet for Constant {
    fn predict(&self, which: &[Predictor], queries: &[Query], _: Strategy) -> Result<Vec<Vec<f64>>> {
        Ok(which.iter().map(|p| vec![self.0[p.index()]; queries.len()]).collect())
    }
}

fn crossbar_params(n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut r = rng::rng(seed);
    (0..n).map(|_| (0..33).map(|_| r.gen_range(-1i32..=1) as f64).collect()).collect()
}

fn crossbar_input(r: &mut rng::Rng) -> Vec<f64> {
    (0..32).map(|_| r.gen_range(-0.8..=0.8)).collect()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

/// Rows of the engine log that correspond to dataset events of run `i`.
fn compare_with_labels(spec: &CircuitSpec, n_runs: usize, n_steps: usize) {
    let g = Generation { n_runs, n_steps, alpha: 0.8, seed: 5 };
    let records = characterize_events(spec, &g, Strategy::Sequential).unwrap();
    let tbs: Vec<Testbench> = (0..n_runs as u64).map(|i| g.testbench(spec, i).unwrap()).collect();
    let (params, schedule) = characterization_schedule(spec, &tbs).unwrap();
    let mut eng = EngineState::new(spec, params).unwrap();
    let res = run_sequence(&mut eng, &schedule, &oracle_predictors(spec)).unwrap();
    let mut rows = res.log(spec.clock_period);
    rows.sort_by_key(|r| (r.circuit, r.start_clock));
    let mut recs: Vec<&EventRecord> = records.iter().collect();
    recs.sort_by_key(|r| (r.run_id, r.start_clock));
    assert_eq!(rows.len(), recs.len());
    let scale = spec.output_range().1.max(1.0);
    for (row, rec) in rows.iter().zip(&recs) {
        assert_eq!((row.circuit as u64, row.start_clock, row.clocks), (rec.run_id, rec.start_clock, rec.clocks));
        let path = match rec.kind {
            EventKind::E1 => Path::Dynamic,
            EventKind::E3 => Path::Static,
            EventKind::E2 => row.path,
        };
        assert_eq!(row.path, path, "{rec:?}");
        assert!(rel(row.energy, rec.energy) <= 1e-9, "{} vs {}", row.energy, rec.energy);
        assert!((row.state - rec.v_end).abs() <= 1e-6 * scale);
        if let Some(o) = row.output {
            assert!((o - rec.o).abs() <= 1e-9 * scale);
        }
        if rec.kind == EventKind::E1 {
            assert!(rel(row.latency.unwrap(), rec.latency.unwrap()) <= 1e-9);
        }
    }
    let total: f64 = records.iter().map(|r| r.energy).sum();
    assert!(rel(res.total_energy, total) <= 1e-9);
}

#[test]
fn oracle_engine_reproduces_crossbar_labels() {
    compare_with_labels(&CircuitSpec::crossbar_row(), 6, 60);
}

#[test]
fn oracle_engine_reproduces_lif_labels() {
    compare_with_labels(&CircuitSpec::lif_neuron(), 8, 80);
}

#[test]
fn first_step_has_no_idle_batch() {
    let spec = CircuitSpec::crossbar_row();
    let mut eng = EngineState::new(&spec, crossbar_params(1, 1)).unwrap();
    let r = eng.step(0, &[0], &[vec![0.5; 32]], &Synthetic).unwrap();
    assert_eq!(r.idle_clocks, vec![0]);
    assert_eq!(r.idle_energy, vec![0.0]);
    assert_eq!(eng.last_update(0), Some(0));
}

#[test]
fn idle_gap_is_merged_into_one_entry() {
    let spec = CircuitSpec::crossbar_row();
    let mut eng = EngineState::new(&spec, crossbar_params(1, 1)).unwrap();
    let x = vec![vec![0.1; 32]];
    eng.step(0, &[0], &x, &Synthetic).unwrap();
    // idle through clocks 1, 2, 3; tau = t - t' - T
    let r = eng.step(4, &[0], &x, &Synthetic).unwrap();
    assert_eq!(r.idle_clocks, vec![3]);
    assert!(r.idle_energy[0] > 0.0);
}

#[test]
fn unchanged_output_takes_static_path() {
    let spec = CircuitSpec::crossbar_row();
    let mut params = vec![0.0; 33];
    params[0] = 1.0;
    let mut eng = EngineState::new(&spec, vec![params]).unwrap();
    let oracle = oracle_predictors(&spec);
    let mut x = vec![0.0; 32];
    x[0] = 0.6;
    let r = eng.step(0, &[0], &[x.clone()], &oracle).unwrap();
    assert!(r.dynamic[0] && r.latency[0] > 0.0);
    // zero-weight input changes, output does not
    x[5] = -0.3;
    let r = eng.step(1, &[0], &[x], &oracle).unwrap();
    assert!(!r.dynamic[0]);
    assert_eq!(r.latency[0], 0.0);
}

#[test]
fn permutation_invariance() {
    let spec = CircuitSpec::crossbar_row();
    let n = 40;
    let params = crossbar_params(n, 3);
    let mut r = rng::rng(9);
    let xs: Vec<Vec<f64>> = (0..n).map(|_| crossbar_input(&mut r)).collect();
    let ids: Vec<usize> = (0..n).collect();
    let mut base = EngineState::new(&spec, params.clone()).unwrap();
    base.step(0, &ids, &xs, &Synthetic).unwrap();
    let xs2: Vec<Vec<f64>> = (0..n).map(|_| crossbar_input(&mut r)).collect();
    for _ in 0..20 {
        let mut perm = ids.clone();
        perm.shuffle(&mut r);
        let px: Vec<Vec<f64>> = perm.iter().map(|&i| xs2[i].clone()).collect();
        let mut a = base.clone();
        let mut b = base.clone();
        let ra = a.step(3, &ids, &xs2, &Synthetic).unwrap();
        let rb = b.step(3, &perm, &px, &Synthetic).unwrap();
        for (j, &i) in perm.iter().enumerate() {
            assert_eq!(ra.energy[i].to_bits(), rb.energy[j].to_bits());
            assert_eq!(ra.output[i].to_bits(), rb.output[j].to_bits());
            assert_eq!(ra.latency[i].to_bits(), rb.latency[j].to_bits());
        }
        assert_eq!(a.states(), b.states());
    }
}

#[test]
fn batch_equals_singleton_steps() {
    for spec in [CircuitSpec::crossbar_row(), CircuitSpec::lif_neuron()] {
        let n = 12;
        let params: Vec<Vec<f64>> = match spec.kind {
            CircuitKind::CrossbarRow => crossbar_params(n, 4),
            CircuitKind::LifNeuron => (0..n).map(|i| vec![0.5 + 0.02 * i as f64, 0.6, 0.55, 0.7]).collect(),
        };
        let mut r = rng::rng(2);
        let input = |r: &mut rng::Rng| match spec.kind {
            CircuitKind::CrossbarRow => crossbar_input(r),
            CircuitKind::LifNeuron => vec![r.gen_range(-1.0..2.0), r.gen_range(0..=5) as f64],
        };
        let oracle = oracle_predictors(&spec);
        let mut batch = EngineState::new(&spec, params.clone()).unwrap();
        let mut single = EngineState::new(&spec, params).unwrap();
        for c in 0..6u64 {
            let ids: Vec<usize> = (0..n).filter(|_| r.gen_bool(0.7)).collect();
            let xs: Vec<Vec<f64>> = ids.iter().map(|_| input(&mut r)).collect();
            let rb = batch.step(c, &ids, &xs, &oracle).unwrap();
            for (j, (&i, x)) in ids.iter().zip(&xs).enumerate() {
                let rs = single.step(c, &[i], std::slice::from_ref(x), &oracle).unwrap();
                assert_eq!(rb.energy[j].to_bits(), rs.energy[0].to_bits());
                assert_eq!(rb.output[j].to_bits(), rs.output[0].to_bits());
                assert_eq!(rb.latency[j].to_bits(), rs.latency[0].to_bits());
            }
            assert_eq!(batch.states(), single.states());
        }
    }
}

#[test]
fn idle_merging_matches_stepping_through() {
    for spec in [CircuitSpec::crossbar_row(), CircuitSpec::lif_neuron()] {
        let (params, x, hold) = match spec.kind {
            CircuitKind::CrossbarRow => {
                let mut r = rng::rng(1);
                let x = crossbar_input(&mut r);
                (crossbar_params(1, 8), x.clone(), x)
            }
            CircuitKind::LifNeuron => (vec![vec![0.58, 0.7, 0.5, 0.5]], vec![0.5, 3.0], vec![0.0, 0.0]),
        };
        let oracle = oracle_predictors(&spec);
        let mut merged = EngineState::new(&spec, params.clone()).unwrap();
        let mut stepped = EngineState::new(&spec, params).unwrap();
        let e0 = merged.step(0, &[0], &[x.clone()], &oracle).unwrap().energy[0];
        let merged_e = e0 + merged.flush(10, &oracle).unwrap().energy[0];
        let mut stepped_e = stepped.step(0, &[0], &[x], &oracle).unwrap().energy[0];
        for c in 1..10 {
            stepped_e += stepped.step(c, &[0], &[hold.clone()], &oracle).unwrap().energy[0];
        }
        assert!(rel(merged_e, stepped_e) <= 1e-9, "{merged_e} vs {stepped_e}");
        let (a, b) = (merged.states()[0], stepped.states()[0]);
        assert!((a - b).abs() <= 1e-6 * b.abs().max(1e-3));
    }
}

#[test]
fn time_only_moves_forward() {
    let spec = CircuitSpec::crossbar_row();
    let mut eng = EngineState::new(&spec, crossbar_params(3, 1)).unwrap();
    let x = vec![vec![0.2; 32], vec![0.1; 32]];
    eng.step(2, &[0, 2], &x, &Synthetic).unwrap();
    assert_eq!(eng.last_update(0), Some(2));
    assert_eq!(eng.last_update(1), None);
    assert_eq!(eng.last_update(2), Some(2));
    match eng.step(2, &[0], &x[..1], &Synthetic) {
        Err(Error::Contract { circuit: 0, .. }) => {}
        other => panic!("expected contract violation, got {other:?}"),
    }
    assert!(eng.step_at(1.5 * spec.clock_period + 10.0 * spec.clock_period, &[1], &x[..1], &Synthetic).is_err());
    assert!(eng.step(3, &[0, 0], &x, &Synthetic).is_err());
    assert!(eng.step(3, &[1], &[vec![5.0; 32]], &Synthetic).is_err());
}

#[test]
fn negative_energy_is_clamped_and_counted() {
    let spec = CircuitSpec::crossbar_row();
    let mut eng = EngineState::new(&spec, crossbar_params(2, 1)).unwrap();
    let neg = Constant([0.5, 0.0, -1e-15, -2e-15, 1e-10]);
    let x = vec![vec![0.2; 32], vec![0.1; 32]];
    let r = eng.step(0, &[0, 1], &x, &neg).unwrap();
    assert_eq!(r.energy, vec![0.0, 0.0]);
    eng.step(5, &[0], &x[..1], &neg).unwrap();
    // two step energies, then one idle and one step energy
    assert_eq!(eng.negative_energy(), 4);
}

#[test]
fn empty_schedule_has_zero_totals() {
    let spec = CircuitSpec::lif_neuron();
    let mut eng = EngineState::new(&spec, vec![vec![0.5; 4]]).unwrap();
    let res = run_sequence(&mut eng, &Schedule::default(), &Synthetic).unwrap();
    assert_eq!(res.total_energy, 0.0);
    assert!(res.steps.is_empty());
}

#[test]
fn single_circuit_sequence_equals_manual_steps() {
    let spec = CircuitSpec::crossbar_row();
    let params = crossbar_params(1, 6);
    let mut r = rng::rng(4);
    let steps: Vec<ScheduleStep> =
        [0u64, 1, 4, 5, 9].iter().map(|&c| ScheduleStep { clock: c, ids: vec![0], inputs: vec![crossbar_input(&mut r)] }).collect();
    let schedule = Schedule { n_clocks: 12, steps: steps.clone() };
    let mut a = EngineState::new(&spec, params.clone()).unwrap();
    let res = run_sequence(&mut a, &schedule, &Synthetic).unwrap();
    let mut b = EngineState::new(&spec, params).unwrap();
    let mut total = 0.0;
    for s in &steps {
        total += b.step(s.clock, &s.ids, &s.inputs, &Synthetic).unwrap().energy[0];
    }
    total += b.flush(12, &Synthetic).unwrap().energy[0];
    assert_eq!(res.total_energy, total);
    assert_eq!(res.flush.clocks, vec![2]);
}

#[test]
fn step_log_has_one_row_per_event() {
    let spec = CircuitSpec::crossbar_row();
    let mut eng = EngineState::new(&spec, crossbar_params(2, 1)).unwrap();
    let schedule = Schedule {
        n_clocks: 6,
        steps: vec![
            ScheduleStep { clock: 0, ids: vec![0, 1], inputs: vec![vec![0.1; 32], vec![0.2; 32]] },
            ScheduleStep { clock: 3, ids: vec![1], inputs: vec![vec![0.3; 32]] },
        ],
    };
    let res = run_sequence(&mut eng, &schedule, &Synthetic).unwrap();
    let rows = res.log(spec.clock_period);
    // two steps at 0, idle + step for circuit 1 at 3, flush tails for both
    assert_eq!(rows.len(), 6);
    let mut buf = Vec::new();
    write_step_log(&rows, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("t,start_clock,clocks,circuit,path,energy,latency,output,state\n"));
    assert!(text.contains(",idle,") && text.contains(",flush,"));
}

#[test]
fn observed_state_replaces_predictions() {
    let spec = CircuitSpec::lif_neuron();
    let mut eng = EngineState::new(&spec, vec![vec![0.58, 0.5, 0.5, 0.5]; 2]).unwrap();
    let truth = |n: usize, k: u64| 0.01 * (n as f64 + 1.0) + 0.001 * k as f64;
    let bad = Constant([0.0, 0.9, 1e-12, 1e-13, 0.0]);
    let x = vec![vec![0.3, 1.0]; 2];
    let r = eng.step_observed(0, &[0, 1], &x, &bad, &truth).unwrap();
    // the prediction is reported, the truth is kept
    assert_eq!(r.state, vec![0.9, 0.9]);
    assert_eq!(eng.states(), &[truth(0, 1), truth(1, 1)]);
    let r = eng.step_observed(5, &[1], &x[..1], &bad, &truth).unwrap();
    assert_eq!(r.idle_state, vec![0.9]);
    assert_eq!(eng.states()[1], truth(1, 6));
    assert_eq!(eng.states()[0], truth(0, 1));
}

#[test]
fn observed_sequence_with_exact_predictors_matches_plain_run() {
    let spec = CircuitSpec::lif_neuron();
    let g = Generation { n_runs: 5, n_steps: 40, alpha: 0.5, seed: 3 };
    let runs = crate::dataset::run_characterization(&spec, &g, Strategy::Sequential).unwrap();
    let tbs: Vec<_> = runs.iter().map(|r| r.0.clone()).collect();
    let (params, schedule) = characterization_schedule(&spec, &tbs).unwrap();
    let p = oracle_predictors(&spec);
    let plain = run_sequence(&mut EngineState::new(&spec, params.clone()).unwrap(), &schedule, &p).unwrap();
    let truth = |n: usize, k: u64| runs[n].1.state[runs[n].1.edge(k as usize)];
    let obs = run_sequence_observed(&mut EngineState::new(&spec, params).unwrap(), &schedule, &p, &truth).unwrap();
    for (a, b) in plain.steps.iter().zip(&obs.steps) {
        assert_eq!(a.output, b.output);
        for (x, y) in a.state.iter().zip(&b.state) {
            assert!((x - y).abs() <= 1e-9, "{x} vs {y}");
        }
    }
    assert!(rel(plain.total_energy, obs.total_energy) < 1e-9);
}
