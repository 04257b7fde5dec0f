//! Sequential vs. rayon execution of the data-parallel stages. Build with
//! `--no-default-features` to see the fallback compiled without rayon.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use evsurrogate::dataset::{build_dataset, characterize_events, run_characterization, CircuitSpec, Generation};
use evsurrogate::engine::{characterization_schedule, run_sequence, EngineState};
use evsurrogate::models::{train_all, Family, GbtGrid, MlpGrid, MlpHyper, Predictor, TrainConfig, View};
use evsurrogate::par::Strategy;

const STRATEGIES: [(&str, Strategy); 2] = [("sequential", Strategy::Sequential), ("parallel", Strategy::Parallel)];

fn characterization(c: &mut Criterion) {
    let spec = CircuitSpec::lif_neuron();
    let g = Generation { n_runs: 32, n_steps: 50, alpha: 0.5, seed: 1 };
    let mut group = c.benchmark_group("characterization");
    group.sample_size(10);
    for (name, s) in STRATEGIES {
        group.bench_function(BenchmarkId::new("lif_32x50", name), |b| b.iter(|| run_characterization(&spec, &g, s).unwrap()));
    }
    group.finish();
}

fn inference(c: &mut Criterion) {
    let spec = CircuitSpec::lif_neuron();
    let g = Generation { n_runs: 60, n_steps: 60, alpha: 0.5, seed: 2 };
    let ds = build_dataset(&spec, characterize_events(&spec, &g, Strategy::Parallel).unwrap(), 0).unwrap();
    let cfg = TrainConfig {
        families: vec![Family::Gbt, Family::Mlp],
        gbt: GbtGrid { trees: vec![100], depth: vec![6], ..Default::default() },
        mlp: MlpGrid { base: MlpHyper { max_epochs: 20, ..Default::default() }, ..Default::default() },
        seed: 0,
    };
    let t = train_all(&ds, &cfg, Strategy::Parallel).unwrap();

    let mut group = c.benchmark_group("predict_batch");
    group.sample_size(20);
    for f in [Family::Gbt, Family::Mlp] {
        let m = t.families[&f].get(Predictor::State);
        let rows: Vec<_> = ds.records.iter().cycle().take(4096).cloned().collect();
        let x = View::from_records(&m.schema, rows.iter()).x;
        for (name, s) in STRATEGIES {
            group.bench_function(BenchmarkId::new(format!("{}_4096", f.name()), name), |b| {
                b.iter(|| m.predict_batch_with(s, x.view()).unwrap())
            });
        }
    }
    group.finish();

    let tbs: Vec<_> = (0..256).map(|i| Generation { n_runs: 256, n_steps: 40, alpha: 0.5, seed: 3 }.testbench(&spec, i).unwrap()).collect();
    let (params, schedule) = characterization_schedule(&spec, &tbs).unwrap();
    let mut group = c.benchmark_group("engine_sequence");
    group.sample_size(10);
    for (name, s) in STRATEGIES {
        group.bench_function(BenchmarkId::new("lif_256x40_mlp", name), |b| {
            b.iter(|| {
                let mut eng = EngineState::new(&spec, params.clone()).unwrap().with_strategy(s);
                run_sequence(&mut eng, &schedule, &t.families[&Family::Mlp]).unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, characterization, inference);
criterion_main!(benches);
