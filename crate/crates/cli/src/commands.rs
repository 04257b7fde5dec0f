//! One function per subcommand. Each returns the files it produced; nothing
//! is written until the whole command succeeded.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use evsurrogate::dataset::{build_dataset, characterize_events, export_csv, import_csv, CircuitKind, Dataset, EventKind, Generation};
use evsurrogate::engine::{oracle_predictors, PredictorSet};
use evsurrogate::models::{
    evaluate, load_bundle, save_bundle, train_all, write_metrics, write_report, write_timing, Family, ModelBundle,
};
use evsurrogate::dataset::Split;
use evsurrogate::netsim::{
    digits, error_propagation_study, run_ann_inference, run_ann_oracle, run_snn, run_snn_oracle, runtime_benchmark, split_digits,
    train_ann, train_snn, write_bench, write_bench_timing, write_inferences, write_study_series, write_study_summary, InferenceRow,
};
use evsurrogate::par;

use crate::config::{PredictorSource, RunConfig};
use crate::Failure;

/// Files of one command, relative to the output directory.
#[derive(Default)]
pub struct Outputs {
    pub files: Vec<(PathBuf, Vec<u8>)>,
    /// Timing and other run-dependent facts, kept out of the CSV bodies.
    pub meta: Vec<(String, String)>,
}

impl Outputs {
    fn add(&mut self, name: impl Into<PathBuf>, body: Vec<u8>) {
        self.files.push((name.into(), body));
    }

    fn csv(&mut self, name: &str, f: impl FnOnce(&mut Vec<u8>) -> evsurrogate::Result<()>) -> Result<(), Failure> {
        let mut buf = Vec::new();
        f(&mut buf).map_err(runtime)?;
        self.add(name, buf);
        Ok(())
    }
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

fn input(e: impl std::fmt::Display) -> Failure {
    Failure::Validation(e.to_string())
}

pub struct Inputs {
    pub dataset: Option<PathBuf>,
    pub bundle: Option<PathBuf>,
}

fn open(path: &Path) -> Result<BufReader<File>, Failure> {
    File::open(path).map(BufReader::new).map_err(|e| input(format!("{}: {e}", path.display())))
}

fn dataset_path(cfg: &RunConfig, inp: &Inputs) -> PathBuf {
    inp.dataset.clone().unwrap_or_else(|| cfg.output.dir.join("dataset.csv"))
}

fn bundle_path(cfg: &RunConfig, inp: &Inputs) -> PathBuf {
    inp.bundle.clone().unwrap_or_else(|| cfg.output.dir.join("bundle.json"))
}

fn load_dataset(cfg: &RunConfig, inp: &Inputs) -> Result<Dataset, Failure> {
    let p = dataset_path(cfg, inp);
    import_csv(open(&p)?, &cfg.spec()).map_err(|e| input(format!("{}: {e}", p.display())))
}

fn load(cfg: &RunConfig, path: &Path) -> Result<ModelBundle, Failure> {
    load_bundle(open(path)?, &cfg.spec()).map_err(|e| input(format!("{}: {e}", path.display())))
}

fn bundle_bytes(b: &ModelBundle) -> Result<Vec<u8>, Failure> {
    let mut buf = Vec::new();
    save_bundle(b, &mut buf).map_err(runtime)?;
    Ok(buf)
}

/// Check the inputs a command needs before any work starts.
pub fn preflight(cmd: &str, cfg: &RunConfig, inp: &Inputs) -> Result<(), Failure> {
    let needs_dataset = matches!(cmd, "train" | "eval");
    let needs_bundle = cmd == "eval" || (matches!(cmd, "simulate" | "bench" | "study") && cfg.simulation.predictors == PredictorSource::Bundle);
    if needs_dataset {
        open(&dataset_path(cfg, inp))?;
    }
    if needs_bundle {
        load(cfg, &bundle_path(cfg, inp))?;
    }
    if cmd == "study" && cfg.circuit.kind != CircuitKind::LifNeuron {
        return Err(input("study runs on the LIF neuron"));
    }
    Ok(())
}

fn predictors(cfg: &RunConfig, inp: &Inputs) -> Result<Box<dyn PredictorSet>, Failure> {
    Ok(match cfg.simulation.predictors {
        PredictorSource::Bundle => Box::new(load(cfg, &bundle_path(cfg, inp))?),
        PredictorSource::Oracle => Box::new(oracle_predictors(&cfg.spec())),
    })
}

pub fn characterize(cfg: &RunConfig) -> Result<Outputs, Failure> {
    let spec = cfg.spec();
    let records = characterize_events(&spec, &cfg.generation(), cfg.strategy()).map_err(runtime)?;
    let ds = build_dataset(&spec, records, cfg.seed_for("split", 0)).map_err(runtime)?;
    let mut out = Outputs::default();
    out.csv("dataset.csv", |b| export_csv(&ds, b))?;
    let k = ds.kind_counts();
    let mut kinds = String::from("kind,count\n");
    for (kind, n) in [(EventKind::E1, k.e1), (EventKind::E2, k.e2), (EventKind::E3, k.e3)] {
        kinds.push_str(&format!("{},{n}\n", kind.as_str()));
    }
    out.add("kinds.csv", kinds.into_bytes());
    Ok(out)
}

pub fn train(cfg: &RunConfig, inp: &Inputs) -> Result<Outputs, Failure> {
    let ds = load_dataset(cfg, inp)?;
    let t = train_all(&ds, &cfg.training, cfg.strategy()).map_err(runtime)?;
    let mut out = Outputs::default();
    out.add("bundle.json", bundle_bytes(&t.bundle)?);
    for (f, b) in &t.families {
        out.add(format!("bundle_{}.json", f.name()), bundle_bytes(b)?);
    }
    out.csv("train_report.csv", |b| write_report(&t.report, b))?;
    let mut timing = Vec::new();
    write_timing(&t.report, &mut timing).map_err(runtime)?;
    out.meta.push(("train_timing.csv".into(), String::from_utf8_lossy(&timing).into_owned()));
    Ok(out)
}

pub fn eval(cfg: &RunConfig, inp: &Inputs) -> Result<Outputs, Failure> {
    let ds = load_dataset(cfg, inp)?;
    let main = bundle_path(cfg, inp);
    let dir = main.parent().unwrap_or(Path::new("."));
    let mut bundles = Vec::new();
    for f in Family::ALL {
        let p = dir.join(format!("bundle_{}.json", f.name()));
        if p.exists() {
            bundles.push(load(cfg, &p)?);
        }
    }
    if bundles.is_empty() {
        bundles.push(load(cfg, &main)?);
    }
    let mut rows = Vec::new();
    for b in &bundles {
        let models: Vec<_> = b.models.iter().collect();
        rows.extend(evaluate(&models, &ds, Split::Test, cfg.strategy()).map_err(runtime)?);
    }
    let mut out = Outputs::default();
    out.csv("metrics.csv", |b| write_metrics(&rows, b))?;
    Ok(out)
}

pub fn simulate(cfg: &RunConfig, inp: &Inputs) -> Result<Outputs, Failure> {
    let spec = cfg.spec();
    let pred = predictors(cfg, inp)?;
    let all = digits();
    let (train, test) = split_digits(&all, cfg.simulation.n_test);
    let strategy = cfg.strategy();
    let idx: Vec<usize> = (0..test.len()).collect();
    let (surrogate, oracle): (Vec<InferenceRow>, Option<Vec<InferenceRow>>) = match spec.kind {
        CircuitKind::CrossbarRow => {
            let net = train_ann(&spec, train, &cfg.simulation.ann).map_err(runtime)?;
            let row = |i: usize, o: evsurrogate::netsim::AnnOutput| InferenceRow {
                image: i,
                truth: test[i].label,
                class: o.class,
                energy: o.energy,
                latency: Some(o.latency),
            };
            let s = par::map(strategy, &idx, |&i| run_ann_inference(&net, &test[i].pixels, pred.as_ref()).map(|o| row(i, o)));
            let o = cfg.simulation.oracle_baseline.then(|| par::map(strategy, &idx, |&i| run_ann_oracle(&net, &test[i].pixels).map(|o| row(i, o))));
            (collect(s)?, o.map(collect).transpose()?)
        }
        CircuitKind::LifNeuron => {
            let net = train_snn(&spec, train, &cfg.simulation.snn).map_err(runtime)?;
            let mode = cfg.simulation.snn_mode;
            let row = |i: usize, o: evsurrogate::netsim::SnnOutput| InferenceRow {
                image: i,
                truth: test[i].label,
                class: o.class,
                energy: o.energy,
                latency: None,
            };
            let schedule = |i: usize| net.encode(&test[i].pixels, cfg.seed_for("encode", i as u64));
            let s = par::map(strategy, &idx, |&i| schedule(i).and_then(|s| run_snn(&net, &s, pred.as_ref(), mode)).map(|o| row(i, o)));
            let o = cfg
                .simulation
                .oracle_baseline
                .then(|| par::map(strategy, &idx, |&i| schedule(i).and_then(|s| run_snn_oracle(&net, &s)).map(|o| row(i, o))));
            (collect(s)?, o.map(collect).transpose()?)
        }
    };
    let mut out = Outputs::default();
    out.csv("inferences.csv", |b| write_inferences(&surrogate, b))?;
    let mut summary = String::from("network,accuracy,mean_energy,oracle_accuracy,oracle_mean_energy,energy_error\n");
    let acc = |r: &[InferenceRow]| r.iter().filter(|x| x.class == x.truth).count() as f64 / r.len() as f64;
    let energy = |r: &[InferenceRow]| r.iter().map(|x| x.energy).sum::<f64>() / r.len() as f64;
    let net = if spec.kind == CircuitKind::CrossbarRow { "ann" } else { "snn" };
    match &oracle {
        Some(o) => {
            out.csv("inferences_oracle.csv", |b| write_inferences(o, b))?;
            let err = (energy(&surrogate) - energy(o)).abs() / energy(o);
            summary.push_str(&format!("{net},{},{},{},{},{err}\n", acc(&surrogate), energy(&surrogate), acc(o), energy(o)));
        }
        None => summary.push_str(&format!("{net},{},{},,,\n", acc(&surrogate), energy(&surrogate))),
    }
    out.add("summary.csv", summary.into_bytes());
    Ok(out)
}

fn collect<T>(v: Vec<evsurrogate::Result<T>>) -> Result<Vec<T>, Failure> {
    v.into_iter().collect::<evsurrogate::Result<Vec<T>>>().map_err(runtime)
}

pub fn bench(cfg: &RunConfig, inp: &Inputs) -> Result<Outputs, Failure> {
    let s = &cfg.simulation;
    let pred = predictors(cfg, inp)?;
    let rows = runtime_benchmark(&cfg.spec(), &s.bench_sizes, s.bench_steps, cfg.generation.alpha, pred.as_ref(), cfg.seed_for("bench", 0), cfg.strategy())
        .map_err(runtime)?;
    let mut out = Outputs::default();
    out.csv("bench.csv", |b| write_bench(&rows, b))?;
    let mut timing = Vec::new();
    write_bench_timing(&rows, &mut timing).map_err(runtime)?;
    out.meta.push(("bench_timing.csv".into(), String::from_utf8_lossy(&timing).into_owned()));
    Ok(out)
}

pub fn study(cfg: &RunConfig, inp: &Inputs) -> Result<Outputs, Failure> {
    let s = &cfg.simulation;
    let pred = predictors(cfg, inp)?;
    let g = Generation { n_runs: s.study_neurons, n_steps: s.study_steps, alpha: cfg.generation.alpha, seed: cfg.seed_for("study", 0) };
    let r = error_propagation_study(&cfg.spec(), &g, pred.as_ref(), cfg.strategy()).map_err(runtime)?;
    let mut out = Outputs::default();
    out.csv("study_series.csv", |b| write_study_series(&r, b))?;
    out.csv("study_summary.csv", |b| write_study_summary(&r, b))?;
    if let Some((p, o)) = r.spike_accuracy {
        out.add("study_spikes.csv", format!("mode,spike_accuracy\npredicted,{p}\nobserved,{o}\n").into_bytes());
    }
    Ok(out)
}
