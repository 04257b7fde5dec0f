//! Randomized characterization: testbenches, oracle runs, event
//! decomposition and the labeled, run-wise split dataset.

mod csvio;
mod events;
mod pwl;
mod spec;
mod testbench;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng as _;

pub use csvio::{export_csv, import_csv};
pub use events::{classify, decompose_events, input_change_flags, EnergyClass, EventKind, EventRecord};
pub use pwl::{parse_pwl, read_pwl_dir, write_pwl, write_pwl_dir, Pwl, PwlSet};
pub use spec::{CircuitKind, CircuitSpec, Domain, ParamDomain};
pub use testbench::{generate_testbench, sample_params, Testbench};

use crate::oracle::TransientTrace;
use crate::par::{self, Strategy};
use crate::{error::invalid, rng, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Split::Train),
            "val" => Some(Split::Val),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

/// Characterization knobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Generation {
    pub n_runs: usize,
    pub n_steps: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl Generation {
    pub fn run_seed(&self, run_id: u64) -> u64 {
        rng::derive(self.seed, "run", run_id)
    }

    pub fn testbench(&self, spec: &CircuitSpec, run_id: u64) -> Result<Testbench> {
        generate_testbench(spec, run_id, self.n_steps, self.alpha, self.run_seed(run_id))
    }
}

fn check(spec: &CircuitSpec, g: &Generation) -> Result<()> {
    if g.n_runs == 0 {
        return Err(invalid("n_runs must be >= 1"));
    }
    spec.validate()
}

fn simulate_run(spec: &CircuitSpec, g: &Generation, run_id: u64) -> Result<(Testbench, TransientTrace)> {
    let inner = || -> Result<_> {
        let tb = g.testbench(spec, run_id)?;
        let circuit = spec.instantiate(&tb.params)?;
        let trace = circuit.simulate(&tb.steps()?, &spec.grid())?;
        Ok((tb, trace))
    };
    inner().map_err(|e| Error::RunFailed { run_id, source: Box::new(e) })
}

/// Run `n_runs` independent oracle simulations. Each run derives its own
/// seed from the master seed and its run id, so the result does not depend
/// on the strategy.
pub fn run_characterization(spec: &CircuitSpec, g: &Generation, strategy: Strategy) -> Result<Vec<(Testbench, TransientTrace)>> {
    check(spec, g)?;
    par::map_range(strategy, g.n_runs, |i| simulate_run(spec, g, i as u64))
        .into_iter()
        .collect()
}

/// Characterize and decompose in one pass, dropping each trace once its
/// events are extracted.
pub fn characterize_events(spec: &CircuitSpec, g: &Generation, strategy: Strategy) -> Result<Vec<EventRecord>> {
    check(spec, g)?;
    let per_run = par::map_range(strategy, g.n_runs, |i| {
        let run_id = i as u64;
        let (tb, trace) = simulate_run(spec, g, run_id)?;
        decompose_events(&trace, &tb, spec).map_err(|e| Error::RunFailed { run_id, source: Box::new(e) })
    });
    let mut out = Vec::new();
    for r in per_run {
        out.extend(r?);
    }
    Ok(out)
}

/// Labeled events plus a run-wise split.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub spec: CircuitSpec,
    pub records: Vec<EventRecord>,
    pub split: BTreeMap<u64, Split>,
}

/// Event counts per kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct KindCounts {
    pub e1: usize,
    pub e2: usize,
    pub e3: usize,
}

impl Dataset {
    pub fn split_of(&self, r: &EventRecord) -> Split {
        self.split[&r.run_id]
    }

    pub fn records_in(&self, split: Split) -> impl Iterator<Item = &EventRecord> + '_ {
        self.records.iter().filter(move |r| self.split_of(r) == split)
    }

    pub fn kind_counts(&self) -> KindCounts {
        let mut c = KindCounts::default();
        for r in &self.records {
            match r.kind {
                EventKind::E1 => c.e1 += 1,
                EventKind::E2 => c.e2 += 1,
                EventKind::E3 => c.e3 += 1,
            }
        }
        c
    }
}

/// Assign runs to train/val/test 70/15/15. The train count is
/// `round(0.7 n)`; an odd remainder goes to val or test by a seeded coin.
pub fn split_runs(run_ids: &[u64], seed: u64) -> BTreeMap<u64, Split> {
    let mut ids: Vec<u64> = run_ids.to_vec();
    ids.sort_unstable();
    ids.dedup();
    let mut r = rng::sub_rng(seed, "split", 0);
    ids.shuffle(&mut r);
    let n = ids.len();
    let n_train = ((0.7 * n as f64).round() as usize).min(n);
    let rest = n - n_train;
    let n_val = rest / 2 + usize::from(rest % 2 == 1 && r.gen::<bool>());
    ids.iter()
        .enumerate()
        .map(|(i, &id)| {
            let s = if i < n_train {
                Split::Train
            } else if i < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
            (id, s)
        })
        .collect()
}

pub fn build_dataset(spec: &CircuitSpec, records: Vec<EventRecord>, seed: u64) -> Result<Dataset> {
    if records.is_empty() {
        return Err(invalid("no events to build a dataset from"));
    }
    let ids: Vec<u64> = records.iter().map(|r| r.run_id).collect();
    Ok(Dataset { spec: spec.clone(), split: split_runs(&ids, seed), records })
}
