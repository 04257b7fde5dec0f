//! Dataset CSV. The first line is `# spec <fingerprint>`, then a header
//! naming every record field with inputs and parameters flattened as
//! `x0..` and `p0..`. Floats use the shortest round-trip representation.

use std::io::{BufRead, Write};

use super::events::{EnergyClass, EventKind, EventRecord};
use super::spec::CircuitSpec;
use super::{Dataset, Split};
use crate::{Error, Result};

const FIXED: [&str; 15] = [
    "kind",
    "run_id",
    "split",
    "start_clock",
    "clocks",
    "t_start",
    "t_end",
    "tau",
    "v_start",
    "v_end",
    "o_prev",
    "o",
    "energy",
    "energy_class",
    "latency",
];

fn header(spec: &CircuitSpec) -> Vec<String> {
    FIXED
        .iter()
        .map(|s| s.to_string())
        .chain((0..spec.x_width()).map(|i| format!("x{i}")))
        .chain((0..spec.n_params()).map(|i| format!("p{i}")))
        .collect()
}

pub fn export_csv(ds: &Dataset, mut sink: impl Write) -> Result<()> {
    writeln!(sink, "# spec {}", ds.spec.fingerprint())?;
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(header(&ds.spec))?;
    let mut row: Vec<String> = Vec::new();
    for r in &ds.records {
        row.clear();
        row.push(r.kind.as_str().into());
        row.push(r.run_id.to_string());
        row.push(ds.split_of(r).as_str().into());
        row.push(r.start_clock.to_string());
        row.push(r.clocks.to_string());
        for v in [r.t_start, r.t_end, r.tau, r.v_start, r.v_end, r.o_prev, r.o, r.energy] {
            row.push(v.to_string());
        }
        row.push(r.energy_class.as_str().into());
        row.push(r.latency.map(|l| l.to_string()).unwrap_or_default());
        row.extend(r.x.iter().map(|v| v.to_string()));
        row.extend(r.params.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn import_csv(mut source: impl BufRead, spec: &CircuitSpec) -> Result<Dataset> {
    let mut first = String::new();
    source.read_line(&mut first)?;
    let found = first.trim().strip_prefix("# spec ").ok_or_else(|| Error::Schema("missing `# spec` line".into()))?;
    let expected = spec.fingerprint();
    if found != expected {
        return Err(Error::Fingerprint { bundle: found.to_string(), circuit: expected });
    }
    let mut rd = csv::Reader::from_reader(source);
    let want = header(spec);
    let got: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    if got != want {
        return Err(Error::Schema(format!("header has {} columns, spec expects {}: {:?}", got.len(), want.len(), got)));
    }
    let (xw, np) = (spec.x_width(), spec.n_params());
    let mut ds = Dataset { spec: spec.clone(), records: Vec::new(), split: Default::default() };
    for (i, row) in rd.records().enumerate() {
        let row = row?;
        let line = i + 3;
        let bad = |what: &str| Error::Schema(format!("line {line}: bad {what}"));
        let f = |j: usize| -> Result<f64> { row[j].parse::<f64>().map_err(|_| bad(FIXED.get(j).copied().unwrap_or("value"))) };
        let u = |j: usize| -> Result<u64> { row[j].parse::<u64>().map_err(|_| bad(FIXED[j])) };
        let kind = EventKind::parse(&row[0]).ok_or_else(|| bad("kind"))?;
        let split = Split::parse(&row[2]).ok_or_else(|| bad("split"))?;
        let energy_class = match &row[13] {
            "dynamic" => EnergyClass::Dynamic,
            "static" => EnergyClass::Static,
            _ => return Err(bad("energy_class")),
        };
        let latency = if row[14].is_empty() { None } else { Some(f(14)?) };
        let base = FIXED.len();
        let rec = EventRecord {
            kind,
            run_id: u(1)?,
            start_clock: u(3)?,
            clocks: u(4)?,
            t_start: f(5)?,
            t_end: f(6)?,
            tau: f(7)?,
            v_start: f(8)?,
            v_end: f(9)?,
            o_prev: f(10)?,
            o: f(11)?,
            energy: f(12)?,
            energy_class,
            latency,
            x: (base..base + xw).map(&f).collect::<Result<_>>()?,
            params: (base + xw..base + xw + np).map(&f).collect::<Result<_>>()?,
        };
        if let Some(prev) = ds.split.insert(rec.run_id, split) {
            if prev != split {
                return Err(Error::Schema(format!("line {line}: run {} appears in two splits", rec.run_id)));
            }
        }
        ds.records.push(rec);
    }
    Ok(ds)
}
