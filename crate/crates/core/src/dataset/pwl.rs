//! PWL stimulus files: one file per input, one `<time_s> <volts>` pair per
//! line, both written with 17 significant digits so that parsing returns the
//! written values exactly.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use crate::{error::invalid, Error, Result};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Pwl {
    pub points: Vec<(f64, f64)>,
}

/// One PWL waveform per circuit input.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PwlSet {
    pub channels: Vec<Pwl>,
}

impl Pwl {
    /// Value in force at `t`: the last breakpoint at or before `t`.
    pub fn value_at(&self, t: f64, tol: f64) -> Option<f64> {
        let idx = self.points.partition_point(|&(ti, _)| ti <= t + tol);
        if idx == 0 {
            None
        } else {
            Some(self.points[idx - 1].1)
        }
    }
}

impl PwlSet {
    /// Build from per-clock input vectors, one breakpoint per clock edge.
    pub fn from_clock_values(steps: &[Vec<f64>], clock_period: f64) -> Self {
        let width = steps.first().map_or(0, |s| s.len());
        let channels = (0..width)
            .map(|i| Pwl {
                points: steps
                    .iter()
                    .enumerate()
                    .map(|(k, x)| (k as f64 * clock_period, x[i]))
                    .collect(),
            })
            .collect();
        PwlSet { channels }
    }

    /// Per-clock input vectors over `duration`.
    pub fn clock_values(&self, duration: f64, clock_period: f64) -> Result<Vec<Vec<f64>>> {
        let n = (duration / clock_period).round() as usize;
        let tol = 1e-6 * clock_period;
        (0..n)
            .map(|k| {
                let t = k as f64 * clock_period;
                self.channels
                    .iter()
                    .enumerate()
                    .map(|(i, ch)| {
                        ch.value_at(t, tol)
                            .ok_or_else(|| invalid(format!("input {i} undefined at t = {t:e} s")))
                    })
                    .collect()
            })
            .collect()
    }
}

pub fn write_pwl(pwl: &Pwl, mut sink: impl Write) -> Result<()> {
    for &(t, v) in &pwl.points {
        writeln!(sink, "{t:.16e} {v:.16e}")?;
    }
    Ok(())
}

pub fn parse_pwl(source: impl BufRead) -> Result<Pwl> {
    let mut points: Vec<(f64, f64)> = Vec::new();
    for (i, line) in source.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let err = |message: String| Error::PwlParse { line: lineno, message };
        let mut parts = trimmed.split_whitespace();
        let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(err(format!("expected `<time> <value>`, got {trimmed:?}")));
        };
        let t: f64 = a.parse().map_err(|_| err(format!("bad time {a:?}")))?;
        let v: f64 = b.parse().map_err(|_| err(format!("bad value {b:?}")))?;
        if !t.is_finite() || !v.is_finite() {
            return Err(err("non-finite number".into()));
        }
        if let Some(&(prev, _)) = points.last() {
            if t <= prev {
                return Err(err(format!("time {t:e} not after previous breakpoint {prev:e}")));
            }
        }
        points.push((t, v));
    }
    if points.is_empty() {
        return Err(Error::PwlParse { line: 0, message: "no breakpoints".into() });
    }
    Ok(Pwl { points })
}

fn channel_path(dir: &Path, run_id: u64, input: usize) -> PathBuf {
    dir.join(format!("run{run_id:06}_x{input}.pwl"))
}

/// Write one file per input into `dir`.
pub fn write_pwl_dir(set: &PwlSet, run_id: u64, dir: &Path) -> Result<Vec<PathBuf>> {
    set.channels
        .iter()
        .enumerate()
        .map(|(i, ch)| {
            let path = channel_path(dir, run_id, i);
            let file = std::fs::File::create(&path).map_err(|e| Error::Io { path: Some(path.clone()), source: e })?;
            let mut w = std::io::BufWriter::new(file);
            write_pwl(ch, &mut w)?;
            w.flush()?;
            Ok(path)
        })
        .collect()
}

pub fn read_pwl_dir(dir: &Path, run_id: u64, inputs: usize) -> Result<PwlSet> {
    let channels = (0..inputs)
        .map(|i| {
            let path = channel_path(dir, run_id, i);
            let file = std::fs::File::open(&path).map_err(|e| Error::Io { path: Some(path.clone()), source: e })?;
            parse_pwl(std::io::BufReader::new(file))
        })
        .collect::<Result<_>>()?;
    Ok(PwlSet { channels })
}
