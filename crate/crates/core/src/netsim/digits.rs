use std::io::BufRead;

use crate::{Error, Result};

pub const PIXELS: usize = 64;
pub const CLASSES: usize = 10;

/// One 8x8 digit with intensities scaled to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Digit {
    pub label: usize,
    pub pixels: Vec<f64>,
}

const EMBEDDED: &str = include_str!("../../data/digits8x8.csv");

/// Parse `label,p0..p63` rows with pixel values in `0..=16`; `#` lines are
/// comments.
pub fn load_digits(source: impl BufRead) -> Result<Vec<Digit>> {
    let mut out = Vec::new();
    for (i, line) in source.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |m: &str| Error::Schema(format!("digits line {}: {m}", i + 1));
        let vals: Vec<u32> = line
            .split(',')
            .map(|f| f.trim().parse::<u32>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| bad(&e.to_string()))?;
        if vals.len() != PIXELS + 1 {
            return Err(bad(&format!("expected {} fields, got {}", PIXELS + 1, vals.len())));
        }
        if vals[0] as usize >= CLASSES || vals[1..].iter().any(|&p| p > 16) {
            return Err(bad("label or pixel out of range"));
        }
        out.push(Digit { label: vals[0] as usize, pixels: vals[1..].iter().map(|&p| p as f64 / 16.0).collect() });
    }
    Ok(out)
}

/// The committed 8x8 digits corpus (1797 images).
pub fn digits() -> Vec<Digit> {
    load_digits(EMBEDDED.as_bytes()).expect("embedded digits parse")
}

/// Fixed split: the last `n_test` images are held out.
pub fn split_digits(all: &[Digit], n_test: usize) -> (&[Digit], &[Digit]) {
    all.split_at(all.len().saturating_sub(n_test))
}
