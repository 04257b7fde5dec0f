use serde::{Deserialize, Serialize};

/// Uniform mid-rise converter over `[low, high]` with `2^bits` levels.
/// `bits = None` is the ideal converter: it only clamps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantizer {
    pub bits: Option<u32>,
    pub low: f64,
    pub high: f64,
}

impl Quantizer {
    pub fn new(bits: Option<u32>, low: f64, high: f64) -> Self {
        assert!(low < high, "empty quantizer range");
        assert!(bits.is_none_or(|b| (1..=52).contains(&b)), "bits must be in 1..=52");
        Quantizer { bits, low, high }
    }

    pub fn levels(&self) -> Option<u64> {
        self.bits.map(|b| 1u64 << b)
    }

    /// Width of one code (0 for the ideal converter).
    pub fn step(&self) -> f64 {
        self.levels().map_or(0.0, |n| (self.high - self.low) / n as f64)
    }

    /// ADC: code of `v`, clamped to the valid codes.
    pub fn code(&self, v: f64) -> u64 {
        let n = self.levels().expect("ideal converter has no codes");
        let k = ((v - self.low) / self.step()).floor();
        if k.is_nan() || k < 0.0 {
            0
        } else {
            (k as u64).min(n - 1)
        }
    }

    /// DAC: mid-point voltage of `code`.
    pub fn level(&self, code: u64) -> f64 {
        self.low + (code as f64 + 0.5) * self.step()
    }

    pub fn quantize(&self, v: f64) -> f64 {
        match self.bits {
            None => v.clamp(self.low, self.high),
            Some(_) => self.level(self.code(v)),
        }
    }
}

/// Mid-rise quantization of `v` onto `2^bits` levels across `range`.
pub fn quantize(v: f64, bits: u32, range: (f64, f64)) -> f64 {
    Quantizer::new(Some(bits), range.0, range.1).quantize(v)
}
