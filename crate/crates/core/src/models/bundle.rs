//! Model-bundle file: a magic line followed by one JSON document. Floats are
//! written in shortest round-trip form, so a loaded bundle predicts bit for
//! bit like the saved one.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Family, Predictor, TrainedModel};
use crate::dataset::CircuitSpec;
use crate::{Error, Result};

pub const BUNDLE_MAGIC: &str = "EVSURROGATE-BUNDLE";
pub const BUNDLE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub predictor: Predictor,
    pub family: Family,
    pub val_mse: f64,
}

/// The five selected predictors, indexed by `Predictor::index`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub version: u32,
    pub fingerprint: String,
    pub models: Vec<TrainedModel>,
    pub candidates: Vec<CandidateScore>,
}

impl ModelBundle {
    pub fn get(&self, p: Predictor) -> &TrainedModel {
        &self.models[p.index()]
    }

    fn check_shape(&self) -> Result<()> {
        let ok = self.models.len() == 5 && self.models.iter().zip(Predictor::ALL).all(|(m, p)| m.predictor == p);
        if ok {
            Ok(())
        } else {
            Err(Error::BundleFormat("bundle must hold one model per predictor, in order".into()))
        }
    }
}

pub fn save_bundle(bundle: &ModelBundle, mut sink: impl Write) -> Result<()> {
    bundle.check_shape()?;
    writeln!(sink, "{BUNDLE_MAGIC}")?;
    serde_json::to_writer(&mut sink, bundle)?;
    writeln!(sink)?;
    Ok(())
}

pub fn load_bundle(mut source: impl BufRead, spec: &CircuitSpec) -> Result<ModelBundle> {
    let mut magic = String::new();
    source.read_line(&mut magic)?;
    if magic.trim_end() != BUNDLE_MAGIC {
        return Err(Error::BundleFormat(format!("bad magic {:?}", magic.trim_end())));
    }
    let mut text = String::new();
    source.read_to_string(&mut text)?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let found = value.get("version").and_then(|v| v.as_u64()).ok_or_else(|| Error::BundleFormat("missing version".into()))?;
    if found != BUNDLE_VERSION as u64 {
        return Err(Error::BundleVersion { found: found as u32, expected: BUNDLE_VERSION });
    }
    let mut bundle: ModelBundle = serde_json::from_value(value)?;
    let circuit = spec.fingerprint();
    if bundle.fingerprint != circuit {
        return Err(Error::Fingerprint { bundle: std::mem::take(&mut bundle.fingerprint), circuit });
    }
    bundle.check_shape()?;
    Ok(bundle)
}

pub fn write_bundle_file(path: &Path, bundle: &ModelBundle) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::Io { path: Some(path.into()), source: e })?;
    let mut w = std::io::BufWriter::new(f);
    save_bundle(bundle, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_bundle_file(path: &Path, spec: &CircuitSpec) -> Result<ModelBundle> {
    let f = std::fs::File::open(path).map_err(|e| Error::Io { path: Some(path.into()), source: e })?;
    load_bundle(std::io::BufReader::new(f), spec)
}
