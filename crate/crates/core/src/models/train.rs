use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::bundle::{CandidateScore, ModelBundle, BUNDLE_VERSION};
use super::features::{views, FeatureSchema, View};
use super::gbt::{fit_gbt, GbtHyper};
use super::metrics::{mape, mse, MAPE_FLOOR};
use super::mlp::{fit_mlp, MlpHyper};
use super::simple::{fit_mean, LinearModel, TableModel};
use super::{Family, Hyper, Params, Predictor, TrainedModel};
use crate::dataset::{Dataset, Split};
use crate::par::{self, Strategy};
use crate::{rng, Error, Result};

/// Gradient-boosting grid: the product of the axes below, with the remaining
/// settings taken from `base`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GbtGrid {
    pub base: GbtHyper,
    pub depth: Vec<usize>,
    pub trees: Vec<usize>,
    pub learning_rate: Vec<f64>,
    pub l2: Vec<f64>,
}

impl Default for GbtGrid {
    fn default() -> Self {
        let base = GbtHyper::default();
        GbtGrid { depth: vec![base.depth], trees: vec![base.trees], learning_rate: vec![0.1], l2: vec![1.0], base }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MlpGrid {
    pub base: MlpHyper,
    pub learning_rate: Vec<f64>,
    pub l2: Vec<f64>,
}

impl Default for MlpGrid {
    fn default() -> Self {
        MlpGrid { base: MlpHyper::default(), learning_rate: vec![1e-3], l2: vec![1e-4] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub families: Vec<Family>,
    pub gbt: GbtGrid,
    pub mlp: MlpGrid,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { families: Family::ALL.to_vec(), gbt: GbtGrid::default(), mlp: MlpGrid::default(), seed: 0 }
    }
}

impl TrainConfig {
    /// Candidate hyperparameters of one family, in search order.
    pub fn grid(&self, family: Family, predictor: Predictor) -> Vec<Hyper> {
        match family {
            Family::Gbt => {
                let mut out = Vec::new();
                let g = &self.gbt;
                for &depth in &g.depth {
                    for &trees in &g.trees {
                        for &lr in &g.learning_rate {
                            for &l2 in &g.l2 {
                                out.push(Hyper::Gbt(GbtHyper { depth, trees, learning_rate: lr, l2, ..g.base }));
                            }
                        }
                    }
                }
                out
            }
            Family::Mlp => {
                let mut out = Vec::new();
                for &lr in &self.mlp.learning_rate {
                    for &l2 in &self.mlp.l2 {
                        let seed = rng::derive(self.seed, "mlp", (predictor.index() * 10_000 + out.len()) as u64);
                        out.push(Hyper::Mlp(MlpHyper { learning_rate: lr, l2, seed, ..self.mlp.base.clone() }));
                    }
                }
                out
            }
            f => vec![Hyper::default_for(f)],
        }
    }
}

/// One grid candidate, for the training report.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateReport {
    pub predictor: Predictor,
    pub family: Family,
    pub hyper: String,
    pub val_mse: f64,
    pub val_mape: f64,
    pub train_seconds: f64,
}

fn empty(p: Predictor, which: &str) -> Error {
    Error::EmptyTrainingView { predictor: p.name().into(), filter: format!("{} ({which})", p.kind_filter()) }
}

fn scores(predictor: Predictor, pred: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    let scale = predictor.target_scale();
    Ok((mse(pred, y)?, mape(pred, y, MAPE_FLOOR * scale)?))
}

pub fn train_predictor(hyper: &Hyper, schema: &FeatureSchema, train: &View, val: &View, strategy: Strategy) -> Result<TrainedModel> {
    let p = schema.predictor;
    if train.is_empty() {
        return Err(empty(p, "train"));
    }
    if val.is_empty() {
        return Err(empty(p, "validation"));
    }
    let x = train.x.view();
    let params = match hyper {
        Hyper::Mean => Params::Mean(fit_mean(&train.y)),
        Hyper::Table => Params::Table(TableModel::fit(x, &train.y)),
        Hyper::Linear => Params::Linear(LinearModel::fit(x, &train.y)?),
        Hyper::Gbt(h) => Params::Gbt(fit_gbt(x, &train.y, *h, strategy).0),
        Hyper::Mlp(h) => Params::Mlp(fit_mlp(x, &train.y, val.x.view(), &val.y, h)),
    };
    let mut m = TrainedModel {
        family: hyper.family(),
        predictor: p,
        schema: schema.clone(),
        hyper: hyper.clone(),
        params,
        val_mse: 0.0,
        val_mape: 0.0,
    };
    let pred = scaled_predictions(&m, val.x.view(), strategy)?;
    (m.val_mse, m.val_mape) = scores(p, &pred, &val.y)?;
    Ok(m)
}

fn scaled_predictions(m: &TrainedModel, x: ArrayView2<f64>, strategy: Strategy) -> Result<Vec<f64>> {
    let s = m.predictor.target_scale();
    Ok(m.predict_batch_with(strategy, x)?.into_iter().map(|v| v * s).collect())
}

/// Train every candidate and keep the lowest validation MSE; ties go to the
/// earlier candidate.
pub fn grid_search(
    grid: &[Hyper],
    schema: &FeatureSchema,
    train: &View,
    val: &View,
    strategy: Strategy,
) -> Result<(TrainedModel, Vec<CandidateReport>)> {
    if grid.is_empty() {
        return Err(crate::error::invalid("empty hyperparameter grid"));
    }
    let mut best: Option<TrainedModel> = None;
    let mut reports = Vec::with_capacity(grid.len());
    for h in grid {
        let t0 = Instant::now();
        let m = train_predictor(h, schema, train, val, strategy)?;
        reports.push(CandidateReport {
            predictor: m.predictor,
            family: m.family,
            hyper: serde_json::to_string(h)?,
            val_mse: m.val_mse,
            val_mape: m.val_mape,
            train_seconds: t0.elapsed().as_secs_f64(),
        });
        if best.as_ref().is_none_or(|b| m.val_mse < b.val_mse) {
            best = Some(m);
        }
    }
    Ok((best.expect("non-empty grid"), reports))
}

/// Per-predictor argmin of validation MSE over `candidates`; ties go to the
/// earlier candidate.
pub fn select_bundle(candidates: &[TrainedModel], fingerprint: &str) -> Result<ModelBundle> {
    let mut models = Vec::with_capacity(5);
    for p in Predictor::ALL {
        let mut best: Option<&TrainedModel> = None;
        for m in candidates.iter().filter(|m| m.predictor == p) {
            if best.is_none_or(|b| m.val_mse < b.val_mse) {
                best = Some(m);
            }
        }
        models.push(best.ok_or_else(|| crate::error::invalid(format!("no candidate for {}", p.name())))?.clone());
    }
    Ok(ModelBundle {
        version: BUNDLE_VERSION,
        fingerprint: fingerprint.to_string(),
        models,
        candidates: candidates
            .iter()
            .map(|m| CandidateScore { predictor: m.predictor, family: m.family, val_mse: m.val_mse })
            .collect(),
    })
}

/// Result of training every configured family on every predictor.
#[derive(Debug, Clone)]
pub struct Training {
    /// Best family per predictor.
    pub bundle: ModelBundle,
    /// One bundle per family.
    pub families: BTreeMap<Family, ModelBundle>,
    pub report: Vec<CandidateReport>,
}

pub fn train_all(ds: &Dataset, cfg: &TrainConfig, strategy: Strategy) -> Result<Training> {
    if cfg.families.is_empty() {
        return Err(crate::error::invalid("no model families configured"));
    }
    let fp = ds.spec.fingerprint();
    let mut winners: Vec<TrainedModel> = Vec::new();
    let mut report = Vec::new();
    for p in Predictor::ALL {
        let (schema, tr, va, _) = views(ds, p);
        let fits = par::map(strategy, &cfg.families, |&f| grid_search(&cfg.grid(f, p), &schema, &tr, &va, strategy));
        for r in fits {
            let (m, rep) = r?;
            winners.push(m);
            report.extend(rep);
        }
    }
    let bundle = select_bundle(&winners, &fp)?;
    let mut families = BTreeMap::new();
    for &f in &cfg.families {
        let of: Vec<TrainedModel> = winners.iter().filter(|m| m.family == f).cloned().collect();
        families.insert(f, select_bundle(&of, &fp)?);
    }
    Ok(Training { bundle, families, report })
}

/// Test-split metrics of one model.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub predictor: Predictor,
    pub family: Family,
    pub split: Split,
    pub n: usize,
    /// In scaled units (V^2, fJ^2, ps^2).
    pub mse: f64,
    pub mape: f64,
}

pub fn evaluate(models: &[&TrainedModel], ds: &Dataset, split: Split, strategy: Strategy) -> Result<Vec<MetricRow>> {
    models
        .iter()
        .map(|m| {
            let v = View::from_records(&m.schema, ds.records_in(split));
            if v.is_empty() {
                return Ok(MetricRow { predictor: m.predictor, family: m.family, split, n: 0, mse: f64::NAN, mape: f64::NAN });
            }
            let pred = scaled_predictions(m, v.x.view(), strategy)?;
            let (mse, mape) = scores(m.predictor, &pred, &v.y)?;
            Ok(MetricRow { predictor: m.predictor, family: m.family, split, n: v.len(), mse, mape })
        })
        .collect()
}

pub fn write_metrics(rows: &[MetricRow], sink: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["predictor", "family", "split", "n", "mse", "mse_unit", "mape_percent"])?;
    for r in rows {
        w.write_record([
            r.predictor.name().to_string(),
            r.family.name().to_string(),
            r.split.as_str().to_string(),
            r.n.to_string(),
            r.mse.to_string(),
            format!("{}^2", r.predictor.unit()),
            r.mape.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Deterministic part of the training report.
pub fn write_report(reports: &[CandidateReport], sink: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["predictor", "family", "hyper", "val_mse", "mse_unit", "val_mape_percent"])?;
    for r in reports {
        w.write_record([
            r.predictor.name().to_string(),
            r.family.name().to_string(),
            r.hyper.clone(),
            r.val_mse.to_string(),
            format!("{}^2", r.predictor.unit()),
            r.val_mape.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Wall-clock training times, kept apart from the deterministic report.
pub fn write_timing(reports: &[CandidateReport], sink: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["predictor", "family", "hyper", "train_seconds"])?;
    for r in reports {
        w.write_record([r.predictor.name(), r.family.name(), &r.hyper, &format!("{:.6}", r.train_seconds)])?;
    }
    w.flush()?;
    Ok(())
}
