//! Feature construction, the five model families, validation-based
//! selection, metrics and the model-bundle file.

mod bundle;
mod features;
mod gbt;
mod metrics;
mod mlp;
mod simple;
mod train;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

pub use bundle::{load_bundle, read_bundle_file, save_bundle, write_bundle_file, ModelBundle, BUNDLE_MAGIC, BUNDLE_VERSION};
pub use features::{build_features, views, FeatureSchema, RawEvent, View};
pub use gbt::{fit_gbt, GbtHyper, GbtModel, Node, Tree};
pub use metrics::{mape, mse, MAPE_FLOOR};
pub use mlp::{fit_mlp, mlp_loss_gradient, MlpHyper, MlpModel};
pub use simple::{fit_mean, LinearModel, TableModel};
pub use train::{
    evaluate, grid_search, select_bundle, train_all, train_predictor, write_metrics, write_report, write_timing, CandidateReport,
    GbtGrid, MetricRow, MlpGrid, TrainConfig, Training,
};

use crate::dataset::{EventKind, EventRecord};
use crate::par::{self, Strategy};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predictor {
    Output,
    State,
    DynamicEnergy,
    StaticEnergy,
    Latency,
}

impl Predictor {
    pub const ALL: [Predictor; 5] =
        [Predictor::Output, Predictor::State, Predictor::DynamicEnergy, Predictor::StaticEnergy, Predictor::Latency];

    pub fn name(self) -> &'static str {
        match self {
            Predictor::Output => "M_O",
            Predictor::State => "M_V",
            Predictor::DynamicEnergy => "M_E_D",
            Predictor::StaticEnergy => "M_E_S",
            Predictor::Latency => "M_L",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn uses_o_prev(self) -> bool {
        matches!(self, Predictor::DynamicEnergy | Predictor::Latency)
    }

    /// Event kinds in this predictor's training view.
    pub fn accepts(self, kind: EventKind) -> bool {
        match self {
            Predictor::DynamicEnergy | Predictor::Latency => kind == EventKind::E1,
            Predictor::StaticEnergy => kind != EventKind::E1,
            Predictor::Output => kind != EventKind::E2,
            Predictor::State => true,
        }
    }

    pub fn kind_filter(self) -> &'static str {
        match self {
            Predictor::DynamicEnergy | Predictor::Latency => "E1",
            Predictor::StaticEnergy => "E2+E3",
            Predictor::Output => "E1+E3",
            Predictor::State => "E1+E2+E3",
        }
    }

    /// Training targets are kept in fJ and ps.
    pub fn target_scale(self) -> f64 {
        match self {
            Predictor::DynamicEnergy | Predictor::StaticEnergy => 1e15,
            Predictor::Latency => 1e12,
            Predictor::Output | Predictor::State => 1.0,
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            Predictor::DynamicEnergy | Predictor::StaticEnergy => "fJ",
            Predictor::Latency => "ps",
            Predictor::Output | Predictor::State => "V",
        }
    }

    /// Target in SI units.
    pub fn target(self, r: &EventRecord) -> Option<f64> {
        match self {
            Predictor::Output => Some(r.o),
            Predictor::State => Some(r.v_end),
            Predictor::DynamicEnergy | Predictor::StaticEnergy => Some(r.energy),
            Predictor::Latency => r.latency,
        }
    }

    pub fn scaled_target(self, r: &EventRecord) -> Option<f64> {
        self.target(r).map(|v| v * self.target_scale())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Mean,
    Table,
    Linear,
    Gbt,
    Mlp,
}

impl Family {
    pub const ALL: [Family; 5] = [Family::Mean, Family::Table, Family::Linear, Family::Gbt, Family::Mlp];

    pub fn name(self) -> &'static str {
        match self {
            Family::Mean => "mean",
            Family::Table => "table",
            Family::Linear => "linear",
            Family::Gbt => "gbt",
            Family::Mlp => "mlp",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Hyper {
    Mean,
    Table,
    Linear,
    Gbt(GbtHyper),
    Mlp(MlpHyper),
}

impl Hyper {
    pub fn family(&self) -> Family {
        match self {
            Hyper::Mean => Family::Mean,
            Hyper::Table => Family::Table,
            Hyper::Linear => Family::Linear,
            Hyper::Gbt(_) => Family::Gbt,
            Hyper::Mlp(_) => Family::Mlp,
        }
    }

    pub fn default_for(family: Family) -> Self {
        match family {
            Family::Mean => Hyper::Mean,
            Family::Table => Hyper::Table,
            Family::Linear => Hyper::Linear,
            Family::Gbt => Hyper::Gbt(GbtHyper::default()),
            Family::Mlp => Hyper::Mlp(MlpHyper::default()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "model", rename_all = "snake_case")]
pub enum Params {
    Mean(f64),
    Table(TableModel),
    Linear(LinearModel),
    Gbt(GbtModel),
    Mlp(MlpModel),
}

/// A fitted predictor. Inputs are normalized feature rows; outputs are SI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub family: Family,
    pub predictor: Predictor,
    pub schema: FeatureSchema,
    pub hyper: Hyper,
    pub params: Params,
    /// Validation MSE in scaled units (V^2, fJ^2, ps^2).
    pub val_mse: f64,
    /// NaN (stored as null) when no validation target clears the floor.
    #[serde(deserialize_with = "nan_if_null")]
    pub val_mape: f64,
}

fn nan_if_null<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

impl TrainedModel {
    fn predict_scaled(&self, z: &[f64]) -> f64 {
        match &self.params {
            Params::Mean(m) => *m,
            Params::Table(t) => t.predict(z),
            Params::Linear(l) => l.predict(z),
            Params::Gbt(g) => g.predict(z),
            Params::Mlp(m) => m.predict(z),
        }
    }

    fn check_width(&self, got: usize) -> Result<()> {
        let expected = self.schema.width();
        if got != expected {
            return Err(Error::WidthMismatch { expected, got });
        }
        Ok(())
    }

    pub fn predict_one(&self, z: &[f64]) -> Result<f64> {
        self.check_width(z.len())?;
        Ok(self.predict_scaled(z) / self.predictor.target_scale())
    }

    pub fn predict_batch(&self, features: ArrayView2<f64>) -> Result<Vec<f64>> {
        self.predict_batch_with(Strategy::Sequential, features)
    }

    /// Row `i` of the result equals `predict_one(row i)` bit for bit under
    /// any strategy.
    pub fn predict_batch_with(&self, strategy: Strategy, features: ArrayView2<f64>) -> Result<Vec<f64>> {
        self.check_width(features.ncols())?;
        let scale = self.predictor.target_scale();
        let n = features.nrows();
        let strategy = if n < 64 { Strategy::Sequential } else { strategy };
        Ok(par::map_range(strategy, n, |i| {
            let row = features.row(i);
            match row.as_slice() {
                Some(z) => self.predict_scaled(z),
                None => self.predict_scaled(&row.to_vec()),
            }
        })
        .into_iter()
        .map(|v| v / scale)
        .collect())
    }
}
