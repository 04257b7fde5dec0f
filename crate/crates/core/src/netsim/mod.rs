//! Network workloads built from many surrogate circuit instances: a layered
//! crossbar ANN, a LIF spiking network, the error-propagation study and the
//! runtime-scaling benchmark.

mod ann;
mod digits;
mod quant;
mod snn;
mod study;

pub use ann::{accuracy, argmax, run_ann_inference, run_ann_oracle, train_ann, AnnConfig, AnnLayer, AnnOutput, LayeredAnn};
pub use digits::{digits, load_digits, split_digits, Digit, CLASSES, PIXELS};
pub use quant::{quantize, Quantizer};
pub use snn::{poisson_encode, run_snn, run_snn_oracle, train_snn, SnnConfig, SnnOutput, SpikingNet, StateMode};
pub use study::{
    error_propagation_study, runtime_benchmark, trend, write_bench, write_bench_timing, write_inferences, write_study_series,
    write_study_summary, BenchRow, InferenceRow, ModeErrors, PredictorStudy, StudyResult, Trend,
};
