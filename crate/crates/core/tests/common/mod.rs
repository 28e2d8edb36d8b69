//! Shared fixtures: the bundled networks plus a trained detector.
//!
//! Each test binary compiles its own copy, so not every item is used by
//! every binary.
#![allow(dead_code)]

use std::fs;
use std::path::PathBuf;

use lspkit::measurement::{self, DemandConfig, DemandSeries, MeasurementSeries};
use lspkit::{
    parse_inp, parse_sensors_json, DetectorModel, NetworkModel, RuleKind, SolverOptions,
    TrainParams,
};

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

pub fn load_network(stem: &str) -> NetworkModel {
    let dir = data_dir();
    let text = fs::read_to_string(dir.join(format!("{stem}.inp"))).unwrap();
    let mut model = parse_inp(&text).unwrap_or_else(|rep| panic!("{stem}: {rep}"));
    let sensors = fs::read_to_string(dir.join(format!("{stem}.sensors.json"))).unwrap();
    model.sensors = parse_sensors_json(&sensors).unwrap();
    let rep = model.validate();
    assert!(rep.is_ok(), "{stem}: {rep}");
    model
}

/// Demands + measurements + a calibrated detector over the model's whole
/// horizon, split `train_frac` / rest-for-validation.
pub struct Pipeline {
    pub model: NetworkModel,
    pub opts: SolverOptions,
    pub demands: DemandSeries,
    pub measurements: MeasurementSeries,
    pub detector: DetectorModel,
}

pub fn pipeline(stem: &str, seed: u64, train_frac: f64) -> Pipeline {
    let model = load_network(stem);
    let opts = SolverOptions::default();
    let demands =
        measurement::generate_demands(&model, seed, model.num_steps(), &DemandConfig::default());
    let measurements = measurement::measure(&model, &opts, &demands, None).unwrap();
    let cut = (measurements.num_steps() as f64 * train_frac) as usize;
    let train = measurements.slice(0, cut);
    let val = measurements.slice(cut, measurements.num_steps());
    let detector = lspkit::detector::train(
        &train,
        Some(&val),
        RuleKind::WeightedSum,
        &TrainParams::default(),
    )
    .unwrap();
    Pipeline {
        model,
        opts,
        demands,
        measurements,
        detector,
    }
}
