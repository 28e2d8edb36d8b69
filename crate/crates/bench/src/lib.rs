//! Shared fixtures for the criterion benches: bundled networks wired up
//! to the point where a solve, a fitness evaluation, or a whole search
//! can start immediately.

use std::fs;
use std::path::Path;

use lspkit::lsp::SearchSpace;
use lspkit::measurement::{generate_demands, measure, DemandConfig};
use lspkit::{DemandSeries, DetectorModel, NetworkModel, RuleKind, SolverOptions, TrainParams};

pub struct Fixture {
    pub model: NetworkModel,
    pub opts: SolverOptions,
    pub demands: DemandSeries,
    pub detector: DetectorModel,
    pub space: SearchSpace,
}

pub fn load_network(stem: &str) -> NetworkModel {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data");
    let text = fs::read_to_string(dir.join(format!("{stem}.inp"))).expect("network file");
    let mut model = lspkit::parse_inp(&text).unwrap_or_else(|rep| panic!("{stem}: {rep}"));
    let sensors = fs::read_to_string(dir.join(format!("{stem}.sensors.json"))).expect("sensors");
    model.sensors = lspkit::parse_sensors_json(&sensors).unwrap();
    model
}

/// One-day toy_grid pipeline with a weighted-sum detector: 36 training
/// steps, the rest calibration, leak starts on a coarse grid.
pub fn toy_grid() -> Fixture {
    let model = load_network("toy_grid");
    let opts = SolverOptions::default();
    let demands = generate_demands(&model, 42, model.num_steps(), &DemandConfig::default());
    let clean = measure(&model, &opts, &demands, None).unwrap();
    let train = clean.slice(0, 36);
    let val = clean.slice(36, clean.num_steps());
    let detector = lspkit::detector::train(
        &train,
        Some(&val),
        RuleKind::WeightedSum,
        &TrainParams::default(),
    )
    .unwrap();
    let space = SearchSpace::new(
        (0..model.junctions.len()).collect(),
        vec![12, 18, 24, 30, 36],
        6,
    );
    Fixture {
        model,
        opts,
        demands,
        detector,
        space,
    }
}

pub fn base_demands(model: &NetworkModel) -> Vec<f64> {
    model.junctions.iter().map(|j| j.base_demand).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use lspkit::lsp::EvalContext;

    #[test]
    fn fixtures_build_and_evaluate() {
        let f = toy_grid();
        assert_eq!(f.model.num_steps(), 49);
        let ctx =
            EvalContext::new(&f.model, f.opts.clone(), &f.demands, &f.detector, &f.space).unwrap();
        let fit = lspkit::lsp::max_undetected_area(f.space.nodes[0], 12, &ctx, None).unwrap();
        assert!(fit.area >= 0.0);
    }
}
