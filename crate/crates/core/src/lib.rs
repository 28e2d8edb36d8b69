//! Water-network leak blind-spot analysis.
//!
//! The pipeline: parse an EPANET-style network description, simulate its
//! hydraulics over time under noisy demands, train a residual-based leak
//! detector on pressure sensors, and then search for the network's *least
//! sensitive point* — the junction (and leak start time) where the
//! largest leak goes undetected. That point, and the leak area it
//! tolerates, quantify the blind spot an operator should fix first.
//!
//! Modules follow the pipeline:
//!
//! * [`inp`] — parse/write the `.inp` network format ([`model`] holds the
//!   validated network),
//! * [`hydraulics`] — steady-state and extended-period simulation with
//!   pressure-dependent leaks,
//! * [`measurement`] — synthetic demand generation and sensor readings,
//! * [`detector`] — per-sensor regression residuals + alarm rules,
//! * [`lsp`] — the search methods (bisection with pruning, genetic
//!   variants, brute force).
//!
//! Everything is deterministic for a given seed: simulations are pure,
//! random draws use seeded ChaCha8 streams, and parallel evaluations
//! reduce in index order.

pub mod detector;
pub mod error;
pub mod hydraulics;
pub mod inp;
pub mod lsp;
pub mod measurement;
pub mod model;

pub use detector::{DetectorModel, Rule, RuleKind, TrainParams};
pub use error::{Error, Result};
pub use hydraulics::{
    hazen_williams_headloss, leak_outflow, run_eps, run_eps_window, solve_steady_state,
    HydraulicState, LeakScenario, SimulationResult, SolverOptions,
};
pub use inp::{parse_inp, parse_inp_verbose, parse_sensors_json, write_inp};
pub use lsp::{
    bisection_search, brute_force_lsp, genetic_search, max_undetected_area, nearest_node,
    spectral_embedding, EvalContext, FitnessResult, GaConfig, GaVariant, NodeEmbedding,
    SearchOutcome, SearchSpace, TraceRow,
};
pub use measurement::{
    generate_demands, measure, project, DemandConfig, DemandSeries, MeasurementSeries,
};
pub use model::{
    Issue, IssueCode, Junction, NetworkModel, Pipe, Pump, PumpCurve, Reservoir, Tank,
    ValidationReport, Valve, ValveKind,
};
