//! Experiment configuration: a flat-key JSON file, every key overridable
//! from the command line.

use std::fs;
use std::path::Path;

use lspkit::{Error, GaConfig, GaVariant, Result, RuleKind, TrainParams};
use serde::{Deserialize, Serialize};

/// One experiment, end to end: which network, how long to simulate, how
/// the detector is trained, and how the least sensitive point is searched.
///
/// `seed` drives every random draw of the run — demand noise and, for the
/// GA methods, the search itself — so a config is a complete recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Network description (.inp).
    pub network: String,
    /// Sensor list (JSON, `{"sensors": [...]}`).
    pub sensors: String,
    pub seed: u64,
    /// Seed for GA trials; when absent the GA reuses `seed`. Separate so
    /// that repeated trials can vary the search while the simulated
    /// demands — and therefore the oracle — stay fixed.
    pub ga_seed: Option<u64>,
    pub train_days: usize,
    pub val_days: usize,
    pub search_days: usize,
    /// Hydraulic timestep, seconds; must divide one day evenly.
    pub timestep: u64,
    /// Lognormal demand-noise sigma.
    pub demand_sigma: f64,
    /// Alarm rule: "weighted-sum" or "max-threshold".
    pub rule: String,
    /// Weighted-sum calibration margin over validation residuals.
    pub gamma: f64,
    /// Max-threshold margin over training residuals.
    pub threshold_factor: f64,
    /// Ridge fallback strength for rank-deficient regressions.
    pub ridge: f64,
    /// Leak window length, hours; must be a whole number of timesteps.
    pub k_hours: u64,
    /// "bisection", "ga-basic", "ga-spectral", or "oracle".
    pub method: String,
    /// Bisection only: drop dominated nodes/starts as the bracket moves.
    pub prune: bool,
    pub population: usize,
    pub generations: usize,
    pub tournament_size: usize,
    pub mutation_rate: f64,
    pub mutation_sigma: f64,
    /// Leak-area bracket and resolution, cm².
    pub area_lo: f64,
    pub area_hi: f64,
    pub area_tol: f64,
    /// Orifice discharge coefficient for leak outflow.
    pub discharge_coeff: f64,
    /// Junction ids never considered as leak candidates.
    pub exclude_nodes: Vec<String>,
    pub out_dir: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let ga = GaConfig::default();
        let tp = TrainParams::default();
        ExperimentConfig {
            network: String::new(),
            sensors: String::new(),
            seed: 42,
            ga_seed: None,
            train_days: 4,
            val_days: 1,
            search_days: 2,
            timestep: 1800,
            demand_sigma: 0.1,
            rule: "weighted-sum".into(),
            gamma: tp.gamma,
            threshold_factor: tp.threshold_factor,
            ridge: tp.ridge,
            k_hours: 3,
            method: "bisection".into(),
            prune: true,
            population: ga.population,
            generations: ga.generations,
            tournament_size: ga.tournament_size,
            mutation_rate: ga.mutation_rate,
            mutation_sigma: ga.mutation_sigma,
            area_lo: 0.1,
            area_hi: 500.0,
            area_tol: 0.5,
            discharge_coeff: 0.75,
            exclude_nodes: Vec::new(),
            out_dir: "out".into(),
        }
    }
}

pub const METHODS: [&str; 4] = ["bisection", "ga-basic", "ga-spectral", "oracle"];

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Invalid(format!("config {}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        if self.network.is_empty() {
            return Err(Error::Invalid("no network file configured".into()));
        }
        if self.sensors.is_empty() {
            return Err(Error::Invalid("no sensors file configured".into()));
        }
        for (name, v) in [
            ("train_days", self.train_days),
            ("val_days", self.val_days),
            ("search_days", self.search_days),
        ] {
            if v < 1 {
                return Err(Error::Invalid(format!(
                    "{name} must be at least 1, got {v}"
                )));
            }
        }
        if self.timestep == 0 || 86_400 % self.timestep != 0 {
            return Err(Error::Invalid(format!(
                "timestep {} s does not divide one day evenly",
                self.timestep
            )));
        }
        if self.k_hours == 0 || (self.k_hours * 3600) % self.timestep != 0 {
            return Err(Error::Invalid(format!(
                "k_hours {} is not a whole number of {} s timesteps",
                self.k_hours, self.timestep
            )));
        }
        if !METHODS.contains(&self.method.as_str()) {
            return Err(Error::Invalid(format!(
                "unknown method '{}'; expected one of {METHODS:?}",
                self.method
            )));
        }
        self.rule_kind()?;
        if self.k() >= self.search_days * self.steps_per_day() + 1 {
            return Err(Error::Invalid(format!(
                "window of {} steps does not fit in {} search days",
                self.k(),
                self.search_days
            )));
        }
        Ok(())
    }

    pub fn rule_kind(&self) -> Result<RuleKind> {
        match self.rule.as_str() {
            "weighted-sum" => Ok(RuleKind::WeightedSum),
            "max-threshold" => Ok(RuleKind::MaxThreshold),
            other => Err(Error::Invalid(format!(
                "unknown rule '{other}'; expected \"weighted-sum\" or \"max-threshold\""
            ))),
        }
    }

    pub fn train_params(&self) -> TrainParams {
        TrainParams {
            gamma: self.gamma,
            threshold_factor: self.threshold_factor,
            ridge: self.ridge,
        }
    }

    pub fn ga_config(&self) -> GaConfig {
        let variant = if self.method == "ga-spectral" {
            GaVariant::Spectral
        } else {
            GaVariant::Basic
        };
        GaConfig {
            population: self.population,
            generations: self.generations,
            tournament_size: self.tournament_size,
            mutation_rate: self.mutation_rate,
            mutation_sigma: self.mutation_sigma,
            seed: self.ga_seed.unwrap_or(self.seed),
            variant,
        }
    }

    pub fn steps_per_day(&self) -> usize {
        (86_400 / self.timestep) as usize
    }

    /// Detection window length in steps.
    pub fn k(&self) -> usize {
        ((self.k_hours * 3600) / self.timestep) as usize
    }

    pub fn total_days(&self) -> usize {
        self.train_days + self.val_days + self.search_days
    }

    /// Step ranges: training `[0, a)`, validation `[a, b)`, and candidate
    /// leak starts `b ..= last` where a start's whole window still fits
    /// inside the horizon.
    pub fn windows(&self, num_steps: usize) -> (usize, usize, Vec<usize>) {
        let spd = self.steps_per_day();
        let train_end = self.train_days * spd;
        let val_end = train_end + self.val_days * spd;
        let last = num_steps - 1 - self.k();
        (train_end, val_end, (val_end..=last).collect())
    }
}
