//! Synthetic demands and sensor measurements.
//!
//! Demands follow base_demand × diurnal profile × weekly factor ×
//! lognormal noise, with every sample seeded independently from
//! (seed, junction, step) so series are reproducible regardless of
//! evaluation order. Measurements are the simulated pressures projected
//! onto the sensor junctions.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};

use crate::error::{Error, Result};
use crate::hydraulics::{self, LeakScenario, SimulationResult, SolverOptions};
use crate::model::NetworkModel;

#[derive(Debug, Clone)]
pub struct DemandConfig {
    /// Lognormal noise sigma; the noise has mean 1 for any sigma.
    pub sigma: f64,
}

impl Default for DemandConfig {
    fn default() -> Self {
        DemandConfig { sigma: 0.1 }
    }
}

/// Per-step, per-junction demands in m³/s.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandSeries {
    /// values[step][junction]
    pub values: Vec<Vec<f64>>,
    pub seed: u64,
    pub num_steps: usize,
}

impl DemandSeries {
    pub fn step(&self, t: usize) -> &[f64] {
        &self.values[t]
    }
}

/// Time-indexed pressures at the sensor junctions, column per sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSeries {
    /// values[step][sensor]
    pub values: Vec<Vec<f64>>,
    pub sensor_ids: Vec<String>,
    pub times: Vec<f64>,
}

impl MeasurementSeries {
    pub fn num_steps(&self) -> usize {
        self.values.len()
    }

    pub fn num_sensors(&self) -> usize {
        self.sensor_ids.len()
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t]
    }

    /// Rows `[from, to)` as a new series (for train/validation splits).
    pub fn slice(&self, from: usize, to: usize) -> MeasurementSeries {
        MeasurementSeries {
            values: self.values[from..to].to_vec(),
            sensor_ids: self.sensor_ids.clone(),
            times: self.times[from..to].to_vec(),
        }
    }
}

/// Two-peak diurnal demand profile (morning and evening), dimensionless.
pub fn diurnal_factor(hour_of_day: f64) -> f64 {
    let m = (hour_of_day - 7.5) / 2.2;
    let e = (hour_of_day - 19.0) / 2.8;
    0.75 + 0.42 * (-m * m).exp() + 0.38 * (-e * e).exp()
}

/// Weekend demand dips slightly.
pub fn weekly_factor(day: u64) -> f64 {
    if day % 7 >= 5 {
        0.9
    } else {
        1.0
    }
}

fn sample_seed(seed: u64, junction: u64, step: u64) -> u64 {
    let mut z = seed
        ^ junction.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ step.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic synthetic demand series. Junctions with zero base demand
/// stay at zero; all values are nonnegative.
pub fn generate_demands(
    model: &NetworkModel,
    seed: u64,
    num_steps: usize,
    cfg: &DemandConfig,
) -> DemandSeries {
    let dt = model.hydraulic_timestep;
    // exp(mu + sigma·Z) has mean 1 when mu = −sigma²/2
    let noise =
        LogNormal::new(-cfg.sigma * cfg.sigma / 2.0, cfg.sigma).expect("finite nonnegative sigma");
    let mut values = Vec::with_capacity(num_steps);
    for t in 0..num_steps {
        let secs = t as f64 * dt;
        let hour = (secs / 3600.0) % 24.0;
        let day = (secs / 86_400.0) as u64;
        let shape = diurnal_factor(hour) * weekly_factor(day);
        let mut row = Vec::with_capacity(model.junctions.len());
        for (j, junction) in model.junctions.iter().enumerate() {
            if junction.base_demand == 0.0 {
                row.push(0.0);
                continue;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(seed, j as u64, t as u64));
            let v = junction.base_demand * shape * noise.sample(&mut rng);
            row.push(v.max(0.0));
        }
        values.push(row);
    }
    DemandSeries {
        values,
        seed,
        num_steps,
    }
}

/// Run the simulation and project pressures onto the sensors.
pub fn measure(
    model: &NetworkModel,
    opts: &SolverOptions,
    demands: &DemandSeries,
    leak: Option<&LeakScenario>,
) -> Result<MeasurementSeries> {
    let result = hydraulics::run_eps(model, opts, demands, leak)?;
    project(model, &result)
}

/// Sensor projection of an existing simulation.
pub fn project(model: &NetworkModel, result: &SimulationResult) -> Result<MeasurementSeries> {
    let idx = model.sensor_indices()?;
    let values = result
        .states
        .iter()
        .map(|s| idx.iter().map(|&i| s.pressures[i]).collect())
        .collect();
    Ok(MeasurementSeries {
        values,
        sensor_ids: model.sensors.clone(),
        times: result.times.clone(),
    })
}

/// `step,<junction ids...>` rows, preceded by a `# seed` comment so the
/// series can be re-imported losslessly.
pub fn write_demands_csv<W: std::io::Write>(
    model: &NetworkModel,
    demands: &DemandSeries,
    mut out: W,
) -> std::io::Result<()> {
    writeln!(out, "# seed {}", demands.seed)?;
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["step".to_string()];
    header.extend(model.junctions.iter().map(|j| j.id.clone()));
    w.write_record(&header)?;
    for (t, row) in demands.values.iter().enumerate() {
        let mut rec = vec![t.to_string()];
        rec.extend(row.iter().map(|v| hydraulics::format_float(*v)));
        w.write_record(&rec)?;
    }
    w.flush()
}

pub fn read_demands_csv<R: std::io::BufRead>(mut input: R) -> Result<DemandSeries> {
    let mut first = String::new();
    input
        .read_line(&mut first)
        .map_err(|e| Error::Invalid(format!("demands csv: {e}")))?;
    let seed = first
        .trim()
        .strip_prefix("# seed ")
        .and_then(|s| s.parse::<u64>().ok())
        .ok_or_else(|| Error::Invalid("demands csv: missing '# seed' line".into()))?;
    let mut r = csv::Reader::from_reader(input);
    let mut values = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::Invalid(format!("demands csv: {e}")))?;
        let row: std::result::Result<Vec<f64>, _> =
            rec.iter().skip(1).map(|s| s.parse::<f64>()).collect();
        values.push(row.map_err(|e| Error::Invalid(format!("demands csv: {e}")))?);
    }
    Ok(DemandSeries {
        seed,
        num_steps: values.len(),
        values,
    })
}

/// `step,time_s,<sensor ids...>` rows.
pub fn write_measurements_csv<W: std::io::Write>(
    m: &MeasurementSeries,
    out: W,
) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["step".to_string(), "time_s".to_string()];
    header.extend(m.sensor_ids.iter().cloned());
    w.write_record(&header)?;
    for (t, row) in m.values.iter().enumerate() {
        let mut rec = vec![t.to_string(), hydraulics::format_float(m.times[t])];
        rec.extend(row.iter().map(|v| hydraulics::format_float(*v)));
        w.write_record(&rec)?;
    }
    w.flush()
}

pub fn read_measurements_csv<R: std::io::Read>(input: R) -> Result<MeasurementSeries> {
    let mut r = csv::Reader::from_reader(input);
    let sensor_ids: Vec<String> = r
        .headers()
        .map_err(|e| Error::Invalid(format!("measurements csv: {e}")))?
        .iter()
        .skip(2)
        .map(|s| s.to_string())
        .collect();
    let mut values = Vec::new();
    let mut times = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::Invalid(format!("measurements csv: {e}")))?;
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| Error::Invalid(format!("measurements csv: {e}")))
        };
        times.push(parse(rec.get(1).unwrap_or(""))?);
        let row: Result<Vec<f64>> = rec.iter().skip(2).map(parse).collect();
        values.push(row?);
    }
    Ok(MeasurementSeries {
        values,
        sensor_ids,
        times,
    })
}
