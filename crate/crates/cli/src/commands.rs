//! The four commands behind the CLI. Everything a command needs is
//! derived from the config alone — demands and measurements are
//! regenerated in memory rather than read back from disk, so no command
//! can silently mix files from different runs.

use std::fs;
use std::path::{Path, PathBuf};

use lspkit::lsp::{
    bisection_search, brute_force_lsp, genetic_search, max_undetected_area, EvalContext,
    SearchOutcome, SearchSpace,
};
use lspkit::measurement::{
    generate_demands, measure, write_demands_csv, write_measurements_csv, DemandConfig,
};
use lspkit::{
    DemandSeries, DetectorModel, MeasurementSeries, NetworkModel, SolverOptions, ValidationReport,
};
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::manifest::Manifest;

/// Command failure, sorted by how it should exit: network files that do
/// not parse and module errors are faults (exit 2); an oracle-check
/// disagreement is a negative verdict, not a fault (exit 1).
#[derive(Debug)]
pub enum CmdError {
    Core(lspkit::Error),
    Parse(ValidationReport),
    Mismatch(String),
}

impl From<lspkit::Error> for CmdError {
    fn from(e: lspkit::Error) -> CmdError {
        CmdError::Core(e)
    }
}

impl From<std::io::Error> for CmdError {
    fn from(e: std::io::Error) -> CmdError {
        CmdError::Core(lspkit::Error::Io(e))
    }
}

impl CmdError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CmdError::Mismatch(_) => 1,
            _ => 2,
        }
    }

    pub fn report(&self) {
        match self {
            CmdError::Core(e) => eprintln!("error[{}]: {e}", e.code()),
            CmdError::Parse(rep) => {
                for issue in &rep.warnings {
                    eprintln!("warning: {issue}");
                }
                for issue in &rep.errors {
                    eprintln!("error: {issue}");
                }
            }
            CmdError::Mismatch(msg) => eprintln!("check failed: {msg}"),
        }
    }
}

type CmdResult<T> = Result<T, CmdError>;

/// Everything the commands share: the network (with horizon and timestep
/// from the config), solver options, demands, and clean measurements.
struct Prepared {
    model: NetworkModel,
    opts: SolverOptions,
    demands: DemandSeries,
    clean: MeasurementSeries,
    train_end: usize,
    val_end: usize,
    starts: Vec<usize>,
}

fn load_model(cfg: &ExperimentConfig) -> CmdResult<NetworkModel> {
    let text = fs::read_to_string(&cfg.network)?;
    let (model, report) = lspkit::parse_inp_verbose(&text);
    for issue in &report.warnings {
        eprintln!("warning: {issue}");
    }
    let mut model = match model {
        Some(m) if report.is_ok() => m,
        _ => return Err(CmdError::Parse(report)),
    };
    let sensors = fs::read_to_string(&cfg.sensors)?;
    model.sensors = lspkit::parse_sensors_json(&sensors)?;
    model.sensor_indices()?; // unknown sensor ids fail here, not mid-run
    model.hydraulic_timestep = cfg.timestep as f64;
    model.duration = (cfg.total_days() * 86_400) as f64;
    Ok(model)
}

fn prepare(cfg: &ExperimentConfig) -> CmdResult<Prepared> {
    cfg.validate()?;
    let model = load_model(cfg)?;
    let opts = SolverOptions {
        discharge_coeff: cfg.discharge_coeff,
        ..SolverOptions::default()
    };
    let demands = generate_demands(
        &model,
        cfg.seed,
        model.num_steps(),
        &DemandConfig {
            sigma: cfg.demand_sigma,
        },
    );
    let clean = measure(&model, &opts, &demands, None)?;
    let (train_end, val_end, starts) = cfg.windows(model.num_steps());
    Ok(Prepared {
        model,
        opts,
        demands,
        clean,
        train_end,
        val_end,
        starts,
    })
}

fn train_detector(cfg: &ExperimentConfig, prep: &Prepared) -> CmdResult<DetectorModel> {
    let train = prep.clean.slice(0, prep.train_end);
    let val = prep.clean.slice(prep.train_end, prep.val_end);
    let det = lspkit::detector::train(&train, Some(&val), cfg.rule_kind()?, &cfg.train_params())?;
    for w in &det.meta.warnings {
        eprintln!("warning: {w}");
    }
    Ok(det)
}

fn out_dir(cfg: &ExperimentConfig) -> CmdResult<PathBuf> {
    let dir = PathBuf::from(&cfg.out_dir);
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn write_file(manifest: &mut Manifest, path: &Path, bytes: &[u8]) -> CmdResult<()> {
    fs::write(path, bytes)?;
    manifest.add_output(path)?;
    Ok(())
}

fn manifest_for<'a>(command: &'a str, cfg: &'a ExperimentConfig) -> CmdResult<Manifest<'a>> {
    let mut m = Manifest::new(command, cfg);
    m.add_input(Path::new(&cfg.network))?;
    m.add_input(Path::new(&cfg.sensors))?;
    Ok(m)
}

pub fn cmd_simulate(cfg: &ExperimentConfig) -> CmdResult<()> {
    let prep = prepare(cfg)?;
    let dir = out_dir(cfg)?;
    let mut manifest = manifest_for("simulate", cfg)?;

    let mut buf = Vec::new();
    write_demands_csv(&prep.model, &prep.demands, &mut buf)?;
    write_file(&mut manifest, &dir.join("demands.csv"), &buf)?;

    let mut buf = Vec::new();
    write_measurements_csv(&prep.clean, &mut buf)?;
    write_file(&mut manifest, &dir.join("measurements.csv"), &buf)?;

    manifest.write(&dir)?;
    println!(
        "simulated {} steps of {} s: {} junction demands, {} sensors -> {}",
        prep.model.num_steps(),
        cfg.timestep,
        prep.model.junctions.len(),
        prep.model.sensors.len(),
        dir.display()
    );
    Ok(())
}

pub fn cmd_train(cfg: &ExperimentConfig) -> CmdResult<()> {
    let prep = prepare(cfg)?;
    let det = train_detector(cfg, &prep)?;
    let dir = out_dir(cfg)?;
    let mut manifest = manifest_for("train", cfg)?;

    let train = prep.clean.slice(0, prep.train_end);
    let val = prep.clean.slice(prep.train_end, prep.val_end);
    println!(
        "false alarms: {} / {} training rows, {} / {} validation rows",
        det.false_alarms(&train)?,
        train.num_steps(),
        det.false_alarms(&val)?,
        val.num_steps()
    );

    let mut json = det.to_json();
    json.push('\n');
    write_file(&mut manifest, &dir.join("detector.json"), json.as_bytes())?;
    manifest.write(&dir)?;
    println!("wrote {}", dir.join("detector.json").display());
    Ok(())
}

/// Per-node maximum undetected area over all candidate starts — the
/// map-plotting table. Nodes are independent, so the scan parallelizes
/// over them without affecting the result.
fn node_area_table(
    space: &SearchSpace,
    ctx: &EvalContext,
) -> lspkit::Result<Vec<(usize, usize, f64, bool)>> {
    space
        .nodes
        .par_iter()
        .map(|&node| {
            let mut best_area = 0.0;
            let mut best_start = space.starts[0];
            let mut unbounded = false;
            let mut incumbent = None;
            for &start in &space.starts {
                let fit = max_undetected_area(node, start, ctx, incumbent)?;
                if fit.area > best_area {
                    best_area = fit.area;
                    best_start = start;
                    unbounded = fit.unbounded;
                    incumbent = Some(fit.area);
                }
            }
            Ok((node, best_start, best_area, unbounded))
        })
        .collect()
}

fn write_nodes_csv(model: &NetworkModel, rows: &[(usize, usize, f64, bool)]) -> Vec<u8> {
    let mut out = String::from("node,max_undetected_area,best_start,unbounded\n");
    for &(node, start, area, unbounded) in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            model.node_id(node),
            area,
            start,
            unbounded as u8
        ));
    }
    out.into_bytes()
}

fn run_method(
    cfg: &ExperimentConfig,
    space: &SearchSpace,
    ctx: &EvalContext,
) -> lspkit::Result<SearchOutcome> {
    match cfg.method.as_str() {
        "bisection" => bisection_search(space, ctx, cfg.prune),
        "ga-basic" | "ga-spectral" => genetic_search(space, ctx, &cfg.ga_config()),
        "oracle" => brute_force_lsp(space, ctx),
        other => Err(lspkit::Error::Invalid(format!("unknown method '{other}'"))),
    }
}

fn search_setup<'a>(
    cfg: &ExperimentConfig,
    prep: &'a Prepared,
    det: &'a DetectorModel,
) -> CmdResult<(SearchSpace, EvalContext<'a>)> {
    let space = SearchSpace::junctions_except(
        &prep.model,
        &cfg.exclude_nodes,
        prep.starts.clone(),
        cfg.k(),
    )?
    .with_bounds(cfg.area_lo, cfg.area_hi, cfg.area_tol);
    let ctx = EvalContext::new(&prep.model, prep.opts.clone(), &prep.demands, det, &space)?;
    Ok((space, ctx))
}

pub fn cmd_lsp(cfg: &ExperimentConfig) -> CmdResult<()> {
    let prep = prepare(cfg)?;
    let det = train_detector(cfg, &prep)?;
    let (space, ctx) = search_setup(cfg, &prep, &det)?;

    let outcome = run_method(cfg, &space, &ctx)?;
    let table = node_area_table(&space, &ctx)?;

    let dir = out_dir(cfg)?;
    let mut manifest = manifest_for("lsp", cfg)?;

    let mut json = outcome.to_json();
    json.push('\n');
    write_file(&mut manifest, &dir.join("outcome.json"), json.as_bytes())?;

    let mut buf = Vec::new();
    outcome.write_trace_csv(&mut buf)?;
    write_file(&mut manifest, &dir.join("trace.csv"), &buf)?;

    let buf = write_nodes_csv(&prep.model, &table);
    write_file(&mut manifest, &dir.join("nodes.csv"), &buf)?;

    manifest.write(&dir)?;
    for w in ctx.warnings() {
        eprintln!("warning: {w}");
    }
    println!(
        "{}: node={} start={} area={} cm2 unbounded={} evaluations={}",
        outcome.method,
        outcome.lsp_node_id,
        outcome.best_start,
        outcome.max_undetected_area,
        outcome.unbounded,
        outcome.evaluations
    );
    println!("wrote {}", dir.join("outcome.json").display());
    Ok(())
}

pub fn cmd_oracle_check(cfg: &ExperimentConfig) -> CmdResult<()> {
    let prep = prepare(cfg)?;
    let det = train_detector(cfg, &prep)?;
    let (space, ctx) = search_setup(cfg, &prep, &det)?;

    let outcome = run_method(cfg, &space, &ctx)?;
    println!(
        "{}: node={} start={} area={} cm2",
        outcome.method, outcome.lsp_node_id, outcome.best_start, outcome.max_undetected_area
    );

    let dir = out_dir(cfg)?;
    let manifest = manifest_for("oracle-check", cfg)?;
    manifest.write(&dir)?;

    if cfg.method == "oracle" {
        println!("method is the oracle itself; agreement holds trivially");
        return Ok(());
    }

    let oracle = brute_force_lsp(&space, &ctx)?;
    println!(
        "oracle: node={} start={} area={} cm2",
        oracle.lsp_node_id, oracle.best_start, oracle.max_undetected_area
    );
    let area_gap = (outcome.max_undetected_area - oracle.max_undetected_area).abs();
    if outcome.lsp_node == oracle.lsp_node && area_gap <= space.area_tol {
        println!("agreement: node match, area within {}", space.area_tol);
        Ok(())
    } else {
        Err(CmdError::Mismatch(format!(
            "{} found node {} (area {}), oracle found node {} (area {})",
            outcome.method,
            outcome.lsp_node_id,
            outcome.max_undetected_area,
            oracle.lsp_node_id,
            oracle.max_undetected_area
        )))
    }
}
