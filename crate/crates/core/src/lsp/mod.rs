//! Least Sensitive Point search.
//!
//! The adversary's question: at which junction, and starting when, can
//! the largest leak run for a whole detection window without tripping the
//! alarm? Every search method here answers it by maximizing the same
//! fitness — the largest undetected leak area for a (node, start) pair,
//! found by bisection over the area axis — and differs only in how it
//! explores the (node, start) grid:
//!
//! * [`bisection_search`] — shared-area bisection over the whole grid
//!   with sound pruning of dominated rows/columns,
//! * [`genetic_search`] — seeded GA, plain or on a spectral embedding,
//! * [`brute_force_lsp`] — exhaustive oracle for small spaces.
//!
//! All methods are deterministic: parallel fitness evaluations reduce in
//! index order and random draws come from one seeded stream.

mod ga;
mod spectral;

pub use ga::{genetic_search, GaConfig, GaVariant};
pub use spectral::{nearest_node, spectral_embedding, NodeEmbedding};

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector::DetectorModel;
use crate::error::{Error, Result};
use crate::hydraulics::{run_eps, run_eps_window, LeakScenario, SolverOptions};
use crate::measurement::{project, DemandSeries};
use crate::model::NetworkModel;

/// Hard cap on |nodes| × |starts| for the exhaustive oracle.
pub const BRUTE_FORCE_CAP: usize = 10_000;

/// Candidate grid and area bracket for a search.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchSpace {
    /// Candidate leak nodes (junction indices), sorted ascending.
    pub nodes: Vec<usize>,
    /// Candidate start steps, sorted ascending.
    pub starts: Vec<usize>,
    /// Detection window length: a window covers steps {t, …, t+k}.
    pub k: usize,
    /// Smallest leak area considered, cm².
    pub area_lo: f64,
    /// Largest leak area considered, cm².
    pub area_hi: f64,
    /// Area resolution of the line search, cm².
    pub area_tol: f64,
}

impl SearchSpace {
    /// Build a space from explicit candidates; sorts and dedups both axes.
    pub fn new(mut nodes: Vec<usize>, mut starts: Vec<usize>, k: usize) -> SearchSpace {
        nodes.sort_unstable();
        nodes.dedup();
        starts.sort_unstable();
        starts.dedup();
        SearchSpace {
            nodes,
            starts,
            k,
            area_lo: 0.1,
            area_hi: 500.0,
            area_tol: 0.5,
        }
    }

    pub fn with_bounds(mut self, lo: f64, hi: f64, tol: f64) -> SearchSpace {
        self.area_lo = lo;
        self.area_hi = hi;
        self.area_tol = tol;
        self
    }

    /// All junctions except `exclude` (by id), over the given starts.
    pub fn junctions_except(
        model: &NetworkModel,
        exclude: &[String],
        starts: Vec<usize>,
        k: usize,
    ) -> Result<SearchSpace> {
        let mut out: Vec<usize> = Vec::new();
        let mut drop = Vec::new();
        for id in exclude {
            let idx = model.node_index(id)?;
            if idx >= model.junctions.len() {
                return Err(Error::Invalid(format!(
                    "excluded node '{id}' is not a junction"
                )));
            }
            drop.push(idx);
        }
        for i in 0..model.junctions.len() {
            if !drop.contains(&i) {
                out.push(i);
            }
        }
        Ok(SearchSpace::new(out, starts, k))
    }

    pub fn pair_count(&self) -> usize {
        self.nodes.len() * self.starts.len()
    }

    pub fn validate(&self, model: &NetworkModel) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::EmptySpace("no candidate nodes"));
        }
        if self.starts.is_empty() {
            return Err(Error::EmptySpace("no candidate start steps"));
        }
        if !(self.area_lo > 0.0 && self.area_lo < self.area_hi && self.area_tol > 0.0) {
            return Err(Error::Invalid(format!(
                "bad area bracket [{}, {}] tol {}",
                self.area_lo, self.area_hi, self.area_tol
            )));
        }
        for &n in &self.nodes {
            if n >= model.junctions.len() {
                return Err(Error::Invalid(format!(
                    "candidate node {n} is not a junction"
                )));
            }
        }
        let steps = model.num_steps();
        let last = *self.starts.last().unwrap();
        if last + self.k >= steps {
            return Err(Error::Range {
                start: last,
                end: last + self.k,
                len: steps,
            });
        }
        Ok(())
    }
}

/// Everything a fitness evaluation needs, plus the shared simulation
/// counter. Cheap to share across threads; all evaluation methods are
/// `&self`.
pub struct EvalContext<'a> {
    pub model: &'a NetworkModel,
    pub opts: SolverOptions,
    pub demands: &'a DemandSeries,
    pub detector: &'a DetectorModel,
    pub k: usize,
    pub area_lo: f64,
    pub area_hi: f64,
    pub area_tol: f64,
    /// Grid-check detection monotonicity on every fitness call (slow;
    /// emits NONMONOTONE warnings).
    pub audit_monotone: bool,
    /// Tank levels at each step of the leak-free run; the window
    /// simulation starts from these, which reproduces the full run
    /// exactly for leaks that begin at the window start.
    baseline_levels: Vec<Vec<f64>>,
    evals: AtomicU64,
    warnings: Mutex<Vec<String>>,
}

impl<'a> EvalContext<'a> {
    /// Runs the leak-free baseline simulation once and caches its tank
    /// trajectory. Bounds, tolerance and window length are copied from
    /// `space` so every search over this context is coherent with it.
    pub fn new(
        model: &'a NetworkModel,
        opts: SolverOptions,
        demands: &'a DemandSeries,
        detector: &'a DetectorModel,
        space: &SearchSpace,
    ) -> Result<EvalContext<'a>> {
        if detector.sensor_ids != model.sensors {
            return Err(Error::Invalid(
                "detector was trained on a different sensor set than the model declares".into(),
            ));
        }
        if demands.num_steps < model.num_steps() {
            return Err(Error::DimMismatch {
                want: model.num_steps(),
                got: demands.num_steps,
            });
        }
        let baseline = run_eps(model, &opts, demands, None)?;
        if !baseline.all_converged() {
            return Err(Error::NoConvergence {
                step: 0,
                iterations: opts.max_iter,
            });
        }
        Ok(EvalContext {
            model,
            opts,
            demands,
            detector,
            k: space.k,
            area_lo: space.area_lo,
            area_hi: space.area_hi,
            area_tol: space.area_tol,
            audit_monotone: false,
            baseline_levels: baseline.tank_levels,
            evals: AtomicU64::new(0),
            warnings: Mutex::new(Vec::new()),
        })
    }

    pub fn with_audit(mut self) -> EvalContext<'a> {
        self.audit_monotone = true;
        self
    }

    /// Total leak-window simulations run through this context.
    pub fn evaluations(&self) -> u64 {
        self.evals.load(Ordering::Relaxed)
    }

    /// Warnings collected so far, sorted and deduplicated.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = self.warnings.lock().unwrap().clone();
        w.sort();
        w.dedup();
        w
    }

    fn warn(&self, msg: String) {
        self.warnings.lock().unwrap().push(msg);
    }

    /// One windowed leak simulation: does the detector fire anywhere in
    /// the window {start, …, start+k}?
    pub fn detected(&self, node: usize, start: usize, area_cm2: f64) -> Result<bool> {
        let leak = LeakScenario {
            node_index: node,
            area_cm2,
            start_step: start,
            duration_steps: self.k,
        };
        let sim = run_eps_window(
            self.model,
            &self.opts,
            self.demands,
            Some(&leak),
            start,
            start + self.k,
            &self.baseline_levels[start],
        )?;
        self.evals.fetch_add(1, Ordering::Relaxed);
        if !sim.all_converged() {
            return Err(Error::NoConvergence {
                step: start,
                iterations: self.opts.max_iter,
            });
        }
        let m = project(self.model, &sim)?;
        self.detector.detect_window(&m, 0, self.k)
    }

    /// Grid check of "bigger leaks are not less detectable".
    fn audit(&self, node: usize, start: usize) -> Result<()> {
        const POINTS: usize = 8;
        let mut seen_detected_at: Option<f64> = None;
        for i in 0..POINTS {
            let a = self.area_lo + (self.area_hi - self.area_lo) * i as f64 / (POINTS - 1) as f64;
            let d = self.detected(node, start, a)?;
            if let (Some(prev), false) = (seen_detected_at, d) {
                self.warn(format!(
                    "NONMONOTONE: node {node} start {start}: detected at {prev:.3} cm² but not at {a:.3} cm²"
                ));
            }
            if d {
                seen_detected_at = Some(a);
            }
        }
        Ok(())
    }
}

/// Result of one fitness evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitnessResult {
    /// Largest undetected area found, cm² (0 when even the smallest leak
    /// is caught).
    pub area: f64,
    /// The whole bracket was undetected: the true maximum lies at or
    /// above `area_hi`.
    pub unbounded: bool,
    /// Simulations this evaluation ran.
    pub evals: u32,
}

/// Largest undetected leak area at one (node, start) pair, by bisection
/// on [area_lo, area_hi] to within area_tol.
///
/// With an `incumbent` area the search short-circuits: if a leak of the
/// incumbent size is detected here, this pair cannot beat the incumbent
/// and its fitness is reported as 0 after a single simulation; if it is
/// undetected, the bisection continues upward from there.
pub fn max_undetected_area(
    node: usize,
    start: usize,
    ctx: &EvalContext,
    incumbent: Option<f64>,
) -> Result<FitnessResult> {
    let mut evals = 0u32;
    let mut det = |a: f64| -> Result<bool> {
        evals += 1;
        ctx.detected(node, start, a)
    };

    let result = (|| -> Result<FitnessResult> {
        let mut lo;
        match incumbent.filter(|v| *v > ctx.area_lo) {
            Some(inc) => {
                let inc = inc.min(ctx.area_hi);
                if det(inc)? {
                    return Ok(FitnessResult {
                        area: 0.0,
                        unbounded: false,
                        evals: 0,
                    });
                }
                lo = inc;
            }
            None => {
                if det(ctx.area_lo)? {
                    return Ok(FitnessResult {
                        area: 0.0,
                        unbounded: false,
                        evals: 0,
                    });
                }
                lo = ctx.area_lo;
            }
        }
        if lo >= ctx.area_hi || !det(ctx.area_hi)? {
            return Ok(FitnessResult {
                area: ctx.area_hi,
                unbounded: true,
                evals: 0,
            });
        }
        let mut hi = ctx.area_hi;
        while hi - lo > ctx.area_tol {
            let mid = 0.5 * (lo + hi);
            if det(mid)? {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(FitnessResult {
            area: lo,
            unbounded: false,
            evals: 0,
        })
    })();

    if ctx.audit_monotone {
        ctx.audit(node, start)?;
    }
    result.map(|mut r| {
        r.evals = evals;
        r
    })
}

/// One progress record; granularity depends on the method (bisection
/// iteration, GA generation, or brute-force pair).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    /// Current area interval; methods without an interval report the
    /// best-so-far area in both fields.
    pub alpha_lo: f64,
    pub alpha_hi: f64,
    /// Surviving pairs (bisection), distinct pairs evaluated (GA), or
    /// total pairs (brute force).
    pub candidates: usize,
    pub best_node: Option<usize>,
    pub best_start: Option<usize>,
    pub unbounded: bool,
    /// Cumulative simulations for iteration rows; per-pair simulations
    /// for brute-force rows.
    pub evaluations: u64,
}

/// Final answer of any search method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub method: String,
    /// Node index of the least sensitive point.
    pub lsp_node: usize,
    pub lsp_node_id: String,
    pub best_start: usize,
    /// Largest leak area (cm²) that runs through a full window
    /// undetected at that pair.
    pub max_undetected_area: f64,
    /// True when the area bracket's ceiling was never detected there.
    pub unbounded: bool,
    /// Leak-window simulations spent by this search.
    pub evaluations: u64,
    pub trace: Vec<TraceRow>,
    pub warnings: Vec<String>,
}

impl SearchOutcome {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("outcome serializes")
    }

    pub fn from_json(text: &str) -> Result<SearchOutcome> {
        serde_json::from_str(text).map_err(|e| Error::Invalid(format!("outcome json: {e}")))
    }

    /// Trace as CSV (header + one row per record).
    pub fn write_trace_csv<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        let fmt = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
        writeln!(
            out,
            "iteration,alpha_lo,alpha_hi,candidates,best_node,best_start,unbounded,evaluations"
        )?;
        for r in &self.trace {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.iteration,
                r.alpha_lo,
                r.alpha_hi,
                r.candidates,
                fmt(r.best_node),
                fmt(r.best_start),
                r.unbounded as u8,
                r.evaluations
            )?;
        }
        Ok(())
    }
}

/// Detection matrix over the given grid at one area: rows follow
/// `nodes`, columns follow `starts`. Evaluated in parallel, reduced in
/// index order.
pub fn detection_matrix(
    ctx: &EvalContext,
    nodes: &[usize],
    starts: &[usize],
    area_cm2: f64,
) -> Result<Vec<Vec<bool>>> {
    let pairs: Vec<(usize, usize)> = nodes
        .iter()
        .flat_map(|&n| starts.iter().map(move |&s| (n, s)))
        .collect();
    let flat: Result<Vec<bool>> = pairs
        .par_iter()
        .map(|&(n, s)| ctx.detected(n, s, area_cm2))
        .collect();
    let flat = flat?;
    Ok(flat.chunks(starts.len()).map(|c| c.to_vec()).collect())
}

/// Detection matrix as CSV, nodes down, starts across.
pub fn write_matrix_csv<W: std::io::Write>(
    model: &NetworkModel,
    nodes: &[usize],
    starts: &[usize],
    matrix: &[Vec<bool>],
    mut out: W,
) -> Result<()> {
    write!(out, "node")?;
    for s in starts {
        write!(out, ",t{s}")?;
    }
    writeln!(out)?;
    for (r, &n) in nodes.iter().enumerate() {
        write!(out, "{}", model.node_id(n))?;
        for v in &matrix[r] {
            write!(out, ",{}", *v as u8)?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Apply both pruning rules to a detection matrix taken at an area known
/// to be undetectable somewhere: rows (nodes) detected at every column
/// and columns (starts) detected at every row are dominated, because a
/// pair detected at area α is detected at every larger area too.
///
/// Returns the surviving row and column positions.
pub fn prune_survivors(detected: &[Vec<bool>]) -> (Vec<usize>, Vec<usize>) {
    let rows = detected.len();
    let cols = detected.first().map(|r| r.len()).unwrap_or(0);
    let alive_rows: Vec<usize> = (0..rows)
        .filter(|&r| !detected[r].iter().all(|&d| d))
        .collect();
    let alive_cols: Vec<usize> = (0..cols)
        .filter(|&c| !(0..rows).all(|r| detected[r][c]))
        .collect();
    (alive_rows, alive_cols)
}

/// Grid-wide bisection: one shared area interval, a detection matrix per
/// midpoint, and (optionally) pruning of dominated nodes/starts whenever
/// the lower bound moves.
pub fn bisection_search(
    space: &SearchSpace,
    ctx: &EvalContext,
    prune: bool,
) -> Result<SearchOutcome> {
    space.validate(ctx.model)?;
    check_coherent(space, ctx)?;
    let eval0 = ctx.evaluations();

    let mut alive_nodes = space.nodes.clone();
    let mut alive_starts = space.starts.clone();
    let mut lo = space.area_lo;
    let mut hi = space.area_hi;
    // Pairs undetected at the current lo, row-major (so the first entry
    // is the smallest node, then smallest start — the tie-break order).
    let mut at_lo: Vec<(usize, usize)> = Vec::new();
    let mut trace = Vec::new();
    let mut iteration = 0;

    while hi - lo > space.area_tol {
        iteration += 1;
        let mid = 0.5 * (lo + hi);
        let det = detection_matrix(ctx, &alive_nodes, &alive_starts, mid)?;
        let undetected: Vec<(usize, usize)> = det
            .iter()
            .enumerate()
            .flat_map(|(r, row)| {
                row.iter()
                    .enumerate()
                    .filter(|(_, d)| !**d)
                    .map(move |(c, _)| (r, c))
            })
            .collect();
        if undetected.is_empty() {
            hi = mid;
        } else {
            lo = mid;
            at_lo = undetected
                .iter()
                .map(|&(r, c)| (alive_nodes[r], alive_starts[c]))
                .collect();
            if prune {
                let (rows, cols) = prune_survivors(&det);
                alive_nodes = rows.iter().map(|&r| alive_nodes[r]).collect();
                alive_starts = cols.iter().map(|&c| alive_starts[c]).collect();
            }
        }
        trace.push(TraceRow {
            iteration,
            alpha_lo: lo,
            alpha_hi: hi,
            candidates: alive_nodes.len() * alive_starts.len(),
            best_node: at_lo.first().map(|p| p.0),
            best_start: at_lo.first().map(|p| p.1),
            unbounded: false,
            evaluations: ctx.evaluations() - eval0,
        });
    }

    let (node, start, area) = match at_lo.first() {
        Some(&(n, s)) => (n, s, lo),
        None => {
            // No midpoint was ever survivable; the floor itself decides.
            let det = detection_matrix(ctx, &alive_nodes, &alive_starts, space.area_lo)?;
            let mut found = None;
            'scan: for (r, row) in det.iter().enumerate() {
                for (c, d) in row.iter().enumerate() {
                    if !d {
                        found = Some((alive_nodes[r], alive_starts[c], space.area_lo));
                        break 'scan;
                    }
                }
            }
            found.unwrap_or_else(|| {
                ctx.warn(format!(
                    "every candidate pair is detected even at the minimum area {} cm²",
                    space.area_lo
                ));
                (alive_nodes[0], alive_starts[0], 0.0)
            })
        }
    };

    let unbounded = hi >= space.area_hi && !at_lo.is_empty();
    Ok(SearchOutcome {
        method: if prune {
            "bisection".into()
        } else {
            "bisection-noprune".into()
        },
        lsp_node: node,
        lsp_node_id: ctx.model.node_id(node).to_string(),
        best_start: start,
        max_undetected_area: area,
        unbounded,
        evaluations: ctx.evaluations() - eval0,
        trace,
        warnings: ctx.warnings(),
    })
}

/// Exhaustive oracle: full per-pair line search, no incumbent shortcut,
/// deterministic argmax (ties → smallest node, then smallest start).
pub fn brute_force_lsp(space: &SearchSpace, ctx: &EvalContext) -> Result<SearchOutcome> {
    // Size gate first: an oversized space is refused as such even when its
    // contents would also fail validation.
    let pairs = space.pair_count();
    if pairs > BRUTE_FORCE_CAP {
        return Err(Error::SpaceTooLarge {
            pairs,
            cap: BRUTE_FORCE_CAP,
        });
    }
    space.validate(ctx.model)?;
    check_coherent(space, ctx)?;
    let eval0 = ctx.evaluations();

    let list: Vec<(usize, usize)> = space
        .nodes
        .iter()
        .flat_map(|&n| space.starts.iter().map(move |&s| (n, s)))
        .collect();
    let fits: Result<Vec<FitnessResult>> = list
        .par_iter()
        .map(|&(n, s)| max_undetected_area(n, s, ctx, None))
        .collect();
    let fits = fits?;

    let mut best = 0;
    for (i, f) in fits.iter().enumerate() {
        if f.area > fits[best].area {
            best = i;
        }
    }
    let trace = list
        .iter()
        .zip(&fits)
        .enumerate()
        .map(|(i, (&(n, s), f))| TraceRow {
            iteration: i,
            alpha_lo: f.area,
            alpha_hi: f.area,
            candidates: pairs,
            best_node: Some(n),
            best_start: Some(s),
            unbounded: f.unbounded,
            evaluations: f.evals as u64,
        })
        .collect();

    let (node, start) = list[best];
    Ok(SearchOutcome {
        method: "brute-force".into(),
        lsp_node: node,
        lsp_node_id: ctx.model.node_id(node).to_string(),
        best_start: start,
        max_undetected_area: fits[best].area,
        unbounded: fits[best].unbounded,
        evaluations: ctx.evaluations() - eval0,
        trace,
        warnings: ctx.warnings(),
    })
}

fn check_coherent(space: &SearchSpace, ctx: &EvalContext) -> Result<()> {
    if space.k != ctx.k
        || space.area_lo != ctx.area_lo
        || space.area_hi != ctx.area_hi
        || space.area_tol != ctx.area_tol
    {
        return Err(Error::Invalid(
            "search space and evaluation context disagree on window or area bracket".into(),
        ));
    }
    Ok(())
}
