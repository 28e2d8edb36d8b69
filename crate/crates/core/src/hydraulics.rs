//! Demand-driven hydraulic simulation.
//!
//! Steady states are solved with the global gradient method: Newton
//! iteration on unknown junction heads, with per-link linearization of the
//! headloss law. Extended-period simulation chains steady solves and
//! integrates tank levels explicitly between steps. Leaks are
//! pressure-dependent orifice outflows resolved inside the Newton loop;
//! everything else is demand-driven (demands are met regardless of
//! pressure).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::measurement::DemandSeries;
use crate::model::{NetworkModel, ValveKind};

pub const GRAVITY: f64 = 9.81;

/// Below this flow the Hazen-Williams derivative is evaluated at the
/// threshold instead, which keeps the Jacobian bounded near q = 0.
const Q_LAMINAR: f64 = 1e-6;
/// Pressure head below which the leak derivative is frozen (the orifice
/// law has an infinite slope at p = 0; the exact law still applies).
const P_LEAK_EPS: f64 = 1e-4;
/// Linear resistance of a closed valve and of a pump under reverse flow.
const R_CLOSED: f64 = 1e8;
/// Quadratic resistance of a fully open valve (m per (m³/s)²).
const R_OPEN: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Junction mass-balance tolerance, m³/s.
    pub mass_tol: f64,
    /// Link energy-law tolerance, m.
    pub head_tol: f64,
    pub max_iter: usize,
    /// Step shrink factor applied when a Newton update grows the error.
    pub damping: f64,
    /// Orifice discharge coefficient for leaks.
    pub discharge_coeff: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            mass_tol: 1e-6,
            head_tol: 1e-4,
            max_iter: 100,
            damping: 0.5,
            discharge_coeff: 0.75,
        }
    }
}

/// One leak event: a hole of `area_cm2` at a junction, open for
/// `duration_steps` steps starting at `start_step`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeakScenario {
    /// Node index of a junction (junctions occupy the low node indices).
    pub node_index: usize,
    pub area_cm2: f64,
    pub start_step: usize,
    pub duration_steps: usize,
}

impl LeakScenario {
    pub fn active_at(&self, step: usize) -> bool {
        step >= self.start_step && step < self.start_step + self.duration_steps
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValveStatus {
    /// Holding downstream pressure at the setting.
    Active,
    /// Wide open; upstream head is below the setting.
    Open,
    /// Shut; flow would otherwise reverse.
    Closed,
}

/// Converged (or best-effort) network state at one instant.
#[derive(Debug, Clone)]
pub struct HydraulicState {
    /// Total head per node, node-index order.
    pub heads: Vec<f64>,
    /// Pressure head per node: head − elevation.
    pub pressures: Vec<f64>,
    /// Flow per link (pipes, pumps, valves), signed from → to.
    pub flows: Vec<f64>,
    /// Leak outflow per node (zero everywhere except the leak junction).
    pub leak_flows: Vec<f64>,
    pub valve_status: Vec<ValveStatus>,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub struct SimulationResult {
    pub states: Vec<HydraulicState>,
    /// Simulation clock per state, seconds.
    pub times: Vec<f64>,
    /// Tank levels per state, m above tank bottom.
    pub tank_levels: Vec<Vec<f64>>,
    pub converged: Vec<bool>,
    /// Per tank: level hit max (inflow clipped) at some step.
    pub tank_overflow: Vec<bool>,
    /// Per tank: level hit min (outflow clipped) at some step.
    pub tank_empty: Vec<bool>,
}

impl SimulationResult {
    pub fn all_converged(&self) -> bool {
        self.converged.iter().all(|&c| c)
    }
}

/// Hazen-Williams friction loss over a full pipe, in m. Odd in `q`.
pub fn hazen_williams_headloss(q: f64, length: f64, diameter: f64, roughness: f64) -> f64 {
    let r = hw_resistance(length, diameter, roughness);
    r * q.abs().powf(1.852) * q.signum()
}

fn hw_resistance(length: f64, diameter: f64, roughness: f64) -> f64 {
    10.667 * roughness.powf(-1.852) * diameter.powf(-4.871) * length
}

/// Orifice outflow (m³/s) through `area_cm2` at `pressure_head` m.
/// Zero for non-positive pressure: a leak never draws water back in.
pub fn leak_outflow(area_cm2: f64, pressure_head: f64, discharge_coeff: f64) -> f64 {
    if pressure_head <= 0.0 {
        return 0.0;
    }
    discharge_coeff * area_cm2 * 1e-4 * (2.0 * GRAVITY * pressure_head).sqrt()
}

/// Chord conductance for the leak linearization: the model
/// `q_lin(h) = d · (h − elev)` passes through the zero-flow point, so the
/// leak term alone can never drag the head below elevation, and a fixed
/// point of the iteration satisfies the exact orifice law. The tangent
/// slope is a bad choice here: it anchors the model at the current head,
/// which either overshoots deep into negative pressure (large p, small
/// slope) or crawls back out of it (frozen slope at p ≤ 0). The chord is
/// capped at p = P_LEAK_EPS so it stays bounded near zero.
fn leak_chord_slope(area_cm2: f64, pressure_head: f64, discharge_coeff: f64) -> f64 {
    let k = discharge_coeff * area_cm2 * 1e-4 * (2.0 * GRAVITY).sqrt();
    k / pressure_head.max(P_LEAK_EPS).sqrt()
}

#[derive(Debug, Clone, Copy)]
enum LinkKind {
    Pipe { r: f64 },
    Pump { h0: f64, r: f64, n: f64 },
    Prv { setting: f64 },
}

#[derive(Debug, Clone, Copy)]
struct Link {
    kind: LinkKind,
    a: usize,
    b: usize,
}

/// Index mappings and link coefficients, built once per model.
struct Net {
    links: Vec<Link>,
    junctions: usize,
    nodes: usize,
    elevations: Vec<f64>,
    /// Links incident to each node, as (link index, +1 if the node is the
    /// `from` end else −1).
    incident: Vec<Vec<(usize, f64)>>,
    /// Valve index per link, for PRV links only.
    valve_of_link: Vec<Option<usize>>,
}

fn build_net(model: &NetworkModel) -> Result<Net> {
    let nodes = model.node_count();
    let junctions = model.junctions.len();
    let elevations = (0..nodes).map(|i| model.node_elevation(i)).collect();

    let mut links = Vec::with_capacity(model.link_count());
    let mut valve_of_link = Vec::with_capacity(model.link_count());
    for p in &model.pipes {
        links.push(Link {
            kind: LinkKind::Pipe {
                r: hw_resistance(p.length, p.diameter, p.roughness),
            },
            a: model.node_index(&p.from)?,
            b: model.node_index(&p.to)?,
        });
        valve_of_link.push(None);
    }
    for p in &model.pumps {
        links.push(Link {
            kind: LinkKind::Pump {
                h0: p.curve.h0,
                r: p.curve.r,
                n: p.curve.n,
            },
            a: model.node_index(&p.from)?,
            b: model.node_index(&p.to)?,
        });
        valve_of_link.push(None);
    }
    for (vi, v) in model.valves.iter().enumerate() {
        let ValveKind::Prv = v.kind;
        links.push(Link {
            kind: LinkKind::Prv { setting: v.setting },
            a: model.node_index(&v.from)?,
            b: model.node_index(&v.to)?,
        });
        valve_of_link.push(Some(vi));
    }

    let mut incident = vec![Vec::new(); nodes];
    for (li, l) in links.iter().enumerate() {
        incident[l.a].push((li, 1.0));
        incident[l.b].push((li, -1.0));
    }

    Ok(Net {
        links,
        junctions,
        nodes,
        elevations,
        incident,
        valve_of_link,
    })
}

/// Linearization of one link at flow `q`: headloss `hl`, slope `g`, and
/// the Newton offset `y = q − hl/g`.
fn linearize(kind: LinkKind, q: f64, status: ValveStatus) -> (f64, f64) {
    match kind {
        LinkKind::Pipe { r } => {
            let aq = q.abs().max(Q_LAMINAR);
            let g = 1.852 * r * aq.powf(0.852);
            let hl = r * q.abs().powf(1.852) * q.signum();
            (g, q - hl / g)
        }
        LinkKind::Pump { h0, r, n } => {
            if q >= 0.0 {
                let g = (n * r * q.powf(n - 1.0)).max(1e-6);
                let hl = r * q.powf(n) - h0;
                (g, q - hl / g)
            } else {
                let g = R_CLOSED;
                let hl = R_CLOSED * q - h0;
                (g, q - hl / g)
            }
        }
        LinkKind::Prv { .. } => match status {
            ValveStatus::Open => {
                let g = (2.0 * R_OPEN * q.abs()).max(1e-6);
                let hl = R_OPEN * q * q.abs();
                (g, q - hl / g)
            }
            ValveStatus::Closed => (R_CLOSED, 0.0),
            ValveStatus::Active => unreachable!("active PRVs are pinned, not linearized"),
        },
    }
}

/// Exact headloss law for the convergence check, matching `linearize`.
fn exact_headloss(kind: LinkKind, q: f64, status: ValveStatus) -> f64 {
    match kind {
        LinkKind::Pipe { r } => r * q.abs().powf(1.852) * q.signum(),
        LinkKind::Pump { h0, r, n } => {
            if q >= 0.0 {
                r * q.powf(n) - h0
            } else {
                R_CLOSED * q - h0
            }
        }
        LinkKind::Prv { .. } => match status {
            ValveStatus::Open => R_OPEN * q * q.abs(),
            ValveStatus::Closed => R_CLOSED * q,
            ValveStatus::Active => 0.0,
        },
    }
}

struct StepProblem<'a> {
    net: &'a Net,
    opts: &'a SolverOptions,
    /// Demand per junction, m³/s.
    demands: &'a [f64],
    /// Fixed total head per node (tanks, reservoirs); None for junctions.
    fixed: Vec<Option<f64>>,
    leak: Option<(usize, f64)>,
}

struct StepSolution {
    heads: Vec<f64>,
    flows: Vec<f64>,
    leak_flows: Vec<f64>,
    valve_status: Vec<ValveStatus>,
    converged: bool,
    iterations: usize,
}

/// Solve one instant, including PRV status resolution.
fn solve_step(p: &StepProblem) -> Result<StepSolution> {
    let n_valves = p.net.valve_of_link.iter().flatten().count();
    let mut status = vec![ValveStatus::Active; n_valves];
    // A PRV discharging into a fixed-head node cannot pin it; it starts
    // open and participates only through its resistance.
    for (li, l) in p.net.links.iter().enumerate() {
        if let Some(vi) = p.net.valve_of_link[li] {
            if p.fixed[l.b].is_some() {
                status[vi] = ValveStatus::Open;
            }
        }
    }

    let mut total_iters = 0;
    for _round in 0..10 {
        let sol = newton(p, &status)?;
        total_iters += sol.iterations;
        let next = next_status(p, &status, &sol);
        match next {
            Some(s) => status = s,
            None => {
                return Ok(StepSolution {
                    iterations: total_iters,
                    ..sol
                });
            }
        }
    }
    // Status flapping: report the last solve, not converged.
    let sol = newton(p, &status)?;
    total_iters += sol.iterations;
    Ok(StepSolution {
        converged: false,
        iterations: total_iters,
        ..sol
    })
}

/// Returns the updated status vector, or None if no valve changed.
fn next_status(
    p: &StepProblem,
    status: &[ValveStatus],
    sol: &StepSolution,
) -> Option<Vec<ValveStatus>> {
    let mut next = status.to_vec();
    let mut changed = false;
    for (li, l) in p.net.links.iter().enumerate() {
        let Some(vi) = p.net.valve_of_link[li] else {
            continue;
        };
        let LinkKind::Prv { setting } = l.kind else {
            continue;
        };
        if p.fixed[l.b].is_some() {
            continue; // never Active; Open/Closed transitions below still apply
        }
        let pin = p.net.elevations[l.b] + setting;
        let h_up = sol.heads[l.a];
        let h_down = sol.heads[l.b];
        let q = sol.flows[li];
        let new = match status[vi] {
            ValveStatus::Active => {
                if q < -1e-8 {
                    ValveStatus::Closed
                } else if h_up < pin - p.opts.head_tol {
                    ValveStatus::Open
                } else {
                    ValveStatus::Active
                }
            }
            ValveStatus::Open => {
                if q < -1e-8 {
                    ValveStatus::Closed
                } else if h_down > pin + p.opts.head_tol {
                    ValveStatus::Active
                } else {
                    ValveStatus::Open
                }
            }
            ValveStatus::Closed => {
                if h_up > pin + p.opts.head_tol {
                    ValveStatus::Active
                } else if h_up > h_down + p.opts.head_tol {
                    ValveStatus::Open
                } else {
                    ValveStatus::Closed
                }
            }
        };
        if new != status[vi] {
            changed = true;
            next[vi] = new;
        }
    }
    // Open/Closed flips for valves into fixed-head nodes.
    for (li, l) in p.net.links.iter().enumerate() {
        let Some(vi) = p.net.valve_of_link[li] else {
            continue;
        };
        if p.fixed[l.b].is_none() {
            continue;
        }
        let q = sol.flows[li];
        let new = match status[vi] {
            ValveStatus::Closed if sol.heads[l.a] > sol.heads[l.b] + p.opts.head_tol => {
                ValveStatus::Open
            }
            ValveStatus::Open if q < -1e-8 => ValveStatus::Closed,
            s => s,
        };
        if new != status[vi] {
            changed = true;
            next[vi] = new;
        }
    }
    changed.then_some(next)
}

fn newton(p: &StepProblem, status: &[ValveStatus]) -> Result<StepSolution> {
    let net = p.net;

    // Pinned heads: fixed nodes plus downstream junctions of active PRVs.
    let mut pinned: Vec<Option<f64>> = p.fixed.clone();
    for (li, l) in net.links.iter().enumerate() {
        let Some(vi) = net.valve_of_link[li] else {
            continue;
        };
        let LinkKind::Prv { setting } = l.kind else {
            continue;
        };
        if status[vi] == ValveStatus::Active && p.fixed[l.b].is_none() {
            pinned[l.b] = Some(net.elevations[l.b] + setting);
        }
    }

    // Matrix rows for junctions that are not pinned.
    let mut row_of: Vec<Option<usize>> = vec![None; net.nodes];
    let mut rows = 0;
    for j in 0..net.junctions {
        if pinned[j].is_none() {
            row_of[j] = Some(rows);
            rows += 1;
        }
    }

    let source_head = pinned
        .iter()
        .flatten()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let mut heads: Vec<f64> = (0..net.nodes)
        .map(|i| pinned[i].unwrap_or(source_head))
        .collect();

    // Initial flows: a small positive seed; the laminar regularization
    // keeps the first linearization well-behaved regardless of scale.
    let mut flows: Vec<f64> = net
        .links
        .iter()
        .map(|l| match l.kind {
            LinkKind::Pipe { .. } => 1e-2,
            _ => 1e-3,
        })
        .collect();

    let leak = p.leak;
    let mut leak_q = 0.0;
    let mut valve_lag = vec![0.0; status.len()];
    let mut prev_delta = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;

    for it in 0..p.opts.max_iter {
        iterations = it + 1;

        // Linearize links (skip active PRVs: their downstream is pinned
        // and their flow comes from that node's balance).
        let mut g = vec![0.0; net.links.len()];
        let mut y = vec![0.0; net.links.len()];
        let mut active = vec![false; net.links.len()];
        for (li, l) in net.links.iter().enumerate() {
            let st = net.valve_of_link[li]
                .map(|vi| status[vi])
                .unwrap_or(ValveStatus::Open);
            if net.valve_of_link[li].is_some() && st == ValveStatus::Active {
                active[li] = true;
                continue;
            }
            let (gl, yl) = linearize(l.kind, flows[li], st);
            g[li] = gl;
            y[li] = yl;
        }

        let mut a = DMatrix::<f64>::zeros(rows, rows);
        let mut rhs = DVector::<f64>::zeros(rows);

        for (li, l) in net.links.iter().enumerate() {
            if active[li] {
                // Lagged withdrawal at the upstream node.
                if let Some(ra) = row_of[l.a] {
                    let vi = net.valve_of_link[li].unwrap();
                    rhs[ra] -= valve_lag[vi];
                }
                continue;
            }
            let c = 1.0 / g[li];
            match (row_of[l.a], row_of[l.b]) {
                (Some(ra), Some(rb)) => {
                    a[(ra, ra)] += c;
                    a[(rb, rb)] += c;
                    a[(ra, rb)] -= c;
                    a[(rb, ra)] -= c;
                }
                (Some(ra), None) => {
                    a[(ra, ra)] += c;
                    rhs[ra] += c * pinned_or(&pinned, &heads, l.b);
                }
                (None, Some(rb)) => {
                    a[(rb, rb)] += c;
                    rhs[rb] += c * pinned_or(&pinned, &heads, l.a);
                }
                (None, None) => {}
            }
            if let Some(ra) = row_of[l.a] {
                rhs[ra] -= y[li];
            }
            if let Some(rb) = row_of[l.b] {
                rhs[rb] += y[li];
            }
        }

        for j in 0..net.junctions {
            if let Some(rj) = row_of[j] {
                rhs[rj] -= p.demands[j];
            }
        }

        if let Some((jl, area)) = leak {
            if let Some(rj) = row_of[jl] {
                let pbar = heads[jl] - net.elevations[jl];
                let d = leak_chord_slope(area, pbar, p.opts.discharge_coeff);
                a[(rj, rj)] += d;
                rhs[rj] += d * net.elevations[jl];
            }
        }

        let solved = a
            .clone()
            .cholesky()
            .map(|ch| ch.solve(&rhs))
            .or_else(|| a.clone().lu().solve(&rhs));
        let Some(h_new) = solved else {
            return Err(Error::SingularSystem { step: 0 });
        };
        if h_new.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularSystem { step: 0 });
        }

        // Damped update whenever the step fails to shrink; `>=` matters,
        // since an undamped two-cycle repeats the same step norm forever.
        let mut delta: f64 = 0.0;
        for j in 0..net.junctions {
            if let Some(rj) = row_of[j] {
                delta = delta.max((h_new[rj] - heads[j]).abs());
            }
        }
        let factor = if delta >= prev_delta {
            p.opts.damping
        } else {
            1.0
        };
        prev_delta = delta * factor;
        for j in 0..net.junctions {
            if let Some(rj) = row_of[j] {
                heads[j] += factor * (h_new[rj] - heads[j]);
            }
        }

        // Recover flows from the linearization at the new heads.
        for (li, l) in net.links.iter().enumerate() {
            if active[li] {
                continue;
            }
            flows[li] = y[li] + (heads[l.a] - heads[l.b]) / g[li];
        }
        if let Some((jl, area)) = leak {
            leak_q = leak_outflow(area, heads[jl] - net.elevations[jl], p.opts.discharge_coeff);
        }

        // Active PRV flow = downstream node balance; lag it for the next
        // assembly round.
        for (li, l) in net.links.iter().enumerate() {
            if !active[li] {
                continue;
            }
            let vi = net.valve_of_link[li].unwrap();
            let b = l.b;
            let mut q = p.demands.get(b).copied().unwrap_or(0.0);
            if let Some((jl, _)) = leak {
                if jl == b {
                    q += leak_q;
                }
            }
            for &(other, sign) in &net.incident[b] {
                if other == li {
                    continue;
                }
                // sign = +1 when b is the from-end (flow leaves b).
                q += sign * flows[other];
            }
            flows[li] = q;
            valve_lag[vi] = q;
        }

        if residuals_ok(p, status, &heads, &flows, leak_q) {
            converged = true;
            break;
        }
    }

    let leak_flows = {
        let mut v = vec![0.0; net.nodes];
        if let Some((jl, _)) = leak {
            v[jl] = leak_q;
        }
        v
    };

    Ok(StepSolution {
        heads,
        flows,
        leak_flows,
        valve_status: status.to_vec(),
        converged,
        iterations,
    })
}

fn pinned_or(pinned: &[Option<f64>], heads: &[f64], node: usize) -> f64 {
    pinned[node].unwrap_or(heads[node])
}

/// Exact-law residual check: junction mass balance and link energy laws.
fn residuals_ok(
    p: &StepProblem,
    status: &[ValveStatus],
    heads: &[f64],
    flows: &[f64],
    leak_q: f64,
) -> bool {
    let net = p.net;
    for j in 0..net.junctions {
        let mut r = -p.demands[j];
        if let Some((jl, _)) = p.leak {
            if jl == j {
                r -= leak_q;
            }
        }
        for &(li, sign) in &net.incident[j] {
            r -= sign * flows[li];
        }
        if r.abs() > p.opts.mass_tol {
            return false;
        }
    }
    for (li, l) in net.links.iter().enumerate() {
        let st = net.valve_of_link[li]
            .map(|vi| status[vi])
            .unwrap_or(ValveStatus::Open);
        if net.valve_of_link[li].is_some() && st == ValveStatus::Active {
            continue; // head relation replaced by the pinned setting
        }
        let hl = exact_headloss(l.kind, flows[li], st);
        if ((heads[l.a] - heads[l.b]) - hl).abs() > p.opts.head_tol {
            return false;
        }
    }
    true
}

/// Solve a single steady state.
///
/// `step_demands` is per junction (m³/s), `tank_heads` per tank (total
/// head). Never fails on slow convergence: the state is returned with
/// `converged = false` after `max_iter` (NO_CONVERGENCE is a per-step
/// condition the caller can inspect); a singular Jacobian is a hard error.
pub fn solve_steady_state(
    model: &NetworkModel,
    opts: &SolverOptions,
    step_demands: &[f64],
    tank_heads: &[f64],
    leak: Option<(usize, f64)>,
) -> Result<HydraulicState> {
    let net = build_net(model)?;
    if step_demands.len() != net.junctions {
        return Err(Error::DimMismatch {
            want: net.junctions,
            got: step_demands.len(),
        });
    }
    if tank_heads.len() != model.tanks.len() {
        return Err(Error::DimMismatch {
            want: model.tanks.len(),
            got: tank_heads.len(),
        });
    }
    if let Some((node, area)) = leak {
        if node >= net.junctions {
            return Err(Error::Invalid(format!(
                "leak node index {node} is not a junction"
            )));
        }
        if area < 0.0 {
            return Err(Error::Invalid("leak area must be nonnegative".into()));
        }
    }
    let fixed = fixed_heads(model, &net, tank_heads);
    let sol = solve_step(&StepProblem {
        net: &net,
        opts,
        demands: step_demands,
        fixed,
        leak,
    })?;
    Ok(state_from(&net, sol))
}

fn fixed_heads(model: &NetworkModel, net: &Net, tank_heads: &[f64]) -> Vec<Option<f64>> {
    let j = net.junctions;
    let t = model.tanks.len();
    let mut fixed = vec![None; net.nodes];
    for (ti, _tank) in model.tanks.iter().enumerate() {
        fixed[j + ti] = Some(tank_heads[ti]);
    }
    for (ri, r) in model.reservoirs.iter().enumerate() {
        fixed[j + t + ri] = Some(r.total_head);
    }
    fixed
}

fn state_from(net: &Net, sol: StepSolution) -> HydraulicState {
    let pressures = sol
        .heads
        .iter()
        .zip(&net.elevations)
        .map(|(h, e)| h - e)
        .collect();
    HydraulicState {
        pressures,
        heads: sol.heads,
        flows: sol.flows,
        leak_flows: sol.leak_flows,
        valve_status: sol.valve_status,
        converged: sol.converged,
        iterations: sol.iterations,
    }
}

/// Extended-period simulation over the model's full horizon.
///
/// `demands` must cover at least [`NetworkModel::num_steps`] steps. The
/// leak, if any, is active for steps in
/// `[start_step, start_step + duration_steps)`.
pub fn run_eps(
    model: &NetworkModel,
    opts: &SolverOptions,
    demands: &DemandSeries,
    leak: Option<&LeakScenario>,
) -> Result<SimulationResult> {
    let steps = model.num_steps();
    let init: Vec<f64> = model.tanks.iter().map(|t| t.init_level).collect();
    run_eps_window(
        model,
        opts,
        demands,
        leak,
        0,
        steps.saturating_sub(1),
        &init,
    )
}

/// Simulate only steps `first..=last`, starting tanks at `init_levels`.
///
/// With `init_levels` taken from a no-leak run at `first`, and a leak that
/// starts at or after `first`, this reproduces exactly the corresponding
/// slice of the full simulation — which is what makes windowed fitness
/// evaluation cheap.
pub fn run_eps_window(
    model: &NetworkModel,
    opts: &SolverOptions,
    demands: &DemandSeries,
    leak: Option<&LeakScenario>,
    first: usize,
    last: usize,
    init_levels: &[f64],
) -> Result<SimulationResult> {
    let steps = model.num_steps();
    if last >= steps || first > last {
        return Err(Error::Range {
            start: first,
            end: last,
            len: steps,
        });
    }
    if demands.num_steps < last + 1 {
        return Err(Error::Range {
            start: first,
            end: last,
            len: demands.num_steps,
        });
    }
    if let Some(l) = leak {
        if l.node_index >= model.junctions.len() {
            return Err(Error::Invalid(format!(
                "leak node index {} is not a junction",
                l.node_index
            )));
        }
        if l.area_cm2 < 0.0 {
            return Err(Error::Invalid("leak area must be nonnegative".into()));
        }
        if l.start_step + l.duration_steps > steps {
            return Err(Error::Range {
                start: l.start_step,
                end: l.start_step + l.duration_steps,
                len: steps,
            });
        }
    }
    let net = build_net(model)?;
    if init_levels.len() != model.tanks.len() {
        return Err(Error::DimMismatch {
            want: model.tanks.len(),
            got: init_levels.len(),
        });
    }

    let dt = model.hydraulic_timestep;
    let n_tanks = model.tanks.len();
    let mut levels = init_levels.to_vec();
    let mut states = Vec::with_capacity(last - first + 1);
    let mut times = Vec::with_capacity(last - first + 1);
    let mut tank_levels = Vec::with_capacity(last - first + 1);
    let mut converged = Vec::with_capacity(last - first + 1);
    let mut overflow = vec![false; n_tanks];
    let mut empty = vec![false; n_tanks];

    for t in first..=last {
        let tank_heads: Vec<f64> = model
            .tanks
            .iter()
            .zip(&levels)
            .map(|(tank, lvl)| tank.elevation + lvl)
            .collect();
        let step_leak = leak.and_then(|l| l.active_at(t).then_some((l.node_index, l.area_cm2)));
        let fixed = fixed_heads(model, &net, &tank_heads);
        let sol = solve_step(&StepProblem {
            net: &net,
            opts,
            demands: demands.step(t),
            fixed,
            leak: step_leak,
        })
        .map_err(|e| match e {
            Error::SingularSystem { .. } => Error::SingularSystem { step: t },
            other => other,
        })?;

        // Integrate tank levels forward from this state.
        let j = net.junctions;
        for (ti, tank) in model.tanks.iter().enumerate() {
            let node = j + ti;
            let mut q_net = 0.0;
            for &(li, sign) in &net.incident[node] {
                // sign = +1 when the tank is the from-end (flow leaves).
                q_net -= sign * sol.flows[li];
            }
            let mut lvl = levels[ti] + q_net * dt / tank.area();
            if lvl > tank.max_level {
                lvl = tank.max_level;
                overflow[ti] = true;
            }
            if lvl < tank.min_level {
                lvl = tank.min_level;
                empty[ti] = true;
            }
            levels[ti] = lvl;
        }

        tank_levels.push(
            model
                .tanks
                .iter()
                .zip(&tank_heads)
                .map(|(tank, head)| head - tank.elevation)
                .collect(),
        );
        times.push(t as f64 * dt);
        converged.push(sol.converged);
        states.push(state_from(&net, sol));
    }

    Ok(SimulationResult {
        states,
        times,
        tank_levels,
        converged,
        tank_overflow: overflow,
        tank_empty: empty,
    })
}

/// CSV export: one row per step with time, heads, pressures, link flows,
/// and total leak outflow.
pub fn write_states_csv<W: std::io::Write>(
    model: &NetworkModel,
    result: &SimulationResult,
    out: W,
) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["time_s".to_string()];
    header.extend(model.node_ids().map(|id| format!("head_{id}")));
    header.extend(model.node_ids().map(|id| format!("pressure_{id}")));
    header.extend((0..model.link_count()).map(|i| format!("flow_{}", model.link_id(i))));
    header.push("leak_flow".to_string());
    w.write_record(&header)?;
    for (i, s) in result.states.iter().enumerate() {
        let mut row = vec![format_float(result.times[i])];
        row.extend(s.heads.iter().map(|v| format_float(*v)));
        row.extend(s.pressures.iter().map(|v| format_float(*v)));
        row.extend(s.flows.iter().map(|v| format_float(*v)));
        row.push(format_float(s.leak_flows.iter().sum()));
        w.write_record(&row)?;
    }
    w.flush()
}

pub(crate) fn format_float(v: f64) -> String {
    // Shortest representation that round-trips; keeps CSV output stable.
    format!("{v}")
}
