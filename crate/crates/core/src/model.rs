//! Static description of a water-distribution network.
//!
//! A [`NetworkModel`] is what the INP parser produces and what every other
//! layer consumes. It is immutable in practice: nothing in this crate
//! mutates a model after construction, so it can be shared freely across
//! threads.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use crate::error::Error;

#[derive(Debug, Clone, PartialEq)]
pub struct Junction {
    pub id: String,
    pub elevation: f64,
    /// Base demand in m³/s (files declare LPS; the parser converts).
    pub base_demand: f64,
    pub pattern: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reservoir {
    pub id: String,
    pub total_head: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tank {
    pub id: String,
    pub elevation: f64,
    pub init_level: f64,
    pub min_level: f64,
    pub max_level: f64,
    pub diameter: f64,
}

impl Tank {
    /// Horizontal cross-section area (m²); tanks are cylindrical.
    pub fn area(&self) -> f64 {
        std::f64::consts::PI * self.diameter * self.diameter / 4.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pipe {
    pub id: String,
    pub from: String,
    pub to: String,
    pub length: f64,
    /// Internal diameter in m (files give mm; the parser converts).
    pub diameter: f64,
    /// Hazen-Williams roughness coefficient C.
    pub roughness: f64,
}

/// Pump head gain `h0 - r·q^n` for forward flow q ≥ 0 (m, m³/s).
#[derive(Debug, Clone, PartialEq)]
pub struct PumpCurve {
    pub h0: f64,
    pub r: f64,
    pub n: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pump {
    pub id: String,
    pub from: String,
    pub to: String,
    pub curve: PumpCurve,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValveKind {
    /// Pressure-reducing valve: holds downstream pressure at the setting.
    Prv,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Valve {
    pub id: String,
    pub from: String,
    pub to: String,
    pub kind: ValveKind,
    /// Pressure-head setting in m.
    pub setting: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    pub junctions: Vec<Junction>,
    pub reservoirs: Vec<Reservoir>,
    pub tanks: Vec<Tank>,
    pub pipes: Vec<Pipe>,
    pub pumps: Vec<Pump>,
    pub valves: Vec<Valve>,
    /// Demand patterns: id → dimensionless multipliers per pattern step.
    pub patterns: BTreeMap<String, Vec<f64>>,
    /// Junction ids carrying pressure sensors (from the sidecar file).
    pub sensors: Vec<String>,
    pub hydraulic_timestep: f64,
    pub pattern_timestep: f64,
    pub duration: f64,
}

impl Default for NetworkModel {
    fn default() -> Self {
        NetworkModel {
            junctions: Vec::new(),
            reservoirs: Vec::new(),
            tanks: Vec::new(),
            pipes: Vec::new(),
            pumps: Vec::new(),
            valves: Vec::new(),
            patterns: BTreeMap::new(),
            sensors: Vec::new(),
            hydraulic_timestep: 1800.0,
            pattern_timestep: 3600.0,
            duration: 86_400.0,
        }
    }
}

/// One problem found while parsing or validating.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Issue {
    pub code: IssueCode,
    pub message: String,
    /// 1-based line in the source file, when the issue maps to one.
    pub line: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IssueCode {
    DupId,
    UnknownNode,
    NoSource,
    BadNumber,
    BadUnits,
    BadValue,
    Disconnected,
    Unsupported,
    Ignored,
}

impl fmt::Display for IssueCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            IssueCode::DupId => "DUP_ID",
            IssueCode::UnknownNode => "UNKNOWN_NODE",
            IssueCode::NoSource => "NO_SOURCE",
            IssueCode::BadNumber => "BAD_NUMBER",
            IssueCode::BadUnits => "BAD_UNITS",
            IssueCode::BadValue => "BAD_VALUE",
            IssueCode::Disconnected => "DISCONNECTED",
            IssueCode::Unsupported => "UNSUPPORTED",
            IssueCode::Ignored => "IGNORED",
        };
        f.write_str(s)
    }
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(n) => write!(f, "{}: {} (line {})", self.code, self.message, n),
            None => write!(f, "{}: {}", self.code, self.message),
        }
    }
}

/// Everything wrong (and everything merely odd) about a file or model.
///
/// Parsing succeeds iff `errors` is empty; warnings never fail a parse.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub errors: Vec<Issue>,
    pub warnings: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn error(&mut self, code: IssueCode, message: impl Into<String>, line: Option<usize>) {
        self.errors.push(Issue {
            code,
            message: message.into(),
            line,
        });
    }

    pub fn warn(&mut self, code: IssueCode, message: impl Into<String>, line: Option<usize>) {
        self.warnings.push(Issue {
            code,
            message: message.into(),
            line,
        });
    }

    pub fn merge(&mut self, other: ValidationReport) {
        self.errors.extend(other.errors);
        self.warnings.extend(other.warnings);
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.errors {
            writeln!(f, "error[{}]", e)?;
        }
        for w in &self.warnings {
            writeln!(f, "warning[{}]", w)?;
        }
        Ok(())
    }
}

impl NetworkModel {
    /// Junctions, then tanks, then reservoirs — the one node order used
    /// everywhere (states, embeddings, leak node indices). Junctions come
    /// first so a junction's global index equals its position in
    /// `junctions`.
    pub fn node_count(&self) -> usize {
        self.junctions.len() + self.tanks.len() + self.reservoirs.len()
    }

    pub fn link_count(&self) -> usize {
        self.pipes.len() + self.pumps.len() + self.valves.len()
    }

    pub fn node_id(&self, index: usize) -> &str {
        let j = self.junctions.len();
        let t = j + self.tanks.len();
        if index < j {
            &self.junctions[index].id
        } else if index < t {
            &self.tanks[index - j].id
        } else {
            &self.reservoirs[index - t].id
        }
    }

    pub fn node_ids(&self) -> impl Iterator<Item = &str> {
        (0..self.node_count()).map(|i| self.node_id(i))
    }

    /// Stable node index for `id`; inverse of [`NetworkModel::node_id`].
    pub fn node_index(&self, id: &str) -> Result<usize, Error> {
        self.node_ids()
            .position(|n| n == id)
            .ok_or_else(|| Error::UnknownNode(id.to_string()))
    }

    /// Elevation used for pressure = head − elevation. A reservoir's
    /// surface is its datum, so its pressure head is zero by definition.
    pub fn node_elevation(&self, index: usize) -> f64 {
        let j = self.junctions.len();
        let t = j + self.tanks.len();
        if index < j {
            self.junctions[index].elevation
        } else if index < t {
            self.tanks[index - j].elevation
        } else {
            self.reservoirs[index - t].total_head
        }
    }

    pub fn link_id(&self, index: usize) -> &str {
        let p = self.pipes.len();
        let u = p + self.pumps.len();
        if index < p {
            &self.pipes[index].id
        } else if index < u {
            &self.pumps[index - p].id
        } else {
            &self.valves[index - u].id
        }
    }

    /// Link endpoints as (from, to) ids, pipes then pumps then valves.
    pub fn link_ends(&self) -> impl Iterator<Item = (&str, &str)> {
        let pipes = self.pipes.iter().map(|p| (p.from.as_str(), p.to.as_str()));
        let pumps = self.pumps.iter().map(|p| (p.from.as_str(), p.to.as_str()));
        let valves = self.valves.iter().map(|v| (v.from.as_str(), v.to.as_str()));
        pipes.chain(pumps).chain(valves)
    }

    /// Undirected edge list over node indices, for graph work
    /// (embeddings, distances). Requires a validated model.
    pub fn edges_by_index(&self) -> Result<Vec<(usize, usize)>, Error> {
        let idx: HashMap<&str, usize> = self.node_ids().enumerate().map(|(i, n)| (n, i)).collect();
        let look = |id: &str| {
            idx.get(id)
                .copied()
                .ok_or_else(|| Error::UnknownNode(id.to_string()))
        };
        self.link_ends()
            .map(|(a, b)| Ok((look(a)?, look(b)?)))
            .collect()
    }

    /// Global node indices of the sensor junctions, in sensor order.
    pub fn sensor_indices(&self) -> Result<Vec<usize>, Error> {
        self.sensors.iter().map(|s| self.node_index(s)).collect()
    }

    /// Number of hydraulic states in one extended-period run:
    /// one per timestep boundary, including t = 0.
    pub fn num_steps(&self) -> usize {
        (self.duration / self.hydraulic_timestep).floor() as usize + 1
    }

    /// Check every structural invariant. An empty `errors` list means the
    /// model is safe to hand to the solver.
    pub fn validate(&self) -> ValidationReport {
        let mut rep = ValidationReport::default();

        // Unique ids, one namespace for nodes and one for links.
        let mut seen = HashSet::new();
        for id in self.node_ids() {
            if !seen.insert(id) {
                rep.error(IssueCode::DupId, format!("duplicate node id '{id}'"), None);
            }
        }
        let mut seen = HashSet::new();
        for i in 0..self.link_count() {
            let id = self.link_id(i);
            if !seen.insert(id) {
                rep.error(IssueCode::DupId, format!("duplicate link id '{id}'"), None);
            }
        }

        // Endpoints must exist.
        let nodes: HashSet<&str> = self.node_ids().collect();
        for (i, (from, to)) in self.link_ends().enumerate() {
            for end in [from, to] {
                if !nodes.contains(end) {
                    let link = self.link_id(i).to_string();
                    rep.error(
                        IssueCode::UnknownNode,
                        format!("link '{link}' references unknown node '{end}'"),
                        None,
                    );
                }
            }
        }

        if self.reservoirs.is_empty() && self.tanks.is_empty() {
            rep.error(
                IssueCode::NoSource,
                "no reservoir or tank to fix a head",
                None,
            );
        }

        for p in &self.pipes {
            if !(p.length > 0.0) || !(p.diameter > 0.0) || !(p.roughness > 0.0) {
                rep.error(
                    IssueCode::BadValue,
                    format!("pipe '{}' needs positive length, diameter, roughness", p.id),
                    None,
                );
            }
        }
        for t in &self.tanks {
            if !(t.diameter > 0.0) {
                rep.error(
                    IssueCode::BadValue,
                    format!("tank '{}' needs a positive diameter", t.id),
                    None,
                );
            }
            if !(t.min_level <= t.init_level && t.init_level <= t.max_level) {
                rep.error(
                    IssueCode::BadValue,
                    format!("tank '{}' levels must satisfy min ≤ init ≤ max", t.id),
                    None,
                );
            }
        }
        for p in &self.pumps {
            if !(p.curve.h0 > 0.0) || !(p.curve.r >= 0.0) || !(p.curve.n > 0.0) {
                rep.error(
                    IssueCode::BadValue,
                    format!("pump '{}' has a malformed curve", p.id),
                    None,
                );
            }
        }
        for j in &self.junctions {
            if j.base_demand < 0.0 {
                rep.error(
                    IssueCode::BadValue,
                    format!("junction '{}' has negative demand", j.id),
                    None,
                );
            }
            if let Some(pat) = &j.pattern {
                if !self.patterns.contains_key(pat) {
                    rep.error(
                        IssueCode::BadValue,
                        format!("junction '{}' references unknown pattern '{pat}'", j.id),
                        None,
                    );
                }
            }
        }
        if !(self.hydraulic_timestep > 0.0) || !(self.duration >= 0.0) {
            rep.error(
                IssueCode::BadValue,
                "timestep must be positive, duration nonnegative",
                None,
            );
        }

        // Sensors: distinct junction ids.
        let junction_ids: HashSet<&str> = self.junctions.iter().map(|j| j.id.as_str()).collect();
        let mut seen = HashSet::new();
        for s in &self.sensors {
            if !junction_ids.contains(s.as_str()) {
                rep.error(
                    IssueCode::UnknownNode,
                    format!("sensor '{s}' is not a junction"),
                    None,
                );
            }
            if !seen.insert(s.as_str()) {
                rep.error(IssueCode::DupId, format!("sensor '{s}' listed twice"), None);
            }
        }

        // Connectivity over the undirected node/link graph.
        if rep.is_ok() && self.node_count() > 0 {
            let n = self.node_count();
            let mut adj = vec![Vec::new(); n];
            for (a, b) in self.edges_by_index().expect("endpoints checked above") {
                adj[a].push(b);
                adj[b].push(a);
            }
            let mut seen = vec![false; n];
            let mut stack = vec![0usize];
            seen[0] = true;
            while let Some(v) = stack.pop() {
                for &w in &adj[v] {
                    if !seen[w] {
                        seen[w] = true;
                        stack.push(w);
                    }
                }
            }
            let unreached: Vec<&str> = (0..n)
                .filter(|&i| !seen[i])
                .map(|i| self.node_id(i))
                .collect();
            if !unreached.is_empty() {
                rep.error(
                    IssueCode::Disconnected,
                    format!(
                        "nodes not connected to the rest of the network: {}",
                        unreached.join(", ")
                    ),
                    None,
                );
            }
        }

        rep
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_model() -> NetworkModel {
        NetworkModel {
            junctions: vec![
                Junction {
                    id: "J1".into(),
                    elevation: 0.0,
                    base_demand: 0.001,
                    pattern: None,
                },
                Junction {
                    id: "J2".into(),
                    elevation: 0.0,
                    base_demand: 0.0,
                    pattern: None,
                },
            ],
            reservoirs: vec![Reservoir {
                id: "R1".into(),
                total_head: 100.0,
            }],
            pipes: vec![
                Pipe {
                    id: "P1".into(),
                    from: "R1".into(),
                    to: "J1".into(),
                    length: 1000.0,
                    diameter: 0.3,
                    roughness: 130.0,
                },
                Pipe {
                    id: "P2".into(),
                    from: "J1".into(),
                    to: "J2".into(),
                    length: 500.0,
                    diameter: 0.2,
                    roughness: 130.0,
                },
            ],
            sensors: vec!["J2".into()],
            ..NetworkModel::default()
        }
    }

    #[test]
    fn node_indices_follow_file_order() {
        let m = line_model();
        assert_eq!(m.node_index("J1").unwrap(), 0);
        assert_eq!(m.node_index("J2").unwrap(), 1);
        assert_eq!(m.node_index("R1").unwrap(), 2);
        assert_eq!(m.node_id(2), "R1");
        assert!(matches!(m.node_index("nope"), Err(Error::UnknownNode(_))));
    }

    #[test]
    fn node_index_is_a_bijection() {
        let m = line_model();
        let mut all: Vec<usize> = m.node_ids().map(|id| m.node_index(id).unwrap()).collect();
        all.sort_unstable();
        assert_eq!(all, (0..m.node_count()).collect::<Vec<_>>());
        // and stable across calls
        assert_eq!(m.node_index("J2").unwrap(), m.node_index("J2").unwrap());
    }

    #[test]
    fn valid_model_passes() {
        let rep = line_model().validate();
        assert!(rep.is_ok(), "unexpected errors: {rep}");
    }

    #[test]
    fn dangling_endpoint_is_flagged() {
        let mut m = line_model();
        m.pipes[1].to = "J9".into();
        let rep = m.validate();
        assert!(rep.errors.iter().any(|e| e.code == IssueCode::UnknownNode));
    }

    #[test]
    fn missing_source_is_flagged() {
        let mut m = line_model();
        m.reservoirs.clear();
        m.pipes.remove(0);
        let rep = m.validate();
        assert!(rep.errors.iter().any(|e| e.code == IssueCode::NoSource));
    }

    #[test]
    fn tank_level_ordering_is_enforced() {
        let mut m = line_model();
        m.tanks.push(Tank {
            id: "T1".into(),
            elevation: 50.0,
            init_level: 0.5,
            min_level: 1.0,
            max_level: 15.0,
            diameter: 20.0,
        });
        m.pipes.push(Pipe {
            id: "P3".into(),
            from: "T1".into(),
            to: "J2".into(),
            length: 100.0,
            diameter: 0.2,
            roughness: 130.0,
        });
        let rep = m.validate();
        assert!(rep
            .errors
            .iter()
            .any(|e| e.code == IssueCode::BadValue && e.message.contains("T1")));
    }

    #[test]
    fn disconnected_component_is_flagged() {
        let mut m = line_model();
        m.junctions.push(Junction {
            id: "J3".into(),
            elevation: 0.0,
            base_demand: 0.0,
            pattern: None,
        });
        let rep = m.validate();
        assert!(rep.errors.iter().any(|e| e.code == IssueCode::Disconnected));
    }

    #[test]
    fn duplicate_sensor_is_flagged() {
        let mut m = line_model();
        m.sensors = vec!["J2".into(), "J2".into()];
        let rep = m.validate();
        assert!(rep.errors.iter().any(|e| e.code == IssueCode::DupId));
    }

    #[test]
    fn sensor_must_be_a_junction() {
        let mut m = line_model();
        m.sensors = vec!["R1".into()];
        let rep = m.validate();
        assert!(rep.errors.iter().any(|e| e.code == IssueCode::UnknownNode));
    }
}
