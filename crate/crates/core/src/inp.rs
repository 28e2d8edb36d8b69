//! EPANET INP subset: reader and writer.
//!
//! Supported sections: [TITLE] [JUNCTIONS] [RESERVOIRS] [TANKS] [PIPES]
//! [PUMPS] [VALVES] [DEMANDS] [PATTERNS] [TIMES] [COORDINATES] [OPTIONS].
//! Anything else produces a warning and is skipped. Files must declare
//! LPS flow units with Hazen-Williams headloss; demands are converted to
//! m³/s and pipe diameters from mm to m. Coordinates are syntax-checked
//! and dropped (the model carries no geometry), and the title is not kept.
//!
//! Sensors live in a JSON sidecar (`{"sensors": ["id", ...]}`), not in the
//! INP file, so bundled networks stay loadable by other EPANET tooling.

use std::fmt::Write as _;

use serde::Deserialize;

use crate::error::Error;
use crate::model::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    Title,
    Junctions,
    Reservoirs,
    Tanks,
    Pipes,
    Pumps,
    Valves,
    Demands,
    Patterns,
    Times,
    Coordinates,
    Options,
    End,
    Unsupported,
}

fn section_for(name: &str) -> Option<Section> {
    Some(match name.to_ascii_uppercase().as_str() {
        "TITLE" => Section::Title,
        "JUNCTIONS" => Section::Junctions,
        "RESERVOIRS" => Section::Reservoirs,
        "TANKS" => Section::Tanks,
        "PIPES" => Section::Pipes,
        "PUMPS" => Section::Pumps,
        "VALVES" => Section::Valves,
        "DEMANDS" => Section::Demands,
        "PATTERNS" => Section::Patterns,
        "TIMES" => Section::Times,
        "COORDINATES" => Section::Coordinates,
        "OPTIONS" => Section::Options,
        "END" => Section::End,
        _ => return None,
    })
}

/// Parse INP text into a validated model. Returns the full report (with
/// any number of errors) instead of failing on the first problem.
pub fn parse_inp(text: &str) -> Result<NetworkModel, ValidationReport> {
    let (model, report) = parse_inp_verbose(text);
    match model {
        Some(m) if report.is_ok() => Ok(m),
        _ => Err(report),
    }
}

/// Like [`parse_inp`] but also exposes warnings on success. The model is
/// `None` exactly when the report carries errors.
pub fn parse_inp_verbose(text: &str) -> (Option<NetworkModel>, ValidationReport) {
    let mut rep = ValidationReport::default();
    let mut model = NetworkModel::default();
    // (junction id, demand m³/s, pattern, line) rows from [DEMANDS]
    let mut extra_demands: Vec<(String, f64, Option<String>, usize)> = Vec::new();
    let mut units_declared = false;
    let mut section = None;

    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = match raw.find(';') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let line = line.trim();
        if line.is_empty() {
            continue;
        }

        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = match section_for(name.trim()) {
                Some(Section::End) => break,
                Some(s) => Some(s),
                None => {
                    rep.warn(
                        IssueCode::Unsupported,
                        format!("section [{}] is not supported; skipping", name.trim()),
                        Some(lineno),
                    );
                    Some(Section::Unsupported)
                }
            };
            continue;
        }

        let tok: Vec<&str> = line.split_whitespace().collect();
        let num = |rep: &mut ValidationReport, s: &str, what: &str| -> Option<f64> {
            match s.parse::<f64>() {
                Ok(v) if v.is_finite() => Some(v),
                _ => {
                    rep.error(
                        IssueCode::BadNumber,
                        format!("bad {what} '{s}'"),
                        Some(lineno),
                    );
                    None
                }
            }
        };
        let need = |rep: &mut ValidationReport, n: usize, what: &str| -> bool {
            if tok.len() < n {
                rep.error(
                    IssueCode::BadNumber,
                    format!("{what} needs at least {n} fields, found {}", tok.len()),
                    Some(lineno),
                );
                false
            } else {
                true
            }
        };

        match section {
            None => rep.warn(
                IssueCode::Unsupported,
                format!("data before any section header: '{line}'"),
                Some(lineno),
            ),
            Some(Section::Title) | Some(Section::Unsupported) | Some(Section::End) => {}
            Some(Section::Junctions) => {
                if !need(&mut rep, 2, "junction") {
                    continue;
                }
                let Some(elevation) = num(&mut rep, tok[1], "elevation") else {
                    continue;
                };
                let demand_lps = if tok.len() > 2 {
                    match num(&mut rep, tok[2], "demand") {
                        Some(v) => v,
                        None => continue,
                    }
                } else {
                    0.0
                };
                model.junctions.push(Junction {
                    id: tok[0].to_string(),
                    elevation,
                    base_demand: demand_lps / 1000.0,
                    pattern: tok.get(3).map(|s| s.to_string()),
                });
            }
            Some(Section::Reservoirs) => {
                if !need(&mut rep, 2, "reservoir") {
                    continue;
                }
                let Some(total_head) = num(&mut rep, tok[1], "head") else {
                    continue;
                };
                if tok.len() > 2 {
                    rep.warn(
                        IssueCode::Ignored,
                        format!("reservoir '{}': head pattern ignored", tok[0]),
                        Some(lineno),
                    );
                }
                model.reservoirs.push(Reservoir {
                    id: tok[0].to_string(),
                    total_head,
                });
            }
            Some(Section::Tanks) => {
                if !need(&mut rep, 6, "tank") {
                    continue;
                }
                let mut v = [0.0; 5];
                let names = [
                    "elevation",
                    "init level",
                    "min level",
                    "max level",
                    "diameter",
                ];
                let mut ok = true;
                for i in 0..5 {
                    match num(&mut rep, tok[1 + i], names[i]) {
                        Some(x) => v[i] = x,
                        None => ok = false,
                    }
                }
                if !ok {
                    continue;
                }
                model.tanks.push(Tank {
                    id: tok[0].to_string(),
                    elevation: v[0],
                    init_level: v[1],
                    min_level: v[2],
                    max_level: v[3],
                    diameter: v[4],
                });
            }
            Some(Section::Pipes) => {
                if !need(&mut rep, 6, "pipe") {
                    continue;
                }
                let l = num(&mut rep, tok[3], "length");
                let d = num(&mut rep, tok[4], "diameter");
                let c = num(&mut rep, tok[5], "roughness");
                let (Some(length), Some(diameter_mm), Some(roughness)) = (l, d, c) else {
                    continue;
                };
                model.pipes.push(Pipe {
                    id: tok[0].to_string(),
                    from: tok[1].to_string(),
                    to: tok[2].to_string(),
                    length,
                    diameter: diameter_mm / 1000.0,
                    roughness,
                });
            }
            Some(Section::Pumps) => {
                // ID  From  To  HEAD  h0  r  [n]
                if !need(&mut rep, 6, "pump") {
                    continue;
                }
                if !tok[3].eq_ignore_ascii_case("HEAD") {
                    rep.warn(
                        IssueCode::Unsupported,
                        format!(
                            "pump '{}': only HEAD curves are supported; line skipped",
                            tok[0]
                        ),
                        Some(lineno),
                    );
                    continue;
                }
                let h0 = num(&mut rep, tok[4], "shutoff head");
                let r = num(&mut rep, tok[5], "curve coefficient");
                let n = match tok.get(6) {
                    Some(s) => num(&mut rep, s, "curve exponent"),
                    None => Some(2.0),
                };
                let (Some(h0), Some(r), Some(n)) = (h0, r, n) else {
                    continue;
                };
                model.pumps.push(Pump {
                    id: tok[0].to_string(),
                    from: tok[1].to_string(),
                    to: tok[2].to_string(),
                    curve: PumpCurve { h0, r, n },
                });
            }
            Some(Section::Valves) => {
                // ID  From  To  [diameter]  KIND  setting
                if !need(&mut rep, 5, "valve") {
                    continue;
                }
                let (kind_tok, setting_tok, had_diam) = if tok[3].parse::<f64>().is_ok() {
                    if !need(&mut rep, 6, "valve") {
                        continue;
                    }
                    (tok[4], tok[5], true)
                } else {
                    (tok[3], tok[4], false)
                };
                if had_diam {
                    rep.warn(
                        IssueCode::Ignored,
                        format!("valve '{}': diameter column ignored", tok[0]),
                        Some(lineno),
                    );
                }
                if !kind_tok.eq_ignore_ascii_case("PRV") {
                    rep.warn(
                        IssueCode::Unsupported,
                        format!(
                            "valve '{}': kind {} is not supported; line skipped",
                            tok[0], kind_tok
                        ),
                        Some(lineno),
                    );
                    continue;
                }
                let Some(setting) = num(&mut rep, setting_tok, "valve setting") else {
                    continue;
                };
                model.valves.push(Valve {
                    id: tok[0].to_string(),
                    from: tok[1].to_string(),
                    to: tok[2].to_string(),
                    kind: ValveKind::Prv,
                    setting,
                });
            }
            Some(Section::Demands) => {
                if !need(&mut rep, 2, "demand") {
                    continue;
                }
                let Some(lps) = num(&mut rep, tok[1], "demand") else {
                    continue;
                };
                extra_demands.push((
                    tok[0].to_string(),
                    lps / 1000.0,
                    tok.get(2).map(|s| s.to_string()),
                    lineno,
                ));
            }
            Some(Section::Patterns) => {
                if !need(&mut rep, 2, "pattern") {
                    continue;
                }
                let mut vals = Vec::with_capacity(tok.len() - 1);
                let mut ok = true;
                for s in &tok[1..] {
                    match num(&mut rep, s, "pattern multiplier") {
                        Some(v) => vals.push(v),
                        None => ok = false,
                    }
                }
                if ok {
                    model
                        .patterns
                        .entry(tok[0].to_string())
                        .or_default()
                        .extend(vals);
                }
            }
            Some(Section::Times) => {
                if !need(&mut rep, 2, "time option") {
                    continue;
                }
                let key = tok[..tok.len() - 1].join(" ").to_ascii_uppercase();
                let value = tok[tok.len() - 1];
                let secs = match parse_clock(value) {
                    Some(s) => s,
                    None => {
                        rep.error(
                            IssueCode::BadNumber,
                            format!("bad time value '{value}'"),
                            Some(lineno),
                        );
                        continue;
                    }
                };
                match key.as_str() {
                    "DURATION" => model.duration = secs,
                    "HYDRAULIC TIMESTEP" => model.hydraulic_timestep = secs,
                    "PATTERN TIMESTEP" => model.pattern_timestep = secs,
                    _ => rep.warn(
                        IssueCode::Ignored,
                        format!("time option '{key}' ignored"),
                        Some(lineno),
                    ),
                }
            }
            Some(Section::Coordinates) => {
                if !need(&mut rep, 3, "coordinate") {
                    continue;
                }
                // Geometry is not part of the model; check the numbers and move on.
                num(&mut rep, tok[1], "x coordinate");
                num(&mut rep, tok[2], "y coordinate");
            }
            Some(Section::Options) => {
                if !need(&mut rep, 2, "option") {
                    continue;
                }
                let key = tok[0].to_ascii_uppercase();
                let value = tok[1].to_ascii_uppercase();
                match key.as_str() {
                    "UNITS" | "FLOWUNITS" => {
                        units_declared = true;
                        if value != "LPS" {
                            rep.error(
                                IssueCode::BadUnits,
                                format!("flow units must be LPS, found {value}"),
                                Some(lineno),
                            );
                        }
                    }
                    "HEADLOSS" => {
                        if value != "H-W" && value != "HW" {
                            rep.error(
                                IssueCode::BadUnits,
                                format!("headloss formula must be H-W, found {value}"),
                                Some(lineno),
                            );
                        }
                    }
                    _ => rep.warn(
                        IssueCode::Ignored,
                        format!("option '{}' ignored", tok[0]),
                        Some(lineno),
                    ),
                }
            }
        }
    }

    if !units_declared {
        rep.warn(
            IssueCode::Ignored,
            "no UNITS option found; assuming LPS",
            None,
        );
    }

    // [DEMANDS] rows replace the junction column (EPANET treats them as the
    // authoritative demand categories); several rows for one junction sum.
    let mut replaced: Vec<&str> = Vec::new();
    for (id, demand, pattern, lineno) in &extra_demands {
        match model.junctions.iter_mut().find(|j| j.id == *id) {
            Some(j) => {
                if replaced.contains(&id.as_str()) {
                    j.base_demand += demand;
                } else {
                    j.base_demand = *demand;
                    replaced.push(id);
                }
                if pattern.is_some() {
                    j.pattern = pattern.clone();
                }
            }
            None => rep.error(
                IssueCode::UnknownNode,
                format!("[DEMANDS] references unknown junction '{id}'"),
                Some(*lineno),
            ),
        }
    }

    rep.merge(model.validate());
    if rep.is_ok() {
        (Some(model), rep)
    } else {
        (None, rep)
    }
}

/// `H:MM[:SS]` clock time or a bare decimal number of hours, as seconds.
fn parse_clock(s: &str) -> Option<f64> {
    if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() > 3 || parts.is_empty() {
            return None;
        }
        let h: f64 = parts[0].parse().ok()?;
        let m: f64 = parts.get(1).unwrap_or(&"0").parse().ok()?;
        let sec: f64 = parts.get(2).unwrap_or(&"0").parse().ok()?;
        if h < 0.0 || m < 0.0 || sec < 0.0 {
            return None;
        }
        Some(h * 3600.0 + m * 60.0 + sec)
    } else {
        let hours: f64 = s.parse().ok()?;
        if hours < 0.0 {
            return None;
        }
        Some(hours * 3600.0)
    }
}

fn clock(seconds: f64) -> String {
    let total = seconds.round() as u64;
    format!(
        "{}:{:02}:{:02}",
        total / 3600,
        (total % 3600) / 60,
        total % 60
    )
}

/// Serialize a model back to INP text. `parse_inp(write_inp(m)) == m` for
/// any model that itself came from a parse (canonical sections, demands in
/// the junction table).
pub fn write_inp(model: &NetworkModel) -> String {
    let mut out = String::new();
    let w = &mut out;

    writeln!(w, "[JUNCTIONS]").unwrap();
    writeln!(w, ";ID  Elevation  Demand  Pattern").unwrap();
    for j in &model.junctions {
        write!(w, " {}  {}  {}", j.id, j.elevation, j.base_demand * 1000.0).unwrap();
        if let Some(p) = &j.pattern {
            write!(w, "  {p}").unwrap();
        }
        writeln!(w).unwrap();
    }

    writeln!(w, "\n[RESERVOIRS]").unwrap();
    writeln!(w, ";ID  Head").unwrap();
    for r in &model.reservoirs {
        writeln!(w, " {}  {}", r.id, r.total_head).unwrap();
    }

    if !model.tanks.is_empty() {
        writeln!(w, "\n[TANKS]").unwrap();
        writeln!(w, ";ID  Elevation  InitLevel  MinLevel  MaxLevel  Diameter").unwrap();
        for t in &model.tanks {
            writeln!(
                w,
                " {}  {}  {}  {}  {}  {}",
                t.id, t.elevation, t.init_level, t.min_level, t.max_level, t.diameter
            )
            .unwrap();
        }
    }

    writeln!(w, "\n[PIPES]").unwrap();
    writeln!(w, ";ID  Node1  Node2  Length  Diameter  Roughness").unwrap();
    for p in &model.pipes {
        writeln!(
            w,
            " {}  {}  {}  {}  {}  {}",
            p.id,
            p.from,
            p.to,
            p.length,
            p.diameter * 1000.0,
            p.roughness
        )
        .unwrap();
    }

    if !model.pumps.is_empty() {
        writeln!(w, "\n[PUMPS]").unwrap();
        writeln!(w, ";ID  Node1  Node2  HEAD  h0  r  n").unwrap();
        for p in &model.pumps {
            writeln!(
                w,
                " {}  {}  {}  HEAD  {}  {}  {}",
                p.id, p.from, p.to, p.curve.h0, p.curve.r, p.curve.n
            )
            .unwrap();
        }
    }

    if !model.valves.is_empty() {
        writeln!(w, "\n[VALVES]").unwrap();
        writeln!(w, ";ID  Node1  Node2  Kind  Setting").unwrap();
        for v in &model.valves {
            let kind = match v.kind {
                ValveKind::Prv => "PRV",
            };
            writeln!(
                w,
                " {}  {}  {}  {}  {}",
                v.id, v.from, v.to, kind, v.setting
            )
            .unwrap();
        }
    }

    if !model.patterns.is_empty() {
        writeln!(w, "\n[PATTERNS]").unwrap();
        for (id, vals) in &model.patterns {
            for chunk in vals.chunks(6) {
                write!(w, " {id}").unwrap();
                for v in chunk {
                    write!(w, "  {v}").unwrap();
                }
                writeln!(w).unwrap();
            }
        }
    }

    writeln!(w, "\n[TIMES]").unwrap();
    writeln!(w, " DURATION            {}", clock(model.duration)).unwrap();
    writeln!(
        w,
        " HYDRAULIC TIMESTEP  {}",
        clock(model.hydraulic_timestep)
    )
    .unwrap();
    writeln!(w, " PATTERN TIMESTEP    {}", clock(model.pattern_timestep)).unwrap();

    writeln!(w, "\n[OPTIONS]").unwrap();
    writeln!(w, " UNITS      LPS").unwrap();
    writeln!(w, " HEADLOSS   H-W").unwrap();

    writeln!(w, "\n[END]").unwrap();
    out
}

#[derive(Deserialize)]
struct SensorsFile {
    sensors: Vec<String>,
}

/// Read the `{"sensors": [...]}` sidecar.
pub fn parse_sensors_json(text: &str) -> Result<Vec<String>, Error> {
    let f: SensorsFile =
        serde_json::from_str(text).map_err(|e| Error::Invalid(format!("sensors file: {e}")))?;
    Ok(f.sensors)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "\
[JUNCTIONS]
 J1  0.0  1.0
[RESERVOIRS]
 R1  100.0
[PIPES]
 P1  R1  J1  1000  300  130
[OPTIONS]
 UNITS  LPS
";

    #[test]
    fn minimal_network_parses() {
        let m = parse_inp(MINIMAL).unwrap();
        assert_eq!(m.node_count(), 2);
        assert_eq!(m.pipes.len(), 1);
        assert_eq!(m.junctions[0].base_demand, 0.001);
        assert_eq!(m.pipes[0].diameter, 0.3);
    }

    #[test]
    fn unknown_endpoint_reports_the_pipe_line() {
        let text = MINIMAL.replace("P1  R1  J1", "P1  R1  J9");
        let rep = parse_inp(&text).unwrap_err();
        assert!(rep
            .errors
            .iter()
            .any(|e| e.code == IssueCode::UnknownNode && e.message.contains("J9")));
    }

    #[test]
    fn malformed_number_reports_line() {
        let text = MINIMAL.replace("1000  300  130", "1000  30O  130");
        let rep = parse_inp(&text).unwrap_err();
        let err = rep
            .errors
            .iter()
            .find(|e| e.code == IssueCode::BadNumber)
            .expect("BAD_NUMBER issue");
        assert_eq!(err.line, Some(6));
    }

    #[test]
    fn duplicate_id_is_an_error() {
        let text = MINIMAL.replace("[RESERVOIRS]", "  J1 1.0 0.0\n[RESERVOIRS]");
        let rep = parse_inp(&text).unwrap_err();
        assert!(rep.errors.iter().any(|e| e.code == IssueCode::DupId));
    }

    #[test]
    fn missing_source_is_an_error() {
        let text = "\
[JUNCTIONS]
 J1  0.0  1.0
 J2  0.0  0.0
[PIPES]
 P1  J1  J2  1000  300  130
";
        let rep = parse_inp(text).unwrap_err();
        assert!(rep.errors.iter().any(|e| e.code == IssueCode::NoSource));
    }

    #[test]
    fn non_lps_units_are_rejected() {
        let text = MINIMAL.replace("UNITS  LPS", "UNITS  GPM");
        let rep = parse_inp(&text).unwrap_err();
        assert!(rep.errors.iter().any(|e| e.code == IssueCode::BadUnits));
    }

    #[test]
    fn non_hw_headloss_is_rejected() {
        let text = format!("{MINIMAL} HEADLOSS D-W\n");
        let rep = parse_inp(&text).unwrap_err();
        assert!(rep.errors.iter().any(|e| e.code == IssueCode::BadUnits));
    }

    #[test]
    fn unsupported_section_is_a_warning_only() {
        let text = format!("{MINIMAL}\n[QUALITY]\n J1  0.5\n");
        let (model, rep) = parse_inp_verbose(&text);
        assert!(model.is_some());
        assert!(rep
            .warnings
            .iter()
            .any(|w| w.code == IssueCode::Unsupported));
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let text = MINIMAL.replace(
            " J1  0.0  1.0",
            "; leading comment\n J1  0.0  1.0 ; trailing",
        );
        let m = parse_inp(&text).unwrap();
        assert_eq!(m.junctions.len(), 1);
    }

    #[test]
    fn demands_section_replaces_then_sums() {
        let text = format!("{MINIMAL}[DEMANDS]\n J1  2.0\n J1  0.5\n");
        let m = parse_inp(&text).unwrap();
        assert_eq!(m.junctions[0].base_demand, 0.0025);
    }

    #[test]
    fn demands_for_unknown_junction_error() {
        let text = format!("{MINIMAL}[DEMANDS]\n J7  2.0\n");
        let rep = parse_inp(&text).unwrap_err();
        assert!(rep.errors.iter().any(|e| e.code == IssueCode::UnknownNode));
    }

    #[test]
    fn clock_times_parse() {
        assert_eq!(parse_clock("24:00"), Some(86_400.0));
        assert_eq!(parse_clock("0:30"), Some(1800.0));
        assert_eq!(parse_clock("1:00:30"), Some(3630.0));
        assert_eq!(parse_clock("1.5"), Some(5400.0));
        assert_eq!(parse_clock("x"), None);
    }

    #[test]
    fn times_section_is_applied() {
        let text = format!("{MINIMAL}[TIMES]\n DURATION 48:00\n HYDRAULIC TIMESTEP 0:15\n");
        let m = parse_inp(&text).unwrap();
        assert_eq!(m.duration, 172_800.0);
        assert_eq!(m.hydraulic_timestep, 900.0);
        assert_eq!(m.num_steps(), 193);
    }

    #[test]
    fn patterns_accumulate_rows() {
        let text = format!("{MINIMAL}[PATTERNS]\n pat1 1 2 3\n pat1 4 5\n");
        let m = parse_inp(&text).unwrap();
        assert_eq!(m.patterns["pat1"], vec![1.0, 2.0, 3.0, 4.0, 5.0]);
    }

    #[test]
    fn parsing_is_deterministic() {
        let a = parse_inp(MINIMAL).unwrap();
        let b = parse_inp(MINIMAL).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn write_then_parse_round_trips() {
        let text = format!(
            "{MINIMAL}[TANKS]\n T1 10 5 1 9 6\n[PIPES]\n P2 J1 T1 50 100 110\n\
             [PUMPS]\n PU1 R1 J1 HEAD 40 120 2\n[VALVES]\n V1 J1 T1 PRV 20\n\
             [PATTERNS]\n p 1 2 0.5\n"
        );
        let m = parse_inp(&text).unwrap();
        let back = parse_inp(&write_inp(&m)).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn sensors_sidecar_parses() {
        let s = parse_sensors_json(r#"{"sensors": ["J1", "J2"]}"#).unwrap();
        assert_eq!(s, vec!["J1", "J2"]);
        assert!(parse_sensors_json("not json").is_err());
    }
}
