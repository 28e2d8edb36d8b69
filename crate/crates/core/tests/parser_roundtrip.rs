//! The bundled networks parse cleanly and the writer is a fixed point of
//! parse∘write; property tests cover randomly shaped networks.

mod common;

use common::{data_dir, load_network};
use lspkit::{parse_inp, write_inp};
use proptest::prelude::*;

#[test]
fn bundled_networks_parse_and_validate() {
    for (stem, junctions, pipes) in [("toy3", 2, 2), ("toy_grid", 10, 15), ("hanoi", 31, 34)] {
        let m = load_network(stem);
        assert_eq!(m.junctions.len(), junctions, "{stem}");
        assert_eq!(m.pipes.len(), pipes, "{stem}");
        assert!(!m.sensors.is_empty(), "{stem}");
    }
}

#[test]
fn bundled_networks_round_trip_byte_stable() {
    for stem in ["toy3", "toy_grid", "hanoi"] {
        let text = std::fs::read_to_string(data_dir().join(format!("{stem}.inp"))).unwrap();
        let m1 = parse_inp(&text).unwrap();
        let w1 = write_inp(&m1);
        let m2 = parse_inp(&w1).unwrap_or_else(|rep| panic!("{stem} rewrite: {rep}"));
        let w2 = write_inp(&m2);
        assert_eq!(w1, w2, "{stem}: writer is not a parse∘write fixed point");
    }
}

#[test]
fn sensor_ids_resolve_to_junctions() {
    for stem in ["toy3", "toy_grid", "hanoi"] {
        let m = load_network(stem);
        for s in &m.sensors {
            let idx = m.node_index(s).unwrap();
            assert!(
                idx < m.junctions.len(),
                "{stem}: sensor {s} is not a junction"
            );
        }
    }
}

/// Decimal values that survive the writer's shortest-representation
/// formatting: plain fractions with up to 3 decimals.
fn grid(lo: f64, hi: f64, step: f64) -> impl Strategy<Value = f64> {
    let n = ((hi - lo) / step) as u32;
    (0..=n).prop_map(move |k| lo + k as f64 * step)
}

fn arb_inp() -> impl Strategy<Value = String> {
    let junction = (grid(0.0, 50.0, 0.25), grid(0.0, 40.0, 0.125));
    let pipe = (
        grid(10.0, 2000.0, 0.5),
        grid(50.0, 600.0, 0.25),
        grid(60.0, 150.0, 0.5),
    );
    (
        proptest::collection::vec(junction, 2..8),
        proptest::collection::vec(pipe, 0..8),
        grid(20.0, 120.0, 0.125),
    )
        .prop_map(|(junctions, extra_pipes, head)| {
            let mut s = String::from("[JUNCTIONS]\n");
            for (i, (elev, demand)) in junctions.iter().enumerate() {
                s += &format!("J{} {elev} {demand}\n", i + 1);
            }
            s += &format!("[RESERVOIRS]\nR1 {head}\n[PIPES]\n");
            // A spanning chain keeps the network connected; extra pipes
            // add loops.
            s += &format!("P0 R1 J1 100 200 130\n");
            for i in 1..junctions.len() {
                s += &format!("PC{i} J{i} J{} 150 150 120\n", i + 1);
            }
            for (k, (len, diam, rough)) in extra_pipes.iter().enumerate() {
                let a = 1 + k % junctions.len();
                let b = 1 + (k * 7 + 3) % junctions.len();
                if a != b {
                    s += &format!("PX{k} J{a} J{b} {len} {diam} {rough}\n");
                }
            }
            s += "[TIMES]\nDURATION 24:00\nHYDRAULIC TIMESTEP 0:30\n";
            s += "[OPTIONS]\nUNITS LPS\nHEADLOSS H-W\n[END]\n";
            s
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_networks_round_trip(text in arb_inp()) {
        let m1 = match parse_inp(&text) {
            Ok(m) => m,
            Err(rep) => panic!("seed network rejected: {rep}\n{text}"),
        };
        let w1 = write_inp(&m1);
        let m2 = parse_inp(&w1).unwrap();
        let w2 = write_inp(&m2);
        prop_assert_eq!(&w1, &w2);
        // Everything survives: counts and a few scalar fields.
        prop_assert_eq!(m1.junctions.len(), m2.junctions.len());
        prop_assert_eq!(m1.pipes.len(), m2.pipes.len());
        for (a, b) in m1.junctions.iter().zip(&m2.junctions) {
            prop_assert_eq!(a.base_demand, b.base_demand);
            prop_assert_eq!(a.elevation, b.elevation);
        }
        for (a, b) in m1.pipes.iter().zip(&m2.pipes) {
            prop_assert_eq!(a.diameter, b.diameter);
            prop_assert_eq!(a.length, b.length);
        }
    }

    #[test]
    fn clock_strings_round_trip(h in 0usize..200, m in 0usize..60) {
        // Whole-minute times survive DURATION/TIMESTEP round-trips.
        let text = format!(
            "[JUNCTIONS]\nJ1 0 1\nJ2 0 1\n[RESERVOIRS]\nR1 50\n[PIPES]\n\
             P1 R1 J1 100 200 130\nP2 J1 J2 100 200 130\n\
             [TIMES]\nDURATION {h}:{m:02}\nHYDRAULIC TIMESTEP 0:30\n\
             [OPTIONS]\nUNITS LPS\nHEADLOSS H-W\n[END]\n"
        );
        let m1 = parse_inp(&text).unwrap();
        prop_assert_eq!(m1.duration, (h * 3600 + m * 60) as f64);
        let m2 = parse_inp(&write_inp(&m1)).unwrap();
        prop_assert_eq!(m1.duration, m2.duration);
        prop_assert_eq!(m1.hydraulic_timestep, m2.hydraulic_timestep);
    }
}
