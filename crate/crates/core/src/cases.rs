//! Bundled cases and small synthetic networks used across tests and examples.

use crate::grid::{Bus, BusKind, Generator, GridCase, SCHEMA_VERSION};

const IEEE14_JSON: &str = include_str!("../../../cases/ieee14.json");

/// The bundled IEEE 14-bus case: 5 generators, 11 loads, 20 lines, and an
/// 18-outage contingency list.
pub fn ieee14() -> GridCase {
    GridCase::from_json(IEEE14_JSON).expect("bundled ieee14 case is valid")
}

fn wide_open_gen(bus: usize) -> Generator {
    Generator {
        bus,
        p_min: -10.0,
        p_max: 10.0,
        q_min: -10.0,
        q_max: 10.0,
        v_min: None,
        v_max: None,
        p_set: 0.0,
        v_set: 1.0,
        inertia_h: 5.0,
        damping_d: 2.0,
        xd_transient: 0.25,
        cost_per_mw: 10.0,
    }
}

/// Two buses joined by one line: a slack generator at bus 1 and a PQ load
/// at bus 2. Closed-form power-flow answers exist for this network.
pub fn two_bus(r: f64, x: f64, b: f64, p_load: f64, q_load: f64) -> GridCase {
    let case = GridCase {
        version: SCHEMA_VERSION,
        name: "two-bus".into(),
        base_mva: 100.0,
        frequency_hz: 60.0,
        buses: vec![
            Bus {
                id: 1,
                kind: BusKind::Slack,
                p_d: 0.0,
                q_d: 0.0,
                shunt_b: 0.0,
                v_min: 0.8,
                v_max: 1.2,
            },
            Bus {
                id: 2,
                kind: BusKind::Pq,
                p_d: p_load,
                q_d: q_load,
                shunt_b: 0.0,
                v_min: 0.8,
                v_max: 1.2,
            },
        ],
        lines: vec![crate::grid::Line {
            from: 1,
            to: 2,
            r,
            x,
            b,
            s_max: 0.0,
        }],
        generators: vec![wide_open_gen(1)],
        contingencies: vec![],
        applied_scaling: None,
        scale: None,
    };
    case.validate().expect("two-bus case is valid");
    case
}

/// Two generators coupled through one line, no load: the machine pair used
/// by the small-signal tests. With a very large inertia at bus 1 this
/// approximates a single machine against an infinite bus.
pub fn two_machine(
    x_line: f64,
    transfer: f64,
    h: (f64, f64),
    d: (f64, f64),
    xd: f64,
) -> GridCase {
    let mut gen1 = wide_open_gen(1);
    gen1.inertia_h = h.0;
    gen1.damping_d = d.0;
    gen1.xd_transient = xd;
    let mut gen2 = wide_open_gen(2);
    gen2.inertia_h = h.1;
    gen2.damping_d = d.1;
    gen2.xd_transient = xd;
    gen2.p_set = transfer;
    let case = GridCase {
        version: SCHEMA_VERSION,
        name: "two-machine".into(),
        base_mva: 100.0,
        frequency_hz: 60.0,
        buses: vec![
            Bus {
                id: 1,
                kind: BusKind::Slack,
                p_d: 0.0,
                q_d: 0.0,
                shunt_b: 0.0,
                v_min: 0.8,
                v_max: 1.2,
            },
            Bus {
                id: 2,
                kind: BusKind::Pv,
                p_d: 0.0,
                q_d: 0.0,
                shunt_b: 0.0,
                v_min: 0.8,
                v_max: 1.2,
            },
        ],
        lines: vec![crate::grid::Line {
            from: 1,
            to: 2,
            r: 0.0,
            x: x_line,
            b: 0.0,
            s_max: 0.0,
        }],
        generators: vec![gen1, gen2],
        contingencies: vec![],
        applied_scaling: None,
        scale: None,
    };
    case.validate().expect("two-machine case is valid");
    case
}
