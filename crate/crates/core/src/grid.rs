//! Grid case files, validation, and admittance matrices.
//!
//! Cases are stored as versioned JSON with per-unit quantities throughout
//! (base MVA recorded in the file). The field set is modeled on the MATPOWER
//! case format. Parsing applies the optional limit-scaling header and checks
//! every structural invariant up front, including that no listed contingency
//! islands the network.

use std::collections::VecDeque;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Slack,
    Pv,
    Pq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    pub kind: BusKind,
    /// Active load, per unit (consumption positive).
    #[serde(default)]
    pub p_d: f64,
    /// Reactive load, per unit.
    #[serde(default)]
    pub q_d: f64,
    /// Fixed shunt susceptance, per unit.
    #[serde(default)]
    pub shunt_b: f64,
    pub v_min: f64,
    pub v_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    /// Series resistance, pu.
    pub r: f64,
    /// Series reactance, pu.
    pub x: f64,
    /// Total line charging susceptance, pu (split half per end).
    #[serde(default)]
    pub b: f64,
    /// Apparent-flow limit, pu. Zero means unlimited.
    #[serde(default)]
    pub s_max: f64,
}

fn default_h() -> f64 {
    5.0
}
fn default_d() -> f64 {
    2.0
}
fn default_xd() -> f64 {
    0.25
}
fn default_vset() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub bus: usize,
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    /// Voltage set-point bounds; default to the bus voltage limits.
    #[serde(default)]
    pub v_min: Option<f64>,
    #[serde(default)]
    pub v_max: Option<f64>,
    /// Nominal dispatch, pu.
    #[serde(default)]
    pub p_set: f64,
    /// Nominal voltage set-point, pu.
    #[serde(default = "default_vset")]
    pub v_set: f64,
    /// Inertia constant, seconds (system base).
    #[serde(default = "default_h")]
    pub inertia_h: f64,
    /// Damping coefficient, pu torque per pu speed deviation.
    #[serde(default = "default_d")]
    pub damping_d: f64,
    /// Transient reactance, pu.
    #[serde(default = "default_xd")]
    pub xd_transient: f64,
    /// Linear cost coefficient, $/MWh.
    #[serde(default)]
    pub cost_per_mw: f64,
}

/// Limit scaling requested by a case header, applied once at parse time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitScaling {
    /// Multiplier on every finite line apparent-flow limit.
    pub flow_limits: f64,
    /// Multiplier on generator reactive limits (both ends).
    pub q_limits: f64,
}

/// One element of the contingency set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Contingency {
    Intact,
    LineOutage(usize),
}

impl std::fmt::Display for Contingency {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Contingency::Intact => write!(f, "intact"),
            Contingency::LineOutage(k) => write!(f, "line-out:{k}"),
        }
    }
}

/// Static network description. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCase {
    pub version: u32,
    pub name: String,
    pub base_mva: f64,
    #[serde(default = "GridCase::default_frequency")]
    pub frequency_hz: f64,
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub generators: Vec<Generator>,
    /// Line indices whose single outage forms the contingency set;
    /// the intact system is always checked as contingency 0.
    #[serde(default)]
    pub contingencies: Vec<usize>,
    /// Scaling that was already applied at parse time, kept for audit.
    #[serde(default)]
    pub applied_scaling: Option<LimitScaling>,
    /// Scaling requested but not yet applied (file header only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<LimitScaling>,
}

impl GridCase {
    fn default_frequency() -> f64 {
        60.0
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn n_lines(&self) -> usize {
        self.lines.len()
    }

    pub fn n_gens(&self) -> usize {
        self.generators.len()
    }

    pub fn omega_s(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.frequency_hz
    }

    /// Internal bus index for an external bus id.
    pub fn bus_index(&self, id: usize) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn slack_gen(&self) -> usize {
        let slack_bus = self.buses.iter().position(|b| b.kind == BusKind::Slack);
        let slack_id = self.buses[slack_bus.expect("validated case has a slack")].id;
        self.generators
            .iter()
            .position(|g| g.bus == slack_id)
            .expect("validated case has a slack generator")
    }

    /// Effective voltage set-point bounds of generator `g`.
    pub fn gen_v_bounds(&self, g: usize) -> (f64, f64) {
        let gen = &self.generators[g];
        let bus = &self.buses[self.bus_index(gen.bus).expect("validated")];
        (gen.v_min.unwrap_or(bus.v_min), gen.v_max.unwrap_or(bus.v_max))
    }

    /// Full contingency set: the intact system first, then each listed outage.
    pub fn contingency_set(&self) -> Vec<Contingency> {
        let mut set = Vec::with_capacity(1 + self.contingencies.len());
        set.push(Contingency::Intact);
        set.extend(self.contingencies.iter().map(|&k| Contingency::LineOutage(k)));
        set
    }

    /// SHA-256 over the canonical JSON serialization.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("case serializes");
        let mut h = Sha256::new();
        h.update(json.as_bytes());
        hex_string(&h.finalize())
    }

    /// Dispatchable control box: active set-points of non-slack generators
    /// followed by voltage set-points of every generator.
    pub fn control_space(&self) -> ControlSpace {
        let slack = self.slack_gen();
        let mut dims = Vec::new();
        for (g, gen) in self.generators.iter().enumerate() {
            if g == slack {
                continue;
            }
            dims.push(ControlDim {
                label: format!("p_g{}", gen.bus),
                lo: gen.p_min,
                hi: gen.p_max,
                kind: ControlKind::ActivePower(g),
            });
        }
        for (g, gen) in self.generators.iter().enumerate() {
            let (lo, hi) = self.gen_v_bounds(g);
            dims.push(ControlDim {
                label: format!("v_g{}", gen.bus),
                lo,
                hi,
                kind: ControlKind::VoltageSetpoint(g),
            });
        }
        ControlSpace { dims, slack_gen: slack, n_gens: self.n_gens() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != SCHEMA_VERSION {
            return Err(Error::Validation(format!(
                "unsupported schema version {} (expected {SCHEMA_VERSION})",
                self.version
            )));
        }
        if !(self.base_mva > 0.0) {
            return Err(Error::Validation("base_mva must be positive".into()));
        }
        if self.buses.is_empty() {
            return Err(Error::Validation("case has no buses".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for b in &self.buses {
            if !seen.insert(b.id) {
                return Err(Error::Validation(format!("duplicate bus id {}", b.id)));
            }
            if b.v_min > b.v_max {
                return Err(Error::Validation(format!(
                    "bus {}: v_min {} > v_max {}",
                    b.id, b.v_min, b.v_max
                )));
            }
        }
        let n_slack = self
            .buses
            .iter()
            .filter(|b| b.kind == BusKind::Slack)
            .count();
        if n_slack != 1 {
            return Err(Error::Validation(format!(
                "expected exactly one slack bus, found {n_slack}"
            )));
        }
        for (k, l) in self.lines.iter().enumerate() {
            let f = self.bus_index(l.from);
            let t = self.bus_index(l.to);
            if f.is_none() || t.is_none() {
                return Err(Error::Validation(format!(
                    "line {k} references unknown bus ({} or {})",
                    l.from, l.to
                )));
            }
            if l.from == l.to {
                return Err(Error::Validation(format!("line {k} connects a bus to itself")));
            }
            if l.x == 0.0 {
                return Err(Error::Validation(format!("line {k} has zero reactance")));
            }
            if l.r < 0.0 || l.s_max < 0.0 {
                return Err(Error::Validation(format!("line {k} has a negative parameter")));
            }
        }
        let mut gen_buses = std::collections::HashSet::new();
        for (g, gen) in self.generators.iter().enumerate() {
            let Some(bi) = self.bus_index(gen.bus) else {
                return Err(Error::Validation(format!(
                    "generator {g} references unknown bus {}",
                    gen.bus
                )));
            };
            if self.buses[bi].kind == BusKind::Pq {
                return Err(Error::Validation(format!(
                    "generator {g} sits on PQ bus {}",
                    gen.bus
                )));
            }
            if !gen_buses.insert(gen.bus) {
                return Err(Error::Validation(format!(
                    "multiple generators on bus {} (one per bus supported)",
                    gen.bus
                )));
            }
            if gen.p_min > gen.p_max || gen.q_min > gen.q_max {
                return Err(Error::Validation(format!(
                    "generator {g}: min limit exceeds max limit"
                )));
            }
            let (v_lo, v_hi) = self.gen_v_bounds(g);
            if v_lo > v_hi {
                return Err(Error::Validation(format!(
                    "generator {g}: v_min {v_lo} > v_max {v_hi}"
                )));
            }
            if gen.inertia_h <= 0.0 || gen.damping_d < 0.0 || gen.xd_transient <= 0.0 {
                return Err(Error::Validation(format!(
                    "generator {g}: machine parameters out of range"
                )));
            }
        }
        for b in &self.buses {
            if b.kind != BusKind::Pq && !gen_buses.contains(&b.id) {
                return Err(Error::Validation(format!(
                    "bus {} is {:?} but has no generator",
                    b.id, b.kind
                )));
            }
        }
        if !is_connected(self, None) {
            return Err(Error::Validation("intact network is not connected".into()));
        }
        for &k in &self.contingencies {
            if k >= self.lines.len() {
                return Err(Error::Validation(format!(
                    "contingency references line {k} but case has {} lines",
                    self.lines.len()
                )));
            }
            if !is_connected(self, Some(k)) {
                return Err(Error::Islanding { line: k });
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<GridCase> {
        let mut case: GridCase =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if let Some(scale) = case.scale.take() {
            for l in &mut case.lines {
                if l.s_max > 0.0 {
                    l.s_max *= scale.flow_limits;
                }
            }
            for g in &mut case.generators {
                g.q_min *= scale.q_limits;
                g.q_max *= scale.q_limits;
            }
            case.applied_scaling = Some(scale);
        }
        case.validate()?;
        Ok(case)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("case serializes")
    }
}

pub fn parse_case(path: impl AsRef<Path>) -> Result<GridCase> {
    let text = std::fs::read_to_string(path.as_ref())?;
    GridCase::from_json(&text)
}

fn hex_string(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

/// BFS connectivity over in-service lines.
fn is_connected(case: &GridCase, outage: Option<usize>) -> bool {
    let n = case.buses.len();
    if n == 0 {
        return false;
    }
    let mut adj = vec![Vec::new(); n];
    for (k, l) in case.lines.iter().enumerate() {
        if Some(k) == outage {
            continue;
        }
        let (f, t) = (
            case.bus_index(l.from).unwrap(),
            case.bus_index(l.to).unwrap(),
        );
        adj[f].push(t);
        adj[t].push(f);
    }
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    let mut count = 1;
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                count += 1;
                queue.push_back(v);
            }
        }
    }
    count == n
}

/// Kind and generator index behind one control dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlKind {
    ActivePower(usize),
    VoltageSetpoint(usize),
}

#[derive(Debug, Clone)]
pub struct ControlDim {
    pub label: String,
    pub lo: f64,
    pub hi: f64,
    pub kind: ControlKind,
}

/// The dispatchable control box of a case.
#[derive(Debug, Clone)]
pub struct ControlSpace {
    pub dims: Vec<ControlDim>,
    pub slack_gen: usize,
    pub n_gens: usize,
}

impl ControlSpace {
    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn lower(&self) -> Vec<f64> {
        self.dims.iter().map(|d| d.lo).collect()
    }

    pub fn upper(&self) -> Vec<f64> {
        self.dims.iter().map(|d| d.hi).collect()
    }

    pub fn labels(&self) -> Vec<String> {
        self.dims.iter().map(|d| d.label.clone()).collect()
    }

    pub fn clip(&self, x: &mut [f64]) {
        for (v, d) in x.iter_mut().zip(&self.dims) {
            *v = v.clamp(d.lo, d.hi);
        }
    }
}

/// Dense bus admittance matrix for one network condition.
#[derive(Debug, Clone)]
pub struct AdmittanceMatrix {
    pub y: Vec<Vec<Complex64>>,
    pub outage: Option<usize>,
}

impl AdmittanceMatrix {
    pub fn n(&self) -> usize {
        self.y.len()
    }
}

/// Series admittance and half-shunt of one line.
pub fn line_admittance(l: &Line) -> (Complex64, Complex64) {
    let z = Complex64::new(l.r, l.x);
    (z.inv(), Complex64::new(0.0, l.b / 2.0))
}

/// Assemble the pi-model bus admittance matrix, optionally with one line out.
pub fn build_ybus(case: &GridCase, outage: Option<usize>) -> Result<AdmittanceMatrix> {
    if let Some(k) = outage {
        if !case.contingencies.contains(&k) {
            return Err(Error::UnknownContingency(format!(
                "line {k} is not in the contingency list"
            )));
        }
        if !is_connected(case, Some(k)) {
            return Err(Error::Islanding { line: k });
        }
    }
    let n = case.n_buses();
    let mut y = vec![vec![Complex64::new(0.0, 0.0); n]; n];
    for (k, l) in case.lines.iter().enumerate() {
        if Some(k) == outage {
            continue;
        }
        let f = case.bus_index(l.from).unwrap();
        let t = case.bus_index(l.to).unwrap();
        let (ys, ysh) = line_admittance(l);
        y[f][f] += ys + ysh;
        y[t][t] += ys + ysh;
        y[f][t] -= ys;
        y[t][f] -= ys;
    }
    for (i, b) in case.buses.iter().enumerate() {
        y[i][i] += Complex64::new(0.0, b.shunt_b);
    }
    Ok(AdmittanceMatrix { y, outage })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases;

    #[test]
    fn two_bus_series_admittance() {
        let case = cases::two_bus(0.0, 0.1, 0.0, 0.5, 0.1);
        let yb = build_ybus(&case, None).unwrap();
        let want = Complex64::new(0.0, -10.0);
        assert!((yb.y[0][0] - want).norm() < 1e-12);
        assert!((yb.y[1][1] - want).norm() < 1e-12);
        assert!((yb.y[0][1] + want).norm() < 1e-12);
        assert!((yb.y[1][0] + want).norm() < 1e-12);
    }

    #[test]
    fn two_bus_half_shunt_split() {
        let mut case = cases::two_bus(0.0, 0.1, 0.0, 0.5, 0.1);
        case.lines[0].b = 0.02;
        let yb = build_ybus(&case, None).unwrap();
        // diagonal gains +0.01j per end on top of the series term
        let want_diag = Complex64::new(0.0, -10.0 + 0.01);
        assert!((yb.y[0][0] - want_diag).norm() < 1e-12);
        assert!((yb.y[1][1] - want_diag).norm() < 1e-12);
    }

    #[test]
    fn ieee14_counts() {
        let case = cases::ieee14();
        assert_eq!(case.n_buses(), 14);
        assert_eq!(case.n_gens(), 5);
        assert_eq!(case.n_lines(), 20);
        assert_eq!(case.contingencies.len(), 18);
        assert_eq!(case.contingency_set().len(), 19);
        // scaling applied at parse
        assert!(case.applied_scaling.is_some());
    }

    #[test]
    fn ieee14_outage_difference_is_branch_stamp() {
        let case = cases::ieee14();
        let k = case.contingencies[0];
        let intact = build_ybus(&case, None).unwrap();
        let outaged = build_ybus(&case, Some(k)).unwrap();
        let l = &case.lines[k];
        let (f, t) = (
            case.bus_index(l.from).unwrap(),
            case.bus_index(l.to).unwrap(),
        );
        let (ys, ysh) = line_admittance(l);
        for i in 0..case.n_buses() {
            for j in 0..case.n_buses() {
                let diff = intact.y[i][j] - outaged.y[i][j];
                let want = if i == f && j == f || i == t && j == t {
                    ys + ysh
                } else if (i, j) == (f, t) || (i, j) == (t, f) {
                    -ys
                } else {
                    Complex64::new(0.0, 0.0)
                };
                assert!(
                    (diff - want).norm() < 1e-12,
                    "difference is not the branch stamp at ({i},{j})"
                );
            }
        }
    }

    #[test]
    fn empty_file_is_parse_error() {
        assert!(matches!(GridCase::from_json(""), Err(Error::Parse(_))));
    }

    #[test]
    fn minimal_two_bus_contingency_set() {
        let case = cases::two_bus(0.01, 0.1, 0.0, 0.5, 0.1);
        assert_eq!(case.n_buses(), 2);
        assert_eq!(case.contingency_set(), vec![Contingency::Intact]);
    }

    #[test]
    fn islanding_contingency_rejected_at_parse() {
        let mut case = cases::two_bus(0.01, 0.1, 0.0, 0.5, 0.1);
        case.contingencies = vec![0]; // the only line
        let text = case.to_json();
        match GridCase::from_json(&text) {
            Err(Error::Islanding { line: 0 }) => {}
            other => panic!("expected islanding error, got {other:?}"),
        }
    }

    #[test]
    fn two_slack_buses_rejected() {
        let mut case = cases::two_bus(0.01, 0.1, 0.0, 0.5, 0.1);
        case.buses[1].kind = BusKind::Slack;
        case.generators.push(Generator {
            bus: 2,
            ..case.generators[0].clone()
        });
        assert!(matches!(case.validate(), Err(Error::Validation(_))));
    }

    #[test]
    fn unknown_outage_in_build_ybus() {
        let case = cases::ieee14();
        let excluded: Vec<usize> = (0..case.n_lines())
            .filter(|k| !case.contingencies.contains(k))
            .collect();
        assert!(!excluded.is_empty());
        assert!(matches!(
            build_ybus(&case, Some(excluded[0])),
            Err(Error::UnknownContingency(_))
        ));
    }

    #[test]
    fn roundtrip_reparses_identically() {
        let case = cases::ieee14();
        let text = case.to_json();
        let again = GridCase::from_json(&text).unwrap();
        assert_eq!(case, again);
        assert_eq!(case.fingerprint(), again.fingerprint());
    }

    #[test]
    fn ieee14_control_space_dims() {
        let case = cases::ieee14();
        let cs = case.control_space();
        // 4 non-slack active set-points + 5 voltage set-points
        assert_eq!(cs.len(), 9);
    }
}
