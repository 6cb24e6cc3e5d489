//! The ground-truth feasibility function.
//!
//! A point is feasible when, for the intact system and every listed line
//! outage with set-points held fixed, the power flow converges and the
//! solved state respects active/reactive/voltage/flow limits and the
//! minimum damping ratio. Every internal failure mode (non-convergence,
//! degenerate reduction) becomes an infeasibility reason, never a panic:
//! the dataset labeler depends on that.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{build_ybus, AdmittanceMatrix, Contingency, GridCase};
use crate::pf::{branch_flows, solve_pf_on, OperatingPoint};
use crate::smallsignal::{
    build_system_matrix, eigen_result, DEFAULT_GAMMA_MIN, DEFAULT_ZERO_MODE_TOL,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    ActivePower,
    ReactivePower,
    Voltage,
    Flow,
    SmallSignal,
    NonConvergence,
    ModelError,
}

impl std::fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ViolationKind::ActivePower => "active-power bound",
            ViolationKind::ReactivePower => "reactive-power bound",
            ViolationKind::Voltage => "voltage bound",
            ViolationKind::Flow => "flow limit",
            ViolationKind::SmallSignal => "small-signal",
            ViolationKind::NonConvergence => "power flow non-convergence",
            ViolationKind::ModelError => "stability model error",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Violation depth in the quantity's own units (pu, or damping gap).
    pub magnitude: f64,
    pub detail: String,
    /// Outaged line of the contingency the violation occurred under.
    pub outage: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContingencyRecord {
    pub outage: Option<usize>,
    pub pf_converged: bool,
    pub violations: Vec<Violation>,
    pub min_damping: Option<f64>,
    pub damping_ok: bool,
}

impl ContingencyRecord {
    pub fn passed(&self) -> bool {
        self.pf_converged && self.violations.is_empty()
    }
}

/// Full diagnostics for one operating point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeasibilityVerdict {
    pub feasible: bool,
    pub per_contingency: Vec<ContingencyRecord>,
    pub worst_violation: Option<Violation>,
}

/// Reusable checker with per-contingency admittance matrices prebuilt.
pub struct SecurityOracle<'a> {
    case: &'a GridCase,
    ybuses: Vec<AdmittanceMatrix>,
    pub gamma_min: f64,
    pub zero_mode_tol: f64,
}

impl<'a> SecurityOracle<'a> {
    pub fn new(case: &'a GridCase) -> Result<Self> {
        let mut ybuses = Vec::new();
        for c in case.contingency_set() {
            let outage = match c {
                Contingency::Intact => None,
                Contingency::LineOutage(k) => Some(k),
            };
            ybuses.push(build_ybus(case, outage)?);
        }
        Ok(SecurityOracle {
            case,
            ybuses,
            gamma_min: DEFAULT_GAMMA_MIN,
            zero_mode_tol: DEFAULT_ZERO_MODE_TOL,
        })
    }

    /// Static set-point bound checks; violations are attributed to the
    /// intact system (they hold identically under every contingency).
    fn setpoint_violations(&self, u: &OperatingPoint) -> Vec<Violation> {
        let mut out = Vec::new();
        let slack = self.case.slack_gen();
        for (g, gen) in self.case.generators.iter().enumerate() {
            if g != slack {
                let p = u.p_g[g];
                if p < gen.p_min - 1e-9 || p > gen.p_max + 1e-9 {
                    out.push(Violation {
                        kind: ViolationKind::ActivePower,
                        magnitude: (p - gen.p_max).max(gen.p_min - p),
                        detail: format!("generator at bus {}: p_g={p}", gen.bus),
                        outage: None,
                    });
                }
            }
            let (lo, hi) = self.case.gen_v_bounds(g);
            let v = u.v_g[g];
            if v < lo - 1e-9 || v > hi + 1e-9 {
                out.push(Violation {
                    kind: ViolationKind::Voltage,
                    magnitude: (v - hi).max(lo - v),
                    detail: format!("generator at bus {}: v_g={v}", gen.bus),
                    outage: None,
                });
            }
        }
        out
    }

    fn check_on(&self, u: &OperatingPoint, ybus: &AdmittanceMatrix) -> ContingencyRecord {
        let outage = ybus.outage;
        let mut rec = ContingencyRecord {
            outage,
            pf_converged: false,
            violations: Vec::new(),
            min_damping: None,
            damping_ok: false,
        };
        let state = match solve_pf_on(self.case, u, ybus) {
            Ok(st) => st,
            Err(e) => {
                rec.violations.push(Violation {
                    kind: ViolationKind::ModelError,
                    magnitude: f64::INFINITY,
                    detail: e.to_string(),
                    outage,
                });
                return rec;
            }
        };
        if !state.converged {
            rec.violations.push(Violation {
                kind: ViolationKind::NonConvergence,
                magnitude: state.residual,
                detail: format!(
                    "residual {:.3e} after {} iterations",
                    state.residual, state.iterations
                ),
                outage,
            });
            return rec;
        }
        rec.pf_converged = true;

        // generator injection limits, slack included (its output is solved)
        for gen in &self.case.generators {
            let i = self.case.bus_index(gen.bus).expect("validated");
            let p_gen = state.p[i] + self.case.buses[i].p_d;
            if p_gen < gen.p_min - 1e-7 || p_gen > gen.p_max + 1e-7 {
                rec.violations.push(Violation {
                    kind: ViolationKind::ActivePower,
                    magnitude: (p_gen - gen.p_max).max(gen.p_min - p_gen),
                    detail: format!("generator at bus {}: p={p_gen:.4}", gen.bus),
                    outage,
                });
            }
            let q_gen = state.q[i] + self.case.buses[i].q_d;
            if q_gen < gen.q_min - 1e-7 || q_gen > gen.q_max + 1e-7 {
                rec.violations.push(Violation {
                    kind: ViolationKind::ReactivePower,
                    magnitude: (q_gen - gen.q_max).max(gen.q_min - q_gen),
                    detail: format!("generator at bus {}: q={q_gen:.4}", gen.bus),
                    outage,
                });
            }
        }
        for (i, bus) in self.case.buses.iter().enumerate() {
            let v = state.v[i];
            if v < bus.v_min - 1e-7 || v > bus.v_max + 1e-7 {
                rec.violations.push(Violation {
                    kind: ViolationKind::Voltage,
                    magnitude: (v - bus.v_max).max(bus.v_min - v),
                    detail: format!("bus {}: v={v:.4}", bus.id),
                    outage,
                });
            }
        }
        // flow limit uses the larger of the two line ends
        let flows = branch_flows(self.case, &state);
        for (k, line) in self.case.lines.iter().enumerate() {
            if line.s_max <= 0.0 || outage == Some(k) {
                continue;
            }
            let s = flows[k].0.max(flows[k].1);
            if s > line.s_max + 1e-7 {
                rec.violations.push(Violation {
                    kind: ViolationKind::Flow,
                    magnitude: s - line.s_max,
                    detail: format!(
                        "line {k} ({}-{}): |s|={s:.4} > {:.4}",
                        line.from, line.to, line.s_max
                    ),
                    outage,
                });
            }
        }
        // small-signal criterion
        match build_system_matrix(self.case, &state)
            .and_then(|sys| eigen_result(&sys, self.zero_mode_tol))
        {
            Ok(eig) => {
                rec.min_damping = Some(eig.min_damping);
                rec.damping_ok = eig.min_damping >= self.gamma_min;
                if !rec.damping_ok {
                    rec.violations.push(Violation {
                        kind: ViolationKind::SmallSignal,
                        magnitude: self.gamma_min - eig.min_damping,
                        detail: format!(
                            "min damping {:.4} < {:.4}",
                            eig.min_damping, self.gamma_min
                        ),
                        outage,
                    });
                }
            }
            Err(e) => {
                rec.violations.push(Violation {
                    kind: ViolationKind::ModelError,
                    magnitude: f64::INFINITY,
                    detail: e.to_string(),
                    outage,
                });
            }
        }
        rec
    }

    /// Full verdict with per-contingency diagnostics.
    pub fn check_point(&self, u: &OperatingPoint) -> FeasibilityVerdict {
        let mut per = Vec::with_capacity(self.ybuses.len());
        let pre = self.setpoint_violations(u);
        for (idx, ybus) in self.ybuses.iter().enumerate() {
            let mut rec = self.check_on(u, ybus);
            if idx == 0 {
                // static set-point violations surface on the intact record
                rec.violations.splice(0..0, pre.iter().cloned());
            }
            per.push(rec);
        }
        let feasible = per.iter().all(|r| r.passed());
        let worst = per
            .iter()
            .flat_map(|r| r.violations.iter())
            .max_by(|a, b| a.magnitude.partial_cmp(&b.magnitude).unwrap())
            .cloned();
        FeasibilityVerdict {
            feasible,
            per_contingency: per,
            worst_violation: worst,
        }
    }

    /// One contingency slice of [`SecurityOracle::check_point`].
    pub fn check_contingency(
        &self,
        u: &OperatingPoint,
        c: Contingency,
    ) -> Result<ContingencyRecord> {
        let outage = match c {
            Contingency::Intact => None,
            Contingency::LineOutage(k) => Some(k),
        };
        let ybus = self
            .ybuses
            .iter()
            .find(|y| y.outage == outage)
            .ok_or_else(|| Error::UnknownContingency(c.to_string()))?;
        let mut rec = self.check_on(u, ybus);
        if outage.is_none() {
            rec.violations.splice(0..0, self.setpoint_violations(u));
        }
        Ok(rec)
    }

    /// Label-only fast path: short-circuits on the first failed check.
    pub fn is_feasible(&self, u: &OperatingPoint) -> bool {
        if !self.setpoint_violations(u).is_empty() {
            return false;
        }
        self.ybuses.iter().all(|ybus| self.check_on(u, ybus).passed())
    }
}

/// One-shot convenience wrapper over [`SecurityOracle`].
pub fn check_point(case: &GridCase, u: &OperatingPoint) -> Result<FeasibilityVerdict> {
    Ok(SecurityOracle::new(case)?.check_point(u))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases;

    fn generous_two_machine(d: f64) -> GridCase {
        cases::two_machine(0.3, 0.3, (5.0, 5.0), (d, d), 0.25)
    }

    #[test]
    fn active_power_bound_reported_at_intact() {
        let case = cases::ieee14();
        let mut u = OperatingPoint::nominal(&case);
        u.p_g[1] = case.generators[1].p_max + 0.5;
        let oracle = SecurityOracle::new(&case).unwrap();
        let v = oracle.check_point(&u);
        assert!(!v.feasible);
        let first = &v.per_contingency[0].violations[0];
        assert_eq!(first.kind, ViolationKind::ActivePower);
        assert_eq!(first.outage, None);
        assert!(!oracle.is_feasible(&u));
    }

    #[test]
    fn strongly_damped_toy_is_feasible() {
        let case = generous_two_machine(30.0);
        let u = OperatingPoint {
            p_g: vec![0.0, 0.3],
            v_g: vec![1.0, 1.0],
        };
        let oracle = SecurityOracle::new(&case).unwrap();
        let v = oracle.check_point(&u);
        assert!(
            v.feasible,
            "expected feasible, worst violation: {:?}",
            v.worst_violation
        );
        // verdict consistency: no violations anywhere
        for rec in &v.per_contingency {
            assert!(rec.violations.is_empty());
        }
    }

    #[test]
    fn undamped_toy_fails_small_signal() {
        let case = generous_two_machine(0.0);
        let u = OperatingPoint {
            p_g: vec![0.0, 0.3],
            v_g: vec![1.0, 1.0],
        };
        let oracle = SecurityOracle::new(&case).unwrap();
        let v = oracle.check_point(&u);
        assert!(!v.feasible);
        let rec = &v.per_contingency[0];
        assert!(rec.min_damping.unwrap().abs() < 1e-6);
        assert!(rec
            .violations
            .iter()
            .any(|viol| viol.kind == ViolationKind::SmallSignal));
    }

    #[test]
    fn unknown_contingency_is_an_error() {
        let case = cases::ieee14();
        let oracle = SecurityOracle::new(&case).unwrap();
        let excluded = (0..case.n_lines())
            .find(|k| !case.contingencies.contains(k))
            .unwrap();
        let err = oracle
            .check_contingency(
                &OperatingPoint::nominal(&case),
                Contingency::LineOutage(excluded),
            )
            .unwrap_err();
        assert!(matches!(err, Error::UnknownContingency(_)));
    }

    #[test]
    fn deterministic_verdicts() {
        let case = cases::ieee14();
        let u = OperatingPoint::nominal(&case);
        let oracle = SecurityOracle::new(&case).unwrap();
        let a = oracle.check_point(&u);
        let b = oracle.check_point(&u);
        assert_eq!(a.feasible, b.feasible);
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn tightening_limits_never_gains_feasibility() {
        let base = generous_two_machine(30.0);
        let mut tight = base.clone();
        for g in &mut tight.generators {
            g.q_min *= 0.01;
            g.q_max *= 0.01;
        }
        let oracle_loose = SecurityOracle::new(&base).unwrap();
        let oracle_tight = SecurityOracle::new(&tight).unwrap();
        for p in [0.0, 0.2, 0.5, 1.0, 2.0] {
            let u = OperatingPoint {
                p_g: vec![0.0, p],
                v_g: vec![1.0, 1.02],
            };
            let loose = oracle_loose.is_feasible(&u);
            let tight_ok = oracle_tight.is_feasible(&u);
            assert!(
                !tight_ok || loose,
                "tightened limits made p={p} feasible while loose says infeasible"
            );
        }
    }

    #[test]
    fn fast_path_agrees_with_full_verdict() {
        let case = cases::ieee14();
        let oracle = SecurityOracle::new(&case).unwrap();
        let cs = case.control_space();
        for frac in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let controls: Vec<f64> = cs
                .dims
                .iter()
                .map(|d| d.lo + frac * (d.hi - d.lo))
                .collect();
            let u = OperatingPoint::from_controls(&case, &controls).unwrap();
            assert_eq!(oracle.is_feasible(&u), oracle.check_point(&u).feasible);
        }
    }
}

#[cfg(test)]
mod probe {
    use super::*;
    use crate::cases;
    use crate::pf::{solve_pf, total_losses};

    #[test]
    #[ignore]
    fn ieee14_nominal_diagnostics() {
        let case = cases::ieee14();
        let u = OperatingPoint::nominal(&case);
        let st = solve_pf(&case, &u, None).unwrap();
        println!("converged={} iters={} losses={:.5}", st.converged, st.iterations, total_losses(&case, &st));
        for (i, b) in case.buses.iter().enumerate() {
            println!("bus {:2} v={:.4} th={:7.4} p={:8.4} q={:8.4}", b.id, st.v[i], st.theta[i], st.p[i], st.q[i]);
        }
        let flows = crate::pf::branch_flows(&case, &st);
        for (k, l) in case.lines.iter().enumerate() {
            println!("line {:2} {}-{} |s|={:.4}/{:.4} smax={:.3}", k, l.from, l.to, flows[k].0, flows[k].1, l.s_max);
        }
        let oracle = SecurityOracle::new(&case).unwrap();
        let v = oracle.check_point(&u);
        println!("FEASIBLE={}", v.feasible);
        for rec in &v.per_contingency {
            println!("cont {:?}: conv={} viol={} damping={:?}", rec.outage, rec.pf_converged, rec.violations.len(), rec.min_damping);
            for viol in &rec.violations {
                println!("   {} mag={:.4} {}", viol.kind, viol.magnitude, viol.detail);
            }
        }
    }
}
