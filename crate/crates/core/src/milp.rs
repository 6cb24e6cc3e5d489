//! Generic LP/MILP model container shared by the encoder and the solvers.
//!
//! Constraints are stored row-sparse; variables carry bounds and a binary
//! flag. The container can render itself as CPLEX-LP-format text for
//! cross-checks against external solvers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
    pub is_binary: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Constraint {
    pub name: String,
    /// Row-sparse (variable index, coefficient) pairs.
    pub terms: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// A mixed-integer linear program, minimization by convention.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MilpModel {
    pub vars: Vec<Variable>,
    pub constraints: Vec<Constraint>,
    pub objective: Vec<(usize, f64)>,
    pub objective_offset: f64,
}

impl MilpModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, name: impl Into<String>, lo: f64, hi: f64) -> usize {
        self.vars.push(Variable {
            name: name.into(),
            lo,
            hi,
            is_binary: false,
        });
        self.vars.len() - 1
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> usize {
        self.vars.push(Variable {
            name: name.into(),
            lo: 0.0,
            hi: 1.0,
            is_binary: true,
        });
        self.vars.len() - 1
    }

    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        terms: Vec<(usize, f64)>,
        sense: Sense,
        rhs: f64,
    ) {
        self.constraints.push(Constraint {
            name: name.into(),
            terms,
            sense,
            rhs,
        });
    }

    /// Pin a variable to one value through its bounds.
    pub fn fix_var(&mut self, var: usize, value: f64) {
        self.vars[var].lo = value;
        self.vars[var].hi = value;
    }

    pub fn set_objective(&mut self, terms: Vec<(usize, f64)>, offset: f64) {
        self.objective = terms;
        self.objective_offset = offset;
    }

    pub fn n_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn n_binaries(&self) -> usize {
        self.vars.iter().filter(|v| v.is_binary).count()
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v.name == name)
    }

    pub fn lower_bounds(&self) -> Vec<f64> {
        self.vars.iter().map(|v| v.lo).collect()
    }

    pub fn upper_bounds(&self) -> Vec<f64> {
        self.vars.iter().map(|v| v.hi).collect()
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective_offset
            + self
                .objective
                .iter()
                .map(|&(j, c)| c * x[j])
                .sum::<f64>()
    }

    pub fn validate(&self) -> Result<()> {
        for v in &self.vars {
            if v.lo > v.hi {
                return Err(Error::InvalidModel(format!(
                    "variable {}: lower bound {} above upper {}",
                    v.name, v.lo, v.hi
                )));
            }
            if v.is_binary && (v.lo < -1e-9 || v.hi > 1.0 + 1e-9) {
                return Err(Error::InvalidModel(format!(
                    "binary {} has bounds outside [0,1]",
                    v.name
                )));
            }
        }
        for c in &self.constraints {
            for &(j, coef) in &c.terms {
                if j >= self.vars.len() {
                    return Err(Error::InvalidModel(format!(
                        "constraint {} references undeclared variable {j}",
                        c.name
                    )));
                }
                if !coef.is_finite() {
                    return Err(Error::InvalidModel(format!(
                        "constraint {} has a non-finite coefficient",
                        c.name
                    )));
                }
            }
        }
        for &(j, _) in &self.objective {
            if j >= self.vars.len() {
                return Err(Error::InvalidModel(format!(
                    "objective references undeclared variable {j}"
                )));
            }
        }
        Ok(())
    }

    /// Constraint and bound violations of a candidate solution.
    pub fn solution_violations(&self, x: &[f64], tol: f64) -> Vec<String> {
        let mut out = Vec::new();
        if x.len() != self.vars.len() {
            out.push(format!(
                "solution length {} does not match {} variables",
                x.len(),
                self.vars.len()
            ));
            return out;
        }
        for (j, v) in self.vars.iter().enumerate() {
            if x[j] < v.lo - tol || x[j] > v.hi + tol {
                out.push(format!("{} = {} outside [{}, {}]", v.name, x[j], v.lo, v.hi));
            }
            if v.is_binary && (x[j] - x[j].round()).abs() > tol {
                out.push(format!("{} = {} is fractional", v.name, x[j]));
            }
        }
        for c in &self.constraints {
            let a: f64 = c.terms.iter().map(|&(j, coef)| coef * x[j]).sum();
            let bad = match c.sense {
                Sense::Le => a > c.rhs + tol,
                Sense::Ge => a < c.rhs - tol,
                Sense::Eq => (a - c.rhs).abs() > tol,
            };
            if bad {
                out.push(format!("{}: activity {} vs rhs {}", c.name, a, c.rhs));
            }
        }
        out
    }

    /// Render as CPLEX LP-format text (minimization).
    pub fn to_lp_format(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        s.push_str("Minimize\n obj:");
        if self.objective.is_empty() {
            s.push_str(" 0 ");
            s.push_str(&self.vars.first().map(|v| v.name.clone()).unwrap_or_default());
        }
        for &(j, c) in &self.objective {
            let _ = write!(s, " {} {}", signed(c), self.vars[j].name);
        }
        s.push_str("\nSubject To\n");
        for c in &self.constraints {
            let _ = write!(s, " {}:", c.name);
            for &(j, coef) in &c.terms {
                let _ = write!(s, " {} {}", signed(coef), self.vars[j].name);
            }
            let op = match c.sense {
                Sense::Le => "<=",
                Sense::Ge => ">=",
                Sense::Eq => "=",
            };
            let _ = writeln!(s, " {op} {}", c.rhs);
        }
        s.push_str("Bounds\n");
        for v in &self.vars {
            if v.lo.is_infinite() && v.hi.is_infinite() {
                let _ = writeln!(s, " {} free", v.name);
            } else if v.lo.is_infinite() {
                let _ = writeln!(s, " -inf <= {} <= {}", v.name, v.hi);
            } else {
                let _ = writeln!(s, " {} <= {} <= {}", v.lo, v.name, v.hi);
            }
        }
        let binaries: Vec<&str> = self
            .vars
            .iter()
            .filter(|v| v.is_binary)
            .map(|v| v.name.as_str())
            .collect();
        if !binaries.is_empty() {
            s.push_str("Binaries\n ");
            s.push_str(&binaries.join(" "));
            s.push('\n');
        }
        s.push_str("End\n");
        s
    }
}

fn signed(c: f64) -> String {
    if c >= 0.0 {
        format!("+ {c}")
    } else {
        format!("- {}", -c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    HitLimit,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: SolveStatus,
    pub values: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MilpSolution {
    pub status: SolveStatus,
    pub values: Vec<f64>,
    pub objective: f64,
    /// Proven lower bound on the optimum (minimization).
    pub best_bound: f64,
    pub gap: f64,
    pub nodes: usize,
    pub wall_time_s: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validate_catches_undeclared_vars() {
        let mut m = MilpModel::new();
        let x = m.add_var("x", 0.0, 1.0);
        m.add_constraint("c0", vec![(x + 5, 1.0)], Sense::Le, 1.0);
        assert!(matches!(m.validate(), Err(Error::InvalidModel(_))));
    }

    #[test]
    fn lp_format_has_all_sections() {
        let mut m = MilpModel::new();
        let x = m.add_var("x", 0.0, 2.0);
        let b = m.add_binary("b");
        m.add_constraint("cap", vec![(x, 1.0), (b, -1.0)], Sense::Le, 1.5);
        m.set_objective(vec![(x, 1.0)], 0.0);
        let text = m.to_lp_format();
        for section in ["Minimize", "Subject To", "Bounds", "Binaries", "End"] {
            assert!(text.contains(section), "missing {section} in:\n{text}");
        }
        assert!(text.contains("cap: + 1 x - 1 b <= 1.5"));
    }

    #[test]
    fn violation_scan_flags_broken_rows() {
        let mut m = MilpModel::new();
        let x = m.add_var("x", 0.0, 1.0);
        m.add_constraint("row", vec![(x, 2.0)], Sense::Eq, 1.0);
        assert!(m.solution_violations(&[0.5], 1e-9).is_empty());
        assert_eq!(m.solution_violations(&[0.9], 1e-9).len(), 1);
    }
}
