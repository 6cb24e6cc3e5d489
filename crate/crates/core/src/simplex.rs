//! Bounded-variable revised simplex.
//!
//! Rows are converted to equalities with ranged slacks, so the basis always
//! has full rank and a slack basis is a valid start. Feasibility is reached
//! with a composite phase 1 that minimizes the total bound violation of the
//! basic variables; the same machinery repairs a warm-started basis after
//! branch-and-bound tightens bounds. The basis inverse is kept as a dense
//! LU factorization plus a product-form eta file, refactorized periodically.
//!
//! Pricing is Dantzig with a Bland fallback once pivots stall, which keeps
//! termination guaranteed under degeneracy.

use crate::error::{Error, Result};
use crate::linalg::{Lu, Mat};
use crate::milp::{LpSolution, MilpModel, Sense, SolveStatus};

const FEAS_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-8;
const REFACTOR_EVERY: usize = 60;
/// Consecutive degenerate pivots before Bland's rule engages.
const DEGENERACY_THRESHOLD: usize = 40;

/// Basis snapshot for warm starts across related solves.
#[derive(Debug, Clone)]
pub struct Basis {
    /// Basic variable per row.
    pub basic: Vec<usize>,
    /// Nonbasic rest position per variable (true = upper bound).
    pub at_upper: Vec<bool>,
}

/// Solve ignoring integrality, with bounds taken from the model.
pub fn solve_lp(model: &MilpModel) -> Result<LpSolution> {
    model.validate()?;
    let lo = model.lower_bounds();
    let hi = model.upper_bounds();
    solve_bounded(model, &lo, &hi, None).map(|(sol, _)| sol)
}

/// Solve with overridden variable bounds and an optional warm basis.
pub fn solve_bounded(
    model: &MilpModel,
    lo_struct: &[f64],
    hi_struct: &[f64],
    warm: Option<&Basis>,
) -> Result<(LpSolution, Basis)> {
    let mut w = Worker::new(model, lo_struct, hi_struct)?;
    w.install_start(warm)?;
    let status = w.run()?;
    let values = w.structural_values();
    let objective = match status {
        SolveStatus::Optimal => model.objective_value(&values),
        SolveStatus::Unbounded => f64::NEG_INFINITY,
        _ => f64::NAN,
    };
    Ok((
        LpSolution {
            status,
            values,
            objective,
            iterations: w.iterations,
        },
        w.snapshot(),
    ))
}

struct Worker {
    m: usize,
    n_struct: usize,
    total: usize,
    /// Sparse columns, slacks included.
    cols: Vec<Vec<(usize, f64)>>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    cost: Vec<f64>,
    rhs: Vec<f64>,

    basic: Vec<usize>,
    row_of: Vec<Option<u32>>,
    at_upper: Vec<bool>,
    x_basic: Vec<f64>,

    lu: Option<Lu>,
    etas: Vec<(usize, Vec<f64>)>,
    pivots_since_refactor: usize,
    iterations: usize,
    degenerate_streak: usize,
    /// Variables whose fresh reduced cost disproved the pricing estimate;
    /// cleared after every accepted step.
    vetoed: Vec<usize>,
}

impl Worker {
    fn new(model: &MilpModel, lo_struct: &[f64], hi_struct: &[f64]) -> Result<Self> {
        let m = model.constraints.len();
        let n_struct = model.vars.len();
        if lo_struct.len() != n_struct || hi_struct.len() != n_struct {
            return Err(Error::Dimension("bounds length mismatch".into()));
        }
        let total = n_struct + m;
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); total];
        let mut rhs = vec![0.0; m];
        let mut lo = vec![0.0; total];
        let mut hi = vec![0.0; total];
        let mut cost = vec![0.0; total];
        for (j, v) in model.vars.iter().enumerate() {
            let _ = v;
            lo[j] = lo_struct[j];
            hi[j] = hi_struct[j];
            if lo[j] > hi[j] + FEAS_TOL {
                // empty box: report as infeasible through a poisoned slack
                return Err(Error::InvalidModel(format!(
                    "variable {} has empty bound interval",
                    model.vars[j].name
                )));
            }
            if lo[j].is_infinite() && hi[j].is_infinite() {
                return Err(Error::InvalidModel(format!(
                    "variable {} is free; the solver needs one finite bound",
                    model.vars[j].name
                )));
            }
        }
        for (i, c) in model.constraints.iter().enumerate() {
            rhs[i] = c.rhs;
            for &(j, coef) in &c.terms {
                if coef != 0.0 {
                    cols[j].push((i, coef));
                }
            }
            let s = n_struct + i;
            cols[s].push((i, 1.0));
            let (slo, shi) = match c.sense {
                Sense::Le => (0.0, f64::INFINITY),
                Sense::Ge => (f64::NEG_INFINITY, 0.0),
                Sense::Eq => (0.0, 0.0),
            };
            lo[s] = slo;
            hi[s] = shi;
        }
        for &(j, c) in &model.objective {
            cost[j] += c;
        }
        Ok(Worker {
            m,
            n_struct,
            total,
            cols,
            lo,
            hi,
            cost,
            rhs,
            basic: Vec::new(),
            row_of: vec![None; total],
            at_upper: vec![false; total],
            x_basic: vec![0.0; m],
            lu: None,
            etas: Vec::new(),
            pivots_since_refactor: 0,
            iterations: 0,
            degenerate_streak: 0,
            vetoed: Vec::new(),
        })
    }

    /// Rest position of a nonbasic variable.
    fn nonbasic_value(&self, j: usize) -> f64 {
        if self.at_upper[j] {
            self.hi[j]
        } else {
            self.lo[j]
        }
    }

    fn install_start(&mut self, warm: Option<&Basis>) -> Result<()> {
        if let Some(b) = warm {
            if b.basic.len() == self.m && b.at_upper.len() == self.total {
                self.basic = b.basic.clone();
                self.at_upper = b.at_upper.clone();
                for j in 0..self.total {
                    self.row_of[j] = None;
                }
                for (r, &j) in self.basic.iter().enumerate() {
                    self.row_of[j] = Some(r as u32);
                }
                // snap nonbasics resting on an infinite side to the finite one
                for j in 0..self.total {
                    if self.row_of[j].is_none() && self.nonbasic_value(j).is_infinite() {
                        self.at_upper[j] = !self.at_upper[j];
                    }
                }
                // a stale basis can be numerically singular; fall back cold
                if self.refactor().is_ok() {
                    return Ok(());
                }
            }
        }
        self.install_slack_basis();
        self.refactor()
    }

    fn install_slack_basis(&mut self) {
        self.basic = (self.n_struct..self.total).collect();
        for j in 0..self.total {
            self.row_of[j] = None;
            // rest at the finite bound nearest zero
            self.at_upper[j] = match (self.lo[j].is_finite(), self.hi[j].is_finite()) {
                (true, true) => self.hi[j].abs() < self.lo[j].abs(),
                (true, false) => false,
                (false, true) => true,
                (false, false) => false,
            };
        }
        for (r, &j) in self.basic.iter().enumerate() {
            self.row_of[j] = Some(r as u32);
        }
    }

    fn snapshot(&self) -> Basis {
        Basis {
            basic: self.basic.clone(),
            at_upper: self.at_upper.clone(),
        }
    }

    fn refactor(&mut self) -> Result<()> {
        let mut b = Mat::zeros(self.m, self.m);
        for (r, &j) in self.basic.iter().enumerate() {
            let _ = r;
            for &(i, coef) in &self.cols[j] {
                b[(i, r)] = coef;
            }
        }
        self.lu = Some(
            Lu::factor(&b).map_err(|e| Error::LpNumeric(format!("basis factorization: {e}")))?,
        );
        self.etas.clear();
        self.pivots_since_refactor = 0;
        self.recompute_basics();
        Ok(())
    }

    fn recompute_basics(&mut self) {
        let mut b = self.rhs.clone();
        for j in 0..self.total {
            if self.row_of[j].is_none() {
                let xj = self.nonbasic_value(j);
                if xj != 0.0 {
                    for &(i, coef) in &self.cols[j] {
                        b[i] -= coef * xj;
                    }
                }
            }
        }
        self.ftran(&mut b);
        self.x_basic = b;
    }

    fn ftran(&self, v: &mut [f64]) {
        self.lu.as_ref().expect("factorized").solve(v);
        for (r, eta) in &self.etas {
            let t = v[*r] / eta[*r];
            for i in 0..self.m {
                if i != *r {
                    v[i] -= eta[i] * t;
                }
            }
            v[*r] = t;
        }
    }

    fn btran(&self, v: &mut [f64]) {
        for (r, eta) in self.etas.iter().rev() {
            let mut t = v[*r];
            for i in 0..self.m {
                if i != *r {
                    t -= eta[i] * v[i];
                }
            }
            v[*r] = t / eta[*r];
        }
        self.lu.as_ref().expect("factorized").solve_transpose(v);
    }

    fn infeasibility(&self, r: usize) -> f64 {
        let j = self.basic[r];
        let x = self.x_basic[r];
        if x < self.lo[j] - FEAS_TOL {
            self.lo[j] - x
        } else if x > self.hi[j] + FEAS_TOL {
            x - self.hi[j]
        } else {
            0.0
        }
    }

    fn total_infeasibility(&self) -> f64 {
        (0..self.m).map(|r| self.infeasibility(r)).sum()
    }

    /// Phase-aware cost of the current iteration.
    fn working_costs(&self, phase_one: bool) -> Vec<f64> {
        if phase_one {
            let mut c = vec![0.0; self.m];
            for r in 0..self.m {
                let j = self.basic[r];
                if self.x_basic[r] < self.lo[j] - FEAS_TOL {
                    c[r] = -1.0;
                } else if self.x_basic[r] > self.hi[j] + FEAS_TOL {
                    c[r] = 1.0;
                }
            }
            c
        } else {
            self.basic.iter().map(|&j| self.cost[j]).collect()
        }
    }

    fn run(&mut self) -> Result<SolveStatus> {
        let max_iterations = 20_000 + 200 * (self.total);
        loop {
            if self.iterations > max_iterations {
                return Err(Error::LpNumeric(format!(
                    "iteration limit {max_iterations} reached"
                )));
            }
            let phase_one = self.total_infeasibility() > FEAS_TOL;
            let use_bland = self.degenerate_streak > DEGENERACY_THRESHOLD;

            // reduced costs via BTRAN
            let mut y = self.working_costs(phase_one);
            self.btran(&mut y);
            let mut entering: Option<(usize, f64, bool)> = None; // (var, score, increase)
            for j in 0..self.total {
                if self.row_of[j].is_some() {
                    continue;
                }
                if self.hi[j] - self.lo[j] <= 0.0 {
                    continue; // fixed variables cannot move
                }
                if self.vetoed.contains(&j) {
                    continue;
                }
                let c_j = if phase_one { 0.0 } else { self.cost[j] };
                let mut d = c_j;
                for &(i, coef) in &self.cols[j] {
                    d -= y[i] * coef;
                }
                // moving off the resting bound must improve the objective
                let (eligible, increase) = if self.at_upper[j] {
                    (d > COST_TOL, false)
                } else {
                    (d < -COST_TOL, true)
                };
                if !eligible {
                    continue;
                }
                if use_bland {
                    entering = Some((j, d.abs(), increase));
                    break;
                }
                if entering.map_or(true, |(_, best, _)| d.abs() > best) {
                    entering = Some((j, d.abs(), increase));
                }
            }

            let Some((q, _, increase)) = entering else {
                if !self.etas.is_empty() {
                    // conclude only from a fresh factorization
                    self.refactor()?;
                    self.vetoed.clear();
                    continue;
                }
                if phase_one {
                    return Ok(SolveStatus::Infeasible);
                }
                return Ok(SolveStatus::Optimal);
            };

            // entering direction through the basis
            let mut w = vec![0.0; self.m];
            for &(i, coef) in &self.cols[q] {
                w[i] = coef;
            }
            self.ftran(&mut w);
            let dir = if increase { 1.0 } else { -1.0 };

            // the eta file drifts; re-derive the reduced cost from the
            // freshly computed direction and refactorize on disagreement
            let c_q = if phase_one { 0.0 } else { self.cost[q] };
            let d_exact = c_q
                - self
                    .working_costs(phase_one)
                    .iter()
                    .zip(&w)
                    .map(|(c, wi)| c * wi)
                    .sum::<f64>();
            let still_improving = if increase {
                d_exact < -1e-12
            } else {
                d_exact > 1e-12
            };
            if !still_improving {
                if !self.etas.is_empty() {
                    self.refactor()?;
                } else {
                    self.vetoed.push(q);
                }
                continue;
            }

            // two-pass Harris ratio test: pass 1 finds the largest step that
            // keeps every blocking row within the feasibility tolerance of
            // its bound; pass 2 picks the most stable pivot within that step
            let own_range = self.hi[q] - self.lo[q];
            let blocking_bound = |r: usize, g: f64| -> Option<(f64, bool)> {
                let j = self.basic[r];
                let x = self.x_basic[r];
                if x < self.lo[j] - FEAS_TOL {
                    // violating below: blocks when raised to its lower bound
                    (g < 0.0).then(|| (self.lo[j], false))
                } else if x > self.hi[j] + FEAS_TOL {
                    // violating above: blocks when pushed down to its upper
                    (g > 0.0).then(|| (self.hi[j], true))
                } else if g > 0.0 {
                    self.lo[j].is_finite().then(|| (self.lo[j], false))
                } else {
                    self.hi[j].is_finite().then(|| (self.hi[j], true))
                }
            };
            let mut t_max = own_range;
            for r in 0..self.m {
                let g = dir * w[r];
                if g.abs() <= 1e-11 {
                    continue;
                }
                if let Some((bound, _)) = blocking_bound(r, g) {
                    let relaxed = (self.x_basic[r] - bound) / g + FEAS_TOL / g.abs();
                    if relaxed < t_max {
                        t_max = relaxed;
                    }
                }
            }
            t_max = t_max.max(0.0);
            let mut leave: Option<(usize, bool)> = None;
            let mut t_best = own_range.min(t_max + FEAS_TOL);
            let mut best_pivot_mag = 0.0;
            for r in 0..self.m {
                let g = dir * w[r];
                if g.abs() <= 1e-11 {
                    continue;
                }
                if let Some((bound, hits_upper)) = blocking_bound(r, g) {
                    let exact = ((self.x_basic[r] - bound) / g).max(0.0);
                    if exact <= t_max + 1e-15 {
                        let take = match leave {
                            None => true,
                            Some((r_prev, _)) => {
                                if use_bland {
                                    self.basic[r] < self.basic[r_prev]
                                } else {
                                    g.abs() > best_pivot_mag
                                }
                            }
                        };
                        if take {
                            leave = Some((r, hits_upper));
                            best_pivot_mag = g.abs();
                            t_best = exact;
                        }
                    }
                }
            }
            if leave.is_none() {
                t_best = own_range;
            }

            if t_best.is_infinite() {
                return if phase_one {
                    Err(Error::LpNumeric("phase-1 ray without blocking row".into()))
                } else {
                    Ok(SolveStatus::Unbounded)
                };
            }

            self.iterations += 1;
            self.vetoed.clear();
            if t_best <= FEAS_TOL {
                self.degenerate_streak += 1;
            } else {
                self.degenerate_streak = 0;
            }
            if std::env::var_os("SECOPF_LP_TRACE").is_some() && self.iterations == 24_002 {
                eprintln!(
                    "it {} p1={} inf={:.9e} q={q} dir={dir} d={d_exact:.3e} t={t_best:.3e} own_range={own_range:.3e} leave={:?} etas={}",
                    self.iterations,
                    phase_one,
                    self.total_infeasibility(),
                    leave.map(|(r, up)| (self.basic[r], up)),
                    self.etas.len(),
                );
                for r in 0..self.m {
                    let g = dir * w[r];
                    if g.abs() > 1e-11 {
                        let j = self.basic[r];
                        eprintln!(
                            "  row {r} var {j} x={:.6} lo={:.3} hi={:.3} g={g:.4e}",
                            self.x_basic[r], self.lo[j], self.hi[j]
                        );
                    }
                }
            }

            match leave {
                None => {
                    // entering variable flips to its other bound
                    for r in 0..self.m {
                        self.x_basic[r] -= dir * t_best * w[r];
                    }
                    self.at_upper[q] = !self.at_upper[q];
                }
                Some((r_leave, hits_upper)) => {
                    let entering_value = self.nonbasic_value(q) + dir * t_best;
                    for r in 0..self.m {
                        self.x_basic[r] -= dir * t_best * w[r];
                    }
                    let leaving = self.basic[r_leave];
                    self.row_of[leaving] = None;
                    self.at_upper[leaving] = hits_upper;
                    self.basic[r_leave] = q;
                    self.row_of[q] = Some(r_leave as u32);
                    self.x_basic[r_leave] = entering_value;

                    if w[r_leave].abs() < PIVOT_TOL {
                        return Err(Error::LpNumeric(format!(
                            "pivot magnitude {:.3e} below tolerance",
                            w[r_leave]
                        )));
                    }
                    // a small pivot relative to the eta column poisons every
                    // later ftran/btran; flush the eta file immediately
                    let growth = w
                        .iter()
                        .fold(0.0f64, |a, v| a.max(v.abs()))
                        / w[r_leave].abs();
                    let flush_now = growth > 1e5;
                    self.etas.push((r_leave, w));
                    self.pivots_since_refactor += 1;
                    if (flush_now || self.pivots_since_refactor >= REFACTOR_EVERY)
                        && self.refactor().is_err()
                    {
                        // numerically degraded basis: restart cold and let
                        // phase 1 walk back to feasibility
                        self.install_slack_basis();
                        self.refactor()?;
                    }
                }
            }
        }
    }

    fn structural_values(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.n_struct];
        for (j, v) in x.iter_mut().enumerate() {
            *v = match self.row_of[j] {
                Some(r) => self.x_basic[r as usize],
                None => self.nonbasic_value(j),
            };
        }
        x
    }
}
