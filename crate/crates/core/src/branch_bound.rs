//! Branch-and-bound over binary variables.
//!
//! Nodes carry their own bound vectors plus the parent's basis, so child
//! LPs warm-start and typically repair in a handful of pivots. Before each
//! LP the node's bounds are tightened by constraint propagation, which on
//! ReLU encodings cascades binary fixings through the layer equalities.
//! Node selection plunges depth-first until the first incumbent exists and
//! switches to best-bound afterwards. Every incumbent is re-checked against
//! the original rows independently of the simplex before it is accepted.

use std::time::Instant;

use log::debug;

use crate::error::{Error, Result};
use crate::milp::{MilpModel, MilpSolution, Sense, SolveStatus};
use crate::simplex::{solve_bounded, Basis};

const INT_TOL: f64 = 1e-6;
const PROPAGATION_ROUNDS: usize = 25;

#[derive(Debug, Clone)]
pub struct MilpLimits {
    pub max_nodes: usize,
    pub time_limit_s: f64,
}

impl Default for MilpLimits {
    fn default() -> Self {
        MilpLimits {
            max_nodes: 200_000,
            time_limit_s: 600.0,
        }
    }
}

struct Node {
    id: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
    basis: Option<Basis>,
    bound: f64,
}

pub fn solve_milp(model: &MilpModel) -> Result<MilpSolution> {
    solve_milp_with(model, &MilpLimits::default())
}

pub fn solve_milp_with(model: &MilpModel, limits: &MilpLimits) -> Result<MilpSolution> {
    model.validate()?;
    let start = Instant::now();
    let binaries: Vec<usize> = (0..model.n_vars())
        .filter(|&j| model.vars[j].is_binary)
        .collect();

    let mut root_lo = model.lower_bounds();
    let mut root_hi = model.upper_bounds();
    if !propagate(model, &mut root_lo, &mut root_hi) {
        return Ok(infeasible_result(start, 0));
    }

    let mut open: Vec<Node> = vec![Node {
        id: 0,
        lo: root_lo,
        hi: root_hi,
        basis: None,
        bound: f64::NEG_INFINITY,
    }];
    let mut next_id = 1;
    let mut nodes_explored = 0usize;
    let mut incumbent: Option<(f64, Vec<f64>)> = None;
    let mut pruned_frontier_bound = f64::INFINITY;

    while let Some(pick) = select_node(&open, incumbent.is_some()) {
        let node = open.swap_remove(pick);
        let gap_tol = incumbent
            .as_ref()
            .map(|(obj, _)| 1e-6 * (1.0 + obj.abs()));
        if let (Some((inc_obj, _)), Some(tol)) = (&incumbent, gap_tol) {
            if node.bound >= inc_obj - tol {
                pruned_frontier_bound = pruned_frontier_bound.min(node.bound);
                continue;
            }
        }
        if nodes_explored >= limits.max_nodes
            || start.elapsed().as_secs_f64() > limits.time_limit_s
        {
            // restore the popped node before reporting the frontier
            open.push(node);
            return Ok(limit_result(model, start, nodes_explored, incumbent, &open));
        }
        nodes_explored += 1;

        let (sol, basis) = match solve_bounded(model, &node.lo, &node.hi, node.basis.as_ref()) {
            Ok(r) => r,
            Err(Error::InvalidModel(_)) => continue, // empty box after branching
            Err(e) => return Err(e),
        };
        match sol.status {
            SolveStatus::Infeasible => continue,
            SolveStatus::Unbounded => {
                return Ok(MilpSolution {
                    status: SolveStatus::Unbounded,
                    values: Vec::new(),
                    objective: f64::NEG_INFINITY,
                    best_bound: f64::NEG_INFINITY,
                    gap: f64::INFINITY,
                    nodes: nodes_explored,
                    wall_time_s: start.elapsed().as_secs_f64(),
                });
            }
            SolveStatus::HitLimit => unreachable!("simplex reports errors, not limits"),
            SolveStatus::Optimal => {}
        }
        let bound = sol.objective;
        if let Some((inc_obj, _)) = &incumbent {
            if bound >= inc_obj - gap_tol.unwrap_or(0.0) {
                pruned_frontier_bound = pruned_frontier_bound.min(bound);
                continue;
            }
        }

        // most fractional binary
        let mut branch: Option<(usize, f64)> = None;
        for &j in &binaries {
            let frac = (sol.values[j] - sol.values[j].round()).abs();
            if frac > INT_TOL && branch.map_or(true, |(_, best)| frac > best) {
                branch = Some((j, frac));
            }
        }

        match branch {
            None => {
                let issues = model.solution_violations(&sol.values, 1e-6);
                if !issues.is_empty() {
                    return Err(Error::LpNumeric(format!(
                        "incumbent failed the independent re-check: {}",
                        issues.join("; ")
                    )));
                }
                if incumbent
                    .as_ref()
                    .map_or(true, |(inc_obj, _)| bound < *inc_obj)
                {
                    debug!("incumbent {bound:.9} at node {nodes_explored}");
                    incumbent = Some((bound, sol.values));
                }
            }
            Some((j, _)) => {
                let preferred = sol.values[j].round().clamp(0.0, 1.0);
                // push the preferred child last so depth-first picks it first
                for value in [1.0 - preferred, preferred] {
                    let mut lo = node.lo.clone();
                    let mut hi = node.hi.clone();
                    lo[j] = value;
                    hi[j] = value;
                    if !propagate(model, &mut lo, &mut hi) {
                        continue;
                    }
                    open.push(Node {
                        id: next_id,
                        lo,
                        hi,
                        basis: Some(basis.clone()),
                        bound,
                    });
                    next_id += 1;
                }
            }
        }
    }

    let wall = start.elapsed().as_secs_f64();
    match incumbent {
        Some((obj, values)) => {
            let best_bound = pruned_frontier_bound.min(obj);
            Ok(MilpSolution {
                status: SolveStatus::Optimal,
                values,
                objective: obj,
                best_bound,
                gap: (obj - best_bound).max(0.0),
                nodes: nodes_explored,
                wall_time_s: wall,
            })
        }
        None => Ok(infeasible_result(start, nodes_explored)),
    }
}

fn infeasible_result(start: Instant, nodes: usize) -> MilpSolution {
    MilpSolution {
        status: SolveStatus::Infeasible,
        values: Vec::new(),
        objective: f64::NAN,
        best_bound: f64::INFINITY,
        gap: f64::NAN,
        nodes,
        wall_time_s: start.elapsed().as_secs_f64(),
    }
}

fn limit_result(
    model: &MilpModel,
    start: Instant,
    nodes: usize,
    incumbent: Option<(f64, Vec<f64>)>,
    open: &[Node],
) -> MilpSolution {
    let _ = model;
    let frontier = open
        .iter()
        .map(|n| n.bound)
        .fold(f64::INFINITY, f64::min);
    match incumbent {
        Some((obj, values)) => MilpSolution {
            status: SolveStatus::HitLimit,
            values,
            objective: obj,
            best_bound: frontier.min(obj),
            gap: (obj - frontier.min(obj)).max(0.0),
            nodes,
            wall_time_s: start.elapsed().as_secs_f64(),
        },
        None => MilpSolution {
            status: SolveStatus::HitLimit,
            values: Vec::new(),
            objective: f64::NAN,
            best_bound: frontier,
            gap: f64::NAN,
            nodes,
            wall_time_s: start.elapsed().as_secs_f64(),
        },
    }
}

/// Depth-first before an incumbent exists (newest node), best-bound after.
fn select_node(open: &[Node], have_incumbent: bool) -> Option<usize> {
    if open.is_empty() {
        return None;
    }
    if !have_incumbent {
        let mut best = 0;
        for (i, n) in open.iter().enumerate() {
            if n.id > open[best].id {
                best = i;
            }
        }
        return Some(best);
    }
    let mut best = 0;
    for (i, n) in open.iter().enumerate() {
        let b = &open[best];
        if n.bound < b.bound || (n.bound == b.bound && n.id < b.id) {
            best = i;
        }
    }
    Some(best)
}

/// Iterative bound tightening over linear rows plus binary rounding.
/// Returns false when the bounds are proven contradictory.
fn propagate(model: &MilpModel, lo: &mut [f64], hi: &mut [f64], ) -> bool {
    for _round in 0..PROPAGATION_ROUNDS {
        let mut changed = false;
        for c in &model.constraints {
            // activity bounds with explicit infinity counting
            let mut min_sum = 0.0;
            let mut max_sum = 0.0;
            let mut min_inf = 0usize;
            let mut max_inf = 0usize;
            for &(j, a) in &c.terms {
                let (cl, ch) = if a > 0.0 {
                    (a * lo[j], a * hi[j])
                } else {
                    (a * hi[j], a * lo[j])
                };
                if cl.is_finite() {
                    min_sum += cl;
                } else {
                    min_inf += 1;
                }
                if ch.is_finite() {
                    max_sum += ch;
                } else {
                    max_inf += 1;
                }
            }
            let tol = 1e-9 * (1.0 + c.rhs.abs());
            if matches!(c.sense, Sense::Le | Sense::Eq) && min_inf == 0 && min_sum > c.rhs + tol {
                return false;
            }
            if matches!(c.sense, Sense::Ge | Sense::Eq) && max_inf == 0 && max_sum < c.rhs - tol {
                return false;
            }
            for &(j, a) in &c.terms {
                if a == 0.0 {
                    continue;
                }
                let (cl, ch) = if a > 0.0 {
                    (a * lo[j], a * hi[j])
                } else {
                    (a * hi[j], a * lo[j])
                };
                // upper limit on a_j x_j from rows bounding the sum above
                if matches!(c.sense, Sense::Le | Sense::Eq) {
                    let others_min = if min_inf == 0 {
                        Some(min_sum - cl)
                    } else if min_inf == 1 && !cl.is_finite() {
                        Some(min_sum)
                    } else {
                        None
                    };
                    if let Some(om) = others_min {
                        let cap = c.rhs - om;
                        if a > 0.0 {
                            let nh = cap / a;
                            if nh < hi[j] - 1e-9 {
                                hi[j] = nh;
                                changed = true;
                            }
                        } else {
                            let nl = cap / a;
                            if nl > lo[j] + 1e-9 {
                                lo[j] = nl;
                                changed = true;
                            }
                        }
                    }
                }
                // lower limit from rows bounding the sum below
                if matches!(c.sense, Sense::Ge | Sense::Eq) {
                    let others_max = if max_inf == 0 {
                        Some(max_sum - ch)
                    } else if max_inf == 1 && !ch.is_finite() {
                        Some(max_sum)
                    } else {
                        None
                    };
                    if let Some(om) = others_max {
                        let floor = c.rhs - om;
                        if a > 0.0 {
                            let nl = floor / a;
                            if nl > lo[j] + 1e-9 {
                                lo[j] = nl;
                                changed = true;
                            }
                        } else {
                            let nh = floor / a;
                            if nh < hi[j] - 1e-9 {
                                hi[j] = nh;
                                changed = true;
                            }
                        }
                    }
                }
            }
        }
        // binaries round to the integer lattice
        for (j, v) in model.vars.iter().enumerate() {
            if !v.is_binary {
                continue;
            }
            if lo[j] > 1e-6 && lo[j] < 1.0 {
                lo[j] = 1.0;
                changed = true;
            }
            if hi[j] < 1.0 - 1e-6 && hi[j] > 0.0 {
                hi[j] = 0.0;
                changed = true;
            }
        }
        for j in 0..model.n_vars() {
            if lo[j] > hi[j] + 1e-7 {
                return false;
            }
            if lo[j] > hi[j] {
                // collapse tiny numerical inversions
                let mid = 0.5 * (lo[j] + hi[j]);
                lo[j] = mid;
                hi[j] = mid;
            }
        }
        if !changed {
            break;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::Sense;
    use crate::simplex::solve_lp;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Knapsack-flavored toy with a fixed optimum.
    fn knapsack() -> MilpModel {
        let mut m = MilpModel::new();
        let items = [(3.0, 4.0), (4.0, 5.0), (2.0, 3.0)];
        let mut obj = Vec::new();
        let mut row = Vec::new();
        for (i, (w, v)) in items.iter().enumerate() {
            let b = m.add_binary(format!("b{i}"));
            obj.push((b, -v)); // maximize value as minimization
            row.push((b, *w));
        }
        m.add_constraint("cap", row, Sense::Le, 6.0);
        m.set_objective(obj, 0.0);
        m
    }

    #[test]
    fn knapsack_optimum() {
        let sol = solve_milp(&knapsack()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        // best is items 1 and 2 (weights 4+2=6, value 8)
        assert!((sol.objective + 8.0).abs() < 1e-9, "{}", sol.objective);
        assert!(sol.gap <= 1e-6 * 9.0);
    }

    #[test]
    fn fixed_binaries_reduce_to_lp() {
        let mut m = knapsack();
        for j in 0..3 {
            m.add_constraint(format!("fix{j}"), vec![(j, 1.0)], Sense::Eq, 1.0 - (j % 2) as f64);
        }
        let milp = solve_milp(&m).unwrap();
        let lp = solve_lp(&m).unwrap();
        assert_eq!(milp.status, SolveStatus::Optimal);
        assert!((milp.objective - lp.objective).abs() < 1e-9);
    }

    #[test]
    fn contradictory_binary_fixings_infeasible() {
        let mut m = MilpModel::new();
        let b = m.add_binary("b");
        m.add_constraint("zero", vec![(b, 1.0)], Sense::Eq, 0.0);
        m.add_constraint("one", vec![(b, 1.0)], Sense::Eq, 1.0);
        m.set_objective(vec![(b, 1.0)], 0.0);
        let sol = solve_milp(&m).unwrap();
        assert_eq!(sol.status, SolveStatus::Infeasible);
    }

    /// Enumeration oracle: brute-force every binary fixing through the LP.
    fn enumerate_optimum(model: &MilpModel) -> Option<f64> {
        let binaries: Vec<usize> = (0..model.n_vars())
            .filter(|&j| model.vars[j].is_binary)
            .collect();
        let mut best: Option<f64> = None;
        for mask in 0..(1u32 << binaries.len()) {
            let mut fixed = model.clone();
            for (pos, &j) in binaries.iter().enumerate() {
                let v = ((mask >> pos) & 1) as f64;
                fixed.fix_var(j, v);
            }
            if let Ok(sol) = solve_lp(&fixed) {
                if sol.status == SolveStatus::Optimal
                    && best.map_or(true, |b| sol.objective < b)
                {
                    best = Some(sol.objective);
                }
            }
        }
        best
    }

    fn random_model(rng: &mut ChaCha8Rng, n_bin: usize, n_cont: usize, n_rows: usize) -> MilpModel {
        let mut m = MilpModel::new();
        let mut all = Vec::new();
        for j in 0..n_cont {
            all.push(m.add_var(format!("x{j}"), -1.0, 2.0));
        }
        for j in 0..n_bin {
            all.push(m.add_binary(format!("b{j}")));
        }
        for i in 0..n_rows {
            let mut terms: Vec<(usize, f64)> = Vec::new();
            for &j in &all {
                if rng.gen_bool(0.7) {
                    terms.push((j, rng.gen_range(-2.0..2.0)));
                }
            }
            if terms.is_empty() {
                continue;
            }
            // keep the all-variables-at-zero-ish point plausible
            let rhs = rng.gen_range(0.5..3.0);
            m.add_constraint(format!("r{i}"), terms, Sense::Le, rhs);
        }
        let obj: Vec<(usize, f64)> = all
            .iter()
            .map(|&j| (j, rng.gen_range(-1.0..1.0)))
            .collect();
        m.set_objective(obj, 0.0);
        m
    }

    #[test]
    fn random_milps_match_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for trial in 0..8 {
            let m = random_model(&mut rng, 6, 3, 5);
            let milp = solve_milp(&m).unwrap();
            let brute = enumerate_optimum(&m);
            match brute {
                Some(best) => {
                    assert_eq!(milp.status, SolveStatus::Optimal, "trial {trial}");
                    assert!(
                        (milp.objective - best).abs() <= 1e-6 * (1.0 + best.abs()),
                        "trial {trial}: bb {} vs enumeration {best}",
                        milp.objective
                    );
                }
                None => assert_eq!(milp.status, SolveStatus::Infeasible, "trial {trial}"),
            }
        }
    }

    #[test]
    fn deterministic_node_counts() {
        let m = knapsack();
        let a = solve_milp(&m).unwrap();
        let b = solve_milp(&m).unwrap();
        assert_eq!(a.nodes, b.nodes);
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn propagation_fixes_implied_binaries() {
        // 2 b0 + 2 b1 <= 1 forces both to zero
        let mut m = MilpModel::new();
        let b0 = m.add_binary("b0");
        let b1 = m.add_binary("b1");
        m.add_constraint("cap", vec![(b0, 2.0), (b1, 2.0)], Sense::Le, 1.0);
        let mut lo = m.lower_bounds();
        let mut hi = m.upper_bounds();
        assert!(propagate(&m, &mut lo, &mut hi));
        assert_eq!(hi[b0], 0.0);
        assert_eq!(hi[b1], 0.0);
    }

    #[test]
    fn best_bound_never_exceeds_incumbent() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let m = random_model(&mut rng, 5, 2, 4);
            let sol = solve_milp(&m).unwrap();
            if sol.status == SolveStatus::Optimal {
                assert!(sol.best_bound <= sol.objective + 1e-9);
            }
        }
    }
}
