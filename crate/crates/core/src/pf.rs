//! AC power flow: Newton-Raphson in polar form, branch flows, system
//! losses, and loss sensitivities with respect to the controls.
//!
//! The solver uses a flat start, the full Jacobian, and a dense LU solve
//! per iteration. Convergence is max mismatch <= 1e-8 pu within 30
//! iterations; non-convergence is reported through the `converged` flag
//! rather than an error, since the security oracle treats it as a verdict.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{build_ybus, AdmittanceMatrix, BusKind, ControlKind, GridCase};
use crate::linalg::{Lu, Mat};

pub const PF_TOLERANCE: f64 = 1e-8;
pub const PF_MAX_ITERATIONS: usize = 30;
/// Loose sanity box on set-point magnitudes, pu.
pub const POINT_SANITY_BOUND: f64 = 10.0;
/// Central-difference step for loss gradients, pu.
pub const GRADIENT_STEP: f64 = 1e-5;

/// The control vector: generator active set-points and voltage set-points.
/// The slack generator's active entry is a nominal value only; the slack
/// balances the system in every solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub p_g: Vec<f64>,
    pub v_g: Vec<f64>,
}

impl OperatingPoint {
    pub fn nominal(case: &GridCase) -> Self {
        OperatingPoint {
            p_g: case.generators.iter().map(|g| g.p_set).collect(),
            v_g: case.generators.iter().map(|g| g.v_set).collect(),
        }
    }

    /// Flatten to the dispatchable control vector of `case.control_space()`.
    pub fn to_controls(&self, case: &GridCase) -> Vec<f64> {
        let cs = case.control_space();
        cs.dims
            .iter()
            .map(|d| match d.kind {
                ControlKind::ActivePower(g) => self.p_g[g],
                ControlKind::VoltageSetpoint(g) => self.v_g[g],
            })
            .collect()
    }

    /// Build a full operating point from a dispatchable control vector,
    /// with the slack active entry taken from the case nominal.
    pub fn from_controls(case: &GridCase, controls: &[f64]) -> Result<Self> {
        let cs = case.control_space();
        if controls.len() != cs.len() {
            return Err(Error::Dimension(format!(
                "expected {} controls, got {}",
                cs.len(),
                controls.len()
            )));
        }
        let mut point = OperatingPoint::nominal(case);
        for (v, d) in controls.iter().zip(&cs.dims) {
            match d.kind {
                ControlKind::ActivePower(g) => point.p_g[g] = *v,
                ControlKind::VoltageSetpoint(g) => point.v_g[g] = *v,
            }
        }
        Ok(point)
    }

    fn validate(&self, case: &GridCase) -> Result<()> {
        if self.p_g.len() != case.n_gens() || self.v_g.len() != case.n_gens() {
            return Err(Error::Dimension(format!(
                "operating point sized for {} generators, case has {}",
                self.p_g.len(),
                case.n_gens()
            )));
        }
        for v in self.p_g.iter().chain(self.v_g.iter()) {
            if !v.is_finite() || v.abs() > POINT_SANITY_BOUND {
                return Err(Error::InvalidPoint(format!(
                    "set-point {v} outside the sanity box"
                )));
            }
        }
        for v in &self.v_g {
            if *v < 0.05 {
                return Err(Error::InvalidPoint(format!("voltage set-point {v} too low")));
            }
        }
        Ok(())
    }
}

/// Solved network state for one (possibly post-contingency) condition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PowerFlowState {
    /// Per-bus voltage magnitude, pu.
    pub v: Vec<f64>,
    /// Per-bus voltage angle, rad; slack at zero.
    pub theta: Vec<f64>,
    /// Per-bus net active injection, pu.
    pub p: Vec<f64>,
    /// Per-bus net reactive injection, pu.
    pub q: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Max power mismatch, pu.
    pub residual: f64,
    /// The line outage this state was solved under, if any.
    pub outage: Option<usize>,
}

/// First-order expansion of the system losses in the controls.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LossLinearization {
    pub p_losses_at_point: f64,
    /// Per generator; the slack entry is zero (not a control).
    pub d_losses_d_pg: Vec<f64>,
    pub d_losses_d_vg: Vec<f64>,
    pub expansion_point: OperatingPoint,
}

/// Solve the AC power flow with generator set-points held fixed.
pub fn solve_pf(case: &GridCase, u: &OperatingPoint, outage: Option<usize>) -> Result<PowerFlowState> {
    let ybus = build_ybus(case, outage)?;
    solve_pf_on(case, u, &ybus)
}

/// Solve against a prebuilt admittance matrix (the oracle caches one per
/// contingency).
pub fn solve_pf_on(
    case: &GridCase,
    u: &OperatingPoint,
    ybus: &AdmittanceMatrix,
) -> Result<PowerFlowState> {
    u.validate(case)?;
    let n = case.n_buses();

    // scheduled injections and bus classification
    let mut p_sched = vec![0.0; n];
    let mut q_sched = vec![0.0; n];
    let mut v = vec![1.0; n];
    let mut theta = vec![0.0; n];
    let mut kind = vec![BusKind::Pq; n];
    for (i, b) in case.buses.iter().enumerate() {
        kind[i] = b.kind;
        p_sched[i] -= b.p_d;
        q_sched[i] -= b.q_d;
    }
    for (g, gen) in case.generators.iter().enumerate() {
        let i = case.bus_index(gen.bus).expect("validated");
        p_sched[i] += u.p_g[g];
        v[i] = u.v_g[g];
    }

    let non_slack: Vec<usize> = (0..n).filter(|&i| kind[i] != BusKind::Slack).collect();
    let pq: Vec<usize> = (0..n).filter(|&i| kind[i] == BusKind::Pq).collect();
    let m = non_slack.len() + pq.len();

    let calc = |v: &[f64], theta: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let mut p = vec![0.0; n];
        let mut q = vec![0.0; n];
        for i in 0..n {
            let mut s = Complex64::new(0.0, 0.0);
            for j in 0..n {
                let y = ybus.y[i][j];
                if y != Complex64::new(0.0, 0.0) {
                    let d = theta[i] - theta[j];
                    let (g, b) = (y.re, y.im);
                    s += Complex64::new(
                        v[i] * v[j] * (g * d.cos() + b * d.sin()),
                        v[i] * v[j] * (g * d.sin() - b * d.cos()),
                    );
                }
            }
            p[i] = s.re;
            q[i] = s.im;
        }
        (p, q)
    };

    let mut iterations = 0;
    let mut residual;
    let mut converged = false;
    let (mut p_calc, mut q_calc) = calc(&v, &theta);

    loop {
        // mismatch
        let mut f = vec![0.0; m];
        for (r, &i) in non_slack.iter().enumerate() {
            f[r] = p_sched[i] - p_calc[i];
        }
        for (r, &i) in pq.iter().enumerate() {
            f[non_slack.len() + r] = q_sched[i] - q_calc[i];
        }
        residual = f.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        if residual <= PF_TOLERANCE {
            converged = true;
            break;
        }
        if iterations >= PF_MAX_ITERATIONS {
            break;
        }

        // polar Jacobian
        let mut jac = Mat::zeros(m, m);
        for (r, &i) in non_slack.iter().enumerate() {
            for (c, &j) in non_slack.iter().enumerate() {
                jac[(r, c)] = if i == j {
                    -q_calc[i] - ybus.y[i][i].im * v[i] * v[i]
                } else {
                    let y = ybus.y[i][j];
                    let d = theta[i] - theta[j];
                    v[i] * v[j] * (y.re * d.sin() - y.im * d.cos())
                };
            }
            for (c, &j) in pq.iter().enumerate() {
                jac[(r, non_slack.len() + c)] = if i == j {
                    p_calc[i] / v[i] + ybus.y[i][i].re * v[i]
                } else {
                    let y = ybus.y[i][j];
                    let d = theta[i] - theta[j];
                    v[i] * (y.re * d.cos() + y.im * d.sin())
                };
            }
        }
        for (r, &i) in pq.iter().enumerate() {
            for (c, &j) in non_slack.iter().enumerate() {
                jac[(non_slack.len() + r, c)] = if i == j {
                    p_calc[i] - ybus.y[i][i].re * v[i] * v[i]
                } else {
                    let y = ybus.y[i][j];
                    let d = theta[i] - theta[j];
                    -v[i] * v[j] * (y.re * d.cos() + y.im * d.sin())
                };
            }
            for (c, &j) in pq.iter().enumerate() {
                jac[(non_slack.len() + r, non_slack.len() + c)] = if i == j {
                    q_calc[i] / v[i] - ybus.y[i][i].im * v[i]
                } else {
                    let y = ybus.y[i][j];
                    let d = theta[i] - theta[j];
                    v[i] * (y.re * d.sin() - y.im * d.cos())
                };
            }
        }

        let lu = Lu::factor(&jac)
            .map_err(|_| Error::Singular("power-flow Jacobian".into()))?;
        lu.solve(&mut f);

        for (r, &i) in non_slack.iter().enumerate() {
            theta[i] += f[r];
        }
        for (r, &i) in pq.iter().enumerate() {
            v[i] += f[non_slack.len() + r];
            if v[i] < 1e-3 {
                v[i] = 1e-3; // keep the iterate physical
            }
        }
        iterations += 1;
        let updated = calc(&v, &theta);
        p_calc = updated.0;
        q_calc = updated.1;
    }

    Ok(PowerFlowState {
        v,
        theta,
        p: p_calc,
        q: q_calc,
        converged,
        iterations,
        residual,
        outage: ybus.outage,
    })
}

/// Apparent flow magnitudes at the (from, to) ends of every line, pu.
/// The outaged line, if any, reports zero at both ends.
pub fn branch_flows(case: &GridCase, state: &PowerFlowState) -> Vec<(f64, f64)> {
    let mut flows = Vec::with_capacity(case.n_lines());
    for (k, l) in case.lines.iter().enumerate() {
        if state.outage == Some(k) {
            flows.push((0.0, 0.0));
            continue;
        }
        let f = case.bus_index(l.from).unwrap();
        let t = case.bus_index(l.to).unwrap();
        let vf = Complex64::from_polar(state.v[f], state.theta[f]);
        let vt = Complex64::from_polar(state.v[t], state.theta[t]);
        let (ys, ysh) = crate::grid::line_admittance(l);
        let i_from = ys * (vf - vt) + ysh * vf;
        let i_to = ys * (vt - vf) + ysh * vt;
        flows.push(((vf * i_from.conj()).norm(), (vt * i_to.conj()).norm()));
    }
    flows
}

/// Total active losses as the sum of net bus injections, pu.
pub fn total_losses(case: &GridCase, state: &PowerFlowState) -> f64 {
    let _ = case;
    state.p.iter().sum()
}

/// Total active losses as the sum of per-line series I^2 R, pu.
/// Agrees with [`total_losses`] on a converged state.
pub fn line_losses(case: &GridCase, state: &PowerFlowState) -> f64 {
    let mut total = 0.0;
    for (k, l) in case.lines.iter().enumerate() {
        if state.outage == Some(k) {
            continue;
        }
        let f = case.bus_index(l.from).unwrap();
        let t = case.bus_index(l.to).unwrap();
        let vf = Complex64::from_polar(state.v[f], state.theta[f]);
        let vt = Complex64::from_polar(state.v[t], state.theta[t]);
        let (ys, _) = crate::grid::line_admittance(l);
        let i_series = ys * (vf - vt);
        total += i_series.norm_sqr() * l.r;
    }
    total
}

/// Losses and their central-difference gradients in the controls at `u`,
/// on the intact system.
pub fn loss_gradients(case: &GridCase, u: &OperatingPoint) -> Result<LossLinearization> {
    let ybus = build_ybus(case, None)?;
    let base = solve_pf_on(case, u, &ybus)?;
    if !base.converged {
        return Err(Error::PfNoConvergence(base.iterations));
    }
    let losses_at = |point: &OperatingPoint| -> Result<f64> {
        let st = solve_pf_on(case, point, &ybus)?;
        if !st.converged {
            return Err(Error::PfNoConvergence(st.iterations));
        }
        Ok(total_losses(case, &st))
    };

    let slack = case.slack_gen();
    let h = GRADIENT_STEP;
    let n_g = case.n_gens();
    let mut d_pg = vec![0.0; n_g];
    let mut d_vg = vec![0.0; n_g];
    for g in 0..n_g {
        if g != slack {
            let mut up = u.clone();
            let mut dn = u.clone();
            up.p_g[g] += h;
            dn.p_g[g] -= h;
            d_pg[g] = (losses_at(&up)? - losses_at(&dn)?) / (2.0 * h);
        }
        let mut up = u.clone();
        let mut dn = u.clone();
        up.v_g[g] += h;
        dn.v_g[g] -= h;
        d_vg[g] = (losses_at(&up)? - losses_at(&dn)?) / (2.0 * h);
    }
    Ok(LossLinearization {
        p_losses_at_point: total_losses(case, &base),
        d_losses_d_pg: d_pg,
        d_losses_d_vg: d_vg,
        expansion_point: u.clone(),
    })
}
