//! Small-signal stability: classical-model linearization and damping ratios.
//!
//! Each generator is a classical machine (constant EMF behind transient
//! reactance, swing states delta and omega). Loads become constant
//! admittances, the network is Kron-reduced to the machine internal nodes,
//! and the linearized dynamics are assembled as
//!
//! ```text
//!   A = [ 0          omega_s * I ]
//!       [ -M^-1 K    -M^-1 D     ]      M = diag(2 H_i)
//! ```
//!
//! with K the synchronizing-power Jacobian dPe/ddelta at the operating
//! point. The model order is a pluggable choice behind `StabilityModel`;
//! the pipeline only consumes eigenvalues and the minimum damping ratio.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{build_ybus, GridCase};
use crate::linalg::{solve_complex, Mat};
use crate::pf::{OperatingPoint, PowerFlowState};

/// Minimum acceptable damping ratio.
pub const DEFAULT_GAMMA_MIN: f64 = 0.03;
/// Eigenvalues inside this ball are treated as the rigid-body zero mode.
pub const DEFAULT_ZERO_MODE_TOL: f64 = 1e-6;

/// Linearized system matrix at one operating point.
#[derive(Debug, Clone)]
pub struct SystemMatrix {
    pub a: Mat,
    /// Generator index per machine row.
    pub machine_order: Vec<usize>,
    /// The point the linearization was taken at.
    pub at_point: OperatingPoint,
}

/// Eigenvalues with the damping summary used by the security criterion.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EigenResult {
    pub eigenvalues: Vec<Complex64>,
    pub min_damping: f64,
}

/// Anything that can judge small-signal acceptability of a solved state.
/// The classical model ships in-tree; higher-order machine models can slot
/// in behind this trait.
pub trait StabilityModel {
    fn min_damping(&self, case: &GridCase, state: &PowerFlowState) -> Result<f64>;
}

/// The in-tree classical swing-equation model.
#[derive(Debug, Clone, Default)]
pub struct ClassicalModel;

impl StabilityModel for ClassicalModel {
    fn min_damping(&self, case: &GridCase, state: &PowerFlowState) -> Result<f64> {
        let sys = build_system_matrix(case, state)?;
        let eig = eigen_result(&sys, DEFAULT_ZERO_MODE_TOL)?;
        Ok(eig.min_damping)
    }
}

/// Damping ratio of one eigenvalue: -Re / |lambda|.
pub fn damping_ratio(lambda: Complex64) -> f64 {
    -lambda.re / lambda.norm()
}

/// Minimum damping over eigenvalues outside the zero-mode tolerance ball.
pub fn min_damping_ratio(eigenvalues: &[Complex64], zero_mode_tol: f64) -> Result<f64> {
    let mut min: Option<f64> = None;
    for &l in eigenvalues {
        if l.norm() <= zero_mode_tol {
            continue;
        }
        let d = damping_ratio(l);
        min = Some(match min {
            Some(m) if m <= d => m,
            _ => d,
        });
    }
    min.ok_or_else(|| {
        Error::Dimension("all eigenvalues fall inside the zero-mode tolerance".into())
    })
}

/// Eigenvalues and damping summary of a system matrix.
pub fn eigen_result(sys: &SystemMatrix, zero_mode_tol: f64) -> Result<EigenResult> {
    let eigenvalues = crate::eig::eigenvalues(&sys.a)?;
    let min_damping = min_damping_ratio(&eigenvalues, zero_mode_tol)?;
    Ok(EigenResult {
        eigenvalues,
        min_damping,
    })
}

/// Assemble the classical-model system matrix at a converged state.
pub fn build_system_matrix(case: &GridCase, state: &PowerFlowState) -> Result<SystemMatrix> {
    if !state.converged {
        return Err(Error::PfNoConvergence(state.iterations));
    }
    let n = case.n_buses();
    let n_g = case.n_gens();
    let zero = Complex64::new(0.0, 0.0);

    // machine internal EMFs from the solved state
    let mut emf = vec![zero; n_g];
    for (g, gen) in case.generators.iter().enumerate() {
        let i = case.bus_index(gen.bus).expect("validated");
        let v = Complex64::from_polar(state.v[i], state.theta[i]);
        let bus = &case.buses[i];
        // generator output = net injection + local load
        let s_gen = Complex64::new(state.p[i] + bus.p_d, state.q[i] + bus.q_d);
        let current = (s_gen / v).conj();
        emf[g] = v + Complex64::new(0.0, gen.xd_transient) * current;
    }

    // augmented admittance: buses plus machine internal nodes
    let ybus = build_ybus(case, state.outage)?;
    let mut y_bb = ybus.y.clone();
    for (i, bus) in case.buses.iter().enumerate() {
        if state.v[i] <= 0.0 {
            return Err(Error::Singular(format!("zero voltage at bus {}", bus.id)));
        }
        // constant-impedance load conversion at the solved voltage
        let y_load = Complex64::new(bus.p_d, -bus.q_d) / (state.v[i] * state.v[i]);
        y_bb[i][i] += y_load;
    }
    let mut y_mb = vec![vec![zero; n]; n_g];
    let mut y_mm = vec![vec![zero; n_g]; n_g];
    for (g, gen) in case.generators.iter().enumerate() {
        let i = case.bus_index(gen.bus).expect("validated");
        let y_machine = Complex64::new(0.0, gen.xd_transient).inv();
        y_bb[i][i] += y_machine;
        y_mb[g][i] = -y_machine;
        y_mm[g][g] += y_machine;
    }

    // Kron reduction: Y_red = Y_mm - Y_mb Y_bb^-1 Y_bm
    let mut rhs: Vec<Vec<Complex64>> = (0..n_g)
        .map(|g| (0..n).map(|i| y_mb[g][i]).collect())
        .collect();
    solve_complex(&y_bb, &mut rhs).map_err(|_| {
        Error::Singular("network reduction to machine nodes is degenerate".into())
    })?;
    let mut y_red = y_mm;
    for a in 0..n_g {
        for b in 0..n_g {
            let mut acc = zero;
            for i in 0..n {
                acc += y_mb[a][i] * rhs[b][i];
            }
            y_red[a][b] -= acc;
        }
    }

    // synchronizing-power Jacobian dPe/ddelta
    let e_mag: Vec<f64> = emf.iter().map(|e| e.norm()).collect();
    let delta: Vec<f64> = emf.iter().map(|e| e.arg()).collect();
    let mut k = Mat::zeros(n_g, n_g);
    for i in 0..n_g {
        let mut diag = 0.0;
        for j in 0..n_g {
            if i == j {
                continue;
            }
            let d = delta[i] - delta[j];
            let (g_ij, b_ij) = (y_red[i][j].re, y_red[i][j].im);
            let off = e_mag[i] * e_mag[j] * (g_ij * d.sin() - b_ij * d.cos());
            k[(i, j)] = off;
            diag -= off;
        }
        k[(i, i)] = diag;
    }

    let omega_s = case.omega_s();
    let mut a = Mat::zeros(2 * n_g, 2 * n_g);
    for g in 0..n_g {
        a[(g, n_g + g)] = omega_s;
        let m = 2.0 * case.generators[g].inertia_h;
        for j in 0..n_g {
            a[(n_g + g, j)] = -k[(g, j)] / m;
        }
        a[(n_g + g, n_g + g)] = -case.generators[g].damping_d / m;
    }
    Ok(SystemMatrix {
        a,
        machine_order: (0..n_g).collect(),
        at_point: point_from_state(case, state),
    })
}

fn point_from_state(case: &GridCase, state: &PowerFlowState) -> OperatingPoint {
    let mut p_g = Vec::with_capacity(case.n_gens());
    let mut v_g = Vec::with_capacity(case.n_gens());
    for gen in &case.generators {
        let i = case.bus_index(gen.bus).expect("validated");
        p_g.push(state.p[i] + case.buses[i].p_d);
        v_g.push(state.v[i]);
    }
    OperatingPoint { p_g, v_g }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases;
    use crate::pf::solve_pf;

    fn smib_analytic_pair(
        x_total: f64,
        x_line: f64,
        transfer: f64,
        h: f64,
        d: f64,
        omega_s: f64,
    ) -> (Complex64, Complex64) {
        // lossless line at unity set-points: theta from p = sin(theta)/x
        let theta = (transfer * x_line).asin();
        let q_end = (1.0 - theta.cos()) / x_line;
        let v1 = Complex64::new(1.0, 0.0);
        let v2 = Complex64::from_polar(1.0, theta);
        let i2 = (Complex64::new(transfer, q_end) / v2).conj();
        let i1 = (Complex64::new(-transfer, q_end) / v1).conj();
        let xd = (x_total - x_line) / 2.0;
        let e2 = v2 + Complex64::new(0.0, xd) * i2;
        let e1 = v1 + Complex64::new(0.0, xd) * i1;
        let d12 = e2.arg() - e1.arg();
        let k = e1.norm() * e2.norm() * d12.cos() / x_total;
        let m = 2.0 * h;
        // lambda^2 + (d/m) lambda + omega_s k / m = 0
        let half = d / (2.0 * m);
        let disc = half * half - omega_s * k / m;
        if disc >= 0.0 {
            (
                Complex64::new(-half + disc.sqrt(), 0.0),
                Complex64::new(-half - disc.sqrt(), 0.0),
            )
        } else {
            let w = (-disc).sqrt();
            (Complex64::new(-half, w), Complex64::new(-half, -w))
        }
    }

    #[test]
    fn smib_matches_textbook_two_by_two() {
        let (x_line, transfer, h, d, xd) = (0.4, 0.5, 5.0, 2.0, 0.25);
        let case = cases::two_machine(x_line, transfer, (1e9, h), (0.0, d), xd);
        let u = OperatingPoint {
            p_g: vec![0.0, transfer],
            v_g: vec![1.0, 1.0],
        };
        let st = solve_pf(&case, &u, None).unwrap();
        assert!(st.converged);
        let sys = build_system_matrix(&case, &st).unwrap();
        assert_eq!(sys.a.rows, 4);
        let eigs = crate::eig::eigenvalues(&sys.a).unwrap();
        let (l1, l2) =
            smib_analytic_pair(x_line + 2.0 * xd, x_line, transfer, h, d, case.omega_s());
        // the only significant modes are the analytic machine pair
        let mut big: Vec<Complex64> = eigs.into_iter().filter(|l| l.norm() > 1e-3).collect();
        assert_eq!(big.len(), 2, "expected one oscillatory pair, got {big:?}");
        big.sort_by(|p, q| p.im.partial_cmp(&q.im).unwrap());
        let mut want = [l2, l1];
        want.sort_by(|p, q| p.im.partial_cmp(&q.im).unwrap());
        for (got, want) in big.iter().zip(want.iter()) {
            assert!(
                (got - want).norm() < 1e-4 * want.norm(),
                "{got} vs analytic {want}"
            );
        }
    }

    #[test]
    fn identical_machines_commute_with_swap() {
        let case = cases::two_machine(0.3, 0.0, (5.0, 5.0), (2.0, 2.0), 0.25);
        let u = OperatingPoint {
            p_g: vec![0.0, 0.0],
            v_g: vec![1.0, 1.0],
        };
        let st = solve_pf(&case, &u, None).unwrap();
        let sys = build_system_matrix(&case, &st).unwrap();
        // permutation swapping the two machines in both state blocks
        let perm = [1usize, 0, 3, 2];
        for i in 0..4 {
            for j in 0..4 {
                let ap = sys.a[(i, perm[j])];
                let pa = sys.a[(perm[i], j)];
                assert!(
                    (ap - pa).abs() < 1e-12,
                    "A does not commute with the machine swap at ({i},{j})"
                );
            }
        }
    }

    #[test]
    fn ieee14_matrix_is_ten_by_ten() {
        let case = cases::ieee14();
        let st = solve_pf(&case, &OperatingPoint::nominal(&case), None).unwrap();
        assert!(st.converged);
        let sys = build_system_matrix(&case, &st).unwrap();
        assert_eq!(sys.a.rows, 10);
        assert_eq!(sys.a.cols, 10);
        let eig = eigen_result(&sys, DEFAULT_ZERO_MODE_TOL).unwrap();
        assert_eq!(eig.eigenvalues.len(), 10);
        assert!(eig.min_damping.is_finite());
    }

    #[test]
    fn damping_ratio_analytic_values() {
        let r = min_damping_ratio(
            &[Complex64::new(-1.0, 1.0), Complex64::new(-1.0, -1.0)],
            1e-6,
        )
        .unwrap();
        assert!((r - 1.0 / 2.0f64.sqrt()).abs() < 1e-12);

        let r = min_damping_ratio(&[Complex64::new(0.0, 2.0), Complex64::new(0.0, -2.0)], 1e-6)
            .unwrap();
        assert!(r.abs() < 1e-12);

        let r = min_damping_ratio(
            &[
                Complex64::new(0.1, 1.0),
                Complex64::new(0.1, -1.0),
                Complex64::new(-3.0, 0.0),
            ],
            1e-6,
        )
        .unwrap();
        assert!((r - (-0.1 / (1.0f64 + 0.01).sqrt())).abs() < 1e-10);
        assert!(r < 0.0, "unstable mode must give a negative ratio");
    }

    #[test]
    fn all_excluded_is_an_error() {
        assert!(min_damping_ratio(&[Complex64::new(0.0, 0.0)], 1e-6).is_err());
    }

    #[test]
    fn more_damping_never_hurts_on_smib() {
        let (x_line, transfer, h, xd) = (0.4, 0.5, 5.0, 0.25);
        let u = OperatingPoint {
            p_g: vec![0.0, transfer],
            v_g: vec![1.0, 1.0],
        };
        let mut last = f64::NEG_INFINITY;
        for d in [0.0, 1.0, 3.0, 6.0, 12.0] {
            let case = cases::two_machine(x_line, transfer, (1e9, h), (0.0, d), xd);
            let st = solve_pf(&case, &u, None).unwrap();
            let sys = build_system_matrix(&case, &st).unwrap();
            let eig = eigen_result(&sys, 1e-4).unwrap();
            assert!(
                eig.min_damping >= last - 1e-9,
                "min damping decreased from {last} to {} at D={d}",
                eig.min_damping
            );
            last = eig.min_damping;
        }
    }
}
