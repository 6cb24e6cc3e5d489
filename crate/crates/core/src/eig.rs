//! Dense nonsymmetric eigenvalue solver.
//!
//! Classic pipeline: similarity balancing, reduction to upper Hessenberg
//! form by stabilized elimination, then the double-shift QR iteration
//! (the EISPACK `hqr` scheme). Eigenvalues only; the downstream damping
//! check never needs eigenvectors.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::Mat;

/// All eigenvalues of a square real matrix.
pub fn eigenvalues(a: &Mat) -> Result<Vec<Complex64>> {
    if !a.is_square() {
        return Err(Error::Dimension(format!(
            "eigenvalues of non-square {}x{}",
            a.rows, a.cols
        )));
    }
    if a.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Dimension("matrix has non-finite entries".into()));
    }
    let n = a.rows;
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut work = a.clone();
    balance(&mut work);
    hessenberg(&mut work);
    hqr(&mut work)
}

/// Similarity balancing by powers of two (eigenvalues preserved exactly).
fn balance(a: &mut Mat) {
    const RADIX: f64 = 2.0;
    let n = a.rows;
    let sqrdx = RADIX * RADIX;
    let mut done = false;
    while !done {
        done = true;
        for i in 0..n {
            let mut r = 0.0;
            let mut c = 0.0;
            for j in 0..n {
                if j != i {
                    c += a[(j, i)].abs();
                    r += a[(i, j)].abs();
                }
            }
            if c != 0.0 && r != 0.0 {
                let mut g = r / RADIX;
                let mut f = 1.0;
                let s = c + r;
                let mut c2 = c;
                while c2 < g {
                    f *= RADIX;
                    c2 *= sqrdx;
                }
                g = r * RADIX;
                while c2 > g {
                    f /= RADIX;
                    c2 /= sqrdx;
                }
                if (c2 + r) / f < 0.95 * s {
                    done = false;
                    let g = 1.0 / f;
                    for j in 0..n {
                        a[(i, j)] *= g;
                    }
                    for j in 0..n {
                        a[(j, i)] *= f;
                    }
                }
            }
        }
    }
}

/// Reduce to upper Hessenberg form by Gaussian similarity with pivoting.
fn hessenberg(a: &mut Mat) {
    let n = a.rows;
    if n < 3 {
        return;
    }
    for m in 1..(n - 1) {
        let mut x = 0.0f64;
        let mut i_piv = m;
        for j in m..n {
            if a[(j, m - 1)].abs() > x.abs() {
                x = a[(j, m - 1)];
                i_piv = j;
            }
        }
        if i_piv != m {
            for j in (m - 1)..n {
                let t = a[(i_piv, j)];
                a[(i_piv, j)] = a[(m, j)];
                a[(m, j)] = t;
            }
            for j in 0..n {
                let t = a[(j, i_piv)];
                a[(j, i_piv)] = a[(j, m)];
                a[(j, m)] = t;
            }
        }
        if x != 0.0 {
            for i in (m + 1)..n {
                let mut y = a[(i, m - 1)];
                if y != 0.0 {
                    y /= x;
                    a[(i, m - 1)] = y;
                    for j in m..n {
                        let t = a[(m, j)];
                        a[(i, j)] -= y * t;
                    }
                    for j in 0..n {
                        let t = a[(j, i)];
                        a[(j, m)] += y * t;
                    }
                }
            }
        }
    }
    // entries below the subdiagonal held multipliers; QR reads them as zero
    for i in 2..n {
        for j in 0..(i - 1) {
            a[(i, j)] = 0.0;
        }
    }
}

fn sign(a: f64, b: f64) -> f64 {
    if b >= 0.0 {
        a.abs()
    } else {
        -a.abs()
    }
}

/// Double-shift QR iteration on an upper Hessenberg matrix.
fn hqr(a: &mut Mat) -> Result<Vec<Complex64>> {
    let n = a.rows;
    let eps = f64::EPSILON;
    let mut wr = vec![0.0; n];
    let mut wi = vec![0.0; n];

    let mut anorm = 0.0;
    for i in 0..n {
        for j in i.saturating_sub(1)..n {
            anorm += a[(i, j)].abs();
        }
    }
    if anorm == 0.0 {
        return Ok(vec![Complex64::new(0.0, 0.0); n]);
    }

    let mut nn = n as isize - 1;
    let mut t = 0.0;
    while nn >= 0 {
        let mut its = 0;
        loop {
            // find a negligible subdiagonal element
            let mut l = nn;
            while l >= 1 {
                let mut s = a[((l - 1) as usize, (l - 1) as usize)].abs()
                    + a[(l as usize, l as usize)].abs();
                if s == 0.0 {
                    s = anorm;
                }
                if a[(l as usize, (l - 1) as usize)].abs() <= eps * s {
                    a[(l as usize, (l - 1) as usize)] = 0.0;
                    break;
                }
                l -= 1;
            }
            let nnu = nn as usize;
            let mut x = a[(nnu, nnu)];
            if l == nn {
                // single real root
                wr[nnu] = x + t;
                wi[nnu] = 0.0;
                nn -= 1;
                break;
            }
            let mut y = a[(nnu - 1, nnu - 1)];
            let mut w = a[(nnu, nnu - 1)] * a[(nnu - 1, nnu)];
            if l == nn - 1 {
                // a 2x2 block yields a real or complex pair
                let p = 0.5 * (y - x);
                let q = p * p + w;
                let mut z = q.abs().sqrt();
                x += t;
                if q >= 0.0 {
                    z = p + sign(z, p);
                    wr[nnu - 1] = x + z;
                    wr[nnu] = wr[nnu - 1];
                    if z != 0.0 {
                        wr[nnu] = x - w / z;
                    }
                    wi[nnu - 1] = 0.0;
                    wi[nnu] = 0.0;
                } else {
                    wr[nnu - 1] = x + p;
                    wr[nnu] = x + p;
                    wi[nnu] = z;
                    wi[nnu - 1] = -z;
                }
                nn -= 2;
                break;
            }
            if its == 30 {
                return Err(Error::EigNoConvergence(nnu));
            }
            if its == 10 || its == 20 {
                // exceptional shift
                t += x;
                for i in 0..=nnu {
                    a[(i, i)] -= x;
                }
                let s = a[(nnu, nnu - 1)].abs() + a[(nnu - 1, nnu - 2)].abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            its += 1;

            // look for two consecutive small subdiagonals
            let mut m = nn - 2;
            let (mut p, mut q, mut r) = (0.0, 0.0, 0.0);
            while m >= l {
                let mu = m as usize;
                let z = a[(mu, mu)];
                let rr = x - z;
                let ss = y - z;
                p = (rr * ss - w) / a[(mu + 1, mu)] + a[(mu, mu + 1)];
                q = a[(mu + 1, mu + 1)] - z - rr - ss;
                r = a[(mu + 2, mu + 1)];
                let s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                let u = a[(mu, mu - 1)].abs() * (q.abs() + r.abs());
                let v = p.abs()
                    * (a[(mu - 1, mu - 1)].abs() + z.abs() + a[(mu + 1, mu + 1)].abs());
                if u <= eps * v {
                    break;
                }
                m -= 1;
            }
            let mu = m as usize;
            for i in (mu + 2)..=nnu {
                a[(i, i - 2)] = 0.0;
            }
            for i in (mu + 3)..=nnu {
                a[(i, i - 3)] = 0.0;
            }

            // double QR sweep over rows l..nn, columns m..nn
            for k in mu..nnu {
                if k != mu {
                    p = a[(k, k - 1)];
                    q = a[(k + 1, k - 1)];
                    r = 0.0;
                    if k != nnu - 1 {
                        r = a[(k + 2, k - 1)];
                    }
                    x = p.abs() + q.abs() + r.abs();
                    if x != 0.0 {
                        p /= x;
                        q /= x;
                        r /= x;
                    }
                }
                let s = sign((p * p + q * q + r * r).sqrt(), p);
                if s != 0.0 {
                    if k == mu {
                        if l != m {
                            a[(k, k - 1)] = -a[(k, k - 1)];
                        }
                    } else {
                        a[(k, k - 1)] = -s * x;
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    let z = r / s;
                    q /= p;
                    r /= p;
                    for j in k..=nnu {
                        let mut pj = a[(k, j)] + q * a[(k + 1, j)];
                        if k != nnu - 1 {
                            pj += r * a[(k + 2, j)];
                            a[(k + 2, j)] -= pj * z;
                        }
                        a[(k + 1, j)] -= pj * y;
                        a[(k, j)] -= pj * x;
                    }
                    let mmin = if nnu < k + 3 { nnu } else { k + 3 };
                    for i in (l as usize)..=mmin {
                        let mut pi = x * a[(i, k)] + y * a[(i, k + 1)];
                        if k != nnu - 1 {
                            pi += z * a[(i, k + 2)];
                            a[(i, k + 2)] -= pi * r;
                        }
                        a[(i, k + 1)] -= pi * q;
                        a[(i, k)] -= pi;
                    }
                }
            }
        }
    }
    Ok(wr
        .into_iter()
        .zip(wi)
        .map(|(re, im)| Complex64::new(re, im))
        .collect())
}

#[cfg(test)]
pub(crate) mod oracle {
    //! Independent eigenvalue oracle: characteristic polynomial via
    //! Faddeev-LeVerrier, roots via Durand-Kerner. No QR machinery shared
    //! with the implementation under test.

    use super::*;

    /// Coefficients of det(xI - A) = x^n + c[0] x^{n-1} + ... + c[n-1].
    pub fn char_poly(a: &Mat) -> Vec<f64> {
        let n = a.rows;
        let mut coeffs = Vec::with_capacity(n);
        let mut m = a.clone();
        let mut c = -m.trace();
        coeffs.push(c);
        for k in 2..=n {
            let mut shifted = m.clone();
            for i in 0..n {
                shifted[(i, i)] += c;
            }
            m = a.matmul(&shifted);
            c = -m.trace() / k as f64;
            coeffs.push(c);
        }
        coeffs
    }

    /// Durand-Kerner simultaneous root iteration for a monic polynomial.
    pub fn poly_roots(coeffs: &[f64]) -> Vec<Complex64> {
        let n = coeffs.len();
        if n == 0 {
            return Vec::new();
        }
        let eval = |z: Complex64| -> Complex64 {
            let mut acc = Complex64::new(1.0, 0.0);
            for &c in coeffs {
                acc = acc * z + Complex64::new(c, 0.0);
            }
            acc
        };
        let bound = 1.0 + coeffs.iter().fold(0.0f64, |a, c| a.max(c.abs()));
        let seed = Complex64::new(0.4, 0.9);
        let mut roots: Vec<Complex64> = (0..n).map(|k| seed.powu(k as u32 + 1) * bound).collect();
        for _ in 0..1000 {
            let mut max_step = 0.0f64;
            for i in 0..n {
                let mut denom = Complex64::new(1.0, 0.0);
                for j in 0..n {
                    if j != i {
                        denom *= roots[i] - roots[j];
                    }
                }
                let step = eval(roots[i]) / denom;
                roots[i] -= step;
                max_step = max_step.max(step.norm());
            }
            if max_step < 1e-14 * bound {
                break;
            }
        }
        roots
    }

    /// Greedy closest-pair matching distance between two spectra.
    pub fn spectrum_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
        assert_eq!(a.len(), b.len());
        let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
        for (i, x) in a.iter().enumerate() {
            for (j, y) in b.iter().enumerate() {
                pairs.push(((x - y).norm(), i, j));
            }
        }
        pairs.sort_by(|p, q| p.0.partial_cmp(&q.0).unwrap());
        let mut used_a = vec![false; a.len()];
        let mut used_b = vec![false; b.len()];
        let mut worst = 0.0f64;
        let mut matched = 0;
        for (d, i, j) in pairs {
            if !used_a[i] && !used_b[j] {
                used_a[i] = true;
                used_b[j] = true;
                worst = worst.max(d);
                matched += 1;
                if matched == a.len() {
                    break;
                }
            }
        }
        worst
    }
}
