//! Dense strictly convex quadratic programs
//! `min ½ xᵀGx + gᵀx  s.t.  Cx ≥ b`, solved with the Goldfarb-Idnani dual
//! active-set method. Starts from the unconstrained minimizer and adds
//! violated constraints one at a time, so no feasible start is needed.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("objective matrix is not positive definite")]
    NotConvex,
    #[error("constraints are infeasible")]
    Infeasible,
    #[error("iteration limit reached")]
    MaxIterations,
    #[error("dimension mismatch")]
    Dimensions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// One multiplier per constraint row, zero for inactive rows.
    pub multipliers: DVector<f64>,
    pub active: Vec<usize>,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub struct Qp {
    pub g: DMatrix<f64>,
    pub c: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl Qp {
    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.g * x)) + self.c.dot(x)
    }

    /// Largest violation `max(b - Ax)`, zero when feasible.
    pub fn violation(&self, x: &DVector<f64>) -> f64 {
        let s = &self.a * x - &self.b;
        s.iter().fold(0.0f64, |m, &v| m.max(-v))
    }

    /// Infinity norm of `Gx + g - Aᵀu`.
    pub fn stationarity(&self, sol: &QpSolution) -> f64 {
        let r = &self.g * &sol.x + &self.c - self.a.transpose() * &sol.multipliers;
        r.amax()
    }

    pub fn solve(&self) -> Result<QpSolution, QpError> {
        let n = self.g.nrows();
        let m = self.a.nrows();
        if self.g.ncols() != n || self.c.len() != n || self.a.ncols() != n || self.b.len() != m {
            return Err(QpError::Dimensions);
        }
        let chol = self.g.clone().cholesky().ok_or(QpError::NotConvex)?;
        let ginv = chol.inverse();
        let mut x = -(&ginv * &self.c);
        let mut active: Vec<usize> = Vec::new();
        let mut u: Vec<f64> = Vec::new();
        let row_norm: Vec<f64> = (0..m).map(|j| self.a.row(j).norm()).collect();
        let max_iter = 10 * (n + m) + 100;
        let mut iterations = 0;
        loop {
            // most violated constraint, scaled by its row norm
            let slack = &self.a * &x - &self.b;
            let mut pick: Option<(usize, f64)> = None;
            for j in 0..m {
                if active.contains(&j) || row_norm[j] == 0.0 {
                    if row_norm[j] == 0.0 && self.b[j] > 1e-12 {
                        return Err(QpError::Infeasible);
                    }
                    continue;
                }
                let tol = 1e-11 * (1.0 + self.b[j].abs());
                let viol = slack[j] / row_norm[j];
                if slack[j] < -tol && pick.is_none_or(|(_, v)| viol < v) {
                    pick = Some((j, viol));
                }
            }
            let Some((p, _)) = pick else {
                let mut mult = DVector::zeros(m);
                for (k, &j) in active.iter().enumerate() {
                    mult[j] = u[k];
                }
                return Ok(QpSolution {
                    x,
                    multipliers: mult,
                    active,
                    iterations,
                });
            };
            let np: DVector<f64> = self.a.row(p).transpose();
            let mut up = 0.0;
            loop {
                iterations += 1;
                if iterations > max_iter {
                    return Err(QpError::MaxIterations);
                }
                let q = active.len();
                let w = &ginv * &np;
                let (z, r) = if q == 0 {
                    (w.clone(), DVector::zeros(0))
                } else {
                    let nmat = DMatrix::from_fn(n, q, |i, k| self.a[(active[k], i)]);
                    let wn = &ginv * &nmat;
                    let mm = nmat.transpose() * &wn;
                    let mchol = mm.cholesky().ok_or(QpError::Infeasible)?;
                    let r = mchol.solve(&(nmat.transpose() * &w));
                    (&w - &wn * &r, r)
                };
                let mut t1 = f64::INFINITY;
                let mut drop = None;
                for k in 0..q {
                    if r[k] > 1e-12 {
                        let t = u[k] / r[k];
                        if t < t1 {
                            t1 = t;
                            drop = Some(k);
                        }
                    }
                }
                let zn = z.dot(&np);
                let sp = np.dot(&x) - self.b[p];
                let t2 = if zn > 1e-12 * np.dot(&w).max(1e-300) { -sp / zn } else { f64::INFINITY };
                if t1.is_infinite() && t2.is_infinite() {
                    return Err(QpError::Infeasible);
                }
                let t = t1.min(t2);
                for k in 0..q {
                    u[k] -= t * r[k];
                }
                up += t;
                if t2.is_finite() {
                    x += &z * t;
                }
                if t2 <= t1 {
                    active.push(p);
                    u.push(up);
                    break;
                }
                let k = drop.expect("partial step drops a constraint");
                active.remove(k);
                u.remove(k);
            }
        }
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Brute force over all active sets: the optimum is the KKT point that
    /// is primal feasible with nonnegative multipliers and the lowest cost.
    pub(crate) fn enumerate_oracle(qp: &Qp) -> Option<DVector<f64>> {
        let n = qp.g.nrows();
        let m = qp.a.nrows();
        let mut best: Option<(f64, DVector<f64>)> = None;
        for mask in 0u32..(1u32 << m) {
            let idx: Vec<usize> = (0..m).filter(|j| mask & (1 << j) != 0).collect();
            let q = idx.len();
            let mut k = DMatrix::zeros(n + q, n + q);
            let mut rhs = DVector::zeros(n + q);
            k.view_mut((0, 0), (n, n)).copy_from(&qp.g);
            for i in 0..n {
                rhs[i] = -qp.c[i];
            }
            for (r, &j) in idx.iter().enumerate() {
                for i in 0..n {
                    k[(i, n + r)] = -qp.a[(j, i)];
                    k[(n + r, i)] = qp.a[(j, i)];
                }
                rhs[n + r] = qp.b[j];
            }
            let Some(sol) = k.lu().solve(&rhs) else { continue };
            let x = sol.rows(0, n).into_owned();
            let feasible = qp.violation(&x) <= 1e-9;
            let dual_ok = (0..q).all(|r| sol[n + r] >= -1e-9);
            if feasible && dual_ok {
                let f = qp.objective(&x);
                if best.as_ref().is_none_or(|(bf, _)| f < *bf - 1e-12) {
                    best = Some((f, x));
                }
            }
        }
        best.map(|(_, x)| x)
    }

    #[test]
    fn textbook_example() {
        // min (x-1)^2 + (y-2.5)^2 over a polytope; optimum (1.4, 1.7)
        let qp = Qp {
            g: DMatrix::from_diagonal_element(2, 2, 2.0),
            c: DVector::from_vec(vec![-2.0, -5.0]),
            a: DMatrix::from_row_slice(5, 2, &[1.0, -2.0, -1.0, -2.0, -1.0, 2.0, 1.0, 0.0, 0.0, 1.0]),
            b: DVector::from_vec(vec![-2.0, -6.0, -2.0, 0.0, 0.0]),
        };
        let sol = qp.solve().unwrap();
        assert!((sol.x[0] - 1.4).abs() < 1e-10 && (sol.x[1] - 1.7).abs() < 1e-10);
        assert!(qp.stationarity(&sol) < 1e-10);
        assert!(sol.multipliers.iter().all(|&u| u >= 0.0));
    }

    #[test]
    fn infeasible_detected() {
        let qp = Qp {
            g: DMatrix::identity(1, 1),
            c: DVector::zeros(1),
            a: DMatrix::from_row_slice(2, 1, &[1.0, -1.0]),
            b: DVector::from_vec(vec![1.0, 0.0]),
        };
        assert_eq!(qp.solve(), Err(QpError::Infeasible));
        let bad = Qp {
            g: DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]),
            c: DVector::zeros(2),
            a: DMatrix::zeros(0, 2),
            b: DVector::zeros(0),
        };
        assert_eq!(bad.solve(), Err(QpError::NotConvex));
    }

    #[test]
    fn random_instances_match_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..40 {
            let n = rng.gen_range(2..5);
            let m = rng.gen_range(1..7);
            let r = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
            let g = r.transpose() * &r + DMatrix::identity(n, n) * 0.5;
            let c = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
            let a = DMatrix::from_fn(m, n, |_, _| rng.gen_range(-1.0..1.0));
            let b = DVector::from_fn(m, |_, _| rng.gen_range(-1.0..0.5));
            let qp = Qp { g, c, a, b };
            let oracle = enumerate_oracle(&qp);
            match (qp.solve(), oracle) {
                (Ok(sol), Some(x)) => {
                    assert!((&sol.x - &x).amax() < 1e-7, "{} vs {}", sol.x, x);
                    assert!(qp.stationarity(&sol) < 1e-8);
                }
                (Err(QpError::Infeasible), None) => {}
                (got, want) => panic!("solver {got:?} vs oracle {want:?}"),
            }
        }
    }
}
