//! Euclidean projection onto a polyhedron by the Goldfarb-Idnani dual
//! active-set method.
//!
//! Solves `min 1/2 ||x - target||^2  s.t.  n_j . x >= b_j`. The method starts
//! at the unconstrained minimum and only ever adds violated constraints, so
//! constraints can be appended to an already solved instance and the solve
//! resumes from the previous optimum. The objective never decreases, which
//! lets callers stop as soon as it passes a cap (the Rashomon radius).

use nalgebra::{DMatrix, DVector};

const ZERO_STEP: f64 = 1e-14;
const FEAS_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QpStatus {
    Feasible,
    Infeasible,
    /// Squared distance to the target exceeded the cap.
    CapExceeded,
    NumericalFailure,
}

#[derive(Clone, Debug)]
pub struct ProjectionQp {
    target: DVector<f64>,
    normals: Vec<DVector<f64>>,
    rhs: Vec<f64>,
    x: DVector<f64>,
    active: Vec<usize>,
    mult: Vec<f64>,
    cap: Option<f64>,
    status: QpStatus,
}

impl ProjectionQp {
    pub fn new(target: DVector<f64>) -> Self {
        ProjectionQp {
            x: target.clone(),
            target,
            normals: Vec::new(),
            rhs: Vec::new(),
            active: Vec::new(),
            mult: Vec::new(),
            cap: None,
            status: QpStatus::Feasible,
        }
    }

    /// Fails the solve once `||x - target||^2` exceeds `cap`.
    pub fn with_cap(mut self, cap: f64) -> Self {
        self.cap = Some(cap);
        self
    }

    pub fn status(&self) -> QpStatus {
        self.status
    }

    pub fn is_feasible(&self) -> bool {
        self.status == QpStatus::Feasible
    }

    pub fn point(&self) -> &DVector<f64> {
        &self.x
    }

    pub fn distance_sq(&self) -> f64 {
        (&self.x - &self.target).norm_squared()
    }

    pub fn constraint_count(&self) -> usize {
        self.normals.len()
    }

    /// Active constraint indices with their multipliers. On an infeasible
    /// or capped solve these certify the failure.
    pub fn active_set(&self) -> Vec<(usize, f64)> {
        self.active.iter().copied().zip(self.mult.iter().copied()).collect()
    }

    fn slack(&self, j: usize) -> f64 {
        self.normals[j].dot(&self.x) - self.rhs[j]
    }

    fn tol(&self, j: usize) -> f64 {
        FEAS_TOL * (1.0 + self.normals[j].norm() * self.x.norm() + self.rhs[j].abs())
    }

    /// Appends `normal . x >= rhs` and re-solves.
    pub fn add_constraint(&mut self, normal: DVector<f64>, rhs: f64) -> QpStatus {
        assert_eq!(normal.len(), self.x.len(), "constraint dimension");
        self.normals.push(normal);
        self.rhs.push(rhs);
        self.resolve()
    }

    pub fn add_constraints<I>(&mut self, rows: I) -> QpStatus
    where
        I: IntoIterator<Item = (DVector<f64>, f64)>,
    {
        for (n, b) in rows {
            assert_eq!(n.len(), self.x.len(), "constraint dimension");
            self.normals.push(n);
            self.rhs.push(b);
        }
        self.resolve()
    }

    fn cap_exceeded(&self) -> bool {
        match self.cap {
            Some(cap) => self.distance_sq() > cap,
            None => false,
        }
    }

    fn resolve(&mut self) -> QpStatus {
        if self.status != QpStatus::Feasible {
            return self.status;
        }
        let dim = self.x.len();
        let max_iter = 20 * (self.normals.len() + dim) + 100;
        let mut iter = 0;
        loop {
            // most violated inactive constraint, scaled by its norm
            let mut pick: Option<(usize, f64)> = None;
            for j in 0..self.normals.len() {
                if self.active.contains(&j) {
                    continue;
                }
                let s = self.slack(j);
                if s < -self.tol(j) {
                    let scaled = s / self.normals[j].norm().max(f64::MIN_POSITIVE);
                    if pick.is_none_or(|(_, best)| scaled < best) {
                        pick = Some((j, scaled));
                    }
                }
            }
            let Some((p, _)) = pick else {
                self.status = QpStatus::Feasible;
                return self.status;
            };
            let np = self.normals[p].clone();
            if np.norm() <= ZERO_STEP {
                self.status = QpStatus::Infeasible;
                return self.status;
            }
            let mut u_plus = self.mult.clone();
            u_plus.push(0.0);
            loop {
                iter += 1;
                if iter > max_iter {
                    self.status = QpStatus::NumericalFailure;
                    return self.status;
                }
                let q = self.active.len();
                let (z, r) = if q == 0 {
                    (np.clone(), DVector::zeros(0))
                } else {
                    let n_act = DMatrix::from_columns(
                        &self.active.iter().map(|&j| self.normals[j].clone()).collect::<Vec<_>>(),
                    );
                    let qr = n_act.qr();
                    let q1 = qr.q();
                    let rmat = qr.r();
                    let proj = q1.transpose() * &np;
                    let z = &np - &q1 * &proj;
                    let Some(r) = rmat.solve_upper_triangular(&proj) else {
                        self.status = QpStatus::NumericalFailure;
                        return self.status;
                    };
                    (z, r)
                };
                let mut t1 = f64::INFINITY;
                let mut drop_k = None;
                for j in 0..q {
                    if r[j] > ZERO_STEP {
                        let ratio = u_plus[j] / r[j];
                        if ratio < t1 {
                            t1 = ratio;
                            drop_k = Some(j);
                        }
                    }
                }
                let zn = z.dot(&np);
                let t2 = if z.norm() > ZERO_STEP * np.norm() && zn > ZERO_STEP {
                    (-self.slack(p) / zn).max(0.0)
                } else {
                    f64::INFINITY
                };
                let t = t1.min(t2);
                if !t.is_finite() {
                    self.status = QpStatus::Infeasible;
                    return self.status;
                }
                for j in 0..q {
                    u_plus[j] -= t * r[j];
                }
                u_plus[q] += t;
                if t2.is_finite() {
                    self.x.axpy(t, &z, 1.0);
                }
                if t2 <= t1 {
                    self.active.push(p);
                    self.mult = u_plus;
                    break;
                }
                let k = drop_k.expect("partial step has a blocking constraint");
                self.active.remove(k);
                u_plus.remove(k);
                self.mult = u_plus[..u_plus.len() - 1].to_vec();
            }
            if self.cap_exceeded() {
                self.status = QpStatus::CapExceeded;
                return self.status;
            }
            if iter > max_iter {
                self.status = QpStatus::NumericalFailure;
                return self.status;
            }
        }
    }
}
