//! Infeasible-start primal-dual path following (HKM direction) for
//!
//! ```text
//! min ⟨C, X⟩  s.t.  ⟨A_i, X⟩ = b_i,  X ⪰ 0
//! ```
//!
//! with `X = diag(U, s)`: a Hermitian block `U` and a nonnegative vector of
//! slacks `s = (s_p, s_1, …, s_K)`. Constraint 0 is `Tr(U) + s_p = P`, and
//! constraint `k` is `Tr(G_k U) − s_k = Γ`; `C = diag(−F, 0)`. Each iterate
//! aims at `σ·μ` with `σ` the barrier reduction factor, and the step solves a
//! `(K+1) × (K+1)` Schur system.

use nalgebra::{Cholesky, DMatrix, DVector};

use super::barrier::{BarrierSettings, Problem};
use crate::linalg::{hermitian_eigen, hermitian_inner, hermitian_part, real_trace, CMatrix};

/// Fraction of the distance to the cone boundary taken per step.
const STEP_FRACTION: f64 = 0.95;
/// Relative primal / dual infeasibility accepted at termination.
const FEAS_TOL: f64 = 1e-9;

#[derive(Clone)]
struct Point {
    u: CMatrix,
    s: DVector<f64>,
}

impl Point {
    fn inner(&self, other: &Point) -> f64 {
        hermitian_inner(&self.u, &other.u) + self.s.dot(&other.s)
    }

    fn add_scaled(&self, alpha: f64, d: &Point) -> Point {
        Point { u: &self.u + d.u.scale(alpha), s: &self.s + d.s.scale(alpha) }
    }

    fn norm(&self) -> f64 {
        (self.u.norm_squared() + self.s.norm_squared()).sqrt()
    }
}

pub(crate) struct PdResult {
    pub covariance: CMatrix,
    pub converged: bool,
    pub iterations: usize,
    pub kkt_residual: f64,
}

struct Ops<'a> {
    problem: &'a Problem<'a>,
    n: usize,
    m: usize,
}

impl Ops<'_> {
    /// `A(X)`.
    fn apply(&self, x: &Point) -> DVector<f64> {
        let mut out = DVector::zeros(self.m);
        out[0] = real_trace(&x.u) + x.s[0];
        for (k, g) in self.problem.gains.iter().enumerate() {
            out[k + 1] = hermitian_inner(g, &x.u) - x.s[k + 1];
        }
        out
    }

    /// `Aᵀ(y) = Σ y_i A_i`.
    fn adjoint(&self, y: &DVector<f64>) -> Point {
        let mut u = CMatrix::identity(self.n, self.n).scale(y[0]);
        let mut s = DVector::zeros(self.m);
        s[0] = y[0];
        for (k, g) in self.problem.gains.iter().enumerate() {
            u += g.scale(y[k + 1]);
            s[k + 1] = -y[k + 1];
        }
        Point { u, s }
    }

    /// Hermitian and slack parts of `A_i`.
    fn constraint(&self, i: usize) -> Point {
        let mut y = DVector::zeros(self.m);
        y[i] = 1.0;
        self.adjoint(&y)
    }

    fn cost(&self) -> Point {
        Point { u: -self.problem.objective.clone(), s: DVector::zeros(self.m) }
    }
}

fn inverse(a: &CMatrix) -> Option<CMatrix> {
    Cholesky::new(a.clone()).map(|c| hermitian_part(&c.inverse()))
}

/// Largest `α` keeping `X + α ΔX ⪰ 0` (infinite if any step is allowed).
fn max_step(x: &Point, d: &Point) -> Option<f64> {
    let l = Cholesky::new(x.u.clone())?.l();
    let l_inv = l.clone().try_inverse()?;
    let w = hermitian_part(&(&l_inv * &d.u * l_inv.adjoint()));
    let (values, _) = hermitian_eigen(&w);
    let mut alpha = f64::INFINITY;
    let lowest = values[values.len() - 1];
    if lowest < 0.0 {
        alpha = -1.0 / lowest;
    }
    for (xi, di) in x.s.iter().zip(d.s.iter()) {
        if *di < 0.0 {
            alpha = alpha.min(-xi / di);
        }
    }
    Some(alpha)
}

pub(crate) fn solve(problem: &Problem<'_>, settings: &BarrierSettings, start: &CMatrix) -> PdResult {
    let n = problem.objective.nrows();
    let m = problem.gains.len() + 1;
    let ops = Ops { problem, n, m };
    let mut b = DVector::zeros(m);
    b[0] = problem.power;
    for k in 1..m {
        b[k] = problem.gamma;
    }
    let c = ops.cost();
    let scale_c = 1.0 + c.norm();
    let scale_b = 1.0 + b.norm();

    // Start from the phase-1 point with slacks kept away from zero.
    let mut x = Point { u: start.clone(), s: DVector::zeros(m) };
    let gains: Vec<f64> = problem.gains.iter().map(|g| hermitian_inner(g, start)).collect();
    x.s[0] = (problem.power - real_trace(start)).max(problem.power / (n as f64 + 1.0));
    for k in 0..m - 1 {
        x.s[k + 1] = (gains[k] - problem.gamma).max(1e-3 * (1.0 + problem.gamma.abs()));
    }
    let z_level = 1.0 + problem.objective.norm();
    let mut z = Point { u: CMatrix::identity(n, n).scale(z_level), s: DVector::from_element(m, z_level) };
    let mut y = DVector::<f64>::zeros(m);
    let total_dim = (n + m) as f64;

    let constraints: Vec<Point> = (0..m).map(|i| ops.constraint(i)).collect();
    let mut kkt_residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < settings.max_newton {
        let r_p = &b - ops.apply(&x);
        let aty = ops.adjoint(&y);
        let r_d = Point { u: &c.u - &z.u - &aty.u, s: &c.s - &z.s - &aty.s };
        let gap = x.inner(&z);
        let p_obj = x.inner(&c);
        let d_obj = b.dot(&y);
        let p_inf = r_p.norm() / scale_b;
        let d_inf = r_d.norm() / scale_c;
        let rel_gap = gap.max((p_obj - d_obj).abs()) / (1.0 + p_obj.abs());
        kkt_residual = p_inf.max(d_inf).max(rel_gap);
        if p_inf < FEAS_TOL && d_inf < FEAS_TOL && rel_gap < settings.gap_tol {
            return PdResult { covariance: hermitian_part(&x.u), converged: true, iterations, kkt_residual };
        }
        iterations += 1;

        let Some(z_inv_u) = inverse(&z.u) else { break };
        let z_inv_s = z.s.map(|v| 1.0 / v);
        let mu = gap / total_dim;
        let target = settings.mu_factor * mu;

        // Schur complement M_ij = ⟨A_i, X A_j Z⁻¹⟩.
        let xaz: Vec<Point> = constraints
            .iter()
            .map(|a| Point {
                u: &x.u * &a.u * &z_inv_u,
                s: x.s.component_mul(&a.s).component_mul(&z_inv_s),
            })
            .collect();
        let mut schur = DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            for j in 0..m {
                schur[(i, j)] = constraints[i].inner(&xaz[j]);
            }
        }
        let schur = (&schur + schur.transpose()) * 0.5;

        // K = σμ Z⁻¹ − X − X R_d Z⁻¹, so that ΔX = K + X Aᵀ(Δy) Z⁻¹.
        let k = Point {
            u: z_inv_u.scale(target) - &x.u - &x.u * &r_d.u * &z_inv_u,
            s: z_inv_s.scale(target) - &x.s - x.s.component_mul(&r_d.s).component_mul(&z_inv_s),
        };
        let rhs = &r_p - ops.apply(&k);
        let Some(dy) = schur.clone().lu().solve(&rhs) else { break };
        let atdy = ops.adjoint(&dy);
        let dz = Point { u: &r_d.u - &atdy.u, s: &r_d.s - &atdy.s };
        let dx = Point {
            u: hermitian_part(&(&k.u + &x.u * &atdy.u * &z_inv_u)),
            s: &k.s + x.s.component_mul(&atdy.s).component_mul(&z_inv_s),
        };

        let (Some(ap), Some(ad)) = (max_step(&x, &dx), max_step(&z, &dz)) else { break };
        let alpha_p = (STEP_FRACTION * ap).min(1.0);
        let alpha_d = (STEP_FRACTION * ad).min(1.0);
        if alpha_p < 1e-12 && alpha_d < 1e-12 {
            break;
        }
        x = x.add_scaled(alpha_p, &dx);
        x.u = hermitian_part(&x.u);
        z = z.add_scaled(alpha_d, &dz);
        z.u = hermitian_part(&z.u);
        y += dy.scale(alpha_d);
    }
    PdResult { covariance: hermitian_part(&x.u), converged: false, iterations, kkt_residual }
}
