//! Log-barrier interior-point method for
//!
//! ```text
//! max Tr(F U)  s.t.  Tr(U) ≤ P,  Tr(G_k U) ≥ Γ (k = 1..K),  U ⪰ 0
//! ```
//!
//! over Hermitian `U`. Newton directions are computed in the coordinates
//! `ΔU = L V L†` where `U = L L†`: there the Hessian of `log det U` is the
//! identity and every scalar constraint adds a rank-one term, so each step is
//! a `(K+1)`-dimensional solve regardless of `N`. Steps are damped by
//! `1/(1+λ)` with `λ` the Newton decrement, which keeps iterates strictly
//! feasible for self-concordant barriers.
//!
//! The barrier drives phase 1, which either finds a strictly feasible point
//! or certifies infeasibility. Phase 2 starts from that point and runs the
//! primal-dual path following in `pd`, whose explicit dual variables keep the
//! residuals accurate at small barrier weights.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::linalg::{hermitian_inner, hermitian_part, max_eigenvalue, real_trace, CMatrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierSettings {
    pub mu0: f64,
    pub mu_factor: f64,
    pub gap_tol: f64,
    pub center_tol: f64,
    pub max_newton: usize,
}

pub(crate) struct Problem<'a> {
    /// Objective matrix, already divided by the noise power.
    pub objective: &'a CMatrix,
    pub gains: &'a [CMatrix],
    pub power: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Outcome {
    Converged,
    MaxIter,
    /// Phase 1 proved the sensing constraints unreachable. `weights` lie on
    /// the simplex and `bound = P·λ_max(Σ w_k G_k) < Γ`.
    Infeasible { weights: Vec<f64>, bound: f64 },
}

pub(crate) struct BarrierResult {
    pub covariance: CMatrix,
    pub outcome: Outcome,
    pub newton_steps: usize,
    pub kkt_residual: f64,
}

fn cholesky(u: &CMatrix) -> Option<CMatrix> {
    Cholesky::new(u.clone()).map(|c| c.l())
}

fn log_det(l: &CMatrix) -> f64 {
    (0..l.nrows()).map(|i| 2.0 * l[(i, i)].re.ln()).sum()
}

fn scaled(l: &CMatrix, a: &CMatrix) -> CMatrix {
    hermitian_part(&(l.adjoint() * a * l))
}

impl Problem<'_> {
    fn n(&self) -> usize {
        self.objective.nrows()
    }

    fn degree(&self) -> f64 {
        (self.n() + 1 + self.gains.len()) as f64
    }

    fn power_slack(&self, u: &CMatrix) -> f64 {
        self.power - real_trace(u)
    }

    fn gain_values(&self, u: &CMatrix) -> Vec<f64> {
        self.gains.iter().map(|g| hermitian_inner(g, u)).collect()
    }

    /// Barrier value `t·obj + log det U + log s_p + Σ log s_k`, or `None`
    /// outside the domain. `aux` is the phase-1 variable (`None` in phase 2).
    fn barrier(&self, u: &CMatrix, t: f64, aux: Option<f64>) -> Option<f64> {
        let l = cholesky(u)?;
        let sp = self.power_slack(u);
        if !(sp > 0.0) {
            return None;
        }
        let shift = self.gamma + aux.unwrap_or(0.0);
        let mut value = log_det(&l) + sp.ln();
        for gv in self.gain_values(u) {
            let sk = gv - shift;
            if !(sk > 0.0) {
                return None;
            }
            value += sk.ln();
        }
        value += t * match aux {
            Some(s) => s,
            None => hermitian_inner(self.objective, u),
        };
        Some(value)
    }

    /// Newton direction and squared decrement at `(u, aux)`.
    ///
    /// With `U = L L†`, `ΔU = L X L†` and every slack change written as
    /// `Δs_j = s_j σ_j`, the barrier Hessian is the identity in `(X, σ)` and
    /// the slack definitions become linear equalities `⟨A_j, X⟩ − s_j σ_j = 0`
    /// (minus `Δa` for sensing slacks in phase 1), where `A_j = L† G_j L` and
    /// `A_p = −L† L` for the power slack. Eliminating `X = h − Σ ν_j A_j` and
    /// `σ_j = 1 + s_j ν_j` leaves the small system
    /// `(AᵀA + diag(s²)) ν = Aᵀh − s`, bordered by `Σ_k ν_k = −t` in phase 1.
    /// All of its entries stay bounded as slacks vanish, unlike a direct
    /// reduction to `X` whose Hessian has eigenvalues of order `1/s²`.
    fn newton(&self, u: &CMatrix, t: f64, aux: Option<f64>) -> Option<(CMatrix, f64, f64)> {
        let n = self.n();
        let l = cholesky(u)?;
        let shift = self.gamma + aux.unwrap_or(0.0);

        let mut h = CMatrix::identity(n, n);
        if aux.is_none() {
            h += scaled(&l, self.objective).scale(t);
        }
        let mut rows: Vec<(CMatrix, f64)> = Vec::with_capacity(self.gains.len() + 1);
        rows.push((-hermitian_part(&(l.adjoint() * &l)), self.power_slack(u)));
        for gk in self.gains {
            rows.push((scaled(&l, gk), hermitian_inner(gk, u) - shift));
        }

        let r = rows.len();
        let size = r + usize::from(aux.is_some());
        let mut m = DMatrix::<f64>::zeros(size, size);
        let mut rhs = DVector::<f64>::zeros(size);
        for i in 0..r {
            for j in i..r {
                let v = hermitian_inner(&rows[i].0, &rows[j].0);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
            m[(i, i)] += rows[i].1 * rows[i].1;
            rhs[i] = hermitian_inner(&rows[i].0, &h) - rows[i].1;
        }
        if aux.is_some() {
            for i in 1..r {
                m[(i, r)] = 1.0;
                m[(r, i)] = 1.0;
            }
            rhs[r] = -t;
        }
        let nu = m.lu().solve(&rhs)?;

        let mut x = h;
        let mut decrement_sq = 0.0;
        for (j, (a, slack)) in rows.iter().enumerate() {
            x -= a.scale(nu[j]);
            decrement_sq += (1.0 + slack * nu[j]).powi(2);
        }
        decrement_sq += x.norm_squared();
        let du = hermitian_part(&(&l * &x * l.adjoint()));
        let da = if aux.is_some() { nu[r] } else { 0.0 };
        Some((du, da, decrement_sq))
    }

    /// Runs damped Newton at fixed `t` until the decrement falls below the
    /// centering tolerance or stops shrinking (its rounding floor). Returns
    /// `false` when the step budget runs out.
    ///
    /// For a self-concordant barrier the damped step `1/(1+λ)` always
    /// decreases the barrier and stays in its domain, and the full step does
    /// once `λ < 1/4`; barrier values are therefore never compared, which
    /// matters late in the schedule where `t·obj` dwarfs the decrease.
    fn center(
        &self,
        u: &mut CMatrix,
        aux: &mut Option<f64>,
        t: f64,
        settings: &BarrierSettings,
        steps: &mut usize,
        stop_when_positive: bool,
    ) -> bool {
        let mut best = f64::INFINITY;
        let mut since_best = 0;
        loop {
            if *steps >= settings.max_newton {
                return false;
            }
            let Some((du, ds, lam_sq)) = self.newton(u, t, *aux) else {
                return true;
            };
            if lam_sq / 2.0 <= settings.center_tol {
                return true;
            }
            if lam_sq < 0.5 * best {
                best = lam_sq;
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= 4 && lam_sq < 1e-2 {
                    return true;
                }
            }
            *steps += 1;
            let lam = lam_sq.sqrt();
            let mut alpha = if lam < 0.25 { 1.0 } else { 1.0 / (1.0 + lam) };
            loop {
                let cand = hermitian_part(&(&*u + du.scale(alpha)));
                let cand_aux = aux.map(|s| s + alpha * ds);
                if self.barrier(&cand, t, cand_aux).is_some() {
                    *u = cand;
                    *aux = cand_aux;
                    break;
                }
                alpha *= 0.5;
                if alpha < 1e-14 {
                    return true;
                }
            }
            if stop_when_positive && aux.is_some_and(|s| s > 0.0) {
                return true;
            }
        }
    }

    fn strictly_feasible(&self, u: &CMatrix) -> bool {
        self.barrier(u, 0.0, None).is_some()
    }
}

/// Phase 1: maximize the smallest sensing slack under the power budget.
/// Returns a strictly feasible start point or an infeasibility certificate.
fn phase_one(
    problem: &Problem<'_>,
    settings: &BarrierSettings,
    steps: &mut usize,
) -> (CMatrix, Result<(), Outcome>) {
    let n = problem.n();
    let mut u = CMatrix::identity(n, n).scale(problem.power / (n as f64 + 1.0));
    if problem.strictly_feasible(&u) {
        return (u, Ok(()));
    }
    let gains = problem.gain_values(&u);
    let lowest = gains.iter().copied().fold(f64::INFINITY, f64::min);
    let mut aux = Some(lowest - problem.gamma - problem.gamma.abs().max(1.0));
    let mut mu = settings.mu0;
    loop {
        let t = 1.0 / mu;
        let finished = problem.center(&mut u, &mut aux, t, settings, steps, true);
        let s = aux.expect("phase-1 auxiliary variable");
        if s > 0.0 {
            return (u, Ok(()));
        }
        if !finished {
            return (u, Err(Outcome::MaxIter));
        }
        let gap = problem.degree() * mu;
        let slacks: Vec<f64> = problem
            .gain_values(&u)
            .iter()
            .map(|g| g - problem.gamma - s)
            .collect();
        let raw: Vec<f64> = slacks.iter().map(|sk| mu / sk).collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let mut combo = CMatrix::zeros(n, n);
        for (w, g) in weights.iter().zip(problem.gains) {
            combo += g.scale(*w);
        }
        let bound = problem.power * max_eigenvalue(&combo);
        let tiny = 1e-12 * (1.0 + problem.gamma.abs());
        if (s + gap < 0.0 && bound < problem.gamma) || gap < tiny {
            return (u, Err(Outcome::Infeasible { weights, bound }));
        }
        mu *= settings.mu_factor;
    }
}

pub(crate) fn solve(problem: &Problem<'_>, settings: &BarrierSettings) -> BarrierResult {
    let mut steps = 0;
    let (u, start) = phase_one(problem, settings, &mut steps);
    if let Err(outcome) = start {
        let kkt_residual = f64::NAN;
        return BarrierResult { covariance: hermitian_part(&u), outcome, newton_steps: steps, kkt_residual };
    }

    let result = super::pd::solve(problem, settings, &u);
    BarrierResult {
        covariance: result.covariance,
        outcome: if result.converged { Outcome::Converged } else { Outcome::MaxIter },
        newton_steps: steps + result.iterations,
        kkt_residual: result.kkt_residual,
    }
}
