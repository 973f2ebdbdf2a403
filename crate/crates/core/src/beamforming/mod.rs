//! Transmit covariance design for fixed antenna positions.
//!
//! The rank-relaxed problem `max rate s.t. Tr(U) ≤ P_max, Tr(Ê_k U Ê_k†) ≥ Γ,
//! U ⪰ 0` is solved as the linear SDP `max Tr(F U)` with `F = f†f` (the rate
//! is monotone in that term). A rank-one beamformer is then recovered by
//! Gaussian randomization.

mod barrier;
mod pd;
mod randomize;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{communication_rate, sensing_gain, ChannelRow};
use crate::error::{Error, Result};
use crate::linalg::{hermitian_part, hermitian_residual, min_eigenvalue, outer, real_trace, CMatrix};

pub use randomize::gaussian_randomize;

/// Hermitian PSD transmit covariance, optionally carrying its rank-one factor.
#[derive(Debug, Clone, PartialEq)]
pub struct Covariance {
    matrix: CMatrix,
    rank_one_factor: Option<DVector<Complex64>>,
}

impl Covariance {
    /// Validates Hermitian symmetry and PSD-ness, then stores the Hermitian part.
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || matrix.nrows() == 0 {
            return Err(Error::Dimension(format!(
                "covariance must be square and non-empty, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let residual = hermitian_residual(&matrix);
        if residual > 1e-10 * matrix.norm().max(1.0) {
            return Err(Error::NotPsd(format!("not Hermitian (residual {residual:.3e})")));
        }
        let matrix = hermitian_part(&matrix);
        let trace = real_trace(&matrix);
        let lowest = min_eigenvalue(&matrix);
        if lowest < -1e-8 * trace.abs() {
            return Err(Error::NotPsd(format!("minimum eigenvalue {lowest:.3e}")));
        }
        Ok(Self { matrix, rank_one_factor: None })
    }

    /// `U = u u†`.
    pub fn from_factor(u: DVector<Complex64>) -> Self {
        Self { matrix: outer(&u), rank_one_factor: Some(u) }
    }

    pub fn zeros(n: usize) -> Self {
        Self { matrix: CMatrix::zeros(n, n), rank_one_factor: None }
    }

    /// `(p/N)·I`.
    pub fn isotropic(n: usize, power: f64) -> Self {
        Self {
            matrix: CMatrix::identity(n, n).scale(power / n as f64),
            rank_one_factor: None,
        }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn rank_one_factor(&self) -> Option<&DVector<Complex64>> {
        self.rank_one_factor.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> f64 {
        real_trace(&self.matrix)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    MaxIter,
    RankOneRecoveryFailed,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::MaxIter => "max_iter",
            SolveStatus::RankOneRecoveryFailed => "rank_one_recovery_failed",
        }
    }
}

/// Dual point proving the sensing requirement unreachable: for every
/// `U ⪰ 0` with `Tr(U) ≤ P_max`, `Σ_k w_k ϖ_k(U) ≤ bound < Γ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfeasibilityCertificate {
    pub weights: Vec<f64>,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub relaxed_rate: f64,
    pub recovered_rate: Option<f64>,
    /// Power slack `P_max − Tr(U)` followed by the sensing slacks `ϖ_k − Γ`.
    pub constraint_slacks: Vec<f64>,
    pub iterations: usize,
    pub kkt_residual: f64,
    pub certificate: Option<InfeasibilityCertificate>,
}

impl SolveReport {
    pub fn min_sensing_slack(&self) -> Option<f64> {
        self.constraint_slacks[1..].iter().copied().reduce(f64::min)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Initial barrier weight.
    pub mu0: f64,
    pub mu_factor: f64,
    /// Relative duality-gap tolerance.
    pub gap_tol: f64,
    /// Half squared Newton decrement at which a barrier subproblem counts as centered.
    pub center_tol: f64,
    pub max_newton: usize,
    pub randomization_samples: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            mu0: 1.0,
            mu_factor: 0.2,
            gap_tol: 1e-7,
            center_tol: 1e-10,
            max_newton: 2000,
            randomization_samples: 1000,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu0 > 0.0) || !(self.mu_factor > 0.0 && self.mu_factor < 1.0) {
            return Err(Error::Config("barrier schedule needs mu0 > 0 and 0 < mu_factor < 1".into()));
        }
        if !(self.gap_tol > 0.0) || !(self.center_tol > 0.0) || self.max_newton == 0 {
            return Err(Error::Config("solver tolerances and iteration cap must be positive".into()));
        }
        if self.randomization_samples == 0 {
            return Err(Error::Config("randomization_samples must be at least 1".into()));
        }
        Ok(())
    }
}

/// `G_k = Ê_k† Ê_k`, so that `ϖ_k = Tr(G_k U)`.
pub fn gain_matrices(target_matrices: &[CMatrix]) -> Vec<CMatrix> {
    target_matrices.iter().map(|e| hermitian_part(&(e.adjoint() * e))).collect()
}

fn check_inputs(channel: &ChannelRow, target_matrices: &[CMatrix], p_max: f64, noise_power: f64) -> Result<()> {
    if !(p_max > 0.0) {
        return Err(Error::Config(format!("p_max must be positive, got {p_max}")));
    }
    if !(noise_power > 0.0) {
        return Err(Error::Config(format!("noise power must be positive, got {noise_power}")));
    }
    if channel.norm() == 0.0 {
        return Err(Error::Config("channel vector is zero".into()));
    }
    for (k, e) in target_matrices.iter().enumerate() {
        if e.ncols() != channel.len() {
            return Err(Error::Dimension(format!(
                "target {k} matrix has {} columns for {} antennas",
                e.ncols(),
                channel.len()
            )));
        }
    }
    Ok(())
}

pub(crate) fn slacks(covariance: &CMatrix, target_matrices: &[CMatrix], p_max: f64, gamma: f64) -> Result<Vec<f64>> {
    let mut out = vec![p_max - real_trace(covariance)];
    for e in target_matrices {
        out.push(sensing_gain(e, covariance)? - gamma);
    }
    Ok(out)
}

/// Solves the rank-relaxed covariance problem with a barrier phase 1 and a
/// primal-dual phase 2.
pub fn solve_covariance(
    channel: &ChannelRow,
    target_matrices: &[CMatrix],
    p_max: f64,
    gamma: f64,
    noise_power: f64,
    config: &SolverConfig,
) -> Result<(Covariance, SolveReport)> {
    config.validate()?;
    check_inputs(channel, target_matrices, p_max, noise_power)?;

    let objective = hermitian_part(&(channel.adjoint() * channel)).scale(1.0 / noise_power);
    // Γ ≤ 0 makes every sensing constraint redundant on the PSD cone.
    let gains = if gamma > 0.0 { gain_matrices(target_matrices) } else { Vec::new() };
    let problem = barrier::Problem { objective: &objective, gains: &gains, power: p_max, gamma };
    let settings = barrier::BarrierSettings {
        mu0: config.mu0,
        mu_factor: config.mu_factor,
        gap_tol: config.gap_tol,
        center_tol: config.center_tol,
        max_newton: config.max_newton,
    };
    let result = barrier::solve(&problem, &settings);

    let (status, certificate) = match result.outcome {
        barrier::Outcome::Converged => (SolveStatus::Optimal, None),
        barrier::Outcome::MaxIter => (SolveStatus::MaxIter, None),
        barrier::Outcome::Infeasible { weights, bound } => {
            (SolveStatus::Infeasible, Some(InfeasibilityCertificate { weights, bound }))
        }
    };
    let covariance = Covariance { matrix: result.covariance, rank_one_factor: None };
    let report = SolveReport {
        status,
        relaxed_rate: communication_rate(channel, covariance.matrix(), noise_power)?,
        recovered_rate: None,
        constraint_slacks: slacks(covariance.matrix(), target_matrices, p_max, gamma)?,
        iterations: result.newton_steps,
        kkt_residual: result.kkt_residual,
        certificate,
    };
    Ok((covariance, report))
}

/// Maximum-ratio transmission `u = √P_max · f† / ‖f‖`.
pub fn mrt_beamformer(channel: &ChannelRow, p_max: f64) -> Result<Covariance> {
    let norm = channel.norm();
    if norm == 0.0 {
        return Err(Error::Config("MRT needs a non-zero channel".into()));
    }
    let u: DVector<Complex64> = channel.adjoint().scale(p_max.sqrt() / norm);
    Ok(Covariance::from_factor(u))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub hermitian_residual: f64,
    pub min_eigenvalue: f64,
    pub power_slack: f64,
    pub sensing_slacks: Vec<f64>,
    pub rate: f64,
    /// Every constraint holds to `tol` (relative).
    pub satisfied: bool,
}

pub fn validate_covariance(
    covariance: &Covariance,
    channel: &ChannelRow,
    target_matrices: &[CMatrix],
    p_max: f64,
    gamma: f64,
    noise_power: f64,
    tol: f64,
) -> Result<ConstraintReport> {
    let u = covariance.matrix();
    let all = slacks(u, target_matrices, p_max, gamma)?;
    let trace = covariance.trace();
    let min_eig = min_eigenvalue(u);
    let satisfied = all[0] >= -tol * p_max
        && all[1..].iter().all(|s| *s >= -tol * gamma.abs())
        && min_eig >= -1e-8 * trace.abs();
    Ok(ConstraintReport {
        hermitian_residual: hermitian_residual(u),
        min_eigenvalue: min_eig,
        power_slack: all[0],
        sensing_slacks: all[1..].to_vec(),
        rate: communication_rate(channel, u, noise_power)?,
        satisfied,
    })
}
