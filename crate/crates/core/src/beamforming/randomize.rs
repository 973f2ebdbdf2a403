use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{slacks, Covariance, SolveReport, SolveStatus};
use crate::channel::{communication_rate, ChannelRow};
use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigen, psd_sqrt, CMatrix};

struct Candidate {
    factor: DVector<Complex64>,
    rate: f64,
    worst_slack: f64,
}

/// Recovers a rank-one beamformer from a (possibly higher-rank) covariance.
///
/// Candidate 0 is the dominant eigenvector of `U`; candidates `1..=num_samples`
/// are `U^{1/2} v` with `v ~ CN(0, I)`. Every candidate is rescaled to the
/// full power budget, since both the rate and every sensing gain grow with
/// power. Among candidates meeting all sensing constraints the highest rate
/// wins, ties going to the lowest index.
#[allow(clippy::too_many_arguments)]
pub fn gaussian_randomize<R: Rng + ?Sized>(
    covariance: &Covariance,
    channel: &ChannelRow,
    target_matrices: &[CMatrix],
    p_max: f64,
    gamma: f64,
    noise_power: f64,
    num_samples: usize,
    rng: &mut R,
) -> Result<(Covariance, SolveReport)> {
    if num_samples == 0 {
        return Err(Error::Config("gaussian randomization needs at least one sample".into()));
    }
    let n = covariance.dim();
    if channel.len() != n {
        return Err(Error::Dimension(format!("channel has {} entries for {n} antennas", channel.len())));
    }
    let relaxed_rate = communication_rate(channel, covariance.matrix(), noise_power)?;
    let tolerance = 1e-8 * gamma.abs().max(1.0);

    let evaluate = |raw: DVector<Complex64>| -> Option<Candidate> {
        let norm = raw.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return None;
        }
        let factor = raw.scale(p_max.sqrt() / norm);
        let gain = (channel * &factor)[(0, 0)].norm_sqr();
        let rate = (gain / noise_power).ln_1p() / std::f64::consts::LN_2;
        let worst_slack = target_matrices
            .iter()
            .map(|e| (e * &factor).norm_squared() - gamma)
            .fold(f64::INFINITY, f64::min);
        Some(Candidate { factor, rate, worst_slack })
    };

    let (_, vectors) = hermitian_eigen(covariance.matrix());
    let root = psd_sqrt(covariance.matrix());
    let half = std::f64::consts::FRAC_1_SQRT_2;

    let mut best_feasible: Option<Candidate> = None;
    let mut best_any: Option<Candidate> = None;
    let mut consider = |cand: Candidate| {
        if cand.worst_slack >= -tolerance
            && best_feasible.as_ref().is_none_or(|b| cand.rate > b.rate)
        {
            best_feasible = Some(Candidate { factor: cand.factor.clone(), ..cand });
        }
        if best_any.as_ref().is_none_or(|b| cand.rate > b.rate) {
            best_any = Some(cand);
        }
    };

    if let Some(c) = evaluate(vectors.column(0).into_owned()) {
        consider(c);
    }
    for _ in 0..num_samples {
        let v = DVector::from_fn(n, |_, _| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex64::new(half * re, half * im)
        });
        if let Some(c) = evaluate(&root * v) {
            consider(c);
        }
    }

    let (status, chosen) = match (best_feasible, best_any) {
        (Some(c), _) => (SolveStatus::Optimal, c),
        (None, Some(c)) => (SolveStatus::RankOneRecoveryFailed, c),
        (None, None) => {
            return Err(Error::NotPsd("covariance is zero; nothing to randomize".into()));
        }
    };
    let recovered = Covariance::from_factor(chosen.factor);
    let report = SolveReport {
        status,
        relaxed_rate,
        recovered_rate: Some(chosen.rate),
        constraint_slacks: slacks(recovered.matrix(), target_matrices, p_max, gamma)?,
        iterations: num_samples,
        kkt_residual: f64::NAN,
        certificate: None,
    };
    Ok((recovered, report))
}
