//! Alternating optimization of the covariance and the antenna layout.
//!
//! Each outer iteration fixes the covariance from the last accepted layout,
//! lets the DDPG agent search for a better layout, and accepts the agent's
//! best layout only if a fresh covariance solve there succeeds. The reported
//! best rate therefore never decreases across iterations.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::beamforming::{
    gaussian_randomize, solve_covariance, Covariance, InfeasibilityCertificate, SolveReport, SolveStatus, SolverConfig,
};
use crate::channel::{channel_vector, communication_rate, AntennaLayout, Scenario};
use crate::ddpg::{DdpgConfig, DdpgTrainer};
use crate::environment::{fpa_grid, initial_layout, EnvConfig, FasEnv, InitialLayout};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BcdConfig {
    pub num_antennas: usize,
    pub initial_layout: InitialLayout,
    pub max_outer_iters: usize,
    /// Stop once an outer iteration improves the best rate by less than this.
    pub rate_tolerance: f64,
    /// DDPG episodes per outer iteration; 0 disables positioning.
    pub episodes_per_iter: usize,
    pub solver: SolverConfig,
    pub ddpg: DdpgConfig,
    pub env: EnvConfig,
}

impl Default for BcdConfig {
    fn default() -> Self {
        Self {
            num_antennas: 4,
            initial_layout: InitialLayout::FpaGrid,
            max_outer_iters: 10,
            rate_tolerance: 1e-3,
            episodes_per_iter: 10,
            solver: SolverConfig::default(),
            ddpg: DdpgConfig::default(),
            env: EnvConfig::default(),
        }
    }
}

impl BcdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_antennas == 0 {
            return Err(Error::Config("need at least one BS antenna".into()));
        }
        if self.max_outer_iters == 0 {
            return Err(Error::Config("max_outer_iters must be at least 1".into()));
        }
        if !(self.rate_tolerance > 0.0) {
            return Err(Error::Config(format!("rate_tolerance must be positive, got {}", self.rate_tolerance)));
        }
        if self.env.episode_len == 0 {
            return Err(Error::Config("episode length must be positive".into()));
        }
        self.solver.validate()?;
        self.ddpg.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationTrace {
    pub iteration: usize,
    pub status: SolveStatus,
    pub relaxed_rate: f64,
    pub recovered_rate: f64,
    pub sensing_slacks: Vec<f64>,
    /// Whether the layout evaluated in this iteration became the current one.
    pub adopted: bool,
    pub best_rate: f64,
    pub ddpg_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptResult {
    pub status: SolveStatus,
    pub best_layout: AntennaLayout,
    pub best_covariance: Covariance,
    pub best_rate: f64,
    pub best_report: SolveReport,
    pub trace: Vec<IterationTrace>,
    pub certificate: Option<InfeasibilityCertificate>,
    pub ddpg_steps: usize,
}

/// Relaxed solve followed by rank-one recovery at one layout.
pub fn solve_at<R: Rng + ?Sized>(
    layout: &AntennaLayout,
    scenario: &Scenario,
    solver: &SolverConfig,
    rng: &mut R,
) -> Result<(Covariance, SolveReport)> {
    let channel = channel_vector(layout, scenario)?;
    let targets = scenario.target_matrices(&layout.bs_positions);
    let (relaxed, report) =
        solve_covariance(&channel, &targets, scenario.p_max, scenario.gamma, scenario.noise_power, solver)?;
    if report.status != SolveStatus::Optimal {
        return Ok((Covariance::zeros(layout.num_bs()), report));
    }
    let (recovered, mut rank_one) = gaussian_randomize(
        &relaxed,
        &channel,
        &targets,
        scenario.p_max,
        scenario.gamma,
        scenario.noise_power,
        solver.randomization_samples,
        rng,
    )?;
    rank_one.relaxed_rate = report.relaxed_rate;
    rank_one.iterations = report.iterations;
    rank_one.kkt_residual = report.kkt_residual;
    Ok((recovered, rank_one))
}

fn trace_entry(iteration: usize, report: &SolveReport, adopted: bool, best_rate: f64, ddpg_steps: usize) -> IterationTrace {
    IterationTrace {
        iteration,
        status: report.status,
        relaxed_rate: report.relaxed_rate,
        recovered_rate: report.recovered_rate.unwrap_or(0.0),
        sensing_slacks: report.constraint_slacks[1..].to_vec(),
        adopted,
        best_rate,
        ddpg_steps,
    }
}

fn start<R: Rng + ?Sized>(
    layout: AntennaLayout,
    scenario: &Scenario,
    config: &BcdConfig,
    rng: &mut R,
) -> Result<OptResult> {
    let (covariance, report) = solve_at(&layout, scenario, &config.solver, rng)
        .map_err(|e| Error::Invariant(format!("initial covariance solve failed: {e}")))?;
    let feasible = report.status == SolveStatus::Optimal;
    let rate = if report.recovered_rate.is_some() {
        communication_rate(&channel_vector(&layout, scenario)?, covariance.matrix(), scenario.noise_power)?
    } else {
        0.0
    };
    Ok(OptResult {
        status: report.status,
        trace: vec![trace_entry(0, &report, feasible, rate, 0)],
        certificate: report.certificate.clone(),
        best_layout: layout,
        best_covariance: covariance,
        best_rate: rate,
        best_report: report,
        ddpg_steps: 0,
    })
}

/// Fixed-position baseline: one covariance solve on the centered grid.
pub fn fpa_baseline<R: Rng + ?Sized>(scenario: &Scenario, config: &BcdConfig, rng: &mut R) -> Result<OptResult> {
    config.validate()?;
    let layout = fpa_grid(config.num_antennas, scenario)?;
    start(layout, scenario, config, rng)
}

/// Alternates covariance solves and DDPG positioning.
pub fn optimize<R: Rng + ?Sized>(scenario: &Scenario, config: &BcdConfig, rng: &mut R) -> Result<OptResult> {
    config.validate()?;
    scenario.validate()?;
    let layout = initial_layout(config.num_antennas, scenario, config.initial_layout, rng)?;
    let mut result = start(layout, scenario, config, rng)?;
    if result.status != SolveStatus::Optimal || config.episodes_per_iter == 0 {
        return Ok(result);
    }

    let mut current = (result.best_layout.clone(), result.best_covariance.clone());
    let mut trainer: Option<DdpgTrainer> = None;
    for iteration in 1..=config.max_outer_iters {
        let mut env = FasEnv::new(scenario.clone(), current.0.clone(), current.1.clone(), config.env.clone())?;
        let trainer = match &mut trainer {
            Some(t) => t,
            None => trainer.insert(DdpgTrainer::for_env(&env, config.ddpg.clone(), rng)?),
        };
        let steps_before = trainer.total_steps;
        let log = trainer
            .run_episodes(&mut env, config.episodes_per_iter, config.env.episode_len, rng)
            .map_err(|e| Error::Invariant(format!("outer iteration {iteration}: {e}")))?;
        let steps = trainer.total_steps - steps_before;
        result.ddpg_steps += steps;

        let previous_best = result.best_rate;
        let candidate = log.best_snapshot;
        if candidate == current.0 {
            result.trace.push(IterationTrace {
                iteration,
                adopted: false,
                best_rate: result.best_rate,
                ddpg_steps: steps,
                ..result.trace.last().cloned().expect("trace starts non-empty")
            });
            break;
        }
        let (covariance, report) = solve_at(&candidate, scenario, &config.solver, rng)
            .map_err(|e| Error::Invariant(format!("outer iteration {iteration}: {e}")))?;
        let adopted = report.status == SolveStatus::Optimal;
        if adopted {
            let rate =
                communication_rate(&channel_vector(&candidate, scenario)?, covariance.matrix(), scenario.noise_power)?;
            if rate > result.best_rate {
                result.best_rate = rate;
                result.best_layout = candidate.clone();
                result.best_covariance = covariance.clone();
                result.best_report = report.clone();
            }
            current = (candidate, covariance);
        }
        result.trace.push(trace_entry(iteration, &report, adopted, result.best_rate, steps));
        if result.best_rate - previous_best < config.rate_tolerance {
            break;
        }
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beamforming::mrt_beamformer;
    use crate::channel::{min_distance_ok, scenario_sample, ScenarioConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small() -> (Scenario, BcdConfig) {
        let cfg = ScenarioConfig { num_targets: 1, gamma: 0.5, noise_power: 0.1, ..Default::default() };
        let scenario = scenario_sample(&mut ChaCha8Rng::seed_from_u64(8), &cfg).unwrap();
        let bcd = BcdConfig {
            num_antennas: 2,
            max_outer_iters: 2,
            episodes_per_iter: 2,
            env: EnvConfig { episode_len: 20, ..Default::default() },
            ddpg: DdpgConfig {
                actor_hidden: vec![16, 16],
                critic_hidden: vec![16, 16],
                batch_size: 8,
                warmup: 8,
                ..Default::default()
            },
            solver: SolverConfig { randomization_samples: 50, ..Default::default() },
            ..Default::default()
        };
        (scenario, bcd)
    }

    #[test]
    fn zero_budget_matches_baseline() {
        let (scenario, mut cfg) = small();
        cfg.episodes_per_iter = 0;
        cfg.max_outer_iters = 1;
        let a = optimize(&scenario, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = fpa_baseline(&scenario, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.status, SolveStatus::Optimal);
    }

    #[test]
    fn baseline_without_sensing_is_mrt() {
        let (scenario, cfg) = small();
        let scenario = scenario.with_gamma(0.0);
        let out = fpa_baseline(&scenario, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let channel = channel_vector(&out.best_layout, &scenario).unwrap();
        let mrt = mrt_beamformer(&channel, scenario.p_max).unwrap();
        let want = communication_rate(&channel, mrt.matrix(), scenario.noise_power).unwrap();
        assert!((out.best_rate - want).abs() <= 1e-6 * want);
    }

    #[test]
    fn best_rate_is_monotone_and_consistent() {
        let (scenario, cfg) = small();
        let out = optimize(&scenario, &cfg, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        for w in out.trace.windows(2) {
            assert!(w[1].best_rate >= w[0].best_rate);
        }
        let channel = channel_vector(&out.best_layout, &scenario).unwrap();
        let rate = communication_rate(&channel, out.best_covariance.matrix(), scenario.noise_power).unwrap();
        assert!((rate - out.best_rate).abs() <= 1e-9);
        assert!(min_distance_ok(&out.best_layout, scenario.d_s));
        let again = optimize(&scenario, &cfg, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(out, again);
    }

    #[test]
    fn infeasible_start_carries_certificate() {
        let (scenario, cfg) = small();
        let scenario = scenario.with_gamma(1e3);
        let out = optimize(&scenario, &cfg, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(out.status, SolveStatus::Infeasible);
        assert!(out.certificate.is_some());
        assert_eq!(out.best_rate, 0.0);
    }

    #[test]
    fn invalid_config_is_rejected() {
        let (scenario, mut cfg) = small();
        cfg.max_outer_iters = 0;
        assert!(matches!(optimize(&scenario, &cfg, &mut ChaCha8Rng::seed_from_u64(2)), Err(Error::Config(_))));
    }
}
