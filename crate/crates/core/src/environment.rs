//! Antenna-positioning MDP.
//!
//! The state stacks the BS antenna coordinates, the UT coordinates and three
//! spectral features of the (fixed within an episode) transmit covariance.
//! Actions are per-antenna displacements bounded by `A/4` per component.
//! Moves are projected into the movement regions and then screened against
//! the minimum-spacing rule in antenna index order.

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::beamforming::Covariance;
use crate::channel::{
    channel_vector, communication_rate, min_distance_ok, sensing_gain, AntennaLayout, Position, Scenario,
    SPACING_RTOL,
};
use crate::ddpg::{EnvStep, Environment};
use crate::error::{Error, Result};
use crate::linalg::hermitian_eigen;

#[derive(Debug, Clone, PartialEq)]
pub struct MdpState {
    pub vector: Vec<f64>,
}

impl MdpState {
    pub fn dim(num_bs: usize) -> usize {
        2 * (num_bs + 1) + 3
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvAction {
    pub vector: Vec<f64>,
}

impl EnvAction {
    pub fn dim(num_bs: usize) -> usize {
        2 * (num_bs + 1)
    }

    pub fn zeros(num_bs: usize) -> Self {
        Self { vector: vec![0.0; Self::dim(num_bs)] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardWeights {
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self { alpha1: 1.0, alpha2: 1.0, alpha3: 0.1 }
    }
}

/// Which way the constraint penalties point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardSignConvention {
    /// Penalize sensing shortfall `max(0, Γ − ϖ_k)` and excess power
    /// `max(0, Tr(U) − P_max)`.
    #[default]
    Violations,
    /// Penalize `max(0, ϖ_k − Γ)` and `max(0, P_max − Tr(U))`, i.e. the
    /// opposite sign; kept for comparison runs.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialLayout {
    /// Centered grid with `λ/2` spacing.
    FpaGrid,
    /// Uniform rejection sampling until the spacing rule holds.
    RandomValid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub weights: RewardWeights,
    pub episode_len: usize,
    pub reward_sign_convention: RewardSignConvention,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            weights: RewardWeights::default(),
            episode_len: 100,
            reward_sign_convention: RewardSignConvention::Violations,
        }
    }
}

/// Per-step action bound `A/4`, where `A` is the side of the BS region.
pub fn action_bound(scenario: &Scenario) -> f64 {
    scenario.region_bs.half_width / 2.0
}

pub fn build_state(layout: &AntennaLayout, covariance: &Covariance) -> MdpState {
    let mut vector = Vec::with_capacity(MdpState::dim(layout.num_bs()));
    for p in &layout.bs_positions {
        vector.extend([p[0], p[1]]);
    }
    vector.extend([layout.ut_position[0], layout.ut_position[1]]);
    let (values, _) = hermitian_eigen(covariance.matrix());
    let clamped: Vec<f64> = values.iter().map(|v| v.max(0.0)).collect();
    let trace: f64 = clamped.iter().sum();
    let largest = clamped.first().copied().unwrap_or(0.0);
    let mean = trace / clamped.len().max(1) as f64;
    vector.extend([trace, largest, mean]);
    MdpState { vector }
}

fn spacing_ok(a: &Position, b: &Position, d_s: f64) -> bool {
    (a - b).norm() >= d_s * (1.0 - SPACING_RTOL)
}

/// Applies a displacement action.
///
/// Components are clipped to `[−A/4, A/4]` and tentative positions projected
/// into their regions. BS antennas are then settled in index order: antenna
/// `n` keeps its previous position when its tentative one would come within
/// `D_s` of an antenna already settled (indices below `n`, at their new
/// positions) or not yet settled (indices above `n`, at their old positions).
pub fn apply_action(layout: &AntennaLayout, action: &EnvAction, scenario: &Scenario) -> Result<AntennaLayout> {
    let n = layout.num_bs();
    if action.vector.len() != EnvAction::dim(n) {
        return Err(Error::Dimension(format!(
            "action has {} components, expected {}",
            action.vector.len(),
            EnvAction::dim(n)
        )));
    }
    if !min_distance_ok(layout, scenario.d_s) {
        return Err(Error::Invariant(format!(
            "layout violates the minimum spacing {} before the move",
            scenario.d_s
        )));
    }
    let bound = action_bound(scenario);
    let clipped: Vec<f64> = action.vector.iter().map(|a| a.clamp(-bound, bound)).collect();
    let delta = |i: usize| Position::new(clipped[2 * i], clipped[2 * i + 1]);

    let mut next = layout.clone();
    for i in 0..n {
        let tentative = scenario.region_bs.clamp(&(layout.bs_positions[i] + delta(i)));
        let clear = (0..n)
            .filter(|&j| j != i)
            .all(|j| spacing_ok(&tentative, &next.bs_positions[j], scenario.d_s));
        if clear {
            next.bs_positions[i] = tentative;
        }
    }
    next.ut_position = scenario.region_ut.clamp(&(layout.ut_position + delta(n)));
    Ok(next)
}

/// Realized per-antenna displacements `after − before`, as an action vector.
pub fn realized_displacement(before: &AntennaLayout, after: &AntennaLayout) -> EnvAction {
    let mut vector = Vec::with_capacity(EnvAction::dim(before.num_bs()));
    for (a, b) in before.bs_positions.iter().zip(&after.bs_positions) {
        vector.extend([b[0] - a[0], b[1] - a[1]]);
    }
    vector.extend([
        after.ut_position[0] - before.ut_position[0],
        after.ut_position[1] - before.ut_position[1],
    ]);
    EnvAction { vector }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardTerms {
    pub total: f64,
    pub rate: f64,
    pub sensing_gains: Vec<f64>,
    pub sensing_penalty: f64,
    pub power_penalty: f64,
    pub movement_penalty: f64,
}

pub fn reward_terms(
    layout: &AntennaLayout,
    covariance: &Covariance,
    scenario: &Scenario,
    weights: &RewardWeights,
    realized: &EnvAction,
    convention: RewardSignConvention,
) -> Result<RewardTerms> {
    let n = layout.num_bs();
    if realized.vector.len() != EnvAction::dim(n) {
        return Err(Error::Dimension("displacement length does not match layout".into()));
    }
    let channel = channel_vector(layout, scenario)?;
    let rate = communication_rate(&channel, covariance.matrix(), scenario.noise_power)?;
    let sensing_gains = scenario
        .target_matrices(&layout.bs_positions)
        .iter()
        .map(|e| sensing_gain(e, covariance.matrix()))
        .collect::<Result<Vec<_>>>()?;
    let trace = covariance.trace();
    let (shortfall, power_excess) = match convention {
        RewardSignConvention::Violations => (
            sensing_gains.iter().map(|g| (scenario.gamma - g).max(0.0)).sum::<f64>(),
            (trace - scenario.p_max).max(0.0),
        ),
        RewardSignConvention::Literal => (
            sensing_gains.iter().map(|g| (g - scenario.gamma).max(0.0)).sum::<f64>(),
            (scenario.p_max - trace).max(0.0),
        ),
    };
    let movement: f64 = realized
        .vector
        .chunks(2)
        .map(|d| d[0].hypot(d[1]))
        .sum::<f64>()
        / (n + 1) as f64;
    let sensing_penalty = weights.alpha1 * shortfall;
    let power_penalty = weights.alpha2 * power_excess;
    let movement_penalty = weights.alpha3 * movement;
    Ok(RewardTerms {
        total: rate - sensing_penalty - power_penalty - movement_penalty,
        rate,
        sensing_gains,
        sensing_penalty,
        power_penalty,
        movement_penalty,
    })
}

/// Penalized reward at the post-move `layout` given the realized displacement.
pub fn reward(
    layout: &AntennaLayout,
    covariance: &Covariance,
    scenario: &Scenario,
    weights: &RewardWeights,
    realized: &EnvAction,
) -> Result<f64> {
    Ok(reward_terms(layout, covariance, scenario, weights, realized, RewardSignConvention::Violations)?.total)
}

/// Centered `λ/2` grid of `n` antennas, filled row by row.
pub fn fpa_grid(n: usize, scenario: &Scenario) -> Result<AntennaLayout> {
    if n == 0 {
        return Err(Error::Config("need at least one BS antenna".into()));
    }
    let cols = (n as f64).sqrt().ceil() as usize;
    let rows = n.div_ceil(cols);
    let spacing = scenario.wavelength / 2.0;
    let center = scenario.region_bs.center();
    let bs_positions: Vec<Position> = (0..n)
        .map(|i| {
            let (r, c) = (i / cols, i % cols);
            center
                + Position::new(
                    (c as f64 - (cols as f64 - 1.0) / 2.0) * spacing,
                    (r as f64 - (rows as f64 - 1.0) / 2.0) * spacing,
                )
        })
        .collect();
    if let Some(p) = bs_positions.iter().find(|p| !scenario.region_bs.contains(p)) {
        return Err(Error::Config(format!(
            "a {rows}x{cols} grid with spacing {spacing} does not fit the BS region (antenna at {:?})",
            (p[0], p[1])
        )));
    }
    let layout = AntennaLayout { bs_positions, ut_position: scenario.region_ut.center() };
    if !min_distance_ok(&layout, scenario.d_s) {
        return Err(Error::Config(format!(
            "grid spacing {spacing} is below the minimum spacing {}",
            scenario.d_s
        )));
    }
    Ok(layout)
}

pub const MAX_LAYOUT_ATTEMPTS: usize = 10_000;

pub fn random_valid_layout<R: Rng + ?Sized>(n: usize, scenario: &Scenario, rng: &mut R) -> Result<AntennaLayout> {
    let r = &scenario.region_bs;
    let xs = Uniform::new_inclusive(r.center[0] - r.half_width, r.center[0] + r.half_width)
        .map_err(|e| Error::Config(e.to_string()))?;
    let ys = Uniform::new_inclusive(r.center[1] - r.half_width, r.center[1] + r.half_width)
        .map_err(|e| Error::Config(e.to_string()))?;
    for _ in 0..MAX_LAYOUT_ATTEMPTS {
        let layout = AntennaLayout {
            bs_positions: (0..n).map(|_| Position::new(xs.sample(rng), ys.sample(rng))).collect(),
            ut_position: scenario.region_ut.center(),
        };
        if min_distance_ok(&layout, scenario.d_s) {
            return Ok(layout);
        }
    }
    Err(Error::Config(format!(
        "no valid layout of {n} antennas with spacing {} after {MAX_LAYOUT_ATTEMPTS} attempts",
        scenario.d_s
    )))
}

pub fn initial_layout<R: Rng + ?Sized>(
    n: usize,
    scenario: &Scenario,
    policy: InitialLayout,
    rng: &mut R,
) -> Result<AntennaLayout> {
    match policy {
        InitialLayout::FpaGrid => fpa_grid(n, scenario),
        InitialLayout::RandomValid => random_valid_layout(n, scenario, rng),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violations {
    pub sensing: Vec<bool>,
    pub power: bool,
    pub region: bool,
    pub spacing: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next_state: MdpState,
    pub reward: f64,
    pub rate: f64,
    pub sensing_gains: Vec<f64>,
    pub violated: Violations,
    pub done: bool,
}

/// One positioning episode with a fixed covariance.
#[derive(Debug, Clone)]
pub struct FasEnv {
    scenario: Scenario,
    start: AntennaLayout,
    layout: AntennaLayout,
    covariance: Covariance,
    config: EnvConfig,
    steps: usize,
}

impl FasEnv {
    pub fn new(scenario: Scenario, start: AntennaLayout, covariance: Covariance, config: EnvConfig) -> Result<Self> {
        if covariance.dim() != start.num_bs() {
            return Err(Error::Dimension(format!(
                "covariance is {0}x{0} for {1} antennas",
                covariance.dim(),
                start.num_bs()
            )));
        }
        if config.episode_len == 0 {
            return Err(Error::Config("episode length must be positive".into()));
        }
        if !min_distance_ok(&start, scenario.d_s) {
            return Err(Error::Invariant("start layout violates the minimum spacing".into()));
        }
        Ok(Self { layout: start.clone(), start, scenario, covariance, config, steps: 0 })
    }

    pub fn layout(&self) -> &AntennaLayout {
        &self.layout
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn covariance(&self) -> &Covariance {
        &self.covariance
    }

    pub fn state(&self) -> MdpState {
        build_state(&self.layout, &self.covariance)
    }

    pub fn reset_to_start(&mut self) -> MdpState {
        self.layout = self.start.clone();
        self.steps = 0;
        self.state()
    }

    pub fn step_action(&mut self, action: &EnvAction) -> Result<StepResult> {
        let next = apply_action(&self.layout, action, &self.scenario)?;
        let realized = realized_displacement(&self.layout, &next);
        let terms = reward_terms(
            &next,
            &self.covariance,
            &self.scenario,
            &self.config.weights,
            &realized,
            self.config.reward_sign_convention,
        )?;
        let region = !next.bs_positions.iter().all(|p| self.scenario.region_bs.contains(p))
            || !self.scenario.region_ut.contains(&next.ut_position);
        let spacing = !min_distance_ok(&next, self.scenario.d_s);
        if region || spacing {
            return Err(Error::Invariant("move left the feasible layout set".into()));
        }
        let violated = Violations {
            sensing: terms.sensing_gains.iter().map(|g| *g < self.scenario.gamma).collect(),
            power: self.covariance.trace() > self.scenario.p_max,
            region,
            spacing,
        };
        self.layout = next;
        self.steps += 1;
        Ok(StepResult {
            next_state: self.state(),
            reward: terms.total,
            rate: terms.rate,
            sensing_gains: terms.sensing_gains,
            violated,
            done: self.steps >= self.config.episode_len,
        })
    }

    /// Reward of staying put at the current layout.
    pub fn standing_reward(&self) -> Result<f64> {
        let zero = EnvAction::zeros(self.layout.num_bs());
        Ok(reward_terms(
            &self.layout,
            &self.covariance,
            &self.scenario,
            &self.config.weights,
            &zero,
            self.config.reward_sign_convention,
        )?
        .total)
    }
}

impl Environment for FasEnv {
    type Snapshot = AntennaLayout;

    fn state_dim(&self) -> usize {
        MdpState::dim(self.layout.num_bs())
    }

    fn action_dim(&self) -> usize {
        EnvAction::dim(self.layout.num_bs())
    }

    fn action_bound(&self) -> f64 {
        action_bound(&self.scenario)
    }

    fn reset(&mut self) -> Result<Vec<f64>> {
        Ok(self.reset_to_start().vector)
    }

    fn step(&mut self, action: &[f64]) -> Result<EnvStep> {
        let out = self.step_action(&EnvAction { vector: action.to_vec() })?;
        let min_slack = out
            .sensing_gains
            .iter()
            .map(|g| g - self.scenario.gamma)
            .fold(f64::INFINITY, f64::min);
        Ok(EnvStep {
            next_state: out.next_state.vector,
            reward: out.reward,
            done: out.done,
            rate: out.rate,
            min_slack,
        })
    }

    fn snapshot(&self) -> AntennaLayout {
        self.layout.clone()
    }

    fn current_reward(&self) -> Result<f64> {
        self.standing_reward()
    }
}
