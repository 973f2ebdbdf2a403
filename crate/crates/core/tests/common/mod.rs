//! Helpers shared by the integration tests.
#![allow(dead_code)]

pub mod gradcheck;

use fas_isac::beamforming::{solve_covariance, SolveStatus, SolverConfig};
use fas_isac::channel::{
    channel_vector, min_distance_ok, scenario_sample, AntennaLayout, ChannelRow, Position, Region, Scenario,
    ScenarioConfig,
};
use fas_isac::linalg::CMatrix;
use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn cn<R: Rng>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) / 2f64.sqrt()
}

pub fn random_channel<R: Rng>(rng: &mut R, n: usize) -> ChannelRow {
    ChannelRow::from_fn(n, |_, _| cn(rng))
}

pub fn random_vector<R: Rng>(rng: &mut R, n: usize) -> DVector<Complex64> {
    DVector::from_fn(n, |_, _| cn(rng))
}

/// `B B†` for a random square `B`, rescaled to the given trace.
pub fn random_psd<R: Rng>(rng: &mut R, n: usize, trace: f64) -> CMatrix {
    let b = CMatrix::from_fn(n, n, |_, _| cn(rng));
    let u = &b * b.adjoint();
    let t = u.trace().re;
    u.scale(trace / t)
}

pub fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| cn(rng))
}

pub fn scenario(seed: u64, config: &ScenarioConfig) -> Scenario {
    scenario_sample(&mut rng(seed), config).unwrap()
}

/// `Tr(A U A†)` by explicit loops.
pub fn naive_gain(a: &CMatrix, u: &CMatrix) -> f64 {
    let mut total = Complex64::new(0.0, 0.0);
    for p in 0..a.nrows() {
        for i in 0..a.ncols() {
            for j in 0..a.ncols() {
                total += a[(p, i)] * u[(i, j)] * a[(p, j)].conj();
            }
        }
    }
    total.re
}

/// `log2(1 + f U f† / σ²)` by explicit loops.
pub fn naive_rate(f: &ChannelRow, u: &CMatrix, noise: f64) -> f64 {
    let mut q = Complex64::new(0.0, 0.0);
    for i in 0..f.len() {
        for j in 0..f.len() {
            q += f[i] * u[(i, j)] * f[j].conj();
        }
    }
    (1.0 + q.re / noise).log2()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

/// Single-target instance on a `side × side` BS region with the UT pinned
/// at the origin, so that only the BS antennas move.
pub fn pinned_ut_instance(seed: u64, side: f64, gamma: f64) -> Scenario {
    let cfg = ScenarioConfig { num_targets: 1, gamma, noise_power: 0.1, region_size: side, ..Default::default() };
    let mut s = scenario(seed, &cfg);
    s.region_ut = Region::new(1e-9, [0.0, 0.0]).unwrap();
    s
}

/// Best relaxed rate over every spacing-valid pair of BS positions drawn
/// from a `points × points` grid spanning the BS region.
pub fn pair_grid_oracle(s: &Scenario, points: usize, solver: &SolverConfig) -> f64 {
    let r = &s.region_bs;
    let axis = |c: f64| -> Vec<f64> {
        (0..points).map(|i| c - r.half_width + 2.0 * r.half_width * i as f64 / (points - 1) as f64).collect()
    };
    let (xs, ys) = (axis(r.center[0]), axis(r.center[1]));
    let grid: Vec<Position> = xs.iter().flat_map(|&x| ys.iter().map(move |&y| Position::new(x, y))).collect();
    let mut best = 0.0f64;
    for i in 0..grid.len() {
        for j in i + 1..grid.len() {
            let layout = AntennaLayout { bs_positions: vec![grid[i], grid[j]], ut_position: s.region_ut.center() };
            if !min_distance_ok(&layout, s.d_s) {
                continue;
            }
            let f = channel_vector(&layout, s).unwrap();
            let targets = s.target_matrices(&layout.bs_positions);
            let (_, rep) = solve_covariance(&f, &targets, s.p_max, s.gamma, s.noise_power, solver).unwrap();
            if rep.status == SolveStatus::Optimal {
                best = best.max(rep.relaxed_rate);
            }
        }
    }
    best
}
