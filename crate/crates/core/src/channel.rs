//! Far-field geometric channel between a fluid-antenna base station and a
//! single-antenna user terminal, plus per-target sensing gains.
//!
//! Positions are 2-D coordinates in meters measured from each end's local
//! reference point. A path with elevation `θ` and azimuth `ψ` shifts the
//! propagation distance of an antenna at `(x, y)` by
//! `x·sin θ·cos ψ + y·cos θ`; the response to that path is the unit phasor
//! `exp(j·2π·δ/λ)`.

use std::f64::consts::PI;

use nalgebra::{DVector, RowDVector, Vector2};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{hermitian_part, CMatrix};

pub type Position = Vector2<f64>;

/// Row vector `f(p̄, q)` from the BS antennas to the UT antenna.
pub type ChannelRow = RowDVector<Complex64>;

/// Axis-aligned square movement region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub half_width: f64,
    pub center: [f64; 2],
}

impl Region {
    pub fn new(half_width: f64, center: [f64; 2]) -> Result<Self> {
        if !(half_width > 0.0) {
            return Err(Error::Config(format!(
                "region half width must be positive, got {half_width}"
            )));
        }
        Ok(Self { half_width, center })
    }

    /// Square of side `size` centered at the origin.
    pub fn centered(size: f64) -> Result<Self> {
        Self::new(size / 2.0, [0.0, 0.0])
    }

    pub fn contains(&self, p: &Position) -> bool {
        (0..2).all(|i| {
            p[i] >= self.center[i] - self.half_width && p[i] <= self.center[i] + self.half_width
        })
    }

    /// Projects `p` onto the region.
    pub fn clamp(&self, p: &Position) -> Position {
        Position::new(
            p[0].clamp(self.center[0] - self.half_width, self.center[0] + self.half_width),
            p[1].clamp(self.center[1] - self.half_width, self.center[1] + self.half_width),
        )
    }

    pub fn center(&self) -> Position {
        Position::new(self.center[0], self.center[1])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AntennaLayout {
    pub bs_positions: Vec<Position>,
    pub ut_position: Position,
}

impl AntennaLayout {
    pub fn num_bs(&self) -> usize {
        self.bs_positions.len()
    }

    /// Smallest pairwise distance between BS antennas (`∞` for a single antenna).
    pub fn min_pairwise_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for (a, pa) in self.bs_positions.iter().enumerate() {
            for pb in &self.bs_positions[a + 1..] {
                best = best.min((pa - pb).norm());
            }
        }
        best
    }
}

/// Elevation/azimuth pairs of a set of propagation paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathAngles {
    pub elevation: Vec<f64>,
    pub azimuth: Vec<f64>,
}

impl PathAngles {
    pub fn new(elevation: Vec<f64>, azimuth: Vec<f64>) -> Result<Self> {
        if elevation.len() != azimuth.len() {
            return Err(Error::Dimension(format!(
                "{} elevations vs {} azimuths",
                elevation.len(),
                azimuth.len()
            )));
        }
        if let Some(bad) = elevation.iter().chain(&azimuth).find(|a| !(0.0..=PI).contains(*a)) {
            return Err(Error::Config(format!("path angle {bad} outside [0, π]")));
        }
        Ok(Self { elevation, azimuth })
    }

    pub fn len(&self) -> usize {
        self.elevation.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elevation.is_empty()
    }

    fn sample<R: Rng + ?Sized>(rng: &mut R, paths: usize) -> Self {
        let angle = Uniform::new_inclusive(0.0, PI).expect("valid angle range");
        let elevation = (0..paths).map(|_| angle.sample(rng)).collect();
        let azimuth = (0..paths).map(|_| angle.sample(rng)).collect();
        Self { elevation, azimuth }
    }
}

/// One random problem instance: path geometry, path gains and constants.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub tx_angles: PathAngles,
    pub rx_angles: PathAngles,
    pub target_angles: Vec<PathAngles>,
    /// Path response matrix, `I × D`.
    pub sigma_matrix: CMatrix,
    pub wavelength: f64,
    pub noise_power: f64,
    pub p_max: f64,
    pub gamma: f64,
    pub d_s: f64,
    pub region_bs: Region,
    pub region_ut: Region,
}

impl Scenario {
    pub fn num_targets(&self) -> usize {
        self.target_angles.len()
    }

    /// Checks the scalar constants and the shape of `Σ`.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("wavelength", self.wavelength),
            ("noise_power", self.noise_power),
            ("p_max", self.p_max),
            ("d_s", self.d_s),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !(self.gamma >= 0.0) {
            return Err(Error::Config(format!("gamma must be non-negative, got {}", self.gamma)));
        }
        let (rows, cols) = self.sigma_matrix.shape();
        if rows != self.rx_angles.len() || cols != self.tx_angles.len() {
            return Err(Error::Config(format!(
                "path response matrix is {rows}x{cols}, expected {}x{} (I x D)",
                self.rx_angles.len(),
                self.tx_angles.len()
            )));
        }
        Ok(())
    }

    /// Same instance with a different noise power (SNR sweeps).
    pub fn with_noise_power(&self, noise_power: f64) -> Self {
        Self { noise_power, ..self.clone() }
    }

    /// Same instance restricted to the first `k` targets.
    pub fn with_targets(&self, k: usize) -> Self {
        let mut s = self.clone();
        s.target_angles.truncate(k);
        s
    }

    pub fn with_gamma(&self, gamma: f64) -> Self {
        Self { gamma, ..self.clone() }
    }

    /// `Ê_k` for every target at the given BS positions.
    pub fn target_matrices(&self, bs_positions: &[Position]) -> Vec<CMatrix> {
        self.target_angles
            .iter()
            .map(|angles| response_matrix(bs_positions, angles, self.wavelength))
            .collect()
    }
}

/// Parameters of the random scenario generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub tx_paths: usize,
    pub rx_paths: usize,
    pub num_targets: usize,
    pub target_paths: usize,
    pub rician_tau: f64,
    pub wavelength: f64,
    pub noise_power: f64,
    pub p_max: f64,
    pub gamma: f64,
    pub d_s: f64,
    pub region_size: f64,
    pub diagonal_sigma: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            tx_paths: 3,
            rx_paths: 3,
            num_targets: 2,
            target_paths: 3,
            rician_tau: 1.0,
            wavelength: 1.0,
            noise_power: 0.01,
            p_max: 1.0,
            gamma: 1.0,
            d_s: 0.5,
            region_size: 4.0,
            diagonal_sigma: true,
        }
    }
}

/// Variance of each diagonal entry of `Σ` under the Rician split: the first
/// (line-of-sight) path carries `τ/(τ+1)`, the rest share `1/(τ+1)` evenly.
pub fn rician_variances(tau: f64, paths: usize) -> Result<Vec<f64>> {
    if !(tau > 0.0) {
        return Err(Error::Config(format!("rician factor must be positive, got {tau}")));
    }
    if paths < 2 {
        return Err(Error::Config(format!(
            "rician split needs at least two paths, got {paths}"
        )));
    }
    let mut v = vec![1.0 / ((tau + 1.0) * (paths as f64 - 1.0)); paths];
    v[0] = tau / (tau + 1.0);
    Ok(v)
}

pub fn scenario_sample<R: Rng + ?Sized>(rng: &mut R, config: &ScenarioConfig) -> Result<Scenario> {
    if config.tx_paths == 0 || config.rx_paths == 0 {
        return Err(Error::Config("path counts must be at least 1".into()));
    }
    if config.num_targets > 0 && config.target_paths == 0 {
        return Err(Error::Config("targets need at least one path".into()));
    }
    let variances = if config.diagonal_sigma {
        if config.tx_paths != config.rx_paths {
            return Err(Error::Config(format!(
                "diagonal path response needs D = I, got D = {} and I = {}",
                config.tx_paths, config.rx_paths
            )));
        }
        rician_variances(config.rician_tau, config.tx_paths)?
    } else {
        vec![1.0 / config.tx_paths as f64; config.tx_paths]
    };

    let tx_angles = PathAngles::sample(rng, config.tx_paths);
    let rx_angles = PathAngles::sample(rng, config.rx_paths);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut cn = |var: f64| {
        let s = (var / 2.0).sqrt();
        Complex64::new(s * std_normal.sample(rng), s * std_normal.sample(rng))
    };
    let sigma_matrix = if config.diagonal_sigma {
        let mut m = CMatrix::zeros(config.rx_paths, config.tx_paths);
        for (d, &v) in variances.iter().enumerate() {
            m[(d, d)] = cn(v);
        }
        m
    } else {
        // Unstructured i.i.d. gains, one column-variance per transmit path.
        let mut m = CMatrix::zeros(config.rx_paths, config.tx_paths);
        for d in 0..config.tx_paths {
            for i in 0..config.rx_paths {
                m[(i, d)] = cn(variances[d] / config.rx_paths as f64);
            }
        }
        m
    };
    // Targets come last so that, for a fixed seed, fewer targets give a
    // prefix of the same target set.
    let target_angles = (0..config.num_targets)
        .map(|_| PathAngles::sample(rng, config.target_paths))
        .collect();

    let scenario = Scenario {
        tx_angles,
        rx_angles,
        target_angles,
        sigma_matrix,
        wavelength: config.wavelength,
        noise_power: config.noise_power,
        p_max: config.p_max,
        gamma: config.gamma,
        d_s: config.d_s,
        region_bs: Region::centered(config.region_size)?,
        region_ut: Region::centered(config.region_size)?,
    };
    scenario.validate()?;
    Ok(scenario)
}

pub fn propagation_delta(position: &Position, elevation: f64, azimuth: f64) -> f64 {
    position[0] * elevation.sin() * azimuth.cos() + position[1] * elevation.cos()
}

pub fn response_vector(position: &Position, angles: &PathAngles, wavelength: f64) -> DVector<Complex64> {
    let k = 2.0 * PI / wavelength;
    DVector::from_iterator(
        angles.len(),
        angles
            .elevation
            .iter()
            .zip(&angles.azimuth)
            .map(|(&el, &az)| Complex64::from_polar(1.0, k * propagation_delta(position, el, az))),
    )
}

/// Paths × antennas matrix whose column `n` is the response vector of antenna `n`.
pub fn response_matrix(positions: &[Position], angles: &PathAngles, wavelength: f64) -> CMatrix {
    let mut m = CMatrix::zeros(angles.len(), positions.len());
    for (n, p) in positions.iter().enumerate() {
        m.set_column(n, &response_vector(p, angles, wavelength));
    }
    m
}

/// `f†(q) · Σ · E(p̄)`.
pub fn channel_vector(layout: &AntennaLayout, scenario: &Scenario) -> Result<ChannelRow> {
    let (rows, cols) = scenario.sigma_matrix.shape();
    if rows != scenario.rx_angles.len() || cols != scenario.tx_angles.len() {
        return Err(Error::Config(format!(
            "path response matrix is {rows}x{cols}, expected {}x{}",
            scenario.rx_angles.len(),
            scenario.tx_angles.len()
        )));
    }
    let f_ut = response_vector(&layout.ut_position, &scenario.rx_angles, scenario.wavelength);
    let e_bs = response_matrix(&layout.bs_positions, &scenario.tx_angles, scenario.wavelength);
    let row = f_ut.adjoint() * &scenario.sigma_matrix * e_bs;
    Ok(ChannelRow::from_iterator(row.ncols(), row.iter().copied()))
}

fn check_square(covariance: &CMatrix, n: usize, what: &str) -> Result<()> {
    if covariance.nrows() != n || covariance.ncols() != n {
        return Err(Error::Dimension(format!(
            "{what}: covariance is {}x{}, expected {n}x{n}",
            covariance.nrows(),
            covariance.ncols()
        )));
    }
    Ok(())
}

/// The received SNR numerator `f U f†` on the Hermitian part of `U`.
pub fn quadratic_form(channel: &ChannelRow, covariance: &CMatrix) -> Result<f64> {
    check_square(covariance, channel.len(), "quadratic form")?;
    let u = hermitian_part(covariance);
    let q = (channel * &u * channel.adjoint())[(0, 0)];
    let scale = channel.norm_squared() * u.norm();
    if q.im.abs() > 1e-9 * q.norm().max(scale).max(f64::MIN_POSITIVE) {
        return Err(Error::NotPsd(format!("quadratic form has imaginary residue {}", q.im)));
    }
    if q.re < -1e-9 * scale.max(1.0) {
        return Err(Error::NotPsd(format!("quadratic form is negative: {}", q.re)));
    }
    Ok(q.re.max(0.0))
}

/// `log2(1 + f U f† / σ²)` in bits/s/Hz.
pub fn communication_rate(channel: &ChannelRow, covariance: &CMatrix, noise_power: f64) -> Result<f64> {
    if !(noise_power > 0.0) {
        return Err(Error::Config(format!("noise power must be positive, got {noise_power}")));
    }
    Ok((quadratic_form(channel, covariance)? / noise_power).ln_1p() / std::f64::consts::LN_2)
}

/// `Tr(Ê U Ê†)`, clamped at zero.
pub fn sensing_gain(target_matrix: &CMatrix, covariance: &CMatrix) -> Result<f64> {
    check_square(covariance, target_matrix.ncols(), "sensing gain")?;
    let u = hermitian_part(covariance);
    let g = (target_matrix * u * target_matrix.adjoint()).trace().re;
    Ok(g.max(0.0))
}

/// Relative slack used when comparing a pairwise distance against `D_s`, so
/// that grids placed exactly `D_s` apart are accepted despite rounding.
pub const SPACING_RTOL: f64 = 1e-12;

/// All pairwise BS distances are at least `d_s` (inclusive).
pub fn min_distance_ok(layout: &AntennaLayout, d_s: f64) -> bool {
    layout.min_pairwise_distance() >= d_s * (1.0 - SPACING_RTOL)
}
