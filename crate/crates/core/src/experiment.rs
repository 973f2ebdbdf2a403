//! Experiment harness: configuration files, seeded scenario sweeps, result
//! tables and their CSV / JSON / SVG renderings.
//!
//! Seeds are derived with splitmix64. Scenario `s` under master seed `m`
//! uses `splitmix64(m ^ splitmix64(s))`; its run at SNR index `j` uses
//! `splitmix64(scenario_seed + j + 1)` (wrapping), shared by both methods so
//! that the FPA baseline and the BCD start from identical random streams.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bcd::{fpa_baseline, optimize, solve_at, BcdConfig, OptResult};
use crate::beamforming::{SolveStatus, SolverConfig};
use crate::channel::{channel_vector, communication_rate, scenario_sample, AntennaLayout, Scenario, ScenarioConfig};
use crate::ddpg::{DdpgAgent, DdpgConfig, DdpgTrainer, Environment, TrainingLog};
use crate::environment::{EnvConfig, FasEnv, InitialLayout};
use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 8] = [
    "scenario_id",
    "method",
    "snr_db",
    "rate_bps_hz",
    "relaxed_rate_bps_hz",
    "min_sensing_slack",
    "wall_time_s",
    "seed",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BcdSettings {
    pub initial_layout: InitialLayout,
    pub max_outer_iters: usize,
    pub rate_tolerance: f64,
    pub episodes_per_iter: usize,
}

impl Default for BcdSettings {
    fn default() -> Self {
        let d = BcdConfig::default();
        Self {
            initial_layout: d.initial_layout,
            max_outer_iters: d.max_outer_iters,
            rate_tolerance: d.rate_tolerance,
            episodes_per_iter: d.episodes_per_iter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub num_antennas: usize,
    pub num_targets: usize,
    pub tx_paths: usize,
    pub rx_paths: usize,
    pub target_paths: usize,
    pub wavelength: f64,
    pub snr_db: Vec<f64>,
    pub p_max: f64,
    pub rician_tau: f64,
    pub gamma: f64,
    /// Minimum antenna spacing; half a wavelength when absent.
    pub d_s: Option<f64>,
    /// Side of the square movement regions; four wavelengths when absent.
    pub region_size: Option<f64>,
    pub num_scenarios: usize,
    pub master_seed: u64,
    pub run_fas: bool,
    pub run_fpa: bool,
    /// Worker threads for the scenario pool; 0 picks the rayon default.
    pub threads: usize,
    /// Write measured run times to the CSV. Off by default so that the CSV
    /// depends only on the configuration.
    pub record_wall_time: bool,
    pub bcd: BcdSettings,
    pub solver: SolverConfig,
    pub ddpg: DdpgConfig,
    pub env: EnvConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            num_antennas: 4,
            num_targets: 2,
            tx_paths: 3,
            rx_paths: 3,
            target_paths: 3,
            wavelength: 1.0,
            snr_db: vec![0.0, 10.0, 20.0, 30.0],
            p_max: 1.0,
            rician_tau: 1.0,
            gamma: 1.0,
            d_s: None,
            region_size: None,
            num_scenarios: 20,
            master_seed: 2024,
            run_fas: true,
            run_fpa: true,
            threads: 0,
            record_wall_time: false,
            bcd: BcdSettings::default(),
            solver: SolverConfig::default(),
            ddpg: DdpgConfig::default(),
            env: EnvConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn d_s(&self) -> f64 {
        self.d_s.unwrap_or(self.wavelength / 2.0)
    }

    pub fn region_size(&self) -> f64 {
        self.region_size.unwrap_or(4.0 * self.wavelength)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        for (name, v) in [
            ("num_antennas", self.num_antennas),
            ("num_targets", self.num_targets),
            ("tx_paths", self.tx_paths),
            ("rx_paths", self.rx_paths),
            ("target_paths", self.target_paths),
            ("num_scenarios", self.num_scenarios),
        ] {
            if v == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        if self.snr_db.is_empty() {
            return bad("snr_db must list at least one value".into());
        }
        if let Some(s) = self.snr_db.iter().find(|s| !s.is_finite()) {
            return bad(format!("snr_db entries must be finite, got {s}"));
        }
        if !self.run_fas && !self.run_fpa {
            return bad("at least one of run_fas and run_fpa must be enabled".into());
        }
        for (name, v) in [
            ("wavelength", self.wavelength),
            ("p_max", self.p_max),
            ("rician_tau", self.rician_tau),
            ("d_s", self.d_s()),
            ("region_size", self.region_size()),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad(format!("gamma must be non-negative, got {}", self.gamma));
        }
        if self.tx_paths != self.rx_paths {
            return bad(format!(
                "the diagonal path response needs tx_paths = rx_paths, got {} and {}",
                self.tx_paths, self.rx_paths
            ));
        }
        if self.tx_paths < 2 {
            return bad("the rician split needs at least two paths".into());
        }
        self.bcd_config().validate()
    }

    /// `σ² = P_max / 10^(snr/10)`.
    pub fn noise_power(&self, snr_db: f64) -> f64 {
        self.p_max / 10f64.powf(snr_db / 10.0)
    }

    pub fn scenario_config(&self) -> ScenarioConfig {
        ScenarioConfig {
            tx_paths: self.tx_paths,
            rx_paths: self.rx_paths,
            num_targets: self.num_targets,
            target_paths: self.target_paths,
            rician_tau: self.rician_tau,
            wavelength: self.wavelength,
            noise_power: self.noise_power(self.snr_db[0]),
            p_max: self.p_max,
            gamma: self.gamma,
            d_s: self.d_s(),
            region_size: self.region_size(),
            diagonal_sigma: true,
        }
    }

    pub fn bcd_config(&self) -> BcdConfig {
        BcdConfig {
            num_antennas: self.num_antennas,
            initial_layout: self.bcd.initial_layout,
            max_outer_iters: self.bcd.max_outer_iters,
            rate_tolerance: self.bcd.rate_tolerance,
            episodes_per_iter: self.bcd.episodes_per_iter,
            solver: self.solver.clone(),
            ddpg: self.ddpg.clone(),
            env: self.env.clone(),
        }
    }

    /// Hex SHA-256 of the canonical JSON form of the configuration.
    pub fn config_hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("configuration serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    /// Scenario `id` at the first SNR; use [`Scenario::with_noise_power`]
    /// for the others.
    pub fn scenario(&self, id: usize) -> Result<Scenario> {
        let mut rng = ChaCha8Rng::seed_from_u64(scenario_seed(self.master_seed, id as u64));
        scenario_sample(&mut rng, &self.scenario_config())
    }
}

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn scenario_seed(master_seed: u64, scenario_id: u64) -> u64 {
    splitmix64(master_seed ^ splitmix64(scenario_id))
}

pub fn run_seed(scenario_seed: u64, snr_index: usize) -> u64 {
    splitmix64(scenario_seed.wrapping_add(snr_index as u64 + 1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    FasBcdDrl,
    Fpa,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::FasBcdDrl => "fas_bcd_drl",
            Method::Fpa => "fpa",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "fas_bcd_drl" => Ok(Method::FasBcdDrl),
            "fpa" => Ok(Method::Fpa),
            other => Err(Error::Config(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scenario_id: usize,
    pub method: Method,
    pub snr_db: f64,
    pub rate: f64,
    pub relaxed_rate: f64,
    pub min_sensing_slack: Option<f64>,
    pub wall_time_s: f64,
    pub seed: u64,
    /// `ok`, a solver status, or `error: ...`.
    pub status: String,
    pub sensing_slacks: Vec<f64>,
    pub outer_iterations: usize,
    pub ddpg_steps: usize,
    pub measured_wall_time_s: f64,
}

impl ResultRow {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub method: Method,
    pub snr_db: f64,
    pub mean_rate: f64,
    pub max_rate: f64,
    pub rows: usize,
    pub ok_rows: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
    pub aggregates: Vec<Aggregate>,
}

impl ResultTable {
    pub fn from_rows(mut rows: Vec<ResultRow>) -> Self {
        sort_rows(&mut rows);
        let aggregates = aggregate(&rows);
        Self { rows, aggregates }
    }

    pub fn failed_rows(&self) -> usize {
        self.rows.iter().filter(|r| !r.is_ok()).count()
    }
}

fn sort_rows(rows: &mut [ResultRow]) {
    rows.sort_by(|a, b| {
        a.scenario_id
            .cmp(&b.scenario_id)
            .then(a.snr_db.total_cmp(&b.snr_db))
            .then(a.method.cmp(&b.method))
    });
}

/// Mean and maximum rate per (method, SNR) over every row, failed rows
/// counting with rate 0.
pub fn aggregate(rows: &[ResultRow]) -> Vec<Aggregate> {
    let mut groups: BTreeMap<(Method, u64), Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        // Order SNR keys numerically via the sortable bit pattern.
        let bits = r.snr_db.to_bits();
        let key = if r.snr_db.is_sign_negative() { !bits } else { bits | (1 << 63) };
        groups.entry((r.method, key)).or_default().push(r);
    }
    groups
        .into_values()
        .map(|g| Aggregate {
            method: g[0].method,
            snr_db: g[0].snr_db,
            mean_rate: g.iter().map(|r| r.rate).sum::<f64>() / g.len() as f64,
            max_rate: g.iter().map(|r| r.rate).fold(f64::NEG_INFINITY, f64::max),
            rows: g.len(),
            ok_rows: g.iter().filter(|r| r.is_ok()).count(),
        })
        .collect()
}

fn row_from_result(
    id: usize,
    method: Method,
    snr_db: f64,
    seed: u64,
    result: Result<OptResult>,
    elapsed: f64,
    record_wall_time: bool,
) -> ResultRow {
    let wall_time_s = if record_wall_time { elapsed } else { 0.0 };
    match result {
        Ok(r) => {
            let ok = r.status == SolveStatus::Optimal;
            let slacks = r.best_report.constraint_slacks[1..].to_vec();
            ResultRow {
                scenario_id: id,
                method,
                snr_db,
                rate: if ok { r.best_rate } else { 0.0 },
                relaxed_rate: r.best_report.relaxed_rate,
                min_sensing_slack: slacks.iter().copied().reduce(f64::min),
                wall_time_s,
                seed,
                status: if ok { "ok".into() } else { r.status.as_str().into() },
                sensing_slacks: slacks,
                outer_iterations: r.trace.len() - 1,
                ddpg_steps: r.ddpg_steps,
                measured_wall_time_s: elapsed,
            }
        }
        Err(e) => ResultRow {
            scenario_id: id,
            method,
            snr_db,
            rate: 0.0,
            relaxed_rate: 0.0,
            min_sensing_slack: None,
            wall_time_s,
            seed,
            status: format!("error: {e}"),
            sensing_slacks: Vec::new(),
            outer_iterations: 0,
            ddpg_steps: 0,
            measured_wall_time_s: elapsed,
        },
    }
}

/// Runs the enabled methods for one scenario at one SNR index.
pub fn run_scenario(config: &ExperimentConfig, id: usize, snr_index: usize) -> Vec<ResultRow> {
    let snr_db = config.snr_db[snr_index];
    let s_seed = scenario_seed(config.master_seed, id as u64);
    let seed = run_seed(s_seed, snr_index);
    let bcd = config.bcd_config();
    let scenario = config.scenario(id).map(|s| s.with_noise_power(config.noise_power(snr_db)));
    let mut rows = Vec::new();
    let methods = [(Method::Fpa, config.run_fpa), (Method::FasBcdDrl, config.run_fas)];
    for (method, enabled) in methods {
        if !enabled {
            continue;
        }
        let started = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let result = scenario.as_ref().map_err(|e| Error::Config(e.to_string())).and_then(|s| match method {
            Method::Fpa => fpa_baseline(s, &bcd, &mut rng),
            Method::FasBcdDrl => optimize(s, &bcd, &mut rng),
        });
        let elapsed = started.elapsed().as_secs_f64();
        rows.push(row_from_result(id, method, snr_db, seed, result, elapsed, config.record_wall_time));
    }
    rows
}

/// Every (scenario, SNR) pair on a bounded worker pool, merged in a fixed
/// order.
pub fn run_sweep(config: &ExperimentConfig) -> Result<ResultTable> {
    config.validate()?;
    let jobs: Vec<(usize, usize)> = (0..config.num_scenarios)
        .flat_map(|id| (0..config.snr_db.len()).map(move |j| (id, j)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
    let rows: Vec<ResultRow> = pool.install(|| {
        jobs.par_iter()
            .flat_map_iter(|&(id, j)| run_scenario(config, id, j))
            .collect()
    });
    Ok(ResultTable::from_rows(rows))
}

fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

pub fn write_csv<W: Write>(w: W, rows: &[ResultRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    out.write_record(CSV_HEADER).map_err(io)?;
    for r in rows {
        out.write_record([
            r.scenario_id.to_string(),
            r.method.as_str().to_string(),
            fmt_f64(r.snr_db),
            fmt_f64(r.rate),
            fmt_f64(r.relaxed_rate),
            r.min_sensing_slack.map(fmt_f64).unwrap_or_default(),
            fmt_f64(r.wall_time_s),
            r.seed.to_string(),
        ])
        .map_err(io)?;
    }
    out.flush()?;
    Ok(())
}

/// The CSV subset of a row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub scenario_id: usize,
    pub method: Method,
    pub snr_db: f64,
    pub rate: f64,
    pub relaxed_rate: f64,
    pub min_sensing_slack: Option<f64>,
    pub wall_time_s: f64,
    pub seed: u64,
}

impl From<&ResultRow> for CsvRow {
    fn from(r: &ResultRow) -> Self {
        Self {
            scenario_id: r.scenario_id,
            method: r.method,
            snr_db: r.snr_db,
            rate: r.rate,
            relaxed_rate: r.relaxed_rate,
            min_sensing_slack: r.min_sensing_slack,
            wall_time_s: r.wall_time_s,
            seed: r.seed,
        }
    }
}

impl CsvRow {
    /// A full row with the fields the CSV does not carry left empty.
    pub fn into_row(self) -> ResultRow {
        ResultRow {
            scenario_id: self.scenario_id,
            method: self.method,
            snr_db: self.snr_db,
            rate: self.rate,
            relaxed_rate: self.relaxed_rate,
            min_sensing_slack: self.min_sensing_slack,
            wall_time_s: self.wall_time_s,
            seed: self.seed,
            status: String::new(),
            sensing_slacks: Vec::new(),
            outer_iterations: 0,
            ddpg_steps: 0,
            measured_wall_time_s: self.wall_time_s,
        }
    }
}

pub fn read_csv<R: Read>(r: R) -> Result<Vec<CsvRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers().map_err(|e| Error::Config(format!("CSV header: {e}")))?;
    if headers.iter().ne(CSV_HEADER) {
        return Err(Error::Config(format!("unexpected CSV header {headers:?}")));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Config(format!("CSV record {}: {e}", i + 1)))?;
        let field = |k: usize| rec.get(k).unwrap_or_default();
        let ctx = |k: usize| Error::Config(format!("CSV record {}: bad {} {:?}", i + 1, CSV_HEADER[k], field(k)));
        let num = |k: usize| field(k).parse::<f64>().map_err(|_| ctx(k));
        rows.push(CsvRow {
            scenario_id: field(0).parse().map_err(|_| ctx(0))?,
            method: Method::parse(field(1))?,
            snr_db: num(2)?,
            rate: num(3)?,
            relaxed_rate: num(4)?,
            min_sensing_slack: if field(5).is_empty() { None } else { Some(num(5)?) },
            wall_time_s: num(6)?,
            seed: field(7).parse().map_err(|_| ctx(7))?,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Serialize)]
struct Envelope<'a> {
    config: &'a ExperimentConfig,
    config_hash: String,
    rows: &'a [ResultRow],
    aggregates: &'a [Aggregate],
    version: &'static str,
    timestamp: String,
    metadata: BTreeMap<&'static str, String>,
}

pub fn write_json<W: Write>(w: W, config: &ExperimentConfig, table: &ResultTable) -> Result<()> {
    let mut metadata = BTreeMap::new();
    metadata.insert("seed_derivation", "scenario: splitmix64(master ^ splitmix64(id)); run: splitmix64(scenario + snr_index + 1)".into());
    metadata.insert("aggregation", "mean and max of rate per (method, snr_db) over all scenarios; failed rows count as 0".into());
    metadata.insert("agent_warm_start", "true".into());
    metadata.insert("noise_power", "p_max / 10^(snr_db / 10)".into());
    let env = Envelope {
        config,
        config_hash: config.config_hash(),
        rows: &table.rows,
        aggregates: &table.aggregates,
        version: env!("CARGO_PKG_VERSION"),
        timestamp: chrono::Utc::now().to_rfc3339(),
        metadata,
    };
    serde_json::to_writer_pretty(w, &env).map_err(|e| Error::Io(std::io::Error::other(e)))
}

fn escape_xml(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Line plot of the mean rate against SNR, one polyline per method, with
/// dashed lines for the maxima.
pub fn render_svg(table: &ResultTable, config_hash: &str) -> String {
    let (w, h, margin) = (640.0, 420.0, 60.0);
    let aggs = &table.aggregates;
    let xs: Vec<f64> = aggs.iter().map(|a| a.snr_db).collect();
    let ys: Vec<f64> = aggs.iter().flat_map(|a| [a.mean_rate, a.max_rate]).collect();
    let (x0, x1) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let y1 = ys.iter().copied().fold(0.0, f64::max).max(1e-9);
    let span = if x1 > x0 { x1 - x0 } else { 1.0 };
    let px = |x: f64| margin + (x - x0) / span * (w - 2.0 * margin);
    let py = |y: f64| h - margin - y / y1 * (h - 2.0 * margin);

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, "  <desc>config_hash={}</desc>", escape_xml(config_hash));
    let _ = writeln!(s, r#"  <rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"  <line x1="{m}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/>"#,
        m = margin,
        b = h - margin,
        r = w - margin
    );
    let _ = writeln!(s, r#"  <line x1="{m}" y1="{m}" x2="{m}" y2="{b}" stroke="black"/>"#, m = margin, b = h - margin);
    let _ = writeln!(
        s,
        r#"  <text x="{}" y="{}" text-anchor="middle" font-size="14">SNR (dB)</text>"#,
        w / 2.0,
        h - 15.0
    );
    let _ = writeln!(
        s,
        r#"  <text x="18" y="{}" text-anchor="middle" font-size="14" transform="rotate(-90 18 {})">Rate (bit/s/Hz)</text>"#,
        h / 2.0,
        h / 2.0
    );
    let mut snrs = xs.clone();
    snrs.sort_by(f64::total_cmp);
    snrs.dedup();
    for x in &snrs {
        let _ = writeln!(
            s,
            r#"  <text x="{:.2}" y="{}" text-anchor="middle" font-size="11">{x}</text>"#,
            px(*x),
            h - margin + 16.0
        );
    }
    for k in 0..=4 {
        let y = y1 * k as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"  <text x="{}" y="{:.2}" text-anchor="end" font-size="11">{y:.2}</text>"#,
            margin - 6.0,
            py(y) + 4.0
        );
    }
    let styles = [(Method::FasBcdDrl, "#1f77b4"), (Method::Fpa, "#d62728")];
    for (i, (method, color)) in styles.iter().enumerate() {
        let series: Vec<&Aggregate> = aggs.iter().filter(|a| a.method == *method).collect();
        if series.is_empty() {
            continue;
        }
        for (field, dash) in [(0, ""), (1, r#" stroke-dasharray="6 4""#)] {
            let pts: Vec<String> = series
                .iter()
                .map(|a| {
                    let y = if field == 0 { a.mean_rate } else { a.max_rate };
                    format!("{:.2},{:.2}", px(a.snr_db), py(y))
                })
                .collect();
            let _ = writeln!(
                s,
                r#"  <polyline fill="none" stroke="{color}" stroke-width="2"{dash} points="{}"/>"#,
                pts.join(" ")
            );
        }
        let ly = margin + 18.0 * i as f64;
        let _ = writeln!(
            s,
            r#"  <text x="{}" y="{ly}" font-size="12" fill="{color}">{} (solid: mean, dashed: max)</text>"#,
            margin + 10.0,
            method.as_str()
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Writes `results.csv`, `results.json` and `results.svg` into `dir`.
pub fn emit_results(dir: &Path, config: &ExperimentConfig, table: &ResultTable) -> Result<()> {
    if table.rows.is_empty() {
        return Err(Error::Config("nothing to emit: the result table is empty".into()));
    }
    std::fs::create_dir_all(dir)?;
    write_csv(std::fs::File::create(dir.join("results.csv"))?, &table.rows)?;
    write_json(std::io::BufWriter::new(std::fs::File::create(dir.join("results.json"))?), config, table)?;
    std::fs::write(dir.join("results.svg"), render_svg(table, &config.config_hash()))?;
    Ok(())
}

/// Trains an agent on scenario `id` at `snr_db`, starting from the FPA grid
/// with the FPA covariance held fixed.
pub fn train_agent(
    config: &ExperimentConfig,
    id: usize,
    snr_db: f64,
    episodes: usize,
) -> Result<(DdpgTrainer, TrainingLog<AntennaLayout>)> {
    config.validate()?;
    let (scenario, baseline, mut rng) = baseline_for(config, id, snr_db)?;
    let mut env = FasEnv::new(scenario, baseline.best_layout, baseline.best_covariance, config.env.clone())?;
    let mut trainer = DdpgTrainer::for_env(&env, config.ddpg.clone(), &mut rng)?;
    let log = trainer.run_episodes(&mut env, episodes, config.env.episode_len, &mut rng)?;
    Ok((trainer, log))
}

fn baseline_for(config: &ExperimentConfig, id: usize, snr_db: f64) -> Result<(Scenario, OptResult, ChaCha8Rng)> {
    let scenario = config.scenario(id)?.with_noise_power(config.noise_power(snr_db));
    let mut rng = ChaCha8Rng::seed_from_u64(run_seed(scenario_seed(config.master_seed, id as u64), 0));
    let baseline = fpa_baseline(&scenario, &config.bcd_config(), &mut rng)?;
    if baseline.status != SolveStatus::Optimal {
        return Err(Error::Config(format!(
            "scenario {id} at {snr_db} dB has no feasible baseline ({})",
            baseline.status.as_str()
        )));
    }
    Ok((scenario, baseline, rng))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub scenario_id: usize,
    pub snr_db: f64,
    pub baseline_rate: f64,
    /// Rate after re-solving the covariance at the best layout visited.
    pub policy_rate: f64,
    pub status: SolveStatus,
    pub best_reward: f64,
    pub steps: usize,
}

/// Rolls out the deterministic policy for one episode from the FPA grid and
/// re-solves the covariance at the best-reward layout.
pub fn evaluate_agent(config: &ExperimentConfig, agent: &DdpgAgent, id: usize, snr_db: f64) -> Result<EvalReport> {
    config.validate()?;
    let (scenario, baseline, mut rng) = baseline_for(config, id, snr_db)?;
    let mut env = FasEnv::new(
        scenario.clone(),
        baseline.best_layout.clone(),
        baseline.best_covariance.clone(),
        config.env.clone(),
    )?;
    if agent.state_dim() != env.state_dim() || agent.action_dim() != env.action_dim() {
        return Err(Error::Config("checkpoint dimensions do not match the configured array".into()));
    }
    let mut state = env.reset()?;
    let (mut best_reward, mut best_layout) = (env.current_reward()?, env.snapshot());
    let mut steps = 0;
    for _ in 0..config.env.episode_len {
        let out = env.step(&agent.act(&state)?)?;
        steps += 1;
        if out.reward > best_reward {
            best_reward = out.reward;
            best_layout = env.snapshot();
        }
        state = out.next_state;
        if out.done {
            break;
        }
    }
    let (cov, report) = solve_at(&best_layout, &scenario, &config.solver, &mut rng)?;
    let policy_rate = if report.status == SolveStatus::Optimal {
        communication_rate(&channel_vector(&best_layout, &scenario)?, cov.matrix(), scenario.noise_power)?
    } else {
        0.0
    };
    Ok(EvalReport {
        scenario_id: id,
        snr_db,
        baseline_rate: baseline.best_rate,
        policy_rate,
        status: report.status,
        best_reward,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentConfig {
        ExperimentConfig {
            num_antennas: 2,
            num_targets: 1,
            gamma: 0.5,
            snr_db: vec![10.0],
            num_scenarios: 1,
            threads: 1,
            bcd: BcdSettings { episodes_per_iter: 0, max_outer_iters: 1, ..Default::default() },
            solver: SolverConfig { randomization_samples: 50, ..Default::default() },
            ..Default::default()
        }
    }

    #[test]
    fn splitmix_reference_values() {
        // First outputs of the reference generator seeded with 0.
        assert_eq!(splitmix64(0), 0xE220_A839_7B1D_CDAF);
        assert_eq!(splitmix64(0x9E37_79B9_7F4A_7C15), 0x6E78_9E6A_A1B9_65F4);
    }

    #[test]
    fn noise_power_from_snr() {
        let c = ExperimentConfig::default();
        assert!((c.noise_power(20.0) - 0.01).abs() < 1e-15);
        assert_eq!(c.noise_power(0.0), 1.0);
    }

    #[test]
    fn config_round_trips_and_rejects_unknown_keys() {
        let c = tiny();
        let text = c.to_toml_string().unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), c);
        let err = ExperimentConfig::from_toml_str("num_antenas = 3\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("num_antenas") && msg.contains("line 1"), "{msg}");
        assert!(ExperimentConfig::from_toml_str("snr_db = []\n").is_err());
        assert_eq!(c.config_hash(), tiny().config_hash());
        assert_ne!(c.config_hash(), ExperimentConfig { master_seed: 1, ..tiny() }.config_hash());
    }

    #[test]
    fn zero_budget_fas_row_equals_fpa_row() {
        let table = run_sweep(&tiny()).unwrap();
        assert_eq!(table.rows.len(), 2);
        let (fas, fpa) = (&table.rows[0], &table.rows[1]);
        assert_eq!(fas.method, Method::FasBcdDrl);
        assert_eq!(fpa.method, Method::Fpa);
        assert!(fas.is_ok(), "{}", fas.status);
        assert_eq!(fas.rate, fpa.rate);
        assert_eq!(fas.relaxed_rate, fpa.relaxed_rate);
        assert_eq!(fas.min_sensing_slack, fpa.min_sensing_slack);
    }

    #[test]
    fn aggregates_match_rows() {
        let mk = |id, m, snr, rate| ResultRow {
            scenario_id: id,
            method: m,
            snr_db: snr,
            rate,
            relaxed_rate: rate,
            min_sensing_slack: None,
            wall_time_s: 0.0,
            seed: 0,
            status: "ok".into(),
            sensing_slacks: vec![],
            outer_iterations: 0,
            ddpg_steps: 0,
            measured_wall_time_s: 0.0,
        };
        let table = ResultTable::from_rows(vec![
            mk(1, Method::Fpa, 10.0, 3.0),
            mk(0, Method::Fpa, 10.0, 1.0),
            mk(0, Method::Fpa, -5.0, 0.5),
        ]);
        assert_eq!(table.rows[0].snr_db, -5.0);
        assert_eq!(table.aggregates.len(), 2);
        assert_eq!(table.aggregates[0].snr_db, -5.0);
        assert_eq!(table.aggregates[1].mean_rate, 2.0);
        assert_eq!(table.aggregates[1].max_rate, 3.0);
    }
}
