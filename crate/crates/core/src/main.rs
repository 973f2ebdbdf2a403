use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fas_isac::ddpg::DdpgAgent;
use fas_isac::experiment::{
    emit_results, evaluate_agent, run_scenario, run_sweep, train_agent, ExperimentConfig, ResultTable,
};
use fas_isac::Error;

#[derive(Parser)]
#[command(name = "fas-isac", version, about = "Fluid-antenna ISAC beamforming and positioning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every SNR of one scenario, both methods.
    Run {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        scenario_id: usize,
        /// Directory for results.{csv,json,svg}; printed to stdout when absent.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Run the full scenario x SNR sweep.
    Sweep {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Run only the fixed-position baseline over the sweep.
    Baseline {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Train a positioning agent on one scenario and save a checkpoint.
    Train {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        scenario_id: usize,
        #[arg(long)]
        snr_db: f64,
        #[arg(long, default_value_t = 30)]
        episodes: usize,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Evaluate a saved agent on one scenario.
    Eval {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        scenario_id: usize,
        #[arg(long)]
        snr_db: f64,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Parse and validate a configuration file.
    ValidateConfig {
        #[arg(short, long)]
        config: PathBuf,
    },
}

const EXIT_CONFIG: u8 = 1;
const EXIT_ALL_FAILED: u8 = 2;
const EXIT_PARTIAL: u8 = 3;

fn table_exit(table: &ResultTable) -> ExitCode {
    let failed = table.failed_rows();
    for r in table.rows.iter().filter(|r| !r.is_ok()) {
        eprintln!("scenario {} {} at {} dB: {}", r.scenario_id, r.method.as_str(), r.snr_db, r.status);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else if failed == table.rows.len() {
        ExitCode::from(EXIT_ALL_FAILED)
    } else {
        ExitCode::from(EXIT_PARTIAL)
    }
}

fn print_table(table: &ResultTable) {
    println!("{:>8} {:>12} {:>8} {:>10} {:>10} {:>12}  status", "scenario", "method", "snr_db", "rate", "relaxed", "min_slack");
    for r in &table.rows {
        let slack = r.min_sensing_slack.map(|s| format!("{s:.4}")).unwrap_or_else(|| "-".into());
        println!(
            "{:>8} {:>12} {:>8} {:>10.4} {:>10.4} {:>12}  {}",
            r.scenario_id,
            r.method.as_str(),
            r.snr_db,
            r.rate,
            r.relaxed_rate,
            slack,
            r.status
        );
    }
    for a in &table.aggregates {
        println!(
            "{} @ {} dB: mean {:.4}, max {:.4} ({}/{} ok)",
            a.method.as_str(),
            a.snr_db,
            a.mean_rate,
            a.max_rate,
            a.ok_rows,
            a.rows
        );
    }
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::ValidateConfig { config } => {
            let cfg = ExperimentConfig::from_file(&config)?;
            println!("ok: {} (hash {})", config.display(), cfg.config_hash());
            Ok(ExitCode::SUCCESS)
        }
        Command::Run { config, scenario_id, out } => {
            let cfg = ExperimentConfig::from_file(&config)?;
            let rows = (0..cfg.snr_db.len()).flat_map(|j| run_scenario(&cfg, scenario_id, j)).collect();
            let table = ResultTable::from_rows(rows);
            match out {
                Some(dir) => emit_results(&dir, &cfg, &table)?,
                None => print_table(&table),
            }
            Ok(table_exit(&table))
        }
        Command::Sweep { config, out } => {
            let cfg = ExperimentConfig::from_file(&config)?;
            let table = run_sweep(&cfg)?;
            emit_results(&out, &cfg, &table)?;
            print_table(&table);
            Ok(table_exit(&table))
        }
        Command::Baseline { config, out } => {
            let mut cfg = ExperimentConfig::from_file(&config)?;
            cfg.run_fas = false;
            cfg.run_fpa = true;
            let table = run_sweep(&cfg)?;
            emit_results(&out, &cfg, &table)?;
            print_table(&table);
            Ok(table_exit(&table))
        }
        Command::Train { config, scenario_id, snr_db, episodes, checkpoint } => {
            let cfg = ExperimentConfig::from_file(&config)?;
            let (trainer, log) = train_agent(&cfg, scenario_id, snr_db, episodes)?;
            for e in &log.episodes {
                println!(
                    "episode {:>4}: return {:>10.4}, mean rate {:.4}, final rate {:.4}",
                    e.episode, e.total_return, e.mean_rate, e.final_rate
                );
            }
            let mut w = BufWriter::new(File::create(&checkpoint)?);
            trainer.agent.save(&mut w)?;
            println!("best reward {:.4}; checkpoint written to {}", log.best_reward, checkpoint.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Eval { config, scenario_id, snr_db, checkpoint } => {
            let cfg = ExperimentConfig::from_file(&config)?;
            let agent = DdpgAgent::load(&mut BufReader::new(File::open(&checkpoint)?), &cfg.ddpg)?;
            let report = evaluate_agent(&cfg, &agent, scenario_id, snr_db)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&report).map_err(|e| Error::Io(std::io::Error::other(e)))?
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Checkpoint(_) => ExitCode::from(EXIT_CONFIG),
                _ => ExitCode::from(EXIT_ALL_FAILED),
            }
        }
    }
}
