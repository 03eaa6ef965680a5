//! `sim`; scenario runner for the MEV supply-chain simulator.
//!
//! `sim run` executes one scenario and writes `events.log`, `metrics.csv`
//! and `summary.json`; `sim sweep` runs a parameter cross-product; `sim
//! replay` re-executes an event log and verifies the final state hash.
//! Exit codes: 0 success, 1 runtime/replay failure, 2 configuration error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mevsim_core::engine::{run_scenario, run_sweep, RunOutput};
use mevsim_core::metrics::MetricsReport;
use mevsim_core::replay::replay_tsv;
use mevsim_core::scenario::Scenario;
use mevsim_core::types::format_signed_micros;

#[derive(Parser)]
#[command(name = "sim", version, about = "Deterministic MEV supply-chain simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write events.log, metrics.csv, summary.json.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Override the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the scenario's round count.
        #[arg(long)]
        rounds: Option<u32>,
        /// Output directory (created if missing).
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run the cross-product of parameter values × seeds, one run per cell.
    Sweep {
        #[arg(long)]
        scenario: PathBuf,
        /// Repeatable: --param policy.penalty=0,2,4
        #[arg(long = "param", value_name = "PATH=V1,V2,...")]
        params: Vec<String>,
        /// Number of seeds per cell (base seed, base+1, ...).
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Replay an event log and verify the final state hash.
    Replay {
        #[arg(long)]
        log: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(e)) => {
            eprintln!("configuration error: {e}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(message)) => {
            eprintln!("error: {message}");
            ExitCode::FAILURE
        }
    }
}

enum CliError {
    Config(mevsim_core::scenario::ConfigError),
    Runtime(String),
}

impl From<mevsim_core::scenario::ConfigError> for CliError {
    fn from(e: mevsim_core::scenario::ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { scenario, seed, rounds, out } => {
            let mut sc = Scenario::load(&scenario)?;
            if let Some(seed) = seed {
                sc.sim.seed = seed;
            }
            if let Some(rounds) = rounds {
                sc.sim.rounds = rounds;
                sc.validate()?;
            }
            let output = run_scenario(&sc)?;
            write_run(&out, &sc, &output, &scenario)?;
            println!(
                "ran {} rounds (seed {}): state hash {:016x}",
                sc.sim.rounds, sc.sim.seed, output.state_hash
            );
            println!(
                "mev monarch {} | mafia {} | moloch {} | welfare loss {}",
                format_signed_micros(output.metrics.mev_monarch_total),
                format_signed_micros(output.metrics.mev_mafia_total),
                format_signed_micros(output.metrics.mev_moloch_total),
                format_signed_micros(output.metrics.welfare_loss_total),
            );
            println!("outputs in {}", out.display());
            Ok(())
        }
        Command::Sweep { scenario, params, seeds, out } => {
            let sc = Scenario::load(&scenario)?;
            let parsed = parse_params(&params)?;
            let rows = run_sweep(&sc, &parsed, seeds)?;
            std::fs::create_dir_all(&out)?;
            let mut csv = String::from(
                "cell,seed,params,colluding_fraction,mev_monarch,mev_mafia,mev_moloch,welfare_loss,hhi_final,gas_waste,state_hash\n",
            );
            for row in &rows {
                let cell_dir = out.join(format!("cell_{:04}", row.cell.index));
                std::fs::create_dir_all(&cell_dir)?;
                std::fs::write(cell_dir.join("metrics.csv"), row.metrics.to_csv())?;
                std::fs::write(
                    cell_dir.join("summary.json"),
                    summary_json(&row.metrics, row.state_hash, row.cell.seed),
                )?;
                let params: Vec<String> = row
                    .cell
                    .assignments
                    .iter()
                    .map(|(k, v)| format!("{k}={v}"))
                    .collect();
                csv.push_str(&format!(
                    "{},{},{},{:.6},{},{},{},{},{:.6},{},{:016x}\n",
                    row.cell.index,
                    row.cell.seed,
                    params.join(";"),
                    row.metrics.colluding_fraction(),
                    format_signed_micros(row.metrics.mev_monarch_total),
                    format_signed_micros(row.metrics.mev_mafia_total),
                    format_signed_micros(row.metrics.mev_moloch_total),
                    format_signed_micros(row.metrics.welfare_loss_total),
                    row.metrics.hhi_series.last().copied().unwrap_or(0.0),
                    mevsim_core::types::TokenAmount::from_micros(row.metrics.gas_waste_total),
                    row.state_hash,
                ));
            }
            std::fs::write(out.join("sweep_summary.csv"), csv)?;
            println!("swept {} cells into {}", rows.len(), out.display());
            Ok(())
        }
        Command::Replay { log } => {
            let text = std::fs::read_to_string(&log)?;
            match replay_tsv(&text) {
                Ok(outcome) => {
                    println!(
                        "replay ok: {} blocks, {} receipts cross-checked, state hash {:016x}",
                        outcome.blocks_replayed, outcome.receipts_checked, outcome.computed_hash
                    );
                    Ok(())
                }
                Err(e) => Err(CliError::Runtime(format!("replay failed: {e}"))),
            }
        }
    }
}

fn parse_params(raw: &[String]) -> Result<Vec<(String, Vec<String>)>, CliError> {
    let mut parsed = Vec::new();
    for entry in raw {
        let (path, values) = entry.split_once('=').ok_or_else(|| {
            CliError::Runtime(format!("--param must look like path=v1,v2 (got {entry:?})"))
        })?;
        let values: Vec<String> = values.split(',').map(|v| v.trim().to_string()).collect();
        if values.is_empty() || values.iter().any(|v| v.is_empty()) {
            return Err(CliError::Runtime(format!("empty value in --param {entry:?}")));
        }
        parsed.push((path.trim().to_string(), values));
    }
    Ok(parsed)
}

fn write_run(
    out: &Path,
    sc: &Scenario,
    output: &RunOutput,
    scenario_path: &Path,
) -> Result<(), CliError> {
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("events.log"), output.events.to_tsv())?;
    std::fs::write(out.join("metrics.csv"), output.metrics.to_csv())?;
    std::fs::write(out.join("summary.json"), summary_json(&output.metrics, output.state_hash, sc.sim.seed))?;
    // The normalized machine form of the scenario that actually ran.
    std::fs::write(out.join("scenario.canonical.toml"), sc.canonical_toml())?;
    let _ = scenario_path;
    Ok(())
}

fn summary_json(metrics: &MetricsReport, state_hash: u64, seed: u64) -> String {
    let per_user: serde_json::Map<String, serde_json::Value> = metrics
        .per_user_welfare_loss
        .iter()
        .map(|(agent, loss)| {
            (agent.to_string(), serde_json::json!(format_signed_micros(*loss)))
        })
        .collect();
    let shares: serde_json::Map<String, serde_json::Value> = metrics
        .final_shares
        .iter()
        .map(|(agent, share)| (agent.to_string(), serde_json::json!(share)))
        .collect();
    let value = serde_json::json!({
        "seed": seed,
        "rounds": metrics.rounds,
        "state_hash": format!("{state_hash:016x}"),
        "mev": {
            "monarch": format_signed_micros(metrics.mev_monarch_total),
            "mafia": format_signed_micros(metrics.mev_mafia_total),
            "moloch": format_signed_micros(metrics.mev_moloch_total),
        },
        "welfare_loss_total": format_signed_micros(metrics.welfare_loss_total),
        "per_user_welfare_loss": per_user,
        "builder_final_shares": shares,
        "hhi_final": metrics.hhi_series.last().copied().unwrap_or(0.0),
        "colluding_fraction": metrics.colluding_fraction(),
        "censorship": metrics.censorship.map(|c| serde_json::json!({
            "compliant_fraction": c.compliant_fraction,
            "never_included": c.never_included,
            "mean_inclusion_delay": c.mean_inclusion_delay,
        })),
        "gas_waste_total": mevsim_core::types::TokenAmount::from_micros(metrics.gas_waste_total).to_string(),
        "rebates_total": mevsim_core::types::TokenAmount::from_micros(metrics.rebates_total).to_string(),
        "penalties_total": mevsim_core::types::TokenAmount::from_micros(metrics.penalties_total).to_string(),
        "value_flows": {
            "users_net": format_signed_micros(metrics.value_flows.users_net),
            "searchers_net": format_signed_micros(metrics.value_flows.searchers_net),
            "builders_net": format_signed_micros(metrics.value_flows.builders_net),
            "proposer_net": format_signed_micros(metrics.value_flows.proposer_net),
            "regulator_net": format_signed_micros(metrics.value_flows.regulator_net),
            "pools_net": format_signed_micros(metrics.value_flows.pools_net),
            "imbalance": format_signed_micros(metrics.value_flows.imbalance()),
        },
        "supply_delta": {
            "x": metrics.supply_delta_x,
            "y": metrics.supply_delta_y,
        },
        "unclassified_events": metrics.unclassified_events,
    });
    serde_json::to_string_pretty(&value).expect("summary serializes") + "\n"
}
