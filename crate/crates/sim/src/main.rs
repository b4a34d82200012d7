use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chainsim::dump::{load_dump, write_dump};
use chainsim::metrics::{measure_aggregate_tps, MetricsReport};
use chainsim::runner::{run_scenario, RunError};
use chainsim::scenario::load_scenario;
use chainsim_core::contract::ContractId;
use clap::{Parser, Subcommand};

/// Exit: 0 on success, 2 on a scenario or usage problem, 3 when a run
/// breaks an invariant.
const EXIT_SCENARIO: u8 = 2;
const EXIT_INVARIANT: u8 = 3;

#[derive(Parser)]
#[command(name = "chainsim", about = "Deterministic multi-chain asset simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a scenario file and print its metrics report as JSON.
    Run {
        scenario: PathBuf,
        /// Directory to dump blocks and receipts into. Defaults to
        /// CHAINSIM_DUMP_DIR when set, otherwise no dump is written.
        #[arg(long)]
        dump_dir: Option<PathBuf>,
        /// Also write the report to this file.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Replay a dump and query the reconstructed state.
    Inspect {
        dump: PathBuf,
        #[arg(long)]
        chain: String,
        /// Print one contract's variables instead of the chain summary.
        #[arg(long, conflicts_with = "address")]
        contract: Option<String>,
        /// Print one address's spendable balance instead of the summary.
        #[arg(long)]
        address: Option<String>,
    },
    /// Summarize a previously written metrics report.
    Metrics { report: PathBuf },
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run { scenario, dump_dir, report } => cmd_run(&scenario, dump_dir, report),
        Command::Inspect { dump, chain, contract, address } => {
            cmd_inspect(&dump, &chain, contract.as_deref(), address.as_deref())
        }
        Command::Metrics { report } => cmd_metrics(&report),
    }
}

fn fail(code: u8, message: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(code)
}

fn cmd_run(scenario: &Path, dump_dir: Option<PathBuf>, report_path: Option<PathBuf>) -> ExitCode {
    let file = match load_scenario(scenario) {
        Ok(file) => file,
        Err(e) => return fail(EXIT_SCENARIO, e),
    };
    let outcome = match run_scenario(&file) {
        Ok(outcome) => outcome,
        Err(RunError::Scenario(e)) => return fail(EXIT_SCENARIO, e),
        Err(e @ RunError::Invariant(_)) => return fail(EXIT_INVARIANT, e),
    };

    let json = serde_json::to_string_pretty(&outcome.report).expect("report serializes");
    println!("{json}");
    if let Some(path) = report_path {
        if let Err(e) = std::fs::write(&path, json.as_bytes()) {
            return fail(EXIT_SCENARIO, format!("cannot write {}: {e}", path.display()));
        }
    }

    let dump_dir = dump_dir.or_else(|| std::env::var_os("CHAINSIM_DUMP_DIR").map(PathBuf::from));
    if let Some(dir) = dump_dir {
        if let Err(e) = write_dump(&outcome, &dir) {
            return fail(EXIT_SCENARIO, e);
        }
        eprintln!("dump written to {}", dir.display());
    }
    ExitCode::SUCCESS
}

fn cmd_inspect(
    dump: &Path,
    chain_id: &str,
    contract: Option<&str>,
    address: Option<&str>,
) -> ExitCode {
    let loaded = match load_dump(dump) {
        Ok(loaded) => loaded,
        Err(e) => return fail(EXIT_SCENARIO, e),
    };
    let Some(chain) = loaded.chains.get(chain_id) else {
        return fail(EXIT_SCENARIO, format!("dump holds no chain named {chain_id}"));
    };

    if let Some(text) = contract {
        let id = match ContractId::parse_hex(text) {
            Ok(id) => id,
            Err(e) => return fail(EXIT_SCENARIO, format!("bad contract id: {e}")),
        };
        let Some(instance) = chain.contract(&id) else {
            return fail(EXIT_SCENARIO, format!("no contract {text} on {chain_id}"));
        };
        println!("contract {}", instance.id);
        println!("class = {}", instance.class().name());
        println!("status = {}", instance.status.name());
        println!("locked = {}", instance.locked);
        for (key, value) in instance.state_vars() {
            println!("{key} = {value}");
        }
        return ExitCode::SUCCESS;
    }

    if let Some(text) = address {
        let mut balance = chainsim_core::amount::Amount::ZERO;
        let mut outputs = 0u64;
        for (_, output) in chain.state().utxos.iter() {
            if output.recipient.to_string() == text {
                balance = balance.checked_add(output.value).expect("balance fits");
                outputs += 1;
            }
        }
        println!("address {text}");
        println!("spendable = {balance}");
        println!("outputs = {outputs}");
        return ExitCode::SUCCESS;
    }

    println!("chain {chain_id}");
    println!("height = {}", chain.height());
    println!("state_digest = {}", chain.state().digest().to_hex());
    println!("utxos = {}", chain.state().utxos.len());
    println!("contracts = {}", chain.state().contracts.len());
    let receipts = loaded.receipts.get(chain_id).map(Vec::len).unwrap_or(0);
    println!("receipts = {receipts}");
    ExitCode::SUCCESS
}

fn cmd_metrics(path: &Path) -> ExitCode {
    let text = match std::fs::read_to_string(path) {
        Ok(text) => text,
        Err(e) => return fail(EXIT_SCENARIO, format!("cannot read {}: {e}", path.display())),
    };
    let report: MetricsReport = match serde_json::from_str(&text) {
        Ok(report) => report,
        Err(e) => return fail(EXIT_SCENARIO, format!("bad report: {e}")),
    };

    println!("scenario {} ({} ticks)", report.label, report.ticks);
    for chain in &report.chains {
        println!(
            "chain {}: height {}, included {}, evicted {}, tps {:.3}",
            chain.chain_id, chain.height, chain.included_items, chain.evicted_items, chain.tps
        );
    }
    println!("aggregate tps {:.3}", measure_aggregate_tps(&report));
    if !report.tax_per_epoch.is_empty() {
        for (epoch, tax) in &report.tax_per_epoch {
            println!("tax epoch {epoch}: {tax}");
        }
        println!("tax total {}", report.total_tax);
    }
    for session in &report.swap_sessions {
        println!("swap {}: {:?}", session.session_id, session.status);
    }
    for warning in &report.warnings {
        println!("warning: {warning}");
    }
    ExitCode::SUCCESS
}
