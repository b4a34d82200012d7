//! Exit codes and error surfaces of the command-line binary.

use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_chainsim"))
}

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn stderr_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

#[test]
fn missing_scenario_exits_2() {
    let output = bin().arg("run").arg("/nonexistent/nowhere.json").output().unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(stderr_of(&output).contains("cannot read"));
}

#[test]
fn malformed_scenario_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, b"{\"version\": 1").unwrap();
    let output = bin().arg("run").arg(&path).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(stderr_of(&output).contains("does not parse"));
}

#[test]
fn run_writes_report_and_dump_then_inspect_reads_them() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    let dump = dir.path().join("dump");

    let output = bin()
        .arg("run")
        .arg(scenario("lockbox_claim.json"))
        .arg("--report")
        .arg(&report)
        .arg("--dump-dir")
        .arg(&dump)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "{}", stderr_of(&output));
    assert!(report.is_file());
    assert!(dump.join("manifest.json").is_file());

    let inspect = bin().arg("inspect").arg(&dump).arg("--chain").arg("main").output().unwrap();
    assert_eq!(inspect.status.code(), Some(0), "{}", stderr_of(&inspect));
    let stdout = String::from_utf8_lossy(&inspect.stdout).into_owned();
    assert!(stdout.contains("height = 4"), "{stdout}");

    let metrics = bin().arg("metrics").arg(&report).output().unwrap();
    assert_eq!(metrics.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&metrics.stdout).into_owned();
    assert!(stdout.contains("aggregate tps"), "{stdout}");
}

#[test]
fn truncated_dump_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("dump");
    let output =
        bin().arg("run").arg(scenario("value_transfer.json")).arg("--dump-dir").arg(&dump).output().unwrap();
    assert_eq!(output.status.code(), Some(0), "{}", stderr_of(&output));

    // Drop the last block from the chain's block file.
    let blocks_path = dump.join("main.blocks.jsonl");
    let text = std::fs::read_to_string(&blocks_path).unwrap();
    let kept: Vec<&str> = text.lines().collect();
    std::fs::write(&blocks_path, kept[..kept.len() - 1].join("\n") + "\n").unwrap();

    let inspect = bin().arg("inspect").arg(&dump).arg("--chain").arg("main").output().unwrap();
    assert_eq!(inspect.status.code(), Some(2));
    assert!(stderr_of(&inspect).contains("corrupt dump"), "{}", stderr_of(&inspect));
}

#[test]
fn edited_ledger_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("dump");
    let output = bin()
        .arg("run")
        .arg(scenario("rotation_theft_drill.json"))
        .arg("--dump-dir")
        .arg(&dump)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "{}", stderr_of(&output));

    let ledger_path = dump.join("registry_ledger.jsonl");
    let mut text = std::fs::read_to_string(&ledger_path).unwrap();
    text = text.replacen("Tesla", "Edsel", 1);
    std::fs::write(&ledger_path, text).unwrap();

    let inspect = bin().arg("inspect").arg(&dump).arg("--chain").arg("main").output().unwrap();
    assert_eq!(inspect.status.code(), Some(2));
    assert!(stderr_of(&inspect).contains("corrupt dump"), "{}", stderr_of(&inspect));
}

#[test]
fn dump_dir_env_var_is_honored() {
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("env-dump");
    let output = bin()
        .arg("run")
        .arg(scenario("value_transfer.json"))
        .env("CHAINSIM_DUMP_DIR", &dump)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "{}", stderr_of(&output));
    assert!(dump.join("manifest.json").is_file());
}

#[test]
fn inspect_unknown_chain_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("dump");
    bin().arg("run").arg(scenario("value_transfer.json")).arg("--dump-dir").arg(&dump).output().unwrap();

    let inspect = bin().arg("inspect").arg(&dump).arg("--chain").arg("ghost").output().unwrap();
    assert_eq!(inspect.status.code(), Some(2));
    assert!(stderr_of(&inspect).contains("no chain named ghost"));
}

#[test]
fn inspect_address_reports_spendable_balance() {
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("dump");
    bin().arg("run").arg(scenario("value_transfer.json")).arg("--dump-dir").arg(&dump).output().unwrap();

    let holder = chainsim::runner::actor_address("value-transfer-demo", "r").to_string();
    let inspect = bin()
        .arg("inspect")
        .arg(&dump)
        .arg("--chain")
        .arg("main")
        .arg("--address")
        .arg(&holder)
        .output()
        .unwrap();
    assert_eq!(inspect.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&inspect.stdout).into_owned();
    assert!(stdout.contains("spendable = 0.8"), "{stdout}");
}
