//! On-disk form of a finished run: a manifest plus one blocks file and one
//! receipts file per chain, line-delimited JSON. Loading replays every
//! block list from genesis and refuses the dump unless the replayed
//! heights and state digests match the manifest, so a truncated or edited
//! dump cannot pass for the original.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use chainsim_core::block::Block;
use chainsim_core::chain::{Chain, ChainConfig, Receipt};
use chainsim_core::codec::digest_bytes;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics;
use crate::runner::RunOutcome;

pub const DUMP_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DumpManifest {
    pub version: u32,
    pub label: String,
    pub chain_order: Vec<String>,
    pub configs: Vec<ChainConfig>,
    pub heights: BTreeMap<String, u64>,
    pub state_digests: BTreeMap<String, String>,
    pub ledger_digest: Option<String>,
}

#[derive(Debug, Error)]
pub enum DumpError {
    #[error("cannot access {path}: {detail}")]
    Io { path: String, detail: String },
    #[error("corrupt dump: {0}")]
    CorruptDump(String),
}

pub struct LoadedDump {
    pub manifest: DumpManifest,
    /// Chains rebuilt by replaying the dumped block lists.
    pub chains: BTreeMap<String, Chain>,
    pub receipts: BTreeMap<String, Vec<Receipt>>,
}

fn io_err(path: &Path, e: std::io::Error) -> DumpError {
    DumpError::Io { path: path.display().to_string(), detail: e.to_string() }
}

fn jsonl<T: Serialize>(items: &[T]) -> Vec<u8> {
    let mut bytes = Vec::new();
    for item in items {
        bytes.extend(serde_json::to_vec(item).expect("dump records serialize"));
        bytes.push(b'\n');
    }
    bytes
}

fn parse_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, DumpError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut items = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(line).map_err(|e| {
            DumpError::CorruptDump(format!("{} line {}: {e}", path.display(), lineno + 1))
        })?;
        items.push(item);
    }
    Ok(items)
}

pub fn write_dump(outcome: &RunOutcome, dir: &Path) -> Result<(), DumpError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;

    let mut configs = Vec::new();
    let mut heights = BTreeMap::new();
    let mut state_digests = BTreeMap::new();
    for chain_id in &outcome.chain_order {
        let chain = &outcome.chains[chain_id];
        configs.push(chain.config().clone());
        heights.insert(chain_id.clone(), chain.height());
        state_digests.insert(chain_id.clone(), chain.state().digest().to_hex());

        let blocks_path = dir.join(format!("{chain_id}.blocks.jsonl"));
        fs::write(&blocks_path, jsonl(chain.blocks())).map_err(|e| io_err(&blocks_path, e))?;
        let receipts_path = dir.join(format!("{chain_id}.receipts.jsonl"));
        fs::write(&receipts_path, jsonl(chain.receipts()))
            .map_err(|e| io_err(&receipts_path, e))?;
    }

    let ledger_digest = match &outcome.registry {
        None => None,
        Some(registry) => {
            let lines = metrics::ledger_lines(registry);
            let path = dir.join("registry_ledger.jsonl");
            fs::write(&path, &lines).map_err(|e| io_err(&path, e))?;
            Some(digest_bytes("registry-ledger", &lines).to_hex())
        }
    };

    let manifest = DumpManifest {
        version: DUMP_VERSION,
        label: outcome.report.label.clone(),
        chain_order: outcome.chain_order.clone(),
        configs,
        heights,
        state_digests,
        ledger_digest,
    };
    let manifest_path = dir.join("manifest.json");
    let body = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    fs::write(&manifest_path, body).map_err(|e| io_err(&manifest_path, e))?;
    Ok(())
}

pub fn load_dump(dir: &Path) -> Result<LoadedDump, DumpError> {
    let manifest_path = dir.join("manifest.json");
    let text = fs::read_to_string(&manifest_path).map_err(|e| io_err(&manifest_path, e))?;
    let manifest: DumpManifest = serde_json::from_str(&text)
        .map_err(|e| DumpError::CorruptDump(format!("manifest.json: {e}")))?;
    if manifest.version != DUMP_VERSION {
        return Err(DumpError::CorruptDump(format!(
            "dump version {} is not supported",
            manifest.version
        )));
    }
    if manifest.configs.len() != manifest.chain_order.len() {
        return Err(DumpError::CorruptDump(
            "manifest lists a different number of configs and chains".into(),
        ));
    }

    let mut chains = BTreeMap::new();
    let mut receipts = BTreeMap::new();
    for (chain_id, config) in manifest.chain_order.iter().zip(&manifest.configs) {
        if &config.chain_id != chain_id {
            return Err(DumpError::CorruptDump(format!(
                "manifest order and configs disagree at chain {chain_id}"
            )));
        }
        let blocks: Vec<Block> = parse_jsonl(&dir.join(format!("{chain_id}.blocks.jsonl")))?;
        let chain = Chain::replay(config.clone(), &blocks)
            .map_err(|e| DumpError::CorruptDump(format!("chain {chain_id}: {e}")))?;

        let want_height = manifest.heights.get(chain_id).copied().unwrap_or_default();
        if chain.height() != want_height {
            return Err(DumpError::CorruptDump(format!(
                "chain {chain_id} replays to height {}, manifest says {want_height}",
                chain.height()
            )));
        }
        let want_digest = manifest.state_digests.get(chain_id).cloned().unwrap_or_default();
        let got_digest = chain.state().digest().to_hex();
        if got_digest != want_digest {
            return Err(DumpError::CorruptDump(format!(
                "chain {chain_id} replays to state {got_digest}, manifest says {want_digest}"
            )));
        }

        let chain_receipts: Vec<Receipt> =
            parse_jsonl(&dir.join(format!("{chain_id}.receipts.jsonl")))?;
        chains.insert(chain_id.clone(), chain);
        receipts.insert(chain_id.clone(), chain_receipts);
    }

    if let Some(want) = &manifest.ledger_digest {
        let path = dir.join("registry_ledger.jsonl");
        let lines = fs::read(&path).map_err(|e| io_err(&path, e))?;
        let got = digest_bytes("registry-ledger", &lines).to_hex();
        if &got != want {
            return Err(DumpError::CorruptDump(format!(
                "registry ledger digests to {got}, manifest says {want}"
            )));
        }
    }

    Ok(LoadedDump { manifest, chains, receipts })
}
