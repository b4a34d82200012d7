//! Throughput and outcome accounting for a finished run. TPS treats one
//! tick as one simulated second, scaled by the scenario's tick_seconds.

use std::collections::BTreeMap;

use chainsim_core::amount::Amount;
use chainsim_core::chain::Chain;
use chainsim_core::codec::digest_bytes;
use chainsim_core::registry::Registry;
use chainsim_core::swap::{SessionStatus, SwapCategory, SwapCoordinator, TranscriptEntry};
use serde::{Deserialize, Serialize};

use crate::scenario::ScenarioFile;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ChainMetrics {
    pub chain_id: String,
    pub height: u64,
    pub included_items: u64,
    pub evicted_items: u64,
    pub tps: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SessionReport {
    pub session_id: String,
    pub category: SwapCategory,
    pub status: SessionStatus,
    pub transcript: Vec<TranscriptEntry>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MetricsReport {
    pub label: String,
    pub ticks: u64,
    pub tick_seconds: u64,
    pub chains: Vec<ChainMetrics>,
    pub aggregate_tps: f64,
    pub final_state_digests: BTreeMap<String, String>,
    pub tax_per_epoch: BTreeMap<u64, Amount>,
    pub total_tax: Amount,
    pub registry_ledger_digest: Option<String>,
    pub swap_sessions: Vec<SessionReport>,
    pub warnings: Vec<String>,
}

/// Sum of the per-chain rates, the figure the dual and triple deployment
/// comparisons are quoted in.
pub fn measure_aggregate_tps(report: &MetricsReport) -> f64 {
    report.chains.iter().map(|c| c.tps).sum()
}

/// Serializes ledger records one JSON object per line, the exact bytes the
/// dump writes, and digests them so a report and a dump can be checked
/// against each other.
pub fn ledger_lines(registry: &Registry) -> Vec<u8> {
    let mut bytes = Vec::new();
    for record in registry.ledger() {
        bytes.extend(serde_json::to_vec(record).expect("ledger records serialize"));
        bytes.push(b'\n');
    }
    bytes
}

pub fn ledger_digest(registry: &Registry) -> String {
    digest_bytes("registry-ledger", &ledger_lines(registry)).to_hex()
}

pub(crate) fn build_report(
    file: &ScenarioFile,
    chain_order: &[String],
    chains: &BTreeMap<String, Chain>,
    registry: Option<&Registry>,
    coordinator: &SwapCoordinator,
    warnings: Vec<String>,
) -> MetricsReport {
    let elapsed_seconds = (file.ticks * file.tick_seconds) as f64;
    let mut per_chain = Vec::new();
    let mut digests = BTreeMap::new();
    for chain_id in chain_order {
        let chain = &chains[chain_id];
        let included = chain.receipts().iter().filter(|r| r.included()).count() as u64;
        let evicted = chain.receipts().len() as u64 - included;
        per_chain.push(ChainMetrics {
            chain_id: chain_id.clone(),
            height: chain.height(),
            included_items: included,
            evicted_items: evicted,
            tps: if elapsed_seconds > 0.0 { included as f64 / elapsed_seconds } else { 0.0 },
        });
        digests.insert(chain_id.clone(), chain.state().digest().to_hex());
    }

    let mut report = MetricsReport {
        label: file.label.clone(),
        ticks: file.ticks,
        tick_seconds: file.tick_seconds,
        chains: per_chain,
        aggregate_tps: 0.0,
        final_state_digests: digests,
        tax_per_epoch: BTreeMap::new(),
        total_tax: Amount::ZERO,
        registry_ledger_digest: None,
        swap_sessions: Vec::new(),
        warnings,
    };
    report.aggregate_tps = measure_aggregate_tps(&report);

    if let Some(registry) = registry {
        report.tax_per_epoch = registry.tax_per_epoch().clone();
        report.total_tax = registry.total_tax();
        report.registry_ledger_digest = Some(ledger_digest(registry));
    }

    for session in coordinator.sessions() {
        report.swap_sessions.push(SessionReport {
            session_id: session.session_id().to_string(),
            category: session.category(),
            status: session.status(),
            transcript: session.transcript().to_vec(),
        });
    }

    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aggregate_is_the_sum_of_chain_rates() {
        let report = MetricsReport {
            label: "t".into(),
            ticks: 10,
            tick_seconds: 1,
            chains: vec![
                ChainMetrics {
                    chain_id: "a".into(),
                    height: 10,
                    included_items: 70,
                    evicted_items: 0,
                    tps: 7.0,
                },
                ChainMetrics {
                    chain_id: "b".into(),
                    height: 10,
                    included_items: 250,
                    evicted_items: 0,
                    tps: 25.0,
                },
            ],
            aggregate_tps: 32.0,
            final_state_digests: BTreeMap::new(),
            tax_per_epoch: BTreeMap::new(),
            total_tax: Amount::ZERO,
            registry_ledger_digest: None,
            swap_sessions: Vec::new(),
            warnings: Vec::new(),
        };
        assert_eq!(measure_aggregate_tps(&report), 32.0);
    }

    #[test]
    fn report_round_trips_through_json() {
        let report = MetricsReport {
            label: "rt".into(),
            ticks: 5,
            tick_seconds: 2,
            chains: Vec::new(),
            aggregate_tps: 0.0,
            final_state_digests: BTreeMap::new(),
            tax_per_epoch: [(0u64, Amount::from_base_units(110))].into_iter().collect(),
            total_tax: Amount::from_base_units(110),
            registry_ledger_digest: Some("00".repeat(32)),
            swap_sessions: Vec::new(),
            warnings: vec!["w".into()],
        };
        let json = serde_json::to_string(&report).unwrap();
        let back: MetricsReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
    }
}
