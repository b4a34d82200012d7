//! The permissioned registration authority.
//!
//! A fixed committee of validators orders registration requests by quorum
//! vote, enforces that each real-world asset is registered at most once
//! across every chain it manages, deploys the authenticated sale contracts
//! from an epoch multisig address, and rotates that address when an epoch
//! ends or its keys leak.
//!
//! Consensus is a deterministic vote count, not a networked protocol run.
//! A request is ordered when the healthy validators meet the quorum for the
//! configured fault model; crashed validators are silent and byzantine ones
//! vote wrong, so both count against the quorum. The registry talks to the
//! permissionless chains only through outgoing messages and observed
//! blocks.
//!
//! Validator signing keys for every epoch derive from the committee seed by
//! a public function. That is deliberate: whoever learns the seed can
//! compute the active keys, which is exactly the theft the revocation drill
//! simulates.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::address::{Address, MultisigAddress, MultisigWitness};
use crate::amount::Amount;
use crate::block::Block;
use crate::chain::{AppliedDetail, Receipt, ReceiptOutcome};
use crate::codec::Digest;
use crate::contract::{ArgValue, CallTarget, ContractClass, ContractId, ContractMessage};
use crate::keys::Identity;
use crate::tx::SpendAuth;

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultModel {
    Crash,
    Byzantine,
}

/// Largest number of faulty validators a committee of `n` tolerates.
pub fn fault_tolerance(n: usize, model: FaultModel) -> usize {
    match model {
        FaultModel::Crash => (n.saturating_sub(1)) / 2,
        FaultModel::Byzantine => (n.saturating_sub(1)) / 3,
    }
}

/// Votes needed to order a request: f+1 of at least 2f+1 under crash
/// faults, 2f+1 of at least 3f+1 under byzantine faults.
pub fn quorum_size(n: usize, model: FaultModel) -> usize {
    let f = fault_tolerance(n, model);
    match model {
        FaultModel::Crash => f + 1,
        FaultModel::Byzantine => 2 * f + 1,
    }
}

/// The signing identity validator `index` uses during `epoch`.
///
/// Public on purpose: knowing the committee seed is knowing every epoch's
/// keys, which models validator identity theft. Revocation, not secrecy of
/// this function, is the recovery mechanism.
pub fn epoch_validator(committee_seed: &str, epoch: u64, index: usize) -> Identity {
    Identity::from_seed(&format!("{committee_seed}/epoch-{epoch}/validator-{index}"))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegistryConfig {
    pub committee_seed: String,
    pub validator_count: usize,
    pub fault_model: FaultModel,
    /// Recorded with each registration. Nothing charges it yet; the fee's
    /// amount and currency are unsettled, so it defaults to zero.
    pub registration_fee: Amount,
}

/// What a real-world asset is keyed by: its class plus a natural id such as
/// a VIN. Two offices managing disjoint classes can never collide.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssetKey {
    pub asset_class: String,
    pub natural_id: String,
}

impl AssetKey {
    pub fn new(asset_class: &str, natural_id: &str) -> AssetKey {
        AssetKey { asset_class: asset_class.into(), natural_id: natural_id.into() }
    }
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssetAttributes {
    pub make: String,
    pub model: String,
    pub year: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegistrationRequest {
    pub asset_key: AssetKey,
    pub attributes: AssetAttributes,
    pub price: Amount,
    pub tax_percent: u64,
    pub owner: Address,
    pub target_chain: String,
}

/// Who is asking for a request to be ordered. End users carry no special
/// authority; a request claiming to come from the validators themselves
/// must carry an epoch witness, which is checked against revocation.
#[derive(Clone, Debug)]
pub enum RequestAuth {
    EndUser,
    EpochWitness { epoch: u64, witness: MultisigWitness, body: Digest },
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryStatus {
    Pending,
    Live,
    Cancelled,
}

#[derive(Clone, Debug, Serialize)]
pub struct RegistryEntry {
    pub id: u64,
    pub asset_key: AssetKey,
    pub chain_id: String,
    pub contract_id: Option<ContractId>,
    pub owner_at_registration: Address,
    /// Tracked from observed ownership changes on the hosting chain.
    pub current_owner: Address,
    /// Epoch active when the entry was created.
    pub epoch_index: u64,
    /// Epoch whose multisig the hosting chain currently holds as the
    /// contract authority. Lags the active epoch while a rotation's update
    /// call is in flight.
    pub authority_epoch: u64,
    pub status: EntryStatus,
    /// Set when cancellation was decided while the deployment was still in
    /// flight; a later-landing contract gets destroyed on sight.
    cancel_requested: bool,
    destroy_in_flight: bool,
    pub tax_collected: Amount,
}

impl RegistryEntry {
    fn occupies_key(&self) -> bool {
        matches!(self.status, EntryStatus::Pending | EntryStatus::Live)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpochStatus {
    Active,
    Retired,
    Revoked,
}

#[derive(Clone, Debug, Serialize)]
pub struct EpochRecord {
    pub index: u64,
    pub multisig: MultisigAddress,
    pub threshold: u32,
    pub status: EpochStatus,
}

/// A message the registry wants submitted to a permissionless chain. The
/// scheduler drains these and feeds them to the chains.
#[derive(Clone, Debug)]
pub struct OutboxMessage {
    pub chain_id: String,
    pub message: ContractMessage,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum OrderKind {
    Deploy,
    Destroy,
    UpdateAuthority { to_epoch: u64 },
}

#[derive(Clone, Debug)]
struct OutstandingOrder {
    entry: u64,
    kind: OrderKind,
}

/// One record of the permissioned ledger: ordered requests, decisions,
/// epoch changes, and observed tax receipts, in one gap-free sequence.
#[derive(Clone, Debug, Serialize)]
pub struct LedgerRecord {
    pub seq: u64,
    pub kind: String,
    pub epoch: u64,
    pub payload: LedgerPayload,
}

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LedgerPayload {
    Ordered { request: RegistrationRequest, auth: String },
    Decision { entry: u64, decision: String, detail: String },
    EpochChange { from: u64, to: u64, reason: String, multisig_addr: String },
    TaxObserved { entry: u64, chain_id: String, amount: Amount },
}

#[derive(Clone, PartialEq, Eq, Debug, Error)]
pub enum RegistryError {
    #[error("only {healthy} validators are healthy, quorum needs {needed}")]
    QuorumUnavailable { needed: usize, healthy: usize },
    #[error("asset is already registered or pending")]
    AlreadyRegistered(AssetKey),
    #[error("no live registration for that asset")]
    NoSuchAsset,
    #[error("requester is not the asset's current owner")]
    NotOwner,
    #[error("epoch {0} does not exist")]
    NoSuchEpoch(u64),
    #[error("request witness is invalid or its epoch is revoked")]
    BadWitness,
    #[error("validator index {0} is out of range")]
    NoSuchValidator(usize),
    #[error("committee must have at least one validator")]
    EmptyCommittee,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum ValidatorHealth {
    Healthy,
    Crashed,
    Byzantine,
}

/// Violation of the global uniqueness rule, reported by the audit hook.
#[derive(Clone, PartialEq, Eq, Debug, Error)]
#[error("asset {key:?} has {count} pending or live entries")]
pub struct UniquenessViolation {
    pub key: AssetKey,
    pub count: usize,
}

pub struct Registry {
    config: RegistryConfig,
    threshold: u32,
    validators: Vec<ValidatorHealth>,
    epochs: BTreeMap<u64, EpochRecord>,
    active_epoch: u64,
    next_seq: u64,
    entries: Vec<RegistryEntry>,
    by_contract: BTreeMap<ContractId, u64>,
    orders: BTreeMap<Digest, OutstandingOrder>,
    outbox: Vec<OutboxMessage>,
    ledger: Vec<LedgerRecord>,
    tax_per_epoch: BTreeMap<u64, Amount>,
}

impl Registry {
    pub fn new(config: RegistryConfig) -> Result<Registry, RegistryError> {
        if config.validator_count == 0 {
            return Err(RegistryError::EmptyCommittee);
        }
        let threshold = quorum_size(config.validator_count, config.fault_model) as u32;
        let mut registry = Registry {
            threshold,
            validators: vec![ValidatorHealth::Healthy; config.validator_count],
            epochs: BTreeMap::new(),
            active_epoch: 0,
            next_seq: 0,
            entries: Vec::new(),
            by_contract: BTreeMap::new(),
            orders: BTreeMap::new(),
            outbox: Vec::new(),
            ledger: Vec::new(),
            tax_per_epoch: BTreeMap::new(),
            config,
        };
        let genesis = registry.build_epoch(0);
        registry.epochs.insert(0, genesis);
        Ok(registry)
    }

    fn build_epoch(&self, index: u64) -> EpochRecord {
        let members = (0..self.config.validator_count)
            .map(|i| *epoch_validator(&self.config.committee_seed, index, i).public())
            .collect();
        let multisig = MultisigAddress::new(index, self.threshold, members)
            .expect("committee keys form a valid multisig");
        EpochRecord { index, multisig, threshold: self.threshold, status: EpochStatus::Active }
    }

    pub fn config(&self) -> &RegistryConfig {
        &self.config
    }

    pub fn quorum(&self) -> usize {
        self.threshold as usize
    }

    pub fn active_epoch(&self) -> u64 {
        self.active_epoch
    }

    pub fn epoch(&self, index: u64) -> Option<&EpochRecord> {
        self.epochs.get(&index)
    }

    /// The active epoch's multisig address, under which new contracts are
    /// deployed and administered.
    pub fn active_multisig(&self) -> &MultisigAddress {
        &self.epochs[&self.active_epoch].multisig
    }

    pub fn is_revoked(&self, epoch: u64) -> bool {
        self.epochs.get(&epoch).is_some_and(|e| e.status == EpochStatus::Revoked)
    }

    pub fn healthy_validators(&self) -> usize {
        self.validators.iter().filter(|v| **v == ValidatorHealth::Healthy).count()
    }

    pub fn crash_validator(&mut self, index: usize) -> Result<(), RegistryError> {
        match self.validators.get_mut(index) {
            Some(slot) => {
                *slot = ValidatorHealth::Crashed;
                Ok(())
            }
            None => Err(RegistryError::NoSuchValidator(index)),
        }
    }

    /// Marks a validator as voting incorrectly. For quorum purposes that is
    /// as bad as silence.
    pub fn corrupt_validator(&mut self, index: usize) -> Result<(), RegistryError> {
        match self.validators.get_mut(index) {
            Some(slot) => {
                *slot = ValidatorHealth::Byzantine;
                Ok(())
            }
            None => Err(RegistryError::NoSuchValidator(index)),
        }
    }

    pub fn entries(&self) -> &[RegistryEntry] {
        &self.entries
    }

    pub fn entry(&self, id: u64) -> Option<&RegistryEntry> {
        self.entries.get(id as usize)
    }

    pub fn entry_for_contract(&self, id: &ContractId) -> Option<&RegistryEntry> {
        self.by_contract.get(id).and_then(|e| self.entry(*e))
    }

    /// The entry currently occupying an asset key, if any.
    pub fn occupying_entry(&self, key: &AssetKey) -> Option<&RegistryEntry> {
        self.entries.iter().find(|e| &e.asset_key == key && e.occupies_key())
    }

    pub fn ledger(&self) -> &[LedgerRecord] {
        &self.ledger
    }

    pub fn tax_per_epoch(&self) -> &BTreeMap<u64, Amount> {
        &self.tax_per_epoch
    }

    pub fn total_tax(&self) -> Amount {
        Amount::checked_sum(self.tax_per_epoch.values().copied()).expect("tax total overflows")
    }

    /// Messages waiting to be submitted to chains, in issue order.
    pub fn drain_outbox(&mut self) -> Vec<OutboxMessage> {
        std::mem::take(&mut self.outbox)
    }

    fn ensure_quorum(&self) -> Result<(), RegistryError> {
        let healthy = self.healthy_validators();
        let needed = self.quorum();
        if healthy < needed {
            return Err(RegistryError::QuorumUnavailable { needed, healthy });
        }
        Ok(())
    }

    fn append_ledger(&mut self, kind: &str, payload: LedgerPayload) -> u64 {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.ledger.push(LedgerRecord {
            seq,
            kind: kind.to_string(),
            epoch: self.active_epoch,
            payload,
        });
        seq
    }

    /// Witness over `body` from the healthy validators of `epoch`, if
    /// enough of them are up to meet the threshold.
    fn epoch_witness(&self, epoch: u64, body: &Digest) -> Option<MultisigWitness> {
        let signers: Vec<_> = self
            .validators
            .iter()
            .enumerate()
            .filter(|(_, health)| **health == ValidatorHealth::Healthy)
            .take(self.threshold as usize)
            .map(|(i, _)| epoch_validator(&self.config.committee_seed, epoch, i).sign(body))
            .collect();
        if signers.len() < self.threshold as usize {
            return None;
        }
        Some(MultisigWitness::new(signers))
    }

    /// True when the witness meets the address's threshold with distinct
    /// member keys and the address's epoch has not been revoked.
    pub fn validate_multisig(
        &self,
        witness: &MultisigWitness,
        multisig_addr: &MultisigAddress,
        body: &Digest,
    ) -> bool {
        !self.is_revoked(multisig_addr.epoch) && witness.satisfies(multisig_addr, body)
    }

    /// Orders a request onto the permissioned ledger. This is the consensus
    /// step: it succeeds only while enough validators are healthy, and a
    /// request claiming validator authority must present a witness from an
    /// epoch that is still honored.
    pub fn order_request(
        &mut self,
        req: &RegistrationRequest,
        auth: &RequestAuth,
    ) -> Result<u64, RegistryError> {
        let auth_label = match auth {
            RequestAuth::EndUser => "end_user".to_string(),
            RequestAuth::EpochWitness { epoch, witness, body } => {
                let record = self.epochs.get(epoch).ok_or(RegistryError::BadWitness)?;
                if !self.validate_multisig(witness, &record.multisig, body) {
                    return Err(RegistryError::BadWitness);
                }
                format!("epoch_witness:{epoch}")
            }
        };
        self.ensure_quorum()?;
        Ok(self.append_ledger(
            "ordered",
            LedgerPayload::Ordered { request: req.clone(), auth: auth_label },
        ))
    }

    /// Full registration: order the request, check global uniqueness, open
    /// a pending entry, and emit the authenticated deployment.
    pub fn register_asset(
        &mut self,
        req: RegistrationRequest,
        auth: RequestAuth,
    ) -> Result<u64, RegistryError> {
        self.order_request(&req, &auth)?;

        if self.occupying_entry(&req.asset_key).is_some() {
            self.append_ledger(
                "decision",
                LedgerPayload::Decision {
                    entry: u64::MAX,
                    decision: "rejected".into(),
                    detail: format!("asset {:?} already registered", req.asset_key.natural_id),
                },
            );
            return Err(RegistryError::AlreadyRegistered(req.asset_key));
        }

        let epoch = self.active_epoch;
        let sender = Address::Multisig(self.epochs[&epoch].multisig.clone());
        let target = CallTarget::Deploy {
            class: ContractClass::AuthCar,
            args: vec![
                ArgValue::Str(req.attributes.make.clone()),
                ArgValue::Str(req.attributes.model.clone()),
                ArgValue::Int(req.attributes.year),
                ArgValue::Money(req.price),
                ArgValue::Int(req.tax_percent),
                ArgValue::Addr(req.owner.clone()),
            ],
        };
        let body = ContractMessage::body_digest_for(&sender, Amount::ZERO, &target, &[]);
        let witness = self
            .epoch_witness(epoch, &body)
            .expect("quorum was just checked, witness must form");
        let message =
            ContractMessage::new(sender, Amount::ZERO, target, vec![], SpendAuth::Multi(witness));
        let msg_id = message.msg_id();

        let entry_id = self.entries.len() as u64;
        self.entries.push(RegistryEntry {
            id: entry_id,
            asset_key: req.asset_key,
            chain_id: req.target_chain.clone(),
            contract_id: None,
            owner_at_registration: req.owner.clone(),
            current_owner: req.owner,
            epoch_index: epoch,
            authority_epoch: epoch,
            status: EntryStatus::Pending,
            cancel_requested: false,
            destroy_in_flight: false,
            tax_collected: Amount::ZERO,
        });
        self.orders.insert(msg_id, OutstandingOrder { entry: entry_id, kind: OrderKind::Deploy });
        self.outbox.push(OutboxMessage { chain_id: req.target_chain, message });
        self.append_ledger(
            "decision",
            LedgerPayload::Decision {
                entry: entry_id,
                decision: "registered".into(),
                detail: format!("deployment ordered as {msg_id}"),
            },
        );
        Ok(entry_id)
    }

    /// Called by the scheduler when a registry message could not even be
    /// queued on its chain. The affected registration is closed out.
    pub fn order_submission_failed(&mut self, msg_id: &Digest, reason: &str) {
        let Some(order) = self.orders.remove(msg_id) else { return };
        match order.kind {
            OrderKind::Deploy => {
                let entry = &mut self.entries[order.entry as usize];
                entry.status = EntryStatus::Cancelled;
                self.append_ledger(
                    "decision",
                    LedgerPayload::Decision {
                        entry: order.entry,
                        decision: "deployment_failed".into(),
                        detail: format!("submission refused: {reason}"),
                    },
                );
            }
            OrderKind::Destroy | OrderKind::UpdateAuthority { .. } => {
                let entry = &mut self.entries[order.entry as usize];
                entry.destroy_in_flight = false;
                self.append_ledger(
                    "decision",
                    LedgerPayload::Decision {
                        entry: order.entry,
                        decision: "order_submission_failed".into(),
                        detail: reason.to_string(),
                    },
                );
            }
        }
    }

    /// Requests destruction of a live asset's contract. Only the asset's
    /// current owner, as observed from the hosting chain, may ask.
    pub fn cancel_registration(
        &mut self,
        key: &AssetKey,
        requester: &Address,
    ) -> Result<(), RegistryError> {
        let entry_id = match self.entries.iter().find(|e| &e.asset_key == key && e.occupies_key()) {
            Some(entry) => entry.id,
            None => return Err(RegistryError::NoSuchAsset),
        };
        let entry = &self.entries[entry_id as usize];
        if &entry.current_owner != requester {
            return Err(RegistryError::NotOwner);
        }
        self.ensure_quorum()?;

        match entry.status {
            EntryStatus::Pending => {
                // Deployment still in flight. Decide cancellation now; if
                // the contract lands anyway it is destroyed on sight.
                let entry = &mut self.entries[entry_id as usize];
                entry.status = EntryStatus::Cancelled;
                entry.cancel_requested = true;
                self.append_ledger(
                    "decision",
                    LedgerPayload::Decision {
                        entry: entry_id,
                        decision: "cancelled".into(),
                        detail: "cancelled while deployment pending".into(),
                    },
                );
                Ok(())
            }
            EntryStatus::Live => {
                self.issue_destroy(entry_id, "owner requested cancellation");
                Ok(())
            }
            EntryStatus::Cancelled => Err(RegistryError::NoSuchAsset),
        }
    }

    fn issue_destroy(&mut self, entry_id: u64, reason: &str) {
        let entry = &self.entries[entry_id as usize];
        let contract = entry.contract_id.expect("destroy needs a deployed contract");
        let authority_epoch = entry.authority_epoch;
        let chain_id = entry.chain_id.clone();
        let sender = Address::Multisig(self.epochs[&authority_epoch].multisig.clone());
        let target =
            CallTarget::Invoke { contract, function: "destroy".into(), args: vec![] };
        let body = ContractMessage::body_digest_for(&sender, Amount::ZERO, &target, &[]);
        let Some(witness) = self.epoch_witness(authority_epoch, &body) else {
            self.append_ledger(
                "decision",
                LedgerPayload::Decision {
                    entry: entry_id,
                    decision: "destroy_unwitnessed".into(),
                    detail: "too few healthy validators to sign".into(),
                },
            );
            return;
        };
        let message =
            ContractMessage::new(sender, Amount::ZERO, target, vec![], SpendAuth::Multi(witness));
        self.orders.insert(
            message.msg_id(),
            OutstandingOrder { entry: entry_id, kind: OrderKind::Destroy },
        );
        self.outbox.push(OutboxMessage { chain_id, message });
        self.entries[entry_id as usize].destroy_in_flight = true;
        self.append_ledger(
            "decision",
            LedgerPayload::Decision {
                entry: entry_id,
                decision: "destroy_ordered".into(),
                detail: reason.to_string(),
            },
        );
    }

    /// Retires the active epoch and activates the next one. Every live
    /// contract gets an authority update to the fresh multisig address,
    /// witnessed by the keys the chain still honors: the outgoing epoch's.
    pub fn rotate_epoch(&mut self) -> Result<u64, RegistryError> {
        self.ensure_quorum()?;
        Ok(self.rotate_unchecked("rotation"))
    }

    fn rotate_unchecked(&mut self, reason: &str) -> u64 {
        let old = self.active_epoch;
        let new = old + 1;
        if let Some(record) = self.epochs.get_mut(&old) {
            if record.status == EpochStatus::Active {
                record.status = EpochStatus::Retired;
            }
        }
        let record = self.build_epoch(new);
        let multisig_text = Address::Multisig(record.multisig.clone()).to_string();
        self.epochs.insert(new, record);
        self.active_epoch = new;
        self.append_ledger(
            "epoch_change",
            LedgerPayload::EpochChange {
                from: old,
                to: new,
                reason: reason.to_string(),
                multisig_addr: multisig_text,
            },
        );

        // Hand every live contract to the new address, in contract id
        // order so the stream of updates is reproducible.
        let mut live: Vec<(ContractId, u64)> = self
            .entries
            .iter()
            .filter(|e| e.status == EntryStatus::Live && !e.destroy_in_flight)
            .filter_map(|e| e.contract_id.map(|c| (c, e.id)))
            .collect();
        live.sort();
        for (contract, entry_id) in live {
            self.issue_authority_update(entry_id, contract, new);
        }
        new
    }

    fn issue_authority_update(&mut self, entry_id: u64, contract: ContractId, to_epoch: u64) {
        let authority_epoch = self.entries[entry_id as usize].authority_epoch;
        let chain_id = self.entries[entry_id as usize].chain_id.clone();
        let sender = Address::Multisig(self.epochs[&authority_epoch].multisig.clone());
        let new_addr = Address::Multisig(self.epochs[&to_epoch].multisig.clone());
        let target = CallTarget::Invoke {
            contract,
            function: "update_contract_owner".into(),
            args: vec![ArgValue::Addr(new_addr)],
        };
        let body = ContractMessage::body_digest_for(&sender, Amount::ZERO, &target, &[]);
        let Some(witness) = self.epoch_witness(authority_epoch, &body) else {
            self.append_ledger(
                "decision",
                LedgerPayload::Decision {
                    entry: entry_id,
                    decision: "authority_update_unwitnessed".into(),
                    detail: "too few healthy validators to sign".into(),
                },
            );
            return;
        };
        let message =
            ContractMessage::new(sender, Amount::ZERO, target, vec![], SpendAuth::Multi(witness));
        self.orders.insert(
            message.msg_id(),
            OutstandingOrder { entry: entry_id, kind: OrderKind::UpdateAuthority { to_epoch } },
        );
        self.outbox.push(OutboxMessage { chain_id, message });
    }

    /// Marks an epoch's keys as stolen. Registrations still pending from
    /// that epoch are cancelled, and if the revoked epoch is the active
    /// one, an emergency rotation fires immediately.
    pub fn revoke_epoch(&mut self, index: u64) -> Result<(), RegistryError> {
        let record = self.epochs.get_mut(&index).ok_or(RegistryError::NoSuchEpoch(index))?;
        let was_active = record.status == EpochStatus::Active;
        record.status = EpochStatus::Revoked;

        let stale_pending: Vec<u64> = self
            .entries
            .iter()
            .filter(|e| e.status == EntryStatus::Pending && e.epoch_index == index)
            .map(|e| e.id)
            .collect();
        for entry_id in stale_pending {
            let entry = &mut self.entries[entry_id as usize];
            entry.status = EntryStatus::Cancelled;
            entry.cancel_requested = true;
            self.append_ledger(
                "decision",
                LedgerPayload::Decision {
                    entry: entry_id,
                    decision: "cancelled".into(),
                    detail: format!("pending under revoked epoch {index}"),
                },
            );
        }

        if was_active {
            self.rotate_unchecked("revocation");
        }
        Ok(())
    }

    /// Feeds one confirmed block back into the registry. Matches receipts
    /// against outstanding orders, follows ownership of tracked contracts,
    /// and books observed tax payments.
    pub fn observe_block(&mut self, chain_id: &str, _block: &Block, receipts: &[Receipt]) {
        for receipt in receipts {
            if let Some(order) = self.orders.get(&receipt.item_id).cloned() {
                self.orders.remove(&receipt.item_id);
                self.settle_order(order, receipt);
                continue;
            }
            // Not one of ours. Track what third parties do to contracts we
            // registered.
            if let ReceiptOutcome::Applied(detail) = &receipt.outcome {
                self.track_foreign_effect(chain_id, detail);
            }
        }
    }

    fn settle_order(&mut self, order: OutstandingOrder, receipt: &Receipt) {
        let entry_id = order.entry;
        match (&order.kind, &receipt.outcome) {
            (OrderKind::Deploy, ReceiptOutcome::Applied(detail)) => {
                let contract = detail.contract.expect("deploy receipt names the contract");
                self.by_contract.insert(contract, entry_id);
                let entry = &mut self.entries[entry_id as usize];
                entry.contract_id = Some(contract);
                if entry.cancel_requested {
                    // Landed after cancellation. Take it back down.
                    self.append_ledger(
                        "decision",
                        LedgerPayload::Decision {
                            entry: entry_id,
                            decision: "late_deployment".into(),
                            detail: "deployment confirmed after cancel, destroying".into(),
                        },
                    );
                    self.issue_destroy(entry_id, "cancelled before deployment confirmed");
                } else {
                    entry.status = EntryStatus::Live;
                    self.append_ledger(
                        "decision",
                        LedgerPayload::Decision {
                            entry: entry_id,
                            decision: "deployment_confirmed".into(),
                            detail: format!("contract {contract}"),
                        },
                    );
                }
            }
            (OrderKind::Deploy, _) => {
                let entry = &mut self.entries[entry_id as usize];
                entry.status = EntryStatus::Cancelled;
                self.append_ledger(
                    "decision",
                    LedgerPayload::Decision {
                        entry: entry_id,
                        decision: "deployment_failed".into(),
                        detail: "target chain rejected the deployment".into(),
                    },
                );
            }
            (OrderKind::Destroy, ReceiptOutcome::Applied(_)) => {
                let entry = &mut self.entries[entry_id as usize];
                entry.status = EntryStatus::Cancelled;
                entry.destroy_in_flight = false;
                self.append_ledger(
                    "decision",
                    LedgerPayload::Decision {
                        entry: entry_id,
                        decision: "destroy_confirmed".into(),
                        detail: String::new(),
                    },
                );
            }
            (OrderKind::Destroy, _) => {
                let entry = &mut self.entries[entry_id as usize];
                entry.destroy_in_flight = false;
                self.append_ledger(
                    "decision",
                    LedgerPayload::Decision {
                        entry: entry_id,
                        decision: "destroy_failed".into(),
                        detail: "destroy call did not apply".into(),
                    },
                );
            }
            (OrderKind::UpdateAuthority { to_epoch }, ReceiptOutcome::Applied(_)) => {
                let entry = &mut self.entries[entry_id as usize];
                entry.authority_epoch = *to_epoch;
                self.append_ledger(
                    "decision",
                    LedgerPayload::Decision {
                        entry: entry_id,
                        decision: "authority_updated".into(),
                        detail: format!("authority now epoch {to_epoch}"),
                    },
                );
            }
            (OrderKind::UpdateAuthority { .. }, _) => {
                self.append_ledger(
                    "decision",
                    LedgerPayload::Decision {
                        entry: entry_id,
                        decision: "authority_update_failed".into(),
                        detail: "update call did not apply".into(),
                    },
                );
            }
        }
    }

    fn track_foreign_effect(&mut self, chain_id: &str, detail: &AppliedDetail) {
        let Some(contract) = detail.contract else { return };
        let Some(&entry_id) = self.by_contract.get(&contract) else { return };

        if let Some(new_owner) = &detail.ownership_change {
            self.entries[entry_id as usize].current_owner = new_owner.clone();
        }

        // Tax lands as a payout addressed to the multisig that administers
        // the contract.
        if detail.function.as_deref() == Some("buy") {
            let authority_epoch = self.entries[entry_id as usize].authority_epoch;
            let authority = Address::Multisig(self.epochs[&authority_epoch].multisig.clone());
            let tax = detail
                .payouts
                .iter()
                .filter(|p| p.to == authority)
                .fold(Amount::ZERO, |acc, p| acc.checked_add(p.value).expect("tax overflow"));
            if !tax.is_zero() {
                let entry = &mut self.entries[entry_id as usize];
                entry.tax_collected =
                    entry.tax_collected.checked_add(tax).expect("entry tax overflow");
                let total = self.tax_per_epoch.entry(authority_epoch).or_insert(Amount::ZERO);
                *total = total.checked_add(tax).expect("epoch tax overflow");
                self.append_ledger(
                    "tax_observed",
                    LedgerPayload::TaxObserved {
                        entry: entry_id,
                        chain_id: chain_id.to_string(),
                        amount: tax,
                    },
                );
            }
        }

        if detail.destroyed {
            // Destruction we did not order, for example by stolen keys.
            let entry = &mut self.entries[entry_id as usize];
            if entry.status != EntryStatus::Cancelled {
                entry.status = EntryStatus::Cancelled;
                self.append_ledger(
                    "decision",
                    LedgerPayload::Decision {
                        entry: entry_id,
                        decision: "destroyed_externally".into(),
                        detail: "contract destroyed by a call the registry did not order".into(),
                    },
                );
            }
        }
    }

    /// Audit hook: at most one pending or live entry per asset key.
    pub fn check_uniqueness(&self) -> Result<(), UniquenessViolation> {
        let mut counts: BTreeMap<&AssetKey, usize> = BTreeMap::new();
        for entry in self.entries.iter().filter(|e| e.occupies_key()) {
            *counts.entry(&entry.asset_key).or_insert(0) += 1;
        }
        for (key, count) in counts {
            if count > 1 {
                return Err(UniquenessViolation { key: key.clone(), count });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::digest_bytes;

    fn test_config(n: usize, model: FaultModel) -> RegistryConfig {
        RegistryConfig {
            committee_seed: "committee".into(),
            validator_count: n,
            fault_model: model,
            registration_fee: Amount::ZERO,
        }
    }

    fn sample_request(vin: &str, chain: &str) -> RegistrationRequest {
        RegistrationRequest {
            asset_key: AssetKey::new("car", vin),
            attributes: AssetAttributes {
                make: "maker".into(),
                model: "line".into(),
                year: 2020,
            },
            price: Amount::from_coins(10),
            tax_percent: 10,
            owner: Address::for_key(Identity::from_seed("alice").public()),
            target_chain: chain.into(),
        }
    }

    #[test]
    fn quorum_arithmetic_matches_fault_models() {
        assert_eq!(fault_tolerance(4, FaultModel::Byzantine), 1);
        assert_eq!(quorum_size(4, FaultModel::Byzantine), 3);
        assert_eq!(fault_tolerance(3, FaultModel::Crash), 1);
        assert_eq!(quorum_size(3, FaultModel::Crash), 2);
        assert_eq!(fault_tolerance(7, FaultModel::Byzantine), 2);
        assert_eq!(quorum_size(7, FaultModel::Byzantine), 5);
        assert_eq!(quorum_size(5, FaultModel::Crash), 3);
    }

    #[test]
    fn ordering_succeeds_until_quorum_breaks() {
        let mut registry = Registry::new(test_config(4, FaultModel::Byzantine)).unwrap();
        let req = sample_request("V1", "alpha");
        assert!(registry.order_request(&req, &RequestAuth::EndUser).is_ok());

        registry.crash_validator(0).unwrap();
        assert!(registry.order_request(&req, &RequestAuth::EndUser).is_ok());

        registry.crash_validator(1).unwrap();
        let err = registry.order_request(&req, &RequestAuth::EndUser).unwrap_err();
        assert_eq!(err, RegistryError::QuorumUnavailable { needed: 3, healthy: 2 });
    }

    #[test]
    fn crash_model_tolerates_one_of_three() {
        let mut registry = Registry::new(test_config(3, FaultModel::Crash)).unwrap();
        registry.crash_validator(2).unwrap();
        let req = sample_request("V1", "alpha");
        assert!(registry.order_request(&req, &RequestAuth::EndUser).is_ok());
        registry.crash_validator(1).unwrap();
        assert!(matches!(
            registry.order_request(&req, &RequestAuth::EndUser),
            Err(RegistryError::QuorumUnavailable { .. })
        ));
    }

    #[test]
    fn byzantine_votes_count_against_quorum() {
        let mut registry = Registry::new(test_config(4, FaultModel::Byzantine)).unwrap();
        registry.corrupt_validator(3).unwrap();
        let req = sample_request("V1", "alpha");
        assert!(registry.order_request(&req, &RequestAuth::EndUser).is_ok());
        registry.corrupt_validator(2).unwrap();
        assert!(matches!(
            registry.order_request(&req, &RequestAuth::EndUser),
            Err(RegistryError::QuorumUnavailable { .. })
        ));
    }

    #[test]
    fn duplicate_registration_is_rejected_while_occupied() {
        let mut registry = Registry::new(test_config(4, FaultModel::Byzantine)).unwrap();
        registry.register_asset(sample_request("V1", "alpha"), RequestAuth::EndUser).unwrap();
        let err = registry
            .register_asset(sample_request("V1", "beta"), RequestAuth::EndUser)
            .unwrap_err();
        assert!(matches!(err, RegistryError::AlreadyRegistered(_)));
        registry.check_uniqueness().unwrap();
    }

    #[test]
    fn registration_emits_an_authenticated_deployment() {
        let mut registry = Registry::new(test_config(4, FaultModel::Byzantine)).unwrap();
        registry.register_asset(sample_request("V1", "alpha"), RequestAuth::EndUser).unwrap();
        let outbox = registry.drain_outbox();
        assert_eq!(outbox.len(), 1);
        assert_eq!(outbox[0].chain_id, "alpha");

        let message = &outbox[0].message;
        assert_eq!(message.sender, Address::Multisig(registry.active_multisig().clone()));
        // The witness actually authorizes the message body.
        assert!(message.auth.authorizes(&message.sender, &message.body_digest()));
        match &message.target {
            CallTarget::Deploy { class, args } => {
                assert_eq!(*class, ContractClass::AuthCar);
                assert_eq!(args.len(), 6);
            }
            other => panic!("expected deploy, got {other:?}"),
        }
    }

    #[test]
    fn revoked_epoch_witness_is_rejected_at_ordering() {
        let mut registry = Registry::new(test_config(4, FaultModel::Byzantine)).unwrap();
        let req = sample_request("V1", "alpha");
        let body = digest_bytes("request", b"malicious");
        let forge = |epoch: u64, registry: &Registry| {
            let sigs = (0..registry.quorum())
                .map(|i| epoch_validator("committee", epoch, i).sign(&body))
                .collect();
            MultisigWitness::new(sigs)
        };

        // Stolen keys of the active epoch pass before anyone notices.
        let witness = forge(0, &registry);
        assert!(registry
            .order_request(
                &req,
                &RequestAuth::EpochWitness { epoch: 0, witness: witness.clone(), body }
            )
            .is_ok());

        // After revocation the same witness is worthless.
        registry.revoke_epoch(0).unwrap();
        let err = registry
            .order_request(&req, &RequestAuth::EpochWitness { epoch: 0, witness, body })
            .unwrap_err();
        assert_eq!(err, RegistryError::BadWitness);

        // The new epoch's witness works.
        let witness = forge(1, &registry);
        assert!(registry
            .order_request(&req, &RequestAuth::EpochWitness { epoch: 1, witness, body })
            .is_ok());
    }

    #[test]
    fn validate_multisig_honors_threshold_distinctness_and_revocation() {
        let mut registry = Registry::new(test_config(4, FaultModel::Byzantine)).unwrap();
        let addr = registry.active_multisig().clone();
        let body = digest_bytes("request", b"check");

        let sig = |i: usize| epoch_validator("committee", 0, i).sign(&body);
        let full = MultisigWitness::new(vec![sig(0), sig(1), sig(2)]);
        assert!(registry.validate_multisig(&full, &addr, &body));

        // A duplicate signature counts once: two distinct plus a repeat
        // does not meet a threshold of three.
        let padded = MultisigWitness::new(vec![sig(0), sig(1), sig(1)]);
        assert!(!registry.validate_multisig(&padded, &addr, &body));

        registry.revoke_epoch(0).unwrap();
        assert!(!registry.validate_multisig(&full, &addr, &body));
    }

    #[test]
    fn rotation_with_no_live_contracts_emits_nothing() {
        let mut registry = Registry::new(test_config(4, FaultModel::Byzantine)).unwrap();
        let new_epoch = registry.rotate_epoch().unwrap();
        assert_eq!(new_epoch, 1);
        assert_eq!(registry.active_epoch(), 1);
        assert!(registry.drain_outbox().is_empty());
        assert_eq!(registry.epoch(0).unwrap().status, EpochStatus::Retired);
    }

    #[test]
    fn revoking_a_retired_epoch_does_not_rotate_again() {
        let mut registry = Registry::new(test_config(4, FaultModel::Byzantine)).unwrap();
        registry.rotate_epoch().unwrap();
        assert_eq!(registry.active_epoch(), 1);
        registry.revoke_epoch(0).unwrap();
        assert_eq!(registry.active_epoch(), 1);
        assert!(registry.is_revoked(0));
        assert!(matches!(registry.revoke_epoch(9), Err(RegistryError::NoSuchEpoch(9))));
    }

    #[test]
    fn revoking_the_active_epoch_rotates_and_cancels_its_pendings() {
        let mut registry = Registry::new(test_config(4, FaultModel::Byzantine)).unwrap();
        let entry = registry
            .register_asset(sample_request("V1", "alpha"), RequestAuth::EndUser)
            .unwrap();
        registry.revoke_epoch(0).unwrap();
        assert_eq!(registry.active_epoch(), 1);
        assert_eq!(registry.entry(entry).unwrap().status, EntryStatus::Cancelled);
        // The key is free again under the new epoch.
        assert!(registry.register_asset(sample_request("V1", "beta"), RequestAuth::EndUser).is_ok());
    }
}
