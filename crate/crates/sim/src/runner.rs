//! Executes a scenario tick by tick. Within one tick: scheduled events
//! fire in file order, saturation traffic is topped up, registry orders go
//! out, every chain produces in declaration order with the registry
//! observing each new block, the swap coordinator acts, and invariants are
//! checked. Nothing here consults a clock or an unseeded random source, so
//! a scenario file fully determines the run.

use std::collections::{BTreeMap, BTreeSet};

use chainsim_core::address::{Address, MultisigWitness};
use chainsim_core::amount::Amount;
use chainsim_core::block::PayloadItem;
use chainsim_core::chain::{Chain, ChainConfig, ReceiptOutcome, SubmitError};
use chainsim_core::codec::{digest_bytes, Digest};
use chainsim_core::contract::{
    preimage_digest, ArgValue, CallTarget, ContractClass, ContractId, ContractMessage,
    ContractState,
};
use chainsim_core::keys::Identity;
use chainsim_core::registry::{
    epoch_validator, AssetAttributes, AssetKey, FaultModel, RegistrationRequest, Registry,
    RegistryConfig, RequestAuth,
};
use chainsim_core::swap::{FaultSchedule, LegPlan, SwapCoordinator, SwapItem, SwapPlan};
use chainsim_core::tx::{Outpoint, SpendAuth, Transfer, TxOutput};

use crate::metrics::{self, MetricsReport};
use crate::scenario::{Action, ChainDecl, InputDecl, LegDecl, ScenarioError, ScenarioFile};

#[derive(Clone, Debug)]
pub struct LabeledItem {
    pub chain_id: String,
    pub item_id: Digest,
}

/// A registry or submission refusal that the scenario deliberately
/// provoked. Kept for inspection instead of aborting the run; structural
/// mistakes in the file abort as ScenarioError instead.
#[derive(Clone, Debug)]
pub struct ActionFailure {
    pub tick: u64,
    pub context: String,
    pub detail: String,
}

pub struct RunOutcome {
    pub chain_order: Vec<String>,
    pub chains: BTreeMap<String, Chain>,
    pub registry: Option<Registry>,
    pub coordinator: SwapCoordinator,
    pub labels: BTreeMap<String, LabeledItem>,
    pub action_errors: Vec<ActionFailure>,
    pub report: MetricsReport,
}

#[derive(Clone, Debug)]
pub enum RunError {
    Scenario(ScenarioError),
    /// A mid-run invariant broke: supply drifted or uniqueness failed.
    Invariant(String),
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Scenario(e) => write!(f, "{e}"),
            RunError::Invariant(msg) => write!(f, "invariant violation: {msg}"),
        }
    }
}

impl std::error::Error for RunError {}

/// Identity a scenario actor name resolves to, derivable by tests as well.
pub fn actor_identity(scenario_seed: &str, name: &str) -> Identity {
    Identity::from_seed(&format!("{scenario_seed}/actor/{name}"))
}

pub fn actor_address(scenario_seed: &str, name: &str) -> Address {
    Address::for_key(actor_identity(scenario_seed, name).public())
}

struct Saturation {
    chain_id: String,
    payer: Identity,
    payer_addr: Address,
    tip: Outpoint,
    value: Amount,
    from: u64,
    until: u64,
}

struct Runner<'a> {
    file: &'a ScenarioFile,
    chain_order: Vec<String>,
    chains: BTreeMap<String, Chain>,
    registry: Option<Registry>,
    coordinator: SwapCoordinator,
    labels: BTreeMap<String, LabeledItem>,
    action_errors: Vec<ActionFailure>,
    saturations: Vec<Saturation>,
    stolen_epochs: BTreeSet<u64>,
    warnings: Vec<String>,
}

pub fn run_scenario(file: &ScenarioFile) -> Result<RunOutcome, RunError> {
    crate::scenario::validate(file).map_err(RunError::Scenario)?;

    let mut runner = Runner::build(file)?;
    let mut next_event = 0usize;

    for now in 0..=file.ticks {
        while next_event < file.events.len() && file.events[next_event].0 == now {
            let (tick, action) = &file.events[next_event];
            runner
                .fire(*tick, action)
                .map_err(|detail| {
                    RunError::Scenario(ScenarioError::Event { index: next_event, tick: *tick, detail })
                })?;
            next_event += 1;
        }

        runner.top_up_saturation(now);
        runner.drain_outbox();
        runner.produce_blocks(now);
        runner.coordinator_step(now);
        runner.drain_outbox();
        runner.check_invariants()?;
    }

    Ok(runner.finish())
}

impl<'a> Runner<'a> {
    fn build(file: &'a ScenarioFile) -> Result<Runner<'a>, RunError> {
        let mut chains = BTreeMap::new();
        let mut chain_order = Vec::new();
        for decl in &file.chains {
            let config = chain_config(file, decl);
            let chain = Chain::new(config).map_err(|e| {
                RunError::Scenario(ScenarioError::Invalid(format!(
                    "chain {}: {e}",
                    decl.chain_id
                )))
            })?;
            chain_order.push(decl.chain_id.clone());
            chains.insert(decl.chain_id.clone(), chain);
        }

        let registry = match &file.registry {
            None => None,
            Some(decl) => {
                let fault_model = match decl.fault_model.as_str() {
                    "crash" => FaultModel::Crash,
                    _ => FaultModel::Byzantine,
                };
                let config = RegistryConfig {
                    committee_seed: decl.committee_seed.clone(),
                    validator_count: decl.validator_count,
                    fault_model,
                    registration_fee: decl.registration_fee,
                };
                Some(Registry::new(config).map_err(|e| {
                    RunError::Scenario(ScenarioError::Invalid(format!("registry: {e}")))
                })?)
            }
        };

        Ok(Runner {
            file,
            chain_order,
            chains,
            registry,
            coordinator: SwapCoordinator::new(),
            labels: BTreeMap::new(),
            action_errors: Vec::new(),
            saturations: Vec::new(),
            stolen_epochs: BTreeSet::new(),
            warnings: Vec::new(),
        })
    }

    fn actor(&self, name: &str) -> Identity {
        actor_identity(&self.file.seed, name)
    }

    fn actor_addr(&self, name: &str) -> Address {
        actor_address(&self.file.seed, name)
    }

    fn chain(&self, id: &str) -> Result<&Chain, String> {
        self.chains.get(id).ok_or_else(|| format!("chain {id} is not declared"))
    }

    fn chain_mut(&mut self, id: &str) -> Result<&mut Chain, String> {
        self.chains.get_mut(id).ok_or_else(|| format!("chain {id} is not declared"))
    }

    /// Resolves `gen:<idx>` against the chain's genesis outputs and
    /// `<label>:<idx>` against an earlier labeled item on the same chain.
    fn resolve_outpoint(&self, chain_id: &str, reference: &str) -> Result<Outpoint, String> {
        if let Some(index) = reference.strip_prefix("gen:") {
            let index: u32 =
                index.parse().map_err(|_| format!("bad genesis index in {reference:?}"))?;
            return Ok(self.chain(chain_id)?.genesis_outpoint(index));
        }
        let (label, index) = reference
            .rsplit_once(':')
            .ok_or_else(|| format!("outpoint ref {reference:?} is not gen:<i> or <label>:<i>"))?;
        let index: u32 = index.parse().map_err(|_| format!("bad output index in {reference:?}"))?;
        let item = self
            .labels
            .get(label)
            .ok_or_else(|| format!("label {label} does not name an earlier item"))?;
        if item.chain_id != chain_id {
            return Err(format!(
                "label {label} lives on chain {}, not {chain_id}",
                item.chain_id
            ));
        }
        Ok(Outpoint::new(item.item_id, index))
    }

    fn resolve_outpoints(&self, chain_id: &str, refs: &[String]) -> Result<Vec<Outpoint>, String> {
        refs.iter().map(|r| self.resolve_outpoint(chain_id, r)).collect()
    }

    /// `asset:<class>:<natural_id>` through the registry, any other string
    /// as the label of a deploying event whose receipt names the contract.
    fn resolve_contract(&self, reference: &str) -> Result<(String, ContractId), String> {
        if let Some(rest) = reference.strip_prefix("asset:") {
            let (class, natural) = rest
                .split_once(':')
                .ok_or_else(|| format!("asset ref {reference:?} is not asset:<class>:<id>"))?;
            let registry =
                self.registry.as_ref().ok_or("asset refs need a registry section")?;
            let entry = registry
                .occupying_entry(&AssetKey::new(class, natural))
                .ok_or_else(|| format!("no live registration for {rest}"))?;
            let contract = entry
                .contract_id
                .ok_or_else(|| format!("registration {rest} has no deployed contract yet"))?;
            return Ok((entry.chain_id.clone(), contract));
        }
        let item = self
            .labels
            .get(reference)
            .ok_or_else(|| format!("label {reference} does not name an earlier item"))?;
        let receipt = self
            .chain(&item.chain_id)?
            .receipt_for(&item.item_id)
            .ok_or_else(|| format!("item {reference} is not in a block yet"))?;
        match &receipt.outcome {
            ReceiptOutcome::Applied(detail) => detail
                .contract
                .ok_or_else(|| format!("item {reference} did not touch a contract"))
                .map(|c| (item.chain_id.clone(), c)),
            other => Err(format!("item {reference} did not apply: {other:?}")),
        }
    }

    fn submit(
        &mut self,
        tick: u64,
        chain_id: &str,
        label: &str,
        item: PayloadItem,
    ) -> Result<(), String> {
        let item_id = item.item_id();
        match self.chain_mut(chain_id)?.submit(item) {
            Ok(_) => {
                self.labels.insert(
                    label.to_string(),
                    LabeledItem { chain_id: chain_id.to_string(), item_id },
                );
                Ok(())
            }
            Err(SubmitError::Duplicate(_)) => {
                self.action_errors.push(ActionFailure {
                    tick,
                    context: format!("submit {label}"),
                    detail: "duplicate item".into(),
                });
                Ok(())
            }
        }
    }

    fn registry_mut(&mut self) -> Result<&mut Registry, String> {
        self.registry.as_mut().ok_or_else(|| "this event needs a registry section".to_string())
    }

    fn note_registry_failure(&mut self, tick: u64, context: &str, detail: String) {
        self.action_errors.push(ActionFailure { tick, context: context.to_string(), detail });
    }

    fn fire(&mut self, tick: u64, action: &Action) -> Result<(), String> {
        match action {
            Action::SubmitTx { chain, label, inputs, outputs } => {
                let tx = self.build_transfer(chain, inputs, outputs)?;
                self.submit(tick, chain, label, PayloadItem::Transfer(tx))
            }
            Action::DeployLockbox {
                chain,
                label,
                locker,
                beneficiary,
                amount,
                funding,
                secret,
                timeout_height,
            } => {
                let funding = self.resolve_outpoints(chain, funding)?;
                let message = ContractMessage::single_signed(
                    &self.actor(locker),
                    *amount,
                    CallTarget::Deploy {
                        class: ContractClass::HtlcLockbox,
                        args: vec![
                            ArgValue::Hash(preimage_digest(secret)),
                            ArgValue::Addr(self.actor_addr(beneficiary)),
                            ArgValue::Int(*timeout_height),
                        ],
                    },
                    funding,
                );
                self.submit(tick, chain, label, PayloadItem::Message(message))
            }
            Action::Claim { chain, label, contract, claimer, secret } => {
                let (home, id) = self.resolve_contract(contract)?;
                require_chain(chain, &home)?;
                let message = ContractMessage::single_signed(
                    &self.actor(claimer),
                    Amount::ZERO,
                    CallTarget::Invoke {
                        contract: id,
                        function: "claim".into(),
                        args: vec![ArgValue::Str(secret.clone())],
                    },
                    vec![],
                );
                self.submit(tick, chain, label, PayloadItem::Message(message))
            }
            Action::Refund { chain, label, contract, caller } => {
                let (home, id) = self.resolve_contract(contract)?;
                require_chain(chain, &home)?;
                let message = ContractMessage::single_signed(
                    &self.actor(caller),
                    Amount::ZERO,
                    CallTarget::Invoke { contract: id, function: "refund".into(), args: vec![] },
                    vec![],
                );
                self.submit(tick, chain, label, PayloadItem::Message(message))
            }
            Action::UpdatePrice { chain, label, contract, caller, new_price } => {
                let (home, id) = self.resolve_contract(contract)?;
                require_chain(chain, &home)?;
                let message = ContractMessage::single_signed(
                    &self.actor(caller),
                    Amount::ZERO,
                    CallTarget::Invoke {
                        contract: id,
                        function: "update_price".into(),
                        args: vec![ArgValue::Money(*new_price)],
                    },
                    vec![],
                );
                self.submit(tick, chain, label, PayloadItem::Message(message))
            }
            Action::RegisterAsset {
                asset_class,
                natural_id,
                make,
                model,
                year,
                price,
                tax_percent,
                owner,
                target_chain,
                witness_epoch,
            } => {
                let request = RegistrationRequest {
                    asset_key: AssetKey::new(asset_class, natural_id),
                    attributes: AssetAttributes {
                        make: make.clone(),
                        model: model.clone(),
                        year: *year,
                    },
                    price: *price,
                    tax_percent: *tax_percent,
                    owner: self.actor_addr(owner),
                    target_chain: target_chain.clone(),
                };
                let auth = match witness_epoch {
                    None => RequestAuth::EndUser,
                    Some(epoch) => self.forged_request_auth(*epoch, &request)?,
                };
                let context = format!("register {asset_class}:{natural_id}");
                match self.registry_mut()?.register_asset(request, auth) {
                    Ok(_) => Ok(()),
                    Err(e) => {
                        self.note_registry_failure(tick, &context, e.to_string());
                        Ok(())
                    }
                }
            }
            Action::Buy { chain, label, contract, buyer, value, funding, expected_owner } => {
                let (home, id) = self.resolve_contract(contract)?;
                require_chain(chain, &home)?;
                let named_owner = match expected_owner {
                    Some(actor) => self.actor_addr(actor),
                    None => self.current_owner(chain, &id)?,
                };
                let funding = self.resolve_outpoints(chain, funding)?;
                let message = ContractMessage::single_signed(
                    &self.actor(buyer),
                    *value,
                    CallTarget::Invoke {
                        contract: id,
                        function: "buy".into(),
                        args: vec![ArgValue::Addr(named_owner)],
                    },
                    funding,
                );
                self.submit(tick, chain, label, PayloadItem::Message(message))
            }
            Action::Cancel { asset_class, natural_id, requester } => {
                let key = AssetKey::new(asset_class, natural_id);
                let requester = self.actor_addr(requester);
                let context = format!("cancel {asset_class}:{natural_id}");
                match self.registry_mut()?.cancel_registration(&key, &requester) {
                    Ok(()) => Ok(()),
                    Err(e) => {
                        self.note_registry_failure(tick, &context, e.to_string());
                        Ok(())
                    }
                }
            }
            Action::Rotate {} => match self.registry_mut()?.rotate_epoch() {
                Ok(_) => Ok(()),
                Err(e) => {
                    self.note_registry_failure(tick, "rotate", e.to_string());
                    Ok(())
                }
            },
            Action::StealKeys { epoch } => {
                self.registry_mut()?;
                self.stolen_epochs.insert(*epoch);
                self.warnings.push(format!("tick {tick}: keys of epoch {epoch} exfiltrated"));
                Ok(())
            }
            Action::DetectTheft {} => {
                let stolen: Vec<u64> = self.stolen_epochs.iter().copied().collect();
                if stolen.is_empty() {
                    return Err("detect_theft without a prior steal_keys".into());
                }
                for epoch in stolen {
                    let outcome = self.registry_mut()?.revoke_epoch(epoch);
                    if let Err(e) = outcome {
                        self.note_registry_failure(tick, "revoke", e.to_string());
                    }
                }
                Ok(())
            }
            Action::CrashValidator { index } => {
                let outcome = self.registry_mut()?.crash_validator(*index);
                if let Err(e) = outcome {
                    self.note_registry_failure(tick, "crash_validator", e.to_string());
                }
                Ok(())
            }
            Action::CorruptValidator { index } => {
                let outcome = self.registry_mut()?.corrupt_validator(*index);
                if let Err(e) = outcome {
                    self.note_registry_failure(tick, "corrupt_validator", e.to_string());
                }
                Ok(())
            }
            Action::MaliciousDestroy { chain, label, contract, witness_epoch } => {
                let (home, id) = self.resolve_contract(contract)?;
                require_chain(chain, &home)?;
                let message = self.forged_destroy(*witness_epoch, id)?;
                self.submit(tick, chain, label, PayloadItem::Message(message))
            }
            Action::StartSwap {
                session_id,
                category,
                secret,
                initiator,
                responder,
                initiator_leg,
                responder_leg,
                crash_at,
                refuse_reveal,
            } => {
                let plan = SwapPlan {
                    session_id: session_id.clone(),
                    category: *category,
                    secret: secret.clone(),
                    initiator: self.actor(initiator),
                    responder: self.actor(responder),
                    initiator_leg: self.build_leg(initiator_leg)?,
                    responder_leg: self.build_leg(responder_leg)?,
                    faults: FaultSchedule { crash_at: *crash_at, refuse_reveal: *refuse_reveal },
                };
                self.coordinator
                    .start_session(plan, &self.chains)
                    .map_err(|e| format!("swap {session_id}: {e}"))?;
                Ok(())
            }
            Action::SaturateChain { chain, payer, source, until_tick } => {
                let tip = self.resolve_outpoint(chain, source)?;
                let value = self
                    .chain(chain)?
                    .state()
                    .utxos
                    .get(&tip)
                    .ok_or_else(|| format!("saturation source {source} is not an unspent output"))?
                    .value;
                let payer_id = self.actor(payer);
                let payer_addr = self.actor_addr(payer);
                self.saturations.push(Saturation {
                    chain_id: chain.clone(),
                    payer: payer_id,
                    payer_addr,
                    tip,
                    value,
                    from: tick,
                    until: until_tick.unwrap_or(self.file.ticks),
                });
                Ok(())
            }
        }
    }

    fn build_transfer(
        &self,
        chain_id: &str,
        inputs: &[InputDecl],
        outputs: &[crate::scenario::OutputDecl],
    ) -> Result<Transfer, String> {
        let mut signers = Vec::new();
        for input in inputs {
            let outpoint = self.resolve_outpoint(chain_id, &input.r#ref)?;
            signers.push((outpoint, self.actor(&input.signer)));
        }
        let outputs = outputs
            .iter()
            .map(|o| TxOutput { value: o.amount, recipient: self.actor_addr(&o.to) })
            .collect();
        let spends = signers.iter().map(|(op, id)| (*op, id)).collect();
        Ok(Transfer::signed(spends, outputs))
    }

    fn build_leg(&self, decl: &LegDecl) -> Result<LegPlan, String> {
        let item = if let Some(asset) = &decl.asset {
            let (home, id) = self.resolve_contract(asset)?;
            require_chain(&decl.chain, &home)?;
            SwapItem::Asset { contract: id }
        } else {
            let amount = decl.amount.ok_or("currency leg is missing its amount")?;
            let refs = decl.funding.as_ref().ok_or("currency leg is missing its funding")?;
            SwapItem::Currency { amount, funding: self.resolve_outpoints(&decl.chain, refs)? }
        };
        Ok(LegPlan { chain_id: decl.chain.clone(), item, timeout_height: decl.timeout_height })
    }

    fn current_owner(&self, chain_id: &str, id: &ContractId) -> Result<Address, String> {
        let instance = self
            .chain(chain_id)?
            .contract(id)
            .ok_or_else(|| format!("contract {id} does not exist on {chain_id}"))?;
        match &instance.state {
            ContractState::Car(car) => Ok(car.owner.clone()),
            ContractState::AuthCar(car) => Ok(car.owner.clone()),
            ContractState::Lockbox(_) => Err("a lockbox has no purchasable owner".into()),
        }
    }

    /// Builds the epoch-witness auth a thief with that epoch's published
    /// derivation would build. Only allowed after steal_keys marked the
    /// epoch stolen, to keep drills explicit.
    fn forged_request_auth(
        &self,
        epoch: u64,
        request: &RegistrationRequest,
    ) -> Result<RequestAuth, String> {
        if !self.stolen_epochs.contains(&epoch) {
            return Err(format!("witness_epoch {epoch} was never stolen in this scenario"));
        }
        let registry = self.registry.as_ref().ok_or("this event needs a registry section")?;
        let record = registry.epoch(epoch).ok_or_else(|| format!("no epoch {epoch}"))?;
        let body_bytes =
            serde_json::to_vec(request).map_err(|e| format!("request does not serialize: {e}"))?;
        let body = digest_bytes("registration-request", &body_bytes);
        let seed = &registry.config().committee_seed;
        let sigs = (0..record.threshold as usize)
            .map(|i| epoch_validator(seed, epoch, i).sign(&body))
            .collect();
        Ok(RequestAuth::EpochWitness { epoch, witness: MultisigWitness::new(sigs), body })
    }

    /// A destroy call authenticated by a past epoch's multisig, submitted
    /// straight to the chain the way a thief would, skipping the registry.
    fn forged_destroy(&self, epoch: u64, contract: ContractId) -> Result<ContractMessage, String> {
        if !self.stolen_epochs.contains(&epoch) {
            return Err(format!("witness_epoch {epoch} was never stolen in this scenario"));
        }
        let registry = self.registry.as_ref().ok_or("this event needs a registry section")?;
        let record = registry.epoch(epoch).ok_or_else(|| format!("no epoch {epoch}"))?;
        let sender = Address::Multisig(record.multisig.clone());
        let target =
            CallTarget::Invoke { contract, function: "destroy".into(), args: vec![] };
        let body = ContractMessage::body_digest_for(&sender, Amount::ZERO, &target, &[]);
        let seed = &registry.config().committee_seed;
        let sigs = (0..record.threshold as usize)
            .map(|i| epoch_validator(seed, epoch, i).sign(&body))
            .collect();
        Ok(ContractMessage::new(
            sender,
            Amount::ZERO,
            target,
            vec![],
            SpendAuth::Multi(MultisigWitness::new(sigs)),
        ))
    }

    /// Keeps each saturated chain's mempool holding at least one block's
    /// worth of chained self-payments.
    fn top_up_saturation(&mut self, now: u64) {
        for sat in &mut self.saturations {
            if !(sat.from <= now && now <= sat.until) {
                continue;
            }
            let Some(chain) = self.chains.get_mut(&sat.chain_id) else { continue };
            let capacity = chain.config().block_capacity;
            while chain.mempool_len() < capacity * 2 {
                let tx = Transfer::signed(
                    vec![(sat.tip, &sat.payer)],
                    vec![TxOutput { value: sat.value, recipient: sat.payer_addr.clone() }],
                );
                let tx_id = tx.tx_id();
                if chain.submit(PayloadItem::Transfer(tx)).is_err() {
                    break;
                }
                sat.tip = Outpoint::new(tx_id, 0);
            }
        }
    }

    fn drain_outbox(&mut self) {
        let Some(registry) = &mut self.registry else { return };
        for out in registry.drain_outbox() {
            let msg_id = out.message.msg_id();
            match self.chains.get_mut(&out.chain_id) {
                None => registry.order_submission_failed(&msg_id, "unknown chain"),
                Some(chain) => {
                    if chain.submit(PayloadItem::Message(out.message)).is_err() {
                        registry.order_submission_failed(&msg_id, "duplicate submission");
                    }
                }
            }
        }
    }

    fn produce_blocks(&mut self, now: u64) {
        for chain_id in &self.chain_order {
            let chain = self.chains.get_mut(chain_id).expect("declared chain");
            let capacity = chain.config().block_capacity;
            let Some(produced) = chain.tick(now) else { continue };

            if let Some(registry) = &mut self.registry {
                registry.observe_block(chain_id, &produced.block, &produced.receipts);
            }
            let saturating = self
                .saturations
                .iter()
                .any(|s| s.chain_id == *chain_id && s.from < now && now <= s.until);
            if saturating && produced.block.payload.len() < capacity {
                self.warnings.push(format!(
                    "tick {now}: chain {chain_id} not saturated, block carried {} of {capacity}",
                    produced.block.payload.len()
                ));
            }
        }
    }

    fn coordinator_step(&mut self, now: u64) {
        self.coordinator.step(&mut self.chains, now);
    }

    fn check_invariants(&self) -> Result<(), RunError> {
        for chain in self.chains.values() {
            chain.check_conservation().map_err(|e| RunError::Invariant(e.to_string()))?;
        }
        if let Some(registry) = &self.registry {
            registry.check_uniqueness().map_err(|e| {
                RunError::Invariant(format!(
                    "asset {}:{} is registered {} times",
                    e.key.asset_class, e.key.natural_id, e.count
                ))
            })?;
        }
        Ok(())
    }

    fn finish(self) -> RunOutcome {
        let report = metrics::build_report(
            self.file,
            &self.chain_order,
            &self.chains,
            self.registry.as_ref(),
            &self.coordinator,
            self.warnings.clone(),
        );
        RunOutcome {
            chain_order: self.chain_order,
            chains: self.chains,
            registry: self.registry,
            coordinator: self.coordinator,
            labels: self.labels,
            action_errors: self.action_errors,
            report,
        }
    }
}

fn require_chain(declared: &str, resolved: &str) -> Result<(), String> {
    if declared == resolved {
        Ok(())
    } else {
        Err(format!("event names chain {declared} but the contract lives on {resolved}"))
    }
}

fn chain_config(file: &ScenarioFile, decl: &ChainDecl) -> ChainConfig {
    ChainConfig {
        chain_id: decl.chain_id.clone(),
        block_interval_ticks: decl.block_interval_ticks,
        block_capacity: decl.block_capacity,
        mining_reward: decl.mining_reward,
        miner_seeds: decl.miner_seeds.clone(),
        rng_seed: decl.rng_seed,
        genesis_allocations: decl
            .genesis
            .iter()
            .map(|note| (actor_address(&file.seed, &note.owner), note.amount))
            .collect(),
    }
}
