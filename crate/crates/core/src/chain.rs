//! A single permissionless chain: mempool, scheduled block production, and
//! the ledger state that blocks fold into.
//!
//! Production is deterministic. Submissions queue in arrival order, a seeded
//! generator draws the producing miner, and a block appears at every tick
//! that lands on the configured interval, empty or not. Items are validated
//! at production time against the state as it evolves inside the block, so a
//! payment can spend an output created two positions earlier in the same
//! block. Invalid items are evicted with a receipt and do not consume block
//! capacity.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::address::Address;
use crate::amount::Amount;
use crate::block::{Block, PayloadItem};
use crate::codec::{digest_bytes, Canonical, CanonicalWriter, Digest};
use crate::contract::{
    execute, instantiate, CallContext, CallError, CallTarget, ContractId, ContractInstance,
    ContractMessage, Payout,
};
use crate::keys::{Identity, PublicKey};
use crate::tx::{
    apply_transfer, validate_transfer, Outpoint, SpentIndex, TransferError, TxOutput, UtxoSet,
};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    pub chain_id: String,
    /// Ticks between blocks. A block is produced at every tick that is a
    /// positive multiple of this.
    pub block_interval_ticks: u64,
    /// Maximum items included per block.
    pub block_capacity: usize,
    /// Minted to the producing miner, once per block.
    pub mining_reward: Amount,
    /// Seeds for the miner identities taking part in the proposer draw.
    pub miner_seeds: Vec<String>,
    pub rng_seed: u64,
    /// Initial holdings, minted as the genesis outputs in order.
    pub genesis_allocations: Vec<(Address, Amount)>,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Error)]
pub enum ChainConfigError {
    #[error("block interval must be at least one tick")]
    ZeroInterval,
    #[error("block capacity must be at least one item")]
    ZeroCapacity,
    #[error("at least one miner is required")]
    NoMiners,
}

/// Ledger state at some height.
#[derive(Clone, Debug)]
pub struct ChainState {
    pub height: u64,
    pub tip_hash: Digest,
    pub utxos: UtxoSet,
    pub spent: SpentIndex,
    pub contracts: BTreeMap<ContractId, ContractInstance>,
}

impl ChainState {
    /// Digest over the full state, used for replay verification and dumps.
    pub fn digest(&self) -> Digest {
        let mut w = CanonicalWriter::new();
        w.put_u64(self.height);
        w.put_digest(&self.tip_hash);
        w.put_count(self.utxos.len());
        for (outpoint, output) in self.utxos.iter() {
            outpoint.encode(&mut w);
            output.encode(&mut w);
        }
        w.put_count(self.spent.len());
        for (outpoint, spender) in &self.spent {
            outpoint.encode(&mut w);
            w.put_digest(spender);
        }
        w.put_count(self.contracts.len());
        for instance in self.contracts.values() {
            instance.encode(&mut w);
        }
        digest_bytes("chain-state", w.as_bytes())
    }
}

/// Why a mempool item was dropped at production time.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvictReason {
    Transfer(TransferError),
    Message(MessageError),
}

/// Validation failure for a contract message, found before execution.
#[derive(Clone, PartialEq, Eq, Debug, Error, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageError {
    #[error("funding input {index} references unknown outpoint")]
    UnknownOutpoint { index: usize, outpoint: Outpoint },
    #[error("funding input {index} is already spent")]
    DoubleSpend { index: usize, outpoint: Outpoint },
    #[error("funding input {index} is not authorized by its owner")]
    BadSignature { index: usize },
    #[error("message authorization does not match the sender address")]
    BadSenderAuth,
    #[error("funding totals {funded} but the message declares {declared}")]
    ValueMismatch { funded: Amount, declared: Amount },
    #[error("message invokes unknown contract {0}")]
    UnknownContract(ContractId),
    #[error("funding value overflows")]
    Overflow,
}

/// What one applied message changed.
#[derive(Clone, PartialEq, Eq, Debug, Default, Serialize, Deserialize)]
pub struct AppliedDetail {
    /// Target instance, or the id assigned to a fresh deployment.
    pub contract: Option<ContractId>,
    pub deployed: bool,
    pub function: Option<String>,
    pub payouts: Vec<Payout>,
    pub ownership_change: Option<Address>,
    pub destroyed: bool,
    pub state_updates: Vec<(String, String)>,
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReceiptOutcome {
    /// Included and applied.
    Applied(AppliedDetail),
    /// Included, but a guard failed; the attached value came back in full.
    Reverted { error: CallError, refunded: Amount },
    /// Dropped from the mempool without entering a block.
    Evicted { reason: EvictReason },
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct Receipt {
    pub tick: u64,
    pub height: u64,
    pub item_id: Digest,
    pub kind: String,
    pub outcome: ReceiptOutcome,
}

impl Receipt {
    pub fn included(&self) -> bool {
        !matches!(self.outcome, ReceiptOutcome::Evicted { .. })
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Error)]
pub enum SubmitError {
    #[error("item {0} was already submitted")]
    Duplicate(Digest),
}

#[derive(Clone, PartialEq, Eq, Debug, Error)]
pub enum ReplayError {
    #[error("block height {got} does not follow tip height {tip}")]
    HeightGap { tip: u64, got: u64 },
    #[error("block at height {height} does not link to the tip hash")]
    BrokenLink { height: u64 },
    #[error("block at height {height} carries an inconsistent hash")]
    BadHash { height: u64 },
    #[error("block at height {height} was produced by an unknown miner")]
    UnknownProducer { height: u64 },
    #[error("block at height {height} contains invalid item {item}: {detail}")]
    InvalidItem { height: u64, item: Digest, detail: String },
}

/// A produced block together with the receipts its production generated,
/// eviction receipts included.
#[derive(Clone, Debug)]
pub struct ProducedBlock {
    pub block: Block,
    pub receipts: Vec<Receipt>,
}

pub struct Chain {
    config: ChainConfig,
    miners: Vec<Identity>,
    state: ChainState,
    mempool: VecDeque<PayloadItem>,
    /// Ids ever accepted by submit, including later-evicted ones.
    seen: BTreeSet<Digest>,
    rng: ChaCha8Rng,
    blocks: Vec<Block>,
    receipts: Vec<Receipt>,
    genesis_supply: Amount,
}

impl Chain {
    pub fn new(config: ChainConfig) -> Result<Chain, ChainConfigError> {
        if config.block_interval_ticks == 0 {
            return Err(ChainConfigError::ZeroInterval);
        }
        if config.block_capacity == 0 {
            return Err(ChainConfigError::ZeroCapacity);
        }
        if config.miner_seeds.is_empty() {
            return Err(ChainConfigError::NoMiners);
        }

        let miners: Vec<Identity> =
            config.miner_seeds.iter().map(|seed| Identity::from_seed(seed)).collect();

        let genesis_hash = genesis_digest(&config);
        let mut utxos = UtxoSet::new();
        let mut genesis_supply = Amount::ZERO;
        for (index, (recipient, value)) in config.genesis_allocations.iter().enumerate() {
            genesis_supply = genesis_supply.checked_add(*value).expect("genesis supply overflow");
            utxos.insert(
                Outpoint { tx_id: genesis_hash, index: index as u32 },
                TxOutput { value: *value, recipient: recipient.clone() },
            );
        }

        let rng = ChaCha8Rng::from_seed(*rng_seed_digest(&config).as_bytes());
        Ok(Chain {
            miners,
            state: ChainState {
                height: 0,
                tip_hash: genesis_hash,
                utxos,
                spent: SpentIndex::new(),
                contracts: BTreeMap::new(),
            },
            mempool: VecDeque::new(),
            seen: BTreeSet::new(),
            rng,
            blocks: Vec::new(),
            receipts: Vec::new(),
            genesis_supply,
            config,
        })
    }

    pub fn config(&self) -> &ChainConfig {
        &self.config
    }

    pub fn chain_id(&self) -> &str {
        &self.config.chain_id
    }

    pub fn height(&self) -> u64 {
        self.state.height
    }

    pub fn tip_hash(&self) -> Digest {
        self.state.tip_hash
    }

    pub fn state(&self) -> &ChainState {
        &self.state
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn receipts(&self) -> &[Receipt] {
        &self.receipts
    }

    /// Latest receipt for an item id, if any.
    pub fn receipt_for(&self, item_id: &Digest) -> Option<&Receipt> {
        self.receipts.iter().rev().find(|r| r.item_id == *item_id)
    }

    pub fn mempool_len(&self) -> usize {
        self.mempool.len()
    }

    pub fn contract(&self, id: &ContractId) -> Option<&ContractInstance> {
        self.state.contracts.get(id)
    }

    pub fn balance_of(&self, address: &Address) -> Amount {
        self.state.utxos.balance_of(address)
    }

    pub fn utxos_owned_by(&self, address: &Address) -> Vec<(Outpoint, TxOutput)> {
        self.state.utxos.owned_by(address).map(|(op, out)| (*op, out.clone())).collect()
    }

    /// The genesis outpoint for allocation `index`.
    pub fn genesis_outpoint(&self, index: u32) -> Outpoint {
        Outpoint { tx_id: genesis_digest(&self.config), index }
    }

    /// Queues an item. Validation happens at production time; the only
    /// reason to refuse here is a repeated id.
    pub fn submit(&mut self, item: PayloadItem) -> Result<Digest, SubmitError> {
        let id = item.item_id();
        if !self.seen.insert(id) {
            return Err(SubmitError::Duplicate(id));
        }
        self.mempool.push_back(item);
        Ok(id)
    }

    /// Advances simulated time. Produces and applies a block when `now`
    /// lands on the interval, and returns it with its receipts.
    pub fn tick(&mut self, now: u64) -> Option<ProducedBlock> {
        if now == 0 || !now.is_multiple_of(self.config.block_interval_ticks) {
            return None;
        }
        Some(self.produce())
    }

    fn produce(&mut self) -> ProducedBlock {
        let height = self.state.height + 1;
        let producer_index = (self.rng.next_u64() % self.miners.len() as u64) as usize;
        let producer = *self.miners[producer_index].public();

        // Trial-apply against a scratch state to pick the payload. The
        // reward is minted first so payload items may spend it.
        let mut scratch = self.state.clone();
        mint_reward(&self.config, &mut scratch, height, &producer);

        let mut payload = Vec::new();
        let mut evictions = Vec::new();
        let tick = height * self.config.block_interval_ticks;
        while payload.len() < self.config.block_capacity {
            let Some(item) = self.mempool.pop_front() else { break };
            match apply_item(&self.config, &mut scratch, &item, height) {
                Ok(_) => payload.push(item),
                Err(reason) => evictions.push(Receipt {
                    tick,
                    height,
                    item_id: item.item_id(),
                    kind: item.kind_name().to_string(),
                    outcome: ReceiptOutcome::Evicted { reason },
                }),
            }
        }

        let block = Block::seal(height, self.state.tip_hash, producer, payload);

        // The real application runs through the same path a replay takes.
        let mut receipts = apply_block(&self.config, &mut self.state, &block)
            .expect("freshly produced block must apply");
        receipts.extend(evictions);

        self.blocks.push(block.clone());
        self.receipts.extend(receipts.iter().cloned());
        ProducedBlock { block, receipts }
    }

    /// Rebuilds a chain from its config and block history, applying each
    /// block exactly the way live production does. Mempool and the proposer
    /// draw are not part of the replayed state.
    pub fn replay(config: ChainConfig, blocks: &[Block]) -> Result<Chain, ReplayError> {
        let mut chain = Chain::new(config).expect("replayed config was valid once");
        for block in blocks {
            if block.height != chain.state.height + 1 {
                return Err(ReplayError::HeightGap { tip: chain.state.height, got: block.height });
            }
            if block.prev_hash != chain.state.tip_hash {
                return Err(ReplayError::BrokenLink { height: block.height });
            }
            if !block.hash_is_consistent() {
                return Err(ReplayError::BadHash { height: block.height });
            }
            if !chain.miners.iter().any(|m| m.public() == &block.producer) {
                return Err(ReplayError::UnknownProducer { height: block.height });
            }
            let receipts = apply_block(&chain.config, &mut chain.state, block)?;
            for item in &block.payload {
                chain.seen.insert(item.item_id());
            }
            chain.receipts.extend(receipts);
            chain.blocks.push(block.clone());
        }
        Ok(chain)
    }

    /// Coins in circulation: unspent outputs plus balances locked inside
    /// contracts.
    pub fn circulating(&self) -> Amount {
        let locked = self
            .state
            .contracts
            .values()
            .fold(Amount::ZERO, |acc, c| acc.checked_add(c.locked).expect("locked overflow"));
        self.state.utxos.total_value().checked_add(locked).expect("supply overflow")
    }

    /// Expected supply after the current height: genesis plus one reward per
    /// block.
    pub fn expected_supply(&self) -> Amount {
        let minted = u128::from(self.config.mining_reward.base_units()) * u128::from(self.state.height);
        let minted = Amount::from_base_units(u64::try_from(minted).expect("reward overflow"));
        self.genesis_supply.checked_add(minted).expect("supply overflow")
    }

    /// Verifies that nothing was created or destroyed outside genesis and
    /// mining rewards.
    pub fn check_conservation(&self) -> Result<(), ConservationError> {
        let circulating = self.circulating();
        let expected = self.expected_supply();
        if circulating == expected {
            Ok(())
        } else {
            Err(ConservationError {
                chain_id: self.config.chain_id.clone(),
                height: self.state.height,
                expected,
                circulating,
            })
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug, Error)]
#[error("chain {chain_id} at height {height} holds {circulating}, expected {expected}")]
pub struct ConservationError {
    pub chain_id: String,
    pub height: u64,
    pub expected: Amount,
    pub circulating: Amount,
}

fn genesis_digest(config: &ChainConfig) -> Digest {
    let mut w = CanonicalWriter::new();
    w.put_str(&config.chain_id);
    w.put_count(config.genesis_allocations.len());
    for (recipient, value) in &config.genesis_allocations {
        recipient.encode(&mut w);
        value.encode(&mut w);
    }
    digest_bytes("genesis", w.as_bytes())
}

fn rng_seed_digest(config: &ChainConfig) -> Digest {
    let mut w = CanonicalWriter::new();
    w.put_str(&config.chain_id);
    w.put_u64(config.rng_seed);
    digest_bytes("chain-rng", w.as_bytes())
}

fn reward_outpoint(config: &ChainConfig, height: u64) -> Outpoint {
    let mut w = CanonicalWriter::new();
    w.put_str(&config.chain_id);
    w.put_u64(height);
    Outpoint { tx_id: digest_bytes("mining-reward", w.as_bytes()), index: 0 }
}

fn mint_reward(config: &ChainConfig, state: &mut ChainState, height: u64, producer: &PublicKey) {
    if config.mining_reward.is_zero() {
        return;
    }
    state.utxos.insert(
        reward_outpoint(config, height),
        TxOutput { value: config.mining_reward, recipient: Address::for_key(producer) },
    );
}

/// Applies a block to the state. Shared verbatim between live production
/// and replay so both arrive at the same receipts and digests.
fn apply_block(
    config: &ChainConfig,
    state: &mut ChainState,
    block: &Block,
) -> Result<Vec<Receipt>, ReplayError> {
    mint_reward(config, state, block.height, &block.producer);
    let tick = block.height * config.block_interval_ticks;

    let mut receipts = Vec::with_capacity(block.payload.len());
    for item in &block.payload {
        let outcome = apply_item(config, state, item, block.height).map_err(|reason| {
            ReplayError::InvalidItem {
                height: block.height,
                item: item.item_id(),
                detail: match &reason {
                    EvictReason::Transfer(e) => e.to_string(),
                    EvictReason::Message(e) => e.to_string(),
                },
            }
        })?;
        receipts.push(Receipt {
            tick,
            height: block.height,
            item_id: item.item_id(),
            kind: item.kind_name().to_string(),
            outcome,
        });
    }

    state.height = block.height;
    state.tip_hash = block.hash;
    Ok(receipts)
}

/// Validates and applies one item. An `Err` means the item cannot enter a
/// block at all; a reverted contract call is still an `Ok` inclusion.
fn apply_item(
    config: &ChainConfig,
    state: &mut ChainState,
    item: &PayloadItem,
    height: u64,
) -> Result<ReceiptOutcome, EvictReason> {
    match item {
        PayloadItem::Transfer(tx) => {
            validate_transfer(tx, &state.utxos, &state.spent).map_err(EvictReason::Transfer)?;
            apply_transfer(tx, &mut state.utxos, &mut state.spent);
            Ok(ReceiptOutcome::Applied(AppliedDetail::default()))
        }
        PayloadItem::Message(msg) => {
            validate_message(state, msg).map_err(EvictReason::Message)?;
            Ok(run_message(config, state, msg, height))
        }
    }
}

/// Structural checks a message must pass before it can enter a block:
/// funding inputs exist, are authorized, and sum to the declared value, and
/// the target instance exists.
fn validate_message(state: &ChainState, msg: &ContractMessage) -> Result<(), MessageError> {
    let body = msg.body_digest();
    if !msg.auth.authorizes(&msg.sender, &body) {
        return Err(MessageError::BadSenderAuth);
    }

    let mut funded = Amount::ZERO;
    let mut used = BTreeSet::new();
    for (index, input) in msg.funding.iter().enumerate() {
        if !used.insert(input.outpoint) {
            return Err(MessageError::DoubleSpend { index, outpoint: input.outpoint });
        }
        let output = match state.utxos.get(&input.outpoint) {
            Some(output) => output,
            None if state.spent.contains_key(&input.outpoint) => {
                return Err(MessageError::DoubleSpend { index, outpoint: input.outpoint });
            }
            None => return Err(MessageError::UnknownOutpoint { index, outpoint: input.outpoint }),
        };
        if !input.auth.authorizes(&output.recipient, &body) {
            return Err(MessageError::BadSignature { index });
        }
        funded = funded.checked_add(output.value).ok_or(MessageError::Overflow)?;
    }
    if funded != msg.value {
        return Err(MessageError::ValueMismatch { funded, declared: msg.value });
    }

    if let CallTarget::Invoke { contract, .. } = &msg.target {
        if !state.contracts.contains_key(contract) {
            return Err(MessageError::UnknownContract(*contract));
        }
    }
    Ok(())
}

/// Consumes the message's funding and executes it. Guard failures refund
/// the attached value to the sender; success mints the call's payouts.
fn run_message(
    config: &ChainConfig,
    state: &mut ChainState,
    msg: &ContractMessage,
    height: u64,
) -> ReceiptOutcome {
    let msg_id = msg.msg_id();
    for input in &msg.funding {
        state.utxos.remove(&input.outpoint);
        state.spent.insert(input.outpoint, msg_id);
    }

    let ctx = CallContext { height };
    let result = match &msg.target {
        CallTarget::Deploy { .. } => {
            let id = ContractId::derive(&config.chain_id, height, &msg_id);
            instantiate(id, msg, &ctx).map(|instance| {
                let detail = AppliedDetail {
                    contract: Some(id),
                    deployed: true,
                    ..AppliedDetail::default()
                };
                (instance, detail)
            })
        }
        CallTarget::Invoke { contract, function, .. } => {
            let instance = state.contracts.get(contract).expect("validated above");
            execute(instance, msg, &ctx).map(|outcome| {
                let detail = AppliedDetail {
                    contract: Some(*contract),
                    deployed: false,
                    function: Some(function.clone()),
                    payouts: outcome.effect.payouts.clone(),
                    ownership_change: outcome.effect.ownership_change.clone(),
                    destroyed: outcome.effect.destroyed,
                    state_updates: outcome.effect.state_updates.clone(),
                };
                (outcome.instance, detail)
            })
        }
    };

    match result {
        Ok((instance, detail)) => {
            for (index, payout) in detail.payouts.iter().enumerate() {
                state.utxos.insert(
                    Outpoint { tx_id: msg_id, index: index as u32 },
                    TxOutput { value: payout.value, recipient: payout.to.clone() },
                );
            }
            state.contracts.insert(instance.id, instance);
            ReceiptOutcome::Applied(detail)
        }
        Err(error) => {
            // All or nothing: the instance stays as it was and the sender
            // gets the attached value back as a fresh output.
            if !msg.value.is_zero() {
                state.utxos.insert(
                    Outpoint { tx_id: msg_id, index: 0 },
                    TxOutput { value: msg.value, recipient: msg.sender.clone() },
                );
            }
            ReceiptOutcome::Reverted { error, refunded: msg.value }
        }
    }
}

/// A tip competing in fork choice.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct ForkTip {
    pub height: u64,
    pub hash: Digest,
}

/// Picks the winning tip: greatest height, ties broken by the
/// lexicographically smallest hash. Returns the index of the winner.
pub fn choose_fork(tips: &[ForkTip]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (index, tip) in tips.iter().enumerate() {
        let better = match best {
            None => true,
            Some(b) => {
                let current = &tips[b];
                tip.height > current.height
                    || (tip.height == current.height && tip.hash.as_bytes() < current.hash.as_bytes())
            }
        };
        if better {
            best = Some(index);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contract::{ArgValue, ContractClass, RequiresFailure};
    use crate::tx::Transfer;

    fn actor(name: &str) -> (Identity, Address) {
        let id = Identity::from_seed(name);
        let addr = Address::for_key(id.public());
        (id, addr)
    }

    fn test_chain(allocs: Vec<(Address, Amount)>) -> Chain {
        Chain::new(ChainConfig {
            chain_id: "test".into(),
            block_interval_ticks: 2,
            block_capacity: 8,
            mining_reward: Amount::from_coins(1),
            miner_seeds: vec!["miner-a".into(), "miner-b".into()],
            rng_seed: 7,
            genesis_allocations: allocs,
        })
        .unwrap()
    }

    #[test]
    fn blocks_appear_only_on_the_interval() {
        let mut chain = test_chain(vec![]);
        assert!(chain.tick(0).is_none());
        assert!(chain.tick(1).is_none());
        let produced = chain.tick(2).unwrap();
        assert_eq!(produced.block.height, 1);
        assert!(produced.block.payload.is_empty());
        assert!(chain.tick(3).is_none());
        assert_eq!(chain.tick(4).unwrap().block.height, 2);
    }

    #[test]
    fn transfer_settles_and_duplicate_submission_is_refused() {
        let (alice, _) = actor("alice");
        let (_, bob_addr) = actor("bob");
        let alice_addr = Address::for_key(alice.public());
        let mut chain = test_chain(vec![(alice_addr.clone(), Amount::from_coins(5))]);

        let tx = Transfer::signed(
            vec![(chain.genesis_outpoint(0), &alice)],
            vec![
                TxOutput { value: Amount::from_coins(2), recipient: bob_addr.clone() },
                TxOutput { value: Amount::from_coins(3), recipient: alice_addr.clone() },
            ],
        );
        let item = PayloadItem::Transfer(tx);
        chain.submit(item.clone()).unwrap();
        assert!(matches!(chain.submit(item), Err(SubmitError::Duplicate(_))));

        chain.tick(2).unwrap();
        assert_eq!(chain.balance_of(&bob_addr), Amount::from_coins(2));
        assert_eq!(chain.balance_of(&alice_addr), Amount::from_coins(3));
        chain.check_conservation().unwrap();
    }

    #[test]
    fn eviction_does_not_consume_capacity() {
        let (alice, alice_addr) = actor("alice");
        let (mallory, _) = actor("mallory");
        let (_, bob_addr) = actor("bob");
        let mut chain = Chain::new(ChainConfig {
            chain_id: "tight".into(),
            block_interval_ticks: 1,
            block_capacity: 1,
            mining_reward: Amount::ZERO,
            miner_seeds: vec!["m".into()],
            rng_seed: 1,
            genesis_allocations: vec![(alice_addr.clone(), Amount::from_coins(5))],
        })
        .unwrap();

        // Mallory signs for an output she does not own; it sits ahead of a
        // valid payment in arrival order.
        let forged = Transfer::signed(
            vec![(chain.genesis_outpoint(0), &mallory)],
            vec![TxOutput { value: Amount::from_coins(5), recipient: bob_addr.clone() }],
        );
        let honest = Transfer::signed(
            vec![(chain.genesis_outpoint(0), &alice)],
            vec![TxOutput { value: Amount::from_coins(5), recipient: bob_addr.clone() }],
        );
        chain.submit(PayloadItem::Transfer(forged)).unwrap();
        chain.submit(PayloadItem::Transfer(honest)).unwrap();

        let produced = chain.tick(1).unwrap();
        // Capacity is one, yet the honest payment made it in because the
        // forged one was evicted rather than included.
        assert_eq!(produced.block.payload.len(), 1);
        assert_eq!(chain.balance_of(&bob_addr), Amount::from_coins(5));
        let evicted: Vec<_> = produced
            .receipts
            .iter()
            .filter(|r| matches!(r.outcome, ReceiptOutcome::Evicted { .. }))
            .collect();
        assert_eq!(evicted.len(), 1);
    }

    #[test]
    fn double_spend_across_blocks_is_evicted_as_such() {
        let (alice, alice_addr) = actor("alice");
        let (_, bob_addr) = actor("bob");
        let mut chain = test_chain(vec![(alice_addr.clone(), Amount::from_coins(5))]);

        let first = Transfer::signed(
            vec![(chain.genesis_outpoint(0), &alice)],
            vec![TxOutput { value: Amount::from_coins(5), recipient: bob_addr.clone() }],
        );
        let second = Transfer::signed(
            vec![(chain.genesis_outpoint(0), &alice)],
            vec![TxOutput { value: Amount::from_coins(5), recipient: alice_addr.clone() }],
        );
        chain.submit(PayloadItem::Transfer(first)).unwrap();
        chain.tick(2).unwrap();

        let second_id = chain.submit(PayloadItem::Transfer(second)).unwrap();
        chain.tick(4).unwrap();
        let receipt = chain.receipt_for(&second_id).unwrap();
        match &receipt.outcome {
            ReceiptOutcome::Evicted { reason: EvictReason::Transfer(err) } => {
                assert!(matches!(err, TransferError::DoubleSpend { .. }), "got {err:?}");
            }
            other => panic!("expected eviction, got {other:?}"),
        }
    }

    #[test]
    fn chained_payments_fit_in_one_block() {
        let (alice, alice_addr) = actor("alice");
        let mut chain = test_chain(vec![(alice_addr.clone(), Amount::from_coins(5))]);

        // Each hop spends the previous hop's output, all in the same block.
        let mut source = chain.genesis_outpoint(0);
        for _ in 0..3 {
            let tx = Transfer::signed(
                vec![(source, &alice)],
                vec![TxOutput { value: Amount::from_coins(5), recipient: alice_addr.clone() }],
            );
            source = Outpoint { tx_id: tx.tx_id(), index: 0 };
            chain.submit(PayloadItem::Transfer(tx)).unwrap();
        }
        let produced = chain.tick(2).unwrap();
        assert_eq!(produced.block.payload.len(), 3);
        assert_eq!(chain.balance_of(&alice_addr), Amount::from_coins(5));
        chain.check_conservation().unwrap();
    }

    fn deploy_and_buy(chain: &mut Chain, alice: &Identity, bob: &Identity) -> (ContractId, Digest) {
        let deploy = ContractMessage::single_signed(
            alice,
            Amount::ZERO,
            CallTarget::Deploy {
                class: ContractClass::Car,
                args: vec![
                    ArgValue::Str("maker".into()),
                    ArgValue::Str("line".into()),
                    ArgValue::Int(2020),
                    ArgValue::Money(Amount::from_coins(4)),
                ],
            },
            vec![],
        );
        let deploy_id = chain.submit(PayloadItem::Message(deploy)).unwrap();
        chain.tick(2).unwrap();
        let contract = match &chain.receipt_for(&deploy_id).unwrap().outcome {
            ReceiptOutcome::Applied(detail) => detail.contract.unwrap(),
            other => panic!("deploy failed: {other:?}"),
        };

        let alice_addr = Address::for_key(alice.public());
        let buy = ContractMessage::single_signed(
            bob,
            Amount::from_coins(4),
            CallTarget::Invoke {
                contract,
                function: "buy".into(),
                args: vec![ArgValue::Addr(alice_addr)],
            },
            vec![chain.genesis_outpoint(1)],
        );
        let buy_id = chain.submit(PayloadItem::Message(buy)).unwrap();
        chain.tick(4).unwrap();
        (contract, buy_id)
    }

    #[test]
    fn contract_sale_settles_on_chain() {
        let (alice, alice_addr) = actor("alice");
        let (bob, bob_addr) = actor("bob");
        let mut chain = test_chain(vec![
            (alice_addr.clone(), Amount::from_coins(1)),
            (bob_addr.clone(), Amount::from_coins(4)),
        ]);

        let (contract, buy_id) = deploy_and_buy(&mut chain, &alice, &bob);
        match &chain.receipt_for(&buy_id).unwrap().outcome {
            ReceiptOutcome::Applied(detail) => {
                assert_eq!(detail.function.as_deref(), Some("buy"));
                assert_eq!(detail.ownership_change, Some(bob_addr.clone()));
            }
            other => panic!("buy failed: {other:?}"),
        }
        // Bob paid his whole genesis output; Alice received the price.
        assert_eq!(chain.balance_of(&alice_addr), Amount::from_coins(5));
        assert_eq!(chain.balance_of(&bob_addr), Amount::ZERO);
        let instance = chain.contract(&contract).unwrap();
        assert_eq!(instance.state_vars().get("o").map(String::as_str), Some(bob_addr.to_string().as_str()));
        chain.check_conservation().unwrap();
    }

    #[test]
    fn reverted_call_refunds_attached_value() {
        let (alice, alice_addr) = actor("alice");
        let (bob, bob_addr) = actor("bob");
        let mut chain = test_chain(vec![
            (alice_addr.clone(), Amount::from_coins(1)),
            (bob_addr.clone(), Amount::from_coins(3)),
        ]);

        let deploy = ContractMessage::single_signed(
            &alice,
            Amount::ZERO,
            CallTarget::Deploy {
                class: ContractClass::Car,
                args: vec![
                    ArgValue::Str("maker".into()),
                    ArgValue::Str("line".into()),
                    ArgValue::Int(2020),
                    ArgValue::Money(Amount::from_coins(4)),
                ],
            },
            vec![],
        );
        let deploy_id = chain.submit(PayloadItem::Message(deploy)).unwrap();
        chain.tick(2).unwrap();
        let contract = match &chain.receipt_for(&deploy_id).unwrap().outcome {
            ReceiptOutcome::Applied(detail) => detail.contract.unwrap(),
            other => panic!("deploy failed: {other:?}"),
        };

        // Bob offers three coins against a four coin price. The call is
        // included, reverts, and his money comes back as a new output.
        let buy = ContractMessage::single_signed(
            &bob,
            Amount::from_coins(3),
            CallTarget::Invoke {
                contract,
                function: "buy".into(),
                args: vec![ArgValue::Addr(alice_addr.clone())],
            },
            vec![chain.genesis_outpoint(1)],
        );
        let buy_id = chain.submit(PayloadItem::Message(buy)).unwrap();
        chain.tick(4).unwrap();

        match &chain.receipt_for(&buy_id).unwrap().outcome {
            ReceiptOutcome::Reverted { error, refunded } => {
                assert_eq!(*error, CallError::Requires(RequiresFailure::PriceTooLow));
                assert_eq!(*refunded, Amount::from_coins(3));
            }
            other => panic!("expected revert, got {other:?}"),
        }
        assert_eq!(chain.balance_of(&bob_addr), Amount::from_coins(3));
        // Ownership unchanged.
        let instance = chain.contract(&contract).unwrap();
        assert_eq!(
            instance.state_vars().get("o").map(String::as_str),
            Some(alice_addr.to_string().as_str())
        );
        chain.check_conservation().unwrap();
    }

    #[test]
    fn underfunded_message_is_evicted_not_reverted() {
        let (alice, alice_addr) = actor("alice");
        let (bob, bob_addr) = actor("bob");
        let mut chain = test_chain(vec![
            (alice_addr.clone(), Amount::from_coins(1)),
            (bob_addr.clone(), Amount::from_coins(3)),
        ]);

        let deploy = ContractMessage::single_signed(
            &alice,
            Amount::ZERO,
            CallTarget::Deploy {
                class: ContractClass::Car,
                args: vec![
                    ArgValue::Str("maker".into()),
                    ArgValue::Str("line".into()),
                    ArgValue::Int(2020),
                    ArgValue::Money(Amount::from_coins(4)),
                ],
            },
            vec![],
        );
        chain.submit(PayloadItem::Message(deploy.clone())).unwrap();
        chain.tick(2).unwrap();
        let contract = match &chain.receipts()[0].outcome {
            ReceiptOutcome::Applied(detail) => detail.contract.unwrap(),
            other => panic!("deploy failed: {other:?}"),
        };

        // Declares four coins of value but funds only three.
        let buy = ContractMessage::single_signed(
            &bob,
            Amount::from_coins(4),
            CallTarget::Invoke {
                contract,
                function: "buy".into(),
                args: vec![ArgValue::Addr(alice_addr)],
            },
            vec![chain.genesis_outpoint(1)],
        );
        let buy_id = chain.submit(PayloadItem::Message(buy)).unwrap();
        chain.tick(4).unwrap();
        match &chain.receipt_for(&buy_id).unwrap().outcome {
            ReceiptOutcome::Evicted { reason: EvictReason::Message(err) } => {
                assert!(matches!(err, MessageError::ValueMismatch { .. }), "got {err:?}");
            }
            other => panic!("expected eviction, got {other:?}"),
        }
        // The funding output was never consumed.
        assert_eq!(chain.balance_of(&bob_addr), Amount::from_coins(3));
    }

    #[test]
    fn replay_reproduces_state_and_receipts() {
        let (alice, alice_addr) = actor("alice");
        let (bob, bob_addr) = actor("bob");
        let mut chain = test_chain(vec![
            (alice_addr.clone(), Amount::from_coins(1)),
            (bob_addr, Amount::from_coins(4)),
        ]);
        deploy_and_buy(&mut chain, &alice, &bob);
        for now in 5..=10 {
            chain.tick(now);
        }

        let replayed = Chain::replay(chain.config().clone(), chain.blocks()).unwrap();
        assert_eq!(replayed.state().digest(), chain.state().digest());
        let original_included: Vec<_> =
            chain.receipts().iter().filter(|r| r.included()).cloned().collect();
        assert_eq!(replayed.receipts(), original_included.as_slice());
    }

    #[test]
    fn replay_rejects_a_tampered_block() {
        let (alice, alice_addr) = actor("alice");
        let (_, bob_addr) = actor("bob");
        let mut chain = test_chain(vec![(alice_addr.clone(), Amount::from_coins(5))]);
        let tx = Transfer::signed(
            vec![(chain.genesis_outpoint(0), &alice)],
            vec![TxOutput { value: Amount::from_coins(5), recipient: bob_addr }],
        );
        chain.submit(PayloadItem::Transfer(tx)).unwrap();
        chain.tick(2).unwrap();

        let mut blocks = chain.blocks().to_vec();
        blocks[0].payload.clear();
        match Chain::replay(chain.config().clone(), &blocks) {
            Err(err) => assert!(matches!(err, ReplayError::BadHash { height: 1 })),
            Ok(_) => panic!("tampered block replayed"),
        }
    }

    #[test]
    fn proposer_draw_is_seed_stable() {
        let make = || {
            let mut chain = test_chain(vec![]);
            (1..=12).filter_map(|now| chain.tick(now)).map(|p| p.block.producer).collect::<Vec<_>>()
        };
        assert_eq!(make(), make());
    }

    #[test]
    fn fork_choice_prefers_height_then_smallest_hash() {
        let low = ForkTip { height: 3, hash: digest_bytes("fork", b"a") };
        let high = ForkTip { height: 4, hash: digest_bytes("fork", b"b") };
        assert_eq!(choose_fork(&[low, high]), Some(1));
        assert_eq!(choose_fork(&[high, low]), Some(0));

        let mut pair = [
            ForkTip { height: 4, hash: digest_bytes("fork", b"x") },
            ForkTip { height: 4, hash: digest_bytes("fork", b"y") },
        ];
        pair.sort_by(|a, b| a.hash.as_bytes().cmp(b.hash.as_bytes()));
        assert_eq!(choose_fork(&pair), Some(0));
        pair.swap(0, 1);
        assert_eq!(choose_fork(&pair), Some(1));
        assert_eq!(choose_fork(&[]), None);
    }
}
