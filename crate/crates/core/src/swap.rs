//! Cross-chain swap coordination.
//!
//! Four trade shapes are supported: a plain currency transfer, a direct
//! contract purchase, an asset sold for currency on another chain, and an
//! asset traded for another asset. The last two run a two-leg hash-lock
//! protocol: the initiator locks first under a hash with the longer
//! timeout, the responder locks under the same hash with the shorter one,
//! the initiator claims the responder's leg and thereby publishes the
//! secret on-chain, and the responder reads that secret from the confirmed
//! block and claims the initiator's leg. If anything stalls, timeouts
//! return whatever was locked.
//!
//! The coordinator is honest automation that drives both parties'
//! submissions. Misbehavior is injected through a fault schedule: a party
//! can crash immediately before any protocol step, or the initiator can
//! refuse to reveal the secret. A crashed party never again takes a
//! discretionary step (locking, or the claim that first reveals the
//! secret). Actions the party is mechanically entitled to, timeout refunds
//! and a claim whose secret is already public, are taken over by a
//! watchtower after a fixed delay. That keeps the protocol's guarantee
//! honest: atomicity never depends on a crashed party choosing well, only
//! on entitled actions eventually running.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::address::Address;
use crate::amount::Amount;
use crate::block::PayloadItem;
use crate::chain::{Chain, ReceiptOutcome, SubmitError};
use crate::codec::Digest;
use crate::contract::{
    preimage_digest, ArgValue, CallTarget, ContractClass, ContractId, ContractMessage,
};
use crate::keys::Identity;
use crate::tx::{Outpoint, Transfer};

/// The four supported trade shapes.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwapCategory {
    /// Plain currency transfer within one chain.
    CurrencyIntra,
    /// Direct purchase of an asset with currency on its own chain.
    PurchaseIntra,
    /// Asset on one chain traded for currency on another.
    AssetForCurrencyCross,
    /// Asset traded for asset, cross-chain or within one chain.
    AssetForAsset,
}

impl SwapCategory {
    pub fn number(&self) -> u8 {
        match self {
            SwapCategory::CurrencyIntra => 1,
            SwapCategory::PurchaseIntra => 2,
            SwapCategory::AssetForCurrencyCross => 3,
            SwapCategory::AssetForAsset => 4,
        }
    }
}

/// Category 1: queue a currency transfer. The returned id looks up the
/// inclusion receipt once a block carries it.
pub fn execute_category1(chain: &mut Chain, tx: Transfer) -> Result<Digest, SubmitError> {
    chain.submit(PayloadItem::Transfer(tx))
}

/// Category 2: queue a purchase call against the asset's own chain.
pub fn execute_category2(chain: &mut Chain, buy: ContractMessage) -> Result<Digest, SubmitError> {
    chain.submit(PayloadItem::Message(buy))
}

/// What one side puts up in a two-leg session.
#[derive(Clone, Debug)]
pub enum SwapItem {
    /// Currency, locked by deploying a fresh hash-locked box funded with
    /// these exact outpoints.
    Currency { amount: Amount, funding: Vec<Outpoint> },
    /// An asset contract the locker owns; locked in place with the swap
    /// lock the contract class provides.
    Asset { contract: ContractId },
}

#[derive(Clone, Debug)]
pub struct LegPlan {
    pub chain_id: String,
    pub item: SwapItem,
    /// Height on this leg's own chain after which the locker may reclaim.
    pub timeout_height: u64,
}

/// The protocol steps a fault schedule can name.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwapStep {
    InitiatorLock,
    ResponderLock,
    InitiatorClaim,
    ResponderClaim,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Role {
    Initiator,
    Responder,
}

#[derive(Clone, Debug, Default)]
pub struct FaultSchedule {
    /// The named step's actor crashes immediately before performing it.
    pub crash_at: Option<SwapStep>,
    /// The initiator completes the locks but never claims, keeping the
    /// secret private forever.
    pub refuse_reveal: bool,
}

#[derive(Clone, Debug)]
pub struct SwapPlan {
    pub session_id: String,
    pub category: SwapCategory,
    /// Known to the initiator only; the responder learns it from the chain.
    pub secret: String,
    pub initiator: Identity,
    pub responder: Identity,
    /// What the initiator gives, locked first, longer timeout.
    pub initiator_leg: LegPlan,
    /// What the responder gives, locked second, shorter timeout.
    pub responder_leg: LegPlan,
    pub faults: FaultSchedule,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Setup,
    Locked,
    Completed,
    Refunded,
    Failed,
}

#[derive(Clone, PartialEq, Eq, Debug, Error)]
pub enum SwapConfigError {
    #[error("chain {0} is not part of this simulation")]
    UnknownChain(String),
    #[error("cross-chain sessions need category 3 or 4")]
    BadCategory,
    #[error("initiator timeout must exceed responder timeout by {required_margin_ticks} ticks, has {actual_margin_ticks}")]
    TimeoutMargin { required_margin_ticks: u64, actual_margin_ticks: i128 },
    #[error("asset contract {0} does not exist on its chain")]
    AssetNotFound(ContractId),
    #[error("asset contract {0} does not support swap locks")]
    AssetNotLockable(ContractId),
}

/// One line of a session's public transcript.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub tick: u64,
    pub chain: String,
    pub action: String,
    pub outcome: String,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum LegResolution {
    Claimed,
    Refunded,
}

#[derive(Clone, Debug)]
struct LegState {
    /// For asset legs, fixed by the plan; for currency legs, set when the
    /// lockbox deployment confirms.
    contract: Option<ContractId>,
    locked: bool,
    resolution: Option<LegResolution>,
}

/// The six concrete submissions a session can make, in scheduling order.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
enum ActionId {
    LockInitiator,
    LockResponder,
    ClaimByInitiator,
    ClaimByResponder,
    RefundInitiatorLeg,
    RefundResponderLeg,
}

const ALL_ACTIONS: [ActionId; 6] = [
    ActionId::LockInitiator,
    ActionId::LockResponder,
    ActionId::ClaimByInitiator,
    ActionId::ClaimByResponder,
    ActionId::RefundInitiatorLeg,
    ActionId::RefundResponderLeg,
];

impl ActionId {
    fn actor(&self) -> Role {
        match self {
            ActionId::LockInitiator
            | ActionId::ClaimByInitiator
            | ActionId::RefundInitiatorLeg => Role::Initiator,
            ActionId::LockResponder
            | ActionId::ClaimByResponder
            | ActionId::RefundResponderLeg => Role::Responder,
        }
    }

    /// Maps protocol steps onto actions so the crash schedule can find its
    /// target. Refunds are not steps; they are fallbacks.
    fn step(&self) -> Option<SwapStep> {
        match self {
            ActionId::LockInitiator => Some(SwapStep::InitiatorLock),
            ActionId::LockResponder => Some(SwapStep::ResponderLock),
            ActionId::ClaimByInitiator => Some(SwapStep::InitiatorClaim),
            ActionId::ClaimByResponder => Some(SwapStep::ResponderClaim),
            _ => None,
        }
    }

    /// Discretionary actions die with their party. Mechanical ones carry
    /// no judgment and fall to the watchtower: refunds after timeout, and
    /// the responder's claim once the secret is public anyway.
    fn discretionary(&self) -> bool {
        matches!(
            self,
            ActionId::LockInitiator | ActionId::LockResponder | ActionId::ClaimByInitiator
        )
    }

    fn label(&self) -> &'static str {
        match self {
            ActionId::LockInitiator => "initiator_lock",
            ActionId::LockResponder => "responder_lock",
            ActionId::ClaimByInitiator => "initiator_claim",
            ActionId::ClaimByResponder => "responder_claim",
            ActionId::RefundInitiatorLeg => "initiator_refund",
            ActionId::RefundResponderLeg => "responder_refund",
        }
    }
}

#[derive(Clone, Debug, Default)]
struct ActionState {
    submitted: Option<Digest>,
    done: bool,
    /// Permanently off the table: suppressed by a crash or refusal, or its
    /// submission failed on-chain.
    dead: bool,
    /// When the watchtower may act for a crashed party.
    ready_at: Option<u64>,
}

pub struct SwapSession {
    plan: SwapPlan,
    hash: Digest,
    status: SessionStatus,
    initiator_leg: LegState,
    responder_leg: LegState,
    crashed_initiator: bool,
    crashed_responder: bool,
    observed_secret: Option<String>,
    actions: BTreeMap<ActionId, ActionState>,
    pending: BTreeMap<Digest, ActionId>,
    transcript: Vec<TranscriptEntry>,
}

impl SwapSession {
    pub fn session_id(&self) -> &str {
        &self.plan.session_id
    }

    pub fn category(&self) -> SwapCategory {
        self.plan.category
    }

    pub fn status(&self) -> SessionStatus {
        self.status
    }

    pub fn is_terminal(&self) -> bool {
        matches!(
            self.status,
            SessionStatus::Completed | SessionStatus::Refunded | SessionStatus::Failed
        )
    }

    pub fn transcript(&self) -> &[TranscriptEntry] {
        &self.transcript
    }

    /// The contract holding the responder's item, once known.
    pub fn responder_leg_contract(&self) -> Option<ContractId> {
        self.responder_leg.contract
    }

    pub fn initiator_leg_contract(&self) -> Option<ContractId> {
        self.initiator_leg.contract
    }

    fn note(&mut self, tick: u64, chain: &str, action: &str, outcome: impl Into<String>) {
        self.transcript.push(TranscriptEntry {
            tick,
            chain: chain.to_string(),
            action: action.to_string(),
            outcome: outcome.into(),
        });
    }

    fn party(&self, role: Role) -> &Identity {
        match role {
            Role::Initiator => &self.plan.initiator,
            Role::Responder => &self.plan.responder,
        }
    }

    fn party_address(&self, role: Role) -> Address {
        Address::for_key(self.party(role).public())
    }

    fn leg(&self, action: ActionId) -> (&LegPlan, &LegState) {
        match action {
            ActionId::LockInitiator | ActionId::ClaimByResponder | ActionId::RefundInitiatorLeg => {
                (&self.plan.initiator_leg, &self.initiator_leg)
            }
            ActionId::LockResponder | ActionId::ClaimByInitiator | ActionId::RefundResponderLeg => {
                (&self.plan.responder_leg, &self.responder_leg)
            }
        }
    }

    fn leg_state_mut(&mut self, action: ActionId) -> &mut LegState {
        match action {
            ActionId::LockInitiator | ActionId::ClaimByResponder | ActionId::RefundInitiatorLeg => {
                &mut self.initiator_leg
            }
            ActionId::LockResponder | ActionId::ClaimByInitiator | ActionId::RefundResponderLeg => {
                &mut self.responder_leg
            }
        }
    }

    fn crashed(&self, role: Role) -> bool {
        match role {
            Role::Initiator => self.crashed_initiator,
            Role::Responder => self.crashed_responder,
        }
    }
}

pub struct SwapCoordinator {
    /// Ticks between a mechanical action becoming available to a crashed
    /// party and the watchtower taking it.
    watchtower_delay: u64,
    sessions: Vec<SwapSession>,
}

impl Default for SwapCoordinator {
    fn default() -> Self {
        SwapCoordinator::new()
    }
}

impl SwapCoordinator {
    pub fn new() -> SwapCoordinator {
        SwapCoordinator { watchtower_delay: 2, sessions: Vec::new() }
    }

    pub fn sessions(&self) -> &[SwapSession] {
        &self.sessions
    }

    pub fn session(&self, index: usize) -> Option<&SwapSession> {
        self.sessions.get(index)
    }

    pub fn session_by_id(&self, id: &str) -> Option<&SwapSession> {
        self.sessions.iter().find(|s| s.plan.session_id == id)
    }

    pub fn all_terminal(&self) -> bool {
        self.sessions.iter().all(|s| s.is_terminal())
    }

    /// Validates and admits a two-leg session. Rejected here or not at
    /// all: a session that starts will terminate on its own.
    pub fn start_session(
        &mut self,
        plan: SwapPlan,
        chains: &BTreeMap<String, Chain>,
    ) -> Result<usize, SwapConfigError> {
        if !matches!(
            plan.category,
            SwapCategory::AssetForCurrencyCross | SwapCategory::AssetForAsset
        ) {
            return Err(SwapConfigError::BadCategory);
        }
        let initiator_chain = chains
            .get(&plan.initiator_leg.chain_id)
            .ok_or_else(|| SwapConfigError::UnknownChain(plan.initiator_leg.chain_id.clone()))?;
        let responder_chain = chains
            .get(&plan.responder_leg.chain_id)
            .ok_or_else(|| SwapConfigError::UnknownChain(plan.responder_leg.chain_id.clone()))?;

        // The initiator must still be claimable after the responder has
        // seen the reveal, so its timeout clears the responder's by two of
        // the responder chain's blocks, compared on the common tick axis.
        let responder_interval = responder_chain.config().block_interval_ticks;
        let initiator_ticks = plan.initiator_leg.timeout_height
            * initiator_chain.config().block_interval_ticks;
        let responder_ticks = plan.responder_leg.timeout_height * responder_interval;
        let required_margin_ticks = 2 * responder_interval;
        let actual_margin_ticks = i128::from(initiator_ticks) - i128::from(responder_ticks);
        if actual_margin_ticks < i128::from(required_margin_ticks) {
            return Err(SwapConfigError::TimeoutMargin {
                required_margin_ticks,
                actual_margin_ticks,
            });
        }

        for (leg, chain) in [
            (&plan.initiator_leg, initiator_chain),
            (&plan.responder_leg, responder_chain),
        ] {
            if let SwapItem::Asset { contract } = &leg.item {
                let instance =
                    chain.contract(contract).ok_or(SwapConfigError::AssetNotFound(*contract))?;
                if instance.class() != ContractClass::AuthCar {
                    return Err(SwapConfigError::AssetNotLockable(*contract));
                }
            }
        }

        let hash = preimage_digest(&plan.secret);
        let leg_state = |leg: &LegPlan| LegState {
            contract: match &leg.item {
                SwapItem::Asset { contract } => Some(*contract),
                SwapItem::Currency { .. } => None,
            },
            locked: false,
            resolution: None,
        };
        let session = SwapSession {
            hash,
            status: SessionStatus::Setup,
            initiator_leg: leg_state(&plan.initiator_leg),
            responder_leg: leg_state(&plan.responder_leg),
            crashed_initiator: false,
            crashed_responder: false,
            observed_secret: None,
            actions: ALL_ACTIONS.iter().map(|a| (*a, ActionState::default())).collect(),
            pending: BTreeMap::new(),
            transcript: Vec::new(),
            plan,
        };
        self.sessions.push(session);
        Ok(self.sessions.len() - 1)
    }

    /// Advances every live session: absorb receipts, observe reveals, and
    /// make whatever submissions are due at this tick.
    pub fn step(&mut self, chains: &mut BTreeMap<String, Chain>, now: u64) {
        for session in &mut self.sessions {
            if !session.is_terminal() {
                step_session(session, chains, now, self.watchtower_delay);
            }
        }
    }
}

fn step_session(
    session: &mut SwapSession,
    chains: &mut BTreeMap<String, Chain>,
    now: u64,
    watchtower_delay: u64,
) {
    absorb_receipts(session, chains);
    observe_reveal(session, chains);

    if session.status == SessionStatus::Setup
        && session.initiator_leg.locked
        && session.responder_leg.locked
    {
        session.status = SessionStatus::Locked;
        session.note(now, "", "session", "both legs locked");
    }

    for action in ALL_ACTIONS {
        let state = &session.actions[&action];
        if state.done || state.dead || state.submitted.is_some() {
            continue;
        }
        if !action_available(session, &action, chains) {
            continue;
        }

        let role = action.actor();
        if !session.crashed(role) {
            if action.step().is_some() && session.plan.faults.crash_at == action.step() {
                match role {
                    Role::Initiator => session.crashed_initiator = true,
                    Role::Responder => session.crashed_responder = true,
                }
                session.note(now, "", action.label(), "party crashed at this step");
            } else if session.plan.faults.refuse_reveal && action == ActionId::ClaimByInitiator {
                session.actions.get_mut(&action).unwrap().dead = true;
                session.note(now, "", action.label(), "initiator refuses to reveal");
                continue;
            }
        }

        if session.crashed(role) {
            if action.discretionary() {
                let state = session.actions.get_mut(&action).unwrap();
                if !state.dead {
                    state.dead = true;
                    session.note(now, "", action.label(), "suppressed by crash");
                }
                continue;
            }
            // Mechanical: the watchtower acts after its delay.
            let state = session.actions.get_mut(&action).unwrap();
            let ready = *state.ready_at.get_or_insert(now + watchtower_delay);
            if now < ready {
                continue;
            }
        }

        submit_action(session, action, chains, now);
    }

    settle_status(session, chains, now);
}

fn absorb_receipts(session: &mut SwapSession, chains: &BTreeMap<String, Chain>) {
    let pending: Vec<(Digest, ActionId)> =
        session.pending.iter().map(|(d, a)| (*d, *a)).collect();
    for (msg_id, action) in pending {
        let chain_id = session.leg(action).0.chain_id.clone();
        let Some(receipt) = chains[&chain_id].receipt_for(&msg_id).cloned() else { continue };
        session.pending.remove(&msg_id);

        let applied_detail = match &receipt.outcome {
            ReceiptOutcome::Applied(detail) => Some(detail.clone()),
            _ => None,
        };
        let outcome_text = match &receipt.outcome {
            ReceiptOutcome::Applied(_) => "applied".to_string(),
            ReceiptOutcome::Reverted { error, .. } => format!("reverted: {error}"),
            ReceiptOutcome::Evicted { .. } => "evicted".to_string(),
        };
        session.note(receipt.tick, &chain_id, action.label(), outcome_text);

        match applied_detail {
            Some(detail) => {
                let leg = session.leg_state_mut(action);
                match action {
                    ActionId::LockInitiator | ActionId::LockResponder => {
                        leg.locked = true;
                        if leg.contract.is_none() {
                            leg.contract = detail.contract;
                        }
                    }
                    ActionId::ClaimByInitiator | ActionId::ClaimByResponder => {
                        leg.resolution = Some(LegResolution::Claimed);
                    }
                    ActionId::RefundInitiatorLeg | ActionId::RefundResponderLeg => {
                        leg.resolution = Some(LegResolution::Refunded);
                    }
                }
                session.actions.get_mut(&action).unwrap().done = true;
            }
            None => {
                session.actions.get_mut(&action).unwrap().dead = true;
            }
        }
    }
}

/// After the initiator's claim lands, the secret sits in the responder
/// leg's contract state for anyone to read. That is where the responder
/// gets it; the plan's copy is never shown to them.
fn observe_reveal(session: &mut SwapSession, chains: &BTreeMap<String, Chain>) {
    if session.observed_secret.is_some() {
        return;
    }
    if session.responder_leg.resolution != Some(LegResolution::Claimed) {
        return;
    }
    let Some(contract) = session.responder_leg.contract else { return };
    let chain = &chains[&session.plan.responder_leg.chain_id];
    if let Some(instance) = chain.contract(&contract) {
        if let Some(secret) = instance.state_vars().get("revealed_secret") {
            session.observed_secret = Some(secret.clone());
        }
    }
}

fn action_available(
    session: &SwapSession,
    action: &ActionId,
    chains: &BTreeMap<String, Chain>,
) -> bool {
    let (leg_plan, leg) = session.leg(*action);
    let height = chains[&leg_plan.chain_id].height();
    // A submission this tick executes in the next block.
    let exec_height = height + 1;
    match action {
        ActionId::LockInitiator => !leg.locked && exec_height < leg_plan.timeout_height,
        ActionId::LockResponder => {
            !leg.locked
                && session.initiator_leg.locked
                && session.initiator_leg.resolution.is_none()
                && exec_height < leg_plan.timeout_height
        }
        ActionId::ClaimByInitiator => {
            leg.locked && leg.resolution.is_none() && exec_height < leg_plan.timeout_height
        }
        ActionId::ClaimByResponder => {
            leg.locked
                && leg.resolution.is_none()
                && session.observed_secret.is_some()
                && exec_height < leg_plan.timeout_height
        }
        ActionId::RefundInitiatorLeg | ActionId::RefundResponderLeg => {
            leg.locked && leg.resolution.is_none() && exec_height >= leg_plan.timeout_height
        }
    }
}

fn submit_action(
    session: &mut SwapSession,
    action: ActionId,
    chains: &mut BTreeMap<String, Chain>,
    now: u64,
) {
    let role = action.actor();
    let signer = session.party(role).clone();
    let (leg_plan, leg_state) = session.leg(action);
    let chain_id = leg_plan.chain_id.clone();
    let counterparty = session.party_address(match role {
        Role::Initiator => Role::Responder,
        Role::Responder => Role::Initiator,
    });

    let message = match action {
        ActionId::LockInitiator | ActionId::LockResponder => match &leg_plan.item {
            SwapItem::Currency { amount, funding } => ContractMessage::single_signed(
                &signer,
                *amount,
                CallTarget::Deploy {
                    class: ContractClass::HtlcLockbox,
                    args: vec![
                        ArgValue::Hash(session.hash),
                        ArgValue::Addr(counterparty),
                        ArgValue::Int(leg_plan.timeout_height),
                    ],
                },
                funding.clone(),
            ),
            SwapItem::Asset { contract } => ContractMessage::single_signed(
                &signer,
                Amount::ZERO,
                CallTarget::Invoke {
                    contract: *contract,
                    function: "lock_for_swap".into(),
                    args: vec![
                        ArgValue::Hash(session.hash),
                        ArgValue::Addr(counterparty),
                        ArgValue::Int(leg_plan.timeout_height),
                    ],
                },
                vec![],
            ),
        },
        ActionId::ClaimByInitiator | ActionId::ClaimByResponder => {
            let secret = match action {
                // The initiator holds the secret; the responder only has
                // what the chain showed them.
                ActionId::ClaimByInitiator => session.plan.secret.clone(),
                _ => session.observed_secret.clone().expect("claim gated on observation"),
            };
            let contract = leg_state.contract.expect("locked leg has a contract");
            let function = match &leg_plan.item {
                SwapItem::Currency { .. } => "claim",
                SwapItem::Asset { .. } => "claim_with_secret",
            };
            ContractMessage::single_signed(
                &signer,
                Amount::ZERO,
                CallTarget::Invoke {
                    contract,
                    function: function.into(),
                    args: vec![ArgValue::Str(secret)],
                },
                vec![],
            )
        }
        ActionId::RefundInitiatorLeg | ActionId::RefundResponderLeg => {
            let contract = leg_state.contract.expect("locked leg has a contract");
            let function = match &leg_plan.item {
                SwapItem::Currency { .. } => "refund",
                SwapItem::Asset { .. } => "refund_swap_lock",
            };
            ContractMessage::single_signed(
                &signer,
                Amount::ZERO,
                CallTarget::Invoke { contract, function: function.into(), args: vec![] },
                vec![],
            )
        }
    };

    let chain = chains.get_mut(&chain_id).expect("validated at setup");
    match chain.submit(PayloadItem::Message(message)) {
        Ok(msg_id) => {
            session.pending.insert(msg_id, action);
            session.actions.get_mut(&action).unwrap().submitted = Some(msg_id);
            session.note(now, &chain_id, action.label(), "submitted");
        }
        Err(err) => {
            session.actions.get_mut(&action).unwrap().dead = true;
            session.note(now, &chain_id, action.label(), format!("submit failed: {err}"));
        }
    }
}

/// Decides whether the session is over and with which status.
fn settle_status(session: &mut SwapSession, chains: &BTreeMap<String, Chain>, now: u64) {
    if session.is_terminal() || !session.pending.is_empty() {
        return;
    }

    let lock_dead = |session: &SwapSession, action: ActionId| session.actions[&action].dead;
    // A leg that never locked and never will: its lock action is dead, or
    // its preconditions are gone for good.
    let initiator_never = !session.initiator_leg.locked
        && (lock_dead(session, ActionId::LockInitiator)
            || session.crashed_initiator
            || past_window(session, ActionId::LockInitiator, chains));
    let responder_never = !session.responder_leg.locked
        && (lock_dead(session, ActionId::LockResponder)
            || session.crashed_responder
            || initiator_never
            || session.initiator_leg.resolution.is_some()
            || past_window(session, ActionId::LockResponder, chains));

    let leg_final = |leg: &LegState, never: bool| -> Option<bool> {
        // Some(true): claimed. Some(false): reverted. None: still open.
        match leg.resolution {
            Some(LegResolution::Claimed) => Some(true),
            Some(LegResolution::Refunded) => Some(false),
            None if never => Some(false),
            None => None,
        }
    };

    let (Some(initiator_moved), Some(responder_moved)) = (
        leg_final(&session.initiator_leg, initiator_never),
        leg_final(&session.responder_leg, responder_never),
    ) else {
        return;
    };

    session.status = match (initiator_moved, responder_moved) {
        (true, true) => SessionStatus::Completed,
        (false, false) => SessionStatus::Refunded,
        _ => SessionStatus::Failed,
    };
    session.note(now, "", "session", format!("terminal: {:?}", session.status));
}

fn past_window(session: &SwapSession, action: ActionId, chains: &BTreeMap<String, Chain>) -> bool {
    let (leg_plan, _) = session.leg(action);
    chains[&leg_plan.chain_id].height() + 1 >= leg_plan.timeout_height
}

/// Atomicity verdict for a terminal session: either both items reached
/// their counterparties, or both sides stand exactly as before the swap.
pub fn audit_atomicity(session: &SwapSession, chains: &BTreeMap<String, Chain>) -> bool {
    let initiator_addr = session.party_address(Role::Initiator);
    let responder_addr = session.party_address(Role::Responder);

    let verdict = |leg_plan: &LegPlan, leg: &LegState, locker: &Address, counterparty: &Address| {
        let chain = &chains[&leg_plan.chain_id];
        match &leg_plan.item {
            SwapItem::Currency { .. } => match leg.contract.and_then(|c| chain.contract(&c)) {
                // Never deployed: the locker kept their money.
                None => (false, true),
                Some(instance) => {
                    let vars = instance.state_vars();
                    match vars.get("phase").map(String::as_str) {
                        Some("claimed") => (true, false),
                        Some("refunded") => (false, true),
                        _ => (false, false),
                    }
                }
            },
            SwapItem::Asset { contract } => match chain.contract(contract) {
                None => (false, false),
                Some(instance) => {
                    let vars = instance.state_vars();
                    let owner = vars.get("o").cloned().unwrap_or_default();
                    let lock_active = vars.contains_key("swap_hash");
                    if owner == counterparty.to_string() {
                        (true, false)
                    } else if owner == locker.to_string() && !lock_active {
                        (false, true)
                    } else {
                        (false, false)
                    }
                }
            },
        }
    };

    let (initiator_moved, initiator_reverted) = verdict(
        &session.plan.initiator_leg,
        &session.initiator_leg,
        &initiator_addr,
        &responder_addr,
    );
    let (responder_moved, responder_reverted) = verdict(
        &session.plan.responder_leg,
        &session.responder_leg,
        &responder_addr,
        &initiator_addr,
    );

    (initiator_moved && responder_moved) || (initiator_reverted && responder_reverted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::ChainConfig;
    use crate::contract::ContractState;

    fn chain(id: &str, allocs: Vec<(Address, Amount)>) -> Chain {
        Chain::new(ChainConfig {
            chain_id: id.into(),
            block_interval_ticks: 1,
            block_capacity: 16,
            mining_reward: Amount::ZERO,
            miner_seeds: vec![format!("{id}-miner")],
            rng_seed: 11,
            genesis_allocations: allocs,
        })
        .unwrap()
    }

    struct Fixture {
        chains: BTreeMap<String, Chain>,
        alice: Identity,
        bob: Identity,
        car: ContractId,
        bob_funding: Outpoint,
    }

    /// Alice owns a car on "asset", Bob owns two coins on "cash".
    fn fixture() -> Fixture {
        let alice = Identity::from_seed("alice");
        let bob = Identity::from_seed("bob");
        let alice_addr = Address::for_key(alice.public());
        let bob_addr = Address::for_key(bob.public());

        let mut asset_chain = chain("asset", vec![]);
        let cash_chain = chain("cash", vec![(bob_addr, Amount::from_coins(2))]);
        let bob_funding = cash_chain.genesis_outpoint(0);

        let deploy = ContractMessage::single_signed(
            &alice,
            Amount::ZERO,
            CallTarget::Deploy {
                class: ContractClass::AuthCar,
                args: vec![
                    ArgValue::Str("maker".into()),
                    ArgValue::Str("line".into()),
                    ArgValue::Int(2020),
                    ArgValue::Money(Amount::from_coins(2)),
                    ArgValue::Int(0),
                    ArgValue::Addr(alice_addr),
                ],
            },
            vec![],
        );
        let deploy_id = asset_chain.submit(PayloadItem::Message(deploy)).unwrap();
        asset_chain.tick(1).unwrap();
        let car = match &asset_chain.receipt_for(&deploy_id).unwrap().outcome {
            ReceiptOutcome::Applied(detail) => detail.contract.unwrap(),
            other => panic!("deploy failed: {other:?}"),
        };

        let mut chains = BTreeMap::new();
        chains.insert("asset".to_string(), asset_chain);
        chains.insert("cash".to_string(), cash_chain);
        Fixture { chains, alice, bob, car, bob_funding }
    }

    fn plan(fx: &Fixture, faults: FaultSchedule) -> SwapPlan {
        SwapPlan {
            session_id: "s1".into(),
            category: SwapCategory::AssetForCurrencyCross,
            secret: "tide tables".into(),
            initiator: fx.alice.clone(),
            responder: fx.bob.clone(),
            initiator_leg: LegPlan {
                chain_id: "asset".into(),
                item: SwapItem::Asset { contract: fx.car },
                timeout_height: 40,
            },
            responder_leg: LegPlan {
                chain_id: "cash".into(),
                item: SwapItem::Currency {
                    amount: Amount::from_coins(2),
                    funding: vec![fx.bob_funding],
                },
                timeout_height: 20,
            },
            faults,
        }
    }

    fn run(fx: &mut Fixture, coordinator: &mut SwapCoordinator, ticks: u64) {
        // The asset chain already produced its first block during setup,
        // so continue the clock from there on both chains.
        for now in 2..=ticks {
            for chain in fx.chains.values_mut() {
                let _ = chain.tick(now);
            }
            coordinator.step(&mut fx.chains, now);
        }
    }

    fn car_owner(fx: &Fixture) -> String {
        match &fx.chains["asset"].contract(&fx.car).unwrap().state {
            ContractState::AuthCar(car) => car.owner.to_string(),
            other => panic!("unexpected state {other:?}"),
        }
    }

    #[test]
    fn clean_session_completes_and_pays_both_sides() {
        let mut fx = fixture();
        let alice_addr = Address::for_key(fx.alice.public());
        let bob_addr = Address::for_key(fx.bob.public());
        let mut coordinator = SwapCoordinator::new();
        coordinator.start_session(plan(&fx, FaultSchedule::default()), &fx.chains).unwrap();

        run(&mut fx, &mut coordinator, 60);
        let session = coordinator.session(0).unwrap();
        assert_eq!(session.status(), SessionStatus::Completed);
        assert!(audit_atomicity(session, &fx.chains));

        assert_eq!(car_owner(&fx), bob_addr.to_string());
        assert_eq!(fx.chains["cash"].balance_of(&alice_addr), Amount::from_coins(2));
        assert_eq!(fx.chains["cash"].balance_of(&bob_addr), Amount::ZERO);
    }

    #[test]
    fn responder_who_never_locks_costs_nobody_anything() {
        let mut fx = fixture();
        let bob_addr = Address::for_key(fx.bob.public());
        let alice_addr = Address::for_key(fx.alice.public());
        let mut coordinator = SwapCoordinator::new();
        coordinator
            .start_session(
                plan(&fx, FaultSchedule { crash_at: Some(SwapStep::ResponderLock), ..Default::default() }),
                &fx.chains,
            )
            .unwrap();

        run(&mut fx, &mut coordinator, 60);
        let session = coordinator.session(0).unwrap();
        assert_eq!(session.status(), SessionStatus::Refunded);
        assert!(audit_atomicity(session, &fx.chains));
        assert_eq!(car_owner(&fx), alice_addr.to_string());
        assert_eq!(fx.chains["cash"].balance_of(&bob_addr), Amount::from_coins(2));
    }

    #[test]
    fn refusal_to_reveal_refunds_both_legs() {
        let mut fx = fixture();
        let bob_addr = Address::for_key(fx.bob.public());
        let mut coordinator = SwapCoordinator::new();
        coordinator
            .start_session(
                plan(&fx, FaultSchedule { refuse_reveal: true, ..Default::default() }),
                &fx.chains,
            )
            .unwrap();

        run(&mut fx, &mut coordinator, 80);
        let session = coordinator.session(0).unwrap();
        assert_eq!(session.status(), SessionStatus::Refunded);
        assert!(audit_atomicity(session, &fx.chains));
        // Bob's lockbox refunded him in full.
        assert_eq!(fx.chains["cash"].balance_of(&bob_addr), Amount::from_coins(2));
        assert_eq!(car_owner(&fx), Address::for_key(fx.alice.public()).to_string());
    }

    #[test]
    fn watchtower_finishes_for_a_responder_who_crashes_at_the_claim() {
        let mut fx = fixture();
        let bob_addr = Address::for_key(fx.bob.public());
        let mut coordinator = SwapCoordinator::new();
        coordinator
            .start_session(
                plan(&fx, FaultSchedule { crash_at: Some(SwapStep::ResponderClaim), ..Default::default() }),
                &fx.chains,
            )
            .unwrap();

        run(&mut fx, &mut coordinator, 60);
        let session = coordinator.session(0).unwrap();
        // Alice claimed Bob's money; Bob crashed, but the claim needs no
        // judgment once the secret is public, so his watchtower took the
        // car for him.
        assert_eq!(session.status(), SessionStatus::Completed);
        assert!(audit_atomicity(session, &fx.chains));
        assert_eq!(car_owner(&fx), bob_addr.to_string());
    }

    #[test]
    fn initiator_crash_before_anything_locks_ends_immediately() {
        let mut fx = fixture();
        let mut coordinator = SwapCoordinator::new();
        coordinator
            .start_session(
                plan(&fx, FaultSchedule { crash_at: Some(SwapStep::InitiatorLock), ..Default::default() }),
                &fx.chains,
            )
            .unwrap();

        run(&mut fx, &mut coordinator, 10);
        let session = coordinator.session(0).unwrap();
        assert_eq!(session.status(), SessionStatus::Refunded);
        assert!(audit_atomicity(session, &fx.chains));
    }

    #[test]
    fn insufficient_timeout_margin_is_rejected_at_setup() {
        let fx = fixture();
        let mut coordinator = SwapCoordinator::new();
        let mut bad = plan(&fx, FaultSchedule::default());
        bad.initiator_leg.timeout_height = 21;
        let err = coordinator.start_session(bad, &fx.chains).unwrap_err();
        assert!(matches!(err, SwapConfigError::TimeoutMargin { .. }));
    }

    #[test]
    fn corrupted_half_swap_fails_the_audit() {
        // Hand-built violation: Bob's lockbox pays out to Alice, but the
        // car never leaves Alice either.
        let mut fx = fixture();
        let alice_addr = Address::for_key(fx.alice.public());
        let secret = "tide tables";

        let deploy = ContractMessage::single_signed(
            &fx.bob,
            Amount::from_coins(2),
            CallTarget::Deploy {
                class: ContractClass::HtlcLockbox,
                args: vec![
                    ArgValue::Hash(preimage_digest(secret)),
                    ArgValue::Addr(alice_addr.clone()),
                    ArgValue::Int(20),
                ],
            },
            vec![fx.bob_funding],
        );
        let cash = fx.chains.get_mut("cash").unwrap();
        let deploy_id = cash.submit(PayloadItem::Message(deploy)).unwrap();
        cash.tick(1).unwrap();
        let lockbox = match &cash.receipt_for(&deploy_id).unwrap().outcome {
            ReceiptOutcome::Applied(detail) => detail.contract.unwrap(),
            other => panic!("deploy failed: {other:?}"),
        };
        let claim = ContractMessage::single_signed(
            &fx.alice,
            Amount::ZERO,
            CallTarget::Invoke {
                contract: lockbox,
                function: "claim".into(),
                args: vec![ArgValue::Str(secret.into())],
            },
            vec![],
        );
        cash.submit(PayloadItem::Message(claim)).unwrap();
        cash.tick(2).unwrap();

        let session = SwapSession {
            plan: plan(&fx, FaultSchedule::default()),
            hash: preimage_digest(secret),
            status: SessionStatus::Failed,
            initiator_leg: LegState {
                contract: Some(fx.car),
                locked: false,
                resolution: None,
            },
            responder_leg: LegState {
                contract: Some(lockbox),
                locked: true,
                resolution: Some(LegResolution::Claimed),
            },
            crashed_initiator: false,
            crashed_responder: false,
            observed_secret: None,
            actions: ALL_ACTIONS.iter().map(|a| (*a, ActionState::default())).collect(),
            pending: BTreeMap::new(),
            transcript: Vec::new(),
        };
        assert!(!audit_atomicity(&session, &fx.chains));
    }

    #[test]
    fn responder_claims_only_with_the_on_chain_secret() {
        let mut fx = fixture();
        let mut coordinator = SwapCoordinator::new();
        coordinator.start_session(plan(&fx, FaultSchedule::default()), &fx.chains).unwrap();
        run(&mut fx, &mut coordinator, 60);

        let session = coordinator.session(0).unwrap();
        assert_eq!(session.status(), SessionStatus::Completed);
        // The observation slot was filled from contract state before the
        // responder's claim went out.
        assert_eq!(session.observed_secret.as_deref(), Some("tide tables"));
        let claim_at = session
            .transcript()
            .iter()
            .position(|t| t.action == "responder_claim" && t.outcome == "submitted")
            .unwrap();
        let reveal_at = session
            .transcript()
            .iter()
            .position(|t| t.action == "initiator_claim" && t.outcome == "applied")
            .unwrap();
        assert!(reveal_at < claim_at);
    }
}
