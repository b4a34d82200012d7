//! Native contract engine.
//!
//! Contracts are state machines compiled into the node, not interpreted
//! bytecode. Three classes exist: a plain sale contract, a taxed sale
//! contract administered by a validator multisig, and a hash-locked box for
//! conditional release. A call either commits all of its effects or none of
//! them; when a guard fails the caller's attached value is refunded in full
//! and the stored state is untouched.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::address::Address;
use crate::amount::Amount;
use crate::codec::{
    digest_bytes, digest_of, Canonical, CanonicalDecode, CanonicalReader, CanonicalWriter,
    CodecError, Digest,
};
use crate::keys::Identity;
use crate::tx::{Outpoint, SpendAuth, TxInput};

/// Unique id of one deployed instance, assigned by the hosting chain.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ContractId(Digest);

impl ContractId {
    pub fn new(digest: Digest) -> ContractId {
        ContractId(digest)
    }

    /// The id a chain assigns to a deployment included at `height`.
    pub fn derive(chain_id: &str, height: u64, msg_id: &Digest) -> ContractId {
        let mut w = CanonicalWriter::new();
        w.put_str(chain_id);
        w.put_u64(height);
        w.put_digest(msg_id);
        ContractId(digest_bytes("contract-id", w.as_bytes()))
    }

    pub fn digest(&self) -> &Digest {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        self.0.to_hex()
    }

    pub fn parse_hex(text: &str) -> Result<ContractId, CodecError> {
        Ok(ContractId(Digest::parse_hex(text)?))
    }

    pub fn address(&self) -> Address {
        Address::for_contract_digest(&self.0)
    }
}

impl fmt::Display for ContractId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for ContractId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ContractId({}..)", &self.to_hex()[..8])
    }
}

impl Canonical for ContractId {
    fn encode(&self, w: &mut CanonicalWriter) {
        w.put_digest(&self.0);
    }
}

impl CanonicalDecode for ContractId {
    fn decode(r: &mut CanonicalReader<'_>) -> Result<Self, CodecError> {
        Ok(ContractId(r.take_digest()?))
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContractClass {
    Car,
    AuthCar,
    HtlcLockbox,
}

impl ContractClass {
    pub fn name(&self) -> &'static str {
        match self {
            ContractClass::Car => "car",
            ContractClass::AuthCar => "auth_car",
            ContractClass::HtlcLockbox => "htlc_lockbox",
        }
    }
}

/// One typed argument in a call or constructor.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ArgValue {
    Str(String),
    Int(u64),
    Money(Amount),
    Addr(Address),
    Hash(Digest),
}

impl ArgValue {
    fn type_name(&self) -> &'static str {
        match self {
            ArgValue::Str(_) => "string",
            ArgValue::Int(_) => "integer",
            ArgValue::Money(_) => "amount",
            ArgValue::Addr(_) => "address",
            ArgValue::Hash(_) => "hash",
        }
    }
}

impl Canonical for ArgValue {
    fn encode(&self, w: &mut CanonicalWriter) {
        match self {
            ArgValue::Str(s) => {
                w.put_u8(0);
                w.put_str(s);
            }
            ArgValue::Int(v) => {
                w.put_u8(1);
                w.put_u64(*v);
            }
            ArgValue::Money(v) => {
                w.put_u8(2);
                v.encode(w);
            }
            ArgValue::Addr(a) => {
                w.put_u8(3);
                a.encode(w);
            }
            ArgValue::Hash(d) => {
                w.put_u8(4);
                w.put_digest(d);
            }
        }
    }
}

impl CanonicalDecode for ArgValue {
    fn decode(r: &mut CanonicalReader<'_>) -> Result<Self, CodecError> {
        match r.take_u8()? {
            0 => Ok(ArgValue::Str(r.take_string()?)),
            1 => Ok(ArgValue::Int(r.take_u64()?)),
            2 => Ok(ArgValue::Money(Amount::decode(r)?)),
            3 => Ok(ArgValue::Addr(Address::decode(r)?)),
            4 => Ok(ArgValue::Hash(r.take_digest()?)),
            tag => Err(CodecError::BadTag(tag)),
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum CallTarget {
    Deploy { class: ContractClass, args: Vec<ArgValue> },
    Invoke { contract: ContractId, function: String, args: Vec<ArgValue> },
}

impl Canonical for CallTarget {
    fn encode(&self, w: &mut CanonicalWriter) {
        match self {
            CallTarget::Deploy { class, args } => {
                w.put_u8(0);
                w.put_str(class.name());
                w.put_count(args.len());
                for arg in args {
                    arg.encode(w);
                }
            }
            CallTarget::Invoke { contract, function, args } => {
                w.put_u8(1);
                contract.encode(w);
                w.put_str(function);
                w.put_count(args.len());
                for arg in args {
                    arg.encode(w);
                }
            }
        }
    }
}

impl CanonicalDecode for CallTarget {
    fn decode(r: &mut CanonicalReader<'_>) -> Result<Self, CodecError> {
        fn decode_args(r: &mut CanonicalReader<'_>) -> Result<Vec<ArgValue>, CodecError> {
            let count = r.take_count()?;
            let mut args = Vec::with_capacity(count);
            for _ in 0..count {
                args.push(ArgValue::decode(r)?);
            }
            Ok(args)
        }
        match r.take_u8()? {
            0 => {
                let class = match r.take_string()?.as_str() {
                    "car" => ContractClass::Car,
                    "auth_car" => ContractClass::AuthCar,
                    "htlc_lockbox" => ContractClass::HtlcLockbox,
                    _ => return Err(CodecError::BadTag(0)),
                };
                Ok(CallTarget::Deploy { class, args: decode_args(r)? })
            }
            1 => Ok(CallTarget::Invoke {
                contract: ContractId::decode(r)?,
                function: r.take_string()?,
                args: decode_args(r)?,
            }),
            tag => Err(CodecError::BadTag(tag)),
        }
    }
}

/// A deployment or call addressed to the contract engine. `value` plays the
/// role of the attached currency; the funding inputs backing it are consumed
/// by the hosting chain before execution.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContractMessage {
    pub sender: Address,
    pub value: Amount,
    pub target: CallTarget,
    pub funding: Vec<TxInput>,
    pub auth: SpendAuth,
}

impl ContractMessage {
    /// The digest the sender's authorization and every funding input sign.
    /// Covers everything except the signatures themselves.
    pub fn body_digest_for(
        sender: &Address,
        value: Amount,
        target: &CallTarget,
        funding: &[Outpoint],
    ) -> Digest {
        let mut w = CanonicalWriter::new();
        sender.encode(&mut w);
        value.encode(&mut w);
        target.encode(&mut w);
        w.put_count(funding.len());
        for outpoint in funding {
            outpoint.encode(&mut w);
        }
        digest_bytes("message-body", w.as_bytes())
    }

    pub fn new(
        sender: Address,
        value: Amount,
        target: CallTarget,
        funding: Vec<TxInput>,
        auth: SpendAuth,
    ) -> ContractMessage {
        ContractMessage { sender, value, target, funding, auth }
    }

    /// Builds a message whose sender and funding outputs are all one
    /// single-key identity.
    pub fn single_signed(
        signer: &Identity,
        value: Amount,
        target: CallTarget,
        funding_outpoints: Vec<Outpoint>,
    ) -> ContractMessage {
        let sender = Address::for_key(signer.public());
        let body = Self::body_digest_for(&sender, value, &target, &funding_outpoints);
        let sig = signer.sign(&body);
        let funding = funding_outpoints
            .into_iter()
            .map(|outpoint| TxInput { outpoint, auth: SpendAuth::Single(sig.clone()) })
            .collect();
        ContractMessage { sender, value, target, funding, auth: SpendAuth::Single(sig) }
    }

    pub fn body_digest(&self) -> Digest {
        let outpoints: Vec<Outpoint> = self.funding.iter().map(|f| f.outpoint).collect();
        Self::body_digest_for(&self.sender, self.value, &self.target, &outpoints)
    }

    /// Message id over the whole message, authorizations included, for the
    /// same reason transfer ids are: a forged same-body copy must not
    /// collide with the honest submission.
    pub fn msg_id(&self) -> Digest {
        digest_of("message-id", self)
    }
}

impl Canonical for ContractMessage {
    fn encode(&self, w: &mut CanonicalWriter) {
        self.sender.encode(w);
        self.value.encode(w);
        self.target.encode(w);
        w.put_count(self.funding.len());
        for input in &self.funding {
            input.encode(w);
        }
        self.auth.encode(w);
    }
}

impl CanonicalDecode for ContractMessage {
    fn decode(r: &mut CanonicalReader<'_>) -> Result<Self, CodecError> {
        let sender = Address::decode(r)?;
        let value = Amount::decode(r)?;
        let target = CallTarget::decode(r)?;
        let count = r.take_count()?;
        let mut funding = Vec::with_capacity(count);
        for _ in 0..count {
            funding.push(TxInput::decode(r)?);
        }
        let auth = SpendAuth::decode(r)?;
        Ok(ContractMessage { sender, value, target, funding, auth })
    }
}

/// Hash used for lock conditions over user-chosen secrets.
pub fn preimage_digest(preimage: &str) -> Digest {
    digest_bytes("preimage", preimage.as_bytes())
}

// ==== Contract state ====

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct CarState {
    pub make: String,
    pub model: String,
    pub year: u64,
    pub price: Amount,
    pub owner: Address,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct SwapLockState {
    pub secret_hash: Digest,
    pub beneficiary: Address,
    pub timeout_height: u64,
    pub locker: Address,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct AuthCarState {
    pub make: String,
    pub model: String,
    pub year: u64,
    pub price: Amount,
    pub owner: Address,
    /// The administering authority, normally a validator multisig. Set to the
    /// deploying sender and changed only through `update_contract_owner`.
    pub authority: Address,
    pub tax_percent: u32,
    pub swap_lock: Option<SwapLockState>,
    pub revealed_secret: Option<String>,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum LockboxPhase {
    Locked,
    Claimed,
    Refunded,
}

impl LockboxPhase {
    pub fn name(&self) -> &'static str {
        match self {
            LockboxPhase::Locked => "locked",
            LockboxPhase::Claimed => "claimed",
            LockboxPhase::Refunded => "refunded",
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct LockboxState {
    pub secret_hash: Digest,
    pub beneficiary: Address,
    pub timeout_height: u64,
    pub locker: Address,
    pub phase: LockboxPhase,
    pub revealed_secret: Option<String>,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum ContractState {
    Car(CarState),
    AuthCar(AuthCarState),
    Lockbox(LockboxState),
}

impl ContractState {
    pub fn class(&self) -> ContractClass {
        match self {
            ContractState::Car(_) => ContractClass::Car,
            ContractState::AuthCar(_) => ContractClass::AuthCar,
            ContractState::Lockbox(_) => ContractClass::HtlcLockbox,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ContractStatus {
    Active,
    Destroyed,
}

impl ContractStatus {
    pub fn name(&self) -> &'static str {
        match self {
            ContractStatus::Active => "active",
            ContractStatus::Destroyed => "destroyed",
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ContractInstance {
    pub id: ContractId,
    pub state: ContractState,
    pub locked: Amount,
    pub status: ContractStatus,
}

impl ContractInstance {
    pub fn class(&self) -> ContractClass {
        self.state.class()
    }

    /// Flat view of the member variables, for queries and dumps.
    pub fn state_vars(&self) -> BTreeMap<String, String> {
        let mut vars = BTreeMap::new();
        match &self.state {
            ContractState::Car(car) => {
                vars.insert("make".into(), car.make.clone());
                vars.insert("model".into(), car.model.clone());
                vars.insert("year".into(), car.year.to_string());
                vars.insert("p".into(), car.price.to_string());
                vars.insert("o".into(), car.owner.to_string());
            }
            ContractState::AuthCar(car) => {
                vars.insert("make".into(), car.make.clone());
                vars.insert("model".into(), car.model.clone());
                vars.insert("year".into(), car.year.to_string());
                vars.insert("p".into(), car.price.to_string());
                vars.insert("o".into(), car.owner.to_string());
                vars.insert("co".into(), car.authority.to_string());
                vars.insert("tp".into(), car.tax_percent.to_string());
                if let Some(lock) = &car.swap_lock {
                    vars.insert("swap_hash".into(), lock.secret_hash.to_hex());
                    vars.insert("swap_beneficiary".into(), lock.beneficiary.to_string());
                    vars.insert("swap_timeout".into(), lock.timeout_height.to_string());
                    vars.insert("swap_locker".into(), lock.locker.to_string());
                }
                if let Some(secret) = &car.revealed_secret {
                    vars.insert("revealed_secret".into(), secret.clone());
                }
            }
            ContractState::Lockbox(lockbox) => {
                vars.insert("hash".into(), lockbox.secret_hash.to_hex());
                vars.insert("beneficiary".into(), lockbox.beneficiary.to_string());
                vars.insert("timeout".into(), lockbox.timeout_height.to_string());
                vars.insert("locker".into(), lockbox.locker.to_string());
                vars.insert("phase".into(), lockbox.phase.name().into());
                if let Some(secret) = &lockbox.revealed_secret {
                    vars.insert("revealed_secret".into(), secret.clone());
                }
            }
        }
        vars
    }
}

impl Canonical for ContractInstance {
    fn encode(&self, w: &mut CanonicalWriter) {
        self.id.encode(w);
        w.put_str(self.class().name());
        self.locked.encode(w);
        w.put_str(self.status.name());
        let vars = self.state_vars();
        w.put_count(vars.len());
        for (key, value) in vars {
            w.put_str(&key);
            w.put_str(&value);
        }
    }
}

// ==== Call results and errors ====

#[derive(Clone, Copy, PartialEq, Eq, Debug, Error, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequiresFailure {
    #[error("attached value is below the asking price")]
    PriceTooLow,
    #[error("caller named a stale owner")]
    StaleOwner,
    #[error("caller is not the owner")]
    NotOwner,
    #[error("caller does not satisfy the authority multisig")]
    BadMultisig,
    #[error("preimage does not hash to the lock condition")]
    WrongPreimage,
    #[error("refund attempted before the timeout height")]
    TooEarlyRefund,
    #[error("claim attempted at or past the timeout height")]
    TooLateClaim,
    #[error("lock was already claimed or refunded")]
    AlreadyResolved,
    #[error("asset is committed to an active swap lock")]
    SwapLockActive,
    #[error("no swap lock is active")]
    NoActiveLock,
    #[error("caller is not the designated beneficiary")]
    NotBeneficiary,
    #[error("caller is not the party that locked")]
    NotLocker,
}

#[derive(Clone, PartialEq, Eq, Debug, Error, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallError {
    /// A guard failed; state is untouched and attached value refunds in full.
    #[error("requires failed: {0}")]
    Requires(RequiresFailure),
    #[error("contract is destroyed")]
    ContractDestroyed,
    #[error("contract {contract} has no function {name:?}")]
    UnknownFunction { contract: ContractId, name: String },
    #[error("{function} takes {expected} arguments, got {got}")]
    ArityMismatch { function: String, expected: usize, got: usize },
    #[error("{function} argument {index} should be {expected}")]
    BadArgument { function: String, index: usize, expected: String },
    #[error("bad funding: {0}")]
    BadFunding(String),
    #[error("message target does not fit this entry point")]
    MalformedCall,
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Payout {
    pub to: Address,
    pub value: Amount,
}

/// Everything a successful call changes outside the instance's own fields.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct ExecutionEffect {
    pub payouts: Vec<Payout>,
    pub ownership_change: Option<Address>,
    pub destroyed: bool,
    /// (variable, new value) pairs, for receipts and audit trails.
    pub state_updates: Vec<(String, String)>,
}

impl ExecutionEffect {
    fn pay(&mut self, to: &Address, value: Amount) {
        if !value.is_zero() {
            self.payouts.push(Payout { to: to.clone(), value });
        }
    }

    fn note(&mut self, var: &str, value: impl ToString) {
        self.state_updates.push((var.to_string(), value.to_string()));
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct CallOutcome {
    pub instance: ContractInstance,
    pub effect: ExecutionEffect,
}

/// Execution environment supplied by the hosting chain.
#[derive(Clone, Copy, Debug)]
pub struct CallContext {
    /// Height of the block this call executes in.
    pub height: u64,
}

// ==== Argument helpers ====

fn expect_arity(function: &str, args: &[ArgValue], expected: usize) -> Result<(), CallError> {
    if args.len() == expected {
        Ok(())
    } else {
        Err(CallError::ArityMismatch {
            function: function.to_string(),
            expected,
            got: args.len(),
        })
    }
}

fn bad_arg(function: &str, index: usize, expected: &str) -> CallError {
    CallError::BadArgument {
        function: function.to_string(),
        index,
        expected: expected.to_string(),
    }
}

fn str_arg<'a>(function: &str, args: &'a [ArgValue], index: usize) -> Result<&'a str, CallError> {
    match &args[index] {
        ArgValue::Str(s) => Ok(s),
        other => Err(bad_arg(function, index, &format!("string, got {}", other.type_name()))),
    }
}

fn int_arg(function: &str, args: &[ArgValue], index: usize) -> Result<u64, CallError> {
    match &args[index] {
        ArgValue::Int(v) => Ok(*v),
        other => Err(bad_arg(function, index, &format!("integer, got {}", other.type_name()))),
    }
}

fn money_arg(function: &str, args: &[ArgValue], index: usize) -> Result<Amount, CallError> {
    match &args[index] {
        ArgValue::Money(v) => Ok(*v),
        other => Err(bad_arg(function, index, &format!("amount, got {}", other.type_name()))),
    }
}

fn addr_arg<'a>(function: &str, args: &'a [ArgValue], index: usize) -> Result<&'a Address, CallError> {
    match &args[index] {
        ArgValue::Addr(a) => Ok(a),
        other => Err(bad_arg(function, index, &format!("address, got {}", other.type_name()))),
    }
}

fn hash_arg(function: &str, args: &[ArgValue], index: usize) -> Result<Digest, CallError> {
    match &args[index] {
        ArgValue::Hash(d) => Ok(*d),
        other => Err(bad_arg(function, index, &format!("hash, got {}", other.type_name()))),
    }
}

fn reject_attached_value(function: &str, msg: &ContractMessage) -> Result<(), CallError> {
    if msg.value.is_zero() {
        Ok(())
    } else {
        Err(CallError::BadFunding(format!("{function} does not accept attached value")))
    }
}

// ==== Entry points ====

/// Runs a constructor and returns the new instance. The attached value
/// becomes the instance's locked balance.
pub fn instantiate(
    id: ContractId,
    msg: &ContractMessage,
    _ctx: &CallContext,
) -> Result<ContractInstance, CallError> {
    let (class, args) = match &msg.target {
        CallTarget::Deploy { class, args } => (*class, args.as_slice()),
        CallTarget::Invoke { .. } => return Err(CallError::MalformedCall),
    };

    let state = match class {
        ContractClass::Car => {
            expect_arity("car constructor", args, 4)?;
            ContractState::Car(CarState {
                make: str_arg("car constructor", args, 0)?.to_string(),
                model: str_arg("car constructor", args, 1)?.to_string(),
                year: int_arg("car constructor", args, 2)?,
                price: money_arg("car constructor", args, 3)?,
                owner: msg.sender.clone(),
            })
        }
        ContractClass::AuthCar => {
            let f = "auth_car constructor";
            expect_arity(f, args, 6)?;
            let tax_percent = int_arg(f, args, 4)?;
            if tax_percent > 100 {
                return Err(bad_arg(f, 4, "tax percentage between 0 and 100"));
            }
            ContractState::AuthCar(AuthCarState {
                make: str_arg(f, args, 0)?.to_string(),
                model: str_arg(f, args, 1)?.to_string(),
                year: int_arg(f, args, 2)?,
                price: money_arg(f, args, 3)?,
                tax_percent: tax_percent as u32,
                owner: addr_arg(f, args, 5)?.clone(),
                authority: msg.sender.clone(),
                swap_lock: None,
                revealed_secret: None,
            })
        }
        ContractClass::HtlcLockbox => {
            let f = "htlc_lockbox constructor";
            expect_arity(f, args, 3)?;
            if msg.value.is_zero() {
                return Err(CallError::BadFunding(
                    "lockbox deployed with nothing attached".to_string(),
                ));
            }
            ContractState::Lockbox(LockboxState {
                secret_hash: hash_arg(f, args, 0)?,
                beneficiary: addr_arg(f, args, 1)?.clone(),
                timeout_height: int_arg(f, args, 2)?,
                locker: msg.sender.clone(),
                phase: LockboxPhase::Locked,
                revealed_secret: None,
            })
        }
    };

    Ok(ContractInstance { id, state, locked: msg.value, status: ContractStatus::Active })
}

/// Executes one call. Returns the updated instance plus its effects, or an
/// error that leaves the stored instance untouched.
pub fn execute(
    instance: &ContractInstance,
    msg: &ContractMessage,
    ctx: &CallContext,
) -> Result<CallOutcome, CallError> {
    if instance.status == ContractStatus::Destroyed {
        return Err(CallError::ContractDestroyed);
    }
    let (function, args) = match &msg.target {
        CallTarget::Invoke { contract, function, args } => {
            debug_assert_eq!(*contract, instance.id, "message routed to the wrong instance");
            (function.as_str(), args.as_slice())
        }
        CallTarget::Deploy { .. } => return Err(CallError::MalformedCall),
    };

    let mut next = instance.clone();
    let mut effect = ExecutionEffect::default();
    let ContractInstance { state, locked, status, id } = &mut next;
    match state {
        ContractState::Car(car) => {
            car_call(car, *id, function, args, msg, &mut effect)?;
        }
        ContractState::AuthCar(car) => {
            auth_car_call(car, *id, locked, status, function, args, msg, ctx, &mut effect)?;
        }
        ContractState::Lockbox(lockbox) => {
            lockbox_call(lockbox, *id, locked, function, args, msg, ctx, &mut effect)?;
        }
    }

    // Value conservation across the call: what was stored plus what arrived
    // equals what is stored plus what was paid out. A violation here is an
    // engine bug, never a caller mistake.
    let paid: u128 = effect.payouts.iter().map(|p| u128::from(p.value.base_units())).sum();
    let before = u128::from(instance.locked.base_units()) + u128::from(msg.value.base_units());
    let after = u128::from(next.locked.base_units()) + paid;
    assert_eq!(before, after, "contract call does not conserve value");

    Ok(CallOutcome { instance: next, effect })
}

fn car_call(
    car: &mut CarState,
    id: ContractId,
    function: &str,
    args: &[ArgValue],
    msg: &ContractMessage,
    effect: &mut ExecutionEffect,
) -> Result<(), CallError> {
    match function {
        "buy" => {
            expect_arity("buy", args, 1)?;
            let named_owner = addr_arg("buy", args, 0)?;
            if msg.value < car.price {
                return Err(CallError::Requires(RequiresFailure::PriceTooLow));
            }
            if named_owner != &car.owner {
                return Err(CallError::Requires(RequiresFailure::StaleOwner));
            }
            effect.pay(&car.owner, msg.value);
            car.owner = msg.sender.clone();
            effect.ownership_change = Some(car.owner.clone());
            effect.note("o", &car.owner);
            Ok(())
        }
        "update_price" => {
            expect_arity("update_price", args, 1)?;
            let new_price = money_arg("update_price", args, 0)?;
            reject_attached_value("update_price", msg)?;
            if msg.sender != car.owner {
                return Err(CallError::Requires(RequiresFailure::NotOwner));
            }
            car.price = new_price;
            effect.note("p", new_price);
            Ok(())
        }
        other => Err(CallError::UnknownFunction { contract: id, name: other.to_string() }),
    }
}

#[allow(clippy::too_many_arguments)]
fn auth_car_call(
    car: &mut AuthCarState,
    id: ContractId,
    locked: &mut Amount,
    status: &mut ContractStatus,
    function: &str,
    args: &[ArgValue],
    msg: &ContractMessage,
    ctx: &CallContext,
    effect: &mut ExecutionEffect,
) -> Result<(), CallError> {
    match function {
        "buy" => {
            expect_arity("buy", args, 1)?;
            let named_owner = addr_arg("buy", args, 0)?;
            // Exact rational comparison of val >= p * (1 + tp/100), cross
            // multiplied by 100 so no rounding is involved.
            let val = u128::from(msg.value.base_units());
            let price = u128::from(car.price.base_units());
            if val * 100 < price * (100 + u128::from(car.tax_percent)) {
                return Err(CallError::Requires(RequiresFailure::PriceTooLow));
            }
            if named_owner != &car.owner {
                return Err(CallError::Requires(RequiresFailure::StaleOwner));
            }
            if car.swap_lock.is_some() {
                return Err(CallError::Requires(RequiresFailure::SwapLockActive));
            }
            let tax = Amount::from_base_units(
                u64::try_from(val * u128::from(car.tax_percent) / 100).expect("tax within value"),
            );
            let seller_share = msg.value.checked_sub(tax).expect("tax exceeds attached value");
            effect.pay(&car.owner, seller_share);
            effect.pay(&car.authority, tax);
            car.owner = msg.sender.clone();
            effect.ownership_change = Some(car.owner.clone());
            effect.note("o", &car.owner);
            Ok(())
        }
        "update_price" => {
            expect_arity("update_price", args, 1)?;
            let new_price = money_arg("update_price", args, 0)?;
            reject_attached_value("update_price", msg)?;
            if msg.sender != car.owner {
                return Err(CallError::Requires(RequiresFailure::NotOwner));
            }
            car.price = new_price;
            effect.note("p", new_price);
            Ok(())
        }
        "update_contract_owner" => {
            expect_arity("update_contract_owner", args, 1)?;
            let new_authority = addr_arg("update_contract_owner", args, 0)?;
            reject_attached_value("update_contract_owner", msg)?;
            if msg.sender != car.authority {
                return Err(CallError::Requires(RequiresFailure::BadMultisig));
            }
            car.authority = new_authority.clone();
            effect.note("co", &car.authority);
            Ok(())
        }
        "destroy" => {
            expect_arity("destroy", args, 0)?;
            reject_attached_value("destroy", msg)?;
            if msg.sender != car.authority {
                return Err(CallError::Requires(RequiresFailure::BadMultisig));
            }
            effect.pay(&car.authority, *locked);
            *locked = Amount::ZERO;
            *status = ContractStatus::Destroyed;
            effect.destroyed = true;
            Ok(())
        }
        "lock_for_swap" => {
            let f = "lock_for_swap";
            expect_arity(f, args, 3)?;
            let secret_hash = hash_arg(f, args, 0)?;
            let beneficiary = addr_arg(f, args, 1)?.clone();
            let timeout_height = int_arg(f, args, 2)?;
            reject_attached_value(f, msg)?;
            if msg.sender != car.owner {
                return Err(CallError::Requires(RequiresFailure::NotOwner));
            }
            if car.swap_lock.is_some() {
                return Err(CallError::Requires(RequiresFailure::SwapLockActive));
            }
            car.swap_lock = Some(SwapLockState {
                secret_hash,
                beneficiary,
                timeout_height,
                locker: msg.sender.clone(),
            });
            effect.note("swap_hash", secret_hash.to_hex());
            effect.note("swap_timeout", timeout_height);
            Ok(())
        }
        "claim_with_secret" => {
            let f = "claim_with_secret";
            expect_arity(f, args, 1)?;
            let preimage = str_arg(f, args, 0)?;
            reject_attached_value(f, msg)?;
            let lock = match &car.swap_lock {
                Some(lock) => lock,
                None => return Err(CallError::Requires(RequiresFailure::NoActiveLock)),
            };
            if msg.sender != lock.beneficiary {
                return Err(CallError::Requires(RequiresFailure::NotBeneficiary));
            }
            if preimage_digest(preimage) != lock.secret_hash {
                return Err(CallError::Requires(RequiresFailure::WrongPreimage));
            }
            if ctx.height >= lock.timeout_height {
                return Err(CallError::Requires(RequiresFailure::TooLateClaim));
            }
            car.owner = lock.beneficiary.clone();
            car.revealed_secret = Some(preimage.to_string());
            car.swap_lock = None;
            effect.ownership_change = Some(car.owner.clone());
            effect.note("o", &car.owner);
            effect.note("revealed_secret", preimage);
            Ok(())
        }
        "refund_swap_lock" => {
            let f = "refund_swap_lock";
            expect_arity(f, args, 0)?;
            reject_attached_value(f, msg)?;
            let lock = match &car.swap_lock {
                Some(lock) => lock,
                None => return Err(CallError::Requires(RequiresFailure::NoActiveLock)),
            };
            if msg.sender != lock.locker {
                return Err(CallError::Requires(RequiresFailure::NotLocker));
            }
            if ctx.height < lock.timeout_height {
                return Err(CallError::Requires(RequiresFailure::TooEarlyRefund));
            }
            car.swap_lock = None;
            effect.note("swap_hash", "cleared");
            Ok(())
        }
        other => Err(CallError::UnknownFunction { contract: id, name: other.to_string() }),
    }
}

#[allow(clippy::too_many_arguments)]
fn lockbox_call(
    lockbox: &mut LockboxState,
    id: ContractId,
    locked: &mut Amount,
    function: &str,
    args: &[ArgValue],
    msg: &ContractMessage,
    ctx: &CallContext,
    effect: &mut ExecutionEffect,
) -> Result<(), CallError> {
    match function {
        "claim" => {
            expect_arity("claim", args, 1)?;
            let preimage = str_arg("claim", args, 0)?;
            reject_attached_value("claim", msg)?;
            if lockbox.phase != LockboxPhase::Locked {
                return Err(CallError::Requires(RequiresFailure::AlreadyResolved));
            }
            if msg.sender != lockbox.beneficiary {
                return Err(CallError::Requires(RequiresFailure::NotBeneficiary));
            }
            if preimage_digest(preimage) != lockbox.secret_hash {
                return Err(CallError::Requires(RequiresFailure::WrongPreimage));
            }
            if ctx.height >= lockbox.timeout_height {
                return Err(CallError::Requires(RequiresFailure::TooLateClaim));
            }
            effect.pay(&lockbox.beneficiary, *locked);
            *locked = Amount::ZERO;
            lockbox.phase = LockboxPhase::Claimed;
            lockbox.revealed_secret = Some(preimage.to_string());
            effect.note("phase", lockbox.phase.name());
            effect.note("revealed_secret", preimage);
            Ok(())
        }
        "refund" => {
            expect_arity("refund", args, 0)?;
            reject_attached_value("refund", msg)?;
            if lockbox.phase != LockboxPhase::Locked {
                return Err(CallError::Requires(RequiresFailure::AlreadyResolved));
            }
            if msg.sender != lockbox.locker {
                return Err(CallError::Requires(RequiresFailure::NotLocker));
            }
            if ctx.height < lockbox.timeout_height {
                return Err(CallError::Requires(RequiresFailure::TooEarlyRefund));
            }
            effect.pay(&lockbox.locker, *locked);
            *locked = Amount::ZERO;
            lockbox.phase = LockboxPhase::Refunded;
            effect.note("phase", lockbox.phase.name());
            Ok(())
        }
        other => Err(CallError::UnknownFunction { contract: id, name: other.to_string() }),
    }
}
