//! Value transfers over an unspent-output set.
//!
//! A transfer consumes whole outputs it can sign for and creates new ones,
//! conserving value exactly. There are no fees and no partial spends; change
//! is just another output the author writes back to themselves.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::address::{Address, MultisigWitness};
use crate::amount::Amount;
use crate::codec::{
    digest_bytes, digest_of, Canonical, CanonicalDecode, CanonicalReader, CanonicalWriter,
    CodecError, Digest,
};
use crate::keys::{Identity, Signature};

/// A reference to one output of one prior transaction.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outpoint {
    pub tx_id: Digest,
    pub index: u32,
}

impl Outpoint {
    pub fn new(tx_id: Digest, index: u32) -> Outpoint {
        Outpoint { tx_id, index }
    }
}

impl Canonical for Outpoint {
    fn encode(&self, w: &mut CanonicalWriter) {
        w.put_digest(&self.tx_id);
        w.put_u32(self.index);
    }
}

impl CanonicalDecode for Outpoint {
    fn decode(r: &mut CanonicalReader<'_>) -> Result<Self, CodecError> {
        Ok(Outpoint { tx_id: r.take_digest()?, index: r.take_u32()? })
    }
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TxOutput {
    pub value: Amount,
    pub recipient: Address,
}

impl TxOutput {
    pub fn new(value: Amount, recipient: Address) -> TxOutput {
        TxOutput { value, recipient }
    }
}

impl Canonical for TxOutput {
    fn encode(&self, w: &mut CanonicalWriter) {
        self.value.encode(w);
        self.recipient.encode(w);
    }
}

impl CanonicalDecode for TxOutput {
    fn decode(r: &mut CanonicalReader<'_>) -> Result<Self, CodecError> {
        Ok(TxOutput { value: Amount::decode(r)?, recipient: Address::decode(r)? })
    }
}

/// Authorization to spend one output: a single signature for user-addressed
/// outputs, a witness for multisig-addressed ones.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SpendAuth {
    Single(Signature),
    Multi(MultisigWitness),
}

impl SpendAuth {
    /// Checks this authorization against the address that owns the spent
    /// output, over the body being signed.
    pub fn authorizes(&self, owner: &Address, body: &Digest) -> bool {
        match (self, owner) {
            (SpendAuth::Single(sig), Address::User { .. }) => {
                sig.verify(body) && &Address::for_key(sig.signer()) == owner
            }
            (SpendAuth::Multi(witness), Address::Multisig(spec)) => {
                witness.satisfies(spec, body)
            }
            _ => false,
        }
    }
}

impl Canonical for SpendAuth {
    fn encode(&self, w: &mut CanonicalWriter) {
        match self {
            SpendAuth::Single(sig) => {
                w.put_u8(0);
                sig.encode(w);
            }
            SpendAuth::Multi(witness) => {
                w.put_u8(1);
                witness.encode(w);
            }
        }
    }
}

impl CanonicalDecode for SpendAuth {
    fn decode(r: &mut CanonicalReader<'_>) -> Result<Self, CodecError> {
        match r.take_u8()? {
            0 => Ok(SpendAuth::Single(Signature::decode(r)?)),
            1 => Ok(SpendAuth::Multi(MultisigWitness::decode(r)?)),
            tag => Err(CodecError::BadTag(tag)),
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TxInput {
    pub outpoint: Outpoint,
    pub auth: SpendAuth,
}

impl Canonical for TxInput {
    fn encode(&self, w: &mut CanonicalWriter) {
        self.outpoint.encode(w);
        self.auth.encode(w);
    }
}

impl CanonicalDecode for TxInput {
    fn decode(r: &mut CanonicalReader<'_>) -> Result<Self, CodecError> {
        Ok(TxInput { outpoint: Outpoint::decode(r)?, auth: SpendAuth::decode(r)? })
    }
}

/// The digest every input signature covers: outpoints and outputs, in order,
/// with the signatures themselves excluded. This is also the transaction id.
pub fn transfer_body_digest(inputs: &[Outpoint], outputs: &[TxOutput]) -> Digest {
    let mut w = CanonicalWriter::new();
    w.put_count(inputs.len());
    for outpoint in inputs {
        outpoint.encode(&mut w);
    }
    w.put_count(outputs.len());
    for output in outputs {
        output.encode(&mut w);
    }
    digest_bytes("transfer-body", w.as_bytes())
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Transfer {
    pub inputs: Vec<TxInput>,
    pub outputs: Vec<TxOutput>,
}

impl Transfer {
    pub fn new(inputs: Vec<TxInput>, outputs: Vec<TxOutput>) -> Transfer {
        Transfer { inputs, outputs }
    }

    /// Builds a transfer whose inputs are all owned by single-key identities.
    pub fn signed(spends: Vec<(Outpoint, &Identity)>, outputs: Vec<TxOutput>) -> Transfer {
        let outpoints: Vec<Outpoint> = spends.iter().map(|(op, _)| *op).collect();
        let body = transfer_body_digest(&outpoints, &outputs);
        let inputs = spends
            .into_iter()
            .map(|(outpoint, id)| TxInput { outpoint, auth: SpendAuth::Single(id.sign(&body)) })
            .collect();
        Transfer { inputs, outputs }
    }

    pub fn body_digest(&self) -> Digest {
        let outpoints: Vec<Outpoint> = self.inputs.iter().map(|i| i.outpoint).collect();
        transfer_body_digest(&outpoints, &self.outputs)
    }

    /// Transaction id over the whole transfer, authorizations included.
    /// Signatures cover only the body, so the id must not: otherwise a
    /// forged copy of a transfer would collide with the honest one and
    /// block it in duplicate detection.
    pub fn tx_id(&self) -> Digest {
        digest_of("transfer-id", self)
    }
}

impl Canonical for Transfer {
    fn encode(&self, w: &mut CanonicalWriter) {
        w.put_count(self.inputs.len());
        for input in &self.inputs {
            input.encode(w);
        }
        w.put_count(self.outputs.len());
        for output in &self.outputs {
            output.encode(w);
        }
    }
}

impl CanonicalDecode for Transfer {
    fn decode(r: &mut CanonicalReader<'_>) -> Result<Self, CodecError> {
        let n_in = r.take_count()?;
        let mut inputs = Vec::with_capacity(n_in);
        for _ in 0..n_in {
            inputs.push(TxInput::decode(r)?);
        }
        let n_out = r.take_count()?;
        let mut outputs = Vec::with_capacity(n_out);
        for _ in 0..n_out {
            outputs.push(TxOutput::decode(r)?);
        }
        Ok(Transfer { inputs, outputs })
    }
}

/// All currently unspent outputs, keyed by outpoint. BTreeMap keeps every
/// iteration order deterministic, which state digests depend on.
#[derive(Clone, Default, Debug)]
pub struct UtxoSet {
    entries: BTreeMap<Outpoint, TxOutput>,
}

impl UtxoSet {
    pub fn new() -> UtxoSet {
        UtxoSet::default()
    }

    pub fn insert(&mut self, outpoint: Outpoint, output: TxOutput) {
        let prior = self.entries.insert(outpoint, output);
        debug_assert!(prior.is_none(), "outpoint minted twice");
    }

    pub fn get(&self, outpoint: &Outpoint) -> Option<&TxOutput> {
        self.entries.get(outpoint)
    }

    pub fn remove(&mut self, outpoint: &Outpoint) -> Option<TxOutput> {
        self.entries.remove(outpoint)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Outpoint, &TxOutput)> {
        self.entries.iter()
    }

    pub fn balance_of(&self, address: &Address) -> Amount {
        let owned = self.entries.values().filter(|o| &o.recipient == address).map(|o| o.value);
        Amount::checked_sum(owned).expect("balance overflows")
    }

    pub fn owned_by<'a>(
        &'a self,
        address: &'a Address,
    ) -> impl Iterator<Item = (&'a Outpoint, &'a TxOutput)> + 'a {
        self.entries.iter().filter(move |(_, o)| &o.recipient == address)
    }

    pub fn total_value(&self) -> Amount {
        Amount::checked_sum(self.entries.values().map(|o| o.value)).expect("total value overflows")
    }
}

/// Record of every outpoint ever consumed, mapping to the id of the item
/// that consumed it. Lets validation tell a replayed spend apart from a
/// reference that never existed.
pub type SpentIndex = BTreeMap<Outpoint, Digest>;

#[derive(Clone, Debug, Error, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferError {
    #[error("transfer has no inputs")]
    Empty,
    #[error("input {input} references unknown outpoint {tx_id}:{index}", tx_id = outpoint.tx_id, index = outpoint.index)]
    UnknownOutpoint { input: usize, outpoint: Outpoint },
    #[error("input {input} double-spends outpoint {tx_id}:{index}", tx_id = outpoint.tx_id, index = outpoint.index)]
    DoubleSpend { input: usize, outpoint: Outpoint },
    #[error("input {input} is not signed by the output's recipient")]
    BadSignature { input: usize },
    #[error("inputs total {inputs} but outputs total {outputs}")]
    ValueMismatch { inputs: Amount, outputs: Amount },
    #[error("value sum overflows")]
    Overflow,
}

/// Full validation of one transfer against the current set. On failure, the
/// reported index is the first failing input.
pub fn validate_transfer(
    tx: &Transfer,
    utxos: &UtxoSet,
    spent: &SpentIndex,
) -> Result<(), TransferError> {
    if tx.inputs.is_empty() {
        return Err(TransferError::Empty);
    }
    let body = tx.body_digest();

    let mut consumed: BTreeMap<Outpoint, usize> = BTreeMap::new();
    let mut input_total = Amount::ZERO;
    for (index, input) in tx.inputs.iter().enumerate() {
        if consumed.insert(input.outpoint, index).is_some() {
            return Err(TransferError::DoubleSpend { input: index, outpoint: input.outpoint });
        }
        let output = match utxos.get(&input.outpoint) {
            Some(output) => output,
            None if spent.contains_key(&input.outpoint) => {
                return Err(TransferError::DoubleSpend { input: index, outpoint: input.outpoint });
            }
            None => {
                return Err(TransferError::UnknownOutpoint {
                    input: index,
                    outpoint: input.outpoint,
                });
            }
        };
        if !input.auth.authorizes(&output.recipient, &body) {
            return Err(TransferError::BadSignature { input: index });
        }
        input_total = input_total.checked_add(output.value).ok_or(TransferError::Overflow)?;
    }

    let output_total =
        Amount::checked_sum(tx.outputs.iter().map(|o| o.value)).ok_or(TransferError::Overflow)?;
    if input_total != output_total {
        return Err(TransferError::ValueMismatch { inputs: input_total, outputs: output_total });
    }
    Ok(())
}

/// Applies a transfer that already passed validation.
pub fn apply_transfer(tx: &Transfer, utxos: &mut UtxoSet, spent: &mut SpentIndex) {
    let tx_id = tx.tx_id();
    for input in &tx.inputs {
        let removed = utxos.remove(&input.outpoint);
        debug_assert!(removed.is_some(), "applying unvalidated transfer");
        spent.insert(input.outpoint, tx_id);
    }
    for (index, output) in tx.outputs.iter().enumerate() {
        utxos.insert(Outpoint::new(tx_id, index as u32), output.clone());
    }
}
