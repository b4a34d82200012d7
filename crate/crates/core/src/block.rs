//! Blocks: ordered batches of payload items sealed by a producer.

use serde::{Deserialize, Serialize};

use crate::codec::{
    digest_of, Canonical, CanonicalDecode, CanonicalReader, CanonicalWriter, CodecError, Digest,
};
use crate::contract::ContractMessage;
use crate::keys::PublicKey;
use crate::tx::Transfer;

/// One includable item: a plain value transfer or a contract message.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PayloadItem {
    Transfer(Transfer),
    Message(ContractMessage),
}

impl PayloadItem {
    /// Stable id used for mempool dedup and receipts. Transfers reuse their
    /// tx id, messages their message id.
    pub fn item_id(&self) -> Digest {
        match self {
            PayloadItem::Transfer(tx) => tx.tx_id(),
            PayloadItem::Message(msg) => msg.msg_id(),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            PayloadItem::Transfer(_) => "transfer",
            PayloadItem::Message(_) => "message",
        }
    }
}

impl Canonical for PayloadItem {
    fn encode(&self, w: &mut CanonicalWriter) {
        match self {
            PayloadItem::Transfer(tx) => {
                w.put_u8(0);
                tx.encode(w);
            }
            PayloadItem::Message(msg) => {
                w.put_u8(1);
                msg.encode(w);
            }
        }
    }
}

impl CanonicalDecode for PayloadItem {
    fn decode(r: &mut CanonicalReader<'_>) -> Result<Self, CodecError> {
        match r.take_u8()? {
            0 => Ok(PayloadItem::Transfer(Transfer::decode(r)?)),
            1 => Ok(PayloadItem::Message(ContractMessage::decode(r)?)),
            tag => Err(CodecError::BadTag(tag)),
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Block {
    pub height: u64,
    pub prev_hash: Digest,
    /// Key of the miner or validator that produced the block.
    pub producer: PublicKey,
    pub payload: Vec<PayloadItem>,
    /// Digest over everything above, fixed at seal time.
    pub hash: Digest,
}

impl Block {
    /// Builds the block and stamps its hash.
    pub fn seal(
        height: u64,
        prev_hash: Digest,
        producer: PublicKey,
        payload: Vec<PayloadItem>,
    ) -> Block {
        let mut block = Block { height, prev_hash, producer, payload, hash: Digest::ZERO };
        block.hash = block.compute_hash();
        block
    }

    pub fn compute_hash(&self) -> Digest {
        digest_of("block", &BlockBody(self))
    }

    /// True when the stored hash matches the contents.
    pub fn hash_is_consistent(&self) -> bool {
        self.hash == self.compute_hash()
    }
}

/// Hash input view: a block minus its own hash field.
struct BlockBody<'a>(&'a Block);

impl Canonical for BlockBody<'_> {
    fn encode(&self, w: &mut CanonicalWriter) {
        w.put_u64(self.0.height);
        w.put_digest(&self.0.prev_hash);
        self.0.producer.encode(w);
        w.put_count(self.0.payload.len());
        for item in &self.0.payload {
            item.encode(w);
        }
    }
}

impl Canonical for Block {
    fn encode(&self, w: &mut CanonicalWriter) {
        BlockBody(self).encode(w);
        w.put_digest(&self.hash);
    }
}

impl CanonicalDecode for Block {
    fn decode(r: &mut CanonicalReader<'_>) -> Result<Self, CodecError> {
        let height = r.take_u64()?;
        let prev_hash = r.take_digest()?;
        let producer = PublicKey::decode(r)?;
        let count = r.take_count()?;
        let mut payload = Vec::with_capacity(count);
        for _ in 0..count {
            payload.push(PayloadItem::decode(r)?);
        }
        let hash = r.take_digest()?;
        Ok(Block { height, prev_hash, producer, payload, hash })
    }
}
