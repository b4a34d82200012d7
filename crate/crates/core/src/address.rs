//! Addresses and multisignature address material.
//!
//! Three kinds of address exist. User addresses are derived from a single
//! public key. Contract addresses are derived from a contract id. Multisig
//! addresses carry their full spec (epoch, threshold, member keys) because a
//! verifier needs exactly that data to check a witness against them.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::codec::{
    digest_of, Canonical, CanonicalDecode, CanonicalReader, CanonicalWriter, CodecError, Digest,
};
use crate::keys::{PublicKey, Signature};

pub const ADDRESS_LEN: usize = 20;

/// The 20-byte core of any address, shown as hex.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AddressBytes([u8; ADDRESS_LEN]);

impl AddressBytes {
    fn from_digest(digest: &Digest) -> AddressBytes {
        let mut raw = [0u8; ADDRESS_LEN];
        raw.copy_from_slice(&digest.as_bytes()[..ADDRESS_LEN]);
        AddressBytes(raw)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn parse_hex(text: &str) -> Result<Self, CodecError> {
        let raw = hex::decode(text).map_err(|_| CodecError::BadDigestHex)?;
        let bytes: [u8; ADDRESS_LEN] = raw.try_into().map_err(|_| CodecError::BadDigestHex)?;
        Ok(AddressBytes(bytes))
    }
}

impl fmt::Display for AddressBytes {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for AddressBytes {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "AddressBytes({}..)", &self.to_hex()[..8])
    }
}

impl Serialize for AddressBytes {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for AddressBytes {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        AddressBytes::parse_hex(&text).map_err(serde::de::Error::custom)
    }
}

impl Canonical for AddressBytes {
    fn encode(&self, w: &mut CanonicalWriter) {
        w.put_bytes(&self.0)
    }
}

impl CanonicalDecode for AddressBytes {
    fn decode(r: &mut CanonicalReader<'_>) -> Result<Self, CodecError> {
        let raw = r.take_bytes()?;
        let bytes: [u8; ADDRESS_LEN] =
            raw.try_into().map_err(|_| CodecError::LengthOutOfRange(raw.len() as u64))?;
        Ok(AddressBytes(bytes))
    }
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Address {
    User { digest: AddressBytes },
    Contract { digest: AddressBytes },
    Multisig(MultisigAddress),
}

impl Address {
    /// The address a single public key pays to.
    pub fn for_key(key: &PublicKey) -> Address {
        Address::User {
            digest: AddressBytes::from_digest(&digest_of("user-address", key)),
        }
    }

    /// The address form of a contract id. Built here from the raw digest so
    /// the contract module can stay downstream of this one.
    pub fn for_contract_digest(id: &Digest) -> Address {
        Address::Contract {
            digest: AddressBytes::from_digest(&digest_of("contract-address", id)),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Address::User { .. } => "user",
            Address::Contract { .. } => "contract",
            Address::Multisig(_) => "multisig",
        }
    }

    pub fn digest(&self) -> &AddressBytes {
        match self {
            Address::User { digest } | Address::Contract { digest } => digest,
            Address::Multisig(spec) => spec.digest(),
        }
    }

    pub fn as_multisig(&self) -> Option<&MultisigAddress> {
        match self {
            Address::Multisig(spec) => Some(spec),
            _ => None,
        }
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind_name(), self.digest())
    }
}

impl Canonical for Address {
    fn encode(&self, w: &mut CanonicalWriter) {
        match self {
            Address::User { digest } => {
                w.put_u8(0);
                digest.encode(w);
            }
            Address::Contract { digest } => {
                w.put_u8(1);
                digest.encode(w);
            }
            Address::Multisig(spec) => {
                w.put_u8(2);
                spec.encode(w);
            }
        }
    }
}

impl CanonicalDecode for Address {
    fn decode(r: &mut CanonicalReader<'_>) -> Result<Self, CodecError> {
        match r.take_u8()? {
            0 => Ok(Address::User { digest: AddressBytes::decode(r)? }),
            1 => Ok(Address::Contract { digest: AddressBytes::decode(r)? }),
            2 => Ok(Address::Multisig(MultisigAddress::decode(r)?)),
            tag => Err(CodecError::BadTag(tag)),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MultisigSpecError {
    #[error("multisig address needs at least one member key")]
    NoMembers,
    #[error("multisig threshold must be at least one")]
    ZeroThreshold,
    #[error("multisig threshold {threshold} exceeds the {members} member keys")]
    ThresholdExceedsMembers { threshold: u32, members: usize },
    #[error("multisig member keys contain a duplicate")]
    DuplicateMember,
}

/// An m-of-n address for one key epoch. The digest is a pure function of the
/// other fields, so equal digests mean equal specs.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultisigAddress {
    pub epoch: u64,
    pub threshold: u32,
    pub members: Vec<PublicKey>,
    digest: AddressBytes,
}

impl MultisigAddress {
    pub fn new(
        epoch: u64,
        threshold: u32,
        members: Vec<PublicKey>,
    ) -> Result<MultisigAddress, MultisigSpecError> {
        if members.is_empty() {
            return Err(MultisigSpecError::NoMembers);
        }
        if threshold == 0 {
            return Err(MultisigSpecError::ZeroThreshold);
        }
        if threshold as usize > members.len() {
            return Err(MultisigSpecError::ThresholdExceedsMembers {
                threshold,
                members: members.len(),
            });
        }
        let distinct: BTreeSet<&PublicKey> = members.iter().collect();
        if distinct.len() != members.len() {
            return Err(MultisigSpecError::DuplicateMember);
        }

        let mut w = CanonicalWriter::new();
        w.put_u64(epoch);
        w.put_u32(threshold);
        w.put_count(members.len());
        for member in &members {
            member.encode(&mut w);
        }
        let digest = AddressBytes::from_digest(&crate::codec::digest_bytes(
            "multisig-address",
            w.as_bytes(),
        ));

        Ok(MultisigAddress { epoch, threshold, members, digest })
    }

    pub fn digest(&self) -> &AddressBytes {
        &self.digest
    }

    pub fn is_member(&self, key: &PublicKey) -> bool {
        self.members.contains(key)
    }
}

impl Canonical for MultisigAddress {
    fn encode(&self, w: &mut CanonicalWriter) {
        w.put_u64(self.epoch);
        w.put_u32(self.threshold);
        w.put_count(self.members.len());
        for member in &self.members {
            member.encode(w);
        }
        self.digest.encode(w);
    }
}

impl CanonicalDecode for MultisigAddress {
    fn decode(r: &mut CanonicalReader<'_>) -> Result<Self, CodecError> {
        let epoch = r.take_u64()?;
        let threshold = r.take_u32()?;
        let count = r.take_count()?;
        let mut members = Vec::with_capacity(count);
        for _ in 0..count {
            members.push(PublicKey::decode(r)?);
        }
        let digest = AddressBytes::decode(r)?;
        // Rebuild through the validating constructor so a tampered encoding
        // cannot smuggle in a digest that does not match its members.
        let rebuilt = MultisigAddress::new(epoch, threshold, members)
            .map_err(|_| CodecError::BadTag(2))?;
        if rebuilt.digest != digest {
            return Err(CodecError::BadTag(2));
        }
        Ok(rebuilt)
    }
}

/// A set of signatures intended to satisfy a multisig address.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct MultisigWitness {
    pub signatures: Vec<Signature>,
}

impl MultisigWitness {
    pub fn new(signatures: Vec<Signature>) -> MultisigWitness {
        MultisigWitness { signatures }
    }

    /// Counts member keys with a valid signature over `body`, each member at
    /// most once no matter how many times it signed.
    pub fn distinct_valid_signers(&self, addr: &MultisigAddress, body: &Digest) -> usize {
        let mut seen: BTreeSet<&PublicKey> = BTreeSet::new();
        for sig in &self.signatures {
            if addr.is_member(sig.signer()) && sig.verify(body) {
                seen.insert(sig.signer());
            }
        }
        seen.len()
    }

    /// True iff at least `threshold` distinct members signed `body`.
    ///
    /// This is the pure signature check. Whether the epoch behind the address
    /// is still trustworthy is a registry question layered on top.
    pub fn satisfies(&self, addr: &MultisigAddress, body: &Digest) -> bool {
        self.distinct_valid_signers(addr, body) >= addr.threshold as usize
    }
}

impl Canonical for MultisigWitness {
    fn encode(&self, w: &mut CanonicalWriter) {
        w.put_count(self.signatures.len());
        for sig in &self.signatures {
            sig.encode(w);
        }
    }
}

impl CanonicalDecode for MultisigWitness {
    fn decode(r: &mut CanonicalReader<'_>) -> Result<Self, CodecError> {
        let count = r.take_count()?;
        let mut signatures = Vec::with_capacity(count);
        for _ in 0..count {
            signatures.push(Signature::decode(r)?);
        }
        Ok(MultisigWitness { signatures })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::digest_bytes;
    use crate::keys::Identity;

    fn members(n: usize) -> (Vec<Identity>, Vec<PublicKey>) {
        let ids: Vec<Identity> =
            (0..n).map(|i| Identity::from_seed(&format!("member-{i}"))).collect();
        let keys = ids.iter().map(|id| *id.public()).collect();
        (ids, keys)
    }

    #[test]
    fn user_address_is_stable_and_key_specific() {
        let a = Identity::from_seed("a");
        assert_eq!(Address::for_key(a.public()), Address::for_key(a.public()));
        assert_ne!(
            Address::for_key(a.public()),
            Address::for_key(Identity::from_seed("b").public())
        );
    }

    #[test]
    fn multisig_spec_is_validated() {
        let (_, keys) = members(4);
        assert!(MultisigAddress::new(0, 3, keys.clone()).is_ok());
        assert_eq!(MultisigAddress::new(0, 0, keys.clone()), Err(MultisigSpecError::ZeroThreshold));
        assert_eq!(
            MultisigAddress::new(0, 5, keys.clone()),
            Err(MultisigSpecError::ThresholdExceedsMembers { threshold: 5, members: 4 })
        );
        assert_eq!(MultisigAddress::new(0, 1, vec![]), Err(MultisigSpecError::NoMembers));

        let mut dup = keys;
        dup[1] = dup[0];
        assert_eq!(MultisigAddress::new(0, 2, dup), Err(MultisigSpecError::DuplicateMember));
    }

    #[test]
    fn multisig_digest_depends_on_epoch() {
        let (_, keys) = members(4);
        let e0 = MultisigAddress::new(0, 3, keys.clone()).unwrap();
        let e1 = MultisigAddress::new(1, 3, keys).unwrap();
        assert_ne!(e0.digest(), e1.digest());
    }

    #[test]
    fn witness_counts_distinct_members_only() {
        let (ids, keys) = members(4);
        let addr = MultisigAddress::new(0, 3, keys).unwrap();
        let body = digest_bytes("witness-test", b"body");

        // Two distinct signers, one of them three times over: still short.
        let padded = MultisigWitness::new(vec![
            ids[0].sign(&body),
            ids[0].sign(&body),
            ids[0].sign(&body),
            ids[1].sign(&body),
        ]);
        assert_eq!(padded.distinct_valid_signers(&addr, &body), 2);
        assert!(!padded.satisfies(&addr, &body));

        let enough = MultisigWitness::new(vec![
            ids[0].sign(&body),
            ids[1].sign(&body),
            ids[2].sign(&body),
        ]);
        assert!(enough.satisfies(&addr, &body));
    }

    #[test]
    fn non_member_signatures_do_not_count() {
        let (ids, keys) = members(3);
        let addr = MultisigAddress::new(0, 2, keys).unwrap();
        let body = digest_bytes("witness-test", b"body");
        let outsider = Identity::from_seed("outsider");

        let witness =
            MultisigWitness::new(vec![ids[0].sign(&body), outsider.sign(&body)]);
        assert_eq!(witness.distinct_valid_signers(&addr, &body), 1);
        assert!(!witness.satisfies(&addr, &body));
    }

    #[test]
    fn witness_is_bound_to_its_body() {
        let (ids, keys) = members(3);
        let addr = MultisigAddress::new(0, 2, keys).unwrap();
        let body = digest_bytes("witness-test", b"body");
        let other = digest_bytes("witness-test", b"other");

        let witness = MultisigWitness::new(vec![ids[0].sign(&body), ids[1].sign(&body)]);
        assert!(witness.satisfies(&addr, &body));
        assert!(!witness.satisfies(&addr, &other));
    }
}
