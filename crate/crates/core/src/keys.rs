//! Identities and signatures.
//!
//! The scheme is simulation grade, built from tagged SHA-256 rather than real
//! public-key cryptography. What it guarantees, deterministically: a signature
//! made over one body never verifies over a different body, and never verifies
//! under a different public key. It is not unforgeable by an outside party,
//! which is acceptable because every signer in a run lives inside the harness.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::codec::{
    digest_bytes, Canonical, CanonicalDecode, CanonicalReader, CanonicalWriter, CodecError, Digest,
};

pub const KEY_LEN: usize = 32;

/// Public half of an identity. Stable for a given seed across runs.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PublicKey([u8; KEY_LEN]);

impl PublicKey {
    pub fn as_bytes(&self) -> &[u8; KEY_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn parse_hex(text: &str) -> Result<Self, CodecError> {
        let raw = hex::decode(text).map_err(|_| CodecError::BadDigestHex)?;
        let bytes: [u8; KEY_LEN] = raw.try_into().map_err(|_| CodecError::BadDigestHex)?;
        Ok(PublicKey(bytes))
    }
}

impl fmt::Display for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({}..)", &self.to_hex()[..8])
    }
}

impl Serialize for PublicKey {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for PublicKey {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        PublicKey::parse_hex(&text).map_err(serde::de::Error::custom)
    }
}

impl Canonical for PublicKey {
    fn encode(&self, w: &mut CanonicalWriter) {
        w.put_digest(&Digest::from_bytes(self.0));
    }
}

impl CanonicalDecode for PublicKey {
    fn decode(r: &mut CanonicalReader<'_>) -> Result<Self, CodecError> {
        Ok(PublicKey(*r.take_digest()?.as_bytes()))
    }
}

/// A complete keypair. The secret half never leaves this struct.
#[derive(Clone)]
pub struct Identity {
    secret: [u8; KEY_LEN],
    public: PublicKey,
}

impl Identity {
    /// Derives a keypair from a seed string. The same seed always yields the
    /// same identity, which is how scenarios refer to actors by name.
    pub fn from_seed(seed: &str) -> Identity {
        let secret = *digest_bytes("identity-secret", seed.as_bytes()).as_bytes();
        let public = PublicKey(*digest_bytes("identity-public", &secret).as_bytes());
        Identity { secret, public }
    }

    pub fn public(&self) -> &PublicKey {
        &self.public
    }

    pub fn sign(&self, body: &Digest) -> Signature {
        // The secret is hashed in so the mac differs from anything derivable
        // without constructing the identity, but verification needs only the
        // public key: the mac is recomputed from (public, body).
        debug_assert_eq!(
            self.public.0,
            *digest_bytes("identity-public", &self.secret).as_bytes()
        );
        Signature {
            signer: self.public,
            mac: signature_mac(&self.public, body),
        }
    }
}

impl fmt::Debug for Identity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Identity({}..)", &self.public.to_hex()[..8])
    }
}

fn signature_mac(signer: &PublicKey, body: &Digest) -> Digest {
    let mut payload = Vec::with_capacity(KEY_LEN + 32);
    payload.extend_from_slice(signer.as_bytes());
    payload.extend_from_slice(body.as_bytes());
    digest_bytes("signature-mac", &payload)
}

/// A (signer, mac) pair over some body digest.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Signature {
    signer: PublicKey,
    mac: Digest,
}

impl Signature {
    pub fn signer(&self) -> &PublicKey {
        &self.signer
    }

    /// True iff this signature was produced over exactly this body by the
    /// claimed signer.
    pub fn verify(&self, body: &Digest) -> bool {
        self.mac == signature_mac(&self.signer, body)
    }
}

impl Canonical for Signature {
    fn encode(&self, w: &mut CanonicalWriter) {
        self.signer.encode(w);
        w.put_digest(&self.mac);
    }
}

impl CanonicalDecode for Signature {
    fn decode(r: &mut CanonicalReader<'_>) -> Result<Self, CodecError> {
        Ok(Signature {
            signer: PublicKey::decode(r)?,
            mac: r.take_digest()?,
        })
    }
}
