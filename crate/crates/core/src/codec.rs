//! Canonical binary encoding shared by hashing, signing, and the wire format.
//!
//! Every hashable structure has exactly one byte representation: fields are
//! written in declaration order, integers are big-endian, and variable-length
//! data carries a length prefix. All digests are domain-tagged so two
//! different kinds of object can never collide on the same bytes.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

/// Width of every digest in bytes.
pub const DIGEST_LEN: usize = 32;

/// A SHA-256 output, wrapped so call sites cannot mix digests with raw bytes.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Digest([u8; DIGEST_LEN]);

impl Digest {
    pub const ZERO: Digest = Digest([0u8; DIGEST_LEN]);

    pub fn from_bytes(bytes: [u8; DIGEST_LEN]) -> Self {
        Digest(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; DIGEST_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn parse_hex(text: &str) -> Result<Self, CodecError> {
        let raw = hex::decode(text).map_err(|_| CodecError::BadDigestHex)?;
        let bytes: [u8; DIGEST_LEN] = raw.try_into().map_err(|_| CodecError::BadDigestHex)?;
        Ok(Digest(bytes))
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({}..)", &self.to_hex()[..8])
    }
}

impl Serialize for Digest {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        Digest::parse_hex(&text).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodecError {
    #[error("input ended before field was complete")]
    UnexpectedEnd,
    #[error("{0} trailing bytes after the last field")]
    TrailingBytes(usize),
    #[error("string field is not valid utf-8")]
    BadUtf8,
    #[error("unknown tag byte {0:#04x}")]
    BadTag(u8),
    #[error("length prefix {0} exceeds the decoding limit")]
    LengthOutOfRange(u64),
    #[error("digest is not {DIGEST_LEN} bytes of hex")]
    BadDigestHex,
}

/// Hard cap on any single length prefix. Large enough for every structure in
/// the system, small enough that a corrupt prefix cannot trigger a huge
/// allocation.
const MAX_FIELD_LEN: u64 = 1 << 24;

/// Accumulates the canonical encoding of one structure.
#[derive(Default)]
pub struct CanonicalWriter {
    buf: Vec<u8>,
}

impl CanonicalWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.buf
    }

    pub fn put_u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn put_u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    pub fn put_u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    pub fn put_bool(&mut self, v: bool) {
        self.buf.push(u8::from(v));
    }

    /// Length-prefixed raw bytes.
    pub fn put_bytes(&mut self, v: &[u8]) {
        self.put_u32(u32::try_from(v.len()).expect("field exceeds u32 length"));
        self.buf.extend_from_slice(v);
    }

    pub fn put_str(&mut self, v: &str) {
        self.put_bytes(v.as_bytes());
    }

    /// Fixed-width digest, no length prefix.
    pub fn put_digest(&mut self, v: &Digest) {
        self.buf.extend_from_slice(v.as_bytes());
    }

    /// Element count for a list; the caller then writes each element.
    pub fn put_count(&mut self, n: usize) {
        self.put_u32(u32::try_from(n).expect("list exceeds u32 length"));
    }
}

/// Reads a canonical encoding back. Every method fails cleanly on truncated
/// input instead of panicking, which is what lets raw submissions from
/// outside be rejected as malformed.
pub struct CanonicalReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> CanonicalReader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        if self.buf.len() - self.pos < n {
            return Err(CodecError::UnexpectedEnd);
        }
        let slice = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    pub fn take_u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take(1)?[0])
    }

    pub fn take_u32(&mut self) -> Result<u32, CodecError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn take_u64(&mut self) -> Result<u64, CodecError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn take_bool(&mut self) -> Result<bool, CodecError> {
        match self.take_u8()? {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(CodecError::BadTag(other)),
        }
    }

    pub fn take_bytes(&mut self) -> Result<&'a [u8], CodecError> {
        let len = u64::from(self.take_u32()?);
        if len > MAX_FIELD_LEN {
            return Err(CodecError::LengthOutOfRange(len));
        }
        self.take(len as usize)
    }

    pub fn take_string(&mut self) -> Result<String, CodecError> {
        let raw = self.take_bytes()?;
        String::from_utf8(raw.to_vec()).map_err(|_| CodecError::BadUtf8)
    }

    pub fn take_digest(&mut self) -> Result<Digest, CodecError> {
        let raw: [u8; DIGEST_LEN] = self.take(DIGEST_LEN)?.try_into().unwrap();
        Ok(Digest::from_bytes(raw))
    }

    pub fn take_count(&mut self) -> Result<usize, CodecError> {
        let n = u64::from(self.take_u32()?);
        if n > MAX_FIELD_LEN {
            return Err(CodecError::LengthOutOfRange(n));
        }
        Ok(n as usize)
    }

    pub fn finish(self) -> Result<(), CodecError> {
        let rest = self.buf.len() - self.pos;
        if rest == 0 {
            Ok(())
        } else {
            Err(CodecError::TrailingBytes(rest))
        }
    }
}

/// Types with exactly one binary representation.
pub trait Canonical {
    fn encode(&self, w: &mut CanonicalWriter);
}

/// Types that can be rebuilt from their canonical representation.
pub trait CanonicalDecode: Sized {
    fn decode(r: &mut CanonicalReader<'_>) -> Result<Self, CodecError>;
}

impl Canonical for Digest {
    fn encode(&self, w: &mut CanonicalWriter) {
        w.put_digest(self);
    }
}

impl CanonicalDecode for Digest {
    fn decode(r: &mut CanonicalReader<'_>) -> Result<Self, CodecError> {
        r.take_digest()
    }
}

pub fn encode_to_vec<T: Canonical + ?Sized>(value: &T) -> Vec<u8> {
    let mut w = CanonicalWriter::new();
    value.encode(&mut w);
    w.into_bytes()
}

/// Decodes one value and requires the input to be fully consumed.
pub fn decode_exact<T: CanonicalDecode>(bytes: &[u8]) -> Result<T, CodecError> {
    let mut r = CanonicalReader::new(bytes);
    let value = T::decode(&mut r)?;
    r.finish()?;
    Ok(value)
}

/// Domain-tagged hash over raw bytes.
pub fn digest_bytes(tag: &str, payload: &[u8]) -> Digest {
    let mut h = Sha256::new();
    h.update((tag.len() as u32).to_be_bytes());
    h.update(tag.as_bytes());
    h.update(payload);
    Digest(h.finalize().into())
}

/// Domain-tagged hash over a canonical encoding.
pub fn digest_of<T: Canonical + ?Sized>(tag: &str, value: &T) -> Digest {
    digest_bytes(tag, &encode_to_vec(value))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_scalars() {
        let mut w = CanonicalWriter::new();
        w.put_u8(7);
        w.put_u32(40_000);
        w.put_u64(u64::MAX);
        w.put_bool(true);
        w.put_str("hello");
        w.put_bytes(&[1, 2, 3]);
        let bytes = w.into_bytes();

        let mut r = CanonicalReader::new(&bytes);
        assert_eq!(r.take_u8().unwrap(), 7);
        assert_eq!(r.take_u32().unwrap(), 40_000);
        assert_eq!(r.take_u64().unwrap(), u64::MAX);
        assert!(r.take_bool().unwrap());
        assert_eq!(r.take_string().unwrap(), "hello");
        assert_eq!(r.take_bytes().unwrap(), &[1, 2, 3]);
        r.finish().unwrap();
    }

    #[test]
    fn truncated_input_is_detected() {
        let mut w = CanonicalWriter::new();
        w.put_str("truncate me");
        let mut bytes = w.into_bytes();
        bytes.truncate(bytes.len() - 1);

        let mut r = CanonicalReader::new(&bytes);
        assert_eq!(r.take_string(), Err(CodecError::UnexpectedEnd));
    }

    #[test]
    fn trailing_bytes_are_detected() {
        let mut w = CanonicalWriter::new();
        w.put_u8(1);
        let mut bytes = w.into_bytes();
        bytes.push(0xFF);

        let mut r = CanonicalReader::new(&bytes);
        r.take_u8().unwrap();
        assert_eq!(r.finish(), Err(CodecError::TrailingBytes(1)));
    }

    #[test]
    fn corrupt_length_prefix_is_bounded() {
        // A length prefix pointing far past the buffer must fail without
        // attempting the allocation.
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&u32::MAX.to_be_bytes());
        let mut r = CanonicalReader::new(&bytes);
        assert_eq!(r.take_bytes(), Err(CodecError::LengthOutOfRange(u64::from(u32::MAX))));
    }

    #[test]
    fn digest_tags_separate_domains() {
        let a = digest_bytes("tag-a", b"same payload");
        let b = digest_bytes("tag-b", b"same payload");
        assert_ne!(a, b);
    }

    #[test]
    fn digest_hex_round_trips() {
        let d = digest_bytes("t", b"x");
        assert_eq!(Digest::parse_hex(&d.to_hex()).unwrap(), d);
        assert!(Digest::parse_hex("zz").is_err());
        assert!(Digest::parse_hex("abcd").is_err());
    }
}
