//! Simulated signatures over canonical message bytes.
//!
//! Signatures are signer id plus a digest of the signed content, gated by key
//! handles rather than real cryptography: a `Signature` value can only be
//! produced through [`KeyHandle::sign`], and the harness hands a validator's
//! handle only to that validator's honest logic or, once corrupted, to the
//! adversary. Replaying an observed signature on the content it was produced
//! for verifies; attaching it to anything else does not.

use std::fmt;

use serde::Serialize;
use sha2::{Digest as _, Sha256};

use crate::party::PartyId;

/// Canonical byte encoding: length-prefixed field concatenation in
/// declaration order, so digests are bit-stable across runs.
pub trait Encode {
    fn encode(&self, out: &mut Vec<u8>);

    fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.encode(&mut out);
        out
    }

    fn digest(&self) -> ContentDigest {
        ContentDigest::of(&self.canonical_bytes())
    }
}

pub fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub fn put_bytes(out: &mut Vec<u8>, b: &[u8]) {
    put_u64(out, b.len() as u64);
    out.extend_from_slice(b);
}

pub fn put_str(out: &mut Vec<u8>, s: &str) {
    put_bytes(out, s.as_bytes());
}

/// SHA-256 content digest.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ContentDigest([u8; 32]);

impl ContentDigest {
    pub fn of(bytes: &[u8]) -> Self {
        let mut h = Sha256::new();
        h.update(bytes);
        ContentDigest(h.finalize().into())
    }

    pub fn hex(&self) -> String {
        self.0.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Truncated form used in trace records.
    pub fn short(&self) -> String {
        self.hex()[..16].to_string()
    }
}

impl fmt::Debug for ContentDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.short())
    }
}

impl fmt::Display for ContentDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.short())
    }
}

impl Serialize for ContentDigest {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.short())
    }
}

/// Capability to sign as `owner`. Issued by [`KeyStore`] only.
#[derive(Debug, Clone)]
pub struct KeyHandle {
    owner: PartyId,
}

impl KeyHandle {
    pub fn owner(&self) -> PartyId {
        self.owner
    }

    pub fn sign(&self, message: &[u8]) -> Signature {
        Signature { signer: self.owner, digest: ContentDigest::of(message) }
    }
}

/// Issues key handles for the validators of a scenario.
pub struct KeyStore {
    n: usize,
}

impl KeyStore {
    pub fn new(n: usize) -> Self {
        KeyStore { n }
    }

    /// Hands out the handle for validator `index`. Only the runner holds a
    /// key store; parties and the adversary receive handles from it and
    /// never mint their own.
    pub fn handle(&self, index: usize) -> KeyHandle {
        assert!(index < self.n, "no such validator key");
        KeyHandle { owner: PartyId::validator(index) }
    }
}

/// A validator signature: signer plus content digest. Constructible only via
/// [`KeyHandle::sign`].
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Signature {
    signer: PartyId,
    digest: ContentDigest,
}

impl Signature {
    pub fn signer(&self) -> PartyId {
        self.signer
    }

    pub fn verify(&self, signer: PartyId, message: &[u8]) -> bool {
        self.signer == signer && self.digest == ContentDigest::of(message)
    }
}

impl Encode for Signature {
    fn encode(&self, out: &mut Vec<u8>) {
        put_str(out, &self.signer.to_string());
        out.extend_from_slice(&self.digest.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_verify_roundtrip() {
        let ks = KeyStore::new(2);
        let k0 = ks.handle(0);
        let sig = k0.sign(b"m");
        assert!(sig.verify(PartyId::validator(0), b"m"));
        assert!(!sig.verify(PartyId::validator(1), b"m"));
        assert!(!sig.verify(PartyId::validator(0), b"m'"));
    }
}
