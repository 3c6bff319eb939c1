//! Simulated signatures and hashing.
//!
//! Signatures are keyed MACs over SHA-256. Verification consults a [`Pki`]
//! that knows every node's secret, which is sound inside the simulator because
//! adversary code is only ever handed its own [`KeyPair`].

use std::collections::HashMap;
use std::fmt;

use sha2::{Digest as _, Sha256};

use crate::NodeId;

/// 32-byte SHA-256 digest.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Digest> {
        let bytes = hex::decode(s).ok()?;
        let arr: [u8; 32] = bytes.try_into().ok()?;
        Some(Digest(arr))
    }

    /// First eight bytes as an integer, handy for seeding.
    pub fn prefix_u64(&self) -> u64 {
        u64::from_le_bytes(self.0[..8].try_into().unwrap())
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", &self.to_hex()[..12])
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

pub fn hash(msg: &[u8]) -> Digest {
    Digest(Sha256::digest(msg).into())
}

fn hash_parts(parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u32).to_le_bytes());
        h.update(p);
    }
    h.finalize().into()
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct PublicKey(pub [u8; 32]);

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct Signature(pub [u8; 32]);

#[derive(Clone, PartialEq, Eq)]
pub struct KeyPair {
    pub node_id: NodeId,
    secret: [u8; 32],
    pub public: PublicKey,
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair")
            .field("node_id", &self.node_id)
            .field("public", &hex::encode(&self.public.0[..6]))
            .finish_non_exhaustive()
    }
}

pub fn keygen(seed: u64, node_id: NodeId) -> KeyPair {
    let secret = hash_parts(&[
        b"toy-secret",
        &seed.to_le_bytes(),
        &(node_id as u64).to_le_bytes(),
    ]);
    let public = PublicKey(hash_parts(&[b"toy-public", &secret]));
    KeyPair {
        node_id,
        secret,
        public,
    }
}

pub fn sign(kp: &KeyPair, msg: &[u8]) -> Signature {
    Signature(hash_parts(&[b"toy-sig", &kp.secret, msg]))
}

/// Key registry for the simulated network.
#[derive(Clone, Debug)]
pub struct Pki {
    keys: Vec<KeyPair>,
    by_public: HashMap<PublicKey, usize>,
}

impl Pki {
    pub fn new(seed: u64, n: usize) -> Pki {
        let keys: Vec<KeyPair> = (0..n).map(|id| keygen(seed, id)).collect();
        let by_public = keys
            .iter()
            .enumerate()
            .map(|(i, k)| (k.public, i))
            .collect();
        Pki { keys, by_public }
    }

    pub fn n(&self) -> usize {
        self.keys.len()
    }

    pub fn keypair(&self, id: NodeId) -> &KeyPair {
        &self.keys[id]
    }

    pub fn public(&self, id: NodeId) -> PublicKey {
        self.keys[id].public
    }

    /// True iff `sig` was produced by `sign` over `msg` with the secret behind `public`.
    pub fn verify(&self, public: &PublicKey, msg: &[u8], sig: &Signature) -> bool {
        match self.by_public.get(public) {
            Some(&i) => sign(&self.keys[i], msg) == *sig,
            None => false,
        }
    }

    pub fn verify_by(&self, signer: NodeId, msg: &[u8], sig: &Signature) -> bool {
        signer < self.keys.len() && self.verify(&self.keys[signer].public, msg, sig)
    }
}

/// Length-prefixed field encoder. Every field is written as a little-endian
/// `u32` length followed by its bytes, in call order.
#[derive(Default, Debug, Clone)]
pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new() -> Encoder {
        Encoder::default()
    }

    pub fn bytes(&mut self, b: &[u8]) -> &mut Self {
        self.buf.extend_from_slice(&(b.len() as u32).to_le_bytes());
        self.buf.extend_from_slice(b);
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.bytes(&v.to_le_bytes())
    }

    pub fn str(&mut self, s: &str) -> &mut Self {
        self.bytes(s.as_bytes())
    }

    pub fn digest(&mut self, d: &Digest) -> &mut Self {
        self.bytes(&d.0)
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }

    pub fn hash(&self) -> Digest {
        hash(&self.buf)
    }
}
