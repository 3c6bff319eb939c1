//! Blocks, headers and their canonical encoding.

use std::sync::Arc;

use crate::crypto::{hash, sign, Digest, Encoder, KeyPair, Pki, Signature};
use crate::NodeId;

pub type Round = u64;
pub type Epoch = u64;

/// Opaque transaction bytes.
pub type Tx = Vec<u8>;

/// Predecessor digest of the round-0 block.
pub fn genesis_digest() -> Digest {
    hash(b"toy-genesis")
}

pub fn payload_digest(txs: &[Tx]) -> Digest {
    let mut e = Encoder::new();
    e.u64(txs.len() as u64);
    for tx in txs {
        e.bytes(tx);
    }
    e.hash()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Header {
    pub round: Round,
    pub epoch: Epoch,
    pub proposer: NodeId,
    pub prev: Digest,
    pub payload: Digest,
}

impl Header {
    /// Bit-exact encoding: length-prefixed fields in declaration order.
    pub fn encode(&self) -> Vec<u8> {
        let mut e = Encoder::new();
        e.u64(self.round)
            .u64(self.epoch)
            .u64(self.proposer as u64)
            .digest(&self.prev)
            .digest(&self.payload);
        e.finish()
    }

    pub fn digest(&self) -> Digest {
        hash(&self.encode())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SignedHeader {
    pub header: Header,
    pub digest: Digest,
    pub sig: Signature,
}

impl SignedHeader {
    pub fn verify(&self, pki: &Pki) -> bool {
        self.digest == self.header.digest()
            && pki.verify_by(self.header.proposer, &self.digest.0, &self.sig)
    }
}

/// A signed header plus, unless travelling header-only, its transactions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    pub header: SignedHeader,
    pub txs: Option<Arc<Vec<Tx>>>,
}

impl Block {
    /// Build a full block over `txs`, signed with `kp`. Honest nodes sign via
    /// their context so that the operation is counted; this is for strategies
    /// and tests.
    pub fn signed(kp: &KeyPair, round: Round, epoch: Epoch, prev: Digest, txs: Vec<Tx>) -> Block {
        let header = Header {
            round,
            epoch,
            proposer: kp.node_id,
            prev,
            payload: payload_digest(&txs),
        };
        let digest = header.digest();
        Block {
            header: SignedHeader {
                header,
                digest,
                sig: sign(kp, &digest.0),
            },
            txs: Some(Arc::new(txs)),
        }
    }

    pub fn round(&self) -> Round {
        self.header.header.round
    }

    pub fn epoch(&self) -> Epoch {
        self.header.header.epoch
    }

    pub fn proposer(&self) -> NodeId {
        self.header.header.proposer
    }

    pub fn prev(&self) -> Digest {
        self.header.header.prev
    }

    pub fn digest(&self) -> Digest {
        self.header.digest
    }

    pub fn is_full(&self) -> bool {
        self.txs.is_some()
    }

    pub fn tx_count(&self) -> usize {
        self.txs.as_ref().map_or(0, |t| t.len())
    }

    pub fn header_only(&self) -> Block {
        Block {
            header: self.header,
            txs: None,
        }
    }

    /// Body, when present, must hash to the header's payload digest.
    pub fn body_matches(&self) -> bool {
        match &self.txs {
            Some(txs) => payload_digest(txs) == self.header.header.payload,
            None => true,
        }
    }

    /// Signature and (if present) body check. Chain linkage is not considered.
    pub fn verify(&self, pki: &Pki) -> bool {
        self.header.verify(pki) && self.body_matches()
    }

    pub fn wire_size(&self) -> usize {
        let header = 8 * 3 + 32 * 3 + 32;
        header
            + self
                .txs
                .as_ref()
                .map_or(0, |t| t.iter().map(|x| x.len() + 4).sum())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut e = Encoder::new();
        e.bytes(&self.header.header.encode())
            .bytes(&self.header.sig.0);
        if let Some(txs) = &self.txs {
            for tx in txs.iter() {
                e.bytes(tx);
            }
        }
        e.finish()
    }
}

/// Application validity predicate applied to every block.
pub type ExternalValid = fn(&Block) -> bool;

pub fn accept_all(_: &Block) -> bool {
    true
}
