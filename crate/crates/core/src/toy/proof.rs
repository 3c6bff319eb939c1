//! Misbehaviour proofs and recovery versions.

use std::collections::BTreeSet;

use crate::block::{genesis_digest, Block, Epoch, ExternalValid, Round};
use crate::crypto::{Digest, Encoder};
use crate::ctx::Ctx;

/// Two signed blocks for consecutive rounds where the later one does not
/// extend the earlier one (or fails external validity). `prev` is `None`
/// when `block` is the first block and should link to genesis.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MisbehaviorProof {
    pub block: Block,
    pub prev: Option<Block>,
}

impl MisbehaviorProof {
    pub fn round(&self) -> Round {
        self.block.round()
    }

    pub fn epoch(&self) -> Epoch {
        self.block.epoch()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut e = Encoder::new();
        e.bytes(&self.block.encode());
        e.bytes(&self.prev.as_ref().map_or_else(Vec::new, |b| b.encode()));
        e.finish()
    }

    pub fn wire_size(&self) -> usize {
        self.block.wire_size() + self.prev.as_ref().map_or(0, |b| b.wire_size())
    }

    /// Both signatures valid, rounds consecutive, and the link (or external
    /// validity) of `block` fails.
    pub fn verify(&self, ctx: &mut Ctx, valid: ExternalValid) -> bool {
        if !self.block.is_full() || !ctx.verify_block(&self.block) {
            return false;
        }
        let expected_prev = match &self.prev {
            None => {
                if self.block.round() != 0 {
                    return false;
                }
                genesis_digest()
            }
            Some(p) => {
                if p.round() + 1 != self.block.round() || !ctx.verify_block(p) {
                    return false;
                }
                p.digest()
            }
        };
        self.block.prev() != expected_prev || !valid(&self.block)
    }
}

/// A node's proposal during recovery: its chain from `start` to its tip, or
/// nothing when it lags too far behind to contribute.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Version {
    /// Epoch being recovered.
    pub epoch: Epoch,
    /// Round of the block the triggering proof convicts.
    pub proof_round: Round,
    pub blocks: Vec<Block>,
}

impl Version {
    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn tip_round(&self) -> Option<Round> {
        self.blocks.last().map(|b| b.round())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut e = Encoder::new();
        e.u64(self.epoch)
            .u64(self.proof_round)
            .u64(self.blocks.len() as u64);
        for b in &self.blocks {
            e.bytes(&b.encode());
        }
        e.finish()
    }

    pub fn digest(&self) -> Digest {
        crate::crypto::hash(&self.encode())
    }

    pub fn wire_size(&self) -> usize {
        24 + self.blocks.iter().map(|b| b.wire_size()).sum::<usize>()
    }
}

/// First round a version for a proof at `proof_round` must start at.
pub fn version_start(proof_round: Round, f: usize) -> Round {
    proof_round.saturating_sub(f as u64 + 1)
}

/// True when every window of `f+1` consecutive blocks has `f+1` distinct
/// proposers (shorter sequences must be all-distinct).
pub fn window_distinct(blocks: &[Block], f: usize) -> bool {
    let w = f + 1;
    if blocks.len() < w {
        let set: BTreeSet<_> = blocks.iter().map(|b| b.proposer()).collect();
        return set.len() == blocks.len();
    }
    blocks.windows(w).all(|win| {
        let set: BTreeSet<_> = win.iter().map(|b| b.proposer()).collect();
        set.len() == w
    })
}

/// Checks a version against the local chain. `local` is indexed by round.
pub fn validate_version(
    ctx: &mut Ctx,
    v: &Version,
    local: &[Block],
    f: usize,
    valid: ExternalValid,
) -> bool {
    let Some(first) = v.blocks.first() else {
        return true;
    };
    let start = version_start(v.proof_round, f);
    if first.round() != start {
        return false;
    }
    for (i, b) in v.blocks.iter().enumerate() {
        if b.round() != start + i as u64 || b.epoch() > v.epoch || !b.is_full() {
            return false;
        }
        if i > 0 && b.prev() != v.blocks[i - 1].digest() {
            return false;
        }
    }
    if !window_distinct(&v.blocks, f) {
        return false;
    }
    // anchor: must extend our block at start-1 (skipped when we lack it)
    let anchor = if start == 0 {
        Some(genesis_digest())
    } else {
        local.get(start as usize - 1).map(|b| b.digest())
    };
    if anchor.is_some_and(|a| a != first.prev()) {
        return false;
    }
    v.blocks.iter().all(|b| valid(b) && ctx.verify_block(b))
}
