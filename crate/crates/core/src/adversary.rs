//! Byzantine strategies.
//!
//! A corrupted node keeps running the honest state machine, but every message
//! it sends passes through its strategy, which may drop, delay or rewrite it.
//! Strategies only hold their own node's key, so anything they forge is
//! signed by the corrupted node itself.

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::block::{Block, Round};
use crate::crypto::{hash, Digest, KeyPair};
use crate::msg::{Message, ObbcMsg, WrbMsg};
use crate::netsim::Time;
use crate::NodeId;

pub trait Adversary {
    /// Rewrite one outbound message into zero or more `(to, message, extra delay)`.
    fn transform(&mut self, now: Time, to: NodeId, msg: Message) -> Vec<(NodeId, Message, Time)>;
}

pub type CustomFactory = fn(KeyPair, usize, u64) -> Box<dyn Adversary>;

#[derive(Clone, Copy, Debug)]
pub enum Strategy {
    Silent,
    Delay(Time),
    /// From the first own block at or after this round, send a conflicting
    /// block to a seeded half of the peers.
    Equivocate(Round),
    /// From the first own block at or after this round, send a block whose
    /// predecessor digest is wrong.
    BadLink(Round),
    Custom(CustomFactory),
}

/// Custom strategies never compare equal: function addresses are not stable.
impl PartialEq for Strategy {
    fn eq(&self, other: &Strategy) -> bool {
        use Strategy::*;
        match (self, other) {
            (Silent, Silent) => true,
            (Delay(a), Delay(b)) | (Equivocate(a), Equivocate(b)) | (BadLink(a), BadLink(b)) => {
                a == b
            }
            _ => false,
        }
    }
}

impl Strategy {
    pub fn build(&self, kp: KeyPair, n: usize, seed: u64) -> Box<dyn Adversary> {
        match *self {
            Strategy::Silent => Box::new(Silent),
            Strategy::Delay(d) => Box::new(Delay(d)),
            Strategy::Equivocate(r) => Box::new(Rewrite::new(kp, n, seed, r, Mode::Equivocate)),
            Strategy::BadLink(r) => Box::new(Rewrite::new(kp, n, seed, r, Mode::BadLink)),
            Strategy::Custom(make) => make(kp, n, seed),
        }
    }
}

pub struct Silent;

impl Adversary for Silent {
    fn transform(&mut self, _: Time, _: NodeId, _: Message) -> Vec<(NodeId, Message, Time)> {
        Vec::new()
    }
}

pub struct Delay(pub Time);

impl Adversary for Delay {
    fn transform(&mut self, _: Time, to: NodeId, msg: Message) -> Vec<(NodeId, Message, Time)> {
        vec![(to, msg, self.0)]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Mode {
    Equivocate,
    BadLink,
}

struct Target {
    original: Digest,
    forged: Block,
    victims: BTreeSet<NodeId>,
}

/// Swaps one of the node's own blocks for a forged one, per recipient.
struct Rewrite {
    kp: KeyPair,
    n: usize,
    seed: u64,
    from_round: Round,
    mode: Mode,
    target: Option<Target>,
}

impl Rewrite {
    fn new(kp: KeyPair, n: usize, seed: u64, from_round: Round, mode: Mode) -> Rewrite {
        Rewrite {
            kp,
            n,
            seed,
            from_round,
            mode,
            target: None,
        }
    }

    fn pick(&mut self, b: &Block) {
        if self.target.is_some() || b.proposer() != self.kp.node_id || b.round() < self.from_round {
            return;
        }
        let txs: Vec<Vec<u8>> = b.txs.as_ref().map_or_else(Vec::new, |t| t.to_vec());
        let mut peers: Vec<NodeId> = (0..self.n).filter(|&p| p != self.kp.node_id).collect();
        let (forged, victims) = match self.mode {
            Mode::Equivocate => {
                let mut alt = txs;
                alt.push(format!("conflict/{}/{}", b.epoch(), b.round()).into_bytes());
                peers.shuffle(&mut ChaCha8Rng::seed_from_u64(self.seed ^ b.round()));
                let half = peers.len() / 2;
                let forged = Block::signed(&self.kp, b.round(), b.epoch(), b.prev(), alt);
                (forged, peers[..half.max(1)].iter().copied().collect())
            }
            Mode::BadLink => {
                let prev = hash(&[b"bad-link".as_slice(), &b.prev().0].concat());
                let forged = Block::signed(&self.kp, b.round(), b.epoch(), prev, txs);
                (forged, peers.into_iter().collect())
            }
        };
        self.target = Some(Target {
            original: b.digest(),
            forged,
            victims,
        });
    }

    fn swap(&self, to: NodeId, b: &mut Block) {
        let Some(t) = &self.target else { return };
        if b.digest() == t.original && t.victims.contains(&to) {
            *b = if b.is_full() {
                t.forged.clone()
            } else {
                t.forged.header_only()
            };
        }
    }
}

fn carried_mut(msg: &mut Message) -> Option<&mut Block> {
    match msg {
        Message::Wrb(WrbMsg::Push(b))
        | Message::Wrb(WrbMsg::Resp(_, b))
        | Message::Wrb(WrbMsg::Body(b)) => Some(b),
        Message::Obbc(ObbcMsg::Vote { pgd: Some(b), .. }) => Some(b),
        Message::Obbc(ObbcMsg::EvResp {
            evidence: Some(b), ..
        }) => Some(b),
        _ => None,
    }
}

impl Adversary for Rewrite {
    fn transform(&mut self, _: Time, to: NodeId, mut msg: Message) -> Vec<(NodeId, Message, Time)> {
        if let Some(b) = carried_mut(&mut msg) {
            self.pick(b);
            self.swap(to, b);
        }
        vec![(to, msg, 0)]
    }
}

pub type TransformFn = dyn Fn(Time, NodeId, Message) -> Vec<(NodeId, Message, Time)> + Send + Sync;

/// Wraps a closure as a strategy, for ad-hoc tests.
pub struct FnAdversary(pub Arc<TransformFn>);

impl Adversary for FnAdversary {
    fn transform(&mut self, now: Time, to: NodeId, msg: Message) -> Vec<(NodeId, Message, Time)> {
        (self.0)(now, to, msg)
    }
}
