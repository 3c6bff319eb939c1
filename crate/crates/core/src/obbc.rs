//! Optimistic binary Byzantine consensus privileging the value 1.
//!
//! Each node broadcasts its vote, optionally piggybacking a block. If the
//! first n−f distinct votes are all 1 the node decides 1 after that single
//! wave. Otherwise it asks everyone for evidence, waits for n−f replies (nil
//! replies included) and enters the full consensus with 1 iff some reply
//! carried valid evidence. A node that decided on the fast path joins the
//! full consensus once, with 1, as soon as it sees traffic for it.

use std::collections::{BTreeMap, BTreeSet};

use crate::block::Block;
use crate::ctx::Ctx;
use crate::harness::trace::Kind;
use crate::msg::{BbcBody, BbcKey, Inst, Message, ObbcMsg};
use crate::netsim::Time;
use crate::rbcast::bbc::Bbc;
use crate::NodeId;

/// Evidence for 1: a full block signed by the instance's proposer for that
/// instance's round and epoch.
pub fn evidence_matches(inst: &Inst, b: &Block) -> bool {
    b.is_full()
        && b.round() == inst.round
        && b.epoch() == inst.epoch
        && b.proposer() == inst.proposer
}

#[derive(Debug)]
pub struct Obbc {
    inst: Inst,
    n: usize,
    f: usize,
    my_vote: Option<bool>,
    /// Distinct voters in arrival order.
    order: Vec<NodeId>,
    votes: BTreeMap<NodeId, bool>,
    pgds: BTreeMap<NodeId, Block>,
    checked: bool,
    decided: Option<bool>,
    fast: bool,
    ev_requested: bool,
    ev_from: BTreeSet<NodeId>,
    ev_valid: bool,
    bbc: Bbc,
}

impl Obbc {
    pub fn new(inst: Inst, n: usize, f: usize, bbc_timeout: Time) -> Obbc {
        Obbc {
            inst,
            n,
            f,
            my_vote: None,
            order: Vec::new(),
            votes: BTreeMap::new(),
            pgds: BTreeMap::new(),
            checked: false,
            decided: None,
            fast: false,
            ev_requested: false,
            ev_from: BTreeSet::new(),
            ev_valid: false,
            bbc: Bbc::new(BbcKey::Obbc(inst), n, f, bbc_timeout),
        }
    }

    pub fn inst(&self) -> Inst {
        self.inst
    }

    pub fn decided(&self) -> Option<bool> {
        self.decided
    }

    pub fn fast(&self) -> bool {
        self.fast
    }

    pub fn has_voted(&self) -> bool {
        self.my_vote.is_some()
    }

    pub fn piggybacks(&self) -> &BTreeMap<NodeId, Block> {
        &self.pgds
    }

    pub fn bbc(&self) -> &Bbc {
        &self.bbc
    }

    /// Vote `bit`. A vote for 1 must come with valid evidence; a vote for 0
    /// never does. Returns the decision if it is reached right away.
    pub fn propose(
        &mut self,
        ctx: &mut Ctx,
        bit: bool,
        evidence: Option<&Block>,
        pgd: Option<Block>,
    ) -> Option<bool> {
        assert_eq!(bit, evidence.is_some(), "vote 1 iff evidence");
        if let Some(e) = evidence {
            assert!(
                evidence_matches(&self.inst, e),
                "evidence does not match instance"
            );
        }
        if self.my_vote.is_some() {
            return None;
        }
        self.my_vote = Some(bit);
        ctx.broadcast(Message::Obbc(ObbcMsg::Vote {
            inst: self.inst,
            bit,
            pgd,
        }));
        self.check(ctx)
    }

    pub fn on_vote(
        &mut self,
        ctx: &mut Ctx,
        from: NodeId,
        bit: bool,
        pgd: Option<Block>,
    ) -> Option<bool> {
        if self.votes.contains_key(&from) {
            return None;
        }
        self.votes.insert(from, bit);
        self.order.push(from);
        if let Some(b) = pgd {
            self.pgds.insert(from, b);
        }
        self.check(ctx)
    }

    fn check(&mut self, ctx: &mut Ctx) -> Option<bool> {
        if self.checked || self.my_vote.is_none() || self.order.len() < self.n - self.f {
            return None;
        }
        self.checked = true;
        if self.decided.is_some() {
            return None;
        }
        let first = &self.order[..self.n - self.f];
        if first.iter().all(|p| self.votes[p]) {
            self.fast = true;
            let d = self.decide(ctx, true);
            if self.bbc.seen_traffic() {
                self.bbc.propose(ctx, true);
            }
            return d;
        }
        self.ev_requested = true;
        ctx.broadcast(Message::Obbc(ObbcMsg::EvReq(self.inst)));
        None
    }

    pub fn on_ev_resp(
        &mut self,
        ctx: &mut Ctx,
        from: NodeId,
        evidence: Option<Block>,
    ) -> Option<bool> {
        if !self.ev_requested || !self.ev_from.insert(from) {
            return None;
        }
        if let Some(b) = evidence {
            if !self.ev_valid && evidence_matches(&self.inst, &b) && ctx.verify_block(&b) {
                self.ev_valid = true;
            }
        }
        if self.ev_from.len() == self.n - self.f && !self.bbc.has_proposed() {
            let v = self.ev_valid;
            if let Some(d) = self.bbc.propose(ctx, v) {
                return self.decide(ctx, d);
            }
        }
        None
    }

    pub fn on_bbc(&mut self, ctx: &mut Ctx, from: NodeId, body: BbcBody) -> Option<bool> {
        let d = self.bbc.on_msg(ctx, from, body);
        if self.fast && !self.bbc.has_proposed() {
            self.bbc.propose(ctx, true);
        }
        d.and_then(|d| self.decide(ctx, d))
    }

    pub fn on_bbc_timer(&mut self, ctx: &mut Ctx, round: u32) -> Option<bool> {
        self.bbc
            .on_timer(ctx, round)
            .and_then(|d| self.decide(ctx, d))
    }

    fn decide(&mut self, ctx: &mut Ctx, bit: bool) -> Option<bool> {
        if self.decided.is_some() {
            return None;
        }
        self.decided = Some(bit);
        let e = ctx
            .event(Kind::OBBC_DECIDE)
            .round(self.inst.round)
            .epoch(self.inst.epoch)
            .peer(self.inst.proposer)
            .val(bit as i64)
            .id(self.fast as u64)
            .key(self.inst.key());
        ctx.emit(e);
        Some(bit)
    }
}
