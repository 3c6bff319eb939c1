//! Atomic broadcast, used only to order recovery versions.
//!
//! Inputs are signed by their origin and disseminated with RB. The common log
//! is filled slot by slot: the coordinator of `(slot, attempt)` RB-broadcasts
//! one pending input, and a binary consensus decides whether that proposal
//! made it in time. On 1 the proposal (which RB guarantees every correct node
//! eventually holds) is appended; on 0 the next attempt rotates the
//! coordinator. Nodes stay idle while no input is outstanding.

use std::collections::{BTreeMap, BTreeSet};

use crate::crypto::{Encoder, Signature};
use crate::ctx::{Ctx, TimerTag};
use crate::harness::trace::Kind;
use crate::msg::{BbcBody, BbcKey, RbPayload, RbTag};
use crate::netsim::{Time, TimerId};
use crate::rbcast::bbc::Bbc;
use crate::rbcast::rb::Rb;
use crate::toy::Version;
use crate::NodeId;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SignedAbInput {
    pub origin: NodeId,
    pub seq: u64,
    pub payload: Version,
    pub sig: Signature,
}

impl SignedAbInput {
    fn signed_bytes(origin: NodeId, seq: u64, payload: &Version) -> Vec<u8> {
        let mut e = Encoder::new();
        e.str("ab-input")
            .u64(origin as u64)
            .u64(seq)
            .digest(&payload.digest());
        e.finish()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut e = Encoder::new();
        e.u64(self.origin as u64)
            .u64(self.seq)
            .bytes(&self.payload.encode())
            .bytes(&self.sig.0);
        e.finish()
    }

    pub fn wire_size(&self) -> usize {
        16 + 32 + self.payload.wire_size()
    }

    pub fn id(&self) -> (NodeId, u64) {
        (self.origin, self.seq)
    }

    fn verify(&self, ctx: &mut Ctx) -> bool {
        ctx.verify(
            self.origin,
            &Self::signed_bytes(self.origin, self.seq, &self.payload),
            &self.sig,
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AbProposal {
    pub slot: u64,
    pub attempt: u32,
    pub input: SignedAbInput,
}

impl AbProposal {
    pub fn encode(&self) -> Vec<u8> {
        let mut e = Encoder::new();
        e.u64(self.slot)
            .u64(self.attempt as u64)
            .bytes(&self.input.encode());
        e.finish()
    }
}

pub fn coordinator(slot: u64, attempt: u32, n: usize) -> NodeId {
    ((slot + attempt as u64) % n as u64) as NodeId
}

#[derive(Debug)]
pub struct Ab {
    n: usize,
    f: usize,
    timeout: Time,
    bbc_timeout: Time,
    next_seq: u64,
    pending: BTreeMap<(NodeId, u64), SignedAbInput>,
    in_log: BTreeSet<(NodeId, u64)>,
    log: Vec<SignedAbInput>,
    slot: u64,
    attempt: u32,
    started: bool,
    proposed: bool,
    voted: bool,
    timer: Option<TimerId>,
    props: BTreeMap<(u64, u32), SignedAbInput>,
    bbcs: BTreeMap<(u64, u32), Bbc>,
}

impl Ab {
    pub fn new(n: usize, f: usize, timeout: Time, bbc_timeout: Time) -> Ab {
        Ab {
            n,
            f,
            timeout: timeout.max(1),
            bbc_timeout,
            next_seq: 0,
            pending: BTreeMap::new(),
            in_log: BTreeSet::new(),
            log: Vec::new(),
            slot: 0,
            attempt: 0,
            started: false,
            proposed: false,
            voted: false,
            timer: None,
            props: BTreeMap::new(),
            bbcs: BTreeMap::new(),
        }
    }

    pub fn log(&self) -> &[SignedAbInput] {
        &self.log
    }

    pub fn broadcast(&mut self, ctx: &mut Ctx, rb: &mut Rb, payload: Version) {
        let seq = self.next_seq;
        self.next_seq += 1;
        let sig = ctx.sign(&SignedAbInput::signed_bytes(ctx.me, seq, &payload));
        let input = SignedAbInput {
            origin: ctx.me,
            seq,
            payload,
            sig,
        };
        rb.broadcast(ctx, RbTag::AbInput(seq), RbPayload::AbInput(input));
    }

    /// Feed an RB delivery. Returns entries newly appended to the log.
    pub fn on_rb_deliver(
        &mut self,
        ctx: &mut Ctx,
        rb: &mut Rb,
        origin: NodeId,
        tag: RbTag,
        payload: RbPayload,
    ) -> Vec<SignedAbInput> {
        match (tag, payload) {
            (RbTag::AbInput(seq), RbPayload::AbInput(input)) => {
                if input.origin == origin
                    && input.seq == seq
                    && !self.in_log.contains(&input.id())
                    && input.verify(ctx)
                {
                    self.pending.entry(input.id()).or_insert(input);
                }
            }
            (RbTag::AbProp { slot, attempt }, RbPayload::AbProp(p)) => {
                if p.slot == slot
                    && p.attempt == attempt
                    && origin == coordinator(slot, attempt, self.n)
                    && p.input.verify(ctx)
                {
                    self.props.entry((slot, attempt)).or_insert(p.input);
                }
            }
            _ => return Vec::new(),
        }
        self.advance(ctx, rb)
    }

    pub fn on_bbc(
        &mut self,
        ctx: &mut Ctx,
        rb: &mut Rb,
        from: NodeId,
        slot: u64,
        attempt: u32,
        body: BbcBody,
    ) -> Vec<SignedAbInput> {
        if slot < self.slot {
            return Vec::new();
        }
        let (n, f, base) = (self.n, self.f, self.bbc_timeout);
        self.bbcs
            .entry((slot, attempt))
            .or_insert_with(|| Bbc::new(BbcKey::Ab { slot, attempt }, n, f, base))
            .on_msg(ctx, from, body);
        self.advance(ctx, rb)
    }

    pub fn on_bbc_timer(
        &mut self,
        ctx: &mut Ctx,
        rb: &mut Rb,
        slot: u64,
        attempt: u32,
        round: u32,
    ) -> Vec<SignedAbInput> {
        if let Some(b) = self.bbcs.get_mut(&(slot, attempt)) {
            b.on_timer(ctx, round);
        }
        self.advance(ctx, rb)
    }

    pub fn on_timer(
        &mut self,
        ctx: &mut Ctx,
        rb: &mut Rb,
        slot: u64,
        attempt: u32,
    ) -> Vec<SignedAbInput> {
        if (slot, attempt) == (self.slot, self.attempt) && self.started && !self.voted {
            self.timer = None;
            self.vote(ctx, false);
        }
        self.advance(ctx, rb)
    }

    fn bbc(&mut self) -> &mut Bbc {
        let (n, f, base) = (self.n, self.f, self.bbc_timeout);
        let (slot, attempt) = (self.slot, self.attempt);
        self.bbcs
            .entry((slot, attempt))
            .or_insert_with(|| Bbc::new(BbcKey::Ab { slot, attempt }, n, f, base))
    }

    fn vote(&mut self, ctx: &mut Ctx, bit: bool) {
        self.voted = true;
        if let Some(t) = self.timer.take() {
            ctx.cancel_timer(t);
        }
        self.bbc().propose(ctx, bit);
    }

    /// Inputs of one origin enter the log in sequence order.
    fn fifo_ready(&self, input: &SignedAbInput) -> bool {
        input.seq == 0 || self.in_log.contains(&(input.origin, input.seq - 1))
    }

    fn active(&self) -> bool {
        self.pending.keys().any(|id| !self.in_log.contains(id))
            || self.props.keys().any(|&(s, _)| s >= self.slot)
            || self
                .bbcs
                .iter()
                .any(|(&(s, _), b)| s >= self.slot && b.seen_traffic())
    }

    fn advance(&mut self, ctx: &mut Ctx, rb: &mut Rb) -> Vec<SignedAbInput> {
        let mut out = Vec::new();
        loop {
            let cur = (self.slot, self.attempt);
            match self.bbcs.get(&cur).and_then(|b| b.decided()) {
                Some(true) => {
                    let Some(input) = self.props.get(&cur).cloned() else {
                        return out; // decided, proposal still in flight
                    };
                    if self.fifo_ready(&input) && self.in_log.insert(input.id()) {
                        self.pending.remove(&input.id());
                        let e = ctx
                            .event(Kind::AB_DELIVER)
                            .peer(input.origin)
                            .id(self.log.len() as u64)
                            .val(input.seq as i64)
                            .key(format!("ab/{}", self.slot))
                            .digest(input.payload.digest());
                        ctx.emit(e);
                        self.log.push(input.clone());
                        out.push(input);
                    }
                    self.next_slot(ctx, self.slot + 1, 0);
                    continue;
                }
                Some(false) => {
                    self.next_slot(ctx, self.slot, self.attempt + 1);
                    continue;
                }
                None => {}
            }
            if !self.started {
                if !self.active() {
                    return out;
                }
                self.started = true;
                let dur = self.timeout.saturating_mul(1 << self.attempt.min(16));
                self.timer = Some(ctx.set_timer(
                    dur,
                    TimerTag::Ab {
                        slot: self.slot,
                        attempt: self.attempt,
                    },
                ));
            }
            if !self.proposed && coordinator(self.slot, self.attempt, self.n) == ctx.me {
                let pick = self
                    .pending
                    .iter()
                    .find(|(id, i)| !self.in_log.contains(id) && self.fifo_ready(i))
                    .map(|(_, i)| i.clone());
                if let Some(input) = pick {
                    self.proposed = true;
                    let p = AbProposal {
                        slot: self.slot,
                        attempt: self.attempt,
                        input,
                    };
                    rb.broadcast(
                        ctx,
                        RbTag::AbProp {
                            slot: self.slot,
                            attempt: self.attempt,
                        },
                        RbPayload::AbProp(p),
                    );
                }
            }
            if !self.voted && self.props.contains_key(&cur) {
                self.vote(ctx, true);
                continue;
            }
            return out;
        }
    }

    fn next_slot(&mut self, ctx: &mut Ctx, slot: u64, attempt: u32) {
        if let Some(t) = self.timer.take() {
            ctx.cancel_timer(t);
        }
        let old = self.slot;
        self.slot = slot;
        self.attempt = attempt;
        self.started = false;
        self.proposed = false;
        self.voted = false;
        if slot > old {
            self.props.retain(|&(s, _), _| s >= slot);
            self.bbcs.retain(|&(s, _), _| s >= slot);
        }
    }
}
