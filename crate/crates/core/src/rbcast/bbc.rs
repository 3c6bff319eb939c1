//! Rotating-coordinator binary Byzantine consensus with certificate locking.
//!
//! Round k proceeds as follows:
//!
//! 1. every node broadcasts a signed STATUS carrying its estimate and lock;
//! 2. the coordinator collects n−f statuses and proposes the bit of the
//!    highest lock among them, or (with no locks) a bit backed by ≥ f+1
//!    estimates, attaching the statuses as justification;
//! 3. nodes check the justification and their own lock, then send a signed VOTE1;
//! 4. a quorum of VOTE1 in the current round forms a lock certificate; the
//!    node locks and sends VOTE2;
//! 5. a quorum of VOTE2 (any round) decides, and the certificate is broadcast
//!    as DECIDE so that every other node can decide from it.
//!
//! A round timer of `base·2^k` moves the node to the next round. A valid
//! COORD, or f+1 statuses, for a higher round make it jump there.

use std::collections::{BTreeMap, BTreeSet};

use crate::crypto::{Digest, Encoder, Signature};
use crate::ctx::{Ctx, TimerTag};
use crate::harness::trace::Kind;
use crate::msg::{BbcBody, BbcKey, BbcMsg, LockCert, Message, SignedStatus};
use crate::netsim::{Time, TimerId};
use crate::NodeId;

/// Certificate size: large enough that two quorums share f+1 nodes, and at least 2f+1.
pub fn quorum(n: usize, f: usize) -> usize {
    (2 * f + 1).max((n + f + 2) / 2)
}

fn status_bytes(key: &BbcKey, round: u32, est: bool, lock: Option<&LockCert>) -> Vec<u8> {
    let mut e = Encoder::new();
    e.str("bbc-status");
    key.encode_into(&mut e);
    e.u64(round as u64).u64(est as u64);
    match lock {
        Some(l) => e.u64(1).u64(l.round as u64).u64(l.bit as u64),
        None => e.u64(0),
    };
    e.finish()
}

fn vote_bytes(key: &BbcKey, phase: &str, round: u32, bit: bool) -> Vec<u8> {
    let mut e = Encoder::new();
    e.str(phase);
    key.encode_into(&mut e);
    e.u64(round as u64).u64(bit as u64);
    e.finish()
}

fn cert_digest(phase: &str, round: u32, bit: bool, sigs: &[(NodeId, Signature)]) -> Digest {
    let mut e = Encoder::new();
    e.str(phase).u64(round as u64).u64(bit as u64);
    for (id, s) in sigs {
        e.u64(*id as u64).bytes(&s.0);
    }
    e.hash()
}

#[derive(Debug)]
pub struct Bbc {
    key: BbcKey,
    n: usize,
    f: usize,
    q: usize,
    base: Time,
    proposed: bool,
    round: u32,
    est: bool,
    lock: Option<LockCert>,
    decided: Option<bool>,
    statuses: BTreeMap<u32, BTreeMap<NodeId, SignedStatus>>,
    vote1: BTreeMap<(u32, bool), BTreeMap<NodeId, Signature>>,
    vote2: BTreeMap<(u32, bool), BTreeMap<NodeId, Signature>>,
    /// Accepted coordinator proposal per round, with the highest lock round for
    /// that bit in its justification.
    coords: BTreeMap<u32, (bool, Option<u32>)>,
    coord_sent: BTreeSet<u32>,
    voted1: BTreeSet<u32>,
    voted2: BTreeSet<u32>,
    verified_certs: BTreeSet<Digest>,
    timer: Option<TimerId>,
    traffic: bool,
}

impl Bbc {
    pub fn new(key: BbcKey, n: usize, f: usize, base: Time) -> Bbc {
        Bbc {
            key,
            n,
            f,
            q: quorum(n, f),
            base: base.max(1),
            proposed: false,
            round: 0,
            est: false,
            lock: None,
            decided: None,
            statuses: BTreeMap::new(),
            vote1: BTreeMap::new(),
            vote2: BTreeMap::new(),
            coords: BTreeMap::new(),
            coord_sent: BTreeSet::new(),
            voted1: BTreeSet::new(),
            voted2: BTreeSet::new(),
            verified_certs: BTreeSet::new(),
            timer: None,
            traffic: false,
        }
    }

    pub fn key(&self) -> BbcKey {
        self.key
    }

    pub fn has_proposed(&self) -> bool {
        self.proposed
    }

    pub fn decided(&self) -> Option<bool> {
        self.decided
    }

    /// True once any message for this instance has been received.
    pub fn seen_traffic(&self) -> bool {
        self.traffic
    }

    pub fn round(&self) -> u32 {
        self.round
    }

    pub fn coordinator(&self, round: u32) -> NodeId {
        ((self.key.coordinator_offset() % self.n as u64 + round as u64) % self.n as u64) as NodeId
    }

    /// Start participating with estimate `v`. A second call is rejected (returns
    /// `None` and changes nothing). Returns the decision if reached immediately.
    pub fn propose(&mut self, ctx: &mut Ctx, v: bool) -> Option<bool> {
        if self.proposed || self.decided.is_some() {
            return None;
        }
        self.proposed = true;
        self.est = v;
        self.enter_round(ctx, 0);
        self.progress(ctx)
    }

    pub fn on_timer(&mut self, ctx: &mut Ctx, round: u32) -> Option<bool> {
        if !self.proposed || self.decided.is_some() || round != self.round {
            return None;
        }
        self.enter_round(ctx, round + 1);
        self.progress(ctx)
    }

    pub fn on_msg(&mut self, ctx: &mut Ctx, from: NodeId, body: BbcBody) -> Option<bool> {
        self.traffic = true;
        if self.decided.is_some() {
            return None;
        }
        match body {
            BbcBody::Status(s) => {
                if s.from != from || !self.check_status(ctx, &s) {
                    return None;
                }
                let r = s.round;
                self.statuses.entry(r).or_default().insert(from, s);
                if self.proposed && r > self.round && self.statuses[&r].len() > self.f {
                    self.enter_round(ctx, r);
                }
            }
            BbcBody::Coord {
                round,
                bit,
                statuses,
            } => {
                if from != self.coordinator(round)
                    || self.coords.contains_key(&round)
                    || !self.check_justification(ctx, round, bit, &statuses)
                {
                    return None;
                }
                self.coords.insert(round, (bit, top_lock(&statuses, bit)));
                for s in statuses {
                    self.statuses
                        .entry(round)
                        .or_default()
                        .entry(s.from)
                        .or_insert(s);
                }
                if self.proposed && round > self.round {
                    self.enter_round(ctx, round);
                }
            }
            BbcBody::Vote1 { round, bit, sig } => {
                if !ctx.verify(from, &vote_bytes(&self.key, "v1", round, bit), &sig) {
                    return None;
                }
                self.vote1
                    .entry((round, bit))
                    .or_default()
                    .insert(from, sig);
            }
            BbcBody::Vote2 { round, bit, sig } => {
                if !ctx.verify(from, &vote_bytes(&self.key, "v2", round, bit), &sig) {
                    return None;
                }
                self.vote2
                    .entry((round, bit))
                    .or_default()
                    .insert(from, sig);
            }
            BbcBody::Decide { bit, round, sigs } => {
                if self.check_cert(ctx, "v2", round, bit, &sigs) {
                    return Some(self.decide(ctx, bit, round, sigs));
                }
                return None;
            }
        }
        self.progress(ctx)
    }

    fn enter_round(&mut self, ctx: &mut Ctx, k: u32) {
        self.round = k;
        if let Some(t) = self.timer.take() {
            ctx.cancel_timer(t);
        }
        let dur = self.base.saturating_mul(1 << k.min(20));
        self.timer = Some(ctx.set_timer(dur, TimerTag::Bbc(self.key, k)));
        let sig = ctx.sign(&status_bytes(&self.key, k, self.est, self.lock.as_ref()));
        let status = SignedStatus {
            from: ctx.me,
            round: k,
            est: self.est,
            lock: self.lock.clone(),
            sig,
        };
        self.statuses
            .entry(k)
            .or_default()
            .insert(ctx.me, status.clone());
        self.bcast(ctx, BbcBody::Status(status));
    }

    fn bcast(&self, ctx: &mut Ctx, body: BbcBody) {
        ctx.broadcast(Message::Bbc(BbcMsg {
            key: self.key,
            body,
        }));
    }

    fn progress(&mut self, ctx: &mut Ctx) -> Option<bool> {
        if !self.proposed || self.decided.is_some() {
            return self.try_decide(ctx);
        }
        let k = self.round;
        // coordinator proposal
        if self.coordinator(k) == ctx.me && !self.coord_sent.contains(&k) {
            let have = self.statuses.get(&k).map_or(0, |s| s.len());
            if have >= self.n - self.f {
                let chosen: Vec<SignedStatus> = self.statuses[&k]
                    .values()
                    .take(self.n - self.f)
                    .cloned()
                    .collect();
                let bit = self.choose(&chosen);
                self.coord_sent.insert(k);
                self.coords.insert(k, (bit, top_lock(&chosen, bit)));
                self.bcast(
                    ctx,
                    BbcBody::Coord {
                        round: k,
                        bit,
                        statuses: chosen,
                    },
                );
            }
        }
        // first-phase vote on the coordinator's proposal
        if let Some(&(bit, top)) = self.coords.get(&k) {
            if !self.voted1.contains(&k) && self.lock_permits(bit, top) {
                self.voted1.insert(k);
                self.est = bit;
                let sig = ctx.sign(&vote_bytes(&self.key, "v1", k, bit));
                self.bcast(ctx, BbcBody::Vote1 { round: k, bit, sig });
            }
        }
        // lock and second-phase vote
        if !self.voted2.contains(&k) {
            for bit in [false, true] {
                let Some(votes) = self.vote1.get(&(k, bit)) else {
                    continue;
                };
                if votes.len() >= self.q {
                    let sigs: Vec<_> = votes.iter().take(self.q).map(|(&i, &s)| (i, s)).collect();
                    self.lock = Some(LockCert {
                        bit,
                        round: k,
                        sigs,
                    });
                    self.est = bit;
                    self.voted2.insert(k);
                    let sig = ctx.sign(&vote_bytes(&self.key, "v2", k, bit));
                    self.bcast(ctx, BbcBody::Vote2 { round: k, bit, sig });
                    break;
                }
            }
        }
        self.try_decide(ctx)
    }

    fn try_decide(&mut self, ctx: &mut Ctx) -> Option<bool> {
        if self.decided.is_some() {
            return None;
        }
        let hit = self
            .vote2
            .iter()
            .find(|(_, v)| v.len() >= self.q)
            .map(|(&(r, b), v)| (r, b, v.iter().take(self.q).map(|(&i, &s)| (i, s)).collect()));
        hit.map(|(r, b, sigs)| self.decide(ctx, b, r, sigs))
    }

    fn decide(
        &mut self,
        ctx: &mut Ctx,
        bit: bool,
        round: u32,
        sigs: Vec<(NodeId, Signature)>,
    ) -> bool {
        self.decided = Some(bit);
        if let Some(t) = self.timer.take() {
            ctx.cancel_timer(t);
        }
        let e = ctx
            .event(Kind::BBC_DECIDE)
            .val(bit as i64)
            .id(round as u64)
            .key(self.key.key());
        let e = match self.key {
            BbcKey::Obbc(i) => e.round(i.round).epoch(i.epoch),
            BbcKey::Ab { .. } => e,
        };
        ctx.emit(e);
        self.bcast(ctx, BbcBody::Decide { bit, round, sigs });
        bit
    }

    /// Coordinator rule: highest lock wins; otherwise a bit backed by f+1 estimates,
    /// preferring our own.
    fn choose(&self, statuses: &[SignedStatus]) -> bool {
        if let Some(l) = statuses
            .iter()
            .filter_map(|s| s.lock.as_ref())
            .max_by_key(|l| l.round)
        {
            return l.bit;
        }
        let ones = statuses.iter().filter(|s| s.est).count();
        let support = |b: bool| if b { ones } else { statuses.len() - ones };
        if support(self.est) > self.f {
            self.est
        } else {
            !self.est
        }
    }

    /// A conflicting proposal is acceptable only if it is justified by a lock
    /// newer than ours.
    fn lock_permits(&self, bit: bool, top: Option<u32>) -> bool {
        match &self.lock {
            Some(l) if l.bit != bit => top.is_some_and(|h| h > l.round),
            _ => true,
        }
    }

    fn check_status(&mut self, ctx: &mut Ctx, s: &SignedStatus) -> bool {
        if let Some(known) = self.statuses.get(&s.round).and_then(|m| m.get(&s.from)) {
            if known == s {
                return true;
            }
        }
        if !ctx.verify(
            s.from,
            &status_bytes(&self.key, s.round, s.est, s.lock.as_ref()),
            &s.sig,
        ) {
            return false;
        }
        match &s.lock {
            Some(l) => l.round < s.round && self.check_cert(ctx, "v1", l.round, l.bit, &l.sigs),
            None => true,
        }
    }

    fn check_cert(
        &mut self,
        ctx: &mut Ctx,
        phase: &str,
        round: u32,
        bit: bool,
        sigs: &[(NodeId, Signature)],
    ) -> bool {
        let d = cert_digest(phase, round, bit, sigs);
        if self.verified_certs.contains(&d) {
            return true;
        }
        let signers: BTreeSet<NodeId> = sigs.iter().map(|(i, _)| *i).collect();
        if signers.len() != sigs.len() || signers.len() < self.q {
            return false;
        }
        let bytes = vote_bytes(&self.key, phase, round, bit);
        for (i, s) in sigs {
            if !ctx.verify(*i, &bytes, s) {
                return false;
            }
        }
        self.verified_certs.insert(d);
        true
    }

    fn check_justification(
        &mut self,
        ctx: &mut Ctx,
        round: u32,
        bit: bool,
        statuses: &[SignedStatus],
    ) -> bool {
        let from: BTreeSet<NodeId> = statuses.iter().map(|s| s.from).collect();
        if from.len() != statuses.len() || from.len() < self.n - self.f {
            return false;
        }
        for s in statuses {
            if s.round != round || !self.check_status(ctx, s) {
                return false;
            }
        }
        let locks: Vec<&LockCert> = statuses.iter().filter_map(|s| s.lock.as_ref()).collect();
        match locks.iter().map(|l| l.round).max() {
            Some(top) => locks
                .iter()
                .filter(|l| l.round == top)
                .all(|l| l.bit == bit),
            None => statuses.iter().filter(|s| s.est == bit).count() > self.f,
        }
    }
}

fn top_lock(statuses: &[SignedStatus], bit: bool) -> Option<u32> {
    statuses
        .iter()
        .filter_map(|s| s.lock.as_ref())
        .filter(|l| l.bit == bit)
        .map(|l| l.round)
        .max()
}
