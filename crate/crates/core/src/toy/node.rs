//! The per-node protocol loop.
//!
//! Each attempt at a round is one WRB instance: wait for the proposer's block
//! (or the timer), vote on it through OBBC, and on a 1 decision validate and
//! append it. While voting 1, the node that will propose the next round
//! piggybacks its block on the vote, so in the fault-free case every round
//! costs a single vote wave. A block that fails validation yields a proof,
//! which every node reliably receives and answers by entering recovery:
//! versions of the recent chain are totally ordered by atomic broadcast and
//! the first longest valid one is adopted under a new epoch.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Arc;

use crate::block::{
    genesis_digest, payload_digest, Block, Epoch, ExternalValid, Header, Round, SignedHeader, Tx,
};
use crate::crypto::Digest;
use crate::ctx::{Ctx, TimerTag};
use crate::harness::trace::Kind;
use crate::msg::{BbcKey, Inst, Message, ObbcMsg, RbPayload, RbTag, SyncMsg, WrbMsg};
use crate::netsim::{Time, TimerId};
use crate::obbc::{evidence_matches, Obbc};
use crate::rbcast::ab::{Ab, SignedAbInput};
use crate::rbcast::rb::Rb;
use crate::toy::fd::FailureDetector;
use crate::toy::proof::{validate_version, version_start, MisbehaviorProof, Version};
use crate::toy::rotation;
use crate::wrb::{BlockStore, WrbTimer};
use crate::NodeId;

#[derive(Clone, Debug)]
pub struct NodeConfig {
    pub n: usize,
    pub f: usize,
    /// Transactions per block and bytes per transaction.
    pub beta: usize,
    pub sigma: usize,
    /// Disseminate bodies eagerly and run consensus on headers.
    pub header_mode: bool,
    pub fd: bool,
    pub fd_threshold: Time,
    /// Re-permute the proposer order every this many rounds (0: never).
    pub permute_every: u64,
    /// One new transaction per this many time units (0: always saturated).
    pub tx_interval: Time,
    /// Propose empty blocks when there is nothing to order.
    pub heartbeat: bool,
    pub ema_window: u32,
    pub timer_init: Time,
    pub timer_min: Time,
    pub timer_max: Time,
    pub bbc_timeout: Time,
    pub ab_timeout: Time,
    pub valid: ExternalValid,
}

impl NodeConfig {
    pub fn new(n: usize, f: usize, delta: Time) -> NodeConfig {
        NodeConfig {
            n,
            f,
            beta: 4,
            sigma: 16,
            header_mode: false,
            fd: false,
            fd_threshold: 0,
            permute_every: 0,
            tx_interval: 0,
            heartbeat: false,
            ema_window: 9,
            // four times the mean post-GST delay
            timer_init: 2 * (delta + 1),
            timer_min: 2 * (delta + 1),
            timer_max: 4096,
            bbc_timeout: 4 * delta,
            ab_timeout: 4 * delta,
            valid: crate::block::accept_all,
        }
    }
}

#[derive(Debug)]
struct Attempt {
    inst: Inst,
    started: Time,
    timer: Option<TimerId>,
    voted: bool,
    /// Vote 0 came from the failure detector rather than a timeout.
    gated: bool,
    pulling: bool,
    /// Proposer with nothing to propose yet.
    waiting_tx: bool,
}

#[derive(Debug)]
struct Recovery {
    epoch: Epoch,
    versions: Vec<Version>,
    origins: BTreeSet<NodeId>,
    /// Chosen version, waiting for the missing blocks below it.
    adopting: Option<(Version, Round)>,
    sync_timer: Option<TimerId>,
}

pub struct Node {
    id: NodeId,
    cfg: NodeConfig,
    chain: Vec<Block>,
    /// Rounds below this are definite.
    definite: usize,
    epoch: Epoch,
    full_mode: bool,
    cur: Option<Attempt>,
    /// Next attempt to start: proposer of the previous nil attempt and its index.
    next: (Option<NodeId>, u32),
    obbcs: BTreeMap<Inst, Obbc>,
    store: BlockStore,
    /// Blocks this node signed, reused when asked to propose on the same predecessor.
    own: BTreeMap<(Epoch, Round, Digest), Block>,
    disseminated: BTreeSet<(Epoch, Round, Digest)>,
    txq: VecDeque<Tx>,
    tx_seq: u64,
    fd: FailureDetector,
    timer: WrbTimer,
    rb: Rb,
    ab: Ab,
    ab_cursor: usize,
    recovery: Option<Recovery>,
    future: Vec<(NodeId, Time, Message)>,
    future_proofs: Vec<MisbehaviorProof>,
}

impl Node {
    pub fn new(id: NodeId, cfg: NodeConfig) -> Node {
        Node {
            id,
            fd: FailureDetector::new(cfg.f, cfg.fd_threshold),
            timer: WrbTimer::new(cfg.timer_init, cfg.ema_window, cfg.timer_max)
                .with_min(cfg.timer_min),
            ab: Ab::new(cfg.n, cfg.f, cfg.ab_timeout, cfg.bbc_timeout),
            cfg,
            chain: Vec::new(),
            definite: 0,
            epoch: 0,
            full_mode: false,
            cur: None,
            next: (None, 0),
            obbcs: BTreeMap::new(),
            store: BlockStore::new(),
            own: BTreeMap::new(),
            disseminated: BTreeSet::new(),
            txq: VecDeque::new(),
            tx_seq: 0,
            rb: Rb::new(),
            ab_cursor: 0,
            recovery: None,
            future: Vec::new(),
            future_proofs: Vec::new(),
        }
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn chain(&self) -> &[Block] {
        &self.chain
    }

    pub fn definite_len(&self) -> usize {
        self.definite
    }

    pub fn epoch(&self) -> Epoch {
        self.epoch
    }

    /// Round currently being decided.
    pub fn round(&self) -> Round {
        self.chain.len() as Round
    }

    pub fn recovering(&self) -> bool {
        self.recovery.is_some()
    }

    pub fn suspects(&self) -> Vec<NodeId> {
        self.fd.suspects()
    }

    fn tip(&self) -> Digest {
        self.chain
            .last()
            .map_or_else(genesis_digest, |b| b.digest())
    }

    fn sync_ctx(&self, ctx: &mut Ctx) {
        ctx.epoch = self.epoch;
        ctx.round = self.round();
    }

    pub fn start(&mut self, ctx: &mut Ctx) {
        self.sync_ctx(ctx);
        if self.cfg.tx_interval > 0 {
            ctx.set_timer(self.cfg.tx_interval, TimerTag::TxTick);
        }
        self.advance(ctx);
    }

    // ---- transactions and block building ----

    fn fresh_tx(&mut self) -> Tx {
        let mut tx = format!("{}:{}:", self.id, self.tx_seq).into_bytes();
        self.tx_seq += 1;
        tx.resize(self.cfg.sigma, b'.');
        tx
    }

    fn take_txs(&mut self) -> Vec<Tx> {
        if self.cfg.tx_interval == 0 {
            (0..self.cfg.beta).map(|_| self.fresh_tx()).collect()
        } else {
            let k = self.cfg.beta.min(self.txq.len());
            self.txq.drain(..k).collect()
        }
    }

    /// Our block for `round` on top of `prev`, built once and then reused.
    fn build(&mut self, ctx: &mut Ctx, round: Round, prev: Digest) -> Option<Block> {
        if let Some(b) = self.own.get(&(self.epoch, round, prev)) {
            return Some(b.clone());
        }
        let txs = self.take_txs();
        if txs.is_empty() && !self.cfg.heartbeat {
            return None;
        }
        let header = Header {
            round,
            epoch: self.epoch,
            proposer: self.id,
            prev,
            payload: payload_digest(&txs),
        };
        let digest = header.digest();
        let saved = ctx.round;
        ctx.round = round;
        let sig = ctx.sign(&digest.0);
        ctx.round = saved;
        let b = Block {
            header: SignedHeader {
                header,
                digest,
                sig,
            },
            txs: Some(Arc::new(txs)),
        };
        self.own.insert((self.epoch, round, prev), b.clone());
        Some(b)
    }

    /// Make `b` available: returns what to put on the consensus path
    /// (header-only in header mode, after sending the body eagerly).
    fn disseminate(&mut self, ctx: &mut Ctx, b: &Block) -> Block {
        self.disseminated.insert((b.epoch(), b.round(), b.prev()));
        self.store.announce(b, ctx.now(), 0);
        if self.cfg.header_mode {
            ctx.broadcast(Message::Wrb(WrbMsg::Body(b.clone())));
            b.header_only()
        } else {
            b.clone()
        }
    }

    fn try_push(&mut self, ctx: &mut Ctx) {
        let r = self.round();
        let tip = self.tip();
        let Some(b) = self.build(ctx, r, tip) else {
            if let Some(a) = self.cur.as_mut() {
                a.waiting_tx = true;
            }
            return;
        };
        if let Some(a) = self.cur.as_mut() {
            a.waiting_tx = false;
        }
        let m = self.disseminate(ctx, &b);
        ctx.broadcast(Message::Wrb(WrbMsg::Push(m)));
    }

    // ---- the round loop ----

    fn obbc(&mut self, inst: Inst) -> &mut Obbc {
        let (n, f, t) = (self.cfg.n, self.cfg.f, self.cfg.bbc_timeout);
        self.obbcs
            .entry(inst)
            .or_insert_with(|| Obbc::new(inst, n, f, t))
    }

    /// Run the loop as far as it can go without waiting.
    fn advance(&mut self, ctx: &mut Ctx) {
        while self.recovery.is_none() {
            if self.cur.is_none() {
                self.begin(ctx);
            }
            self.try_vote(ctx);
            if !self.poll(ctx) {
                break;
            }
        }
        self.sync_ctx(ctx);
    }

    fn begin(&mut self, ctx: &mut Ctx) {
        self.sync_ctx(ctx);
        let (after, attempt) = self.next;
        let sel = rotation::next_proposer(
            self.cfg.n,
            self.cfg.f,
            self.cfg.permute_every,
            &self.chain,
            after,
        );
        if sel.skipped && self.cfg.fd {
            self.fd.clear();
        }
        let inst = Inst {
            epoch: self.epoch,
            round: self.round(),
            attempt,
            proposer: sel.proposer,
        };
        self.cur = Some(Attempt {
            inst,
            started: ctx.now(),
            timer: None,
            voted: false,
            gated: false,
            pulling: false,
            waiting_tx: false,
        });
        let tip = self.tip();
        if sel.proposer == self.id
            && (self.full_mode || !self.disseminated.contains(&(self.epoch, inst.round, tip)))
        {
            self.try_push(ctx);
        }
    }

    fn try_vote(&mut self, ctx: &mut Ctx) {
        let Some(a) = &self.cur else { return };
        if a.voted || a.pulling {
            return;
        }
        let inst = a.inst;
        if self.obbc(inst).decided().is_some() {
            return;
        }
        let tip = self.tip();
        if let Some((b, _)) = self.store.held(inst.epoch, inst.round, inst.proposer, &tip) {
            self.end_wait(ctx, false);
            let pgd = self.piggyback(ctx, &b);
            self.obbc(inst).propose(ctx, true, Some(&b), pgd);
            return;
        }
        if self.cfg.fd && self.fd.is_suspected(inst.proposer) {
            let e = ctx
                .event(Kind::SUSPECT)
                .round(inst.round)
                .peer(inst.proposer)
                .key(inst.key());
            ctx.emit(e);
            self.end_wait(ctx, true);
            self.obbc(inst).propose(ctx, false, None, None);
            return;
        }
        let a = self.cur.as_mut().unwrap();
        if a.timer.is_none() {
            a.timer = Some(ctx.set_timer(self.timer.wait(), TimerTag::WrbWait(inst)));
        }
    }

    /// Stop waiting for the current proposer and mark the vote as cast.
    fn end_wait(&mut self, ctx: &mut Ctx, gated: bool) {
        let a = self.cur.as_mut().unwrap();
        a.voted = true;
        a.gated = gated;
        if let Some(t) = a.timer.take() {
            ctx.cancel_timer(t);
        }
        let waited = ctx.now() - a.started;
        let p = a.inst.proposer;
        if !gated && p != self.id {
            self.fd.record_wait(p, waited);
        }
    }

    /// If the block after `b` will be ours, build it now and ride it on the vote.
    fn piggyback(&mut self, ctx: &mut Ctx, b: &Block) -> Option<Block> {
        self.chain.push(b.clone());
        let next = rotation::next_proposer(
            self.cfg.n,
            self.cfg.f,
            self.cfg.permute_every,
            &self.chain,
            None,
        );
        self.chain.pop();
        if next.proposer != self.id {
            return None;
        }
        let nb = self.build(ctx, b.round() + 1, b.digest())?;
        Some(self.disseminate(ctx, &nb))
    }

    /// Act on the current attempt's decision. True when the attempt is over.
    fn poll(&mut self, ctx: &mut Ctx) -> bool {
        let Some(a) = &self.cur else { return false };
        let inst = a.inst;
        match self.obbc(inst).decided() {
            None => false,
            Some(false) => {
                let a = self.cur.take().unwrap();
                if let Some(t) = a.timer {
                    ctx.cancel_timer(t);
                }
                let e = ctx
                    .event(Kind::WRB_RETURN)
                    .round(inst.round)
                    .peer(inst.proposer)
                    .val(0)
                    .id(inst.attempt as u64)
                    .key(inst.key());
                ctx.emit(e);
                if !a.gated {
                    self.timer.skip();
                }
                self.full_mode = true;
                self.next = (Some(inst.proposer), inst.attempt + 1);
                true
            }
            Some(true) => {
                let tip = self.tip();
                if let Some((b, delay)) =
                    self.store.held(inst.epoch, inst.round, inst.proposer, &tip)
                {
                    let a = self.cur.take().unwrap();
                    if let Some(t) = a.timer {
                        ctx.cancel_timer(t);
                    }
                    if inst.proposer != self.id {
                        self.timer.success(delay);
                    }
                    self.fd.delivered(inst.proposer);
                    self.deliver(ctx, inst, b);
                    return true;
                }
                let a = self.cur.as_mut().unwrap();
                if !a.pulling {
                    a.pulling = true;
                    if let Some(t) = a.timer.take() {
                        ctx.cancel_timer(t);
                    }
                    ctx.broadcast(Message::Wrb(WrbMsg::Req(inst)));
                }
                false
            }
        }
    }

    /// WRB returned `b` for `inst`: validate and append, or accuse.
    fn deliver(&mut self, ctx: &mut Ctx, inst: Inst, b: Block) {
        let e = ctx
            .event(Kind::WRB_RETURN)
            .round(inst.round)
            .peer(inst.proposer)
            .val(1)
            .id(inst.attempt as u64)
            .key(inst.key())
            .digest(b.digest());
        ctx.emit(e);
        let ok = b.prev() == self.tip()
            && b.epoch() == self.epoch
            && b.round() == self.round()
            && (self.cfg.valid)(&b);
        if !ok {
            let proof = MisbehaviorProof {
                block: b,
                prev: self.chain.last().cloned(),
            };
            self.rb.broadcast(
                ctx,
                RbTag::Proof(self.epoch),
                RbPayload::Proof(proof.clone()),
            );
            self.start_recovery(ctx, proof);
            return;
        }
        let r = b.round();
        let e = ctx
            .event(Kind::TENTATIVE_DECIDE)
            .round(r)
            .peer(b.proposer())
            .digest(b.digest())
            .val(b.tx_count() as i64)
            .id(0);
        ctx.emit(e);
        self.chain.push(b);
        self.emit_definite(ctx);
        self.full_mode = false;
        self.next = (None, 0);
        self.sync_ctx(ctx);
    }

    fn emit_definite(&mut self, ctx: &mut Ctx) {
        let depth = self.cfg.f + 2;
        while self.definite + depth < self.chain.len() {
            let b = &self.chain[self.definite];
            let e = ctx
                .event(Kind::DEFINITE_DECIDE)
                .round(b.round())
                .peer(b.proposer())
                .digest(b.digest())
                .val(b.tx_count() as i64);
            ctx.emit(e);
            self.definite += 1;
        }
    }

    // ---- message handling ----

    pub fn on_message(&mut self, ctx: &mut Ctx, from: NodeId, sent_at: Time, msg: Message) {
        self.sync_ctx(ctx);
        self.handle(ctx, from, sent_at, msg);
        self.advance(ctx);
    }

    fn handle(&mut self, ctx: &mut Ctx, from: NodeId, sent_at: Time, msg: Message) {
        if let (_, Some(e)) = msg.round_epoch() {
            if e > self.epoch {
                self.future.push((from, sent_at, msg));
                return;
            }
        }
        let delay = ctx.now().saturating_sub(sent_at);
        match msg {
            Message::Wrb(WrbMsg::Push(b)) => {
                if b.epoch() == self.epoch && from == b.proposer() {
                    self.receive(ctx, &b, delay, false);
                }
            }
            Message::Wrb(WrbMsg::Body(b)) => {
                if b.epoch() == self.epoch && from == b.proposer() && b.is_full() {
                    self.receive(ctx, &b, delay, true);
                }
            }
            Message::Wrb(WrbMsg::Req(inst)) => {
                if let Some(b) = self.store.any_full(inst.epoch, inst.round, inst.proposer) {
                    ctx.send(from, Message::Wrb(WrbMsg::Resp(inst, b)));
                }
            }
            Message::Wrb(WrbMsg::Resp(inst, b)) => {
                let pulling = self
                    .cur
                    .as_ref()
                    .is_some_and(|a| a.pulling && a.inst == inst);
                if pulling && evidence_matches(&inst, &b) && ctx.verify_block(&b) {
                    self.cur = None;
                    self.deliver(ctx, inst, b);
                }
            }
            Message::Obbc(ObbcMsg::Vote { inst, bit, pgd }) => {
                if inst.epoch < self.epoch {
                    return;
                }
                if let Some(b) = &pgd {
                    if b.epoch() == self.epoch && from == b.proposer() {
                        self.receive(ctx, b, delay, false);
                    }
                }
                self.obbc(inst).on_vote(ctx, from, bit, pgd);
            }
            Message::Obbc(ObbcMsg::EvReq(inst)) => {
                let tip = self.tip();
                let evidence = self
                    .store
                    .held(inst.epoch, inst.round, inst.proposer, &tip)
                    .map(|(b, _)| b);
                ctx.send(from, Message::Obbc(ObbcMsg::EvResp { inst, evidence }));
            }
            Message::Obbc(ObbcMsg::EvResp { inst, evidence }) => {
                if let Some(o) = self.obbcs.get_mut(&inst) {
                    o.on_ev_resp(ctx, from, evidence);
                }
            }
            Message::Bbc(m) => match m.key {
                BbcKey::Obbc(inst) => {
                    if inst.epoch == self.epoch {
                        self.obbc(inst).on_bbc(ctx, from, m.body);
                    } else if let Some(o) = self.obbcs.get_mut(&inst) {
                        o.on_bbc(ctx, from, m.body);
                    }
                }
                BbcKey::Ab { slot, attempt } => {
                    let out = self
                        .ab
                        .on_bbc(ctx, &mut self.rb, from, slot, attempt, m.body);
                    self.on_ab(ctx, out);
                }
            },
            Message::Rb(m) => {
                if let Some((origin, tag, payload)) = self.rb.on_msg(ctx, from, m) {
                    match payload {
                        RbPayload::Proof(p) => {
                            if tag == RbTag::Proof(p.epoch()) {
                                self.on_proof(ctx, p);
                            }
                        }
                        other => {
                            let out = self.ab.on_rb_deliver(ctx, &mut self.rb, origin, tag, other);
                            self.on_ab(ctx, out);
                        }
                    }
                }
            }
            Message::Sync(SyncMsg::Req { from: lo, to: hi }) => {
                if lo <= hi && (hi as usize) < self.chain.len() {
                    let blocks = self.chain[lo as usize..=hi as usize].to_vec();
                    ctx.send(from, Message::Sync(SyncMsg::Resp { blocks }));
                }
            }
            Message::Sync(SyncMsg::Resp { blocks }) => self.on_sync(ctx, blocks),
        }
    }

    /// A proposer-sent block (or body) for the current epoch.
    fn receive(&mut self, ctx: &mut Ctx, b: &Block, delay: Time, body_only: bool) {
        let d = b.digest();
        let fresh = !self.store.knows(&d);
        let ok = if fresh {
            ctx.verify_block(b)
        } else {
            // signature over this digest already checked
            b.header.header.digest() == d && b.body_matches()
        };
        if !ok {
            return;
        }
        if body_only {
            self.store.body(b, ctx.now(), delay);
        } else {
            self.store.announce(b, ctx.now(), delay);
        }
    }

    pub fn on_timer(&mut self, ctx: &mut Ctx, tag: TimerTag) {
        self.sync_ctx(ctx);
        match tag {
            TimerTag::WrbWait(inst) => {
                let waiting = self
                    .cur
                    .as_ref()
                    .is_some_and(|a| a.inst == inst && !a.voted && !a.pulling);
                if waiting {
                    self.cur.as_mut().unwrap().timer = None;
                    self.end_wait(ctx, false);
                    self.obbc(inst).propose(ctx, false, None, None);
                }
            }
            TimerTag::Bbc(BbcKey::Obbc(inst), round) => {
                if let Some(o) = self.obbcs.get_mut(&inst) {
                    o.on_bbc_timer(ctx, round);
                }
            }
            TimerTag::Bbc(BbcKey::Ab { slot, attempt }, round) => {
                let out = self
                    .ab
                    .on_bbc_timer(ctx, &mut self.rb, slot, attempt, round);
                self.on_ab(ctx, out);
            }
            TimerTag::Ab { slot, attempt } => {
                let out = self.ab.on_timer(ctx, &mut self.rb, slot, attempt);
                self.on_ab(ctx, out);
            }
            TimerTag::TxTick => {
                let tx = self.fresh_tx();
                self.txq.push_back(tx);
                ctx.set_timer(self.cfg.tx_interval, TimerTag::TxTick);
                if self.cur.as_ref().is_some_and(|a| a.waiting_tx) {
                    self.try_push(ctx);
                }
            }
            TimerTag::SyncRetry(epoch) => {
                let req = self.recovery.as_ref().and_then(|r| match &r.adopting {
                    Some((v, from)) if r.epoch == epoch => Some((*from, v.blocks[0].round() - 1)),
                    _ => None,
                });
                if let Some((lo, hi)) = req {
                    ctx.broadcast(Message::Sync(SyncMsg::Req { from: lo, to: hi }));
                    let t = ctx.set_timer(self.cfg.ab_timeout, TimerTag::SyncRetry(epoch));
                    self.recovery.as_mut().unwrap().sync_timer = Some(t);
                }
            }
        }
        self.advance(ctx);
    }

    // ---- recovery ----

    fn on_proof(&mut self, ctx: &mut Ctx, p: MisbehaviorProof) {
        if p.epoch() > self.epoch {
            self.future_proofs.push(p);
            return;
        }
        if p.epoch() < self.epoch || self.recovery.is_some() {
            return;
        }
        if p.verify(ctx, self.cfg.valid) {
            self.start_recovery(ctx, p);
        } else {
            let e = ctx
                .event(Kind::PROOF_IGNORED)
                .round(p.round())
                .peer(p.block.proposer());
            ctx.emit(e);
        }
    }

    fn start_recovery(&mut self, ctx: &mut Ctx, p: MisbehaviorProof) {
        if let Some(a) = self.cur.take() {
            if let Some(t) = a.timer {
                ctx.cancel_timer(t);
            }
        }
        let r = p.round();
        let e = ctx
            .event(Kind::RECOVERY_START)
            .round(r)
            .peer(p.block.proposer())
            .digest(p.block.digest());
        ctx.emit(e);
        let mine = self.chain.len() as Round;
        let blocks = if mine + 1 < r {
            Vec::new()
        } else {
            let start = (version_start(r, self.cfg.f) as usize).min(self.chain.len());
            self.chain[start..].to_vec()
        };
        self.recovery = Some(Recovery {
            epoch: self.epoch,
            versions: Vec::new(),
            origins: BTreeSet::new(),
            adopting: None,
            sync_timer: None,
        });
        let v = Version {
            epoch: self.epoch,
            proof_round: r,
            blocks,
        };
        self.ab.broadcast(ctx, &mut self.rb, v);
        self.process_log(ctx);
    }

    fn on_ab(&mut self, ctx: &mut Ctx, _delivered: Vec<SignedAbInput>) {
        self.process_log(ctx);
    }

    /// Consume atomically-ordered versions for the epoch being recovered.
    fn process_log(&mut self, ctx: &mut Ctx) {
        while let Some(entry) = self.ab.log().get(self.ab_cursor).cloned() {
            let v = &entry.payload;
            if v.epoch < self.epoch {
                self.ab_cursor += 1;
                continue;
            }
            let Some(rec) = &self.recovery else { break };
            if rec.epoch != v.epoch || rec.adopting.is_some() {
                break;
            }
            self.ab_cursor += 1;
            if !self.recovery.as_mut().unwrap().origins.insert(entry.origin) {
                continue;
            }
            if !validate_version(ctx, v, &self.chain, self.cfg.f, self.cfg.valid) {
                ctx.warn("invalid version");
                continue;
            }
            let rec = self.recovery.as_mut().unwrap();
            rec.versions.push(entry.payload.clone());
            if rec.versions.len() == self.cfg.n - self.cfg.f {
                self.conclude(ctx);
            }
        }
    }

    fn conclude(&mut self, ctx: &mut Ctx) {
        let rec = self.recovery.as_ref().unwrap();
        let mut best: Option<&Version> = None;
        for v in rec.versions.iter().filter(|v| !v.is_empty()) {
            if best.is_none_or(|b| v.tip_round() > b.tip_round()) {
                best = Some(v);
            }
        }
        let Some(v) = best.cloned() else {
            self.finish_recovery(ctx);
            return;
        };
        let start = v.blocks[0].round() as usize;
        let anchored = start == 0
            || self
                .chain
                .get(start - 1)
                .is_some_and(|b| b.digest() == v.blocks[0].prev());
        if anchored {
            self.adopt(ctx, &v);
            return;
        }
        let from = self.definite.min(start - 1) as Round;
        let epoch = rec.epoch;
        ctx.broadcast(Message::Sync(SyncMsg::Req {
            from,
            to: start as Round - 1,
        }));
        let t = ctx.set_timer(self.cfg.ab_timeout, TimerTag::SyncRetry(epoch));
        let rec = self.recovery.as_mut().unwrap();
        rec.adopting = Some((v, from));
        rec.sync_timer = Some(t);
    }

    fn on_sync(&mut self, ctx: &mut Ctx, blocks: Vec<Block>) {
        let Some((v, from)) = self.recovery.as_ref().and_then(|r| r.adopting.clone()) else {
            return;
        };
        let to = v.blocks[0].round() - 1;
        if blocks.len() as Round != to - from + 1 {
            return;
        }
        let mut prev = if from == 0 {
            genesis_digest()
        } else {
            match self.chain.get(from as usize - 1) {
                Some(b) => b.digest(),
                None => return,
            }
        };
        for (i, b) in blocks.iter().enumerate() {
            if b.round() != from + i as Round || b.prev() != prev || !b.is_full() {
                return;
            }
            prev = b.digest();
        }
        if prev != v.blocks[0].prev() {
            return;
        }
        let valid = self.cfg.valid;
        if !blocks.iter().all(|b| valid(b) && ctx.verify_block(b)) {
            return;
        }
        let rec = self.recovery.as_mut().unwrap();
        rec.adopting = None;
        if let Some(t) = rec.sync_timer.take() {
            ctx.cancel_timer(t);
        }
        self.install(ctx, from as usize, &blocks);
        self.adopt(ctx, &v);
    }

    /// Replace the chain from `start` on with `blocks`.
    fn install(&mut self, ctx: &mut Ctx, start: usize, blocks: &[Block]) {
        if start < self.definite
            && self.chain[start..self.definite]
                .iter()
                .zip(blocks)
                .any(|(a, b)| a != b)
        {
            ctx.warn("definite block replaced");
        }
        self.chain.truncate(start);
        for b in blocks {
            let e = ctx
                .event(Kind::TENTATIVE_DECIDE)
                .round(b.round())
                .peer(b.proposer())
                .digest(b.digest())
                .val(b.tx_count() as i64)
                .id(1);
            ctx.emit(e);
            self.chain.push(b.clone());
        }
        self.definite = self.definite.min(self.chain.len());
    }

    fn adopt(&mut self, ctx: &mut Ctx, v: &Version) {
        let start = v.blocks[0].round() as usize;
        self.install(ctx, start, &v.blocks);
        self.emit_definite(ctx);
        self.finish_recovery(ctx);
    }

    fn finish_recovery(&mut self, ctx: &mut Ctx) {
        let rec = self.recovery.take().unwrap();
        if let Some(t) = rec.sync_timer {
            ctx.cancel_timer(t);
        }
        self.epoch = rec.epoch + 1;
        let e = ctx
            .event(Kind::RECOVERY_END)
            .round(self.round())
            .epoch(self.epoch)
            .digest(self.tip())
            .val(self.chain.len() as i64);
        ctx.emit(e);
        self.full_mode = true;
        self.fd.clear();
        self.cur = None;
        self.next = (None, 0);
        self.sync_ctx(ctx);
        for p in std::mem::take(&mut self.future_proofs) {
            self.on_proof(ctx, p);
        }
        for (from, sent_at, m) in std::mem::take(&mut self.future) {
            self.handle(ctx, from, sent_at, m);
        }
    }
}
