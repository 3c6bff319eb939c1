//! Per-event execution context handed to protocol code.
//!
//! All outbound traffic, timers and signature operations go through [`Ctx`],
//! which records them in the trace and routes sends through the adversary
//! strategy when the node is corrupted.

use crate::adversary::Adversary;
use crate::block::{Block, Epoch, Round};
use crate::crypto::{sign, Pki, Signature};
use crate::harness::trace::{Kind, Trace, TraceEvent};
use crate::msg::{BbcKey, Inst, Message};
use crate::netsim::{Network, Time, TimerId};
use crate::NodeId;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TimerTag {
    WrbWait(Inst),
    Bbc(BbcKey, u32),
    Ab { slot: u64, attempt: u32 },
    TxTick,
    SyncRetry(Epoch),
}

impl TimerTag {
    pub fn key(&self) -> String {
        match self {
            TimerTag::WrbWait(i) => format!("wrb/{}", i.key()),
            TimerTag::Bbc(k, r) => format!("{}/r{r}", k.key()),
            TimerTag::Ab { slot, attempt } => format!("abt/{slot}/{attempt}"),
            TimerTag::TxTick => "tx".to_string(),
            TimerTag::SyncRetry(e) => format!("sync/{e}"),
        }
    }
}

pub type Net = Network<Message, TimerTag>;

pub struct Ctx<'a> {
    pub net: &'a mut Net,
    pub trace: &'a mut Trace,
    pub adversary: Option<&'a mut (dyn Adversary + 'static)>,
    pub pki: &'a Pki,
    pub me: NodeId,
    /// Epoch and round used to annotate trace records.
    pub epoch: Epoch,
    pub round: Round,
    /// Causal depth of the event being handled.
    pub cause: u32,
}

impl<'a> Ctx<'a> {
    pub fn now(&self) -> Time {
        self.net.now()
    }

    pub fn n(&self) -> usize {
        self.net.config().n
    }

    pub fn f(&self) -> usize {
        self.net.config().f
    }

    pub fn event(&self, kind: Kind) -> TraceEvent {
        TraceEvent::new(self.now(), self.me, kind)
            .epoch(self.epoch)
            .depth(self.cause)
    }

    pub fn emit(&mut self, e: TraceEvent) {
        self.trace.push(e);
    }

    /// Fill message-derived fields of a SEND/DELIVER-like record.
    pub fn annotate(e: TraceEvent, msg: &Message) -> TraceEvent {
        let (r, ep) = msg.round_epoch();
        let mut e = e
            .msg(msg.kind())
            .key(msg.instance_key())
            .bytes(msg.wire_size() as u64);
        if let Some(r) = r {
            e = e.round(r);
        }
        if let Some(ep) = ep {
            e = e.epoch(ep);
        }
        if let Some(b) = msg.carried_block() {
            e = e.digest(b.digest());
        }
        if msg.is_payload_bearing() {
            e = e.val(1);
        }
        e
    }

    fn raw_send(&mut self, to: NodeId, msg: Message, extra: Time) {
        // delivering to oneself is local processing, not a communication step
        let depth = if to == self.me {
            self.cause
        } else {
            self.cause + 1
        };
        let annotated = Self::annotate(self.event(Kind::SEND).depth(depth).peer(to), &msg);
        if let Some(env) = self.net.send(self.me, to, msg, depth, extra) {
            self.trace.push(annotated.id(env.id).sent_at(env.sent_at));
        }
    }

    fn send_via_adversary(&mut self, to: NodeId, msg: Message) -> usize {
        let now = self.now();
        match self.adversary.as_deref_mut() {
            Some(adv) => {
                let out = adv.transform(now, to, msg);
                let k = out.len();
                for (to, m, extra) in out {
                    self.raw_send(to, m, extra);
                }
                k
            }
            None => {
                self.raw_send(to, msg, 0);
                1
            }
        }
    }

    pub fn send(&mut self, to: NodeId, msg: Message) {
        if !self.net.is_alive(self.me) {
            return;
        }
        self.send_via_adversary(to, msg);
    }

    /// One logical broadcast: a BCAST record followed by n point-to-point sends.
    pub fn broadcast(&mut self, msg: Message) {
        if !self.net.is_alive(self.me) {
            return;
        }
        let bcast = Self::annotate(self.event(Kind::BCAST).depth(self.cause + 1), &msg);
        let at = self.trace.events.len();
        let mut sent = 0;
        for to in 0..self.n() {
            sent += self.send_via_adversary(to, msg.clone());
        }
        if sent > 0 {
            self.trace.events.insert(at, bcast);
        }
    }

    pub fn set_timer(&mut self, duration: Time, tag: TimerTag) -> TimerId {
        self.net.set_timer(self.me, duration, tag)
    }

    pub fn cancel_timer(&mut self, id: TimerId) {
        self.net.cancel_timer(id);
    }

    pub fn sign(&mut self, msg: &[u8]) -> Signature {
        let e = self.event(Kind::SIGN).round(self.round);
        self.trace.push(e);
        sign(self.pki.keypair(self.me), msg)
    }

    pub fn verify(&mut self, signer: NodeId, msg: &[u8], sig: &Signature) -> bool {
        let e = self.event(Kind::VERIFY).round(self.round).peer(signer);
        self.trace.push(e);
        self.pki.verify_by(signer, msg, sig)
    }

    /// Signature (and body) check of a block, counted as one verification.
    pub fn verify_block(&mut self, b: &Block) -> bool {
        let e = self
            .event(Kind::VERIFY)
            .round(b.round())
            .peer(b.proposer())
            .digest(b.digest());
        self.trace.push(e);
        b.verify(self.pki)
    }

    pub fn warn(&mut self, what: &str) {
        let e = self
            .event(Kind::WARN)
            .key(what.replace(char::is_whitespace, "_"));
        self.trace.push(e);
    }
}
