//! Bracha reliable broadcast.
//!
//! Every phase message carries the payload itself; thresholds are counted per
//! payload digest so that an equivocating origin cannot mix votes.

use std::collections::{BTreeMap, BTreeSet};

use crate::crypto::Digest;
use crate::ctx::Ctx;
use crate::harness::trace::Kind;
use crate::msg::{Message, RbMsg, RbPayload, RbPhase, RbTag};
use crate::NodeId;

#[derive(Default, Debug)]
struct Instance {
    echoed: bool,
    readied: bool,
    delivered: bool,
    echoes: BTreeMap<Digest, BTreeSet<NodeId>>,
    readies: BTreeMap<Digest, BTreeSet<NodeId>>,
}

/// Echo threshold ⌈(n+f+1)/2⌉.
pub fn echo_quorum(n: usize, f: usize) -> usize {
    (n + f + 2) / 2
}

#[derive(Default, Debug)]
pub struct Rb {
    instances: BTreeMap<(NodeId, RbTag), Instance>,
    sent: BTreeSet<RbTag>,
}

impl Rb {
    pub fn new() -> Rb {
        Rb::default()
    }

    /// Returns false (and sends nothing) if `tag` was already used by this node.
    pub fn broadcast(&mut self, ctx: &mut Ctx, tag: RbTag, payload: RbPayload) -> bool {
        if !self.sent.insert(tag) {
            return false;
        }
        ctx.broadcast(Message::Rb(RbMsg {
            origin: ctx.me,
            tag,
            phase: RbPhase::Init,
            payload,
        }));
        true
    }

    pub fn delivered(&self, origin: NodeId, tag: RbTag) -> bool {
        self.instances
            .get(&(origin, tag))
            .is_some_and(|i| i.delivered)
    }

    /// Handle one RB message; returns the payload if it is delivered now.
    pub fn on_msg(
        &mut self,
        ctx: &mut Ctx,
        from: NodeId,
        m: RbMsg,
    ) -> Option<(NodeId, RbTag, RbPayload)> {
        let (n, f) = (ctx.n(), ctx.f());
        let inst = self.instances.entry((m.origin, m.tag)).or_default();
        let d = m.payload.digest();
        let relay = |ctx: &mut Ctx, phase| {
            ctx.broadcast(Message::Rb(RbMsg {
                origin: m.origin,
                tag: m.tag,
                phase,
                payload: m.payload.clone(),
            }))
        };
        match m.phase {
            RbPhase::Init => {
                if from == m.origin && !inst.echoed {
                    inst.echoed = true;
                    relay(ctx, RbPhase::Echo);
                }
            }
            RbPhase::Echo => {
                inst.echoes.entry(d).or_default().insert(from);
            }
            RbPhase::Ready => {
                inst.readies.entry(d).or_default().insert(from);
            }
        }
        let echoes = inst.echoes.get(&d).map_or(0, |s| s.len());
        let readies = inst.readies.get(&d).map_or(0, |s| s.len());
        if !inst.readied && (echoes >= echo_quorum(n, f) || readies > f) {
            inst.readied = true;
            relay(ctx, RbPhase::Ready);
        }
        let inst = self.instances.get_mut(&(m.origin, m.tag)).unwrap();
        let readies = inst.readies.get(&d).map_or(0, |s| s.len());
        if !inst.delivered && readies > 2 * f {
            inst.delivered = true;
            let e = ctx
                .event(Kind::RB_DELIVER)
                .peer(m.origin)
                .key(format!("rb/{}/{}", m.origin, m.tag))
                .digest(d);
            ctx.emit(e);
            return Some((m.origin, m.tag, m.payload));
        }
        None
    }
}
