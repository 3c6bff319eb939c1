//! Minimal event loop for exercising single components in unit tests.

use std::collections::BTreeSet;

use crate::crypto::Pki;
use crate::ctx::{Ctx, Net, TimerTag};
use crate::harness::trace::{Trace, TraceMeta};
use crate::msg::Message;
use crate::netsim::{Event, Network, SimConfig};
use crate::NodeId;

pub trait Handler {
    fn on_message(&mut self, ctx: &mut Ctx, from: NodeId, m: Message);
    fn on_timer(&mut self, _ctx: &mut Ctx, _tag: TimerTag) {}
}

pub struct Harness {
    pub net: Net,
    pub trace: Trace,
    pub pki: Pki,
    silenced: BTreeSet<NodeId>,
}

impl Harness {
    pub fn new(n: usize, f: usize, seed: u64) -> Harness {
        Harness::with_config(SimConfig::new(n, f, seed))
    }

    pub fn with_config(cfg: SimConfig) -> Harness {
        let pki = Pki::new(cfg.seed, cfg.n);
        let trace = Trace::new(TraceMeta {
            n: cfg.n,
            f: cfg.f,
            seed: cfg.seed,
            gst: cfg.gst,
            delta: cfg.delta,
            beyond_f: false,
        });
        Harness {
            net: Network::new(cfg).unwrap(),
            trace,
            pki,
            silenced: BTreeSet::new(),
        }
    }

    pub fn with_ctx<R>(&mut self, me: NodeId, f: impl FnOnce(&mut Ctx) -> R) -> R {
        let mut ctx = Ctx {
            net: &mut self.net,
            trace: &mut self.trace,
            adversary: None,
            pki: &self.pki,
            me,
            epoch: 0,
            round: 0,
            cause: 0,
        };
        f(&mut ctx)
    }

    /// Raw send that bypasses any node logic.
    pub fn inject(&mut self, from: NodeId, to: NodeId, m: Message) {
        self.net.send(from, to, m, 1, 0);
    }

    /// The node stops reacting to anything (its past sends still land).
    pub fn silence(&mut self, node: NodeId) {
        self.silenced.insert(node);
    }

    pub fn run<H: Handler>(&mut self, nodes: &mut [H]) {
        self.run_until(nodes, |_| false);
    }

    pub fn run_until<H: Handler>(&mut self, nodes: &mut [H], mut stop: impl FnMut(&[H]) -> bool) {
        let mut steps = 0u64;
        while let Some(ev) = self.net.step() {
            steps += 1;
            assert!(steps < 5_000_000, "test simulation did not quiesce");
            match ev {
                Event::Deliver(env) if !self.silenced.contains(&env.to) => {
                    let to = env.to;
                    let depth = env.depth;
                    self.with_ctx(to, |ctx| {
                        ctx.cause = depth;
                        nodes[to].on_message(ctx, env.from, env.payload)
                    });
                }
                Event::Timer { node, tag, .. } if !self.silenced.contains(&node) => {
                    self.with_ctx(node, |ctx| nodes[node].on_timer(ctx, tag));
                }
                _ => {}
            }
            if stop(nodes) {
                break;
            }
        }
    }
}
