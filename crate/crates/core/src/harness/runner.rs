//! Drives a scenario to completion and records the trace.

use crate::adversary::{Adversary, Strategy};
use crate::crypto::Pki;
use crate::ctx::{Ctx, Net, TimerTag};
use crate::harness::scenario::{FaultKind, Scenario, ScenarioError};
use crate::harness::trace::{EndReason, Kind, Trace, TraceEvent, TraceMeta};
use crate::msg::Message;
use crate::netsim::{Control, Event, Network};
use crate::toy::Node;
use crate::NodeId;

pub struct Run {
    pub trace: Trace,
    pub nodes: Vec<Node>,
    pub end: EndReason,
}

struct Sim {
    net: Net,
    trace: Trace,
    pki: Pki,
    nodes: Vec<Node>,
    adversaries: Vec<Option<Box<dyn Adversary>>>,
    /// Deepest causal depth each node has seen; timers inherit it.
    depth: Vec<u32>,
}

impl Sim {
    fn ctx_for<R>(
        &mut self,
        node: NodeId,
        cause: u32,
        f: impl FnOnce(&mut Node, &mut Ctx) -> R,
    ) -> R {
        let mut ctx = Ctx {
            net: &mut self.net,
            trace: &mut self.trace,
            adversary: self.adversaries[node].as_deref_mut(),
            pki: &self.pki,
            me: node,
            epoch: self.nodes[node].epoch(),
            round: self.nodes[node].round(),
            cause,
        };
        f(&mut self.nodes[node], &mut ctx)
    }

    fn correct(&self, i: NodeId) -> bool {
        self.net.is_alive(i) && self.adversaries[i].is_none()
    }
}

pub fn run(sc: &Scenario) -> Result<Run, ScenarioError> {
    run_with(sc, &[])
}

/// Like [`run`], additionally corrupting `(node, time, strategy)` with
/// strategies that cannot be written in a scenario file.
pub fn run_with(sc: &Scenario, extra: &[(NodeId, u64, Strategy)]) -> Result<Run, ScenarioError> {
    sc.validate()?;
    let n = sc.n;
    let net: Net =
        Network::new(sc.sim_config()).map_err(|e| ScenarioError::Invalid(e.to_string()))?;
    let trace = Trace::new(TraceMeta {
        n,
        f: sc.f,
        seed: sc.seed,
        gst: sc.gst,
        delta: sc.delta,
        beyond_f: sc.beyond_f,
    });
    let cfg = sc.node_config();
    let mut sim = Sim {
        net,
        trace,
        pki: Pki::new(sc.seed, n),
        nodes: (0..n).map(|i| Node::new(i, cfg.clone())).collect(),
        adversaries: (0..n).map(|_| None).collect(),
        depth: vec![0; n],
    };

    let mut strategies: Vec<(NodeId, Strategy)> = Vec::new();
    let byz = sc.faults.iter().filter_map(|x| match x.kind {
        FaultKind::Byzantine(s) => Some((x.node, x.time, s)),
        FaultKind::Crash => None,
    });
    for (node, time, s) in byz.chain(extra.iter().copied()) {
        sim.net.corrupt(node, strategies.len(), time);
        strategies.push((node, s));
    }
    for x in &sc.faults {
        if x.kind == FaultKind::Crash {
            sim.net.crash(x.node, x.time);
        }
    }
    if sc.beyond_f {
        sim.trace
            .push(TraceEvent::new(0, 0, Kind::WARN).key("beyond_f:oracle_disabled"));
    }

    for i in 0..n {
        sim.ctx_for(i, 0, |node, ctx| node.start(ctx));
    }

    let target = sc.rounds as usize;
    let end = loop {
        let done = (0..n)
            .filter(|&i| sim.correct(i))
            .all(|i| sim.nodes[i].chain().len() >= target);
        if done {
            break EndReason::TargetReached;
        }
        let Some(ev) = sim.net.step() else {
            break EndReason::Quiescent;
        };
        if sim.net.now() > sc.max_time {
            break EndReason::TimeLimit;
        }
        let now = sim.net.now();
        match ev {
            Event::Deliver(env) => {
                let e = Ctx::annotate(TraceEvent::new(now, env.to, Kind::DELIVER), &env.payload)
                    .peer(env.from)
                    .id(env.id)
                    .depth(env.depth)
                    .sent_at(env.sent_at);
                sim.trace.push(e);
                let to = env.to;
                sim.depth[to] = sim.depth[to].max(env.depth);
                let (from, sent_at, payload): (NodeId, u64, Message) =
                    (env.from, env.sent_at, env.payload);
                sim.ctx_for(to, env.depth, |node, ctx| {
                    node.on_message(ctx, from, sent_at, payload)
                });
            }
            Event::Dropped(env) => {
                let e = Ctx::annotate(TraceEvent::new(now, env.to, Kind::DROP), &env.payload)
                    .peer(env.from)
                    .id(env.id)
                    .depth(env.depth)
                    .sent_at(env.sent_at);
                sim.trace.push(e);
            }
            Event::Timer { node, tag, .. } => {
                let d = sim.depth[node];
                let e = TraceEvent::new(now, node, Kind::TIMER)
                    .depth(d)
                    .epoch(sim.nodes[node].epoch())
                    .round(timer_round(&tag).unwrap_or(sim.nodes[node].round()))
                    .key(tag.key());
                sim.trace.push(e);
                sim.ctx_for(node, d, |n, ctx| n.on_timer(ctx, tag));
            }
            Event::Control { node, action } => match action {
                Control::Crash => sim.trace.push(TraceEvent::new(now, node, Kind::CRASH)),
                Control::Corrupt(slot) => {
                    let (who, s) = strategies[slot];
                    debug_assert_eq!(who, node);
                    let kp = sim.pki.keypair(node).clone();
                    let seed = sc.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ node as u64;
                    sim.adversaries[node] = Some(s.build(kp, n, seed));
                    sim.trace.push(
                        TraceEvent::new(now, node, Kind::CORRUPT)
                            .id(slot as u64)
                            .key(strategy_name(&s)),
                    );
                }
            },
        }
    };
    let now = sim.net.now();
    sim.trace
        .push(TraceEvent::new(now, 0, Kind::END).val(end as i64));
    Ok(Run {
        trace: sim.trace,
        nodes: sim.nodes,
        end,
    })
}

fn timer_round(tag: &TimerTag) -> Option<u64> {
    match tag {
        TimerTag::WrbWait(i) => Some(i.round),
        _ => None,
    }
}

fn strategy_name(s: &Strategy) -> String {
    match s {
        Strategy::Silent => "silent".into(),
        Strategy::Delay(d) => format!("delay:{d}"),
        Strategy::Equivocate(r) => format!("equivocate:{r}"),
        Strategy::BadLink(r) => format!("bad_link:{r}"),
        Strategy::Custom(_) => "custom".into(),
    }
}
