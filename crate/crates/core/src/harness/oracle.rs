//! Global correctness checks evaluated over a finished trace.
//!
//! Everything here is rebuilt from trace records alone: each node's chain is
//! replayed from its TENTATIVE_DECIDE / RECOVERY_END records, and the
//! per-instance decisions of every sub-protocol are grouped by instance key.
//! Nodes that were ever corrupted are ignored; crashed nodes count for safety
//! (up to their crash) but not for the front invariant.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::crypto::Digest;
use crate::harness::trace::{EndReason, Kind, Trace, TraceEvent};
use crate::NodeId;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub family: &'static str,
    pub time: u64,
    pub node: NodeId,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] t={} node={}: {}",
            self.family, self.time, self.node, self.detail
        )
    }
}

#[derive(Default, Clone)]
struct View {
    chain: Vec<(Digest, NodeId)>,
    /// Blocks that reached depth f+2, in round order.
    deep: Vec<Digest>,
    definite: usize,
    recovering: bool,
    epoch: u64,
}

struct Checker<'a> {
    trace: &'a Trace,
    f: usize,
    out: Vec<Violation>,
}

impl Checker<'_> {
    fn flag(&mut self, family: &'static str, e: &TraceEvent, detail: String) {
        self.out.push(Violation {
            family,
            time: e.time,
            node: e.node,
            detail,
        });
    }
}

/// All violations found; empty means the trace passes. Runs with more than f
/// faults are not checked.
pub fn check(trace: &Trace) -> Vec<Violation> {
    if trace.meta.beyond_f {
        return Vec::new();
    }
    let mut c = Checker {
        trace,
        f: trace.meta.f,
        out: Vec::new(),
    };
    chains(&mut c);
    per_instance(&mut c, Kind::WRB_RETURN, "wrb-agreement");
    per_instance(&mut c, Kind::OBBC_DECIDE, "obbc-agreement");
    per_instance(&mut c, Kind::BBC_DECIDE, "bbc-agreement");
    wrb_validity(&mut c);
    reliable_broadcast(&mut c);
    atomic_order(&mut c);
    c.out
}

fn chains(c: &mut Checker) {
    let n = c.trace.meta.n;
    let f = c.f;
    let corrupted = c.trace.corrupted();
    let faulty = c.trace.faulty();
    let correct: Vec<NodeId> = (0..n).filter(|i| !faulty.contains(i)).collect();
    let mut views = vec![View::default(); n];
    let mut deep: BTreeMap<usize, (Digest, NodeId)> = BTreeMap::new();
    for e in &c.trace.events {
        if corrupted.contains(&e.node) || e.node >= n {
            continue;
        }
        let i = e.node;
        match e.kind {
            Kind::TENTATIVE_DECIDE => {
                let (Some(r), Some(d), Some(p)) = (e.round, e.digest, e.peer) else {
                    c.flag(
                        "trace",
                        e,
                        "TENTATIVE_DECIDE without round/digest/proposer".into(),
                    );
                    continue;
                };
                let r = r as usize;
                let v = &mut views[i];
                if r > v.chain.len() {
                    let msg = format!("round {r} decided with only {} blocks", v.chain.len());
                    c.flag("total-order", e, msg);
                    continue;
                }
                if v.deep.get(r).is_some_and(|x| *x != d) {
                    c.flag(
                        "finality",
                        e,
                        format!("block at round {r} replaced after reaching depth f+2"),
                    );
                }
                let window = &v.chain[r.saturating_sub(f)..r];
                if window.iter().any(|(_, q)| *q == p) {
                    c.flag(
                        "rotation",
                        e,
                        format!("proposer {p} repeats within {} blocks at round {r}", f + 1),
                    );
                }
                v.chain.truncate(r);
                v.chain.push((d, p));
                while v.deep.len() + f + 2 < v.chain.len() {
                    let k = v.deep.len();
                    v.deep.push(v.chain[k].0);
                }
                let upto = v.deep.len();
                for k in 0..upto {
                    let d = views[i].deep[k];
                    match deep.get(&k) {
                        Some(&(other, q)) if other != d => {
                            let msg =
                                format!("round {k} deep at {q} and {i} with different blocks");
                            c.flag("agreement", e, msg);
                        }
                        None => {
                            deep.insert(k, (d, i));
                        }
                        _ => {}
                    }
                }
                if !front_ok(&views, &correct, f) {
                    c.flag("front", e, format!("fewer than f+1 correct nodes within one round of the front at round {r}"));
                }
            }
            Kind::DEFINITE_DECIDE => {
                let (Some(r), Some(d)) = (e.round, e.digest) else {
                    c.flag("trace", e, "DEFINITE_DECIDE without round/digest".into());
                    continue;
                };
                let r = r as usize;
                let v = &mut views[i];
                if r != v.definite {
                    let msg = format!("definite round {r} out of order (expected {})", v.definite);
                    c.flag("total-order", e, msg);
                }
                v.definite = v.definite.max(r + 1);
                if v.chain.get(r).map(|x| x.0) != Some(d) {
                    c.flag(
                        "finality",
                        e,
                        format!("definite round {r} does not match the tentative chain"),
                    );
                } else if v.deep.get(r) != Some(&d) {
                    c.flag(
                        "finality",
                        e,
                        format!("round {r} declared definite before depth f+2"),
                    );
                }
            }
            Kind::RECOVERY_START => views[i].recovering = true,
            Kind::RECOVERY_END => {
                let v = &mut views[i];
                v.recovering = false;
                v.epoch = e.epoch;
                let len = e.val.unwrap_or(0).max(0) as usize;
                if len < v.deep.len() {
                    c.flag(
                        "finality",
                        e,
                        format!("recovery dropped definite rounds {len}..{}", v.deep.len()),
                    );
                }
                v.chain.truncate(len);
            }
            _ => {}
        }
    }
}

/// At least f+1 correct nodes are within one round of the most advanced
/// correct node. Only meaningful while all correct nodes share an epoch and
/// none is recovering.
fn front_ok(views: &[View], correct: &[NodeId], f: usize) -> bool {
    if correct.len() <= f {
        return true;
    }
    let epoch = views[correct[0]].epoch;
    if correct
        .iter()
        .any(|&i| views[i].recovering || views[i].epoch != epoch)
    {
        return true;
    }
    let max = correct
        .iter()
        .map(|&i| views[i].chain.len())
        .max()
        .unwrap_or(0);
    let near = correct
        .iter()
        .filter(|&&i| views[i].chain.len() + 1 >= max)
        .count();
    near > f
}

/// Correct nodes never decide differently for the same instance key.
fn per_instance(c: &mut Checker, kind: Kind, family: &'static str) {
    let corrupted = c.trace.corrupted();
    let mut seen: BTreeMap<&str, (i64, NodeId)> = BTreeMap::new();
    for e in &c.trace.events {
        if e.kind != kind || corrupted.contains(&e.node) {
            continue;
        }
        let Some(v) = e.val else { continue };
        match seen.get(e.key.as_str()) {
            Some(&(w, q)) if w != v => {
                c.flag(
                    family,
                    e,
                    format!("{}: node {q} got {w}, node {} got {v}", e.key, e.node),
                );
            }
            None => {
                seen.insert(&e.key, (v, e.node));
            }
            _ => {}
        }
    }
}

/// A non-nil WRB return attributed to a correct proposer must carry a block
/// that proposer actually sent.
fn wrb_validity(c: &mut Checker) {
    let faulty = c.trace.corrupted();
    let sent: BTreeSet<(NodeId, Digest)> = c
        .trace
        .events
        .iter()
        .filter(|e| e.kind == Kind::SEND)
        .filter_map(|e| e.digest.map(|d| (e.node, d)))
        .collect();
    for e in &c.trace.events {
        if e.kind != Kind::WRB_RETURN || e.val != Some(1) || faulty.contains(&e.node) {
            continue;
        }
        let (Some(k), Some(d)) = (e.peer, e.digest) else {
            continue;
        };
        if !faulty.contains(&k) && !sent.contains(&(k, d)) {
            c.flag(
                "wrb-validity",
                e,
                format!("{}: returned a block proposer {k} never sent", e.key),
            );
        }
    }
}

fn reliable_broadcast(c: &mut Checker) {
    let corrupted = c.trace.corrupted();
    let faulty = c.trace.faulty();
    let n = c.trace.meta.n;
    let mut got: BTreeMap<&str, BTreeMap<NodeId, Digest>> = BTreeMap::new();
    for e in &c.trace.events {
        if e.kind != Kind::RB_DELIVER || corrupted.contains(&e.node) {
            continue;
        }
        let Some(d) = e.digest else { continue };
        let per = got.entry(&e.key).or_default();
        if per.contains_key(&e.node) {
            c.flag("rb", e, format!("{}: delivered twice", e.key));
        }
        if let Some((&q, _)) = per.iter().find(|(_, x)| **x != d) {
            c.flag(
                "rb",
                e,
                format!("{}: node {q} delivered a different payload", e.key),
            );
        }
        per.insert(e.node, d);
    }
    if c.trace.end_reason() != Some(EndReason::Quiescent) {
        return;
    }
    let end = c.trace.events.last().cloned().unwrap();
    for (key, per) in got {
        let missing: Vec<NodeId> = (0..n)
            .filter(|i| !faulty.contains(i) && !per.contains_key(i))
            .collect();
        if !missing.is_empty() {
            c.flag(
                "rb",
                &end,
                format!("{key}: correct nodes {missing:?} never delivered"),
            );
        }
    }
}

/// AB logs of correct nodes are prefixes of one another.
fn atomic_order(c: &mut Checker) {
    let corrupted = c.trace.corrupted();
    let mut log: BTreeMap<u64, (Digest, NodeId)> = BTreeMap::new();
    let mut next: BTreeMap<NodeId, u64> = BTreeMap::new();
    for e in &c.trace.events {
        if e.kind != Kind::AB_DELIVER || corrupted.contains(&e.node) {
            continue;
        }
        let (Some(idx), Some(d)) = (e.id, e.digest) else {
            continue;
        };
        let expect = next.entry(e.node).or_default();
        if idx != *expect {
            c.flag(
                "ab-order",
                e,
                format!("log index {idx} delivered, expected {expect}"),
            );
        }
        *expect = idx + 1;
        match log.get(&idx) {
            Some(&(other, q)) if other != d => {
                c.flag(
                    "ab-order",
                    e,
                    format!("log index {idx} differs from node {q}"),
                );
            }
            None => {
                log.insert(idx, (d, e.node));
            }
            _ => {}
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::hash;
    use crate::harness::trace::TraceMeta;

    fn d(s: &str) -> Digest {
        hash(s.as_bytes())
    }

    fn trace(n: usize, f: usize, events: Vec<TraceEvent>) -> Trace {
        Trace {
            meta: TraceMeta {
                n,
                f,
                ..Default::default()
            },
            events,
        }
    }

    fn tent(t: u64, node: NodeId, r: u64, b: &str, p: NodeId) -> TraceEvent {
        TraceEvent::new(t, node, Kind::TENTATIVE_DECIDE)
            .round(r)
            .digest(d(b))
            .peer(p)
    }

    fn def(t: u64, node: NodeId, r: u64, b: &str) -> TraceEvent {
        TraceEvent::new(t, node, Kind::DEFINITE_DECIDE)
            .round(r)
            .digest(d(b))
    }

    /// Four nodes decide `blocks` in lockstep with the proper definite records.
    fn honest_run(blocks: &[(&str, NodeId)]) -> Vec<TraceEvent> {
        let mut ev = Vec::new();
        for (r, (b, p)) in blocks.iter().enumerate() {
            for i in 0..4 {
                ev.push(tent(r as u64, i, r as u64, b, *p));
                if r >= 3 {
                    ev.push(def(r as u64, i, r as u64 - 3, blocks[r - 3].0));
                }
            }
        }
        ev
    }

    fn families(v: &[Violation]) -> BTreeSet<&'static str> {
        v.iter().map(|x| x.family).collect()
    }

    const CHAIN: [(&str, NodeId); 6] = [("a", 0), ("b", 1), ("c", 2), ("d", 3), ("e", 0), ("g", 1)];

    #[test]
    fn honest_trace_passes() {
        assert!(check(&trace(4, 1, honest_run(&CHAIN))).is_empty());
    }

    #[test]
    fn catches_definite_replacement() {
        let mut ev = honest_run(&CHAIN);
        ev.push(TraceEvent::new(9, 2, Kind::RECOVERY_START));
        ev.push(tent(9, 2, 1, "evil", 1));
        let v = check(&trace(4, 1, ev));
        assert!(families(&v).contains("finality"), "{v:?}");
    }

    #[test]
    fn catches_divergent_deep_blocks() {
        let mut ev = Vec::new();
        for (r, (b, p)) in CHAIN.iter().enumerate() {
            for i in 0..4 {
                let b = if i == 3 && r == 0 { "fork" } else { b };
                ev.push(tent(r as u64, i, r as u64, b, *p));
            }
        }
        let v = check(&trace(4, 1, ev));
        assert!(families(&v).contains("agreement"), "{v:?}");
    }

    #[test]
    fn catches_rotation_breach() {
        let ev = honest_run(&[("a", 0), ("b", 0), ("c", 1)]);
        let v = check(&trace(4, 1, ev));
        assert!(families(&v).contains("rotation"), "{v:?}");
    }

    #[test]
    fn catches_wrb_split() {
        let mut ev = honest_run(&CHAIN[..2]);
        ev.push(
            TraceEvent::new(5, 0, Kind::WRB_RETURN)
                .key("0/2/0/2")
                .val(0),
        );
        ev.push(
            TraceEvent::new(5, 1, Kind::WRB_RETURN)
                .key("0/2/0/2")
                .val(1),
        );
        let v = check(&trace(4, 1, ev));
        assert_eq!(families(&v), BTreeSet::from(["wrb-agreement"]), "{v:?}");
    }

    #[test]
    fn catches_obbc_and_bbc_disagreement() {
        let ev = vec![
            TraceEvent::new(1, 0, Kind::OBBC_DECIDE).key("x").val(1),
            TraceEvent::new(1, 1, Kind::OBBC_DECIDE).key("x").val(0),
            TraceEvent::new(1, 0, Kind::BBC_DECIDE).key("y").val(1),
            TraceEvent::new(1, 2, Kind::BBC_DECIDE).key("y").val(0),
        ];
        let v = check(&trace(4, 1, ev));
        assert_eq!(
            families(&v),
            BTreeSet::from(["obbc-agreement", "bbc-agreement"])
        );
    }

    #[test]
    fn catches_rb_disagreement_and_non_totality() {
        let ev = vec![
            TraceEvent::new(1, 0, Kind::RB_DELIVER)
                .key("rb/0/p")
                .digest(d("x")),
            TraceEvent::new(1, 1, Kind::RB_DELIVER)
                .key("rb/0/p")
                .digest(d("y")),
            TraceEvent::new(9, 0, Kind::END).val(EndReason::Quiescent as i64),
        ];
        let v = check(&trace(4, 1, ev));
        assert!(v.iter().filter(|x| x.family == "rb").count() >= 2, "{v:?}");
    }

    #[test]
    fn catches_ab_reordering() {
        let ev = vec![
            TraceEvent::new(1, 0, Kind::AB_DELIVER).id(0).digest(d("x")),
            TraceEvent::new(1, 1, Kind::AB_DELIVER).id(0).digest(d("y")),
        ];
        assert_eq!(
            families(&check(&trace(4, 1, ev))),
            BTreeSet::from(["ab-order"])
        );
    }

    #[test]
    fn catches_lagging_front() {
        // three nodes race ahead while node 3 stays put: with f=1 the front is fine
        // until only one node is near the head
        let mut ev = Vec::new();
        for (r, (b, p)) in CHAIN.iter().enumerate() {
            ev.push(tent(r as u64, 0, r as u64, b, *p));
        }
        let v = check(&trace(4, 1, ev));
        assert!(families(&v).contains("front"), "{v:?}");
    }

    #[test]
    fn catches_premature_definite() {
        let mut ev = honest_run(&CHAIN[..2]);
        ev.push(def(5, 0, 0, "a"));
        let v = check(&trace(4, 1, ev));
        assert!(families(&v).contains("finality"), "{v:?}");
    }

    #[test]
    fn catches_forged_wrb_return() {
        let ev = vec![TraceEvent::new(1, 0, Kind::WRB_RETURN)
            .key("0/0/0/2")
            .peer(2)
            .val(1)
            .digest(d("never-sent"))];
        assert_eq!(
            families(&check(&trace(4, 1, ev))),
            BTreeSet::from(["wrb-validity"])
        );
    }

    #[test]
    fn corrupted_nodes_are_ignored_and_beyond_f_disables() {
        let mut ev = honest_run(&CHAIN);
        ev.insert(0, TraceEvent::new(0, 3, Kind::CORRUPT));
        ev.push(tent(9, 3, 0, "evil", 0));
        assert!(check(&trace(4, 1, ev.clone())).is_empty());
        let mut t = trace(4, 1, vec![tent(0, 0, 0, "a", 0), tent(0, 0, 1, "b", 0)]);
        assert!(!check(&t).is_empty());
        t.meta.beyond_f = true;
        assert!(check(&t).is_empty());
    }
}
