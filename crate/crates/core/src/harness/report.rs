//! Performance summary derived purely from a trace.
//!
//! Only correct nodes (never crashed or corrupted) contribute. A block's
//! "steps" is the growth in causal depth between the final decisions of
//! consecutive rounds: `D(r)` is the largest depth at which any correct node
//! decided the block it finally kept for round `r`, and `steps(r) = D(r) -
//! D(r-1)` with `D(-1) = 0`.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::crypto::Digest;
use crate::harness::trace::{EndReason, Kind, Trace};
use crate::msg::MsgKind;
use crate::NodeId;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub n: usize,
    pub f: usize,
    pub seed: u64,
    pub end: String,
    pub duration: u64,
    /// Shortest final chain among correct nodes.
    pub tentative_blocks: u64,
    /// Fewest definite blocks among correct nodes.
    pub definite_blocks: u64,
    pub nonempty_definite_blocks: u64,
    pub first_block_steps: Option<u64>,
    /// Steps per block after the first.
    pub amortized_steps: Option<f64>,
    pub steps_histogram: BTreeMap<u64, u64>,
    pub messages: u64,
    pub bytes: u64,
    pub messages_per_block: f64,
    pub messages_by_kind: BTreeMap<String, u64>,
    /// Histogram: broadcasts carrying a block body per round → number of rounds.
    pub payload_broadcasts_per_round: BTreeMap<u64, u64>,
    pub vote_broadcasts_per_round: BTreeMap<u64, u64>,
    pub signs_per_block: f64,
    pub verifies_per_block: f64,
    pub recoveries: u64,
    pub nil_instances: u64,
    pub suspicions: u64,
    /// Rounds between a block's tentative and definite decision → count.
    pub definite_latency: BTreeMap<u64, u64>,
}

#[derive(Default, Clone)]
struct Replay {
    chain: Vec<(Digest, u32, i64)>,
    definite: u64,
    nonempty: u64,
}

pub fn report(trace: &Trace) -> Report {
    let m = &trace.meta;
    let faulty = trace.faulty();
    let correct = |i: NodeId| i < m.n && !faulty.contains(&i);
    let mut nodes = vec![Replay::default(); m.n];
    let mut latency: BTreeMap<u64, u64> = BTreeMap::new();
    let mut r = Report {
        n: m.n,
        f: m.f,
        seed: m.seed,
        end: trace
            .end_reason()
            .map_or("unknown", |e| match e {
                EndReason::TargetReached => "target",
                EndReason::Quiescent => "quiescent",
                EndReason::TimeLimit => "time_limit",
            })
            .to_string(),
        duration: trace.events.last().map_or(0, |e| e.time),
        ..Report::default()
    };

    // digest -> round, for attributing block-carrying broadcasts
    let mut round_of: BTreeMap<Digest, u64> = BTreeMap::new();
    let mut nil: BTreeSet<&str> = BTreeSet::new();
    let mut epochs: BTreeSet<u64> = BTreeSet::new();
    for e in &trace.events {
        if !correct(e.node) {
            continue;
        }
        let v = &mut nodes[e.node];
        match e.kind {
            Kind::TENTATIVE_DECIDE => {
                let (Some(rd), Some(d)) = (e.round, e.digest) else {
                    continue;
                };
                round_of.insert(d, rd);
                v.chain.truncate(rd as usize);
                v.chain.push((d, e.depth, e.val.unwrap_or(0)));
            }
            Kind::RECOVERY_END => {
                v.chain.truncate(e.val.unwrap_or(0).max(0) as usize);
                epochs.insert(e.epoch);
            }
            Kind::DEFINITE_DECIDE => {
                v.definite += 1;
                if e.val.unwrap_or(0) > 0 {
                    v.nonempty += 1;
                }
                if let Some(rd) = e.round {
                    let tip = v.chain.len() as u64 - 1;
                    *latency.entry(tip.saturating_sub(rd)).or_default() += 1;
                }
            }
            Kind::WRB_RETURN if e.val == Some(0) => {
                nil.insert(&e.key);
            }
            Kind::SUSPECT => r.suspicions += 1,
            Kind::SEND => {
                r.messages += 1;
                r.bytes += e.bytes;
                if let Some(k) = e.msg {
                    *r.messages_by_kind.entry(k.name().to_string()).or_default() += 1;
                }
            }
            _ => {}
        }
    }

    let live: Vec<&Replay> = (0..m.n)
        .filter(|&i| correct(i))
        .map(|i| &nodes[i])
        .collect();
    let blocks = live.iter().map(|v| v.chain.len()).min().unwrap_or(0);
    r.tentative_blocks = blocks as u64;
    r.definite_blocks = live.iter().map(|v| v.definite).min().unwrap_or(0);
    r.nonempty_definite_blocks = live
        .iter()
        .filter(|v| v.definite == r.definite_blocks)
        .map(|v| v.nonempty)
        .min()
        .unwrap_or(0);
    r.recoveries = epochs.len() as u64;
    r.nil_instances = nil.len() as u64;
    r.definite_latency = latency;

    // steps
    let mut prev = 0u64;
    for k in 0..blocks {
        let d = live.iter().map(|v| v.chain[k].1 as u64).max().unwrap_or(0);
        let s = d.saturating_sub(prev);
        if k == 0 {
            r.first_block_steps = Some(s);
        }
        *r.steps_histogram.entry(s).or_default() += 1;
        prev = d.max(prev);
    }
    if blocks > 1 {
        let first = r.first_block_steps.unwrap_or(0);
        r.amortized_steps = Some((prev - first) as f64 / (blocks - 1) as f64);
    }

    // per-round broadcast and crypto counts
    let mut payload = vec![0u64; blocks];
    let mut votes = vec![0u64; blocks];
    let (mut signs, mut verifies) = (0u64, 0u64);
    for e in &trace.events {
        if !correct(e.node) {
            continue;
        }
        match e.kind {
            Kind::BCAST => {
                if e.val == Some(1) {
                    // blocks that were never decided belong to no round
                    let rd = e.digest.and_then(|d| round_of.get(&d).copied());
                    if let Some(slot) = rd.and_then(|x| payload.get_mut(x as usize)) {
                        *slot += 1;
                    }
                }
                if e.msg == Some(MsgKind::OBBC_VOTE) {
                    if let Some(slot) = e.round.and_then(|x| votes.get_mut(x as usize)) {
                        *slot += 1;
                    }
                }
            }
            Kind::SIGN if e.round.is_some_and(|x| (x as usize) < blocks) => signs += 1,
            Kind::VERIFY if e.round.is_some_and(|x| (x as usize) < blocks) => verifies += 1,
            _ => {}
        }
    }
    for c in payload {
        *r.payload_broadcasts_per_round.entry(c).or_default() += 1;
    }
    for c in votes {
        *r.vote_broadcasts_per_round.entry(c).or_default() += 1;
    }
    if blocks > 0 {
        let b = blocks as f64;
        r.messages_per_block = r.messages as f64 / b;
        r.signs_per_block = signs as f64 / b;
        r.verifies_per_block = verifies as f64 / b;
    }
    r
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(s: &str) -> serde_json::Result<Report> {
        serde_json::from_str(s)
    }

    /// Messages of kinds that an optimistic, fault-free run never needs.
    pub fn slow_path_messages(&self) -> u64 {
        self.messages_by_kind
            .iter()
            .filter(|(k, _)| MsgKind::parse(k).is_some_and(|k| k.is_slow_path()))
            .map(|(_, v)| v)
            .sum()
    }
}
