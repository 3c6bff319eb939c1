//! End-to-end acceptance criteria. Runs as a plain binary so every criterion
//! prints exactly one PASS/FAIL line regardless of output capturing.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::{BTreeMap, BTreeSet};
use std::panic;
use std::thread;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use toy_core::adversary::Strategy;
use toy_core::block::{genesis_digest, Block};
use toy_core::crypto::{Digest, Pki};
use toy_core::ctx::{Ctx, Net, TimerTag};
use toy_core::harness::oracle::check;
use toy_core::harness::report::report;
use toy_core::harness::runner::{run, Run};
use toy_core::harness::scenario::{Fault, FaultKind, Scenario};
use toy_core::harness::trace::{Kind, Trace, TraceMeta};
use toy_core::msg::{Inst, Message, ObbcMsg};
use toy_core::netsim::{Event, Network, SimConfig};
use toy_core::obbc::Obbc;
use toy_core::NodeId;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn exec(sc: &Scenario) -> Result<Run, String> {
    run(sc).map_err(|e| format!("scenario rejected: {e}"))
}

fn clean(label: &str, t: &Trace) -> Result<(), String> {
    let v = check(t);
    ensure!(
        v.is_empty(),
        "{label}: {} oracle violations, first: {}",
        v.len(),
        v[0]
    );
    Ok(())
}

fn fault_free(n: usize, seed: u64, rounds: u64, delta: u64) -> Scenario {
    let mut sc = Scenario::new(n, Scenario::max_f(n), seed);
    sc.rounds = rounds;
    sc.delta = delta;
    sc
}

fn correct_chains(r: &Run, t: &Trace) -> Vec<Vec<Digest>> {
    let faulty = t.faulty();
    (0..r.nodes.len())
        .filter(|i| !faulty.contains(i))
        .map(|i| r.nodes[i].chain().iter().map(|b| b.digest()).collect())
        .collect()
}

// ---- 1 ----

fn c1() -> Outcome {
    let mut notes = Vec::new();
    for n in [4, 7, 10] {
        for delta in [1, 5] {
            let sc = fault_free(n, 1, 500, delta);
            let t0 = Instant::now();
            let r = exec(&sc)?;
            let took = t0.elapsed();
            let label = format!("n={n} delta={delta}");
            ensure!(took < Duration::from_secs(10), "{label}: took {took:?}");
            clean(&label, &r.trace)?;
            let rep = report(&r.trace);
            ensure!(
                rep.tentative_blocks >= 500,
                "{label}: only {} blocks",
                rep.tentative_blocks
            );
            let t = rep.tentative_blocks;
            ensure!(
                rep.signs_per_block == 1.0,
                "{label}: {} signs per block",
                rep.signs_per_block
            );
            ensure!(
                rep.payload_broadcasts_per_round == BTreeMap::from([(1, t)]),
                "{label}: payload broadcasts {:?}",
                rep.payload_broadcasts_per_round
            );
            ensure!(
                rep.vote_broadcasts_per_round == BTreeMap::from([(n as u64, t)]),
                "{label}: vote broadcasts {:?}",
                rep.vote_broadcasts_per_round
            );
            ensure!(
                rep.slow_path_messages() == 0,
                "{label}: slow-path traffic {:?}",
                rep.messages_by_kind
            );
            ensure!(
                rep.nil_instances == 0,
                "{label}: {} nil instances",
                rep.nil_instances
            );
            if delta == 1 {
                // unit delays: causal depth is exactly the number of message hops
                ensure!(
                    rep.first_block_steps == Some(2),
                    "{label}: first block {:?}",
                    rep.first_block_steps
                );
                ensure!(
                    rep.steps_histogram == BTreeMap::from([(1, t - 1), (2, 1)]),
                    "{label}: steps {:?}",
                    rep.steps_histogram
                );
                ensure!(
                    rep.amortized_steps == Some(1.0),
                    "{label}: amortized {:?}",
                    rep.amortized_steps
                );
            }
            notes.push(format!("{label} {:.2}s", took.as_secs_f64()));
        }
    }
    Ok(notes.join(", "))
}

// ---- 2 ----

fn mixed_faults(seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc2c2);
    let n = [4, 4, 7, 7, 10][rng.gen_range(0..5)];
    let f = Scenario::max_f(n);
    let mut sc = Scenario::new(n, f, seed);
    sc.rounds = 30;
    sc.fd = rng.gen_bool(0.5);
    sc.header_mode = rng.gen_bool(0.25);
    if rng.gen_bool(0.3) {
        sc.gst = rng.gen_range(50..400);
        sc.pre_gst_delay_max = rng.gen_range(10..60);
    }
    let k = rng.gen_range(0..=f);
    let mut nodes: Vec<NodeId> = (0..n).collect();
    for _ in 0..k {
        let node = nodes.remove(rng.gen_range(0..nodes.len()));
        let time = rng.gen_range(0..150);
        let kind = match rng.gen_range(0..3) {
            0 => FaultKind::Crash,
            1 => FaultKind::Byzantine(Strategy::Silent),
            _ => FaultKind::Byzantine(Strategy::Delay(rng.gen_range(1..40))),
        };
        sc.faults.push(Fault { node, time, kind });
    }
    sc
}

fn c2() -> Outcome {
    let mut instances = 0usize;
    let mut nils = 0usize;
    for seed in 0..500 {
        let sc = mixed_faults(seed);
        let r = exec(&sc)?;
        let corrupted = r.trace.corrupted();
        let mut per: BTreeMap<&str, BTreeSet<i64>> = BTreeMap::new();
        for e in &r.trace.events {
            if e.kind == Kind::WRB_RETURN && !corrupted.contains(&e.node) {
                per.entry(&e.key).or_default().insert(e.val.unwrap_or(-1));
            }
        }
        let split = per.iter().find(|(_, v)| v.len() > 1);
        ensure!(
            split.is_none(),
            "seed {seed}: nil/non-nil split at {}",
            split.unwrap().0
        );
        instances += per.len();
        nils += per.values().filter(|v| v.contains(&0)).count();
        clean(&format!("seed {seed}"), &r.trace)?;
    }
    Ok(format!(
        "500 scenarios, {instances} WRB instances ({nils} nil), no splits"
    ))
}

// ---- 3 ----

struct ObbcNode {
    obbc: Obbc,
    evidence: Option<Block>,
}

/// Permutations of the three peers of `me`, in arrival order.
fn arrival_orders(me: NodeId) -> Vec<[NodeId; 3]> {
    let p: Vec<NodeId> = (0..4).filter(|&x| x != me).collect();
    let idx = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];
    idx.iter().map(|o| [p[o[0]], p[o[1]], p[o[2]]]).collect()
}

fn run_obbc(
    pki: &Pki,
    block: &Block,
    inst: Inst,
    votes: [bool; 4],
    orders: [[NodeId; 3]; 4],
) -> Trace {
    let mut cfg = SimConfig::new(4, 1, 0);
    cfg.delta = 3;
    let mut net: Net = Network::new(cfg).unwrap();
    net.set_delay_override(Box::new(move |from, to, _, m: &Message| {
        if from == to {
            return 0;
        }
        match m {
            Message::Obbc(ObbcMsg::Vote { .. }) => {
                1 + orders[to].iter().position(|&x| x == from).unwrap() as u64
            }
            _ => 1 + ((from + 2 * to) % 3) as u64,
        }
    }));
    let mut trace = Trace::new(TraceMeta {
        n: 4,
        f: 1,
        ..Default::default()
    });
    let mut nodes: Vec<ObbcNode> = votes
        .iter()
        .map(|&v| ObbcNode {
            obbc: Obbc::new(inst, 4, 1, 12),
            evidence: v.then(|| block.clone()),
        })
        .collect();
    fn ctx<'a>(
        net: &'a mut Net,
        trace: &'a mut Trace,
        pki: &'a Pki,
        me: NodeId,
        cause: u32,
    ) -> Ctx<'a> {
        Ctx {
            net,
            trace,
            adversary: None,
            pki,
            me,
            epoch: 0,
            round: 0,
            cause,
        }
    }
    for (i, node) in nodes.iter_mut().enumerate() {
        let mut c = ctx(&mut net, &mut trace, pki, i, 0);
        let ev = node.evidence.clone();
        node.obbc.propose(&mut c, votes[i], ev.as_ref(), None);
    }
    let mut steps = 0;
    while let Some(ev) = net.step() {
        steps += 1;
        assert!(steps < 200_000, "obbc run does not quiesce");
        match ev {
            Event::Deliver(env) => {
                let node = &mut nodes[env.to];
                let mut c = ctx(&mut net, &mut trace, pki, env.to, env.depth);
                match env.payload {
                    Message::Obbc(ObbcMsg::Vote { bit, pgd, .. }) => {
                        node.obbc.on_vote(&mut c, env.from, bit, pgd);
                    }
                    Message::Obbc(ObbcMsg::EvReq(i)) => {
                        let evidence = node.evidence.clone();
                        c.send(
                            env.from,
                            Message::Obbc(ObbcMsg::EvResp { inst: i, evidence }),
                        );
                    }
                    Message::Obbc(ObbcMsg::EvResp { evidence, .. }) => {
                        node.obbc.on_ev_resp(&mut c, env.from, evidence);
                    }
                    Message::Bbc(m) => {
                        node.obbc.on_bbc(&mut c, env.from, m.body);
                    }
                    _ => {}
                }
            }
            Event::Timer {
                node,
                tag: TimerTag::Bbc(_, r),
                ..
            } => {
                let mut c = ctx(&mut net, &mut trace, pki, node, 0);
                nodes[node].obbc.on_bbc_timer(&mut c, r);
            }
            _ => {}
        }
    }
    trace
}

fn c3() -> Outcome {
    let pki = Pki::new(3, 4);
    let inst = Inst {
        epoch: 0,
        round: 0,
        attempt: 0,
        proposer: 0,
    };
    let block = Block::signed(pki.keypair(0), 0, 0, genesis_digest(), vec![b"tx".to_vec()]);
    let per_node: Vec<Vec<[NodeId; 3]>> = (0..4).map(arrival_orders).collect();
    let (mut schedules, mut fast_runs) = (0u64, 0u64);
    for mask in 0..16u32 {
        let votes = [0, 1, 2, 3].map(|i| mask >> i & 1 == 1);
        for combo in 0..6usize.pow(4) {
            let pick = [combo % 6, combo / 6 % 6, combo / 36 % 6, combo / 216];
            let orders = [0, 1, 2, 3].map(|i| per_node[i][pick[i]]);
            let t = run_obbc(&pki, &block, inst, votes, orders);
            schedules += 1;
            let decided: BTreeMap<NodeId, (i64, u64)> = t
                .events
                .iter()
                .filter(|e| e.kind == Kind::OBBC_DECIDE)
                .map(|e| (e.node, (e.val.unwrap(), e.id.unwrap())))
                .collect();
            let tag = format!("votes={votes:?} orders={orders:?}");
            ensure!(
                decided.len() == 4,
                "{tag}: only {} nodes decided",
                decided.len()
            );
            let bits: BTreeSet<i64> = decided.values().map(|d| d.0).collect();
            ensure!(bits.len() == 1, "{tag}: disagreement {decided:?}");
            let bit = *bits.iter().next().unwrap();
            // brute-force rule: own vote plus the first two peer votes to arrive
            let mut any_fast = false;
            for j in 0..4 {
                let expect = votes[j] && votes[orders[j][0]] && votes[orders[j][1]];
                any_fast |= expect;
                ensure!(
                    (decided[&j].1 == 1) == expect,
                    "{tag}: node {j} fast={} expected {expect}",
                    decided[&j].1
                );
            }
            if any_fast {
                fast_runs += 1;
                ensure!(bit == 1, "{tag}: fast path fired but decided {bit}");
            }
            if mask == 0 {
                ensure!(bit == 0, "{tag}: decided 1 without evidence");
            }
            if mask == 15 {
                let slow = t
                    .events
                    .iter()
                    .any(|e| e.msg.is_some_and(|m| m.is_slow_path()));
                ensure!(!slow, "{tag}: unanimous run used the slow path");
            }
        }
    }
    ensure!(schedules >= 10_000, "only {schedules} schedules");
    Ok(format!(
        "{schedules} schedules, {fast_runs} with a fast decider, all match"
    ))
}

// ---- 4 ----

fn c4() -> Outcome {
    let mut worst = 0;
    for n in [4, 7] {
        let f = Scenario::max_f(n);
        for seed in 0..200u64 {
            let byz = (seed as usize * 3 + 1) % n;
            let at = 10 + seed % 15;
            let mut sc = Scenario::new(n, f, seed);
            sc.rounds = at + 40;
            sc.faults.push(Fault {
                node: byz,
                time: 0,
                kind: FaultKind::Byzantine(Strategy::Equivocate(at)),
            });
            let label = format!("n={n} seed={seed}");
            let r = exec(&sc)?;
            clean(&label, &r.trace)?;
            let ev = &r.trace.events;
            let start = ev.iter().position(|e| e.kind == Kind::RECOVERY_START);
            let Some(start) = start else {
                return Err(format!("{label}: equivocation never triggered recovery"));
            };
            let eq_round = ev[..start]
                .iter()
                .filter(|e| e.kind == Kind::TENTATIVE_DECIDE && e.peer == Some(byz))
                .filter_map(|e| e.round)
                .filter(|&x| x >= at)
                .min()
                .ok_or_else(|| format!("{label}: no block by the equivocator before recovery"))?;
            let lag = ev[start].round.unwrap_or(0).saturating_sub(eq_round);
            worst = worst.max(lag);
            ensure!(
                lag <= f as u64 + 1,
                "{label}: recovery {lag} rounds after equivocation"
            );
            let chains = correct_chains(&r, &r.trace);
            let m = chains.iter().map(Vec::len).min().unwrap();
            ensure!(m as u64 >= sc.rounds, "{label}: stalled at {m}");
            ensure!(
                chains.iter().all(|c| c[..m] == chains[0][..m]),
                "{label}: chains differ after recovery"
            );
        }
    }
    Ok(format!(
        "400 runs, recovery at most {worst} rounds after equivocation, chains identical"
    ))
}

// ---- 5 ----

fn c5() -> Outcome {
    let t0 = Instant::now();
    let mut notes = Vec::new();
    for n in [4, 7, 10] {
        let f = Scenario::max_f(n);
        let mut sc = Scenario::new(n, f, 5);
        sc.rounds = 200;
        sc.fd = true;
        let crash_at = 300;
        let crashed: Vec<NodeId> = (0..f).map(|k| 1 + 2 * k).collect();
        for &node in &crashed {
            sc.faults.push(Fault {
                node,
                time: crash_at,
                kind: FaultKind::Crash,
            });
        }
        let label = format!("n={n}");
        let r = exec(&sc)?;
        let t = &r.trace;
        clean(&label, t)?;
        let before = t
            .events
            .iter()
            .filter(|e| e.time <= crash_at && e.kind == Kind::TENTATIVE_DECIDE && e.node == 0)
            .count();
        let rep = report(t);
        ensure!(
            rep.tentative_blocks > before as u64,
            "{label}: no progress after crash"
        );
        ensure!(
            rep.tentative_blocks >= 200,
            "{label}: reached only {}",
            rep.tentative_blocks
        );

        // nil instances: vote, evidence round trip, then BBC; the next
        // proposer pushes its block explicitly afterwards
        let crashed_set: BTreeSet<NodeId> = crashed.iter().copied().collect();
        let nil_keys: BTreeSet<&str> = t
            .events
            .iter()
            .filter(|e| e.kind == Kind::WRB_RETURN && e.val == Some(0) && e.node == 0)
            .map(|e| e.key.as_str())
            .collect();
        for k in &nil_keys {
            let proposer: NodeId = k.rsplit('/').next().unwrap().parse().unwrap();
            ensure!(
                crashed_set.contains(&proposer),
                "{label}: nil for live proposer {proposer}"
            );
            let has = |kind: Kind, m: &str| {
                t.events.iter().any(|e| {
                    e.node == 0
                        && e.kind == kind
                        && e.msg.is_some_and(|x| x.name() == m)
                        && e.key == *k
                })
            };
            ensure!(
                has(Kind::BCAST, "OBBC_EV_REQ"),
                "{label}: {k} skipped the evidence exchange"
            );
            ensure!(
                t.events
                    .iter()
                    .any(|e| e.node == 0 && e.kind == Kind::BBC_DECIDE && e.key.ends_with(k)),
                "{label}: {k} decided without BBC"
            );
        }
        ensure!(
            !nil_keys.is_empty(),
            "{label}: crashed proposers never reached"
        );
        // after the detector has settled, crashed proposers cost no timer wait
        let end = t.events.last().unwrap().time;
        let settle = crash_at + (end - crash_at) / 2;
        let waits = t
            .events
            .iter()
            .filter(|e| e.time > settle && e.kind == Kind::TIMER && e.key.starts_with("wrb/"))
            .filter(|e| {
                let p: NodeId = e.key.rsplit('/').next().unwrap().parse().unwrap();
                crashed_set.contains(&p)
            })
            .count();
        ensure!(
            waits == 0,
            "{label}: {waits} timer waits on suspected proposers in steady state"
        );
        ensure!(rep.suspicions > 0, "{label}: detector never suspected");
        notes.push(format!("{label} {} nil", nil_keys.len()));
    }
    ensure!(
        t0.elapsed() < Duration::from_secs(30),
        "took {:?}",
        t0.elapsed()
    );
    Ok(notes.join(", "))
}

// ---- 6 ----

fn c6() -> Outcome {
    let mut checked = 0;
    for n in [4, 7, 10] {
        let f = Scenario::max_f(n) as u64;
        for (seed, delta) in [(0, 1), (1, 5), (2, 5), (3, 3)] {
            let sc = fault_free(n, seed, 150, delta);
            let r = exec(&sc)?;
            let label = format!("n={n} seed={seed}");
            clean(&label, &r.trace)?;
            let mut last: BTreeMap<NodeId, (Kind, u64)> = BTreeMap::new();
            let mut seen: BTreeMap<NodeId, u64> = BTreeMap::new();
            for e in &r.trace.events {
                if !matches!(e.kind, Kind::TENTATIVE_DECIDE | Kind::DEFINITE_DECIDE) {
                    continue;
                }
                let rd = e.round.unwrap();
                if e.kind == Kind::DEFINITE_DECIDE {
                    let prev = last.get(&e.node).copied();
                    ensure!(
                        prev == Some((Kind::TENTATIVE_DECIDE, rd + f + 2)),
                        "{label}: node {} definite {rd} after {prev:?}",
                        e.node
                    );
                    *seen.entry(e.node).or_default() += 1;
                    checked += 1;
                }
                last.insert(e.node, (e.kind, rd));
            }
            for i in 0..n {
                let tent = r.nodes[i].chain().len() as u64;
                ensure!(
                    seen.get(&i).copied().unwrap_or(0) == tent.saturating_sub(f + 2),
                    "{label}: node {i} has {:?} definite for {tent} blocks",
                    seen.get(&i)
                );
            }
        }
    }
    Ok(format!("{checked} definite decisions, each in round r+f+2"))
}

// ---- 7 ----

fn c7() -> Outcome {
    let mut windows = 0usize;
    let mut runs = 0;
    for seed in 0..60u64 {
        let mut sc = match seed % 4 {
            0 => fault_free(4 + 3 * (seed as usize % 3), seed, 80, 5),
            1 => mixed_faults(seed),
            2 => {
                let mut sc = Scenario::new(7, 2, seed);
                sc.rounds = 60;
                sc.faults.push(Fault {
                    node: seed as usize % 7,
                    time: 0,
                    kind: FaultKind::Byzantine(Strategy::Equivocate(12)),
                });
                sc
            }
            _ => {
                let mut sc = Scenario::new(4, 1, seed);
                sc.rounds = 60;
                sc.faults.push(Fault {
                    node: 2,
                    time: 0,
                    kind: FaultKind::Byzantine(Strategy::BadLink(9)),
                });
                sc
            }
        };
        if seed % 2 == 0 {
            sc.permute_every = 5;
        }
        let r = exec(&sc)?;
        clean(&format!("seed {seed}"), &r.trace)?;
        let faulty = r.trace.faulty();
        let f = sc.f;
        for i in (0..sc.n).filter(|i| !faulty.contains(i)) {
            let chain = r.nodes[i].chain();
            for w in chain.windows(f + 1) {
                let ps: BTreeSet<NodeId> = w.iter().map(|b| b.proposer()).collect();
                ensure!(
                    ps.len() == f + 1,
                    "seed {seed}: node {i} window at round {} repeats",
                    w[0].round()
                );
                windows += 1;
            }
        }
        runs += 1;
    }
    Ok(format!(
        "{runs} runs, {windows} windows of f+1 blocks all distinct"
    ))
}

// ---- 8 ----

fn c8() -> Outcome {
    let t0 = Instant::now();
    let mut notes = Vec::new();
    for n in [4, 7, 10] {
        let mut sc = fault_free(n, 8, 300, 5);
        sc.tx_interval = 2;
        sc.heartbeat = true;
        let r = exec(&sc)?;
        clean(&format!("n={n}"), &r.trace)?;
        let rep = report(&r.trace);
        let share = rep.nonempty_definite_blocks as f64 / rep.definite_blocks.max(1) as f64;
        ensure!(
            share >= 0.99,
            "n={n}: only {:.3} of definite blocks non-empty",
            share
        );
        notes.push(format!("n={n} {:.1}%", share * 100.0));
    }
    ensure!(
        t0.elapsed() < Duration::from_secs(10),
        "took {:?}",
        t0.elapsed()
    );
    Ok(notes.join(", "))
}

// ---- 9 ----

fn c9() -> Outcome {
    let mut worst = 0usize;
    let mut runs = 0;
    for n in [4, 7] {
        let f = Scenario::max_f(n);
        for seed in 0..20u64 {
            let mut sc = Scenario::new(n, f, seed);
            sc.rounds = 60;
            sc.gst = 4000;
            sc.pre_gst_delay_max = 400;
            sc.fd = seed % 2 == 1;
            match seed % 3 {
                0 => {}
                1 => sc.faults.push(Fault {
                    node: 1,
                    time: 0,
                    kind: FaultKind::Crash,
                }),
                _ => sc.faults.push(Fault {
                    node: 2,
                    time: 0,
                    kind: FaultKind::Byzantine(Strategy::Equivocate(3)),
                }),
            }
            let label = format!("n={n} seed={seed}");
            let r = exec(&sc)?;
            let t = &r.trace;
            clean(&label, t)?;
            // instances attempted after GST before the first post-GST block
            let first = t
                .events
                .iter()
                .position(|e| e.time >= sc.gst && e.kind == Kind::TENTATIVE_DECIDE && e.node == 0)
                .ok_or_else(|| format!("{label}: nothing decided after GST"))?;
            let nils: BTreeSet<&str> = t.events[..first]
                .iter()
                .filter(|e| e.time >= sc.gst && e.kind == Kind::WRB_RETURN && e.val == Some(0))
                .map(|e| e.key.as_str())
                .collect();
            worst = worst.max(nils.len());
            ensure!(
                nils.len() <= 50,
                "{label}: {} nil rounds after GST before progress",
                nils.len()
            );
            runs += 1;
        }
    }
    Ok(format!(
        "{runs} runs safe; first post-GST block after at most {worst} nil rounds"
    ))
}

// ---- 10 ----

fn c10() -> Outcome {
    let mut scenarios = vec![fault_free(4, 10, 60, 5), mixed_faults(3), mixed_faults(77)];
    let mut eq = Scenario::new(7, 2, 4);
    eq.rounds = 50;
    eq.header_mode = true;
    eq.faults.push(Fault {
        node: 3,
        time: 0,
        kind: FaultKind::Byzantine(Strategy::Equivocate(10)),
    });
    scenarios.push(eq);
    let mut pre = Scenario::new(4, 1, 5);
    pre.gst = 1500;
    pre.rounds = 40;
    scenarios.push(pre);
    let mut bytes = 0;
    for (k, sc) in scenarios.iter().enumerate() {
        let a = exec(sc)?.trace.to_text();
        let b = exec(sc)?.trace.to_text();
        ensure!(a == b, "scenario {k}: traces differ");
        // a different seed must actually change the run
        let mut other = sc.clone();
        other.seed += 1000;
        ensure!(
            exec(&other)?.trace.to_text() != a,
            "scenario {k}: seed has no effect"
        );
        bytes += a.len();
    }
    Ok(format!(
        "{} scenarios, {bytes} trace bytes identical on rerun",
        scenarios.len()
    ))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("1 fast-path cost", c1),
        ("2 WRB agreement", c2),
        ("3 OBBC exhaustive", c3),
        ("4 equivocation safety", c4),
        ("5 crash liveness", c5),
        ("6 definite latency", c6),
        ("7 rotation", c7),
        ("8 non-triviality", c8),
        ("9 pre-GST", c9),
        ("10 determinism", c10),
    ];
    panic::set_hook(Box::new(|_| {}));
    let handles: Vec<_> = criteria
        .iter()
        .map(|&(name, f)| {
            (
                name,
                thread::spawn(move || {
                    let t0 = Instant::now();
                    let out = f();
                    (out, t0.elapsed())
                }),
            )
        })
        .collect();
    let mut failed = 0;
    for (name, h) in handles {
        let (out, took) = match h.join() {
            Ok(x) => x,
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (Err(format!("panic: {msg}")), Duration::ZERO)
            }
        };
        match out {
            Ok(msg) => println!("criterion {name}: PASS ({msg}; {:.1}s)", took.as_secs_f64()),
            Err(msg) => {
                failed += 1;
                println!("criterion {name}: FAIL ({msg})");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
