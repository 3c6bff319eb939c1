//! Deterministic discrete-event network.
//!
//! Links are reliable and authenticated: every envelope sent to a live node is
//! delivered exactly once and unmodified. Before GST a link delay is drawn from
//! `[1, pre_gst_delay_max]`, afterwards from `[1, delta]`. Each ordered link has
//! its own RNG stream so that extra traffic on one link never perturbs another.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::crypto::Encoder;
use crate::NodeId;

pub type Time = u64;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("need at least one node")]
    NoNodes,
    #[error("fault budget f={f} violates f < n/3 for n={n}")]
    TooManyFaults { n: usize, f: usize },
    #[error("delta must be positive")]
    ZeroDelta,
    #[error("pre_gst_delay_max must be positive")]
    ZeroPreGstDelay,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimConfig {
    pub n: usize,
    pub f: usize,
    pub seed: u64,
    pub gst: Time,
    pub delta: Time,
    pub pre_gst_delay_max: Time,
}

impl SimConfig {
    pub fn new(n: usize, f: usize, seed: u64) -> SimConfig {
        SimConfig {
            n,
            f,
            seed,
            gst: 0,
            delta: 5,
            pre_gst_delay_max: 100,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n == 0 {
            return Err(ConfigError::NoNodes);
        }
        if 3 * self.f >= self.n {
            return Err(ConfigError::TooManyFaults {
                n: self.n,
                f: self.f,
            });
        }
        if self.delta == 0 {
            return Err(ConfigError::ZeroDelta);
        }
        if self.pre_gst_delay_max == 0 {
            return Err(ConfigError::ZeroPreGstDelay);
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Envelope<M> {
    pub id: u64,
    pub from: NodeId,
    pub to: NodeId,
    pub payload: M,
    pub sent_at: Time,
    pub deliver_at: Time,
    /// Causal depth: number of cross-node hops behind this message.
    pub depth: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TimerId(pub u64);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Control {
    Crash,
    /// Hand the node's outbound traffic to adversary slot `usize`.
    Corrupt(usize),
}

#[derive(Clone, Debug)]
pub enum Event<M, T> {
    Deliver(Envelope<M>),
    /// Envelope whose destination had crashed; consumed without delivery.
    Dropped(Envelope<M>),
    Timer {
        node: NodeId,
        id: TimerId,
        tag: T,
    },
    Control {
        node: NodeId,
        action: Control,
    },
}

struct Entry<M, T> {
    time: Time,
    seq: u64,
    event: Event<M, T>,
}

impl<M, T> PartialEq for Entry<M, T> {
    fn eq(&self, other: &Self) -> bool {
        (self.time, self.seq) == (other.time, other.seq)
    }
}
impl<M, T> Eq for Entry<M, T> {}
impl<M, T> PartialOrd for Entry<M, T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<M, T> Ord for Entry<M, T> {
    // min-heap on (time, seq)
    fn cmp(&self, other: &Self) -> Ordering {
        (other.time, other.seq).cmp(&(self.time, self.seq))
    }
}

/// Optional override of the delay distribution, used by exhaustive schedule tests.
pub type DelayFn<M> = Box<dyn FnMut(NodeId, NodeId, Time, &M) -> Time>;

pub struct Network<M, T> {
    cfg: SimConfig,
    now: Time,
    seq: u64,
    next_msg: u64,
    next_timer: u64,
    queue: BinaryHeap<Entry<M, T>>,
    links: Vec<ChaCha8Rng>,
    alive: Vec<bool>,
    cancelled: HashSet<TimerId>,
    delay_override: Option<DelayFn<M>>,
}

impl<M: Clone, T> Network<M, T> {
    pub fn new(cfg: SimConfig) -> Result<Network<M, T>, ConfigError> {
        cfg.validate()?;
        let n = cfg.n;
        let links = (0..n * n)
            .map(|i| {
                let mut e = Encoder::new();
                e.str("link")
                    .u64(cfg.seed)
                    .u64((i / n) as u64)
                    .u64((i % n) as u64);
                ChaCha8Rng::seed_from_u64(e.hash().prefix_u64())
            })
            .collect();
        Ok(Network {
            cfg,
            now: 0,
            seq: 0,
            next_msg: 0,
            next_timer: 0,
            queue: BinaryHeap::new(),
            links,
            alive: vec![true; n],
            cancelled: HashSet::new(),
            delay_override: None,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn now(&self) -> Time {
        self.now
    }

    pub fn is_alive(&self, node: NodeId) -> bool {
        self.alive[node]
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    pub fn set_delay_override(&mut self, f: DelayFn<M>) {
        self.delay_override = Some(f);
    }

    fn push(&mut self, time: Time, event: Event<M, T>) {
        let seq = self.seq;
        self.seq += 1;
        self.queue.push(Entry { time, seq, event });
    }

    fn draw_delay(&mut self, from: NodeId, to: NodeId, payload: &M) -> Time {
        if let Some(f) = self.delay_override.as_mut() {
            return f(from, to, self.now, payload);
        }
        if from == to {
            return 0;
        }
        let max = if self.now < self.cfg.gst {
            self.cfg.pre_gst_delay_max
        } else {
            self.cfg.delta
        };
        self.links[from * self.cfg.n + to].gen_range(1..=max)
    }

    /// Enqueue one envelope. Returns `None` when the sender has crashed.
    pub fn send(
        &mut self,
        from: NodeId,
        to: NodeId,
        payload: M,
        depth: u32,
        extra_delay: Time,
    ) -> Option<Envelope<M>> {
        if !self.alive[from] {
            return None;
        }
        let delay = self.draw_delay(from, to, &payload) + extra_delay;
        let env = Envelope {
            id: self.next_msg,
            from,
            to,
            payload,
            sent_at: self.now,
            deliver_at: self.now + delay,
            depth,
        };
        self.next_msg += 1;
        self.push(env.deliver_at, Event::Deliver(env.clone()));
        Some(env)
    }

    /// One send per node, the sender included.
    pub fn broadcast(&mut self, from: NodeId, payload: M, depth: u32) -> Vec<Envelope<M>> {
        (0..self.cfg.n)
            .filter_map(|to| self.send(from, to, payload.clone(), depth, 0))
            .collect()
    }

    pub fn set_timer(&mut self, node: NodeId, duration: Time, tag: T) -> TimerId {
        let id = TimerId(self.next_timer);
        self.next_timer += 1;
        let at = self.now + duration;
        self.push(at, Event::Timer { node, id, tag });
        id
    }

    /// Cancelling a timer that already fired is a no-op.
    pub fn cancel_timer(&mut self, id: TimerId) {
        self.cancelled.insert(id);
    }

    pub fn crash(&mut self, node: NodeId, at: Time) {
        self.push(
            at.max(self.now),
            Event::Control {
                node,
                action: Control::Crash,
            },
        );
    }

    pub fn corrupt(&mut self, node: NodeId, slot: usize, at: Time) {
        self.push(
            at.max(self.now),
            Event::Control {
                node,
                action: Control::Corrupt(slot),
            },
        );
    }

    /// Pop the earliest event. `None` means the simulation has nothing left to do.
    pub fn step(&mut self) -> Option<Event<M, T>> {
        loop {
            let Entry { time, event, .. } = self.queue.pop()?;
            debug_assert!(time >= self.now);
            self.now = time;
            match event {
                Event::Deliver(env) if !self.alive[env.to] => return Some(Event::Dropped(env)),
                Event::Timer { id, node, .. }
                    if self.cancelled.remove(&id) || !self.alive[node] =>
                {
                    continue
                }
                Event::Control {
                    node,
                    action: Control::Crash,
                } => {
                    self.alive[node] = false;
                    return Some(Event::Control {
                        node,
                        action: Control::Crash,
                    });
                }
                other => return Some(other),
            }
        }
    }
}
