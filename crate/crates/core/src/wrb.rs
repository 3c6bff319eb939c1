//! Weak reliable broadcast building blocks: the adaptive wait timer and the
//! store of received proposals. The deliver/skip loop itself lives in the
//! node, which drives one WRB instance per attempt.

use std::collections::BTreeMap;

use crate::block::{Block, Epoch, Round};
use crate::crypto::Digest;
use crate::netsim::Time;
use crate::NodeId;

/// Wait timer. Doubles on a skip; on success it moves toward the observed
/// delay as an exponential moving average over `window` samples.
#[derive(Clone, Debug)]
pub struct WrbTimer {
    current: f64,
    window: u32,
    min: f64,
    max: f64,
}

impl WrbTimer {
    pub fn new(init: Time, window: u32, max: Time) -> WrbTimer {
        WrbTimer {
            current: init.max(1) as f64,
            window: window.max(1),
            min: 1.0,
            max: max.max(1) as f64,
        }
    }

    /// Lower bound for the adapted value (at least 1).
    pub fn with_min(mut self, min: Time) -> WrbTimer {
        self.min = (min.max(1) as f64).min(self.max);
        self.current = self.current.max(self.min);
        self
    }

    pub fn current(&self) -> f64 {
        self.current
    }

    /// Wait duration in whole time units.
    pub fn wait(&self) -> Time {
        self.current.ceil() as Time
    }

    pub fn skip(&mut self) {
        self.current = (self.current * 2.0).min(self.max);
    }

    pub fn success(&mut self, observed: Time) {
        let alpha = 2.0 / (self.window as f64 + 1.0);
        self.current =
            (alpha * observed as f64 + (1.0 - alpha) * self.current).clamp(self.min, self.max);
    }
}

#[derive(Clone, Copy, Debug)]
struct Arrival {
    at: Time,
    delay: Time,
}

#[derive(Clone, Debug, Default)]
struct Entry {
    header: Option<Arrival>,
    body: Option<(Block, Arrival)>,
}

/// Proposals received so far. A proposal counts as held once both its
/// announcement (the pushed or piggybacked block, header-only in header
/// mode) and its full body are present.
#[derive(Clone, Debug, Default)]
pub struct BlockStore {
    entries: BTreeMap<Digest, Entry>,
    by_slot: BTreeMap<(Epoch, Round, NodeId), Vec<Digest>>,
}

impl BlockStore {
    pub fn new() -> BlockStore {
        BlockStore::default()
    }

    pub fn knows(&self, d: &Digest) -> bool {
        self.entries.contains_key(d)
    }

    pub fn has_body(&self, d: &Digest) -> bool {
        self.entries.get(d).is_some_and(|e| e.body.is_some())
    }

    fn entry(&mut self, b: &Block) -> &mut Entry {
        let d = b.digest();
        if !self.entries.contains_key(&d) {
            self.by_slot
                .entry((b.epoch(), b.round(), b.proposer()))
                .or_default()
                .push(d);
        }
        self.entries.entry(d).or_default()
    }

    /// Record an announced (already verified) proposal.
    pub fn announce(&mut self, b: &Block, at: Time, delay: Time) {
        let e = self.entry(b);
        e.header.get_or_insert(Arrival { at, delay });
        if b.is_full() && e.body.is_none() {
            e.body = Some((b.clone(), Arrival { at, delay }));
        }
    }

    /// Record a body received through the data path.
    pub fn body(&mut self, b: &Block, at: Time, delay: Time) {
        debug_assert!(b.is_full());
        let e = self.entry(b);
        if e.body.is_none() {
            e.body = Some((b.clone(), Arrival { at, delay }));
        }
    }

    /// A held proposal by `proposer` for `(epoch, round)`, preferring one that
    /// extends `tip`, with the transfer delay of whichever half completed it.
    pub fn held(
        &self,
        epoch: Epoch,
        round: Round,
        proposer: NodeId,
        tip: &Digest,
    ) -> Option<(Block, Time)> {
        let ds = self.by_slot.get(&(epoch, round, proposer))?;
        let complete = ds.iter().filter_map(|d| {
            let e = &self.entries[d];
            let h = e.header?;
            let (b, a) = e.body.as_ref()?;
            let last = if a.at >= h.at { a } else { &h };
            Some((b, last.delay))
        });
        let mut first = None;
        for (b, delay) in complete {
            if b.prev() == *tip {
                return Some((b.clone(), delay));
            }
            first.get_or_insert((b.clone(), delay));
        }
        first
    }

    /// Any full block (announced or not) for the slot, to answer pulls.
    pub fn any_full(&self, epoch: Epoch, round: Round, proposer: NodeId) -> Option<Block> {
        self.by_slot
            .get(&(epoch, round, proposer))?
            .iter()
            .find_map(|d| self.entries[d].body.as_ref().map(|(b, _)| b.clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::block::genesis_digest;
    use crate::crypto::Pki;
    use proptest::prelude::*;

    #[test]
    fn skip_doubles_and_caps() {
        let mut t = WrbTimer::new(4, 9, 20);
        t.skip();
        assert_eq!(t.current(), 8.0);
        t.skip();
        t.skip();
        assert_eq!(t.current(), 20.0);
    }

    #[test]
    fn ema_step() {
        let mut t = WrbTimer::new(10, 9, 1000);
        t.success(5);
        assert!((t.current() - (0.2 * 5.0 + 10.0 * 0.8)).abs() < 1e-9);
    }

    #[test]
    fn floor_is_one() {
        let mut t = WrbTimer::new(2, 1, 100);
        t.success(0);
        assert_eq!(t.current(), 1.0);
        assert_eq!(t.wait(), 1);
    }

    /// Independent closed form: after k steps the distance to d shrinks by (1−α)^k.
    fn closed_form(init: f64, d: f64, n: u32, k: i32) -> f64 {
        let a = 2.0 / (n as f64 + 1.0);
        d + (init - d) * (1.0 - a).powi(k)
    }

    proptest! {
        #[test]
        fn converges_to_constant_delay(init in 1u64..200, d in 1u64..50, n in 1u32..20) {
            let mut t = WrbTimer::new(init, n, 1000);
            for _ in 0..50 {
                t.success(d);
            }
            prop_assert!((t.current() - closed_form(init as f64, d as f64, n, 50)).abs() < 1e-6);
            prop_assert!((t.current() - d as f64).abs() <= 1.0);
        }

        #[test]
        fn timer_stays_positive(ops in proptest::collection::vec(proptest::option::of(0u64..30), 0..100)) {
            let mut t = WrbTimer::new(4, 9, 500);
            for op in ops {
                match op {
                    Some(d) => t.success(d),
                    None => t.skip(),
                }
                prop_assert!(t.current() >= 1.0 && t.current() <= 500.0);
            }
        }
    }

    #[test]
    fn held_needs_header_and_body() {
        let pki = Pki::new(0, 4);
        let g = genesis_digest();
        let b = Block::signed(pki.keypair(1), 0, 0, g, vec![b"x".to_vec()]);
        let mut s = BlockStore::new();
        s.body(&b, 3, 2);
        assert!(s.held(0, 0, 1, &g).is_none());
        s.announce(&b.header_only(), 7, 4);
        assert_eq!(s.held(0, 0, 1, &g), Some((b.clone(), 4)));
        assert!(s.held(0, 0, 2, &g).is_none());
    }

    #[test]
    fn held_prefers_block_extending_tip() {
        let pki = Pki::new(0, 4);
        let g = genesis_digest();
        let other = Block::signed(pki.keypair(1), 1, 0, g, vec![]);
        let good = Block::signed(pki.keypair(1), 1, 0, other.digest(), vec![]);
        let mut s = BlockStore::new();
        s.announce(&other, 1, 1);
        s.announce(&good, 2, 1);
        assert_eq!(s.held(0, 1, 1, &other.digest()).unwrap().0, good);
        assert_eq!(s.held(0, 1, 1, &g).unwrap().0, other);
    }
}
