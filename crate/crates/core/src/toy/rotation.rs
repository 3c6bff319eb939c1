//! Proposer order and the rotation rule.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::block::{Block, Round};
use crate::crypto::Digest;
use crate::NodeId;

/// Pseudo-random permutation of `0..n` seeded by a block digest.
pub fn permutation(n: usize, seed: &Digest) -> Vec<NodeId> {
    let mut order: Vec<NodeId> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::from_seed(seed.0));
    order
}

/// Proposer order in force for `round`. With `every = k > 0`, rounds in
/// `[jk, (j+1)k)` use the permutation seeded by the block at `jk − (f+2)`,
/// which is definite by the time any node reaches round `jk`.
pub fn order_for_round(
    n: usize,
    f: usize,
    every: u64,
    chain: &[Block],
    round: Round,
) -> Vec<NodeId> {
    if let Some(epochs) = round.checked_div(every) {
        let jk = epochs * every;
        let lag = f as u64 + 2;
        if jk >= lag {
            if let Some(b) = chain.get((jk - lag) as usize) {
                return permutation(n, &b.digest());
            }
        }
    }
    (0..n).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Selection {
    pub proposer: NodeId,
    /// Some candidate was passed over because it proposed recently.
    pub skipped: bool,
}

/// First candidate at or after `cursor` (in `order`) that is not excluded.
pub fn select(order: &[NodeId], cursor: usize, excluded: &[NodeId]) -> Selection {
    let n = order.len();
    for i in 0..n {
        let cand = order[(cursor + i) % n];
        if !excluded.contains(&cand) {
            return Selection {
                proposer: cand,
                skipped: i > 0,
            };
        }
    }
    unreachable!("fewer than n proposers are ever excluded")
}

/// Proposer for the next attempt on top of `chain`. `after` is the proposer
/// of the previous (nil) attempt of the same round, if any; otherwise the
/// cursor starts after the tip's proposer. Proposers of the last `f` blocks
/// are excluded.
pub fn next_proposer(
    n: usize,
    f: usize,
    every: u64,
    chain: &[Block],
    after: Option<NodeId>,
) -> Selection {
    let order = order_for_round(n, f, every, chain, chain.len() as Round);
    let pos = |p: NodeId| {
        order
            .iter()
            .position(|&x| x == p)
            .expect("proposer in order")
    };
    let cursor = match after.or_else(|| chain.last().map(|b| b.proposer())) {
        Some(p) => pos(p) + 1,
        None => 0,
    };
    let excluded: Vec<NodeId> = chain.iter().rev().take(f).map(|b| b.proposer()).collect();
    select(&order, cursor, &excluded)
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;
    use crate::block::genesis_digest;
    use crate::crypto::{hash, Pki};
    use proptest::prelude::*;

    #[test]
    fn skips_recent_proposer() {
        let order: Vec<_> = (0..4).collect();
        assert_eq!(select(&order, 1, &[1]).proposer, 2);
        assert!(select(&order, 1, &[1]).skipped);
    }

    #[test]
    fn nil_rounds_do_not_exclude() {
        // p2 was skipped (nil), last decided block is by p1
        let order: Vec<_> = (0..4).collect();
        let s = select(&order, 2, &[1]);
        assert_eq!(
            s,
            Selection {
                proposer: 2,
                skipped: false
            }
        );
    }

    #[test]
    fn skips_last_f_proposers() {
        let order: Vec<_> = (0..7).collect();
        assert_eq!(select(&order, 3, &[3, 4]).proposer, 5);
    }

    #[test]
    fn round_robin_on_fault_free_chain() {
        let pki = Pki::new(0, 4);
        let mut chain: Vec<Block> = Vec::new();
        for r in 0..12 {
            let p = next_proposer(4, 1, 0, &chain, None).proposer;
            assert_eq!(p, r % 4);
            let prev = chain.last().map_or_else(genesis_digest, |b| b.digest());
            chain.push(Block::signed(pki.keypair(p), r as u64, 0, prev, vec![]));
        }
    }

    #[test]
    fn distinct_seeds_rarely_collide() {
        let perms: BTreeSet<_> = (0..100u64)
            .map(|i| permutation(10, &hash(&i.to_le_bytes())))
            .collect();
        // 10! orders; a handful of collisions would already be suspicious
        assert!(perms.len() >= 99, "{} distinct", perms.len());
    }

    proptest! {
        #[test]
        fn permutation_is_deterministic_bijection(n in 1usize..20, seed in any::<[u8; 32]>()) {
            let p = permutation(n, &Digest(seed));
            prop_assert_eq!(&p, &permutation(n, &Digest(seed)));
            let set: BTreeSet<_> = p.iter().copied().collect();
            prop_assert_eq!(set, (0..n).collect::<BTreeSet<_>>());
        }

        #[test]
        fn rotation_windows_are_distinct(
            n in 4usize..11,
            every in 0u64..6,
            nils in proptest::collection::vec(0usize..3, 40),
        ) {
            // arbitrary nil attempts between decisions never break the window rule
            let f = (n - 1) / 3;
            let pki = Pki::new(3, n);
            let mut chain: Vec<Block> = Vec::new();
            for (r, k) in nils.iter().enumerate() {
                let mut s = next_proposer(n, f, every, &chain, None);
                for _ in 0..*k {
                    s = next_proposer(n, f, every, &chain, Some(s.proposer));
                }
                let prev = chain.last().map_or_else(genesis_digest, |b| b.digest());
                chain.push(Block::signed(pki.keypair(s.proposer), r as u64, 0, prev, vec![]));
            }
            for w in chain.windows(f + 1) {
                let set: BTreeSet<_> = w.iter().map(|b| b.proposer()).collect();
                prop_assert_eq!(set.len(), f + 1);
            }
        }
    }
}
