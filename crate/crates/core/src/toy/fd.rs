//! Benign failure detector: suspect the `f` nodes we have waited on the most.

use std::collections::BTreeMap;

use crate::netsim::Time;
use crate::NodeId;

#[derive(Clone, Debug)]
pub struct FailureDetector {
    f: usize,
    threshold: Time,
    /// Accumulated waiting beyond the threshold.
    scores: BTreeMap<NodeId, Time>,
}

impl FailureDetector {
    pub fn new(f: usize, threshold: Time) -> FailureDetector {
        FailureDetector {
            f,
            threshold,
            scores: BTreeMap::new(),
        }
    }

    /// A wait on `node` lasted `waited` time units. Returns true when it
    /// breached the threshold.
    pub fn record_wait(&mut self, node: NodeId, waited: Time) -> bool {
        if waited <= self.threshold {
            return false;
        }
        *self.scores.entry(node).or_default() += waited - self.threshold;
        true
    }

    /// `node` delivered in time.
    pub fn delivered(&mut self, node: NodeId) {
        self.scores.remove(&node);
    }

    pub fn clear(&mut self) {
        self.scores.clear();
    }

    /// At most `f` nodes, highest score first.
    pub fn suspects(&self) -> Vec<NodeId> {
        let mut v: Vec<_> = self.scores.iter().map(|(&n, &s)| (n, s)).collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        v.into_iter().take(self.f).map(|(n, _)| n).collect()
    }

    pub fn is_suspected(&self, node: NodeId) -> bool {
        self.suspects().contains(&node)
    }
}
