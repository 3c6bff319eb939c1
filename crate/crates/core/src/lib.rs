//! Deterministic simulation of an optimistic, rotating-proposer BFT
//! blockchain: a weak reliable broadcast feeds an optimistic binary
//! consensus each round, blocks become definite f+2 rounds after being
//! decided, and proven misbehaviour triggers an atomic-broadcast recovery.

pub mod adversary;
pub mod block;
pub mod crypto;
pub mod ctx;
pub mod harness;
pub mod msg;
pub mod netsim;
pub mod obbc;
pub mod rbcast;
pub mod toy;
pub mod wrb;

#[cfg(test)]
mod testutil;

pub type NodeId = usize;
