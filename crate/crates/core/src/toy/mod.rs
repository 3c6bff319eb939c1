//! The blockchain protocol proper: rotation, block validation, misbehaviour
//! proofs and recovery.

pub mod fd;
pub mod node;
pub mod proof;
pub mod rotation;

pub use node::{Node, NodeConfig};
pub use proof::{MisbehaviorProof, Version};

#[cfg(test)]
impl MisbehaviorProof {
    /// A well-formed proof against the proposer of `round`.
    pub fn sample(pki: &crate::crypto::Pki, round: crate::block::Round) -> MisbehaviorProof {
        use crate::block::{genesis_digest, Block};
        let n = pki.n();
        let prev = (round > 0).then(|| {
            Block::signed(
                pki.keypair((round as usize + n - 1) % n),
                round - 1,
                0,
                genesis_digest(),
                vec![],
            )
        });
        let block = Block::signed(
            pki.keypair(round as usize % n),
            round,
            0,
            crate::crypto::hash(b"elsewhere"),
            vec![b"t".to_vec()],
        );
        MisbehaviorProof { block, prev }
    }
}
