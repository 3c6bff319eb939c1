//! Broadcast and agreement building blocks: reliable broadcast, the full
//! binary consensus used as slow path, and atomic broadcast for recovery.

pub mod ab;
pub mod bbc;
pub mod rb;
