//! Deterministic simulator and verification harness for a semiquantum
//! proxy blind signature protocol built on χ-state teleportation.

pub mod analysis;
pub mod channels;
pub mod chi_teleport;
pub mod cli;
pub mod crypto_keys;
pub mod lab;
pub mod party;
pub mod protocol;
pub mod quantum_core;
pub mod transcript;
