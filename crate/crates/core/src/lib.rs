//! AxeChain: a proof-of-work chain whose mining effort goes into
//! user-submitted search problems.

pub mod chain;
pub mod config;
pub mod contracts;
pub mod economy;
pub mod miner;
pub mod primitives;
pub mod proof;
pub mod pvm;
pub mod security;
pub mod simnet;
