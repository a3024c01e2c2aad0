//! Finite-alphabet Wiener-filter (FAWP) precoding for the massive MU-MIMO
//! downlink: WF baselines, pre-/post-FAWP structures, FBS solvers, channel
//! models and a Monte-Carlo link simulator.

pub mod channels;
pub mod error;
pub mod exec;
pub mod fawp;
pub mod fbs;
pub mod harness;
pub mod sim;
pub mod tune;
pub mod types;
pub mod wf;

pub use error::{FawpError, Result};
pub use exec::Execution;
pub use types::{
    ChannelMatrix, CMatrix, CVector, Constellation, ConstellationKind, FiniteAlphabet,
    SymbolVector, SystemConfig, C64,
};
