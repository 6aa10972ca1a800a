//! Multi-agent deep Q-learning routing.

pub mod ddqn;
pub mod replay;
pub mod reward;
pub mod state;
pub mod policy;
