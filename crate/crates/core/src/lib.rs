pub mod ddpg;
pub mod error;
pub mod ga;
pub mod harness;
pub mod highlevel;
pub mod matsuoka;
pub mod mlp;
pub mod network;
pub mod plant;
pub mod rollout;
pub mod seeds;

pub use error::{Error, Result};
