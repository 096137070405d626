//! Actor-critic with linear critics (TD(0), GTD, accelerated GTD), an exact
//! finite-MDP oracle, and a continuous navigation task.

pub mod actor_critic;
pub mod critic;
pub mod env;
pub mod error;
pub mod features;
pub mod nav;
pub mod oracle;
pub mod policy;

pub use error::{Error, Result};
