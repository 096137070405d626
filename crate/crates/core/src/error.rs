use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("feature matrix is rank deficient: {0}")]
    FeatureRank(String),

    #[error("reward {reward} exceeds the declared bound {bound}")]
    RewardBound { reward: f64, bound: f64 },

    #[error("non-finite {what} at actor iteration {iteration}")]
    NonFinite { what: &'static str, iteration: usize },

    #[error("malformed MDP file: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
