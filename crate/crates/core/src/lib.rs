//! Daily portfolio trading with a TD3 agent.
//!
//! The pipeline is: load and align OHLCV history ([`market_data`]), derive
//! ten technical indicators ([`indicators`]) and daily news sentiment
//! ([`sentiment`]), then train and evaluate an actor-critic agent
//! ([`td3`]) inside a constrained trading environment ([`env`]).
//! [`backtest`] drives episodes and computes return, Sharpe ratio and
//! commission statistics across seeds.

pub mod backtest;
pub mod env;
pub mod indicators;
pub mod market_data;
pub mod neural;
pub mod normalize;
pub mod replay;
pub mod sentiment;
pub mod synthetic;
pub mod td3;
