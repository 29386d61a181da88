//! Analysis toolkit for sandwich attacks on constant-product pools.
//!
//! Three things live here:
//!
//! * the adversary's side: how large a front-run a given trade admits and
//!   what it earns ([`attack`]);
//! * the trader's side: picking a slippage tolerance that either prices the
//!   attack out entirely or, when that is impossible, balances attack losses
//!   against the cost of failed transactions ([`policy`], backed by the
//!   windowed block statistics in [`stats`]);
//! * a replay harness that runs both the adaptive tolerance and a constant
//!   auto-slippage baseline over historical reserve series and compares
//!   realized costs ([`replay`], fed by [`data`]).
//!
//! # Quick example
//!
//! ```
//! use sandwich::cpmm::{PoolState, TradeIntent};
//! use sandwich::attack::{optimal_attack, BindingConstraint};
//!
//! let pool = PoolState::new(100.0, 100.0, 0.003, 0).unwrap();
//! // 10 X in, 1% tolerance, no base fee.
//! let intent = TradeIntent::new(10.0, 0.01, 0.0, pool).unwrap();
//! let plan = optimal_attack(&intent, 0.0).unwrap();
//! assert_eq!(plan.binding_constraint, BindingConstraint::SlippageBound);
//! assert!((plan.profit_x - 0.106).abs() < 1e-3);
//! ```

// `!(v > 0.0)` is used deliberately throughout: unlike `v <= 0.0` it also
// rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attack;
pub mod cpmm;
pub mod data;
pub mod error;
pub mod policy;
pub mod replay;
pub mod stats;

pub use error::{Error, Result};

// Keep the guide's code blocks compiling: every chapter is doc-tested here.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/pool-math.md")]
    mod pool_math {}
    #[doc = include_str!("../../../book/src/attack-analysis.md")]
    mod attack_analysis {}
    #[doc = include_str!("../../../book/src/slippage-statistics.md")]
    mod slippage_statistics {}
    #[doc = include_str!("../../../book/src/setting-slippage.md")]
    mod setting_slippage {}
    #[doc = include_str!("../../../book/src/replay.md")]
    mod replay {}
}
