//! Constant-product pool arithmetic: swap quoting, inverse quoting, state
//! transitions, and spot prices.
//!
//! A pool holds reserves `x` and `y`. A trader sending `d` tokens X receives
//!
//! ```text
//! out = y * (1 - f) * d / (x + (1 - f) * d)
//! ```
//!
//! where `f` is the fee charged on the input. With `f = 0` the product of the
//! reserves is preserved exactly; with `f > 0` it grows with every swap.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reserves of an X<->Y pool at a given block height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoolState {
    pub reserve_x: f64,
    pub reserve_y: f64,
    /// Fraction of the input charged as fee, in `[0, 1)`.
    pub fee: f64,
    pub block: u64,
}

impl PoolState {
    pub fn new(reserve_x: f64, reserve_y: f64, fee: f64, block: u64) -> Result<Self> {
        if !(reserve_x > 0.0 && reserve_x.is_finite()) {
            return Err(Error::domain(format!("reserve_x must be positive, got {reserve_x}")));
        }
        if !(reserve_y > 0.0 && reserve_y.is_finite()) {
            return Err(Error::domain(format!("reserve_y must be positive, got {reserve_y}")));
        }
        if !(0.0..1.0).contains(&fee) {
            return Err(Error::domain(format!("fee must be in [0, 1), got {fee}")));
        }
        Ok(PoolState {
            reserve_x,
            reserve_y,
            fee,
            block,
        })
    }

    /// Instantaneous price of Y in units of X: `reserve_x / reserve_y`.
    pub fn spot_price_y_in_x(&self) -> f64 {
        self.reserve_x / self.reserve_y
    }

    /// Instantaneous price of X in units of Y.
    pub fn spot_price_x_in_y(&self) -> f64 {
        self.reserve_y / self.reserve_x
    }
}

/// Tokens Y received for `input_x` tokens X at the current reserves.
pub fn swap_output(pool: &PoolState, input_x: f64) -> Result<f64> {
    if !(input_x > 0.0) {
        return Err(Error::domain(format!("swap input must be positive, got {input_x}")));
    }
    let effective = (1.0 - pool.fee) * input_x;
    let out = pool.reserve_y * effective / (pool.reserve_x + effective);
    if !out.is_finite() {
        return Err(Error::Overflow(format!(
            "swap_output non-finite for input {input_x} at reserves ({}, {})",
            pool.reserve_x, pool.reserve_y
        )));
    }
    if out <= 0.0 {
        // Underflowed to zero: the input is too small to move the pool at all.
        return Err(Error::domain(format!(
            "swap input {input_x} produces zero output at reserves ({}, {})",
            pool.reserve_x, pool.reserve_y
        )));
    }
    Ok(out)
}

/// Tokens X that must be sent to receive exactly `output_y` tokens Y.
///
/// The closed form is validated by a forward quote; if the round trip misses
/// by more than 1e-9 relative, a bisection on the monotone forward map takes
/// over.
pub fn swap_input_for_output(pool: &PoolState, output_y: f64) -> Result<f64> {
    if !(output_y > 0.0) {
        return Err(Error::domain(format!("target output must be positive, got {output_y}")));
    }
    if output_y >= pool.reserve_y {
        return Err(Error::Infeasible {
            requested: output_y,
            reserve: pool.reserve_y,
        });
    }
    let closed = pool.reserve_x * output_y / ((1.0 - pool.fee) * (pool.reserve_y - output_y));
    if let Ok(check) = swap_output(pool, closed) {
        if ((check - output_y) / output_y).abs() <= 1e-9 {
            return Ok(closed);
        }
    }
    bisect_input(pool, output_y)
}

fn bisect_input(pool: &PoolState, output_y: f64) -> Result<f64> {
    let mut lo = 0.0_f64;
    let mut hi = pool.reserve_x.max(1.0);
    let mut guard = 0;
    while swap_output(pool, hi).map(|o| o < output_y).unwrap_or(true) {
        hi *= 2.0;
        guard += 1;
        if guard > 200 || !hi.is_finite() {
            return Err(Error::SearchFailure {
                iters: guard,
                lo,
                hi,
            });
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= 1e-14 * hi.max(1.0) {
            break;
        }
        match swap_output(pool, mid) {
            Ok(o) if o >= output_y => hi = mid,
            _ => lo = mid,
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Executes an X->Y swap, returning the updated pool and the output amount.
pub fn apply_swap(pool: &PoolState, input_x: f64) -> Result<(PoolState, f64)> {
    let out = swap_output(pool, input_x)?;
    let next = PoolState {
        reserve_x: pool.reserve_x + input_x,
        reserve_y: pool.reserve_y - out,
        fee: pool.fee,
        block: pool.block,
    };
    Ok((next, out))
}

/// Executes a Y->X swap (the back-run direction).
pub fn apply_swap_y(pool: &PoolState, input_y: f64) -> Result<(PoolState, f64)> {
    if !(input_y > 0.0) {
        return Err(Error::domain(format!("swap input must be positive, got {input_y}")));
    }
    let effective = (1.0 - pool.fee) * input_y;
    let out = pool.reserve_x * effective / (pool.reserve_y + effective);
    if !out.is_finite() {
        return Err(Error::Overflow(format!(
            "apply_swap_y non-finite for input {input_y}"
        )));
    }
    if out <= 0.0 {
        return Err(Error::domain(format!(
            "swap input {input_y} produces zero output at reserves ({}, {})",
            pool.reserve_x, pool.reserve_y
        )));
    }
    let next = PoolState {
        reserve_x: pool.reserve_x - out,
        reserve_y: pool.reserve_y + input_y,
        fee: pool.fee,
        block: pool.block,
    };
    Ok((next, out))
}

/// A trader's broadcast swap: amount in, tolerance, and the pool it quotes
/// against. The base fee is carried in token Y units so the attackability
/// test `s * out >= 2b` stays in one currency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TradeIntent {
    /// Tokens X the victim sends.
    pub input_x: f64,
    /// Slippage tolerance in `(0, 1]`; `1.0` means no tolerance set.
    pub slippage: f64,
    pub fee: f64,
    /// Per-transaction base fee expressed in token Y units.
    pub base_fee_y: f64,
    pub pool: PoolState,
}

impl TradeIntent {
    pub fn new(input_x: f64, slippage: f64, base_fee_y: f64, pool: PoolState) -> Result<Self> {
        if !(input_x > 0.0 && input_x.is_finite()) {
            return Err(Error::domain(format!("trade input must be positive, got {input_x}")));
        }
        if !(slippage > 0.0 && slippage <= 1.0) {
            return Err(Error::domain(format!(
                "slippage must be in (0, 1], got {slippage}"
            )));
        }
        if !(base_fee_y >= 0.0 && base_fee_y.is_finite()) {
            return Err(Error::domain(format!(
                "base fee must be non-negative, got {base_fee_y}"
            )));
        }
        let intent = TradeIntent {
            input_x,
            slippage,
            fee: pool.fee,
            base_fee_y,
            pool,
        };
        // Must quote to a positive output.
        expected_output(&intent)?;
        Ok(intent)
    }

    /// Lowest output the trader accepts before the trade reverts.
    pub fn min_output(&self) -> Result<f64> {
        Ok((1.0 - self.slippage) * expected_output(self)?)
    }
}

/// The output the trader anticipates if the pool does not move before
/// execution.
pub fn expected_output(intent: &TradeIntent) -> Result<f64> {
    swap_output(&intent.pool, intent.input_x)
}
