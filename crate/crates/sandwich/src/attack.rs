//! Adversary-side analytics: optimal front-run sizing, attack profitability,
//! and the full front-run / victim / back-run game execution.
//!
//! The printed closed forms for both the unconstrained optimum and the
//! tolerance-bound input are unreliable to transcribe, so the executed game
//! itself is authoritative here: the unconstrained optimum is found by a
//! golden-section search on the (unimodal) profit curve, and the tolerance
//! bound by bisection on the simulated post-front-run victim quote.

use crate::cpmm::{apply_swap, apply_swap_y, expected_output, swap_output, PoolState, TradeIntent};
use crate::error::{Error, Result};

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Which limit determined the attacker's input size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BindingConstraint {
    /// The interior profit maximum was below the tolerance bound.
    UnconstrainedOptimum,
    /// The victim's tolerance capped the front-run.
    SlippageBound,
    /// No input yields positive profit after base fees.
    NoAttack,
}

/// The attacker's sized plan: front-run input, both legs' outputs, and net
/// profit after paying the base fee twice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackPlan {
    pub input_x: f64,
    pub frontrun_output_y: f64,
    pub backrun_output_x: f64,
    /// `backrun_output_x - input_x - 2 * base_fee_x`.
    pub profit_x: f64,
    pub base_fee_x: f64,
    pub binding_constraint: BindingConstraint,
}

impl AttackPlan {
    pub fn no_attack(base_fee_x: f64) -> Self {
        AttackPlan {
            input_x: 0.0,
            frontrun_output_y: 0.0,
            backrun_output_x: 0.0,
            profit_x: 0.0,
            base_fee_x,
            binding_constraint: BindingConstraint::NoAttack,
        }
    }

    pub fn is_attack(&self) -> bool {
        self.binding_constraint != BindingConstraint::NoAttack
    }
}

/// Result of playing out the three-transaction sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GameOutcome {
    pub plan: AttackPlan,
    /// What the victim actually received.
    pub victim_realized_y: f64,
    pub victim_expected_y: f64,
    /// Pool right after the victim's swap, before any back-run: the state at
    /// which the victim's loss is realized and priced.
    pub post_victim_pool: PoolState,
    pub final_pool: PoolState,
}

/// Gross profit of a sandwich with front-run input `input_x`, assuming the
/// victim executes: `backrun_out - input_x`. Used by the optimizers below.
fn sandwich_diff(pool: &PoolState, victim_input_x: f64, input_x: f64) -> Result<f64> {
    let (p1, a_y) = apply_swap(pool, input_x)?;
    let (p2, _) = apply_swap(&p1, victim_input_x)?;
    let (_, out) = apply_swap_y(&p2, a_y)?;
    Ok(out - input_x)
}

/// The front-run size maximizing gross profit when the victim sets no
/// tolerance (`s = 1`).
///
/// With `fee = 0` the profit is strictly increasing in the input, so there is
/// no interior optimum and [`Error::UnboundedOptimum`] is returned.
pub fn optimal_unconstrained_input(pool: &PoolState, victim_input_x: f64) -> Result<f64> {
    if !(victim_input_x > 0.0) {
        return Err(Error::domain(format!(
            "victim input must be positive, got {victim_input_x}"
        )));
    }
    if pool.fee == 0.0 {
        return Err(Error::UnboundedOptimum);
    }

    // Expand a geometric probe until the profit curve turns down. The curve
    // rises from 0, peaks once, then falls (single interior zero crossing of
    // its derivative for fee > 0).
    let mut a = pool.reserve_x * 1e-9;
    let mut fa = sandwich_diff(pool, victim_input_x, a)?;
    let mut prev = a;
    let mut found = None;
    for _ in 0..400 {
        let b = a * 2.0;
        let fb = match sandwich_diff(pool, victim_input_x, b) {
            Ok(v) => v,
            Err(_) => break,
        };
        if fb < fa {
            found = Some((prev, b));
            break;
        }
        prev = a;
        a = b;
        fa = fb;
    }
    let (mut lo, mut hi) = found.ok_or(Error::NoInteriorOptimum)?;

    // Golden-section refinement on [lo, hi].
    let mut m1 = hi - INV_PHI * (hi - lo);
    let mut m2 = lo + INV_PHI * (hi - lo);
    let mut f1 = sandwich_diff(pool, victim_input_x, m1)?;
    let mut f2 = sandwich_diff(pool, victim_input_x, m2)?;
    for _ in 0..200 {
        if hi - lo <= 1e-12 * hi.max(1.0) {
            break;
        }
        if f1 < f2 {
            lo = m1;
            m1 = m2;
            f1 = f2;
            m2 = lo + INV_PHI * (hi - lo);
            f2 = sandwich_diff(pool, victim_input_x, m2)?;
        } else {
            hi = m2;
            m2 = m1;
            f2 = f1;
            m1 = hi - INV_PHI * (hi - lo);
            f1 = sandwich_diff(pool, victim_input_x, m1)?;
        }
    }
    let best = 0.5 * (lo + hi);
    if sandwich_diff(pool, victim_input_x, best)? <= 0.0 {
        return Err(Error::NoInteriorOptimum);
    }
    Ok(best)
}

/// Victim quote after a front-run of size `a`.
fn victim_output_after_frontrun(pool: &PoolState, victim_input_x: f64, a: f64) -> Result<f64> {
    let (p1, _) = apply_swap(pool, a)?;
    swap_output(&p1, victim_input_x)
}

/// The largest front-run input that still lets the victim's trade execute:
/// the `a` with `victim_output_after_frontrun(a) = (1 - s) * expected`.
pub fn max_tolerated_input(pool: &PoolState, victim_input_x: f64, s: f64) -> Result<f64> {
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::domain(format!("slippage must be in (0, 1), got {s}")));
    }
    if !(victim_input_x > 0.0) {
        return Err(Error::domain(format!(
            "victim input must be positive, got {victim_input_x}"
        )));
    }
    let expected = swap_output(pool, victim_input_x)?;
    let target = (1.0 - s) * expected;

    let mut lo = 0.0_f64;
    let mut hi = pool.reserve_x.max(victim_input_x);
    let mut guard = 0;
    while victim_output_after_frontrun(pool, victim_input_x, hi)? > target {
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
    // Output is strictly decreasing in the front-run size.
    for _ in 0..200 {
        if hi - lo <= 1e-15 * hi.max(1e-300) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if victim_output_after_frontrun(pool, victim_input_x, mid)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Sizes the attack for `intent`: the smaller of the interior optimum and the
/// tolerance bound, or no attack at all when net profit is non-positive.
pub fn optimal_attack(intent: &TradeIntent, base_fee_x: f64) -> Result<AttackPlan> {
    if !(base_fee_x >= 0.0) {
        return Err(Error::domain(format!(
            "base fee must be non-negative, got {base_fee_x}"
        )));
    }
    let pool = &intent.pool;

    let unconstrained = match optimal_unconstrained_input(pool, intent.input_x) {
        Ok(v) => Some(v),
        Err(Error::UnboundedOptimum) if intent.slippage < 1.0 => None,
        Err(Error::NoInteriorOptimum) => return Ok(AttackPlan::no_attack(base_fee_x)),
        Err(e) => return Err(e),
    };

    let (input, constraint) = if intent.slippage < 1.0 {
        let bound = max_tolerated_input(pool, intent.input_x, intent.slippage)?;
        match unconstrained {
            Some(opt) if opt <= bound => (opt, BindingConstraint::UnconstrainedOptimum),
            _ => (bound, BindingConstraint::SlippageBound),
        }
    } else {
        // s = 1: only the interior optimum limits the bot; unconstrained is
        // Some here because the fee-free case already returned above.
        (unconstrained.unwrap(), BindingConstraint::UnconstrainedOptimum)
    };

    if input <= 0.0 {
        return Ok(AttackPlan::no_attack(base_fee_x));
    }
    let (p1, frontrun_y) = apply_swap(pool, input)?;
    let (p2, _) = apply_swap(&p1, intent.input_x)?;
    let (_, backrun_x) = apply_swap_y(&p2, frontrun_y)?;
    let profit = backrun_x - input - 2.0 * base_fee_x;
    if profit <= 0.0 {
        return Ok(AttackPlan::no_attack(base_fee_x));
    }
    Ok(AttackPlan {
        input_x: input,
        frontrun_output_y: frontrun_y,
        backrun_output_x: backrun_x,
        profit_x: profit,
        base_fee_x,
        binding_constraint: constraint,
    })
}

/// Plays the three transactions in order. The plan must respect the victim's
/// tolerance or the victim leg reverts.
pub fn execute_sandwich(intent: &TradeIntent, plan: &AttackPlan) -> Result<GameOutcome> {
    let expected = expected_output(intent)?;
    if !plan.is_attack() || plan.input_x == 0.0 {
        let (final_pool, realized) = apply_swap(&intent.pool, intent.input_x)?;
        return Ok(GameOutcome {
            plan: *plan,
            victim_realized_y: realized,
            victim_expected_y: expected,
            post_victim_pool: final_pool,
            final_pool,
        });
    }

    let (p1, a_y) = apply_swap(&intent.pool, plan.input_x)?;
    let realized_quote = swap_output(&p1, intent.input_x)?;
    let tolerated = (1.0 - intent.slippage) * expected;
    // Allow float noise when the plan binds the tolerance exactly.
    if realized_quote < tolerated * (1.0 - 1e-9) {
        return Err(Error::VictimReverted {
            realized: realized_quote,
            tolerated,
        });
    }
    let (p2, realized) = apply_swap(&p1, intent.input_x)?;
    let (final_pool, _backrun_x) = apply_swap_y(&p2, a_y)?;
    Ok(GameOutcome {
        plan: *plan,
        victim_realized_y: realized,
        victim_expected_y: expected,
        post_victim_pool: p2,
        final_pool,
    })
}

/// The victim's shortfall in Y, valued in X at the spot price of the moment
/// the loss is realized — right after the victim's swap.
pub fn victim_loss(outcome: &GameOutcome) -> f64 {
    let shortfall = (outcome.victim_expected_y - outcome.victim_realized_y).max(0.0);
    shortfall * outcome.post_victim_pool.spot_price_y_in_x()
}

/// A trade is worth attacking whenever the tolerance-bounded loss covers two
/// base fees: `s * expected_out >= 2 * base_fee_y`.
pub fn is_attackable(intent: &TradeIntent) -> Result<bool> {
    let expected = expected_output(intent)?;
    Ok(intent.slippage * expected >= 2.0 * intent.base_fee_y)
}
