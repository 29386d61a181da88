//! Trader-side slippage selection: the attack-free bound `s_a`, the
//! failure-cost bound `s_r`, and the final choice between them.
//!
//! `s_a = 2b / expected_out` is the largest tolerance at which no sandwich
//! attack can pay for its two base fees. `s_r` is the smallest tolerance at
//! which the expected cost of retrying failed transactions no longer exceeds
//! the worst-case attack cost; it is the first crossing of `s` over the
//! retry-cost curve
//!
//! ```text
//! g(s) = p(s)/(1 - p(s)) * ((l + m) * b / expected_out + E[move | move > s])
//! ```
//!
//! where `p(s)` and the tail expectation come from the recent window.

use crate::cpmm::{expected_output, TradeIntent};
use crate::error::{Error, Result};
use crate::stats::{SlippageHistory, SlippageWindow};

/// Tunables of the selection procedure.
#[derive(Debug, Clone, Copy)]
pub struct PolicyParams {
    /// Gas fraction burned by a failed transaction relative to a successful
    /// one (`l`).
    pub failed_tx_gas_fraction: f64,
    /// Maximum single-block base-fee increase (`m`).
    pub base_fee_step: f64,
    /// Margin subtracted from `s_a` in the attack-free regime.
    pub epsilon: f64,
    pub search_tolerance: f64,
    pub max_search_iters: usize,
    /// Window size used for the empirical estimates.
    pub window: usize,
}

impl Default for PolicyParams {
    fn default() -> Self {
        PolicyParams {
            failed_tx_gas_fraction: 0.25,
            base_fee_step: 0.125,
            epsilon: 1e-6,
            search_tolerance: 1e-9,
            max_search_iters: 200,
            window: 2000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// `s_r < s_a`: chose `s_a - epsilon`, no profitable attack exists.
    AttackFree,
    /// `s_r >= s_a`: attacks cannot be priced out, chose `s_r`.
    Unavoidable,
}

#[derive(Debug, Clone, Copy)]
pub struct SlippageAdvice {
    pub chosen: f64,
    pub s_a: f64,
    pub s_r: f64,
    pub regime: Regime,
    /// Failure probability of the chosen tolerance on the window.
    pub failure_prob: f64,
    /// Expected adverse move conditional on failing at the chosen tolerance.
    pub tail_expectation: f64,
    /// Set when the window is too short to trust a zero failure probability.
    pub low_confidence: bool,
}

/// Largest tolerance at which the trade cannot be attacked profitably,
/// capped at 1.
pub fn attack_free_bound(intent: &TradeIntent) -> Result<f64> {
    let expected = expected_output(intent)?;
    Ok((2.0 * intent.base_fee_y / expected).min(1.0))
}

fn retry_cost(window: &SlippageWindow, s: f64, fee_fraction: f64) -> Result<f64> {
    let p = window.exceedance(s)?;
    if p >= 1.0 {
        return Ok(f64::INFINITY);
    }
    Ok(p / (1.0 - p) * (fee_fraction + window.tail_mean(s)?))
}

/// Smallest `s` in `[0, 1)` with `s >= g(s)`, found by bisection on the step
/// function `g` over the window before `at_block`.
pub fn failure_cost_bound(
    intent: &TradeIntent,
    history: &SlippageHistory,
    at_block: u64,
    params: &PolicyParams,
) -> Result<f64> {
    let window = history.window_before(at_block);
    failure_cost_bound_on_window(intent, &window, params)
}

/// Same as [`failure_cost_bound`] with the window already materialized;
/// the replay engine uses this with an incrementally maintained window.
pub fn failure_cost_bound_on_window(
    intent: &TradeIntent,
    window: &SlippageWindow,
    params: &PolicyParams,
) -> Result<f64> {
    let expected = expected_output(intent)?;
    let fee_fraction = (params.failed_tx_gas_fraction + params.base_fee_step)
        * intent.base_fee_y
        / expected;

    let g = |s: f64| retry_cost(window, s, fee_fraction);

    if 0.0 >= g(0.0)? {
        return Ok(0.0);
    }
    // Pathological window: every tolerance below 1 still fails all the time.
    let top = 1.0 - params.epsilon;
    if top < g(top)? {
        return Ok(top);
    }

    // g only jumps at observed values, so h(s) = s - g(s) has a first sign
    // change; bisect for it, keeping h(hi) >= 0 and h(lo) < 0.
    let mut lo = 0.0_f64;
    let mut hi = top;
    let mut iters = 0;
    while hi - lo > params.search_tolerance {
        iters += 1;
        if iters > params.max_search_iters {
            return Err(Error::SearchFailure {
                iters,
                lo,
                hi,
            });
        }
        let mid = 0.5 * (lo + hi);
        if mid >= g(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    // If the crossing sits on a jump of g, the exact first solution is the
    // plateau value g(hi) itself; snap to it when it still qualifies.
    let snap = g(hi)?;
    if snap >= lo && snap <= hi && snap >= g(snap)? {
        return Ok(snap);
    }
    Ok(hi)
}

/// Picks the tolerance: `s_a - epsilon` when the retry bound allows staying
/// attack-free, otherwise `s_r`.
pub fn choose_slippage(
    intent: &TradeIntent,
    history: &SlippageHistory,
    at_block: u64,
    params: &PolicyParams,
) -> Result<SlippageAdvice> {
    let window = history.window_before(at_block);
    choose_slippage_on_window(intent, &window, params)
}

pub fn choose_slippage_on_window(
    intent: &TradeIntent,
    window: &SlippageWindow,
    params: &PolicyParams,
) -> Result<SlippageAdvice> {
    let s_a = attack_free_bound(intent)?;
    let s_r = failure_cost_bound_on_window(intent, window, params)?;
    let (raw, regime) = if s_r < s_a {
        (s_a - params.epsilon, Regime::AttackFree)
    } else {
        (s_r, Regime::Unavoidable)
    };
    let chosen = raw.clamp(params.epsilon, 1.0 - params.epsilon);
    let failure_prob = window.exceedance(chosen)?;
    let tail = window.tail_mean(chosen)?;
    Ok(SlippageAdvice {
        chosen,
        s_a,
        s_r,
        regime,
        failure_prob,
        tail_expectation: tail,
        low_confidence: failure_prob == 0.0 && window.len() < params.window,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::{is_attackable, optimal_attack, BindingConstraint};
    use crate::cpmm::{PoolState, TradeIntent};

    fn intent(base_fee_y: f64) -> TradeIntent {
        let pool = PoolState::new(100.0, 100.0, 0.003, 0).unwrap();
        TradeIntent::new(10.0, 0.01, base_fee_y, pool).unwrap()
    }

    fn history(values: &[f64], window: usize) -> SlippageHistory {
        let series = values
            .iter()
            .enumerate()
            .map(|(i, &v)| (i as u64 + 1, v))
            .collect();
        SlippageHistory::from_series("P", 100.0, series, window).unwrap()
    }

    #[test]
    fn attack_free_bound_worked_values() {
        // expected output 9.066; s_a = 2*2/9.066.
        let s_a = attack_free_bound(&intent(2.0)).unwrap();
        assert!((s_a - 0.4412).abs() < 1e-3, "got {s_a}");
        assert_eq!(attack_free_bound(&intent(0.0)).unwrap(), 0.0);
        // 2b >= expected output: capped at 1.
        assert_eq!(attack_free_bound(&intent(10.0)).unwrap(), 1.0);
    }

    #[test]
    fn quiet_window_needs_no_retry_margin() {
        let h = history(&[0.0; 50], 50);
        let s_r = failure_cost_bound(&intent(2.0), &h, 51, &PolicyParams::default()).unwrap();
        assert_eq!(s_r, 0.0);
    }

    #[test]
    fn fixed_point_matches_dense_scan() {
        let vals: Vec<f64> = (1..=10).map(|i| i as f64 / 100.0).collect();
        let h = history(&vals, 10);
        let it = intent(9.066e-3); // b/expected = 1e-3
        let params = PolicyParams::default();
        let s_r = failure_cost_bound(&it, &h, 11, &params).unwrap();

        // Dense-scan oracle over s in {0, 1e-5, ..., 1}.
        let window = h.window_before(11);
        let expected = crate::cpmm::expected_output(&it).unwrap();
        let fee_fraction = 0.375 * it.base_fee_y / expected;
        let mut oracle = 1.0;
        let mut s = 0.0;
        while s <= 1.0 {
            let g = retry_cost(&window, s, fee_fraction).unwrap();
            if s >= g {
                oracle = s;
                break;
            }
            s += 1e-5;
        }
        assert!((s_r - oracle).abs() < 1e-4, "{s_r} vs {oracle}");
    }

    #[test]
    fn single_value_window_lands_on_the_jump() {
        let h = history(&[0.05], 10);
        let it = intent(0.0);
        let s_r = failure_cost_bound(&it, &h, 2, &PolicyParams::default()).unwrap();
        // For s >= 0.05 nothing exceeds, so g = 0 and any s >= 0.05 works;
        // below it, p = 1 makes g infinite. First crossing is 0.05 itself.
        assert!((s_r - 0.05).abs() < 1e-9, "got {s_r}");
    }

    #[test]
    fn branch_selection() {
        let params = PolicyParams::default();
        // Quiet pool: s_r = 0, s_a = 0.44 -> attack-free.
        let h = history(&[0.0; 50], 50);
        let advice = choose_slippage(&intent(2.0), &h, 51, &params).unwrap();
        assert_eq!(advice.regime, Regime::AttackFree);
        assert!((advice.chosen - (advice.s_a - params.epsilon)).abs() < 1e-15);

        // Volatile pool with low base fee: s_r >= s_a -> unavoidable.
        let vals = vec![0.5; 50];
        let h = history(&vals, 50);
        let advice = choose_slippage(&intent(1e-3), &h, 51, &params).unwrap();
        assert_eq!(advice.regime, Regime::Unavoidable);
        assert_eq!(advice.chosen, advice.s_r);
    }

    #[test]
    fn attack_free_choice_is_safe_end_to_end() {
        // A deep pool and a $1000-scale trade: the regime the bound is meant
        // for, where the fee drag on the required front-run dwarfs the gain.
        let h = history(&[0.0; 50], 50);
        let params = PolicyParams::default();
        let pool = PoolState::new(1e7, 1e7, 0.003, 0).unwrap();
        let base = TradeIntent::new(1000.0, 1.0, 4.0, pool).unwrap();
        let advice = choose_slippage(&base, &h, 51, &params).unwrap();
        assert_eq!(advice.regime, Regime::AttackFree);
        let chosen = TradeIntent::new(base.input_x, advice.chosen, base.base_fee_y, base.pool)
            .unwrap();
        assert!(!is_attackable(&chosen).unwrap());
        // Base fee in X units at the symmetric pool equals the Y amount.
        let plan = optimal_attack(&chosen, base.base_fee_y).unwrap();
        assert_eq!(plan.binding_constraint, BindingConstraint::NoAttack);
    }

    #[test]
    fn epsilon_stability() {
        let h = history(&[0.0; 50], 50);
        let mut params = PolicyParams::default();
        let a1 = choose_slippage(&intent(2.0), &h, 51, &params).unwrap();
        params.epsilon /= 2.0;
        let a2 = choose_slippage(&intent(2.0), &h, 51, &params).unwrap();
        assert!((a1.chosen - a2.chosen).abs() <= 2.0 * 1e-6);
    }
}
