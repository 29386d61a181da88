//! Property-based checks over the swap math, the attack bounds, and the
//! windowed statistics.

use proptest::prelude::*;

use sandwich::attack::{execute_sandwich, optimal_attack, victim_loss};
use sandwich::cpmm::{
    apply_swap, apply_swap_y, swap_input_for_output, swap_output, PoolState, TradeIntent,
};
use sandwich::policy::{failure_cost_bound, PolicyParams};
use sandwich::stats::SlippageHistory;

fn pool_strategy() -> impl Strategy<Value = PoolState> {
    (
        1e2..1e8f64,
        1e2..1e8f64,
        prop_oneof![Just(0.0), Just(0.003), Just(0.01)],
    )
        .prop_map(|(x, y, f)| PoolState::new(x, y, f, 0).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn swap_output_monotone_in_input(pool in pool_strategy(), d in 1e-3..1e6f64, bump in 1.0001..4.0f64) {
        let a = swap_output(&pool, d).unwrap();
        let b = swap_output(&pool, d * bump).unwrap();
        prop_assert!(b > a);
    }

    #[test]
    fn swap_output_decreases_with_fee(x in 1e3..1e7f64, y in 1e3..1e7f64, d in 1.0..1e3f64) {
        let free = swap_output(&PoolState::new(x, y, 0.0, 0).unwrap(), d).unwrap();
        let fee = swap_output(&PoolState::new(x, y, 0.003, 0).unwrap(), d).unwrap();
        prop_assert!(fee < free);
    }

    #[test]
    fn fee_free_swap_preserves_product(x in 1e3..1e7f64, y in 1e3..1e7f64, d in 1.0..1e5f64) {
        let pool = PoolState::new(x, y, 0.0, 0).unwrap();
        let (next, _) = apply_swap(&pool, d).unwrap();
        let before = pool.reserve_x * pool.reserve_y;
        let after = next.reserve_x * next.reserve_y;
        prop_assert!(((after - before) / before).abs() < 1e-9);
    }

    #[test]
    fn inverse_round_trip(pool in pool_strategy(), frac in 1e-6..0.9f64) {
        let target = pool.reserve_y * frac;
        let input = swap_input_for_output(&pool, target).unwrap();
        let back = swap_output(&pool, input).unwrap();
        prop_assert!(((back - target) / target).abs() < 1e-9);
    }

    #[test]
    fn round_trip_never_profits(pool in pool_strategy(), d in 1e-2..1e6f64) {
        let (p1, out_y) = apply_swap(&pool, d).unwrap();
        let (_, back_x) = apply_swap_y(&p1, out_y).unwrap();
        prop_assert!(back_x <= d * (1.0 + 1e-12));
    }

    #[test]
    fn profit_never_exceeds_victim_loss(
        x0 in 1e2..1e8f64,
        d_frac in 1e-4..1.0f64,
        s in 1e-4..0.99f64,
    ) {
        // Fee-free, zero base fee: the attacker's gain is bounded by the
        // victim's loss, with a known ratio bound.
        let pool = PoolState::new(x0, x0, 0.0, 0).unwrap();
        let d = d_frac * x0;
        let intent = TradeIntent::new(d, s, 0.0, pool).unwrap();
        let plan = optimal_attack(&intent, 0.0).unwrap();
        prop_assume!(plan.is_attack());
        let outcome = execute_sandwich(&intent, &plan).unwrap();
        let loss = victim_loss(&outcome);
        prop_assert!(plan.profit_x <= loss * (1.0 + 1e-9));
        let bound = x0 / (d * s + x0) + 1e-9;
        prop_assert!(plan.profit_x / loss <= bound, "{} vs {}", plan.profit_x / loss, bound);
    }

    #[test]
    fn quantile_is_consistent_with_exceedance(
        values in prop::collection::vec(-0.01..0.05f64, 20..200),
        p in 0.05..0.5f64,
    ) {
        let series: Vec<(u64, f64)> = values.iter().enumerate().map(|(i, &v)| (i as u64, v)).collect();
        let n = series.len();
        let h = SlippageHistory::from_series("P", 1.0, series, n).unwrap();
        let w = h.window_before(n as u64);
        let q = w.quantile(p).unwrap();
        // The clamp at 0 can only lower the prediction below observed values,
        // so only the unclamped case must respect the budget.
        if q > 0.0 {
            prop_assert!(w.exceedance(q).unwrap() <= p + 1e-12);
        }
    }

    #[test]
    fn failure_cost_bound_is_first_crossing(
        values in prop::collection::vec(0.0..0.2f64, 30..120),
        fee_scale in 1e-4..0.1f64,
    ) {
        let series: Vec<(u64, f64)> = values.iter().enumerate().map(|(i, &v)| (i as u64, v)).collect();
        let n = series.len();
        let h = SlippageHistory::from_series("P", 1.0, series, n).unwrap();
        let params = PolicyParams::default();
        let pool = PoolState::new(1e6, 1e6, 0.003, 0).unwrap();
        let expected = swap_output(&pool, 1000.0).unwrap();
        let intent = TradeIntent::new(1000.0, 1.0, fee_scale * expected, pool).unwrap();
        let s_r = failure_cost_bound(&intent, &h, n as u64, &params).unwrap();

        let w = h.window_before(n as u64);
        let fee_fraction = (params.failed_tx_gas_fraction + params.base_fee_step)
            * intent.base_fee_y / expected;
        let g = |s: f64| {
            let p = w.exceedance(s).unwrap();
            if p >= 1.0 {
                f64::INFINITY
            } else {
                p / (1.0 - p) * (fee_fraction + w.tail_mean(s).unwrap())
            }
        };
        // The bound satisfies the crossing; everything clearly below does not.
        prop_assert!(s_r >= g(s_r) - 1e-9, "s_r {} below g {}", s_r, g(s_r));
        let mut s = 0.0;
        while s < s_r - 1e-6 {
            prop_assert!(s < g(s), "premature crossing at {s}: g = {}", g(s));
            s += (s_r / 37.0).max(1e-6);
        }
    }

    #[test]
    fn window_before_never_looks_ahead(
        values in prop::collection::vec(0.0..0.1f64, 40..80),
        cut in 10usize..30,
    ) {
        let series: Vec<(u64, f64)> = values.iter().enumerate().map(|(i, &v)| (i as u64, v)).collect();
        let n = series.len();
        let h_full = SlippageHistory::from_series("P", 1.0, series.clone(), n).unwrap();
        let h_trunc = SlippageHistory::from_series("P", 1.0, series[..cut].to_vec(), n).unwrap();
        let a = h_full.window_before(cut as u64);
        let b = h_trunc.window_before(cut as u64);
        prop_assert_eq!(a.values(), b.values());
    }
}
