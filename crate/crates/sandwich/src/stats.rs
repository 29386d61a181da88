//! Block-level slippage statistics: signed fractional price-change series per
//! trade size, sliding-window quantile prediction, failure probabilities, and
//! tail expectations.
//!
//! The series is loss-positive: an entry `s > 0` means the price moved
//! against an X->Y trader between two consecutive blocks. Reports flip the
//! sign back to the loss-negative convention where noted.

use crate::cpmm::{swap_input_for_output, swap_output, PoolState};
use crate::error::{Error, Result};

/// A block skipped during series construction, with the reason.
#[derive(Debug, Clone)]
pub struct SkippedBlock {
    pub block: u64,
    pub reason: String,
}

/// Per-block signed fractional price-change observations for one pool and
/// one trade-size bucket.
///
/// Blocks are strictly increasing; any query "at block t" reads only entries
/// with block < t, so predictions never look ahead.
#[derive(Debug, Clone)]
pub struct SlippageHistory {
    pub pool_id: String,
    /// USD trade size the series was computed for.
    pub size_bucket: f64,
    series: Vec<(u64, f64)>,
    pub window: usize,
    pub skipped: Vec<SkippedBlock>,
}

impl SlippageHistory {
    pub fn from_series(
        pool_id: impl Into<String>,
        size_bucket: f64,
        series: Vec<(u64, f64)>,
        window: usize,
    ) -> Result<Self> {
        if series.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::ingestion("slippage series blocks must be strictly increasing"));
        }
        if window == 0 {
            return Err(Error::domain("window must be positive"));
        }
        Ok(SlippageHistory {
            pool_id: pool_id.into(),
            size_bucket,
            series,
            window,
            skipped: Vec::new(),
        })
    }

    pub fn series(&self) -> &[(u64, f64)] {
        &self.series
    }

    /// Observation realized at `block`, if any.
    pub fn at(&self, block: u64) -> Option<f64> {
        self.series
            .binary_search_by_key(&block, |e| e.0)
            .ok()
            .map(|i| self.series[i].1)
    }

    /// The most recent `window` observations strictly before `at_block`.
    pub fn window_before(&self, at_block: u64) -> SlippageWindow {
        let end = self.series.partition_point(|e| e.0 < at_block);
        let start = end.saturating_sub(self.window);
        SlippageWindow::new(self.series[start..end].iter().map(|e| e.1))
    }
}

/// A sorted snapshot of one sliding window, with suffix sums so that tail
/// counts and tail means are O(log n) per query.
#[derive(Debug, Clone)]
pub struct SlippageWindow {
    sorted: Vec<f64>,
    /// `suffix[i]` = sum of `sorted[i..]`.
    suffix: Vec<f64>,
}

impl SlippageWindow {
    pub fn new(values: impl IntoIterator<Item = f64>) -> Self {
        let mut sorted: Vec<f64> = values.into_iter().collect();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Self::from_sorted(sorted)
    }

    pub fn from_sorted(sorted: Vec<f64>) -> Self {
        let mut suffix = vec![0.0; sorted.len() + 1];
        for i in (0..sorted.len()).rev() {
            suffix[i] = suffix[i + 1] + sorted[i];
        }
        SlippageWindow { sorted, suffix }
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.sorted
    }

    fn count_above(&self, s: f64) -> usize {
        self.sorted.len() - self.sorted.partition_point(|&v| v <= s)
    }

    /// Fraction of observations strictly exceeding `s`.
    pub fn exceedance(&self, s: f64) -> Result<f64> {
        if self.is_empty() {
            return Err(Error::NotEnoughData {
                needed: 1,
                available: 0,
            });
        }
        Ok(self.count_above(s) as f64 / self.len() as f64)
    }

    /// Mean of the observations strictly exceeding `s`; 0 when none do.
    pub fn tail_mean(&self, s: f64) -> Result<f64> {
        if self.is_empty() {
            return Err(Error::NotEnoughData {
                needed: 1,
                available: 0,
            });
        }
        let idx = self.sorted.partition_point(|&v| v <= s);
        let n = self.sorted.len() - idx;
        if n == 0 {
            Ok(0.0)
        } else {
            Ok(self.suffix[idx] / n as f64)
        }
    }

    /// Nearest-rank upper quantile: the smallest observed value such that the
    /// fraction of observations strictly exceeding it is at most `p`, clamped
    /// below at zero.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::domain(format!("p must be in (0, 1), got {p}")));
        }
        let needed = (1.0 / p).ceil().max(10.0) as usize;
        if self.len() < needed {
            return Err(Error::NotEnoughData {
                needed,
                available: self.len(),
            });
        }
        let n = self.len() as f64;
        // Smallest rank with at most p*n observations above it. Ranks share
        // a value with duplicates, so step by value.
        let allowed = (p * n + 1e-12).floor() as usize;
        // sorted[i] has (n - 1 - i) entries after it, but duplicates of
        // sorted[i] do not "exceed" it; find the first index whose
        // strict-exceedance count is within the allowance.
        let cut = self.len() - allowed.min(self.len());
        // cut is the number of observations that must not exceed the answer;
        // the answer is the largest of them.
        let value = if cut == 0 { self.sorted[0] } else { self.sorted[cut - 1] };
        Ok(value.max(0.0))
    }
}

/// Builds the per-block series for one pool and one USD trade size.
///
/// For each consecutive snapshot pair `(t, t+1)` the USD size is converted to
/// a Y-output target at block `t`, the implied X input is backed out, and the
/// entry recorded at block `t+1` is the fractional drop of that fixed input's
/// quote between the two blocks.
pub fn block_slippage_series<F>(
    pool_id: &str,
    snapshots: &[PoolState],
    trade_output_usd: f64,
    price_y_usd: F,
    window: usize,
) -> Result<SlippageHistory>
where
    F: Fn(u64) -> Option<f64>,
{
    if snapshots.len() < 2 {
        return Err(Error::ingestion(format!(
            "need at least 2 snapshots to build a slippage series, have {}",
            snapshots.len()
        )));
    }
    if !(trade_output_usd > 0.0) {
        return Err(Error::domain("trade size must be positive"));
    }
    let mut series = Vec::with_capacity(snapshots.len() - 1);
    let mut skipped = Vec::new();
    for pair in snapshots.windows(2) {
        let (now, next) = (&pair[0], &pair[1]);
        let price = price_y_usd(now.block).ok_or_else(|| {
            Error::ingestion(format!("price feed missing block {}", now.block))
        })?;
        price_y_usd(next.block).ok_or_else(|| {
            Error::ingestion(format!("price feed missing block {}", next.block))
        })?;
        let target_y = trade_output_usd / price;
        let input_x = match swap_input_for_output(now, target_y) {
            Ok(v) => v,
            Err(e) => {
                skipped.push(SkippedBlock {
                    block: now.block,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let quote_now = match swap_output(now, input_x) {
            Ok(v) => v,
            Err(e) => {
                skipped.push(SkippedBlock {
                    block: now.block,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let quote_next = match swap_output(next, input_x) {
            Ok(v) => v,
            Err(e) => {
                skipped.push(SkippedBlock {
                    block: next.block,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        series.push((next.block, (quote_now - quote_next) / quote_now));
    }
    let mut history = SlippageHistory::from_series(pool_id, trade_output_usd, series, window)?;
    history.skipped = skipped;
    Ok(history)
}

/// Required tolerance so that roughly a fraction `p` of blocks would have
/// breached it, estimated from the window before `at_block`.
pub fn quantile_slippage(history: &SlippageHistory, at_block: u64, p: f64) -> Result<f64> {
    history.window_before(at_block).quantile(p)
}

/// Fraction of recent observations exceeding tolerance `s`.
pub fn failure_probability(history: &SlippageHistory, at_block: u64, s: f64) -> Result<f64> {
    history.window_before(at_block).exceedance(s)
}

/// Expected adverse move given the trade would have failed at tolerance `s`.
pub fn tail_expectation(history: &SlippageHistory, at_block: u64, s: f64) -> Result<f64> {
    history.window_before(at_block).tail_mean(s)
}

/// Accuracy summary of the windowed quantile predictor over a block range.
#[derive(Debug, Clone, Copy)]
pub struct PredictionReport {
    /// Mean absolute fractional price change over the range.
    pub mean_abs: f64,
    /// Volatility (population std dev) of the absolute change.
    pub vol_abs: f64,
    /// Mean prediction, reported loss-negative.
    pub pred_mean: f64,
    /// Relative deviation of the achieved exceedance frequency from `p`.
    pub rel_error: f64,
    pub failure_prob_target: f64,
    pub window: usize,
}

/// Evaluates the quantile predictor over `range` (inclusive start, exclusive
/// end): at each block the prediction uses only earlier data, then the
/// realized observation at that block scores it.
pub fn prediction_accuracy(
    history: &SlippageHistory,
    p: f64,
    window: usize,
    range: (u64, u64),
) -> Result<PredictionReport> {
    let eval = SlippageHistory {
        pool_id: history.pool_id.clone(),
        size_bucket: history.size_bucket,
        series: history.series.clone(),
        window,
        skipped: Vec::new(),
    };
    let mut preds = 0usize;
    let mut pred_sum = 0.0;
    let mut exceed = 0usize;
    let mut abs_sum = 0.0;
    let mut abs_sq = 0.0;
    for &(block, value) in &history.series {
        if block < range.0 || block >= range.1 {
            continue;
        }
        let pred = quantile_slippage(&eval, block, p)?;
        preds += 1;
        pred_sum += pred;
        if value > pred {
            exceed += 1;
        }
        abs_sum += value.abs();
        abs_sq += value * value;
    }
    if preds == 0 {
        return Err(Error::NotEnoughData {
            needed: 1,
            available: 0,
        });
    }
    let n = preds as f64;
    let mean_abs = abs_sum / n;
    let vol_abs = (abs_sq / n - mean_abs * mean_abs).max(0.0).sqrt();
    let freq = exceed as f64 / n;
    Ok(PredictionReport {
        mean_abs,
        vol_abs,
        pred_mean: -(pred_sum / n),
        rel_error: (freq - p).abs() / p,
        failure_prob_target: p,
        window,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cpmm::PoolState;

    fn history(values: &[f64], window: usize) -> SlippageHistory {
        let series = values
            .iter()
            .enumerate()
            .map(|(i, &v)| (i as u64 + 1, v))
            .collect();
        SlippageHistory::from_series("P", 100.0, series, window).unwrap()
    }

    #[test]
    fn identical_snapshots_give_zero_slippage() {
        let p = PoolState::new(100.0, 100.0, 0.0, 1).unwrap();
        let q = PoolState { block: 2, ..p };
        let h = block_slippage_series("P", &[p, q], 1.0, |_| Some(1.0), 10).unwrap();
        assert_eq!(h.series().len(), 1);
        assert_eq!(h.series()[0], (2, 0.0));
    }

    #[test]
    fn adverse_reserve_move_is_loss_positive() {
        // x grows, y shrinks along the constant product: price of Y rises.
        let a = PoolState::new(100.0, 100.0, 0.0, 1).unwrap();
        let b = PoolState::new(110.0, 100.0 * 100.0 / 110.0, 0.0, 2).unwrap();
        let h = block_slippage_series("P", &[a, b], 1.0, |_| Some(1.0), 10).unwrap();
        let input = swap_input_for_output(&a, 1.0).unwrap();
        let expect = 1.0 - swap_output(&b, input).unwrap() / swap_output(&a, input).unwrap();
        assert!((h.series()[0].1 - expect).abs() < 1e-12);
        assert!(h.series()[0].1 > 0.0);
    }

    #[test]
    fn favourable_move_is_negative() {
        let a = PoolState::new(100.0, 100.0, 0.0, 1).unwrap();
        let b = PoolState::new(100.0, 120.0, 0.0, 2).unwrap();
        let h = block_slippage_series("P", &[a, b], 1.0, |_| Some(1.0), 10).unwrap();
        assert!(h.series()[0].1 < 0.0);
    }

    #[test]
    fn missing_price_feed_is_ingestion_error() {
        let a = PoolState::new(100.0, 100.0, 0.0, 1).unwrap();
        let b = PoolState::new(100.0, 100.0, 0.0, 2).unwrap();
        let err = block_slippage_series("P", &[a, b], 1.0, |_| None, 10).unwrap_err();
        assert!(matches!(err, Error::Ingestion(_)));
    }

    #[test]
    fn infeasible_size_records_skip() {
        let a = PoolState::new(100.0, 1.0, 0.0, 1).unwrap();
        let b = PoolState::new(100.0, 1.0, 0.0, 2).unwrap();
        let h = block_slippage_series("P", &[a, b], 10.0, |_| Some(1.0), 10).unwrap();
        assert!(h.series().is_empty());
        assert_eq!(h.skipped.len(), 1);
    }

    #[test]
    fn quantile_single_outlier() {
        let mut vals = vec![0.0; 9];
        vals.push(0.05);
        let h = history(&vals, 10);
        assert_eq!(quantile_slippage(&h, 11, 0.1).unwrap(), 0.0);
    }

    #[test]
    fn quantile_all_zero() {
        let h = history(&[0.0; 20], 20);
        assert_eq!(quantile_slippage(&h, 21, 0.05).unwrap(), 0.0);
        assert_eq!(quantile_slippage(&h, 21, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn quantile_ascending_decade() {
        let vals: Vec<f64> = (1..=10).map(|i| i as f64 / 100.0).collect();
        let h = history(&vals, 10);
        // exactly one value (0.10) strictly exceeds 0.09
        assert!((quantile_slippage(&h, 11, 0.1).unwrap() - 0.09).abs() < 1e-12);
    }

    #[test]
    fn quantile_clamps_negative_predictions() {
        let vals = vec![-0.05; 20];
        let h = history(&vals, 20);
        assert_eq!(quantile_slippage(&h, 21, 0.1).unwrap(), 0.0);
    }

    #[test]
    fn quantile_requires_enough_history() {
        let h = history(&[0.0; 5], 10);
        assert!(matches!(
            quantile_slippage(&h, 6, 0.1),
            Err(Error::NotEnoughData { .. })
        ));
    }

    #[test]
    fn failure_probability_counts_strict_exceedances() {
        let vals: Vec<f64> = (1..=10).map(|i| i as f64 / 100.0).collect();
        let h = history(&vals, 10);
        assert_eq!(failure_probability(&h, 11, 0.055).unwrap(), 0.5);
        assert_eq!(failure_probability(&h, 11, 0.10).unwrap(), 0.0);
        assert_eq!(failure_probability(&h, 11, -1.0).unwrap(), 1.0);
        assert!(matches!(
            failure_probability(&history(&[], 10), 1, 0.0),
            Err(Error::NotEnoughData { .. })
        ));
    }

    #[test]
    fn tail_expectation_means_the_tail() {
        let vals: Vec<f64> = (1..=10).map(|i| i as f64 / 100.0).collect();
        let h = history(&vals, 10);
        assert!((tail_expectation(&h, 11, 0.055).unwrap() - 0.08).abs() < 1e-12);
        assert_eq!(tail_expectation(&h, 11, 0.2).unwrap(), 0.0);
        assert!((tail_expectation(&h, 11, -1.0).unwrap() - 0.055).abs() < 1e-12);
    }

    #[test]
    fn no_lookahead() {
        let mut vals = vec![0.01; 50];
        let h1 = history(&vals, 20);
        let q1 = quantile_slippage(&h1, 30, 0.1).unwrap();
        // Mangle everything at and after block 30; prediction must not move.
        for v in vals.iter_mut().skip(29) {
            *v = 9.9;
        }
        let h2 = history(&vals, 20);
        assert_eq!(q1, quantile_slippage(&h2, 30, 0.1).unwrap());
    }

    #[test]
    fn accuracy_all_zero_series() {
        let h = history(&[0.0; 100], 20);
        let report = prediction_accuracy(&h, 0.1, 20, (30, 101)).unwrap();
        assert_eq!(report.pred_mean, -0.0);
        assert!((report.rel_error - 1.0).abs() < 1e-12);
        assert_eq!(report.mean_abs, 0.0);
    }
}
