//! Deterministic block-replay backtester.
//!
//! For every block in range, a hypothetical trade of each configured USD size
//! is simulated twice: once with the adaptive tolerance policy and once with
//! a constant auto-slippage baseline. Attacked trades pay their tolerance,
//! executed trades pay the realized adverse move, failed trades pay the
//! retry fee plus the realized re-quote difference and try again next block.
//! Simulated trades never mutate the replayed reserve series.

use std::collections::BTreeMap;
use std::io::Write;

use crate::cpmm::{swap_input_for_output, swap_output, PoolState, TradeIntent};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::policy::{choose_slippage_on_window, PolicyParams, SlippageAdvice};
use crate::stats::{block_slippage_series, SlippageHistory, SlippageWindow};

pub const DEFAULT_TRADE_SIZES_USD: [f64; 5] = [10.0, 100.0, 1_000.0, 10_000.0, 100_000.0];

#[derive(Debug, Clone)]
pub struct ReplayConfig {
    /// Inclusive block range to replay.
    pub block_range: (u64, u64),
    pub trade_sizes_usd: Vec<f64>,
    pub base_fee_usd: f64,
    /// Constant auto-slippage of the baseline policy.
    pub baseline_slippage: f64,
    pub policy_params: PolicyParams,
    pub max_retries: u32,
}

impl ReplayConfig {
    pub fn new(block_range: (u64, u64)) -> Result<Self> {
        let config = ReplayConfig {
            block_range,
            trade_sizes_usd: DEFAULT_TRADE_SIZES_USD.to_vec(),
            base_fee_usd: 4.0,
            baseline_slippage: 0.005,
            policy_params: PolicyParams::default(),
            max_retries: 50,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.block_range.0 >= self.block_range.1 {
            return Err(Error::domain(format!(
                "block range must be non-empty, got {:?}",
                self.block_range
            )));
        }
        if self.trade_sizes_usd.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::domain("trade sizes must be positive"));
        }
        if !(self.baseline_slippage > 0.0 && self.baseline_slippage < 1.0) {
            return Err(Error::domain("baseline slippage must be in (0, 1)"));
        }
        if !(self.base_fee_usd > 0.0) {
            return Err(Error::domain("base fee must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Policy {
    Ours,
    Baseline,
}

impl Policy {
    pub fn label(&self) -> &'static str {
        match self {
            Policy::Ours => "ours",
            Policy::Baseline => "baseline",
        }
    }
}

/// Outcome of one simulated trade, possibly spanning several retry blocks.
#[derive(Debug, Clone, Copy)]
pub struct TradeRecord {
    pub block: u64,
    pub size_usd: f64,
    pub policy: Policy,
    /// Tolerance in force at the executing (or last attempted) block.
    pub chosen_s: f64,
    pub attacked: bool,
    pub failed_attempts: u32,
    pub fractional_cost: f64,
    /// Retries were exhausted or the data ran out before execution.
    pub abandoned: bool,
}

/// Aggregate for one (pool, size, policy) cell.
#[derive(Debug, Clone)]
pub struct CostCell {
    pub pool_id: String,
    pub size_usd: f64,
    pub policy: Policy,
    pub trades: u64,
    pub mean_frac_cost: f64,
    pub failed_trades: u64,
    pub avg_failed_attempts: f64,
    pub attacked_trades: u64,
    pub abandoned_trades: u64,
}

#[derive(Debug, Clone)]
pub struct RatioRow {
    pub pool_id: String,
    pub size_usd: f64,
    /// baseline cost / ours cost; infinite when ours is 0 and baseline is not.
    pub cost_ratio: f64,
}

#[derive(Debug, Clone, Default)]
pub struct CostReport {
    pub cells: Vec<CostCell>,
}

impl CostReport {
    pub fn cell(&self, pool: &str, size: f64, policy: Policy) -> Option<&CostCell> {
        self.cells
            .iter()
            .find(|c| c.pool_id == pool && c.size_usd == size && c.policy == policy)
    }

    pub fn ratios(&self) -> Vec<RatioRow> {
        let mut rows = Vec::new();
        for cell in self.cells.iter().filter(|c| c.policy == Policy::Ours) {
            let Some(base) = self.cell(&cell.pool_id, cell.size_usd, Policy::Baseline) else {
                continue;
            };
            let ratio = if cell.mean_frac_cost == 0.0 {
                if base.mean_frac_cost > 0.0 {
                    f64::INFINITY
                } else {
                    1.0
                }
            } else {
                base.mean_frac_cost / cell.mean_frac_cost
            };
            rows.push(RatioRow {
                pool_id: cell.pool_id.clone(),
                size_usd: cell.size_usd,
                cost_ratio: ratio,
            });
        }
        rows
    }

    pub fn write_costs_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "pool,size_usd,policy,mean_frac_cost,failed_trades,avg_failed_attempts,attacked_trades"
        )?;
        for c in &self.cells {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                c.pool_id,
                c.size_usd,
                c.policy.label(),
                sci(c.mean_frac_cost),
                c.failed_trades,
                sci(c.avg_failed_attempts),
                c.attacked_trades
            )?;
        }
        Ok(())
    }

    pub fn write_ratio_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "pool,size_usd,cost_ratio")?;
        for r in self.ratios() {
            writeln!(w, "{},{},{}", r.pool_id, r.size_usd, sci(r.cost_ratio))?;
        }
        Ok(())
    }

    pub fn render_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "{:<12} {:>10} {:>9} {:>12} {:>7} {:>9} {:>9} {:>10}",
            "pool", "size_usd", "policy", "mean_cost", "failed", "avg_fails", "attacked", "abandoned"
        )?;
        for c in &self.cells {
            writeln!(
                w,
                "{:<12} {:>10} {:>9} {:>12} {:>7} {:>9} {:>9} {:>10}",
                c.pool_id,
                c.size_usd,
                c.policy.label(),
                sci(c.mean_frac_cost),
                c.failed_trades,
                sci(c.avg_failed_attempts),
                c.attacked_trades,
                c.abandoned_trades
            )?;
        }
        writeln!(w)?;
        writeln!(w, "{:<12} {:>10} {:>14}", "pool", "size_usd", "baseline/ours")?;
        for r in self.ratios() {
            writeln!(
                w,
                "{:<12} {:>10} {:>14}",
                r.pool_id,
                r.size_usd,
                sci(r.cost_ratio)
            )?;
        }
        Ok(())
    }
}

/// Scientific notation with 4 significant digits; infinity renders as "inf".
fn sci(v: f64) -> String {
    if v.is_infinite() {
        return "inf".to_string();
    }
    format!("{:.3E}", v)
}

/// Everything the simulator needs about one pool, fixed for the whole run.
struct PoolContext {
    pool_id: String,
    /// One state per block, index 0 = block_range.0.
    states: Vec<PoolState>,
    /// USD price of token Y per block, same indexing.
    price_y: Vec<f64>,
    /// Per size: the slippage series and precomputed per-block advice.
    per_size: Vec<SizeContext>,
}

struct SizeContext {
    size_usd: f64,
    /// Advice for blocks `sim_start..=sim_end`; None where quoting failed.
    advice: Vec<Option<SlippageAdvice>>,
}

pub struct ReplayEngine<'a> {
    config: &'a ReplayConfig,
    /// First block with at least one prior observation.
    sim_start: u64,
    /// Last block with a next-block state available for realization.
    sim_end: u64,
    pools: Vec<PoolContext>,
}

impl<'a> ReplayEngine<'a> {
    pub fn new(config: &'a ReplayConfig, dataset: &Dataset) -> Result<Self> {
        config.validate()?;
        let (start, end) = config.block_range;
        let sim_start = start + 2;
        let sim_end = end - 1;
        if sim_start > sim_end {
            return Err(Error::domain(format!(
                "range {start}..{end} leaves no simulatable blocks"
            )));
        }
        let mut pools = Vec::new();
        for pool_id in dataset.snapshots.keys() {
            let registry = dataset.registry_for(pool_id)?;
            let states = dataset.reserve_series(pool_id, (start, end))?;
            let price_y: Vec<f64> = states
                .iter()
                .map(|s| {
                    dataset.prices.usd_price(&registry.token_y, s.block).ok_or_else(|| {
                        Error::ingestion(format!(
                            "no USD price for {} at block {}",
                            registry.token_y, s.block
                        ))
                    })
                })
                .collect::<Result<_>>()?;
            let mut per_size = Vec::new();
            for &size in &config.trade_sizes_usd {
                let price_lookup = |block: u64| {
                    states
                        .first()
                        .map(|s0| price_y[(block - s0.block) as usize])
                };
                let history = block_slippage_series(
                    pool_id,
                    &states,
                    size,
                    price_lookup,
                    config.policy_params.window,
                )?;
                let advice = precompute_advice(
                    &states,
                    &price_y,
                    &history,
                    size,
                    config,
                    sim_start,
                    sim_end,
                );
                per_size.push(SizeContext {
                    size_usd: size,
                    advice,
                });
            }
            pools.push(PoolContext {
                pool_id: pool_id.clone(),
                states,
                price_y,
                per_size,
            });
        }
        Ok(ReplayEngine {
            config,
            sim_start,
            sim_end,
            pools,
        })
    }

    pub fn sim_range(&self) -> (u64, u64) {
        (self.sim_start, self.sim_end)
    }

    fn idx(&self, block: u64) -> usize {
        (block - self.config.block_range.0) as usize
    }

    /// Simulates one trade starting at `block`, retrying on failure at the
    /// following blocks.
    fn simulate_trade(
        &self,
        pool: &PoolContext,
        size_ctx: &SizeContext,
        block: u64,
        policy: Policy,
    ) -> Option<TradeRecord> {
        let params = &self.config.policy_params;
        let fee_fraction = params.failed_tx_gas_fraction + params.base_fee_step;

        let first_idx = self.idx(block);
        let first_input = quote_input(&pool.states[first_idx], size_ctx.size_usd, pool.price_y[first_idx])?;

        let mut record = TradeRecord {
            block,
            size_usd: size_ctx.size_usd,
            policy,
            chosen_s: 0.0,
            attacked: false,
            failed_attempts: 0,
            fractional_cost: 0.0,
            abandoned: false,
        };

        let mut t = block;
        loop {
            let i = self.idx(t);
            let state = &pool.states[i];
            let price = pool.price_y[i];
            let target_y = size_ctx.size_usd / price;
            let base_fee_y = self.config.base_fee_usd / price;
            let Some(input_x) = quote_input(state, size_ctx.size_usd, price) else {
                record.abandoned = true;
                break;
            };
            let expected_y = match swap_output(state, input_x) {
                Ok(v) => v,
                Err(_) => {
                    record.abandoned = true;
                    break;
                }
            };

            let chosen = match policy {
                Policy::Baseline => self.config.baseline_slippage,
                Policy::Ours => match size_ctx.advice[(t - self.sim_start) as usize] {
                    Some(a) => a.chosen,
                    None => {
                        record.abandoned = true;
                        break;
                    }
                },
            };
            record.chosen_s = chosen;

            // An optimal adversary attacks whenever the tolerance covers two
            // base fees, pushing the victim exactly to the tolerance.
            if chosen * expected_y >= 2.0 * base_fee_y {
                record.attacked = true;
                record.fractional_cost += chosen;
                break;
            }

            // Natural move between this block and the next, for this input.
            if t + 1 > self.sim_end + 1 {
                record.abandoned = true;
                break;
            }
            let next = &pool.states[i + 1];
            let realized = match swap_output(next, input_x) {
                Ok(v) => v,
                Err(_) => {
                    record.abandoned = true;
                    break;
                }
            };
            let slip = (expected_y - realized) / expected_y;
            if slip <= chosen {
                record.fractional_cost += slip.max(0.0);
                break;
            }

            // Failed attempt: pay the partial gas and the realized re-quote
            // difference, then retry at the next block.
            record.failed_attempts += 1;
            let next_price = pool.price_y[i + 1];
            let requote = quote_input(next, size_ctx.size_usd, next_price);
            let requote_diff = match requote {
                Some(next_input) => ((next_input - input_x) / first_input).max(0.0),
                None => 0.0,
            };
            record.fractional_cost += fee_fraction * base_fee_y / target_y + requote_diff;

            if record.failed_attempts >= self.config.max_retries || t + 1 > self.sim_end {
                record.abandoned = true;
                break;
            }
            t += 1;
        }
        Some(record)
    }

    /// Runs every (pool, size, policy, block) cell and aggregates.
    pub fn run(&self) -> CostReport {
        let mut report = CostReport::default();
        for pool in &self.pools {
            for size_ctx in &pool.per_size {
                for policy in [Policy::Ours, Policy::Baseline] {
                    let mut records = Vec::new();
                    for t in self.sim_start..=self.sim_end {
                        if let Some(r) = self.simulate_trade(pool, size_ctx, t, policy) {
                            records.push(r);
                        }
                    }
                    report.cells.push(aggregate(
                        &pool.pool_id,
                        size_ctx.size_usd,
                        policy,
                        &records,
                    ));
                }
            }
        }
        report
    }
}

fn quote_input(state: &PoolState, size_usd: f64, price_y: f64) -> Option<f64> {
    let target_y = size_usd / price_y;
    swap_input_for_output(state, target_y).ok()
}

fn precompute_advice(
    states: &[PoolState],
    price_y: &[f64],
    history: &SlippageHistory,
    size_usd: f64,
    config: &ReplayConfig,
    sim_start: u64,
    sim_end: u64,
) -> Vec<Option<SlippageAdvice>> {
    let params = &config.policy_params;
    let start_block = states[0].block;
    // Sliding sorted window over the series, advanced block by block.
    let series: BTreeMap<u64, f64> = history.series().iter().copied().collect();
    let mut sorted: Vec<f64> = Vec::with_capacity(params.window);
    let pending: Vec<u64> = series.keys().copied().collect();
    let mut pending_pos = 0usize;
    let mut in_window: std::collections::VecDeque<(u64, f64)> = Default::default();

    let mut out = Vec::with_capacity((sim_end - sim_start + 1) as usize);
    for t in sim_start..=sim_end {
        // Absorb observations realized strictly before t.
        while pending_pos < pending.len() && pending[pending_pos] < t {
            let b = pending[pending_pos];
            let v = series[&b];
            let pos = sorted.partition_point(|&x| x < v);
            sorted.insert(pos, v);
            in_window.push_back((b, v));
            if in_window.len() > params.window {
                let (_, old) = in_window.pop_front().unwrap();
                let pos = sorted.partition_point(|&x| x < old);
                sorted.remove(pos);
            }
            pending_pos += 1;
        }
        let i = (t - start_block) as usize;
        let state = &states[i];
        let price = price_y[i];
        let advice = (|| {
            let input_x = quote_input(state, size_usd, price)?;
            let base_fee_y = config.base_fee_usd / price;
            let intent = TradeIntent::new(input_x, 1.0, base_fee_y, *state).ok()?;
            let window = SlippageWindow::from_sorted(sorted.clone());
            choose_slippage_on_window(&intent, &window, params).ok()
        })();
        out.push(advice);
    }
    out
}

fn aggregate(pool_id: &str, size_usd: f64, policy: Policy, records: &[TradeRecord]) -> CostCell {
    let live: Vec<&TradeRecord> = records.iter().filter(|r| !r.abandoned).collect();
    let trades = live.len() as u64;
    let mean = if live.is_empty() {
        0.0
    } else {
        live.iter().map(|r| r.fractional_cost).sum::<f64>() / live.len() as f64
    };
    let failed: Vec<&&TradeRecord> = live.iter().filter(|r| r.failed_attempts > 0).collect();
    let avg_failed = if failed.is_empty() {
        0.0
    } else {
        failed.iter().map(|r| r.failed_attempts as f64).sum::<f64>() / failed.len() as f64
    };
    CostCell {
        pool_id: pool_id.to_string(),
        size_usd,
        policy,
        trades,
        mean_frac_cost: mean,
        failed_trades: failed.len() as u64,
        avg_failed_attempts: avg_failed,
        attacked_trades: live.iter().filter(|r| r.attacked).count() as u64,
        abandoned_trades: records.iter().filter(|r| r.abandoned).count() as u64,
    }
}

/// Convenience wrapper: builds the engine and runs the full replay.
pub fn run_replay(config: &ReplayConfig, dataset: &Dataset) -> Result<CostReport> {
    Ok(ReplayEngine::new(config, dataset)?.run())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_fixture, Dataset, FixtureSpec};
    use tempfile::tempdir;

    fn quiet_dataset(blocks: u64) -> (tempfile::TempDir, Dataset) {
        let dir = tempdir().unwrap();
        let spec = FixtureSpec {
            blocks,
            volatility: 0.0,
            ..FixtureSpec::default()
        };
        generate_fixture(&spec, dir.path()).unwrap();
        let ds = Dataset::load(dir.path(), 10).unwrap();
        (dir, ds)
    }

    #[test]
    fn quiet_fixture_ours_is_free() {
        let (_dir, ds) = quiet_dataset(300);
        let mut config = ReplayConfig::new((1, 300)).unwrap();
        config.trade_sizes_usd = vec![10.0];
        let report = run_replay(&config, &ds).unwrap();
        let ours = report.cell("POOL", 10.0, Policy::Ours).unwrap();
        assert_eq!(ours.attacked_trades, 0);
        assert_eq!(ours.failed_trades, 0);
        assert_eq!(ours.mean_frac_cost, 0.0);
    }

    #[test]
    fn quiet_fixture_baseline_attacked_when_large() {
        // s_u * out >= 2b: 0.005 * out >= 8 => out >= $1600.
        let (_dir, ds) = quiet_dataset(300);
        let mut config = ReplayConfig::new((1, 300)).unwrap();
        config.trade_sizes_usd = vec![10_000.0];
        let report = run_replay(&config, &ds).unwrap();
        let base = report.cell("POOL", 10_000.0, Policy::Baseline).unwrap();
        assert_eq!(base.attacked_trades, base.trades);
        assert_eq!(base.failed_trades, 0);
        assert!((base.mean_frac_cost - 0.005).abs() < 1e-12);
        // Every simulated block is an attackable cell for the baseline.
        let (lo, hi) = ((1u64) + 2, 300u64 - 1);
        assert_eq!(base.trades, hi - lo + 1);
    }

    #[test]
    fn single_jump_fixture_fails_once() {
        // Constant reserves except one adverse jump; a trade straddling the
        // jump fails once, pays the retry fee plus re-quote, then executes.
        let dir = tempdir().unwrap();
        let mut snaps = Vec::new();
        let mut prices = Vec::new();
        let blocks = 60u64;
        let jump_at = 40u64;
        for b in 1..=blocks {
            // 1% adverse move at the jump block.
            let y = if b >= jump_at { 1e7 / 1.01 } else { 1e7 };
            let x = 1e14 / y;
            snaps.push(crate::data::PoolSnapshotRecord {
                pool_id: "POOL".into(),
                block: b,
                reserve_x: x,
                reserve_y: y,
                fee: Some(0.003),
            });
            prices.push(crate::data::PriceFeedRecord {
                token: "TKY".into(),
                block: b,
                usd_price: 1.0,
            });
        }
        crate::data::write_snapshots(&dir.path().join("snapshots.csv"), &snaps).unwrap();
        crate::data::write_price_feed(&dir.path().join("prices.csv"), &prices).unwrap();
        std::fs::write(
            dir.path().join("pools.csv"),
            "pool_id,token_x,token_y\nPOOL,TKX,TKY\n",
        )
        .unwrap();
        let ds = Dataset::load(dir.path(), 10).unwrap();

        let mut config = ReplayConfig::new((1, blocks)).unwrap();
        config.trade_sizes_usd = vec![100.0];
        let report = run_replay(&config, &ds).unwrap();
        let base = report.cell("POOL", 100.0, Policy::Baseline).unwrap();
        // Only the trade placed at the jump block fails (0.01 > 0.005), and
        // only once.
        assert_eq!(base.failed_trades, 1);
        assert!((base.avg_failed_attempts - 1.0).abs() < 1e-12);
        assert_eq!(base.attacked_trades, 0);
    }

    #[test]
    fn report_ratio_infinite_when_ours_free() {
        let (_dir, ds) = quiet_dataset(300);
        let mut config = ReplayConfig::new((1, 300)).unwrap();
        config.trade_sizes_usd = vec![10_000.0];
        let report = run_replay(&config, &ds).unwrap();
        let ratios = report.ratios();
        assert_eq!(ratios.len(), 1);
        assert!(ratios[0].cost_ratio.is_infinite());
        let mut buf = Vec::new();
        report.write_ratio_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().contains("inf"));
    }

    #[test]
    fn empty_report_is_header_only() {
        let report = CostReport::default();
        let mut buf = Vec::new();
        report.write_costs_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "pool,size_usd,policy,mean_frac_cost,failed_trades,avg_failed_attempts,attacked_trades\n"
        );
    }

    #[test]
    fn replay_is_deterministic() {
        let dir = tempdir().unwrap();
        let spec = FixtureSpec {
            blocks: 400,
            volatility: 2e-4,
            seed: 11,
            ..FixtureSpec::default()
        };
        generate_fixture(&spec, dir.path()).unwrap();
        let ds = Dataset::load(dir.path(), 10).unwrap();
        let mut config = ReplayConfig::new((1, 400)).unwrap();
        config.trade_sizes_usd = vec![100.0, 10_000.0];
        let r1 = run_replay(&config, &ds).unwrap();
        let r2 = run_replay(&config, &ds).unwrap();
        let (mut a, mut b) = (Vec::new(), Vec::new());
        r1.write_costs_csv(&mut a).unwrap();
        r2.write_costs_csv(&mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn attacked_records_respect_threshold() {
        let dir = tempdir().unwrap();
        let spec = FixtureSpec {
            blocks: 400,
            volatility: 2e-4,
            seed: 3,
            ..FixtureSpec::default()
        };
        generate_fixture(&spec, dir.path()).unwrap();
        let ds = Dataset::load(dir.path(), 10).unwrap();
        let mut config = ReplayConfig::new((1, 400)).unwrap();
        config.trade_sizes_usd = vec![100_000.0];
        let engine = ReplayEngine::new(&config, &ds).unwrap();
        let pool = &engine.pools[0];
        let (lo, hi) = engine.sim_range();
        for t in lo..=hi {
            let rec = engine
                .simulate_trade(pool, &pool.per_size[0], t, Policy::Ours)
                .unwrap();
            if rec.attacked {
                // chosen_s * out >= 2 b_y at the execution block, checked via
                // the record's own invariant fields.
                assert!(rec.failed_attempts == 0 || rec.fractional_cost > 0.0);
                assert!(rec.chosen_s > 0.0);
            }
            if rec.failed_attempts > 0 {
                assert!(rec.fractional_cost > 0.0);
            }
        }
    }
}
