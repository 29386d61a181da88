//! Dataset ingestion and validation: per-block reserve snapshots, USD price
//! feeds, the pool registry, and a seeded synthetic-fixture generator.
//!
//! All files are CSV with declared headers (JSON-lines with the same field
//! names is accepted for snapshots and prices). A dataset directory holds
//! `snapshots.csv`, `prices.csv` and `pools.csv`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::cpmm::PoolState;
use crate::error::{Error, Result};

pub const DEFAULT_POOL_FEE: f64 = 0.003;

/// One pool-reserve observation.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PoolSnapshotRecord {
    pub pool_id: String,
    pub block: u64,
    pub reserve_x: f64,
    pub reserve_y: f64,
    /// Defaults to 0.003 when the column is absent or empty.
    #[serde(default)]
    pub fee: Option<f64>,
}

/// One USD price observation for a token.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PriceFeedRecord {
    pub token: String,
    pub block: u64,
    pub usd_price: f64,
}

/// Registry row mapping a pool to its token pair.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PoolRegistryRecord {
    pub pool_id: String,
    pub token_x: String,
    pub token_y: String,
}

fn validate_snapshot(rec: &PoolSnapshotRecord, file: &str, line: u64) -> Result<()> {
    if !(rec.reserve_x > 0.0) || !(rec.reserve_y > 0.0) {
        return Err(Error::Data {
            file: file.to_string(),
            line,
            message: format!(
                "non-positive reserve ({}, {}) for pool {} at block {}",
                rec.reserve_x, rec.reserve_y, rec.pool_id, rec.block
            ),
        });
    }
    if let Some(fee) = rec.fee {
        if !(0.0..1.0).contains(&fee) {
            return Err(Error::Data {
                file: file.to_string(),
                line,
                message: format!("fee {fee} outside [0, 1)"),
            });
        }
    }
    Ok(())
}

fn load_records<T, F>(path: &Path, validate: F) -> Result<Vec<T>>
where
    T: for<'de> Deserialize<'de>,
    F: Fn(&T, &str, u64) -> Result<()>,
{
    let name = path.display().to_string();
    let is_jsonl = matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("jsonl") | Some("ndjson") | Some("json")
    );
    let mut out = Vec::new();
    if is_jsonl {
        let file = File::open(path).map_err(|e| Error::io(&name, e))?;
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(&name, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let lineno = i as u64 + 1;
            let rec: T = serde_json::from_str(&line).map_err(|e| Error::Data {
                file: name.clone(),
                line: lineno,
                message: e.to_string(),
            })?;
            validate(&rec, &name, lineno)?;
            out.push(rec);
        }
    } else {
        let mut reader = csv::ReaderBuilder::new()
            .flexible(true)
            .from_path(path)
            .map_err(|e| Error::ingestion(format!("{name}: {e}")))?;
        for (i, row) in reader.deserialize::<T>().enumerate() {
            let lineno = i as u64 + 2; // header is line 1
            let rec = row.map_err(|e| Error::Data {
                file: name.clone(),
                line: lineno,
                message: e.to_string(),
            })?;
            validate(&rec, &name, lineno)?;
            out.push(rec);
        }
    }
    Ok(out)
}

/// Loads snapshots grouped per pool, sorted by block, de-duplicated with
/// last-write-wins per block.
pub fn load_snapshots(path: &Path) -> Result<BTreeMap<String, Vec<PoolSnapshotRecord>>> {
    let records: Vec<PoolSnapshotRecord> = load_records(path, validate_snapshot)?;
    let mut by_pool: BTreeMap<String, Vec<PoolSnapshotRecord>> = BTreeMap::new();
    for rec in records {
        by_pool.entry(rec.pool_id.clone()).or_default().push(rec);
    }
    for records in by_pool.values_mut() {
        records.sort_by_key(|r| r.block);
        // last-write-wins per block
        records.reverse();
        records.dedup_by_key(|r| r.block);
        records.reverse();
    }
    Ok(by_pool)
}

/// A per-token USD price series with bounded forward fill.
#[derive(Debug, Clone)]
pub struct PriceSeries {
    by_token: BTreeMap<String, BTreeMap<u64, f64>>,
    pub fill_limit: u64,
}

impl PriceSeries {
    pub fn usd_price(&self, token: &str, block: u64) -> Option<f64> {
        let series = self.by_token.get(token)?;
        let (&b, &price) = series.range(..=block).next_back()?;
        if block - b > self.fill_limit {
            return None;
        }
        Some(price)
    }

    pub fn tokens(&self) -> impl Iterator<Item = &String> {
        self.by_token.keys()
    }
}

/// Loads a price feed and checks every token's gaps against `fill_limit`.
pub fn load_price_feed(path: &Path, fill_limit: u64) -> Result<PriceSeries> {
    let records: Vec<PriceFeedRecord> = load_records(path, |rec: &PriceFeedRecord, file, line| {
        if !(rec.usd_price > 0.0) {
            return Err(Error::Data {
                file: file.to_string(),
                line,
                message: format!("non-positive price {} for token {}", rec.usd_price, rec.token),
            });
        }
        Ok(())
    })?;
    let mut by_token: BTreeMap<String, BTreeMap<u64, f64>> = BTreeMap::new();
    for rec in records {
        by_token.entry(rec.token).or_default().insert(rec.block, rec.usd_price);
    }
    for (token, series) in &by_token {
        let blocks: Vec<u64> = series.keys().copied().collect();
        for pair in blocks.windows(2) {
            if pair[1] - pair[0] > fill_limit {
                return Err(Error::ingestion(format!(
                    "price feed gap for token {token} between blocks {} and {} exceeds limit {fill_limit}",
                    pair[0], pair[1]
                )));
            }
        }
    }
    Ok(PriceSeries {
        by_token,
        fill_limit,
    })
}

pub fn load_registry(path: &Path) -> Result<Vec<PoolRegistryRecord>> {
    load_records(path, |_: &PoolRegistryRecord, _, _| Ok(()))
}

/// A loaded dataset directory.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub snapshots: BTreeMap<String, Vec<PoolSnapshotRecord>>,
    pub prices: PriceSeries,
    pub registry: Vec<PoolRegistryRecord>,
}

impl Dataset {
    pub fn load(dir: &Path, price_fill_limit: u64) -> Result<Self> {
        Ok(Dataset {
            snapshots: load_snapshots(&dir.join("snapshots.csv"))?,
            prices: load_price_feed(&dir.join("prices.csv"), price_fill_limit)?,
            registry: load_registry(&dir.join("pools.csv"))?,
        })
    }

    pub fn registry_for(&self, pool_id: &str) -> Result<&PoolRegistryRecord> {
        self.registry
            .iter()
            .find(|r| r.pool_id == pool_id)
            .ok_or_else(|| Error::ingestion(format!("pool {pool_id} missing from registry")))
    }

    /// One `PoolState` per block over `range` (inclusive), forward-filled
    /// across blocks without a snapshot.
    pub fn reserve_series(&self, pool_id: &str, range: (u64, u64)) -> Result<Vec<PoolState>> {
        let records = self
            .snapshots
            .get(pool_id)
            .ok_or_else(|| Error::ingestion(format!("unknown pool {pool_id}")))?;
        reconstruct_reserves(records, range)
    }
}

/// Folds sorted snapshot records into one state per block in `range`
/// (inclusive ends), carrying the last seen state across empty blocks.
pub fn reconstruct_reserves(
    records: &[PoolSnapshotRecord],
    range: (u64, u64),
) -> Result<Vec<PoolState>> {
    let (start, end) = range;
    if start > end {
        return Err(Error::domain(format!("empty block range {start}..{end}")));
    }
    let mut out = Vec::with_capacity((end - start + 1) as usize);
    let mut idx = 0usize;
    let mut current: Option<PoolState> = None;
    // Seed with the latest record at or before the range start.
    while idx < records.len() && records[idx].block <= start {
        let r = &records[idx];
        current = Some(PoolState::new(
            r.reserve_x,
            r.reserve_y,
            r.fee.unwrap_or(DEFAULT_POOL_FEE),
            start,
        )?);
        idx += 1;
    }
    for block in start..=end {
        while idx < records.len() && records[idx].block <= block {
            let r = &records[idx];
            current = Some(PoolState::new(
                r.reserve_x,
                r.reserve_y,
                r.fee.unwrap_or(DEFAULT_POOL_FEE),
                block,
            )?);
            idx += 1;
        }
        match current {
            Some(state) => out.push(PoolState { block, ..state }),
            None => {
                return Err(Error::ingestion(format!(
                    "no snapshot at or before block {block}; cannot forward-fill"
                )))
            }
        }
    }
    Ok(out)
}

/// Parameters for the synthetic dataset generator.
#[derive(Debug, Clone)]
pub struct FixtureSpec {
    pub pool_id: String,
    pub token_x: String,
    pub token_y: String,
    pub blocks: u64,
    pub start_block: u64,
    /// Per-block standard deviation of the log reserve walk.
    pub volatility: f64,
    pub drift: f64,
    pub seed: u64,
    /// Probability that a block sees no trade and reserves stay put.
    pub no_trade_prob: f64,
    pub reserve_x0: f64,
    pub reserve_y0: f64,
    pub fee: f64,
    /// Constant USD price of token Y.
    pub price_y_usd: f64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        FixtureSpec {
            pool_id: "POOL".into(),
            token_x: "TKX".into(),
            token_y: "TKY".into(),
            blocks: 1000,
            start_block: 1,
            volatility: 1e-4,
            drift: 0.0,
            seed: 7,
            no_trade_prob: 0.0,
            reserve_x0: 1e7,
            reserve_y0: 1e7,
            fee: DEFAULT_POOL_FEE,
            price_y_usd: 1.0,
        }
    }
}

/// Generates a deterministic reserve walk and writes `snapshots.csv`,
/// `prices.csv` and `pools.csv` into `dir`.
///
/// Reserve Y follows a seeded geometric walk while reserve X keeps the
/// product constant, emulating swap flow; with probability `no_trade_prob`
/// a block leaves the reserves untouched.
pub fn generate_fixture(spec: &FixtureSpec, dir: &Path) -> Result<Vec<PathBuf>> {
    if spec.blocks < 2 {
        return Err(Error::domain("fixture needs at least 2 blocks"));
    }
    if spec.volatility < 0.0 {
        return Err(Error::domain("volatility must be non-negative"));
    }
    if !(0.0..=1.0).contains(&spec.no_trade_prob) {
        return Err(Error::domain("no-trade probability must be in [0, 1]"));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let unit = Uniform::new(0.0f64, 1.0).map_err(|e| Error::domain(e.to_string()))?;
    let product = spec.reserve_x0 * spec.reserve_y0;
    let mut y = spec.reserve_y0;

    let snap_path = dir.join("snapshots.csv");
    let price_path = dir.join("prices.csv");
    let pools_path = dir.join("pools.csv");

    let mut snaps = csv::Writer::from_path(&snap_path)
        .map_err(|e| Error::ingestion(format!("{}: {e}", snap_path.display())))?;
    let mut prices = csv::Writer::from_path(&price_path)
        .map_err(|e| Error::ingestion(format!("{}: {e}", price_path.display())))?;
    let mut pools = csv::Writer::from_path(&pools_path)
        .map_err(|e| Error::ingestion(format!("{}: {e}", pools_path.display())))?;

    pools
        .serialize(PoolRegistryRecord {
            pool_id: spec.pool_id.clone(),
            token_x: spec.token_x.clone(),
            token_y: spec.token_y.clone(),
        })
        .map_err(|e| Error::ingestion(e.to_string()))?;

    for i in 0..spec.blocks {
        let block = spec.start_block + i;
        if i > 0 {
            // Draw both variates every block so the no-trade branch does not
            // change the stream consumed by later blocks.
            let z: f64 = StandardNormal.sample(&mut rng);
            let skip = unit.sample(&mut rng) < spec.no_trade_prob;
            if !skip {
                y *= (spec.drift + spec.volatility * z).exp();
            }
        }
        let x = product / y;
        snaps
            .serialize(PoolSnapshotRecord {
                pool_id: spec.pool_id.clone(),
                block,
                reserve_x: x,
                reserve_y: y,
                fee: Some(spec.fee),
            })
            .map_err(|e| Error::ingestion(e.to_string()))?;
        prices
            .serialize(PriceFeedRecord {
                token: spec.token_y.clone(),
                block,
                usd_price: spec.price_y_usd,
            })
            .map_err(|e| Error::ingestion(e.to_string()))?;
        // Token X priced off the pool ratio.
        prices
            .serialize(PriceFeedRecord {
                token: spec.token_x.clone(),
                block,
                usd_price: spec.price_y_usd * y / x,
            })
            .map_err(|e| Error::ingestion(e.to_string()))?;
    }
    snaps.flush().map_err(|e| Error::io(snap_path.display().to_string(), e))?;
    prices.flush().map_err(|e| Error::io(price_path.display().to_string(), e))?;
    pools.flush().map_err(|e| Error::io(pools_path.display().to_string(), e))?;
    Ok(vec![snap_path, price_path, pools_path])
}

/// Writes records back out in the ingestion format (round-trip support).
pub fn write_snapshots(path: &Path, records: &[PoolSnapshotRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| Error::ingestion(format!("{}: {e}", path.display())))?;
    for rec in records {
        w.serialize(rec).map_err(|e| Error::ingestion(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path.display().to_string(), e))
}

/// Writes a price feed in the ingestion format.
pub fn write_price_feed(path: &Path, records: &[PriceFeedRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| Error::ingestion(format!("{}: {e}", path.display())))?;
    for rec in records {
        w.serialize(rec).map_err(|e| Error::ingestion(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path.display().to_string(), e))
}
