use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use sandwich::attack::{optimal_attack, AttackPlan};
use sandwich::cpmm::{PoolState, TradeIntent};
use sandwich::data::{generate_fixture, Dataset, FixtureSpec};
use sandwich::error::Error;
use sandwich::policy::{choose_slippage, PolicyParams, Regime, SlippageAdvice};
use sandwich::replay::{run_replay, ReplayConfig, DEFAULT_TRADE_SIZES_USD};
use sandwich::stats::{block_slippage_series, prediction_accuracy, SlippageHistory};

#[derive(Parser)]
#[command(name = "sandwich", version, about = "Sandwich-attack analysis for constant-product pools")]
struct Cli {
    /// Output format for reports.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Size the optimal sandwich against a single trade.
    Attack(AttackArgs),
    /// Recommend a slippage tolerance for a trade at a given block.
    Advise(AdviseArgs),
    /// Predict block slippage from recent history and score the predictor.
    Predict(PredictArgs),
    /// Replay a block range comparing the adaptive policy to a constant
    /// auto-slippage baseline.
    Replay(ReplayArgs),
    /// Generate a deterministic synthetic dataset directory.
    GenFixture(GenFixtureArgs),
}

#[derive(Args)]
struct AttackArgs {
    #[arg(long)]
    reserve_x: f64,
    #[arg(long)]
    reserve_y: f64,
    /// Pool fee fraction charged on swap input.
    #[arg(long, default_value_t = 0.003)]
    fee: f64,
    /// Victim input in token X.
    #[arg(long)]
    victim_input: f64,
    /// Victim slippage tolerance in (0, 1]; 1 means none set.
    #[arg(long, default_value_t = 1.0)]
    slippage: f64,
    /// Per-transaction base fee in token X.
    #[arg(long, default_value_t = 0.0)]
    base_fee_x: f64,
}

#[derive(Args)]
struct DataArgs {
    /// Dataset directory holding snapshots.csv, prices.csv, pools.csv.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    pool: String,
    /// Maximum block gap bridged by price forward fill.
    #[arg(long, default_value_t = 100)]
    fill_limit: u64,
}

#[derive(Args)]
struct AdviseArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Block at which the trade would be placed.
    #[arg(long)]
    block: u64,
    /// Trade size as USD worth of token Y received.
    #[arg(long)]
    size_usd: f64,
    /// Per-transaction base fee in USD.
    #[arg(long, default_value_t = 4.0)]
    base_fee_usd: f64,
    #[arg(long, default_value_t = 2000)]
    window: usize,
}

#[derive(Args)]
struct PredictArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    block: u64,
    #[arg(long)]
    size_usd: f64,
    /// Target failure probability of the prediction.
    #[arg(long, default_value_t = 0.005)]
    prob: f64,
    #[arg(long, default_value_t = 2000)]
    window: usize,
    /// Also score the predictor over [eval-start, block).
    #[arg(long)]
    eval_start: Option<u64>,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    start: u64,
    #[arg(long)]
    end: u64,
    /// Comma-separated USD trade sizes.
    #[arg(long, value_delimiter = ',')]
    sizes: Vec<f64>,
    #[arg(long, default_value_t = 4.0)]
    base_fee_usd: f64,
    #[arg(long, default_value_t = 0.005)]
    baseline_slippage: f64,
    #[arg(long, default_value_t = 2000)]
    window: usize,
    #[arg(long, default_value_t = 100)]
    fill_limit: u64,
    /// Directory for report_costs.csv and report_ratio.csv; stdout if unset.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct GenFixtureArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1000)]
    blocks: u64,
    #[arg(long, default_value_t = 1e-4)]
    volatility: f64,
    #[arg(long, default_value_t = 0.0)]
    drift: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 0.0)]
    no_trade_prob: f64,
    #[arg(long, default_value_t = 1e7)]
    reserve_x: f64,
    #[arg(long, default_value_t = 1e7)]
    reserve_y: f64,
    #[arg(long, default_value_t = 0.003)]
    fee: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::NotEnoughData { .. } => 3,
                Error::Ingestion(_) | Error::Data { .. } | Error::Io { .. } => 4,
                _ => 1,
            })
        }
    }
}

fn run(cli: &Cli) -> sandwich::Result<()> {
    match &cli.command {
        Command::Attack(args) => cmd_attack(args, cli.format),
        Command::Advise(args) => cmd_advise(args, cli.format),
        Command::Predict(args) => cmd_predict(args, cli.format),
        Command::Replay(args) => cmd_replay(args, cli.format),
        Command::GenFixture(args) => cmd_gen_fixture(args),
    }
}

fn cmd_attack(args: &AttackArgs, format: Format) -> sandwich::Result<()> {
    let pool = PoolState::new(args.reserve_x, args.reserve_y, args.fee, 0)?;
    let intent = TradeIntent::new(args.victim_input, args.slippage, 0.0, pool)?;
    let plan = optimal_attack(&intent, args.base_fee_x)?;
    print_plan(&plan, format);
    Ok(())
}

fn print_plan(plan: &AttackPlan, format: Format) {
    let constraint = format!("{:?}", plan.binding_constraint);
    match format {
        Format::Csv => {
            println!("input_x,frontrun_output_y,backrun_output_x,profit_x,binding_constraint");
            println!(
                "{},{},{},{},{}",
                plan.input_x,
                plan.frontrun_output_y,
                plan.backrun_output_x,
                plan.profit_x,
                constraint
            );
        }
        Format::Text => {
            println!("binding constraint : {constraint}");
            println!("front-run input X  : {:.6e}", plan.input_x);
            println!("front-run output Y : {:.6e}", plan.frontrun_output_y);
            println!("back-run output X  : {:.6e}", plan.backrun_output_x);
            println!("net profit X       : {:.6e}", plan.profit_x);
        }
    }
}

/// Builds the pool's slippage history for one USD size up to `block`
/// (exclusive of `block` itself, so advice never sees the future).
fn history_up_to(
    dataset: &Dataset,
    pool_id: &str,
    block: u64,
    size_usd: f64,
    window: usize,
) -> sandwich::Result<(SlippageHistory, PoolState, f64)> {
    let records = dataset
        .snapshots
        .get(pool_id)
        .ok_or_else(|| Error::ingestion(format!("unknown pool {pool_id}")))?;
    let first = records.first().map(|r| r.block).ok_or(Error::NotEnoughData {
        needed: 2,
        available: 0,
    })?;
    if block < first + 2 {
        return Err(Error::NotEnoughData {
            needed: 2,
            available: (block.saturating_sub(first)) as usize,
        });
    }
    let registry = dataset.registry_for(pool_id)?;
    let states = dataset.reserve_series(pool_id, (first, block))?;
    let price = |b: u64| dataset.prices.usd_price(&registry.token_y, b);
    let history = block_slippage_series(pool_id, &states, size_usd, price, window)?;
    let at = *states.last().expect("non-empty by construction");
    let price_now = price(block).ok_or_else(|| {
        Error::ingestion(format!("no USD price for {} at block {block}", registry.token_y))
    })?;
    Ok((history, at, price_now))
}

fn cmd_advise(args: &AdviseArgs, format: Format) -> sandwich::Result<()> {
    let dataset = Dataset::load(&args.data.data, args.data.fill_limit)?;
    let (history, state, price_y) = history_up_to(
        &dataset,
        &args.data.pool,
        args.block,
        args.size_usd,
        args.window,
    )?;
    let target_y = args.size_usd / price_y;
    let input_x = sandwich::cpmm::swap_input_for_output(&state, target_y)?;
    let intent = TradeIntent::new(input_x, 1.0, args.base_fee_usd / price_y, state)?;
    let params = PolicyParams {
        window: args.window,
        ..PolicyParams::default()
    };
    let advice = choose_slippage(&intent, &history, args.block, &params)?;
    print_advice(&advice, args, format);
    Ok(())
}

fn print_advice(advice: &SlippageAdvice, args: &AdviseArgs, format: Format) {
    let regime = match advice.regime {
        Regime::AttackFree => "attack-free",
        Regime::Unavoidable => "unavoidable",
    };
    match format {
        Format::Csv => {
            println!("pool,block,size_usd,chosen,s_a,s_r,regime,failure_prob,tail_expectation,low_confidence");
            println!(
                "{},{},{},{:e},{:e},{:e},{},{:e},{:e},{}",
                args.data.pool,
                args.block,
                args.size_usd,
                advice.chosen,
                advice.s_a,
                advice.s_r,
                regime,
                advice.failure_prob,
                advice.tail_expectation,
                advice.low_confidence
            );
        }
        Format::Text => {
            println!("pool {} block {} size ${}", args.data.pool, args.block, args.size_usd);
            println!("chosen tolerance      : {:.6e}", advice.chosen);
            println!("attack-free bound s_a : {:.6e}", advice.s_a);
            println!("failure-cost bound s_r: {:.6e}", advice.s_r);
            println!("regime                : {regime}");
            println!("failure probability   : {:.6e}", advice.failure_prob);
            println!("tail expectation      : {:.6e}", advice.tail_expectation);
            if advice.low_confidence {
                println!("warning: short window, zero failure rate may be luck");
            }
        }
    }
}

fn cmd_predict(args: &PredictArgs, format: Format) -> sandwich::Result<()> {
    let dataset = Dataset::load(&args.data.data, args.data.fill_limit)?;
    let (history, _, _) = history_up_to(
        &dataset,
        &args.data.pool,
        args.block,
        args.size_usd,
        args.window,
    )?;
    let pred = sandwich::stats::quantile_slippage(&history, args.block, args.prob)?;
    let fail = sandwich::stats::failure_probability(&history, args.block, pred)?;
    let tail = sandwich::stats::tail_expectation(&history, args.block, pred)?;
    match format {
        Format::Csv => {
            println!("pool,block,size_usd,prob,predicted_s,failure_prob,tail_expectation");
            println!(
                "{},{},{},{},{:e},{:e},{:e}",
                args.data.pool, args.block, args.size_usd, args.prob, pred, fail, tail
            );
        }
        Format::Text => {
            println!("pool {} block {} size ${}", args.data.pool, args.block, args.size_usd);
            println!("tolerance for target failure {:.4}: {:.6e}", args.prob, pred);
            println!("window failure probability at it : {:.6e}", fail);
            println!("tail expectation beyond it       : {:.6e}", tail);
        }
    }
    if let Some(start) = args.eval_start {
        let report = prediction_accuracy(&history, args.prob, args.window, (start, args.block))?;
        match format {
            Format::Csv => {
                println!("mean_abs,vol_abs,pred_mean,rel_error");
                println!(
                    "{:e},{:e},{:e},{:e}",
                    report.mean_abs, report.vol_abs, report.pred_mean, report.rel_error
                );
            }
            Format::Text => {
                println!("-- predictor score over [{start}, {}) --", args.block);
                println!("mean |move|          : {:.6e}", report.mean_abs);
                println!("volatility of |move| : {:.6e}", report.vol_abs);
                println!("mean prediction      : {:.6e}", report.pred_mean);
                println!("relative freq error  : {:.6e}", report.rel_error);
            }
        }
    }
    Ok(())
}

fn cmd_replay(args: &ReplayArgs, format: Format) -> sandwich::Result<()> {
    let dataset = Dataset::load(&args.data, args.fill_limit)?;
    let mut config = ReplayConfig::new((args.start, args.end))?;
    config.trade_sizes_usd = if args.sizes.is_empty() {
        DEFAULT_TRADE_SIZES_USD.to_vec()
    } else {
        args.sizes.clone()
    };
    config.base_fee_usd = args.base_fee_usd;
    config.baseline_slippage = args.baseline_slippage;
    config.policy_params.window = args.window;
    config.validate()?;
    let report = run_replay(&config, &dataset)?;
    match &args.out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
            let costs = dir.join("report_costs.csv");
            let ratio = dir.join("report_ratio.csv");
            let f = std::fs::File::create(&costs)
                .map_err(|e| Error::io(costs.display().to_string(), e))?;
            report
                .write_costs_csv(f)
                .map_err(|e| Error::io(costs.display().to_string(), e))?;
            let f = std::fs::File::create(&ratio)
                .map_err(|e| Error::io(ratio.display().to_string(), e))?;
            report
                .write_ratio_csv(f)
                .map_err(|e| Error::io(ratio.display().to_string(), e))?;
            println!("wrote {} and {}", costs.display(), ratio.display());
        }
        None => {
            let stdout = std::io::stdout();
            let lock = stdout.lock();
            let result = match format {
                Format::Csv => {
                    let mut lock = lock;
                    report.write_costs_csv(&mut lock).and_then(|()| {
                        use std::io::Write;
                        writeln!(lock)?;
                        report.write_ratio_csv(&mut lock)
                    })
                }
                Format::Text => report.render_text(lock),
            };
            result.map_err(|e| Error::io("stdout", e))?;
        }
    }
    Ok(())
}

fn cmd_gen_fixture(args: &GenFixtureArgs) -> sandwich::Result<()> {
    let spec = FixtureSpec {
        blocks: args.blocks,
        volatility: args.volatility,
        drift: args.drift,
        seed: args.seed,
        no_trade_prob: args.no_trade_prob,
        reserve_x0: args.reserve_x,
        reserve_y0: args.reserve_y,
        fee: args.fee,
        ..FixtureSpec::default()
    };
    let files = generate_fixture(&spec, &args.out)?;
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}
