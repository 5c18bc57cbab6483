use std::fs::File;
use std::io::{self, Read};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use credchain::api;
use credchain::config::{Config, Overrides};
use credchain::scenario::{self, Runner};
use credchain::store::{self, Store, StoreError};
use credchain_core::ledger::{validate_chain, Address, Chain};
use credchain_core::registry::Role;
use credchain_core::Md5;
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "credchain",
    version,
    about = "Achievement registry on a simulated proof-of-work ledger"
)]
struct Cli {
    /// JSON config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    /// Seed for every random choice.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Leading zero hex digits required of block hashes.
    #[arg(long, global = true)]
    difficulty: Option<u8>,
    /// Machine-readable output.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP service and the mining scheduler.
    Serve {
        #[arg(long)]
        port: Option<u16>,
        /// Milliseconds between mining rounds.
        #[arg(long)]
        tick_ms: Option<u64>,
    },
    /// Actor scripts.
    Scenario {
        #[command(subcommand)]
        action: ScenarioCommand,
    },
    /// Chain file tools.
    Chain {
        #[command(subcommand)]
        action: ChainCommand,
    },
    /// Print the MD5 digest of a file.
    Hash { file: PathBuf },
    /// Credit a wallet.
    Faucet { address: String, amount: u64 },
    /// Run mining rounds.
    Mine { rounds: usize },
}

#[derive(Subcommand)]
enum ScenarioCommand {
    /// Execute a script; state persists only when --data-dir is given.
    Run { file: PathBuf },
}

#[derive(Subcommand)]
enum ChainCommand {
    /// Validate and print the chain in the data directory.
    Inspect,
}

/// Error carrying the process exit status.
struct Exit(u8, String);

impl From<anyhow::Error> for Exit {
    fn from(e: anyhow::Error) -> Self {
        Exit(1, format!("{e:#}"))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Exit(code, message)) => {
            if !message.is_empty() {
                eprintln!("error: {message}");
            }
            ExitCode::from(code)
        }
    }
}

fn run(cli: Cli) -> Result<(), Exit> {
    let flags = Overrides {
        data_dir: cli.data_dir.clone(),
        seed: cli.seed,
        port: match &cli.command {
            Command::Serve { port, .. } => *port,
            _ => None,
        },
        difficulty: cli.difficulty,
        tick_interval_ms: match &cli.command {
            Command::Serve { tick_ms, .. } => *tick_ms,
            _ => None,
        },
    };
    let config =
        Config::load(cli.config.as_deref(), &flags).map_err(|e| Exit(2, format!("{e:#}")))?;
    match cli.command {
        Command::Serve { .. } => serve(config),
        Command::Scenario {
            action: ScenarioCommand::Run { file },
        } => run_scenario(&config, &file, cli.data_dir.is_some(), cli.json),
        Command::Chain {
            action: ChainCommand::Inspect,
        } => inspect(&config, cli.json),
        Command::Hash { file } => hash(&file, cli.json),
        Command::Faucet { address, amount } => faucet(&config, &address, amount, cli.json),
        Command::Mine { rounds } => mine(&config, rounds, cli.json),
    }
}

fn open_store(config: &Config) -> Result<Store, Exit> {
    let registry = config.registry().map_err(|e| Exit(2, format!("{e:#}")))?;
    Store::open(&config.data_dir, registry).map_err(store_exit)
}

fn store_exit(e: StoreError) -> Exit {
    Exit(1, format!("cannot use data directory: {e}"))
}

fn print(json_mode: bool, value: serde_json::Value, text: impl FnOnce() -> String) {
    if json_mode {
        println!("{value}");
    } else {
        println!("{}", text());
    }
}

fn hash(file: &Path, json_mode: bool) -> Result<(), Exit> {
    let mut input = File::open(file).map_err(|e| Exit(1, format!("{}: {e}", file.display())))?;
    let mut hasher = Md5::new();
    let mut buf = vec![0u8; 64 * 1024];
    loop {
        let n = match input.read(&mut buf) {
            Ok(0) => break,
            Ok(n) => n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(Exit(1, format!("{}: {e}", file.display()))),
        };
        hasher.update(&buf[..n]);
    }
    let digest = hasher.finalize();
    print(json_mode, json!({ "file": file, "digest": digest }), || {
        format!("{digest}  {}", file.display())
    });
    Ok(())
}

fn inspect(config: &Config, json_mode: bool) -> Result<(), Exit> {
    let path = config.data_dir.join(store::CHAIN_FILE);
    if !path.exists() {
        return Err(Exit(2, format!("{}: no such file", path.display())));
    }
    let params = config.params().map_err(|e| Exit(2, format!("{e:#}")))?;
    let blocks = store::read_chain_file(&path).map_err(|e| Exit(1, e.to_string()))?;
    let chain = Chain::from_blocks(params, blocks);
    let verdict = validate_chain(&chain);
    if json_mode {
        println!(
            "{}",
            json!({
                "file": path,
                "valid": verdict.is_ok(),
                "error": verdict.as_ref().err().map(|e| e.to_string()),
                "length": chain.len(),
                "blocks": chain.blocks(),
            })
        );
    } else {
        for block in chain.blocks() {
            println!(
                "#{:<5} {}  prev {}  nonce {:<8} txs {}",
                block.index,
                block.hash,
                block.prev_hash,
                block.nonce,
                block.transactions.len()
            );
            for tx in &block.transactions {
                println!(
                    "         tx {}  fee {}  {}",
                    tx.tx_id,
                    tx.gas_fee,
                    tx.payload.canonical_json()
                );
            }
        }
        match &verdict {
            Ok(()) => println!(
                "valid: {} blocks, difficulty {}",
                chain.len(),
                params.difficulty
            ),
            Err(e) => println!("INVALID: {e}"),
        }
    }
    match verdict {
        Ok(()) => Ok(()),
        Err(e) => Err(Exit(1, format!("{}: {e}", path.display()))),
    }
}

fn faucet(config: &Config, address: &str, amount: u64, json_mode: bool) -> Result<(), Exit> {
    let address: Address = address
        .parse()
        .map_err(|e| Exit(2, format!("invalid address {address}: {e}")))?;
    let mut store = open_store(config)?;
    let balance = store.registry_mut().fund(address, amount);
    store.sync().map_err(store_exit)?;
    print(
        json_mode,
        json!({ "address": address, "balance": balance }),
        || format!("{address} balance {balance}"),
    );
    Ok(())
}

fn mine(config: &Config, rounds: usize, json_mode: bool) -> Result<(), Exit> {
    let mut store = open_store(config)?;
    let reports = store
        .registry_mut()
        .mine(rounds)
        .map_err(|e| Exit(1, format!("mining failed: {e}")))?;
    store.sync().map_err(store_exit)?;
    for report in &reports {
        let block = &report.block;
        print(
            json_mode,
            json!({
                "index": block.index,
                "hash": block.hash,
                "winner": report.winner,
                "fees": report.fees,
                "transactions": block.transactions.len(),
            }),
            || {
                format!(
                    "block {} {} by node {} ({} txs, fees {})",
                    block.index,
                    block.hash,
                    report.winner,
                    block.transactions.len(),
                    report.fees
                )
            },
        );
    }
    Ok(())
}

fn run_scenario(config: &Config, file: &Path, persist: bool, json_mode: bool) -> Result<(), Exit> {
    let script = scenario::load(file).map_err(|e| Exit(e.exit_code() as u8, e.to_string()))?;
    let registry = config.registry().map_err(|e| Exit(2, format!("{e:#}")))?;
    let store = if persist {
        Store::open(&config.data_dir, registry).map_err(store_exit)?
    } else {
        Store::in_memory(registry).map_err(store_exit)?
    };
    let mut runner = Runner::new(store);
    let result = runner.run(&script);
    let mut store = runner.into_store();
    store.sync().map_err(store_exit)?;
    match result {
        Ok(reports) => {
            for report in &reports {
                print(json_mode, json!(report), || {
                    format!("line {:>3}  {:<20} ok", report.line, report.verb)
                });
            }
            print(json_mode, json!({ "passed": reports.len() }), || {
                format!("{}: {} steps passed", file.display(), reports.len())
            });
            Ok(())
        }
        Err(e) => Err(Exit(e.exit_code() as u8, e.to_string())),
    }
}

/// Creates the admin account and submits the deployment on a fresh data dir.
fn bootstrap(store: &mut Store, config: &Config) -> Result<()> {
    let registry = store.registry_mut();
    if registry.accounts().any(|a| a.role == Role::Admin) {
        return Ok(());
    }
    let admin = &config.admin;
    registry
        .bootstrap_admin(&admin.user_id, &admin.name, &admin.email, &admin.secret)
        .context("cannot create admin account")?;
    let token = registry.login(&admin.user_id, &admin.secret)?;
    let receipt = registry.deploy_contract(&token)?;
    registry.logout(&token)?;
    log::info!(
        "created admin `{}`; contract deployment {}",
        admin.user_id,
        receipt.tx_id
    );
    store.persist()?;
    Ok(())
}

fn serve(config: Config) -> Result<(), Exit> {
    let mut store = open_store(&config)?;
    bootstrap(&mut store, &config)?;
    let runtime = tokio::runtime::Runtime::new().context("cannot start runtime")?;
    let shared = Arc::new(Mutex::new(store));
    runtime.block_on(serve_async(config, shared.clone()))?;
    let mut store = shared
        .lock()
        .map_err(|_| Exit(1, "state lock poisoned".into()))?;
    store.sync().map_err(store_exit)?;
    log::info!("state flushed; shutting down");
    Ok(())
}

async fn serve_async(config: Config, shared: api::Shared) -> Result<(), Exit> {
    let addr = format!("127.0.0.1:{}", config.port);
    let listener = tokio::net::TcpListener::bind(&addr)
        .await
        .map_err(|e| Exit(1, format!("cannot listen on {addr}: {e}")))?;
    log::info!(
        "listening on http://{addr}, data in {}",
        config.data_dir.display()
    );

    let miner_state = shared.clone();
    let interval = Duration::from_millis(config.tick_interval_ms.max(1));
    let miner = tokio::spawn(async move {
        let mut ticker = tokio::time::interval(interval);
        ticker.tick().await;
        loop {
            ticker.tick().await;
            let state = miner_state.clone();
            let outcome = tokio::task::spawn_blocking(move || -> Result<()> {
                let mut store = state
                    .lock()
                    .map_err(|_| anyhow::anyhow!("state lock poisoned"))?;
                let reports = store.registry_mut().mine(1)?;
                store.persist()?;
                for r in reports.iter().filter(|r| !r.block.transactions.is_empty()) {
                    log::info!(
                        "block {} {} with {} txs",
                        r.block.index,
                        r.block.hash,
                        r.block.transactions.len()
                    );
                }
                Ok(())
            })
            .await;
            match outcome {
                Ok(Ok(())) => {}
                Ok(Err(e)) => log::error!("mining round failed: {e:#}"),
                Err(e) => log::error!("mining task failed: {e}"),
            }
        }
    });

    axum::serve(listener, api::router(shared))
        .with_graceful_shutdown(shutdown_signal())
        .await
        .map_err(|e| Exit(1, format!("server error: {e}")))?;
    miner.abort();
    let _ = miner.await;
    Ok(())
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let terminate = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let terminate = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = terminate => {}
    }
    log::info!("shutdown requested");
}
