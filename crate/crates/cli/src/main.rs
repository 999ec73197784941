use std::fs::File;
use std::io::{self, Write};
use std::net::TcpListener;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use dauction::auction::{PlainBid, SessionConfig, SessionParams, Side, AGENT_STREAM, BIDDER_STREAM};
use dauction::bench::{run_benchmark, write_csv, BenchmarkGrid, CSV_HEADER};
use dauction::gm::DEFAULT_KEY_BITS;
use dauction::net::{run_agent, run_auctioneer, submit_bid, Collection};
use dauction::SortAlgorithm;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Role {
    Agent,
    Auctioneer,
    Bidder,
    Bench,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum SideArg {
    Seller,
    Buyer,
}

/// Private double auction: agent, auctioneer and bidder roles, plus the
/// benchmark harness. Every flag can also be set through a DAUCTION_*
/// environment variable.
#[derive(Debug, Parser)]
#[command(name = "dauction", version)]
struct Cli {
    #[arg(long, value_enum, env = "DAUCTION_ROLE")]
    role: Role,

    /// Address to accept connections on (agent: from the auctioneer;
    /// auctioneer: from bidders). Port 0 picks a free port.
    #[arg(long, env = "DAUCTION_LISTEN")]
    listen: Option<String>,

    /// Peer to connect to (auctioneer: the agent; bidder: the auctioneer).
    #[arg(long, env = "DAUCTION_CONNECT")]
    connect: Option<String>,

    /// Sort algorithm; the benchmark takes a comma-separated list.
    #[arg(long, env = "DAUCTION_SORT", value_delimiter = ',', default_value = "oesort")]
    sort: Vec<SortAlgorithm>,

    /// Bid width in bits; the benchmark takes a comma-separated list.
    #[arg(long, env = "DAUCTION_BITLEN", value_delimiter = ',', default_value = "8")]
    bitlen: Vec<usize>,

    /// ID width in bits.
    #[arg(long, env = "DAUCTION_IDLEN", default_value_t = 16)]
    idlen: usize,

    /// Bids expected per side (auctioneer) or market sizes (benchmark).
    #[arg(long, env = "DAUCTION_N", value_delimiter = ',')]
    n: Vec<usize>,

    /// Modulus size; the benchmark defaults to 64.
    #[arg(long, env = "DAUCTION_KEYBITS")]
    keybits: Option<usize>,

    #[arg(long, env = "DAUCTION_SEED")]
    seed: Option<u64>,

    #[arg(long, env = "DAUCTION_REPS", default_value_t = 10)]
    reps: usize,

    /// Benchmark output; stdout when absent.
    #[arg(long, env = "DAUCTION_CSV")]
    csv: Option<PathBuf>,

    /// Sellers expected by the auctioneer (overrides --n).
    #[arg(long, env = "DAUCTION_SELLERS")]
    sellers: Option<usize>,

    /// Buyers expected by the auctioneer (overrides --n).
    #[arg(long, env = "DAUCTION_BUYERS")]
    buyers: Option<usize>,

    /// Seconds the auctioneer waits for bids.
    #[arg(long, env = "DAUCTION_DEADLINE", default_value_t = 60)]
    deadline: u64,

    /// Seconds to keep retrying a refused connection.
    #[arg(long, env = "DAUCTION_PATIENCE", default_value_t = 10)]
    patience: u64,

    #[arg(long, value_enum, env = "DAUCTION_SIDE")]
    side: Option<SideArg>,

    #[arg(long, env = "DAUCTION_VALUE")]
    value: Option<u64>,

    #[arg(long, env = "DAUCTION_ID")]
    id: Option<u64>,
}

impl Cli {
    fn single_sort(&self) -> Result<SortAlgorithm> {
        match self.sort.as_slice() {
            [s] => Ok(*s),
            _ => bail!("--sort takes exactly one algorithm for this role"),
        }
    }

    fn single_bitlen(&self) -> Result<usize> {
        match self.bitlen.as_slice() {
            [b] => Ok(*b),
            _ => bail!("--bitlen takes exactly one width for this role"),
        }
    }

    fn seed(&self) -> u64 {
        self.seed.unwrap_or_else(rand::random)
    }

    fn listener(&self) -> Result<TcpListener> {
        let addr = self.listen.as_deref().context("--listen is required for this role")?;
        let l = TcpListener::bind(addr).with_context(|| format!("cannot bind {addr}"))?;
        println!("listening={}", l.local_addr()?);
        io::stdout().flush()?;
        Ok(l)
    }

    fn peer(&self) -> Result<&str> {
        self.connect.as_deref().context("--connect is required for this role")
    }
}

fn agent(cli: &Cli) -> Result<()> {
    let key_bits = cli.keybits.unwrap_or(DEFAULT_KEY_BITS);
    let cfg = SessionConfig { seed: cli.seed(), ..Default::default() };
    let listener = cli.listener()?;
    let log = run_agent(&listener, key_bits, cfg.rng(AGENT_STREAM))?;
    for line in log {
        eprintln!("agent: {line}");
    }
    Ok(())
}

fn auctioneer(cli: &Cli) -> Result<()> {
    let cfg = SessionConfig {
        bid_bits: cli.single_bitlen()?,
        id_bits: cli.idlen,
        key_bits: cli.keybits.unwrap_or(DEFAULT_KEY_BITS),
        sort: cli.single_sort()?,
        seed: cli.seed(),
    };
    let per_side = match cli.n.as_slice() {
        [] => None,
        [n] => Some(*n),
        _ => bail!("--n takes one count for the auctioneer"),
    };
    let plan = Collection {
        sellers: cli.sellers.or(per_side),
        buyers: cli.buyers.or(per_side),
        deadline: Duration::from_secs(cli.deadline),
    };
    let agent_addr = cli.peer()?;
    let listener = cli.listener()?;
    let report = run_auctioneer(&cfg, agent_addr, &listener, plan, Duration::from_secs(cli.patience))?;
    for line in &report.log {
        eprintln!("auctioneer: {line}");
    }
    println!("{}", report.outcome);
    println!("and_gates={}", report.and_gates);
    println!("rounds={}", report.rounds);
    println!("bytes_transferred={}", report.bytes_transferred);
    Ok(())
}

fn bidder(cli: &Cli) -> Result<()> {
    let side = match cli.side.context("--side is required for a bidder")? {
        SideArg::Seller => Side::Seller,
        SideArg::Buyer => Side::Buyer,
    };
    let bid = PlainBid::new(
        cli.value.context("--value is required for a bidder")?,
        cli.id.context("--id is required for a bidder")?,
    );
    let params = SessionParams { bid_bits: cli.single_bitlen()? as u32, id_bits: cli.idlen as u32 };
    let mut rng = match cli.seed {
        Some(s) => SessionConfig { seed: s, ..Default::default() }.rng(BIDDER_STREAM),
        None => ChaCha20Rng::from_entropy(),
    };
    submit_bid(cli.peer()?, &bid, side, params, Duration::from_secs(cli.patience), &mut rng)?;
    println!("submitted {side} id={}", bid.owner_id);
    Ok(())
}

fn bench(cli: &Cli) -> Result<()> {
    let grid = BenchmarkGrid {
        algorithms: cli.sort.clone(),
        sizes: if cli.n.is_empty() { vec![8, 16, 32] } else { cli.n.clone() },
        bitlens: cli.bitlen.clone(),
        id_bits: cli.idlen,
        key_bits: cli.keybits.unwrap_or(64),
        reps: cli.reps,
        seed: cli.seed.unwrap_or(0),
    };
    eprintln!("{CSV_HEADER}");
    let rows = run_benchmark(&grid, |r| {
        eprintln!(
            "{},{},{},{},{},{},{},{}",
            r.algorithm, r.n, r.bitlen, r.key_bits, r.wall_time_ms, r.and_gates, r.rounds, r.bytes_transferred
        )
    })?;
    match &cli.csv {
        Some(path) => {
            let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
            write_csv(&rows, f)?;
        }
        None => write_csv(&rows, io::stdout().lock())?,
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.role {
        Role::Agent => agent(&cli),
        Role::Auctioneer => auctioneer(&cli),
        Role::Bidder => bidder(&cli),
        Role::Bench => bench(&cli),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
