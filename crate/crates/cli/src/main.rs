use std::path::PathBuf;
use std::time::Duration;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use specpir_cli::bench;
use specpir_core::sharing::EvalPointSet;
use specpir_core::spectrumdb::{
    generate_database_padded, load_database, store_database, GridConfig, GridShape, SpectrumKey,
};
use specpir_core::{raid, tau, ProtocolId, ProtocolParams};
use specpir_net::{
    fetch_rows, serve, ByzantineMode, FaultProfile, FetchOptions, ServerConfig, ServerDescriptor,
    ServerStore, Transport,
};

#[derive(Parser)]
#[command(
    name = "specpir",
    about = "Multi-server private retrieval tools for spectrum availability databases",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic spectrum database store.
    Dbgen(DbgenArgs),
    /// Split a plain database into secret-shared replica stores.
    Dbshare(DbshareArgs),
    /// Partition a plain database into per-server chunk stores.
    Dbsplit(DbsplitArgs),
    /// Serve one store over TCP.
    Serve(ServeArgs),
    /// Privately fetch one record (or a batch) from running servers.
    Fetch(FetchArgs),
    /// Run benchmark scenarios and emit a report plus CSV.
    Bench(BenchArgs),
}

#[derive(Args)]
struct DbgenArgs {
    /// Number of records.
    #[arg(long)]
    rows: u32,
    /// Record size in bytes (>= 16).
    #[arg(long, default_value_t = 560)]
    block_bytes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Pad the row count up to a multiple of this (the partitioned
    /// protocol needs server-count divisibility).
    #[arg(long, default_value_t = 1)]
    align: usize,
    /// Grid cells per row; defaults to a linear lattice of `rows` cells.
    #[arg(long)]
    width: Option<u32>,
    #[arg(long, default_value_t = 1)]
    height: u16,
    #[arg(long, default_value_t = 1)]
    channels: u8,
    #[arg(long, default_value_t = 1)]
    timeslots: u8,
}

#[derive(Args)]
struct DbshareArgs {
    /// Plain database store to split.
    #[arg(long = "in")]
    input: PathBuf,
    /// Content privacy threshold.
    #[arg(long)]
    tau: usize,
    /// Number of share replicas.
    #[arg(long)]
    servers: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory; replica i lands in `<prefix>-i.spdb`.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value = "replica")]
    prefix: String,
}

#[derive(Args)]
struct DbsplitArgs {
    /// Plain database store to partition; its row count must divide by
    /// --servers (generate with --align).
    #[arg(long = "in")]
    input: PathBuf,
    /// Chunk redundancy: each chunk lands on this many servers.
    #[arg(long)]
    pi: usize,
    #[arg(long)]
    servers: usize,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value = "chunks")]
    prefix: String,
}

#[derive(Args)]
struct ServeArgs {
    /// Store file: plain, share replica, or chunk store.
    #[arg(long)]
    store: PathBuf,
    #[arg(long, default_value = "127.0.0.1:7100")]
    bind: String,
    /// Server identity; defaults to the store's own (share alpha, chunk
    /// index + 1) or 1 for plain stores.
    #[arg(long)]
    server_id: Option<u8>,
    /// Probability of swallowing a response.
    #[arg(long, default_value_t = 0.0)]
    fault_drop: f64,
    /// Byzantine corruption: none, flip, or garbage.
    #[arg(long, default_value = "none")]
    fault_byz: String,
    #[arg(long, default_value_t = 0)]
    fault_latency_ms: u64,
    #[arg(long, default_value_t = 0)]
    fault_seed: u64,
    #[arg(long, default_value_t = specpir_net::frame::DEFAULT_MAX_FRAME)]
    max_frame: usize,
}

#[derive(Args)]
struct FetchArgs {
    /// chor, goldberg, batch, or raid.
    #[arg(long)]
    protocol: ProtocolIdArg,
    /// Comma-separated host:port list, in server-id order 1..l.
    #[arg(long, value_delimiter = ',')]
    servers: Vec<String>,
    /// Database row count the servers hold.
    #[arg(long)]
    db_rows: usize,
    #[arg(long, default_value_t = 560)]
    block_bytes: usize,
    /// Privacy threshold (Goldberg family).
    #[arg(long, default_value_t = 1)]
    t: usize,
    /// Response quorum; 0 means all servers.
    #[arg(long, default_value_t = 0)]
    k: usize,
    /// Content privacy level of the share stores being queried.
    #[arg(long, default_value_t = 0)]
    tau: usize,
    /// Chunk redundancy (partitioned protocol).
    #[arg(long, default_value_t = 2)]
    pi: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 30_000)]
    timeout_ms: u64,
    /// Fetch this 1-based row directly.
    #[arg(long)]
    row: Option<u64>,
    /// Or resolve the row from a key:
    #[arg(long)]
    lat: Option<f64>,
    #[arg(long)]
    lon: Option<f64>,
    #[arg(long, default_value_t = 0)]
    channel: u8,
    #[arg(long, default_value_t = 0)]
    slot: u8,
    /// Batch protocol: file with one row index or lat,lon,channel,slot
    /// per line.
    #[arg(long)]
    batch_file: Option<PathBuf>,
    #[command(flatten)]
    grid: GridArgs,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long, default_value_t = 0.0)]
    origin_lat: f64,
    #[arg(long, default_value_t = 0.0)]
    origin_lon: f64,
    #[arg(long, default_value_t = 100.0)]
    cell_meters: f64,
    /// Grid width in cells; defaults to db-rows (linear lattice).
    #[arg(long)]
    grid_width: Option<u32>,
    #[arg(long, default_value_t = 1)]
    grid_height: u16,
    #[arg(long, default_value_t = 1)]
    grid_channels: u8,
    #[arg(long, default_value_t = 1)]
    grid_timeslots: u8,
}

#[derive(Clone, Copy)]
struct ProtocolIdArg(ProtocolId);

impl std::str::FromStr for ProtocolIdArg {
    type Err = specpir_core::Error;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse().map(ProtocolIdArg)
    }
}

#[derive(Args)]
struct BenchArgs {
    /// TOML scenario file; see the repository README for the schema.
    #[arg(long)]
    scenario: PathBuf,
    /// CSV output path, overriding any path in the scenario file.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Dbgen(args) => dbgen(args),
        Command::Dbshare(args) => dbshare(args),
        Command::Dbsplit(args) => dbsplit(args),
        Command::Serve(args) => run_serve(args),
        Command::Fetch(args) => fetch(args),
        Command::Bench(args) => run_bench(args),
    }
}

fn dbgen(args: DbgenArgs) -> anyhow::Result<()> {
    let shape = GridShape {
        width: args.width.unwrap_or(args.rows),
        height: args.height,
        channels: args.channels,
        timeslots: args.timeslots,
    };
    if shape.rows() != args.rows as u64 {
        bail!(
            "grid dimensions produce {} rows but --rows is {}",
            shape.rows(),
            args.rows
        );
    }
    let (db, pad) = generate_database_padded(&shape, args.block_bytes, args.seed, args.align);
    store_database(&db, &shape, &args.out)?;
    println!(
        "wrote {} rows ({} padding) x {} bytes to {}",
        db.rows(),
        pad,
        args.block_bytes,
        args.out.display()
    );
    Ok(())
}

fn dbshare(args: DbshareArgs) -> anyhow::Result<()> {
    let (db, shape) = load_database(&args.input)?;
    let points = EvalPointSet::server_indices(args.servers)?;
    let mut rng = ChaCha20Rng::seed_from_u64(args.seed);
    let set = tau::encode_database(&db, args.tau, &points, &mut rng)?;
    std::fs::create_dir_all(&args.out_dir)?;
    for i in 0..args.servers {
        let path = args.out_dir.join(format!("{}-{}.spdb", args.prefix, i + 1));
        tau::store_share_replica(&set, &shape, i, &path)?;
        println!(
            "wrote share replica {} (alpha={}) to {}",
            i + 1,
            i + 1,
            path.display()
        );
    }
    Ok(())
}

fn dbsplit(args: DbsplitArgs) -> anyhow::Result<()> {
    let (db, shape) = load_database(&args.input)?;
    let stores = raid::partition(&db, args.servers, args.pi)?;
    std::fs::create_dir_all(&args.out_dir)?;
    for store in &stores {
        let path = args
            .out_dir
            .join(format!("{}-{}.spdb", args.prefix, store.server_index + 1));
        raid::store_chunks(store, &shape, &path)?;
        println!(
            "wrote chunk store for server {} ({} rows) to {}",
            store.server_index + 1,
            store.matrix.rows(),
            path.display()
        );
    }
    Ok(())
}

fn run_serve(args: ServeArgs) -> anyhow::Result<()> {
    let store = ServerStore::load(&args.store)?;
    let server_id = args.server_id.unwrap_or(match &store {
        ServerStore::Plain { .. } => 1,
        ServerStore::Share(s) => s.alpha.0,
        ServerStore::Chunk(c) => c.server_index as u8 + 1,
    });
    let byz = match args.fault_byz.as_str() {
        "none" => ByzantineMode::None,
        "flip" => ByzantineMode::FlipBytes,
        "garbage" => ByzantineMode::RandomGarbage,
        other => bail!("unknown byzantine mode {other:?} (none|flip|garbage)"),
    };
    let fault = FaultProfile {
        drop_probability: args.fault_drop,
        added_latency: Duration::from_millis(args.fault_latency_ms),
        byzantine: byz,
        seed: args.fault_seed,
    };
    let mut config = ServerConfig::new(server_id).with_fault(fault);
    config.max_frame = args.max_frame;
    let handle = serve(store, &args.bind, config)?;
    println!("server {} listening on {}", server_id, handle.addr());
    if !fault.is_benign() {
        println!("fault profile active: {fault:?}");
    }
    loop {
        std::thread::park();
    }
}

fn parse_batch_line(line: &str, grid: &GridConfig) -> anyhow::Result<u64> {
    let line = line.trim();
    if let Ok(row) = line.parse::<u64>() {
        return Ok(row);
    }
    let parts: Vec<&str> = line.split(',').map(str::trim).collect();
    if parts.len() != 4 {
        bail!("batch line {line:?}: expected a row index or lat,lon,channel,slot");
    }
    let key = SpectrumKey {
        lat: parts[0].parse()?,
        lon: parts[1].parse()?,
        channel: parts[2].parse()?,
        timeslot: parts[3].parse()?,
    };
    Ok(grid.record_index(&key)?)
}

fn fetch(args: FetchArgs) -> anyhow::Result<()> {
    let protocol = args.protocol.0;
    let ell = args.servers.len();
    if ell == 0 {
        bail!("--servers must list at least one address");
    }
    let grid = GridConfig {
        origin_lat: args.grid.origin_lat,
        origin_lon: args.grid.origin_lon,
        cell_meters: args.grid.cell_meters,
        shape: GridShape {
            width: args.grid.grid_width.unwrap_or(args.db_rows as u32),
            height: args.grid.grid_height,
            channels: args.grid.grid_channels,
            timeslots: args.grid.grid_timeslots,
        },
    };
    let mut rows = Vec::new();
    if let Some(row) = args.row {
        rows.push(row);
    } else if let (Some(lat), Some(lon)) = (args.lat, args.lon) {
        let key = SpectrumKey {
            lat,
            lon,
            channel: args.channel,
            timeslot: args.slot,
        };
        rows.push(grid.record_index(&key)?);
    }
    if let Some(path) = &args.batch_file {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?;
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            rows.push(parse_batch_line(line, &grid)?);
        }
    }
    if rows.is_empty() {
        bail!("nothing to fetch: pass --row, --lat/--lon, or --batch-file");
    }

    let params = ProtocolParams::new(ell, args.db_rows, args.block_bytes)
        .with_t(args.t)
        .with_k(if args.k == 0 { ell } else { args.k })
        .with_tau(args.tau)
        .with_pi(args.pi);
    let descriptors: Vec<ServerDescriptor> = args
        .servers
        .iter()
        .enumerate()
        .map(|(i, address)| ServerDescriptor {
            address: address.clone(),
            server_id: i as u8 + 1,
        })
        .collect();
    let mut options = FetchOptions::new(protocol, params, args.seed);
    options.timeout = Duration::from_millis(args.timeout_ms);

    let outcome = fetch_rows(&rows, &Transport::Tcp(descriptors), &options)?;

    for (row, (record, report)) in rows
        .iter()
        .zip(outcome.records.iter().zip(&outcome.reports))
    {
        println!(
            "row {row}: available={} max_power_dbm={} valid_from_slot={} valid_slots={} checksum={}",
            record.available(),
            record.max_power_dbm(),
            record.valid_from_slot(),
            record.valid_slots(),
            if record.verify_checksum() { "ok" } else { "FAILED" },
        );
        println!(
            "  recovery: {:?} path, honest {:?}, byzantine {:?}",
            report.path, report.honest, report.byzantine
        );
    }
    let t = &outcome.transcript;
    println!(
        "bytes: payload {} up / {} down, framing {} up / {} down",
        t.payload_up, t.payload_down, t.framing_up, t.framing_down
    );
    println!(
        "times: build {:?}, recover {:?}, total {:?}; responders {:?}, silent {:?}",
        t.t_build, t.t_recover, t.t_total, t.responders, t.non_responders
    );
    Ok(())
}

fn run_bench(args: BenchArgs) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(&args.scenario)
        .with_context(|| format!("reading {}", args.scenario.display()))?;
    let file = bench::ScenarioFile::parse(&text)?;
    let mut all_rows = Vec::new();
    let mut csv_path = args.out.clone();
    for scenario in &file.scenarios {
        if csv_path.is_none() {
            csv_path = scenario.output.clone();
        }
        all_rows.extend(bench::bench_run(scenario)?);
    }
    print!("{}", bench::report(&all_rows));
    if let Some(path) = csv_path {
        std::fs::write(&path, bench::to_csv(&all_rows))?;
        println!("csv written to {}", path.display());
    }
    Ok(())
}
