use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;

use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "geotopo", version, about = "Geographically embedded AS topologies and latency models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Grow a PFP AS graph.
    Generate(StageArgs),
    /// Place AS locations and run the swap optimizer.
    Embed(StageArgs),
    /// Build the border-router graph.
    #[command(name = "build-h")]
    BuildH(BuildHArgs),
    /// Dump routes between end devices.
    Route(RouteArgs),
    /// Modeled latency between every ordered pair of end devices.
    #[command(name = "latency-matrix")]
    LatencyMatrix(StageArgs),
    /// Compare modeled latencies with a measured dataset.
    Eval(EvalArgs),
    /// Rank (n, N, c_max) combinations by KS distance to a dataset.
    Sweep(SweepArgs),
    /// Great-circle distance against measured latency for a dataset.
    Audit(StageArgs),
}

/// Settings shared by every command. Each flag overrides the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct ParamArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long = "p")]
    p: Option<f64>,
    #[arg(long = "q")]
    q: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    seed_nodes: Option<usize>,
    /// Density grid file; a uniform world grid is used when absent.
    #[arg(long)]
    grid: Option<PathBuf>,
    /// Neighbor-count threshold for multiple locations.
    #[arg(long = "n")]
    n: Option<usize>,
    /// Location count of the largest AS.
    #[arg(long = "N")]
    max_locations: Option<usize>,
    #[arg(long)]
    cmax: Option<f64>,
    /// Optimizer patience (unchanged iterations before stopping).
    #[arg(long = "k")]
    k: Option<usize>,
    #[arg(long)]
    lmax: Option<f64>,
    #[arg(long)]
    hmax: Option<f64>,
    #[arg(long)]
    nf: Option<f64>,
    /// Speed of light, km/s.
    #[arg(long = "c")]
    c: Option<f64>,
    #[arg(long)]
    offset_ms: Option<f64>,
    /// `nearest` or `error` for devices outside every h_max disc.
    #[arg(long)]
    attach: Option<String>,
    /// `hot-potato` or `distance-first`.
    #[arg(long)]
    routing: Option<String>,
    #[arg(long)]
    symmetric_fallback: Option<bool>,
    /// Seed of this command's own random stage.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    graph_seed: Option<u64>,
    #[arg(long)]
    embed_seed: Option<u64>,
    #[arg(long)]
    attach_seed: Option<u64>,
    #[arg(long)]
    graph: Option<PathBuf>,
    #[arg(long)]
    embedding: Option<PathBuf>,
    /// Border graph file; rebuilt from graph and embedding when absent.
    #[arg(long)]
    border: Option<PathBuf>,
    /// End devices, in dataset format (`host` lines).
    #[arg(long)]
    devices: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy)]
pub enum Stage {
    Graph,
    Embed,
    Attach,
    None,
}

impl ParamArgs {
    pub fn resolve(&self, stage: Stage) -> geotopo::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        macro_rules! over {
            ($field:expr, $key:literal) => {
                if let Some(v) = &$field {
                    cfg.set($key, &v.to_string())?;
                }
            };
        }
        over!(self.nodes, "nodes");
        over!(self.p, "p");
        over!(self.q, "q");
        over!(self.delta, "delta");
        over!(self.seed_nodes, "seed_nodes");
        over!(self.n, "n");
        over!(self.max_locations, "N");
        over!(self.cmax, "c_max");
        over!(self.k, "k");
        over!(self.lmax, "l_max");
        over!(self.hmax, "h_max");
        over!(self.nf, "n_f");
        over!(self.c, "c");
        over!(self.offset_ms, "offset_ms");
        over!(self.attach, "attach");
        over!(self.routing, "routing");
        over!(self.symmetric_fallback, "symmetric_fallback");
        over!(self.graph_seed, "graph_seed");
        over!(self.embed_seed, "embed_seed");
        over!(self.attach_seed, "attach_seed");
        let paths = [
            (&self.grid, "grid"),
            (&self.graph, "graph"),
            (&self.embedding, "embedding"),
            (&self.border, "border"),
            (&self.devices, "devices"),
            (&self.dataset, "dataset"),
        ];
        for (v, key) in paths {
            if let Some(p) = v {
                cfg.set(key, &p.display().to_string())?;
            }
        }
        if let Some(seed) = self.seed {
            match stage {
                Stage::Graph => cfg.graph_seed = seed,
                Stage::Embed => cfg.embed_seed = seed,
                Stage::Attach => cfg.attach_seed = seed,
                Stage::None => {}
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct StageArgs {
    #[command(flatten)]
    params: ParamArgs,
    /// Output file; stdout when absent.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BuildHArgs {
    #[command(flatten)]
    stage: StageArgs,
    /// Leave intra-AS edges out of the file (they are implied by the embedding).
    #[arg(long)]
    no_intra: bool,
}

#[derive(Debug, Args)]
pub struct RouteArgs {
    #[command(flatten)]
    stage: StageArgs,
    #[arg(long)]
    from: Option<String>,
    #[arg(long)]
    to: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    params: ParamArgs,
    /// Directory receiving the ECDF exports, audit and report.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    stage: StageArgs,
    #[arg(long, value_delimiter = ',', required = true)]
    n_values: Vec<usize>,
    #[arg(long = "N-values", value_delimiter = ',', required = true)]
    max_location_values: Vec<usize>,
    #[arg(long, value_delimiter = ',', required = true)]
    cmax_values: Vec<f64>,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use geotopo::Error;
    match err.downcast_ref::<Error>() {
        Some(Error::Parameter(_) | Error::InvalidGrid(_) | Error::NoAttachment(_)) => 2,
        Some(Error::Format { .. } | Error::Consistency(_) | Error::NoPath { .. }) => 3,
        _ => 1,
    }
}

/// A closed stdout (`geotopo audit ... | head`) ends the run quietly.
fn is_broken_pipe(err: &anyhow::Error) -> bool {
    err.chain().any(|cause| match cause.downcast_ref::<std::io::Error>() {
        Some(e) => e.kind() == std::io::ErrorKind::BrokenPipe,
        None => matches!(cause.downcast_ref::<geotopo::Error>(),
            Some(geotopo::Error::Io(msg)) if msg.contains("Broken pipe")),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate(a) => commands::generate(a),
        Command::Embed(a) => commands::embed(a),
        Command::BuildH(a) => commands::build_h(a),
        Command::Route(a) => commands::route(a),
        Command::LatencyMatrix(a) => commands::latency_matrix(a),
        Command::Eval(a) => commands::eval(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Audit(a) => commands::audit(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) if is_broken_pipe(&err) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
