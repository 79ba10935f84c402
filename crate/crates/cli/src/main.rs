use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use covmatch::matchers::Method;
use covmatch::{LinkKind, Sense, TransformKind};
use covmatch_cli::commands::{lap_oracle, qap_oracle, read_matrix, run_match, run_simulate};
use covmatch_cli::io::InputError;
use covmatch_cli::output::{error_record, resolve_output, write_json_atomic, OUTPUT_DIR_ENV};
use covmatch_cli::spec::{InitKind, MatchSpec, SimulateSpec};

#[derive(Parser)]
#[command(
    name = "covmatch",
    version,
    about = "Covariate-assisted seeded graph matching"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Match two graphs given seed pairs and optional covariates.
    Match(MatchArgs),
    /// Run a simulation grid and write per-replication records and a summary.
    Simulate(SimulateArgs),
    /// Exact brute-force solutions for small assignment problems.
    #[command(subcommand)]
    Oracle(OracleCommand),
}

#[derive(Args)]
struct MatchArgs {
    /// TOML file with the run specification; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    graph_a: Option<PathBuf>,
    #[arg(long)]
    graph_b: Option<PathBuf>,
    /// Two-column CSV of seed label pairs.
    #[arg(long)]
    seeds: Option<PathBuf>,
    /// Edge covariate triplet file; repeat for several.
    #[arg(long = "edge-cov")]
    edge_covs: Vec<PathBuf>,
    #[arg(long)]
    node_covs: Option<PathBuf>,
    /// Transform per node covariate column (abs-diff or equal).
    #[arg(long = "transform", value_parser = parse_transform)]
    transforms: Vec<TransformKind>,
    #[arg(long, value_parser = parse_method)]
    method: Option<Method>,
    #[arg(long, value_parser = parse_link)]
    link: Option<LinkKind>,
    #[arg(long)]
    standardize: bool,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    rel_tol: Option<f64>,
    #[arg(long, value_enum)]
    init: Option<InitArg>,
    #[arg(long)]
    rng_seed: Option<u64>,
    /// Output JSON path (default match.json).
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum InitArg {
    Barycenter,
    Randomized,
}

#[derive(Args)]
struct SimulateArgs {
    /// TOML simulation grid.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the environment override or the current directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Also write per-run wall times to timings.csv.
    #[arg(long)]
    timings: bool,
}

#[derive(Subcommand)]
enum OracleCommand {
    /// Exact linear assignment of a square cost matrix.
    Lap {
        #[arg(long)]
        costs: PathBuf,
        #[arg(long, value_enum, default_value = "min")]
        sense: SenseArg,
    },
    /// Exact seeded QAP, alongside the seeded FAQ answer.
    Qap {
        #[arg(long)]
        p: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// Seed vertex ids, comma separated.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SenseArg {
    Min,
    Max,
}

fn parse_transform(s: &str) -> Result<TransformKind, String> {
    s.parse().map_err(|e: covmatch::Error| e.to_string())
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: covmatch::Error| e.to_string())
}

fn parse_link(s: &str) -> Result<LinkKind, String> {
    s.parse().map_err(|e: covmatch::Error| e.to_string())
}

fn read_config(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))
}

fn match_spec(args: MatchArgs) -> anyhow::Result<MatchSpec> {
    let mut spec = match &args.config {
        Some(path) => {
            let mut spec = MatchSpec::from_toml(&read_config(path)?)
                .with_context(|| format!("parsing config {}", path.display()))?;
            spec.rebase(path.parent().unwrap_or(Path::new(".")));
            spec
        }
        None => {
            let (Some(graph_a), Some(graph_b), Some(seeds), Some(method)) = (
                args.graph_a.clone(),
                args.graph_b.clone(),
                args.seeds.clone(),
                args.method,
            ) else {
                bail!("without --config, --graph-a, --graph-b, --seeds and --method are required");
            };
            MatchSpec {
                graph_a,
                graph_b,
                seeds,
                edge_covs: Vec::new(),
                node_covs: None,
                transforms: Vec::new(),
                method,
                link: LinkKind::Identity,
                standardize: false,
                faq: Default::default(),
                output: None,
            }
        }
    };
    if args.config.is_some() {
        if let Some(p) = args.graph_a {
            spec.graph_a = p;
        }
        if let Some(p) = args.graph_b {
            spec.graph_b = p;
        }
        if let Some(p) = args.seeds {
            spec.seeds = p;
        }
        if let Some(m) = args.method {
            spec.method = m;
        }
    }
    if !args.edge_covs.is_empty() {
        spec.edge_covs = args.edge_covs;
    }
    if args.node_covs.is_some() {
        spec.node_covs = args.node_covs;
    }
    if !args.transforms.is_empty() {
        spec.transforms = args.transforms;
    }
    if let Some(l) = args.link {
        spec.link = l;
    }
    spec.standardize |= args.standardize;
    if let Some(v) = args.max_iter {
        spec.faq.max_iter = v;
    }
    if let Some(v) = args.rel_tol {
        spec.faq.rel_tol = v;
    }
    if let Some(v) = args.init {
        spec.faq.init = match v {
            InitArg::Barycenter => InitKind::Barycenter,
            InitArg::Randomized => InitKind::Randomized,
        };
    }
    if let Some(v) = args.rng_seed {
        spec.faq.rng_seed = v;
    }
    if args.output.is_some() {
        spec.output = args.output;
    }
    Ok(spec)
}

fn print_json<T: serde::Serialize>(value: &T) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Match(args) => {
            let spec = match_spec(args)?;
            let out = resolve_output(spec.output.as_deref().unwrap_or(Path::new("match.json")));
            let doc = run_match(&spec)?;
            write_json_atomic(&out, &doc).with_context(|| format!("writing {}", out.display()))?;
            log::info!("wrote {}", out.display());
        }
        Command::Simulate(args) => {
            let spec = SimulateSpec::from_toml(&read_config(&args.config)?)
                .with_context(|| format!("parsing config {}", args.config.display()))?;
            let dir = match args.out_dir {
                Some(d) => resolve_output(&d),
                None => std::env::var_os(OUTPUT_DIR_ENV)
                    .map(PathBuf::from)
                    .unwrap_or_else(|| ".".into()),
            };
            let out = run_simulate(&spec, &dir, args.timings)?;
            log::info!(
                "wrote {} and {}",
                out.records.display(),
                out.summary.display()
            );
        }
        Command::Oracle(OracleCommand::Lap { costs, sense }) => {
            let sense = match sense {
                SenseArg::Min => Sense::Min,
                SenseArg::Max => Sense::Max,
            };
            print_json(&lap_oracle(read_matrix(&costs)?, sense)?)?;
        }
        Command::Oracle(OracleCommand::Qap { p, b, seeds }) => {
            print_json(&qap_oracle(&read_matrix(&p)?, &read_matrix(&b)?, &seeds)?)?;
        }
    }
    Ok(())
}

fn error_kind(err: &anyhow::Error) -> &'static str {
    for cause in err.chain() {
        if cause.is::<InputError>() {
            return "input";
        }
        if cause.is::<toml::de::Error>() {
            return "config";
        }
        if cause.is::<covmatch::Error>() {
            return "model";
        }
        if cause.is::<std::io::Error>() {
            return "io";
        }
    }
    "usage"
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{}", error_record(error_kind(&err), &err));
            ExitCode::FAILURE
        }
    }
}
