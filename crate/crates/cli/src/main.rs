use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use influmatch::derive::{derive_instance, product_quotas_from_file, DeriveConfig, DeriveError, ReputationMode};
use influmatch::ingest::{
    generate_instance, load_instance, load_transactions_csv, matching_to_csv, read_matching_csv, trace_to_json,
    write_file, write_instance, GeneratorParams, IngestError, MatchingLoadError, ProfileMode,
};
use influmatch::model::{BuildOptions, Instance, Matching, TieBreak};
use influmatch::report::{compute_metrics, emit_report, ReportError, ReportFormat};
use influmatch::verify::{verify_stability, VerifyError};
use influmatch::{solve, InfluencerId, ProductId};
use log::info;
use thiserror::Error;

const EXIT_UNSTABLE: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;
const EXIT_INTERNAL: u8 = 4;

#[derive(Parser)]
#[command(name = "influmatch", version, about = "Stable influencer-product matching under merchant quotas")]
struct Cli {
    /// More diagnostics on stderr (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Derive an instance from a transaction log.
    Derive {
        #[command(flatten)]
        derive: DeriveArgs,
        /// Output directory for the three CSVs, or a `.json` file (`-` for stdout).
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve an instance and write the matching and solver trace.
    Solve {
        #[command(flatten)]
        input: InstanceArgs,
        /// Matching CSV (`-` for stdout).
        #[arg(long, default_value = "-")]
        out_matching: PathBuf,
        #[arg(long)]
        out_trace: Option<PathBuf>,
    },
    /// Check a matching for feasibility and blocking pairs.
    Verify {
        #[command(flatten)]
        input: InstanceArgs,
        #[arg(long)]
        matching: PathBuf,
    },
    /// Compute utilization, free-slot and rank metrics for a matching.
    Report {
        #[command(flatten)]
        input: InstanceArgs,
        #[arg(long)]
        matching: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        /// JSON file, or directory for the CSV tables.
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a random instance.
    Gen {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        influencers: usize,
        #[arg(long, default_value_t = 10)]
        products: usize,
        #[arg(long, default_value_t = 3)]
        merchants: usize,
        #[arg(long, default_value_t = 1)]
        min_prefs: usize,
        #[arg(long, default_value_t = 5)]
        max_prefs: usize,
        #[arg(long, default_value_t = 1)]
        min_quota: u32,
        #[arg(long, default_value_t = 3)]
        max_quota: u32,
        /// Popularity skew of desired products; 0 is uniform.
        #[arg(long, default_value_t = 1.0)]
        zipf: f64,
        #[arg(long, value_enum, default_value_t = Tie::Lexical)]
        tie_break: Tie,
        /// Output `.json` file, `-` for stdout, or a directory for the CSVs.
        #[arg(long, default_value = "-")]
        out: PathBuf,
    },
    /// Derive, solve, verify and report in one run.
    Pipeline {
        #[command(flatten)]
        derive: DeriveArgs,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        /// Receives instance/, matching.csv, trace.json and report.json (or report/).
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Args)]
struct DeriveArgs {
    /// Transaction log CSV.
    #[arg(long)]
    transactions: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Gt)]
    mode: Mode,
    /// Total influencer slots shared among merchants.
    #[arg(long)]
    capacity: u32,
    /// Keep only the first N desired products per influencer.
    #[arg(long)]
    top_n: Option<usize>,
    #[arg(long, value_enum, default_value_t = Profile::Direct)]
    profile: Profile,
    /// `codigo,quota,comerciante` file; defaults every product to its merchant's quota.
    #[arg(long)]
    product_quotas: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Tie::Lexical)]
    tie_break: Tie,
    #[command(flatten)]
    build: BuildArgs,
}

#[derive(Args)]
struct InstanceArgs {
    /// Instance JSON (`-` for stdin) or directory holding the three CSVs.
    #[arg(long)]
    instance: PathBuf,
    /// Tie-break for CSV instances; JSON documents carry their own.
    #[arg(long, value_enum, default_value_t = Tie::Lexical)]
    tie_break: Tie,
    #[command(flatten)]
    build: BuildArgs,
}

#[derive(Args)]
struct BuildArgs {
    /// Clamp merchant quotas into the operational limit instead of failing.
    #[arg(long)]
    clamp_quota: bool,
    /// Drop references to unknown products instead of failing.
    #[arg(long)]
    prune_unknown: bool,
}

impl BuildArgs {
    fn options(&self) -> BuildOptions {
        BuildOptions {
            clamp_quota: self.clamp_quota,
            prune_unknown: self.prune_unknown,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Gt,
    Fmc,
}

#[derive(Clone, Copy, ValueEnum)]
enum Profile {
    Direct,
    Composite,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Tie {
    Lexical,
    InputOrder,
}

impl From<Mode> for ReputationMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Gt => ReputationMode::Gt,
            Mode::Fmc => ReputationMode::Fmc,
        }
    }
}

impl From<Profile> for ProfileMode {
    fn from(p: Profile) -> Self {
        match p {
            Profile::Direct => ProfileMode::Direct,
            Profile::Composite => ProfileMode::Composite,
        }
    }
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => ReportFormat::Csv,
            Format::Json => ReportFormat::Json,
        }
    }
}

impl From<Tie> for TieBreak {
    fn from(t: Tie) -> Self {
        match t {
            Tie::Lexical => TieBreak::Lexical,
            Tie::InputOrder => TieBreak::InputOrder,
        }
    }
}

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Derive(#[from] DeriveError),
    #[error("{0}")]
    Infeasible(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Ingest(_) | CliError::Derive(_) => EXIT_INPUT,
            CliError::Infeasible(_) => EXIT_INFEASIBLE,
            CliError::Internal(_) => EXIT_INTERNAL,
        }
    }
}

impl From<MatchingLoadError> for CliError {
    fn from(e: MatchingLoadError) -> Self {
        match e {
            MatchingLoadError::Input(e) => CliError::Ingest(e),
            e @ MatchingLoadError::NotAnAllocation { .. } => CliError::Infeasible(e.to_string()),
        }
    }
}

impl From<VerifyError> for CliError {
    fn from(e: VerifyError) -> Self {
        match e {
            VerifyError::InfeasibleMatching(_) => CliError::Infeasible(e.to_string()),
            other => CliError::Internal(other.to_string()),
        }
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        match e {
            ReportError::Infeasible(v) => v.into(),
            ReportError::Io { path, source } => CliError::Ingest(IngestError::Io { path, source }),
        }
    }
}

fn load(input: &InstanceArgs) -> Result<Instance, CliError> {
    let inst = load_instance(&input.instance, input.tie_break.into(), &input.build.options())?;
    info!(
        "loaded {} influencers, {} products, {} merchants from {}",
        inst.influencer_count(),
        inst.product_count(),
        inst.merchant_count(),
        input.instance.display()
    );
    Ok(inst)
}

fn derive(args: &DeriveArgs) -> Result<Instance, CliError> {
    let transactions = load_transactions_csv(&args.transactions, args.profile.into())?;
    info!("read {} transactions from {}", transactions.len(), args.transactions.display());
    let product_quotas = args
        .product_quotas
        .as_deref()
        .map(product_quotas_from_file)
        .transpose()?;
    let config = DeriveConfig {
        mode: args.mode.into(),
        capacity: args.capacity,
        top_n: args.top_n,
        product_quotas,
        tie_break: args.tie_break.into(),
        build: args.build.options(),
    };
    Ok(derive_instance(&transactions, &config)?)
}

fn run_solve(inst: &Instance, out_matching: &Path, out_trace: Option<&Path>) -> Result<Matching, CliError> {
    let (matching, trace) = solve(inst);
    info!(
        "matched {}/{} influencers in {} proposals, {} rejections, {} rounds",
        matching.matched_count(),
        inst.influencer_count(),
        trace.proposal_count,
        trace.rejection_count,
        trace.rounds
    );
    write_file(out_matching, &matching_to_csv(inst, &matching))?;
    if let Some(path) = out_trace {
        write_file(path, trace_to_json(&trace).as_bytes())?;
    }
    Ok(matching)
}

fn blocking_csv(pairs: &[(InfluencerId, ProductId)]) -> String {
    let mut out = String::from("influencer,product\n");
    for (f, p) in pairs {
        out.push_str(&format!("{f},{p}\n"));
    }
    out
}

fn run_verify(inst: &Instance, matching: &Matching) -> Result<u8, CliError> {
    let blocking = verify_stability(inst, matching)?;
    if blocking.is_empty() {
        info!("stable");
        return Ok(0);
    }
    log::warn!("{} blocking pairs", blocking.len());
    write_file(Path::new("-"), blocking_csv(&blocking).as_bytes())?;
    Ok(EXIT_UNSTABLE)
}

fn run(cli: Cli) -> Result<u8, CliError> {
    match cli.command {
        Command::Derive { derive: args, out } => {
            let inst = derive(&args)?;
            write_instance(&inst, &out)?;
        }
        Command::Solve {
            input,
            out_matching,
            out_trace,
        } => {
            let inst = load(&input)?;
            run_solve(&inst, &out_matching, out_trace.as_deref())?;
        }
        Command::Verify { input, matching } => {
            let inst = load(&input)?;
            let m = read_matching_csv(&inst, &matching)?;
            return run_verify(&inst, &m);
        }
        Command::Report {
            input,
            matching,
            format,
            out,
        } => {
            let inst = load(&input)?;
            let m = read_matching_csv(&inst, &matching)?;
            emit_report(&compute_metrics(&inst, &m)?, format.into(), &out)?;
        }
        Command::Gen {
            seed,
            influencers,
            products,
            merchants,
            min_prefs,
            max_prefs,
            min_quota,
            max_quota,
            zipf,
            tie_break,
            out,
        } => {
            let params = GeneratorParams {
                n_influencers: influencers,
                n_products: products,
                n_merchants: merchants,
                pref_len: (min_prefs, max_prefs),
                product_quota: (min_quota, max_quota),
                zipf_exponent: zipf,
                tie_break: tie_break.into(),
            };
            write_instance(&generate_instance(seed, &params)?, &out)?;
        }
        Command::Pipeline {
            derive: args,
            format,
            out_dir,
        } => {
            let inst = derive(&args)?;
            write_instance(&inst, &out_dir.join("instance"))?;
            let m = run_solve(&inst, &out_dir.join("matching.csv"), Some(&out_dir.join("trace.json")))?;
            let report_path = match format {
                Format::Json => out_dir.join("report.json"),
                Format::Csv => out_dir.join("report"),
            };
            emit_report(&compute_metrics(&inst, &m)?, format.into(), &report_path)?;
            return run_verify(&inst, &m);
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_INPUT } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(code)) => ExitCode::from(code),
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
        Err(_) => ExitCode::from(EXIT_INTERNAL),
    }
}
