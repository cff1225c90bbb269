use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mapn::config::{ExperimentConfig, RegimeKind};
use mapn::learners::PnKind;
use mapn::models::ModelKind;
use mapn::{Error, Result};

mod figures;
mod ingest;
mod table;

/// Env var that overrides the configured output root.
const OUTPUT_ROOT_ENV: &str = "MAPN_OUTPUT_ROOT";

#[derive(Parser)]
#[command(name = "mapn", version, about = "Multi-anatomy MRI reconstruction with anatomy-specific learners")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one regime and write a run directory.
    Run(RunArgs),
    /// Compare evaluated runs against a baseline run.
    Table(table::TableArgs),
    /// Reconstructions, error maps and learner weights of a run.
    Figures(figures::FiguresArgs),
    /// Parameter counts for every regime and PN kind.
    Count(CountArgs),
    /// Add external grayscale images to a corpus.
    Ingest(ingest::IngestArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// Starting preset.
    #[arg(long, default_value = "desk")]
    preset: String,
    /// TOML config file; replaces the preset.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        match &self.config {
            Some(path) => ExperimentConfig::load(path),
            None => ExperimentConfig::preset(&self.preset),
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    base: ConfigArgs,
    #[arg(long)]
    regime: Option<RegimeKind>,
    #[arg(long)]
    model: Option<ModelKind>,
    #[arg(long)]
    pn: Option<PnKind>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    name: Option<String>,
    /// Training anatomy of an OAON run.
    #[arg(long)]
    anatomy: Option<String>,
    #[arg(long)]
    acceleration: Option<u32>,
    /// Output root (overrides the config and MAPN_OUTPUT_ROOT).
    #[arg(long)]
    out: Option<PathBuf>,
    /// MAON checkpoint to initialize a MAPN run from.
    #[arg(long)]
    warm_start: Option<PathBuf>,
    /// Train MAPN from scratch.
    #[arg(long)]
    cold_start: bool,
    /// Continue an interrupted run.
    #[arg(long)]
    resume: bool,
    /// Print the resolved config and exit.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Args)]
struct CountArgs {
    #[arg(long, default_value = "paper")]
    scale: mapn::metrics::Scale,
    #[arg(long, value_delimiter = ',', default_value = "knee,brain,cardiac")]
    anatomies: Vec<String>,
    /// Output CSV (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn resolve_run_config(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut c = args.base.load()?;
    if let Some(r) = args.regime {
        c.regime = r;
    }
    if let Some(m) = args.model {
        c.model.kind = m;
    }
    if let Some(pn) = args.pn {
        c.model.pn = pn;
    }
    if let Some(s) = args.seed {
        c.seed = s;
    }
    if let Some(n) = &args.name {
        c.name = n.clone();
    }
    if let Some(a) = &args.anatomy {
        c.oaon_anatomy = a.clone();
    }
    if let Some(a) = args.acceleration {
        c.sampling.acceleration = a;
    }
    if let Some(out) = &args.out {
        c.output_dir = out.clone();
    } else if let Some(root) = std::env::var_os(OUTPUT_ROOT_ENV) {
        c.output_dir = root.into();
    }
    if let Some(w) = &args.warm_start {
        c.warm_start = Some(w.clone());
    }
    if args.cold_start {
        c.cold_start = true;
    }
    c.validate()?;
    Ok(c)
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    let config = resolve_run_config(args)?;
    if args.dry_run {
        print!("{}", config.to_toml());
        return Ok(());
    }
    let options = mapn::training::RunOptions {
        resume: args.resume,
        stop_after: None,
    };
    let total = config.epochs();
    let summary = mapn::training::run_regime(&config, &options, |log| {
        let loss: Vec<String> = log.train_loss.iter().map(|(l, v)| format!("{l}={v:.4}")).collect();
        eprintln!(
            "epoch {}/{total}  loss {}  val psnr {:.2} ssim {:.4}{}",
            log.epoch + 1,
            loss.join(" "),
            log.val.mean_psnr(),
            log.val.mean_ssim(),
            if log.improved { "  *" } else { "" }
        );
    })?;
    let e = &summary.eval;
    println!("run {}", summary.dir.display());
    for (a, z) in e.last.anatomies.iter().zip(&e.zero_filled.anatomies) {
        println!(
            "  {:<10} psnr {:6.2} (zero-filled {:6.2})  ssim {:.4} (zero-filled {:.4})",
            a.label, a.psnr_mean, z.psnr_mean, a.ssim_mean, z.ssim_mean
        );
    }
    Ok(())
}

fn cmd_count(args: &CountArgs) -> Result<()> {
    let rows = mapn::metrics::count_report(args.scale, &args.anatomies)?;
    match &args.out {
        Some(path) => {
            let f = std::fs::File::create(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
            mapn::metrics::write_count_csv(&rows, f)
        }
        None => mapn::metrics::write_count_csv(&rows, std::io::stdout().lock()),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::Data(_) | Error::Io { .. } | Error::Checkpoint(_) => 3,
        Error::Numeric(_) | Error::Shape { .. } => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Table(a) => table::run(a),
        Command::Figures(a) => figures::run(a),
        Command::Count(a) => cmd_count(a),
        Command::Ingest(a) => ingest::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Val,
}

impl From<SplitArg> for mapn::data::Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => mapn::data::Split::Train,
            SplitArg::Val => mapn::data::Split::Val,
        }
    }
}
