use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hod::experiment::{k_grid, sweep};
use hod::synthesis::synthesize_outliers;
use hod::train::{embed_bank, history_tsv};
use hod::{
    evaluate, gen_synthetic, read_feature_file, score_rows, train, Checkpoint, Config, Error,
    ErrorKind, ScoreMethod, SynthSplits,
};

/// Default neighbour rank for `score --method knn`, clipped to the bank size.
const DEFAULT_SCORE_K: usize = 50;

#[derive(Parser)]
#[command(name = "hod", version, about = "Hyperbolic outlier detection")]
struct Cli {
    /// Configuration override, `KEY=VALUE`; repeatable, applied after --config.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Flat key=value configuration file (defaults when omitted).
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic train/val/test feature banks.
    GenData {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a head; writes CKPT and CKPT.history.tsv.
    Train {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run outlier synthesis once on the embedded training bank.
    Synth {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Score query features, one `id<TAB>score` line per row.
    Score {
        #[arg(long)]
        ckpt: PathBuf,
        /// Reference bank (required for knn).
        #[arg(long)]
        bank: Option<PathBuf>,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long, default_value = "knn")]
        method: ScoreMethod,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Tune k on validation and report test AUROC / FPR95.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated k values.
        #[arg(long, value_delimiter = ',')]
        k_grid: Option<Vec<usize>>,
        /// Print key=value lines instead of the summary line.
        #[arg(long)]
        machine: bool,
    },
    /// Test AUROC for every k in the grid.
    SweepK {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        k_grid: Vec<usize>,
    },
}

fn load_config(arg: &ConfigArg, overrides: &[String]) -> hod::Result<Config> {
    Config::load(arg.config.as_deref(), overrides)
}

fn history_path(ckpt: &Path) -> PathBuf {
    let mut s = ckpt.as_os_str().to_owned();
    s.push(".history.tsv");
    PathBuf::from(s)
}

fn run(cli: Cli) -> hod::Result<String> {
    let mut out = String::new();
    match cli.command {
        Command::GenData { config, out: dir } => {
            let cfg = load_config(&config, &cli.set)?;
            let splits = gen_synthetic(&cfg.data)?;
            for p in splits.write_dir(&dir)? {
                log::info!("wrote {}", p.display());
            }
        }
        Command::Train {
            config,
            data,
            out: ckpt,
        } => {
            let cfg = load_config(&config, &cli.set)?;
            let splits = SynthSplits::read_dir(&data)?;
            let outcome = train(&splits.train_id, &cfg.train)?;
            if outcome.skipped > 0 {
                log::warn!(
                    "{} batches skipped (anchor without positive)",
                    outcome.skipped
                );
            }
            outcome.checkpoint.save(&ckpt)?;
            let hist = history_path(&ckpt);
            std::fs::write(&hist, history_tsv(&outcome.history)).map_err(|e| Error::Io {
                path: hist.clone(),
                source: e,
            })?;
            log::info!("wrote {} and {}", ckpt.display(), hist.display());
        }
        Command::Synth { config, ckpt, data } => {
            let cfg = load_config(&config, &cli.set)?;
            let ck = Checkpoint::load(&ckpt)?;
            let splits = SynthSplits::read_dir(&data)?;
            let bank = embed_bank(&ck, &splits.train_id)?;
            let set = synthesize_outliers(
                bank.points(),
                &cfg.train.outliers,
                bank.curvature(),
                cfg.train.seed,
            )?;
            for (v, si) in set.outliers.iter().zip(&set.seed_index) {
                let coords: Vec<String> = v.space().iter().map(|x| format!("{x:?}")).collect();
                let _ = writeln!(out, "{si}\t{:?}\t{}", v.space_norm(), coords.join(","));
            }
        }
        Command::Score {
            ckpt,
            bank,
            queries,
            method,
            k,
        } => {
            let ck = Checkpoint::load(&ckpt)?;
            let bank = bank.map(read_feature_file).transpose()?;
            let queries = read_feature_file(&queries)?;
            let k = match (k, &bank) {
                (Some(k), _) => k,
                (None, Some(b)) => DEFAULT_SCORE_K.min(b.len()).max(1),
                (None, None) => DEFAULT_SCORE_K,
            };
            for (i, s) in score_rows(&ck, method, bank.as_ref(), &queries, k)?
                .iter()
                .enumerate()
            {
                let _ = writeln!(out, "{i}\t{s:?}");
            }
        }
        Command::Eval {
            ckpt,
            data,
            k_grid,
            machine,
        } => {
            let ck = Checkpoint::load(&ckpt)?;
            let splits = SynthSplits::read_dir(&data)?;
            let report = evaluate(&ck, &splits, k_grid.as_deref())?;
            if machine {
                out.push_str(&report.key_values());
            } else {
                out.push_str(&report.summary_line());
                out.push('\n');
            }
        }
        Command::SweepK {
            ckpt,
            data,
            k_grid: grid,
        } => {
            let ck = Checkpoint::load(&ckpt)?;
            let splits = SynthSplits::read_dir(&data)?;
            // reject grids that do not fit before embedding everything
            k_grid(Some(&grid), splits.train_id.len())?;
            out.push_str("k\tauroc\n");
            for (k, a) in sweep(&ck, &splits, &grid)? {
                let _ = writeln!(out, "{k}\t{a:.6}");
            }
        }
    }
    Ok(out)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(text) => {
            let mut stdout = std::io::stdout().lock();
            if stdout.write_all(text.as_bytes()).is_err() {
                return ExitCode::from(3);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Config => 2,
                ErrorKind::Data => 3,
                ErrorKind::Numeric => 4,
            })
        }
    }
}
