use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use orderness::corruption::{swap_dataset, SwapError, SwapSpec};
use orderness::data::{gen_fixture, load_dataset, write_snapshot, DataError, FixtureKind, FixtureSpec};
use orderness::experiments::{self, diverged_log, run_train, ExperimentConfig, ExperimentError, TrainJob};
use orderness::io::{atomic_write, fmt_sig9};
use orderness::metric::{channel_profiles, max_valid_scale, MetricError, PROFILE_CSV_HEADER};
use orderness::nn::NnError;

#[derive(Parser)]
#[command(name = "orderness", version, about = "Multi-scale spatial orderness of images, feature maps and kernels")]
struct Cli {
    /// Worker threads (1 gives bit-exact logs across machines).
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct SeedArg {
    #[arg(long, env = "ORDERNESS_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SeedOverride {
    /// Replaces the seed in the config file.
    #[arg(long, env = "ORDERNESS_SEED")]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Orderness profile of a dataset directory.
    Orderness {
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated scales; every valid scale when omitted.
        #[arg(long, value_delimiter = ',')]
        scales: Vec<usize>,
        #[arg(long, default_value_t = orderness::metric::DEFAULT_TRIPLES)]
        triples: usize,
        #[command(flatten)]
        seed: SeedArg,
        /// CSV destination; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Block-swap every image of a dataset and write a snapshot.
    Swap {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        block_size: usize,
        #[arg(long)]
        swaps: usize,
        #[command(flatten)]
        seed: SeedArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model from a JSON job file and write its epoch log.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also save the trained weights as JSON.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[command(flatten)]
        seed: SeedOverride,
    },
    /// Run a named experiment from a JSON config and write its result table.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        seed: SeedOverride,
    },
    /// Generate a synthetic calibration dataset.
    GenFixture {
        #[arg(long)]
        kind: FixtureKind,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        size: usize,
        #[arg(long, default_value_t = 0.1)]
        sigma: f64,
        #[command(flatten)]
        seed: SeedArg,
        #[arg(long)]
        out: PathBuf,
    },
}

const BAD_ARGS: u8 = 2;
const DATA: u8 = 3;
const DEGENERATE: u8 = 4;
const DIVERGED: u8 = 5;

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl ToString) -> Self {
        Self {
            code,
            message: message.to_string(),
        }
    }
}

fn metric_code(e: &MetricError) -> u8 {
    match e {
        _ if e.is_degenerate() => DEGENERATE,
        MetricError::AtScale { source, .. } => metric_code(source),
        MetricError::EmptyInput | MetricError::GridTooSmall { .. } | MetricError::ShapeMismatch { .. } => DATA,
        _ => BAD_ARGS,
    }
}

fn swap_code(e: &SwapError) -> u8 {
    match e {
        SwapError::AtImage { source, .. } => swap_code(source),
        _ => BAD_ARGS,
    }
}

fn nn_code(e: &NnError) -> u8 {
    match e {
        NnError::DivergedLoss { .. } => DIVERGED,
        NnError::Metric(m) => metric_code(m),
        NnError::Checkpoint(_) => DATA,
        _ => BAD_ARGS,
    }
}

impl From<MetricError> for Failure {
    fn from(e: MetricError) -> Self {
        Failure::new(metric_code(&e), e)
    }
}

impl From<DataError> for Failure {
    fn from(e: DataError) -> Self {
        Failure::new(DATA, e)
    }
}

impl From<SwapError> for Failure {
    fn from(e: SwapError) -> Self {
        Failure::new(swap_code(&e), e)
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        let code = match &e {
            ExperimentError::Config(_) => BAD_ARGS,
            ExperimentError::Data(_) => DATA,
            ExperimentError::Metric(m) => metric_code(m),
            ExperimentError::Swap(s) => swap_code(s),
            ExperimentError::Nn(n) => nn_code(n),
        };
        Failure::new(code, e)
    }
}

fn write_out(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Failure::new(DATA, format!("{}: {e}", dir.display())))?;
    }
    atomic_write(path, bytes).map_err(|e| Failure::new(DATA, format!("{}: {e}", path.display())))
}

fn print_seed(seed: u64) {
    println!("seed: {seed}");
}

fn cmd_orderness(
    data: &Path,
    scales: Vec<usize>,
    triples: usize,
    seed: u64,
    out: Option<&Path>,
) -> Result<(), Failure> {
    print_seed(seed);
    let ds = load_dataset(data)?;
    let (c, h, w) = ds.shape().ok_or_else(|| Failure::new(DATA, "dataset is empty"))?;
    let scales = if scales.is_empty() {
        (1..=max_valid_scale(h, w)).collect()
    } else {
        scales
    };
    let profiles = channel_profiles(ds.images(), &scales, triples, seed)?;
    let csv = if c == 1 {
        profiles[0].to_csv()
    } else {
        let mut s = format!("channel,{PROFILE_CSV_HEADER}\n");
        for (ch, p) in profiles.iter().enumerate() {
            for line in p.to_csv().lines().skip(1) {
                s += &format!("{ch},{line}\n");
            }
        }
        s
    };
    match out {
        Some(p) => write_out(p, csv.as_bytes())?,
        None => print!("{csv}"),
    }
    for (i, a) in scales.iter().enumerate() {
        let mean = profiles.iter().map(|p| p.entries[i].so).sum::<f64>() / profiles.len() as f64;
        eprintln!("scale {a}: so = {}", fmt_sig9(mean));
    }
    Ok(())
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

fn cmd_swap(data: &Path, block_size: usize, n_swaps: usize, seed: u64, out: &Path) -> Result<(), Failure> {
    print_seed(seed);
    let ds = load_dataset(data)?;
    let swapped = swap_dataset(
        &ds,
        &SwapSpec {
            block_size,
            n_swaps,
            seed,
        },
    )?;
    let preserved = ds
        .images()
        .iter()
        .zip(swapped.images())
        .all(|(a, b)| sorted(a.data()) == sorted(b.data()));
    if !preserved {
        return Err(Failure::new(DATA, "block swap changed a pixel histogram"));
    }
    write_snapshot(out, &swapped)?;
    println!("swapped {} images (k={block_size}, Ns={n_swaps}); histograms preserved", swapped.len());
    Ok(())
}

fn cmd_train(config: &Path, out: &Path, checkpoint: Option<&Path>, seed: Option<u64>) -> Result<(), Failure> {
    let mut job = TrainJob::load(config)?;
    if let Some(s) = seed {
        job.seed = s;
    }
    print_seed(job.seed);
    match run_train(&job, checkpoint) {
        Ok(log) => {
            write_out(out, log.to_csv().as_bytes())?;
            let last = log.last().expect("at least one epoch");
            println!(
                "trained {} epochs: loss {} val_acc {}",
                last.epoch,
                fmt_sig9(last.loss),
                fmt_sig9(last.val_acc)
            );
            Ok(())
        }
        Err(e) => {
            if let Some(log) = diverged_log(&e) {
                write_out(out, log.to_csv().as_bytes())?;
            }
            Err(e.into())
        }
    }
}

fn cmd_experiment(config: &Path, out: &Path, seed: Option<u64>) -> Result<(), Failure> {
    let mut cfg = ExperimentConfig::load(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    print_seed(cfg.seed);
    let table = experiments::run(&cfg)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Failure::new(DATA, format!("{}: {e}", dir.display())))?;
    }
    table
        .write(out, &cfg)
        .map_err(|e| Failure::new(DATA, format!("{}: {e}", out.display())))?;
    let stats: Vec<String> = table.summary.iter().map(|(k, v)| format!("{k}={}", fmt_sig9(*v))).collect();
    println!("{}: {} rows; {}", table.experiment, table.rows.len(), stats.join(" "));
    Ok(())
}

fn cmd_gen_fixture(spec: FixtureSpec, out: &Path) -> Result<(), Failure> {
    print_seed(spec.seed);
    let ds = gen_fixture(&spec)?;
    write_snapshot(out, &ds)?;
    println!("wrote {} {} images of {}x{}", ds.len(), spec.kind.name(), spec.size, spec.size);
    Ok(())
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Orderness {
            data,
            scales,
            triples,
            seed,
            out,
        } => cmd_orderness(&data, scales, triples, seed.seed, out.as_deref()),
        Command::Swap {
            data,
            block_size,
            swaps,
            seed,
            out,
        } => cmd_swap(&data, block_size, swaps, seed.seed, &out),
        Command::Train {
            config,
            out,
            checkpoint,
            seed,
        } => cmd_train(&config, &out, checkpoint.as_deref(), seed.seed),
        Command::Experiment { config, out, seed } => cmd_experiment(&config, &out, seed.seed),
        Command::GenFixture {
            kind,
            n,
            size,
            sigma,
            seed,
            out,
        } => cmd_gen_fixture(
            FixtureSpec {
                kind,
                n,
                size,
                sigma,
                seed: seed.seed,
            },
            &out,
        ),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads.max(1)).build_global() {
        eprintln!("error: thread pool: {e}");
        return ExitCode::from(BAD_ARGS);
    }
    let result = dispatch(cli.command);
    std::io::stdout().flush().ok();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
