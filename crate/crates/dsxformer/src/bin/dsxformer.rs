use clap::{Args, Parser, Subcommand};
use dsxformer::data::{pca_reduce, read_split_file, HsiCube, Metrics, SplitSpec};
use dsxformer::error::Result;
use dsxformer::train::{
    load_checkpoint, train, write_map, TrainConfig, TrainOptions,
};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "dsxformer", about = "Hyperspectral image classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reduce a cube's bands with PCA
    Pca(PcaArgs),
    /// Train a model on a cube
    Train(TrainArgs),
    /// Evaluate a checkpoint on the test side of a split
    Eval(EvalArgs),
    /// Emit a classification map
    Predict(PredictArgs),
}

#[derive(Args)]
struct PcaArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    cube: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Fraction of each class used for training
    #[arg(long, default_value_t = 0.1, conflicts_with = "train_counts")]
    train_ratio: f64,
    /// Comma-separated per-class training counts
    #[arg(long)]
    train_counts: Option<String>,
    /// Global gradient-norm clip (0 = off)
    #[arg(long, default_value_t = 0.0)]
    clip_norm: f64,
    /// Cosine learning-rate schedule
    #[arg(long)]
    cosine: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    cube: PathBuf,
    #[arg(long)]
    split: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    cube: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Classify every pixel, not only labeled ones
    #[arg(long)]
    all_pixels: bool,
}

fn print_report(m: &Metrics) {
    println!("OA    {:.6}", m.oa);
    println!("AA    {:.6}", m.aa);
    println!("Kappa {:.6}", m.kappa);
    for (i, rec) in m.per_class.iter().enumerate() {
        match rec {
            Some(r) => println!("class {:>2} recall {:.6}", i + 1, r),
            None => println!("class {:>2} absent from truth", i + 1),
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Pca(a) => {
            let cube = HsiCube::load(&a.input)?;
            let out = pca_reduce(&cube, a.k)?;
            out.save(&a.out)?;
            println!("wrote {} ({} -> {} bands)", a.out.display(), cube.bands, out.bands);
        }
        Command::Train(a) => {
            let cube = HsiCube::load(&a.cube)?;
            let config = match &a.config {
                Some(path) => TrainConfig::load(path)?,
                None => TrainConfig::default(),
            };
            let split = match &a.train_counts {
                Some(counts) => SplitSpec::PerClass(
                    counts
                        .split(',')
                        .map(|s| {
                            s.trim().parse::<usize>().map_err(|_| {
                                dsxformer::DsxError::Config(format!("bad count {s:?}"))
                            })
                        })
                        .collect::<Result<_>>()?,
                ),
                None => SplitSpec::Ratio(a.train_ratio),
            };
            let opts = TrainOptions { clip_norm: a.clip_norm, cosine: a.cosine };
            let arts = train(&config, &cube, &split, &a.out, opts)?;
            println!("checkpoint {}", arts.checkpoint.display());
            println!("metrics log {}", arts.metrics_log.display());
            print_report(&arts.test_metrics);
        }
        Command::Eval(a) => {
            let model = load_checkpoint(&a.checkpoint)?;
            let cube = HsiCube::load(&a.cube)?;
            let (_, _, pixels) = read_split_file(&a.split)?;
            let m = dsxformer::train::evaluate(&model, &cube, &pixels)?;
            print_report(&m);
        }
        Command::Predict(a) => {
            let model = load_checkpoint(&a.checkpoint)?;
            let cube = HsiCube::load(&a.cube)?;
            write_map(&a.out, &model, &cube, a.all_pixels)?;
            println!("wrote {}", a.out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
