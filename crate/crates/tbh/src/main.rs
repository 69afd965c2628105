//! Command-line entry point: train, encode, eval, and ablate.

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use tbh::codec;
use tbh::data::{self, Dataset, Normalize, Split};
use tbh::error::{Error, Result};
use tbh::model::{ModelConfig, Variant};
use tbh::retrieval::{self, GroundTruth};
use tbh::training::{TrainConfig, Trainer};

#[derive(Parser)]
#[command(name = "tbh", version, about = "Twin-bottleneck hashing trainer and retrieval toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write a checkpoint, training CSV, and manifest.
    Train(TrainArgs),
    /// Encode a feature file into packed binary codes.
    Encode(EncodeArgs),
    /// Evaluate query codes against database codes.
    Eval(EvalArgs),
    /// Train and evaluate several variants with a shared seed and data.
    Ablate(AblateArgs),
}

#[derive(Args, Clone)]
struct TrainArgs {
    /// TBHF feature file, or a directory holding MNIST IDX files
    #[arg(long)]
    data: PathBuf,
    /// TBHL label file (unused by training; copied through for evaluation)
    #[arg(long)]
    labels: Option<PathBuf>,
    /// TBHS split assignment; rows default to the train split when omitted
    #[arg(long)]
    split: Option<PathBuf>,
    /// Code length M in bits
    #[arg(long)]
    bits: usize,
    /// Continuous bottleneck width L
    #[arg(long, default_value_t = 512)]
    latent: usize,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value_t = 400)]
    batch: usize,
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    /// Total training iterations
    #[arg(long)]
    iters: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "full")]
    variant: Variant,
    #[arg(long, default_value = "none")]
    normalize: String,
    /// Width of the shared encoder layer
    #[arg(long, default_value_t = 1024)]
    shared_hidden: usize,
    /// Width of the first decoder layer
    #[arg(long, default_value_t = 1024)]
    decoder_hidden: usize,
    /// Width of the discriminator hidden layers
    #[arg(long, default_value_t = 256)]
    disc_hidden: usize,
    /// Log every this many iterations
    #[arg(long, default_value_t = 50)]
    log_every: u64,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EncodeArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// TBHF feature file, or a directory holding MNIST IDX files
    #[arg(long)]
    data: PathBuf,
    /// Restrict encoding to one split of --split (train, db, or query)
    #[arg(long)]
    split: Option<PathBuf>,
    #[arg(long)]
    split_tag: Option<String>,
    #[arg(long, default_value = "none")]
    normalize: String,
    /// Output TBHB file
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    db_codes: PathBuf,
    #[arg(long)]
    query_codes: PathBuf,
    #[arg(long)]
    db_labels: PathBuf,
    #[arg(long)]
    query_labels: PathBuf,
    #[arg(long, default_value_t = 1000)]
    k: usize,
    #[arg(long, default_value_t = 2)]
    radius: u32,
    /// Output directory for report.json and pr_curve.csv
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AblateArgs {
    /// Comma-separated variant names
    #[arg(long, value_delimiter = ',')]
    variants: Vec<String>,
    #[command(flatten)]
    train: TrainArgs,
    #[arg(long, default_value_t = 1000)]
    k: usize,
    #[arg(long, default_value_t = 2)]
    radius: u32,
}

#[derive(Serialize)]
struct RunManifest {
    command_line: Vec<String>,
    tool_version: String,
    resolved_config: serde_json::Value,
    seed: Option<u64>,
    input_digests: BTreeMap<String, String>,
    output_paths: Vec<String>,
    wall_clock_seconds: f64,
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

fn digest_input(map: &mut BTreeMap<String, String>, path: &Path) -> Result<()> {
    if path.is_dir() {
        let mut entries: Vec<PathBuf> = std::fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        entries.sort();
        for p in entries {
            map.insert(p.display().to_string(), sha256_file(&p)?);
        }
    } else {
        map.insert(path.display().to_string(), sha256_file(path)?);
    }
    Ok(())
}

/// Loads either a TBHF file or a directory of MNIST IDX files.
fn load_dataset(data: &Path, labels: Option<&Path>, split: Option<&Path>) -> Result<Dataset> {
    let mut dataset = if data.is_dir() {
        data::load_mnist_idx(
            &data.join("train-images-idx3-ubyte"),
            &data.join("train-labels-idx1-ubyte"),
        )?
    } else {
        let features = data::load_features(data)?;
        let n = features.nrows();
        Dataset {
            features,
            labels: None,
            splits: vec![Split::Train; n],
        }
    };
    if let Some(lp) = labels {
        let l = data::load_labels(lp)?;
        if l.nrows() != dataset.rows() {
            return Err(Error::Dimension(format!(
                "label rows {} do not match feature rows {}",
                l.nrows(),
                dataset.rows()
            )));
        }
        dataset.labels = Some(l);
    }
    if let Some(sp) = split {
        let s = data::load_splits(sp)?;
        if s.len() != dataset.rows() {
            return Err(Error::Dimension(format!(
                "split tags {} do not match feature rows {}",
                s.len(),
                dataset.rows()
            )));
        }
        dataset.splits = s;
    }
    Ok(dataset)
}

fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<()> {
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(manifest)
        .map_err(|e| Error::Format(format!("manifest serialization: {e}")))?;
    std::fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))
}

fn model_config_from(args: &TrainArgs, input_dim: usize) -> ModelConfig {
    let mut mc = ModelConfig::new(input_dim, args.bits);
    mc.latent_dim = args.latent;
    mc.shared_hidden = args.shared_hidden;
    mc.decoder_hidden = args.decoder_hidden;
    mc.discriminator_hidden = args.disc_hidden;
    mc.variant = args.variant;
    mc
}

fn train_config_from(args: &TrainArgs) -> TrainConfig {
    TrainConfig {
        lambda: args.lambda,
        batch_size: args.batch,
        learning_rate: args.lr,
        max_iterations: args.iters,
        seed: args.seed,
        log_every: args.log_every,
    }
}

/// Trains one model; returns the trainer and the training-log CSV body.
fn run_training(args: &TrainArgs, dataset: &Dataset) -> Result<(Trainer, String)> {
    let mc = model_config_from(args, dataset.dim());
    let tc = train_config_from(args);
    let mut trainer = Trainer::new(mc, tc)?;
    let train_features = dataset.split_features(Split::Train);
    let mut csv = String::from("iteration,l_ae,recon,l_d\n");
    trainer.train(&train_features, |r| {
        csv.push_str(&format!("{},{},{},{}\n", r.iteration, r.l_ae, r.recon, r.l_d));
    })?;
    Ok((trainer, csv))
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let started = Instant::now();
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let mode: Normalize = args.normalize.parse()?;
    let mut dataset = load_dataset(&args.data, args.labels.as_deref(), args.split.as_deref())?;
    data::normalize(&mut dataset, mode);

    let (trainer, csv) = run_training(args, &dataset)?;
    let ckpt = args.out.join("checkpoint.tbhc");
    trainer.save_checkpoint(&ckpt)?;
    let log_path = args.out.join("training_log.csv");
    std::fs::write(&log_path, csv).map_err(|e| Error::io(&log_path, e))?;

    let mut digests = BTreeMap::new();
    digest_input(&mut digests, &args.data)?;
    if let Some(lp) = &args.labels {
        digest_input(&mut digests, lp)?;
    }
    if let Some(sp) = &args.split {
        digest_input(&mut digests, sp)?;
    }
    write_manifest(
        &args.out,
        &RunManifest {
            command_line: std::env::args().collect(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            resolved_config: serde_json::json!({
                "model": trainer.model.config,
                "train": trainer.config,
                "normalize": args.normalize,
            }),
            seed: Some(args.seed),
            input_digests: digests,
            output_paths: vec![ckpt.display().to_string(), log_path.display().to_string()],
            wall_clock_seconds: started.elapsed().as_secs_f64(),
        },
    )
}

fn cmd_encode(args: &EncodeArgs) -> Result<()> {
    let started = Instant::now();
    let mode: Normalize = args.normalize.parse()?;
    let trainer = Trainer::load_checkpoint(&args.checkpoint)?;
    let mut dataset = load_dataset(&args.data, None, args.split.as_deref())?;
    data::normalize(&mut dataset, mode);
    let features = match &args.split_tag {
        Some(tag) => {
            let split = match tag.as_str() {
                "train" => Split::Train,
                "db" => Split::Db,
                "query" => Split::Query,
                other => {
                    return Err(Error::Config(format!("unknown split tag '{other}'")));
                }
            };
            dataset.split_features(split)
        }
        None => dataset.features.clone(),
    };
    if features.ncols() != trainer.model.config.input_dim {
        return Err(Error::Dimension(format!(
            "checkpoint expects {} input features, data has {}",
            trainer.model.config.input_dim,
            features.ncols()
        )));
    }
    let codes = codec::encode_dataset(&trainer.model, &features)?;
    codec::save_codes(&args.out, &codes)?;

    let out_dir = args.out.parent().unwrap_or(Path::new(".")).to_path_buf();
    let mut digests = BTreeMap::new();
    digest_input(&mut digests, &args.checkpoint)?;
    digest_input(&mut digests, &args.data)?;
    write_manifest(
        &out_dir,
        &RunManifest {
            command_line: std::env::args().collect(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            resolved_config: serde_json::json!({
                "bits": codes.bits(),
                "rows": codes.count(),
                "normalize": args.normalize,
            }),
            seed: None,
            input_digests: digests,
            output_paths: vec![args.out.display().to_string()],
            wall_clock_seconds: started.elapsed().as_secs_f64(),
        },
    )
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let started = Instant::now();
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let db = codec::load_codes(&args.db_codes)?;
    let queries = codec::load_codes(&args.query_codes)?;
    let gt = GroundTruth::new(
        data::load_labels(&args.query_labels)?,
        data::load_labels(&args.db_labels)?,
    )?;
    let mut report = retrieval::evaluate(&queries, &db, &gt, args.k, false)?;
    if args.radius != 2 {
        report.p_at_h2 = retrieval::precision_at_radius(&queries, &db, &gt, args.radius)?;
    }
    let json_path = args.out.join("report.json");
    let csv_path = args.out.join("pr_curve.csv");
    report.write_json(&json_path)?;
    report.write_pr_csv(&csv_path)?;

    let mut digests = BTreeMap::new();
    for p in [
        &args.db_codes,
        &args.query_codes,
        &args.db_labels,
        &args.query_labels,
    ] {
        digest_input(&mut digests, p)?;
    }
    write_manifest(
        &args.out,
        &RunManifest {
            command_line: std::env::args().collect(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            resolved_config: serde_json::json!({ "k": args.k, "radius": args.radius }),
            seed: None,
            input_digests: digests,
            output_paths: vec![json_path.display().to_string(), csv_path.display().to_string()],
            wall_clock_seconds: started.elapsed().as_secs_f64(),
        },
    )
}

/// One ablation row; failed variants carry the error text in `error`.
fn ablate_row(
    variant_name: &str,
    base: &TrainArgs,
    dataset: &Dataset,
    k: usize,
    radius: u32,
) -> std::result::Result<String, String> {
    let variant: Variant = variant_name.parse().map_err(|e: Error| e.to_string())?;
    let mut args = base.clone();
    args.variant = variant;
    // isolated stream per variant: same data, decorrelated draws
    args.seed = base.seed.wrapping_add(
        Sha256::digest(variant_name.as_bytes())[..8]
            .iter()
            .fold(0u64, |acc, &b| acc << 8 | b as u64)
            & 0xFFFF,
    );
    let (trainer, csv) = run_training(&args, dataset).map_err(|e| e.to_string())?;
    let final_recon = csv
        .lines()
        .last()
        .and_then(|l| l.split(',').nth(2))
        .unwrap_or("nan")
        .to_string();

    let db_rows = dataset.split_features(Split::Db);
    let query_rows = dataset.split_features(Split::Query);
    if dataset.labels.is_none() {
        return Err("ablation evaluation needs labels".to_string());
    }
    let db_codes = codec::encode_dataset(&trainer.model, &db_rows).map_err(|e| e.to_string())?;
    let query_codes =
        codec::encode_dataset(&trainer.model, &query_rows).map_err(|e| e.to_string())?;
    let gt = GroundTruth::new(
        dataset.split_labels(Split::Query).unwrap(),
        dataset.split_labels(Split::Db).unwrap(),
    )
    .map_err(|e| e.to_string())?;
    let mut report =
        retrieval::evaluate(&query_codes, &db_codes, &gt, k, false).map_err(|e| e.to_string())?;
    if radius != 2 {
        report.p_at_h2 = retrieval::precision_at_radius(&query_codes, &db_codes, &gt, radius)
            .map_err(|e| e.to_string())?;
    }
    Ok(format!(
        "{variant_name},{},{},{},{},{final_recon}",
        base.bits, report.map_at_k, report.p_at_k, report.p_at_h2
    ))
}

fn cmd_ablate(args: &AblateArgs) -> Result<()> {
    let started = Instant::now();
    if args.variants.is_empty() {
        return Err(Error::Config("at least one variant required".into()));
    }
    std::fs::create_dir_all(&args.train.out).map_err(|e| Error::io(&args.train.out, e))?;
    let mode: Normalize = args.train.normalize.parse()?;
    let mut dataset = load_dataset(
        &args.train.data,
        args.train.labels.as_deref(),
        args.train.split.as_deref(),
    )?;
    data::normalize(&mut dataset, mode);

    let mut csv = String::from("variant,bits,map_at_k,p_at_k,p_at_h2,final_recon\n");
    let mut failures = 0usize;
    for name in &args.variants {
        match ablate_row(name, &args.train, &dataset, args.k, args.radius) {
            Ok(row) => csv.push_str(&(row + "\n")),
            Err(msg) => {
                failures += 1;
                eprintln!("variant {name}: {msg}");
                csv.push_str(&format!("{name},{},error,error,error,error\n", args.train.bits));
            }
        }
    }
    let table = args.train.out.join("ablation.csv");
    std::fs::write(&table, &csv).map_err(|e| Error::io(&table, e))?;

    let mut digests = BTreeMap::new();
    digest_input(&mut digests, &args.train.data)?;
    write_manifest(
        &args.train.out,
        &RunManifest {
            command_line: std::env::args().collect(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            resolved_config: serde_json::json!({
                "variants": args.variants,
                "k": args.k,
                "radius": args.radius,
            }),
            seed: Some(args.train.seed),
            input_digests: digests,
            output_paths: vec![table.display().to_string()],
            wall_clock_seconds: started.elapsed().as_secs_f64(),
        },
    )?;
    if failures > 0 {
        return Err(Error::Config(format!("{failures} variant(s) failed")));
    }
    Ok(())
}

fn main() {
    // Usage problems exit 1; help and version requests exit 0.
    let cli = Cli::try_parse().unwrap_or_else(|e| {
        use clap::error::ErrorKind;
        let _ = e.print();
        match e.kind() {
            ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => std::process::exit(0),
            _ => std::process::exit(1),
        }
    });
    let result = match &cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Encode(args) => cmd_encode(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Ablate(args) => cmd_ablate(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
