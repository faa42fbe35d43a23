//! Command-line front end for the corruption benchmark toolkit.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use corrupt_bench_core::calibration::{check_calibration, reference_corpus, CalibrationSet};
use corrupt_bench_core::dataset::{
    generate_dataset, parse_prediction_log, DatasetManifest, GenerateOptions,
};
use corrupt_bench_core::metrics::{build_error_profile, BaselineTable, RobustnessReport};
use corrupt_bench_core::preprocess::{clahe, denoise_gated, ClaheParams, NlMeansParams};
use corrupt_bench_core::splits::{
    read_metadata, score_split, style_holdout, subtype_holdout, taxonomy_holdout, version_holdout,
};
use corrupt_bench_core::{CorruptionKind, ImageBuf, SeverityTable};

#[derive(Parser)]
#[command(name = "corrupt-bench", about = "Corruption robustness benchmark toolkit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Corrupt a source tree into a benchmark dataset with a manifest.
    Generate(GenerateArgs),
    /// Score a prediction log against a dataset manifest.
    Report(ReportArgs),
    /// Apply input standardization to a directory of images.
    Preprocess(PreprocessArgs),
    /// Build a hold-out train/test split from icon metadata.
    Split(SplitArgs),
    /// Check a severity table against the published calibration bands.
    Calibrate(CalibrateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum KindSet {
    Core,
    Extra,
    All,
}

#[derive(Args)]
struct GenerateArgs {
    /// Source directory: <class>/<image> two-level tree.
    #[arg(long)]
    src: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "core")]
    kinds: KindSet,
    /// Severities, e.g. "1-5" or "1,3,5".
    #[arg(long, default_value = "1-5")]
    severities: String,
    /// Seed salt as a hex string.
    #[arg(long, default_value = "0")]
    salt: String,
    /// Severity table: "v1" or a path to a TOML file.
    #[arg(long, default_value = "v1")]
    table: String,
    /// Write lossless PNG outputs instead of JPEG quality 85.
    #[arg(long)]
    lossless: bool,
    /// Continue a partially generated dataset.
    #[arg(long)]
    resume: bool,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Keep source dimensions instead of center-crop/resize to 224.
    #[arg(long)]
    no_resize: bool,
    /// Directory of frost texture PNGs replacing the builtin set.
    #[arg(long)]
    frost_dir: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// JSONL log: one {image_id, pred, label, split} record per line.
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "model")]
    network: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Clahe,
    Nlmeans,
}

#[derive(Args)]
struct PreprocessArgs {
    #[arg(long, value_enum)]
    method: Method,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// CLAHE tile grid edge (NxN tiles).
    #[arg(long, default_value_t = 8)]
    tiles: usize,
    #[arg(long, default_value_t = 2.0)]
    clip: f64,
    #[arg(long, default_value_t = 256)]
    bins: usize,
    #[arg(long, default_value_t = 1)]
    patch: usize,
    #[arg(long, default_value_t = 5)]
    search: usize,
    /// Filtering strength as a multiple of the noise estimate.
    #[arg(long, default_value_t = 3.0)]
    strength: f64,
    /// Noise gate; images estimated below this are copied unchanged.
    #[arg(long, default_value_t = 0.01)]
    gate: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Protocol {
    Style,
    Subtype,
    Version,
    Taxonomy,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long, value_enum)]
    protocol: Protocol,
    /// CSV metadata with header path,class,platform,subtype,version.
    #[arg(long)]
    meta: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Platform to hold out (style protocol).
    #[arg(long)]
    holdout: Option<String>,
    /// File listing held-out subtypes, one per line (subtype protocol).
    #[arg(long)]
    subtypes: Option<PathBuf>,
    /// JSON map of broad class -> subtype list (taxonomy protocol).
    #[arg(long)]
    taxonomy: Option<PathBuf>,
    /// Subtypes to hold out per class (taxonomy protocol).
    #[arg(long)]
    k: Option<usize>,
    /// Hex seed for the taxonomy selection.
    #[arg(long, default_value = "0")]
    seed: String,
    /// Optional prediction log to score against the split.
    #[arg(long)]
    score: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Severity table: "v1" or a path to a TOML file.
    #[arg(long, default_value = "v1")]
    table: String,
    /// Directory of corpus images; omitted: the builtin reference
    /// corpus.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Calibration bands: "v1" or a path to a TOML file.
    #[arg(long, default_value = "v1")]
    bands: String,
}

fn parse_severities(text: &str) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for part in text.split(',') {
        if let Some((a, b)) = part.split_once('-') {
            let a: u8 = a.trim().parse().context("bad severity range")?;
            let b: u8 = b.trim().parse().context("bad severity range")?;
            out.extend(a..=b);
        } else {
            out.push(part.trim().parse().context("bad severity")?);
        }
    }
    if out.is_empty() || out.iter().any(|s| !(1..=5).contains(s)) {
        bail!("severities must be within 1-5");
    }
    out.dedup();
    Ok(out)
}

fn parse_hex(text: &str) -> Result<u64> {
    u64::from_str_radix(text.trim_start_matches("0x"), 16)
        .with_context(|| format!("{text:?} is not a hex integer"))
}

fn load_table(spec: &str) -> Result<SeverityTable> {
    if spec == "v1" {
        return Ok(SeverityTable::v1());
    }
    let text = fs::read_to_string(spec).with_context(|| format!("reading table {spec}"))?;
    Ok(SeverityTable::from_toml(&text)?)
}

fn image_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .map(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
                .unwrap_or(false)
        })
        .collect();
    files.sort();
    Ok(files)
}

fn run_generate(args: GenerateArgs) -> Result<()> {
    let table = load_table(&args.table)?;
    let options = GenerateOptions {
        kinds: match args.kinds {
            KindSet::Core => CorruptionKind::CORE.to_vec(),
            KindSet::Extra => CorruptionKind::EXTRA.to_vec(),
            KindSet::All => CorruptionKind::ALL.to_vec(),
        },
        severities: parse_severities(&args.severities)?,
        salt: parse_hex(&args.salt)?,
        lossless: args.lossless,
        resume: args.resume,
        resize: if args.no_resize { None } else { Some(224) },
        frost_dir: args.frost_dir,
        jobs: args.jobs,
    };
    let manifest = generate_dataset(&args.src, &args.out, &table, &options)?;
    println!(
        "wrote {} images ({} source errors) to {}",
        manifest.images.len(),
        manifest.errors.len(),
        args.out.display()
    );
    Ok(())
}

fn run_report(args: ReportArgs) -> Result<()> {
    let manifest = DatasetManifest::load(&args.manifest)?;
    let file = fs::File::open(&args.predictions)
        .with_context(|| format!("opening {}", args.predictions.display()))?;
    let log = parse_prediction_log(BufReader::new(file))?;
    let evaluated = log.len() as u64;
    let profile = build_error_profile(&log, &manifest, &args.network)?;
    let report = RobustnessReport::compute(
        &profile,
        &BaselineTable::alexnet(),
        &manifest.severity_table_version,
        evaluated,
    )?;
    fs::write(&args.out, report.to_json()).with_context(|| format!("writing {}", args.out.display()))?;
    println!(
        "{}: mCE {:.1}, relative mCE {:.1} ({} records)",
        report.network_name, report.mce, report.relative_mce, evaluated
    );
    Ok(())
}

fn run_preprocess(args: PreprocessArgs) -> Result<()> {
    fs::create_dir_all(&args.out)?;
    let clahe_params = ClaheParams {
        tile_rows: args.tiles,
        tile_cols: args.tiles,
        clip_limit: args.clip,
        bins: args.bins,
    };
    let nl_params = NlMeansParams {
        patch_radius: args.patch,
        search_radius: args.search,
        strength: args.strength,
        gate: args.gate,
    };
    let files = image_files(&args.input)?;
    if files.is_empty() {
        bail!("no images in {}", args.input.display());
    }
    for path in &files {
        let img = ImageBuf::load(path)?;
        let out = match args.method {
            Method::Clahe => clahe(&img, &clahe_params)?,
            Method::Nlmeans => denoise_gated(&img, &nl_params)?,
        };
        let name = path.file_stem().unwrap().to_string_lossy();
        out.save_png(&args.out.join(format!("{name}.png")))?;
    }
    println!("processed {} images", files.len());
    Ok(())
}

fn run_split(args: SplitArgs) -> Result<()> {
    let file =
        fs::File::open(&args.meta).with_context(|| format!("opening {}", args.meta.display()))?;
    let records = read_metadata(file)?;
    let spec = match args.protocol {
        Protocol::Style => {
            let platform = args
                .holdout
                .context("--holdout PLATFORM is required for the style protocol")?;
            style_holdout(&records, &platform)?
        }
        Protocol::Subtype => {
            let path = args
                .subtypes
                .context("--subtypes FILE is required for the subtype protocol")?;
            let held: Vec<String> = fs::read_to_string(&path)?
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(String::from)
                .collect();
            subtype_holdout(&records, &held)?
        }
        Protocol::Version => version_holdout(&records)?,
        Protocol::Taxonomy => {
            let path = args
                .taxonomy
                .context("--taxonomy FILE is required for the taxonomy protocol")?;
            let taxonomy: BTreeMap<String, Vec<String>> =
                serde_json::from_str(&fs::read_to_string(&path)?)
                    .context("taxonomy must be a JSON map of class -> subtype list")?;
            let k = args.k.context("--k N is required for the taxonomy protocol")?;
            taxonomy_holdout(&records, &taxonomy, k, parse_hex(&args.seed)?)?
        }
    };
    for warning in &spec.warnings {
        eprintln!("warning: {warning}");
    }
    fs::write(&args.out, spec.to_json())?;
    println!(
        "train {} / test {} / excluded {}",
        spec.train.len(),
        spec.test.len(),
        spec.excluded.len()
    );
    if let Some(log_path) = args.score {
        let file = fs::File::open(&log_path)?;
        let log = parse_prediction_log(BufReader::new(file))?;
        println!("held-out accuracy: {:.4}", score_split(&log, &spec)?);
    }
    Ok(())
}

fn run_calibrate(args: CalibrateArgs) -> Result<bool> {
    let table = load_table(&args.table)?;
    let bands = if args.bands == "v1" {
        CalibrationSet::v1()
    } else {
        CalibrationSet::from_toml(&fs::read_to_string(&args.bands)?)?
    };
    let corpus: Vec<ImageBuf> = match &args.corpus {
        Some(dir) => image_files(dir)?
            .iter()
            .map(|p| ImageBuf::load(p))
            .collect::<corrupt_bench_core::Result<_>>()?,
        None => reference_corpus(),
    };
    let report = check_calibration(&table, &bands, &corpus)?;
    for kind in &report.kinds {
        let status = if kind.monotone && kind.in_band.iter().all(|&b| b) {
            "ok"
        } else {
            "FAIL"
        };
        println!(
            "{:<16} {status}  distortion {:?}",
            kind.kind.name(),
            kind.means.map(|m| (m * 1000.0).round() / 1000.0)
        );
    }
    for failure in &report.failures {
        eprintln!("failure: {failure}");
    }
    Ok(report.passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Generate(args) => run_generate(args).map(|()| true),
        Command::Report(args) => run_report(args).map(|()| true),
        Command::Preprocess(args) => run_preprocess(args).map(|()| true),
        Command::Split(args) => run_split(args).map(|()| true),
        Command::Calibrate(args) => run_calibrate(args),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
