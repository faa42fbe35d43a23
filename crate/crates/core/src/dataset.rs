//! Corrupted-dataset generation: deterministic per-image seeds, an
//! atomically written manifest, and the benchmark protocol flag.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corrupt::{
    apply_corruption, frost, kind_rng, CorruptionKind, SeverityTable,
};
use crate::error::{Error, Result};
use crate::image::ImageBuf;

/// Stable 64-bit seed for one output image, independent of filesystem
/// enumeration order. FNV-1a over the tuple bytes with a splitmix64
/// finalizer for avalanche.
pub fn derive_seed(
    dataset_salt: u64,
    relative_path: &str,
    kind: CorruptionKind,
    severity: u8,
) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x100000001b3);
        }
    };
    eat(&dataset_salt.to_le_bytes());
    eat(relative_path.as_bytes());
    eat(&[0xff]);
    eat(kind.name().as_bytes());
    eat(&[0xfe, severity]);
    // finalize
    let mut z = h.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestImage {
    /// Output path relative to the dataset root:
    /// `<kind>/<severity>/<class>/<file>`.
    pub path: String,
    /// Source path relative to the source root: `<class>/<file>`.
    pub source: String,
    pub kind: CorruptionKind,
    pub severity: u8,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frost_texture: Option<u32>,
    /// SHA-256 of the encoded output file bytes.
    pub output_sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SourceEntry {
    pub class: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SourceError {
    pub source: String,
    pub message: String,
}

/// Reproducibility record for a generated dataset. `test_only` is the
/// benchmark protocol flag: models must never train on these images.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub severity_table_version: String,
    pub salt: u64,
    pub test_only: bool,
    pub encoding: String,
    pub resize: Option<usize>,
    pub kinds: Vec<CorruptionKind>,
    pub severities: Vec<u8>,
    pub frost_source: String,
    pub label_set: Vec<String>,
    pub sources: BTreeMap<String, SourceEntry>,
    pub images: Vec<ManifestImage>,
    pub errors: Vec<SourceError>,
}

impl DatasetManifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn from_json(text: &str) -> Result<DatasetManifest> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            context: "manifest".into(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<DatasetManifest> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        DatasetManifest::from_json(&text)
    }
}

#[derive(Debug, Clone)]
pub struct GenerateOptions {
    pub kinds: Vec<CorruptionKind>,
    pub severities: Vec<u8>,
    pub salt: u64,
    /// Lossless PNG outputs instead of JPEG quality 85.
    pub lossless: bool,
    pub resume: bool,
    /// Center-crop/resize target applied before corruption; None keeps
    /// source dimensions.
    pub resize: Option<usize>,
    /// Directory of frost texture PNGs; None uses the builtin
    /// procedural textures.
    pub frost_dir: Option<PathBuf>,
    pub jobs: Option<usize>,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        GenerateOptions {
            kinds: CorruptionKind::CORE.to_vec(),
            severities: vec![1, 2, 3, 4, 5],
            salt: 0,
            lossless: false,
            resume: false,
            resize: Some(224),
            frost_dir: None,
            jobs: None,
        }
    }
}

const OUTPUT_JPEG_QUALITY: u8 = 85;

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn enumerate_sources(src_dir: &Path) -> Result<Vec<(String, String, PathBuf)>> {
    // (class, relative source path, absolute path), canonically sorted
    let mut out = Vec::new();
    let read = |p: &Path| std::fs::read_dir(p).map_err(|e| Error::io(p, e));
    for class_entry in read(src_dir)? {
        let class_entry = class_entry.map_err(|e| Error::io(src_dir, e))?;
        if !class_entry.path().is_dir() {
            continue;
        }
        let class = class_entry.file_name().to_string_lossy().into_owned();
        for file_entry in read(&class_entry.path())? {
            let file_entry = file_entry.map_err(|e| Error::io(class_entry.path(), e))?;
            if file_entry.path().is_file() {
                let name = file_entry.file_name().to_string_lossy().into_owned();
                out.push((class.clone(), format!("{class}/{name}"), file_entry.path()));
            }
        }
    }
    out.sort_by(|a, b| a.1.cmp(&b.1));
    Ok(out)
}

fn load_frost_textures(dir: &Path) -> Result<Vec<ImageBuf>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .map(|e| e.eq_ignore_ascii_case("png"))
                .unwrap_or(false)
        })
        .collect();
    paths.sort();
    paths.iter().map(|p| ImageBuf::load(p)).collect()
}

/// Writes `out_dir/<kind>/<severity>/<class>/<image>` for every
/// combination, then the manifest, atomically last. Generation is
/// restartable per file with `resume`. Unreadable sources are recorded
/// in the manifest error list and skipped.
pub fn generate_dataset(
    src_dir: &Path,
    out_dir: &Path,
    table: &SeverityTable,
    options: &GenerateOptions,
) -> Result<DatasetManifest> {
    if out_dir.exists() {
        let occupied = std::fs::read_dir(out_dir)
            .map_err(|e| Error::io(out_dir, e))?
            .next()
            .is_some();
        if occupied && !options.resume {
            return Err(Error::OutputNotEmpty(out_dir.to_path_buf()));
        }
    } else {
        std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    }

    let frost_textures: Option<Arc<Vec<ImageBuf>>> = match &options.frost_dir {
        Some(dir) => Some(Arc::new(load_frost_textures(dir)?)),
        None => None,
    };

    let sources = enumerate_sources(src_dir)?;
    let mut label_set: Vec<String> = sources.iter().map(|(c, _, _)| c.clone()).collect();
    label_set.dedup();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.jobs.unwrap_or(0))
        .build()
        .expect("thread pool");

    struct PerSource {
        source: String,
        class: String,
        sha256: String,
        images: Vec<ManifestImage>,
        error: Option<String>,
    }

    let results: Vec<PerSource> = pool.install(|| {
        sources
            .par_iter()
            .map(|(class, rel, abs)| {
                let bytes = match std::fs::read(abs) {
                    Ok(b) => b,
                    Err(e) => {
                        return PerSource {
                            source: rel.clone(),
                            class: class.clone(),
                            sha256: String::new(),
                            images: Vec::new(),
                            error: Some(e.to_string()),
                        }
                    }
                };
                let sha = sha256_hex(&bytes);
                let decoded = ImageBuf::decode(&bytes).and_then(|img| match options.resize {
                    Some(size) => img.center_crop_resize(size),
                    None => Ok(img),
                });
                let img = match decoded {
                    Ok(img) => img,
                    Err(e) => {
                        return PerSource {
                            source: rel.clone(),
                            class: class.clone(),
                            sha256: sha,
                            images: Vec::new(),
                            error: Some(e.to_string()),
                        }
                    }
                };
                let mut images = Vec::new();
                let mut first_error = None;
                for &kind in &options.kinds {
                    for &severity in &options.severities {
                        match generate_one(
                            &img,
                            rel,
                            class,
                            kind,
                            severity,
                            table,
                            options,
                            frost_textures.as_deref(),
                            out_dir,
                        ) {
                            Ok(entry) => images.push(entry),
                            Err(e) => {
                                first_error.get_or_insert_with(|| e.to_string());
                            }
                        }
                    }
                }
                PerSource {
                    source: rel.clone(),
                    class: class.clone(),
                    sha256: sha,
                    images,
                    error: first_error,
                }
            })
            .collect()
    });

    let mut manifest = DatasetManifest {
        severity_table_version: table.version.clone(),
        salt: options.salt,
        test_only: true,
        encoding: if options.lossless {
            "png".into()
        } else {
            format!("jpeg{OUTPUT_JPEG_QUALITY}")
        },
        resize: options.resize,
        kinds: options.kinds.clone(),
        severities: options.severities.clone(),
        frost_source: options
            .frost_dir
            .as_ref()
            .map(|d| d.display().to_string())
            .unwrap_or_else(|| "procedural".into()),
        label_set,
        sources: BTreeMap::new(),
        images: Vec::new(),
        errors: Vec::new(),
    };
    for r in results {
        if let Some(message) = r.error {
            manifest.errors.push(SourceError {
                source: r.source.clone(),
                message,
            });
        }
        if !r.sha256.is_empty() {
            manifest.sources.insert(
                r.source,
                SourceEntry {
                    class: r.class,
                    sha256: r.sha256,
                },
            );
        }
        manifest.images.extend(r.images);
    }
    // canonical order regardless of traversal
    manifest.images.sort_by(|a, b| a.path.cmp(&b.path));
    manifest.errors.sort_by(|a, b| a.source.cmp(&b.source));

    let tmp = out_dir.join("manifest.json.tmp");
    std::fs::write(&tmp, manifest.to_json()).map_err(|e| Error::io(&tmp, e))?;
    let final_path = out_dir.join("manifest.json");
    std::fs::rename(&tmp, &final_path).map_err(|e| Error::io(&final_path, e))?;
    Ok(manifest)
}

#[allow(clippy::too_many_arguments)]
fn generate_one(
    img: &ImageBuf,
    rel: &str,
    class: &str,
    kind: CorruptionKind,
    severity: u8,
    table: &SeverityTable,
    options: &GenerateOptions,
    frost_textures: Option<&Vec<ImageBuf>>,
    out_dir: &Path,
) -> Result<ManifestImage> {
    let seed = derive_seed(options.salt, rel, kind, severity);
    let file_name = Path::new(rel)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".into());
    let ext = if options.lossless { "png" } else { "jpg" };
    let rel_out = format!("{kind}/{severity}/{class}/{file_name}.{ext}");
    let out_path = out_dir.join(&rel_out);

    let mut frost_texture = None;
    if kind == CorruptionKind::Frost && severity > 0 {
        // replay the dispatch's texture choice so the manifest can name it
        let mut rng = kind_rng(kind, seed);
        let n = frost_textures.map(|t| t.len()).unwrap_or(6);
        frost_texture = Some(rng.below(n as u64) as u32);
    }

    if options.resume && out_path.exists() {
        let bytes = std::fs::read(&out_path).map_err(|e| Error::io(&out_path, e))?;
        return Ok(ManifestImage {
            path: rel_out,
            source: rel.to_string(),
            kind,
            severity,
            seed,
            frost_texture,
            output_sha256: sha256_hex(&bytes),
        });
    }

    let corrupted = match (kind, frost_textures) {
        (CorruptionKind::Frost, Some(textures)) => {
            let mut rng = kind_rng(kind, seed);
            let index = rng.below(textures.len() as u64) as usize;
            let blend = table.param(kind, severity, "blend")?;
            frost(img, &textures[index], blend, &mut rng)?
        }
        _ => apply_corruption(img, kind, severity, seed, table)?,
    };

    let encoded = if options.lossless {
        corrupted.encode_png()?
    } else if kind == CorruptionKind::Jpeg {
        // the JPEG corruption writes its own encoding at the table quality
        let quality = table.param(kind, severity, "quality")?.round() as u8;
        img.encode_jpeg(quality)?
    } else {
        corrupted.encode_jpeg(OUTPUT_JPEG_QUALITY)?
    };

    if let Some(parent) = out_path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(&out_path, &encoded).map_err(|e| Error::io(&out_path, e))?;

    Ok(ManifestImage {
        path: rel_out,
        source: rel.to_string(),
        kind,
        severity,
        seed,
        frost_texture,
        output_sha256: sha256_hex(&encoded),
    })
}

/// Corner and center crops plus their horizontal mirrors, in the fixed
/// order: TL, TR, BL, BR, center, then the mirrors of those five.
pub fn ten_crop(img: &ImageBuf, crop_size: usize) -> Result<Vec<ImageBuf>> {
    let (w, h) = (img.width(), img.height());
    if crop_size > w || crop_size > h {
        return Err(Error::OversizeCrop(crop_size, w, h));
    }
    let s = crop_size;
    let offsets = [
        (0, 0),
        (w - s, 0),
        (0, h - s),
        (w - s, h - s),
        ((w - s) / 2, (h - s) / 2),
    ];
    let mut crops = Vec::with_capacity(10);
    for &(x, y) in &offsets {
        crops.push(img.crop(x, y, s, s)?);
    }
    for i in 0..5 {
        crops.push(crops[i].hflip());
    }
    Ok(crops)
}

/// Elementwise mean of probability vectors; each input must sum to
/// 1 within 1e-6, and so does the output.
pub fn average_distributions(dists: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = dists.first().ok_or(Error::DistributionLength(0, 0))?;
    let len = first.len();
    for d in dists {
        if d.len() != len {
            return Err(Error::DistributionLength(len, d.len()));
        }
        let sum: f64 = d.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::DistributionSum(sum));
        }
    }
    let mut out = vec![0.0; len];
    for d in dists {
        for (o, v) in out.iter_mut().zip(d) {
            *o += v / dists.len() as f64;
        }
    }
    Ok(out)
}

/// Which part of the benchmark a prediction was made on.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum SplitTag {
    Clean,
    Corrupted(CorruptionKind, u8),
    Train,
}

impl SplitTag {
    pub fn parse(s: &str) -> Result<SplitTag> {
        if s == "clean" {
            return Ok(SplitTag::Clean);
        }
        if s == "train" {
            return Ok(SplitTag::Train);
        }
        if let Some(rest) = s.strip_prefix("corrupted:") {
            let (kind, sev) = rest.split_once(':').ok_or_else(|| Error::Parse {
                context: "split tag".into(),
                message: format!("expected corrupted:<kind>:<severity>, got {s:?}"),
            })?;
            let kind: CorruptionKind = kind.parse()?;
            let severity: u8 = sev.parse().map_err(|_| Error::Parse {
                context: "split tag".into(),
                message: format!("bad severity in {s:?}"),
            })?;
            if !(1..=5).contains(&severity) {
                return Err(Error::InvalidSeverity(severity));
            }
            return Ok(SplitTag::Corrupted(kind, severity));
        }
        Err(Error::Parse {
            context: "split tag".into(),
            message: format!("unknown split {s:?}"),
        })
    }

    pub fn to_tag(&self) -> String {
        match self {
            SplitTag::Clean => "clean".into(),
            SplitTag::Train => "train".into(),
            SplitTag::Corrupted(kind, sev) => format!("corrupted:{kind}:{sev}"),
        }
    }
}

/// One model verdict, one line of the prediction log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub image_id: String,
    pub pred: String,
    pub label: String,
    pub split: String,
}

impl PredictionRecord {
    pub fn split_tag(&self) -> Result<SplitTag> {
        SplitTag::parse(&self.split)
    }
}

pub type PredictionLog = Vec<PredictionRecord>;

/// Parses a JSONL prediction log: one record per line with fields
/// image_id, pred, label, split.
pub fn parse_prediction_log(reader: impl BufRead) -> Result<PredictionLog> {
    let mut log = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse {
            context: "prediction log".into(),
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: PredictionRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            context: format!("prediction log line {}", n + 1),
            message: e.to_string(),
        })?;
        record.split_tag()?;
        log.push(record);
    }
    Ok(log)
}

/// Regenerates one output's pixels from its manifest entry alone. Used
/// by the idempotence check and resumable generation audits.
pub fn regenerate_entry(
    source_img: &ImageBuf,
    entry: &ManifestImage,
    table: &SeverityTable,
    options: &GenerateOptions,
) -> Result<ImageBuf> {
    let img = match options.resize {
        Some(size) => source_img.center_crop_resize(size)?,
        None => source_img.clone(),
    };
    apply_corruption(&img, entry.kind, entry.severity, entry.seed, table)
}

pub(crate) fn image_id_sets(
    manifest: &DatasetManifest,
) -> (BTreeSet<&str>, BTreeSet<&str>) {
    let corrupted: BTreeSet<&str> = manifest.images.iter().map(|i| i.path.as_str()).collect();
    let clean: BTreeSet<&str> = manifest.sources.keys().map(|s| s.as_str()).collect();
    (corrupted, clean)
}
