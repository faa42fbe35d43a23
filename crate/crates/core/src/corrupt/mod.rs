//! The 15 benchmark corruptions plus the 4 validation-only extras,
//! each parameterized by a versioned severity table.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{ImageBuf, Rng64};

pub mod blur;
pub mod digital;
pub mod noise;
pub mod weather;

pub use blur::{glass_blur, zoom_blur};
pub use digital::{elastic, jpeg_recompress, photometric, pixelate, PhotometricMode};
pub use noise::{add_gaussian_noise, add_impulse_noise, add_shot_noise, add_speckle_noise};
pub use weather::{diamond_square, fog, frost, frost_texture, snow, spatter, SnowParams};

/// Corruption category matching the benchmark's column grouping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    Noise,
    Blur,
    Weather,
    Digital,
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionKind {
    GaussianNoise,
    ShotNoise,
    ImpulseNoise,
    DefocusBlur,
    GlassBlur,
    MotionBlur,
    ZoomBlur,
    Snow,
    Frost,
    Fog,
    Brightness,
    Contrast,
    Elastic,
    Pixelate,
    Jpeg,
    SpeckleNoise,
    GaussianBlur,
    Spatter,
    Saturate,
}

use CorruptionKind::*;

impl CorruptionKind {
    /// The 15 benchmark corruptions, in the reporting order of the
    /// result tables (noise, blur, weather, digital).
    pub const CORE: [CorruptionKind; 15] = [
        GaussianNoise,
        ShotNoise,
        ImpulseNoise,
        DefocusBlur,
        GlassBlur,
        MotionBlur,
        ZoomBlur,
        Snow,
        Frost,
        Fog,
        Brightness,
        Contrast,
        Elastic,
        Pixelate,
        Jpeg,
    ];

    /// Validation-only extras, one per category.
    pub const EXTRA: [CorruptionKind; 4] = [SpeckleNoise, GaussianBlur, Spatter, Saturate];

    pub const ALL: [CorruptionKind; 19] = [
        GaussianNoise,
        ShotNoise,
        ImpulseNoise,
        DefocusBlur,
        GlassBlur,
        MotionBlur,
        ZoomBlur,
        Snow,
        Frost,
        Fog,
        Brightness,
        Contrast,
        Elastic,
        Pixelate,
        Jpeg,
        SpeckleNoise,
        GaussianBlur,
        Spatter,
        Saturate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GaussianNoise => "gaussian_noise",
            ShotNoise => "shot_noise",
            ImpulseNoise => "impulse_noise",
            DefocusBlur => "defocus_blur",
            GlassBlur => "glass_blur",
            MotionBlur => "motion_blur",
            ZoomBlur => "zoom_blur",
            Snow => "snow",
            Frost => "frost",
            Fog => "fog",
            Brightness => "brightness",
            Contrast => "contrast",
            Elastic => "elastic",
            Pixelate => "pixelate",
            Jpeg => "jpeg",
            SpeckleNoise => "speckle_noise",
            GaussianBlur => "gaussian_blur",
            Spatter => "spatter",
            Saturate => "saturate",
        }
    }

    pub fn category(self) -> Category {
        match self {
            GaussianNoise | ShotNoise | ImpulseNoise | SpeckleNoise => Category::Noise,
            DefocusBlur | GlassBlur | MotionBlur | ZoomBlur | GaussianBlur => Category::Blur,
            Snow | Frost | Fog | Brightness | Spatter => Category::Weather,
            Contrast | Elastic | Pixelate | Jpeg | Saturate => Category::Digital,
        }
    }

    pub fn is_core(self) -> bool {
        !matches!(self, SpeckleNoise | GaussianBlur | Spatter | Saturate)
    }

    /// Whether different seeds at equal severity produce different
    /// outputs. For the deterministic kinds the seed is ignored.
    pub fn is_stochastic(self) -> bool {
        matches!(
            self,
            GaussianNoise
                | ShotNoise
                | ImpulseNoise
                | SpeckleNoise
                | GlassBlur
                | Snow
                | Frost
                | Fog
                | Spatter
                | Elastic
        )
    }
}

impl fmt::Display for CorruptionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CorruptionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CorruptionKind::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownKind(s.to_string()))
    }
}

/// Versioned per-severity parameter sets for all 19 corruption kinds.
///
/// Serialized as TOML: `[kinds.<kind>]` maps each parameter name to an
/// array of five values indexed by severity. The table is immutable
/// once published; reports cite the version string.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeverityTable {
    pub version: String,
    kinds: BTreeMap<String, BTreeMap<String, [f64; 5]>>,
}

impl SeverityTable {
    /// The shipped canonical table, calibrated at 224x224 so that the
    /// per-severity distortion bands are strictly separated on the
    /// reference corpus.
    pub fn v1() -> SeverityTable {
        toml::from_str(include_str!("../data/severity_v1.toml"))
            .expect("embedded severity table is valid")
    }

    pub fn from_toml(text: &str) -> Result<SeverityTable> {
        toml::from_str(text).map_err(|e| Error::Parse {
            context: "severity table".into(),
            message: e.to_string(),
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("severity table serializes")
    }

    pub fn param(&self, kind: CorruptionKind, severity: u8, name: &str) -> Result<f64> {
        if !(1..=5).contains(&severity) {
            return Err(Error::InvalidSeverity(severity));
        }
        self.kinds
            .get(kind.name())
            .and_then(|params| params.get(name))
            .map(|values| values[usize::from(severity) - 1])
            .ok_or_else(|| Error::MissingParameter {
                version: self.version.clone(),
                kind: kind.name(),
                param: name.to_string(),
            })
    }

    pub fn params_for(&self, kind: CorruptionKind) -> Option<&BTreeMap<String, [f64; 5]>> {
        self.kinds.get(kind.name())
    }
}

/// The substream a kernel draws from for a given seed. Exposed so the
/// dataset pipeline can replay seeded choices (e.g. which frost texture
/// was picked) when assembling the manifest.
pub fn kind_rng(kind: CorruptionKind, seed: u64) -> Rng64 {
    Rng64::new(seed).split(kind.name())
}

/// Applies `kind` at `severity` with parameters from `table`.
///
/// Deterministic in (img, kind, severity, seed). Severity 0 returns the
/// image unchanged. For the deterministic kinds (brightness, contrast,
/// saturate, pixelate, jpeg, defocus/gaussian/motion/zoom blur) the
/// seed is ignored.
pub fn apply_corruption(
    img: &ImageBuf,
    kind: CorruptionKind,
    severity: u8,
    seed: u64,
    table: &SeverityTable,
) -> Result<ImageBuf> {
    if severity == 0 {
        return Ok(img.clone());
    }
    if severity > 5 {
        return Err(Error::InvalidSeverity(severity));
    }
    let p = |name: &str| table.param(kind, severity, name);
    let mut rng = kind_rng(kind, seed);
    match kind {
        GaussianNoise => noise::add_gaussian_noise(img, p("sigma")?, &mut rng),
        ShotNoise => noise::add_shot_noise(img, p("lambda")?, &mut rng),
        ImpulseNoise => noise::add_impulse_noise(img, p("fraction")?, &mut rng),
        SpeckleNoise => noise::add_speckle_noise(img, p("sigma")?, &mut rng),
        DefocusBlur => blur::defocus_blur(img, p("radius")?),
        GaussianBlur => crate::image::gaussian_blur(img, p("sigma")?),
        GlassBlur => blur::glass_blur(
            img,
            p("sigma")?,
            p("max_shift")? as usize,
            p("iterations")? as usize,
            &mut rng,
        ),
        MotionBlur => blur::motion_blur(img, p("length")?, p("angle_deg")?.to_radians()),
        ZoomBlur => {
            let z_max = p("z_max")?;
            blur::zoom_blur(img, &blur::zoom_ladder(z_max))
        }
        Snow => weather::snow(
            img,
            &SnowParams {
                density: p("density")?,
                flake_size: p("flake_size")?,
                motion_length: p("motion_length")?,
                angle: p("angle_deg")?.to_radians(),
                blend: p("blend")?,
            },
            &mut rng,
        ),
        Frost => {
            let texture = weather::builtin_frost_texture(&mut rng, img.width(), img.height());
            weather::frost(img, &texture, p("blend")?, &mut rng)
        }
        Fog => weather::fog(img, p("weight")?, p("roughness")?, &mut rng),
        Spatter => weather::spatter(
            img,
            p("coverage")?,
            p("sigma")?,
            p("intensity")?,
            p("mode")? >= 0.5,
            &mut rng,
        ),
        Brightness => digital::photometric(img, PhotometricMode::Brightness, p("amount")?),
        Contrast => digital::photometric(img, PhotometricMode::Contrast, p("amount")?),
        Saturate => digital::photometric(img, PhotometricMode::Saturate, p("amount")?),
        Elastic => digital::elastic(img, p("displacement")?, p("smoothing")?, &mut rng),
        Pixelate => digital::pixelate(img, p("factor")?),
        Jpeg => digital::jpeg_recompress(img, p("quality")?.round() as u8),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn category_partition_matches_benchmark_grouping() {
        let count = |cat: Category| {
            CorruptionKind::CORE
                .iter()
                .filter(|k| k.category() == cat)
                .count()
        };
        assert_eq!(count(Category::Noise), 3);
        assert_eq!(count(Category::Blur), 4);
        assert_eq!(count(Category::Weather), 4);
        assert_eq!(count(Category::Digital), 4);
        assert_eq!(CorruptionKind::CORE.len(), 15);
        assert_eq!(CorruptionKind::EXTRA.len(), 4);
        // exactly one extra per category
        for cat in [
            Category::Noise,
            Category::Blur,
            Category::Weather,
            Category::Digital,
        ] {
            assert_eq!(
                CorruptionKind::EXTRA
                    .iter()
                    .filter(|k| k.category() == cat)
                    .count(),
                1
            );
        }
    }

    #[test]
    fn name_round_trip() {
        for kind in CorruptionKind::ALL {
            assert_eq!(kind.name().parse::<CorruptionKind>().unwrap(), kind);
        }
        assert!("melt".parse::<CorruptionKind>().is_err());
    }

    #[test]
    fn table_v1_has_all_kinds_at_all_severities() {
        let table = SeverityTable::v1();
        assert_eq!(table.version, "v1");
        for kind in CorruptionKind::ALL {
            let params = table.params_for(kind).expect("kind present");
            assert!(!params.is_empty());
        }
    }

    #[test]
    fn table_params_monotone_in_severity() {
        let table = SeverityTable::v1();
        for kind in CorruptionKind::ALL {
            for (name, values) in table.params_for(kind).unwrap() {
                let inc = values.windows(2).all(|w| w[0] <= w[1]);
                let dec = values.windows(2).all(|w| w[0] >= w[1]);
                assert!(
                    inc || dec,
                    "{kind} parameter {name} is not monotone: {values:?}"
                );
            }
        }
    }

    #[test]
    fn severity_zero_is_identity() {
        let table = SeverityTable::v1();
        let mut rng = Rng64::new(8);
        let img = ImageBuf::from_fn(16, 16, |_, _, _| rng.next_f64()).unwrap();
        for kind in CorruptionKind::ALL {
            let out = apply_corruption(&img, kind, 0, 99, &table).unwrap();
            assert_eq!(out, img, "{kind}");
        }
    }

    #[test]
    fn invalid_severity_rejected() {
        let table = SeverityTable::v1();
        let img = ImageBuf::constant(16, 16, 0.5).unwrap();
        assert!(matches!(
            apply_corruption(&img, GaussianNoise, 6, 0, &table),
            Err(Error::InvalidSeverity(6))
        ));
    }

    #[test]
    fn apply_is_deterministic() {
        let table = SeverityTable::v1();
        let mut rng = Rng64::new(77);
        let img = ImageBuf::from_fn(24, 24, |_, _, _| rng.next_f64()).unwrap();
        for kind in CorruptionKind::ALL {
            let a = apply_corruption(&img, kind, 3, 1234, &table).unwrap();
            let b = apply_corruption(&img, kind, 3, 1234, &table).unwrap();
            assert_eq!(a, b, "{kind}");
        }
    }

    #[test]
    fn stochastic_kinds_vary_with_seed() {
        let table = SeverityTable::v1();
        let mut rng = Rng64::new(13);
        let img = ImageBuf::from_fn(32, 32, |_, _, _| rng.next_f64()).unwrap();
        for kind in CorruptionKind::ALL {
            let a = apply_corruption(&img, kind, 3, 1, &table).unwrap();
            let b = apply_corruption(&img, kind, 3, 2, &table).unwrap();
            if kind.is_stochastic() {
                assert_ne!(a, b, "{kind} should vary with seed");
            } else {
                assert_eq!(a, b, "{kind} should ignore the seed");
            }
        }
    }

    #[test]
    fn outputs_stay_in_unit_range() {
        let table = SeverityTable::v1();
        let mut rng = Rng64::new(21);
        // large enough for the severity-5 motion kernel
        let img = ImageBuf::from_fn(64, 64, |_, _, _| rng.next_f64()).unwrap();
        for kind in CorruptionKind::ALL {
            for severity in 1..=5 {
                let out = apply_corruption(&img, kind, severity, 7, &table).unwrap();
                assert!(
                    out.data().iter().all(|v| (0.0..=1.0).contains(v)),
                    "{kind} s{severity}"
                );
            }
        }
    }
}
