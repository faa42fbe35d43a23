//! Corruption Error, mean CE, Relative CE and Relative mCE, with the
//! AlexNet normalization constants built in.
//!
//! CE for one corruption is the sum of the five severity error rates
//! divided by AlexNet's corresponding sum; the mCE averages the 15 core
//! CE values. Relative CE subtracts the clean error from both numerator
//! and denominator, measuring degradation rather than absolute error.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corrupt::CorruptionKind;
use crate::error::{Error, Result};

/// AlexNet's clean top-1 error rate used for Relative CE normalization.
pub const ALEXNET_CLEAN_ERROR: f64 = 0.435;

/// Per-corruption severity averages of AlexNet's top-1 error, percent.
/// Stored as the published average; the normalizing denominator is five
/// times this value.
const ALEXNET_SEVERITY_AVERAGES: [(CorruptionKind, f64); 19] = [
    (CorruptionKind::GaussianNoise, 88.6),
    (CorruptionKind::ShotNoise, 89.4),
    (CorruptionKind::ImpulseNoise, 92.3),
    (CorruptionKind::DefocusBlur, 82.0),
    (CorruptionKind::GlassBlur, 82.6),
    (CorruptionKind::MotionBlur, 78.6),
    (CorruptionKind::ZoomBlur, 79.8),
    (CorruptionKind::Snow, 86.7),
    (CorruptionKind::Frost, 82.7),
    (CorruptionKind::Fog, 81.9),
    (CorruptionKind::Brightness, 56.5),
    (CorruptionKind::Contrast, 85.3),
    (CorruptionKind::Elastic, 64.6),
    (CorruptionKind::Pixelate, 71.8),
    (CorruptionKind::Jpeg, 60.7),
    (CorruptionKind::SpeckleNoise, 84.5),
    (CorruptionKind::GaussianBlur, 78.7),
    (CorruptionKind::Spatter, 71.8),
    (CorruptionKind::Saturate, 65.8),
];

/// AlexNet normalization denominators: per kind, the sum over the five
/// severities of AlexNet's top-1 error rate (as a fraction), plus the
/// clean error.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaselineTable {
    pub version: String,
    pub clean_error: f64,
    /// Severity-sum Σ_s E_{s,c} per kind, as fractions.
    pub severity_sums: BTreeMap<CorruptionKind, f64>,
}

impl BaselineTable {
    pub fn alexnet() -> BaselineTable {
        BaselineTable {
            version: "alexnet-v1".to_string(),
            clean_error: ALEXNET_CLEAN_ERROR,
            severity_sums: ALEXNET_SEVERITY_AVERAGES
                .iter()
                .map(|&(kind, avg_percent)| (kind, 5.0 * avg_percent / 100.0))
                .collect(),
        }
    }

    pub fn sum(&self, kind: CorruptionKind) -> Result<f64> {
        self.severity_sums
            .get(&kind)
            .copied()
            .ok_or(Error::CoreKindMissing(kind.name()))
    }
}

/// One network's measured top-1 error rates: clean plus a 5-severity row
/// per corruption kind, all as fractions in [0, 1].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorProfile {
    pub network_name: String,
    pub clean_error: f64,
    pub errors: BTreeMap<CorruptionKind, [f64; 5]>,
}

impl ErrorProfile {
    pub fn severity_sum(&self, kind: CorruptionKind) -> Result<f64> {
        let row = self
            .errors
            .get(&kind)
            .ok_or(Error::MissingCell {
                kind: kind.name(),
                severity: 1,
            })?;
        for (i, v) in row.iter().enumerate() {
            if v.is_nan() {
                return Err(Error::MissingCell {
                    kind: kind.name(),
                    severity: i as u8 + 1,
                });
            }
        }
        Ok(row.iter().sum())
    }
}

/// Corruption Error for one kind, in percent:
/// 100 * Σ_s E_{s,kind} / Σ_s E^AlexNet_{s,kind}.
pub fn corruption_error(
    profile: &ErrorProfile,
    kind: CorruptionKind,
    baseline: &BaselineTable,
) -> Result<f64> {
    let num = profile.severity_sum(kind)?;
    let den = baseline.sum(kind)?;
    if den <= 0.0 {
        return Err(Error::NonpositiveDenominator(kind.name()));
    }
    Ok(100.0 * num / den)
}

/// Relative CE for one kind, in percent:
/// 100 * (Σ_s E_s - E_clean) / (Σ_s E^AlexNet_s - E^AlexNet_clean).
pub fn relative_ce(
    profile: &ErrorProfile,
    kind: CorruptionKind,
    baseline: &BaselineTable,
) -> Result<f64> {
    let num = profile.severity_sum(kind)? - profile.clean_error;
    let den = baseline.sum(kind)? - baseline.clean_error;
    if den <= 0.0 {
        return Err(Error::NonpositiveDenominator(kind.name()));
    }
    Ok(100.0 * num / den)
}

fn mean_over_core(values: &BTreeMap<CorruptionKind, f64>) -> Result<f64> {
    for kind in values.keys() {
        if !kind.is_core() {
            return Err(Error::ExtraKindInMean(kind.name()));
        }
    }
    let mut total = 0.0;
    for kind in CorruptionKind::CORE {
        total += values
            .get(&kind)
            .copied()
            .ok_or(Error::CoreKindMissing(kind.name()))?;
    }
    Ok(total / CorruptionKind::CORE.len() as f64)
}

/// Arithmetic mean of the 15 core CE values. Extra kinds must be
/// excluded by the caller; their presence is an error.
pub fn mean_ce(ce_values: &BTreeMap<CorruptionKind, f64>) -> Result<f64> {
    mean_over_core(ce_values)
}

/// Arithmetic mean of the 15 core Relative CE values.
pub fn relative_mce(relative_ce_values: &BTreeMap<CorruptionKind, f64>) -> Result<f64> {
    mean_over_core(relative_ce_values)
}

/// Full robustness summary for one network. Values carry full precision
/// internally; display rounding to 0.1 happens only at formatting time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub network_name: String,
    pub severity_table_version: String,
    pub baseline_version: String,
    pub clean_error: f64,
    /// CE per kind, percent. Extra kinds are reported but never enter
    /// the mCE.
    pub ce: BTreeMap<CorruptionKind, f64>,
    pub relative_ce: BTreeMap<CorruptionKind, f64>,
    pub mce: f64,
    pub relative_mce: f64,
    pub evaluated_images: u64,
}

impl RobustnessReport {
    pub fn compute(
        profile: &ErrorProfile,
        baseline: &BaselineTable,
        severity_table_version: &str,
        evaluated_images: u64,
    ) -> Result<RobustnessReport> {
        let mut ce = BTreeMap::new();
        let mut rce = BTreeMap::new();
        for &kind in profile.errors.keys() {
            ce.insert(kind, corruption_error(profile, kind, baseline)?);
            rce.insert(kind, relative_ce(profile, kind, baseline)?);
        }
        let core_ce: BTreeMap<_, _> = ce.iter().filter(|(k, _)| k.is_core()).map(|(k, v)| (*k, *v)).collect();
        let core_rce: BTreeMap<_, _> =
            rce.iter().filter(|(k, _)| k.is_core()).map(|(k, v)| (*k, *v)).collect();
        Ok(RobustnessReport {
            network_name: profile.network_name.clone(),
            severity_table_version: severity_table_version.to_string(),
            baseline_version: baseline.version.clone(),
            clean_error: profile.clean_error,
            mce: mean_ce(&core_ce)?,
            relative_mce: relative_mce(&core_rce)?,
            ce,
            relative_ce: rce,
            evaluated_images,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Folds a prediction log into per-cell error rates.
///
/// Every (kind, severity) cell in the manifest must be covered by at
/// least one record; every record's image id must exist in the
/// manifest; duplicate (image, split) records are rejected. A log
/// claiming a training split over a test-only manifest is a protocol
/// violation.
pub fn build_error_profile(
    log: &crate::dataset::PredictionLog,
    manifest: &crate::dataset::DatasetManifest,
    network_name: &str,
) -> Result<ErrorProfile> {
    use crate::dataset::SplitTag;

    let (corrupted_ids, clean_ids) = crate::dataset::image_id_sets(manifest);
    let labels: std::collections::BTreeSet<&str> =
        manifest.label_set.iter().map(|s| s.as_str()).collect();

    let mut seen = std::collections::BTreeSet::new();
    let mut cells: BTreeMap<(CorruptionKind, u8), (u64, u64)> = BTreeMap::new();
    let mut clean_wrong = 0u64;
    let mut clean_total = 0u64;

    for record in log {
        let tag = record.split_tag()?;
        if tag == SplitTag::Train && manifest.test_only {
            return Err(Error::TestOnlyViolation);
        }
        if !seen.insert((record.image_id.clone(), record.split.clone())) {
            return Err(Error::DuplicateRecord {
                image_id: record.image_id.clone(),
                split: record.split.clone(),
            });
        }
        if !labels.contains(record.label.as_str()) {
            return Err(Error::Parse {
                context: "prediction log".into(),
                message: format!(
                    "label {:?} for {} is not in the manifest label set",
                    record.label, record.image_id
                ),
            });
        }
        let wrong = u64::from(record.pred != record.label);
        match tag {
            SplitTag::Clean => {
                if !clean_ids.contains(record.image_id.as_str()) {
                    return Err(Error::UnknownImageId(record.image_id.clone()));
                }
                clean_wrong += wrong;
                clean_total += 1;
            }
            SplitTag::Corrupted(kind, severity) => {
                if !corrupted_ids.contains(record.image_id.as_str()) {
                    return Err(Error::UnknownImageId(record.image_id.clone()));
                }
                let cell = cells.entry((kind, severity)).or_insert((0, 0));
                cell.0 += wrong;
                cell.1 += 1;
            }
            SplitTag::Train => {}
        }
    }

    if clean_total == 0 {
        return Err(Error::MissingCell {
            kind: "clean",
            severity: 0,
        });
    }
    let mut errors: BTreeMap<CorruptionKind, [f64; 5]> = BTreeMap::new();
    for &kind in &manifest.kinds {
        let mut row = [f64::NAN; 5];
        for &severity in &manifest.severities {
            let (wrong, total) = cells.get(&(kind, severity)).copied().ok_or(
                Error::MissingCell {
                    kind: kind.name(),
                    severity,
                },
            )?;
            row[usize::from(severity) - 1] = wrong as f64 / total as f64;
        }
        errors.insert(kind, row);
    }
    Ok(ErrorProfile {
        network_name: network_name.to_string(),
        clean_error: clean_wrong as f64 / clean_total as f64,
        errors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn alexnet_profile() -> ErrorProfile {
        let baseline = BaselineTable::alexnet();
        ErrorProfile {
            network_name: "alexnet".into(),
            clean_error: ALEXNET_CLEAN_ERROR,
            errors: CorruptionKind::ALL
                .iter()
                .map(|&k| {
                    let avg = baseline.sum(k).unwrap() / 5.0;
                    (k, [avg; 5])
                })
                .collect(),
        }
    }

    #[test]
    fn alexnet_self_normalizes_to_100() {
        let profile = alexnet_profile();
        let baseline = BaselineTable::alexnet();
        for kind in CorruptionKind::ALL {
            let ce = corruption_error(&profile, kind, &baseline).unwrap();
            assert!((ce - 100.0).abs() < 1e-9, "{kind}: {ce}");
            let rce = relative_ce(&profile, kind, &baseline).unwrap();
            assert!((rce - 100.0).abs() < 1e-9, "{kind}: {rce}");
        }
    }

    #[test]
    fn zero_error_profile_gives_zero_ce() {
        let profile = ErrorProfile {
            network_name: "perfect".into(),
            clean_error: 0.0,
            errors: CorruptionKind::CORE.iter().map(|&k| (k, [0.0; 5])).collect(),
        };
        let baseline = BaselineTable::alexnet();
        for kind in CorruptionKind::CORE {
            assert_eq!(corruption_error(&profile, kind, &baseline).unwrap(), 0.0);
        }
    }

    #[test]
    fn gaussian_noise_hand_arithmetic() {
        let mut profile = alexnet_profile();
        profile
            .errors
            .insert(CorruptionKind::GaussianNoise, [0.5, 0.6, 0.7, 0.8, 0.9]);
        let ce =
            corruption_error(&profile, CorruptionKind::GaussianNoise, &BaselineTable::alexnet())
                .unwrap();
        // 3.5 / (5 * 0.886) = 0.790...
        assert!((ce - 100.0 * 3.5 / 4.43).abs() < 1e-9);
        assert!((ce - 79.0).abs() < 0.1);
    }

    #[test]
    fn zero_degradation_relative_ce_is_zero() {
        let baseline = BaselineTable::alexnet();
        let clean = 0.3;
        let profile = ErrorProfile {
            network_name: "flat".into(),
            clean_error: clean,
            // severity sum equals the single clean error
            errors: CorruptionKind::CORE
                .iter()
                .map(|&k| (k, [clean / 5.0; 5]))
                .collect(),
        };
        for kind in CorruptionKind::CORE {
            let rce = relative_ce(&profile, kind, &baseline).unwrap();
            assert!(rce.abs() < 1e-9, "{kind}: {rce}");
        }
    }

    #[test]
    fn mean_ce_requires_exactly_core_kinds() {
        let all_100: BTreeMap<CorruptionKind, f64> =
            CorruptionKind::CORE.iter().map(|&k| (k, 100.0)).collect();
        assert!((mean_ce(&all_100).unwrap() - 100.0).abs() < 1e-12);

        let mut with_extra = all_100.clone();
        with_extra.insert(CorruptionKind::Saturate, 90.0);
        assert!(matches!(
            mean_ce(&with_extra),
            Err(Error::ExtraKindInMean("saturate"))
        ));

        let mut missing = all_100;
        missing.remove(&CorruptionKind::Fog);
        assert!(matches!(mean_ce(&missing), Err(Error::CoreKindMissing("fog"))));
    }

    #[test]
    fn scale_equivariance() {
        let mut profile = alexnet_profile();
        let baseline = BaselineTable::alexnet();
        let before: Vec<f64> = CorruptionKind::CORE
            .iter()
            .map(|&k| corruption_error(&profile, k, &baseline).unwrap())
            .collect();
        for row in profile.errors.values_mut() {
            for v in row.iter_mut() {
                *v *= 0.15; // keep in range
            }
        }
        for (i, &kind) in CorruptionKind::CORE.iter().enumerate() {
            let after = corruption_error(&profile, kind, &baseline).unwrap();
            assert!((after - 0.15 * before[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn mce_ordering_invariant_under_uniform_baseline_rescale() {
        // argsort of mCE across synthetic networks is unchanged when
        // every baseline sum is multiplied by the same positive factor
        let baseline = BaselineTable::alexnet();
        let mut scaled = baseline.clone();
        for v in scaled.severity_sums.values_mut() {
            *v *= 0.5;
        }
        let networks: Vec<ErrorProfile> = (0..4)
            .map(|i| {
                let mut p = alexnet_profile();
                p.network_name = format!("net{i}");
                for (j, row) in p.errors.values_mut().enumerate() {
                    for v in row.iter_mut() {
                        *v *= 0.1 + 0.05 * ((i * 7 + j) % 5) as f64;
                    }
                }
                p
            })
            .collect();
        let mce_with = |b: &BaselineTable| -> Vec<f64> {
            networks
                .iter()
                .map(|p| {
                    let ce: BTreeMap<_, _> = CorruptionKind::CORE
                        .iter()
                        .map(|&k| (k, corruption_error(p, k, b).unwrap()))
                        .collect();
                    mean_ce(&ce).unwrap()
                })
                .collect()
        };
        let argsort = |v: &[f64]| {
            let mut idx: Vec<usize> = (0..v.len()).collect();
            idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
            idx
        };
        assert_eq!(argsort(&mce_with(&baseline)), argsort(&mce_with(&scaled)));
    }
}
