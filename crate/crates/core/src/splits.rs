//! Hold-out split protocols for surface-variation robustness: style,
//! subtype, version, and generic taxonomy hold-outs.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::dataset::PredictionLog;
use crate::error::{Error, Result};
use crate::image::Rng64;

/// The 50 broad icon classes shipped as data.
pub fn icon_classes() -> Vec<&'static str> {
    include_str!("data/icons50_classes.txt")
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect()
}

/// The 25 broad WordNet classes for the large-taxonomy hold-out,
/// shipped as `name<TAB>wnid` pairs.
pub fn wordnet_broad_classes() -> Vec<(&'static str, &'static str)> {
    include_str!("data/imagenet22k_broad_classes.tsv")
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let (name, wnid) = l.split_once('\t').expect("tab-separated");
            (name.trim(), wnid.trim())
        })
        .collect()
}

/// One corpus image with its surface metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IconRecord {
    pub path: String,
    pub class: String,
    pub platform: String,
    pub subtype: String,
    pub version: String,
}

/// Reads the delimited metadata table (header: path,class,platform,
/// subtype,version).
pub fn read_metadata(reader: impl Read) -> Result<Vec<IconRecord>> {
    let mut csv = csv::Reader::from_reader(reader);
    let mut records = Vec::new();
    let mut seen = BTreeSet::new();
    for row in csv.deserialize() {
        let record: IconRecord = row.map_err(|e| Error::Parse {
            context: "icon metadata".into(),
            message: e.to_string(),
        })?;
        if !seen.insert(record.path.clone()) {
            return Err(Error::Parse {
                context: "icon metadata".into(),
                message: format!("duplicate path {:?}", record.path),
            });
        }
        records.push(record);
    }
    Ok(records)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitProtocol {
    StyleHoldout,
    SubtypeHoldout,
    VersionHoldout,
    TaxonomyHoldout,
}

/// A train/test partition of the corpus. Train and test are disjoint
/// and together cover every record except those listed in `excluded`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitSpec {
    pub protocol: SplitProtocol,
    /// What was held out: platform name, subtype list, version rule, or
    /// taxonomy selection.
    pub held_out: String,
    pub train: Vec<String>,
    pub test: Vec<String>,
    pub excluded: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl SplitSpec {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("split serializes")
    }

    fn finish(mut self) -> SplitSpec {
        self.train.sort();
        self.test.sort();
        self.excluded.sort();
        self
    }
}

/// Hold out every record of one rendering source; train on the rest.
pub fn style_holdout(records: &[IconRecord], platform: &str) -> Result<SplitSpec> {
    if !records.iter().any(|r| r.platform == platform) {
        return Err(Error::UnknownPlatform(platform.to_string()));
    }
    let mut spec = SplitSpec {
        protocol: SplitProtocol::StyleHoldout,
        held_out: platform.to_string(),
        train: Vec::new(),
        test: Vec::new(),
        excluded: Vec::new(),
        warnings: Vec::new(),
    };
    let mut tested_classes = BTreeSet::new();
    let mut all_classes = BTreeSet::new();
    for r in records {
        all_classes.insert(r.class.as_str());
        if r.platform == platform {
            spec.test.push(r.path.clone());
            tested_classes.insert(r.class.as_str());
        } else {
            spec.train.push(r.path.clone());
        }
    }
    for class in all_classes.difference(&tested_classes) {
        spec.warnings
            .push(format!("class {class} has no held-out icons"));
    }
    Ok(spec.finish())
}

/// Hold out the listed subtypes; broad-class labels are used for
/// scoring. Withholding every subtype of a broad class is rejected.
pub fn subtype_holdout(records: &[IconRecord], held_subtypes: &[String]) -> Result<SplitSpec> {
    let held: BTreeSet<&str> = held_subtypes.iter().map(String::as_str).collect();
    let mut class_subtypes: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for r in records {
        class_subtypes
            .entry(r.class.as_str())
            .or_default()
            .insert(r.subtype.as_str());
    }
    for (class, subtypes) in &class_subtypes {
        if subtypes.iter().all(|s| held.contains(s)) {
            return Err(Error::WholeClassWithheld((*class).to_string()));
        }
    }
    let mut spec = SplitSpec {
        protocol: SplitProtocol::SubtypeHoldout,
        held_out: held_subtypes.join(","),
        train: Vec::new(),
        test: Vec::new(),
        excluded: Vec::new(),
        warnings: Vec::new(),
    };
    for r in records {
        if held.contains(r.subtype.as_str()) {
            spec.test.push(r.path.clone());
        } else {
            spec.train.push(r.path.clone());
        }
    }
    Ok(spec.finish())
}

/// For each (class, platform, subtype) group with at least two
/// versions, move exactly one version to test: deterministically the
/// highest version id in lexicographic order.
pub fn version_holdout(records: &[IconRecord]) -> Result<SplitSpec> {
    let mut groups: BTreeMap<(&str, &str, &str), BTreeSet<&str>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.class.as_str(), r.platform.as_str(), r.subtype.as_str()))
            .or_default()
            .insert(r.version.as_str());
    }
    let held: BTreeMap<(&str, &str, &str), &str> = groups
        .into_iter()
        .filter(|(_, versions)| versions.len() >= 2)
        .map(|(key, versions)| (key, *versions.iter().next_back().unwrap()))
        .collect();
    let mut spec = SplitSpec {
        protocol: SplitProtocol::VersionHoldout,
        held_out: "highest version id of each multi-version group".into(),
        train: Vec::new(),
        test: Vec::new(),
        excluded: Vec::new(),
        warnings: Vec::new(),
    };
    for r in records {
        let key = (r.class.as_str(), r.platform.as_str(), r.subtype.as_str());
        if held.get(&key) == Some(&r.version.as_str()) {
            spec.test.push(r.path.clone());
        } else {
            spec.train.push(r.path.clone());
        }
    }
    Ok(spec.finish())
}

/// Seeded hold-out of `k` subtypes per broad class of a taxonomy.
/// Records whose class is absent from the taxonomy are excluded and
/// listed explicitly.
pub fn taxonomy_holdout(
    records: &[IconRecord],
    taxonomy: &BTreeMap<String, Vec<String>>,
    k: usize,
    seed: u64,
) -> Result<SplitSpec> {
    let rng = Rng64::new(seed);
    let mut held: BTreeSet<&str> = BTreeSet::new();
    for (class, subtypes) in taxonomy {
        if k >= subtypes.len() {
            return Err(Error::HoldoutTooLarge {
                class: class.clone(),
                subtypes: subtypes.len(),
                k,
            });
        }
        let mut sorted: Vec<&str> = subtypes.iter().map(String::as_str).collect();
        sorted.sort_unstable();
        sorted.dedup();
        let order = rng.split(class).permutation(sorted.len());
        for &i in order.iter().take(k) {
            held.insert(sorted[i]);
        }
    }
    let mut spec = SplitSpec {
        protocol: SplitProtocol::TaxonomyHoldout,
        held_out: held.iter().copied().collect::<Vec<_>>().join(","),
        train: Vec::new(),
        test: Vec::new(),
        excluded: Vec::new(),
        warnings: Vec::new(),
    };
    for r in records {
        if !taxonomy.contains_key(&r.class) {
            spec.excluded.push(r.path.clone());
        } else if held.contains(r.subtype.as_str()) {
            spec.test.push(r.path.clone());
        } else {
            spec.train.push(r.path.clone());
        }
    }
    Ok(spec.finish())
}

/// Broad-class accuracy over the held-out test ids. Order-independent;
/// duplicate records for one id collapse to the first occurrence.
pub fn score_split(log: &PredictionLog, split: &SplitSpec) -> Result<f64> {
    let mut verdicts: BTreeMap<&str, bool> = BTreeMap::new();
    for record in log {
        verdicts
            .entry(record.image_id.as_str())
            .or_insert(record.pred == record.label);
    }
    let missing: Vec<String> = split
        .test
        .iter()
        .filter(|id| !verdicts.contains_key(id.as_str()))
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingTestIds(missing));
    }
    let correct = split
        .test
        .iter()
        .filter(|id| verdicts[id.as_str()])
        .count();
    Ok(correct as f64 / split.test.len().max(1) as f64)
}
