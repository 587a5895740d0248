//! Flat `key = value` experiment configs (`#` starts a comment).
//!
//! One config file describes one experiment: datasets, architecture,
//! training and transfer settings, and output options. Unknown keys are
//! rejected so typos surface immediately.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use dtl_core::datasets::{Pattern, SyntheticSpec};
use dtl_core::evidence::{BpaSource, CombinationRule};

use crate::error::{HarnessError, Result};
use crate::report::ReportFormat;

/// FNV-1a, used to fingerprint config text into checkpoint provenance.
pub fn fnv1a_hex(bytes: &[u8]) -> String {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{hash:016x}")
}

#[derive(Debug, Clone)]
pub struct RawConfig {
    values: BTreeMap<String, String>,
    pub hash: String,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<RawConfig> {
        let mut values = BTreeMap::new();
        for (lineno, raw_line) in text.lines().enumerate() {
            let line = match raw_line.find('#') {
                Some(pos) => &raw_line[..pos],
                None => raw_line,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(HarnessError::Config(format!(
                    "line {}: expected `key = value`, got `{raw_line}`",
                    lineno + 1
                )));
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if values.insert(key.clone(), value).is_some() {
                return Err(HarnessError::Config(format!(
                    "line {}: duplicate key `{key}`",
                    lineno + 1
                )));
            }
        }
        let hash = fnv1a_hex(text.as_bytes());
        Ok(RawConfig { values, hash })
    }

    pub fn load(path: &Path) -> Result<RawConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::parse(&text)
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v.parse::<T>().map(Some).map_err(|_| {
                HarnessError::Config(format!("key `{key}`: cannot parse `{v}`"))
            }),
        }
    }

    fn keys(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrategyChoice {
    Standard,
    Distributed,
    Both,
}

impl std::str::FromStr for StrategyChoice {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "standard" => Ok(StrategyChoice::Standard),
            "distributed" => Ok(StrategyChoice::Distributed),
            "both" => Ok(StrategyChoice::Both),
            other => Err(format!("unknown strategy `{other}`")),
        }
    }
}

#[derive(Debug, Clone)]
pub enum DatasetSource {
    Idx { images: PathBuf, labels: PathBuf },
    Synth(SyntheticSpec),
}

#[derive(Debug, Clone)]
pub struct DatasetConfig {
    pub name: String,
    pub source: DatasetSource,
    /// Keep only the first N samples after loading.
    pub limit: Option<usize>,
    pub split: [f64; 3],
}

/// Fully resolved experiment settings.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub out_dir: PathBuf,
    pub format: ReportFormat,
    pub seed: u64,
    pub filters: usize,
    pub kernel: usize,
    pub eta: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub head_epochs: usize,
    pub strategy: StrategyChoice,
    pub freeze_depth: usize,
    pub bpa_refresh_epochs: usize,
    pub bpa_source: BpaSource,
    pub combination_rule: CombinationRule,
    pub rescale_costs: bool,
    pub primary: Option<DatasetConfig>,
    pub target: Option<DatasetConfig>,
    pub primary_checkpoint: Option<PathBuf>,
    pub config_hash: String,
}

const TOP_LEVEL_KEYS: &[&str] = &[
    "out_dir",
    "format",
    "seed",
    "filters",
    "kernel",
    "eta",
    "batch_size",
    "epochs",
    "head_epochs",
    "strategy",
    "freeze_depth",
    "bpa_refresh_epochs",
    "bpa_source",
    "combination_rule",
    "rescale_costs",
    "primary_checkpoint",
];

const DATASET_KEYS: &[&str] = &[
    "kind",
    "name",
    "images",
    "labels",
    "limit",
    "split",
    "classes",
    "samples_per_class",
    "image_size",
    "patterns",
    "noise",
    "shift",
    "seed",
];

fn parse_fractions(value: &str, key: &str) -> Result<[f64; 3]> {
    let parts: Vec<f64> = value
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| HarnessError::Config(format!("key `{key}`: cannot parse `{value}`")))?;
    if parts.len() != 3 {
        return Err(HarnessError::Config(format!(
            "key `{key}`: need three comma-separated fractions"
        )));
    }
    Ok([parts[0], parts[1], parts[2]])
}

fn parse_dataset(raw: &RawConfig, prefix: &str, default_seed: u64) -> Result<Option<DatasetConfig>> {
    let key = |suffix: &str| format!("{prefix}_{suffix}");
    let Some(kind) = raw.get(&key("kind")) else {
        return Ok(None);
    };
    let split = match raw.get(&key("split")) {
        Some(v) => parse_fractions(v, &key("split"))?,
        None => [0.7, 0.15, 0.15],
    };
    let limit = raw.parsed::<usize>(&key("limit"))?;
    let name_default;
    let source = match kind {
        "idx" => {
            let images = raw
                .get(&key("images"))
                .ok_or_else(|| HarnessError::Config(format!("`{}` is required", key("images"))))?;
            let labels = raw
                .get(&key("labels"))
                .ok_or_else(|| HarnessError::Config(format!("`{}` is required", key("labels"))))?;
            name_default = "idx".to_string();
            DatasetSource::Idx {
                images: PathBuf::from(images),
                labels: PathBuf::from(labels),
            }
        }
        "synth" => {
            let class_count = raw.parsed::<usize>(&key("classes"))?.unwrap_or(2);
            let samples_per_class: Vec<usize> = match raw.get(&key("samples_per_class")) {
                Some(v) => v
                    .split(',')
                    .map(|p| p.trim().parse::<usize>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| {
                        HarnessError::Config(format!(
                            "key `{}`: cannot parse `{v}`",
                            key("samples_per_class")
                        ))
                    })?,
                None => vec![100; class_count],
            };
            let samples_per_class = if samples_per_class.len() == 1 {
                vec![samples_per_class[0]; class_count]
            } else {
                samples_per_class
            };
            let patterns = match raw.get(&key("patterns")) {
                Some(v) => v
                    .split(',')
                    .map(|p| {
                        Pattern::from_name(p.trim()).ok_or_else(|| {
                            HarnessError::Config(format!("unknown pattern `{}`", p.trim()))
                        })
                    })
                    .collect::<Result<Vec<_>>>()?,
                None => Pattern::ALL[..class_count.min(Pattern::ALL.len())].to_vec(),
            };
            name_default = "synth".to_string();
            DatasetSource::Synth(SyntheticSpec {
                class_count,
                samples_per_class,
                image_size: raw.parsed::<usize>(&key("image_size"))?.unwrap_or(12),
                pattern_family: patterns,
                noise_level: raw.parsed::<f64>(&key("noise"))?.unwrap_or(0.15),
                domain_shift: raw.parsed::<f64>(&key("shift"))?.unwrap_or(0.0),
                seed: raw.parsed::<u64>(&key("seed"))?.unwrap_or(default_seed),
            })
        }
        other => {
            return Err(HarnessError::Config(format!(
                "key `{}`: unknown dataset kind `{other}`",
                key("kind")
            )))
        }
    };
    let name = raw
        .get(&key("name"))
        .map(str::to_string)
        .unwrap_or(name_default);
    Ok(Some(DatasetConfig {
        name,
        source,
        limit,
        split,
    }))
}

impl ExperimentConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<ExperimentConfig> {
        for key in raw.keys() {
            let known_top = TOP_LEVEL_KEYS.contains(&key);
            let known_dataset = ["primary_", "target_"].iter().any(|prefix| {
                key.strip_prefix(prefix)
                    .is_some_and(|suffix| DATASET_KEYS.contains(&suffix))
            });
            // `primary_checkpoint` collides with the dataset prefix rule on
            // purpose; it is a top-level key.
            if !known_top && !known_dataset {
                return Err(HarnessError::Config(format!("unknown key `{key}`")));
            }
        }

        let seed = raw.parsed::<u64>("seed")?.unwrap_or(42);
        let format = match raw.get("format") {
            None => ReportFormat::Text,
            Some("text") => ReportFormat::Text,
            Some("csv") => ReportFormat::Csv,
            Some(other) => {
                return Err(HarnessError::Config(format!(
                    "key `format`: expected text|csv, got `{other}`"
                )))
            }
        };
        let strategy = match raw.get("strategy") {
            None => StrategyChoice::Both,
            Some(v) => v.parse().map_err(HarnessError::Config)?,
        };
        let bpa_source = match raw.get("bpa_source") {
            None | Some("train") => BpaSource::Train,
            Some("train+validation") => BpaSource::TrainPlusValidation,
            Some(other) => {
                return Err(HarnessError::Config(format!(
                    "key `bpa_source`: expected train|train+validation, got `{other}`"
                )))
            }
        };
        let combination_rule = match raw.get("combination_rule") {
            None | Some("complement") => CombinationRule::ComplementOfAgreement,
            Some("renormalized") => CombinationRule::AgreementRenormalized,
            Some(other) => {
                return Err(HarnessError::Config(format!(
                    "key `combination_rule`: expected complement|renormalized, got `{other}`"
                )))
            }
        };
        let rescale_costs = match raw.get("rescale_costs") {
            None | Some("false") => false,
            Some("true") => true,
            Some(other) => {
                return Err(HarnessError::Config(format!(
                    "key `rescale_costs`: expected true|false, got `{other}`"
                )))
            }
        };

        Ok(ExperimentConfig {
            out_dir: PathBuf::from(raw.get("out_dir").unwrap_or("out")),
            format,
            seed,
            filters: raw.parsed::<usize>("filters")?.unwrap_or(20),
            kernel: raw.parsed::<usize>("kernel")?.unwrap_or(5),
            eta: raw.parsed::<f64>("eta")?.unwrap_or(0.01),
            batch_size: raw.parsed::<usize>("batch_size")?.unwrap_or(64),
            epochs: raw.parsed::<usize>("epochs")?.unwrap_or(30),
            head_epochs: raw.parsed::<usize>("head_epochs")?.unwrap_or(10),
            strategy,
            freeze_depth: raw.parsed::<usize>("freeze_depth")?.unwrap_or(4),
            bpa_refresh_epochs: raw.parsed::<usize>("bpa_refresh_epochs")?.unwrap_or(1),
            bpa_source,
            combination_rule,
            rescale_costs,
            primary: parse_dataset(raw, "primary", seed)?,
            target: parse_dataset(raw, "target", seed.wrapping_add(1))?,
            primary_checkpoint: raw.get("primary_checkpoint").map(PathBuf::from),
            config_hash: raw.hash.clone(),
        })
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        Self::from_raw(&RawConfig::load(path)?)
    }
}
