//! Implementations behind the CLI subcommands.
//!
//! Informational lines go to stderr so stdout stays clean for report
//! output (text tables or CSV).

use std::path::{Path, PathBuf};

use dtl_core::datasets::{
    self, gray_to_rgb, resize_center, rgb_to_gray, LabelledDataset,
};
use dtl_core::nn::{self, HyperParams};
use dtl_core::transfer::{
    self, decompose, reference_network, DatasetBundle, Strategy, TransferConfig,
};

use crate::checkpoint::{load_checkpoint, save_checkpoint, Provenance};
use crate::config::{DatasetConfig, DatasetSource, ExperimentConfig, StrategyChoice};
use crate::error::{HarnessError, Result};
use crate::inspect;
use crate::report::{self, pct, ReportFormat, ReportRow};

/// Flag overrides shared by all subcommands.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub format: Option<ReportFormat>,
}

pub fn load_config(path: &Path, overrides: &Overrides) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = overrides.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &overrides.out {
        cfg.out_dir = out.clone();
    }
    if let Some(format) = overrides.format {
        cfg.format = format;
    }
    Ok(cfg)
}

fn ensure_out_dir(cfg: &ExperimentConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| HarnessError::io(&cfg.out_dir, e))
}

pub fn load_dataset(dc: &DatasetConfig) -> Result<LabelledDataset> {
    let ds = match &dc.source {
        DatasetSource::Idx { images, labels } => datasets::load_idx(images, labels)?,
        DatasetSource::Synth(spec) => datasets::synthesize(spec)?,
    };
    match dc.limit {
        Some(limit) if limit < ds.len() => {
            let indices: Vec<usize> = (0..limit).collect();
            Ok(ds.subset(&indices)?)
        }
        _ => Ok(ds),
    }
}

/// Channel adapters plus center pad/crop so `ds` matches a network input.
pub fn adapt_to_input(ds: &LabelledDataset, input_shape: [usize; 3]) -> Result<LabelledDataset> {
    let [want_c, want_h, want_w] = input_shape;
    let [have_c, _, _] = ds.image_shape();
    let ds = match (have_c, want_c) {
        (c, w) if c == w => ds.clone(),
        (1, 3) => gray_to_rgb(ds)?,
        (3, 1) => rgb_to_gray(ds)?,
        (have, want) => {
            return Err(HarnessError::ArchitectureMismatch(format!(
                "cannot adapt {have}-channel data to a {want}-channel network"
            )))
        }
    };
    Ok(resize_center(&ds, want_h, want_w)?)
}

struct SplitParts {
    train: LabelledDataset,
    validation: Option<LabelledDataset>,
    test: Option<LabelledDataset>,
}

fn split_dataset(dc: &DatasetConfig, seed: u64) -> Result<SplitParts> {
    let ds = load_dataset(dc)?;
    let sets = datasets::split(&ds, dc.split, seed)?;
    let train = sets.train.ok_or_else(|| {
        HarnessError::Config(format!("dataset `{}`: train split is empty", dc.name))
    })?;
    Ok(SplitParts {
        train,
        validation: sets.validation,
        test: sets.test,
    })
}

fn require_test(parts: &SplitParts, name: &str) -> Result<LabelledDataset> {
    parts.test.clone().ok_or_else(|| {
        HarnessError::Config(format!(
            "dataset `{name}`: test split is empty; give the third split fraction a positive value"
        ))
    })
}

fn write_report(cfg: &ExperimentConfig, rows: &[ReportRow], stem: &str) -> Result<PathBuf> {
    let ext = match cfg.format {
        ReportFormat::Text => "txt",
        ReportFormat::Csv => "csv",
    };
    let path = cfg.out_dir.join(format!("{stem}.{ext}"));
    std::fs::write(&path, report::render(rows, cfg.format))
        .map_err(|e| HarnessError::io(&path, e))?;
    Ok(path)
}

fn fine_tune_hp(cfg: &ExperimentConfig) -> HyperParams {
    HyperParams {
        eta: cfg.eta,
        batch_size: cfg.batch_size,
        epochs: cfg.epochs,
        seed: cfg.seed,
    }
}

fn head_hp(cfg: &ExperimentConfig) -> HyperParams {
    HyperParams {
        eta: cfg.eta,
        batch_size: cfg.batch_size,
        epochs: cfg.head_epochs,
        seed: cfg.seed.wrapping_add(0x4EAD),
    }
}

fn transfer_config(cfg: &ExperimentConfig, strategy: Strategy) -> TransferConfig {
    TransferConfig {
        strategy,
        freeze_depth: cfg.freeze_depth,
        bpa_refresh_epochs: cfg.bpa_refresh_epochs,
        bpa_source: cfg.bpa_source,
        combination_rule: cfg.combination_rule,
        rescale_costs: cfg.rescale_costs,
        gamma_override: None,
        hp: fine_tune_hp(cfg),
        head_hp: head_hp(cfg),
    }
}

fn require_dataset<'a>(
    dc: &'a Option<DatasetConfig>,
    which: &str,
) -> Result<&'a DatasetConfig> {
    dc.as_ref().ok_or_else(|| {
        HarnessError::Config(format!("config has no `{which}_kind` dataset block"))
    })
}

/// Train the primary network and persist it plus a baseline report row.
pub fn cmd_train_primary(cfg: &ExperimentConfig) -> Result<()> {
    ensure_out_dir(cfg)?;
    let dc = require_dataset(&cfg.primary, "primary")?;
    let parts = split_dataset(dc, cfg.seed)?;
    let test = require_test(&parts, &dc.name)?;
    let [c, h, w] = parts.train.image_shape();
    let mut net = reference_network(
        [c, h, w],
        cfg.filters,
        cfg.kernel,
        parts.train.class_count(),
        cfg.seed,
    )?;
    eprintln!(
        "training primary `{}`: {} samples, {} classes, {} filters, {} epochs",
        dc.name,
        parts.train.len(),
        parts.train.class_count(),
        cfg.filters,
        cfg.epochs
    );
    nn::train(&mut net, &parts.train, &fine_tune_hp(cfg), 1.0)?;
    let train_err = nn::evaluate(&net, &parts.train)?;
    let test_err = nn::evaluate(&net, &test)?;

    let ckpt = cfg.out_dir.join("primary.ckpt");
    save_checkpoint(
        &net,
        &ckpt,
        &Provenance {
            seed: cfg.seed,
            epoch: cfg.epochs as u32,
            config_hash: cfg.config_hash.clone(),
        },
    )?;
    eprintln!("saved checkpoint {}", ckpt.display());

    let rows = vec![ReportRow {
        primary: dc.name.clone(),
        target: dc.name.clone(),
        strategy: "baseline".into(),
        train_err_pct: pct(train_err),
        test_err_pct: pct(test_err),
        seed: cfg.seed,
        epochs: cfg.epochs,
    }];
    let path = write_report(cfg, &rows, "baseline")?;
    eprintln!("wrote {}", path.display());
    print!("{}", report::render(&rows, cfg.format));
    Ok(())
}

fn resolve_primary_checkpoint(cfg: &ExperimentConfig, flag: &Option<PathBuf>) -> PathBuf {
    flag.clone()
        .or_else(|| cfg.primary_checkpoint.clone())
        .unwrap_or_else(|| cfg.out_dir.join("primary.ckpt"))
}

/// Run the requested transfer strategies against a primary checkpoint.
pub fn cmd_transfer(
    cfg: &ExperimentConfig,
    strategy_flag: Option<StrategyChoice>,
    checkpoint_flag: &Option<PathBuf>,
) -> Result<()> {
    ensure_out_dir(cfg)?;
    let ckpt_path = resolve_primary_checkpoint(cfg, checkpoint_flag);
    let (primary, provenance) = load_checkpoint(&ckpt_path)?;
    eprintln!(
        "loaded primary checkpoint {} (seed {}, {} epochs)",
        ckpt_path.display(),
        provenance.seed,
        provenance.epoch
    );

    let primary_name = cfg
        .primary
        .as_ref()
        .map(|d| d.name.clone())
        .unwrap_or_else(|| "primary".into());
    let dc = require_dataset(&cfg.target, "target")?;
    let parts = split_dataset(dc, cfg.seed.wrapping_add(1))?;
    let test = require_test(&parts, &dc.name)?;
    let bundle = DatasetBundle {
        train: adapt_to_input(&parts.train, primary.input_shape())?,
        validation: parts
            .validation
            .as_ref()
            .map(|v| adapt_to_input(v, primary.input_shape()))
            .transpose()?,
        test: adapt_to_input(&test, primary.input_shape())?,
    };

    let strategies: Vec<Strategy> = match strategy_flag.unwrap_or(cfg.strategy) {
        StrategyChoice::Standard => vec![Strategy::Standard],
        StrategyChoice::Distributed => vec![Strategy::Distributed],
        StrategyChoice::Both => vec![Strategy::Standard, Strategy::Distributed],
    };

    let mut rows = Vec::new();
    for strategy in strategies {
        let tc = transfer_config(cfg, strategy);
        let (net, rep) = transfer::transfer(&primary, &bundle, &tc)?;
        let out = cfg
            .out_dir
            .join(format!("transfer-{}.ckpt", strategy.name()));
        save_checkpoint(
            &net,
            &out,
            &Provenance {
                seed: cfg.seed,
                epoch: cfg.epochs as u32,
                config_hash: cfg.config_hash.clone(),
            },
        )?;
        eprintln!(
            "{}: train {:.2}% test {:.2}% in {:.1}s, checkpoint {}",
            strategy.name(),
            pct(rep.final_train_err),
            pct(rep.final_test_err.unwrap_or(1.0)),
            rep.wall_clock.as_secs_f64(),
            out.display(),
        );
        rows.push(ReportRow {
            primary: primary_name.clone(),
            target: dc.name.clone(),
            strategy: strategy.name().into(),
            train_err_pct: pct(rep.final_train_err),
            test_err_pct: pct(rep.final_test_err.unwrap_or(1.0)),
            seed: cfg.seed,
            epochs: cfg.epochs,
        });
    }
    let path = write_report(cfg, &rows, "report")?;
    eprintln!("wrote {}", path.display());
    print!("{}", report::render(&rows, cfg.format));
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetPick {
    Primary,
    Target,
}

impl std::str::FromStr for DatasetPick {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "primary" => Ok(DatasetPick::Primary),
            "target" => Ok(DatasetPick::Target),
            other => Err(format!("unknown dataset `{other}` (expected primary|target)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitPick {
    Train,
    Validation,
    Test,
}

impl std::str::FromStr for SplitPick {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "train" => Ok(SplitPick::Train),
            "validation" => Ok(SplitPick::Validation),
            "test" => Ok(SplitPick::Test),
            other => Err(format!(
                "unknown split `{other}` (expected train|validation|test)"
            )),
        }
    }
}

/// Evaluate a checkpoint on a configured dataset split.
pub fn cmd_evaluate(
    cfg: &ExperimentConfig,
    checkpoint: &Path,
    dataset: DatasetPick,
    split: SplitPick,
) -> Result<()> {
    let (net, _) = load_checkpoint(checkpoint)?;
    let (dc, seed) = match dataset {
        DatasetPick::Primary => (require_dataset(&cfg.primary, "primary")?, cfg.seed),
        DatasetPick::Target => (
            require_dataset(&cfg.target, "target")?,
            cfg.seed.wrapping_add(1),
        ),
    };
    let parts = split_dataset(dc, seed)?;
    let chosen = match split {
        SplitPick::Train => Some(parts.train.clone()),
        SplitPick::Validation => parts.validation.clone(),
        SplitPick::Test => parts.test.clone(),
    };
    let Some(ds) = chosen else {
        return Err(HarnessError::Config(format!(
            "dataset `{}` has no samples in the requested split",
            dc.name
        )));
    };
    let ds = adapt_to_input(&ds, net.input_shape())?;
    let err = nn::evaluate(&net, &ds)?;
    println!("error_rate_pct={:.2}", pct(err));
    Ok(())
}

/// Decompose a checkpoint and dump per-filter evidence on the target train
/// split. With `head_epochs > 0` each single-filter head is first trained
/// (its conv filter frozen) so the evidence reflects the filter's features
/// rather than a random head.
pub fn cmd_bpa_inspect(
    cfg: &ExperimentConfig,
    checkpoint: &Path,
    head_epochs: usize,
) -> Result<()> {
    ensure_out_dir(cfg)?;
    let (net, _) = load_checkpoint(checkpoint)?;
    let dc = require_dataset(&cfg.target, "target")?;
    let parts = split_dataset(dc, cfg.seed.wrapping_add(1))?;
    let train = adapt_to_input(&parts.train, net.input_shape())?;
    let mut nets = decompose(&net, train.class_count(), cfg.seed)?;
    if head_epochs > 0 {
        for sf in &mut nets {
            let hp = HyperParams {
                eta: cfg.eta,
                batch_size: cfg.batch_size,
                epochs: head_epochs,
                seed: transfer::filter_seed(cfg.seed, sf.filter_index),
            };
            nn::train_frozen(&mut sf.net, &train, &hp, 1.0, 1)?;
        }
    }
    let evidence = nets
        .iter()
        .map(|sf| inspect::filter_evidence(sf, &train, cfg.combination_rule))
        .collect::<Result<Vec<_>>>()?;
    let rendered = match cfg.format {
        ReportFormat::Text => inspect::render_text(&evidence),
        ReportFormat::Csv => inspect::render_csv(&evidence),
    };
    let ext = if cfg.format == ReportFormat::Csv {
        "csv"
    } else {
        "txt"
    };
    let path = cfg.out_dir.join(format!("bpa.{ext}"));
    std::fs::write(&path, &rendered).map_err(|e| HarnessError::io(&path, e))?;
    eprintln!("wrote {}", path.display());
    print!("{rendered}");
    Ok(())
}

/// Materialize the configured synthetic datasets as IDX file pairs.
pub fn cmd_synth_gen(cfg: &ExperimentConfig) -> Result<()> {
    ensure_out_dir(cfg)?;
    let mut wrote_any = false;
    for (which, dc) in [("primary", &cfg.primary), ("target", &cfg.target)] {
        let Some(dc) = dc else { continue };
        let DatasetSource::Synth(spec) = &dc.source else {
            eprintln!("{which} `{}` is not synthetic, skipping", dc.name);
            continue;
        };
        let ds = datasets::synthesize(spec)?;
        let images = cfg.out_dir.join(format!("{}-images-idx3-ubyte", dc.name));
        let labels = cfg.out_dir.join(format!("{}-labels-idx1-ubyte", dc.name));
        datasets::save_idx(&ds, &images, &labels)?;
        println!("{}", images.display());
        println!("{}", labels.display());
        wrote_any = true;
    }
    if !wrote_any {
        return Err(HarnessError::Config(
            "no synthetic dataset blocks in config".into(),
        ));
    }
    Ok(())
}
