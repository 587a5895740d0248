//! Network decomposition and transfer strategies.
//!
//! A pretrained primary network is either fine-tuned the standard way
//! (bottom layers copied and optionally frozen, top layers re-initialized
//! for the target classes), or decomposed into single-filter networks that
//! fine-tune independently with per-filter evidence costs scaling their
//! gradient steps, joined by periodic cost recomputation, and finally
//! reassembled into one target network.

use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::datasets::{concat, LabelledDataset};
use crate::error::{Error, Result};
use crate::evidence::{self, BpaSource, CombinationRule};
use crate::nn::{
    self, epoch_seed, train_frozen, train_one_epoch, HyperParams, Layer, Network,
};
use crate::tensor::Tensor;

/// Cap on the per-epoch error subsample used for report curves; final report
/// errors are always computed on the full sets.
const EPOCH_LOG_CAP: usize = 1024;

/// Seed stream for the k-th single-filter network of a run.
pub fn filter_seed(seed: u64, filter_index: usize) -> u64 {
    seed ^ ((filter_index as u64).wrapping_add(1)).wrapping_mul(0xD1B5_4A32_D192_ED03)
}

/// One conv filter copied out of the primary network plus a fresh classifier
/// head, and the scalar cost scaling its updates.
#[derive(Debug, Clone, PartialEq)]
pub struct SingleFilterNet {
    pub filter_index: usize,
    pub net: Network,
    pub gamma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Standard,
    Distributed,
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Standard => "standard",
            Strategy::Distributed => "distributed",
        }
    }
}

/// Everything a transfer run needs beyond the datasets.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferConfig {
    pub strategy: Strategy,
    /// Standard strategy only: layers with index below this are frozen.
    pub freeze_depth: usize,
    /// Recompute per-filter costs every this many epochs (≥ 1).
    pub bpa_refresh_epochs: usize,
    pub bpa_source: BpaSource,
    pub combination_rule: CombinationRule,
    /// Divide every cost by the largest one after each refresh.
    pub rescale_costs: bool,
    /// Diagnostic: force every filter cost to this value instead of
    /// computing assignments.
    pub gamma_override: Option<f64>,
    /// Fine-tuning hyper-parameters (both strategies).
    pub hp: HyperParams,
    /// Head retraining after reassembly (distributed strategy).
    pub head_hp: HyperParams,
}

impl TransferConfig {
    pub fn validate(&self) -> Result<()> {
        self.hp.validate()?;
        self.head_hp.validate()?;
        if self.bpa_refresh_epochs == 0 {
            return Err(Error::InvalidArgument(
                "bpa_refresh_epochs must be ≥ 1".into(),
            ));
        }
        if let Some(g) = self.gamma_override {
            if g < 0.0 || !g.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "gamma override must be finite and ≥ 0, got {g}"
                )));
            }
        }
        Ok(())
    }
}

/// Train/validation/test datasets of the target domain.
#[derive(Debug, Clone)]
pub struct DatasetBundle {
    pub train: LabelledDataset,
    pub validation: Option<LabelledDataset>,
    pub test: LabelledDataset,
}

/// Error rates logged after one fine-tuning epoch. The training value is
/// computed on a strided subsample of at most `EPOCH_LOG_CAP` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub train_err: f64,
    pub eval_err: Option<f64>,
}

/// Outcome summary of a transfer run; the same schema for both strategies
/// (cost fields are empty under the standard strategy).
#[derive(Debug, Clone)]
pub struct TransferReport {
    pub strategy: Strategy,
    pub per_epoch: Vec<EpochStats>,
    /// Costs at each refresh barrier: `gamma_history[r][k]` is filter k's
    /// cost after the r-th recomputation.
    pub gamma_history: Vec<Vec<f64>>,
    pub final_gammas: Vec<f64>,
    pub final_train_err: f64,
    pub final_test_err: Option<f64>,
    pub wall_clock: Duration,
    pub config: TransferConfig,
}

/// Reference primary architecture: conv(filters × kernel²) → relu →
/// maxpool 2×2 → dense → softmax.
pub fn reference_network(
    input_shape: [usize; 3],
    filters: usize,
    kernel: usize,
    classes: usize,
    seed: u64,
) -> Result<Network> {
    let [c, h, w] = input_shape;
    if h < kernel || w < kernel {
        return Err(Error::InvalidArgument(format!(
            "input {h}×{w} smaller than kernel {kernel}"
        )));
    }
    let (ch, cw) = (h - kernel + 1, w - kernel + 1);
    let flat = filters * (ch / 2) * (cw / 2);
    Network::new(
        input_shape,
        vec![
            Layer::conv2d_seeded(filters, c, kernel, seed),
            Layer::Relu,
            Layer::MaxPool2d { size: 2 },
            Layer::Flatten,
            Layer::dense_seeded(classes, flat, seed.wrapping_add(1)),
            Layer::Softmax,
        ],
    )
}

fn first_conv(net: &Network) -> Result<usize> {
    let idx = net
        .layers()
        .iter()
        .position(|l| matches!(l, Layer::Conv2d { .. }))
        .ok_or(Error::NoConvLayer)?;
    if idx != 0 {
        return Err(Error::GeometryMismatch(format!(
            "decomposition expects the convolutional layer first, found it at index {idx}"
        )));
    }
    Ok(idx)
}

/// Break the primary network into one single-filter network per first-layer
/// conv filter. Each carries a copy of its filter (independently mutable)
/// and a freshly initialized head over the target classes.
pub fn decompose(
    primary: &Network,
    target_class_count: usize,
    seed: u64,
) -> Result<Vec<SingleFilterNet>> {
    first_conv(primary)?;
    let Layer::Conv2d { weights, biases } = &primary.layers()[0] else {
        unreachable!("first_conv checked layer 0");
    };
    let ws = weights.shape();
    let (d, in_ch, kh, kw) = (ws[0], ws[1], ws[2], ws[3]);
    let [c, h, w] = primary.input_shape();
    debug_assert_eq!(c, in_ch);
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    let flat = (oh / 2) * (ow / 2);

    let filter_len = in_ch * kh * kw;
    let mut nets = Vec::with_capacity(d);
    for k in 0..d {
        let fw = weights.data()[k * filter_len..(k + 1) * filter_len].to_vec();
        let conv = Layer::Conv2d {
            weights: Tensor::new(vec![1, in_ch, kh, kw], fw)?,
            biases: Tensor::new(vec![1], vec![biases.data()[k]])?,
        };
        let net = Network::new(
            primary.input_shape(),
            vec![
                conv,
                Layer::Relu,
                Layer::MaxPool2d { size: 2 },
                Layer::Flatten,
                Layer::dense_seeded(target_class_count, flat, filter_seed(seed, k)),
                Layer::Softmax,
            ],
        )?;
        nets.push(SingleFilterNet {
            filter_index: k,
            net,
            gamma: 1.0,
        });
    }
    Ok(nets)
}

/// Error rate on a strided subsample of at most `cap` samples.
fn error_capped(net: &Network, data: &LabelledDataset, cap: usize) -> Result<f64> {
    let n = data.len();
    if n <= cap {
        return nn::evaluate(net, data);
    }
    let step = n.div_ceil(cap);
    let indices: Vec<usize> = (0..n).step_by(step).collect();
    let subset = data.subset(&indices)?;
    nn::evaluate(net, &subset)
}

fn compute_costs(
    nets: &[SingleFilterNet],
    source: &LabelledDataset,
    cfg: &TransferConfig,
) -> Result<Vec<f64>> {
    if let Some(g) = cfg.gamma_override {
        return Ok(vec![g; nets.len()]);
    }
    let mut assignments = nets
        .par_iter()
        .map(|sf| evidence::bpa_with(&sf.net, source, cfg.combination_rule))
        .collect::<Result<Vec<_>>>()?;
    // A flagged combination means the classifier was only ever correct on a
    // single class (total agreement of the two assignments, clamped
    // denominator). Such a net carries no inter-class evidence; treat it
    // like the degenerate case and stop its optimization.
    for a in &mut assignments {
        if a.near_total_agreement() {
            *a = evidence::AssignmentVector::zero(a.class_count());
        }
    }
    let costs = if cfg.rescale_costs {
        evidence::filter_costs_rescaled(&assignments)
    } else {
        evidence::filter_costs(&assignments)
    };
    Ok(costs.into_iter().map(|c| c.gamma).collect())
}

/// Fine-tune every single-filter network with its own cost-scaled SGD.
///
/// Costs are recomputed from fresh confusion matrices on the configured
/// source every `bpa_refresh_epochs`; the recomputation is a barrier joining
/// all workers, and between barriers each network trains independently (in
/// parallel). Networks whose cost is zero take no optimization steps.
pub fn distributed_finetune(
    mut nets: Vec<SingleFilterNet>,
    target_train: &LabelledDataset,
    target_val: Option<&LabelledDataset>,
    cfg: &TransferConfig,
) -> Result<(Vec<SingleFilterNet>, TransferReport)> {
    cfg.validate()?;
    if nets.is_empty() {
        return Err(Error::InvalidArgument(
            "no single-filter networks to fine-tune".into(),
        ));
    }
    for sf in &nets {
        if sf.net.class_count() != target_train.class_count() {
            return Err(Error::ClassCountMismatch {
                network: sf.net.class_count(),
                dataset: target_train.class_count(),
            });
        }
    }
    let started = Instant::now();
    let bpa_set: LabelledDataset = match cfg.bpa_source {
        BpaSource::Train => target_train.clone(),
        BpaSource::TrainPlusValidation => {
            let val = target_val.ok_or_else(|| {
                Error::InvalidArgument(
                    "train+validation assignment source needs a validation set".into(),
                )
            })?;
            concat(target_train, val)?
        }
    };
    // Conv parameters at construction, for the zero-cost contract below.
    let initial_conv: Vec<Layer> = nets.iter().map(|sf| sf.net.layers()[0].clone()).collect();

    // Fresh heads carry no evidence yet; the first epoch runs at neutral
    // cost and every refresh thereafter reads confusion matrices of
    // trained classifiers.
    let initial = cfg.gamma_override.unwrap_or(1.0);
    for sf in nets.iter_mut() {
        sf.gamma = initial;
    }
    let mut gamma_history: Vec<Vec<f64>> = Vec::new();
    let mut per_epoch = Vec::with_capacity(cfg.hp.epochs);
    for epoch in 0..cfg.hp.epochs {
        nets.par_iter_mut()
            .map(|sf| {
                train_one_epoch(
                    &mut sf.net,
                    target_train,
                    cfg.hp.eta,
                    cfg.hp.batch_size,
                    sf.gamma,
                    0,
                    epoch_seed(filter_seed(cfg.hp.seed, sf.filter_index), epoch),
                )
                .map(|_| ())
            })
            .collect::<Result<Vec<()>>>()?;

        if epoch % cfg.bpa_refresh_epochs == 0 {
            let costs = compute_costs(&nets, &bpa_set, cfg)?;
            for (sf, g) in nets.iter_mut().zip(&costs) {
                sf.gamma = *g;
            }
            gamma_history.push(costs);
        }

        let train_err = mean_net_error(&nets, target_train)?;
        let eval_err = match target_val {
            Some(val) => Some(mean_net_error(&nets, val)?),
            None => None,
        };
        per_epoch.push(EpochStats {
            train_err,
            eval_err,
        });
    }

    // A net whose cost ended at zero has stopped optimizing; it hands its
    // conv filter back unchanged (any drift from steps taken before its
    // evidence vanished is discarded).
    for (sf, conv) in nets.iter_mut().zip(&initial_conv) {
        if sf.gamma == 0.0 {
            sf.net.layers_mut()[0] = conv.clone();
        }
    }

    let final_gammas: Vec<f64> = nets.iter().map(|sf| sf.gamma).collect();
    let final_train_err = per_epoch.last().map_or(1.0, |e| e.train_err);
    let report = TransferReport {
        strategy: Strategy::Distributed,
        per_epoch,
        gamma_history,
        final_gammas,
        final_train_err,
        final_test_err: None,
        wall_clock: started.elapsed(),
        config: cfg.clone(),
    };
    Ok((nets, report))
}

fn mean_net_error(nets: &[SingleFilterNet], data: &LabelledDataset) -> Result<f64> {
    let errs = nets
        .par_iter()
        .map(|sf| error_capped(&sf.net, data, EPOCH_LOG_CAP))
        .collect::<Result<Vec<f64>>>()?;
    Ok(errs.iter().sum::<f64>() / errs.len() as f64)
}

/// Stack the fine-tuned filters back into one conv layer (in filter_index
/// order), attach a freshly initialized joint head, and train the head with
/// the conv layer frozen.
pub fn reassemble(
    nets: &[SingleFilterNet],
    target_train: &LabelledDataset,
    head_hp: &HyperParams,
) -> Result<Network> {
    head_hp.validate()?;
    if nets.is_empty() {
        return Err(Error::InvalidArgument(
            "no single-filter networks to reassemble".into(),
        ));
    }
    let mut ordered: Vec<&SingleFilterNet> = nets.iter().collect();
    ordered.sort_by_key(|sf| sf.filter_index);
    for pair in ordered.windows(2) {
        if pair[0].filter_index == pair[1].filter_index {
            return Err(Error::GeometryMismatch(format!(
                "duplicate filter index {}",
                pair[0].filter_index
            )));
        }
    }
    let input_shape = ordered[0].net.input_shape();
    let first_shape = conv_weight_shape(&ordered[0].net)?;
    let (in_ch, kh, kw) = (first_shape[1], first_shape[2], first_shape[3]);

    let mut weights = Vec::with_capacity(ordered.len() * in_ch * kh * kw);
    let mut biases = Vec::with_capacity(ordered.len());
    for sf in &ordered {
        if sf.net.input_shape() != input_shape || conv_weight_shape(&sf.net)? != first_shape {
            return Err(Error::GeometryMismatch(format!(
                "filter {} geometry differs from filter {}",
                sf.filter_index, ordered[0].filter_index
            )));
        }
        let Layer::Conv2d {
            weights: w,
            biases: b,
        } = &sf.net.layers()[0]
        else {
            unreachable!("conv_weight_shape checked layer 0");
        };
        weights.extend_from_slice(w.data());
        biases.push(b.data()[0]);
    }

    let d = ordered.len();
    let [_, h, w] = input_shape;
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    let flat = d * (oh / 2) * (ow / 2);
    let classes = target_train.class_count();
    let mut net = Network::new(
        input_shape,
        vec![
            Layer::Conv2d {
                weights: Tensor::new(vec![d, in_ch, kh, kw], weights)?,
                biases: Tensor::new(vec![d], biases)?,
            },
            Layer::Relu,
            Layer::MaxPool2d { size: 2 },
            Layer::Flatten,
            Layer::dense_seeded(classes, flat, head_hp.seed),
            Layer::Softmax,
        ],
    )?;
    // Joint head training; everything below the dense layer stays fixed.
    train_frozen(&mut net, target_train, head_hp, 1.0, 4)?;
    Ok(net)
}

fn conv_weight_shape(net: &Network) -> Result<Vec<usize>> {
    match net.layers().first() {
        Some(Layer::Conv2d { weights, .. }) => Ok(weights.shape().to_vec()),
        _ => Err(Error::GeometryMismatch(
            "single-filter network does not start with a conv layer".into(),
        )),
    }
}

/// Fig.-1-style transfer: copy the primary network, re-initialize the top
/// dense layer for the target classes, and train with the first
/// `freeze_depth` layers frozen (0 = full fine-tuning).
pub fn standard_transfer(
    primary: &Network,
    target_train: &LabelledDataset,
    cfg: &TransferConfig,
) -> Result<(Network, TransferReport)> {
    cfg.validate()?;
    if cfg.freeze_depth >= primary.layer_count() {
        return Err(Error::InvalidArgument(format!(
            "freeze_depth {} must be below the layer count {}",
            cfg.freeze_depth,
            primary.layer_count()
        )));
    }
    let started = Instant::now();
    let mut layers = primary.layers().to_vec();
    let dense_idx = layers
        .iter()
        .rposition(|l| matches!(l, Layer::Dense { .. }))
        .ok_or_else(|| Error::InvalidArgument("primary network has no dense head".into()))?;
    let Layer::Dense { weights, .. } = &layers[dense_idx] else {
        unreachable!("rposition matched a dense layer");
    };
    let inputs = weights.shape()[1];
    layers[dense_idx] = Layer::dense_seeded(
        target_train.class_count(),
        inputs,
        cfg.hp.seed.wrapping_add(0x5EED),
    );
    let mut net = Network::new(primary.input_shape(), layers)?;

    let mut per_epoch = Vec::with_capacity(cfg.hp.epochs);
    for epoch in 0..cfg.hp.epochs {
        train_one_epoch(
            &mut net,
            target_train,
            cfg.hp.eta,
            cfg.hp.batch_size,
            1.0,
            cfg.freeze_depth,
            epoch_seed(cfg.hp.seed, epoch),
        )?;
        per_epoch.push(EpochStats {
            train_err: error_capped(&net, target_train, EPOCH_LOG_CAP)?,
            eval_err: None,
        });
    }
    let final_train_err = nn::evaluate(&net, target_train)?;
    let report = TransferReport {
        strategy: Strategy::Standard,
        per_epoch,
        gamma_history: Vec::new(),
        final_gammas: Vec::new(),
        final_train_err,
        final_test_err: None,
        wall_clock: started.elapsed(),
        config: cfg.clone(),
    };
    Ok((net, report))
}

/// Run the configured strategy end to end and evaluate the resulting network
/// on the bundle's train and test sets.
pub fn transfer(
    primary: &Network,
    bundle: &DatasetBundle,
    cfg: &TransferConfig,
) -> Result<(Network, TransferReport)> {
    cfg.validate()?;
    let started = Instant::now();
    let (net, mut report) = match cfg.strategy {
        Strategy::Standard => standard_transfer(primary, &bundle.train, cfg)?,
        Strategy::Distributed => {
            let nets = decompose(primary, bundle.train.class_count(), cfg.hp.seed)?;
            let (nets, report) =
                distributed_finetune(nets, &bundle.train, bundle.validation.as_ref(), cfg)?;
            let net = reassemble(&nets, &bundle.train, &cfg.head_hp)?;
            (net, report)
        }
    };
    report.final_train_err = nn::evaluate(&net, &bundle.train)?;
    report.final_test_err = Some(nn::evaluate(&net, &bundle.test)?);
    report.wall_clock = started.elapsed();
    Ok((net, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{synthesize, Pattern, SyntheticSpec};

    fn toy_data(seed: u64) -> LabelledDataset {
        synthesize(&SyntheticSpec {
            class_count: 2,
            samples_per_class: vec![12, 12],
            image_size: 12,
            pattern_family: vec![Pattern::Square, Pattern::VerticalStripes],
            noise_level: 0.1,
            domain_shift: 0.0,
            seed,
        })
        .unwrap()
    }

    fn toy_primary(filters: usize) -> Network {
        reference_network([1, 12, 12], filters, 5, 2, 77).unwrap()
    }

    fn conv_params(net: &Network) -> (&Tensor, &Tensor) {
        net.layers()[0].params().unwrap()
    }

    #[test]
    fn decompose_yields_one_net_per_filter() {
        let primary = toy_primary(20);
        let nets = decompose(&primary, 2, 1).unwrap();
        assert_eq!(nets.len(), 20);
        for (k, sf) in nets.iter().enumerate() {
            assert_eq!(sf.filter_index, k);
            let (w, _) = conv_params(&sf.net);
            assert_eq!(w.shape(), &[1, 1, 5, 5]);
        }
        // Roughly 1/d of the primary conv parameters per net.
        let (pw, _) = conv_params(&primary);
        let (sw, _) = conv_params(&nets[0].net);
        assert_eq!(sw.len() * 20, pw.len());
    }

    #[test]
    fn decompose_single_filter_copies_conv_exactly() {
        let primary = toy_primary(1);
        let nets = decompose(&primary, 2, 1).unwrap();
        assert_eq!(nets.len(), 1);
        let (pw, pb) = conv_params(&primary);
        let (sw, sb) = conv_params(&nets[0].net);
        assert_eq!(pw.data(), sw.data());
        assert_eq!(pb.data(), sb.data());
    }

    #[test]
    fn decompose_concat_reconstructs_primary_filters() {
        let primary = toy_primary(6);
        let nets = decompose(&primary, 2, 3).unwrap();
        let (pw, pb) = conv_params(&primary);
        let mut stacked = Vec::new();
        let mut stacked_b = Vec::new();
        for sf in &nets {
            let (w, b) = conv_params(&sf.net);
            stacked.extend_from_slice(w.data());
            stacked_b.push(b.data()[0]);
        }
        assert_eq!(stacked, pw.data());
        assert_eq!(stacked_b, pb.data());
    }

    #[test]
    fn decompose_requires_conv() {
        let net = Network::new(
            [1, 1, 4],
            vec![
                Layer::Flatten,
                Layer::dense_seeded(2, 4, 5),
                Layer::Softmax,
            ],
        )
        .unwrap();
        assert!(matches!(decompose(&net, 2, 1), Err(Error::NoConvLayer)));
    }

    #[test]
    fn reassemble_round_trip_is_bitwise() {
        let primary = toy_primary(8);
        let data = toy_data(5);
        let nets = decompose(&primary, 2, 9).unwrap();
        let head_hp = HyperParams {
            eta: 0.1,
            batch_size: 8,
            epochs: 0,
            seed: 123,
        };
        let rebuilt = reassemble(&nets, &data, &head_hp).unwrap();
        let (pw, pb) = conv_params(&primary);
        let (rw, rb) = conv_params(&rebuilt);
        assert_eq!(pw, rw);
        assert_eq!(pb, rb);
    }

    #[test]
    fn reassemble_rejects_mixed_geometry() {
        let a = decompose(&toy_primary(2), 2, 1).unwrap();
        let other = reference_network([1, 12, 12], 2, 3, 2, 4).unwrap();
        let b = decompose(&other, 2, 1).unwrap();
        let mixed = vec![a[0].clone(), b[1].clone()];
        let head_hp = HyperParams {
            eta: 0.1,
            batch_size: 8,
            epochs: 0,
            seed: 1,
        };
        assert!(matches!(
            reassemble(&mixed, &toy_data(1), &head_hp),
            Err(Error::GeometryMismatch(_))
        ));
    }

    fn toy_cfg(strategy: Strategy, epochs: usize) -> TransferConfig {
        TransferConfig {
            strategy,
            freeze_depth: 0,
            bpa_refresh_epochs: 1,
            bpa_source: BpaSource::Train,
            combination_rule: CombinationRule::default(),
            rescale_costs: false,
            gamma_override: None,
            hp: HyperParams {
                eta: 0.05,
                batch_size: 8,
                epochs,
                seed: 11,
            },
            head_hp: HyperParams {
                eta: 0.05,
                batch_size: 8,
                epochs: 2,
                seed: 12,
            },
        }
    }

    #[test]
    fn zero_cost_keeps_parameters_bitwise() {
        let primary = toy_primary(3);
        let data = toy_data(2);
        let nets = decompose(&primary, 2, 4).unwrap();
        let before = nets.clone();
        let mut cfg = toy_cfg(Strategy::Distributed, 3);
        cfg.gamma_override = Some(0.0);
        let (after, report) = distributed_finetune(nets, &data, None, &cfg).unwrap();
        for (a, b) in after.iter().zip(&before) {
            assert_eq!(a.net, b.net);
        }
        assert_eq!(report.per_epoch.len(), 3);
        assert_eq!(report.final_gammas, vec![0.0; 3]);
    }

    #[test]
    fn gamma_history_length_matches_refresh_schedule() {
        let primary = toy_primary(2);
        let data = toy_data(3);
        for (epochs, refresh, expected) in [(4usize, 1usize, 4usize), (5, 2, 3), (3, 7, 1)] {
            let nets = decompose(&primary, 2, 4).unwrap();
            let mut cfg = toy_cfg(Strategy::Distributed, epochs);
            cfg.bpa_refresh_epochs = refresh;
            let (_, report) = distributed_finetune(nets, &data, None, &cfg).unwrap();
            assert_eq!(report.gamma_history.len(), expected);
            assert_eq!(report.per_epoch.len(), epochs);
            for gammas in &report.gamma_history {
                assert_eq!(gammas.len(), 2);
            }
        }
    }

    #[test]
    fn neutral_cost_matches_plain_sgd_trajectory() {
        let primary = toy_primary(2);
        let data = toy_data(8);
        let c = 0.65;
        let epochs = 3;

        let mut cfg = toy_cfg(Strategy::Distributed, epochs);
        cfg.gamma_override = Some(c);
        let nets = decompose(&primary, 2, 21).unwrap();
        let (tuned, _) = distributed_finetune(nets, &data, None, &cfg).unwrap();

        // Plain SGD at rate c·eta over the same shuffle streams.
        let mut manual = decompose(&primary, 2, 21).unwrap();
        for epoch in 0..epochs {
            for sf in manual.iter_mut() {
                train_one_epoch(
                    &mut sf.net,
                    &data,
                    cfg.hp.eta * c,
                    cfg.hp.batch_size,
                    1.0,
                    0,
                    epoch_seed(filter_seed(cfg.hp.seed, sf.filter_index), epoch),
                )
                .unwrap();
            }
        }
        for (a, b) in tuned.iter().zip(&manual) {
            assert_eq!(a.net, b.net);
        }
    }

    #[test]
    fn standard_transfer_freeze_contract() {
        let primary = toy_primary(3);
        let data = toy_data(6);
        // Freeze everything below the dense head (conv stack fixed).
        let mut cfg = toy_cfg(Strategy::Standard, 3);
        cfg.freeze_depth = 4;
        let (net, report) = standard_transfer(&primary, &data, &cfg).unwrap();
        let (pw, pb) = conv_params(&primary);
        let (nw, nb) = conv_params(&net);
        assert_eq!(pw, nw);
        assert_eq!(pb, nb);
        assert_eq!(report.per_epoch.len(), 3);
        assert!(report.final_gammas.is_empty());
    }

    #[test]
    fn standard_transfer_zero_epochs_random_head() {
        let primary = toy_primary(3);
        let data = toy_data(6);
        let mut cfg = toy_cfg(Strategy::Standard, 0);
        cfg.freeze_depth = 4;
        let (net, report) = standard_transfer(&primary, &data, &cfg).unwrap();
        // Untrained random head on balanced 2-class data: error within a wide
        // band around 1 − 1/C.
        assert!(report.per_epoch.is_empty());
        let err = nn::evaluate(&net, &data).unwrap();
        assert!((0.0..=1.0).contains(&err));
    }

    #[test]
    fn standard_transfer_rejects_bad_freeze_depth() {
        let primary = toy_primary(2);
        let data = toy_data(1);
        let mut cfg = toy_cfg(Strategy::Standard, 1);
        cfg.freeze_depth = primary.layer_count();
        assert!(standard_transfer(&primary, &data, &cfg).is_err());
    }

    #[test]
    fn transfer_dispatches_both_strategies() {
        let primary = toy_primary(2);
        let bundle = DatasetBundle {
            train: toy_data(41),
            validation: Some(toy_data(42)),
            test: toy_data(43),
        };
        for strategy in [Strategy::Standard, Strategy::Distributed] {
            let cfg = toy_cfg(strategy, 2);
            let (net, report) = transfer(&primary, &bundle, &cfg).unwrap();
            assert_eq!(net.class_count(), 2);
            assert_eq!(report.strategy, strategy);
            let test_err = report.final_test_err.unwrap();
            assert!((0.0..=1.0).contains(&test_err));
            assert!((0.0..=1.0).contains(&report.final_train_err));
            if strategy == Strategy::Distributed {
                assert_eq!(report.final_gammas.len(), 2);
            }
        }
    }
}
