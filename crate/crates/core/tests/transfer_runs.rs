//! Desk-scale end-to-end runs of the distributed pipeline on synthetic
//! domain pairs.

use dtl_core::datasets::{synthesize, Pattern, SyntheticSpec};
use dtl_core::evidence::{BpaSource, CombinationRule};
use dtl_core::nn::{self, HyperParams};
use dtl_core::transfer::{
    decompose, distributed_finetune, reassemble, reference_network, Strategy, TransferConfig,
};

fn spec(samples: Vec<usize>, shift: f64, seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        class_count: samples.len(),
        samples_per_class: samples,
        image_size: 12,
        pattern_family: vec![Pattern::Square, Pattern::VerticalStripes, Pattern::Cross],
        noise_level: 0.15,
        domain_shift: shift,
        seed,
    }
}

#[test]
fn reassembled_net_not_worse_than_worst_filter_in_most_seeds() {
    let mut wins = 0;
    let seeds = 10;
    for seed in 0..seeds {
        let primary_data = synthesize(&spec(vec![40, 40, 40], 0.0, 100 + seed)).unwrap();
        let target_train = synthesize(&spec(vec![30, 30, 30], 0.4, 200 + seed)).unwrap();
        let target_test = synthesize(&spec(vec![20, 20, 20], 0.4, 300 + seed)).unwrap();

        let mut primary = reference_network([1, 12, 12], 4, 5, 3, 40 + seed).unwrap();
        nn::train(
            &mut primary,
            &primary_data,
            &HyperParams {
                eta: 0.08,
                batch_size: 16,
                epochs: 4,
                seed: 7 + seed,
            },
            1.0,
        )
        .unwrap();

        let cfg = TransferConfig {
            strategy: Strategy::Distributed,
            freeze_depth: 0,
            bpa_refresh_epochs: 1,
            bpa_source: BpaSource::Train,
            combination_rule: CombinationRule::default(),
            rescale_costs: false,
            gamma_override: None,
            hp: HyperParams {
                eta: 0.08,
                batch_size: 16,
                epochs: 4,
                seed: 17 + seed,
            },
            head_hp: HyperParams {
                eta: 0.08,
                batch_size: 16,
                epochs: 5,
                seed: 27 + seed,
            },
        };
        let nets = decompose(&primary, 3, cfg.hp.seed).unwrap();
        let (nets, _) = distributed_finetune(nets, &target_train, None, &cfg).unwrap();
        let worst_single = nets
            .iter()
            .map(|sf| nn::evaluate(&sf.net, &target_test).unwrap())
            .fold(0.0f64, f64::max);
        let rebuilt = reassemble(&nets, &target_train, &cfg.head_hp).unwrap();
        let rebuilt_err = nn::evaluate(&rebuilt, &target_test).unwrap();
        if rebuilt_err <= worst_single {
            wins += 1;
        }
    }
    assert!(
        wins >= 8,
        "reassembled network beat the worst single filter in only {wins}/{seeds} seeds"
    );
}

#[test]
fn single_filter_distributed_run_with_neutral_cost_trains() {
    // Degenerate decomposition: one filter, cost forced to 1 behaves like a
    // plain fine-tune of that one-filter network.
    let target = synthesize(&spec(vec![30, 30, 30], 0.2, 5)).unwrap();
    let primary = reference_network([1, 12, 12], 1, 5, 3, 9).unwrap();
    let cfg = TransferConfig {
        strategy: Strategy::Distributed,
        freeze_depth: 0,
        bpa_refresh_epochs: 1,
        bpa_source: BpaSource::Train,
        combination_rule: CombinationRule::default(),
        rescale_costs: false,
        gamma_override: Some(1.0),
        hp: HyperParams {
            eta: 0.08,
            batch_size: 16,
            epochs: 6,
            seed: 3,
        },
        head_hp: HyperParams {
            eta: 0.08,
            batch_size: 16,
            epochs: 0,
            seed: 4,
        },
    };
    let nets = decompose(&primary, 3, cfg.hp.seed).unwrap();
    let before = nn::evaluate(&nets[0].net, &target).unwrap();
    let (nets, report) = distributed_finetune(nets, &target, None, &cfg).unwrap();
    let after = nn::evaluate(&nets[0].net, &target).unwrap();
    assert!(
        after < before,
        "training error should drop: before {before}, after {after}"
    );
    assert_eq!(report.final_gammas, vec![1.0]);
}
