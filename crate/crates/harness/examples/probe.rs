use dtl_core::datasets::{synthesize, Pattern, SyntheticSpec};
use dtl_core::evidence::{BpaSource, CombinationRule};
use dtl_core::nn::{self, HyperParams};
use dtl_core::transfer::*;

fn arg<T: std::str::FromStr>(n: usize, default: T) -> T {
    std::env::args()
        .nth(n)
        .and_then(|s| s.parse().ok())
        .unwrap_or(default)
}

fn main() {
    let eta: f64 = arg(1, 0.04);
    let epochs: usize = arg(2, 10);
    let head_epochs: usize = arg(3, 10);
    let shift: f64 = arg(4, 0.45);
    let minority: usize = arg(5, 24);
    let filters: usize = arg(6, 8);
    let refresh: usize = arg(7, 1);
    let rescale: bool = arg(8, 0u8) == 1;
    let verbose: bool = arg(9, 0u8) == 1;
    let head_eta: f64 = arg(10, 0.08);

    let noise: f64 = arg(12, 0.2);
    let plusval: bool = arg(13, 0u8) == 1;
    let same_family_primary: bool = arg(14, 0u8) == 1;
    let mk = |samples: Vec<usize>, sh: f64, s: u64| SyntheticSpec {
        class_count: samples.len(),
        samples_per_class: samples,
        image_size: 14,
        pattern_family: vec![Pattern::Square, Pattern::VerticalStripes, Pattern::Cross],
        noise_level: noise,
        domain_shift: sh,
        seed: s,
    };

    let seed_base: u64 = arg(15, 0);
    let mut wins = 0;
    let mut results = Vec::new();
    for seed in (seed_base + 1)..=(seed_base + 10) {
        let primary_classes = if same_family_primary { vec![150, 150, 150] } else { vec![150, 150] };
        let primary_data = synthesize(&mk(primary_classes.clone(), 0.0, 1000 + seed)).unwrap();
        let mut primary =
            reference_network([1, 14, 14], filters, 5, primary_classes.len(), seed).unwrap();
        nn::train(
            &mut primary,
            &primary_data,
            &HyperParams { eta: 0.08, batch_size: 16, epochs: 12, seed },
            1.0,
        )
        .unwrap();

        // Target adds an unseen minority class under domain shift.
        let target_train = synthesize(&mk(vec![90, 30, minority], shift, 2000 + seed)).unwrap();
        let target_val = synthesize(&mk(vec![30, 10, minority / 2 + 1], shift, 3000 + seed)).unwrap();
        let target_test = synthesize(&mk(vec![40, 20, 20], shift, 4000 + seed)).unwrap();
        let bundle = DatasetBundle {
            train: target_train,
            validation: Some(target_val),
            test: target_test,
        };
        let base = TransferConfig {
            strategy: Strategy::Standard,
            freeze_depth: 4,
            bpa_refresh_epochs: refresh,
            bpa_source: if plusval { BpaSource::TrainPlusValidation } else { BpaSource::Train },
            combination_rule: CombinationRule::default(),
            rescale_costs: rescale,
            gamma_override: None,
            hp: HyperParams { eta, batch_size: 16, epochs, seed: 77 + seed },
            head_hp: HyperParams { eta: head_eta, batch_size: 16, epochs: head_epochs, seed: 99 + seed },
        };
        // Standard: same eta/epochs as the distributed fine-tune.
        let freeze: usize = std::env::args().nth(11).and_then(|s| s.parse().ok()).unwrap_or(4);
        let scfg = TransferConfig {
            freeze_depth: freeze,
            ..base.clone()
        };
        let (_, srep) = transfer(&primary, &bundle, &scfg).unwrap();
        let dcfg = TransferConfig { strategy: Strategy::Distributed, ..base.clone() };
        let (_, drep) = transfer(&primary, &bundle, &dcfg).unwrap();
        let s_err = srep.final_test_err.unwrap();
        let d_err = drep.final_test_err.unwrap();
        if d_err <= s_err {
            wins += 1;
        }
        results.push((seed, s_err, d_err));
        if verbose {
            let g: Vec<String> = drep.final_gammas.iter().map(|v| format!("{v:.2}")).collect();
            println!("  seed {seed}: gammas [{}]", g.join(","));
        }
    }
    for (seed, s, d) in &results {
        println!("seed {seed}: standard {s:.4} distributed {d:.4}");
    }
    println!("wins: {wins}/10  (eta={eta} epochs={epochs} head={head_epochs} shift={shift} minority={minority} filters={filters} refresh={refresh} rescale={rescale})");
}
