use std::path::Path;

use dtl_core::datasets::{load_idx, LabelledDataset};
use dtl_core::evidence::{BpaSource, CombinationRule};
use dtl_core::nn::{self, HyperParams};
use dtl_core::tensor::Tensor;
use dtl_core::transfer::*;

fn arg<T: std::str::FromStr>(n: usize, default: T) -> T {
    std::env::args()
        .nth(n)
        .and_then(|s| s.parse().ok())
        .unwrap_or(default)
}

/// Deterministic domain shift: translate by (dx, dy) with zero fill and
/// blend toward the inverted image.
fn shift_domain(ds: &LabelledDataset, dx: i64, dy: i64, invert: f64) -> LabelledDataset {
    let [c, h, w] = ds.image_shape();
    let n = ds.len();
    let mut data = vec![0.0f64; n * c * h * w];
    for i in 0..n {
        let px = ds.sample_pixels(i);
        for ch in 0..c {
            for y in 0..h as i64 {
                for x in 0..w as i64 {
                    let (sy, sx) = (y - dy, x - dx);
                    if sy >= 0 && sy < h as i64 && sx >= 0 && sx < w as i64 {
                        let v = px[ch * h * w + (sy as usize) * w + sx as usize];
                        data[i * c * h * w + ch * h * w + (y as usize) * w + x as usize] =
                            (1.0 - invert) * v + invert * (1.0 - v);
                    } else {
                        data[i * c * h * w + ch * h * w + (y as usize) * w + x as usize] =
                            invert * 1.0;
                    }
                }
            }
        }
    }
    let images = Tensor::new(vec![n, c, h, w], data).unwrap();
    LabelledDataset::new(images, ds.labels().to_vec(), ds.class_count()).unwrap()
}

/// Take `counts[class]` samples per class, starting at `skip` per class.
fn take_per_class(ds: &LabelledDataset, counts: &[usize], skip: &mut [usize]) -> LabelledDataset {
    let mut taken = vec![0usize; counts.len()];
    let mut skipped = vec![0usize; counts.len()];
    let mut indices = Vec::new();
    for (i, &l) in ds.labels().iter().enumerate() {
        if skipped[l] < skip[l] {
            skipped[l] += 1;
            continue;
        }
        if taken[l] < counts[l] {
            taken[l] += 1;
            indices.push(i);
        }
    }
    for (l, s) in skip.iter_mut().enumerate() {
        *s += skipped[l].min(*s) - *s + skipped[l].max(*s) - skipped[l] + taken[l];
    }
    ds.subset(&indices).unwrap()
}

fn main() {
    let eta: f64 = arg(1, 0.03);
    let epochs: usize = arg(2, 10);
    let head_epochs: usize = arg(3, 10);
    let invert: f64 = arg(4, 0.3);
    let freeze: usize = arg(5, 0);
    let primary_n: usize = arg(6, 3000);
    let seed_base: u64 = arg(7, 0);

    let data_dir = Path::new("crates/harness/data");
    let full = load_idx(
        &data_dir.join("mnist10k-images-idx3-ubyte"),
        &data_dir.join("mnist10k-labels-idx1-ubyte"),
    )
    .unwrap();

    // Primary: first `primary_n` samples (class-interleaved), pretrained once.
    let primary_data = full.subset(&(0..primary_n).collect::<Vec<_>>()).unwrap();
    let mut primary = reference_network([1, 28, 28], 20, 5, 10, 4242).unwrap();
    nn::train(
        &mut primary,
        &primary_data,
        &HyperParams { eta: 0.1, batch_size: 32, epochs: 3, seed: 4242 },
        1.0,
    )
    .unwrap();
    eprintln!(
        "primary train err {:.4}",
        nn::evaluate(&primary, &primary_data).unwrap()
    );

    // Target pool: remaining samples, shifted appearance.
    let rest: Vec<usize> = (primary_n..full.len()).collect();
    let pool = shift_domain(&full.subset(&rest).unwrap(), 2, 2, invert);

    // Imbalanced target: digits 0 and 1 dominate.
    let mut train_counts = vec![25usize; 10];
    train_counts[0] = 100;
    train_counts[1] = 100;
    let val_counts = vec![12usize; 10];
    let test_counts = vec![30usize; 10];

    let mut wins = 0;
    for seed in (seed_base + 1)..=(seed_base + 10) {
        // Different seeds draw different target subsets via a rotating skip.
        let mut skip = vec![(seed as usize - 1) * 7 % 50; 10];
        let train = take_per_class(&pool, &train_counts, &mut skip);
        let mut skip2 = vec![200 + (seed as usize) * 3; 10];
        let val = take_per_class(&pool, &val_counts, &mut skip2);
        let mut skip3 = vec![300 + (seed as usize) * 3; 10];
        let test = take_per_class(&pool, &test_counts, &mut skip3);
        let bundle = DatasetBundle {
            train,
            validation: Some(val),
            test,
        };
        let base = TransferConfig {
            strategy: Strategy::Standard,
            freeze_depth: freeze,
            bpa_refresh_epochs: 1,
            bpa_source: BpaSource::Train,
            combination_rule: CombinationRule::default(),
            rescale_costs: false,
            gamma_override: None,
            hp: HyperParams { eta, batch_size: 16, epochs, seed: 77 + seed },
            head_hp: HyperParams { eta, batch_size: 16, epochs: head_epochs, seed: 99 + seed },
        };
        let (_, srep) = transfer(&primary, &bundle, &base).unwrap();
        let dcfg = TransferConfig { strategy: Strategy::Distributed, ..base.clone() };
        let (_, drep) = transfer(&primary, &bundle, &dcfg).unwrap();
        let s_err = srep.final_test_err.unwrap();
        let d_err = drep.final_test_err.unwrap();
        if d_err <= s_err {
            wins += 1;
        }
        println!("seed {seed}: standard {s_err:.4} distributed {d_err:.4}");
    }
    println!("wins: {wins}/10 (eta={eta} epochs={epochs} head={head_epochs} invert={invert} freeze={freeze})");
}
