//! Temporary calibration probe (removed before release).

use std::time::Instant;

use feedalign_core::data::{
    class_pattern_images, load_cifar10_file, standardize, write_cifar10_file, Dataset,
};
use feedalign_core::feedback::{FeedbackInit, FeedbackScheme};
use feedalign_core::trainer::{
    evaluate, preset, train_epoch, FcStrategy, Hyperparams, LrDecay, Network, NetworkSpec,
    TrainState,
};

fn make_data(noise: f64, shift: usize) -> (Dataset<f32>, Dataset<f32>) {
    let dir = tempfile::tempdir().unwrap();
    let (labels, pixels) = class_pattern_images(6000, 10, noise, shift, 7);
    let train_path = dir.path().join("train.bin");
    let test_path = dir.path().join("test.bin");
    write_cifar10_file(&train_path, &labels[..5000], &pixels[..5000 * 3072]).unwrap();
    write_cifar10_file(&test_path, &labels[5000..], &pixels[5000 * 3072..]).unwrap();
    let mut train = load_cifar10_file::<f32>(&train_path).unwrap();
    let mut test = load_cifar10_file::<f32>(&test_path).unwrap();
    standardize(&mut train, &mut [&mut test]).unwrap();
    (train, test)
}

fn run(
    train: &Dataset<f32>,
    test: &Dataset<f32>,
    strategy: FcStrategy,
    scheme: FeedbackScheme,
    seed: u64,
    hyper: Hyperparams,
    epochs: u32,
) -> Vec<f64> {
    let p = preset("smallcnn-cifar10").unwrap();
    let spec = NetworkSpec {
        name: p.name.into(),
        input: p.input,
        layers: p.layers,
        class_count: p.class_count,
        fc_strategy: strategy,
        feedback_init: FeedbackInit { scheme, seed },
    };
    let hyper = Hyperparams { seed, ..hyper };
    let mut net = Network::<f32>::build(&spec, seed).unwrap();
    let mut state = TrainState::new(&net, seed);
    let mut accs = Vec::new();
    for _ in 0..epochs {
        train_epoch(&mut net, train, &hyper, &mut state, None).unwrap();
        accs.push(evaluate(&mut net, test, 100).unwrap().top1);
    }
    accs
}

fn std_last10(accs: &[f64]) -> f64 {
    let tail = &accs[accs.len() - 10..];
    let mean = tail.iter().sum::<f64>() / 10.0;
    (tail.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / 10.0).sqrt()
}

#[test]
#[ignore]
fn calibrate_scaled_runs() {
    let noise = 0.55;
    let shift = 5;
    let (train, test) = make_data(noise, shift);
    let p = preset("smallcnn-cifar10").unwrap();
    let small = p.hyper;
    let large = Hyperparams {
        lr: 0.1,
        lr_decay: LrDecay::Step {
            factor: 0.1,
            every: 40,
        },
        ..small
    };

    let t0 = Instant::now();
    // Criterion-7 shape: BP vs CBDFA(sign-product), small LR, 30 epochs.
    let bp = run(&train, &test, FcStrategy::Bp, FeedbackScheme::RandomHe, 1, small, 30);
    eprintln!("[{:.0}s] BP small-lr: final {:.1}%", t0.elapsed().as_secs_f64(), bp.last().unwrap());
    let cbdfa = run(&train, &test, FcStrategy::Bdfa, FeedbackScheme::SignProduct, 1, small, 30);
    eprintln!(
        "[{:.0}s] CBDFA small-lr: final {:.1}% (gap {:.1})",
        t0.elapsed().as_secs_f64(),
        cbdfa.last().unwrap(),
        (bp.last().unwrap() - cbdfa.last().unwrap()).abs()
    );

    // Criterion-8 shape: CBDFA sign-product vs random, large LR, 3 seeds.
    for seed in [1u64, 2, 3] {
        let sp = run(&train, &test, FcStrategy::Bdfa, FeedbackScheme::SignProduct, seed, large, 30);
        let rd = run(&train, &test, FcStrategy::Bdfa, FeedbackScheme::RandomHe, seed, large, 30);
        eprintln!(
            "[{:.0}s] seed {seed}: sign-product final {:.1}% std10 {:.3} | random final {:.1}% std10 {:.3}",
            t0.elapsed().as_secs_f64(),
            sp.last().unwrap(),
            std_last10(&sp),
            rd.last().unwrap(),
            std_last10(&rd)
        );
    }
    eprintln!("total {:.0}s", t0.elapsed().as_secs_f64());
}
