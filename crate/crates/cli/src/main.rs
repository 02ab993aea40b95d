//! Experiment runner: train/evaluate networks under the five credit-assignment
//! strategies, check gradients against finite differences, log gradient
//! alignment, and report feedback storage.

mod config;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use feedalign_core::data::{
    gaussian_blobs, load_cifar10, load_cifar100, standardize, two_moons, AugmentPolicy, Dataset,
};
use feedalign_core::diagnostics::{alignment, finite_diff_gradient, memory_report};
use feedalign_core::error::{Error, Result};
use feedalign_core::feedback::FeedbackInit;
use feedalign_core::layers::Mode;
use feedalign_core::scalar::{Precision, Scalar};
use feedalign_core::tensor::Tensor;
use feedalign_core::trainer::{
    evaluate, save_checkpoint, softmax_cross_entropy, train_epoch, train_epoch_hooked,
    with_fc_batchnorm, with_fc_dropout, Network, NetworkSpec, TrainState,
};

use config::{RunArgs, RunConfig};

#[derive(Parser)]
#[command(
    name = "feedalign",
    version,
    about = "Train small networks with backprop, feedback alignment, direct feedback alignment, and binarized feedback matrices"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a network; writes metrics.csv, checkpoint.bin, config.echo
    Train(RunArgs),
    /// Compare analytic backprop gradients against central finite differences (runs in f64)
    Checkgrad(CheckgradArgs),
    /// Train while logging per-layer cosine between strategy and backprop gradients
    Align(AlignArgs),
    /// Report feedback storage: dense vs bit-packed bytes per fed layer
    Memreport(RunArgs),
}

#[derive(Args)]
struct CheckgradArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Perturb one analytic gradient entry by this amount before comparing (fault-injection hook)
    #[arg(long = "inject-gradient-error", default_value_t = 0.0)]
    inject: f64,
    /// Maximum accepted relative error
    #[arg(long, default_value_t = 1e-5)]
    tolerance: f64,
    /// Central-difference step
    #[arg(long, default_value_t = 1e-5)]
    epsilon: f64,
}

#[derive(Args)]
struct AlignArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Log alignment every k training steps
    #[arg(long = "align-every", default_value_t = 10)]
    every: u64,
}

fn main() {
    if let Ok(value) = std::env::var("FEEDALIGN_THREADS") {
        if let Ok(n) = value.parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
    let cli = Cli::parse();
    let outcome = match cli.cmd {
        Cmd::Train(args) => resolve_and(args, cmd_train::<f32>, cmd_train::<f64>),
        Cmd::Checkgrad(args) => cmd_checkgrad(&args),
        Cmd::Align(args) => {
            let every = args.every;
            resolve_and(
                args.run,
                move |cfg| cmd_align::<f32>(cfg, every),
                move |cfg| cmd_align::<f64>(cfg, every),
            )
        }
        Cmd::Memreport(args) => resolve_and(args, cmd_memreport::<f32>, cmd_memreport::<f64>),
    };
    match outcome {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(exit_code(&e));
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 2,
        Error::Data(_) | Error::Format(_) | Error::Io(_) => 3,
        Error::Numeric(_) => 4,
        _ => 1,
    }
}

fn resolve_and(
    args: RunArgs,
    f32_run: impl FnOnce(&RunConfig) -> Result<()>,
    f64_run: impl FnOnce(&RunConfig) -> Result<()>,
) -> Result<()> {
    let cfg = args.resolve()?;
    match cfg.precision {
        Precision::F32 => f32_run(&cfg),
        Precision::F64 => f64_run(&cfg),
    }
}

fn build_spec(cfg: &RunConfig) -> NetworkSpec {
    let mut layers = cfg.preset.layers.clone();
    if cfg.fc_batchnorm {
        layers = with_fc_batchnorm(&layers);
    }
    if let Some(rate) = cfg.fc_dropout {
        layers = with_fc_dropout(&layers, rate);
    }
    NetworkSpec {
        name: cfg.preset.name.to_string(),
        input: cfg.preset.input.clone(),
        layers,
        class_count: cfg.preset.class_count,
        fc_strategy: cfg.strategy,
        feedback_init: FeedbackInit {
            scheme: cfg.scheme,
            seed: cfg.feedback_seed,
        },
    }
}

/// Training and (optional) test datasets for the configured preset, plus
/// echo entries (normalization constants) produced while preparing them.
fn load_data<S: Scalar>(
    cfg: &RunConfig,
) -> Result<(Dataset<S>, Option<Dataset<S>>, BTreeMap<String, String>)> {
    let mut extra = BTreeMap::new();
    match cfg.preset.name {
        "mlp-moons" => {
            let mut train = two_moons::<S>(cfg.moons_n, cfg.moons_noise, cfg.hyper.seed)?;
            if let Some(n) = cfg.subset {
                train = train.subset(n)?;
            }
            Ok((train, None, extra))
        }
        "toycnn" => Err(Error::Config(
            "toycnn is a gradient-check layout; run `feedalign checkgrad --preset toycnn`".into(),
        )),
        name => {
            let dir = cfg.data_dir.as_ref().ok_or_else(|| {
                Error::Config(format!("preset {name} needs --data <dir> with CIFAR binaries"))
            })?;
            let (mut train, mut test) = if name.ends_with("cifar100") {
                load_cifar100::<S>(dir)?
            } else {
                load_cifar10::<S>(dir)?
            };
            if let Some(n) = cfg.subset {
                train = train.subset(n)?;
            }
            let stats = standardize(&mut train, &mut [&mut test])?;
            let fmt = |v: &[f64]| {
                v.iter()
                    .map(|x| format!("{x:.6}"))
                    .collect::<Vec<_>>()
                    .join(",")
            };
            extra.insert("channel_mean".into(), fmt(&stats.mean));
            extra.insert("channel_std".into(), fmt(&stats.std));
            Ok((train, Some(test), extra))
        }
    }
}

fn write_metrics_header(file: &mut fs::File) -> Result<()> {
    writeln!(file, "epoch,phase,loss,top1,top5,lr,wall_ms")?;
    Ok(())
}

fn write_metrics_row(
    file: &mut fs::File,
    epoch: u32,
    phase: &str,
    m: &feedalign_core::trainer::Metrics,
    lr: f64,
    wall_ms: u128,
) -> Result<()> {
    writeln!(
        file,
        "{epoch},{phase},{:.6},{:.2},{:.2},{lr},{wall_ms}",
        m.loss, m.top1, m.top5
    )?;
    Ok(())
}

fn cmd_train<S: Scalar>(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out_dir)?;
    let (train, test, extra) = load_data::<S>(cfg)?;
    let spec = build_spec(cfg);
    let mut net = Network::<S>::build(&spec, cfg.hyper.seed)?;
    let mut state = TrainState::new(&net, cfg.hyper.seed);
    fs::write(cfg.out_dir.join("config.echo"), cfg.echo(&extra))?;

    let mut metrics_file = fs::File::create(cfg.out_dir.join("metrics.csv"))?;
    write_metrics_header(&mut metrics_file)?;
    let policy = cfg.augment.then(AugmentPolicy::default);

    let mut last_train = None;
    let mut last_test = None;
    for _ in 0..cfg.hyper.epochs {
        let epoch = state.epoch;
        let lr = cfg.hyper.lr_at(epoch);
        let t0 = Instant::now();
        let m = train_epoch(&mut net, &train, &cfg.hyper, &mut state, policy.as_ref())?;
        write_metrics_row(&mut metrics_file, epoch, "train", &m, lr, t0.elapsed().as_millis())?;
        last_train = Some(m);
        if let Some(test) = &test {
            let t1 = Instant::now();
            let me = evaluate(&mut net, test, cfg.hyper.batch)?;
            write_metrics_row(&mut metrics_file, epoch, "test", &me, lr, t1.elapsed().as_millis())?;
            last_test = Some(me);
        }
        metrics_file.flush()?;
    }
    save_checkpoint(&cfg.out_dir.join("checkpoint.bin"), &net, &state)?;

    if let Some(m) = last_train {
        println!("train: loss {:.6} top1 {:.2}% top5 {:.2}%", m.loss, m.top1, m.top5);
    }
    if let Some(m) = last_test {
        println!("test:  loss {:.6} top1 {:.2}% top5 {:.2}%", m.loss, m.top1, m.top5);
    }
    Ok(())
}

/// Small deterministic gradient-check batch for the preset's input shape.
fn checkgrad_batch(cfg: &RunConfig) -> Result<(Tensor<f64>, Vec<u32>)> {
    let classes = cfg.preset.class_count;
    if cfg.preset.input.len() == 1 {
        let points = if cfg.preset.name == "mlp-moons" {
            two_moons::<f64>(8, cfg.moons_noise, cfg.hyper.seed)?
        } else {
            gaussian_blobs::<f64>(8, classes.min(8), 4.0, cfg.hyper.seed)?
        };
        let indices: Vec<usize> = (0..8).collect();
        let (images, labels) = points.gather(&indices)?;
        return Ok((images, labels));
    }
    // Random image batch, labels round-robin.
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.hyper.seed);
    let batch = 4usize;
    let mut shape = vec![batch];
    shape.extend_from_slice(&cfg.preset.input);
    let len: usize = shape.iter().product();
    let images = Tensor::from_vec(
        &shape,
        (0..len).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )?;
    let labels = (0..batch as u32).map(|i| i % classes as u32).collect();
    Ok((images, labels))
}

fn cmd_checkgrad(args: &CheckgradArgs) -> Result<()> {
    let cfg = args.run.resolve()?;
    fs::create_dir_all(&cfg.out_dir)?;
    let spec = build_spec(&cfg);
    let mut net = Network::<f64>::build(&spec, cfg.hyper.seed)?;
    let (images, labels) = checkgrad_batch(&cfg)?;

    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
    let logits = net.forward(&images, Mode::Train, &mut rng)?;
    let (_, e_last) = softmax_cross_entropy(&logits, &labels)?;
    net.backward_bp(&e_last)?;

    // Analytic gradients in trainable-tensor order.
    let mut analytic: Vec<Tensor<f64>> = Vec::new();
    net.visit_params_grads_mut(&mut |_, _, g| analytic.push(g.clone()));
    if args.inject != 0.0 {
        if let Some(first) = analytic.get_mut(0) {
            first.data_mut()[0] += args.inject;
        }
    }

    let meta = net.trainable_meta();
    let mut report = String::from("layer,metric,value\n");
    let mut worst = (0.0f64, String::new());
    for (idx, a) in analytic.iter().enumerate() {
        let fd = finite_diff_gradient(&mut net, &images, &labels, idx, args.epsilon)?;
        let mut max_rel = 0.0f64;
        for (i, (&x, &y)) in a.data().iter().zip(fd.data()).enumerate() {
            let rel = (x - y).abs() / x.abs().max(y.abs()).max(1e-8);
            if rel > max_rel {
                max_rel = rel;
            }
            if rel > worst.0 {
                worst = (
                    rel,
                    format!("{} {} entry {i}", meta[idx].0, meta[idx].1),
                );
            }
        }
        report.push_str(&format!(
            "{},{}_max_rel_err,{max_rel:.3e}\n",
            meta[idx].0, meta[idx].1
        ));
    }
    fs::write(cfg.out_dir.join("gradcheck.csv"), &report)?;

    if worst.0 > args.tolerance {
        return Err(Error::Numeric(format!(
            "gradient check failed: {} has relative error {:.3e} (tolerance {:.1e})",
            worst.1, worst.0, args.tolerance
        )));
    }
    println!(
        "gradient check passed: worst relative error {:.3e} ({})",
        worst.0,
        if worst.1.is_empty() { "no parameters" } else { &worst.1 }
    );
    Ok(())
}

fn cmd_align<S: Scalar>(cfg: &RunConfig, every: u64) -> Result<()> {
    if every == 0 {
        return Err(Error::Config("--align-every must be >= 1".into()));
    }
    fs::create_dir_all(&cfg.out_dir)?;
    let (train, test, extra) = load_data::<S>(cfg)?;
    let spec = build_spec(cfg);
    let mut net = Network::<S>::build(&spec, cfg.hyper.seed)?;
    let mut state = TrainState::new(&net, cfg.hyper.seed);
    fs::write(cfg.out_dir.join("config.echo"), cfg.echo(&extra))?;

    let mut metrics_file = fs::File::create(cfg.out_dir.join("metrics.csv"))?;
    write_metrics_header(&mut metrics_file)?;
    let mut align_file = fs::File::create(cfg.out_dir.join("align.csv"))?;
    writeln!(align_file, "step,layer,cosine,zero_norm")?;
    let policy = cfg.augment.then(AugmentPolicy::default);

    for _ in 0..cfg.hyper.epochs {
        let epoch = state.epoch;
        let lr = cfg.hyper.lr_at(epoch);
        let t0 = Instant::now();
        let mut rows: Vec<String> = Vec::new();
        let m = train_epoch_hooked(
            &mut net,
            &train,
            &cfg.hyper,
            &mut state,
            policy.as_ref(),
            |net, step, e_last| {
                if step % every != 0 {
                    return Ok(());
                }
                net.backward_bp(e_last)?;
                let reference = net.grad_snapshot();
                net.backward(e_last)?;
                let candidate = net.grad_snapshot();
                for entry in alignment(&reference, &candidate)? {
                    rows.push(format!(
                        "{step},{},{:.6},{}",
                        entry.layer,
                        entry.cosine,
                        entry.zero_norm as u8
                    ));
                }
                Ok(())
            },
        )?;
        for row in rows {
            writeln!(align_file, "{row}")?;
        }
        write_metrics_row(&mut metrics_file, epoch, "train", &m, lr, t0.elapsed().as_millis())?;
        if let Some(test) = &test {
            let t1 = Instant::now();
            let me = evaluate(&mut net, test, cfg.hyper.batch)?;
            write_metrics_row(&mut metrics_file, epoch, "test", &me, lr, t1.elapsed().as_millis())?;
        }
        metrics_file.flush()?;
        align_file.flush()?;
    }
    save_checkpoint(&cfg.out_dir.join("checkpoint.bin"), &net, &state)?;
    println!("alignment log written to {}", cfg.out_dir.join("align.csv").display());
    Ok(())
}

fn cmd_memreport<S: Scalar>(cfg: &RunConfig) -> Result<()> {
    let spec = build_spec(cfg);
    let net = Network::<S>::build(&spec, cfg.hyper.seed)?;
    let report = memory_report(&net);

    let mut csv = String::from("layer,metric,value\n");
    for row in &report.rows {
        println!(
            "{}: {}x{} feedback, dense {} B, packed {} B, reduction {:.1}%",
            row.layer,
            row.rows,
            row.cols,
            row.dense_bytes,
            row.packed_bytes,
            row.reduction * 100.0
        );
        csv.push_str(&format!("{},stored_bytes,{}\n", row.layer, row.stored_bytes));
        csv.push_str(&format!("{},dense_bytes,{}\n", row.layer, row.dense_bytes));
        csv.push_str(&format!("{},packed_bytes,{}\n", row.layer, row.packed_bytes));
        csv.push_str(&format!(
            "{},reduction_percent,{}\n",
            row.layer,
            row.reduction * 100.0
        ));
    }
    println!(
        "total: stored {} B, dense {} B, packed {} B",
        report.total_stored, report.total_dense, report.total_packed
    );
    csv.push_str(&format!("total,stored_bytes,{}\n", report.total_stored));
    csv.push_str(&format!("total,dense_bytes,{}\n", report.total_dense));
    csv.push_str(&format!("total,packed_bytes,{}\n", report.total_packed));

    fs::create_dir_all(&cfg.out_dir)?;
    fs::write(cfg.out_dir.join("memreport.csv"), csv)?;
    Ok(())
}
