//! Cross-module trainer behavior: checkpoint round-trips, strategy guards,
//! and resume-equals-continuous-run determinism.

use feedalign_core::data::{two_moons, Dataset};
use feedalign_core::feedback::{FeedbackInit, FeedbackScheme};
use feedalign_core::layers::ActKind;
use feedalign_core::trainer::{
    checkpoint_bytes, evaluate, load_checkpoint, train_epoch, FcStrategy, Hyperparams, LayerSpec,
    LrDecay, Network, NetworkSpec, TrainState,
};

fn moons_spec(strategy: FcStrategy, scheme: FeedbackScheme) -> NetworkSpec {
    NetworkSpec {
        name: "moons".into(),
        input: vec![2],
        layers: vec![
            LayerSpec::Fc { out_features: 16 },
            LayerSpec::Activation(ActKind::Tanh),
            LayerSpec::Fc { out_features: 16 },
            LayerSpec::Activation(ActKind::Tanh),
            LayerSpec::Fc { out_features: 2 },
        ],
        class_count: 2,
        fc_strategy: strategy,
        feedback_init: FeedbackInit { scheme, seed: 21 },
    }
}

fn hyper(epochs: u32) -> Hyperparams {
    Hyperparams {
        lr: 0.1,
        batch: 50,
        momentum: 0.9,
        weight_decay: 5e-4,
        lr_decay: LrDecay::None,
        epochs,
        seed: 21,
    }
}

fn data() -> Dataset<f32> {
    two_moons::<f32>(200, 0.1, 21).unwrap()
}

#[test]
fn checkpoint_resume_matches_continuous_run() {
    let spec = moons_spec(FcStrategy::Bdfa, FeedbackScheme::SignProduct);
    let h = hyper(6);
    let data = data();

    // Continuous run: 6 epochs.
    let mut net_a = Network::<f32>::build(&spec, h.seed).unwrap();
    let mut state_a = TrainState::new(&net_a, h.seed);
    for _ in 0..6 {
        train_epoch(&mut net_a, &data, &h, &mut state_a, None).unwrap();
    }

    // Interrupted run: 3 epochs, checkpoint, restore into a fresh network.
    let mut net_b = Network::<f32>::build(&spec, h.seed).unwrap();
    let mut state_b = TrainState::new(&net_b, h.seed);
    for _ in 0..3 {
        train_epoch(&mut net_b, &data, &h, &mut state_b, None).unwrap();
    }
    let bytes = checkpoint_bytes(&net_b, &state_b);

    let mut net_c = Network::<f32>::build(&spec, h.seed + 999).unwrap();
    let mut state_c = TrainState::new(&net_c, h.seed + 999);
    load_checkpoint(&bytes, &mut net_c, &mut state_c).unwrap();
    assert_eq!(state_c.epoch, 3);
    for _ in 0..3 {
        train_epoch(&mut net_c, &data, &h, &mut state_c, None).unwrap();
    }

    let final_a = checkpoint_bytes(&net_a, &state_a);
    let final_c = checkpoint_bytes(&net_c, &state_c);
    assert_eq!(final_a, final_c, "resumed run diverged from continuous run");
}

#[test]
fn checkpoint_rejects_mismatches() {
    let spec = moons_spec(FcStrategy::Dfa, FeedbackScheme::Product);
    let net = Network::<f32>::build(&spec, 3).unwrap();
    let state = TrainState::new(&net, 3);
    let bytes = checkpoint_bytes(&net, &state);

    // Corrupt magic.
    let mut bad = bytes.clone();
    bad[0] = b'X';
    let mut net2 = Network::<f32>::build(&spec, 3).unwrap();
    let mut state2 = TrainState::new(&net2, 3);
    assert!(load_checkpoint(&bad, &mut net2, &mut state2).is_err());

    // Wrong precision.
    let mut net64 = Network::<f64>::build(&spec, 3).unwrap();
    let mut state64 = TrainState::new(&net64, 3);
    assert!(load_checkpoint(&bytes, &mut net64, &mut state64).is_err());

    // Truncated.
    let mut net3 = Network::<f32>::build(&spec, 3).unwrap();
    let mut state3 = TrainState::new(&net3, 3);
    assert!(load_checkpoint(&bytes[..bytes.len() - 4], &mut net3, &mut state3).is_err());
}

#[test]
fn fc_order_guards() {
    let spec = moons_spec(FcStrategy::Dfa, FeedbackScheme::Product);
    let mut net = Network::<f32>::build(&spec, 5).unwrap();
    let d = data();
    let (images, labels) = d.gather(&[0, 1, 2, 3]).unwrap();
    let mut rng = rand::SeedableRng::seed_from_u64(0);
    let logits = net
        .forward(&images, feedalign_core::layers::Mode::Train, &mut rng)
        .unwrap();
    let (_, e) = feedalign_core::trainer::softmax_cross_entropy(&logits, &labels).unwrap();

    assert!(net.backward_with_fc_order(&e, &[0, 0, 1]).is_err());
    assert!(net.backward_with_fc_order(&e, &[0, 1]).is_err());
    assert!(net.backward_with_fc_order(&e, &[2, 0, 1]).is_ok());

    let spec_bp = moons_spec(FcStrategy::Bp, FeedbackScheme::RandomHe);
    let mut net_bp = Network::<f32>::build(&spec_bp, 5).unwrap();
    let logits = net_bp
        .forward(&images, feedalign_core::layers::Mode::Train, &mut rng)
        .unwrap();
    let (_, e) = feedalign_core::trainer::softmax_cross_entropy(&logits, &labels).unwrap();
    assert!(net_bp.backward_with_fc_order(&e, &[0, 1, 2]).is_err());
}

#[test]
fn strategies_all_learn_something_on_moons() {
    // Smoke: 30 epochs should beat chance comfortably for every strategy.
    let d = data();
    for (strategy, scheme) in [
        (FcStrategy::Bp, FeedbackScheme::RandomHe),
        (FcStrategy::Fa, FeedbackScheme::RandomHe),
        (FcStrategy::Dfa, FeedbackScheme::RandomHe),
        (FcStrategy::Dfa, FeedbackScheme::Product),
        (FcStrategy::Bdfa, FeedbackScheme::SignProduct),
    ] {
        let spec = moons_spec(strategy, scheme);
        let h = hyper(30);
        let mut net = Network::<f32>::build(&spec, h.seed).unwrap();
        let mut state = TrainState::new(&net, h.seed);
        for _ in 0..30 {
            train_epoch(&mut net, &d, &h, &mut state, None).unwrap();
        }
        let m = evaluate(&mut net, &d, 50).unwrap();
        assert!(
            m.top1 > 80.0,
            "{}/{:?} stuck at {:.1}%",
            spec.fc_strategy.name(),
            scheme,
            m.top1
        );
    }
}
