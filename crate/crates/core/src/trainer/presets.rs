//! Shipped network layouts with their default hyperparameters.

use crate::error::{Error, Result};
use crate::layers::ActKind;
use crate::trainer::network::LayerSpec;
use crate::trainer::{Hyperparams, LrDecay};

#[derive(Debug, Clone)]
pub struct Preset {
    pub name: &'static str,
    pub input: Vec<usize>,
    pub layers: Vec<LayerSpec>,
    pub class_count: usize,
    pub hyper: Hyperparams,
}

pub fn preset_names() -> &'static [&'static str] {
    &[
        "mlp-moons",
        "toycnn",
        "smallcnn-cifar10",
        "vgg16-cifar10",
        "vgg16-cifar100",
    ]
}

fn conv_block(out_channels: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::Conv {
            out_channels,
            kernel: 3,
            stride: 1,
            pad: 1,
        },
        LayerSpec::BatchNorm,
        LayerSpec::Activation(ActKind::Relu),
    ]
}

fn pool() -> LayerSpec {
    LayerSpec::MaxPool {
        window: 2,
        stride: 2,
    }
}

pub fn preset(name: &str) -> Result<Preset> {
    let base = Hyperparams {
        lr: 0.01,
        batch: 100,
        momentum: 0.9,
        weight_decay: 5e-4,
        lr_decay: LrDecay::None,
        epochs: 30,
        seed: 1,
    };
    match name {
        "mlp-moons" => Ok(Preset {
            name: "mlp-moons",
            input: vec![2],
            layers: vec![
                LayerSpec::Fc { out_features: 16 },
                LayerSpec::Activation(ActKind::Tanh),
                LayerSpec::Fc { out_features: 16 },
                LayerSpec::Activation(ActKind::Tanh),
                LayerSpec::Fc { out_features: 2 },
            ],
            class_count: 2,
            hyper: Hyperparams {
                lr: 0.1,
                lr_decay: LrDecay::Step {
                    factor: 0.1,
                    every: 40,
                },
                epochs: 200,
                ..base
            },
        }),
        "toycnn" => {
            let mut layers = Vec::new();
            layers.extend(conv_block(4));
            layers.push(pool());
            layers.extend(conv_block(8));
            layers.push(pool());
            layers.push(LayerSpec::Flatten);
            layers.push(LayerSpec::Fc { out_features: 16 });
            layers.push(LayerSpec::Activation(ActKind::Relu));
            layers.push(LayerSpec::Fc { out_features: 10 });
            Ok(Preset {
                name: "toycnn",
                input: vec![3, 8, 8],
                layers,
                class_count: 10,
                hyper: Hyperparams {
                    batch: 8,
                    epochs: 5,
                    ..base
                },
            })
        }
        "smallcnn-cifar10" => {
            let mut layers = Vec::new();
            for width in [4usize, 8, 16] {
                layers.extend(conv_block(width));
                layers.push(pool());
            }
            layers.push(LayerSpec::Flatten);
            layers.push(LayerSpec::Fc { out_features: 64 });
            layers.push(LayerSpec::Activation(ActKind::Relu));
            layers.push(LayerSpec::Fc { out_features: 10 });
            Ok(Preset {
                name: "smallcnn-cifar10",
                input: vec![3, 32, 32],
                layers,
                class_count: 10,
                hyper: base,
            })
        }
        "vgg16-cifar10" | "vgg16-cifar100" => {
            let class_count = if name.ends_with("100") { 100 } else { 10 };
            let mut layers = Vec::new();
            for (widths, pooled) in [
                (vec![64usize, 64], true),
                (vec![128, 128], true),
                (vec![256, 256, 256], true),
                (vec![512, 512, 512], true),
                (vec![512, 512, 512], true),
            ] {
                for w in widths {
                    layers.extend(conv_block(w));
                }
                if pooled {
                    layers.push(pool());
                }
            }
            layers.push(LayerSpec::Flatten);
            layers.push(LayerSpec::Fc { out_features: 512 });
            layers.push(LayerSpec::Activation(ActKind::Relu));
            layers.push(LayerSpec::Fc { out_features: 512 });
            layers.push(LayerSpec::Activation(ActKind::Relu));
            layers.push(LayerSpec::Fc {
                out_features: class_count,
            });
            Ok(Preset {
                name: if class_count == 100 {
                    "vgg16-cifar100"
                } else {
                    "vgg16-cifar10"
                },
                input: vec![3, 32, 32],
                layers,
                class_count,
                hyper: Hyperparams {
                    epochs: 100,
                    ..base
                },
            })
        }
        other => Err(Error::Config(format!(
            "unknown preset '{other}' (available: {})",
            preset_names().join(", ")
        ))),
    }
}

/// Inserts a batch-norm layer directly after every hidden FC layer.
pub fn with_fc_batchnorm(layers: &[LayerSpec]) -> Vec<LayerSpec> {
    let last_fc = layers
        .iter()
        .rposition(|l| matches!(l, LayerSpec::Fc { .. }));
    let mut out = Vec::with_capacity(layers.len() + 2);
    for (i, l) in layers.iter().enumerate() {
        out.push(l.clone());
        if matches!(l, LayerSpec::Fc { .. }) && Some(i) != last_fc {
            out.push(LayerSpec::BatchNorm);
        }
    }
    out
}

/// Inserts dropout after the activation that follows every hidden FC layer.
pub fn with_fc_dropout(layers: &[LayerSpec], rate: f64) -> Vec<LayerSpec> {
    let last_fc = layers
        .iter()
        .rposition(|l| matches!(l, LayerSpec::Fc { .. }));
    let mut out = Vec::with_capacity(layers.len() + 2);
    let mut pending = false;
    for (i, l) in layers.iter().enumerate() {
        out.push(l.clone());
        match l {
            LayerSpec::Fc { .. } => pending = Some(i) != last_fc,
            LayerSpec::Activation(_) if pending => {
                out.push(LayerSpec::Dropout { rate });
                pending = false;
            }
            LayerSpec::BatchNorm => {}
            _ => pending = false,
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_presets_resolve() {
        for name in preset_names() {
            let p = preset(name).unwrap();
            assert!(!p.layers.is_empty());
            assert!(p.class_count >= 2);
        }
        assert!(preset("nope").is_err());
    }

    #[test]
    fn fc_batchnorm_insertion_skips_last_fc() {
        let p = preset("mlp-moons").unwrap();
        let with_bn = with_fc_batchnorm(&p.layers);
        let bn_count = with_bn
            .iter()
            .filter(|l| matches!(l, LayerSpec::BatchNorm))
            .count();
        assert_eq!(bn_count, 2);
        // The layer right after the last FC must not be a batch norm.
        let last_fc = with_bn
            .iter()
            .rposition(|l| matches!(l, LayerSpec::Fc { .. }))
            .unwrap();
        assert_eq!(last_fc, with_bn.len() - 1);
    }

    #[test]
    fn fc_dropout_follows_hidden_activations() {
        let p = preset("mlp-moons").unwrap();
        let with_do = with_fc_dropout(&p.layers, 0.5);
        let drops: Vec<usize> = with_do
            .iter()
            .enumerate()
            .filter(|(_, l)| matches!(l, LayerSpec::Dropout { .. }))
            .map(|(i, _)| i)
            .collect();
        assert_eq!(drops.len(), 2);
        for i in drops {
            assert!(matches!(with_do[i - 1], LayerSpec::Activation(_)));
        }
    }
}
