//! Run configuration: `key = value` config files, flag overrides, and the
//! resolved settings echoed into every output directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use feedalign_core::error::{Error, Result};
use feedalign_core::feedback::FeedbackScheme;
use feedalign_core::scalar::Precision;
use feedalign_core::trainer::{preset, FcStrategy, Hyperparams, LrDecay, Preset};

/// Flag-level options; `None` means "not given" so config-file values and
/// preset defaults can fill in.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct RunArgs {
    /// Named network preset (mlp-moons, toycnn, smallcnn-cifar10, vgg16-cifar10, vgg16-cifar100)
    #[arg(long)]
    pub preset: Option<String>,
    /// Config file of `key = value` lines; flags override file values
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Credit-assignment strategy: bp | fa | dfa | cdfa | bdfa | cbdfa
    #[arg(long)]
    pub strategy: Option<String>,
    /// Feedback construction: random | random-uniform | product | sign-product
    #[arg(long = "feedback-init")]
    pub feedback_init: Option<String>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Named learning-rate regime: small (0.01, flat) | large (0.1, x0.1 every 40 epochs)
    #[arg(long = "lr-preset")]
    pub lr_preset: Option<String>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub epochs: Option<u32>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long = "weight-decay")]
    pub weight_decay: Option<f64>,
    /// Enable horizontal-flip + pad-and-crop augmentation
    #[arg(long)]
    pub augment: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (metrics.csv, checkpoint.bin, config.echo)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Directory holding CIFAR binary files (image presets)
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Train on only the first N samples of the training split
    #[arg(long)]
    pub subset: Option<usize>,
    /// Numeric precision: f32 | f64
    #[arg(long)]
    pub precision: Option<String>,
    /// Sample count for the mlp-moons synthetic dataset
    #[arg(long = "moons-n")]
    pub moons_n: Option<usize>,
    /// Noise std for the mlp-moons synthetic dataset
    #[arg(long = "moons-noise")]
    pub moons_noise: Option<f64>,
    /// Add batch norm after every hidden FC layer
    #[arg(long = "fc-batchnorm")]
    pub fc_batchnorm: bool,
    /// Add dropout (given rate) after every hidden FC activation
    #[arg(long = "fc-dropout")]
    pub fc_dropout: Option<f64>,
}

/// Fully resolved run settings.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub preset: Preset,
    pub strategy: FcStrategy,
    pub scheme: FeedbackScheme,
    pub hyper: Hyperparams,
    pub augment: bool,
    pub feedback_seed: u64,
    pub out_dir: PathBuf,
    pub data_dir: Option<PathBuf>,
    pub subset: Option<usize>,
    pub precision: Precision,
    pub moons_n: usize,
    pub moons_noise: f64,
    pub fc_batchnorm: bool,
    pub fc_dropout: Option<f64>,
}

pub fn parse_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path)?;
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Config(format!(
                "{}:{}: expected `key = value`, got `{raw}`",
                path.display(),
                lineno + 1
            )));
        };
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

fn parse<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<Option<T>> {
    match map.get(key) {
        None => Ok(None),
        Some(v) => v.parse::<T>().map(Some).map_err(|_| {
            Error::Config(format!("config key `{key}`: cannot parse `{v}`"))
        }),
    }
}

impl RunArgs {
    /// Resolution order: preset defaults, then config-file keys, then flags.
    pub fn resolve(&self) -> Result<RunConfig> {
        let file = match &self.config {
            Some(path) => parse_config_file(path)?,
            None => BTreeMap::new(),
        };

        let preset_name = self
            .preset
            .clone()
            .or_else(|| file.get("preset").cloned())
            .ok_or_else(|| Error::Config("no preset given (use --preset or a config file)".into()))?;
        let preset = preset(&preset_name)?;

        let strategy_name = self
            .strategy
            .clone()
            .or_else(|| file.get("strategy").cloned())
            .unwrap_or_else(|| "bp".into());
        let strategy = FcStrategy::from_name(&strategy_name).ok_or_else(|| {
            Error::Config(format!(
                "unknown strategy `{strategy_name}` (bp | fa | dfa | cdfa | bdfa | cbdfa)"
            ))
        })?;

        let scheme_name = self
            .feedback_init
            .clone()
            .or_else(|| file.get("feedback_init").cloned())
            .unwrap_or_else(|| "random".into());
        let scheme = FeedbackScheme::from_name(&scheme_name).ok_or_else(|| {
            Error::Config(format!(
                "unknown feedback init `{scheme_name}` (random | random-uniform | product | sign-product)"
            ))
        })?;

        let mut hyper = preset.hyper;
        if let Some(name) = self
            .lr_preset
            .clone()
            .or_else(|| file.get("lr_preset").cloned())
        {
            match name.as_str() {
                "small" => {
                    hyper.lr = 0.01;
                    hyper.lr_decay = LrDecay::None;
                }
                "large" => {
                    hyper.lr = 0.1;
                    hyper.lr_decay = LrDecay::Step {
                        factor: 0.1,
                        every: 40,
                    };
                }
                other => {
                    return Err(Error::Config(format!(
                        "unknown lr preset `{other}` (small | large)"
                    )))
                }
            }
        }
        if let Some(lr) = self.lr.or(parse(&file, "lr")?) {
            hyper.lr = lr;
        }
        if let Some(factor) = parse::<f64>(&file, "lr_decay_factor")? {
            let every = parse::<u32>(&file, "lr_decay_every")?.unwrap_or(40);
            hyper.lr_decay = LrDecay::Step { factor, every };
        }
        if let Some(batch) = self.batch.or(parse(&file, "batch")?) {
            hyper.batch = batch;
        }
        if let Some(epochs) = self.epochs.or(parse(&file, "epochs")?) {
            hyper.epochs = epochs;
        }
        if let Some(momentum) = self.momentum.or(parse(&file, "momentum")?) {
            hyper.momentum = momentum;
        }
        if let Some(wd) = self.weight_decay.or(parse(&file, "weight_decay")?) {
            hyper.weight_decay = wd;
        }
        if let Some(seed) = self.seed.or(parse(&file, "seed")?) {
            hyper.seed = seed;
        }
        hyper.validate()?;

        let augment = self.augment || parse::<bool>(&file, "augment")?.unwrap_or(false);
        let feedback_seed = parse::<u64>(&file, "feedback_seed")?.unwrap_or(hyper.seed);

        let precision_name = self
            .precision
            .clone()
            .or_else(|| file.get("precision").cloned())
            .unwrap_or_else(|| "f32".into());
        let precision = match precision_name.as_str() {
            "f32" => Precision::F32,
            "f64" => Precision::F64,
            other => {
                return Err(Error::Config(format!(
                    "unknown precision `{other}` (f32 | f64)"
                )))
            }
        };

        let out_dir = self
            .out
            .clone()
            .or_else(|| file.get("out").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("feedalign-out"));
        let data_dir = self
            .data
            .clone()
            .or_else(|| file.get("data").map(PathBuf::from));

        let fc_dropout = match self.fc_dropout.or(parse(&file, "fc_dropout")?) {
            Some(rate) if rate > 0.0 => Some(rate),
            _ => None,
        };

        Ok(RunConfig {
            preset,
            strategy,
            scheme,
            hyper,
            augment,
            feedback_seed,
            out_dir,
            data_dir,
            subset: self.subset.or(parse(&file, "subset")?),
            precision,
            moons_n: self.moons_n.or(parse(&file, "moons_n")?).unwrap_or(1000),
            moons_noise: self
                .moons_noise
                .or(parse(&file, "moons_noise")?)
                .unwrap_or(0.12),
            fc_batchnorm: self.fc_batchnorm || parse::<bool>(&file, "fc_batchnorm")?.unwrap_or(false),
            fc_dropout,
        })
    }
}

impl RunConfig {
    /// The effective configuration as sorted `key = value` lines.
    pub fn echo(&self, extra: &BTreeMap<String, String>) -> String {
        let mut map = BTreeMap::new();
        map.insert("preset".to_string(), self.preset.name.to_string());
        map.insert("strategy".to_string(), self.strategy.name().to_string());
        map.insert("feedback_init".to_string(), self.scheme.name().to_string());
        map.insert("lr".to_string(), format!("{}", self.hyper.lr));
        match self.hyper.lr_decay {
            LrDecay::None => {
                map.insert("lr_decay".to_string(), "none".to_string());
            }
            LrDecay::Step { factor, every } => {
                map.insert("lr_decay_factor".to_string(), format!("{factor}"));
                map.insert("lr_decay_every".to_string(), format!("{every}"));
            }
        }
        map.insert("batch".to_string(), format!("{}", self.hyper.batch));
        map.insert("epochs".to_string(), format!("{}", self.hyper.epochs));
        map.insert("momentum".to_string(), format!("{}", self.hyper.momentum));
        map.insert(
            "weight_decay".to_string(),
            format!("{}", self.hyper.weight_decay),
        );
        map.insert("seed".to_string(), format!("{}", self.hyper.seed));
        map.insert("feedback_seed".to_string(), format!("{}", self.feedback_seed));
        map.insert("augment".to_string(), format!("{}", self.augment));
        map.insert(
            "precision".to_string(),
            match self.precision {
                Precision::F32 => "f32".to_string(),
                Precision::F64 => "f64".to_string(),
            },
        );
        if let Some(dir) = &self.data_dir {
            map.insert("data".to_string(), dir.display().to_string());
        }
        if let Some(n) = self.subset {
            map.insert("subset".to_string(), format!("{n}"));
        }
        if self.preset.name == "mlp-moons" {
            map.insert("moons_n".to_string(), format!("{}", self.moons_n));
            map.insert("moons_noise".to_string(), format!("{}", self.moons_noise));
        }
        map.insert("fc_batchnorm".to_string(), format!("{}", self.fc_batchnorm));
        if let Some(rate) = self.fc_dropout {
            map.insert("fc_dropout".to_string(), format!("{rate}"));
        }
        for (k, v) in extra {
            map.insert(k.clone(), v.clone());
        }
        let mut out = String::new();
        for (k, v) in map {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }
}
