use std::fmt;
use std::str::FromStr;

use crate::activations::ActivationKind;
use crate::error::{Error, Result};
use crate::init::{InitMode, InitPolicy, DEFAULT_TRANSFER_SCALE};
use crate::tensor::Precision;

use super::adamax::ADAMAX_LR;

/// Everything needed to re-run a training job. Parsed from and echoed as
/// `key=value` lines; `#` starts a comment.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lambda_wd: f64,
    pub lambda_gate: f64,
    pub seed: u64,
    pub precision: Precision,
    /// Path to a network spec file, or `desk` / `paper` for the built-in
    /// reference topology of the command.
    pub network: String,
    /// Replaces every activation of the network when set.
    pub activation: Option<ActivationKind>,
    pub init_mode: InitMode,
    /// Defaults to 1 for scratch and 50 for transfer initialization.
    pub gate_scale: Option<f64>,
    pub train_data: Option<String>,
    pub val_data: Option<String>,
    /// 10 or 100 for the CIFAR variants.
    pub classes: usize,
    pub train_subset: Option<usize>,
    pub val_subset: Option<usize>,
    pub augment: bool,
    /// Fixed epoch length; classification defaults to one pass over the
    /// training set.
    pub batches_per_epoch: Option<usize>,
    pub patch_size: usize,
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// Noise level of the denoising validation image.
    pub val_sigma: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 1,
            batch_size: 32,
            lr: ADAMAX_LR,
            lambda_wd: 0.0,
            lambda_gate: 0.0,
            seed: 0,
            precision: Precision::F32,
            network: "desk".into(),
            activation: None,
            init_mode: InitMode::Scratch,
            gate_scale: None,
            train_data: None,
            val_data: None,
            classes: 10,
            train_subset: None,
            val_subset: None,
            augment: false,
            batches_per_epoch: None,
            patch_size: 64,
            sigma_min: 0.0,
            sigma_max: 55.0,
            val_sigma: 25.0,
        }
    }
}

fn parse<V: FromStr>(key: &str, value: &str) -> Result<V>
where
    V::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("{key}={value}: {e}")))
}

impl TrainConfig {
    pub fn init_policy(&self) -> Result<InitPolicy> {
        let default = match self.init_mode {
            InitMode::Scratch => 1.0,
            InitMode::Transfer => DEFAULT_TRANSFER_SCALE,
        };
        InitPolicy::new(self.init_mode, self.gate_scale.unwrap_or(default))
    }

    /// Sets one key; used by the parser and by command-line overrides.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let opt = |v: &str| (!v.is_empty() && v != "none").then(|| v.to_string());
        match key {
            "epochs" => self.epochs = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "lambda_wd" => self.lambda_wd = parse(key, value)?,
            "lambda_gate" => self.lambda_gate = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "precision" => self.precision = parse(key, value)?,
            "network" => self.network = value.to_string(),
            "activation" => self.activation = opt(value).map(|v| parse(key, &v)).transpose()?,
            "init_mode" => self.init_mode = parse(key, value)?,
            "gate_scale" => self.gate_scale = opt(value).map(|v| parse(key, &v)).transpose()?,
            "train_data" => self.train_data = opt(value),
            "val_data" => self.val_data = opt(value),
            "classes" => self.classes = parse(key, value)?,
            "train_subset" => self.train_subset = opt(value).map(|v| parse(key, &v)).transpose()?,
            "val_subset" => self.val_subset = opt(value).map(|v| parse(key, &v)).transpose()?,
            "augment" => self.augment = parse(key, value)?,
            "batches_per_epoch" => {
                self.batches_per_epoch = opt(value).map(|v| parse(key, &v)).transpose()?
            }
            "patch_size" => self.patch_size = parse(key, value)?,
            "sigma_min" => self.sigma_min = parse(key, value)?,
            "sigma_max" => self.sigma_max = parse(key, value)?,
            "val_sigma" => self.val_sigma = parse(key, value)?,
            other => return Err(Error::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return bad(format!(
                "lr must be finite and non-negative, got {}",
                self.lr
            ));
        }
        for (name, v) in [
            ("lambda_wd", self.lambda_wd),
            ("lambda_gate", self.lambda_gate),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be finite and non-negative, got {v}"));
            }
        }
        if !matches!(self.classes, 10 | 100) {
            return bad(format!("classes must be 10 or 100, got {}", self.classes));
        }
        if self.patch_size == 0 || self.batches_per_epoch == Some(0) {
            return bad("patch_size and batches_per_epoch must be positive".into());
        }
        if !(0.0 <= self.sigma_min
            && self.sigma_min <= self.sigma_max
            && self.sigma_max.is_finite())
        {
            return bad(format!(
                "noise range must satisfy 0 <= sigma_min <= sigma_max, got [{}, {}]",
                self.sigma_min, self.sigma_max
            ));
        }
        if !(self.val_sigma.is_finite() && self.val_sigma >= 0.0) {
            return bad(format!(
                "val_sigma must be non-negative, got {}",
                self.val_sigma
            ));
        }
        self.init_policy().map(|_| ())
    }
}

impl FromStr for TrainConfig {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = |e: Error| Error::Config(format!("line {}: {e}", lineno + 1));
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| at(Error::Config(format!("expected key=value, got `{line}`"))))?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(at(Error::Config(format!("duplicate key `{key}`"))));
            }
            cfg.set(key, value.trim()).map_err(at)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl fmt::Display for TrainConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn opt<V: fmt::Display>(v: &Option<V>) -> String {
            v.as_ref()
                .map_or_else(|| "none".to_string(), |v| v.to_string())
        }
        writeln!(f, "epochs={}", self.epochs)?;
        writeln!(f, "batch_size={}", self.batch_size)?;
        writeln!(f, "lr={}", self.lr)?;
        writeln!(f, "lambda_wd={}", self.lambda_wd)?;
        writeln!(f, "lambda_gate={}", self.lambda_gate)?;
        writeln!(f, "seed={}", self.seed)?;
        writeln!(f, "precision={}", self.precision.name())?;
        writeln!(f, "network={}", self.network)?;
        writeln!(f, "activation={}", opt(&self.activation))?;
        writeln!(f, "init_mode={}", self.init_mode)?;
        writeln!(f, "gate_scale={}", opt(&self.gate_scale))?;
        writeln!(f, "train_data={}", opt(&self.train_data))?;
        writeln!(f, "val_data={}", opt(&self.val_data))?;
        writeln!(f, "classes={}", self.classes)?;
        writeln!(f, "train_subset={}", opt(&self.train_subset))?;
        writeln!(f, "val_subset={}", opt(&self.val_subset))?;
        writeln!(f, "augment={}", self.augment)?;
        writeln!(f, "batches_per_epoch={}", opt(&self.batches_per_epoch))?;
        writeln!(f, "patch_size={}", self.patch_size)?;
        writeln!(f, "sigma_min={}", self.sigma_min)?;
        writeln!(f, "sigma_max={}", self.sigma_max)?;
        writeln!(f, "val_sigma={}", self.val_sigma)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_and_defaults() {
        let cfg: TrainConfig =
            "# desk run\nepochs=3\nlr = 0.001\nactivation=relu\ninit_mode=transfer\n"
                .parse()
                .unwrap();
        assert_eq!(cfg.epochs, 3);
        assert_eq!(cfg.lr, 0.001);
        assert_eq!(cfg.activation, Some(ActivationKind::Relu));
        assert_eq!(cfg.init_policy().unwrap().gate_scale(), 50.0);
        assert_eq!(cfg.batch_size, 32);
    }

    #[test]
    fn rejects_bad_values() {
        for bad in [
            "epochs=-1",
            "lr=-0.1",
            "lambda_gate=nan",
            "batch_size=0",
            "colour=blue",
            "epochs=1\nepochs=2",
            "classes=7",
            "sigma_min=30\nsigma_max=10",
            "init_mode=scratch\ngate_scale=2",
            "precision=f16",
            "justtext",
        ] {
            assert!(bad.parse::<TrainConfig>().is_err(), "{bad}");
        }
    }

    proptest! {
        #[test]
        fn echo_round_trips(
            epochs in 0usize..100,
            batch in 1usize..512,
            lr in 0.0f64..1.0,
            lambda_gate in 0.0f64..1.0,
            seed in any::<u64>(),
            subset in proptest::option::of(1usize..50_000),
            transfer in any::<bool>(),
            act in proptest::option::of(0usize..9),
        ) {
            let cfg = TrainConfig {
                epochs,
                batch_size: batch,
                lr,
                lambda_gate,
                seed,
                train_subset: subset,
                init_mode: if transfer { InitMode::Transfer } else { InitMode::Scratch },
                activation: act.map(|i| ActivationKind::ALL[i]),
                train_data: Some("data/images/train".into()),
                ..TrainConfig::default()
            };
            let back: TrainConfig = cfg.to_string().parse().unwrap();
            prop_assert_eq!(back, cfg);
        }
    }
}
