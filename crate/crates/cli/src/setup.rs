//! Config loading and the network/data resolution shared by the training
//! commands.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use wig_core::activations::ActivationKind;
use wig_core::layers::{reference_classifier, reference_denoiser, NetworkSpec, Scale};
use wig_core::optim::TrainConfig;

#[derive(Clone, Copy, Debug)]
pub enum Task {
    Classify,
    Denoise,
}

/// Reads the config file, then applies `--data` and the `--set` overrides
/// in order.
pub fn load_config(path: &Path, data: Option<&Path>, overrides: &[String]) -> Result<TrainConfig> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut cfg: TrainConfig = text
        .parse()
        .with_context(|| format!("parsing {}", path.display()))?;
    if let Some(d) = data {
        cfg.train_data = Some(d.display().to_string());
    }
    for kv in overrides {
        let (k, v) = kv
            .split_once('=')
            .with_context(|| format!("--set expects key=value, got `{kv}`"))?;
        cfg.set(k.trim(), v.trim())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// The built-in `desk`/`paper` topology for the task, or a spec file; the
/// configured activation and precision are applied on top.
pub fn network_spec(cfg: &TrainConfig, task: Task) -> Result<NetworkSpec> {
    let default_act = cfg.activation.unwrap_or(ActivationKind::Wig);
    let spec = match cfg.network.parse::<Scale>() {
        Ok(scale) => match task {
            Task::Classify => reference_classifier(scale, cfg.classes, default_act),
            Task::Denoise => reference_denoiser(scale, default_act),
        },
        Err(_) => {
            let path = PathBuf::from(&cfg.network);
            let text = std::fs::read_to_string(&path)
                .with_context(|| format!("reading network spec {}", path.display()))?;
            let spec: NetworkSpec = text
                .parse()
                .with_context(|| format!("parsing network spec {}", path.display()))?;
            match cfg.activation {
                Some(a) => spec.with_activation(a),
                None => spec,
            }
        }
    };
    let spec = spec.with_precision(cfg.precision);
    spec.validate()?;
    Ok(spec)
}

pub fn required<'a>(value: &'a Option<String>, key: &str) -> Result<&'a Path> {
    match value {
        Some(v) => Ok(Path::new(v)),
        None => bail!("`{key}` is not set (config file, --data or --set {key}=...)"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn overrides_apply_after_the_file() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "epochs=3\nseed=1\nnetwork=desk").unwrap();
        let cfg = load_config(
            f.path(),
            Some(Path::new("imgs")),
            &["seed=9".into(), "activation=relu".into()],
        )
        .unwrap();
        assert_eq!((cfg.epochs, cfg.seed), (3, 9));
        assert_eq!(cfg.train_data.as_deref(), Some("imgs"));
        assert_eq!(cfg.activation, Some(ActivationKind::Relu));
        assert!(load_config(f.path(), None, &["nonsense".into()]).is_err());
        assert!(load_config(f.path(), None, &["bogus=1".into()]).is_err());
    }

    #[test]
    fn builtin_networks_follow_config() {
        let mut cfg = TrainConfig {
            activation: Some(ActivationKind::Relu),
            precision: wig_core::Precision::F64,
            ..Default::default()
        };
        let spec = network_spec(&cfg, Task::Denoise).unwrap();
        assert_eq!(
            spec,
            reference_denoiser(Scale::Desk, ActivationKind::Relu)
                .with_precision(wig_core::Precision::F64)
        );
        cfg.network = "/nonexistent.net".into();
        assert!(network_spec(&cfg, Task::Classify).is_err());
    }
}
