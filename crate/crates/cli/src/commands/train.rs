use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wig_core::activations::ActivationKind;
use wig_core::data::{
    add_noise, load_cifar_split, load_image_dir, predict_in_chunks, CifarVariant, DenoiseBatches,
    ImageBatches, LabeledImageSet, Split,
};
use wig_core::fsutil::{create_dir_all, write_atomic};
use wig_core::layers::{save_checkpoint, Network, NetworkSpec};
use wig_core::metrics::{accuracy, cross_entropy, psnr, ssim, MetricReport};
use wig_core::optim::{train, RunReport, TrainConfig};
use wig_core::{Element, Error, Precision, Tensor};

use crate::args::TrainArgs;
use crate::setup::{load_config, network_spec, required, Task};

/// Images per forward pass when scoring a validation set.
const EVAL_CHUNK: usize = 256;
/// RNG stream of the fixed validation noise; 1 and 2 belong to the
/// training loop.
const VAL_NOISE_STREAM: u64 = 3;

pub const REPORT_CSV: &str = "report.csv";
pub const SUMMARY: &str = "summary.txt";
pub const TIMING_CSV: &str = "timing.csv";
pub const CONFIG_ECHO: &str = "config.txt";
pub const CHECKPOINT_DIR: &str = "checkpoint";
pub const COMPARISON_CSV: &str = "comparison.csv";

fn write_run<T: Element>(
    out: &Path,
    cfg: &TrainConfig,
    report: &RunReport,
    net: &Network<T>,
) -> Result<()> {
    create_dir_all(out)?;
    write_atomic(&out.join(REPORT_CSV), report.csv().as_bytes())?;
    write_atomic(&out.join(SUMMARY), report.summary().as_bytes())?;
    write_atomic(&out.join(TIMING_CSV), report.timing_csv().as_bytes())?;
    write_atomic(&out.join(CONFIG_ECHO), cfg.to_string().as_bytes())?;
    save_checkpoint(&out.join(CHECKPOINT_DIR), net)?;
    Ok(())
}

/// Keeps the last good parameters on disk when training diverges.
fn save_on_divergence<T: Element>(out: &Path, net: &Network<T>, err: Error) -> anyhow::Error {
    if matches!(err, Error::Diverged { .. }) {
        let dir = out.join(CHECKPOINT_DIR);
        match save_checkpoint(&dir, net) {
            Ok(()) => log::warn!("saved the last good parameters to {}", dir.display()),
            Err(e) => log::error!("could not save the last good parameters: {e}"),
        }
    }
    err.into()
}

/// Outcome of one training run, for the comparison table.
struct Outcome {
    activation: String,
    report: RunReport,
}

fn metric(report: &RunReport, name: &str) -> String {
    report
        .final_metrics
        .iter()
        .find(|m| m.name == name)
        .map(|m| m.value.to_string())
        .unwrap_or_default()
}

fn comparison(outcomes: &[Outcome], metric_names: &[&str]) -> String {
    let mut out = String::from("activation,final_train_loss,final_mean_gate");
    for m in metric_names {
        let _ = write!(out, ",{m}");
    }
    out.push('\n');
    for o in outcomes {
        let last = o.report.rows.last();
        let _ = write!(
            out,
            "{},{},{}",
            o.activation,
            last.map(|r| r.train_loss.to_string()).unwrap_or_default(),
            last.and_then(|r| r.mean_gate)
                .map(|g| g.to_string())
                .unwrap_or_default()
        );
        for m in metric_names {
            let _ = write!(out, ",{}", metric(&o.report, m));
        }
        out.push('\n');
    }
    out
}

fn run_all(
    args: &TrainArgs,
    task: Task,
    metric_names: &[&str],
    one: fn(&TrainConfig, &NetworkSpec, &Path) -> Result<RunReport>,
) -> Result<()> {
    let cfg = load_config(&args.config, args.data.as_deref(), &args.overrides)?;
    if args.compare.is_empty() {
        let spec = network_spec(&cfg, task)?;
        let report = one(&cfg, &spec, &args.out)?;
        print!("{}", report.summary());
        return Ok(());
    }
    let mut outcomes = Vec::new();
    for name in &args.compare {
        let kind: ActivationKind = name.parse().map_err(anyhow::Error::msg)?;
        let mut cfg = cfg.clone();
        cfg.activation = Some(kind);
        let spec = network_spec(&cfg, task)?;
        let report = one(&cfg, &spec, &args.out.join(kind.name()))?;
        outcomes.push(Outcome {
            activation: kind.name().to_string(),
            report,
        });
    }
    let table = comparison(&outcomes, metric_names);
    write_atomic(&args.out.join(COMPARISON_CSV), table.as_bytes())?;
    print!("{table}");
    Ok(())
}

pub fn classify(args: &TrainArgs) -> Result<()> {
    run_all(
        args,
        Task::Classify,
        &["val_accuracy", "val_cross_entropy"],
        |cfg, spec, out| match cfg.precision {
            Precision::F32 => classify_run::<f32>(cfg, spec, out),
            Precision::F64 => classify_run::<f64>(cfg, spec, out),
        },
    )
}

pub fn denoise(args: &TrainArgs) -> Result<()> {
    run_all(
        args,
        Task::Denoise,
        &["val_noisy_psnr", "val_psnr", "val_noisy_ssim", "val_ssim"],
        |cfg, spec, out| match cfg.precision {
            Precision::F32 => denoise_run::<f32>(cfg, spec, out),
            Precision::F64 => denoise_run::<f64>(cfg, spec, out),
        },
    )
}

fn load_split<T: Element>(
    root: &Path,
    variant: CifarVariant,
    split: Split,
    subset: Option<usize>,
) -> Result<LabeledImageSet<T>> {
    let set = load_cifar_split(root, variant, split)
        .with_context(|| format!("loading CIFAR data from {}", root.display()))?;
    Ok(match subset {
        Some(n) => set.take(n)?,
        None => set,
    })
}

/// Accuracy and mean cross-entropy of the network on a labelled set.
pub fn score<T: Element>(net: &Network<T>, set: &LabeledImageSet<T>) -> Result<(f64, f64)> {
    let logits = predict_in_chunks(net, &set.images, EVAL_CHUNK)?;
    Ok((
        accuracy(&logits, &set.labels)?,
        cross_entropy(&logits, &set.labels)?,
    ))
}

fn classify_run<T: Element>(
    cfg: &TrainConfig,
    spec: &NetworkSpec,
    out: &Path,
) -> Result<RunReport> {
    let variant = CifarVariant::from_classes(cfg.classes)?;
    let train_root = required(&cfg.train_data, "train_data")?;
    let val_root = cfg.val_data.as_deref().map(Path::new).unwrap_or(train_root);
    let train_set = load_split::<T>(train_root, variant, Split::Train, cfg.train_subset)?;
    let val_set = load_split::<T>(val_root, variant, Split::Test, cfg.val_subset)?;
    log::info!(
        "{} training and {} validation images",
        train_set.len(),
        val_set.len()
    );

    let mut net = Network::<T>::build(spec, cfg.seed, cfg.init_policy()?)?;
    let mut batches = ImageBatches::new(train_set, cfg.batch_size, cfg.augment)?;
    let mut validate = |net: &Network<T>| -> wig_core::Result<f64> {
        let logits = predict_in_chunks(net, &val_set.images, EVAL_CHUNK)?;
        accuracy(&logits, &val_set.labels)
    };
    let mut report = train(
        &mut net,
        &mut batches,
        cfg,
        "val_accuracy",
        Some(&mut validate),
    )
    .map_err(|e| save_on_divergence(out, &net, e))?;
    let (acc, ce) = score(&net, &val_set)?;
    report.final_metrics = vec![
        MetricReport::new("val_accuracy", acc, val_set.len()),
        MetricReport::new("val_cross_entropy", ce, val_set.len()),
    ];
    write_run(out, cfg, &report, &net)?;
    Ok(report)
}

/// Eval-mode restoration of a `[1, H, W]` image, clipped to `[0, 1]`.
pub fn restore<T: Element>(net: &Network<T>, noisy: &Tensor<T>) -> wig_core::Result<Tensor<T>> {
    let shape = noisy.shape().to_vec();
    let batch = noisy.reshape(&[1, shape[0], shape[1], shape[2]])?;
    let out = net.predict(&batch)?.reshape(&shape)?;
    Ok(out.map(|v| v.max(T::zero()).min(T::one())))
}

struct ValImage<T: Element> {
    clean: Tensor<T>,
    noisy: Tensor<T>,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    s / n.max(1) as f64
}

fn denoise_run<T: Element>(cfg: &TrainConfig, spec: &NetworkSpec, out: &Path) -> Result<RunReport> {
    let train_dir = required(&cfg.train_data, "train_data")?;
    let images: Vec<Tensor<T>> = load_image_dir(train_dir)?
        .into_iter()
        .map(|(_, t)| t)
        .collect();
    if images.is_empty() {
        bail!("no .pgm/.ppm images in {}", train_dir.display());
    }
    let Some(steps) = cfg.batches_per_epoch else {
        bail!("denoiser training needs `batches_per_epoch`");
    };
    let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    noise_rng.set_stream(VAL_NOISE_STREAM);
    let val: Vec<ValImage<T>> = match &cfg.val_data {
        Some(dir) => load_image_dir(Path::new(dir))?
            .into_iter()
            .map(|(_, clean)| ValImage {
                noisy: add_noise(&clean, cfg.val_sigma, &mut noise_rng),
                clean,
            })
            .collect(),
        None => Vec::new(),
    };
    log::info!(
        "{} training and {} validation images",
        images.len(),
        val.len()
    );

    let mut net = Network::<T>::build(spec, cfg.seed, cfg.init_policy()?)?;
    let mut batches = DenoiseBatches::new(
        images,
        cfg.batch_size,
        cfg.patch_size,
        (cfg.sigma_min, cfg.sigma_max),
        steps,
    )?;
    let mut validate = |net: &Network<T>| -> wig_core::Result<f64> {
        let mut total = 0.0;
        for v in &val {
            let restored = restore(net, &v.noisy)?;
            total += psnr(&v.clean, &restored, 1.0)?;
        }
        Ok(total / val.len() as f64)
    };
    let validator: Option<wig_core::optim::Validator<'_, T>> = if val.is_empty() {
        None
    } else {
        Some(&mut validate)
    };
    let mut report = train(&mut net, &mut batches, cfg, "val_psnr", validator)
        .map_err(|e| save_on_divergence(out, &net, e))?;
    if !val.is_empty() {
        let restored: Vec<Tensor<T>> = val
            .iter()
            .map(|v| restore(&net, &v.noisy))
            .collect::<wig_core::Result<_>>()?;
        let n = val.len();
        let pairs = || val.iter().zip(&restored);
        let noisy_psnr =
            mean(pairs().map(|(v, _)| psnr(&v.clean, &v.noisy, 1.0).unwrap_or(f64::NAN)));
        let out_psnr = mean(pairs().map(|(v, r)| psnr(&v.clean, r, 1.0).unwrap_or(f64::NAN)));
        let noisy_ssim =
            mean(pairs().map(|(v, _)| ssim(&v.clean, &v.noisy, 1.0).unwrap_or(f64::NAN)));
        let out_ssim = mean(pairs().map(|(v, r)| ssim(&v.clean, r, 1.0).unwrap_or(f64::NAN)));
        report.final_metrics = vec![
            MetricReport::new("val_noisy_psnr", noisy_psnr, n),
            MetricReport::new("val_psnr", out_psnr, n),
            MetricReport::new("val_noisy_ssim", noisy_ssim, n),
            MetricReport::new("val_ssim", out_ssim, n),
        ];
    }
    write_run(out, cfg, &report, &net)?;
    Ok(report)
}
