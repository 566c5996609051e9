use anyhow::{bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wig_core::data::{add_noise, load_pnm, save_pnm, to_grayscale};
use wig_core::layers::{load_checkpoint, read_checkpoint_spec, LossKind, Network};
use wig_core::metrics::{psnr, ssim};
use wig_core::{Element, Precision};

use crate::args::DenoiseArgs;
use crate::commands::train::restore;

fn grayscale<T: Element>(path: &std::path::Path) -> Result<wig_core::Tensor<T>> {
    let img = load_pnm::<T>(path)?;
    if img.shape()[0] != 1 {
        log::warn!("{}: converting color input to grayscale", path.display());
    }
    Ok(to_grayscale(&img)?)
}

fn denoise<T: Element>(args: &DenoiseArgs) -> Result<()> {
    let net: Network<T> = load_checkpoint(&args.checkpoint)
        .with_context(|| format!("loading checkpoint {}", args.checkpoint.display()))?;
    let input = grayscale::<T>(&args.input)?;
    let noisy = if args.sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
        add_noise(&input, args.sigma, &mut rng)
    } else {
        input.clone()
    };
    let restored = restore(&net, &noisy)?;
    save_pnm(&args.out, &restored)?;
    if let Some(path) = &args.noisy_out {
        save_pnm(path, &noisy)?;
    }
    let clean = match &args.clean {
        Some(path) => grayscale::<T>(path)?,
        None => input,
    };
    if clean.shape() != restored.shape() {
        bail!(
            "reference image is {:?} but the restored image is {:?}",
            clean.shape(),
            restored.shape()
        );
    }
    println!(
        "noisy: psnr {:.4} dB, ssim {:.4}",
        psnr(&clean, &noisy, 1.0)?,
        ssim(&clean, &noisy, 1.0)?
    );
    println!(
        "restored: psnr {:.4} dB, ssim {:.4}",
        psnr(&clean, &restored, 1.0)?,
        ssim(&clean, &restored, 1.0)?
    );
    Ok(())
}

pub fn run(args: &DenoiseArgs) -> Result<()> {
    if !(args.sigma.is_finite() && args.sigma >= 0.0) {
        bail!(
            "--sigma must be finite and non-negative, got {}",
            args.sigma
        );
    }
    let spec = read_checkpoint_spec(&args.checkpoint)
        .with_context(|| format!("reading checkpoint {}", args.checkpoint.display()))?;
    if spec.loss != LossKind::Mse {
        bail!("{} does not hold a denoiser", args.checkpoint.display());
    }
    match spec.precision {
        Precision::F32 => denoise::<f32>(args),
        Precision::F64 => denoise::<f64>(args),
    }
}
