use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::optim::{Batch, BatchSource, Target};
use crate::tensor::{Element, Tensor};

/// Noise levels are given on the 8-bit scale and divided by 255.
pub const PIXEL_SCALE: f64 = 255.0;

/// Adds i.i.d. Gaussian noise with std `sigma / 255` to every pixel and
/// clips to `[0, 1]`.
pub fn add_noise<T: Element>(clean: &Tensor<T>, sigma: f64, rng: &mut dyn RngCore) -> Tensor<T> {
    let std = sigma / PIXEL_SCALE;
    clean.map(|v| {
        let z: f64 = StandardNormal.sample(rng);
        (v + T::from_f64_lossy(z * std))
            .max(T::zero())
            .min(T::one())
    })
}

/// A clean `[1, P, P]` patch and its noisy copy.
#[derive(Clone, Debug, PartialEq)]
pub struct DenoisePair<T: Element> {
    pub clean: Tensor<T>,
    pub noisy: Tensor<T>,
    pub sigma: f64,
}

fn crop<T: Element>(img: &Tensor<T>, top: usize, left: usize, p: usize) -> Tensor<T> {
    let w = img.shape()[2];
    let d = img.data();
    Tensor::from_fn(&[1, p, p], |i| d[(top + i / p) * w + left + i % p])
}

/// Images of `[1, H, W]` large enough for `p × p` patches, warning about
/// the rest.
fn usable<T: Element>(images: &[Tensor<T>], p: usize) -> Result<Vec<usize>> {
    let mut keep = Vec::new();
    for (i, img) in images.iter().enumerate() {
        match *img.shape() {
            [1, h, w] if h >= p && w >= p => keep.push(i),
            [1, h, w] => {
                log::warn!("skipping image {i}: {h}x{w} is smaller than the {p}x{p} patch")
            }
            _ => {
                return Err(Error::dim(
                    "denoise sampler",
                    format!("image {i} is {:?}, expected [1, H, W]", img.shape()),
                ))
            }
        }
    }
    if keep.is_empty() {
        return Err(Error::Config(format!("no image is at least {p}x{p}")));
    }
    Ok(keep)
}

/// Draws `batch` patches: a uniformly chosen image, a uniform crop
/// position, and `σ` uniform in `sigma_range` per patch.
pub fn sample_denoise_batch<T: Element>(
    images: &[Tensor<T>],
    batch: usize,
    p: usize,
    sigma_range: (f64, f64),
    rng: &mut dyn RngCore,
) -> Result<Vec<DenoisePair<T>>> {
    let keep = usable(images, p)?;
    sample_from(images, &keep, batch, p, sigma_range, rng)
}

fn sample_from<T: Element>(
    images: &[Tensor<T>],
    keep: &[usize],
    batch: usize,
    p: usize,
    (lo, hi): (f64, f64),
    rng: &mut dyn RngCore,
) -> Result<Vec<DenoisePair<T>>> {
    if !(0.0 <= lo && lo <= hi) {
        return Err(Error::Config(format!("bad noise range [{lo}, {hi}]")));
    }
    (0..batch)
        .map(|_| {
            let img = &images[keep[rng.random_range(0..keep.len())]];
            let (h, w) = (img.shape()[1], img.shape()[2]);
            let top = rng.random_range(0..=h - p);
            let left = rng.random_range(0..=w - p);
            let sigma = if lo == hi {
                lo
            } else {
                rng.random_range(lo..hi)
            };
            let clean = crop(img, top, left, p);
            let noisy = add_noise(&clean, sigma, rng);
            Ok(DenoisePair {
                clean,
                noisy,
                sigma,
            })
        })
        .collect()
}

/// Endless stream of noisy/clean patch batches for residual denoiser
/// training.
pub struct DenoiseBatches<T: Element> {
    images: Vec<Tensor<T>>,
    keep: Vec<usize>,
    batch_size: usize,
    patch: usize,
    sigma_range: (f64, f64),
    batches_per_epoch: usize,
}

impl<T: Element> DenoiseBatches<T> {
    pub fn new(
        images: Vec<Tensor<T>>,
        batch_size: usize,
        patch: usize,
        sigma_range: (f64, f64),
        batches_per_epoch: usize,
    ) -> Result<Self> {
        let keep = usable(&images, patch)?;
        Ok(DenoiseBatches {
            images,
            keep,
            batch_size,
            patch,
            sigma_range,
            batches_per_epoch,
        })
    }
}

impl<T: Element> BatchSource<T> for DenoiseBatches<T> {
    fn batches_per_epoch(&self) -> usize {
        self.batches_per_epoch
    }

    fn next_batch(&mut self, rng: &mut dyn RngCore) -> Result<Batch<T>> {
        let pairs = sample_from(
            &self.images,
            &self.keep,
            self.batch_size,
            self.patch,
            self.sigma_range,
            rng,
        )?;
        let noisy: Vec<_> = pairs.iter().map(|p| p.noisy.clone()).collect();
        let clean: Vec<_> = pairs.into_iter().map(|p| p.clean).collect();
        Ok(Batch {
            input: Tensor::stack(&noisy)?,
            target: Target::Image(Tensor::stack(&clean)?),
        })
    }
}
