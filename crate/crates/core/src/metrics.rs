//! Classification and image-quality metrics.

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Reported when the mean squared error is exactly zero.
pub const PSNR_CAP_DB: f64 = 99.0;

/// Side of the square SSIM window.
pub const SSIM_WINDOW: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub name: String,
    pub value: f64,
    pub count: usize,
}

impl MetricReport {
    pub fn new(name: impl Into<String>, value: f64, count: usize) -> Self {
        MetricReport {
            name: name.into(),
            value,
            count,
        }
    }
}

fn check_labels(labels: &[usize], batch: usize, classes: usize) -> Result<()> {
    if labels.len() != batch {
        return Err(Error::shape("labels", &[batch, classes], &[labels.len()]));
    }
    if classes < 2 {
        return Err(Error::Contract(format!(
            "need at least 2 classes, got {classes}"
        )));
    }
    if let Some((i, &y)) = labels.iter().enumerate().find(|(_, &y)| y >= classes) {
        return Err(Error::Contract(format!(
            "label {y} at index {i} is out of range for {classes} classes"
        )));
    }
    Ok(())
}

/// Index of the largest element; ties resolve to the lowest index.
pub fn argmax<T: Element>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Fraction of rows of `logits: [B, K]` whose argmax equals the label.
pub fn accuracy<T: Element>(logits: &Tensor<T>, labels: &[usize]) -> Result<f64> {
    let &[batch, classes] = logits.shape() else {
        return Err(Error::dim(
            "accuracy",
            format!("logits must be [B, K], got {:?}", logits.shape()),
        ));
    };
    check_labels(labels, batch, classes)?;
    let correct = logits
        .data()
        .chunks_exact(classes)
        .zip(labels)
        .filter(|(row, &y)| argmax(row) == y)
        .count();
    Ok(correct as f64 / batch as f64)
}

/// Mean softmax cross-entropy and the softmax probabilities.
pub(crate) fn softmax_cross_entropy_raw<T: Element>(
    logits: &[T],
    classes: usize,
    labels: &[usize],
) -> Result<(T, Vec<T>)> {
    let batch = logits.len() / classes;
    check_labels(labels, batch, classes)?;
    let mut probs = Vec::with_capacity(logits.len());
    let mut total = T::zero();
    for (row, &y) in logits.chunks_exact(classes).zip(labels) {
        let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        let denom = row.iter().fold(T::zero(), |acc, &v| acc + (v - max).exp());
        let log_denom = denom.ln();
        total = total + (log_denom - (row[y] - max));
        probs.extend(row.iter().map(|&v| (v - max).exp() / denom));
    }
    Ok((total / T::from_usize(batch).expect("batch fits"), probs))
}

/// Mean categorical cross-entropy of softmax(`logits`).
pub fn cross_entropy<T: Element>(logits: &Tensor<T>, labels: &[usize]) -> Result<f64> {
    let &[_, classes] = logits.shape() else {
        return Err(Error::dim(
            "cross_entropy",
            format!("logits must be [B, K], got {:?}", logits.shape()),
        ));
    };
    Ok(softmax_cross_entropy_raw(logits.data(), classes, labels)?
        .0
        .to_f64_lossy())
}

pub fn mse<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::shape("mse", a.shape(), b.shape()));
    }
    let s: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x.to_f64_lossy() - y.to_f64_lossy();
            d * d
        })
        .sum();
    Ok(s / a.numel() as f64)
}

/// Peak signal-to-noise ratio in dB, capped at [`PSNR_CAP_DB`].
pub fn psnr<T: Element>(reference: &Tensor<T>, test: &Tensor<T>, maxval: f64) -> Result<f64> {
    let m =
        mse(reference, test).map_err(|_| Error::shape("psnr", reference.shape(), test.shape()))?;
    if m == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (maxval * maxval / m).log10()).min(PSNR_CAP_DB))
}

/// Single-scale SSIM over all 8×8 windows at stride 1 with uniform
/// weighting, averaged. Accepts `[H, W]` or single-channel `[1, H, W]`.
pub fn ssim<T: Element>(reference: &Tensor<T>, test: &Tensor<T>, maxval: f64) -> Result<f64> {
    if reference.shape() != test.shape() {
        return Err(Error::shape("ssim", reference.shape(), test.shape()));
    }
    let (h, w) = match *reference.shape() {
        [h, w] | [1, h, w] => (h, w),
        ref s => {
            return Err(Error::dim(
                "ssim",
                format!("expected a grayscale image, got {s:?}"),
            ))
        }
    };
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::dim(
            "ssim",
            format!("image {h}×{w} is smaller than the {SSIM_WINDOW}×{SSIM_WINDOW} window"),
        ));
    }
    let a: Vec<f64> = reference.to_f64_vec();
    let b: Vec<f64> = test.to_f64_vec();
    if a == b {
        return Ok(1.0);
    }
    let c1 = (0.01 * maxval).powi(2);
    let c2 = (0.03 * maxval).powi(2);

    // Summed-area tables of a, b, a², b², ab make every window O(1).
    let table = |f: &dyn Fn(usize) -> f64| {
        let mut t = vec![0.0; (h + 1) * (w + 1)];
        for y in 0..h {
            let mut row = 0.0;
            for x in 0..w {
                row += f(y * w + x);
                t[(y + 1) * (w + 1) + x + 1] = t[y * (w + 1) + x + 1] + row;
            }
        }
        t
    };
    let sa = table(&|i| a[i]);
    let sb = table(&|i| b[i]);
    let saa = table(&|i| a[i] * a[i]);
    let sbb = table(&|i| b[i] * b[i]);
    let sab = table(&|i| a[i] * b[i]);
    let n = (SSIM_WINDOW * SSIM_WINDOW) as f64;
    let window_sum = |t: &[f64], y: usize, x: usize| {
        let (y1, x1) = (y + SSIM_WINDOW, x + SSIM_WINDOW);
        t[y1 * (w + 1) + x1] - t[y * (w + 1) + x1] - t[y1 * (w + 1) + x] + t[y * (w + 1) + x]
    };

    let mut total = 0.0;
    let mut count = 0usize;
    for y in 0..=h - SSIM_WINDOW {
        for x in 0..=w - SSIM_WINDOW {
            let mu_a = window_sum(&sa, y, x) / n;
            let mu_b = window_sum(&sb, y, x) / n;
            let var_a = (window_sum(&saa, y, x) / n - mu_a * mu_a).max(0.0);
            let var_b = (window_sum(&sbb, y, x) / n - mu_b * mu_b).max(0.0);
            let cov = window_sum(&sab, y, x) / n - mu_a * mu_b;
            let num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
            let den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
            total += num / den;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn logits(rows: &[&[f64]]) -> Tensor<f64> {
        let k = rows[0].len();
        let data: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Tensor::from_f64(&[rows.len(), k], &data).unwrap()
    }

    #[test]
    fn accuracy_examples() {
        let l = logits(&[&[0.1, 0.9], &[2.0, -1.0], &[0.0, 3.0], &[1.0, 0.0]]);
        assert_eq!(accuracy(&l, &[1, 0, 1, 0]).unwrap(), 1.0);
        assert_eq!(accuracy(&l, &[1, 0, 1, 1]).unwrap(), 0.75);
        let uniform = Tensor::<f64>::zeros(&[5, 4]);
        assert_eq!(accuracy(&uniform, &[0; 5]).unwrap(), 1.0);
        assert!(accuracy(&l, &[1, 0, 2, 0]).is_err());
        assert!(accuracy(&Tensor::<f64>::zeros(&[2, 1]), &[0, 0]).is_err());
    }

    #[test]
    fn accuracy_is_invariant_under_monotone_maps() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let l = Tensor::<f64>::from_fn(&[50, 7], |_| rng.random_range(-3.0..3.0));
        let labels: Vec<usize> = (0..50).map(|i| i % 7).collect();
        let base = accuracy(&l, &labels).unwrap();
        assert_eq!(accuracy(&l.map(|v| v.exp()), &labels).unwrap(), base);
        assert_eq!(accuracy(&l.map(|v| 3.0 * v - 1.0), &labels).unwrap(), base);
    }

    #[test]
    fn cross_entropy_examples() {
        let u = Tensor::<f64>::zeros(&[3, 10]);
        assert!((cross_entropy(&u, &[0, 4, 9]).unwrap() - 10f64.ln()).abs() < 1e-12);
        let mut prev = f64::INFINITY;
        for margin in [1.0, 5.0, 20.0, 60.0] {
            let l = logits(&[&[margin, 0.0, 0.0]]);
            let ce = cross_entropy(&l, &[0]).unwrap();
            assert!(ce < prev);
            prev = ce;
        }
        assert!(prev < 1e-20);
        // extreme logits stay finite
        let l = logits(&[&[1e4, -1e4]]);
        assert!(cross_entropy(&l, &[1]).unwrap().is_finite());
    }

    #[test]
    fn psnr_examples() {
        let a = Tensor::<f64>::full(&[1, 4, 4], 0.3);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), PSNR_CAP_DB);
        let zero = Tensor::<f64>::zeros(&[1, 4, 4]);
        let gray = Tensor::<f64>::full(&[1, 4, 4], 128.0 / 255.0);
        let p = psnr(&zero, &gray, 1.0).unwrap();
        let closed_form = 20.0 * (255.0f64 / 128.0).log10();
        assert!((p - closed_form).abs() < 1e-12, "{p}");
        assert!((p - 5.986_60).abs() < 1e-5, "{p}");
        assert_eq!(p, psnr(&gray, &zero, 1.0).unwrap());
        assert!(psnr(&zero, &Tensor::zeros(&[1, 4, 5]), 1.0).is_err());
    }

    #[test]
    fn psnr_under_known_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let normal = Normal::new(0.0, 25.0 / 255.0).unwrap();
        let clean = Tensor::<f64>::full(&[1, 1000, 1000], 0.5);
        let noisy = clean.map(|v| v + normal.sample(&mut rng));
        let p = psnr(&clean, &noisy, 1.0).unwrap();
        assert!((p - 20.17).abs() < 0.1, "{p}");
    }

    #[test]
    fn ssim_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = Tensor::<f64>::from_fn(&[32, 40], |_| rng.random_range(0.0..1.0));
        assert_eq!(ssim(&a, &a, 1.0).unwrap(), 1.0);

        let mid = Tensor::<f64>::full(&[16, 16], 0.5);
        let shifted = mid.map(|v| v + 0.1);
        let s = ssim(&mid, &shifted, 1.0).unwrap();
        // constant images: only the luminance term (2·0.5·0.6+c1)/(0.25+0.36+c1)
        let c1 = 0.01f64.powi(2);
        let expected = (2.0 * 0.5 * 0.6 + c1) / (0.25 + 0.36 + c1);
        assert!((s - expected).abs() < 1e-12);
        assert!(s > 0.9 && s < 1.0);

        let b = Tensor::<f64>::from_fn(&[256, 256], |_| rng.random_range(0.0..1.0));
        let c = Tensor::<f64>::from_fn(&[256, 256], |_| rng.random_range(0.0..1.0));
        assert!(ssim(&b, &c, 1.0).unwrap().abs() < 0.1);
        assert!((ssim(&b, &c, 1.0).unwrap() - ssim(&c, &b, 1.0).unwrap()).abs() < 1e-15);

        assert!(ssim(
            &Tensor::<f64>::zeros(&[7, 30]),
            &Tensor::zeros(&[7, 30]),
            1.0
        )
        .is_err());
    }
}
