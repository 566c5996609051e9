use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

pub const MAX_SHIFT: i32 = 4;
pub const BRIGHTNESS_RANGE: (f64, f64) = (0.9, 1.1);

/// One random draw of the training augmentation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentDraw {
    pub flip: bool,
    /// Content moves down by `dy` and right by `dx`; vacated pixels are 0.
    pub dy: i32,
    pub dx: i32,
    pub brightness: f64,
}

impl AugmentDraw {
    pub const IDENTITY: AugmentDraw = AugmentDraw {
        flip: false,
        dy: 0,
        dx: 0,
        brightness: 1.0,
    };

    /// Flip with probability 0.5, shifts uniform in ±4 px, brightness
    /// uniform in [0.9, 1.1].
    pub fn sample(rng: &mut dyn RngCore) -> Self {
        AugmentDraw {
            flip: rng.random_bool(0.5),
            dy: rng.random_range(-MAX_SHIFT..=MAX_SHIFT),
            dx: rng.random_range(-MAX_SHIFT..=MAX_SHIFT),
            brightness: rng.random_range(BRIGHTNESS_RANGE.0..=BRIGHTNESS_RANGE.1),
        }
    }

    /// Applies flip, then shift, then brightness with clipping to [0, 1].
    pub fn apply<T: Element>(&self, img: &Tensor<T>) -> Result<Tensor<T>> {
        let &[c, h, w] = img.shape() else {
            return Err(Error::dim(
                "augment",
                format!("expected [C, H, W], got {:?}", img.shape()),
            ));
        };
        let src = img.data();
        let scale = T::from_f64_lossy(self.brightness);
        let mut out = vec![T::zero(); src.len()];
        for ch in 0..c {
            for y in 0..h {
                let sy = y as i64 - self.dy as i64;
                if sy < 0 || sy >= h as i64 {
                    continue;
                }
                for x in 0..w {
                    let sx = x as i64 - self.dx as i64;
                    if sx < 0 || sx >= w as i64 {
                        continue;
                    }
                    let sx = if self.flip {
                        w - 1 - sx as usize
                    } else {
                        sx as usize
                    };
                    let v = src[(ch * h + sy as usize) * w + sx];
                    out[(ch * h + y) * w + x] = if self.brightness == 1.0 {
                        v
                    } else {
                        (v * scale).max(T::zero()).min(T::one())
                    };
                }
            }
        }
        Tensor::new(img.shape(), out)
    }
}

/// Random geometric and photometric augmentation of one `[C, H, W]`
/// image; use only for training data.
pub fn augment<T: Element>(img: &Tensor<T>, rng: &mut dyn RngCore) -> Result<Tensor<T>> {
    AugmentDraw::sample(rng).apply(img)
}

pub fn flip_horizontal<T: Element>(img: &Tensor<T>) -> Result<Tensor<T>> {
    AugmentDraw {
        flip: true,
        ..AugmentDraw::IDENTITY
    }
    .apply(img)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn image(seed: u64) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(&[3, 6, 5], |_| rng.random_range(0.0..=1.0))
    }

    #[test]
    fn identity_draw_is_a_no_op() {
        let img = image(1);
        assert_eq!(AugmentDraw::IDENTITY.apply(&img).unwrap(), img);
    }

    #[test]
    fn double_flip_restores() {
        let img = image(2);
        let once = flip_horizontal(&img).unwrap();
        assert_ne!(once, img);
        assert_eq!(flip_horizontal(&once).unwrap(), img);
        assert_eq!(once.data()[0], img.data()[4]);
    }

    #[test]
    fn brightness_clips() {
        let img = Tensor::<f64>::full(&[1, 4, 4], 1.0);
        let d = AugmentDraw {
            brightness: 1.1,
            ..AugmentDraw::IDENTITY
        };
        assert_eq!(d.apply(&img).unwrap(), img);
    }

    #[test]
    fn shift_moves_content_and_zero_fills() {
        let img = Tensor::<f64>::from_fn(&[1, 3, 3], |i| (i + 1) as f64 / 10.0);
        let d = AugmentDraw {
            dy: 1,
            dx: -1,
            ..AugmentDraw::IDENTITY
        };
        let out = d.apply(&img).unwrap();
        assert_eq!(out.data(), &[0.0, 0.0, 0.0, 0.2, 0.3, 0.0, 0.5, 0.6, 0.0]);
    }

    #[test]
    fn draws_are_seed_deterministic() {
        let img = image(3);
        let a = augment(&img, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let b = augment(&img, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn preserves_shape_and_range(seed in any::<u64>()) {
            let img = image(seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = AugmentDraw::sample(&mut rng);
            prop_assert!(d.dx.abs() <= MAX_SHIFT && d.dy.abs() <= MAX_SHIFT);
            prop_assert!((0.9..=1.1).contains(&d.brightness));
            let out = d.apply(&img).unwrap();
            prop_assert_eq!(out.shape(), img.shape());
            prop_assert!(out.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }
}
