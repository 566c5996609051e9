//! Dataset loaders, augmentation and the denoising patch pipeline.

mod augment;
mod cifar;
mod classify;
mod denoise;
mod netpbm;

pub use augment::{augment, flip_horizontal, AugmentDraw, BRIGHTNESS_RANGE, MAX_SHIFT};
pub use cifar::{
    decode_cifar, load_cifar, load_cifar_split, CifarVariant, LabeledImageSet, Split, CIFAR_PIXELS,
    CIFAR_SIDE,
};
pub use classify::{predict_in_chunks, ImageBatches};
pub use denoise::{add_noise, sample_denoise_batch, DenoiseBatches, DenoisePair, PIXEL_SCALE};
pub use netpbm::{decode_pnm, encode_pnm, load_image_dir, load_pnm, save_pnm, to_grayscale};
