use rand::seq::SliceRandom;
use rand::RngCore;

use crate::error::{Error, Result};
use crate::optim::{Batch, BatchSource, Target};
use crate::tensor::{Element, Tensor};

use super::augment::augment;
use super::cifar::LabeledImageSet;

/// Shuffled mini-batches over a labelled image set, optionally augmented.
pub struct ImageBatches<T: Element> {
    set: LabeledImageSet<T>,
    batch_size: usize,
    augment: bool,
    order: Vec<usize>,
    cursor: usize,
}

impl<T: Element> ImageBatches<T> {
    pub fn new(set: LabeledImageSet<T>, batch_size: usize, augment: bool) -> Result<Self> {
        if set.is_empty() || batch_size == 0 {
            return Err(Error::Config(
                "need at least one image and a positive batch size".into(),
            ));
        }
        let order = (0..set.len()).collect();
        Ok(ImageBatches {
            set,
            batch_size,
            augment,
            order,
            cursor: 0,
        })
    }
}

impl<T: Element> BatchSource<T> for ImageBatches<T> {
    fn batches_per_epoch(&self) -> usize {
        self.set.len().div_ceil(self.batch_size)
    }

    fn start_epoch(&mut self, rng: &mut dyn RngCore) -> Result<()> {
        self.order.shuffle(rng);
        self.cursor = 0;
        Ok(())
    }

    fn next_batch(&mut self, rng: &mut dyn RngCore) -> Result<Batch<T>> {
        let n = self.set.len();
        if self.cursor >= n {
            self.cursor = 0;
        }
        let end = (self.cursor + self.batch_size).min(n);
        let idx = &self.order[self.cursor..end];
        self.cursor = end;
        let mut images = Vec::with_capacity(idx.len());
        for &i in idx {
            let img = self.set.images.select(i)?;
            images.push(if self.augment {
                augment(&img, rng)?
            } else {
                img
            });
        }
        Ok(Batch {
            input: Tensor::stack(&images)?,
            target: Target::Labels(idx.iter().map(|&i| self.set.labels[i]).collect()),
        })
    }
}

/// Eval-mode predictions over a set, in chunks of `chunk` images.
pub fn predict_in_chunks<T: Element>(
    net: &crate::layers::Network<T>,
    images: &Tensor<T>,
    chunk: usize,
) -> Result<Tensor<T>> {
    let n = images.shape()[0];
    let mut outputs = Vec::new();
    let mut start = 0;
    while start < n {
        let end = (start + chunk.max(1)).min(n);
        let rows: Vec<_> = (start..end)
            .map(|i| images.select(i))
            .collect::<Result<_>>()?;
        let out = net.predict(&Tensor::stack(&rows)?)?;
        for r in 0..out.shape()[0] {
            outputs.push(out.select(r)?);
        }
        start = end;
    }
    Tensor::stack(&outputs)
}
