use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::fsutil;
use crate::tensor::{Element, Tensor};

pub const CIFAR_SIDE: usize = 32;
pub const CIFAR_PIXELS: usize = 3 * CIFAR_SIDE * CIFAR_SIDE;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CifarVariant {
    /// One label byte per record.
    Cifar10,
    /// Coarse then fine label byte; the fine label is used.
    Cifar100,
}

impl CifarVariant {
    pub fn from_classes(classes: usize) -> Result<Self> {
        match classes {
            10 => Ok(CifarVariant::Cifar10),
            100 => Ok(CifarVariant::Cifar100),
            k => Err(Error::Config(format!("no CIFAR variant with {k} classes"))),
        }
    }

    pub fn classes(self) -> usize {
        match self {
            CifarVariant::Cifar10 => 10,
            CifarVariant::Cifar100 => 100,
        }
    }

    pub fn label_bytes(self) -> usize {
        match self {
            CifarVariant::Cifar10 => 1,
            CifarVariant::Cifar100 => 2,
        }
    }

    pub fn record_len(self) -> usize {
        self.label_bytes() + CIFAR_PIXELS
    }

    /// Standard file names of the binary distribution inside `root`.
    pub fn files(self, root: &Path, split: Split) -> Vec<PathBuf> {
        match (self, split) {
            (CifarVariant::Cifar10, Split::Train) => (1..=5)
                .map(|i| root.join(format!("data_batch_{i}.bin")))
                .collect(),
            (CifarVariant::Cifar10, Split::Test) => vec![root.join("test_batch.bin")],
            (CifarVariant::Cifar100, Split::Train) => vec![root.join("train.bin")],
            (CifarVariant::Cifar100, Split::Test) => vec![root.join("test.bin")],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Images `[N, C, H, W]` with values in `[0, 1]` and their labels.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledImageSet<T: Element> {
    pub images: Tensor<T>,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl<T: Element> LabeledImageSet<T> {
    pub fn new(images: Tensor<T>, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if images.rank() != 4 || images.shape()[0] != labels.len() {
            return Err(Error::shape("image set", images.shape(), &[labels.len()]));
        }
        if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= classes) {
            return Err(Error::Contract(format!(
                "label {l} of sample {i} is not below {classes}"
            )));
        }
        Ok(LabeledImageSet {
            images,
            labels,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// The first `n` samples (all of them when `n` is larger).
    pub fn take(&self, n: usize) -> Result<Self> {
        let n = n.min(self.len());
        let per: usize = self.images.shape()[1..].iter().product();
        let mut shape = self.images.shape().to_vec();
        shape[0] = n;
        Ok(LabeledImageSet {
            images: Tensor::new(&shape, self.images.data()[..n * per].to_vec())?,
            labels: self.labels[..n].to_vec(),
            classes: self.classes,
        })
    }

    pub fn concat(parts: Vec<Self>) -> Result<Self> {
        let classes = parts.first().map_or(0, |p| p.classes);
        let mut labels = Vec::new();
        let mut data = Vec::new();
        let mut shape = parts
            .first()
            .map(|p| p.images.shape().to_vec())
            .ok_or_else(|| Error::Config("no image sets to concatenate".into()))?;
        for p in &parts {
            if p.images.shape()[1..] != shape[1..] || p.classes != classes {
                return Err(Error::shape("concat", p.images.shape(), &shape));
            }
            labels.extend_from_slice(&p.labels);
            data.extend_from_slice(p.images.data());
        }
        shape[0] = labels.len();
        Self::new(Tensor::new(&shape, data)?, labels, classes)
    }
}

/// Decodes CIFAR binary records: label byte(s) then 1024 red, 1024 green
/// and 1024 blue bytes in row-major order.
pub fn decode_cifar<T: Element>(bytes: &[u8], variant: CifarVariant) -> Result<LabeledImageSet<T>> {
    let rec = variant.record_len();
    if !bytes.len().is_multiple_of(rec) {
        let offset = (bytes.len() / rec * rec) as u64;
        return Err(Error::format(
            offset,
            format!(
                "truncated record: {} trailing bytes, records are {rec} bytes",
                bytes.len() % rec
            ),
        ));
    }
    let n = bytes.len() / rec;
    if n == 0 {
        return Err(Error::format(0, "no records"));
    }
    let classes = variant.classes();
    let scale = T::from_f64_lossy(1.0 / 255.0);
    let mut labels = Vec::with_capacity(n);
    let mut data = Vec::with_capacity(n * CIFAR_PIXELS);
    for (i, r) in bytes.chunks_exact(rec).enumerate() {
        let label_at = variant.label_bytes() - 1;
        let label = r[label_at] as usize;
        if label >= classes {
            return Err(Error::format(
                (i * rec + label_at) as u64,
                format!("record {i}: label {label} is not below {classes}"),
            ));
        }
        labels.push(label);
        data.extend(
            r[variant.label_bytes()..]
                .iter()
                .map(|&b| T::from_f64_lossy(b as f64) * scale),
        );
    }
    LabeledImageSet::new(
        Tensor::from_parts(vec![n, 3, CIFAR_SIDE, CIFAR_SIDE], data),
        labels,
        classes,
    )
}

pub fn load_cifar<T: Element>(path: &Path, variant: CifarVariant) -> Result<LabeledImageSet<T>> {
    let bytes = fsutil::read(path)?;
    decode_cifar(&bytes, variant).map_err(|e| match e {
        Error::Format { offset, msg } => Error::Config(format!(
            "{}: format error at byte {offset}: {msg}",
            path.display()
        )),
        e => e,
    })
}

/// Loads and concatenates the standard files of one split under `root`.
pub fn load_cifar_split<T: Element>(
    root: &Path,
    variant: CifarVariant,
    split: Split,
) -> Result<LabeledImageSet<T>> {
    let parts = variant
        .files(root, split)
        .iter()
        .map(|p| load_cifar(p, variant))
        .collect::<Result<Vec<_>>>()?;
    LabeledImageSet::concat(parts)
}
