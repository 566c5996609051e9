use std::path::Path;

use crate::error::{Error, Result};
use crate::fsutil;
use crate::tensor::{Element, Tensor};

/// Decodes binary PGM (`P5`, one channel) or PPM (`P6`, three channels)
/// with maxval 255 into `[C, H, W]` with values in `[0, 1]`.
pub fn decode_pnm<T: Element>(bytes: &[u8]) -> Result<Tensor<T>> {
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => return Err(Error::format(0, "not a binary PGM/PPM (expected P5 or P6)")),
    };
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for (k, name) in ["width", "height", "maxval"].iter().enumerate() {
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        fields[k] = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .filter(|&v: &usize| v > 0)
            .ok_or_else(|| Error::format(start as u64, format!("bad {name}")))?;
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(Error::format(
            pos as u64,
            format!("unsupported maxval {maxval} (only 255)"),
        ));
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::format(pos as u64, "missing whitespace after header"));
    }
    pos += 1;
    let n = channels * width * height;
    let pixels = bytes
        .get(pos..pos + n)
        .ok_or_else(|| Error::format(bytes.len() as u64, format!("expected {n} pixel bytes")))?;
    if bytes.len() != pos + n {
        return Err(Error::format(
            (pos + n) as u64,
            "trailing bytes after pixel data",
        ));
    }
    let scale = 1.0 / 255.0;
    // interleaved RGB → planar
    let mut data = vec![T::zero(); n];
    let plane = width * height;
    for (i, &b) in pixels.iter().enumerate() {
        let (pixel, c) = (i / channels, i % channels);
        data[c * plane + pixel] = T::from_f64_lossy(b as f64 * scale);
    }
    Ok(Tensor::from_parts(vec![channels, height, width], data))
}

fn quantize<T: Element>(v: T) -> u8 {
    (v.to_f64_lossy().clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Encodes `[1, H, W]` as PGM or `[3, H, W]` as PPM with the canonical
/// header `P5\n<w> <h>\n255\n`, clamping to `[0, 1]` and rounding to 8 bits.
pub fn encode_pnm<T: Element>(img: &Tensor<T>) -> Result<Vec<u8>> {
    let (channels, height, width) = match *img.shape() {
        [c @ (1 | 3), h, w] => (c, h, w),
        [h, w] => (1, h, w),
        _ => {
            return Err(Error::dim(
                "encode_pnm",
                format!("expected [1|3, H, W], got {:?}", img.shape()),
            ))
        }
    };
    let magic = if channels == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{width} {height}\n255\n").into_bytes();
    let plane = width * height;
    let d = img.data();
    out.extend((0..channels * plane).map(|i| quantize(d[(i % channels) * plane + i / channels])));
    Ok(out)
}

pub fn load_pnm<T: Element>(path: &Path) -> Result<Tensor<T>> {
    decode_pnm(&fsutil::read(path)?).map_err(|e| match e {
        Error::Format { offset, msg } => Error::Config(format!(
            "{}: format error at byte {offset}: {msg}",
            path.display()
        )),
        e => e,
    })
}

pub fn save_pnm<T: Element>(path: &Path, img: &Tensor<T>) -> Result<()> {
    fsutil::write_atomic(path, &encode_pnm(img)?)
}

/// ITU-R BT.601 luma of a `[3, H, W]` image; `[1, H, W]` passes through.
pub fn to_grayscale<T: Element>(img: &Tensor<T>) -> Result<Tensor<T>> {
    match *img.shape() {
        [1, _, _] => Ok(img.clone()),
        [3, h, w] => {
            let d = img.data();
            let p = h * w;
            let (r, g, b) = (
                T::from_f64_lossy(0.299),
                T::from_f64_lossy(0.587),
                T::from_f64_lossy(0.114),
            );
            let data = (0..p)
                .map(|i| r * d[i] + g * d[p + i] + b * d[2 * p + i])
                .collect();
            Tensor::new(&[1, h, w], data)
        }
        _ => Err(Error::dim(
            "to_grayscale",
            format!("expected [1|3, H, W], got {:?}", img.shape()),
        )),
    }
}

/// Loads every `.pgm`/`.ppm` file in `dir` (sorted by file name) as a
/// grayscale `[1, H, W]` image.
pub fn load_image_dir<T: Element>(dir: &Path) -> Result<Vec<(String, Tensor<T>)>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::file(dir, e))?;
    let mut paths: Vec<_> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "pgm" | "ppm"))
        })
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let name = p
                .file_name()
                .unwrap_or_default()
                .to_string_lossy()
                .into_owned();
            Ok((name, to_grayscale(&load_pnm(&p)?)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tiny_pgm() {
        let mut bytes = b"P5 2 2 255 ".to_vec();
        bytes.extend([0, 51, 204, 255]);
        let t = decode_pnm::<f64>(&bytes).unwrap();
        assert_eq!(t.shape(), &[1, 2, 2]);
        assert_eq!(t.data(), &[0.0, 0.2, 0.8, 1.0]);
    }

    #[test]
    fn comments_and_ppm_planes() {
        let mut bytes = b"P6\n# made by hand\n2 1\n255\n".to_vec();
        bytes.extend([255, 0, 0, 0, 0, 255]);
        let t = decode_pnm::<f64>(&bytes).unwrap();
        assert_eq!(t.shape(), &[3, 1, 2]);
        assert_eq!(t.data(), &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(encode_pnm(&t).unwrap(), b"P6\n2 1\n255\n\xff\0\0\0\0\xff");
    }

    #[test]
    fn rejects_bad_headers() {
        for bad in [
            b"P2 2 2 255 abcd".to_vec(),
            b"P5 2 2 65535 abcdefgh".to_vec(),
            b"P5 2 2 255 abc".to_vec(),
            b"P5 2 2 255 abcde".to_vec(),
            b"P5 x 2 255 abcd".to_vec(),
            b"P5 2 2 255".to_vec(),
        ] {
            assert!(
                matches!(decode_pnm::<f32>(&bad), Err(Error::Format { .. })),
                "{}",
                String::from_utf8_lossy(&bad)
            );
        }
    }

    #[test]
    fn grayscale_weights() {
        let t = Tensor::<f64>::from_f64(&[3, 1, 1], &[1.0, 1.0, 1.0]).unwrap();
        assert!((to_grayscale(&t).unwrap().data()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn directory_loading_is_sorted() {
        let dir = tempfile::tempdir().unwrap();
        for (name, v) in [("b.pgm", 10u8), ("a.pgm", 20u8)] {
            let mut bytes = b"P5\n1 1\n255\n".to_vec();
            bytes.push(v);
            std::fs::write(dir.path().join(name), bytes).unwrap();
        }
        std::fs::write(dir.path().join("notes.txt"), "x").unwrap();
        let imgs = load_image_dir::<f32>(dir.path()).unwrap();
        let names: Vec<_> = imgs.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names, ["a.pgm", "b.pgm"]);
    }

    proptest! {
        #[test]
        fn canonical_files_round_trip(
            w in 1usize..9, h in 1usize..9, colour in any::<bool>(), seed in any::<u64>()
        ) {
            let c = if colour { 3 } else { 1 };
            let mut state = seed;
            let pixels: Vec<u8> = (0..w * h * c).map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (state >> 56) as u8
            }).collect();
            let mut file = format!("{}\n{w} {h}\n255\n", if colour { "P6" } else { "P5" }).into_bytes();
            file.extend(&pixels);
            let img = decode_pnm::<f32>(&file).unwrap();
            prop_assert_eq!(encode_pnm(&img).unwrap(), file);
        }
    }
}
