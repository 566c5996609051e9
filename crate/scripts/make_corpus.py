"""Export the grayscale denoising corpus from scikit-image's bundled samples.

Images are converted to 8-bit grayscale, downscaled so the longer side is at
most 256 px, and written as binary PGM (P5, maxval 255).
"""
import pathlib

import numpy as np
import skimage.data as data
from skimage.color import rgb2gray
from skimage.transform import resize

TRAIN = [
    "astronaut", "brick", "cat", "chelsea", "clock", "coffee", "coins",
    "grass", "gravel", "immunohistochemistry", "moon", "page", "rocket",
    "text", "hubble_deep_field",
]
TEST = ["camera"]
MAX_SIDE = 256


def to_gray_u8(img):
    img = np.asarray(img)
    if img.ndim == 3:
        img = rgb2gray(img[..., :3])
    else:
        img = img.astype(np.float64) / 255.0
    h, w = img.shape
    scale = min(1.0, MAX_SIDE / max(h, w))
    if scale < 1.0:
        img = resize(img, (round(h * scale), round(w * scale)), anti_aliasing=True)
    return np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)


def write_pgm(path, img):
    h, w = img.shape
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (w, h))
        f.write(img.tobytes())


def main():
    root = pathlib.Path(__file__).resolve().parent.parent / "data" / "images"
    for split, names in (("train", TRAIN), ("test", TEST)):
        out = root / split
        out.mkdir(parents=True, exist_ok=True)
        for name in names:
            write_pgm(out / f"{name}.pgm", to_gray_u8(getattr(data, name)()))


if __name__ == "__main__":
    main()
