#!/usr/bin/env python3
"""Regenerate the desk-scale dataset under data/.

Gray-scale images come from the sample images bundled with scikit-image
(luma via skimage.color.rgb2gray, then 2x area downscaling). Blur kernels are
synthetic camera-shake trajectories. Everything is seeded, so rerunning the
script reproduces the committed files.
"""

import argparse
import pathlib

import numpy as np
import skimage.color
import skimage.data
import skimage.transform

TRAIN = ["rocket", "coins", "clock", "moon", "brick", "grass", "gravel",
         "immunohistochemistry", "page", "text", "cell"]
TEST = ["camera", "astronaut", "coffee", "chelsea"]
KERNEL_SIZES = [11, 13, 15, 17, 19]


def to_gray_u8(img):
    img = np.asarray(img)
    if img.ndim == 3:
        img = skimage.color.rgb2gray(img[..., :3])
    else:
        img = img.astype(np.float64) / 255.0
    h, w = img.shape
    if min(h, w) >= 256:
        img = skimage.transform.resize(img, (h // 2, w // 2), anti_aliasing=True)
    return np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)


def write_pgm(path, img):
    h, w = img.shape
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (w, h))
        f.write(img.tobytes())


def shake_kernel(size, rng):
    # Random-walk trajectory with inertia, rasterized by bilinear splatting.
    steps = 4000
    pos = np.zeros(2)
    vel = rng.normal(size=2)
    vel /= np.linalg.norm(vel)
    pts = []
    for _ in range(steps):
        vel = 0.995 * vel + 0.08 * rng.normal(size=2) - 0.0005 * pos
        vel /= max(np.linalg.norm(vel), 1e-9)
        pos = pos + 0.01 * size * vel / 8.0
        pts.append(pos.copy())
    pts = np.array(pts)
    pts -= pts.mean(axis=0)
    extent = np.abs(pts).max()
    pts *= (size / 2.0 - 1.0) / max(extent, 1e-9)
    pts += (size - 1) / 2.0
    k = np.zeros((size, size))
    for y, x in pts:
        y0, x0 = int(np.floor(y)), int(np.floor(x))
        fy, fx = y - y0, x - x0
        for dy, wy in ((0, 1 - fy), (1, fy)):
            for dx, wx in ((0, 1 - fx), (1, fx)):
                yy, xx = y0 + dy, x0 + dx
                if 0 <= yy < size and 0 <= xx < size:
                    k[yy, xx] += wy * wx
    return k / k.sum()


def write_kernel(path, k):
    with open(path, "w") as f:
        f.write("%d %d\n" % k.shape)
        for row in k:
            f.write(" ".join("%.10g" % v for v in row) + "\n")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=str(pathlib.Path(__file__).resolve().parent.parent / "data"))
    args = ap.parse_args()
    out = pathlib.Path(args.out)
    for sub in ("train", "test", "kernels"):
        (out / sub).mkdir(parents=True, exist_ok=True)

    for split, names in (("train", TRAIN), ("test", TEST)):
        for name in names:
            write_pgm(out / split / f"{name}.pgm", to_gray_u8(getattr(skimage.data, name)()))

    rng = np.random.default_rng(20190401)
    for i, size in enumerate(KERNEL_SIZES):
        write_kernel(out / "kernels" / f"shake{i + 1}.txt", shake_kernel(size, rng))


if __name__ == "__main__":
    main()
