"""Manifest ingestion, image preprocessing/augmentation, splits and the synthetic toyset.

Images are float arrays of shape (H, W, C) with values in [0, 1].  The only
on-disk image format is binary PPM (P6, 8 bit).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

MANIFEST_HEADER = ("path", "species", "edible")
SIGMA_FLOOR = 1e-6


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class SampleRecord:
    image_path: str
    species_id: int
    edible: bool


@dataclass
class NormStats:
    mean: np.ndarray
    std: np.ndarray

    def to_dict(self) -> dict:
        return {"mean": [float(v) for v in self.mean], "std": [float(v) for v in self.std]}


@dataclass
class AugmentSpec:
    resize_to: tuple = (16, 16)
    max_rotation_deg: float = 20.0
    sharpness_prob: float = 0.5
    sharpness_range: tuple = (0.0, 2.0)
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.sharpness_prob <= 1.0:
            raise ValueError("sharpness probability must lie in [0, 1]")


# -- manifest / PPM ---------------------------------------------------------


def read_manifest(path) -> list:
    path = Path(path)
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != MANIFEST_HEADER:
            raise DataError(f"{path}: manifest header must be {','.join(MANIFEST_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise DataError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
            img, species, edible = (r.strip() for r in row)
            if edible not in ("0", "1"):
                raise DataError(f"{path}:{lineno}: edible must be 0 or 1")
            records.append(SampleRecord(img, int(species), edible == "1"))
    return records


def write_manifest(path, records: Iterable[SampleRecord]):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_HEADER)
        for r in records:
            w.writerow([r.image_path, r.species_id, int(r.edible)])


def resolve(manifest_path, record: SampleRecord) -> Path:
    p = Path(record.image_path)
    return p if p.is_absolute() else Path(manifest_path).parent / p


def _ppm_tokens(buf: bytes, count: int):
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(buf) and buf[pos:pos + 1].isspace():
            pos += 1
        if buf[pos:pos + 1] == b"#":
            while pos < len(buf) and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(buf) and not buf[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise DataError("truncated PPM header")
        tokens.append(buf[start:pos])
    return tokens, pos + 1  # exactly one whitespace byte precedes the raster


def read_ppm(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    (magic, w, h, maxval), pos = _ppm_tokens(buf, 4)
    if magic != b"P6":
        raise DataError(f"{path}: not a binary PPM (P6)")
    w, h, maxval = int(w), int(h), int(maxval)
    if maxval != 255:
        raise DataError(f"{path}: only 8-bit PPM is supported")
    raster = np.frombuffer(buf, dtype=np.uint8, count=w * h * 3, offset=pos)
    return raster.reshape(h, w, 3).astype(np.float64) / 255.0


def to_bytes(image: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(np.asarray(image) * 255.0), 0, 255).astype(np.uint8)


def write_ppm(path, image: np.ndarray):
    img = np.asarray(image)
    if img.ndim == 2:
        img = np.repeat(img[:, :, None], 3, axis=2)
    if img.shape[2] != 3:
        raise DataError("PPM images need three channels")
    raster = img if img.dtype == np.uint8 else to_bytes(img)
    h, w, _ = raster.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(raster).tobytes())


# -- normalization ----------------------------------------------------------


def compute_norm_stats(images: Sequence[np.ndarray]) -> NormStats:
    """Population mean and std per channel over every pixel of every image."""
    images = list(images)
    if not images:
        raise DataError("cannot compute statistics of an empty dataset")
    stack = np.concatenate([np.asarray(im, dtype=np.float64).reshape(-1, im.shape[-1]) for im in images])
    mean, std = stack.mean(axis=0), stack.std(axis=0)
    # constant channels: report the exact value and sigma 0 rather than rounding residue
    flat = stack.min(axis=0) == stack.max(axis=0)
    return NormStats(np.where(flat, stack[0], mean), np.where(flat, 0.0, std))


def normalize(image: np.ndarray, stats: NormStats) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    if image.shape[-1] != stats.mean.size:
        raise DataError(f"image has {image.shape[-1]} channels, stats have {stats.mean.size}")
    return (image - stats.mean) / np.maximum(stats.std, SIGMA_FLOOR)


def denormalize(image: np.ndarray, stats: NormStats) -> np.ndarray:
    return np.asarray(image) * np.maximum(stats.std, SIGMA_FLOOR) + stats.mean


# -- geometry ---------------------------------------------------------------


def _bilinear(image: np.ndarray, ys: np.ndarray, xs: np.ndarray, fill=None) -> np.ndarray:
    """Sample ``image`` at fractional pixel coordinates.

    With ``fill`` set, points outside the pixel-centre grid take that value;
    otherwise coordinates are clamped to the border.
    """
    h, w = image.shape[:2]
    if fill is None:
        ys = np.clip(ys, 0.0, h - 1.0)
        xs = np.clip(xs, 0.0, w - 1.0)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    wy = (ys - y0)[..., None]
    wx = (xs - x0)[..., None]

    def at(yy, xx):
        inside = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
        v = image[np.clip(yy, 0, h - 1), np.clip(xx, 0, w - 1)]
        if fill is not None:
            v = np.where(inside[..., None], v, fill)
        return v

    top = at(y0, x0) * (1 - wx) + at(y0, x0 + 1) * wx
    bottom = at(y0 + 1, x0) * (1 - wx) + at(y0 + 1, x0 + 1) * wx
    return top * (1 - wy) + bottom * wy


def resize(image: np.ndarray, size) -> np.ndarray:
    """Bilinear resize with half-pixel centres and edge clamping."""
    image = np.asarray(image, dtype=np.float64)
    oh, ow = size
    h, w = image.shape[:2]
    if (oh, ow) == (h, w):
        return image.copy()
    ys = (np.arange(oh) + 0.5) * (h / oh) - 0.5
    xs = (np.arange(ow) + 0.5) * (w / ow) - 0.5
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    return _bilinear(image, yy, xx)


def rotate(image: np.ndarray, degrees: float) -> np.ndarray:
    """Rotate counter-clockwise about the centre; uncovered pixels become 0."""
    image = np.asarray(image, dtype=np.float64)
    if degrees == 0:
        return image.copy()
    h, w = image.shape[:2]
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    t = math.radians(degrees)
    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    # inverse map: output pixel -> source coordinate
    dy, dx = yy - cy, xx - cx
    sx = math.cos(t) * dx - math.sin(t) * dy + cx
    sy = math.sin(t) * dx + math.cos(t) * dy + cy
    return _bilinear(image, sy, sx, fill=0.0)


def box_blur(image: np.ndarray) -> np.ndarray:
    pad = np.pad(image, ((1, 1), (1, 1), (0, 0)), mode="edge")
    h, w = image.shape[:2]
    acc = np.zeros_like(image)
    for dy in range(3):
        for dx in range(3):
            acc += pad[dy:dy + h, dx:dx + w]
    return acc / 9.0


def adjust_sharpness(image: np.ndarray, factor: float) -> np.ndarray:
    """Blend the 3x3 box-blurred image with the original: 0 = blurred, 1 = unchanged."""
    image = np.asarray(image, dtype=np.float64)
    if factor == 1.0:
        return image.copy()
    blurred = box_blur(image)
    return np.clip(blurred + factor * (image - blurred), 0.0, 1.0)


def augment(image: np.ndarray, spec: AugmentSpec, epoch: int, index: int) -> np.ndarray:
    """Random rotation and sharpness; randomness depends only on (seed, epoch, index)."""
    rng = np.random.default_rng([spec.seed, epoch, index])
    angle = rng.uniform(-spec.max_rotation_deg, spec.max_rotation_deg)
    out = rotate(image, angle)
    if rng.random() < spec.sharpness_prob:
        out = adjust_sharpness(out, rng.uniform(*spec.sharpness_range))
    return out


# -- splits -----------------------------------------------------------------


def split(records: Sequence[SampleRecord], fractions=(0.8, 0.2, 0.0), seed: int = 0):
    """Stratified train/val/test index lists.

    Per class, the shuffled indices are cut at rounded cumulative fractions, so
    each part is within one sample of its target size.
    """
    fr = np.asarray(fractions, dtype=np.float64)
    if fr.size != 3 or np.any(fr < 0) or not math.isclose(fr.sum(), 1.0, abs_tol=1e-9):
        raise DataError("split fractions must be three nonnegative numbers summing to 1")
    rng = np.random.default_rng(seed)
    by_class: dict = {}
    for i, r in enumerate(records):
        by_class.setdefault(r.species_id, []).append(i)
    parts = ([], [], [])
    for cls in sorted(by_class):
        idx = np.array(by_class[cls])
        idx = idx[rng.permutation(idx.size)]
        n = idx.size
        cut1 = int(round(fr[0] * n))
        cut2 = int(round((fr[0] + fr[1]) * n))
        parts[0].extend(idx[:cut1].tolist())
        parts[1].extend(idx[cut1:cut2].tolist())
        parts[2].extend(idx[cut2:].tolist())
    return tuple(sorted(p) for p in parts)


# -- synthetic toyset -------------------------------------------------------

SHAPES = ("disc", "square", "triangle", "cross", "ring", "diamond", "hbar", "vbar")
# zero-mean hue offsets keep the channel-mean brightness of each class on its own level
_HUES = np.array([[0.25, -0.15, -0.10], [-0.15, 0.25, -0.10], [-0.10, -0.15, 0.25],
                  [0.15, 0.15, -0.30], [-0.30, 0.15, 0.15], [0.15, -0.30, 0.15]])


def _shape_mask(shape: str, size: int, cy: float, cx: float, r: float) -> np.ndarray:
    yy, xx = np.meshgrid(np.arange(size) + 0.5, np.arange(size) + 0.5, indexing="ij")
    dy, dx = yy - cy, xx - cx
    if shape == "disc":
        return dy ** 2 + dx ** 2 <= r ** 2
    if shape == "square":
        return (np.abs(dy) <= r * 0.85) & (np.abs(dx) <= r * 0.85)
    if shape == "triangle":
        return (dy <= r * 0.8) & (dy >= -r) & (np.abs(dx) <= (dy + r) * 0.6)
    if shape == "cross":
        return ((np.abs(dy) <= r * 0.35) & (np.abs(dx) <= r)) | ((np.abs(dx) <= r * 0.35) & (np.abs(dy) <= r))
    if shape == "ring":
        d2 = dy ** 2 + dx ** 2
        return (d2 <= r ** 2) & (d2 >= (0.5 * r) ** 2)
    if shape == "diamond":
        return np.abs(dy) + np.abs(dx) <= r * 1.1
    if shape == "hbar":
        return (np.abs(dy) <= r * 0.4) & (np.abs(dx) <= r)
    return (np.abs(dx) <= r * 0.4) & (np.abs(dy) <= r)


def class_color(c: int, n_classes: int) -> np.ndarray:
    level = 0.45 + 0.5 * (c / max(1, n_classes - 1))
    return np.clip(level + _HUES[c % len(_HUES)], 0.0, 1.0)


def synthetic_toyset(seed: int = 7, n_classes: int = 4, n_per_class: int = 64, size: int = 16):
    """Coloured geometric shapes on a dark noisy background.

    Class ``c`` draws shape ``SHAPES[c % 8]`` in its own colour; even classes are
    edible.  Returns ``(records, images)`` with images as uint8 (H, W, 3) arrays.
    """
    rng = np.random.default_rng(seed)
    records, images = [], []
    for c in range(n_classes):
        color = class_color(c, n_classes)
        shape = SHAPES[c % len(SHAPES)]
        for k in range(n_per_class):
            bg = 0.08 + 0.04 * rng.random(3)
            img = np.clip(bg + 0.03 * rng.standard_normal((size, size, 3)), 0.0, 1.0)
            r = size * rng.uniform(0.28, 0.36)
            cy = size / 2 + rng.uniform(-0.12, 0.12) * size
            cx = size / 2 + rng.uniform(-0.12, 0.12) * size
            mask = _shape_mask(shape, size, cy, cx, r)
            tint = np.clip(color + 0.04 * rng.standard_normal(3), 0.0, 1.0)
            img[mask] = tint
            images.append(to_bytes(img))
            records.append(SampleRecord(f"images/c{c:02d}_{k:04d}.ppm", c, c % 2 == 0))
    return records, images


def make_toyset(out_dir, seed: int = 7, n_classes: int = 4, n_per_class: int = 64, size: int = 16) -> Path:
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    records, images = synthetic_toyset(seed, n_classes, n_per_class, size)
    for rec, img in zip(records, images):
        write_ppm(out / rec.image_path, img)
    manifest = out / "manifest.csv"
    write_manifest(manifest, records)
    return manifest


def load_images(manifest_path, records: Sequence[SampleRecord], size: int) -> np.ndarray:
    """Read and resize every record's image; returns (N, size, size, 3) floats."""
    out = np.empty((len(records), size, size, 3))
    for i, r in enumerate(records):
        p = resolve(manifest_path, r)
        try:
            img = read_ppm(p)
        except OSError as exc:
            raise DataError(f"cannot read image {p}: {exc}") from exc
        out[i] = resize(img, (size, size))
    return out

