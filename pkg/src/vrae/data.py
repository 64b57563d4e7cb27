"""Image ingestion, train/val/test manifests and synthetic degradation."""

from __future__ import annotations

import csv
import hashlib
import io
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Literal

import numpy as np
from PIL import Image, UnidentifiedImageError
from scipy import ndimage

from .nn.functional import avgpool3s1

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg"}
MAX_ANGLE_DEG = 15.0


def list_images(folder: str | Path) -> list[Path]:
    folder = Path(folder)
    if not folder.is_dir():
        raise FileNotFoundError(f"image folder not found: {folder}")
    return sorted(p for p in folder.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES and p.is_file())


def load_image(path: str | Path, target_size: int = 256) -> np.ndarray:
    """Decode to RGB, bilinear-resize to a square, scale to [0, 1]; shape (1, 3, s, s)."""
    with Image.open(path) as im:
        im = im.convert("RGB")
        if im.size != (target_size, target_size):
            im = im.resize((target_size, target_size), Image.BILINEAR)
        arr = np.asarray(im, dtype=np.float32) / 255.0
    return np.ascontiguousarray(arr.transpose(2, 0, 1)[None])


def ingest(folder: str | Path, target_size: int = 256) -> list[np.ndarray]:
    paths = list_images(folder)
    if not paths:
        raise ValueError(f"no PNG/JPEG images in {folder}")
    images = []
    for path in paths:
        try:
            images.append(load_image(path, target_size))
        except (UnidentifiedImageError, OSError) as exc:
            log.warning("skipping undecodable image %s: %s", path, exc)
    if not images:
        raise ValueError(f"no decodable images in {folder}")
    return images


def save_png(img: np.ndarray, path: str | Path) -> None:
    """Write a (1, 3, h, w) or (3, h, w) tensor in [0, 1] as 8-bit PNG."""
    arr = img[0] if img.ndim == 4 else img
    arr = np.clip(np.rint(arr.transpose(1, 2, 0) * 255.0), 0, 255).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(arr, "RGB").save(buf, format="PNG")
    Path(path).write_bytes(buf.getvalue())


# --------------------------------------------------------------------------
# manifest


@dataclass(frozen=True)
class ManifestRecord:
    path: str
    split: Literal["train", "val", "test"]
    angle_deg: float | None = None

    @property
    def key(self) -> str:
        """Stable per-record identity, used to derive its degradation noise."""
        return self.path if self.angle_deg is None else f"{self.path}@{self.angle_deg:.4f}"


@dataclass
class DatasetManifest:
    records: list[ManifestRecord]
    seed: int
    source_count: int

    def split(self, name: str) -> list[ManifestRecord]:
        return [r for r in self.records if r.split == name]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["path", "split", "angle_deg"])
        for r in self.records:
            writer.writerow([r.path, r.split, "" if r.angle_deg is None else f"{r.angle_deg:.4f}"])
        return buf.getvalue()

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path, seed: int = 0) -> "DatasetManifest":
        records = []
        with open(path, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                angle = row["angle_deg"].strip()
                records.append(ManifestRecord(row["path"], row["split"], float(angle) if angle else None))
        count = len({r.path for r in records})
        return cls(records, seed, count)


def split_sizes(n: int) -> tuple[int, int, int]:
    train = math.floor(0.7 * n)
    val = math.floor(0.15 * n)
    return train, val, n - train - val


def split_and_augment(paths: list[str], seed: int, augment_target: int | None = None) -> DatasetManifest:
    """Seeded 70/15/15 split; the train split is grown with rotated copies.

    Extra training records pair a uniformly drawn training image with an
    angle uniform in [-15, 15] degrees (never 0).
    """
    paths = sorted(str(p) for p in paths)
    n = len(paths)
    n_train, n_val, _ = split_sizes(n)
    if augment_target is not None and augment_target < n_train:
        raise ValueError(f"augment target {augment_target} is below the train split size {n_train}")

    rng = np.random.default_rng(seed)
    order = [paths[i] for i in rng.permutation(n)]
    train, val, test = order[:n_train], order[n_train:n_train + n_val], order[n_train + n_val:]

    records = [ManifestRecord(p, "train") for p in train]
    extra = 0 if augment_target is None else augment_target - n_train
    if extra and not train:
        raise ValueError("cannot augment an empty train split")
    for _ in range(extra):
        src = train[int(rng.integers(n_train))]
        angle = 0.0
        while round(angle, 4) == 0.0:
            angle = float(rng.uniform(-MAX_ANGLE_DEG, MAX_ANGLE_DEG))
        records.append(ManifestRecord(src, "train", round(angle, 4)))
    records += [ManifestRecord(p, "val") for p in val]
    records += [ManifestRecord(p, "test") for p in test]
    return DatasetManifest(records, seed, n)


def rotate(img: np.ndarray, angle_deg: float) -> np.ndarray:
    """Bilinear rotation about the image centre with reflected borders."""
    out = ndimage.rotate(img, angle_deg, axes=(-1, -2), reshape=False, order=1, mode="reflect")
    return np.clip(out, 0.0, 1.0).astype(img.dtype)


def load_record(record: ManifestRecord, root: str | Path = ".", target_size: int = 256) -> np.ndarray:
    img = load_image(Path(root) / record.path, target_size)
    if record.angle_deg is not None:
        img = rotate(img, record.angle_deg)
    return img


# --------------------------------------------------------------------------
# degradation


@dataclass(frozen=True)
class DegradationConfig:
    noise_mode: Literal["literal", "zero_mean", "off"] = "literal"
    noise_scale: float = 0.1
    noise_levels: int = 10
    pool_iters: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.noise_mode not in ("literal", "zero_mean", "off"):
            raise ValueError(f"unknown noise mode {self.noise_mode!r}")
        if self.pool_iters < 0:
            raise ValueError("pool_iters must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "DegradationConfig":
        return cls(**d)


def image_rng(seed: int, key: str | None) -> np.random.Generator:
    """Independent stream per (global seed, image id); order of use never matters."""
    if key is None:
        return np.random.default_rng(seed)
    digest = int.from_bytes(hashlib.sha256(key.encode("utf-8")).digest()[:8], "little")
    return np.random.default_rng([seed, digest])


def degrade(clean: np.ndarray, config: DegradationConfig = DegradationConfig(),
            key: str | None = None) -> np.ndarray:
    """Discrete additive noise (once), clamp to [0, 1], then repeated 3x3 reflect mean."""
    x = np.asarray(clean)
    squeeze = x.ndim == 3
    if squeeze:
        x = x[None]
    dtype = x.dtype if x.dtype.kind == "f" else np.float32
    x = x.astype(dtype)
    if config.noise_mode != "off":
        n = image_rng(config.seed, key).integers(0, config.noise_levels, size=x.shape)
        if config.noise_mode == "zero_mean":
            n = n - (config.noise_levels - 1) / 2.0
        x = np.clip(x + (config.noise_scale * n).astype(dtype), 0.0, 1.0).astype(dtype)
    for _ in range(config.pool_iters):
        x = avgpool3s1(x)
    return x[0] if squeeze else x


def total_variation(img: np.ndarray) -> float:
    x = np.asarray(img, dtype=np.float64)
    return float(np.abs(np.diff(x, axis=-1)).sum() + np.abs(np.diff(x, axis=-2)).sum())
