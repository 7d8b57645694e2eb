"""Dataset plumbing: labels, manifests, splitting, augmentation, image I/O,
and the procedural printed-fabric generator that stands in for a real corpus.

All randomness derives per-item seeds from (seed, source id), so results are
independent of processing order.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from enum import IntEnum
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import ConfigError, DataError, DimensionError
from .seeding import derive_seed
from .tensor import Tensor

CLASS_NAMES = ("defect_free", "color_spot", "misprint")
PROVENANCES = ("original", "augmented", "synthetic")
SPLIT_TAGS = ("train", "val", "test")

PAPER_RATIOS = (0.4, 0.3, 0.3)


class ClassLabel(IntEnum):
    DEFECT_FREE = 0
    COLOR_SPOT = 1
    MISPRINT = 2

    @classmethod
    def from_int(cls, value) -> "ClassLabel":
        try:
            return cls(int(value))
        except ValueError as exc:
            raise DataError(f"class label must be 0, 1 or 2, got {value!r}") from exc


@dataclass
class Sample:
    """One image with its label; pixel values live in [0, 1], channels first."""

    image: Tensor
    label: ClassLabel
    source_id: str
    provenance: str = "original"

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise DataError(f"provenance must be one of {PROVENANCES}, got {self.provenance!r}")
        if self.image.ndim != 3 or self.image.shape[0] != 3:
            raise DimensionError(f"sample image must be [3,H,W], got {self.image.shape}")
        lo = float(self.image.array.min())
        hi = float(self.image.array.max())
        if lo < 0.0 or hi > 1.0:
            raise DataError(f"pixel values must lie in [0,1], got range [{lo}, {hi}]")


@dataclass
class ManifestRow:
    path: str
    label: ClassLabel
    provenance: str = "original"
    split: str | None = None


@dataclass
class Manifest:
    """Ordered rows binding image paths to labels; CSV on disk.

    Marker lines (leading '#' comments) survive load/save so pipeline steps
    can leave idempotence notes, e.g. that augmentation already ran.
    """

    rows: list[ManifestRow]
    markers: list[str] = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        for row in self.rows:
            if row.path in seen:
                raise DataError(f"duplicate manifest path {row.path!r}")
            seen.add(row.path)
            if row.provenance not in PROVENANCES:
                raise DataError(f"{row.path}: bad provenance {row.provenance!r}")
            if row.split is not None and row.split not in SPLIT_TAGS:
                raise DataError(f"{row.path}: bad split tag {row.split!r}")

    def __len__(self) -> int:
        return len(self.rows)

    def with_split(self, tag: str) -> list[ManifestRow]:
        return [r for r in self.rows if r.split == tag]

    def to_csv(self) -> str:
        buf = io.StringIO()
        for marker in self.markers:
            buf.write(f"# {marker}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["path", "label", "provenance", "split"])
        for r in self.rows:
            writer.writerow([r.path, int(r.label), r.provenance, r.split or ""])
        return buf.getvalue()

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv(), encoding="utf-8")

    @classmethod
    def from_csv(cls, text: str) -> "Manifest":
        markers = []
        data_lines = []
        for line in text.splitlines():
            if line.startswith("#"):
                markers.append(line.lstrip("#").strip())
            elif line.strip():
                data_lines.append(line)
        if not data_lines:
            return cls(rows=[], markers=markers)
        reader = csv.reader(data_lines)
        header = next(reader)
        if header[:4] != ["path", "label", "provenance", "split"]:
            raise DataError(f"manifest header must be path,label,provenance,split, got {header}")
        rows = []
        for rec in reader:
            if len(rec) != 4:
                raise DataError(f"manifest row has {len(rec)} fields: {rec}")
            rows.append(ManifestRow(
                path=rec[0],
                label=ClassLabel.from_int(rec[1]),
                provenance=rec[2],
                split=rec[3] or None,
            ))
        return cls(rows=rows, markers=markers)

    @classmethod
    def load(cls, path: str | Path) -> "Manifest":
        return cls.from_csv(Path(path).read_text(encoding="utf-8"))


def split(manifest: Manifest, ratios: tuple[float, float, float] = PAPER_RATIOS,
          seed: int = 0) -> tuple[Manifest, Manifest, Manifest]:
    """Stratified train/val/test partition: seeded shuffle then contiguous cut.

    Each class is split on its own with sizes round(n*r); rounding remainder
    goes to train. Partitions are disjoint and exhaustive.
    """
    if len(manifest) == 0:
        raise DataError("cannot split an empty manifest")
    if len(ratios) != 3 or any(r < 0 for r in ratios):
        raise ConfigError(f"need three non-negative ratios, got {ratios}")
    total = sum(ratios)
    if abs(total - 1.0) > 1e-9:
        raise ConfigError(f"ratios must sum to 1, got {total!r}")

    rng = np.random.default_rng(derive_seed(seed, "split"))
    parts: tuple[list[ManifestRow], ...] = ([], [], [])
    for label in sorted({int(r.label) for r in manifest.rows}):
        rows = [r for r in manifest.rows if int(r.label) == label]
        order = rng.permutation(len(rows))
        n = len(rows)
        n_val = round(n * ratios[1])
        n_test = round(n * ratios[2])
        n_train = n - n_val - n_test
        if n_train < 0:
            raise ConfigError(f"ratios {ratios} over-allocate class {label}")
        cuts = (n_train, n_train + n_val)
        for pos, j in enumerate(order):
            tag_idx = 0 if pos < cuts[0] else (1 if pos < cuts[1] else 2)
            parts[tag_idx].append(replace(rows[j], split=SPLIT_TAGS[tag_idx]))

    if len(manifest) >= 3 and any(len(p) == 0 for p in parts):
        sizes = tuple(len(p) for p in parts)
        raise DataError(f"degenerate ratios {ratios}: partition sizes {sizes} include an empty one")
    return tuple(Manifest(rows=p, markers=list(manifest.markers)) for p in parts)


# Label-preserving transforms for square images; spots and channel shifts
# survive all of them.
_TRANSFORMS = ("hflip", "vflip", "rot90", "rot180", "rot270", "brightness")


def _apply_transform(img: np.ndarray, name: str, rng: np.random.Generator) -> np.ndarray:
    if name == "hflip":
        return img[:, :, ::-1]
    if name == "vflip":
        return img[:, ::-1, :]
    if name == "rot90":
        return np.rot90(img, 1, axes=(1, 2))
    if name == "rot180":
        return np.rot90(img, 2, axes=(1, 2))
    if name == "rot270":
        return np.rot90(img, 3, axes=(1, 2))
    if name == "brightness":
        factor = rng.uniform(0.9, 1.1)
        return np.clip(img * factor, 0.0, 1.0)
    raise ValueError(f"unknown transform {name!r}")


def augment(samples: list[Sample], factor: int, seed: int) -> list[Sample]:
    """Grow a sample list to factor x its size with label-preserving transforms.

    Each original stays in the output followed by factor-1 transformed copies.
    Per-sample rngs are derived from (seed, source_id), so order never matters.
    """
    if int(factor) != factor or factor < 1:
        raise ConfigError(f"augmentation factor must be a positive integer, got {factor}")
    out: list[Sample] = []
    for sample in samples:
        out.append(sample)
        if factor == 1:
            continue
        rng = np.random.default_rng(derive_seed(seed, f"augment:{sample.source_id}"))
        square = sample.image.shape[1] == sample.image.shape[2]
        pool = _TRANSFORMS if square else ("hflip", "vflip", "rot180", "brightness")
        k = factor - 1
        picks = rng.choice(len(pool), size=k, replace=k > len(pool))
        img = sample.image.array
        for i, pick in enumerate(picks, start=1):
            transformed = np.ascontiguousarray(_apply_transform(img, pool[pick], rng))
            out.append(Sample(
                image=Tensor._wrap(transformed),
                label=sample.label,
                source_id=f"{sample.source_id}#aug{i}",
                provenance="augmented",
            ))
    return out


@dataclass(frozen=True)
class SynthParams:
    """Knobs for the procedural printed-fabric generator."""

    size: int = 64
    tile: int = 8
    noise: float = 0.02

    def __post_init__(self):
        if self.size < 32:
            raise ConfigError(f"image size must be at least 32, got {self.size}")
        if self.tile < 4:
            raise ConfigError(f"tile period must be at least 4 px, got {self.tile}")
        if self.tile > self.size:
            raise ConfigError(f"tile period {self.tile} exceeds image size {self.size}")
        if not (0.0 <= self.noise <= 0.2):
            raise ConfigError(f"noise amplitude must be in [0, 0.2], got {self.noise}")

    def to_kv(self) -> dict[str, str]:
        return {"size": str(self.size), "tile": str(self.tile), "noise": repr(self.noise)}

    @classmethod
    def from_kv(cls, kv: dict[str, str]) -> "SynthParams":
        try:
            return cls(
                size=int(kv.get("size", "64")),
                tile=int(kv.get("tile", "8")),
                noise=float(kv.get("noise", "0.02")),
            )
        except ValueError as exc:
            raise ConfigError(f"bad synth parameter: {exc}") from exc


# Stable print palette (ground shade and motif ink); per-seed jitter keeps
# images distinct while the class signal stays learnable from a tiny corpus.
_GROUND = np.array([0.82, 0.78, 0.70])
_INK = np.array([0.20, 0.32, 0.55])


def _contrast_color(color_a: np.ndarray, color_b: np.ndarray) -> np.ndarray:
    # A saturated stain clearly apart from both print colors.
    mean = (color_a + color_b) / 2.0
    red = np.array([0.9, 0.08, 0.08])
    blue = np.array([0.08, 0.15, 0.9])
    return red if np.abs(mean - red).sum() >= np.abs(mean - blue).sum() else blue


def synth_fabric_image(label: ClassLabel, params: SynthParams, seed: int
                       ) -> tuple[np.ndarray, dict]:
    """Render one [3,H,W] fabric image plus the defect metadata used to make it.

    The base print (two-color dot motif with period `tile`, plus noise) is a
    function of (params, seed) only, so images of different classes under the
    same seed differ exactly where the defect was applied.
    """
    size, tile = params.size, params.tile
    rng_base = np.random.default_rng(derive_seed(seed, "base"))
    color_a = np.clip(_GROUND + rng_base.uniform(-0.05, 0.05, 3), 0.1, 0.9)
    color_b = np.clip(_INK + rng_base.uniform(-0.05, 0.05, 3), 0.1, 0.9)

    # Grid stays registered across images: a correctly printed repeat is the
    # reference state, so only the misprint class carries misalignment.
    yy, xx = np.mgrid[0:size, 0:size]
    cy = (yy % tile) - (tile - 1) / 2.0
    cx = (xx % tile) - (tile - 1) / 2.0
    motif = (cy * cy + cx * cx) <= (0.3 * tile) ** 2
    img = np.where(motif[None, :, :], color_b[:, None, None], color_a[:, None, None])
    img = img + rng_base.normal(0.0, params.noise, (3, size, size))
    img = np.clip(img, 0.0, 1.0)

    meta: dict = {"tile": tile, "color_a": color_a, "color_b": color_b}
    rng_defect = np.random.default_rng(derive_seed(seed, "defect"))
    if label == ClassLabel.COLOR_SPOT:
        spot = _contrast_color(color_a, color_b)
        mask = np.zeros((size, size), dtype=bool)
        for _ in range(int(rng_defect.integers(1, 4))):
            radius = int(rng_defect.integers(2, 9))
            sy = int(rng_defect.integers(0, size))
            sx = int(rng_defect.integers(0, size))
            disc = (yy - sy) ** 2 + (xx - sx) ** 2 <= radius * radius
            mask |= disc
        img = np.where(mask[None, :, :], spot[:, None, None], img)
        meta["spot_mask"] = mask
        meta["spot_color"] = spot
    elif label == ClassLabel.MISPRINT:
        channel = int(rng_defect.integers(0, 3))
        magnitude = int(rng_defect.integers(2, 7))
        direction = int(rng_defect.integers(0, 4))
        dy, dx = ((magnitude, 0), (-magnitude, 0), (0, magnitude), (0, -magnitude))[direction]
        img = img.copy()
        img[channel] = np.roll(img[channel], (dy, dx), axis=(0, 1))
        meta["channel"] = channel
        meta["offset"] = (dy, dx)
    return np.ascontiguousarray(img), meta


def synth_fabric(label: ClassLabel, params: SynthParams, seed: int,
                 source_id: str | None = None) -> Sample:
    img, _ = synth_fabric_image(label, params, seed)
    return Sample(
        image=Tensor._wrap(img),
        label=label,
        source_id=source_id or f"synth_{int(label)}_{seed}",
        provenance="synthetic",
    )


def load_image(path: str | Path) -> Tensor:
    """Decode an 8-bit RGB PNG into a [3,H,W] tensor scaled by 1/255."""
    try:
        with Image.open(path) as img:
            img.load()
            mode = img.mode
            if mode != "RGB":
                raise DataError(f"{path}: expected 3-channel RGB, got mode {mode!r}")
            arr = np.asarray(img, dtype=np.uint8)
    except UnidentifiedImageError as exc:
        raise DataError(f"{path}: cannot decode image: {exc}") from exc
    return Tensor._wrap(arr.transpose(2, 0, 1).astype(np.float64) / 255.0)


def write_image(tensor: Tensor, path: str | Path) -> None:
    """Quantize a [3,H,W] tensor to 8-bit (round half up) and save as PNG."""
    if tensor.ndim != 3 or tensor.shape[0] != 3:
        raise DimensionError(f"image tensor must be [3,H,W], got {tensor.shape}")
    q = np.floor(np.clip(tensor.array, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    Image.fromarray(q.transpose(1, 2, 0), mode="RGB").save(Path(path), format="PNG")


# Stored pixels live in [0,1]; the network sees them centered at zero, which
# keeps early softmax logits from saturating.
PIXEL_CENTER = 0.5


def model_input(image: Tensor) -> Tensor:
    """[0,1] pixels -> the centered representation every model consumes."""
    return Tensor._wrap(image.array - PIXEL_CENTER)


@dataclass
class Dataset:
    """Stacked model-input images [N,3,H,W] and their int labels.

    Build with from_samples(), which applies the pixel centering; images here
    are what forward() should see, not raw [0,1] pixels.
    """

    images: Tensor
    labels: np.ndarray

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 4:
            raise DimensionError(f"dataset images must be [N,C,H,W], got {self.images.shape}")
        if len(self.labels) != self.images.shape[0]:
            raise DataError(
                f"{self.images.shape[0]} images but {len(self.labels)} labels"
            )

    def __len__(self) -> int:
        return self.images.shape[0]

    @classmethod
    def from_samples(cls, samples: list[Sample]) -> "Dataset":
        if not samples:
            raise DataError("cannot build a dataset from zero samples")
        shapes = {s.image.shape for s in samples}
        if len(shapes) != 1:
            raise DataError(f"samples disagree on image shape: {sorted(shapes)}")
        stack = np.stack([s.image.array for s in samples]) - PIXEL_CENTER
        return cls(images=Tensor._wrap(stack), labels=[int(s.label) for s in samples])


def load_samples(manifest: Manifest, base_dir: str | Path,
                 split_tag: str | None = None) -> list[Sample]:
    base = Path(base_dir)
    rows = manifest.rows if split_tag is None else manifest.with_split(split_tag)
    return [
        Sample(image=load_image(base / r.path), label=r.label,
               provenance=r.provenance, source_id=r.path)
        for r in rows
    ]


def load_dataset(manifest: Manifest, base_dir: str | Path,
                 split_tag: str | None = None) -> Dataset:
    samples = load_samples(manifest, base_dir, split_tag)
    if not samples:
        where = f" with split tag {split_tag!r}" if split_tag else ""
        raise DataError(f"manifest has no rows{where}")
    return Dataset.from_samples(samples)
