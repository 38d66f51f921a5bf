"""Filter estimation from labeled markers and the shared forward pass.

Two training strategies produce kernel banks without any backpropagation:

* **cluster** -- at every block's input, marker pixels are mapped to the
  current scale, their patches are z-scored with statistics pooled over all
  marker patches, and each marker's patches are k-means-clustered; the unit-
  normalized cluster centers become that block's kernels (no biases).

* **bofp** -- a single clustering pass per marker at the original image picks
  one discriminative pixel per cluster center (the bag of feature points).
  Every block then derives kernels directly from patches at the mapped
  points: with patch-set statistics (mu, sigma), the normalized unit patch u
  yields kernel K = u / sigma and bias b = -<mu, K>, which folds the z-score
  into the convolution itself.

Both strategies label each kernel with its source marker's class, which the
decoder consumes.  The number of k-means invocations is tracked so the
single-clustering efficiency of the bofp path is observable.
"""

import json
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import core
from .clustering import kmeans, nearest_member
from .core import ChannelStats, FeatureMap
from .markers import map_to_scale, rasterize

MODES = ("cluster", "bofp")
_TINY_NORM = 1e-12


@dataclass(frozen=True)
class KernelBank:
    """Per-block filters: (n, k*k*m) kernels, optional biases, class labels."""

    kernels: np.ndarray
    labels: np.ndarray
    k: int
    d: int
    biases: Optional[np.ndarray] = None

    def __post_init__(self):
        kernels = np.ascontiguousarray(self.kernels, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        object.__setattr__(self, "kernels", kernels)
        object.__setattr__(self, "labels", labels)
        if self.biases is not None:
            biases = np.asarray(self.biases, dtype=np.float64)
            if biases.shape[0] != kernels.shape[0]:
                raise ValueError("one bias per kernel required")
            object.__setattr__(self, "biases", biases)
        if labels.shape[0] != kernels.shape[0]:
            raise ValueError("one label per kernel required")

    def __len__(self):
        return self.kernels.shape[0]


@dataclass(frozen=True)
class BlockSpec:
    k: int = 3
    d: int = 1
    kernels_per_marker: int = 1
    pooling: str = "max"
    pool_window: int = 3
    pool_stride: int = 2
    conv_stride: int = 1

    def __post_init__(self):
        if self.k < 1 or self.k % 2 == 0:
            raise ValueError(f"kernel size must be odd and positive, got {self.k}")
        if self.k not in (3, 5, 7):
            warnings.warn(f"kernel size {self.k} outside the usual 3..7 range")
        if self.kernels_per_marker < 1:
            raise ValueError("kernels_per_marker must be >= 1")
        if self.kernels_per_marker > 4:
            warnings.warn(
                f"{self.kernels_per_marker} kernels per marker exceeds the usual 1..4"
            )
        if self.pooling not in ("max", "avg"):
            raise ValueError(f"pooling must be 'max' or 'avg', got {self.pooling!r}")
        if self.d < 1 or self.pool_window < 1 or self.pool_stride < 1 or self.conv_stride < 1:
            raise ValueError("dilation, pool window and strides must be >= 1")

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "d": self.d,
            "kernels_per_marker": self.kernels_per_marker,
            "pooling": self.pooling,
            "pool_window": self.pool_window,
            "pool_stride": self.pool_stride,
            "conv_stride": self.conv_stride,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "BlockSpec":
        return cls(**{k: obj[k] for k in cls.__dataclass_fields__ if k in obj})


@dataclass(frozen=True)
class EncoderBlock:
    spec: BlockSpec
    bank: KernelBank
    stats: Optional[ChannelStats] = None  # cluster mode only


@dataclass
class EncoderModel:
    blocks: list
    mode: str
    input_channels: int

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        m = self.input_channels
        for i, block in enumerate(self.blocks):
            expected = block.spec.k * block.spec.k * m
            if block.bank.kernels.shape[1] != expected:
                raise ValueError(
                    f"block {i} kernels have length {block.bank.kernels.shape[1]}, "
                    f"expected {expected}"
                )
            m = len(block.bank)

    @property
    def depth(self) -> int:
        return len(self.blocks)

    def output_channels(self, block_index: int) -> int:
        return len(self.blocks[block_index].bank)


@dataclass(frozen=True)
class FeaturePoint:
    x: int
    y: int
    label: int
    marker_id: int


@dataclass
class BagOfFeaturePoints:
    """Per training image, the discriminative pixel locations with labels."""

    points: dict = field(default_factory=dict)  # image_id -> list[FeaturePoint]

    def total(self) -> int:
        return sum(len(v) for v in self.points.values())

    def label_multiset(self) -> list:
        out = []
        for image_id in sorted(self.points):
            out.extend(p.label for p in self.points[image_id])
        return sorted(out)


@dataclass
class TrainingStats:
    kmeans_invocations: int = 0
    estimation_seconds: float = 0.0
    forward_seconds: float = 0.0


# ---------------------------------------------------------------------------
# cluster-mode estimation
# ---------------------------------------------------------------------------

def estimate_block_cluster(inputs, marker_pixels, spec: BlockSpec, seed: int = 42,
                           stats_out: Optional[TrainingStats] = None):
    """Estimate one block's kernels by per-marker clustering.

    ``inputs`` maps image id -> FeatureMap at the block input; ``marker_pixels``
    maps image id -> list of (marker_id, label, (N, 2) pixel array) already at
    this scale.  Returns (KernelBank, ChannelStats): the stats pool every
    marker patch of every image and are what the block's forward pass uses for
    z-scoring.
    """
    patch_groups = []  # (image_id, marker_id, label, patches)
    for image_id in sorted(inputs):
        fmap = inputs[image_id]
        for marker_id, label, pixels in marker_pixels.get(image_id, []):
            pixels = np.asarray(pixels, dtype=np.int64).reshape(-1, 2)
            if pixels.shape[0] == 0:
                warnings.warn(
                    f"marker {marker_id} of {image_id} has no in-domain pixels "
                    f"at this scale; skipped"
                )
                continue
            patches = core.extract_patches(fmap, pixels, spec.k, spec.d)
            patch_groups.append((image_id, marker_id, label, patches))
    if not patch_groups:
        raise ValueError("no markers with in-domain pixels; cannot estimate kernels")

    stats = core.zscore_stats(np.concatenate([g[3] for g in patch_groups]))

    kernels = []
    labels = []
    for image_id, marker_id, label, patches in patch_groups:
        normalized = core.normalize_patch(patches, stats)
        result = kmeans(normalized, spec.kernels_per_marker, seed=seed)
        if stats_out is not None:
            stats_out.kmeans_invocations += 1
        for center in result.centers:
            norm = float(np.sqrt((center ** 2).sum()))
            if norm < _TINY_NORM:
                warnings.warn(
                    f"marker {marker_id} of {image_id} produced a zero-norm "
                    f"center; skipped"
                )
                continue
            kernels.append(center / norm)
            labels.append(label)
    if not kernels:
        raise ValueError("every cluster center was degenerate; no kernels estimated")
    bank = KernelBank(
        kernels=np.stack(kernels), labels=np.array(labels), k=spec.k, d=spec.d
    )
    return bank, stats


# ---------------------------------------------------------------------------
# bag-of-feature-points estimation
# ---------------------------------------------------------------------------

def build_bofp(images, marker_sets, c: int, k: int, d: int = 1, seed: int = 42,
               stats_out: Optional[TrainingStats] = None) -> BagOfFeaturePoints:
    """One clustering pass per marker at the original scale picks the points.

    Patches are raw (no normalization).  Each cluster center contributes the
    marker pixel whose patch lies closest to it; duplicate locations within an
    image keep their first occurrence.
    """
    by_image = {ms.image_id: ms for ms in marker_sets}
    bag = BagOfFeaturePoints()
    for image_id in sorted(images):
        fmap = images[image_id]
        ms = by_image.get(image_id)
        if ms is None or len(ms) == 0:
            continue
        points = []
        seen = set()
        for marker in sorted(ms.markers, key=lambda m: m.id):
            pixels = rasterize(marker, fmap.width, fmap.height)
            if pixels.shape[0] == 0:
                warnings.warn(f"marker {marker.id} of {image_id} rasterized empty")
                continue
            patches = core.extract_patches(fmap, pixels, k, d)
            result = kmeans(patches, c, seed=seed)
            if stats_out is not None:
                stats_out.kmeans_invocations += 1
            for center in result.centers:
                idx = nearest_member(patches, center)
                x, y = int(pixels[idx, 0]), int(pixels[idx, 1])
                if (x, y) in seen:
                    continue
                seen.add((x, y))
                points.append(FeaturePoint(x=x, y=y, label=marker.label,
                                           marker_id=marker.id))
        if points:
            bag.points[image_id] = points
    if bag.total() == 0:
        raise ValueError("no feature points could be estimated from the markers")
    return bag


def map_points_to_scale(points, scale: int, width: int, height: int) -> list:
    """Floor-map feature points to a downsampled domain, keeping duplicates.

    Duplicates are kept intentionally so the kernel count stays constant
    across blocks.
    """
    out = []
    for p in points:
        x = min(p.x // scale, width - 1)
        y = min(p.y // scale, height - 1)
        out.append(FeaturePoint(x=x, y=y, label=p.label, marker_id=p.marker_id))
    return out


def estimate_block_bofp(inputs, mapped_points, spec: BlockSpec) -> KernelBank:
    """Derive kernels and biases directly from patches at the mapped points.

    With patch-set statistics (mu, sigma) over every point of every image,
    each patch P gives u = ((P - mu) / sigma) normalized to unit length,
    kernel K = u / sigma and bias b = -<mu, K>; then <Q, K> + b equals
    <(Q - mu) / sigma, u> for any raw patch Q.
    """
    rows = []
    labels = []
    for image_id in sorted(inputs):
        fmap = inputs[image_id]
        pts = mapped_points.get(image_id, [])
        if not pts:
            continue
        pixels = np.array([[p.x, p.y] for p in pts], dtype=np.int64)
        rows.append(core.extract_patches(fmap, pixels, spec.k, spec.d))
        labels.extend(p.label for p in pts)
    if not rows:
        raise ValueError("no mapped feature points in domain")
    patches = np.concatenate(rows)
    labels = np.array(labels, dtype=np.int64)

    stats = core.zscore_stats(patches)
    normalized = (patches - stats.mean) / stats.std
    norms = np.sqrt((normalized ** 2).sum(axis=1))
    keep = norms >= _TINY_NORM
    if not np.all(keep):
        warnings.warn(f"{int((~keep).sum())} degenerate constant patches skipped")
    normalized = normalized[keep]
    labels = labels[keep]
    units = normalized / norms[keep][:, None]
    kernels = units / stats.std
    biases = -(kernels @ stats.mean)
    return KernelBank(kernels=kernels, labels=labels, k=spec.k, d=spec.d,
                      biases=biases)


# ---------------------------------------------------------------------------
# forward pass
# ---------------------------------------------------------------------------

def forward_block(fmap: FeatureMap, spec: BlockSpec, bank: KernelBank,
                  stats: Optional[ChannelStats] = None) -> FeatureMap:
    """Convolution (+ z-scoring for cluster banks), ReLU, pooling.

    Cluster banks (no biases) require ``stats``; the z-score folds into the
    convolution as scaled kernels plus a derived bias, which is exactly the
    per-patch normalization including the zero-padded components.
    """
    if bank.biases is None:
        if stats is None:
            raise ValueError("cluster-mode forward requires normalization stats")
        eff_kernels = bank.kernels / stats.std
        eff_biases = -(eff_kernels @ stats.mean)
        eff = KernelBank(kernels=eff_kernels, labels=bank.labels, k=bank.k,
                         d=bank.d, biases=eff_biases)
        out = core.convolve(fmap, eff, stride=spec.conv_stride)
    else:
        out = core.convolve(fmap, bank, stride=spec.conv_stride)
    out = core.relu(out)
    return core.pool(out, spec.pooling, spec.pool_window, spec.pool_stride)


# ---------------------------------------------------------------------------
# training orchestration
# ---------------------------------------------------------------------------

@dataclass
class TrainResult:
    model: EncoderModel
    stats: TrainingStats


def train_encoder(images, marker_sets, blockspecs, mode: str,
                  seed: int = 42) -> TrainResult:
    """Train an encoder from marked images.

    ``images`` maps image id -> scale-1 FeatureMap; every id present in
    ``marker_sets`` must exist there.  In cluster mode each block re-clusters
    (one k-means per marker per block); in bofp mode clustering happens once
    per marker at the input image and every block reuses the mapped points.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if not blockspecs:
        raise ValueError("at least one block spec required")
    marker_sets = [ms for ms in marker_sets if len(ms) > 0]
    if not marker_sets:
        raise ValueError("training requires at least one non-empty marker set")
    for ms in marker_sets:
        if ms.image_id not in images:
            raise ValueError(f"marker set references unknown image {ms.image_id!r}")

    train_images = {ms.image_id: images[ms.image_id] for ms in marker_sets}
    input_channels = next(iter(train_images.values())).channels
    tstats = TrainingStats()
    blocks = []
    current = dict(train_images)

    if mode == "bofp":
        t0 = time.perf_counter()
        spec0 = blockspecs[0]
        bag = build_bofp(train_images, marker_sets, c=spec0.kernels_per_marker,
                         k=spec0.k, d=spec0.d, seed=seed, stats_out=tstats)
        tstats.estimation_seconds += time.perf_counter() - t0
        for spec in blockspecs:
            t0 = time.perf_counter()
            mapped = {}
            for image_id in sorted(bag.points):
                fmap = current[image_id]
                mapped[image_id] = map_points_to_scale(
                    bag.points[image_id], fmap.scale, fmap.width, fmap.height
                )
            bank = estimate_block_bofp(current, mapped, spec)
            tstats.estimation_seconds += time.perf_counter() - t0
            blocks.append(EncoderBlock(spec=spec, bank=bank, stats=None))
            t0 = time.perf_counter()
            current = {
                iid: forward_block(fm, spec, bank) for iid, fm in current.items()
            }
            tstats.forward_seconds += time.perf_counter() - t0
    else:
        raster = {}  # image_id -> list of (marker_id, label, scale-1 pixels)
        for ms in sorted(marker_sets, key=lambda m: m.image_id):
            fmap = train_images[ms.image_id]
            raster[ms.image_id] = [
                (m.id, m.label, rasterize(m, fmap.width, fmap.height))
                for m in sorted(ms.markers, key=lambda m: m.id)
            ]
        for spec in blockspecs:
            t0 = time.perf_counter()
            mapped = {}
            for image_id, entries in raster.items():
                fmap = current[image_id]
                mapped[image_id] = [
                    (mid, lab, map_to_scale(px, fmap.scale, fmap.width, fmap.height))
                    for mid, lab, px in entries
                ]
            bank, stats = estimate_block_cluster(
                current, mapped, spec, seed=seed, stats_out=tstats
            )
            tstats.estimation_seconds += time.perf_counter() - t0
            blocks.append(EncoderBlock(spec=spec, bank=bank, stats=stats))
            t0 = time.perf_counter()
            current = {
                iid: forward_block(fm, spec, bank, stats)
                for iid, fm in current.items()
            }
            tstats.forward_seconds += time.perf_counter() - t0

    model = EncoderModel(blocks=blocks, mode=mode, input_channels=input_channels)
    return TrainResult(model=model, stats=tstats)


def forward_encoder(model: EncoderModel, image: FeatureMap) -> list:
    """Run every block, returning each block's output for progressive decoding."""
    if image.channels != model.input_channels:
        raise ValueError(
            f"image has {image.channels} channels, model expects "
            f"{model.input_channels}"
        )
    outputs = []
    current = image
    for block in model.blocks:
        current = forward_block(current, block.spec, block.bank, block.stats)
        outputs.append(current)
    return outputs


def count_parameters(model: EncoderModel) -> int:
    """Total trainable values: kernel weights plus biases where present."""
    total = 0
    for block in model.blocks:
        total += block.bank.kernels.size
        if block.bank.biases is not None:
            total += block.bank.biases.size
    return total


# ---------------------------------------------------------------------------
# serialization: JSON manifest + binary blobs
# ---------------------------------------------------------------------------

def save_model(model: EncoderModel, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {
        "mode": model.mode,
        "input_channels": model.input_channels,
        "blocks": [
            {
                "spec": block.spec.to_dict(),
                "labels": [int(v) for v in block.bank.labels],
                "has_biases": block.bank.biases is not None,
                "has_stats": block.stats is not None,
            }
            for block in model.blocks
        ],
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    blobs = {}
    for i, block in enumerate(model.blocks):
        blobs[f"block{i}_kernels"] = block.bank.kernels
        if block.bank.biases is not None:
            blobs[f"block{i}_biases"] = block.bank.biases
        if block.stats is not None:
            blobs[f"block{i}_mean"] = block.stats.mean
            blobs[f"block{i}_std"] = block.stats.std
    np.savez(directory / "weights.npz", **blobs)


def load_model(directory) -> EncoderModel:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    blobs = np.load(directory / "weights.npz")
    blocks = []
    for i, entry in enumerate(manifest["blocks"]):
        spec = BlockSpec.from_dict(entry["spec"])
        bank = KernelBank(
            kernels=blobs[f"block{i}_kernels"],
            labels=np.array(entry["labels"], dtype=np.int64),
            k=spec.k,
            d=spec.d,
            biases=blobs[f"block{i}_biases"] if entry["has_biases"] else None,
        )
        stats = None
        if entry["has_stats"]:
            stats = ChannelStats(mean=blobs[f"block{i}_mean"],
                                 std=blobs[f"block{i}_std"])
        blocks.append(EncoderBlock(spec=spec, bank=bank, stats=stats))
    return EncoderModel(blocks=blocks, mode=manifest["mode"],
                        input_channels=manifest["input_channels"])
