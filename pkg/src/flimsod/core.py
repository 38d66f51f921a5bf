"""Dense feature maps, dilated patches, z-score statistics, conv/relu/pool.

A :class:`FeatureMap` is a 2D pixel grid holding an m-channel float vector per
pixel, stored as a read-only (height, width, channels) float64 array, plus the
cumulative downsampling ``scale`` relative to the original image (1 for
inputs).

Patch vectors use one fixed component order everywhere: window offsets in
row-major order, channels innermost.  Kernels and patches must agree on this
order bit for bit.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels as _k

EPS_STD = 1e-6


@dataclass(frozen=True)
class FeatureMap:
    """Immutable m-channel pixel grid with cumulative scale bookkeeping."""

    data: np.ndarray  # (height, width, channels) float64, read-only
    scale: int = 1

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3:
            raise ValueError(f"feature map must be (H, W, C), got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("feature map contains non-finite values")
        if self.scale < 1:
            raise ValueError(f"scale must be >= 1, got {self.scale}")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def value(self, x: int, y: int) -> np.ndarray:
        """Feature vector at pixel (x, y)."""
        return self.data[y, x]

    def in_domain(self, x: int, y: int) -> bool:
        return 0 <= x < self.width and 0 <= y < self.height


@dataclass(frozen=True)
class Patch:
    """Flattened window around ``origin``; length k*k*channels."""

    values: np.ndarray
    origin: tuple  # (x, y)
    k: int
    d: int


@dataclass
class ChannelStats:
    """Componentwise mean/std; std floored at EPS_STD to survive flat regions."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.maximum(np.asarray(self.std, dtype=np.float64), EPS_STD)
        if self.mean.shape != self.std.shape:
            raise ValueError("mean/std length mismatch")


def adjacency_offsets(k: int, d: int = 1):
    """Ordered (dx, dy) window offsets: rows outer, columns inner, step d."""
    if k < 1 or k % 2 == 0:
        raise ValueError(f"window size must be odd and positive, got {k}")
    if d < 1:
        raise ValueError(f"dilation must be >= 1, got {d}")
    r = d * (k // 2)
    return [(dx, dy) for dy in range(-r, r + 1, d) for dx in range(-r, r + 1, d)]


def extract_patch(fmap: FeatureMap, p, k: int, d: int = 1) -> Patch:
    """Patch at pixel p=(x, y); out-of-domain neighbors contribute zeros."""
    x, y = int(p[0]), int(p[1])
    if not fmap.in_domain(x, y):
        raise ValueError(f"pixel {(x, y)} outside {fmap.width}x{fmap.height} domain")
    values = extract_patches(fmap, np.array([[x, y]]), k, d)[0]
    return Patch(values=values, origin=(x, y), k=k, d=d)


def extract_patches(fmap: FeatureMap, pixels, k: int, d: int = 1) -> np.ndarray:
    """Bulk patch extraction; returns (N, k*k*channels) in the fixed order."""
    offsets = adjacency_offsets(k, d)
    pixels = np.asarray(pixels, dtype=np.int64).reshape(-1, 2)
    h, w, m = fmap.data.shape
    if pixels.size and (
        pixels[:, 0].min() < 0 or pixels[:, 0].max() >= w
        or pixels[:, 1].min() < 0 or pixels[:, 1].max() >= h
    ):
        raise ValueError("patch center outside the map domain")
    out = np.empty((pixels.shape[0], len(offsets), m), dtype=np.float64)
    for oi, (dx, dy) in enumerate(offsets):
        xx = pixels[:, 0] + dx
        yy = pixels[:, 1] + dy
        valid = (xx >= 0) & (xx < w) & (yy >= 0) & (yy < h)
        vals = fmap.data[np.clip(yy, 0, h - 1), np.clip(xx, 0, w - 1), :]
        out[:, oi, :] = np.where(valid[:, None], vals, 0.0)
    return out.reshape(pixels.shape[0], len(offsets) * m)


def zscore_stats(patches) -> ChannelStats:
    """Componentwise mean and population std of a patch set (std floored)."""
    arr = _patch_array(patches)
    if arr.shape[0] == 0:
        raise ValueError("cannot compute statistics of an empty patch set")
    mean = arr.mean(axis=0)
    std = arr.std(axis=0)  # population std
    return ChannelStats(mean=mean, std=std)


def normalize_patch(patch, stats: ChannelStats):
    """(v - mean) / std, componentwise."""
    if isinstance(patch, Patch):
        return Patch(
            values=normalize_patch(patch.values, stats),
            origin=patch.origin,
            k=patch.k,
            d=patch.d,
        )
    arr = np.asarray(patch, dtype=np.float64)
    if arr.shape[-1] != stats.mean.shape[0]:
        raise ValueError(
            f"patch length {arr.shape[-1]} != stats length {stats.mean.shape[0]}"
        )
    return (arr - stats.mean) / stats.std


def _patch_array(patches) -> np.ndarray:
    if isinstance(patches, np.ndarray):
        arr = np.asarray(patches, dtype=np.float64)
        return arr.reshape(-1, arr.shape[-1]) if arr.ndim > 1 else arr.reshape(1, -1)
    rows = [p.values if isinstance(p, Patch) else np.asarray(p, dtype=np.float64)
            for p in patches]
    if not rows:
        raise ValueError("cannot compute statistics of an empty patch set")
    lengths = {r.shape[0] for r in rows}
    if len(lengths) > 1:
        raise ValueError("patch set has mixed lengths")
    return np.stack(rows).astype(np.float64)


def convolve(fmap: FeatureMap, bank, stride: int = 1) -> FeatureMap:
    """Per-kernel dot products over dilated windows (plus bias when present).

    Output channel i at p is <P(p), K_i> + b_i with zero-padded patches;
    spatial size is ceil(input/stride) and scale multiplies by stride.
    """
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    expected = bank.k * bank.k * fmap.channels
    if bank.kernels.shape[1] != expected:
        raise ValueError(
            f"kernel depth mismatch: bank expects vectors of length "
            f"{bank.kernels.shape[1]}, map patches have length {expected}"
        )
    biases = bank.biases if bank.biases is not None else np.zeros(bank.kernels.shape[0])
    out = _k.conv_bank(fmap.data, bank.kernels, biases, bank.k, bank.d, stride)
    return FeatureMap(data=out, scale=fmap.scale * stride)


def relu(fmap: FeatureMap) -> FeatureMap:
    return FeatureMap(data=np.maximum(fmap.data, 0.0), scale=fmap.scale)


def pool(fmap: FeatureMap, kind: str, window: int, stride: int) -> FeatureMap:
    """Windowed max/avg aggregation; windows anchor at (row*stride, col*stride)."""
    if window < 1 or stride < 1:
        raise ValueError("pool window and stride must be >= 1")
    if kind not in ("max", "avg"):
        raise ValueError(f"unknown pooling kind {kind!r}")
    code = _k.POOL_MAX if kind == "max" else _k.POOL_AVG
    out = _k.pool_map(fmap.data, window, stride, code)
    return FeatureMap(data=out, scale=fmap.scale * stride)
