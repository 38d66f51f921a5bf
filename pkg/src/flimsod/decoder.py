"""Training-free mean-based decoding of labeled feature maps into saliency.

Per pixel, the mean activation of foreground-labeled channels (mu_f) is
compared against that of background-labeled channels (mu_b) over a small
window; each channel then receives a weight in {-1, 0, +1}:

    +1  for a foreground channel where mu_f(p) > mu_b(p)
    -1  for a background channel where mu_f(p) < mu_b(p)
     0  otherwise (including equality)

The weighted channel average is clamped at zero, upsampled to the original
resolution, and min-max normalized to [0, 1] (all-zero maps stay zero).
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import FeatureMap
from .markers import BACKGROUND, FOREGROUND


@dataclass(frozen=True)
class DecoderConfig:
    neighborhood: int = 1          # odd window for the channel means
    upsample: str = "bilinear"     # or "nearest"

    def __post_init__(self):
        if self.neighborhood < 1 or self.neighborhood % 2 == 0:
            raise ValueError("neighborhood must be odd and >= 1")
        if self.upsample not in ("bilinear", "nearest"):
            raise ValueError(f"unknown upsample mode {self.upsample!r}")


@dataclass
class SaliencyMap:
    """Single-channel [0, 1] map at input resolution."""

    data: np.ndarray  # (H, W) float64
    degenerate: Optional[str] = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2:
            raise ValueError("saliency map must be 2D")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


def _box_mean(values: np.ndarray, k: int) -> np.ndarray:
    """Centered k x k windowed mean with zero padding (padded zeros count)."""
    if k == 1:
        return values
    r = k // 2
    padded = np.pad(values, r, mode="constant")
    s = padded.cumsum(axis=0).cumsum(axis=1)
    s = np.pad(s, ((1, 0), (1, 0)), mode="constant")
    h, w = values.shape
    total = (
        s[k : k + h, k : k + w]
        - s[0:h, k : k + w]
        - s[k : k + h, 0:w]
        + s[0:h, 0:w]
    )
    return total / (k * k)


def channel_means(features, labels, neighborhood: int = 1):
    """Windowed foreground/background channel means.

    Returns (mu_f, mu_b, status) where status flags the presence of each
    class; a missing class yields an all-zero mean map rather than an error.
    """
    data = features.data if isinstance(features, FeatureMap) else np.asarray(features)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape[0] != data.shape[2]:
        raise ValueError("one label per channel required")
    fg = labels == FOREGROUND
    bg = labels == BACKGROUND
    h, w = data.shape[:2]

    def class_mean(mask):
        if not mask.any():
            return np.zeros((h, w))
        per_pixel = data[:, :, mask].sum(axis=2) / mask.sum()
        return _box_mean(per_pixel, neighborhood)

    status = {"has_foreground": bool(fg.any()), "has_background": bool(bg.any())}
    return class_mean(fg), class_mean(bg), status


def adaptive_weights(features, labels, mu_f, mu_b) -> np.ndarray:
    """Per-pixel, per-channel weights in {-1, 0, +1} from the three-case rule."""
    data = features.data if isinstance(features, FeatureMap) else np.asarray(features)
    labels = np.asarray(labels, dtype=np.int64)
    h, w, n = data.shape
    alphas = np.zeros((h, w, n), dtype=np.int8)
    fg_wins = mu_f > mu_b
    bg_wins = mu_f < mu_b
    for i in range(n):
        if labels[i] == FOREGROUND:
            alphas[:, :, i] = np.where(fg_wins, 1, 0)
        else:
            alphas[:, :, i] = np.where(bg_wins, -1, 0)
    return alphas


def resize(values: np.ndarray, out_h: int, out_w: int, mode: str) -> np.ndarray:
    """Nearest or bilinear resize with half-pixel-center sampling."""
    in_h, in_w = values.shape
    if (in_h, in_w) == (out_h, out_w):
        return values
    ys = (np.arange(out_h) + 0.5) * in_h / out_h - 0.5
    xs = (np.arange(out_w) + 0.5) * in_w / out_w - 0.5
    if mode == "nearest":
        yi = np.clip(np.rint(ys).astype(np.int64), 0, in_h - 1)
        xi = np.clip(np.rint(xs).astype(np.int64), 0, in_w - 1)
        return values[yi[:, None], xi[None, :]]
    ys = np.clip(ys, 0, in_h - 1)
    xs = np.clip(xs, 0, in_w - 1)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    top = values[y0[:, None], x0[None, :]] * (1 - wx) + values[y0[:, None], x1[None, :]] * wx
    bot = values[y1[:, None], x0[None, :]] * (1 - wx) + values[y1[:, None], x1[None, :]] * wx
    return top * (1 - wy) + bot * wy


def decode(features, labels, config: DecoderConfig = DecoderConfig(),
           target_size: Optional[tuple] = None) -> SaliencyMap:
    """Weighted channel average -> ReLU -> upsample -> min-max normalize.

    ``target_size`` is (width, height) of the original image; defaults to the
    feature resolution.
    """
    data = features.data if isinstance(features, FeatureMap) else np.asarray(features)
    labels = np.asarray(labels, dtype=np.int64)
    mu_f, mu_b, status = channel_means(data, labels, config.neighborhood)
    alphas = adaptive_weights(data, labels, mu_f, mu_b)
    combined = (alphas * data).sum(axis=2) / data.shape[2]
    combined = np.maximum(combined, 0.0)
    if target_size is not None:
        tw, th = target_size
        combined = resize(combined, th, tw, config.upsample)
    peak = combined.max()
    lo = combined.min()
    if peak > lo:
        combined = (combined - lo) / (peak - lo)
    elif peak > 0.0:  # constant positive map normalizes to 1
        combined = np.ones_like(combined)
    degenerate = None
    if not status["has_foreground"]:
        degenerate = "no foreground channels"
    elif not status["has_background"]:
        degenerate = "no background channels"
    return SaliencyMap(data=combined, degenerate=degenerate)


def decode_progressive(model, image: FeatureMap,
                       config: DecoderConfig = DecoderConfig()) -> list:
    """Decode every block's output at input resolution (one map per block)."""
    from .encoder import forward_encoder

    outputs = forward_encoder(model, image)
    return [
        decode(out, model.blocks[i].bank.labels, config,
               target_size=(image.width, image.height))
        for i, out in enumerate(outputs)
    ]
