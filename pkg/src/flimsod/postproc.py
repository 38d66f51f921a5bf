"""Saliency refinement: thresholding, morphology, seed-competition delineation.

The refinement pipeline turns a saliency map into an object mask:

1. Otsu binarization over the 8-bit quantized map,
2. morphological opening and closing with a Euclidean disk,
3. 8-connected component filtering by pixel-count range,
4. erosion of survivors -> internal seeds; the complement of a dilated
   internal region -> external seeds,
5. seeded optimum-path forest over the original colors: trees grow from all
   seeds at once with max-arc path costs, each arc costing the color distance
   to the conquering tree's running mean (see :func:`flimsod.kernels.grow_forest`);
   pixels conquered by internal trees form the mask.
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .core import FeatureMap
from .decoder import SaliencyMap
from .imgio import quantize
from .kernels import grow_forest

EIGHT_CONN = np.ones((3, 3), dtype=bool)


@dataclass
class PostprocParams:
    morph_radius: int = 2
    min_area: int = 1000
    max_area: int = 9000


@dataclass
class SeedSet:
    internal: np.ndarray  # bool (H, W)
    external: np.ndarray  # bool (H, W)

    def __post_init__(self):
        if self.internal.shape != self.external.shape:
            raise ValueError("seed masks must share dimensions")
        if np.any(self.internal & self.external):
            raise ValueError("internal and external seeds overlap")

    @property
    def empty(self) -> bool:
        return not self.internal.any()


def otsu(saliency) -> float:
    """Threshold in [0, 1] maximizing between-class variance over 256 bins.

    Ties resolve to the lowest threshold; a constant image returns its own
    value, so strict-> binarization yields an empty mask.
    """
    values = saliency.data if isinstance(saliency, SaliencyMap) else np.asarray(saliency)
    q = quantize(values)
    hist = np.bincount(q.ravel(), minlength=256).astype(np.float64)
    total = hist.sum()
    w0 = np.cumsum(hist)                     # pixels at level <= t
    m0 = np.cumsum(hist * np.arange(256))    # level mass at <= t
    w1 = total - w0
    mean_total = m0[-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        mu0 = m0 / w0
        mu1 = (mean_total - m0) / w1
        variance = w0 * w1 * (mu0 - mu1) ** 2
    variance[~np.isfinite(variance)] = 0.0
    if variance.max() == 0.0:                # constant image
        return float(q.ravel()[0]) / 255.0
    return float(np.argmax(variance)) / 255.0


def binarize(saliency, threshold: float) -> np.ndarray:
    """Strict > comparison on the 8-bit quantized map."""
    values = saliency.data if isinstance(saliency, SaliencyMap) else np.asarray(saliency)
    return quantize(values) > int(round(threshold * 255.0))


def otsu_mask(saliency) -> np.ndarray:
    return binarize(saliency, otsu(saliency))


def disk(radius: float) -> np.ndarray:
    """Euclidean disk structuring element."""
    r = int(np.floor(radius))
    yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
    return (xx ** 2 + yy ** 2) <= radius ** 2


def erode(mask: np.ndarray, radius: float) -> np.ndarray:
    # out-of-domain treated as foreground so erode/dilate stay exact duals
    return ndimage.binary_erosion(mask, structure=disk(radius), border_value=1)


def dilate(mask: np.ndarray, radius: float) -> np.ndarray:
    return ndimage.binary_dilation(mask, structure=disk(radius), border_value=0)


def area_filter(mask: np.ndarray, min_area: int = 1000, max_area: int = 9000) -> np.ndarray:
    """Keep 8-connected components whose pixel count lies in [min, max]."""
    labeled, n = ndimage.label(mask, structure=EIGHT_CONN)
    if n == 0:
        return np.zeros_like(mask, dtype=bool)
    counts = np.bincount(labeled.ravel(), minlength=n + 1)
    keep = (counts >= min_area) & (counts <= max_area)
    keep[0] = False
    return keep[labeled]


def seeds_from_saliency(saliency, params: PostprocParams = PostprocParams()) -> SeedSet:
    """Root-pixel estimation: Otsu -> open/close -> area filter -> erode."""
    mask = otsu_mask(saliency)
    r = params.morph_radius
    mask = dilate(erode(mask, r), r)   # opening
    mask = erode(dilate(mask, r), r)   # closing
    mask = area_filter(mask, params.min_area, params.max_area)
    internal = erode(mask, r)
    external = ~dilate(internal, 2 * r)
    if not internal.any():
        shape = internal.shape
        return SeedSet(internal=np.zeros(shape, bool), external=np.zeros(shape, bool))
    return SeedSet(internal=internal, external=external)


def dynamic_trees(image: FeatureMap, seeds: SeedSet) -> np.ndarray:
    """Grow the seeded forest over the image colors; returns the object mask.

    Empty internal seeds give an empty mask; with no external seeds the
    internal trees conquer everything.
    """
    if seeds.internal.shape != (image.height, image.width):
        raise ValueError("seed masks must match the image domain")
    if not seeds.internal.any():
        return np.zeros((image.height, image.width), dtype=bool)
    # internal seeds first so cost-zero ties resolve toward the object
    idx_int = np.flatnonzero(seeds.internal.ravel())
    idx_ext = np.flatnonzero(seeds.external.ravel())
    seed_idx = np.concatenate([idx_int, idx_ext])
    seed_labels = np.concatenate(
        [np.ones(idx_int.size, np.int64), np.full(idx_ext.size, 2, np.int64)]
    )
    labels, _ = grow_forest(image.data, seed_idx, seed_labels)
    return labels == 1


def refine(saliency, image: FeatureMap,
           params: PostprocParams = PostprocParams()) -> SaliencyMap:
    """Full delineation pipeline; returns a {0, 1}-valued saliency map."""
    seeds = seeds_from_saliency(saliency, params)
    if seeds.empty:
        return SaliencyMap(
            data=np.zeros((image.height, image.width)),
            degenerate="no internal seeds",
        )
    mask = dynamic_trees(image, seeds)
    return SaliencyMap(data=mask.astype(np.float64))
