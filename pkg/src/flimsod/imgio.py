"""PNG image I/O and the flat binary feature-map container.

Images are 8-bit PNG (RGB or grayscale) loaded to [0, 1] reals.  Feature maps
serialize to a little-endian binary container for debugging: a header of four
uint32 (width, height, channels, scale) followed by float64 data in row-major
(y, x, channel) order.
"""

from pathlib import Path

import numpy as np
from PIL import Image

from .core import FeatureMap

_HEADER_DTYPE = np.dtype("<u4")
_DATA_DTYPE = np.dtype("<f8")


def quantize(values: np.ndarray) -> np.ndarray:
    """[0, 1] reals to 8-bit levels; round half away from zero, like export."""
    return np.clip(np.floor(np.asarray(values, dtype=np.float64) * 255.0 + 0.5),
                   0, 255).astype(np.int64)


def load_image(path) -> FeatureMap:
    """Load an 8-bit PNG as a scale-1 feature map with values in [0, 1]."""
    img = Image.open(path)
    if img.mode == "L":
        arr = np.asarray(img, dtype=np.float64)[:, :, None]
    else:
        arr = np.asarray(img.convert("RGB"), dtype=np.float64)
    return FeatureMap(data=arr / 255.0, scale=1)


def load_mask(path) -> np.ndarray:
    """Load a binary mask PNG as a bool (H, W) array (values > 127 are true)."""
    img = Image.open(path).convert("L")
    return np.asarray(img) > 127


def save_gray(path, values: np.ndarray) -> None:
    """Write a [0, 1] float map as 8-bit grayscale PNG (value = round(255*v))."""
    q = quantize(values)
    Image.fromarray(q.astype(np.uint8), mode="L").save(path, format="PNG")


def save_mask(path, mask: np.ndarray) -> None:
    """Write a bool mask as {0, 255} grayscale PNG."""
    Image.fromarray(np.where(mask, 255, 0).astype(np.uint8), mode="L").save(
        path, format="PNG"
    )


def save_rgb(path, values: np.ndarray) -> None:
    """Write an (H, W, 3) [0, 1] float array as 8-bit RGB PNG."""
    q = np.clip(np.rint(np.asarray(values, dtype=np.float64) * 255.0), 0, 255)
    Image.fromarray(q.astype(np.uint8), mode="RGB").save(path, format="PNG")


def write_feature_map(path, fmap: FeatureMap) -> None:
    header = np.array([fmap.width, fmap.height, fmap.channels, fmap.scale],
                      dtype=_HEADER_DTYPE)
    with open(path, "wb") as fh:
        fh.write(header.tobytes())
        fh.write(np.ascontiguousarray(fmap.data, dtype=_DATA_DTYPE).tobytes())


def read_feature_map(path) -> FeatureMap:
    raw = Path(path).read_bytes()
    header = np.frombuffer(raw[:16], dtype=_HEADER_DTYPE)
    width, height, channels, scale = (int(v) for v in header)
    data = np.frombuffer(raw[16:], dtype=_DATA_DTYPE)
    if data.size != width * height * channels:
        raise ValueError(
            f"container holds {data.size} values, header implies "
            f"{width * height * channels}"
        )
    return FeatureMap(data=data.reshape(height, width, channels).copy(), scale=scale)
