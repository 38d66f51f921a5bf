"""User-drawn labeled disk markers and their mapping across encoder scales.

Marker files are JSON, one per image, stored beside the image:

    { "image": "<file>",
      "markers": [ { "id": 1, "x": 10, "y": 12, "radius": 3.0,
                     "label": "foreground" } ] }
"""

import json
from dataclasses import dataclass, field

import numpy as np

FOREGROUND = 1
BACKGROUND = 2

_LABEL_NAMES = {FOREGROUND: "foreground", BACKGROUND: "background"}
_LABEL_CODES = {v: k for k, v in _LABEL_NAMES.items()}

DEFAULT_RADIUS = 3.0


@dataclass(frozen=True)
class Marker:
    """Labeled disk at original-image scale."""

    id: int
    x: int
    y: int
    label: int
    radius: float = DEFAULT_RADIUS

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError(f"marker radius must be positive, got {self.radius}")
        if self.label not in (FOREGROUND, BACKGROUND):
            raise ValueError(f"marker label must be 1 or 2, got {self.label}")


@dataclass
class MarkerSet:
    image_id: str
    markers: list = field(default_factory=list)

    def __post_init__(self):
        ids = [m.id for m in self.markers]
        if len(ids) != len(set(ids)):
            raise ValueError(f"duplicate marker ids in {self.image_id}")

    def __len__(self):
        return len(self.markers)


def rasterize(marker: Marker, width: int, height: int) -> np.ndarray:
    """Pixels within Euclidean distance ``radius`` of the center, clipped.

    Returns an (N, 2) int array of (x, y), sorted row-major.  The center must
    lie inside the domain.
    """
    if not (0 <= marker.x < width and 0 <= marker.y < height):
        raise ValueError(
            f"marker {marker.id} center {(marker.x, marker.y)} outside "
            f"{width}x{height} domain"
        )
    r = int(np.floor(marker.radius))
    ys = np.arange(max(0, marker.y - r), min(height, marker.y + r + 1))
    xs = np.arange(max(0, marker.x - r), min(width, marker.x + r + 1))
    gx, gy = np.meshgrid(xs, ys)
    inside = (gx - marker.x) ** 2 + (gy - marker.y) ** 2 <= marker.radius ** 2
    return np.stack([gx[inside], gy[inside]], axis=1).astype(np.int64)


def map_to_scale(pixels: np.ndarray, scale: int, width: int, height: int) -> np.ndarray:
    """Map scale-1 pixels down by ``scale`` (floor), dedupe, clamp to domain.

    ``width``/``height`` are the dimensions of the downsampled domain.
    """
    if scale < 1:
        raise ValueError(f"scale must be >= 1, got {scale}")
    pixels = np.asarray(pixels, dtype=np.int64).reshape(-1, 2)
    if pixels.shape[0] == 0:
        return pixels
    mapped = pixels // scale
    mapped[:, 0] = np.clip(mapped[:, 0], 0, width - 1)
    mapped[:, 1] = np.clip(mapped[:, 1], 0, height - 1)
    mapped = np.unique(mapped, axis=0)
    order = np.lexsort((mapped[:, 0], mapped[:, 1]))  # row-major for determinism
    return mapped[order]


# ---------------------------------------------------------------------------
# JSON interchange
# ---------------------------------------------------------------------------

def marker_set_to_dict(ms: MarkerSet) -> dict:
    return {
        "image": ms.image_id,
        "markers": [
            {
                "id": int(m.id),
                "x": int(m.x),
                "y": int(m.y),
                "radius": float(m.radius),
                "label": _LABEL_NAMES[m.label],
            }
            for m in sorted(ms.markers, key=lambda m: m.id)
        ],
    }


def marker_set_from_dict(obj: dict) -> MarkerSet:
    if not isinstance(obj, dict) or "image" not in obj or "markers" not in obj:
        raise ValueError("marker file must carry 'image' and 'markers' fields")
    markers = []
    for i, raw in enumerate(obj["markers"]):
        try:
            label = raw["label"]
            if label not in _LABEL_CODES:
                raise ValueError(
                    f"markers[{i}].label must be 'foreground' or 'background', "
                    f"got {label!r}"
                )
            markers.append(
                Marker(
                    id=int(raw["id"]),
                    x=int(raw["x"]),
                    y=int(raw["y"]),
                    radius=float(raw.get("radius", DEFAULT_RADIUS)),
                    label=_LABEL_CODES[label],
                )
            )
        except KeyError as exc:
            raise ValueError(f"markers[{i}] missing field {exc.args[0]!r}") from exc
    return MarkerSet(image_id=str(obj["image"]), markers=markers)


def canonical_json(ms: MarkerSet) -> str:
    """Canonical serialization: sorted keys, 2-space indent, trailing newline."""
    return json.dumps(marker_set_to_dict(ms), sort_keys=True, indent=2) + "\n"


def save_marker_file(path, ms: MarkerSet) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(canonical_json(ms))


def load_marker_file(path) -> MarkerSet:
    with open(path, "r", encoding="utf-8") as fh:
        return marker_set_from_dict(json.load(fh))
