"""Dataset handling, synthetic data, grid search, and end-to-end runs.

A dataset root holds three subdirectories::

    root/images/   8-bit PNGs
    root/markers/  <image>.json marker files (present only for marked images)
    root/gt/       <image>.png binary ground-truth masks (optional)

The synthetic generator produces desk-scale scenes in the same layout:
elliptical "egg" targets with a distinct color and mild texture among small
irregular impurity blobs on a noisy background, plus exact masks and
programmatic markers for the first images.  Impurity areas stay below the
default component-size filter so delineation can drop them; target areas fall
inside it.
"""

import json
import time
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__, imgio
from .core import FeatureMap
from .decoder import DecoderConfig, decode, decode_progressive
from .encoder import BlockSpec, count_parameters, forward_encoder, train_encoder
from .markers import (
    BACKGROUND,
    FOREGROUND,
    Marker,
    MarkerSet,
    load_marker_file,
    save_marker_file,
)
from .metrics import EvalReport, evaluate_pair
from .postproc import PostprocParams, refine


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass
class PipelineConfig:
    dataset: Path
    mode: str = "bofp"
    blocks: list = field(default_factory=lambda: [BlockSpec(), BlockSpec()])
    decoder: DecoderConfig = field(default_factory=DecoderConfig)
    postproc: PostprocParams = field(default_factory=PostprocParams)
    beta_sq: float = 0.3
    seed: int = 42
    train_ids: list = field(default_factory=list)  # empty: every marked image

    @classmethod
    def from_dict(cls, obj: dict, base_dir: Path = Path(".")) -> "PipelineConfig":
        dataset = Path(obj["dataset"])
        if not dataset.is_absolute():
            dataset = base_dir / dataset
        blocks = [BlockSpec.from_dict(b) for b in obj.get("blocks", [{}])]
        dec = obj.get("decoder", {})
        post = obj.get("postproc", {})
        return cls(
            dataset=dataset,
            mode=obj.get("mode", "bofp"),
            blocks=blocks,
            decoder=DecoderConfig(
                neighborhood=dec.get("neighborhood", 1),
                upsample=dec.get("upsample", "bilinear"),
            ),
            postproc=PostprocParams(
                morph_radius=post.get("morph_radius", 2),
                min_area=post.get("min_area", 1000),
                max_area=post.get("max_area", 9000),
            ),
            beta_sq=obj.get("beta_sq", 0.3),
            seed=obj.get("seed", 42),
            train_ids=list(obj.get("train_ids", [])),
        )

    @classmethod
    def from_json(cls, path) -> "PipelineConfig":
        path = Path(path)
        return cls.from_dict(json.loads(path.read_text()), base_dir=path.parent)

    def to_dict(self) -> dict:
        return {
            "dataset": str(self.dataset),
            "mode": self.mode,
            "blocks": [b.to_dict() for b in self.blocks],
            "decoder": {
                "neighborhood": self.decoder.neighborhood,
                "upsample": self.decoder.upsample,
            },
            "postproc": {
                "morph_radius": self.postproc.morph_radius,
                "min_area": self.postproc.min_area,
                "max_area": self.postproc.max_area,
            },
            "beta_sq": self.beta_sq,
            "seed": self.seed,
            "train_ids": list(self.train_ids),
        }


@dataclass
class GridSpec:
    kernel_sizes: tuple = (3, 5, 7)
    kernels_per_marker: tuple = (1, 2, 3, 4)
    block_counts: tuple = (1, 2, 3, 4)

    def __post_init__(self):
        if not self.kernel_sizes or not self.kernels_per_marker or not self.block_counts:
            raise ValueError("grid axes must be nonempty")

    def points(self):
        for k in self.kernel_sizes:
            for c in self.kernels_per_marker:
                for nb in self.block_counts:
                    yield k, c, nb


# ---------------------------------------------------------------------------
# ingestion
# ---------------------------------------------------------------------------

@dataclass
class ImageEntry:
    image_id: str
    image_path: Path
    marker_path: Path = None
    gt_path: Path = None
    width: int = 0
    height: int = 0
    gt_mismatch: bool = False


@dataclass
class DatasetIndex:
    root: Path
    entries: dict = field(default_factory=dict)

    def ids(self) -> list:
        return sorted(self.entries)

    def trainable(self) -> list:
        return [i for i in self.ids() if self.entries[i].marker_path is not None]

    def evaluable(self) -> list:
        return [
            i for i in self.ids()
            if self.entries[i].gt_path is not None and not self.entries[i].gt_mismatch
        ]

    def load_image(self, image_id: str) -> FeatureMap:
        return imgio.load_image(self.entries[image_id].image_path)

    def load_markers(self, image_id: str) -> MarkerSet:
        return load_marker_file(self.entries[image_id].marker_path)

    def load_gt(self, image_id: str) -> np.ndarray:
        return imgio.load_mask(self.entries[image_id].gt_path)


def ingest(root) -> DatasetIndex:
    """Index a dataset root; missing images/ is fatal, everything else soft."""
    root = Path(root)
    images_dir = root / "images"
    if not images_dir.is_dir():
        raise FileNotFoundError(f"dataset root {root} has no images/ directory")
    markers_dir = root / "markers"
    gt_dir = root / "gt"
    index = DatasetIndex(root=root)
    for path in sorted(images_dir.glob("*.png")):
        image_id = path.stem
        from PIL import Image

        with Image.open(path) as img:
            width, height = img.size
        entry = ImageEntry(image_id=image_id, image_path=path,
                           width=width, height=height)
        marker_path = markers_dir / f"{image_id}.json"
        if marker_path.is_file():
            entry.marker_path = marker_path
        gt_path = gt_dir / f"{image_id}.png"
        if gt_path.is_file():
            with Image.open(gt_path) as gt_img:
                if gt_img.size != (width, height):
                    entry.gt_mismatch = True
                    warnings.warn(
                        f"{image_id}: ground truth size {gt_img.size} does not "
                        f"match image {width}x{height}; excluded from metrics"
                    )
            entry.gt_path = gt_path
        index.entries[image_id] = entry
    return index


# ---------------------------------------------------------------------------
# synthetic dataset
# ---------------------------------------------------------------------------

_BG_COLOR = np.array([0.82, 0.79, 0.72])
_EGG_COLOR = np.array([0.52, 0.33, 0.18])
_IMPURITY_COLORS = (
    np.array([0.50, 0.36, 0.24]),  # egg-like brown: a genuinely confusable blob
    np.array([0.45, 0.50, 0.56]),
    np.array([0.38, 0.42, 0.36]),
)


def _ellipse_mask(h, w, cx, cy, a, b, angle):
    yy, xx = np.mgrid[0:h, 0:w]
    ca, sa = np.cos(angle), np.sin(angle)
    u = (xx - cx) * ca + (yy - cy) * sa
    v = -(xx - cx) * sa + (yy - cy) * ca
    return (u / a) ** 2 + (v / b) ** 2 <= 1.0


def synth_dataset(root, seed: int = 42, n_images: int = 25, size: int = 256,
                  objects: tuple = (1, 3), object_area: tuple = (1500, 4500),
                  impurities: tuple = (5, 12), marked: int = 2) -> DatasetIndex:
    """Generate a deterministic desk-scale detection dataset.

    ``objects`` is the per-image target-count range (inclusive), ``object_area``
    the target pixel-area range, ``impurities`` how many distractor blobs to
    scatter.  The first ``marked`` images also receive programmatic markers:
    foreground disks on each target, background disks on impurities and plain
    background.
    """
    root = Path(root)
    for sub in ("images", "markers", "gt"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    h = w = size

    for n in range(n_images):
        image_id = f"img{n:03d}"
        img = np.empty((h, w, 3))
        img[:] = _BG_COLOR
        img += rng.normal(0.0, 0.015, size=(h, w, 3))
        gt = np.zeros((h, w), dtype=bool)

        n_eggs = int(rng.integers(objects[0], objects[1] + 1))
        egg_centers = []
        for _ in range(n_eggs):
            for _attempt in range(50):
                area = float(rng.uniform(*object_area))
                ratio = float(rng.uniform(1.2, 2.0))
                b = np.sqrt(area / (np.pi * ratio))
                a = ratio * b
                margin = int(np.ceil(a)) + 6
                if 2 * margin >= min(w, h):  # target cannot fit; try smaller
                    continue
                cx = float(rng.uniform(margin, w - margin))
                cy = float(rng.uniform(margin, h - margin))
                if all((cx - ex) ** 2 + (cy - ey) ** 2 > (a + ea + 8) ** 2
                       for ex, ey, ea in egg_centers):
                    break
            else:
                continue
            angle = float(rng.uniform(0, np.pi))
            mask = _ellipse_mask(h, w, cx, cy, a, b, angle)
            shade = rng.uniform(0.92, 1.08)
            yy, xx = np.nonzero(mask)
            texture = 0.05 * np.sin(xx / 3.0) * np.cos(yy / 4.0)
            color = np.clip(_EGG_COLOR * shade, 0, 1)
            img[mask] = color + texture[:, None]
            # darker rim for a shell-like look
            rim = mask & ~_ellipse_mask(h, w, cx, cy, max(a - 2.5, 1), max(b - 2.5, 1), angle)
            img[rim] = np.clip(color * 0.75, 0, 1)
            gt |= mask
            egg_centers.append((cx, cy, a))

        impurity_centers = []
        n_imp = int(rng.integers(impurities[0], impurities[1] + 1))
        for _ in range(n_imp):
            radius = float(rng.uniform(4, 14))
            cx = float(rng.uniform(radius + 2, w - radius - 2))
            cy = float(rng.uniform(radius + 2, h - radius - 2))
            stretch = float(rng.uniform(0.6, 1.0))
            angle = float(rng.uniform(0, np.pi))
            mask = _ellipse_mask(h, w, cx, cy, radius, radius * stretch, angle)
            if (mask & gt).any():
                continue
            color = _IMPURITY_COLORS[int(rng.integers(len(_IMPURITY_COLORS)))]
            img[mask] = np.clip(color * rng.uniform(0.85, 1.15), 0, 1)
            impurity_centers.append((cx, cy))

        img = np.clip(img, 0, 1)
        imgio.save_rgb(root / "images" / f"{image_id}.png", img)
        imgio.save_mask(root / "gt" / f"{image_id}.png", gt)

        if n < marked:
            marker_list = []
            mid = 1
            for cx, cy, a in egg_centers:
                for off in (-a / 3, a / 3):
                    marker_list.append(Marker(id=mid, x=int(round(cx + off)),
                                              y=int(round(cy)), label=FOREGROUND))
                    mid += 1
            for cx, cy in impurity_centers[:3]:
                marker_list.append(Marker(id=mid, x=int(round(cx)),
                                          y=int(round(cy)), label=BACKGROUND))
                mid += 1
            for bx, by in ((20, 20), (w - 20, h - 20)):
                if not gt[by, bx]:
                    marker_list.append(Marker(id=mid, x=bx, y=by, label=BACKGROUND))
                    mid += 1
            save_marker_file(root / "markers" / f"{image_id}.json",
                             MarkerSet(image_id=image_id, markers=marker_list))

    return ingest(root)


# ---------------------------------------------------------------------------
# orchestration
# ---------------------------------------------------------------------------

def _resolve_train_ids(index: DatasetIndex, config: PipelineConfig) -> list:
    if config.train_ids:
        missing = [i for i in config.train_ids if i not in index.entries]
        if missing:
            raise ValueError(f"train_ids not in dataset: {missing}")
        unmarked = [
            i for i in config.train_ids if index.entries[i].marker_path is None
        ]
        if unmarked:
            raise ValueError(f"train_ids without marker files: {unmarked}")
        return list(config.train_ids)
    return index.trainable()


def train_from_config(config: PipelineConfig, index: DatasetIndex = None):
    """Train the configured encoder from the dataset's marked images."""
    if index is None:
        index = ingest(config.dataset)
    train_ids = _resolve_train_ids(index, config)
    if not train_ids:
        raise ValueError("no marked images; training refused")
    images = {i: index.load_image(i) for i in train_ids}
    marker_sets = [index.load_markers(i) for i in train_ids]
    return train_encoder(images, marker_sets, config.blocks, config.mode,
                         seed=config.seed), index, train_ids


def run_end_to_end(config: PipelineConfig, out_dir) -> dict:
    """Train, decode progressively, refine, evaluate; write all artifacts.

    Returns the manifest dict (also written to ``out_dir/manifest.json``).
    Per-block saliency maps and refined masks land under saliency/ and
    refined/; metrics of the raw final-block saliency and of the refined
    masks are written as separate reports.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        return _run_end_to_end(config, out_dir)
    except Exception as exc:
        # partial outputs stay on disk; the marker records where it stopped
        (out_dir / "FAILED.json").write_text(json.dumps(
            {"error": f"{type(exc).__name__}: {exc}"}, indent=2) + "\n")
        raise


def _run_end_to_end(config: PipelineConfig, out_dir: Path) -> dict:
    stage_seconds = {}

    t0 = time.perf_counter()
    result, index, train_ids = train_from_config(config)
    model = result.model
    stage_seconds["train"] = time.perf_counter() - t0

    from .encoder import save_model

    save_model(model, out_dir / "model")

    eval_ids = [i for i in index.evaluable() if i not in train_ids]
    infer_ids = sorted(set(eval_ids) | set(train_ids))

    (out_dir / "saliency").mkdir(exist_ok=True)
    (out_dir / "refined").mkdir(exist_ok=True)
    report_raw = EvalReport(beta_sq=config.beta_sq)
    report_refined = EvalReport(beta_sq=config.beta_sq)
    decode_s = refine_s = eval_s = 0.0

    for image_id in infer_ids:
        image = index.load_image(image_id)
        t0 = time.perf_counter()
        maps = decode_progressive(model, image, config.decoder)
        decode_s += time.perf_counter() - t0
        for bi, sal in enumerate(maps, start=1):
            imgio.save_gray(out_dir / "saliency" / f"{image_id}_block{bi}.png",
                            sal.data)
        t0 = time.perf_counter()
        refined = refine(maps[-1], image, config.postproc)
        refine_s += time.perf_counter() - t0
        imgio.save_mask(out_dir / "refined" / f"{image_id}.png",
                        refined.data > 0.5)
        if image_id in eval_ids:
            t0 = time.perf_counter()
            gt = index.load_gt(image_id)
            raw = evaluate_pair(maps[-1], gt, config.beta_sq)
            report_raw.add(image_id, raw["f_beta"], raw["mae"],
                           raw["weighted_f"], raw["curve"], raw["degenerate"])
            ref = evaluate_pair(refined, gt, config.beta_sq,
                                binarizer=lambda s: s > 0.5)
            report_refined.add(image_id, ref["f_beta"], ref["mae"],
                               ref["weighted_f"], ref["curve"],
                               ref["degenerate"])
            eval_s += time.perf_counter() - t0

    stage_seconds["decode"] = decode_s
    stage_seconds["refine"] = refine_s
    stage_seconds["evaluate"] = eval_s

    report_raw.save_json(out_dir / "report_raw.json")
    report_refined.save_json(out_dir / "report_refined.json")
    report_refined.save_csv(out_dir / "report_refined.csv")
    report_refined.save_curve_csv(out_dir / "curve_refined.csv")

    manifest = {
        "version": __version__,
        "numpy": np.__version__,
        "seed": config.seed,
        "mode": config.mode,
        "config": config.to_dict(),
        "train_ids": train_ids,
        "evaluated_ids": eval_ids,
        "kmeans_invocations": result.stats.kmeans_invocations,
        "estimation_seconds": result.stats.estimation_seconds,
        "parameter_count": count_parameters(model),
        "stage_seconds": stage_seconds,
        "metrics_raw": report_raw.summary(),
        "metrics_refined": report_refined.summary(),
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest


def grid_search(config: PipelineConfig, grid: GridSpec, index: DatasetIndex = None):
    """Train every grid point and rank by post-refinement F (beta_sq = 1).

    Failures are recorded per point, never fatal.  The returned list is
    sorted by score descending (ties keep grid order).
    """
    if index is None:
        index = ingest(config.dataset)
    train_ids = _resolve_train_ids(index, config)
    if not train_ids:
        raise ValueError("no marked images; grid search refused")
    validation_ids = [i for i in index.evaluable() if i not in train_ids]
    images = {i: index.load_image(i) for i in train_ids}
    marker_sets = [index.load_markers(i) for i in train_ids]
    val_images = {i: index.load_image(i) for i in validation_ids}
    val_gt = {i: index.load_gt(i) for i in validation_ids}

    results = []
    for order, (k, c, nb) in enumerate(grid.points()):
        base = config.blocks[0] if config.blocks else BlockSpec()
        blocks = [replace(base, k=k, kernels_per_marker=c) for _ in range(nb)]
        point = {"k": k, "kernels_per_marker": c, "blocks": nb, "order": order}
        try:
            res = train_encoder(images, marker_sets, blocks, config.mode,
                                seed=config.seed)
            scores = []
            for image_id in validation_ids:
                image = val_images[image_id]
                outs = forward_encoder(res.model, image)
                sal = decode(outs[-1], res.model.blocks[-1].bank.labels,
                             config.decoder, target_size=(image.width, image.height))
                refined = refine(sal, image, config.postproc)
                scores.append(
                    evaluate_pair(refined, val_gt[image_id], beta_sq=1.0,
                                  binarizer=lambda s: s > 0.5)["f_beta"]
                )
            point["score"] = float(np.mean(scores)) if scores else 0.0
            point["model"] = res.model
            point["kmeans_invocations"] = res.stats.kmeans_invocations
        except Exception as exc:  # noqa: BLE001 - per-point isolation
            point["score"] = float("-inf")
            point["error"] = f"{type(exc).__name__}: {exc}"
        results.append(point)
    results.sort(key=lambda p: (-p["score"], p["order"]))
    return results


def score_pool(model, index: DatasetIndex, pool_ids, config: PipelineConfig) -> dict:
    """Post-refinement F (beta_sq = 1) per pool image, for selection loops."""
    scores = {}
    for image_id in pool_ids:
        image = index.load_image(image_id)
        outs = forward_encoder(model, image)
        sal = decode(outs[-1], model.blocks[-1].bank.labels, config.decoder,
                     target_size=(image.width, image.height))
        refined = refine(sal, image, config.postproc)
        gt = index.load_gt(image_id)
        scores[image_id] = {
            "f_beta": evaluate_pair(refined, gt, beta_sq=1.0,
                                    binarizer=lambda s: s > 0.5)["f_beta"],
            "mae": float(np.abs(refined.data - gt.astype(float)).mean()),
        }
    return scores


def select_training_images(scores: dict):
    """Suggest the lowest-scoring pool image (ties -> lowest id); None if empty."""
    if not scores:
        return None
    def key(item):
        value = item[1]["f_beta"] if isinstance(item[1], dict) else item[1]
        return (value, item[0])
    return min(scores.items(), key=key)[0]
