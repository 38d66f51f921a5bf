"""Local HTTP/JSON facade over the pipeline for the annotation UI.

Endpoints (all JSON unless noted):

    GET  /images                       image listing
    GET  /images/{id}                  PNG bytes
    GET  /images/{id}/markers          marker JSON
    PUT  /images/{id}/markers          replace markers (canonical persist)
    POST /train                        {mode, blockspecs, seed} -> job id
    GET  /train/status                 job state + stage timings
    GET  /images/{id}/saliency?block=n&refined=bool   PNG
    GET  /validation/scores            per-image F / MAE on the pool
    GET  /suggest-next                 lowest-scoring pool image

Single in-process session: one training job at a time, marker writes
invalidate the model, saliency responses carry an X-Model-Stale header when
markers changed after the serving model was trained.  Responses never expose
filesystem paths; the service binds localhost by default (desk tool).
"""

import io
import threading
import time
import uuid
import warnings
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, HTTPException, Query, Response
from fastapi.responses import JSONResponse

from . import imgio
from .decoder import decode
from .encoder import BlockSpec, forward_encoder, train_encoder
from .markers import MarkerSet, canonical_json, marker_set_from_dict, save_marker_file
from .pipeline import PipelineConfig, ingest, score_pool, select_training_images
from .postproc import refine


class Session:
    """Mutable service state guarded by one writer lock."""

    def __init__(self, config: PipelineConfig):
        self.config = config
        self.index = ingest(config.dataset)
        self.lock = threading.Lock()
        self.model = None
        self.model_result = None
        self.trained_marker_version = -1
        self.marker_version = 0
        self.training = {"status": "idle", "job_id": None, "stages": {}, "error": None}
        self.scores = {}
        self.train_ids = []
        self._saliency_cache = {}

    @property
    def model_stale(self) -> bool:
        return self.model is not None and self.marker_version != self.trained_marker_version


def _marker_bounds_errors(ms: MarkerSet, width: int, height: int) -> list:
    errors = []
    for i, m in enumerate(ms.markers):
        if not (0 <= m.x < width and 0 <= m.y < height):
            errors.append(
                {"field": f"markers[{i}]", "error":
                 f"center ({m.x}, {m.y}) outside {width}x{height} image"}
            )
    return errors


def create_app(config: PipelineConfig, ui_dir: Optional[Path] = None) -> FastAPI:
    app = FastAPI(title="flimsod", version="0.1.0")
    session = Session(config)
    app.state.session = session

    @app.get("/images")
    def list_images():
        entries = []
        for image_id in session.index.ids():
            e = session.index.entries[image_id]
            entries.append({
                "id": image_id,
                "width": e.width,
                "height": e.height,
                "marked": e.marker_path is not None,
                "has_gt": e.gt_path is not None and not e.gt_mismatch,
                "is_training": image_id in session.train_ids,
            })
        return {"images": entries, "model_stale": session.model_stale}

    @app.get("/images/{image_id}")
    def get_image(image_id: str):
        entry = session.index.entries.get(image_id)
        if entry is None:
            raise HTTPException(404, f"unknown image {image_id!r}")
        return Response(entry.image_path.read_bytes(), media_type="image/png")

    @app.get("/images/{image_id}/markers")
    def get_markers(image_id: str):
        entry = session.index.entries.get(image_id)
        if entry is None:
            raise HTTPException(404, f"unknown image {image_id!r}")
        if entry.marker_path is None:
            ms = MarkerSet(image_id=image_id, markers=[])
        else:
            ms = session.index.load_markers(image_id)
        return Response(canonical_json(ms), media_type="application/json",
                        headers={"X-Marker-Version": str(session.marker_version)})

    @app.put("/images/{image_id}/markers")
    def put_markers(image_id: str, body: dict):
        entry = session.index.entries.get(image_id)
        if entry is None:
            raise HTTPException(404, f"unknown image {image_id!r}")
        try:
            ms = marker_set_from_dict(body)
        except (ValueError, TypeError) as exc:
            return JSONResponse(status_code=400,
                                content={"error": str(exc), "field": "markers"})
        if ms.image_id != image_id:
            return JSONResponse(
                status_code=400,
                content={"error": f"body image {ms.image_id!r} != path id "
                         f"{image_id!r}", "field": "image"})
        bounds = _marker_bounds_errors(ms, entry.width, entry.height)
        if bounds:
            return JSONResponse(status_code=400, content={"errors": bounds})
        with session.lock:
            path = session.index.root / "markers" / f"{image_id}.json"
            path.parent.mkdir(exist_ok=True)
            if ms.markers:
                save_marker_file(path, ms)
                entry.marker_path = path
            else:
                if path.is_file():
                    path.unlink()
                entry.marker_path = None
            session.marker_version += 1
            version = session.marker_version
        return {"saved": image_id, "markers": len(ms.markers),
                "marker_version": version, "model_stale": session.model_stale}

    def _run_training(job_id: str, mode: str, blockspecs: list, seed: int,
                      marker_version: int):
        stages = {}
        try:
            t0 = time.perf_counter()
            train_ids = session.index.trainable()
            images = {i: session.index.load_image(i) for i in train_ids}
            marker_sets = [session.index.load_markers(i) for i in train_ids]
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                result = train_encoder(images, marker_sets, blockspecs, mode,
                                       seed=seed)
            stages["train"] = time.perf_counter() - t0

            t0 = time.perf_counter()
            pool = [i for i in session.index.evaluable() if i not in train_ids]
            scores = score_pool(result.model, session.index, pool, session.config)
            stages["validate"] = time.perf_counter() - t0

            with session.lock:
                session.model = result.model
                session.model_result = result
                session.scores = scores
                session.train_ids = train_ids
                session.trained_marker_version = marker_version
                session._saliency_cache.clear()
                session.training = {"status": "done", "job_id": job_id,
                                    "stages": stages, "error": None}
        except Exception as exc:  # noqa: BLE001 - reported via status endpoint
            with session.lock:
                session.training = {"status": "failed", "job_id": job_id,
                                    "stages": stages,
                                    "error": f"{type(exc).__name__}: {exc}"}

    @app.post("/train")
    def post_train(body: Optional[dict] = None):
        body = body or {}
        with session.lock:
            if session.training["status"] == "running":
                return JSONResponse(
                    status_code=409,
                    content={"error": "a training job is already running",
                             "job_id": session.training["job_id"]})
            session.index = ingest(session.config.dataset)  # pick up new markers
            if not session.index.trainable():
                return JSONResponse(status_code=400,
                                    content={"error": "no marked images"})
            mode = body.get("mode", session.config.mode)
            seed = int(body.get("seed", session.config.seed))
            raw_blocks = body.get("blockspecs")
            try:
                blockspecs = ([BlockSpec.from_dict(b) for b in raw_blocks]
                              if raw_blocks else list(session.config.blocks))
            except (ValueError, TypeError) as exc:
                return JSONResponse(status_code=400,
                                    content={"error": str(exc),
                                             "field": "blockspecs"})
            job_id = uuid.uuid4().hex[:12]
            session.training = {"status": "running", "job_id": job_id,
                                "stages": {}, "error": None}
            marker_version = session.marker_version
        thread = threading.Thread(
            target=_run_training,
            args=(job_id, mode, blockspecs, seed, marker_version),
            daemon=True,
        )
        thread.start()
        return {"job_id": job_id, "status": "running"}

    @app.get("/train/status")
    def train_status():
        return {**session.training, "model_stale": session.model_stale,
                "model_depth": session.model.depth if session.model else 0}

    @app.get("/images/{image_id}/saliency")
    def get_saliency(image_id: str, block: int = Query(default=0),
                     refined: bool = Query(default=False)):
        entry = session.index.entries.get(image_id)
        if entry is None:
            raise HTTPException(404, f"unknown image {image_id!r}")
        model = session.model
        if model is None:
            raise HTTPException(404, "no trained model yet; POST /train first")
        if block == 0:
            block = model.depth
        if not (1 <= block <= model.depth):
            raise HTTPException(
                404, f"block {block} out of range; model has {model.depth} blocks")
        key = (image_id, block, refined, session.trained_marker_version)
        cached = session._saliency_cache.get(key)
        if cached is None:
            image = session.index.load_image(image_id)
            outs = forward_encoder(model, image)
            sal = decode(outs[block - 1], model.blocks[block - 1].bank.labels,
                         session.config.decoder,
                         target_size=(image.width, image.height))
            if refined:
                sal = refine(sal, image, session.config.postproc)
            buf = io.BytesIO()
            imgio.save_gray(buf, sal.data)
            cached = buf.getvalue()
            session._saliency_cache[key] = cached
        return Response(cached, media_type="image/png",
                        headers={"X-Model-Stale": str(session.model_stale).lower()})

    @app.get("/validation/scores")
    def validation_scores():
        return {"scores": session.scores, "model_stale": session.model_stale,
                "trained": session.model is not None}

    @app.get("/suggest-next")
    def suggest_next():
        suggestion = select_training_images(session.scores)
        return {"suggestion": suggestion}

    if ui_dir is not None and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
