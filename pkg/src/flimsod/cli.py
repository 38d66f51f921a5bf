"""Command-line interface.

Subcommands: ingest, synth, train, infer, refine, eval, grid, serve.
Configuration comes from one JSON file (see PipelineConfig); --seed and
--mode override it per run.
"""

import argparse
import json
import sys
from pathlib import Path

from . import imgio
from .pipeline import (
    GridSpec,
    PipelineConfig,
    ingest,
    run_end_to_end,
    synth_dataset,
    train_from_config,
    grid_search,
)


def _load_config(args) -> PipelineConfig:
    if args.config:
        config = PipelineConfig.from_json(args.config)
    elif getattr(args, "dataset", None):
        config = PipelineConfig(dataset=Path(args.dataset))
    else:
        sys.exit("either --config or --dataset is required")
    if getattr(args, "mode", None):
        config.mode = args.mode
    if getattr(args, "seed", None) is not None:
        config.seed = args.seed
    return config


def _add_common(parser, dataset=True):
    parser.add_argument("--config", help="pipeline config JSON")
    if dataset:
        parser.add_argument("--dataset", help="dataset root (instead of --config)")
    parser.add_argument("--mode", choices=("cluster", "bofp"))
    parser.add_argument("--seed", type=int)


def cmd_ingest(args):
    index = ingest(args.dataset or _load_config(args).dataset)
    report = {
        "root": str(index.root),
        "images": len(index.entries),
        "trainable": index.trainable(),
        "evaluable": index.evaluable(),
        "mismatched": [i for i, e in index.entries.items() if e.gt_mismatch],
    }
    print(json.dumps(report, indent=2))


def cmd_synth(args):
    index = synth_dataset(
        args.out,
        seed=args.seed if args.seed is not None else 42,
        n_images=args.images,
        size=args.size,
        marked=args.marked,
        object_area=tuple(args.object_area),
    )
    print(json.dumps({"root": str(index.root), "images": len(index.entries),
                      "marked": index.trainable()}, indent=2))


def cmd_train(args):
    config = _load_config(args)
    out = Path(args.out)
    manifest = run_end_to_end(config, out)
    print(json.dumps({"out": str(out),
                      "kmeans_invocations": manifest["kmeans_invocations"],
                      "parameter_count": manifest["parameter_count"],
                      "metrics_refined": manifest["metrics_refined"]}, indent=2))


def cmd_infer(args):
    from .decoder import decode_progressive
    from .encoder import load_model

    config = _load_config(args)
    model = load_model(args.model)
    index = ingest(config.dataset)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ids = args.images or index.ids()
    for image_id in ids:
        image = index.load_image(image_id)
        for bi, sal in enumerate(decode_progressive(model, image, config.decoder),
                                 start=1):
            imgio.save_gray(out / f"{image_id}_block{bi}.png", sal.data)
    print(json.dumps({"out": str(out), "images": list(ids)}, indent=2))


def cmd_refine(args):
    from .decoder import SaliencyMap
    from .postproc import refine

    config = _load_config(args)
    index = ingest(config.dataset)
    saliency_dir = Path(args.saliency)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    refined_ids = []
    for image_id in index.ids():
        # accept both plain saliency files and infer's per-block names
        if args.block:
            candidates = [saliency_dir / f"{image_id}_block{args.block}.png"]
        else:
            candidates = [saliency_dir / f"{image_id}.png"] + sorted(
                saliency_dir.glob(f"{image_id}_block*.png"), reverse=True)
        path = next((p for p in candidates if p.is_file()), None)
        if path is None:
            continue
        sal = SaliencyMap(data=imgio.load_image(path).data[:, :, 0])
        image = index.load_image(image_id)
        result = refine(sal, image, config.postproc)
        imgio.save_mask(out / f"{image_id}.png", result.data > 0.5)
        refined_ids.append(image_id)
    print(json.dumps({"out": str(out), "refined": refined_ids}, indent=2))


def cmd_eval(args):
    from .metrics import EvalReport, evaluate_pair

    config = _load_config(args)
    index = ingest(config.dataset)
    pred_dir = Path(args.pred)
    report = EvalReport(beta_sq=config.beta_sq)
    for image_id in index.evaluable():
        path = pred_dir / f"{image_id}.png"
        if not path.is_file():
            continue
        pred = imgio.load_image(path).data[:, :, 0]
        res = evaluate_pair(pred, index.load_gt(image_id), config.beta_sq)
        report.add(image_id, res["f_beta"], res["mae"], res["weighted_f"],
                   res["curve"], res["degenerate"])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report.save_json(out / "report.json")
    report.save_csv(out / "report.csv")
    report.save_curve_csv(out / "curve.csv")
    if args.plot:
        report.save_curve_svg(out / "curve.svg")
    print(json.dumps(report.summary(), indent=2))


def cmd_grid(args):
    config = _load_config(args)
    grid = GridSpec(
        kernel_sizes=tuple(int(v) for v in args.kernel_sizes.split(",")),
        kernels_per_marker=tuple(int(v) for v in args.kernels.split(",")),
        block_counts=tuple(int(v) for v in args.blocks.split(",")),
    )
    results = grid_search(config, grid)
    rows = [{k: v for k, v in p.items() if k != "model"} for p in results]
    if args.out:
        Path(args.out).write_text(json.dumps(rows, indent=2) + "\n")
    print(json.dumps(rows[: args.top], indent=2))


def cmd_serve(args):
    import uvicorn

    from .service import create_app

    config = _load_config(args)
    ui_dir = Path(args.ui) if args.ui else Path.cwd() / "frontend" / "dist"
    app = create_app(config, ui_dir=ui_dir if ui_dir.is_dir() else None)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flimsod",
        description="Marker-trained flyweight salient-object detection",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="index and validate a dataset root")
    _add_common(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--images", type=int, default=25)
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--marked", type=int, default=2)
    p.add_argument("--object-area", type=int, nargs=2, default=(1500, 4500),
                   metavar=("MIN", "MAX"))
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train, decode, refine and evaluate")
    _add_common(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="per-block saliency maps for images")
    _add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--images", nargs="*")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("refine", help="delineate saved saliency maps")
    _add_common(p)
    p.add_argument("--saliency", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--block", type=int,
                   help="refine this block's maps (default: deepest found)")
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("eval", help="score saved predictions against gt")
    _add_common(p)
    p.add_argument("--pred", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--plot", action="store_true", help="also emit an SVG curve")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("grid", help="hyperparameter grid search")
    _add_common(p)
    p.add_argument("--kernel-sizes", default="3,5,7")
    p.add_argument("--kernels", default="1,2,3,4")
    p.add_argument("--blocks", default="1,2,3,4")
    p.add_argument("--top", type=int, default=5)
    p.add_argument("--out")
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("serve", help="local annotation/training service")
    _add_common(p)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--ui", help="static UI assets directory (default: ./frontend/dist)")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    args.func(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
