"""Command-line pipeline: synth -> train-pose -> fit -> evaluate.

One JSON config drives every stage; --set key=value overrides individual
fields. Exit codes: 0 success, 1 computation failure, 2 configuration or
input error. SCENE_ALIGN_THREADS overrides the worker-pool size (results
are order-stable, so the thread count never changes outputs).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import fileio
from .align import IcpParams, SearchConfig, generate_hypotheses, icp_align
from .evaluation import (
    EvalConfig,
    GroundTruthInstance,
    ModelPrediction,
    detection_ap_3d,
    mean_ap,
    model_ap,
    pose_accuracy_curve,
)
from .geometry import crop_and_warp, encode_normal_image, estimate_normals
from .posenet import (
    TrainConfig,
    default_network_spec,
    load_weights,
    save_weights,
    train,
)
from .posenet.network import Network
from .render import Placement, render
from .select import default_selector_weights, fit_features, select_best
from .synthgen import make_dataset, mask_bounding_box


class ConfigError(Exception):
    pass


DEFAULT_CONFIG = {
    "seed": 0,
    "paths": {},
    "synth": {
        "models_per_cat": 50,
        "poses_per_model": 10,
        "boxes_per_pose": 5,
        "background_per_pose": 1,
        "crop_size": 48,
        "n_posebin": 8,
    },
    "train": {
        "learning_rate": 0.01,
        "momentum": 0.9,
        "weight_decay": 5e-4,
        "batch_size": 16,
        "epochs": 10,
        "input_side": 48,
    },
    "search": {
        "n_scale": 10,
        "n_models": 5,
        "k_pose": 2,
        "icp": {"n_iter": 50, "trim_fraction": 0.2, "tol_yaw": 1e-4, "tol_translation": 1e-4},
    },
    "eval": {"t_iou": 0.5, "t_agree": 7.0, "t_occlusion": 5.0, "t_iou_3d": 0.25},
    "threads": None,
}


def _merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = val
    return out


def load_config(path: str | None, overrides: list[str]) -> dict:
    cfg = DEFAULT_CONFIG
    if path is not None:
        if not Path(path).exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            cfg = _merge(DEFAULT_CONFIG, fileio.read_json(path))
        except json.JSONDecodeError as e:
            raise ConfigError(f"malformed config {path}: {e}") from e
    cfg = json.loads(json.dumps(cfg))  # deep copy
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, _, raw = item.partition("=")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = cfg
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"--set path {key!r} crosses a non-object field")
        node[parts[-1]] = value
    _validate_schema(cfg)
    return cfg


_SCHEMA = {
    "seed": int,
    "threads": (int, type(None)),
    "paths": dict,
    "synth": {
        "models_per_cat": int,
        "poses_per_model": int,
        "boxes_per_pose": int,
        "background_per_pose": int,
        "crop_size": int,
        "n_posebin": int,
    },
    "train": {
        "learning_rate": (int, float),
        "momentum": (int, float),
        "weight_decay": (int, float),
        "batch_size": int,
        "epochs": int,
        "input_side": int,
    },
    "search": {
        "n_scale": int,
        "n_models": int,
        "k_pose": int,
        "icp": {
            "n_iter": int,
            "trim_fraction": (int, float),
            "tol_yaw": (int, float),
            "tol_translation": (int, float),
        },
    },
    "eval": {
        "t_iou": (int, float),
        "t_agree": (int, float, str),
        "t_occlusion": (int, float),
        "t_iou_3d": (int, float),
    },
}


def _validate_schema(cfg: dict, schema: dict = _SCHEMA, prefix: str = "") -> None:
    for key, want in schema.items():
        if key not in cfg:
            raise ConfigError(f"config missing field: {prefix}{key}")
        value = cfg[key]
        if isinstance(want, dict) and want is not dict:
            if not isinstance(value, dict):
                raise ConfigError(f"config field {prefix}{key} must be an object")
            if want:
                _validate_schema(value, want, prefix=f"{prefix}{key}.")
        elif want is dict:
            if not isinstance(value, dict):
                raise ConfigError(f"config field {prefix}{key} must be an object")
        elif not isinstance(value, want if isinstance(want, tuple) else (want,)):
            raise ConfigError(f"config field {prefix}{key} has the wrong type")


def _require_paths(cfg: dict, names: list[str]) -> dict[str, Path]:
    out = {}
    for name in names:
        if name not in cfg["paths"]:
            raise ConfigError(f"config missing path: paths.{name}")
        p = Path(cfg["paths"][name])
        if name != "output_dir" and not p.exists():
            raise ConfigError(f"file not found: paths.{name} = {p}")
        out[name] = p
    return out


def _threads(cfg: dict) -> int:
    env = os.environ.get("SCENE_ALIGN_THREADS", "")
    if env:
        return max(1, int(env))
    if cfg.get("threads"):
        return max(1, int(cfg["threads"]))
    return os.cpu_count() or 1


def _t_agree(value) -> float:
    if isinstance(value, str):
        if value.lower() in ("inf", "infinity"):
            return float("inf")
        raise ConfigError(f"eval.t_agree must be a number or 'inf', got {value!r}")
    return float(value)


def _search_config(cfg: dict) -> SearchConfig:
    s = cfg["search"]
    return SearchConfig(
        n_scale=s["n_scale"],
        n_models=s["n_models"],
        k_pose=s["k_pose"],
        icp=IcpParams(
            n_iter=s["icp"]["n_iter"],
            trim_fraction=s["icp"]["trim_fraction"],
            tol_yaw=s["icp"]["tol_yaw"],
            tol_translation=s["icp"]["tol_translation"],
        ),
    )


# -- subcommands ----------------------------------------------------------------


def cmd_synth(cfg: dict, args) -> int:
    paths = _require_paths(cfg, ["library", "stats", "camera", "output_dir"])
    library = fileio.load_library_manifest(paths["library"])
    stats = fileio.load_stats_json(paths["stats"])
    k, frame = fileio.load_camera_json(paths["camera"])
    s = cfg["synth"]
    examples = make_dataset(
        library,
        stats,
        frame,
        k,
        seed=cfg["seed"],
        models_per_cat=s["models_per_cat"],
        poses_per_model=s["poses_per_model"],
        boxes_per_pose=s["boxes_per_pose"],
        background_per_pose=s["background_per_pose"],
        crop_size=s["crop_size"],
        n_posebin=s["n_posebin"],
    )
    out_dir = Path(paths["output_dir"]) / (args.name or "dataset")
    index = fileio.save_dataset(examples, out_dir)
    print(f"wrote {len(examples)} examples to {index}")
    return 0


def cmd_train_pose(cfg: dict, args) -> int:
    if not Path(args.dataset).exists():
        raise ConfigError(f"dataset index not found: {args.dataset}")
    x, labels, cats, categories, _ = fileio.load_dataset(args.dataset)
    t = cfg["train"]
    n_posebin = cfg["synth"]["n_posebin"]
    if x.shape[2] != t["input_side"]:
        raise ConfigError(
            f"dataset crop size {x.shape[2]} does not match train.input_side {t['input_side']}"
        )
    spec = default_network_spec(n_posebin=n_posebin, n_class=len(categories), input_side=t["input_side"])
    tc = TrainConfig(
        learning_rate=t["learning_rate"],
        momentum=t["momentum"],
        weight_decay=t["weight_decay"],
        batch_size=t["batch_size"],
        epochs=t["epochs"],
        seed=cfg["seed"],
        input_side=t["input_side"],
    )
    init = load_weights(args.init_weights) if args.init_weights else None
    weights, log = train(spec, x, labels, cats, tc, init_weights=init)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_weights(out, weights)
    with open(out.with_suffix(".log.csv"), "w", encoding="utf-8") as fh:
        fh.write("epoch,loss,train_top1\n")
        for epoch, loss, top1 in log:
            fh.write(f"{epoch},{loss!r},{top1!r}\n")
    print(f"wrote weights to {out} ({len(log)} epochs)")
    return 0


def _rank_bins(logits_row: np.ndarray, cat_id: int, n_posebin: int, k: int) -> list[int]:
    start = cat_id * (n_posebin + 1)
    fg = logits_row[start : start + n_posebin]
    return [int(b) for b in np.argsort(-fg, kind="stable")[:k]]


def cmd_eval_pose(cfg: dict, args) -> int:
    if not Path(args.dataset).exists():
        raise ConfigError(f"dataset index not found: {args.dataset}")
    if not Path(args.weights).exists():
        raise ConfigError(f"weights file not found: {args.weights}")
    x, labels, cats, categories, thetas = fileio.load_dataset(args.dataset)
    n_posebin = cfg["synth"]["n_posebin"]
    spec = default_network_spec(n_posebin=n_posebin, n_class=len(categories), input_side=x.shape[2])
    net = Network(spec)
    net.set_weights(load_weights(args.weights))

    fg = labels < n_posebin
    x, cats, thetas = x[fg], cats[fg], thetas[fg]
    ranked: list[list[int]] = []
    for start in range(0, x.shape[0], 64):
        logits = net.forward(x[start : start + 64])
        for row, cid in zip(logits, cats[start : start + 64]):
            ranked.append(_rank_bins(row, int(cid), n_posebin, k=2))

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8") as fh:
        fh.write("category,delta_deg,top1,top2\n")
        for ci, cat in enumerate(categories):
            sel = cats == ci
            if not sel.any():
                continue
            bins_cat = [b for b, s in zip(ranked, sel) if s]
            grid, acc1 = pose_accuracy_curve(bins_cat, thetas[sel], n_posebin, k=1)
            _, acc2 = pose_accuracy_curve(bins_cat, thetas[sel], n_posebin, k=2)
            for d, a1, a2 in zip(grid, acc1, acc2):
                fh.write(f"{cat},{d!r},{a1!r},{a2!r}\n")
    print(f"wrote pose accuracy curves to {out}")
    return 0


def cmd_fit(cfg: dict, args) -> int:
    paths = _require_paths(cfg, ["library", "stats", "camera"])
    if not Path(args.detections).exists():
        raise ConfigError(f"detections file not found: {args.detections}")
    if not Path(args.depth).exists():
        raise ConfigError(f"depth image not found: {args.depth}")
    library = fileio.load_library_manifest(paths["library"])
    stats = fileio.load_stats_json(paths["stats"])
    k, frame = fileio.load_camera_json(paths["camera"])
    detections = fileio.load_detections(args.detections)
    depth = fileio.load_depth_png(args.depth)
    search = _search_config(cfg)
    n_posebin = cfg["synth"]["n_posebin"]

    selector = (
        fileio.load_selector_weights(cfg["paths"]["selector_weights"])
        if cfg["paths"].get("selector_weights")
        else default_selector_weights()
    )

    pose_net = None
    categories = sorted(stats)
    if any(d["pose_bins"] is None for d in detections):
        wpath = cfg["paths"].get("pose_weights")
        if not wpath:
            raise ConfigError("detections lack pose_bins and no paths.pose_weights is configured")
        if not Path(wpath).exists():
            raise ConfigError(f"file not found: paths.pose_weights = {wpath}")
        spec = default_network_spec(
            n_posebin=n_posebin, n_class=len(categories), input_side=cfg["train"]["input_side"]
        )
        net = Network(spec)
        net.set_weights(load_weights(wpath))
        pose_net = (net, spec)

    eval_cfg = cfg["eval"]
    results = []
    normal_img = None
    for det in detections:
        if det["category"] not in stats:
            raise ConfigError(f"no stats for detected category {det['category']!r}")
        bins = det["pose_bins"]
        if bins is None:
            if normal_img is None:
                normals, nvalid = estimate_normals(depth, k)
                normal_img = encode_normal_image(normals, nvalid, frame)
            net, spec = pose_net
            crop = crop_and_warp(normal_img, mask_bounding_box(det["mask"]), spec.input_side)
            from .posenet.predict import crop_to_batch

            logits = net.forward(crop_to_batch(crop, spec.input_side))[0]
            bins = _rank_bins(logits, categories.index(det["category"]), n_posebin, search.k_pose)

        st = stats[det["category"]]
        models = library.models(det["category"])
        hyps = generate_hypotheses(
            det["mask"], depth, bins, n_posebin, st.mu_area, st.sigma_area, models, frame, k, search
        )
        by_name = dict(models)

        def run(h):
            return icp_align(
                depth, det["mask"], by_name[h.model], h.scale, h.yaw0, h.translation0,
                frame, k, search.icp, model_name=h.model,
            )

        with ThreadPoolExecutor(max_workers=_threads(cfg)) as pool:
            candidates = list(pool.map(run, hyps))

        feats = []
        for cand in candidates:
            rendered = render(by_name[cand.hypothesis.model], cand.placement, frame, k)
            feats.append(
                fit_features(
                    rendered, depth, det["mask"], k,
                    t_occlusion=eval_cfg["t_occlusion"], t_agree=_t_agree(eval_cfg["t_agree"]),
                )
            )
        best = select_best(candidates, feats, selector)
        results.append(
            {
                "category": det["category"],
                "score": det["score"],
                "pose_bins": [int(b) for b in bins],
                "best": fileio.fit_candidate_record(candidates[best]),
                "n_candidates": len(candidates),
                "candidates": [fileio.fit_candidate_record(c) for c in candidates],
            }
        )

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    fileio.dump_json(results, out)
    print(f"wrote {len(results)} placements to {out}")
    return 0


def cmd_select_train(cfg: dict, args) -> int:
    if not Path(args.candidates).exists():
        raise ConfigError(f"candidates file not found: {args.candidates}")
    from .select import FEATURE_NAMES, train_selector

    rows = []
    with open(args.candidates, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rows.append(json.loads(line))
    if not rows:
        raise ConfigError(f"no candidate rows in {args.candidates}")
    x = np.array([[r["features"][n] for n in FEATURE_NAMES] + [1.0] for r in rows])
    overlap = np.array([r["gt_overlap"] for r in rows], dtype=np.float64)
    weights = train_selector(x, overlap, lam=args.lam)
    fileio.save_selector_weights(weights, args.out)
    print(f"wrote selector weights to {args.out}")
    return 0


def _load_scenes(path) -> tuple[dict, dict]:
    rows = fileio.read_json(path)
    base = Path(path).parent
    depths = {}
    for row in rows:
        p = Path(row["depth_png_path"])
        if not p.is_absolute():
            p = base / p
        depths[row["image_id"]] = fileio.load_depth_png(p)
    return depths, {row["image_id"]: row for row in rows}


def cmd_eval_modelap(cfg: dict, args) -> int:
    paths = _require_paths(cfg, ["library", "camera", "output_dir"])
    for p in (args.predictions, args.gt, args.scenes):
        if not Path(p).exists():
            raise ConfigError(f"input not found: {p}")
    library = fileio.load_library_manifest(paths["library"])
    k, frame = fileio.load_camera_json(paths["camera"])
    depths, _ = _load_scenes(args.scenes)
    frames = {img: frame for img in depths}

    gt_rows = fileio.read_json(args.gt)
    base = Path(args.gt).parent
    gts = []
    for row in gt_rows:
        mp = Path(row["mask_png_path"])
        if not mp.is_absolute():
            mp = base / mp
        gts.append(
            (row["image_id"], GroundTruthInstance(row["category"], fileio.load_mask_png(mp), difficult=row.get("difficult", False)))
        )

    preds = []
    for row in fileio.load_predictions_jsonl(args.predictions):
        mesh = library.get(row["category"], row["model"])
        preds.append(
            ModelPrediction(
                row["image_id"], row["category"], float(row["score"]), mesh,
                fileio.placement_from_record(row["placement"]), row["model"],
            )
        )

    out_dir = Path(paths["output_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    e = cfg["eval"]
    for tag, t_agree in (("t7", _t_agree(e["t_agree"])), ("tinf", float("inf"))):
        ev = EvalConfig(t_iou=e["t_iou"], t_agree=t_agree, t_occlusion=e["t_occlusion"])
        curves = model_ap(preds, gts, depths, frames, k, ev)
        fileio.save_pr_outputs(
            curves,
            {"t_iou": ev.t_iou, "t_agree": ("inf" if np.isinf(t_agree) else t_agree), "t_occlusion": ev.t_occlusion},
            out_dir / f"modelap_{tag}.csv",
            out_dir / f"modelap_{tag}.json",
        )
        m = mean_ap(curves)
        print(f"modelAP[{tag}] mean = {m if m is not None else 'undefined'}")
    return 0


def cmd_eval_det3d(cfg: dict, args) -> int:
    paths = _require_paths(cfg, ["output_dir"])
    for p in (args.predictions, args.gt):
        if not Path(p).exists():
            raise ConfigError(f"input not found: {p}")
    preds = [
        (r["image_id"], r["category"], float(r["score"]), fileio.box_from_record(r["box3d"]))
        for r in fileio.load_predictions_jsonl(args.predictions)
    ]
    gt = [
        (r["image_id"], r["category"], fileio.box_from_record(r["box3d"]), bool(r.get("difficult", False)))
        for r in fileio.read_json(args.gt)
    ]
    curves = detection_ap_3d(preds, gt, t_iou=cfg["eval"]["t_iou_3d"])
    out_dir = Path(paths["output_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    fileio.save_pr_outputs(
        curves, {"t_iou_3d": cfg["eval"]["t_iou_3d"]}, out_dir / "det3d.csv", out_dir / "det3d.json"
    )
    m = mean_ap(curves)
    print(f"3D detection AP mean = {m if m is not None else 'undefined'}")
    return 0


def cmd_render(cfg: dict, args) -> int:
    paths = _require_paths(cfg, ["camera"])
    if not Path(args.mesh).exists():
        raise ConfigError(f"mesh file not found: {args.mesh}")
    from .mesh import load_obj

    k, frame = fileio.load_camera_json(paths["camera"])
    mesh = load_obj(args.mesh)
    t = [float(v) for v in args.translation.split(",")]
    if len(t) != 3:
        raise ConfigError("--t expects three comma-separated numbers")
    placement = Placement(args.scale, args.yaw, np.asarray(t))
    out = render(mesh, placement, frame, k)
    prefix = Path(args.out)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    fileio.save_depth_png(out.depth, prefix.with_suffix(".depth.png"))
    fileio.save_mask_png(out.mask, prefix.with_suffix(".mask.png"))
    print(f"rendered {out.mask.sum()} covered pixels to {prefix}.depth.png/.mask.png")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scene-align", description=__doc__)
    parser.add_argument("--config", help="pipeline config JSON")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config field")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic pose dataset")
    p.add_argument("--name", default="dataset")

    p = sub.add_parser("train-pose", help="train the pose network")
    p.add_argument("--dataset", required=True, help="dataset index.jsonl")
    p.add_argument("--out", required=True, help="output weights file")
    p.add_argument("--init-weights", default=None)

    p = sub.add_parser("eval-pose", help="pose accuracy curves on a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("fit", help="align library models to detections")
    p.add_argument("--detections", required=True)
    p.add_argument("--depth", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("select-train", help="train the fit-selection classifier")
    p.add_argument("--candidates", required=True, help="JSONL {features, gt_overlap}")
    p.add_argument("--out", required=True)
    p.add_argument("--lam", type=float, default=1e-3)

    p = sub.add_parser("eval-modelap", help="render-based model placement AP")
    p.add_argument("--predictions", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--scenes", required=True)

    p = sub.add_parser("eval-det3d", help="3D box detection AP")
    p.add_argument("--predictions", required=True)
    p.add_argument("--gt", required=True)

    p = sub.add_parser("render", help="debug render of a placement")
    p.add_argument("--mesh", required=True)
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--yaw", type=float, default=0.0)
    p.add_argument("--t", dest="translation", required=True, help="x,y,z world translation")
    p.add_argument("--out", required=True, help="output path prefix")

    return parser


COMMANDS = {
    "synth": cmd_synth,
    "train-pose": cmd_train_pose,
    "eval-pose": cmd_eval_pose,
    "fit": cmd_fit,
    "select-train": cmd_select_train,
    "eval-modelap": cmd_eval_modelap,
    "eval-det3d": cmd_eval_det3d,
    "render": cmd_render,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.set)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (KeyError, FileNotFoundError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # computation failure
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
