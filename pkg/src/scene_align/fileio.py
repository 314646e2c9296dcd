"""File formats: depth/mask/normal PNGs, JSON configs, datasets, predictions.

Depth is stored as 16-bit grayscale PNG in millimeters with 0 marking
missing data. A normal image is an 8-bit RGB PNG of the angle bytes plus a
sibling ``*_valid.png`` mask. JSON is written with sorted keys and a
trailing newline so equal payloads are byte-identical.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

from .boxes3d import OrientedBox3D
from .geometry import CameraIntrinsics, DepthImage, GeocentricFrame, NormalImage
from .mesh import load_obj, orient_front_to_x
from .render import ModelLibrary, Placement
from .select import FEATURE_NAMES, SelectorWeights
from .synthgen import SynthExample


def dump_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")


def read_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


# -- images -----------------------------------------------------------------

def save_depth_png(depth: DepthImage, path) -> None:
    mm = np.zeros(depth.values.shape, dtype=np.uint16)
    mm[depth.valid] = np.clip(np.round(depth.values[depth.valid] * 1000.0), 1, 65535).astype(np.uint16)
    Image.fromarray(mm).save(path)  # uint16 -> 16-bit grayscale PNG


def load_depth_png(path) -> DepthImage:
    arr = np.asarray(Image.open(path), dtype=np.float64)
    return DepthImage.from_meters(arr / 1000.0)


def save_mask_png(mask: np.ndarray, path) -> None:
    Image.fromarray(np.where(np.asarray(mask, bool), 255, 0).astype(np.uint8)).save(path)


def load_mask_png(path) -> np.ndarray:
    return np.asarray(Image.open(path).convert("L")) > 127


def _valid_path(path) -> Path:
    p = Path(path)
    return p.with_name(p.stem + "_valid.png")


def save_normal_png(img: NormalImage, path) -> None:
    Image.fromarray(img.channels).save(path)
    save_mask_png(img.valid, _valid_path(path))


def load_normal_png(path) -> NormalImage:
    channels = np.asarray(Image.open(path).convert("RGB"), dtype=np.uint8)
    valid = load_mask_png(_valid_path(path))
    return NormalImage(np.where(valid[:, :, None], channels, np.uint8(0)), valid)


# -- camera / frame / stats / library ----------------------------------------

def save_camera_json(k: CameraIntrinsics, frame: GeocentricFrame, path) -> None:
    dump_json(
        {
            "fx": k.fx,
            "fy": k.fy,
            "cx": k.cx,
            "cy": k.cy,
            "width": k.width,
            "height": k.height,
            "disparity_constant": k.disparity_constant,
            "gravity": [float(g) for g in frame.gravity],
            "floor_height": frame.floor_height,
        },
        path,
    )


def load_camera_json(path) -> tuple[CameraIntrinsics, GeocentricFrame]:
    d = read_json(path)
    k = CameraIntrinsics(
        fx=d["fx"],
        fy=d["fy"],
        cx=d["cx"],
        cy=d["cy"],
        width=int(d["width"]),
        height=int(d["height"]),
        disparity_constant=d.get("disparity_constant", 315.0),
    )
    frame = GeocentricFrame(gravity=np.asarray(d["gravity"], dtype=np.float64), floor_height=d["floor_height"])
    return k, frame


def load_stats_json(path) -> dict:
    from .synthgen import CategoryStats

    raw = read_json(path)
    return {
        cat: CategoryStats(
            mu_area=entry["mu_area"],
            sigma_area=entry["sigma_area"],
            z_range=(entry["z_range"][0], entry["z_range"][1]),
        )
        for cat, entry in raw.items()
    }


def load_library_manifest(path) -> ModelLibrary:
    """Manifest rows: {category, name, path, front: [3]}; paths relative to the manifest."""
    rows = read_json(path)
    base = Path(path).parent
    lib = ModelLibrary()
    for row in rows:
        mesh_path = Path(row["path"])
        if not mesh_path.is_absolute():
            mesh_path = base / mesh_path
        mesh = load_obj(mesh_path)
        front = row.get("front", (1.0, 0.0, 0.0))
        lib.add(row["category"], row["name"], orient_front_to_x(mesh, front))
    return lib


# -- datasets -----------------------------------------------------------------

def save_dataset(examples: list[SynthExample], out_dir) -> Path:
    """Crop PNG pairs plus a JSONL index {path, category, label, theta_gt}."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    index = out / "index.jsonl"
    with open(index, "w", encoding="utf-8") as fh:
        for i, ex in enumerate(examples):
            name = f"crop_{i:06d}.png"
            save_normal_png(ex.crop, out / name)
            fh.write(
                json.dumps(
                    {"path": name, "category": ex.category, "label": ex.label, "theta_gt": ex.theta_gt},
                    sort_keys=True,
                )
                + "\n"
            )
    return index


def load_dataset(index_path) -> tuple[np.ndarray, np.ndarray, np.ndarray, list[str], np.ndarray]:
    """Returns (inputs (n,3,s,s) normalized, labels, category ids, categories, theta_gt)."""
    from .posenet.train import normalize_crop_bytes

    base = Path(index_path).parent
    rows = []
    with open(index_path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rows.append(json.loads(line))
    if not rows:
        raise ValueError(f"empty dataset index: {index_path}")
    categories = sorted({r["category"] for r in rows})
    cat_id = {c: i for i, c in enumerate(categories)}
    crops = [load_normal_png(base / r["path"]) for r in rows]
    x = np.stack([normalize_crop_bytes(c.channels).transpose(2, 0, 1) for c in crops])
    labels = np.array([r["label"] for r in rows], dtype=np.int64)
    cats = np.array([cat_id[r["category"]] for r in rows], dtype=np.int64)
    thetas = np.array([r["theta_gt"] for r in rows], dtype=np.float64)
    return x, labels, cats, categories, thetas


# -- detections / placements / boxes ------------------------------------------

def load_detections(path) -> list[dict]:
    """Rows: {category, score, mask_png_path, optional pose_bins}."""
    rows = read_json(path)
    base = Path(path).parent
    out = []
    for row in rows:
        mask_path = Path(row["mask_png_path"])
        if not mask_path.is_absolute():
            mask_path = base / mask_path
        out.append(
            {
                "category": row["category"],
                "score": float(row.get("score", 1.0)),
                "mask": load_mask_png(mask_path),
                "pose_bins": row.get("pose_bins"),
            }
        )
    return out


def fit_candidate_record(cand) -> dict:
    return {
        "model": cand.hypothesis.model,
        "s": cand.placement.scale,
        "theta": cand.placement.yaw,
        "t": [float(v) for v in cand.placement.translation],
        "residual": cand.residual if np.isfinite(cand.residual) else None,
        "iterations": cand.iterations,
        "failed": cand.failed,
    }


def placement_record(p: Placement) -> dict:
    return {"s": p.scale, "theta": p.yaw, "t": [float(v) for v in p.translation]}


def placement_from_record(d: dict) -> Placement:
    return Placement(d["s"], d["theta"], np.asarray(d["t"], dtype=np.float64))


def box_record(b: OrientedBox3D) -> dict:
    return {
        "yaw": b.yaw,
        "center": [float(v) for v in b.center],
        "half_extents": [float(v) for v in b.half_extents],
    }


def box_from_record(d: dict) -> OrientedBox3D:
    return OrientedBox3D(d["yaw"], np.asarray(d["center"]), np.asarray(d["half_extents"]))


def save_selector_weights(w: SelectorWeights, path) -> None:
    dump_json(
        {
            "feature_names": list(FEATURE_NAMES),
            "weights": [float(v) for v in w.weights],
            "bias": w.bias,
            "lambda": w.lam,
        },
        path,
    )


def load_selector_weights(path) -> SelectorWeights:
    d = read_json(path)
    if list(d["feature_names"]) != list(FEATURE_NAMES):
        raise ValueError("selector weights were trained for different features")
    return SelectorWeights(np.asarray(d["weights"], dtype=np.float64), d["bias"], d.get("lambda", 1e-3))


def load_predictions_jsonl(path) -> list[dict]:
    """Rows: {image_id, category, score, model, placement{...}} or {..., box3d{...}}."""
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(json.loads(line))
    return out


def save_pr_outputs(curves: dict, config: dict, csv_path, json_path) -> None:
    """PR points as CSV (category, recall, precision) + JSON {ap, config}."""
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write("category,recall,precision\n")
        for cat in sorted(curves):
            c = curves[cat]
            for r, p in zip(c.recalls, c.precisions):
                fh.write(f"{cat},{r!r},{p!r}\n")
    ap = {cat: (None if curves[cat].ap is None else float(curves[cat].ap)) for cat in sorted(curves)}
    defined = [v for v in ap.values() if v is not None]
    dump_json({"ap": ap, "mean_ap": (sum(defined) / len(defined) if defined else None), "config": config}, json_path)
