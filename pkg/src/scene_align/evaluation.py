"""Metrics: render-based model placement AP, 3D detection AP, pose curves."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .align import bin_center
from .boxes3d import OrientedBox3D, box_iou3d
from .geometry import CameraIntrinsics, DepthImage, GeocentricFrame
from .mesh import TriangleMesh
from .render import Placement, render


@dataclass(frozen=True)
class EvalConfig:
    t_iou: float = 0.5
    t_agree: float = 7.0  # disparity units; inf recovers plain mask IoU
    t_occlusion: float = 5.0

    def __post_init__(self):
        if not (0 < self.t_iou <= 1):
            raise ValueError("t_iou must be in (0, 1]")
        if self.t_agree < 0 or self.t_occlusion < 0:
            raise ValueError("thresholds must be >= 0 (inf allowed)")


@dataclass(frozen=True)
class GroundTruthInstance:
    category: str
    mask: np.ndarray
    box3d: OrientedBox3D | None = None
    difficult: bool = False

    def __post_init__(self):
        m = np.asarray(self.mask, dtype=bool)
        if not m.any():
            raise ValueError("ground-truth mask is empty")
        m.setflags(write=False)
        object.__setattr__(self, "mask", m)


@dataclass(frozen=True)
class ModelPrediction:
    image_id: str
    category: str
    score: float
    mesh: TriangleMesh
    placement: Placement
    model: str = ""


@dataclass(frozen=True)
class PRCurve:
    """Recall/precision points in detection-score order plus the AP scalar.

    ``ap`` is None when there are no ground truths to recall (undefined).
    """

    recalls: np.ndarray
    precisions: np.ndarray
    ap: float | None

    def __post_init__(self):
        r = np.asarray(self.recalls, dtype=np.float64)
        p = np.asarray(self.precisions, dtype=np.float64)
        if r.shape != p.shape:
            raise ValueError("recall/precision length mismatch")
        if r.size and (np.diff(r) < -1e-12).any():
            raise ValueError("recalls must be non-decreasing")
        r.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "recalls", r)
        object.__setattr__(self, "precisions", p)


def model_overlap(
    mesh: TriangleMesh,
    placement: Placement,
    gt_mask: np.ndarray,
    observed: DepthImage,
    frame: GeocentricFrame,
    k: CameraIntrinsics,
    cfg: EvalConfig,
) -> float:
    """Render-based overlap between a placed model and a ground-truth region.

    The rendered model's pixels minus those occluded in the observation
    (observed disparity ahead of rendered by more than t_occlusion) form the
    visible mask; the intersection additionally requires disparity agreement
    within t_agree, the union is plain. Pixels with missing observed depth
    are excluded from both.
    """
    out = render(mesh, placement, frame, k)
    rendered_disp = np.zeros_like(out.depth.values)
    rmask = out.mask
    rendered_disp[rmask] = k.disparity_constant / out.depth.values[rmask]
    observed_disp = np.zeros_like(observed.values)
    observed_disp[observed.valid] = k.disparity_constant / observed.values[observed.valid]

    occluded = rmask & observed.valid & (observed_disp - rendered_disp > cfg.t_occlusion)
    visible = rmask & observed.valid & ~occluded
    gt = np.asarray(gt_mask, dtype=bool) & observed.valid

    agree = np.abs(observed_disp - rendered_disp) <= cfg.t_agree
    inter = int((visible & gt & agree).sum())
    union = int((visible | gt).sum())
    return inter / union if union > 0 else 0.0


def average_precision(
    scores: np.ndarray,
    overlaps: np.ndarray,
    t_iou: float,
    difficult: np.ndarray | None = None,
) -> PRCurve:
    """Greedy-matching PR curve and all-points interpolated AP.

    ``overlaps[i, j]`` is the overlap of detection i with ground truth j.
    Detections are taken in descending score order (stable on ties); each
    matches the highest-overlap unmatched ground truth at or above t_iou.
    Matches to difficult ground truths are ignored (neither TP nor FP);
    difficult instances do not count toward recall.
    """
    scores = np.asarray(scores, dtype=np.float64)
    overlaps = np.asarray(overlaps, dtype=np.float64).reshape(scores.shape[0], -1)
    if not np.isfinite(scores).all():
        raise ValueError("scores must be finite")
    n_gt_total = overlaps.shape[1]
    difficult = (
        np.zeros(n_gt_total, dtype=bool) if difficult is None else np.asarray(difficult, dtype=bool)
    )
    n_gt = int((~difficult).sum())
    if n_gt == 0:
        return PRCurve(np.empty(0), np.empty(0), None)

    order = np.argsort(-scores, kind="stable")
    matched = np.zeros(n_gt_total, dtype=bool)
    recalls, precisions = [], []
    tp = fp = 0
    for det in order:
        row = overlaps[det]
        cand = np.nonzero((row >= t_iou) & ~matched)[0]
        if cand.size:
            best = cand[np.argmax(row[cand])]
            matched[best] = True
            if difficult[best]:
                continue  # ignored: neither tp nor fp
            tp += 1
        else:
            fp += 1
        recalls.append(tp / n_gt)
        precisions.append(tp / (tp + fp))

    r = np.asarray(recalls)
    p = np.asarray(precisions)
    ap = _envelope_area(r, p)
    return PRCurve(r, p, ap)


def _envelope_area(recalls: np.ndarray, precisions: np.ndarray) -> float:
    """Area under the precision envelope (all-points interpolation)."""
    mrec = np.concatenate([[0.0], recalls, [recalls[-1] if recalls.size else 0.0]])
    mpre = np.concatenate([[0.0], precisions, [0.0]])
    for i in range(mpre.size - 2, -1, -1):
        mpre[i] = max(mpre[i], mpre[i + 1])
    idx = np.nonzero(np.diff(mrec) > 0)[0]
    return float(np.sum((mrec[idx + 1] - mrec[idx]) * mpre[idx + 1]))


def model_ap(
    predictions: list[ModelPrediction],
    gts: list[tuple[str, GroundTruthInstance]],
    observed: dict[str, DepthImage],
    frames: dict[str, GeocentricFrame],
    k: CameraIntrinsics,
    cfg: EvalConfig,
) -> dict[str, PRCurve]:
    """Per-category AP under the render-based overlap (same-image pairs only)."""
    categories = sorted({g.category for _, g in gts})
    out: dict[str, PRCurve] = {}
    for cat in categories:
        cat_gts = [(img, g) for img, g in gts if g.category == cat]
        cat_preds = [p for p in predictions if p.category == cat]
        overlaps = np.zeros((len(cat_preds), len(cat_gts)))
        for i, pred in enumerate(cat_preds):
            for j, (img, gt) in enumerate(cat_gts):
                if img != pred.image_id:
                    continue
                overlaps[i, j] = model_overlap(
                    pred.mesh, pred.placement, gt.mask, observed[img], frames[img], k, cfg
                )
        scores = np.array([p.score for p in cat_preds])
        difficult = np.array([g.difficult for _, g in cat_gts])
        out[cat] = average_precision(scores, overlaps, cfg.t_iou, difficult)
    return out


def mean_ap(curves: dict[str, PRCurve]) -> float | None:
    vals = [c.ap for c in curves.values() if c.ap is not None]
    return float(np.mean(vals)) if vals else None


def detection_ap_3d(
    pred_boxes: list[tuple[str, str, float, OrientedBox3D]],
    gt_boxes: list[tuple[str, str, OrientedBox3D, bool]],
    t_iou: float = 0.25,
) -> dict[str, PRCurve]:
    """3D box AP per category; entries are (image_id, category, [score,] box).

    Overlap is box_iou3d between same-image, same-category pairs; the bool
    on ground-truth entries is the difficult flag.
    """
    categories = sorted({g[1] for g in gt_boxes})
    out: dict[str, PRCurve] = {}
    for cat in categories:
        cg = [g for g in gt_boxes if g[1] == cat]
        cp = [p for p in pred_boxes if p[1] == cat]
        overlaps = np.zeros((len(cp), len(cg)))
        for i, (img_p, _, _, pb) in enumerate(cp):
            for j, (img_g, _, gb, _) in enumerate(cg):
                if img_p == img_g:
                    overlaps[i, j] = box_iou3d(pb, gb)
        scores = np.array([p[2] for p in cp])
        difficult = np.array([g[3] for g in cg])
        out[cat] = average_precision(scores, overlaps, t_iou, difficult)
    return out


def angular_error(yaw_a: float, yaw_b: float) -> float:
    """Top-view angular distance, wrapped to [0, pi]."""
    d = (yaw_a - yaw_b) % (2.0 * np.pi)
    return float(min(d, 2.0 * np.pi - d))


def pose_accuracy_curve(
    predicted_bins: list[list[int]],
    gt_yaws: np.ndarray,
    n_posebin: int,
    k: int,
    delta_grid_deg: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Fraction of instances with top-k angular error within each threshold.

    For each instance the error is the minimum, over its first k predicted
    bins, of the wrapped angle between the bin center and the true yaw.
    Returns (thresholds in degrees, accuracies).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if delta_grid_deg is None:
        delta_grid_deg = np.arange(0.0, 45.5, 1.0)
    grid = np.asarray(delta_grid_deg, dtype=np.float64)
    gt_yaws = np.asarray(gt_yaws, dtype=np.float64)
    errors = np.array(
        [
            min(angular_error(bin_center(b, n_posebin), gt) for b in bins[:k])
            for bins, gt in zip(predicted_bins, gt_yaws)
        ]
    )
    errors_deg = np.degrees(errors)
    acc = np.array([(errors_deg <= d + 1e-12).mean() for d in grid])
    return grid, acc
