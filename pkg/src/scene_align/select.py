"""Fit-quality features for aligned candidates and the linear selector."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import CameraIntrinsics, DepthImage
from .render import RenderOutput

FEATURE_NAMES = (
    "n_occluded",
    "f_occluded",
    "n_explained_model",
    "f_explained_model",
    "n_explained_seg",
    "f_explained_seg",
    "iou_seg_explained",
    "iou_seg_unoccluded",
)


@dataclass(frozen=True)
class FitFeatures:
    """Agreement statistics between a candidate render and the observation.

    Counts and fractions are over pixels with valid observed depth;
    a pixel with missing observed depth is neither occluded nor explained
    and is excluded from every denominator.
    """

    n_occluded: float
    f_occluded: float
    n_explained_model: float
    f_explained_model: float
    n_explained_seg: float
    f_explained_seg: float
    iou_seg_explained: float
    iou_seg_unoccluded: float

    def vector(self) -> np.ndarray:
        """Feature vector with a trailing constant-1 bias term."""
        return np.array([getattr(self, n) for n in FEATURE_NAMES] + [1.0])


@dataclass(frozen=True)
class SelectorWeights:
    weights: np.ndarray  # one per FEATURE_NAMES entry
    bias: float
    lam: float = 1e-3

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64).reshape(len(FEATURE_NAMES))
        if not np.isfinite(w).all() or not np.isfinite(self.bias):
            raise ValueError("selector weights must be finite")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    def score(self, features: FitFeatures) -> float:
        return float(features.vector() @ np.append(self.weights, self.bias))


def default_selector_weights() -> SelectorWeights:
    """Hand-set fallback scoring used before a selector has been trained."""
    w = np.zeros(len(FEATURE_NAMES))
    w[FEATURE_NAMES.index("f_explained_model")] = 1.0
    w[FEATURE_NAMES.index("f_explained_seg")] = 1.0
    w[FEATURE_NAMES.index("iou_seg_explained")] = 1.0
    w[FEATURE_NAMES.index("iou_seg_unoccluded")] = 1.0
    return SelectorWeights(w, 0.0)


def fit_features(
    candidate: RenderOutput,
    observed: DepthImage,
    seg_mask: np.ndarray,
    k: CameraIntrinsics,
    t_occlusion: float = 5.0,
    t_agree: float = 7.0,
) -> FitFeatures:
    """Occlusion / agreement statistics in disparity units.

    A model pixel is occluded when the observation sits more than
    t_occlusion disparity units in front of the render, and explained when
    the two disparities agree within t_agree.
    """
    seg = np.asarray(seg_mask, dtype=bool)
    if seg.shape != observed.values.shape or candidate.mask.shape != seg.shape:
        raise ValueError("images must share dimensions")

    rend_disp = np.zeros_like(candidate.depth.values)
    rend_disp[candidate.mask] = k.disparity_constant / candidate.depth.values[candidate.mask]
    obs_disp = np.zeros_like(observed.values)
    obs_disp[observed.valid] = k.disparity_constant / observed.values[observed.valid]

    model_px = candidate.mask & observed.valid
    seg_px = seg & observed.valid
    occluded = model_px & (obs_disp - rend_disp > t_occlusion)
    agree = np.abs(obs_disp - rend_disp) <= t_agree
    explained_model = model_px & agree
    unoccluded_model = model_px & ~occluded

    n_model = int(model_px.sum())
    n_seg = int(seg_px.sum())
    n_occ = int(occluded.sum())
    n_exp_model = int(explained_model.sum())
    n_exp_seg = int((seg_px & explained_model).sum())

    def frac(num, den):
        return num / den if den > 0 else 0.0

    def iou(a, b):
        union = int((a | b).sum())
        return int((a & b).sum()) / union if union > 0 else 0.0

    return FitFeatures(
        n_occluded=float(n_occ),
        f_occluded=frac(n_occ, n_model),
        n_explained_model=float(n_exp_model),
        f_explained_model=frac(n_exp_model, n_model),
        n_explained_seg=float(n_exp_seg),
        f_explained_seg=frac(n_exp_seg, n_seg),
        iou_seg_explained=iou(seg_px, explained_model),
        iou_seg_unoccluded=iou(seg_px, unoccluded_model),
    )


def train_selector(
    features: list[FitFeatures] | np.ndarray,
    gt_overlap: np.ndarray,
    lam: float = 1e-3,
    positive_iou: float = 0.5,
    max_iter: int = 200,
) -> SelectorWeights:
    """L2-regularized logistic regression, descended to a tight optimum.

    Positives are candidates whose rendered mask overlaps a ground-truth
    region with IoU above ``positive_iou``. Damped Newton steps (the count
    features make the problem badly scaled for first-order descent) until
    the objective gradient norm drops below 1e-6; deterministic.
    """
    if isinstance(features, (list, tuple)):
        x = np.stack([f.vector() for f in features])
    else:
        x = np.asarray(features, dtype=np.float64)
    y = (np.asarray(gt_overlap, dtype=np.float64) > positive_iou).astype(np.float64)
    if y.min() == y.max():
        raise ValueError("need at least one positive and one negative candidate")

    n, d = x.shape
    w = np.zeros(d)

    def objective(wv):
        s = 2.0 * y - 1.0
        return float(np.mean(np.logaddexp(0.0, -s * (x @ wv)))) + lam * float(wv @ wv)

    def grad_hess(wv):
        sig = 1.0 / (1.0 + np.exp(-(x @ wv)))
        grad = x.T @ (sig - y) / n + 2.0 * lam * wv
        s = sig * (1.0 - sig)
        hess = (x.T * s) @ x / n + 2.0 * lam * np.eye(d)
        return grad, hess

    obj = objective(w)
    for _ in range(max_iter):
        grad, hess = grad_hess(w)
        if float(np.linalg.norm(grad)) < 1e-6:
            break
        step_dir = np.linalg.solve(hess, grad)
        t = 1.0
        while t > 1e-12:
            cand = w - t * step_dir
            cand_obj = objective(cand)
            if cand_obj <= obj - 1e-4 * t * float(grad @ step_dir):
                break
            t *= 0.5
        w, obj = cand, cand_obj
    return SelectorWeights(w[:-1], float(w[-1]), lam)


def selector_objective_grad_norm(weights: SelectorWeights, features, gt_overlap, positive_iou: float = 0.5) -> float:
    """Gradient norm of the training objective at the given weights."""
    if isinstance(features, (list, tuple)):
        x = np.stack([f.vector() for f in features])
    else:
        x = np.asarray(features, dtype=np.float64)
    y = (np.asarray(gt_overlap, dtype=np.float64) > positive_iou).astype(np.float64)
    w = np.append(weights.weights, weights.bias)
    sig = 1.0 / (1.0 + np.exp(-(x @ w)))
    grad = x.T @ (sig - y) / x.shape[0] + 2.0 * weights.lam * w
    return float(np.linalg.norm(grad))


def select_best(
    candidates: list,
    features: list[FitFeatures],
    weights: SelectorWeights,
) -> int:
    """Index of the highest-scoring non-failed candidate.

    Ties break on the lower final trimmed RMS residual, then list order.
    ``candidates`` are FitCandidate objects (align module).
    """
    if len(candidates) != len(features) or not candidates:
        raise ValueError("need matching, non-empty candidate and feature lists")
    best_idx = None
    best_key = None
    for i, (cand, feat) in enumerate(zip(candidates, features)):
        if cand.failed:
            continue
        key = (-weights.score(feat), cand.residual, i)
        if best_key is None or key < best_key:
            best_key = key
            best_idx = i
    if best_idx is None:
        raise ValueError("all candidates failed")
    return best_idx
