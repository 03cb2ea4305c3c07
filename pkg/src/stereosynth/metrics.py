"""Disparity evaluation: end-point error and thresholded error rates.

Metrics run over the pixels with valid ground truth (optionally intersected
with a non-occlusion mask); invalid pixels never influence any number.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np
from PIL import Image as PILImage

from .imgio import DisparityMap, FormatError, read_disparity_png16, read_pfm

__all__ = [
    "EvalReport",
    "DirectoryEvalResult",
    "epe",
    "threshold_error",
    "resize_prediction",
    "evaluate_directory",
]


@dataclass
class EvalReport:
    """Metrics for one image (or the unweighted mean over a directory)."""

    name: str
    epe: float
    threshold_errors: dict
    pixel_count: int
    mask_kind: str = "all"

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "epe": self.epe,
            "threshold_errors": {f"{tau:g}": v for tau, v in self.threshold_errors.items()},
            "pixel_count": self.pixel_count,
            "mask_kind": self.mask_kind,
        }


@dataclass
class DirectoryEvalResult:
    per_image: list
    aggregate: EvalReport
    skipped: list = field(default_factory=list)


def _masked_abs_error(pred, gt, mask):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if pred.shape != gt.shape or pred.shape != mask.shape:
        raise ValueError("prediction, ground truth and mask dimensions differ")
    if not mask.any():
        raise ValueError("empty evaluation mask")
    return np.abs(pred[mask] - gt[mask])


def epe(pred: np.ndarray, gt: np.ndarray, mask: np.ndarray) -> float:
    """Mean absolute disparity error over masked pixels, in pixels."""
    return float(_masked_abs_error(pred, gt, mask).mean())


def threshold_error(pred: np.ndarray, gt: np.ndarray, mask: np.ndarray, tau: float) -> float:
    """Percentage of masked pixels with error strictly greater than tau."""
    if tau <= 0:
        raise ValueError("tau must be > 0")
    err = _masked_abs_error(pred, gt, mask)
    return float(100.0 * (err > tau).sum() / err.size)


def resize_prediction(pred: np.ndarray, target_dims: tuple[int, int]) -> np.ndarray:
    """Bilinear resize to (height, width); values scale with the width ratio."""
    th, tw = target_dims
    if th <= 0 or tw <= 0:
        raise ValueError("target dims must be positive")
    pred = np.asarray(pred, dtype=np.float32)
    h, w = pred.shape
    if (h, w) == (th, tw):
        return pred.astype(np.float64)
    out = cv2.resize(pred, (tw, th), interpolation=cv2.INTER_LINEAR)
    return out.astype(np.float64) * (tw / w)


def _read_any_disparity(path: Path) -> DisparityMap:
    if path.suffix.lower() == ".pfm":
        return read_pfm(path)
    return read_disparity_png16(path)


def _read_mask_png(path: Path) -> np.ndarray:
    img = PILImage.open(path)
    return np.asarray(img) > 0


def evaluate_directory(pred_dir, gt_dir, taus=(3.0,), mask_kind: str = "all",
                       noc_dir=None) -> DirectoryEvalResult:
    """Evaluate matching file stems in two directories (PFM or 16-bit PNG).

    Predictions are resized to the ground-truth resolution when they differ.
    Unmatched or unreadable stems are skipped with a warning. The aggregate
    is the unweighted mean of the per-image metrics.
    """
    pred_dir, gt_dir = Path(pred_dir), Path(gt_dir)
    if mask_kind not in ("all", "noc"):
        raise ValueError("mask_kind must be 'all' or 'noc'")
    if mask_kind == "noc" and noc_dir is None:
        raise ValueError("mask_kind 'noc' requires a noc mask directory")
    by_stem = {}
    for p in gt_dir.iterdir():
        if p.suffix.lower() in (".pfm", ".png"):
            # a stem present in both formats is one ground truth; prefer PFM
            if p.stem not in by_stem or p.suffix.lower() == ".pfm":
                by_stem[p.stem] = p
    gt_files = sorted(by_stem.values(), key=lambda p: p.stem)
    reports, skipped = [], []
    for gt_path in gt_files:
        stem = gt_path.stem
        candidates = [pred_dir / f"{stem}{ext}" for ext in (".pfm", ".png")]
        pred_path = next((c for c in candidates if c.exists()), None)
        if pred_path is None:
            skipped.append(stem)
            warnings.warn(f"no prediction for ground-truth stem {stem!r}")
            continue
        try:
            gt = _read_any_disparity(gt_path)
            pred = _read_any_disparity(pred_path)
        except FormatError as exc:
            skipped.append(stem)
            warnings.warn(f"skipping {stem!r}: {exc}")
            continue
        pred_values = resize_prediction(pred.values, gt.shape)
        mask = gt.valid.copy()
        if mask_kind == "noc":
            noc_path = Path(noc_dir) / f"{stem}.png"
            if not noc_path.exists():
                skipped.append(stem)
                warnings.warn(f"no noc mask for stem {stem!r}")
                continue
            mask &= _read_mask_png(noc_path)
        if not mask.any():
            skipped.append(stem)
            warnings.warn(f"empty evaluation mask for stem {stem!r}")
            continue
        reports.append(EvalReport(
            name=stem,
            epe=epe(pred_values, gt.values, mask),
            threshold_errors={tau: threshold_error(pred_values, gt.values, mask, tau)
                              for tau in taus},
            pixel_count=int(mask.sum()),
            mask_kind=mask_kind,
        ))
    if not reports:
        aggregate = EvalReport("mean", float("nan"), {tau: float("nan") for tau in taus},
                               0, mask_kind)
    else:
        aggregate = EvalReport(
            name="mean",
            epe=float(np.mean([r.epe for r in reports])),
            threshold_errors={tau: float(np.mean([r.threshold_errors[tau] for r in reports]))
                              for tau in taus},
            pixel_count=int(sum(r.pixel_count for r in reports)),
            mask_kind=mask_kind,
        )
    return DirectoryEvalResult(reports, aggregate, skipped)
