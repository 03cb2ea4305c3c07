"""Geometric core: depth to disparity, edge sharpening, forward warping.

All functions are pure and operate on plain numpy arrays; images are
H x W x C float in [0, 1], depth and disparity are H x W float. Disparities
shift pixels to the left (right-view synthesis for a left-aligned map).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import isqrt
from typing import Optional

import numpy as np
from scipy import ndimage

__all__ = [
    "ScaleSampler",
    "SharpenConfig",
    "WarpResult",
    "sample_scale",
    "depth_to_disparity",
    "sobel_response",
    "sharpen_disparity",
    "forward_warp",
    "warp_disparity_plane_stack",
]

# linear-mode z-buffer margin and minimum surviving weight for a non-hole pixel
OCCLUSION_MARGIN = 1.0
MIN_WEIGHT = 1e-3


@dataclass
class ScaleSampler:
    """Uniform range for the depth-to-disparity scale factor, in pixels."""

    d_min: float = 50.0
    d_max: float = 225.0

    def __post_init__(self):
        if not (0 < self.d_min <= self.d_max):
            raise ValueError("require 0 < d_min <= d_max")


@dataclass
class SharpenConfig:
    """Flying-pixel detection threshold on the Sobel response."""

    sobel_threshold: float = 3.0
    border_mode: str = "replicate"

    def __post_init__(self):
        if self.sobel_threshold <= 0:
            raise ValueError("sobel_threshold must be > 0")
        if self.border_mode != "replicate":
            raise ValueError("only replicate borders are supported")


@dataclass
class WarpResult:
    """Raw warped image (holes undefined), hole mask, accepted-weight sum."""

    right_image_raw: np.ndarray
    hole_mask: np.ndarray
    weight_sum: Optional[np.ndarray] = None


def sample_scale(rng: np.random.Generator, sampler: ScaleSampler | None = None) -> float:
    """Draw the disparity scale uniformly from [d_min, d_max]."""
    sampler = sampler or ScaleSampler()
    return float(rng.uniform(sampler.d_min, sampler.d_max))


def depth_to_disparity(depth: np.ndarray, s: float, mode: str = "max_disparity") -> np.ndarray:
    """Convert relative depth to disparity scaled by ``s``.

    ``max_disparity`` (default) uses s * min(depth) / depth so the maximum
    disparity is exactly ``s``; ``literal`` uses s * max(depth) / depth, which
    makes ``s`` the minimum instead. Both are invariant to rescaling depth.
    """
    depth = np.asarray(depth, dtype=np.float64)
    if s <= 0:
        raise ValueError("scale s must be > 0")
    if depth.size == 0 or not np.isfinite(depth).all() or (depth <= 0).any():
        raise ValueError("depth must be finite and strictly positive")
    if mode == "max_disparity":
        ref = depth.min()
    elif mode == "literal":
        ref = depth.max()
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return s * ref / depth


def sobel_response(disp: np.ndarray) -> np.ndarray:
    """Gradient magnitude under the 3x3 Sobel kernels, replicate borders."""
    d = np.asarray(disp, dtype=np.float64)
    p = np.pad(d, 1, mode="edge")
    gx = (p[:-2, 2:] + 2.0 * p[1:-1, 2:] + p[2:, 2:]) - (
        p[:-2, :-2] + 2.0 * p[1:-1, :-2] + p[2:, :-2]
    )
    gy = (p[2:, :-2] + 2.0 * p[2:, 1:-1] + p[2:, 2:]) - (
        p[:-2, :-2] + 2.0 * p[:-2, 1:-1] + p[:-2, 2:]
    )
    return np.hypot(gx, gy)


@lru_cache(maxsize=4096)
def _circle_offsets(r2: int) -> tuple:
    """All integer (dy, dx) with dy^2 + dx^2 == r2."""
    out = []
    r = isqrt(r2)
    for dy in range(-r, r + 1):
        rem = r2 - dy * dy
        dx = isqrt(rem)
        if dx * dx == rem:
            out.append((dy, dx))
            if dx != 0:
                out.append((dy, -dx))
    return tuple(out)


def sharpen_disparity(disp: np.ndarray, cfg: SharpenConfig | None = None) -> np.ndarray:
    """Reassign flying pixels to their nearest non-flying pixel's disparity.

    Flying pixels are those whose Sobel response exceeds the threshold. The
    flying set is frozen from the input (single pass); every flying pixel
    takes the value of the Euclidean-nearest non-flying pixel, ties broken by
    smallest squared distance then smallest row-major index.
    """
    cfg = cfg or SharpenConfig()
    d = np.asarray(disp, dtype=np.float64)
    flying = sobel_response(d) > cfg.sobel_threshold
    if not flying.any():
        return d.copy()
    if flying.all():
        raise ValueError("degenerate input: every pixel is flying")

    h, w = d.shape
    # exact integer squared distance to the nearest non-flying pixel
    ny, nx = ndimage.distance_transform_edt(flying, return_distances=False, return_indices=True)
    fy, fx = np.nonzero(flying)
    r2 = (ny[fy, fx] - fy) ** 2 + (nx[fy, fx] - fx) ** 2

    non_flying_flat = ~flying.ravel()
    sentinel = np.iinfo(np.int64).max
    best = np.full(fy.shape, sentinel, dtype=np.int64)
    for r2val in np.unique(r2):
        sel = np.nonzero(r2 == r2val)[0]
        pys, pxs = fy[sel], fx[sel]
        best_sel = best[sel]
        for dy, dx in _circle_offsets(int(r2val)):
            qy = pys + dy
            qx = pxs + dx
            ok = (qy >= 0) & (qy < h) & (qx >= 0) & (qx < w)
            lin = np.where(ok, qy * w + qx, 0)
            ok &= non_flying_flat[lin]
            best_sel = np.where(ok, np.minimum(best_sel, lin), best_sel)
        best[sel] = best_sel

    out = d.copy()
    out[fy, fx] = d.ravel()[best]
    return out


def forward_warp(
    image: np.ndarray,
    disparity: np.ndarray,
    mode: str = "linear",
    *,
    occlusion_margin: float = OCCLUSION_MARGIN,
    min_weight: float = MIN_WEIGHT,
) -> WarpResult:
    """Splat each source pixel (x, y) to x - disparity in the same row.

    ``nearest``: the target column is the rounded position (ties to even);
    among colliding sources the greater disparity wins, equal disparities
    break toward the greater source x.

    ``linear`` (default): two-tap splat to floor and floor+1 with weights
    (1 - frac, frac). Per target, contributions more than ``occlusion_margin``
    behind the maximum contributing disparity are discarded as occluded; the
    output is the weight-normalized average of the survivors and a pixel is a
    hole when the surviving weight falls below ``min_weight``.

    Out-of-bounds targets are discarded. ``image`` may carry any number of
    channels, so auxiliary rasters (e.g. the disparity itself) can be warped
    alongside the color planes.
    """
    img = np.asarray(image, dtype=np.float64)
    squeeze = img.ndim == 2
    if squeeze:
        img = img[:, :, None]
    d = np.asarray(disparity, dtype=np.float64)
    if img.shape[:2] != d.shape:
        raise ValueError("image and disparity dimensions differ")
    if (d < 0).any():
        raise ValueError("disparity must be non-negative")
    h, w, c = img.shape
    ys, xs = np.indices((h, w))
    t = xs - d

    if mode == "nearest":
        tc = np.rint(t).astype(np.int64)
        inb = (tc >= 0) & (tc < w)
        sy, sx = ys[inb], xs[inb]
        td, tt = d[inb], tc[inb]
        # write in ascending (disparity, source x) order: the last write wins,
        # which realizes the collision rule
        order = np.lexsort((sx, td))
        flat = sy[order] * w + tt[order]
        out = np.zeros((h * w, c))
        out[flat] = img[sy[order], sx[order]]
        weight = np.zeros(h * w)
        weight[flat] = 1.0
        hole = weight < min_weight
        out[hole] = 0.0
        result = out.reshape(h, w, c)
        return WarpResult(result[:, :, 0] if squeeze else result,
                          hole.reshape(h, w), weight.reshape(h, w))

    if mode != "linear":
        raise ValueError(f"unknown warp mode {mode!r}")

    x0 = np.floor(t).astype(np.int64)
    frac = t - x0
    src = (ys * w + xs).ravel()
    tap_x = np.concatenate([x0.ravel(), x0.ravel() + 1])
    tap_w = np.concatenate([1.0 - frac.ravel(), frac.ravel()])
    tap_d = np.concatenate([d.ravel(), d.ravel()])
    tap_y = np.concatenate([ys.ravel(), ys.ravel()])
    tap_s = np.concatenate([src, src])
    keep = (tap_x >= 0) & (tap_x < w) & (tap_w > 0)
    tap_x, tap_w, tap_d, tap_y, tap_s = (
        a[keep] for a in (tap_x, tap_w, tap_d, tap_y, tap_s)
    )
    flat_t = tap_y * w + tap_x

    dstar = np.full(h * w, -np.inf)
    np.maximum.at(dstar, flat_t, tap_d)
    surv = tap_d >= dstar[flat_t] - occlusion_margin
    flat_s = flat_t[surv]
    wgt = tap_w[surv]
    wsum = np.bincount(flat_s, weights=wgt, minlength=h * w)
    img_flat = img.reshape(-1, c)
    out = np.zeros((h * w, c))
    for ch in range(c):
        out[:, ch] = np.bincount(flat_s, weights=wgt * img_flat[tap_s[surv], ch], minlength=h * w)
    hole = wsum < min_weight
    out[~hole] /= wsum[~hole, None]
    out[hole] = 0.0
    result = out.reshape(h, w, c)
    return WarpResult(result[:, :, 0] if squeeze else result,
                      hole.reshape(h, w), wsum.reshape(h, w))


def warp_disparity_plane_stack(image: np.ndarray, weights: np.ndarray) -> WarpResult:
    """Warp via a per-pixel distribution over K integer disparity planes.

    Plane k shifts the image and its weight map k pixels to the left; the
    output is the weight-normalized sum over planes, with zero-total-weight
    pixels flagged as holes.
    """
    img = np.asarray(image, dtype=np.float64)
    squeeze = img.ndim == 2
    if squeeze:
        img = img[:, :, None]
    wts = np.asarray(weights, dtype=np.float64)
    if (wts < 0).any():
        raise ValueError("plane weights must be non-negative")
    if wts.shape[:2] != img.shape[:2] or wts.ndim != 3:
        raise ValueError("weights must be H x W x K aligned with the image")
    h, w, c = img.shape
    num = np.zeros((h, w, c))
    den = np.zeros((h, w))
    for k in range(wts.shape[2]):
        wk = wts[:, :, k]
        if k == 0:
            num += wk[:, :, None] * img
            den += wk
        elif k < w:
            num[:, : w - k] += wk[:, k:, None] * img[:, k:]
            den[:, : w - k] += wk[:, k:]
    hole = den == 0.0
    out = np.where(hole[:, :, None], 0.0, num / np.where(hole, 1.0, den)[:, :, None])
    return WarpResult(out[:, :, 0] if squeeze else out, hole, den)
