"""The four alternative stereo-pair generators used for data-quality comparisons:
affine warps, random pasted shapes, random superpixels, and the single-view
selection-module warp.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import cv2
import numpy as np
from scipy import ndimage

from . import geometry, synthesis
from .synthesis import StereoTuple, fill_holes, fit_to_cover, reinhard_transfer

__all__ = [
    "ShapeSpec",
    "SuperpixelConfig",
    "sample_affine_shifts",
    "affine_warp_from_shifts",
    "affine_warp_pair",
    "gen_shape",
    "rasterize_shape",
    "paste_patch",
    "pasted_shapes_pair",
    "felzenszwalb_segment",
    "sample_foreground",
    "superpixel_pair",
    "one_hot_disparity_weights",
    "svsm_pair",
]

SHAPE_KINDS = ("rectangle", "partial_ellipse", "polygon", "thin_object")

# pasted-shape foreground translation range; the background affine warp is
# capped at 50 px so patches always move faster than the background
PATCH_DISPARITY_RANGE = (50.0, 150.0)

# network modeling cap used to clip superpixel/selection-module disparities
DISPARITY_CAP = 192.0


# ---------------------------------------------------------------------------
# affine warps


def sample_affine_shifts(rng: np.random.Generator, d_max: float) -> tuple[float, float]:
    """Two-branch top/bottom shift sampler.

    With probability 1/2 the top shift is drawn first and bounds the bottom
    shift; otherwise the roles are reversed.
    """
    if rng.random() < 0.5:
        s_top = float(rng.uniform(0.0, d_max))
        s_bottom = float(rng.uniform(0.0, s_top))
    else:
        s_bottom = float(rng.uniform(0.0, d_max))
        s_top = float(rng.uniform(0.0, s_bottom))
    return s_top, s_bottom


def affine_warp_from_shifts(left: np.ndarray, s_top: float, s_bottom: float) -> StereoTuple:
    """Deterministic affine shear for given top/bottom shifts.

    The right view samples the left image at x + shift(y) (linear), where the
    shift interpolates the top/bottom values down the rows. Both images and
    the disparity are cropped by ceil(max shift) columns on the right to
    remove the unsampled border.
    """
    left = np.asarray(left, dtype=np.float64)
    h, w = left.shape[:2]
    if min(s_top, s_bottom) < 0 or max(s_top, s_bottom) >= w:
        raise ValueError("shifts must lie in [0, image width)")
    ys = np.arange(h, dtype=np.float64)
    shift = np.full(h, s_top) if h == 1 else s_top + (s_bottom - s_top) * ys / (h - 1)

    crop = int(math.ceil(max(s_top, s_bottom)))
    keep = w - crop
    xs = np.arange(keep, dtype=np.float64)[None, :] + shift[:, None]
    x0 = np.floor(xs).astype(np.int64)
    frac = (xs - x0)[:, :, None]
    x1 = np.minimum(x0 + 1, w - 1)
    rows = np.arange(h)[:, None]
    right = (1.0 - frac) * left[rows, x0] + frac * left[rows, x1]

    disp = np.repeat(shift[:, None], keep, axis=1)
    meta = {"generator": "affine", "s_top": s_top, "s_bottom": s_bottom}
    return StereoTuple(left[:, :keep].copy(), right, disp,
                       np.zeros((h, keep), dtype=bool), meta)


def affine_warp_pair(left: np.ndarray, rng: np.random.Generator,
                     d_max: float = 225.0) -> StereoTuple:
    """Affine shear with shifts drawn by :func:`sample_affine_shifts`."""
    w = np.asarray(left).shape[1]
    if d_max <= 0 or d_max >= w:
        raise ValueError("require 0 < d_max < image width")
    s_top, s_bottom = sample_affine_shifts(rng, d_max)
    tup = affine_warp_from_shifts(left, s_top, s_bottom)
    tup.meta["d_max"] = d_max
    return tup


# ---------------------------------------------------------------------------
# random pasted shapes


@dataclass
class ShapeSpec:
    """A sampled mask shape; ``params`` are kind-specific."""

    kind: str
    params: dict = field(default_factory=dict)
    disparity_offset: float = 0.0


def _sample_polygon_vertices(rng, cx, cy, ave_radius, num_verts,
                             irregularity=0.5, spikyness=0.8):
    # angular steps jittered by the irregularity, then renormalized to 2*pi
    base = 2.0 * math.pi / num_verts
    irr = irregularity * base
    steps = rng.uniform(base - irr, base + irr, num_verts)
    steps *= 2.0 * math.pi / steps.sum()
    angle = rng.uniform(0.0, 2.0 * math.pi)
    pts = []
    for i in range(num_verts):
        r = float(np.clip(rng.normal(ave_radius, spikyness * ave_radius), 0.0, 2.0 * ave_radius))
        pts.append((cx + r * math.cos(angle), cy + r * math.sin(angle)))
        angle += steps[i]
    return pts


def _sample_shape_params(rng: np.random.Generator, kind: str, w: int, h: int) -> dict:
    if kind == "rectangle":
        x0, x1 = sorted(rng.uniform(0.1 * w, 0.9 * w, 2))
        y0, y1 = sorted(rng.uniform(0.1 * h, 0.9 * h, 2))
        return {"x0": float(x0), "x1": float(x1), "y0": float(y0), "y1": float(y1)}
    if kind == "partial_ellipse":
        cx = float(rng.uniform(0.1 * w, 0.9 * w))
        cy = float(rng.uniform(0.1 * h, 0.9 * h))
        if rng.random() < 0.75:
            start, end = 0.0, 360.0
        else:
            start = float(rng.uniform(0.0, 360.0))
            end = float(rng.uniform(0.0, 360.0))
        rotation = float(rng.uniform(0.0, 360.0))
        ax0, ax1 = rng.uniform(0.1 * w, 0.9 * w, 2)
        return {"cx": cx, "cy": cy, "start_angle": start, "end_angle": end,
                "rotation": rotation, "axis0": float(ax0), "axis1": float(ax1)}
    if kind == "polygon":
        cx = float(rng.uniform(0.1 * w, 0.9 * w))
        cy = float(rng.uniform(0.1 * h, 0.9 * h))
        num_verts = int(rng.integers(3, 21))
        ave_radius = float(rng.uniform(0.01 * w, 0.3 * w))
        verts = _sample_polygon_vertices(rng, cx, cy, ave_radius, num_verts)
        return {"vertices": verts}
    if kind == "thin_object":
        cx = float(rng.uniform(0.1 * w, 0.9 * w))
        cy = float(rng.uniform(0.1 * h, 0.9 * h))
        minor = float(rng.uniform(0.001 * h, 0.025 * h))
        major = float(rng.uniform(0.1 * w, 0.5 * w))
        rotation = float(rng.uniform(0.0, 360.0))
        return {"cx": cx, "cy": cy, "axis0": major, "axis1": minor,
                "rotation": rotation, "start_angle": 0.0, "end_angle": 360.0}
    raise ValueError(f"unknown shape kind {kind!r}")


def rasterize_shape(spec: ShapeSpec, w: int, h: int) -> np.ndarray:
    """Even-odd fill of the shape, clipped to the image bounds."""
    p = spec.params
    if spec.kind == "rectangle":
        mask = np.zeros((h, w), dtype=bool)
        x0 = max(0, int(math.floor(p["x0"])))
        x1 = min(w, int(math.ceil(p["x1"])))
        y0 = max(0, int(math.floor(p["y0"])))
        y1 = min(h, int(math.ceil(p["y1"])))
        mask[y0:y1, x0:x1] = True
        return mask
    buf = np.zeros((h, w), dtype=np.uint8)
    if spec.kind in ("partial_ellipse", "thin_object"):
        center = (int(round(p["cx"])), int(round(p["cy"])))
        axes = (max(1, int(round(p["axis0"]))), max(1, int(round(p["axis1"]))))
        cv2.ellipse(buf, center, axes, p["rotation"], p["start_angle"],
                    p["end_angle"], 255, -1)
    elif spec.kind == "polygon":
        pts = np.array([[int(round(x)), int(round(y))] for x, y in p["vertices"]],
                       dtype=np.int32)
        cv2.fillPoly(buf, [pts], 255)
    else:
        raise ValueError(f"unknown shape kind {spec.kind!r}")
    return buf > 0


def gen_shape(rng: np.random.Generator, kind: str | None, w: int, h: int) -> ShapeSpec:
    """Sample a shape of the given kind (or uniformly over the four kinds).

    Degenerate draws that rasterize to an empty mask are resampled, so every
    returned spec produces a nonempty in-bounds mask.
    """
    for _ in range(64):
        k = kind if kind is not None else SHAPE_KINDS[rng.integers(0, len(SHAPE_KINDS))]
        spec = ShapeSpec(k, _sample_shape_params(rng, k, w, h))
        if rasterize_shape(spec, w, h).any():
            return spec
    raise RuntimeError("could not sample a nonempty shape mask")


def paste_patch(left: np.ndarray, right: np.ndarray, disp: np.ndarray,
                texture: np.ndarray, mask_points: tuple, delta: int) -> None:
    """Stamp one textured patch in place.

    ``mask_points`` are the (rows, cols) of the patch on the left image; the
    same texture pixels land ``delta`` columns to the left on the right image
    (clipped at the border) and the left-aligned disparity becomes ``delta``
    inside the patch.
    """
    py, px = mask_points
    left[py, px] = texture[py, px]
    disp[py, px] = float(delta)
    inb = px - delta >= 0
    right[py[inb], px[inb] - delta] = texture[py[inb], px[inb]]


def pasted_shapes_pair(left: np.ndarray, texture_pool: Sequence[np.ndarray],
                       rng: np.random.Generator, transfer: bool = True) -> StereoTuple:
    """Affine-warped base plus up to 10 pasted foreground patches.

    Each patch takes a random mask shape filled with a (color-fitted) random
    texture, pasted on the left image and pasted again on the right image
    translated left by its disparity; the disparity map takes that value
    inside the patch. Later patches overwrite earlier ones.
    """
    if len(texture_pool) == 0:
        raise ValueError("texture pool is empty")
    base = affine_warp_pair(left, rng, d_max=50.0)
    lft, rgt, disp = base.left.copy(), base.right.copy(), base.disparity.copy()
    h, w = lft.shape[:2]
    num_patches = int(rng.integers(0, 11))
    patches = []
    for _ in range(num_patches):
        tex = texture_pool[int(rng.integers(0, len(texture_pool)))]
        tex = fit_to_cover(tex, h, w)
        if transfer:
            tex = reinhard_transfer(tex, lft)
        spec = gen_shape(rng, None, w, h)
        mask = rasterize_shape(spec, w, h)
        ys, xs = np.nonzero(mask)
        bh = ys.max() - ys.min() + 1
        bw = xs.max() - xs.min() + 1
        ty = int(rng.integers(0, h - bh + 1))
        tx = int(rng.integers(0, w - bw + 1))
        py = ys - ys.min() + ty
        px = xs - xs.min() + tx

        delta = int(round(rng.uniform(*PATCH_DISPARITY_RANGE)))
        spec.disparity_offset = float(delta)
        paste_patch(lft, rgt, disp, tex, (py, px), delta)
        patches.append({"kind": spec.kind, "delta": delta,
                        "bbox": [int(tx), int(ty), int(tx + bw), int(ty + bh)]})

    meta = dict(base.meta, generator="shapes", num_patches=num_patches, patches=patches)
    return StereoTuple(lft, rgt, disp, base.hole_mask, meta)


# ---------------------------------------------------------------------------
# graph-based superpixels


def felzenszwalb_segment(image: np.ndarray, scale: float, sigma: float,
                         min_size: float) -> np.ndarray:
    """Graph-based segmentation over the 8-connected grid.

    Edges are weighted by Euclidean RGB distance (after Gaussian
    pre-smoothing) and merged in ascending weight order under the threshold
    tau(C) = scale / |C|; a final pass merges components smaller than
    min_size into their nearest neighbor. Ties in edge weight break by edge
    construction index (stable sort), so the result is deterministic.
    """
    if scale <= 0 or min_size < 0 or sigma < 0:
        raise ValueError("parameters must be positive")
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 2:
        img = img[:, :, None]
    if sigma > 0:
        img = ndimage.gaussian_filter(img, sigma=(sigma, sigma, 0), mode="nearest")
    h, w = img.shape[:2]
    idx = np.arange(h * w).reshape(h, w)

    edges_a, edges_b = [], []
    # fixed construction order: E, S, SE, SW (row-major within each block)
    edges_a.append(idx[:, :-1].ravel()); edges_b.append(idx[:, 1:].ravel())
    edges_a.append(idx[:-1, :].ravel()); edges_b.append(idx[1:, :].ravel())
    edges_a.append(idx[:-1, :-1].ravel()); edges_b.append(idx[1:, 1:].ravel())
    edges_a.append(idx[:-1, 1:].ravel()); edges_b.append(idx[1:, :-1].ravel())
    ea = np.concatenate(edges_a)
    eb = np.concatenate(edges_b)
    flat = img.reshape(-1, img.shape[2])
    weights = np.sqrt(((flat[ea] - flat[eb]) ** 2).sum(axis=1))
    order = np.argsort(weights, kind="stable")

    parent = list(range(h * w))
    size = [1] * (h * w)
    internal = [0.0] * (h * w)

    def find(a):
        root = a
        while parent[root] != root:
            root = parent[root]
        while parent[a] != root:
            parent[a], a = root, parent[a]
        return root

    ea_l, eb_l, w_l = ea.tolist(), eb.tolist(), weights.tolist()
    for e in order.tolist():
        a, b = find(ea_l[e]), find(eb_l[e])
        if a == b:
            continue
        wt = w_l[e]
        if wt <= min(internal[a] + scale / size[a], internal[b] + scale / size[b]):
            parent[b] = a
            size[a] += size[b]
            internal[a] = wt
    for e in order.tolist():
        a, b = find(ea_l[e]), find(eb_l[e])
        if a != b and (size[a] < min_size or size[b] < min_size):
            parent[b] = a
            size[a] += size[b]

    roots = np.array([find(i) for i in range(h * w)])
    _, labels = np.unique(roots, return_inverse=True)
    return labels.reshape(h, w)


@dataclass
class SuperpixelConfig:
    """Distributions for the superpixel baseline's plane and segmentation."""

    a_range: tuple = (-0.025, 0.025)
    b_range: tuple = (0.3, 0.4)
    c_range: tuple = (15.0, 20.0)
    foreground_prob: float = 0.6
    offset_max: float = 64.0
    felz_scale_range: tuple = (50.0, 200.0)
    felz_sigma_range: tuple = (0.0, 1.0)
    felz_min_size_range: tuple = (75.0, 275.0)
    d_max: float = DISPARITY_CAP


def sample_foreground(rng: np.random.Generator, n: int, prob: float = 0.6) -> np.ndarray:
    """Bernoulli foreground choice per superpixel."""
    return rng.random(n) < prob


def superpixel_pair(left: np.ndarray, rng: np.random.Generator,
                    background: np.ndarray | None = None,
                    cfg: SuperpixelConfig | None = None) -> StereoTuple:
    """Plane-initialized disparity with randomly raised superpixels.

    The disparity starts as the plane a*x + b*y + c; superpixels chosen as
    foreground are flattened to their plane mean plus a uniform offset; the
    result is clipped to [0, d_max] and forward warped.
    """
    cfg = cfg or SuperpixelConfig()
    left = np.asarray(left, dtype=np.float64)
    h, w = left.shape[:2]
    felz_scale = float(rng.uniform(*cfg.felz_scale_range))
    felz_sigma = float(rng.uniform(*cfg.felz_sigma_range))
    felz_min_size = float(rng.uniform(*cfg.felz_min_size_range))
    labels = felzenszwalb_segment(left, felz_scale, felz_sigma, felz_min_size)

    a = float(rng.uniform(*cfg.a_range))
    b = float(rng.uniform(*cfg.b_range))
    c = float(rng.uniform(*cfg.c_range))
    ys, xs = np.indices((h, w), dtype=np.float64)
    plane = a * xs + b * ys + c

    n_labels = int(labels.max()) + 1
    fg = sample_foreground(rng, n_labels, cfg.foreground_prob)
    offsets = rng.uniform(0.0, cfg.offset_max, n_labels)
    sums = np.bincount(labels.ravel(), weights=plane.ravel(), minlength=n_labels)
    counts = np.bincount(labels.ravel(), minlength=n_labels)
    means = sums / counts
    disp = np.where(fg[labels], means[labels] + offsets[labels], plane)
    disp = np.clip(disp, 0.0, cfg.d_max)

    warp = geometry.forward_warp(left, disp, "linear")
    if background is not None:
        right = fill_holes(warp, background, reference=left)
    else:
        right = warp.right_image_raw.copy()
        right[warp.hole_mask] = 0.0
    meta = {"generator": "superpixels", "plane": [a, b, c],
            "felzenszwalb": [felz_scale, felz_sigma, felz_min_size],
            "num_superpixels": n_labels}
    return StereoTuple(left, right, disp, warp.hole_mask, meta)


# ---------------------------------------------------------------------------
# selection-module warp


def one_hot_disparity_weights(disparity: np.ndarray, num_planes: int) -> np.ndarray:
    """One-hot plane weights at round(disparity), clamped to [0, K-1]."""
    d = np.rint(np.asarray(disparity, dtype=np.float64))
    d = np.clip(d, 0, num_planes - 1).astype(np.intp)
    h, w = d.shape
    weights = np.zeros((h, w, num_planes), dtype=np.float32)
    ys, xs = np.indices((h, w))
    weights[ys, xs, d] = 1.0
    return weights


def svsm_pair(left: np.ndarray, mono_disparity: np.ndarray,
              background: np.ndarray | None = None,
              num_planes: int = int(DISPARITY_CAP)) -> StereoTuple:
    """Selection-module warp of a monocular disparity estimate.

    The estimate becomes a one-hot distribution over integer disparity
    planes; image and disparity are warped through the plane stack and the
    weighted sum is taken. The emitted ground truth is the left-aligned
    clamped/rounded estimate.
    """
    left = np.asarray(left, dtype=np.float64)
    d = np.clip(np.rint(np.asarray(mono_disparity, dtype=np.float64)), 0, num_planes - 1)
    if left.shape[:2] != d.shape:
        raise ValueError("left image and disparity dimensions differ")
    weights = one_hot_disparity_weights(d, num_planes)
    stack = np.concatenate([left, d[:, :, None]], axis=2)
    warp = geometry.warp_disparity_plane_stack(stack, weights)
    rgb_warp = geometry.WarpResult(warp.right_image_raw[:, :, :3], warp.hole_mask,
                                   warp.weight_sum)
    if background is not None:
        right = fill_holes(rgb_warp, background, reference=left)
    else:
        right = rgb_warp.right_image_raw.copy()
        right[warp.hole_mask] = 0.0
    meta = {"generator": "svsm", "num_planes": num_planes}
    return StereoTuple(left, right, d, warp.hole_mask, meta)
