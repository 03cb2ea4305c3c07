"""Full tuple synthesis: hole filling, photometric augmentation, cropping.

The pipeline turns (left image, depth map, background image, seed) into a
training tuple (left, synthesized right, disparity). The emitted disparity is
the sharpened map used for warping, rescaled if the crop policy resizes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import cv2
import numpy as np
from scipy import ndimage

from . import geometry
from .imgio import lab_to_rgb, rgb_to_lab

__all__ = [
    "AugmentConfig",
    "AugmentParams",
    "CropPolicy",
    "SynthesisConfig",
    "StereoTuple",
    "match_lab_statistics",
    "reinhard_transfer",
    "fit_to_cover",
    "fill_holes",
    "sample_augment_params",
    "augment_right",
    "crop_or_resize",
    "synthesize_tuple",
]

_LUMA = np.array([0.299, 0.587, 0.114])
_RGB_TO_YIQ = np.array(
    [
        [0.299, 0.587, 0.114],
        [0.595716, -0.274453, -0.321263],
        [0.211456, -0.522591, 0.311135],
    ]
)
_YIQ_TO_RGB = np.linalg.inv(_RGB_TO_YIQ)
_ZERO_STD = 1e-12


@dataclass
class AugmentConfig:
    """Photometric jitter applied to the synthesized right image only."""

    noise_std: float = 0.05
    contrast_jitter: float = 0.2
    brightness_jitter: float = 0.2
    saturation_jitter: float = 0.2
    hue_jitter: float = 0.01
    blur_probability: float = 0.5
    blur_sigma_range: tuple = (0.0, 1.0)

    def __post_init__(self):
        for name in ("noise_std", "contrast_jitter", "brightness_jitter",
                     "saturation_jitter", "hue_jitter"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not 0.0 <= self.blur_probability <= 1.0:
            raise ValueError("blur_probability must be in [0, 1]")


@dataclass
class AugmentParams:
    """One concrete draw of the augmentation knobs."""

    brightness: float
    contrast: float
    saturation: float
    hue_turns: float
    blur_sigma: Optional[float]  # None when no blur is applied


@dataclass
class CropPolicy:
    """Final crop size and the threshold for downscaling oversized inputs."""

    crop_width: int = 608
    crop_height: int = 320
    oversize_factor: float = 2.0

    def __post_init__(self):
        if self.crop_width <= 0 or self.crop_height <= 0:
            raise ValueError("crop dimensions must be > 0")
        if self.oversize_factor < 1.0:
            raise ValueError("oversize_factor must be >= 1")


@dataclass
class SynthesisConfig:
    """All pipeline knobs; defaults are the standard training constants."""

    scale: geometry.ScaleSampler = field(default_factory=geometry.ScaleSampler)
    disparity_mode: str = "max_disparity"
    sharpen: Optional[geometry.SharpenConfig] = field(default_factory=geometry.SharpenConfig)
    warp_mode: str = "linear"
    fill_background: bool = True
    augment: Optional[AugmentConfig] = field(default_factory=AugmentConfig)
    crop: Optional[CropPolicy] = field(default_factory=CropPolicy)


@dataclass
class StereoTuple:
    """One training tuple; all rasters share dimensions.

    ``disparity`` is aligned to the left image, ``hole_mask`` to the right.
    """

    left: np.ndarray
    right: np.ndarray
    disparity: np.ndarray
    hole_mask: np.ndarray
    meta: dict = field(default_factory=dict)

    def validate(self) -> "StereoTuple":
        dims = self.left.shape[:2]
        if (self.right.shape[:2] != dims or self.disparity.shape != dims
                or self.hole_mask.shape != dims):
            raise ValueError("tuple rasters have mismatched dimensions")
        if not np.isfinite(self.disparity).all() or (self.disparity < 0).any():
            raise ValueError("disparity must be finite and >= 0")
        return self


# ---------------------------------------------------------------------------
# color transfer


def match_lab_statistics(src_lab: np.ndarray, ref_lab: np.ndarray,
                         ref_mask: np.ndarray | None = None) -> np.ndarray:
    """Shift/scale each log-ratio channel of src to the reference statistics.

    A channel with (numerically) zero source variance keeps scale 1 so
    constant inputs land exactly on the reference mean.
    """
    src = np.asarray(src_lab, dtype=np.float64)
    ref = np.asarray(ref_lab, dtype=np.float64).reshape(-1, 3)
    if ref_mask is not None:
        ref = ref[np.asarray(ref_mask, dtype=bool).ravel()]
    if ref.size == 0:
        raise ValueError("reference has no pixels")
    src_mean = src.reshape(-1, 3).mean(axis=0)
    src_std = src.reshape(-1, 3).std(axis=0)
    ref_mean = ref.mean(axis=0)
    ref_std = ref.std(axis=0)
    scale = np.where(src_std > _ZERO_STD, ref_std / np.where(src_std > _ZERO_STD, src_std, 1.0), 1.0)
    return (src - src_mean) * scale + ref_mean


def reinhard_transfer(source: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Match the source image's global color statistics to the reference."""
    out_lab = match_lab_statistics(rgb_to_lab(source), rgb_to_lab(reference))
    return lab_to_rgb(out_lab)


# ---------------------------------------------------------------------------
# hole filling


def fit_to_cover(image: np.ndarray, height: int, width: int) -> np.ndarray:
    """Isotropically scale to cover (height, width), then center crop."""
    img = np.asarray(image, dtype=np.float64)
    ih, iw = img.shape[:2]
    if (ih, iw) == (height, width):
        return img
    r = max(width / iw, height / ih)
    nw = max(width, int(round(iw * r)))
    nh = max(height, int(round(ih * r)))
    img = cv2.resize(img.astype(np.float32), (nw, nh), interpolation=cv2.INTER_LINEAR)
    y0 = (nh - height) // 2
    x0 = (nw - width) // 2
    return np.asarray(img[y0:y0 + height, x0:x0 + width], dtype=np.float64)


def fill_holes(warp: geometry.WarpResult, background: np.ndarray,
               reference: np.ndarray | None = None, transfer: bool = True) -> np.ndarray:
    """Fill warp holes with (color-transferred) background texture.

    Non-hole pixels are returned bit-identical. ``reference`` is the image
    whose color statistics the background is matched to (normally the left
    input); when omitted, the statistics of the non-hole warped pixels are
    used instead.
    """
    raw = np.asarray(warp.right_image_raw, dtype=np.float64)
    hole = np.asarray(warp.hole_mask, dtype=bool)
    if hole.shape != raw.shape[:2]:
        raise ValueError("hole mask does not match the warped image")
    h, w = hole.shape
    bg = fit_to_cover(background, h, w)
    if transfer:
        if reference is not None:
            bg = lab_to_rgb(match_lab_statistics(rgb_to_lab(bg), rgb_to_lab(reference)))
        elif (~hole).any():
            bg = lab_to_rgb(match_lab_statistics(rgb_to_lab(bg), rgb_to_lab(raw), ref_mask=~hole))
        else:
            raise ValueError("reference image required when every pixel is a hole")
    out = raw.copy()
    out[hole] = bg[hole]
    return out


# ---------------------------------------------------------------------------
# augmentation


def sample_augment_params(rng: np.random.Generator, cfg: AugmentConfig | None = None) -> AugmentParams:
    """Draw one set of augmentation knobs (fixed draw order)."""
    cfg = cfg or AugmentConfig()
    brightness = float(rng.uniform(-cfg.brightness_jitter, cfg.brightness_jitter))
    contrast = float(rng.uniform(1.0 - cfg.contrast_jitter, 1.0 + cfg.contrast_jitter))
    saturation = float(rng.uniform(1.0 - cfg.saturation_jitter, 1.0 + cfg.saturation_jitter))
    hue = float(rng.uniform(-cfg.hue_jitter, cfg.hue_jitter))
    blur_sigma = None
    if rng.random() < cfg.blur_probability:
        blur_sigma = float(rng.uniform(*cfg.blur_sigma_range))
    return AugmentParams(brightness, contrast, saturation, hue, blur_sigma)


def _gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    radius = math.ceil(3.0 * sigma)
    if sigma <= 0 or radius == 0:
        return img
    xs = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-(xs ** 2) / (2.0 * sigma * sigma))
    kernel /= kernel.sum()
    out = ndimage.convolve1d(img, kernel, axis=0, mode="nearest")
    return ndimage.convolve1d(out, kernel, axis=1, mode="nearest")


def augment_right(img: np.ndarray, rng: np.random.Generator,
                  cfg: AugmentConfig | None = None) -> np.ndarray:
    """Photometric augmentation, deterministic given the generator state.

    Order: additive brightness, contrast about the per-image mean luminance,
    saturation about the per-pixel luminance, hue rotation of the chroma
    plane, i.i.d. Gaussian pixel noise, then (with the configured
    probability) Gaussian blur of sigma ~ U(range) and radius ceil(3 sigma).
    The result is clipped to [0, 1]. Stages whose drawn parameter is exactly
    the identity are skipped, so an all-zero config returns the input bits.
    """
    cfg = cfg or AugmentConfig()
    params = sample_augment_params(rng, cfg)
    out = np.asarray(img, dtype=np.float64)

    if params.brightness != 0.0:
        out = out + params.brightness
    if params.contrast != 1.0:
        mean_luma = float((out @ _LUMA).mean())
        out = (out - mean_luma) * params.contrast + mean_luma
    if params.saturation != 1.0:
        luma = (out @ _LUMA)[:, :, None]
        out = luma + (out - luma) * params.saturation
    if params.hue_turns != 0.0:
        theta = 2.0 * math.pi * params.hue_turns
        rot = np.array(
            [
                [1.0, 0.0, 0.0],
                [0.0, math.cos(theta), -math.sin(theta)],
                [0.0, math.sin(theta), math.cos(theta)],
            ]
        )
        out = out @ (_YIQ_TO_RGB @ rot @ _RGB_TO_YIQ).T

    if cfg.noise_std > 0:
        out = out + rng.normal(0.0, cfg.noise_std, size=out.shape)
    if params.blur_sigma is not None:
        out = _gaussian_blur(out, params.blur_sigma)
    return np.clip(out, 0.0, 1.0)


# ---------------------------------------------------------------------------
# crop / resize


def crop_or_resize(tup: StereoTuple, rng: np.random.Generator,
                   policy: CropPolicy | None = None) -> StereoTuple:
    """Apply the crop policy: isotropic resize when needed, then random crop.

    When either dimension is below the crop size, or both exceed
    oversize_factor times it, all rasters are resized so the constraining
    dimension matches; disparity values scale with the horizontal factor.
    The crop offset is uniform and identical across rasters.
    """
    policy = policy or CropPolicy()
    h, w = tup.left.shape[:2]
    cw, ch = policy.crop_width, policy.crop_height
    r_fit = max(cw / w, ch / h)

    left, right, disp, hole = tup.left, tup.right, tup.disparity, tup.hole_mask
    scale_x = 1.0
    if r_fit > 1.0 or r_fit < 1.0 / policy.oversize_factor:
        nw = max(cw, int(round(w * r_fit)))
        nh = max(ch, int(round(h * r_fit)))
        scale_x = nw / w
        left = cv2.resize(left.astype(np.float32), (nw, nh), interpolation=cv2.INTER_LINEAR).astype(np.float64)
        right = cv2.resize(right.astype(np.float32), (nw, nh), interpolation=cv2.INTER_LINEAR).astype(np.float64)
        disp = cv2.resize(disp.astype(np.float32), (nw, nh), interpolation=cv2.INTER_LINEAR).astype(np.float64) * scale_x
        hole = cv2.resize(hole.astype(np.uint8), (nw, nh), interpolation=cv2.INTER_NEAREST).astype(bool)
        h, w = nh, nw

    x0 = int(rng.integers(0, w - cw + 1))
    y0 = int(rng.integers(0, h - ch + 1))
    meta = dict(tup.meta, resize_factor=scale_x, crop_offset=[x0, y0])
    return StereoTuple(
        left[y0:y0 + ch, x0:x0 + cw],
        right[y0:y0 + ch, x0:x0 + cw],
        disp[y0:y0 + ch, x0:x0 + cw],
        hole[y0:y0 + ch, x0:x0 + cw],
        meta,
    )


# ---------------------------------------------------------------------------
# full pipeline


def synthesize_tuple(left: np.ndarray, depth: np.ndarray, background: np.ndarray | None,
                     cfg: SynthesisConfig | None = None, seed=0,
                     sources: dict | None = None, generator: str = "mono") -> StereoTuple:
    """Run the full pipeline; a pure function of (inputs, seed, config).

    Stages: scale draw, depth to disparity, sharpening, forward warp, hole
    filling (black holes when fill_background is off or no background is
    given), right-image augmentation, crop/resize. The emitted disparity is
    the sharpened map, post-crop/rescale.
    """
    cfg = cfg or SynthesisConfig()
    left = np.asarray(left, dtype=np.float64)
    depth = np.asarray(depth, dtype=np.float64)
    if left.shape[:2] != depth.shape:
        raise ValueError("left image and depth map dimensions differ")

    rng = np.random.default_rng(np.random.SeedSequence(seed))
    s = geometry.sample_scale(rng, cfg.scale)
    disp = geometry.depth_to_disparity(depth, s, cfg.disparity_mode)
    if cfg.sharpen is not None:
        disp = geometry.sharpen_disparity(disp, cfg.sharpen)
    warp = geometry.forward_warp(left, disp, cfg.warp_mode)
    if cfg.fill_background and background is not None:
        right = fill_holes(warp, background, reference=left)
    else:
        right = warp.right_image_raw.copy()
        right[warp.hole_mask] = 0.0
    if cfg.augment is not None:
        right = augment_right(right, rng, cfg.augment)

    meta = {
        "seed": list(seed) if isinstance(seed, (tuple, list)) else int(seed),
        "scale": s,
        "generator": generator,
        "sources": sources or {},
    }
    tup = StereoTuple(left, right, disp, warp.hole_mask, meta)
    if cfg.crop is not None:
        tup = crop_or_resize(tup, rng, cfg.crop)
    return tup.validate()
