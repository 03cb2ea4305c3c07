"""Image, depth and disparity I/O plus the log-ratio color space.

Images are float arrays in [0, 1] (H x W x 3, row-major) regardless of the
source bit depth, so the warping and augmentation code has a single numeric
path. Disparity rasters carry an explicit per-pixel validity mask; readers
reject malformed files with :class:`FormatError` rather than returning
partial data.

On-disk formats:

* PFM, header ``Pf`` (single channel), dims line, scale line whose sign is
  the byte order, rows stored bottom-up. Non-finite values mark invalid
  pixels on read; invalid pixels are written as ``+inf``.
* 16-bit single-channel PNG, ``code = round(disparity * 256)``, code 0
  reserved for invalid, so the smallest encodable disparity is 1/256.
* 8/16-bit PNG and JPEG color images.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image as PILImage
from PIL import UnidentifiedImageError

__all__ = [
    "FormatError",
    "DisparityMap",
    "read_image",
    "write_image",
    "read_pfm",
    "write_pfm",
    "read_disparity_png16",
    "write_disparity_png16",
    "rgb_to_lab",
    "lab_to_rgb",
    "colorize_disparity",
]


class FormatError(ValueError):
    """Raised for unreadable or out-of-contract image/disparity files."""


@dataclass
class DisparityMap:
    """Horizontal pixel offsets aligned to the left image.

    ``values`` is float32 H x W; ``valid`` marks pixels that carry a usable
    ground-truth value. Invalid pixels hold 0 and are excluded from metrics.
    """

    values: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.values.shape != self.valid.shape or self.values.ndim != 2:
            raise ValueError("values and valid must be equal-shape 2-D arrays")

    @classmethod
    def dense(cls, values) -> "DisparityMap":
        """Wrap a fully valid disparity raster."""
        values = np.asarray(values, dtype=np.float32)
        return cls(values, np.ones(values.shape, dtype=bool))

    @property
    def shape(self):
        return self.values.shape


# ---------------------------------------------------------------------------
# color images


def read_image(path) -> np.ndarray:
    """Load an 8- or 16-bit PNG/JPEG as float RGB in [0, 1].

    Integer codes map to [0, 1] by division by the type's maximum value;
    grayscale is replicated to 3 channels; alpha is dropped.
    """
    try:
        img = PILImage.open(path)
        img.load()
    except (UnidentifiedImageError, OSError) as exc:
        raise FormatError(f"unreadable image file: {path}: {exc}") from exc
    if img.format not in ("PNG", "JPEG"):
        raise FormatError(f"unsupported image format {img.format!r}: {path}")

    if img.mode in ("I", "I;16", "I;16B", "I;16L"):
        arr = np.asarray(img, dtype=np.float64)
        if arr.max(initial=0) > 65535 or arr.min(initial=0) < 0:
            raise FormatError(f"unsupported bit depth (not 8/16-bit): {path}")
        arr = arr / 65535.0
    elif img.mode in ("L", "RGB", "RGBA", "LA", "P", "1"):
        if img.mode != "RGB":
            img = img.convert("RGB")
        arr = np.asarray(img, dtype=np.float64) / 255.0
    else:
        raise FormatError(f"unsupported image mode {img.mode!r}: {path}")

    if arr.ndim == 2:
        arr = np.repeat(arr[:, :, None], 3, axis=2)
    return arr.astype(np.float32)


def write_image(image: np.ndarray, path) -> None:
    """Write a float [0, 1] image as 8-bit PNG/JPEG (by extension)."""
    arr = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    codes = np.rint(arr * 255.0).astype(np.uint8)
    PILImage.fromarray(codes).save(path)


# ---------------------------------------------------------------------------
# PFM


def read_pfm(path) -> DisparityMap:
    """Read a single-channel PFM file; non-finite values become invalid."""
    with open(path, "rb") as fh:
        header = fh.readline().strip()
        if header == b"PF":
            raise FormatError(f"color PFM (3 channels) not supported: {path}")
        if header != b"Pf":
            raise FormatError(f"not a PFM file (header {header!r}): {path}")
        dims = fh.readline().split()
        if len(dims) != 2:
            raise FormatError(f"malformed PFM dims line: {path}")
        try:
            width, height = int(dims[0]), int(dims[1])
            scale = float(fh.readline().strip())
        except ValueError as exc:
            raise FormatError(f"malformed PFM header: {path}") from exc
        if width <= 0 or height <= 0 or scale == 0:
            raise FormatError(f"malformed PFM header values: {path}")
        endian = "<" if scale < 0 else ">"
        payload = fh.read(width * height * 4)
    if len(payload) != width * height * 4:
        raise FormatError(f"truncated PFM payload: {path}")
    data = np.frombuffer(payload, dtype=np.dtype(endian + "f4"))
    data = data.reshape(height, width)[::-1].astype(np.float32)  # rows are bottom-up on disk
    valid = np.isfinite(data)
    values = np.where(valid, data, np.float32(0.0))
    return DisparityMap(values, valid)


def write_pfm(disp: DisparityMap, path) -> None:
    """Write a DisparityMap as little-endian PFM; invalid pixels become +inf."""
    values = disp.values.astype(np.float32)
    out = np.where(disp.valid, values, np.float32(np.inf))
    height, width = out.shape
    with open(path, "wb") as fh:
        fh.write(b"Pf\n")
        fh.write(f"{width} {height}\n".encode("ascii"))
        fh.write(b"-1.0\n")
        fh.write(out[::-1].astype("<f4").tobytes())


# ---------------------------------------------------------------------------
# 16-bit PNG disparity


def read_disparity_png16(path) -> DisparityMap:
    """Read KITTI-style 16-bit PNG disparity (code/256; code 0 invalid)."""
    try:
        img = PILImage.open(path)
        img.load()
    except (UnidentifiedImageError, OSError) as exc:
        raise FormatError(f"unreadable PNG file: {path}: {exc}") from exc
    if img.format != "PNG" or img.mode not in ("I", "I;16", "I;16B", "I;16L"):
        raise FormatError(f"not a 16-bit single-channel PNG: {path}")
    codes = np.asarray(img, dtype=np.int64)
    if codes.ndim != 2 or codes.min(initial=0) < 0 or codes.max(initial=0) > 65535:
        raise FormatError(f"not a 16-bit single-channel PNG: {path}")
    valid = codes > 0
    values = (codes / 256.0).astype(np.float32)
    return DisparityMap(np.where(valid, values, np.float32(0.0)), valid)


def write_disparity_png16(disp: DisparityMap, path) -> None:
    """Write disparity as 16-bit PNG, rounding to the nearest code."""
    codes = np.rint(np.asarray(disp.values, dtype=np.float64) * 256.0)
    if codes.max(initial=0) > 65535:
        raise FormatError("disparity exceeds the 16-bit PNG codable maximum (255.996)")
    codes = np.where(disp.valid, codes, 0.0).astype(np.uint16)
    PILImage.fromarray(codes).save(path, format="PNG")


# ---------------------------------------------------------------------------
# log-ratio color space (Ruderman lab), used by color transfer

_RGB_TO_LMS = np.array(
    [
        [0.3811, 0.5783, 0.0402],
        [0.1967, 0.7244, 0.0782],
        [0.0241, 0.1288, 0.8444],
    ]
)
_LOGLMS_TO_LAB = np.array(
    [
        [1.0 / np.sqrt(3.0), 0.0, 0.0],
        [0.0, 1.0 / np.sqrt(6.0), 0.0],
        [0.0, 0.0, 1.0 / np.sqrt(2.0)],
    ]
) @ np.array([[1.0, 1.0, 1.0], [1.0, 1.0, -2.0], [1.0, -1.0, 0.0]])
# exact numeric inverses keep the round trip well inside 1e-4
_LMS_TO_RGB = np.linalg.inv(_RGB_TO_LMS)
_LAB_TO_LOGLMS = np.linalg.inv(_LOGLMS_TO_LAB)

_LOG_FLOOR = 1.0 / 255.0


def rgb_to_lab(image: np.ndarray) -> np.ndarray:
    """Convert an RGB image in [0, 1] to the decorrelated log-ratio space.

    Channels below 1/255 are clamped before the logarithm (the transform is
    undefined at zero and source data is 8-bit).
    """
    rgb = np.clip(np.asarray(image, dtype=np.float64), _LOG_FLOOR, 1.0)
    lms = rgb @ _RGB_TO_LMS.T
    return np.log10(lms) @ _LOGLMS_TO_LAB.T


def lab_to_rgb(lab: np.ndarray) -> np.ndarray:
    """Invert :func:`rgb_to_lab`; output is clipped to [0, 1]."""
    loglms = np.asarray(lab, dtype=np.float64) @ _LAB_TO_LOGLMS.T
    rgb = np.power(10.0, loglms) @ _LMS_TO_RGB.T
    return np.clip(rgb, 0.0, 1.0)


# ---------------------------------------------------------------------------
# visualization


def colorize_disparity(disp: DisparityMap, max_for_scale: float) -> np.ndarray:
    """Render disparity with a perceptual colormap; invalid pixels are black."""
    if max_for_scale <= 0:
        raise ValueError("max_for_scale must be > 0")
    from matplotlib import colormaps

    table = colormaps["viridis"](np.linspace(0.0, 1.0, 256))[:, :3]
    norm = np.clip(disp.values / float(max_for_scale), 0.0, 1.0)
    idx = np.rint(norm * 255.0).astype(np.intp)
    out = table[idx]
    out[~disp.valid] = 0.0
    return out.astype(np.float32)
