"""Manifest-driven batch engine.

Reads (image, depth, background) work items, fans tuple generation out across
worker processes, and writes the output dataset tree::

    out/left/<i>.png  out/right/<i>.png  out/disp/<i>.pfm  [out/disp/<i>.png]
    out/meta/<i>.json  out/run_ledger.json

Every row draws from its own RNG stream keyed on (global_seed, row_index), so
the output tree is a pure function of (manifest, seed, config) and never of
worker count or completion order. Files are staged to temporary names and
atomically renamed, so an interrupted run leaves no torn files.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from . import baselines, geometry, synthesis
from .imgio import (
    DisparityMap,
    FormatError,
    read_image,
    read_pfm,
    write_disparity_png16,
    write_image,
    write_pfm,
)

__all__ = [
    "GENERATORS",
    "ManifestError",
    "ManifestRow",
    "Manifest",
    "RunLedger",
    "read_depth",
    "validate_manifest",
    "run",
    "sweep_scale_render",
    "compose_grid",
]

GENERATORS = ("mono", "affine", "shapes", "superpixels", "svsm")
_DEPTH_GENERATORS = ("mono", "svsm")


class ManifestError(ValueError):
    """Raised for schema violations, missing files, or dimension mismatches."""


@dataclass
class ManifestRow:
    left_image: str
    depth: str = ""
    split: str = "train"


@dataclass
class Manifest:
    """Validated rows plus the run-wide knobs."""

    rows: list
    global_seed: int = 0
    generator: str = "mono"
    config: synthesis.SynthesisConfig = field(default_factory=synthesis.SynthesisConfig)
    png16: bool = False


@dataclass
class RunLedger:
    rows: list
    ok: int
    failed: int
    wall_time: float
    config_hash: str

    def as_dict(self) -> dict:
        return {"rows": self.rows, "ok": self.ok, "failed": self.failed,
                "wall_time": self.wall_time, "config_hash": self.config_hash}


# ---------------------------------------------------------------------------
# manifest parsing and validation


def read_depth(path) -> np.ndarray:
    """Load a depth map: PFM, or 8/16-bit grayscale PNG/JPEG codes.

    Relative units; the depth-to-disparity conversion is scale invariant, so
    only positivity matters.
    """
    path = str(path)
    if path.lower().endswith(".pfm"):
        depth = read_pfm(path).values.astype(np.float64)
    else:
        depth = read_image(path)[:, :, 0].astype(np.float64)
    if (depth <= 0).any():
        raise FormatError(f"depth map has non-positive values: {path}")
    return depth


def _probe_dims(path: str) -> tuple[int, int]:
    if path.lower().endswith(".pfm"):
        with open(path, "rb") as fh:
            if fh.readline().strip() not in (b"Pf", b"PF"):
                raise FormatError(f"not a PFM file: {path}")
            w, h = (int(v) for v in fh.readline().split())
        return h, w
    with PILImage.open(path) as img:
        return img.size[1], img.size[0]


def _parse_rows(path: Path) -> list:
    if path.suffix.lower() == ".json":
        data = json.loads(path.read_text())
        if not isinstance(data, list):
            raise ManifestError("JSON manifest must be a list of row objects")
        rows = []
        for i, entry in enumerate(data):
            if not isinstance(entry, dict) or "left_image" not in entry:
                raise ManifestError(f"row {i}: expected an object with 'left_image'")
            rows.append(ManifestRow(str(entry["left_image"]),
                                    str(entry.get("depth", "") or ""),
                                    str(entry.get("split", "train"))))
        return rows
    rows = []
    for i, line in enumerate(path.read_text().splitlines()):
        line = line.rstrip("\n")
        if not line.strip() or line.startswith("#"):
            continue
        cols = line.split("\t")
        if cols[0] == "left_image":  # optional header
            continue
        if len(cols) > 3:
            raise ManifestError(f"row {i}: expected at most 3 tab-separated columns")
        cols += [""] * (3 - len(cols))
        rows.append(ManifestRow(cols[0], cols[1], cols[2] or "train"))
    return rows


def validate_manifest(path, generator: str = "mono") -> list:
    """Parse and validate a TSV/JSON manifest; returns the row list.

    Checks existence of every referenced file and, where a depth map is
    given, that its dimensions match the image. All problems are reported
    together, each with its row index.
    """
    if generator not in GENERATORS:
        raise ManifestError(f"unknown generator {generator!r}")
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"manifest not found: {path}")
    rows = _parse_rows(path)
    if not rows:
        raise ManifestError("no rows in manifest")
    problems = []
    for i, row in enumerate(rows):
        if not row.left_image:
            problems.append(f"row {i}: missing left_image")
            continue
        if not os.path.exists(row.left_image):
            problems.append(f"row {i}: left image not found: {row.left_image}")
            continue
        if generator in _DEPTH_GENERATORS and not row.depth:
            problems.append(f"row {i}: generator {generator!r} requires a depth path")
            continue
        if row.depth:
            if not os.path.exists(row.depth):
                problems.append(f"row {i}: depth not found: {row.depth}")
                continue
            try:
                if _probe_dims(row.left_image) != _probe_dims(row.depth):
                    problems.append(f"row {i}: image/depth dimension mismatch")
            except (FormatError, OSError, ValueError) as exc:
                problems.append(f"row {i}: {exc}")
    if problems:
        raise ManifestError("; ".join(problems))
    return rows


# ---------------------------------------------------------------------------
# row generation


def _atomic_write(path: Path, writer) -> None:
    tmp = path.with_name(".tmp-" + path.name)  # keep the extension for codecs
    writer(tmp)
    os.replace(tmp, path)


def _generate_tuple(manifest: Manifest, row_index: int) -> synthesis.StereoTuple:
    row = manifest.rows[row_index]
    cfg = manifest.config
    bg_rng = np.random.default_rng(
        np.random.SeedSequence((manifest.global_seed, row_index, 0)))
    gen_seed = (manifest.global_seed, row_index, 1)
    rng = np.random.default_rng(np.random.SeedSequence(gen_seed))

    left = read_image(row.left_image).astype(np.float64)
    bg_index = int(bg_rng.integers(0, len(manifest.rows)))
    background = read_image(manifest.rows[bg_index].left_image).astype(np.float64)
    sources = {"left_image": row.left_image, "depth": row.depth or None,
               "background": manifest.rows[bg_index].left_image, "split": row.split}

    gen = manifest.generator
    if gen == "mono":
        depth = read_depth(row.depth)
        return synthesis.synthesize_tuple(left, depth, background, cfg,
                                          seed=gen_seed, sources=sources)
    if gen == "affine":
        tup = baselines.affine_warp_pair(left, rng, d_max=cfg.scale.d_max)
    elif gen == "shapes":
        pool_size = min(4, len(manifest.rows))
        pool_idx = bg_rng.integers(0, len(manifest.rows), size=pool_size)
        pool = [read_image(manifest.rows[int(j)].left_image).astype(np.float64)
                for j in pool_idx]
        tup = baselines.pasted_shapes_pair(left, pool, rng)
    elif gen == "superpixels":
        tup = baselines.superpixel_pair(left, rng, background=background)
    elif gen == "svsm":
        depth = read_depth(row.depth)
        s = geometry.sample_scale(rng, cfg.scale)
        mono_disp = geometry.depth_to_disparity(depth, s, cfg.disparity_mode)
        tup = baselines.svsm_pair(left, mono_disp, background=background)
    else:
        raise ValueError(f"unknown generator {gen!r}")

    if cfg.augment is not None:
        tup.right = synthesis.augment_right(tup.right, rng, cfg.augment)
    tup.meta.update(seed=list(gen_seed), sources=sources)
    if cfg.crop is not None:
        tup = synthesis.crop_or_resize(tup, rng, cfg.crop)
    return tup.validate()


def _row_task(manifest: Manifest, row_index: int, out_dir: str) -> dict:
    out = Path(out_dir)
    try:
        tup = _generate_tuple(manifest, row_index)
        name = str(row_index)
        _atomic_write(out / "left" / f"{name}.png",
                      lambda p: write_image(tup.left, p))
        _atomic_write(out / "right" / f"{name}.png",
                      lambda p: write_image(tup.right, p))
        disp = DisparityMap.dense(tup.disparity)
        _atomic_write(out / "disp" / f"{name}.pfm", lambda p: write_pfm(disp, p))
        if manifest.png16:
            _atomic_write(out / "disp" / f"{name}.png",
                          lambda p: write_disparity_png16(disp, p))
        meta = json.dumps(tup.meta, sort_keys=True, indent=1)
        _atomic_write(out / "meta" / f"{name}.json",
                      lambda p: Path(p).write_text(meta))
        return {"row": row_index, "status": "ok"}
    except Exception as exc:  # a bad row must not abort the run
        return {"row": row_index, "status": "failed", "reason": f"{type(exc).__name__}: {exc}"}


def _config_hash(manifest: Manifest) -> str:
    payload = json.dumps(
        {"global_seed": manifest.global_seed, "generator": manifest.generator,
         "png16": manifest.png16, "config": asdict(manifest.config)},
        sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()


def run(manifest: Manifest, out_dir, workers: int = 1) -> RunLedger:
    """Generate every manifest row; failed rows are recorded, not fatal."""
    out = Path(out_dir)
    for sub in ("left", "right", "disp", "meta"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    start = time.monotonic()
    n = len(manifest.rows)
    statuses: list = [None] * n
    if workers <= 1:
        for i in range(n):
            statuses[i] = _row_task(manifest, i, str(out))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {pool.submit(_row_task, manifest, i, str(out)): i for i in range(n)}
            for fut in as_completed(futures):
                result = fut.result()
                statuses[result["row"]] = result
    ok = sum(1 for s in statuses if s["status"] == "ok")
    ledger = RunLedger(statuses, ok, n - ok, time.monotonic() - start,
                       _config_hash(manifest))
    (out / "run_ledger.json").write_text(json.dumps(ledger.as_dict(), indent=1))
    return ledger


# ---------------------------------------------------------------------------
# scale-sweep rendering


def _label_panel(panel: np.ndarray, text: str) -> np.ndarray:
    from PIL import ImageDraw

    img = PILImage.fromarray(np.rint(np.clip(panel, 0, 1) * 255).astype(np.uint8))
    draw = ImageDraw.Draw(img)
    draw.text((4, 4), text, fill=(255, 255, 0))
    return np.asarray(img, dtype=np.float64) / 255.0


def compose_grid(panels: list, cols: int | None = None, pad: int = 2) -> np.ndarray:
    """Stack equally sized panels into a padded row-major grid."""
    if not panels:
        raise ValueError("no panels")
    cols = cols or min(3, len(panels))
    rows = math.ceil(len(panels) / cols)
    h, w = panels[0].shape[:2]
    grid = np.ones((rows * h + (rows - 1) * pad, cols * w + (cols - 1) * pad, 3))
    for i, panel in enumerate(panels):
        r, c = divmod(i, cols)
        y, x = r * (h + pad), c * (w + pad)
        grid[y:y + h, x:x + w] = panel
    return grid


def sweep_scale_render(left: np.ndarray, depth: np.ndarray, s_list,
                       background: np.ndarray | None = None,
                       sharpen: bool = True) -> np.ndarray:
    """Render the filled right image at each scale factor, as a labeled grid."""
    s_list = list(s_list)
    if not s_list:
        raise ValueError("s_list must be nonempty")
    if any(s <= 0 for s in s_list):
        raise ValueError("all scale factors must be > 0")
    panels = []
    for s in s_list:
        cfg = synthesis.SynthesisConfig(
            scale=geometry.ScaleSampler(s, s),
            sharpen=geometry.SharpenConfig() if sharpen else None,
            augment=None, crop=None)
        tup = synthesis.synthesize_tuple(left, depth, background, cfg, seed=0)
        panels.append(_label_panel(tup.right, f"s={s:g}"))
    return compose_grid(panels)
