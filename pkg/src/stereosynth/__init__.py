"""Stereo training tuples from single images and monocular depth."""

from .geometry import (
    ScaleSampler,
    SharpenConfig,
    WarpResult,
    depth_to_disparity,
    forward_warp,
    sample_scale,
    sharpen_disparity,
    sobel_response,
    warp_disparity_plane_stack,
)
from .imgio import (
    DisparityMap,
    FormatError,
    colorize_disparity,
    lab_to_rgb,
    read_disparity_png16,
    read_image,
    read_pfm,
    rgb_to_lab,
    write_disparity_png16,
    write_image,
    write_pfm,
)
from .synthesis import (
    AugmentConfig,
    CropPolicy,
    StereoTuple,
    SynthesisConfig,
    augment_right,
    crop_or_resize,
    fill_holes,
    reinhard_transfer,
    synthesize_tuple,
)

__version__ = "0.1.0"
