"""wmbench: image watermarking schemes, attacks, and a robustness harness."""

from . import wm_dwtdctsvd, wm_gaussianshading, wm_treering  # registers schemes
from .imaging import Image, load_image, save_image
from .watermark_core import (
    DetectionOutcome,
    WatermarkBits,
    WatermarkKey,
    generate_key,
    key_load,
    key_save,
    scheme_detect,
    scheme_embed,
    scheme_statistic,
)

__version__ = "0.1.0"

__all__ = [
    "Image",
    "load_image",
    "save_image",
    "WatermarkBits",
    "WatermarkKey",
    "DetectionOutcome",
    "generate_key",
    "key_save",
    "key_load",
    "scheme_embed",
    "scheme_detect",
    "scheme_statistic",
    "wm_dwtdctsvd",
    "wm_treering",
    "wm_gaussianshading",
]
