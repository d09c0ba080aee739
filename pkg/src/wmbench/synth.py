"""Procedural sample images for demos, calibration sets, and tests.

Deterministic per seed.  Luma is kept inside [0.03, 0.48] so a 2x
brightness attack stays clamp-free on generated corpora; real datasets
are of course not bound by this.
"""

from __future__ import annotations

import numpy as np

from .imaging import Image, gaussian_blur, rng

__all__ = ["synth_image", "write_corpus"]

LUMA_LO = 0.03
LUMA_HI = 0.48


def synth_image(seed: int, side: int = 256, channels: int = 3) -> Image:
    g = rng(seed)
    yy, xx = np.mgrid[0:side, 0:side] / side

    base = g.uniform(0.2, 0.8) * (np.cos(g.uniform(0, np.pi)) * xx + np.sin(g.uniform(0, np.pi)) * yy)
    for _ in range(g.integers(2, 5)):
        cy, cx = g.uniform(0.1, 0.9, 2)
        s = g.uniform(0.05, 0.3)
        base += g.uniform(-0.8, 0.8) * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * s * s))
    fy, fx = g.uniform(1.0, 6.0, 2)
    base += g.uniform(0.05, 0.3) * np.sin(2 * np.pi * (fy * yy + fx * xx) + g.uniform(0, 2 * np.pi))
    base += gaussian_blur(g.normal(0.0, 0.15, (side, side)), sigma=2.0, radius=4)

    lo, hi = base.min(), base.max()
    base = (base - lo) / (hi - lo + 1e-12)
    base = LUMA_LO + (LUMA_HI - LUMA_LO) * base
    if channels == 1:
        return Image(base[None])

    planes = []
    for _ in range(3):
        tint = 1.0 + g.uniform(-0.25, 0.25)
        wobble = 0.04 * np.sin(2 * np.pi * (g.uniform(0.5, 2.0) * yy + g.uniform(0.5, 2.0) * xx))
        planes.append(np.clip(base * tint + wobble, 0.0, LUMA_HI + 0.04))
    return Image(np.stack(planes))


def write_corpus(directory, count: int, seed: int, side: int = 256) -> list:
    """Write count deterministic PNGs named img0000.png ... into directory."""
    from pathlib import Path

    from .imaging import save_image

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(count):
        p = directory / f"img{i:04d}.png"
        save_image(synth_image(seed + i, side=side), p)
        paths.append(p)
    return paths
