"""Quality and detection metrics: bit accuracy, PSNR, SSIM, kernel MMD.

The MMD path realizes the semantic-distortion score as an unbiased
squared maximum mean discrepancy between embedding sets under a Gaussian
RBF kernel; the embedder is pluggable and defaults to a low-frequency DCT
signature that is invariant to global positive pixel scaling.
"""

from __future__ import annotations

import numpy as np

from . import transforms
from .imaging import Image, bilinear_resize, to_gray
from .watermark_core import WatermarkBits

__all__ = [
    "bit_accuracy",
    "psnr",
    "ssim",
    "default_embedder",
    "flatten_embedder",
    "median_bandwidth",
    "mmd_distortion",
]


def bit_accuracy(a: WatermarkBits, b: WatermarkBits) -> float:
    if len(a) != len(b):
        raise ValueError(f"payload lengths differ: {len(a)} vs {len(b)}")
    return float(np.mean(a.bits == b.bits))


def psnr(a: Image, b: Image) -> float:
    """Peak signal-to-noise ratio in dB; +inf for identical images."""
    if a.data.shape != b.data.shape:
        raise ValueError("images must share a shape")
    mse = float(np.mean((a.data - b.data) ** 2))
    if mse == 0.0:
        return float("inf")
    return 10.0 * np.log10(1.0 / mse)


def _ssim_plane(x: np.ndarray, y: np.ndarray, window: int = 8) -> float:
    c1 = 0.01 ** 2
    c2 = 0.03 ** 2
    h, w = x.shape
    if h < window or w < window:
        raise ValueError(f"image smaller than the {window}x{window} SSIM window")

    def window_sums(arr):
        cs = np.cumsum(np.cumsum(arr, axis=0), axis=1)
        cs = np.pad(cs, ((1, 0), (1, 0)))
        return (cs[window:, window:] - cs[:-window, window:]
                - cs[window:, :-window] + cs[:-window, :-window])

    n = window * window
    mx = window_sums(x) / n
    my = window_sums(y) / n
    vx = window_sums(x * x) / n - mx * mx
    vy = window_sums(y * y) / n - my * my
    cov = window_sums(x * y) / n - mx * my
    num = (2 * mx * my + c1) * (2 * cov + c2)
    den = (mx * mx + my * my + c1) * (vx + vy + c2)
    return float(np.mean(num / den))


def ssim(a: Image, b: Image) -> float:
    """Mean local SSIM over sliding 8x8 uniform windows, averaged across channels."""
    if a.data.shape != b.data.shape:
        raise ValueError("images must share a shape")
    return float(np.mean([_ssim_plane(pa, pb) for pa, pb in zip(a.data, b.data)]))


# ---------------------------------------------------------------------------
# embeddings

def default_embedder(img: Image) -> np.ndarray:
    """63-dim low-frequency DCT signature, DC dropped, L2-normalized.

    Dropping DC and normalizing makes the vector invariant to global
    positive pixel scaling (pre-clamp), so pure brightness changes do not
    register as semantic distortion.
    """
    gray = bilinear_resize(to_gray(img).plane(0), 32, 32)
    coeffs = transforms.dct2(gray)
    low = coeffs[:8, :8].flatten()[1:]  # drop DC
    norm = np.linalg.norm(low)
    if norm < 1e-12:
        return np.zeros(63)
    return low / norm


def flatten_embedder(img: Image) -> np.ndarray:
    return img.data.ravel().astype(np.float64)


# ---------------------------------------------------------------------------
# maximum mean discrepancy

def median_bandwidth(embeddings: np.ndarray) -> float:
    diffs = embeddings[:, None, :] - embeddings[None, :, :]
    dists = np.sqrt(np.sum(diffs * diffs, axis=-1))
    upper = dists[np.triu_indices(len(embeddings), k=1)]
    positive = upper[upper > 0]
    if positive.size == 0:
        return 1.0
    return float(np.median(positive))


def _rbf(x: np.ndarray, y: np.ndarray, bw: float) -> np.ndarray:
    d2 = np.sum(x * x, axis=1)[:, None] + np.sum(y * y, axis=1)[None, :] - 2.0 * (x @ y.T)
    return np.exp(-np.maximum(d2, 0.0) / (2.0 * bw * bw))


def mmd_distortion(set_a, set_b, embedder=default_embedder, bandwidth: float | None = None) -> float:
    """Unbiased squared MMD; may be slightly negative and is reported as-is.

    For equal sample sizes this is the paired h-statistic (matched-index
    cross pairs excluded), which is exactly zero when the two lists are
    identical; for unequal sizes the full cross term is used.
    """
    if len(set_a) < 2 or len(set_b) < 2:
        raise ValueError("each set needs at least 2 images")
    xa = np.stack([embedder(img) for img in set_a])
    xb = np.stack([embedder(img) for img in set_b])
    if bandwidth is None:
        bandwidth = median_bandwidth(np.concatenate([xa, xb]))
    m, n = len(xa), len(xb)
    kaa = _rbf(xa, xa, bandwidth)
    kbb = _rbf(xb, xb, bandwidth)
    kab = _rbf(xa, xb, bandwidth)
    term_a = (kaa.sum() - np.trace(kaa)) / (m * (m - 1))
    term_b = (kbb.sum() - np.trace(kbb)) / (n * (n - 1))
    if m == n:
        cross = (kab.sum() - np.trace(kab)) / (m * (m - 1))
    else:
        cross = kab.mean()
    return float(term_a + term_b - 2.0 * cross)
