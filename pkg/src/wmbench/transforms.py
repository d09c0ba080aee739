"""Numerical kernels shared by the watermarking schemes.

Single-level orthonormal Haar DWT, orthonormal type-II block DCT, SVD,
power-of-two 2-D FFT, and Fourier-domain ring masks.  Every pair is an
exact inverse to float precision; the forward FFT is unnormalized and the
inverse carries the 1/N factor.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "Subbands",
    "ComplexGrid",
    "RingMask",
    "dwt2",
    "idwt2",
    "dct2_block",
    "idct2_block",
    "dct2",
    "idct2",
    "svd",
    "fft2",
    "ifft2",
    "fftshift",
    "ifftshift",
    "make_ring_mask",
]


@dataclass(frozen=True)
class Subbands:
    """Half-resolution Haar subbands: approximation plus three details."""

    ll: np.ndarray
    lh: np.ndarray
    hl: np.ndarray
    hh: np.ndarray


@dataclass(frozen=True)
class ComplexGrid:
    """Complex spectrum wrapper exposing real/imag planes."""

    values: np.ndarray

    @property
    def real(self) -> np.ndarray:
        return self.values.real

    @property
    def imag(self) -> np.ndarray:
        return self.values.imag


@dataclass(frozen=True)
class RingMask:
    size: int
    inner_radius: float
    outer_radius: float
    mask: np.ndarray  # boolean, centered (DC at size//2, size//2)


def dwt2(grid: np.ndarray) -> Subbands:
    """Orthonormal single-level Haar analysis; requires even sides."""
    h, w = grid.shape
    if h % 2 or w % 2:
        raise ValueError(f"Haar DWT needs even dimensions, got {h}x{w}")
    a = grid[0::2, 0::2]
    b = grid[0::2, 1::2]
    c = grid[1::2, 0::2]
    d = grid[1::2, 1::2]
    return Subbands(
        ll=(a + b + c + d) / 2.0,
        lh=(a + b - c - d) / 2.0,
        hl=(a - b + c - d) / 2.0,
        hh=(a - b - c + d) / 2.0,
    )


def idwt2(sb: Subbands) -> np.ndarray:
    ll, lh, hl, hh = sb.ll, sb.lh, sb.hl, sb.hh
    h2, w2 = ll.shape
    out = np.empty((h2 * 2, w2 * 2), dtype=np.float64)
    out[0::2, 0::2] = (ll + lh + hl + hh) / 2.0
    out[0::2, 1::2] = (ll + lh - hl - hh) / 2.0
    out[1::2, 0::2] = (ll - lh + hl - hh) / 2.0
    out[1::2, 1::2] = (ll - lh - hl + hh) / 2.0
    return out


@lru_cache(maxsize=8)
def _dct_matrix(n: int) -> np.ndarray:
    k = np.arange(n)[:, None]
    m = np.arange(n)[None, :]
    mat = np.cos(np.pi * (2 * m + 1) * k / (2 * n))
    mat[0] *= np.sqrt(1.0 / n)
    mat[1:] *= np.sqrt(2.0 / n)
    return mat


def dct2(block: np.ndarray) -> np.ndarray:
    """Orthonormal 2-D DCT-II of a square block."""
    n = block.shape[0]
    if block.shape != (n, n):
        raise ValueError(f"square block required, got {block.shape}")
    d = _dct_matrix(n)
    return d @ block @ d.T


def idct2(coeffs: np.ndarray) -> np.ndarray:
    n = coeffs.shape[0]
    if coeffs.shape != (n, n):
        raise ValueError(f"square block required, got {coeffs.shape}")
    d = _dct_matrix(n)
    return d.T @ coeffs @ d


def dct2_block(block: np.ndarray) -> np.ndarray:
    if block.shape != (8, 8):
        raise ValueError(f"expected an 8x8 block, got {block.shape}")
    return dct2(block)


def idct2_block(coeffs: np.ndarray) -> np.ndarray:
    if coeffs.shape != (8, 8):
        raise ValueError(f"expected 8x8 coefficients, got {coeffs.shape}")
    return idct2(coeffs)


def svd(matrix: np.ndarray):
    """Full SVD with non-increasing, non-negative singular values."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if not np.all(np.isfinite(matrix)):
        raise ValueError("SVD input must be finite")
    u, s, vt = np.linalg.svd(matrix, full_matrices=False)
    return u, s, vt.T


def _check_pow2(grid: np.ndarray) -> None:
    h, w = grid.shape
    if h & (h - 1) or w & (w - 1) or h == 0 or w == 0:
        raise ValueError(f"FFT grid sides must be powers of two, got {h}x{w}")


def fft2(grid: np.ndarray) -> ComplexGrid:
    _check_pow2(np.asarray(grid))
    return ComplexGrid(np.fft.fft2(np.asarray(grid)))


def ifft2(spectrum: ComplexGrid | np.ndarray) -> np.ndarray:
    values = spectrum.values if isinstance(spectrum, ComplexGrid) else np.asarray(spectrum)
    _check_pow2(values)
    return np.fft.ifft2(values)


def fftshift(values: np.ndarray) -> np.ndarray:
    return np.fft.fftshift(values)


def ifftshift(values: np.ndarray) -> np.ndarray:
    return np.fft.ifftshift(values)


def make_ring_mask(size: int, inner_radius: float, outer_radius: float) -> RingMask:
    """Annulus in centered coordinates: inner <= dist(bin, center) < outer."""
    if not (0 <= inner_radius < outer_radius <= size / 2):
        raise ValueError(
            f"require 0 <= inner < outer <= size/2, got inner={inner_radius} outer={outer_radius} size={size}"
        )
    yy, xx = np.mgrid[0:size, 0:size]
    center = size // 2
    dist = np.hypot(yy - center, xx - center)
    mask = (dist >= inner_radius) & (dist < outer_radius)
    return RingMask(size=size, inner_radius=inner_radius, outer_radius=outer_radius, mask=mask)
