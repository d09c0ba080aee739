"""Latent <-> image transports for the latent-space watermarking schemes.

A Latent is a 4x64x64 float tensor, nominally standard normal.  Transports
move it into pixel space and back:

* IdentityTransport tiles the four channels into one 128x128 grayscale
  plane through the affine map pixel = value/32 + 0.25.  The [0, 0.5]
  pixel range keeps a 2x brightness attack clamp-free, and the roundtrip
  is exact to float64 rounding (<= 2e-15 per element for |value| < 8).
* ToyTransport applies a fixed seeded orthonormal map (per-axis Kronecker
  factors) before the same tiling, emulating a latent/pixel indirection
  with an exact inverse.
* ExternalTransport forwards to a remote generation service; it makes no
  exactness claim and inversion is not expressible over the wire protocol,
  so invert raises TransportError rather than fabricating a negative.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imaging import Image, rng

__all__ = [
    "LATENT_CHANNELS",
    "LATENT_SIDE",
    "Latent",
    "TransportError",
    "IdentityTransport",
    "ToyTransport",
    "ExternalTransport",
    "sample_latent",
    "get_transport",
]

LATENT_CHANNELS = 4
LATENT_SIDE = 64
_SCALE = 32.0
_OFFSET = 0.25


class TransportError(RuntimeError):
    """Transport failure; must never be confused with a negative detection."""


@dataclass(frozen=True)
class Latent:
    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.shape != (LATENT_CHANNELS, LATENT_SIDE, LATENT_SIDE):
            raise ValueError(f"latent must be {LATENT_CHANNELS}x{LATENT_SIDE}x{LATENT_SIDE}, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("latent values must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)


def sample_latent(seed: int) -> Latent:
    return Latent(rng(seed).standard_normal((LATENT_CHANNELS, LATENT_SIDE, LATENT_SIDE)))


def _tile(data: np.ndarray) -> np.ndarray:
    s = LATENT_SIDE
    plane = np.empty((2 * s, 2 * s), dtype=np.float64)
    plane[:s, :s] = data[0]
    plane[:s, s:] = data[1]
    plane[s:, :s] = data[2]
    plane[s:, s:] = data[3]
    return plane


def _untile(plane: np.ndarray) -> np.ndarray:
    s = LATENT_SIDE
    return np.stack([plane[:s, :s], plane[:s, s:], plane[s:, :s], plane[s:, s:]])


def _plane_to_image(plane: np.ndarray) -> Image:
    return Image((plane / _SCALE + _OFFSET)[None])


def _image_to_plane(img: Image) -> np.ndarray:
    if img.channels != 1 or img.height != 2 * LATENT_SIDE or img.width != 2 * LATENT_SIDE:
        raise TransportError(
            f"expected a 1x{2 * LATENT_SIDE}x{2 * LATENT_SIDE} latent image, got "
            f"{img.channels}x{img.height}x{img.width}"
        )
    return (img.plane(0) - _OFFSET) * _SCALE


class IdentityTransport:
    name = "identity"

    def generate(self, z: Latent) -> Image:
        return _plane_to_image(_tile(z.data))

    def invert(self, img: Image) -> Latent:
        return Latent(_untile(_image_to_plane(img)))


class ToyTransport:
    """Seeded orthonormal mixing across channels, rows, and columns."""

    name = "toy"

    def __init__(self, seed: int = 7):
        g = rng(seed)
        self._qc = self._orthonormal(g, LATENT_CHANNELS)
        self._qr = self._orthonormal(g, LATENT_SIDE)
        self._qk = self._orthonormal(g, LATENT_SIDE)

    @staticmethod
    def _orthonormal(g: np.random.Generator, n: int) -> np.ndarray:
        q, r = np.linalg.qr(g.standard_normal((n, n)))
        return q * np.sign(np.diag(r))

    def _mix(self, data: np.ndarray, inverse: bool) -> np.ndarray:
        qc, qr, qk = self._qc, self._qr, self._qk
        if inverse:
            qc, qr, qk = qc.T, qr.T, qk.T
        out = np.einsum("ab,bij->aij", qc, data)
        out = np.einsum("ri,aij->arj", qr, out)
        return np.einsum("cj,arj->arc", qk, out)

    def generate(self, z: Latent) -> Image:
        return _plane_to_image(_tile(self._mix(z.data, inverse=False)))

    def invert(self, img: Image) -> Latent:
        return Latent(self._mix(_untile(_image_to_plane(img)), inverse=True))


class ExternalTransport:
    """Best-effort remote path through the paraphrase service."""

    name = "external"

    def __init__(self, base_url: str, timeout: float = 120.0):
        self.base_url = base_url
        self.timeout = timeout

    def generate(self, z: Latent) -> Image:
        from .attacks import ParaphraseClient  # local import to avoid a cycle

        client = ParaphraseClient(self.base_url, timeout=self.timeout)
        seed = int(abs(float(np.sum(z.data * 1e6)))) % (2 ** 32)
        out, _caption = client.paraphrase(_plane_to_image(_tile(z.data)), strength=1.0,
                                          guidance_scale=7.5, seed=seed)
        return out

    def invert(self, img: Image) -> Latent:
        raise TransportError(
            "the paraphrase wire protocol has no latent-inversion endpoint; "
            "use the identity or toy transport for detection"
        )


def get_transport(name: str, base_url: str | None = None):
    if name == "identity":
        return IdentityTransport()
    if name == "toy":
        return ToyTransport()
    if name == "external":
        if not base_url:
            raise TransportError("external transport requires a service URL")
        return ExternalTransport(base_url)
    raise ValueError(f"unknown transport {name!r}")
