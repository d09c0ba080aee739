"""Scheme-independent watermarking contracts.

Every scheme implements embed(key, image) -> image and
detect(key, image) -> DetectionOutcome, with the detection statistic
normalized so that higher always means more watermark evidence.  Keys
serialize to a small binary container:

    magic "WMK1" | version u8 = 1 | scheme_id u8 | seed u64 LE |
    payload length u32 LE | payload bytes

Payload layout is scheme-private; the container roundtrip is byte-exact.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .imaging import Image, rng

__all__ = [
    "SCHEME_IDS",
    "WatermarkBits",
    "WatermarkKey",
    "DetectionOutcome",
    "KeyFormatError",
    "SchemeError",
    "pack_bits",
    "unpack_bits",
    "key_save",
    "key_load",
    "generate_key",
    "scheme_embed",
    "scheme_detect",
]

MAGIC = b"WMK1"
VERSION = 1

SCHEME_IDS = {"dwtdctsvd": 1, "treering": 2, "gaussianshading": 3}
_SCHEME_NAMES = {v: k for k, v in SCHEME_IDS.items()}

DEFAULT_PAYLOAD_BITS = 64


class KeyFormatError(ValueError):
    """Key file container violations: bad magic, version, or truncation."""


class SchemeError(ValueError):
    """Key/scheme mismatch or unusable scheme input."""


@dataclass(frozen=True)
class WatermarkBits:
    """Ordered 0/1 payload; default capacity is 64 bits."""

    bits: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.bits, dtype=np.uint8)
        if arr.ndim != 1 or arr.size < 1:
            raise ValueError("payload must be a non-empty 1-D bit sequence")
        if not np.all((arr == 0) | (arr == 1)):
            raise ValueError("payload entries must be 0 or 1")
        arr.setflags(write=False)
        object.__setattr__(self, "bits", arr)

    def __len__(self) -> int:
        return int(self.bits.size)

    @staticmethod
    def random(length: int, seed: int) -> "WatermarkBits":
        return WatermarkBits(rng(seed).integers(0, 2, size=length, dtype=np.uint8))


def pack_bits(bits: WatermarkBits) -> bytes:
    """MSB-first packed bytes behind an explicit u32 bit-length header."""
    arr = bits.bits
    padded = np.zeros((-len(arr)) % 8 + len(arr), dtype=np.uint8)
    padded[: len(arr)] = arr
    packed = np.packbits(padded)
    return struct.pack("<I", len(arr)) + packed.tobytes()


def unpack_bits(blob: bytes) -> tuple[WatermarkBits, int]:
    """Inverse of pack_bits; returns the payload and bytes consumed."""
    if len(blob) < 4:
        raise KeyFormatError("bit payload truncated before length header")
    (nbits,) = struct.unpack("<I", blob[:4])
    nbytes = (nbits + 7) // 8
    if len(blob) < 4 + nbytes:
        raise KeyFormatError("bit payload truncated")
    bits = np.unpackbits(np.frombuffer(blob[4:4 + nbytes], dtype=np.uint8))[:nbits]
    return WatermarkBits(bits), 4 + nbytes


@dataclass(frozen=True)
class WatermarkKey:
    scheme_id: str
    seed: int
    payload: bytes

    def __post_init__(self):
        if self.scheme_id not in SCHEME_IDS:
            raise SchemeError(f"unknown scheme {self.scheme_id!r}")
        if not (0 <= self.seed < 2 ** 64):
            raise ValueError("seed must fit in 64 bits")


@dataclass(frozen=True)
class DetectionOutcome:
    statistic: float
    threshold: float

    @property
    def detected(self) -> bool:
        return self.statistic >= self.threshold


# ---------------------------------------------------------------------------
# key container I/O

def key_to_bytes(key: WatermarkKey) -> bytes:
    return (
        MAGIC
        + struct.pack("<BBQ", VERSION, SCHEME_IDS[key.scheme_id], key.seed)
        + struct.pack("<I", len(key.payload))
        + key.payload
    )


def key_from_bytes(blob: bytes) -> WatermarkKey:
    if len(blob) < 4 or blob[:4] != MAGIC:
        raise KeyFormatError("bad magic: not a watermark key file")
    if len(blob) < 18:
        raise KeyFormatError("key file truncated before header end")
    version, scheme_code, seed = struct.unpack("<BBQ", blob[4:14])
    if version != VERSION:
        raise KeyFormatError(f"unsupported key version {version}")
    if scheme_code not in _SCHEME_NAMES:
        raise KeyFormatError(f"unknown scheme code {scheme_code}")
    (plen,) = struct.unpack("<I", blob[14:18])
    payload = blob[18:18 + plen]
    if len(payload) != plen:
        raise KeyFormatError("key payload truncated")
    return WatermarkKey(scheme_id=_SCHEME_NAMES[scheme_code], seed=seed, payload=payload)


def key_save(key: WatermarkKey, path) -> None:
    Path(path).write_bytes(key_to_bytes(key))


def key_load(path) -> WatermarkKey:
    return key_from_bytes(Path(path).read_bytes())


# ---------------------------------------------------------------------------
# scheme registry; scheme modules register themselves on import

_REGISTRY: dict[str, dict] = {}


def register_scheme(scheme_id: str, *, keygen, embed, detect) -> None:
    _REGISTRY[scheme_id] = {"keygen": keygen, "embed": embed, "detect": detect}


def _entry(scheme_id: str) -> dict:
    # importing the package wires all bundled schemes into the registry
    if scheme_id not in _REGISTRY:
        from . import wm_dwtdctsvd, wm_gaussianshading, wm_treering  # noqa: F401
    if scheme_id not in _REGISTRY:
        raise SchemeError(f"no implementation registered for scheme {scheme_id!r}")
    return _REGISTRY[scheme_id]


def generate_key(scheme_id: str, seed: int, **options) -> WatermarkKey:
    return _entry(scheme_id)["keygen"](seed=seed, **options)


def scheme_embed(key: WatermarkKey, img: Image, **options) -> Image:
    return _entry(key.scheme_id)["embed"](key, img, **options)


def scheme_detect(key: WatermarkKey, img: Image, threshold: float, **options) -> DetectionOutcome:
    """Raw statistic from the scheme, decision against the caller's threshold."""
    statistic = _entry(key.scheme_id)["detect"](key, img, **options)
    return DetectionOutcome(statistic=float(statistic), threshold=float(threshold))


def scheme_statistic(key: WatermarkKey, img: Image, **options) -> float:
    return float(_entry(key.scheme_id)["detect"](key, img, **options))
