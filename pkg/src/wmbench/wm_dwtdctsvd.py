"""Static frequency-domain watermark: Haar DWT -> 8x8 DCT -> SVD -> QIM.

Payload bits spread round-robin over the 8x8 blocks of the luma LL
subband.  Each block's top singular value S0 (of its DCT coefficient
matrix) is snapped to an even/odd lattice in the log of its ratio to the
previous watermarked block's S0; the cell parity carries the bit.  Both
choices are load-bearing: referencing the neighboring singular value
makes the lattice exactly invariant under valumetric attacks (a global
brightness scale multiplies every S0 identically), which absolute-width
quantization provably does not survive, and log-domain cells make the
flip probability track the attack's relative damage instead of the
block's magnitude.  Extraction recomputes the chain, reads each block's
cell parity against its predecessor, and majority-votes replicas of the
same bit index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import transforms
from .imaging import Image, rgb_to_yuv, yuv_to_rgb
from .watermark_core import (
    SchemeError,
    WatermarkBits,
    WatermarkKey,
    pack_bits,
    register_scheme,
    unpack_bits,
)

__all__ = [
    "DwtDctSvdParams",
    "dds_keygen",
    "decode_dds_key",
    "dds_embed",
    "dds_extract",
]

MIN_SIDE = 128
BLOCK = 8
_TINY = 1e-9


@dataclass(frozen=True)
class DwtDctSvdParams:
    embed_strength: float = 0.05  # lattice cell width in log(S0 / reference S0)
    ref_floor: float = 0.05      # lower bound on the reference, guards black runs
    first_ref: float = 1.0       # reference for the block with no predecessor
    target_subband: str = "LL"

    def __post_init__(self):
        if self.embed_strength <= 0:
            raise SchemeError("embed_strength must be positive")
        if self.ref_floor <= 0 or self.first_ref <= 0:
            raise SchemeError("reference values must be positive")
        if self.target_subband not in ("LL", "HL", "LH"):
            raise SchemeError(f"target_subband must be LL, HL or LH, got {self.target_subband!r}")


def dds_keygen(seed: int, payload_len: int = 64) -> WatermarkKey:
    if payload_len < 1:
        raise SchemeError("payload length must be at least 1")
    bits = WatermarkBits.random(payload_len, seed)
    return WatermarkKey(scheme_id="dwtdctsvd", seed=seed, payload=pack_bits(bits))


def decode_dds_key(key: WatermarkKey) -> WatermarkBits:
    if key.scheme_id != "dwtdctsvd":
        raise SchemeError(f"expected a dwtdctsvd key, got {key.scheme_id}")
    bits, _ = unpack_bits(key.payload)
    return bits


def _work_region(img: Image) -> tuple[int, int]:
    if img.channels != 3:
        raise SchemeError("luma embedding needs a 3-channel image")
    h = (img.height // 16) * 16
    w = (img.width // 16) * 16
    if h < MIN_SIDE or w < MIN_SIDE:
        raise SchemeError(
            f"image too small: need at least {MIN_SIDE}x{MIN_SIDE}, usable region is {h}x{w}"
        )
    return h, w


def _select_band(img: Image, params: DwtDctSvdParams):
    h, w = _work_region(img)
    yuv = rgb_to_yuv(img)
    sb = transforms.dwt2(yuv.plane(0)[:h, :w])
    band = {"LL": sb.ll, "HL": sb.hl, "LH": sb.lh}[params.target_subband]
    return yuv, sb, band, h, w


def _blocks(band: np.ndarray):
    bh, bw = band.shape[0] // BLOCK, band.shape[1] // BLOCK
    for by in range(bh):
        for bx in range(bw):
            yield (slice(by * BLOCK, (by + 1) * BLOCK), slice(bx * BLOCK, (bx + 1) * BLOCK))


def dds_embed(key: WatermarkKey, img: Image, params: DwtDctSvdParams | None = None) -> Image:
    params = params or DwtDctSvdParams()
    bits = decode_dds_key(key)
    yuv, sb, band, h, w = _select_band(img, params)
    band = band.copy()
    ref = params.first_ref
    for idx, sl in enumerate(_blocks(band)):
        bit = int(bits.bits[idx % len(bits)])
        coeffs = transforms.dct2_block(band[sl])
        u, s, v = transforms.svd(coeffs)
        anchor = max(ref, params.ref_floor)
        pos = np.log(max(s[0], _TINY) / anchor) / params.embed_strength
        k = int(np.floor(pos + 0.5))
        if (k % 2 + 2) % 2 != bit:
            k = k + 1 if (pos - np.floor(pos)) >= 0.5 else k - 1
        s0_new = anchor * np.exp(k * params.embed_strength)
        # keep S0 on top so the reconstruction's SVD preserves the ordering
        s1 = s[1] if s.size > 1 else 0.0
        while s0_new < s1:
            k += 2
            s0_new = anchor * np.exp(k * params.embed_strength)
        s_mod = s.copy()
        s_mod[0] = s0_new
        band[sl] = transforms.idct2_block(u @ np.diag(s_mod) @ v.T)
        ref = s0_new
    bands = {"LL": sb.ll, "HL": sb.hl, "LH": sb.lh, "HH": sb.hh}
    bands[params.target_subband] = band
    planes = np.array(yuv.data)
    y_mod = planes[0].copy()
    y_mod[:h, :w] = transforms.idwt2(
        transforms.Subbands(ll=bands["LL"], lh=bands["LH"], hl=bands["HL"], hh=bands["HH"])
    )
    planes[0] = y_mod
    return yuv_to_rgb(Image(planes))


def dds_extract(key: WatermarkKey, img: Image, params: DwtDctSvdParams | None = None) -> WatermarkBits:
    params = params or DwtDctSvdParams()
    payload_len = len(decode_dds_key(key))
    _, _, band, _, _ = _select_band(img, params)
    votes = np.zeros(payload_len, dtype=np.int64)
    counts = np.zeros(payload_len, dtype=np.int64)
    ref = params.first_ref
    for idx, sl in enumerate(_blocks(band)):
        _, s, _ = transforms.svd(transforms.dct2_block(band[sl]))
        anchor = max(ref, params.ref_floor)
        pos = np.log(max(s[0], _TINY) / anchor) / params.embed_strength
        cell = int(np.floor(pos + 0.5))
        votes[idx % payload_len] += (cell % 2 + 2) % 2
        counts[idx % payload_len] += 1
        ref = s[0]
    if np.any(counts == 0):
        raise SchemeError("not enough blocks to cover the payload")
    return WatermarkBits((votes * 2 >= counts).astype(np.uint8))


# ---------------------------------------------------------------------------
# registry glue

def _embed(key: WatermarkKey, img: Image, params: DwtDctSvdParams | None = None, **_):
    return dds_embed(key, img, params)


def _detect(key: WatermarkKey, img: Image, params: DwtDctSvdParams | None = None, **_):
    extracted = dds_extract(key, img, params)
    reference = decode_dds_key(key)
    return float(np.mean(extracted.bits == reference.bits))


def _keygen(seed: int, payload_len: int = 64, **_):
    return dds_keygen(seed, payload_len)


register_scheme("dwtdctsvd", keygen=_keygen, embed=_embed, detect=_detect)
