"""Cipher-randomized latent watermarking.

The payload is replicated across every latent position, encrypted with a
ChaCha20 keystream (IETF variant: 256-bit key, 96-bit nonce, 32-bit block
counter), mapped to a +/-1 tensor W', and added to a fresh standard-normal
latent as z' = z + sigma * W'.  Detection inverts the transport, centers
the recovered latent (absorbing any affine pixel-domain corruption such as
a brightness change), takes elementwise signs, decrypts, and majority-votes
each payload bit across its replicas; the statistic is the bit accuracy.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .imaging import Image, rng
from .transport import LATENT_CHANNELS, LATENT_SIDE, IdentityTransport, Latent, sample_latent
from .watermark_core import (
    SchemeError,
    WatermarkBits,
    WatermarkKey,
    pack_bits,
    register_scheme,
    unpack_bits,
)

__all__ = [
    "ShadingParams",
    "chacha20_block",
    "chacha20_keystream",
    "gs_randomize",
    "gs_decrypt",
    "gs_embed",
    "gs_detect",
    "decode_shading_key",
]

LATENT_SIZE = LATENT_CHANNELS * LATENT_SIDE * LATENT_SIDE


@dataclass(frozen=True)
class ShadingParams:
    sigma: float = 1.0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")


# ---------------------------------------------------------------------------
# ChaCha20 (RFC 8439 construction)

_CONSTANTS = (0x61707865, 0x3320646E, 0x79622D32, 0x6B206574)
_MASK = 0xFFFFFFFF


def _quarter(state, a, b, c, d):
    state[a] = (state[a] + state[b]) & _MASK
    state[d] = ((state[d] ^ state[a]) << 16 | (state[d] ^ state[a]) >> 16) & _MASK
    state[c] = (state[c] + state[d]) & _MASK
    state[b] = ((state[b] ^ state[c]) << 12 | (state[b] ^ state[c]) >> 20) & _MASK
    state[a] = (state[a] + state[b]) & _MASK
    state[d] = ((state[d] ^ state[a]) << 8 | (state[d] ^ state[a]) >> 24) & _MASK
    state[c] = (state[c] + state[d]) & _MASK
    state[b] = ((state[b] ^ state[c]) << 7 | (state[b] ^ state[c]) >> 25) & _MASK


def chacha20_block(key: bytes, nonce: bytes, counter: int) -> bytes:
    """One 64-byte keystream block."""
    if len(key) != 32:
        raise ValueError("ChaCha20 key must be 32 bytes")
    if len(nonce) != 12:
        raise ValueError("ChaCha20 nonce must be 12 bytes")
    if not (0 <= counter < 2 ** 32):
        raise ValueError("block counter must fit in 32 bits")
    init = list(_CONSTANTS) + list(struct.unpack("<8I", key)) + [counter] + list(struct.unpack("<3I", nonce))
    state = init.copy()
    for _ in range(10):
        _quarter(state, 0, 4, 8, 12)
        _quarter(state, 1, 5, 9, 13)
        _quarter(state, 2, 6, 10, 14)
        _quarter(state, 3, 7, 11, 15)
        _quarter(state, 0, 5, 10, 15)
        _quarter(state, 1, 6, 11, 12)
        _quarter(state, 2, 7, 8, 13)
        _quarter(state, 3, 4, 9, 14)
    return struct.pack("<16I", *((s + i) & _MASK for s, i in zip(state, init)))


def chacha20_keystream(key: bytes, nonce: bytes, counter: int, length: int) -> bytes:
    out = bytearray()
    block = counter
    while len(out) < length:
        out.extend(chacha20_block(key, nonce, block))
        block += 1
    return bytes(out[:length])


# ---------------------------------------------------------------------------
# key container: 32B cipher key | 12B nonce | packed payload bits

def _encode_payload(cipher_key: bytes, nonce: bytes, payload: WatermarkBits) -> bytes:
    return cipher_key + nonce + pack_bits(payload)


def decode_shading_key(key: WatermarkKey) -> tuple[bytes, bytes, WatermarkBits]:
    if key.scheme_id != "gaussianshading":
        raise SchemeError(f"expected a gaussianshading key, got {key.scheme_id}")
    blob = key.payload
    if len(blob) < 44 + 4:
        raise SchemeError("shading key payload truncated")
    cipher_key, nonce = blob[:32], blob[32:44]
    payload, _ = unpack_bits(blob[44:])
    return cipher_key, nonce, payload


def shading_key_generate(seed: int, payload_len: int = 64) -> WatermarkKey:
    if not (1 <= payload_len <= LATENT_SIZE):
        raise SchemeError(f"payload length must be in [1, {LATENT_SIZE}]")
    g = rng(seed)
    cipher_key = g.bytes(32)
    nonce = g.bytes(12)
    payload = WatermarkBits.random(payload_len, seed ^ 0xA5A5A5A5)
    return WatermarkKey(scheme_id="gaussianshading", seed=seed,
                        payload=_encode_payload(cipher_key, nonce, payload))


# ---------------------------------------------------------------------------
# randomize / decrypt

def _keystream_bits(cipher_key: bytes, nonce: bytes, n: int) -> np.ndarray:
    stream = chacha20_keystream(cipher_key, nonce, 0, (n + 7) // 8)
    return np.unpackbits(np.frombuffer(stream, dtype=np.uint8))[:n]


def _position_bits(payload: WatermarkBits) -> tuple[np.ndarray, int]:
    """Plaintext bit per latent position: bit i sits at positions p = i mod L.

    Replication r = floor(N / L); positions at and beyond L*r are leftover
    and carry keystream alone.
    """
    length = len(payload)
    replication = LATENT_SIZE // length
    if replication < 1:
        raise SchemeError("payload longer than the latent capacity")
    covered = length * replication
    plain = np.zeros(LATENT_SIZE, dtype=np.uint8)
    plain[:covered] = np.tile(payload.bits, replication)
    return plain, covered


def gs_randomize(payload: WatermarkBits, cipher_key: bytes, nonce: bytes) -> np.ndarray:
    """Encrypted +/-1 watermark tensor W' shaped like a latent."""
    plain, _ = _position_bits(payload)
    encrypted = plain ^ _keystream_bits(cipher_key, nonce, LATENT_SIZE)
    w = encrypted.astype(np.float64) * 2.0 - 1.0
    return w.reshape(LATENT_CHANNELS, LATENT_SIDE, LATENT_SIDE)


def gs_decrypt(signs: np.ndarray, payload_len: int, cipher_key: bytes, nonce: bytes) -> WatermarkBits:
    """Invert gs_randomize: sign tensor -> majority-voted payload bits."""
    bits = (signs.ravel() >= 0).astype(np.uint8)
    decrypted = bits ^ _keystream_bits(cipher_key, nonce, LATENT_SIZE)
    replication = LATENT_SIZE // payload_len
    covered = payload_len * replication
    votes = decrypted[:covered].reshape(replication, payload_len)
    # majority with ties resolved to 1
    return WatermarkBits((votes.sum(axis=0) * 2 >= replication).astype(np.uint8))


# ---------------------------------------------------------------------------
# embed / detect

def gs_embed(key: WatermarkKey, params: ShadingParams, seed: int,
             transport=None) -> tuple[Latent, Image]:
    transport = transport or IdentityTransport()
    cipher_key, nonce, payload = decode_shading_key(key)
    z = sample_latent(seed)
    w_prime = gs_randomize(payload, cipher_key, nonce)
    z_prime = Latent(z.data + params.sigma * w_prime)
    return z_prime, transport.generate(z_prime)


def gs_detect(key: WatermarkKey, img: Image, params: ShadingParams | None = None,
              transport=None) -> float:
    transport = transport or IdentityTransport()
    cipher_key, nonce, payload = decode_shading_key(key)
    recovered = transport.invert(img).data
    centered = recovered - np.mean(recovered)
    decoded = gs_decrypt(np.sign(centered), len(payload), cipher_key, nonce)
    return float(np.mean(decoded.bits == payload.bits))


# ---------------------------------------------------------------------------
# registry glue

def _keygen(seed: int, payload_len: int = 64, **_):
    return shading_key_generate(seed, payload_len)


def _embed(key: WatermarkKey, img: Image, transport=None, sigma: float = 1.0,
           latent_seed=None, **_):
    from .imaging import derive_seed

    if latent_seed is None:
        latent_seed = derive_seed("gaussianshading-latent", key.seed, img.data.tobytes())
    _, out = gs_embed(key, ShadingParams(sigma=sigma), latent_seed, transport)
    return out


def _detect(key: WatermarkKey, img: Image, transport=None, sigma: float = 1.0, **_):
    return gs_detect(key, img, ShadingParams(sigma=sigma), transport)


register_scheme("gaussianshading", keygen=_keygen, embed=_embed, detect=_detect)
