"""Fourier-domain initial-latent watermarking with ring/rand/zeros keys.

A key is a set of annuli in the centered spectrum of the last latent
channel plus target values for the covered bins: one real constant per
annulus (ring), Hermitian-symmetrized complex Gaussian samples (rand), or
zeros (a disc).  Embedding overwrites the masked bins; detection inverts
the transport, returns to the Fourier domain, and scores the negated mean
L1 distance between the masked bins and the best positive-scale fit of the
key (higher statistic = more watermark evidence; the scale fit makes the
statistic invariant to valumetric attacks such as brightness scaling).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import metrics, transforms
from .imaging import Image, rng
from .transport import LATENT_SIDE, IdentityTransport, Latent, sample_latent
from .watermark_core import SchemeError, WatermarkKey, register_scheme

__all__ = [
    "RingKey",
    "ring_key_generate",
    "decode_ring_key",
    "tr_embed_latent",
    "tr_statistic",
    "tr_detect",
    "adaptive_mix",
    "DEFAULT_RING_BOUNDARIES",
    "FOURIER_STD",
]

PATTERNS = ("ring", "rand", "zeros")
_PATTERN_CODES = {"ring": 0, "rand": 1, "zeros": 2}
_CODE_PATTERNS = {v: k for k, v in _PATTERN_CODES.items()}

# three annuli between radii 4 and 14; zeros uses a single disc
DEFAULT_RING_BOUNDARIES = tuple(np.linspace(4.0, 14.0, 4))
DEFAULT_ZEROS_BOUNDARIES = (0.0, 14.0)
TARGET_CHANNEL = 3

# per-component spread of FFT bins of a unit-normal 64x64 field, so key
# values blend with the surrounding spectrum
FOURIER_STD = LATENT_SIDE / np.sqrt(2.0)

# statistic assigned when the inverted spectrum is degenerate (for example a
# constant image): far below every calibrated threshold
NO_EVIDENCE = -2.0


@dataclass(frozen=True)
class RingKey:
    pattern: str
    boundaries: tuple[float, ...]
    target_channel: int
    seed: int
    mask: np.ndarray        # boolean, uncentered bin indexing
    target: np.ndarray      # complex spectrum values, uncentered, Hermitian on mask

    @property
    def ring_count(self) -> int:
        return len(self.boundaries) - 1


def _hermitian_partner_grid(n: int):
    idx = np.arange(n)
    return np.meshgrid((-idx) % n, (-idx) % n, indexing="ij")


def _build_target(pattern: str, boundaries, seed: int) -> tuple[np.ndarray, np.ndarray]:
    n = LATENT_SIDE
    annuli = [
        transforms.make_ring_mask(n, boundaries[i], boundaries[i + 1]).mask
        for i in range(len(boundaries) - 1)
    ]
    mask_centered = np.any(annuli, axis=0)
    target_centered = np.zeros((n, n), dtype=np.complex128)
    g = rng(seed)
    if pattern == "ring":
        # real constants keep the masked spectrum Hermitian (annuli are
        # symmetric under bin negation), so the inverse FFT stays real
        for ann in annuli:
            target_centered[ann] = g.normal(0.0, FOURIER_STD)
    elif pattern == "rand":
        field = g.normal(0.0, FOURIER_STD, (n, n)) + 1j * g.normal(0.0, FOURIER_STD, (n, n))
        uncentered = transforms.ifftshift(field)
        pu, pv = _hermitian_partner_grid(n)
        sym = (uncentered + np.conj(uncentered[pu, pv])) / np.sqrt(2.0)
        target_centered = transforms.fftshift(sym)
        target_centered[~mask_centered] = 0.0
    elif pattern != "zeros":
        raise SchemeError(f"unknown ring pattern {pattern!r}")
    return transforms.ifftshift(mask_centered), transforms.ifftshift(target_centered)


def make_ring_key(seed: int, pattern: str = "ring", boundaries=None,
                  target_channel: int = TARGET_CHANNEL) -> RingKey:
    if pattern not in PATTERNS:
        raise SchemeError(f"pattern must be one of {PATTERNS}, got {pattern!r}")
    if boundaries is None:
        boundaries = DEFAULT_ZEROS_BOUNDARIES if pattern == "zeros" else DEFAULT_RING_BOUNDARIES
    boundaries = tuple(float(b) for b in boundaries)
    if len(boundaries) < 2 or any(b1 <= b0 for b0, b1 in zip(boundaries, boundaries[1:])):
        raise SchemeError(f"boundaries must be strictly increasing radii, got {boundaries}")
    mask, target = _build_target(pattern, boundaries, seed)
    return RingKey(pattern=pattern, boundaries=boundaries, target_channel=target_channel,
                   seed=seed, mask=mask, target=target)


# ---------------------------------------------------------------------------
# container payload: pattern u8 | channel u8 | boundary count u8 | f64 LE each

def ring_key_generate(seed: int, pattern: str = "ring", radii=None,
                      target_channel: int = TARGET_CHANNEL) -> WatermarkKey:
    rk = make_ring_key(seed, pattern, radii, target_channel)
    payload = struct.pack(
        "<BBB", _PATTERN_CODES[rk.pattern], rk.target_channel, len(rk.boundaries)
    ) + b"".join(struct.pack("<d", b) for b in rk.boundaries)
    return WatermarkKey(scheme_id="treering", seed=seed, payload=payload)


def decode_ring_key(key: WatermarkKey) -> RingKey:
    if key.scheme_id != "treering":
        raise SchemeError(f"expected a treering key, got {key.scheme_id}")
    blob = key.payload
    if len(blob) < 3:
        raise SchemeError("ring key payload truncated")
    code, channel, nb = struct.unpack("<BBB", blob[:3])
    if code not in _CODE_PATTERNS or len(blob) != 3 + 8 * nb:
        raise SchemeError("malformed ring key payload")
    boundaries = struct.unpack(f"<{nb}d", blob[3:])
    return make_ring_key(key.seed, _CODE_PATTERNS[code], boundaries, channel)


# ---------------------------------------------------------------------------
# embed / detect

def tr_embed_latent(rk: RingKey, z: Latent) -> Latent:
    """Overwrite masked spectrum bins of the target channel with key values."""
    data = np.array(z.data)
    spectrum = transforms.fft2(data[rk.target_channel]).values
    spectrum[rk.mask] = rk.target[rk.mask]
    channel = transforms.ifft2(spectrum)
    data[rk.target_channel] = channel.real
    return Latent(data)


def _weighted_median(values: np.ndarray, weights: np.ndarray) -> float:
    order = np.argsort(values, kind="stable")
    v, w = values[order], weights[order]
    cum = np.cumsum(w)
    return float(v[np.searchsorted(cum, 0.5 * cum[-1])])


def fit_scale(observed: np.ndarray, target: np.ndarray) -> float:
    """argmin_a sum |obs - a*target|_1 over real+imag components (weighted median)."""
    comps_o = np.concatenate([observed.real, observed.imag])
    comps_t = np.concatenate([target.real, target.imag])
    weights = np.abs(comps_t)
    usable = weights > 1e-12
    if not np.any(usable):
        return 1.0
    return _weighted_median(comps_o[usable] / comps_t[usable], weights[usable])


def tr_statistic(rk: RingKey, latent: Latent) -> float:
    """Negated mean L1 between the masked spectrum and the key, both brought
    to unit scale first.

    Normalizing observation and key to unit mean component magnitude (and
    still fitting a residual scale) makes the score a pure pattern match:
    a valumetric attack cancels out, while an image whose spectrum merely
    collapsed scores like any unwatermarked input instead of masquerading
    as a scaled match near a = 0.  The zeros pattern has no key energy, so
    its score is the masked energy relative to the unmasked spectrum.
    """
    spectrum = transforms.fft2(latent.data[rk.target_channel]).values
    # the DC bin tracks global intensity, not key evidence: a constant
    # pixel offset lands entirely there, so it is left out of the score
    mask = rk.mask.copy()
    mask[0, 0] = False
    observed = spectrum[mask]
    target = rk.target[mask]
    key_scale = np.mean(np.abs(target.real) + np.abs(target.imag))
    if key_scale < 1e-12:  # zeros pattern
        outside = spectrum[~mask]
        norm = np.mean(np.abs(outside.real) + np.abs(outside.imag))
        if norm < 1e-9:
            return NO_EVIDENCE  # degenerate (near-constant) channel
        return float(-np.mean(np.abs(observed.real) + np.abs(observed.imag)) / norm)
    obs_scale = np.mean(np.abs(observed.real) + np.abs(observed.imag))
    if obs_scale < 1e-9:
        return NO_EVIDENCE  # no spectral content to match against the key
    obs_unit = observed / obs_scale
    key_unit = target / key_scale
    a = fit_scale(obs_unit, key_unit)
    l1 = np.abs(obs_unit.real - a * key_unit.real) + np.abs(obs_unit.imag - a * key_unit.imag)
    return float(-np.mean(l1))


def tr_detect(rk: RingKey, img: Image, transport=None) -> float:
    transport = transport or IdentityTransport()
    return tr_statistic(rk, transport.invert(img))


# ---------------------------------------------------------------------------
# ZoDiac-style adaptive quality mix

def adaptive_mix(watermarked: Image, original: Image, quality_floor: float,
                 step: float = 0.05) -> tuple[Image, float]:
    """Smallest gamma on {0, step, 2*step, ..., 1} whose blend meets the SSIM floor."""
    if watermarked.data.shape != original.data.shape:
        raise ValueError("images must share a shape")
    if not (0.0 < quality_floor < 1.0):
        raise ValueError("quality floor must lie strictly inside (0, 1)")
    if not (0.0 < step <= 1.0):
        raise ValueError("step must lie in (0, 1]")
    n_steps = int(np.ceil(1.0 / step))
    for k in range(n_steps + 1):
        gamma = min(k * step, 1.0)
        mixed = Image(watermarked.data + gamma * (original.data - watermarked.data))
        if metrics.ssim(mixed, original) >= quality_floor:
            return mixed, gamma
    return Image(original.data), 1.0  # unreachable: ssim(original, original) = 1


# ---------------------------------------------------------------------------
# registry glue

def _keygen(seed: int, pattern: str = "ring", radii=None,
            target_channel: int = TARGET_CHANNEL, **_):
    return ring_key_generate(seed, pattern, radii, target_channel)


def _embed(key: WatermarkKey, img: Image, transport=None, latent_seed=None, **_):
    # generation-time scheme: the input image seeds the latent draw, its
    # pixels are not carried through
    from .imaging import derive_seed

    rk = decode_ring_key(key)
    transport = transport or IdentityTransport()
    if latent_seed is None:
        latent_seed = derive_seed("treering-latent", key.seed, img.data.tobytes())
    z = sample_latent(latent_seed)
    return transport.generate(tr_embed_latent(rk, z))


def _detect(key: WatermarkKey, img: Image, transport=None, **_):
    return tr_detect(decode_ring_key(key), img, transport)


register_scheme("treering", keygen=_keygen, embed=_embed, detect=_detect)
