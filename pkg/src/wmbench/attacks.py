"""De-watermarking attacks and the paraphrase-service client.

Classical attacks (brightness, rotation, JPEG quantization cycle,
Gaussian noise) run in memory and preserve image dimensions and range.
Metadata stripping rewrites PNG/JPEG containers without touching pixel
data.  The visual paraphrase attack re-noises a fraction s of the
diffusion schedule and reverses it with an analytic guide-pulled
denoiser (surrogate backend), or calls a remote caption+img2img service
(external backend).
"""

from __future__ import annotations

import base64
import json
import struct
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import diffusion, imaging
from .imaging import CorruptImageError, Image, UnsupportedFormatError, gaussian_blur, rng

__all__ = [
    "AttackSpec",
    "AttackServiceError",
    "brightness",
    "rotate",
    "jpeg_compress",
    "gaussian_noise",
    "strip_metadata",
    "StripReport",
    "visual_paraphrase",
    "ParaphraseClient",
    "apply_attack",
]

DEFAULT_STEPS = 50


class AttackServiceError(RuntimeError):
    """External paraphrase service unreachable or responding out of protocol."""


# ---------------------------------------------------------------------------
# classical attacks

def brightness(img: Image, factor: float = 2.0) -> Image:
    if factor <= 0:
        raise ValueError("brightness factor must be positive")
    return Image(np.clip(img.data * factor, 0.0, 1.0))


def rotate(img: Image, angle_degrees: float) -> Image:
    """Rotate about the image center, bilinear, black fill, same dimensions."""
    if angle_degrees % 360 == 0:
        return img
    h, w = img.height, img.width
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    theta = np.deg2rad(angle_degrees)
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    # inverse map: rotate destination coordinates back into the source
    sy = cos_t * (yy - cy) + sin_t * (xx - cx) + cy
    sx = -sin_t * (yy - cy) + cos_t * (xx - cx) + cx
    y0 = np.floor(sy).astype(int)
    x0 = np.floor(sx).astype(int)
    wy = sy - y0
    wx = sx - x0
    out = np.zeros_like(img.data)
    for dy in (0, 1):
        for dx in (0, 1):
            ys = y0 + dy
            xs = x0 + dx
            inside = (ys >= 0) & (ys < h) & (xs >= 0) & (xs < w)
            weight = np.where(dy, wy, 1 - wy) * np.where(dx, wx, 1 - wx)
            ys_c = np.clip(ys, 0, h - 1)
            xs_c = np.clip(xs, 0, w - 1)
            contrib = weight * inside
            for c in range(img.channels):
                out[c] += contrib * img.data[c][ys_c, xs_c]
    return Image(out)


# baseline JPEG quantization tables
_LUMA_TABLE = np.array([
    [16, 11, 10, 16, 24, 40, 51, 61],
    [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56],
    [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77],
    [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101],
    [72, 92, 95, 98, 112, 100, 103, 99],
], dtype=np.float64)

_CHROMA_TABLE = np.array([
    [17, 18, 24, 47, 99, 99, 99, 99],
    [18, 21, 26, 66, 99, 99, 99, 99],
    [24, 26, 56, 99, 99, 99, 99, 99],
    [47, 66, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
], dtype=np.float64)


def scaled_quant_table(base: np.ndarray, quality: int) -> np.ndarray:
    scale = 5000.0 / quality if quality < 50 else 200.0 - 2.0 * quality
    return np.clip(np.floor((base * scale + 50.0) / 100.0), 1.0, 255.0)


def _quantize_plane(plane: np.ndarray, table: np.ndarray) -> np.ndarray:
    from .transforms import dct2_block, idct2_block

    h, w = plane.shape
    ph, pw = -h % 8, -w % 8
    padded = np.pad(plane, ((0, ph), (0, pw)), mode="edge")
    out = np.empty_like(padded)
    scaled = padded * 255.0 - 128.0
    for by in range(0, padded.shape[0], 8):
        for bx in range(0, padded.shape[1], 8):
            block = scaled[by:by + 8, bx:bx + 8]
            coeffs = dct2_block(block)
            q = np.sign(coeffs) * np.floor(np.abs(coeffs) / table + 0.5) * table
            out[by:by + 8, bx:bx + 8] = (idct2_block(q) + 128.0) / 255.0
    return out[:h, :w]


def jpeg_compress(img: Image, quality: int = 50) -> Image:
    """In-memory JPEG quantization cycle (4:4:4, no entropy coding)."""
    if not (1 <= quality <= 100):
        raise ValueError("quality must lie in [1, 100]")
    if img.channels == 1:
        luma_table = scaled_quant_table(_LUMA_TABLE, quality)
        return Image(_quantize_plane(img.plane(0), luma_table)[None])
    yuv = imaging.rgb_to_yuv(img)
    luma_table = scaled_quant_table(_LUMA_TABLE, quality)
    chroma_table = scaled_quant_table(_CHROMA_TABLE, quality)
    planes = np.stack([
        _quantize_plane(yuv.plane(0), luma_table),
        _quantize_plane(yuv.plane(1), chroma_table),
        _quantize_plane(yuv.plane(2), chroma_table),
    ])
    return imaging.yuv_to_rgb(Image(planes))


def gaussian_noise(img: Image, sigma: float = 0.05, seed: int = 0) -> Image:
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if sigma == 0:
        return img
    noise = rng(seed).normal(0.0, sigma, img.data.shape)
    return Image(np.clip(img.data + noise, 0.0, 1.0))


# ---------------------------------------------------------------------------
# metadata stripping

@dataclass(frozen=True)
class StripReport:
    container: str
    removed: tuple[tuple[str, int], ...]   # (segment name, byte count)

    @property
    def clean(self) -> bool:
        return not self.removed


_PNG_CRITICAL = (b"IHDR", b"PLTE", b"IDAT", b"IEND")


def _strip_png(data: bytes) -> tuple[bytes, StripReport]:
    kept = [imaging.PNG_SIGNATURE]
    removed = []
    for ctype, payload in imaging.iter_png_chunks(data):
        if ctype in _PNG_CRITICAL:
            kept.append(imaging._png_chunk(ctype, payload))
        else:
            removed.append((ctype.decode("latin-1"), len(payload) + 12))
    return b"".join(kept), StripReport("png", tuple(removed))


def _strip_jpeg(data: bytes) -> tuple[bytes, StripReport]:
    if data[:2] != b"\xff\xd8":
        raise UnsupportedFormatError("not a JPEG stream")
    out = bytearray(b"\xff\xd8")
    removed = []
    pos = 2
    while pos < len(data):
        if data[pos] != 0xFF:
            raise CorruptImageError(f"expected marker at offset {pos}")
        marker = data[pos + 1] if pos + 1 < len(data) else None
        if marker is None:
            raise CorruptImageError("truncated marker")
        if marker == 0xD9:  # EOI
            out.extend(b"\xff\xd9")
            pos += 2
            break
        if marker == 0x01 or 0xD0 <= marker <= 0xD7:  # standalone markers
            out.extend(data[pos:pos + 2])
            pos += 2
            continue
        if pos + 4 > len(data):
            raise CorruptImageError("truncated segment header")
        (length,) = struct.unpack(">H", data[pos + 2:pos + 4])
        if length < 2 or pos + 2 + length > len(data):
            raise CorruptImageError("segment length out of bounds")
        segment = data[pos:pos + 2 + length]
        if 0xE0 <= marker <= 0xEF:
            removed.append((f"APP{marker - 0xE0}", len(segment)))
        elif marker == 0xFE:
            removed.append(("COM", len(segment)))
        else:
            out.extend(segment)
            if marker == 0xDA:  # SOS: entropy-coded data follows, copy verbatim
                tail = data[pos + 2 + length:]
                out.extend(tail)
                pos = len(data)
                break
        pos += 2 + length
    else:
        raise CorruptImageError("missing SOS or EOI")
    return bytes(out), StripReport("jpeg", tuple(removed))


def strip_metadata(in_path, out_path) -> StripReport:
    """Drop every non-essential container segment; pixel data is untouched."""
    data = Path(in_path).read_bytes()
    if data[:8] == imaging.PNG_SIGNATURE:
        cleaned, report = _strip_png(data)
    elif data[:2] == b"\xff\xd8":
        cleaned, report = _strip_jpeg(data)
    else:
        raise UnsupportedFormatError(f"{in_path}: neither PNG nor JPEG")
    Path(out_path).write_bytes(cleaned)
    return report


# ---------------------------------------------------------------------------
# visual paraphrase

def visual_paraphrase(img: Image, s: float, gs: float = 7.5, backend: str = "surrogate",
                      seed: int = 0, steps: int = DEFAULT_STEPS,
                      service_url: str | None = None) -> tuple[Image, str]:
    if not (0.0 <= s <= 1.0):
        raise ValueError("paraphrase strength must lie in [0, 1]")
    if gs < 0:
        raise ValueError("guidance scale must be non-negative")
    if backend == "external":
        if not service_url:
            raise AttackServiceError("external backend needs a service URL")
        client = ParaphraseClient(service_url)
        return client.paraphrase(img, strength=s, guidance_scale=gs, steps=steps, seed=seed)
    if backend != "surrogate":
        raise ValueError(f"unknown paraphrase backend {backend!r}")

    if s == 0.0:
        return img, "surrogate"
    schedule = diffusion.NoiseSchedule(T=steps)
    t_star = int(round(s * schedule.T))
    if t_star == 0:
        return img, "surrogate"
    g = rng(seed)
    x = np.array(img.data)
    for t in range(1, t_star + 1):
        x = diffusion.forward_step(x, t, schedule, g)
    guide = _paraphrase_guide(img.data, s, g)
    denoiser = diffusion.GuidePullDenoiser(schedule)
    x = diffusion.reverse_chain(x, t_star, denoiser, guide, gs, schedule)
    return Image(np.clip(x, 0.0, 1.0)), "surrogate"


# scramble weight w(f) = clip(sev * (W0 + f / F_KNEE) + sev^6, 0, 1) with a
# per-image severity around s: strength re-invents fine detail first, coarse
# layout last, and everything by s = 1
_SCRAMBLE_BASE = 0.04
_SCRAMBLE_KNEE = 0.16
_SCRAMBLE_JITTER = 0.35


def _paraphrase_guide(planes: np.ndarray, s: float, g: np.random.Generator) -> np.ndarray:
    """Guide for the reverse chain: the input with a strength-scaled share of
    its spectrum re-realized under fresh phases, then the 5x5 low-pass.

    Severity jitters per image (regeneration damage genuinely varies with
    content) and fades to exactly s at the endpoints, so s = 1 always
    replaces the full spectrum.
    """
    h, w = planes.shape[1:]
    jitter = _SCRAMBLE_JITTER * g.uniform(-1.0, 1.0) * (1.0 - s ** 4)
    severity = min(1.0, max(0.0, s * (1.0 + jitter)))
    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.fftfreq(w)[None, :]
    freq = np.hypot(fy, fx)
    # the saturation exponent falls with frequency: fine structure is fully
    # re-invented well before the coarse layout, and everything is by s = 1
    saturation = severity ** (6.0 - 4.0 * np.minimum(freq / 0.2, 1.0))
    weight = np.clip(severity * (_SCRAMBLE_BASE + freq / _SCRAMBLE_KNEE) + saturation, 0.0, 1.0)
    weight[0, 0] = 0.0  # regeneration keeps the global tone; a flipped DC sign diverges the chain
    # spectrum of a real noise field is Hermitian, so the mix stays real;
    # the replacement keeps only the radial magnitude envelope of the
    # original (a fresh realization of similar content), never per-bin
    # magnitudes, which would leak watermark structure through the attack
    noise_spec = np.fft.fft2(g.standard_normal((h, w)))
    bands = np.minimum((freq * 48).astype(int), 24)
    noise_env = np.maximum(_radial_mean(np.abs(noise_spec), bands), 1e-300)
    mixed = []
    for p in planes:
        spec = np.fft.fft2(p)
        env = _radial_mean(np.abs(spec), bands)
        scrambled = noise_spec * (env / noise_env)[bands]
        mixed.append(np.fft.ifft2((1.0 - weight) * spec + weight * scrambled).real)
    return np.stack([gaussian_blur(p, sigma=1.5, radius=2) for p in mixed])


def _radial_mean(values: np.ndarray, bands: np.ndarray) -> np.ndarray:
    sums = np.bincount(bands.ravel(), weights=values.ravel(), minlength=bands.max() + 1)
    counts = np.maximum(np.bincount(bands.ravel(), minlength=bands.max() + 1), 1)
    return sums / counts


# ---------------------------------------------------------------------------
# attack specification and dispatch

_DEFAULT_PARAMS = {
    "brightness": {"factor": 2.0},
    "rotation": {"angle_degrees": 45.0},
    "jpeg": {"quality": 50},
    "noise": {"sigma": 0.05},
    "paraphrase": {"s": 0.5, "gs": 7.5, "backend": "surrogate"},
}


@dataclass(frozen=True)
class AttackSpec:
    kind: str
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("brightness", "rotation", "jpeg", "noise", "strip_metadata", "paraphrase"):
            raise ValueError(f"unknown attack kind {self.kind!r}")
        merged = dict(_DEFAULT_PARAMS.get(self.kind, {}))
        merged.update(self.params)
        if self.kind == "paraphrase" and not (0.0 <= merged["s"] <= 1.0):
            raise ValueError("paraphrase strength must lie in [0, 1]")
        if self.kind == "jpeg" and not (1 <= merged["quality"] <= 100):
            raise ValueError("JPEG quality must lie in [1, 100]")
        if self.kind == "noise" and merged["sigma"] < 0:
            raise ValueError("noise sigma must be non-negative")
        object.__setattr__(self, "params", merged)

    def label(self) -> str:
        if not self.params:
            return self.kind
        parts = ",".join(f"{k}={self.params[k]}" for k in sorted(self.params))
        return f"{self.kind}({parts})"


def apply_attack(spec: AttackSpec, img: Image, service_url: str | None = None) -> Image:
    p = spec.params
    if spec.kind == "brightness":
        return brightness(img, p["factor"])
    if spec.kind == "rotation":
        return rotate(img, p["angle_degrees"])
    if spec.kind == "jpeg":
        return jpeg_compress(img, p["quality"])
    if spec.kind == "noise":
        return gaussian_noise(img, p["sigma"], seed=spec.seed)
    if spec.kind == "paraphrase":
        out, _ = visual_paraphrase(img, p["s"], p["gs"], p["backend"], seed=spec.seed,
                                   service_url=service_url)
        return out
    raise ValueError(f"attack {spec.kind!r} does not operate on in-memory images")


# ---------------------------------------------------------------------------
# external service client

class ParaphraseClient:
    """Blocking JSON-over-HTTP client for the paraphrase sidecar."""

    def __init__(self, base_url: str, timeout: float = 120.0):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout

    def _post(self, route: str, body: dict) -> dict:
        req = urllib.request.Request(
            self.base_url + route,
            data=json.dumps(body).encode(),
            headers={"Content-Type": "application/json"},
            method="POST",
        )
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                return json.loads(resp.read().decode())
        except urllib.error.HTTPError as e:
            raise AttackServiceError(f"{route} returned HTTP {e.code}: {e.read()[:200]!r}") from e
        except (urllib.error.URLError, TimeoutError, json.JSONDecodeError, OSError) as e:
            raise AttackServiceError(f"{route} failed: {e}") from e

    def health(self) -> dict:
        try:
            with urllib.request.urlopen(self.base_url + "/health", timeout=self.timeout) as resp:
                return json.loads(resp.read().decode())
        except (urllib.error.URLError, TimeoutError, json.JSONDecodeError, OSError) as e:
            raise AttackServiceError(f"/health failed: {e}") from e

    def caption(self, img: Image) -> str:
        reply = self._post("/caption", {"image": _b64_png(img)})
        try:
            return str(reply["caption"])
        except (KeyError, TypeError) as e:
            raise AttackServiceError(f"/caption reply missing fields: {reply}") from e

    def paraphrase(self, img: Image, strength: float, guidance_scale: float,
                   steps: int = DEFAULT_STEPS, seed: int = 0) -> tuple[Image, str]:
        reply = self._post("/paraphrase", {
            "image": _b64_png(img),
            "strength": strength,
            "guidance_scale": guidance_scale,
            "steps": steps,
            "seed": seed,
        })
        try:
            return _png_b64_image(reply["image"]), str(reply["caption"])
        except (KeyError, TypeError, ValueError) as e:
            raise AttackServiceError(f"/paraphrase reply malformed: {e}") from e

    def embedding(self, img: Image) -> np.ndarray:
        reply = self._post("/embedding", {"image": _b64_png(img)})
        try:
            return np.asarray([float(v) for v in reply["vector"]], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as e:
            raise AttackServiceError(f"/embedding reply malformed: {e}") from e


def _b64_png(img: Image) -> str:
    return base64.b64encode(imaging.encode_png(img)).decode("ascii")


def _png_b64_image(payload: str) -> Image:
    return imaging.decode_png(base64.b64decode(payload))
