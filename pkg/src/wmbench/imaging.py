"""Core image container, PNG/PPM codecs, color conversion, seeded randomness.

Pixels live as float64 in [0, 1], planar per channel.  8-bit quantization
happens only at file boundaries, with round-half-up so byte values are
deterministic.
"""

from __future__ import annotations

import hashlib
import re
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "Image",
    "UnsupportedFormatError",
    "CorruptImageError",
    "rng",
    "derive_seed",
    "load_image",
    "save_image",
    "encode_png",
    "decode_png",
    "rgb_to_yuv",
    "yuv_to_rgb",
    "to_gray",
    "gaussian_blur",
    "bilinear_resize",
    "center_crop_square",
]

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


class UnsupportedFormatError(ValueError):
    """File is recognized but uses a feature outside the supported profile."""


class CorruptImageError(ValueError):
    """File claims a supported format but its stream is inconsistent."""


@dataclass(frozen=True)
class Image:
    """Planar float image: data has shape (channels, height, width) in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[0] not in (1, 3):
            raise ValueError(f"expected (channels, height, width) with 1 or 3 channels, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("image samples must be finite")
        arr = np.clip(arr, 0.0, 1.0)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    def plane(self, i: int) -> np.ndarray:
        return self.data[i]


def rng(seed: int) -> np.random.Generator:
    """Deterministic generator; equal seeds give bit-identical streams."""
    return np.random.Generator(np.random.PCG64(int(seed) & 0xFFFFFFFFFFFFFFFF))


def derive_seed(*parts) -> int:
    """Stable 64-bit sub-seed from heterogeneous parts (ints, strings)."""
    h = hashlib.blake2b(digest_size=8)
    for p in parts:
        h.update(repr(p).encode())
        h.update(b"\x00")
    return int.from_bytes(h.digest(), "little")


# ---------------------------------------------------------------------------
# quantization

def quantize_u8(arr: np.ndarray) -> np.ndarray:
    # round-half-up, mandated so byte-level behavior is deterministic
    return np.floor(np.clip(arr, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


# ---------------------------------------------------------------------------
# PNG (8/16-bit gray or RGB, non-interlaced)

def _png_chunk(ctype: bytes, payload: bytes) -> bytes:
    return (
        struct.pack(">I", len(payload))
        + ctype
        + payload
        + struct.pack(">I", zlib.crc32(ctype + payload) & 0xFFFFFFFF)
    )


def encode_png(img: Image) -> bytes:
    """Lossless 8-bit PNG bytes (filter 0, single IDAT)."""
    arr = quantize_u8(img.data)
    h, w, c = img.height, img.width, img.channels
    color_type = 0 if c == 1 else 2
    interleaved = np.transpose(arr, (1, 2, 0)).reshape(h, w * c)
    raw = bytearray()
    for row in interleaved:
        raw.append(0)  # filter type 0
        raw.extend(row.tobytes())
    ihdr = struct.pack(">IIBBBBB", w, h, 8, color_type, 0, 0, 0)
    return (
        PNG_SIGNATURE
        + _png_chunk(b"IHDR", ihdr)
        + _png_chunk(b"IDAT", zlib.compress(bytes(raw), 9))
        + _png_chunk(b"IEND", b"")
    )


def _paeth(a: int, b: int, c: int) -> int:
    p = a + b - c
    pa, pb, pc = abs(p - a), abs(p - b), abs(p - c)
    if pa <= pb and pa <= pc:
        return a
    if pb <= pc:
        return b
    return c


def _unfilter(raw: bytes, h: int, stride: int, bpp: int) -> bytearray:
    out = bytearray(h * stride)
    pos = 0
    for y in range(h):
        ftype = raw[pos]
        pos += 1
        line = raw[pos:pos + stride]
        pos += stride
        off = y * stride
        prev = out[off - stride:off] if y > 0 else bytes(stride)
        if ftype == 0:
            out[off:off + stride] = line
        elif ftype == 1:
            for x in range(stride):
                left = out[off + x - bpp] if x >= bpp else 0
                out[off + x] = (line[x] + left) & 0xFF
        elif ftype == 2:
            for x in range(stride):
                out[off + x] = (line[x] + prev[x]) & 0xFF
        elif ftype == 3:
            for x in range(stride):
                left = out[off + x - bpp] if x >= bpp else 0
                out[off + x] = (line[x] + ((left + prev[x]) >> 1)) & 0xFF
        elif ftype == 4:
            for x in range(stride):
                left = out[off + x - bpp] if x >= bpp else 0
                ul = prev[x - bpp] if x >= bpp else 0
                out[off + x] = (line[x] + _paeth(left, prev[x], ul)) & 0xFF
        else:
            raise CorruptImageError(f"bad scanline filter type {ftype}")
    return out


def iter_png_chunks(data: bytes):
    """Yield (type, payload) pairs, verifying structure and CRCs."""
    if data[:8] != PNG_SIGNATURE:
        raise UnsupportedFormatError("not a PNG stream")
    pos = 8
    while pos < len(data):
        if pos + 8 > len(data):
            raise CorruptImageError("truncated chunk header")
        (length,) = struct.unpack(">I", data[pos:pos + 4])
        ctype = data[pos + 4:pos + 8]
        end = pos + 8 + length
        if end + 4 > len(data):
            raise CorruptImageError(f"truncated {ctype!r} chunk")
        payload = data[pos + 8:end]
        (crc,) = struct.unpack(">I", data[end:end + 4])
        if crc != (zlib.crc32(ctype + payload) & 0xFFFFFFFF):
            raise CorruptImageError(f"CRC mismatch in {ctype!r} chunk")
        yield ctype, payload
        pos = end + 4
        if ctype == b"IEND":
            return
    raise CorruptImageError("missing IEND chunk")


def decode_png(data: bytes) -> Image:
    ihdr = None
    idat = bytearray()
    saw_end = False
    for ctype, payload in iter_png_chunks(data):
        if ctype == b"IHDR":
            ihdr = payload
        elif ctype == b"IDAT":
            idat.extend(payload)
        elif ctype == b"IEND":
            saw_end = True
    if ihdr is None or not saw_end:
        raise CorruptImageError("missing IHDR or IEND")
    w, h, depth, color_type, comp, filt, interlace = struct.unpack(">IIBBBBB", ihdr)
    if comp != 0 or filt != 0:
        raise CorruptImageError("unknown compression or filter method")
    if interlace != 0:
        raise UnsupportedFormatError("interlaced PNG not supported")
    if depth not in (8, 16) or color_type not in (0, 2):
        raise UnsupportedFormatError(
            f"unsupported PNG profile (bit depth {depth}, color type {color_type})"
        )
    if w == 0 or h == 0:
        raise CorruptImageError("zero-sized image")
    channels = 1 if color_type == 0 else 3
    bpp = channels * (depth // 8)
    stride = w * bpp
    try:
        raw = zlib.decompress(bytes(idat))
    except zlib.error as e:
        raise CorruptImageError(f"IDAT stream corrupt: {e}") from None
    if len(raw) != h * (stride + 1):
        raise CorruptImageError("decompressed size does not match dimensions")
    flat = _unfilter(raw, h, stride, bpp)
    if depth == 8:
        arr = np.frombuffer(bytes(flat), dtype=np.uint8).astype(np.float64) / 255.0
    else:
        arr = np.frombuffer(bytes(flat), dtype=">u2").astype(np.float64) / 65535.0
    planes = arr.reshape(h, w, channels).transpose(2, 0, 1)
    return Image(planes)


# ---------------------------------------------------------------------------
# binary PPM (P6)

def encode_ppm(img: Image) -> bytes:
    if img.channels != 3:
        raise UnsupportedFormatError("P6 PPM holds RGB only; save grayscale as PNG")
    arr = quantize_u8(img.data)
    header = f"P6\n{img.width} {img.height}\n255\n".encode()
    return header + np.transpose(arr, (1, 2, 0)).tobytes()


def decode_ppm(data: bytes) -> Image:
    if not data.startswith(b"P6"):
        raise UnsupportedFormatError("not a binary PPM (P6) stream")
    # header tokens may be separated by whitespace and '#' comments
    pos = 2
    fields = []
    while len(fields) < 3:
        m = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\d+)").match(data, pos)
        if not m:
            raise CorruptImageError("malformed PPM header")
        fields.append(int(m.group(1)))
        pos = m.end()
    w, h, maxval = fields
    if maxval == 0 or maxval > 65535:
        raise CorruptImageError(f"invalid PPM maxval {maxval}")
    pos += 1  # single whitespace byte before raster
    nbytes = w * h * 3 * (1 if maxval < 256 else 2)
    raster = data[pos:pos + nbytes]
    if len(raster) != nbytes:
        raise CorruptImageError("PPM raster truncated")
    if maxval < 256:
        arr = np.frombuffer(raster, dtype=np.uint8).astype(np.float64)
    else:
        arr = np.frombuffer(raster, dtype=">u2").astype(np.float64)
    arr = (arr / maxval).reshape(h, w, 3).transpose(2, 0, 1)
    return Image(arr)


# ---------------------------------------------------------------------------
# file I/O

def load_image(path) -> Image:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise OSError(f"cannot read image file {path}: {e}") from e
    if data[:8] == PNG_SIGNATURE:
        return decode_png(data)
    if data[:2] == b"P6":
        return decode_ppm(data)
    raise UnsupportedFormatError(f"{path}: not a PNG or binary PPM file")


def save_image(img: Image, path) -> None:
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".ppm":
        payload = encode_ppm(img)
    elif suffix == ".png":
        payload = encode_png(img)
    else:
        raise UnsupportedFormatError(f"unsupported output suffix {suffix!r} (use .png or .ppm)")
    try:
        path.write_bytes(payload)
    except OSError as e:
        raise OSError(f"cannot write image file {path}: {e}") from e


# ---------------------------------------------------------------------------
# color

# BT.601 luma with full-range chroma offsets, so all planes stay in [0, 1]
_KR, _KG, _KB = 0.299, 0.587, 0.114


def rgb_to_yuv(img: Image) -> Image:
    if img.channels != 3:
        raise ValueError("rgb_to_yuv expects a 3-channel image")
    r, g, b = img.data
    y = _KR * r + _KG * g + _KB * b
    u = (b - y) / (2.0 * (1.0 - _KB)) + 0.5
    v = (r - y) / (2.0 * (1.0 - _KR)) + 0.5
    return Image(np.stack([y, u, v]))


def yuv_to_rgb(img: Image) -> Image:
    if img.channels != 3:
        raise ValueError("yuv_to_rgb expects a 3-channel image")
    y, u, v = img.data
    b = y + (u - 0.5) * 2.0 * (1.0 - _KB)
    r = y + (v - 0.5) * 2.0 * (1.0 - _KR)
    g = (y - _KR * r - _KB * b) / _KG
    return Image(np.stack([r, g, b]))


def to_gray(img: Image) -> Image:
    if img.channels == 1:
        return img
    r, g, b = img.data
    return Image((_KR * r + _KG * g + _KB * b)[None])


# ---------------------------------------------------------------------------
# resampling and filtering (plane-level, float in/out)

def gaussian_blur(plane: np.ndarray, sigma: float = 1.5, radius: int = 2) -> np.ndarray:
    """Separable Gaussian with reflect padding; default is the 5x5 sigma=1.5 kernel."""
    taps = np.exp(-0.5 * (np.arange(-radius, radius + 1) / sigma) ** 2)
    taps /= taps.sum()
    padded = np.pad(plane, radius, mode="reflect")
    tmp = np.zeros_like(padded)
    for i, t in enumerate(taps):
        tmp += t * np.roll(padded, radius - i, axis=0)
    out = np.zeros_like(padded)
    for i, t in enumerate(taps):
        out += t * np.roll(tmp, radius - i, axis=1)
    return out[radius:-radius, radius:-radius]


def bilinear_resize(plane: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Pixel-center aligned bilinear resampling of a 2-D plane."""
    h, w = plane.shape
    if (h, w) == (out_h, out_w):
        return plane.copy()
    ys = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    y0 = np.clip(np.floor(ys).astype(int), 0, h - 1)
    x0 = np.clip(np.floor(xs).astype(int), 0, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = np.clip(ys - y0, 0.0, 1.0)[:, None]
    wx = np.clip(xs - x0, 0.0, 1.0)[None, :]
    top = plane[np.ix_(y0, x0)] * (1 - wx) + plane[np.ix_(y0, x1)] * wx
    bot = plane[np.ix_(y1, x0)] * (1 - wx) + plane[np.ix_(y1, x1)] * wx
    return top * (1 - wy) + bot * wy


def resize_image(img: Image, out_h: int, out_w: int) -> Image:
    return Image(np.stack([bilinear_resize(p, out_h, out_w) for p in img.data]))


def center_crop_square(img: Image) -> Image:
    side = min(img.height, img.width)
    top = (img.height - side) // 2
    left = (img.width - side) // 2
    return Image(img.data[:, top:top + side, left:left + side])
