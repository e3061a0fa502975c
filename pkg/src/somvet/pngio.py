"""Tiny 8-bit grayscale PNG encoder (zlib + struct, no imaging deps)."""

from __future__ import annotations

import struct
import zlib

import numpy as np


def to_uint8(img: np.ndarray) -> np.ndarray:
    """Clip floats to [0, 1] and scale to 0..255."""
    if img.dtype == np.uint8:
        return img
    return np.round(np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0) * 255.0).astype(np.uint8)


def encode_gray_png(img: np.ndarray) -> bytes:
    img = to_uint8(np.asarray(img))
    if img.ndim != 2:
        raise ValueError(f"expected a 2-d image, got shape {img.shape}")
    h, w = img.shape
    raw = b"".join(b"\x00" + img[r].tobytes() for r in range(h))

    def chunk(tag: bytes, data: bytes) -> bytes:
        return (
            struct.pack(">I", len(data))
            + tag
            + data
            + struct.pack(">I", zlib.crc32(tag + data) & 0xFFFFFFFF)
        )

    ihdr = struct.pack(">IIBBBBB", w, h, 8, 0, 0, 0, 0)  # 8-bit grayscale
    return (
        b"\x89PNG\r\n\x1a\n"
        + chunk(b"IHDR", ihdr)
        + chunk(b"IDAT", zlib.compress(raw, 6))
        + chunk(b"IEND", b"")
    )


def write_gray_png(path, img: np.ndarray) -> None:
    with open(path, "wb") as f:
        f.write(encode_gray_png(img))


def contact_sheet(tiles: np.ndarray, gap: int = 1, scale: int = 1, gap_value: float = 0.25) -> np.ndarray:
    """Lay an (m, m, th, tw) tile grid out as one image with separators."""
    m1, m2, th, tw = tiles.shape
    out = np.full(
        (m1 * th + (m1 + 1) * gap, m2 * tw + (m2 + 1) * gap), gap_value, dtype=np.float64
    )
    for i in range(m1):
        for j in range(m2):
            y = gap + i * (th + gap)
            x = gap + j * (tw + gap)
            out[y:y + th, x:x + tw] = tiles[i, j]
    if scale > 1:
        out = np.repeat(np.repeat(out, scale, axis=0), scale, axis=1)
    return out
