"""Binary file formats: IMGF image frames and STMP stamp sets.

Both formats are little-endian with a 4-byte magic and a u32 version.
Readers fail with FormatError carrying the byte offset of the problem.
"""

from __future__ import annotations

import struct

import numpy as np

from .stamps import FRAME_KINDS, ImageFrame, Stamp

IMAGE_MAGIC = b"IMGF"
STAMP_MAGIC = b"STMP"
IMAGE_VERSION = 1
STAMP_VERSION = 1

LABEL_CODES = {"bogus": 0, "real": 1, "unlabeled": 255}
CODE_LABELS = {v: k for k, v in LABEL_CODES.items()}

_STAMP_RECORD = np.dtype(
    [
        ("pixels", "<f4", (1024,)),
        ("magnitude", "<f4"),
        ("x", "<f4"),
        ("y", "<f4"),
        ("frame_id", "<u4"),
        ("label", "u1"),
    ]
)


class FormatError(ValueError):
    """Malformed binary file; offset points at the offending byte."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


class Reader:
    """Sequential cursor over an in-memory buffer with checked reads."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(
                f"truncated file: {what} needs {n} bytes, only "
                f"{len(self.data) - self.pos} remain",
                self.pos,
            )
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def magic(self, expected: bytes) -> None:
        got = self.take(4, "magic")
        if got != expected:
            raise FormatError(f"bad magic {got!r}, expected {expected!r}", self.pos - 4)

    def u8(self, what: str) -> int:
        return self.take(1, what)[0]

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def u64(self, what: str) -> int:
        return struct.unpack("<Q", self.take(8, what))[0]

    def f32(self, what: str) -> float:
        return struct.unpack("<f", self.take(4, what))[0]

    def f32_array(self, count: int, what: str) -> np.ndarray:
        raw = self.take(4 * count, what)
        return np.frombuffer(raw, dtype="<f4").copy()

    def version(self, expected: int) -> None:
        at = self.pos
        v = self.u32("version")
        if v != expected:
            raise FormatError(f"unsupported version {v}, expected {expected}", at)

    def done(self) -> None:
        if self.pos != len(self.data):
            raise FormatError(f"{len(self.data) - self.pos} trailing bytes", self.pos)


def write_image(path, frame: ImageFrame) -> None:
    kind = FRAME_KINDS.index(frame.kind)
    header = IMAGE_MAGIC + struct.pack(
        "<IIIffB",
        IMAGE_VERSION,
        frame.width,
        frame.height,
        frame.pixel_scale,
        frame.zero_point,
        kind,
    )
    with open(path, "wb") as f:
        f.write(header)
        f.write(np.ascontiguousarray(frame.pixels, dtype="<f4").tobytes())


def read_image(path) -> ImageFrame:
    with open(path, "rb") as f:
        r = Reader(f.read())
    r.magic(IMAGE_MAGIC)
    r.version(IMAGE_VERSION)
    width = r.u32("width")
    height = r.u32("height")
    pixel_scale = r.f32("pixel scale")
    zero_point = r.f32("zero point")
    kind_at = r.pos
    kind = r.u8("frame kind")
    if kind >= len(FRAME_KINDS):
        raise FormatError(f"unknown frame kind code {kind}", kind_at)
    pixels = r.f32_array(width * height, "pixels").reshape(height, width)
    r.done()
    return ImageFrame(pixels, pixel_scale, zero_point, FRAME_KINDS[kind])


def write_stamps(path, stamps: list[Stamp]) -> None:
    rec = np.zeros(len(stamps), dtype=_STAMP_RECORD)
    for i, s in enumerate(stamps):
        rec[i] = (
            s.pixels.reshape(-1),
            s.magnitude,
            s.x,
            s.y,
            s.frame_id,
            LABEL_CODES[s.label],
        )
    with open(path, "wb") as f:
        f.write(STAMP_MAGIC + struct.pack("<IQ", STAMP_VERSION, len(stamps)))
        f.write(rec.tobytes())


def read_stamps(path) -> list[Stamp]:
    with open(path, "rb") as f:
        r = Reader(f.read())
    r.magic(STAMP_MAGIC)
    r.version(STAMP_VERSION)
    count = r.u64("record count")
    raw = r.take(count * _STAMP_RECORD.itemsize, f"{count} stamp records")
    r.done()
    rec = np.frombuffer(raw, dtype=_STAMP_RECORD)
    out = []
    for i in range(count):
        code = int(rec["label"][i])
        if code not in CODE_LABELS:
            off = 16 + (i + 1) * _STAMP_RECORD.itemsize - 1
            raise FormatError(f"unknown label code {code} in record {i}", off)
        out.append(
            Stamp(
                rec["pixels"][i].reshape(32, 32).copy(),
                float(rec["x"][i]),
                float(rec["y"][i]),
                float(rec["magnitude"][i]),
                int(rec["frame_id"][i]),
                CODE_LABELS[code],
            )
        )
    return out
