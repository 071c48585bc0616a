"""Frame acquisition: camera / video-file / image-dir / synthetic sources.

All sources hand out immutable grayscale-or-RGB frames with monotonic
millisecond timestamps, rate-limited to the configured fps cap. The synthetic
source renders deterministic test patterns so the whole pipeline runs without
hardware. File sources read binary PGM (P5) and PPM (P6) only; those formats
are bit-exactly specifiable which keeps fixtures trivial to author.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path
from urllib.parse import parse_qsl

import numpy as np

from .errors import (
    SourceClosed,
    SourceUnavailable,
    UnsupportedFormat,
    WrongChannelCount,
    ZeroDimension,
)

SOURCE_KINDS = ("camera", "video-file", "image-dir", "synthetic")


@dataclass(frozen=True)
class Frame:
    """One image: uint8 pixels, shape (h, w) for grayscale or (h, w, 3) for RGB."""

    pixels: np.ndarray
    timestamp: int  # monotonic milliseconds

    def __post_init__(self):
        px = self.pixels
        if px.dtype != np.uint8:
            raise ValueError("frame pixels must be uint8")
        if px.ndim == 2:
            pass
        elif px.ndim == 3 and px.shape[2] == 3:
            pass
        else:
            raise ValueError(f"frame shape {px.shape} is neither (h,w) nor (h,w,3)")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError("frame dimensions must be >= 1")
        px.setflags(write=False)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.pixels.ndim == 2 else 3


@dataclass(frozen=True)
class SourceSpec:
    kind: str
    locator: str = ""
    fps_cap: float = 15.0

    def __post_init__(self):
        if self.kind not in SOURCE_KINDS:
            raise ValueError(f"unknown source kind {self.kind!r}")
        if self.fps_cap <= 0:
            raise ValueError("fps_cap must be > 0")
        if self.kind in ("video-file", "image-dir") and not self.locator:
            raise ValueError(f"{self.kind} source requires a locator path")


def to_grayscale(frame: Frame) -> Frame:
    """BT.601 luma: y = (299 R + 587 G + 114 B + 500) // 1000, exact integer rounding."""
    if frame.channels != 3:
        raise WrongChannelCount(f"to_grayscale needs 3 channels, got {frame.channels}")
    rgb = frame.pixels.astype(np.int64)
    y = (299 * rgb[:, :, 0] + 587 * rgb[:, :, 1] + 114 * rgb[:, :, 2] + 500) // 1000
    return Frame(y.astype(np.uint8), frame.timestamp)


def resize_bilinear(frame: Frame, out_w: int, out_h: int) -> Frame:
    """Bilinear resample with half-pixel center alignment.

    Source coordinate of output pixel i along an axis of length n_src resized
    to n_dst is (i + 0.5) * n_src / n_dst - 0.5, clamped to the valid range.
    """
    if out_w < 1 or out_h < 1:
        raise ZeroDimension(f"target size {out_w}x{out_h}")
    if out_w == frame.width and out_h == frame.height:
        return frame
    src = frame.pixels.astype(np.float64)
    if src.ndim == 2:
        src = src[:, :, None]
    h, w = frame.height, frame.width

    def axis_coords(n_dst, n_src):
        c = (np.arange(n_dst) + 0.5) * (n_src / n_dst) - 0.5
        c = np.clip(c, 0.0, n_src - 1.0)
        lo = np.floor(c).astype(np.int64)
        hi = np.minimum(lo + 1, n_src - 1)
        return lo, hi, (c - lo)

    y0, y1, fy = axis_coords(out_h, h)
    x0, x1, fx = axis_coords(out_w, w)
    fy = fy[:, None, None]
    fx = fx[None, :, None]
    top = src[y0][:, x0] * (1 - fx) + src[y0][:, x1] * fx
    bot = src[y1][:, x0] * (1 - fx) + src[y1][:, x1] * fx
    out = top * (1 - fy) + bot * fy
    out = np.clip(np.rint(out), 0, 255).astype(np.uint8)
    if frame.channels == 1:
        out = out[:, :, 0]
    return Frame(out, frame.timestamp)


# --- PGM / PPM ---------------------------------------------------------------


def read_pnm(data: bytes) -> np.ndarray:
    """Parse binary PGM (P5) or PPM (P6) with maxval <= 255."""
    pos = 0

    def token():
        nonlocal pos
        while pos < len(data):
            if data[pos : pos + 1].isspace():
                pos += 1
            elif data[pos : pos + 1] == b"#":
                while pos < len(data) and data[pos : pos + 1] != b"\n":
                    pos += 1
            else:
                break
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise UnsupportedFormat("truncated PNM header")
        return data[start:pos]

    magic = token()
    if magic not in (b"P5", b"P6"):
        raise UnsupportedFormat(f"not a binary PGM/PPM: magic {magic!r}")
    try:
        w, h, maxval = int(token()), int(token()), int(token())
    except ValueError as e:
        raise UnsupportedFormat(f"bad PNM header: {e}") from None
    if maxval <= 0 or maxval > 255:
        raise UnsupportedFormat(f"unsupported maxval {maxval}")
    if w < 1 or h < 1:
        raise UnsupportedFormat("non-positive dimensions")
    pos += 1  # single whitespace after maxval
    channels = 1 if magic == b"P5" else 3
    need = w * h * channels
    raw = data[pos : pos + need]
    if len(raw) < need:
        raise UnsupportedFormat(f"pixel data truncated: need {need}, have {len(raw)}")
    arr = np.frombuffer(raw, dtype=np.uint8).copy()
    return arr.reshape((h, w)) if channels == 1 else arr.reshape((h, w, 3))


def write_pnm(pixels: np.ndarray) -> bytes:
    if pixels.dtype != np.uint8:
        raise ValueError("write_pnm expects uint8")
    if pixels.ndim == 2:
        magic = b"P5"
        h, w = pixels.shape
    elif pixels.ndim == 3 and pixels.shape[2] == 3:
        magic = b"P6"
        h, w = pixels.shape[:2]
    else:
        raise ValueError(f"bad pixel shape {pixels.shape}")
    return magic + f"\n{w} {h}\n255\n".encode() + pixels.tobytes()


# --- synthetic patterns ------------------------------------------------------

FACE_BG = 200  # light field behind the dark-square "face" pattern
FACE_DARK = 60
FACE_LIGHT = 200


def uniform_pattern(w: int, h: int, value: int = 128) -> np.ndarray:
    return np.full((h, w), value, dtype=np.uint8)


def face_pattern(w: int, h: int, cx: int | None = None, cy: int | None = None,
                 size: int = 48) -> tuple[np.ndarray, tuple[int, int, int, int]]:
    """Dark square with a light inner square, on a light field.

    `size` is the side of the ground-truth detection box, 1.5x the dark
    square. Returns (pixels, truth_box) with truth_box = (x, y, w, h).
    """
    cx = w // 2 if cx is None else cx
    cy = h // 2 if cy is None else cy
    px = np.full((h, w), FACE_BG, dtype=np.uint8)
    dark = (2 * size) // 3
    inner = size // 3
    dx, dy = cx - dark // 2, cy - dark // 2
    px[dy : dy + dark, dx : dx + dark] = FACE_DARK
    ix, iy = cx - inner // 2, cy - inner // 2
    px[iy : iy + inner, ix : ix + inner] = FACE_LIGHT
    return px, (cx - size // 2, cy - size // 2, size, size)


# --- sources -----------------------------------------------------------------


def _now_ms() -> int:
    return time.monotonic_ns() // 1_000_000


class FrameSource:
    """Base source: rate-caps emission and stamps strictly increasing timestamps."""

    def __init__(self, fps_cap: float):
        self._interval = 1.0 / fps_cap
        self._last_emit: float | None = None
        self._last_ts = -1
        self._closed = False

    def _produce(self) -> np.ndarray | None:
        raise NotImplementedError

    def next_frame(self) -> Frame | None:
        """Next frame, or None at end of stream. Blocks to honor the fps cap."""
        if self._closed:
            raise SourceClosed("source already closed")
        now = time.monotonic()
        if self._last_emit is not None:
            wait = self._last_emit + self._interval - now
            if wait > 0:
                time.sleep(wait)
        pixels = self._produce()
        if pixels is None:
            return None
        self._last_emit = time.monotonic()
        ts = max(_now_ms(), self._last_ts + 1)
        self._last_ts = ts
        return Frame(pixels, ts)

    def close(self):
        self._closed = True

    def __iter__(self):
        while True:
            f = self.next_frame()
            if f is None:
                return
            yield f


class SyntheticSource(FrameSource):
    """Pattern generator. Locator: "<pattern>?k=v&...".

    Patterns: "uniform" (params: value), "face" (params: size, after_ms —
    uniform background until `after_ms` of stream time has elapsed).
    Common params: w, h, frames (frame budget, 0 = unbounded).
    """

    def __init__(self, locator: str, fps_cap: float):
        super().__init__(fps_cap)
        name, _, query = (locator or "uniform").partition("?")
        params = dict(parse_qsl(query))
        if name not in ("uniform", "face"):
            raise SourceUnavailable(f"unknown synthetic pattern {name!r}")
        self._name = name
        self._w = int(params.get("w", 640))
        self._h = int(params.get("h", 480))
        self._value = int(params.get("value", 128))
        self._size = int(params.get("size", 48))
        self._after_ms = int(params.get("after_ms", 0))
        self._budget = int(params.get("frames", 0))
        self._emitted = 0
        self._t0: float | None = None

    def truth_box(self) -> tuple[int, int, int, int]:
        return face_pattern(self._w, self._h, size=self._size)[1]

    def _produce(self):
        if self._budget and self._emitted >= self._budget:
            return None
        self._emitted += 1
        if self._t0 is None:
            self._t0 = time.monotonic()
        if self._name == "uniform":
            return uniform_pattern(self._w, self._h, self._value)
        elapsed_ms = (time.monotonic() - self._t0) * 1000.0
        if elapsed_ms < self._after_ms:
            return uniform_pattern(self._w, self._h, FACE_BG)
        return face_pattern(self._w, self._h, size=self._size)[0]


class ImageDirSource(FrameSource):
    """Sorted *.pgm / *.ppm files from one directory, then end-of-stream."""

    def __init__(self, locator: str, fps_cap: float):
        super().__init__(fps_cap)
        root = Path(locator)
        if not root.is_dir():
            raise SourceUnavailable(f"image dir not found: {locator}")
        self._paths = sorted(
            p for p in root.iterdir() if p.suffix.lower() in (".pgm", ".ppm")
        )
        self._idx = 0

    def _produce(self):
        if self._idx >= len(self._paths):
            return None
        path = self._paths[self._idx]
        self._idx += 1
        return read_pnm(path.read_bytes())


class VideoFileSource(FrameSource):
    """Concatenated binary PGM frames in a single file."""

    def __init__(self, locator: str, fps_cap: float):
        super().__init__(fps_cap)
        path = Path(locator)
        if not path.is_file():
            raise SourceUnavailable(f"video file not found: {locator}")
        self._data = path.read_bytes()
        if self._data[:2] not in (b"P5",):
            raise UnsupportedFormat("video file must contain concatenated P5 frames")
        self._pos = 0

    def _produce(self):
        if self._pos >= len(self._data):
            return None
        chunk = self._data[self._pos :]
        pixels = read_pnm(chunk)
        # advance past this frame: re-measure the header on the same chunk
        header_end = self._measure(chunk, pixels)
        self._pos += header_end
        return pixels

    @staticmethod
    def _measure(chunk: bytes, pixels: np.ndarray) -> int:
        body = pixels.size
        # header = everything before the pixel payload; payload starts right
        # after the single whitespace that follows the maxval token
        seen = 0
        pos = 0
        while seen < 4:  # magic, w, h, maxval
            while chunk[pos : pos + 1].isspace():
                pos += 1
            if chunk[pos : pos + 1] == b"#":
                while chunk[pos : pos + 1] != b"\n":
                    pos += 1
                continue
            while pos < len(chunk) and not chunk[pos : pos + 1].isspace():
                pos += 1
            seen += 1
        return pos + 1 + body


class CameraSource(FrameSource):
    """Live capture device. Latest-wins: the device buffer is kept at depth 1
    so a slow consumer always sees the freshest frame."""

    def __init__(self, locator: str, fps_cap: float):
        super().__init__(fps_cap)
        try:
            import cv2
        except ImportError:
            raise SourceUnavailable("camera capture needs opencv (cv2) installed")
        index = int(locator) if locator else 0
        self._cap = cv2.VideoCapture(index)
        if not self._cap.isOpened():
            raise SourceUnavailable(f"cannot open camera device {index}")
        self._cap.set(cv2.CAP_PROP_BUFFERSIZE, 1)

    def _produce(self):
        ok, bgr = self._cap.read()
        if not ok:
            return None
        return bgr[:, :, ::-1].copy()  # BGR -> RGB

    def close(self):
        if not self._closed:
            self._cap.release()
        super().close()


def open_source(spec: SourceSpec) -> FrameSource:
    """Open a frame source. Synthetic never fails; file kinds fail fast."""
    if spec.kind == "synthetic":
        return SyntheticSource(spec.locator, spec.fps_cap)
    if spec.kind == "image-dir":
        return ImageDirSource(spec.locator, spec.fps_cap)
    if spec.kind == "video-file":
        return VideoFileSource(spec.locator, spec.fps_cap)
    return CameraSource(spec.locator, spec.fps_cap)
