"""Binary NetPBM (P5/P6) readers and writers plus the engine's own formats.

Label masks travel as 8-bit P5 PGM files whose pixel byte is the class
index, with a sidecar JSON header ``<file>.json`` recording
``{height, width, num_classes}``. Probability maps have two exports: a lossy
per-class P5 quantized to 0..255 for display, and a lossless flat
little-endian float32 dump with a 16-byte header (magic ``SSPM``, u32
height, u32 width, u32 K) for round-tripping.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError
from .grid import GridShape, LabelMask, ProbMap

PROBMAP_MAGIC = b"SSPM"
_WHITESPACE = b" \t\r\n\x0b\x0c"


def _next_token(data: bytes, pos: int, path) -> tuple[bytes, int]:
    n = len(data)
    while pos < n:
        c = data[pos]
        if c in _WHITESPACE:
            pos += 1
        elif c == ord("#"):
            while pos < n and data[pos] != ord("\n"):
                pos += 1
        else:
            break
    start = pos
    while pos < n and data[pos] not in _WHITESPACE:
        pos += 1
    if start == pos:
        raise FormatError(f"{path}: truncated header at byte {start}")
    return data[start:pos], pos


def _read_netpbm(path, magic: bytes, channels: int) -> np.ndarray:
    data = Path(path).read_bytes()
    token, pos = _next_token(data, 0, path)
    if token != magic:
        raise FormatError(f"{path}: expected {magic.decode()} magic at byte 0")
    dims = []
    for name in ("width", "height", "maxval"):
        token, pos = _next_token(data, pos, path)
        try:
            dims.append(int(token))
        except ValueError:
            raise FormatError(
                f"{path}: bad {name} {token!r} at byte {pos - len(token)}"
            ) from None
    width, height, maxval = dims
    if width < 1 or height < 1:
        raise FormatError(f"{path}: bad dimensions {width}x{height}")
    if not 0 < maxval < 256:
        raise FormatError(f"{path}: only 8-bit data supported, maxval={maxval}")
    pos += 1  # single whitespace byte after maxval
    need = width * height * channels
    raster = data[pos : pos + need]
    if len(raster) < need:
        raise FormatError(
            f"{path}: raster truncated at byte {pos + len(raster)} "
            f"(need {need} bytes)"
        )
    out = np.frombuffer(raster, dtype=np.uint8)
    if channels == 1:
        return out.reshape(height, width)
    return out.reshape(height, width, channels)


def read_pgm(path) -> np.ndarray:
    """8-bit grayscale (height, width) array from a binary P5 file."""
    return _read_netpbm(path, b"P5", 1)


def write_pgm(path, gray: np.ndarray) -> None:
    gray = np.asarray(gray)
    if gray.ndim != 2 or gray.dtype != np.uint8:
        raise ValueError("write_pgm expects a 2D uint8 array")
    h, w = gray.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (w, h))
        fh.write(gray.tobytes())


def read_ppm(path) -> np.ndarray:
    """8-bit RGB (height, width, 3) array from a binary P6 file."""
    return _read_netpbm(path, b"P6", 3)


def write_ppm(path, rgb: np.ndarray) -> None:
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3 or rgb.dtype != np.uint8:
        raise ValueError("write_ppm expects an (H, W, 3) uint8 array")
    h, w, _ = rgb.shape
    with open(path, "wb") as fh:
        fh.write(b"P6\n%d %d\n255\n" % (w, h))
        fh.write(rgb.tobytes())


def _sidecar(path) -> Path:
    return Path(str(path) + ".json")


def save_mask(path, mask: LabelMask) -> None:
    """Class-index PGM plus the ``<file>.json`` sidecar header."""
    if mask.num_classes > 256:
        raise ValueError("mask PGM supports at most 256 classes")
    grid = mask.shape
    write_pgm(path, mask.labels.astype(np.uint8).reshape(grid.height, grid.width))
    _sidecar(path).write_text(
        json.dumps(
            {
                "height": grid.height,
                "width": grid.width,
                "num_classes": mask.num_classes,
            }
        )
        + "\n"
    )


def load_mask(path, num_classes: int | None = None) -> LabelMask:
    """Read a class-index PGM; class count from the sidecar unless given.

    Without either, the count is inferred as max(label) + 1 (at least 2).
    """
    gray = read_pgm(path)
    h, w = gray.shape
    if num_classes is None:
        sidecar = _sidecar(path)
        if sidecar.exists():
            try:
                header = json.loads(sidecar.read_text())
                num_classes = int(header["num_classes"])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise FormatError(f"{sidecar}: bad sidecar header ({exc})") from exc
            if (int(header.get("height", h)), int(header.get("width", w))) != (h, w):
                raise FormatError(f"{sidecar}: sidecar dimensions disagree with PGM")
        else:
            num_classes = max(int(gray.max()) + 1, 2)
    return LabelMask(GridShape(h, w), num_classes, gray.reshape(-1).astype(np.int64))


def save_probmap(path, probs: ProbMap) -> None:
    """Lossless float32 dump: 16-byte SSPM header then row-major values."""
    header = struct.pack(
        "<4sIII", PROBMAP_MAGIC, probs.shape.height, probs.shape.width,
        probs.num_classes,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(probs.values.astype("<f4").tobytes())


def load_probmap(path) -> ProbMap:
    data = Path(path).read_bytes()
    if len(data) < 16:
        raise FormatError(f"{path}: truncated header at byte {len(data)}")
    magic, height, width, k = struct.unpack("<4sIII", data[:16])
    if magic != PROBMAP_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r} at byte 0")
    need = height * width * k * 4
    if len(data) - 16 < need:
        raise FormatError(f"{path}: payload truncated at byte {len(data)}")
    values = np.frombuffer(data[16 : 16 + need], dtype="<f4").astype(np.float64)
    return ProbMap(GridShape(height, width), values.reshape(height * width, k))


def save_probmap_pgms(directory, probs: ProbMap, stem: str = "prob") -> list[Path]:
    """One display-only PGM per class, probabilities quantized to 0..255."""
    directory = Path(directory)
    grid = probs.shape
    paths = []
    for k in range(probs.num_classes):
        img = np.rint(probs.values[:, k] * 255.0).astype(np.uint8)
        out = directory / f"{stem}_class{k}.pgm"
        write_pgm(out, img.reshape(grid.height, grid.width))
        paths.append(out)
    return paths


def image_to_u8(image: np.ndarray) -> np.ndarray:
    """Quantize a [0, 1] float image to uint8 gray."""
    return np.rint(np.clip(np.asarray(image), 0.0, 1.0) * 255.0).astype(np.uint8)
