"""Image file IO: 8-bit PNG, 16-bit PGM, and raw float32 sidecars.

PNG carries color renders for eyeballing; single-channel maps (alpha,
depth, confidence) go to 16-bit PGM scaled by a recorded maximum. Every
lossy image gets a lossless float32 sidecar next to it so downstream
stages never round-trip through quantization. Sidecar layout: 16-byte
header (magic "CFXF", then width/height/channels as little-endian u32),
followed by row-major float32 samples.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from PIL import Image

SIDECAR_MAGIC = b"CFXF"


def save_png(path: str | Path, image: np.ndarray) -> None:
    """Write an image as 8-bit PNG; values are clipped to [0, 1]."""
    arr = np.asarray(image, dtype=np.float64)
    arr = np.clip(arr, 0.0, 1.0)
    quant = np.round(arr * 255.0).astype(np.uint8)
    if quant.ndim == 2:
        Image.fromarray(quant, mode="L").save(path)
    elif quant.ndim == 3 and quant.shape[2] == 3:
        Image.fromarray(quant, mode="RGB").save(path)
    else:
        raise ValueError(f"cannot write PNG with shape {arr.shape}")


def load_png(path: str | Path) -> np.ndarray:
    """Read a PNG into float64 in [0, 1]; RGB stays (H, W, 3), gray (H, W)."""
    with Image.open(path) as img:
        if img.mode not in ("L", "RGB"):
            img = img.convert("RGB")
        arr = np.asarray(img, dtype=np.float64)
    return arr / 255.0


def save_pgm16(path: str | Path, image: np.ndarray, max_value: float | None = None) -> None:
    """Write a single-channel map as 16-bit PGM.

    The map is scaled by its maximum (or the provided one) into 0..65535;
    the scale is recorded as a header comment so loads can undo it.
    """
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError("PGM output requires a single-channel (H, W) array")
    if not np.all(np.isfinite(arr)):
        raise ValueError("PGM output requires finite values")
    if max_value is None:
        max_value = float(arr.max()) if arr.size else 0.0
    if max_value <= 0.0:
        max_value = 1.0
    quant = np.clip(arr / max_value, 0.0, 1.0)
    quant = np.round(quant * 65535.0).astype(">u2")
    h, w = arr.shape
    header = f"P5\n# max {max_value!r}\n{w} {h}\n65535\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(quant.tobytes())


def load_pgm16(path: str | Path) -> tuple[np.ndarray, float]:
    """Read a 16-bit PGM written by save_pgm16; returns (map, recorded max)."""
    blob = Path(path).read_bytes()
    if not blob.startswith(b"P5"):
        raise ValueError(f"{path}: not a binary PGM file")
    # header = magic, optional comments, width/height, maxval; whitespace-delimited
    pos = 2
    tokens: list[bytes] = []
    max_value = 1.0
    while len(tokens) < 3:
        while pos < len(blob) and blob[pos:pos + 1].isspace():
            pos += 1
        if blob[pos:pos + 1] == b"#":
            end = blob.find(b"\n", pos)
            comment = blob[pos:end].decode("ascii", errors="replace")
            if comment.startswith("# max "):
                max_value = float(comment[len("# max "):])
            pos = end + 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos:pos + 1].isspace():
            pos += 1
        tokens.append(blob[start:pos])
    pos += 1  # single whitespace after maxval
    w, h, maxval = (int(t) for t in tokens)
    if maxval != 65535:
        raise ValueError(f"{path}: expected 16-bit PGM (maxval 65535), got {maxval}")
    data = np.frombuffer(blob[pos:pos + w * h * 2], dtype=">u2")
    if data.size != w * h:
        raise ValueError(f"{path}: truncated PGM data")
    return data.reshape(h, w).astype(np.float64) / 65535.0 * max_value, max_value


def save_float_raw(path: str | Path, image: np.ndarray) -> None:
    """Write the raw float32 sidecar for an image array."""
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim == 2:
        h, w, c = arr.shape[0], arr.shape[1], 1
    elif arr.ndim == 3:
        h, w, c = arr.shape
    else:
        raise ValueError(f"cannot write sidecar with shape {arr.shape}")
    header = SIDECAR_MAGIC + struct.pack("<III", w, h, c)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_float_raw(path: str | Path) -> np.ndarray:
    """Read a float32 sidecar; single-channel data comes back as (H, W)."""
    blob = Path(path).read_bytes()
    if len(blob) < 16 or blob[:4] != SIDECAR_MAGIC:
        raise ValueError(f"{path}: not a confix float sidecar")
    w, h, c = struct.unpack("<III", blob[4:16])
    need = w * h * c * 4
    if len(blob) - 16 < need:
        raise ValueError(f"{path}: truncated sidecar data")
    data = np.frombuffer(blob[16:16 + need], dtype="<f4").astype(np.float64)
    if c == 1:
        return data.reshape(h, w)
    return data.reshape(h, w, c)
