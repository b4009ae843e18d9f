"""Image, CSV and sidecar persistence.

Only lossless containers are read (PNG, BMP, TIFF) and only two pixel layouts:
8-bit grayscale and 24-bit RGB. Every file is written to a temporary name in the
target directory and renamed into place.
"""
from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image, PngImagePlugin

LOSSLESS_FORMATS = {"PNG", "BMP", "TIFF"}
IMAGE_SUFFIXES = {".png", ".bmp", ".tif", ".tiff", ".jpg", ".jpeg", ".webp", ".gif"}


class DataError(Exception):
    """Bad or unreadable input data (exit code 2 on the command line)."""


def atomic_write_bytes(path, data: bytes):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _open(path) -> Image.Image:
    try:
        img = Image.open(path)
        img.load()
    except (OSError, Image.DecompressionBombError) as exc:
        raise DataError(f"{path}: unreadable image ({exc})") from exc
    if img.format not in LOSSLESS_FORMATS:
        raise DataError(f"{path}: {img.format} is not an accepted lossless format")
    if img.mode not in ("L", "RGB"):
        raise DataError(f"{path}: pixel mode {img.mode} (need 8-bit grayscale or 24-bit RGB)")
    return img


def read_rgb(path) -> np.ndarray:
    """3×H×W float image in [0, 1]. Grayscale files are replicated to three channels."""
    img = _open(path)
    arr = np.asarray(img, dtype=np.float64) / 255.0
    if arr.ndim == 2:
        arr = np.repeat(arr[None], 3, axis=0)
    else:
        arr = arr.transpose(2, 0, 1)
    return np.ascontiguousarray(arr)


def read_gray(path) -> np.ndarray:
    """H×W uint8 from an 8-bit grayscale file."""
    img = _open(path)
    if img.mode != "L":
        raise DataError(f"{path}: expected 8-bit grayscale, got {img.mode}")
    return np.asarray(img, dtype=np.uint8).copy()


def read_mask(path) -> np.ndarray:
    return read_gray(path) > 127


def read_map(path) -> np.ndarray:
    """Grayscale saliency map as floats in [0, 1]."""
    return read_gray(path).astype(np.float64) / 255.0


def to_uint8(values) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    if v.ndim == 3 and v.shape[0] == 1:
        v = v[0]
    return np.clip(np.rint(v * 255.0), 0, 255).astype(np.uint8)


def write_png(path, pixels: np.ndarray, meta: dict | None = None):
    """Write H×W uint8 or 3×H×W uint8 pixels with ``meta`` as PNG text chunks."""
    pixels = np.asarray(pixels)
    if pixels.dtype != np.uint8:
        raise TypeError(f"expected uint8 pixels, got {pixels.dtype}")
    if pixels.ndim == 3:
        img = Image.fromarray(np.ascontiguousarray(pixels.transpose(1, 2, 0)), mode="RGB")
    else:
        img = Image.fromarray(pixels, mode="L")
    info = PngImagePlugin.PngInfo()
    for key, value in sorted((meta or {}).items()):
        info.add_text(key, str(value))
    buf = io.BytesIO()
    img.save(buf, format="PNG", pnginfo=info)
    atomic_write_bytes(path, buf.getvalue())


def png_text(path) -> dict:
    with Image.open(path) as img:
        return dict(getattr(img, "text", {}))


def write_csv(path, header, rows, meta: dict | None = None):
    """Comma-separated, LF-terminated CSV plus a ``<name>.meta.json`` sidecar."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    atomic_write_bytes(path, buf.getvalue().encode())
    if meta is not None:
        write_sidecar(path, meta)


def write_sidecar(path, meta: dict):
    path = Path(path)
    blob = json.dumps(meta, sort_keys=True, indent=2) + "\n"
    atomic_write_bytes(path.with_name(path.name + ".meta.json"), blob.encode())


def read_csv(path) -> list[list[str]]:
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v
