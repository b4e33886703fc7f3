"""File I/O: grayscale images, raw float arrays with JSON headers, atomic writes."""

from __future__ import annotations

import io as _io
import json
import os
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image
from PIL.PngImagePlugin import PngInfo

__all__ = [
    "atomic_write_bytes",
    "atomic_write_text",
    "read_gray",
    "write_gray",
    "write_raw_map",
    "read_raw_map",
    "normalized_preview",
    "resize_to_width",
]

SUPPORTED_SUFFIXES = {".png", ".pgm"}


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def _check_suffix(path: Path) -> None:
    if path.suffix.lower() not in SUPPORTED_SUFFIXES:
        raise ValueError(f"unsupported image format {path.suffix!r}; use PNG or PGM")


def read_gray(path) -> np.ndarray:
    """Read a PNG/PGM as float64 in [0, 1]; colour is converted with Rec.601 luma."""
    path = Path(path)
    _check_suffix(path)
    with Image.open(path) as im:
        im.load()
        if im.mode in ("I;16", "I;16B", "I"):
            a = np.asarray(im, dtype=np.float64)
            return a / (65535.0 if a.max() > 255 else 255.0)
        if im.mode != "L":
            im = im.convert("RGB")
            rgb = np.asarray(im, dtype=np.float64)
            return (0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]) / 255.0
        return np.asarray(im, dtype=np.float64) / 255.0


def write_gray(path, img: np.ndarray, text: dict[str, str] | None = None) -> None:
    """Write a [0, 1] float image as 8-bit PNG or PGM, atomically.

    ``text`` goes into PNG text chunks (ignored for PGM).
    """
    path = Path(path)
    _check_suffix(path)
    a = np.clip(np.rint(np.asarray(img, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)
    buf = _io.BytesIO()
    if path.suffix.lower() == ".png":
        info = PngInfo()
        for k, v in (text or {}).items():
            info.add_text(k, v)
        Image.fromarray(a, mode="L").save(buf, format="PNG", pnginfo=info)
    else:
        Image.fromarray(a, mode="L").save(buf, format="PPM")
    atomic_write_bytes(path, buf.getvalue())


def normalized_preview(data: np.ndarray) -> np.ndarray:
    """Min-max normalization to [0, 1]; a constant map becomes all zeros."""
    data = np.asarray(data, dtype=np.float64)
    lo, hi = float(data.min()), float(data.max())
    if hi <= lo:
        return np.zeros_like(data)
    return (data - lo) / (hi - lo)


def write_raw_map(stem, data: np.ndarray, header: dict) -> tuple[Path, Path]:
    """Write ``<stem>.f32`` (little-endian float32, C order) and ``<stem>.json``."""
    stem = Path(stem)
    data = np.ascontiguousarray(data, dtype="<f4")
    head = dict(header)
    head["dims"] = list(data.shape)
    head["dtype"] = "<f4"
    raw_path = stem.with_suffix(".f32")
    json_path = stem.with_suffix(".json")
    atomic_write_bytes(raw_path, data.tobytes(order="C"))
    atomic_write_text(json_path, json.dumps(head, indent=1, sort_keys=True))
    return raw_path, json_path


def read_raw_map(stem) -> tuple[np.ndarray, dict]:
    stem = Path(stem)
    head = json.loads(stem.with_suffix(".json").read_text(encoding="utf-8"))
    data = np.fromfile(stem.with_suffix(".f32"), dtype="<f4").reshape(head["dims"])
    return data, head


def resize_to_width(img: np.ndarray, width: int) -> np.ndarray:
    """Homothetic bilinear resize so the image is ``width`` pixels wide."""
    h, w = img.shape
    if w == width:
        return np.asarray(img, dtype=np.float64)
    height = max(1, int(round(h * width / w)))
    # pixel-centre aligned sampling
    ys = (np.arange(height) + 0.5) * (h / height) - 0.5
    xs = (np.arange(width) + 0.5) * (w / width) - 0.5
    from .rectify import bilinear_sample

    gx, gy = np.meshgrid(xs, ys)
    return bilinear_sample(img, np.clip(gx, 0, w - 1), np.clip(gy, 0, h - 1))
