"""Field dumps: binary PGM images and raw float32 arrays with sidecars.

PGM is 8-bit and min-max normalized per image, so every image carries a
JSON sidecar recording the scale; raw dumps are little-endian float32
with shape/dtype recorded the same way. Both formats need no external
libraries to read.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .errors import ConfigError
from .runio import atomic_bytes, write_json

__all__ = ["write_pgm", "write_raw", "read_raw", "render_raw"]

RAW_DTYPE = "float32"


def _sidecar_path(path: str) -> str:
    return path + ".json"


def write_pgm(path: str, field: np.ndarray, extra_meta: dict | None = None) -> str:
    """Write a 2-d field as binary PGM (P5), returning the sidecar path.

    The image is min-max normalized to 0..255; the sidecar records vmin
    and vmax so the original scale can be recovered. A constant field
    maps to all zeros.
    """
    arr = np.asarray(field, dtype=np.float64)
    if arr.ndim != 2:
        raise ConfigError(f"PGM needs a 2-d field, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ConfigError("PGM input contains non-finite values")
    vmin = float(arr.min())
    vmax = float(arr.max())
    if vmax > vmin:
        scaled = (arr - vmin) * (255.0 / (vmax - vmin))
    else:
        scaled = np.zeros_like(arr)
    pixels = np.clip(np.rint(scaled), 0, 255).astype(np.uint8)
    h, w = pixels.shape
    header = f"P5\n{w} {h}\n255\n".encode("ascii")
    atomic_bytes(path, header + pixels.tobytes())
    meta = {
        "format": "pgm-p5",
        "height": h,
        "width": w,
        "vmin": vmin,
        "vmax": vmax,
    }
    if extra_meta:
        meta.update(extra_meta)
    side = _sidecar_path(path)
    write_json(side, meta)
    return side


def write_raw(path: str, field: np.ndarray, extra_meta: dict | None = None) -> str:
    """Dump a field as little-endian float32 with a JSON sidecar."""
    arr = np.ascontiguousarray(np.asarray(field, dtype="<f4"))
    atomic_bytes(path, arr.tobytes())
    meta = {
        "format": "raw",
        "dtype": RAW_DTYPE,
        "endianness": "little",
        "shape": list(arr.shape),
    }
    if extra_meta:
        meta.update(extra_meta)
    side = _sidecar_path(path)
    write_json(side, meta)
    return side


def read_raw(path: str) -> tuple[np.ndarray, dict]:
    """Read a raw dump written by write_raw, via its sidecar."""
    side = _sidecar_path(path)
    if not os.path.exists(path):
        raise ConfigError(f"raw dump not found: {path}")
    if not os.path.exists(side):
        raise ConfigError(f"raw dump sidecar not found: {side}")
    with open(side, encoding="utf-8") as fh:
        try:
            meta = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"unreadable sidecar {side}: {exc}") from exc
    if meta.get("format") != "raw" or meta.get("dtype") != RAW_DTYPE:
        raise ConfigError(f"{side} does not describe a {RAW_DTYPE} raw dump")
    shape = tuple(int(s) for s in meta.get("shape", []))
    data = np.fromfile(path, dtype="<f4")
    expected = int(np.prod(shape)) if shape else -1
    if expected != data.size:
        raise ConfigError(
            f"raw dump {path} has {data.size} values, sidecar shape {shape} needs {expected}"
        )
    return data.reshape(shape), meta


def render_raw(raw_path: str, out_path: str) -> str:
    """Convert a raw float dump into a normalized PGM; returns sidecar path."""
    field, meta = read_raw(raw_path)
    if field.ndim != 2:
        raise ConfigError(f"render needs a 2-d dump, got shape {field.shape}")
    carried = {k: meta[k] for k in ("field", "step", "seed") if k in meta}
    carried["source"] = os.path.basename(raw_path)
    return write_pgm(out_path, field, extra_meta=carried)
