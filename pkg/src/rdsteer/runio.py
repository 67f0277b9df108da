"""Run-directory plumbing: atomic writes, CSV/JSON/SVG emission, manifests.

Every artifact goes through a temp-file + rename pair so a crashed run
never leaves a half-written file, and the manifest is written last so
its presence marks a completed run. CSV floats use repr, the shortest
round-trip form, and JSON is sorted and indented; identical inputs give
identical bytes.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import tempfile
import time

import numpy as np

from .errors import ConfigError

__all__ = [
    "atomic_bytes",
    "atomic_text",
    "write_csv",
    "write_json",
    "sha256_file",
    "write_svg_scatter",
    "RunDir",
    "is_complete",
    "MANIFEST_NAME",
    "ARTIFACT_VERSION",
]

MANIFEST_NAME = "manifest.json"
ARTIFACT_VERSION = 1


def atomic_bytes(path: str, data: bytes) -> None:
    """Write bytes via a temp file in the same directory, then rename."""
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=parent, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_text(path: str, text: str) -> None:
    atomic_bytes(path, text.encode("utf-8"))


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        if "," in value or "\n" in value or '"' in value:
            raise ConfigError(f"CSV cell may not contain separators: {value!r}")
        return value
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    raise ConfigError(f"unsupported CSV cell type: {type(value).__name__}")


def write_csv(path: str, columns, rows) -> None:
    """Write rows (dicts keyed by column, or sequences) with full precision."""
    columns = list(columns)
    lines = [",".join(columns)]
    for row in rows:
        if isinstance(row, dict):
            values = [row.get(c) for c in columns]
        else:
            values = list(row)
            if len(values) != len(columns):
                raise ConfigError(f"row has {len(values)} cells, header has {len(columns)}")
        lines.append(",".join(_cell(v) for v in values))
    atomic_text(path, "\n".join(lines) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return None if not math.isfinite(f) else f
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def write_json(path: str, obj) -> None:
    """Write canonical JSON: sorted keys, indent 1, non-finite floats -> null."""
    atomic_text(path, json.dumps(_jsonable(obj), indent=1, sort_keys=True) + "\n")


def sha256_file(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def is_complete(run_dir: str) -> bool:
    """A run directory without a manifest is an incomplete or crashed run."""
    return os.path.isfile(os.path.join(run_dir, MANIFEST_NAME))


class RunDir:
    """A fresh output directory whose manifest is written last."""

    def __init__(self, path: str):
        self.path = os.path.abspath(path)
        self._started = time.monotonic()
        if os.path.exists(self.path):
            if not os.path.isdir(self.path):
                raise ConfigError(f"output path exists and is not a directory: {path}")
            if os.listdir(self.path):
                raise ConfigError(f"output directory is not empty: {path}")
        else:
            os.makedirs(self.path)

    def file(self, name: str) -> str:
        return os.path.join(self.path, name)

    def _listing(self) -> list:
        entries = []
        for root, _dirs, names in os.walk(self.path):
            for name in sorted(names):
                full = os.path.join(root, name)
                rel = os.path.relpath(full, self.path)
                if rel == MANIFEST_NAME:
                    continue
                entries.append(
                    {"name": rel, "bytes": os.path.getsize(full), "sha256": sha256_file(full)}
                )
        entries.sort(key=lambda e: e["name"])
        return entries

    def finalize(self, subcommand: str, config: dict, checkpoint_sha256: str | None = None) -> str:
        """Write the manifest; its presence marks the run as complete.

        wall_clock_seconds is the one field allowed to differ between
        otherwise identical runs; every data artifact is hashed in the
        listing and must be byte-stable.
        """
        manifest = {
            "artifact_version": ARTIFACT_VERSION,
            "subcommand": subcommand,
            "config": config,
            "checkpoint_sha256": checkpoint_sha256,
            "wall_clock_seconds": round(time.monotonic() - self._started, 3),
            "files": self._listing(),
        }
        path = self.file(MANIFEST_NAME)
        write_json(path, manifest)
        return path


def _svg_coord(value: float, lo: float, hi: float, a: float, b: float) -> float:
    if hi > lo:
        frac = (value - lo) / (hi - lo)
    else:
        frac = 0.5
    return a + frac * (b - a)


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def write_svg_scatter(
    path: str,
    points,
    xlabel: str,
    ylabel: str,
    front=None,
    knee=None,
    title: str = "",
) -> None:
    """Hand-rolled scatter plot: points, optional front polyline and knee ring.

    points: list of (x, y, label). front: list of (x, y) in draw order.
    knee: (x, y) or None. Output is deterministic for identical inputs.
    """
    width, height = 640, 480
    left, right, top, bottom = 70, 610, 50, 420
    xs = [p[0] for p in points]
    ys = [p[1] for p in points]
    if not xs:
        raise ConfigError("scatter plot needs at least one point")
    xlo, xhi = min(xs), max(xs)
    ylo, yhi = min(ys), max(ys)

    def cx(x):
        return _svg_coord(x, xlo, xhi, left, right)

    def cy(y):
        return _svg_coord(y, ylo, yhi, bottom, top)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{left}" y1="{bottom}" x2="{right}" y2="{bottom}" stroke="black"/>',
        f'<line x1="{left}" y1="{bottom}" x2="{left}" y2="{top}" stroke="black"/>',
    ]
    if title:
        parts.append(
            f'<text x="{(left + right) // 2}" y="28" font-size="16" '
            f'text-anchor="middle">{title}</text>'
        )
    parts.append(
        f'<text x="{(left + right) // 2}" y="{height - 12}" font-size="13" '
        f'text-anchor="middle">{xlabel}</text>'
    )
    parts.append(
        f'<text x="18" y="{(top + bottom) // 2}" font-size="13" text-anchor="middle" '
        f'transform="rotate(-90 18 {(top + bottom) // 2})">{ylabel}</text>'
    )
    for v, anchor, xpos in ((xlo, "start", left), (xhi, "end", right)):
        parts.append(
            f'<text x="{xpos}" y="{bottom + 18}" font-size="11" '
            f'text-anchor="{anchor}">{_fmt(v)}</text>'
        )
    for v, ypos in ((ylo, bottom), (yhi, top + 4)):
        parts.append(
            f'<text x="{left - 6}" y="{ypos}" font-size="11" text-anchor="end">{_fmt(v)}</text>'
        )
    if front:
        pts = " ".join(f"{cx(x):.2f},{cy(y):.2f}" for x, y in front)
        parts.append(
            f'<polyline points="{pts}" fill="none" stroke="#b04030" stroke-width="1.5"/>'
        )
    for x, y, label in points:
        parts.append(f'<circle cx="{cx(x):.2f}" cy="{cy(y):.2f}" r="4" fill="#336699"/>')
        if label:
            parts.append(
                f'<text x="{cx(x) + 6:.2f}" y="{cy(y) - 6:.2f}" font-size="10">{label}</text>'
            )
    if knee is not None:
        parts.append(
            f'<circle cx="{cx(knee[0]):.2f}" cy="{cy(knee[1]):.2f}" r="8" fill="none" '
            f'stroke="#b04030" stroke-width="2"/>'
        )
    parts.append("</svg>")
    atomic_text(path, "\n".join(parts) + "\n")
