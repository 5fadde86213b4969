"""Delimited matrix files, scan-result bundles, and pixmap heatmap export.

Matrix file layout: '#'-prefixed "key: value" header lines carrying shape,
axis, and unit metadata, then whitespace-delimited numeric rows.  Floats are
written with 17 significant digits so a write/read round trip is value-exact.

Heatmaps are binary netpbm images: 16-bit PGM (grayscale, linear from min to
max) or 8-bit PPM with a blue-white-red diverging map symmetric about zero.
Row 0 of the matrix is the top image row.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .scan import ScanConfig, ScanResult

KNOWN_UNITS = {
    "fs", "rad/fs", "1/fs", "nm", "mm", "ps", "s", "hz", "counts", "1/s", "-",
}


class MatrixFormatError(ValueError):
    pass


def _format(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def save_matrix(path, values: np.ndarray, meta: dict | None = None) -> None:
    """Write a 1D or 2D numeric array with header metadata."""
    values = np.atleast_2d(np.asarray(values))
    if values.ndim != 2:
        raise MatrixFormatError("only 1D or 2D arrays are supported")
    path = Path(path)
    lines = ["# kerrscan-matrix: 1"]
    lines.append(f"# rows: {values.shape[0]}")
    lines.append(f"# cols: {values.shape[1]}")
    for key, val in (meta or {}).items():
        if ":" in str(key) or "\n" in str(val):
            raise MatrixFormatError(f"metadata key/value not representable: {key!r}")
        lines.append(f"# {key}: {_format(val)}")
    body = "\n".join(" ".join(_format(v) for v in row) for row in values)
    path.write_text("\n".join(lines) + "\n" + body + "\n")


def load_matrix(path) -> tuple[np.ndarray, dict]:
    """Read a matrix file back; returns (values, metadata)."""
    path = Path(path)
    meta: dict[str, str] = {}
    rows: list[list[float]] = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            if ":" not in line:
                raise MatrixFormatError(f"{path}:{lineno}: malformed header line {line!r}")
            key, _, val = line[1:].partition(":")
            meta[key.strip()] = val.strip()
        else:
            try:
                rows.append([float(tok) for tok in line.split()])
            except ValueError as exc:
                raise MatrixFormatError(f"{path}:{lineno}: bad numeric row: {exc}") from None
    if "rows" not in meta or "cols" not in meta:
        raise MatrixFormatError(f"{path}: missing rows/cols header")
    shape = (int(meta["rows"]), int(meta["cols"]))
    values = np.array(rows, dtype=float)
    if values.shape != shape:
        raise MatrixFormatError(
            f"{path}: header promises {shape}, body holds {values.shape}"
        )
    for key, val in meta.items():
        if key.endswith("unit") and val.lower() not in KNOWN_UNITS:
            warnings.warn(f"{path}: unknown unit string {val!r} for {key!r}", stacklevel=2)
    return values, meta


def export_heatmap(matrix: np.ndarray, path, colormap: str = "grayscale") -> None:
    """Render a matrix to a binary PGM (grayscale) or PPM (diverging) image.

    Grayscale maps [min, max] linearly onto 16-bit levels; a constant matrix
    renders mid-gray.  The diverging map is symmetric about zero (white),
    negative blue, positive red, 8-bit.
    """
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2:
        raise ValueError("heatmap export needs a 2D matrix")
    if not np.all(np.isfinite(matrix)):
        raise ValueError("heatmap export needs finite values")
    path = Path(path)
    h, w = matrix.shape
    if colormap == "grayscale":
        lo, hi = matrix.min(), matrix.max()
        if hi > lo:
            levels = np.round((matrix - lo) / (hi - lo) * 65535.0)
        else:
            levels = np.full(matrix.shape, 32768.0)
        data = levels.astype(">u2").tobytes()
        header = f"P5\n{w} {h}\n65535\n".encode()
    elif colormap == "diverging":
        m = np.abs(matrix).max()
        t = matrix / m if m > 0 else np.zeros_like(matrix)
        rgb = np.empty((h, w, 3))
        neg = np.clip(-t, 0.0, 1.0)
        pos = np.clip(t, 0.0, 1.0)
        rgb[..., 0] = 1.0 - neg
        rgb[..., 1] = 1.0 - neg - pos
        rgb[..., 2] = 1.0 - pos
        data = np.round(np.clip(rgb, 0.0, 1.0) * 255.0).astype("u1").tobytes()
        header = f"P6\n{w} {h}\n255\n".encode()
    else:
        raise ValueError(f"unknown colormap {colormap!r}")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(data)


def save_scan_result(result: ScanResult, directory) -> None:
    """Write a scan bundle: five matrix files plus a JSON config echo."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    axis_meta = {
        "delay_s_start_fs": result.delays_s[0],
        "delay_s_step_fs": result.delays_s[1] - result.delays_s[0],
        "delay_i_start_fs": result.delays_i[0],
        "delay_i_step_fs": result.delays_i[1] - result.delays_i[0],
        "axis_unit": "fs",
    }
    for name in ("raw", "background_estimate", "singles_s", "singles_i", "expected_truth"):
        save_matrix(directory / f"{name}.mat", getattr(result, name), axis_meta)
    info = {
        "dwell_s": result.dwell_s,
        "seed": result.seed,
        "delays_s": [float(result.delays_s[0]), float(result.delays_s[-1]), len(result.delays_s)],
        "delays_i": [float(result.delays_i[0]), float(result.delays_i[-1]), len(result.delays_i)],
        "config": asdict(result.config) if result.config is not None else None,
    }
    (directory / "scan.json").write_text(json.dumps(info, indent=2, sort_keys=True) + "\n")


def load_scan_result(directory) -> ScanResult:
    directory = Path(directory)
    info = json.loads((directory / "scan.json").read_text())
    mats = {}
    for name in ("raw", "background_estimate", "singles_s", "singles_i", "expected_truth"):
        mats[name], _ = load_matrix(directory / f"{name}.mat")
    lo, hi, n = info["delays_s"]
    delays_s = np.linspace(lo, hi, int(n))
    lo, hi, n = info["delays_i"]
    delays_i = np.linspace(lo, hi, int(n))
    config = ScanConfig(**info["config"]) if info.get("config") else None
    return ScanResult(
        raw=mats["raw"].astype(np.int64),
        background_estimate=mats["background_estimate"].astype(np.int64),
        singles_s=mats["singles_s"].astype(np.int64),
        singles_i=mats["singles_i"].astype(np.int64),
        expected_truth=mats["expected_truth"],
        delays_s=delays_s,
        delays_i=delays_i,
        dwell_s=info["dwell_s"],
        seed=info["seed"],
        config=config,
    )
