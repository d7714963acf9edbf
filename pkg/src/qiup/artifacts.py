"""On-disk fringe stacks and reconstruction outputs.

A stack directory holds ``frame_<k>.pgm`` (16-bit, value = rate * scale)
and ``manifest.txt``; the manifest carries the phase ladder, per-frame
scales, normalization, diagnostics and the full config echo, so it can be
fed back as ``--config``.
"""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from . import files
from .config import read_pairs
from .interferometer import FringeStack, RateMap
from .reconstruction import PlaneMap

MANIFEST = "manifest.txt"
FORMAT = "qiup-stack-1"


def frame_scale(values: np.ndarray) -> float:
    """Linear scale for 16-bit storage; integral when possible so integer rates stay exact."""
    vmax = float(np.max(values)) if values.size else 0.0
    if vmax <= 0:
        return 1.0
    s = 65535.0 / vmax
    return float(math.floor(s)) if s >= 1 else s


def save_stack(stack: FringeStack, directory, config_echo: str = "", diagnostics: dict = None) -> Path:
    d = files.ensure_dir(directory)
    g = stack.grid
    lines = [
        f"stack.format = {FORMAT}",
        f"stack.frames = {len(stack.frames)}",
        f"stack.grid = {g.nx} {g.ny} {g.pitch!r}",
        "stack.phi_in = " + ", ".join(repr(p) for p in stack.phi_in),
    ]
    norm = stack.frames[0].normalization
    if np.all(norm == 1.0):
        lines.append("stack.normalization = unit")
    else:
        files.write_matrix(d / "normalization.txt", norm)
        lines.append("stack.normalization = kernel-mass normalization.txt")
    noise = stack.noise or {"model": "off"}
    lines.append("stack.noise = " + " ".join(f"{k}={noise[k]}" for k in sorted(noise)))
    for k, f in enumerate(stack.frames):
        scale = frame_scale(f.values)
        name = f"frame_{k}.pgm"
        files.write_pgm16(d / name, files.to_uint16(f.values * scale / 65535.0, 0.0, 1.0))
        lines.append(f"stack.frame.{k}.file = {name}")
        lines.append(f"stack.frame.{k}.scale = {scale!r}")
    for key in sorted(diagnostics or {}):
        lines.append(f"diagnostics.{key} = {diagnostics[key]!r}")
    text = "\n".join(lines) + "\n" + config_echo
    (d / MANIFEST).write_text(text)
    return d


def load_stack(directory) -> tuple:
    """Read a stack directory; returns ``(FringeStack, manifest pairs, manifest text)``."""
    from .grid import FieldGrid

    d = Path(directory)
    path = d / MANIFEST
    if not path.exists():
        raise FileNotFoundError(f"no manifest in stack directory: {path}")
    text = path.read_text()
    try:
        pairs = read_pairs(text)
        if pairs.get("stack.format") != FORMAT:
            raise KeyError("stack.format")
        n = int(pairs["stack.frames"])
        nx, ny, pitch = pairs["stack.grid"].split()
        grid = FieldGrid(int(nx), int(ny), float(pitch))
        ladder = [float(v) for v in pairs["stack.phi_in"].replace(",", " ").split()]
        norm_spec = pairs["stack.normalization"].split()
    except (KeyError, ValueError) as exc:
        raise ValueError(f"corrupt manifest {path}: {exc}") from None
    if len(ladder) != n:
        raise ValueError(f"manifest lists {n} frames but {len(ladder)} phase steps")
    if n < 3:
        raise ValueError("need >= 3 phase steps")
    if norm_spec[0] == "unit":
        norm = np.ones(grid.shape)
    else:
        norm = files.read_matrix(d / norm_spec[1])
    frames = []
    for k in range(n):
        try:
            name = pairs[f"stack.frame.{k}.file"]
            scale = float(pairs[f"stack.frame.{k}.scale"])
        except (KeyError, ValueError):
            raise ValueError(f"corrupt manifest {path}: frame {k} entry missing") from None
        raw = files.read_raster(d / name).astype(float)
        if raw.shape != grid.shape:
            raise ValueError(f"{name}: shape {raw.shape} does not match manifest grid {grid.shape}")
        frames.append(RateMap(grid, raw / scale, norm, ladder[k]))
    noise = dict(item.split("=", 1) for item in pairs.get("stack.noise", "model=off").split())
    return FringeStack(tuple(frames), tuple(ladder), noise), pairs, text


def write_plane_map(directory, name: str, m: PlaneMap, lo: float, hi: float) -> None:
    d = Path(directory)
    vals = np.where(m.masked, np.nan, m.values)
    files.write_matrix(d / f"{name}.txt", vals)
    files.write_pgm16(d / f"{name}.pgm", files.to_uint16(vals, lo, hi))


def write_report(path, entries: list) -> None:
    Path(path).write_text("".join(f"{k} = {v}\n" for k, v in entries))
