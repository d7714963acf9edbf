"""Raster, text-matrix and kernel-container I/O."""
from __future__ import annotations

import os
from pathlib import Path

import numpy as np
from PIL import Image

KERNEL_MAGIC = "QIUPTAB1"


def read_raster(path) -> np.ndarray:
    """Read an 8- or 16-bit grayscale PGM/PNG as ``uint8`` or ``uint16``."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"raster not found: {path}")
    with Image.open(path) as im:
        mode = im.mode
        a = np.asarray(im)
    if mode == "L":
        return a.astype(np.uint8)
    if mode in ("I;16", "I;16B", "I;16L", "I"):
        if a.min() < 0 or a.max() > 65535:
            raise ValueError(f"{path}: values outside the 16-bit range")
        return a.astype(np.uint16)
    if mode in ("1",):
        return (a.astype(np.uint8) * 255)
    raise ValueError(f"{path}: expected a grayscale raster, got mode {mode!r}")


def write_pgm16(path, values) -> None:
    a = np.asarray(values)
    if a.dtype != np.uint16:
        raise TypeError("write_pgm16 expects a uint16 array")
    Image.fromarray(a).save(Path(path), format="PPM")


def write_pgm8(path, values) -> None:
    a = np.asarray(values)
    if a.dtype != np.uint8:
        raise TypeError("write_pgm8 expects a uint8 array")
    Image.fromarray(a).save(Path(path), format="PPM")


def to_uint16(values, lo: float, hi: float) -> np.ndarray:
    """Map ``[lo, hi]`` linearly onto ``[0, 65535]`` (NaN -> 0)."""
    v = np.nan_to_num(np.asarray(values, dtype=float), nan=lo)
    q = np.rint((np.clip(v, lo, hi) - lo) / (hi - lo) * 65535)
    return q.astype(np.uint16)


def read_matrix(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"matrix file not found: {path}")
    return np.loadtxt(path, ndmin=2)


def write_matrix(path, values) -> None:
    np.savetxt(Path(path), np.asarray(values, dtype=float), fmt="%.17g")


def save_kernel(path, kernel) -> None:
    """Write a tabulated kernel: one text header line, then little-endian float64 data."""
    g = kernel.grid
    header = f"{KERNEL_MAGIC} nx={g.nx} ny={g.ny} pitch={g.pitch!r}\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(np.ascontiguousarray(kernel.values, dtype="<f8").tobytes())


def load_kernel(path):
    from .correlation import TabulatedKernel
    from .grid import FieldGrid

    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"kernel file not found: {path}")
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii", errors="replace").split()
        if not header or header[0] != KERNEL_MAGIC:
            raise ValueError(f"{path}: not a tabulated kernel container")
        fields = dict(item.split("=", 1) for item in header[1:])
        nx, ny, pitch = int(fields["nx"]), int(fields["ny"]), float(fields["pitch"])
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != (nx * ny) ** 2:
        raise ValueError(f"{path}: expected {(nx * ny) ** 2} values, found {data.size}")
    return TabulatedKernel(FieldGrid(nx, ny, pitch), data.reshape(ny, nx, ny, nx).astype(float))


def ensure_dir(path) -> Path:
    p = Path(path)
    os.makedirs(p, exist_ok=True)
    return p
