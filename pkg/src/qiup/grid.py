"""Sampled transverse planes, plane-to-plane coordinate maps and object masks.

All 2-D maps are stored as arrays of shape ``(ny, nx)`` (raster order): the
first index selects ``y``, the second ``x``.  Sample centres sit at
``(i - (n - 1) / 2) * pitch`` on each axis, so even-sized grids have no sample
on the optical axis.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy import sparse

# Fractional indices closer than this to an integer are treated as lattice
# points, so lattice queries return stored values exactly.
SNAP_TOL = 1e-9


def _frozen(a, dtype=float) -> np.ndarray:
    out = np.array(a, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class FieldGrid:
    """Uniform centred lattice with the same pitch on both axes."""

    nx: int
    ny: int
    pitch: float

    def __post_init__(self):
        if int(self.nx) != self.nx or int(self.ny) != self.ny:
            raise ValueError(f"grid dimensions must be integers, got ({self.nx}, {self.ny})")
        if self.nx < 2 or self.ny < 2:
            raise ValueError(f"grid needs at least 2 samples per axis, got ({self.nx}, {self.ny})")
        if not np.isfinite(self.pitch) or self.pitch <= 0:
            raise ValueError(f"pitch must be positive, got {self.pitch}")
        object.__setattr__(self, "nx", int(self.nx))
        object.__setattr__(self, "ny", int(self.ny))
        object.__setattr__(self, "pitch", float(self.pitch))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    @property
    def size(self) -> int:
        return self.nx * self.ny

    @property
    def origin(self) -> tuple[float, float]:
        """Physical coordinate of sample (0, 0)."""
        return (-(self.nx - 1) / 2 * self.pitch, -(self.ny - 1) / 2 * self.pitch)

    @property
    def extent(self) -> tuple[float, float]:
        return (self.nx * self.pitch, self.ny * self.pitch)

    @property
    def x(self) -> np.ndarray:
        return (np.arange(self.nx) - (self.nx - 1) / 2) * self.pitch

    @property
    def y(self) -> np.ndarray:
        return (np.arange(self.ny) - (self.ny - 1) / 2) * self.pitch

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(X, Y)`` coordinate arrays of shape ``(ny, nx)``."""
        return np.meshgrid(self.x, self.y, indexing="xy")

    def physical_coord(self, i, j) -> tuple[float, float]:
        x0, y0 = self.origin
        return (x0 + i * self.pitch, y0 + j * self.pitch)

    def nearest_index(self, x, y) -> tuple[np.ndarray, np.ndarray]:
        x0, y0 = self.origin
        i = np.rint((np.asarray(x) - x0) / self.pitch).astype(int)
        j = np.rint((np.asarray(y) - y0) / self.pitch).astype(int)
        return i, j

    def scaled(self, factor: float) -> "FieldGrid":
        """Same lattice with the pitch multiplied by ``|factor|``."""
        return FieldGrid(self.nx, self.ny, self.pitch * abs(factor))

    def padded(self, n: int) -> "FieldGrid":
        return FieldGrid(self.nx + 2 * n, self.ny + 2 * n, self.pitch)


def make_grid(nx: int, ny: int, pitch: float) -> FieldGrid:
    return FieldGrid(nx, ny, pitch)


def reciprocal_grid(grid: FieldGrid) -> FieldGrid:
    """Lattice conjugate to ``grid`` under the discrete Fourier transform.

    Only square grids have a reciprocal lattice with a single pitch.
    """
    if grid.nx != grid.ny:
        raise ValueError("reciprocal lattice needs a square grid (nx == ny)")
    return FieldGrid(grid.nx, grid.ny, 2 * np.pi / (grid.nx * grid.pitch))


# ---------------------------------------------------------------------------
# Bilinear machinery
# ---------------------------------------------------------------------------

def fractional_index(coord, start: float, pitch: float) -> np.ndarray:
    f = (np.asarray(coord, dtype=float) - start) / pitch
    r = np.rint(f)
    return np.where(np.abs(f - r) < SNAP_TOL, r, f)


def _axis_weights(f: np.ndarray, n: int, clamp: bool):
    """Lower corner index, upper weight and in-domain flag along one axis."""
    inside = (f >= 0) & (f <= n - 1)
    if clamp:
        f = np.clip(f, 0, n - 1)
    i0 = np.clip(np.floor(f).astype(np.int64), 0, n - 2)
    t = f - i0
    return i0, t, inside


def bilinear_operator(grid: FieldGrid, x, y):
    """Sparse ``(n_query, grid.size)`` bilinear interpolation matrix.

    Rows for queries outside the hull of sample centres are all zero.
    Returns the matrix and the boolean in-domain flags.
    """
    x = np.ravel(np.asarray(x, dtype=float))
    y = np.ravel(np.asarray(y, dtype=float))
    x0, y0 = grid.origin
    ix, tx, inx = _axis_weights(fractional_index(x, x0, grid.pitch), grid.nx, clamp=False)
    iy, ty, iny = _axis_weights(fractional_index(y, y0, grid.pitch), grid.ny, clamp=False)
    inside = inx & iny
    rows = np.repeat(np.arange(x.size), 4)
    cols = np.stack([
        iy * grid.nx + ix,
        iy * grid.nx + ix + 1,
        (iy + 1) * grid.nx + ix,
        (iy + 1) * grid.nx + ix + 1,
    ], axis=1)
    w = np.stack([
        (1 - tx) * (1 - ty),
        tx * (1 - ty),
        (1 - tx) * ty,
        tx * ty,
    ], axis=1)
    w[~inside] = 0.0
    op = sparse.csr_matrix((w.ravel(), (rows, cols.ravel())), shape=(x.size, grid.size))
    return op, inside


def sample_bilinear(values: np.ndarray, grid: FieldGrid, x, y) -> np.ndarray:
    """Edge-clamped bilinear interpolation of a ``(ny, nx)`` map."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    x0, y0 = grid.origin
    ix, tx, _ = _axis_weights(fractional_index(x, x0, grid.pitch), grid.nx, clamp=True)
    iy, ty, _ = _axis_weights(fractional_index(y, y0, grid.pitch), grid.ny, clamp=True)
    v = np.asarray(values)
    return ((1 - ty) * ((1 - tx) * v[iy, ix] + tx * v[iy, ix + 1])
            + ty * ((1 - tx) * v[iy + 1, ix] + tx * v[iy + 1, ix + 1]))


def within_raster(grid: FieldGrid, x, y) -> np.ndarray:
    """True where ``(x, y)`` lies inside the raster footprint (centres +- pitch/2)."""
    hx = grid.nx * grid.pitch / 2
    hy = grid.ny * grid.pitch / 2
    eps = SNAP_TOL * grid.pitch
    return (np.abs(x) <= hx + eps) & (np.abs(y) <= hy + eps)


# ---------------------------------------------------------------------------
# Phase screens
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PhaseScreen:
    """Real phase map (radians) sampled on ``grid``; edge-clamped off grid."""

    grid: FieldGrid
    values: np.ndarray

    def __post_init__(self):
        v = _frozen(self.values)
        if v.shape != self.grid.shape:
            raise ValueError(f"phase map shape {v.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("phase map contains non-finite values")
        object.__setattr__(self, "values", v)

    def __call__(self, x, y) -> np.ndarray:
        return sample_bilinear(self.values, self.grid, x, y)

    def shifted(self, offset: float) -> "PhaseScreen":
        return PhaseScreen(self.grid, self.values + offset)


PhaseLike = Union[float, PhaseScreen]


def evaluate_phase(phase: PhaseLike, x, y) -> np.ndarray:
    """Evaluate a constant or sampled phase at coordinates ``(x, y)``."""
    if isinstance(phase, PhaseScreen):
        return phase(x, y)
    return np.full(np.broadcast(np.asarray(x), np.asarray(y)).shape, float(phase))


def shift_phase(phase: PhaseLike, offset: float) -> PhaseLike:
    if isinstance(phase, PhaseScreen):
        return phase.shifted(offset)
    return float(phase) + offset


# ---------------------------------------------------------------------------
# Plane mappings
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PlaneMapping:
    """Signal magnification ``m_s``, idler magnification ``m_i`` and correlation scale ``eta``.

    Negative magnifications invert coordinates.
    """

    m_s: float = 1.0
    m_i: float = 1.0
    eta: float = 1.0

    def __post_init__(self):
        for name in ("m_s", "m_i"):
            v = getattr(self, name)
            if v == 0 or not np.isfinite(v):
                raise ValueError(f"{name} must be finite and nonzero, got {v}")
        if not np.isfinite(self.eta):
            raise ValueError(f"eta must be finite, got {self.eta}")

    @property
    def magnification(self) -> float:
        """Predicted image magnification ``eta * m_s / m_i``."""
        return self.eta * self.m_s / self.m_i

    def camera_to_object(self, rho_c):
        if self.eta == 0:
            raise ValueError("eta = 0 has no camera-to-object map")
        return np.asarray(rho_c, dtype=float) * (self.m_i / (self.eta * self.m_s))

    def object_to_camera(self, rho_o):
        return np.asarray(rho_o, dtype=float) * self.magnification


def map_camera_to_source(rho_c, mapping: PlaneMapping) -> np.ndarray:
    return np.asarray(rho_c, dtype=float) / mapping.m_s


def map_object_to_idler(rho_o, mapping: PlaneMapping) -> np.ndarray:
    return np.asarray(rho_o, dtype=float) / mapping.m_i


# ---------------------------------------------------------------------------
# Object masks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ObjectMask:
    """Complex amplitude transmission ``|T| exp(i phi_T)`` on the object plane.

    Outside the raster footprint the object is a clear aperture
    (``|T| = 1``, ``phi_T = 0``).
    """

    grid: FieldGrid
    amplitude: np.ndarray
    phase: np.ndarray = field(default=None)

    def __post_init__(self):
        amp = _frozen(self.amplitude)
        if amp.shape != self.grid.shape:
            raise ValueError(f"amplitude shape {amp.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(amp)) or amp.min() < 0 or amp.max() > 1:
            raise ValueError("amplitude transmission must lie in [0, 1]")
        ph = np.zeros(amp.shape) if self.phase is None else self.phase
        ph = _frozen(ph)
        if ph.shape != self.grid.shape:
            raise ValueError(f"phase shape {ph.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(ph)):
            raise ValueError("phase map contains non-finite values")
        object.__setattr__(self, "amplitude", amp)
        object.__setattr__(self, "phase", ph)

    @property
    def reflection(self) -> np.ndarray:
        """Vacuum-port amplitude ``sqrt(1 - |T|^2)``."""
        return np.sqrt(np.clip(1.0 - self.amplitude ** 2, 0.0, None))

    @property
    def transmission(self) -> np.ndarray:
        return self.amplitude * np.exp(1j * self.phase)

    def sample(self, x, y) -> tuple[np.ndarray, np.ndarray]:
        """Bilinear ``(|T|, phi_T)`` at object-plane points, clear outside the raster."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        inside = within_raster(self.grid, x, y)
        amp = np.where(inside, sample_bilinear(self.amplitude, self.grid, x, y), 1.0)
        ph = np.where(inside, sample_bilinear(self.phase, self.grid, x, y), 0.0)
        return amp, ph

    def padded(self, n: int) -> "ObjectMask":
        """Extend the raster by ``n`` clear-aperture samples on every side."""
        if n == 0:
            return self
        amp = np.pad(self.amplitude, n, constant_values=1.0)
        ph = np.pad(self.phase, n, constant_values=0.0)
        return ObjectMask(self.grid.padded(n), amp, ph)

    def with_global_phase(self, theta: float) -> "ObjectMask":
        return ObjectMask(self.grid, self.amplitude, self.phase + theta)


def _scale_raster(raster) -> np.ndarray:
    a = np.asarray(raster)
    if a.dtype == np.uint8:
        return a.astype(float) / 255.0
    if a.dtype == np.uint16:
        return a.astype(float) / 65535.0
    if np.issubdtype(a.dtype, np.integer):
        raise ValueError(f"unsupported integer raster type {a.dtype}; use 8- or 16-bit")
    return a.astype(float)


def load_mask(amplitude_image, phase_image=None, grid: FieldGrid = None) -> ObjectMask:
    """Build an :class:`ObjectMask` from rasters or file paths.

    ``amplitude_image`` is an 8/16-bit grayscale raster (scaled linearly to
    [0, 1]), a float array already in [0, 1], or a path to a PGM/PNG file.
    ``phase_image`` is a float array or a path to a text matrix in radians;
    when omitted the object is purely absorptive.  ``grid`` defaults to a
    unit-pitch grid matching the raster.
    """
    from . import files

    if isinstance(amplitude_image, (str, bytes)) or hasattr(amplitude_image, "__fspath__"):
        amplitude_image = files.read_raster(amplitude_image)
    amp = _scale_raster(amplitude_image)
    if amp.ndim != 2:
        raise ValueError(f"amplitude raster must be 2-D, got shape {amp.shape}")
    if grid is None:
        grid = FieldGrid(amp.shape[1], amp.shape[0], 1.0)
    if amp.shape != grid.shape:
        raise ValueError(f"amplitude raster shape {amp.shape} does not match grid {grid.shape}")
    phase = None
    if phase_image is not None:
        if isinstance(phase_image, (str, bytes)) or hasattr(phase_image, "__fspath__"):
            phase_image = files.read_matrix(phase_image)
        phase = np.asarray(phase_image, dtype=float)
        if phase.shape != grid.shape:
            raise ValueError(f"phase raster shape {phase.shape} does not match grid {grid.shape}")
    return ObjectMask(grid, amp, phase)
