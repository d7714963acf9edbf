"""Two-photon transverse state and its position-space joint density.

A kernel answers one question for the interferometer: the joint density
``P(rho_S, rho_I)`` of finding the signal at ``rho_S`` and the idler at
``rho_I`` on the source plane.  Three kinds exist:

* :class:`DeltaKernel` -- the maximally correlated limit, never sampled;
* :class:`GaussianKernel` -- double-Gaussian model, evaluated analytically;
* :class:`TabulatedKernel` -- a dense 4-D table on a source-plane grid.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import sparse

from .grid import FieldGrid, bilinear_operator, reciprocal_grid

NORM_TOL = 1e-6
MAX_PLANE_SAMPLES = 64 * 64
MAX_TABLE_ENTRIES = 2 ** 24


class KernelDiagnostics:
    """Thread-safe tally of kernel queries that fell outside a tabulated domain."""

    def __init__(self):
        self._lock = threading.Lock()
        self.queries = 0
        self.clipped = 0

    def record(self, queries: int, clipped: int) -> None:
        with self._lock:
            self.queries += int(queries)
            self.clipped += int(clipped)

    @property
    def clipped_fraction(self) -> float:
        return self.clipped / self.queries if self.queries else 0.0


# ---------------------------------------------------------------------------
# Biphoton amplitude
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BiphotonAmplitude:
    """Momentum-space amplitude ``C(q_S, q_I)``.

    ``values`` has shape ``(N, N)`` with ``N = qgrid.size``; rows index the
    flattened (raster-order) signal momentum, columns the idler momentum.
    """

    qgrid: FieldGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=complex, copy=True)
        n = self.qgrid.size
        if v.shape != (n, n):
            raise ValueError(f"amplitude must have shape {(n, n)}, got {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def norm(self) -> float:
        """Discrete normalization integral ``sum |C|^2 dq^4``."""
        return float(np.sum(np.abs(self.values) ** 2) * self.qgrid.pitch ** 4)

    @classmethod
    def normalized(cls, qgrid: FieldGrid, values) -> "BiphotonAmplitude":
        v = np.asarray(values, dtype=complex)
        s = np.sqrt(np.sum(np.abs(v) ** 2) * qgrid.pitch ** 4)
        if s == 0:
            raise ValueError("amplitude is identically zero")
        return cls(qgrid, v / s)


def _q_pairs(qgrid: FieldGrid):
    qx, qy = qgrid.coords()
    return qx.ravel(), qy.ravel()


def gaussian_amplitude(qgrid: FieldGrid, a: float, b: float) -> BiphotonAmplitude:
    """``C ~ exp(-|q_S + q_I|^2 / 4a^2) exp(-|q_S - q_I|^2 / 4b^2)``.

    In position space this gives ``P ~ exp(-a^2 |rho_S + rho_I|^2 / 2)
    exp(-b^2 |rho_S - rho_I|^2 / 2)``: standard deviations ``1/a`` for the
    sum coordinate and ``1/b`` for the difference coordinate.
    """
    qx, qy = _q_pairs(qgrid)
    spx = qx[:, None] + qx[None, :]
    spy = qy[:, None] + qy[None, :]
    smx = qx[:, None] - qx[None, :]
    smy = qy[:, None] - qy[None, :]
    c = np.exp(-(spx ** 2 + spy ** 2) / (4 * a ** 2) - (smx ** 2 + smy ** 2) / (4 * b ** 2))
    return BiphotonAmplitude.normalized(qgrid, c)


def separable_amplitude(qgrid: FieldGrid, f, g) -> BiphotonAmplitude:
    """Uncorrelated amplitude ``C(q_S, q_I) = f(q_S) g(q_I)`` from two ``(ny, nx)`` maps."""
    f = np.asarray(f, dtype=complex).ravel()
    g = np.asarray(g, dtype=complex).ravel()
    return BiphotonAmplitude.normalized(qgrid, np.outer(f, g))


def random_amplitude(qgrid: FieldGrid, rng: np.random.Generator) -> BiphotonAmplitude:
    n = qgrid.size
    c = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return BiphotonAmplitude.normalized(qgrid, c)


def _phase_matrix(coords: np.ndarray, q: np.ndarray) -> np.ndarray:
    return np.exp(1j * np.outer(coords, q))


def position_amplitude(amp: BiphotonAmplitude, outgrid: FieldGrid) -> np.ndarray:
    """``sum C exp(i (q_S.rho_S + q_I.rho_I)) dq^4`` as a ``(ny, nx, ny, nx)`` array."""
    q = amp.qgrid
    expected = reciprocal_grid(q)
    if outgrid.shape != q.shape or not np.isclose(outgrid.pitch, expected.pitch, rtol=1e-9, atol=0):
        raise ValueError(
            f"output grid {outgrid} is not the reciprocal lattice of {q} "
            f"(need shape {q.shape}, pitch {expected.pitch})")
    ex = _phase_matrix(outgrid.x, q.x)
    ey = _phase_matrix(outgrid.y, q.y)
    c4 = amp.values.reshape(q.ny, q.nx, q.ny, q.nx)
    psi = np.einsum("ab,cd,ef,gh,bdfh->aceg", ey, ex, ey, ex, c4, optimize=True)
    return psi * q.pitch ** 4


def position_pdf_from_amplitude(amp: BiphotonAmplitude, outgrid: FieldGrid) -> "TabulatedKernel":
    if abs(amp.norm() - 1.0) > NORM_TOL:
        raise ValueError(f"amplitude is not normalized (norm = {amp.norm():.9g})")
    p = np.abs(position_amplitude(amp, outgrid)) ** 2
    return TabulatedKernel.normalized(outgrid, p)


# ---------------------------------------------------------------------------
# Kernels
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DeltaKernel:
    """``P ~ delta(rho_S - eta rho_I)``; consumed symbolically, never sampled."""

    eta: float = 1.0

    def __post_init__(self):
        if not np.isfinite(self.eta):
            raise ValueError(f"eta must be finite, got {self.eta}")


@dataclass(frozen=True)
class GaussianKernel:
    """Double-Gaussian joint density.

    ``P ~ exp(-|rho_S - eta rho_I|^2 / 2 sigma_minus^2)
    * exp(-|rho_S + eta rho_I|^2 / 2 sigma_plus^2)``, normalized over the
    infinite plane.  Small ``sigma_minus`` approaches :class:`DeltaKernel`.
    """

    eta: float
    sigma_minus: float
    sigma_plus: float

    def __post_init__(self):
        if not (self.sigma_minus > 0 and self.sigma_plus > 0):
            raise ValueError("sigma_minus and sigma_plus must be positive")
        if self.eta == 0 or not np.isfinite(self.eta):
            raise ValueError("Gaussian kernel needs a finite nonzero eta")

    @property
    def peak(self) -> float:
        return (abs(self.eta) / (np.pi * self.sigma_minus * self.sigma_plus)) ** 2

    def axis_factor(self, s, i) -> np.ndarray:
        """Unnormalized one-axis factor, outer over 1-D ``s`` and ``i``."""
        s = np.asarray(s, dtype=float)[:, None]
        i = np.asarray(i, dtype=float)[None, :]
        u = s - self.eta * i
        v = s + self.eta * i
        return np.exp(-u ** 2 / (2 * self.sigma_minus ** 2) - v ** 2 / (2 * self.sigma_plus ** 2))

    def density(self, xs, ys, xi, yi) -> np.ndarray:
        ux = xs - self.eta * xi
        uy = ys - self.eta * yi
        vx = xs + self.eta * xi
        vy = ys + self.eta * yi
        e = (ux ** 2 + uy ** 2) / (2 * self.sigma_minus ** 2) + (vx ** 2 + vy ** 2) / (2 * self.sigma_plus ** 2)
        return self.peak * np.exp(-e)

    def signal_marginal(self, xs, ys) -> np.ndarray:
        """``int P d rho_I`` at signal points, in closed form."""
        a = 1.0 / self.sigma_minus ** 2
        b = 1.0 / self.sigma_plus ** 2
        width = np.sqrt(2 * np.pi / ((a + b) * self.eta ** 2))
        k = 2 * a * b / (a + b)
        r2 = np.asarray(xs) ** 2 + np.asarray(ys) ** 2
        return self.peak * width ** 2 * np.exp(-k * r2)

    def tabulate(self, grid: FieldGrid) -> "TabulatedKernel":
        """Sample on ``grid`` for both photons, normalized on that domain."""
        fx = self.axis_factor(grid.x, grid.x)
        fy = self.axis_factor(grid.y, grid.y)
        p = fy[:, None, :, None] * fx[None, :, None, :]
        return TabulatedKernel.normalized(grid, p)

    def contract(self, sx, sy, ix, iy, weights):
        """Quadrature sums ``sum_o P(s_c, i_o) w_o`` over a rectilinear object lattice.

        ``sx``/``sy`` are camera-lattice axes and ``ix``/``iy`` object-lattice
        axes, all already mapped to source-plane coordinates.  ``weights`` has
        shape ``(len(iy), len(ix), m)``.  Returns ``(len(sy), len(sx), m)``.
        """
        gx = self.axis_factor(sx, ix)
        gy = self.axis_factor(sy, iy)
        w = np.asarray(weights)
        out = np.einsum("ca,abm,db->cdm", gy, w, gx, optimize=True)
        return self.peak * out, 0


@dataclass(frozen=True)
class TabulatedKernel:
    """Dense joint density on ``grid`` (shared by both photons).

    ``values`` has shape ``(ny, nx, ny, nx)`` indexed
    ``[signal_y, signal_x, idler_y, idler_x]`` and integrates to one.
    """

    grid: FieldGrid
    values: np.ndarray

    def __post_init__(self):
        g = self.grid
        if g.size > MAX_PLANE_SAMPLES or g.size ** 2 > MAX_TABLE_ENTRIES:
            raise ValueError(f"tabulated kernel grid {g.shape} exceeds the 64x64 per-plane cap")
        v = np.array(self.values, dtype=float, copy=True)
        if v.shape != (g.ny, g.nx, g.ny, g.nx):
            raise ValueError(f"kernel values must have shape {(g.ny, g.nx, g.ny, g.nx)}, got {v.shape}")
        if not np.all(np.isfinite(v)) or v.min() < 0:
            raise ValueError("kernel values must be finite and nonnegative")
        total = v.sum() * g.pitch ** 4
        if abs(total - 1.0) > NORM_TOL:
            raise ValueError(f"tabulated kernel integrates to {total:.9g}, not 1")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def normalized(cls, grid: FieldGrid, values) -> "TabulatedKernel":
        v = np.asarray(values, dtype=float)
        total = v.sum() * grid.pitch ** 4
        if not total > 0:
            raise ValueError("kernel has no mass")
        return cls(grid, v / total)

    @property
    def matrix(self) -> np.ndarray:
        """Values as a ``(N_signal, N_idler)`` matrix."""
        return self.values.reshape(self.grid.size, self.grid.size)

    def integral(self) -> float:
        return float(self.values.sum() * self.grid.pitch ** 4)

    def signal_marginal_table(self) -> np.ndarray:
        return self.values.sum(axis=(2, 3)) * self.grid.pitch ** 2

    def idler_marginal_table(self) -> np.ndarray:
        return self.values.sum(axis=(0, 1)) * self.grid.pitch ** 2

    def signal_marginal(self, xs, ys) -> np.ndarray:
        op, _ = bilinear_operator(self.grid, xs, ys)
        return (op @ self.signal_marginal_table().ravel()).reshape(np.shape(xs))

    def contract(self, sx, sy, ix, iy, weights):
        """Same contract as :meth:`GaussianKernel.contract`.

        Multilinear interpolation factorizes into a signal-side and an
        idler-side sparse operator, so no pairwise table lookups are needed.
        The second return value counts off-domain (signal, idler) pairs.
        """
        SX, SY = np.meshgrid(sx, sy, indexing="xy")
        IX, IY = np.meshgrid(ix, iy, indexing="xy")
        ws, s_in = bilinear_operator(self.grid, SX, SY)
        wi, i_in = bilinear_operator(self.grid, IX, IY)
        w = np.asarray(weights).reshape(IX.size, -1)
        idler_side = wi.T @ w
        out = ws @ (self.matrix @ idler_side)
        n_obj = IX.size
        clipped = int(np.sum(~s_in) * n_obj + np.sum(s_in) * np.sum(~i_in))
        return out.reshape(len(sy), len(sx), -1), clipped


CorrelationKernel = Union[DeltaKernel, GaussianKernel, TabulatedKernel]


def gaussian_kernel(eta: float = 1.0, sigma_minus: float = 1.0, sigma_plus: float = 10.0) -> GaussianKernel:
    return GaussianKernel(float(eta), float(sigma_minus), float(sigma_plus))


def evaluate_kernel(k: CorrelationKernel, rho_s, rho_i, diagnostics: KernelDiagnostics = None):
    """Joint density at signal/idler source-plane points (trailing axis of length 2).

    Tabulated kernels interpolate multilinearly; queries outside the sampled
    domain return 0 and are tallied in ``diagnostics``.
    """
    if isinstance(k, DeltaKernel):
        raise TypeError("delta kernels are symbolic; use the delta-limit rate path")
    rs = np.asarray(rho_s, dtype=float)
    ri = np.asarray(rho_i, dtype=float)
    rs, ri = np.broadcast_arrays(rs, ri)
    if rs.shape[-1] != 2:
        raise ValueError("coordinates need a trailing axis of length 2")
    shape = rs.shape[:-1]
    if isinstance(k, GaussianKernel):
        out = k.density(rs[..., 0], rs[..., 1], ri[..., 0], ri[..., 1])
        if diagnostics is not None:
            diagnostics.record(out.size, 0)
        return out[()] if out.ndim == 0 else out
    ws, s_in = bilinear_operator(k.grid, rs[..., 0], rs[..., 1])
    wi, i_in = bilinear_operator(k.grid, ri[..., 0], ri[..., 1])
    rows = sparse.csr_matrix(ws @ k.matrix)
    out = np.asarray(rows.multiply(wi).sum(axis=1)).ravel()
    out = np.maximum(out, 0.0).reshape(shape)
    if diagnostics is not None:
        diagnostics.record(out.size, np.sum(~(s_in & i_in)))
    return out[()] if out.ndim == 0 else out


def mutual_information(kernel: TabulatedKernel) -> float:
    """``sum P log(P / (P_S P_I))`` over the lattice; zero for uncorrelated photons."""
    g = kernel.grid
    d2 = g.pitch ** 2
    p = kernel.matrix * d2 * d2
    ps = p.sum(axis=1)
    pi = p.sum(axis=0)
    prod = np.outer(ps, pi)
    nz = p > 0
    return float(np.sum(p[nz] * np.log(p[nz] / prod[nz])))
