"""Camera counting-rate maps for the induced-coherence imaging interferometer.

Every rate map is evaluated in normalized units: the object-plane integral
is divided by the per-pixel kernel mass, so a clear object with zero phases
gives ``|a1|^2 + |a2|^2 + 2 |a1| |a2| cos(phi_in)`` and the delta-limit and
finite-correlation paths share one scale.

Internally both paths reduce to a complex *coherence map*
``mu(rho_c) = <|T| exp(-i psi)>_P`` (``psi`` collects the object and idler
imaging phases), from which any frame follows as::

    R = |a1|^2 + |a2|^2 + 2 |a1| |a2| Re[exp(i (phi_in + phi_s)) mu]
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from ._parallel import map_rows
from .correlation import CorrelationKernel, DeltaKernel, GaussianKernel, TabulatedKernel
from .grid import FieldGrid, ObjectMask, PhaseLike, PlaneMapping, evaluate_phase

LOW_MASS_REL = 1e-12


@dataclass(frozen=True)
class InterferometerConfig:
    """Source amplitudes, interferometric phase and imaging-system phases.

    ``phi_s`` lives on the camera plane, ``phi_i`` on the object plane and
    ``phi_i_prime`` on the idler-source plane.  The wavelength fields are
    metadata only: nothing in the rate formula depends on them.
    """

    a1_mag: float = 1 / math.sqrt(2)
    a2_mag: float = 1 / math.sqrt(2)
    phi_in: float = 0.0
    phi_s: PhaseLike = 0.0
    phi_i: PhaseLike = 0.0
    phi_i_prime: PhaseLike = 0.0
    mapping: PlaneMapping = field(default_factory=PlaneMapping)
    signal_wavelength: Optional[float] = None
    idler_wavelength: Optional[float] = None

    def __post_init__(self):
        if self.a1_mag < 0 or self.a2_mag < 0:
            raise ValueError("source amplitudes must be nonnegative magnitudes")
        total = self.a1_mag ** 2 + self.a2_mag ** 2
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"|a1|^2 + |a2|^2 must be 1, got {total!r}")

    @property
    def incoherent(self) -> float:
        return self.a1_mag ** 2 + self.a2_mag ** 2

    @property
    def cross(self) -> float:
        return 2 * self.a1_mag * self.a2_mag

    def with_phi_in(self, phi_in: float) -> "InterferometerConfig":
        return replace(self, phi_in=float(phi_in))


@dataclass(frozen=True)
class RateMap:
    """Normalized counting rate on the camera grid.

    ``normalization`` holds the per-pixel kernel mass the raw quadrature was
    divided by (ones for the delta path); ``raw`` undoes the division.
    """

    grid: FieldGrid
    values: np.ndarray
    normalization: np.ndarray
    phi_in: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    @property
    def raw(self) -> np.ndarray:
        return self.values * self.normalization


@dataclass(frozen=True)
class FringeStack:
    frames: tuple
    phi_in: tuple
    noise: dict = field(default_factory=lambda: {"model": "off"})

    def __post_init__(self):
        frames = tuple(self.frames)
        ladder = tuple(float(p) for p in self.phi_in)
        if len(frames) != len(ladder):
            raise ValueError(f"{len(frames)} frames but {len(ladder)} phase steps")
        if len(frames) < 3:
            raise ValueError("need >= 3 phase steps")
        if _distinct_mod_2pi(ladder) < len(ladder):
            raise ValueError("phase steps must be distinct modulo 2*pi")
        g = frames[0].grid
        if any(f.grid != g for f in frames):
            raise ValueError("all frames must share one camera grid")
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "phi_in", ladder)

    @property
    def grid(self) -> FieldGrid:
        return self.frames[0].grid

    def values(self) -> np.ndarray:
        return np.stack([f.values for f in self.frames])


def _distinct_mod_2pi(values, tol: float = 1e-9) -> int:
    z = np.exp(1j * np.asarray(values, dtype=float))
    kept = []
    for v in z:
        if all(abs(v - k) > tol for k in kept):
            kept.append(v)
    return len(kept)


@dataclass(frozen=True)
class CoherenceMap:
    grid: FieldGrid
    mu: np.ndarray
    mass: np.ndarray
    diagnostics: dict

    def rate(self, cfg: InterferometerConfig, phi_in: float | None = None) -> RateMap:
        phi_in = cfg.phi_in if phi_in is None else float(phi_in)
        X, Y = self.grid.coords()
        carrier = np.exp(1j * (phi_in + evaluate_phase(cfg.phi_s, X, Y)))
        values = cfg.incoherent + cfg.cross * np.real(carrier * self.mu)
        values = np.maximum(values, 0.0)
        low = self.diagnostics.get("low_mass_mask")
        if low is not None and low.any():
            values = np.where(low, 0.0, values)
        diag = {k: v for k, v in self.diagnostics.items() if k != "low_mass_mask"}
        return RateMap(self.grid, values, self.mass, phi_in, diag)


def _object_weights(mask: ObjectMask, cfg: InterferometerConfig) -> np.ndarray:
    OX, OY = mask.grid.coords()
    m_i = cfg.mapping.m_i
    psi = (evaluate_phase(cfg.phi_i, OX, OY)
           + evaluate_phase(cfg.phi_i_prime, OX / m_i, OY / m_i)
           + mask.phase)
    return mask.amplitude * np.exp(-1j * psi)


def coherence_general(mask: ObjectMask, kernel: CorrelationKernel, cfg: InterferometerConfig,
                      camera: FieldGrid, pad: int = 0, workers: int | None = None) -> CoherenceMap:
    """Midpoint quadrature over the object lattice for a sampled kernel.

    ``pad`` extends the object lattice with clear-aperture samples so the
    kernel is not truncated at the raster edge.
    """
    if isinstance(kernel, DeltaKernel):
        raise TypeError("delta kernels use rate_map_delta")
    if not isinstance(kernel, (GaussianKernel, TabulatedKernel)):
        raise TypeError(f"unsupported kernel {type(kernel).__name__}")
    obj = mask.padded(int(pad))
    m_s, m_i = cfg.mapping.m_s, cfg.mapping.m_i
    w = _object_weights(obj, cfg)
    da = obj.grid.pitch ** 2
    weights = np.stack([np.ones_like(w.real), w.real, w.imag], axis=-1) * da
    sx, sy = camera.x / m_s, camera.y / m_s
    ix, iy = obj.grid.x / m_i, obj.grid.y / m_i

    def work(rows):
        return kernel.contract(sx, sy[rows], ix, iy, weights)

    parts = map_rows(work, camera.ny, workers)
    sums = np.concatenate([p[0] for p in parts], axis=0)
    clipped_pairs = sum(p[1] for p in parts)
    mass = sums[..., 0]
    s = sums[..., 1] + 1j * sums[..., 2]

    peak = mass.max() if mass.size else 0.0
    low = mass <= LOW_MASS_REL * peak if peak > 0 else np.ones(mass.shape, bool)
    mu = np.zeros(mass.shape, complex)
    mu[~low] = s[~low] / mass[~low]

    SX, SY = np.meshgrid(sx, sy, indexing="xy")
    full = kernel.signal_marginal(SX, SY) * m_i ** 2
    total_full = float(full.sum())
    missing = 1.0 - float(mass.sum()) / total_full if total_full > 0 else 0.0
    diagnostics = {
        "low_mass_pixels": int(low.sum()),
        "low_mass_mask": low,
        "clipped_mass_fraction": max(missing, 0.0),
        "clipped_pair_fraction": clipped_pairs / (camera.size * obj.grid.size),
    }
    return CoherenceMap(camera, mu, mass, diagnostics)


def coherence_delta(mask: ObjectMask, eta, cfg: InterferometerConfig, camera: FieldGrid,
                    workers: int | None = None) -> CoherenceMap:
    """Point-to-point map ``rho_o = (m_i / (eta m_s)) rho_c`` with bilinear mask lookup."""
    eta = eta.eta if isinstance(eta, DeltaKernel) else float(eta)
    if eta == 0:
        raise ValueError("eta must be nonzero for the delta-limit rate")
    scale = cfg.mapping.m_i / (eta * cfg.mapping.m_s)
    X, Y = camera.coords()
    m_i = cfg.mapping.m_i

    def work(rows):
        ox, oy = X[rows] * scale, Y[rows] * scale
        amp, phase_t = mask.sample(ox, oy)
        psi = (evaluate_phase(cfg.phi_i, ox, oy)
               + evaluate_phase(cfg.phi_i_prime, ox / m_i, oy / m_i)
               + phase_t)
        return amp * np.exp(-1j * psi)

    mu = np.concatenate(map_rows(work, camera.ny, workers), axis=0)
    return CoherenceMap(camera, mu, np.ones(camera.shape), {"low_mass_pixels": 0})


def rate_map_general(mask: ObjectMask, kernel: CorrelationKernel, cfg: InterferometerConfig,
                     camera: FieldGrid, pad: int = 0, workers: int | None = None) -> RateMap:
    """Counting rate for a Gaussian or tabulated kernel, normalized by kernel mass."""
    return coherence_general(mask, kernel, cfg, camera, pad, workers).rate(cfg)


def rate_map_delta(mask: ObjectMask, eta, cfg: InterferometerConfig, camera: FieldGrid,
                   workers: int | None = None) -> RateMap:
    """Closed-form counting rate for maximally correlated photons."""
    return coherence_delta(mask, eta, cfg, camera, workers).rate(cfg)


def coherence(mask, kernel, cfg, camera, pad: int = 0, workers: int | None = None) -> CoherenceMap:
    if isinstance(kernel, DeltaKernel):
        return coherence_delta(mask, kernel, cfg, camera, workers)
    return coherence_general(mask, kernel, cfg, camera, pad, workers)


def fringe_stack(mask: ObjectMask, kernel: CorrelationKernel, cfg: InterferometerConfig,
                 camera: FieldGrid, phi_in_values: Sequence[float], pad: int = 0,
                 workers: int | None = None) -> FringeStack:
    """One rate map per interferometric phase in ``phi_in_values``.

    The object-plane quadrature is done once; frames differ only in the
    carrier phase.
    """
    ladder = [float(p) for p in phi_in_values]
    if len(ladder) < 3:
        raise ValueError("need >= 3 phase steps")
    mu = coherence(mask, kernel, cfg, camera, pad, workers)
    frames = [mu.rate(cfg, p) for p in ladder]
    return FringeStack(tuple(frames), tuple(ladder))


def add_shot_noise(stack: FringeStack, mean_counts_per_unit_rate: float, seed: int) -> FringeStack:
    """Replace each rate ``r`` by ``Poisson(r * scale) / scale``.

    Frame ``k`` draws from a generator seeded by ``(seed, k)`` in raster
    order, so output depends only on the seed.
    """
    scale = float(mean_counts_per_unit_rate)
    if not scale > 0:
        raise ValueError(f"noise scale must be positive, got {mean_counts_per_unit_rate}")
    frames = []
    for k, f in enumerate(stack.frames):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), k])))
        lam = np.maximum(f.values, 0.0) * scale
        counts = rng.poisson(lam)
        frames.append(replace(f, values=counts / scale))
    noise = {"model": "poisson", "scale": scale, "seed": int(seed)}
    return FringeStack(tuple(frames), stack.phi_in, noise)
