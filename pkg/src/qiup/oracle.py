"""Discrete-mode quantum-state oracle for the counting-rate formula.

The two-source state is built mode by mode in the transverse-momentum
basis, the object is applied as a beamsplitter acting on the idler modes
(transmitted amplitude into the aligned idler family, reflected amplitude
into an explicit vacuum-port family), and the camera rate is the
expectation value of the detected signal intensity.  Nothing here uses
the position-space joint density, which is what makes it an independent
check of :mod:`qiup.interferometer`.

Conventions: the forward transform position -> momentum uses
``exp(-i q.rho)`` with ``1/sqrt(n)`` per axis, so a clear object maps to the
identity matrix exactly.  Detected field at the camera::

    E+(rho_c) ~ sum_q [a_S1(q) + i exp(i (phi_s0 + phi_s(rho_c))) a_S2(q)] exp(i q.rho_c / m_s)
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .correlation import BiphotonAmplitude, position_pdf_from_amplitude, random_amplitude
from .grid import (FieldGrid, ObjectMask, PhaseLike, PhaseScreen, PlaneMapping,
                   evaluate_phase, reciprocal_grid)
from .interferometer import InterferometerConfig, rate_map_general

MAX_MODES_PER_AXIS = 16


@dataclass(frozen=True)
class ModeBasis:
    """Momentum lattice shared by every mode family (S1, S2, I1, vacuum port)."""

    qgrid: FieldGrid

    def __post_init__(self):
        q = self.qgrid
        if q.nx != q.ny:
            raise ValueError("mode basis must be square")
        if q.nx > MAX_MODES_PER_AXIS:
            raise ValueError(f"mode basis {q.nx}x{q.ny} exceeds the {MAX_MODES_PER_AXIS}x"
                             f"{MAX_MODES_PER_AXIS} cap")

    @property
    def size(self) -> int:
        return self.qgrid.size

    @property
    def position_grid(self) -> FieldGrid:
        return reciprocal_grid(self.qgrid)

    def signal_vectors(self, rho_s) -> np.ndarray:
        """Rows ``exp(i q.rho_s) / n`` for each query point."""
        qx, qy = self.qgrid.coords()
        rho_s = np.asarray(rho_s, dtype=float).reshape(-1, 2)
        ph = rho_s[:, :1] * qx.ravel()[None, :] + rho_s[:, 1:2] * qy.ravel()[None, :]
        return np.exp(1j * ph) / self.qgrid.nx


@dataclass(frozen=True)
class TwoPhotonStateVector:
    """Coefficients on (signal mode, idler mode) pairs for the three occupied sectors."""

    basis: ModeBasis
    alpha1: complex
    alpha2: complex
    s1_i1: np.ndarray
    s2_i1: np.ndarray
    s2_0: np.ndarray

    def norm(self) -> float:
        return float(sum(np.sum(np.abs(s) ** 2) for s in (self.s1_i1, self.s2_i1, self.s2_0)))


def _difference_spectrum(field: np.ndarray, pos: FieldGrid, q: FieldGrid) -> np.ndarray:
    """``(1/N) sum_rho f(rho) exp(-i k.rho)`` for every lattice difference ``k = q - q'``."""
    n = q.nx
    k = np.arange(-(n - 1), n) * q.pitch
    dx = np.exp(-1j * np.outer(k, pos.x))
    dy = np.exp(-1j * np.outer(k, pos.y))
    return dy @ field @ dx.T / pos.size


def _convolution_matrix(spec: np.ndarray, n: int) -> np.ndarray:
    """Gather ``K[q, q'] = spec(q - q')`` over raster-flattened momentum modes."""
    idx = np.arange(n)
    jy, jx = np.meshgrid(idx, idx, indexing="ij")
    jy, jx = jy.ravel(), jx.ravel()
    dy = jy[:, None] - jy[None, :] + (n - 1)
    dx = jx[:, None] - jx[None, :] + (n - 1)
    return spec[dy, dx]


def object_kernel_matrices(mask: ObjectMask, phi_i: PhaseLike, phi_i_prime: PhaseLike,
                           m_i: float, basis: ModeBasis):
    """Transmitted and reflected idler mode-coupling matrices.

    Row ``q`` of the transmitted matrix gives the aligned-idler annihilator
    ``a_I2(q)`` in terms of ``a_I1(q')``; likewise the reflected matrix couples
    to the vacuum port.  They are Fourier transforms of
    ``exp(i (phi_i(m_i rho) + phi_i'(rho))) T(m_i rho)`` and
    ``exp(i phi_i'(rho)) R(m_i rho)`` evaluated at lattice differences.
    """
    pos = basis.position_grid
    if mask.grid.shape != pos.shape or not np.isclose(mask.grid.pitch, abs(m_i) * pos.pitch,
                                                      rtol=1e-9, atol=0):
        raise ValueError(
            f"reciprocal-lattice mismatch: object grid must be {pos.shape} with pitch "
            f"|m_i| * {pos.pitch}, got {mask.grid}")
    IX, IY = pos.coords()
    ox, oy = m_i * IX, m_i * IY
    amp, phase_t = mask.sample(ox, oy)
    refl = np.sqrt(np.clip(1.0 - amp ** 2, 0.0, None))
    prime = evaluate_phase(phi_i_prime, IX, IY)
    t_field = np.exp(1j * (evaluate_phase(phi_i, ox, oy) + prime + phase_t)) * amp
    r_field = np.exp(1j * prime) * refl
    n = basis.qgrid.nx
    t_mat = _convolution_matrix(_difference_spectrum(t_field, pos, basis.qgrid), n)
    r_mat = _convolution_matrix(_difference_spectrum(r_field, pos, basis.qgrid), n)
    return t_mat, r_mat


def build_state(amp: BiphotonAmplitude, alpha1: complex, alpha2: complex, kernels) -> TwoPhotonStateVector:
    """Superposed two-source state after the idler passes the object.

    Creation operators transform with the conjugate kernels, so the second
    source contributes ``C @ conj(T)`` to the (I1, S2) sector and
    ``C @ conj(R)`` to the (vacuum, S2) sector.
    """
    t_mat, r_mat = kernels
    basis = ModeBasis(amp.qgrid)
    n = basis.size
    if t_mat.shape != (n, n) or r_mat.shape != (n, n):
        raise ValueError(f"kernel matrices must be {(n, n)}, got {t_mat.shape} and {r_mat.shape}")
    if abs(abs(alpha1) ** 2 + abs(alpha2) ** 2 - 1.0) > 1e-12:
        raise ValueError("|alpha1|^2 + |alpha2|^2 must be 1")
    c = amp.values * amp.qgrid.pitch ** 2
    return TwoPhotonStateVector(
        basis=basis,
        alpha1=complex(alpha1),
        alpha2=complex(alpha2),
        s1_i1=alpha1 * c,
        s2_i1=alpha2 * (c @ np.conj(t_mat)),
        s2_0=alpha2 * (c @ np.conj(r_mat)),
    )


def _sector_fields(state: TwoPhotonStateVector, rho_c, mapping: PlaneMapping):
    rho_c = np.asarray(rho_c, dtype=float).reshape(-1, 2)
    e = state.basis.signal_vectors(rho_c / mapping.m_s)
    return rho_c, e @ state.s1_i1, e @ state.s2_i1, e @ state.s2_0


def oracle_rate(state: TwoPhotonStateVector, cfg: InterferometerConfig, rho_c) -> np.ndarray:
    """``<psi| E- E+ |psi>`` at camera points ``rho_c`` (trailing axis of length 2).

    The beamsplitter factor ``i`` on the second arm is kept; the scanned phase
    ``phi_s0`` is chosen so the interferometric phase equals ``cfg.phi_in``
    in the cosine of the closed-form rate.
    """
    shape = np.shape(rho_c)[:-1]
    rho_c, v1, v2, v0 = _sector_fields(state, rho_c, cfg.mapping)
    phi_s0 = cfg.phi_in - math.pi / 2 - (np.angle(state.alpha2) - np.angle(state.alpha1))
    phase = phi_s0 + evaluate_phase(cfg.phi_s, rho_c[:, 0], rho_c[:, 1])
    g = 1j * np.exp(1j * phase)[:, None]
    a_idler = v1 + g * v2
    a_vac = g * v0
    val = np.sum(np.conj(a_idler) * a_idler, axis=1) + np.sum(np.conj(a_vac) * a_vac, axis=1)
    if np.max(np.abs(val.imag), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(val.real))):
        raise ArithmeticError("intensity expectation is not real")
    return val.real.reshape(shape)


def oracle_incoherent(state: TwoPhotonStateVector, cfg: InterferometerConfig, rho_c) -> np.ndarray:
    """Interference-free part of the rate (sum of sector intensities)."""
    shape = np.shape(rho_c)[:-1]
    _, v1, v2, v0 = _sector_fields(state, rho_c, cfg.mapping)
    val = sum(np.sum(np.abs(v) ** 2, axis=1) for v in (v1, v2, v0))
    return val.reshape(shape)


def oracle_rate_map(state: TwoPhotonStateVector, cfg: InterferometerConfig, camera: FieldGrid,
                    normalized: bool = True) -> np.ndarray:
    X, Y = camera.coords()
    pts = np.stack([X, Y], axis=-1)
    rate = oracle_rate(state, cfg, pts)
    if normalized:
        # common normalization: the interference-free intensity is the
        # per-pixel kernel mass scaled by |a1|^2 + |a2|^2
        rate = rate * cfg.incoherent / oracle_incoherent(state, cfg, pts)
    return rate


# ---------------------------------------------------------------------------
# Random instances for the equivalence check
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OracleInstance:
    amp: BiphotonAmplitude
    mask: ObjectMask
    cfg: InterferometerConfig
    camera: FieldGrid
    source: FieldGrid


def smooth_phase(grid: FieldGrid, rng: np.random.Generator, amplitude: float = 1.0, terms: int = 3):
    X, Y = grid.coords()
    L = max(grid.extent)
    out = np.zeros(grid.shape)
    for _ in range(terms):
        kx, ky = rng.uniform(-2, 2, size=2) * 2 * np.pi / L
        out += amplitude * rng.uniform(-1, 1) * np.cos(kx * X + ky * Y + rng.uniform(0, 2 * np.pi))
    return out


def random_instance(modes: int, rng: np.random.Generator, alpha2: float | None = None,
                    obj: str = "random") -> OracleInstance:
    """Random amplitude, mask, phase screens and magnifications on a ``modes``-square basis."""
    source = FieldGrid(modes, modes, 1.0)
    qgrid = reciprocal_grid(source)
    amp = random_amplitude(qgrid, rng)
    m_s = float(rng.choice([-2.0, -1.0, 0.5, 1.0, 1.5, 2.0]))
    m_i = float(rng.choice([-1.0, 0.5, 1.0, 2.0, 3.0]))
    ogrid = source.scaled(m_i)
    camera = source.scaled(m_s)
    if obj == "opaque":
        amplitude = np.zeros(ogrid.shape)
    elif obj == "clear":
        amplitude = np.ones(ogrid.shape)
    else:
        amplitude = np.clip(rng.uniform(-0.3, 1.3, size=ogrid.shape), 0.0, 1.0)
    mask = ObjectMask(ogrid, amplitude, smooth_phase(ogrid, rng, 2.0))
    if alpha2 is None:
        alpha2 = float(rng.uniform(0.2, 0.9))
    alpha1 = math.sqrt(1.0 - alpha2 ** 2)
    cfg = InterferometerConfig(
        a1_mag=alpha1, a2_mag=alpha2, phi_in=float(rng.uniform(0, 2 * np.pi)),
        phi_s=PhaseScreen(camera, smooth_phase(camera, rng)),
        phi_i=PhaseScreen(ogrid, smooth_phase(ogrid, rng)),
        phi_i_prime=PhaseScreen(source, smooth_phase(source, rng)),
        mapping=PlaneMapping(m_s=m_s, m_i=m_i, eta=1.0),
    )
    return OracleInstance(amp, mask, cfg, camera, source)


def compare_oracle(inst: OracleInstance, workers: int | None = None) -> tuple[float, np.ndarray, np.ndarray]:
    """Max relative deviation between the state oracle and the quadrature path.

    Deviation is ``max |oracle - general| / max |general|`` over the camera grid.
    """
    kernel = position_pdf_from_amplitude(inst.amp, inst.source)
    general = rate_map_general(inst.mask, kernel, inst.cfg, inst.camera, workers=workers).values
    basis = ModeBasis(inst.amp.qgrid)
    kernels = object_kernel_matrices(inst.mask, inst.cfg.phi_i, inst.cfg.phi_i_prime,
                                     inst.cfg.mapping.m_i, basis)
    state = build_state(inst.amp, inst.cfg.a1_mag, inst.cfg.a2_mag, kernels)
    oracle = oracle_rate_map(state, inst.cfg, inst.camera)
    scale = max(np.max(np.abs(general)), 1e-300)
    return float(np.max(np.abs(oracle - general)) / scale), oracle, general
