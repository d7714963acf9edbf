"""Object recovery from phase-stepped fringe stacks.

Per camera pixel the frames are fitted to ``R_k = A + B cos(phi_k + C)``.
The visibility ``B / A`` images the transmission magnitude and the fringe
phase ``C`` carries ``-phi_T`` once the known imaging phases are removed.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.optimize import linear_sum_assignment

from .grid import (FieldGrid, ObjectMask, PhaseLike, PlaneMapping, evaluate_phase,
                   sample_bilinear)
from .interferometer import FringeStack, RateMap, _distinct_mod_2pi

log = logging.getLogger(__name__)

MEAN_FLOOR = 1e-12
PHASE_FLOOR = 0.05


def wrap_phase(phi) -> np.ndarray:
    """Wrap to the principal branch ``(-pi, pi]``."""
    w = np.angle(np.exp(1j * np.asarray(phi, dtype=float)))
    return np.where(w <= -np.pi, w + 2 * np.pi, w)


@dataclass(frozen=True)
class PlaneMap:
    """A real map on a grid with a boolean ``masked`` array (True = no estimate)."""

    grid: FieldGrid
    values: np.ndarray
    masked: np.ndarray = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise ValueError(f"map shape {v.shape} does not match grid {self.grid.shape}")
        m = np.zeros(v.shape, bool) if self.masked is None else np.asarray(self.masked, bool)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "masked", m)


VisibilityMap = PlaneMap
PhaseMap = PlaneMap


@dataclass(frozen=True)
class FringeFit:
    mean: np.ndarray
    amplitude: np.ndarray
    visibility: PlaneMap
    phase: PlaneMap
    clipped_pixels: int = 0
    method: str = "n-bucket"


def _is_balanced(ladder: np.ndarray, tol: float = 1e-12) -> bool:
    z = np.exp(1j * ladder)
    return abs(z.mean()) < tol and abs((z ** 2).mean()) < tol


def fit_fringes(stack: FringeStack, phase_floor: float = 1e-9) -> FringeFit:
    """Least-squares sinusoid fit per pixel.

    Ladders whose first and second circular moments vanish (equally spaced
    steps over a full period) use the closed-form N-bucket estimator;
    anything else goes through a linear least-squares solve.  Pixels with
    mean rate <= 1e-12 are masked; phases are masked where the visibility
    is at or below ``phase_floor``.
    """
    ladder = np.asarray(stack.phi_in, dtype=float)
    if ladder.size < 3 or _distinct_mod_2pi(ladder) < 3:
        raise ValueError("need >= 3 distinct phase steps")
    r = stack.values()
    k = ladder.size
    if _is_balanced(ladder):
        a = r.mean(axis=0)
        z = (2.0 / k) * np.tensordot(np.exp(-1j * ladder), r, axes=1)
        method = "n-bucket"
    else:
        design = np.stack([np.ones(k), np.cos(ladder), -np.sin(ladder)], axis=1)
        if np.linalg.cond(design) > 1e10:
            raise ValueError("phase ladder gives a rank-deficient fit")
        coef, *_ = np.linalg.lstsq(design, r.reshape(k, -1), rcond=None)
        coef = coef.reshape(3, *r.shape[1:])
        a = coef[0]
        z = coef[1] + 1j * coef[2]
        method = "least-squares"
    b = np.abs(z)
    masked = a <= MEAN_FLOOR
    with np.errstate(divide="ignore", invalid="ignore"):
        v = np.where(masked, 0.0, b / np.where(masked, 1.0, a))
    over = v > 1.0
    n_clip = int(np.sum(over & ~masked))
    if n_clip:
        log.info("clipped visibility above 1 at %d pixels", n_clip)
    v = np.clip(v, 0.0, 1.0)
    phase_masked = masked | (v <= phase_floor)
    c = np.where(phase_masked, np.nan, wrap_phase(np.angle(z)))
    g = stack.grid
    return FringeFit(a, b, PlaneMap(g, v, masked), PlaneMap(g, c, phase_masked), n_clip, method)


def _default_object_grid(camera: FieldGrid, mapping: PlaneMapping) -> FieldGrid:
    return camera.scaled(1.0 / mapping.magnification)


def _camera_points(object_grid: FieldGrid, camera: FieldGrid, mapping: PlaneMapping):
    if mapping.eta == 0:
        raise ValueError("eta = 0 has no image")
    X, Y = object_grid.coords()
    m = mapping.magnification
    cx, cy = X * m, Y * m
    hx = (camera.nx - 1) / 2 * camera.pitch * (1 + 1e-12)
    hy = (camera.ny - 1) / 2 * camera.pitch * (1 + 1e-12)
    outside = (np.abs(cx) > hx) | (np.abs(cy) > hy)
    return cx, cy, outside


def _resample_mask(masked: np.ndarray, camera: FieldGrid, cx, cy) -> np.ndarray:
    return sample_bilinear(masked.astype(float), camera, cx, cy) > 0


def visibility_image(V: PlaneMap, mapping: PlaneMapping, object_grid: FieldGrid = None,
                     clear_visibility: float = 1.0) -> PlaneMap:
    """Resample a camera visibility map onto the object plane.

    ``clear_visibility`` is the visibility of a clear aperture,
    ``2 |a1| |a2|``; dividing by it turns visibility into ``|T|``.
    """
    object_grid = object_grid or _default_object_grid(V.grid, mapping)
    cx, cy, outside = _camera_points(object_grid, V.grid, mapping)
    vals = sample_bilinear(V.values, V.grid, cx, cy) / clear_visibility
    masked = outside | _resample_mask(V.masked, V.grid, cx, cy)
    return PlaneMap(object_grid, np.where(masked, 0.0, vals), masked)


def phase_image(C: PlaneMap, phi_s: PhaseLike, phi_i: PhaseLike, phi_i_prime: PhaseLike,
                phi_in: float, mapping: PlaneMapping, object_grid: FieldGrid = None,
                visibility: PlaneMap = None, floor: float = PHASE_FLOOR) -> PlaneMap:
    """Object phase from a fringe-phase map with the known imaging phases removed.

    ``phi_in`` is any interferometric offset not already included in the
    ladder the fit used.  Pixels whose visibility is below ``floor`` are masked.
    """
    camera = C.grid
    object_grid = object_grid or _default_object_grid(camera, mapping)
    X, Y = camera.coords()
    masked = C.masked.copy()
    if visibility is not None:
        masked |= visibility.masked | (visibility.values < floor)
    psi = np.nan_to_num(C.values) - phi_in - evaluate_phase(phi_s, X, Y)
    phasor = np.where(masked, 0.0, np.exp(1j * psi))
    cx, cy, outside = _camera_points(object_grid, camera, mapping)
    sampled = (sample_bilinear(phasor.real, camera, cx, cy)
               + 1j * sample_bilinear(phasor.imag, camera, cx, cy))
    out_mask = outside | _resample_mask(masked, camera, cx, cy)
    OX, OY = object_grid.coords()
    m_i = mapping.m_i
    phi_t = -(np.angle(sampled) + evaluate_phase(phi_i, OX, OY)
              + evaluate_phase(phi_i_prime, OX / m_i, OY / m_i))
    phi_t = wrap_phase(phi_t)
    return PlaneMap(object_grid, np.where(out_mask, np.nan, phi_t), out_mask)


def image_subtraction(frame_a: RateMap, frame_b: RateMap) -> PlaneMap:
    if frame_a.grid != frame_b.grid:
        raise ValueError("frames are on different grids")
    if not np.allclose(frame_a.normalization, frame_b.normalization, rtol=1e-12, atol=0):
        raise ValueError("frames have different normalizations")
    return PlaneMap(frame_a.grid, frame_a.values - frame_b.values)


# ---------------------------------------------------------------------------
# Magnification
# ---------------------------------------------------------------------------

class FeatureDetectionError(ValueError):
    pass


def find_features(values: np.ndarray, grid: FieldGrid, threshold: float = 0.5,
                  min_pixels: int = 3) -> np.ndarray:
    """Value-weighted centroids ``(x, y)`` of bright blobs not touching the border."""
    v = np.asarray(values, dtype=float)
    labels, n = ndimage.label(v > threshold)
    border = set(np.unique(np.concatenate([labels[0], labels[-1], labels[:, 0], labels[:, -1]])))
    keep = [k for k in range(1, n + 1)
            if k not in border and np.sum(labels == k) >= min_pixels]
    if not keep:
        return np.zeros((0, 2))
    cy, cx = np.array(ndimage.center_of_mass(v, labels, keep)).T
    x0, y0 = grid.origin
    return np.stack([x0 + cx * grid.pitch, y0 + cy * grid.pitch], axis=1)


@dataclass(frozen=True)
class MagnificationEstimate:
    magnification: float
    uncertainty: float
    residual_rms: float
    truth_centroids: np.ndarray
    image_centroids: np.ndarray
    offset: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def position_error(self, expected: float) -> float:
        """Largest displacement between features placed with the measured and expected M."""
        r = np.max(np.linalg.norm(self.truth_centroids, axis=1))
        return abs(self.magnification - expected) * r

    def agrees_with(self, expected: float, pitch: float) -> bool:
        return self.position_error(expected) <= pitch / 2


def _match(truth: np.ndarray, image: np.ndarray):
    """Correspondence between constellations related by a signed scale."""
    to = truth - truth.mean(axis=0)
    ti = image - image.mean(axis=0)
    so = np.sqrt(np.mean(np.sum(to ** 2, axis=1)))
    si = np.sqrt(np.mean(np.sum(ti ** 2, axis=1)))
    if so == 0 or si == 0:
        raise FeatureDetectionError("features are not separated")
    best = None
    for sign in (1.0, -1.0):
        cost = np.linalg.norm(to[:, None, :] / so - sign * ti[None, :, :] / si, axis=2)
        rows, cols = linear_sum_assignment(cost)
        total = cost[rows, cols].sum()
        if best is None or total < best[0]:
            best = (total, rows, cols)
    _, rows, cols = best
    return truth[rows], image[cols]


def measure_magnification(object_truth: ObjectMask, V: PlaneMap, threshold: float = 0.5,
                          min_pixels: int = 3) -> MagnificationEstimate:
    """Least-squares scale between truth and image feature centroids."""
    truth = find_features(object_truth.amplitude, object_truth.grid, threshold, min_pixels)
    image = find_features(np.where(V.masked, 0.0, V.values), V.grid, threshold, min_pixels)
    if len(truth) < 2:
        raise FeatureDetectionError(f"object has {len(truth)} localizable features, need >= 2")
    if len(image) != len(truth):
        raise FeatureDetectionError(
            f"found {len(image)} features in the visibility map but {len(truth)} in the object")
    t, i = _match(truth, image)
    tc, ic = t - t.mean(axis=0), i - i.mean(axis=0)
    denom = np.sum(tc ** 2)
    m = float(np.sum(tc * ic) / denom)
    res = ic - m * tc
    dof = max(2 * len(t) - 3, 1)
    sigma = float(np.sqrt(np.sum(res ** 2) / dof / denom))
    offset = i.mean(axis=0) - m * t.mean(axis=0)
    return MagnificationEstimate(m, sigma, float(np.sqrt(np.mean(np.sum(res ** 2, axis=1)))),
                                 t, i, offset)


def rms_error(estimate: PlaneMap, truth: np.ndarray) -> float:
    """RMS difference over unmasked samples (grids must coincide)."""
    ok = ~estimate.masked
    if not ok.any():
        return float("nan")
    d = estimate.values[ok] - np.asarray(truth)[ok]
    return float(np.sqrt(np.mean(d ** 2)))
