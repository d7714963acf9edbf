import math
from dataclasses import replace

import numpy as np
import pytest

from qiup.correlation import (BiphotonAmplitude, gaussian_amplitude, position_pdf_from_amplitude,
                              random_amplitude)
from qiup.grid import FieldGrid, ObjectMask, PlaneMapping, reciprocal_grid
from qiup.interferometer import FringeStack, InterferometerConfig, RateMap, rate_map_general
from qiup.oracle import (ModeBasis, TwoPhotonStateVector, build_state, compare_oracle,
                         object_kernel_matrices, oracle_rate, oracle_rate_map, random_instance)
from qiup.reconstruction import fit_fringes, wrap_phase

from conftest import BALANCED, LADDER4


def _basis(n=6, pitch=1.0):
    src = FieldGrid(n, n, pitch)
    return src, ModeBasis(reciprocal_grid(src))


def _kernels(amplitude, phase=None, n=6, m_i=1.0):
    src, basis = _basis(n)
    mask = ObjectMask(src.scaled(m_i), np.broadcast_to(amplitude, src.shape), phase)
    return object_kernel_matrices(mask, 0.0, 0.0, m_i, basis), basis


def test_mode_cap_and_square_basis():
    ModeBasis(reciprocal_grid(FieldGrid(16, 16, 1.0)))
    with pytest.raises(ValueError, match="cap"):
        ModeBasis(reciprocal_grid(FieldGrid(17, 17, 1.0)))
    with pytest.raises(ValueError):
        ModeBasis(FieldGrid(4, 5, 1.0))


def test_signal_modes_orthonormal():
    src, basis = _basis(5)
    X, Y = src.coords()
    e = basis.signal_vectors(np.stack([X, Y], axis=-1))
    np.testing.assert_allclose(e.conj().T @ e, np.eye(25), atol=1e-13)


@pytest.mark.parametrize("m_i", [1.0, 2.0, -0.5])
def test_identity_object(m_i):
    (t, r), basis = _kernels(1.0, m_i=m_i)
    np.testing.assert_allclose(t, np.eye(basis.size), atol=1e-14)
    np.testing.assert_allclose(r, 0.0, atol=1e-15)


def test_opaque_object():
    (t, r), basis = _kernels(0.0)
    np.testing.assert_allclose(t, 0.0, atol=1e-15)
    np.testing.assert_allclose(r, np.eye(basis.size), atol=1e-14)


def test_constant_transmission():
    c = 0.6
    (t, r), basis = _kernels(c)
    eye = np.eye(basis.size)
    np.testing.assert_allclose(t, c * eye, atol=1e-14)
    np.testing.assert_allclose(r, math.sqrt(1 - c * c) * eye, atol=1e-14)
    np.testing.assert_allclose(np.sum(np.abs(t) ** 2 + np.abs(r) ** 2, axis=1), 1.0, atol=1e-13)


def test_kernels_unitary_completion():
    rng = np.random.default_rng(0)
    (t, r), basis = _kernels(rng.uniform(0, 1, (6, 6)), rng.uniform(-3, 3, (6, 6)))
    np.testing.assert_allclose(t @ t.conj().T + r @ r.conj().T, np.eye(basis.size), atol=1e-13)


def test_lattice_mismatch():
    src, basis = _basis(6)
    with pytest.raises(ValueError, match="reciprocal-lattice mismatch"):
        object_kernel_matrices(ObjectMask(src.scaled(1.5), np.ones(src.shape)), 0.0, 0.0, 1.0, basis)


def _amp(n=6, seed=0):
    src = FieldGrid(n, n, 1.0)
    return random_amplitude(reciprocal_grid(src), np.random.default_rng(seed)), src


def test_single_source_state():
    amp, _ = _amp()
    kernels, _ = _kernels(0.4)
    s = build_state(amp, 1.0, 0.0, kernels)
    assert abs(s.norm() - 1) <= 1e-12
    assert np.all(s.s2_i1 == 0) and np.all(s.s2_0 == 0)


def test_clear_object_sectors_equal():
    amp, _ = _amp()
    kernels, _ = _kernels(1.0)
    s = build_state(amp, BALANCED, BALANCED, kernels)
    np.testing.assert_allclose(s.s1_i1, s.s2_i1, atol=1e-14)
    np.testing.assert_allclose(s.s2_0, 0.0, atol=1e-15)
    np.testing.assert_allclose(s.s1_i1, amp.values * amp.qgrid.pitch ** 2 / math.sqrt(2), atol=1e-14)


@pytest.mark.parametrize("seed", range(5))
def test_norm_conservation(seed):
    rng = np.random.default_rng(seed)
    amp, _ = _amp(seed=seed)
    kernels, _ = _kernels(rng.uniform(0, 1, (6, 6)), rng.uniform(-3, 3, (6, 6)))
    a2 = rng.uniform(0, 1)
    s = build_state(amp, math.sqrt(1 - a2 ** 2), a2 * np.exp(1j * rng.uniform(0, 6)), kernels)
    assert abs(s.norm() - 1) <= 1e-9


def _rates(state, cfg, camera, ladder=LADDER4):
    frames = []
    for p in ladder:
        c = cfg.with_phi_in(p)
        frames.append(RateMap(camera, oracle_rate_map(state, c, camera, normalized=False),
                              np.ones(camera.shape), p))
    return FringeStack(tuple(frames), tuple(ladder))


def test_opaque_object_kills_interference():
    amp, src = _amp()
    kernels, _ = _kernels(0.0)
    s = build_state(amp, BALANCED, BALANCED, kernels)
    assert np.all(s.s2_i1 == 0)
    r = _rates(s, InterferometerConfig(BALANCED, BALANCED), src).values()
    np.testing.assert_allclose(r - r[0], 0.0, atol=1e-15)
    assert np.max(fit_fringes(_rates(s, InterferometerConfig(), src)).visibility.values) <= 1e-12


def test_rate_is_real_and_nonnegative():
    rng = np.random.default_rng(3)
    amp, src = _amp(seed=3)
    kernels, _ = _kernels(rng.uniform(0, 1, (6, 6)), rng.uniform(-3, 3, (6, 6)))
    s = build_state(amp, 0.6, 0.8, kernels)
    X, Y = src.coords()
    r = oracle_rate(s, InterferometerConfig(0.6, 0.8, 1.1), np.stack([X, Y], axis=-1))
    assert r.dtype == float and r.min() >= -1e-12


def test_single_source_rate_is_signal_marginal():
    amp, src = _amp(seed=9)
    pdf = position_pdf_from_amplitude(amp, src)
    X, Y = src.coords()
    pts = np.stack([X, Y], axis=-1)
    rates = []
    for obj in (0.0, 1.0, 0.3):
        kernels, _ = _kernels(obj)
        s = build_state(amp, 1.0, 0.0, kernels)
        rates.append(oracle_rate(s, InterferometerConfig(1.0, 0.0, 0.4), pts))
    np.testing.assert_allclose(rates[1], rates[0], rtol=1e-12)
    np.testing.assert_allclose(rates[2], rates[0], rtol=1e-12)
    marg = pdf.signal_marginal_table()
    ratio = rates[0] / marg
    np.testing.assert_allclose(ratio, ratio.flat[0], rtol=1e-10)


def test_global_object_phase_covariance():
    rng = np.random.default_rng(5)
    amp, src = _amp(seed=5)
    amplitude = rng.uniform(0.3, 1, (6, 6))
    phase = rng.uniform(-1, 1, (6, 6))
    theta = 0.7
    cfg = InterferometerConfig(0.6, 0.8)
    fits = []
    for ph in (phase, phase + theta):
        kernels, _ = _kernels(amplitude, ph)
        fits.append(fit_fringes(_rates(build_state(amp, 0.6, 0.8, kernels), cfg, src)))
    np.testing.assert_allclose(fits[1].visibility.values, fits[0].visibility.values, atol=1e-9)
    shift = wrap_phase(fits[1].phase.values - fits[0].phase.values)
    np.testing.assert_allclose(shift, -theta, atol=1e-9)


def test_gaussian_amplitude_binary_mask_equivalence():
    src = FieldGrid(8, 8, 1.0)
    amp = gaussian_amplitude(reciprocal_grid(src), 0.5, 1.5)
    rng = np.random.default_rng(1)
    mask = ObjectMask(src, (rng.uniform(size=src.shape) > 0.5).astype(float))
    cfg = InterferometerConfig(BALANCED, BALANCED, 0.3)
    basis = ModeBasis(amp.qgrid)
    s = build_state(amp, BALANCED, BALANCED, object_kernel_matrices(mask, 0.0, 0.0, 1.0, basis))
    general = rate_map_general(mask, position_pdf_from_amplitude(amp, src), cfg, src).values
    oracle = oracle_rate_map(s, cfg, src)
    assert np.max(np.abs(oracle - general)) / np.max(general) <= 1e-6


@pytest.mark.parametrize("modes", [4, 5, 8, 12])
def test_random_instance_equivalence(modes):
    rng = np.random.default_rng(100 + modes)
    for _ in range(3):
        dev, *_ = compare_oracle(random_instance(modes, rng))
        assert dev <= 1e-6


def test_degenerate_alpha2_zero():
    dev, *_ = compare_oracle(random_instance(8, np.random.default_rng(2), alpha2=0.0))
    assert dev <= 1e-12


def test_opaque_instance_flat_in_phi_in():
    inst = random_instance(6, np.random.default_rng(4), obj="opaque")
    dev, o1, g1 = compare_oracle(inst)
    shifted = replace(inst, cfg=inst.cfg.with_phi_in(inst.cfg.phi_in + 1.3))
    _, o2, g2 = compare_oracle(shifted)
    assert dev <= 1e-6
    np.testing.assert_allclose(o2, o1, atol=1e-12)
    np.testing.assert_allclose(g2, g1, atol=1e-12)


def test_wrong_conjugation_breaks_agreement():
    # negative control: transforming creation operators with T instead of conj(T)
    inst = random_instance(6, np.random.default_rng(12))
    basis = ModeBasis(inst.amp.qgrid)
    t, r = object_kernel_matrices(inst.mask, inst.cfg.phi_i, inst.cfg.phi_i_prime,
                                  inst.cfg.mapping.m_i, basis)
    good = build_state(inst.amp, inst.cfg.a1_mag, inst.cfg.a2_mag, (t, r))
    bad = TwoPhotonStateVector(basis, good.alpha1, good.alpha2, good.s1_i1,
                               good.alpha2 * (good.s1_i1 / good.alpha1) @ t,
                               good.alpha2 * (good.s1_i1 / good.alpha1) @ r)
    general = rate_map_general(inst.mask, position_pdf_from_amplitude(inst.amp, inst.source),
                               inst.cfg, inst.camera).values
    dev_bad = np.max(np.abs(oracle_rate_map(bad, inst.cfg, inst.camera) - general)) / np.max(general)
    dev_good = np.max(np.abs(oracle_rate_map(good, inst.cfg, inst.camera) - general)) / np.max(general)
    assert dev_good <= 1e-6
    assert dev_bad > 1e-3
