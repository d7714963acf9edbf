import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qiup.grid import (FieldGrid, ObjectMask, PhaseScreen, PlaneMapping, bilinear_operator,
                       evaluate_phase, load_mask, make_grid, map_camera_to_source,
                       map_object_to_idler, sample_bilinear, within_raster)


def test_make_grid_centred_half_offset():
    g = make_grid(4, 4, 1.0)
    # sample centres at (i - (n-1)/2) * pitch: no sample on axis for even n
    np.testing.assert_array_equal(g.x, [-1.5, -0.5, 0.5, 1.5])
    np.testing.assert_array_equal(g.y, [-1.5, -0.5, 0.5, 1.5])


def test_make_grid_extent():
    g = make_grid(128, 128, 0.01)
    assert g.extent == pytest.approx((1.28, 1.28), rel=1e-15)


@pytest.mark.parametrize("args", [(1, 4, 1.0), (4, 1, 1.0), (4, 4, 0.0), (4, 4, -1.0), (2.5, 4, 1.0)])
def test_make_grid_rejects(args):
    with pytest.raises(ValueError):
        make_grid(*args)


def test_odd_grid_has_axis_sample():
    g = make_grid(5, 3, 2.0)
    assert 0.0 in g.x and 0.0 in g.y
    X, Y = g.coords()
    assert X.shape == (3, 5) and Y.shape == (3, 5)


@given(st.integers(2, 40), st.integers(2, 40), st.floats(1e-3, 1e3))
def test_index_coord_bijection(nx, ny, pitch):
    g = FieldGrid(nx, ny, pitch)
    i, j = np.meshgrid(np.arange(nx), np.arange(ny))
    x, y = g.physical_coord(i, j)
    ii, jj = g.nearest_index(x, y)
    np.testing.assert_array_equal(ii, i)
    np.testing.assert_array_equal(jj, j)


def test_physical_coord_matches_axes():
    g = FieldGrid(6, 4, 0.5)
    X, Y = g.coords()
    i, j = np.meshgrid(np.arange(6), np.arange(4))
    x, y = g.physical_coord(i, j)
    np.testing.assert_allclose(x, X, atol=1e-15)
    np.testing.assert_allclose(y, Y, atol=1e-15)


@pytest.mark.parametrize("rho, m_s, expected", [((2, 0), 2, (1, 0)), ((0, 0), 3.7, (0, 0)),
                                                 ((3, -3), -1, (-3, 3))])
def test_map_camera_to_source(rho, m_s, expected):
    out = map_camera_to_source(rho, PlaneMapping(m_s=m_s))
    np.testing.assert_array_equal(out, expected)


def test_map_object_to_idler():
    np.testing.assert_array_equal(map_object_to_idler((4, 2), PlaneMapping(m_i=2)), (2, 1))
    np.testing.assert_array_equal(map_object_to_idler((0, 0), PlaneMapping(m_i=2)), (0, 0))
    with pytest.raises(ValueError):
        PlaneMapping(m_i=0)
    with pytest.raises(ValueError):
        PlaneMapping(m_s=0)


@pytest.mark.parametrize("m_i", [0.25, 0.5, 1.0, 2.0, 4.0, -2.0])
def test_object_idler_round_trip_power_of_two(m_i):
    g = FieldGrid(17, 9, 0.37)
    X, Y = g.coords()
    pts = np.stack([X, Y], axis=-1)
    back = map_object_to_idler(m_i * pts, PlaneMapping(m_i=m_i))
    np.testing.assert_array_equal(back, pts)


@pytest.mark.parametrize("eta, m_s, m_i", [(1, 2, 1), (0.5, 1, 1), (2, 3, -1.5)])
def test_predicted_magnification(eta, m_s, m_i):
    m = PlaneMapping(m_s, m_i, eta)
    assert m.magnification == eta * m_s / m_i
    np.testing.assert_allclose(m.object_to_camera(m.camera_to_object([1.0, -2.0])), [1.0, -2.0])


def test_load_mask_white_is_clear():
    mask = load_mask(np.full((8, 8), 255, np.uint8))
    np.testing.assert_array_equal(mask.amplitude, 1.0)
    np.testing.assert_array_equal(mask.phase, 0.0)
    np.testing.assert_array_equal(mask.reflection, 0.0)


def test_load_mask_binary_silhouette(tmp_path):
    from qiup.config import PRESET_DIR
    mask = load_mask(PRESET_DIR / "fig2_mask.pgm")
    assert set(np.unique(mask.amplitude)) == {0.0, 1.0}
    assert mask.grid.shape == (128, 128)


def test_load_mask_half_amplitude():
    mask = load_mask(np.full((4, 4), 0.5))
    np.testing.assert_allclose(mask.reflection, np.sqrt(0.75), rtol=0, atol=1e-15)


def test_load_mask_16bit_and_phase_file(tmp_path):
    from qiup import files
    amp = np.arange(16, dtype=np.uint16).reshape(4, 4) * 4000
    files.write_pgm16(tmp_path / "a.pgm", amp)
    phase = np.linspace(-7, 7, 16).reshape(4, 4)
    files.write_matrix(tmp_path / "p.txt", phase)
    mask = load_mask(tmp_path / "a.pgm", tmp_path / "p.txt")
    np.testing.assert_array_equal(mask.amplitude, amp / 65535.0)
    np.testing.assert_array_equal(mask.phase, phase)


def test_load_mask_errors(tmp_path):
    with pytest.raises(FileNotFoundError, match="nope.pgm"):
        load_mask(tmp_path / "nope.pgm")
    with pytest.raises(ValueError):
        load_mask(np.full((4, 4), 255, np.uint8), grid=FieldGrid(5, 4, 1.0))
    with pytest.raises(ValueError):
        ObjectMask(FieldGrid(2, 2, 1.0), np.full((2, 2), 1.5))


@settings(max_examples=50)
@given(st.integers(0, 2 ** 32 - 1))
def test_mask_unitarity(seed):
    rng = np.random.default_rng(seed)
    mask = ObjectMask(FieldGrid(9, 7, 1.0), rng.uniform(0, 1, (7, 9)))
    assert np.max(np.abs(mask.amplitude ** 2 + mask.reflection ** 2 - 1)) <= 1e-12


def test_mask_sample_clear_outside_and_exact_on_lattice():
    g = FieldGrid(4, 4, 1.0)
    rng = np.random.default_rng(3)
    mask = ObjectMask(g, rng.uniform(0, 1, g.shape), rng.uniform(-3, 3, g.shape))
    X, Y = g.coords()
    amp, ph = mask.sample(X, Y)
    np.testing.assert_array_equal(amp, mask.amplitude)
    np.testing.assert_array_equal(ph, mask.phase)
    amp, ph = mask.sample(np.array([10.0, -2.5]), np.array([0.0, 0.0]))
    np.testing.assert_array_equal(amp, [1.0, 1.0])
    np.testing.assert_array_equal(ph, [0.0, 0.0])
    # inside the footprint but beyond the last centre: edge-clamped
    amp, _ = mask.sample(np.array([1.9]), np.array([-1.5]))
    assert amp[0] == mask.amplitude[0, -1]


def test_within_raster_footprint():
    g = FieldGrid(4, 2, 1.0)
    assert within_raster(g, 2.0, 1.0)
    assert not within_raster(g, 2.01, 0.0)


def test_bilinear_operator_matches_sampler():
    g = FieldGrid(6, 5, 0.7)
    rng = np.random.default_rng(1)
    v = rng.standard_normal(g.shape)
    x = rng.uniform(-1.7, 1.7, 50)
    y = rng.uniform(-1.4, 1.4, 50)
    op, inside = bilinear_operator(g, x, y)
    assert inside.all()
    np.testing.assert_allclose(op @ v.ravel(), sample_bilinear(v, g, x, y), atol=1e-14)
    op, inside = bilinear_operator(g, np.array([5.0]), np.array([0.0]))
    assert not inside[0]
    assert op.sum() == 0


def test_bilinear_reproduces_affine():
    g = FieldGrid(5, 5, 1.0)
    X, Y = g.coords()
    v = 2 * X - 3 * Y + 1
    x, y = np.array([0.3, -1.7]), np.array([1.1, 0.25])
    np.testing.assert_allclose(sample_bilinear(v, g, x, y), 2 * x - 3 * y + 1, atol=1e-14)


def test_phase_screen_and_constant():
    g = FieldGrid(3, 3, 1.0)
    vals = np.arange(9.0).reshape(3, 3)
    scr = PhaseScreen(g, vals)
    X, Y = g.coords()
    np.testing.assert_array_equal(evaluate_phase(scr, X, Y), vals)
    np.testing.assert_array_equal(evaluate_phase(0.25, X, Y), np.full((3, 3), 0.25))
    np.testing.assert_array_equal(scr.shifted(1.0).values, vals + 1.0)
    with pytest.raises(ValueError):
        PhaseScreen(g, np.zeros((2, 3)))


def test_padded_mask_is_clear():
    mask = ObjectMask(FieldGrid(3, 3, 1.0), np.zeros((3, 3)))
    p = mask.padded(2)
    assert p.grid.shape == (7, 7)
    assert p.amplitude[0, 0] == 1.0 and p.amplitude[3, 3] == 0.0
    np.testing.assert_array_equal(p.grid.x[2:5], mask.grid.x)
