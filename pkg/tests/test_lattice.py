import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shrinkblob import lattice
from shrinkblob.lattice import ChemoField, CityStimulus, OccupancyGrid


def reference_diffuse(a, damping=0.95):
    # zero-padded 3x3 sum by explicit shifts, divided by 9
    p = np.pad(a, 1)
    h, w = a.shape
    s = sum(p[dy:dy + h, dx:dx + w] for dy in range(3) for dx in range(3))
    return damping * s / 9.0


def field_of(values):
    f = ChemoField(values.shape[1], values.shape[0])
    f.values[:] = values
    return f


def test_uniform_field():
    f = ChemoField(20, 20)
    f.values[:] = 10.0
    lattice.diffuse(f)
    assert np.allclose(f.values[1:-1, 1:-1], 9.5, rtol=0, atol=1e-12)
    assert f.values[0, 0] == pytest.approx(0.95 * 40 / 9, abs=1e-12)
    assert f.values[0, 5] == pytest.approx(0.95 * 60 / 9, abs=1e-12)


def test_zero_fixed_point():
    f = ChemoField(16, 12)
    lattice.diffuse(f)
    assert not f.values.any()


def test_delta_impulse():
    f = ChemoField(11, 11)
    f.values[5, 5] = 9.0
    lattice.diffuse(f)
    assert np.allclose(f.values[4:7, 4:7], 0.95)
    f.values[4:7, 4:7] = 0
    assert not f.values.any()


def test_double_buffer_is_pure():
    rng = np.random.default_rng(0)
    a = rng.random((30, 40))
    f = field_of(a)
    old = f.values
    lattice.diffuse(f)
    assert f.values is not old
    assert np.allclose(f.values, reference_diffuse(a), rtol=1e-12, atol=0)
    # the old buffer is only reused as scratch on the next call
    lattice.diffuse(f)
    assert np.allclose(f.values, reference_diffuse(reference_diffuse(a)), rtol=1e-12)


def test_matches_reference_on_random_fields(rng):
    for _ in range(50):
        h, w = rng.integers(1, 25, size=2)
        a = rng.random((h, w)) * rng.integers(1, 100)
        f = field_of(a)
        lattice.diffuse(f)
        assert np.allclose(f.values, reference_diffuse(a), rtol=1e-12, atol=1e-15)


def test_mass_exact_away_from_edges(rng):
    for _ in range(200):
        a = np.zeros((30, 30))
        a[1:-1, 1:-1] = rng.random((28, 28)) * (rng.random((28, 28)) < 0.3)
        before = a.sum()
        f = field_of(a)
        lattice.diffuse(f)
        assert f.total() == pytest.approx(0.95 * before, rel=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 12), st.integers(1, 12), st.integers(0, 2**32 - 1))
def test_mass_bound_and_nonnegativity(h, w, seed):
    a = np.random.default_rng(seed).random((h, w)) * 50
    f = field_of(a)
    lattice.diffuse(f)
    assert f.total() <= 0.95 * a.sum() * (1 + 1e-12)
    assert (f.values >= 0).all()


def test_deposit():
    f = ChemoField(20, 20)
    lattice.deposit(f, 10, 10, 5.0)
    assert f[10, 10] == 5.0
    lattice.deposit(f, 10, 10, 0.0)
    assert f[10, 10] == 5.0
    lattice.deposit(f, 10, 10, 5.0)
    assert f[10, 10] == 10.0
    assert f.total() == 10.0


def test_deposit_contract():
    f = ChemoField(20, 20)
    with pytest.raises(IndexError):
        lattice.deposit(f, 20, 0, 1.0)
    with pytest.raises(IndexError):
        lattice.deposit(f, -1, 3, 1.0)
    with pytest.raises(ValueError):
        lattice.deposit(f, 1, 1, -1.0)


def test_projection_uncovered_and_covered():
    f = ChemoField(30, 30)
    occ = OccupancyGrid(30, 30)
    cities = [CityStimulus(0, 5, 5), CityStimulus(1, 20, 20)]
    for k, (x, y) in enumerate([(19, 19), (20, 21), (21, 20), (21, 21)]):
        occ.cells[y, x] = k
    lattice.project_cities(f, cities, occ)
    assert np.allclose(f.values[4:7, 4:7], 1.275)
    assert np.allclose(f.values[19:22, 19:22], 0.01275)
    assert f.total() == pytest.approx(9 * (1.275 + 0.01275))


def test_projection_empty_list():
    f = ChemoField(10, 10)
    f.values[3, 3] = 2.0
    lattice.project_cities(f, [], OccupancyGrid(10, 10))
    assert f.total() == 2.0


def test_projection_uses_3x3_only():
    # a particle two cells away does not suppress
    f = ChemoField(30, 30)
    occ = OccupancyGrid(30, 30)
    occ.cells[12, 10] = 0
    lattice.project_cities(f, [CityStimulus(0, 10, 10)], occ)
    assert f[10, 10] == pytest.approx(1.275)


def test_count_window_examples():
    occ = OccupancyGrid(40, 40)
    assert lattice.count_particles_window(occ, 20, 20, 4) == 0
    occ.cells[10:19, 10:19] = 1
    assert lattice.count_particles_window(occ, 14, 14, 4) == 81
    occ = OccupancyGrid(40, 40)
    rng = np.random.default_rng(3)
    cells = rng.choice(25, size=14, replace=False)
    for c in cells:
        occ.cells[20 + c // 5 - 2, 20 + c % 5 - 2] = 7
    assert lattice.count_particles_window(occ, 20, 20, 2) == 14


def test_count_window_clips_at_edges():
    occ = OccupancyGrid(10, 10)
    occ.cells[:] = 0
    assert lattice.count_particles_window(occ, 0, 0, 2) == 9
    assert lattice.count_particles_window(occ, 9, 5, 4) == 5 * 9


def test_count_window_brute_force(rng):
    for _ in range(1000):
        h, w = rng.integers(1, 30, size=2)
        occ = OccupancyGrid(w, h)
        occ.cells[rng.random((h, w)) < rng.random()] = 0
        cx, cy = int(rng.integers(-3, w + 3)), int(rng.integers(-3, h + 3))
        hw = int(rng.integers(0, 6))
        brute = sum(1 for y in range(cy - hw, cy + hw + 1) for x in range(cx - hw, cx + hw + 1)
                    if 0 <= x < w and 0 <= y < h and occ.cells[y, x] != -1)
        assert lattice.count_particles_window(occ, cx, cy, hw) == brute


def test_pgm_roundtrip(tmp_path):
    v = np.arange(12.0).reshape(3, 4)
    img = lattice.to_gray8(v)
    assert img.min() == 0 and img.max() == 255
    p = tmp_path / lattice.frame_name(42)
    assert p.name == "frame_000042.pgm"
    lattice.write_pgm(p, img)
    assert p.read_bytes().startswith(b"P5\n4 3\n255\n")
    assert np.array_equal(lattice.read_pgm(p), img)


def test_gray8_constant_frame():
    assert not lattice.to_gray8(np.full((4, 4), 3.0)).any()
