import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import ndimage, stats

from xlra import _backend
from xlra import microstructure as m
from xlra.rotations import random_orientations

seeds = st.integers(0, 2**31 - 1)


def test_two_phase_exact_count():
    ms = m.gen_two_phase(7, (31, 31), hard_vf=0.20, sigma=0)
    assert int(ms.phase.sum()) == 192


@pytest.mark.parametrize("dims", [(31, 31), (16, 20), (9, 9, 9)])
def test_two_phase_fraction_100_seeds(dims):
    n = int(np.prod(dims))
    for seed in range(100):
        f = m.gen_two_phase(seed, dims, hard_vf=0.2).volume_fraction(1)
        assert abs(f - 0.2) <= 1.0 / n


def test_two_phase_determinism():
    a = m.gen_two_phase(3, (31, 31))
    b = m.gen_two_phase(3, (31, 31))
    assert a.equals(b)
    assert not a.equals(m.gen_two_phase(4, (31, 31)))


def test_two_phase_rejects_bad_args():
    with pytest.raises(m.MicrostructureError):
        m.gen_two_phase(0, (31, 31), hard_vf=1.0)
    with pytest.raises(m.MicrostructureError):
        m.gen_two_phase(0, (31, 31), hard_vf=0.0)
    with pytest.raises(m.MicrostructureError):
        m.gen_two_phase(0, (8, 8), sigma=5)
    with pytest.raises(m.MicrostructureError):
        m.PeriodicGrid((1, 8))


def test_porous_fraction_100_seeds():
    for seed in range(100):
        f = m.gen_porous(seed, (31, 31), porosity=0.15).volume_fraction(0)
        assert abs(f - 0.15) <= 1.0 / 961


def test_porous_zero_is_single_phase():
    ms = m.gen_porous(1, (31, 31), porosity=0.0)
    assert np.all(ms.phase == 1)


def test_porous_half_is_complement_of_two_phase():
    p = m.gen_porous(11, (31, 31), porosity=0.5)
    t = m.gen_two_phase(11, (31, 31), hard_vf=0.5)
    void = p.phase == 0
    hard = t.phase == 1
    # same ranking of the noise field: the solid (top 50%) is the hard set
    assert np.array_equal(void, ~hard)


def test_polycrystal_all_grains_present():
    ms = m.gen_voronoi_polycrystal(5, (31, 31, 31), n_grains=10)
    assert set(np.unique(ms.grain_id).tolist()) == set(range(10))
    assert ms.orientation.shape == (31, 31, 31, 3)


def test_polycrystal_single_grain_uniform():
    ms = m.gen_voronoi_polycrystal(2, (12, 12), n_grains=1)
    assert np.all(ms.orientation == ms.orientation[0, 0])


def _mean_extent(labels, axis):
    ext = []
    for g in np.unique(labels):
        idx = np.nonzero(labels == g)[axis]
        # periodic extent: smallest arc covering the occupied coordinates
        occ = np.unique(idx)
        n = labels.shape[axis]
        gaps = np.diff(np.concatenate([occ, [occ[0] + n]]))
        ext.append(n - gaps.max() + 1)
    return np.mean(ext)


def test_polycrystal_elongation():
    ratios = []
    for seed in range(5):
        a = m.gen_voronoi_polycrystal(seed, (48, 48), n_grains=12, elongation=[3, 1]).grain_id
        b = m.gen_voronoi_polycrystal(seed, (48, 48), n_grains=12, elongation=[1, 1]).grain_id
        ratios.append((_mean_extent(a, 0) / _mean_extent(a, 1),
                       _mean_extent(b, 0) / _mean_extent(b, 1)))
    r = np.array(ratios)
    assert r[:, 0].mean() > r[:, 1].mean()


def test_planar_2d_orientation_only_phi1():
    ms = m.gen_voronoi_polycrystal(0, (20, 20), n_grains=6)
    assert np.all(ms.orientation[..., 1:] == 0)


def test_dual_phase_fraction_within_one_grain():
    for seed in range(10):
        ms = m.gen_dual_phase(seed, (20, 20, 20), n_grains=50, hard_vf=0.2)
        sizes = np.bincount(ms.grain_id.ravel()) / ms.grain_id.size
        assert abs(ms.volume_fraction(1) - 0.2) <= sizes.max()
        assert np.all(ms.orientation[ms.phase == 1] == 0)


def test_dual_phase_limit_is_polycrystal():
    d = m.gen_dual_phase(3, (16, 16), n_grains=8, hard_vf=1e-9)
    p = m.gen_voronoi_polycrystal(3, (16, 16), n_grains=8)
    assert np.all(d.phase == 0)
    assert np.array_equal(d.orientation, p.orientation)


def test_dual_phase_determinism():
    a = m.gen_dual_phase(9, (12, 12, 12), n_grains=20)
    b = m.gen_dual_phase(9, (12, 12, 12), n_grains=20)
    assert a.equals(b)


def test_orientation_cos_phi_uniform():
    e = random_orientations(np.random.default_rng(0), 10_000)
    ks = stats.kstest(np.cos(e[:, 1]), "uniform", args=(-1, 2)).statistic
    assert ks < 0.02
    assert np.all((e[:, 0] >= 0) & (e[:, 0] < 2 * np.pi))
    assert np.all((e[:, 1] >= 0) & (e[:, 1] <= np.pi))


@settings(max_examples=25)
@given(seeds, st.integers(-15, 15), st.integers(-15, 15))
def test_smoothing_translation_equivariant(seed, a, b):
    noise = np.random.default_rng(seed).standard_normal((17, 23))
    f = ndimage.gaussian_filter(noise, 2.0, mode="wrap")
    g = ndimage.gaussian_filter(np.roll(noise, (a, b), axis=(0, 1)), 2.0, mode="wrap")
    assert np.allclose(g, np.roll(f, (a, b), axis=(0, 1)), atol=1e-12)


@settings(max_examples=25)
@given(seeds, st.integers(0, 19), st.integers(0, 13))
def test_voronoi_translation_equivariant(seed, a, b):
    dims = (20, 14)
    rng = np.random.default_rng(seed)
    # seeds at cell centres + 0.25 avoid exact distance ties
    pts = rng.integers(0, 14, (6, 2)) + rng.uniform(0.1, 0.4, (6, 2))
    base = _backend.voronoi_label(dims, pts, np.ones(2))
    moved = _backend.voronoi_label(dims, (pts + [a, b]) % dims, np.ones(2))
    assert np.array_equal(moved, np.roll(base, (a, b), axis=(0, 1)))


def test_roll_shifts_descriptors():
    ms = m.gen_dual_phase(1, (10, 12), n_grains=5)
    r = ms.roll((3, -2))
    assert np.array_equal(r.phase, np.roll(ms.phase, (3, -2), axis=(0, 1)))
    assert np.array_equal(r.orientation, np.roll(ms.orientation, (3, -2), axis=(0, 1)))


@pytest.mark.parametrize("gen", [
    lambda: m.gen_two_phase(2, (9, 11)),
    lambda: m.gen_voronoi_polycrystal(2, (6, 7, 8), n_grains=4),
    lambda: m.gen_dual_phase(2, (9, 9), n_grains=5),
])
def test_xms_round_trip(tmp_path, gen):
    ms = gen()
    p = tmp_path / "a.xms"
    m.write_microstructure(p, ms)
    back = m.read_microstructure(p)
    assert back.grid.dims == ms.grid.dims
    assert back.n_phases == ms.n_phases
    assert (back.phase is None) == (ms.phase is None)
    if ms.phase is not None:
        assert np.array_equal(back.phase, ms.phase)
    if ms.orientation is not None:
        assert np.array_equal(back.orientation, ms.orientation)
    assert not (tmp_path / "a.xms.tmp").exists()


def test_xms_header_layout(tmp_path):
    p = tmp_path / "b.xms"
    m.write_microstructure(p, m.gen_two_phase(0, (4, 5), sigma=0))
    raw = p.read_bytes()
    assert raw[:4] == b"XMS1" and raw[4] == 2
    assert int.from_bytes(raw[5:9], "little") == 4
    assert raw[13] == 1  # phase only
    assert len(raw) == 4 + 1 + 8 + 1 + 2 + 2 * 20


def test_xms_corrupt(tmp_path):
    p = tmp_path / "c.xms"
    p.write_bytes(b"NOPE")
    with pytest.raises(m.MicrostructureError):
        m.read_microstructure(p)
    m.write_microstructure(p, m.gen_two_phase(0, (4, 4), sigma=0))
    p.write_bytes(p.read_bytes() + b"\0")
    with pytest.raises(m.MicrostructureError):
        m.read_microstructure(p)


def test_microstructure_validation():
    with pytest.raises(m.MicrostructureError):
        m.Microstructure(m.PeriodicGrid((3, 3)))
    with pytest.raises(m.MicrostructureError):
        m.Microstructure(m.PeriodicGrid((3, 3)), np.full((3, 3), 2), n_phases=2)
