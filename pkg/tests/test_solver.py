import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from xlra import elasticity as el
from xlra.microstructure import gen_laminate, gen_two_phase, gen_uniform, gen_voronoi_polycrystal
from xlra.solver import SolverError, equilibrium_residual, solve_local_strain

E2 = np.array([1e-4, 0.0, 0.0])


def two_phase(seed=0, dims=(31, 31), ec=10):
    return el.assemble_stiffness_field(gen_two_phase(seed, dims), el.two_phase_material(ec))


@pytest.mark.parametrize("dims,E", [((16, 16), [1e-4, -2e-5, 3e-5]),
                                    ((6, 7, 8), [1e-4, 0, 0, 2e-5, 0, -1e-5])])
def test_homogeneous_uniform_one_iteration(dims, E):
    C = el.assemble_stiffness_field(gen_uniform(dims), el.two_phase_material(10))
    for scheme in ("basic", "eyre_milton"):
        s = solve_local_strain(C, E, scheme=scheme)
        dev = np.abs(s.values - np.asarray(E).reshape((-1,) + (1,) * len(dims)))
        assert dev.max() < 1e-12
        assert s.info["iterations"] == 1
        assert s.info["residual"] < 1e-12


def test_homogeneous_polycrystal_single_grain():
    ms = gen_voronoi_polycrystal(3, (8, 8, 8), n_grains=1)
    C = el.assemble_stiffness_field(ms, el.polycrystal_material("Cu"))
    s = solve_local_strain(C, [1e-4, 0, 0, 0, 0, 0])
    assert np.ptp(s.values, axis=(1, 2, 3)).max() < 1e-12


@pytest.mark.parametrize("scheme", ["basic", "eyre_milton"])
def test_two_phase_converged_and_mean_preserved(scheme):
    C = two_phase()
    s = solve_local_strain(C, E2, scheme=scheme)
    assert equilibrium_residual(C, s) <= 1e-8
    assert np.abs(s.values.mean(axis=(1, 2)) - E2).max() < 1e-12


def test_schemes_agree():
    C = two_phase(ec=10)
    a = solve_local_strain(C, E2, scheme="basic", tol=1e-10).values
    b = solve_local_strain(C, E2, scheme="eyre_milton", tol=1e-10).values
    assert np.abs(a - b).max() / np.abs(a).max() < 1e-7


def test_auto_scheme_by_contrast():
    assert solve_local_strain(two_phase(ec=10), E2).info["scheme"] == "basic"
    assert solve_local_strain(two_phase(ec=1000, dims=(16, 16)), E2,
                              scheme="auto").info["scheme"] == "eyre_milton"


def test_3d_polycrystal_converges():
    ms = gen_voronoi_polycrystal(1, (10, 10, 10), n_grains=6)
    C = el.assemble_stiffness_field(ms, el.polycrystal_material("Ni"))
    E = np.array([1e-4, 0, 0, 0, 0, 0])
    s = solve_local_strain(C, E)
    assert equilibrium_residual(C, s) <= 1e-8
    assert np.abs(s.values.mean(axis=(1, 2, 3)) - E).max() < 1e-12


@pytest.mark.parametrize("ec", [10.0, 100.0])
def test_laminate_iso_stress(ec):
    # layers normal to x1: sigma11 continuous, strain ratio equals the modulus ratio
    ms = gen_laminate((16, 8), axis=0, hard_fraction=0.5)
    C = el.assemble_stiffness_field(ms, el.two_phase_material(ec))
    s = solve_local_strain(C, E2, scheme="auto", tol=1e-12)
    hard, soft = ms.phase == 1, ms.phase == 0
    e11 = s.values[0]
    assert abs(e11[soft].mean() / e11[hard].mean() - ec) / ec < 1e-6
    # closed form: f_h e_h + f_s e_s = E, e_s = ec e_h
    e_h = E2[0] / (0.5 + 0.5 * ec)
    assert np.abs(e11[hard] - e_h).max() / e_h < 1e-6
    assert np.abs(s.values[1:]).max() < 1e-6 * E2[0]


def test_laminate_iso_strain():
    # loading parallel to the layers: e22 is uniform, sigma11 continuous
    ec = 10.0
    ms = gen_laminate((16, 8), axis=0, hard_fraction=0.25)
    mat = el.two_phase_material(ec)
    C = el.assemble_stiffness_field(ms, mat)
    E = np.array([0.0, 1e-4, 0.0])
    s = solve_local_strain(C, E, tol=1e-12)
    e22 = s.values[1]
    assert np.ptp(e22) / 1e-4 < 1e-6
    Ch, Cs = (el.reduce_plane_strain(p.stiffness()) for p in mat.phases[::-1])
    fh = 0.25
    # Ch11 e_h + Ch12 E22 = Cs11 e_s + Cs12 E22,  fh e_h + (1 - fh) e_s = 0
    A = np.array([[Ch[0, 0], -Cs[0, 0]], [fh, 1 - fh]])
    b = np.array([(Cs[0, 1] - Ch[0, 1]) * 1e-4, 0.0])
    e_h, e_s = np.linalg.solve(A, b)
    e11 = s.values[0]
    assert np.abs(e11[ms.phase == 1] - e_h).max() / abs(e_h) < 1e-6
    assert np.abs(e11[ms.phase == 0] - e_s).max() / abs(e_s) < 1e-6


@settings(max_examples=5)
@given(st.integers(0, 1000), st.floats(0.1, 10.0))
def test_linearity(seed, k):
    C = two_phase(seed, (15, 15))
    a = solve_local_strain(C, E2, tol=1e-12).values
    b = solve_local_strain(C, k * E2, tol=1e-12).values
    assert np.abs(b - k * a).max() / np.abs(k * a).max() < 1e-10


def test_voigt_reuss_bounds():
    for seed in range(3):
        C = two_phase(seed, (31, 31), ec=100)
        for E in (E2, np.array([0, 0, 1e-4])):
            s = solve_local_strain(C, E)
            energy = E @ el.hooke(C, s).values.reshape(3, -1).mean(axis=1)
            cells = C.flat()
            voigt = cells.mean(axis=-1)
            reuss = np.linalg.inv(np.linalg.inv(np.moveaxis(cells, -1, 0)).mean(axis=0))
            assert E @ reuss @ E <= energy * (1 + 1e-9)
            assert energy <= E @ voigt @ E * (1 + 1e-9)


def test_residual_conventions(rng):
    C = two_phase()
    uniform = np.broadcast_to(E2[:, None, None], (3, 31, 31))
    C_h = el.assemble_stiffness_field(gen_uniform((31, 31)), el.two_phase_material(10))
    assert equilibrium_residual(C_h, uniform) < 1e-14
    assert equilibrium_residual(C, np.zeros((3, 31, 31))) == 0.0
    assert equilibrium_residual(C, rng.standard_normal((3, 31, 31))) > 0.1


def test_non_convergence_raises():
    with pytest.raises(SolverError) as info:
        solve_local_strain(two_phase(ec=1000), E2, scheme="basic", max_iter=5)
    assert info.value.iterations == 5


def test_bad_arguments():
    C = two_phase(dims=(8, 8))
    with pytest.raises(ValueError):
        solve_local_strain(C, np.zeros(6))
    with pytest.raises(ValueError):
        solve_local_strain(C, E2, scheme="cg")
    with pytest.raises(ValueError):
        solve_local_strain(C, E2, tol=0)


@pytest.mark.parametrize("dims", [(16, 16), (15, 16), (8, 8, 8)])
def test_even_grid_high_contrast_converges(dims):
    ms = gen_two_phase(0, dims, sigma=1.0)
    C = el.assemble_stiffness_field(ms, el.two_phase_material(1000))
    E = E2 if len(dims) == 2 else np.array([1e-4, 0, 0, 0, 0, 0])
    s = solve_local_strain(C, E, scheme="eyre_milton", max_iter=2000)
    assert equilibrium_residual(C, s) <= 1e-8
    assert np.abs(s.values.reshape(len(E), -1).mean(axis=1) - E).max() < 1e-12
