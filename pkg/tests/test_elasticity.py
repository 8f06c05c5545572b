import numpy as np
import pytest
from hypothesis import given, strategies as st

from xlra import elasticity as el
from xlra.microstructure import gen_two_phase, gen_uniform, gen_voronoi_polycrystal
from xlra.rotations import cubic_rotations, matrix_to_bunge, random_orientations

TABLE = {"Al": 1.223, "Pt": 1.59, "Au": 2.86, "Ag": 3.053, "Cu": 3.21, "Pb": 4.14}


def test_cubic_stiffness_entries():
    C = el.cubic_stiffness(251.0, 150.0, 123.7)
    assert C[0, 0] == 251.0 and C[3, 3] == 123.7 and C[0, 1] == 150.0
    assert np.array_equal(C, C.T)


def test_al_positive_definite():
    assert np.all(np.linalg.eigvalsh(el.cubic_stiffness(106.75, 60.41, 28.34)) > 0)


def test_not_positive_definite_rejected():
    with pytest.raises(el.ElasticityError):
        el.cubic_stiffness(100.0, 120.0, 30.0)


@pytest.mark.parametrize("metal", sorted(TABLE))
def test_zener_matches_table(metal):
    assert abs(el.zener_ratio(*el.FCC_CONSTANTS[metal]) - TABLE[metal]) <= 0.005


def test_zener_examples():
    assert abs(el.zener_ratio(106.75, 60.41, 28.34) - 1.223) <= 0.001
    assert abs(el.zener_ratio(49.5, 42.3, 14.9) - 4.14) <= 0.01
    assert el.zener_ratio(200.0, 100.0, 50.0) == 1.0


def test_ni_tabulated_zener_is_inconsistent():
    # the listed constants give 2.449, not the tabulated 2.586
    z = el.zener_ratio(*el.FCC_CONSTANTS["Ni"])
    assert abs(z - 2.449) < 0.001
    assert abs(z - el.FCC_TABULATED_ZENER["Ni"]) > 0.1


def test_rotate_identity():
    C = el.cubic_stiffness(*el.FCC_CONSTANTS["Cu"])
    assert np.allclose(el.rotate_stiffness(C, np.zeros(3)), C, atol=1e-12)


def test_rotate_cubic_group_invariance():
    C = el.cubic_stiffness(*el.FCC_CONSTANTS["Pb"])
    eul = matrix_to_bunge(cubic_rotations())
    R = el.rotate_stiffness(C, eul)
    assert np.max(np.abs(R - C)) < 1e-10


@given(st.floats(0, 2 * np.pi), st.floats(0, np.pi), st.floats(0, 2 * np.pi))
def test_rotate_isotropic_unchanged(a, b, c):
    C = el.isotropic_stiffness(200.0, 0.3)
    assert np.allclose(el.rotate_stiffness(C, np.array([a, b, c])), C, atol=1e-9)


def test_rotate_preserves_invariants(rng):
    C = el.cubic_stiffness(*el.FCC_CONSTANTS["Ni"])
    R = el.rotate_stiffness(C, random_orientations(rng, 10))
    k = np.array([1, 1, 1, 2, 2, 2.0]) ** 0.5
    ev = np.linalg.eigvalsh(C * np.outer(k, k))
    for r in R:
        assert np.allclose(np.linalg.eigvalsh(r * np.outer(k, k)), ev)


def test_voigt_tensor_round_trip():
    C = el.cubic_stiffness(*el.FERRITE)
    T = el.voigt_to_tensor(C)
    assert np.allclose(T, np.transpose(T, (1, 0, 2, 3)))
    assert np.allclose(T, np.transpose(T, (2, 3, 0, 1)))
    assert np.array_equal(el.tensor_to_voigt(T), C)


def test_assemble_single_phase_reference():
    ms = gen_uniform((6, 6))
    spec = el.MaterialSpec([el.PhaseMaterial("isotropic", (200.0, 0.3))])
    C = el.assemble_stiffness_field(ms, spec)
    assert np.allclose(C.reference, el.isotropic_stiffness(200.0, 0.3))


def test_assemble_mean_reference():
    ms = gen_two_phase(0, (20, 20), hard_vf=0.2)
    spec = el.two_phase_material(100)
    C = el.assemble_stiffness_field(ms, spec)
    hard = el.isotropic_stiffness(2000.0, 0.3)
    soft = el.isotropic_stiffness(20.0, 0.3)
    assert np.allclose(C.reference, 0.2 * hard + 0.8 * soft, rtol=1e-13)


def test_assemble_polycrystal_rotates_per_cell():
    ms = gen_voronoi_polycrystal(1, (8, 8, 8), n_grains=4)
    C = el.assemble_stiffness_field(ms, el.polycrystal_material("Cu"))
    cell = (2, 3, 4)
    expect = el.rotate_stiffness(el.cubic_stiffness(*el.FCC_CONSTANTS["Cu"]),
                                 ms.orientation[cell])
    assert np.allclose(C.cells[(slice(None), slice(None)) + cell], expect)


def test_assemble_missing_phase():
    ms = gen_two_phase(0, (8, 8))
    spec = el.MaterialSpec([el.PhaseMaterial("isotropic", (1.0, 0.3))])
    with pytest.raises(el.ElasticityError):
        el.assemble_stiffness_field(ms, spec)


def test_hooke_zero_strain():
    ms = gen_two_phase(0, (8, 8))
    C = el.assemble_stiffness_field(ms, el.two_phase_material(10))
    assert np.all(el.hooke(C, np.zeros((3, 8, 8))).values == 0)


def test_hooke_plane_strain_uniaxial():
    ms = gen_uniform((4, 4))
    spec = el.MaterialSpec([el.PhaseMaterial("isotropic", (2000.0, 0.3))])
    C = el.assemble_stiffness_field(ms, spec)
    eps = np.zeros((3, 4, 4))
    eps[0] = 1e-4
    s = el.hooke(C, eps)
    expect = 2000.0 * 0.7 / (1.3 * 0.4) * 1e-4
    assert np.allclose(s.values[0], expect, rtol=1e-14)
    assert abs(expect - 0.2692) < 1e-4
    lam = 2000.0 * 0.3 / (1.3 * 0.4)
    assert np.allclose(s.out_of_plane, lam * 1e-4)


def test_hooke_grid_mismatch():
    C = el.assemble_stiffness_field(gen_uniform((4, 4)), el.two_phase_material(10))
    with pytest.raises(el.ElasticityError):
        el.hooke(C, np.zeros((3, 4, 5)))


def test_von_mises_cases():
    s = 3.0
    hyd = np.array([s, s, s, 0, 0, 0.0])[:, None]
    uni = np.array([s, 0, 0, 0, 0, 0.0])[:, None]
    shear = np.array([0, 0, 0, 0, 0, s])[:, None]
    assert np.allclose(el.von_mises(hyd), 0.0)
    assert np.allclose(el.von_mises(uni), s)
    assert np.allclose(el.von_mises(shear), np.sqrt(3) * s)


def test_frequencies_layout():
    xi = el.frequencies((4, 5))
    assert xi.shape == (2, 4, 5)
    assert np.allclose(xi[0, :, 0], 2 * np.pi * np.array([0, 1, -2, -1]) / 4)
    assert np.all(xi[:, 0, 0] == 0)


def test_gamma_hat_zero_frequency():
    C0 = el.isotropic_stiffness(100.0, 0.25)
    assert np.all(el.gamma_hat(C0, np.zeros(3)) == 0)
    assert np.all(el.gamma_hat(el.reduce_plane_strain(C0), np.zeros(2)) == 0)


@given(st.lists(st.floats(-3, 3), min_size=3, max_size=3).filter(
    lambda v: np.linalg.norm(v) > 1e-3))
def test_gamma_hat_symmetric_projection(xi):
    xi = np.array(xi)
    C0 = el.rotate_stiffness(el.cubic_stiffness(*el.FCC_CONSTANTS["Ni"]), np.array([0.3, 1.1, 2.0]))
    G = el.gamma_hat(C0, xi)
    assert np.allclose(G, G.T, atol=1e-12 * np.abs(G).max())
    # Gamma C0 Gamma = Gamma (projection onto compatible strains)
    assert np.allclose(G @ C0 @ G, G, atol=1e-10 * np.abs(G).max())


def test_gamma_hat_isotropic_closed_form(rng):
    lam, mu = 70.0, 30.0
    C0 = el.lame_stiffness(lam, mu)
    d = np.eye(3)
    for _ in range(10):
        xi = rng.standard_normal(3)
        n2 = xi @ xi
        T = (np.einsum("ik,j,l->ijkl", d, xi, xi) + np.einsum("il,j,k->ijkl", d, xi, xi)
             + np.einsum("jk,i,l->ijkl", d, xi, xi) + np.einsum("jl,i,k->ijkl", d, xi, xi))
        T = T / (4 * mu * n2) - (lam + mu) / (mu * (lam + 2 * mu)) \
            * np.einsum("i,j,k,l->ijkl", xi, xi, xi, xi) / n2**2
        a = np.array([1, 1, 1, 2, 2, 2.0])
        expect = np.array([[a[I] * a[J] * T[i, j, k, l] for J, (k, l) in enumerate(el.VOIGT_3D)]
                           for I, (i, j) in enumerate(el.VOIGT_3D)])
        assert np.max(np.abs(el.gamma_hat(C0, xi) - expect)) < 1e-12


def test_reference_rules_positive_definite():
    ms = gen_two_phase(0, (10, 10))
    C = el.assemble_stiffness_field(ms, el.two_phase_material(1000))
    for rule in ("mean", "midpoint", "geometric"):
        assert np.all(np.linalg.eigvalsh(el.reference_stiffness(C, rule)) > 0)
    with pytest.raises(el.ElasticityError):
        el.reference_stiffness(C, "median")


def test_material_spec_round_trip():
    m = el.dual_phase_material()
    assert el.MaterialSpec.from_dict(m.to_dict()) == m
