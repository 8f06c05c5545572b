"""Linear elasticity on periodic grids: stiffness tensors, fields, Green operator.

Voigt order is (11, 22, 33, 23, 13, 12) in 3D and (11, 22, 12) for 2D plane
strain.  Strain vectors carry engineering shears (gamma = 2 eps); stress
vectors carry true components.  Stiffness values are in GPa.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .rotations import bunge_to_matrix

VOIGT_3D = ((0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1))
PLANE = [0, 1, 5]  # in-plane rows/columns of a 6x6 Voigt matrix
STRAIN_LABELS = {2: ("e11", "e22", "e12"), 3: ("e11", "e22", "e33", "e23", "e13", "e12")}
STRESS_LABELS = {2: ("s11", "s22", "s12"), 3: ("s11", "s22", "s33", "s23", "s13", "s12")}


class ElasticityError(ValueError):
    pass


def _check_pd(C, what="stiffness"):
    C = np.asarray(C, dtype=float)
    if not np.allclose(C, C.T, rtol=1e-12, atol=1e-12 * np.abs(C).max()):
        raise ElasticityError(f"{what} is not symmetric")
    if np.linalg.eigvalsh(C).min() <= 0:
        raise ElasticityError(f"{what} is not positive definite")
    return C


def cubic_stiffness(C11, C12, C44):
    """6x6 Voigt stiffness of a cubic crystal in its own axes."""
    C = np.zeros((6, 6))
    C[:3, :3] = C12
    C[np.arange(3), np.arange(3)] = C11
    C[np.arange(3, 6), np.arange(3, 6)] = C44
    return _check_pd(C, f"cubic stiffness ({C11}, {C12}, {C44})")


def isotropic_stiffness(E, nu):
    if E <= 0 or not -1.0 < nu < 0.5:
        raise ElasticityError(f"invalid isotropic constants E={E}, nu={nu}")
    lam = E * nu / ((1 + nu) * (1 - 2 * nu))
    mu = E / (2 * (1 + nu))
    return cubic_stiffness(lam + 2 * mu, lam, mu)


def lame_stiffness(lam, mu):
    return cubic_stiffness(lam + 2 * mu, lam, mu)


def zener_ratio(C11, C12, C44):
    if C11 == C12:
        raise ZeroDivisionError("Zener ratio undefined for C11 == C12")
    return 2.0 * C44 / (C11 - C12)


def voigt_to_tensor(C):
    """(…, 6, 6) Voigt stiffness -> (…, 3, 3, 3, 3) tensor."""
    C = np.asarray(C, dtype=float)
    T = np.zeros(C.shape[:-2] + (3, 3, 3, 3))
    for I, (i, j) in enumerate(VOIGT_3D):
        for J, (k, l) in enumerate(VOIGT_3D):
            v = C[..., I, J]
            T[..., i, j, k, l] = v
            T[..., j, i, k, l] = v
            T[..., i, j, l, k] = v
            T[..., j, i, l, k] = v
    return T


def tensor_to_voigt(T):
    T = np.asarray(T)
    C = np.zeros(T.shape[:-4] + (6, 6), dtype=T.dtype)
    for I, (i, j) in enumerate(VOIGT_3D):
        for J, (k, l) in enumerate(VOIGT_3D):
            C[..., I, J] = T[..., i, j, k, l]
    return C


def rotate_stiffness(C, euler):
    """Rotate a Voigt stiffness into the sample frame.

    ``C'_ijkl = R_ip R_jq R_kr R_ls C_pqrs`` with ``R`` the active Bunge
    rotation of ``euler``; broadcasts over leading axes of ``euler``.
    """
    R = bunge_to_matrix(euler)
    T = voigt_to_tensor(C)
    Tr = np.einsum("...ip,...jq,...kr,...ls,pqrs->...ijkl", R, R, R, R, T, optimize=True)
    return tensor_to_voigt(Tr)


def reduce_plane_strain(C):
    """In-plane 3x3 block of a (…, 6, 6) Voigt stiffness."""
    C = np.asarray(C)
    return C[..., PLANE, :][..., :, PLANE]


def kelvin_moduli(C):
    """Extremal bulk-like and shear-like Kelvin eigenvalues of a 6x6 stiffness.

    Returns ``(3K, 2mu_min, 2mu_max)``: the hydrostatic-mode stiffness and the
    extremes of the stiffness restricted to deviatoric strains.
    """
    C = np.asarray(C, dtype=float)
    scale = np.array([1, 1, 1, np.sqrt(2), np.sqrt(2), np.sqrt(2)])
    Ck = C * scale[:, None] * scale[None, :]
    h = np.array([1, 1, 1, 0, 0, 0]) / np.sqrt(3)
    three_k = h @ Ck @ h
    P = np.eye(6) - np.outer(h, h)
    dev = np.linalg.eigvalsh(P @ Ck @ P)
    dev = np.sort(dev)[1:]  # drop the hydrostatic null direction
    return three_k, dev.min(), dev.max()


# --------------------------------------------------------------------------
# material description

@dataclass
class PhaseMaterial:
    """Elastic constants of one phase: isotropic (E, nu) or cubic (C11, C12, C44)."""

    kind: str
    constants: tuple
    crystalline: bool = False
    name: str = ""

    def stiffness(self):
        if self.kind == "isotropic":
            return isotropic_stiffness(*self.constants)
        if self.kind == "cubic":
            return cubic_stiffness(*self.constants)
        raise ElasticityError(f"unknown phase kind {self.kind!r}")

    def to_dict(self):
        return {"kind": self.kind, "constants": list(self.constants),
                "crystalline": self.crystalline, "name": self.name}

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], tuple(d["constants"]), d.get("crystalline", False), d.get("name", ""))


@dataclass
class MaterialSpec:
    """Per-phase elastic constants, indexed by phase id.

    For microstructures without phase ids (single-phase polycrystals) phase 0
    is used for every cell.
    """

    phases: list
    ec: float | None = None
    name: str = ""

    def to_dict(self):
        return {"phases": [p.to_dict() for p in self.phases], "ec": self.ec, "name": self.name}

    @classmethod
    def from_dict(cls, d):
        return cls([PhaseMaterial.from_dict(p) for p in d["phases"]], d.get("ec"), d.get("name", ""))


HARD_MODULUS = 2000.0  # GPa, hard phase of composites
DEFAULT_NU = 0.3

# FCC single-crystal constants (C11, C12, C44) in GPa
FCC_CONSTANTS = {
    "Al": (106.75, 60.41, 28.34),
    "Pt": (346.7, 250.7, 76.5),
    "Ni": (251.0, 150.0, 123.7),
    "Au": (192.7, 163.2, 42.2),
    "Ag": (124.1, 93.7, 46.4),
    "Cu": (168.4, 121.4, 75.4),
    "Pb": (49.5, 42.3, 14.9),
}
# Zener ratios as printed in the source table; Ni's entry disagrees with its constants.
FCC_TABULATED_ZENER = {"Al": 1.223, "Pt": 1.59, "Ni": 2.586, "Au": 2.86, "Ag": 3.053,
                       "Cu": 3.21, "Pb": 4.14}
FERRITE = (233.3, 135.5, 128.0)
MARTENSITE = (417.4, 242.4)  # C11, C12; isotropic so C44 = (C11 - C12) / 2


def two_phase_material(ec, hard_E=HARD_MODULUS, nu=DEFAULT_NU):
    """Phase 0 soft (E = hard_E / ec), phase 1 hard."""
    return MaterialSpec([PhaseMaterial("isotropic", (hard_E / ec, nu), name="soft"),
                         PhaseMaterial("isotropic", (hard_E, nu), name="hard")], ec=ec,
                        name=f"two_phase_ec{ec:g}")


def porous_material(ec=1e4, solid_E=HARD_MODULUS, nu=DEFAULT_NU):
    """Phase 0 is a very compliant stand-in for void, phase 1 the solid."""
    m = two_phase_material(ec, solid_E, nu)
    m.phases[0].name = "void"
    m.phases[1].name = "solid"
    m.name = f"porous_ec{ec:g}"
    return m


def polycrystal_material(metal="Ni"):
    return MaterialSpec([PhaseMaterial("cubic", FCC_CONSTANTS[metal], True, metal)], name=metal)


def dual_phase_material():
    c11, c12 = MARTENSITE
    return MaterialSpec([PhaseMaterial("cubic", FERRITE, True, "ferrite"),
                         PhaseMaterial("cubic", (c11, c12, (c11 - c12) / 2.0), False,
                                       "martensite")], name="dual_phase_steel")


# --------------------------------------------------------------------------
# fields

@dataclass
class StiffnessField:
    """Per-cell 6x6 Voigt stiffness plus the volume-mean reference.

    ``cells`` has shape ``(6, 6, *dims)``.  ``voigt`` gives the matrices used
    by the solver: the full 6x6 in 3D, the plane-strain 3x3 block in 2D.
    """

    dims: tuple
    cells: np.ndarray
    reference: np.ndarray

    @property
    def ndim(self):
        return len(self.dims)

    @property
    def nv(self):
        return 3 if self.ndim == 2 else 6

    @property
    def voigt(self):
        if self.ndim == 3:
            return self.cells
        return self.cells[PLANE][:, PLANE]

    @property
    def reference_voigt(self):
        return self.reference if self.ndim == 3 else reduce_plane_strain(self.reference)

    def flat(self):
        """Solver-sized matrices with cells flattened: (nv, nv, N)."""
        v = self.voigt
        return np.ascontiguousarray(v.reshape(v.shape[0], v.shape[1], -1))

    def moduli_bounds(self):
        """(3K_min, 3K_max, 2mu_min, 2mu_max) over the distinct cell stiffnesses."""
        flat = self.cells.reshape(36, -1).T
        uniq = np.unique(flat, axis=0).reshape(-1, 6, 6)
        vals = np.array([kelvin_moduli(c) for c in uniq])
        return vals[:, 0].min(), vals[:, 0].max(), vals[:, 1].min(), vals[:, 2].max()


def assemble_stiffness_field(ms, spec, reference_rule="mean"):
    """Per-cell stiffness from phase constants and orientations.

    ``reference_rule`` is ``"mean"`` (volume average of cell matrices) or
    ``"midpoint"`` (isotropic medium at the midpoint of extremal moduli).
    """
    dims = ms.grid.dims
    n = ms.grid.size
    phase = ms.phase if ms.phase is not None else np.zeros(dims, dtype=np.int64)
    present = np.unique(phase)
    if present.max() >= len(spec.phases):
        raise ElasticityError(f"material spec lacks constants for phase {present.max()}")
    cells = np.empty((n, 6, 6))
    flat_phase = phase.ravel()
    for p in present:
        mat = spec.phases[p]
        C = mat.stiffness()
        sel = flat_phase == p
        if mat.crystalline:
            if ms.orientation is None:
                raise ElasticityError(f"phase {p} is crystalline but microstructure has no "
                                      "orientations")
            eul = ms.orientation.reshape(n, 3)[sel]
            uniq, inv = np.unique(eul, axis=0, return_inverse=True)
            cells[sel] = rotate_stiffness(C, uniq)[inv.ravel()]
        else:
            cells[sel] = C
    cells = np.moveaxis(cells, 0, -1).reshape((6, 6) + dims)
    field_ = StiffnessField(dims, np.ascontiguousarray(cells), np.zeros((6, 6)))
    field_.reference = reference_stiffness(field_, reference_rule)
    return field_


def reference_stiffness(C_field, rule="mean"):
    """Reference medium for a stiffness field (6x6 Voigt)."""
    if rule == "mean":
        return C_field.cells.reshape(6, 6, -1).mean(axis=-1)
    k_lo, k_hi, m_lo, m_hi = C_field.moduli_bounds()
    if rule == "midpoint":
        three_k, two_mu = 0.5 * (k_lo + k_hi), 0.5 * (m_lo + m_hi)
    elif rule == "geometric":
        three_k, two_mu = np.sqrt(k_lo * k_hi), np.sqrt(m_lo * m_hi)
    else:
        raise ElasticityError(f"unknown reference rule {rule!r}")
    mu = two_mu / 2.0
    lam = three_k / 3.0 - 2.0 * mu / 3.0
    return lame_stiffness(lam, mu)


@dataclass
class TensorField:
    """Voigt-component field of shape ``(nv, *dims)`` with its applied mean."""

    values: np.ndarray
    mean: np.ndarray
    labels: tuple
    info: dict = field(default_factory=dict)

    @property
    def dims(self):
        return self.values.shape[1:]

    def component(self, label):
        return self.values[self.labels.index(label)]


class StrainField(TensorField):
    pass


class StressField(TensorField):
    """Stress field; in 2D ``out_of_plane`` carries s33 from the plane-strain constraint."""

    out_of_plane: np.ndarray | None = None


def _strain_values(strain):
    return strain.values if isinstance(strain, TensorField) else np.asarray(strain)


def hooke(C_field, strain):
    """Cellwise Voigt product sigma = C eps (plus s33 in plane strain)."""
    eps = _strain_values(strain)
    if eps.shape[1:] != tuple(C_field.dims):
        raise ElasticityError(f"grid mismatch: strain {eps.shape[1:]} vs stiffness {C_field.dims}")
    nv = C_field.nv
    flat = eps.reshape(nv, -1)
    sig = _backend.cell_matvec(C_field.flat(), flat).reshape(eps.shape)
    mean = C_field.reference_voigt @ eps.reshape(nv, -1).mean(axis=1)
    out = StressField(sig, mean, STRESS_LABELS[C_field.ndim])
    if C_field.ndim == 2:
        row = C_field.cells[2][PLANE]  # C31, C32, C36
        out.out_of_plane = np.einsum("i...,i...->...", row, eps)
    return out


def von_mises(stress):
    """Cellwise von Mises equivalent stress."""
    s = stress.values if isinstance(stress, TensorField) else np.asarray(stress)
    if s.shape[0] == 6:
        s11, s22, s33, s23, s13, s12 = s
    elif s.shape[0] == 3:
        s11, s22, s12 = s
        s33 = getattr(stress, "out_of_plane", None)
        if s33 is None:
            s33 = np.zeros_like(s11)
        s23 = s13 = np.zeros_like(s11)
    else:
        raise ElasticityError(f"expected 3 or 6 stress components, got {s.shape[0]}")
    return np.sqrt(0.5 * ((s11 - s22) ** 2 + (s22 - s33) ** 2 + (s33 - s11) ** 2)
                   + 3.0 * (s23**2 + s13**2 + s12**2))


# --------------------------------------------------------------------------
# Green operator

def frequencies(dims):
    """Centered integer frequencies scaled by 2 pi / n, FFT ordering, shape (d, *dims)."""
    axes = [2.0 * np.pi * np.fft.fftfreq(n, d=1.0) for n in dims]
    return np.stack(np.meshgrid(*axes, indexing="ij"))


def _tensor_reference(C0_voigt, d):
    if d == 3:
        return voigt_to_tensor(C0_voigt)
    full = np.zeros((6, 6))
    full[np.ix_(PLANE, PLANE)] = C0_voigt
    return voigt_to_tensor(full)[:2, :2, :2, :2]


def acoustic_inverse(C0_voigt, xi):
    """Inverse acoustic tensors ``N = K^-1`` with ``K_ik = C0_ijkl xi_j xi_l``.

    ``xi`` has shape (d, F); returns (d, d, F) with zeros at xi = 0.
    """
    d = xi.shape[0]
    C4 = _tensor_reference(C0_voigt, d)
    K = np.einsum("ijkl,jf,lf->fik", C4, xi, xi)
    zero = np.all(xi == 0, axis=0)
    K[zero] = np.eye(d)
    try:
        N = np.linalg.inv(K)
    except np.linalg.LinAlgError as exc:
        raise ElasticityError("singular acoustic tensor; reference not positive definite") from exc
    if not np.all(np.isfinite(N)):
        raise ElasticityError("singular acoustic tensor; reference not positive definite")
    N[zero] = 0.0
    return np.ascontiguousarray(np.moveaxis(N, 0, -1))


def gamma_hat(reference, xi):
    """Green operator at one frequency as a Voigt matrix.

    Maps a stress-like Voigt vector to an engineering-strain Voigt vector,
    ``eps = -G @ tau``.  ``reference`` is 6x6 (3D) or 3x3 (plane strain) and
    fixes the dimension; ``G(0) = 0``.
    """
    xi = np.asarray(xi, dtype=float)
    d = xi.shape[0]
    pairs = VOIGT_3D if d == 3 else ((0, 0), (1, 1), (0, 1))
    nv = len(pairs)
    if not np.any(xi):
        return np.zeros((nv, nv))
    N = acoustic_inverse(np.asarray(reference, dtype=float), xi[:, None])[..., 0]

    def gam(i, j, k, l):
        return 0.25 * (N[i, k] * xi[j] * xi[l] + N[i, l] * xi[j] * xi[k]
                       + N[j, k] * xi[i] * xi[l] + N[j, l] * xi[i] * xi[k])

    a = [1.0 if i == j else 2.0 for i, j in pairs]
    G = np.empty((nv, nv))
    for I, (i, j) in enumerate(pairs):
        for J, (k, l) in enumerate(pairs):
            G[I, J] = a[I] * a[J] * gam(i, j, k, l)
    return G
