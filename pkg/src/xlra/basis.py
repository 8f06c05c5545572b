"""Microstructure descriptor bases feeding the surrogate expansion.

Four kinds are supported:

``primitive``
    one-hot phase indicators (partition of unity);
``gsh_cubic_3d``
    the constant function plus the nine degree-4 symmetrized generalized
    spherical harmonics for cubic crystal / triclinic sample symmetry;
``planar_fourier_2d``
    4-fold symmetric Fourier series in the in-plane crystal angle;
``dual_phase``
    an indicator for the non-crystalline phase followed by the orientation
    basis gated by the crystalline-phase indicator.

All evaluators are vectorised over cells.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from math import factorial, sqrt

import numpy as np

from .rotations import planar_angle

KINDS = ("primitive", "gsh_cubic_3d", "planar_fourier_2d", "dual_phase")
GSH_DEGREE = 4

# Coefficients of the cubic-invariant vector of the l = 4 representation
# over the crystal-side index m' in {-4, 0, 4}.
CUBIC_INVARIANT_L4 = {-4: sqrt(5.0 / 24.0), 0: sqrt(7.0 / 12.0), 4: sqrt(5.0 / 24.0)}


class BasisError(ValueError):
    pass


@dataclass(frozen=True)
class BasisSpec:
    """Which basis to evaluate and its dimension ``M``.

    ``orientation_kind`` is only used by ``dual_phase`` and names the
    orientation sub-basis; ``crystal_phase`` is the phase id whose cells
    carry orientations.
    """

    kind: str
    M: int
    n_phases: int = 1
    n_harmonics: int = 0
    gsh_count: int = 10
    orientation_kind: str = ""
    crystal_phase: int = 0
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise BasisError(f"unknown basis kind {self.kind!r}")
        if self.M != _expected_dim(self):
            raise BasisError(f"M={self.M} inconsistent with {self.kind} parameters")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def _expected_dim(spec):
    if spec.kind == "primitive":
        return spec.n_phases
    if spec.kind == "gsh_cubic_3d":
        if spec.gsh_count not in (1, 10):
            raise BasisError("gsh_cubic_3d supports 1 or 10 functions")
        return spec.gsh_count
    if spec.kind == "planar_fourier_2d":
        if spec.n_harmonics < 0:
            raise BasisError("n_harmonics must be >= 0")
        return 1 + 2 * spec.n_harmonics
    # dual_phase
    if spec.orientation_kind == "gsh_cubic_3d":
        return 1 + spec.gsh_count
    if spec.orientation_kind == "planar_fourier_2d":
        return 1 + 1 + 2 * spec.n_harmonics
    raise BasisError("dual_phase needs orientation_kind gsh_cubic_3d or planar_fourier_2d")


def primitive_spec(n_phases):
    return BasisSpec("primitive", M=n_phases, n_phases=n_phases)


def gsh_spec(count=10):
    return BasisSpec("gsh_cubic_3d", M=count, gsh_count=count)


def planar_spec(n_harmonics=1):
    return BasisSpec("planar_fourier_2d", M=1 + 2 * n_harmonics, n_harmonics=n_harmonics)


def dual_spec(orientation_kind="gsh_cubic_3d", crystal_phase=0, n_harmonics=1, gsh_count=10):
    m_orient = gsh_count if orientation_kind == "gsh_cubic_3d" else 1 + 2 * n_harmonics
    return BasisSpec("dual_phase", M=1 + m_orient, n_phases=2, n_harmonics=n_harmonics,
                     gsh_count=gsh_count, orientation_kind=orientation_kind,
                     crystal_phase=crystal_phase)


# --------------------------------------------------------------------------
# scalar-level evaluators

def eval_primitive(phase_id, n_phases):
    phase_id = np.asarray(phase_id)
    if np.any(phase_id < 0) or np.any(phase_id >= n_phases):
        raise BasisError(f"phase id out of range [0, {n_phases})")
    return np.eye(n_phases)[phase_id]


def wigner_small_d(l, m, n, beta):
    """Wigner small-d ``d^l_{mn}(beta)`` for active z-y-z rotations."""
    beta = np.asarray(beta, dtype=float)
    c = np.cos(beta / 2.0)
    s = np.sin(beta / 2.0)
    pref = sqrt(factorial(l + m) * factorial(l - m) * factorial(l + n) * factorial(l - n))
    out = np.zeros_like(beta)
    for k in range(max(0, n - m), min(l + n, l - m) + 1):
        den = factorial(l + n - k) * factorial(k) * factorial(l - k - m) * factorial(k - n + m)
        sign = -1.0 if (k - n + m) % 2 else 1.0
        out = out + sign * pref / den * c ** (2 * l - 2 * k + n - m) * s ** (2 * k - n + m)
    return out


def wigner_D(l, m, n, alpha, beta, gamma):
    """Matrix element ``D^l_{mn}`` of the rotation ``Rz(alpha) Ry(beta) Rz(gamma)``."""
    return np.exp(-1j * m * np.asarray(alpha)) * wigner_small_d(l, m, n, beta) * \
        np.exp(-1j * n * np.asarray(gamma))


def _bunge_to_zyz(euler):
    # Rx(P) = Rz(-pi/2) Ry(P) Rz(pi/2)
    return euler[..., 0] - np.pi / 2.0, euler[..., 1], euler[..., 2] + np.pi / 2.0


def cubic_l4_functions(euler):
    """Complex cubic-invariant degree-4 functions ``f_m``, m = -4..4 (shape (..., 9))."""
    euler = np.asarray(euler, dtype=float)
    alpha, beta, gamma = _bunge_to_zyz(euler)
    l = GSH_DEGREE
    out = np.zeros(euler.shape[:-1] + (2 * l + 1,), dtype=complex)
    for i, m in enumerate(range(-l, l + 1)):
        for n, w in CUBIC_INVARIANT_L4.items():
            out[..., i] += w * wigner_D(l, m, n, alpha, beta, gamma)
    return out


def eval_gsh_cubic(euler, count=10):
    """Real symmetrized GSH values, normalised to unit L2 norm under Haar measure.

    Index 0 is the constant function; indices 1..9 are
    ``3 f_0, 3*sqrt(2) Re f_m, 3*sqrt(2) Im f_m`` for m = 1..4.
    """
    euler = np.asarray(euler, dtype=float)
    if count == 1:
        return np.ones(euler.shape[:-1] + (1,))
    f = cubic_l4_functions(euler)
    l = GSH_DEGREE
    cols = [np.ones(euler.shape[:-1]), 3.0 * f[..., l].real]
    for m in range(1, l + 1):
        cols.append(3.0 * sqrt(2.0) * f[..., l + m].real)
        cols.append(3.0 * sqrt(2.0) * f[..., l + m].imag)
    return np.stack(cols, axis=-1)


def eval_planar(theta, n_harmonics):
    """[1, cos 4t, sin 4t, cos 8t, sin 8t, ...] for in-plane angle ``t``."""
    if n_harmonics < 0:
        raise BasisError("n_harmonics must be >= 0")
    theta = np.asarray(theta, dtype=float)
    cols = [np.ones_like(theta)]
    for h in range(1, n_harmonics + 1):
        cols.append(np.cos(4 * h * theta))
        cols.append(np.sin(4 * h * theta))
    return np.stack(cols, axis=-1)


def _eval_orientation(euler, spec, kind):
    if kind == "gsh_cubic_3d":
        return eval_gsh_cubic(euler, spec.gsh_count)
    return eval_planar(planar_angle(euler), spec.n_harmonics)


def eval_dual(phase_id, euler, spec):
    """Phase-gated dual-phase basis.

    Non-crystalline cells give ``[1, 0, ..., 0]``; crystalline cells give
    ``[0, orientation basis...]``.
    """
    phase_id = np.asarray(phase_id)
    crystal = phase_id == spec.crystal_phase
    if euler is None:
        if np.any(crystal):
            raise BasisError("orientation missing on crystalline cells")
        euler = np.zeros(phase_id.shape + (3,))
    euler = np.asarray(euler, dtype=float)
    if np.any(crystal & ~np.all(np.isfinite(euler), axis=-1)):
        raise BasisError("orientation missing on crystalline cells")
    orient = _eval_orientation(np.where(crystal[..., None], euler, 0.0), spec,
                               spec.orientation_kind)
    out = np.zeros(phase_id.shape + (spec.M,))
    out[..., 0] = (~crystal).astype(float)
    out[..., 1:] = orient * crystal[..., None]
    return out


# --------------------------------------------------------------------------
# field-level evaluation

def evaluate(ms, spec):
    """Basis fields for a microstructure, shape ``(M, *dims)``."""
    kind = spec.kind
    if kind == "primitive":
        if ms.phase is None:
            raise BasisError("primitive basis needs phase ids")
        if ms.n_phases != spec.n_phases:
            raise BasisError(f"microstructure has {ms.n_phases} phases, basis expects "
                             f"{spec.n_phases}")
        vals = eval_primitive(ms.phase, spec.n_phases)
    elif kind in ("gsh_cubic_3d", "planar_fourier_2d"):
        if ms.orientation is None:
            raise BasisError(f"{kind} basis needs orientations")
        vals = _eval_orientation(ms.orientation, spec, kind)
    else:
        if ms.phase is None or ms.orientation is None:
            raise BasisError("dual_phase basis needs phase ids and orientations")
        vals = eval_dual(ms.phase, ms.orientation, spec)
    return np.moveaxis(vals, -1, 0)


def default_spec(ms, kind=None, **kw):
    """Pick a basis matching the microstructure contents."""
    if kind is None:
        if ms.phase is not None and ms.orientation is not None:
            kind = "dual_phase"
        elif ms.orientation is not None:
            kind = "gsh_cubic_3d" if ms.grid.ndim == 3 else "planar_fourier_2d"
        else:
            kind = "primitive"
    if kind == "primitive":
        return primitive_spec(ms.n_phases)
    if kind == "gsh_cubic_3d":
        return gsh_spec(kw.get("gsh_count", 10))
    if kind == "planar_fourier_2d":
        return planar_spec(kw.get("n_harmonics", 1))
    orient = kw.get("orientation_kind",
                    "gsh_cubic_3d" if ms.grid.ndim == 3 else "planar_fourier_2d")
    return dual_spec(orient, kw.get("crystal_phase", 0), kw.get("n_harmonics", 1),
                     kw.get("gsh_count", 10))
