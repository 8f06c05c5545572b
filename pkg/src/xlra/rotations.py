"""Orientation utilities: Bunge Euler angles, rotation matrices, cubic group.

Convention: an orientation (phi1, Phi, phi2) maps to the active rotation
``R = Rz(phi1) @ Rx(Phi) @ Rz(phi2)`` that carries crystal axes into the
sample frame.  The classical passive Bunge matrix ``g`` equals ``R.T``.
Crystal symmetry acts on the right: ``R @ q`` for q in the cubic group.
"""
from __future__ import annotations

import itertools
from functools import lru_cache

import numpy as np

TWO_PI = 2.0 * np.pi


def _rz(a):
    c, s = np.cos(a), np.sin(a)
    out = np.zeros(np.shape(a) + (3, 3))
    out[..., 0, 0] = c
    out[..., 0, 1] = -s
    out[..., 1, 0] = s
    out[..., 1, 1] = c
    out[..., 2, 2] = 1.0
    return out


def _rx(a):
    c, s = np.cos(a), np.sin(a)
    out = np.zeros(np.shape(a) + (3, 3))
    out[..., 0, 0] = 1.0
    out[..., 1, 1] = c
    out[..., 1, 2] = -s
    out[..., 2, 1] = s
    out[..., 2, 2] = c
    return out


def bunge_to_matrix(euler):
    """Active rotation matrices for Bunge angles.

    Parameters
    ----------
    euler : array_like, shape (..., 3)
        (phi1, Phi, phi2) in radians.

    Returns
    -------
    ndarray, shape (..., 3, 3)
    """
    euler = np.asarray(euler, dtype=float)
    return _rz(euler[..., 0]) @ _rx(euler[..., 1]) @ _rz(euler[..., 2])


def matrix_to_bunge(R, tol=1e-10):
    """Inverse of :func:`bunge_to_matrix`, angles wrapped to the fundamental ranges."""
    R = np.asarray(R, dtype=float)
    sin_Phi = np.hypot(R[..., 0, 2], R[..., 1, 2])
    Phi = np.arctan2(sin_Phi, R[..., 2, 2])  # arccos loses small angles
    regular = sin_Phi > tol
    phi1 = np.where(regular, np.arctan2(R[..., 0, 2], -R[..., 1, 2]),
                    np.arctan2(R[..., 1, 0], R[..., 0, 0]))
    phi2 = np.where(regular, np.arctan2(R[..., 2, 0], R[..., 2, 1]), 0.0)
    return np.stack([np.mod(phi1, TWO_PI), Phi, np.mod(phi2, TWO_PI)], axis=-1)


def compose(euler, q):
    """Orientation ``g o q``: crystal-side composition with rotation matrix ``q``."""
    return matrix_to_bunge(bunge_to_matrix(euler) @ q)


@lru_cache(maxsize=None)
def _cubic_group():
    mats = []
    for perm in itertools.permutations(range(3)):
        for signs in itertools.product((1.0, -1.0), repeat=3):
            m = np.zeros((3, 3))
            for row, (col, s) in enumerate(zip(perm, signs)):
                m[row, col] = s
            if np.linalg.det(m) > 0:
                mats.append(m)
    out = np.array(mats)
    out.setflags(write=False)
    return out


def cubic_rotations():
    """The 24 proper rotations of the cubic point group (signed permutations, det = +1)."""
    return _cubic_group()


def random_orientations(rng, n):
    """Orientations uniform on SO(3): phi1, phi2 uniform, cos(Phi) uniform on [-1, 1]."""
    phi1 = rng.uniform(0.0, TWO_PI, n)
    Phi = np.arccos(rng.uniform(-1.0, 1.0, n))
    phi2 = rng.uniform(0.0, TWO_PI, n)
    return np.stack([phi1, Phi, phi2], axis=-1)


def planar_angle(euler):
    """In-plane angle of orientations that rotate about the sample z axis only."""
    euler = np.asarray(euler, dtype=float)
    return np.mod(euler[..., 0] + euler[..., 2], TWO_PI)
