"""FFT fixed-point solver for the periodic Lippmann-Schwinger equation.

Two schemes share one Green-operator kernel:

* ``basic``: ``eps <- eps - Gamma0 * (C eps)`` with the mean re-imposed at
  the zero frequency (Moulinec-Suquet).
* ``eyre_milton``: accelerated update for high contrast,
  ``e = E - Gamma0 * ((C - C0) eps)``, ``eps <- eps + 2 (C + C0)^-1 C0 (e - eps)``.
  The compatible field ``e`` is returned.

Convergence is measured by :func:`equilibrium_residual` on the returned field.

On even grids the Nyquist frequencies have no conjugate partner, so the
Green operator there is replaced by the reference compliance ``C0^-1``
(stress driven to zero), which keeps the update a projection on real fields.
"""
from __future__ import annotations

import time

import numpy as np
from scipy import fft as sfft

from . import _backend
from .elasticity import (STRAIN_LABELS, StiffnessField, StrainField, acoustic_inverse,
                         frequencies, reduce_plane_strain, reference_stiffness)

SCHEMES = ("basic", "eyre_milton", "auto")
AUTO_CONTRAST = 100.0  # modulus ratio above which "auto" picks eyre_milton


class SolverError(RuntimeError):
    """Non-convergence or a non-finite iterate; carries the last residual."""

    def __init__(self, msg, iterations=0, residual=float("nan")):
        super().__init__(msg)
        self.iterations = iterations
        self.residual = residual


def _shear_weights(nv):
    w = np.ones(nv)
    w[nv // 2:] = 2.0  # Frobenius norm counts each off-diagonal twice
    return w


def _residual_from_hat(sig_hat, xi):
    """sqrt(sum |sig_hat . xi|^2 / sum ||sig_hat||_F^2) over a flat spectrum."""
    nv = sig_hat.shape[0]
    power = np.real(sig_hat * np.conj(sig_hat))
    denom = float(_shear_weights(nv) @ power.sum(axis=1))
    if denom == 0.0:
        return 0.0
    if nv == 3:
        v = [sig_hat[0] * xi[0] + sig_hat[2] * xi[1],
             sig_hat[2] * xi[0] + sig_hat[1] * xi[1]]
    else:
        v = [sig_hat[0] * xi[0] + sig_hat[5] * xi[1] + sig_hat[4] * xi[2],
             sig_hat[5] * xi[0] + sig_hat[1] * xi[1] + sig_hat[3] * xi[2],
             sig_hat[4] * xi[0] + sig_hat[3] * xi[1] + sig_hat[2] * xi[2]]
    num = sum(float(np.sum(c.real**2 + c.imag**2)) for c in v)
    return float(np.sqrt(num / denom))


def _fft(x, ndim, workers=None):
    axes = tuple(range(1, ndim + 1))
    out = sfft.fftn(x, axes=axes, workers=workers)
    return np.ascontiguousarray(out.reshape(x.shape[0], -1))


def _ifft(xhat, dims, workers=None):
    axes = tuple(range(1, len(dims) + 1))
    return sfft.ifftn(xhat.reshape((xhat.shape[0],) + tuple(dims)), axes=axes,
                      workers=workers).real


def _nyquist_cells(dims):
    """Flat spectral indices lying on a Nyquist plane of an even axis."""
    mask = np.zeros(dims, dtype=bool)
    for ax, n in enumerate(dims):
        if n % 2 == 0:
            idx = [slice(None)] * len(dims)
            idx[ax] = n // 2
            mask[tuple(idx)] = True
    return np.flatnonzero(mask)


def equilibrium_residual(C_field: StiffnessField, strain) -> float:
    """Relative spectral divergence of the stress ``C eps``.

    ``sqrt(sum_{xi != 0} |sigma_hat(xi) xi|^2 / sum_xi ||sigma_hat(xi)||^2)``;
    0 for an all-zero stress.
    """
    eps = strain.values if isinstance(strain, StrainField) else np.asarray(strain, dtype=float)
    dims = tuple(C_field.dims)
    if eps.shape[1:] != dims:
        raise ValueError(f"grid mismatch: strain {eps.shape[1:]} vs stiffness {dims}")
    nv = C_field.nv
    sig = _backend.cell_matvec(C_field.flat(), np.ascontiguousarray(eps.reshape(nv, -1)))
    xi = frequencies(dims).reshape(len(dims), -1)
    return _residual_from_hat(_fft(sig.reshape(eps.shape), len(dims)), xi)


def contrast(C_field: StiffnessField) -> float:
    k_lo, k_hi, m_lo, m_hi = C_field.moduli_bounds()
    return max(k_hi / k_lo, m_hi / m_lo)


def _resolve(C_field, scheme, reference):
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; choose from {SCHEMES}")
    if scheme == "auto":
        scheme = "eyre_milton" if contrast(C_field) >= AUTO_CONTRAST else "basic"
    if isinstance(reference, str):
        rule = reference
        if rule == "auto":
            rule = "geometric" if scheme == "eyre_milton" else "midpoint"
        C0 = reference_stiffness(C_field, rule)
    else:
        C0 = np.asarray(reference, dtype=float)
        rule = "explicit"
    if C_field.ndim == 2 and C0.shape == (6, 6):
        C0 = reduce_plane_strain(C0)
    return scheme, C0, rule


def solve_local_strain(C_field: StiffnessField, mean_strain, tol=1e-8, max_iter=10_000,
                       scheme="basic", reference="auto", workers=None) -> StrainField:
    """Solve for the periodic strain field with volume average ``mean_strain``.

    Parameters
    ----------
    C_field : StiffnessField
    mean_strain : array_like
        Voigt vector (engineering shears), length 3 in 2D and 6 in 3D.
    tol : float
        Target :func:`equilibrium_residual`.
    scheme : {"basic", "eyre_milton", "auto"}
    reference : {"auto", "mean", "midpoint", "geometric"} or ndarray
        Reference medium.  ``auto`` picks midpoint moduli for ``basic`` and
        their geometric mean for ``eyre_milton``.

    Returns
    -------
    StrainField
        ``info`` records iterations, final residual, scheme and reference rule.

    Raises
    ------
    SolverError
        On non-convergence within ``max_iter`` or a non-finite iterate.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    dims = tuple(C_field.dims)
    d, nv = len(dims), C_field.nv
    E = np.asarray(mean_strain, dtype=float).ravel()
    if E.shape != (nv,):
        raise ValueError(f"mean strain needs {nv} Voigt components for a {d}D grid")
    scheme, C0, rule = _resolve(C_field, scheme, reference)
    n = int(np.prod(dims))
    C = C_field.flat()
    xi = np.ascontiguousarray(frequencies(dims).reshape(d, -1))
    nmat = acoustic_inverse(C0, xi)
    nyq = _nyquist_cells(dims)
    S0 = np.linalg.inv(C0)
    t0 = time.perf_counter()

    eps = np.repeat(E[:, None], n, axis=1)
    mean_hat = E * n
    it, res = 0, np.inf
    if scheme == "basic":
        while True:
            it += 1
            sig_hat = _fft(_backend.cell_matvec(C, eps).reshape((nv,) + dims), d, workers)
            res = _residual_from_hat(sig_hat, xi)
            if not np.isfinite(res):
                raise SolverError("non-finite iterate", it, res)
            if res <= tol:
                break
            if it >= max_iter:
                raise SolverError(f"no convergence in {max_iter} iterations "
                                  f"(residual {res:.3e})", it, res)
            eps_hat = _fft(eps.reshape((nv,) + dims), d, workers)
            keep = eps_hat[:, nyq] - S0 @ sig_hat[:, nyq]
            _backend.green_update(eps_hat, sig_hat, xi, nmat, False)
            eps_hat[:, nyq] = keep
            eps_hat[:, 0] = mean_hat
            eps = np.ascontiguousarray(_ifft(eps_hat, dims, workers).reshape(nv, n))
        out = eps
    else:
        dC = np.ascontiguousarray(C - C0[:, :, None])
        # per-cell 2 (C + C0)^-1 C0
        S = np.linalg.solve(np.moveaxis(C + C0[:, :, None], -1, 0), np.broadcast_to(2.0 * C0, (n, nv, nv)))
        S = np.ascontiguousarray(np.moveaxis(S, 0, -1))
        e = eps
        while True:
            it += 1
            pol_hat = _fft(_backend.cell_matvec(dC, eps).reshape((nv,) + dims), d, workers)
            e_hat = np.empty_like(pol_hat)
            _backend.green_update(e_hat, pol_hat, xi, nmat, True)
            e_hat[:, nyq] = -S0 @ pol_hat[:, nyq]
            e_hat[:, 0] = mean_hat
            e = np.ascontiguousarray(_ifft(e_hat, dims, workers).reshape(nv, n))
            sig_hat = _fft(_backend.cell_matvec(C, e).reshape((nv,) + dims), d, workers)
            res = _residual_from_hat(sig_hat, xi)
            if not np.isfinite(res):
                raise SolverError("non-finite iterate", it, res)
            if res <= tol:
                break
            if it >= max_iter:
                raise SolverError(f"no convergence in {max_iter} iterations "
                                  f"(residual {res:.3e})", it, res)
            eps = eps + _backend.cell_matvec(S, e - eps)
        out = e

    info = {"iterations": it, "residual": res, "scheme": scheme, "reference": rule,
            "seconds": time.perf_counter() - t0}
    return StrainField(out.reshape((nv,) + dims), E.copy(), STRAIN_LABELS[d], info)
