"""Pure numpy reference implementations of the hot kernels.

Signatures mirror the compiled ``_kernels`` extension exactly.
"""
import numpy as np

# Voigt index -> tensor index pairs
VOIGT_PAIRS = {
    2: ((0, 0), (1, 1), (0, 1)),
    3: ((0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1)),
}


def voronoi_label(dims, seeds, elongation):
    """Nearest seed under periodic, axis-scaled distance; ties to the lower seed index."""
    dims = tuple(int(d) for d in dims)
    seeds = np.ascontiguousarray(seeds, dtype=float)
    elongation = np.ascontiguousarray(elongation, dtype=float)
    coords = np.meshgrid(*[np.arange(n, dtype=float) + 0.5 for n in dims], indexing="ij")
    best = np.full(dims, np.inf)
    labels = np.zeros(dims, dtype=np.int64)
    for g in range(seeds.shape[0]):
        d2 = np.zeros(dims)
        for a, n in enumerate(dims):
            dx = coords[a] - seeds[g, a]
            dx = dx - n * np.floor(dx / n + 0.5)
            dx = dx / elongation[a]
            d2 = d2 + dx * dx
        closer = d2 < best
        best[closer] = d2[closer]
        labels[closer] = g
    return labels


def cell_matvec(C, v):
    """``out[i, n] = sum_j C[i, j, n] v[j, n]`` for per-cell matrices."""
    return np.einsum("ijn,jn->in", C, v)


def green_update(out_hat, pol_hat, xi, nmat, replace):
    """Apply the periodic Green operator to a polarization spectrum.

    ``out_hat`` (nv, F) complex engineering-strain Voigt spectrum is updated
    in place to ``out_hat - Gamma(pol_hat)`` (or ``-Gamma(pol_hat)`` if
    ``replace``).  ``pol_hat`` is a stress-like Voigt spectrum, ``xi`` the
    (d, F) frequency vectors and ``nmat`` the (d, d, F) inverse acoustic
    tensors.  Returns ``sum |pol_hat . xi|^2`` over all frequencies.
    """
    d = xi.shape[0]
    pairs = VOIGT_PAIRS[d]
    s = np.empty((d, d) + pol_hat.shape[1:], dtype=complex)
    for I, (i, j) in enumerate(pairs):
        s[i, j] = pol_hat[I]
        s[j, i] = pol_hat[I]
    v = np.einsum("ijf,jf->if", s, xi)
    div2 = float(np.sum(v.real**2 + v.imag**2))
    w = np.einsum("ikf,kf->if", nmat, v)
    if replace:
        out_hat[...] = 0.0
    for I, (k, l) in enumerate(pairs):
        if k == l:
            out_hat[I] -= xi[k] * w[k]
        else:
            out_hat[I] -= xi[l] * w[k] + xi[k] * w[l]
    return div2
