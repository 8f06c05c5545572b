"""Periodic microstructures: grid/descriptor containers, generators, binary IO."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import _backend
from .rotations import TWO_PI, random_orientations

MS_MAGIC = b"XMS1"


class MicrostructureError(ValueError):
    pass


@dataclass(frozen=True)
class PeriodicGrid:
    dims: tuple

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) not in (2, 3):
            raise MicrostructureError(f"grid must be 2D or 3D, got {len(dims)} dims")
        if min(dims) < 2:
            raise MicrostructureError(f"every grid dim must be >= 2, got {dims}")
        object.__setattr__(self, "dims", dims)

    @property
    def ndim(self):
        return len(self.dims)

    @property
    def size(self):
        return int(np.prod(self.dims))


@dataclass
class Microstructure:
    """Per-cell descriptors on a periodic grid.

    ``phase`` holds small-integer phase ids, ``orientation`` Bunge angles with
    a trailing axis of length 3.  At least one of the two is present.
    """

    grid: PeriodicGrid
    phase: np.ndarray | None = None
    orientation: np.ndarray | None = None
    n_phases: int = 1
    grain_id: np.ndarray | None = None

    def __post_init__(self):
        if not isinstance(self.grid, PeriodicGrid):
            self.grid = PeriodicGrid(tuple(self.grid))
        dims = self.grid.dims
        if self.phase is None and self.orientation is None:
            raise MicrostructureError("microstructure needs phase ids or orientations")
        if self.phase is not None:
            self.phase = np.asarray(self.phase, dtype=np.int64)
            if self.phase.shape != dims:
                raise MicrostructureError(f"phase shape {self.phase.shape} != grid {dims}")
            if self.phase.min() < 0 or self.phase.max() >= self.n_phases:
                raise MicrostructureError("phase ids outside [0, n_phases)")
        if self.orientation is not None:
            self.orientation = np.asarray(self.orientation, dtype=float)
            if self.orientation.shape != dims + (3,):
                raise MicrostructureError("orientation must have shape dims + (3,)")

    @property
    def dims(self):
        return self.grid.dims

    def volume_fraction(self, phase_id):
        return float(np.mean(self.phase == phase_id))

    def roll(self, shift):
        """Circularly translate by a lattice vector."""
        axes = tuple(range(self.grid.ndim))
        phase = None if self.phase is None else np.roll(self.phase, shift, axis=axes)
        orient = None if self.orientation is None else np.roll(self.orientation, shift, axis=axes)
        grains = None if self.grain_id is None else np.roll(self.grain_id, shift, axis=axes)
        return Microstructure(self.grid, phase, orient, self.n_phases, grains)

    def equals(self, other):
        def same(a, b):
            if a is None or b is None:
                return a is None and b is None
            return a.shape == b.shape and np.array_equal(a, b)
        return (self.grid == other.grid and self.n_phases == other.n_phases
                and same(self.phase, other.phase) and same(self.orientation, other.orientation))


def _rng(seed, stream=0):
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(stream,)))


def _round_count(frac, n):
    return int(np.floor(frac * n + 0.5))


def _top_k_mask(values, k):
    """Boolean mask of the ``k`` largest values; ties go to the lower cell index."""
    flat = values.ravel()
    order = np.argsort(-flat, kind="stable")
    mask = np.zeros(flat.size, dtype=bool)
    mask[order[:k]] = True
    return mask.reshape(values.shape)


def smoothed_noise(seed, dims, sigma):
    grid = PeriodicGrid(tuple(dims))
    if sigma < 0:
        raise MicrostructureError("sigma must be >= 0")
    if sigma > min(grid.dims) / 2.0:
        raise MicrostructureError(f"sigma={sigma} too large for dims {grid.dims}")
    noise = _rng(seed).standard_normal(grid.dims)
    if sigma > 0:
        noise = ndimage.gaussian_filter(noise, sigma, mode="wrap")
    return grid, noise


def gen_two_phase(seed, dims, hard_vf=0.2, sigma=2.0):
    """Two-phase composite: phase 1 (hard) occupies the top ``hard_vf`` quantile
    of periodically smoothed white noise, phase 0 is the soft matrix."""
    if not 0.0 < hard_vf < 1.0:
        raise MicrostructureError(f"hard_vf must lie in (0, 1), got {hard_vf}")
    grid, field = smoothed_noise(seed, dims, sigma)
    hard = _top_k_mask(field, _round_count(hard_vf, grid.size))
    return Microstructure(grid, hard.astype(np.int64), None, 2)


def gen_porous(seed, dims, porosity=0.15, sigma=2.0):
    """Porous solid: phase 0 is void, phase 1 is solid.

    Uses the two-phase recipe with the solid taking the hard role, so the
    void mask is the complement of a ``hard_vf = 1 - porosity`` composite.
    """
    if not 0.0 <= porosity < 1.0:
        raise MicrostructureError(f"porosity must lie in [0, 1), got {porosity}")
    grid, field = smoothed_noise(seed, dims, sigma)
    solid = _top_k_mask(field, _round_count(1.0 - porosity, grid.size))
    return Microstructure(grid, solid.astype(np.int64), None, 2)


def _voronoi(seed, dims, n_grains, elongation):
    grid = PeriodicGrid(tuple(dims))
    if n_grains < 1 or n_grains > grid.size:
        raise MicrostructureError(f"n_grains must lie in [1, {grid.size}]")
    if elongation is None:
        elongation = (1.0,) * grid.ndim
    elongation = np.asarray(elongation, dtype=float)
    if elongation.shape != (grid.ndim,) or np.any(elongation <= 0):
        raise MicrostructureError("elongation needs one positive factor per axis")
    rng = _rng(seed)
    box = np.asarray(grid.dims, dtype=float)
    for _ in range(1000):
        seeds = rng.uniform(0.0, 1.0, (n_grains, grid.ndim)) * box
        labels = _backend.voronoi_label(grid.dims, seeds, elongation)
        if np.unique(labels).size == n_grains:
            return grid, labels, rng
    raise MicrostructureError("could not place seeds so that every grain owns a cell")


def gen_voronoi_polycrystal(seed, dims, n_grains=10, elongation=None, planar=None):
    """Periodic Voronoi polycrystal with one random orientation per grain.

    Distances are scaled per axis by ``1/elongation`` so grains stretch along
    axes with factors > 1.  ``planar`` (default: True in 2D) restricts
    orientations to rotations about the sample z axis.
    """
    grid, labels, rng = _voronoi(seed, dims, n_grains, elongation)
    if planar is None:
        planar = grid.ndim == 2
    if planar:
        grain_euler = np.zeros((n_grains, 3))
        grain_euler[:, 0] = rng.uniform(0.0, TWO_PI, n_grains)
    else:
        grain_euler = random_orientations(rng, n_grains)
    return Microstructure(grid, None, grain_euler[labels], 1, labels)


def gen_dual_phase(seed, dims, n_grains=50, hard_vf=0.2, elongation=None, planar=None):
    """Dual-phase polycrystal: whole Voronoi grains become the hard (phase 1)
    isotropic phase until the hard volume fraction is closest to ``hard_vf``.
    Phase 0 cells keep their grain orientation."""
    if not 0.0 < hard_vf < 1.0:
        raise MicrostructureError(f"hard_vf must lie in (0, 1), got {hard_vf}")
    poly = gen_voronoi_polycrystal(seed, dims, n_grains, elongation, planar)
    labels = poly.grain_id
    sizes = np.bincount(labels.ravel(), minlength=n_grains) / labels.size
    order = _rng(seed, stream=1).permutation(n_grains)
    hard_grains = []
    frac = 0.0
    for g in order:
        if abs(frac + sizes[g] - hard_vf) < abs(frac - hard_vf):
            hard_grains.append(g)
            frac += sizes[g]
    hard = np.isin(labels, hard_grains)
    orient = poly.orientation.copy()
    orient[hard] = 0.0
    return Microstructure(poly.grid, hard.astype(np.int64), orient, 2, labels)


def gen_uniform(dims, phase_id=0, n_phases=1):
    grid = PeriodicGrid(tuple(dims))
    return Microstructure(grid, np.full(grid.dims, phase_id, dtype=np.int64), None, n_phases)


def gen_laminate(dims, axis=0, hard_fraction=0.5):
    """Two-phase laminate with layers normal to ``axis`` (phase 1 = hard)."""
    grid = PeriodicGrid(tuple(dims))
    n_hard = _round_count(hard_fraction, grid.dims[axis])
    profile = (np.arange(grid.dims[axis]) < n_hard).astype(np.int64)
    shape = [1] * grid.ndim
    shape[axis] = grid.dims[axis]
    phase = np.broadcast_to(profile.reshape(shape), grid.dims).copy()
    return Microstructure(grid, phase, None, 2)


GENERATORS = {
    "two_phase": gen_two_phase,
    "porous": gen_porous,
    "polycrystal": gen_voronoi_polycrystal,
    "dual_phase": gen_dual_phase,
}


# --------------------------------------------------------------------------
# binary IO

def write_microstructure(path, ms):
    """Write the little-endian XMS1 format."""
    dims = ms.grid.dims
    flags = (1 if ms.phase is not None else 0) | (2 if ms.orientation is not None else 0)
    header = MS_MAGIC + struct.pack("<B", len(dims)) + struct.pack(f"<{len(dims)}I", *dims)
    header += struct.pack("<BH", flags, ms.n_phases)
    parts = [header]
    if ms.phase is not None:
        parts.append(ms.phase.astype("<u2").tobytes(order="C"))
    if ms.orientation is not None:
        parts.append(ms.orientation.astype("<f8").tobytes(order="C"))
    _atomic_write(path, b"".join(parts))


def read_microstructure(path):
    data = Path(path).read_bytes()
    if data[:4] != MS_MAGIC:
        raise MicrostructureError(f"{path}: bad magic {data[:4]!r}")
    ndim = data[4]
    off = 5
    dims = struct.unpack_from(f"<{ndim}I", data, off)
    off += 4 * ndim
    flags, n_phases = struct.unpack_from("<BH", data, off)
    off += 3
    n = int(np.prod(dims))
    phase = orient = None
    if flags & 1:
        phase = np.frombuffer(data, "<u2", n, off).reshape(dims).astype(np.int64)
        off += 2 * n
    if flags & 2:
        orient = np.frombuffer(data, "<f8", 3 * n, off).reshape(tuple(dims) + (3,)).copy()
        off += 24 * n
    if off != len(data):
        raise MicrostructureError(f"{path}: {len(data) - off} trailing bytes")
    return Microstructure(PeriodicGrid(tuple(dims)), phase, orient, n_phases)


def _atomic_write(path, payload):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(payload)
    tmp.replace(path)
