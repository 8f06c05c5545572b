"""Extended low-rank approximation (xLRA) surrogate.

Each rank term models a log-shifted scalar field as a sum of circular
convolutions of basis fields with learned kernels, trained independently
per DFT frequency:

    log(t(x) + beta) = IDFT[ sum_j conj(A_j(xi)) Psi_j(xi) ](x),  Psi_j = DFT[psi_j]

Rank 1 fits the (load-normalized) target; each further rank fits the
residual left by the ranks before it.  Predictions sum
``exp(reconstruction) - beta`` over all ranks.
"""
from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import fft as sfft

from . import basis as basis_mod
from .basis import BasisSpec
from .microstructure import _atomic_write

MODEL_MAGIC = b"XLM1"
FORMAT_VERSION = 1
EPS = np.finfo(float).eps


class XlraError(ValueError):
    pass


@dataclass
class TrainConfig:
    """Training controls.

    ``delta_T`` is a percent threshold on the cellwise relative error; a new
    rank is trained while more than ``stop_fraction`` of training cells exceed
    it, up to ``r_max`` ranks.  ``ridge`` scales the Tikhonov term by the mean
    diagonal of each frequency's normal matrix.  ``beta_floor_rel`` sets the
    log-shift floor relative to the target's max magnitude; ``"loo"`` picks it
    per rank from ``beta_floor_grid`` by leave-one-out error on the training set.
    """

    delta_T: float = 0.5
    r_max: int = 4
    ridge: float = 1e-8
    stop_fraction: float = 0.005
    beta_floor_rel: float | str = 1e-3
    beta_floor_grid: tuple = (1e-3, 3e-3, 1e-2, 3e-2, 0.1, 0.3)

    def __post_init__(self):
        if not self.delta_T > 0:
            raise XlraError("delta_T must be positive")
        if int(self.r_max) < 1:
            raise XlraError("r_max must be >= 1")
        if self.ridge < 0:
            raise XlraError("ridge must be >= 0")
        if not 0.0 <= self.stop_fraction < 1.0:
            raise XlraError("stop_fraction must lie in [0, 1)")
        if self.beta_floor_rel != "loo":
            try:
                self.beta_floor_rel = float(self.beta_floor_rel)
            except (TypeError, ValueError):
                raise XlraError(f"beta_floor_rel must be a number or 'loo', "
                                f"got {self.beta_floor_rel!r}") from None
            if not self.beta_floor_rel > 0:
                raise XlraError("beta_floor_rel must be positive or 'loo'")
        self.beta_floor_grid = tuple(float(g) for g in self.beta_floor_grid)
        if not self.beta_floor_grid or min(self.beta_floor_grid) <= 0:
            raise XlraError("beta_floor_grid needs positive entries")
        self.r_max = int(self.r_max)

    def to_dict(self):
        d = asdict(self)
        d["delta_T"] = _json_float(d["delta_T"])
        d["beta_floor_grid"] = list(d["beta_floor_grid"])
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "delta_T" in d:
            d["delta_T"] = float(d["delta_T"])
        if "beta_floor_grid" in d:
            d["beta_floor_grid"] = tuple(d["beta_floor_grid"])
        return cls(**d)


def _json_float(x):
    return "inf" if np.isinf(x) else float(x)


@dataclass
class RankTerm:
    """One rank: log-shift ``beta`` and coefficients ``A_j(xi)``, shape (M, *dims)."""

    beta: float
    coeffs: np.ndarray


@dataclass
class XlraModel:
    basis: BasisSpec
    dims: tuple
    target: str
    ranks: list
    mean_strain: np.ndarray
    scale: float
    config: TrainConfig = field(default_factory=TrainConfig)
    train_ids: list = field(default_factory=list)
    history: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    @property
    def rank(self):
        return len(self.ranks)

    def truncated(self, r):
        """Copy keeping the first ``r`` ranks."""
        if not 1 <= r <= self.rank:
            raise XlraError(f"rank {r} outside [1, {self.rank}]")
        return XlraModel(self.basis, self.dims, self.target, self.ranks[:r], self.mean_strain,
                         self.scale, self.config, self.train_ids, self.history[:r],
                         self.provenance)


# --------------------------------------------------------------------------
# features and transforms

def _axes(ndim, lead=1):
    return tuple(range(lead, lead + ndim))


def featurize(ms, spec: BasisSpec, workers=None):
    """DFT of every basis field: complex array (M, *dims)."""
    try:
        fields = basis_mod.evaluate(ms, spec)
    except basis_mod.BasisError as exc:
        raise XlraError(f"basis {spec.kind!r} incompatible with microstructure: {exc}") from exc
    return sfft.fftn(fields, axes=_axes(ms.grid.ndim), workers=workers)


def log_shift(values, beta_floor):
    """``(log(values + beta), beta)`` with ``beta = beta_floor + max(0, -min(values))``."""
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)):
        raise XlraError("log_shift needs a finite field")
    beta = float(beta_floor + max(0.0, -float(values.min())))
    return np.log(values + beta), beta


def log_unshift(logged, beta):
    return np.exp(logged) - beta


def delta_field(oracle, prediction):
    """Cellwise percent relative error and the mask of clamped cells.

    The denominator ``|oracle|`` is clamped below at ``eps * max|oracle|``.
    """
    oracle = np.asarray(oracle, dtype=float)
    prediction = np.asarray(prediction, dtype=float)
    if oracle.shape != prediction.shape:
        raise XlraError(f"shape mismatch {oracle.shape} vs {prediction.shape}")
    clamp = EPS * float(np.abs(oracle).max()) if oracle.size else 0.0
    clamp = max(clamp, np.finfo(float).tiny)
    mag = np.abs(oracle)
    flagged = mag < clamp
    return np.abs(oracle - prediction) / np.maximum(mag, clamp) * 100.0, flagged


# --------------------------------------------------------------------------
# per-frequency regression

def _solve_frequencies(X, y, ridge):
    """Ridge solutions ``b`` of ``X b = y`` for each frequency.

    ``X`` is (F, P, M), ``y`` is (F, P).  The Tikhonov weight is
    ``ridge * trace(X^H X) / M``; ``ridge == 0`` gives the minimum-norm
    least-squares solution.  Frequencies with an all-zero design get ``b = 0``.
    """
    F, P, M = X.shape
    Xh = np.conj(np.swapaxes(X, 1, 2))
    tr = np.einsum("fpm,fpm->f", X.conj(), X).real
    live = tr > 0
    b = np.zeros((F, M), dtype=complex)
    if not np.any(live):
        return b
    X, Xh, y, tr = X[live], Xh[live], y[live], tr[live]
    if ridge == 0:
        b[live] = np.einsum("fmp,fp->fm", np.linalg.pinv(X), y)
        return b
    lam = (ridge * tr / M)[:, None, None]
    if P >= M:
        G = Xh @ X + lam * np.eye(M)
        b[live] = np.linalg.solve(G, (Xh @ y[..., None]))[..., 0]
    else:
        H = X @ Xh + lam * np.eye(P)
        b[live] = (Xh @ np.linalg.solve(H, y[..., None]))[..., 0]
    return b


def train_rank(targets, features, ridge=1e-8, beta_floor=None, beta_floor_rel=1e-3,
               workers=None):
    """Fit one rank term.

    Parameters
    ----------
    targets : ndarray (P, *dims)
        Real fields, all sharing one log-shift.
    features : ndarray (P, M, *dims)
        Featurized microstructures from :func:`featurize`.
    beta_floor : float, optional
        Absolute floor; defaults to ``beta_floor_rel * max|targets|``.
    """
    targets = np.asarray(targets, dtype=float)
    features = np.asarray(features)
    if targets.ndim < 3 or features.shape[0] != targets.shape[0] \
            or features.shape[2:] != targets.shape[1:]:
        raise XlraError(f"targets {targets.shape} and features {features.shape} disagree")
    P, M = features.shape[:2]
    dims = targets.shape[1:]
    if beta_floor is None:
        beta_floor = beta_floor_rel * max(float(np.abs(targets).max()), EPS)
    logged, beta = log_shift(targets, beta_floor)
    y = sfft.fftn(logged, axes=_axes(len(dims)), workers=workers).reshape(P, -1).T
    X = np.moveaxis(features.reshape(P, M, -1), -1, 0)
    b = _solve_frequencies(np.ascontiguousarray(X), np.ascontiguousarray(y), ridge)
    return RankTerm(beta, np.ascontiguousarray(np.conj(b).T.reshape((M,) + dims)))


def _rank_log_field(term, feats, ndim, workers=None):
    """Real log-domain reconstruction of one rank for features (…, M, *dims)."""
    spec = np.sum(np.conj(term.coeffs) * feats, axis=-ndim - 1)
    lead = spec.ndim - ndim
    return sfft.ifftn(spec, axes=_axes(ndim, lead), workers=workers).real


def _rank_contribution(term, feats, ndim, workers=None):
    return log_unshift(_rank_log_field(term, feats, ndim, workers), term.beta)


def select_beta_floor(targets, features, ridge, grid, workers=None):
    """Relative floor from ``grid`` minimizing leave-one-out squared error.

    Returns ``(floor_rel, scores)``; with fewer than two instances the first
    grid value is returned.
    """
    targets = np.asarray(targets, dtype=float)
    P = targets.shape[0]
    if P < 2:
        return grid[0], []
    ndim = targets.ndim - 1
    scores = []
    for g in grid:
        sse = 0.0
        for k in range(P):
            keep = np.arange(P) != k
            tk = targets[keep]
            floor = g * max(float(np.abs(tk).max()), EPS)
            term = train_rank(tk, features[keep], ridge, beta_floor=floor, workers=workers)
            pk = _rank_contribution(term, features[k], ndim, workers)
            sse += float(np.sum((targets[k] - pk) ** 2))
        scores.append(sse if np.isfinite(sse) else np.inf)
    return grid[int(np.argmin(scores))], scores


# --------------------------------------------------------------------------
# fit / predict

def load_scale(mean_strain):
    s = float(np.max(np.abs(np.asarray(mean_strain, dtype=float))))
    if s == 0.0:
        raise XlraError("applied mean strain is zero; targets cannot be normalized")
    return s


def _rel_l2(t, p):
    return float(np.linalg.norm(t - p) / max(np.linalg.norm(t), np.finfo(float).tiny))


def fit(microstructures, targets, spec: BasisSpec, config: TrainConfig | None = None,
        mean_strain=(1e-4, 0.0, 0.0), target="e11", train_ids=None, workers=None,
        features=None) -> XlraModel:
    """Train an adaptive-rank model on paired microstructures and target fields.

    Rank 1 fits the normalized targets.  Rank ``r >= 2`` is trained on the
    full residual while the fraction of training cells whose percent error
    exceeds ``delta_T`` is above ``stop_fraction``.  A candidate rank that
    would raise the training relative L2 error is discarded and training stops.
    """
    config = config or TrainConfig()
    targets = np.asarray(targets, dtype=float)
    if targets.shape[0] == 0:
        raise XlraError("empty training split")
    if features is None:
        if len(microstructures) != targets.shape[0]:
            raise XlraError("one target field per microstructure required")
        features = np.stack([featurize(ms, spec, workers) for ms in microstructures])
    dims = tuple(targets.shape[1:])
    ndim = len(dims)
    if features.shape[2:] != dims:
        raise XlraError(f"feature grid {features.shape[2:]} != target grid {dims}")
    scale = load_scale(mean_strain)
    t = targets / scale

    ranks, history = [], []
    pred = np.zeros_like(t)
    resid = t
    for r in range(1, config.r_max + 1):
        if r > 1:
            delta, flagged = delta_field(t, pred)
            unresolved = float(np.mean(delta > config.delta_T))
            history[-1].update(unresolved_fraction=unresolved, flagged_cells=int(flagged.sum()))
            if unresolved <= config.stop_fraction:
                break
        floor_rel = config.beta_floor_rel
        if floor_rel == "loo":
            floor_rel, _ = select_beta_floor(resid, features, config.ridge,
                                             config.beta_floor_grid, workers)
        term = train_rank(resid, features, config.ridge,
                          beta_floor=floor_rel * max(float(np.abs(resid).max()), EPS),
                          workers=workers)
        contrib = _rank_contribution(term, features, ndim, workers)
        new_pred = pred + contrib
        err = _rel_l2(t, new_pred)
        if not np.all(np.isfinite(contrib)) or (ranks and err > history[-1]["train_rel_l2"]):
            history[-1]["stopped"] = f"rank {r} rejected (train error {err:.3e})"
            break
        ranks.append(term)
        history.append({"rank": r, "beta": term.beta, "beta_floor_rel": floor_rel,
                        "train_rel_l2": err})
        pred = new_pred
        resid = t - pred
    if "unresolved_fraction" not in history[-1]:
        delta, flagged = delta_field(t, pred)
        history[-1].update(unresolved_fraction=float(np.mean(delta > config.delta_T)),
                           flagged_cells=int(flagged.sum()))
    return XlraModel(spec, dims, target, ranks, np.asarray(mean_strain, dtype=float), scale,
                     config, list(train_ids) if train_ids is not None else [], history)


def _check_compat(model, ms):
    if tuple(ms.grid.dims) != tuple(model.dims):
        raise XlraError(f"microstructure dims {ms.grid.dims} != model dims {tuple(model.dims)}")


def predict_from_features(model, feats, ranks=None, workers=None):
    """Predict from precomputed features (M, *dims) or (P, M, *dims)."""
    ndim = len(model.dims)
    terms = model.ranks if ranks is None else model.ranks[:ranks]
    out = sum(_rank_contribution(t, feats, ndim, workers) for t in terms)
    return out * model.scale


def predict(model: XlraModel, ms, workers=None):
    """Oracle-free prediction summing every rank at every cell."""
    _check_compat(model, ms)
    return predict_from_features(model, featurize(ms, model.basis, workers), workers=workers)


def predict_rank1(model: XlraModel, ms, workers=None):
    _check_compat(model, ms)
    return predict_from_features(model, featurize(ms, model.basis, workers), 1, workers)


def predict_masked(model: XlraModel, ms, oracle, workers=None):
    """Diagnostic prediction that applies rank ``r >= 2`` only where the
    partial prediction misses the oracle by more than ``delta_T``."""
    _check_compat(model, ms)
    feats = featurize(ms, model.basis, workers)
    ndim = len(model.dims)
    t = np.asarray(oracle, dtype=float) / model.scale
    pred = _rank_contribution(model.ranks[0], feats, ndim, workers)
    for term in model.ranks[1:]:
        mask = delta_field(t, pred)[0] > model.config.delta_T
        pred = pred + np.where(mask, _rank_contribution(term, feats, ndim, workers), 0.0)
    return pred * model.scale


def spatial_kernels(model: XlraModel):
    """Real-space kernels ``alpha_j^(r)`` with ``log-field = sum_j alpha_j (*) psi_j``."""
    ndim = len(model.dims)
    return [sfft.ifftn(np.conj(t.coeffs), axes=_axes(ndim)).real for t in model.ranks]


# --------------------------------------------------------------------------
# model file

def save_model(path, model: XlraModel):
    """Write ``XLM1``: magic, u32 header length, JSON header, complex blocks."""
    header = {
        "format_version": FORMAT_VERSION,
        "basis": model.basis.to_dict(),
        "dims": list(model.dims),
        "target": model.target,
        "betas": [t.beta for t in model.ranks],
        "mean_strain": model.mean_strain.tolist(),
        "scale": model.scale,
        "config": model.config.to_dict(),
        "train_ids": model.train_ids,
        "history": model.history,
        "provenance": model.provenance,
    }
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    blocks = [t.coeffs.astype("<c16").tobytes(order="C") for t in model.ranks]
    _atomic_write(path, MODEL_MAGIC + struct.pack("<I", len(hbytes)) + hbytes + b"".join(blocks))


def load_model(path) -> XlraModel:
    data = Path(path).read_bytes()
    if data[:4] != MODEL_MAGIC:
        raise XlraError(f"{path}: not an XLM1 model file")
    (hlen,) = struct.unpack_from("<I", data, 4)
    header = json.loads(data[8:8 + hlen].decode("utf-8"))
    if header.get("format_version") != FORMAT_VERSION:
        raise XlraError(f"{path}: unsupported format version {header.get('format_version')}")
    spec = BasisSpec.from_dict(header["basis"])
    dims = tuple(header["dims"])
    size = spec.M * int(np.prod(dims))
    off = 8 + hlen
    ranks = []
    for beta in header["betas"]:
        c = np.frombuffer(data, "<c16", size, off).reshape((spec.M,) + dims).astype(complex)
        ranks.append(RankTerm(float(beta), c))
        off += 16 * size
    if off != len(data):
        raise XlraError(f"{path}: trailing bytes in model file")
    return XlraModel(spec, dims, header["target"], ranks, np.asarray(header["mean_strain"]),
                     float(header["scale"]), TrainConfig.from_dict(header["config"]),
                     header["train_ids"], header["history"], header.get("provenance", {}))
