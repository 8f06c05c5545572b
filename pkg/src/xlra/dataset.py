"""Datasets of (microstructure, solved strain field) pairs and their manifest."""
from __future__ import annotations

import hashlib
import inspect
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import elasticity as el
from .fieldio import read_field, write_field
from .microstructure import GENERATORS, _atomic_write, read_microstructure, write_microstructure
from .solver import SolverError, solve_local_strain

MANIFEST_FORMAT = "xlra-manifest-1"
SOLVE_LOG = "solve_log.json"


class DatasetError(ValueError):
    pass


def instance_seeds(seed, n):
    """Per-instance seeds derived from one global seed."""
    return [int(s) for s in np.random.SeedSequence(int(seed)).generate_state(n, dtype=np.uint32)]


def split_labels(n, train_fraction, seed):
    """``train``/``test`` label per entry; ``round(n * f)`` (at least 1) train entries."""
    k = min(n, max(1, int(np.floor(train_fraction * n + 0.5))))
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(7,)))
    train = set(rng.permutation(n)[:k].tolist())
    return ["train" if i in train else "test" for i in range(n)]


def make_microstructure(cfg, seed):
    kind = cfg["generator"]["kind"]
    gen = GENERATORS[kind]
    allowed = set(inspect.signature(gen).parameters) - {"seed", "dims"}
    params = {k: v for k, v in cfg["generator"].get("params", {}).items() if k in allowed}
    return gen(seed, tuple(cfg["grid"]["dims"]), **params)


def file_digest(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class DatasetManifest:
    root: Path
    entries: list
    material: dict
    mean_strain: list
    dims: list
    config: dict = field(default_factory=dict)

    def to_dict(self):
        return {"format": MANIFEST_FORMAT, "dims": self.dims, "material": self.material,
                "mean_strain": self.mean_strain, "entries": self.entries, "config": self.config}

    def save(self, path):
        _atomic_write(path, (json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n").encode())

    @classmethod
    def load(cls, path):
        """Load ``manifest.json``; ``path`` may also be the dataset directory."""
        path = Path(path)
        if path.is_dir():
            path = path / "manifest.json"
        try:
            d = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise DatasetError(f"cannot read manifest {path}: {exc}") from exc
        if d.get("format") != MANIFEST_FORMAT:
            raise DatasetError(f"{path}: not a dataset manifest")
        m = cls(path.parent, d["entries"], d["material"], d["mean_strain"], d["dims"],
                d.get("config", {}))
        m.validate()
        return m

    def validate(self):
        ids = [e["id"] for e in self.entries]
        if len(set(ids)) != len(ids):
            raise DatasetError("duplicate entry ids")
        for e in self.entries:
            if e["split"] not in ("train", "test"):
                raise DatasetError(f"entry {e['id']}: bad split {e['split']!r}")

    @property
    def material_spec(self):
        return el.MaterialSpec.from_dict(self.material)

    def path(self, rel):
        return self.root / rel

    def split(self, label):
        return [e for e in self.entries if e["split"] == label]

    def solve_log(self):
        p = self.root / SOLVE_LOG
        return json.loads(p.read_text()) if p.exists() else {}

    def solved(self, entries):
        """Entries whose field file exists and whose solve did not fail."""
        log = self.solve_log()
        out = []
        for e in entries:
            status = log.get(str(e["id"]), {}).get("status", "ok")
            if status == "ok" and self.path(e["field"]).exists():
                out.append(e)
        return out


# --------------------------------------------------------------------------
# generation and solving

def _gen_one(args):
    cfg, seed, path = args
    ms = make_microstructure(cfg, seed)
    write_microstructure(path, ms)
    return seed


def generate_dataset(cfg, out_dir, workers=1):
    """Write microstructures and ``manifest.json`` under ``out_dir``."""
    out = Path(out_dir)
    (out / "ms").mkdir(parents=True, exist_ok=True)
    (out / "fields").mkdir(exist_ok=True)
    n = int(cfg["dataset"]["n"])
    seeds = instance_seeds(cfg["seed"], n)
    labels = split_labels(n, float(cfg["dataset"]["train_fraction"]), cfg["seed"])
    entries, jobs = [], []
    for i, (s, lab) in enumerate(zip(seeds, labels)):
        e = {"id": i, "microstructure": f"ms/{i:06d}.xms", "field": f"fields/{i:06d}.xfd",
             "split": lab, "seed": s}
        entries.append(e)
        jobs.append((cfg, s, out / e["microstructure"]))
    _map(_gen_one, jobs, workers)
    manifest = DatasetManifest(out, entries, cfgmod.material_spec(cfg).to_dict(),
                               cfgmod.mean_strain(cfg).tolist(), list(cfg["grid"]["dims"]), cfg)
    manifest.save(out / "manifest.json")
    return manifest


def _map(fn, jobs, workers):
    if workers and workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, jobs))
    return [fn(j) for j in jobs]


def solve_instance(ms, material, mean_strain, solver_cfg):
    C = el.assemble_stiffness_field(ms, material)
    return C, solve_local_strain(C, mean_strain, tol=float(solver_cfg["tol"]),
                                 max_iter=int(solver_cfg["max_iter"]),
                                 scheme=solver_cfg["scheme"], reference=solver_cfg["reference"])


def _solve_one(args):
    ms_path, field_path, material, mean_strain, solver_cfg = args
    ms = read_microstructure(ms_path)
    try:
        _, strain = solve_instance(ms, material, np.asarray(mean_strain, dtype=float), solver_cfg)
    except SolverError as exc:
        return {"status": "failed", "error": str(exc), "iterations": exc.iterations,
                "residual": exc.residual}
    write_field(field_path, strain)
    return {"status": "ok", "iterations": strain.info["iterations"],
            "residual": strain.info["residual"], "scheme": strain.info["scheme"]}


def solve_dataset(manifest: DatasetManifest, solver_cfg=None, workers=1):
    """Solve every entry; failures are logged, not raised.  Returns the log."""
    solver_cfg = solver_cfg or manifest.config.get("solver") or cfgmod.DEFAULTS["solver"]
    material = manifest.material_spec
    jobs = [(manifest.path(e["microstructure"]), manifest.path(e["field"]), material,
             manifest.mean_strain, solver_cfg) for e in manifest.entries]
    results = _map(_solve_one, jobs, workers)
    log = {str(e["id"]): r for e, r in zip(manifest.entries, results)}
    _atomic_write(manifest.root / SOLVE_LOG,
                  (json.dumps(log, indent=1, sort_keys=True) + "\n").encode())
    return log


# --------------------------------------------------------------------------
# targets

TARGETS = ("e11", "e22", "e33", "e23", "e13", "e12", "vm")


def target_field(ms, strain_values, material, target, C_field=None):
    """Scalar target from a solved strain field: a strain component or von Mises stress."""
    nd = ms.grid.ndim
    labels = el.STRAIN_LABELS[nd]
    if target in labels:
        return np.asarray(strain_values[labels.index(target)], dtype=float)
    if target == "vm":
        C = C_field if C_field is not None else el.assemble_stiffness_field(ms, material)
        return el.von_mises(el.hooke(C, np.asarray(strain_values)))
    raise DatasetError(f"target {target!r} unavailable for a {nd}D grid; "
                       f"choose from {labels + ('vm',)}")


def load_split(manifest: DatasetManifest, label, target):
    """``(entries, microstructures, targets)`` for solved entries of one split."""
    entries = manifest.solved(manifest.split(label))
    if not entries:
        raise DatasetError(f"no solved {label} entries in {manifest.root}")
    material = manifest.material_spec
    mss, ts = [], []
    for e in entries:
        ms = read_microstructure(manifest.path(e["microstructure"]))
        if list(ms.grid.dims) != list(manifest.dims):
            raise DatasetError(f"entry {e['id']}: grid {ms.grid.dims} != manifest {manifest.dims}")
        values, _, _ = read_field(manifest.path(e["field"]))
        mss.append(ms)
        ts.append(target_field(ms, values, material, target))
    return entries, mss, np.stack(ts)


def build_in_memory(cfg, n=None, seeds=None):
    """Generate and solve without touching disk: ``(mss, strains, C_fields)``."""
    seeds = instance_seeds(cfg["seed"], int(cfg["dataset"]["n"]) if n is None else n) \
        if seeds is None else seeds
    material = cfgmod.material_spec(cfg)
    E = cfgmod.mean_strain(cfg)
    mss, strains, Cs = [], [], []
    for s in seeds:
        ms = make_microstructure(cfg, s)
        C, st = solve_instance(ms, material, E, cfg["solver"])
        mss.append(ms)
        strains.append(st.values)
        Cs.append(C)
    return mss, np.stack(strains), Cs
