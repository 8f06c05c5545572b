"""``xlra`` command-line interface.

Exit codes: 0 success, 1 validation error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import basis as basis_mod
from . import config as cfgmod
from . import core, dataset, metrics
from .fieldio import write_field
from .microstructure import _atomic_write, read_microstructure
from .solver import SolverError


def _write_text(path, text):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    _atomic_write(path, text.encode("utf-8"))


def _config_from_args(args, base=None):
    if base is not None:
        cfg = cfgmod.merge(cfgmod.DEFAULTS, base)
        for item in args.set or ():
            k, _, v = item.partition("=")
            if not _:
                raise cfgmod.ConfigError(f"override {item!r} is not key.path=value")
            cfgmod.set_path(cfg, k.strip(), cfgmod.parse_value(v.strip()))
        cfgmod.validate(cfg)
        return cfg
    return cfgmod.load_config(getattr(args, "config", None), args.set or (),
                              getattr(args, "profile", None))


def _basis_for(cfg, ms):
    b = cfg["basis"]
    kind = b.get("kind")
    return basis_mod.default_spec(ms, kind, n_harmonics=int(b["n_harmonics"]),
                                  gsh_count=int(b["gsh_count"]))


def _mase_scale(model, oracle):
    # strain targets scale by the applied load; stress targets by their mean value
    if model.target == "vm":
        return float(np.mean(np.abs(oracle)))
    return model.scale


# --------------------------------------------------------------------------
# commands

def cmd_generate(args):
    cfg = _config_from_args(args)
    if args.n is not None:
        cfg["dataset"]["n"] = args.n
    if args.seed is not None:
        cfg["seed"] = args.seed
    cfgmod.validate(cfg)
    m = dataset.generate_dataset(cfg, args.out, workers=args.workers or cfg["workers"])
    n_train = len(m.split("train"))
    print(f"generated {len(m.entries)} instances ({n_train} train) in {args.out}")
    return 0


def cmd_solve(args):
    manifest = dataset.DatasetManifest.load(args.manifest)
    solver_cfg = dict(manifest.config.get("solver") or cfgmod.DEFAULTS["solver"])
    for item in args.set or ():
        k, _, v = item.partition("=")
        solver_cfg[k.strip().removeprefix("solver.")] = cfgmod.parse_value(v.strip())
    log = dataset.solve_dataset(manifest, solver_cfg, workers=args.workers or 1)
    failed = [k for k, r in log.items() if r["status"] != "ok"]
    its = [r["iterations"] for r in log.values() if r["status"] == "ok"]
    res = [r["residual"] for r in log.values() if r["status"] == "ok"]
    if its:
        print(f"solved {len(its)}/{len(log)}; iterations {min(its)}-{max(its)}; "
              f"max residual {max(res):.3e}")
    if failed:
        print(f"failed entries: {', '.join(failed)}", file=sys.stderr)
        return 2
    return 0


def cmd_train(args):
    manifest = dataset.DatasetManifest.load(args.manifest)
    cfg = _config_from_args(args, manifest.config)
    target = args.target or cfg["train"]["target"]
    entries, mss, targets = dataset.load_split(manifest, "train", target)
    spec = _basis_for(cfg, mss[0])
    ids = [dataset.file_digest(manifest.path(e["microstructure"])) for e in entries]
    model = core.fit(mss, targets, spec, cfgmod.train_config(cfg), np.asarray(manifest.mean_strain),
                     target, ids)
    model.provenance = {"config": cfg, "train_entries": [e["id"] for e in entries]}
    core.save_model(args.out, model)
    h = model.history[-1]
    print(f"trained {target} model: rank {model.rank}, {len(entries)} instances, "
          f"train rel. L2 {h['train_rel_l2']:.4e}")
    return 0


def cmd_predict(args):
    model = core.load_model(args.model)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for p in args.microstructures:
        ms = read_microstructure(p)
        pred = core.predict_rank1(model, ms) if args.rank1 else core.predict(model, ms)
        write_field(out / (Path(p).stem + ".xfd"), pred[None], [float(pred.mean())],
                    [model.target])
    print(f"wrote {len(args.microstructures)} predictions to {out}")
    return 0


def evaluate_model(model, manifest, n_bins=128, tail_fraction=0.05):
    """EvalReport for ``model`` on the manifest's solved test split."""
    if list(model.dims) != list(manifest.dims):
        raise core.XlraError(f"model dims {list(model.dims)} != dataset dims {manifest.dims}")
    tests = manifest.solved(manifest.split("test"))
    if not tests:
        raise dataset.DatasetError("no solved test entries")
    digests = {dataset.file_digest(manifest.path(e["microstructure"])): e["id"] for e in tests}
    leaked = sorted(digests[d] for d in set(model.train_ids) & set(digests))
    if leaked:
        raise dataset.DatasetError(f"split leakage: test entries {leaked} were used in training")
    entries, mss, oracle = dataset.load_split(manifest, "test", model.target)
    feats = [core.featurize(ms, model.basis) for ms in mss]
    pred = np.stack([core.predict_from_features(model, f) for f in feats])
    pred1 = np.stack([core.predict_from_features(model, f, ranks=1) for f in feats])
    flagged = sum(int(core.delta_field(o, p)[1].sum()) for o, p in zip(oracle, pred))
    report = metrics.evaluate_fields(oracle, pred, _mase_scale(model, oracle), model.target,
                                     [e["id"] for e in entries], n_bins, tail_fraction, flagged)
    om, pm = oracle.reshape(len(oracle), -1).mean(1), pred.reshape(len(pred), -1).mean(1)
    report.extra = {
        "rank": model.rank,
        "r2_rank1": metrics.r2(oracle, pred1),
        "relative_l2_rank1": metrics.relative_l2(oracle, pred1),
        "mean_field_relative_error_pct": float(np.mean(np.abs(pm - om) / np.abs(om)) * 100),
        "model_config": model.provenance.get("config"),
    }
    return report


def cmd_evaluate(args):
    model = core.load_model(args.model)
    manifest = dataset.DatasetManifest.load(args.manifest)
    cfg = manifest.config or cfgmod.DEFAULTS
    ev = cfg.get("eval", cfgmod.DEFAULTS["eval"])
    report = evaluate_model(model, manifest, int(ev["n_bins"]), float(ev["tail_fraction"]))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_text(out / "report.json", report.to_json() + "\n")
    _export_csvs(report, out)
    print(f"{model.target}: R2 {report.r2:.6f}  rel. L2 {report.relative_l2:.4f}%  "
          f"rel. MAE {report.relative_mae:.4e}  rel. MSE {report.relative_mse:.4e}  "
          f"MASE {report.mase:.4f}%  ({report.n_instances} test instances)")
    return 0


def _export_csvs(report, out):
    _write_text(out / "histogram.csv", metrics.histogram_csv(report))
    _write_text(out / "parity.csv", metrics.parity_csv(report))
    buf = io.StringIO()
    cols = ["id", "r2", "relative_l2", "mase", "max_relative_error", "mean_oracle",
            "mean_prediction"]
    w = csv.DictWriter(buf, cols, lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for row in report.per_instance:
        w.writerow(row)
    _write_text(out / "per_instance.csv", buf.getvalue())


def cmd_export_csv(args):
    d = json.loads(Path(args.report).read_text())
    report = metrics.EvalReport(**d)
    _export_csvs(report, Path(args.out))
    print(f"wrote histogram.csv, parity.csv, per_instance.csv to {args.out}")
    return 0


def cmd_flops(args):
    terms = metrics.flops_terms(args.k, args.N)
    total = metrics.xlra_train_flops(args.k, args.N)
    print(json.dumps({"k": args.k, "N": args.N, "coefficients": 2 * args.k,
                      "terms": {k: int(round(v)) for k, v in terms.items()},
                      "total": total}, indent=1))
    return 0


# --------------------------------------------------------------------------
# sweeps

SWEEP_AXES = ("train_size", "delta_T", "ec", "zener", "basis_count")
SWEEP_COLUMNS = ["axis", "value", "r2", "r2_rank1", "rank", "n_train", "n_test",
                 "t_generate", "t_solve", "t_train", "t_predict", "error"]


def _timed(fn, *a, **kw):
    t = time.perf_counter()
    out = fn(*a, **kw)
    return out, time.perf_counter() - t


def _build(cfg):
    seeds = dataset.instance_seeds(cfg["seed"], int(cfg["dataset"]["n"]))
    t0 = time.perf_counter()
    mss = [dataset.make_microstructure(cfg, s) for s in seeds]
    t_gen = time.perf_counter() - t0
    material = cfgmod.material_spec(cfg)
    E = cfgmod.mean_strain(cfg)
    t0 = time.perf_counter()
    targets = []
    for ms in mss:
        C, st = dataset.solve_instance(ms, material, E, cfg["solver"])
        targets.append(dataset.target_field(ms, st.values, material, cfg["train"]["target"], C))
    return mss, np.stack(targets), t_gen, time.perf_counter() - t0


def _fit_eval(cfg, mss, targets, train_idx, test_idx):
    spec = _basis_for(cfg, mss[0])
    feats = np.stack([core.featurize(ms, spec) for ms in mss])
    model, t_train = _timed(core.fit, None, targets[train_idx], spec, cfgmod.train_config(cfg),
                            cfgmod.mean_strain(cfg), cfg["train"]["target"],
                            features=feats[train_idx])
    pred, t_pred = _timed(core.predict_from_features, model, feats[test_idx])
    pred1 = core.predict_from_features(model, feats[test_idx], ranks=1)
    o = targets[test_idx]
    return {"r2": metrics.r2(o, pred), "r2_rank1": metrics.r2(o, pred1), "rank": model.rank,
            "n_train": len(train_idx), "n_test": len(test_idx), "t_train": t_train,
            "t_predict": t_pred}


def _split(cfg, n, fraction=None):
    f = cfg["dataset"]["train_fraction"] if fraction is None else fraction
    labels = dataset.split_labels(n, f, cfg["seed"])
    tr = np.array([i for i, lab in enumerate(labels) if lab == "train"])
    te = np.array([i for i, lab in enumerate(labels) if lab == "test"])
    return tr, te


def run_sweep(cfg, axis):
    """Rows (dicts) for one sweep axis; per-row failures land in ``error``."""
    if axis not in SWEEP_AXES:
        raise cfgmod.ConfigError(f"unknown sweep axis {axis!r}; choose from {SWEEP_AXES}")
    values = cfg["sweep"][axis]
    rows = []
    shared = None
    if axis in ("train_size", "delta_T"):
        shared = _build(cfg)
    for v in values:
        row = {"axis": axis, "value": v}
        try:
            c = json.loads(json.dumps(cfg))
            if axis == "train_size":
                mss, targets, tg, ts = shared
                n = len(mss)
                # nested training sets against one common test set
                order = np.random.default_rng(
                    np.random.SeedSequence(int(cfg["seed"]), spawn_key=(7,))).permutation(n)
                k = max(1, int(np.floor(float(v) * n + 0.5)))
                k_max = max(1, int(np.floor(max(map(float, values)) * n + 0.5)))
                tr, te = np.sort(order[:k]), np.sort(order[k_max:])
            elif axis == "delta_T":
                mss, targets, tg, ts = shared
                c["train"]["delta_T"] = v
                tr, te = _split(c, len(mss))
            else:
                if axis == "ec":
                    c["material"]["ec"] = float(v)
                    if c["material"]["preset"] not in ("two_phase", "porous"):
                        c["material"]["preset"] = "two_phase"
                elif axis == "zener":
                    c["material"] = dict(c["material"], preset="polycrystal", metal=v)
                    if c["generator"]["kind"] != "polycrystal":
                        c["generator"] = {"kind": "polycrystal",
                                          "params": cfgmod.GENERATOR_DEFAULTS["polycrystal"]}
                elif axis == "basis_count":
                    key = "gsh_count" if len(c["grid"]["dims"]) == 3 else "n_harmonics"
                    c["basis"][key] = int(v)
                    if c["generator"]["kind"] not in ("polycrystal", "dual_phase"):
                        c["generator"] = {"kind": "polycrystal",
                                          "params": cfgmod.GENERATOR_DEFAULTS["polycrystal"]}
                        c["material"]["preset"] = "polycrystal"
                cfgmod.validate(c)
                mss, targets, tg, ts = _build(c)
                tr, te = _split(c, len(mss))
            row.update(_fit_eval(c, mss, targets, tr, te), t_generate=tg, t_solve=ts)
        except (ValueError, SolverError, np.linalg.LinAlgError) as exc:
            row["error"] = f"{type(exc).__name__}: {exc}"
        rows.append(row)
    return rows


def sweep_csv(rows):
    buf = io.StringIO()
    w = csv.DictWriter(buf, SWEEP_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


def cmd_sweep(args):
    cfg = _config_from_args(args)
    if args.values:
        cfg["sweep"][args.axis] = [cfgmod.parse_value(v) for v in args.values.split(",")]
    if args.axis == "delta_T":
        cfg["sweep"]["delta_T"] = [math.inf if str(v) == "inf" else float(v)
                                   for v in cfg["sweep"]["delta_T"]]
    rows = run_sweep(cfg, args.axis)
    _write_text(args.out, sweep_csv(rows))
    for r in rows:
        status = r.get("error") or f"R2 {r['r2']:.4f} (rank-1 {r['r2_rank1']:.4f}, rank {r['rank']})"
        print(f"{args.axis}={r['value']}: {status}")
    return 0


# --------------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="xlra", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", help="JSON run configuration")
            sp.add_argument("--profile", choices=sorted(cfgmod.PROFILES))
        sp.add_argument("--set", action="append", metavar="KEY.PATH=VALUE",
                        help="override one config value (repeatable)")

    g = sub.add_parser("generate", help="generate microstructures and a dataset manifest")
    common(g)
    g.add_argument("--out", required=True)
    g.add_argument("--n", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--workers", type=int)
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("solve", help="solve every manifest entry with the spectral oracle")
    s.add_argument("manifest")
    s.add_argument("--workers", type=int)
    common(s, config=False)
    s.set_defaults(func=cmd_solve)

    t = sub.add_parser("train", help="fit an xLRA model on the train split")
    t.add_argument("manifest")
    t.add_argument("--out", required=True)
    t.add_argument("--target", choices=dataset.TARGETS)
    common(t, config=False)
    t.set_defaults(func=cmd_train)

    pr = sub.add_parser("predict", help="predict fields for microstructure files")
    pr.add_argument("model")
    pr.add_argument("microstructures", nargs="+")
    pr.add_argument("--out", required=True)
    pr.add_argument("--rank1", action="store_true", help="use only the first rank")
    pr.set_defaults(func=cmd_predict)

    e = sub.add_parser("evaluate", help="evaluate a model on the test split")
    e.add_argument("model")
    e.add_argument("manifest")
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_evaluate)

    sw = sub.add_parser("sweep", help="accuracy/timing sweep along one axis")
    common(sw)
    sw.add_argument("--axis", required=True, choices=SWEEP_AXES)
    sw.add_argument("--values", help="comma-separated axis values (overrides config)")
    sw.add_argument("--out", required=True)
    sw.set_defaults(func=cmd_sweep)

    f = sub.add_parser("flops", help="training FLOP model")
    f.add_argument("--k", type=int, required=True, help="maximum rank")
    f.add_argument("--N", type=int, required=True, help="total cell count")
    f.set_defaults(func=cmd_flops)

    x = sub.add_parser("export-csv", help="histogram/parity/per-instance CSVs from report.json")
    x.add_argument("report")
    x.add_argument("--out", required=True)
    x.set_defaults(func=cmd_export_csv)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SolverError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
