"""Compare the compiled kernels with the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Each kernel runs on identical inputs under both backends; the script checks
that outputs agree before reporting timings.
"""
import argparse
import json
import sys
import timeit

import numpy as np

from xlra import _backend, elasticity as el, microstructure as m, solver as so


def cases():
    rng = np.random.default_rng(0)
    out = {}
    for dims in [(64, 64), (32, 32, 32)]:
        d, nv = len(dims), 3 if len(dims) == 2 else 6
        n = int(np.prod(dims))
        xi = np.ascontiguousarray(el.frequencies(dims).reshape(d, -1))
        nmat = el.acoustic_inverse(el.reduce_plane_strain(el.isotropic_stiffness(200, 0.3))
                                   if d == 2 else el.isotropic_stiffness(200, 0.3), xi)
        pol = rng.standard_normal((nv, n)) + 1j * rng.standard_normal((nv, n))
        base = rng.standard_normal((nv, n)) + 1j * rng.standard_normal((nv, n))
        C = np.ascontiguousarray(rng.standard_normal((nv, nv, n)))
        v = np.ascontiguousarray(rng.standard_normal((nv, n)))
        seeds = rng.uniform(0, 1, (20, d)) * np.array(dims)

        def green(base=base, pol=pol, xi=xi, nmat=nmat):
            out = base.copy()
            _backend.green_update(out, pol, xi, nmat, False)
            return out

        tag = "x".join(map(str, dims))
        out[f"green_update {tag}"] = green
        out[f"cell_matvec {tag}"] = lambda C=C, v=v: _backend.cell_matvec(C, v)
        out[f"voronoi_label {tag} (20 seeds)"] = \
            lambda dims=dims, s=seeds: _backend.voronoi_label(dims, s, np.ones(len(dims)))

    ms = m.gen_two_phase(3, (31, 31))
    C = el.assemble_stiffness_field(ms, el.two_phase_material(10))
    E = np.array([1e-4, 0.0, 0.0])
    out["solve 31x31 EC=10"] = lambda: so.solve_local_strain(C, E).values
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json")
    args = ap.parse_args(argv)
    if "compiled" not in _backend.BACKENDS:
        print("compiled backend unavailable; only the fallback can be timed", file=sys.stderr)
    results = {}
    for name, fn in cases().items():
        row = {}
        outputs = {}
        for backend in ("compiled", "python"):
            if backend not in _backend.BACKENDS:
                continue
            _backend.use(backend)
            outputs[backend] = fn()
            t = timeit.Timer(fn)
            number, _ = t.autorange()
            row[backend] = min(t.repeat(args.repeat, number)) / number
        if len(outputs) == 2:
            a, b = outputs["compiled"], outputs["python"]
            row["max_abs_diff"] = float(np.max(np.abs(a - b)))
            row["speedup"] = row["python"] / row["compiled"]
        results[name] = row
    _backend.use("compiled" if "compiled" in _backend.BACKENDS else "python")

    width = max(map(len, results))
    print(f"{'kernel':<{width}}  {'compiled':>11}  {'python':>11}  {'speedup':>8}  max|diff|")
    for name, r in results.items():
        c = f"{r['compiled'] * 1e3:9.3f}ms" if "compiled" in r else "        n/a"
        print(f"{name:<{width}}  {c}  {r['python'] * 1e3:9.3f}ms  "
              f"{r.get('speedup', float('nan')):7.2f}x  {r.get('max_abs_diff', float('nan')):.1e}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(results, fh, indent=1)


if __name__ == "__main__":
    main()
