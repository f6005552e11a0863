"""Numba versus numpy backend timings.

Two comparisons:

* leaf primitives (isotonic regression, simplex projection) in one process,
  jitted loop against the vectorized numpy formulation;
* end-to-end solves, each backend in its own interpreter because the
  ``OWAPTO_DISABLE_NUMBA`` flag is read at import time.

Usage::

    python3 benchmarks/bench_kernels.py [--repeats 200] [--json out.json]
"""

import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

SOLVE_SNIPPET = r"""
import json, sys, timeit
import numpy as np
from owapto import solvers as S
from owapto._accel import backend
from owapto.owa import fair_gini_weights
rng = np.random.default_rng(0)
out = {"backend": backend()}
repeats = int(sys.argv[1])
for m, n in [(3, 10), (5, 30)]:
    w = fair_gini_weights(m)
    C = rng.uniform(0, 1, (m, n))
    for name, fn in [("moreau", lambda: S.solve_owa_moreau(w, C, 0.1)),
                     ("psg", lambda: S.solve_owa_reference(w, C)),
                     ("qp", lambda: S.solve_owa_qp_reformulation(w, C, 0.5))]:
        fn()  # compile / warm caches
        out[f"{name} m={m} n={n}"] = min(timeit.repeat(fn, number=1, repeat=repeats))
print(json.dumps(out))
"""


def bench_leaves(repeats):
    from owapto import kernels
    from owapto._accel import NUMBA_ENABLED, njit

    rng = np.random.default_rng(0)
    rows = []
    for size in (8, 64, 512):
        y = rng.normal(size=size)
        pairs = [("pav", kernels.pav_nonincreasing_loop, kernels.pav_nonincreasing_numpy),
                 ("simplex", kernels.simplex_project_loop, kernels.simplex_project_numpy)]
        for name, loop, vec in pairs:
            jit = njit(loop) if NUMBA_ENABLED else loop
            jit(y)
            t_jit = min(timeit.repeat(lambda: jit(y), number=20, repeat=repeats)) / 20
            t_np = min(timeit.repeat(lambda: vec(y), number=20, repeat=repeats)) / 20
            rows.append((f"{name} size={size}", t_jit, t_np))
    return rows


def bench_solves(repeats, disable):
    env = dict(os.environ)
    env.pop("OWAPTO_DISABLE_NUMBA", None)
    if disable:
        env["OWAPTO_DISABLE_NUMBA"] = "1"
    res = subprocess.run([sys.executable, "-c", SOLVE_SNIPPET, str(repeats)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(res.stdout)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=50)
    ap.add_argument("--json", help="also write the timings here")
    args = ap.parse_args(argv)

    leaves = bench_leaves(args.repeats)
    print(f"{'leaf primitive':<22}{'numba us':>12}{'numpy us':>12}{'speedup':>10}")
    for label, a, b in leaves:
        print(f"{label:<22}{a * 1e6:>12.2f}{b * 1e6:>12.2f}{b / a:>10.1f}")

    fast = bench_solves(max(3, args.repeats // 10), disable=False)
    slow = bench_solves(3, disable=True)
    print(f"\n{'solve':<22}{'numba ms':>12}{'numpy ms':>12}{'speedup':>10}")
    for key in fast:
        if key == "backend":
            continue
        print(f"{key:<22}{fast[key] * 1e3:>12.2f}{slow[key] * 1e3:>12.2f}{slow[key] / fast[key]:>10.1f}")

    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"leaves": leaves, "numba": fast, "numpy": slow}, fh, indent=2)


if __name__ == "__main__":
    main()
