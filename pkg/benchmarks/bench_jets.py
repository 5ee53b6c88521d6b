"""Compare the compiled and pure-Python jet kernels.

    python benchmarks/bench_jets.py [--repeat 5]

Times the raw kernels (series product, univariate composition) and one
end-to-end workload (order-4 modified potential of an R-separable metric).
"""
import argparse
import timeit

import numpy as np

from rsep import jets
from rsep.families import make_rsep
from rsep.geometry import LocalGeometry


def kernel_cases(n=3, order=4):
    rng = np.random.default_rng(0)
    size = jets.ncoef(n, order)
    a, b = rng.normal(size=size), rng.normal(size=size)
    taylor = rng.normal(size=order + 1)
    ia, ib, ic = jets._mul_table(n, order)
    return {
        f"mul n={n} order={order}": lambda k: k.mul(a, b, ia, ib, ic, size),
        f"compose n={n} order={order}": lambda k: k.compose(a, taylor, ia, ib, ic, size),
    }


def potential_case():
    m = make_rsep(roots=(0, 1, 2, 3, 4), Q="sphere")
    p = m.domain.center()
    return lambda: LocalGeometry(m, p, 4).potential_jet.value


def best(fn, number, repeat):
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = jets.available_backends()
    if "cython" not in backends:
        print("compiled extension not built; only the Python kernels are available")
    from rsep import _jetpy
    modules = {"python": _jetpy}
    if "cython" in backends:
        from rsep import _jetcore
        modules["cython"] = _jetcore

    rows = []
    for name, case in kernel_cases().items():
        rows.append((name, {b: best(lambda: case(mod), 2000, args.repeat)
                            for b, mod in modules.items()}))
    work = potential_case()
    times = {}
    for b in modules:
        jets.use_backend(b)
        times[b] = best(work, 3, args.repeat)
    rows.append(("modified potential (order 4)", times))

    cols = list(modules)
    print(f"{'workload':<32}" + "".join(f"{c + ' [us]':>16}" for c in cols) + f"{'speedup':>10}")
    for name, t in rows:
        speed = t["python"] / t["cython"] if "cython" in t else float("nan")
        print(f"{name:<32}" + "".join(f"{t[c] * 1e6:>16.1f}" for c in cols) + f"{speed:>10.2f}")


if __name__ == "__main__":
    main()
