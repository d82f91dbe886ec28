"""Time the compiled kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--n 2000000] [--repeat 5]

Compiled timings exclude the first (JIT) call.  With numba missing, or with
BOUNDEDNOISE_NO_NUMBA=1, only the numpy column is reported.
"""
import argparse
import time

import numpy as np

from boundednoise import NoiseFamily, unit_table
from boundednoise import _kernels as K
from boundednoise._accel import HAVE_NUMBA


def best_of(fn, repeat):
    ts = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        ts.append(time.perf_counter() - t0)
    return min(ts)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=2_000_000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    fam = NoiseFamily.poly(2)
    tab = unit_table(fam)
    kargs = tab.kernel_args
    rng = np.random.default_rng(0)
    u = rng.random(args.n)
    eta = rng.uniform(-0.99, 0.99, args.n)
    k = 1000
    U = rng.random((max(1, args.n // k), k))
    lams = np.geomspace(1e-6, 1e3, 256)
    logw = np.log(rng.random(1 << 14))
    v = rng.normal(size=1 << 14)

    cases = {
        "f_values": (lambda: K._nb_f(fam.code, fam.p, eta), lambda: K._np_f(fam.code, fam.p, eta)),
        "unit_quantile": (lambda: K._nb_unit_quantile(u, *kargs),
                          lambda: K._np_unit_quantile(u, *kargs)),
        "loss_sums": (lambda: K._nb_loss_sums(U, 1e-3, fam.code, fam.p, *kargs),
                      lambda: K._np_loss_sums(U, 1e-3, fam.code, fam.p, *kargs)),
        "log_mgf_grid": (lambda: K._nb_log_mgf_grid(lams, logw, v),
                         lambda: K._np_log_mgf_grid(lams, logw, v)),
    }
    print(f"{'kernel':<16}{'numba [ms]':>12}{'numpy [ms]':>12}{'speedup':>10}")
    for name, (nb, npf) in cases.items():
        t_np = best_of(npf, args.repeat)
        if HAVE_NUMBA:
            nb()   # compile
            t_nb = best_of(nb, args.repeat)
            print(f"{name:<16}{1e3 * t_nb:>12.2f}{1e3 * t_np:>12.2f}{t_np / t_nb:>10.2f}")
        else:
            print(f"{name:<16}{'-':>12}{1e3 * t_np:>12.2f}{'-':>10}")


if __name__ == "__main__":
    main()
