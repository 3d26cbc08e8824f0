"""Compare the jitted kernels against their pure-numpy twins.

Both variants are importable side by side (the wired names follow the
MULTIBUMP_NUMBA flag, the ``*_py`` names are always the numpy path), so one
process can time the pair directly.  Run with MULTIBUMP_NUMBA=0 to confirm
the fallback wiring: the ratio column collapses to ~1.

Usage: python benchmarks/bench_kernels.py [--repeats 200] [--cells 400]
"""

import argparse
import time

import numpy as np

from multibump import _kernels, assembly, solver, weight


def best_of(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_integrator(w, repeats):
    """One period of the full system at mu = 1, restarted per repetition.

    This is the oracle's shooting workload: short adaptive runs from fresh
    boundary data, dense record kept.
    """
    nrec = 1 << 12
    rec_t = np.empty(nrec)
    rec_y = np.empty((nrec, 5))
    knots = w.knots_in_span(0.0, w.period)
    packs = [w.segment_pack(ta, tb) for ta, tb in zip(knots[:-1], knots[1:])]

    def run(runner):
        y = np.zeros(5)
        y[1] = 1.0
        rec_t[0] = 0.0
        rec_y[0] = y
        off = 1
        for (coefs, tref), ta, tb in zip(packs, knots[:-1], knots[1:]):
            status, off, _ = runner(coefs, tref, 1.0, ta, tb, y, 2,
                                    1e-10, 1e-12, 1e6, np.inf,
                                    rec_t, rec_y, off, nrec)
            assert status == _kernels.OK
        return off

    run(_kernels.dp54_run)  # compile outside the clock
    t_wired = best_of(lambda: run(_kernels.dp54_run), repeats)
    t_py = best_of(lambda: run(_kernels.dp54_run_py), repeats)
    return t_wired, t_py


def bench_assembly(w, cells, repeats):
    """Cubic-term scatter and Jacobian cell blocks on a 16-interval span."""
    grid = assembly.span_grid(w, -8, 8, cells)
    tb = grid.tables
    rng = np.random.default_rng(0)
    full = rng.standard_normal(grid.nodes.size)
    uq = full[tb.qcell] * (1.0 - tb.qlam) + full[tb.qcell + 1] * tb.qlam
    coef = tb.qw * tb.amu(1000.0) * uq ** 3
    out = np.zeros(full.size)
    n = len(tb.h)
    cLL = np.zeros(n)
    cLR = np.zeros(n)
    cRR = np.zeros(n)

    def scat(fn):
        out[:] = 0.0
        fn(out, coef, tb.qlam, tb.qcell, tb.qcell + 1)

    def hess(fn):
        cLL[:] = 0.0
        cLR[:] = 0.0
        cRR[:] = 0.0
        fn(cLL, cLR, cRR, tb.qcell, coef, tb.qlam)

    scat(_kernels.scatter_hat)
    hess(_kernels.hess_cells)
    rows = [
        ("scatter_hat", best_of(lambda: scat(_kernels.scatter_hat), repeats),
         best_of(lambda: scat(_kernels.scatter_hat_py), repeats)),
        ("hess_cells", best_of(lambda: hess(_kernels.hess_cells), repeats),
         best_of(lambda: hess(_kernels.hess_cells_py), repeats)),
    ]
    return rows, grid.nodes.size - 1


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=200,
                    help="timing repetitions, best-of reported")
    ap.add_argument("--cells", type=int, default=400,
                    help="cells per weight interval for the assembly rows")
    args = ap.parse_args()

    w = weight.make_step_weight()
    print(f"wired backend: {_kernels.backend()}")

    rows = []
    t_wired, t_py = bench_integrator(w, args.repeats)
    rows.append(("dp54 one period", t_wired, t_py))
    asm_rows, ncells = bench_assembly(w, args.cells, args.repeats)
    rows.extend(asm_rows)

    print(f"assembly rows on {ncells} cells, best of {args.repeats}")
    print(f"{'kernel':<18} {'wired':>10} {'numpy':>10} {'ratio':>7}")
    for name, tw, tp in rows:
        print(f"{name:<18} {tw * 1e6:9.1f}u {tp * 1e6:9.1f}u {tp / tw:7.2f}")

    t0 = time.perf_counter()
    win = solver.make_window((1, 0))
    opts = solver.SolveOptions(cells_per_interval=args.cells)
    solver.solve_multibump(w, win, 1e3, opts)
    print(f"end-to-end solve (1,0) at mu=1e3: "
          f"{time.perf_counter() - t0:.2f}s on the wired backend")


if __name__ == "__main__":
    main()
