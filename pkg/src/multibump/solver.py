"""Multibump solves on periodic windows.

The solution with prescribed bump code is obtained by damped Newton from the
singular-limit guess (bumps pasted where the code is 1), continued upward in
mu along a geometric schedule, and then certified a posteriori against the
energy dichotomy, positivity, amplitude and junction-slope conditions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from . import assembly, localfield
from .errors import (CertificationFailure, ContinuationBreakdown,
                     NewtonFailure, ScheduleExhausted, WeightError)
from .weight import build_constant_pack

_UNDAMPED_BELOW = 1e-4
_ARMIJO = 1e-4
_AMP_CAP = 1e6


# -- symbol windows -----------------------------------------------------------


def max_zero_run(symbols, periodic=True):
    """Longest run of zeros, measured cyclically for periodic windows."""
    s = list(symbols)
    if all(v == 0 for v in s):
        return len(s)
    if periodic:
        # rotate so the scan starts right after a 1; then runs cannot wrap
        j = s.index(1)
        s = s[j:] + s[:j]
    run = best = 0
    for v in s:
        run = run + 1 if v == 0 else 0
        best = max(best, run)
    return best


@dataclass(frozen=True)
class SymbolWindow:
    """A finite 0/1 code, one symbol per positivity interval."""
    symbols: tuple
    periodic: bool = True
    k_bound: int = 0
    i_start: int = 0

    def __len__(self):
        return len(self.symbols)


def make_window(symbols, periodic=True, k_bound=None, i_start=None):
    symbols = tuple(int(v) for v in symbols)
    if not symbols:
        raise WeightError("empty symbol window")
    if any(v not in (0, 1) for v in symbols):
        raise WeightError("symbols must be 0 or 1")
    if not any(symbols):
        raise WeightError("the code must contain at least one 1")
    run = max_zero_run(symbols, periodic)
    if k_bound is None:
        k_bound = run
    elif run > k_bound:
        raise WeightError(f"zero run {run} exceeds the bound {k_bound}")
    if i_start is None:
        # symmetric placement for odd windows, anchored at 0 otherwise
        i_start = -(len(symbols) - 1) // 2 if len(symbols) % 2 else 0
    return SymbolWindow(symbols=symbols, periodic=periodic,
                        k_bound=int(k_bound), i_start=int(i_start))


def parse_symbols(text):
    """Parse strings like ``110`` or ``1,0,1`` into a 0/1 tuple."""
    text = text.replace(",", "").replace(" ", "")
    return tuple(int(ch) for ch in text)


# -- reports ------------------------------------------------------------------


@dataclass
class SolveReport:
    residual_inf: float
    interval_energies: dict           # i -> {"plus": E, "minus": E}
    condition_flags: dict             # "C1".."C4" -> {i: bool}
    positivity: bool
    dichotomy: dict                   # i -> "small" | "large"
    ties: dict                        # i -> True when E is within noise of r^2
    continuation_path: list = field(default_factory=list)
    mu: float = float("nan")

    @property
    def certified(self):
        flags = all(all(d.values()) for d in self.condition_flags.values())
        return flags and self.positivity

    def failing(self):
        out = [name for name, d in self.condition_flags.items()
               if not all(d.values())]
        if not self.positivity:
            out.append("positivity")
        return out

    def to_dict(self):
        return {
            "mu": self.mu,
            "residual_inf": self.residual_inf,
            "certified": self.certified,
            "positivity": self.positivity,
            "interval_energies": {str(i): e
                                  for i, e in self.interval_energies.items()},
            "condition_flags": {k: {str(i): bool(v) for i, v in d.items()}
                                for k, d in self.condition_flags.items()},
            "dichotomy": {str(i): s for i, s in self.dichotomy.items()},
            "ties": {str(i): bool(v) for i, v in self.ties.items()},
            "continuation_path": [[m, int(it)]
                                  for m, it in self.continuation_path],
        }


@dataclass(eq=False)
class Solution:
    u: assembly.GridFunction
    mu: float
    window: SymbolWindow
    report: SolveReport

    @property
    def grid(self):
        return self.u.grid


@dataclass
class SolveOptions:
    cells_per_interval: int = 0        # 0: pick from mu_target
    newton_tol: float = 1e-10
    max_newton: int = 40
    mu0: float = 10.0
    growth: float = 2.0
    max_refine: int = 3
    consts: object = None              # precomputed ConstantPack
    levels_mesh: int = None


def auto_cells(w, mu):
    """Cells per subinterval needed to track the sharpening interior layers.

    The interior profile on negativity intervals turns over on a length scale
    shrinking like mu^(-1/2); keep several cells inside that layer.
    """
    base = 400.0
    grow = (max(mu, 100.0) / 100.0) ** 0.5
    return int(min(6000, max(400, math.ceil(base * math.sqrt(grow)))))


# -- Newton and continuation --------------------------------------------------


def _newton(grid, values, mu, tol, max_iter):
    """Damped Newton for gradient(u, mu) = 0 on the grid's dofs."""
    u = values.copy()
    r = assembly.gradient(assembly.GridFunction(grid, u), mu).values
    for it in range(1, max_iter + 1):
        rn = float(np.max(np.abs(r)))
        if rn <= tol:
            return u, it - 1
        J = assembly.jacobian_matrix(assembly.GridFunction(grid, u), mu)
        try:
            step = spla.splu(J.tocsc()).solve(r)
        except RuntimeError as e:
            raise NewtonFailure(f"singular Jacobian: {e}") from None
        phi0 = float(r @ r)
        alpha = 1.0
        while True:
            trial = u - alpha * step
            if np.max(np.abs(trial)) > _AMP_CAP:
                rt = None
            else:
                rt = assembly.gradient(
                    assembly.GridFunction(grid, trial), mu).values
                if float(rt @ rt) <= (1.0 - 2.0 * _ARMIJO * alpha) * phi0 \
                        or rn < _UNDAMPED_BELOW:
                    u, r = trial, rt
                    break
            alpha *= 0.5
            if alpha < 1e-8:
                raise NewtonFailure(
                    f"line search failed at residual {rn:.3e}")
    raise NewtonFailure(f"no convergence in {max_iter} iterations "
                        f"(residual {float(np.max(np.abs(r))):.3e})")


def _continue_mu(grid, values, mu_from, mu_to, opts, path):
    """Walk mu geometrically from mu_from to mu_to, reusing iterates."""
    u = values
    mu = mu_from
    g = opts.growth
    refine = 0
    while mu < mu_to * (1.0 - 1e-12):
        nxt = min(mu * g, mu_to)
        try:
            u2, iters = _newton(grid, u, nxt, opts.newton_tol, opts.max_newton)
        except NewtonFailure:
            refine += 1
            if refine > opts.max_refine:
                raise ContinuationBreakdown(
                    f"Newton failed at mu={nxt:.4g} after "
                    f"{refine - 1} schedule refinements") from None
            g = math.sqrt(g)
            continue
        u, mu = u2, nxt
        path.append((mu, iters))
    return u


# -- construction of guess and certification ----------------------------------


def initial_guess(w, window, bump, grid):
    """Paste the positive bump on each coded interval, zero elsewhere."""
    if len(window.symbols) != grid.n_int:
        raise WeightError("window length does not match the grid span")
    vals = np.zeros(grid.ndof)
    bt = bump.t - bump.t[0]
    for p, sym in enumerate(window.symbols):
        if not sym:
            continue
        i = grid.i0 + p
        a, b = grid.interval_nodes(i, "plus")
        ts = grid.nodes[a:b + 1] - w.sigma(i)
        vv = np.interp(ts, bt, bump.u)
        vv[0] = vv[-1] = 0.0
        dofs = np.arange(a, b + 1) % grid.ndof
        vals[dofs] = vv
    return assembly.GridFunction(grid, vals)


def check_membership(u, mu, consts, window):
    """Evaluate conditions (C1)-(C4), positivity and the energy dichotomy."""
    grid = u.grid
    if len(window.symbols) != grid.n_int:
        raise WeightError("window length does not match the grid span")
    w = grid.w
    full = u.full()
    nodes = grid.nodes
    r2 = consts.r ** 2
    upper = 2.0 * (consts.c + consts.c_zeta)

    energies = {}
    c1 = {}
    c2 = {}
    c3 = {}
    c4 = {}
    dich = {}
    ties = {}
    for p, sym in enumerate(window.symbols):
        i = grid.i0 + p
        ep = assembly.interval_energy(u, i, "plus")
        em = assembly.interval_energy(u, i, "minus")
        energies[i] = {"plus": ep, "minus": em}
        ties[i] = abs(ep - r2) <= 1e-12 * max(r2, 1.0)
        # measure-zero tie: classify as large and leave the flag raised
        dich[i] = "large" if ep > r2 or ties[i] else "small"
        c1[i] = (r2 < ep < upper) if sym else (ep < r2)
        # C3 on every negativity interval of the window
        ta, tb = grid.interval_nodes(i, "minus")
        c3[i] = bool(np.max(np.abs(full[ta:tb + 1])) < consts.K)
        if not sym:
            continue
        # C2: strict positivity on the shrunk positivity interval
        lo = w.sigma(i) + consts.zeta
        hi = w.tau_i(i) - consts.zeta
        a = int(np.searchsorted(nodes, lo))
        b = int(np.searchsorted(nodes, hi, side="right"))
        inner = full[a:b] if b > a else np.array([])
        ends = u.eval(np.array([lo, hi]))
        c2[i] = bool(np.all(inner > 0.0) and np.all(ends > 0.0))
        # C4: one-sided slopes from the adjacent negativity-side cells
        sn = grid.sigma_node(i)
        tn = grid.tau_node(i)
        h = grid.tables.h
        us = full[sn]
        slope_in = (full[sn] - full[sn - 1]) / h[sn - 1] if sn > 0 else \
            (full[sn] - full[-2]) / h[-1]
        ut = full[tn]
        slope_out = (full[tn + 1] - full[tn]) / h[tn]
        ok = True
        if us >= 0.0:
            ok = ok and slope_in < consts.rho
        if us <= 0.0:
            ok = ok and slope_in > -consts.rho
        if ut >= 0.0:
            ok = ok and slope_out > -consts.rho
        if ut <= 0.0:
            ok = ok and slope_out < consts.rho
        c4[i] = bool(ok)

    residual = float(np.max(np.abs(assembly.gradient(u, mu).values)))
    return SolveReport(
        residual_inf=residual,
        interval_energies=energies,
        condition_flags={"C1": c1, "C2": c2, "C3": c3, "C4": c4},
        positivity=bool(np.all(u.values > 0.0)),
        dichotomy=dich,
        ties=ties,
        mu=float(mu),
    )


# -- top-level solves ----------------------------------------------------------


def _prepare(w, window, opts):
    if opts.consts is not None:
        return opts.consts, None
    ev = localfield.LevelEvaluator(w, opts.levels_mesh)
    consts = build_constant_pack(w, ev, k=window.k_bound)
    return consts, ev


def solve_multibump(w, window, mu_target, opts=None):
    """Certified multibump solution at mu_target for the given window."""
    opts = opts or SolveOptions()
    if mu_target <= 0:
        raise WeightError("mu_target must be positive")
    consts, ev = _prepare(w, window, opts)
    bump = ev.ground_bump() if ev is not None else \
        localfield.ground_state(w, opts.levels_mesh)

    cells = opts.cells_per_interval or auto_cells(w, mu_target)
    grid = assembly.span_grid(w, window.i_start, len(window.symbols), cells,
                              periodic=True)
    guess = initial_guess(w, window, bump, grid)

    path = []
    mu_start = min(opts.mu0, mu_target)
    try:
        u, iters = _newton(grid, guess.values, mu_start, opts.newton_tol,
                           opts.max_newton)
    except NewtonFailure as e:
        raise ContinuationBreakdown(
            f"Newton failed at the schedule start mu={mu_start:.4g}: {e}") \
            from None
    path.append((mu_start, iters))
    u = _continue_mu(grid, u, mu_start, mu_target, opts, path)

    gf = assembly.GridFunction(grid, u)
    report = check_membership(gf, mu_target, consts, window)
    report.continuation_path = path
    if not report.certified:
        raise CertificationFailure(
            f"conditions failed at mu={mu_target:.4g}: {report.failing()}",
            report=report)
    return Solution(u=gf, mu=float(mu_target), window=window, report=report)


def continuation_states(w, window, mu_list, opts=None):
    """Yield (mu, GridFunction, SolveReport) along an increasing mu list,
    reusing each converged iterate for the next target; certification is
    evaluated (not enforced) at every stop."""
    opts = opts or SolveOptions()
    mu_list = sorted(float(m) for m in mu_list)
    consts, ev = _prepare(w, window, opts)
    bump = ev.ground_bump() if ev is not None else \
        localfield.ground_state(w, opts.levels_mesh)
    cells = opts.cells_per_interval or auto_cells(w, mu_list[-1])
    grid = assembly.span_grid(w, window.i_start, len(window.symbols), cells,
                              periodic=True)
    guess = initial_guess(w, window, bump, grid)

    path = []
    mu_start = min(opts.mu0, mu_list[0])
    try:
        u, iters = _newton(grid, guess.values, mu_start, opts.newton_tol,
                           opts.max_newton)
    except NewtonFailure as e:
        raise ContinuationBreakdown(
            f"Newton failed at the schedule start mu={mu_start:.4g}: {e}") \
            from None
    path.append((mu_start, iters))
    mu_cur = mu_start
    for mu in mu_list:
        if mu > mu_cur:
            u = _continue_mu(grid, u, mu_cur, mu, opts, path)
            mu_cur = mu
        gf = assembly.GridFunction(grid, u.copy())
        report = check_membership(gf, mu, consts, window)
        report.continuation_path = list(path)
        yield mu, gf, report


def estimate_mu_star(w, k, probe_windows, schedule=None, opts=None):
    """Empirical bracket [mu_fail, mu_pass] for the certification threshold.

    mu_pass is the smallest scheduled mu at which every probe window
    certifies; mu_fail is the largest scheduled mu below it at which some
    probe failed (0 when every scheduled value passes).
    """
    opts = opts or SolveOptions()
    if schedule is None:
        schedule = [10.0 * 2.0 ** j for j in range(14)]
    schedule = sorted(float(m) for m in schedule)
    table = {}
    for win in probe_windows:
        if win.k_bound > k:
            raise WeightError("probe window exceeds the zero-run bound")
        outcomes = []
        try:
            for mu, _, report in continuation_states(w, win, schedule, opts):
                outcomes.append((mu, report.certified))
        except (ContinuationBreakdown, NewtonFailure):
            # whatever was not reached counts as failing
            reached = {m for m, _ in outcomes}
            outcomes.extend((m, False) for m in schedule if m not in reached)
        table[win.symbols] = outcomes

    mu_pass = None
    mu_fail = 0.0
    for j, mu in enumerate(schedule):
        if all(dict(table[w_])[mu] for w_ in table):
            mu_pass = mu
            break
        mu_fail = mu
    if mu_pass is None:
        raise ScheduleExhausted(
            f"no scheduled mu up to {schedule[-1]:.4g} certifies all probes")
    return MuStarBracket(mu_fail=mu_fail, mu_pass=mu_pass, table=table)


@dataclass
class MuStarBracket:
    mu_fail: float
    mu_pass: float
    table: dict

    def __float__(self):
        return float(self.mu_pass)


def subharmonic(w, window, mu, opts=None):
    """Solve on one mT cell and detect the minimal period.

    Returns (Solution, minimal_period) with the period a multiple of T.
    """
    if not window.periodic:
        raise WeightError("subharmonic windows must be periodic")
    sol = solve_multibump(w, window, mu, opts)
    from .verify import minimal_period
    d = minimal_period(sol, len(window.symbols))
    return sol, d * w.period
