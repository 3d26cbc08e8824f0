"""Audit suite for computed multibump branches.

Everything here re-measures a finished solution: the variational identities
it must satisfy on its window, the decay of its small part in mu, the
distance to the singular-limit profile (a bump copied onto the coded
intervals, zero elsewhere), Hoelder/Lipschitz seminorm behaviour along a
sweep, minimal-period detection for subharmonics, and an independent
re-integration of every subinterval with the shooting oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import kendalltau, linregress

from . import assembly, oracle, solver
from .errors import InsufficientSweep, WeightError

_G5X, _G5W = np.polynomial.legendre.leggauss(5)


# -- the cutoff family ---------------------------------------------------------


def cutoff(w, i, ts):
    """eta_i: 1 on [sigma_i, tau_i], cosine ramps over quarter gaps outside.

    The ramp width is (T - tau)/4, so consecutive cutoffs have disjoint
    supports and eta_i vanishes well inside both neighbouring negativity
    intervals.
    """
    ts = np.asarray(ts, dtype=float)
    delta = 0.25 * (w.period - w.tau)
    lo, hi = w.sigma(i), w.tau_i(i)
    out = np.zeros_like(ts)
    inside = (ts >= lo) & (ts <= hi)
    out[inside] = 1.0
    up = (ts > lo - delta) & (ts < lo)
    out[up] = 0.5 * (1.0 - np.cos(math.pi * (ts[up] - lo + delta) / delta))
    dn = (ts > hi) & (ts < hi + delta)
    out[dn] = 0.5 * (1.0 + np.cos(math.pi * (ts[dn] - hi) / delta))
    return out


def cutoff_derivative(w, i, ts):
    ts = np.asarray(ts, dtype=float)
    delta = 0.25 * (w.period - w.tau)
    lo, hi = w.sigma(i), w.tau_i(i)
    out = np.zeros_like(ts)
    up = (ts > lo - delta) & (ts < lo)
    out[up] = 0.5 * math.pi / delta * np.sin(
        math.pi * (ts[up] - lo + delta) / delta)
    dn = (ts > hi) & (ts < hi + delta)
    out[dn] = -0.5 * math.pi / delta * np.sin(math.pi * (ts[dn] - hi) / delta)
    return out


# -- piecewise-linear sampling helpers -----------------------------------------


def _fold_times(grid, ts):
    ts = np.asarray(ts, dtype=float)
    if grid.periodic:
        t0 = grid.nodes[0]
        ts = t0 + np.mod(ts - t0, grid.span)
    return ts


def _sample(grid, values, ts):
    """(u, u') of the interpolant at arbitrary times (periodic fold if set)."""
    full = grid.full_values(values)
    ts = _fold_times(grid, ts)
    cell = np.clip(np.searchsorted(grid.nodes, ts, side="right") - 1,
                   0, len(grid.nodes) - 2)
    h = grid.tables.h
    lam = (ts - grid.nodes[cell]) / h[cell]
    u = full[cell] * (1.0 - lam) + full[cell + 1] * lam
    du = (full[cell + 1] - full[cell]) / h[cell]
    return u, du


def _gauss_segments(breaks):
    """Gauss-5 points and weights on each [breaks[i], breaks[i+1]]."""
    a, b = breaks[:-1], breaks[1:]
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    tq = (mid[:, None] + half[:, None] * _G5X[None, :]).ravel()
    wq = (half[:, None] * _G5W[None, :]).ravel()
    return tq, wq


def _one_sided_slopes(grid, mu, full, node, side):
    """Quadrature-corrected one-sided derivative of the interpolant at a node.

    The weak residual of the half-hat supported on one neighbouring cell
    recovers the ODE flux there:  u'(t_j+) = slope_right + int a_mu u^3 ramp,
    u'(t_j-) = slope_left - int a_mu u^3 ramp (mirrored ramp).
    """
    tb = grid.tables
    nd = grid.ndof
    if side == "+":
        c = node if node < len(tb.h) else 0
        mask = tb.qcell == c
        ramp = 1.0 - tb.qlam[mask]
        slope = (full[c + 1] - full[c]) / tb.h[c]
        sign = 1.0
    else:
        c = node - 1 if node > 0 else len(tb.h) - 1
        mask = tb.qcell == c
        ramp = tb.qlam[mask]
        slope = (full[c + 1] - full[c]) / tb.h[c]
        sign = -1.0
    uq = full[c] * (1.0 - tb.qlam[mask]) + full[c + 1] * tb.qlam[mask]
    corr = float(np.sum(tb.qw[mask] * (tb.qap[mask] - mu * tb.qam[mask])
                        * uq ** 3 * ramp))
    return slope + sign * corr


# -- Nehari identities ----------------------------------------------------------


def nehari_identities(sol):
    """Residuals of the four window identities, each in its natural scale.

    (i)   weak residual over hats supported away from the coded intervals;
    (ii)  per coded interval: int u'^2 - int a_mu u^4 - [u' u] with corrected
          one-sided slopes, relative to the interval energy;
    (iii) whole-window int u'^2 = int a_mu u^4, relative to int u'^2;
    (iv)  cutoff identity int ((eta_i u)')^2 = int a_mu eta_i^2 u^4
          + int eta_i'^2 u^2, relative to the left side.
    """
    w = sol.window
    grid = sol.grid
    mu = sol.mu
    u = sol.u
    full = u.full()
    tb = grid.tables
    wspec = grid.w

    g = assembly.gradient(u, mu).values
    coded = [w.i_start + j for j, s in enumerate(w.symbols) if s == 1]
    keep = np.ones(grid.ndof, dtype=bool)
    for i in coded:
        a, b = grid.interval_nodes(i, "plus")
        for node in range(a - 1, b + 2):
            keep[grid.dof_of_node(node)] = False
    res_i = float(np.max(np.abs(g[keep]))) if np.any(keep) else 0.0

    res_ii = 0.0
    for i in coded:
        a, b = grid.interval_nodes(i, "plus")
        h = tb.h[a:b]
        slopes = np.diff(full[a:b + 1]) / h
        kin = float(np.sum(slopes * slopes * h))
        mask = (tb.qcell >= a) & (tb.qcell < b)
        uq = full[tb.qcell[mask]] * (1.0 - tb.qlam[mask]) + \
            full[tb.qcell[mask] + 1] * tb.qlam[mask]
        quart = float(np.sum(tb.qw[mask] * (tb.qap[mask] - mu * tb.qam[mask])
                             * uq ** 4))
        # outside-cell corrected fluxes make the discrete identity exact:
        # summing u_j g_j over the interval's nodes telescopes to exactly
        # these boundary terms, so a converged iterate leaves machine noise
        du_right = _one_sided_slopes(grid, mu, full, b, "+")
        du_left = _one_sided_slopes(grid, mu, full, a, "-")
        bdry = du_right * full[b] - du_left * full[a]
        res_ii = max(res_ii, abs(kin - quart - bdry) / max(kin, 1.0))

    kin_all = assembly.dirichlet_integral(tb, full)
    quart_all = assembly.quartic_integral(tb, mu, full)
    res_iii = abs(kin_all - quart_all) / max(kin_all, 1.0)

    res_iv = 0.0
    delta = 0.25 * (wspec.period - wspec.tau)
    for i in coded:
        lo = wspec.sigma(i) - delta
        hi = wspec.tau_i(i) + delta
        joints = [lo, wspec.sigma(i), wspec.tau_i(i), hi]
        # mesh nodes inside the support, including periodic preimages when
        # the support spills past the window edge (the interpolant has kinks
        # at every folded node image, and Gauss segments must not cross them)
        if grid.periodic:
            span = grid.span
            k0 = math.floor((lo - grid.nodes[-1]) / span)
            k1 = math.ceil((hi - grid.nodes[0]) / span)
            cand = np.concatenate(
                [grid.nodes[:-1] + k * span for k in range(k0, k1 + 1)])
        else:
            cand = grid.nodes
        inner = cand[(cand > lo) & (cand < hi)]
        knots = wspec.knots_in_span(lo, hi)
        breaks = np.unique(np.concatenate([joints, inner, knots]))
        tq, wq = _gauss_segments(breaks)
        uq, duq = _sample(grid, u.values, tq)
        eta = cutoff(wspec, i, tq)
        deta = cutoff_derivative(wspec, i, tq)
        amu = wspec.a_mu(mu, tq)
        lhs = float(np.sum(wq * (eta * duq + deta * uq) ** 2))
        rhs = float(np.sum(wq * (amu * eta ** 2 * uq ** 4
                                 + deta ** 2 * uq ** 2)))
        res_iv = max(res_iv, abs(lhs - rhs) / max(lhs, 1.0))

    return {"i": res_i, "ii": res_ii, "iii": res_iii, "iv": res_iv}


# -- decay of the small part -----------------------------------------------------


@dataclass
class DecayFit:
    mu_list: list
    samples: list                # per mu: max over shrunk negativity intervals
    end_data: list               # per mu: matching max junction datum
    bounds: list                 # per mu: C_delta (data/mu)^{1/3}
    slope: float                 # d log(max) / d log(mu)
    stderr: float
    intercept: float
    law_slope: float             # d log(max) / d log(data/mu); 1/3 if the
    law_stderr: float            # bound is tracked with a constant ratio
    c_delta: float
    delta: float

    def bound_satisfied(self):
        return all(s <= b for s, b in zip(self.samples, self.bounds))


def interior_maxima(sol, delta):
    """Per negativity interval: (max |u| on [tau_i+delta, sigma_{i+1}-delta],
    max |u| at the interval's endpoints)."""
    grid = sol.grid
    full = sol.u.full()
    w = grid.w
    out = []
    lo_i = sol.window.i_start
    for j, _ in enumerate(sol.window.symbols):
        i = lo_i + j
        a, b = grid.interval_nodes(i, "minus")
        t0, t1 = grid.nodes[a], grid.nodes[b]
        if t1 - t0 <= 2.0 * delta:
            raise WeightError("delta leaves no interior on a negativity "
                              "interval")
        mask = (grid.nodes >= t0 + delta) & (grid.nodes <= t1 - delta)
        out.append((float(np.max(np.abs(full[mask]))),
                    max(abs(float(full[a])), abs(float(full[b])))))
    return out


def decay_rate(w, symbols, mu_list, delta, opts=None):
    """Fit log(interior max) against log(mu) along a continuation sweep.

    The sweep must span at least two decades.  Each per-mu sample also gets
    the explicit bound C_delta (data/mu)^{1/3} with C_delta computed from the
    iterated edge integrals of a-.
    """
    mu_list = sorted(float(m) for m in mu_list)
    if mu_list[-1] < 100.0 * mu_list[0]:
        raise InsufficientSweep("mu sweep must span at least two decades")
    if not 0.0 < delta < 0.5 * (w.period - w.tau):
        raise WeightError("delta must sit inside the negativity interval")
    win = solver.make_window(symbols, periodic=True)
    d_left, d_right = w.edge_double_integrals(delta)
    c_delta = min(d_left, d_right) ** (-1.0 / 3.0)
    samples, data, bounds = [], [], []
    for mu, gf, report in solver.continuation_states(w, win, mu_list, opts):
        sol = solver.Solution(u=gf, mu=mu, window=win, report=report)
        rows = interior_maxima(sol, delta)
        m = max(r[0] for r in rows)
        d = max(r[1] for r in rows)
        samples.append(m)
        data.append(d)
        bounds.append(c_delta * (d / mu) ** (1.0 / 3.0))
    fit = linregress(np.log(mu_list), np.log(samples))
    law = linregress(np.log(np.asarray(data) / np.asarray(mu_list)),
                     np.log(samples))
    return DecayFit(mu_list=mu_list, samples=samples, end_data=data,
                    bounds=bounds, slope=float(fit.slope),
                    stderr=float(fit.stderr), intercept=float(fit.intercept),
                    law_slope=float(law.slope), law_stderr=float(law.stderr),
                    c_delta=c_delta, delta=delta)


# -- distance to the singular limit ---------------------------------------------


def limit_profile(sol, bump):
    """The singular-limit candidate on sol's grid: bump copies on coded
    intervals, zero elsewhere."""
    grid = sol.grid
    w = grid.w
    vals = np.zeros(grid.ndof)
    lo_i = sol.window.i_start
    for j, s in enumerate(sol.window.symbols):
        if s != 1:
            continue
        i = lo_i + j
        a, b = grid.interval_nodes(i, "plus")
        shift = w.period * i
        for node in range(a, b + 1):
            vals[grid.dof_of_node(node)] = float(
                bump.samples.eval(grid.nodes[node] - shift))
    return assembly.GridFunction(grid, vals)


@dataclass
class LimitDistance:
    sup: float
    holder: float
    lipschitz: float
    alpha: float
    per_interval: dict           # i -> W^{2,inf} distance on I_i^+


def _holder_seminorm(ts, d, alpha, min_sep, max_nodes=1600):
    n = len(ts)
    stride = max(1, int(math.ceil(n / max_nodes)))
    t = ts[::stride]
    v = d[::stride]
    dt = np.abs(t[:, None] - t[None, :])
    dv = np.abs(v[:, None] - v[None, :])
    mask = dt >= min_sep
    if not np.any(mask):
        return 0.0
    return float(np.max(dv[mask] / dt[mask] ** alpha))


def limit_distance(sol, bump, alpha=0.5):
    """(sup, C^{0,alpha} seminorm, Lipschitz seminorm, per-interval W^{2,inf})
    distances between the solution and its singular-limit candidate.

    Pair quotients use node pairs separated by at least the mesh width; the
    Lipschitz seminorm of the interpolant is the exact max cell slope.
    Second derivatives come from the equations the two functions satisfy:
    u'' = -a_mu u^3 and (limit)'' = -a+ (limit)^3 on positivity intervals.
    """
    grid = sol.grid
    w = grid.w
    limit = limit_profile(sol, bump)
    dvals = sol.u.values - limit.values
    dfull = grid.full_values(dvals)
    sup = float(np.max(np.abs(dvals)))

    h = grid.tables.h
    lip = float(np.max(np.abs(np.diff(dfull) / h)))
    holder = _holder_seminorm(grid.nodes, dfull, alpha, float(np.max(h)))

    ufull = sol.u.full()
    lfull = grid.full_values(limit.values)
    per = {}
    lo_i = sol.window.i_start
    for j, s in enumerate(sol.window.symbols):
        i = lo_i + j
        a, b = grid.interval_nodes(i, "plus")
        seg_h = h[a:b]
        d0 = float(np.max(np.abs(dfull[a:b + 1])))
        d1 = float(np.max(np.abs(np.diff(dfull[a:b + 1]) / seg_h)))
        # weight sampled a hair inside the interval so junction nodes read
        # the positivity side of the kink (one-sided second derivatives)
        eps = 1e-9 * w.period
        tw = np.clip(grid.nodes[a:b + 1], grid.nodes[a] + eps,
                     grid.nodes[b] - eps)
        ap = w.a_plus(tw)
        d2 = float(np.max(np.abs(ap * (ufull[a:b + 1] ** 3
                                       - lfull[a:b + 1] ** 3))))
        per[i] = max(d0, d1, d2)
    return LimitDistance(sup=sup, holder=holder, lipschitz=lip, alpha=alpha,
                         per_interval=per)


# -- minimal period ---------------------------------------------------------------


def minimal_period(sol, m=None):
    """Smallest divisor d of m with u(. + dT) = u within 1e-6 sup-relative."""
    grid = sol.grid
    if not grid.periodic:
        raise WeightError("minimal period needs a periodic grid")
    if grid.m <= 0:
        raise WeightError("minimal period needs uniform cells per subinterval")
    if m is None:
        m = grid.n_int
    if m != grid.n_int:
        raise WeightError(f"grid covers {grid.n_int} periods, not {m}")
    vals = sol.u.values
    tol = 1e-6 * max(float(np.max(np.abs(vals))), 1e-300)
    per_period = 2 * grid.m
    for d in range(1, m + 1):
        if m % d:
            continue
        if float(np.max(np.abs(np.roll(vals, -d * per_period) - vals))) <= tol:
            return d
    return m


# -- independent re-integration ----------------------------------------------------


@dataclass
class OracleCheck:
    per_interval: dict           # (i, '+'/'-') -> sup nodal gap
    gap: float                   # max over intervals
    rel: float                   # gap / sup|u|

    def ok(self, rtol=1e-6):
        return self.rel <= rtol


def oracle_residual(sol, rtol=1e-12):
    """Shoot every subinterval from the solution's own nodal boundary data.

    The oracle shares no quadrature or assembly code with the FEM path; the
    sup of the nodal gaps measures how well the computed branch solves the
    ODE, independently of the machinery that produced it.
    """
    grid = sol.grid
    full = sol.u.full()
    h = grid.tables.h
    w = grid.w
    sup = float(np.max(np.abs(full)))
    per = {}
    lo_i = sol.window.i_start
    for j, _ in enumerate(sol.window.symbols):
        i = lo_i + j
        for which, tag in (("plus", "+"), ("minus", "-")):
            a, b = grid.interval_nodes(i, which)
            s0 = (full[a + 1] - full[a]) / h[a]
            res = oracle.shoot_dirichlet(w, sol.mu, grid.nodes[a],
                                         grid.nodes[b], full[a], full[b],
                                         rtol=rtol, s0=s0)
            ts = grid.nodes[a:b + 1]
            uo = res.dense.eval_u(ts)
            per[(i, tag)] = float(np.max(np.abs(uo - full[a:b + 1])))
    gap = max(per.values())
    return OracleCheck(per_interval=per, gap=gap,
                       rel=gap / sup if sup > 0 else 0.0)


# -- sweeps ------------------------------------------------------------------------


@dataclass
class AsymptoticReport:
    symbols: tuple
    mu_list: list
    decay_samples: list          # per mu interior maxima (max over intervals)
    p1: list                     # per mu: max_i ||u||_inf(I_i^-) + energy
    p2: list                     # per mu: max W^{2,inf} distance, coded i
    p3: list                     # per mu: max W^{2,inf} norm, uncoded i
    sup_distances: list
    holder_distances: list
    lipschitz_distances: list
    sup_slopes: list             # per mu: ||u'||_inf over the window
    min_values: list             # per mu: min of u (positivity record)
    fitted_slopes: dict          # name -> (slope, half_width)
    kendall: dict                # name -> tau against mu
    alpha: float
    delta: float

    def to_dict(self):
        return {
            "symbols": list(self.symbols),
            "mu_list": list(self.mu_list),
            "decay_samples": list(self.decay_samples),
            "p1": list(self.p1), "p2": list(self.p2), "p3": list(self.p3),
            "sup_distances": list(self.sup_distances),
            "holder_distances": list(self.holder_distances),
            "lipschitz_distances": list(self.lipschitz_distances),
            "sup_slopes": list(self.sup_slopes),
            "min_values": list(self.min_values),
            "fitted_slopes": {k: list(v) for k, v in self.fitted_slopes.items()},
            "kendall": dict(self.kendall),
            "alpha": self.alpha, "delta": self.delta,
        }


def _fit(mu_list, values):
    vals = np.asarray(values, dtype=float)
    if np.any(vals <= 0.0):
        return float("nan"), float("nan")
    fit = linregress(np.log(mu_list), np.log(vals))
    return float(fit.slope), 2.0 * float(fit.stderr)


def run_sweep(w, symbols, mu_list, delta=None, alpha=0.5, opts=None,
              bump=None):
    """Continuation sweep with every per-mu audit quantity recorded."""
    mu_list = sorted(float(m) for m in mu_list)
    if delta is None:
        delta = 0.2 * (w.period - w.tau)
    if bump is None:
        from .localfield import LevelEvaluator
        bump = LevelEvaluator(w).ground_bump()
    win = solver.make_window(symbols, periodic=True)
    coded = {win.i_start + j for j, s in enumerate(win.symbols) if s == 1}

    rows = {k: [] for k in ("decay", "p1", "p2", "p3", "sup", "holder",
                            "lip", "dsup", "minv")}
    for mu, gf, report in solver.continuation_states(w, win, mu_list, opts):
        sol = solver.Solution(u=gf, mu=mu, window=win, report=report)
        full = gf.full()
        h = gf.grid.tables.h
        rows["decay"].append(max(r[0] for r in interior_maxima(sol, delta)))
        p1 = 0.0
        for j, _ in enumerate(win.symbols):
            i = win.i_start + j
            a, b = gf.grid.interval_nodes(i, "minus")
            seg_h = h[a:b]
            slopes = np.diff(full[a:b + 1]) / seg_h
            p1 = max(p1, float(np.max(np.abs(full[a:b + 1])))
                     + float(np.sum(slopes * slopes * seg_h)))
        rows["p1"].append(p1)
        ld = limit_distance(sol, bump, alpha=alpha)
        per = ld.per_interval
        rows["p2"].append(max(per[i] for i in per if i in coded))
        p3 = [per[i] for i in per if i not in coded]
        rows["p3"].append(max(p3) if p3 else 0.0)
        rows["sup"].append(ld.sup)
        rows["holder"].append(ld.holder)
        rows["lip"].append(ld.lipschitz)
        rows["dsup"].append(float(np.max(np.abs(np.diff(full) / h))))
        rows["minv"].append(float(np.min(gf.values)))

    fits = {"decay": _fit(mu_list, rows["decay"]),
            "p1": _fit(mu_list, rows["p1"]),
            "sup": _fit(mu_list, rows["sup"]),
            "holder": _fit(mu_list, rows["holder"])}
    kend = {}
    for name in ("p1", "p2", "decay", "sup", "holder"):
        res = kendalltau(mu_list, rows[name])
        tau = getattr(res, "statistic", getattr(res, "correlation", None))
        kend[name] = float(tau) if tau is not None else float("nan")
    return AsymptoticReport(
        symbols=tuple(win.symbols), mu_list=mu_list,
        decay_samples=rows["decay"], p1=rows["p1"], p2=rows["p2"],
        p3=rows["p3"], sup_distances=rows["sup"],
        holder_distances=rows["holder"], lipschitz_distances=rows["lip"],
        sup_slopes=rows["dsup"], min_values=rows["minv"],
        fitted_slopes=fits, kendall=kend, alpha=alpha, delta=delta)


def sign_changes(values, tol=0.0):
    """Number of strict sign alternations in a nodal value array."""
    v = np.asarray(values, dtype=float)
    s = np.sign(v[np.abs(v) > tol])
    if len(s) == 0:
        return 0
    return int(np.sum(np.abs(np.diff(s)) > 1))
