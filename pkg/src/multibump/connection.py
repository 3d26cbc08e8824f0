"""Dirichlet blocks between coded bumps: the auxiliary minimization.

A block [tau_i, sigma_{i+l+1}] strings together l "small" positivity
intervals framed by l+1 negativity intervals.  Boundary amplitudes (x, y) are
prescribed at the block ends and the action is minimized over functions that
respect the amplitude cap |u(sigma_j)| <= K and the energy cap
int u'^2 <= r^2 on every interior positivity interval.  For mu large the caps
are slack at the minimizer, the solution decays like a boundary layer away
from the block ends, and the linearization carries the sensitivity pair
(v, z) whose one-sided end slopes drive the gluing estimates.

The block solver reuses the finite-element machinery on a clamped sub-grid;
boundary conditions are imposed by node elimination.  Constraints are handled
by an active-set retraction during descent, never by penalties: the minimizer
is expected interior, and a cap still active at convergence is reported as
InteriorityFailure (the operational signal that mu sits below the working
threshold).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded, solveh_banded

from . import assembly
from .assembly import GridFunction
from .errors import (InteriorityFailure, NonConvergence, SingularLinearization,
                     WeightError)

_ARMIJO = 1e-4
_UNDAMPED_BELOW = 1e-4
_CAP_SLACK = 1e-9          # relative slack kept free of each cap by retraction


@dataclass(frozen=True)
class ConnectionProblem:
    """Block data: weight, interval range, boundary amplitudes, caps."""
    w: object
    mu: float
    x: float
    y: float
    i: int = -1
    l: int = 1
    K: float = 1.0
    r: float = 1.0

    @property
    def t_lo(self):
        return self.w.tau_i(self.i)

    @property
    def t_hi(self):
        return self.w.sigma(self.i + self.l + 1)

    @property
    def block(self):
        return self.t_lo, self.t_hi

    @property
    def length(self):
        return self.t_hi - self.t_lo

    def plus_indices(self):
        """Indices j of the interior positivity intervals I_j^+."""
        return range(self.i + 1, self.i + self.l + 1)

    def minus_indices(self):
        """Indices j of the negativity intervals I_j^- inside the block."""
        return range(self.i, self.i + self.l + 1)


def make_connection_problem(w, mu, x, y, i=-1, l=1, K=None, r=None,
                            k_bound=None, consts=None):
    """Validated problem; caps default from ``consts`` or are recomputed.

    When neither K nor consts is given, K falls back to twice the amplitude
    of the limit bump (a local ground-state solve pays for the default).
    """
    if consts is not None:
        K = consts.K if K is None else K
        r = consts.r if r is None else r
    if r is None:
        from .weight import compute_r
        r = compute_r(w)
    if K is None:
        from .localfield import LevelEvaluator
        K = 2.0 * LevelEvaluator(w).ground_bump().samples.sup_norm()
    if mu <= 0.0:
        raise WeightError("mu must be positive")
    if l < 0:
        raise WeightError("l must be >= 0")
    if k_bound is not None and l > k_bound:
        raise WeightError(f"l={l} exceeds the zero-run bound k={k_bound}")
    if abs(x) > K or abs(y) > K:
        raise WeightError(f"|x|, |y| must not exceed K = {K:g}")
    return ConnectionProblem(w=w, mu=mu, x=float(x), y=float(y), i=int(i),
                             l=int(l), K=float(K), r=float(r))


# -- meshes --------------------------------------------------------------------


def connection_grid(p, cells=None):
    """Clamped mesh on the block, cosine-graded within each subinterval.

    Cosine grading clusters nodes like 1/n^2 at subinterval ends, which is
    where the solution develops decay layers of width ~ (mu/2)^{-1/2}/|data|.
    ``cells`` sets the minimum cell count per subinterval; the count grows
    automatically until the first cell resolves the layer.
    """
    base = 160 if cells is None else int(cells)
    if base < 8:
        raise WeightError("need at least 8 cells per subinterval")
    amp = max(abs(p.x), abs(p.y))
    lam = math.sqrt(0.5 * p.mu) * amp
    w = p.w
    bounds = [p.t_lo]
    for j in p.plus_indices():
        bounds.append(w.sigma(j))
        bounds.append(w.tau_i(j))
    bounds.append(p.t_hi)

    parts = []
    for a, b in zip(bounds[:-1], bounds[1:]):
        L = b - a
        n = base
        if lam > 0.0:
            target = min(L / 16.0, 1.0 / (10.0 * lam))
            n = max(base, int(math.ceil(0.5 * math.pi * math.sqrt(L / target))))
        n = min(n, 6000)
        k = np.arange(n, dtype=float)
        parts.append(a + 0.5 * L * (1.0 - np.cos(math.pi * k / n)))
    parts.append(np.array([p.t_hi]))
    return assembly.segment_grid(w, np.concatenate(parts))


def decay_profile(p, ts):
    """Initial guess: superposed algebraic decay tails from both block ends."""
    ts = np.asarray(ts, dtype=float)
    out = np.zeros_like(ts)
    root = math.sqrt(0.5 * p.mu)
    if p.x != 0.0:
        out += p.x / (1.0 + root * abs(p.x) * (ts - p.t_lo))
    if p.y != 0.0:
        out += p.y / (1.0 + root * abs(p.y) * (p.t_hi - ts))
    return out


# -- constraint retraction -----------------------------------------------------


def _plus_ranges(p, grid):
    return [grid.interval_nodes(j, "plus") for j in p.plus_indices()]


def _retract(p, grid, full):
    """Pull ``full`` back into the admissible set (in place).

    Amplitude cap: clamp the value at each interior sigma_j.  Energy cap: the
    affine part between the interval's endpoint values is energy-minimal, so
    the deviation from it is scaled down until the interval energy fits.
    Returns the number of active-cap touches.
    """
    K_eff = p.K * (1.0 - _CAP_SLACK)
    r2_eff = p.r ** 2 * (1.0 - _CAP_SLACK)
    h = grid.tables.h
    hits = 0
    for a, b in _plus_ranges(p, grid):
        if abs(full[a]) > K_eff:
            full[a] = math.copysign(K_eff, full[a])
            hits += 1
        seg_h = h[a:b]
        slopes = np.diff(full[a:b + 1]) / seg_h
        energy = float(np.sum(slopes * slopes * seg_h))
        if energy <= r2_eff:
            continue
        hits += 1
        length = float(grid.nodes[b] - grid.nodes[a])
        gap = full[b] - full[a]
        e_aff = gap * gap / length
        if e_aff >= r2_eff:
            # even the affine interpolant violates: pull the right endpoint in
            gap = math.copysign(math.sqrt(0.5 * r2_eff * length), gap)
            full[b] = full[a] + gap
            e_aff = gap * gap / length
        affine = full[a] + gap * (grid.nodes[a:b + 1] - grid.nodes[a]) / length
        dev = full[a:b + 1] - affine
        dev_h = np.diff(dev) / seg_h
        e_dev = float(np.sum(dev_h * dev_h * seg_h))
        if e_dev > 0.0:
            theta = math.sqrt(max(r2_eff - e_aff, 0.0) / e_dev)
            full[a:b + 1] = affine + theta * dev
    return hits


def cap_margins(p, grid, full):
    """Slack of each cap: (K - |u(sigma_j)|, r^2 - int u'^2) per interior I_j^+."""
    h = grid.tables.h
    out = []
    for a, b in _plus_ranges(p, grid):
        seg_h = h[a:b]
        slopes = np.diff(full[a:b + 1]) / seg_h
        energy = float(np.sum(slopes * slopes * seg_h))
        out.append((p.K - abs(float(full[a])), p.r ** 2 - energy))
    return out


def _caps_clear(p, grid, full):
    slack_K = _CAP_SLACK * p.K * 2.0
    slack_r = _CAP_SLACK * p.r ** 2 * 2.0
    return all(mK > slack_K and mr > slack_r
               for mK, mr in cap_margins(p, grid, full))


def _caps_marginal(p, grid, full):
    """Within a tenth of each cap: a pinned iterate, not a basin hop."""
    return all(mK > -0.1 * p.K and mr > -0.1 * p.r ** 2
               for mK, mr in cap_margins(p, grid, full))


def _flatten_pinned(p, grid, full):
    """Replace energy-pinned I_j^+ segments by their affine interpolant.

    A clamped oscillation can trap the projected descent in a limit cycle:
    every step re-violates the energy cap and the retraction scales it right
    back.  The affine profile is the energy-minimal escape from that cycle.
    """
    slack_r = _CAP_SLACK * p.r ** 2 * 2.0
    for (a, b), (_, mr) in zip(_plus_ranges(p, grid),
                               cap_margins(p, grid, full)):
        if mr <= slack_r:
            t = grid.nodes[a:b + 1]
            lam = (t - t[0]) / (t[-1] - t[0])
            full[a:b + 1] = full[a] * (1.0 - lam) + full[b] * lam


def _check_interiority(p, grid, full):
    """Raise InteriorityFailure when any cap on an interior I_j^+ is active."""
    slack_K = _CAP_SLACK * p.K * 2.0
    slack_r = _CAP_SLACK * p.r ** 2 * 2.0
    for j, (mK, mr) in zip(p.plus_indices(), cap_margins(p, grid, full)):
        if mK <= slack_K or mr <= slack_r:
            raise InteriorityFailure(
                f"cap active on I_{j}^+ after polish (margins K: {mK:.3e}, "
                f"r^2: {mr:.3e}); mu = {p.mu:g} is below the working threshold")


# -- the block solver ----------------------------------------------------------


def _stiffness_precond(grid):
    """Cholesky-banded factorizable interior stiffness (upper form)."""
    h = grid.tables.h
    n = len(grid.nodes) - 2
    ab = np.zeros((2, n))
    ab[1] = 1.0 / h[:-1] + 1.0 / h[1:]
    ab[0, 1:] = -1.0 / h[1:-1]
    return ab


def _interior_bands(tb, mu, full):
    """Tridiagonal (1,1) banded form of the interior residual Jacobian."""
    dLL, dLR, dRR = assembly.jacobian_bands(tb, mu, full)
    n = len(full) - 2
    ab = np.zeros((3, n))
    ab[1] = dRR[:-1] + dLL[1:]
    ab[0, 1:] = dLR[1:-1]
    ab[2, :-1] = dLR[1:-1]
    return ab


def _block_action(tb, mu, full):
    return 0.5 * assembly.dirichlet_integral(tb, full) - \
        0.25 * assembly.quartic_integral(tb, mu, full)


def _descent(p, grid, full, max_iter, rtol):
    """Stiffness-preconditioned projected descent with Armijo backtracking."""
    tb = grid.tables
    ab = _stiffness_precond(grid)
    J = _block_action(tb, p.mu, full)
    r_int = assembly.residual_full(tb, p.mu, full)[1:-1]
    r0 = max(float(np.max(np.abs(r_int))), 1e-30)
    hits = 0
    done = 0
    while done < max_iter:
        rn = float(np.max(np.abs(r_int)))
        if rn <= rtol * r0:
            break
        d = solveh_banded(ab, r_int)
        slope = float(r_int @ d)
        alpha = 1.0
        stalled = False
        while True:
            trial = full.copy()
            trial[1:-1] -= alpha * d
            hits += _retract(p, grid, trial)
            Jt = _block_action(tb, p.mu, trial)
            if Jt <= J - _ARMIJO * alpha * slope:
                full, J = trial, Jt
                break
            alpha *= 0.5
            if alpha < 1e-10:
                stalled = True               # hand over to Newton
                break
        if stalled:
            break
        done += 1
        r_int = assembly.residual_full(tb, p.mu, full)[1:-1]
    return full, done, hits


def _newton_interior(p, grid, full, tol, max_iter):
    """Damped Newton on the unconstrained Euler-Lagrange interior system."""
    tb = grid.tables
    r = assembly.residual_full(tb, p.mu, full)[1:-1]
    floor = 200.0 * np.finfo(float).eps * max(1.0, float(np.max(np.abs(full)))) \
        * float(np.max(1.0 / tb.h))
    tol = max(tol * max(1.0, abs(p.x), abs(p.y)), floor)
    for it in range(1, max_iter + 1):
        rn = float(np.max(np.abs(r)))
        if rn <= tol:
            return full, it - 1
        ab = _interior_bands(tb, p.mu, full)
        try:
            step = solve_banded((1, 1), ab, r)
        except np.linalg.LinAlgError as e:
            raise NonConvergence(f"singular block Jacobian: {e}") from None
        if not np.all(np.isfinite(step)):
            raise NonConvergence("block Jacobian solve produced non-finite step")
        phi0 = float(r @ r)
        alpha = 1.0
        while True:
            trial = full.copy()
            trial[1:-1] -= alpha * step
            rt = assembly.residual_full(tb, p.mu, trial)[1:-1]
            if float(rt @ rt) <= (1.0 - 2.0 * _ARMIJO * alpha) * phi0 \
                    or rn < _UNDAMPED_BELOW:
                full, r = trial, rt
                break
            alpha *= 0.5
            if alpha < 1e-8:
                raise NonConvergence(
                    f"block line search failed at residual {rn:.3e}")
    raise NonConvergence(f"block Newton: no convergence in {max_iter} "
                         f"iterations (residual "
                         f"{float(np.max(np.abs(r))):.3e})")


@dataclass(eq=False)
class ConnectionSolution:
    """Converged block minimizer with its linearization data."""
    problem: ConnectionProblem
    u: GridFunction
    boundary_slopes: tuple
    v: GridFunction = None
    z: GridFunction = None
    descent_iters: int = 0
    newton_iters: int = 0
    cap_touches: int = 0
    fd_check: dict = None

    @property
    def grid(self):
        return self.u.grid

    @property
    def sensitivities(self):
        if self.v is None:
            compute_sensitivities(self)
        return self.v, self.z


def solve_connection(p, cells=None, init=None, max_descent=200,
                     newton_tol=1e-10, max_newton=60, with_sensitivities=True):
    """Minimize the block action over the admissible class at data (x, y).

    Projected descent under the caps finds the basin; unconstrained Newton on
    the Euler-Lagrange system polishes.  A cap active (or violated) after the
    polish raises InteriorityFailure.
    """
    grid = connection_grid(p, cells)
    if init is None:
        full = decay_profile(p, grid.nodes)
    elif isinstance(init, GridFunction):
        full = np.asarray(init.eval(grid.nodes), dtype=float)
    else:
        full = np.asarray(init, dtype=float).copy()
        if len(full) != len(grid.nodes):
            raise WeightError("init must carry one value per mesh node")
    full[0], full[-1] = p.x, p.y
    _retract(p, grid, full)

    full, n_desc, hits = _descent(p, grid, full, max_descent, rtol=1e-4)
    n_newt = 0
    for attempt in range(3):
        final = attempt == 2
        try:
            cand, n_newt = _newton_interior(p, grid, full, newton_tol,
                                            max_newton)
        except NonConvergence:
            if final:
                # a pinned minimizer has no interior stationary point to
                # polish; report the active cap instead of the symptom
                _check_interiority(p, grid, full)
                raise
            cand = None
            _flatten_pinned(p, grid, full)
        if cand is not None:
            if _caps_clear(p, grid, cand):
                full = cand
                break
            if _caps_marginal(p, grid, cand):
                # the stationary point itself sits on a cap: mu is too small
                _check_interiority(p, grid, cand)
            if final:
                # a pinned descent output means the constrained minimizer
                # lives on the caps no matter where the polish escaped to
                _check_interiority(p, grid, full)
                raise NonConvergence("polish keeps leaving the admissible set")
            # the unconstrained polish jumped basins; pull the iterate back
            # under the caps and relax again
            full = cand
            full[0], full[-1] = p.x, p.y
            _retract(p, grid, full)
        full, n2, h2 = _descent(p, grid, full, 4 * max_descent, rtol=1e-7)
        n_desc += n2
        hits += h2

    r_full = assembly.residual_full(grid.tables, p.mu, full)
    sol = ConnectionSolution(
        problem=p,
        u=GridFunction(grid, full),
        boundary_slopes=(-float(r_full[0]), float(r_full[-1])),
        descent_iters=n_desc, newton_iters=n_newt, cap_touches=hits)
    if with_sensitivities:
        compute_sensitivities(sol)
    return sol


# -- sensitivities and derivatives ---------------------------------------------


def _linearized_solve(sol, left_val, right_val):
    """Solve v'' + 3 a_mu u^2 v = 0 weakly with the given end values."""
    p = sol.problem
    grid = sol.grid
    full = sol.u.values
    ab = _interior_bands(grid.tables, p.mu, full)
    dLL, dLR, dRR = assembly.jacobian_bands(grid.tables, p.mu, full)
    n = len(full)
    rhs = np.zeros(n - 2)
    rhs[0] -= dLR[0] * left_val
    rhs[-1] -= dLR[-1] * right_val
    try:
        interior = solve_banded((1, 1), ab, rhs)
    except np.linalg.LinAlgError as e:
        raise SingularLinearization(str(e)) from None
    if not np.all(np.isfinite(interior)):
        raise SingularLinearization("linearized block solve is non-finite")
    vals = np.concatenate([[left_val], interior, [right_val]])
    # defect check: a nearly singular tridiagonal solve passes solve_banded
    # but leaves a large weak residual on the interior rows
    res = assembly.hessian_full(grid.tables, p.mu, full, vals)[1:-1]
    scale = float(np.max(np.abs(vals))) * float(np.max(1.0 / grid.tables.h))
    if float(np.max(np.abs(res))) > 1e-6 * max(scale, 1.0):
        raise SingularLinearization(
            "linearized block operator is numerically singular")
    return GridFunction(grid, vals)


def compute_sensitivities(sol):
    """The pair v (left data 1, right 0) and z (left 0, right 1) at sol.u."""
    sol.v = _linearized_solve(sol, 1.0, 0.0)
    sol.z = _linearized_solve(sol, 0.0, 1.0)
    return sol.v, sol.z


def sensitivities(sol):
    return sol.sensitivities


def sensitivity_end_slopes(sol, which="v"):
    """One-sided slopes of v or z at the block ends, quadrature-corrected.

    The linearized weak residual against the boundary hats equals the
    one-sided flux, exactly as for the nonlinear solution itself.
    """
    g = {"v": lambda: sol.sensitivities[0],
         "z": lambda: sol.sensitivities[1]}[which]()
    r = assembly.hessian_full(sol.grid.tables, sol.problem.mu,
                              sol.u.values, g.values)
    return -float(r[0]), float(r[-1])


def energy_derivatives(sol, fd_step=None, cells=None):
    """(dJ/dx, dJ/dy) = (-u'(t_lo+), +u'(t_hi-)).

    With ``fd_step`` the pair is cross-checked against central finite
    differences of the block action in (x, y); relative errors land in
    ``sol.fd_check``.
    """
    dlo, dhi = sol.boundary_slopes
    pair = (-dlo, dhi)
    if fd_step is not None:
        p = sol.problem
        h = fd_step
        vals = {}
        for name, (dx, dy) in (("x+", (h, 0.0)), ("x-", (-h, 0.0)),
                               ("y+", (0.0, h)), ("y-", (0.0, -h))):
            q = ConnectionProblem(w=p.w, mu=p.mu, x=p.x + dx, y=p.y + dy,
                                  i=p.i, l=p.l, K=p.K, r=p.r)
            s = solve_connection(q, cells=cells, init=sol.u,
                                 with_sensitivities=False)
            vals[name] = block_action(s)
        fd = ((vals["x+"] - vals["x-"]) / (2.0 * h),
              (vals["y+"] - vals["y-"]) / (2.0 * h))
        scale = max(abs(pair[0]), abs(pair[1]), 1e-30)
        sol.fd_check = {"step": h,
                        "fd": fd,
                        "rel_err": (abs(fd[0] - pair[0]) / scale,
                                    abs(fd[1] - pair[1]) / scale)}
    return pair


def block_action(sol):
    """Action of the converged block solution (clamped grid, so no folding)."""
    return _block_action(sol.grid.tables, sol.problem.mu, sol.u.full())


# -- probes and recorded inequalities -------------------------------------------


def uniqueness_probe(p, n_starts, cells=None, rng=None, tol=1e-6):
    """Re-solve from randomized admissible starts; True iff all agree.

    Starts are smooth noise (coarse normal samples, linearly interpolated)
    retracted into the admissible set, always with the prescribed endpoints.
    """
    rng = np.random.default_rng(rng)
    base = solve_connection(p, cells=cells, with_sensitivities=False)
    grid = base.grid
    # noise at the scale of the boundary data: starts stay inside the basin
    # of the interior minimizer instead of probing cap-pinned boundary minima
    scale = max(abs(p.x), abs(p.y), 0.1 * p.K)
    ref = max(1.0, base.u.sup_norm())
    for _ in range(int(n_starts)):
        coarse_n = 12 + 4 * p.l
        anchors = np.linspace(grid.nodes[0], grid.nodes[-1], coarse_n)
        noise = rng.normal(0.0, scale, coarse_n)
        vals = np.interp(grid.nodes, anchors, noise)
        vals[0], vals[-1] = p.x, p.y
        _retract(p, grid, vals)
        try:
            s = solve_connection(p, cells=cells, init=vals,
                                 with_sensitivities=False)
        except (NonConvergence, InteriorityFailure):
            return False
        if float(np.max(np.abs(s.u.values - base.u.values))) > tol * ref:
            return False
    return True


def interior_smallness(sol):
    """(sup |u|, sup |u'|) over the interior positivity intervals."""
    p = sol.problem
    grid = sol.grid
    full = sol.u.values
    h = grid.tables.h
    su = sdu = 0.0
    for a, b in _plus_ranges(p, grid):
        su = max(su, float(np.max(np.abs(full[a:b + 1]))))
        sdu = max(sdu, float(np.max(np.abs(np.diff(full[a:b + 1]) / h[a:b]))))
    return su, sdu


def negativity_cap_report(sol):
    """Per negativity interval: (sup |u| inside, max |u| at its endpoints).

    Convexity of |u| where the weight is negative forces the first column to
    stay at or below the second.
    """
    p = sol.problem
    grid = sol.grid
    full = sol.u.values
    out = []
    for j in p.minus_indices():
        lo, hi = grid.interval_nodes(j, "minus")
        seg = full[lo:hi + 1]
        out.append((float(np.max(np.abs(seg))),
                    max(abs(float(seg[0])), abs(float(seg[-1])))))
    return out


def far_slope_bound(sol):
    """(|v'(t_hi-)|, 2/length): the far-end sensitivity slope and its bound."""
    _, dv_hi = sensitivity_end_slopes(sol, "v")
    return abs(dv_hi), 2.0 / sol.problem.length


def near_slope_bound(sol):
    """(|x v'(t_lo+)|, 2K/length + 5 sup|u'|): checked margin, not sharpness."""
    dv_lo, _ = sensitivity_end_slopes(sol, "v")
    p = sol.problem
    h = sol.grid.tables.h
    sup_du = float(np.max(np.abs(np.diff(sol.u.values) / h)))
    return abs(p.x * dv_lo), 2.0 * p.K / p.length + 5.0 * sup_du


def combined_end_slopes(sol):
    """One-sided slopes of v + z at the block ends: (left, right)."""
    dv = sensitivity_end_slopes(sol, "v")
    dz = sensitivity_end_slopes(sol, "z")
    return dv[0] + dz[0], dv[1] + dz[1]


def decay_interior_bound(sol, delta):
    """Per negativity interval: (sup |u| at distance delta from its ends,
    C_delta * (max(|x|,|y|)/mu)^{1/3}), with C_delta from the edge mass of a-.
    """
    p = sol.problem
    d_left, d_right = p.w.edge_double_integrals(delta)
    c_delta = min(d_left, d_right) ** (-1.0 / 3.0)
    bound = c_delta * (max(abs(p.x), abs(p.y)) / p.mu) ** (1.0 / 3.0)
    grid = sol.grid
    full = sol.u.values
    out = []
    for j in p.minus_indices():
        lo, hi = grid.interval_nodes(j, "minus")
        t0, t1 = grid.nodes[lo], grid.nodes[hi]
        if t1 - t0 <= 2.0 * delta:
            raise WeightError("delta leaves no interior on a negativity "
                              "interval")
        mask = (grid.nodes >= t0 + delta) & (grid.nodes <= t1 - delta)
        out.append((float(np.max(np.abs(full[mask]))), bound))
    return out


def slope_matching_mu(w, rho, x=None, K=None, r=None, i=-1, l=1, cells=None,
                      mu0=None, tol=1e-3, max_iter=40):
    """Secant search for mu making the block end slopes equal -/+ rho.

    Symmetric data x = y turns the two-sided condition into the scalar
    equation |u'(t_lo+)| = rho; the decay profile gives the starting scale
    mu ~ 2 (rho / x^2)^2.  Returns (mu, ConnectionSolution).
    """
    if K is None or r is None:
        probe = make_connection_problem(w, 1.0, 0.0, 0.0, i=i, l=l, K=K, r=r)
        K = probe.K if K is None else K
        r = probe.r if r is None else r
    if x is None:
        x = 0.5 * K
    if mu0 is None:
        mu0 = 2.0 * (rho / x ** 2) ** 2

    def end_slope(mu):
        q = ConnectionProblem(w=w, mu=mu, x=x, y=x, i=i, l=l, K=K, r=r)
        s = solve_connection(q, cells=cells, with_sensitivities=False)
        return abs(s.boundary_slopes[0]), s

    f0, _ = end_slope(mu0)
    mu1 = mu0 * (rho / f0) ** 2 if f0 > 0 else 2.0 * mu0
    f1, _ = end_slope(mu1)
    a, fa, b, fb = mu0, f0 - rho, mu1, f1 - rho
    for _ in range(max_iter):
        if abs(fb) <= tol * rho:
            return b, solve_connection(
                ConnectionProblem(w=w, mu=b, x=x, y=x, i=i, l=l, K=K, r=r),
                cells=cells)
        if fb == fa:
            raise NonConvergence("secant stalled while matching slopes")
        c = b - fb * (b - a) / (fb - fa)
        if c <= 0.0:
            c = 0.5 * b
        a, fa = b, fb
        fc, _ = end_slope(c)
        b, fb = c, fc - rho
    raise NonConvergence(f"slope matching missed rho = {rho:g}; last "
                         f"mismatch {fb:.3e} at mu = {b:.4g}")
