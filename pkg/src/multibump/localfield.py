"""Local Nehari problems on a single positivity interval.

Everything here lives on [0, tau] (or a subinterval of it) with Dirichlet
boundary conditions and sees only the positive part of the weight: the ground
level c and its one-signed bump, the pinned-zero level c_zeta, the principal
eigenvalue of the weighted Dirichlet problem, and the scaling projection onto
the constraint set int u'^2 = int a+ u^4.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import assembly
from .errors import DegenerateDirection, NewtonFailure, WeightError

_ARMIJO = 1e-4
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(eq=False)
class BumpProfile:
    """A one-signed Dirichlet solution of u'' + a+ u^3 = 0 at minimal level."""
    samples: assembly.GridFunction
    level: float
    dleft: float
    dright: float
    sign: str = "+"

    @property
    def t(self):
        return self.samples.grid.nodes

    @property
    def u(self):
        return self.samples.values


@dataclass(eq=False)
class LocalLevels:
    c: float
    c_zeta: float
    zeta: float
    lambda1: float
    eigenfunction: assembly.GridFunction


@dataclass(eq=False)
class PinnedDetail:
    c_zeta: float
    tbar: float
    interior: bool     # pinned zero strictly inside (zeta, tau - zeta)
    split: bool        # minimizer carries a bump on both sides of the zero


def default_cells(w, length=None):
    """200 cells per unit length, at least 200 on the full interval."""
    if length is None:
        length = w.tau
    return max(200, int(math.ceil(200.0 * length)))


# -- clamped Newton machinery -------------------------------------------------


def _tridiag_parts(dLL, dLR, dRR):
    """Interior tridiagonal (diag, off) from cellwise 2x2 blocks."""
    diag = dRR[:-1] + dLL[1:]
    off = dLR[1:-1]
    return diag, off


def _solve_tridiag(diag, off, rhs):
    n = len(diag)
    ab = np.zeros((3, n))
    ab[0, 1:] = off
    ab[1, :] = diag
    ab[2, :-1] = off
    return scipy.linalg.solve_banded((1, 1), ab, rhs)


def _stiff_solve(tb, rhs_int):
    inv = 1.0 / tb.h
    diag = inv[:-1] + inv[1:]
    off = -inv[1:-1]
    ab = np.zeros((2, len(diag)))
    ab[0, 1:] = off
    ab[1, :] = diag
    return scipy.linalg.solveh_banded(ab, rhs_int)


def _newton_clamped(tb, u_full, mu, tol, max_iter=60):
    """Damped Newton for the Dirichlet Euler-Lagrange system; in-place on a copy."""
    u = u_full.copy()
    r = assembly.residual_full(tb, mu, u)[1:-1]
    for _ in range(max_iter):
        rn = float(np.max(np.abs(r)))
        if rn <= tol:
            return u, rn
        dLL, dLR, dRR = assembly.jacobian_bands(tb, mu, u)
        diag, off = _tridiag_parts(dLL, dLR, dRR)
        step = _solve_tridiag(diag, off, r)
        phi0 = float(r @ r)
        alpha = 1.0
        while alpha > 1e-10:
            trial = u.copy()
            trial[1:-1] -= alpha * step
            rt = assembly.residual_full(tb, mu, trial)[1:-1]
            if float(rt @ rt) <= (1.0 - 2.0 * _ARMIJO * alpha) * phi0 \
                    or rn < 1e-4:
                u, r = trial, rt
                break
            alpha *= 0.5
        else:
            break
    rn = float(np.max(np.abs(r)))
    if rn > tol:
        raise NewtonFailure(f"clamped Newton stalled at residual {rn:.3e}")
    return u, rn


def _ground_on(w, t0, t1, n, tol=1e-10, max_descent=400):
    """Ground bump of the Dirichlet problem on [t0, t1] with weight a+.

    Returns (grid, u_full, level, dleft, dright); level is inf when a+ has no
    mass on the subinterval.
    """
    grid = assembly.segment_grid(w, np.linspace(t0, t1, n + 1))
    tb = grid.tables
    x = grid.nodes
    u = np.sin(math.pi * (x - t0) / (t1 - t0))

    def parts(v):
        return assembly.dirichlet_integral(tb, v), \
            assembly.quartic_integral(tb, 0.0, v)

    kin, quart = parts(u)
    if quart <= 1e-14 * kin * float(np.max(u * u)):
        return grid, np.zeros_like(u), float("inf"), 0.0, 0.0

    # minimize the scale-invariant quotient (int u'^2)^2 / int a+ u^4 by
    # stiffness-preconditioned descent with Armijo backtracking
    fval = kin * kin / quart
    for _ in range(max_descent):
        grad_full = (4.0 * kin / quart) * assembly.stiffness_full(tb, u) \
            - (4.0 * fval / quart) * assembly.cubic_full(tb, 0.0, u)
        g = grad_full[1:-1]
        d = _stiff_solve(tb, g)
        slope = -float(g @ d)
        if slope > -1e-13 * max(fval, 1e-300):
            break
        alpha = 1.0
        accepted = False
        while alpha > 1e-12:
            trial = u.copy()
            trial[1:-1] -= alpha * d
            k2, q4 = parts(trial)
            if q4 > 0:
                f2 = k2 * k2 / q4
                if f2 <= fval + _ARMIJO * alpha * slope:
                    u, kin, quart, fval = trial, k2, q4, f2
                    accepted = True
                    break
            alpha *= 0.5
        if not accepted:
            break

    # project onto the constraint and polish the Euler-Lagrange system
    u *= math.sqrt(kin / quart)
    u, _ = _newton_clamped(tb, u, 0.0, tol)
    if np.max(u) < -np.min(u):
        u = -u
    r_full = assembly.residual_full(tb, 0.0, u)
    level = 0.25 * assembly.dirichlet_integral(tb, u)
    return grid, u, level, float(-r_full[0]), float(r_full[-1])


# -- public operations --------------------------------------------------------


def ground_state(w, mesh=None):
    """Positive minimal-level solution of u'' + a+ u^3 = 0, u(0) = u(tau) = 0."""
    n = mesh or default_cells(w)
    grid, u, level, dleft, dright = _ground_on(w, 0.0, w.tau, n)
    if not math.isfinite(level):
        raise DegenerateDirection("weight has no positive mass on [0, tau]")
    return BumpProfile(samples=assembly.GridFunction(grid, u), level=level,
                       dleft=dleft, dright=dright, sign="+")


def _sub_level(w, t0, t1, base_n, base_len):
    if t1 - t0 <= 1e-12 * base_len:
        return float("inf")
    n = max(60, int(math.ceil(base_n * (t1 - t0) / base_len)))
    return _ground_on(w, t0, t1, n)[2]


def pinned_zero_detail(w, zeta, mesh=None):
    """Minimal level among constraint-set functions with a zero in
    [zeta, tau - zeta], with the location and shape of the minimizer.

    Candidates: a bump on each side of the pinned zero (level minimized over
    the zero's position by golden-section search), or a single bump whose
    support stops at the edge of the pin window, leaving a flat tail that
    carries the required zero.
    """
    tau = w.tau
    if not 0.0 < zeta < 0.5 * tau:
        raise WeightError("need 0 < zeta < tau/2")
    base_n = mesh or default_cells(w)

    def two_bumps(tbar):
        return _sub_level(w, 0.0, tbar, base_n, tau) + \
            _sub_level(w, tbar, tau, base_n, tau)

    lo, hi = zeta, tau - zeta
    ts = np.linspace(lo, hi, 17)
    vals = [two_bumps(t) for t in ts]
    j = int(np.argmin(vals))
    a = ts[max(j - 1, 0)]
    b = ts[min(j + 1, len(ts) - 1)]
    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    f1, f2 = two_bumps(x1), two_bumps(x2)
    while b - a > 1e-7 * tau:
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _GOLDEN * (b - a)
            f1 = two_bumps(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (b - a)
            f2 = two_bumps(x2)
    tbar = 0.5 * (a + b)
    split_val = two_bumps(tbar)

    # single-bump candidates: support [0, tau - zeta] or [zeta, tau]
    left_only = _sub_level(w, 0.0, tau - zeta, base_n, tau)
    right_only = _sub_level(w, zeta, tau, base_n, tau)

    best = min(split_val, left_only, right_only)
    if best == split_val:
        margin = 1e-6 * tau
        return PinnedDetail(c_zeta=split_val, tbar=float(tbar),
                            interior=lo + margin < tbar < hi - margin,
                            split=True)
    if left_only <= right_only:
        return PinnedDetail(c_zeta=left_only, tbar=float(hi),
                            interior=False, split=False)
    return PinnedDetail(c_zeta=right_only, tbar=float(lo),
                        interior=False, split=False)


def pinned_zero_level(w, zeta, mesh=None):
    return pinned_zero_detail(w, zeta, mesh).c_zeta


def pinned_level_direct(w, tbar, mesh=None):
    """Level of the cheapest constraint-set function forced to vanish at tbar,
    by multistart descent on the full [0, tau] mesh with the pinned node
    eliminated.

    Independent cross-check of the two-bump decomposition: the full-interval
    mesh and minimization never split the domain.  Starts cover a bump on
    each side, the left side only, and the right side only, because a side
    can collapse only along a degenerate descent direction.
    """
    tau = w.tau
    n = mesh or default_cells(w)
    nodes = np.union1d(np.linspace(0.0, tau, n + 1), [tbar])
    grid = assembly.segment_grid(w, nodes)
    tb = grid.tables
    pin = int(np.searchsorted(nodes, tbar))
    free = np.array([j for j in range(1, len(nodes) - 1) if j != pin])

    x = grid.nodes
    left = np.where(x <= tbar, np.abs(np.sin(math.pi * x / tbar)), 0.0)
    right = np.where(x >= tbar,
                     np.abs(np.sin(math.pi * (x - tbar) / (tau - tbar))), 0.0)
    starts = [left - right, left, right]
    for s in starts:
        s[0] = s[-1] = s[pin] = 0.0

    def parts(v):
        return assembly.dirichlet_integral(tb, v), \
            assembly.quartic_integral(tb, 0.0, v)

    inv = 1.0 / tb.h
    kdiag = (inv[:-1] + inv[1:])[free - 1]
    # the pinned node decouples its neighbors; drop those couplings
    fset = set(free.tolist())
    koff = np.array([-inv[j] if (j in fset and j + 1 in fset) else 0.0
                     for j in free[:-1]])

    def stiff_solve_free(rhs):
        ab = np.zeros((2, len(kdiag)))
        ab[0, 1:] = koff
        ab[1, :] = kdiag
        return scipy.linalg.solveh_banded(ab, rhs)

    best = float("inf")
    for u in starts:
        kin, quart = parts(u)
        if quart <= 0:
            continue
        fval = kin * kin / quart
        for _ in range(600):
            grad_full = (4.0 * kin / quart) * assembly.stiffness_full(tb, u) \
                - (4.0 * fval / quart) * assembly.cubic_full(tb, 0.0, u)
            g = grad_full[free]
            d = stiff_solve_free(g)
            slope = -float(g @ d)
            if slope > -1e-13 * fval:
                break
            alpha = 1.0
            accepted = False
            while alpha > 1e-12:
                trial = u.copy()
                trial[free] -= alpha * d
                k2, q4 = parts(trial)
                if q4 > 0:
                    f2 = k2 * k2 / q4
                    if f2 <= fval + _ARMIJO * alpha * slope:
                        u, kin, quart, fval = trial, k2, q4, f2
                        accepted = True
                        break
                alpha *= 0.5
            if not accepted:
                break
        # level of the projected minimizer: (1/4) K^2 / Q
        best = min(best, 0.25 * fval)
    if not math.isfinite(best):
        raise DegenerateDirection("pinned direction has no quartic mass")
    return best


def principal_eigenvalue(w, mesh=None, method="dense"):
    """Smallest lambda with a nontrivial solution of phi'' + lambda a+ phi = 0,
    phi(0) = phi(tau) = 0; the eigenfunction is positive, normalized to max 1.
    """
    n = mesh or default_cells(w)
    grid = assembly.segment_grid(w, np.linspace(0.0, w.tau, n + 1))
    tb = grid.tables

    ncell = len(tb.h)
    mLL = np.zeros(ncell)
    mLR = np.zeros(ncell)
    mRR = np.zeros(ncell)
    from . import _kernels
    _kernels.hess_cells(mLL, mLR, mRR, tb.qcell, tb.qw * tb.qap, tb.qlam)
    mdiag = mRR[:-1] + mLL[1:]
    moff = mLR[1:-1]

    inv = 1.0 / tb.h
    kdiag = inv[:-1] + inv[1:]
    koff = -inv[1:-1]

    def mass_apply(x):
        y = mdiag * x
        y[:-1] += moff * x[1:]
        y[1:] += moff * x[:-1]
        return y

    if method == "dense":
        nin = len(kdiag)
        K = np.diag(kdiag) + np.diag(koff, 1) + np.diag(koff, -1)
        M = np.diag(mdiag) + np.diag(moff, 1) + np.diag(moff, -1)
        vals, vecs = scipy.linalg.eigh(M, K)
        nu = float(vals[-1])
        phi = vecs[:, -1]
    elif method == "power":
        ab = np.zeros((2, len(kdiag)))
        ab[0, 1:] = koff
        ab[1, :] = kdiag
        phi = np.sin(math.pi * grid.nodes[1:-1] / w.tau)
        nu = 0.0
        for _ in range(1000):
            y = scipy.linalg.solveh_banded(ab, mass_apply(phi))
            phi = y / float(np.max(np.abs(y)))
            my = mass_apply(phi)
            nu_new = float(phi @ my) / float(phi @ (kdiag * phi)
                                             + 2.0 * np.sum(koff * phi[:-1] * phi[1:]))
            if abs(nu_new - nu) <= 1e-15 * abs(nu_new):
                nu = nu_new
                break
            nu = nu_new
    else:
        raise ValueError("method must be 'dense' or 'power'")

    if nu <= 0:
        raise DegenerateDirection("weighted mass matrix is not positive")
    lam1 = 1.0 / nu
    full = np.zeros(len(grid.nodes))
    full[1:-1] = phi
    if abs(np.min(full)) > abs(np.max(full)):
        full = -full
    full /= np.max(full)
    return lam1, assembly.GridFunction(grid, full)


def nehari_project(u):
    """Scale u onto the constraint int u'^2 = int a+ u^4."""
    tb = u.grid.tables
    full = u.full()
    kin = assembly.dirichlet_integral(tb, full)
    quart = assembly.quartic_integral(tb, 0.0, full)
    if quart <= 1e-14 * kin * float(np.max(full * full, initial=0.0)) \
            or quart <= 0.0:
        raise DegenerateDirection("direction has no positive quartic mass")
    lam = math.sqrt(kin / quart)
    return assembly.GridFunction(u.grid, lam * u.values)


class LevelEvaluator:
    """Caching facade over the local solves; duck-typed for the constant
    builders (ground_level, pinned_level, ground_bump)."""

    def __init__(self, w, mesh=None):
        self.w = w
        self.mesh = mesh or default_cells(w)
        self._bump = None
        self._pinned = {}
        self._eigen = None

    def ground_bump(self):
        if self._bump is None:
            self._bump = ground_state(self.w, self.mesh)
        return self._bump

    def ground_level(self):
        return self.ground_bump().level

    def pinned_detail(self, zeta):
        key = round(float(zeta), 15)
        if key not in self._pinned:
            self._pinned[key] = pinned_zero_detail(self.w, zeta, self.mesh)
        return self._pinned[key]

    def pinned_level(self, zeta):
        return self.pinned_detail(zeta).c_zeta

    def eigen(self):
        if self._eigen is None:
            self._eigen = principal_eigenvalue(self.w, self.mesh)
        return self._eigen


def local_levels(w, zeta=None, mesh=None):
    """One-stop summary: c, c_zeta, the zeta used, and the eigenpair."""
    from .weight import choose_zeta

    ev = LevelEvaluator(w, mesh)
    if zeta is None:
        zeta, c_zeta, _ = choose_zeta(w, ev)
    else:
        c_zeta = ev.pinned_level(zeta)
    lam1, phi = ev.eigen()
    return LocalLevels(c=ev.ground_level(), c_zeta=c_zeta, zeta=float(zeta),
                       lambda1=lam1, eigenfunction=phi)
