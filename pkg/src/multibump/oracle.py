"""Shooting oracle: adaptive Dormand-Prince 5(4) integration of the ODE
u'' + a_mu(t) u^3 = 0 with restarts at weight breakpoints.

This path is deliberately independent of the FEM machinery: no quadrature
tables or assembly code are shared.  It provides initial-value integration
with dense (quintic Hermite) output, Dirichlet shooting on an interval, and a
brute-force ground-level computation used to cross-validate the local solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from . import _kernels
from .errors import BlowUp, NewtonFailure, NonConvergence, ScopeError

_G5X, _G5W = np.polynomial.legendre.leggauss(5)


@dataclass
class IvpState:
    t: float
    u: float
    du: float


class DenseOutput:
    """Accepted-step trajectory with quintic Hermite evaluation.

    Between accepted points the interpolant uses values, first derivatives and
    the accelerations the ODE provides, so it matches the integrator's order.
    """

    def __init__(self, w, mu, ts, ys, n):
        self.w = w
        self.mu = mu
        self.ts = ts
        self.ys = ys
        self.n = n
        self._acc = None

    @property
    def t_end(self):
        return self.ts[-1]

    def _accels(self):
        """Per-step accelerations of u at both step ends (one-sided at knots)."""
        if self._acc is None:
            tm = 0.5 * (self.ts[:-1] + self.ts[1:])
            tf = self.w.fold(tm)
            idx = self.w._segment_index(tf)
            shift = tm - tf
            a0 = np.empty(len(tm))
            a1 = np.empty(len(tm))
            for seg in np.unique(idx):
                m = idx == seg
                t0loc = self.ts[:-1][m] - shift[m]
                t1loc = self.ts[1:][m] - shift[m]
                raw0 = self.w.seg_eval(seg, t0loc)
                raw1 = self.w.seg_eval(seg, t1loc)
                a0[m] = np.where(raw0 >= 0, raw0, self.mu * raw0)
                a1[m] = np.where(raw1 >= 0, raw1, self.mu * raw1)
            u0 = self.ys[:-1, 0]
            u1 = self.ys[1:, 0]
            self._acc = (-a0 * u0 ** 3, -a1 * u1 ** 3)
        return self._acc

    def _locate(self, t):
        t = np.asarray(t, dtype=float)
        i = np.searchsorted(self.ts, t, side="right") - 1
        return np.clip(i, 0, len(self.ts) - 2)

    def _hermite(self, i, t, deriv):
        acc0, acc1 = self._accels()
        h = self.ts[i + 1] - self.ts[i]
        s = (t - self.ts[i]) / h
        p0 = self.ys[i, 0]
        p1 = self.ys[i + 1, 0]
        m0 = self.ys[i, 1] * h
        m1 = self.ys[i + 1, 1] * h
        a0 = acc0[i] * h * h
        a1 = acc1[i] * h * h
        s2 = s * s
        s3 = s2 * s
        s4 = s3 * s
        s5 = s4 * s
        if not deriv:
            return (p0 * (1 - 10 * s3 + 15 * s4 - 6 * s5)
                    + m0 * (s - 6 * s3 + 8 * s4 - 3 * s5)
                    + a0 * (0.5 * s2 - 1.5 * s3 + 1.5 * s4 - 0.5 * s5)
                    + p1 * (10 * s3 - 15 * s4 + 6 * s5)
                    + m1 * (-4 * s3 + 7 * s4 - 3 * s5)
                    + a1 * (0.5 * s3 - s4 + 0.5 * s5))
        d = (p0 * (-30 * s2 + 60 * s3 - 30 * s4)
             + m0 * (1 - 18 * s2 + 32 * s3 - 15 * s4)
             + a0 * (s - 4.5 * s2 + 6 * s3 - 2.5 * s4)
             + p1 * (30 * s2 - 60 * s3 + 30 * s4)
             + m1 * (-12 * s2 + 28 * s3 - 15 * s4)
             + a1 * (1.5 * s2 - 4 * s3 + 2.5 * s4))
        return d / h

    def eval_u(self, t):
        i = self._locate(t)
        return self._hermite(i, np.asarray(t, dtype=float), deriv=False)

    def eval_du(self, t):
        i = self._locate(t)
        return self._hermite(i, np.asarray(t, dtype=float), deriv=True)

    def first_zero(self, after=None):
        """First time u crosses zero strictly after ``after`` (None if none)."""
        lo = self.ts[0] if after is None else after
        us = self.ys[:, 0]
        for i in range(len(self.ts) - 1):
            if self.ts[i + 1] <= lo:
                continue
            ua = self.eval_u(max(self.ts[i], lo))
            ub = us[i + 1]
            if ua == 0.0 and self.ts[i] >= lo:
                return self.ts[i]
            if ua * ub < 0.0:
                return brentq(lambda t: float(self.eval_u(t)),
                              max(self.ts[i], lo), self.ts[i + 1],
                              xtol=1e-15, rtol=8.9e-16)
            if ub == 0.0:
                return self.ts[i + 1]
        return None

    def quad_du_squared(self, t_end=None):
        """integral of u'(t)^2 over [t_start, t_end] by per-step Gauss rules."""
        t_end = self.t_end if t_end is None else t_end
        total = 0.0
        for i in range(len(self.ts) - 1):
            a = self.ts[i]
            b = min(self.ts[i + 1], t_end)
            if b <= a:
                break
            half = 0.5 * (b - a)
            mid = 0.5 * (a + b)
            tq = mid + half * _G5X
            dq = self._hermite(np.full(len(tq), i, dtype=int), tq, deriv=True)
            total += half * float(np.sum(_G5W * dq * dq))
        return total


_REC_START = 1 << 16
_REC_MAX = 1 << 24


def _integrate_raw(w, mu, state, t_end, rtol, atol, cap, n, max_step):
    """Run the kernel across weight segments.  Returns (status, ts, ys, y_end)."""
    t0 = state.t
    if t_end < t0:
        raise ValueError("backward integration is not supported")
    y = np.zeros(5)
    y[0] = state.u
    y[1] = state.du
    if n >= 4:
        y[2] = 0.0
        y[3] = 1.0
    nrec = _REC_START
    while True:
        rec_t = np.empty(nrec)
        rec_y = np.empty((nrec, 5))
        rec_t[0] = t0
        rec_y[0] = y
        yrun = y.copy()
        off = 1
        status = _kernels.OK
        knots = w.knots_in_span(t0, t_end)
        for ta, tb in zip(knots[:-1], knots[1:]):
            if tb - ta <= 1e-15 * max(1.0, abs(tb)):
                continue
            coefs, tref = w.segment_pack(ta, tb)
            status, off, _ = _kernels.dp54_run(
                coefs, tref, mu, ta, tb, yrun, n, rtol, atol, cap, max_step,
                rec_t, rec_y, off, nrec)
            if status != _kernels.OK:
                break
        if status == _kernels.RECORD_FULL and nrec < _REC_MAX:
            nrec *= 4
            continue
        if status == _kernels.RECORD_FULL:
            raise NonConvergence("integrator exceeded the step budget")
        if status == _kernels.STEP_UNDERFLOW:
            raise NonConvergence("integrator step size underflow")
        return status, rec_t[:off], rec_y[:off], yrun


def integrate(w, mu, state, t_end, rtol=1e-10, atol=None, cap=1e6,
              with_sensitivity=False, with_quadrature=False, max_step=np.inf):
    """Integrate from ``state`` to t_end.  Returns (IvpState, DenseOutput).

    Raises BlowUp if |u| exceeds ``cap``.  With ``with_sensitivity`` the
    variational pair (v, v') with v(t0) = 0, v'(t0) = 1 rides along and is
    available as dense columns 2 and 3.
    """
    if atol is None:
        atol = rtol * 1e-2
    n = 2
    if with_sensitivity:
        n = 4
    if with_quadrature:
        n += 1
    status, ts, ys, y = _integrate_raw(w, mu, state, t_end, rtol, atol, cap,
                                       n, max_step)
    if status == _kernels.BLEW_UP:
        raise BlowUp(f"|u| exceeded {cap:g} at t = {ts[-1]:.6g}")
    end = IvpState(t=float(ts[-1]), u=float(y[0]), du=float(y[1]))
    return end, DenseOutput(w, mu, ts, ys[:, :n], n)


@dataclass
class ShootResult:
    slope: float
    residual: float
    iters: int
    dense: DenseOutput


def shoot_dirichlet(w, mu, t0, t1, x, y, rtol=1e-10, s0=None, max_iter=80,
                    cap=1e6, tol=None):
    """Find u'(t0) so that the trajectory from u(t0) = x reaches u(t1) = y.

    Newton on the end value using the variational equation, with bracketing
    and bisection fallback; trajectories that blow up count as infinite
    residuals of the corresponding sign.
    """
    atol = rtol * 1e-2
    scale = max(1.0, abs(x), abs(y))
    if tol is None:
        tol = 1e-9 * scale
    big = 1e9 * scale

    def attempt(s):
        st = IvpState(t=t0, u=x, du=s)
        status, ts, ys, yend = _integrate_raw(w, mu, st, t1, rtol, atol, cap,
                                              4, np.inf)
        if status == _kernels.BLEW_UP:
            return math.copysign(big, ys[-1, 0]), None, None
        dense = DenseOutput(w, mu, ts, ys[:, :4], 4)
        return float(yend[0]) - y, float(yend[2]), dense

    s = s0 if s0 is not None else (y - x) / (t1 - t0)
    lo = hi = None          # bracket: R(lo) < 0 < R(hi)
    best = None
    for it in range(1, max_iter + 1):
        R, dR, dense = attempt(s)
        if dense is not None and abs(R) <= tol:
            return ShootResult(slope=s, residual=R, iters=it, dense=dense)
        if R < 0.0 and (lo is None or s > lo):
            lo = s
        if R > 0.0 and (hi is None or s < hi):
            hi = s
        if best is None or abs(R) < best[0]:
            best = (abs(R), s)
        step = None
        if dR is not None and dR != 0.0 and abs(R) < big:
            step = -R / dR
            cand = s + step
            if lo is not None and hi is not None and not (min(lo, hi) < cand < max(lo, hi)):
                step = None
        if step is None:
            if lo is not None and hi is not None:
                cand = 0.5 * (lo + hi)
            else:
                # one-sided: walk against the residual sign (blow-ups included,
                # their sign tells which side of the connecting slope we are on)
                cand = s - math.copysign(max(1.0, abs(s)) * 0.5, R)
        s = cand
    raise NewtonFailure(
        f"shooting failed to reach |residual| <= {tol:g}; best {best[0]:g}")


def _constant_first_return(value=1.0, slope=1.0):
    """First return to zero and int u'^2 for u'' + value*u^3 = 0, u(0)=0, u'(0)=slope."""
    from .weight import Piece, build_weight
    span = 8.0 / math.sqrt(math.sqrt(value) * max(slope, 1e-12))
    w1 = build_weight(2.0 * span, span,
                      [Piece(0.0, span, "poly", (value,)),
                       Piece(span, 2.0 * span, "poly", (-value,))], check=False)
    st = IvpState(t=0.0, u=0.0, du=slope)
    for _ in range(8):
        _, dense = integrate(w1, 0.0, st, span, rtol=1e-12)
        tz = dense.first_zero(after=1e-12)
        if tz is not None:
            return tz, dense.quad_du_squared(t_end=tz)
        st = IvpState(t=dense.t_end, u=float(dense.eval_u(dense.t_end)),
                      du=float(dense.eval_du(dense.t_end)))
        span *= 2.0
    raise NonConvergence("no return to zero found")


def brute_ground_level(w, rtol=1e-12):
    """Ground level c = (1/4) int u'^2 of the positive Dirichlet solution on
    [0, tau], for piecewise-constant a+ only.

    For a constant a+ the scaling u -> lam*u(lam*t) reduces everything to one
    base integration; otherwise the Dirichlet solution is found by shooting
    for a first zero exactly at tau.
    """
    pos = [i for i in range(len(w.seg_coefs)) if w.seg_positive[i]]
    coefs = w.seg_coefs[pos]
    if np.any(np.abs(coefs[:, 1:]) > 1e-12 * max(1.0, np.abs(coefs).max())):
        raise ScopeError("a+ must be piecewise constant on [0, tau]")
    values = coefs[:, 0]
    if np.allclose(values, values[0], rtol=1e-12, atol=0.0):
        k = float(values[0])
        t1, i1 = _constant_first_return(1.0, 1.0)
        lam = t1 / w.tau
        return 0.25 * lam ** 3 * i1 / k

    # piecewise-constant but non-uniform: bisection on the initial slope so the
    # first return lands on tau (larger slopes return sooner)
    def zero_time(s):
        st = IvpState(t=0.0, u=0.0, du=s)
        _, dense = integrate(w, 0.0, st, w.tau * (1.0 + 1e-9), rtol=rtol)
        tz = dense.first_zero(after=1e-12)
        return (tz if tz is not None else math.inf), dense

    s_lo, s_hi = 1.0, 1.0
    for _ in range(200):
        if zero_time(s_lo)[0] > w.tau:
            break
        s_lo *= 0.25
    for _ in range(200):
        if zero_time(s_hi)[0] < w.tau:
            break
        s_hi *= 4.0
    for _ in range(200):
        s = math.sqrt(s_lo * s_hi)
        tz, dense = zero_time(s)
        if abs(tz - w.tau) <= 1e-13 * w.tau:
            break
        if tz > w.tau:
            s_lo = s
        else:
            s_hi = s
        if abs(math.log(s_hi / s_lo)) < 1e-15:
            break
    tz, dense = zero_time(math.sqrt(s_lo * s_hi))
    return 0.25 * dense.quad_du_squared(t_end=min(tz, w.tau))
