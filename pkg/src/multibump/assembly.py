"""Piecewise-linear finite elements for the cubic action functional.

The continuous problem lives on windows I_N = [sigma_{-N}, sigma_{N+1}] with
periodic identification, or on clamped sub-blocks.  Meshes always place nodes
on every sigma_i and tau_i.  Stiffness terms are exact for the interpolant;
the quartic weight terms use composite Simpson subdivided at the weight's
polynomial breakpoints, so no order is lost at kinks of a(t).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .errors import IndexOutOfWindow, WeightError


# -- quadrature tables --------------------------------------------------------


@dataclass(eq=False)
class QuadTables:
    """Per-quadrature-point data for one mesh and one weight.

    Points come in Simpson triples on subsegments that never cross a cell
    boundary or a weight breakpoint, so the raw weight is a single polynomial
    on each subsegment and its sign is constant there.
    """
    nodes: np.ndarray        # mesh nodes, increasing
    h: np.ndarray            # cell widths
    qcell: np.ndarray        # int64 cell index per point
    qlam: np.ndarray         # barycentric position in the cell, in [0, 1]
    qw: np.ndarray           # quadrature weight (length measure)
    qap: np.ndarray          # a+(t) at the point
    qam: np.ndarray          # a-(t) at the point

    def amu(self, mu):
        return self.qap - mu * self.qam


def build_tables(w, nodes):
    nodes = np.ascontiguousarray(nodes, dtype=float)
    h = np.diff(nodes)
    if len(h) == 0 or np.any(h <= 0.0):
        raise WeightError("mesh nodes must be strictly increasing")
    T = w.period
    bounds = np.union1d(nodes, w.knots_in_span(nodes[0], nodes[-1]))
    # merge near-duplicates (a weight knot landing on top of a node)
    keep = np.concatenate([[True], np.diff(bounds) > 1e-12 * max(T, 1.0)])
    bounds = bounds[keep]
    bounds[0], bounds[-1] = nodes[0], nodes[-1]

    a, b = bounds[:-1], bounds[1:]
    mid = 0.5 * (a + b)
    d = b - a
    cell = np.clip(np.searchsorted(nodes, mid, side="right") - 1, 0, len(h) - 1)
    # identify the weight segment by the subsegment midpoint so that endpoint
    # values never get evaluated on the wrong side of a breakpoint
    shift = T * np.floor(mid / T)
    seg = w._segment_index(mid - shift)

    qt = np.concatenate([a, mid, b])
    qw = np.concatenate([d, 4.0 * d, d]) / 6.0
    qcell = np.concatenate([cell, cell, cell]).astype(np.int64)
    qseg = np.concatenate([seg, seg, seg])
    qshift = np.concatenate([shift, shift, shift])

    raw = np.empty_like(qt)
    for s in np.unique(qseg):
        m = qseg == s
        raw[m] = w.seg_eval(int(s), qt[m] - qshift[m])
    pos = w.seg_positive[qseg]
    qap = np.where(pos, np.maximum(raw, 0.0), 0.0)
    qam = np.where(pos, 0.0, np.maximum(-raw, 0.0))
    qlam = np.clip((qt - nodes[qcell]) / h[qcell], 0.0, 1.0)
    return QuadTables(nodes=nodes, h=h, qcell=qcell, qlam=qlam,
                      qw=np.ascontiguousarray(qw),
                      qap=np.ascontiguousarray(qap),
                      qam=np.ascontiguousarray(qam))


# -- nodal operations (no boundary conditions applied) ------------------------


def stiffness_full(tb, u_full):
    """Vector of int u' phi_j' over all nodal hats, clamped-end convention."""
    slopes = np.diff(u_full) / tb.h
    r = np.zeros(len(u_full))
    r[:-1] -= slopes
    r[1:] += slopes
    return r


def cubic_full(tb, mu, u_full):
    """Vector of int a_mu u^3 phi_j."""
    uq = u_full[tb.qcell] * (1.0 - tb.qlam) + u_full[tb.qcell + 1] * tb.qlam
    coef = tb.qw * tb.amu(mu) * uq ** 3
    out = np.zeros(len(u_full))
    _kernels.scatter_hat(out, coef, tb.qlam, tb.qcell, tb.qcell + 1)
    return out


def residual_full(tb, mu, u_full):
    return stiffness_full(tb, u_full) - cubic_full(tb, mu, u_full)


def dirichlet_integral(tb, u_full):
    """int u'^2 over the whole mesh (exact for the interpolant)."""
    slopes = np.diff(u_full) / tb.h
    return float(np.sum(slopes * slopes * tb.h))


def quartic_integral(tb, mu, u_full):
    """int a_mu u^4 by the Simpson tables."""
    uq = u_full[tb.qcell] * (1.0 - tb.qlam) + u_full[tb.qcell + 1] * tb.qlam
    return float(np.sum(tb.qw * tb.amu(mu) * uq ** 4))


def hessian_full(tb, mu, u_full, v_full):
    """Second variation applied to v: int v' phi' - 3 int a_mu u^2 v phi."""
    uq = u_full[tb.qcell] * (1.0 - tb.qlam) + u_full[tb.qcell + 1] * tb.qlam
    vq = v_full[tb.qcell] * (1.0 - tb.qlam) + v_full[tb.qcell + 1] * tb.qlam
    coef = 3.0 * tb.qw * tb.amu(mu) * uq ** 2 * vq
    out = stiffness_full(tb, v_full)
    neg = np.zeros(len(u_full))
    _kernels.scatter_hat(neg, coef, tb.qlam, tb.qcell, tb.qcell + 1)
    return out - neg


def jacobian_bands(tb, mu, u_full):
    """Cellwise 2x2 blocks (LL, LR, RR) of the residual Jacobian."""
    uq = u_full[tb.qcell] * (1.0 - tb.qlam) + u_full[tb.qcell + 1] * tb.qlam
    coef = 3.0 * tb.qw * tb.amu(mu) * uq ** 2
    n = len(tb.h)
    cLL = np.zeros(n)
    cLR = np.zeros(n)
    cRR = np.zeros(n)
    _kernels.hess_cells(cLL, cLR, cRR, tb.qcell, coef, tb.qlam)
    inv = 1.0 / tb.h
    return inv - cLL, -inv - cLR, inv - cRR


# -- meshes -------------------------------------------------------------------


@dataclass(eq=False)
class Grid:
    """A mesh over whole weight periods or an arbitrary clamped segment.

    ``values`` arrays carry one scalar per node; when ``periodic`` the
    duplicate right endpoint is collapsed, so len(values) == len(nodes) - 1.
    """
    w: object
    nodes: np.ndarray
    periodic: bool
    N: int = 0                 # half-width for symmetric windows, 0 otherwise
    i0: int = 0                # first interval index covered (window grids)
    n_int: int = 0             # number of weight periods covered (0: segment)
    m: int = 0                 # cells per subinterval (0: free mesh)
    _tables: QuadTables = field(default=None, repr=False)
    _marks: dict = field(default=None, repr=False)

    @property
    def tables(self):
        if self._tables is None:
            self._tables = build_tables(self.w, self.nodes)
        return self._tables

    @property
    def ndof(self):
        return len(self.nodes) - 1 if self.periodic else len(self.nodes)

    @property
    def span(self):
        return float(self.nodes[-1] - self.nodes[0])

    # node index of each sigma_i / tau_i present in the mesh
    @property
    def marks(self):
        if self._marks is None:
            marks = {}
            t0, t1 = self.nodes[0], self.nodes[-1]
            T = self.w.period
            tol = 1e-9 * max(T, 1.0)
            lo = int(np.floor(t0 / T)) - 1
            hi = int(np.ceil(t1 / T)) + 1
            for i in range(lo, hi + 1):
                for name, t in (("s", self.w.sigma(i)), ("t", self.w.tau_i(i))):
                    if t0 - tol <= t <= t1 + tol:
                        j = int(np.searchsorted(self.nodes, t))
                        for cand in (j - 1, j, j + 1):
                            if 0 <= cand < len(self.nodes) and \
                                    abs(self.nodes[cand] - t) <= tol:
                                marks[(name, i)] = cand
                                break
            self._marks = marks
        return self._marks

    def sigma_node(self, i):
        try:
            return self.marks[("s", i)]
        except KeyError:
            raise IndexOutOfWindow(f"sigma_{i} is not a mesh node") from None

    def tau_node(self, i):
        try:
            return self.marks[("t", i)]
        except KeyError:
            raise IndexOutOfWindow(f"tau_{i} is not a mesh node") from None

    def interval_nodes(self, i, which):
        """Node index range (a, b) of I_i^+ or I_i^-."""
        if which in ("plus", "+"):
            return self.sigma_node(i), self.tau_node(i)
        if which in ("minus", "-"):
            return self.tau_node(i), self.sigma_node(i + 1)
        raise ValueError("which must be 'plus' or 'minus'")

    def full_values(self, values):
        values = np.asarray(values, dtype=float)
        if not self.periodic:
            return values
        return np.concatenate([values, values[:1]])

    def fold(self, r_full):
        if not self.periodic:
            return r_full
        r = r_full[:-1].copy()
        r[0] += r_full[-1]
        return r

    def dof_of_node(self, j):
        return j % self.ndof if self.periodic else j

    def eval(self, values, ts):
        """Interpolate nodal values at arbitrary times (periodic fold if set)."""
        full = self.full_values(values)
        ts = np.asarray(ts, dtype=float)
        if self.periodic:
            t0 = self.nodes[0]
            ts = t0 + np.mod(ts - t0, self.span)
        return np.interp(ts, self.nodes, full)


def span_grid(w, i0, n_int, cells_per_interval, periodic=True):
    """Mesh covering [sigma_{i0}, sigma_{i0+n_int}], uniform in each I_i^pm."""
    if n_int < 1:
        raise WeightError("need at least one weight period")
    if cells_per_interval < 8:
        raise WeightError("need at least 8 cells per subinterval")
    m = int(cells_per_interval)
    parts = []
    for i in range(i0, i0 + n_int):
        parts.append(np.linspace(w.sigma(i), w.tau_i(i), m + 1)[:-1])
        parts.append(np.linspace(w.tau_i(i), w.sigma(i + 1), m + 1)[:-1])
    parts.append(np.array([w.sigma(i0 + n_int)]))
    nodes = np.concatenate(parts)
    return Grid(w=w, nodes=nodes, periodic=periodic, N=0, i0=i0,
                n_int=n_int, m=m)


def make_grid(w, N, cells_per_interval):
    """Periodic mesh on the symmetric window [sigma_{-N}, sigma_{N+1}]."""
    if N < 0:
        raise WeightError("window half-width must be >= 0")
    g = span_grid(w, -N, 2 * N + 1, cells_per_interval, periodic=True)
    g.N = int(N)
    return g


def segment_grid(w, nodes):
    """Clamped mesh on an arbitrary strictly increasing node array."""
    nodes = np.ascontiguousarray(nodes, dtype=float)
    if len(nodes) < 2 or np.any(np.diff(nodes) <= 0):
        raise WeightError("mesh nodes must be strictly increasing")
    return Grid(w=w, nodes=nodes, periodic=False)


# -- grid functions and the variational interface -----------------------------


@dataclass(eq=False)
class GridFunction:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if len(self.values) != self.grid.ndof:
            raise WeightError(
                f"expected {self.grid.ndof} values, got {len(self.values)}")
        if not np.all(np.isfinite(self.values)):
            raise WeightError("grid function values must be finite")

    @classmethod
    def from_callable(cls, grid, f):
        vals = np.asarray(f(grid.nodes), dtype=float)
        if grid.periodic:
            vals = vals[:-1]
        return cls(grid, vals)

    def full(self):
        return self.grid.full_values(self.values)

    def eval(self, ts):
        return self.grid.eval(self.values, ts)

    def copy(self):
        return GridFunction(self.grid, self.values.copy())

    def sup_norm(self):
        return float(np.max(np.abs(self.values)))


def action(u, mu):
    """J_mu(u) = 1/2 int u'^2 - 1/4 int a_mu u^4 over the grid."""
    tb = u.grid.tables
    full = u.full()
    return 0.5 * dirichlet_integral(tb, full) - \
        0.25 * quartic_integral(tb, mu, full)


def gradient(u, mu):
    """Weak residual against every hat function (periodic hats when folded)."""
    r = residual_full(u.grid.tables, mu, u.full())
    return GridFunction(u.grid, u.grid.fold(r))


def hessian_apply(u, mu, v):
    """Second variation of the action at u applied to v."""
    if v.grid is not u.grid:
        raise WeightError("u and v must share a grid")
    r = hessian_full(u.grid.tables, mu, u.full(), v.full())
    return GridFunction(u.grid, u.grid.fold(r))


def interval_energy(u, i, which="plus"):
    """int of u'^2 over I_i^+ or I_i^- (exact for the interpolant)."""
    a, b = u.grid.interval_nodes(i, which)
    full = u.full()
    h = u.grid.tables.h[a:b]
    slopes = np.diff(full[a:b + 1]) / h
    return float(np.sum(slopes * slopes * h))


def nodal_derivative(u):
    """Nodal slope estimates: averaged cell slopes, one-sided at clamped ends."""
    full = u.full()
    h = u.grid.tables.h
    s = np.diff(full) / h
    out = np.empty(len(full))
    out[0] = s[0]
    out[-1] = s[-1]
    out[1:-1] = (s[:-1] * h[1:] + s[1:] * h[:-1]) / (h[:-1] + h[1:])
    if u.grid.periodic:
        wrap = (s[-1] * h[0] + s[0] * h[-1]) / (h[0] + h[-1])
        out[0] = out[-1] = wrap
    return out


def jacobian_matrix(u, mu):
    """Sparse residual Jacobian on the grid's dofs (folded when periodic)."""
    grid = u.grid
    dLL, dLR, dRR = jacobian_bands(grid.tables, mu, u.full())
    ncell = len(grid.tables.h)
    L = np.arange(ncell, dtype=np.int64)
    R = L + 1
    if grid.periodic:
        L = L % grid.ndof
        R = R % grid.ndof
    rows = np.concatenate([L, R, L, R])
    cols = np.concatenate([L, R, R, L])
    data = np.concatenate([dLL, dRR, dLR, dLR])
    n = grid.ndof
    return sp.coo_matrix((data, (rows, cols)), shape=(n, n)).tocsc()
