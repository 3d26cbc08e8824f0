"""Shooting oracle: frozen reference constants and convergence behavior.

The autonomous normal form w'' + w^3 = 0 with w(0) = 0, w'(0) = 1 has a
closed-form first-return time and kinetic integral in terms of Gamma
functions (energy w'^2/2 + w^4/4 = 1/2 reduces both to Beta integrals):

    t1 = 2^(1/4) Gamma(1/4)^2 / (2 sqrt(2 pi))
    I1 = 2^(-3/4) Gamma(1/4) Gamma(3/2) / Gamma(7/4)

Everything else scales out of these two numbers for constant weights.
"""

import math

import numpy as np
import pytest
from scipy.special import gamma as G

from multibump import oracle, weight
from multibump.errors import BlowUp, NewtonFailure, ScopeError

T1 = 3.118169499510998
I1 = 2.0787796663402367
C_STEP = 15.756060010769785


def test_first_return_closed_form():
    t1_gamma = 2.0 ** 0.25 * G(0.25) ** 2 / (2.0 * math.sqrt(2.0 * math.pi))
    i1_gamma = 2.0 ** -0.75 * G(0.25) * G(1.5) / G(1.75)
    assert math.isclose(T1, t1_gamma, rel_tol=5e-13)
    assert math.isclose(I1, i1_gamma, rel_tol=5e-13)
    t1, i1 = oracle._constant_first_return(1.0, 1.0)
    assert math.isclose(t1, t1_gamma, rel_tol=1e-11)
    assert math.isclose(i1, i1_gamma, rel_tol=1e-11)


def test_ground_level_frozen(step_weight):
    c = oracle.brute_ground_level(step_weight)
    assert math.isclose(c, C_STEP, rel_tol=1e-12)
    # c = t1^3 I1 / 4 for a+ = 1 on [0, 1]
    assert math.isclose(c, T1 ** 3 * I1 / 4.0, rel_tol=1e-12)


def test_ground_level_scaling():
    """c scales like tau^-3 and like 1/k for a+ = k."""
    P = weight.Piece
    stretched = weight.build_weight(4.0, 2.0, [P(0.0, 2.0, "poly", (1.0,)),
                                               P(2.0, 4.0, "poly", (-1.0,))])
    assert math.isclose(oracle.brute_ground_level(stretched), C_STEP / 8.0,
                        rel_tol=1e-12)
    strong = weight.build_weight(2.0, 1.0, [P(0.0, 1.0, "poly", (5.0,)),
                                            P(1.0, 2.0, "poly", (-1.0,))])
    assert math.isclose(oracle.brute_ground_level(strong), C_STEP / 5.0,
                        rel_tol=1e-12)


def test_ground_level_piecewise_constant():
    """Non-uniform a+ goes through the slope bisection branch."""
    P = weight.Piece
    w = weight.build_weight(2.0, 1.0, [P(0.0, 0.5, "poly", (1.0,)),
                                       P(0.5, 1.0, "poly", (4.0,)),
                                       P(1.0, 2.0, "poly", (-1.0,))])
    c = oracle.brute_ground_level(w)
    # between the uniform bounds c(a=4) = C/4 and c(a=1) = C
    assert C_STEP / 4.0 < c < C_STEP
    # a+ = 4 everywhere is the same problem as a+ = 1 at doubled length:
    # sanity floor from monotonicity in the weight
    w2 = weight.build_weight(2.0, 1.0, [P(0.0, 0.5, "poly", (4.0,)),
                                        P(0.5, 1.0, "poly", (1.0,)),
                                        P(1.0, 2.0, "poly", (-1.0,))])
    assert math.isclose(c, oracle.brute_ground_level(w2), rel_tol=1e-9)


def test_ground_level_scope(sine_weight):
    with pytest.raises(ScopeError):
        oracle.brute_ground_level(sine_weight)


def test_hamiltonian_conservation(step_weight):
    """Inside one smooth piece the energy u'^2/2 + a u^4/4 is conserved."""
    st = oracle.IvpState(t=0.1, u=0.4, du=1.3)
    end, dense = oracle.integrate(step_weight, 1.0, st, 0.9, rtol=1e-11)
    ts = np.linspace(0.1, 0.9, 500)
    u = dense.eval_u(ts)
    du = dense.eval_du(ts)
    E = 0.5 * du ** 2 + 0.25 * u ** 4
    assert np.max(np.abs(E - E[0])) < 1e-9 * max(1.0, E[0])


def test_integrate_order(step_weight):
    """Error vs forced max step decays at the scheme's order (5)."""
    st = oracle.IvpState(t=0.0, u=0.0, du=1.0)
    ref, _ = oracle.integrate(step_weight, 1.0, st, 1.0, rtol=1e-13)
    errs = []
    hs = (0.05, 0.025, 0.0125)
    for h in hs:
        st = oracle.IvpState(t=0.0, u=0.0, du=1.0)
        end, _ = oracle.integrate(step_weight, 1.0, st, 1.0, rtol=1e-3,
                                  atol=1e-3, max_step=h)
        errs.append(abs(end.u - ref.u) + abs(end.du - ref.du))
    slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert slope >= 4.5


def test_blowup_raises(step_weight):
    st = oracle.IvpState(t=1.05, u=2.0, du=0.0)
    with pytest.raises(BlowUp):
        oracle.integrate(step_weight, 1e4, st, 1.95, cap=1e5)


def test_shoot_symmetric_chord(step_weight):
    res = oracle.shoot_dirichlet(step_weight, 0.0, 0.0, 1.0, 0.3, 0.3,
                                 rtol=1e-11)
    assert abs(res.residual) <= 1e-9
    # symmetric data on a sign-definite interval: u'(mid) = 0
    mid_du = res.dense.eval_du(0.5)
    assert abs(mid_du) < 1e-8


def test_shoot_recovers_ground_bump(step_weight):
    """Dirichlet shooting from 0 to 0 with a positive hump hits the ground
    level (1/4) int u'^2 = c."""
    # u = lam w(lam t) with lam = T1 returns to zero at t = 1, so the exact
    # slope is u'(0) = lam^2; start close but not on it
    res = oracle.shoot_dirichlet(step_weight, 0.0, 0.0, 1.0, 0.0, 0.0,
                                 rtol=1e-11, s0=0.9 * T1 ** 2)
    assert abs(res.residual) <= 1e-8
    kinetic = res.dense.quad_du_squared()
    assert math.isclose(0.25 * kinetic, C_STEP, rel_tol=1e-8)


def test_shoot_dirichlet_monotone_negativity(step_weight):
    """On a negativity interval the connecting orbit stays one-signed and
    small in the middle (large mu pushes it down)."""
    mu = 1e4
    res = oracle.shoot_dirichlet(step_weight, mu, 1.0, 2.0, 0.4, 0.4,
                                 rtol=1e-10)
    assert abs(res.residual) <= 1e-8
    ts = np.linspace(1.0, 2.0, 201)
    u = res.dense.eval_u(ts)
    assert np.all(u > 0)
    assert u.min() < 0.05


def test_shoot_reports_failure():
    """An unreachable right value must not loop forever."""
    w = weight.make_step_weight()
    with pytest.raises((NewtonFailure, BlowUp)):
        oracle.shoot_dirichlet(w, 1e6, 1.0, 2.0, 1e5, 1e5, rtol=1e-8,
                               max_iter=8)


def test_dense_output_eval_consistency(step_weight):
    st = oracle.IvpState(t=0.0, u=0.2, du=0.5)
    end, dense = oracle.integrate(step_weight, 1.0, st, 0.8, rtol=1e-10)
    assert math.isclose(dense.eval_u(0.8), end.u, rel_tol=1e-10, abs_tol=1e-12)
    assert math.isclose(dense.eval_du(0.8), end.du, rel_tol=1e-10,
                        abs_tol=1e-12)
    # derivative of the interpolant matches a FD of eval_u
    t = 0.37
    h = 1e-6
    fd = (dense.eval_u(t + h) - dense.eval_u(t - h)) / (2 * h)
    assert math.isclose(fd, dense.eval_du(t), rel_tol=1e-7)


def test_first_zero(step_weight):
    """u = lam w(lam t) with lam = T1/0.5 returns to zero at exactly 0.5."""
    lam = T1 / 0.5
    st = oracle.IvpState(t=0.0, u=0.0, du=lam ** 2)
    end, dense = oracle.integrate(step_weight, 1.0, st, 0.9, rtol=1e-12)
    z = dense.first_zero(after=1e-6)
    assert z is not None
    assert math.isclose(z, 0.5, rel_tol=1e-9)
