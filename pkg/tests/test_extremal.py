import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial import ConvexHull, Delaunay

from viscid.core import ModelParams, ValidationError, propagate_const, State
from viscid.extremal import (
    AdjointTerminal,
    CaseTag,
    SingularInstantError,
    adjoint_eta,
    boundary_sample,
    classify,
    extremal_control,
    extremal_state,
    parse_subspace,
    projection_boundary,
    subspace_directions,
    switching_time,
)

from oracles import bang_bang, bisect, ode_state, quad_state

P2 = ModelParams(n=2, v0=0.5)


def adj(lam, eta):
    return AdjointTerminal(np.array(lam, float), np.array(eta, float))


def rotate(v, a):
    c, s = math.cos(a), math.sin(a)
    return np.array([c * v[0] - s * v[1], s * v[0] + c * v[1]])


# adjoint and switching ------------------------------------------------------

def test_adjoint_terminal_value_and_constant_solution():
    p = adj([1, 2], [-3, 0.5])
    np.testing.assert_array_equal(adjoint_eta(1.7, 1.7, p), [-3, 0.5])
    q = adj([0.3, -0.4], [0.3, -0.4])
    for t in (0, 0.5, 3):
        np.testing.assert_allclose(adjoint_eta(t, 3, q), [0.3, -0.4], atol=1e-16)


def test_switching_time_matches_adjoint_zero():
    p = adj([1, 0], [-2, 0])
    info = switching_time(2.0, p)
    assert info.exists
    root = bisect(lambda t: adjoint_eta(t, 2.0, p)[0], 0.0, 2.0)
    assert info.theta == pytest.approx(root, abs=1e-12)
    assert info.theta == pytest.approx(2 + math.log(1 / 3), abs=1e-15)
    assert np.linalg.norm(adjoint_eta(info.theta, 2.0, p)) <= 1e-12


def test_switching_time_absent():
    assert not switching_time(1.0, adj([1, 0], [1, 0])).exists
    assert not switching_time(0.5, adj([1, 0], [-2, 0])).exists  # e^-T >= 1/3
    assert not switching_time(1.0, adj([1, 0], [0, 1])).exists
    assert not switching_time(1.0, adj([0, 0], [0, 1])).exists


def test_switch_at_terminal_time_when_eta_zero():
    info = switching_time(1.3, adj([1, 0], [0, 0]))
    assert info.exists and info.theta == 1.3


@settings(max_examples=200)
@given(st.floats(0.05, 5), st.floats(0.05, 5), st.floats(0.01, 6))
def test_switching_time_bounds(a, b, T):
    info = switching_time(T, adj([a, 0], [-b, 0]))
    assert info.exists == (T > math.log1p(b / a))
    if info.exists:
        assert 0 < info.theta <= T


# classification -------------------------------------------------------------

@pytest.mark.parametrize(
    "lam, eta, tag",
    [
        ([1, 0], [0, 1], CaseTag.GENERAL),
        ([1, 0], [-3, 0], CaseTag.OPPOSITE_COLLINEAR),
        ([1, 0], [3, 0], CaseTag.SAME_COLLINEAR),
        ([1, 0], [0, 0], CaseTag.SAME_COLLINEAR),
        ([0, 0], [0, 1], CaseTag.ZERO_LAMBDA),
        ([1e-14, 0], [0, 1], CaseTag.ZERO_LAMBDA),
    ],
)
def test_classify(lam, eta, tag):
    assert classify(adj(lam, eta)) is tag


def test_both_zero_rejected():
    with pytest.raises(ValidationError):
        adj([0, 0], [0, 0])


# pointwise control ----------------------------------------------------------

def test_extremal_control_examples():
    np.testing.assert_array_equal(extremal_control(0.3, 1.0, adj([0, 0], [0, 1])), [0, 1])
    np.testing.assert_allclose(extremal_control(0.3, 1.0, adj([1, 0], [1, 0])), [1, 0])
    u = extremal_control(0.5, 1.0, adj([1, 0], [0, 1]))
    e = math.exp(-0.5)
    ref = np.array([1 - e, e])
    np.testing.assert_allclose(u, ref / np.linalg.norm(ref), atol=1e-15)


def test_extremal_control_singular_instant():
    with pytest.raises(SingularInstantError):
        extremal_control(1.0, 1.0, adj([1, 0], [0, 0]))


# closed-form states ---------------------------------------------------------

def test_initial_condition():
    for p in (adj([1, 0], [0, 1]), adj([1, 0], [-2, 0]), adj([1, 1], [2, 2]), adj([0, 0], [1, 0])):
        s = extremal_state(0.0, 2.0, p, P2)
        np.testing.assert_allclose(s.r, [0, 0], atol=1e-15)
        np.testing.assert_allclose(s.v, [0.5, 0], atol=1e-15)


def test_zero_lambda_example():
    s = extremal_state(1.0, 1.0, adj([0, 0], [0, 1]), ModelParams(n=2))
    np.testing.assert_allclose(s.v, [0, 1 - math.exp(-1)], atol=1e-15)
    np.testing.assert_allclose(s.r, [0, math.exp(-1)], atol=1e-15)
    ref = propagate_const(State.initial(2, 0.0), [0, 1], 1.0)
    np.testing.assert_allclose(s.r, ref.r, atol=1e-15)


def test_general_example_against_quadrature():
    lam, eta = np.array([1.0, 0]), np.array([0, 1.0])
    s = extremal_state(2.0, 2.0, AdjointTerminal(lam, eta), P2)
    r, v = quad_state(2.0, 2.0, lam, eta, 0.5)
    np.testing.assert_allclose(s.r, r, atol=1e-8)
    np.testing.assert_allclose(s.v, v, atol=1e-8)


def test_opposite_example_against_bang_bang():
    s = extremal_state(2.0, 2.0, adj([1, 0], [-2, 0]), ModelParams(n=2))
    r, v = bang_bang(2.0, 2 + math.log(1 / 3), [1, 0], 0.0)
    np.testing.assert_allclose(s.r, r, atol=1e-14)
    np.testing.assert_allclose(s.v, v, atol=1e-14)


@pytest.mark.parametrize("T", [0.2, 1.0, 2.5])
@pytest.mark.parametrize("frac", [0.0, 0.3, 0.999, 1.0])
def test_opposite_before_and_after_switch(T, frac):
    """Covers switching inside (0, T) and no switch at all."""
    lam, eta = np.array([0.6, 0.8]), np.array([-1.2, -1.6])
    t = frac * T
    th = T - math.log1p(2.0)
    s = extremal_state(t, T, AdjointTerminal(lam, eta), P2)
    r, v = bang_bang(t, th, lam, 0.5)
    np.testing.assert_allclose(s.r, r, atol=1e-13)
    np.testing.assert_allclose(s.v, v, atol=1e-13)


def random_costate(rng, n, case):
    d = rng.normal(size=n)
    d /= np.linalg.norm(d)
    if case is CaseTag.GENERAL:
        return rng.normal(size=n), rng.normal(size=n)
    if case is CaseTag.OPPOSITE_COLLINEAR:
        return rng.uniform(0.1, 2) * d, -rng.uniform(0.1, 4) * d
    if case is CaseTag.SAME_COLLINEAR:
        return rng.uniform(0.1, 2) * d, rng.uniform(0, 4) * d
    return np.zeros(n), d * rng.uniform(0.1, 3)


@pytest.mark.parametrize("case", list(CaseTag))
def test_against_ode_and_quadrature(case):
    rng = np.random.default_rng(list(CaseTag).index(case) + 100)
    for _ in range(6):
        n = int(rng.integers(1, 4)) if case is not CaseTag.GENERAL else int(rng.integers(2, 4))
        lam, eta = random_costate(rng, n, case)
        T = rng.uniform(0.1, 4)
        t = rng.uniform(0, T)
        v0 = float(rng.choice([0.0, 0.5]))
        p = AdjointTerminal(lam, eta)
        assert classify(p) is case
        s = extremal_state(t, T, p, ModelParams(n=n, v0=v0))
        for r, v in (quad_state(t, T, lam, eta, v0), ode_state(t, T, lam, eta, v0)):
            np.testing.assert_allclose(s.r, r, atol=1e-9)
            np.testing.assert_allclose(s.v, v, atol=1e-9)


@settings(max_examples=100, deadline=None)
@given(
    st.lists(st.floats(-3, 3), min_size=4, max_size=4).filter(lambda x: np.linalg.norm(x) > 1e-3),
    st.floats(0.01, 5),
    st.floats(0, 1),
    st.floats(1e-3, 1e3),
)
def test_scale_invariance(p, T, frac, c):
    p = np.array(p)
    a = extremal_state(frac * T, T, AdjointTerminal.from_stacked(p), P2)
    b = extremal_state(frac * T, T, AdjointTerminal.from_stacked(c * p), P2)
    np.testing.assert_allclose(a.stacked(), b.stacked(), atol=1e-10)


@pytest.mark.parametrize(
    "lam, eta",
    [([1, 0], [0, 1]), ([0.3, -1], [2, 0.7]), ([1, 0], [-2, 0]), ([1, 2], [0.5, 1]), ([0, 0], [1, -1])],
)
def test_ode_residual(lam, eta):
    p = adj(lam, eta)
    T = 3.0
    h = 1e-5
    th = switching_time(T, p)
    for t in np.linspace(0.05, T - 0.05, 40):
        if th.exists and abs(t - th.theta) < 10 * h:
            continue
        a = extremal_state(t - h, T, p, P2)
        b = extremal_state(t + h, T, p, P2)
        c = extremal_state(t, T, p, P2)
        rdot = (b.r - a.r) / (2 * h)
        vdot = (b.v - a.v) / (2 * h)
        assert np.linalg.norm(rdot - c.v) <= 1e-6
        assert np.linalg.norm(vdot - (extremal_control(t, T, p) - c.v)) <= 1e-6


# case-boundary continuity ---------------------------------------------------

def continuity_gap(lam, eta_dir, c, T, delta, v0, target):
    """Sup over a time grid of |general - collinear| for eta rotated by delta."""
    eta = c * rotate(eta_dir, delta)
    p = AdjointTerminal(lam, eta)
    assert classify(p) is CaseTag.GENERAL
    params = ModelParams(n=2, v0=v0)
    gap = 0.0
    for t in np.linspace(0, T, 100):
        g = extremal_state(t, T, p, params).stacked()
        k = extremal_state(t, T, p, params, case=target).stacked()
        gap = max(gap, float(np.max(np.abs(g - k))))
    return gap


def test_continuity_same_direction():
    rng = np.random.default_rng(11)
    for _ in range(20):
        lam = rotate([1, 0], rng.uniform(0, 2 * math.pi)) * rng.uniform(0.2, 2)
        gap = continuity_gap(lam, lam / np.linalg.norm(lam), rng.uniform(0.1, 4), rng.uniform(0.1, 4), 1e-6,
                             0.5, CaseTag.SAME_COLLINEAR)
        assert gap <= 1e-5


def test_continuity_opposite_direction_rate():
    """Near anti-parallel costates the general formulas approach the bang-bang
    trajectory, but only at rate delta*log(1/delta): the control sweeps
    through a half turn in a time window of width ~delta around the switch."""
    lam = np.array([1.0, 0.0])
    for c, T in ((4.0, 3.0), (2.0, 2.0), (0.5, 3.0)):
        gaps = [continuity_gap(lam, -lam, c, T, d, 0.0, CaseTag.OPPOSITE_COLLINEAR) for d in (1e-4, 1e-6, 1e-8)]
        for d, g in zip((1e-4, 1e-6, 1e-8), gaps):
            assert g <= 3.0 * d * math.log(1 / d)
        assert gaps[0] > gaps[1] > gaps[2]


def test_near_collinear_general_matches_quadrature():
    lam = np.array([1.0, 0.0])
    for delta in (1e-3, 1e-5, 1e-7):
        eta = -2.0 * rotate(lam, delta)
        s = extremal_state(2.0, 2.0, AdjointTerminal(lam, eta), P2)
        r, v = quad_state(2.0, 2.0, lam, eta, 0.5)
        np.testing.assert_allclose(s.r, r, atol=1e-9)
        np.testing.assert_allclose(s.v, v, atol=1e-9)


# boundary sampling ----------------------------------------------------------

def test_boundary_sample_at_zero():
    dirs = subspace_directions(2, 7)
    dirs = np.column_stack([dirs, dirs])
    for s in boundary_sample(0.0, P2, dirs):
        np.testing.assert_array_equal(s.r, [0, 0])
        np.testing.assert_array_equal(s.v, [0.5, 0])


@pytest.mark.parametrize("T", [0.5, 1.0, 3.0])
def test_boundary_sample_balls(T):
    ang = np.linspace(0, 2 * np.pi, 50, endpoint=False)
    circ = np.column_stack([np.cos(ang), np.sin(ang)])
    zeros = np.zeros_like(circ)
    rs = np.array([s.r for s in boundary_sample(T, P2, np.hstack([circ, zeros]))])
    vs = np.array([s.v for s in boundary_sample(T, P2, np.hstack([zeros, circ]))])
    rc = np.array([0.5 * (1 - math.exp(-T)), 0])
    vc = np.array([0.5 * math.exp(-T), 0])
    np.testing.assert_allclose(np.linalg.norm(rs - rc, axis=1), T - 1 + math.exp(-T), atol=1e-12)
    np.testing.assert_allclose(np.linalg.norm(vs - vc, axis=1), 1 - math.exp(-T), atol=1e-12)


def test_boundary_sample_threads_preserve_order(monkeypatch):
    rng = np.random.default_rng(5)
    dirs = rng.normal(size=(200, 4))
    seq = boundary_sample(1.5, P2, dirs)
    monkeypatch.setenv("VISCID_THREADS", "4")
    par = boundary_sample(1.5, P2, dirs)
    for a, b in zip(seq, par):
        np.testing.assert_array_equal(a.stacked(), b.stacked())


def test_support_inequality():
    rng = np.random.default_rng(2)
    for T, v0, n in ((0.7, 0.0, 2), (2.0, 0.5, 2), (1.3, 0.3, 3)):
        dirs = rng.normal(size=(80, 2 * n))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        pts = np.array([s.stacked() for s in boundary_sample(T, ModelParams(n=n, v0=v0), dirs)])
        scores = dirs @ pts.T  # scores[i, j] = (p_i, s(q_j))
        assert np.all(np.diag(scores)[:, None] >= scores - 1e-12)


@pytest.mark.parametrize("label, coords", [("r1r2", (0, 1)), ("r1v2", (0, 3)), ("v1v2", (2, 3)), ("v2", (3,))])
def test_parse_subspace(label, coords):
    assert parse_subspace(label, 2) == coords


@pytest.mark.parametrize("label", ["r3", "x1", "r1r1", "", "r1 v2", "r0"])
def test_parse_subspace_rejects(label):
    with pytest.raises(ValidationError):
        parse_subspace(label, 2)


def test_projection_circles():
    pts = projection_boundary(1.0, ModelParams(n=2), (0, 1), 360)
    np.testing.assert_allclose(np.linalg.norm(pts, axis=1), math.exp(-1), atol=1e-9)
    pts = projection_boundary(1.0, P2, (2, 3), 360)
    c = np.array([0.5 * math.exp(-1), 0])
    np.testing.assert_allclose(np.linalg.norm(pts - c, axis=1), 1 - math.exp(-1), atol=1e-9)


def test_projection_angle_order():
    pts = projection_boundary(1.0, ModelParams(n=2), (0, 1), 24)
    ang = np.unwrap(np.arctan2(pts[:, 1], pts[:, 0]))
    assert np.all(np.diff(ang) > 0)


@pytest.mark.parametrize("coords", [(0, 2), (0, 3), (1, 2)])
def test_projections_convex_and_nested(coords):
    params = ModelParams(n=2)
    curves = [projection_boundary(T, params, coords, 180) for T in (0.5, 1.0, 1.5, 2.0)]
    for pts in curves:
        hull = ConvexHull(pts)
        # every sample lies on the hull boundary; corners are hit by many costates
        offsets = pts @ hull.equations[:, :-1].T + hull.equations[:, -1]
        np.testing.assert_allclose(offsets.max(axis=1), 0.0, atol=1e-12)
    for inner, outer in zip(curves[:-1], curves[1:]):
        assert np.all(Delaunay(outer).find_simplex(inner) >= 0)


def test_projection_higher_dim_deterministic():
    params = ModelParams(n=3, v0=0.2)
    a = projection_boundary(1.2, params, (0, 1, 2), 64, seed=3)
    b = projection_boundary(1.2, params, (0, 1, 2), 64, seed=3)
    np.testing.assert_array_equal(a, b)
    c = np.array([0.2 * (1 - math.exp(-1.2)), 0, 0])
    np.testing.assert_allclose(np.linalg.norm(a - c, axis=1), 1.2 - 1 + math.exp(-1.2), atol=1e-12)


def test_projection_rejects_bad_input():
    with pytest.raises(ValidationError):
        projection_boundary(1.0, P2, (0, 4), 10)
    with pytest.raises(ValidationError):
        projection_boundary(1.0, P2, (0, 1), 2)
    with pytest.raises(ValidationError):
        extremal_state(2.0, 1.0, adj([1, 0], [0, 1]), P2)
