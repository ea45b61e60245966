import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from beating_ldp import implicit_curve as ic
from beating_ldp.fixtures import load_fixtures

SQRT2 = math.sqrt(2.0)


def g_scan_roots(tau, lam, lo, hi, step=1e-6):
    """Sign changes of xi h(xi)^2 - 2 tau lam^2 on a uniform grid, refined by bisection."""
    xi = np.arange(lo, hi, step)
    g = xi * ic.h_eval(xi) ** 2 - 2.0 * tau * lam * lam
    idx = np.flatnonzero(np.sign(g[:-1]) * np.sign(g[1:]) < 0)
    roots = []
    for i in idx:
        a, b = xi[i], xi[i + 1]
        for _ in range(60):
            m = 0.5 * (a + b)
            gm = m * ic.h_eval(m) ** 2 - 2.0 * tau * lam * lam
            if np.sign(gm) == np.sign(g[i]):
                a = m
            else:
                b = m
        roots.append(0.5 * (a + b))
    return np.array(roots)


# ---------------------------------------------------------------------------
# h and its one-sided derivative


@pytest.mark.parametrize("xi, expected", [(0.0, 1.0), (math.pi / 4, SQRT2), (math.pi / 2, 1.0)])
def test_h_eval_values(xi, expected):
    assert ic.h_eval(xi) == pytest.approx(expected, abs=1e-15)


def test_h_deriv_smooth_max_and_kink():
    assert ic.h_deriv(math.pi / 4, "right") == pytest.approx(0.0, abs=1e-15)
    assert ic.h_deriv(math.pi / 2, "right") == pytest.approx(1.0, abs=1e-15)
    assert ic.h_deriv(math.pi / 2, "left") == pytest.approx(-1.0, abs=1e-15)


def test_h_deriv_against_finite_difference():
    xi, step = 3 * math.pi / 8, 1e-7
    fd = (ic.h_eval(xi + step) - ic.h_eval(xi - step)) / (2 * step)
    assert ic.h_deriv(xi, "right") == pytest.approx(fd, abs=1e-7)
    assert ic.h_deriv(xi, "right") == pytest.approx(-0.5411961001461969, abs=1e-12)
    assert ic.h_deriv(xi, "left") == ic.h_deriv(xi, "right")


@given(st.floats(-1e3, 1e3, allow_nan=False))
def test_h_bounds_and_period(xi):
    h = ic.h_eval(xi)
    assert 1.0 - 1e-15 <= h <= SQRT2 + 1e-15
    assert ic.h_eval(xi + math.pi / 2) == pytest.approx(h, abs=1e-12)


@given(st.integers(-20, 20))
def test_kink_sides_differ_by_two(k):
    xi = k * math.pi / 2
    assert ic.h_deriv(xi, "right") - ic.h_deriv(xi, "left") == pytest.approx(2.0, abs=1e-12)


# ---------------------------------------------------------------------------
# curve parametrisation, births and collisions


def test_tau_of_xi_values():
    assert ic.tau_of_xi(math.pi / 2, 1.0) == pytest.approx(math.pi / 4, rel=1e-15)
    assert ic.tau_of_xi(math.pi / 4, 1.0) == pytest.approx(math.pi / 4, rel=1e-15)
    assert ic.tau_of_xi(math.pi, 2.0) == pytest.approx(math.pi / 8, rel=1e-15)


def test_first_collision_against_sign_scan():
    lo, hi = math.pi / 4, math.pi / 2
    xi = np.arange(lo + 1e-6, hi, 1e-6)
    f = ic.h_eval(xi) + 2 * xi * (np.cos(xi) - np.sin(xi))
    i = np.flatnonzero(np.sign(f[:-1]) != np.sign(f[1:]))
    assert i.size == 1
    a, b = xi[i[0]], xi[i[0] + 1]
    for _ in range(60):
        m = 0.5 * (a + b)
        if (ic.h_eval(m) + 2 * m * (math.cos(m) - math.sin(m))) > 0:
            a = m
        else:
            b = m
    assert ic.collision_xi(1) == pytest.approx(0.5 * (a + b), abs=1e-12)
    assert ic.collision_xi(1) == pytest.approx(1.1847503659236949, abs=1e-13)


def test_collision_offset_at_large_index():
    j = 10_000
    s = ic.collision_xi(j) - math.pi * (j - 0.5) / 2
    assert 1 / (SQRT2 * math.pi * j) <= s <= SQRT2 / (math.pi * (j - 0.5))
    assert 2.25e-5 < s < 4.51e-5


def test_collision_is_local_max_of_tau():
    for j in (1, 2, 7, 40):
        x = ic.collision_xi(j)
        t = ic.tau_of_xi(x, 1.0)
        assert t > ic.tau_of_xi(x - 1e-4, 1.0) and t > ic.tau_of_xi(x + 1e-4, 1.0)
        assert math.pi * (j - 0.5) / 2 < x < math.pi * j / 2


def test_branch_table_examples():
    t1 = ic.build_branch_table(1.0, 1)
    assert t1.births == ((1, math.pi / 2, math.pi / 4),)
    j, x, tau = t1.collisions[0]
    assert j == 1 and x == pytest.approx(1.1847503659236949, abs=1e-13)
    assert tau == pytest.approx(ic.tau_of_xi(x, 1.0), rel=1e-14)
    t3 = ic.build_branch_table(1.0, 3)
    np.testing.assert_allclose(t3.birth_times(), [math.pi / 4, math.pi / 2, 3 * math.pi / 4], rtol=1e-15)
    with pytest.raises(ValueError):
        ic.build_branch_table(1.0, 0)


def test_branch_table_invariants():
    table = ic.build_branch_table(1.7, 200)
    j = np.arange(1, 201)
    tau_inf = table.collision_times()
    assert np.all(np.diff(tau_inf) > 0)
    assert np.all(ic.dip_time(j, 1.7) < tau_inf) and np.all(tau_inf < ic.dip_time(j + 1, 1.7))
    xi = np.array([c[1] for c in table.collisions])
    assert np.all(math.pi * (j - 0.5) / 2 < xi) and np.all(xi < math.pi * j / 2)


def test_collision_gap_bounded_uniformly():
    j0 = load_fixtures()["j0"]
    j = np.arange(j0, 10_001)
    for lam in (0.5, 1.0, 3.0):
        scaled = j * lam**2 * (ic.collision_time(j, lam) - ic.dip_time(j, lam))
        assert scaled.max() < 0.25
        # the scaled gap tends to 1/(2 pi)
        assert scaled[-1] == pytest.approx(1 / (2 * math.pi), rel=1e-3)


# ---------------------------------------------------------------------------
# enumeration and the minimal solution


def test_enumeration_matches_grid_scan_at_tau_5():
    sols = ic.enumerate_solutions(5.0, 1.0)
    roots = g_scan_roots(5.0, 1.0, 5.0, 10.0)
    assert len(sols) == len(roots)
    np.testing.assert_allclose([s.xi for s in sols], roots, atol=1e-10)
    np.testing.assert_allclose([s.y for s in sols], np.sqrt(roots / 10.0), atol=1e-10)


def test_single_root_before_first_birth():
    sols = ic.enumerate_solutions(math.pi / 8, 1.0)
    roots = g_scan_roots(math.pi / 8, 1.0, math.pi / 8, math.pi / 4 + 1e-3)
    assert len(sols) == 1 and roots.size == 1
    assert ic.minimal_solution_Y(math.pi / 8, 1.0).xi == pytest.approx(roots[0], abs=1e-10)


def test_small_tau_single_solution_near_lam():
    sols = ic.enumerate_solutions(1e-8, 1.0)
    assert len(sols) == 1 and sols[0].y == pytest.approx(1.0, abs=1e-7)


def test_birth_point_is_degenerate():
    tau = ic.birth_time(3, 1.0)
    sols = ic.enumerate_solutions(float(tau), 1.0)
    births = [s for s in sols if s.degenerate == (6, 7)]
    assert len(births) == 1 and births[0].y == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("j", [1, 2, 5, 50])
def test_minimal_solution_at_dip(j):
    tau = float(ic.dip_time(j, 1.0))
    assert ic.minimal_solution_Y(tau, 1.0).y == pytest.approx(1 / SQRT2, abs=1e-12)


def test_minimal_solution_left_continuous_at_collision():
    tau = ic.collision_time(1, 1.0)
    y_at = ic.minimal_solution_Y(tau, 1.0)
    assert y_at.branch_index in (1, 2)
    before = ic.minimal_solution_Y(tau - 1e-9, 1.0)
    assert y_at.y == pytest.approx(before.y, abs=1e-4)


@settings(max_examples=60, deadline=None)
@given(st.floats(1e-3, 80.0), st.floats(0.3, 3.0))
def test_enumeration_properties(tau, lam):
    sols = ic.enumerate_solutions(tau, lam)
    y = np.array([s.y for s in sols])
    assert y.size >= 1
    assert np.max(np.abs(y * ic.h_eval(2 * tau * y * y) - lam)) < 10 * ic.ROOT_TOL * max(1.0, lam)
    assert np.all(y >= lam / SQRT2 - ic.ROOT_TOL) and np.all(y <= lam + ic.ROOT_TOL)
    assert np.all(np.diff(y) > 0)
    np.testing.assert_allclose([s.xi for s in sols], 2 * tau * y * y, rtol=1e-11)


def test_branch_order_stable_along_sweep():
    prev = None
    for tau in np.linspace(0.05, 12.0, 600):
        sols = ic.enumerate_solutions(float(tau), 1.0)
        idx = [s.branch_index for s in sols]
        assert idx == sorted(idx)
        if prev is not None:
            common = {i: s.y for i, s in zip(idx, sols)}
            shared = [i for i in prev if i in common]
            order_now = sorted(shared, key=lambda i: common[i])
            order_before = sorted(shared, key=lambda i: prev[i])
            assert order_now == order_before
        prev = {s.branch_index: s.y for s in sols}


@pytest.mark.parametrize("j", [2, 3, 6])
def test_monotone_structure(j):
    lam = 1.0
    tau_dip = float(ic.dip_time(j, lam))
    tau_fold = ic.collision_time(j, lam)
    tau_born = float(ic.birth_time(j - 1, lam))
    # branch 2j - 1 exists from its birth (2(j-1) + 1) up to the fold
    grid = np.linspace(tau_born + 1e-6, tau_fold - 1e-7, 400)
    y = np.array([ic.branch_value(2 * j - 1, float(t), lam).y for t in grid])
    falling = grid < tau_dip
    assert np.all(np.diff(y[falling]) <= 1e-12)
    assert np.all(np.diff(y[~falling]) >= -1e-12)
    y_even = np.array([ic.branch_value(2 * j, float(t), lam).y for t in grid[grid > ic.birth_time(j, lam) + 1e-6]])
    assert np.all(np.diff(y_even) <= 1e-12)


def test_lambda_perturbation_monotone_and_lipschitz():
    j, lam0 = 4, 1.0
    # both branches live on [birth_time(j), collision_time(j)]
    tau = 0.5 * (float(ic.birth_time(j, lam0)) + float(ic.dip_time(j, lam0)))
    slopes = []
    for h in (1e-2, 1e-3, 1e-4):
        lams = lam0 + h * np.arange(-3, 4)
        lower = np.array([ic.branch_value(2 * j - 1, tau, lam).y for lam in lams])
        upper = np.array([ic.branch_value(2 * j, tau, lam).y for lam in lams])
        assert np.all(np.diff(lower) >= 0)
        assert np.all(np.diff(upper) <= 0)
        slopes.append(max(np.max(np.abs(np.diff(lower))), np.max(np.abs(np.diff(upper)))) / h)
    assert max(slopes) < 10 * min(slopes)


def test_branch_value_missing_outside_lifetime():
    v = ic.branch_value(9, 0.5, 1.0)
    assert not v.exists and math.isnan(v.y)


# ---------------------------------------------------------------------------
# rate function


def test_rate_small_and_large_tau():
    assert ic.rate_J(1.0, 1e-4) == pytest.approx(1.0, abs=1e-3)
    assert ic.rate_J(1.0, float(ic.dip_time(10_000, 1.0))) == pytest.approx(1 / SQRT2, abs=1e-12)
    c_tilde = load_fixtures()["C_tilde"]
    for j in (100, 1000, 10_000):
        tau = float(ic.dip_time(j, 1.0))
        assert abs(ic.rate_J(1.0, tau) - 1 / SQRT2) <= 2 * c_tilde / j


def test_rate_at_first_collision_is_right_limit():
    tau = ic.collision_time(1, 1.0)
    J, jump = ic.rate_with_jump(1.0, tau)
    assert jump
    after = min(s.y for s in ic.enumerate_solutions(tau + 1e-9, 1.0))
    y1 = ic.branch_value(1, tau, 1.0).y
    assert J == pytest.approx(after, abs=1e-8)
    assert J > y1 + 0.1
    assert J == pytest.approx(ic.branch_value(3, tau, 1.0).y, abs=1e-14)


@pytest.mark.parametrize("j", [1, 3, 12])
def test_rate_right_continuous(j):
    tau = ic.collision_time(j, 1.0)
    J = ic.rate_J(1.0, tau)
    diffs = [abs(ic.rate_J(1.0, tau + d) - J) for d in (1e-3, 1e-5, 1e-7)]
    assert diffs[0] > diffs[1] > diffs[2]
    assert diffs[2] < 1e-6


@settings(max_examples=80, deadline=None)
@given(st.floats(0.1, 5.0), st.floats(1e-4, 200.0))
def test_rate_within_range(z0, tau):
    J = ic.rate_J(z0, tau)
    assert z0 / SQRT2 - 1e-12 <= J <= z0 + 1e-12


def test_rate_scaling_in_threshold():
    # J(z0, tau) = z0 J(1, z0^2 tau)
    for tau in (0.3, 2.0, 17.0):
        assert ic.rate_J(2.0, tau / 4) == pytest.approx(2 * ic.rate_J(1.0, tau), rel=1e-12)


# ---------------------------------------------------------------------------
# corrections near the dips


def test_mu_large_index_at_window_edge():
    sol = ic.mu_fixed_point(10**6, math.pi, "minus")
    assert 0.0 <= sol.mu_minus <= 4 / math.sqrt(10**6)


def test_mu_plus_bounds_at_j100():
    sol = ic.mu_fixed_point(100, 0.0, "plus")
    assert 1 / (100 * math.pi) <= sol.mu_plus <= 0.4


@pytest.mark.parametrize("j", [100, 1000])
def test_mu_agrees_with_direct_bisection(j):
    centre = math.pi * j / 2 - math.pi / 4
    for zeta in np.linspace(-math.pi, math.pi, 33):
        sol = ic.mu_fixed_point(j, float(zeta))
        lo, hi = ic.mu_direct_xi(j, float(zeta))
        assert abs(centre - sol.mu_minus - lo) < 1e-9
        assert abs(centre + sol.mu_plus - hi) < 1e-9
        b = ic.mu_bounds(j, float(zeta))
        assert b["minus"][0] <= sol.mu_minus + 1e-15 and sol.mu_minus <= b["minus"][1]
        assert b["plus"][0] <= sol.mu_plus <= b["plus"][1]
        assert sol.max_ratio < 0.9


def test_mu_rejects_bad_input():
    with pytest.raises(ValueError):
        ic.mu_fixed_point(0, 0.0)
    with pytest.raises(ValueError):
        ic.mu_fixed_point(10, 4.0)


def test_j0_fixture_is_reproduced():
    from beating_ldp.calibration import mu_window_ok

    j0 = load_fixtures()["j0"]
    assert all(mu_window_ok(j0).values())
    assert not all(mu_window_ok(j0 - 1).values())


# ---------------------------------------------------------------------------
# spacing of the lowest branches


def test_gap_at_tau_50_matches_grid_scan():
    tau = float(ic.dip_time(50, 1.0))
    roots = g_scan_roots(tau, 1.0, tau, 2 * tau + 1e-3, step=2e-6)
    y = np.sort(np.sqrt(roots / (2 * tau)))[:4]
    j, gap = ic.branch_gap(tau, 1.0)
    assert j == 50
    assert gap == pytest.approx((y[1] - y[0]) + (y[3] - y[2]), abs=1e-9)
    _, bound, ok = ic.branch_gap_lower_bound_check(tau, 1.0)
    assert ok and bound > 0


def test_scaled_gap_stays_away_from_zero():
    c = load_fixtures()["gap_constant"]
    values = []
    for j in (50, 100, 200, 500):
        tau = float(ic.dip_time(j, 1.0))
        _, gap = ic.branch_gap(tau, 1.0)
        values.append(gap * tau * tau)
    assert min(values) >= 2 * c * (1 - 1e-9)


def test_gap_check_rejects_early_windows():
    with pytest.raises(ValueError):
        ic.branch_gap_lower_bound_check(2.0, 1.0)


def test_invalid_inputs():
    with pytest.raises(ValueError):
        ic.enumerate_solutions(-1.0, 1.0)
    with pytest.raises(ValueError):
        ic.rate_J(1.0, 0.0)
