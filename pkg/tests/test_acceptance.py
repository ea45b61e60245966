"""Headline acceptance criteria, each at its stated tolerance and runtime budget."""

import math
import time

import numpy as np
import pytest

from beating_ldp import effective_dynamics as ed
from beating_ldp import implicit_curve as ic
from beating_ldp import spectral_pde as sp
from beating_ldp import tail_probability as tp
from beating_ldp.calibration import third_bound_ok
from beating_ldp.fixtures import load_fixtures

FIX = load_fixtures()
SWEEP_EPS = [0.3, 0.1, 0.03, 0.01]
UNEQUAL = tp.VariancePair(2.0, 1.0)


def test_implicit_curve_structure(criterion):
    start = time.perf_counter()
    j0 = FIX["j0"]
    j = np.arange(j0, 10_001)
    violations = int(np.count_nonzero(~third_bound_ok(j)))
    tau_dip = ic.dip_time(j, 1.0)
    tau_inf = ic.collision_time(j, 1.0)
    ordered = bool(np.all(tau_dip < tau_inf) and np.all(tau_inf < ic.dip_time(j + 1, 1.0)))
    scaled = j * (tau_inf - tau_dip)
    ratio = float(scaled.max() / scaled[0])
    elapsed = time.perf_counter() - start
    ok = violations == 0 and ordered and ratio <= 2.0 and elapsed <= 30.0
    assert criterion(
        "implicit-curve structure",
        ok,
        f"sandwich violations={violations}, ordered={ordered}, max/j0 ratio={ratio:.4f}, {elapsed:.2f}s",
    )


def test_rate_function_limits(criterion):
    start = time.perf_counter()
    c_tilde = FIX["C_tilde"]
    small = abs(ic.rate_J(1.0, 1e-4) - 1.0)
    gaps = {j: abs(ic.rate_J(1.0, float(ic.dip_time(j, 1.0))) - 1 / math.sqrt(2)) for j in (100, 1000, 10_000)}
    elapsed = time.perf_counter() - start
    ok = small <= 1e-3 and all(g <= 2 * c_tilde / j for j, g in gaps.items()) and elapsed <= 10.0
    detail = f"|J(1,1e-4)-1|={small:.2e}, " + ", ".join(f"j*gap(j={j})={g * j:.2e}" for j, g in gaps.items())
    assert criterion("rate-function limits", ok, f"{detail} (bound 2C~={2 * c_tilde:.4f}), {elapsed:.2f}s")


def test_mu_fixed_point(criterion):
    start = time.perf_counter()
    worst = 0.0
    violations = 0
    for j in (100, 1000):
        centre = math.pi * j / 2 - math.pi / 4
        for zeta in np.linspace(-math.pi, math.pi, 33):
            sol = ic.mu_fixed_point(j, float(zeta))
            d_minus, d_plus = ic.mu_direct_xi(j, float(zeta))
            worst = max(worst, abs(centre - sol.mu_minus - d_minus), abs(centre + sol.mu_plus - d_plus))
            b = ic.mu_bounds(j, float(zeta))
            violations += not (b["minus"][0] <= sol.mu_minus + 1e-15 and sol.mu_minus <= b["minus"][1])
            violations += not (b["plus"][0] <= sol.mu_plus <= b["plus"][1])
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-9 and violations == 0 and elapsed <= 5.0
    assert criterion("mu fixed point", ok, f"max xi difference={worst:.2e}, bound violations={violations}, {elapsed:.2f}s")


def test_reduced_dynamics_oracle(criterion):
    data = ed.InitialData(1.0, 0.0, 0.1)
    t_end = 0.016 * math.ceil(10 * math.pi / (2 * data.J1) / 0.016)
    errors = {}
    drift = {}
    for dt in (0.016, 0.008, 0.004):
        traj = ed.integrate_reduced(data, t_end, dt)
        end = traj.state(len(traj.t) - 1)
        ref = ed.closed_form_state(data, end.t)
        errors[dt] = math.hypot(abs(end.u1 - ref.u1), abs(end.u_minus1 - ref.u_minus1))
        if dt == 0.004:
            q = traj.conserved()
            j1 = q["J1"][0]
            drift = {name: float(np.max(np.abs(q[name] - q[name][0]))) for name in ("J1", "K1", "G")}
            # K1 vanishes for this data, so its drift is measured against J1
            drift = {"J1": drift["J1"] / j1, "K1": drift["K1"] / j1, "G": drift["G"] / abs(q["G"][0])}
    orders = [math.log2(errors[a] / errors[b]) for a, b in ((0.016, 0.008), (0.008, 0.004))]
    ok = (
        errors[0.004] <= 1e-8 * data.eps
        and all(3.8 <= p <= 4.2 for p in orders)
        and all(v <= 1e-9 for v in drift.values())
    )
    detail = (
        f"terminal error={errors[0.004]:.2e} (<= {1e-8 * data.eps:.0e}), orders={[round(p, 3) for p in orders]}, "
        + ", ".join(f"{k} drift={v:.1e}" for k, v in drift.items())
    )
    assert criterion("reduced dynamics oracle", ok, detail)


def test_pde_conservation_and_beating(criterion):
    data = ed.InitialData(1.0, 0.0, 0.1)
    traj = sp.solve_pde(sp.PdeRunConfig(N=64, dt=1e-3, t_end=100.0, sample_every=100), data)
    m, e = sp.relative_drift(traj.mass), sp.relative_drift(traj.energy)
    period = math.pi / (2 * data.eps**2 * abs(data.alpha) ** 2)
    beat = sp.solve_pde(sp.PdeRunConfig(N=64, dt=2e-3, t_end=2.2 * period, sample_every=50), data)
    measured = sp.estimate_period(beat.t, np.abs(beat.coeffs[:, 33]) ** 2)
    rel = abs(measured / period - 1)
    ok = m <= 1e-10 and e <= 1e-8 and rel <= 0.02
    assert criterion(
        "PDE conservation and beating",
        ok,
        f"mass drift={m:.1e}, energy drift={e:.1e}, period {measured:.3f} vs {period:.3f} ({rel:.2%})",
    )


def test_normal_form_gap_scaling(criterion):
    start = time.perf_counter()
    eps = np.array([0.2, 0.1, 0.05])
    gaps, tails = [], []
    for e in eps:
        # fixed tau = eps^2 t = 1
        cfg = sp.PdeRunConfig(N=64, dt=1e-3, t_end=1.0 / e**2, sample_every=100)
        g, t = sp.compare_to_normal_form(cfg, ed.InitialData(1.0, 0.5, float(e)))
        gaps.append(g)
        tails.append(t)
    slope_gap = float(np.polyfit(np.log(eps), np.log(gaps), 1)[0])
    slope_tail = float(np.polyfit(np.log(eps), np.log(tails), 1)[0])
    elapsed = time.perf_counter() - start
    ok = slope_gap >= 1.4 and slope_tail >= 1.4 and elapsed <= 300.0
    assert criterion(
        "normal-form gap scaling",
        ok,
        f"slope sup_gap={slope_gap:.3f}, slope tail_mass={slope_tail:.3f}, {elapsed:.1f}s",
    )


def _rayleigh_mc(stat, var, z, n, seed):
    rng = np.random.default_rng(seed)
    hits = 0
    for m in [1 << 20] * (n >> 20) + [n % (1 << 20)]:
        a = np.sqrt(var.sigma_a2 * rng.standard_exponential(m))
        b = np.sqrt(var.sigma_b2 * rng.standard_exponential(m))
        hits += int(np.count_nonzero(stat(a, b) > z))
    p = hits / n
    return p, math.sqrt(p * (1 - p) / n)


def test_exact_tail_formulas(criterion):
    worst = 0.0
    seed = 100
    for var in (tp.VariancePair(1.0, 1.0), UNEQUAL):
        for z in (1.0, 2.0, 3.0):
            for fn, stat in (
                (tp.l2_tail, lambda a, b: math.sqrt(2) * np.sqrt(a * a + b * b)),
                (tp.l1_tail, lambda a, b: a + b),
            ):
                seed += 1
                p, se = _rayleigh_mc(stat, var, z, 10_000_000, seed)
                worst = max(worst, abs(fn(z, var) - p) / se)
    assert criterion("exact tail formulas", worst <= 3.0, f"max |closed form - MC| = {worst:.2f} standard errors")


def test_region_inclusion(criterion):
    c1 = FIX["C1"]
    total = 0
    for i, (tau, eps) in enumerate((t, e) for t in (0.5, 5.0, 50.0) for e in (0.3, 0.1, 0.03)):
        total += tp.inclusion_violations(tau, eps, 1.0, c1, n=100_000, seed=1000 + i)
    assert criterion("region inclusion", total == 0, f"violations={total} over 9 x 1e5 samples, C1={c1}")


@pytest.fixture(scope="module")
def sweeps():
    start = time.perf_counter()
    out = {
        "a": tp.ldp_sweep(tp.RegimeSpec(1.0, 0.3, 0.0), UNEQUAL, SWEEP_EPS),
        "b": tp.ldp_sweep(tp.RegimeSpec(1.0, 0.3, 1.6), UNEQUAL, SWEEP_EPS),
        "c": tp.ldp_sweep(tp.RegimeSpec(1.0, 0.3, 0.0), tp.VariancePair(1.0, 1.0), SWEEP_EPS),
    }
    return out, time.perf_counter() - start


def _sweep_detail(rows):
    return ", ".join(f"eps={r.eps}: {r.scaled:.4f}" for r in rows)


def test_ldp_sub_resonant(criterion, sweeps):
    out, elapsed = sweeps
    rows = out["a"]
    gaps = [r.gap for r in rows]
    rel = gaps[-1] / abs(rows[-1].target_rate)
    ok = all(a > b for a, b in zip(gaps, gaps[1:])) and rel <= 0.05 and elapsed <= 600.0
    assert criterion(
        "LDP sub-resonant (target -1/3)", ok, f"{_sweep_detail(rows)}; final gap {rel:.1%} of |target|"
    )


def test_ldp_super_resonant(criterion, sweeps):
    rows = sweeps[0]["b"]
    rel = rows[-1].gap / abs(rows[-1].target_rate)
    assert criterion(
        "LDP super-resonant (target -1/4)", rel <= 0.05, f"{_sweep_detail(rows)}; final gap {rel:.1%} of |target|"
    )


def test_ldp_equal_variance(criterion, sweeps):
    rows = sweeps[0]["c"]
    rel = rows[-1].gap / abs(rows[-1].target_rate)
    assert criterion(
        "LDP equal variance (target -1/2)", rel <= 0.05, f"{_sweep_detail(rows)}; final gap {rel:.1%} of |target|"
    )


def test_transient_bracketing(criterion):
    # gamma = 2(1 - delta) with c_time = 1 keeps tau = 1 for every eps
    rows = tp.ldp_sweep(tp.RegimeSpec(1.0, 0.3, 1.4, c_time=1.0), UNEQUAL, SWEEP_EPS)
    slack = 0.0125
    last = rows[-1]
    lo = -ic.rate_J(1.0, 1.0) ** 2 / 2 - slack
    hi = -0.25 + slack
    ok = lo <= last.scaled <= hi
    assert criterion(
        "transient bracketing",
        ok,
        f"{_sweep_detail(rows)}; need {lo:.4f} <= {last.scaled:.4f} <= {hi:.4f}",
    )
