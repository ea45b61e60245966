"""Desk-scale invariant suites, one per module, used by ``beating-ldp verify``.

Every check returns ``{"pass": bool, "measured": {...}}``; the report contains no
timings, so it is byte-identical between runs with the same seed.
"""

from __future__ import annotations

import math
import tempfile
from pathlib import Path
from typing import Callable

import numpy as np

from . import implicit_curve as ic
from .fixtures import load_fixtures, provenance

Check = Callable[[int], dict]


def _rec(ok, **measured) -> dict:
    return {"pass": bool(ok), "measured": {k: _plain(v) for k, v in measured.items()}}


def _plain(v):
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    return v


# ---------------------------------------------------------------------------
# implicit curve


def check_h_bounds(seed: int) -> dict:
    rng = np.random.Generator(np.random.Philox(seed))
    xi = rng.uniform(-50.0, 50.0, 10_000)
    h = ic.h_eval(xi)
    per = np.max(np.abs(ic.h_eval(xi + ic.HALF_PI) - h))
    ok = h.min() >= 1.0 - 1e-15 and h.max() <= math.sqrt(2.0) + 1e-15 and per < 1e-12
    return _rec(ok, h_min=float(h.min()), h_max=float(h.max()), periodicity_error=float(per))


def check_collision_structure(seed: int) -> dict:
    j0 = load_fixtures()["j0"]
    j = np.arange(1, 10_001)
    s = ic.collision_offset(j)
    lo = 1.0 / (math.sqrt(2.0) * math.pi * j)
    hi = math.sqrt(2.0) / (math.pi * (j - 0.5))
    sel = j >= j0
    sandwich_viol = int(np.count_nonzero(~((lo <= s) & (s <= hi))[sel]))
    tau_inf = ic.collision_time(j, 1.0)
    order_ok = bool(np.all(ic.dip_time(j, 1.0) < tau_inf) and np.all(tau_inf < ic.dip_time(j + 1, 1.0)))
    scaled = j * (tau_inf - ic.dip_time(j, 1.0))
    ratio = float(scaled[sel].max() / scaled[j0 - 1])
    ok = sandwich_viol == 0 and order_ok and ratio <= 2.0
    return _rec(ok, sandwich_violations=sandwich_viol, ordering=order_ok, max_over_j0_ratio=ratio)


def check_rate_limits(seed: int) -> dict:
    c_tilde = load_fixtures()["C_tilde"]
    small = abs(ic.rate_J(1.0, 1e-4) - 1.0)
    gaps = {str(j): abs(ic.rate_J(1.0, float(ic.dip_time(j, 1.0))) - 1.0 / math.sqrt(2.0)) for j in (100, 1000, 10_000)}
    ok = small <= 1e-3 and all(g <= 2.0 * c_tilde / int(j) for j, g in gaps.items())
    return _rec(ok, small_tau_error=small, dip_gaps=gaps)


def check_enumeration_residuals(seed: int) -> dict:
    rng = np.random.Generator(np.random.Philox(seed))
    worst_res = 0.0
    range_ok = order_ok = True
    for tau in rng.uniform(0.01, 60.0, 40):
        lam = float(rng.uniform(0.5, 2.0))
        sols = ic.enumerate_solutions(float(tau), lam)
        y = np.array([s.y for s in sols])
        worst_res = max(worst_res, float(np.max(np.abs(y * ic.h_eval(2.0 * tau * y * y) - lam))))
        range_ok &= bool(np.all(y >= lam / math.sqrt(2.0) - 1e-12) and np.all(y <= lam + 1e-12))
        order_ok &= bool(np.all(np.diff(y) > 0))
    return _rec(worst_res < 1e-11 and range_ok and order_ok, max_residual=worst_res, range=range_ok, ordered=order_ok)


def check_mu_consistency(seed: int) -> dict:
    worst = 0.0
    violations = 0
    for j in (100, 1000):
        centre = math.pi * j / 2.0 - math.pi / 4.0
        for zeta in np.linspace(-math.pi, math.pi, 33):
            sol = ic.mu_fixed_point(j, float(zeta))
            d_minus, d_plus = ic.mu_direct_xi(j, float(zeta))
            worst = max(worst, abs(centre - sol.mu_minus - d_minus), abs(centre + sol.mu_plus - d_plus))
            b = ic.mu_bounds(j, float(zeta))
            violations += not (b["minus"][0] <= sol.mu_minus + 1e-15 and sol.mu_minus <= b["minus"][1])
            violations += not (b["plus"][0] <= sol.mu_plus <= b["plus"][1])
    return _rec(worst <= 1e-9 and violations == 0, max_xi_difference=worst, bound_violations=violations)


def check_gap_bound(seed: int) -> dict:
    fails = 0
    worst = math.inf
    for j in (5, 10, 50, 200):
        for u in (0.1, 0.5, 1.0):
            tau = ic.collision_time(j - 1, 1.0) + u * (ic.collision_time(j, 1.0) - ic.collision_time(j - 1, 1.0))
            gap, bound, ok = ic.branch_gap_lower_bound_check(tau, 1.0)
            fails += not ok
            worst = min(worst, gap / bound)
    return _rec(fails == 0, failures=fails, min_gap_over_bound=worst)


# ---------------------------------------------------------------------------
# effective dynamics


def check_reduced_oracle(seed: int) -> dict:
    from .effective_dynamics import InitialData, closed_form_state, integrate_reduced

    data = InitialData(1.0, 0.0, 0.1)
    t_end = 10.0 * math.pi / (2.0 * data.J1)
    traj = integrate_reduced(data, t_end, 0.004)
    end = traj.state(len(traj.t) - 1)
    ref = closed_form_state(data, end.t)
    err = math.hypot(abs(end.u1 - ref.u1), abs(end.u_minus1 - ref.u_minus1))
    q = traj.conserved()
    drift = float(np.max(np.abs(q["J1"] - q["J1"][0])) / q["J1"][0])
    return _rec(err <= 1e-8 * data.eps and drift <= 1e-9, terminal_error=err, J1_drift=drift)


def check_hamiltonian_values(seed: int) -> dict:
    from .effective_dynamics import ReducedState, reduced_hamiltonian_G

    vals = [reduced_hamiltonian_G(ReducedState(a, b)) for a, b in ((0, 0), (1, 0), (1, 1))]
    return _rec(vals == [0.0, 1.0, 10.0], values=vals)


def check_amplitude_sandwich(seed: int) -> dict:
    rng = np.random.Generator(np.random.Philox(seed))
    z = rng.standard_normal((4, 10_000))
    u1, um1 = z[0] + 1j * z[1], z[2] + 1j * z[3]
    j1 = np.abs(u1) ** 2 + np.abs(um1) ** 2
    s = np.abs(u1) + np.abs(um1)
    ok = bool(np.all(np.sqrt(j1) <= s * (1 + 1e-15)) and np.all(s <= math.sqrt(2.0) * np.sqrt(j1) * (1 + 1e-15)))
    return _rec(ok, samples=10_000)


# ---------------------------------------------------------------------------
# spectral PDE


def check_pde_conservation(seed: int) -> dict:
    from .effective_dynamics import InitialData
    from .spectral_pde import PdeRunConfig, relative_drift, solve_pde

    traj = solve_pde(PdeRunConfig(64, 1e-3, 20.0), InitialData(1.0, 0.5, 0.1))
    m, e = relative_drift(traj.mass), relative_drift(traj.energy)
    return _rec(m <= 1e-10 and e <= 1e-8, mass_drift=m, energy_drift=e)


def check_substep_moduli(seed: int) -> dict:
    from .spectral_pde import linear_substep, nonlinear_substep

    rng = np.random.Generator(np.random.Philox(seed))
    u = rng.standard_normal(64) + 1j * rng.standard_normal(64)
    lin = np.max(np.abs(np.abs(linear_substep(u, 0.37)) - np.abs(u)))
    non = np.max(np.abs(np.abs(nonlinear_substep(u, 0.37)) - np.abs(u)))
    return _rec(lin < 1e-13 and non < 1e-13, linear=float(lin), nonlinear=float(non))


def check_checkpoint_roundtrip(seed: int) -> dict:
    from .spectral_pde import FourierField, load_checkpoint, save_checkpoint

    rng = np.random.Generator(np.random.Philox(seed))
    fld = FourierField(rng.standard_normal(32) + 1j * rng.standard_normal(32), 1.25)
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "field.bin"
        save_checkpoint(path, fld, 1e-3)
        back, dt = load_checkpoint(path)
        size = path.stat().st_size
    ok = np.array_equal(back.coeffs, fld.coeffs) and back.t == fld.t and dt == 1e-3
    return _rec(ok, bytes=size)


# ---------------------------------------------------------------------------
# tail probability


def check_l2_closed_form(seed: int) -> dict:
    from .tail_probability import VariancePair, l2_tail

    v = l2_tail(2.0, VariancePair(1.0, 1.0))
    near = l2_tail(2.0, VariancePair(1.0, 1.0 + 1e-7))
    ok = abs(v - 3.0 * math.exp(-2.0)) < 1e-15 and abs(near - v) < 1e-6
    return _rec(ok, equal_value=v, near_equal_value=near)


def check_l1_monte_carlo(seed: int) -> dict:
    from .tail_probability import VariancePair, l1_tail

    var = VariancePair(2.0, 1.0)
    rng = np.random.Generator(np.random.Philox(seed))
    n = 1_000_000
    a = np.sqrt(var.sigma_a2 * rng.standard_exponential(n))
    b = np.sqrt(var.sigma_b2 * rng.standard_exponential(n))
    worst = 0.0
    for z in (1.0, 2.0, 3.0):
        p = float(np.mean(a + b > z))
        se = math.sqrt(p * (1 - p) / n)
        worst = max(worst, abs(l1_tail(z, var) - p) / se)
    return _rec(worst <= 3.0, max_standard_errors=worst)


def check_inclusion(seed: int) -> dict:
    from .tail_probability import inclusion_violations

    c1 = load_fixtures()["C1"]
    total = sum(
        inclusion_violations(tau, eps, 1.0, c1, n=20_000, seed=seed + i)
        for i, (tau, eps) in enumerate((t, e) for t in (0.5, 5.0, 50.0) for e in (0.3, 0.1, 0.03))
    )
    return _rec(total == 0, violations=total, C1=c1)


def check_estimators_agree(seed: int) -> dict:
    from .tail_probability import RegimeSpec, VariancePair, log_tail_monte_carlo, log_tail_quadrature

    spec, var = RegimeSpec(1.0, 0.3, 0.0), VariancePair(2.0, 1.0)
    q = log_tail_quadrature(spec, var, 0.3)
    m = log_tail_monte_carlo(spec, var, 0.3, n=200_000, seed=seed)
    z = abs(q.log_p - m.log_p) / math.hypot(q.err, m.err)
    return _rec(z <= 3.0, quadrature=q.log_p, monte_carlo=m.log_p, combined_z=z)


# ---------------------------------------------------------------------------
# cli harness


def check_config_roundtrip(seed: int) -> dict:
    from .config import parse_config, to_json

    cfg = parse_config(["ldp-sweep", "--gamma", "1.6", "--eps-list", "0.3,0.1", "--seed", str(seed)])
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "report.json"
        path.write_text(to_json({"config": cfg.echo(), "rows": []}))
        back = parse_config(["ldp-sweep"], file=path)
    return _rec(back.params == cfg.params, keys=len(cfg.params))


def check_cli_determinism(seed: int) -> dict:
    from .cli import render, run_branches
    from .config import parse_config

    cfg = parse_config(["branches", "--samples", "50", "--max-index", "3", "--format", "json"])
    first = render(cfg, run_branches(cfg))
    second = render(cfg, run_branches(cfg))
    return _rec(first == second, bytes=len(first))


SUITE_CHECKS: dict[str, dict[str, Check]] = {
    "implicit-curve": {
        "h_bounds_and_period": check_h_bounds,
        "collision_structure": check_collision_structure,
        "rate_limits": check_rate_limits,
        "enumeration_residuals": check_enumeration_residuals,
        "mu_consistency": check_mu_consistency,
        "gap_lower_bound": check_gap_bound,
    },
    "effective-dynamics": {
        "rk4_vs_closed_form": check_reduced_oracle,
        "hamiltonian_values": check_hamiltonian_values,
        "amplitude_sandwich": check_amplitude_sandwich,
    },
    "spectral-pde": {
        "mass_energy_conservation": check_pde_conservation,
        "substep_moduli": check_substep_moduli,
        "checkpoint_roundtrip": check_checkpoint_roundtrip,
    },
    "tail-probability": {
        "l2_closed_form": check_l2_closed_form,
        "l1_vs_monte_carlo": check_l1_monte_carlo,
        "region_inclusion": check_inclusion,
        "quadrature_vs_monte_carlo": check_estimators_agree,
    },
    "cli-harness": {
        "config_roundtrip": check_config_roundtrip,
        "output_determinism": check_cli_determinism,
    },
}


def run_suites(suite: str = "all", seed: int = 0) -> dict:
    names = list(SUITE_CHECKS) if suite == "all" else [suite]
    if any(n not in SUITE_CHECKS for n in names):
        raise ValueError(f"unknown suite {suite!r}")
    suites: dict[str, dict] = {}
    for name in names:
        suites[name] = {}
        for check_name, fn in SUITE_CHECKS[name].items():
            try:
                suites[name][check_name] = fn(seed)
            except Exception as exc:  # a crashing check is a failed check
                suites[name][check_name] = {"pass": False, "measured": {"error": f"{type(exc).__name__}: {exc}"}}
    all_pass = all(rec["pass"] for checks in suites.values() for rec in checks.values())
    return {"all_pass": all_pass, "suites": suites, "fixtures": provenance()}
