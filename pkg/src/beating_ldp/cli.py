"""Command-line entry point: ``beating-ldp <subcommand> [--key value ...]``.

Exit codes: 0 success, 1 invalid configuration, 2 computation failure, 3 a
verification suite failed.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import implicit_curve as ic
from .config import ConfigError, RunConfig, parse_config, to_csv, to_json
from .fixtures import load_fixtures, provenance

EXIT_OK, EXIT_CONFIG, EXIT_COMPUTE, EXIT_VERIFY = 0, 1, 2, 3

SWEEP_COLUMNS = [
    "eps", "tau", "gamma", "delta", "z0", "sigma_a2", "sigma_b2",
    "method", "log_p", "scaled", "err", "target_rate", "regime",
]


@dataclass
class Result:
    columns: list[str]
    rows: list[list[Any]]
    extras: dict[str, Any] = field(default_factory=dict)
    # name suffix -> (columns, rows) written next to the main CSV
    side_tables: dict[str, tuple[list[str], list[list[Any]]]] = field(default_factory=dict)
    # name suffix -> JSON-able object written next to the main CSV
    side_json: dict[str, Any] = field(default_factory=dict)
    exit_code: int = EXIT_OK


# ---------------------------------------------------------------------------
# implicit curve


def _table_json(table: ic.BranchTable) -> dict:
    return {
        "lambda": table.lam,
        "max_index": table.max_index,
        "births": [{"j": j, "xi": x, "tau": t} for j, x, t in table.births],
        "collisions": [{"j": j, "xi": x, "tau": t} for j, x, t in table.collisions],
    }


def run_branches(cfg: RunConfig) -> Result:
    p = cfg.params
    lam = p["z0"]
    tau_max = p["tau_max"] or ic.collision_time(p["max_index"], lam)
    n_births = int(math.floor(4.0 * lam * lam * tau_max / math.pi)) + 1
    table = ic.build_branch_table(lam, n_births)
    rows, rate_rows = [], []
    for i in range(1, p["samples"] + 1):
        tau = tau_max * i / p["samples"]
        for v in ic.enumerate_solutions(tau, lam):
            rows.append([tau, v.branch_index, v.y, v.xi, v.exists])
        J, jump = ic.rate_with_jump(lam, tau)
        rate_rows.append([tau, J, jump])
    rate_cols = ["tau", "J", "is_jump"]
    return Result(
        ["tau", "branch_index", "y", "xi", "exists"],
        rows,
        extras={"rate": {"columns": rate_cols, "rows": rate_rows}, "branch_table": _table_json(table)},
        side_tables={"rate": (rate_cols, rate_rows)},
        side_json={"table": _table_json(table)},
    )


def _tau_grid(p: dict) -> np.ndarray:
    if p["log_grid"]:
        return np.geomspace(p["tau_min"], p["tau_max"], p["samples"])
    return np.linspace(p["tau_min"], p["tau_max"], p["samples"])


def run_rate(cfg: RunConfig) -> Result:
    p = cfg.params
    rows = []
    for tau in _tau_grid(p):
        J, jump = ic.rate_with_jump(p["z0"], float(tau))
        rows.append([float(tau), J, jump])
    return Result(["tau", "J", "is_jump"], rows)


def run_collisions(cfg: RunConfig) -> Result:
    p = cfg.params
    lam = p["lam"]
    j = np.arange(p["j_min"], p["j_max"] + 1)
    s = ic.collision_offset(j)
    lo = 1.0 / (math.sqrt(2.0) * math.pi * j)
    hi = math.sqrt(2.0) / (math.pi * (j - 0.5))
    tau_inf = ic.collision_time(j, lam)
    dip = ic.dip_time(j, lam)
    nxt = ic.dip_time(j + 1, lam)
    rows = [
        [int(j[i]), float(math.pi * (j[i] - 0.5) / 2.0 + s[i]), float(s[i]), float(lo[i]), float(hi[i]),
         bool(lo[i] <= s[i] <= hi[i]), float(ic.birth_time(int(j[i]), lam)), float(dip[i]),
         float(tau_inf[i]), float(nxt[i]), float(j[i] * lam * lam * (tau_inf[i] - dip[i]))]
        for i in range(j.size)
    ]
    cols = ["j", "xi_inf", "offset", "offset_lower", "offset_upper", "in_sandwich",
            "tau_birth", "tau_dip", "tau_inf", "tau_next_dip", "scaled_gap"]
    return Result(cols, rows)


def run_mu(cfg: RunConfig) -> Result:
    p = cfg.params
    j, lam = p["j"], p["lam"]
    rows = []
    for zeta in np.linspace(-math.pi, math.pi, p["zeta_points"]):
        zeta = float(zeta)
        sol = ic.mu_fixed_point(j, zeta)
        centre = math.pi * j / 2.0 - math.pi / 4.0
        try:
            d_minus, d_plus = ic.mu_direct_xi(j, zeta, lam)
        except ValueError:
            d_minus = d_plus = math.nan
        b = ic.mu_bounds(j, zeta)
        ok = (b["minus"][0] <= sol.mu_minus <= b["minus"][1]) and (b["plus"][0] <= sol.mu_plus <= b["plus"][1])
        rows.append([j, zeta, ic.mu_tau(j, zeta, lam), sol.mu_minus, sol.mu_plus, sol.iterations,
                     sol.max_ratio, centre - sol.mu_minus, d_minus, centre + sol.mu_plus, d_plus, ok])
    cols = ["j", "zeta", "tau", "mu_minus", "mu_plus", "iterations", "max_ratio",
            "xi_fixed_minus", "xi_direct_minus", "xi_fixed_plus", "xi_direct_plus", "bounds_ok"]
    return Result(cols, rows)


# ---------------------------------------------------------------------------
# dynamics


def _initial_data(p: dict):
    from .effective_dynamics import InitialData

    return InitialData(complex(p["alpha_re"], p["alpha_im"]), complex(p["beta_re"], p["beta_im"]), p["eps"])


def run_dynamics(cfg: RunConfig) -> Result:
    from .effective_dynamics import conserved_arrays, integrate_reduced, sup_norm_effective

    p = cfg.params
    data = _initial_data(p)
    t_end = p["t_end"] or 10.0 * math.pi / (2.0 * data.J1)
    traj = integrate_reduced(data, t_end, p["dt"])
    idx = list(range(0, len(traj.t), p["every"]))
    if idx[-1] != len(traj.t) - 1:
        idx.append(len(traj.t) - 1)
    t = traj.t[idx]
    u1, um1 = traj.u1[idx], traj.u_minus1[idx]
    q = conserved_arrays(u1, um1)
    sp = sup_norm_effective(data, t, "profile")
    se = sup_norm_effective(data, t, "exact")
    rows = [
        [float(t[i]), u1[i].real, u1[i].imag, um1[i].real, um1[i].imag,
         float(q["J1"][i]), float(q["K1"][i]), float(q["G"][i]), float(sp[i]), float(se[i])]
        for i in range(len(t))
    ]
    cols = ["t", "re_u1", "im_u1", "re_um1", "im_um1", "J1", "K1", "G", "sup_profile", "sup_exact"]
    return Result(cols, [[float(v) if isinstance(v, (float, np.floating)) else v for v in r] for r in rows])


def run_pde(cfg: RunConfig) -> Result:
    from .effective_dynamics import sup_norm_effective
    from .spectral_pde import PdeRunConfig, pde_effective_series, relative_drift, save_checkpoint, solve_pde

    p = cfg.params
    data = _initial_data(p)
    run = PdeRunConfig(p["N"], p["dt"], p["t_end"], p["dealias"], p["coupling"], p["sample_every"])
    traj = solve_pde(run, data)
    pde_effective_series(traj, data)
    sup_pde, tails = traj.extras["sup_pde"], traj.extras["tail_mass"]
    se = sup_norm_effective(data, traj.t, "exact")
    sp = sup_norm_effective(data, traj.t, "profile")
    rows = [
        [float(traj.t[i]), float(traj.mass[i]), float(traj.energy[i]), float(sup_pde[i]),
         float(se[i]), float(sp[i]), float(tails[i])]
        for i in range(len(traj.t))
    ]
    extras = {"mass_drift": relative_drift(traj.mass), "energy_drift": relative_drift(traj.energy)}
    if p["checkpoint"]:
        path = Path(p["out_dir"]) / p["checkpoint"]
        path.parent.mkdir(parents=True, exist_ok=True)
        save_checkpoint(path, traj.field(len(traj.t) - 1), p["dt"])
        extras["checkpoint"] = str(path)
    cols = ["t", "mass", "energy", "sup_pde", "sup_effective_exact", "sup_effective_profile", "tail_mass"]
    return Result(cols, rows, extras)


# ---------------------------------------------------------------------------
# tails


def _regime(p: dict):
    from .tail_probability import RegimeSpec, VariancePair

    spec = RegimeSpec(p["z0"], p["delta"], p["gamma"], p["c_time"], p["cutoff_c"] or None)
    return spec, VariancePair(p["sigma_a2"], p["sigma_b2"])


def _estimator_kwargs(p: dict) -> dict:
    kw: dict[str, Any] = {}
    if p["remainder_const"] >= 0:
        kw["remainder_const"] = p["remainder_const"]
    if p["method"] == "monte_carlo":
        kw.update(n=p["n"], seed=p["seed"], workers=p["workers"])
        if p["theta"] >= 0:
            kw["theta"] = p["theta"]
    return kw


def _sweep(cfg: RunConfig, eps_list: list[float]) -> Result:
    from .tail_probability import ldp_sweep

    p = cfg.params
    spec, var = _regime(p)
    rows_out = ldp_sweep(spec, var, eps_list, method=p["method"], **_estimator_kwargs(p))
    rows = [
        [r.eps, r.estimate.tau, spec.gamma, spec.delta, spec.z0, var.sigma_a2, var.sigma_b2,
         r.estimate.method, r.estimate.log_p, r.scaled, r.estimate.err, r.target_rate, r.regime]
        for r in rows_out
    ]
    fx = load_fixtures()
    extras = {
        "target_upper": rows_out[0].target_rate,
        "target_lower": rows_out[0].target_lower,
        "C1": fx["C1"],
        "C2": p["remainder_const"] if p["remainder_const"] >= 0 else fx["C2"],
        "seed": p["seed"],
        "theta": [r.estimate.info.get("theta") for r in rows_out],
        "lambda": [r.estimate.info.get("lam") for r in rows_out],
        "fixtures": provenance(),
    }
    return Result(list(SWEEP_COLUMNS), rows, extras)


def run_tail(cfg: RunConfig) -> Result:
    return _sweep(cfg, [cfg.params["eps"]])


def run_ldp_sweep(cfg: RunConfig) -> Result:
    return _sweep(cfg, cfg.params["eps_list"])


def run_verify(cfg: RunConfig) -> Result:
    from .verify import run_suites

    report = run_suites(cfg.params["suite"], seed=cfg.params["seed"])
    rows = [
        [suite, name, rec["pass"]]
        for suite, checks in report["suites"].items()
        for name, rec in checks.items()
    ]
    result = Result(["suite", "invariant", "pass"], rows, report)
    result.exit_code = EXIT_OK if report["all_pass"] else EXIT_VERIFY
    return result


RUNNERS: dict[str, Callable[[RunConfig], Result]] = {
    "branches": run_branches,
    "rate": run_rate,
    "collisions": run_collisions,
    "mu": run_mu,
    "dynamics": run_dynamics,
    "pde": run_pde,
    "tail": run_tail,
    "ldp-sweep": run_ldp_sweep,
    "verify": run_verify,
}


# ---------------------------------------------------------------------------
# output


def render(cfg: RunConfig, result: Result) -> str:
    if cfg.format == "csv":
        return to_csv(result.columns, result.rows)
    doc = {"config": cfg.echo(), "columns": result.columns, "rows": result.rows}
    doc.update(result.extras)
    return to_json(doc)


def write_outputs(cfg: RunConfig, result: Result) -> list[Path]:
    text = render(cfg, result)
    path = cfg.out_path
    if path is None:
        sys.stdout.write(text)
        return []
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    written = [path]
    if cfg.format == "csv":
        for suffix, (cols, rows) in result.side_tables.items():
            side = path.with_name(f"{path.stem}_{suffix}.csv")
            side.write_text(to_csv(cols, rows))
            written.append(side)
        for suffix, obj in result.side_json.items():
            side = path.with_name(f"{path.stem}_{suffix}.json")
            side.write_text(to_json(obj))
            written.append(side)
        if result.extras and cfg.subcommand in ("tail", "ldp-sweep", "verify", "pde"):
            report = path.with_name(f"{path.stem}_report.json")
            report.write_text(to_json({"config": cfg.echo(), **result.extras}))
            written.append(report)
    return written


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        cfg = parse_config(argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        result = RUNNERS[cfg.subcommand](cfg)
        written = write_outputs(cfg, result)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArithmeticError, RuntimeError, ValueError, OSError) as exc:
        print(f"computation failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    for path in written:
        print(f"wrote {path}", file=sys.stderr)
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
