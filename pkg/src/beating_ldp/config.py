"""Run configuration: per-subcommand parameter schemas, parsing and output encoding.

Precedence is flags > config file > ``BEATING_LDP_OUT_DIR`` (output directory only) >
schema defaults.  Config files are either flat ``key = value`` text (lists comma
separated, ``#`` comments) or JSON; a JSON report written by the CLI carries its run
configuration under ``"config"`` and re-parses as a config file.
"""

from __future__ import annotations

import argparse
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

DEFAULT_SEED = 20240601
OUT_DIR_ENV = "BEATING_LDP_OUT_DIR"
SUBCOMMAND_HELP = {
    "branches": "branch diagram of y h(2 tau y^2) = z0 with the rate curve",
    "rate": "minimal solution J(z0, tau) on a tau grid",
    "collisions": "collision offsets and times of branch pairs",
    "mu": "fixed-point corrections near the dips versus direct roots",
    "dynamics": "two-mode reduced flow: RK4 against the closed form",
    "pde": "split-step Fourier solution with mass, energy and sup-norms",
    "tail": "scaled log tail probability at one eps",
    "ldp-sweep": "scaled log tail probability along an eps list with target rates",
    "verify": "run the invariant suites and report pass/fail",
}
SUBCOMMANDS = tuple(SUBCOMMAND_HELP)
SUITES = ("all", "implicit-curve", "effective-dynamics", "spectral-pde", "tail-probability", "cli-harness")


class ConfigError(ValueError):
    """Invalid configuration; maps to exit code 1."""


# ---------------------------------------------------------------------------
# value types


def _to_float(text: Any) -> float:
    if isinstance(text, bool):
        raise ValueError("expected a number")
    return float(text)


def _to_int(text: Any) -> int:
    if isinstance(text, bool):
        raise ValueError("expected an integer")
    if isinstance(text, float):
        if not text.is_integer():
            raise ValueError("expected an integer")
        return int(text)
    return int(str(text).strip())


def _to_bool(text: Any) -> bool:
    if isinstance(text, bool):
        return text
    s = str(text).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected a boolean")


def _to_float_list(text: Any) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [_to_float(x) for x in text]
    parts = [p.strip() for p in str(text).split(",") if p.strip()]
    if not parts:
        raise ValueError("expected a comma-separated list of numbers")
    return [float(p) for p in parts]


def _to_str(text: Any) -> str:
    return str(text)


CONVERTERS: dict[str, Callable[[Any], Any]] = {
    "float": _to_float,
    "int": _to_int,
    "bool": _to_bool,
    "floats": _to_float_list,
    "str": _to_str,
}


@dataclass(frozen=True)
class Param:
    kind: str
    default: Any
    help: str
    check: Callable[[Any], str | None] | None = None
    choices: tuple[str, ...] | None = None


def positive(v) -> str | None:
    return None if v > 0 and math.isfinite(v) else "must be > 0"


def nonneg(v) -> str | None:
    return None if v >= 0 and math.isfinite(v) else "must be >= 0"


def at_least(m) -> Callable[[Any], str | None]:
    return lambda v: None if v >= m else f"must be >= {m}"


def open_unit(v) -> str | None:
    return None if 0.0 < v < 1.0 else "∈ (0,1) violated"


def all_positive(v) -> str | None:
    return None if all(x > 0 and math.isfinite(x) for x in v) else "every entry must be > 0"


def power_of_two(v) -> str | None:
    return None if v >= 8 and v & (v - 1) == 0 else "must be a power of two >= 8"


def unit_interval_half_open(v) -> str | None:
    return None if 0.0 <= v < 1.0 else "must lie in [0, 1)"


def optional_positive(v) -> str | None:
    return None if v == 0 or (v > 0 and math.isfinite(v)) else "must be > 0 (or 0 for automatic)"


COMMON: dict[str, Param] = {
    "seed": Param("int", DEFAULT_SEED, "random seed (fixed default keeps runs reproducible)", nonneg),
    "workers": Param("int", 1, "worker count passed to Monte Carlo estimators", at_least(1)),
    "out_dir": Param("str", ".", f"output directory; ${OUT_DIR_ENV} replaces the default only"),
    "out": Param("str", "", "output file name inside out_dir; '-' writes to stdout; empty = <subcommand>.<format>"),
    "format": Param("str", "csv", "output format", choices=("csv", "json")),
}

INITIAL_DATA: dict[str, Param] = {
    "alpha_re": Param("float", 1.0, "real part of alpha"),
    "alpha_im": Param("float", 0.0, "imaginary part of alpha"),
    "beta_re": Param("float", 0.0, "real part of beta"),
    "beta_im": Param("float", 0.0, "imaginary part of beta"),
    "eps": Param("float", 0.1, "amplitude scale", positive),
}

REGIME: dict[str, Param] = {
    "z0": Param("float", 1.0, "threshold z0", positive),
    "delta": Param("float", 0.3, "scaling exponent delta", open_unit),
    "gamma": Param("float", 0.0, "time exponent: t = c_time * eps^-gamma", nonneg),
    "c_time": Param("float", 1.0, "time prefactor", positive),
    "cutoff_c": Param("float", 0.0, "amplitude cutoff c (0 = 10 z0)", optional_positive),
    "sigma_a2": Param("float", 2.0, "variance of alpha", positive),
    "sigma_b2": Param("float", 1.0, "variance of beta", positive),
    "method": Param("str", "quadrature", "estimator", choices=("quadrature", "monte_carlo")),
    "n": Param("int", 400_000, "Monte Carlo sample count", at_least(10_000)),
    "theta": Param("float", -1.0, "importance-sampling tilt in [0, 1); negative = automatic"),
    "remainder_const": Param("float", -1.0, "threshold correction constant; negative = calibrated fixture"),
}

SCHEMAS: dict[str, dict[str, Param]] = {
    "branches": {
        "z0": Param("float", 1.0, "threshold lambda", positive),
        "tau_max": Param("float", 0.0, "largest sampled tau (0 = collision time of max_index)", optional_positive),
        "max_index": Param("int", 10, "collision index fixing the automatic tau range", at_least(1)),
        "samples": Param("int", 2000, "number of tau samples", at_least(1)),
    },
    "rate": {
        "z0": Param("float", 1.0, "threshold z0", positive),
        "tau_min": Param("float", 1e-3, "smallest tau", positive),
        "tau_max": Param("float", 20.0, "largest tau", positive),
        "samples": Param("int", 2000, "number of tau samples", at_least(2)),
        "log_grid": Param("bool", False, "geometric instead of uniform tau grid"),
    },
    "collisions": {
        "lam": Param("float", 1.0, "threshold lambda", positive),
        "j_min": Param("int", 1, "first collision index", at_least(1)),
        "j_max": Param("int", 100, "last collision index", at_least(1)),
    },
    "mu": {
        "j": Param("int", 100, "window index", at_least(1)),
        "lam": Param("float", 1.0, "threshold lambda", positive),
        "zeta_points": Param("int", 33, "number of zeta values in [-pi, pi]", at_least(2)),
    },
    "dynamics": {
        **INITIAL_DATA,
        "t_end": Param("float", 0.0, "final time (0 = ten beating periods)", nonneg),
        "dt": Param("float", 0.004, "time step", positive),
        "every": Param("int", 100, "write every n-th step", at_least(1)),
    },
    "pde": {
        **INITIAL_DATA,
        "N": Param("int", 64, "number of Fourier modes", power_of_two),
        "dt": Param("float", 1e-3, "time step", positive),
        "t_end": Param("float", 10.0, "final time", positive),
        "dealias": Param("bool", True, "apply the 2/3 rule"),
        "coupling": Param("float", 4.0, "coefficient of cos(2x)|u|^2 u", nonneg),
        "sample_every": Param("int", 100, "record every n-th step", at_least(1)),
        "checkpoint": Param("str", "", "file name for a binary checkpoint of the final field"),
    },
    "tail": {**REGIME, "eps": Param("float", 0.1, "amplitude scale", positive)},
    "ldp-sweep": {
        **REGIME,
        "eps_list": Param("floats", [0.3, 0.1, 0.03, 0.01], "strictly decreasing eps values", all_positive),
    },
    "verify": {
        "suite": Param("str", "all", "invariant suite to run", choices=SUITES),
    },
}

for _schema in SCHEMAS.values():
    _schema.update(COMMON)


@dataclass
class RunConfig:
    subcommand: str
    params: dict[str, Any] = field(default_factory=dict)

    @property
    def seed(self) -> int:
        return self.params["seed"]

    @property
    def format(self) -> str:
        return self.params["format"]

    @property
    def out_path(self) -> Path | None:
        """Target file, or ``None`` for stdout."""
        name = self.params["out"] or f"{self.subcommand}.{self.format}"
        if name == "-":
            return None
        return Path(self.params["out_dir"]) / name

    def echo(self) -> dict[str, Any]:
        return {"subcommand": self.subcommand, **{k: self.params[k] for k in sorted(self.params)}}


# ---------------------------------------------------------------------------
# parsing


def read_config_file(path: str | os.PathLike) -> dict[str, Any]:
    text = Path(path).read_text()
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        if "config" in data and isinstance(data["config"], dict):
            data = data["config"]
        if not isinstance(data, dict) or any(isinstance(v, dict) for v in data.values()):
            raise ConfigError(f"{path}: config must be a flat key-value object")
        return dict(data)
    out: dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def _normalize(key: str) -> str:
    return key.strip().replace("-", "_")


def _coerce(sub: str, key: str, raw: Any) -> Any:
    schema = SCHEMAS[sub]
    if key not in schema:
        raise ConfigError(f"unknown key '{key}' for subcommand '{sub}'")
    p = schema[key]
    try:
        value = CONVERTERS[p.kind](raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: cannot read {raw!r} as {p.kind}") from None
    if p.kind == "float" and not math.isfinite(value):
        raise ConfigError(f"{key}: must be finite")
    if p.choices is not None and value not in p.choices:
        raise ConfigError(f"{key}: must be one of {', '.join(p.choices)}")
    if p.check is not None:
        msg = p.check(value)
        if msg:
            raise ConfigError(f"{key} {msg}" if msg.startswith("∈") else f"{key}: {msg}")
    return value


def _cross_validate(sub: str, params: dict[str, Any]) -> None:
    if "delta" in params and "gamma" in params:
        bound = 2.5 * (1.0 - params["delta"])
        if not 0.0 <= params["gamma"] < bound:
            raise ConfigError(f"0 ≤ gamma < (5/2)(1-delta) = {bound:.6g} violated")
    if "cutoff_c" in params and params["cutoff_c"] and params["cutoff_c"] < 10.0 * params["z0"]:
        raise ConfigError("cutoff_c ≥ 10·z0 violated")
    if "sigma_a2" in params and params["sigma_a2"] < params["sigma_b2"]:
        raise ConfigError("sigma_a2 ≥ sigma_b2 required (alpha carries the larger variance)")
    if "theta" in params and params["theta"] >= 0.0 and params["theta"] >= 1.0:
        raise ConfigError("theta must lie in [0, 1)")
    if sub == "rate" and params["tau_min"] >= params["tau_max"]:
        raise ConfigError("tau_min < tau_max required")
    if sub == "collisions" and params["j_min"] > params["j_max"]:
        raise ConfigError("j_min ≤ j_max required")
    if sub == "ldp-sweep":
        e = params["eps_list"]
        if any(b >= a for a, b in zip(e, e[1:])):
            raise ConfigError("eps_list must be strictly decreasing")
    if sub == "dynamics":
        eps2 = params["eps"] ** 2
        j1 = eps2 * (params["alpha_re"] ** 2 + params["alpha_im"] ** 2 + params["beta_re"] ** 2 + params["beta_im"] ** 2)
        if params["dt"] * (1.0 + j1) > 0.1:
            raise ConfigError("dt * (1 + eps^2 (|alpha|^2 + |beta|^2)) <= 0.1 violated")
        if params["t_end"] == 0.0 and j1 == 0.0:
            raise ConfigError("t_end must be given when alpha = beta = 0")


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit with status 2
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="beating-ldp", description="Beating NLS extreme-wave toolkit")
    subs = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)
    for name in SUBCOMMANDS:
        sp = subs.add_parser(name, help=SUBCOMMAND_HELP[name], description=SUBCOMMAND_HELP[name])
        sp.add_argument("--config", default=None, help="flat key = value or JSON config file")
        for key, p in SCHEMAS[name].items():
            extra = f" [{', '.join(p.choices)}]" if p.choices else ""
            sp.add_argument(
                "--" + key.replace("_", "-"),
                dest=key,
                default=None,
                metavar=p.kind.upper(),
                help=f"{p.help}{extra} (default: {p.default})",
            )
    return parser


def parse_config(argv: list[str], file: str | os.PathLike | None = None) -> RunConfig:
    """Merge defaults, file values and flags into a validated :class:`RunConfig`."""
    ns = build_parser().parse_args(argv)
    sub = ns.subcommand
    file = file if file is not None else ns.config
    values: dict[str, Any] = {k: p.default for k, p in SCHEMAS[sub].items()}
    env_dir = os.environ.get(OUT_DIR_ENV)
    if env_dir:
        values["out_dir"] = env_dir
    if file is not None:
        for key, raw in read_config_file(file).items():
            key = _normalize(key)
            if key == "subcommand":
                if raw != sub:
                    raise ConfigError(f"config file is for '{raw}', not '{sub}'")
                continue
            values[key] = _coerce(sub, key, raw)
        if env_dir:
            values["out_dir"] = env_dir
    for key in SCHEMAS[sub]:
        raw = getattr(ns, key)
        if raw is not None:
            values[key] = _coerce(sub, key, raw)
    for key in list(values):
        values[key] = _coerce(sub, key, values[key])
    _cross_validate(sub, values)
    return RunConfig(sub, values)


# ---------------------------------------------------------------------------
# output encoding


def fmt_float(x: float) -> str:
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def fmt_cell(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return fmt_float(v)
    return str(v)


def to_csv(columns: list[str], rows: list[list[Any]]) -> str:
    lines = [",".join(columns)]
    lines.extend(",".join(fmt_cell(v) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def to_json(obj: Any, indent: int = 2) -> str:
    """JSON with floats written to 17 significant digits and sorted keys."""
    return _encode(obj, 0, indent) + "\n"


def _encode(obj: Any, level: int, indent: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, float):
        if math.isnan(obj):
            return "NaN"
        if math.isinf(obj):
            return "Infinity" if obj > 0 else "-Infinity"
        text = format(obj, ".17g")
        return text if any(c in text for c in ".en") else text + ".0"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k), ensure_ascii=False)}: {_encode(obj[k], level + 1, indent)}" for k in sorted(obj, key=str)]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(x, (dict, list, tuple)) for x in obj):
            return "[" + ", ".join(_encode(x, level + 1, indent) for x in obj) + "]"
        return "[\n" + ",\n".join(pad + _encode(x, level + 1, indent) for x in obj) + "\n" + end + "]"
    if hasattr(obj, "item"):  # numpy scalar
        return _encode(obj.item(), level, indent)
    raise TypeError(f"cannot encode {type(obj).__name__}")
