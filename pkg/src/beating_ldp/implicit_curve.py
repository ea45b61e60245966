"""Solution branches of the implicit equation ``lam = y * h(2 * tau * y**2)``.

The substitution ``xi = 2 tau y^2`` turns the equation into ``xi h(xi)^2 = 2 tau lam^2``,
so every solution corresponds to a point of the curve ``tau(xi) = xi h(xi)^2 / (2 lam^2)``.
That curve is piecewise monotone: it has local minima at the kinks ``xi = pi j / 2``
(where two branches are born at ``y = lam``) and local maxima at the roots of
``h + 2 xi h'`` (where two branches collide and disappear).

Inside quarter period ``k`` (``xi = k pi/2 + theta`` with ``theta`` in ``[0, pi/2]``) we have
``h = cos(theta) + sin(theta)`` and ``h^2 = 1 + sin(2 theta)``, which is what all the
segment arithmetic below uses.  Working with ``theta`` instead of ``xi`` keeps full
precision for large quarter indices.

Branch numbering follows the order of the roots in ``xi``: the rising segment of quarter
``k`` carries branch ``2k + 1`` and the falling segment carries branch ``2k + 2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Literal

import numpy as np

HALF_PI = 0.5 * math.pi
QUARTER_PI = 0.25 * math.pi

ROOT_TOL = 1e-12
BIRTH_TOL = 1e-10
MU_MAX_ITER = 500

Side = Literal["left", "right"]


class BracketError(RuntimeError):
    """A bisection bracket without a sign change; indicates a bug, not bad input."""


class ContractionError(RuntimeError):
    """The fixed-point map for the branch corrections failed to converge."""


def jump_tol(tau: float) -> float:
    """Distance in ``tau`` below which a point counts as a collision time."""
    return 1e-9 * (1.0 + tau)


# ---------------------------------------------------------------------------
# the function h


def h_eval(xi):
    """``|cos xi| + |sin xi|``; works on scalars and arrays."""
    return np.abs(np.cos(xi)) + np.abs(np.sin(xi))


def _quarter_index(xi: float, side: Side) -> int:
    q = xi / HALF_PI
    nearest = round(q)
    if abs(q - nearest) <= 1e-13 * max(1.0, abs(q)):
        # a kink: the side picks the quarter we are looking into
        return int(nearest) if side == "right" else int(nearest) - 1
    return math.floor(q)


def h_deriv(xi: float, side: Side = "right") -> float:
    """One-sided derivative of ``h``.

    At a kink ``xi = k pi/2`` the right derivative is ``+1`` and the left one is ``-1``;
    elsewhere both sides agree.
    """
    if side not in ("left", "right"):
        raise ValueError("side must be 'left' or 'right'")
    k = _quarter_index(float(xi), side)
    theta = xi - k * HALF_PI
    return math.cos(theta) - math.sin(theta)


def tau_of_xi(xi, lam: float):
    """Time at which ``xi`` solves ``xi h(xi)^2 = 2 tau lam^2``."""
    _check_positive(lam=lam)
    return xi * h_eval(xi) ** 2 / (2.0 * lam * lam)


def dip_time(j, lam: float):
    """``tau_j = pi (j - 1/2) / (2 lam^2)``, where branch ``2j-1`` touches ``lam/sqrt(2)``."""
    return math.pi * (np.asarray(j, dtype=float) - 0.5) / (2.0 * lam * lam)


def birth_time(j, lam: float):
    """``pi j / (4 lam^2)``, where branches ``2j`` and ``2j+1`` appear at ``y = lam``."""
    return math.pi * np.asarray(j, dtype=float) / (4.0 * lam * lam)


# ---------------------------------------------------------------------------
# bisection


def bisect_vec(
    f: Callable[[np.ndarray], np.ndarray],
    lo,
    hi,
    tol: float = ROOT_TOL,
    max_iter: int = 200,
) -> np.ndarray:
    """Vectorised bisection of ``f`` on the brackets ``[lo, hi]``.

    Every bracket must contain a sign change.  Iteration stops per bracket once its
    width drops below ``tol`` or it can no longer be split in floating point.
    """
    lo = np.array(lo, dtype=float, copy=True, ndmin=1)
    hi = np.array(hi, dtype=float, copy=True, ndmin=1)
    flo = f(lo)
    fhi = f(hi)
    if np.any(np.sign(flo) * np.sign(fhi) > 0):
        raise BracketError("bisection bracket without sign change")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        active = (hi - lo > tol) & (mid > lo) & (mid < hi)
        if not active.any():
            break
        fmid = f(mid)
        move_lo = active & (np.sign(fmid) == np.sign(flo))
        move_hi = active & ~move_lo
        lo = np.where(move_lo, mid, lo)
        flo = np.where(move_lo, fmid, flo)
        hi = np.where(move_hi, mid, hi)
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# collision points


def collision_offset(j) -> np.ndarray:
    """Offset ``xi_j^inf - pi (j - 1/2)/2`` of the j-th collision point.

    With ``xi = pi(j - 1/2)/2 + s`` one has ``h + 2 xi h' = sqrt(2) (cos s - 2 xi sin s)``,
    which is positive at ``s = 0`` and negative at ``s = pi/4``.
    """
    j = np.atleast_1d(np.asarray(j, dtype=float))
    if np.any(j < 1):
        raise ValueError("collision index must be >= 1")
    base = math.pi * (j - 0.5) / 2.0

    def f(s):
        return np.cos(s) - 2.0 * (base + s) * np.sin(s)

    return bisect_vec(f, np.zeros_like(base), np.full_like(base, QUARTER_PI), tol=1e-17)


def collision_xi(j: int) -> float:
    """Unique root of ``h(xi) + 2 xi h'(xi)`` in ``(pi(j - 1/2)/2, pi j/2)``."""
    if int(j) != j or j < 1:
        raise ValueError("j must be a positive integer")
    return float(math.pi * (j - 0.5) / 2.0 + collision_offset(j)[0])


def _collision_tau(j, lam: float) -> np.ndarray:
    j = np.atleast_1d(np.asarray(j, dtype=float))
    s = collision_offset(j)
    xi = math.pi * (j - 0.5) / 2.0 + s
    # h(xi)^2 = 2 cos(s)^2 at the offset s past the quarter midpoint
    return xi * 2.0 * np.cos(s) ** 2 / (2.0 * lam * lam)


def collision_time(j, lam: float):
    """``tau_j^inf``: the fold where branches ``2j-1`` and ``2j`` merge."""
    _check_positive(lam=lam)
    out = _collision_tau(j, lam)
    return float(out[0]) if np.ndim(j) == 0 else out


# ---------------------------------------------------------------------------
# branch table


@dataclass(frozen=True)
class BranchTable:
    """Critical points of ``tau(xi)`` for a fixed threshold ``lam``."""

    lam: float
    births: tuple[tuple[int, float, float], ...]
    collisions: tuple[tuple[int, float, float], ...]
    max_index: int

    def birth_times(self) -> np.ndarray:
        return np.array([b[2] for b in self.births])

    def collision_times(self) -> np.ndarray:
        return np.array([c[2] for c in self.collisions])


def build_branch_table(lam: float, max_index: int) -> BranchTable:
    _check_positive(lam=lam)
    if int(max_index) != max_index or max_index < 1:
        raise ValueError("max_index must be a positive integer")
    j = np.arange(1, int(max_index) + 1)
    s = collision_offset(j)
    xi_inf = math.pi * (j - 0.5) / 2.0 + s
    tau_inf = xi_inf * np.cos(s) ** 2 / (lam * lam)
    births = tuple((int(i), i * HALF_PI, math.pi * i / (4.0 * lam * lam)) for i in j)
    collisions = tuple((int(i), float(x), float(t)) for i, x, t in zip(j, xi_inf, tau_inf))
    return BranchTable(float(lam), births, collisions, int(max_index))


# ---------------------------------------------------------------------------
# branch values


@dataclass(frozen=True)
class BranchValue:
    """One point ``(tau, y)`` of branch ``branch_index``.

    ``degenerate`` holds both branch indices when the point is a double root
    (a birth at ``y = lam`` or a fold collision); it is ``None`` otherwise.
    """

    branch_index: int
    tau: float
    y: float
    xi: float
    exists: bool = True
    degenerate: tuple[int, int] | None = field(default=None)


def _segment_root(k: np.ndarray, lo: np.ndarray, hi: np.ndarray, target: float) -> np.ndarray:
    """Root in ``theta`` of ``(k pi/2 + theta)(1 + sin 2 theta) - target``."""
    base = k * HALF_PI

    def g(theta):
        return (base + theta) * (1.0 + np.sin(2.0 * theta)) - target

    # the tolerance is in xi = base + theta, limited by its floating-point spacing;
    # for xi below 1 it becomes relative so that y = sqrt(xi / 2 tau) stays accurate
    tol = max(ROOT_TOL * min(1.0, 0.5 * target), 4.0 * np.spacing(float(np.max(base + hi))))
    return bisect_vec(g, lo, hi, tol=tol)


def _quarter_solutions(k_values: np.ndarray, tau: float, lam: float) -> list[BranchValue]:
    """All roots lying in the given quarter periods, in increasing order of ``xi``."""
    target = 2.0 * tau * lam * lam
    k_values = np.asarray(k_values, dtype=int)
    s = collision_offset(k_values + 1)
    peak_theta = QUARTER_PI + s
    tau_peak = (k_values * HALF_PI + peak_theta) * np.cos(s) ** 2 / (lam * lam)
    tau_start = birth_time(k_values, lam)
    tau_end = birth_time(k_values + 1, lam)
    tol_jump = jump_tol(tau)

    # a fold is snapped only from below: past the collision both branches are gone
    at_peak = (tau > tau_peak - tol_jump) & (tau <= tau_peak + 4.0 * np.spacing(tau_peak))
    at_start = (k_values >= 1) & (np.abs(tau - tau_start) < BIRTH_TOL)
    at_end = np.abs(tau - tau_end) < BIRTH_TOL
    below_peak = (tau < tau_peak) & ~at_peak
    rising = below_peak & (tau > tau_start) & ~at_start
    falling = below_peak & (tau > tau_end) & ~at_end

    rise_theta = np.full(k_values.shape, np.nan)
    fall_theta = np.full(k_values.shape, np.nan)
    if rising.any():
        rise_theta[rising] = _segment_root(
            k_values[rising], np.zeros(rising.sum()), peak_theta[rising], target
        )
    if falling.any():
        fall_theta[falling] = _segment_root(
            k_values[falling], peak_theta[falling], np.full(falling.sum(), HALF_PI), target
        )

    out: list[BranchValue] = []

    def emit(theta: float, k: int, index: int, degenerate=None):
        xi = k * HALF_PI + theta
        out.append(BranchValue(index, tau, math.sqrt(xi / (2.0 * tau)), xi, True, degenerate))

    for n, k in enumerate(k_values):
        k = int(k)
        if at_start[n]:
            out.append(BranchValue(2 * k, tau, lam, 2.0 * tau * lam * lam, True, (2 * k, 2 * k + 1)))
        if at_peak[n]:
            emit(float(peak_theta[n]), k, 2 * k + 1, (2 * k + 1, 2 * k + 2))
            continue
        if rising[n]:
            emit(float(rise_theta[n]), k, 2 * k + 1)
        if falling[n]:
            emit(float(fall_theta[n]), k, 2 * k + 2)
    return out


def _window_quarters(tau: float, lam: float) -> np.ndarray:
    # every solution has y in [lam/sqrt2, lam], i.e. xi in [tau lam^2, 2 tau lam^2]
    target = 2.0 * tau * lam * lam
    k_lo = max(0, math.floor(0.5 * target / HALF_PI) - 1)
    k_hi = math.floor(target / HALF_PI) + 1
    return np.arange(k_lo, k_hi + 1)


def enumerate_solutions(tau: float, lam: float) -> list[BranchValue]:
    """All solutions ``y`` at time ``tau``, strictly increasing.

    A birth or collision inside the tolerances is reported once with the
    ``degenerate`` field set.
    """
    _check_positive(tau=tau, lam=lam)
    return _quarter_solutions(_window_quarters(tau, lam), tau, lam)


def minimal_solution_Y(tau: float, lam: float) -> BranchValue:
    """Smallest solution at ``tau``; left-continuous at collision times."""
    _check_positive(tau=tau, lam=lam)
    quarters = _window_quarters(tau, lam)
    for start in range(0, len(quarters), 4):
        sols = _quarter_solutions(quarters[start : start + 4], tau, lam)
        if sols:
            return sols[0]
    raise RuntimeError(f"no solution found at tau={tau!r}, lam={lam!r}")


def branch_value(index: int, tau: float, lam: float) -> BranchValue:
    """Value of branch ``index`` at ``tau``; ``exists`` is False outside its lifetime."""
    _check_positive(tau=tau, lam=lam)
    if int(index) != index or index < 1:
        raise ValueError("branch index must be a positive integer")
    index = int(index)
    k = (index - 1) // 2 if index % 2 else index // 2 - 1
    for sol in _quarter_solutions(np.array([k]), tau, lam):
        if sol.branch_index == index or (sol.degenerate and index in sol.degenerate):
            if sol.branch_index != index:
                sol = BranchValue(index, sol.tau, sol.y, sol.xi, True, sol.degenerate)
            return sol
    # the birth of this branch may sit at the upper kink of quarter k
    if index % 2 == 0 and abs(tau - birth_time(k + 1, lam)) < BIRTH_TOL:
        return BranchValue(index, tau, lam, 2.0 * tau * lam * lam, True, (index, index + 1))
    return BranchValue(index, tau, math.nan, math.nan, False)


def _jump_index(tau: float, lam: float) -> int | None:
    centre = round(2.0 * lam * lam * tau / math.pi + 0.5)
    candidates = np.arange(max(1, centre - 2), centre + 3)
    times = _collision_tau(candidates, lam)
    hit = np.flatnonzero(np.abs(times - tau) < jump_tol(tau))
    return int(candidates[hit[0]]) if hit.size else None


def rate_J(z0: float, tau: float) -> float:
    """Rate function: the minimal solution with ``lam = z0``, right-continuous at jumps."""
    return rate_with_jump(z0, tau)[0]


def rate_with_jump(z0: float, tau: float) -> tuple[float, bool]:
    """``(J(z0, tau), is_jump)`` where ``is_jump`` marks a detected collision time."""
    _check_positive(z0=z0, tau=tau)
    j = _jump_index(tau, z0)
    if j is not None:
        after = branch_value(2 * j + 1, tau, z0)
        if after.exists:
            return after.y, True
    return minimal_solution_Y(tau, z0).y, False


# ---------------------------------------------------------------------------
# corrections near tau_j


@dataclass(frozen=True)
class MuSolution:
    """Corrections with ``xi_{2j-1} = pi j/2 - pi/4 - mu_minus`` and
    ``xi_{2j} = pi j/2 - pi/4 + mu_plus`` at ``2 tau lam^2 = pi j - 3 pi/2 + zeta``."""

    j: int
    zeta: float
    mu_minus: float
    mu_plus: float
    iterations: int
    max_ratio: float


def _v_minus_sin(v: float) -> float:
    if abs(v) < 0.1:
        v2 = v * v
        return v * v2 / 6.0 * (1.0 - v2 / 20.0 * (1.0 - v2 / 42.0 * (1.0 - v2 / 72.0)))
    return v - math.sin(v)


def _phi(v: float, j: int, zeta: float, sign: int) -> float:
    """One application of the fixed-point map; ``sign`` is -1 or +1."""
    a = math.pi * j - HALF_PI + 2.0 * sign * v
    # remainder: a * (v^2 - sin(v)^2), the higher-order part of a * cos(v)^2
    remainder = a * _v_minus_sin(v) * (v + math.sin(v))
    disc = a * (math.pi - zeta + remainder) + 1.0
    if a <= 0.0 or disc < 0.0:
        raise ContractionError(f"fixed-point map undefined at j={j}, zeta={zeta}")
    return (math.sqrt(disc) + sign) / a


def _iterate(j: int, zeta: float, sign: int, tol: float) -> tuple[float, int, float]:
    v = 0.0
    prev_step = None
    max_ratio = 0.0
    for it in range(1, MU_MAX_ITER + 1):
        new = _phi(v, j, zeta, sign)
        step = abs(new - v)
        if prev_step is not None and prev_step > 1e-13:
            max_ratio = max(max_ratio, step / prev_step)
        v = new
        if step < tol:
            return v, it, max_ratio
        prev_step = step
    raise ContractionError(f"no convergence for j={j}, zeta={zeta}, sign={sign}")


def mu_fixed_point(
    j: int, zeta: float, sign: Literal["minus", "plus", "both"] = "both", tol: float = ROOT_TOL
) -> MuSolution:
    """Solve for the corrections of branches ``2j-1`` (minus) and ``2j`` (plus)."""
    if int(j) != j or j < 1:
        raise ValueError("j must be a positive integer")
    if not -math.pi <= zeta <= math.pi:
        raise ValueError("zeta must lie in [-pi, pi]")
    mu = {"minus": math.nan, "plus": math.nan}
    iters, ratio = 0, 0.0
    for name, s in (("minus", -1), ("plus", 1)):
        if sign in (name, "both"):
            mu[name], n, r = _iterate(int(j), zeta, s, tol)
            iters, ratio = max(iters, n), max(ratio, r)
    return MuSolution(int(j), float(zeta), mu["minus"], mu["plus"], iters, ratio)


def mu_tau(j: int, zeta: float, lam: float) -> float:
    """Time matching ``zeta``: ``2 tau lam^2 = pi j - 3 pi/2 + zeta``."""
    return (math.pi * j - 1.5 * math.pi + zeta) / (2.0 * lam * lam)


def mu_bounds(j: int, zeta: float) -> dict[str, tuple[float, float]]:
    """Lower/upper bounds for both corrections (``lam^2 (tau_j - tau) = (pi - zeta)/2``)."""
    upper = 4.0 / math.sqrt(j)
    return {
        "minus": ((math.pi - zeta) / (10.0 * j), upper),
        "plus": (1.0 / (math.pi * j), upper),
    }


def mu_direct_xi(j: int, zeta: float, lam: float = 1.0) -> tuple[float, float]:
    """``xi`` of branches ``2j-1`` and ``2j`` from direct bisection of ``g``."""
    tau = mu_tau(j, zeta, lam)
    lo = branch_value(2 * j - 1, tau, lam)
    hi = branch_value(2 * j, tau, lam)
    if not (lo.exists and hi.exists):
        raise ValueError(f"branches {2 * j - 1}, {2 * j} do not both exist at zeta={zeta}")
    return lo.xi, hi.xi


# ---------------------------------------------------------------------------
# spacing and approach to lam / sqrt(2)


def branch_gap(tau: float, lam: float) -> tuple[int, float]:
    """``(j, gap_sum)`` with ``j`` fixed by the minimal branch ``2j - 1`` at ``tau``."""
    first = minimal_solution_Y(tau, lam)
    j = (first.branch_index + 1) // 2
    values = [branch_value(i, tau, lam) for i in range(2 * j - 1, 2 * j + 3)]
    if not all(v.exists for v in values):
        missing = [v.branch_index for v in values if not v.exists]
        raise ValueError(f"branches {missing} missing at tau={tau!r}")
    y = [v.y for v in values]
    return j, (y[1] - y[0]) + (y[3] - y[2])


def branch_gap_lower_bound_check(
    tau: float, lam: float, constant: float | None = None, j_min: int | None = None
) -> tuple[float, float, bool]:
    """Compare the spacing of the four smallest branches with ``constant / (lam^3 tau^2)``."""
    from .fixtures import load_fixtures

    fx = load_fixtures()
    constant = fx["gap_constant"] if constant is None else constant
    j_min = fx["j0"] if j_min is None else j_min
    _check_positive(tau=tau, lam=lam)
    j, gap = branch_gap(tau, lam)
    if j < j_min:
        raise ValueError(f"tau={tau!r} falls in window j={j} < j0={j_min}")
    bound = constant / (lam**3 * tau * tau)
    return gap, bound, bool(gap >= bound)


def upper_branch_excess(j: int, lam: float, samples: int = 65) -> float:
    """``max (y_{2j+1} - lam/sqrt2) * j / lam`` over ``tau`` in ``[tau_{j-1}, tau_{j+1}]``."""
    taus = np.linspace(dip_time(j - 1, lam), dip_time(j + 1, lam), samples)
    worst = 0.0
    for t in taus:
        v = branch_value(2 * j + 1, float(t), lam)
        if not v.exists:
            raise ValueError(f"branch {2 * j + 1} missing at tau={t!r}")
        worst = max(worst, (v.y - lam / math.sqrt(2.0)) * j / lam)
    return worst


def _check_positive(**kwargs: float) -> None:
    for name, value in kwargs.items():
        if not (value > 0 and math.isfinite(value)):
            raise ValueError(f"{name} must be positive and finite, got {value!r}")
