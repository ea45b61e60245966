"""Tail probabilities of the effective sup-norm for Gaussian initial amplitudes.

``|alpha|`` and ``|beta|`` are Rayleigh with ``E|alpha|^2 = sigma_a2`` and
``E|beta|^2 = sigma_b2``.  After rescaling ``(a, b) = eps^delta (|alpha|, |beta|)`` the
event ``sup_x |u| >= z0 eps^(1 - delta)`` becomes membership of ``(a, b)`` in

    A(tau, lam) = {a + b <= 2c,  S(a, b; 2 tau (a^2 + b^2)) >= lam},

with ``S`` the two-square-root profile of :func:`effective_dynamics.sup_profile` and
``tau = eps^(2(1 - delta)) t``.  This module provides closed-form tails for the l1 and
l2 envelopes of that event, a log-domain quadrature and an importance-sampled Monte
Carlo estimate of ``log P(A)``, and the comparison against the limiting rates.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy import integrate
from scipy.special import logsumexp

from .effective_dynamics import sup_profile
from .fixtures import load_fixtures
from .implicit_curve import h_eval, rate_J

EQUAL_VARIANCE_RTOL = 1e-9
MC_BATCH = 1 << 17


class QuadratureError(RuntimeError):
    """The quadrature grid does not resolve the event (e.g. mass piles up at the cutoff)."""


class EstimateError(RuntimeError):
    """A Monte Carlo estimate is undefined (no sample hit the event)."""


@dataclass(frozen=True)
class VariancePair:
    sigma_a2: float
    sigma_b2: float

    def __post_init__(self):
        if not (self.sigma_a2 > 0 and self.sigma_b2 > 0):
            raise ValueError("variances must be positive")

    @property
    def equal(self) -> bool:
        return abs(self.sigma_a2 - self.sigma_b2) < EQUAL_VARIANCE_RTOL * self.sigma_a2


@dataclass(frozen=True)
class RegimeSpec:
    """Threshold ``z0``, scaling exponent ``delta``, time ``t = c_time eps^-gamma``."""

    z0: float
    delta: float
    gamma: float
    c_time: float = 1.0
    cutoff_c: float | None = None

    def __post_init__(self):
        if not self.z0 > 0:
            raise ValueError("z0 must be positive")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta ∈ (0,1) violated")
        bound = 2.5 * (1.0 - self.delta)
        if not 0.0 <= self.gamma < bound:
            raise ValueError(f"0 ≤ gamma < (5/2)(1-delta) = {bound:.6g} violated")
        if not self.c_time > 0:
            raise ValueError("c_time must be positive")
        if self.cutoff_c is None:
            object.__setattr__(self, "cutoff_c", 10.0 * self.z0)
        if self.cutoff_c < 10.0 * self.z0:
            raise ValueError("cutoff_c ≥ 10·z0 violated")

    def tau(self, eps: float) -> float:
        """``eps^(2(1 - delta)) * c_time * eps^-gamma``."""
        return self.c_time * eps ** (2.0 * (1.0 - self.delta) - self.gamma)

    def threshold(self, eps: float, remainder_const: float) -> float:
        """Rescaled threshold ``z0 - C2 eps^((1 - delta)/2)``."""
        lam = self.z0 - remainder_const * eps ** (0.5 * (1.0 - self.delta))
        if not lam > 0:
            raise ValueError(f"eps={eps} too large: corrected threshold {lam} <= 0")
        return lam

    @property
    def resonant(self) -> bool:
        return abs(self.gamma - 2.0 * (1.0 - self.delta)) < 1e-12


@dataclass(frozen=True)
class TailEstimate:
    log_p: float
    scaled: float
    method: Literal["quadrature", "monte_carlo", "closed_form"]
    err: float
    eps: float
    tau: float = math.nan
    info: dict = field(default_factory=dict, compare=False)


# ---------------------------------------------------------------------------
# closed forms


def _l1_inner(z: float, var: VariancePair) -> float:
    sa, sb = var.sigma_a2, var.sigma_b2
    s = sa + sb
    root = math.sqrt(s)
    centre = z * sa / s

    def f(a):
        return 2.0 * a / sa * math.exp(-((root * a - z * sa / root) ** 2) / (sa * sb))

    points = [centre] if 0.0 < centre < z else None
    val, _ = integrate.quad(f, 0.0, z, points=points, epsabs=0.0, epsrel=1e-12, limit=200)
    return val


def log_l1_tail(z: float, var: VariancePair) -> float:
    """``log P(|alpha| + |beta| > z)``."""
    if not z > 0:
        raise ValueError("z must be positive")
    s = var.sigma_a2 + var.sigma_b2
    inner = _l1_inner(z, var)
    first = -z * z / s + math.log(inner) if inner > 0 else -math.inf
    return float(np.logaddexp(first, -z * z / var.sigma_a2))


def l1_tail(z: float, var: VariancePair) -> float:
    """``P(|alpha| + |beta| > z)``: conditioning on ``|alpha|`` and completing the square."""
    return math.exp(log_l1_tail(z, var))


def log_l2_tail(z: float, var: VariancePair) -> float:
    """``log P(sqrt2 sqrt(|alpha|^2 + |beta|^2) > z)``."""
    if not z > 0:
        raise ValueError("z must be positive")
    x = 0.5 * z * z
    big, small = max(var.sigma_a2, var.sigma_b2), min(var.sigma_a2, var.sigma_b2)
    gap = big - small
    if gap < EQUAL_VARIANCE_RTOL * var.sigma_a2:
        s2 = 0.5 * (big + small)
        return -x / s2 + math.log1p(x / s2)
    # [a e^{-x/a} - b e^{-x/b}] / (a - b) rewritten without cancellation
    y = x * gap / (big * small)
    return -x / big + math.log1p(small / gap * -math.expm1(-y))


def l2_tail(z: float, var: VariancePair) -> float:
    return math.exp(log_l2_tail(z, var))


# ---------------------------------------------------------------------------
# regions


def region_A_member(a, b, tau: float, lam: float, cutoff_c: float):
    """Membership of the rescaled amplitudes ``(a, b)`` in ``A(tau, lam)``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    theta = 2.0 * tau * (a * a + b * b)
    return (a + b <= 2.0 * cutoff_c) & (sup_profile(a, b, theta) >= lam)


def region_B_member(a, b, tau: float, lam_tilde: float, eps: float, cutoff_c: float):
    """``a in [0, c]``, ``b in [0, eps]`` and ``a h(2 tau a^2) >= lam_tilde``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return (
        (a >= 0) & (a <= cutoff_c) & (b >= 0) & (b <= eps)
        & (a * h_eval(2.0 * tau * a * a) >= lam_tilde)
    )


def claim_shift(tau: float, eps: float, C1: float) -> float:
    """Threshold shift ``C1 sqrt(tau) eps + sqrt(eps)`` between the two regions."""
    return C1 * math.sqrt(tau) * eps + math.sqrt(eps)


def sample_region_B(
    n: int, tau: float, lam_tilde: float, eps: float, cutoff_c: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """``n`` uniform samples of ``B`` by rejection from ``[lam_tilde/sqrt2, c] x [0, eps]``."""
    lo = lam_tilde / math.sqrt(2.0)
    if lo >= cutoff_c:
        raise ValueError("region B is empty")
    got_a: list[np.ndarray] = []
    got = 0
    while got < n:
        a = rng.uniform(lo, cutoff_c, size=2 * (n - got) + 64)
        keep = a[a * h_eval(2.0 * tau * a * a) >= lam_tilde]
        got_a.append(keep)
        got += keep.size
    a = np.concatenate(got_a)[:n]
    b = rng.uniform(0.0, eps, size=n)
    return a, b


def inclusion_violations(
    tau: float,
    eps: float,
    lam: float,
    C1: float,
    n: int = 100_000,
    seed: int = 0,
    cutoff_c: float | None = None,
    direction: Literal["raise", "lower"] = "raise",
) -> int:
    """Count samples of ``B(tau, lam_tilde)`` falling outside ``A(tau, lam)``.

    ``direction="raise"`` uses ``lam_tilde = lam + shift``, the inclusion that holds;
    ``"lower"`` uses ``lam - shift`` and generally fails near ``b = 0``, where the
    profile reduces to ``a h(2 tau a^2)``.
    """
    c = 10.0 * lam if cutoff_c is None else cutoff_c
    shift = claim_shift(tau, eps, C1)
    lam_tilde = lam + shift if direction == "raise" else lam - shift
    if lam_tilde <= 0:
        raise ValueError("shifted threshold is not positive")
    if lam_tilde / math.sqrt(2.0) >= c:
        return 0  # region B is empty
    rng = np.random.Generator(np.random.Philox(seed))
    a, b = sample_region_B(n, tau, lam_tilde, eps, c, rng)
    assert region_B_member(a, b, tau, lam_tilde, eps, c).all()
    return int(np.count_nonzero(~region_A_member(a, b, tau, lam, c)))


# ---------------------------------------------------------------------------
# log-domain quadrature


def _log_interval_mass(lo: np.ndarray, hi: np.ndarray, scale2: float) -> np.ndarray:
    """``log P(lo <= R <= hi)`` for a Rayleigh ``R`` with ``E R^2 = scale2``."""
    x0 = lo * lo / scale2
    x1 = hi * hi / scale2
    with np.errstate(divide="ignore"):
        return -x0 + np.log(-np.expm1(x0 - x1))


def _score_leaves(a0, a1, b0, b1, tau, lam, c, s_a2, s_b2, sub: int = 8):
    """Log mass of each leaf and the mass fraction inside the region.

    The fraction is the exact-mass-weighted share of ``sub x sub`` sub-cells whose
    centres are members.
    """
    leaf = _log_interval_mass(a0, a1, s_a2) + _log_interval_mass(b0, b1, s_b2)
    u = np.arange(sub + 1) / sub
    ga = a0[:, None] + (a1 - a0)[:, None] * u[None, :]
    gb = b0[:, None] + (b1 - b0)[:, None] * u[None, :]
    la = _log_interval_mass(ga[:, :-1], ga[:, 1:], s_a2)
    lb = _log_interval_mass(gb[:, :-1], gb[:, 1:], s_b2)
    ma = 0.5 * (ga[:, :-1] + ga[:, 1:])
    mb = 0.5 * (gb[:, :-1] + gb[:, 1:])
    inside = region_A_member(ma[:, :, None], mb[:, None, :], tau, lam, c)
    w = np.exp(la[:, :, None] + lb[:, None, :] - leaf[:, None, None])
    frac = np.sum(w * inside, axis=(1, 2)) / np.sum(w, axis=(1, 2))
    return leaf, frac


def _resolve_remainder(remainder_const: float | None) -> float:
    return load_fixtures()["C2"] if remainder_const is None else remainder_const


def log_tail_quadrature(
    spec: RegimeSpec,
    var: VariancePair,
    eps: float,
    remainder_const: float | None = None,
    n_a: int = 2048,
    n_b: int = 512,
    levels: int = 4,
    prune: float = 60.0,
) -> TailEstimate:
    """``log P((a, b) in A(tau, lam))`` on a tensor grid over ``[0, 2c]^2``.

    Each cell carries its exact product-Rayleigh mass, so only the indicator is
    approximated: cells whose four corners agree count as fully in or out, the others
    are split into four up to ``levels`` times.  The remaining leaves are scored by
    the mass-weighted share of 8 x 8 sub-cell centres inside the region.  Cells
    lighter than ``exp(-prune)`` times the heaviest cell are dropped.  ``err`` compares
    that leaf scoring with the corner-fraction scoring, relative to the total; it is a
    conservative estimate of the error of ``log_p``.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    tau = spec.tau(eps)
    lam = spec.threshold(eps, _resolve_remainder(remainder_const))
    c = spec.cutoff_c
    s_a2 = var.sigma_a2 * eps ** (2.0 * spec.delta)
    s_b2 = var.sigma_b2 * eps ** (2.0 * spec.delta)
    length = 2.0 * c

    ea = np.linspace(0.0, length, n_a + 1)
    eb = np.linspace(0.0, length, n_b + 1)
    la = _log_interval_mass(ea[:-1], ea[1:], s_a2)
    lb = _log_interval_mass(eb[:-1], eb[1:], s_b2)
    corners = region_A_member(ea[:, None], eb[None, :], tau, lam, c)
    count = (
        corners[:-1, :-1].astype(np.int8) + corners[1:, :-1] + corners[:-1, 1:] + corners[1:, 1:]
    )
    logm = la[:, None] + lb[None, :]
    live = count > 0
    if not live.any():
        raise QuadratureError("no grid cell touches the event region")
    ref = float(np.max(logm[live]))
    keep = logm >= ref - prune

    full = (count == 4) & keep
    parts = [logm[full]]
    # track the heaviest accepted base cell to check it is away from the cutoff
    weight = np.where(full | ((count > 0) & keep), logm, -np.inf)
    i_max, j_max = np.unravel_index(int(np.argmax(weight)), weight.shape)
    if i_max == n_a - 1 or j_max == n_b - 1:
        raise QuadratureError("dominant cell sits at the outer edge of the grid")

    bi, bj = np.nonzero((count > 0) & (count < 4) & keep)
    a0, a1 = ea[bi], ea[bi + 1]
    b0, b1 = eb[bj], eb[bj + 1]
    corner_frac = count[bi, bj] / 4.0
    leaf_mass = np.zeros(0)
    leaf_disagree = np.zeros(0)
    for level in range(levels + 1):
        if a0.size == 0:
            break
        am = 0.5 * (a0 + a1)
        bm = 0.5 * (b0 + b1)
        if level == levels:
            leaf, frac = _score_leaves(a0, a1, b0, b1, tau, lam, c, s_a2, s_b2)
            with np.errstate(divide="ignore"):
                parts.append(leaf + np.log(frac))
            leaf_mass = leaf
            leaf_disagree = frac - corner_frac
            break
        # children: (a0, am), (am, a1) x (b0, bm), (bm, b1)
        ca0 = np.concatenate([a0, am, a0, am])
        ca1 = np.concatenate([am, a1, am, a1])
        cb0 = np.concatenate([b0, b0, bm, bm])
        cb1 = np.concatenate([bm, bm, b1, b1])
        m00 = region_A_member(ca0, cb0, tau, lam, c)
        m10 = region_A_member(ca1, cb0, tau, lam, c)
        m01 = region_A_member(ca0, cb1, tau, lam, c)
        m11 = region_A_member(ca1, cb1, tau, lam, c)
        cnt = m00.astype(np.int8) + m10 + m01 + m11
        lm = _log_interval_mass(ca0, ca1, s_a2) + _log_interval_mass(cb0, cb1, s_b2)
        parts.append(lm[cnt == 4])
        mixed = (cnt > 0) & (cnt < 4)
        a0, a1, b0, b1 = ca0[mixed], ca1[mixed], cb0[mixed], cb1[mixed]
        corner_frac = cnt[mixed] / 4.0

    log_p = float(logsumexp(np.concatenate(parts)))
    if not math.isfinite(log_p):
        raise QuadratureError("event mass underflowed on the grid")
    log_p = min(log_p, 0.0)
    # disagreement between centre and corner scoring of the unresolved leaves
    err = float(np.sum(np.exp(leaf_mass - log_p) * np.abs(leaf_disagree)))
    return TailEstimate(
        log_p,
        eps ** (2.0 * spec.delta) * log_p,
        "quadrature",
        err,
        eps,
        tau,
        {"lam": lam},
    )


# ---------------------------------------------------------------------------
# Monte Carlo


def default_tilt(spec: RegimeSpec, var: VariancePair, eps: float) -> float:
    """``1 - (dominant Rayleigh scale)^2 / z0^2`` clipped to ``[0, 0.9]``.

    Inflating both variances by ``1/(1 - theta)`` makes ``E a^2`` equal ``z0^2`` for the
    larger-variance amplitude, which puts the threshold in the bulk of the proposal.
    """
    scale2 = max(var.sigma_a2, var.sigma_b2) * eps ** (2.0 * spec.delta)
    return float(min(max(1.0 - scale2 / spec.z0**2, 0.0), 0.9))


def worker_streams(seed: int, workers: int) -> list[np.random.Generator]:
    """Independent counter-based (Philox) generators, one per worker."""
    if workers < 1:
        raise ValueError("workers must be >= 1")
    children = np.random.SeedSequence(seed).spawn(workers)
    return [np.random.Generator(np.random.Philox(ss)) for ss in children]


def _split(n: int, workers: int) -> list[int]:
    base, extra = divmod(n, workers)
    return [base + (1 if w < extra else 0) for w in range(workers)]


def _is_chunk(
    rng: np.random.Generator,
    n: int,
    tau: float,
    lam: float,
    c: float,
    s_a2: float,
    s_b2: float,
    theta: float,
) -> tuple[float, float, int]:
    s1 = s2 = 0.0
    hits = 0
    inflate = 1.0 / (1.0 - theta)
    log_norm = -2.0 * math.log1p(-theta)
    done = 0
    while done < n:
        m = min(MC_BATCH, n - done)
        ea = rng.standard_exponential(m)
        eb = rng.standard_exponential(m)
        a = np.sqrt(s_a2 * inflate * ea)
        b = np.sqrt(s_b2 * inflate * eb)
        inside = region_A_member(a, b, tau, lam, c)
        # likelihood ratio of the target and inflated Rayleigh pairs
        w = np.exp(log_norm - theta * inflate * (ea + eb)) * inside
        s1 += float(np.sum(w))
        s2 += float(np.sum(w * w))
        hits += int(np.count_nonzero(inside))
        done += m
    return s1, s2, hits


def log_tail_monte_carlo(
    spec: RegimeSpec,
    var: VariancePair,
    eps: float,
    n: int,
    seed: int,
    workers: int = 1,
    theta: float | None = None,
    remainder_const: float | None = None,
) -> TailEstimate:
    """Importance-sampled ``log P(A)`` with a delta-method standard error.

    Samples are split across ``workers`` independent Philox streams; partial sums are
    combined in worker order, so the result depends only on ``(seed, workers)``.
    """
    if n < 10_000:
        raise ValueError("n must be at least 1e4")
    tau = spec.tau(eps)
    lam = spec.threshold(eps, _resolve_remainder(remainder_const))
    s_a2 = var.sigma_a2 * eps ** (2.0 * spec.delta)
    s_b2 = var.sigma_b2 * eps ** (2.0 * spec.delta)
    theta = default_tilt(spec, var, eps) if theta is None else float(theta)
    if not 0.0 <= theta < 1.0:
        raise ValueError("theta must lie in [0, 1)")
    rngs = worker_streams(seed, workers)
    sizes = _split(n, workers)
    args = [(rng, m, tau, lam, spec.cutoff_c, s_a2, s_b2, theta) for rng, m in zip(rngs, sizes)]
    if workers == 1:
        results = [_is_chunk(*args[0])]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda x: _is_chunk(*x), args))
    s1 = sum(r[0] for r in results)
    s2 = sum(r[1] for r in results)
    hits = sum(r[2] for r in results)
    if hits == 0 or s1 <= 0:
        raise EstimateError("no sample fell in the event region")
    p = s1 / n
    variance = max(s2 / n - p * p, 0.0) * n / (n - 1)
    log_p = math.log(p)
    return TailEstimate(
        log_p,
        eps ** (2.0 * spec.delta) * log_p,
        "monte_carlo",
        math.sqrt(variance / n) / p,
        eps,
        tau,
        {"theta": theta, "hits": hits, "lam": lam, "workers": workers, "seed": seed},
    )


def direct_event_monte_carlo(
    spec: RegimeSpec,
    var: VariancePair,
    eps: float,
    n: int,
    seed: int,
    remainder_const: float | None = None,
) -> tuple[float, float]:
    """Plain sampling of complex Gaussian ``alpha, beta`` through the effective sup-norm.

    Returns ``(p, standard_error)`` for ``sup_x |u(t)| >= lam eps^(1 - delta)`` at
    ``t = c_time eps^-gamma`` (with the same cutoff as the region ``A``).
    """
    lam = spec.threshold(eps, _resolve_remainder(remainder_const))
    t = spec.c_time * eps ** (-spec.gamma)
    rng = np.random.Generator(np.random.Philox(seed))
    hits = 0
    done = 0
    while done < n:
        m = min(MC_BATCH, n - done)
        g = rng.standard_normal((4, m))
        alpha = math.sqrt(0.5 * var.sigma_a2) * (g[0] + 1j * g[1])
        beta = math.sqrt(0.5 * var.sigma_b2) * (g[2] + 1j * g[3])
        ra, rb = np.abs(alpha), np.abs(beta)
        theta = 2.0 * eps * eps * t * (ra * ra + rb * rb)
        sup = eps * sup_profile(ra, rb, theta)
        ok = (sup >= lam * eps ** (1.0 - spec.delta)) & (
            eps**spec.delta * (ra + rb) <= 2.0 * spec.cutoff_c
        )
        hits += int(np.count_nonzero(ok))
        done += m
    p = hits / n
    return p, math.sqrt(p * (1.0 - p) / n)


# ---------------------------------------------------------------------------
# regime sweep


@dataclass(frozen=True)
class SweepRow:
    eps: float
    scaled: float
    target_rate: float
    regime: str
    estimate: TailEstimate
    target_lower: float

    @property
    def gap(self) -> float:
        return abs(self.scaled - self.target_rate)


def regime_label(spec: RegimeSpec, var: VariancePair) -> str:
    if var.equal:
        return "equal-variance"
    if spec.resonant:
        return "resonant"
    return "sub-resonant" if spec.gamma < 2.0 * (1.0 - spec.delta) else "super-resonant"


def target_rates(spec: RegimeSpec, var: VariancePair) -> tuple[float, float]:
    """``(target, lower)``; they coincide except in the resonant window."""
    label = regime_label(spec, var)
    z2 = spec.z0**2
    if label == "equal-variance":
        r = -z2 / (2.0 * var.sigma_a2)
        return r, r
    if label == "sub-resonant":
        r = -z2 / (var.sigma_a2 + var.sigma_b2)
        return r, r
    if label == "super-resonant":
        r = -z2 / (2.0 * var.sigma_a2)
        return r, r
    upper = -z2 / (2.0 * var.sigma_a2)
    lower = -rate_J(spec.z0, spec.c_time) ** 2 / var.sigma_a2
    return upper, lower


def ldp_sweep(
    spec: RegimeSpec,
    var: VariancePair,
    eps_list,
    method: Literal["quadrature", "monte_carlo"] = "quadrature",
    **kwargs,
) -> list[SweepRow]:
    """Scaled log-probabilities along a decreasing ``eps`` list, with the limiting rates."""
    eps_list = [float(e) for e in eps_list]
    if any(e <= 0 for e in eps_list) or any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be positive and strictly decreasing")
    if not var.equal and var.sigma_a2 < var.sigma_b2:
        raise ValueError("sigma_a2 must be the larger variance")
    target, lower = target_rates(spec, var)
    label = regime_label(spec, var)
    rows = []
    for eps in eps_list:
        if method == "quadrature":
            est = log_tail_quadrature(spec, var, eps, **kwargs)
        elif method == "monte_carlo":
            est = log_tail_monte_carlo(spec, var, eps, **kwargs)
        else:
            raise ValueError(f"unknown method {method!r}")
        rows.append(SweepRow(eps, est.scaled, target, label, est, lower))
    return rows
