"""Rate functions and the closed-form side of the abstract bound.

A rate function ``I`` describes a concentration profile
``P(|X| > t) <= C exp(-I(t))``.  From it we derive the crossover ``t*`` between
the sub-Gaussian and heavy-tailed regimes, the smallest admissible
``delta*_k``, the moment constant ``M`` and a two-regime tail bound for sums.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional

import numpy as np
from scipy import integrate, optimize

from .certification import PrivacyParams
from .errors import DomainError, NumericError
from .noise import FamilyKind, NoiseFamily

SCHEMA_VERSION = 1
_G_FLOOR = math.e + 1e-9


def _g(u: float) -> float:
    """``g(u) = 2 u ln(u) (ln ln u)^2`` for ``u > e``."""
    lu = math.log(u)
    return 2.0 * u * lu * math.log(lu) ** 2


def g_inverse(t: float) -> float:
    """Solution ``u > e`` of ``g(u) = t``; relative residual below 1e-12."""
    if t <= 0:
        raise DomainError("g^{-1} needs t > 0")
    lo = _G_FLOOR
    if t <= _g(lo):
        return lo
    hi = max(2.0 * lo, t)
    while _g(hi) < t:
        hi *= 2.0
    # g is increasing and log-smooth; solve in log u
    root = optimize.brentq(lambda x: math.log(_g(math.exp(x))) - math.log(t),
                           math.log(lo), math.log(hi), xtol=1e-15, rtol=1e-15, maxiter=500)
    return math.exp(root)


@dataclass(frozen=True)
class RateFunction:
    """``I(t)``: ``poly`` is ``(t/2p)^{p/(p+1)}``, ``double`` is ``min(t, g^{-1}(t))``,
    ``linear`` is ``t``; ``custom`` wraps a caller-supplied callable."""

    kind: str
    p: float = 0.0
    fn: Optional[Callable[[float], float]] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.kind not in ("poly", "double", "linear", "custom"):
            raise DomainError(f"unknown rate kind {self.kind!r}")
        if self.kind == "poly" and not self.p > 0:
            raise DomainError("PolyRate needs p > 0")
        if self.kind == "custom" and self.fn is None:
            raise DomainError("custom rate needs a callable")

    @classmethod
    def poly(cls, p=2.0):
        return cls("poly", float(p))

    @classmethod
    def double_exp(cls):
        return cls("double")

    @classmethod
    def linear(cls):
        return cls("linear")

    @classmethod
    def custom(cls, fn, name="custom"):
        return cls("custom", 0.0, fn)

    @property
    def label(self):
        return f"PolyRate(p={self.p:g})" if self.kind == "poly" else {
            "double": "DoubleExpRate", "linear": "Linear", "custom": "Custom"}[self.kind]

    @cached_property
    def crossover(self) -> float:
        """``t'`` where ``g^{-1}(t) = t`` (DoubleExpRate); ``inf`` otherwise."""
        if self.kind != "double":
            return math.inf
        # g^{-1}(t) - t changes sign where g(t) = t, i.e. 2 ln t (ln ln t)^2 = 1
        return optimize.brentq(lambda t: 2.0 * math.log(t) * math.log(math.log(t)) ** 2 - 1.0,
                               math.e + 1e-12, 1e6, xtol=1e-14, rtol=1e-15)

    def __call__(self, t: float) -> float:
        return rate_eval(self, t)


def rate_eval(rate: RateFunction, t: float) -> float:
    t = float(t)
    if t < 0:
        raise DomainError("rate functions are defined for t >= 0")
    if t == 0:
        return 0.0
    if rate.kind == "poly":
        p = rate.p
        return (t / (2.0 * p)) ** (p / (p + 1.0))
    if rate.kind == "linear":
        return t
    if rate.kind == "custom":
        return float(rate.fn(t))
    if t <= rate.crossover:
        return t
    return g_inverse(t)


def t_star(rate: RateFunction, k: float) -> float:
    """Solution of ``t = k I(t) / (2t)``; ``k`` may be any positive real."""
    if not k > 0:
        raise DomainError("k must be positive")

    def psi(logt):
        t = math.exp(logt)
        return 2.0 * t * t - k * rate_eval(rate, t)

    lo, hi = -1.0, 1.0
    while psi(lo) >= 0:
        lo -= 2.0
        if lo < -700:
            raise NumericError("t* bracket failed (low side)", k=k)
    while psi(hi) <= 0:
        hi += 2.0
        if hi > 700:
            raise NumericError("t* bracket failed (high side)", k=k)
    return math.exp(optimize.brentq(psi, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=500))


def t_star_poly_closed_form(p: float, k: float) -> float:
    return (k / (2.0 * (2.0 * p) ** (p / (p + 1.0)))) ** ((p + 1.0) / (p + 2.0))


def delta_star_k(rate: RateFunction, k: float, Cf: float = 1.0) -> float:
    if not Cf > 0:
        raise DomainError("Cf must be positive")
    return math.exp(-rate_eval(rate, t_star(rate, k)) / Cf)


def double_exp_delta_threshold(k: float) -> float:
    """``exp(-k / (log^2 k * log^4 log k))``, the delta ceiling for the double-exponential family.

    Its constants are not reconciled with :func:`delta_star_k`.
    """
    if not k > math.e:
        raise DomainError("k must exceed e")
    lk = math.log(k)
    return math.exp(-k / (lk * lk * math.log(lk) ** 4))


def _moment_integrand(rate, t):
    return (t * t + 2.0 * t) * math.exp(-0.5 * rate_eval(rate, t))


def moment_constant_m(rate: RateFunction, C: float = 1.0, horizon_factor: float = 1.0) -> float:
    """``max(1, C * int_0^inf (t^2 + 2t) exp(-I(t)/2) dt)``."""
    if not C > 0:
        raise DomainError("C must be positive")
    # horizon where t^3 e^{-I/2} < e^{-80}
    T = 1.0
    while 0.5 * rate_eval(rate, T) < 3.0 * math.log(T) + 80.0:
        T *= 2.0
        if T > 1e15:
            raise DomainError("moment integral diverges: I grows too slowly")
    T *= horizon_factor
    edges = [0.0, 1.0]
    while edges[-1] < T:
        edges.append(min(T, 2.0 * edges[-1]))
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        val, _ = integrate.quad(lambda t: _moment_integrand(rate, t), a, b,
                                epsabs=0.0, epsrel=1e-13, limit=200)
        total += val
    return max(1.0, C * total)


def heavy_tail_bound(rate: RateFunction, C: float, M: float, n: int, t: float) -> float:
    """Two-regime bound on ``P(|sum_{i<=n} X_i| > t)``."""
    if t <= 0:
        return 1.0
    t0 = t_star(rate, M * n)
    if t <= t0:
        val = 2.0 * math.exp(-t * t / (2.0 * M * n)) + C * n * math.exp(-rate_eval(rate, t0))
    else:
        It = rate_eval(rate, t)
        val = 2.0 * math.exp(-It / 4.0) + C * n * math.exp(-It)
    return min(1.0, val)


def theoretical_r(params: PrivacyParams, Cf: float = 1.0) -> float:
    return Cf * params.Delta * math.sqrt(params.k * math.log(1.0 / params.delta)) / params.epsilon


# --------------------------------------------------------------------------
# growth conditions on f
# --------------------------------------------------------------------------

def _log_parts(family: NoiseFamily, eta):
    """``(log f, log |f'|, log |f''|)`` without the overflow cap used elsewhere."""
    eta = np.asarray(eta, dtype=float)
    a = np.abs(eta)
    log_h = -np.log1p(-a) - np.log1p(a)
    h = np.exp(log_h)
    e2 = eta * eta
    with np.errstate(divide="ignore", over="ignore"):
        if family.kind is FamilyKind.POLY_INVERSE:
            p = family.p
            lf = p * log_h
            lf1 = math.log(2.0 * p) + np.log(a) + (p + 1.0) * log_h
            lf2 = math.log(2.0 * p) + (p + 2.0) * log_h + np.log1p((2.0 * p + 1.0) * e2)
        elif family.kind is FamilyKind.SINGLE_EXP:
            lf = h
            lf1 = math.log(2.0) + np.log(a) + 2.0 * log_h + h
            lf2 = math.log(2.0) + h + 4.0 * log_h + np.log(1.0 + 4.0 * e2 - 3.0 * e2 * e2)
        else:
            E = np.exp(h)
            lf = E
            lf1 = E + h + math.log(2.0) + np.log(a) + 2.0 * log_h
            lf2 = E + h + np.log(4.0 * e2 * h ** 4 * (E + 1.0) + 2.0 * h * h + 8.0 * e2 * h ** 3)
    return lf, lf1, lf2


@dataclass
class GrowthReport:
    family: str
    rate: str
    n_points: int
    max_violation: float       # max of I(|f'|) - f; <= 0 for a matched pair
    argmax_violation: float
    violations: int
    min_second_derivative_constant: float   # max |f''| / f^2
    skipped: int

    def to_dict(self):
        return {
            "schemaVersion": SCHEMA_VERSION, "family": self.family, "rate": self.rate,
            "nPoints": self.n_points, "maxViolation": self.max_violation,
            "argmaxViolation": self.argmax_violation, "violations": self.violations,
            "minSecondDerivativeConstant": self.min_second_derivative_constant,
            "skipped": self.skipped,
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


def verify_growth_conditions(family: NoiseFamily, rate: RateFunction, grid=None) -> GrowthReport:
    """Check ``I(|f'|) <= f`` and bound ``|f''| / f^2`` on a grid in (-1, 1).

    Points where ``f`` or ``f'`` exceed double range are skipped and counted.
    """
    if grid is None:
        grid = np.linspace(-0.999, 0.999, 10_000)
    grid = np.asarray(grid, dtype=float)
    if np.any(np.abs(grid) >= 1):
        raise DomainError("grid must lie inside (-1, 1)")
    lf, lf1, lf2 = _log_parts(family, grid)
    ok = (lf < 709) & (lf1 < 709)
    viol = np.full(grid.shape, -np.inf)
    for i in np.flatnonzero(ok):
        f = math.exp(lf[i])
        fp = math.exp(lf1[i]) if np.isfinite(lf1[i]) else 0.0
        viol[i] = rate_eval(rate, fp) - f
    c2 = np.exp(lf2 - 2.0 * lf)
    c2 = c2[np.isfinite(c2)]
    j = int(np.argmax(viol))
    return GrowthReport(
        family=family.label, rate=rate.label, n_points=int(grid.size),
        max_violation=float(viol[j]), argmax_violation=float(grid[j]),
        violations=int((viol > 0).sum()),
        min_second_derivative_constant=float(c2.max()) if c2.size else math.inf,
        skipped=int((~ok).sum()),
    )
