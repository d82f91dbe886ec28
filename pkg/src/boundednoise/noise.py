"""Bounded-support noise families, their normalisation, CDF and quantiles.

A family is a symmetric convex shape ``f`` on (-1, 1) with ``f -> inf`` at the
edges.  The noise law at magnitude ``R`` has density
``exp(-f(y / R)) / (R * Z_f)`` on ``(-R, R)``.

Values of ``f`` above :data:`F_MAX` are treated as ``+inf``: the density there
is exactly zero, so every law here is effectively supported on
``[-R * edge, R * edge]`` with ``edge = family.support_edge < 1``.
"""
from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .errors import DomainError, NumericError

F_MAX = K.F_MAX

_GL16 = np.polynomial.legendre.leggauss(16)
_GL8 = np.polynomial.legendre.leggauss(8)

BASE_KNOTS = 2048       # per half line, i.e. 4096 over (-1, 1)
BAND_KNOTS = 256
BAND_WIDTH = 1e-2
PANEL_ATOL = 1e-15
LUT_CELLS = 8192


class FamilyKind(str, enum.Enum):
    POLY_INVERSE = "poly"
    SINGLE_EXP = "single"
    DOUBLE_EXP = "double"


_CODES = {FamilyKind.POLY_INVERSE: K.POLY, FamilyKind.SINGLE_EXP: K.SINGLE,
          FamilyKind.DOUBLE_EXP: K.DOUBLE}


@dataclass(frozen=True)
class NoiseFamily:
    """Shape ``f`` of a bounded noise law.

    ``PolyInverse``: ``f = (1 - eta^2)^-p`` with ``p >= 1``.
    ``SingleExp``:   ``f = exp(1 / (1 - eta^2))``.
    ``DoubleExp``:   ``f = exp(exp(1 / (1 - eta^2)))``.
    """

    kind: FamilyKind = FamilyKind.POLY_INVERSE
    p: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "kind", FamilyKind(self.kind))
        if self.kind is FamilyKind.POLY_INVERSE:
            if not (math.isfinite(self.p) and self.p >= 1.0):
                raise DomainError(f"PolyInverse needs p >= 1, got {self.p}")
            object.__setattr__(self, "p", float(self.p))
        else:
            # p is meaningless for the exponential families; normalise for hashing
            object.__setattr__(self, "p", 0.0)

    @classmethod
    def poly(cls, p=2.0):
        return cls(FamilyKind.POLY_INVERSE, p)

    @classmethod
    def single_exp(cls):
        return cls(FamilyKind.SINGLE_EXP)

    @classmethod
    def double_exp(cls):
        return cls(FamilyKind.DOUBLE_EXP)

    @property
    def code(self) -> int:
        return _CODES[self.kind]

    @property
    def label(self) -> str:
        if self.kind is FamilyKind.POLY_INVERSE:
            return f"poly(p={self.p:g})"
        return self.kind.value

    @property
    def support_edge(self) -> float:
        """Largest ``eta`` with ``f(eta) <= F_MAX``."""
        if self.kind is FamilyKind.POLY_INVERSE:
            one_m = F_MAX ** (-1.0 / self.p)
        elif self.kind is FamilyKind.SINGLE_EXP:
            one_m = 1.0 / K.LOG_F_MAX
        else:
            one_m = 1.0 / K.LOGLOG_F_MAX
        return math.sqrt(1.0 - one_m)

    def f(self, eta):
        return eval_f(self, eta)

    def f_prime(self, eta):
        return eval_f_prime(self, eta)

    def f_second(self, eta):
        return eval_f_second(self, eta)

    def to_dict(self):
        d = {"family": self.kind.value}
        if self.kind is FamilyKind.POLY_INVERSE:
            d["p"] = self.p
        return d


def _check_domain(eta):
    eta = np.asarray(eta, dtype=float)
    if np.any(~(np.abs(eta) < 1.0)):
        raise DomainError("eta must lie strictly inside (-1, 1)")
    return eta


def _scalar_or_array(x, like):
    return float(np.asarray(x).reshape(-1)[0]) if np.ndim(like) == 0 else x


def eval_f(family: NoiseFamily, eta):
    """Shape value ``f(eta)``; ``+inf`` once it exceeds ``F_MAX``."""
    eta = _check_domain(eta)
    return _scalar_or_array(K.f_values(family.code, family.p, eta), eta)


def _shape_parts(eta):
    one_m = (1.0 - np.abs(eta)) * (1.0 + np.abs(eta))
    return 1.0 / one_m


def eval_f_prime(family: NoiseFamily, eta):
    eta = _check_domain(eta)
    h = _shape_parts(eta)
    f = K.f_values(family.code, family.p, eta)
    with np.errstate(over="ignore", invalid="ignore"):
        if family.kind is FamilyKind.POLY_INVERSE:
            out = 2.0 * family.p * eta * h ** (family.p + 1.0)
        elif family.kind is FamilyKind.SINGLE_EXP:
            out = 2.0 * eta * h * h * f
        else:
            out = 2.0 * eta * h * h * np.exp(np.minimum(h, 700.0)) * f
        out = np.where(np.isinf(f), np.copysign(np.inf, eta), out)
        out = np.where(eta == 0.0, 0.0, out)
    return _scalar_or_array(out, eta)


def eval_f_second(family: NoiseFamily, eta):
    eta = _check_domain(eta)
    h = _shape_parts(eta)
    e2 = eta * eta
    f = K.f_values(family.code, family.p, eta)
    with np.errstate(over="ignore", invalid="ignore"):
        if family.kind is FamilyKind.POLY_INVERSE:
            p = family.p
            out = 2.0 * p * h ** (p + 2.0) * (1.0 + (2.0 * p + 1.0) * e2)
        elif family.kind is FamilyKind.SINGLE_EXP:
            out = 2.0 * f * h ** 4 * (1.0 + 4.0 * e2 - 3.0 * e2 * e2)
        else:
            E = np.exp(np.minimum(h, 700.0))
            out = f * E * (4.0 * e2 * h ** 4 * (E + 1.0) + 2.0 * h * h + 8.0 * e2 * h ** 3)
        out = np.where(np.isinf(f), np.inf, out)
    return _scalar_or_array(out, eta)


# --------------------------------------------------------------------------
# quadrature
# --------------------------------------------------------------------------

def _gl(fun, a, b, rule):
    x, w = rule
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    nodes = mid[:, None] + half[:, None] * x[None, :]
    return half * (fun(nodes) * w[None, :]).sum(axis=1)


def panel_integrals(fun, a, b, atol=PANEL_ATOL, max_depth=30):
    """Integrate ``fun`` over each panel ``[a_i, b_i]``.

    Gauss-Legendre 16 with a Gauss-Legendre 8 error estimate; panels whose
    estimate exceeds ``atol`` are halved until they pass.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    out = np.zeros(a.shape)
    idx = np.arange(a.size)
    lo, hi = a.ravel(), b.ravel()
    flat = out.ravel()
    for depth in range(max_depth + 1):
        g16 = _gl(fun, lo, hi, _GL16)
        g8 = _gl(fun, lo, hi, _GL8)
        ok = np.abs(g16 - g8) <= atol * np.maximum(1.0, np.abs(g16))
        np.add.at(flat, idx[ok], g16[ok])
        if ok.all():
            return out
        lo, hi, idx = lo[~ok], hi[~ok], idx[~ok]
        mid = 0.5 * (lo + hi)
        lo, hi = np.concatenate([lo, mid]), np.concatenate([mid, hi])
        idx = np.concatenate([idx, idx])
    raise NumericError("panel quadrature did not converge", unresolved=int(idx.size),
                       worst_panel=(float(lo[0]), float(hi[0])))


# --------------------------------------------------------------------------
# normalised table
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class UnitTable:
    """Half-line table of the normalised law ``mu_f`` on ``[0, edge]``."""

    family: NoiseFamily
    knots: np.ndarray          # ascending, knots[0] = 0, knots[-1] = edge
    log_z: float               # log Z_f
    tail: np.ndarray           # S(knot) = P(eta > knot)
    dens: np.ndarray           # normalised density at knots
    ell_asc: np.ndarray = field(repr=False)
    eta_asc: np.ndarray = field(repr=False)
    slope_asc: np.ndarray = field(repr=False)
    lut: np.ndarray = field(repr=False)
    lut_g0: float = 0.0
    lut_inv_w: float = 1.0

    @property
    def kernel_args(self):
        """Arrays consumed by the quantile kernels."""
        return (self.packed, self.lut, self.lut_g0, self.lut_inv_w)

    @functools.cached_property
    def packed(self) -> np.ndarray:
        # one row per knot keeps an interpolation inside a single cache line
        z = np.zeros_like(self.ell_asc)
        return np.ascontiguousarray(np.stack([self.ell_asc, self.eta_asc, self.slope_asc, z], 1))

    @property
    def edge(self) -> float:
        return float(self.knots[-1])

    def unnorm(self, eta):
        with np.errstate(over="ignore"):
            return np.exp(-K.f_values(self.family.code, self.family.p, eta))

    def density(self, eta):
        eta = np.asarray(eta, dtype=float)
        out = np.zeros(eta.shape)
        inside = np.abs(eta) < 1.0
        out[inside] = self.unnorm(eta[inside]) * math.exp(-self.log_z)
        return out

    def tail_mass(self, x):
        """``P(eta > x)`` for ``x >= 0``, accurate in relative terms."""
        x = np.asarray(x, dtype=float)
        flat = np.clip(x.ravel(), 0.0, self.edge)
        j = np.clip(np.searchsorted(self.knots, flat, side="right") - 1, 0, self.knots.size - 2)
        right = self.knots[j + 1]
        part = _gl(self.unnorm, flat, right, _GL16) * math.exp(-self.log_z)
        out = self.tail[j + 1] + part
        out = np.where(flat >= self.edge, 0.0, out)
        return out.reshape(x.shape)

    def tail_quantile(self, s, exact=True):
        """Smallest ``x >= 0`` with ``P(eta > x) <= s`` (``s`` in (0, 1/2])."""
        s = np.asarray(s, dtype=float)
        flat = s.ravel()
        with np.errstate(divide="ignore"):
            x = K._np_hermite(np.log(flat), self.ell_asc, self.eta_asc, self.slope_asc)
        if not exact:
            return x.reshape(s.shape)
        lo = np.zeros_like(x)
        hi = np.full_like(x, self.edge)
        for _ in range(60):
            S = self.tail_mass(x)
            if np.all(np.abs(S - flat) <= 1e-15 * flat):
                break
            over = S > flat
            lo = np.where(over, x, lo)
            hi = np.where(over, hi, x)
            dens = self.density(x)
            with np.errstate(divide="ignore", invalid="ignore"):
                step = (S - flat) / dens
            newx = x + step
            # an exact hit gives step 0 and newx == x on the bracket; keep it
            bad = ~np.isfinite(newx) | (newx < lo) | (newx > hi)
            x = np.where(bad, 0.5 * (lo + hi), newx)
        # sound side: P(eta > x) must not exceed s
        for _ in range(20):
            over = self.tail_mass(x) > flat
            if not over.any():
                break
            x = np.where(over, np.minimum(self.edge, x + np.maximum(1e-15, 1e-13 * x)), x)
        over = self.tail_mass(x) > flat
        if over.any():
            # bracketed fallback; hi always satisfies the bound (S(edge) = 0)
            lo, hi = x[over], np.full(int(over.sum()), self.edge)
            target = flat[over]
            for _ in range(110):
                mid = 0.5 * (lo + hi)
                o = self.tail_mass(mid) > target
                lo, hi = np.where(o, mid, lo), np.where(o, hi, mid)
            x[over] = hi
        return x.reshape(s.shape)


def _band_knots(edge):
    ratio = (1e-12 / BAND_WIDTH) ** (1.0 / (BAND_KNOTS - 1))
    gaps = BAND_WIDTH * ratio ** np.arange(BAND_KNOTS)
    return edge - gaps


def _fritsch_carlson(x, y, m):
    # keep slopes inside the monotone region; only bites in the extreme tail
    d = np.diff(y) / np.diff(x)
    m = m.copy()
    a = m[:-1] / d
    b = m[1:] / d
    r = np.hypot(a, b)
    tau = np.where(r > 3.0, 3.0 / r, 1.0)
    m[:-1] = np.where(r > 3.0, tau * a * d, m[:-1])
    m[1:] = np.where(r > 3.0, tau * b * d, m[1:])
    return m


@functools.lru_cache(maxsize=64)
def unit_table(family: NoiseFamily) -> UnitTable:
    edge = family.support_edge
    base = np.linspace(0.0, edge - BAND_WIDTH, BASE_KNOTS)
    knots = np.unique(np.concatenate([base, _band_knots(edge), [edge]]))

    def unnorm(eta):
        with np.errstate(over="ignore"):
            return np.exp(-K.f_values(family.code, family.p, eta))

    panels = panel_integrals(unnorm, knots[:-1], knots[1:])
    if not np.all(np.isfinite(panels)) or panels.sum() <= 0:
        raise NumericError("normalisation failed", family=family.label)
    half = panels.sum()
    log_z = math.log(2.0 * half)
    # reverse cumulative sum keeps tail masses accurate in relative terms
    tail = np.concatenate([np.cumsum(panels[::-1])[::-1], [0.0]]) / (2.0 * half)
    dens = unnorm(knots) / (2.0 * half)

    keep = tail > 1e-300
    ell = np.log(tail[keep])[::-1]
    eta = knots[keep][::-1]
    slope = -(tail[keep] / dens[keep])[::-1]
    slope = _fritsch_carlson(ell, eta, slope)
    lut, g0, inv_w = _index_lut(ell)
    return UnitTable(family, knots, log_z, tail, dens,
                     np.ascontiguousarray(ell), np.ascontiguousarray(eta),
                     np.ascontiguousarray(slope), lut, g0, inv_w)


def _index_lut(ell, cells=LUT_CELLS):
    # bracket index on a uniform grid in g = log(-ell), where knots are spread
    # fairly evenly; cell j spans ell in [-exp(g0+(j+1)w), -exp(g0+j*w)]
    g0 = math.log(-ell[-1])
    g1 = math.log(-ell[0])
    w = (g1 - g0) / cells
    bounds = -np.exp(g0 + w * np.arange(cells + 2))
    idx = np.searchsorted(ell, bounds, side="right") - 1
    idx = np.clip(idx, 0, ell.size - 2).astype(np.int64)
    return np.ascontiguousarray(idx), g0, 1.0 / w


def normalize(family: NoiseFamily) -> float:
    """``log Z_f`` with ``Z_f = int_{-1}^{1} exp(-f)``."""
    return unit_table(family).log_z


# --------------------------------------------------------------------------
# scaled law
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ScaledNoise:
    """The noise law ``mu_{f,R}`` with support ``(-R, R)``."""

    family: NoiseFamily
    R: float

    def __post_init__(self):
        if not (math.isfinite(self.R) and self.R > 0):
            raise DomainError(f"R must be positive and finite, got {self.R}")
        object.__setattr__(self, "R", float(self.R))

    @property
    def table(self) -> UnitTable:
        return unit_table(self.family)

    @property
    def logZ(self) -> float:
        return self.table.log_z

    @property
    def log_z_r(self) -> float:
        return self.table.log_z + math.log(self.R)

    @property
    def edge(self) -> float:
        """Half-width of the effective support, ``R * family.support_edge``."""
        return self.R * self.table.edge

    def cdf_table(self):
        """``(y, CDF(y))`` knots over ``[-R, R]``."""
        t = self.table
        y = np.concatenate([[-1.0], -t.knots[::-1], t.knots[1:], [1.0]]) * self.R
        c = np.concatenate([[0.0], t.tail[::-1], 1.0 - t.tail[1:], [1.0]])
        return y, c

    def pdf(self, y):
        y = np.asarray(y, dtype=float)
        return _scalar_or_array(self.table.density(y / self.R) / self.R, y)

    def log_pdf(self, y):
        y = np.asarray(y, dtype=float)
        eta = y / self.R
        out = np.full(eta.shape, -np.inf)
        inside = np.abs(eta) < 1.0
        out[inside] = -K.f_values(self.family.code, self.family.p, eta[inside]) - self.log_z_r
        return _scalar_or_array(out, y)

    def cdf(self, y):
        y = np.asarray(y, dtype=float)
        eta = y / self.R
        s = self.table.tail_mass(np.abs(eta))
        out = np.where(eta < 0, s, 1.0 - s)
        return _scalar_or_array(out, y)

    def sf_abs(self, y):
        """``P(|eta| > y)``."""
        y = np.asarray(y, dtype=float)
        out = 2.0 * self.table.tail_mass(np.abs(y) / self.R)
        return _scalar_or_array(np.where(y < 0, 1.0, out), y)

    def quantile(self, u):
        u = np.asarray(u, dtype=float)
        if np.any((u < 0) | (u > 1)):
            raise DomainError("quantile level must lie in [0, 1]")
        t = self.table
        out = K.unit_quantile(u, *t.kernel_args) * self.R
        out = np.where(u == 0.0, -self.R, np.where(u == 1.0, self.R, out))
        return _scalar_or_array(out, u)

    def abs_quantile(self, tail_mass):
        """Smallest ``L`` with ``P(|eta| > L) <= tail_mass`` (exact refinement)."""
        tail_mass = np.asarray(tail_mass, dtype=float)
        if np.any((tail_mass <= 0) | (tail_mass >= 1)):
            raise DomainError("tail mass must lie in (0, 1)")
        x = self.table.tail_quantile(tail_mass / 2.0)
        return _scalar_or_array(x * self.R, tail_mass)
