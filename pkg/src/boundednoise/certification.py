"""Sound MGF privacy certificates and noise calibration, plus the Gaussian baseline.

The certificate follows the truncation + Chernoff route: coordinates with
``|eta_i| > L`` are charged to ``delta1`` by a union bound, and the tail of the
truncated privacy loss is bounded through ``inf_lambda k*log E[e^{lambda X}] -
lambda*t`` and integrated against ``e^{eps - t}``.

Every numerical approximation on this path errs upward, so a ``certified``
verdict is a proof of ``(eps, delta)``-DP for the built-in (symmetric,
log-concave) families; ``rejected`` may be conservative.

The MGF of ``X = f(eta + d) - f(eta)`` restricted to ``|eta| <= L`` is bounded
by a finite set of weighted atoms ``(w_i, v_i)`` with
``E[e^{lambda X}; |eta| <= L] <= sum_i w_i exp(lambda v_i)`` for every
``lambda >= 0``.  Right of ``-d/2`` the map ``eta -> x(eta)`` is convex, so
``exp(lambda x)`` lies under its chord on each panel; left of ``-d/2`` it is
concave and lies under its tangent at the panel midpoint.  Integrating the
linear majorants against the density gives two atoms per panel.  The plain
right-endpoint Riemann bound is kept as ``scheme="riemann"``.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy import optimize, special, stats

from . import _kernels as K
from .errors import DomainError, InfeasibleError, NumericError
from .noise import _GL16, NoiseFamily, ScaledNoise, eval_f_prime

SCHEMA_VERSION = 1
_MASS_INFLATION = 1.0 + 1e-12
_ULP = np.finfo(float).eps
_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class PrivacyParams:
    epsilon: float
    delta: float
    k: int = 1
    Delta: float = 1.0

    def __post_init__(self):
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise DomainError(f"epsilon must be positive, got {self.epsilon}")
        if not (0 < self.delta < 1):
            raise DomainError(f"delta must lie in (0, 1), got {self.delta}")
        if int(self.k) != self.k or self.k < 1:
            raise DomainError(f"k must be a positive integer, got {self.k}")
        if not (self.Delta > 0 and math.isfinite(self.Delta)):
            raise DomainError(f"Delta must be positive, got {self.Delta}")
        object.__setattr__(self, "k", int(self.k))
        object.__setattr__(self, "epsilon", float(self.epsilon))
        object.__setattr__(self, "delta", float(self.delta))
        object.__setattr__(self, "Delta", float(self.Delta))

    def replace(self, **kw) -> "PrivacyParams":
        d = asdict(self)
        d.update(kw)
        return PrivacyParams(**d)


@dataclass(frozen=True)
class CertConfig:
    delta1_fraction: float = 0.01
    mgf_panels: int = 2 ** 14
    tail_horizon: float = 60.0
    t_grid_points: int = 512
    lambda_tolerance: float = 1e-8
    bisect_rel_tol: float = 1e-6
    lambda_grid_ratio: float = 1.05
    lambda_grid_max: int = 2048
    scheme: str = "chord"

    def __post_init__(self):
        if not (0 < self.delta1_fraction < 1):
            raise DomainError("delta1_fraction must lie in (0, 1)")
        for name in ("mgf_panels", "t_grid_points", "lambda_grid_max"):
            if int(getattr(self, name)) < 2:
                raise DomainError(f"{name} must be at least 2")
        for name in ("tail_horizon", "lambda_tolerance", "bisect_rel_tol"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive")
        if not self.lambda_grid_ratio > 1:
            raise DomainError("lambda_grid_ratio must exceed 1")
        if self.scheme not in ("chord", "riemann"):
            raise DomainError(f"unknown MGF scheme {self.scheme!r}")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise DomainError(f"unknown CertConfig fields: {sorted(unknown)}")
        return cls(**d)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class Certificate:
    family: NoiseFamily
    R: float
    params: PrivacyParams
    L: float
    delta1: float
    delta2: float
    verdict: str
    reject_reason: Optional[str] = None
    config_hash: str = ""
    lambda_trace: dict = field(default_factory=dict)

    @property
    def certified(self) -> bool:
        return self.verdict == "certified"

    def to_dict(self):
        d = {"schemaVersion": SCHEMA_VERSION}
        d.update(self.family.to_dict())
        d.setdefault("p", None)
        d.update({
            "R": self.R, "L": self.L, "delta1": self.delta1, "delta2": self.delta2,
            "epsilon": self.params.epsilon, "delta": self.params.delta,
            "k": self.params.k, "Delta": self.params.Delta,
            "verdict": self.verdict, "configHash": self.config_hash,
        })
        if self.reject_reason:
            d["rejectReason"] = self.reject_reason
        # strict JSON has no NaN; unevaluated terms become null
        return {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in d.items()}

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


# --------------------------------------------------------------------------
# truncation and MGF atoms
# --------------------------------------------------------------------------

def truncation_threshold(scaled: ScaledNoise, tail_mass: float) -> float:
    """Smallest ``L`` with ``P(|eta| > L) <= tail_mass``."""
    if not (0 < tail_mass < 1):
        raise DomainError("tail mass must lie in (0, 1)")
    return float(scaled.abs_quantile(tail_mass))


@dataclass(frozen=True, eq=False)
class MgfAtoms:
    """Weighted atoms dominating the truncated MGF for all ``lambda >= 0``."""

    logw: np.ndarray
    v: np.ndarray
    log_mass: float   # log P(|eta| <= L), the value at lambda = 0

    @property
    def vmax(self) -> float:
        return float(self.v.max())

    def log_mgf(self, lams):
        lams = np.atleast_1d(np.asarray(lams, dtype=float))
        return K.log_mgf_grid(lams, self.logw, self.v)

    def slope(self, lam) -> float:
        """Derivative of the atom log-MGF at ``lam`` (the tilted mean)."""
        return K.tilted_mean(lam, self.logw, self.v)


def _check_feasible(scaled: ScaledNoise, L: float, Delta: float):
    if L + Delta >= scaled.R:
        raise InfeasibleError("L+Δ ≥ R")
    if (L + Delta) / scaled.R > scaled.table.edge:
        raise InfeasibleError("f overflows at L+Δ")


def mgf_atoms(scaled: ScaledNoise, L: float, Delta: float,
              panels: int = 2 ** 14, scheme: str = "chord") -> MgfAtoms:
    _check_feasible(scaled, L, Delta)
    fam = scaled.family
    tab = scaled.table
    ell = L / scaled.R
    d = Delta / scaled.R
    knots = np.linspace(-ell, ell, int(panels) + 1)
    if -ell < -0.5 * d < ell:
        knots = np.unique(np.concatenate([knots, [-0.5 * d]]))
    a, b = knots[:-1], knots[1:]
    h = b - a

    x, wq = _GL16
    nodes = 0.5 * (a + b)[:, None] + 0.5 * h[:, None] * x[None, :]
    dens = tab.density(nodes) * (0.5 * h)[:, None] * wq[None, :]
    w_a = (dens * (b[:, None] - nodes)).sum(axis=1) / h * _MASS_INFLATION
    w_b = (dens * (nodes - a[:, None])).sum(axis=1) / h * _MASS_INFLATION

    def loss(eta):
        fp = K.f_values(fam.code, fam.p, eta + d)
        f0 = K.f_values(fam.code, fam.p, eta)
        # pad by a few ulps of the larger term: f and the subtraction both round
        return fp - f0 + 16.0 * _ULP * np.maximum(np.abs(fp), np.abs(f0))

    if d == 0.0:
        vals_a = vals_b = np.zeros_like(a)
        weights = [w_a + w_b]
        values = [vals_a]
    elif scheme == "riemann":
        weights = [w_a + w_b]
        values = [loss(b)]
    else:
        xa, xb = loss(a), loss(b)
        c = 0.5 * (a + b)
        xc = loss(c)
        dxc = np.asarray(eval_f_prime(fam, c + d)) - np.asarray(eval_f_prime(fam, c))
        convex = a >= -0.5 * d
        half = 0.5 * h
        lo_v = np.where(convex, xa, xc - dxc * half)
        hi_v = np.where(convex, xb, xc + dxc * half)
        weights = [w_a, w_b]
        values = [lo_v, hi_v]
    w = np.concatenate(weights)
    v = np.concatenate(values)
    keep = w > 0
    w, v = w[keep], v[keep]
    if not np.all(np.isfinite(v)):
        raise InfeasibleError("f overflows at L+Δ")
    mass = float(w.sum())
    return MgfAtoms(np.ascontiguousarray(np.log(w)), np.ascontiguousarray(v),
                    math.log(mass))


def log_mgf(scaled: ScaledNoise, L: float, lam: float, Delta: float,
            config: CertConfig = CertConfig()) -> float:
    """Upper bound on ``log E[exp(lam * X); |eta| <= L]``."""
    if lam < 0:
        raise DomainError("lambda must be nonnegative")
    atoms = mgf_atoms(scaled, L, Delta, config.mgf_panels, config.scheme)
    return float(atoms.log_mgf([lam])[0])


# --------------------------------------------------------------------------
# Chernoff deviation bound
# --------------------------------------------------------------------------

def _golden(fun, lo, hi, rtol):
    c = hi - _INV_PHI * (hi - lo)
    d = lo + _INV_PHI * (hi - lo)
    fc, fd = fun(c), fun(d)
    while hi - lo > rtol * max(hi, 1e-300):
        if fc <= fd:
            hi, d, fd = d, c, fc
            c = hi - _INV_PHI * (hi - lo)
            fc = fun(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + _INV_PHI * (hi - lo)
            fd = fun(d)
    return (c, fc) if fc <= fd else (d, fd)


def minimize_chernoff(atoms: MgfAtoms, k: int, t: float, rtol: float = 1e-8):
    """``(lambda, inf_lambda k*Lambda(lambda) - lambda*t)``; any lambda is sound."""
    if t >= k * atoms.vmax:
        return math.inf, -math.inf

    def obj(lam):
        return k * float(atoms.log_mgf([lam])[0]) - lam * t

    prev_lam, prev = 0.0, k * atoms.log_mass
    lam = 1e-6
    cur = obj(lam)
    while cur < prev:
        prev_lam, prev = lam, cur
        lam *= 2.0
        if lam > 1e300:
            raise NumericError("lambda bracket diverged", t=t, k=k)
        cur = obj(lam)
    lo = prev_lam / 2.0 if prev_lam > 1e-6 else 0.0
    best_lam, best = _golden(obj, lo, lam, rtol)
    if prev < best:
        best_lam, best = prev_lam, prev
    return best_lam, best


def deviation_bound(scaled: ScaledNoise, L: float, Delta: float, k: int, t: float,
                    config: CertConfig = CertConfig()) -> float:
    """Upper bound on ``P(sum_i X_i > t, all |eta_i| <= L)`` for any shifts in [-Δ, Δ]."""
    if t <= 0:
        return 1.0
    atoms = mgf_atoms(scaled, L, Delta, config.mgf_panels, config.scheme)
    _, log_b = minimize_chernoff(atoms, k, t, config.lambda_tolerance)
    return float(min(1.0, math.exp(log_b)))


def _lambda_grid(atoms: MgfAtoms, k: int, t_lo: float, t_hi: float, config: CertConfig):
    """Geometric lambda grid covering the optimal lambdas for t in [t_lo, t_hi]."""
    def slope_k(lam):
        return k * atoms.slope(lam)

    lam_hi = 1e-6
    while slope_k(lam_hi) < t_hi and lam_hi < 1e12:
        lam_hi *= 2.0
    lam_lo = 1e-6
    if slope_k(0.0) < t_lo:
        a, b = 0.0, lam_hi
        for _ in range(200):
            m = 0.5 * (a + b)
            if slope_k(m) < t_lo:
                a = m
            else:
                b = m
            if b - a <= 1e-3 * b:
                break
        lam_lo = max(a, 1e-12 * lam_hi, 1e-300)
    lam_lo = min(lam_lo, lam_hi) / 2.0
    lam_hi *= 2.0
    n = int(math.ceil(math.log(lam_hi / lam_lo) / math.log(config.lambda_grid_ratio))) + 1
    n = max(16, min(n, config.lambda_grid_max))
    return np.concatenate([[0.0], np.geomspace(lam_lo, lam_hi, n)])


def delta2_integral(scaled: ScaledNoise, L: float, Delta: float, k: int, epsilon: float,
                    config: CertConfig = CertConfig(), *, atoms: MgfAtoms = None,
                    trace: dict = None) -> float:
    """Upper bound on ``int_eps^inf B(t) e^{eps - t} dt``.

    On each panel ``[t_i, t_{i+1}]`` of a geometric t-grid, ``B(t)`` is bounded by
    ``exp(k*Lambda(lambda) - lambda*t)`` for a single lambda, which integrates in
    closed form; the best lambda of a geometric grid is taken per panel.  The
    range beyond ``eps + tail_horizon`` is handled the same way.
    """
    if atoms is None:
        atoms = mgf_atoms(scaled, L, Delta, config.mgf_panels, config.scheme)
    t_top = k * atoms.vmax          # P(sum > t) = 0 beyond this
    if t_top <= epsilon:
        return 0.0
    T = epsilon + config.tail_horizon
    t_end = min(T, t_top)
    tg = np.geomspace(epsilon, t_end, int(config.t_grid_points))
    tg[0], tg[-1] = epsilon, t_end
    lams = _lambda_grid(atoms, k, epsilon, t_end, config)
    klog = k * atoms.log_mgf(lams)

    t0, dt = tg[:-1], np.diff(tg)
    one_l = 1.0 + lams
    # log of int_{t0}^{t0+dt} exp(kL - lam t + eps - t) dt, for each (lam, panel)
    log_int = (klog[:, None] + epsilon - one_l[:, None] * t0[None, :]
               + np.log(-np.expm1(-one_l[:, None] * dt[None, :])) - np.log(one_l)[:, None])
    best = log_int.min(axis=0)
    cap = epsilon - t0 + np.log(-np.expm1(-dt))   # B <= 1
    panel_logs = np.minimum(best, cap)
    total = float(np.exp(special.logsumexp(panel_logs)))
    tail = 0.0
    if t_top > T:
        log_tail = (klog + epsilon - one_l * T - np.log(one_l)).min()
        tail = float(np.exp(min(log_tail, epsilon - T)))
    if trace is not None:
        arg = log_int.argmin(axis=0)
        trace.update(lambda_min=float(lams[1]), lambda_max=float(lams[-1]),
                     lambda_points=int(lams.size), lambda_at_eps=float(lams[arg[0]]),
                     t_top=float(t_top), tail=tail)
    return total + tail


def delta2_left_endpoint(scaled: ScaledNoise, L: float, Delta: float, k: int,
                         epsilon: float, config: CertConfig = CertConfig()) -> float:
    """Left-endpoint version of :func:`delta2_integral` (coarser, still an upper bound)."""
    atoms = mgf_atoms(scaled, L, Delta, config.mgf_panels, config.scheme)
    t_top = k * atoms.vmax
    if t_top <= epsilon:
        return 0.0
    T = epsilon + config.tail_horizon
    tg = np.geomspace(epsilon, T, int(config.t_grid_points))
    tg[0], tg[-1] = epsilon, T
    lams = _lambda_grid(atoms, k, epsilon, min(T, t_top), config)
    klog = k * atoms.log_mgf(lams)
    logB = np.minimum(0.0, (klog[:, None] - lams[:, None] * tg[None, :]).min(axis=0))
    logB = np.where(tg >= t_top, -np.inf, logB)
    B = np.exp(logB)
    w = np.exp(epsilon - tg[:-1]) - np.exp(epsilon - tg[1:])
    return float((B[:-1] * w).sum() + B[-1] * math.exp(epsilon - T))


# --------------------------------------------------------------------------
# certificate and calibration
# --------------------------------------------------------------------------

def test_privacy(family: NoiseFamily, R: float, params: PrivacyParams,
                 config: CertConfig = CertConfig()) -> Certificate:
    """Sound (eps, delta) check for ``k`` Δ-sensitive queries with noise ``mu_{f,R}``."""
    scaled = ScaledNoise(family, R)
    delta1 = config.delta1_fraction * params.delta
    L = truncation_threshold(scaled, delta1 / params.k)
    cert = Certificate(family, float(R), params, L, delta1, math.nan, "rejected",
                       config_hash=config.digest())
    try:
        atoms = mgf_atoms(scaled, L, params.Delta, config.mgf_panels, config.scheme)
    except InfeasibleError as exc:
        cert.reject_reason = str(exc)
        return cert
    trace = {}
    delta2 = delta2_integral(scaled, L, params.Delta, params.k, params.epsilon, config,
                             atoms=atoms, trace=trace)
    cert.delta2 = delta2
    cert.lambda_trace = trace
    if delta1 + delta2 <= params.delta:
        cert.verdict = "certified"
    else:
        cert.reject_reason = "δ1+δ2 > δ"
    return cert


# keep pytest from collecting the algorithm as a test
test_privacy.__test__ = False


def noise_upper_bound(family: NoiseFamily, params: PrivacyParams,
                      config: CertConfig = CertConfig(), *, return_certificate=False):
    """Smallest certified noise magnitude by doubling then bisection."""
    def ok(R):
        return test_privacy(family, R, params, config)

    b = params.Delta
    cert = ok(b)
    while not cert.certified:
        b *= 2.0
        if b > 2.0 ** 60 * params.Delta:
            raise NumericError("doubling exceeded 2^60·Δ without a certificate",
                               params=asdict(params))
        cert = ok(b)
    a = b / 2.0 if b > params.Delta else 0.0
    while b - a > config.bisect_rel_tol * b:
        m = 0.5 * (a + b)
        c = ok(m)
        if c.certified:
            b, cert = m, c
        else:
            a = m
    return (b, cert) if return_certificate else b


# --------------------------------------------------------------------------
# Gaussian baseline
# --------------------------------------------------------------------------

def gaussian_log_delta(sigma: float, epsilon: float, l2_sensitivity: float) -> float:
    """``log delta(sigma)`` of the Gaussian mechanism, exact, in log space."""
    a = l2_sensitivity / (2.0 * sigma) - epsilon * sigma / l2_sensitivity
    b = -l2_sensitivity / (2.0 * sigma) - epsilon * sigma / l2_sensitivity
    la = special.log_ndtr(a)
    lb = special.log_ndtr(b) + epsilon
    diff = lb - la
    if diff >= 0:
        return -math.inf
    return float(la + math.log(-math.expm1(diff)))


def gaussian_delta(sigma: float, params: PrivacyParams) -> float:
    return math.exp(gaussian_log_delta(sigma, params.epsilon, params.Delta * math.sqrt(params.k)))


def gaussian_sigma_opt(params: PrivacyParams) -> float:
    """Exact smallest sigma for which the Gaussian mechanism is (eps, delta)-DP."""
    l2 = params.Delta * math.sqrt(params.k)
    target = math.log(params.delta)

    def g(log_sigma):
        return gaussian_log_delta(math.exp(log_sigma), params.epsilon, l2) - target

    lo, hi = math.log(l2) - 10.0, math.log(l2) + 10.0
    while g(lo) < 0:
        lo -= 10.0
        if lo < -700:
            raise NumericError("gaussian bracket failed (low side)")
    while g(hi) > 0:
        hi += 10.0
        if hi > 700:
            raise NumericError("gaussian bracket failed (high side)")
    root = optimize.brentq(g, lo, hi, xtol=1e-15, rtol=4 * _ULP, maxiter=500)
    return math.exp(root)


def max_error_quantile(noise, k: int, q: float) -> float:
    """``m`` with ``P(max_i |eta_i| <= m) = q`` over ``k`` i.i.d. draws.

    ``noise`` is a Gaussian standard deviation (float) or a :class:`ScaledNoise`.
    """
    if not (0 < q < 1):
        raise DomainError("q must lie in (0, 1)")
    # per-coordinate two-sided tail: 1 - q^{1/k}
    tail = -math.expm1(math.log(q) / k)
    if isinstance(noise, ScaledNoise):
        return float(noise.abs_quantile(tail))
    return float(noise) * float(stats.norm.isf(tail / 2.0))
