"""Monte Carlo privacy loss and the falsifier built on it.

The exact one-query oracle lives here too.

The privacy loss of one run with noise ``eta`` and per-query shifts ``v_i`` is
``sum_i f((eta_i + v_i)/R) - f(eta_i/R)``; all sampling here uses the
adversarial pattern ``v_i = +Delta`` for every query.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import _kernels as K
from .errors import DomainError
from .noise import _GL16, ScaledNoise
from .sampler import RngState

_CHUNK_ELEMS = 4_000_000


@dataclass(eq=False)
class LossSampleSet:
    losses: np.ndarray
    k: int
    Delta: float
    seed: int
    stream_index: int = 0
    shift_pattern: str = "all +Delta"
    n_infinite: int = field(init=False)

    def __post_init__(self):
        self.n_infinite = int(np.isposinf(self.losses).sum())

    @property
    def n(self) -> int:
        return int(self.losses.size)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "loss"])
            for i, x in enumerate(self.losses):
                w.writerow([i, repr(float(x))])


def privacy_loss_samples(scaled: ScaledNoise, k: int, Delta: float, n: int,
                         rng: RngState, progress=None) -> LossSampleSet:
    """``n`` independent realisations of the ``k``-query privacy loss."""
    if k < 1 or n < 0:
        raise DomainError("k must be positive and n nonnegative")
    if Delta < 0:
        raise DomainError("Delta must be nonnegative")
    if Delta >= scaled.R:
        return LossSampleSet(np.full(int(n), np.inf), k, Delta, rng.seed, rng.stream_index)
    gen = rng.generator()
    t = scaled.table
    fam = scaled.family
    d = Delta / scaled.R
    out = np.empty(int(n))
    rows = max(1, _CHUNK_ELEMS // k)
    for r0 in range(0, int(n), rows):
        r1 = min(int(n), r0 + rows)
        u = gen.random((r1 - r0, k))
        out[r0:r1] = K.loss_sums(u, d, fam.code, fam.p, *t.kernel_args)
        if progress is not None:
            progress(r1, n)
    if Delta == 0:
        out[:] = 0.0
    return LossSampleSet(out, k, float(Delta), rng.seed, rng.stream_index)


def estimate_delta_hat(samples: LossSampleSet, epsilon: float):
    """``(delta_hat, stderr)`` with ``delta_hat = mean(max(0, 1 - e^{eps - L}))``."""
    if samples.n == 0:
        raise DomainError("empty sample set")
    with np.errstate(over="ignore"):
        vals = np.maximum(0.0, -np.expm1(epsilon - samples.losses))
    vals[np.isposinf(samples.losses)] = 1.0
    m = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else math.inf
    return m, se


def _shift_loss(fam, d, eta):
    # log p(y) - log p(y - Delta) in unit coordinates; +inf where p(y - Delta) = 0
    with np.errstate(invalid="ignore"):
        return K.f_values(fam.code, fam.p, eta - d) - K.f_values(fam.code, fam.p, eta)


def exact_delta_oracle_1d(scaled: ScaledNoise, Delta: float, epsilon: float,
                          panels: int = 2 ** 16) -> float:
    """``int max(0, p(y) - e^eps p(y - Delta)) dy`` by composite Gauss-Legendre.

    The integrand is positive exactly left of the point ``eta0`` where the
    loss ``f(eta - d) - f(eta)`` crosses ``epsilon``; the region is meshed with
    ``panels`` Gauss-Legendre panels (16 nodes each) and a breakpoint where the
    shifted density vanishes.
    """
    if Delta < 0 or epsilon < 0:
        raise DomainError("Delta and epsilon must be nonnegative")
    if Delta == 0:
        return 0.0
    fam = scaled.family
    tab = scaled.table
    edge = tab.edge
    d = Delta / scaled.R

    # eta0 by bisection on the decreasing loss (infinities allowed)
    lo, hi = -edge, edge
    if _shift_loss(fam, d, np.array([hi]))[0] > epsilon:
        eta0 = hi
    else:
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if _shift_loss(fam, d, np.array([mid]))[0] > epsilon:
                lo = mid
            else:
                hi = mid
            if hi - lo <= 4 * np.finfo(float).eps:
                break
        eta0 = hi
    if eta0 <= -edge:
        return 0.0

    cuts = [-edge, eta0]
    kink = -edge + d
    if -edge < kink < eta0:
        cuts.insert(1, kink)
    x, w = _GL16
    total = 0.0
    span = eta0 + edge
    for a, b in zip(cuts[:-1], cuts[1:]):
        m = max(16, int(panels * (b - a) / span))
        knots = np.linspace(a, b, m + 1)
        aa, bb = knots[:-1], knots[1:]
        nodes = 0.5 * (aa + bb)[:, None] + 0.5 * (bb - aa)[:, None] * x[None, :]
        p = tab.density(nodes)
        q = tab.density(nodes - d)
        g = np.maximum(0.0, p - math.exp(epsilon) * q)
        total += float((g * w[None, :] * (0.5 * (bb - aa))[:, None]).sum())
    return min(1.0, total)


@dataclass
class FalsifierReport:
    verdict: str
    rho_hat: float
    rho_lower: float
    threshold: float
    count: int
    n: int
    n_infinite: int
    confidence: float = 0.99

    @property
    def refuted(self) -> bool:
        return self.verdict == "refuted"

    def to_dict(self):
        return {
            "verdict": self.verdict, "rhoHat": self.rho_hat, "rhoLower": self.rho_lower,
            "threshold": self.threshold, "count": self.count, "n": self.n,
            "nInfinite": self.n_infinite, "confidence": self.confidence,
        }


def clopper_pearson_lower(count: int, n: int, confidence: float = 0.99) -> float:
    """One-sided lower confidence bound for a binomial proportion."""
    if count <= 0:
        return 0.0
    return float(stats.beta.ppf(1.0 - confidence, count, n - count + 1))


def falsifier_threshold(epsilon: float, delta: float) -> float:
    return delta / -math.expm1(-epsilon)


def falsifier_check(scaled: ScaledNoise, k: int, Delta: float, epsilon: float, delta: float,
                    n: int, rng: RngState, confidence: float = 0.99) -> FalsifierReport:
    """Refute ``(eps, delta)``-DP if ``P(loss >= 2 eps)`` is provably too large.

    Any ``(eps, delta)``-DP mechanism has ``P(loss >= 2 eps) <= delta / (1 - e^{-eps})``
    under the shift pattern used here; ``refuted`` means the one-sided
    Clopper-Pearson lower bound on that probability exceeds the threshold.
    """
    if n < 1000:
        raise DomainError("falsifier needs n >= 1000 samples")
    s = privacy_loss_samples(scaled, k, Delta, n, rng)
    count = int((s.losses >= 2.0 * epsilon).sum())
    lower = clopper_pearson_lower(count, n, confidence)
    thr = falsifier_threshold(epsilon, delta)
    verdict = "refuted" if lower > thr else "notRefuted"
    return FalsifierReport(verdict, count / n, lower, thr, count, n, s.n_infinite, confidence)
