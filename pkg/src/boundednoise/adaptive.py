"""Sample-size and query-count planning for adaptive statistical queries.

A statistical query averages a per-row value in ``[0, 1]``, so it has
sensitivity ``1/n``.  Differential privacy with ``eps = alpha/8`` plus
sample accuracy ``alpha'`` transfers to population accuracy through

    alpha_out = alpha' + e^eps - 1 + c + 2d,   beta_out = beta'/c + delta/d.

Bounded noise is accurate on the sample with probability one (``beta' = 0``),
so ``c`` only needs a sliver of the accuracy budget.  The Gaussian mechanism
must split ``beta`` between ``beta'/c`` and ``delta/d`` and give ``c`` a real
share of the accuracy gap.  The default baseline (``gaussian_split="half"``)
gives ``c`` half the gap and sends half of ``beta`` to each term;
``"optimized"`` instead searches both shares over a grid in the Gaussian's
favour.  The chosen split is recorded in the plan metadata.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Optional, Union

import numpy as np

from .certification import (CertConfig, PrivacyParams, gaussian_sigma_opt,
                            max_error_quantile, noise_upper_bound, test_privacy)
from .errors import BudgetExhausted, DomainError, InfeasibleError
from .noise import FamilyKind, NoiseFamily, ScaledNoise
from .sampler import RngState, sample

SCHEMA_VERSION = 1
GAUSSIAN = "gaussian"
C_SHARE = 0.01                     # share of the accuracy gap reserved for c (bounded)
GAUSS_C_GRID = (0.02, 0.05, 0.1, 0.15, 0.2, 0.3, 0.4, 0.5)
GAUSS_BETA_GRID = (0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95)
GAUSS_SPLITS = ("half", "optimized")
_K_MAX = 2 ** 40

Mechanism = Union[NoiseFamily, str]


@dataclass(frozen=True)
class TransferParams:
    alpha: float
    beta: float
    c: float
    d: float

    def __post_init__(self):
        if not (0 < self.alpha < 0.5 and 0 < self.beta < 0.5):
            raise DomainError("alpha and beta must lie in (0, 1/2)")
        if not (self.c > 0 and self.d > 0):
            raise DomainError("c and d must be positive")


def transfer_accuracy(alpha_prime, beta_prime, epsilon, delta, c, d):
    """``(alpha_out, beta_out)`` of the transfer theorem."""
    if c <= 0 or d <= 0:
        raise DomainError("c and d must be positive")
    alpha_out = alpha_prime + math.expm1(epsilon) + c + 2.0 * d
    beta_out = beta_prime / c + delta / d
    return alpha_out, beta_out


def _accuracy_gap(alpha):
    gap = alpha / 2.0 - math.expm1(alpha / 8.0)
    if gap <= 0:
        raise InfeasibleError(f"alpha={alpha} leaves no sample-accuracy budget")
    return gap


@dataclass
class Plan:
    mechanism: str
    n: int
    k: int
    alpha: float
    beta: float
    epsilon: float
    delta: float
    alpha_prime: float
    beta_prime: float
    c: float
    d: float
    unit_scale: float              # R or sigma at sensitivity 1
    family: Optional[NoiseFamily] = None
    metadata: dict = field(default_factory=dict)

    @property
    def noise_scale(self) -> float:
        """R (bounded) or sigma (Gaussian) at sensitivity ``1/n``."""
        return self.unit_scale / self.n

    def guarantee(self):
        return transfer_accuracy(self.alpha_prime, self.beta_prime, self.epsilon,
                                 self.delta, self.c, self.d)

    def to_dict(self):
        d = {k: v for k, v in asdict(self).items() if k not in ("family", "metadata")}
        d["schemaVersion"] = SCHEMA_VERSION
        d["noiseScale"] = self.noise_scale
        d["family"] = self.family.to_dict() if self.family is not None else None
        d["metadata"] = self.metadata
        return d

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


def _is_gaussian(mechanism) -> bool:
    if isinstance(mechanism, str):
        if mechanism != GAUSSIAN:
            raise DomainError(f"unknown mechanism {mechanism!r}")
        return True
    if not isinstance(mechanism, NoiseFamily):
        raise DomainError("mechanism must be a NoiseFamily or 'gaussian'")
    return False


def _bounded_budget(alpha, beta):
    gap = _accuracy_gap(alpha)
    return dict(epsilon=alpha / 8.0, delta=alpha * beta / 4.0, d=alpha / 4.0,
                alpha_prime=(1.0 - C_SHARE) * gap, c=C_SHARE * gap, beta_prime=0.0)


def _gaussian_budget(alpha, beta, c_share, beta_share):
    # beta_share of beta goes to delta/d, the rest to beta'/c
    gap = _accuracy_gap(alpha)
    d = alpha / 4.0
    c = c_share * gap
    return dict(epsilon=alpha / 8.0, delta=beta_share * beta * d, d=d,
                alpha_prime=gap - c, c=c, beta_prime=(1.0 - beta_share) * beta * c)


def _delta_floor(family: NoiseFamily, k: int):
    from .theory import RateFunction, delta_star_k
    if family.kind is FamilyKind.POLY_INVERSE:
        return delta_star_k(RateFunction.poly(family.p), k)
    if family.kind is FamilyKind.DOUBLE_EXP:
        return delta_star_k(RateFunction.double_exp(), k)
    return None


def _split_grid(gaussian_split):
    if gaussian_split == "optimized":
        return [(cs, bs) for cs in GAUSS_C_GRID for bs in GAUSS_BETA_GRID]
    if gaussian_split == "half":
        return [(0.5, 0.5)]
    raise DomainError(f"unknown gaussian split {gaussian_split!r}")


def _gauss_unit_error(k, b, confidence_miss):
    sigma1 = gaussian_sigma_opt(PrivacyParams(b["epsilon"], b["delta"], k, 1.0))
    return sigma1, max_error_quantile(sigma1, k, 1.0 - confidence_miss)


def plan_for_queries(k: int, alpha: float, beta: float, mechanism: Mechanism,
                     config: CertConfig = CertConfig(), gaussian_split: str = "half") -> Plan:
    """Smallest-sample plan answering ``k`` statistical queries to ``(alpha, beta)``."""
    if int(k) != k or k < 1:
        raise DomainError("k must be a positive integer")
    k = int(k)
    if _is_gaussian(mechanism):
        best = None
        for cs, bs in _split_grid(gaussian_split):
            b = _gaussian_budget(alpha, beta, cs, bs)
            sigma1, err1 = _gauss_unit_error(k, b, b["beta_prime"])
            n = math.ceil(err1 / b["alpha_prime"])
            if best is None or n < best[0]:
                best = (n, b, sigma1, cs, bs)
        n, b, sigma1, cs, bs = best
        meta = {"split": gaussian_split, "cShareOfGap": cs, "betaShareForDelta": bs}
        return Plan(GAUSSIAN, n, k, alpha, beta, b["epsilon"], b["delta"], b["alpha_prime"],
                    b["beta_prime"], b["c"], b["d"], sigma1, None, meta)
    b = _bounded_budget(alpha, beta)
    params = PrivacyParams(b["epsilon"], b["delta"], k, 1.0)
    R1 = noise_upper_bound(mechanism, params, config)
    n = math.ceil(R1 / b["alpha_prime"])
    meta = {"cShareOfGap": C_SHARE, "deltaFloor": _delta_floor(mechanism, k)}
    return Plan("bounded", n, k, alpha, beta, b["epsilon"], b["delta"], b["alpha_prime"],
                0.0, b["c"], b["d"], R1, mechanism, meta)


def sample_size_for_queries(k: int, alpha: float, beta: float, mechanism: Mechanism,
                            config: CertConfig = CertConfig(),
                            gaussian_split: str = "half") -> int:
    return plan_for_queries(k, alpha, beta, mechanism, config, gaussian_split).n


def _feasible_bounded(n, k, alpha, beta, family, config):
    b = _bounded_budget(alpha, beta)
    params = PrivacyParams(b["epsilon"], b["delta"], k, 1.0)
    return test_privacy(family, n * b["alpha_prime"], params, config).certified


def _feasible_gaussian(n, k, alpha, beta, gaussian_split):
    for cs, bs in _split_grid(gaussian_split):
        b = _gaussian_budget(alpha, beta, cs, bs)
        _, err1 = _gauss_unit_error(k, b, b["beta_prime"])
        if err1 <= n * b["alpha_prime"]:
            return True
    return False


def feasible(n: int, k: int, alpha: float, beta: float, mechanism: Mechanism,
             config: CertConfig = CertConfig(), gaussian_split: str = "half") -> bool:
    """Whether ``n`` samples suffice for ``k`` queries."""
    if _is_gaussian(mechanism):
        return _feasible_gaussian(n, k, alpha, beta, gaussian_split)
    return _feasible_bounded(n, k, alpha, beta, mechanism, config)


def max_queries_for_sample_size(n: int, alpha: float, beta: float, mechanism: Mechanism,
                                config: CertConfig = CertConfig(), progress=None,
                                gaussian_split: str = "half") -> int:
    """Largest ``k`` with ``feasible(n, k)``, by doubling then integer bisection."""
    if n < 1:
        raise DomainError("n must be at least 1")

    def ok(k):
        res = feasible(n, k, alpha, beta, mechanism, config, gaussian_split)
        if progress is not None:
            progress(k, res)
        return res

    if not ok(1):
        return 0
    lo = 1
    hi = 2
    while ok(hi):
        lo = hi
        hi *= 2
        if hi > _K_MAX:
            return lo
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


# --------------------------------------------------------------------------
# session harness
# --------------------------------------------------------------------------

@dataclass
class TranscriptEntry:
    index: int
    sample_mean: float
    answer: float


@dataclass
class Transcript:
    plan: Plan
    seed: int
    entries: list = field(default_factory=list)

    def to_dict(self):
        return {"schemaVersion": SCHEMA_VERSION, "seed": self.seed, "plan": self.plan.to_dict(),
                "entries": [asdict(e) for e in self.entries]}

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


class AdaptiveSession:
    """Answers at most ``plan.k`` statistical queries on ``data``.

    Query ``i`` draws its noise from stream ``i`` of the session seed, so the
    noise of a query never depends on which queries came before it.
    """

    def __init__(self, data, plan: Plan, rng: RngState):
        self.data = np.asarray(data)
        if self.data.shape[0] != plan.n:
            raise DomainError(f"plan expects n={plan.n} rows, got {self.data.shape[0]}")
        self.plan = plan
        self.rng = rng
        self.transcript = Transcript(plan, rng.seed)
        if plan.mechanism != GAUSSIAN:
            self._scaled = ScaledNoise(plan.family, plan.noise_scale)

    @property
    def remaining(self) -> int:
        return self.plan.k - len(self.transcript.entries)

    def _noise(self, i):
        stream = RngState(self.rng.seed, i)
        if self.plan.mechanism == GAUSSIAN:
            return float(stream.generator().normal(0.0, self.plan.noise_scale))
        return float(sample(self._scaled, stream, 1)[0])

    def ask(self, evaluator: Callable) -> float:
        """Answer ``mean(evaluator(data))`` plus fresh noise.

        ``evaluator`` maps the data array to one value in ``[0, 1]`` per row.
        """
        if self.remaining <= 0:
            raise BudgetExhausted(f"plan allows {self.plan.k} queries")
        vals = np.asarray(evaluator(self.data), dtype=float)
        if vals.shape != (self.data.shape[0],):
            raise DomainError("evaluator must return one value per row")
        if np.any((vals < 0) | (vals > 1)) or not np.all(np.isfinite(vals)):
            raise DomainError("statistical query values must lie in [0, 1]")
        i = len(self.transcript.entries)
        mean = float(vals.mean())
        ans = mean + self._noise(i)
        self.transcript.entries.append(TranscriptEntry(i, mean, ans))
        return ans


def run_adaptive_session(data, query_stream: Union[Iterable, Callable], plan: Plan,
                         rng: RngState) -> Transcript:
    """Run a whole session.

    ``query_stream`` is an iterable of evaluators, or an analyst callable that
    receives the transcript so far and returns the next evaluator (``None``
    ends the session).  Asking more than ``plan.k`` queries raises
    :class:`BudgetExhausted`.
    """
    session = AdaptiveSession(data, plan, rng)
    if callable(query_stream):
        while True:
            q = query_stream(session.transcript)
            if q is None:
                break
            session.ask(q)
    else:
        for q in query_stream:
            session.ask(q)
    return session.transcript
