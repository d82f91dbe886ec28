"""Seeded inversion sampling from ``mu_{f,R}`` and the noisy query answer."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .errors import DomainError
from .noise import ScaledNoise

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class RngState:
    """A ``(seed, stream_index)`` pair naming one independent random stream.

    Streams are derived with :class:`numpy.random.SeedSequence` using the
    stream index as spawn key, so distinct indices give independent streams
    and the same pair always replays the same draws.
    """

    seed: int
    stream_index: int = 0

    def __post_init__(self):
        for name in ("seed", "stream_index"):
            val = getattr(self, name)
            if int(val) != val or val < 0 or val > _MASK64:
                raise DomainError(f"{name} must be a 64-bit unsigned integer, got {val}")
            object.__setattr__(self, name, int(val))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_index,))
        return np.random.Generator(np.random.Philox(ss))

    def substream(self, i: int) -> "RngState":
        """State for the ``i``-th child stream (used to split work)."""
        mixed = np.random.SeedSequence(self.seed, spawn_key=(self.stream_index, int(i)))
        return RngState(int(mixed.generate_state(1, np.uint64)[0]), int(i))


def uniforms(rng: RngState, n: int) -> np.ndarray:
    if n < 0:
        raise DomainError("n must be nonnegative")
    return rng.generator().random(int(n))


def sample(scaled: ScaledNoise, rng: RngState, n: int) -> np.ndarray:
    """``n`` i.i.d. draws; draw ``j`` is ``scaled.quantile(u_j)``."""
    u = uniforms(rng, n)
    if u.size == 0:
        return u
    t = scaled.table
    # the kernel maps u = 0 to the effective edge, keeping draws inside (-R, R)
    return K.unit_quantile(u, *t.kernel_args) * scaled.R


def answer_query(true_value: float, scaled: ScaledNoise, rng: RngState) -> float:
    """One noisy answer ``true_value + eta``."""
    return float(true_value + sample(scaled, rng, 1)[0])
