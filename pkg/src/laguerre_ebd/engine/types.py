from __future__ import annotations

from enum import Enum
from typing import Iterator

BinIndex = tuple[int, int, int]


class Sidedness(str, Enum):
    CAUSAL = "causal"
    TWO_SIDED = "two_sided"

    @property
    def is_causal(self) -> bool:
        return self is Sidedness.CAUSAL


class Direction(str, Enum):
    """Direction tag of a realized recursion."""
    FWD = "fwd"
    BWD = "bwd"
    SHARED = "fwd_and_bwd"
    ANTISYMMETRIC = "fwd_bwd_antisymmetric"


class FilterRole(str, Enum):
    ANALYSIS = "analysis"
    SYNTHESIS = "synthesis"
    DERIVATIVE = "derivative"


class FrameRole(str, Enum):
    RAW = "J"
    BACKGROUND = "I_hat"
    RESIDUAL = "I_eps"
    POWER = "P_hat"


# Bins excited by a moving quadratic point target (kx, ky, kz).
OMEGA_7: frozenset[BinIndex] = frozenset({
    (0, 0, 0), (0, 1, 0), (0, 2, 0), (1, 0, 0), (2, 0, 0), (0, 1, 1), (1, 0, 1),
})


def full_bins(degree: int) -> frozenset[BinIndex]:
    """All (B+1)^3 Laguerre bins for a model of the given degree."""
    r = range(degree + 1)
    return frozenset((kx, ky, kz) for kx in r for ky in r for kz in r)


def iter_sorted(bins: frozenset[BinIndex]) -> Iterator[BinIndex]:
    yield from sorted(bins)
