"""
Exponentially weighted orthonormal polynomial bases.

The causal basis (weight p^m, m >= 0) gives the discrete Laguerre
polynomials; the two-sided basis uses p^|m| over all integers. Moment sums
are closed-form rationals in p, obtained by repeated differentiation of
the geometric series.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import Polynomial
from numpy.polynomial import polynomial as P

from .errors import ConditioningError, DomainError
from .types import Sidedness

MAX_DEGREE = 6
MAX_POLE_RADIUS = 0.999
MAX_CONDITION = 1e13


def _check_pole(p: float) -> None:
    if not (0.0 < p < 1.0) or not math.isfinite(p):
        raise DomainError(f"Pole radius must lie in (0, 1), got {p}")


def _check_order(k: int) -> None:
    if int(k) != k or k < 0:
        raise DomainError(f"Moment order must be a non-negative integer, got {k}")


@dataclass(frozen=True, slots=True)
class BasisSpec:
    """
    Design parameters of one basis.

    Attributes:
        degree: Polynomial degree B.
        p: Pole radius, p = e^sigma with sigma < 0.
        sidedness: Causal (Laguerre) or two-sided weight.
    """
    degree: int
    p: float
    sidedness: Sidedness = Sidedness.CAUSAL

    def __post_init__(self) -> None:
        _check_pole(self.p)
        if int(self.degree) != self.degree or self.degree < 0:
            raise DomainError(f"Degree must be a non-negative integer, got {self.degree}")

    @staticmethod
    def from_sigma(sigma: float, degree: int = 2,
                   sidedness: Sidedness = Sidedness.CAUSAL) -> "BasisSpec":
        return BasisSpec(degree=degree, p=math.exp(sigma), sidedness=sidedness)

    @property
    def sigma(self) -> float:
        return math.log(self.p)


@dataclass(frozen=True, slots=True, eq=False)
class AlphaMatrix:
    """
    Lower-triangular coefficient matrix of an orthonormal basis.

    Row k holds the monomial coefficients of psi_k, so that
    psi_k(m) = sum_j matrix[k, j] * m**j.
    """
    matrix: np.ndarray
    p: float
    sidedness: Sidedness

    def __post_init__(self) -> None:
        m = np.array(self.matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DomainError(f"Alpha matrix must be square, got shape {m.shape}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def degree(self) -> int:
        return self.matrix.shape[0] - 1

    def row(self, k: int) -> np.ndarray:
        return self.matrix[k]

    def evaluate(self, k: int, m):
        return eval_basis(self, k, m)


@lru_cache(maxsize=None)
def _moment_numerator(k: int) -> Polynomial:
    # sum_m m^k x^m = N_k(x) / (1 - x)^(k+1); N_{k+1} = x(1-x) N_k' + (k+1) x N_k
    x = Polynomial([0.0, 1.0])
    num = Polynomial([1.0])
    for j in range(k):
        num = x * (1 - x) * num.deriv() + (j + 1) * x * num
    return num


def moment_numerator(k: int) -> np.ndarray:
    """Coefficients (ascending) of N_k with sum_m m^k x^m = N_k(x)/(1-x)^(k+1)."""
    _check_order(k)
    return _moment_numerator(int(k)).coef.copy()


def one_sided_moment(k: int, p: float) -> float:
    """
    Sum of m^k p^m over m >= 0, in closed form.

    Args:
        k: Non-negative moment order.
        p: Pole radius in (0, 1).
    Returns:
        The exact moment as a double.
    Raises:
        DomainError: If p is outside (0, 1) or k is not a non-negative integer.
    """
    _check_pole(p)
    _check_order(k)
    k = int(k)
    return float(_moment_numerator(k)(p) / (1.0 - p) ** (k + 1))


def two_sided_moment(k: int, p: float) -> float:
    """
    Sum of m^k p^|m| over all integers m.

    Odd orders cancel exactly; even orders are two one-sided sums less the
    doubly counted m = 0 term.
    """
    _check_pole(p)
    _check_order(k)
    if k % 2 == 1:
        return 0.0
    return 2.0 * one_sided_moment(k, p) - (1.0 if k == 0 else 0.0)


def moment(k: int, p: float, sidedness: Sidedness) -> float:
    if sidedness is Sidedness.CAUSAL:
        return one_sided_moment(k, p)
    return two_sided_moment(k, p)


def moment_by_summation(k: int, p: float, sidedness: Sidedness = Sidedness.CAUSAL) -> float:
    """Brute-force truncated moment sum, kept as an oracle for the closed forms."""
    _check_pole(p)
    _check_order(k)
    if sidedness is Sidedness.TWO_SIDED and k % 2 == 1:
        return 0.0
    # terms decay past the peak at m = k / -ln(p); stop once they are negligible
    n = max(64, int(4 * (k + 1) / -math.log(p)))
    while True:
        m = np.arange(n, dtype=np.float64)
        terms = m ** k * p ** m
        total = math.fsum(terms)
        if terms[-1] <= 1e-18 * total:
            break
        n *= 2
    if sidedness is Sidedness.CAUSAL:
        return total
    return 2.0 * total - (1.0 if k == 0 else 0.0)


def weight(m, p: float, sidedness: Sidedness):
    """Non-normalized weight e^{sigma m} (causal, zero for m < 0) or e^{sigma |m|}."""
    _check_pole(p)
    m = np.asarray(m, dtype=np.float64)
    if sidedness is Sidedness.TWO_SIDED:
        return p ** np.abs(m)
    return np.where(m >= 0, p ** np.maximum(m, 0.0), 0.0)


def gram_matrix(degree: int, p: float, sidedness: Sidedness, scale: float = 1.0) -> np.ndarray:
    """Weighted inner products of the monomials (scale*m)^i, (scale*m)^j."""
    n = degree + 1
    g = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            g[i, j] = moment(i + j, p, sidedness) * scale ** (i + j)
    return g


def gram_schmidt(spec: BasisSpec) -> AlphaMatrix:
    """
    Orthonormalize the monomials under the weight described by `spec`.

    Gram-Schmidt runs in ascending degree on the scaled monomials
    ((1-p) m)^j, which keeps the Gram matrix well conditioned as p -> 1,
    with one re-orthogonalization pass. The scale is folded back into the
    columns afterwards. Leading coefficients are positive, matching the
    printed signs of the closed-form Laguerre table.

    Args:
        spec: Basis degree, pole radius and sidedness.
    Returns:
        The lower-triangular AlphaMatrix.
    Raises:
        ConditioningError: If the degree or pole radius is beyond the
            reliable range, or the weighted Gram matrix is near singular.
    """
    if spec.degree > MAX_DEGREE or spec.p > MAX_POLE_RADIUS:
        raise ConditioningError(
            f"Numerical orthonormalization unreliable for B={spec.degree}, p={spec.p} "
            f"(limits B <= {MAX_DEGREE}, p <= {MAX_POLE_RADIUS})"
        )
    return _gram_schmidt_cached(spec.degree, spec.p, spec.sidedness)


@lru_cache(maxsize=256)
def _gram_schmidt_cached(degree: int, p: float, sidedness: Sidedness) -> AlphaMatrix:
    scale = 1.0 - p
    g = gram_matrix(degree, p, sidedness, scale)
    cond = np.linalg.cond(g)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise ConditioningError(
            f"Weighted Gram matrix is near singular (cond={cond:.3e}) for B={degree}, p={p}"
        )

    n = degree + 1
    rows = np.zeros((n, n))
    for k in range(n):
        v = np.zeros(n)
        v[k] = 1.0
        for _ in range(2):
            for j in range(k):
                v = v - (rows[j] @ g @ v) * rows[j]
        norm2 = v @ g @ v
        if norm2 <= 0.0:
            raise ConditioningError(f"Non-positive norm for basis row {k} (B={degree}, p={p})")
        v = v / math.sqrt(norm2)
        if v[k] < 0.0:
            v = -v
        rows[k] = v

    rows = rows * scale ** np.arange(n)[None, :]
    return AlphaMatrix(matrix=np.tril(rows), p=p, sidedness=sidedness)


def alpha_closed_form(p: float) -> AlphaMatrix:
    """
    Discrete Laguerre coefficients for B = 2 in closed form.

    Raises:
        DomainError: If p is outside (0, 1).
    """
    _check_pole(p)
    s = 1.0 - p
    r5 = math.sqrt(s ** 5)
    m = np.array([
        [math.sqrt(s), 0.0, 0.0],
        [-math.sqrt(p * s), math.sqrt(s ** 3 / p), 0.0],
        [p * r5 / s ** 2, -(3 * p + 1) * r5 / (2 * p * s), r5 / (2 * p)],
    ])
    return AlphaMatrix(matrix=m, p=p, sidedness=Sidedness.CAUSAL)


def eval_basis(alpha: AlphaMatrix, k: int, m):
    """psi_k(m); m may be fractional or an array."""
    if not (0 <= k <= alpha.degree):
        raise DomainError(f"Basis index {k} outside 0..{alpha.degree}")
    return P.polyval(m, alpha.matrix[k])


def orthonormality_error(alpha: AlphaMatrix) -> float:
    """
    Largest deviation of sum_m psi_i w psi_j from the identity.

    The sum is truncated where p^M M^(2B) falls below 1e-15 of the
    running total.
    """
    p, b = alpha.p, alpha.degree
    n = 64
    while (p ** n) * float(n) ** (2 * b) > 1e-15 * max(1.0, moment(2 * b, p, alpha.sidedness)):
        n *= 2
    if alpha.sidedness is Sidedness.TWO_SIDED:
        m = np.arange(-n, n + 1, dtype=np.float64)
    else:
        m = np.arange(0, n + 1, dtype=np.float64)
    w = weight(m, p, alpha.sidedness)
    psi = np.stack([eval_basis(alpha, k, m) for k in range(b + 1)])
    gram = (psi * w) @ psi.T
    return float(np.max(np.abs(gram - np.eye(b + 1))))
