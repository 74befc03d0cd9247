"""
Linear difference equation (LDE) coefficients for every filter role.

A filter whose impulse response is sum_j c_j m^j p^m (m >= 0) has a
rational transfer function in x = p z^-1, because
sum_m m^j x^m = N_j(x) / (1 - x)^(j+1). All realizations below are built
from that identity:

* analysis of order k: c = row k of the basis matrix,
* synthesis at offset q: c = A^T A phi(q),
* derivative at offset q: c = -A^T A phi'(q).

Two-sided designs split the weight p^|m| into a forward pass over m >= 0
and a backward pass over m <= 0; each pass takes half of the m = 0 tap.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from numpy.polynomial import Polynomial

from .basis import BasisSpec, _check_pole, gram_schmidt, moment_numerator
from .errors import DomainError, UnsupportedConfiguration
from .types import Direction, FilterRole, Sidedness


@dataclass(frozen=True, slots=True, eq=False)
class LdeCoeffs:
    """
    Coefficients of y(n) = sum b_i x(n-i) - sum_{i>=1} a_i y(n-i).

    Both vectors are stored with the same length (trailing zeros padded)
    so they can be handed to a direct-form kernel unchanged.
    """
    b: np.ndarray
    a: np.ndarray
    direction: Direction = Direction.FWD

    def __post_init__(self) -> None:
        b = np.atleast_1d(np.asarray(self.b, dtype=np.float64))
        a = np.atleast_1d(np.asarray(self.a, dtype=np.float64))
        if a.size == 0 or a[0] == 0.0:
            raise DomainError("Leading denominator coefficient must be nonzero")
        if a[0] != 1.0:
            b = b / a[0]
            a = a / a[0]
        n = max(b.size, a.size)
        b = np.pad(b, (0, n - b.size))
        a = np.pad(a, (0, n - a.size))
        b.setflags(write=False)
        a.setflags(write=False)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "a", a)

    @property
    def order(self) -> int:
        return self.a.size - 1

    def dense(self, order: int = 3) -> tuple[np.ndarray, np.ndarray]:
        """b and a padded (or trimmed of trailing zeros) to order+1 taps."""
        if order + 1 < self.a.size:
            tail_b, tail_a = self.b[order + 1:], self.a[order + 1:]
            if np.any(tail_b != 0.0) or np.any(tail_a != 0.0):
                raise DomainError(f"Coefficients need more than {order + 1} taps")
            return self.b[:order + 1].copy(), self.a[:order + 1].copy()
        pad = order + 1 - self.a.size
        return np.pad(self.b, (0, pad)), np.pad(self.a, (0, pad))

    @property
    def dc_gain(self) -> float:
        return float(self.b.sum() / self.a.sum())

    @property
    def poles(self) -> np.ndarray:
        # a is ascending in z^-1; roots in z come from the same list read as descending powers of z
        a = np.trim_zeros(self.a, "b")
        return np.roots(a)

    def is_stable(self) -> bool:
        return bool(np.all(np.abs(self.poles) < 1.0))

    def negated(self) -> "LdeCoeffs":
        return LdeCoeffs(b=-self.b, a=self.a, direction=self.direction)


@dataclass(frozen=True, slots=True)
class NoncausalPair:
    """
    Forward and backward halves of a zero-phase (or odd-phase) filter.

    The complete output is fwd(x) + reverse(bwd(reverse(x))).
    """
    fwd: LdeCoeffs
    bwd: LdeCoeffs

    @property
    def kind(self) -> Direction:
        return self.fwd.direction

    @property
    def dc_gain(self) -> float:
        return self.fwd.dc_gain + self.bwd.dc_gain


Realization = Union[LdeCoeffs, NoncausalPair]


def _binomial_poly(n: int) -> Polynomial:
    """(1 - x)^n."""
    return Polynomial([1.0, -1.0]) ** n


def _x_to_z(poly: Polynomial, p: float, length: int) -> np.ndarray:
    """Coefficient c_i of x^i becomes c_i p^i on z^-i."""
    c = np.zeros(length)
    coef = poly.coef
    c[:coef.size] = coef
    return c * p ** np.arange(length)


def _one_pass(c: np.ndarray, p: float, half_origin: bool) -> tuple[np.ndarray, np.ndarray]:
    """
    Realize sum_j c_j m^j p^m over m >= 0 as (b, a).

    With half_origin the m = 0 tap is halved, which is what each pass of a
    two-sided filter contributes.
    """
    order = c.size - 1
    num = Polynomial([0.0])
    for j, cj in enumerate(c):
        if cj != 0.0:
            num = num + cj * Polynomial(moment_numerator(j)) * _binomial_poly(order - j)
    if half_origin:
        num = num - (c[0] / 2.0) * _binomial_poly(order + 1)
    length = order + 2
    return _x_to_z(num, p, length), _x_to_z(_binomial_poly(order + 1), p, length)


def _pair_kind(fwd_b: np.ndarray, bwd_b: np.ndarray) -> Direction:
    scale = max(np.max(np.abs(fwd_b)), 1e-300)
    if np.max(np.abs(fwd_b - bwd_b)) <= 1e-12 * scale:
        return Direction.SHARED
    if np.max(np.abs(fwd_b + bwd_b)) <= 1e-12 * scale:
        return Direction.ANTISYMMETRIC
    raise UnsupportedConfiguration(
        "Two-sided design is neither even nor odd; only symmetric offsets are realizable"
    )


def realize_polynomial_kernel(c, p: float, sidedness: Sidedness) -> Realization:
    """
    Recursive realization of the kernel h(m) = poly_c(m) * w(m).

    Args:
        c: Monomial coefficients (ascending) of the kernel polynomial.
        p: Pole radius in (0, 1).
        sidedness: CAUSAL gives a single LdeCoeffs; TWO_SIDED gives a pair.
    Returns:
        The LdeCoeffs or NoncausalPair realization.
    """
    _check_pole(p)
    c = np.atleast_1d(np.asarray(c, dtype=np.float64))
    # drop trailing zero monomials so the pole multiplicity is minimal
    nz = np.flatnonzero(c)
    c = c[:nz[-1] + 1] if nz.size else c[:1]
    if sidedness is Sidedness.CAUSAL:
        b, a = _one_pass(c, p, half_origin=False)
        return LdeCoeffs(b=b, a=a, direction=Direction.FWD)

    b_fwd, a = _one_pass(c, p, half_origin=True)
    flipped = c * (-1.0) ** np.arange(c.size)
    b_bwd, _ = _one_pass(flipped, p, half_origin=True)
    kind = _pair_kind(b_fwd, b_bwd)
    return NoncausalPair(
        fwd=LdeCoeffs(b=b_fwd, a=a, direction=kind),
        bwd=LdeCoeffs(b=b_bwd, a=a, direction=kind),
    )


def weighted_component_tf(k_hat: int, p: float) -> LdeCoeffs:
    """
    Z transform of m^k_hat p^m, m >= 0, as a ratio in z^-1.

    Examples:
        k_hat=0 gives b=[1], a=[1, -p]; k_hat=1 gives b=[0, p], a=[1, -2p, p^2].
    """
    if int(k_hat) != k_hat or k_hat < 0:
        raise DomainError(f"Component index must be a non-negative integer, got {k_hat}")
    _check_pole(p)
    num = Polynomial(moment_numerator(int(k_hat)))
    length = int(k_hat) + 2
    b = _x_to_z(num, p, length)
    a = _x_to_z(_binomial_poly(int(k_hat) + 1), p, length)
    return LdeCoeffs(b=b, a=a)


def _phi(q: float, degree: int) -> np.ndarray:
    return np.array([q ** j for j in range(degree + 1)], dtype=np.float64)


def _dphi(q: float, degree: int) -> np.ndarray:
    return np.array([j * q ** (j - 1) if j > 0 else 0.0 for j in range(degree + 1)], dtype=np.float64)


def analysis_filter(k: int, p: float, sidedness: Sidedness = Sidedness.CAUSAL) -> Realization:
    """
    Filter whose output is the regression coefficient beta_k.

    The impulse response is psi_k(m) w(m), so the poles sit at z = p with
    multiplicity k + 1. Row k of the basis does not depend on the overall
    degree, so only a degree-k basis is built.
    """
    if int(k) != k or k < 0:
        raise DomainError(f"Analysis index must be a non-negative integer, got {k}")
    alpha = gram_schmidt(BasisSpec(degree=int(k), p=p, sidedness=sidedness))
    return realize_polynomial_kernel(alpha.row(int(k)), p, sidedness)


def synthesis_filter(p: float, q: float, sidedness: Sidedness = Sidedness.CAUSAL,
                     degree: int = 2) -> Realization:
    """
    Low-pass analysis-and-synthesis filter evaluating the local fit at offset q.

    Args:
        p: Pole radius in (0, 1).
        q: Synthesis offset in samples; real values give fractional delays.
        sidedness: CAUSAL or TWO_SIDED.
        degree: Polynomial degree B of the fit.
    Returns:
        LdeCoeffs (causal) or a SHARED NoncausalPair (two-sided), DC gain 1.
    Raises:
        UnsupportedConfiguration: For a two-sided design with q != 0.
    """
    if sidedness is Sidedness.TWO_SIDED and q != 0:
        raise UnsupportedConfiguration(f"Two-sided synthesis requires q = 0, got q={q}")
    alpha = gram_schmidt(BasisSpec(degree=degree, p=p, sidedness=sidedness))
    a = alpha.matrix
    c = a.T @ (a @ _phi(float(q), degree))
    return realize_polynomial_kernel(c, p, sidedness)


def derivative_filter(p: float, q: float, degree: int = 2) -> LdeCoeffs:
    """
    Causal estimator of the first derivative of the fit, with respect to n, at offset q.

    Since m counts backwards from n, d/dn = -d/dm and the kernel is
    -A^T A phi'(q). The output settles to +1 on the ramp x(n) = n.
    """
    if degree < 1:
        raise DomainError("Derivative filter needs degree >= 1")
    alpha = gram_schmidt(BasisSpec(degree=degree, p=p, sidedness=Sidedness.CAUSAL))
    a = alpha.matrix
    c = -(a.T @ (a @ _dphi(float(q), degree)))
    result = realize_polynomial_kernel(c, p, Sidedness.CAUSAL)
    assert isinstance(result, LdeCoeffs)
    return result


def weight_filter(p: float, sidedness: Sidedness = Sidedness.CAUSAL) -> Realization:
    """The bare weight w(m) as a recursive filter (unit polynomial kernel)."""
    return realize_polynomial_kernel([1.0], p, sidedness)


def table_synthesis_filter(p: float, q: float, sidedness: Sidedness = Sidedness.CAUSAL) -> Realization:
    """Closed-form B = 2 low-pass coefficients, expanded by hand."""
    _check_pole(p)
    a = [1.0, -3 * p, 3 * p ** 2, -p ** 3]
    if sidedness is Sidedness.CAUSAL:
        c = (1 - p) / 2
        b = [
            c * (q * q * p * p + 3 * q * p * p + 2 * p * p - 2 * q * q * p + 2 * p + q * q - 3 * q + 2),
            -c * (2 * q * q * p * p + 8 * q * p * p + 6 * p * p - 4 * q * q * p - 4 * q * p + 6 * p
                  + 2 * q * q - 4 * q),
            c * (q * q * p * p + 5 * q * p * p + 6 * p * p - 2 * q * q * p - 4 * q * p + q * q - q),
            0.0,
        ]
        return LdeCoeffs(b=b, a=a)
    if q != 0:
        raise UnsupportedConfiguration(f"Two-sided synthesis requires q = 0, got q={q}")
    c = 2 * (p * p + 8 * p + 1)
    edge = (p * p + 10 * p + 1) * (1 - p) / (1 + p)
    b = [edge / c, 3 * p * (p * p - 1) / c, 3 * p * p * (p * p - 1) / c, p ** 3 * edge / c]
    half = LdeCoeffs(b=b, a=a, direction=Direction.SHARED)
    return NoncausalPair(fwd=half, bwd=half)


def table_analysis_filter(k: int, p: float, sidedness: Sidedness = Sidedness.CAUSAL) -> Realization:
    """Closed-form B = 2 analysis coefficients for k = 0, 1, 2."""
    _check_pole(p)
    if k not in (0, 1, 2):
        raise DomainError(f"Closed-form analysis filters exist for k = 0..2, got {k}")
    s = 1 - p
    denominators = {
        0: [1.0, -p],
        1: [1.0, -2 * p, p * p],
        2: [1.0, -3 * p, 3 * p * p, -p ** 3],
    }
    a = denominators[k]
    if sidedness is Sidedness.CAUSAL:
        if k == 0:
            b = [math.sqrt(s), 0.0]
        elif k == 1:
            c = -math.sqrt(p * s ** 3) / s
            b = [c, -c, 0.0]
        else:
            c = p * math.sqrt(s ** 5) / s ** 2
            b = [c, -2 * c, c, 0.0]
        return LdeCoeffs(b=b, a=a)

    if k == 0:
        c = 0.5 * math.sqrt(s / (1 + p))
        half = LdeCoeffs(b=[c, c * p], a=a, direction=Direction.SHARED)
        return NoncausalPair(fwd=half, bwd=half)
    if k == 1:
        b1 = 0.5 * math.sqrt(2 * p * s ** 3 / (1 + p))
        fwd = LdeCoeffs(b=[0.0, b1, 0.0], a=a, direction=Direction.ANTISYMMETRIC)
        return NoncausalPair(fwd=fwd, bwd=fwd.negated())
    c = math.sqrt(2) * s ** 2 * math.sqrt(p ** 3 + 9 * p * p + 9 * p + 1)
    r = math.sqrt(s ** 5)
    b = [
        -math.sqrt(p) * r / c,
        math.sqrt(p) * r * (p * p - p + 1) / c,
        math.sqrt(p ** 3) * r * (p * p - p + 1) / c,
        -math.sqrt(p ** 7) * r / c,
    ]
    half = LdeCoeffs(b=b, a=a, direction=Direction.SHARED)
    return NoncausalPair(fwd=half, bwd=half)


@dataclass(frozen=True, slots=True)
class FilterSpec:
    """
    Design parameters for one dimension.

    Attributes:
        p: Pole radius in (0, 1).
        q: Synthesis offset (ignored for analysis).
        degree: Polynomial degree B.
        sidedness: Causal or two-sided weight.
        role: Analysis of a single order k, synthesis, or derivative.
        k: Analysis order, 0 <= k <= degree.
    """
    p: float
    q: float = 0.0
    degree: int = 2
    sidedness: Sidedness = Sidedness.CAUSAL
    role: FilterRole = FilterRole.SYNTHESIS
    k: int = 0

    def __post_init__(self) -> None:
        _check_pole(self.p)
        if int(self.degree) != self.degree or self.degree < 0:
            raise DomainError(f"Degree must be a non-negative integer, got {self.degree}")
        if self.role is FilterRole.ANALYSIS and not (0 <= self.k <= self.degree):
            raise DomainError(f"Analysis order k={self.k} outside 0..{self.degree}")
        if self.role is FilterRole.DERIVATIVE and not self.sidedness.is_causal:
            raise UnsupportedConfiguration("Derivative filters are causal only")

    @staticmethod
    def from_sigma(sigma: float, **kwargs) -> "FilterSpec":
        if not sigma < 0:
            raise DomainError(f"sigma must be negative, got {sigma}")
        return FilterSpec(p=math.exp(sigma), **kwargs)

    @property
    def sigma(self) -> float:
        return math.log(self.p)

    def realize(self) -> Realization:
        if self.role is FilterRole.ANALYSIS:
            return analysis_filter(self.k, self.p, self.sidedness)
        if self.role is FilterRole.DERIVATIVE:
            return derivative_filter(self.p, self.q, self.degree)
        return synthesis_filter(self.p, self.q, self.sidedness, self.degree)
