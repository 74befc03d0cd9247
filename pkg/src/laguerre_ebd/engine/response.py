"""
Design analysis: frequency responses, flatness, impulse responses and
noise figures for realized filters.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.signal import freqz, lfilter

from .basis import _check_pole
from .errors import DomainError
from .synth import LdeCoeffs, NoncausalPair, Realization, synthesis_filter
from .types import Sidedness

FLATNESS_STEP = 1e-3
FLATNESS_TOL = 1e-6


@dataclass(frozen=True, slots=True, eq=False)
class RationalTf:
    """
    H(z) = B(z)/A(z), plus an optional backward part evaluated at 1/z.

    The backward part lets a two-pass zero-phase filter be analysed as a
    single response without multiplying the two denominators together.
    """
    b: np.ndarray
    a: np.ndarray
    b_bwd: Optional[np.ndarray] = None
    a_bwd: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        for name in ("b", "a", "b_bwd", "a_bwd"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, np.atleast_1d(np.asarray(v, dtype=np.float64)))
        if self.a[0] == 0.0 or (self.a_bwd is not None and self.a_bwd[0] == 0.0):
            raise DomainError("Denominator must have a nonzero leading coefficient")
        if (self.b_bwd is None) != (self.a_bwd is None):
            raise DomainError("Backward numerator and denominator must be given together")

    @property
    def is_two_sided(self) -> bool:
        return self.b_bwd is not None

    @property
    def dc_gain(self) -> float:
        g = self.b.sum() / self.a.sum()
        if self.is_two_sided:
            g += self.b_bwd.sum() / self.a_bwd.sum()
        return float(g)


def as_tf(realization: Realization | RationalTf) -> RationalTf:
    if isinstance(realization, RationalTf):
        return realization
    if isinstance(realization, NoncausalPair):
        return RationalTf(b=realization.fwd.b, a=realization.fwd.a,
                          b_bwd=realization.bwd.b, a_bwd=realization.bwd.a)
    return RationalTf(b=realization.b, a=realization.a)


def highpass_from_lowpass(lpf: Realization | RationalTf, q: int = 0) -> RationalTf:
    """
    Residual path z^-q - H_lpf(z).

    Raises:
        DomainError: If q is not a non-negative integer.
    """
    if int(q) != q or q < 0:
        raise DomainError(f"High-pass delay must be a non-negative integer, got {q}")
    tf = as_tf(lpf)
    q = int(q)
    n = max(tf.a.size + q, tf.b.size)
    delayed = np.zeros(n)
    delayed[q:q + tf.a.size] = tf.a
    b = delayed - np.pad(tf.b, (0, n - tf.b.size))
    a = np.pad(tf.a, (0, n - tf.a.size))
    if tf.is_two_sided:
        return RationalTf(b=b, a=a, b_bwd=-tf.b_bwd, a_bwd=tf.a_bwd)
    return RationalTf(b=b, a=a)


def exp_average_hpf(p: float) -> RationalTf:
    """Two-sided exponential-average subtraction (the B = 0 baseline high-pass)."""
    return highpass_from_lowpass(synthesis_filter(p, 0, Sidedness.TWO_SIDED, degree=0), 0)


def freq_response(tf: Realization | RationalTf, f):
    """
    Complex gain at normalized frequency f (cycles/sample, |f| <= 0.5).

    Returns a complex scalar for scalar f, otherwise an array.
    """
    tf = as_tf(tf)
    f_arr = np.atleast_1d(np.asarray(f, dtype=np.float64))
    if np.any(np.abs(f_arr) > 0.5):
        raise DomainError("Normalized frequency must satisfy |f| <= 0.5")
    w = 2 * np.pi * f_arr
    _, h = freqz(tf.b, tf.a, worN=w)
    if tf.is_two_sided:
        _, h_bwd = freqz(tf.b_bwd, tf.a_bwd, worN=-w)
        h = h + h_bwd
    if np.ndim(f) == 0:
        return complex(h[0])
    return h


def magnitude_db(h) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return 20 * np.log10(np.abs(h))


def attenuation_db(tf: Realization | RationalTf, f: float) -> float:
    """Attenuation (positive dB) at frequency f."""
    return float(-magnitude_db(freq_response(tf, f)))


def response_table(tf: Realization | RationalTf, n_points: int = 257) -> np.ndarray:
    """
    Uniform grid over [0, 0.5]: columns f, magnitude (dB), unwrapped phase (rad).
    """
    if n_points < 2:
        raise DomainError("Need at least two frequency points")
    f = np.linspace(0.0, 0.5, n_points)
    h = freq_response(tf, f)
    phase = np.unwrap(np.angle(h))
    # zero-phase designs leave rounding noise in the imaginary part
    phase[np.abs(h.imag) <= 1e-12 * np.maximum(np.abs(h), 1e-300)] = 0.0
    return np.column_stack([f, magnitude_db(h), phase])


@dataclass(frozen=True, slots=True)
class FlatnessReport:
    orders: int
    even_orders: int
    derivatives: tuple[float, ...]


def _squared_magnitude(tf: RationalTf):
    def g(omega: float) -> float:
        return float(abs(freq_response(tf, omega / (2 * np.pi))) ** 2)
    return g


def _central_derivative(g, n: int, h: float) -> float:
    total = math.fsum((-1) ** i * math.comb(n, i) * g((n / 2 - i) * h) for i in range(n + 1))
    return total / h ** n


def _richardson(g, n: int, h: float) -> float:
    return (4 * _central_derivative(g, n, h / 2) - _central_derivative(g, n, h)) / 3


def flatness_report(tf: Realization | RationalTf, max_order: int = 8) -> FlatnessReport:
    """
    Count the leading derivatives of |H(w)|^2 that vanish at w = 0.

    |H|^2 is even in w for real coefficients, so odd derivatives are exactly
    zero and only even orders are differentiated numerically. A derivative
    counts as vanishing when |d_n| / (n! |H(0)|^2) < 1e-6.
    """
    tf = as_tf(tf)
    g = _squared_magnitude(tf)
    g0 = g(0.0)
    if g0 == 0.0:
        raise DomainError("Flatness is defined for filters with nonzero DC gain")
    normalized = []
    orders = max_order
    even_orders = max_order // 2
    for n in range(1, max_order + 1):
        if n % 2 == 1:
            normalized.append(0.0)
            continue
        step = FLATNESS_STEP * 2 ** max(0, n - 2)
        d = _richardson(g, n, step) / (math.factorial(n) * abs(g0))
        normalized.append(abs(d))
        if abs(d) >= FLATNESS_TOL:
            orders = n - 1
            even_orders = n // 2 - 1
            break
    return FlatnessReport(orders=orders, even_orders=even_orders, derivatives=tuple(normalized))


def flatness_orders(tf: Realization | RationalTf, max_order: int = 8) -> int:
    """
    Number of leading derivatives of |H|^2 that vanish at DC, odd ones included.

    The first derivative is zero by symmetry for every real filter, so an
    exponential smoother (B = 0) reports 1 here and 0 in
    FlatnessReport.even_orders, which is the count of vanishing curvature terms.
    """
    return flatness_report(tf, max_order).orders


def impulse_response(coeffs: LdeCoeffs, n: int) -> np.ndarray:
    """First n samples of the causal impulse response."""
    if n < 1:
        raise DomainError("Impulse response length must be >= 1")
    x = np.zeros(n)
    x[0] = 1.0
    return lfilter(coeffs.b, coeffs.a, x)


def noncausal_kernel(pair: NoncausalPair, half_width: int) -> np.ndarray:
    """Two-sided kernel h(m) for m = -half_width..half_width (index half_width is m = 0)."""
    h_fwd = impulse_response(pair.fwd, half_width + 1)
    h_bwd = impulse_response(pair.bwd, half_width + 1)
    kernel = np.zeros(2 * half_width + 1)
    kernel[half_width:] += h_fwd
    kernel[:half_width + 1] += h_bwd[::-1]
    return kernel


def vrf(p: float, q: float) -> float:
    """
    Variance reduction factor of the causal B = 2 synthesis filter, F A F^T.
    """
    _check_pole(p)
    f = np.array([
        1.0,
        p - q + p * q,
        2 * p * q * (p - 1) + 0.5 * q * (p - 1) ** 2 * (q - 1) + p * p,
    ])
    r = 1.0 / (1.0 + p)
    a = (1 - p) * np.array([
        [r, r ** 2, r ** 3],
        [r ** 2, 2 * r ** 3, 3 * r ** 4],
        [r ** 3, 3 * r ** 4, 6 * r ** 5],
    ])
    return float(f @ a @ f)


def vrf_numeric(realization: Realization, tol: float = 1e-16) -> float:
    """Sum of squared impulse-response taps; valid for any design."""
    if isinstance(realization, NoncausalPair):
        n = 256
        while True:
            k = noncausal_kernel(realization, n)
            if max(k[0] ** 2, k[-1] ** 2) < tol:
                return float(np.sum(k ** 2))
            n *= 2
    n = 256
    while True:
        h = impulse_response(realization, n)
        if np.max(h[-16:] ** 2) < tol:
            return float(np.sum(h ** 2))
        n *= 2


def q_opt(p: float) -> float:
    """Real-valued offset minimizing the B = 2 causal VRF."""
    _check_pole(p)
    return (4 * p - math.sqrt(2 * (p * p + 4 * p + 1)) + 2) / (2 * (1 - p))


def power_norm(p_x: float, p_y: float, p_z: float) -> float:
    """Reciprocal of the weight mass over the 3-D lattice (two-sided x, y; causal z)."""
    for p in (p_x, p_y, p_z):
        _check_pole(p)
    return 1.0 / ((2 / (1 - p_x) - 1) * (2 / (1 - p_y) - 1) * (1 / (1 - p_z)))


def weight_centroid(p: float, sidedness: Sidedness = Sidedness.CAUSAL) -> float:
    """Centroid of w(m); a reasonable first choice for q."""
    _check_pole(p)
    if sidedness is Sidedness.TWO_SIDED:
        return 0.0
    return p / (1 - p)
