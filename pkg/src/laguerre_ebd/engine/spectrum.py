"""
Per-pixel Laguerre spectra and what is derived from them: accumulated
power, monomial (component) coefficients and the moving-target velocity.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .basis import AlphaMatrix
from .errors import DimensionMismatch, DomainError
from .frames import FrameVolume
from .types import BinIndex, FrameRole, iter_sorted

logger = logging.getLogger(__name__)

# Monomial components of a moving quadratic point target: I_max, rho_x, rho_y and the two motion cross terms.
TARGET_COMPONENTS: frozenset[BinIndex] = frozenset({
    (0, 0, 0), (2, 0, 0), (0, 2, 0), (1, 0, 1), (0, 1, 1),
})

CURVATURE_THRESHOLD = 1e-6


@dataclass(frozen=True, slots=True, eq=False)
class LaguerreSpectrum:
    """
    Regression coefficients beta[kx, ky, kz] for every pixel of one frame.

    Attributes:
        coefficients: Array of shape (B+1, B+1, B+1, H, W); bins outside
            `bins` are zero.
        bins: The populated bins.
        index: Frame index the spectrum belongs to.
    """
    coefficients: np.ndarray
    bins: frozenset[BinIndex]
    index: int = 0

    def __post_init__(self) -> None:
        c = np.asarray(self.coefficients, dtype=np.float64)
        if c.ndim != 5 or not (c.shape[0] == c.shape[1] == c.shape[2]):
            raise DimensionMismatch(f"Spectrum must have shape (B+1,)*3 + (H, W), got {c.shape}")
        for k in self.bins:
            if max(k) >= c.shape[0]:
                raise DomainError(f"Bin {k} outside degree {c.shape[0] - 1}")
        object.__setattr__(self, "coefficients", c)

    @property
    def degree(self) -> int:
        return self.coefficients.shape[0] - 1

    @property
    def frame_shape(self) -> tuple[int, int]:
        return self.coefficients.shape[3], self.coefficients.shape[4]

    def beta(self, k: BinIndex) -> np.ndarray:
        return self.coefficients[k]

    def at(self, row: int, col: int) -> np.ndarray:
        """The (B+1)^3 coefficient cube of one pixel."""
        return self.coefficients[..., row, col]


@dataclass(frozen=True, slots=True, eq=False)
class ComponentCoeffs:
    """Monomial-basis coefficients gamma[jx, jy, jz], per pixel or for a single pixel."""
    values: np.ndarray

    def gamma(self, j: BinIndex):
        return self.values[j]


@dataclass(frozen=True, slots=True)
class TargetModel:
    """
    Local moving-target fit I_max + rho_x (m_x - v_x m_z)^2 + rho_y (m_y - v_y m_z)^2.

    `reliable` is False when either curvature is too small relative to the
    peak for the velocity ratio to mean anything.
    """
    i_max: float
    rho_x: float
    rho_y: float
    v_x: float
    v_y: float
    reliable: bool = True


def accumulate_power(spectrum: LaguerreSpectrum, bins: Optional[Iterable[BinIndex]] = None,
                     c_norm: Optional[float] = None) -> FrameVolume:
    """
    Sum of squared coefficients over a bin set.

    Args:
        spectrum: Coefficients of one frame.
        bins: Bins to include (the spectrum's populated bins when omitted).
        c_norm: When given, the power is scaled to an average over the weight.
    Returns:
        A POWER frame.
    """
    use = spectrum.bins if bins is None else frozenset(bins)
    power = np.zeros(spectrum.frame_shape)
    for k in iter_sorted(frozenset(use)):
        power += spectrum.beta(k) ** 2
    if c_norm is not None:
        power = c_norm * power
    return FrameVolume(values=power, index=spectrum.index, role=FrameRole.POWER)


def beta_to_gamma(beta: LaguerreSpectrum | np.ndarray, a_x: AlphaMatrix, a_y: AlphaMatrix,
                  a_z: AlphaMatrix) -> ComponentCoeffs:
    """
    Change of basis from orthonormal polynomials to monomials.

    gamma[a, b, c] = sum_{i,j,k} beta[i, j, k] A_x[i, a] A_y[j, b] A_z[k, c].
    Works on a single pixel cube or on a full (B+1)^3 x H x W spectrum.
    """
    b = beta.coefficients if isinstance(beta, LaguerreSpectrum) else np.asarray(beta, dtype=np.float64)
    n = b.shape[0]
    for a in (a_x, a_y, a_z):
        if a.degree + 1 != n:
            raise DimensionMismatch(f"Basis degree {a.degree} does not match spectrum degree {n - 1}")
    g = np.einsum("ijk...,ia,jb,kc->abc...", b, a_x.matrix, a_y.matrix, a_z.matrix)
    return ComponentCoeffs(values=g)


def excited_bins(components: Iterable[BinIndex], a_x: AlphaMatrix, a_y: AlphaMatrix,
                 a_z: AlphaMatrix, tol: float = 1e-12) -> frozenset[BinIndex]:
    """
    Bins that respond to a field made only of the given monomials.

    m^j expands onto psi_k exactly where the inverse basis matrix has a
    nonzero (j, k) entry, so the excited set is a product of those patterns.
    """
    patterns = []
    for a in (a_x, a_y, a_z):
        inv = np.linalg.inv(a.matrix)
        patterns.append(np.abs(inv) > tol * np.max(np.abs(inv)))
    out: set[BinIndex] = set()
    for jx, jy, jz in components:
        for kx in np.flatnonzero(patterns[0][jx]):
            for ky in np.flatnonzero(patterns[1][jy]):
                for kz in np.flatnonzero(patterns[2][jz]):
                    out.add((int(kx), int(ky), int(kz)))
    return frozenset(out)


def _velocity(g000, g200, g020, g101, g011, threshold: float):
    # Divide only where the curvature clears the floor; zero curvature must not raise.
    g000, g200, g020, g101, g011 = (np.asarray(g, dtype=np.float64) for g in (g000, g200, g020, g101, g011))
    floor = threshold * np.abs(g000)
    reliable = (np.abs(g200) > floor) & (np.abs(g020) > floor)
    v_x = np.divide(-g101, 2 * g200, out=np.full(reliable.shape, np.nan), where=reliable)
    v_y = np.divide(-g011, 2 * g020, out=np.full(reliable.shape, np.nan), where=reliable)
    return v_x, v_y, reliable


def estimate_velocity(gamma: ComponentCoeffs, pixel: Optional[tuple[int, int]] = None,
                      threshold: float = CURVATURE_THRESHOLD) -> TargetModel:
    """
    Velocity of the target fit at one pixel.

    Args:
        gamma: Component coefficients; a single (B+1)^3 cube or a per-pixel array.
        pixel: (row, col) to read when gamma is per pixel.
        threshold: Minimum |rho| relative to |I_max| for a reliable estimate.
    Returns:
        The TargetModel. Degenerate curvature sets reliable=False and the
        velocity to 0 instead of raising.
    """
    g = gamma.values
    if g.shape[0] < 3:
        raise DomainError("Velocity estimation needs a degree-2 spectrum")
    if g.ndim == 5:
        if pixel is None:
            raise DomainError("A pixel is required for a per-pixel component array")
        g = g[..., pixel[0], pixel[1]]
    g000, g200, g020 = float(g[0, 0, 0]), float(g[2, 0, 0]), float(g[0, 2, 0])
    g101, g011 = float(g[1, 0, 1]), float(g[0, 1, 1])
    v_x, v_y, reliable = _velocity(g000, g200, g020, g101, g011, threshold)
    reliable = bool(reliable)
    if not reliable:
        logger.debug("Degenerate curvature at %s: rho=(%.3g, %.3g), I=%.3g", pixel, g200, g020, g000)
        v_x = v_y = 0.0
    return TargetModel(i_max=g000, rho_x=g200, rho_y=g020, v_x=float(v_x), v_y=float(v_y), reliable=reliable)


def velocity_map(gamma: ComponentCoeffs, threshold: float = CURVATURE_THRESHOLD
                 ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-pixel (v_x, v_y, reliable); unreliable pixels hold NaN velocities."""
    g = gamma.values
    if g.ndim != 5:
        raise DimensionMismatch("velocity_map needs a per-pixel component array")
    v_x, v_y, reliable = _velocity(g[0, 0, 0], g[2, 0, 0], g[0, 2, 0], g[1, 0, 1], g[0, 1, 1], threshold)
    v_x = np.where(reliable, v_x, np.nan)
    v_y = np.where(reliable, v_y, np.nan)
    return v_x, v_y, reliable
