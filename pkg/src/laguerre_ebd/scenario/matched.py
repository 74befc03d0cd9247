"""
FIR matched-filter baseline: a bank of 3-D kernels, each a Gaussian PSF
sliding at one hypothesised velocity.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.signal import correlate

from ..engine.errors import DomainError
from ..engine.frames import FrameStream
from ..engine.types import FrameRole

logger = logging.getLogger(__name__)

KERNEL_SIZE = 9


def gaussian_kernel(velocity: tuple[float, float], psf_std: float, size: int = KERNEL_SIZE) -> np.ndarray:
    """
    (size, size, size) kernel indexed [t, y, x], unit L2 norm.

    At time offset tau from the kernel center the Gaussian sits at
    (v_x tau, v_y tau).
    """
    if size < 1 or size % 2 == 0:
        raise DomainError(f"Kernel size must be a positive odd number, got {size}")
    if psf_std <= 0:
        raise DomainError(f"psf_std must be positive, got {psf_std}")
    half = size // 2
    tau, dy, dx = np.meshgrid(*(np.arange(-half, half + 1, dtype=np.float64),) * 3, indexing="ij")
    vx, vy = velocity
    k = np.exp(-((dx - vx * tau) ** 2 + (dy - vy * tau) ** 2) / (2 * psf_std ** 2))
    return k / np.linalg.norm(k)


def velocity_grid(n: int = 3, lo: float = -1.0, hi: float = 1.0) -> list[tuple[float, float]]:
    """n x n hypotheses spanning [lo, hi] on each axis."""
    if n < 1:
        raise DomainError("Grid size must be >= 1")
    axis = np.linspace(lo, hi, n) if n > 1 else np.array([(lo + hi) / 2])
    return [(float(vx), float(vy)) for vx in axis for vy in axis]


@dataclass(frozen=True, slots=True, eq=False)
class MatchedFilterResult:
    """
    Attributes:
        power: Per-pixel maximum squared output over the bank.
        best: (frames, H, W) index into `velocities` of the winning kernel.
        velocities: (V, 2) hypotheses (v_x, v_y).
    """
    power: FrameStream
    best: np.ndarray
    velocities: np.ndarray

    def best_velocity(self, frame: int, row: int, col: int) -> tuple[float, float]:
        vx, vy = self.velocities[self.best[frame, row, col]]
        return float(vx), float(vy)


def matched_filter_bank(residual: FrameStream, velocities: Sequence[tuple[float, float]],
                        psf_std: float, size: int = KERNEL_SIZE, workers: int = 1) -> MatchedFilterResult:
    """
    Correlate the stream with every kernel and keep the strongest response.

    Args:
        residual: Input stream (typically the stage-1 residual).
        velocities: Velocity hypotheses.
        psf_std: Gaussian PSF width of every kernel.
        size: Kernel support along each axis.
        workers: Threads over hypotheses; output does not depend on it.
    Returns:
        The MatchedFilterResult, aligned frame for frame with the input.
    """
    if not velocities:
        raise DomainError("The bank needs at least one velocity")
    v = np.asarray(velocities, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise DomainError("Velocities must be finite")

    def respond(vel) -> np.ndarray:
        out = correlate(residual.data, gaussian_kernel(tuple(vel), psf_std, size), mode="same", method="fft")
        return out ** 2

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            powers = list(pool.map(respond, v))
    else:
        powers = [respond(vel) for vel in v]
    stack = np.stack(powers)
    best = np.argmax(stack, axis=0)
    power = np.take_along_axis(stack, best[None], axis=0)[0]
    logger.info("Matched-filter bank of %d kernels over %d frames", len(v), len(residual))
    return MatchedFilterResult(
        power=FrameStream(data=power, role=FrameRole.POWER, start_index=residual.start_index),
        best=best,
        velocities=v,
    )
