"""
Synthetic scene: translating sinusoidal clutter, a moving Gaussian point
target and white sensor noise.

Random draws come from numpy's PCG64 generator in a fixed order:

1. clutter frequency magnitudes (n_components x 2, uniform on [0, f_max]),
   their signs (n_components x 2, +/-1) and phases (n_components, uniform
   on [0, 2 pi)),
2. clutter velocity (2, uniform on v_clt_range),
3. target velocity (2, uniform on v_tgt_range),
4. target sub-pixel offset (2, uniform on [0, 1)),
5. noise (frames x height x width, standard normal, scaled by noise_std).

Every draw is made even when an override or a disabled component makes
it unused, so one seed always yields the same remaining draws.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from ..engine.errors import DomainError
from ..engine.frames import FrameStream
from ..engine.types import FrameRole

logger = logging.getLogger(__name__)

Pair = tuple[float, float]


@dataclass(frozen=True, slots=True)
class ScenarioConfig:
    """
    Scene parameters. Coordinates are (x, y) = (column, row) in pixels and
    velocities are pixels per frame.
    """
    frames: int = 64
    width: int = 128
    height: int = 128
    n_components: int = 10
    f_max: float = 1 / 33
    clutter_amplitude: float = 0.1
    dc: float = 1.0
    v_clt_range: Pair = (0.0, 1.0)
    clutter_speed: float = 1.0
    clutter_freq: float = 1.0
    clutter: bool = True
    target: bool = True
    i_max: float = 1.0
    psf_std: float = 2.0
    v_tgt_range: Pair = (-1.0, 0.0)
    final_position: Pair = (64.0, 64.0)
    target_velocity: Optional[Pair] = None
    target_offset: Optional[Pair] = None
    noise_std: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        if self.frames < 1 or self.width < 1 or self.height < 1:
            raise DomainError("frames, width and height must be >= 1")
        if self.n_components < 0:
            raise DomainError("n_components must be >= 0")
        if self.f_max < 0 or self.f_max > 0.5:
            raise DomainError(f"f_max must lie in [0, 0.5], got {self.f_max}")
        if self.psf_std <= 0:
            raise DomainError(f"psf_std must be positive, got {self.psf_std}")
        if self.noise_std < 0:
            raise DomainError(f"noise_std must be >= 0, got {self.noise_std}")
        for name in ("v_clt_range", "v_tgt_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise DomainError(f"{name} must be (low, high) with low <= high, got {(lo, hi)}")
        if self.seed < 0:
            raise DomainError("seed must be >= 0")

    def with_input_snr(self, snr_db: float) -> "ScenarioConfig":
        """Copy with the noise level set so that 20 log10(i_max / noise_std) = snr_db."""
        return replace(self, noise_std=self.i_max / 10 ** (snr_db / 20))


@dataclass(frozen=True, slots=True, eq=False)
class GroundTruth:
    """
    What the generator drew.

    Attributes:
        centers: (frames, 2) true target center (x, y) per frame.
        v_tgt: Target velocity (x, y).
        v_clt: Clutter velocity (x, y), after the speed factor.
        frequencies: (n_components, 2) signed spatial frequencies (f_x, f_y).
        phases: (n_components,) phases in radians.
        amplitudes: (n_components,) amplitudes.
    """
    centers: np.ndarray
    v_tgt: Pair
    v_clt: Pair
    frequencies: np.ndarray
    phases: np.ndarray
    amplitudes: np.ndarray
    psf_std: float
    has_target: bool = True

    def center(self, index: int) -> Pair:
        x, y = self.centers[index]
        return float(x), float(y)

    def cell(self, index: int) -> tuple[int, int]:
        """(row, col) of the pixel nearest the true center."""
        x, y = self.center(index)
        return int(round(y)), int(round(x))

    def temporal_frequencies(self) -> np.ndarray:
        """f_z of every clutter component under its translation."""
        return np.array([clutter_tilt(self.v_clt[0], self.v_clt[1], fx, fy) for fx, fy in self.frequencies])


def clutter_tilt(v_x: float, v_y: float, f_x: float, f_y: float) -> float:
    """Temporal frequency of a spatial sinusoid translating at (v_x, v_y)."""
    return -v_x * f_x - v_y * f_y


def nominal_input_snr(i_max: float, noise_std: float) -> float:
    """20 log10(i_max / noise_std); 6 dB for the default scene."""
    if noise_std <= 0:
        return math.inf
    return 20 * math.log10(i_max / noise_std)


def gaussian_psf(shape: tuple[int, int], center: Pair, std: float) -> np.ndarray:
    """Unit-peak Gaussian evaluated at pixel centers; center is (x, y)."""
    rows, cols = np.indices(shape, dtype=np.float64)
    d2 = (cols - center[0]) ** 2 + (rows - center[1]) ** 2
    return np.exp(-d2 / (2 * std ** 2))


def generate(cfg: ScenarioConfig) -> tuple[FrameStream, GroundTruth]:
    """
    Render the scene.

    Args:
        cfg: Scene parameters, including the seed.
    Returns:
        The raw frame stream and the ground truth.
    """
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    n = cfg.n_components
    mags = rng.uniform(0.0, cfg.f_max, size=(n, 2))
    signs = rng.choice(np.array([-1.0, 1.0]), size=(n, 2))
    phases = rng.uniform(0.0, 2 * np.pi, size=n)
    v_clt = rng.uniform(cfg.v_clt_range[0], cfg.v_clt_range[1], size=2)
    v_tgt = rng.uniform(cfg.v_tgt_range[0], cfg.v_tgt_range[1], size=2)
    offset = rng.uniform(0.0, 1.0, size=2)
    noise = rng.standard_normal((cfg.frames, cfg.height, cfg.width)) * cfg.noise_std

    freqs = mags * signs * cfg.clutter_freq
    v_clt = v_clt * cfg.clutter_speed
    if cfg.target_velocity is not None:
        v_tgt = np.asarray(cfg.target_velocity, dtype=np.float64)
    if cfg.target_offset is not None:
        offset = np.asarray(cfg.target_offset, dtype=np.float64)
    amplitudes = np.full(n, cfg.clutter_amplitude)

    shape = (cfg.height, cfg.width)
    rows, cols = np.indices(shape, dtype=np.float64)
    t = np.arange(cfg.frames, dtype=np.float64)
    end = np.asarray(cfg.final_position, dtype=np.float64) + offset
    centers = end[None, :] + v_tgt[None, :] * (t[:, None] - (cfg.frames - 1))

    data = np.empty((cfg.frames, *shape))
    for i in range(cfg.frames):
        frame = np.full(shape, cfg.dc)
        if cfg.clutter:
            for (fx, fy), phi, amp in zip(freqs, phases, amplitudes):
                arg = fx * (cols - v_clt[0] * t[i]) + fy * (rows - v_clt[1] * t[i])
                frame += amp * np.cos(2 * np.pi * arg + phi)
        if cfg.target:
            frame += cfg.i_max * gaussian_psf(shape, centers[i], cfg.psf_std)
        data[i] = frame + noise[i]

    truth = GroundTruth(
        centers=centers,
        v_tgt=(float(v_tgt[0]), float(v_tgt[1])),
        v_clt=(float(v_clt[0]), float(v_clt[1])),
        frequencies=freqs,
        phases=phases,
        amplitudes=amplitudes,
        psf_std=cfg.psf_std,
        has_target=cfg.target,
    )
    logger.info("Generated %d frames of %dx%d (seed %d, v_tgt=(%.3f, %.3f), input SNR %.2f dB)",
                cfg.frames, cfg.width, cfg.height, cfg.seed, truth.v_tgt[0], truth.v_tgt[1],
                nominal_input_snr(cfg.i_max, cfg.noise_std))
    return FrameStream(data=data, role=FrameRole.RAW), truth


def truth_rows(truth: GroundTruth) -> list[tuple]:
    """Per-frame ground-truth rows: index, x, y, v_x, v_y."""
    return [(i, float(x), float(y), truth.v_tgt[0], truth.v_tgt[1])
            for i, (x, y) in enumerate(truth.centers)]
