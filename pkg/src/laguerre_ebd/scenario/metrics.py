"""
Output SNR at the true target position.

Amplitude frames (raw, background, residual) are scored as
20 log10((value at the target cell - background median) / robust std).
Power frames (stage-2 output, matched-filter output) are already squared,
so they are scored as 10 log10(power at the target cell / mean background
power). For a power map that is the square of a matched amplitude map the
two readings agree.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from ..engine.frames import FrameVolume
from ..engine.types import FrameRole
from .generator import GroundTruth

logger = logging.getLogger(__name__)

SNR_CAP_DB = 99.0
EXCLUSION_PSF_MULTIPLE = 5.0
MAD_TO_STD = 1.4826


@dataclass(frozen=True, slots=True)
class SnrMeasurement:
    """
    Target-to-background ratio of one frame at the true target cell.

    Attributes:
        snr_db: The ratio in dB, clamped to +/- SNR_CAP_DB.
        signal: Amplitude frames: value at the target cell minus the
            background median. Power frames: power at the target cell.
        background: Median (amplitude) or mean (power) of the frame outside
            the exclusion zone.
        noise: Robust standard deviation (1.4826 x MAD) for amplitude frames;
            the mean background power for power frames.
        power: Whether the frame was scored as a power map.
    """
    index: int
    snr_db: float
    signal: float
    background: float
    noise: float
    power: bool = False


def _ratio_db(signal: float, noise: float, factor: float) -> float:
    if noise <= 0.0:
        return SNR_CAP_DB if signal > 0 else -SNR_CAP_DB
    if signal <= 0.0:
        return -SNR_CAP_DB
    return float(np.clip(factor * math.log10(signal / noise), -SNR_CAP_DB, SNR_CAP_DB))


def measure_snr(frame: FrameVolume, truth: GroundTruth, crop: int = 0,
                index: Optional[int] = None, power: Optional[bool] = None) -> Optional[SnrMeasurement]:
    """
    SNR of one frame against the ground truth.

    Statistics use the interior (crop pixels dropped from every edge) minus
    a disc of radius 5 PSF widths around the target.

    Args:
        frame: Frame to score (its index selects the truth position).
        truth: Ground truth of the scene.
        crop: Spatial margin excluded from the measurement.
        index: Truth index to use instead of frame.index.
        power: Score as a power map; defaults to frame.role is POWER.
    Returns:
        The measurement, or None when the target lies in the cropped margin.
    """
    i = frame.index if index is None else index
    as_power = frame.role is FrameRole.POWER if power is None else power
    row, col = truth.cell(i)
    h, w = frame.shape
    if not (crop <= row < h - crop and crop <= col < w - crop):
        logger.warning("Target at (%d, %d) lies in the %d-pixel margin of frame %d; skipped", row, col, crop, i)
        return None
    x, y = truth.center(i)
    rows, cols = np.indices(frame.shape)
    inside = (rows >= crop) & (rows < h - crop) & (cols >= crop) & (cols < w - crop)
    radius = EXCLUSION_PSF_MULTIPLE * truth.psf_std
    far = (cols - x) ** 2 + (rows - y) ** 2 > radius ** 2
    sample = frame.values[inside & far]
    if sample.size == 0:
        logger.warning("No background pixels left in frame %d; skipped", i)
        return None
    peak = float(frame.values[row, col])
    if as_power:
        mean = float(np.mean(sample))
        snr = _ratio_db(peak, mean, 10.0)
        return SnrMeasurement(index=i, snr_db=snr, signal=peak, background=mean, noise=mean, power=True)
    median = float(np.median(sample))
    noise = MAD_TO_STD * float(np.median(np.abs(sample - median)))
    signal = peak - median
    snr = _ratio_db(signal, noise, 20.0)
    return SnrMeasurement(index=i, snr_db=snr, signal=signal, background=median, noise=noise)


def average_snr(frames: Iterable[FrameVolume], truth: GroundTruth, crop: int = 0,
                skip_indices: Iterable[int] = ()) -> Optional[float]:
    """Mean SNR (dB) over the frames that could be measured; None if none could."""
    skip = set(skip_indices)
    values = []
    for fr in frames:
        if fr.index in skip:
            continue
        m = measure_snr(fr, truth, crop)
        if m is not None:
            values.append(m.snr_db)
    if not values:
        return None
    return float(np.mean(values))
