"""
Streaming evaluation of the difference equations.

Every pass goes through scipy.signal.lfilter. Its delay registers (zi)
are the recursion state: carrying them between calls makes chunked
processing identical, sample for sample, to one-shot processing.
"""
from __future__ import annotations

import math
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.signal import lfilter

from .errors import DimensionMismatch, DomainError, NonFiniteInput
from .frames import FrameVolume
from .synth import LdeCoeffs, NoncausalPair, Realization
from .types import FrameRole

EDGE_DECAY = 6.0


@dataclass(slots=True)
class RecursionState:
    """lfilter delay registers for one (possibly multi-channel) recursion."""
    zi: np.ndarray

    @staticmethod
    def zeros(coeffs: LdeCoeffs, channels: tuple[int, ...] = ()) -> "RecursionState":
        return RecursionState(zi=np.zeros((coeffs.order, *channels)))

    def copy(self) -> "RecursionState":
        return RecursionState(zi=self.zi.copy())


def _check_finite(x: np.ndarray, offset: tuple[int, ...] = ()) -> None:
    if not np.all(np.isfinite(x)):
        bad = tuple(int(i) for i in np.argwhere(~np.isfinite(x))[0])
        raise NonFiniteInput(f"Non-finite input sample at {offset + bad}", location=offset + bad)


def filter_1d(coeffs: LdeCoeffs, x, state: Optional[RecursionState] = None
              ) -> tuple[np.ndarray, RecursionState]:
    """
    Run the causal recursion over a 1-D sequence.

    Args:
        coeffs: Filter coefficients (a0 = 1).
        x: Input samples.
        state: Registers from a previous call; zeros when omitted.
    Returns:
        The output sequence and the updated state for the next chunk.
    Raises:
        NonFiniteInput: If x contains NaN or infinity.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionMismatch(f"filter_1d expects a 1-D sequence, got shape {x.shape}")
    _check_finite(x)
    if coeffs.order == 0:
        return coeffs.b[0] * x, state or RecursionState(zi=np.zeros(0))
    zi = np.zeros(coeffs.order) if state is None else state.zi
    if zi.shape != (coeffs.order,):
        raise DimensionMismatch(f"State has shape {zi.shape}, expected ({coeffs.order},)")
    y, zf = lfilter(coeffs.b, coeffs.a, x, zi=zi)
    return y, RecursionState(zi=zf)


def _causal_along(coeffs: LdeCoeffs, data: np.ndarray, axis: int) -> np.ndarray:
    if coeffs.order == 0:
        return coeffs.b[0] * data
    return lfilter(coeffs.b, coeffs.a, data, axis=axis)


def filter_axis(realization: Realization, data: np.ndarray, axis: int) -> np.ndarray:
    """
    Filter a finite block along one axis with zero state at the edges.

    A NoncausalPair contributes fwd(x) + reverse(bwd(reverse(x))).
    """
    data = np.asarray(data, dtype=np.float64)
    if isinstance(realization, NoncausalPair):
        fwd = _causal_along(realization.fwd, data, axis)
        rev = np.flip(data, axis=axis)
        bwd = np.flip(_causal_along(realization.bwd, rev, axis), axis=axis)
        return fwd + bwd
    return _causal_along(realization, data, axis)


def filter_1d_noncausal(pair: NoncausalPair, x) -> np.ndarray:
    """Two-pass zero-state filtering of a finite sequence."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionMismatch(f"Expected a 1-D sequence, got shape {x.shape}")
    _check_finite(x)
    return filter_axis(pair, x, axis=0)


def filter_plane(realization: Realization, data: np.ndarray, axis: int, workers: int = 1) -> np.ndarray:
    """filter_axis on a 2-D plane, optionally split across worker threads."""
    # blocks cut across the other axis; each line is filtered independently
    if workers <= 1:
        return filter_axis(realization, data, axis)
    other = 1 - axis
    bounds = np.linspace(0, data.shape[other], workers + 1).astype(int)
    blocks = [np.take(data, np.arange(lo, hi), axis=other)
              for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(lambda blk: filter_axis(realization, blk, axis), blocks))
    return np.concatenate(parts, axis=other)


def filter_frame_spatial(frame: FrameVolume, spec_x: Realization, spec_y: Realization,
                         order: str = "xy", workers: int = 1,
                         role: Optional[FrameRole] = None) -> FrameVolume:
    """
    Separable spatial filtering of one frame.

    x runs along each row (axis 1) and y along each column (axis 0).

    Args:
        frame: Input frame.
        spec_x: Row filter.
        spec_y: Column filter.
        order: "xy" filters rows first, "yx" columns first.
        workers: Threads used to split rows/columns; results do not depend on it.
        role: Role tag of the returned frame (input role when omitted).
    Returns:
        The filtered frame.
    """
    if order not in ("xy", "yx"):
        raise DomainError(f"order must be 'xy' or 'yx', got {order!r}")
    for spec in (spec_x, spec_y):
        taps = spec.fwd.order if isinstance(spec, NoncausalPair) else spec.order
        if min(frame.shape) < taps:
            raise DimensionMismatch(f"Frame {frame.shape} smaller than filter order {taps}")
    data = frame.values
    passes = [(spec_x, 1), (spec_y, 0)]
    if order == "yx":
        passes.reverse()
    for spec, axis in passes:
        data = filter_plane(spec, data, axis, workers)
    return frame.with_values(data, role=role)


class DelayLine:
    """
    Fixed-depth frame delay.

    push() returns the frame pushed `depth` calls earlier, or None while the
    line is still filling. Depth 0 passes frames straight through.
    """

    def __init__(self, depth: int):
        if depth < 0:
            raise DomainError(f"Delay depth must be >= 0, got {depth}")
        self.depth = depth
        self._queue: deque[FrameVolume] = deque()

    def push(self, frame: FrameVolume) -> Optional[FrameVolume]:
        if self.depth == 0:
            return frame
        self._queue.append(frame)
        if len(self._queue) <= self.depth:
            return None
        return self._queue.popleft()

    @property
    def filled(self) -> bool:
        return len(self._queue) >= self.depth

    def __len__(self) -> int:
        return len(self._queue)


@dataclass(slots=True)
class TemporalState:
    """
    Per-pixel temporal recursion state plus a raw-frame delay line.

    Single owner; advanced once per frame.
    """
    coeffs: LdeCoeffs
    shape: tuple[int, int]
    delay: DelayLine
    zi: np.ndarray = field(init=False)
    frames_seen: int = 0

    def __post_init__(self) -> None:
        self.zi = np.zeros((self.coeffs.order, *self.shape))

    @staticmethod
    def new(coeffs: LdeCoeffs, shape: tuple[int, int], delay: int = 0) -> "TemporalState":
        return TemporalState(coeffs=coeffs, shape=tuple(shape), delay=DelayLine(max(0, delay)))


def advance_temporal(state: TemporalState, frame: FrameVolume,
                     role: Optional[FrameRole] = None,
                     raw: Optional[FrameVolume] = None
                     ) -> tuple[FrameVolume, Optional[FrameVolume]]:
    """
    One step of the per-pixel temporal recursion.

    Args:
        state: Temporal state, updated in place.
        frame: Frame fed to the recursion.
        role: Role tag of the filtered frame.
        raw: Frame pushed into the delay line; `frame` itself when omitted.
            Stage 1 filters a spatially smoothed frame but delays the raw one.
    Returns:
        The filtered frame and the raw frame delayed by the state's delay
        depth (None during warm-up).
    Raises:
        DimensionMismatch: If the frame shape differs from the state's.
    """
    if frame.shape != state.shape:
        raise DimensionMismatch(f"Frame shape {frame.shape} does not match state {state.shape}")
    coeffs = state.coeffs
    x = frame.values[np.newaxis]
    if coeffs.order == 0:
        y = coeffs.b[0] * x
    else:
        y, state.zi = lfilter(coeffs.b, coeffs.a, x, axis=0, zi=state.zi)
    state.frames_seen += 1
    delayed = state.delay.push(frame if raw is None else raw)
    return frame.with_values(y[0], role=role), delayed


def crop_margin(p: float) -> int:
    """Samples per edge for the zero-state transient to decay by e^-6."""
    # round-trip through exp/log can push an exact ratio just above the integer
    return int(math.ceil(EDGE_DECAY / -math.log(p) - 1e-9))


def warmup_frames(p: float, q: int = 0) -> int:
    return max(int(q), crop_margin(p))
