from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Optional

import numpy as np

from .errors import DimensionMismatch, DomainError, NonFiniteInput
from .types import FrameRole


def _check_finite(values: np.ndarray, index: Optional[int] = None) -> None:
    if not np.all(np.isfinite(values)):
        bad = tuple(int(i) for i in np.argwhere(~np.isfinite(values))[0])
        where = bad if index is None else (index, *bad)
        raise NonFiniteInput(f"Non-finite sample at {where}", location=where)


@dataclass(frozen=True, slots=True, eq=False)
class FrameVolume:
    """
    One frame of a stream: a (height, width) grid tagged with its role.

    Row index is y and column index is x. Values are float64 and
    read-only; transformations return new instances.

    Attributes:
        values: (height, width) sample grid.
        index: Frame index n_z in the source stream.
        role: Which signal the frame holds (raw, background, residual, power).
    """
    values: np.ndarray
    index: int = 0
    role: FrameRole = FrameRole.RAW

    def __post_init__(self) -> None:
        v = np.array(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise DimensionMismatch(f"Frame must be 2-D, got shape {v.shape}")
        _check_finite(v, self.index)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @staticmethod
    def empty(height: int, width: int, index: int = 0, role: FrameRole = FrameRole.RAW) -> "FrameVolume":
        """
        Create an all-zero frame.
        Raises:
            DomainError: If either dimension is smaller than 1.
        """
        if height < 1 or width < 1:
            raise DomainError("Frame dimensions must be >= 1")
        return FrameVolume(values=np.zeros((height, width)), index=index, role=role)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def with_values(self, values: np.ndarray, role: Optional[FrameRole] = None,
                    index: Optional[int] = None) -> "FrameVolume":
        return FrameVolume(
            values=values,
            index=self.index if index is None else index,
            role=self.role if role is None else role,
        )

    def crop(self, margin: int) -> np.ndarray:
        """Interior samples, dropping `margin` pixels from every edge."""
        if margin <= 0:
            return self.values
        if 2 * margin >= min(self.shape):
            raise DomainError(f"Crop margin {margin} leaves no interior in a {self.shape} frame")
        return self.values[margin:-margin, margin:-margin]

    def argmax(self) -> tuple[int, int]:
        """(row, col) of the largest sample."""
        r, c = np.unravel_index(int(np.argmax(self.values)), self.shape)
        return int(r), int(c)


@dataclass(frozen=True, slots=True, eq=False)
class FrameStream:
    """
    A finite run of equally sized frames, stored as one (N, H, W) array.
    """
    data: np.ndarray
    role: FrameRole = FrameRole.RAW
    start_index: int = 0

    def __post_init__(self) -> None:
        d = np.array(self.data, dtype=np.float64)
        if d.ndim != 3:
            raise DimensionMismatch(f"Frame stream must be 3-D (frames, height, width), got {d.shape}")
        _check_finite(d)
        d.setflags(write=False)
        object.__setattr__(self, "data", d)

    @staticmethod
    def from_frames(frames: Iterable[FrameVolume], role: Optional[FrameRole] = None) -> "FrameStream":
        frames = list(frames)
        if not frames:
            raise DomainError("Cannot build a stream from zero frames")
        shape = frames[0].shape
        for fr in frames:
            if fr.shape != shape:
                raise DimensionMismatch(f"Frame {fr.index} has shape {fr.shape}, expected {shape}")
        return FrameStream(
            data=np.stack([fr.values for fr in frames]),
            role=frames[0].role if role is None else role,
            start_index=frames[0].index,
        )

    def __len__(self) -> int:
        return self.data.shape[0]

    def __iter__(self) -> Iterator[FrameVolume]:
        for i in range(len(self)):
            yield self.frame(i)

    def frame(self, i: int) -> FrameVolume:
        return FrameVolume(values=self.data[i], index=self.start_index + i, role=self.role)

    @property
    def frame_shape(self) -> tuple[int, int]:
        return self.data.shape[1], self.data.shape[2]

    def chunks(self, size: int) -> Iterator["FrameStream"]:
        """Consecutive sub-streams of at most `size` frames."""
        if size < 1:
            raise DomainError("Chunk size must be >= 1")
        for lo in range(0, len(self), size):
            yield FrameStream(self.data[lo:lo + size], role=self.role, start_index=self.start_index + lo)
