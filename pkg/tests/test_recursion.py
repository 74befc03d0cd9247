import math

import numpy as np
import pytest

from laguerre_ebd.engine.errors import DimensionMismatch, DomainError, NonFiniteInput
from laguerre_ebd.engine.frames import FrameVolume
from laguerre_ebd.engine.recursion import (
    DelayLine,
    RecursionState,
    TemporalState,
    advance_temporal,
    crop_margin,
    filter_1d,
    filter_1d_noncausal,
    filter_frame_spatial,
    filter_plane,
    warmup_frames,
)
from laguerre_ebd.engine.synth import analysis_filter, synthesis_filter, table_synthesis_filter
from laguerre_ebd.engine.types import FrameRole, Sidedness

P_QUARTER = math.exp(-0.25)
P_HALF = math.exp(-0.5)


def test_impulse_through_causal_table():
    x = np.zeros(4)
    x[0] = 1.0
    y, state = filter_1d(table_synthesis_filter(P_QUARTER, 4), x)
    assert y[0] == pytest.approx(0.0920, abs=5e-5)
    assert y[1] == pytest.approx(0.1237, abs=5e-4)
    assert state.zi.shape == (3,)


def test_chunked_processing_matches_one_shot():
    rng = np.random.Generator(np.random.PCG64(1))
    x = rng.standard_normal(500)
    coeffs = synthesis_filter(P_QUARTER, 4)
    full, _ = filter_1d(coeffs, x)
    state = RecursionState.zeros(coeffs)
    parts = []
    for lo in range(0, x.size, 37):
        y, state = filter_1d(coeffs, x[lo:lo + 37], state)
        parts.append(y)
    np.testing.assert_array_equal(np.concatenate(parts), full)


def test_state_copy_is_independent():
    coeffs = synthesis_filter(P_HALF, 0)
    _, state = filter_1d(coeffs, np.ones(5))
    snapshot = state.copy()
    filter_1d(coeffs, np.ones(5), state)
    np.testing.assert_array_equal(snapshot.zi, state.zi)


def test_non_finite_input_reports_location():
    x = np.ones(10)
    x[3] = np.nan
    with pytest.raises(NonFiniteInput) as err:
        filter_1d(synthesis_filter(P_HALF, 0), x)
    assert err.value.location == (3,)


def test_filter_1d_shape_checks():
    coeffs = synthesis_filter(P_HALF, 0)
    with pytest.raises(DimensionMismatch):
        filter_1d(coeffs, np.ones((2, 2)))
    with pytest.raises(DimensionMismatch):
        filter_1d(coeffs, np.ones(3), RecursionState(zi=np.zeros(5)))


def test_noncausal_constant_interior_is_unity():
    y = filter_1d_noncausal(table_synthesis_filter(P_HALF, 0, Sidedness.TWO_SIDED), np.ones(200))
    np.testing.assert_allclose(y[60:140], 1.0, atol=1e-6)


def test_noncausal_analysis_of_odd_pattern():
    # antisymmetric k = 1 filter maps a ramp to a constant in the interior
    pair = analysis_filter(1, P_HALF, Sidedness.TWO_SIDED)
    y = filter_1d_noncausal(pair, np.arange(200.0))
    assert np.ptp(y[60:140]) < 1e-6


@pytest.mark.parametrize("axis", [0, 1])
def test_worker_split_is_exact(axis):
    rng = np.random.Generator(np.random.PCG64(2))
    data = rng.standard_normal((37, 53))
    pair = synthesis_filter(P_HALF, 0, Sidedness.TWO_SIDED)
    np.testing.assert_array_equal(filter_plane(pair, data, axis, workers=4),
                                  filter_plane(pair, data, axis, workers=1))


def test_spatial_filtering_is_separable():
    rng = np.random.Generator(np.random.PCG64(3))
    frame = FrameVolume(rng.standard_normal((40, 50)), index=7)
    fx = synthesis_filter(P_HALF, 0, Sidedness.TWO_SIDED)
    fy = analysis_filter(2, P_QUARTER, Sidedness.TWO_SIDED)
    xy = filter_frame_spatial(frame, fx, fy, order="xy")
    yx = filter_frame_spatial(frame, fx, fy, order="yx", role=FrameRole.BACKGROUND)
    np.testing.assert_allclose(xy.values, yx.values, atol=1e-12)
    assert xy.index == 7 and xy.role is FrameRole.RAW
    assert yx.role is FrameRole.BACKGROUND
    with pytest.raises(DomainError):
        filter_frame_spatial(frame, fx, fy, order="zz")


def test_spatial_smoothing_of_constant_frame():
    pair = table_synthesis_filter(P_HALF, 0, Sidedness.TWO_SIDED)
    out = filter_frame_spatial(FrameVolume(np.full((128, 128), 3.0)), pair, pair)
    np.testing.assert_allclose(out.crop(45), 3.0, atol=1e-6)


def test_spatial_filter_rejects_tiny_frames():
    pair = table_synthesis_filter(P_HALF, 0, Sidedness.TWO_SIDED)
    with pytest.raises(DimensionMismatch):
        filter_frame_spatial(FrameVolume(np.ones((2, 10))), pair, pair)


def test_delay_line():
    line = DelayLine(2)
    frames = [FrameVolume(np.full((2, 2), float(i)), index=i) for i in range(4)]
    assert line.push(frames[0]) is None
    assert line.push(frames[1]) is None
    assert line.filled
    assert line.push(frames[2]) is frames[0]
    assert line.push(frames[3]) is frames[1]
    assert len(line) == 2
    assert DelayLine(0).push(frames[0]) is frames[0]
    with pytest.raises(DomainError):
        DelayLine(-1)


def test_temporal_recursion_reproduces_delayed_quadratic():
    q = 4
    state = TemporalState.new(synthesis_filter(P_QUARTER, q), (3, 5), delay=q)
    out = delayed = None
    for n in range(300):
        frame = FrameVolume(np.full((3, 5), 0.01 * n * n - n), index=n)
        out, delayed = advance_temporal(state, frame, role=FrameRole.BACKGROUND)
    m = 299 - q
    np.testing.assert_allclose(out.values, 0.01 * m * m - m, rtol=1e-9)
    assert out.role is FrameRole.BACKGROUND
    assert delayed.index == m
    assert state.frames_seen == 300


def test_temporal_delay_carries_raw_frame():
    state = TemporalState.new(synthesis_filter(P_QUARTER, 1), (2, 2), delay=1)
    smooth = FrameVolume(np.zeros((2, 2)), index=0)
    raw = FrameVolume(np.ones((2, 2)), index=0)
    _, first = advance_temporal(state, smooth, raw=raw)
    assert first is None
    _, second = advance_temporal(state, smooth.with_values(np.zeros((2, 2)), index=1))
    assert second is raw


def test_temporal_shape_mismatch():
    state = TemporalState.new(synthesis_filter(P_QUARTER, 0), (4, 4))
    with pytest.raises(DimensionMismatch):
        advance_temporal(state, FrameVolume(np.zeros((4, 5))))


def test_margins():
    assert crop_margin(P_HALF) == 12
    assert crop_margin(P_QUARTER) == 24
    assert crop_margin(0.5) == 9
    assert warmup_frames(P_QUARTER, 4) == 24
    assert warmup_frames(0.5, 30) == 30
