import math

import numpy as np
import pytest

from laguerre_ebd.engine.basis import BasisSpec, eval_basis, gram_schmidt, weight
from laguerre_ebd.engine.errors import DomainError
from laguerre_ebd.engine.frames import FrameStream, FrameVolume
from laguerre_ebd.engine.pipeline import (
    Pipeline,
    PipelineConfig,
    StageOne,
    StageOneConfig,
    StageTwo,
    StageTwoConfig,
    run_pipeline,
    sse_map,
    stage1,
    stage2_analyze,
)
from laguerre_ebd.engine.response import impulse_response, noncausal_kernel, power_norm, vrf, vrf_numeric
from laguerre_ebd.engine.synth import synthesis_filter
from laguerre_ebd.engine.types import OMEGA_7, FrameRole, Sidedness, full_bins
from laguerre_ebd.scenario.generator import ScenarioConfig, generate


def _field(n, shape, fn):
    return FrameStream(data=np.stack([np.full(shape, fn(i)) for i in range(n)]))


def test_default_margins():
    cfg = PipelineConfig()
    assert cfg.stage1.latency == 4
    assert cfg.stage1.warmup == 24
    assert cfg.stage2.warmup == 12
    assert cfg.warmup == 36
    assert cfg.crop == 24
    assert cfg.stage2.c_norm == pytest.approx(power_norm(*(math.exp(-0.5),) * 3))


def test_config_validation():
    with pytest.raises(DomainError):
        StageOneConfig(sigma_z=0.1)
    with pytest.raises(DomainError):
        StageOneConfig(degree=3)
    with pytest.raises(DomainError):
        StageTwoConfig(degree=1)
    with pytest.raises(DomainError):
        StageTwoConfig(omega="all")
    with pytest.raises(DomainError):
        PipelineConfig(workers=0)
    with pytest.raises(DomainError):
        PipelineConfig(velocity_mode="mean")
    assert StageTwoConfig(degree=1, omega="full").bins == full_bins(1)
    fallback = StageTwoConfig(fallback_b0=True)
    assert fallback.effective_degree == 0 and fallback.bins == {(0, 0, 0)}
    assert StageTwoConfig().bins == OMEGA_7


def test_stage_one_latency_and_indices():
    st = StageOne(StageOneConfig(), (40, 40))
    outs = [st.push(f) for f in _field(8, (40, 40), float)]
    assert outs[:4] == [None] * 4
    assert [o.residual.index for o in outs[4:]] == [0, 1, 2, 3]
    assert outs[4].residual.role is FrameRole.RESIDUAL
    assert outs[4].background.role is FrameRole.BACKGROUND
    assert outs[4].raw.values[0, 0] == 0.0


def test_stage_one_bypass():
    st = StageOne(StageOneConfig(bypass=True), (8, 8))
    frame = FrameVolume(np.arange(64.0).reshape(8, 8), index=3)
    out = st.push(frame)
    assert out.background is None
    np.testing.assert_array_equal(out.residual.values, frame.values)
    assert out.residual.role is FrameRole.RESIDUAL


@pytest.mark.parametrize("q_z", [4, 0, -2])
def test_stage_one_removes_quadratic_trends(q_z):
    stream = _field(120, (128, 128), lambda n: 1.0 + 0.02 * n + 0.001 * n * n)
    residual = stage1(stream, StageOneConfig(q_z=q_z))
    assert residual.start_index == max(0, -q_z)
    assert len(residual) == 120 - abs(q_z)
    last = residual.frame(len(residual) - 1)
    np.testing.assert_allclose(last.crop(50), 0.0, atol=1e-6)


def test_stage_one_background_stream():
    stream = _field(30, (40, 40), lambda n: 2.0)
    residual, background = stage1(stream, PipelineConfig(), with_background=True)
    assert len(residual) == len(background) == 26
    assert background.role is FrameRole.BACKGROUND
    _, none = stage1(stream, StageOneConfig(bypass=True), with_background=True)
    assert none is None
    with pytest.raises(DomainError):
        stage1(_field(3, (40, 40), float), StageOneConfig())


def test_stage_two_zero_input():
    st = StageTwo(StageTwoConfig(), (32, 32))
    out = st.push(FrameVolume.empty(32, 32, index=5))
    assert out.power.index == 5
    assert np.all(out.power.values == 0.0)
    assert out.spectrum.bins == OMEGA_7


def test_stage_two_power_peaks_at_static_spot():
    rows, cols = np.indices((48, 64))
    spot = np.exp(-((rows - 20) ** 2 + (cols - 30) ** 2) / 8.0)
    st = StageTwo(StageTwoConfig(), (48, 64))
    for i in range(40):
        out = st.push(FrameVolume(spot, index=i))
    row, col = out.power.argmax()
    assert abs(row - 20) <= 1 and abs(col - 30) <= 1


def test_stage_two_spectra_and_normalization():
    stream = _field(5, (24, 24), lambda n: 1.0)
    spectra = stage2_analyze(stream, StageTwoConfig(omega="full"))
    assert len(spectra) == 5
    assert spectra[0].bins == full_bins(2)
    raw = StageTwo(StageTwoConfig(normalize=False), (24, 24)).push(stream.frame(0)).power.values
    scaled = StageTwo(StageTwoConfig(), (24, 24)).push(stream.frame(0)).power.values
    np.testing.assert_allclose(scaled, raw * StageTwoConfig().c_norm)


def test_fit_error_vanishes_for_polynomial_fields():
    stream = _field(60, (128, 128), lambda n: 3.0)
    sse = sse_map(stream, StageTwoConfig())
    assert len(sse) == 60
    np.testing.assert_allclose(sse[-1].crop(55), 0.0, atol=1e-5)


def test_gamma_requires_degree_two():
    st = StageTwo(StageTwoConfig(fallback_b0=True), (16, 16))
    out = st.push(FrameVolume.empty(16, 16))
    assert st.alphas is None
    with pytest.raises(DomainError):
        st.gamma(out.spectrum)


def _scene(**kw):
    base = dict(frames=48, width=96, height=96, clutter=False, noise_std=0.0,
                target_velocity=(-1.0, 0.0), target_offset=(0.0, 0.0), final_position=(50.0, 48.0))
    base.update(kw)
    return generate(ScenarioConfig(**base))


def test_pipeline_records_and_warmup():
    stream, _ = _scene()
    run = run_pipeline(stream, PipelineConfig())
    assert run.frames_in == 48
    assert len(run.records) == 44
    assert [r.index for r in run.records] == list(range(44))
    assert sum(r.warmup for r in run.records) == 32
    assert len(run.power) == len(run.residual) == len(run.background) == 44
    stats = run.stats()
    assert stats["frames_out"] == 44 and stats["warmup_frames"] == 32


def test_pipeline_without_frames():
    stream, _ = _scene(frames=10)
    run = run_pipeline(stream, PipelineConfig(), keep_frames=False)
    assert len(run.records) == 6
    assert run.power == [] and run.raw == []


def test_pipeline_tracks_noise_free_target():
    stream, truth = _scene()
    run = run_pipeline(stream, PipelineConfig())
    hits = 0
    scored = [r for r in run.records if not r.warmup]
    for r in scored:
        row, col = truth.cell(r.index)
        hits += abs(r.row - row) <= 3 and abs(r.col - col) <= 3
    assert hits >= 0.8 * len(scored)


def test_worker_count_does_not_change_output():
    stream, _ = _scene(frames=12, clutter=True, noise_std=0.5, seed=3)
    one = run_pipeline(stream, PipelineConfig(workers=1))
    three = run_pipeline(stream, PipelineConfig(workers=3))
    for a, b in zip(one.power, three.power):
        np.testing.assert_array_equal(a.values, b.values)


def test_per_pixel_velocity_field():
    stream, _ = _scene(frames=6)
    pipe = Pipeline(PipelineConfig(velocity_mode="per_pixel"), stream.frame_shape)
    steps = [pipe.push(f) for f in stream]
    assert steps[:4] == [None] * 4
    v_x, v_y, reliable = steps[-1].velocity_field
    assert v_x.shape == v_y.shape == reliable.shape == (96, 96)


def test_fit_error_option_in_pipeline():
    stream, _ = _scene(frames=8)
    run = run_pipeline(stream, PipelineConfig(compute_sse=True))
    assert len(run.sse) == len(run.records) == 4


def test_bypass_feeds_raw_frames_to_stage_two():
    stream, _ = _scene(frames=8)
    cfg = PipelineConfig(stage1=StageOneConfig(bypass=True))
    assert cfg.warmup == 12 and cfg.crop == 12
    run = run_pipeline(stream, cfg)
    assert len(run.records) == 8
    assert run.background == []


def test_all_zero_frames_give_unreliable_velocity_without_raising():
    stream = FrameStream(data=np.zeros((20, 48, 48)))
    run = run_pipeline(stream, PipelineConfig(stage1=StageOneConfig(bypass=True), velocity_mode="per_pixel"))
    assert len(run.records) == 20
    assert not any(r.reliable for r in run.records)
    assert all(r.v_x == 0.0 and r.v_y == 0.0 for r in run.records)
    assert run.mean_velocity() is None


def test_cascade_is_linear_before_the_power_step():
    rng = np.random.Generator(np.random.PCG64(21))
    x = rng.standard_normal((14, 36, 36))
    y = rng.standard_normal((14, 36, 36))
    cfg = PipelineConfig(stage2=StageTwoConfig(omega="full"))
    rx, ry, rxy = (stage1(FrameStream(data=d), cfg) for d in (x, y, 2.0 * x - 0.5 * y))
    np.testing.assert_allclose(rxy.data, 2.0 * rx.data - 0.5 * ry.data, atol=1e-10)
    sx, sy, sxy = (stage2_analyze(r, cfg) for r in (rx, ry, rxy))
    for a, b, ab in zip(sx, sy, sxy):
        np.testing.assert_allclose(ab.coefficients, 2.0 * a.coefficients - 0.5 * b.coefficients, atol=1e-10)


@pytest.mark.parametrize("k", [(0, 0, 0), (2, 0, 1), (1, 1, 0), (0, 2, 2)])
def test_basis_shaped_input_excites_one_bin(k):
    # psi_k laid out over lags from the pixel under test; the window must see
    # every lag where the weights still matter
    cfg = StageTwoConfig(omega="full", normalize=False)
    frames, size = 61, 121
    centre, last = size // 2, frames - 1
    ax = gram_schmidt(BasisSpec(2, cfg.p_x, Sidedness.TWO_SIDED))
    ay = gram_schmidt(BasisSpec(2, cfg.p_y, Sidedness.TWO_SIDED))
    az = gram_schmidt(BasisSpec(2, cfg.p_z, Sidedness.CAUSAL))
    lag_x = centre - np.arange(size, dtype=np.float64)
    lag_t = last - np.arange(frames, dtype=np.float64)
    data = np.einsum("t,y,x->tyx", eval_basis(az, k[2], lag_t), eval_basis(ay, k[1], lag_x),
                     eval_basis(ax, k[0], lag_x))
    st = StageTwo(cfg, (size, size))
    for i in range(frames):
        out = st.push(FrameVolume(data[i], index=i))
    beta = out.spectrum.at(centre, centre)
    # odd spatial basis functions flip sign with the lag direction
    assert abs(beta[k]) == pytest.approx(1.0, abs=1e-6)
    others = np.abs(beta).copy()
    others[k] = 0.0
    assert others.max() < 1e-6


def test_power_equals_weighted_energy_of_the_local_fit():
    rng = np.random.Generator(np.random.PCG64(5))
    frames, size = 30, 33
    data = rng.standard_normal((frames, size, size))
    cfg = StageTwoConfig(omega="full", normalize=False)
    st = StageTwo(cfg, (size, size))
    for i in range(frames):
        out = st.push(FrameVolume(data[i], index=i))
    row = col = size // 2
    p_hat = float(out.power.values[row, col])
    ax = gram_schmidt(BasisSpec(2, cfg.p_x, Sidedness.TWO_SIDED))
    ay = gram_schmidt(BasisSpec(2, cfg.p_y, Sidedness.TWO_SIDED))
    az = gram_schmidt(BasisSpec(2, cfg.p_z, Sidedness.CAUSAL))

    # direct weighted projection of the frames onto the basis
    lag_x = col - np.arange(size, dtype=np.float64)
    lag_y = row - np.arange(size, dtype=np.float64)
    lag_t = frames - 1 - np.arange(frames, dtype=np.float64)

    def taps(alpha, lags, scale):
        return np.stack([eval_basis(alpha, k, lags) * scale for k in range(3)])

    direct = np.einsum("tyx,at,by,cx->cba", data,
                       taps(az, lag_t, weight(lag_t, az.p, Sidedness.CAUSAL)),
                       taps(ay, lag_y, weight(lag_y, ay.p, Sidedness.TWO_SIDED)),
                       taps(ax, lag_x, weight(lag_x, ax.p, Sidedness.TWO_SIDED)), optimize=True)
    np.testing.assert_allclose(np.abs(out.spectrum.at(row, col)), np.abs(direct), rtol=1e-6, atol=1e-9)
    assert p_hat == pytest.approx(float(np.sum(direct ** 2)), rel=1e-6)

    # sum over m of I_hat w I_hat, with I_hat rebuilt from the coefficients on a window wide enough for w to vanish
    beta = out.spectrum.at(row, col)
    m_s = np.arange(-80, 81, dtype=np.float64)
    m_t = np.arange(0, 161, dtype=np.float64)
    fitted = np.einsum("abc,ax,by,cz->zyx", beta,
                       taps(ax, m_s, np.sqrt(weight(m_s, ax.p, Sidedness.TWO_SIDED))),
                       taps(ay, m_s, np.sqrt(weight(m_s, ay.p, Sidedness.TWO_SIDED))),
                       taps(az, m_t, np.sqrt(weight(m_t, az.p, Sidedness.CAUSAL))), optimize=True)
    assert p_hat == pytest.approx(float(np.sum(fitted ** 2)), rel=1e-6)


def test_stage_one_white_noise_variance():
    cfg = StageOneConfig()
    rng = np.random.Generator(np.random.PCG64(17))
    stream = FrameStream(data=rng.standard_normal((300, 96, 96)))
    residual, background = stage1(stream, cfg, with_background=True)
    skip, m = cfg.warmup + 10, cfg.margin
    bg = np.stack([background.frame(i).crop(m) for i in range(skip, len(background))])
    res = np.stack([residual.frame(i).crop(m) for i in range(skip, len(residual))])

    spatial_x = synthesis_filter(cfg.p_x, 0, Sidedness.TWO_SIDED, cfg.degree)
    spatial_y = synthesis_filter(cfg.p_y, 0, Sidedness.TWO_SIDED, cfg.degree)
    temporal = synthesis_filter(cfg.p_z, cfg.q_z, Sidedness.CAUSAL, cfg.degree)
    expected_bg = vrf_numeric(spatial_x) * vrf_numeric(spatial_y) * vrf(cfg.p_z, cfg.q_z)
    assert expected_bg == pytest.approx(vrf_numeric(spatial_x) * vrf_numeric(spatial_y) * vrf_numeric(temporal))
    assert np.var(bg) == pytest.approx(expected_bg, rel=0.05)

    # the delayed raw sample enters the background through the centre spatial taps and temporal tap q_z
    centre_x = noncausal_kernel(spatial_x, 64)[64]
    centre_y = noncausal_kernel(spatial_y, 64)[64]
    tap_q = impulse_response(temporal, cfg.q_z + 1)[cfg.q_z]
    expected_res = 1.0 + expected_bg - 2.0 * centre_x * centre_y * tap_q
    assert np.var(res) == pytest.approx(expected_res, rel=0.05)


def test_scene_clutter_is_notched_by_stage_one():
    # the design point: spatial frequencies up to 0.03 moving at up to 0.5 px/frame per axis
    cfg = PipelineConfig()
    for seed in range(3):
        stream, _ = generate(ScenarioConfig(frames=80, width=96, height=96, target=False, noise_std=0.0,
                                            dc=0.0, f_max=0.03, v_clt_range=(0.0, 0.5), seed=seed))
        residual = stage1(stream, cfg)
        m = cfg.stage1.margin
        keep = range(cfg.warmup, len(residual))
        clutter = np.mean([np.mean(stream.frame(i).crop(m) ** 2) for i in keep])
        left = np.mean([np.mean(residual.frame(i).crop(m) ** 2) for i in keep])
        assert 10 * math.log10(clutter / left) >= 20.0
