"""
The two-stage enhance-before-detect cascade.

Stage 1 whitens the background: a separable 3-D low-pass (two-sided in
x and y, causal in time with synthesis offset q_z) estimates the
background, and the residual J - I_hat is passed on. Stage 2 runs a
separable bank of analysis filters over the residual and accumulates the
squared Laguerre coefficients into a foreground power map. The stage-2
spectrum at the power peak also yields a local velocity estimate.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .basis import BasisSpec, gram_schmidt
from .errors import DomainError
from .frames import FrameStream, FrameVolume
from .recursion import (
    DelayLine,
    TemporalState,
    advance_temporal,
    crop_margin,
    filter_frame_spatial,
    filter_plane,
    warmup_frames,
)
from .response import power_norm
from .spectrum import (
    ComponentCoeffs,
    LaguerreSpectrum,
    TargetModel,
    accumulate_power,
    beta_to_gamma,
    estimate_velocity,
    velocity_map,
)
from .synth import analysis_filter, synthesis_filter, weight_filter
from .types import OMEGA_7, BinIndex, FrameRole, Sidedness, full_bins, iter_sorted

logger = logging.getLogger(__name__)

REFERENCE_FPS = 88.0


def _check_sigma(name: str, sigma: float) -> None:
    if not (sigma < 0) or not math.isfinite(sigma):
        raise DomainError(f"{name} must be a finite negative number, got {sigma}")


@dataclass(frozen=True, slots=True)
class StageOneConfig:
    """
    Background estimator parameters.

    Attributes:
        sigma_x, sigma_y: Spatial forgetting factors (two-sided, q = 0).
        sigma_z: Temporal forgetting factor (causal).
        q_z: Temporal synthesis offset in frames. Negative values predict.
        degree: Polynomial degree B of the background model (0, 1 or 2).
        bypass: Pass frames straight to stage 2.
    """
    sigma_x: float = -0.5
    sigma_y: float = -0.5
    sigma_z: float = -0.25
    q_z: int = 4
    degree: int = 2
    bypass: bool = False

    def __post_init__(self) -> None:
        for name in ("sigma_x", "sigma_y", "sigma_z"):
            _check_sigma(name, getattr(self, name))
        if int(self.q_z) != self.q_z:
            raise DomainError(f"q_z must be an integer to form a residual, got {self.q_z}")
        if self.degree not in (0, 1, 2):
            raise DomainError(f"Stage-1 degree must be 0, 1 or 2, got {self.degree}")

    @property
    def p_x(self) -> float:
        return math.exp(self.sigma_x)

    @property
    def p_y(self) -> float:
        return math.exp(self.sigma_y)

    @property
    def p_z(self) -> float:
        return math.exp(self.sigma_z)

    @property
    def latency(self) -> int:
        """Frames between an input and its residual."""
        return 0 if self.bypass else max(0, int(self.q_z))

    @property
    def warmup(self) -> int:
        if self.bypass:
            return 0
        return warmup_frames(self.p_z, abs(int(self.q_z)))

    @property
    def margin(self) -> int:
        if self.bypass:
            return 0
        return max(crop_margin(self.p_x), crop_margin(self.p_y))


@dataclass(frozen=True, slots=True)
class StageTwoConfig:
    """
    Foreground accumulator parameters.

    Attributes:
        sigma_x, sigma_y: Spatial forgetting factors (two-sided analysis).
        sigma_z: Temporal forgetting factor (causal analysis).
        degree: Polynomial degree B of the local target model.
        omega: "subset7" for the moving-point-target bins, "full" for all (B+1)^3.
        fallback_b0: Use B = 0 and the DC bin only.
        normalize: Scale accumulated power by the weight mass.
    """
    sigma_x: float = -0.5
    sigma_y: float = -0.5
    sigma_z: float = -0.5
    degree: int = 2
    omega: str = "subset7"
    fallback_b0: bool = False
    normalize: bool = True

    def __post_init__(self) -> None:
        for name in ("sigma_x", "sigma_y", "sigma_z"):
            _check_sigma(name, getattr(self, name))
        if self.omega not in ("subset7", "full"):
            raise DomainError(f"omega must be 'subset7' or 'full', got {self.omega!r}")
        if not (0 <= self.degree <= 6):
            raise DomainError(f"Stage-2 degree must lie in 0..6, got {self.degree}")
        if self.omega == "subset7" and not self.fallback_b0 and self.degree < 2:
            raise DomainError("The seven-bin subset needs degree >= 2; use omega='full'")

    @property
    def p_x(self) -> float:
        return math.exp(self.sigma_x)

    @property
    def p_y(self) -> float:
        return math.exp(self.sigma_y)

    @property
    def p_z(self) -> float:
        return math.exp(self.sigma_z)

    @property
    def effective_degree(self) -> int:
        return 0 if self.fallback_b0 else self.degree

    @property
    def bins(self) -> frozenset[BinIndex]:
        if self.fallback_b0:
            return frozenset({(0, 0, 0)})
        if self.omega == "full":
            return full_bins(self.degree)
        return OMEGA_7

    @property
    def c_norm(self) -> float:
        return power_norm(self.p_x, self.p_y, self.p_z)

    @property
    def warmup(self) -> int:
        return crop_margin(self.p_z)

    @property
    def margin(self) -> int:
        return max(crop_margin(self.p_x), crop_margin(self.p_y))


@dataclass(frozen=True, slots=True)
class PipelineConfig:
    stage1: StageOneConfig = field(default_factory=StageOneConfig)
    stage2: StageTwoConfig = field(default_factory=StageTwoConfig)
    workers: int = 1
    velocity_mode: str = "argmax"
    compute_sse: bool = False

    def __post_init__(self) -> None:
        if self.workers < 1:
            raise DomainError(f"workers must be >= 1, got {self.workers}")
        if self.velocity_mode not in ("argmax", "per_pixel"):
            raise DomainError(f"velocity_mode must be 'argmax' or 'per_pixel', got {self.velocity_mode!r}")

    @property
    def warmup(self) -> int:
        """Input frames whose outputs are still dominated by start-up transients."""
        return self.stage1.warmup + self.stage2.warmup

    @property
    def crop(self) -> int:
        """Spatial margin (pixels per edge) excluded from metrics."""
        return self.stage1.margin + self.stage2.margin


@dataclass(frozen=True, slots=True)
class StageOneOutput:
    raw: FrameVolume
    background: Optional[FrameVolume]
    residual: FrameVolume


class StageOne:
    """
    Streaming background subtraction.

    With q_z >= 0 the residual for frame n - q_z is produced when frame n
    arrives, against the raw frame held in a delay line. With q_z < 0 the
    background is a prediction |q_z| frames ahead and is itself delayed
    until the frame it predicts arrives.
    """

    def __init__(self, cfg: StageOneConfig, shape: tuple[int, int], workers: int = 1):
        self.cfg = cfg
        self.shape = tuple(shape)
        self.workers = workers
        if cfg.bypass:
            return
        self.spatial_x = synthesis_filter(cfg.p_x, 0, Sidedness.TWO_SIDED, cfg.degree)
        self.spatial_y = synthesis_filter(cfg.p_y, 0, Sidedness.TWO_SIDED, cfg.degree)
        self.temporal_coeffs = synthesis_filter(cfg.p_z, cfg.q_z, Sidedness.CAUSAL, cfg.degree)
        self.temporal = TemporalState.new(self.temporal_coeffs, self.shape, delay=max(0, cfg.q_z))
        self._predictions = DelayLine(max(0, -cfg.q_z))

    def push(self, frame: FrameVolume) -> Optional[StageOneOutput]:
        if self.cfg.bypass:
            return StageOneOutput(raw=frame, background=None,
                                  residual=frame.with_values(frame.values, role=FrameRole.RESIDUAL))
        smooth = filter_frame_spatial(frame, self.spatial_x, self.spatial_y, workers=self.workers)
        background, delayed_raw = advance_temporal(self.temporal, smooth, role=FrameRole.BACKGROUND, raw=frame)
        if self.cfg.q_z >= 0:
            if delayed_raw is None:
                return None
            raw = delayed_raw
            background = background.with_values(background.values, index=raw.index)
        else:
            predicted = self._predictions.push(background)
            if predicted is None:
                return None
            raw = frame
            background = predicted.with_values(predicted.values, index=raw.index)
        residual = raw.with_values(raw.values - background.values, role=FrameRole.RESIDUAL)
        return StageOneOutput(raw=raw, background=background, residual=residual)


@dataclass(frozen=True, slots=True)
class StageTwoOutput:
    spectrum: LaguerreSpectrum
    power: FrameVolume
    sse: Optional[FrameVolume] = None


class StageTwo:
    """
    Separable analysis bank: x filters, then y filters, then one temporal
    recursion per populated bin.
    """

    def __init__(self, cfg: StageTwoConfig, shape: tuple[int, int], workers: int = 1,
                 compute_sse: bool = False):
        self.cfg = cfg
        self.shape = tuple(shape)
        self.workers = workers
        self.degree = cfg.effective_degree
        self.bins = cfg.bins
        computed = full_bins(self.degree) if compute_sse else self.bins
        self.computed_bins = frozenset(computed | self.bins)
        kx_set = sorted({k[0] for k in self.computed_bins})
        ky_set = sorted({k[1] for k in self.computed_bins})
        kz_set = sorted({k[2] for k in self.computed_bins})
        self.bank_x = {k: analysis_filter(k, cfg.p_x, Sidedness.TWO_SIDED) for k in kx_set}
        self.bank_y = {k: analysis_filter(k, cfg.p_y, Sidedness.TWO_SIDED) for k in ky_set}
        bank_z = {k: analysis_filter(k, cfg.p_z, Sidedness.CAUSAL) for k in kz_set}
        self.temporal = {k: TemporalState.new(bank_z[k[2]], self.shape) for k in iter_sorted(self.computed_bins)}
        self.c_norm = cfg.c_norm
        self.compute_sse = compute_sse
        if compute_sse:
            self.weight_x = weight_filter(cfg.p_x, Sidedness.TWO_SIDED)
            self.weight_y = weight_filter(cfg.p_y, Sidedness.TWO_SIDED)
            self.weight_z = TemporalState.new(weight_filter(cfg.p_z, Sidedness.CAUSAL), self.shape)
        self.alphas = None
        if self.degree >= 2:
            self.alphas = (
                gram_schmidt(BasisSpec(self.degree, cfg.p_x, Sidedness.TWO_SIDED)),
                gram_schmidt(BasisSpec(self.degree, cfg.p_y, Sidedness.TWO_SIDED)),
                gram_schmidt(BasisSpec(self.degree, cfg.p_z, Sidedness.CAUSAL)),
            )

    def push(self, residual: FrameVolume) -> StageTwoOutput:
        n = self.degree + 1
        coeffs = np.zeros((n, n, n, *self.shape))
        along_x = {k: filter_plane(f, residual.values, axis=1, workers=self.workers)
                   for k, f in self.bank_x.items()}
        along_xy: dict[tuple[int, int], np.ndarray] = {}
        for kx, ky, kz in iter_sorted(self.computed_bins):
            if (kx, ky) not in along_xy:
                along_xy[(kx, ky)] = filter_plane(self.bank_y[ky], along_x[kx], axis=0, workers=self.workers)
            plane = residual.with_values(along_xy[(kx, ky)])
            out, _ = advance_temporal(self.temporal[(kx, ky, kz)], plane)
            coeffs[kx, ky, kz] = out.values
        spectrum = LaguerreSpectrum(coefficients=coeffs, bins=self.computed_bins, index=residual.index)
        power = accumulate_power(spectrum, self.bins, self.c_norm if self.cfg.normalize else None)

        sse = None
        if self.compute_sse:
            sq = residual.with_values(residual.values ** 2)
            spatial = filter_frame_spatial(sq, self.weight_x, self.weight_y, workers=self.workers)
            term1, _ = advance_temporal(self.weight_z, spatial)
            fitted = accumulate_power(spectrum, full_bins(self.degree)).values
            sse = residual.with_values(term1.values - fitted, role=FrameRole.POWER)
        return StageTwoOutput(spectrum=spectrum, power=power, sse=sse)

    def gamma(self, spectrum: LaguerreSpectrum, pixel: Optional[tuple[int, int]] = None) -> ComponentCoeffs:
        if self.alphas is None:
            raise DomainError("Component coefficients need a stage-2 degree of at least 2")
        beta = spectrum.coefficients if pixel is None else spectrum.at(*pixel)
        return beta_to_gamma(beta, *self.alphas)


@dataclass(frozen=True, slots=True)
class FrameRecord:
    """Per-frame detection summary."""
    index: int
    row: int
    col: int
    power: float
    v_x: Optional[float]
    v_y: Optional[float]
    reliable: bool
    warmup: bool


@dataclass(frozen=True, slots=True)
class PipelineStep:
    record: FrameRecord
    raw: FrameVolume
    background: Optional[FrameVolume]
    residual: FrameVolume
    power: FrameVolume
    spectrum: LaguerreSpectrum
    target: Optional[TargetModel] = None
    sse: Optional[FrameVolume] = None
    velocity_field: Optional[tuple[np.ndarray, np.ndarray, np.ndarray]] = None


@dataclass(slots=True)
class PipelineRun:
    """Everything a run produced, plus its summary statistics."""
    records: list[FrameRecord] = field(default_factory=list)
    raw: list[FrameVolume] = field(default_factory=list)
    background: list[FrameVolume] = field(default_factory=list)
    residual: list[FrameVolume] = field(default_factory=list)
    power: list[FrameVolume] = field(default_factory=list)
    sse: list[FrameVolume] = field(default_factory=list)
    elapsed: float = 0.0
    frames_in: int = 0

    @property
    def fps(self) -> float:
        return self.frames_in / self.elapsed if self.elapsed > 0 else float("inf")

    def mean_velocity(self) -> Optional[tuple[float, float]]:
        """Average of the reliable post-warm-up velocity estimates."""
        usable = [r for r in self.records if r.reliable and not r.warmup and r.v_x is not None]
        if not usable:
            return None
        return (float(np.mean([r.v_x for r in usable])), float(np.mean([r.v_y for r in usable])))

    def stats(self) -> dict:
        mv = self.mean_velocity()
        return {
            "frames_in": self.frames_in,
            "frames_out": len(self.records),
            "warmup_frames": sum(1 for r in self.records if r.warmup),
            "reliable_velocity_frames": sum(1 for r in self.records if r.reliable and not r.warmup),
            "mean_v_x": None if mv is None else mv[0],
            "mean_v_y": None if mv is None else mv[1],
            "fps": self.fps,
        }


class Pipeline:
    """
    Frame-at-a-time driver of the cascade.

    push() returns None while stage 1 is filling its delay line.
    """

    def __init__(self, cfg: PipelineConfig, shape: tuple[int, int]):
        self.cfg = cfg
        self.shape = tuple(shape)
        self.stage1 = StageOne(cfg.stage1, self.shape, cfg.workers)
        self.stage2 = StageTwo(cfg.stage2, self.shape, cfg.workers, compute_sse=cfg.compute_sse)
        self.frames_in = 0

    def _argmax(self, power: FrameVolume) -> tuple[int, int]:
        m = self.cfg.crop
        if 2 * m >= min(power.shape):
            return power.argmax()
        r, c = np.unravel_index(int(np.argmax(power.crop(m))), power.crop(m).shape)
        return int(r) + m, int(c) + m

    def push(self, frame: FrameVolume) -> Optional[PipelineStep]:
        self.frames_in += 1
        s1 = self.stage1.push(frame)
        if s1 is None:
            return None
        s2 = self.stage2.push(s1.residual)
        row, col = self._argmax(s2.power)
        target = None
        field_ = None
        if self.stage2.alphas is not None:
            target = estimate_velocity(self.stage2.gamma(s2.spectrum, (row, col)))
            if self.cfg.velocity_mode == "per_pixel":
                field_ = velocity_map(self.stage2.gamma(s2.spectrum))
        warm = self.frames_in <= self.cfg.warmup
        record = FrameRecord(
            index=s1.residual.index,
            row=row,
            col=col,
            power=float(s2.power.values[row, col]),
            v_x=None if target is None else target.v_x,
            v_y=None if target is None else target.v_y,
            reliable=bool(target is not None and target.reliable),
            warmup=warm,
        )
        if target is not None and not target.reliable and not warm:
            logger.warning("Unreliable velocity estimate at frame %d (%d, %d)", record.index, row, col)
        logger.debug("frame %d: argmax=(%d, %d) power=%.4g v=(%s, %s)",
                     record.index, row, col, record.power, record.v_x, record.v_y)
        return PipelineStep(
            record=record, raw=s1.raw, background=s1.background, residual=s1.residual,
            power=s2.power, spectrum=s2.spectrum, target=target, sse=s2.sse, velocity_field=field_,
        )

    def run(self, frames: FrameStream | Iterable[FrameVolume], keep_frames: bool = True) -> PipelineRun:
        """
        Process a whole stream.

        Args:
            frames: Input stream (or any iterable of frames).
            keep_frames: Retain the per-stage frames in the result.
        Returns:
            The PipelineRun with records, optional frames and throughput.
        """
        result = PipelineRun()
        start = time.perf_counter()
        for frame in frames:
            step = self.push(frame)
            result.frames_in += 1
            if step is None:
                continue
            result.records.append(step.record)
            if keep_frames:
                result.raw.append(step.raw)
                if step.background is not None:
                    result.background.append(step.background)
                result.residual.append(step.residual)
                result.power.append(step.power)
                if step.sse is not None:
                    result.sse.append(step.sse)
        result.elapsed = time.perf_counter() - start
        log_throughput(result)
        return result


def log_throughput(result: PipelineRun) -> None:
    fps = result.fps
    logger.info("Processed %d frames (%d outputs) in %.3f s, %.1f frames/s",
                result.frames_in, len(result.records), result.elapsed, fps)
    if fps < REFERENCE_FPS:
        logger.warning("Throughput %.1f frames/s is below the %.0f frames/s reference", fps, REFERENCE_FPS)


def run_pipeline(stream: FrameStream, cfg: Optional[PipelineConfig] = None, keep_frames: bool = True) -> PipelineRun:
    cfg = cfg or PipelineConfig()
    logger.info("Running pipeline on %d frames of %s", len(stream), stream.frame_shape)
    return Pipeline(cfg, stream.frame_shape).run(stream, keep_frames=keep_frames)


def stage1(stream: FrameStream, cfg: StageOneConfig | PipelineConfig, workers: int = 1,
           with_background: bool = False):
    """
    Residual stream of the background estimator.

    The output is |q_z| frames shorter than the input. Residuals keep the
    index of the raw frame they belong to, so start_index is nonzero only
    in predictive mode (q_z < 0). With `with_background` the background stream is returned
    as well (None when stage 1 is bypassed).
    """
    if isinstance(cfg, PipelineConfig):
        workers = cfg.workers
        cfg = cfg.stage1
    st = StageOne(cfg, stream.frame_shape, workers)
    outs = [o for o in (st.push(f) for f in stream) if o is not None]
    if not outs:
        raise DomainError(f"Stream of {len(stream)} frames is shorter than the stage-1 delay")
    residual = FrameStream.from_frames([o.residual for o in outs], role=FrameRole.RESIDUAL)
    if not with_background:
        return residual
    background = None
    if not cfg.bypass:
        background = FrameStream.from_frames([o.background for o in outs], role=FrameRole.BACKGROUND)
    return residual, background


def stage2_analyze(stream: FrameStream, cfg: StageTwoConfig | PipelineConfig,
                   workers: int = 1) -> list[LaguerreSpectrum]:
    """Laguerre spectrum of every frame of a (residual) stream."""
    if isinstance(cfg, PipelineConfig):
        workers = cfg.workers
        cfg = cfg.stage2
    st = StageTwo(cfg, stream.frame_shape, workers)
    return [st.push(f).spectrum for f in stream]


def sse_map(stream: FrameStream, cfg: StageTwoConfig | PipelineConfig, workers: int = 1) -> list[FrameVolume]:
    """
    Weighted squared error of the local polynomial fit, per pixel and frame.

    Sum_m J w J minus the squared coefficients over every bin; the cross
    and fitted terms of the expansion both reduce to that sum.
    """
    if isinstance(cfg, PipelineConfig):
        workers = cfg.workers
        cfg = cfg.stage2
    st = StageTwo(cfg, stream.frame_shape, workers, compute_sse=True)
    return [st.push(f).sse for f in stream]
