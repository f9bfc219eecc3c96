"""End-to-end super-resolution pipelines over a burst of LR frames.

Eight structures compose the two engines, sparse-coding SISR and
multi-frame fusion, in different orders and at different stage scales:

==================  =======================================================
kind                stages (input burst -> output at scale r)
==================  =======================================================
sisr-only           sparse-code frame 0 at r; other frames ignored
mfsr-shift-add      register, shift-and-add fuse at r, hole-fill
mfsr-curve-fit      register, local curve-fit fuse at r
sfml                sparse-code EVERY frame at r, then align-and-average
                    the upscaled images (fusion at scale 1)
mfsl-shift-add      shift-and-add fuse at r, then a scale-1 sparse-coding
                    enhancement pass over the fused image
mfsl-curve-fit      curve-fit fuse at r, then the same enhancement pass
s2m2                sparse-code each frame at r1, then fuse at r2 (r1*r2=r)
m2s2                fuse at r1, then sparse-code the result at r2
==================  =======================================================

Shift bookkeeping: registration stores shifts in HR pixels of the full
output grid. A frame pixel i maps to output position scale*i - shift, so
images already upscaled by a first stage keep their original shift values
for the second-stage fusion, while a fusion running at a coarser stage
scale r1 sees the same physical displacement as shift/r2 of its own grid
units. That division is the only rescaling any pipeline performs.
"""

import dataclasses
import time
import warnings

import numpy as np

from . import fusion, registration
from .degradation import LRFrame
from .ista import SolverParams
from .sisr import SolveStats, sisr_apply

SISR_ONLY = "sisr-only"
MFSR_SHIFT_ADD = "mfsr-shift-add"
MFSR_CURVE_FIT = "mfsr-curve-fit"
SFML = "sfml"
MFSL_SHIFT_ADD = "mfsl-shift-add"
MFSL_CURVE_FIT = "mfsl-curve-fit"
S2M2 = "s2m2"
M2S2 = "m2s2"

ALL_KINDS = (
    SISR_ONLY,
    MFSR_SHIFT_ADD,
    MFSR_CURVE_FIT,
    SFML,
    MFSL_SHIFT_ADD,
    MFSL_CURVE_FIT,
    S2M2,
    M2S2,
)

_SPLIT_KINDS = (S2M2, M2S2)
_FUSION_KINDS = tuple(k for k in ALL_KINDS if k != SISR_ONLY)

SHIFT_ADD = "shift-add"
CURVE_FIT = "curve-fit"


@dataclasses.dataclass
class PipelineSpec:
    """Everything needed to run one pipeline kind at one scale.

    split is the (r1, r2) stage factorization and is required exactly
    for the split kinds. fusion_mode picks the fusion flavor for the
    split kinds (the mfsr-*/mfsl-* kinds carry it in their name).
    stride None lets each sparse-coding stage pick 4 when that is a
    multiple of its stage scale and 2x the stage scale otherwise.
    enhance_passthrough elides the scale-1 enhancement stage of the
    mfsl-* kinds, making them bit-identical to the mfsr-* kinds.
    """

    kind: str
    scale: int
    split: tuple | None = None
    registration_mode: str = "ideal"
    solver: SolverParams = dataclasses.field(default_factory=SolverParams)
    stride: int | None = None
    fusion_mode: str = SHIFT_ADD
    hole_fill: str = "bicubic"
    window_radius: float | None = None
    weight_sigma: float | None = None
    neighbors: int | None = None
    fit_degree: int | None = None
    enhance_passthrough: bool = False

    def validate(self):
        if self.kind not in ALL_KINDS:
            raise ValueError(f"unknown pipeline kind {self.kind!r}")
        if int(self.scale) < 1:
            raise ValueError(f"scale must be >= 1, got {self.scale}")
        if self.kind in _SPLIT_KINDS:
            if self.split is None:
                raise ValueError(f"{self.kind} requires split=(r1, r2)")
            r1, r2 = (int(v) for v in self.split)
            if r1 < 2 or r2 < 2 or r1 * r2 != int(self.scale):
                raise ValueError(
                    f"split {self.split} must have both factors > 1 and "
                    f"product {self.scale}"
                )
        elif self.split is not None:
            raise ValueError(f"{self.kind} takes no split")
        if self.registration_mode not in ("ideal", "estimated"):
            raise ValueError(
                f"registration_mode must be 'ideal' or 'estimated', "
                f"got {self.registration_mode!r}"
            )
        if self.fusion_mode not in (SHIFT_ADD, CURVE_FIT):
            raise ValueError(f"fusion_mode must be one of ({SHIFT_ADD}, {CURVE_FIT})")
        if self.stride is not None and int(self.stride) < 1:
            raise ValueError(f"stride must be positive, got {self.stride}")
        if self.neighbors is not None:
            if int(self.neighbors) < 1:
                raise ValueError(f"neighbors must be positive, got {self.neighbors}")
            if self.window_radius is not None or self.weight_sigma is not None:
                raise ValueError(
                    "neighbors selects the adaptive span; window_radius and "
                    "weight_sigma apply to the fixed window only"
                )
        if self.fit_degree is not None:
            if int(self.fit_degree) not in (1, 2):
                raise ValueError(f"fit_degree must be 1 or 2, got {self.fit_degree}")
            if int(self.fit_degree) == 2 and self.neighbors is None:
                raise ValueError(
                    "fixed-window fits support fit_degree 1 only; pass "
                    "neighbors for a quadratic fit"
                )
        self.solver.validate()


@dataclasses.dataclass
class PipelineStats:
    """Solve counters plus per-stage wall times for one pipeline run."""

    solve: SolveStats = dataclasses.field(default_factory=SolveStats)
    stages: list = dataclasses.field(default_factory=list)

    @property
    def solves(self):
        return self.solve.solves

    @property
    def total_iterations(self):
        return self.solve.total_iterations


def _default_stride(stage_scale):
    return 4 if 4 % stage_scale == 0 else 2 * stage_scale


def _require_dict(dicts, stage_scale, stage):
    pair = (dicts or {}).get(stage_scale)
    if pair is None:
        raise ValueError(f"no dictionary provided for scale {stage_scale} ({stage} stage)")
    if pair.scale != stage_scale:
        raise ValueError(
            f"dictionary offered for scale {stage_scale} was built for scale {pair.scale}"
        )
    return pair


def _timed(stats, name, fn):
    t0 = time.perf_counter()
    out = fn()
    stats.stages.append((name, time.perf_counter() - t0))
    return out


def _fuse(frames, stage_scale, mode, spec, backend):
    if mode == SHIFT_ADD:
        acc = fusion.shift_and_add(frames, stage_scale)
        return fusion.normalize_fusion(acc, spec.hole_fill)
    return fusion.curve_fit_fuse(
        frames,
        stage_scale,
        window_radius=spec.window_radius,
        weight_sigma=spec.weight_sigma,
        neighbors=spec.neighbors,
        fit_degree=spec.fit_degree,
        backend=backend,
    )


def _code(img, stage_scale, spec, dicts, stats, backend, stage):
    pair = _require_dict(dicts, stage_scale, stage)
    stride = int(spec.stride) if spec.stride is not None else _default_stride(stage_scale)
    return sisr_apply(
        img, pair, spec.solver, stride=stride, backend=backend, stats=stats.solve
    )


def _rescaled(frame, divisor):
    ex, ey = frame.estimated_shift
    tx, ty = frame.true_shift
    return LRFrame(
        image=frame.image,
        true_shift=(tx / divisor, ty / divisor),
        index=frame.index,
        estimated_shift=(ex / divisor, ey / divisor),
    )


def _upscaled_burst(frames, stage_scale, spec, dicts, stats, backend, stage):
    out = []
    for frame in frames:
        img = _code(frame.image, stage_scale, spec, dicts, stats, backend, stage)
        out.append(
            LRFrame(
                image=img,
                true_shift=frame.true_shift,
                index=frame.index,
                estimated_shift=frame.estimated_shift,
            )
        )
    return out


def run_pipeline(frames, spec, dicts=None, stats=None, backend=None):
    """Run one pipeline over a burst and return the scale-r image.

    Parameters
    ----------
    frames : list of LRFrame
        The burst. Frames missing estimated shifts are registered first
        (mode per spec) whenever the pipeline contains a fusion stage.
    spec : PipelineSpec
    dicts : dict mapping scale -> DictionaryPair
        Must cover every sparse-coding stage scale of this kind.
    stats : PipelineStats, optional
        Accumulates patch-solve counts and stage wall times when given.
    backend : str, optional
        Kernel backend override passed through to solver and fusion.

    Returns
    -------
    ndarray of shape (input rows x r, input cols x r).
    """
    spec.validate()
    frames = list(frames)
    if not frames:
        raise ValueError("at least one frame is required")
    if stats is None:
        stats = PipelineStats()
    r = int(spec.scale)
    kind = spec.kind

    if kind in _FUSION_KINDS:
        if len(frames) < 2:
            warnings.warn(
                f"{kind}: single frame, fusion degenerates to plain upsampling",
                stacklevel=2,
            )
        if any(f.estimated_shift is None for f in frames):
            _timed(
                stats,
                "register",
                lambda: registration.register_burst(frames, r, spec.registration_mode),
            )

    if kind == SISR_ONLY:
        out = _timed(
            stats,
            f"sparse-code x{r}",
            lambda: _code(frames[0].image, r, spec, dicts, stats, backend, "upscale"),
        )
    elif kind in (MFSR_SHIFT_ADD, MFSR_CURVE_FIT):
        mode = SHIFT_ADD if kind == MFSR_SHIFT_ADD else CURVE_FIT
        out = _timed(stats, f"fuse x{r}", lambda: _fuse(frames, r, mode, spec, backend))
    elif kind == SFML:
        upscaled = _timed(
            stats,
            f"sparse-code x{r} per frame",
            lambda: _upscaled_burst(frames, r, spec, dicts, stats, backend, "upscale"),
        )
        out = _timed(
            stats, "fuse x1", lambda: _fuse(upscaled, 1, SHIFT_ADD, spec, backend)
        )
    elif kind in (MFSL_SHIFT_ADD, MFSL_CURVE_FIT):
        mode = SHIFT_ADD if kind == MFSL_SHIFT_ADD else CURVE_FIT
        fused = _timed(stats, f"fuse x{r}", lambda: _fuse(frames, r, mode, spec, backend))
        if spec.enhance_passthrough:
            out = fused
        else:
            out = _timed(
                stats,
                "sparse-code x1",
                lambda: _code(fused, 1, spec, dicts, stats, backend, "enhance"),
            )
    elif kind == S2M2:
        r1, r2 = (int(v) for v in spec.split)
        upscaled = _timed(
            stats,
            f"sparse-code x{r1} per frame",
            lambda: _upscaled_burst(frames, r1, spec, dicts, stats, backend, "upscale"),
        )
        out = _timed(
            stats,
            f"fuse x{r2}",
            lambda: _fuse(upscaled, r2, spec.fusion_mode, spec, backend),
        )
    else:  # M2S2
        r1, r2 = (int(v) for v in spec.split)
        coarse = [_rescaled(f, r2) for f in frames]
        fused = _timed(
            stats,
            f"fuse x{r1}",
            lambda: _fuse(coarse, r1, spec.fusion_mode, spec, backend),
        )
        out = _timed(
            stats,
            f"sparse-code x{r2}",
            lambda: _code(fused, r2, spec, dicts, stats, backend, "upscale"),
        )

    expected = (frames[0].image.shape[0] * r, frames[0].image.shape[1] * r)
    if out.shape != expected:
        raise RuntimeError(f"{kind} produced {out.shape}, expected {expected}")
    return out
