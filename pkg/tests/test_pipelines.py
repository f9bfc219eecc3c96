import numpy as np
import pytest

from comsr import degradation as deg
from comsr import dictionary as dct
from comsr import fusion
from comsr import image as im
from comsr import pipelines as pl
from comsr import sisr
from comsr.degradation import LRFrame
from comsr.ista import SolverParams


def _ideal_burst(hr, scale, shifts, blur_sigma=1.0, noise_sigma=0.0, seed=0):
    """Burst with known shifts, estimated filled from truth."""
    cfg = deg.DegradationConfig(
        scale=scale, frames=len(shifts), blur_sigma=blur_sigma,
        noise_sigma=noise_sigma, seed=seed,
    )
    rng = np.random.default_rng(seed)
    return [
        LRFrame(
            image=deg.degrade_one(hr, s, cfg, rng),
            true_shift=s, index=k, estimated_shift=s,
        )
        for k, s in enumerate(shifts)
    ]


@pytest.fixture(scope="module")
def dicts(textured_image):
    return {
        1: dct.build_dictionary_pair(
            textured_image, 96, patch_size=8, scale=1, blur_sigma=1.0, seed=0
        ),
        2: dct.build_dictionary_pair(
            textured_image, 96, patch_size=8, scale=2, blur_sigma=1.0, seed=0
        ),
    }


@pytest.fixture(scope="module")
def quick_solver():
    return SolverParams(lam=0.02, max_iterations=80, tolerance=1e-5)


def test_every_kind_meets_the_dimension_contract(textured_image, dicts, quick_solver):
    burst2 = _ideal_burst(textured_image, 2, [(0.0, 0.0), (1.0, 1.0), (0.5, 1.5)])
    for kind in (pl.SISR_ONLY, pl.MFSR_SHIFT_ADD, pl.MFSR_CURVE_FIT,
                 pl.SFML, pl.MFSL_SHIFT_ADD, pl.MFSL_CURVE_FIT):
        spec = pl.PipelineSpec(kind=kind, scale=2, solver=quick_solver)
        out = pl.run_pipeline(burst2, spec, dicts)
        assert out.shape == textured_image.shape, kind

    burst4 = _ideal_burst(textured_image, 4, [(0.0, 0.0), (2.0, 0.0), (0.0, 2.0), (2.0, 2.0)])
    for kind in pl.PipelineSpec(kind=pl.S2M2, scale=4, split=(2, 2)), \
                pl.PipelineSpec(kind=pl.M2S2, scale=4, split=(2, 2)):
        kind.solver = quick_solver
        out = pl.run_pipeline(burst4, kind, dicts)
        assert out.shape == textured_image.shape, kind.kind


def test_mfsl_passthrough_is_bit_identical_to_mfsr(textured_image, dicts):
    shifts = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.3, 0.7)]
    a = _ideal_burst(textured_image, 2, shifts)
    b = _ideal_burst(textured_image, 2, shifts)
    mfsr = pl.run_pipeline(a, pl.PipelineSpec(kind=pl.MFSR_SHIFT_ADD, scale=2), dicts)
    mfsl = pl.run_pipeline(
        b,
        pl.PipelineSpec(kind=pl.MFSL_SHIFT_ADD, scale=2, enhance_passthrough=True),
        dicts,
    )
    assert np.array_equal(mfsr, mfsl)


def test_sfml_costs_n_times_the_mfsl_solves(textured_image, dicts, quick_solver):
    shifts = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)]
    sfml_stats = pl.PipelineStats()
    mfsl_stats = pl.PipelineStats()
    pl.run_pipeline(
        _ideal_burst(textured_image, 2, shifts),
        pl.PipelineSpec(kind=pl.SFML, scale=2, solver=quick_solver),
        dicts, stats=sfml_stats,
    )
    pl.run_pipeline(
        _ideal_burst(textured_image, 2, shifts),
        pl.PipelineSpec(kind=pl.MFSL_SHIFT_ADD, scale=2, solver=quick_solver),
        dicts, stats=mfsl_stats,
    )
    assert mfsl_stats.solves > 0
    assert sfml_stats.solves == len(shifts) * mfsl_stats.solves
    assert sfml_stats.solves >= len(shifts) * mfsl_stats.solves  # contract form


def test_single_frame_fusion_warns_and_upsamples(textured_image, dicts):
    burst = _ideal_burst(textured_image, 2, [(0.0, 0.0)])
    spec = pl.PipelineSpec(kind=pl.MFSR_SHIFT_ADD, scale=2)
    with pytest.warns(UserWarning, match="single frame"):
        out = pl.run_pipeline(burst, spec, dicts)
    expected = fusion.normalize_fusion(fusion.shift_and_add(burst, 2), "bicubic")
    assert np.array_equal(out, expected)


def test_enhancement_deblurs_the_fused_image(textured_image, dicts):
    # full-phase noiseless coverage at r=4: fusion alone recovers the
    # blurred scene; the scale-1 coding stage must recover sharpness
    shifts = [(float(dx), float(dy)) for dx in range(4) for dy in range(4)]
    solver = SolverParams(lam=0.01, max_iterations=200, tolerance=1e-6)
    base = pl.PipelineSpec(kind=pl.MFSR_CURVE_FIT, scale=4)
    enh = pl.PipelineSpec(kind=pl.MFSL_CURVE_FIT, scale=4, solver=solver, stride=2)
    dicts4 = dict(dicts)
    mfsr = pl.run_pipeline(_ideal_burst(textured_image, 4, shifts), base, dicts4)
    mfsl = pl.run_pipeline(_ideal_burst(textured_image, 4, shifts), enh, dicts4)
    psnr_mfsr = im.psnr(mfsr, textured_image, crop_border=4)
    psnr_mfsl = im.psnr(mfsl, textured_image, crop_border=4)
    assert psnr_mfsl >= psnr_mfsr


def test_m2s2_fuses_at_the_coarse_grid(textured_image, dicts, quick_solver):
    # shifts divisible by r2 cover all r1 phases exactly after rescaling
    shifts = [(0.0, 0.0), (2.0, 0.0), (0.0, 2.0), (2.0, 2.0)]
    burst = _ideal_burst(textured_image, 4, shifts)
    spec = pl.PipelineSpec(kind=pl.M2S2, scale=4, split=(2, 2), solver=quick_solver)
    out = pl.run_pipeline(burst, spec, dicts)
    halved = [
        LRFrame(image=f.image, true_shift=(f.true_shift[0] / 2, f.true_shift[1] / 2),
                index=f.index, estimated_shift=(f.estimated_shift[0] / 2, f.estimated_shift[1] / 2))
        for f in burst
    ]
    fused = fusion.normalize_fusion(fusion.shift_and_add(halved, 2), "bicubic")
    expected = sisr.sisr_apply(fused, dicts[2], quick_solver, stride=4)
    assert np.array_equal(out, expected)


def test_registration_runs_only_when_shifts_are_missing(textured_image, dicts):
    shifts = [(0.0, 0.0), (1.0, 1.0)]
    registered = _ideal_burst(textured_image, 2, shifts)
    stats = pl.PipelineStats()
    pl.run_pipeline(
        registered, pl.PipelineSpec(kind=pl.MFSR_SHIFT_ADD, scale=2), dicts, stats=stats
    )
    assert all(name != "register" for name, _ in stats.stages)

    unregistered = _ideal_burst(textured_image, 2, shifts)
    for f in unregistered:
        f.estimated_shift = None
    stats = pl.PipelineStats()
    pl.run_pipeline(
        unregistered, pl.PipelineSpec(kind=pl.MFSR_SHIFT_ADD, scale=2), dicts, stats=stats
    )
    assert any(name == "register" for name, _ in stats.stages)
    assert unregistered[0].estimated_shift == (0.0, 0.0)


def test_estimated_registration_is_deterministic(textured_image, dicts, quick_solver):
    cfg = deg.DegradationConfig(scale=2, frames=3, blur_sigma=1.0, noise_sigma=0.01, seed=5)
    spec = pl.PipelineSpec(
        kind=pl.MFSL_CURVE_FIT, scale=2, registration_mode="estimated", solver=quick_solver
    )
    a = pl.run_pipeline(deg.generate_burst(textured_image, cfg), spec, dicts)
    b = pl.run_pipeline(deg.generate_burst(textured_image, cfg), spec, dicts)
    assert np.array_equal(a, b)


def test_spec_validation_rejects_bad_combinations():
    with pytest.raises(ValueError, match="unknown pipeline kind"):
        pl.PipelineSpec(kind="zoom", scale=2).validate()
    with pytest.raises(ValueError, match="requires split"):
        pl.PipelineSpec(kind=pl.S2M2, scale=4).validate()
    with pytest.raises(ValueError, match="both factors > 1"):
        pl.PipelineSpec(kind=pl.S2M2, scale=4, split=(4, 1)).validate()
    with pytest.raises(ValueError, match="both factors > 1"):
        pl.PipelineSpec(kind=pl.M2S2, scale=4, split=(2, 3)).validate()
    with pytest.raises(ValueError, match="takes no split"):
        pl.PipelineSpec(kind=pl.MFSR_SHIFT_ADD, scale=2, split=(2, 1)).validate()
    with pytest.raises(ValueError, match="registration_mode"):
        pl.PipelineSpec(kind=pl.SISR_ONLY, scale=2, registration_mode="oracle").validate()
    with pytest.raises(ValueError, match="fusion_mode"):
        pl.PipelineSpec(kind=pl.S2M2, scale=4, split=(2, 2), fusion_mode="mean").validate()
    with pytest.raises(ValueError, match="neighbors must be positive"):
        pl.PipelineSpec(kind=pl.MFSR_CURVE_FIT, scale=2, neighbors=0).validate()
    with pytest.raises(ValueError, match="adaptive span"):
        pl.PipelineSpec(
            kind=pl.MFSR_CURVE_FIT, scale=2, neighbors=8, window_radius=2.0
        ).validate()
    with pytest.raises(ValueError, match="fit_degree must be 1 or 2"):
        pl.PipelineSpec(kind=pl.MFSR_CURVE_FIT, scale=2, fit_degree=3).validate()
    with pytest.raises(ValueError, match="fit_degree 1 only"):
        pl.PipelineSpec(kind=pl.MFSR_CURVE_FIT, scale=2, fit_degree=2).validate()


def test_adaptive_curve_fit_pipeline_matches_fusion(textured_image, dicts):
    burst = _ideal_burst(
        textured_image, 2, [(0.0, 0.0), (1.3, -0.4), (-2.1, 0.9), (0.6, 2.2)]
    )
    spec = pl.PipelineSpec(kind=pl.MFSR_CURVE_FIT, scale=2, neighbors=7)
    out = pl.run_pipeline(burst, spec, dicts)
    direct = fusion.curve_fit_fuse(burst, 2, neighbors=7)
    assert np.array_equal(out, direct)


def test_missing_dictionary_is_a_clear_error(textured_image):
    burst = _ideal_burst(textured_image, 2, [(0.0, 0.0), (1.0, 1.0)])
    with pytest.raises(ValueError, match="no dictionary provided for scale 2"):
        pl.run_pipeline(burst, pl.PipelineSpec(kind=pl.SISR_ONLY, scale=2), {})
    with pytest.raises(ValueError, match="no dictionary provided for scale 1"):
        pl.run_pipeline(burst, pl.PipelineSpec(kind=pl.MFSL_SHIFT_ADD, scale=2), {})
    with pytest.raises(ValueError, match="at least one frame"):
        pl.run_pipeline([], pl.PipelineSpec(kind=pl.SISR_ONLY, scale=2), {})


def test_wrong_scale_dictionary_is_rejected(textured_image, dicts):
    burst = _ideal_burst(textured_image, 2, [(0.0, 0.0)])
    with pytest.raises(ValueError, match="was built for scale"):
        pl.run_pipeline(
            burst, pl.PipelineSpec(kind=pl.SISR_ONLY, scale=2), {2: dicts[1]}
        )
