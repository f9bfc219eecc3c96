import os

# Pin numeric libraries to one thread before anything imports numpy, so the
# timed acceptance criteria genuinely run single-threaded.
for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS", "NUMBA_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def smooth_image():
    """Seeded smooth toroidal test image (band-limited noise), 64x64 in [0,1]."""
    gen = np.random.default_rng(99)
    noise = gen.standard_normal((64, 64))
    spec = np.fft.fft2(noise)
    fy = np.fft.fftfreq(64)[:, None]
    fx = np.fft.fftfreq(64)[None, :]
    rad = np.hypot(fy, fx)
    keep = rad <= 0.12  # low-pass: periodic and very smooth
    img = np.real(np.fft.ifft2(spec * keep))
    img -= img.min()
    img /= img.max()
    return 0.05 + 0.9 * img


@pytest.fixture(scope="session")
def textured_image():
    """Seeded toroidal image with a decaying 1/f^2 spectrum, 64x64 in [0,1].

    Unlike smooth_image it keeps energy above the scale-2 LR Nyquist, the
    regime where multi-frame sampling actually buys information.
    """
    gen = np.random.default_rng(0)
    spec = np.fft.fft2(gen.standard_normal((64, 64)))
    fy = np.fft.fftfreq(64)[:, None]
    fx = np.fft.fftfreq(64)[None, :]
    rad = np.hypot(fy, fx)
    falloff = 1.0 / (1e-3 + (rad / 0.15) ** 2)
    falloff[rad > 0.45] = 0.0
    img = np.real(np.fft.ifft2(spec * falloff))
    img -= img.min()
    img /= img.max()
    return 0.05 + 0.9 * img
