"""Built-in procedural test images.

Five seeded 128x128 grayscale images with deliberately different
spectral character, so benchmark trends are not an artifact of one
texture class. Spectra are kept mostly below the scale-2 decimation
Nyquist: like photographic content, the images degrade gracefully
rather than alias catastrophically, which keeps PSNR comparisons
between pipelines meaningful. All generators are deterministic and
return float64 arrays in [0.05, 0.95].
"""

import numpy as np

DESK_SIZE = 128


def _normalize(img):
    img = img - img.min()
    peak = img.max()
    if peak > 0:
        img = img / peak
    return 0.05 + 0.9 * img


def _spectral(size, seed, exponent, knee, cutoff):
    """Random-phase synthesis with a power-law amplitude falloff."""
    rng = np.random.default_rng(seed)
    spec = np.fft.fft2(rng.standard_normal((size, size)))
    fy = np.fft.fftfreq(size)[:, None]
    fx = np.fft.fftfreq(size)[None, :]
    rad = np.hypot(fy, fx)
    falloff = 1.0 / (1e-3 + (rad / knee) ** exponent)
    falloff[rad > cutoff] = 0.0
    return np.real(np.fft.ifft2(spec * falloff))


def plasma(size=DESK_SIZE, seed=10):
    """Cloudy texture with a steep power-law spectrum."""
    return _normalize(_spectral(size, seed, exponent=1.9, knee=0.06, cutoff=0.30))


def disks(size=DESK_SIZE, seed=11):
    """Soft-edged random disks on a smooth background (edge content)."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    img = 0.3 * _spectral(size, seed + 1, exponent=2.0, knee=0.05, cutoff=0.15)
    img = img / max(np.abs(img).max(), 1e-12)
    for _ in range(14):
        cy, cx = rng.uniform(0, size, 2)
        radius = rng.uniform(6.0, 20.0)
        level = rng.uniform(-1.0, 1.0)
        d = np.hypot(yy - cy, xx - cx)
        # 3 px edge transition: steep enough to test deblurring, soft
        # enough that decimation by 2 does not alias the edge away
        img += level * np.clip(radius + 1.5 - d, 0.0, 3.0) / 3.0
    return _normalize(img)


def gratings(size=DESK_SIZE, seed=12):
    """Superposed oriented sinusoids, low through mid frequencies."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    img = np.zeros((size, size))
    for freq in (0.03, 0.07, 0.12, 0.18):
        theta = rng.uniform(0, np.pi)
        phase = rng.uniform(0, 2 * np.pi)
        carrier = np.cos(2 * np.pi * freq * (np.cos(theta) * xx + np.sin(theta) * yy) + phase)
        img += carrier / (1.0 + 6.0 * freq)
    return _normalize(img)


def ridges(size=DESK_SIZE, seed=13):
    """Crease lines: rounded absolute value of a band-passed field."""
    field = _spectral(size, seed, exponent=1.0, knee=0.05, cutoff=0.18)
    field = field / max(np.abs(field).max(), 1e-12)
    return _normalize(-np.sqrt(field * field + 0.02 * 0.02))


def warped_checker(size=DESK_SIZE, seed=14, period=16.0):
    """Checkerboard under a smooth random warp (soft edge lattice)."""
    warp_y = _spectral(size, seed, exponent=2.0, knee=0.04, cutoff=0.12)
    warp_x = _spectral(size, seed + 1, exponent=2.0, knee=0.04, cutoff=0.12)
    warp_y = 2.5 * warp_y / max(np.abs(warp_y).max(), 1e-12)
    warp_x = 2.5 * warp_x / max(np.abs(warp_x).max(), 1e-12)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    uy = (yy + warp_y) / period
    ux = (xx + warp_x) / period
    # smooth square waves, steep but alias-controlled
    img = np.tanh(2.5 * np.sin(2 * np.pi * uy)) * np.tanh(2.5 * np.sin(2 * np.pi * ux))
    return _normalize(img)


def desk_set(size=DESK_SIZE):
    """The five shipped benchmark images as (name, image) pairs."""
    return [
        ("plasma", plasma(size)),
        ("disks", disks(size)),
        ("gratings", gratings(size)),
        ("ridges", ridges(size)),
        ("warped-checker", warped_checker(size)),
    ]
