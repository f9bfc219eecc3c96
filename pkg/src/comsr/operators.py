"""Forward-model operators: blur, circular shifts, decimation, upsampling.

Shifts act on a toroidal domain (content wraps); a shift of (dx, dy)
moves content right by dx and down by dy. Blur convolves with symmetric
(reflective) boundary handling. Decimation keeps samples on the phase
lattice without further filtering; anti-aliasing belongs to the blur.
Sub-pixel work uses the Catmull-Rom cubic (a = -0.5) throughout.
"""

import math

import numpy as np
from scipy import ndimage as _ndimage


def gaussian_kernel(sigma, radius=None):
    """Normalized 2-D Gaussian taps, radius defaults to ceil(3*sigma).

    The kernel is an outer product of identical 1-D profiles, so it sums
    to 1 and is symmetric under 180-degree rotation.
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if radius is None:
        radius = max(1, int(math.ceil(3.0 * sigma)))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    g = np.exp(-0.5 * (x / sigma) ** 2)
    g /= g.sum()
    return np.outer(g, g)


def gaussian_blur(img, kernel):
    """Convolve with 2-D taps under symmetric (reflective) padding."""
    img = np.asarray(img, dtype=np.float64)
    if kernel.ndim != 2 or kernel.shape[0] % 2 == 0 or kernel.shape[1] % 2 == 0:
        raise ValueError(f"kernel must be 2-D with odd extents, got {kernel.shape}")
    return _ndimage.convolve(img, kernel, mode="reflect")


def shift_integer(img, dx, dy):
    """Circularly shift content right by dx and down by dy (integers)."""
    if dx != int(dx) or dy != int(dy):
        raise ValueError(f"integer shift required, got ({dx}, {dy})")
    return np.roll(np.asarray(img, dtype=np.float64), (int(dy), int(dx)), axis=(0, 1))


def catmull_rom(t):
    """Catmull-Rom cubic weight (a = -0.5) at offset t (vectorized)."""
    t = np.abs(np.asarray(t, dtype=np.float64))
    w = np.zeros_like(t)
    near = t <= 1.0
    w[near] = (1.5 * t[near] - 2.5) * t[near] ** 2 + 1.0
    far = ~near & (t < 2.0)
    w[far] = ((-0.5 * t[far] + 2.5) * t[far] - 4.0) * t[far] + 2.0
    return w


def _axis_taps(d):
    """Roll amounts and weights realizing a 1-D cubic shift by d.

    A shift by d = k + t (k integer, t in [0, 1)) is a weighted sum of
    four integer rolls; for t == 0 it collapses to the single exact roll.
    """
    k = math.floor(d)
    t = d - k
    if t == 0.0:
        return [(k, 1.0)]
    w = catmull_rom(np.array([2.0 - t, 1.0 - t, t, 1.0 + t]))
    return list(zip((k + 2, k + 1, k, k - 1), w))


def shift_subpixel(img, dx, dy):
    """Toroidal sub-pixel shift via separable Catmull-Rom interpolation.

    Exactly matches shift_integer when both offsets are integral, and
    the sixteen tap weights sum to 1 for any fractional part.
    """
    img = np.asarray(img, dtype=np.float64)
    out = np.zeros_like(img)
    for sy, wy in _axis_taps(float(dy)):
        for sx, wx in _axis_taps(float(dx)):
            out += (wy * wx) * np.roll(img, (sy, sx), axis=(0, 1))
    return out


def decimate(img, r, phase=(0, 0)):
    """Keep every r-th sample starting at phase (row, col)."""
    img = np.asarray(img, dtype=np.float64)
    r = int(r)
    if r < 1:
        raise ValueError(f"scale must be >= 1, got {r}")
    py, px = (int(p) for p in phase)
    if not (0 <= py < r and 0 <= px < r):
        raise ValueError(f"phase {phase} outside [0, {r})^2")
    if img.shape[0] % r or img.shape[1] % r:
        raise ValueError(f"dims {img.shape} not divisible by {r}")
    return img[py::r, px::r].copy()


def upsample_zero_fill(img, r, phase=(0, 0)):
    """Adjoint of decimate: place samples on the phase lattice, zeros elsewhere."""
    img = np.asarray(img, dtype=np.float64)
    r = int(r)
    if r < 1:
        raise ValueError(f"scale must be >= 1, got {r}")
    py, px = (int(p) for p in phase)
    if not (0 <= py < r and 0 <= px < r):
        raise ValueError(f"phase {phase} outside [0, {r})^2")
    out = np.zeros((img.shape[0] * r, img.shape[1] * r), dtype=np.float64)
    out[py::r, px::r] = img
    return out


def bicubic_upsample(img, r):
    """Interpolating Catmull-Rom upsampling by integer factor r (toroidal).

    HR sample (Y, X) reads the LR image at (Y/r, X/r), so the phase-(0, 0)
    lattice reproduces the LR samples exactly and decimate(up, r) round-trips.
    """
    img = np.asarray(img, dtype=np.float64)
    r = int(r)
    if r < 1:
        raise ValueError(f"scale must be >= 1, got {r}")
    if r == 1:
        return img.copy()

    def _axis_pass(arr, axis):
        n = arr.shape[axis]
        out_shape = list(arr.shape)
        out_shape[axis] = n * r
        out = np.empty(out_shape, dtype=np.float64)
        index = [slice(None)] * arr.ndim
        for p in range(r):
            t = p / r
            if t == 0.0:
                taps = [(0, 1.0)]
            else:
                w = catmull_rom(np.array([1.0 + t, t, 1.0 - t, 2.0 - t]))
                taps = list(zip((-1, 0, 1, 2), w))
            acc = np.zeros_like(arr)
            for o, wgt in taps:
                acc += wgt * np.roll(arr, -o, axis=axis)
            index[axis] = slice(p, None, r)
            out[tuple(index)] = acc
        return out

    return _axis_pass(_axis_pass(img, 0), 1)
