"""Translation estimation between frames via phase correlation.

The integer estimate is the argmax of the phase-correlation surface
(normalized cross-power spectrum); sub-pixel refinement evaluates the
plain cross-correlation on a dense local grid spanning a 3x3 LR-pixel
neighborhood around the integer peak through a matrix-multiply DFT,
giving resolution 1/subpixel_upsample LR pixels. Estimates answer: by how much must the
reference be shifted (content right/down) to match the target.

Synthetic toroidal inputs need no windowing; for content that does not
wrap cleanly, taper_width applies a raised-cosine border taper first.
"""

from dataclasses import dataclass

import numpy as np

from .image import as_image


@dataclass
class ShiftEstimate:
    """Estimated translation (dx, dy) with a peak-sharpness confidence.

    Units are pixels of the registered images (LR pixels from
    estimate_shift; register_burst rescales to HR pixels). confidence is
    1 - second_peak/peak clamped to [0, 1]: near 1 for a clean single
    peak, 0 for degenerate or ambiguous surfaces.
    """

    dx: float
    dy: float
    confidence: float
    mode: str


def raised_cosine_taper(shape, width):
    """Separable border taper: raised-cosine ramps of the given width."""
    def axis_window(n):
        win = np.ones(n)
        w = min(int(width), n // 2)
        if w > 0:
            ramp = 0.5 * (1.0 - np.cos(np.pi * (np.arange(w) + 0.5) / w))
            win[:w] = ramp
            win[-w:] = ramp[::-1]
        return win
    return np.outer(axis_window(shape[0]), axis_window(shape[1]))


def _wrap_coord(idx, n):
    return idx - n if idx > n // 2 else idx


def _tie_break_argmax(surface, coords_y, coords_x):
    """Argmax with ties broken toward smallest |dx|+|dy|, then (dx, dy)."""
    peak = surface.max()
    ties = np.argwhere(surface == peak)
    best = None
    best_key = None
    for iy, ix in ties:
        dy = coords_y[iy]
        dx = coords_x[ix]
        key = (abs(dx) + abs(dy), dx, dy)
        if best_key is None or key < best_key:
            best_key = key
            best = (dx, dy)
    return best, float(peak)


def _local_dft_surface(spectrum, center_y, center_x, upsample):
    """Evaluate a correlation surface on a dense grid around a peak.

    Matrix-multiply inverse DFT of the given spectrum at continuous
    positions center +- 1.5 px, step 1/upsample.
    """
    h, w = spectrum.shape
    steps = np.arange(3 * upsample + 1) / upsample - 1.5
    pos_y = center_y + steps
    pos_x = center_x + steps
    ky = np.fft.fftfreq(h)  # cycles per sample
    kx = np.fft.fftfreq(w)
    row = np.exp(2j * np.pi * np.outer(pos_y, ky))
    col = np.exp(2j * np.pi * np.outer(kx, pos_x))
    surf = (row @ spectrum @ col).real / (h * w)
    return surf, pos_y, pos_x


def estimate_shift(reference, target, subpixel_upsample=8, taper_width=0):
    """Estimate the (dx, dy) translating reference onto target, LR pixels.

    subpixel_upsample=1 returns the integer peak; larger values refine it
    on a 1/upsample grid. Constant (degenerate) inputs return zero shift
    with confidence 0.
    """
    a = as_image(reference)
    b = as_image(target)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    upsample = int(subpixel_upsample)
    if upsample < 1:
        raise ValueError(f"subpixel_upsample must be >= 1, got {subpixel_upsample}")
    if np.ptp(a) <= 1e-12 or np.ptp(b) <= 1e-12:
        return ShiftEstimate(0.0, 0.0, 0.0, "estimated")
    if taper_width:
        win = raised_cosine_taper(a.shape, taper_width)
        a = (a - a.mean()) * win
        b = (b - b.mean()) * win

    fa = np.fft.fft2(a)
    fb = np.fft.fft2(b)
    cross = fb * np.conj(fa)
    mag = np.abs(cross)
    # relative floor: without it, bins holding only float roundoff get
    # whitened to full-weight random phases and can swamp narrow spectra
    floor = max(1e-8 * float(mag.max()), 1e-300)
    spectrum = cross / np.maximum(mag, floor)
    surface = np.fft.ifft2(spectrum).real

    h, w = surface.shape
    coords_y = np.array([_wrap_coord(i, h) for i in range(h)])
    coords_x = np.array([_wrap_coord(i, w) for i in range(w)])
    (dx, dy), peak = _tie_break_argmax(surface, coords_y, coords_x)

    # confidence from the sharpness of the integer surface: mask the
    # peak's toroidal 3x3 neighborhood, compare against the runner-up
    iy = int(dy) % h
    ix = int(dx) % w
    masked = surface.copy()
    for oy in (-1, 0, 1):
        for ox in (-1, 0, 1):
            masked[(iy + oy) % h, (ix + ox) % w] = -np.inf
    second = max(float(masked.max()), 0.0)
    confidence = float(np.clip(1.0 - second / peak, 0.0, 1.0)) if peak > 0 else 0.0

    if upsample > 1:
        # refine on the raw cross-power spectrum: the whitened surface is
        # sharp for integer localization but noisy off-grid, while the
        # plain cross-correlation peaks smoothly at the true offset
        local, pos_y, pos_x = _local_dft_surface(cross, float(dy), float(dx), upsample)
        (dx, dy), _ = _tie_break_argmax(local, pos_y, pos_x)

    return ShiftEstimate(float(dx), float(dy), confidence, "estimated")


def register_burst(frames, scale, mode="estimated", subpixel_upsample=8, taper_width=0):
    """Fill estimated_shift on every frame, in HR pixels.

    mode "ideal" copies the true shifts (bit-identical downstream to
    feeding true shifts directly); "estimated" runs phase correlation of
    each frame against frame 0 and rescales the LR estimate by scale.
    Frames are modified in place and returned.
    """
    if not frames:
        raise ValueError("empty frame list")
    if mode not in ("ideal", "estimated"):
        raise ValueError(f"mode must be 'ideal' or 'estimated', got {mode!r}")
    if mode == "ideal":
        for frame in frames:
            frame.estimated_shift = (float(frame.true_shift[0]), float(frame.true_shift[1]))
        return frames
    reference = frames[0].image
    for frame in frames:
        if frame is frames[0]:
            frame.estimated_shift = (0.0, 0.0)
            continue
        est = estimate_shift(reference, frame.image, subpixel_upsample, taper_width)
        frame.estimated_shift = (est.dx * scale, est.dy * scale)
    return frames
