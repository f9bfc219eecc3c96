"""Fusing registered low-resolution frames onto the high-resolution grid.

Two modes mirror the two observation regimes. shift_and_add rounds each
frame shift to the nearest integer HR offset, undoes it, and averages
coincident samples: the right tool under noise, where averaging is the
point. curve_fit_fuse keeps the real-valued shifts and fits a local
degree-1 surface through the scattered sample cloud around every HR grid
point: the right tool for noise-free bursts, where rounding discards
position information that interpolation can exploit.
"""

import dataclasses
import math

import numpy as np
from scipy import ndimage as _ndimage

from . import _kernels
from .operators import catmull_rom, shift_integer, upsample_zero_fill


@dataclasses.dataclass
class FusionAccumulator:
    """Running per-pixel sums and integer sample counts on the HR grid."""

    sum_image: np.ndarray
    count_image: np.ndarray
    scale: int


def _frame_shift(frame):
    if frame.estimated_shift is None:
        raise ValueError(
            f"frame {frame.index} has no estimated shift; run registration first"
        )
    dx, dy = frame.estimated_shift
    return float(dx), float(dy)


def _round_half_up(value):
    return int(math.floor(value + 0.5))


def shift_and_add(frames, scale):
    """Accumulate frames onto the HR grid with inverse integer shifts.

    Parameters
    ----------
    frames : list of LRFrame
        Registered frames; estimated_shift must be filled, in HR pixels.
    scale : int
        Upsampling factor r relating LR and HR grids.

    Returns
    -------
    FusionAccumulator
        sum_image holds the sum of zero-filled, unshifted observations;
        count_image the number of observations per HR pixel. Total count
        is always len(frames) times the LR pixel count.
    """
    if not frames:
        raise ValueError("empty frame list")
    scale = int(scale)
    if scale < 1:
        raise ValueError(f"scale must be >= 1, got {scale}")
    lr_shape = frames[0].image.shape
    hr_shape = (lr_shape[0] * scale, lr_shape[1] * scale)
    total = np.zeros(hr_shape)
    counts = np.zeros(hr_shape, dtype=np.int64)
    lattice = np.zeros(hr_shape, dtype=np.int64)
    lattice[::scale, ::scale] = 1
    for frame in frames:
        if frame.image.shape != lr_shape:
            raise ValueError("frames differ in shape")
        dx, dy = _frame_shift(frame)
        dxr = _round_half_up(dx)
        dyr = _round_half_up(dy)
        up = upsample_zero_fill(frame.image, scale)
        # frame k saw content moved by (+dx,+dy); undo with the inverse roll
        total += shift_integer(up, -dxr, -dyr)
        counts += np.roll(lattice, (-dyr, -dxr), axis=(0, 1))
    return FusionAccumulator(total, counts, scale)


def _bicubic_fill(base, covered, scale):
    """Normalized convolution with a Catmull-Rom kernel at 1/scale spacing.

    On single-phase lattice coverage the kernel weights sum to one at every
    pixel, so the fill coincides with plain bicubic upsampling.
    """
    offsets = np.arange(-(2 * scale - 1), 2 * scale)
    taps = catmull_rom(offsets / scale)
    kernel = np.outer(taps, taps)
    num = _ndimage.convolve(np.where(covered, base, 0.0), kernel, mode="wrap")
    den = _ndimage.convolve(covered.astype(float), kernel, mode="wrap")
    good = den > 0.5
    filled = np.where(good, num / np.where(good, den, 1.0), 0.0)
    return filled, good


def _nearest_fill(base, covered):
    _, (iy, ix) = _ndimage.distance_transform_edt(~covered, return_indices=True)
    return base[iy, ix]


def normalize_fusion(acc, hole_fill="bicubic"):
    """Divide sums by counts and interpolate zero-count pixels.

    hole_fill "bicubic" interpolates holes from covered pixels with a
    normalized bicubic kernel (holes too far from any covered pixel fall
    back to nearest); "nearest" copies the closest covered pixel by
    Euclidean image distance (no wraparound).
    """
    if hole_fill not in ("bicubic", "nearest"):
        raise ValueError(f"hole_fill must be 'bicubic' or 'nearest', got {hole_fill!r}")
    counts = acc.count_image
    covered = counts > 0
    if not covered.any():
        raise ValueError("fusion accumulator has no covered pixels")
    base = np.where(covered, acc.sum_image / np.where(covered, counts, 1), 0.0)
    if covered.all():
        return base
    out = base.copy()
    holes = ~covered
    if hole_fill == "bicubic":
        filled, good = _bicubic_fill(base, covered, acc.scale)
        use = holes & good
        out[use] = filled[use]
        holes &= ~good
    if holes.any():
        out[holes] = _nearest_fill(base, covered)[holes]
    return out


def _curve_fit_numpy(frames, scale, hr_shape, window_radius, weight_sigma):
    # scatter per-frame lattice moments with circular rolls; predicates
    # (strict radius, Gaussian weights, centered solve) match the gather
    # kernel so the two backends agree to rounding error
    h, w = hr_shape
    sw = np.zeros(hr_shape)
    swx = np.zeros(hr_shape)
    swy = np.zeros(hr_shape)
    swxx = np.zeros(hr_shape)
    swxy = np.zeros(hr_shape)
    swyy = np.zeros(hr_shape)
    swv = np.zeros(hr_shape)
    swvx = np.zeros(hr_shape)
    swvy = np.zeros(hr_shape)
    wr2 = window_radius * window_radius
    inv2s2 = 1.0 / (2.0 * weight_sigma * weight_sigma)
    ones = np.zeros(hr_shape)
    ones[::scale, ::scale] = 1.0
    span = int(math.ceil(window_radius)) + 1
    for frame in frames:
        dx, dy = _frame_shift(frame)
        qy, qx = -dy, -dx
        my0, mx0 = math.floor(qy), math.floor(qx)
        fy, fx = qy - my0, qx - mx0
        vals = np.roll(upsample_zero_fill(frame.image, scale), (my0, mx0), axis=(0, 1))
        mask = np.roll(ones, (my0, mx0), axis=(0, 1))
        for jy in range(-span, span + 1):
            dyv = jy + fy
            for jx in range(-span, span + 1):
                dxv = jx + fx
                d2 = dyv * dyv + dxv * dxv
                if d2 >= wr2:
                    continue
                wgt = math.exp(-d2 * inv2s2)
                rolled_v = np.roll(vals, (-jy, -jx), axis=(0, 1))
                rolled_m = np.roll(mask, (-jy, -jx), axis=(0, 1))
                sw += wgt * rolled_m
                swx += (wgt * dxv) * rolled_m
                swy += (wgt * dyv) * rolled_m
                swxx += (wgt * dxv * dxv) * rolled_m
                swxy += (wgt * dxv * dyv) * rolled_m
                swyy += (wgt * dyv * dyv) * rolled_m
                swv += wgt * rolled_v
                swvx += (wgt * dxv) * rolled_v
                swvy += (wgt * dyv) * rolled_v
    if np.any(sw == 0.0):
        gy, gx = np.argwhere(sw == 0.0)[0]
        raise ValueError(
            f"curve fit: no samples within window of HR grid point ({gy}, {gx})"
        )
    mx = swx / sw
    my = swy / sw
    mv = swv / sw
    cxx = swxx / sw - mx * mx
    cxy = swxy / sw - mx * my
    cyy = swyy / sw - my * my
    bx = swvx / sw - mv * mx
    by = swvy / sw - mv * my
    det = cxx * cyy - cxy * cxy
    tr = cxx + cyy
    use_fit = det > _kernels.RANK_EPS * tr * tr
    safe = np.where(use_fit, det, 1.0)
    with np.errstate(invalid="ignore"):
        slope_x = (cyy * bx - cxy * by) / safe
        slope_y = (cxx * by - cxy * bx) / safe
    return np.where(use_fit, mv - slope_x * mx - slope_y * my, mv)


def _loess_numpy(sy, sx, sv, hr_shape, k, degree):
    # full toroidal distance scan in grid-point chunks; candidates enter
    # the shared point fit in ascending sample order, matching the gather
    # kernel, so both backends produce bit-identical images
    h, w = hr_shape
    n = sy.shape[0]
    gy, gx = np.mgrid[0:h, 0:w]
    grid_y = gy.ravel().astype(np.float64)
    grid_x = gx.ravel().astype(np.float64)
    out = np.empty(h * w)
    a6 = np.zeros((6, 6))
    b6 = np.zeros(6)
    chunk = max(1, min(512, (2**22) // max(n, 1)))
    for start in range(0, h * w, chunk):
        cy = grid_y[start : start + chunk, None]
        cx = grid_x[start : start + chunk, None]
        dy = sy[None, :] - cy
        dy -= np.round(dy / h) * h
        dx = sx[None, :] - cx
        dx -= np.round(dx / w) * w
        d2 = dy * dy + dx * dx
        t2 = np.partition(d2, k - 1, axis=1)[:, k - 1]
        for row in range(d2.shape[0]):
            keep = np.flatnonzero(d2[row] <= t2[row])
            span = math.sqrt(t2[row])
            if span < 1e-9:
                out[start + row] = sv[keep].mean()
                continue
            u = np.sqrt(d2[row, keep]) / span
            np.minimum(u, 1.0, out=u)
            c = 1.0 - u * u * u
            out[start + row] = _kernels._loess_point(
                dx[row, keep] / span,
                dy[row, keep] / span,
                c * c * c,
                sv[keep],
                keep.size,
                degree,
                a6,
                b6,
            )
    return out.reshape(hr_shape)


def _scatter_positions(frames, scale, hr_shape):
    h, w = hr_shape
    lr_shape = frames[0].image.shape
    iy, ix = np.mgrid[0 : lr_shape[0], 0 : lr_shape[1]]
    ys, xs, vs = [], [], []
    for frame in frames:
        dx, dy = _frame_shift(frame)
        ys.append((scale * iy.ravel() - dy) % h)
        xs.append((scale * ix.ravel() - dx) % w)
        vs.append(frame.image.ravel())
    return np.concatenate(ys), np.concatenate(xs), np.concatenate(vs)


def curve_fit_fuse(
    frames,
    scale,
    window_radius=None,
    weight_sigma=None,
    neighbors=None,
    fit_degree=None,
    backend=None,
):
    """Fuse frames by local weighted polynomial fits at every HR grid point.

    Two windowing styles share this entry point. The default fits a plane
    per grid point over a fixed Gaussian-weighted window. Passing
    neighbors=k switches to an adaptive span: the k nearest samples set
    the bandwidth, tricube weights taper to zero at the span, and the fit
    is a quadratic surface by default. The adaptive span tracks sample
    density, so sparse bursts get wide stable fits and dense bursts get
    tight fits that preserve detail (and, with it, observation noise).

    Parameters
    ----------
    frames : list of LRFrame
        Registered frames with real-valued shifts in HR pixels. Each LR
        sample (iy, ix) of a frame shifted by (dx, dy) lands at continuous
        HR position (scale*iy - dy, scale*ix - dx), wrapped toroidally.
    scale : int
        Upsampling factor r.
    window_radius : float, optional
        Fixed style only: strict Euclidean inclusion radius in HR pixels;
        default scale.
    weight_sigma : float, optional
        Fixed style only: Gaussian weight scale in HR pixels; default
        scale / 2.
    neighbors : int, optional
        Adaptive style: number of nearest samples spanned at each grid
        point.
    fit_degree : int, optional
        Polynomial degree, 1 or 2. Defaults to 1 for the fixed window and
        2 for the adaptive span; the fixed window supports only 1.
    backend : str, optional
        "numba" or "numpy"; default follows COMSR_BACKEND.

    Returns
    -------
    Image
        HR image of the per-point fits evaluated at the grid points.
        Rank-deficient neighborhoods drop to a lower degree and finally
        to the weighted mean.

    Raises
    ------
    ValueError
        If parameters of the two styles are mixed, or (fixed style) some
        HR grid point has no sample inside its window.
    """
    if not frames:
        raise ValueError("empty frame list")
    scale = int(scale)
    if scale < 1:
        raise ValueError(f"scale must be >= 1, got {scale}")
    lr_shape = frames[0].image.shape
    hr_shape = (lr_shape[0] * scale, lr_shape[1] * scale)
    for frame in frames:
        if frame.image.shape != lr_shape:
            raise ValueError("frames differ in shape")

    if neighbors is not None:
        if window_radius is not None or weight_sigma is not None:
            raise ValueError(
                "neighbors selects the adaptive span; window_radius and "
                "weight_sigma apply to the fixed window only"
            )
        k = int(neighbors)
        total = len(frames) * lr_shape[0] * lr_shape[1]
        if k < 1 or k > total:
            raise ValueError(f"neighbors must be in 1..{total}, got {neighbors}")
        degree = int(fit_degree) if fit_degree is not None else 2
        if degree not in (1, 2):
            raise ValueError(f"fit_degree must be 1 or 2, got {fit_degree}")
        ys, xs, vs = _scatter_positions(frames, scale, hr_shape)
        if _kernels.resolve_backend(backend) == "numpy":
            return _loess_numpy(ys, xs, vs, hr_shape, k, degree)
        return _kernels.loess_fit_samples(ys, xs, vs, hr_shape, k, degree)

    if fit_degree is not None and int(fit_degree) != 1:
        raise ValueError(
            "fixed-window fits support fit_degree 1 only; pass neighbors "
            "for a quadratic fit"
        )
    wr = float(window_radius) if window_radius is not None else float(scale)
    sigma = float(weight_sigma) if weight_sigma is not None else scale / 2.0
    if wr <= 0 or sigma <= 0:
        raise ValueError("window_radius and weight_sigma must be positive")
    if wr > min(hr_shape) / 2:
        raise ValueError("window_radius exceeds half the HR extent")
    if _kernels.resolve_backend(backend) == "numpy":
        return _curve_fit_numpy(frames, scale, hr_shape, wr, sigma)
    ys, xs, vs = _scatter_positions(frames, scale, hr_shape)
    return _kernels.curve_fit_samples(ys, xs, vs, hr_shape, wr, sigma)
