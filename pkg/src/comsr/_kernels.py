"""Hot numeric kernels: numba fast paths with pure-numpy fallbacks.

Backend selection is driven by the COMSR_BACKEND environment variable:

    auto   (default) use numba when importable, else numpy
    numba  require numba, fail at import if missing
    numpy  force the pure-numpy fallback

Individual entry points also accept backend="numba"/"numpy" so the
benchmark can time both in one process. Results agree between backends
to floating-point reordering (~1e-13); within one backend they are
bit-reproducible run to run.
"""

import math
import os

import numpy as np

_choice = os.environ.get("COMSR_BACKEND", "auto").strip().lower()
if _choice not in ("auto", "numba", "numpy"):
    raise RuntimeError(f"COMSR_BACKEND must be auto, numba, or numpy; got {_choice!r}")

if _choice == "numpy":
    HAS_NUMBA = False
else:
    try:
        from numba import njit

        HAS_NUMBA = True
    except ImportError:
        if _choice == "numba":
            raise
        HAS_NUMBA = False

BACKEND = "numba" if HAS_NUMBA else "numpy"

#: relative/absolute slack for the objective monotonicity guard
_MONO_EPS = 1e-12


def resolve_backend(backend):
    if backend is None:
        return BACKEND
    backend = backend.lower()
    if backend not in ("numba", "numpy"):
        raise ValueError(f"backend must be 'numba' or 'numpy', got {backend!r}")
    if backend == "numba" and not HAS_NUMBA:
        raise RuntimeError("numba backend requested but numba is unavailable")
    return backend


def soft_threshold_array(values, tau):
    v = np.asarray(values, dtype=np.float64)
    return np.sign(v) * np.maximum(np.abs(v) - tau, 0.0)


# ---------------------------------------------------------------------------
# Batched ISTA
#
# Solves min_a 0.5||y - D a||^2 + lam ||a||_1 independently per column of y
# with the normalized update a <- h_{lam/L}(a + D^T(y - D a)/L), starting at
# a = 0 and stopping per column at max_iterations or when
# ||a_next - a|| / max(||a||, 1) < tolerance. The objective is checked for
# monotone descent every iteration; an increase means the step bound L is
# invalid and the caller raises.


def _ista_batch_numpy(d, dt, yt, lam, lipschitz, max_iterations, tolerance):
    m, n_atoms = d.shape
    y = yt.T
    n_cols = y.shape[1]
    tau = lam / lipschitz
    alpha = np.zeros((n_atoms, n_cols))
    iters = np.zeros(n_cols, dtype=np.int64)
    bad = np.zeros(n_cols, dtype=np.bool_)
    prev = np.full(n_cols, np.inf)

    active = np.arange(n_cols)
    cur = np.zeros((n_atoms, 0 + active.size))
    ya = y
    it = 0
    while active.size and it < max_iterations:
        r = ya - d @ cur
        f = 0.5 * np.einsum("ij,ij->j", r, r) + lam * np.abs(cur).sum(axis=0)
        bad[active] |= f > prev[active] * (1.0 + _MONO_EPS) + _MONO_EPS
        prev[active] = f
        g = dt @ r
        nxt = soft_threshold_array(cur + g / lipschitz, tau)
        delta = np.sqrt(np.einsum("ij,ij->j", nxt - cur, nxt - cur))
        base = np.maximum(np.sqrt(np.einsum("ij,ij->j", cur, cur)), 1.0)
        cur = nxt
        it += 1
        iters[active] = it
        done = delta / base < tolerance
        if done.any():
            cols = active[done]
            alpha[:, cols] = cur[:, done]
            keep = ~done
            active = active[keep]
            cur = cur[:, keep]
            ya = ya[:, keep]
    if active.size:
        alpha[:, active] = cur

    resid = y - d @ alpha
    objective = 0.5 * np.einsum("ij,ij->j", resid, resid) + lam * np.abs(alpha).sum(axis=0)
    bad |= objective > prev * (1.0 + _MONO_EPS) + _MONO_EPS
    resid_norm = np.sqrt(np.einsum("ij,ij->j", resid, resid))
    return alpha, iters, objective, resid_norm, bad


if HAS_NUMBA:

    @njit(cache=True)
    def _ista_batch_numba(d, dt, yt, lam, lipschitz, max_iterations, tolerance):
        m, n_atoms = d.shape
        n_cols = yt.shape[0]
        tau = lam / lipschitz
        alpha = np.zeros((n_atoms, n_cols))
        iters = np.zeros(n_cols, dtype=np.int64)
        objective = np.empty(n_cols)
        resid_norm = np.empty(n_cols)
        bad = np.zeros(n_cols, dtype=np.bool_)
        eps = _MONO_EPS
        for p in range(n_cols):
            yp = yt[p]
            a = np.zeros(n_atoms)
            prev = np.inf
            used = 0
            for it in range(max_iterations):
                r = yp - d @ a
                l1 = 0.0
                for k in range(n_atoms):
                    l1 += abs(a[k])
                f = 0.5 * (r @ r) + lam * l1
                if f > prev * (1.0 + eps) + eps:
                    bad[p] = True
                prev = f
                g = dt @ r
                nrm_old = 0.0
                nrm_delta = 0.0
                for k in range(n_atoms):
                    v = a[k] + g[k] / lipschitz
                    av = abs(v) - tau
                    new = 0.0
                    if av > 0.0:
                        new = av if v > 0.0 else -av
                    diff = new - a[k]
                    nrm_delta += diff * diff
                    nrm_old += a[k] * a[k]
                    a[k] = new
                used = it + 1
                base = math.sqrt(nrm_old)
                if base < 1.0:
                    base = 1.0
                if math.sqrt(nrm_delta) / base < tolerance:
                    break
            r = yp - d @ a
            l1 = 0.0
            for k in range(n_atoms):
                l1 += abs(a[k])
            f = 0.5 * (r @ r) + lam * l1
            if f > prev * (1.0 + eps) + eps:
                bad[p] = True
            objective[p] = f
            resid_norm[p] = math.sqrt(r @ r)
            alpha[:, p] = a
            iters[p] = used
        return alpha, iters, objective, resid_norm, bad


def ista_batch(lr_dict, y, lam, lipschitz, max_iterations, tolerance, backend=None):
    """Per-column ISTA over a batch of observations.

    Parameters
    ----------
    lr_dict : (m, K) ndarray
        Dictionary; columns need not be normalized.
    y : (m, P) ndarray
        One observation per column.
    lam, lipschitz : float
        L1 weight and a step bound >= lambda_max(D^T D).
    max_iterations, tolerance : stopping rule per column.

    Returns
    -------
    alpha : (K, P), iters : (P,), objective : (P,), resid_norm : (P,)

    Raises
    ------
    RuntimeError when the objective increases on any column (invalid L).
    """
    d = np.ascontiguousarray(lr_dict, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 2 or y.shape[0] != d.shape[0]:
        raise ValueError(f"observations {y.shape} incompatible with dictionary {d.shape}")
    if lam <= 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    if lipschitz <= 0:
        raise ValueError(f"step bound must be positive, got {lipschitz}")
    if max_iterations < 1:
        raise ValueError("max_iterations must be >= 1")
    if tolerance < 0:
        raise ValueError("tolerance must be >= 0")
    dt = np.ascontiguousarray(d.T)
    yt = np.ascontiguousarray(y.T)
    impl = _ista_batch_numba if resolve_backend(backend) == "numba" else _ista_batch_numpy
    alpha, iters, objective, resid_norm, bad = impl(
        d, dt, yt, float(lam), float(lipschitz), int(max_iterations), float(tolerance)
    )
    if bad.any():
        first = int(np.flatnonzero(bad)[0])
        raise RuntimeError(
            f"ISTA objective increased on column {first}: step bound {lipschitz} "
            "is not a valid Lipschitz upper bound"
        )
    return alpha, iters, objective, resid_norm


# ---------------------------------------------------------------------------
# Curve-fit gather (numba path)
#
# For each integer grid point, gathers scattered samples within a strict
# Euclidean window (toroidal min-image distances), accumulates Gaussian-
# weighted first/second moments, and evaluates the degree-1 weighted
# least-squares fit at the grid point; rank-deficient neighborhoods fall
# back to the weighted mean. The pure-numpy equivalent lives in
# comsr.fusion (lattice-roll formulation); both share these predicates.

#: relative determinant threshold for the 2x2 normal equations
RANK_EPS = 1e-10

if HAS_NUMBA:

    @njit(cache=True)
    def _curve_fit_gather(sy, sx, sv, starts, order, h, w, wr, sigma):
        out = np.zeros((h, w))
        wr2 = wr * wr
        inv2s2 = 1.0 / (2.0 * sigma * sigma)
        lo = int(math.floor(-wr))
        hi = int(math.ceil(wr)) - 1
        empty_y = -1
        empty_x = -1
        for gy in range(h):
            for gx in range(w):
                sw = 0.0
                swx = 0.0
                swy = 0.0
                swxx = 0.0
                swxy = 0.0
                swyy = 0.0
                swv = 0.0
                swvx = 0.0
                swvy = 0.0
                count = 0
                for oy in range(lo, hi + 1):
                    cy = (gy + oy) % h
                    for ox in range(lo, hi + 1):
                        cx = (gx + ox) % w
                        c = cy * w + cx
                        for s in range(starts[c], starts[c + 1]):
                            i = order[s]
                            dyv = sy[i] - gy
                            if dyv > 0.5 * h:
                                dyv -= h
                            elif dyv < -0.5 * h:
                                dyv += h
                            dxv = sx[i] - gx
                            if dxv > 0.5 * w:
                                dxv -= w
                            elif dxv < -0.5 * w:
                                dxv += w
                            d2 = dyv * dyv + dxv * dxv
                            if d2 >= wr2:
                                continue
                            wgt = math.exp(-d2 * inv2s2)
                            v = sv[i]
                            sw += wgt
                            swx += wgt * dxv
                            swy += wgt * dyv
                            swxx += wgt * dxv * dxv
                            swxy += wgt * dxv * dyv
                            swyy += wgt * dyv * dyv
                            swv += wgt * v
                            swvx += wgt * v * dxv
                            swvy += wgt * v * dyv
                            count += 1
                if count == 0:
                    if empty_y < 0:
                        empty_y = gy
                        empty_x = gx
                    continue
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
                if det > RANK_EPS * tr * tr:
                    slope_x = (cyy * bx - cxy * by) / det
                    slope_y = (cxx * by - cxy * bx) / det
                    out[gy, gx] = mv - slope_x * mx - slope_y * my
                else:
                    out[gy, gx] = mv
        return out, empty_y, empty_x


def _bin_cells(sy, sx, h, w):
    # CSR layout of sample indices by integer HR cell, stable in sample order
    cell = (np.floor(sy).astype(np.int64) % h) * w + (np.floor(sx).astype(np.int64) % w)
    order = np.argsort(cell, kind="stable").astype(np.int64)
    counts = np.bincount(cell, minlength=h * w)
    starts = np.zeros(h * w + 1, dtype=np.int64)
    np.cumsum(counts, out=starts[1:])
    return starts, order


def curve_fit_samples(sample_y, sample_x, sample_v, shape, window_radius, weight_sigma):
    """Numba-side scattered curve fit; positions must be wrapped into shape."""
    if not HAS_NUMBA:
        raise RuntimeError("curve_fit_samples requires the numba backend")
    h, w = shape
    sy = np.ascontiguousarray(sample_y, dtype=np.float64)
    sx = np.ascontiguousarray(sample_x, dtype=np.float64)
    sv = np.ascontiguousarray(sample_v, dtype=np.float64)
    starts, order = _bin_cells(sy, sx, h, w)
    out, empty_y, empty_x = _curve_fit_gather(
        sy, sx, sv, starts, order, h, w, float(window_radius), float(weight_sigma)
    )
    if empty_y >= 0:
        raise ValueError(
            f"curve fit: no samples within window of HR grid point ({empty_y}, {empty_x})"
        )
    return out


# ---------------------------------------------------------------------------
# Adaptive-span curve fit (k nearest samples, tricube weights)
#
# The span at each grid point is the distance of its k-th nearest sample,
# so the farthest included sample always carries weight exactly zero and
# distance ties at the span cannot change the fitted value. Fit chain per
# point: weighted quadratic surface, then plane, then weighted mean; a
# level is dropped whenever its normal equations lose a Cholesky pivot.
# Coordinates are pre-divided by the span so the moment matrices stay
# O(1)-conditioned at any sample density.
#
# _loess_point below is plain Python compiled as-is by numba when
# available; both backends run the same statements on candidates sorted
# by sample index, which keeps their outputs bit-identical (the weight
# function is polynomial, so only correctly-rounded primitives occur).

#: relative pivot floor for the quadratic normal equations
CHOL_EPS = 1e-12

#: relative ridge on the non-intercept diagonal of the quadratic normal
#: equations; forming the 6x6 Gram squares the design conditioning, and
#: without this floor float64 rounding noise in near-degenerate sample
#: geometries (frames sharing a shift component) surfaces as O(1) pixel
#: errors. 1e-9 suppresses directions the arithmetic cannot represent
#: while leaving the genuinely ill-conditioned, noise-amplifying fits
#: of tight spans intact.
RIDGE_EPS = 1e-9


def _loess_point(ux, uy, wgt, val, m, degree, scratch_a, scratch_b):
    if degree == 2 and m >= 6:
        for i in range(6):
            scratch_b[i] = 0.0
            for j in range(6):
                scratch_a[i, j] = 0.0
        for s in range(m):
            x = ux[s]
            y = uy[s]
            ws = wgt[s]
            vs = val[s]
            f0 = 1.0
            f3 = x * x
            f4 = x * y
            f5 = y * y
            # upper triangle of sum(w * phi phi^T), phi = (1,x,y,x^2,xy,y^2)
            scratch_a[0, 0] += ws * f0
            scratch_a[0, 1] += ws * x
            scratch_a[0, 2] += ws * y
            scratch_a[0, 3] += ws * f3
            scratch_a[0, 4] += ws * f4
            scratch_a[0, 5] += ws * f5
            scratch_a[1, 1] += ws * f3
            scratch_a[1, 2] += ws * f4
            scratch_a[1, 3] += ws * f3 * x
            scratch_a[1, 4] += ws * f3 * y
            scratch_a[1, 5] += ws * f5 * x
            scratch_a[2, 2] += ws * f5
            scratch_a[2, 3] += ws * f3 * y
            scratch_a[2, 4] += ws * f5 * x
            scratch_a[2, 5] += ws * f5 * y
            scratch_a[3, 3] += ws * f3 * f3
            scratch_a[3, 4] += ws * f3 * f4
            scratch_a[3, 5] += ws * f3 * f5
            scratch_a[4, 4] += ws * f4 * f4
            scratch_a[4, 5] += ws * f4 * f5
            scratch_a[5, 5] += ws * f5 * f5
            scratch_b[0] += ws * vs
            scratch_b[1] += ws * vs * x
            scratch_b[2] += ws * vs * y
            scratch_b[3] += ws * vs * f3
            scratch_b[4] += ws * vs * f4
            scratch_b[5] += ws * vs * f5
        for i in range(6):
            for j in range(i):
                scratch_a[i, j] = scratch_a[j, i]
        diag = 0.0
        for j in range(1, 6):
            diag += scratch_a[j, j]
        for j in range(1, 6):
            scratch_a[j, j] += RIDGE_EPS * diag / 5.0
        ok = True
        # in-place scalar Cholesky; a failed pivot drops to the plane fit
        for j in range(6):
            s = scratch_a[j, j]
            for t in range(j):
                s -= scratch_a[j, t] * scratch_a[j, t]
            if not s > CHOL_EPS * scratch_a[j, j] or not scratch_a[j, j] > 0.0:
                ok = False
                break
            piv = math.sqrt(s)
            scratch_a[j, j] = piv
            for i in range(j + 1, 6):
                s = scratch_a[i, j]
                for t in range(j):
                    s -= scratch_a[i, t] * scratch_a[j, t]
                scratch_a[i, j] = s / piv
        if ok:
            for i in range(6):
                s = scratch_b[i]
                for t in range(i):
                    s -= scratch_a[i, t] * scratch_b[t]
                scratch_b[i] = s / scratch_a[i, i]
            for i in range(5, -1, -1):
                s = scratch_b[i]
                for t in range(i + 1, 6):
                    s -= scratch_a[t, i] * scratch_b[t]
                scratch_b[i] = s / scratch_a[i, i]
            return scratch_b[0]
    sw = 0.0
    swx = 0.0
    swy = 0.0
    swv = 0.0
    swxx = 0.0
    swxy = 0.0
    swyy = 0.0
    swvx = 0.0
    swvy = 0.0
    for s in range(m):
        x = ux[s]
        y = uy[s]
        ws = wgt[s]
        vs = val[s]
        sw += ws
        swx += ws * x
        swy += ws * y
        swv += ws * vs
        swxx += ws * x * x
        swxy += ws * x * y
        swyy += ws * y * y
        swvx += ws * vs * x
        swvy += ws * vs * y
    if sw > 0.0:
        mx = swx / sw
        my = swy / sw
        mv = swv / sw
        cxx = swxx / sw - mx * mx
        cxy = swxy / sw - mx * my
        cyy = swyy / sw - my * my
        det = cxx * cyy - cxy * cxy
        tr = cxx + cyy
        if degree >= 1 and det > RANK_EPS * tr * tr:
            bx = swvx / sw - mv * mx
            by = swvy / sw - mv * my
            slope_x = (cyy * bx - cxy * by) / det
            slope_y = (cxx * by - cxy * bx) / det
            return mv - slope_x * mx - slope_y * my
        return mv
    total = 0.0
    for s in range(m):
        total += val[s]
    return total / m


if HAS_NUMBA:
    _loess_point_nb = njit(cache=True)(_loess_point)

    @njit(cache=True)
    def _loess_gather(sy, sx, sv, starts, order, h, w, k, degree):
        n = sy.shape[0]
        out = np.zeros((h, w))
        cand_i = np.empty(n, dtype=np.int64)
        cand_d2 = np.empty(n)
        keep_i = np.empty(n, dtype=np.int64)
        keep_d2 = np.empty(n)
        ux = np.empty(n)
        uy = np.empty(n)
        wgt = np.empty(n)
        val = np.empty(n)
        a6 = np.zeros((6, 6))
        b6 = np.zeros(6)
        max_ring = max(h, w) // 2 + 2
        for gy in range(h):
            for gx in range(w):
                m = 0
                dk = np.inf
                full_scan = False
                for ring in range(max_ring):
                    if m >= k and ring - 1.0 > dk:
                        break
                    if 2 * ring + 1 > min(h, w):
                        # window wraps onto itself: fall back to all cells
                        full_scan = True
                        break
                    for oy in range(-ring, ring + 1):
                        edge_y = oy == -ring or oy == ring
                        cy = (gy + oy) % h
                        for ox in range(-ring, ring + 1):
                            if not edge_y and ox != -ring and ox != ring:
                                continue
                            cx = (gx + ox) % w
                            c = cy * w + cx
                            for s in range(starts[c], starts[c + 1]):
                                i = order[s]
                                dyv = sy[i] - gy
                                if dyv > 0.5 * h:
                                    dyv -= h
                                elif dyv < -0.5 * h:
                                    dyv += h
                                dxv = sx[i] - gx
                                if dxv > 0.5 * w:
                                    dxv -= w
                                elif dxv < -0.5 * w:
                                    dxv += w
                                cand_i[m] = i
                                cand_d2[m] = dyv * dyv + dxv * dxv
                                m += 1
                    if m >= k:
                        # selection-sort the k smallest to refresh the span
                        for j in range(k):
                            best = j
                            for t in range(j + 1, m):
                                if cand_d2[t] < cand_d2[best]:
                                    best = t
                            if best != j:
                                cand_d2[j], cand_d2[best] = cand_d2[best], cand_d2[j]
                                cand_i[j], cand_i[best] = cand_i[best], cand_i[j]
                        dk = math.sqrt(cand_d2[k - 1])
                if full_scan:
                    m = 0
                    for i in range(n):
                        dyv = sy[i] - gy
                        if dyv > 0.5 * h:
                            dyv -= h
                        elif dyv < -0.5 * h:
                            dyv += h
                        dxv = sx[i] - gx
                        if dxv > 0.5 * w:
                            dxv -= w
                        elif dxv < -0.5 * w:
                            dxv += w
                        cand_i[m] = i
                        cand_d2[m] = dyv * dyv + dxv * dxv
                        m += 1
                for j in range(k):
                    best = j
                    for t in range(j + 1, m):
                        if cand_d2[t] < cand_d2[best]:
                            best = t
                    if best != j:
                        cand_d2[j], cand_d2[best] = cand_d2[best], cand_d2[j]
                        cand_i[j], cand_i[best] = cand_i[best], cand_i[j]
                t2 = cand_d2[k - 1]
                kept = 0
                for t in range(m):
                    if cand_d2[t] <= t2:
                        keep_i[kept] = cand_i[t]
                        keep_d2[kept] = cand_d2[t]
                        kept += 1
                # sort kept candidates by sample index so both backends
                # accumulate moments in the same order
                for j in range(1, kept):
                    ci = keep_i[j]
                    cd = keep_d2[j]
                    t = j - 1
                    while t >= 0 and keep_i[t] > ci:
                        keep_i[t + 1] = keep_i[t]
                        keep_d2[t + 1] = keep_d2[t]
                        t -= 1
                    keep_i[t + 1] = ci
                    keep_d2[t + 1] = cd
                span = math.sqrt(t2)
                if span < 1e-9:
                    total = 0.0
                    for t in range(kept):
                        total += sv[keep_i[t]]
                    out[gy, gx] = total / kept
                    continue
                for t in range(kept):
                    i = keep_i[t]
                    dyv = sy[i] - gy
                    if dyv > 0.5 * h:
                        dyv -= h
                    elif dyv < -0.5 * h:
                        dyv += h
                    dxv = sx[i] - gx
                    if dxv > 0.5 * w:
                        dxv -= w
                    elif dxv < -0.5 * w:
                        dxv += w
                    ux[t] = dxv / span
                    uy[t] = dyv / span
                    u = math.sqrt(keep_d2[t]) / span
                    if u > 1.0:
                        u = 1.0
                    c = 1.0 - u * u * u
                    wgt[t] = c * c * c
                    val[t] = sv[i]
                out[gy, gx] = _loess_point_nb(ux, uy, wgt, val, kept, degree, a6, b6)
        return out


def loess_fit_samples(sample_y, sample_x, sample_v, shape, neighbors, degree):
    """Numba-side adaptive curve fit; positions must be wrapped into shape."""
    if not HAS_NUMBA:
        raise RuntimeError("loess_fit_samples requires the numba backend")
    h, w = shape
    sy = np.ascontiguousarray(sample_y, dtype=np.float64)
    sx = np.ascontiguousarray(sample_x, dtype=np.float64)
    sv = np.ascontiguousarray(sample_v, dtype=np.float64)
    k = int(neighbors)
    if k < 1 or k > sy.shape[0]:
        raise ValueError(f"neighbors must be in 1..{sy.shape[0]}, got {neighbors}")
    if int(degree) not in (1, 2):
        raise ValueError(f"fit degree must be 1 or 2, got {degree}")
    starts, order = _bin_cells(sy, sx, h, w)
    return _loess_gather(sy, sx, sv, starts, order, h, w, k, int(degree))
