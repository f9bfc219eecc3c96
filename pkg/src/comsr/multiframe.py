"""Multi-frame sparse coding over a stack of shifted decimations.

When every frame shift is an integer number of HR pixels, the composite
shift-then-decimate operator of each frame is a 0/1 row selector on the
HR patch. The normal equations of the stacked system then collapse onto
the HR dictionary alone: the Gram matrix becomes D_Hᵀ·diag(c)·D_H with a
per-position coverage count vector c, and the data term becomes D_Hᵀy_C
where y_C is the shift-and-add sum of the zero-filled, unshifted frames.

`multi_ista_solve` runs ISTA in that collapsed form, touching only the
HR dictionary and the count vector. `verify_equivalence` executes the
collapsed iteration and plain ISTA on the explicitly stacked dictionary
side by side from the same start and step bound and reports the
per-iteration deviation between the two coefficient sequences.
"""

import dataclasses

import numpy as np

from . import _kernels
from . import operators as ops
from .dictionary import DictionaryPair, power_iteration
from .ista import SolverParams, SparseCode, ista_solve

__all__ = [
    "CoverageMatrix",
    "EquivalenceReport",
    "StackedObservation",
    "build_stacked_dictionary",
    "compute_coverage",
    "fused_patch_input",
    "multi_ista_solve",
    "verify_equivalence",
]


def _patch_shape(shape):
    """Normalize an int or (rows, cols) pair to a validated (h, w)."""
    if np.isscalar(shape):
        shape = (shape, shape)
    h, w = (int(s) for s in shape)
    if h < 1 or w < 1:
        raise ValueError(f"patch shape must be positive, got {(h, w)}")
    return h, w


def _integer_shifts(shifts):
    out = []
    for k, (dx, dy) in enumerate(shifts):
        if dx != int(dx) or dy != int(dy):
            raise ValueError(
                f"integer HR-pixel shifts required, got ({dx}, {dy}) for frame {k}"
            )
        out.append((int(dx), int(dy)))
    if not out:
        raise ValueError("at least one frame shift is required")
    return out


@dataclasses.dataclass
class StackedObservation:
    """Concatenated frame vectors [y_1; ...; y_N] plus their integer shifts."""

    y: np.ndarray
    shifts: list

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=np.float64).ravel()
        self.shifts = _integer_shifts(self.shifts)
        if self.y.size % len(self.shifts):
            raise ValueError(
                f"stacked length {self.y.size} is not a multiple of "
                f"{len(self.shifts)} frames"
            )

    @property
    def frames(self):
        return len(self.shifts)


@dataclasses.dataclass
class CoverageMatrix:
    """Diagonal of the summed selector operators, stored as counts.

    counts[i] is the number of frames whose shifted decimation lattice
    lands on flattened HR position i; the off-diagonal part is zero by
    construction, so the vector is the whole matrix.
    """

    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64).ravel()
        if (self.counts < 0).any():
            raise ValueError("coverage counts must be non-negative")

    @property
    def positions(self):
        return self.counts.size

    @property
    def total(self):
        return int(self.counts.sum())


def compute_coverage(shifts, scale, patch_shape):
    """Count, per HR position, how many frames sample it.

    Frame k observes HR position (py, px) exactly when both
    (py + dy_k) % scale == 0 and (px + dx_k) % scale == 0, i.e. the
    position sits on that frame's shifted decimation lattice.

    Parameters
    ----------
    shifts : sequence of (dx, dy)
        Integer HR-pixel shifts, one per frame.
    scale : int
        Decimation factor.
    patch_shape : int or (rows, cols)
        HR patch geometry; counts are returned flattened row-major.

    Returns
    -------
    CoverageMatrix
        counts sums to frames x (samples per frame).
    """
    h, w = _patch_shape(patch_shape)
    scale = int(scale)
    if scale < 1:
        raise ValueError(f"scale must be >= 1, got {scale}")
    if h % scale or w % scale:
        raise ValueError(f"patch shape {(h, w)} not divisible by scale {scale}")
    counts = np.zeros((h, w), dtype=np.int64)
    for dx, dy in _integer_shifts(shifts):
        counts[(-dy) % scale :: scale, (-dx) % scale :: scale] += 1
    return CoverageMatrix(counts.ravel())


def build_stacked_dictionary(pair, shifts, scale=None):
    """Stack one shifted-and-decimated copy of the HR dictionary per frame.

    Block k holds, column by column, the frame-k observation of each HR
    atom: the atom reshaped to a patch, circularly shifted by that
    frame's integer offset, then decimated on phase (0, 0). Any blur is
    already part of the dictionary coupling, so none is applied here.

    Returns the (frames x m_p, K) stacked LR dictionary.
    """
    if scale is None:
        scale = pair.scale
    elif int(scale) != pair.scale:
        raise ValueError(f"scale {scale} does not match the dictionary scale {pair.scale}")
    shifts = _integer_shifts(shifts)
    ps = pair.patch_size
    m_p = (ps // pair.scale) ** 2
    blocks = np.empty((len(shifts) * m_p, pair.num_atoms))
    for k, (dx, dy) in enumerate(shifts):
        for j in range(pair.num_atoms):
            patch = pair.hr[:, j].reshape(ps, ps)
            lr = ops.decimate(ops.shift_integer(patch, dx, dy), pair.scale)
            blocks[k * m_p : (k + 1) * m_p, j] = lr.ravel()
    return blocks


def fused_patch_input(stacked, scale, patch_shape):
    """Sum of zero-filled, inverse-shifted frame patches.

    Each frame vector is reshaped to its LR patch, upsampled by zero
    insertion on phase (0, 0), shifted back by its offset, and summed.
    This is the same arithmetic as integer shift-and-add fusion applied
    to a single patch, returned as a flat length-n_p vector.
    """
    h, w = _patch_shape(patch_shape)
    scale = int(scale)
    if scale < 1:
        raise ValueError(f"scale must be >= 1, got {scale}")
    if h % scale or w % scale:
        raise ValueError(f"patch shape {(h, w)} not divisible by scale {scale}")
    m_p = (h // scale) * (w // scale)
    if stacked.y.size != stacked.frames * m_p:
        raise ValueError(
            f"stacked length {stacked.y.size} does not equal "
            f"{stacked.frames} frames x {m_p} samples"
        )
    acc = np.zeros((h, w))
    for k, (dx, dy) in enumerate(stacked.shifts):
        frame = stacked.y[k * m_p : (k + 1) * m_p].reshape(h // scale, w // scale)
        acc += ops.shift_integer(ops.upsample_zero_fill(frame, scale), -dx, -dy)
    return acc.ravel()


def multi_ista_solve(
    fused, coverage, pair, params=None, lipschitz=None, observation_energy=None
):
    """ISTA on the collapsed multi-frame problem.

    Runs a <- h_tau(a + (D_Hᵀ·fused - D_Hᵀ(c ⊙ D_H a)) / L) from a = 0
    with tau = lam / L, the same normalization, stopping rule, and
    monotone-descent guard as the single-frame solver. The coverage
    counts act as a diagonal scaling; no stacked matrix is formed.

    Parameters
    ----------
    fused : array
        Flat fused input vector of length n_p (HR patch samples).
    coverage : CoverageMatrix
        Per-position frame counts matching `fused`.
    pair : DictionaryPair
        Supplies the HR dictionary. Its stored step bound is for the
        single-frame problem and is NOT reused here.
    params : SolverParams, optional
    lipschitz : float, optional
        Step bound for D_Hᵀ·diag(c)·D_H. Computed by power iteration
        (with the usual 1 percent safety factor) when omitted.
    observation_energy : float, optional
        Squared norm of the stacked observation vector. When given, the
        reported objective and residual are those of the stacked
        least-squares problem; when omitted the objective drops that
        constant term and the residual is reported as nan.

    Returns
    -------
    SparseCode

    Raises
    ------
    RuntimeError if the objective increases (invalid step bound).
    """
    if params is None:
        params = SolverParams()
    params.validate()
    y_c = np.asarray(fused, dtype=np.float64).ravel()
    if not np.all(np.isfinite(y_c)):
        raise ValueError("fused input contains non-finite values")
    hr = pair.hr
    if y_c.size != hr.shape[0]:
        raise ValueError(
            f"fused length {y_c.size} does not match the HR patch dimension {hr.shape[0]}"
        )
    if coverage.positions != y_c.size:
        raise ValueError(
            f"coverage has {coverage.positions} positions for {y_c.size} samples"
        )
    c = coverage.counts.astype(np.float64)
    if lipschitz is None:
        lipschitz = 1.01 * power_iteration(lambda v: hr.T @ (c * (hr @ v)), pair.num_atoms)
    tau = params.threshold(lipschitz)

    # constant part of the stacked objective, unknown unless supplied
    const = 0.5 * float(observation_energy) if observation_energy is not None else 0.0
    b = hr.T @ y_c
    alpha = np.zeros(pair.num_atoms)
    prev = np.inf
    eps = _kernels._MONO_EPS
    used = 0

    def objective(a):
        d = hr @ a
        return const + 0.5 * (d @ (c * d)) - b @ a + params.lam * np.abs(a).sum()

    for it in range(params.max_iterations):
        f = objective(alpha)
        if f > prev * (1.0 + eps) + eps:
            raise RuntimeError(
                f"ISTA objective increased: step bound {lipschitz} "
                "is not a valid Lipschitz upper bound"
            )
        prev = f
        g = b - hr.T @ (c * (hr @ alpha))
        nxt = _kernels.soft_threshold_array(alpha + g / lipschitz, tau)
        delta = float(np.linalg.norm(nxt - alpha))
        base = max(float(np.linalg.norm(alpha)), 1.0)
        alpha = nxt
        used = it + 1
        if delta / base < params.tolerance:
            break

    final = objective(alpha)
    if final > prev * (1.0 + eps) + eps:
        raise RuntimeError(
            f"ISTA objective increased: step bound {lipschitz} "
            "is not a valid Lipschitz upper bound"
        )
    if observation_energy is None:
        residual = float("nan")
    else:
        d = hr @ alpha
        residual = float(np.sqrt(max(float(observation_energy) + d @ (c * d) - 2.0 * (b @ alpha), 0.0)))
    return SparseCode(alpha, used, residual, float(final))


@dataclasses.dataclass
class EquivalenceReport:
    """Per-iteration deviation between collapsed and stacked solvers."""

    deviations: np.ndarray
    iterations: int
    tolerance: float
    seed: int
    patch_size: int
    scale: int
    frames: int
    num_atoms: int

    @property
    def max_deviation(self):
        return float(self.deviations.max())

    @property
    def passed(self):
        return bool((self.deviations <= self.tolerance).all())


def verify_equivalence(
    patch_size, scale, frames, num_atoms, seed, iterations=50, tolerance=1e-10
):
    """Check that collapsed and stacked ISTA produce the same iterates.

    Builds one seeded random instance: an HR dictionary with unit-norm
    columns, integer frame shifts, and a standard-normal stacked
    observation. Plain ISTA runs on the explicitly stacked dictionary
    while the collapsed solver sees only the HR dictionary, the coverage
    counts, and the fused input. Both use the step bound computed once
    from the stacked operator and the L1 weight
    0.05 x max|D_stackedᵀ y|, start from zero, and run a fixed number of
    iterations; the report records max|difference| after each one.

    Parameters
    ----------
    patch_size : int
        HR patch side; must be a positive multiple of `scale`.
    scale, frames, num_atoms, seed : int
        Instance geometry and RNG seed.
    iterations : int
        Iteration counts compared (1 through `iterations`).
    tolerance : float
        Per-iteration deviation bound for the pass verdict.

    Returns
    -------
    EquivalenceReport
    """
    patch_size, scale = int(patch_size), int(scale)
    frames, num_atoms = int(frames), int(num_atoms)
    iterations = int(iterations)
    if scale < 1:
        raise ValueError(f"scale must be >= 1, got {scale}")
    if patch_size < scale or patch_size % scale:
        raise ValueError(
            f"patch size {patch_size} is not a positive multiple of scale {scale}"
        )
    if frames < 1:
        raise ValueError(f"frames must be >= 1, got {frames}")
    if num_atoms < 1:
        raise ValueError(f"num_atoms must be >= 1, got {num_atoms}")
    if iterations < 1:
        raise ValueError(f"iterations must be >= 1, got {iterations}")
    if tolerance <= 0:
        raise ValueError(f"tolerance must be positive, got {tolerance}")

    rng = np.random.default_rng(seed)
    n_p = patch_size * patch_size
    m_p = (patch_size // scale) ** 2
    d_h = rng.standard_normal((n_p, num_atoms))
    d_h /= np.linalg.norm(d_h, axis=0)
    shifts = [(int(dx), int(dy)) for dx, dy in rng.integers(0, patch_size, size=(frames, 2))]
    y = rng.standard_normal(frames * m_p)

    atom_norms = np.ones(num_atoms)
    base = _pair_stub(d_h, scale, patch_size)
    d_stack = build_stacked_dictionary(base, shifts)
    lam = 0.05 * float(np.abs(d_stack.T @ y).max())
    if lam <= 0.0:
        lam = 0.05
    shared_l = 1.01 * power_iteration(lambda v: d_stack.T @ (d_stack @ v), num_atoms)
    stacked_pair = DictionaryPair(
        hr=d_h, lr=d_stack, scale=scale, patch_size=patch_size,
        lipschitz=shared_l, atom_norms=atom_norms,
    )
    coverage = compute_coverage(shifts, scale, patch_size)
    y_c = fused_patch_input(StackedObservation(y, shifts), scale, patch_size)

    deviations = np.empty(iterations)
    for k in range(1, iterations + 1):
        run = SolverParams(lam=lam, max_iterations=k, tolerance=0.0)
        stacked = ista_solve(y, stacked_pair, run)
        collapsed = multi_ista_solve(y_c, coverage, base, run, lipschitz=shared_l)
        deviations[k - 1] = float(np.abs(stacked.alpha - collapsed.alpha).max())
    return EquivalenceReport(
        deviations=deviations,
        iterations=iterations,
        tolerance=float(tolerance),
        seed=int(seed),
        patch_size=patch_size,
        scale=scale,
        frames=frames,
        num_atoms=num_atoms,
    )


def _pair_stub(d_h, scale, patch_size):
    """Minimal pair wrapper so the stacker can read geometry off it."""
    return DictionaryPair(
        hr=d_h, lr=np.empty((0, d_h.shape[1])), scale=scale,
        patch_size=patch_size, lipschitz=1.0, atom_norms=np.ones(d_h.shape[1]),
    )
