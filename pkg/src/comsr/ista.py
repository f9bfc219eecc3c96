"""Sparse patch coding by iterative shrinkage-thresholding.

Solves min_a 0.5*||y - D_L a||^2 + lam*||a||_1 per patch with the
normalized update a <- h_{lam/L}(a + D_L^T (y - D_L a) / L), monitored
for monotone descent of the objective: an increase can only mean the
step bound L is wrong, and raises rather than returning garbage.
"""

import dataclasses

import numpy as np

from . import _kernels

#: coefficients at or below this magnitude count as zero in sparsity reports
ZERO_TOL = 1e-12


@dataclasses.dataclass
class SolverParams:
    """L1 weight and stopping rule; threshold tau = lam/L is derived."""

    lam: float = 0.05
    max_iterations: int = 200
    tolerance: float = 1e-6

    def validate(self):
        if self.lam <= 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.tolerance < 0:
            raise ValueError("tolerance must be >= 0")

    def threshold(self, lipschitz):
        if lipschitz <= 0:
            raise ValueError(f"step bound must be positive, got {lipschitz}")
        return self.lam / lipschitz


@dataclasses.dataclass
class SparseCode:
    alpha: np.ndarray
    iterations_used: int
    final_residual: float
    objective: float

    @property
    def nonzero_count(self):
        return int(np.count_nonzero(np.abs(self.alpha) > ZERO_TOL))


def soft_threshold(values, tau):
    """Componentwise sign(v)*max(|v| - tau, 0)."""
    if tau < 0:
        raise ValueError(f"threshold must be >= 0, got {tau}")
    return _kernels.soft_threshold_array(values, tau)


def ista_solve(y, pair, params, backend=None):
    """Code one LR patch vector against pair.lr; starts from alpha = 0."""
    params.validate()
    y = np.asarray(y, dtype=np.float64).ravel()
    if not np.all(np.isfinite(y)):
        raise ValueError("observation contains non-finite values")
    alpha, iters, objective, resid = _kernels.ista_batch(
        pair.lr,
        y[:, None],
        params.lam,
        pair.lipschitz,
        params.max_iterations,
        params.tolerance,
        backend=backend,
    )
    return SparseCode(alpha[:, 0], int(iters[0]), float(resid[0]), float(objective[0]))


def ista_solve_batch(observations, pair, params, backend=None):
    """Code many patches at once.

    observations is (m_p, P), one patch per column. Returns the raw
    arrays (alpha (K, P), iterations (P,), objectives (P,),
    residual norms (P,)) rather than SparseCode objects; whole-image
    callers aggregate these themselves.
    """
    params.validate()
    obs = np.asarray(observations, dtype=np.float64)
    if not np.all(np.isfinite(obs)):
        raise ValueError("observations contain non-finite values")
    return _kernels.ista_batch(
        pair.lr,
        obs,
        params.lam,
        pair.lipschitz,
        params.max_iterations,
        params.tolerance,
        backend=backend,
    )


def reconstruct_hr_patch(code, pair):
    """HR patch vector D_H @ alpha for a solved code."""
    alpha = code.alpha if isinstance(code, SparseCode) else np.asarray(code)
    if alpha.shape != (pair.num_atoms,):
        raise ValueError(
            f"coefficient length {alpha.shape} does not match {pair.num_atoms} atoms"
        )
    return pair.hr @ alpha
