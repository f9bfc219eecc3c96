import numpy as np
import pytest

from comsr import _kernels
from comsr import dictionary as dct
from comsr import ista


def _pair_from_matrix(lr, hr=None):
    """Wrap a raw LR matrix (and optional HR) as a DictionaryPair."""
    m, k = lr.shape
    hr = lr.copy() if hr is None else hr
    gram = lr.T @ lr
    lam_max = dct.power_iteration(lambda v: gram @ v, k)
    return dct.DictionaryPair(
        hr, lr, 1, int(np.sqrt(hr.shape[0])), 1.01 * lam_max,
        np.linalg.norm(lr, axis=0),
    )


def _random_pair(seed, m=8, k=20):
    gen = np.random.default_rng(seed)
    lr = gen.standard_normal((m, k))
    lr /= np.linalg.norm(lr, axis=0)
    return _pair_from_matrix(lr)


def _objective(lr, y, alpha, lam):
    r = y - lr @ alpha
    return 0.5 * float(r @ r) + lam * float(np.abs(alpha).sum())


def _coordinate_descent(lr, y, lam, sweeps=20000, tol=1e-14):
    """Cyclic coordinate descent for the same LASSO; independent oracle."""
    m, k = lr.shape
    col_sq = np.einsum("ij,ij->j", lr, lr)
    alpha = np.zeros(k)
    residual = y.copy()
    for _ in range(sweeps):
        biggest = 0.0
        for j in range(k):
            old = alpha[j]
            rho = lr[:, j] @ residual + col_sq[j] * old
            new = np.sign(rho) * max(abs(rho) - lam, 0.0) / col_sq[j]
            if new != old:
                residual += lr[:, j] * (old - new)
                alpha[j] = new
                biggest = max(biggest, abs(new - old))
        if biggest < tol:
            break
    return alpha


def test_soft_threshold_definition():
    assert np.array_equal(
        ista.soft_threshold([2.0, -0.5, 0.1], 0.5), [1.5, 0.0, 0.0]
    )
    v = np.random.default_rng(0).standard_normal(50)
    assert np.array_equal(ista.soft_threshold(v, 0.0), v)
    assert np.abs(ista.soft_threshold(v, 0.3)).sum() <= np.abs(v).sum()
    with pytest.raises(ValueError):
        ista.soft_threshold(v, -0.1)


def test_zero_observation_codes_to_zero():
    pair = _random_pair(1)
    code = ista.ista_solve(np.zeros(8), pair, ista.SolverParams())
    assert np.array_equal(code.alpha, np.zeros(20))
    assert code.iterations_used == 1
    assert code.objective == 0.0
    assert code.final_residual == 0.0
    assert code.nonzero_count == 0


def test_single_atom_observation_concentrates():
    # near-orthogonal columns via QR so atom j dominates its own code
    gen = np.random.default_rng(3)
    q, _ = np.linalg.qr(gen.standard_normal((20, 8)))
    pair = _pair_from_matrix(q.T.copy())
    y = 5.0 * pair.lr[:, 7]
    code = ista.ista_solve(y, pair, ista.SolverParams(lam=0.05))
    assert int(np.argmax(np.abs(code.alpha))) == 7
    assert code.alpha[7] > 4.0


def test_objective_matches_coordinate_descent_oracle():
    # lambda scaled per instance so supports stay nontrivial while ISTA
    # still reaches its linear-convergence phase inside the budget
    worst = 0.0
    for seed in range(100):
        pair = _random_pair(seed)
        y = np.random.default_rng(10_000 + seed).standard_normal(8)
        lam = 0.2 * float(np.max(np.abs(pair.lr.T @ y)))
        params = ista.SolverParams(lam=lam, max_iterations=20000, tolerance=0.0)
        code = ista.ista_solve(y, pair, params)
        oracle = _coordinate_descent(pair.lr, y, lam)
        obj_oracle = _objective(pair.lr, y, oracle, lam)
        gap = abs(code.objective - obj_oracle) / (1.0 + abs(obj_oracle))
        worst = max(worst, gap)
    assert worst <= 1e-6


def test_reported_objective_and_residual_are_consistent():
    pair = _random_pair(5)
    y = np.random.default_rng(55).standard_normal(8)
    code = ista.ista_solve(y, pair, ista.SolverParams())
    r = y - pair.lr @ code.alpha
    assert code.final_residual == pytest.approx(np.linalg.norm(r), abs=1e-12)
    assert code.objective == pytest.approx(
        _objective(pair.lr, y, code.alpha, 0.05), abs=1e-12
    )


def test_fixed_point_at_convergence():
    pair = _random_pair(6)
    y = np.random.default_rng(66).standard_normal(8)
    params = ista.SolverParams(lam=0.05, max_iterations=5000, tolerance=1e-10)
    code = ista.ista_solve(y, pair, params)
    a = code.alpha
    step = a + pair.lr.T @ (y - pair.lr @ a) / pair.lipschitz
    nxt = ista.soft_threshold(step, params.threshold(pair.lipschitz))
    assert np.linalg.norm(nxt - a) / max(np.linalg.norm(a), 1.0) < 1e-9


def test_invalid_step_bound_raises():
    pair = _random_pair(7)
    bad = dct.DictionaryPair(
        pair.hr, pair.lr, pair.scale, pair.patch_size,
        0.05 * pair.lipschitz, pair.atom_norms,
    )
    y = np.random.default_rng(77).standard_normal(8)
    with pytest.raises(RuntimeError, match="not a valid Lipschitz"):
        ista.ista_solve(y, bad, ista.SolverParams(max_iterations=500))


def test_scaling_covariance_is_exact():
    # doubling y and lambda doubles alpha bitwise: every intermediate
    # is scaled by a power of two, which float arithmetic preserves
    pair = _random_pair(8)
    y = np.random.default_rng(88).standard_normal(8)
    base = ista.ista_solve(y, pair, ista.SolverParams(lam=0.05, max_iterations=64, tolerance=0.0))
    doubled = ista.ista_solve(2 * y, pair, ista.SolverParams(lam=0.1, max_iterations=64, tolerance=0.0))
    assert np.array_equal(doubled.alpha, 2 * base.alpha)


def test_batch_matches_single_solves():
    pair = _random_pair(9)
    ys = np.random.default_rng(99).standard_normal((8, 5))
    params = ista.SolverParams()
    alpha, iters, objective, resid = ista.ista_solve_batch(ys, pair, params)
    for p in range(5):
        code = ista.ista_solve(ys[:, p], pair, params)
        assert np.array_equal(code.alpha, alpha[:, p])
        assert code.iterations_used == iters[p]


@pytest.mark.skipif(not _kernels.HAS_NUMBA, reason="numba unavailable")
def test_backend_parity():
    pair = _random_pair(10)
    ys = np.random.default_rng(111).standard_normal((8, 6))
    params = ista.SolverParams(lam=0.07, max_iterations=300, tolerance=0.0)
    a_np = ista.ista_solve_batch(ys, pair, params, backend="numpy")
    a_nb = ista.ista_solve_batch(ys, pair, params, backend="numba")
    assert np.max(np.abs(a_np[0] - a_nb[0])) < 1e-12
    assert np.array_equal(a_np[1], a_nb[1])


def test_reconstruct_hr_patch_linearity():
    pair = _random_pair(11)
    gen = np.random.default_rng(12)
    a1, a2 = gen.standard_normal((2, 20))
    r1 = ista.reconstruct_hr_patch(a1, pair)
    r2 = ista.reconstruct_hr_patch(a2, pair)
    both = ista.reconstruct_hr_patch(a1 + a2, pair)
    assert np.allclose(both, r1 + r2, atol=1e-12)
    assert np.array_equal(ista.reconstruct_hr_patch(np.zeros(20), pair), np.zeros(8))
    basis = np.zeros(20)
    basis[4] = 1.0
    assert np.array_equal(ista.reconstruct_hr_patch(basis, pair), pair.hr[:, 4])
    with pytest.raises(ValueError):
        ista.reconstruct_hr_patch(np.zeros(21), pair)


def test_rejects_non_finite_input():
    pair = _random_pair(13)
    y = np.zeros(8)
    y[3] = np.nan
    with pytest.raises(ValueError, match="non-finite"):
        ista.ista_solve(y, pair, ista.SolverParams())
