import numpy as np
import pytest

from grassrmc import _parallel
from grassrmc.grassmann import orthonormalize
from grassrmc.objective import eval_fbar, solve_v
from grassrmc.observation import ObservationSet


def random_obs(m, n, density, seed, scale=1.0, min_per_col=0):
    rng = np.random.default_rng(seed)
    mask = rng.random((m, n)) < density
    for j in range(n):
        short = min_per_col - mask[:, j].sum()
        if short > 0:
            mask[rng.choice(np.flatnonzero(~mask[:, j]), short, replace=False), j] = True
    rows, cols = np.nonzero(mask)
    return ObservationSet.from_arrays(m, n, rows, cols, scale * rng.standard_normal(rows.size))


def random_instance(m, n, r, density, seed, min_per_col=0):
    """Observations, an orthonormal U and an S on the observed set."""
    rng = np.random.default_rng(seed + 1000)
    obs = random_obs(m, n, density, seed, min_per_col=min_per_col)
    U = orthonormalize(rng.standard_normal((m, r)))
    S = rng.standard_normal(obs.nnz) * (rng.random(obs.nnz) < 0.2)
    return obs, U, S


def kron_v(obs, U, S, lam):
    """V from the literal rn x rn Kronecker system, everything dense."""
    U = np.asarray(U)
    m, r = U.shape
    n = obs.n
    C = obs.mask().astype(float)
    MS = obs.to_dense(obs.values - S)
    In = np.eye(n)
    A = np.kron(In, U.T) @ np.diag(((1 - lam**2) * C).ravel(order="F")) @ np.kron(In, U) + lam**2 * np.eye(r * n)
    b = (U.T @ (C * MS)).ravel(order="F")
    return np.linalg.solve(A, b).reshape((r, n), order="F")


def dense_fbar(obs, U, V, S, lam):
    X = np.asarray(U) @ V
    C = obs.mask()
    R = np.where(C, X - obs.to_dense() + obs.to_dense(S), 0.0)
    return 0.5 * np.sum(R**2) + 0.5 * lam**2 * np.sum(np.where(C, 0.0, X) ** 2)


def reduced_f(obs, U, S, lam):
    return eval_fbar(obs, U, solve_v(obs, U, S, lam), S, lam)


@pytest.fixture
def threads():
    """Restore the worker count after a test changes it."""
    before = _parallel.get_threads()
    yield _parallel.set_threads
    _parallel.set_threads(before)
