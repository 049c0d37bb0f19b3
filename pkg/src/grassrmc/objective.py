"""Smooth part of the objective, the inner least-squares solve for V, and gradients.

The problem is

    F(U, V, S) = 1/2 ||P_O(UV - M + S)||^2 + lam^2/2 ||P_Oc(UV)||^2 + gamma ||P_O(S)||_1

over orthonormal ``U`` (m x r), ``V`` (r x n) and ``S`` supported on the
observed set O. ``fbar`` is everything except the l1 term.
"""
from dataclasses import dataclass
import logging

import numpy as np

from . import _parallel
from .errors import DimensionMismatch, SingularBlock, StaleState
from .grassmann import GrassmannPoint, as_basis, tangent_project
from .observation import (
    check_aligned,
    product_on_omega,
    project_complement_norm_sq,
    residual_on_omega,
)

logger = logging.getLogger(__name__)

DEFAULT_LAMBDA = 1e-8


@dataclass(frozen=True)
class ProblemInstance:
    obs: object
    rank: int
    lam: float = DEFAULT_LAMBDA
    gamma: float = 1.0

    def __post_init__(self):
        if not 1 <= self.rank <= min(self.obs.m, self.obs.n):
            raise ValueError(f"rank {self.rank} must lie in [1, min(m, n)]")
        if self.rank >= self.obs.m:
            raise ValueError("rank must be smaller than the row count")
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")


class BlockFactor:
    """Cholesky factors of the n per-column r x r systems for a fixed ``U``.

    ``A_j = (1 - lam^2) U_j^T U_j + lam^2 I`` where ``U_j`` holds the rows of
    ``U`` observed in column ``j``. The blocks depend on ``U`` and the mask
    only, so one factorization serves every ``S``.
    """

    def __init__(self, obs, U, lam):
        Ub = as_basis(U)
        if Ub.shape[0] != obs.m:
            raise DimensionMismatch(f"U has {Ub.shape[0]} rows, observations have {obs.m}")
        self.obs = obs
        self.U = U
        self.lam = float(lam)
        r = Ub.shape[1]
        self.chol = np.empty((obs.n, r, r))
        _parallel.run_slices(obs.n, lambda lo, hi: self._factor(Ub, lo, hi), weights=obs.col_ptr)

    def _factor(self, Ub, lo, hi):
        obs, lam2 = self.obs, self.lam**2
        r = Ub.shape[1]
        a, b = obs.col_ptr[lo], obs.col_ptr[hi]
        Ur = Ub[obs.rows[a:b]]
        # all r*r products per entry, summed per column by the sparse operator
        P = (Ur[:, :, None] * Ur[:, None, :]).reshape(b - a, r * r)
        A = np.asarray(obs.column_sum[lo:hi, a:b] @ P).reshape(hi - lo, r, r)
        A *= 1.0 - lam2
        A[:, np.arange(r), np.arange(r)] += lam2
        try:
            self.chol[lo:hi] = np.linalg.cholesky(A)
        except np.linalg.LinAlgError:
            self.chol[lo:hi] = self._factor_slow(A, lo)

    def _factor_slow(self, A, offset):
        out = np.empty_like(A)
        r = A.shape[1]
        for j, Aj in enumerate(A):
            try:
                out[j] = np.linalg.cholesky(Aj)
                continue
            except np.linalg.LinAlgError:
                if self.lam == 0.0:
                    raise SingularBlock(
                        f"column {offset + j} block is singular with lam = 0"
                    ) from None
            # lam > 0 but rounding pushed a rank-deficient block off PD; columns with
            # fewer than r observations hit this. The jitter is below the block's noise floor.
            jitter = max(self.lam**2, 1e-14 * np.trace(Aj) / r, np.finfo(float).tiny)
            while True:
                try:
                    out[j] = np.linalg.cholesky(Aj + jitter * np.eye(r))
                    break
                except np.linalg.LinAlgError:
                    jitter *= 10.0
        return out

    def solve(self, B):
        """Solve ``A_j v_j = b_j`` for all columns; ``B`` is n x r, returns r x n."""
        out = np.empty((B.shape[1], B.shape[0]))

        def work(lo, hi):
            out[:, lo:hi] = _chol_solve(self.chol[lo:hi], B[lo:hi]).T

        _parallel.run_slices(B.shape[0], work)
        return out


def _chol_solve(L, B):
    # batched forward then back substitution; r is small so loop over it
    n, r = B.shape
    y = np.empty((n, r))
    for k in range(r):
        y[:, k] = (B[:, k] - np.einsum("ij,ij->i", L[:, k, :k], y[:, :k])) / L[:, k, k]
    x = np.empty((n, r))
    for k in reversed(range(r)):
        x[:, k] = (y[:, k] - np.einsum("ij,ij->i", L[:, k + 1:, k], x[:, k + 1:])) / L[:, k, k]
    return x


def _rhs(obs, U, S):
    # b_j = U_j^T (M - S)_j for every column, as an n x r array
    Ub = as_basis(U)
    w = obs.values - S
    return np.asarray(obs.to_sparse(w).T @ Ub)


def solve_v(obs, U, S, lam, factor=None):
    """Minimizer over V of ``fbar(U, V, S)`` via n independent r x r SPD solves.

    Pass a :class:`BlockFactor` built for the same ``U`` to reuse its
    factorization.
    """
    S = check_aligned(obs, S)
    if factor is None:
        factor = BlockFactor(obs, U, lam)
    elif factor.U is not U or factor.lam != lam:
        raise ValueError("factor was built for a different U or lam")
    return factor.solve(_rhs(obs, U, S))


def eval_fbar(obs, U, V, S, lam):
    R = residual_on_omega(obs, as_basis(U), V, S)
    return 0.5 * float(np.dot(R, R)) + 0.5 * lam**2 * project_complement_norm_sq(obs, as_basis(U), V)


def eval_objective(obs, U, V, S, lam, gamma):
    S = check_aligned(obs, S)
    return eval_fbar(obs, U, V, S, lam) + gamma * float(np.sum(np.abs(S)))


@dataclass(frozen=True, eq=False)
class IterateState:
    """``(U, V, S)`` with ``V`` the inner minimizer, plus cached residual and fbar."""

    obs: object
    U: GrassmannPoint
    V: np.ndarray
    S: np.ndarray
    lam: float
    residual: np.ndarray
    fbar: float
    factor: BlockFactor

    def objective(self, gamma):
        return self.fbar + gamma * float(np.sum(np.abs(self.S)))

    def is_stale(self):
        R = residual_on_omega(self.obs, as_basis(self.U), self.V, self.S)
        scale = max(1.0, float(np.max(np.abs(self.obs.values), initial=0.0)))
        return not np.allclose(R, self.residual, rtol=1e-12, atol=1e-12 * scale)


def make_state(obs, U, S, lam, factor=None):
    """Solve for V at ``(U, S)`` and return the refreshed :class:`IterateState`."""
    if not isinstance(U, GrassmannPoint):
        U = GrassmannPoint(U)
    S = np.array(check_aligned(obs, S))
    S.setflags(write=False)
    if factor is None:
        factor = BlockFactor(obs, U, lam)
    V = solve_v(obs, U, S, lam, factor)
    on = product_on_omega(obs, U.basis, V)
    R = on - obs.values + S
    # same trace identity as project_complement_norm_sq, sharing the product
    comp = max(float(np.vdot(V, V)) - float(np.dot(on, on)), 0.0)
    fbar = 0.5 * float(np.dot(R, R)) + 0.5 * lam**2 * comp
    return IterateState(obs, U, V, S, lam, R, fbar, factor)


def grad_s(state, check=False):
    """Euclidean gradient of the reduced f(U, S) in S: the residual on the observed set."""
    if check and state.is_stale():
        raise StaleState("residual cache does not match (U, V, S)")
    return state.residual


def grad_u(state, check=False):
    """Riemannian gradient of the reduced f(U, S) in U at the state's inner minimizer.

    ``((1 - lam^2) P_O(R) - lam^2 P_O(M - S)) V^T + lam^2 U (V V^T)`` followed by a
    tangent projection to strip the rounding-level normal component.
    """
    if check and state.is_stale():
        raise StaleState("residual cache does not match (U, V, S)")
    obs, lam2 = state.obs, state.lam**2
    U, V = state.U.basis, state.V
    w = (1.0 - lam2) * state.residual - lam2 * (obs.values - state.S)
    W = obs.to_csr(w)
    G = np.empty(U.shape)

    def work(lo, hi):
        G[lo:hi] = W[lo:hi] @ V.T

    _parallel.run_slices(obs.m, work)
    if lam2:
        G += lam2 * (U @ (V @ V.T))
    if logger.isEnabledFor(logging.DEBUG):
        gnorm = np.linalg.norm(G)
        logger.debug("grad_u normal component %.3e of %.3e", np.linalg.norm(U.T @ G), gnorm)
    return tangent_project(U, G)
