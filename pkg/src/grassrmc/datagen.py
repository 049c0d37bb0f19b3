"""Synthetic instances, spectral initialization and recovery metrics."""
from dataclasses import dataclass
import warnings

import numpy as np

from .errors import ConvergenceWarning, DimensionMismatch, InvalidSpec, ZeroDenominator
from .grassmann import as_basis, orthonormalize
from .objective import DEFAULT_LAMBDA, ProblemInstance
from .observation import ObservationSet

# columns per Bernoulli draw; fixed so the stream does not depend on memory limits
_MASK_CHUNK = 256


@dataclass(frozen=True)
class SyntheticSpec:
    m: int
    n: int
    r: int
    sampling_ratio: float
    outlier_ratio: float
    seed: int = 0

    def validate(self):
        if self.m < 1 or self.n < 1:
            raise InvalidSpec("m and n must be positive")
        if not 1 <= self.r < self.m or self.r > self.n:
            raise InvalidSpec(f"rank {self.r} invalid for {self.m}x{self.n}")
        if not 0 < self.sampling_ratio <= 1:
            raise InvalidSpec("sampling_ratio must lie in (0, 1]")
        if not 0 <= self.outlier_ratio < 1:
            raise InvalidSpec("outlier_ratio must lie in [0, 1)")


@dataclass(frozen=True)
class GroundTruth:
    U_star: np.ndarray
    V_star: np.ndarray
    S_star: np.ndarray

    @property
    def norm_sq(self):
        return float(np.sum((self.U_star.T @ self.U_star) * (self.V_star @ self.V_star.T)))


def _streams(seed, k):
    # independent Philox streams so each quantity can be regenerated on its own
    return [np.random.Generator(np.random.Philox(s)) for s in np.random.SeedSequence(seed).spawn(k)]


def bernoulli_mask(m, n, ratio, rng):
    """Row and column indices of an i.i.d. Bernoulli(``ratio``) mask, column-major."""
    rows, cols = [], []
    for lo in range(0, n, _MASK_CHUNK):
        hi = min(n, lo + _MASK_CHUNK)
        hit = rng.random((hi - lo, m)) < ratio
        c, r = np.nonzero(hit)
        rows.append(r)
        cols.append(c + lo)
    return np.concatenate(rows), np.concatenate(cols)


def generate_synthetic(spec, lam=DEFAULT_LAMBDA, gamma=1.0):
    """Gaussian low-rank target, Bernoulli sampling and sparse Gaussian outliers.

    Returns ``(ProblemInstance, GroundTruth)``; observed values are
    ``(U* V*)_ij + S*_ij`` where ``S*`` is nonzero on a uniformly chosen
    ``outlier_ratio`` fraction of the observed entries.
    """
    spec.validate()
    g_u, g_v, g_mask, g_out = _streams(spec.seed, 4)
    U_star = g_u.standard_normal((spec.m, spec.r))
    V_star = g_v.standard_normal((spec.r, spec.n))
    rows, cols = bernoulli_mask(spec.m, spec.n, spec.sampling_ratio, g_mask)
    nnz = rows.size
    low_rank = np.einsum("ij,ji->i", U_star[rows], V_star[:, cols])
    S_star = np.zeros(nnz)
    n_out = int(round(spec.outlier_ratio * nnz))
    if n_out:
        where = g_out.choice(nnz, size=n_out, replace=False)
        S_star[where] = g_out.standard_normal(n_out)
    obs = ObservationSet.from_arrays(spec.m, spec.n, rows, cols, low_rank + S_star)
    # rows/cols were already column-major and row-sorted, so S* stays aligned
    problem = ProblemInstance(obs, spec.r, lam=lam, gamma=gamma)
    return problem, GroundTruth(U_star, V_star, S_star)


def spectral_init(obs, r, seed=0, tol=1e-6, max_sweeps=200, oversample=5):
    """Top-r left singular subspace of the zero-filled observed matrix.

    Block power (subspace) iteration on the sparse operator with ``oversample``
    extra columns and a Rayleigh-Ritz extraction each sweep; stops once the
    sine of the largest principal angle between successive top-r subspaces is
    at most ``tol``. Returns ``(U0, S0)`` with ``S0 = 0``; issues a
    :class:`ConvergenceWarning` if the sweep cap is hit with a change above 1e-3.
    """
    if not 1 <= r <= min(obs.m, obs.n) or r >= obs.m:
        raise DimensionMismatch(f"rank {r} invalid for {obs.m}x{obs.n}")
    A = obs.to_sparse()
    At = A.T.tocsc()
    k = min(r + oversample, obs.m, obs.n)
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.standard_normal((obs.m, k)))
    U_prev = None
    change = np.inf
    for _ in range(max_sweeps):
        W, _ = np.linalg.qr(At @ Q)
        Z = A @ W
        Q, _ = np.linalg.qr(Z)
        # Rayleigh-Ritz: rotate the block onto its singular directions
        u, _, _ = np.linalg.svd(Q.T @ Z, full_matrices=False)
        U = Q @ u[:, :r]
        if U_prev is not None:
            change = np.linalg.norm(U - U_prev @ (U_prev.T @ U), 2)
            if change <= tol:
                break
        U_prev = U
    else:
        if change > 1e-3:
            warnings.warn(
                f"power iteration stopped after {max_sweeps} sweeps with subspace change {change:.2e}",
                ConvergenceWarning,
                stacklevel=2,
            )
    return orthonormalize(U), np.zeros(obs.nnz)


def _product_distance(U, V, U2, V2):
    # ||UV - U2 V2||_F through a QR of [U, U2]: only m x 2r and 2r x n work
    U, V, U2, V2 = (np.asarray(as_basis(a), dtype=np.float64) for a in (U, V, U2, V2))
    if U.shape[0] != U2.shape[0] or V.shape[1] != V2.shape[1] or U.shape[1] != V.shape[0] or U2.shape[1] != V2.shape[0]:
        raise DimensionMismatch("factor shapes are incompatible")
    r = U.shape[1]
    _, R = np.linalg.qr(np.hstack([U, U2]), mode="reduced")
    D = R[:, :r] @ V - R[:, r:] @ V2
    return float(np.linalg.norm(D))


def product_norm(U, V):
    U, V = as_basis(U), np.asarray(V)
    _, R = np.linalg.qr(U, mode="reduced")
    return float(np.linalg.norm(R @ V))


def relative_difference(U, V, truth):
    """``||UV - X*||_F / ||X*||_F`` computed from the factors."""
    denom = product_norm(truth.U_star, truth.V_star)
    if denom == 0:
        raise ZeroDenominator("ground truth product is zero")
    return _product_distance(U, V, truth.U_star, truth.V_star) / denom


def stability_gap(U, V, U_prev, V_prev):
    """``||UV - U'V'||_F / ||U'V'||_F`` for consecutive iterates."""
    denom = product_norm(U_prev, V_prev)
    if denom == 0:
        raise ZeroDenominator("previous product is zero")
    return _product_distance(U, V, U_prev, V_prev) / denom


# the eight synthetic settings at full size; "scaled" divides m and n by ten
BENCHMARK_CASES = {
    "case1": dict(m=5000, n=5000, r=5, sampling=0.10, outliers=0.10, t_u=2.0, eps0=30.0, t_u_manpg=2.0, eps0_manpg=30.0),
    "case2": dict(m=1000, n=30000, r=5, sampling=0.10, outliers=0.10, t_u=2.0, eps0=30.0, t_u_manpg=2.0, eps0_manpg=30.0),
    "case3": dict(m=10000, n=10000, r=5, sampling=0.10, outliers=0.10, t_u=2.0, eps0=30.0, t_u_manpg=2.0, eps0_manpg=30.0),
    "case4": dict(m=2000, n=2000, r=10, sampling=0.20, outliers=0.10, t_u=2.0, eps0=30.0, t_u_manpg=1.6, eps0_manpg=20.0),
    "case5": dict(m=5000, n=5000, r=10, sampling=0.10, outliers=0.10, t_u=2.0, eps0=30.0, t_u_manpg=2.0, eps0_manpg=30.0),
    "case6": dict(m=5000, n=5000, r=5, sampling=0.20, outliers=0.10, t_u=2.0, eps0=30.0, t_u_manpg=2.0, eps0_manpg=30.0),
    "case7": dict(m=5000, n=5000, r=5, sampling=0.10, outliers=0.20, t_u=2.0, eps0=30.0, t_u_manpg=2.0, eps0_manpg=30.0),
    "case8": dict(m=10000, n=10000, r=5, sampling=0.20, outliers=0.10, t_u=2.0, eps0=100.0, t_u_manpg=2.0, eps0_manpg=100.0),
}


def case_params(name):
    """Parameters for ``caseN`` or its one-tenth-size variant ``caseN-scaled``.

    Scaling m and n by 1/10 shrinks ``sqrt(|Omega|)`` and with it every step
    norm by 10, so the scaled variants divide epsilon0 by 10 as well.
    """
    base, _, suffix = name.partition("-")
    if base not in BENCHMARK_CASES or suffix not in ("", "scaled"):
        raise KeyError(name)
    params = dict(BENCHMARK_CASES[base])
    if suffix == "scaled":
        params["m"] //= 10
        params["n"] //= 10
        params["eps0"] /= 10
        params["eps0_manpg"] /= 10
    return params


def case_names():
    return [c for c in BENCHMARK_CASES] + [f"{c}-scaled" for c in BENCHMARK_CASES]
