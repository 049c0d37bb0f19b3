"""Grassmann manifold Gr(m, r) with orthonormal representatives.

Tangent vectors are plain ``m x r`` arrays ``H`` with ``U.T @ H == 0``.
"""
import numpy as np

from .errors import DimensionMismatch, NotOrthonormal, RankDeficient

ORTHO_TOL = 1e-10
RANK_TOL = 1e-12


class GrassmannPoint:
    """An ``m x r`` matrix with orthonormal columns, ``m > r >= 1``.

    Orthonormality is checked on construction; the stored basis is read-only.
    """

    __slots__ = ("basis",)

    def __init__(self, basis, tol=ORTHO_TOL):
        basis = np.array(basis, dtype=np.float64)
        if basis.ndim != 2:
            raise DimensionMismatch(f"basis must be 2-d, got shape {basis.shape}")
        m, r = basis.shape
        if not m > r >= 1:
            raise DimensionMismatch(f"need m > r >= 1, got {m}x{r}")
        defect = orthonormality_defect(basis)
        if not defect <= tol:
            raise NotOrthonormal(f"||U^T U - I||_F = {defect:.3e} exceeds {tol:.1e}")
        basis.setflags(write=False)
        self.basis = basis

    @property
    def shape(self):
        return self.basis.shape

    @property
    def rank(self):
        return self.basis.shape[1]

    def __array__(self, dtype=None, copy=None):
        return self.basis if dtype is None else self.basis.astype(dtype)

    def __repr__(self):
        m, r = self.basis.shape
        return f"GrassmannPoint({m}x{r})"


def as_basis(U):
    return U.basis if isinstance(U, GrassmannPoint) else np.asarray(U, dtype=np.float64)


def orthonormality_defect(U):
    U = as_basis(U)
    return float(np.linalg.norm(U.T @ U - np.eye(U.shape[1])))


def orthonormalize(X):
    """Q factor of ``X`` with nonnegative ``diag(R)`` as a :class:`GrassmannPoint`."""
    return GrassmannPoint(_qf(np.asarray(X, dtype=np.float64)))


def _qf(X):
    Q, R = np.linalg.qr(X, mode="reduced")
    d = np.diag(R)
    scale = np.linalg.norm(X)
    if np.min(np.abs(d)) < RANK_TOL * max(scale, np.finfo(float).tiny):
        raise RankDeficient(
            f"smallest |R_ii| = {np.min(np.abs(d)):.3e} relative to ||X||_F = {scale:.3e}"
        )
    signs = np.where(d < 0, -1.0, 1.0)
    return Q * signs


def tangent_project(U, H):
    """Orthogonal projection ``(I - U U^T) H`` onto the tangent space at ``U``."""
    U = as_basis(U)
    H = np.asarray(H, dtype=np.float64)
    if H.shape != U.shape:
        raise DimensionMismatch(f"H has shape {H.shape}, expected {U.shape}")
    return H - U @ (U.T @ H)


def retract_qr(U, H):
    """QR retraction ``qf(U + H)``; returns ``U`` itself when ``H`` is zero."""
    Ub = as_basis(U)
    H = np.asarray(H, dtype=np.float64)
    if H.shape != Ub.shape:
        raise DimensionMismatch(f"H has shape {H.shape}, expected {Ub.shape}")
    if not H.any():
        return U if isinstance(U, GrassmannPoint) else GrassmannPoint(Ub)
    return GrassmannPoint(_qf(Ub + H))


def random_point(m, r, seed):
    rng = np.random.default_rng(seed)
    return orthonormalize(rng.standard_normal((m, r)))


def random_tangent(U, seed):
    """Unit-norm Gaussian tangent vector at ``U``, deterministic in ``seed``."""
    Ub = as_basis(U)
    rng = np.random.default_rng(seed)
    xi = tangent_project(Ub, rng.standard_normal(Ub.shape))
    # second pass removes the residual normal component left by rounding
    xi = tangent_project(Ub, xi)
    return xi / np.linalg.norm(xi)


def inner(A, B):
    """Trace inner product ``Tr(A^T B)``."""
    return float(np.vdot(A, B))
