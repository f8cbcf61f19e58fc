"""
Dense PSD-cone toolkit used by every other module.

All spectral quantities are computed on the symmetrized matrix (M + M^T)/2.
"""

from typing import NamedTuple

import numpy as np
import scipy.linalg as sla
from numpy.typing import NDArray

from app.config import COND_LIMIT, PSD_TOL

SymMatrix = NDArray[np.float64]
PsdMatrix = NDArray[np.float64]


class DimensionError(ValueError):
    pass


class SingularMatrixError(ValueError):
    pass


class NotTriangulatedError(ValueError):
    def __init__(self, message: str = "feature not triangulated"):
        super().__init__(message)


class SpectralFunctionals(NamedTuple):
    trace_inv: float    # rho_v
    neg_logdet: float   # rho_e
    min_eig_inv: float  # rho_lambda


def symmetrize(m) -> SymMatrix:
    m = np.asarray(m, dtype=float)
    return 0.5 * (m + m.T)


def _square(m, name: str = "matrix") -> NDArray:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {m.shape}")
    return m


def is_symmetric(m) -> bool:
    m = _square(m)
    return bool(np.all(np.abs(m - m.T) <= 1e-10 * (1.0 + np.abs(m))))


def is_psd(m, tol: float = PSD_TOL) -> bool:
    w = np.linalg.eigvalsh(symmetrize(_square(m)))
    if w.size == 0:
        return True
    scale = max(abs(w[-1]), abs(w[0]))
    return bool(w[0] >= -tol * scale)


def kron(a, b) -> SymMatrix:
    return np.kron(np.asarray(a, dtype=float), np.asarray(b, dtype=float))


def block_diag(blocks) -> SymMatrix:
    blocks = list(blocks)
    if not blocks:
        raise ValueError("no blocks")
    return sla.block_diag(*[np.asarray(b, dtype=float) for b in blocks])


def psd_leq(x, y, tol: float = PSD_TOL) -> bool:
    """True iff x <= y in the PSD cone, up to a relative tolerance."""
    x, y = _square(x, "x"), _square(y, "y")
    if x.shape != y.shape:
        raise DimensionError(f"dimension mismatch: {x.shape} vs {y.shape}")
    w = np.linalg.eigvalsh(symmetrize(y - x))
    if w.size == 0:
        return True
    return bool(w[0] >= -tol * (1.0 + abs(w[-1])))


def schur_marginalize(omega, split: int, cond_limit: float = COND_LIMIT) -> SymMatrix:
    """A - B D^-1 B^T for omega = [[A, B], [B^T, D]] with A of size `split`."""
    omega = symmetrize(_square(omega, "omega"))
    if not 0 <= split <= omega.shape[0]:
        raise DimensionError(f"split {split} outside 0..{omega.shape[0]}")
    a = omega[:split, :split]
    b = omega[:split, split:]
    d = omega[split:, split:]
    if d.size == 0:
        return a.copy()
    w = np.linalg.eigvalsh(d)
    if w[0] <= 0 or not np.isfinite(w[-1] / w[0]) or w[-1] / w[0] >= cond_limit:
        raise NotTriangulatedError()
    return symmetrize(a - b @ np.linalg.solve(d, b.T))


def _pd_eigh(h, rel: float):
    h = symmetrize(_square(h))
    w, v = np.linalg.eigh(h)
    if w.size and (w[-1] <= 0 or w[0] <= rel * w[-1]):
        raise SingularMatrixError(f"matrix is not positive definite (eigenvalues {w[0]:.3e}..{w[-1]:.3e})")
    return w, v


def inv_sqrt(h) -> SymMatrix:
    w, v = _pd_eigh(h, 1e-10)
    return symmetrize((v / np.sqrt(w)) @ v.T)


def inv_spd(h) -> SymMatrix:
    """Inverse of an SPD matrix through its Cholesky factor."""
    h = symmetrize(_square(h))
    try:
        c = sla.cho_factor(h, lower=True)
    except np.linalg.LinAlgError as e:
        raise SingularMatrixError(f"matrix is not positive definite: {e}") from e
    return symmetrize(sla.cho_solve(c, np.eye(h.shape[0])))


def solve_spd(h, b) -> NDArray:
    h = symmetrize(_square(h))
    try:
        c = sla.cho_factor(h, lower=True)
    except np.linalg.LinAlgError as e:
        raise SingularMatrixError(f"matrix is not positive definite: {e}") from e
    return sla.cho_solve(c, np.asarray(b, dtype=float))


def spectral_functionals(h) -> SpectralFunctionals:
    """Table of performance measures: Tr(h^-1), -log det h, lambda_min(h^-1)."""
    w = np.linalg.eigvalsh(symmetrize(_square(h)))
    if w.size == 0 or w[0] <= 0:
        raise SingularMatrixError("performance measures need a positive definite matrix")
    return SpectralFunctionals(
        trace_inv=float(np.sum(1.0 / w)),
        neg_logdet=float(-np.sum(np.log(w))),
        min_eig_inv=float(1.0 / w[-1]),
    )


def max_eig_inv(h) -> float:
    w = np.linalg.eigvalsh(symmetrize(_square(h)))
    if w.size == 0 or w[0] <= 0:
        raise SingularMatrixError("lambda_max(h^-1) needs a positive definite matrix")
    return float(1.0 / w[0])


def min_eig(h) -> float:
    return float(np.linalg.eigvalsh(symmetrize(_square(h)))[0])
