"""
Leverage-score feature selection.

A CandidateSet holds the base information H~ (prior + network) and the
per-feature contributions H^f of the visible, triangulated features. Per-feature
matrices are kept on their support, so full-size sets never materialize
hundreds of dense n x n matrices.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple

import numpy as np
import scipy.linalg as sla
from numpy.typing import NDArray

from app.config import PSD_TOL
from features import matkit
from features.vision import FeatureInfo

logger = logging.getLogger(__name__)


class Measure(str, Enum):
    VARIANCE = "variance"   # rho_v = Tr(H^-1)
    ENTROPY = "entropy"     # rho_e = -log det H
    SPECTRAL = "spectral"   # rho_lambda = lambda_min(H^-1)


@dataclass(frozen=True)
class CandidateSet:
    base: NDArray
    infos: tuple[FeatureInfo, ...]

    def __post_init__(self):
        base = matkit.symmetrize(self.base)
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "infos", tuple(self.infos))
        for info in self.infos:
            if info.dim != base.shape[0]:
                raise matkit.DimensionError(
                    f"feature {info.feature_id} has dim {info.dim}, base has {base.shape[0]}")
        try:
            sla.cho_factor(base, lower=True)
        except np.linalg.LinAlgError as e:
            raise matkit.SingularMatrixError(f"base information is not positive definite: {e}") from e

    @classmethod
    def from_matrices(cls, base, matrices, ids=None) -> "CandidateSet":
        ids = range(len(matrices)) if ids is None else ids
        return cls(base, tuple(FeatureInfo.from_matrix(i, m) for i, m in zip(ids, matrices)))

    @property
    def n(self) -> int:
        return self.base.shape[0]

    @property
    def size(self) -> int:
        return len(self.infos)

    @property
    def ids(self) -> list[int]:
        return [info.feature_id for info in self.infos]

    def scaled(self, c: float) -> "CandidateSet":
        infos = tuple(FeatureInfo(i.feature_id, i.dim, i.support, c * i.info_block, i.triangulated)
                      for i in self.infos)
        return CandidateSet(c * self.base, infos)


@dataclass(frozen=True)
class LeverageProfile:
    ids: list[int]
    scores: NDArray
    pmf: NDArray
    n: int


@dataclass(frozen=True)
class SelectionOutcome:
    ids: list[int]
    indices: list[int]
    info: NDArray
    q: int
    strategy: str
    seed: int | None = None
    infos: tuple[FeatureInfo, ...] = ()


class ConeBound(NamedTuple):
    chi_hat: float
    holds: bool


def _accumulate(h: NDArray, infos, indices) -> NDArray:
    for idx in indices:
        info = infos[idx]
        if info.support.size:
            h[np.ix_(info.support, info.support)] += info.info_block
    return h


def maximal_info(cs: CandidateSet) -> NDArray:
    """H(Theta) = H~ + sum_f H^f"""
    return matkit.symmetrize(_accumulate(cs.base.copy(), cs.infos, range(cs.size)))


def fused_information(cs: CandidateSet, indices, convention: str = "listing") -> NDArray:
    """Fused information of a subset, given by positions in the candidate set.

    "listing": H~ + sum_{f in Phi} H^f.
    "weighted": sum_{f in Phi} (H~/|Theta| + H^f) + (|Theta| - |Phi|)/|Theta| H~.
    The two agree; both are exposed so the cone-bound check reads as derived.
    """
    indices = sorted(set(indices))
    if convention == "listing":
        return matkit.symmetrize(_accumulate(cs.base.copy(), cs.infos, indices))
    if convention == "weighted":
        m = cs.size
        h = len(indices) * cs.base / m if m else np.zeros_like(cs.base)
        h = _accumulate(h, cs.infos, indices)
        if m:
            h = h + (m - len(indices)) / m * cs.base
        return matkit.symmetrize(h)
    raise ValueError(f"unknown fusion convention: {convention}")


def leverage_profile(cs: CandidateSet) -> LeverageProfile:
    """r_f = Tr(H(Theta)^-1 (H~/|Theta| + H^f)) and pi_f = r_f / n."""
    if cs.size < 1:
        raise ValueError("leverage scores need at least one candidate feature")
    h_inv = matkit.inv_spd(maximal_info(cs))
    shared = float(np.sum(h_inv * cs.base)) / cs.size
    scores = np.empty(cs.size)
    for j, info in enumerate(cs.infos):
        own = 0.0
        if info.support.size:
            own = float(np.sum(h_inv[np.ix_(info.support, info.support)] * info.info_block))
        scores[j] = shared + own
    scores = np.maximum(scores, 0.0)
    n = cs.n
    drift = abs(scores.sum() - n)
    if drift > 1e-8 * n:
        logger.warning("leverage scores sum to %.12g, expected %d", scores.sum(), n)
    logger.debug("leverage range %.4g .. %.4g over %d features", scores.min(), scores.max(), cs.size)
    return LeverageProfile(cs.ids, scores, scores / n, n)


def _draw(cs: CandidateSet, q: int, pmf, seed, strategy: str) -> SelectionOutcome:
    if q < 1:
        raise ValueError(f"q must be >= 1, got {q}")
    if cs.size == 0:
        return SelectionOutcome([], [], cs.base.copy(), q, strategy, _seed_tag(seed))
    rng = np.random.default_rng(seed)
    if pmf is not None:
        pmf = np.asarray(pmf, dtype=float) / np.sum(pmf)
    draws = rng.choice(cs.size, size=q, replace=True, p=pmf)
    indices = sorted(set(int(d) for d in draws))
    return SelectionOutcome([cs.infos[i].feature_id for i in indices], indices,
                            fused_information(cs, indices), q, strategy, _seed_tag(seed),
                            tuple(cs.infos[i] for i in indices))


def _seed_tag(seed):
    return seed if isinstance(seed, (int, np.integer)) else None


def sample_randomized(cs: CandidateSet, q: int, seed=None, profile: LeverageProfile | None = None) -> SelectionOutcome:
    """Draw q features i.i.d. from the leverage pmf; duplicates collapse."""
    pmf = None
    if cs.size:
        pmf = (profile or leverage_profile(cs)).pmf
    return _draw(cs, q, pmf, seed, "randomized")


def sample_uniform(cs: CandidateSet, q: int, seed=None) -> SelectionOutcome:
    return _draw(cs, q, None, seed, "uniform")


def select_greedy(cs: CandidateSet, k: int, measure: Measure | str = Measure.ENTROPY) -> SelectionOutcome:
    """Add, k times, the feature whose fusion most lowers the measure.

    Ties (within 1e-12 relative) go to the lowest feature id. rho_v and rho_e
    are scored with Woodbury updates of H^-1 through each feature's factor;
    rho_lambda needs the largest eigenvalue of every trial matrix.
    """
    measure = Measure(measure)
    if not 0 <= k <= cs.size:
        raise ValueError(f"k must be in 0..{cs.size}, got {k}")
    order = sorted(range(cs.size), key=lambda j: cs.infos[j].feature_id)
    remaining = list(order)
    chosen: list[int] = []
    factors = {j: cs.infos[j].factor() for j in order}

    h = cs.base.copy()
    cov = matkit.inv_spd(h)
    cov2 = cov @ cov

    for _ in range(k):
        best_j, best_val = None, math.inf
        for j in remaining:
            val = _greedy_score(cs.infos[j], factors[j], h, cov, cov2, measure)
            if best_j is None or val < best_val - 1e-12 * abs(best_val):
                best_j, best_val = j, val
        info, g = cs.infos[best_j], factors[best_j]
        remaining.remove(best_j)
        chosen.append(best_j)
        _accumulate(h, cs.infos, [best_j])
        if g.shape[0]:
            s = info.support
            u = cov[:, s] @ g.T
            kinv = np.linalg.inv(np.eye(g.shape[0]) + g @ cov[np.ix_(s, s)] @ g.T)
            ku = kinv @ u.T
            cu = cov @ u
            cov2 = cov2 - cu @ ku - ku.T @ cu.T + ku.T @ (u.T @ u) @ ku
            cov = matkit.symmetrize(cov - u @ ku)
        logger.debug("greedy picked feature %d (%s=%.6g)", info.feature_id, measure.value, best_val)

    indices = sorted(chosen)
    return SelectionOutcome([cs.infos[j].feature_id for j in chosen], indices,
                            fused_information(cs, indices), k, "greedy",
                            infos=tuple(cs.infos[j] for j in indices))


def _greedy_score(info: FeatureInfo, g: NDArray, h, cov, cov2, measure: Measure) -> float:
    if measure is Measure.SPECTRAL:
        trial = h.copy()
        if info.support.size:
            trial[np.ix_(info.support, info.support)] += info.info_block
        top = sla.eigvalsh(matkit.symmetrize(trial), subset_by_index=[trial.shape[0] - 1] * 2)[0]
        return 1.0 / top
    if g.shape[0] == 0:
        return float(np.trace(cov)) if measure is Measure.VARIANCE else 0.0
    s = info.support
    kmat = np.eye(g.shape[0]) + g @ cov[np.ix_(s, s)] @ g.T
    if measure is Measure.ENTROPY:
        # relative to the current -log det; the common offset does not change the argmin
        return -float(np.linalg.slogdet(kmat)[1])
    t = g @ cov2[np.ix_(s, s)] @ g.T
    return float(np.trace(cov)) - float(np.trace(np.linalg.solve(kmat, t)))


def sample_size(n: int, eps: float, delta: float) -> int:
    """q = ceil(2 n ln(n / delta) / eps^2)"""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if not 0 < eps < 1:
        raise ValueError(f"eps must be in (0, 1), got {eps}")
    if not 0 < delta < 0.75:
        raise ValueError(f"delta must be in (0, 3/4), got {delta}")
    return math.ceil(2 * n * math.log(n / delta) / eps ** 2)


def b_tilde_matrices(cs: CandidateSet) -> list[NDArray]:
    """B~^f = H(Theta)^-1/2 (H~/|Theta| + H^f) H(Theta)^-1/2, dense."""
    if cs.size < 1:
        raise ValueError("no candidate features")
    half = matkit.inv_sqrt(maximal_info(cs))
    shared = cs.base / cs.size
    return [matkit.symmetrize(half @ (shared + info.info) @ half) for info in cs.infos]


def zeta(cs: CandidateSet, outcome: SelectionOutcome, eps: float) -> float:
    """Smallest gamma with gamma * sum_{f in Phi} B~^f >= (q/n)(1 - eps) I."""
    if not outcome.indices:
        return math.inf
    partial = _accumulate(len(outcome.indices) / cs.size * cs.base, cs.infos, outcome.indices)
    # lambda_min(sum B~) is the smallest generalized eigenvalue of (partial, H(Theta))
    lam = sla.eigh(matkit.symmetrize(partial), maximal_info(cs), eigvals_only=True)[0]
    if lam <= 1e-14:
        return math.inf
    return (outcome.q / cs.n) * (1 - eps) / lam


def estimate_chi(cs: CandidateSet, q: int, eps: float, replicates: int = 64, seed=None) -> float:
    """chi_hat = mean(zeta) * n / q over replicate randomized selections."""
    profile = leverage_profile(cs)
    children = np.random.SeedSequence(seed).spawn(replicates)
    zs = [zeta(cs, sample_randomized(cs, q, np.random.default_rng(c), profile), eps) for c in children]
    return float(np.mean(zs)) * cs.n / q


def verify_cone_bound(cs: CandidateSet, outcome: SelectionOutcome, eps: float, chi_hat: float | None = None,
                      replicates: int = 64, seed=None, tol: float = PSD_TOL) -> ConeBound:
    """Check H(Phi) >= (1 - eps)/(4 chi_hat) H(Theta)."""
    if not outcome.indices or math.isinf(zeta(cs, outcome, eps)):
        return ConeBound(math.inf if chi_hat is None else chi_hat, False)
    if chi_hat is None:
        chi_hat = estimate_chi(cs, outcome.q, eps, replicates, seed)
    if not math.isfinite(chi_hat):
        return ConeBound(chi_hat, True)
    lower = (1 - eps) / (4 * chi_hat) * maximal_info(cs)
    return ConeBound(chi_hat, matkit.psd_leq(lower, outcome.info, tol))


def chernoff_tail_bound(n: int, q: int, eps: float, exact: bool = False) -> float:
    """Bound on P[lambda_min(sum X_i) <= (1 - eps) q / n].

    Default form n exp(-q eps^2 / 2n); exact=True gives
    n (e^-eps / (1 - eps)^(1 - eps))^(q/n).
    """
    if not 0 < eps < 1:
        raise ValueError(f"eps must be in (0, 1), got {eps}")
    if exact:
        return n * (math.exp(-eps) / (1 - eps) ** (1 - eps)) ** (q / n)
    return n * math.exp(-q * eps ** 2 / (2 * n))


def resolve_budget(cs: CandidateSet, eps: float, delta: float, q: int | None = None) -> int:
    """Draw budget: explicit q, else min(sample_size, |Theta|)."""
    if q is None:
        q = sample_size(cs.n, eps, delta)
        if q >= cs.size:
            logger.warning("sample size %d >= %d candidates; capping at |Theta|", q, cs.size)
        q = max(1, min(q, cs.size))
    elif q >= cs.size:
        logger.warning("q=%d >= %d candidates", q, cs.size)
    return q
