"""Diagonal-covariance Gaussian mixture fitted by EM.

The mixture is the generative model behind Fisher word vectors: it is fit
on the embedded words of all object labels and then held fixed.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from zsaction.errors import InputError

logger = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)

MAX_ITER = 200
REL_TOL = 1e-6
VAR_FLOOR_REL = 1e-6
VAR_FLOOR_ABS = 1e-12
# a component whose soft count falls below this after an E-step is re-seeded
EMPTY_COUNT = 1e-8


@dataclass(frozen=True, eq=False)
class GmmModel:
    """Fitted mixture. ``stddevs`` holds per-dimension standard deviations.

    ``history`` is the mean per-point log-likelihood after initialization and
    after every EM iteration; it is empty for models built by hand or loaded
    from disk.
    """

    weights: np.ndarray
    means: np.ndarray
    stddevs: np.ndarray
    history: Tuple[float, ...] = field(default=(), compare=False)

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64).reshape(-1)
        mu = np.array(self.means, dtype=np.float64)
        sd = np.array(self.stddevs, dtype=np.float64)
        if mu.ndim != 2 or sd.shape != mu.shape or w.shape[0] != mu.shape[0]:
            raise InputError("inconsistent mixture parameter shapes")
        if mu.shape[0] < 1 or mu.shape[1] < 1:
            raise InputError("mixture needs k >= 1 and dim >= 1")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-9:
            raise InputError("mixture weights must be positive and sum to 1")
        if np.any(sd <= 0) or not (np.all(np.isfinite(mu)) and np.all(np.isfinite(sd))):
            raise InputError("stddevs must be positive and parameters finite")
        for a in (w, mu, sd):
            a.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "stddevs", sd)

    @property
    def k(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def to_dict(self):
        return {
            "k": self.k,
            "dim": self.dim,
            "weights": [float(v) for v in self.weights],
            "means": [[float(v) for v in row] for row in self.means],
            "stddevs": [[float(v) for v in row] for row in self.stddevs],
        }

    @classmethod
    def from_dict(cls, d):
        model = cls(d["weights"], d["means"], d["stddevs"])
        if model.k != d["k"] or model.dim != d["dim"]:
            raise InputError("mixture k/dim do not match parameter shapes")
        return model


def _as_data(data, dim=None) -> np.ndarray:
    X = np.asarray(data, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[0] == 0:
        raise InputError("data must be a non-empty (N, dim) array")
    if dim is not None and X.shape[1] != dim:
        raise InputError(f"data dimension {X.shape[1]} does not match model dimension {dim}")
    if not np.all(np.isfinite(X)):
        raise InputError("data must be finite")
    return X


def _log_joint(X, weights, means, variances):
    """(N, k) matrix of log pi_k + log N(x; mu_k, diag(var_k))."""
    N = X.shape[0]
    K = means.shape[0]
    out = np.empty((N, K))
    for j in range(K):
        sq = (X - means[j]) ** 2 / variances[j]
        out[:, j] = math.log(weights[j]) - 0.5 * (
            X.shape[1] * LOG_2PI + np.sum(np.log(variances[j])) + sq.sum(axis=1)
        )
    return out


def _logsumexp_rows(a):
    m = a.max(axis=1)
    return m + np.log(np.exp(a - m[:, None]).sum(axis=1))


def responsibilities(model: GmmModel, x) -> np.ndarray:
    """Posterior component probabilities for one vector (shape (k,)) or a batch (N, k)."""
    single = np.ndim(x) == 1
    X = _as_data(x, model.dim)
    lj = _log_joint(X, model.weights, model.means, model.stddevs ** 2)
    gamma = np.exp(lj - _logsumexp_rows(lj)[:, None])
    return gamma[0] if single else gamma


def log_likelihood(model: GmmModel, data) -> float:
    """Total log-likelihood of ``data`` under the mixture."""
    X = _as_data(data, model.dim)
    lj = _log_joint(X, model.weights, model.means, model.stddevs ** 2)
    return float(_logsumexp_rows(lj).sum())


def _kmeans_pp(X, k, rng):
    N = X.shape[0]
    centers = [int(rng.integers(N))]
    d2 = ((X - X[centers[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = int(rng.choice(N, p=d2 / total))
        else:
            idx = int(rng.integers(N))
        centers.append(idx)
        d2 = np.minimum(d2, ((X - X[idx]) ** 2).sum(axis=1))
    return X[centers].copy()


def fit_gmm(data, k: int, seed: int = 0, max_iter: int = MAX_ITER, tol: float = REL_TOL) -> GmmModel:
    """Fit a k-component diagonal mixture with EM.

    Means are seeded k-means++ style from ``seed``; weights start uniform and
    variances at the global per-dimension variance. Iteration stops when the
    relative change of the mean log-likelihood drops below ``tol`` or after
    ``max_iter`` iterations. Variances are floored at 1e-6 times the global
    per-dimension variance (and at 1e-12).

    The rows are put into lexicographic order before fitting, so the result
    does not depend on the order in which the data is supplied.
    """
    X = _as_data(data)
    N, D = X.shape
    if k < 1:
        raise InputError("k must be at least 1")
    if N < k:
        raise InputError(f"need at least k={k} data points, got {N}")
    X = X[np.lexsort(X.T[::-1])]
    rng = np.random.default_rng(seed)

    global_var = X.var(axis=0)
    floor = np.maximum(VAR_FLOOR_REL * global_var, VAR_FLOOR_ABS)
    init_var = np.maximum(global_var, floor)

    weights = np.full(k, 1.0 / k)
    means = _kmeans_pp(X, k, rng)
    variances = np.tile(init_var, (k, 1))

    lj = _log_joint(X, weights, means, variances)
    lse = _logsumexp_rows(lj)
    history = [float(lse.sum()) / N]
    for it in range(max_iter):
        gamma = np.exp(lj - lse[:, None])
        nk = gamma.sum(axis=0)
        empty = np.flatnonzero(nk < EMPTY_COUNT)
        for j in empty:
            worst = int(np.argmin(gamma.max(axis=1)))
            logger.warning("re-seeding empty mixture component %d from point %d at iteration %d", j, worst, it)
            gamma[worst] = 0.0
            gamma[worst, j] = 1.0
            nk = gamma.sum(axis=0)

        weights = nk / N
        weights = weights / weights.sum()
        means = (gamma.T @ X) / nk[:, None]
        for j in range(k):
            variances[j] = (gamma[:, j] @ (X - means[j]) ** 2) / nk[j]
        variances = np.maximum(variances, floor)
        for j in empty:
            variances[j] = init_var

        lj = _log_joint(X, weights, means, variances)
        lse = _logsumexp_rows(lj)
        ll = float(lse.sum()) / N
        prev = history[-1]
        history.append(ll)
        if abs(ll - prev) < tol * max(abs(prev), 1e-300):
            break

    return GmmModel(weights, means, np.sqrt(variances), history=tuple(history))
