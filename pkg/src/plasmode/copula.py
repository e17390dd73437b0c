"""Gaussian-copula synthesis of ordinal categorical attributes.

Released inputs are per-variable marginal distributions and a Spearman rank
correlation matrix. Each pair's target is mapped to the latent Gaussian
correlation that reproduces it after discretisation, the assembled matrix is
repaired to be positive definite, and samples are drawn by thresholding a
multivariate normal at the marginal cutpoints.
"""
import json
import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import ndtri
from sklearn.base import BaseEstimator

from ._validation import check_correlation_matrix, check_count, check_probabilities, check_seed
from .exceptions import DegenerateInputError, InfeasibleCorrelationError, PlasmodeError
from .graph import NodeTable

BRACKET = (-1.0 + 1e-6, 1.0 - 1e-6)
MAX_BISECTION = 200
EIGEN_FLOOR = 1e-8
REPAIR_WARN = 0.05


# --- bivariate normal ----------------------------------------------------

@lru_cache(maxsize=None)
def _gauss_legendre_half(n_points):
    """Negative-half Gauss-Legendre nodes and weights on [-1, 1]."""
    x, w = np.polynomial.legendre.leggauss(2 * n_points)
    return tuple(x[:n_points]), tuple(w[:n_points])


def _phi(x):
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def _bvn_upper(h, k, r):
    """P(X > h, Y > k) for correlation |r| < 1 (Drezner-Wesolowsky/Genz scheme)."""
    if abs(r) < 0.3:
        ng = 3
    elif abs(r) < 0.75:
        ng = 6
    else:
        ng = 10
    xs, ws = _gauss_legendre_half(ng)
    hk = h * k
    if abs(r) < 0.925:
        hs = (h * h + k * k) / 2.0
        asr = math.asin(r)
        total = 0.0
        for x, w in zip(xs, ws):
            for sign in (-1.0, 1.0):
                sn = math.sin(asr * (sign * x + 1.0) / 2.0)
                total += w * math.exp((sn * hk - hs) / (1.0 - sn * sn))
        return total * asr / (4.0 * math.pi) + _phi(-h) * _phi(-k)
    if r < 0:
        k = -k
        hk = -hk
    bvn = 0.0
    if abs(r) < 1.0:
        a2 = (1.0 - r) * (1.0 + r)
        a = math.sqrt(a2)
        bs = (h - k) ** 2
        c = (4.0 - hk) / 8.0
        d = (12.0 - hk) / 16.0
        bvn = a * math.exp(-(bs / a2 + hk) / 2.0) * (
            1.0 - c * (bs - a2) * (1.0 - d * bs / 5.0) / 3.0 + c * d * a2 * a2 / 5.0
        )
        if hk > -160.0:
            b = math.sqrt(bs)
            bvn -= (math.exp(-hk / 2.0) * math.sqrt(2.0 * math.pi) * _phi(-b / a)
                    * b * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0))
        a /= 2.0
        for x, w in zip(xs, ws):
            for sign in (-1.0, 1.0):
                xs2 = (a * (sign * x + 1.0)) ** 2
                rs = math.sqrt(1.0 - xs2)
                bvn += a * w * (
                    math.exp(-bs / (2.0 * xs2) - hk / (1.0 + rs)) / rs
                    - math.exp(-(bs / xs2 + hk) / 2.0) * (1.0 + c * xs2 * (1.0 + d * xs2))
                )
        bvn = -bvn / (2.0 * math.pi)
    if r > 0:
        return bvn + _phi(-max(h, k))
    return -bvn + max(0.0, _phi(-h) - _phi(-k))


def bvn_cdf(h, k, rho):
    """P(U <= h, V <= k) for a standard bivariate normal with correlation ``rho``.

    Infinite limits and ``rho = +-1`` are handled exactly; ``|rho| > 1``
    raises ``ValueError``.
    """
    h, k, rho = float(h), float(k), float(rho)
    if not -1.0 <= rho <= 1.0:
        raise ValueError(f"correlation must lie in [-1, 1], got {rho}")
    if h == -math.inf or k == -math.inf:
        return 0.0
    if h == math.inf:
        return _phi(k)
    if k == math.inf:
        return _phi(h)
    if rho == 1.0:
        return _phi(min(h, k))
    if rho == -1.0:
        return max(0.0, _phi(h) + _phi(k) - 1.0)
    p = _bvn_upper(-h, -k, rho)
    return min(max(p, 0.0), 1.0)


# --- marginals and implied rank correlation ------------------------------

@dataclass(frozen=True)
class MarginalSpec:
    name: str
    levels: tuple
    probs: tuple

    def __post_init__(self):
        probs = check_probabilities(self.probs, f"marginal {self.name!r}")
        if len(self.levels) != probs.size:
            raise ValueError(f"marginal {self.name!r}: {len(self.levels)} levels but {probs.size} probabilities")
        object.__setattr__(self, "levels", tuple(str(x) for x in self.levels))
        object.__setattr__(self, "probs", tuple(float(p) for p in probs))

    def cutpoints(self):
        """Normal quantiles of the cumulative probabilities, with -inf/+inf ends."""
        cum = np.cumsum(self.probs)[:-1]
        return np.concatenate([[-np.inf], ndtri(np.clip(cum, 0.0, 1.0)), [np.inf]])

    def midrank_scores(self):
        p = np.asarray(self.probs)
        return np.cumsum(p) - p / 2.0


def cell_probabilities(marg_i, marg_j, rho):
    """Joint level probabilities of two discretised correlated normals."""
    ci, cj = marg_i.cutpoints(), marg_j.cutpoints()
    grid = np.array([[bvn_cdf(a, b, rho) for b in cj] for a in ci])
    cells = grid[1:, 1:] - grid[:-1, 1:] - grid[1:, :-1] + grid[:-1, :-1]
    return np.clip(cells, 0.0, None)


def spearman_from_table(cells, marg_i, marg_j):
    """Spearman correlation of a joint table using mid-rank scores."""
    si, sj = marg_i.midrank_scores(), marg_j.midrank_scores()
    pi, pj = np.asarray(marg_i.probs), np.asarray(marg_j.probs)
    mi, mj = pi @ si, pj @ sj
    var_i = pi @ (si - mi) ** 2
    var_j = pj @ (sj - mj) ** 2
    if var_i <= 0 or var_j <= 0:
        raise DegenerateInputError("a marginal puts all mass on one level")
    cov = (si - mi) @ cells @ (sj - mj)
    return float(cov / math.sqrt(var_i * var_j))


def implied_spearman(marg_i, marg_j, rho_gauss):
    """Spearman correlation induced by latent Gaussian correlation ``rho_gauss``."""
    return spearman_from_table(cell_probabilities(marg_i, marg_j, rho_gauss), marg_i, marg_j)


def attainable_range(marg_i, marg_j):
    """Spearman correlations at the counter- and co-monotone limits."""
    return implied_spearman(marg_i, marg_j, -1.0), implied_spearman(marg_i, marg_j, 1.0)


def solve_pair(marg_i, marg_j, target, tol=1e-3):
    """Bisection for the latent correlation matching ``target``; returns (rho, residual)."""
    lo_val, hi_val = attainable_range(marg_i, marg_j)
    if target < lo_val - tol or target > hi_val + tol:
        raise InfeasibleCorrelationError(
            f"target Spearman {target:.4g} for ({marg_i.name}, {marg_j.name}) is outside "
            f"the attainable range [{lo_val:.4f}, {hi_val:.4f}]",
            pair=(marg_i.name, marg_j.name),
            attainable=(lo_val, hi_val),
        )
    if target == 0.0:
        return 0.0, 0.0
    lo, hi = BRACKET
    rho = 0.0
    resid = math.inf
    for _ in range(MAX_BISECTION):
        rho = 0.5 * (lo + hi)
        resid = implied_spearman(marg_i, marg_j, rho) - target
        # refine well past tol so the rounding of rho stays negligible
        if abs(resid) <= 1e-3 * tol:
            break
        if resid < 0:
            lo = rho
        else:
            hi = rho
        if hi - lo < 1e-12:
            break
    return rho, resid


# --- synthesis parameters and intermediate correlation --------------------

@dataclass(frozen=True)
class SynthesisParams:
    marginals: tuple
    target_spearman: np.ndarray = field(repr=False)
    source: str = ""

    def __post_init__(self):
        margs = tuple(m if isinstance(m, MarginalSpec) else MarginalSpec(**m) for m in self.marginals)
        mat = check_correlation_matrix(self.target_spearman, "target Spearman matrix").copy()
        if mat.shape[0] != len(margs):
            raise ValueError(f"Spearman matrix is {mat.shape[0]}x{mat.shape[0]} for {len(margs)} marginals")
        names = [m.name for m in margs]
        if len(set(names)) != len(names):
            raise ValueError("marginal names must be unique")
        mat.setflags(write=False)
        object.__setattr__(self, "marginals", margs)
        object.__setattr__(self, "target_spearman", mat)

    @property
    def names(self):
        return [m.name for m in self.marginals]

    def drop(self, names):
        """Parameters without the given variables (rows and columns removed)."""
        names = set(names)
        keep = [k for k, m in enumerate(self.marginals) if m.name not in names]
        return SynthesisParams(
            tuple(self.marginals[k] for k in keep),
            self.target_spearman[np.ix_(keep, keep)],
            self.source,
        )

    def to_dict(self):
        return {
            "source": self.source,
            "marginals": [
                {"name": m.name, "levels": list(m.levels), "probs": list(m.probs)} for m in self.marginals
            ],
            "spearman": self.target_spearman.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        margs = tuple(MarginalSpec(m["name"], tuple(m["levels"]), tuple(m["probs"])) for m in d["marginals"])
        return cls(margs, np.asarray(d["spearman"], dtype=float), d.get("source", ""))


def read_synthesis_params(path):
    with open(path) as fh:
        return SynthesisParams.from_dict(json.load(fh))


@dataclass(frozen=True)
class IntermediateCorr:
    """Latent Gaussian correlation after positive-definite repair.

    ``raw`` is the pairwise bisection result, ``matrix`` the repaired
    matrix, ``residuals`` the per-pair Spearman residuals at the raw
    solution and ``repair_delta`` the Frobenius norm of ``matrix - raw``.
    """

    matrix: np.ndarray
    raw: np.ndarray
    residuals: np.ndarray
    repair_delta: float
    names: tuple = ()

    def adjusted_pairs(self, threshold=1e-3):
        """Pairs whose latent correlation moved more than ``threshold`` in repair."""
        diff = np.abs(self.matrix - self.raw)
        n = diff.shape[0]
        return [
            (self.names[i], self.names[j], float(diff[i, j]))
            for i in range(n) for j in range(i + 1, n) if diff[i, j] > threshold
        ]


def nearest_correlation(mat, floor=EIGEN_FLOOR):
    """Clip eigenvalues at ``floor`` and rescale to a unit diagonal."""
    vals, vecs = np.linalg.eigh((mat + mat.T) / 2.0)
    if vals.min() >= floor:
        return mat.copy()
    fixed = (vecs * np.maximum(vals, floor)) @ vecs.T
    scale = 1.0 / np.sqrt(np.diag(fixed))
    fixed = fixed * scale[:, None] * scale[None, :]
    np.fill_diagonal(fixed, 1.0)
    return (fixed + fixed.T) / 2.0


def solve_intermediate(params, tol=1e-3):
    """Latent correlation matrix reproducing every pairwise Spearman target."""
    m = len(params.marginals)
    raw = np.eye(m)
    resid = np.zeros((m, m))
    for i in range(m):
        for j in range(i + 1, m):
            target = float(params.target_spearman[i, j])
            rho, r = solve_pair(params.marginals[i], params.marginals[j], target, tol)
            raw[i, j] = raw[j, i] = rho
            resid[i, j] = resid[j, i] = r
    repaired = nearest_correlation(raw)
    delta = float(np.linalg.norm(repaired - raw))
    if delta > REPAIR_WARN:
        warnings.warn(
            f"positive-definite repair changed the latent correlation by {delta:.3f} (Frobenius)",
            RuntimeWarning,
            stacklevel=2,
        )
    return IntermediateCorr(repaired, raw, resid, delta, tuple(params.names))


def sample(params, intermediate, n, seed=None):
    """Draw ``n`` rows of categorical attributes as a :class:`NodeTable`."""
    check_count(n, "n", 0)
    mat = np.asarray(intermediate.matrix)
    if mat.shape[0] != len(params.marginals):
        raise ValueError("intermediate correlation does not match the synthesis parameters")
    try:
        chol = np.linalg.cholesky(mat)
    except np.linalg.LinAlgError as exc:
        raise PlasmodeError(f"Cholesky factorisation failed after repair: {exc}") from exc
    rng = np.random.default_rng(check_seed(seed))
    latent = rng.standard_normal((n, mat.shape[0])) @ chol.T
    columns, levels = {}, {}
    for k, marg in enumerate(params.marginals):
        cuts = marg.cutpoints()[1:-1]
        columns[marg.name] = np.searchsorted(cuts, latent[:, k], side="left")
        levels[marg.name] = marg.levels
    return NodeTable(columns, levels)


def bootstrap_rows(table, n, seed=None):
    """Resample ``n`` whole rows of ``table`` with replacement."""
    check_count(n, "n", 0)
    if table.n_nodes == 0:
        raise DegenerateInputError("cannot bootstrap an empty table")
    rng = np.random.default_rng(check_seed(seed))
    return table.take(rng.integers(0, table.n_nodes, size=n))


class GaussianCopulaSynthesizer(BaseEstimator):
    """Estimator-style front end: ``fit`` solves the latent correlation, ``sample`` draws.

    Parameters
    ----------
    params : SynthesisParams
    tol : float
        Absolute tolerance on each pair's Spearman residual.
    random_state : int, optional
    """

    def __init__(self, params, tol=1e-3, random_state=None):
        self.params = params
        self.tol = tol
        self.random_state = random_state

    def fit(self, X=None, y=None):
        self.intermediate_ = solve_intermediate(self.params, self.tol)
        self.correlation_ = self.intermediate_.matrix
        self.repair_delta_ = self.intermediate_.repair_delta
        return self

    def sample(self, n, random_state=None):
        if not hasattr(self, "intermediate_"):
            self.fit()
        seed = self.random_state if random_state is None else random_state
        return sample(self.params, self.intermediate_, n, seed)
