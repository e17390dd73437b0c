"""Working-model fitters and interference-effect estimators (IPW, REG, DR-BC)."""
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.special import expit
from sklearn.base import BaseEstimator

from .estimands import DEFAULT_ALPHAS, DEFAULT_PAIRS
from ._validation import check_alpha
from .exceptions import (
    ConvergenceError,
    DegenerateEstimateError,
    DegenerateInputError,
    RankDeficiencyError,
    SeparationError,
    SpecificationError,
    WeightExplosionError,
)

SEPARATION_BOUND = 30.0


@dataclass
class LogisticFit:
    coef: np.ndarray
    se: np.ndarray
    converged: bool
    n_iter: int
    deviance: float
    names: list = field(default_factory=list)

    def predict_proba(self, X):
        return expit(np.asarray(X, dtype=float) @ self.coef)


@dataclass
class LinearFit:
    coef: np.ndarray
    residual_variance: float
    names: list = field(default_factory=list)
    se: np.ndarray = None

    def predict(self, X):
        return np.asarray(X, dtype=float) @ self.coef


def _names(names, p):
    return list(names) if names is not None else [f"x{k}" for k in range(p)]


def _check_design(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2:
        raise ValueError("design matrix must be 2-D")
    if y.shape != (X.shape[0],):
        raise ValueError(f"response has shape {y.shape}, expected ({X.shape[0]},)")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise ValueError("design and response must be finite")
    return X, y


def _check_rank(X, names):
    rank = np.linalg.matrix_rank(X)
    if rank < X.shape[1]:
        raise RankDeficiencyError(
            f"design has rank {rank} < {X.shape[1]} columns ({', '.join(names)})"
        )


def fit_logistic(X, y, max_iter=100, tol=1e-8, sample_weight=None, names=None):
    """Maximum-likelihood logistic regression by iteratively reweighted least squares.

    Iterates Newton steps (with step halving) until the max-norm of the
    score is at most ``tol``. Raises :class:`SeparationError` for a constant
    response or when a coefficient exceeds 30 in absolute value, :class:`RankDeficiencyError`
    for a rank-deficient design and :class:`ConvergenceError` otherwise.
    """
    X, y = _check_design(X, y)
    n, p = X.shape
    names = _names(names, p)
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValueError("logistic response must be 0/1")
    w = np.ones(n) if sample_weight is None else np.asarray(sample_weight, dtype=float)
    _check_rank(X, names)
    observed = y[w > 0]
    if observed.size and (observed.min() == observed.max()):
        raise SeparationError(f"response is constant ({int(observed[0])}); no finite estimate", names[0])

    def deviance(beta):
        eta = X @ beta
        # log(1 + e^eta) - y*eta, computed stably
        return 2.0 * float(w @ (np.logaddexp(0.0, eta) - y * eta))

    beta = np.zeros(p)
    dev = deviance(beta)
    for it in range(1, max_iter + 1):
        mu = expit(X @ beta)
        score = X.T @ (w * (y - mu))
        if np.max(np.abs(score)) <= tol:
            break
        info = X.T @ (X * (w * mu * (1.0 - mu))[:, None])
        try:
            step = np.linalg.solve(info, score)
        except np.linalg.LinAlgError:
            k = int(np.argmax(np.abs(beta)))
            raise SeparationError(f"information matrix singular; term {names[k]!r} diverges", names[k])
        t = 1.0
        while True:
            cand = beta + t * step
            new_dev = deviance(cand)
            if new_dev <= dev + 1e-12 * max(1.0, abs(dev)) or t < 1e-8:
                break
            t *= 0.5
        beta, dev = cand, new_dev
        if np.max(np.abs(beta)) > SEPARATION_BOUND:
            k = int(np.argmax(np.abs(beta)))
            raise SeparationError(
                f"perfect separation: coefficient of {names[k]!r} reached {beta[k]:.3g}", names[k]
            )
    else:
        mu = expit(X @ beta)
        score = X.T @ (w * (y - mu))
        if np.max(np.abs(score)) > tol:
            raise ConvergenceError(f"IRLS did not converge in {max_iter} iterations")
        it = max_iter
    mu = expit(X @ beta)
    info = X.T @ (X * (w * mu * (1.0 - mu))[:, None])
    se = np.sqrt(np.diag(np.linalg.inv(info)))
    return LogisticFit(beta, se, True, it, dev, names)


def fit_linear(X, y, names=None):
    """Ordinary least squares via a QR decomposition."""
    X, y = _check_design(X, y)
    n, p = X.shape
    names = _names(names, p)
    q, r = np.linalg.qr(X)
    diag = np.abs(np.diag(r))
    if p and (diag.min() <= 1e-10 * max(diag.max(), 1.0)):
        raise RankDeficiencyError(f"design is rank deficient ({', '.join(names)})")
    coef = np.linalg.solve(r, q.T @ y)
    resid = y - X @ coef
    dof = n - p
    sigma2 = float(resid @ resid) / dof if dof > 0 else 0.0
    rinv = np.linalg.inv(r)
    se = np.sqrt(np.maximum(sigma2 * np.sum(rinv**2, axis=1), 0.0))
    return LinearFit(coef, max(sigma2, 0.0), names, se)


# ---------------------------------------------------------------------------
# Interference estimators
# ---------------------------------------------------------------------------

METHODS = ("IPW", "REG", "DR-BC")
ESTIMATOR_VARIANT = "fixed-effects-working-models"
SCENARIOS = {
    "none": (),
    "regular": ("Father",),
    "homophily": ("Race",),
}
WEIGHT_EPS = 1e-12


def apply_scenario(covariates, omit):
    """Covariate list with the scenario's omitted columns removed."""
    omit = set(omit)
    return tuple(c for c in covariates if c not in omit)


def covariate_design(table, covariates):
    """Design columns for ``covariates``: level indicators (first level as
    baseline) for categorical columns, raw values for numeric ones."""
    cols, names = [], []
    for name in covariates:
        if name not in table:
            raise SpecificationError(f"covariate {name!r} missing from node table")
        if table.is_categorical(name):
            codes = table.codes(name)
            for c, level in enumerate(table.levels_of(name)[1:], start=1):
                cols.append((codes == c).astype(float))
                names.append(f"{name}={level}")
        else:
            cols.append(np.asarray(table[name], dtype=float))
            names.append(name)
    n = table.n_nodes
    X = np.column_stack(cols) if cols else np.empty((n, 0))
    return X, names


def _drop_empty_indicators(X, names):
    """Remove indicator columns that are identically zero in the pooled data
    (a level that never occurs has no estimable coefficient)."""
    keep = [k for k in range(X.shape[1]) if "=" not in names[k] or X[:, k].any()]
    return X[:, keep], [names[k] for k in keep]


@dataclass
class EstimateSet:
    """Estimated DE(alpha), IE(alpha, alpha') and average potential outcomes."""

    method: str
    scenario: str
    de: dict
    ie: dict
    apo: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "method": self.method,
            "scenario": self.scenario,
            "DE": {f"{a:g}": v for a, v in self.de.items()},
            "IE": {f"{a:g},{b:g}": v for (a, b), v in self.ie.items()},
            "metadata": dict(self.metadata),
        }


class _School:
    """Per-school arrays shared by all three estimators."""

    def __init__(self, school):
        graph = school.graph
        self.n = graph.n_nodes
        if self.n == 0:
            raise DegenerateInputError("empty school")
        self.z = school.z.astype(float)
        self.y = np.asarray(school.y, dtype=float)
        self.deg = graph.degrees().astype(float)
        rows, cols = [], []
        for i, j in graph.edges():
            rows += [i, j]
            cols += [j, i]
        self.adj = sparse.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(self.n, self.n))
        self.s = self.adj @ self.z
        self.prop = np.divide(self.s, self.deg, out=np.zeros(self.n), where=self.deg > 0)
        self.table = school.table


class WorkingModels:
    """Pooled propensity and outcome working models for a set of schools.

    Propensity: logistic ``P(Z=1 | X)`` without school effects. Outcome: OLS
    of ``Y`` on ``(1, Z, p, Z*p, X)`` with ``p`` the proportion of treated
    neighbours (0 for isolates).
    """

    def __init__(self, schools, propensity_covariates=(), outcome_covariates=(),
                 fit_propensity=True, fit_outcome=True, propensity_scores=None):
        self.schools = [_School(s) for s in schools]
        if not self.schools:
            raise DegenerateInputError("no schools")
        self.propensity_covariates = tuple(propensity_covariates)
        self.outcome_covariates = tuple(outcome_covariates)
        self.propensity = None
        if propensity_scores is not None:
            self._set_propensity(propensity_scores)
        elif fit_propensity:
            self.propensity = self._fit_propensity()
        self.outcome = self._fit_outcome() if fit_outcome else None

    def _set_propensity(self, scores):
        """Use known propensities (one array per school) instead of a fitted model."""
        if len(scores) != len(self.schools):
            raise ValueError("need one propensity array per school")
        for s, p in zip(self.schools, scores):
            p = np.broadcast_to(np.asarray(p, dtype=float), (s.n,)).copy()
            if np.any(p < WEIGHT_EPS) or np.any(p > 1 - WEIGHT_EPS):
                raise WeightExplosionError("propensity within 1e-12 of 0 or 1")
            s.phat = p

    def _fit_propensity(self):
        blocks = [covariate_design(s.table, self.propensity_covariates) for s in self.schools]
        names = ["(Intercept)"] + blocks[0][1]
        X = np.vstack([np.column_stack([np.ones(s.n), b[0]]) for s, b in zip(self.schools, blocks)])
        X, names = _drop_empty_indicators(X, names)
        z = np.concatenate([s.z for s in self.schools])
        fit = fit_logistic(X, z, names=names)
        p = fit.predict_proba(X)
        if np.any(p < WEIGHT_EPS) or np.any(p > 1 - WEIGHT_EPS):
            raise WeightExplosionError("fitted propensity within 1e-12 of 0 or 1")
        offsets = np.cumsum([0] + [s.n for s in self.schools])
        for k, s in enumerate(self.schools):
            s.phat = p[offsets[k]:offsets[k + 1]]
        return fit

    def _fit_outcome(self):
        blocks = [covariate_design(s.table, self.outcome_covariates) for s in self.schools]
        names = ["(Intercept)", "Z", "prop_treated", "Z:prop_treated"] + blocks[0][1]
        X = np.vstack([
            np.column_stack([np.ones(s.n), s.z, s.prop, s.z * s.prop, b[0]])
            for s, b in zip(self.schools, blocks)
        ])
        X, names = _drop_empty_indicators(X, names)
        y = np.concatenate([s.y for s in self.schools])
        fit = fit_linear(X, y, names=names)
        offsets = np.cumsum([0] + [s.n for s in self.schools])
        cov_idx = [k for k, nm in enumerate(names) if k >= 4]
        for k, s in enumerate(self.schools):
            rows = X[offsets[k]:offsets[k + 1]]
            s.mhat = rows @ fit.coef
            # part of the prediction that does not involve (Z, p)
            s.mbase = fit.coef[0] + rows[:, cov_idx] @ fit.coef[cov_idx]
        return fit

    # -- ingredients ------------------------------------------------------
    def weights(self, school, z, alpha):
        """IPW weights ``w_i(z; alpha)`` for one school (empty product = 1)."""
        alpha = check_alpha(alpha)
        zi = school.z
        own = np.where(zi == 1, school.phat, 1.0 - school.phat)
        log_ratio = np.where(zi == 1, np.log(alpha), np.log1p(-alpha)) - np.log(own)
        w = np.where(zi == z, 1.0 / own, 0.0) * np.exp(school.adj @ log_ratio)
        return w

    def reg_prediction(self, school, z, alpha):
        """``sum_s pmf(s; d, alpha) * m(z, s/d, x)``; the working model is
        linear in ``s/d`` and ``E[s/d] = alpha`` for ``d > 0``."""
        b = self.outcome.coef
        p = np.where(school.deg > 0, alpha, 0.0)
        return school.mbase + b[1] * z + (b[2] + b[3] * z) * p

    def _school_weights(self, school, z, alpha, normalize):
        w = self.weights(school, z, alpha)
        if normalize:
            mean_w = w.mean()
            if mean_w <= 0:
                raise DegenerateEstimateError(f"no nodes with Z={z} in a school; cannot normalise weights")
            w = w / mean_w
        return w

    def apo(self, method, z, alpha, normalize=False):
        """School-mean-of-node-means estimate of the average potential outcome."""
        vals = []
        any_weight = False
        for s in self.schools:
            if method == "REG":
                vals.append(self.reg_prediction(s, z, alpha).mean())
                continue
            w = self._school_weights(s, z, alpha, normalize)
            any_weight |= bool(np.any(w > 0))
            if method == "IPW":
                vals.append(np.mean(w * s.y))
            elif method == "DR-BC":
                vals.append(self.reg_prediction(s, z, alpha).mean() + np.mean(w * (s.y - s.mhat)))
            else:
                raise ValueError(f"unknown method {method!r}")
        if method != "REG" and not any_weight:
            raise DegenerateEstimateError(f"all weights are zero for the Z={z} arm")
        return float(np.mean(vals))

    def estimate(self, method, alphas=DEFAULT_ALPHAS, pairs=DEFAULT_PAIRS, scenario="none",
                 normalize=False):
        alphas = tuple(float(a) for a in alphas)
        pairs = tuple((float(a), float(b)) for a, b in pairs)
        needed = sorted(set(alphas) | {a for p in pairs for a in p})
        apo = {(z, a): self.apo(method, z, a, normalize) for z in (0, 1) for a in needed}
        de = {a: apo[(1, a)] - apo[(0, a)] for a in alphas}
        ie = {(a, b): apo[(0, a)] - apo[(0, b)] for a, b in pairs}
        meta = {"estimator_variant": ESTIMATOR_VARIANT, "normalize_weights": bool(normalize)}
        return EstimateSet(method, scenario, de, ie, apo, meta)


def _estimate(method, schools, propensity_covariates, outcome_covariates, alphas, pairs,
              scenario, normalize_weights):
    models = WorkingModels(
        schools, propensity_covariates, outcome_covariates,
        fit_propensity=method != "REG", fit_outcome=method != "IPW",
    )
    return models.estimate(method, alphas, pairs, scenario, normalize_weights)


def ipw_estimate(schools, covariates=(), alphas=DEFAULT_ALPHAS, pairs=DEFAULT_PAIRS,
                 scenario="none", normalize_weights=False, propensity_scores=None):
    """Inverse-probability-weighted estimates with a pooled logistic propensity
    (or known ``propensity_scores``, one array per school)."""
    models = WorkingModels(schools, covariates, (), fit_outcome=False, propensity_scores=propensity_scores)
    return models.estimate("IPW", alphas, pairs, scenario, normalize_weights)


def reg_estimate(schools, covariates=(), alphas=DEFAULT_ALPHAS, pairs=DEFAULT_PAIRS, scenario="none"):
    """Outcome-regression estimates averaged over the allocation distribution."""
    return _estimate("REG", schools, (), covariates, alphas, pairs, scenario, False)


def dr_estimate(schools, propensity_covariates=(), outcome_covariates=(), alphas=DEFAULT_ALPHAS,
                pairs=DEFAULT_PAIRS, scenario="none", normalize_weights=False):
    """Regression estimates plus weighted residual correction (DR-BC)."""
    return _estimate("DR-BC", schools, propensity_covariates, outcome_covariates, alphas, pairs,
                     scenario, normalize_weights)


class _InterferenceEstimator(BaseEstimator):
    method = None

    def __init__(self, propensity_covariates=(), outcome_covariates=(), alphas=DEFAULT_ALPHAS,
                 pairs=DEFAULT_PAIRS, normalize_weights=False):
        self.propensity_covariates = propensity_covariates
        self.outcome_covariates = outcome_covariates
        self.alphas = alphas
        self.pairs = pairs
        self.normalize_weights = normalize_weights

    def fit(self, schools):
        self.models_ = WorkingModels(
            schools, self.propensity_covariates, self.outcome_covariates,
            fit_propensity=self.method != "REG", fit_outcome=self.method != "IPW",
        )
        self.estimates_ = self.models_.estimate(self.method, self.alphas, self.pairs,
                                                normalize=self.normalize_weights)
        self.de_ = self.estimates_.de
        self.ie_ = self.estimates_.ie
        return self

    def apo(self, z, alpha):
        return self.models_.apo(self.method, z, alpha, self.normalize_weights)


class IPWEstimator(_InterferenceEstimator):
    """IPW estimator of DE(alpha) and IE(alpha, alpha'); uses ``propensity_covariates``."""

    method = "IPW"


class REGEstimator(_InterferenceEstimator):
    """Regression estimator; uses ``outcome_covariates``."""

    method = "REG"


class DREstimator(_InterferenceEstimator):
    """Doubly robust, bias-corrected estimator; uses both covariate sets."""

    method = "DR-BC"
