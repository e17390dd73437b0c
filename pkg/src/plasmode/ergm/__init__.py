"""Exponential random graph models: statistics, sampling, MPLE and GOF."""
import numpy as np
from sklearn.base import BaseEstimator

from ..exceptions import SpecificationError
from .gof import GofReport, gof
from .mple import MpleResult, change_stat_matrix, mple_fit
from .sampler import SamplerConfig, simulate, state_trace
from .terms import (
    TERM_KINDS,
    ErgmModel,
    TermSpec,
    change_statistics,
    read_model,
    read_terms,
    statistics,
    validate_terms,
    write_model,
)

__all__ = [
    "ERGM",
    "ErgmModel",
    "GofReport",
    "MpleResult",
    "SamplerConfig",
    "TERM_KINDS",
    "TermSpec",
    "change_stat_matrix",
    "change_statistics",
    "gof",
    "mple_fit",
    "read_model",
    "read_terms",
    "simulate",
    "state_trace",
    "statistics",
    "validate_terms",
    "write_model",
]


class ERGM(BaseEstimator):
    """Estimator-style wrapper: ``fit`` by MPLE, then ``simulate`` or ``gof``.

    Parameters
    ----------
    terms : sequence of TermSpec
        Model terms, in coefficient order.
    theta : array-like, optional
        Known coefficients (e.g. released estimates). When given, the model
        can simulate without calling ``fit``.
    burn_in, thin, proposal
        Passed to :class:`SamplerConfig`.
    random_state : int, optional
        Seed for simulation.
    """

    def __init__(self, terms, theta=None, burn_in=None, thin=None, proposal="tnt", random_state=None):
        self.terms = terms
        self.theta = theta
        self.burn_in = burn_in
        self.thin = thin
        self.proposal = proposal
        self.random_state = random_state

    def fit(self, graph, attrs=None):
        result = mple_fit(graph, attrs, self.terms)
        self.model_ = result.model
        self.coef_ = result.model.theta
        self.bse_ = result.se
        self.se_caveat_ = result.se_caveat
        self.n_iter_ = result.n_iter
        return self

    def _model(self):
        if hasattr(self, "model_"):
            return self.model_
        if self.theta is None:
            raise SpecificationError("ERGM has neither been fitted nor given theta")
        return ErgmModel(tuple(self.terms), self.theta)

    def _config(self, random_state):
        seed = self.random_state if random_state is None else random_state
        return SamplerConfig(self.burn_in, self.thin, self.proposal, seed)

    def statistics(self, graph, attrs=None):
        return statistics(graph, attrs, self.terms)

    def simulate(self, attrs, n_nodes=None, n_draws=None, random_state=None):
        if n_nodes is None:
            if attrs is None:
                raise ValueError("n_nodes is required when attrs is None")
            n_nodes = attrs.n_nodes
        return simulate(self._model(), attrs, n_nodes, self._config(random_state), n_draws=n_draws)

    def gof(self, reference, attrs=None, n_sims=100, random_state=None):
        return gof(self._model(), attrs, reference, n_sims, self._config(random_state))

    def score(self, graph, attrs=None):
        """Unnormalised log-probability ``theta . g(graph)``."""
        return float(np.dot(self._model().theta, statistics(graph, attrs, self.terms)))
