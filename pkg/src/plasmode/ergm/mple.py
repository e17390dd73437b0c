"""Maximum pseudolikelihood estimation of ERGM coefficients."""
from dataclasses import dataclass

import numpy as np

from ..estimators import fit_logistic
from ..exceptions import SeparationError
from . import _kernels
from .terms import KIND_CODES, ErgmModel, term_node_values


@dataclass(frozen=True)
class MpleResult:
    """Fitted model plus naive logistic standard errors.

    ``se_caveat`` is set when the model has dyad-dependent terms, for which
    the logistic standard errors are not valid.
    """

    model: ErgmModel
    se: np.ndarray
    n_iter: int
    se_caveat: bool


def change_stat_matrix(graph, attrs, terms):
    """Change statistics of every dyad (rows in ``i < j`` order) and tie indicators."""
    vals = term_node_values(terms, attrs, graph.n_nodes)
    kinds = np.array([KIND_CODES[t.kind] for t in terms], dtype=np.int64)
    decays = np.array([t.decay or 0.0 for t in terms])
    return _kernels.all_change_stats(graph.adjacency(), kinds, vals, decays)


def mple_fit(graph, attrs, terms, max_iter=100, tol=1e-8):
    """Logistic regression of dyad indicators on their change statistics."""
    terms = tuple(terms)
    names = [t.label for t in terms]
    if graph.n_edges == 0 or graph.n_edges == graph.n_dyads:
        state = "no edges" if graph.n_edges == 0 else "no non-edges"
        offender = next((t.label for t in terms if t.kind == "Edges"), names[0])
        raise SeparationError(f"graph has {state}; {offender} is not estimable", offender)
    X, y = change_stat_matrix(graph, attrs, terms)
    # collapse identical (row, response) pairs into frequency weights
    rows, counts = np.unique(np.column_stack([X, y]), axis=0, return_counts=True)
    fit = fit_logistic(rows[:, :-1], rows[:, -1], max_iter=max_iter, tol=tol,
                       sample_weight=counts, names=names)
    model = ErgmModel(terms, fit.coef)
    return MpleResult(model, fit.se, fit.n_iter, not model.dyad_independent)
