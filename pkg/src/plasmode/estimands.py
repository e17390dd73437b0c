"""Causal estimands under Bernoulli allocation strategies."""
from dataclasses import dataclass, field
from math import comb

import numpy as np
from scipy.stats import binom

from ._validation import check_alpha
from .exceptions import DegenerateInputError

DEFAULT_ALPHAS = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
DEFAULT_PAIRS = ((0.5, 0.2), (0.8, 0.2), (0.8, 0.5))


def allocation_pmf(s, d, alpha):
    """Probability that ``s`` of ``d`` neighbours are treated under allocation ``alpha``."""
    alpha = check_alpha(alpha)
    if not 0 <= s <= d:
        raise ValueError(f"s={s} must lie in [0, d={d}]")
    return comb(d, s) * alpha**s * (1.0 - alpha) ** (d - s)


def individual_apo(oracle, node, z, alpha):
    """Average potential outcome of ``node`` with own exposure ``z`` under ``alpha``."""
    alpha = check_alpha(alpha)
    if z not in (0, 1):
        raise ValueError("z must be 0 or 1")
    d = int(oracle.degrees[node])
    return sum(oracle(node, z, s) * allocation_pmf(s, d, alpha) for s in range(d + 1))


def individual_effects(oracle, node, alpha, alpha_prime):
    """Individual direct effect at ``alpha`` and indirect effect of ``alpha`` vs ``alpha_prime``."""
    y0 = individual_apo(oracle, node, 0, alpha)
    de = individual_apo(oracle, node, 1, alpha) - y0
    ie = y0 - individual_apo(oracle, node, 0, alpha_prime)
    return de, ie


def apo_vector(oracle, z, alpha):
    """``individual_apo`` for every node at once, grouped by degree."""
    alpha = check_alpha(alpha)
    deg = oracle.degrees
    out = np.zeros(oracle.n_nodes)
    zs = np.full(oracle.n_nodes, z)
    for d in np.unique(deg):
        nodes = np.flatnonzero(deg == d)
        s = np.arange(d + 1)
        w = binom.pmf(s, d, alpha)
        for sk, wk in zip(s, w):
            # evaluate everywhere with s capped at each node's degree; keep this group
            out[nodes] += wk * oracle.values(zs, np.minimum(sk, deg))[nodes]
    return out


@dataclass
class EffectTruth:
    """True direct and indirect effects, per school and for the population.

    Population values are unweighted means of the school-level node means.
    """

    alphas: tuple
    pairs: tuple
    de: dict = field(default_factory=dict)
    ie: dict = field(default_factory=dict)
    school_de: dict = field(default_factory=dict)
    school_ie: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "DE": {f"{a:g}": v for a, v in self.de.items()},
            "IE": {f"{a:g},{b:g}": v for (a, b), v in self.ie.items()},
        }


def population_truth(schools, alphas=DEFAULT_ALPHAS, pairs=DEFAULT_PAIRS):
    """Ground-truth DE(alpha) and IE(alpha, alpha') for a list of schools."""
    schools = list(schools)
    if not schools:
        raise DegenerateInputError("no schools")
    alphas = tuple(float(a) for a in alphas)
    pairs = tuple((float(a), float(b)) for a, b in pairs)
    needed = sorted(set(alphas) | {a for p in pairs for a in p})
    school_de = {a: [] for a in alphas}
    school_ie = {p: [] for p in pairs}
    for school in schools:
        oracle = school.oracle if hasattr(school, "oracle") else school
        if oracle.n_nodes == 0:
            raise DegenerateInputError("empty school")
        apo = {(z, a): apo_vector(oracle, z, a) for z in (0, 1) for a in needed}
        for a in alphas:
            school_de[a].append(float(np.mean(apo[(1, a)] - apo[(0, a)])))
        for a, b in pairs:
            school_ie[(a, b)].append(float(np.mean(apo[(0, a)] - apo[(0, b)])))
    return EffectTruth(
        alphas,
        pairs,
        {a: float(np.mean(v)) for a, v in school_de.items()},
        {p: float(np.mean(v)) for p, v in school_ie.items()},
        school_de,
        school_ie,
    )
