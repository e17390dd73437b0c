"""Goodness-of-fit envelopes for degree and shared-partner distributions."""
from dataclasses import dataclass

import numpy as np

from .._validation import check_count
from ..graph import degree_distribution, shared_partner_counts
from .sampler import SamplerConfig, simulate

GOF_STATISTICS = ("degree", "esp", "dsp")
QUANTILES = (0.05, 0.5, 0.95)


def distributions(graph):
    """Degree, edgewise and dyadwise shared-partner count vectors.

    Degree bins run over ``0..n-1``; shared-partner bins over ``0..n-2``.
    """
    n = graph.n_nodes
    deg = np.zeros(max(n, 1))
    for d, c in degree_distribution(graph).items():
        deg[d] = c
    ep, dp = shared_partner_counts(graph)
    esp = np.zeros(max(n - 1, 1))
    dsp = np.zeros(max(n - 1, 1))
    for k, c in ep.items():
        esp[k] = c
    for k, c in dp.items():
        dsp[k] = c
    return {"degree": deg, "esp": esp, "dsp": dsp}


@dataclass
class GofReport:
    """Observed distributions with simulation envelopes.

    ``simulated[stat]`` has shape ``(n_sims, n_bins)``; ``quantiles[stat]``
    has rows for the 5%, 50% and 95% simulation quantiles.
    """

    n_sims: int
    observed: dict
    simulated: dict
    quantiles: dict

    def occupied_bins(self, stat):
        return (self.observed[stat] > 0) | (self.simulated[stat] > 0).any(axis=0)

    def inside(self, stat):
        """Boolean per bin: observed value inside the [5%, 95%] envelope."""
        lo, _, hi = self.quantiles[stat]
        obs = self.observed[stat]
        return (obs >= lo) & (obs <= hi)

    def coverage(self, stat):
        """Fraction of occupied bins whose observed value lies in the envelope."""
        occ = self.occupied_bins(stat)
        if not occ.any():
            return 1.0
        return float(self.inside(stat)[occ].mean())

    def to_dict(self):
        out = {"n_sims": self.n_sims}
        for stat in GOF_STATISTICS:
            occ = np.flatnonzero(self.occupied_bins(stat))
            last = int(occ.max()) + 1 if occ.size else 1
            lo, mid, hi = self.quantiles[stat]
            out[stat] = {
                "observed": self.observed[stat][:last].tolist(),
                "q05": lo[:last].tolist(),
                "q50": mid[:last].tolist(),
                "q95": hi[:last].tolist(),
                "coverage": self.coverage(stat),
            }
        return out


def gof(model, attrs, reference, n_sims=100, cfg=None):
    """Simulate ``n_sims`` graphs and compare their distributions with ``reference``."""
    check_count(n_sims, "n_sims", 1)
    cfg = cfg or SamplerConfig()
    draws = simulate(model, attrs, reference.n_nodes, cfg, n_draws=n_sims)
    observed = distributions(reference)
    sims = [distributions(g) for g in draws]
    simulated = {s: np.vstack([d[s] for d in sims]) for s in GOF_STATISTICS}
    quantiles = {s: np.quantile(simulated[s], QUANTILES, axis=0) for s in GOF_STATISTICS}
    return GofReport(n_sims, observed, simulated, quantiles)
