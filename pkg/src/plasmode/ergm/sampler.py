"""Metropolis dyad-toggle sampling of graphs from an ERGM."""
from dataclasses import dataclass
from math import comb
from typing import Optional

import numpy as np

from .._validation import check_count, check_seed
from ..exceptions import SamplerFault
from ..graph import Graph
from . import _kernels
from .terms import KIND_CODES, term_node_values

PROPOSALS = ("tnt", "uniform")


@dataclass(frozen=True)
class SamplerConfig:
    """Chain settings.

    ``burn_in`` defaults to ``20 * C(n, 2)`` proposals and ``thin`` to
    ``C(n, 2)`` when left as ``None``. ``proposal`` is ``"tnt"`` (tie /
    no-tie: an existing edge or an empty dyad with probability 1/2 each) or
    ``"uniform"`` (a uniformly random dyad).
    """

    burn_in: Optional[int] = None
    thin: Optional[int] = None
    proposal: str = "tnt"
    seed: Optional[int] = None

    def __post_init__(self):
        if self.burn_in is not None:
            check_count(self.burn_in, "burn_in", 0)
        if self.thin is not None:
            check_count(self.thin, "thin", 1)
        if self.proposal not in PROPOSALS:
            raise ValueError(f"proposal must be one of {PROPOSALS}, got {self.proposal!r}")
        check_seed(self.seed)

    def resolved(self, n_nodes):
        d = comb(n_nodes, 2)
        burn = 20 * d if self.burn_in is None else self.burn_in
        thin = max(d, 1) if self.thin is None else self.thin
        return burn, thin


class _Chain:
    """Sampler-private mutable graph state."""

    def __init__(self, model, attrs, n_nodes, initial=None):
        self.n = n_nodes
        self.kinds = np.array([KIND_CODES[t.kind] for t in model.terms], dtype=np.int64)
        self.vals = term_node_values(model.terms, attrs, n_nodes)
        self.decays = np.array([t.decay or 0.0 for t in model.terms])
        self.theta = np.asarray(model.theta, dtype=float)
        n_dyads = comb(n_nodes, 2)
        self.adj = np.zeros((n_nodes, n_nodes), dtype=np.uint8)
        self.deg = np.zeros(n_nodes, dtype=np.int64)
        self.eu = np.zeros(max(n_dyads, 1), dtype=np.int64)
        self.ev = np.zeros(max(n_dyads, 1), dtype=np.int64)
        self.pos = np.full((n_nodes, n_nodes), -1, dtype=np.int64)
        self.n_edges = 0
        if initial is not None:
            if initial.n_nodes != n_nodes:
                raise ValueError("initial graph has the wrong number of nodes")
            for i, j in initial.edges():
                self.n_edges = _kernels._add_edge(
                    self.adj, self.deg, self.eu, self.ev, self.pos, self.n_edges, i, j
                )

    def run(self, n_steps, tnt, trace_every=0, trace=None):
        if trace is None:
            trace = np.zeros(0, dtype=np.int64)
        status = np.zeros(2, dtype=np.int64)
        self.n_edges = _kernels.run_chain(
            self.adj, self.deg, self.eu, self.ev, self.pos, self.n_edges,
            self.kinds, self.vals, self.decays, self.theta,
            int(n_steps), tnt, int(trace_every), trace, status,
        )
        if status[0] != _kernels.OK:
            raise SamplerFault(
                f"non-finite acceptance log-ratio at proposal {status[1]} "
                f"(edges={self.n_edges}, theta={self.theta.tolist()})"
            )

    def graph(self):
        k = self.n_edges
        return Graph(self.n, zip(self.eu[:k].tolist(), self.ev[:k].tolist()))


def _seed_kernel(seed):
    seed = np.random.SeedSequence(seed).generate_state(1, dtype=np.uint32)[0]
    _kernels.seed_rng(int(seed))


def simulate(model, attrs, n_nodes, cfg=None, n_draws=None, initial=None):
    """Draw graph(s) from ``model`` conditional on node attributes ``attrs``.

    The chain starts from ``initial`` (empty graph by default), runs
    ``burn_in`` proposals and returns the state; with ``n_draws`` it keeps
    going and returns a list of ``n_draws`` states spaced ``thin`` proposals
    apart. Deterministic given ``cfg.seed``.
    """
    cfg = cfg or SamplerConfig()
    burn, thin = cfg.resolved(n_nodes)
    chain = _Chain(model, attrs, n_nodes, initial)
    _seed_kernel(cfg.seed)
    tnt = cfg.proposal == "tnt"
    chain.run(burn, tnt)
    if n_draws is None:
        return chain.graph()
    check_count(n_draws, "n_draws", 1)
    draws = []
    for _ in range(n_draws):
        chain.run(thin, tnt)
        draws.append(chain.graph())
    return draws


def state_trace(model, attrs, n_nodes, cfg, n_steps, every=1):
    """Dyad bit-codes of the chain state after every ``every`` proposals.

    Bit ``b`` corresponds to the ``b``-th dyad in row-major ``i < j`` order.
    Intended for small graphs (``C(n, 2) <= 62``), e.g. exact stationarity
    checks. Burn-in from ``cfg`` is applied first.
    """
    if comb(n_nodes, 2) > 62:
        raise ValueError("state_trace supports at most 62 dyads")
    burn, _ = cfg.resolved(n_nodes)
    chain = _Chain(model, attrs, n_nodes)
    _seed_kernel(cfg.seed)
    tnt = cfg.proposal == "tnt"
    chain.run(burn, tnt)
    trace = np.zeros(n_steps // every, dtype=np.int64)
    chain.run(n_steps, tnt, every, trace)
    return trace
