"""ERGM term specifications, sufficient statistics and change statistics.

The functions here work on :class:`~plasmode.graph.Graph` directly and serve
as the readable reference; the sampler uses the compiled kernels in
``_kernels`` which are tested against them.
"""
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..exceptions import SpecificationError
from ..graph import degree_distribution, shared_partner_counts

TERM_KINDS = ("Edges", "NodeFactor", "UniformHomophily", "AbsDiff", "GWDegree", "GWESP")
KIND_CODES = {k: i for i, k in enumerate(TERM_KINDS)}
DYAD_DEPENDENT = frozenset({"GWDegree", "GWESP"})


@dataclass(frozen=True)
class TermSpec:
    kind: str
    attribute: Optional[str] = None
    level: Optional[str] = None
    decay: Optional[float] = None

    def __post_init__(self):
        if self.kind not in KIND_CODES:
            raise SpecificationError(f"unknown term kind {self.kind!r}; expected one of {TERM_KINDS}")
        if self.kind in ("NodeFactor", "UniformHomophily", "AbsDiff") and not self.attribute:
            raise SpecificationError(f"{self.kind} needs an attribute")
        if self.kind == "NodeFactor" and self.level is None:
            raise SpecificationError("NodeFactor needs a level")
        if self.kind in DYAD_DEPENDENT:
            if self.decay is None or not (self.decay > 0 and math.isfinite(self.decay)):
                raise SpecificationError(f"{self.kind} needs a positive finite decay")
        if self.level is not None:
            object.__setattr__(self, "level", str(self.level))
        if self.decay is not None:
            object.__setattr__(self, "decay", float(self.decay))

    @property
    def label(self):
        if self.kind == "Edges":
            return "Edges"
        if self.kind == "NodeFactor":
            return f"NodeFactor({self.attribute}={self.level})"
        if self.kind in ("UniformHomophily", "AbsDiff"):
            return f"{self.kind}({self.attribute})"
        return f"{self.kind}({self.decay:g})"

    def to_dict(self):
        out = {"kind": self.kind}
        for key in ("attribute", "level", "decay"):
            value = getattr(self, key)
            if value is not None:
                out[key] = value
        return out

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], d.get("attribute"), d.get("level"), d.get("decay"))


@dataclass(frozen=True)
class ErgmModel:
    """Ordered terms plus their coefficient vector."""

    terms: tuple
    theta: np.ndarray = field(repr=False)

    def __post_init__(self):
        terms = tuple(t if isinstance(t, TermSpec) else TermSpec.from_dict(t) for t in self.terms)
        theta = np.asarray(self.theta, dtype=float).copy()
        if theta.shape != (len(terms),):
            raise SpecificationError(f"theta has shape {theta.shape}, expected ({len(terms)},)")
        if not np.isfinite(theta).all():
            raise SpecificationError("theta must be finite")
        theta.setflags(write=False)
        object.__setattr__(self, "terms", terms)
        object.__setattr__(self, "theta", theta)

    @property
    def dyad_independent(self):
        return not any(t.kind in DYAD_DEPENDENT for t in self.terms)

    def to_dict(self):
        return {"terms": [t.to_dict() for t in self.terms], "theta": self.theta.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(TermSpec.from_dict(t) for t in d["terms"]), d["theta"])


def read_terms(path):
    """Read a term list from JSON (either a bare list or ``{"terms": [...]}``)."""
    with open(path) as fh:
        data = json.load(fh)
    if isinstance(data, dict):
        data = data["terms"]
    return [TermSpec.from_dict(t) for t in data]


def read_model(path):
    with open(path) as fh:
        return ErgmModel.from_dict(json.load(fh))


def write_model(model, path, **extra):
    payload = model.to_dict()
    payload.update(extra)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)


def validate_terms(terms, attrs):
    """Raise :class:`SpecificationError` if a term cannot be evaluated on ``attrs``."""
    for t in terms:
        if t.kind in ("NodeFactor", "UniformHomophily", "AbsDiff"):
            if attrs is None or t.attribute not in attrs:
                raise SpecificationError(f"{t.label}: attribute {t.attribute!r} missing from node table")
            if t.kind != "AbsDiff" and not attrs.is_categorical(t.attribute):
                raise SpecificationError(f"{t.label}: attribute {t.attribute!r} must be categorical")
            if t.kind == "NodeFactor":
                attrs.level_code(t.attribute, t.level)


def term_node_values(terms, attrs, n_nodes):
    """Per-node value matrix (n_nodes x n_terms) consumed by dyadic terms.

    NodeFactor: level indicator; UniformHomophily: level code; AbsDiff:
    numeric value; structural terms: zeros.
    """
    validate_terms(terms, attrs)
    vals = np.zeros((n_nodes, len(terms)))
    for r, t in enumerate(terms):
        if t.kind == "NodeFactor":
            vals[:, r] = attrs.codes(t.attribute) == attrs.level_code(t.attribute, t.level)
        elif t.kind == "UniformHomophily":
            vals[:, r] = attrs.codes(t.attribute)
        elif t.kind == "AbsDiff":
            vals[:, r] = attrs.numeric_values(t.attribute)
    if attrs is not None and attrs.n_nodes != n_nodes and np.any(vals):
        raise SpecificationError(f"node table has {attrs.n_nodes} rows, graph has {n_nodes} nodes")
    return vals


def gwesp_weight(k, decay):
    """Weight of one edge with ``k`` shared partners."""
    return math.exp(decay) * (1.0 - (1.0 - math.exp(-decay)) ** k)


def statistics(graph, attrs, terms):
    """Sufficient statistic vector ``g(a, X)`` evaluated from scratch."""
    vals = term_node_values(terms, attrs, graph.n_nodes)
    edges = graph.edges()
    out = np.zeros(len(terms))
    deg_dist = ep = None
    for r, t in enumerate(terms):
        v = vals[:, r]
        if t.kind == "Edges":
            out[r] = len(edges)
        elif t.kind == "NodeFactor":
            out[r] = sum(v[i] + v[j] for i, j in edges)
        elif t.kind == "UniformHomophily":
            out[r] = sum(v[i] == v[j] for i, j in edges)
        elif t.kind == "AbsDiff":
            out[r] = sum(abs(v[i] - v[j]) for i, j in edges)
        elif t.kind == "GWDegree":
            if deg_dist is None:
                deg_dist = degree_distribution(graph)
            out[r] = sum(math.exp(-t.decay * d) * c for d, c in deg_dist.items())
        elif t.kind == "GWESP":
            if ep is None:
                ep, _ = shared_partner_counts(graph)
            out[r] = sum(gwesp_weight(k, t.decay) * c for k, c in ep.items())
    return out


def change_statistics(graph, attrs, terms, i, j):
    """Change in ``g`` from setting ``a_ij`` to 1 versus 0, other dyads fixed.

    Uses only the neighbourhoods of ``i``, ``j`` and their common
    neighbours; the graph is never copied.
    """
    if i == j:
        raise ValueError("change statistics are undefined for i == j")
    vals = term_node_values(terms, attrs, graph.n_nodes)
    ni = graph.neighbor_set(i) - {j}
    nj = graph.neighbor_set(j) - {i}
    common = ni & nj
    out = np.zeros(len(terms))
    for r, t in enumerate(terms):
        v = vals[:, r]
        if t.kind == "Edges":
            out[r] = 1.0
        elif t.kind == "NodeFactor":
            out[r] = v[i] + v[j]
        elif t.kind == "UniformHomophily":
            out[r] = float(v[i] == v[j])
        elif t.kind == "AbsDiff":
            out[r] = abs(v[i] - v[j])
        elif t.kind == "GWDegree":
            g = t.decay
            out[r] = sum(math.exp(-g * (d + 1)) - math.exp(-g * d) for d in (len(ni), len(nj)))
        elif t.kind == "GWESP":
            # w(s+1) - w(s) = (1 - e^-decay)^s for each edge gaining a partner
            ratio = 1.0 - math.exp(-t.decay)
            delta = gwesp_weight(len(common), t.decay)
            for k in common:
                nk = graph.neighbor_set(k)
                delta += ratio ** len(ni & nk) + ratio ** len(nj & nk)
            out[r] = delta
    return out
