"""Undirected simple graphs, node attribute tables and descriptive statistics.

Nodes are dense integers ``0..n-1``. External identifiers only appear in the
I/O helpers at the bottom of this module.
"""
from collections import Counter
from dataclasses import dataclass
from itertools import combinations
from math import comb
from typing import Optional

import numpy as np
import pandas as pd

from .exceptions import DegenerateInputError, SpecificationError

ROLES = frozenset({"Z", "Y", "X", "X_Y", "X_G", "X_Z"})


class Graph:
    """Immutable undirected simple graph stored as neighbour sets.

    Parameters
    ----------
    n_nodes : int
        Number of nodes.
    edges : iterable of (int, int)
        Unordered node pairs. Duplicates are merged; self-loops are rejected.
    """

    __slots__ = ("_n", "_nbrs", "_n_edges", "_sorted")

    def __init__(self, n_nodes, edges=()):
        n_nodes = int(n_nodes)
        if n_nodes < 0:
            raise ValueError("n_nodes must be non-negative")
        nbrs = [set() for _ in range(n_nodes)]
        for i, j in edges:
            i, j = int(i), int(j)
            if i == j:
                raise ValueError(f"self-loop on node {i}")
            if not (0 <= i < n_nodes and 0 <= j < n_nodes):
                raise ValueError(f"edge ({i}, {j}) out of range for {n_nodes} nodes")
            nbrs[i].add(j)
            nbrs[j].add(i)
        self._n = n_nodes
        self._nbrs = tuple(frozenset(s) for s in nbrs)
        self._n_edges = sum(len(s) for s in nbrs) // 2
        self._sorted = None

    @classmethod
    def from_adjacency(cls, adj):
        adj = np.asarray(adj)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise ValueError("adjacency matrix must be square")
        if not np.array_equal(adj, adj.T):
            raise ValueError("adjacency matrix must be symmetric")
        if np.any(np.diag(adj)):
            raise ValueError("adjacency matrix has self-loops")
        iu, ju = np.nonzero(np.triu(adj, 1))
        return cls(adj.shape[0], zip(iu.tolist(), ju.tolist()))

    @property
    def n_nodes(self):
        return self._n

    @property
    def n_edges(self):
        return self._n_edges

    @property
    def n_dyads(self):
        return comb(self._n, 2)

    def neighbors(self, i):
        """Sorted tuple of the neighbours of ``i``."""
        if self._sorted is None:
            self._sorted = tuple(tuple(sorted(s)) for s in self._nbrs)
        return self._sorted[i]

    def neighbor_set(self, i):
        return self._nbrs[i]

    def has_edge(self, i, j):
        return j in self._nbrs[i]

    def degree(self, i):
        return len(self._nbrs[i])

    def degrees(self):
        return np.fromiter((len(s) for s in self._nbrs), dtype=np.int64, count=self._n)

    def edges(self):
        """Edges as a sorted list of ``(i, j)`` with ``i < j``."""
        return sorted((i, j) for i in range(self._n) for j in self._nbrs[i] if i < j)

    def toggled(self, i, j):
        """Return a new graph with dyad ``{i, j}`` flipped."""
        if i == j:
            raise ValueError("cannot toggle a self-loop")
        edges = set(self.edges())
        key = (min(i, j), max(i, j))
        edges.symmetric_difference_update({key})
        return Graph(self._n, edges)

    def relabel(self, perm):
        """Isomorphic copy where node ``i`` becomes ``perm[i]``."""
        perm = np.asarray(perm)
        return Graph(self._n, ((perm[i], perm[j]) for i, j in self.edges()))

    def adjacency(self, dtype=np.uint8):
        """Dense sociomatrix. Only meant for small graphs and kernels."""
        adj = np.zeros((self._n, self._n), dtype=dtype)
        for i, nb in enumerate(self._nbrs):
            if nb:
                adj[i, list(nb)] = 1
        return adj

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return self._n == other._n and self._nbrs == other._nbrs

    def __hash__(self):
        return hash((self._n, self._nbrs))

    def __repr__(self):
        return f"Graph(n_nodes={self._n}, n_edges={self._n_edges})"


class NodeTable:
    """Column store of node attributes, one row per node.

    Categorical columns hold integer level codes and have an ordered tuple of
    level labels in ``levels``; numeric columns hold floats.
    """

    def __init__(self, columns, levels=None, roles=None):
        levels = {k: tuple(str(x) for x in v) for k, v in (levels or {}).items()}
        cols = {}
        n = None
        for name, values in columns.items():
            if name in levels:
                arr = np.asarray(values, dtype=np.int64)
                if arr.size and (arr.min() < 0 or arr.max() >= len(levels[name])):
                    raise ValueError(f"column {name!r} has codes outside its level set")
            else:
                arr = np.asarray(values, dtype=float)
            if arr.ndim != 1:
                raise ValueError(f"column {name!r} must be one-dimensional")
            if n is None:
                n = arr.size
            elif arr.size != n:
                raise ValueError(f"column {name!r} has length {arr.size}, expected {n}")
            arr.setflags(write=False)
            cols[name] = arr
        unknown = set(levels) - set(cols)
        if unknown:
            raise ValueError(f"levels given for unknown columns {sorted(unknown)}")
        roles = {k: frozenset(v) for k, v in (roles or {}).items()}
        for name, flags in roles.items():
            if not flags <= ROLES:
                raise ValueError(f"unknown role flags {sorted(flags - ROLES)} on {name!r}")
        self._cols = cols
        self._levels = levels
        self._roles = roles
        self._n = 0 if n is None else n

    @classmethod
    def from_labels(cls, data, levels=None, roles=None):
        """Build a table from label columns; ``levels`` fixes level order."""
        levels = dict(levels or {})
        codes = {}
        for name, values in data.items():
            values = [str(v) for v in values]
            lv = tuple(str(x) for x in levels.get(name, sorted(set(values))))
            index = {lab: c for c, lab in enumerate(lv)}
            try:
                codes[name] = [index[v] for v in values]
            except KeyError as exc:
                raise ValueError(f"column {name!r}: label {exc.args[0]!r} not in levels") from None
            levels[name] = lv
        return cls(codes, levels, roles)

    @property
    def n_nodes(self):
        return self._n

    @property
    def names(self):
        return list(self._cols)

    @property
    def levels(self):
        return dict(self._levels)

    @property
    def roles(self):
        return dict(self._roles)

    def __contains__(self, name):
        return name in self._cols

    def __len__(self):
        return self._n

    def __getitem__(self, name):
        return self._cols[name]

    def is_categorical(self, name):
        return name in self._levels

    def levels_of(self, name):
        self._require_categorical(name)
        return self._levels[name]

    def codes(self, name):
        self._require_categorical(name)
        return self._cols[name]

    def labels(self, name):
        lv = self.levels_of(name)
        return [lv[c] for c in self._cols[name]]

    def level_code(self, name, level):
        lv = self.levels_of(name)
        try:
            return lv.index(str(level))
        except ValueError:
            raise SpecificationError(f"level {level!r} not among {lv} for {name!r}") from None

    def numeric_values(self, name):
        """Numeric view: label values for numeric-labelled factors, else codes."""
        if name not in self._cols:
            raise SpecificationError(f"unknown attribute {name!r}")
        if name not in self._levels:
            return self._cols[name]
        lv = self._levels[name]
        try:
            values = np.array([float(x) for x in lv])
        except ValueError:
            values = np.arange(len(lv), dtype=float)
        return values[self._cols[name]]

    def with_column(self, name, values, levels=None, roles=None):
        cols = dict(self._cols)
        cols[name] = values
        lv = {k: v for k, v in self._levels.items() if k != name}
        if levels is not None:
            lv[name] = levels
        rl = dict(self._roles)
        if roles is not None:
            rl[name] = roles
        return NodeTable(cols, lv, rl)

    def select(self, names):
        names = list(names)
        missing = [n for n in names if n not in self._cols]
        if missing:
            raise SpecificationError(f"unknown attributes {missing}")
        return NodeTable(
            {n: self._cols[n] for n in names},
            {n: self._levels[n] for n in names if n in self._levels},
            {n: self._roles[n] for n in names if n in self._roles},
        )

    def drop(self, names):
        names = set(names)
        return self.select([n for n in self._cols if n not in names])

    def take(self, rows):
        rows = np.asarray(rows, dtype=np.int64)
        return NodeTable({n: c[rows] for n, c in self._cols.items()}, self._levels, self._roles)

    def to_frame(self):
        data = {}
        for name, col in self._cols.items():
            if name in self._levels:
                data[name] = pd.Categorical.from_codes(col, categories=list(self._levels[name]))
            else:
                data[name] = col
        return pd.DataFrame(data)

    def equals(self, other):
        return (
            self._levels == other._levels
            and list(self._cols) == list(other._cols)
            and all(np.array_equal(self._cols[k], other._cols[k]) for k in self._cols)
        )

    def _require_categorical(self, name):
        if name not in self._cols:
            raise SpecificationError(f"unknown attribute {name!r}")
        if name not in self._levels:
            raise SpecificationError(f"attribute {name!r} is not categorical")

    def __repr__(self):
        return f"NodeTable(n_nodes={self._n}, columns={self.names})"


@dataclass(frozen=True)
class NetworkSummary:
    """Descriptive statistics of a graph. ``None`` marks an undefined value."""

    n_nodes: int
    n_edges: int
    mean_degree: float
    sd_degree: Optional[float]
    density: float
    transitivity: Optional[float]
    assortativity: Optional[float] = None

    def as_dict(self):
        return dict(self.__dict__)


def degree_distribution(graph):
    """Map degree -> number of nodes with that degree."""
    return dict(sorted(Counter(graph.degrees().tolist()).items()))


def shared_partner_counts(graph):
    """Edgewise and dyadwise shared partner distributions.

    Returns
    -------
    edgewise : dict
        ``k -> EP_k``, the number of edges whose endpoints share exactly
        ``k`` neighbours.
    dyadwise : dict
        ``k -> DP_k`` over all ``C(n, 2)`` dyads, connected or not.
    """
    # two-path counting: every pair of neighbours of w shares partner w
    common = Counter()
    for w in range(graph.n_nodes):
        for u, v in combinations(graph.neighbors(w), 2):
            common[(u, v)] += 1
    dyadwise = Counter(common.values())
    zero = graph.n_dyads - len(common)
    if zero:
        dyadwise[0] += zero
    edgewise = Counter(common.get(e, 0) for e in graph.edges())
    return dict(sorted(edgewise.items())), dict(sorted(dyadwise.items()))


def triangle_count(graph):
    edgewise, _ = shared_partner_counts(graph)
    return sum(k * c for k, c in edgewise.items()) // 3


def connected_triples(graph):
    return int(sum(comb(int(d), 2) for d in graph.degrees()))


def assortativity(graph, codes, n_levels=None):
    """Categorical assortativity from the mixing matrix of edge endpoints.

    Returns ``None`` when the graph has no edges or the expected-mixing term
    equals one (all edge endpoints in a single category).
    """
    codes = np.asarray(codes, dtype=np.int64)
    if codes.shape != (graph.n_nodes,):
        raise ValueError("attribute length must equal n_nodes")
    if graph.n_edges == 0:
        return None
    n_levels = int(codes.max()) + 1 if n_levels is None else n_levels
    mix = np.zeros((n_levels, n_levels))
    for i, j in graph.edges():
        mix[codes[i], codes[j]] += 1.0
        mix[codes[j], codes[i]] += 1.0
    mix /= mix.sum()
    expected = float(mix.sum(axis=1) @ mix.sum(axis=0))
    denom = 1.0 - expected
    if abs(denom) < 1e-15:
        return None
    return float((np.trace(mix) - expected) / denom)


def summarize(graph, attr=None):
    """Summarize ``graph``; ``attr`` is an optional categorical code vector."""
    n = graph.n_nodes
    if n < 2:
        raise DegenerateInputError("density needs at least two nodes")
    deg = graph.degrees()
    triples = connected_triples(graph)
    transitivity = None if triples == 0 else 3.0 * triangle_count(graph) / triples
    assort = None
    if attr is not None:
        assort = assortativity(graph, attr)
    return NetworkSummary(
        n_nodes=n,
        n_edges=graph.n_edges,
        mean_degree=float(deg.mean()),
        sd_degree=float(deg.std(ddof=1)),
        density=graph.n_edges / comb(n, 2),
        transitivity=transitivity,
        assortativity=assort,
    )


# --- I/O -----------------------------------------------------------------

def read_edgelist(path, n_nodes=None):
    """Read a 0-based ``i j`` edge list.

    A ``# n_nodes N`` comment fixes the node count (needed for trailing
    isolates); otherwise it is ``max index + 1`` unless ``n_nodes`` is given.
    """
    edges = []
    declared = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if len(parts) == 2 and parts[0] == "n_nodes":
                    declared = int(parts[1])
                continue
            fields = line.split()
            if len(fields) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'i j', got {line!r}")
            edges.append((int(fields[0]), int(fields[1])))
    if n_nodes is None:
        n_nodes = declared
    if n_nodes is None:
        n_nodes = 1 + max((max(e) for e in edges), default=-1)
    return Graph(n_nodes, edges)


def write_edgelist(graph, path):
    with open(path, "w") as fh:
        fh.write(f"# n_nodes {graph.n_nodes}\n")
        for i, j in graph.edges():
            fh.write(f"{i} {j}\n")


def read_node_table(path, levels=None, numeric=()):
    """Read a CSV node table; every column not in ``numeric`` is categorical.

    Level order follows ``levels`` where given, else sorted label order.
    """
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    numeric = set(numeric)
    label_cols = {c: frame[c].tolist() for c in frame.columns if c not in numeric}
    table = NodeTable.from_labels(label_cols, levels=levels)
    for c in frame.columns:
        if c in numeric:
            table = table.with_column(c, frame[c].astype(float).to_numpy())
    return table.select(list(frame.columns))


def write_node_table(table, path):
    frame = pd.DataFrame(
        {n: (table.labels(n) if table.is_categorical(n) else table[n]) for n in table.names}
    )
    frame.to_csv(path, index=False, float_format="%.17g")
