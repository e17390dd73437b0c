"""Compiled change-statistic and Metropolis kernels.

The chain state is a sampler-private dense ``uint8`` sociomatrix plus an
edge list with a position index, so dyad queries and uniform edge draws are
O(1). Term kinds use the integer codes of ``terms.KIND_CODES``.
"""
import math

import numpy as np
from numba import njit

EDGES, NODEFACTOR, UNIFORM_HOMOPHILY, ABSDIFF, GWDEGREE, GWESP = range(6)

OK = 0
NONFINITE = 1


@njit(cache=True)
def seed_rng(seed):
    np.random.seed(seed)


@njit(cache=True)
def _shared(adj, a, b, skip):
    n = adj.shape[0]
    c = 0
    for m in range(n):
        if m != skip and adj[a, m] and adj[b, m]:
            c += 1
    return c


@njit(cache=True)
def change_stats(adj, deg, i, j, kinds, vals, decays, out):
    """Fill ``out`` with g(a+_ij) - g(a-_ij)."""
    n = adj.shape[0]
    a_ij = adj[i, j]
    di = deg[i] - a_ij
    dj = deg[j] - a_ij
    n_common = -1
    for r in range(kinds.shape[0]):
        kind = kinds[r]
        if kind == EDGES:
            out[r] = 1.0
        elif kind == NODEFACTOR:
            out[r] = vals[i, r] + vals[j, r]
        elif kind == UNIFORM_HOMOPHILY:
            out[r] = 1.0 if vals[i, r] == vals[j, r] else 0.0
        elif kind == ABSDIFF:
            out[r] = abs(vals[i, r] - vals[j, r])
        elif kind == GWDEGREE:
            g = decays[r]
            out[r] = (math.exp(-g * (di + 1)) - math.exp(-g * di)
                      + math.exp(-g * (dj + 1)) - math.exp(-g * dj))
        elif kind == GWESP:
            lam = decays[r]
            ratio = 1.0 - math.exp(-lam)
            cn = 0
            delta = 0.0
            for k in range(n):
                if k != i and k != j and adj[i, k] and adj[j, k]:
                    cn += 1
                    delta += ratio ** _shared(adj, i, k, j) + ratio ** _shared(adj, j, k, i)
            n_common = cn
            delta += math.exp(lam) * (1.0 - ratio ** cn)
            out[r] = delta
    return n_common


@njit(cache=True)
def all_change_stats(adj, kinds, vals, decays):
    """Change statistics and tie indicators for every dyad i < j."""
    n = adj.shape[0]
    deg = np.zeros(n, dtype=np.int64)
    for a in range(n):
        for b in range(n):
            deg[a] += adj[a, b]
    n_dyads = n * (n - 1) // 2
    X = np.empty((n_dyads, kinds.shape[0]))
    y = np.empty(n_dyads)
    row = 0
    for i in range(n):
        for j in range(i + 1, n):
            change_stats(adj, deg, i, j, kinds, vals, decays, X[row])
            y[row] = adj[i, j]
            row += 1
    return X, y


@njit(cache=True)
def _add_edge(adj, deg, eu, ev, pos, n_edges, i, j):
    adj[i, j] = 1
    adj[j, i] = 1
    deg[i] += 1
    deg[j] += 1
    eu[n_edges] = i
    ev[n_edges] = j
    pos[i, j] = n_edges
    pos[j, i] = n_edges
    return n_edges + 1


@njit(cache=True)
def _remove_edge(adj, deg, eu, ev, pos, n_edges, i, j):
    adj[i, j] = 0
    adj[j, i] = 0
    deg[i] -= 1
    deg[j] -= 1
    p = pos[i, j]
    last = n_edges - 1
    u = eu[last]
    v = ev[last]
    eu[p] = u
    ev[p] = v
    pos[u, v] = p
    pos[v, u] = p
    pos[i, j] = -1
    pos[j, i] = -1
    return last


@njit(cache=True)
def _edge_pick_prob(n_edges, n_dyads):
    if n_edges == 0:
        return 0.0
    if n_edges == n_dyads:
        return 1.0
    return 0.5


@njit(cache=True)
def _state_code(adj):
    n = adj.shape[0]
    code = 0
    bit = 0
    for i in range(n):
        for j in range(i + 1, n):
            if adj[i, j]:
                code |= 1 << bit
            bit += 1
    return code


@njit(cache=True)
def run_chain(adj, deg, eu, ev, pos, n_edges, kinds, vals, decays, theta,
              n_steps, tnt, trace_every, trace, status):
    """Advance the chain ``n_steps`` proposals in place.

    Returns the new edge count. ``status[0]`` is set to NONFINITE (and
    ``status[1]`` to the step index) if an acceptance log-ratio is not
    finite. When ``trace_every > 0`` the dyad bit-code of the state is
    written to ``trace`` after every ``trace_every`` proposals.
    """
    n = adj.shape[0]
    n_dyads = n * (n - 1) // 2
    delta = np.empty(kinds.shape[0])
    n_trace = 0
    if n < 2:
        return n_edges
    for step in range(n_steps):
        if tnt:
            p_edge = _edge_pick_prob(n_edges, n_dyads)
            if np.random.random() < p_edge:
                e = np.random.randint(0, n_edges)
                i = eu[e]
                j = ev[e]
                adding = False
            else:
                while True:
                    i = np.random.randint(0, n)
                    j = np.random.randint(0, n - 1)
                    if j >= i:
                        j += 1
                    if adj[i, j] == 0:
                        break
                adding = True
        else:
            i = np.random.randint(0, n)
            j = np.random.randint(0, n - 1)
            if j >= i:
                j += 1
            adding = adj[i, j] == 0
        change_stats(adj, deg, i, j, kinds, vals, decays, delta)
        log_ratio = 0.0
        for r in range(kinds.shape[0]):
            log_ratio += theta[r] * delta[r]
        if not adding:
            log_ratio = -log_ratio
        if tnt:
            if adding:
                new_edges = n_edges + 1
                q_fwd = (1.0 - p_edge) / (n_dyads - n_edges)
                q_rev = _edge_pick_prob(new_edges, n_dyads) / new_edges
            else:
                new_edges = n_edges - 1
                q_fwd = p_edge / n_edges
                q_rev = (1.0 - _edge_pick_prob(new_edges, n_dyads)) / (n_dyads - new_edges)
            log_ratio += math.log(q_rev) - math.log(q_fwd)
        if not math.isfinite(log_ratio):
            status[0] = NONFINITE
            status[1] = step
            return n_edges
        if log_ratio >= 0.0 or np.random.random() < math.exp(log_ratio):
            if adding:
                n_edges = _add_edge(adj, deg, eu, ev, pos, n_edges, i, j)
            else:
                n_edges = _remove_edge(adj, deg, eu, ev, pos, n_edges, i, j)
        if trace_every > 0 and (step + 1) % trace_every == 0 and n_trace < trace.shape[0]:
            trace[n_trace] = _state_code(adj)
            n_trace += 1
    return n_edges
