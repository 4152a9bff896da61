"""Time-varying communication topologies and their mixing matrices.

A schedule is a periodic sequence of edge sets.  Undirected schedules must
be connected in every round; directed schedules must have a strongly
connected union over every window of ``window_B`` consecutive rounds.
Neighbor sets always include the node itself, so degrees count the self
node.
"""

from collections import deque
from dataclasses import dataclass, field

import numpy as np

ROW = "row"
COLUMN = "column"


@dataclass(frozen=True)
class TopologySchedule:
    """Periodic sequence of edge sets defining the round-``t`` graph.

    ``edges[k]`` lists the pairs active in rounds ``t`` with ``t % period == k``:
    ordered ``(i, j)`` meaning i can send to j when directed, unordered
    otherwise.  Self-loops are implicit and never stored.
    """

    n: int
    period: int
    edges: tuple
    directed: bool
    window_B: int = 1

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be positive")
        if self.period < 1 or len(self.edges) != self.period:
            raise ValueError("edges must hold exactly one edge list per round")
        if self.window_B < 1:
            raise ValueError("window_B must be positive")
        canon = []
        for round_edges in self.edges:
            seen = []
            for i, j in round_edges:
                if not (0 <= i < self.n and 0 <= j < self.n):
                    raise ValueError(f"edge ({i},{j}) endpoint out of [0,{self.n})")
                if i == j:
                    raise ValueError("self-loops are implicit and must not be stored")
                seen.append((int(i), int(j)))
            canon.append(tuple(seen))
        object.__setattr__(self, "edges", tuple(canon))


@dataclass(frozen=True)
class MixingMatrix:
    """Nonnegative stochastic matrix attached to one round's graph.

    ``kind`` is ``"row"`` (rows sum to one) or ``"column"``.  ``phi`` is the
    smallest positive entry; it is computed from the generated matrix, not
    configured.
    """

    entries: np.ndarray
    kind: str
    phi: float = field(default=0.0)

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=float)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise ValueError("entries must be a square matrix")
        if self.kind not in (ROW, COLUMN):
            raise ValueError(f"unknown kind {self.kind!r}")
        if np.any(entries < 0):
            raise ValueError("mixing entries must be nonnegative")
        axis = 1 if self.kind == ROW else 0
        sums = entries.sum(axis=axis)
        if np.any(np.abs(sums - 1.0) > 1e-12):
            raise ValueError(f"{self.kind}-stochastic sums off by {np.max(np.abs(sums - 1.0))}")
        entries = entries.copy()
        entries.flags.writeable = False
        object.__setattr__(self, "entries", entries)
        positive = entries[entries > 0]
        object.__setattr__(self, "phi", float(positive.min()) if positive.size else 0.0)

    @property
    def n(self):
        return self.entries.shape[0]


def graph_at(schedule, t):
    """Edge list active at round ``t`` (periodic indexing)."""
    if t < 0:
        raise ValueError("round index must be nonnegative")
    return schedule.edges[t % schedule.period]


def _reachable(n, adj, start):
    seen = np.zeros(n, dtype=bool)
    seen[start] = True
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if not seen[v]:
                seen[v] = True
                queue.append(v)
    return seen


def _strongly_connected(n, edges):
    if n == 1:
        return True
    fwd = [[] for _ in range(n)]
    bwd = [[] for _ in range(n)]
    for i, j in edges:
        fwd[i].append(j)
        bwd[j].append(i)
    return bool(_reachable(n, fwd, 0).all() and _reachable(n, bwd, 0).all())


def _connected(n, edges):
    if n == 1:
        return True
    adj = [[] for _ in range(n)]
    for i, j in edges:
        adj[i].append(j)
        adj[j].append(i)
    return bool(_reachable(n, adj, 0).all())


def check_window_connectivity(schedule):
    """True iff the schedule satisfies its connectivity invariant.

    Directed: the union of every window of ``window_B`` consecutive rounds
    (cyclic) is strongly connected.  Undirected: every single round is
    connected.  Both checks are plain reachability searches.
    """
    if not schedule.directed:
        return all(_connected(schedule.n, e) for e in schedule.edges)
    P, B = schedule.period, schedule.window_B
    for start in range(P):
        union = set()
        for k in range(B):
            union.update(schedule.edges[(start + k) % P])
        if not _strongly_connected(schedule.n, union):
            return False
    return True


def uniform_row_weights(edges, n):
    """Row-stochastic weights with entry 1/deg_i for every neighbor incl. self."""
    W = np.zeros((n, n))
    nbrs = [{i} for i in range(n)]
    for i, j in edges:
        nbrs[i].add(j)
        nbrs[j].add(i)
    for i in range(n):
        w = 1.0 / len(nbrs[i])
        for j in nbrs[i]:
            W[i, j] = w
    return MixingMatrix(W, ROW)


def metropolis_row_weights(edges, n):
    """Symmetric doubly stochastic weights, 1/(1+max degree) per edge.

    Degrees count the self node, so the diagonal absorbs whatever the
    off-diagonal entries leave over.
    """
    nbrs = [{i} for i in range(n)]
    for i, j in edges:
        nbrs[i].add(j)
        nbrs[j].add(i)
    deg = [len(s) for s in nbrs]
    W = np.zeros((n, n))
    for i, j in set(tuple(sorted(e)) for e in edges):
        w = 1.0 / (1.0 + max(deg[i], deg[j]))
        W[i, j] = w
        W[j, i] = w
    for i in range(n):
        W[i, i] = 1.0 - W[i].sum()
    return MixingMatrix(W, ROW)


def pushsum_column_weights(edges, n):
    """Column-stochastic weights with entry 1/deg_j^out for every out-neighbor."""
    out = [{j} for j in range(n)]
    for i, j in edges:
        out[i].add(j)
    A = np.zeros((n, n))
    for j in range(n):
        w = 1.0 / len(out[j])
        for i in out[j]:
            A[i, j] = w
    return MixingMatrix(A, COLUMN)


def matrix_window_product(matrices, t, s):
    """Product M(t) M(t-1) ... M(s); the empty window t = s-1 is the identity.

    ``matrices`` is indexable by absolute round and may hold raw arrays or
    MixingMatrix objects.
    """
    if t < s - 1:
        raise ValueError(f"window product needs t >= s-1, got t={t}, s={s}")

    def entries(M):
        return M.entries if isinstance(M, MixingMatrix) else np.asarray(M, dtype=float)

    n = entries(matrices[0]).shape[0]
    out = np.eye(n)
    for r in range(s, t + 1):
        out = entries(matrices[r]) @ out
    return out


def mixing_sequence(schedule, weighting="uniform"):
    """One mixing matrix per schedule round.

    ``weighting`` is "uniform" or "metropolis" for undirected schedules;
    directed schedules always use the push-sum column weights.
    """
    mats = []
    for e in schedule.edges:
        if schedule.directed:
            mats.append(pushsum_column_weights(e, schedule.n))
        elif weighting == "metropolis":
            mats.append(metropolis_row_weights(e, schedule.n))
        elif weighting == "uniform":
            mats.append(uniform_row_weights(e, schedule.n))
        else:
            raise ValueError(f"unknown weighting {weighting!r}")
    return mats


def schedule_phi(schedule, weighting="uniform"):
    """Smallest positive mixing entry over one period."""
    return min(m.phi for m in mixing_sequence(schedule, weighting))


def default_directed_schedule():
    """Canonical 7-node period-4 digraph, 4-strongly connected.

    Round k holds the ring edges (i, i+1 mod 7) for i = k (mod 4) plus the
    chord (k, k+3 mod 7); the window union is the full ring with chords.
    """
    n, P = 7, 4
    rounds = []
    for k in range(P):
        e = [(i, (i + 1) % n) for i in range(n) if i % 4 == k]
        e.append((k, (k + 3) % n))
        rounds.append(tuple(dict.fromkeys(e)))
    return TopologySchedule(n=n, period=P, edges=tuple(rounds), directed=True, window_B=4)


def default_undirected_schedule():
    """Canonical 7-node period-4 undirected schedule, connected every round.

    Direction-stripping the directed default leaves isolated nodes within a
    round, so the undirected default is the full ring plus one rotating
    chord (k, k+3 mod 7) per round.
    """
    n, P = 7, 4
    ring = [(i, (i + 1) % n) for i in range(n)]
    rounds = tuple(tuple(ring + [(k, (k + 3) % n)]) for k in range(P))
    return TopologySchedule(n=n, period=P, edges=rounds, directed=False, window_B=1)


def save_schedule(schedule, stream):
    """Write the plain-text schedule format: a header line then one line per round."""
    stream.write(
        f"n={schedule.n} P={schedule.period} B={schedule.window_B} "
        f"directed={1 if schedule.directed else 0}\n"
    )
    sep = "->" if schedule.directed else "-"
    for round_edges in schedule.edges:
        stream.write(",".join(f"{i}{sep}{j}" for i, j in round_edges) + "\n")


def load_schedule(stream):
    """Parse the plain-text schedule format written by :func:`save_schedule`."""
    header = stream.readline().strip()
    fields = {}
    for token in header.split():
        key, _, value = token.partition("=")
        fields[key] = value
    try:
        n = int(fields["n"])
        period = int(fields["P"])
        window_B = int(fields["B"])
        directed = fields["directed"] == "1"
    except KeyError as exc:
        raise ValueError(f"schedule header missing field {exc}") from exc
    sep = "->" if directed else "-"
    rounds = []
    for lineno in range(period):
        line = stream.readline()
        if line == "":
            raise ValueError(f"schedule truncated: expected {period} rounds, got {lineno}")
        line = line.strip()
        edges = []
        if line:
            for token in line.split(","):
                i, found, j = token.partition(sep)
                if not found:
                    raise ValueError(f"bad edge token {token!r} in round {lineno}")
                edges.append((int(i), int(j)))
        rounds.append(tuple(edges))
    return TopologySchedule(n=n, period=period, edges=tuple(rounds),
                            directed=directed, window_B=window_B)
