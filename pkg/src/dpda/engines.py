"""Synchronous-round simulation of the two private dual-averaging engines.

Both engines share the same skeleton per round: each node perturbs its
dual vector with Laplace noise, the noisy messages are exchanged over the
current graph, the dual update folds in the node's own noisy block
gradient scaled by n, and the primal is recovered by the proximal
projection.  The circulation engine mixes perturbed-message differences
through a row-stochastic matrix on undirected graphs; the push-sum engine
mixes messages through a column-stochastic matrix on digraphs and
projects the ratio z/w, with the scalar weight w correcting the
column-stochastic bias.
"""

from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from . import _kernels
from .graphs import MixingMatrix, ROW, COLUMN, mixing_sequence
from .losses import (FAMILY_CODES, GradientNoiseSpec, RegretTrace, loss_eval,
                     noisy_block_grad)
from .privacy import laplace_vector, sigma_for_round
from .projection import BOX, prox_project, step_alpha

ENGINE_C = "c"
ENGINE_PS = "ps"


class InternalInvariantError(RuntimeError):
    """A simulation invariant failed (infeasible state, weight collapse)."""


@dataclass(frozen=True)
class BlockPartition:
    """Contiguous per-node coordinate ranges covering [0, d)."""

    starts: tuple

    def __post_init__(self):
        starts = tuple(int(s) for s in self.starts)
        if len(starts) < 2 or starts[0] != 0 or any(a > b for a, b in zip(starts, starts[1:])):
            raise ValueError("starts must be nondecreasing, begin at 0")
        object.__setattr__(self, "starts", starts)

    @classmethod
    def equal(cls, n, d):
        """Equal blocks of d // n, remainder appended to the last node."""
        base = d // n
        starts = [0]
        for i in range(n):
            starts.append(starts[-1] + base + (d - base * n if i == n - 1 else 0))
        return cls(tuple(starts))

    @property
    def n(self):
        return len(self.starts) - 1

    @property
    def dim(self):
        return self.starts[-1]

    def block(self, i):
        return (self.starts[i], self.starts[i + 1])

    def owners(self):
        own = np.empty(self.dim, dtype=np.int64)
        for i in range(self.n):
            own[self.starts[i]:self.starts[i + 1]] = i
        return own


@dataclass
class NodeState:
    """One node's view: dual vector, feasible primal, push-sum weight, decision block."""

    z: np.ndarray
    y: np.ndarray
    w: float
    x_block: np.ndarray


@dataclass
class EngineState:
    """All nodes' stacked state; row i is node i."""

    Z: np.ndarray
    Y: np.ndarray
    w: np.ndarray
    blocks: BlockPartition

    def node(self, i):
        lo, hi = self.blocks.block(i)
        return NodeState(z=self.Z[i], y=self.Y[i], w=float(self.w[i]),
                         x_block=self.Y[i, lo:hi])

    def decision(self):
        x = np.empty(self.blocks.dim)
        for i in range(self.blocks.n):
            lo, hi = self.blocks.block(i)
            x[lo:hi] = self.Y[i, lo:hi]
        return x


@dataclass(frozen=True)
class RoundRng:
    """Keyed substream factory for one replicate of one simulation."""

    master_seed: int
    replicate: int = 0

    def dp(self, node, t):
        return rngmod.substream(self.master_seed, self.replicate, node, t, rngmod.DP_NOISE)

    def grad(self, node, t):
        return rngmod.substream(self.master_seed, self.replicate, node, t, rngmod.GRAD_NOISE)


def initial_state(n, d, cset, blocks, pushsum=False):
    Z = np.zeros((n, d))
    y0 = prox_project(np.zeros(d), step_alpha(0), cset)
    Y = np.tile(y0, (n, 1))
    return EngineState(Z=Z, Y=Y, w=np.ones(n), blocks=blocks)


def _draw_round_noise(state, sigma, event, noise_spec, bundle, t):
    n, d = state.Z.shape
    eta = np.empty((n, d))
    U = np.zeros((n, d))
    for i in range(n):
        eta[i] = laplace_vector(sigma, d, bundle.dp(i, t), round_idx=t, node=i).vector
        blk = state.blocks.block(i)
        U[i, blk[0]:blk[1]] = noisy_block_grad(event, state.Y[i], blk,
                                               noise_spec, bundle.grad(i, t))
    return eta, U


def dpsda_c_round(state, W, event, params, bundle, t,
                  noise_spec=GradientNoiseSpec(), cset=None):
    """One circulation-engine round; returns (new state, eta, U_embedded).

    Dual update per coordinate: n * u_i into the node's own block, plus
    h_i + sum_j W_ij (h_j - h_i) with h = z + eta.
    """
    if not isinstance(W, MixingMatrix) or W.kind != ROW:
        raise ValueError("circulation engine needs a row-stochastic mixing matrix")
    n, d = state.Z.shape
    if W.n != n:
        raise ValueError("mixing matrix size does not match node count")
    sigma = sigma_for_round(params, n, t)
    eta, U = _draw_round_noise(state, sigma, event, noise_spec, bundle, t)
    H = state.Z + eta
    Wm = W.entries
    rowsums = Wm.sum(axis=1)
    Znew = H + Wm @ H - rowsums[:, None] * H + n * U
    alpha_t = step_alpha(t)
    Ynew = np.stack([prox_project(Znew[i], alpha_t, cset) for i in range(n)])
    return EngineState(Z=Znew, Y=Ynew, w=state.w, blocks=state.blocks), eta, U


def dpsda_ps_round(state, A, event, params, bundle, t,
                   noise_spec=GradientNoiseSpec(), cset=None):
    """One push-sum round; returns (new state, eta, U_embedded).

    Dual update mixes the perturbed messages column-stochastically, the
    scalar weights mix identically, and the primal projects the ratio.
    """
    if not isinstance(A, MixingMatrix) or A.kind != COLUMN:
        raise ValueError("push-sum engine needs a column-stochastic mixing matrix")
    n, d = state.Z.shape
    if A.n != n:
        raise ValueError("mixing matrix size does not match node count")
    sigma = sigma_for_round(params, n, t)
    eta, U = _draw_round_noise(state, sigma, event, noise_spec, bundle, t)
    H = state.Z + eta
    Am = A.entries
    Znew = Am @ H + n * U
    wnew = Am @ state.w
    if np.any(wnew < 1e-12):
        raise InternalInvariantError("push-sum weight underflow")
    alpha_t = step_alpha(t)
    Ynew = np.stack([prox_project(Znew[i] / wnew[i], alpha_t, cset) for i in range(n)])
    return EngineState(Z=Znew, Y=Ynew, w=wnew, blocks=state.blocks), eta, U


def closed_form_dual_matrix(mats, u_hist, eta_hist, t, owners):
    """All-coordinate closed form of the dual state at round t.

    Evaluates, for every node i and coordinate k owned by node o(k),
    n * sum_s [M(t-1:s+1)]_{i,o(k)} u_{o(k)}^k(s)
      + sum_s sum_j [M(t-1:s)]_{ij} eta_j^k(s),
    using suffix window products of the per-round mixing matrices.
    """
    u_hist = np.asarray(u_hist, dtype=float)
    eta_hist = np.asarray(eta_hist, dtype=float)
    T_avail, n, d = eta_hist.shape
    if t > T_avail:
        raise ValueError("histories shorter than requested round")
    out = np.zeros((n, d))
    owners = np.asarray(owners, dtype=np.int64)
    suffix = np.eye(n)  # M(t-1 : s) built downward from s = t
    for s in range(t - 1, -1, -1):
        M = mats[s]
        M = M.entries if isinstance(M, MixingMatrix) else np.asarray(M, dtype=float)
        # at this point suffix == M(t-1 : s+1)
        uvec = u_hist[s][owners, np.arange(d)]
        out += n * suffix[:, owners] * uvec[None, :]
        suffix = suffix @ M
        out += suffix @ eta_hist[s]
    return out


def _owner_for(u_hist, k, blocks):
    if blocks is not None:
        return int(blocks.owners()[k])
    return k


def closed_form_dual_c(W_seq, u_hist, eta_hist, i, k, t, blocks=None):
    """Scalar closed form for the circulation engine at (node i, coord k, round t)."""
    u_hist = np.asarray(u_hist, dtype=float)
    if u_hist.ndim == 2:  # scalar-per-node layout: coordinate k belongs to node k
        n = u_hist.shape[1]
        emb = np.zeros((u_hist.shape[0], n, n))
        emb[:, np.arange(n), np.arange(n)] = u_hist
        u_hist = emb
    owners = blocks.owners() if blocks is not None else np.arange(u_hist.shape[1])
    return float(closed_form_dual_matrix(W_seq, u_hist, eta_hist, t, owners)[i, k])


def closed_form_dual_ps(A_seq, u_hist, eta_hist, i, k, t, blocks=None):
    """Scalar closed form for the push-sum engine; same algebra with A(t)."""
    return closed_form_dual_c(A_seq, u_hist, eta_hist, i, k, t, blocks=blocks)


def dual_average_recursion(u_hist, eta_hist, t):
    """Network-average dual at round t from the noise and signal histories.

    zbar(t) = sum_{s<t} [ mean_i eta_i(s) + u(s) ] with u(s) the stacked
    per-coordinate signal of each coordinate's owning node.
    """
    eta_hist = np.asarray(eta_hist, dtype=float)
    u_hist = np.asarray(u_hist, dtype=float)
    d = eta_hist.shape[2]
    out = np.zeros(d)
    for s in range(t):
        out += eta_hist[s].mean(axis=0) + u_hist[s].sum(axis=0)
    return out


@dataclass
class SimConfig:
    """Everything one replicate needs to run end to end."""

    engine: str
    schedule: object
    cset: object
    events: list
    privacy: object
    blocks: BlockPartition
    noise_spec: GradientNoiseSpec = field(default_factory=GradientNoiseSpec)
    weighting: str = "uniform"
    master_seed: int = 0
    replicate: int = 0
    record_histories: bool = False

    @property
    def T(self):
        return len(self.events)


@dataclass
class SimulationResult:
    """Per-round decisions, consensus errors, regret inputs, provenance."""

    decisions: np.ndarray          # (T+1, d); row t is the decision before event t
    costs: np.ndarray              # (T,) realized f_t(x(t))
    running_costs: np.ndarray      # (T,) f_t of the running-average decision
    consensus_sq: np.ndarray       # (T, n) per-node squared consensus error
    trace: RegretTrace
    w_sums: np.ndarray | None = None
    u_hist: np.ndarray | None = None
    eta_hist: np.ndarray | None = None
    mixing: list | None = None
    provenance: dict = field(default_factory=dict)

    @property
    def consensus_total(self):
        return self.consensus_sq.sum(axis=1)

    @property
    def final_decision(self):
        return self.decisions[-1]


def _predraw_fields(cfg, n, d, T, sigma):
    eta = np.zeros((T, n, d))
    xi = np.zeros((T, n, d))
    bundle = RoundRng(cfg.master_seed, cfg.replicate)
    sd = np.sqrt(cfg.noise_spec.variance)
    for t in range(T):
        for i in range(n):
            if sigma > 0.0:
                eta[t, i] = laplace_vector(sigma, d, bundle.dp(i, t)).vector
            if sd > 0.0:
                lo, hi = cfg.blocks.block(i)
                xi[t, i, lo:hi] = sd * bundle.grad(i, t).standard_normal(hi - lo)
    return eta, xi


def _stack_events(events):
    m = events[0].batch
    if any(e.batch != m for e in events) or any(e.family != events[0].family
                                                for e in events):
        return None
    feats = np.stack([e.features for e in events])
    labels = np.stack([e.labels for e in events])
    return feats, labels, FAMILY_CODES[events[0].family], events[0].batch_norm


def _run_reference(cfg, mats, sigma):
    """Python round loop over the single-round operations (records histories)."""
    n, d, T = cfg.schedule.n, cfg.blocks.dim, cfg.T
    state = initial_state(n, d, cfg.cset, cfg.blocks, pushsum=cfg.engine == ENGINE_PS)
    bundle = RoundRng(cfg.master_seed, cfg.replicate)
    decisions = np.empty((T + 1, d))
    cons = np.empty((T, n))
    w_sums = np.empty(T + 1)
    decisions[0] = state.decision()
    w_sums[0] = state.w.sum()
    u_hist = np.zeros((T, n, d)) if cfg.record_histories else None
    eta_hist = np.zeros((T, n, d)) if cfg.record_histories else None
    step = dpsda_c_round if cfg.engine == ENGINE_C else dpsda_ps_round
    for t in range(T):
        if cfg.engine == ENGINE_PS:
            ratio = state.Z / state.w[:, None]
            zbar = state.Z.mean(axis=0)
            cons[t] = ((ratio - zbar) ** 2).sum(axis=1)
        else:
            zbar = state.Z.mean(axis=0)
            cons[t] = ((state.Z - zbar) ** 2).sum(axis=1)
        M = mats[t % cfg.schedule.period]
        state, eta, U = step(state, M, cfg.events[t], cfg.privacy, bundle, t,
                             noise_spec=cfg.noise_spec, cset=cfg.cset)
        if cfg.record_histories:
            u_hist[t] = U
            eta_hist[t] = eta
        decisions[t + 1] = state.decision()
        w_sums[t + 1] = state.w.sum()
    return decisions, cons, w_sums, u_hist, eta_hist


def run_simulation(cfg):
    """Run T synchronous rounds; deterministic given (config, master seed).

    Records the decision committed before each event, its realized cost,
    the running-average decision's cost, and the per-node squared
    consensus error at commit time.  The numba kernel is used when
    available unless histories are requested or DPDA_NO_NUMBA=1.
    """
    n, d, T = cfg.schedule.n, cfg.blocks.dim, cfg.T
    if cfg.blocks.n != n:
        raise ValueError("block partition does not match node count")
    if cfg.engine not in (ENGINE_C, ENGINE_PS):
        raise ValueError(f"unknown engine {cfg.engine!r}")
    if cfg.engine == ENGINE_C and cfg.schedule.directed:
        raise ValueError("circulation engine needs an undirected schedule")
    if cfg.engine == ENGINE_PS and not cfg.schedule.directed:
        raise ValueError("push-sum engine needs a directed schedule")
    mats = mixing_sequence(cfg.schedule, cfg.weighting)
    sigma = sigma_for_round(cfg.privacy, n, 0)

    if T == 0:
        state = initial_state(n, d, cfg.cset, cfg.blocks)
        return SimulationResult(
            decisions=state.decision()[None, :], costs=np.zeros(0),
            running_costs=np.zeros(0), consensus_sq=np.zeros((0, n)),
            trace=RegretTrace(), w_sums=np.ones(1) * n,
            provenance={"master_seed": cfg.master_seed, "replicate": cfg.replicate,
                        "backend": "none"},
        )

    stacked = _stack_events(cfg.events)
    use_kernel = (_kernels.numba_enabled() and not cfg.record_histories
                  and stacked is not None)
    if use_kernel:
        feats, labels, family, batch_norm = stacked
        eta, xi = _predraw_fields(cfg, n, d, T, sigma)
        starts = np.asarray(cfg.blocks.starts, dtype=np.int64)
        alphas = np.array([step_alpha(t) for t in range(T)])
        Mseq = np.stack([m.entries for m in mats])
        set_kind = 0 if cfg.cset.kind == BOX else 1
        lo = cfg.cset.lo if cfg.cset.kind == BOX else np.zeros(d)
        hi = cfg.cset.hi if cfg.cset.kind == BOX else np.zeros(d)
        radius = cfg.cset.radius
        try:
            if cfg.engine == ENGINE_C:
                rowsums = Mseq.sum(axis=2)
                decisions, cons = _kernels.run_c_rounds(
                    Mseq, rowsums, feats, labels, family, batch_norm,
                    eta, xi, starts, alphas, set_kind, lo, hi, radius)
                w_sums = None
            else:
                decisions, cons, w_hist = _kernels.run_ps_rounds(
                    Mseq, feats, labels, family, batch_norm,
                    eta, xi, starts, alphas, set_kind, lo, hi, radius)
                w_sums = w_hist.sum(axis=1)
        except ValueError as exc:
            raise InternalInvariantError(str(exc)) from exc
        u_hist = eta_hist = None
        backend = "numba"
    else:
        decisions, cons, w_sums, u_hist, eta_hist = _run_reference(cfg, mats, sigma)
        if cfg.engine == ENGINE_C:
            w_sums = None
        backend = "numpy"

    for t in range(T + 1):
        if not cfg.cset.contains(decisions[t], tol=1e-9):
            raise InternalInvariantError(f"infeasible decision at round {t}")

    running = np.cumsum(decisions[:T], axis=0) / np.arange(1, T + 1)[:, None]
    costs = np.array([loss_eval(cfg.events[t], decisions[t]) for t in range(T)])
    running_costs = np.array([loss_eval(cfg.events[t], running[t]) for t in range(T)])
    trace = RegretTrace()
    for t in range(T):
        trace.record(t, costs[t], running_costs[t])
    return SimulationResult(
        decisions=decisions, costs=costs, running_costs=running_costs,
        consensus_sq=cons, trace=trace, w_sums=w_sums,
        u_hist=u_hist, eta_hist=eta_hist, mixing=mats,
        provenance={"master_seed": cfg.master_seed, "replicate": cfg.replicate,
                    "backend": backend},
    )
