"""Online loss sequences, gradient oracles, hindsight optimum, regret traces."""

from dataclasses import dataclass, field

import numpy as np

from .projection import euclid_project

LEAST_SQUARES = "least_squares"
HINGE = "hinge"
LOGISTIC = "logistic"
FAMILIES = (LEAST_SQUARES, HINGE, LOGISTIC)
FAMILY_CODES = {LEAST_SQUARES: 0, HINGE: 1, LOGISTIC: 2}


@dataclass(frozen=True)
class LossEvent:
    """One revealed objective: a loss family applied to a data batch.

    ``features`` is (batch, d); labels are reals for least squares and
    +-1 for hinge/logistic.  ``batch_norm`` averages the batch (1/|D_t|).
    """

    family: str
    features: np.ndarray
    labels: np.ndarray
    batch_norm: bool = True

    def __post_init__(self):
        feats = np.atleast_2d(np.asarray(self.features, dtype=float))
        labels = np.atleast_1d(np.asarray(self.labels, dtype=float))
        if self.family not in FAMILIES:
            raise ValueError(f"unknown loss family {self.family!r}")
        if feats.shape[0] != labels.shape[0]:
            raise ValueError("feature/label batch size mismatch")
        if self.family in (HINGE, LOGISTIC) and not np.all(np.abs(labels) == 1.0):
            raise ValueError(f"{self.family} labels must be +-1")
        feats.flags.writeable = False
        labels.flags.writeable = False
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)

    @property
    def dim(self):
        return self.features.shape[1]

    @property
    def batch(self):
        return self.features.shape[0]


@dataclass(frozen=True)
class GradientNoiseSpec:
    """Zero-mean Gaussian error added to each block-gradient coordinate."""

    variance: float = 0.1

    def __post_init__(self):
        if self.variance < 0:
            raise ValueError("variance must be nonnegative")


def _softplus(u):
    # log(1 + exp(u)) without overflow for large |u|
    return np.maximum(u, 0.0) + np.log1p(np.exp(-np.abs(u)))


def _check_dim(event, x):
    x = np.asarray(x, dtype=float)
    if x.shape != (event.dim,):
        raise ValueError(f"dimension mismatch: x has shape {x.shape}, event dim {event.dim}")
    return x


def loss_eval(event, x):
    """Batch(-averaged) loss at x."""
    x = _check_dim(event, x)
    margins = event.features @ x
    if event.family == LEAST_SQUARES:
        vals = (event.labels - margins) ** 2
    elif event.family == HINGE:
        vals = np.maximum(0.0, 1.0 - event.labels * margins)
    else:
        vals = _softplus(-event.labels * margins)
    total = float(vals.sum())
    return total / event.batch if event.batch_norm else total


def loss_grad(event, x):
    """Batch(-averaged) (sub)gradient at x; hinge uses 0 at the kink."""
    x = _check_dim(event, x)
    margins = event.features @ x
    if event.family == LEAST_SQUARES:
        coef = -2.0 * (event.labels - margins)
    elif event.family == HINGE:
        active = event.labels * margins < 1.0
        coef = np.where(active, -event.labels, 0.0)
    else:
        bm = event.labels * margins
        # sigmoid(-bm); clipping the exponent keeps the huge-margin tail finite
        sig = 1.0 / (1.0 + np.exp(np.minimum(bm, 700.0)))
        coef = -event.labels * sig
    g = coef @ event.features
    return g / event.batch if event.batch_norm else g


def noisy_block_grad(event, y, block, noise_spec, rng):
    """Block slice of the gradient at y plus i.i.d. Gaussian noise per coordinate."""
    start, stop = block
    if not (0 <= start <= stop <= event.dim):
        raise ValueError(f"block ({start},{stop}) outside [0,{event.dim})")
    g = loss_grad(event, y)[start:stop]
    if noise_spec.variance == 0.0:
        return g
    return g + np.sqrt(noise_spec.variance) * rng.standard_normal(stop - start)


@dataclass
class HindsightResult:
    v: np.ndarray
    value: float
    pg_norm: float
    converged: bool
    iterations: int


def _stacked(events):
    feats = np.concatenate([e.features for e in events], axis=0)
    labels = np.concatenate([e.labels for e in events])
    weights = np.concatenate([
        np.full(e.batch, 1.0 / e.batch if e.batch_norm else 1.0) for e in events
    ])
    return feats, labels, weights


def _cumulative(events, A, b, w, v):
    """Value and gradient of the summed objective at v (single family fast path)."""
    family = events[0].family
    m = A @ v
    if family == LEAST_SQUARES:
        r = b - m
        return float(w @ r**2), -2.0 * ((w * r) @ A)
    if family == HINGE:
        bm = b * m
        val = float(w @ np.maximum(0.0, 1.0 - bm))
        coef = np.where(bm < 1.0, -b, 0.0) * w
        return val, coef @ A
    bm = b * m
    val = float(w @ _softplus(-bm))
    sig = 1.0 / (1.0 + np.exp(np.minimum(bm, 700.0)))
    return val, (-b * sig * w) @ A


def hindsight_optimum(events, cset, tol=1e-8, max_iter=100_000):
    """Best fixed feasible point for the revealed sequence, by projected gradient.

    Uses the decaying step 1/(L_total sqrt(k)) with L_total a curvature
    scale of the summed objective, returns the best iterate seen, and flags
    non-convergence when the projected-gradient norm is still above 1e-4 at
    the iteration cap.
    """
    if not events:
        raise ValueError("hindsight optimum needs a nonempty event sequence")
    if any(e.family != events[0].family for e in events):
        raise ValueError("hindsight solver expects a single loss family per stream")
    if events[0].dim != cset.dim:
        raise ValueError("event dimension does not match constraint set")
    A, b, w = _stacked(events)
    d = cset.dim

    # curvature scale: power iteration on the weighted Gram matrix
    scale = {LEAST_SQUARES: 2.0, LOGISTIC: 0.25, HINGE: 1.0}[events[0].family]
    v_it = np.ones(d) / np.sqrt(d)
    for _ in range(20):
        u = (w * (A @ v_it)) @ A
        nrm = np.linalg.norm(u)
        if nrm == 0.0:
            break
        v_it = u / nrm
    lam_max = float(v_it @ ((w * (A @ v_it)) @ A))
    L_total = max(scale * lam_max, 1e-12)

    v = euclid_project(cset, np.zeros(d))
    best_v, best_val = v, _cumulative(events, A, b, w, v)[0]
    probe = 1.0 / L_total
    pg_norm = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        val, g = _cumulative(events, A, b, w, v)
        if val < best_val:
            best_val, best_v = val, v
        pg = (v - euclid_project(cset, v - probe * g)) / probe
        pg_norm = float(np.linalg.norm(pg))
        if pg_norm < tol:
            break
        v = euclid_project(cset, v - g / (L_total * np.sqrt(it)))
    final_val, _ = _cumulative(events, A, b, w, best_v)
    return HindsightResult(v=best_v, value=final_val, pg_norm=pg_norm,
                           converged=pg_norm <= 1e-4, iterations=it)


def hindsight_prefix_values(events, v_star):
    """Cumulative cost of the fixed point v* after each round."""
    costs = np.array([loss_eval(e, v_star) for e in events])
    return np.cumsum(costs)


@dataclass
class RegretTrace:
    """Per-round realized and running-average costs plus hindsight accounting.

    Cumulative sums are exact prefix sums; regret(t) is cumulative cost
    minus the hindsight value of the best fixed decision over the same
    prefix.
    """

    costs: list = field(default_factory=list)
    running_costs: list = field(default_factory=list)
    hindsight_value: np.ndarray | None = None
    v_star: np.ndarray | None = None

    def record(self, t, cost, running_cost):
        if t != len(self.costs):
            raise ValueError(f"rounds must be recorded in order, expected {len(self.costs)}")
        self.costs.append(float(cost))
        self.running_costs.append(float(running_cost))

    def attach_hindsight(self, v_star, prefix_values):
        prefix_values = np.asarray(prefix_values, dtype=float)
        if prefix_values.shape != (len(self.costs),):
            raise ValueError("hindsight prefix length mismatch")
        self.v_star = np.asarray(v_star, dtype=float)
        self.hindsight_value = prefix_values

    @property
    def cum_costs(self):
        return np.cumsum(self.costs)

    @property
    def cum_running_costs(self):
        return np.cumsum(self.running_costs)

    def regret(self):
        if self.hindsight_value is None:
            raise ValueError("hindsight values not attached")
        return self.cum_costs - self.hindsight_value

    def running_avg_regret(self):
        if self.hindsight_value is None:
            raise ValueError("hindsight values not attached")
        return self.cum_running_costs - self.hindsight_value


def regret_update(trace, t, event, x_t, x_tilde_t):
    """Append round t's realized and running-average costs to the trace."""
    trace.record(t, loss_eval(event, x_t), loss_eval(event, x_tilde_t))
    return trace


def synth_olr_stream(rng, d, T, noise_var=0.2):
    """Synthetic online regression stream: one least-squares event per round.

    Features are uniform on [-0.5, 0.5], the hidden model has standard
    normal entries, and targets carry Gaussian observation noise of the
    given variance.  Returns the events and the hidden model.
    """
    if d < 1:
        raise ValueError("dimension must be at least 1")
    x_hat = rng.standard_normal(d)
    events = []
    for _ in range(T):
        a = rng.uniform(-0.5, 0.5, size=d)
        rho = np.sqrt(noise_var) * rng.standard_normal() if noise_var > 0 else 0.0
        b = float(a @ x_hat + rho)
        events.append(LossEvent(LEAST_SQUARES, a[None, :], np.array([b])))
    return events, x_hat
