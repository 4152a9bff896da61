"""Proximal projection, constraint-set geometry, and the step schedule.

The proximal function is fixed to psi(x) = ||x||^2 / 2, which is
1-strongly convex, so the projection argmin_{x in set} <z,x> + psi(x)/alpha
is the Euclidean projection of -alpha z onto the set: a coordinate clamp
for boxes, a radial rescale for balls.
"""

from dataclasses import dataclass

import numpy as np

BOX = "box"
BALL = "ball"


@dataclass(frozen=True)
class ConstraintSet:
    """Feasible set for each node's primal vector.

    ``D_chi`` is the per-coordinate diameter (max coordinate width for a
    box, 2B for a ball); ``C_psi`` is the exact maximum of psi over the set.
    """

    kind: str
    dim: int
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None
    radius: float = 0.0
    D_chi: float = 0.0
    C_psi: float = 0.0

    def contains(self, x, tol=1e-12):
        x = np.asarray(x, dtype=float)
        if self.kind == BOX:
            return bool(np.all(x >= self.lo - tol) and np.all(x <= self.hi + tol))
        return bool(np.linalg.norm(x) <= self.radius + tol)


def box_set(lo, hi, dim=None):
    """Axis-aligned box with per-coordinate bounds (scalars broadcast)."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if lo.ndim == 0 or hi.ndim == 0:
        if dim is None:
            raise ValueError("dim required with scalar bounds")
        lo = np.broadcast_to(lo, (dim,)).copy()
        hi = np.broadcast_to(hi, (dim,)).copy()
    if lo.shape != hi.shape:
        raise ValueError("lo/hi shape mismatch")
    if np.any(lo >= hi):
        raise ValueError("box needs lo < hi per coordinate")
    lo.flags.writeable = False
    hi.flags.writeable = False
    d = lo.shape[0]
    return ConstraintSet(
        kind=BOX, dim=d, lo=lo, hi=hi,
        D_chi=float(np.max(hi - lo)),
        C_psi=0.5 * float(np.sum(np.maximum(lo**2, hi**2))),
    )


def ball_set(radius, dim):
    """Euclidean ball of the given radius centered at the origin."""
    if not radius > 0:
        raise ValueError("ball radius must be positive")
    return ConstraintSet(kind=BALL, dim=dim, radius=float(radius),
                         D_chi=2.0 * radius, C_psi=0.5 * radius * radius)


def psi(x):
    """Proximal function ||x||^2 / 2."""
    x = np.asarray(x, dtype=float)
    return 0.5 * float(x @ x)


def euclid_project(cset, v):
    """Euclidean projection of v onto the set."""
    v = np.asarray(v, dtype=float)
    if cset.kind == BOX:
        return np.minimum(np.maximum(v, cset.lo), cset.hi)
    nrm = np.linalg.norm(v)
    if nrm <= cset.radius:
        return v.copy()
    return v * (cset.radius / nrm)


def prox_project(z, alpha, cset):
    """argmin over the set of <z,x> + psi(x)/alpha.

    With psi quadratic the unconstrained minimizer is -alpha z and the
    constrained one is its Euclidean projection; strong convexity makes it
    unique.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    return euclid_project(cset, -alpha * np.asarray(z, dtype=float))


def step_alpha(t):
    """Step size 1/sqrt(t), extended to alpha(0) = 1."""
    if t < 0:
        raise ValueError("round index must be nonnegative")
    return 1.0 if t == 0 else 1.0 / np.sqrt(t)


@dataclass(frozen=True)
class StepSchedule:
    """Inverse square-root step rule (the only one the engines use)."""

    rule: str = "invsqrt"

    def __post_init__(self):
        if self.rule != "invsqrt":
            raise ValueError(f"unknown step rule {self.rule!r}")

    def alpha(self, t):
        return step_alpha(t)

    def alphas(self, T):
        return np.array([step_alpha(t) for t in range(T)])
