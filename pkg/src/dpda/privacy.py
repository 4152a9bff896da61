"""Laplace mechanism on dual variables: sensitivity, calibration, sampling.

Noise scale follows sigma = sensitivity / epsilon.  The theoretical
sensitivity is 2 n Lhat with Lhat the second-moment bound on the noisy
block gradient; a fixed sensitivity can be configured instead (the desk
experiments assume sensitivity 1 so that sigma = 1/epsilon).
"""

from dataclasses import dataclass

import numpy as np

THEORETICAL = "theoretical"
FIXED = "fixed"


@dataclass(frozen=True)
class PrivacyParams:
    """Privacy budget and sensitivity model.

    ``epsilon=None`` means non-private: sigma is zero and the pipeline is
    bitwise identical to running with zero noise injected.
    """

    epsilon: float | None
    sensitivity_mode: str = THEORETICAL
    delta0: float = 1.0
    lhat: float = 1.0

    def __post_init__(self):
        if self.epsilon is not None and not self.epsilon > 0:
            raise ValueError("epsilon must be positive when present")
        if self.sensitivity_mode not in (THEORETICAL, FIXED):
            raise ValueError(f"unknown sensitivity mode {self.sensitivity_mode!r}")
        if self.sensitivity_mode == FIXED and not self.delta0 > 0:
            raise ValueError("fixed sensitivity must be positive")
        if not self.lhat > 0:
            raise ValueError("lhat must be positive")


NON_PRIVATE = PrivacyParams(epsilon=None)


@dataclass(frozen=True)
class NoiseDraw:
    """One node's Laplace perturbation vector for one round."""

    vector: np.ndarray
    round: int = -1
    node: int = -1

    def __post_init__(self):
        vec = np.asarray(self.vector, dtype=float)
        vec.flags.writeable = False
        object.__setattr__(self, "vector", vec)


def sensitivity(params, n):
    """Worst-case dual shift from swapping one loss: 2 n Lhat, or the fixed value."""
    if params.sensitivity_mode == FIXED:
        return params.delta0
    return 2.0 * n * params.lhat


def sigma_for_round(params, n, t):
    """Laplace scale for round t; constant in t since the sensitivity bound is."""
    if params.epsilon is None:
        return 0.0
    return sensitivity(params, n) / params.epsilon


def laplace_vector(sigma, d, rng_stream, round_idx=-1, node=-1):
    """d i.i.d. Laplace(sigma) samples via the inverse CDF.

    Draws u uniform on (-1/2, 1/2) and returns sigma * sign(u) * ln(1 - 2|u|);
    sigma = 0 short-circuits to the zero vector without consuming the stream.
    """
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    if d < 1:
        raise ValueError("dimension must be at least 1")
    if sigma == 0.0:
        return NoiseDraw(np.zeros(d), round_idx, node)
    u = rng_stream.random(d) - 0.5
    # rng.random() can land exactly on -0.5; keep the log argument positive
    arg = np.fmax(1.0 - 2.0 * np.abs(u), 1e-300)
    return NoiseDraw(sigma * np.sign(u) * np.log(arg), round_idx, node)


def perturb_dual(z, noise):
    """Noisy message h = z + eta broadcast in place of the true dual."""
    z = np.asarray(z, dtype=float)
    if z.shape != noise.vector.shape:
        raise ValueError(f"dimension mismatch: {z.shape} vs {noise.vector.shape}")
    return z + noise.vector
