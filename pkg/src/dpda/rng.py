"""Keyed counter-based random substreams.

Every random draw in a simulation comes from a Philox generator keyed by
(master_seed, replicate, node, round, purpose).  Philox is counter-based,
so substreams for distinct keys are independent and can be opened in any
order; coupled runs share every stream except the ones deliberately
re-keyed (e.g. the redrawn loss batch in a privacy audit).
"""

import numpy as np

# purpose tags
DP_NOISE = 0      # Laplace perturbation of the dual variable
GRAD_NOISE = 1    # gradient evaluation noise
STREAM = 2        # loss-stream data
STREAM_ALT = 3    # redrawn loss event for audit adjacency
SPLIT = 4         # dataset train/test shuffle
BATCH = 5         # per-round batch sampling

_MASK64 = (1 << 64) - 1


def substream(master_seed, replicate=0, node=0, round_idx=0, purpose=0):
    """Independent generator for one (seed, replicate, node, round, purpose) key."""
    if not 0 <= replicate < (1 << 20):
        raise ValueError(f"replicate {replicate} out of key range")
    if not 0 <= node < (1 << 12):
        raise ValueError(f"node {node} out of key range")
    if not 0 <= round_idx < (1 << 24):
        raise ValueError(f"round {round_idx} out of key range")
    if not 0 <= purpose < (1 << 8):
        raise ValueError(f"purpose {purpose} out of key range")
    hi = (replicate << 44) | (node << 32) | (round_idx << 8) | purpose
    key = np.array([master_seed & _MASK64, hi & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
