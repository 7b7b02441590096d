"""Brute-force oracles shared by the tests."""

import numpy as np


def whitney_rule_counts(E, k_max: int) -> dict:
    """#W_k by scanning every dyadic cube: Q is selected iff dist(Q,E) >= diam(Q) and its parent fails the rule."""
    D, d = E.denom, E.dim
    passes = {}
    for k in range(k_max + 1):
        n = 1 << k
        grids = np.meshgrid(*[np.arange(n, dtype=np.int64)] * d, indexing="ij")
        best = None
        for lo, side in zip(E.lo, E.side):
            g2 = np.zeros(grids[0].shape, dtype=np.int64)
            for a in range(d):
                c_lo, c_hi = grids[a] * D, (grids[a] + 1) * D
                b_lo, b_hi = int(lo[a]) << k, int(lo[a] + side[a]) << k
                gap = np.maximum(0, np.maximum(b_lo - c_hi, c_lo - b_hi))
                g2 += gap * gap
            best = g2 if best is None else np.minimum(best, g2)
        passes[k] = best >= d * D * D
    counts = {}
    for k in range(k_max + 1):
        sel = passes[k]
        if k > 0:
            parent = passes[k - 1]
            for a in range(d):
                parent = np.repeat(parent, 2, axis=a)
            sel = sel & ~parent
        counts[k] = int(sel.sum())
    return counts
