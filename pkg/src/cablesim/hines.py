"""O(n) direct solver for tree-sparse linear systems.

The implicit schemes produce one equation per compartment with off-diagonal
entries only on tree edges. Elimination runs over compartments in decreasing
index (children before parents, by the topological-order invariant), then a
root-to-leaf back-substitution; the fixed order makes results bit-identical
across runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SingularSystem

#: Pivot magnitudes below this raise SingularSystem (defensive; the
#: implicit cable systems are strictly diagonally dominant).
PIVOT_FLOOR = 1e-300


@dataclass
class HinesSystem:
    """Tree-sparse system: one row per compartment.

    Row j reads  diagonal[j] * x[j] + lower[j] * x[parent(j)]
                 + sum over children q of upper[q] * x[q]  = rhs[j],
    i.e. lower[j] is row j's coefficient on its parent and upper[j] is the
    parent row's coefficient on j. lower/upper are 0 at the root.
    """

    diagonal: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    rhs: np.ndarray

    def dense(self, parent: np.ndarray) -> np.ndarray:
        """Dense matrix form, for oracles and debugging."""
        n = self.diagonal.size
        m = np.zeros((n, n))
        for j in range(n):
            m[j, j] = self.diagonal[j]
            p = parent[j]
            if p >= 0:
                m[j, p] = self.lower[j]
                m[p, j] = self.upper[j]
        return m


def hines_solve(system: HinesSystem, parent: np.ndarray) -> np.ndarray:
    """Solve the tree system in O(n); inputs are not modified."""
    d = system.diagonal.astype(float).copy()
    r = system.rhs.astype(float).copy()
    lo = system.lower
    up = system.upper
    n = d.size
    for j in range(n - 1, 0, -1):
        if abs(d[j]) < PIVOT_FLOOR:
            raise SingularSystem(f"pivot underflow at compartment index {j}")
        p = parent[j]
        f = up[j] / d[j]
        d[p] -= f * lo[j]
        r[p] -= f * r[j]
    if abs(d[0]) < PIVOT_FLOOR:
        raise SingularSystem("pivot underflow at the root")
    x = np.empty(n)
    x[0] = r[0] / d[0]
    for j in range(1, n):
        x[j] = (r[j] - lo[j] * x[parent[j]]) / d[j]
    return x
