"""Projection of gain gradients onto zero-element constraint hyperplanes.

A constraint has the form ``G @ D @ H == 0``.  Zero-element patterns map to
one selector pair per forbidden entry (``G = e_j^T``, ``H = e_i``), but the
projection routines accept general full-rank ``G``/``H`` blocks as well.
"""

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .exceptions import DimensionError, SingularConstraintError

__all__ = [
    "ZeroPattern",
    "SelectorConstraint",
    "pattern_to_selectors",
    "project_single",
    "project_multi",
    "entrywise_mask",
    "project",
    "constraint_residual",
]


@dataclass(frozen=True)
class ZeroPattern:
    """Set of gain entries ``(row, col)`` (0-based) that must stay zero.

    Parameters
    ----------
    shape : (m, n)
        Shape of the gain matrix the pattern applies to.
    entries : iterable of (int, int)
        0-based ``(row, col)`` pairs. Duplicates are rejected.
    """

    shape: tuple
    entries: frozenset

    def __init__(self, shape, entries=()):
        m, n = (int(s) for s in shape)
        if m < 1 or n < 1:
            raise DimensionError(f"pattern shape must be positive, got {(m, n)}")
        pairs = [(int(j), int(i)) for j, i in entries]
        if len(set(pairs)) != len(pairs):
            raise ValueError(f"duplicate entries in zero pattern: {pairs}")
        for j, i in pairs:
            if not (0 <= j < m and 0 <= i < n):
                raise DimensionError(f"pattern entry {(j, i)} outside a {m}x{n} gain")
        object.__setattr__(self, "shape", (m, n))
        object.__setattr__(self, "entries", frozenset(pairs))

    @classmethod
    def from_one_based(cls, shape, pairs):
        """Build a pattern from 1-based ``[row, col]`` pairs (k_{ji} notation)."""
        return cls(shape, [(int(j) - 1, int(i) - 1) for j, i in pairs])

    @property
    def zero_mask(self):
        """Boolean m×n array, True on the constrained entries."""
        mask = np.zeros(self.shape, dtype=bool)
        for j, i in self.entries:
            mask[j, i] = True
        return mask

    def sorted_entries(self):
        return sorted(self.entries)

    def violations(self, k, tol=0.0):
        """Return the constrained entries of ``k`` whose magnitude exceeds ``tol``."""
        k = np.asarray(k, dtype=float)
        if k.shape != self.shape:
            raise DimensionError(f"matrix shape {k.shape} does not match pattern {self.shape}")
        return [(j, i) for j, i in self.sorted_entries() if abs(k[j, i]) > tol]

    def __len__(self):
        return len(self.entries)


@dataclass(frozen=True)
class SelectorConstraint:
    """Linear constraint ``g_matrix @ D @ h_matrix == 0``.

    ``g_matrix`` is p×m with full row rank and ``h_matrix`` is n×q with full
    column rank, so that ``G G^T`` and ``H^T H`` are invertible.
    """

    g_matrix: np.ndarray
    h_matrix: np.ndarray

    def __post_init__(self):
        g = np.atleast_2d(np.asarray(self.g_matrix, dtype=float))
        h = np.asarray(self.h_matrix, dtype=float)
        if h.ndim == 1:
            h = h[:, None]
        if np.linalg.matrix_rank(g) < g.shape[0]:
            raise SingularConstraintError("G must have full row rank (G G^T is singular)")
        if np.linalg.matrix_rank(h) < h.shape[1]:
            raise SingularConstraintError("H must have full column rank (H^T H is singular)")
        g.setflags(write=False)
        h.setflags(write=False)
        object.__setattr__(self, "g_matrix", g)
        object.__setattr__(self, "h_matrix", h)

    def evaluate(self, d):
        return self.g_matrix @ np.asarray(d, dtype=float) @ self.h_matrix


def pattern_to_selectors(pattern):
    """One selector constraint per patterned entry, in sorted entry order."""
    m, n = pattern.shape
    out = []
    for j, i in pattern.sorted_entries():
        g = np.zeros((1, m))
        g[0, j] = 1.0
        h = np.zeros((n, 1))
        h[i, 0] = 1.0
        out.append(SelectorConstraint(g, h))
    return out


def _check_shapes(grad, c):
    if c.g_matrix.shape[1] != grad.shape[0] or c.h_matrix.shape[0] != grad.shape[1]:
        raise DimensionError(
            f"constraint with G {c.g_matrix.shape}, H {c.h_matrix.shape} "
            f"does not act on a {grad.shape} matrix"
        )


def project_single(grad, c):
    """Frobenius projection of ``grad`` onto ``{D : G D H = 0}``.

    ``D = g - G^T (G G^T)^{-1} G g H (H^T H)^{-1} H^T``.
    """
    grad = np.asarray(grad, dtype=float)
    _check_shapes(grad, c)
    g, h = c.g_matrix, c.h_matrix
    try:
        left = np.linalg.solve(g @ g.T, g)          # (G G^T)^{-1} G
        right = np.linalg.solve(h.T @ h, h.T)       # (H^T H)^{-1} H^T
    except np.linalg.LinAlgError as exc:
        raise SingularConstraintError(f"singular constraint Gram matrix: {exc}") from exc
    return grad - g.T @ (left @ grad @ h) @ right


def _stacked_operator(cs):
    """Rows of the linear map ``D -> (G_1 D H_1, G_2 D H_2, ...)`` on row-major ``vec(D)``."""
    # vec_r(G D H) = (G kron H^T) vec_r(D)
    return np.vstack([np.kron(c.g_matrix, c.h_matrix.T) for c in cs])


def _rank_deficient(op):
    if op.shape[0] > op.shape[1]:
        return True
    return np.linalg.matrix_rank(op) < op.shape[0]


def _find_singular_pair(cs):
    for a, b in combinations(range(len(cs)), 2):
        if _rank_deficient(_stacked_operator([cs[a], cs[b]])):
            return a, b
    return None


def project_multi(grad, cs):
    """Frobenius projection onto the intersection of several ``G_i D H_i = 0``.

    The stationarity conditions give ``D = g - sum_i G_i^T Lambda_i H_i^T``
    with multipliers fixed by the flattened system ``M M^T lam = M vec(g)``,
    where ``M`` stacks every constraint operator.  That system is solved
    through a QR factorization of ``M^T`` (``M^T = Q R``), which yields
    ``D = g - Q Q^T g`` without squaring the conditioning of ``M``.

    Raises
    ------
    SingularConstraintError
        If the multiplier system is rank deficient (redundant or
        overlapping constraints). The message names the first offending
        pair of constraint indices when one can be isolated.
    """
    grad = np.asarray(grad, dtype=float)
    cs = list(cs)
    if not cs:
        return grad.copy()
    for c in cs:
        _check_shapes(grad, c)
    op = _stacked_operator(cs)
    if _rank_deficient(op):
        pair = _find_singular_pair(cs)
        where = f"constraints {pair[0]} and {pair[1]}" if pair else "the constraint set"
        raise SingularConstraintError(f"multiplier system is singular: {where} are linearly dependent")
    q, _ = np.linalg.qr(op.T)
    v = grad.ravel()
    return (v - q @ (q.T @ v)).reshape(grad.shape)


def entrywise_mask(grad, pattern):
    """Zero out exactly the patterned entries of ``grad``."""
    grad = np.array(grad, dtype=float)
    if grad.shape != pattern.shape:
        raise DimensionError(f"gradient shape {grad.shape} does not match pattern {pattern.shape}")
    grad[pattern.zero_mask] = 0.0
    return grad


def project(grad, cs):
    """Dispatch to the single- or multi-constraint projection."""
    cs = list(cs)
    if len(cs) == 1:
        return project_single(grad, cs[0])
    return project_multi(grad, cs)


def constraint_residual(d, cs):
    """Largest absolute entry of ``G_i d H_i`` over all constraints (0 if none)."""
    return max((float(np.max(np.abs(c.evaluate(d)))) for c in cs), default=0.0)
