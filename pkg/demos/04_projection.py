"""Projecting a gradient onto a zero pattern and onto general G D H = 0 constraints."""
import numpy as np

from structlqr import SelectorConstraint, ZeroPattern, entrywise_mask, pattern_to_selectors, project
from structlqr.projection import constraint_residual

rng = np.random.default_rng(1)
g = rng.normal(size=(2, 4))

pattern = ZeroPattern.from_one_based((2, 4), [[1, 3], [1, 4], [2, 1], [2, 2]])
cs = pattern_to_selectors(pattern)
d = project(g, cs)
print("projected:\n", d.round(4))
print("same as masking:", np.allclose(d, entrywise_mask(g, pattern), atol=1e-12))

# a coupling constraint: the two rows must have equal column sums
c = SelectorConstraint(np.array([[1.0, -1.0]]), np.ones((4, 1)))
d2 = project(g, [c])
print("row sums after projection:", d2.sum(axis=1).round(12), " residual", constraint_residual(d2, [c]))
print("descent: <g, D> =", np.sum(g * d2).round(6), ">= |D|^2/2 =", (0.5 * np.sum(d2 * d2)).round(6))
