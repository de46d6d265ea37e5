"""
Accelerating slowly convergent series
=====================================

Alternating series converge, but slowly: the error of the partial sums
of log(2) = 1 - 1/2 + 1/3 - ... shrinks like 1/n.  Sequence
transformations squeeze far more accuracy out of the same few terms.
"""

import math

import numpy as np

from accelerant.core import SequenceWindow
from accelerant.problems import series_generator
from accelerant.scalar import epsilon_scalar, iterated_aitken

# twelve partial sums of the alternating harmonic series
window = SequenceWindow(series_generator("log2", 12))
target = math.log(2.0)

print("raw partial sums")
for n in (3, 7, 11):
    value = window.term(n)
    print(f"  S_{n:<2d} = {value:.12f}   error {abs(value - target):.2e}")

# Aitken's delta-squared step, applied repeatedly: each level reuses the
# previous one's output as a new sequence
levels = iterated_aitken(window, max_k=3)
print("\niterated delta-squared")
for depth, level in enumerate(levels[1:], start=1):
    value = level[-1].value
    print(f"  level {depth}: {value:.12f}   error {abs(value - target):.2e}")

# the even columns of the lozenge table go deeper still: column 2k
# annihilates k geometric error modes at once
table = epsilon_scalar(window)
best = table.best_estimate()
print("\nlozenge table")
print(f"  deepest entry (column {best.order_k}, index {best.pilot_index_n}):"
      f" {best.value:.12f}")
print(f"  error {abs(best.value - target):.2e}"
      f"  -- vs {abs(window.term(11) - target):.2e} for the raw sum")

# the same twelve terms, so the entire gain is algebraic, not extra work
assert abs(best.value - target) < 1e-8
