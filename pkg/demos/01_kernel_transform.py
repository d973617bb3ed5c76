"""Turning an unordered measurement set into an ordered pseudo-measurement.

Three measurements arrive with no indication of which target produced
which.  Placing a Gaussian kernel on each and summing gives a function
that does not care about their order; evaluating it at a fixed set of test
vectors yields an ordinary vector a Kalman-type update can consume.
"""

import numpy as np

from kernel_sme import KernelConfig, MeasurementSet, kernel_transform, kernel_transform_eval, select_test_vectors

y = np.array([[0.0, 0.0], [1.5, 0.2], [-0.4, 1.1]])
kernel = KernelConfig(0.1 * np.eye(2))
meas = MeasurementSet(y)

print("F(z) at the first measurement:", kernel_transform_eval(meas, kernel, y[0]))
print("F(z) halfway between the first two:", kernel_transform_eval(meas, kernel, 0.5 * (y[0] + y[1])))

# Test vectors: each measurement plus and minus every column of sqrt(d K).
tests = select_test_vectors(meas, kernel)
print(f"\n{len(tests)} test vectors (2 d N = {2 * 2 * 3}):")
for v, src, direction in zip(tests.vectors, tests.source, tests.direction):
    print(f"  measurement {src}  axis {abs(direction)}{'+' if direction > 0 else '-'}  ->  {np.round(v, 4)}")

s = kernel_transform(meas, kernel, tests)
print("\npseudo-measurement s:", np.round(s, 5))

# Shuffling the measurements only reorders the test vectors; each test vector keeps its value.
shuffled = MeasurementSet(y[[2, 0, 1]])
tests_shuffled = select_test_vectors(shuffled, kernel)
s_shuffled = kernel_transform(shuffled, kernel, tests_shuffled)
pairs_a = sorted(zip(map(tuple, tests.vectors.round(12)), s))
pairs_b = sorted(zip(map(tuple, tests_shuffled.vectors.round(12)), s_shuffled))
print("same (test vector, value) pairs after shuffling:", pairs_a == pairs_b)
