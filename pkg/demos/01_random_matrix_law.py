"""How large is the biggest singular value of a Gaussian matrix?

For an N x n matrix with i.i.d. N(0, alpha^2) entries the answer settles
near alpha (sqrt(N) + sqrt(n)) once the matrix is a few hundred rows tall.
Everything else in the package leans on this, so we check it first.
"""

import math

from liprobust.experiments import read_csv, rmt_check
from liprobust.linalg import max_singular_value, sample_gaussian_matrix
from liprobust.lipschitz import rmt_max_singular
from liprobust.rng import Rng

print("size        predicted   measured (mean of 5)")
for row in read_csv(rmt_check([(400, 400), (1000, 1000), (1600, 400), (2000, 200)], trials=5, seed=1)):
    print(f"{row['N']:>5}x{row['n']:<5} {float(row['predicted_smax']):9.2f}   {float(row['mean_smax']):9.2f}")

# the law scales linearly in the entry std
rng = Rng(3)
for alpha in (0.5, 2.0):
    a = sample_gaussian_matrix(900, 400, alpha, rng)
    print(f"alpha={alpha}: s_max {max_singular_value(a, rng=rng):.2f} vs {rmt_max_singular(900, 400, alpha):.2f}")

# ratio s_max / sqrt(N) for a square matrix should approach 2
a = sample_gaussian_matrix(1000, 1000, 1.0, Rng(4))
print(f"square 1000: s_max / sqrt(N) = {max_singular_value(a) / math.sqrt(1000):.3f}")
