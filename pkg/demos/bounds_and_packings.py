"""Sample-complexity calculators, the MOD-SULQ utility bound and packings.

    python demos/bounds_and_packings.py
"""

import numpy as np

from dppca.bounds import (
    BoundQuery,
    adversarial_dataset,
    construct_packing,
    general_lower_bound,
    max_coherence,
    modsulq_lower_bound,
    modsulq_utility_bound,
    packing_size_formula,
    ppca_sample_bound,
)
from dppca.linalg import second_moment

# How many samples do the upper and lower bounds ask for?
print("d      PPCA upper     any-DP lower   MOD-SULQ lower (unit constants)")
for d in (10, 100, 1000):
    q = BoundQuery(d=d, epsilon=0.1, rho=0.9, gap=0.1, eta=0.05, lambda1=0.5, delta=0.01)
    print(f"{d:<6} {ppca_sample_bound(q):<14.4g} {general_lower_bound(q).threshold:<14.4g} "
          f"{modsulq_lower_bound(q):.4g}")

# Upper bound on E|<vhat_1, v_1>| for MOD-SULQ on the hard instance.
print("\nMOD-SULQ utility bound, d=100, delta=0.01")
for eps in (0.1, 1.0):
    row = [modsulq_utility_bound(100, int(n), eps, 0.01).bound for n in np.logspace(3, 7, 5)]
    print(f"eps={eps:<4} " + " ".join(f"{b:.3f}" for b in row))

# A random packing of the sphere and one adversarial dataset built from it.
d, phi = 30, 0.6
k = int(packing_size_formula(d, phi))
pk = construct_packing(d, phi, k, seed=0)
print(f"\npacking in R^{d}: {len(pk)} vectors, max |<u, v>| = {max_coherence(pk.vectors):.3f} < {phi}")

ds = adversarial_dataset(d + 1, 5000, 1.0, 0.2, 3, pk)
lam = second_moment(ds.data).eigenvalues
print(f"adversarial dataset ({ds.construction}): lambda1 - lambda2 = {lam[0] - lam[1]:.12f}")
