"""
Small divisors and the resonant set
===================================

Sample frequency offsets, look at the smallest divisors on a grid of
signed indices, and estimate how the resonant set scales with gamma.
"""

import numpy as np

from nlwkam import (FrequencyModel, check_condition_1, check_condition_2, divisor, enumerate_l,
                    measure_estimate, sample_omega)

omega = sample_omega(1, 6)
fm = FrequencyModel.from_omega(omega)
print("omega =", np.round(omega, 5))
print("V     =", np.round(fm.V, 5))

# a divisor mixes the integer part sum l_n n with the offsets
print("divisor(e1 + e2 - e3) =", divisor({1: 1, 2: 1, 3: -1}, fm))

# the tightest margins over a small grid
lset = enumerate_l(6, 2, 3)
margins = []
for row in lset:
    l = {j + 1: int(v) for j, v in enumerate(row) if v}
    margins.append((check_condition_1(omega, l, 0.1).margin, l))
margins.sort(key=lambda m: m[0])
print(f"{len(lset)} indices checked; smallest condition-1 margins:")
for m, l in margins[:5]:
    print(f"  {m:.3e}  l = {l}")

l = {5: 1, 3: -1, 1: 1}
res = check_condition_2(omega, l, 0.1)
print("condition 2 for", l, "->", res.passed, "rhs =", res.rhs)

# the failing fraction grows linearly in gamma
gammas = [0.01, 0.02, 0.05, 0.1]
print("gamma   fraction   fraction/gamma")
for r in measure_estimate(gammas, 8, 2, 3, 5000, seed=7):
    print(f"{r.gamma:<7} {r.fraction:<10.4f} {r.fraction / r.gamma:.3f}")
