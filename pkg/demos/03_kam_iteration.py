"""
A KAM run on the truncated wave equation
========================================

Four modes, quartic nonlinearity, degree-6 truncation.  Each step
freezes the potential so that the normal form keeps the prescribed
frequencies ``n + omega_n``, then kills the class-0 and class-1 terms.
"""

import numpy as np

from nlwkam import (FrequencyModel, KamSchedule, NlwConfig, build_hamiltonian, initial_state,
                    initial_torus, run, sample_omega)

N, eps = 4, 1e-6
cfg = NlwConfig(max_mode=N, epsilon=eps, max_degree=6)
I0 = initial_torus(cfg, scaled=True)
omega = sample_omega(3, N)


def make(V):
    fm = FrequencyModel(V)
    return initial_state(build_hamiltonian(cfg, fm), I0, offsets=fm.omega, V=V)


sched = KamSchedule(rho0=0.005, eps0=eps, theta=0.5, omega_sup=float(omega.max()))
res = run(make, sched, 3, omega)

print("step   |R0|+       target     |R1|+       target     |R2|+")
for row in res.rows:
    print(f"{row['step']:>4}   {row['norm_r0']:.3e}   {row['target_r0']:.1e}    "
          f"{row['norm_r1']:.3e}   {row['target_r1']:.1e}    {row['norm_r2']:.3e}")

print("frequencies       :", np.round(res.frequencies, 12))
print("prescribed n+omega:", np.round(np.arange(1, N + 1) + omega, 12))
print("frozen V*         :", np.round(res.V_star, 9))
print("||V* - V0*||      :", res.report["V_drift_from_initial"])
