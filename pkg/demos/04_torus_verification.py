"""
Checking the torus by integration
=================================

Run two KAM steps, then integrate ``N_* + R2_*`` from the torus
``|z_n|^2 = I_n(0)``.  Actions should stay put, phases should rotate at
``n + omega_n``, and the Floquet moduli of one period should sit on the
unit circle.
"""

import numpy as np

from nlwkam import (FrequencyModel, KamSchedule, NlwConfig, build_hamiltonian, initial_state,
                    initial_torus, linear_stability, run, sample_omega, torus_residual)

N, eps = 4, 1e-6
cfg = NlwConfig(max_mode=N, epsilon=eps, max_degree=6)
I0 = initial_torus(cfg, scaled=True)
omega = sample_omega(3, N)


def make(V):
    fm = FrequencyModel(V)
    return initial_state(build_hamiltonian(cfg, fm), I0, offsets=fm.omega, V=V)


res = run(make, KamSchedule(0.005, eps, 0.5, float(omega.max())), 2, omega)
H = res.normal_form()
target = np.arange(1, N + 1) + omega

for h in (0.02, 0.01):
    rep = torus_residual(H, I0, h, 20.0, target)
    print(f"h={h}: action drift {rep.max_action_drift:.2e}, frequency error {rep.freq_error:.2e}")

stab = linear_stability(H, I0, 0.01)
print("Floquet moduli:", np.round(stab.moduli, 12))
print("max |modulus - 1| =", stab.max_deviation)
