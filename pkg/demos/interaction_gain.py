"""
What interaction buys
=====================

Compares second-order costs of interactive and one-way (simple) schemes,
then the error exponents above the sum entropy rate.

    python3 demos/interaction_gain.py
"""

import numpy as np

from dxchange.bounds import Q_inv, beta_epsilon, d_epsilon
from dxchange.exponents import exponent_sweep
from dxchange.sources import JointSource, covariance_matrix

Z = JointSource.z_channel()
V = covariance_matrix(Z)
print("covariance of the two conditional densities:\n", V)

# interactive schemes pay sqrt(n) times the joint spread; simple schemes pay D_eps
for eps in (0.01, 0.1, 0.3):
    joint = np.sqrt(V.sum()) * Q_inv(eps)
    print(f"eps={eps:4}: interactive {joint:7.4f}   simple {d_epsilon(V, eps):7.4f}  (per sqrt(n) bits)")

# a degenerate source with perfectly correlated densities gains nothing
print("singular case:", d_epsilon(np.ones((2, 2)), 0.1), "vs", 2 * Q_inv(0.1))

# exponents just above H = 4/3
rates = 4 / 3 + np.array([0.02, 0.05, 0.1, 0.2])
for r in exponent_sweep(Z, rates, resolution=2e-3):
    print(f"R={r.R:.3f}: E_r={r.E_r:.5f}  E_sp={r.E_sp:.5f}  E_sp(simple)={r.E_sp_simple:.5f}")

# hypothesis testing building block used by the converse
P, Q = np.array([0.5, 0.3, 0.2]), np.array([0.2, 0.3, 0.5])
print("beta_0.1(P, Q) =", beta_epsilon(P, Q, 0.1))
