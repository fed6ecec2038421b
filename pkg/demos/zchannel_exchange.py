"""
Data exchange on the Z-channel
==============================

Two parties hold correlated binary strings drawn from the Z-channel pmf
and each wants the other's string. Run from the repository root:

    python3 demos/zchannel_exchange.py
"""

import numpy as np

from dxchange.bounds import second_order_length
from dxchange.protocols import DataExchange, InteractiveSwParams, theorem2_budget
from dxchange.session import monte_carlo
from dxchange.sources import JointSource, SequenceSource, density_stats, exact_sum_density_distribution
from dxchange.spectrum import make_plan, slice_probabilities, tail_quantile

Z = JointSource.z_channel()
st = density_stats(Z)
print(f"per-letter sum density: mean {st.mean:.4f} bits, variance {st.variance:.4f}")

# block of 8 letters; slice the spectrum of h(X|Y) on its exact support
n = 8
src = SequenceSource.iid(Z, n)
hxy = exact_sum_density_distribution(src, "x_given_y")
plan = make_plan(hxy, integral_delta=True)
params = InteractiveSwParams.from_plan(plan, eta=6)
p_t0 = float(slice_probabilities(plan, hxy)[0])
print(f"plan: lambda in [{plan.lambda_min}, {plan.lambda_max}], width {plan.delta}, {plan.n_slices} slices")

# the budget recipe at eps = 0.1
hsum = exact_sum_density_distribution(src, "sum")
t2 = theorem2_budget(hsum, 0.1, plan, params.eta, p_t0)
print(f"eps-quantile of h(X^n Y^n) sum density: {t2.lambda_eps}, budget l_max = {t2.l_max}")

mc = monte_carlo(DataExchange(src, params), src, 2000, master_seed=7, budget=t2.l_max)
bits = np.array([o.total_bits for o in mc.outcomes])
print(f"2000 trials: error rate {mc.error_rate:.4f} (guarantee {float(t2.bound):.4f})")
print(f"bits used: mean {bits.mean():.2f}, 90% quantile {np.quantile(bits, 0.9):.0f}, max {bits.max()}")

# how the exact quantile compares with the normal approximation as n grows
for m in (100, 1000, 10_000):
    q = tail_quantile(exact_sum_density_distribution(SequenceSource.iid(Z, m), "sum"), 0.1)
    approx = second_order_length(st.mean, st.variance, st.abs_third_moment, m, 0.1)
    print(f"n={m:6d}: exact quantile {q:9.1f}   normal approximation {approx.value:10.2f}  band [{approx.low:.1f}, {approx.high:.1f}]")
