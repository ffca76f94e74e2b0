"""
Rate function and smile from the variational problem
====================================================

The energy Lambda(x) is the least Cameron-Martin energy of driver paths
that move the index log-price by x. The small-noise implied variance is
x^2 / (2 Lambda(x)). Here the solver's smile is compared with the
first-order line sigma_I^2 + S_I x from the closed form.
"""

import numpy as np

from index_skew_lab.asymptotics import implied_variance_expansion, index_skew
from index_skew_lab.energy import expansion_coefficients, smile_from_energy
from index_skew_lab.model import three_asset_reference

model = three_asset_reference()
sa = index_skew(model)
rows = smile_from_energy(model, np.linspace(-0.15, 0.15, 7), grid=128)

print("     x     Lambda    multiplier   impl. var   first order")
for r in rows:
    print(f"{r.x:+.3f}  {r.lambda_value:9.5f}  {r.multiplier:+10.4f}  {r.implied_variance:10.6f}  "
          f"{float(implied_variance_expansion(sa, r.x)):10.6f}")

# The third-order Taylor polynomial of Lambda is exact in the limit and
# drifts away at larger moves, where the full solver is needed.
e = expansion_coefficients(model)
print(f"\nLambda''(0) = {e.second:.4f}, Lambda'''(0) = {e.third:.4f}")
for r in rows:
    if r.x:
        print(f"x = {r.x:+.2f}: solver {r.lambda_value:.5f}, cubic {float(e.energy(r.x)):.5f}")
