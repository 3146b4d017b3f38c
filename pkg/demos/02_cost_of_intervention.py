"""Four ways to price an intervention of strength u in [0, 1).

Three of them become infinite as u approaches 1 (a full lockdown is
never free), the fourth is a plain quadratic. Each is rescaled to sit
close to the third one; the scale factors come from a weighted least
squares fit on [0, 0.99].
"""

import numpy as np

from sirnode import CostKind, base_cost, calibrate_weight
from sirnode.experiment import cost_curves

for kind in CostKind:
    w = calibrate_weight(base_cost(kind))
    alt = calibrate_weight(base_cost(kind), method="quadrature")
    print(f"{kind.value}: weight {w:.6f} (continuous weighted fit: {alt:.6f})")

u, curves = cost_curves(points=12, upper=0.99)
print("\n     u " + "".join(f"{k:>10}" for k in curves))
for j, x in enumerate(u):
    print(f"{x:6.2f} " + "".join(f"{curves[k][j]:10.4f}" for k in curves))

# Between u = 0.2 and 0.8 the quadratic is the most expensive of the four,
# which is why it behaves differently once a penalty is attached.
mid = (u > 0.2) & (u < 0.8)
print("\nquadratic largest on (0.2, 0.8):",
      bool(np.all(curves["c4"][mid] >= np.max([curves[k][mid] for k in ("c1", "c2", "c3")], axis=0))))
