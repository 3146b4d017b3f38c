"""The training gradient comes from a backward sweep through the RK4 steps.

Here we compare it with brute-force central differences for a handful of
randomly chosen network weights, for both objectives.
"""

import numpy as np

from sirnode import (CostSpec, EpidemicParams, ObjectiveMode, SirState, evaluate_objective,
                     grad_objective, init_xavier)

params = EpidemicParams()
x0 = SirState.from_counts(200, params.population)
spec = CostSpec("c3", 0.05)
net = init_xavier(seed=3, time_scale=params.horizon)
rng = np.random.default_rng(0)

for mode in ObjectiveMode:
    res = grad_objective(net, spec, params, x0, grid=240, mode=mode)
    print(f"{mode.value}: J = {res.objective:.6f}")
    for j in rng.choice(net.size, 5, replace=False):
        e = np.zeros(net.size)
        e[j] = 1e-5
        up = evaluate_objective(net.with_theta(net.theta + e), spec, params, x0, 240, mode)[0]
        down = evaluate_objective(net.with_theta(net.theta - e), spec, params, x0, 240, mode)[0]
        fd = (up - down) / 2e-5
        print(f"  theta[{j:3d}]  adjoint {res.grad[j]: .8e}   differences {fd: .8e}")
