"""Train an intervention schedule and inspect it.

A small tanh network maps the day t to an intervention level u(t). Adam
runs for 1000 steps on the cost of new infections plus 0.05 times the
price of the intervention. Afterwards we check the shape the optimality
conditions predict: once the intervention starts to ease off it keeps
easing, and the predicted slope agrees with the trained one.
Takes roughly 15 seconds.
"""

import numpy as np

from sirnode import (CostSpec, EpidemicParams, SirState, TrainConfig, evaluate_objective,
                     init_xavier, train, verify_solution)
from sirnode.network import constant_net

params = EpidemicParams()
x0 = SirState.from_counts(200, params.population)
spec = CostSpec("c3", 0.05)
net = init_xavier(seed=0, time_scale=params.horizon)

report = train(net, spec, params, x0, config=TrainConfig(iterations=1000))
best = net.with_theta(report.best_theta)
j_none, _ = evaluate_objective(constant_net(0.0, params.horizon), spec, params, x0)
print(f"J: start {report.initial_objective:.4f}, trained {report.best_objective:.4f}, "
      f"doing nothing {j_none:.4f}")

verification, traj, costate = verify_solution(best, spec, params, x0)
days = np.arange(0, 121, 20)
print("u(t) on days", days.tolist(), ":", np.round(best(days.astype(float)), 3).tolist())
print(f"intervention eases from day {verification.tau}")
print(f"p1 < 0 there: {verification.p1_negative}; predicted slope negative: {verification.formula_negative}")
print(f"ever infected by day 110: {(1 - traj.s[traj.nearest_index(110)]) * params.population:,.0f}")
