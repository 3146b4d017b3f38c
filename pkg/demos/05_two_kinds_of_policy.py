"""Mitigation versus suppression at a moderate penalty.

At lambda = 0.05 two very different schedules are locally optimal. A light
touch lets the epidemic run (almost everyone is infected by day 110) but
costs little. A firm, steady intervention near u = 0.43 keeps the outbreak
small, yet its running price outweighs the infections it prevents, so its
objective is worse than doing nothing.
"""

from sirnode import CostSpec, EpidemicParams, SirState, evaluate_objective
from sirnode.network import constant_net

params = EpidemicParams()
x0 = SirState.from_counts(200, params.population)
spec = CostSpec("c3", 0.05)

for u in (0.0, 0.05, 0.2, 0.435, 0.6):
    J, traj = evaluate_objective(constant_net(u, params.horizon), spec, params, x0)
    total = (1 - traj.s[traj.nearest_index(110)]) * params.population
    print(f"u = {u:5.3f}:  J = {J:.4f}   ever infected by day 110 = {total:12,.0f}")
