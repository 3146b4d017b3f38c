"""What happens with no intervention at all.

Ten million people, 200 infected on day 0, transmission rate 0.3 and
recovery rate 0.1 per day. We integrate for 120 days and print the
infected count and the running total of infections every ten days.
"""

from sirnode import ExperimentConfig, run_baseline

config = ExperimentConfig()
result = run_baseline(config)

print(f"R0 = {config.params.basic_reproduction:.1f}")
print(f"{'day':>4} {'infected':>10} {'ever infected':>14}")
for day, inf, cum in zip(result.days, result.infected, result.cumulative):
    print(f"{day:>4} {inf:>10,} {cum:>14,}")

traj = result.trajectory
peak = traj.i.argmax()
print(f"\nPeak on day {traj.grid[peak]:.1f} with {traj.i[peak] * config.population:,.0f} infected.")
print(f"By day 120, {1 - traj.s[-1]:.1%} of the population has been infected.")
