"""
Tracking trustees in a hostile SIoT network
===========================================

Devices meet at Pareto-distributed intervals, try a trustee, and rate
the experience. Thirty percent of trustors and trustees misbehave. Every
24 simulated hours the factor model is retrained, and we follow what
benign trustors predict for three tracked trustees.
"""

import numpy as np

from siottrust.simulation import SimConfig, build_world, run_simulation

cfg = SimConfig(maliciousness=0.30, seed=7)
world = build_world(cfg)
kinds = [p.attack for p in world.trustees]
print("trustee attack kinds:", {k: kinds.count(k) for k in sorted(set(kinds))})

log = run_simulation(world, cfg)
print(f"{len(log.selections)} interactions, snapshots at hours {log.hours()}")

# Each row: mean benign-trustor prediction per snapshot (external scale).
for role, j in sorted(log.tracked.items()):
    hours, mean = log.series(j)
    objectives = [world.trustees[j].objective_at(h) for h in hours]
    print(f"{role:>14} trustee {j:3d}: " + " ".join(f"{m:4.2f}" for m in mean)
          + f"   objective {objectives[0]:.1f} -> {objectives[-1]:.1f}")

# The final ranking should keep benign trustees above malicious ones.
final = log.final_means()
benign = [j for j, p in enumerate(world.trustees) if not p.malicious]
bad = [j for j, p in enumerate(world.trustees) if p.malicious]
print(f"final mean prediction: benign {np.mean(final[benign]):.2f}, malicious {np.mean(final[bad]):.2f}")
