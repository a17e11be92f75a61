"""The decision-based attack on oracles with known geometry.

The engine only ever sees +1/-1 answers.  On a linear oracle the minimal
perturbation has a closed form, so we can watch the attack approach it.

Run:  python demos/02_boundary_attack_basics.py
"""

import numpy as np

from plateforge import AttackConfig, LinearOracle, PlateImage, Rng, ThresholdOracle
from plateforge.attack import attack_targeted

# 1-d warm-up: the boundary sits at tau; the attack walks the iterate to it.
oracle = ThresholdOracle(tau=0.5)
x_orig = PlateImage.full(2, 2, 0.0)
seed = PlateImage.full(2, 2, 1.0)
cfg = AttackConfig(max_iterations=30, initial_batch=8, max_batch=64, rng=Rng(1))
result = attack_targeted(x_orig, "ADV", oracle, cfg, target_seed=seed)
print("threshold oracle:")
print(f"  success={result.success}  final distance={result.final_distance:.5f}")
print(f"  queries={result.total_queries}  by phase: {result.queries_by_phase}")

# Linear oracle: rho = |w.x+b| / ||w|| is the analytic optimum.
gen = np.random.default_rng(3)
d = 64
w = gen.normal(size=d)
w /= np.linalg.norm(w)
x = np.clip(gen.uniform(0.35, 0.65, size=d), 0, 1)
margin = 0.2
oracle = LinearOracle(w=w, b=-float(w @ x) - margin)
seed_arr = np.clip(x + 2.5 * margin * w, 0, 1)

cfg = AttackConfig(max_iterations=100, rng=Rng(2))
result = attack_targeted(
    PlateImage(x.reshape(8, 8)),
    "ADV",
    oracle,
    cfg,
    target_seed=PlateImage(seed_arr.reshape(8, 8)),
)
rho = oracle.margin(x)
print("\nlinear oracle (d=64):")
print(f"  analytic optimum rho = {rho:.4f}")
print(f"  reached             = {result.final_distance:.4f}  ({result.final_distance / rho:.3f}x)")
trace = result.distance_trace
marks = [0, 1, 2, 5, 10, 25, 50, len(trace) - 1]
print("  distance trace:", "  ".join(f"t{t}={trace[t]:.3f}" for t in marks if t < len(trace)))
assert all(b <= a + 1e-12 for a, b in zip(trace, trace[1:])), "trace must never increase"
print("  trace is non-increasing, every recorded iterate stays adversarial")
