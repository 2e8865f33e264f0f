"""Build a per-layer retention schedule and poke at its feasibility edges.

The schedule keeps a flat ratio through the shallow layers, steps down in
exponentially widening decrements through three middle sub-blocks, and drops
every non-text token at the late boundary. The decay step delta comes out of
a closed-form budget constraint: the mean retention across all layers must
equal the requested overall ratio.
"""

import numpy as np

from omniprefill import (
    InfeasibleScheduleError,
    ModelConfig,
    build_schedule,
    delta_oracle,
    solve_delta,
)

config = ModelConfig(layers=28, d_model=3584, d_ff=18944, n_heads=28,
                     boundaries=(16, 19, 21, 24))

delta, c = solve_delta(config, 0.3, 1.4)
print(f"overall ratio 0.30, lambda 1.4 -> C = {c:.3f}, delta = {delta:.6f}")

plan = build_schedule(config, 0.3, 1.4)
print(f"mean retention across layers: {plan.per_layer_trr.mean():.12f}")
print(f"drop layers: {plan.drop_layers}")
print()

print("layer-by-layer:")
for layer in range(1, 29):
    bar = "#" * int(round(40 * plan.trr_at(layer)))
    print(f"  {layer:>2}  {plan.trr_at(layer):.4f}  {bar}")
print()

# the numeric solver retraces the same constraint by bisection; the two
# agree to more digits than anyone needs
print(f"closed form {delta:.15f}")
print(f"bisection   {delta_oracle(config, 0.3, 1.4):.15f}")
print()

# lambda scales how much survives the pre-LLM stage. Too small and the late
# block can't claw the mean back up to the target; the solver refuses.
for lam in (1.0, 28 / 23, 1.4):
    try:
        d, _ = solve_delta(config, 0.3, lam)
        print(f"lambda {lam:.4f}: feasible, delta = {d:.6f}")
    except InfeasibleScheduleError as exc:
        print(f"lambda {lam:.4f}: infeasible ({exc})")
print()

# per-modality targets just mean two schedules side by side
for name, r in (("visual", 0.30), ("audio", 0.65)):
    p = build_schedule(config, r, 1.4)
    steps = np.unique(p.per_layer_trr)[::-1]
    print(f"{name}: retention levels {np.round(steps, 4)}")
