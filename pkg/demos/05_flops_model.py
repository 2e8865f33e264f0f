"""Price prefill traces with the analytic flops model."""

from omniprefill import (
    ModelConfig,
    RetentionSpec,
    SynthSpec,
    layer_flops,
    run_pipeline,
    trace_flops,
)

config = ModelConfig(layers=28, d_model=3584, d_ff=18944, n_heads=28,
                     boundaries=(16, 19, 21, 24))

# one layer over 10k tokens, just to see the magnitudes involved
n = 10_000
print(f"one layer over {n} tokens: {layer_flops(n, config):.3e} flops")
print(f"  (projections 8nd^2 + attention 4n^2d + feed-forward 6nd*d_ff)")
print()

# a long mostly-non-text input is where pruning pays off: 16 windows of
# 72 visual + 12 audio tokens against 32 text tokens
print("retention sweep (visual/audio pairs, lambda 1.4):")
for r_v, r_a in ((0.06, 0.35), (0.10, 0.45), (0.20, 0.55), (0.30, 0.65)):
    spec = SynthSpec(seed=0, T=16, d=16, n_v=72, n_a=12, n_q=32)
    ret = RetentionSpec(r_v=r_v, r_a=r_a, lambda_=1.4, tau=0.1)
    _, trace = run_pipeline(spec, config, ret)
    report = trace_flops(trace, config)
    print(f"  r_v={r_v:.2f} r_a={r_a:.2f}: {report.flops_total:.3e} flops, "
          f"{report.ratio_vs_full:.1%} of the unpruned run, "
          f"peak kv {report.peak_kv_tokens} tokens")
print()

spec = SynthSpec(seed=0, T=16, d=16, n_v=72, n_a=12, n_q=32)
ret = RetentionSpec(r_v=0.30, r_a=0.65, lambda_=1.4, tau=0.1)
_, trace = run_pipeline(spec, config, ret)
report = trace_flops(trace, config)
print("per-layer cost of the r_v=0.30 run (flops, millions):")
for i, (fl, kv) in enumerate(zip(report.flops_per_layer,
                                 report.kv_tokens_per_layer), start=1):
    print(f"  layer {i:>2}: {fl / 1e6:>12.1f}  ({int(kv)} kv tokens)")
print(f"report formula string: {report.formula}")
