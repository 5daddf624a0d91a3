"""Parameter and multiply budgets of the reference models.

Run: python demos/footprint.py
"""

from tinycrnn.nn import REFERENCE_CONFIGS, profile, receptive_field, reference_config, temporal_specs

for name in REFERENCE_CONFIGS:
    cfg = reference_config(name)
    fp = profile(cfg)
    rf, steps = receptive_field(temporal_specs(cfg), cfg.frames)
    print(f"{name:<14}{fp.params:>9} params{fp.multiplies:>12} multiplies   rf={rf} steps={steps}")

# the per-layer view of the large CRNN
print()
print(profile(reference_config("crnn239k-ref")).table())

# attention is cheap: compare against the same model without it
cfg = reference_config("crnn239k-ref")
on, off = profile(cfg).params, profile(cfg.without_attention()).params
print(f"\nattention adds {on - off} parameters ({(on - off) / off:.2%})")
