#!/usr/bin/env python3
# Profile per-neuron activation rates of a generator and look at how the
# rates distribute across layers.
#
# Every element of a layer's post-activation featuremap is a "neuron";
# its rate is the fraction of latent draws for which the value is > 0.
# Low-rate (LR) neurons fire rarely, high-rate (HR) neurons fire almost
# always, and the split at a threshold R drives everything else in this
# toolkit.

from pathlib import Path

import numpy as np

from neuroprobe import estimate_rates, load_gwf, lr_set, save_grt

ROOT = Path(__file__).resolve().parents[1]
OUT = Path(__file__).resolve().parent / "out"
OUT.mkdir(exist_ok=True)

gen = load_gwf(ROOT / "tests" / "fixtures" / "blotch.gwf")
print(f"model digest {gen.digest[:16]}..., {gen.spec.num_layers} layers, "
      f"image {gen.spec.image_shape()}")

# 30k samples mirror the usual profiling budget; 5k is plenty for this
# desk-scale model and keeps the demo quick.
table = estimate_rates(gen, num_samples=5000, seed=7)
save_grt(table, OUT / "blotch.grt")
print(f"profiled {table.num_samples} latents -> {OUT / 'blotch.grt'}")

bins = np.linspace(0.0, 1.0, 11)
for layer, shape in enumerate(table.layer_shapes):
    rates = table.rates(layer)
    hist, _ = np.histogram(rates, bins=bins)
    bars = " ".join(f"{h:4d}" for h in hist)
    print(f"layer {layer} {str(shape):>12}: rate histogram [0..1]: {bars}")

# The interesting population: neurons that almost never activate.
for layer in range(gen.spec.num_layers):
    rare = lr_set(table, layer, 0.3)
    ever = int((table.counts[layer] > 0).sum())
    print(f"layer {layer}: {rare.size:4d} neurons with rate <= 0.3 "
          f"({ever} ever activated, {rare.mask.size} total)")

# The blotch model hides one engineered rare neuron at layer 0, index 0:
print(f"\ngate neuron rate: {table.rates(0)[0]:.4f}  (designed ~0.02)")
