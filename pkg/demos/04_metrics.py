#!/usr/bin/env python3
# Quantify detection quality with distribution metrics.
#
# Treat samples from the defect-free reference generator as "real" and
# compare two fake populations against them: the images our detector
# ranks cleanest (bottom scores) and the ones it flags (top scores).
# Clean images should win on FID, precision, and realism; flagged images
# trade that fidelity for the diversity the rare neurons inject.

from pathlib import Path

import numpy as np

from neuroprobe import (
    estimate_rates,
    fid,
    load_gwf,
    pixel_features,
    precision_recall,
    rank_images,
    realism_score,
    sample_latents,
)
from neuroprobe.detect import score_batch
from neuroprobe.genmodel import Generator, forward_batch

ROOT = Path(__file__).resolve().parents[1]

gen = load_gwf(ROOT / "tests" / "fixtures" / "blotch.gwf")
rates = estimate_rates(gen, num_samples=5000, seed=7)

# Reference generator: the engineered defect neuron disabled at the
# weight level (ground truth for "how the image should have looked").
w0, b0 = gen.layer_weights[0]
w0, b0 = w0.copy(), b0.copy()
w0[0, :] = 0.0
b0[0] = 0.0
reference = Generator.from_arrays(gen.spec, [(w0, b0)] + list(gen.layer_weights[1:]),
                                  gen.head_weights)

n = 600
real_latents = sample_latents(gen.spec.latent_dim, n, seed=int(2e6))
_, real_imgs = forward_batch(reference, real_latents)
real = pixel_features(list(real_imgs), side=4, source="reference")

fake_latents = sample_latents(gen.spec.latent_dim, n, seed=777)
fmaps, fake_imgs = forward_batch(gen, fake_latents)
scores = score_batch(fmaps, rates, (0, 1, 3), 0.3)

k = 60
top, bottom = rank_images(scores, top_k=k, bottom_k=k)
flagged = pixel_features([fake_imgs[i] for i in top], side=4, source="top")
clean = pixel_features([fake_imgs[i] for i in bottom], side=4, source="bottom")

print(f"{n} reference images vs {k} flagged / {k} clean generations, "
      f"pixel features d={real.dim}, neighborhood k=3\n")
print(f"{'population':>10} {'FID':>8} {'precision':>10} {'recall':>8} realism")
for name, fake in (("clean", clean), ("flagged", flagged)):
    d = fid(real, fake)
    p, r = precision_recall(real, fake, k=3)
    rep = realism_score(real, fake, k=3)
    print(f"{name:>10} {d:8.3f} {p:10.3f} {r:8.3f} {rep.realism_summary()}")

print("\nclean generations sit closer to the reference distribution; the")
print("flagged ones score worse on fidelity, which is exactly what the")
print("activated-LR-neuron count predicts without ever seeing a label.")
