#!/usr/bin/env python3
"""Build the binary test fixtures under tests/fixtures/.

Produces:
  toy3.gwf      3-layer random generator for exact-recount tests
  blotch.gwf    4-layer generator with one rate-0.02 gate neuron that
                lights an 8x8 square in the 16x16 output
  latents512.glz  512 standard-normal latent codes (dim 6) for toy3

The blotch construction: layer 0 neuron (channel 0, y 0, x 0) has
pre-activation g * (z0 - PHI_INV_98), so it activates exactly when
z0 > PHI_INV_98 (probability 0.02).  Channel 0 is otherwise identically
zero and feeds only itself through all-ones kernels, spreading the gate
to a 2x2 -> 3x3 -> 7x7 -> 8x8 top-left block; the RGB head adds a large
positive weight on channel 0, so the block saturates bright.  Background
channels 1..3 read single latent taps with rates 0.5 or 0.95 and never
depend on z0.

Run from the repo root:  python3 tools/make_fixtures.py
"""

import statistics
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from neuroprobe.ablation import AblationConfig, sequential_ablate
from neuroprobe.detect import artifact_score
from neuroprobe.freqstat import estimate_rates, sample_latents, save_glz
from neuroprobe.genmodel import (
    KIND_CONV,
    KIND_PROJECT,
    Generator,
    GeneratorSpec,
    LayerDesc,
    forward,
    save_gwf,
)

FIXTURES = Path(__file__).resolve().parents[1] / "tests" / "fixtures"

PHI_INV_98 = statistics.NormalDist().inv_cdf(0.98)  # 2.0537...
GATE_GAIN = 4.0
SQUARE = (slice(0, 8), slice(0, 8))


def build_toy3():
    """Random 3-layer generator (6 -> 4x4x6 -> 8x8x8 -> 16x16x8)."""
    d = 6
    layers = (
        LayerDesc(KIND_PROJECT, in_ch=d, out_ch=6, kernel=1,
                  upsample_before=False, activation_slope=0.2,
                  pixelnorm_after=True),
        LayerDesc(KIND_CONV, in_ch=6, out_ch=8, kernel=3,
                  upsample_before=True, activation_slope=0.2,
                  pixelnorm_after=True),
        LayerDesc(KIND_CONV, in_ch=8, out_ch=8, kernel=3,
                  upsample_before=True, activation_slope=0.2,
                  pixelnorm_after=True),
    )
    head = LayerDesc(KIND_CONV, in_ch=8, out_ch=3, kernel=1,
                     upsample_before=False, activation_slope=0.0,
                     pixelnorm_after=False)
    spec = GeneratorSpec(latent_dim=d, layers=layers, rgb_head=head)

    rng = np.random.Generator(np.random.Philox(2024))
    weights = []
    for desc in layers:
        wshape = desc.weight_shape(d)
        fan_in = int(np.prod(wshape[1:]))
        w = rng.standard_normal(wshape).astype(np.float32) / np.sqrt(fan_in)
        # Spread biases so neuron rates cover low, mid, and high values.
        b = (0.6 * rng.standard_normal(desc.bias_shape())).astype(np.float32)
        weights.append((w, b))
    hw = (rng.standard_normal(head.weight_shape(d)).astype(np.float32) / 3.0)
    hb = np.zeros(3, dtype=np.float32)
    return Generator.from_arrays(spec, weights, (hw, hb))


def build_blotch():
    d = 8
    c = 4
    # Layer 0 uses slope 0 so the gate channel is exactly zero when the
    # gate does not fire; it then stays zero through every later layer.
    layers = (
        LayerDesc(KIND_PROJECT, in_ch=d, out_ch=c, kernel=1,
                  upsample_before=False, activation_slope=0.0,
                  pixelnorm_after=True),
        LayerDesc(KIND_CONV, in_ch=c, out_ch=c, kernel=3,
                  upsample_before=True, activation_slope=0.2,
                  pixelnorm_after=True),
        LayerDesc(KIND_CONV, in_ch=c, out_ch=c, kernel=3,
                  upsample_before=True, activation_slope=0.2,
                  pixelnorm_after=True),
        LayerDesc(KIND_CONV, in_ch=c, out_ch=c, kernel=3,
                  upsample_before=False, activation_slope=0.2,
                  pixelnorm_after=True),
    )
    head = LayerDesc(KIND_CONV, in_ch=c, out_ch=3, kernel=1,
                     upsample_before=False, activation_slope=0.0,
                     pixelnorm_after=False)
    spec = GeneratorSpec(latent_dim=d, layers=layers, rgb_head=head)

    # Layer 0: gate neuron at flat index 0; background taps on z1..z7.
    w0 = np.zeros((c * 16, d), dtype=np.float32)
    b0 = np.zeros(c * 16, dtype=np.float32)
    w0[0, 0] = GATE_GAIN
    b0[0] = -GATE_GAIN * PHI_INV_98
    scale = 0.5
    hi_bias = scale * statistics.NormalDist().inv_cdf(0.95)
    for ch in range(1, c):
        for pos in range(16):
            idx = ch * 16 + pos
            j = 1 + ((ch - 1) * 16 + pos) % (d - 1)
            w0[idx, j] = scale
            # Alternate rate-0.5 and rate-0.95 background neurons.
            b0[idx] = 0.0 if pos % 2 == 0 else hi_bias

    def gate_spread(level_scale):
        w = np.zeros((c, c, 3, 3), dtype=np.float32)
        w[0, 0] = level_scale  # all-ones kernel on the gate channel
        for ch in range(1, c):
            w[ch, ch, 1, 1] = 1.0  # identity for background channels
        return w, np.zeros(c, dtype=np.float32)

    w1 = gate_spread(0.5)
    w2 = gate_spread(0.35)
    w3 = gate_spread(0.35)

    hw = np.zeros((3, c, 1, 1), dtype=np.float32)
    hb = np.full(3, -0.55, dtype=np.float32)
    mix = 0.35
    for rgb in range(3):
        hw[rgb, 0, 0, 0] = 1.5                    # gate: bright everywhere
        hw[rgb, 1 + rgb % 3, 0, 0] = mix          # main background channel
        hw[rgb, 1 + (rgb + 1) % 3, 0, 0] = 0.12   # secondary mix
    return Generator.from_arrays(spec, [(w0, b0), w1, w2, w3], (hw, hb))


def gate_zeroed(gen):
    """Reference model: the gate's projection row and bias set to zero."""
    w0, b0 = gen.layer_weights[0]
    w0 = w0.copy()
    b0 = b0.copy()
    w0[0, :] = 0.0
    b0[0] = 0.0
    return Generator.from_arrays(gen.spec, [(w0, b0)] + list(gen.layer_weights[1:]),
                                 gen.head_weights)


def luminance01(image):
    lum = 0.299 * image[0] + 0.587 * image[1] + 0.114 * image[2]
    return (lum + 1.0) / 2.0


def check_blotch(gen):
    ref = gate_zeroed(gen)
    d = gen.spec.latent_dim
    rng = np.random.Generator(np.random.Philox(99))

    z_on = rng.standard_normal(d).astype(np.float32)
    z_on[0] = 3.0
    z_off = z_on.copy()
    z_off[0] = -3.0

    img_on = forward(gen, z_on).image
    img_off = forward(gen, z_off).image
    ref_on = forward(ref, z_on).image

    lum_on = luminance01(img_on)
    lum_ref = luminance01(ref_on)
    sq_on = float(lum_on[SQUARE].mean())
    sq_ref = float(lum_ref[SQUARE].mean())
    bg_on = float(np.delete(lum_on.reshape(-1), np.arange(256).reshape(16, 16)[SQUARE].reshape(-1)).mean())
    print(f"  square lum (blotch on) = {sq_on:.3f}, reference = {sq_ref:.3f}, "
          f"background = {bg_on:.3f}")
    assert sq_on > sq_ref + 0.5, "blotch square not bright enough"
    assert sq_ref < 0.5 * sq_on, "repair would not drop luminance by half"
    assert np.allclose(img_off, forward(ref, z_off).image, atol=1e-6), \
        "gate-off image should match the reference"

    rates = estimate_rates(gen, num_samples=4000, seed=11)
    gate_rate = rates.rates(0)[0]
    print(f"  gate rate over 4000 samples = {gate_rate:.4f}")
    assert 0.01 <= gate_rate <= 0.03

    bg = rates.rates(0)[16:]
    print(f"  background layer-0 rate range = [{bg.min():.3f}, {bg.max():.3f}]")
    assert bg.min() > 0.4

    # Scores: gate-firing latents count the full lineage, others zero.
    zs = sample_latents(d, 2000, seed=5)
    m = (0, 1, 3)
    on_scores, off_scores = [], []
    for z in zs[:200]:
        s = artifact_score(forward(gen, z), rates, m, 0.3).total
        (on_scores if z[0] > PHI_INV_98 else off_scores).append(s)
    print(f"  scores: firing={sorted(set(on_scores))} quiet={sorted(set(off_scores))}")
    assert all(s == 0 for s in off_scores)
    assert on_scores and all(s >= 70 for s in on_scores)

    # Repair: LR ablation at the preset layers reproduces the reference.
    cfg = AblationConfig(target_layers=m, threshold=0.3)
    repaired = sequential_ablate(gen, rates, cfg, z_on).image
    mse_before = float(((img_on - ref_on) ** 2).mean())
    mse_after = float(((repaired - ref_on) ** 2).mean())
    hr = AblationConfig(target_layers=m, threshold=0.7, mode="hr")
    mse_hr = float(((sequential_ablate(gen, rates, hr, z_on).image - ref_on) ** 2).mean())
    print(f"  mse before={mse_before:.4f} after={mse_after:.6f} hr={mse_hr:.4f}")
    assert mse_after <= 0.2 * mse_before
    assert mse_hr > mse_before


def main():
    FIXTURES.mkdir(parents=True, exist_ok=True)

    toy = build_toy3()
    save_gwf(toy, FIXTURES / "toy3.gwf")
    print(f"toy3.gwf: digest {toy.digest[:16]}..., "
          f"shapes {toy.spec.layer_shapes()}")
    rates = estimate_rates(toy, num_samples=512, seed=1)
    spread = [float(rates.rates(i).mean()) for i in range(3)]
    print(f"  mean rates per layer: {spread}")

    latents = sample_latents(toy.spec.latent_dim, 512, seed=2024)
    save_glz(latents, FIXTURES / "latents512.glz")
    print(f"latents512.glz: {latents.shape}")

    blotch = build_blotch()
    save_gwf(blotch, FIXTURES / "blotch.gwf")
    print(f"blotch.gwf: digest {blotch.digest[:16]}...")
    check_blotch(blotch)
    print("all fixture properties hold")


if __name__ == "__main__":
    main()
