import statistics
from pathlib import Path

import numpy as np
import pytest

from neuroprobe.genmodel import (
    KIND_CONV,
    KIND_PROJECT,
    Generator,
    GeneratorSpec,
    LayerDesc,
    load_gwf,
)

FIXTURES = Path(__file__).parent / "fixtures"

# Construction constants of the checked-in blotch generator: its layer-0
# neuron at flat index 0 activates exactly when z0 exceeds the 98th
# percentile of the standard normal, and lights the top-left 8x8 block of
# the 16x16 output.
BLOTCH_GATE_INDEX = 0
BLOTCH_GATE_CUTOFF = statistics.NormalDist().inv_cdf(0.98)
BLOTCH_SQUARE = (slice(0, 8), slice(0, 8))
BLOTCH_PRESET_LAYERS = (0, 1, 3)


def load_blotch():
    return load_gwf(FIXTURES / "blotch.gwf")


def load_toy3():
    return load_gwf(FIXTURES / "toy3.gwf")


def gate_zeroed_reference(blotch: Generator) -> Generator:
    """The blotch generator with its gate weights nulled out.

    Zeroing the gate's projection row and bias makes the gate neuron sit
    at exactly 0 for every latent, which is also what ablating it
    produces; this is the ground-truth repaired model.
    """
    w0, b0 = blotch.layer_weights[0]
    w0 = w0.copy()
    b0 = b0.copy()
    w0[BLOTCH_GATE_INDEX, :] = 0.0
    b0[BLOTCH_GATE_INDEX] = 0.0
    return Generator.from_arrays(
        blotch.spec, [(w0, b0)] + list(blotch.layer_weights[1:]),
        blotch.head_weights)


def luminance01(image: np.ndarray) -> np.ndarray:
    """Display luminance in [0, 1] of a (3, H, W) image in [-1, 1]."""
    lum = 0.299 * image[0] + 0.587 * image[1] + 0.114 * image[2]
    return np.clip((lum + 1.0) / 2.0, 0.0, 1.0)


def make_random_generator(latent_dim=6, channels=(8, 8), kernel=3, seed=0,
                          slope=0.2, pixelnorm=True):
    """Small random generator: projection plus len(channels)-1 conv blocks.

    Every conv block upsamples, so a 2-entry channel tuple yields a
    4x4 -> 8x8 stack with a 1x1 RGB head.
    """
    rng = np.random.default_rng(seed)
    layers = [LayerDesc(kind=KIND_PROJECT, in_ch=latent_dim, out_ch=channels[0],
                        kernel=1, upsample_before=False, activation_slope=slope,
                        pixelnorm_after=pixelnorm)]
    for cin, cout in zip(channels[:-1], channels[1:]):
        layers.append(LayerDesc(kind=KIND_CONV, in_ch=cin, out_ch=cout,
                                kernel=kernel, upsample_before=True,
                                activation_slope=slope, pixelnorm_after=pixelnorm))
    head = LayerDesc(kind=KIND_CONV, in_ch=channels[-1], out_ch=3, kernel=1,
                     upsample_before=False, activation_slope=0.0,
                     pixelnorm_after=False)
    spec = GeneratorSpec(latent_dim=latent_dim, layers=tuple(layers), rgb_head=head)

    weights = []
    for desc in layers:
        wshape = desc.weight_shape(latent_dim)
        fan_in = int(np.prod(wshape[1:]))
        w = rng.standard_normal(wshape).astype(np.float32) / np.sqrt(fan_in)
        b = (0.1 * rng.standard_normal(desc.bias_shape())).astype(np.float32)
        weights.append((w, b))
    hshape = head.weight_shape(latent_dim)
    hw = rng.standard_normal(hshape).astype(np.float32) / np.sqrt(channels[-1])
    hb = (0.05 * rng.standard_normal(head.bias_shape())).astype(np.float32)
    return Generator.from_arrays(spec, weights, (hw, hb))


@pytest.fixture
def small_gen():
    return make_random_generator(latent_dim=6, channels=(6, 8), seed=42)


@pytest.fixture
def fixtures_dir():
    return FIXTURES
