"""Ground-truth defect generator for acceptance testing.

Builds a deterministic GWF generator whose layer-0 neuron at flat index
0 ("the gate") has analytic activation rate 0.02: its pre-activation is
4 * (z0 - PHI_INV_98), positive exactly when z0 exceeds the standard
normal's 98th percentile.  Layer 0 uses slope 0, so the gate channel is
exactly zero whenever the gate is off; when it fires, all-ones kernels
spread it over the top-left 8x8 block of the 16x16 output, which the
head then drives to saturation.  Background channels tap z1..z7 only.
"""

from __future__ import annotations

import statistics
from pathlib import Path

import numpy as np

from . import gwf
from .arch import ArchConfig, LayerCfg

PHI_INV_98 = statistics.NormalDist().inv_cdf(0.98)
GATE_GAIN = 4.0
GATE_LAYER = 0
GATE_INDEX = 0
SQUARE = (slice(0, 8), slice(0, 8))
CHANNELS = 4
LATENT_DIM = 8


def blotch_config() -> ArchConfig:
    conv = dict(kind="conv_block", in_ch=CHANNELS, out_ch=CHANNELS, kernel=3,
                activation_slope=0.2, pixelnorm_after=True)
    return ArchConfig(
        latent_dim=LATENT_DIM,
        layers=(
            LayerCfg(kind="latent_project", in_ch=LATENT_DIM, out_ch=CHANNELS,
                     activation_slope=0.0, pixelnorm_after=True),
            LayerCfg(upsample_before=True, **conv),
            LayerCfg(upsample_before=True, **conv),
            LayerCfg(upsample_before=False, **conv),
        ),
        rgb_head=LayerCfg(kind="conv_block", in_ch=CHANNELS, out_ch=3,
                          kernel=1, activation_slope=0.0),
    )


def blotch_arrays() -> list[tuple[np.ndarray, np.ndarray]]:
    d, c = LATENT_DIM, CHANNELS

    w0 = np.zeros((c * 16, d), dtype=np.float32)
    b0 = np.zeros(c * 16, dtype=np.float32)
    w0[GATE_INDEX, 0] = GATE_GAIN
    b0[GATE_INDEX] = -GATE_GAIN * PHI_INV_98
    # Background neurons: single taps on z1..z7 with rates 0.5 or ~0.95,
    # never on z0, so only the gate lineage depends on the trigger.
    scale = 0.5
    hi_bias = scale * statistics.NormalDist().inv_cdf(0.95)
    for ch in range(1, c):
        for pos in range(16):
            idx = ch * 16 + pos
            w0[idx, 1 + ((ch - 1) * 16 + pos) % (d - 1)] = scale
            b0[idx] = 0.0 if pos % 2 == 0 else hi_bias

    def spread(level):
        w = np.zeros((c, c, 3, 3), dtype=np.float32)
        w[0, 0] = level                  # all-ones kernel on the gate channel
        for ch in range(1, c):
            w[ch, ch, 1, 1] = 1.0        # identity on background channels
        return w, np.zeros(c, dtype=np.float32)

    hw = np.zeros((3, c, 1, 1), dtype=np.float32)
    hb = np.full(3, -0.7, dtype=np.float32)
    for rgb in range(3):
        hw[rgb, 0, 0, 0] = 1.5
        hw[rgb, 1 + rgb % 3, 0, 0] = 0.3
        hw[rgb, 1 + (rgb + 1) % 3, 0, 0] = 0.1

    return [(w0, b0), spread(0.5), spread(0.35), spread(0.35), (hw, hb)]


def make_blotch_model(out_path) -> Path:
    """Write the blotch generator as GWF v1; fully deterministic."""
    data = gwf.serialize(blotch_config(), blotch_arrays())
    out_path = Path(out_path)
    out_path.write_bytes(data)
    return out_path
