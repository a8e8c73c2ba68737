"""Torch reference implementation of the GWF layer family.

The module structure maps 1:1 onto GWF arrays: `proj` is the latent
projection, `blocks.<i>.conv` the conv blocks, `head` the RGB conv.
Deterministic algorithms are pinned so the export validation bound is
meaningful; validation runs the model in float64.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

from .arch import ArchConfig, LayerCfg

PIXELNORM_EPS = 1e-8

torch.use_deterministic_algorithms(True)


class PixelNorm(nn.Module):
    def forward(self, x):
        return x / torch.sqrt(x.pow(2).mean(dim=1, keepdim=True) + PIXELNORM_EPS)


class ConvBlock(nn.Module):
    def __init__(self, cfg: LayerCfg):
        super().__init__()
        self.cfg = cfg
        self.conv = nn.Conv2d(cfg.in_ch, cfg.out_ch, cfg.kernel,
                              stride=1, padding=cfg.kernel // 2)
        self.norm = PixelNorm() if cfg.pixelnorm_after else None

    def forward(self, x):
        if self.cfg.upsample_before:
            x = F.interpolate(x, scale_factor=2, mode="nearest")
        x = F.leaky_relu(self.conv(x), negative_slope=self.cfg.activation_slope)
        if self.norm is not None:
            x = self.norm(x)
        return x


class TinyGenerator(nn.Module):
    """Latent projection -> conv blocks -> clamped 3-channel head."""

    def __init__(self, config: ArchConfig):
        super().__init__()
        self.config = config
        p = config.layers[0]
        self.proj = nn.Linear(config.latent_dim, p.out_ch * 16)
        self.proj_cfg = p
        self.proj_norm = PixelNorm() if p.pixelnorm_after else None
        self.blocks = nn.ModuleList(ConvBlock(c) for c in config.layers[1:])
        h = config.rgb_head
        self.head = nn.Conv2d(h.in_ch, 3, h.kernel, stride=1,
                              padding=h.kernel // 2)
        self.head_cfg = h

    def forward(self, z):
        x = self.proj(z).view(z.shape[0], self.proj_cfg.out_ch, 4, 4)
        x = F.leaky_relu(x, negative_slope=self.proj_cfg.activation_slope)
        if self.proj_norm is not None:
            x = self.proj_norm(x)
        for block in self.blocks:
            x = block(x)
        if self.head_cfg.upsample_before:
            x = F.interpolate(x, scale_factor=2, mode="nearest")
        return torch.clamp(self.head(x), -1.0, 1.0)


def toy_config() -> ArchConfig:
    return ArchConfig(
        latent_dim=6,
        layers=(
            LayerCfg(kind="latent_project", in_ch=6, out_ch=6,
                     activation_slope=0.2, pixelnorm_after=True),
            LayerCfg(kind="conv_block", in_ch=6, out_ch=8, kernel=3,
                     upsample_before=True, activation_slope=0.2,
                     pixelnorm_after=True),
            LayerCfg(kind="conv_block", in_ch=8, out_ch=8, kernel=3,
                     upsample_before=True, activation_slope=0.2,
                     pixelnorm_after=False),
        ),
        rgb_head=LayerCfg(kind="conv_block", in_ch=8, out_ch=3, kernel=1,
                          activation_slope=0.0),
    )


def train_toy_generator(seed: int = 0, steps: int = 80):
    """Fit a tiny generator to smooth procedural targets; returns a checkpoint.

    The targets are fixed low-frequency images derived from the latents,
    so a few Adam steps suffice; the point is producing a realistic
    trained checkpoint, not image quality.
    """
    torch.manual_seed(seed)
    config = toy_config()
    model = TinyGenerator(config)

    z = torch.randn(16, config.latent_dim)
    ys, xs = torch.meshgrid(torch.linspace(0, 1, 16), torch.linspace(0, 1, 16),
                            indexing="ij")
    targets = torch.stack([
        torch.stack([
            torch.sin(3 * ys + 2 * zi[0]) * 0.4,
            torch.cos(3 * xs + 2 * zi[1]) * 0.4,
            (ys * xs - 0.25) * torch.clamp(zi[2], -1.0, 1.0),
        ])
        for zi in z
    ])

    opt = torch.optim.Adam(model.parameters(), lr=0.02)
    for _ in range(steps):
        opt.zero_grad()
        loss = F.mse_loss(model(z), targets)
        loss.backward()
        opt.step()

    return {
        "config": config,
        "state_dict": {k: v.detach().clone() for k, v in model.state_dict().items()},
        "final_loss": float(loss.detach()),
    }
