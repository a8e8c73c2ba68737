"""Ablation passes: zero selected activated neurons during the forward pass.

A pass walks every layer in order; at each target layer it looks up the
configured neuron set (low-rate, high-rate, or a seeded random draw) and
sets the currently activated members (value > 0) to exactly zero before
the next layer runs.  Zeroing happens post-activation and pre-pixelnorm,
so the zeros survive normalization.  Layers outside the target list are
untouched, and the RGB head is never a target.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DigestMismatchError, ShapeError
from .freqstat import RateTable, hr_set, lr_set
from .genmodel import Generator, LayerTrace, forward_batch

MODE_LR = "lr"
MODE_HR = "hr"
MODE_RANDOM = "random"

# Named repair recipes: early conv layers at threshold 0.3.
PRESETS = {
    "style2-early": ((0, 1, 3), 0.3),
    "pggan-early": ((1, 3, 5), 0.3),
}

__all__ = [
    "AblationConfig",
    "sequential_ablate",
    "single_ablate",
    "random_ablate",
    "ablate_forward_batch",
    "preset_config",
    "default_target_layers",
    "MODE_LR",
    "MODE_HR",
    "MODE_RANDOM",
    "PRESETS",
]


@dataclass(frozen=True)
class AblationConfig:
    """Target layers, rate threshold, and neuron-selection mode."""

    target_layers: tuple[int, ...]
    threshold: float = 0.3
    mode: str = MODE_LR
    random_p: float = 0.3
    random_seed: int = 0

    def validate(self, num_layers: int) -> None:
        for i in self.target_layers:
            if not 0 <= i < num_layers:
                raise ShapeError(
                    f"target layer {i} out of range (generator has {num_layers} layers)")
        if not 0.0 <= self.threshold <= 1.0:
            raise ShapeError(f"threshold must be in [0, 1], got {self.threshold}")
        if self.mode not in (MODE_LR, MODE_HR, MODE_RANDOM):
            raise ShapeError(f"unknown ablation mode {self.mode!r}")
        if self.mode == MODE_RANDOM and not 0.0 <= self.random_p <= 1.0:
            raise ShapeError(f"random fraction must be in [0, 1], got {self.random_p}")


def default_target_layers(num_layers: int) -> tuple[int, ...]:
    """Default early-layer targets by generator depth."""
    if num_layers == 9:
        return (1, 3, 5)
    if num_layers == 8:
        return (0, 1, 3)
    return tuple(i for i in (0, 1, 3) if i < num_layers)


def preset_config(name: str) -> AblationConfig:
    if name not in PRESETS:
        raise ShapeError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    layers, threshold = PRESETS[name]
    return AblationConfig(target_layers=layers, threshold=threshold, mode=MODE_LR)


def _check_rates(gen: Generator, rates: RateTable) -> None:
    if rates.model_digest != gen.digest:
        raise DigestMismatchError(
            f"rate table digest {rates.model_digest[:12]} does not match "
            f"model digest {gen.digest[:12]}")
    if rates.layer_shapes != tuple(gen.spec.layer_shapes()):
        raise ShapeError("rate table layer shapes do not match the generator")


def _fixed_masks(gen: Generator, rates: RateTable,
                 cfg: AblationConfig) -> dict[int, np.ndarray]:
    """Per-target-layer neuron masks (shaped like the featuremap)."""
    masks = {}
    shapes = gen.spec.layer_shapes()
    for i in sorted(set(cfg.target_layers)):
        if cfg.mode == MODE_LR:
            flat = lr_set(rates, i, cfg.threshold).mask
        else:
            flat = hr_set(rates, i, cfg.threshold).mask
        masks[i] = flat.reshape(shapes[i])
    return masks


def _random_mask(shape: tuple[int, int, int], p: float,
                 sample_seed: int, layer: int) -> np.ndarray:
    """Seeded Bernoulli(p) mask over one layer's neurons for one sample."""
    seq = np.random.SeedSequence((int(sample_seed), int(layer)))
    rng = np.random.Generator(np.random.Philox(seq))
    return (rng.random(int(np.prod(shape))) < p).reshape(shape)


def ablate_forward_batch(gen: Generator, rates: RateTable | None,
                         cfg: AblationConfig, z: np.ndarray,
                         sample_seeds: Sequence[int] | None = None,
                         ) -> tuple[list[np.ndarray], np.ndarray]:
    """Batched ablated forward pass; returns (featuremaps, images).

    LR/HR modes need ``rates``; random mode needs one seed per latent in
    ``sample_seeds`` (each sample's masks depend only on its own seed, so
    results are independent of batching).
    """
    cfg.validate(gen.spec.num_layers)
    targets = set(cfg.target_layers)
    if cfg.mode == MODE_RANDOM:
        if sample_seeds is None:
            raise ShapeError("random mode needs per-sample seeds")
        if len(sample_seeds) != len(z):
            raise ShapeError("one random seed per latent is required")
        fixed = None
    else:
        if rates is None:
            raise ShapeError(f"{cfg.mode} mode needs a rate table")
        _check_rates(gen, rates)
        fixed = _fixed_masks(gen, rates, cfg)

    if not targets:
        return forward_batch(gen, z)

    def hook(i: int, act: np.ndarray) -> np.ndarray:
        if i not in targets:
            return act
        if fixed is not None:
            mask = fixed[i][None]
            return np.where(mask & (act > 0), np.float32(0.0), act)
        out = act.copy()
        for n in range(act.shape[0]):
            mask = _random_mask(act.shape[1:], cfg.random_p, sample_seeds[n], i)
            out[n] = np.where(mask & (act[n] > 0), np.float32(0.0), act[n])
        return out

    return forward_batch(gen, z, hook=hook)


def sequential_ablate(gen: Generator, rates: RateTable, cfg: AblationConfig,
                      z: np.ndarray) -> LayerTrace:
    """Ablated forward pass for one latent; the image is the corrected output.

    At each layer in the target list, every neuron that is in the
    configured set and currently activated is zeroed before feeding the
    next layer.  An empty target list reduces to the plain forward pass.
    """
    z = np.asarray(z, dtype=np.float32)
    seeds = [cfg.random_seed] if cfg.mode == MODE_RANDOM else None
    traces, images = ablate_forward_batch(gen, rates, cfg, z[None], seeds)
    return LayerTrace(featuremaps=[t[0] for t in traces], image=images[0],
                      model_digest=gen.digest)


def single_ablate(gen: Generator, rates: RateTable, layer: int,
                  threshold: float, z: np.ndarray) -> LayerTrace:
    """Sequential ablation restricted to a single layer."""
    cfg = AblationConfig(target_layers=(int(layer),), threshold=threshold,
                         mode=MODE_LR)
    return sequential_ablate(gen, rates, cfg, z)


def random_ablate(gen: Generator, p: float, seed: int, z: np.ndarray,
                  target_layers: Sequence[int]) -> LayerTrace:
    """Zero each currently-activated neuron with probability p (seeded).

    Fresh Bernoulli masks are drawn per call from the given seed; the
    same (p, seed, z, layers) always reproduces the same output.
    """
    cfg = AblationConfig(target_layers=tuple(int(i) for i in target_layers),
                         threshold=1.0, mode=MODE_RANDOM, random_p=p,
                         random_seed=int(seed))
    return sequential_ablate(gen, None, cfg, z)
