"""Checkpoint -> GWF export with cross-engine validation.

Export maps a torch checkpoint (state_dict + config) onto GWF arrays,
writes the file, then replays a fixed 16-latent batch through both the
framework model (float64) and the primary engine; the export fails if
the maximum absolute image discrepancy exceeds 1e-4.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch

from . import engine, gwf
from .arch import ArchConfig, ExportError, check_exportable
from .torchmodel import TinyGenerator

VALIDATION_LATENTS = 16
VALIDATION_SEED = 20240501
MAX_DISCREPANCY = 1e-4


@dataclass
class ExportReport:
    layer_count: int
    parameter_count: int
    num_latents: int
    max_abs_discrepancy: float
    gwf_digest: str

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True)
                              + "\n")


def _arrays_from_state_dict(config: ArchConfig, state_dict) -> list:
    def fetch(key, shape):
        if key not in state_dict:
            raise ExportError(f"checkpoint is missing tensor {key!r}")
        t = state_dict[key].detach().cpu().to(torch.float32).numpy()
        if t.shape != shape:
            raise ExportError(f"{key}: shape {tuple(t.shape)} != {shape}")
        return t

    p = config.layers[0]
    arrays = [(fetch("proj.weight", (p.out_ch * 16, config.latent_dim)),
               fetch("proj.bias", (p.out_ch * 16,)))]
    for i, layer in enumerate(config.layers[1:]):
        key = f"blocks.{i}.conv"
        arrays.append((
            fetch(f"{key}.weight",
                  (layer.out_ch, layer.in_ch, layer.kernel, layer.kernel)),
            fetch(f"{key}.bias", (layer.out_ch,)),
        ))
    h = config.rgb_head
    arrays.append((fetch("head.weight", (3, h.in_ch, h.kernel, h.kernel)),
                   fetch("head.bias", (3,))))
    return arrays


def validation_latents(latent_dim: int) -> np.ndarray:
    rng = np.random.Generator(np.random.Philox(VALIDATION_SEED))
    return rng.standard_normal((VALIDATION_LATENTS, latent_dim),
                               dtype=np.float32)


def export_gwf(checkpoint, out_path, *, workdir=None,
               report_path=None) -> ExportReport:
    """Write a validated GWF file for a checkpoint.

    ``checkpoint`` is a dict with "config" (ArchConfig or its dict) and
    "state_dict", or a path to a torch.save'd file holding one.
    Validation always runs; a discrepancy above 1e-4 deletes the output
    and raises.
    """
    if not isinstance(checkpoint, dict):
        checkpoint = torch.load(checkpoint, map_location="cpu",
                                weights_only=False)
    config = checkpoint["config"]
    if not isinstance(config, ArchConfig):
        config = ArchConfig.from_dict(config)
    check_exportable(config)

    arrays = _arrays_from_state_dict(config, checkpoint["state_dict"])
    data = gwf.serialize(config, arrays)
    out_path = Path(out_path)
    out_path.write_bytes(data)

    model = TinyGenerator(config)
    model.load_state_dict(checkpoint["state_dict"])
    model.eval().double()

    latents = validation_latents(config.latent_dim)
    with torch.no_grad():
        reference = model(torch.from_numpy(latents).double()).numpy()

    workdir = Path(workdir) if workdir else out_path.parent / "_validate"
    engine_imgs = engine.forward_images(out_path, latents, workdir)
    if engine_imgs.shape != reference.shape:
        out_path.unlink(missing_ok=True)
        raise ExportError(
            f"engine produced shape {engine_imgs.shape}, framework "
            f"{reference.shape}")
    discrepancy = float(np.max(np.abs(engine_imgs - reference)))

    report = ExportReport(
        layer_count=len(config.layers) + 1,
        parameter_count=int(sum(w.size + b.size for w, b in arrays)),
        num_latents=VALIDATION_LATENTS,
        max_abs_discrepancy=discrepancy,
        gwf_digest=gwf.digest(data),
    )
    if discrepancy > MAX_DISCREPANCY:
        out_path.unlink(missing_ok=True)
        raise ExportError(
            f"forward discrepancy {discrepancy:.2e} exceeds {MAX_DISCREPANCY:.0e}")
    if report_path:
        report.save(report_path)
    return report
