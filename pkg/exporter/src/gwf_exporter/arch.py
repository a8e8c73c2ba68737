"""Architecture configs for exportable generators.

The GWF layer family is narrow on purpose: a latent projection to
C x 4 x 4, then conv blocks (odd kernel, stride 1, same-size zero
padding, optional nearest 2x upsample before, leaky activation,
optional pixel normalization after), and a 3-channel head that clamps
to [-1, 1].  Anything outside that family is rejected by name before
export, so failures are loud and early.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field


class ExportError(Exception):
    """Checkpoint or config cannot be mapped onto the GWF layer family."""


@dataclass(frozen=True)
class LayerCfg:
    kind: str                       # "latent_project" | "conv_block"
    in_ch: int
    out_ch: int
    kernel: int = 1
    stride: int = 1                 # anything but 1 is unmappable
    upsample_before: bool = False
    activation_slope: float = 0.2
    pixelnorm_after: bool = False

    def to_header(self) -> dict:
        d = asdict(self)
        d.pop("stride")
        return d


@dataclass(frozen=True)
class ArchConfig:
    latent_dim: int
    layers: tuple[LayerCfg, ...]
    rgb_head: LayerCfg

    def to_header(self) -> dict:
        return {
            "format_version": 1,
            "latent_dim": self.latent_dim,
            "layers": [l.to_header() for l in self.layers],
            "rgb_head": self.rgb_head.to_header(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ArchConfig":
        return cls(
            latent_dim=int(d["latent_dim"]),
            layers=tuple(LayerCfg(**l) for l in d["layers"]),
            rgb_head=LayerCfg(**d["rgb_head"]),
        )


def check_exportable(config: ArchConfig) -> None:
    """Reject configs outside the GWF layer family, naming the layer."""
    named = [(f"layer {i}", l) for i, l in enumerate(config.layers)]
    named.append(("rgb_head", config.rgb_head))
    for name, layer in named:
        if layer.kind not in ("latent_project", "conv_block"):
            raise ExportError(f"{name}: unmappable kind {layer.kind!r}")
        if layer.stride != 1:
            raise ExportError(
                f"{name}: strided convolution (stride={layer.stride}) is not "
                f"part of the GWF layer family")
        if layer.kernel % 2 != 1:
            raise ExportError(f"{name}: even kernel {layer.kernel} unsupported")
        if not 0.0 <= layer.activation_slope < 1.0:
            raise ExportError(f"{name}: activation slope out of range")
    if config.layers[0].kind != "latent_project":
        raise ExportError("layer 0: first layer must be a latent projection")
    for i, layer in enumerate(config.layers[1:], start=1):
        if layer.kind != "conv_block":
            raise ExportError(f"layer {i}: only layer 0 may be a projection")
    if config.rgb_head.out_ch != 3:
        raise ExportError("rgb_head: must produce 3 channels")
