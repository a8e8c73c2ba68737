"""Generator model: GWF weight files, forward pass, and mutation hooks.

A generator is a stack of layers (index 0 is the latent projection, the
rest are conv blocks) followed by an RGB head.  The per-layer featuremap
recorded in a trace is the post-activation tensor, after the leaky
activation and before pixel normalization; hooks run at exactly that
point, so values a hook zeroes stay zero in everything downstream.  The
RGB head clamps to [-1, 1] instead of applying an activation.

GWF v1 layout (little-endian throughout):

    magic "GWF1" | u32 header_len | UTF-8 JSON header | payload

The JSON header carries {format_version, latent_dim, layers, rgb_head};
the payload holds, for each layer in order and then the head, the weight
array followed by the bias array as row-major float32.  Projection
weights are (out_ch*16, latent_dim) with bias (out_ch*16,); conv weights
are (out_ch, in_ch, k, k) with bias (out_ch,).  Pixel normalization uses
a fixed epsilon of 1e-8 (part of the format semantics, not the header).
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, FormatError, ShapeError
from .tensor_ops import (
    BASE_SIDE,
    conv2d_batch,
    leaky_relu,
    pixelnorm_batch,
    project_latent_batch,
    upsample2x_batch,
)

GWF_MAGIC = b"GWF1"
GWF_VERSION = 1
PIXELNORM_EPS = 1e-8

KIND_PROJECT = "latent_project"
KIND_CONV = "conv_block"

__all__ = [
    "LayerDesc",
    "GeneratorSpec",
    "Generator",
    "LayerTrace",
    "load_gwf",
    "write_gwf",
    "forward",
    "forward_hooked",
    "forward_batch",
    "forward_from",
    "PIXELNORM_EPS",
]


@dataclass(frozen=True)
class LayerDesc:
    """Description of one generator layer."""

    kind: str
    in_ch: int
    out_ch: int
    kernel: int = 1
    upsample_before: bool = False
    activation_slope: float = 0.2
    pixelnorm_after: bool = False

    def validate(self) -> None:
        if self.kind not in (KIND_PROJECT, KIND_CONV):
            raise ShapeError(f"unknown layer kind {self.kind!r}")
        if self.in_ch < 1 or self.out_ch < 1:
            raise ShapeError("channel counts must be >= 1")
        if self.kernel < 1 or self.kernel % 2 != 1:
            raise ShapeError(f"kernel must be odd and >= 1, got {self.kernel}")
        if not 0.0 <= self.activation_slope < 1.0:
            raise ShapeError(
                f"activation slope must be in [0, 1), got {self.activation_slope}")

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "in_ch": self.in_ch,
            "out_ch": self.out_ch,
            "kernel": self.kernel,
            "upsample_before": self.upsample_before,
            "activation_slope": self.activation_slope,
            "pixelnorm_after": self.pixelnorm_after,
        }

    @classmethod
    def from_json(cls, d: dict) -> "LayerDesc":
        return cls(
            kind=str(d["kind"]),
            in_ch=int(d["in_ch"]),
            out_ch=int(d["out_ch"]),
            kernel=int(d["kernel"]),
            upsample_before=bool(d["upsample_before"]),
            activation_slope=float(d["activation_slope"]),
            pixelnorm_after=bool(d["pixelnorm_after"]),
        )

    def weight_shape(self, latent_dim: int) -> tuple:
        if self.kind == KIND_PROJECT:
            return (self.out_ch * BASE_SIDE * BASE_SIDE, latent_dim)
        return (self.out_ch, self.in_ch, self.kernel, self.kernel)

    def bias_shape(self) -> tuple:
        if self.kind == KIND_PROJECT:
            return (self.out_ch * BASE_SIDE * BASE_SIDE,)
        return (self.out_ch,)


@dataclass(frozen=True)
class GeneratorSpec:
    """Architecture of a generator: conv-stack layers plus the RGB head.

    Layer indices 0..len(layers)-1 are the canonical index list; the head
    is addressed separately and is never an ablation target.
    """

    latent_dim: int
    layers: tuple[LayerDesc, ...]
    rgb_head: LayerDesc

    def validate(self) -> None:
        if self.latent_dim < 1:
            raise ShapeError("latent_dim must be >= 1")
        if not self.layers:
            raise ShapeError("generator needs at least one layer")
        for desc in self.layers + (self.rgb_head,):
            desc.validate()
        first = self.layers[0]
        if first.kind != KIND_PROJECT:
            raise ShapeError("layer 0 must be a latent projection")
        if first.in_ch != self.latent_dim:
            raise ShapeError(
                f"layer 0 expects {first.in_ch} inputs but latent_dim is {self.latent_dim}")
        if first.upsample_before:
            raise ShapeError("layer 0 cannot upsample its input")
        for i, desc in enumerate(self.layers[1:], start=1):
            if desc.kind != KIND_CONV:
                raise ShapeError(f"layer {i} must be a conv block")
            if desc.in_ch != self.layers[i - 1].out_ch:
                raise ShapeError(
                    f"channel chain broken at layer {i}: "
                    f"{self.layers[i - 1].out_ch} -> {desc.in_ch}")
        if self.rgb_head.kind != KIND_CONV:
            raise ShapeError("rgb_head must be a conv block")
        if self.rgb_head.in_ch != self.layers[-1].out_ch:
            raise ShapeError(
                f"rgb_head expects {self.rgb_head.in_ch} channels, "
                f"last layer outputs {self.layers[-1].out_ch}")
        if self.rgb_head.out_ch != 3:
            raise ShapeError("rgb_head must output 3 channels")

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    def layer_shapes(self) -> list[tuple[int, int, int]]:
        """(C, H, W) of each layer's post-activation featuremap."""
        shapes = []
        side = BASE_SIDE
        for i, desc in enumerate(self.layers):
            if i > 0 and desc.upsample_before:
                side *= 2
            shapes.append((desc.out_ch, side, side))
        return shapes

    def image_shape(self) -> tuple[int, int, int]:
        side = self.layer_shapes()[-1][1]
        if self.rgb_head.upsample_before:
            side *= 2
        return (3, side, side)

    def to_json(self) -> dict:
        return {
            "format_version": GWF_VERSION,
            "latent_dim": self.latent_dim,
            "layers": [d.to_json() for d in self.layers],
            "rgb_head": self.rgb_head.to_json(),
        }


@dataclass(frozen=True)
class Generator:
    """A GeneratorSpec together with its weight arrays and GWF digest."""

    spec: GeneratorSpec
    layer_weights: tuple[tuple[np.ndarray, np.ndarray], ...]
    head_weights: tuple[np.ndarray, np.ndarray]
    digest: str = field(default="", compare=False)

    @classmethod
    def from_arrays(cls, spec: GeneratorSpec,
                    layer_weights: Sequence[tuple[np.ndarray, np.ndarray]],
                    head_weights: tuple[np.ndarray, np.ndarray]) -> "Generator":
        spec.validate()
        lw = tuple(
            (np.ascontiguousarray(w, dtype=np.float32),
             np.ascontiguousarray(b, dtype=np.float32))
            for w, b in layer_weights)
        hw = (np.ascontiguousarray(head_weights[0], dtype=np.float32),
              np.ascontiguousarray(head_weights[1], dtype=np.float32))
        gen = cls(spec=spec, layer_weights=lw, head_weights=hw)
        _check_weight_shapes(gen)
        data = write_gwf(gen)
        return cls(spec=spec, layer_weights=lw, head_weights=hw,
                   digest=hashlib.sha256(data).hexdigest())


@dataclass
class LayerTrace:
    """Per-layer post-activation featuremaps and the final clamped image."""

    featuremaps: list[np.ndarray]
    image: np.ndarray
    model_digest: str = ""


def _check_weight_shapes(gen: Generator) -> None:
    spec = gen.spec
    if len(gen.layer_weights) != len(spec.layers):
        raise ShapeError(
            f"{len(gen.layer_weights)} weight pairs for {len(spec.layers)} layers")
    for i, (desc, (w, b)) in enumerate(zip(spec.layers, gen.layer_weights)):
        if w.shape != desc.weight_shape(spec.latent_dim):
            raise ShapeError(
                f"layer {i} weights shape {w.shape}, "
                f"expected {desc.weight_shape(spec.latent_dim)}")
        if b.shape != desc.bias_shape():
            raise ShapeError(
                f"layer {i} bias shape {b.shape}, expected {desc.bias_shape()}")
    w, b = gen.head_weights
    if w.shape != spec.rgb_head.weight_shape(spec.latent_dim):
        raise ShapeError(
            f"rgb_head weights shape {w.shape}, "
            f"expected {spec.rgb_head.weight_shape(spec.latent_dim)}")
    if b.shape != spec.rgb_head.bias_shape():
        raise ShapeError(f"rgb_head bias shape {b.shape}")


def _spec_from_header(header: dict) -> GeneratorSpec:
    try:
        spec = GeneratorSpec(
            latent_dim=int(header["latent_dim"]),
            layers=tuple(LayerDesc.from_json(d) for d in header["layers"]),
            rgb_head=LayerDesc.from_json(header["rgb_head"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed GWF header: {exc}") from exc
    return spec


def write_gwf(gen: Generator) -> bytes:
    """Serialize a generator to GWF v1 bytes (deterministic)."""
    header = json.dumps(gen.spec.to_json(), separators=(",", ":")).encode("utf-8")
    parts = [GWF_MAGIC, struct.pack("<I", len(header)), header]
    for w, b in list(gen.layer_weights) + [gen.head_weights]:
        parts.append(np.ascontiguousarray(w, dtype="<f4").tobytes())
        parts.append(np.ascontiguousarray(b, dtype="<f4").tobytes())
    return b"".join(parts)


def save_gwf(gen: Generator, path) -> None:
    with open(path, "wb") as fh:
        fh.write(write_gwf(gen))


def load_gwf(source) -> Generator:
    """Parse GWF v1 bytes (or a path to them) into a Generator.

    Raises FormatError with the failing byte offset on bad magic, header
    problems, channel-chain mismatches, or truncated payload.
    """
    if isinstance(source, (bytes, bytearray)):
        data = bytes(source)
    else:
        with open(source, "rb") as fh:
            data = fh.read()

    if data[:4] != GWF_MAGIC:
        raise FormatError(f"bad magic {data[:4]!r}, expected {GWF_MAGIC!r}", offset=0)
    if len(data) < 8:
        raise FormatError("file too short for header length", offset=4)
    (header_len,) = struct.unpack_from("<I", data, 4)
    header_end = 8 + header_len
    if len(data) < header_end:
        raise FormatError("truncated header", offset=len(data))
    try:
        header = json.loads(data[8:header_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"header is not valid JSON: {exc}", offset=8) from exc
    if header.get("format_version") != GWF_VERSION:
        raise FormatError(
            f"unsupported format_version {header.get('format_version')!r}", offset=8)

    spec = _spec_from_header(header)
    try:
        spec.validate()
    except ShapeError as exc:
        raise FormatError(str(exc), offset=8) from exc

    offset = header_end
    names = [f"layer {i}" for i in range(len(spec.layers))] + ["rgb_head"]
    descs = list(spec.layers) + [spec.rgb_head]
    pairs = []
    for name, desc in zip(names, descs):
        arrays = []
        for label, shape in (("weights", desc.weight_shape(spec.latent_dim)),
                             ("bias", desc.bias_shape())):
            count = int(np.prod(shape))
            nbytes = 4 * count
            if len(data) < offset + nbytes:
                raise FormatError(
                    f"truncated payload in {name} {label}: need {nbytes} bytes, "
                    f"have {len(data) - offset}", offset=offset)
            arr = np.frombuffer(data, dtype="<f4", count=count, offset=offset)
            arrays.append(arr.reshape(shape).astype(np.float32))
            offset += nbytes
        pairs.append((arrays[0], arrays[1]))
    if offset != len(data):
        raise FormatError(
            f"{len(data) - offset} trailing bytes after payload", offset=offset)

    return Generator(
        spec=spec,
        layer_weights=tuple(pairs[:-1]),
        head_weights=pairs[-1],
        digest=hashlib.sha256(data).hexdigest(),
    )


# A batch hook maps (layer_index, (N, C, H, W) tensor) -> same-shape tensor.
BatchHook = Callable[[int, np.ndarray], np.ndarray]


def forward_batch(gen: Generator, z: np.ndarray,
                  hook: BatchHook | None = None) -> tuple[list[np.ndarray], np.ndarray]:
    """Run the generator on a batch of latents.

    Returns (featuremaps, images) where featuremaps[i] is the post-hook,
    post-activation (N, C, H, W) tensor of layer i and images is
    (N, 3, H, W) clamped to [-1, 1].  Per-sample results are bit-identical
    regardless of how latents are grouped into batches.
    """
    z = np.ascontiguousarray(z, dtype=np.float32)
    if z.ndim != 2 or z.shape[1] != gen.spec.latent_dim:
        raise ShapeError(
            f"expected (N, {gen.spec.latent_dim}) latents, got shape {z.shape}")
    _check_weight_shapes(gen)

    traces: list[np.ndarray] = []
    current: np.ndarray | None = None
    for i, (desc, (w, b)) in enumerate(zip(gen.spec.layers, gen.layer_weights)):
        if desc.kind == KIND_PROJECT:
            pre = project_latent_batch(z, w, b)
        else:
            if desc.upsample_before:
                current = upsample2x_batch(current)
            pre = conv2d_batch(current, w, b)
        act = leaky_relu(pre, desc.activation_slope)
        if hook is not None:
            act = _apply_hook(hook, i, act)
        traces.append(act)
        current = pixelnorm_batch(act, PIXELNORM_EPS) if desc.pixelnorm_after else act

    images = _run_head(gen, current)
    return traces, images


def _apply_hook(hook: BatchHook, index: int, act: np.ndarray) -> np.ndarray:
    out = np.asarray(hook(index, act), dtype=np.float32)
    if out.shape != act.shape:
        raise ContractError(
            f"hook at layer {index} returned shape {out.shape}, expected {act.shape}")
    return out


def _run_head(gen: Generator, current: np.ndarray) -> np.ndarray:
    head = gen.spec.rgb_head
    w, b = gen.head_weights
    if head.upsample_before:
        current = upsample2x_batch(current)
    img = conv2d_batch(current, w, b)
    return np.clip(img, np.float32(-1.0), np.float32(1.0))


def forward(gen: Generator, z: np.ndarray) -> LayerTrace:
    """Forward one latent; the trace holds each layer's featuremap."""
    traces, images = forward_batch(gen, np.asarray(z, dtype=np.float32)[None])
    return LayerTrace(
        featuremaps=[t[0] for t in traces],
        image=images[0],
        model_digest=gen.digest,
    )


def forward_hooked(gen: Generator, z: np.ndarray,
                   hook: Callable[[int, np.ndarray], np.ndarray]) -> LayerTrace:
    """Forward one latent, passing each layer's featuremap through ``hook``.

    The hook sees the post-activation (C, H, W) tensor before pixel
    normalization and must return a same-shape tensor; the trace records
    the post-hook values.
    """

    def batch_hook(i: int, act: np.ndarray) -> np.ndarray:
        out = np.asarray(hook(i, act[0]), dtype=np.float32)
        if out.shape != act.shape[1:]:
            raise ContractError(
                f"hook at layer {i} returned shape {out.shape}, expected {act.shape[1:]}")
        return out[None]

    traces, images = forward_batch(gen, np.asarray(z, dtype=np.float32)[None],
                                   hook=batch_hook)
    return LayerTrace(
        featuremaps=[t[0] for t in traces],
        image=images[0],
        model_digest=gen.digest,
    )


def forward_from(gen: Generator, layer_index: int,
                 featuremap: np.ndarray) -> LayerTrace:
    """Resume the forward pass from a recorded featuremap.

    ``featuremap`` is taken as layer ``layer_index``'s post-activation
    output (pre-pixelnorm); the returned trace covers layers after it
    and reuses the given tensor at position ``layer_index``.  Entries for
    earlier layers are empty placeholders.
    """
    if not 0 <= layer_index < gen.spec.num_layers:
        raise ShapeError(f"layer index {layer_index} out of range")
    fmap = np.ascontiguousarray(featuremap, dtype=np.float32)
    expected = gen.spec.layer_shapes()[layer_index]
    if fmap.shape != expected:
        raise ShapeError(
            f"featuremap shape {fmap.shape} does not match layer "
            f"{layer_index} shape {expected}")

    desc = gen.spec.layers[layer_index]
    current = fmap[None]
    if desc.pixelnorm_after:
        current = pixelnorm_batch(current, PIXELNORM_EPS)

    featuremaps: list[np.ndarray] = [np.empty(0, dtype=np.float32)] * layer_index
    featuremaps.append(fmap)
    for i in range(layer_index + 1, gen.spec.num_layers):
        desc = gen.spec.layers[i]
        w, b = gen.layer_weights[i]
        if desc.upsample_before:
            current = upsample2x_batch(current)
        act = leaky_relu(conv2d_batch(current, w, b), desc.activation_slope)
        featuremaps.append(act[0])
        current = pixelnorm_batch(act, PIXELNORM_EPS) if desc.pixelnorm_after else act

    images = _run_head(gen, current)
    return LayerTrace(featuremaps=featuremaps, image=images[0],
                      model_digest=gen.digest)
