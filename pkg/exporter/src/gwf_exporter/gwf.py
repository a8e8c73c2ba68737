"""GWF v1 serialization, implemented against the published format.

Layout (little-endian): magic "GWF1" | u32 header length | UTF-8 JSON
header {format_version, latent_dim, layers, rgb_head} | per layer (then
the head) the weight array followed by the bias array as row-major
float32.  Projection weights are (out_ch*16, latent_dim); conv weights
are (out_ch, in_ch, k, k).
"""

from __future__ import annotations

import hashlib
import json
import struct

import numpy as np

from .arch import ArchConfig, ExportError, LayerCfg

MAGIC = b"GWF1"


def _weight_shape(layer: LayerCfg, latent_dim: int) -> tuple:
    if layer.kind == "latent_project":
        return (layer.out_ch * 16, latent_dim)
    return (layer.out_ch, layer.in_ch, layer.kernel, layer.kernel)


def _bias_shape(layer: LayerCfg) -> tuple:
    if layer.kind == "latent_project":
        return (layer.out_ch * 16,)
    return (layer.out_ch,)


def serialize(config: ArchConfig, arrays: list[tuple[np.ndarray, np.ndarray]]) -> bytes:
    """Pack config + per-layer (weight, bias) pairs (head last) into GWF bytes."""
    layers = list(config.layers) + [config.rgb_head]
    if len(arrays) != len(layers):
        raise ExportError(
            f"{len(arrays)} weight pairs for {len(layers)} layers (incl. head)")
    header = json.dumps(config.to_header(), separators=(",", ":")).encode("utf-8")
    parts = [MAGIC, struct.pack("<I", len(header)), header]
    for i, (layer, (w, b)) in enumerate(zip(layers, arrays)):
        name = "rgb_head" if i == len(layers) - 1 else f"layer {i}"
        w = np.ascontiguousarray(w, dtype="<f4")
        b = np.ascontiguousarray(b, dtype="<f4")
        if w.shape != _weight_shape(layer, config.latent_dim):
            raise ExportError(
                f"{name}: weight shape {w.shape} != "
                f"{_weight_shape(layer, config.latent_dim)}")
        if b.shape != _bias_shape(layer):
            raise ExportError(f"{name}: bias shape {b.shape} != {_bias_shape(layer)}")
        parts.append(w.tobytes())
        parts.append(b.tobytes())
    return b"".join(parts)


def parse(data: bytes) -> tuple[ArchConfig, list[tuple[np.ndarray, np.ndarray]]]:
    """Inverse of serialize; validates magic, header, and payload length."""
    if data[:4] != MAGIC:
        raise ExportError(f"bad magic {data[:4]!r}")
    (header_len,) = struct.unpack_from("<I", data, 4)
    header = json.loads(data[8:8 + header_len].decode("utf-8"))
    if header.get("format_version") != 1:
        raise ExportError(f"unsupported format_version {header.get('format_version')}")
    config = ArchConfig.from_dict(header)

    offset = 8 + header_len
    arrays = []
    for layer in list(config.layers) + [config.rgb_head]:
        pair = []
        for shape in (_weight_shape(layer, config.latent_dim), _bias_shape(layer)):
            count = int(np.prod(shape))
            if len(data) < offset + 4 * count:
                raise ExportError("truncated GWF payload")
            pair.append(np.frombuffer(data, dtype="<f4", count=count,
                                      offset=offset).reshape(shape).copy())
            offset += 4 * count
        arrays.append((pair[0], pair[1]))
    if offset != len(data):
        raise ExportError(f"{len(data) - offset} trailing bytes in GWF payload")
    return config, arrays


def digest(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()
