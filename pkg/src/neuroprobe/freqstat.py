"""Per-neuron activation-rate estimation and LR/HR neuron sets.

A neuron is one element of a layer's post-activation featuremap,
addressed by its channel-major flat index.  Its activation rate is the
probability, over latent codes, that its value is strictly positive; we
estimate it by Monte Carlo with exact integer counts, so estimates are
bit-reproducible regardless of batch partitioning or worker count.

Low-rate (LR) neurons are those with rate <= R; high-rate (HR) neurons
have rate > R.  The boundary matters: rates landing exactly on R are
common with small sample counts, and they are LR.  Rates are compared as
the float64 quotient count / num_samples.

File formats (little-endian):

    GRT1: magic "GRT1" | u32 header_len | JSON header | per-layer u32 counts
          header = {num_samples, sampler_seed, model_digest, convention,
                    layer_shapes}
    GLZ1: magic "GLZ1" | u32 header_len | JSON {dim, count} | f32 rows
"""

from __future__ import annotations

import json
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DigestMismatchError, FormatError, ShapeError
from .genmodel import Generator, forward_batch
from .runtime import worker_count

GRT_MAGIC = b"GRT1"
GLZ_MAGIC = b"GLZ1"
CONVENTION = "post_activation"
# Latent sampler contract: Philox4x32-10 keyed with the seed, drawing
# standard normals directly as float32.  The name is versioned so a rate
# table's provenance stays checkable.
SAMPLER_NAME = "philox4x32-normal-f32-v1"
DEFAULT_NUM_SAMPLES = 30_000

__all__ = [
    "RateTable",
    "NeuronSet",
    "sample_latents",
    "estimate_rates",
    "merge_counts",
    "lr_set",
    "hr_set",
    "write_grt",
    "save_grt",
    "load_grt",
    "write_glz",
    "save_glz",
    "load_glz",
    "SAMPLER_NAME",
    "DEFAULT_NUM_SAMPLES",
]


@dataclass
class RateTable:
    """Exact per-neuron activation counts over a latent sample set."""

    counts: tuple[np.ndarray, ...]          # per layer, flat u32 arrays
    layer_shapes: tuple[tuple[int, int, int], ...]
    num_samples: int
    sampler_seed: int | None
    model_digest: str
    convention: str = CONVENTION

    def validate(self) -> None:
        if self.num_samples < 0:
            raise ShapeError("num_samples must be >= 0")
        if len(self.counts) != len(self.layer_shapes):
            raise ShapeError("counts/layer_shapes length mismatch")
        for i, (c, shape) in enumerate(zip(self.counts, self.layer_shapes)):
            if c.shape != (int(np.prod(shape)),):
                raise ShapeError(
                    f"layer {i} counts length {c.shape} does not match shape {shape}")
            if c.size and int(c.max()) > self.num_samples:
                raise ShapeError(
                    f"layer {i} has a count above num_samples={self.num_samples}")

    def rates(self, layer: int) -> np.ndarray:
        """Float64 activation rates for one layer (flat, in [0, 1])."""
        self._check_layer(layer)
        if self.num_samples == 0:
            return np.zeros(self.counts[layer].shape, dtype=np.float64)
        return self.counts[layer].astype(np.float64) / float(self.num_samples)

    def _check_layer(self, layer: int) -> None:
        if not 0 <= layer < len(self.counts):
            raise ShapeError(f"layer index {layer} out of range")


@dataclass(frozen=True)
class NeuronSet:
    """A subset of one layer's neurons, as a flat boolean mask."""

    layer: int
    mask: np.ndarray = field(compare=False)

    def __post_init__(self):
        if self.mask.dtype != np.bool_ or self.mask.ndim != 1:
            raise ShapeError("neuron mask must be a flat boolean array")

    @property
    def size(self) -> int:
        return int(self.mask.sum())


def sample_latents(dim: int, count: int, seed: int) -> np.ndarray:
    """Standard-normal latent batch, (count, dim) float32, Philox stream."""
    rng = np.random.Generator(np.random.Philox(seed))
    return rng.standard_normal((count, dim), dtype=np.float32)


def _count_batch(gen: Generator, z: np.ndarray) -> list[np.ndarray]:
    traces, _ = forward_batch(gen, z)
    return [
        (t > 0).sum(axis=0).reshape(-1).astype(np.uint32)
        for t in traces
    ]


def estimate_rates(gen: Generator, num_samples: int = DEFAULT_NUM_SAMPLES,
                   seed: int = 0, *, latents: np.ndarray | None = None,
                   batch_size: int = 256,
                   threads: int | None = None) -> RateTable:
    """Monte Carlo activation counts for every neuron of every layer.

    Either samples ``num_samples`` latents from the seeded Philox stream
    or, when ``latents`` is given, counts over exactly those codes (then
    ``sampler_seed`` is recorded as null).  Counting is parallelized over
    fixed-size batches; each worker keeps private u32 counts that are
    summed at the end, so the result does not depend on the worker count.
    """
    if latents is None:
        if num_samples < 1:
            raise ShapeError("num_samples must be >= 1")
        latents = sample_latents(gen.spec.latent_dim, num_samples, seed)
        recorded_seed: int | None = int(seed)
    else:
        latents = np.ascontiguousarray(latents, dtype=np.float32)
        if latents.ndim != 2 or latents.shape[1] != gen.spec.latent_dim:
            raise ShapeError(
                f"latents shape {latents.shape} does not match latent_dim "
                f"{gen.spec.latent_dim}")
        num_samples = latents.shape[0]
        recorded_seed = None

    shapes = tuple(gen.spec.layer_shapes())
    totals = [np.zeros(int(np.prod(s)), dtype=np.uint32) for s in shapes]
    batches = [latents[i:i + batch_size] for i in range(0, num_samples, batch_size)]

    workers = worker_count(threads)
    if workers == 1 or len(batches) == 1:
        results = [_count_batch(gen, b) for b in batches]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda b: _count_batch(gen, b), batches))
    for per_layer in results:
        for total, c in zip(totals, per_layer):
            total += c

    table = RateTable(
        counts=tuple(totals),
        layer_shapes=shapes,
        num_samples=num_samples,
        sampler_seed=recorded_seed,
        model_digest=gen.digest,
    )
    table.validate()
    return table


def merge_counts(a: RateTable, b: RateTable) -> RateTable:
    """Combine two count tables over disjoint sample batches.

    Tables must describe the same model (digest) with identical layer
    shapes and conventions; disjointness of the underlying samples is the
    caller's responsibility.
    """
    if a.model_digest != b.model_digest:
        raise DigestMismatchError(
            f"cannot merge tables for different models: "
            f"{a.model_digest[:12]} vs {b.model_digest[:12]}")
    if a.layer_shapes != b.layer_shapes:
        raise ShapeError("cannot merge tables with different layer shapes")
    if a.convention != b.convention:
        raise ShapeError("cannot merge tables with different conventions")
    seed = a.sampler_seed if a.sampler_seed == b.sampler_seed else None
    merged = RateTable(
        counts=tuple((ca.astype(np.uint64) + cb.astype(np.uint64)).astype(np.uint32)
                     for ca, cb in zip(a.counts, b.counts)),
        layer_shapes=a.layer_shapes,
        num_samples=a.num_samples + b.num_samples,
        sampler_seed=seed,
        model_digest=a.model_digest,
        convention=a.convention,
    )
    merged.validate()
    return merged


def lr_set(table: RateTable, layer: int, threshold: float) -> NeuronSet:
    """Neurons whose activation rate is <= threshold (boundary included)."""
    if not 0.0 <= threshold <= 1.0:
        raise ShapeError(f"threshold must be in [0, 1], got {threshold}")
    return NeuronSet(layer=layer, mask=table.rates(layer) <= threshold)


def hr_set(table: RateTable, layer: int, threshold: float) -> NeuronSet:
    """Neurons whose activation rate is > threshold; complement of lr_set."""
    if not 0.0 <= threshold <= 1.0:
        raise ShapeError(f"threshold must be in [0, 1], got {threshold}")
    return NeuronSet(layer=layer, mask=table.rates(layer) > threshold)


# ---------------------------------------------------------------------------
# GRT1 rate-table files


def write_grt(table: RateTable) -> bytes:
    table.validate()
    header = json.dumps(
        {
            "num_samples": table.num_samples,
            "sampler_seed": table.sampler_seed,
            "model_digest": table.model_digest,
            "convention": table.convention,
            "layer_shapes": [list(s) for s in table.layer_shapes],
        },
        separators=(",", ":"),
    ).encode("utf-8")
    parts = [GRT_MAGIC, struct.pack("<I", len(header)), header]
    for c in table.counts:
        parts.append(np.ascontiguousarray(c, dtype="<u4").tobytes())
    return b"".join(parts)


def save_grt(table: RateTable, path) -> None:
    with open(path, "wb") as fh:
        fh.write(write_grt(table))


def load_grt(source) -> RateTable:
    if isinstance(source, (bytes, bytearray)):
        data = bytes(source)
    else:
        with open(source, "rb") as fh:
            data = fh.read()
    if data[:4] != GRT_MAGIC:
        raise FormatError(f"bad magic {data[:4]!r}, expected {GRT_MAGIC!r}", offset=0)
    if len(data) < 8:
        raise FormatError("file too short for header length", offset=4)
    (header_len,) = struct.unpack_from("<I", data, 4)
    header_end = 8 + header_len
    if len(data) < header_end:
        raise FormatError("truncated header", offset=len(data))
    try:
        header = json.loads(data[8:header_end].decode("utf-8"))
        num_samples = int(header["num_samples"])
        seed = header["sampler_seed"]
        sampler_seed = None if seed is None else int(seed)
        digest = str(header["model_digest"])
        convention = str(header["convention"])
        layer_shapes = tuple(tuple(int(x) for x in s) for s in header["layer_shapes"])
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise FormatError(f"malformed GRT1 header: {exc}", offset=8) from exc

    offset = header_end
    counts = []
    for i, shape in enumerate(layer_shapes):
        n = int(np.prod(shape))
        nbytes = 4 * n
        if len(data) < offset + nbytes:
            raise FormatError(
                f"truncated counts for layer {i}: need {nbytes} bytes, "
                f"have {len(data) - offset}", offset=offset)
        counts.append(np.frombuffer(data, dtype="<u4", count=n, offset=offset)
                      .astype(np.uint32))
        offset += nbytes
    if offset != len(data):
        raise FormatError(f"{len(data) - offset} trailing bytes", offset=offset)

    table = RateTable(
        counts=tuple(counts),
        layer_shapes=layer_shapes,
        num_samples=num_samples,
        sampler_seed=sampler_seed,
        model_digest=digest,
        convention=convention,
    )
    try:
        table.validate()
    except ShapeError as exc:
        raise FormatError(str(exc), offset=header_end) from exc
    return table


# ---------------------------------------------------------------------------
# GLZ1 latent files


def write_glz(latents: np.ndarray) -> bytes:
    latents = np.ascontiguousarray(latents, dtype=np.float32)
    if latents.ndim != 2:
        raise ShapeError(f"expected (count, dim) latents, got shape {latents.shape}")
    header = json.dumps(
        {"dim": latents.shape[1], "count": latents.shape[0]},
        separators=(",", ":"),
    ).encode("utf-8")
    return b"".join([
        GLZ_MAGIC,
        struct.pack("<I", len(header)),
        header,
        latents.astype("<f4").tobytes(),
    ])


def save_glz(latents: np.ndarray, path) -> None:
    with open(path, "wb") as fh:
        fh.write(write_glz(latents))


def load_glz(source) -> np.ndarray:
    if isinstance(source, (bytes, bytearray)):
        data = bytes(source)
    else:
        with open(source, "rb") as fh:
            data = fh.read()
    if data[:4] != GLZ_MAGIC:
        raise FormatError(f"bad magic {data[:4]!r}, expected {GLZ_MAGIC!r}", offset=0)
    if len(data) < 8:
        raise FormatError("file too short for header length", offset=4)
    (header_len,) = struct.unpack_from("<I", data, 4)
    header_end = 8 + header_len
    if len(data) < header_end:
        raise FormatError("truncated header", offset=len(data))
    try:
        header = json.loads(data[8:header_end].decode("utf-8"))
        dim = int(header["dim"])
        count = int(header["count"])
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise FormatError(f"malformed GLZ1 header: {exc}", offset=8) from exc
    expected = 4 * dim * count
    if len(data) - header_end != expected:
        raise FormatError(
            f"payload is {len(data) - header_end} bytes, expected {expected}",
            offset=header_end)
    return (np.frombuffer(data, dtype="<f4", count=dim * count, offset=header_end)
            .reshape(count, dim).astype(np.float32))
