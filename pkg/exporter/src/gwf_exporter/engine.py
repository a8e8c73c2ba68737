"""Drive the primary inference engine through its CLI and file formats.

The exporter never imports the engine's Python API; it talks GWF/GLZ1 in,
GRT1/PNG out, exactly like any other out-of-process consumer.  Forward
images come back as 16-bit PNGs, so the decode quantization error is
about 1.5e-5 on the [-1, 1] scale, well inside the 1e-4 validation
budget.
"""

from __future__ import annotations

import json
import struct
import subprocess
import sys
from pathlib import Path

import cv2
import numpy as np

CLI = [sys.executable, "-m", "neuroprobe.cli"]


class EngineError(RuntimeError):
    pass


def run_cli(*args) -> subprocess.CompletedProcess:
    proc = subprocess.run([*CLI, *[str(a) for a in args]],
                          capture_output=True, text=True)
    if proc.returncode != 0:
        raise EngineError(
            f"primary CLI failed ({proc.returncode}): {proc.stderr.strip()}")
    return proc


def write_glz(latents: np.ndarray, path: Path) -> None:
    latents = np.ascontiguousarray(latents, dtype="<f4")
    header = json.dumps({"dim": latents.shape[1], "count": latents.shape[0]},
                        separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(b"GLZ1" + struct.pack("<I", len(header)) + header
                 + latents.tobytes())


def parse_grt(path: Path) -> tuple[dict, list[np.ndarray]]:
    """Read a GRT1 rate table: (header, per-layer u32 count arrays)."""
    data = Path(path).read_bytes()
    if data[:4] != b"GRT1":
        raise EngineError(f"bad GRT1 magic {data[:4]!r}")
    (header_len,) = struct.unpack_from("<I", data, 4)
    header = json.loads(data[8:8 + header_len].decode("utf-8"))
    offset = 8 + header_len
    counts = []
    for shape in header["layer_shapes"]:
        n = int(np.prod(shape))
        counts.append(np.frombuffer(data, dtype="<u4", count=n,
                                    offset=offset).copy())
        offset += 4 * n
    if offset != len(data):
        raise EngineError("trailing bytes in GRT1 file")
    return header, counts


def profile(gwf_path: Path, samples: int, seed: int, workdir: Path):
    """Run the primary rate profiler; returns the parsed GRT1 table."""
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    out = workdir / f"rates_{samples}_{seed}.grt"
    run_cli("profile", "--model", gwf_path, "--samples", samples,
            "--seed", seed, "--out", out)
    return parse_grt(out)


def forward_images(gwf_path: Path, latents: np.ndarray,
                   workdir: Path) -> np.ndarray:
    """Primary-engine forward pass for a latent batch, via repair PNGs.

    Repair with an empty target-layer list is the plain forward pass; its
    "before" images are written as deterministic 16-bit PNGs.  A 1-sample
    rate table is profiled first only to satisfy the CLI's digest check.
    """
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    glz = workdir / "batch.glz"
    write_glz(latents, glz)
    rates = workdir / "digest_binding.grt"
    run_cli("profile", "--model", gwf_path, "--samples", 1, "--seed", 0,
            "--out", rates)
    imgdir = workdir / "forward"
    run_cli("repair", "--model", gwf_path, "--rates", rates,
            "--latents", glz, "--layers", "none", "--out", imgdir)

    images = []
    for i in range(latents.shape[0]):
        png = imgdir / f"before_{i:04d}.png"
        arr = cv2.imread(str(png), cv2.IMREAD_UNCHANGED)
        if arr is None or arr.dtype != np.uint16:
            raise EngineError(f"cannot read 16-bit image {png}")
        rgb = arr[:, :, ::-1].astype(np.float64)      # BGR -> RGB
        images.append((rgb / 65535.0) * 2.0 - 1.0)
    return np.stack(images).transpose(0, 3, 1, 2)
