"""Command-line interface.

Subcommands: profile, score, repair, heatmap, grid, metrics, replay.
Every run emits a manifest (JSON) describing the command, input digests,
and parameters; `neuroprobe replay <manifest>` re-executes the run and,
because all outputs are deterministically encoded, reproduces them
byte-for-byte.

Exit codes: 0 success, 2 usage/contract error, 3 format or digest error,
4 numeric failure.  NEUROPROBE_THREADS caps internal parallelism without
affecting results.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .ablation import (
    MODE_HR,
    MODE_LR,
    MODE_RANDOM,
    AblationConfig,
    ablate_forward_batch,
    default_target_layers,
    preset_config,
)
from .detect import ArtifactScore
from .detect import heatmap as compute_heatmap
from .detect import rank_images, render_overlay, score_batch, write_scores_csv
from .errors import (
    ContractError,
    DigestMismatchError,
    FormatError,
    NumericError,
    ShapeError,
)
from .freqstat import (
    estimate_rates,
    load_glz,
    load_grt,
    sample_latents,
    save_grt,
)
from .genmodel import Generator, forward, forward_batch, load_gwf
from .metrics import fid as compute_fid
from .metrics import load_fts, precision_recall, realism_score
from .pngio import to_uint8, to_uint16, write_png
from .runtime import worker_count

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_FORMAT = 3
EXIT_NUMERIC = 4

DEFAULT_BATCH = 128


class UsageError(ValueError):
    pass


# ---------------------------------------------------------------------------
# shared plumbing


def _load_model(path: str) -> Generator:
    return load_gwf(Path(path))


def _load_rates(path: str):
    data = Path(path).read_bytes()
    return load_grt(data), hashlib.sha256(data).hexdigest()


def _check_digest(gen: Generator, rates) -> None:
    if rates.model_digest != gen.digest:
        raise DigestMismatchError(
            f"rate table was profiled on model {rates.model_digest[:12]}..., "
            f"but --model has digest {gen.digest[:12]}...")


def _resolve_latents(params: dict, gen: Generator):
    """Latent selection: a GLZ1 file (optionally subset) or count+seed.

    Returns (latents, labels); labels are the indices used in filenames,
    CSV rows, and per-sample random-ablation seeds.
    """
    if params.get("latents"):
        codes = load_glz(Path(params["latents"]))
        if codes.shape[1] != gen.spec.latent_dim:
            raise ShapeError(
                f"latent file dim {codes.shape[1]} does not match model "
                f"latent_dim {gen.spec.latent_dim}")
        indices = params.get("indices")
        if indices:
            for i in indices:
                if not 0 <= i < codes.shape[0]:
                    raise UsageError(f"latent index {i} out of range")
            return codes[list(indices)], list(indices)
        return codes, list(range(codes.shape[0]))
    count = params.get("count")
    if not count:
        raise UsageError("either --latents or --count with --seed is required")
    codes = sample_latents(gen.spec.latent_dim, int(count),
                           int(params.get("seed") or 0))
    return codes, list(range(codes.shape[0]))


def _parse_layers(text: str | None, gen: Generator) -> tuple[int, ...]:
    if text is None or text == "":
        return default_target_layers(gen.spec.num_layers)
    if text == "none":
        return ()
    try:
        layers = tuple(int(p) for p in text.split(","))
    except ValueError as exc:
        raise UsageError(f"bad --layers value {text!r}") from exc
    return layers


def _parse_mode(text: str) -> tuple[str, float]:
    if text == MODE_LR or text == MODE_HR:
        return text, 0.0
    if text.startswith(MODE_RANDOM + ":"):
        try:
            p = float(text.split(":", 1)[1])
        except ValueError as exc:
            raise UsageError(f"bad random fraction in {text!r}") from exc
        return MODE_RANDOM, p
    raise UsageError(f"bad --mode value {text!r}; use lr, hr, or random:<p>")


def _sample_seed(mode_seed: int, index: int) -> int:
    """Stable per-image seed for random-mode masks."""
    state = np.random.SeedSequence((int(mode_seed), int(index))).generate_state(2)
    return int(state[0]) | (int(state[1]) << 32)


def _manifest(command: str, params: dict, outputs: list[str],
              model_digest: str | None = None,
              rates_digest: str | None = None) -> dict:
    return {
        "tool": "neuroprobe",
        "version": __version__,
        "command": command,
        "params": params,
        "model_digest": model_digest,
        "rates_digest": rates_digest,
        "outputs": outputs,
    }


def _write_manifest(manifest: dict, out: Path) -> Path:
    if out.is_dir():
        path = out / "manifest.json"
    else:
        path = Path(str(out) + ".manifest.json")
    text = json.dumps(manifest, indent=2, sort_keys=True)
    path.write_text(text + "\n")
    print(text)
    return path


def _batched(items: np.ndarray, size: int):
    for i in range(0, len(items), size):
        yield i, items[i:i + size]


def _map_batches(fn, batches, threads=None):
    """Run fn over (offset, batch) pairs, preserving batch order."""
    batches = list(batches)
    workers = worker_count(threads)
    if workers == 1 or len(batches) <= 1:
        return [fn(off, b) for off, b in batches]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda ob: fn(ob[0], ob[1]), batches))


# ---------------------------------------------------------------------------
# commands


def cmd_profile(params: dict, out: Path) -> list[str]:
    gen = _load_model(params["model"])
    table = estimate_rates(gen, num_samples=int(params["samples"]),
                           seed=int(params["seed"]),
                           batch_size=int(params.get("batch_size", DEFAULT_BATCH)))
    save_grt(table, out)
    return [out.name]


def _score_all(gen, rates, layers, threshold, codes, labels):
    """Batched scoring of all latents, labeled with their original indices."""

    def score_one(offset, batch):
        fmaps, _ = forward_batch(gen, batch)
        return score_batch(fmaps, rates, layers, threshold, first_index=0)

    results = _map_batches(score_one, _batched(codes, DEFAULT_BATCH))
    scores = []
    pos = 0
    for batch_scores in results:
        for s in batch_scores:
            scores.append(ArtifactScore(layers=s.layers, counts=s.counts,
                                        total=s.total,
                                        latent_index=labels[pos]))
            pos += 1
    return scores


def cmd_score(params: dict, out: Path) -> list[str]:
    gen = _load_model(params["model"])
    rates, _ = _load_rates(params["rates"])
    _check_digest(gen, rates)
    scores = _score_all(gen, rates, tuple(params["layers"]),
                        float(params["threshold"]),
                        *_resolve_latents(params, gen))
    write_scores_csv(out, scores)
    return [out.name]


def cmd_repair(params: dict, out: Path) -> list[str]:
    gen = _load_model(params["model"])
    rates, _ = _load_rates(params["rates"])
    _check_digest(gen, rates)
    codes, labels = _resolve_latents(params, gen)
    cfg = AblationConfig(
        target_layers=tuple(params["layers"]),
        threshold=float(params["threshold"]),
        mode=params["mode"],
        random_p=float(params.get("random_p", 0.3)),
        random_seed=int(params.get("mode_seed", 0)),
    )
    cfg.validate(gen.spec.num_layers)

    out.mkdir(parents=True, exist_ok=True)
    outputs = []
    for offset, batch in _batched(codes, DEFAULT_BATCH):
        batch_labels = labels[offset:offset + len(batch)]
        _, before = forward_batch(gen, batch)
        seeds = None
        if cfg.mode == MODE_RANDOM:
            seeds = [_sample_seed(cfg.random_seed, i) for i in batch_labels]
        _, after = ablate_forward_batch(gen, rates, cfg, batch, seeds)
        for j, label in enumerate(batch_labels):
            for tag, img in (("before", before[j]), ("after", after[j])):
                name = f"{tag}_{label:04d}.png"
                write_png(out / name, to_uint16(img))
                outputs.append(name)
    return outputs


def cmd_heatmap(params: dict, out: Path) -> list[str]:
    gen = _load_model(params["model"])
    rates, _ = _load_rates(params["rates"])
    _check_digest(gen, rates)
    layer = int(params["layer"])
    threshold = float(params["threshold"])
    codes, labels = _resolve_latents(params, gen)

    out.mkdir(parents=True, exist_ok=True)
    outputs = []
    for z, label in zip(codes, labels):
        trace = forward(gen, z)
        hm = compute_heatmap(trace, rates, layer, threshold)
        overlay = render_overlay(trace.image, hm)
        name = f"heatmap_{label:04d}_layer{layer}.png"
        write_png(out / name, overlay)
        outputs.append(name)
    return outputs


def _assemble_grid(images: list[np.ndarray], cols: int, pad: int) -> np.ndarray:
    """Row-major grid of (H, W, 3) uint8 cells with black padding."""
    h, w, _ = images[0].shape
    rows = math.ceil(len(images) / cols)
    canvas = np.zeros((rows * (h + pad), cols * (w + pad), 3), dtype=np.uint8)
    for idx, img in enumerate(images):
        r, c = divmod(idx, cols)
        canvas[r * (h + pad):r * (h + pad) + h,
               c * (w + pad):c * (w + pad) + w] = img
    return canvas


def cmd_grid(params: dict, out: Path) -> list[str]:
    gen = _load_model(params["model"])
    rates, _ = _load_rates(params["rates"])
    _check_digest(gen, rates)
    layers = tuple(params["layers"])
    threshold = float(params["threshold"])
    top_k = int(params["top"])
    bottom_k = int(params["bottom"])
    cols = int(params["cols"])
    pad = int(params.get("pad", 2))
    codes, labels = _resolve_latents(params, gen)

    scores = _score_all(gen, rates, layers, threshold, codes, labels)

    def render(offset, batch):
        _, images = forward_batch(gen, batch)
        return [to_uint8(img) for img in images]

    results = _map_batches(render, _batched(codes, DEFAULT_BATCH))
    images = [img for batch_images in results for img in batch_images]

    top, bottom = rank_images(scores, top_k, bottom_k)
    out.mkdir(parents=True, exist_ok=True)
    outputs = []
    for name, picks in (("grid_top.png", top), ("grid_bottom.png", bottom)):
        if picks:
            grid = _assemble_grid([images[i] for i in picks], cols, pad)
            write_png(out / name, grid)
            outputs.append(name)
    return outputs


def cmd_metrics(params: dict, out: Path) -> list[str]:
    real = load_fts(Path(params["real"]))
    fake = load_fts(Path(params["fake"]))
    k = int(params["k"])
    report = realism_score(real, fake, k=k)
    report.fid = compute_fid(real, fake)
    report.precision, report.recall = precision_recall(real, fake, k=k)
    text = json.dumps(report.to_json(), indent=2, sort_keys=True)
    out.write_text(text + "\n")
    print(text)
    return [out.name]


COMMANDS = {
    "profile": cmd_profile,
    "score": cmd_score,
    "repair": cmd_repair,
    "heatmap": cmd_heatmap,
    "grid": cmd_grid,
    "metrics": cmd_metrics,
}


def run_command(command: str, params: dict, out: Path) -> dict:
    """Execute a command, then write its manifest next to the outputs."""
    outputs = COMMANDS[command](params, out)
    model_digest = None
    rates_digest = None
    if "model" in params:
        model_digest = _load_model(params["model"]).digest
    if "rates" in params:
        _, rates_digest = _load_rates(params["rates"])
    manifest = _manifest(command, params, outputs, model_digest, rates_digest)
    _write_manifest(manifest, out)
    return manifest


def cmd_replay(manifest_path: str, out: str | None) -> None:
    try:
        manifest = json.loads(Path(manifest_path).read_text())
        command = manifest["command"]
        params = manifest["params"]
        recorded_out = manifest.get("out")
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise FormatError(f"cannot read manifest {manifest_path}: {exc}") from exc
    if command not in COMMANDS:
        raise FormatError(f"manifest names unknown command {command!r}")
    target = Path(out) if out else Path(recorded_out or "")
    if str(target) in ("", "."):
        raise UsageError("replay needs --out (manifest has no usable out path)")
    rerun = run_command(command, params, target)
    rerun.pop("out", None)
    original = {k: v for k, v in manifest.items() if k != "out"}
    if rerun != original:
        raise ContractError("replayed manifest differs from the original")


# ---------------------------------------------------------------------------
# argument parsing


def _add_common_model_args(p: argparse.ArgumentParser, with_rates=True):
    p.add_argument("--model", required=True, help="GWF generator file")
    if with_rates:
        p.add_argument("--rates", required=True, help="GRT1 rate-table file")


def _add_latent_args(p: argparse.ArgumentParser):
    p.add_argument("--latents", help="GLZ1 latent file")
    p.add_argument("--indices", help="comma-separated subset of latent rows")
    p.add_argument("--count", type=int, help="number of latents to sample")
    p.add_argument("--seed", type=int, default=0, help="latent sampler seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="neuroprobe",
        description="Activation-rate profiling, artifact detection, and "
                    "ablation repair for GWF generators.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("profile", help="estimate per-neuron activation rates")
    _add_common_model_args(p, with_rates=False)
    p.add_argument("--samples", type=int, default=30000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--batch-size", type=int, default=DEFAULT_BATCH)
    p.add_argument("--out", required=True, help="output GRT1 path")

    p = sub.add_parser("score", help="count activated low-rate neurons per image")
    _add_common_model_args(p)
    _add_latent_args(p)
    p.add_argument("--threshold", type=float, default=0.3)
    p.add_argument("--layers", help="comma-separated target layers")
    p.add_argument("--out", required=True, help="output CSV path")

    p = sub.add_parser("repair", help="write before/after ablation image pairs")
    _add_common_model_args(p)
    _add_latent_args(p)
    p.add_argument("--preset", choices=["style2-early", "pggan-early"])
    p.add_argument("--layers", help="comma-separated target layers, or 'none'")
    p.add_argument("--threshold", type=float)
    p.add_argument("--mode", default=MODE_LR, help="lr, hr, or random:<p>")
    p.add_argument("--mode-seed", type=int, default=0,
                   help="seed for random-mode masks")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("heatmap", help="render low-rate ratio overlays")
    _add_common_model_args(p)
    _add_latent_args(p)
    p.add_argument("--layer", type=int, required=True)
    p.add_argument("--threshold", type=float, default=0.3)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("grid", help="rank images and render top/bottom grids")
    _add_common_model_args(p)
    _add_latent_args(p)
    p.add_argument("--threshold", type=float, default=0.3)
    p.add_argument("--layers", help="comma-separated target layers")
    p.add_argument("--top", type=int, default=8)
    p.add_argument("--bottom", type=int, default=8)
    p.add_argument("--cols", type=int, default=4)
    p.add_argument("--pad", type=int, default=2)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("metrics", help="FID, precision/recall, realism")
    p.add_argument("--real", required=True, help="FTS1 feature file")
    p.add_argument("--fake", required=True, help="FTS1 feature file")
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--out", required=True, help="output JSON path")

    p = sub.add_parser("replay", help="re-run a command from its manifest")
    p.add_argument("manifest")
    p.add_argument("--out", help="override output location")
    return parser


def _parse_indices(text: str | None):
    if not text:
        return None
    try:
        return [int(p) for p in text.split(",")]
    except ValueError as exc:
        raise UsageError(f"bad --indices value {text!r}") from exc


def _params_from_args(args: argparse.Namespace) -> dict:
    """Normalize argparse output into the replayable params dict."""
    cmd = args.command
    if cmd == "profile":
        return {
            "model": str(Path(args.model).resolve()),
            "samples": args.samples,
            "seed": args.seed,
            "batch_size": args.batch_size,
        }

    if cmd == "metrics":
        return {
            "real": str(Path(args.real).resolve()),
            "fake": str(Path(args.fake).resolve()),
            "k": args.k,
        }

    gen = _load_model(args.model)
    params = {
        "model": str(Path(args.model).resolve()),
        "rates": str(Path(args.rates).resolve()),
        "latents": str(Path(args.latents).resolve()) if args.latents else None,
        "indices": _parse_indices(args.indices),
        "count": args.count,
        "seed": args.seed,
    }
    if cmd == "score":
        params["threshold"] = args.threshold
        params["layers"] = list(_parse_layers(args.layers, gen))
    elif cmd == "repair":
        # Preset fixes layers and threshold; explicit flags override.
        if args.preset:
            cfg = preset_config(args.preset)
            layers, threshold = cfg.target_layers, cfg.threshold
        else:
            layers = default_target_layers(gen.spec.num_layers)
            threshold = 0.3
        if args.layers is not None:
            layers = _parse_layers(args.layers, gen)
        if args.threshold is not None:
            threshold = args.threshold
        mode, p = _parse_mode(args.mode)
        params.update({
            "layers": list(layers),
            "threshold": threshold,
            "mode": mode,
            "random_p": p,
            "mode_seed": args.mode_seed,
        })
    elif cmd == "heatmap":
        params["layer"] = args.layer
        params["threshold"] = args.threshold
    elif cmd == "grid":
        params["threshold"] = args.threshold
        params["layers"] = list(_parse_layers(args.layers, gen))
        params.update({"top": args.top, "bottom": args.bottom,
                       "cols": args.cols, "pad": args.pad})
    return params


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "replay":
            cmd_replay(args.manifest, args.out)
        else:
            params = _params_from_args(args)
            run_command(args.command, params, Path(args.out))
    except (UsageError, ShapeError, ContractError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, DigestMismatchError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
