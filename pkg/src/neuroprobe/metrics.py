"""Distribution metrics: Frechet distance, k-NN precision/recall, realism.

Feature sets are N x d float32 matrices.  N >= d + 1 is enforced so the
Gaussian fit behind the Frechet distance stays full rank at desk scale;
all k-NN computations use exhaustive float64 Euclidean distances
(correctness over speed, N <= 1e4).

FTS1 files (little-endian): magic "FTS1" | u32 header_len |
JSON {count, dim, source} | f32 row-major payload.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import FormatError, NumericError, ShapeError

FTS_MAGIC = b"FTS1"
FID_EPS = 1e-6            # diagonal regularizer added to both covariances
REALISM_DIST_FLOOR = 1e-12
REALISM_CAP = 1e6
DEFAULT_K = 3

__all__ = [
    "FeatureSet",
    "MetricReport",
    "gaussian_stats",
    "matrix_sqrt_psd",
    "frechet_distance",
    "fid",
    "precision_recall",
    "realism_score",
    "pixel_features",
    "write_fts",
    "save_fts",
    "load_fts",
    "DEFAULT_K",
]


@dataclass(frozen=True)
class FeatureSet:
    """N x d float32 feature matrix with a provenance tag."""

    data: np.ndarray
    source: str = ""

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data, dtype=np.float32)
        if arr.ndim != 2:
            raise ShapeError(f"features must be (N, d), got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ShapeError("features must be finite")
        object.__setattr__(self, "data", arr)

    def check_fid_ready(self) -> None:
        """N >= d + 1, required for a stable covariance in the FID path."""
        n, d = self.data.shape
        if n < d + 1:
            raise NumericError(
                f"need at least d + 1 = {d + 1} samples for a {d}-dim "
                f"Gaussian fit, got {n}")

    @property
    def count(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]


@dataclass
class MetricReport:
    """Bundle of metric results; absent metrics stay None."""

    k: int = DEFAULT_K
    fid: float | None = None
    precision: float | None = None
    recall: float | None = None
    realism_scores: np.ndarray | None = None
    realism_mean: float | None = None
    realism_std: float | None = None
    realism_capped: int = 0

    def realism_summary(self) -> str:
        """Mean +/- std over fake samples, 4 decimals (e.g. '1.0911±0.0712')."""
        if self.realism_mean is None:
            return "n/a"
        return f"{self.realism_mean:.4f}±{self.realism_std:.4f}"

    def to_json(self) -> dict:
        return {
            "k": self.k,
            "fid": self.fid,
            "precision": self.precision,
            "recall": self.recall,
            "realism_mean": self.realism_mean,
            "realism_std": self.realism_std,
            "realism_capped": self.realism_capped,
            "realism_summary": self.realism_summary() if self.realism_mean is not None else None,
        }


def gaussian_stats(features: FeatureSet) -> tuple[np.ndarray, np.ndarray]:
    """Sample mean and unbiased covariance (divisor N - 1), float64.

    The covariance is symmetrized exactly: (S + S.T) / 2.
    """
    x = features.data.astype(np.float64)
    n = x.shape[0]
    if n < 2:
        raise NumericError("need at least 2 samples for covariance")
    mu = x.mean(axis=0)
    centered = x - mu
    cov = centered.T @ centered / (n - 1)
    cov = (cov + cov.T) / 2.0
    return mu, cov


def matrix_sqrt_psd(a: np.ndarray, *, asym_tol: float = 1e-6,
                    eig_floor: float = -1e-8) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition.

    Eigenvalues in [eig_floor * scale, 0) are clamped to 0; anything more
    negative, or asymmetry beyond ``asym_tol`` (relative to the matrix
    magnitude), is an error.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"expected a square matrix, got shape {a.shape}")
    scale = max(1.0, float(np.abs(a).max()) if a.size else 1.0)
    asym = float(np.abs(a - a.T).max()) if a.size else 0.0
    if asym > asym_tol * scale:
        raise NumericError(f"matrix asymmetry {asym:.3e} exceeds tolerance")
    sym = (a + a.T) / 2.0
    lam, vec = np.linalg.eigh(sym)
    lam_scale = max(1.0, float(lam.max()) if lam.size else 1.0)
    if lam.size and float(lam.min()) < eig_floor * lam_scale:
        raise NumericError(
            f"matrix is not PSD: smallest eigenvalue {lam.min():.3e}")
    lam = np.clip(lam, 0.0, None)
    return (vec * np.sqrt(lam)) @ vec.T


def frechet_distance(mu1: np.ndarray, cov1: np.ndarray,
                     mu2: np.ndarray, cov2: np.ndarray) -> float:
    """Frechet distance between two Gaussians from their stats.

    Computes |mu1 - mu2|^2 + Tr(C1 + C2 - 2 (C1^1/2 C2 C1^1/2)^1/2) with a
    diagonal regularizer added to both covariances; round-off negatives
    are clamped to 0.
    """
    mu1 = np.asarray(mu1, dtype=np.float64).reshape(-1)
    mu2 = np.asarray(mu2, dtype=np.float64).reshape(-1)
    if mu1.shape != mu2.shape:
        raise ShapeError(f"mean dimensions differ: {mu1.shape} vs {mu2.shape}")
    d = mu1.shape[0]
    c1 = np.asarray(cov1, dtype=np.float64) + FID_EPS * np.eye(d)
    c2 = np.asarray(cov2, dtype=np.float64) + FID_EPS * np.eye(d)
    s1 = matrix_sqrt_psd(c1)
    inner = s1 @ c2 @ s1
    inner = (inner + inner.T) / 2.0
    cross = float(np.trace(matrix_sqrt_psd(inner)))
    diff = mu1 - mu2
    value = float(diff @ diff) + float(np.trace(c1) + np.trace(c2)) - 2.0 * cross
    return max(value, 0.0)


def fid(real: FeatureSet, fake: FeatureSet) -> float:
    """Frechet distance between Gaussian fits of two feature sets."""
    if real.dim != fake.dim:
        raise ShapeError(f"feature dims differ: {real.dim} vs {fake.dim}")
    real.check_fid_ready()
    fake.check_fid_ready()
    mu1, c1 = gaussian_stats(real)
    mu2, c2 = gaussian_stats(fake)
    return frechet_distance(mu1, c1, mu2, c2)


def _sq_dists(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Exhaustive pairwise squared Euclidean distances, float64."""
    diff = x[:, None, :] - y[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _knn_sq_radii(x: np.ndarray, k: int) -> np.ndarray:
    """Squared distance from each row to its k-th nearest neighbor (self excluded)."""
    d = _sq_dists(x, x)
    # Row-wise sort puts the self distance (exactly 0) first; index k is
    # the k-th neighbor beyond it.
    return np.sort(d, axis=1)[:, k]


def precision_recall(real: FeatureSet, fake: FeatureSet,
                     k: int = DEFAULT_K) -> tuple[float, float]:
    """k-NN manifold precision (fidelity) and recall (diversity).

    A point is covered by a set when it lies within some member's k-th
    nearest neighbor radius (boundary included).  Precision is the
    covered fraction of fake points in the real manifold; recall is the
    covered fraction of real points in the fake manifold.
    """
    if real.dim != fake.dim:
        raise ShapeError(f"feature dims differ: {real.dim} vs {fake.dim}")
    if not 1 <= k < min(real.count, fake.count):
        raise ShapeError(
            f"k={k} must satisfy 1 <= k < min(N_real, N_fake)="
            f"{min(real.count, fake.count)}")
    xr = real.data.astype(np.float64)
    xf = fake.data.astype(np.float64)
    rad_r = _knn_sq_radii(xr, k)
    rad_f = _knn_sq_radii(xf, k)
    cross = _sq_dists(xf, xr)  # (N_fake, N_real)
    precision = float(np.mean(np.any(cross <= rad_r[None, :], axis=1)))
    recall = float(np.mean(np.any(cross.T <= rad_f[None, :], axis=1)))
    return precision, recall


def realism_score(real: FeatureSet, fake: FeatureSet,
                  k: int = DEFAULT_K) -> MetricReport:
    """Per-fake-sample realism: max over real r of radius_k(r) / distance.

    Distances are floored at 1e-12 and scores capped at 1e6 so coincident
    points stay defined; the report flags how many samples hit the cap.
    """
    if real.dim != fake.dim:
        raise ShapeError(f"feature dims differ: {real.dim} vs {fake.dim}")
    if not 1 <= k < real.count:
        raise ShapeError(f"k={k} must satisfy 1 <= k < N_real={real.count}")
    xr = real.data.astype(np.float64)
    xf = fake.data.astype(np.float64)
    radii = np.sqrt(_knn_sq_radii(xr, k))
    dists = np.sqrt(_sq_dists(xf, xr))
    ratios = radii[None, :] / np.maximum(dists, REALISM_DIST_FLOOR)
    scores = np.minimum(ratios.max(axis=1), REALISM_CAP)
    return MetricReport(
        k=k,
        realism_scores=scores,
        realism_mean=float(scores.mean()),
        realism_std=float(scores.std()),
        realism_capped=int(np.count_nonzero(scores >= REALISM_CAP)),
    )


def pixel_features(images: Sequence[np.ndarray], side: int,
                   source: str = "pixel") -> FeatureSet:
    """Luminance images box-downsampled to side x side, flattened.

    A desk-scale stand-in for a learned embedding: each (3, H, W) image in
    [-1, 1] becomes Rec.601 luminance, averaged over non-overlapping
    boxes (H and W must be divisible by ``side``), giving d = side^2.
    """
    if side < 2:
        raise ShapeError(f"side must be >= 2, got {side}")
    if not images:
        raise ShapeError("no images given")
    rows = []
    for img in images:
        arr = np.asarray(img, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[0] != 3:
            raise ShapeError(f"expected (3, H, W) images, got shape {arr.shape}")
        _, h, w = arr.shape
        if h % side or w % side:
            raise ShapeError(
                f"image size {h}x{w} is not divisible by side={side}")
        lum = 0.299 * arr[0] + 0.587 * arr[1] + 0.114 * arr[2]
        boxed = lum.reshape(side, h // side, side, w // side).mean(axis=(1, 3))
        rows.append(boxed.reshape(-1))
    return FeatureSet(data=np.asarray(rows, dtype=np.float32), source=source)


# ---------------------------------------------------------------------------
# FTS1 feature files


def write_fts(features: FeatureSet) -> bytes:
    header = json.dumps(
        {"count": features.count, "dim": features.dim, "source": features.source},
        separators=(",", ":"),
    ).encode("utf-8")
    return b"".join([
        FTS_MAGIC,
        struct.pack("<I", len(header)),
        header,
        features.data.astype("<f4").tobytes(),
    ])


def save_fts(features: FeatureSet, path) -> None:
    with open(path, "wb") as fh:
        fh.write(write_fts(features))


def load_fts(source) -> FeatureSet:
    if isinstance(source, (bytes, bytearray)):
        data = bytes(source)
    else:
        with open(source, "rb") as fh:
            data = fh.read()
    if data[:4] != FTS_MAGIC:
        raise FormatError(f"bad magic {data[:4]!r}, expected {FTS_MAGIC!r}", offset=0)
    if len(data) < 8:
        raise FormatError("file too short for header length", offset=4)
    (header_len,) = struct.unpack_from("<I", data, 4)
    header_end = 8 + header_len
    if len(data) < header_end:
        raise FormatError("truncated header", offset=len(data))
    try:
        header = json.loads(data[8:header_end].decode("utf-8"))
        count = int(header["count"])
        dim = int(header["dim"])
        tag = str(header.get("source", ""))
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise FormatError(f"malformed FTS1 header: {exc}", offset=8) from exc
    expected = 4 * count * dim
    if len(data) - header_end != expected:
        raise FormatError(
            f"payload is {len(data) - header_end} bytes, expected {expected}",
            offset=header_end)
    arr = (np.frombuffer(data, dtype="<f4", count=count * dim, offset=header_end)
           .reshape(count, dim).astype(np.float32))
    try:
        return FeatureSet(data=arr, source=tag)
    except ShapeError as exc:
        raise FormatError(str(exc), offset=header_end) from exc
