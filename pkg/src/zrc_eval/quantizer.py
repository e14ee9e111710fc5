"""k-means training on pooled feature frames and utterance discretization.

Lloyd's algorithm with seeded k-means++ initialization. Clustering uses
squared Euclidean distance; determinism is part of the contract: the same
(frames, K, seed, max_iter, tol) always produces a bit-identical codebook.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, ValidationError
from .types import FeatureSequence, UnitSequence

_CODEBOOK_MAGIC = b"ZRCK"
_CODEBOOK_VERSION = 1
_CODEBOOK_HEADER = struct.Struct("<4sIIIf")

DEFAULT_CLUSTERS = 50


@dataclass
class Codebook:
    """k-means centroids plus the training metadata needed to reproduce them."""

    centroids: np.ndarray  # K x D, float64
    frame_rate: float = 100.0
    seed: int = 0
    n_iter: int = 0
    inertia: float = 0.0
    inertia_trace: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        self.centroids = np.asarray(self.centroids, dtype=np.float64)
        if self.centroids.ndim != 2:
            raise ValidationError("centroids must be a K x D matrix")
        if not np.isfinite(self.centroids).all():
            raise ValidationError("non-finite centroid")
        uniq = {tuple(row) for row in self.centroids}
        if len(uniq) != self.centroids.shape[0]:
            raise ValidationError("duplicate centroids in codebook")

    @property
    def n_clusters(self) -> int:
        return self.centroids.shape[0]

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]


def _squared_distances(frames: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Exact per-pair squared Euclidean distances (chunk-friendly sizes only)."""
    diff = frames[:, None, :] - centroids[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def _assign(frames: np.ndarray, centroids: np.ndarray, chunk: int = 2048):
    """Labels and squared distance to the nearest centroid, ties to lowest index."""
    n = frames.shape[0]
    labels = np.empty(n, dtype=np.int64)
    dists = np.empty(n, dtype=np.float64)
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        d = _squared_distances(frames[start:stop], centroids)
        labels[start:stop] = np.argmin(d, axis=1)
        dists[start:stop] = d[np.arange(stop - start), labels[start:stop]]
    return labels, dists


def _kmeans_pp(frames: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Seeded k-means++ initialization."""
    n = frames.shape[0]
    centroids = np.empty((k, frames.shape[1]), dtype=np.float64)
    first = int(rng.integers(n))
    centroids[0] = frames[first]
    d2 = np.sum((frames - centroids[0]) ** 2, axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = int(rng.choice(n, p=d2 / total))
        else:
            idx = int(rng.integers(n))
        centroids[i] = frames[idx]
        d2 = np.minimum(d2, np.sum((frames - centroids[i]) ** 2, axis=1))
    return centroids


def _reservoir_subsample(frames: np.ndarray, size: int,
                         rng: np.random.Generator) -> np.ndarray:
    """Reservoir sampling (algorithm R) over the frame rows."""
    reservoir = np.arange(size)
    for i in range(size, frames.shape[0]):
        j = int(rng.integers(i + 1))
        if j < size:
            reservoir[j] = i
    return frames[reservoir]


def kmeans_fit(frames, n_clusters: int, seed: int = 0, max_iter: int = 100,
               tol: float = 1e-6, frame_rate: float = 100.0,
               subsample: int | None = None) -> Codebook:
    """Fit a codebook with Lloyd's algorithm.

    Stops when the relative inertia improvement drops below ``tol`` or
    after ``max_iter`` assignment rounds. Empty clusters are re-seeded to
    the point currently farthest from its own centroid. ``subsample``
    caps the number of training frames via seeded reservoir sampling.
    """
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2:
        raise ValidationError("frames must be an N x D matrix")
    if not np.isfinite(frames).all():
        raise ValidationError("non-finite value in training frames")
    if n_clusters < 1:
        raise ValidationError(f"need at least one cluster, got {n_clusters}")
    if max_iter < 1:
        raise ValidationError(f"max_iter must be positive, got {max_iter}")
    if tol < 0:
        raise ValidationError(f"tol must be non-negative, got {tol}")
    rng = np.random.default_rng(seed)
    if subsample is not None and frames.shape[0] > subsample:
        frames = _reservoir_subsample(frames, subsample, rng)
    if frames.shape[0] < n_clusters:
        raise ValidationError(
            f"need at least {n_clusters} frames, got {frames.shape[0]}")

    centroids = _kmeans_pp(frames, n_clusters, rng)
    prev_inertia = None
    prev_centroids = centroids
    trace: list[float] = []
    n_iter = 0
    for _ in range(max_iter):
        labels, dists = _assign(frames, centroids)

        # re-seed empty clusters to the worst-fit point, in index order;
        # stealing a cluster's only point can empty it, hence the loop cap
        counts = np.bincount(labels, minlength=n_clusters)
        for _ in range(n_clusters):
            empty = np.flatnonzero(counts == 0)
            if empty.size == 0:
                break
            k = int(empty[0])
            far = int(np.argmax(dists))
            centroids[k] = frames[far]
            labels[far] = k
            dists[far] = 0.0
            counts = np.bincount(labels, minlength=n_clusters)
        if (counts == 0).any():
            raise ValidationError(
                "cannot fill empty clusters: fewer distinct frames than clusters")

        inertia = float(dists.sum())
        if prev_inertia is not None and inertia > prev_inertia:
            # rounding noise at convergence; keep the previous, better state
            centroids = prev_centroids
            break
        trace.append(inertia)
        n_iter += 1
        improvement = 1.0 if prev_inertia is None else (
            0.0 if prev_inertia == 0.0 else (prev_inertia - inertia) / prev_inertia)
        prev_inertia = inertia
        prev_centroids = centroids.copy()
        if improvement < tol or inertia == 0.0:
            break
        sums = np.zeros_like(centroids)
        np.add.at(sums, labels, frames)
        centroids = sums / counts[:, None]

    return Codebook(
        centroids=prev_centroids,
        frame_rate=frame_rate,
        seed=seed,
        n_iter=n_iter,
        inertia=prev_inertia if prev_inertia is not None else 0.0,
        inertia_trace=trace,
    )


def quantize(codebook: Codebook, fs: FeatureSequence) -> UnitSequence:
    """Assign each frame to its nearest centroid, ties to the lowest index."""
    if fs.dim != codebook.dim:
        raise ValidationError(
            f"{fs.utt_id}: feature dim {fs.dim} != codebook dim {codebook.dim}")
    labels, _ = _assign(fs.frames, codebook.centroids)
    return UnitSequence(fs.utt_id, labels.tolist())


# ---------------------------------------------------------------------------
# codebook file format
# ---------------------------------------------------------------------------

def write_codebook(codebook: Codebook, path) -> None:
    """Binary codebook: ZRCK magic, sizes, f32 centroids, trailing seed."""
    k, d = codebook.centroids.shape
    with open(path, "wb") as fh:
        fh.write(_CODEBOOK_HEADER.pack(
            _CODEBOOK_MAGIC, _CODEBOOK_VERSION, k, d, codebook.frame_rate))
        fh.write(np.ascontiguousarray(codebook.centroids, dtype="<f4").tobytes())
        fh.write(struct.pack("<Q", codebook.seed))


def read_codebook(path) -> Codebook:
    blob = Path(path).read_bytes()
    if len(blob) < _CODEBOOK_HEADER.size:
        raise FormatError(f"{path}: truncated codebook header")
    magic, version, k, d, rate = _CODEBOOK_HEADER.unpack_from(blob)
    if magic != _CODEBOOK_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {_CODEBOOK_MAGIC!r}")
    if version != _CODEBOOK_VERSION:
        raise FormatError(f"{path}: unsupported codebook version {version}")
    body = blob[_CODEBOOK_HEADER.size:]
    expected = k * d * 4 + 8
    if len(body) != expected:
        raise FormatError(
            f"{path}: expected {expected} bytes after header, got {len(body)}")
    centroids = np.frombuffer(body[:-8], dtype="<f4").reshape(k, d).astype(np.float64)
    (seed,) = struct.unpack("<Q", body[-8:])
    return Codebook(centroids=centroids, frame_rate=rate, seed=seed)
