"""Multi-view dataset format, normalization, synthetic data and matrix export.

On disk a dataset is a directory::

    meta.json    {"n", "k", "labels", "label_base", "views": [{"name", "dim", "file", "format"}]}
    <view file>  n x d_v, one sample per row (CSV or raw little-endian float64)
    labels.csv   one integer per line

In memory every view is stored feature-major (d_v x n, one column per sample).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import BadLabel, InputError, IoError, MissingFile, ShapeMismatch
from .numcore.rng import RngStream

FORMATS = ("csv", "f64bin")


@dataclass(frozen=True)
class MultiViewDataset:
    views: list
    n: int
    K: int
    labels: np.ndarray | None = None
    view_names: list = field(default_factory=list)

    def __post_init__(self):
        if not self.views:
            raise ShapeMismatch("a dataset needs at least one view")
        for v, X in enumerate(self.views):
            if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] != self.n:
                raise ShapeMismatch(f"view {v} has shape {X.shape}, expected (d_v, {self.n})")
            if not np.all(np.isfinite(X)):
                raise InputError(f"view {v} contains non-finite entries")
        if self.labels is not None:
            lab = np.asarray(self.labels)
            if lab.shape != (self.n,):
                raise ShapeMismatch(f"labels have shape {lab.shape}, expected ({self.n},)")
            if lab.size and (lab.min() < 0 or lab.max() >= self.K):
                raise BadLabel(f"labels must lie in [0, {self.K})")
        if not self.view_names:
            object.__setattr__(self, "view_names", [f"view{v}" for v in range(len(self.views))])

    @property
    def V(self) -> int:
        return len(self.views)

    @property
    def dims(self) -> list:
        return [X.shape[0] for X in self.views]


@dataclass(frozen=True)
class SynthSpec:
    n: int = 400
    V: int = 3
    K: int = 4
    shared_dim: int = 6
    private_dim: int = 3
    noise_dim: int = 4
    noise_scale: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if not self.n >= self.K >= 2:
            raise InputError("need n >= K >= 2")
        if min(self.shared_dim, self.private_dim, self.noise_dim) < 0:
            raise InputError("dimensions must be non-negative")
        if self.shared_dim + self.private_dim < 1:
            raise InputError("shared_dim + private_dim must be at least 1")
        if self.V < 1:
            raise InputError("need at least one view")


# -- matrices ------------------------------------------------------------------

def export_matrix(M, path, format="f64bin"):
    """Write ``M`` row-major; CSV uses 17 significant digits."""
    if not path:
        raise IoError("empty output path")
    if format not in FORMATS:
        raise ValueError(f"unknown format {format!r}")
    M = np.atleast_2d(np.asarray(M, dtype=np.float64))
    try:
        if format == "csv":
            np.savetxt(path, M, delimiter=",", fmt="%.17g")
        else:
            np.ascontiguousarray(M, dtype="<f8").tofile(path)
    except OSError as exc:
        raise IoError(str(exc)) from exc


def load_matrix(path, format="f64bin", cols=None):
    """Read a matrix written by :func:`export_matrix`.

    f64bin files carry no shape, so ``cols`` is required for them.
    """
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"missing file {path}")
    if format == "csv":
        M = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
        if cols is not None and M.size == 0:
            M = M.reshape(0, cols)
        return M
    if format != "f64bin":
        raise ValueError(f"unknown format {format!r}")
    if cols is None:
        raise ValueError("f64bin files need an explicit column count")
    flat = np.fromfile(path, dtype="<f8").astype(np.float64)
    if flat.size % cols:
        raise ShapeMismatch(f"{path}: {flat.size} values do not form rows of {cols}")
    return flat.reshape(-1, cols)


# -- datasets ------------------------------------------------------------------

def load_dataset(path) -> MultiViewDataset:
    root = Path(path)
    meta_path = root / "meta.json"
    if not meta_path.is_file():
        raise MissingFile(f"missing {meta_path}")
    with open(meta_path) as fh:
        meta = json.load(fh)
    n, K = int(meta["n"]), int(meta["k"])

    views, names = [], []
    for spec in meta["views"]:
        fmt = spec.get("format", "csv")
        dim = int(spec["dim"])
        M = load_matrix(root / spec["file"], fmt, cols=dim)
        if M.shape[0] != n:
            raise ShapeMismatch(f"view {spec['name']!r} has {M.shape[0]} samples, metadata says {n}")
        if M.shape[1] != dim:
            raise ShapeMismatch(f"view {spec['name']!r} has dimension {M.shape[1]}, metadata says {dim}")
        views.append(np.ascontiguousarray(M.T))
        names.append(spec["name"])

    labels = None
    if meta.get("labels", False):
        lab_path = root / "labels.csv"
        if not lab_path.is_file():
            raise MissingFile(f"missing {lab_path}")
        raw = np.loadtxt(lab_path, dtype=np.float64, ndmin=1)
        if raw.shape != (n,):
            raise ShapeMismatch(f"labels.csv has {raw.size} entries, metadata says {n}")
        if np.any(raw != np.round(raw)):
            raise BadLabel("labels must be integers")
        labels = raw.astype(np.int64) - int(meta.get("label_base", 0))
        if labels.min() < 0 or labels.max() >= K:
            raise BadLabel(f"label ids outside [0, {K})")
    return MultiViewDataset(views=views, n=n, K=K, labels=labels, view_names=names)


def save_dataset(ds: MultiViewDataset, path, format="f64bin"):
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    ext = "csv" if format == "csv" else "f64"
    views = []
    for name, X in zip(ds.view_names, ds.views):
        fname = f"{name}.{ext}"
        export_matrix(X.T, root / fname, format)
        views.append({"name": name, "dim": int(X.shape[0]), "file": fname, "format": format})
    meta = {
        "n": ds.n,
        "k": ds.K,
        "labels": ds.labels is not None,
        "label_base": 0,
        "views": views,
    }
    if ds.labels is not None:
        np.savetxt(root / "labels.csv", np.asarray(ds.labels, dtype=np.int64), fmt="%d")
    with open(root / "meta.json", "w") as fh:
        json.dump(meta, fh, indent=2)
    return root


def normalize_minmax(ds: MultiViewDataset) -> MultiViewDataset:
    """Rescale every feature of every view to [0, 1]; constant features become 0."""
    views = []
    for X in ds.views:
        lo = X.min(axis=1, keepdims=True)
        span = X.max(axis=1, keepdims=True) - lo
        safe = np.where(span > 0, span, 1.0)
        Y = np.where(span > 0, (X - lo) / safe, 0.0)
        views.append(np.clip(Y, 0.0, 1.0))
    return replace(ds, views=views)


def synth_generate(spec: SynthSpec) -> MultiViewDataset:
    """Draw a clustered multi-view dataset.

    Cluster centroids live in a shared latent space. Each sample gets its
    centroid plus ``noise_scale`` jitter as its shared code, and each view
    adds an independent private code. View ``v`` is a random linear map of
    ``[shared; private]`` with additive noise, followed by ``noise_dim``
    pure-noise features. The result is min-max normalized.
    """
    rng = RngStream(spec.seed, 0)
    labels = np.arange(spec.n) % spec.K
    labels = labels[rng.permutation(spec.n)]

    centroids = rng.normal((spec.shared_dim, spec.K), scale=1.0)
    shared = centroids[:, labels] + rng.normal((spec.shared_dim, spec.n), scale=spec.noise_scale)

    views = []
    for v in range(spec.V):
        vr = rng.substream(1 + v)
        private = vr.normal((spec.private_dim, spec.n), scale=0.3)
        latent = np.vstack([shared, private])
        out_dim = 2 * (spec.shared_dim + spec.private_dim)
        A = vr.normal((out_dim, latent.shape[0]), scale=1.0 / np.sqrt(latent.shape[0]))
        X = A @ latent + vr.normal((out_dim, spec.n), scale=spec.noise_scale)
        if spec.noise_dim:
            X = np.vstack([X, vr.normal((spec.noise_dim, spec.n), scale=spec.noise_scale)])
        views.append(X)
    ds = MultiViewDataset(views=views, n=spec.n, K=spec.K, labels=labels.astype(np.int64),
                          view_names=[f"view{v}" for v in range(spec.V)])
    return normalize_minmax(ds)


def write_labels(labels, path):
    try:
        np.savetxt(path, np.asarray(labels, dtype=np.int64), fmt="%d")
    except OSError as exc:
        raise IoError(str(exc)) from exc


def read_labels(path):
    if not os.path.isfile(path):
        raise MissingFile(f"missing {path}")
    return np.loadtxt(path, dtype=np.int64, ndmin=1)
