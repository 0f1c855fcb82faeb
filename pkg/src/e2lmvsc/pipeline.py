"""Training orchestration: pretraining, fine-tuning, evaluation and run outputs."""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import struct
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dataio
from .cluster import ClusterMetrics, PartitionLabels, evaluate_labels, pseudo_labels, spectral_cluster
from .errors import InputError, NonFiniteLoss, NotPositiveDefinite, NumericalError
from .losses import LossBreakdown, LossWeights, loss_ortho, loss_recon, loss_total
from .model import E2LMVSCModel, forward, forward_autoencoder, inference_representation, materialize_affinity
from .numcore.optim import Adam
from .numcore.rng import RngStream

log = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"E2LMVSC\x00"
CHECKPOINT_VERSION = 1
AFFINITY_EXPORT_MAX_N = 20000

NOISE_STREAM = 2
CLUSTER_STREAM = 3


@dataclass
class TrainConfig:
    d: int = 20
    hidden: int = 200
    lr_pretrain: float = 1e-3
    lr_finetune: float = 1e-4
    epochs_pretrain: int = 1000
    epochs_finetune: int = 300
    weights: LossWeights = field(default_factory=LossWeights)
    seed: int = 0
    eval_every: int = 10
    affinity_block: int = 256
    kmeans_restarts: int = 10
    kmeans_max_iter: int = 300
    kmeans_tol: float = 1e-6
    early_stop_tol: float = 1e-7
    early_stop_window: int = 20

    def __post_init__(self):
        if isinstance(self.weights, dict):
            self.weights = LossWeights(**self.weights)
        counts = ("d", "hidden", "epochs_pretrain", "epochs_finetune", "eval_every",
                  "affinity_block", "kmeans_restarts", "kmeans_max_iter", "early_stop_window")
        for name in counts:
            if int(getattr(self, name)) < 1:
                raise InputError(f"{name} must be at least 1")
        if self.lr_pretrain <= 0 or self.lr_finetune <= 0:
            raise InputError("learning rates must be positive")

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "TrainConfig":
        raw = dict(raw)
        weights = dict(raw.pop("weights", {}) or {})
        for key in ("lambda1", "lambda2", "lambda3", "lambda4", "epsilon_sq"):
            if key in raw:
                weights[key] = raw.pop(key)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise InputError(f"unknown config keys: {sorted(unknown)}")
        return cls(weights=LossWeights(**weights), **raw)

    @classmethod
    def from_json(cls, path) -> "TrainConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def with_overrides(self, **changes) -> "TrainConfig":
        changes = {k: v for k, v in changes.items() if v is not None}
        return dataclasses.replace(self, **changes)


class ModelState:
    """Model parameters plus the training noise stream and epoch counters."""

    def __init__(self, model: E2LMVSCModel, seed: int):
        self.model = model
        self.seed = int(seed)
        self.noise_rng = RngStream(seed, NOISE_STREAM)
        self.pretrain_epochs = 0
        self.finetune_epochs = 0

    @classmethod
    def initialize(cls, ds: dataio.MultiViewDataset, cfg: TrainConfig) -> "ModelState":
        model = E2LMVSCModel(ds.dims, ds.n, ds.K, d=cfg.d, hidden=cfg.hidden, seed=cfg.seed)
        return cls(model, cfg.seed)

    def named_params(self):
        return self.model.named_params()

    # -- checkpoint container --------------------------------------------------
    # magic | u32 version | u64 header length | JSON header | raw little-endian f64 tensors

    def to_bytes(self) -> bytes:
        m = self.model
        entries, blobs = [], []
        for p in m.params():
            entries.append({"name": p.name, "shape": list(p.shape), "step": p.step_count})
            for arr in (p.value, p.adam_m, p.adam_v):
                blobs.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        header = {
            "dims": m.dims, "n": m.n, "K": m.K, "d": m.d, "hidden": m.hidden,
            "seed": self.seed,
            "pretrain_epochs": self.pretrain_epochs,
            "finetune_epochs": self.finetune_epochs,
            "rng": self.noise_rng.get_state(),
            "params": entries,
        }
        head = json.dumps(header, sort_keys=True).encode()
        return b"".join([CHECKPOINT_MAGIC, struct.pack("<IQ", CHECKPOINT_VERSION, len(head)), head] + blobs)

    @classmethod
    def from_bytes(cls, data: bytes) -> "ModelState":
        if data[:8] != CHECKPOINT_MAGIC:
            raise InputError("not a checkpoint file")
        version, hlen = struct.unpack("<IQ", data[8:20])
        if version != CHECKPOINT_VERSION:
            raise InputError(f"unsupported checkpoint version {version}")
        header = json.loads(data[20 : 20 + hlen])
        model = E2LMVSCModel(header["dims"], header["n"], header["K"], header["d"], header["hidden"], header["seed"])
        state = cls(model, header["seed"])
        state.pretrain_epochs = header["pretrain_epochs"]
        state.finetune_epochs = header["finetune_epochs"]
        state.noise_rng = RngStream.from_state(header["rng"])
        params = {p.name: p for p in model.params()}
        offset = 20 + hlen
        for entry in header["params"]:
            p = params[entry["name"]]
            if list(p.shape) != entry["shape"]:
                raise InputError(f"checkpoint shape mismatch for {p.name}")
            size = int(np.prod(entry["shape"])) * 8
            for target in (p.value, p.adam_m, p.adam_v):
                target[...] = np.frombuffer(data, dtype="<f8", count=size // 8, offset=offset).reshape(p.shape)
                offset += size
            p.step_count = entry["step"]
        return state

    def save(self, path):
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "ModelState":
        return cls.from_bytes(Path(path).read_bytes())


@dataclass
class RunReport:
    config: dict
    seed: int
    pretrain_history: list = field(default_factory=list)
    history: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    final_metrics: ClusterMetrics | None = None
    partial: bool = False
    notes: list = field(default_factory=list)

    def record(self, epoch, breakdown: LossBreakdown):
        if self.history and epoch <= self.history[-1]["epoch"]:
            raise ValueError("history must be strictly ordered by epoch")
        self.history.append({"epoch": epoch, **breakdown.as_dict()})

    def snapshot_at(self, epoch):
        for e, metrics in self.snapshots:
            if e == epoch:
                return metrics
        return None

    def as_dict(self):
        return {
            "config": self.config,
            "seed": self.seed,
            "pretrain_history": self.pretrain_history,
            "history": self.history,
            "snapshots": [{"epoch": e, **(m.as_dict() if m else {})} for e, m in self.snapshots],
            "timings": self.timings,
            "final_metrics": self.final_metrics.as_dict() if self.final_metrics else None,
            "partial": self.partial,
            "notes": self.notes,
        }


def _converged(losses, window, tol):
    if len(losses) <= window:
        return False
    old, new = losses[-1 - window], losses[-1]
    return abs(new - old) <= tol * max(abs(old), 1e-300)


def _snapshot(state: ModelState):
    params = [(p.value.copy(), p.adam_m.copy(), p.adam_v.copy(), p.step_count) for p in state.model.params()]
    return params, state.noise_rng.get_state(), state.pretrain_epochs, state.finetune_epochs


def _restore(state: ModelState, snap):
    params, rng_state, state.pretrain_epochs, state.finetune_epochs = snap
    for p, (value, m, v, step) in zip(state.model.params(), params):
        p.value[...] = value
        p.adam_m[...] = m
        p.adam_v[...] = v
        p.step_count = step
    state.noise_rng = RngStream.from_state(rng_state)


def _abort(state: ModelState, last_good, stage, epoch, report=None):
    """Roll back to the last state whose loss was finite and raise NonFiniteLoss."""
    if last_good is not None:
        _restore(state, last_good)
    if report is not None:
        report.partial = True
        report.notes.append(f"non-finite loss at {stage} epoch {epoch}")
    raise NonFiniteLoss(f"{stage} loss became non-finite at epoch {epoch}", epoch=epoch, checkpoint=state.to_bytes())


def pretrain(ds, cfg: TrainConfig, state: ModelState | None = None, report: RunReport | None = None) -> ModelState:
    """Full-batch Adam on reconstruction + orthogonality over encoders, decoders and C."""
    state = state or ModelState.initialize(ds, cfg)
    params = state.model.autoencoder_params()
    for p in params:
        p.reset_optimizer()
    opt = Adam(params, cfg.lr_pretrain)
    losses = []
    last_good = None
    for epoch in range(1, cfg.epochs_pretrain + 1):
        snap = _snapshot(state)
        C, D_all, R_all, Xhat = forward_autoencoder(state.model, ds.views)
        recon = loss_recon(ds.views, Xhat)
        ortho = loss_ortho(C, D_all, R_all)
        total = recon + ortho
        value = float(total)
        if not np.isfinite(value):
            _abort(state, last_good, "pretraining", epoch, report)
        last_good = snap
        opt.zero_grad()
        total.backward()
        opt.step()
        state.pretrain_epochs += 1
        losses.append(value)
        if report is not None:
            report.pretrain_history.append({"epoch": epoch, "aes": float(recon), "ortho": float(ortho), "total": value})
        if _converged(losses, cfg.early_stop_window, cfg.early_stop_tol):
            log.info("pretraining converged at epoch %d", epoch)
            break
    return state


def evaluate(S, K, truth=None, cfg: TrainConfig | None = None, seed=None):
    """Spectral clustering of S; metrics too when ground truth is given.

    Returns ``(PartitionLabels, ClusterMetrics | None)``.
    """
    cfg = cfg or TrainConfig()
    rng = RngStream(cfg.seed if seed is None else seed, CLUSTER_STREAM)
    part = spectral_cluster(S, K, rng, restarts=cfg.kmeans_restarts, max_iter=cfg.kmeans_max_iter, tol=cfg.kmeans_tol)
    metrics = evaluate_labels(part.labels, truth) if truth is not None else None
    return part, metrics


def affinity_of(state: ModelState, ds, cfg: TrainConfig):
    U = inference_representation(state.model, ds.views)
    return materialize_affinity(U, state.model.relation.theta, block=cfg.affinity_block)


def finetune(ds, state: ModelState, cfg: TrainConfig, report: RunReport | None = None):
    """Joint training of every module; returns ``(state, S, report)``.

    Pseudo-labels for the coding-rate term are refreshed from Q every epoch
    and carry no gradient. Evaluation snapshots use the posterior mean.
    """
    report = report or RunReport(config=cfg.to_dict(), seed=cfg.seed)
    model = state.model
    params = model.params()
    for p in params:
        p.reset_optimizer()
    opt = Adam(params, cfg.lr_finetune)
    losses = []
    last = 0
    last_good = None
    for epoch in range(1, cfg.epochs_finetune + 1):
        snap = _snapshot(state)
        bundle = forward(model, ds.views, state.noise_rng, sample=True)
        labels = pseudo_labels(bundle.Q.data).labels
        try:
            total, breakdown = loss_total(
                bundle, ds.views, labels, ds.K, model.relation.theta_tensor(), cfg.weights,
                rel_block=cfg.affinity_block,
            )
        except NotPositiveDefinite:
            # a coding-rate matrix built from overflowed features
            breakdown = None
        if breakdown is None or not np.isfinite(breakdown.total):
            _abort(state, last_good, "fine-tuning", epoch, report)
        last_good = snap
        opt.zero_grad()
        total.backward()
        opt.step()
        state.finetune_epochs += 1
        report.record(epoch, breakdown)
        losses.append(breakdown.total)
        last = epoch
        done = _converged(losses, cfg.early_stop_window, cfg.early_stop_tol)
        if ds.labels is not None and (epoch == 1 or epoch % cfg.eval_every == 0 or done or epoch == cfg.epochs_finetune):
            _, metrics = evaluate(affinity_of(state, ds, cfg), ds.K, ds.labels, cfg)
            report.snapshots.append((epoch, metrics))
            log.info("epoch %d total %.6g acc %.4f nmi %.4f", epoch, breakdown.total, metrics.acc, metrics.nmi)
        if done:
            log.info("fine-tuning converged at epoch %d", epoch)
            break
    S = affinity_of(state, ds, cfg)
    report.timings.setdefault("finetune_epochs", last)
    return state, S, report


def _write_history(path, report: RunReport):
    metric_keys = ("acc", "nmi", "pur", "fscore")
    with_metrics = bool(report.snapshots)
    header = ["epoch", *LossBreakdown.FIELDS] + (list(metric_keys) if with_metrics else [])
    snaps = dict(report.snapshots)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in report.history:
            out = [row["epoch"]] + [repr(float(row[k])) for k in LossBreakdown.FIELDS]
            if with_metrics:
                m = snaps.get(row["epoch"])
                out += [f"{getattr(m, k):.6f}" if m else "" for k in metric_keys]
            w.writerow(out)


def _write_pretrain_history(path, report: RunReport):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", *LossBreakdown.FIELDS])
        for row in report.pretrain_history:
            w.writerow([row["epoch"], repr(row["aes"]), repr(row["ortho"]), "0.0", "0.0", "0.0", "0.0", repr(row["total"])])


def write_metrics(metrics: ClusterMetrics, path):
    with open(path, "w") as fh:
        json.dump(metrics.as_dict(6), fh, indent=2)
        fh.write("\n")


def run_experiment(data_dir, cfg: TrainConfig, out_dir, pretrain_only=False, export_affinity=None) -> RunReport:
    """Load, normalize, pretrain, fine-tune, cluster and write every output file."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ds = dataio.normalize_minmax(dataio.load_dataset(data_dir))
    report = RunReport(config=cfg.to_dict(), seed=cfg.seed)
    t0 = time.perf_counter()
    try:
        state = pretrain(ds, cfg, report=report)
        report.timings["pretrain_seconds"] = time.perf_counter() - t0
        if pretrain_only:
            state.save(out / "checkpoint.bin")
            _write_pretrain_history(out / "history.csv", report)
            _write_report(out / "report.json", report)
            return report
        t1 = time.perf_counter()
        state, S, report = finetune(ds, state, cfg, report)
        report.timings["finetune_seconds"] = time.perf_counter() - t1
    except NumericalError as exc:
        if not report.partial:
            report.partial = True
            report.notes.append(str(exc))
        if getattr(exc, "checkpoint", None) is not None:
            (out / "checkpoint.bin").write_bytes(exc.checkpoint)
        _write_report(out / "report.json", report)
        raise

    t2 = time.perf_counter()
    part, metrics = evaluate(S, ds.K, ds.labels, cfg)
    report.timings["cluster_seconds"] = time.perf_counter() - t2
    report.timings["total_seconds"] = time.perf_counter() - t0
    report.final_metrics = metrics

    dataio.write_labels(part.labels, out / "labels_pred.csv")
    if metrics is not None:
        write_metrics(metrics, out / "metrics.json")
    _write_history(out / "history.csv", report)
    state.save(out / "checkpoint.bin")
    U = inference_representation(state.model, ds.views)
    dataio.export_matrix(U.T, out / "embeddings_u.csv", "csv")
    if export_affinity:
        if ds.n > AFFINITY_EXPORT_MAX_N:
            report.notes.append(f"affinity export requested for n={ds.n}; written anyway")
        dataio.export_matrix(S, out / "affinity.f64bin", "f64bin")
    _write_report(out / "report.json", report)
    return report


def _write_report(path, report: RunReport):
    with open(path, "w") as fh:
        json.dump(report.as_dict(), fh, indent=2)
        fh.write("\n")


__all__ = [
    "ModelState",
    "PartitionLabels",
    "RunReport",
    "TrainConfig",
    "evaluate",
    "finetune",
    "pretrain",
    "run_experiment",
]
