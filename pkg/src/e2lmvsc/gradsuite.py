"""Gradient checks of every loss on tiny random instances."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataio import SynthSpec, synth_generate
from .losses import (
    LossWeights,
    loss_dis,
    loss_ib,
    loss_ortho,
    loss_recon,
    loss_rel,
    loss_ss,
    loss_total,
)
from .model import E2LMVSCModel, cluster_assign, forward, forward_autoencoder, global_private_reps, ib_forward
from .numcore.gradcheck import grad_check
from .numcore.rng import RngStream

LOSS_NAMES = ("loss_recon", "loss_ortho", "loss_ss", "loss_ib", "loss_dis", "loss_rel", "loss_total")


@dataclass
class TinyInstance:
    model: E2LMVSCModel
    views: list
    labels: np.ndarray
    noise: np.ndarray
    K: int


def tiny_instance(seed, n=12, V=2, d=3, K=3, hidden=6) -> TinyInstance:
    ds = synth_generate(SynthSpec(n=n, V=V, K=K, shared_dim=2, private_dim=1, noise_dim=1, noise_scale=0.1, seed=seed))
    model = E2LMVSCModel(ds.dims, n, K, d=d, hidden=hidden, seed=seed)
    rng = RngStream(seed, 7)
    # spread C and the threshold so no coefficient sits near a kink of the soft threshold
    model.C.value[...] = rng.normal(model.C.shape, scale=0.5)
    model.relation.theta_raw.value[...] = 0.3
    # moderate |u| keeps the self-expression term O(10), so central differences
    # are not swamped by roundoff; sharper Q gives the assignment net real gradients
    # doubled encoder weights lift deep-layer gradients well clear of the
    # finite-difference roundoff floor, near 1e-11 absolute at h = 1e-5
    for enc in model.encoders:
        for p in enc.params():
            p.value *= 2.0
    model.ib.unified.mu.W.value *= 0.4
    model.ib.unified.log_var.b.value[...] = -2.0
    model.cluster_net.l2.W.value *= 4.0
    labels = np.arange(n) % K
    noise = rng.normal((d, n))
    return TinyInstance(model, ds.views, labels, noise, K)


def _encode(inst):
    C, D_all, R_all, Xhat = forward_autoencoder(inst.model, inst.views)
    return C, D_all, R_all, Xhat


def _unified(inst, C, D_all):
    return ib_forward(inst.model.ib, C, D_all, sample=True, noise=inst.noise)


def loss_closures(inst: TinyInstance, weights=LossWeights()):
    """Map each loss name to ``(closure, params it depends on)``."""
    m = inst.model
    enc = [p for e in m.encoders for p in e.params()]
    dec = [p for d in m.decoders for p in d.params()]

    def recon():
        _, _, _, Xhat = _encode(inst)
        return loss_recon(inst.views, Xhat)

    def ortho():
        C, D_all, R_all, _ = _encode(inst)
        return loss_ortho(C, D_all, R_all)

    def ss():
        C, D_all, R_all, _ = _encode(inst)
        D_glob, R_glob = global_private_reps(D_all, R_all)
        net = m.cluster_net
        return loss_ss(cluster_assign(net, C), cluster_assign(net, D_glob), cluster_assign(net, R_glob))

    def ib():
        C, D_all, _, _ = _encode(inst)
        U, mu, lv, pred_d, pred_c = _unified(inst, C, D_all)
        return loss_ib(mu, lv, U, pred_d, pred_c, m.V)

    def dis():
        C, D_all, _, _ = _encode(inst)
        U = _unified(inst, C, D_all)[0]
        return loss_dis(U, inst.labels, inst.K, weights.epsilon_sq)

    def rel():
        C, D_all, _, _ = _encode(inst)
        U = _unified(inst, C, D_all)[0]
        return loss_rel(U, m.relation.theta_tensor(), block=5)

    def total():
        bundle = forward(m, inst.views, sample=True, noise=inst.noise)
        out, _ = loss_total(bundle, inst.views, inst.labels, inst.K, m.relation.theta_tensor(), weights, rel_block=5)
        return out

    base = enc + [m.C]
    return {
        "loss_recon": (recon, base + dec),
        "loss_ortho": (ortho, base),
        "loss_ss": (ss, base + m.cluster_net.params()),
        "loss_ib": (ib, base + m.ib.params()),
        "loss_dis": (dis, base + m.ib.unified.params()),
        "loss_rel": (rel, base + m.ib.unified.params() + m.relation.params()),
        "loss_total": (total, m.params()),
    }


def run_suite(seeds=range(10), tol=1e-4, names=LOSS_NAMES, n_coords=25):
    """Returns ``{loss name: [GradReport per seed]}``."""
    results = {name: [] for name in names}
    for seed in seeds:
        inst = tiny_instance(seed)
        closures = loss_closures(inst)
        for name in names:
            fn, params = closures[name]
            results[name].append(grad_check(fn, params, RngStream(seed, 11), tol=tol, n_coords=n_coords))
    return results


