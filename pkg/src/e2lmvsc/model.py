"""Network components and forward computations.

All representations are feature-major: a ``d x n`` matrix holds one sample
per column. Weight matrices map columns, ``y = W x + b``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatch
from .numcore import tensor as T
from .numcore.linalg import log_softplus_inverse
from .numcore.optim import Param
from .numcore.rng import RngStream

LOG_VAR_CLAMP = 10.0
THETA_INIT = 0.1
C_INIT_STD = 0.01


def _glorot(rng: RngStream, fan_out, fan_in):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, (fan_out, fan_in))


class Linear:
    def __init__(self, fan_in, fan_out, rng: RngStream, name):
        self.W = Param(_glorot(rng, fan_out, fan_in), f"{name}.W")
        self.b = Param(np.zeros((fan_out, 1)), f"{name}.b")

    @property
    def fan_in(self):
        return self.W.shape[1]

    def params(self):
        return [self.W, self.b]

    def __call__(self, x):
        x = T.as_tensor(x)
        if x.shape[0] != self.fan_in:
            raise ShapeMismatch(f"{self.W.name}: expected {self.fan_in} input rows, got {x.shape[0]}")
        return T.affine(self.W.leaf(), x, self.b.leaf())


class ViewEncoder:
    """d_v -> hidden backbone with sigmoid, plus complementary and superfluous heads."""

    def __init__(self, d_v, hidden, d, rng, name="enc"):
        self.backbone = Linear(d_v, hidden, rng, f"{name}.backbone")
        self.s_head = Linear(hidden, d, rng, f"{name}.s_head")
        self.c_head = Linear(hidden, d, rng, f"{name}.c_head")

    def params(self):
        return self.backbone.params() + self.s_head.params() + self.c_head.params()


class ViewDecoder:
    def __init__(self, d, hidden, d_v, rng, name="dec"):
        self.l1 = Linear(3 * d, hidden, rng, f"{name}.l1")
        self.l2 = Linear(hidden, d_v, rng, f"{name}.l2")

    @property
    def input_dim(self):
        return self.l1.fan_in

    def params(self):
        return self.l1.params() + self.l2.params()


class ClusterAssignNet:
    """Two-layer perceptron d -> hidden -> K, shared by every representation."""

    def __init__(self, d, hidden, K, rng, name="clu"):
        self.l1 = Linear(d, hidden, rng, f"{name}.l1")
        self.l2 = Linear(hidden, K, rng, f"{name}.l2")

    def params(self):
        return self.l1.params() + self.l2.params()


class GaussianHead:
    """Sigmoid hidden layer followed by mean and log-variance heads."""

    def __init__(self, fan_in, hidden, d, rng, name):
        self.body = Linear(fan_in, hidden, rng, f"{name}.body")
        self.mu = Linear(hidden, d, rng, f"{name}.mu")
        self.log_var = Linear(hidden, d, rng, f"{name}.log_var")

    def params(self):
        return self.body.params() + self.mu.params() + self.log_var.params()

    def __call__(self, x):
        h = T.sigmoid(self.body(x))
        return self.mu(h), T.clamp(self.log_var(h), -LOG_VAR_CLAMP, LOG_VAR_CLAMP)


class IBHeads:
    def __init__(self, V, d, hidden, rng, name="ib"):
        self.V = V
        self.unified = GaussianHead((V + 1) * d, hidden, d, rng, f"{name}.unified")
        self.view_pred = [GaussianHead(d, hidden, d, rng, f"{name}.view{v}") for v in range(V)]
        self.cons_pred = GaussianHead(d, hidden, d, rng, f"{name}.cons")

    def params(self):
        out = self.unified.params()
        for head in self.view_pred:
            out += head.params()
        return out + self.cons_pred.params()


class RelationMetric:
    """Soft-thresholded inner products; one trainable scalar for any n."""

    def __init__(self, theta=THETA_INIT):
        self.theta_raw = Param(np.array([[log_softplus_inverse(theta)]]), "rel.theta_raw")

    def params(self):
        return [self.theta_raw]

    @property
    def theta(self) -> float:
        return float(np.logaddexp(0.0, self.theta_raw.value[0, 0]))

    def theta_tensor(self):
        return T.softplus(self.theta_raw.leaf())


@dataclass
class LatentBundle:
    C: T.Tensor
    D: list
    R: list
    Z: list
    Xhat: list
    Q: T.Tensor
    Q_D: T.Tensor
    Q_R: T.Tensor
    mu_u: T.Tensor
    log_var_u: T.Tensor
    U: T.Tensor
    pred_d: list
    pred_c: tuple


class E2LMVSCModel:
    """Every trainable parameter of the pipeline.

    Parameters are created in a fixed order from one initialization stream,
    so ``(dims, n, K, d, hidden, seed)`` determines the initial state.
    """

    def __init__(self, dims, n, K, d=20, hidden=200, seed=0):
        self.dims = [int(x) for x in dims]
        self.n, self.K, self.d, self.hidden = int(n), int(K), int(d), int(hidden)
        self.V = len(self.dims)
        init = RngStream(seed, 1)
        self.encoders = [ViewEncoder(dv, hidden, d, init, f"enc{v}") for v, dv in enumerate(self.dims)]
        self.decoders = [ViewDecoder(d, hidden, dv, init, f"dec{v}") for v, dv in enumerate(self.dims)]
        self.C = Param(init.normal((d, n), scale=C_INIT_STD), "C")
        self.cluster_net = ClusterAssignNet(d, hidden, K, init)
        self.ib = IBHeads(self.V, d, hidden, init)
        self.relation = RelationMetric()

    def autoencoder_params(self):
        out = []
        for enc, dec in zip(self.encoders, self.decoders):
            out += enc.params() + dec.params()
        return out + [self.C]

    def params(self):
        return (
            self.autoencoder_params()
            + self.cluster_net.params()
            + self.ib.params()
            + self.relation.params()
        )

    def named_params(self):
        return [(p.name, p) for p in self.params()]

    def param_count(self):
        return sum(p.size for p in self.params())

    def zero_grad(self):
        for p in self.params():
            p.zero_grad()


# -- forward operations ------------------------------------------------------------

def encode_view(enc: ViewEncoder, X_v):
    """Returns ``(D_v, R_v)``: complementary and superfluous representations."""
    h = T.sigmoid(enc.backbone(X_v))
    return T.sigmoid(enc.c_head(h)), T.sigmoid(enc.s_head(h))


def decode_view(dec: ViewDecoder, C, D_v, R_v):
    C, D_v, R_v = T.as_tensor(C), T.as_tensor(D_v), T.as_tensor(R_v)
    if not C.shape == D_v.shape == R_v.shape:
        raise ShapeMismatch(f"decoder inputs differ in shape: {C.shape}, {D_v.shape}, {R_v.shape}")
    return decode_latent(dec, T.vstack([C, D_v, R_v]))


def decode_latent(dec: ViewDecoder, Z):
    """Map an intact 3d x n embedding back to view space."""
    return T.sigmoid(dec.l2(T.sigmoid(dec.l1(Z))))


def cluster_assign(net: ClusterAssignNet, rep):
    """n x K row-stochastic assignment matrix for a d x n representation."""
    logits = net.l2(T.sigmoid(net.l1(rep)))
    return T.softmax_rows(T.transpose(logits))


def global_private_reps(D_all, R_all):
    """Per-sample mean over views of the complementary and superfluous codes."""
    V = len(D_all)
    D_glob = D_all[0]
    R_glob = R_all[0]
    for v in range(1, V):
        D_glob = D_glob + D_all[v]
        R_glob = R_glob + R_all[v]
    if V > 1:
        D_glob = D_glob * (1.0 / V)
        R_glob = R_glob * (1.0 / V)
    return D_glob, R_glob


def ib_forward(heads: IBHeads, C, D_all, rng=None, sample=True, noise=None):
    """Unified Gaussian posterior over ``[c_i; d_i^1; ...; d_i^V]``.

    Returns ``(U, mu_u, log_var_u, pred_d, pred_c)``. With ``sample`` the
    output is ``mu + exp(log_var / 2) * eps``, where ``eps`` is ``noise``
    when given and a fresh standard-normal draw from ``rng`` otherwise.
    """
    C = T.as_tensor(C)
    mu_u, log_var_u = heads.unified(T.vstack([C] + list(D_all)))
    if sample:
        if noise is None:
            noise = rng.normal(mu_u.shape)
        U = mu_u + T.exp(log_var_u * 0.5) * np.asarray(noise, dtype=np.float64)
    else:
        U = mu_u
    pred_d = [head(D) for head, D in zip(heads.view_pred, D_all)]
    pred_c = heads.cons_pred(C)
    return U, mu_u, log_var_u, pred_d, pred_c


def forward(model: E2LMVSCModel, views, rng=None, sample=True, noise=None) -> LatentBundle:
    C = model.C.leaf()
    D_all, R_all, Z_all, Xhat = [], [], [], []
    for enc, dec, X in zip(model.encoders, model.decoders, views):
        D, R = encode_view(enc, X)
        Z = T.vstack([C, D, R])
        D_all.append(D)
        R_all.append(R)
        Z_all.append(Z)
        Xhat.append(decode_latent(dec, Z))
    D_glob, R_glob = global_private_reps(D_all, R_all)
    Q = cluster_assign(model.cluster_net, C)
    Q_D = cluster_assign(model.cluster_net, D_glob)
    Q_R = cluster_assign(model.cluster_net, R_glob)
    U, mu_u, log_var_u, pred_d, pred_c = ib_forward(model.ib, C, D_all, rng, sample, noise)
    return LatentBundle(C, D_all, R_all, Z_all, Xhat, Q, Q_D, Q_R, mu_u, log_var_u, U, pred_d, pred_c)


def forward_autoencoder(model: E2LMVSCModel, views):
    """Only the pieces the pretraining objective needs."""
    C = model.C.leaf()
    D_all, R_all, Xhat = [], [], []
    for enc, dec, X in zip(model.encoders, model.decoders, views):
        D, R = encode_view(enc, X)
        D_all.append(D)
        R_all.append(R)
        Xhat.append(decode_view(dec, C, D, R))
    return C, D_all, R_all, Xhat


def inference_representation(model: E2LMVSCModel, views):
    """Posterior mean U (d x n) as a plain array; no sampling."""
    C = model.C.leaf()
    D_all = [encode_view(enc, X)[0] for enc, X in zip(model.encoders, views)]
    mu_u, _ = model.ib.unified(T.vstack([C] + D_all))
    return mu_u.data.copy()


# -- self-expression ---------------------------------------------------------------

def relation_coefficient(u_i, u_j, theta) -> float:
    dot = float(np.dot(u_j, u_i))
    return float(np.sign(dot) * max(0.0, abs(dot) - theta))


def _gram_tile(U, I, J):
    # fixed summation order over features, so every tile split gives equal bits
    G = U[0, I, None] * U[0, None, J]
    for k in range(1, U.shape[0]):
        G += U[k, I, None] * U[k, None, J]
    return G


def materialize_affinity(U, theta, block=256, out=None):
    """Self-expressive matrix S with S_ij = soft_threshold(u_i . u_j, theta), S_ii = 0.

    Built from ``block x block`` tiles of the upper triangle and mirrored,
    so S is exactly symmetric and the transient memory beyond ``out`` is
    O(block^2).
    """
    U = np.asarray(U, dtype=np.float64)
    if block < 1:
        raise ValueError("block must be at least 1")
    d, n = U.shape
    if out is None:
        out = np.empty((n, n))
    elif out.shape != (n, n):
        raise ShapeMismatch(f"out must be {(n, n)}, got {out.shape}")
    for i0 in range(0, n, block):
        I = slice(i0, min(i0 + block, n))
        for j0 in range(i0, n, block):
            J = slice(j0, min(j0 + block, n))
            G = _gram_tile(U, I, J)
            mag = np.abs(G)
            mag -= theta
            np.maximum(mag, 0.0, out=mag)
            np.copysign(mag, G, out=mag)
            out[I, J] = mag
            if j0 != i0:
                out[J, I] = mag.T
    np.fill_diagonal(out, 0.0)
    return out
