"""Loss terms and the weighted training objective.

Each loss takes graph tensors (plain arrays are accepted) and returns a
scalar :class:`~e2lmvsc.numcore.tensor.Tensor`; ``float(loss)`` gives the
value.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import BadLabel, ShapeMismatch
from .numcore import tensor as T
from .numcore.gaussian import kl_to_std_t, logpdf_t


@dataclass(frozen=True)
class LossWeights:
    lambda1: float = 1.0
    lambda2: float = 1.0
    lambda3: float = 1.0
    lambda4: float = 1.0
    epsilon_sq: float = 0.5

    def __post_init__(self):
        if min(self.lambda1, self.lambda2, self.lambda3, self.lambda4) < 0:
            raise ValueError("loss weights must be non-negative")
        if self.epsilon_sq <= 0:
            raise ValueError("epsilon_sq must be positive")


@dataclass(frozen=True)
class LossBreakdown:
    aes: float
    ortho: float
    ss: float
    ib: float
    dis: float
    rel: float
    total: float

    FIELDS = ("aes", "ortho", "ss", "ib", "dis", "rel", "total")

    def as_dict(self):
        return asdict(self)


def _same_shape(a, b, what):
    if a.shape != b.shape:
        raise ShapeMismatch(f"{what}: shapes {a.shape} and {b.shape} differ")


def loss_recon(X_all, Xhat_all):
    """Sum over views of the squared Frobenius reconstruction error."""
    if len(X_all) != len(Xhat_all):
        raise ShapeMismatch("need one reconstruction per view")
    total = None
    for X, Xh in zip(X_all, Xhat_all):
        X, Xh = T.as_tensor(X), T.as_tensor(Xh)
        _same_shape(X, Xh, "reconstruction")
        term = T.sum(T.square(X - Xh))
        total = term if total is None else total + term
    return total


def loss_ortho(C, D_all, R_all):
    """Mean over samples of squared per-column inner products between C, D^v, R^v."""
    C = T.as_tensor(C)
    n = C.shape[1]
    total = None
    for D, R in zip(D_all, R_all):
        D, R = T.as_tensor(D), T.as_tensor(R)
        cd = T.sum(C * D, axis=0)
        cr = T.sum(C * R, axis=0)
        dr = T.sum(D * R, axis=0)
        term = T.sum(T.square(cd)) + T.sum(T.square(cr)) + T.sum(T.square(dr))
        total = term if total is None else total + term
    return total * (1.0 / n)


def loss_ss(Q, Q_D, Q_R):
    Q, Q_D, Q_R = T.as_tensor(Q), T.as_tensor(Q_D), T.as_tensor(Q_R)
    _same_shape(Q, Q_D, "loss_ss")
    _same_shape(Q, Q_R, "loss_ss")
    return T.sum(T.square(Q - Q_D)) - T.sum(T.square(Q - Q_R))


def loss_ib(mu_u, log_var_u, U_sample, pred_d, pred_c, V):
    """Variational bottleneck estimate, averaged over samples.

    Compression: ``V`` times the KL of the unified posterior to N(0, I).
    Sufficiency: log-densities of the sampled U under every per-view
    predictor and under the consistent-code predictor.
    """
    mu_u, log_var_u, U = T.as_tensor(mu_u), T.as_tensor(log_var_u), T.as_tensor(U_sample)
    _same_shape(mu_u, log_var_u, "loss_ib posterior")
    _same_shape(mu_u, U, "loss_ib sample")
    n = U.shape[1]
    total = kl_to_std_t(mu_u, log_var_u) * float(V)
    for mu, lv in list(pred_d) + [pred_c]:
        mu, lv = T.as_tensor(mu), T.as_tensor(lv)
        _same_shape(mu, U, "loss_ib predictor")
        total = total - logpdf_t(U, mu, lv)
    return total * (1.0 / n)


def _rate_term(U, count, epsilon_sq):
    d = U.shape[0]
    alpha = d / (count * epsilon_sq)
    A = T.matmul(U, T.transpose(U)) * alpha + np.eye(d)
    return T.logdet_spd(A)


def coding_rate_global(U, epsilon_sq=0.5):
    """1/2 ln det(I + d/(n eps^2) U U^T)."""
    U = T.as_tensor(U)
    return _rate_term(U, U.shape[1], epsilon_sq) * 0.5


def _check_labels(labels, n, K):
    labels = np.asarray(labels)
    if labels.shape != (n,):
        raise BadLabel(f"expected {n} labels, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= K):
        raise BadLabel(f"labels outside [0, {K})")
    return labels.astype(np.int64)


def coding_rate_local(U, labels, K, epsilon_sq=0.5):
    """Sum over clusters of (n_k / 2n) ln det(I + d/(n_k eps^2) U_k U_k^T); empty clusters add 0."""
    U = T.as_tensor(U)
    n = U.shape[1]
    labels = _check_labels(labels, n, K)
    total = T.Tensor(0.0)
    for k in range(K):
        idx = np.flatnonzero(labels == k)
        if idx.size == 0:
            continue
        Uk = T.take_cols(U, idx)
        total = total + _rate_term(Uk, idx.size, epsilon_sq) * (idx.size / (2.0 * n))
    return total


def loss_dis(U, labels, K, epsilon_sq=0.5):
    """Local minus global coding rate; labels carry no gradient."""
    return coding_rate_local(U, labels, K, epsilon_sq) - coding_rate_global(U, epsilon_sq)


# -- self-expression loss --------------------------------------------------------------

def _coef_block(U, J, theta):
    """Columns J of the self-expressive matrix (n x |J|) plus its live mask and signs."""
    G = U.T @ U[:, J]
    live = np.abs(G) > theta
    sgn = np.sign(G)
    S = np.where(live, sgn * (np.abs(G) - theta), 0.0)
    rows = np.arange(J.start, J.stop)
    cols = np.arange(J.stop - J.start)
    S[rows, cols] = 0.0
    live[rows, cols] = False
    return S, live, sgn


def _rel_forward(U, theta, block):
    d, n = U.shape
    resid = np.empty_like(U)
    penalty = 0.0
    for j0 in range(0, n, block):
        J = slice(j0, min(j0 + block, n))
        S, _, _ = _coef_block(U, J, theta)
        resid[:, J] = U[:, J] - U @ S
        penalty += float(np.sum(S * S))
    return resid, float(np.sum(resid * resid)) + penalty


def loss_rel(U, theta, block=None):
    """Self-expression residual plus squared-coefficient penalty.

    ``sum_j ||u_j - sum_{i!=j} s_ij u_i||^2 + sum_j sum_{i!=j} s_ij^2`` with
    ``s_ij`` the soft-thresholded inner product. Forward and backward passes
    visit the coefficient matrix in column blocks of width ``block``, so no
    n x n array is ever held.
    """
    U = T.as_tensor(U)
    theta = T.as_tensor(theta)
    Ud = U.data
    th = float(theta.data.reshape(-1)[0])
    d, n = Ud.shape
    if n < 2:
        raise ShapeMismatch("loss_rel needs at least two samples")
    block = n if block is None else int(block)
    resid, value = _rel_forward(Ud, th, block)

    def backward(g):
        g = float(g)
        grad_u = 2.0 * resid
        grad_theta = 0.0
        for j0 in range(0, n, block):
            J = slice(j0, min(j0 + block, n))
            S, live, sgn = _coef_block(Ud, J, th)
            # direct path of the residual: -2 * resid @ S (S symmetric)
            grad_u[:, J] -= 2.0 * resid @ S
            GS = -2.0 * (Ud.T @ resid[:, J]) + 2.0 * S
            GS *= live
            grad_theta -= float(np.sum(GS * sgn))
            # G = U^T U: dL/dU = U (GG + GG^T), split across this block
            grad_u[:, J] += Ud @ GS
            grad_u += Ud[:, J] @ GS.T
        T._accum(U, g * grad_u)
        T._accum(theta, np.full(theta.shape, g * grad_theta))

    return T._node(np.float64(value), (U, theta), backward)


def loss_rel_dense(U, theta):
    """Plain-numpy evaluation that stores the whole coefficient matrix."""
    U = np.asarray(U, dtype=np.float64)
    G = U.T @ U
    S = np.sign(G) * np.maximum(np.abs(G) - theta, 0.0)
    np.fill_diagonal(S, 0.0)
    resid = U - U @ S
    return float(np.sum(resid**2) + np.sum(S**2))


# -- total ---------------------------------------------------------------------

def loss_total(bundle, views, labels, K, theta, weights: LossWeights = LossWeights(), rel_block=None):
    """Weighted objective on one forward bundle.

    Returns ``(total_tensor, LossBreakdown)``. The reconstruction and
    orthogonality terms always enter with weight 1.
    """
    recon = loss_recon(views, bundle.Xhat)
    ortho = loss_ortho(bundle.C, bundle.D, bundle.R)
    ss = loss_ss(bundle.Q, bundle.Q_D, bundle.Q_R)
    ib = loss_ib(bundle.mu_u, bundle.log_var_u, bundle.U, bundle.pred_d, bundle.pred_c, len(views))
    dis = loss_dis(bundle.U, labels, K, weights.epsilon_sq)
    rel = loss_rel(bundle.U, theta, block=rel_block)
    total = (
        recon
        + ortho
        + ss * weights.lambda1
        + ib * weights.lambda2
        + dis * weights.lambda3
        + rel * weights.lambda4
    )
    breakdown = LossBreakdown(
        aes=float(recon),
        ortho=float(ortho),
        ss=float(ss),
        ib=float(ib),
        dis=float(dis),
        rel=float(rel),
        total=float(total),
    )
    return total, breakdown
