import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from e2lmvsc.errors import BadLabel, ShapeMismatch
from e2lmvsc.gradsuite import LOSS_NAMES, loss_closures, tiny_instance
from e2lmvsc.losses import (
    LossWeights,
    coding_rate_global,
    coding_rate_local,
    loss_dis,
    loss_ib,
    loss_ortho,
    loss_recon,
    loss_rel,
    loss_rel_dense,
    loss_ss,
    loss_total,
)
from e2lmvsc.model import E2LMVSCModel, forward, relation_coefficient
from e2lmvsc.numcore import RngStream, cholesky_logdet, grad_check

HALF_LOG_2PI = 0.5 * math.log(2 * math.pi)


def rel_loop_oracle(U, theta):
    """Direct double loop over sample pairs."""
    d, n = U.shape
    total = 0.0
    for j in range(n):
        r = U[:, j].copy()
        for i in range(n):
            if i != j:
                s = relation_coefficient(U[:, i], U[:, j], theta)
                r -= s * U[:, i]
                total += s * s
        total += float(r @ r)
    return total


# -- reconstruction / orthogonality / similarity ------------------------------------

def test_recon_examples(rng):
    X = rng.random((2, 3))
    assert float(loss_recon([X], [X])) == 0.0
    assert float(loss_recon([X], [X + 1.0])) == pytest.approx(6.0, abs=1e-12)
    Xs = [rng.random((3, 4)), rng.random((2, 4))]
    Hs = [rng.random((3, 4)), rng.random((2, 4))]
    oracle = sum((a[i, j] - b[i, j]) ** 2 for a, b in zip(Xs, Hs) for i in range(a.shape[0]) for j in range(4))
    assert abs(float(loss_recon(Xs, Hs)) - oracle) <= 1e-12
    with pytest.raises(ShapeMismatch):
        loss_recon([X], [X[:, :2]])


def test_ortho_examples():
    e1 = np.array([[1.0], [0.0]])
    assert float(loss_ortho(e1, [e1], [e1])) == pytest.approx(3.0)
    C = np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 1.0]])
    D = np.array([[0.0, 1.0], [1.0, 0.0], [0.0, 0.0]])
    R = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0]])
    assert float(loss_ortho(C, [D], [R])) == 0.0


@given(seed=st.integers(0, 10_000), V=st.integers(1, 3))
def test_ortho_nonnegative(seed, V):
    rng = np.random.default_rng(seed)
    C = rng.standard_normal((3, 5))
    assert float(loss_ortho(C, list(rng.standard_normal((V, 3, 5))), list(rng.standard_normal((V, 3, 5))))) >= 0


def test_ss_examples():
    Q = np.array([[1.0, 0.0]])
    assert float(loss_ss(Q, Q, Q)) == 0.0
    assert float(loss_ss(Q, Q, np.array([[0.0, 1.0]]))) == pytest.approx(-2.0)
    with pytest.raises(ShapeMismatch):
        loss_ss(Q, Q, np.ones((2, 2)))


@given(seed=st.integers(0, 10_000), n=st.integers(1, 20), K=st.integers(2, 6))
def test_ss_bounded(seed, n, K):
    rng = np.random.default_rng(seed)
    Qs = [rng.dirichlet(np.ones(K), size=n) for _ in range(3)]
    assert abs(float(loss_ss(*Qs))) <= 2 * n


# -- information bottleneck ---------------------------------------------------------

def test_ib_standard_normal_heads():
    z = np.zeros((1, 1))
    value = float(loss_ib(z, z, z, [(z, z)], (z, z), V=1))
    assert value == pytest.approx(2 * HALF_LOG_2PI, abs=1e-15)
    assert value == pytest.approx(1.837877, abs=1e-6)


def test_ib_duplicated_samples_same_mean(rng):
    mu, lv, U, m1, l1, m2, l2 = rng.standard_normal((7, 3, 4))
    a = float(loss_ib(mu, lv, U, [(m1, l1)], (m2, l2), V=1))
    dup = lambda M: np.hstack([M, M])  # noqa: E731
    b = float(loss_ib(dup(mu), dup(lv), dup(U), [(dup(m1), dup(l1))], (dup(m2), dup(l2)), V=1))
    assert b == pytest.approx(a, rel=1e-13)


def test_ib_matches_per_sample_oracle(rng):
    from e2lmvsc.numcore import diag_gaussian_logpdf, kl_diag_gaussian_to_std

    d, n, V = 3, 5, 2
    mu, lv, U = rng.standard_normal((3, d, n))
    preds = [tuple(rng.standard_normal((2, d, n))) for _ in range(V)]
    pc = tuple(rng.standard_normal((2, d, n)))
    oracle = 0.0
    for i in range(n):
        oracle += V * kl_diag_gaussian_to_std(mu[:, i], lv[:, i])
        for m, l in preds + [pc]:
            oracle -= diag_gaussian_logpdf(U[:, i], m[:, i], l[:, i])
    assert float(loss_ib(mu, lv, U, preds, pc, V)) == pytest.approx(oracle / n, rel=1e-12)


# -- coding rates -------------------------------------------------------------------

def test_coding_rate_examples():
    assert float(coding_rate_global(np.zeros((3, 4)))) == 0.0
    assert float(coding_rate_global(np.array([[1.0]]), 0.5)) == pytest.approx(0.5 * math.log(3), abs=1e-15)
    U = np.array([[2.0, 1.0]])
    local = float(coding_rate_local(U, [0, 1], 2, 0.5))
    assert local == pytest.approx(0.75 * math.log(3), abs=1e-15)
    assert local == pytest.approx(0.823959, abs=1e-6)
    assert float(coding_rate_local(np.zeros((2, 3)), [0, 1, 1], 2)) == 0.0


def test_coding_rate_commutation(rng):
    U = rng.standard_normal((4, 9))
    alpha = 4 / (9 * 0.5)
    via_n = 0.5 * cholesky_logdet(np.eye(9) + alpha * U.T @ U)
    assert abs(float(coding_rate_global(U)) - via_n) <= 1e-8


def test_local_single_cluster_equals_global(rng):
    U = rng.standard_normal((3, 7))
    assert float(coding_rate_local(U, np.zeros(7, int), 3)) == float(coding_rate_global(U))
    assert float(loss_dis(U, np.zeros(7, int), 3)) == 0.0


def test_local_skips_empty_clusters(rng):
    U = rng.standard_normal((3, 6))
    labels = np.array([0, 0, 2, 2, 2, 0])
    assert float(coding_rate_local(U, labels, 4)) == pytest.approx(float(coding_rate_local(U, labels // 2, 2)))


def test_dis_examples():
    U = np.array([[2.0, 1.0]])
    assert float(loss_dis(U, [0, 1], 2)) == pytest.approx(0.75 * math.log(3) - 0.5 * math.log(6), abs=1e-15)
    assert float(loss_dis(U, [0, 1], 2)) == pytest.approx(-0.071921, abs=1e-6)
    assert float(loss_dis(np.zeros((2, 3)), [0, 1, 1], 2)) == 0.0
    with pytest.raises(BadLabel):
        loss_dis(U, [0, 2], 2)


@given(seed=st.integers(0, 100_000), d=st.integers(1, 6), n=st.integers(1, 20), K=st.integers(1, 5))
def test_rate_reduction_nonnegative(seed, d, n, K):
    rng = np.random.default_rng(seed)
    U = rng.standard_normal((d, n)) * rng.uniform(0.1, 5)
    labels = rng.integers(0, K, n)
    assert float(coding_rate_global(U)) - float(coding_rate_local(U, labels, K)) >= -1e-9
    assert float(coding_rate_global(U)) >= 0 and float(coding_rate_local(U, labels, K)) >= 0


# -- self-expression ------------------------------------------------------------------

def test_rel_examples():
    Q, _ = np.linalg.qr(np.random.default_rng(0).standard_normal((4, 4)))
    assert float(loss_rel(Q, 0.0)) == pytest.approx(4.0, abs=1e-12)
    e1 = np.array([[1.0, 1.0], [0.0, 0.0]])
    assert float(loss_rel(e1, 0.0)) == pytest.approx(2.0, abs=1e-15)
    with pytest.raises(ShapeMismatch):
        loss_rel(np.ones((2, 1)), 0.1)


@given(seed=st.integers(0, 10_000), n=st.integers(2, 64), block=st.integers(1, 64), theta=st.floats(0, 1))
def test_rel_blocked_equals_dense(seed, n, block, theta):
    U = np.random.default_rng(seed).standard_normal((3, n)) * 0.5
    dense = loss_rel_dense(U, theta)
    assert abs(float(loss_rel(U, theta, block=block)) - dense) <= 1e-10 * max(1.0, abs(dense))


def test_rel_loop_oracle(rng):
    for _ in range(5):
        U = rng.standard_normal((3, 8)) * 0.6
        assert float(loss_rel(U, 0.2, block=3)) == pytest.approx(rel_loop_oracle(U, 0.2), rel=1e-12)


@given(seed=st.integers(0, 10_000))
def test_rel_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    U = rng.standard_normal((3, 10)) * 0.5
    perm = rng.permutation(10)
    a, b = float(loss_rel(U, 0.1)), float(loss_rel(U[:, perm], 0.1))
    assert b == pytest.approx(a, rel=1e-12)


@given(seed=st.integers(0, 10_000), t1=st.floats(0, 2), t2=st.floats(0, 2))
def test_rel_penalty_monotone_in_theta(seed, t1, t2):
    U = np.random.default_rng(seed).standard_normal((3, 8))
    lo, hi = min(t1, t2), max(t1, t2)

    def penalty(theta):
        G = U.T @ U
        S = np.sign(G) * np.maximum(np.abs(G) - theta, 0)
        np.fill_diagonal(S, 0)
        return float(np.sum(S * S))

    assert penalty(hi) <= penalty(lo)


# -- total ---------------------------------------------------------------------------

def _bundle():
    m = E2LMVSCModel([4, 3], 8, 2, d=3, hidden=6, seed=2)
    rng = np.random.default_rng(2)
    views = [rng.random((4, 8)), rng.random((3, 8))]
    return m, views, forward(m, views, sample=True, noise=rng.standard_normal((3, 8)))


def test_total_is_weighted_sum():
    m, views, b = _bundle()
    w = LossWeights(0.3, 1.7, 0.2, 2.5, 0.5)
    labels = np.array([0, 1] * 4)
    total, br = loss_total(b, views, labels, 2, m.relation.theta_tensor(), w)
    parts = {
        "aes": float(loss_recon(views, b.Xhat)),
        "ortho": float(loss_ortho(b.C, b.D, b.R)),
        "ss": float(loss_ss(b.Q, b.Q_D, b.Q_R)),
        "ib": float(loss_ib(b.mu_u, b.log_var_u, b.U, b.pred_d, b.pred_c, 2)),
        "dis": float(loss_dis(b.U, labels, 2)),
        "rel": float(loss_rel(b.U, m.relation.theta)),
    }
    for k, v in parts.items():
        assert getattr(br, k) == pytest.approx(v, rel=1e-12, abs=1e-12)
    weighted = parts["aes"] + parts["ortho"] + 0.3 * parts["ss"] + 1.7 * parts["ib"] + 0.2 * parts["dis"] + 2.5 * parts["rel"]
    assert abs(br.total - weighted) <= 1e-12 * max(1.0, abs(weighted))
    assert float(total) == br.total


def test_total_zero_weights_is_autoencoder_loss():
    m, views, b = _bundle()
    _, br = loss_total(b, views, np.zeros(8, int), 2, m.relation.theta_tensor(), LossWeights(0, 0, 0, 0))
    assert br.total == pytest.approx(br.aes + br.ortho, rel=1e-15)


def test_default_weights():
    w = LossWeights()
    assert (w.lambda1, w.lambda2, w.lambda3, w.lambda4, w.epsilon_sq) == (1.0, 1.0, 1.0, 1.0, 0.5)
    with pytest.raises(ValueError):
        LossWeights(lambda1=-1)


@pytest.mark.parametrize("name", LOSS_NAMES)
def test_loss_gradients_tiny_instance(name):
    # a quick single-seed pass; the ten-seed suite runs in the acceptance tests
    inst = tiny_instance(4)
    fn, params = loss_closures(inst)[name]
    report = grad_check(fn, params, RngStream(4, 11), tol=1e-4, n_coords=8)
    assert report.passed, str(report)
