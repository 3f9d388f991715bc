"""Shared builders for the test suite."""

import numpy as np

from hpipg.cones import CONE_ZERO, ConeBlock, free_set
from hpipg.linalg import StructuredSpdMatrix
from hpipg.problem import Qcp


def random_spd(rng, n, spread=2.0):
    """Dense SPD matrix with eigenvalues roughly in [0.5, 0.5 + spread]."""
    A = rng.standard_normal((n, n))
    q, _ = np.linalg.qr(A)
    eigs = 0.5 + spread * rng.random(n)
    return (q * eigs) @ q.T


def random_full_rank(rng, m, n):
    """Gaussian m-by-n matrix; full row rank with probability one."""
    H = rng.standard_normal((m, n))
    assert np.linalg.matrix_rank(H) == m
    return H


def equality_qp(rng, n, m, diagonal=False):
    """Strongly convex QP with equality constraints and free variables."""
    if diagonal:
        P = StructuredSpdMatrix.diagonal(0.5 + 2.0 * rng.random(n))
    else:
        P = StructuredSpdMatrix.dense(random_spd(rng, n))
    p = rng.standard_normal(n)
    G = random_full_rank(rng, m, n)
    g = G @ rng.standard_normal(n)
    return Qcp(
        P=P,
        p=p,
        G=G,
        g=g,
        cone_blocks=[ConeBlock(CONE_ZERO, m)],
        set_blocks=[free_set(n)],
    )


def dense_kkt_solve(qcp):
    """Closed-form solution of an equality-constrained QP (oracle)."""
    n, m = qcp.n, qcp.m
    K = np.zeros((n + m, n + m))
    K[:n, :n] = qcp.P.to_dense()
    K[:n, n:] = qcp.G.T
    K[n:, :n] = qcp.G
    rhs = np.concatenate([-qcp.p, qcp.g])
    y = np.linalg.solve(K, rhs)
    return y[:n], y[n:]


class FakeTimer:
    """Deterministic stand-in for time.perf_counter."""

    def __init__(self):
        self.now = 0.0

    def __call__(self):
        self.now += 0.001
        return self.now
