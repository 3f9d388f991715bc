"""Hypersphere preconditioning and a Ruiz-equilibration baseline.

The hypersphere pipeline has three steps:

1. change of variables z = R x with R the upper Cholesky factor of P, which
   turns the quadratic objective into a multiple of the unit quadratic
   (level sets become hyperspheres);
2. block row-normalization [H h] = E [G_hat g] with E positive diagonal,
   uniform within each second-order cone block so the cone is preserved;
3. objective scaling by lam* = sqrt(sigma_min / 2), the minimizer of the
   saddle-matrix condition number, with sigma_min and sigma_max estimated
   matrix-free by (shifted) power iteration.

Everything here touches the constraint matrix only through matvecs and
triangular solves against R; no factorization of the KKT system is formed.
"""

import math
from dataclasses import dataclass, replace

import numpy as np
from sklearn.base import BaseEstimator

from . import cones as _cones
from .errors import DimensionMismatch, IncompatibleScaling, InvalidInput
from .linalg import (
    BLOCK_DIAGONAL,
    DIAGONAL,
    CholeskyFactor,
    PowerIterationConfig,
    SpectralEstimates,
    StructuredSpdMatrix,
    cholesky,
    power_iteration,
    shifted_power_iteration,
    solve_upper,
    solve_upper_transpose,
)
from .problem import Qcp, _structured_diagonal, scaling_findings
from .validation import as_vector


@dataclass
class PreconditionedQcp:
    """Problem in hypersphere form:

    minimize   (lam/2) z'z + lam q'z
    subject to H z - h in K,   z in D

    where D carries the per-axis scales of the variable transform and
    ``estimates`` records the spectral bounds used to pick lam and the PIPG
    step sizes.
    """

    lam: float
    q: np.ndarray
    H: np.ndarray
    h: np.ndarray
    cone_blocks: list
    set_blocks: list
    estimates: SpectralEstimates

    @property
    def n(self):
        return self.q.shape[0]

    @property
    def m(self):
        return self.h.shape[0]


@dataclass
class TransformRecord:
    """Everything needed to map solutions back to the original variables."""

    R: CholeskyFactor
    E_diag: np.ndarray
    lam: float


@dataclass
class RuizConfig:
    max_iters: int = 25
    tol: float = 1e-6
    scale_cost: bool = True

    def validate(self):
        if self.max_iters < 1:
            raise InvalidInput(f"max_iters must be at least 1, got {self.max_iters!r}")
        if not self.tol > 0:
            raise InvalidInput(f"tol must be positive, got {self.tol!r}")


@dataclass
class RuizScaling:
    """Diagonal scalings from equilibration: x = col_scale * x_hat, and the
    original dual is row_scale * eta_hat / cost_scale."""

    col_scale: np.ndarray
    row_scale: np.ndarray
    cost_scale: float

    def recover(self, xi_hat, eta_hat):
        xi_hat = as_vector(xi_hat, "xi_hat", self.col_scale.shape[0])
        eta_hat = as_vector(eta_hat, "eta_hat", self.row_scale.shape[0])
        return self.col_scale * xi_hat, self.row_scale * eta_hat / self.cost_scale


def _set_block_scales(R: CholeskyFactor, P, set_blocks):
    """Per-block diagonal scales of R, after the structural compatibility check."""
    problems = [f for f in scaling_findings(P, set_blocks) if f.code == "IncompatibleScaling"]
    if problems:
        raise IncompatibleScaling("; ".join(f.message for f in problems))
    diag = R.diagonal_entries()
    out = []
    o = 0
    for blk in set_blocks:
        out.append(blk.with_scale(diag[o : o + blk.dim]))
        o += blk.dim
    if o != R.dim:
        raise DimensionMismatch(f"set blocks cover {o} entries, expected {R.dim}")
    return out


def hypersphere_step(qcp: Qcp):
    """Change of variables z = R x (step one).

    Returns (G_hat, g, q, set_blocks, R) with G_hat = G R^{-1} computed by
    triangular solves, q = R^{-T} p, and set blocks carrying the diagonal of
    R as their scale.
    """
    R = cholesky(qcp.P)
    if qcp.G.ndim != 2 or qcp.G.shape[1] != R.dim:
        raise DimensionMismatch(
            f"G has shape {qcp.G.shape}, expected (m, {R.dim})"
        )
    q = solve_upper_transpose(R, as_vector(qcp.p, "p", R.dim))
    G_hat = solve_upper_transpose(R, qcp.G.T).T
    blocks = _set_block_scales(R, qcp.P, qcp.set_blocks)
    return G_hat, np.array(qcp.g, dtype=float, copy=True), q, blocks, R


def block_row_normalize(G_hat, g, cone_blocks):
    """Row normalization respecting cone blocks (step two).

    Rows in zero-cone and orthant blocks are scaled to unit Euclidean norm
    individually; each second-order block is scaled by one factor, the
    inverse of its largest row norm, so the scaled block stays inside the
    same cone.  Zero rows keep a unit scale.
    """
    G_hat = np.asarray(G_hat, dtype=float)
    g = as_vector(g, "g", G_hat.shape[0])
    _cones.check_contiguous(cone_blocks, G_hat.shape[0], "cone block")
    row_norms = np.linalg.norm(G_hat, axis=1)
    E = np.ones(G_hat.shape[0])
    o = 0
    for blk in cone_blocks:
        seg = row_norms[o : o + blk.dim]
        if blk.tag == _cones.CONE_SOC:
            top = seg.max()
            E[o : o + blk.dim] = 1.0 / top if top > 0 else 1.0
        else:
            nz = seg > 0
            E[o : o + blk.dim][nz] = 1.0 / seg[nz]
        o += blk.dim
    return E[:, None] * G_hat, E * g, E


def choose_lambda(H, cfg: PowerIterationConfig | None = None):
    """Estimate the Gram spectrum of H and return (lam*, estimates).

    Runs plain power iteration for sigma_max, then the shifted variant for
    sigma_min, and returns lam* = sqrt(sigma_min / 2).  A constraint-free
    problem (no rows) has nothing to scale against; lam falls back to 1.
    """
    H = np.asarray(H, dtype=float)
    if H.ndim != 2:
        raise InvalidInput(f"H must be a matrix, got {H.ndim}-D")
    m = H.shape[0]
    if m == 0:
        return 1.0, SpectralEstimates(0.0, 0.0, 0, True, degenerate=True)
    cfg = cfg or PowerIterationConfig()

    def apply_H(v):
        return H @ v

    def apply_Ht(w):
        return H.T @ w

    top = power_iteration(apply_H, apply_Ht, cfg, dim=m)
    if top.value <= 0.0:
        # zero constraint matrix: conditioning is governed by the objective alone
        return 1.0, SpectralEstimates(0.0, 0.0, top.iterations, top.converged, True)
    est = shifted_power_iteration(apply_H, apply_Ht, top.value, cfg, dim=m)
    est.converged = est.converged and top.converged
    if est.sigma_min <= 0.0:
        raise InvalidInput(
            "estimated sigma_min is zero; H looks rank-deficient, which breaks "
            "the full-row-rank assumption"
        )
    return math.sqrt(est.sigma_min / 2.0), est


def precondition(qcp: Qcp, cfg: PowerIterationConfig | None = None):
    """Run the full three-step pipeline.

    Returns (preconditioned problem, transform record).  The cone blocks are
    unchanged: every scaling applied to constraint rows maps each cone block
    onto itself.
    """
    G_hat, g, q, set_blocks, R = hypersphere_step(qcp)
    H, h, E = block_row_normalize(G_hat, g, qcp.cone_blocks)
    lam, est = choose_lambda(H, cfg)
    pre = PreconditionedQcp(
        lam=lam,
        q=q,
        H=H,
        h=h,
        cone_blocks=list(qcp.cone_blocks),
        set_blocks=set_blocks,
        estimates=est,
    )
    return pre, TransformRecord(R=R, E_diag=E, lam=lam)


def recover_solution(record: TransformRecord, z, eta):
    """Map a transformed primal-dual pair back to the original problem.

    The primal undoes the change of variables, xi = R^{-1} z.  The dual of
    the original cone constraint follows from matching stationarity of the
    two problems: mu = E eta / lam.
    """
    z = as_vector(z, "z", record.R.dim)
    eta = as_vector(eta, "eta", record.E_diag.shape[0])
    xi = solve_upper(record.R, z)
    mu = record.E_diag * eta / record.lam
    return xi, mu


# ---------------------------------------------------------------------------
# Ruiz equilibration baseline


def _column_abs_max(P):
    if P.kind == DIAGONAL:
        return np.abs(np.asarray(P.entries))
    if P.kind == BLOCK_DIAGONAL:
        return np.concatenate([np.abs(b).max(axis=0) for b in P.entries])
    return np.abs(P.entries).max(axis=0)


def _scale_structured(P, d, gamma=1.0):
    """Return diag(d) P diag(d) * gamma with P's structure preserved."""
    if P.kind == DIAGONAL:
        return StructuredSpdMatrix.diagonal(gamma * np.asarray(P.entries) * d * d)
    if P.kind == BLOCK_DIAGONAL:
        blocks, o = [], 0
        for b in P.entries:
            k = b.shape[0]
            db = d[o : o + k]
            blocks.append(gamma * db[:, None] * b * db[None, :])
            o += k
        return StructuredSpdMatrix.block_diagonal(blocks)
    return StructuredSpdMatrix.dense(gamma * d[:, None] * np.asarray(P.entries) * d[None, :])


def _group_max(values, spans):
    out = np.array(values, copy=True)
    for lo, hi in spans:
        if hi > lo:
            out[lo:hi] = values[lo:hi].max()
    return out


def ruiz_equilibrate(qcp: Qcp, cfg: RuizConfig | None = None):
    """Infinity-norm equilibration of the KKT data, as a baseline.

    Iteratively scales variable columns and constraint rows toward unit
    infinity norm, with a scalar cost scaling, stopping at ``tol`` or
    ``max_iters``.  Scales are kept uniform across each ball and
    second-order set block and each second-order cone block, so the scaled
    problem has the same cone and set structure.  Returns the equilibrated
    problem and the accumulated scalings.
    """
    cfg = cfg or RuizConfig()
    cfg.validate()
    n, m = qcp.n, qcp.m
    _cones.check_contiguous(qcp.cone_blocks, m, "cone block")
    _cones.check_contiguous(qcp.set_blocks, n, "set block")

    uniform_col_spans = []
    o = 0
    for blk in qcp.set_blocks:
        if blk.tag in (_cones.SET_BALL, _cones.SET_SOC):
            uniform_col_spans.append((o, o + blk.dim))
        o += blk.dim
    uniform_row_spans = []
    o = 0
    for blk in qcp.cone_blocks:
        if blk.tag == _cones.CONE_SOC:
            uniform_row_spans.append((o, o + blk.dim))
        o += blk.dim

    P = qcp.P
    p = np.array(qcp.p, dtype=float, copy=True)
    G = np.array(qcp.G, dtype=float, copy=True)
    g = np.array(qcp.g, dtype=float, copy=True)
    d = np.ones(n)
    e = np.ones(m)
    c = 1.0

    for _ in range(cfg.max_iters):
        col_g = np.abs(G).max(axis=0) if m else np.zeros(n)
        col = np.maximum(_column_abs_max(P), col_g)
        row = np.abs(G).max(axis=1) if m else np.zeros(0)
        col[col == 0] = 1.0
        row[row == 0] = 1.0
        col = _group_max(col, uniform_col_spans)
        row = _group_max(row, uniform_row_spans)
        worst = max(
            np.abs(1.0 - col).max() if n else 0.0,
            np.abs(1.0 - row).max() if m else 0.0,
        )
        if worst <= cfg.tol:
            break
        dv = 1.0 / np.sqrt(col)
        de = 1.0 / np.sqrt(row)
        P = _scale_structured(P, dv)
        p = dv * p
        G = de[:, None] * G * dv[None, :]
        g = de * g
        d *= dv
        e *= de
        if cfg.scale_cost:
            denom = max(_column_abs_max(P).mean(), np.abs(p).max() if n else 0.0)
            if denom > 0 and np.isfinite(denom):
                gamma = 1.0 / denom
                P = _scale_structured(P, np.ones(n), gamma)
                p = gamma * p
                c *= gamma

    set_blocks = []
    o = 0
    for blk in qcp.set_blocks:
        set_blocks.append(blk.with_scale(blk.scale / d[o : o + blk.dim]))
        o += blk.dim
    scaled = Qcp(
        P=P,
        p=p,
        G=G,
        g=g,
        cone_blocks=list(qcp.cone_blocks),
        set_blocks=set_blocks,
        full_rank_assumed=qcp.full_rank_assumed,
    )
    return scaled, RuizScaling(col_scale=d, row_scale=e, cost_scale=c)


# ---------------------------------------------------------------------------
# estimator-style wrappers


class HyperspherePreconditioner(BaseEstimator):
    """Preconditioner with the scikit-learn fit/transform surface.

    ``fit`` factorizes the quadratic term and checks set-block scaling
    compatibility; this is the offline part, reusable whenever only the
    constraint data changes.  ``transform`` runs row normalization and the
    spectral scaling on a problem sharing the fitted quadratic term and
    returns the preconditioned problem; the transform record is kept on the
    estimator for ``inverse_transform``.
    """

    def __init__(self, eps_abs=1e-9, eps_rel=1e-9, eps_buff=0.01, j_max=50_000, seed=0):
        self.eps_abs = eps_abs
        self.eps_rel = eps_rel
        self.eps_buff = eps_buff
        self.j_max = j_max
        self.seed = seed

    def _power_config(self):
        return PowerIterationConfig(
            eps_abs=self.eps_abs,
            eps_rel=self.eps_rel,
            eps_buff=self.eps_buff,
            j_max=self.j_max,
            seed=self.seed,
        )

    def fit(self, qcp: Qcp, y=None):
        self.factor_ = cholesky(qcp.P)
        self.fitted_diagonal_ = _structured_diagonal(qcp.P)
        _set_block_scales(self.factor_, qcp.P, qcp.set_blocks)
        return self

    def transform(self, qcp: Qcp) -> PreconditionedQcp:
        if not hasattr(self, "factor_"):
            raise InvalidInput("preconditioner is not fitted; call fit first")
        if qcp.P.dim != self.factor_.dim or not np.array_equal(
            _structured_diagonal(qcp.P), self.fitted_diagonal_
        ):
            raise InvalidInput("quadratic term differs from the fitted one; refit")
        R = self.factor_
        q = solve_upper_transpose(R, as_vector(qcp.p, "p", R.dim))
        G_hat = solve_upper_transpose(R, qcp.G.T).T
        blocks = _set_block_scales(R, qcp.P, qcp.set_blocks)
        H, h, E = block_row_normalize(G_hat, qcp.g, qcp.cone_blocks)
        lam, est = choose_lambda(H, self._power_config())
        self.record_ = TransformRecord(R=R, E_diag=E, lam=lam)
        self.estimates_ = est
        return PreconditionedQcp(
            lam=lam,
            q=q,
            H=H,
            h=h,
            cone_blocks=list(qcp.cone_blocks),
            set_blocks=blocks,
            estimates=est,
        )

    def fit_transform(self, qcp: Qcp, y=None) -> PreconditionedQcp:
        return self.fit(qcp).transform(qcp)

    def inverse_transform(self, z, eta):
        if not hasattr(self, "record_"):
            raise InvalidInput("nothing to invert; call transform first")
        return recover_solution(self.record_, z, eta)


class RuizEquilibrator(BaseEstimator):
    """Equilibration baseline with the same estimator surface."""

    def __init__(self, max_iters=25, tol=1e-6, scale_cost=True):
        self.max_iters = max_iters
        self.tol = tol
        self.scale_cost = scale_cost

    def fit(self, qcp: Qcp, y=None):
        # equilibration has no reusable offline part; fit validates only
        RuizConfig(self.max_iters, self.tol, self.scale_cost).validate()
        return self

    def transform(self, qcp: Qcp) -> Qcp:
        cfg = RuizConfig(self.max_iters, self.tol, self.scale_cost)
        scaled, scaling = ruiz_equilibrate(qcp, cfg)
        self.scaling_ = scaling
        return scaled

    def fit_transform(self, qcp: Qcp, y=None) -> Qcp:
        return self.fit(qcp).transform(qcp)

    def inverse_transform(self, xi_hat, eta_hat):
        if not hasattr(self, "scaling_"):
            raise InvalidInput("nothing to invert; call transform first")
        return self.scaling_.recover(xi_hat, eta_hat)
