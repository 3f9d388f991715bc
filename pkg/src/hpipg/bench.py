"""Benchmark harness for the preconditioner comparison experiment.

Generates a family of double-integrator trajectory problems whose terminal
state cost is scaled by a knob ``gamma``, solves each one with no
preconditioning, Ruiz equilibration, and the hypersphere pipeline, and
records condition numbers, iteration counts, and timings as CSV.  Growing
gamma makes the raw problem progressively worse conditioned while leaving
the constraint geometry untouched, which isolates what each preconditioner
can and cannot repair.

The reference solutions come from a dense active-set solver over the KKT
system (``reference_solve``); it is diagnostic-grade and desk-scale only,
deliberately independent of the first-order solver it judges.
"""

import dataclasses
import math
import time
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .cones import CONE_ZERO, SET_BOX, SET_FREE, ConeBlock, box_set
from .errors import HpipgError, InvalidConfig, InvalidInput, OracleFailed
from .linalg import PowerIterationConfig, StructuredSpdMatrix, apply_upper, power_iteration
from .pipg import REFERENCE, PipgConfig, solve, solve_qcp
from .precond import precondition, ruiz_equilibrate
from .problem import Qcp, kkt_residual

PRECONDITIONER_NAMES = ("hypersphere", "none", "ruiz")

CSV_HEADER = (
    "gamma,preconditioner,kappa_kkt,iterations,converged,"
    "presolve_ms,solve_ms,sigma_min,sigma_max,spi_iterations"
)

_STATE_DIM = 4
_INPUT_DIM = 2


@dataclass
class GeneratorConfig:
    """Problem family settings.

    The plant is a 2-D double integrator with state (position, velocity) in
    R^4 and acceleration input in R^2, discretized with step ``dt``.  The
    first state is pinned to ``initial_state`` by a zero-width box; every
    later state and every input gets a symmetric box.  The cost is diagonal:
    ``state_cost`` on each non-terminal state, ``terminal_scale`` times that
    on the final state, ``input_cost`` on each input.
    """

    horizon: int = 50
    state_cost: tuple = (1.0, 1.0, 0.5, 0.5)
    terminal_scale: float = 1.0
    input_cost: tuple = (1.0, 1.0)
    state_halfwidth: tuple = (10.0, 10.0, 10.0, 10.0)
    input_halfwidth: tuple = (1.0, 1.0)
    dt: float = 0.1
    initial_state: tuple = (5.0, 5.0, 0.0, 0.0)
    seed: int = 0

    def validate(self):
        if self.horizon < 2:
            raise InvalidConfig(f"horizon must be at least 2, got {self.horizon!r}")
        for name, vec, want in (
            ("state_cost", self.state_cost, _STATE_DIM),
            ("input_cost", self.input_cost, _INPUT_DIM),
            ("state_halfwidth", self.state_halfwidth, _STATE_DIM),
            ("input_halfwidth", self.input_halfwidth, _INPUT_DIM),
        ):
            arr = np.asarray(vec, dtype=float)
            if arr.shape != (want,):
                raise InvalidConfig(f"{name} must have {want} entries")
            if not np.all(arr > 0):
                raise InvalidConfig(f"{name} entries must be positive")
        if not self.terminal_scale > 0:
            raise InvalidConfig(f"terminal_scale must be positive, got {self.terminal_scale!r}")
        if not self.dt > 0:
            raise InvalidConfig(f"dt must be positive, got {self.dt!r}")
        if np.asarray(self.initial_state, dtype=float).shape != (_STATE_DIM,):
            raise InvalidConfig(f"initial_state must have {_STATE_DIM} entries")


def generate(cfg: GeneratorConfig) -> Qcp:
    """Build the trajectory problem for one point of the family.

    Decision vector: T states then T-1 inputs.  Dynamics appear as one
    zero-cone block of 4(T-1) equality rows; each row block carries an
    identity on the successor state, so the equality matrix has full row
    rank by construction.
    """
    cfg.validate()
    T = cfg.horizon
    dt = cfg.dt
    n = _STATE_DIM * T + _INPUT_DIM * (T - 1)
    m = _STATE_DIM * (T - 1)

    A = np.eye(_STATE_DIM)
    A[0, 2] = dt
    A[1, 3] = dt
    B = np.zeros((_STATE_DIM, _INPUT_DIM))
    B[0, 0] = 0.5 * dt * dt
    B[1, 1] = 0.5 * dt * dt
    B[2, 0] = dt
    B[3, 1] = dt

    G = np.zeros((m, n))
    for t in range(T - 1):
        rows = slice(_STATE_DIM * t, _STATE_DIM * (t + 1))
        G[rows, _STATE_DIM * (t + 1) : _STATE_DIM * (t + 2)] = np.eye(_STATE_DIM)
        G[rows, _STATE_DIM * t : _STATE_DIM * (t + 1)] = -A
        col = _STATE_DIM * T + _INPUT_DIM * t
        G[rows, col : col + _INPUT_DIM] = -B

    state_cost = np.asarray(cfg.state_cost, dtype=float)
    input_cost = np.asarray(cfg.input_cost, dtype=float)
    diag = np.concatenate([
        np.tile(state_cost, T - 1),
        cfg.terminal_scale * state_cost,
        np.tile(input_cost, T - 1),
    ])

    x0 = np.asarray(cfg.initial_state, dtype=float)
    sw = np.asarray(cfg.state_halfwidth, dtype=float)
    iw = np.asarray(cfg.input_halfwidth, dtype=float)
    set_blocks = [
        box_set(x0, x0),
        box_set(np.tile(-sw, T - 1), np.tile(sw, T - 1)),
        box_set(np.tile(-iw, T - 1), np.tile(iw, T - 1)),
    ]
    return Qcp(
        P=StructuredSpdMatrix.diagonal(diag),
        p=np.zeros(n),
        G=G,
        g=np.zeros(m),
        cone_blocks=[ConeBlock(CONE_ZERO, m)],
        set_blocks=set_blocks,
    )


# ---------------------------------------------------------------------------
# Reference oracle: dense active-set solve


def _stacked_bounds(qcp: Qcp):
    lo = np.full(qcp.n, -np.inf)
    up = np.full(qcp.n, np.inf)
    o = 0
    for blk in qcp.set_blocks:
        if blk.tag == SET_BOX:
            lo[o : o + blk.dim] = blk.scale * blk.lower
            up[o : o + blk.dim] = blk.scale * blk.upper
        elif blk.tag != SET_FREE:
            raise InvalidInput(
                f"reference solver handles box and free sets only, got {blk.tag!r}"
            )
        o += blk.dim
    return lo, up


def _kkt_solve(P, p, G, g, free, values):
    """Equality-constrained solve with the active variables held at ``values``.

    One step of iterative refinement keeps the residual near machine level
    even when the cost diagonal spans many orders of magnitude.  A singular
    reduced system (too many variables fixed for the equality rows) raises
    OracleFailed; the LAPACK wrappers only warn on exact singularity, so the
    warning is escalated locally.
    """
    n = p.shape[0]
    m = g.shape[0]
    nf = int(free.sum())
    active = ~free
    K = np.zeros((nf + m, nf + m))
    K[:nf, :nf] = P[np.ix_(free, free)]
    Gf = G[:, free]
    K[:nf, nf:] = Gf.T
    K[nf:, :nf] = Gf
    rhs = np.concatenate([
        -p[free] - P[np.ix_(free, active)] @ values[active],
        g - G[:, active] @ values[active],
    ])
    with warnings.catch_warnings():
        warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
        try:
            lu, piv = scipy.linalg.lu_factor(K)
            y = scipy.linalg.lu_solve((lu, piv), rhs)
            if not np.all(np.isfinite(y)):
                raise OracleFailed("active-set subproblem produced non-finite values")
            y += scipy.linalg.lu_solve((lu, piv), rhs - K @ y)
        except (scipy.linalg.LinAlgError, scipy.linalg.LinAlgWarning, ValueError) as exc:
            raise OracleFailed(f"active-set subproblem is singular: {exc}") from exc
    if not np.all(np.isfinite(y)):
        raise OracleFailed("active-set subproblem produced non-finite values")
    xi = values.copy()
    xi[free] = y[:nf]
    return xi, y[nf:]


def _active_set_solve(P, p, G, g, lo, up, max_iters):
    """Primal-dual active set iteration for a box- and equality-constrained
    strictly convex QP.  Zero-width boxes are pinned permanently.

    Updates every bound simultaneously, so it settles in a handful of sweeps
    on well-structured problems but can deadlock by fixing variables the
    equality rows need; the caller falls back to the one-at-a-time method
    when that happens."""
    n = p.shape[0]
    pinned = lo == up
    at_lower = pinned.copy()
    at_upper = np.zeros(n, dtype=bool)
    tol = 1e-12
    for sweep in range(1, max_iters + 1):
        values = np.where(at_upper, up, lo)
        values[~(at_lower | at_upper)] = 0.0
        free = ~(at_lower | at_upper)
        xi, mu = _kkt_solve(P, p, G, g, free, values)
        grad = P @ xi + p + G.T @ mu
        next_lower = pinned | (free & (xi < lo - tol)) | (at_lower & ~pinned & (grad >= -tol))
        next_upper = (free & (xi > up + tol)) | (at_upper & (grad <= tol))
        # a variable violating both tests keeps its current side
        both = next_lower & next_upper
        next_lower = np.where(both, at_lower, next_lower)
        next_upper = np.where(both, at_upper, next_upper)
        if np.array_equal(next_lower, at_lower) and np.array_equal(next_upper, at_upper):
            return xi, mu, sweep
        at_lower, at_upper = next_lower, next_upper
    raise OracleFailed(f"active set did not settle within {max_iters} sweeps")


def _feasible_start(P, G, g, lo, up, pinned, max_rounds=2000):
    """Point satisfying the equalities and the box.

    Alternating projections between the box and the equality manifold (pins
    included as equalities), which reaches the intersection whenever it is
    nonempty; a single projection of the box center is just the first round
    and can land outside the box.  The equality projection reuses one LU
    factorization of its KKT system."""
    n = lo.shape[0]
    A = np.vstack([G, np.eye(n)[pinned]])
    b = np.concatenate([g, lo[pinned]])
    k = b.shape[0]
    K = np.zeros((n + k, n + k))
    K[:n, :n] = np.eye(n)
    K[:n, n:] = A.T
    K[n:, :n] = A
    with warnings.catch_warnings():
        warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
        try:
            lu, piv = scipy.linalg.lu_factor(K)
            x = np.clip(0.0, lo, up)
            for _ in range(max_rounds):
                rhs = np.concatenate([x, b])
                x = scipy.linalg.lu_solve((lu, piv), rhs)[:n]
                slack = 1e-12 * (1.0 + float(np.max(np.abs(x))))
                if np.all(x >= lo - slack) and np.all(x <= up + slack):
                    return np.clip(x, lo, up)
                x = np.clip(x, lo, up)
        except (scipy.linalg.LinAlgError, scipy.linalg.LinAlgWarning, ValueError) as exc:
            raise OracleFailed(f"feasible-start projection is singular: {exc}") from exc
    raise OracleFailed(
        "could not construct a feasible start: alternating projections did "
        "not reach the box within the budget (the box and the equality rows "
        "may not intersect)"
    )


def _primal_active_set(P, p, G, g, lo, up, max_iters):
    """One-at-a-time active set method with a feasible start.

    Moves along the subproblem direction until the first blocking bound and
    adds only that bound, so the working set stays linearly independent with
    the equality rows and every reduced system is nonsingular; drops follow
    the lowest-index rule.  Slower than the simultaneous sweep but does not
    deadlock.  Zero-width boxes are pinned permanently."""
    n = p.shape[0]
    pinned = lo == up
    x = _feasible_start(P, G, g, lo, up, pinned)
    at_lower = pinned.copy()
    at_upper = np.zeros(n, dtype=bool)
    tol = 1e-9
    for _ in range(max_iters):
        free = ~(at_lower | at_upper)
        values = np.where(at_upper, up, lo)
        target, mu = _kkt_solve(P, p, G, g, free, values)
        d = target - x
        d[~free] = 0.0
        if float(np.max(np.abs(d), initial=0.0)) <= 1e-12 * (1.0 + float(np.max(np.abs(x), initial=0.0))):
            grad = P @ target + p + G.T @ mu
            bound_dual = np.where(at_lower, grad, -grad)
            bound_dual[free | pinned] = np.inf
            worst = int(np.argmin(bound_dual))
            if bound_dual[worst] >= -tol:
                return target, mu
            at_lower[worst] = False
            at_upper[worst] = False
            continue
        step = 1.0
        blocker = -1
        to_upper = False
        for i in np.flatnonzero(free):
            if d[i] > 1e-13 and np.isfinite(up[i]):
                room = max((up[i] - x[i]) / d[i], 0.0)
                if room < step:
                    step, blocker, to_upper = room, i, True
            elif d[i] < -1e-13 and np.isfinite(lo[i]):
                room = max((lo[i] - x[i]) / d[i], 0.0)
                if room < step:
                    step, blocker, to_upper = room, i, False
        if blocker < 0:
            # unblocked full step lands on the subproblem solution exactly
            x = target
        else:
            x = x + step * d
            if to_upper:
                at_upper[blocker] = True
                x[blocker] = up[blocker]
            else:
                at_lower[blocker] = True
                x[blocker] = lo[blocker]
    raise OracleFailed(f"active set did not settle within {max_iters} steps")


def reference_solve(qcp: Qcp, max_iters: int = 100) -> np.ndarray:
    """High-accuracy solution of a desk-scale problem by dense active-set
    iteration over the KKT system.

    Handles zero cones (equalities) and box or free set blocks; anything
    else is out of the oracle's scope.  The fast simultaneous-sweep method
    runs first; if it deadlocks, the slower one-at-a-time method takes over
    with the same iteration budget.  The result is verified against the
    problem's first-order conditions before being returned: the KKT residual
    must stay within 1e-12 of the magnitude of the stationarity terms, so a
    returned vector is trustworthy to 1e-12 relative to the data scale
    (correct certificates measure near machine epsilon, wrong ones no better
    than 1e-9 on this family).
    """
    if qcp.n + qcp.m > 2000:
        raise InvalidInput("reference solver is desk-scale only (n + m <= 2000)")
    for blk in qcp.cone_blocks:
        if blk.tag != CONE_ZERO:
            raise InvalidInput(
                f"reference solver handles zero cones only, got {blk.tag!r}"
            )
    lo, up = _stacked_bounds(qcp)
    P = qcp.P.to_dense()
    try:
        xi, mu, _ = _active_set_solve(P, qcp.p, qcp.G, qcp.g, lo, up, max_iters)
    except OracleFailed:
        xi, mu = _primal_active_set(P, qcp.p, qcp.G, qcp.g, lo, up, max_iters)
    residual = kkt_residual(qcp, xi, mu)
    # relative gate: stationarity is a difference of terms this large, so its
    # floating-point floor scales with them (gamma-scaled costs reach ~1e8)
    scale = 1.0 + max(
        float(np.max(np.abs(P @ xi))),
        float(np.max(np.abs(qcp.p))),
        float(np.max(np.abs(qcp.G.T @ mu))),
    )
    if not residual <= 1e-12 * scale:
        raise OracleFailed(
            f"reference solution failed verification: KKT residual {residual:.3e} "
            f"against data scale {scale:.3e}"
        )
    return xi


# ---------------------------------------------------------------------------
# Sweep harness


@dataclass
class SweepResult:
    """One cell of the sweep; numeric fields are None when the cell failed
    before producing them, with the exception text in ``error``."""

    gamma: float
    preconditioner: str
    kappa_kkt: float | None = None
    iterations: int | None = None
    converged: bool | None = None
    presolve_ms: float | None = None
    solve_ms: float | None = None
    sigma_min: float | None = None
    sigma_max: float | None = None
    spi_iterations: int | None = None
    error: str | None = None


def kkt_condition_dense(P_dense: np.ndarray, G: np.ndarray) -> float:
    """Condition number of the saddle-point matrix [[P, G'], [G, 0]] by a
    dense symmetric eigensolve.  Diagnostic-grade; never on the solve path."""
    n = P_dense.shape[0]
    m = G.shape[0]
    K = np.zeros((n + m, n + m))
    K[:n, :n] = P_dense
    K[:n, n:] = G.T
    K[n:, :n] = G
    magnitudes = np.abs(np.linalg.eigvalsh(K))
    smallest = float(magnitudes.min())
    if smallest == 0.0:
        return math.inf
    return float(magnitudes.max()) / smallest


def _run_cell(name, gamma, qcp, xi_ref, pipg_cfg, pi_cfg, timer):
    n = qcp.n
    m = qcp.m
    if name == "hypersphere":
        t0 = timer()
        pre, record = precondition(qcp, pi_cfg)
        presolve_ms = (timer() - t0) * 1e3
        kappa = kkt_condition_dense(pre.lam * np.eye(n), pre.H)
        reference = apply_upper(record.R, xi_ref)
        t0 = timer()
        report = solve(pre, pipg_cfg, reference=reference)
        solve_ms = (timer() - t0) * 1e3
        est = pre.estimates
        return SweepResult(
            gamma=gamma, preconditioner=name, kappa_kkt=kappa,
            iterations=report.iterations, converged=report.converged,
            presolve_ms=presolve_ms, solve_ms=solve_ms,
            sigma_min=est.sigma_min, sigma_max=est.sigma_max,
            spi_iterations=est.iterations_used,
        )
    if name == "ruiz":
        t0 = timer()
        scaled, scaling = ruiz_equilibrate(qcp)
        G = scaled.G
        top = power_iteration(lambda v: G @ v, lambda w: G.T @ w, pi_cfg, dim=m)
        presolve_ms = (timer() - t0) * 1e3
        kappa = kkt_condition_dense(scaled.P.to_dense(), G)
        reference = xi_ref / scaling.col_scale
        t0 = timer()
        report = solve_qcp(scaled, pipg_cfg, reference=reference,
                           sigma_gram_max=top.value)
        solve_ms = (timer() - t0) * 1e3
        return SweepResult(
            gamma=gamma, preconditioner=name, kappa_kkt=kappa,
            iterations=report.iterations, converged=report.converged,
            presolve_ms=presolve_ms, solve_ms=solve_ms,
            sigma_max=top.value,
        )
    if name == "none":
        G = qcp.G
        t0 = timer()
        top = power_iteration(lambda v: G @ v, lambda w: G.T @ w, pi_cfg, dim=m)
        presolve_ms = (timer() - t0) * 1e3
        kappa = kkt_condition_dense(qcp.P.to_dense(), G)
        t0 = timer()
        report = solve_qcp(qcp, pipg_cfg, reference=xi_ref,
                           sigma_gram_max=top.value)
        solve_ms = (timer() - t0) * 1e3
        return SweepResult(
            gamma=gamma, preconditioner=name, kappa_kkt=kappa,
            iterations=report.iterations, converged=report.converged,
            presolve_ms=presolve_ms, solve_ms=solve_ms,
            sigma_max=top.value,
        )
    raise InvalidInput(f"unknown preconditioner {name!r}")


def run_sweep(gammas=None, preconditioners=None, cfg: GeneratorConfig | None = None,
              max_iters: int = 100_000, tol: float = 0.005, omega: float = 1.0,
              rho: float = 1.5, check_interval: int = 10,
              timer=time.perf_counter) -> list:
    """Run the full (gamma, preconditioner) grid and return one SweepResult
    per cell, ordered by gamma ascending then preconditioner name.

    Each cell is solved with reference-relative-error termination against
    the oracle solution, mapped into the cell's own coordinates.  A failure
    inside one cell is recorded on its row and the sweep continues; a
    failure of the shared reference poisons every cell of that gamma.
    ``timer`` exists so tests can inject a deterministic clock.
    """
    cfg = cfg or GeneratorConfig()
    gammas = [float(v) for v in (gammas if gammas is not None else [10.0 ** k for k in range(7)])]
    if sorted(set(gammas)) != sorted(gammas):
        raise InvalidInput("gammas must be distinct: rows are keyed by (gamma, preconditioner)")
    names = sorted(preconditioners if preconditioners is not None else PRECONDITIONER_NAMES)
    for name in names:
        if name not in PRECONDITIONER_NAMES:
            raise InvalidInput(f"unknown preconditioner {name!r}")
    if len(set(names)) != len(names):
        raise InvalidInput("preconditioners must be distinct")

    pipg_cfg = PipgConfig(omega=omega, rho=rho, max_iters=max_iters,
                          termination=REFERENCE, tol=tol,
                          check_interval=check_interval)
    pipg_cfg.validate()
    pi_cfg = PowerIterationConfig(seed=cfg.seed)

    results = []
    for gamma in sorted(gammas):
        cell_cfg = dataclasses.replace(cfg, terminal_scale=gamma)
        qcp = generate(cell_cfg)
        try:
            xi_ref = reference_solve(qcp)
        except HpipgError as exc:
            for name in names:
                results.append(SweepResult(gamma=gamma, preconditioner=name,
                                           error=f"reference: {exc}"))
            continue
        for name in names:
            try:
                results.append(_run_cell(name, gamma, qcp, xi_ref,
                                         pipg_cfg, pi_cfg, timer))
            except HpipgError as exc:
                results.append(SweepResult(gamma=gamma, preconditioner=name,
                                           error=str(exc)))
    return results


# ---------------------------------------------------------------------------
# CSV emission


def _format_field(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def format_csv(results) -> str:
    """Render sweep results as CSV text with a fixed column set, 17
    significant digits, and (gamma, preconditioner) row ordering, so equal
    results always produce identical bytes."""
    rows = sorted(results, key=lambda r: (r.gamma, r.preconditioner))
    lines = [CSV_HEADER]
    for r in rows:
        lines.append(",".join([
            _format_field(r.gamma),
            r.preconditioner,
            _format_field(r.kappa_kkt),
            _format_field(r.iterations),
            _format_field(r.converged),
            _format_field(r.presolve_ms),
            _format_field(r.solve_ms),
            _format_field(r.sigma_min),
            _format_field(r.sigma_max),
            _format_field(r.spi_iterations),
        ]))
    return "\n".join(lines) + "\n"


def emit_csv(results, path) -> None:
    """Write ``format_csv`` output to ``path``."""
    text = format_csv(results)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _parse_field(text, kind):
    if text == "":
        return None
    if kind is bool:
        if text == "true":
            return True
        if text == "false":
            return False
        raise InvalidInput(f"expected true/false, got {text!r}")
    return kind(text)


def read_csv(path) -> list:
    """Parse a file produced by ``emit_csv`` back into SweepResult rows.
    Timing and error context lost to the format stays lost; everything the
    CSV carries round-trips exactly."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().split("\n") if ln != ""]
    if not lines or lines[0] != CSV_HEADER:
        raise InvalidInput(f"{path} does not carry the expected sweep header")
    out = []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != 10:
            raise InvalidInput(f"malformed sweep row: {ln!r}")
        out.append(SweepResult(
            gamma=float(parts[0]),
            preconditioner=parts[1],
            kappa_kkt=_parse_field(parts[2], float),
            iterations=_parse_field(parts[3], int),
            converged=_parse_field(parts[4], bool),
            presolve_ms=_parse_field(parts[5], float),
            solve_ms=_parse_field(parts[6], float),
            sigma_min=_parse_field(parts[7], float),
            sigma_max=_parse_field(parts[8], float),
            spi_iterations=_parse_field(parts[9], int),
        ))
    return out
