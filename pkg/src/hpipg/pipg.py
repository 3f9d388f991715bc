"""First-order primal-dual solver for preconditioned problems.

Each iteration takes one projected gradient step in the primal, one
projected ascent step in the dual against the extrapolated primal, then
relaxes both; the loop touches the constraint matrix only through matvecs
and performs no linear solves.

    z+  = Proj_D  ( zeta - alpha (lam (zeta + q) + H' eta) )
    w+  = Proj_K* ( eta  + beta  (H (2 z+ - zeta) - h) )
    zeta+ = zeta + rho (z+ - zeta)
    eta+  = eta  + rho (w+ - eta)

The step sizes satisfy alpha (lam + beta sigma_max) = 1 with beta =
omega^2 alpha, so one scalar omega trades primal against dual step length.
``solve_qcp`` runs the same scheme on an untransformed problem, replacing
lam (zeta + q) by the general objective gradient P zeta + p; it exists so
baselines can be benchmarked without any preconditioning.
"""

import math
import time
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .cones import stacked_polar_projector, stacked_set_projector
from .errors import InvalidInput
from .linalg import DIAGONAL, PowerIterationConfig, power_iteration
from .precond import PreconditionedQcp
from .problem import Qcp
from .validation import as_vector, check_in_range, check_positive

REFERENCE = "reference-relative-error"
RESIDUAL = "fixed-point-residual"


@dataclass
class PipgConfig:
    """Solver settings.

    ``termination`` selects the stopping rule: ``reference-relative-error``
    compares the primal iterate against a known solution (benchmarking);
    ``fixed-point-residual`` is self-contained and scales the step
    differences by the step sizes.  Residuals are checked every
    ``check_interval`` iterations.
    """

    omega: float = 1.0
    rho: float = 1.5
    max_iters: int = 100_000
    termination: str = RESIDUAL
    tol: float = 1e-8
    check_interval: int = 10

    def validate(self):
        check_positive(self.omega, "omega")
        check_in_range(self.rho, 0.0, 2.0, "rho")
        if self.max_iters < 1:
            raise InvalidInput(f"max_iters must be at least 1, got {self.max_iters!r}")
        if self.termination not in (REFERENCE, RESIDUAL):
            raise InvalidInput(f"unknown termination rule {self.termination!r}")
        check_positive(self.tol, "tol")
        if self.check_interval < 1:
            raise InvalidInput(f"check_interval must be at least 1, got {self.check_interval!r}")


@dataclass
class PipgState:
    """Solver iterates: last projected pair (z, w) and relaxed pair (zeta, eta)."""

    z: np.ndarray
    w: np.ndarray
    zeta: np.ndarray
    eta: np.ndarray
    iteration: int = 0


@dataclass
class SolveReport:
    iterations: int
    terminated: str
    primal_residual: float
    dual_residual: float
    z_final: np.ndarray
    eta_final: np.ndarray
    wall_time: float

    @property
    def converged(self):
        return self.terminated == "converged"


def step_sizes(lam: float, omega: float, sigma_max: float):
    """Primal and dual step sizes (alpha, beta) for the given spectral bound.

    Solves alpha (lam + beta sigma_max) = 1 with beta = omega^2 alpha.
    sigma_max may be zero (no constraints), in which case alpha = 1/lam.
    """
    check_positive(lam, "lam")
    check_positive(omega, "omega")
    if sigma_max < 0:
        raise InvalidInput(f"sigma_max must be nonnegative, got {sigma_max!r}")
    alpha = 2.0 / (lam + math.sqrt(lam * lam + 4.0 * omega * omega * sigma_max))
    return alpha, omega * omega * alpha


def optimal_omega(lam: float, sigma_min: float) -> float:
    """Step-size ratio minimizing the convergence bound; equals lam / lam*."""
    check_positive(lam, "lam")
    check_positive(sigma_min, "sigma_min")
    return lam / math.sqrt(sigma_min / 2.0)


def _sweep(gradient, H, h, zeta, eta, alpha, beta, rho, project_D, project_Kpolar):
    z_new = project_D(zeta - alpha * (gradient(zeta) + H.T @ eta))
    w_new = project_Kpolar(eta + beta * (H @ (2.0 * z_new - zeta) - h))
    zeta_new = zeta + rho * (z_new - zeta)
    eta_new = eta + rho * (w_new - eta)
    return z_new, w_new, zeta_new, eta_new


def iterate(state: PipgState, problem: PreconditionedQcp, alpha: float, beta: float,
            rho: float) -> PipgState:
    """One solver sweep.  Builds block projectors on the fly; the solve loop
    reuses prebuilt ones, so prefer ``solve`` for long runs."""
    lam, q = problem.lam, problem.q
    z, w, zeta, eta = _sweep(
        lambda v: lam * (v + q),
        problem.H, problem.h, state.zeta, state.eta, alpha, beta, rho,
        stacked_set_projector(problem.set_blocks),
        stacked_polar_projector(problem.cone_blocks),
    )
    return PipgState(z=z, w=w, zeta=zeta, eta=eta, iteration=state.iteration + 1)


def _initial_state(n, m, warm_start):
    if warm_start is None:
        zeta = np.zeros(n)
        eta = np.zeros(m)
    else:
        zeta = as_vector(warm_start[0], "warm_start primal", n).copy()
        eta = as_vector(warm_start[1], "warm_start dual", m).copy()
    return PipgState(z=zeta.copy(), w=eta.copy(), zeta=zeta, eta=eta)


def _run_loop(gradient, H, h, set_blocks, cone_blocks, alpha, beta, cfg,
              reference, warm_start):
    n, m = H.shape[1], H.shape[0]
    if cfg.termination == REFERENCE:
        if reference is None:
            raise InvalidInput("reference-relative-error termination needs a reference")
        reference = as_vector(reference, "reference", n)
        ref_scale = max(float(np.linalg.norm(reference)), 1.0)
    project_D = stacked_set_projector(set_blocks)
    project_Kpolar = stacked_polar_projector(cone_blocks)

    state = _initial_state(n, m, warm_start)
    primal_res = math.inf
    dual_res = math.inf
    terminated = "max_iterations"
    start = time.perf_counter()
    for k in range(1, cfg.max_iters + 1):
        zeta_prev, eta_prev = state.zeta, state.eta
        z, w, zeta, eta = _sweep(
            gradient, H, h, zeta_prev, eta_prev, alpha, beta, cfg.rho,
            project_D, project_Kpolar,
        )
        state = PipgState(z=z, w=w, zeta=zeta, eta=eta, iteration=k)
        if k % cfg.check_interval == 0 or k == cfg.max_iters:
            primal_res = float(np.linalg.norm(z - zeta_prev)) / alpha
            dual_res = float(np.linalg.norm(w - eta_prev)) / beta if m else 0.0
            if cfg.termination == REFERENCE:
                if float(np.linalg.norm(z - reference)) <= cfg.tol * ref_scale:
                    terminated = "converged"
                    break
            else:
                ok_primal = primal_res <= cfg.tol * (1.0 + float(np.linalg.norm(z)))
                ok_dual = dual_res <= cfg.tol * (1.0 + float(np.linalg.norm(w)))
                if ok_primal and ok_dual:
                    terminated = "converged"
                    break
    wall = time.perf_counter() - start
    return SolveReport(
        iterations=state.iteration,
        terminated=terminated,
        primal_residual=primal_res,
        dual_residual=dual_res,
        z_final=state.z,
        eta_final=state.eta,
        wall_time=wall,
    )


def solve(problem: PreconditionedQcp, cfg: PipgConfig | None = None, reference=None,
          warm_start=None) -> SolveReport:
    """Run the solver on a preconditioned problem until termination.

    ``reference`` is the known solution in the transformed variable; it is
    required by (and only used for) reference-relative-error termination.
    ``warm_start`` is an optional (primal, dual) pair of initial iterates;
    the default start is the origin.  Hitting the iteration cap is reported
    in the result, not raised.
    """
    cfg = cfg or PipgConfig()
    cfg.validate()
    if problem.estimates is None:
        raise InvalidInput("problem carries no spectral estimates; precondition first")
    alpha, beta = step_sizes(problem.lam, cfg.omega, problem.estimates.sigma_max)
    lam, q = problem.lam, problem.q
    return _run_loop(
        lambda v: lam * (v + q),
        problem.H, problem.h, problem.set_blocks, problem.cone_blocks,
        alpha, beta, cfg, reference, warm_start,
    )


def _objective_norm(P) -> float:
    """Largest eigenvalue of the SPD quadratic term, matrix-free."""
    if P.kind == DIAGONAL:
        return float(np.max(P.entries))
    top = power_iteration(P.matvec, P.matvec, PowerIterationConfig(), dim=P.dim)
    # the iteration estimates the top eigenvalue of P^2
    return math.sqrt(max(top.value, 0.0))


def solve_qcp(qcp: Qcp, cfg: PipgConfig | None = None, reference=None,
              warm_start=None, sigma_gram_max: float | None = None) -> SolveReport:
    """Run the solver directly on an untransformed problem.

    Same iteration with the general objective gradient P zeta + p, and step
    sizes built from the largest eigenvalues of P and of G G'.  Pass
    ``sigma_gram_max`` when the constraint Gram bound is already known;
    otherwise it is estimated here by power iteration.
    """
    cfg = cfg or PipgConfig()
    cfg.validate()
    if sigma_gram_max is None:
        if qcp.m:
            G = qcp.G
            top = power_iteration(
                lambda v: G @ v, lambda w: G.T @ w, PowerIterationConfig(), dim=qcp.m
            )
            sigma_gram_max = top.value
        else:
            sigma_gram_max = 0.0
    p_norm = _objective_norm(qcp.P)
    alpha, beta = step_sizes(p_norm, cfg.omega, sigma_gram_max)
    P, p = qcp.P, qcp.p
    return _run_loop(
        lambda v: P.matvec(v) + p,
        qcp.G, qcp.g, qcp.set_blocks, qcp.cone_blocks,
        alpha, beta, cfg, reference, warm_start,
    )


class PipgSolver(BaseEstimator):
    """Solver with scikit-learn parameter handling.

    ``solve`` returns the report and keeps it (plus the primal solution) on
    the estimator; ``fit`` is the estimator-style alias.
    """

    def __init__(self, omega=1.0, rho=1.5, max_iters=100_000,
                 termination=RESIDUAL, tol=1e-8, check_interval=10):
        self.omega = omega
        self.rho = rho
        self.max_iters = max_iters
        self.termination = termination
        self.tol = tol
        self.check_interval = check_interval

    def _config(self):
        return PipgConfig(
            omega=self.omega,
            rho=self.rho,
            max_iters=self.max_iters,
            termination=self.termination,
            tol=self.tol,
            check_interval=self.check_interval,
        )

    def solve(self, problem, reference=None, warm_start=None) -> SolveReport:
        if isinstance(problem, PreconditionedQcp):
            report = solve(problem, self._config(), reference, warm_start)
        else:
            report = solve_qcp(problem, self._config(), reference, warm_start)
        self.report_ = report
        self.solution_ = report.z_final
        return report

    def fit(self, problem, y=None):
        self.solve(problem)
        return self
