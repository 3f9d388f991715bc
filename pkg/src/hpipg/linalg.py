"""Structured SPD matrices, triangular factors, and matrix-free spectral estimation.

The Cholesky and triangular-solve routines preserve the structure of their
input (diagonal, block-diagonal, dense) so that downstream transforms stay
cheap.  The power-iteration routines only touch the constraint matrix through
``apply_H`` / ``apply_Ht`` callables; nothing in this module factorizes the
operator whose spectrum is being estimated.
"""

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DimensionMismatch, InvalidInput, NotPositiveDefinite

DIAGONAL = "diagonal"
BLOCK_DIAGONAL = "block-diagonal"
DENSE = "dense"

# Relative pivot threshold below which a Cholesky pivot counts as non-positive.
PIVOT_RTOL = 1e-13

# Norm threshold below which the shifted iterate has collapsed: every
# eigenvalue sits at sigma_max and the spectrum carries no gap to estimate.
_UNDERFLOW = 1e-300


def _check_square_blocks(blocks):
    out = []
    for b in blocks:
        a = np.asarray(b, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise InvalidInput(f"blocks must be square matrices, got shape {a.shape}")
        out.append(a)
    return out


@dataclass(frozen=True)
class StructuredSpdMatrix:
    """Symmetric positive definite matrix with an explicit structure tag.

    ``entries`` holds, per kind: a 1-D diagonal, a list of dense symmetric
    blocks, or one dense symmetric matrix.  Symmetry is checked at
    construction; positive definiteness is only established by ``cholesky``.
    """

    kind: str
    dim: int
    entries: object

    @staticmethod
    def diagonal(diag):
        d = np.asarray(diag, dtype=float)
        if d.ndim != 1 or d.size == 0:
            raise InvalidInput("diagonal entries must form a nonempty 1-D array")
        if not np.all(d > 0):
            raise InvalidInput("diagonal entries must be positive for a definite matrix")
        return StructuredSpdMatrix(DIAGONAL, d.size, d)

    @staticmethod
    def block_diagonal(blocks):
        blks = _check_square_blocks(blocks)
        if not blks:
            raise InvalidInput("block-diagonal matrix needs at least one block")
        for a in blks:
            if not np.allclose(a, a.T, rtol=1e-12, atol=1e-12):
                raise InvalidInput("blocks must be symmetric")
        return StructuredSpdMatrix(BLOCK_DIAGONAL, sum(a.shape[0] for a in blks), blks)

    @staticmethod
    def dense(matrix):
        a = np.asarray(matrix, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.size == 0:
            raise InvalidInput(f"dense matrix must be square, got shape {a.shape}")
        if not np.allclose(a, a.T, rtol=1e-12, atol=1e-12):
            raise InvalidInput("dense matrix must be symmetric")
        return StructuredSpdMatrix(DENSE, a.shape[0], a)

    def to_dense(self):
        if self.kind == DIAGONAL:
            return np.diag(self.entries)
        if self.kind == BLOCK_DIAGONAL:
            out = np.zeros((self.dim, self.dim))
            o = 0
            for b in self.entries:
                d = b.shape[0]
                out[o : o + d, o : o + d] = b
                o += d
            return out
        return np.array(self.entries, copy=True)

    def matvec(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[0] != self.dim:
            raise DimensionMismatch(f"operand has length {x.shape[0]}, expected {self.dim}")
        if self.kind == DIAGONAL:
            return self.entries * x
        if self.kind == BLOCK_DIAGONAL:
            out = np.empty_like(x)
            o = 0
            for b in self.entries:
                d = b.shape[0]
                out[o : o + d] = b @ x[o : o + d]
                o += d
            return out
        return self.entries @ x

    def max_diagonal(self):
        if self.kind == DIAGONAL:
            return float(np.max(self.entries))
        if self.kind == BLOCK_DIAGONAL:
            return float(max(np.max(np.diag(b)) for b in self.entries))
        return float(np.max(np.diag(self.entries)))


@dataclass(frozen=True)
class CholeskyFactor:
    """Upper-triangular factor R with R^T R equal to the factored matrix.

    Mirrors the structure of its source: diagonal factors store a 1-D array
    of square roots, block-diagonal factors a list of upper-triangular
    blocks, dense factors one upper-triangular matrix.
    """

    kind: str
    dim: int
    entries: object

    def to_dense(self):
        if self.kind == DIAGONAL:
            return np.diag(self.entries)
        if self.kind == BLOCK_DIAGONAL:
            out = np.zeros((self.dim, self.dim))
            o = 0
            for b in self.entries:
                d = b.shape[0]
                out[o : o + d, o : o + d] = b
                o += d
            return out
        return np.array(self.entries, copy=True)

    def diagonal_entries(self):
        if self.kind == DIAGONAL:
            return np.array(self.entries, copy=True)
        if self.kind == BLOCK_DIAGONAL:
            return np.concatenate([np.diag(b) for b in self.entries])
        return np.diag(self.entries).copy()


@dataclass
class PowerIterationConfig:
    """Termination and start-vector settings for the power-iteration routines.

    Unless ``initial_vector`` is given, the start is a pseudorandom normal
    draw from ``seed`` (deterministic by default).  A structured start such
    as all ones is deliberately avoided: row-normalized Gram matrices have
    unit diagonal, which makes ones an exact eigenvector in small cases and
    can lock the iteration onto the wrong end of the spectrum.  ``eps_buff``
    shrinks the smallest-eigenvalue estimate to guard against early
    termination.
    """

    eps_abs: float = 1e-9
    eps_rel: float = 1e-9
    eps_buff: float = 0.01
    j_max: int = 50_000
    initial_vector: np.ndarray | None = None
    seed: int = 0

    def validate(self):
        if self.eps_abs < 0 or self.eps_rel < 0:
            raise InvalidInput("eps_abs and eps_rel must be nonnegative")
        if not 0 <= self.eps_buff < 1:
            raise InvalidInput(f"eps_buff must lie in [0, 1), got {self.eps_buff!r}")
        if self.j_max < 1:
            raise InvalidInput(f"j_max must be at least 1, got {self.j_max!r}")

    def start_vector(self, dim):
        if self.initial_vector is not None:
            w = np.asarray(self.initial_vector, dtype=float)
            if w.ndim != 1:
                raise InvalidInput("initial_vector must be one-dimensional")
            if dim is not None and w.shape[0] != dim:
                raise DimensionMismatch(
                    f"initial_vector has length {w.shape[0]}, expected {dim}"
                )
            if not np.linalg.norm(w) > 0:
                raise InvalidInput("initial_vector must have positive norm")
            return w.copy()
        if dim is None:
            raise InvalidInput("operator dimension required when initial_vector is unset")
        w = np.random.default_rng(self.seed).standard_normal(dim)
        # a zero draw has probability zero; guard regardless
        if not np.linalg.norm(w) > 0:
            w = np.ones(dim)
        return w


@dataclass
class SpectralEstimates:
    """Estimated extreme eigenvalues of the constraint Gram matrix H H^T."""

    sigma_max: float
    sigma_min: float
    iterations_used: int
    converged: bool
    degenerate: bool = False

    def validate(self):
        if not (np.isfinite(self.sigma_max) and np.isfinite(self.sigma_min)):
            raise InvalidInput("spectral estimates must be finite")
        if self.sigma_min < 0 or self.sigma_max < self.sigma_min:
            raise InvalidInput(
                f"need 0 <= sigma_min <= sigma_max, got ({self.sigma_min}, {self.sigma_max})"
            )


class PowerIterationResult(NamedTuple):
    value: float
    iterations: int
    converged: bool


def cholesky(P: StructuredSpdMatrix) -> CholeskyFactor:
    """Upper-triangular Cholesky factor of a structured SPD matrix.

    Raises NotPositiveDefinite when any pivot falls at or below
    ``PIVOT_RTOL`` times the largest diagonal entry of P.
    """
    floor = PIVOT_RTOL * P.max_diagonal()

    def factor_dense(a):
        try:
            lower = np.linalg.cholesky(a)
        except np.linalg.LinAlgError:
            raise NotPositiveDefinite("matrix is not positive definite") from None
        # pivots of the elimination are the squared diagonal of the factor
        if np.any(np.diag(lower) ** 2 <= floor):
            raise NotPositiveDefinite(
                f"pivot at or below {PIVOT_RTOL:g} times the max diagonal"
            )
        return lower.T

    if P.kind == DIAGONAL:
        if np.any(P.entries <= floor):
            raise NotPositiveDefinite(
                f"diagonal entry at or below {PIVOT_RTOL:g} times the max diagonal"
            )
        return CholeskyFactor(DIAGONAL, P.dim, np.sqrt(P.entries))
    if P.kind == BLOCK_DIAGONAL:
        return CholeskyFactor(BLOCK_DIAGONAL, P.dim, [factor_dense(b) for b in P.entries])
    return CholeskyFactor(DENSE, P.dim, factor_dense(P.entries))


def _blockwise(R, rhs, solve_block):
    out = np.empty_like(rhs)
    o = 0
    for b in R.entries:
        d = b.shape[0]
        out[o : o + d] = solve_block(b, rhs[o : o + d])
        o += d
    return out


def _check_rhs(R, b, name):
    b = np.asarray(b, dtype=float)
    if b.ndim not in (1, 2) or b.shape[0] != R.dim:
        raise DimensionMismatch(
            f"{name} has shape {b.shape}, expected leading dimension {R.dim}"
        )
    return b


def solve_upper(R: CholeskyFactor, b) -> np.ndarray:
    """Solve R x = b by back substitution.  Accepts vector or matrix b."""
    b = _check_rhs(R, b, "b")
    if R.kind == DIAGONAL:
        d = R.entries if b.ndim == 1 else R.entries[:, None]
        return b / d
    if R.kind == BLOCK_DIAGONAL:
        return _blockwise(R, b, lambda blk, rhs: solve_triangular(blk, rhs, lower=False))
    return solve_triangular(R.entries, b, lower=False)


def solve_upper_transpose(R: CholeskyFactor, b) -> np.ndarray:
    """Solve R^T x = b by forward substitution.  Accepts vector or matrix b."""
    b = _check_rhs(R, b, "b")
    if R.kind == DIAGONAL:
        d = R.entries if b.ndim == 1 else R.entries[:, None]
        return b / d
    if R.kind == BLOCK_DIAGONAL:
        return _blockwise(
            R, b, lambda blk, rhs: solve_triangular(blk, rhs, trans="T", lower=False)
        )
    return solve_triangular(R.entries, b, trans="T", lower=False)


def apply_upper(R: CholeskyFactor, x) -> np.ndarray:
    """Multiply R x.  Used to map solutions into the transformed variable."""
    x = _check_rhs(R, x, "x")
    if R.kind == DIAGONAL:
        d = R.entries if x.ndim == 1 else R.entries[:, None]
        return d * x
    if R.kind == BLOCK_DIAGONAL:
        return _blockwise(R, x, lambda blk, v: blk @ v)
    return R.entries @ x


def _settled(new, old, eps_abs, eps_rel):
    return abs(new - old) <= eps_abs + eps_rel * max(new, old)


def power_iteration(
    apply_H: Callable,
    apply_Ht: Callable,
    cfg: PowerIterationConfig | None = None,
    dim: int | None = None,
) -> PowerIterationResult:
    """Estimate the largest eigenvalue of H H^T.

    The iterate is renormalized by the previous norm estimate, so the norm
    sequence itself converges to sigma_max.  Non-convergence is reported via
    the ``converged`` flag, never as an exception.
    """
    cfg = cfg or PowerIterationConfig()
    cfg.validate()
    w = cfg.start_vector(dim)
    sigma = float(np.linalg.norm(w))
    sigma_next = sigma
    converged = False
    iterations = 0
    for j in range(1, cfg.j_max + 1):
        iterations = j
        z = apply_Ht(w)
        w = apply_H(z) / sigma
        sigma_next = float(np.linalg.norm(w))
        if sigma_next < _UNDERFLOW:
            # operator is (numerically) zero along every remaining direction
            converged = True
            break
        if _settled(sigma_next, sigma, cfg.eps_abs, cfg.eps_rel):
            converged = True
            break
        sigma = sigma_next
    return PowerIterationResult(sigma_next, iterations, converged)


def shifted_power_iteration(
    apply_H: Callable,
    apply_Ht: Callable,
    sigma_max: float,
    cfg: PowerIterationConfig | None = None,
    dim: int | None = None,
    trace: list | None = None,
) -> SpectralEstimates:
    """Estimate the smallest eigenvalue of H H^T given its largest.

    Runs power iteration on the shifted operator H H^T - sigma_max I, which
    is negative semidefinite, so its dominant eigenvalue in magnitude is
    sigma_max - sigma_min.  The returned sigma_min is shrunk by ``eps_buff``
    to stay a safe lower bound.  When the shifted iterate underflows, every
    eigenvalue coincides with sigma_max; the estimate degrades gracefully to
    ``(1 - eps_buff) * sigma_max`` and the ``degenerate`` flag is set.
    """
    if sigma_max < 0:
        raise InvalidInput(f"sigma_max must be nonnegative, got {sigma_max!r}")
    cfg = cfg or PowerIterationConfig()
    cfg.validate()
    w = cfg.start_vector(dim)
    sigma = float(np.linalg.norm(w))
    sigma_star = sigma
    converged = False
    degenerate = False
    iterations = 0
    for j in range(1, cfg.j_max + 1):
        iterations = j
        z = apply_Ht(w)
        w = (apply_H(z) - sigma_max * w) / sigma
        sigma_star = float(np.linalg.norm(w))
        if trace is not None:
            trace.append(sigma_star)
        if sigma_star < _UNDERFLOW:
            converged = True
            degenerate = True
            break
        if _settled(sigma_star, sigma, cfg.eps_abs, cfg.eps_rel):
            converged = True
            break
        if j < cfg.j_max:
            sigma = sigma_star
    sigma_min = max(0.0, (1.0 - cfg.eps_buff) * (sigma_max - sigma_star))
    return SpectralEstimates(
        sigma_max=float(sigma_max),
        sigma_min=sigma_min,
        iterations_used=iterations,
        converged=converged,
        degenerate=degenerate,
    )
