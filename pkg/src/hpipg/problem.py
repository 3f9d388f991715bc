"""Quadratic cone program container, validation, and KKT conditioning formulas.

A problem is

    minimize   0.5 x' P x + p' x
    subject to G x - g in K        (Cartesian product of cone blocks)
               x in D              (separable set blocks)

with P symmetric positive definite.  The closed-form KKT spectrum and
condition-number helpers below apply to the preconditioned saddle matrix
[[lam I, H'], [H, 0]]; ``assemble_kkt`` materializes that matrix for
diagnostics and tests only.
"""

import json
import math
from dataclasses import dataclass

import numpy as np

from . import cones as _cones
from .cones import ConeBlock, SeparableSetBlock
from .errors import DimensionMismatch, InvalidInput
from .linalg import BLOCK_DIAGONAL, DENSE, DIAGONAL, StructuredSpdMatrix
from .validation import as_matrix, as_vector


@dataclass
class Qcp:
    """One quadratic cone program.  ``full_rank_assumed`` declares that the
    constraint matrix is taken to have full row rank with n > m; the solver
    relies on this and does not verify it (a dense check lives in the tests).
    """

    P: StructuredSpdMatrix
    p: np.ndarray
    G: np.ndarray
    g: np.ndarray
    cone_blocks: list
    set_blocks: list
    full_rank_assumed: bool = True

    @property
    def n(self):
        return self.P.dim

    @property
    def m(self):
        return self.G.shape[0]


@dataclass
class Finding:
    """One validation finding; ``code`` names the error class it would raise."""

    code: str
    message: str

    def __str__(self):
        return f"{self.code}: {self.message}"


@dataclass
class KktDiagnostics:
    """Conditioning summary of the saddle matrix [[lam I, H'], [H, 0]]."""

    lam: float
    sigma_min: float
    sigma_max: float
    spectrum: np.ndarray
    kappa: float
    chi: float


def kkt_spectrum(lam: float, sigmas, n: int, m: int) -> np.ndarray:
    """Eigenvalues of the saddle matrix, in closed form, sorted ascending.

    ``sigmas`` are the m eigenvalues of H H' (the squared singular values of
    H) and must be positive.  The spectrum is lam with multiplicity n - m
    plus the pair (lam +/- sqrt(lam^2 + 4 s)) / 2 for each s.
    """
    sigmas = as_vector(sigmas, "sigmas", m)
    if not lam > 0:
        raise InvalidInput(f"lam must be positive, got {lam!r}")
    if m > n:
        raise InvalidInput(f"need m <= n, got m={m}, n={n}")
    if np.any(sigmas <= 0):
        raise InvalidInput("sigmas must be positive (H must have full row rank)")
    roots = np.sqrt(lam * lam + 4.0 * sigmas)
    eigs = np.concatenate(
        [(lam - roots) / 2.0, np.full(n - m, lam), (lam + roots) / 2.0]
    )
    return np.sort(eigs)


def kkt_condition_number(lam: float, sigma_min: float, sigma_max: float) -> float:
    """Condition number (absolute-eigenvalue ratio) of the saddle matrix."""
    if not (lam > 0 and sigma_min > 0 and sigma_max >= sigma_min):
        raise InvalidInput(
            f"need lam > 0 and 0 < sigma_min <= sigma_max, got "
            f"({lam!r}, {sigma_min!r}, {sigma_max!r})"
        )
    largest = (lam + math.sqrt(lam * lam + 4.0 * sigma_max)) / 2.0
    smallest = min(lam, (math.sqrt(lam * lam + 4.0 * sigma_min) - lam) / 2.0)
    return largest / smallest


def optimal_lambda(sigma_min: float) -> float:
    """Objective scaling minimizing the saddle-matrix condition number."""
    if not sigma_min > 0:
        raise InvalidInput(f"sigma_min must be positive, got {sigma_min!r}")
    return math.sqrt(sigma_min / 2.0)


def kappa_at_optimum(chi: float) -> float:
    """Condition number at the optimal scaling, as a function of chi only."""
    if not chi >= 1:
        raise InvalidInput(f"chi = sigma_max/sigma_min must be >= 1, got {chi!r}")
    return (1.0 + math.sqrt(1.0 + 8.0 * chi)) / 2.0


def assemble_kkt(lam: float, H) -> np.ndarray:
    """Dense saddle matrix [[lam I, H'], [H, 0]].  Diagnostics and tests only."""
    H = as_matrix(H, "H")
    m, n = H.shape
    K = np.zeros((n + m, n + m))
    K[:n, :n] = lam * np.eye(n)
    K[:n, n:] = H.T
    K[n:, :n] = H
    return K


def kkt_diagnostics(lam: float, sigmas, n: int, m: int) -> KktDiagnostics:
    """Closed-form diagnostics from the full Gram spectrum of H."""
    sigmas = as_vector(sigmas, "sigmas", m)
    smin, smax = float(np.min(sigmas)), float(np.max(sigmas))
    return KktDiagnostics(
        lam=lam,
        sigma_min=smin,
        sigma_max=smax,
        spectrum=kkt_spectrum(lam, sigmas, n, m),
        kappa=kkt_condition_number(lam, smin, smax),
        chi=smax / smin,
    )


def validate(qcp: Qcp) -> list:
    """Collect structural findings without raising.

    Reports dimension mismatches, non-contiguous blocks, scaling
    compatibility problems, and a non-positive-definite quadratic term.
    Solvers expect an empty list.
    """
    findings = []
    n = qcp.P.dim

    if qcp.G.ndim != 2:
        findings.append(Finding("DimensionMismatch", f"G must be 2-D, got {qcp.G.ndim}-D"))
        return findings
    m = qcp.G.shape[0]
    if qcp.G.shape[1] != n:
        findings.append(
            Finding("DimensionMismatch", f"G has {qcp.G.shape[1]} columns, expected {n}")
        )
    if qcp.p.shape != (n,):
        findings.append(Finding("DimensionMismatch", f"p has shape {qcp.p.shape}, expected ({n},)"))
    if qcp.g.shape != (m,):
        findings.append(Finding("DimensionMismatch", f"g has shape {qcp.g.shape}, expected ({m},)"))

    for blocks, total, what in (
        (qcp.cone_blocks, m, "cone block"),
        (qcp.set_blocks, n, "set block"),
    ):
        try:
            _cones.check_contiguous(blocks, total, what)
        except (InvalidInput, DimensionMismatch) as exc:
            findings.append(Finding(type(exc).__name__, str(exc)))

    if qcp.full_rank_assumed and m >= n:
        findings.append(
            Finding("InvalidInput", f"declared full row rank needs n > m, got n={n}, m={m}")
        )

    # positive definiteness: cheap necessary check here, the factorization is
    # the authoritative one
    diag = _structured_diagonal(qcp.P)
    if np.any(diag <= 0):
        findings.append(Finding("NotPositiveDefinite", "P has a nonpositive diagonal entry"))

    findings.extend(scaling_findings(qcp.P, qcp.set_blocks))
    return findings


def _structured_diagonal(P: StructuredSpdMatrix) -> np.ndarray:
    if P.kind == DIAGONAL:
        return np.asarray(P.entries)
    if P.kind == BLOCK_DIAGONAL:
        return np.concatenate([np.diag(b) for b in P.entries])
    return np.diag(P.entries)


def _p_block_spans(P: StructuredSpdMatrix):
    """Index spans of P's coupled groups: 1-wide for diagonal entries."""
    if P.kind == DIAGONAL:
        return [(i, i + 1) for i in range(P.dim)]
    if P.kind == BLOCK_DIAGONAL:
        spans, o = [], 0
        for b in P.entries:
            spans.append((o, o + b.shape[0]))
            o += b.shape[0]
        return spans
    return [(0, P.dim)]


def scaling_findings(P: StructuredSpdMatrix, set_blocks) -> list:
    """Check that the Cholesky factor of P acts diagonally on each non-free
    set block (and uniformly on balls and second-order-cone blocks).

    The factor inherits P's structure, so the check is structural: any P
    coupling that touches a non-free set block, or crosses its boundary,
    breaks the closed-form projection.
    """
    findings = []
    spans = _p_block_spans(P)
    diag = _structured_diagonal(P)
    o = 0
    for k, blk in enumerate(set_blocks):
        lo, hi = o, o + blk.dim
        o = hi
        if blk.tag == _cones.SET_FREE:
            continue
        for (a, b) in spans:
            if b - a == 1 or b <= lo or a >= hi:
                continue
            findings.append(
                Finding(
                    "IncompatibleScaling",
                    f"set block {k} ({blk.tag}) overlaps a coupled block of P "
                    f"spanning [{a}, {b})",
                )
            )
            break
        else:
            if blk.tag in (_cones.SET_BALL, _cones.SET_SOC):
                seg = diag[lo:hi]
                if seg.size and seg.max() != seg.min():
                    findings.append(
                        Finding(
                            "IncompatibleScaling",
                            f"set block {k} ({blk.tag}) needs a uniform diagonal of P, "
                            f"got spread [{seg.min()}, {seg.max()}]",
                        )
                    )
    return findings


# ---------------------------------------------------------------------------
# problem file format (JSON); field names are part of the public interface
# and documented in docs/problem_format.md

_CONE_TAGS = set(_cones.CONE_TAGS)
_SET_TAGS = set(_cones.SET_TAGS)


def _p_to_json(P: StructuredSpdMatrix):
    if P.kind == DIAGONAL:
        return {"kind": P.kind, "entries": list(map(float, P.entries))}
    if P.kind == BLOCK_DIAGONAL:
        return {
            "kind": P.kind,
            "entries": [
                {"dim": int(b.shape[0]), "entries": [float(v) for v in b.ravel()]}
                for b in P.entries
            ],
        }
    return {"kind": P.kind, "entries": [float(v) for v in np.asarray(P.entries).ravel()]}


def _p_from_json(obj, n):
    kind = obj.get("kind")
    entries = obj.get("entries")
    if kind == DIAGONAL:
        return StructuredSpdMatrix.diagonal(as_vector(entries, "P.entries", n))
    if kind == BLOCK_DIAGONAL:
        blocks = []
        for blk in entries:
            d = int(blk["dim"])
            blocks.append(np.asarray(blk["entries"], float).reshape(d, d))
        P = StructuredSpdMatrix.block_diagonal(blocks)
        if P.dim != n:
            raise DimensionMismatch(f"P blocks cover {P.dim} entries, expected {n}")
        return P
    if kind == DENSE:
        flat = np.asarray(entries, float)
        if flat.size != n * n:
            raise DimensionMismatch(f"dense P has {flat.size} entries, expected {n * n}")
        return StructuredSpdMatrix.dense(flat.reshape(n, n))
    raise InvalidInput(f"unknown P kind {kind!r}")


def _set_block_to_json(blk: SeparableSetBlock):
    params = {}
    if blk.tag == _cones.SET_BOX:
        params = {"lower": list(map(float, blk.lower)), "upper": list(map(float, blk.upper))}
    elif blk.tag == _cones.SET_BALL:
        params = {"radius": float(blk.radius)}
    elif blk.tag == _cones.SET_HALFSPACE:
        params = {"normal": list(map(float, blk.normal)), "bound": float(blk.bound)}
    return {"tag": blk.tag, "dim": blk.dim, "params": params}


def _set_block_from_json(obj):
    tag = obj.get("tag")
    dim = int(obj.get("dim", 0))
    params = obj.get("params") or {}
    if tag not in _SET_TAGS:
        raise InvalidInput(f"unknown set tag {tag!r}")
    if tag == _cones.SET_BOX:
        return SeparableSetBlock(tag, dim, lower=np.asarray(params["lower"], float),
                                 upper=np.asarray(params["upper"], float))
    if tag == _cones.SET_BALL:
        return SeparableSetBlock(tag, dim, radius=float(params["radius"]))
    if tag == _cones.SET_HALFSPACE:
        return SeparableSetBlock(tag, dim, normal=np.asarray(params["normal"], float),
                                 bound=float(params["bound"]))
    return SeparableSetBlock(tag, dim)


def dump_problem(qcp: Qcp, path) -> None:
    """Write a problem to the JSON problem format (full float precision)."""
    doc = {
        "n": int(qcp.n),
        "m": int(qcp.m),
        "P": _p_to_json(qcp.P),
        "p": list(map(float, qcp.p)),
        "G": [float(v) for v in np.asarray(qcp.G).ravel()],
        "g": list(map(float, qcp.g)),
        "cone_blocks": [{"tag": b.tag, "dim": b.dim} for b in qcp.cone_blocks],
        "set_blocks": [_set_block_to_json(b) for b in qcp.set_blocks],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_problem(path) -> Qcp:
    """Read a problem from the JSON problem format."""
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InvalidInput(f"problem file is not valid JSON: {exc}") from None
    try:
        n = int(doc["n"])
        m = int(doc["m"])
        P = _p_from_json(doc["P"], n)
        p = as_vector(doc["p"], "p", n)
        G = np.asarray(doc["G"], float)
        if G.size != m * n:
            raise DimensionMismatch(f"G has {G.size} entries, expected {m}*{n}")
        G = G.reshape(m, n)
        g = as_vector(doc["g"], "g", m)
        offsets = np.cumsum([0] + [int(b["dim"]) for b in doc["cone_blocks"]])
        cone_blocks = [
            ConeBlock(b["tag"], int(b["dim"]), int(off))
            for b, off in zip(doc["cone_blocks"], offsets)
        ]
        set_blocks = [_set_block_from_json(b) for b in doc["set_blocks"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidInput(f"malformed problem file: {exc!r}") from None
    qcp = Qcp(P=P, p=p, G=G, g=g, cone_blocks=cone_blocks, set_blocks=set_blocks)
    bad = [f for f in validate(qcp) if f.code == "DimensionMismatch"]
    if bad:
        raise InvalidInput("; ".join(str(f) for f in bad))
    return qcp


def kkt_residual(qcp: Qcp, xi, mu) -> float:
    """Original-problem KKT residual of a recovered primal-dual pair.

    Measures stationarity through the projected gradient (which folds in the
    set-block multipliers) together with primal cone feasibility.  Intended
    for zero-cone and box/free problems; for other cones it still reports
    stationarity and feasibility but not complementarity.
    """
    xi = as_vector(xi, "xi", qcp.n)
    mu = as_vector(mu, "mu", qcp.m)
    s = qcp.P.matvec(xi) + qcp.p + qcp.G.T @ mu
    proj = _cones.stacked_set_projector(qcp.set_blocks)
    stationarity = float(np.linalg.norm(xi - proj(xi - s)))
    feasibility = _cones.cone_distance(qcp.cone_blocks, qcp.G @ xi - qcp.g)
    return max(stationarity, feasibility)
