"""Cone blocks, separable set blocks, and their closed-form projections.

Cones appear on the constraint side (membership of Gx - g) and are closed
under the positive block-diagonal scalings produced by row normalization, so
cone blocks carry no scale.  Separable sets constrain the decision variable
and do pick up a per-axis scale when the variable is changed to z = R x; the
scale lives on the block and the projection formulas absorb it.
"""

from dataclasses import dataclass, replace

import numpy as np

from .errors import DimensionMismatch, IncompatibleScaling, InvalidInput

CONE_ZERO = "zero"
CONE_ORTHANT = "nonnegative-orthant"
CONE_SOC = "second-order"
CONE_TAGS = (CONE_ZERO, CONE_ORTHANT, CONE_SOC)

SET_FREE = "free"
SET_BOX = "box"
SET_BALL = "ball"
SET_HALFSPACE = "halfspace"
SET_SOC = "second-order-cone"
SET_TAGS = (SET_FREE, SET_BOX, SET_BALL, SET_HALFSPACE, SET_SOC)


@dataclass(frozen=True)
class ConeBlock:
    """One block of a Cartesian product of cones.

    Second-order blocks are stacked as (vector part, scalar part) and need
    dimension at least 2.  ``offset`` is the block's starting row.
    """

    tag: str
    dim: int
    offset: int = 0

    def __post_init__(self):
        if self.tag not in CONE_TAGS:
            raise InvalidInput(f"unknown cone tag {self.tag!r}")
        if self.dim < 1:
            raise InvalidInput("cone block dimension must be positive")
        if self.tag == CONE_SOC and self.dim < 2:
            raise InvalidInput("second-order cone blocks need dimension >= 2")
        if self.offset < 0:
            raise InvalidInput("cone block offset must be nonnegative")


@dataclass(frozen=True)
class SeparableSetBlock:
    """One block of a separable constraint set, with its diagonal scale.

    ``scale`` is the diagonal of the variable transform acting on this block
    (all ones for an untransformed problem).  Boxes and halfspaces accept any
    positive diagonal scale; balls and second-order-cone blocks only keep a
    closed-form projection under a uniform scale.
    """

    tag: str
    dim: int
    scale: np.ndarray = None
    lower: np.ndarray = None
    upper: np.ndarray = None
    radius: float = None
    normal: np.ndarray = None
    bound: float = None

    def __post_init__(self):
        if self.tag not in SET_TAGS:
            raise InvalidInput(f"unknown set tag {self.tag!r}")
        if self.dim < 1:
            raise InvalidInput("set block dimension must be positive")
        if self.tag == SET_SOC and self.dim < 2:
            raise InvalidInput("second-order-cone set blocks need dimension >= 2")
        scale = np.ones(self.dim) if self.scale is None else np.asarray(self.scale, float)
        if scale.shape != (self.dim,):
            raise DimensionMismatch("scale must have one entry per axis")
        if np.any(scale <= 0):
            raise InvalidInput("scale entries must be positive")
        object.__setattr__(self, "scale", scale)
        if self.tag == SET_BOX:
            lo = np.asarray(self.lower, float)
            up = np.asarray(self.upper, float)
            if lo.shape != (self.dim,) or up.shape != (self.dim,):
                raise DimensionMismatch("box bounds must have one entry per axis")
            if np.any(lo > up):
                raise InvalidInput("box needs lower <= upper elementwise")
            object.__setattr__(self, "lower", lo)
            object.__setattr__(self, "upper", up)
        elif self.tag == SET_BALL:
            if self.radius is None or not self.radius > 0:
                raise InvalidInput("ball needs a positive radius")
        elif self.tag == SET_HALFSPACE:
            a = np.asarray(self.normal, float)
            if a.shape != (self.dim,):
                raise DimensionMismatch("halfspace normal must have one entry per axis")
            if not np.linalg.norm(a) > 0:
                raise InvalidInput("halfspace normal must be nonzero")
            if self.bound is None or not np.isfinite(self.bound):
                raise InvalidInput("halfspace needs a finite bound")
            object.__setattr__(self, "normal", a)

    def with_scale(self, scale):
        return replace(self, scale=np.asarray(scale, float))


def free_set(dim):
    return SeparableSetBlock(SET_FREE, dim)


def box_set(lower, upper):
    lower = np.atleast_1d(np.asarray(lower, float))
    return SeparableSetBlock(SET_BOX, lower.size, lower=lower, upper=upper)


def ball_set(dim, radius):
    return SeparableSetBlock(SET_BALL, dim, radius=radius)


def halfspace_set(normal, bound):
    normal = np.atleast_1d(np.asarray(normal, float))
    return SeparableSetBlock(SET_HALFSPACE, normal.size, normal=normal, bound=bound)


def soc_set(dim):
    return SeparableSetBlock(SET_SOC, dim)


def _soc_project(x):
    v, t = x[:-1], x[-1]
    nv = np.linalg.norm(v)
    if nv <= t:
        return x.copy()
    if nv <= -t:
        # includes the boundary tie nv == -t, which projects to the origin
        return np.zeros_like(x)
    c = 0.5 * (nv + t)
    out = np.empty_like(x)
    out[:-1] = (c / nv) * v
    out[-1] = c
    return out


def uniform_scale(block: SeparableSetBlock) -> float:
    """The single scale factor of a block, or IncompatibleScaling if mixed."""
    s = block.scale
    if s.max() != s.min():
        raise IncompatibleScaling(
            f"{block.tag} set block needs a uniform scale, got spread "
            f"[{s.min()}, {s.max()}]"
        )
    return float(s[0])


def _check_block_arg(block, x):
    x = np.asarray(x, dtype=float)
    if x.shape != (block.dim,):
        raise DimensionMismatch(f"point has shape {x.shape}, expected ({block.dim},)")
    return x


def project_set(block: SeparableSetBlock, x) -> np.ndarray:
    """Euclidean projection of x onto the scaled set block."""
    x = _check_block_arg(block, x)
    if block.tag == SET_FREE:
        return x.copy()
    if block.tag == SET_BOX:
        return np.clip(x, block.scale * block.lower, block.scale * block.upper)
    if block.tag == SET_BALL:
        r = uniform_scale(block) * block.radius
        nx = np.linalg.norm(x)
        if nx <= r:
            return x.copy()
        return (r / nx) * x
    if block.tag == SET_HALFSPACE:
        a = block.normal / block.scale
        gap = a @ x - block.bound
        if gap <= 0:
            return x.copy()
        return x - (gap / (a @ a)) * a
    uniform_scale(block)  # SOC set: cone is scale-invariant under uniform scaling
    return _soc_project(x)


def project_cone(block: ConeBlock, x) -> np.ndarray:
    """Euclidean projection of x onto the cone block."""
    x = _check_block_arg(block, x)
    if block.tag == CONE_ZERO:
        return np.zeros_like(x)
    if block.tag == CONE_ORTHANT:
        return np.maximum(x, 0.0)
    return _soc_project(x)


def project_polar(block: ConeBlock, x) -> np.ndarray:
    """Projection onto the polar cone, via the Moreau decomposition."""
    x = _check_block_arg(block, x)
    return x - project_cone(block, x)


def check_contiguous(blocks, total, what="block"):
    """Verify blocks tile [0, total) in order; returns silently when they do."""
    o = 0
    for b in blocks:
        start = getattr(b, "offset", o)
        if start != o:
            raise InvalidInput(f"{what}s must be contiguous: expected offset {o}, got {start}")
        o += b.dim
    if o != total:
        raise DimensionMismatch(f"{what}s cover {o} entries, expected {total}")


def cone_distance(blocks, v) -> float:
    """Euclidean distance from a stacked vector to the product cone."""
    v = np.asarray(v, dtype=float)
    d2 = 0.0
    o = 0
    for b in blocks:
        seg = v[o : o + b.dim]
        d2 += float(np.sum((project_cone(b, seg) - seg) ** 2))
        o += b.dim
    return np.sqrt(d2)


def stacked_set_projector(blocks):
    """Build a fast projector for a full stacked variable.

    When every block is a box or free, the projection collapses to one clip
    against precomputed bound vectors; otherwise a per-block loop is used.
    """
    n = sum(b.dim for b in blocks)
    if all(b.tag in (SET_FREE, SET_BOX) for b in blocks):
        lo = np.full(n, -np.inf)
        up = np.full(n, np.inf)
        o = 0
        for b in blocks:
            if b.tag == SET_BOX:
                lo[o : o + b.dim] = b.scale * b.lower
                up[o : o + b.dim] = b.scale * b.upper
            o += b.dim
        return lambda x: np.clip(x, lo, up)

    spans = []
    o = 0
    for b in blocks:
        spans.append((b, o, o + b.dim))
        o += b.dim

    def project(x):
        out = np.empty_like(x)
        for b, lo_, hi_ in spans:
            out[lo_:hi_] = project_set(b, x[lo_:hi_])
        return out

    return project


def stacked_polar_projector(blocks):
    """Build a fast projector onto the product of polar cones.

    Zero-cone blocks have polar equal to the whole space (identity), and
    orthant blocks clamp above at zero; both vectorize across blocks.  Only
    second-order blocks need per-block work.
    """
    spans = []
    o = 0
    for b in blocks:
        spans.append((b, o, o + b.dim))
        o += b.dim
    if all(b.tag == CONE_ZERO for b in blocks):
        return lambda y: y.copy()
    if all(b.tag in (CONE_ZERO, CONE_ORTHANT) for b in blocks):
        cap = np.full(o, np.inf)
        for b, lo_, hi_ in spans:
            if b.tag == CONE_ORTHANT:
                cap[lo_:hi_] = 0.0
        return lambda y: np.minimum(y, cap)

    def project(y):
        out = np.empty_like(y)
        for b, lo_, hi_ in spans:
            out[lo_:hi_] = project_polar(b, y[lo_:hi_])
        return out

    return project
