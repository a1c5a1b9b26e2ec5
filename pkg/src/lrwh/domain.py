"""Cartesian multiblock domains, face tagging and point sources.

Blocks are indexed by integer tuples ``(i, j)`` or ``(i, j, k)``.  Each block
is a uniform grid of ``n`` points per axis; neighbouring blocks share their
interface gridline, so a domain of ``m`` blocks along an axis of length ``L``
has spacing ``h = L / (m (n - 1))``.

Faces are addressed as ``(axis, side)`` with ``side`` 0 for the low end and 1
for the high end.  Grid functions are stored with axis 0 along x.
"""

from dataclasses import dataclass, field
import itertools

import numpy as np

from .lowrank import LowRankMatrix, outer
from .tt import TensorTrain, tt_rank1

__all__ = [
    "FACE_KINDS",
    "FaceTag",
    "Block",
    "MultiblockDomain",
    "SourceSpec",
    "build_domain",
    "gaussian_source_lowrank",
    "gaussian_factors",
    "greens_function",
    "ppw",
    "face_name",
    "FACE_NAMES",
    "zero_block_value",
]

FACE_KINDS = ("nonreflecting", "neumann", "dirichlet", "interface", "damped")

FACE_NAMES = {
    (0, 0): "west",
    (0, 1): "east",
    (1, 0): "south",
    (1, 1): "north",
    (2, 0): "bottom",
    (2, 1): "top",
}
_FACE_BY_NAME = {v: k for k, v in FACE_NAMES.items()}


def face_name(face):
    return FACE_NAMES[face]


def _face_key(face):
    if isinstance(face, str):
        try:
            return _FACE_BY_NAME[face]
        except KeyError:
            raise ValueError(f"unknown face name {face!r}") from None
    return tuple(face)


@dataclass(frozen=True)
class FaceTag:
    """Boundary treatment of one block face.

    ``neighbor`` is the adjacent block index for interfaces.  ``data`` is an
    optional callable ``g(*coords)`` giving Dirichlet values on the face; a
    missing callable means homogeneous data.
    """

    kind: str
    neighbor: tuple = None
    data: object = None

    def __post_init__(self):
        if self.kind not in FACE_KINDS:
            raise ValueError(f"unknown face tag {self.kind!r}; expected one of {FACE_KINDS}")
        if self.kind == "interface" and self.neighbor is None:
            raise ValueError("interface tag needs a neighbor index")


@dataclass(frozen=True)
class Block:
    index: tuple
    wave_speed: float
    faces: dict
    origin: tuple

    def __post_init__(self):
        if not self.wave_speed > 0:
            raise ValueError(f"block {self.index}: wave speed must be positive, got {self.wave_speed}")

    def tag(self, axis, side):
        return self.faces[(axis, side)]


@dataclass(frozen=True)
class MultiblockDomain:
    dim: int
    extents: tuple
    partition: tuple
    n: int
    h: float
    blocks: dict = field(repr=False)
    order: int = 4
    tau: float = 15.0

    @property
    def block_indices(self):
        return sorted(self.blocks)

    def block(self, index):
        return self.blocks[tuple(index)]

    def axis_grid(self, index, axis):
        b = self.blocks[tuple(index)]
        return b.origin[axis] + self.h * np.arange(self.n)

    def grids(self, index):
        return tuple(self.axis_grid(index, a) for a in range(self.dim))

    @property
    def block_shape(self):
        return (self.n,) * self.dim

    def neighbors(self, index):
        b = self.blocks[tuple(index)]
        return {f: t.neighbor for f, t in b.faces.items() if t.kind == "interface"}

    def faces_of_kind(self, index, kind):
        return [f for f, t in self.blocks[tuple(index)].faces.items() if t.kind == kind]


def _resolve_speed(speed, index):
    if callable(speed):
        return float(speed(index))
    if isinstance(speed, dict):
        return float(speed.get(tuple(index), speed.get("default", 1.0)))
    return float(speed)


def build_domain(config):
    """Validate a configuration mapping and build the domain.

    Keys: ``dim`` (2 or 3), ``extents`` (per-axis ``(lo, hi)``), ``partition``
    (blocks per axis), ``n`` (points per axis per block), ``wave_speed``
    (scalar, mapping of block index to speed with optional ``"default"``, or
    callable), ``boundary`` (outer face name to tag kind, or to a
    :class:`FaceTag`), optional ``face_overrides`` mapping ``(index, face)`` to
    a :class:`FaceTag`, ``order`` and ``tau``.
    """
    dim = int(config.get("dim", 2))
    if dim not in (2, 3):
        raise ValueError(f"dim must be 2 or 3, got {dim}")
    extents = tuple((float(lo), float(hi)) for lo, hi in config["extents"])
    partition = tuple(int(m) for m in config["partition"])
    n = int(config["n"])
    if len(extents) != dim or len(partition) != dim:
        raise ValueError(f"extents and partition must both have {dim} entries")
    if any(m < 1 for m in partition):
        raise ValueError(f"partition entries must be positive, got {partition}")
    if n < 2:
        raise ValueError(f"n must be at least 2, got {n}")
    hs = []
    for (lo, hi), m in zip(extents, partition):
        if not hi > lo:
            raise ValueError(f"empty extent ({lo}, {hi})")
        hs.append((hi - lo) / (m * (n - 1)))
    h = hs[0]
    if not np.allclose(hs, h, rtol=1e-12, atol=0):
        raise ValueError(f"grid spacing differs between axes: {hs}; blocks must be square with aligned grids")

    boundary = {}
    for name, tag in (config.get("boundary") or {}).items():
        boundary[_face_key(name)] = tag if isinstance(tag, FaceTag) else FaceTag(str(tag))
    default_tag = config.get("default_boundary", "nonreflecting")

    blocks = {}
    for index in itertools.product(*(range(m) for m in partition)):
        faces = {}
        for axis in range(dim):
            for side in (0, 1):
                nb = list(index)
                nb[axis] += 1 if side else -1
                if 0 <= nb[axis] < partition[axis]:
                    faces[(axis, side)] = FaceTag("interface", tuple(nb))
                else:
                    t = boundary.get((axis, side), default_tag)
                    faces[(axis, side)] = t if isinstance(t, FaceTag) else FaceTag(str(t))
        origin = tuple(extents[a][0] + index[a] * (n - 1) * h for a in range(dim))
        blocks[index] = dict(faces=faces, origin=origin)

    for (index, face), tag in (config.get("face_overrides") or {}).items():
        index = tuple(index)
        if index not in blocks:
            raise ValueError(f"face override for unknown block {index}")
        blocks[index]["faces"][_face_key(face)] = tag

    speed = config.get("wave_speed", 1.0)
    out = {}
    for index, b in blocks.items():
        out[index] = Block(index=index, wave_speed=_resolve_speed(speed, index), faces=b["faces"], origin=b["origin"])

    _validate_interfaces(out, dim)
    return MultiblockDomain(dim=dim, extents=extents, partition=partition, n=n, h=float(h), blocks=out,
                            order=int(config.get("order", 4)), tau=float(config.get("tau", 15.0)))


def _validate_interfaces(blocks, dim):
    for index, b in blocks.items():
        if len(b.faces) != 2 * dim:
            raise ValueError(f"block {index} has {len(b.faces)} faces, expected {2 * dim}")
        for (axis, side), tag in b.faces.items():
            if tag.kind != "interface":
                continue
            nb = tuple(tag.neighbor)
            expect = list(index)
            expect[axis] += 1 if side else -1
            if nb != tuple(expect) or nb not in blocks:
                raise ValueError(f"block {index} face {face_name((axis, side))}: "
                                 f"interface neighbor {nb} is not the adjacent block")
            back = blocks[nb].faces[(axis, 1 - side)]
            if back.kind != "interface" or tuple(back.neighbor) != index:
                raise ValueError(f"interface between {index} and {nb} is not tagged on both sides")


@dataclass(frozen=True)
class SourceSpec:
    kind: str
    center: tuple
    omega: float
    width: float = None

    def __post_init__(self):
        if self.kind not in ("gaussian_point", "greens_dirichlet"):
            raise ValueError(f"unknown source kind {self.kind!r}")
        if not self.omega > 0:
            raise ValueError(f"omega must be positive, got {self.omega}")
        if self.width is None:
            object.__setattr__(self, "width", 1.0 / (2.0 * self.omega))
        if not self.width > 0:
            raise ValueError("source width must be positive")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))


def gaussian_factors(spec, grids):
    """Per-axis factors and scalar weight of the Gaussian source on ``grids``."""
    d = spec.width
    vecs = [np.exp(-((np.asarray(g) - c) ** 2) / d**2) for g, c in zip(grids, spec.center)]
    return vecs, -1.0 / d**2


def gaussian_source_lowrank(spec, domain, index):
    """Exact rank-one (2D) or rank-(1,1,1,1) (3D) Gaussian source on one block."""
    if spec.kind != "gaussian_point":
        raise ValueError("only gaussian_point sources have a factored forcing")
    if len(spec.center) != domain.dim:
        raise ValueError(f"source center has {len(spec.center)} coordinates, domain is {domain.dim}D")
    vecs, scale = gaussian_factors(spec, domain.grids(index))
    if domain.dim == 2:
        return outer(scale * vecs[0], vecs[1])
    return tt_rank1(scale * vecs[0], vecs[1], vecs[2])


def greens_function(spec, grid, dim=None):
    """Free-space Green's function ``exp(i w r) / (4 pi r)`` as a (real, imag) pair.

    ``grid`` is a tuple of per-axis coordinate vectors; the result lives on
    their tensor product.
    """
    grid = tuple(np.asarray(g, float) for g in grid)
    dim = len(grid) if dim is None else dim
    if len(grid) != dim or len(spec.center) != dim:
        raise ValueError("grid, center and dim disagree")
    mesh = np.meshgrid(*grid, indexing="ij")
    r = np.sqrt(sum((m - c) ** 2 for m, c in zip(mesh, spec.center)))
    if np.any(r == 0):
        raise ValueError("source center coincides with a grid point")
    amp = 1.0 / (4.0 * np.pi * r)
    return amp * np.cos(spec.omega * r), amp * np.sin(spec.omega * r)


def ppw(c, omega, h):
    """Points per wavelength ``2 pi c / (omega h)``."""
    return 2.0 * np.pi * c / (omega * h)


def zero_block_value(domain):
    if domain.dim == 2:
        return LowRankMatrix.zeros(domain.n, domain.n)
    return TensorTrain.zeros(domain.block_shape)
