"""Windows, orderings, cluster decomposition and annulus bookkeeping.

Everything here works on plain ``(n, d)`` float arrays of positions; marks
live one level up in :mod:`hyperpot.sampling`.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree


def as_points(points, dim: int | None = None) -> np.ndarray:
    """Coerce ``points`` to a float array of shape ``(n, d)``."""
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 1:
        # a lone point, or an empty list
        arr = arr.reshape(0, dim or 0) if arr.size == 0 else arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ValueError(f"expected (n, d) points, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("point coordinates must be finite")
    return arr


# ---------------------------------------------------------------------------
# windows


class Window:
    """Bounded region of R^d with a membership test."""

    dim: int

    def contains(self, points) -> np.ndarray:
        raise NotImplementedError

    def distance(self, points) -> np.ndarray:
        """Euclidean distance from each point to the region (0 inside)."""
        raise NotImplementedError

    @property
    def volume(self) -> float:
        raise NotImplementedError

    def sample_uniform(self, rng: np.random.Generator, n: int) -> np.ndarray:
        raise NotImplementedError

    def to_json(self) -> dict:
        raise NotImplementedError

    def translate(self, z) -> "Window":
        raise NotImplementedError


@dataclass(frozen=True)
class Box(Window):
    """Closed axis-aligned box ``[lo, hi]``."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        if len(lo) != len(hi) or not lo:
            raise ValueError("box corners must have equal, positive dimension")
        if any(a > b for a, b in zip(lo, hi)):
            raise ValueError(f"empty box: lo={lo} hi={hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def centered(cls, side: float, dim: int = 2, center=None) -> "Box":
        c = np.zeros(dim) if center is None else np.asarray(center, dtype=float)
        h = side / 2.0
        return cls(tuple(c - h), tuple(c + h))

    @property
    def dim(self) -> int:
        return len(self.lo)

    def contains(self, points) -> np.ndarray:
        p = as_points(points, self.dim)
        return np.all((p >= np.array(self.lo)) & (p <= np.array(self.hi)), axis=1)

    def distance(self, points) -> np.ndarray:
        p = as_points(points, self.dim)
        gap = np.maximum(np.array(self.lo) - p, 0.0) + np.maximum(p - np.array(self.hi), 0.0)
        return np.sqrt(np.sum(gap * gap, axis=1))

    @property
    def volume(self) -> float:
        return float(np.prod(np.array(self.hi) - np.array(self.lo)))

    def sample_uniform(self, rng, n):
        return rng.uniform(self.lo, self.hi, size=(n, self.dim))

    def to_json(self) -> dict:
        return {"kind": "box", "lo": list(self.lo), "hi": list(self.hi)}

    def translate(self, z) -> "Box":
        z = np.asarray(z, dtype=float)
        return Box(tuple(np.array(self.lo) + z), tuple(np.array(self.hi) + z))


@dataclass(frozen=True)
class Ball(Window):
    """Closed Euclidean ball."""

    center: tuple[float, ...]
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        if not self.radius >= 0:
            raise ValueError("ball radius must be nonnegative")

    @property
    def dim(self) -> int:
        return len(self.center)

    def contains(self, points) -> np.ndarray:
        p = as_points(points, self.dim)
        return np.linalg.norm(p - np.array(self.center), axis=1) <= self.radius

    def distance(self, points) -> np.ndarray:
        p = as_points(points, self.dim)
        return np.maximum(np.linalg.norm(p - np.array(self.center), axis=1) - self.radius, 0.0)

    @property
    def volume(self) -> float:
        d = self.dim
        return math.pi ** (d / 2) / math.gamma(d / 2 + 1) * self.radius**d

    def sample_uniform(self, rng, n):
        d = self.dim
        g = rng.standard_normal((n, d))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        rad = self.radius * rng.uniform(size=(n, 1)) ** (1.0 / d)
        return np.array(self.center) + g * rad

    def to_json(self) -> dict:
        return {"kind": "ball", "center": list(self.center), "radius": self.radius}

    def translate(self, z) -> "Ball":
        return Ball(tuple(np.array(self.center) + np.asarray(z, dtype=float)), self.radius)


@dataclass(frozen=True)
class PointWindow(Window):
    """A finite set of sites, used as a zero-volume region (``Λ = {x}``)."""

    sites: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        sites = tuple(tuple(float(v) for v in s) for s in self.sites)
        if not sites:
            raise ValueError("point window needs at least one site")
        object.__setattr__(self, "sites", sites)

    @classmethod
    def of(cls, *points) -> "PointWindow":
        return cls(tuple(tuple(np.asarray(p, dtype=float)) for p in points))

    @property
    def dim(self) -> int:
        return len(self.sites[0])

    def contains(self, points) -> np.ndarray:
        p = as_points(points, self.dim)
        s = np.array(self.sites)
        return np.any(np.all(p[:, None, :] == s[None, :, :], axis=2), axis=1)

    def distance(self, points) -> np.ndarray:
        p = as_points(points, self.dim)
        s = np.array(self.sites)
        return np.min(np.linalg.norm(p[:, None, :] - s[None, :, :], axis=2), axis=1)

    @property
    def volume(self) -> float:
        return 0.0

    def sample_uniform(self, rng, n):
        return np.zeros((0, self.dim))

    def to_json(self) -> dict:
        return {"kind": "points", "sites": [list(s) for s in self.sites]}

    def translate(self, z) -> "PointWindow":
        z = np.asarray(z, dtype=float)
        return PointWindow(tuple(tuple(np.array(s) + z) for s in self.sites))


@dataclass(frozen=True)
class Mollified(Window):
    """Open r-neighbourhood ``{x : dist(x, base) < r}`` of a window."""

    base: Window
    r: float

    @property
    def dim(self) -> int:
        return self.base.dim

    def contains(self, points) -> np.ndarray:
        return self.base.distance(points) < self.r

    def distance(self, points) -> np.ndarray:
        return np.maximum(self.base.distance(points) - self.r, 0.0)

    def to_json(self) -> dict:
        return {"kind": "mollified", "base": self.base.to_json(), "r": self.r}


def mollify(window: Window, r: float) -> Mollified:
    if not r > 0:
        raise ValueError("mollification radius must be positive")
    return Mollified(window, float(r))


def window_from_json(obj: dict) -> Window:
    kind = obj["kind"]
    if kind == "box":
        return Box(tuple(obj["lo"]), tuple(obj["hi"]))
    if kind == "ball":
        return Ball(tuple(obj["center"]), float(obj["radius"]))
    if kind == "points":
        return PointWindow(tuple(tuple(s) for s in obj["sites"]))
    if kind == "mollified":
        return Mollified(window_from_json(obj["base"]), float(obj["r"]))
    raise ValueError(f"unknown window kind {kind!r}")


def parse_window(spec: str, dim: int | None = None) -> Window:
    """Parse ``box:x0,y0,x1,y1`` or ``ball:cx,cy,R``."""
    kind, _, body = spec.partition(":")
    vals = [float(v) for v in body.split(",") if v.strip()]
    if kind == "box":
        if len(vals) % 2 or not vals:
            raise ValueError(f"bad box spec {spec!r}")
        k = len(vals) // 2
        win = Box(tuple(vals[:k]), tuple(vals[k:]))
    elif kind == "ball":
        if len(vals) < 2:
            raise ValueError(f"bad ball spec {spec!r}")
        win = Ball(tuple(vals[:-1]), vals[-1])
    else:
        raise ValueError(f"unknown window kind in {spec!r}")
    if dim is not None and win.dim != dim:
        raise ValueError(f"window {spec!r} has dimension {win.dim}, expected {dim}")
    return win


# ---------------------------------------------------------------------------
# orderings


class Ordering(enum.Enum):
    CYCLIC = "cyclic"
    LEXICOGRAPHIC = "lexicographic"


def _hyperspherical_angles(x: np.ndarray) -> tuple[float, ...]:
    d = len(x)
    if d == 1:
        return ()
    angles = []
    for i in range(d - 2):
        angles.append(math.atan2(math.sqrt(float(np.sum(x[i + 1 :] ** 2))), float(x[i])))
    last = math.atan2(float(x[-1]), float(x[-2]))
    angles.append(last + 2 * math.pi if last < 0 else last)
    return tuple(angles)


def order_key(ordering: Ordering, x) -> tuple:
    """Sort key realising the total order; equal keys only for equal points."""
    x = np.asarray(x, dtype=float)
    coords = tuple(float(v) for v in x)
    if ordering is Ordering.LEXICOGRAPHIC:
        return coords
    return (float(np.linalg.norm(x)),) + _hyperspherical_angles(x) + coords


def order_less(ordering: Ordering, x, y) -> bool:
    kx, ky = order_key(ordering, x), order_key(ordering, y)
    if tuple(np.asarray(x, dtype=float)) == tuple(np.asarray(y, dtype=float)):
        raise ValueError("ordering of identical points is undefined")
    return kx < ky


def order_ranks(ordering: Ordering, points) -> np.ndarray:
    """Rank of each point under ``ordering`` (0 = least)."""
    p = as_points(points)
    keys = [order_key(ordering, row) for row in p]
    idx = sorted(range(len(keys)), key=keys.__getitem__)
    ranks = np.empty(len(keys), dtype=int)
    ranks[idx] = np.arange(len(keys))
    return ranks


def least_index(ordering: Ordering, points) -> int:
    p = as_points(points)
    if len(p) == 0:
        raise ValueError("empty configuration has no least element")
    return min(range(len(p)), key=lambda i: order_key(ordering, p[i]))


# ---------------------------------------------------------------------------
# clusters


def adjacency_pairs(points, radius: float) -> np.ndarray:
    """Index pairs ``(i, j)``, ``i < j``, at distance strictly below ``radius``."""
    p = as_points(points)
    n = len(p)
    if n < 2:
        return np.zeros((0, 2), dtype=int)
    if n <= 64:
        diff = p[:, None, :] - p[None, :, :]
        dist = np.sqrt(np.sum(diff * diff, axis=2))
        i, j = np.nonzero(np.triu(dist < radius, k=1))
        return np.stack([i, j], axis=1)
    pairs = cKDTree(p).query_pairs(radius, output_type="ndarray")
    if len(pairs) == 0:
        return np.zeros((0, 2), dtype=int)
    d = np.linalg.norm(p[pairs[:, 0]] - p[pairs[:, 1]], axis=1)
    return pairs[d < radius]


def neighbour_lists(points, radius: float) -> list[set[int]]:
    n = len(as_points(points))
    nbrs: list[set[int]] = [set() for _ in range(n)]
    for i, j in adjacency_pairs(points, radius):
        nbrs[i].add(int(j))
        nbrs[j].add(int(i))
    return nbrs


def cluster_labels(points, r: float) -> np.ndarray:
    """Component label per point for the ``< 2r`` connection graph."""
    if not r > 0:
        raise ValueError("cluster radius parameter r must be positive")
    p = as_points(points)
    n = len(p)
    if n == 0:
        return np.zeros(0, dtype=int)
    pairs = adjacency_pairs(p, 2.0 * r)
    if n <= 64:
        # sparse-graph setup dominates for the small windows of the kernels
        parent = list(range(n))

        def find(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        for i, j in pairs.tolist():
            ri, rj = find(i), find(j)
            if ri != rj:
                parent[max(ri, rj)] = min(ri, rj)
        roots = [find(i) for i in range(n)]
        _, labels = np.unique(roots, return_inverse=True)
        return labels
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, labels = connected_components(graph, directed=False)
    return labels


@dataclass(frozen=True)
class ClusterDecomposition:
    """Partition of a grey configuration into maximal 2r-connected blocks.

    Blocks are index tuples into the original point array, each sorted, and
    the list of blocks is sorted by smallest index so the result does not
    depend on the labelling produced by the graph routine.
    """

    blocks: tuple[tuple[int, ...], ...]
    r: float

    def __len__(self) -> int:
        return len(self.blocks)

    def __iter__(self):
        return iter(self.blocks)

    def as_sets(self, points) -> set[frozenset]:
        p = as_points(points)
        return {frozenset(tuple(p[i]) for i in b) for b in self.blocks}


def cluster_decompose(points, r: float) -> ClusterDecomposition:
    labels = cluster_labels(points, r)
    groups: dict[int, list[int]] = {}
    for i, lab in enumerate(labels):
        groups.setdefault(int(lab), []).append(i)
    blocks = sorted(tuple(g) for g in groups.values())
    return ClusterDecomposition(tuple(blocks), float(r))


def connected_subsets(nbrs: Sequence[set[int]], vertices: Sequence[int] | None = None,
                      root: int | None = None) -> Iterator[tuple[int, ...]]:
    """Enumerate every connected induced vertex subset exactly once.

    ``nbrs`` is an adjacency list; enumeration is restricted to ``vertices``
    when given. With ``root`` set only subsets containing ``root`` are
    produced. Uses the extension scheme of the ESU motif-enumeration
    algorithm, so each subset is reached from its smallest allowed vertex.
    """
    allowed = set(range(len(nbrs))) if vertices is None else set(vertices)
    if root is not None:
        if root not in allowed:
            return
        order = [root] + sorted(allowed - {root})
    else:
        order = sorted(allowed)
    pos = {v: k for k, v in enumerate(order)}

    def extend(sub: list[int], sub_nbhd: set[int], ext: list[int], v: int):
        yield tuple(sorted(sub))
        ext = list(ext)
        while ext:
            w = ext.pop()
            new = [u for u in nbrs[w]
                   if u in allowed and pos[u] > pos[v] and u not in sub and u not in sub_nbhd]
            yield from extend(sub + [w], sub_nbhd | nbrs[w] | {w}, ext + new, v)

    starts = order[:1] if root is not None else order
    for v in starts:
        ext = [u for u in nbrs[v] if u in allowed and pos[u] > pos[v]]
        yield from extend([v], set(nbrs[v]) | {v}, ext, v)


# ---------------------------------------------------------------------------
# annuli


def sup_norm(v) -> float:
    return float(np.max(np.abs(np.asarray(v, dtype=float))))


def euclidean_norm(v) -> float:
    return float(np.linalg.norm(np.asarray(v, dtype=float)))


@dataclass
class RadiiSchedule:
    """Strictly increasing, cofinal radii ``m -> r_m`` for ``m >= 1``.

    ``radii`` lists the first few radii explicitly; beyond them the schedule
    continues linearly with increment ``step``. ``r_0 = 0`` by convention.
    """

    radii: list[float] = field(default_factory=list)
    step: float = 1.0

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("schedule step must be positive")
        prev = 0.0
        for r in self.radii:
            if not r > prev:
                raise ValueError("radii schedule must be strictly increasing and positive")
            prev = r

    @classmethod
    def linear(cls, step: float = 1.0) -> "RadiiSchedule":
        return cls([], step)

    def radius(self, m: int) -> float:
        if m < 0:
            raise ValueError("annulus index must be nonnegative")
        if m == 0:
            return 0.0
        if m <= len(self.radii):
            return self.radii[m - 1]
        last = self.radii[-1] if self.radii else 0.0
        return last + (m - len(self.radii)) * self.step

    def index(self, dist: float) -> int:
        """Smallest ``m >= 1`` with ``dist <= r_m``."""
        if dist < 0 or not math.isfinite(dist):
            raise ValueError("distance must be finite and nonnegative")
        for m, r in enumerate(self.radii, start=1):
            if dist <= r:
                return m
        last = self.radii[-1] if self.radii else 0.0
        k = max(1, math.ceil((dist - last) / self.step))
        m = len(self.radii) + k
        # ceil can land one off when (dist - last) / step is not exact
        while m > 1 and dist <= self.radius(m - 1):
            m -= 1
        while dist > self.radius(m):
            m += 1
        return m


def annulus_index(ordering: Ordering, anchor, point, schedule: RadiiSchedule,
                  side: str = ">=", norm=sup_norm) -> int:
    """Annulus number of ``point`` around ``anchor``.

    ``side=">="`` requires ``point`` at or above ``anchor`` (the
    ``A^>=``-annuli), ``side="<"`` requires it strictly below.
    """
    anchor = np.asarray(anchor, dtype=float)
    point = np.asarray(point, dtype=float)
    if tuple(anchor) == tuple(point):
        raise ValueError("anchor and point coincide")
    below = order_less(ordering, point, anchor)
    if side == ">=" and below:
        raise ValueError("point lies below the anchor; use side='<'")
    if side == "<" and not below:
        raise ValueError("point does not lie below the anchor")
    if side not in (">=", "<"):
        raise ValueError(f"unknown side {side!r}")
    return schedule.index(norm(point - anchor))
