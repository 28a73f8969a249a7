"""Regrouping of vacuum potentials into absolutely summable hyperedge potentials.

Every finite ``η`` is graded by its least point ``x`` (the anchor) and by the
annulus ``m`` around ``x`` that holds its greatest point. The potential
``Ψ`` attaches to the cell ``ω_{x,m} = {x} ∪ (ω ∩ annulus m above x)`` the
sum of ``Φ(η)`` over the whole grading class. Two variants are provided:

``cyclic``
    points ordered by distance to the origin, then angle; Euclidean balls
    with radii taken from the uniform modulus of the model.
``ti``
    lexicographic (group) ordering with sup-norm boxes ``r_m = m``; the
    result is translation invariant.
"""

from __future__ import annotations

import enum
import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    Ball,
    Box,
    Ordering,
    RadiiSchedule,
    Window,
    euclidean_norm,
    order_key,
    sup_norm,
)
from .models import ModelError, TimeEvolvedWRM, WrmParams, wrm_ab
from .sampling import PLUS, MarkedConfiguration
from .vacuum import HamiltonianReport, VacuumPotential, support_hyperedges
from .vacuum import hamiltonian as vacuum_hamiltonian


class Variant(enum.Enum):
    CYCLIC = "cyclic"
    TRANSLATION_INVARIANT = "ti"

    @classmethod
    def parse(cls, value) -> "Variant":
        if isinstance(value, cls):
            return value
        aliases = {"cyclic": cls.CYCLIC, "ti": cls.TRANSLATION_INVARIANT,
                   "translation-invariant": cls.TRANSLATION_INVARIANT,
                   "lexicographic": cls.TRANSLATION_INVARIANT}
        try:
            return aliases[str(value).lower()]
        except KeyError:
            raise ValueError(f"unknown variant {value!r}") from None


@dataclass(frozen=True)
class GradingCell:
    """Cell ``(x, m)``; ``members`` are indices, anchor first, then by order."""

    anchor: int
    m: int
    members: tuple[int, ...]

    def meets(self, inside: np.ndarray) -> bool:
        return bool(inside[list(self.members)].any())


# ---------------------------------------------------------------------------
# grading


class Grader:
    """Ordering, annulus norm and radii schedule bundled for one point set."""

    def __init__(self, ordering: Ordering, schedule: RadiiSchedule, norm=euclidean_norm):
        self.ordering = ordering
        self.schedule = schedule
        self.norm = norm

    def ranks(self, points: np.ndarray) -> np.ndarray:
        keys = [order_key(self.ordering, p) for p in points]
        idx = sorted(range(len(keys)), key=keys.__getitem__)
        for u, v in zip(idx, idx[1:]):
            if keys[u] == keys[v]:
                raise ValueError("ordering is not strict on this configuration")
        ranks = np.empty(len(keys), dtype=int)
        ranks[idx] = np.arange(len(keys))
        return ranks

    def annulus(self, points: np.ndarray, anchor: int, point: int) -> int:
        return self.schedule.index(self.norm(points[point] - points[anchor]))

    def classify(self, points: np.ndarray, eta, ranks: np.ndarray | None = None
                 ) -> tuple[int, int]:
        """``(anchor, m)`` of the grading class containing ``eta``.

        Singletons sit in ``m = 1``.
        """
        eta = [int(i) for i in eta]
        if not eta:
            raise ValueError("the empty set is not graded")
        if ranks is None:
            ranks = self.ranks(points)
        left = min(eta, key=ranks.__getitem__)
        if len(eta) == 1:
            return left, 1
        right = max(eta, key=ranks.__getitem__)
        return left, self.annulus(points, left, right)

    def grade(self, points: np.ndarray) -> list[GradingCell]:
        """All cells with a nonempty grading class, sorted by (anchor rank, m)."""
        n = len(points)
        if n == 0:
            return []
        ranks = self.ranks(points)
        order = np.argsort(ranks)
        cells = []
        for pos, x in enumerate(order):
            groups: dict[int, list[int]] = defaultdict(list)
            groups[1] = []
            for y in order[pos + 1:]:
                groups[self.annulus(points, int(x), int(y))].append(int(y))
            for m in sorted(groups):
                cells.append(GradingCell(int(x), m, (int(x),) + tuple(groups[m])))
        return cells


def grade(points, ordering: Ordering, schedule: RadiiSchedule, norm=euclidean_norm
          ) -> list[GradingCell]:
    return Grader(ordering, schedule, norm).grade(np.asarray(points, dtype=float))


# ---------------------------------------------------------------------------
# radii


def packing_constant(r: float, dim: int, window: Window | None = None) -> int:
    """``⌈vol(B_{2r}(Λ)) / vol(B_{r/2})⌉``; ``Λ`` defaults to a single site.

    Hard-core free clusters can still pack points this densely, so the
    count bounds the clusters attached to ``Λ`` only heuristically; it is
    the configurable ``K`` of the modulus ``2K log(1 + c^{n/(2r)})``.
    """
    small = math.pi ** (dim / 2) / math.gamma(dim / 2 + 1) * (r / 2) ** dim
    if window is None:
        big = math.pi ** (dim / 2) / math.gamma(dim / 2 + 1) * (2 * r) ** dim
    elif isinstance(window, Box):
        side = np.array(window.hi) - np.array(window.lo) + 4 * r
        big = float(np.prod(side))
    elif isinstance(window, Ball):
        big = math.pi ** (dim / 2) / math.gamma(dim / 2 + 1) * (window.radius + 2 * r) ** dim
    else:
        raise ValueError("packing constant needs a box, a ball or no window")
    return int(math.ceil(big / small - 1e-12))


def wrm_modulus(dist: float, c: float, r: float, K: float) -> float:
    """``2K log(1 + c^{dist/(2r)})``."""
    return 2.0 * K * math.log1p(c ** (dist / (2.0 * r)))


def wrm_decay_constant(params: WrmParams) -> float:
    """``c = max(a, b)``; raises unless the model is in the Gibbsian regime."""
    a, b = wrm_ab(params)
    c = max(a, b)
    if c >= 1.0:
        raise ModelError(f"no uniform modulus: max(a, b) = {c:.6g} >= 1 (t <= t_G)")
    return c


def radii_schedule_wrm(params: WrmParams, K: float | None = None, step: float = 1.0,
                       n_radii: int = 64, dim: int = 2, c: float | None = None
                       ) -> RadiiSchedule:
    """Smallest grid radii with ``2K log(1 + c^{r_m/(2r)}) < m^{-2}``.

    Beyond ``n_radii`` the schedule grows linearly, which only overshoots the
    (logarithmically growing) requirement.
    """
    if c is None:
        c = wrm_decay_constant(params)
    elif not 0 < c < 1:
        raise ModelError("decay constant must lie in (0, 1)")
    if K is None:
        K = packing_constant(params.r, dim)
    radii: list[float] = []
    prev = 0.0
    for m in range(1, n_radii + 1):
        target = 1.0 / m**2
        # closed-form threshold, then walk the grid to the first honest point
        need = 2 * params.r * math.log(math.expm1(target / (2 * K))) / math.log(c)
        k = max(1, math.floor(max(need, 0.0) / step))
        while wrm_modulus(k * step, c, params.r, K) >= target:
            k += 1
        while k > 1 and wrm_modulus((k - 1) * step, c, params.r, K) < target:
            k -= 1
        rad = k * step
        if rad <= prev:
            rad = prev + step
        radii.append(rad)
        prev = rad
    return RadiiSchedule(radii, step)


# ---------------------------------------------------------------------------
# the regrouped potential


@dataclass
class CellValue:
    cell: GradingCell
    value: float
    n_terms: int
    witness: tuple[int, ...] | None = None


class HyperedgePotential:
    """Regrouped potential ``Ψ`` built on a vacuum potential.

    Parameters
    ----------
    phi : VacuumPotential
    variant : {"cyclic", "ti"}
    schedule : RadiiSchedule, optional
        Required for the cyclic variant; the ``ti`` variant defaults to
        ``r_m = m`` in the sup norm.
    origin : array_like, optional
        Centre of the cyclic ordering (default: the origin).
    """

    def __init__(self, phi: VacuumPotential, variant="cyclic",
                 schedule: RadiiSchedule | None = None, origin=None, support: str | None = None):
        self.phi = phi
        self.variant = Variant.parse(variant)
        if self.variant is Variant.CYCLIC:
            if schedule is None:
                raise ValueError("the cyclic variant needs a radii schedule")
            self.grader = Grader(Ordering.CYCLIC, schedule, euclidean_norm)
        else:
            self.grader = Grader(Ordering.LEXICOGRAPHIC, schedule or RadiiSchedule.linear(1.0),
                                 sup_norm)
        self.origin = None if origin is None else np.asarray(origin, dtype=float)
        self.support = support

    @property
    def schedule(self) -> RadiiSchedule:
        return self.grader.schedule

    def _points(self, config: MarkedConfiguration) -> np.ndarray:
        if self.origin is None or self.variant is Variant.TRANSLATION_INVARIANT:
            return np.asarray(config.points)
        return config.points - self.origin

    def grade(self, config: MarkedConfiguration) -> list[GradingCell]:
        return self.grader.grade(self._points(config))

    def evaluate(self, config: MarkedConfiguration) -> dict[tuple[int, int], CellValue]:
        """``Ψ`` on every cell of ``config``; cells with an empty class are omitted.

        Only hyperedges in the model's support are visited, the vacuum
        potential vanishing elsewhere.
        """
        points = self._points(config)
        if len(points) == 0:
            return {}
        ranks = self.grader.ranks(points)
        terms: dict[tuple[int, int], list] = defaultdict(list)
        for eta in support_hyperedges(self.phi.model, config, self.support, self.phi.cap):
            key = self.grader.classify(points, eta, ranks)
            terms[key].append((tuple(eta), self.phi(config.subset(eta))))
        cells = {(c.anchor, c.m): c for c in self.grader.grade(points)}
        out = {}
        for key, cell in cells.items():
            items = terms.get(key, [])
            inf = [eta for eta, v in items if math.isinf(v)]
            if inf:
                out[key] = CellValue(cell, math.inf, len(items), inf[0])
            else:
                out[key] = CellValue(cell, math.fsum(v for _, v in items), len(items))
        return out

    def psi(self, config: MarkedConfiguration, anchor: int, m: int) -> float:
        cell = self.evaluate(config).get((anchor, m))
        return 0.0 if cell is None else cell.value

    def hamiltonian(self, window: Window, config: MarkedConfiguration) -> HamiltonianReport:
        """``H^Ψ_Λ``: sum of ``Ψ(ω_{x,m})`` over cells whose members meet ``Λ``."""
        if len(config) == 0:
            return HamiltonianReport(window, None, 0.0)
        inside = window.contains(config.points)
        contributions = []
        for cv in self.evaluate(config).values():
            if cv.cell.meets(inside) and cv.value != 0.0:
                contributions.append((cv.cell.members, cv.value))
        values = [v for _, v in contributions]
        value = math.inf if any(math.isinf(v) for v in values) else math.fsum(values)
        return HamiltonianReport(window, None, value, contributions)

    def horizon(self, config: MarkedConfiguration, cell: GradingCell) -> Window:
        """Region whose configuration determines ``Ψ`` of ``cell``.

        Every member of the grading class lies between the anchor and a
        point of the ``m``-th annulus in the ordering. For the cyclic order
        that is the ball of radius ``|x| + r_m`` about the ordering centre;
        for the lexicographic order it is the slab of first coordinates in
        ``[x_1, x_1 + r_m]``.
        """
        x = self._points(config)[cell.anchor]
        rm = self.schedule.radius(cell.m)
        if self.variant is Variant.CYCLIC:
            centre = np.zeros(config.dim) if self.origin is None else self.origin
            return Ball(tuple(centre), float(np.linalg.norm(x)) + rm)
        lo = np.full(config.dim, -np.inf)
        hi = np.full(config.dim, np.inf)
        lo[0], hi[0] = x[0], x[0] + rm
        return Box(tuple(lo), tuple(hi))

    def bound(self, m: int, K: float | None = None, c: float | None = None,
              r: float | None = None) -> float:
        """Per-cell bound on ``|Ψ(ω_{x,m})|`` for ``m >= 2``.

        ``2 m^{-2}`` for the cyclic variant (schedule built for the
        ``m^{-2}`` target), ``2 · 2K log(1 + s^{m-1})`` with
        ``s = c^{1/(2r)}`` for the translation-invariant one.
        """
        if m < 2:
            return math.inf
        if self.variant is Variant.CYCLIC:
            return 2.0 / m**2
        if K is None or c is None or r is None:
            raise ValueError("the translation-invariant bound needs K, c and r")
        return 2.0 * wrm_modulus(self.schedule.radius(m - 1), c, r, K)


def hyperedge_potential_wrm(params: WrmParams, variant="cyclic", K: float | None = None,
                            step: float = 1.0, dim: int = 2, origin=None,
                            absorbed: bool = True) -> HyperedgePotential:
    model = TimeEvolvedWRM(params, absorbed=absorbed)
    phi = VacuumPotential(model)
    variant = Variant.parse(variant)
    schedule = radii_schedule_wrm(params, K, step, dim=dim) if variant is Variant.CYCLIC else None
    return HyperedgePotential(phi, variant, schedule, origin)


# ---------------------------------------------------------------------------
# equivalence of Hamiltonians


@dataclass
class BoundaryTerm:
    """Terms where ``H^Ψ_Λ`` and ``H^Φ_Λ`` differ.

    ``surplus``: ``Φ(η)`` with ``η ∩ Λ = ∅`` in a cell whose members meet
    ``Λ``. ``deficit``: ``Φ(η)`` with ``η ∩ Λ ≠ ∅`` in a cell whose members
    miss ``Λ``. ``H^Ψ - H^Φ = surplus - deficit``.
    """

    surplus: float
    deficit: float
    surplus_terms: list = field(default_factory=list)
    deficit_terms: list = field(default_factory=list)

    @property
    def value(self) -> float:
        return self.surplus - self.deficit


def boundary_term(psi: HyperedgePotential, window: Window, config: MarkedConfiguration
                  ) -> BoundaryTerm:
    """Hyperedge-by-hyperedge evaluation of ``H^Ψ_Λ - H^Φ_Λ``."""
    if len(config) == 0:
        return BoundaryTerm(0.0, 0.0)
    points = psi._points(config)
    ranks = psi.grader.ranks(points)
    inside = window.contains(config.points)
    cells = {(c.anchor, c.m): c for c in psi.grader.grade(points)}
    surplus, deficit = [], []
    for eta in support_hyperedges(psi.phi.model, config, psi.support, psi.phi.cap):
        cell = cells[psi.grader.classify(points, eta, ranks)]
        hits = bool(inside[list(eta)].any())
        if hits == cell.meets(inside):
            continue
        v = psi.phi(config.subset(eta))
        if v == 0.0:
            continue
        (deficit if hits else surplus).append((tuple(eta), v))
    return BoundaryTerm(math.fsum(v for _, v in surplus), math.fsum(v for _, v in deficit),
                        surplus, deficit)


@dataclass
class EquivalenceReport:
    differences: list[float]
    spread: float
    tol: float
    passed: bool
    h_phi: list[float]
    h_psi: list[float]


def hamiltonian_equivalence_check(phi: VacuumPotential, psi: HyperedgePotential, window: Window,
                                  exterior: MarkedConfiguration, interiors, tol: float = 1e-6
                                  ) -> EquivalenceReport:
    """Spread of ``H^Ψ_Λ - H^Φ_Λ`` over interior variants at fixed exterior."""
    ext = exterior.outside(window)
    diffs, hphi, hpsi = [], [], []
    for inner in interiors:
        config = inner.restrict(window).union(ext)
        a = vacuum_hamiltonian(phi, window, config).value
        b = psi.hamiltonian(window, config).value
        if not (math.isfinite(a) and math.isfinite(b)):
            raise ModelError("Hamiltonian equivalence needs finite Hamiltonians")
        hphi.append(a)
        hpsi.append(b)
        diffs.append(b - a)
    spread = (max(diffs) - min(diffs)) if diffs else 0.0
    return EquivalenceReport(diffs, spread, tol, spread < tol, hphi, hpsi)


# ---------------------------------------------------------------------------
# summability diagnostics


def density_statistic(config: MarkedConfiguration, n_max: int, center=None) -> tuple[float, list]:
    """``max_{1<=n<=n_max} n^{-d} |ω_{Λ_n}|`` for sup-norm boxes ``Λ_n``."""
    d = config.dim
    c = np.zeros(d) if center is None else np.asarray(center, dtype=float)
    if len(config) == 0:
        return 0.0, [0.0] * n_max
    dist = np.max(np.abs(config.points - c), axis=1)
    values = [float(np.count_nonzero(dist <= n)) / n**d for n in range(1, n_max + 1)]
    return max(values), values


def density_gate(intensity: float, dim: int, factor: float = 4.0, slack: float = 4.0) -> float:
    """Threshold for the density statistic: ``factor · 2^d λ + slack``."""
    return factor * (2**dim) * intensity + slack


@dataclass
class CellRecord:
    anchor: int
    m: int
    abs_psi: float
    bound: float

    @property
    def ok(self) -> bool:
        return self.abs_psi <= self.bound


@dataclass
class SummabilityReport:
    window: Window
    config: MarkedConfiguration
    partial_sums: list[float]
    increments: list[float]
    cells: list[CellRecord]
    density: float
    kappa: list[tuple[int, float]] = field(default_factory=list)

    @property
    def monotone(self) -> bool:
        return all(b >= a for a, b in zip(self.partial_sums, self.partial_sums[1:]))

    @property
    def bound_violations(self) -> list[CellRecord]:
        return [c for c in self.cells if not c.ok]


def abs_sum_partial(psi: HyperedgePotential, window: Window, config: MarkedConfiguration,
                    deltas, bound_kwargs: dict | None = None, density_n: int = 8
                    ) -> SummabilityReport:
    """Partial sums of ``Σ |Ψ|`` over cells meeting ``Λ`` inside growing ``Δ``.

    ``Ψ`` is evaluated on the full configuration; the ``k``-th partial sum
    keeps the cells whose members all lie in ``deltas[k]``, so the sums are
    nondecreasing. Each cell with ``m >= 2`` is compared with
    :meth:`HyperedgePotential.bound`.
    """
    bound_kwargs = bound_kwargs or {}
    values = psi.evaluate(config)
    inside = window.contains(config.points) if len(config) else np.zeros(0, dtype=bool)
    meeting = [cv for cv in values.values() if cv.cell.meets(inside)]
    partial = []
    for delta in deltas:
        if len(config):
            in_delta = delta.contains(config.points)
            kept = [abs(cv.value) for cv in meeting if in_delta[list(cv.cell.members)].all()]
        else:
            kept = []
        partial.append(math.fsum(kept))
    increments = [partial[0]] + [b - a for a, b in zip(partial, partial[1:])] if partial else []
    records = [CellRecord(cv.cell.anchor, cv.cell.m, abs(cv.value),
                          psi.bound(cv.cell.m, **bound_kwargs))
               for cv in meeting if cv.cell.m >= 2]
    dens, _ = density_statistic(config, density_n)
    return SummabilityReport(window, config, partial, increments, records, dens)


def chain_probe(n: int, spacing: float, mark: int = PLUS, dim: int = 2, extra: int = 1
                ) -> MarkedConfiguration:
    """Equally spaced chain from the origin along the first axis past ``Λ_n``."""
    if not 0 < spacing:
        raise ValueError("spacing must be positive")
    count = int(math.floor(n / spacing)) + 1 + extra
    pts = np.zeros((count, dim))
    pts[:, 0] = spacing * np.arange(count)
    return MarkedConfiguration(pts, np.full(count, mark), dim=dim)


def kappa_modulus(model: TimeEvolvedWRM, n: int, probes) -> float:
    """Lower estimate ``max |log h_0(ω) - log h_0(ω_{Λ_n})|`` over the probes.

    ``h_0`` is the weight for the single-site window at the origin; probes
    without a point at the origin contribute 0.
    """
    from .geometry import PointWindow

    dim = None
    best = 0.0
    for probe in probes:
        dim = probe.dim
        site = PointWindow.of(np.zeros(dim))
        box = Box(tuple(np.full(dim, -float(n))), tuple(np.full(dim, float(n))))
        full = model.log_h(site, probe)
        cut = model.log_h(site, probe.restrict(box))
        if math.isfinite(full) and math.isfinite(cut):
            best = max(best, abs(full - cut))
    return best


def kappa_bound(params: WrmParams, n: float, K: float | None = None, dim: int = 2) -> float:
    """Analytic ``2K log(1 + s^n)`` with ``s = c^{1/(2r)}``."""
    c = wrm_decay_constant(params)
    if K is None:
        K = packing_constant(params.r, dim)
    return wrm_modulus(n, c, params.r, K)


def wrm_kappa_inputs(params: WrmParams, K: float | None = None, dim: int = 2) -> dict:
    """Keyword arguments for :meth:`HyperedgePotential.bound` (``ti`` variant)."""
    return {"K": K if K is not None else packing_constant(params.r, dim),
            "c": wrm_decay_constant(params), "r": params.r}


__all__ = [
    "BoundaryTerm", "CellRecord", "CellValue", "EquivalenceReport", "GradingCell", "Grader",
    "HyperedgePotential", "SummabilityReport", "Variant", "abs_sum_partial", "boundary_term",
    "chain_probe", "density_gate", "density_statistic", "grade", "hamiltonian_equivalence_check",
    "hyperedge_potential_wrm", "kappa_bound", "kappa_modulus", "packing_constant",
    "radii_schedule_wrm", "wrm_decay_constant", "wrm_kappa_inputs", "wrm_modulus",
]
