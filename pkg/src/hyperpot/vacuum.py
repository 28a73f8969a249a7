"""Vacuum potentials by inclusion-exclusion, Hamiltonians and series forms."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import mpmath
import numpy as np

from .geometry import Box, Window, connected_subsets, neighbour_lists
from .models import ModelError, PreModification
from .sampling import PLUS, MarkedConfiguration

DEFAULT_CAP = 20
RECONSTRUCT_CAP = 14


def _popcounts(n: int) -> np.ndarray:
    return np.array([m.bit_count() for m in range(1 << n)], dtype=int)


def _enclosing_box(config: MarkedConfiguration, margin: float = 1.0) -> Box:
    lo = config.points.min(axis=0) - margin
    hi = config.points.max(axis=0) + margin
    return Box(tuple(lo), tuple(hi))


def _mask_indices(mask: int) -> list[int]:
    out, i = [], 0
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return out


class VacuumPotential:
    """Vacuum potential ``Φ(η)`` of a pre-modification.

    ``Φ(η) = -Σ_{ξ⊆η} (-1)^{|η∖ξ|} log(h_Λ(ω_ξ)/h_Λ(∅))`` for any window
    ``Λ ⊇ η``; ``+inf`` when ``h_Λ(ω_η) = 0``. The value depends on ``η``
    alone, so results are cached by the marked point set. When ``window``
    is omitted a box around ``η`` is used. ``check_volume`` re-evaluates in
    a second, larger window and raises if the two disagree.
    """

    def __init__(self, model: PreModification, window: Window | None = None,
                 cap: int = DEFAULT_CAP, check_volume: bool = False, fast: bool = True):
        self.model = model
        self.window = window
        self.cap = cap
        self.check_volume = check_volume
        self.fast = fast
        self._cache: dict = {}

    def _window_for(self, eta: MarkedConfiguration) -> Window:
        if self.window is None:
            return _enclosing_box(eta)
        if len(eta) and not np.all(self.window.contains(eta.points)):
            raise ValueError("hyperedge must lie inside the evaluation window")
        return self.window

    def log_ratios(self, eta: MarkedConfiguration, window: Window | None = None) -> np.ndarray:
        """``log(h_Λ(ω_ξ)/h_Λ(∅))`` for every subset mask of ``eta``."""
        n = len(eta)
        if n > self.cap:
            raise ValueError(f"|η| = {n} exceeds the subset cap {self.cap}")
        win = window if window is not None else self._window_for(eta)
        empty = MarkedConfiguration.empty(eta.dim)
        base = self.model.log_h(win, empty)
        if not math.isfinite(base):
            raise ModelError("vacuum weight h_Λ(∅) is not positive")
        fast = getattr(self.model, "subset_log_weights", None) if self.fast else None
        if fast is not None:
            return fast(eta) - base
        out = np.empty(1 << n)
        for mask in range(1 << n):
            out[mask] = self.model.log_h(win, eta.subset(_mask_indices(mask))) - base
        return out

    def _evaluate(self, eta: MarkedConfiguration, window: Window | None) -> float:
        n = len(eta)
        if n == 0:
            return 0.0
        f = self.log_ratios(eta, window)
        full = (1 << n) - 1
        dead = ~np.isfinite(f)
        if dead[full]:
            return math.inf
        if dead.any():
            bad = int(np.flatnonzero(dead)[0])
            raise ModelError(f"hereditary positivity violated: h(η) > 0 but subset mask "
                             f"{bad:#b} has zero weight")
        signs = np.where((n - _popcounts(n)) % 2 == 0, 1.0, -1.0)
        return -math.fsum(signs * f)

    def __call__(self, eta: MarkedConfiguration) -> float:
        key = eta.key()
        if key in self._cache:
            return self._cache[key]
        value = self._evaluate(eta, None)
        if self.check_volume and len(eta):
            win = self._window_for(eta)
            other = _enclosing_box(eta, margin=3.0) if self.window is None else _grow(win)
            alt = self._evaluate(eta, other)
            if not _same(value, alt, 1e-10):
                raise ModelError(f"vacuum potential depends on the volume: {value} vs {alt}")
        self._cache[key] = value
        return value

    def in_context(self, eta: MarkedConfiguration, config: MarkedConfiguration,
                   window: Window | None = None) -> float:
        """``Φ(η, 𝝎)``: inclusion-exclusion over ``ξ ⊆ η`` of ``log h(𝝎_ξ)``.

        Points of ``η`` missing from ``config`` drop out of every ``𝝎_ξ``;
        marks are read from ``config``. Equals ``Φ(𝝎_η)`` when ``config``
        contains ``η``, and vanishes when it misses a point of ``η``.
        """
        n = len(eta)
        if n > self.cap:
            raise ValueError(f"|η| = {n} exceeds the subset cap {self.cap}")
        if n == 0:
            return 0.0
        lookup = {tuple(float(v) for v in p): i for i, p in enumerate(config.points)}
        where = [lookup.get(tuple(float(v) for v in p)) for p in eta.points]
        win = window if window is not None else _enclosing_box(eta)
        empty = MarkedConfiguration.empty(eta.dim)
        base = self.model.log_h(win, empty)
        if not math.isfinite(base):
            raise ModelError("vacuum weight h_Λ(∅) is not positive")
        # masks that differ only in absent points share one weight
        present = [i for i in range(n) if where[i] is not None]
        sub = config.subset([where[i] for i in present])
        fast = getattr(self.model, "subset_log_weights", None) if self.fast else None
        if fast is not None:
            weights = fast(sub) - base
        else:
            weights = np.array([self.model.log_h(win, sub.subset(_mask_indices(m))) - base
                                for m in range(1 << len(present))])
        f = np.empty(1 << n)
        for mask in range(1 << n):
            f[mask] = weights[sum(1 << j for j, i in enumerate(present) if mask >> i & 1)]
        full = (1 << n) - 1
        if not np.isfinite(f[full]):
            return math.inf
        signs = np.where((n - _popcounts(n)) % 2 == 0, 1.0, -1.0)
        return -math.fsum(signs * f)

    def clear_cache(self) -> None:
        self._cache.clear()


def _grow(win: Window) -> Window:
    if isinstance(win, Box):
        return Box(tuple(np.array(win.lo) - 2.0), tuple(np.array(win.hi) + 2.0))
    lo = np.full(win.dim, -1e6)
    return Box(tuple(lo), tuple(-lo))


def _same(x: float, y: float, tol: float) -> bool:
    if math.isinf(x) or math.isinf(y):
        return x == y
    return abs(x - y) <= tol * max(1.0, abs(x), abs(y))


def vacuum_phi(model: PreModification, eta: MarkedConfiguration,
               window: Window | None = None, cap: int = DEFAULT_CAP) -> float:
    return VacuumPotential(model, window, cap)(eta)


def vacuum_log_ratio(model: PreModification, window: Window,
                     config: MarkedConfiguration) -> float:
    """``-log(ρ_Λ(ω_Λ)/ρ_Λ(∅))`` computed straight from the weights."""
    inner = config.restrict(window)
    empty = MarkedConfiguration.empty(config.dim)
    return -(model.log_h(window, inner) - model.log_h(window, empty))


def mobius_reconstruct(phi: VacuumPotential, window: Window,
                       config: MarkedConfiguration, cap: int = RECONSTRUCT_CAP) -> float:
    """``Σ_{η ⊆ ω_Λ} Φ(η)``, hyperedge by hyperedge."""
    inner = config.restrict(window)
    n = len(inner)
    if n > cap:
        raise ValueError(f"|ω_Λ| = {n} exceeds the reconstruction cap {cap}")
    terms = []
    for k in range(1, n + 1):
        for idx in itertools.combinations(range(n), k):
            terms.append(phi(inner.subset(idx)))
    if any(math.isinf(t) for t in terms):
        return math.inf
    return math.fsum(terms)


# ---------------------------------------------------------------------------
# Hamiltonians


def support_hyperedges(model: PreModification, config: MarkedConfiguration,
                       support: str | None = None, cap: int = DEFAULT_CAP):
    """Index tuples of all hyperedges in the model's declared support."""
    support = support or model.support
    n = len(config)
    if support == "clusters":
        radius = model.interaction_radius
        yield from connected_subsets(neighbour_lists(config.points, radius))
    elif support == "pairs":
        for i in range(n):
            yield (i,)
        radius = model.interaction_radius
        for i, j in itertools.combinations(range(n), 2):
            if radius is None or np.linalg.norm(config.points[i] - config.points[j]) < radius:
                yield (i, j)
    elif support == "all":
        if n > cap:
            raise ValueError(f"all-subsets support with {n} points exceeds cap {cap}")
        for k in range(1, n + 1):
            yield from itertools.combinations(range(n), k)
    else:
        raise ValueError(f"unknown support family {support!r}")


@dataclass
class HamiltonianReport:
    window: Window
    outer: Window | None
    value: float
    contributions: list[tuple[tuple[int, ...], float]] = field(default_factory=list)
    closed_form: float | None = None

    def check(self, rtol: float = 1e-8) -> bool:
        if self.closed_form is None:
            return True
        if math.isinf(self.value) or math.isinf(self.closed_form):
            return self.value == self.closed_form
        return abs(self.value - self.closed_form) <= rtol * max(1.0, abs(self.closed_form))


def hamiltonian(potential, window: Window, config: MarkedConfiguration,
                outer: Window | None = None, support: str | None = None) -> HamiltonianReport:
    """``H_{Λ,Δ}(ω)``: sum over support hyperedges of ``ω_Δ`` meeting ``Λ``.

    ``outer=None`` uses the whole (finite) configuration. For a vacuum
    potential the report carries the closed form
    ``-log(h_Λ(ω_Δ)/h_Λ(ω_{Δ∖Λ}))`` as an independent cross-check.
    """
    if not isinstance(potential, VacuumPotential):
        return potential.hamiltonian(window, config if outer is None else config.restrict(outer))
    cfg = config if outer is None else config.restrict(outer)
    model = potential.model
    inside = window.contains(cfg.points) if len(cfg) else np.zeros(0, dtype=bool)
    contributions = []
    for idx in support_hyperedges(model, cfg, support):
        if not inside[list(idx)].any():
            continue
        v = potential(cfg.subset(idx))
        if v != 0.0:
            contributions.append((tuple(idx), v))
    values = [v for _, v in contributions]
    value = math.inf if any(math.isinf(v) for v in values) else math.fsum(values)
    ext = cfg.mask(~inside) if len(cfg) else cfg
    h_all = model.log_h(window, cfg)
    h_ext = model.log_h(window, ext)
    if not math.isfinite(h_ext):
        closed = None
    else:
        closed = -(h_all - h_ext)
    return HamiltonianReport(window, outer, value, contributions, closed)


# ---------------------------------------------------------------------------
# finite range


@dataclass
class FiniteRangeReport:
    status: str
    checked: int
    skipped: int
    max_abs: float
    witness: MarkedConfiguration | None = None
    witness_value: float | None = None


def _diameter(config: MarkedConfiguration) -> float:
    p = config.points
    if len(p) < 2:
        return 0.0
    diff = p[:, None, :] - p[None, :, :]
    return float(np.sqrt(np.max(np.sum(diff * diff, axis=2))))


def check_finite_range(phi: VacuumPotential, range_: float, etas, tol: float = 1e-10
                       ) -> FiniteRangeReport:
    """Check ``Φ(η) = 0`` for every supplied ``η`` with a pair farther than ``range_``."""
    checked = skipped = 0
    worst, witness, witness_value = 0.0, None, None
    for eta in etas:
        if _diameter(eta) <= range_:
            skipped += 1
            continue
        checked += 1
        v = phi(eta)
        err = abs(v)
        if err > worst:
            worst, witness, witness_value = err, eta, v
    if checked == 0:
        status = "not-applicable"
    else:
        status = "pass" if worst <= tol else "fail"
    return FiniteRangeReport(status, checked, skipped, worst, witness, witness_value)


# ---------------------------------------------------------------------------
# series forms for the time-evolved WRM


def wrm_phi_binomial(k: int, l: int, a: float, b: float, dps: int = 40) -> float:
    """Binomial display: alternating sums of ``log(1 + a^i b^j)``, ``∅`` term included.

    Evaluated in extended precision; the alternating binomial sums cancel
    to many digits once ``k + l`` approaches 20.
    """
    with mpmath.workdps(dps):
        A, B = mpmath.mpf(a), mpmath.mpf(b)
        total = mpmath.mpf(0)
        for i in range(k + 1):
            for j in range(l + 1):
                sign = -1 if (k - i + l - j) % 2 else 1
                total += sign * mpmath.binomial(k, i) * mpmath.binomial(l, j) * \
                    mpmath.log1p(A**i * B**j)
        return float(-total)


def _series_tail(k: int, l: int, a: float, b: float, J: int) -> float:
    # |(1-a^j)^k (1-b^j)^l - 1| <= k a^j + l b^j, summed geometrically past J
    tail = 0.0
    if k:
        tail += k * a ** (J + 1) / (1.0 - a)
    if l:
        tail += l * b ** (J + 1) / (1.0 - b)
    return tail / (J + 1)


def _series_sum(k: int, l: int, a: float, b: float, J: int) -> float:
    # Σ_j (-1)^j/j = -log 2 is split off; the remainder converges geometrically
    terms = [-math.log(2.0)]
    for j in range(1, J + 1):
        log_prod = 0.0
        if k:
            log_prod += k * math.log1p(-(a**j))
        if l:
            log_prod += l * math.log1p(-(b**j))
        terms.append((-1) ** j * math.expm1(log_prod) / j)
    return math.fsum(terms)


def wrm_phi_series(k: int, l: int, a: float, b: float, J: int) -> tuple[float, float]:
    """Log-expanded form ``(-1)^{n+1} Σ_j (-1)^j (1-a^j)^k (1-b^j)^l / j``.

    Returns the value truncated after ``J`` terms together with a rigorous
    bound on the omitted tail.
    """
    if not (0 < a < 1 and 0 < b < 1):
        raise ValueError("series form needs a, b in (0, 1)")
    if J < 1:
        raise ValueError("truncation order J must be >= 1")
    n = k + l
    value = (-1) ** (n + 1) * _series_sum(k, l, a, b, J)
    return value, _series_tail(k, l, a, b, J)


def clique_vacuum_value(k: int, l: int, a: float, b: float) -> float:
    """Absorbed-convention ``Φ(η)`` for a cluster whose every subset is connected.

    Direct inclusion-exclusion has no ``∅`` term; relative to the binomial
    display this adds ``(-1)^{|η|} log 2``.
    """
    n = k + l
    return wrm_phi_binomial(k, l, a, b) + (-1) ** n * math.log(2.0)


def phi_n(n: int, alpha: float, J: int | None = None, tol: float = 1e-12
          ) -> tuple[float, float]:
    """Critical-time potential of an ``n``-point plus cluster, with tail bound.

    Without ``J`` the truncation order grows until the tail bound drops
    below ``tol``.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if n < 1:
        raise ValueError("cluster size must be >= 1")
    if J is None:
        J = 1
        while _series_tail(n, 0, alpha, 0.5, J) >= tol:
            J += 1
    value = (-1) ** (n + 1) * _series_sum(n, 0, alpha, 0.5, J)
    return value, _series_tail(n, 0, alpha, 0.5, J)
