"""Concrete pre-modifications and the Widom-Rowlinson parameter algebra.

Every model exposes ``log_h(window, config)``, the logarithm of its
pre-modification weight, with ``-inf`` standing for a hard-core zero.
Weights are never exponentiated inside the library.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np
from scipy.optimize import bisect

from .geometry import Window, adjacency_pairs, as_points, cluster_labels
from .sampling import MINUS, PLUS, IntensitySpec, MarkedConfiguration, evolved_intensities


class ModelError(ValueError):
    """A model violates a structural assumption (vacuum positivity, ...)."""


# ---------------------------------------------------------------------------
# parameters


def _parse_time(t) -> float:
    if isinstance(t, str):
        if t.strip().lower() in ("inf", "infinity", "+inf"):
            return math.inf
        t = float(t)
    return float(t)


@dataclass(frozen=True)
class WrmParams:
    lambda_plus: float
    lambda_minus: float
    r: float
    t: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "t", _parse_time(self.t))
        if not self.lambda_plus >= self.lambda_minus > 0:
            raise ValueError("need lambda_plus >= lambda_minus > 0")
        if not self.r > 0:
            raise ValueError("r must be positive")
        if not self.t >= 0:
            raise ValueError("t must be nonnegative")

    @property
    def intensities(self) -> IntensitySpec:
        return IntensitySpec(self.lambda_plus, self.lambda_minus)

    def to_json(self) -> dict:
        return {"lambda_plus": self.lambda_plus, "lambda_minus": self.lambda_minus,
                "r": self.r, "t": "inf" if math.isinf(self.t) else self.t}

    @classmethod
    def from_json(cls, obj: Mapping) -> "WrmParams":
        return cls(float(obj["lambda_plus"]), float(obj["lambda_minus"]), float(obj["r"]),
                   _parse_time(obj.get("t", 0.0)))


def _flip_probs(t: float) -> tuple[float, float]:
    """``(p_t(+,+), p_t(+,-))`` computed without cancellation at small t."""
    if math.isinf(t):
        return 0.5, 0.5
    return 0.5 * (1.0 + math.exp(-2.0 * t)), -0.5 * math.expm1(-2.0 * t)


def wrm_b(lambda_plus: float, lambda_minus: float, t: float) -> float:
    stay, flip = _flip_probs(t)
    if flip == 0.0:
        return math.inf
    return lambda_minus * stay / (lambda_plus * flip)


def wrm_ab(params: WrmParams) -> tuple[float, float]:
    """The pair ``(a, b)``; undefined at ``t = 0`` where ``b`` is infinite."""
    if params.t == 0:
        raise ModelError("b is +inf at t = 0; the time-evolved weights need t > 0")
    stay, flip = _flip_probs(params.t)
    lp, lm = params.lambda_plus, params.lambda_minus
    return lm * flip / (lp * stay), lm * stay / (lp * flip)


def critical_time_closed_form(lambda_plus: float, lambda_minus: float) -> float:
    if not lambda_plus > lambda_minus > 0:
        raise ValueError("a positive critical time needs lambda_plus > lambda_minus > 0")
    return -0.5 * math.log((lambda_plus - lambda_minus) / (lambda_plus + lambda_minus))


def critical_time(lambda_plus: float, lambda_minus: float, rtol: float = 1e-13) -> float:
    """Time ``t_G > 0`` at which ``b(t) = 1``, located by bisection."""
    if not lambda_plus > lambda_minus > 0:
        raise ValueError("a positive critical time needs lambda_plus > lambda_minus > 0")

    def f(t):
        return math.log(wrm_b(lambda_plus, lambda_minus, t))

    # b decreases from +inf to lambda_minus / lambda_plus < 1
    lo, hi = 1.0, 1.0
    while f(lo) <= 0:
        lo /= 2.0
    while f(hi) >= 0:
        hi *= 2.0
    return bisect(f, lo, hi, xtol=1e-300, rtol=rtol, maxiter=2000)


@dataclass(frozen=True)
class PottsParams:
    """Even pair functions ``phi`` (charged on unequal marks) and ``psi``."""

    phi: Callable[[np.ndarray], float]
    psi: Callable[[np.ndarray], float]
    range: float | None = None

    def check_even(self, diffs) -> bool:
        diffs = as_points(diffs)
        return all(self.phi(v) == self.phi(-v) and self.psi(v) == self.psi(-v) for v in diffs)


def widom_rowlinson_potts(r: float) -> PottsParams:
    """Hard-core WRM written as a Potts gas: ``phi = inf`` below ``2r``."""

    def phi(v):
        return math.inf if float(np.linalg.norm(v)) < 2 * r else 0.0

    def psi(v):
        return 0.0

    return PottsParams(phi, psi, range=2 * r)


def potts_pair_potential(eta: MarkedConfiguration, params: PottsParams) -> float:
    """Pair energy of ``eta``; zero unless ``eta`` has exactly two points."""
    if len(eta) != 2:
        return 0.0
    v = eta.points[0] - eta.points[1]
    value = float(params.psi(v))
    if eta.marks[0] != eta.marks[1]:
        value += float(params.phi(v))
    return value


# ---------------------------------------------------------------------------
# Widom-Rowlinson weights


def hardcore_indicator(window: Window, config: MarkedConfiguration, r: float) -> int:
    """1 iff no two points closer than ``2r`` carry different marks.

    All pairs of the configuration are tested, not only those meeting
    ``window``; the weight is therefore the same for every window.
    """
    if len(config) < 2:
        return 1
    pairs = adjacency_pairs(config.points, 2.0 * r)
    if len(pairs) == 0:
        return 1
    return int(np.all(config.marks[pairs[:, 0]] == config.marks[pairs[:, 1]]))


def _kappa(k, l, log_a: float, log_b: float):
    """``log(1 + a^k b^l)`` evaluated in log space."""
    with np.errstate(over="ignore"):
        return np.logaddexp(0.0, np.asarray(k) * log_a + np.asarray(l) * log_b)


def _cluster_energy(labels: np.ndarray, marks: np.ndarray, which, log_a: float,
                    log_b: float) -> float:
    total = 0.0
    for lab in which:
        sel = labels == lab
        k = int(np.count_nonzero(marks[sel] == PLUS))
        total += float(_kappa(k, int(np.count_nonzero(sel)) - k, log_a, log_b))
    return total


def twrm_log_weight(window: Window, config: MarkedConfiguration, a: float, b: float, r: float,
                    absorbed: bool = False, literal: bool = False) -> float:
    """Log weight of the time-evolved WRM for given ``(a, b)``.

    With ``literal=False`` (default) the value is ``L(ω) - L(ω_{Λ^c})`` where
    ``L`` sums ``log(1 + a^k b^l)`` over all clusters minus the single-site
    terms. Clusters away from the window cancel, so this is the sum over
    clusters meeting the window minus the clusters that the exterior part of
    those clusters falls apart into. ``literal=True`` drops the subtracted
    exterior sub-clusters; that variant does not satisfy the swap identity
    once an exterior cluster can merge with interior points.
    """
    n = len(config)
    if n == 0:
        return 0.0
    inside = window.contains(config.points)
    if not inside.any():
        return 0.0
    log_a, log_b = math.log(a), math.log(b)
    labels = cluster_labels(config.points, r)
    hit = np.unique(labels[inside])
    total = _cluster_energy(labels, config.marks, hit, log_a, log_b)
    if not literal:
        rest = np.isin(labels, hit) & ~inside
        if rest.any():
            sub_labels = cluster_labels(config.points[rest], r)
            total -= _cluster_energy(sub_labels, config.marks[rest], np.unique(sub_labels),
                                     log_a, log_b)
    if not absorbed:
        n_plus = int(np.count_nonzero(config.marks[inside] == PLUS))
        n_minus = int(np.count_nonzero(inside)) - n_plus
        total -= n_plus * math.log1p(a) + n_minus * math.log1p(b)
    return total


def wrm_log_premod(window: Window, config: MarkedConfiguration, params: WrmParams,
                   absorbed: bool = False, literal: bool = False) -> float:
    a, b = wrm_ab(params)
    return twrm_log_weight(window, config, a, b, params.r, absorbed, literal)


def cluster_potential_psi(eta, config: MarkedConfiguration, params: WrmParams) -> float:
    """Cluster energy ``log(1 + a^k b^l)`` if ``eta`` is a cluster of ``config``.

    ``eta`` is a sequence of indices into ``config``. Only points of
    ``config`` within ``2r`` of ``eta`` are inspected.
    """
    idx = sorted(set(int(i) for i in eta))
    if not idx:
        return 0.0
    r2 = 2.0 * params.r
    sub = config.points[idx]
    # eta must be 2r-connected in itself
    if len(idx) > 1 and len(np.unique(cluster_labels(sub, params.r))) != 1:
        return 0.0
    others = np.setdiff1d(np.arange(len(config)), idx)
    if len(others):
        diff = config.points[others][:, None, :] - sub[None, :, :]
        if np.any(np.sqrt(np.sum(diff * diff, axis=2)) < r2):
            return 0.0
    a, b = wrm_ab(params)
    k = int(np.count_nonzero(config.marks[idx] == PLUS))
    return float(_kappa(k, len(idx) - k, math.log(a), math.log(b)))


# ---------------------------------------------------------------------------
# pre-modification objects


class PreModification:
    """Family ``Λ -> h_Λ`` of nonnegative weights, evaluated in log space.

    ``interaction_radius`` is the connection distance behind the support of
    the vacuum potential (``support`` = ``"clusters"``, ``"pairs"`` or
    ``"all"``); ``range`` is the declared finite range, if any.
    """

    name = "premodification"
    interaction_radius: float | None = None
    range: float | None = None
    support = "all"

    def log_h(self, window: Window, config: MarkedConfiguration) -> float:
        raise NotImplementedError

    def reference_intensities(self) -> dict[int, float]:
        raise NotImplementedError

    def admissible(self, exterior: MarkedConfiguration) -> bool:
        return True

    def describe(self) -> dict:
        return {"model": self.name}


class PoissonModel(PreModification):
    name = "poisson"
    support = "all"

    def __init__(self, intensities):
        if isinstance(intensities, IntensitySpec):
            intensities = intensities.as_dict()
        self.intensities = {int(k): float(v) for k, v in dict(intensities).items()}

    def log_h(self, window, config):
        return 0.0

    def reference_intensities(self):
        return dict(self.intensities)


class HardcoreWRM(PreModification):
    """Widom-Rowlinson hard core at time zero."""

    name = "hardcore"
    support = "pairs"

    def __init__(self, params: WrmParams):
        self.params = params
        self.interaction_radius = 2 * params.r
        self.range = 2 * params.r

    def log_h(self, window, config):
        return 0.0 if hardcore_indicator(window, config, self.params.r) else -math.inf

    def reference_intensities(self):
        return self.params.intensities.as_dict()

    def admissible(self, exterior):
        return bool(hardcore_indicator(None, exterior, self.params.r))

    def describe(self):
        return {"model": self.name, **self.params.to_json()}


class TimeEvolvedWRM(PreModification):
    """Spin-flip evolved WRM started from the plus phase.

    With ``absorbed=True`` the single-site factors ``1/(1+a)``, ``1/(1+b)``
    are moved into the reference process, whose intensities become
    ``lambda_plus p_t(+,+)`` and ``lambda_plus p_t(+,-)``.
    """

    name = "twrm"
    support = "clusters"

    def __init__(self, params: WrmParams, absorbed: bool = True, literal: bool = False):
        self.params = params
        self.a, self.b = wrm_ab(params)
        self.absorbed = absorbed
        self.literal = literal
        self.interaction_radius = 2 * params.r

    def log_h(self, window, config):
        return twrm_log_weight(window, config, self.a, self.b, self.params.r,
                               self.absorbed, self.literal)

    def subset_log_weights(self, config: MarkedConfiguration) -> np.ndarray:
        """``log h(ω_ξ)`` with empty exterior for every subset mask ``ξ``.

        Entry ``mask`` refers to the points whose bits are set. Components
        are grown with bit operations, which keeps the full subset lattice
        of a 12-point cluster cheap.
        """
        n = len(config)
        nbr = [0] * n
        for i, j in adjacency_pairs(config.points, 2 * self.params.r):
            nbr[i] |= 1 << int(j)
            nbr[j] |= 1 << int(i)
        plus_bits = sum(1 << i for i in range(n) if config.marks[i] == PLUS)
        la, lb = math.log(self.a), math.log(self.b)
        kk, ll = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="ij")
        kappa = _kappa(kk, ll, la, lb).tolist()
        single_plus = 0.0 if self.absorbed else math.log1p(self.a)
        single_minus = 0.0 if self.absorbed else math.log1p(self.b)
        out = np.empty(1 << n)
        for mask in range(1 << n):
            total = 0.0
            rest = mask
            while rest:
                comp = frontier = rest & -rest
                while frontier:
                    v = frontier & -frontier
                    frontier ^= v
                    new = nbr[v.bit_length() - 1] & mask & ~comp
                    comp |= new
                    frontier |= new
                rest &= ~comp
                k = (comp & plus_bits).bit_count()
                total += kappa[k][comp.bit_count() - k]
            k = (mask & plus_bits).bit_count()
            out[mask] = total - k * single_plus - (mask.bit_count() - k) * single_minus
        return out

    def reference_intensities(self):
        if self.absorbed:
            stay, flip = _flip_probs(self.params.t)
            lp = self.params.lambda_plus
            return {PLUS: lp * stay, MINUS: lp * flip}
        fp, fm = evolved_intensities(self.params.intensities, self.params.t)
        return {PLUS: fp, MINUS: fm}

    def describe(self):
        return {"model": self.name, "absorbed": self.absorbed, **self.params.to_json()}


class PottsGas(PreModification):
    """Boltzmann weight of a marked pair potential."""

    name = "potts"
    support = "pairs"

    def __init__(self, params: PottsParams, intensities):
        self.params = params
        if isinstance(intensities, IntensitySpec):
            intensities = intensities.as_dict()
        self.intensities = {int(k): float(v) for k, v in dict(intensities).items()}
        self.range = params.range
        self.interaction_radius = params.range

    def log_h(self, window, config):
        n = len(config)
        if n < 2:
            return 0.0
        inside = window.contains(config.points)
        energy = 0.0
        for i in range(n):
            for j in range(i + 1, n):
                if not (inside[i] or inside[j]):
                    continue
                v = config.points[i] - config.points[j]
                e = float(self.params.psi(v))
                if config.marks[i] != config.marks[j]:
                    e += float(self.params.phi(v))
                if e == math.inf:
                    return -math.inf
                energy += e
        return -energy

    def reference_intensities(self):
        return dict(self.intensities)


class BrokenModel(PreModification):
    """Negative control: a volume-dependent factor that breaks consistency.

    ``log h_Λ`` gains ``strength * vol(Λ) * |ω_Λ|``, so the ratio
    ``h_Δ / h_Λ`` depends on the configuration inside ``Λ``.
    """

    name = "broken"

    def __init__(self, base: PreModification, strength: float = 1.0):
        self.base = base
        self.strength = float(strength)
        self.support = base.support
        self.interaction_radius = base.interaction_radius

    def log_h(self, window, config):
        value = self.base.log_h(window, config)
        if len(config) == 0:
            return value
        count = int(np.count_nonzero(window.contains(config.points)))
        return value + self.strength * window.volume * count

    def reference_intensities(self):
        return self.base.reference_intensities()

    def admissible(self, exterior):
        return self.base.admissible(exterior)

    def describe(self):
        return {"model": self.name, "strength": self.strength, "base": self.base.describe()}
