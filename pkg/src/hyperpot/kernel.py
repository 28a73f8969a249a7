"""Finite-volume specification kernels by importance sampling.

The kernel ``γ_Λ(f | ω_{Λ^c})`` is the ratio ``∫ f h_Λ dP_Λ / ∫ h_Λ dP_Λ``
against the Poisson reference ``P_Λ``. Interior configurations are drawn
from ``P_Λ`` and the ratio is estimated by self-normalised importance
sampling; standard errors come from batch means.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .geometry import Box, Window, cluster_labels
from .models import ModelError, PreModification, hardcore_indicator
from .sampling import MINUS, PLUS, MarkedConfiguration, sample_marked_ppp


class SamplingWarning(UserWarning):
    """Effective sample size fell below the configured fraction of the budget."""


# ---------------------------------------------------------------------------
# observables


@dataclass
class Observable:
    """Bounded function of the full configuration.

    ``exterior_only`` marks functions of ``ω_{Λ^c}`` alone and ``constant``
    marks constant functions; both are evaluated without sampling.
    """

    name: str
    fn: Callable[[MarkedConfiguration], float]
    exterior_only: bool = False
    constant: float | None = None

    def __call__(self, config: MarkedConfiguration) -> float:
        if self.constant is not None:
            return float(self.constant)
        return float(self.fn(config))


def _in(config: MarkedConfiguration, window: Window | None) -> MarkedConfiguration:
    return config if window is None else config.restrict(window)


def point_count(window: Window | None = None) -> Observable:
    return Observable("point_count", lambda c: len(_in(c, window)))


def minus_count(window: Window | None = None) -> Observable:
    return Observable("minus_count", lambda c: _in(c, window).n_minus)


def plus_count(window: Window | None = None) -> Observable:
    return Observable("plus_count", lambda c: _in(c, window).n_plus)


def plus_fraction(window: Window | None = None) -> Observable:
    def fn(c):
        sub = _in(c, window)
        return sub.n_plus / len(sub) if len(sub) else 0.0
    return Observable("plus_fraction", fn)


def cluster_count(r: float, window: Window | None = None) -> Observable:
    """Number of ``2r``-clusters of the configuration that meet ``window``."""
    def fn(c):
        if len(c) == 0:
            return 0
        labels = cluster_labels(c.points, r)
        if window is None:
            return len(np.unique(labels))
        return len(np.unique(labels[window.contains(c.points)]))
    return Observable("cluster_count", fn)


def hardcore_valid(r: float) -> Observable:
    return Observable("hardcore_valid", lambda c: hardcore_indicator(None, c, r))


def constant(value: float) -> Observable:
    return Observable("constant", lambda c: value, constant=float(value))


def exterior_observable(inner: Observable, window: Window) -> Observable:
    """``inner`` applied to the part of the configuration outside ``window``."""
    return Observable(f"exterior_{inner.name}", lambda c: inner(c.outside(window)),
                      exterior_only=True)


OBSERVABLES = {
    "point_count": lambda win, r: point_count(win),
    "minus_count": lambda win, r: minus_count(win),
    "plus_count": lambda win, r: plus_count(win),
    "plus_fraction": lambda win, r: plus_fraction(win),
    "cluster_count": lambda win, r: cluster_count(r, win),
    "hardcore_valid": lambda win, r: hardcore_valid(r),
}


# ---------------------------------------------------------------------------
# kernel


@dataclass
class KernelEstimate:
    estimate: float
    stderr: float
    ess: float
    n_samples: int
    exact: bool = False
    batches: list[float] = field(default_factory=list)


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


class SpecificationKernel:
    """Monte Carlo handle on ``γ_Λ`` for one pre-modification.

    Parameters
    ----------
    model : PreModification
    window : Window
        The finite volume ``Λ``.
    n_samples : int
        Interior draws per evaluation (at least 1000 for :func:`kernel_apply`).
    seed : int or numpy.random.Generator
    n_batches : int
        Batches for the batch-means standard error.
    intensities : dict, optional
        Reference intensities; defaults to ``model.reference_intensities()``.
    """

    def __init__(self, model: PreModification, window: Window, n_samples: int = 10_000,
                 seed=0, n_batches: int = 20, intensities: dict | None = None,
                 ess_warn: float = 0.01):
        if n_samples < n_batches:
            raise ValueError("need at least one sample per batch")
        self.model = model
        self.window = window
        self.n_samples = int(n_samples)
        self.n_batches = int(n_batches)
        self.intensities = dict(intensities or model.reference_intensities())
        self.rng = _rng(seed)
        self.ess_warn = ess_warn

    def draw(self, n: int | None = None) -> list[MarkedConfiguration]:
        n = self.n_samples if n is None else n
        return [sample_marked_ppp(self.window, self.intensities, self.rng) for _ in range(n)]

    def log_weights(self, interiors, exterior: MarkedConfiguration) -> tuple[np.ndarray, list]:
        configs = [inner.union(exterior) for inner in interiors]
        logw = np.array([self.model.log_h(self.window, c) for c in configs])
        return logw, configs

    def check_exterior(self, exterior: MarkedConfiguration) -> MarkedConfiguration:
        ext = exterior.outside(self.window)
        if not self.model.admissible(ext):
            raise ModelError(f"exterior is not admissible for {self.model.name}")
        return ext


def _batch_ratio(num: np.ndarray, den: np.ndarray, n_batches: int) -> tuple[float, float, list]:
    total = den.sum()
    estimate = float(num.sum() / total)
    parts = []
    for nb, db in zip(np.array_split(num, n_batches), np.array_split(den, n_batches)):
        s = db.sum()
        if s > 0:
            parts.append(float(nb.sum() / s))
    if len(parts) < 2:
        return estimate, math.inf, parts
    return estimate, float(np.std(parts, ddof=1) / math.sqrt(len(parts))), parts


def _normalised_weights(logw: np.ndarray, what: str) -> np.ndarray:
    if np.any(logw == np.inf):
        raise ModelError(f"infinite weight sampled ({what})")
    finite = np.isfinite(logw)
    if not finite.any():
        raise ModelError(f"all sampled weights vanish ({what}); exterior incompatible with "
                         "every draw at this budget")
    shift = logw[finite].max()
    return np.where(finite, np.exp(np.where(finite, logw - shift, 0.0)), 0.0)


def effective_sample_size(w: np.ndarray) -> float:
    s = w.sum()
    return float(s * s / np.sum(w * w)) if s > 0 else 0.0


def kernel_apply(kernel: SpecificationKernel, f: Observable, exterior: MarkedConfiguration,
                 min_samples: int = 1000) -> KernelEstimate:
    """Estimate ``γ_Λ(f | ω_{Λ^c})`` with its batch-means standard error."""
    ext = kernel.check_exterior(exterior)
    if f.constant is not None:
        return KernelEstimate(float(f.constant), 0.0, math.inf, 0, exact=True)
    if f.exterior_only:
        return KernelEstimate(f(ext), 0.0, math.inf, 0, exact=True)
    if kernel.n_samples < min_samples:
        raise ValueError(f"kernel budget {kernel.n_samples} below the minimum {min_samples}")
    logw, configs = kernel.log_weights(kernel.draw(), ext)
    w = _normalised_weights(logw, "kernel")
    values = np.array([f(c) if wi > 0 else 0.0 for c, wi in zip(configs, w)])
    est, se, parts = _batch_ratio(w * values, w, kernel.n_batches)
    ess = effective_sample_size(w)
    if ess < kernel.ess_warn * kernel.n_samples:
        warnings.warn(f"effective sample size {ess:.1f} below {kernel.ess_warn:g} N",
                      SamplingWarning, stacklevel=2)
    return KernelEstimate(est, se, ess, kernel.n_samples, batches=parts)


def partition_function(kernel: SpecificationKernel, exterior: MarkedConfiguration
                       ) -> KernelEstimate:
    """Monte Carlo mean of ``h_Λ`` over the Poisson reference."""
    ext = kernel.check_exterior(exterior)
    logw, _ = kernel.log_weights(kernel.draw(), ext)
    if np.any(logw == np.inf):
        raise ModelError("infinite weight: partition function is not finite")
    w = np.exp(logw)
    if not np.any(w > 0):
        raise ModelError("all sampled weights vanish; partition function estimate is 0")
    batches = [float(b.mean()) for b in np.array_split(w, kernel.n_batches)]
    se = float(np.std(batches, ddof=1) / math.sqrt(len(batches)))
    return KernelEstimate(float(w.mean()), se, effective_sample_size(w), len(w),
                          batches=batches)


# ---------------------------------------------------------------------------
# consistency


@dataclass
class DlrReport:
    one_stage: float
    two_stage: float
    difference: float
    stderr: float
    z: float
    ess: float
    n_outer: int
    n_inner: int
    threshold: float = 4.0

    @property
    def passed(self) -> bool:
        return abs(self.z) < self.threshold

    def to_json(self) -> dict:
        return {"estimate": self.two_stage, "one_stage": self.one_stage,
                "difference": self.difference, "stderr": self.stderr, "z": self.z,
                "ess": self.ess, "n_outer": self.n_outer, "n_inner": self.n_inner,
                "passed": self.passed}


def dlr_consistency_check(model: PreModification, inner: Window, outer: Window,
                          exterior: MarkedConfiguration, f: Observable, budget: int = 100_000,
                          seed=0, n_inner: int = 20, n_batches: int = 20,
                          intensities: dict | None = None) -> DlrReport:
    """Compare ``γ_Δ(f | ω)`` with ``γ_Δ(γ_Λ(f | ·) | ω)``.

    ``budget`` inner evaluations are split as ``n_outer = budget // n_inner``
    draws from ``γ_Δ``, each followed by ``n_inner`` draws from ``γ_Λ``.
    Both sides are computed on the same outer draws, so the z-score is taken
    from batch means of the paired differences ``f(ω') - γ_Λ(f | ω'_{Λ^c})``.
    The inner ratio estimate is biased at order ``1/n_inner``.
    """
    if not np.all(outer.contains(inner.sample_uniform(np.random.default_rng(0), 64))):
        raise ValueError("inner window must lie inside the outer window")
    rng = _rng(seed)
    n_outer = max(budget // n_inner, n_batches * 2)
    outer_k = SpecificationKernel(model, outer, n_outer, rng, n_batches, intensities)
    inner_k = SpecificationKernel(model, inner, n_inner, rng, 1, intensities)
    ext = outer_k.check_exterior(exterior)
    logw, configs = outer_k.log_weights(outer_k.draw(), ext)
    w = _normalised_weights(logw, "outer window")
    fvals = np.zeros(n_outer)
    gvals = np.zeros(n_outer)
    for i, (c, wi) in enumerate(zip(configs, w)):
        if wi == 0:
            continue
        fvals[i] = f(c)
        rest = c.outside(inner)
        lw, inner_configs = inner_k.log_weights(inner_k.draw(), rest)
        wv = _normalised_weights(lw, "inner window")
        gvals[i] = float(np.dot(wv, [f(x) if v > 0 else 0.0 for x, v in zip(inner_configs, wv)])
                         / wv.sum())
    one, _, _ = _batch_ratio(w * fvals, w, n_batches)
    two, _, _ = _batch_ratio(w * gvals, w, n_batches)
    diff, se, _ = _batch_ratio(w * (fvals - gvals), w, n_batches)
    z = diff / se if se > 0 else (0.0 if diff == 0 else math.copysign(math.inf, diff))
    return DlrReport(one, two, diff, se, z, effective_sample_size(w), n_outer, n_inner)


@dataclass
class SwapReport:
    trials: int
    max_error: float
    structural_failures: int
    zero_pairs: int

    def passed(self, tol: float = 1e-10) -> bool:
        return self.structural_failures == 0 and self.max_error < tol


def random_nested_boxes(rng: np.random.Generator, frame: Box) -> tuple[Box, Box]:
    """Random ``Λ ⊂ Δ ⊆ frame``."""
    lo, hi = np.array(frame.lo), np.array(frame.hi)
    a, b = np.sort(rng.uniform(lo, hi, size=(2, len(lo))), axis=0)
    delta = Box(tuple(a), tuple(b))
    c, d = np.sort(rng.uniform(a, b, size=(2, len(lo))), axis=0)
    return Box(tuple(c), tuple(d)), delta


def premod_swap_check(model: PreModification, trials: int = 500, frame: Box | None = None,
                      intensities: dict | None = None, seed=0) -> SwapReport:
    """``h_Δ(ω_Λ ω_{Λ^c}) h_Λ(ω'_Λ ω_{Λ^c}) = h_Λ(ω_Λ ω_{Λ^c}) h_Δ(ω'_Λ ω_{Λ^c})``.

    Checked additively in log space; zero weights must vanish on both sides.
    """
    rng = _rng(seed)
    frame = frame or Box((0.0, 0.0), (10.0, 10.0))
    rates = dict(intensities or model.reference_intensities())
    worst, broken, zeros = 0.0, 0, 0
    for _ in range(trials):
        lam, delta = random_nested_boxes(rng, frame)
        omega = sample_marked_ppp(frame, rates, rng)
        prime = sample_marked_ppp(lam, rates, rng)
        swapped = prime.union(omega.outside(lam))
        lhs = (model.log_h(delta, omega), model.log_h(lam, swapped))
        rhs = (model.log_h(lam, omega), model.log_h(delta, swapped))
        lzero = any(v == -math.inf for v in lhs)
        rzero = any(v == -math.inf for v in rhs)
        if lzero or rzero:
            if lzero != rzero:
                broken += 1
            else:
                zeros += 1
            continue
        worst = max(worst, abs(sum(lhs) - sum(rhs)))
    return SwapReport(trials, worst, broken, zeros)


__all__ = [
    "DlrReport", "KernelEstimate", "MINUS", "OBSERVABLES", "Observable", "PLUS",
    "SamplingWarning", "SpecificationKernel", "SwapReport", "cluster_count", "constant",
    "dlr_consistency_check", "effective_sample_size", "exterior_observable", "hardcore_valid",
    "kernel_apply", "minus_count", "partition_function", "plus_count", "plus_fraction",
    "point_count", "premod_swap_check", "random_nested_boxes",
]
