"""Marked configurations, marked Poisson sampling and spin-flip evolution."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .geometry import Window, as_points, window_from_json

PLUS, MINUS = 1, -1


def _mark_to_json(m: int):
    if m == PLUS:
        return "+"
    if m == MINUS:
        return "-"
    return int(m)


def _mark_from_json(m) -> int:
    if m == "+":
        return PLUS
    if m == "-":
        return MINUS
    return int(m)


class MarkedConfiguration:
    """Finite set of distinct marked points, optionally tied to a window.

    Positions and marks are stored as read-only numpy arrays. Equality and
    hashing are by the set of ``(position, mark)`` pairs, so two
    configurations listing the same points in different order compare equal.
    """

    __slots__ = ("points", "marks", "window", "_key")

    def __init__(self, points, marks, window: Window | None = None, dim: int | None = None,
                 check: bool = True):
        if dim is None and window is not None:
            dim = window.dim
        pts = as_points(points, dim)
        mk = np.asarray(marks, dtype=int).reshape(-1)
        if len(mk) != len(pts):
            raise ValueError("points and marks differ in length")
        if check and len(pts) > 1:
            if len({tuple(row) for row in pts}) != len(pts):
                raise ValueError("points must be pairwise distinct")
        pts = pts.copy()
        mk = mk.copy()
        pts.setflags(write=False)
        mk.setflags(write=False)
        self.points = pts
        self.marks = mk
        self.window = window
        self._key = None

    @classmethod
    def empty(cls, dim: int, window: Window | None = None) -> "MarkedConfiguration":
        return cls(np.zeros((0, dim)), np.zeros(0, dtype=int), window, dim)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return len(self.marks)

    def __repr__(self) -> str:
        return f"MarkedConfiguration(n={len(self)}, dim={self.dim})"

    def key(self) -> frozenset:
        if self._key is None:
            self._key = frozenset(
                (tuple(float(v) for v in p), int(m)) for p, m in zip(self.points, self.marks))
        return self._key

    def __eq__(self, other) -> bool:
        return isinstance(other, MarkedConfiguration) and self.key() == other.key()

    def __hash__(self) -> int:
        return hash(self.key())

    @property
    def n_plus(self) -> int:
        return int(np.count_nonzero(self.marks == PLUS))

    @property
    def n_minus(self) -> int:
        return int(np.count_nonzero(self.marks == MINUS))

    def subset(self, idx) -> "MarkedConfiguration":
        idx = np.asarray(idx, dtype=int).reshape(-1)
        return MarkedConfiguration(self.points[idx], self.marks[idx], self.window, self.dim,
                                   check=False)

    def mask(self, keep) -> "MarkedConfiguration":
        keep = np.asarray(keep, dtype=bool)
        return MarkedConfiguration(self.points[keep], self.marks[keep], self.window, self.dim,
                                   check=False)

    def restrict(self, window: Window) -> "MarkedConfiguration":
        """Configuration inside ``window`` (the ``ω_Λ`` of the text)."""
        if len(self) == 0:
            return self
        return self.mask(window.contains(self.points))

    def outside(self, window: Window) -> "MarkedConfiguration":
        """Configuration outside ``window`` (``ω_{Λ^c}``)."""
        if len(self) == 0:
            return self
        return self.mask(~window.contains(self.points))

    def union(self, other: "MarkedConfiguration") -> "MarkedConfiguration":
        if len(other) == 0:
            return self
        if len(self) == 0:
            return MarkedConfiguration(other.points, other.marks, self.window or other.window,
                                       other.dim, check=False)
        return MarkedConfiguration(np.vstack([self.points, other.points]),
                                   np.concatenate([self.marks, other.marks]),
                                   self.window, self.dim)

    def translate(self, z) -> "MarkedConfiguration":
        z = np.asarray(z, dtype=float)
        win = self.window.translate(z) if self.window is not None else None
        return MarkedConfiguration(self.points + z, self.marks, win, self.dim, check=False)

    def with_marks(self, marks) -> "MarkedConfiguration":
        return MarkedConfiguration(self.points, marks, self.window, self.dim, check=False)

    # -- serialisation ----------------------------------------------------

    def to_json(self) -> dict:
        return {
            "dim": self.dim,
            "window": self.window.to_json() if self.window is not None else None,
            "points": [{"x": [float(v) for v in p], "mark": _mark_to_json(int(m))}
                       for p, m in zip(self.points, self.marks)],
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "MarkedConfiguration":
        try:
            dim = int(obj["dim"])
            win = window_from_json(obj["window"]) if obj.get("window") else None
            pts = [p["x"] for p in obj["points"]]
            marks = [_mark_from_json(p["mark"]) for p in obj["points"]]
        except (KeyError, TypeError, AttributeError) as exc:
            raise ValueError(f"malformed configuration: missing or bad field {exc}") from None
        points = np.asarray(pts, dtype=float).reshape(len(pts), dim)
        return cls(points, marks, win, dim)


def dump_configurations(configs: Iterable[MarkedConfiguration]) -> str:
    """JSON-lines text, one configuration per line."""
    return "".join(json.dumps(c.to_json(), sort_keys=True) + "\n" for c in configs)


def load_configurations(text: str) -> list[MarkedConfiguration]:
    """Read one configuration, a JSON list of them, or JSON lines.

    A top-level object with a ``"configuration"`` key (as written by the
    command line) is unwrapped.
    """
    text = text.strip()
    if not text:
        return []
    try:
        objs = [json.loads(text)]
    except json.JSONDecodeError:
        objs = [json.loads(line) for line in text.splitlines() if line.strip()]
    if len(objs) == 1 and isinstance(objs[0], list):
        objs = objs[0]
    return [MarkedConfiguration.from_json(o.get("configuration", o) if isinstance(o, dict) else o)
            for o in objs]


# ---------------------------------------------------------------------------
# Poisson sampling


@dataclass(frozen=True)
class IntensitySpec:
    """Per-mark intensities for the two-colour process (points per unit volume)."""

    lambda_plus: float
    lambda_minus: float

    def __post_init__(self):
        for v in (self.lambda_plus, self.lambda_minus):
            if not (v >= 0 and math.isfinite(v)):
                raise ValueError("intensities must be finite and nonnegative")

    @property
    def total(self) -> float:
        return self.lambda_plus + self.lambda_minus

    def as_dict(self) -> dict[int, float]:
        return {PLUS: self.lambda_plus, MINUS: self.lambda_minus}


def _intensity_dict(intensities) -> dict[int, float]:
    if isinstance(intensities, IntensitySpec):
        return intensities.as_dict()
    out = {int(k): float(v) for k, v in dict(intensities).items()}
    if any(not (v >= 0 and math.isfinite(v)) for v in out.values()):
        raise ValueError("intensities must be finite and nonnegative")
    return out


def sample_marked_ppp(window: Window, intensities, seed) -> MarkedConfiguration:
    """Independent homogeneous Poisson processes per mark, superposed.

    ``seed`` may be an int or a ``numpy.random.Generator`` (the latter lets
    callers draw many configurations from one stream).
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    rates = _intensity_dict(intensities)
    vol = window.volume
    pts, marks = [], []
    for mark in sorted(rates):
        mean = rates[mark] * vol
        n = int(rng.poisson(mean)) if mean > 0 else 0
        if n:
            pts.append(window.sample_uniform(rng, n))
            marks.append(np.full(n, mark, dtype=int))
    if not pts:
        return MarkedConfiguration.empty(window.dim, window)
    return MarkedConfiguration(np.vstack(pts), np.concatenate(marks), window, window.dim,
                               check=False)


# ---------------------------------------------------------------------------
# spin flips


def _flip_decay(t: float) -> float:
    """``exp(-2t)``, with ``t = inf`` allowed."""
    if t < 0 or math.isnan(t):
        raise ValueError("time must be nonnegative")
    return 0.0 if math.isinf(t) else math.exp(-2.0 * t)


def transition_matrix(t: float) -> np.ndarray:
    """Rate-one flip kernel at time ``t``; rows/columns ordered ``(+, -)``."""
    e = _flip_decay(t)
    stay, flip = 0.5 * (1.0 + e), 0.5 * (1.0 - e)
    return np.array([[stay, flip], [flip, stay]])


def time_evolve_marks(config: MarkedConfiguration, t: float, seed) -> MarkedConfiguration:
    if np.any((config.marks != PLUS) & (config.marks != MINUS)):
        raise ValueError("spin flips need marks in {+, -}")
    p_flip = transition_matrix(t)[0, 1]
    if len(config) == 0 or p_flip == 0.0:
        return config
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    flips = rng.uniform(size=len(config)) < p_flip
    return config.with_marks(np.where(flips, -config.marks, config.marks))


def evolved_intensities(intensities: IntensitySpec, t: float) -> tuple[float, float]:
    """Per-mark rates of the time-``t`` marginal, ``(F({+}), F({-}))``."""
    p = transition_matrix(t)
    lp, lm = intensities.lambda_plus, intensities.lambda_minus
    return lp * p[0, 0] + lm * p[1, 0], lp * p[0, 1] + lm * p[1, 1]
