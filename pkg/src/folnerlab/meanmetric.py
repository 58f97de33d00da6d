"""Finitely supported probability measures on G and the mean pseudometrics.

``d_rho(x, y) = sum_g rho(g) d(g x, g y)``.  Flow windows are represented by
their trapezoid quadrature, which is again a finite weighted support.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from . import groups as gr
from .groups import FolnerWindow, GroupSpec
from .systems import DynamicalSystem

WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class GroupMeasure:
    """Probability weights on finitely many distinct group elements.

    ``tag`` is one of ``UniformOnSet``, ``FolnerHaar``, ``FlowQuadrature`` or
    ``Custom``; ``info`` records the family/index or grid that produced it.
    """

    group: GroupSpec
    elements: tuple
    weights: tuple
    tag: str = "Custom"
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if len(self.elements) == 0:
            raise ValueError("a group measure needs a nonempty support")
        if len(self.elements) != len(self.weights):
            raise ValueError("elements and weights differ in length")
        if any(w <= 0 for w in self.weights):
            raise ValueError("weights must be positive")
        total = math.fsum(self.weights)
        if abs(total - 1.0) > WEIGHT_TOL:
            raise ValueError(f"weights sum to {total!r}, not 1")
        if len(set(self.elements)) != len(self.elements):
            raise ValueError("support elements must be distinct")
        for g in self.elements:
            gr.validate(self.group, g)

    def __len__(self) -> int:
        return len(self.elements)

    @property
    def weight_array(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=np.float64)

    def translate(self, h) -> "GroupMeasure":
        """Push forward by right multiplication, ``g -> g h``."""
        kind = self.group.kind
        els = tuple(gr._compose(kind, g, h) for g in self.elements)
        return GroupMeasure(self.group, els, self.weights, "Custom", {"translatedBy": repr(h)})

    def to_json(self) -> dict:
        return {
            "tag": self.tag,
            "info": self.info,
            "support": [[gr.element_to_json(self.group, g), w] for g, w in zip(self.elements, self.weights)],
        }

    @classmethod
    def from_json(cls, group: GroupSpec, obj: dict) -> "GroupMeasure":
        els = tuple(gr.element_from_json(group, e) for e, _ in obj["support"])
        ws = tuple(float(w) for _, w in obj["support"])
        return cls(group, els, ws, obj.get("tag", "Custom"), dict(obj.get("info", {})))


def uniform_on(group: GroupSpec, elements: Sequence) -> GroupMeasure:
    """``rho_E``: equal weights on the distinct members of ``elements``.

    Order of first appearance is kept so translated sets line up.
    """
    els = tuple(dict.fromkeys(elements))
    if not els:
        raise ValueError("cannot put a uniform measure on the empty set")
    n = len(els)
    return GroupMeasure(group, els, (1.0 / n,) * n, "UniformOnSet", {"size": n})


def folner_measure(window: FolnerWindow) -> GroupMeasure:
    """Normalised Haar measure on a Følner window."""
    weights = tuple(window.quadrature_weights())
    if window.interval is not None:
        # renormalise away the rounding of the trapezoid weights
        total = sum(weights)
        weights = tuple(w / total for w in weights)
        info = {"family": window.family, "n": window.n, "T": window.haar_size, "gridStep": window.step}
        return GroupMeasure(window.group, window.elements, weights, "FlowQuadrature", info)
    return GroupMeasure(window.group, window.elements, weights, "FolnerHaar", {"family": window.family, "n": window.n})


def mix(a: GroupMeasure, b: GroupMeasure, lam: float) -> GroupMeasure:
    """``lam a + (1 - lam) b`` with the supports merged."""
    if not 0.0 < lam < 1.0:
        raise ValueError("mixing weight must lie in (0, 1)")
    acc: dict = {}
    for g, w in zip(a.elements, a.weights):
        acc[g] = acc.get(g, 0.0) + lam * w
    for g, w in zip(b.elements, b.weights):
        acc[g] = acc.get(g, 0.0) + (1.0 - lam) * w
    return GroupMeasure(a.group, tuple(acc), tuple(acc.values()), "Custom", {"mixture": lam})


def dirac(group: GroupSpec, g=None) -> GroupMeasure:
    g = gr.identity(group) if g is None else g
    return GroupMeasure(group, (g,), (1.0,), "UniformOnSet", {"size": 1})


def weighted_mean(values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """``sum_g w_g v_g`` along the last axis, anchored at the first column.

    Anchoring makes the result exactly ``v_0`` when all columns agree, which
    keeps isometric systems bit-exact.
    """
    anchor = values[..., :1]
    return anchor[..., 0] + (values - anchor) @ weights


def mean_distance_batch(system: DynamicalSystem, rho: GroupMeasure, X, Y) -> np.ndarray:
    if rho.group != system.group:
        raise ValueError(f"measure lives on {rho.group.name}, system on {system.group.name}")
    per_g = system.orbit_distances(X, Y, rho.elements)
    return weighted_mean(per_g, rho.weight_array)


def mean_distance(system: DynamicalSystem, rho: GroupMeasure, x, y) -> float:
    return float(mean_distance_batch(system, rho, system.as_batch(x), system.as_batch(y))[0])


def in_ball(system: DynamicalSystem, rho: GroupMeasure, center, eps: float, y) -> bool:
    """Open ball membership: ``d_rho(center, y) < eps``."""
    return mean_distance(system, rho, center, y) < eps


def quadrature_error(system: DynamicalSystem, window: FolnerWindow, X, Y) -> np.ndarray:
    """Trapezoid error estimate for flow windows (grid ``h`` vs ``2h``)."""
    if window.interval is None:
        return np.zeros(system.batch_len(X))
    fine = mean_distance_batch(system, folner_measure(window), X, Y)
    coarse_w = gr.folner_window(window.group, window.family, window.n, step=2 * window.step)
    coarse = mean_distance_batch(system, folner_measure(coarse_w), X, Y)
    return np.abs(fine - coarse) / 3.0
