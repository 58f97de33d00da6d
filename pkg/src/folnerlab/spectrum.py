"""Discrete-spectrum diagnostics and the cross-validation harness.

Three finite-data views of discrete spectrum are compared: bounded mean
complexity (along Følner windows and over finite sets), precompact orbits of
test functions in ``L^2``, and mean equicontinuity of close pairs.  Positive
verdicts only mean no obstruction was found at the tested scales.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from . import complexity as cx
from . import groups as gr
from .meanmetric import folner_measure, weighted_mean
from .systems import (
    DynamicalSystem,
    GroundTruth,
    PointSample,
    TestFunction,
    product_lift,
    sample_measure,
)

log = logging.getLogger(__name__)

__all__ = [
    "l2_distance",
    "orbit_net_profile",
    "mean_equicontinuity_test",
    "equicontinuity_in_mean_test",
    "birkhoff_convergence_check",
    "product_lift",
    "cross_validate",
]

_CHUNK_ELEMS = 4_000_000
_SHULMAN_PREFIX = 8


class NetVerdict(str, Enum):
    PRECOMPACT = "Precompact"
    NOT_PRECOMPACT = "NotPrecompact"
    INCONCLUSIVE = "Inconclusive"


class Outcome(str, Enum):
    PASS = "pass"
    FAIL = "fail"
    INCONCLUSIVE = "Inconclusive"


class EquicontinuityMode(str, Enum):
    MEAN_LIMSUP = "MeanLimsup"
    IN_THE_MEAN = "InTheMean"


# ---------------------------------------------------------------------------
# L^2 orbits of test functions


def _translates(system: DynamicalSystem, f: TestFunction, elements: Sequence, X) -> np.ndarray:
    """Rows ``f(g x_i)`` for ``g`` in ``elements``; shape ``(G, N)``."""
    return np.stack([np.asarray(f.evaluate(system.apply_batch(g, X)), dtype=complex) for g in elements])


def l2_distance(system: DynamicalSystem, f: TestFunction, g, h, sample: PointSample) -> float:
    """Empirical ``L^2(mu)`` distance between ``f∘g`` and ``f∘h``."""
    X = sample.states
    if g == h:
        return 0.0
    a = np.asarray(f.evaluate(system.apply_batch(g, X)), dtype=complex)
    b = np.asarray(f.evaluate(system.apply_batch(h, X)), dtype=complex)
    return float(np.sqrt(np.mean(np.abs(a - b) ** 2)))


@dataclass
class OrbitNetReport:
    function: str
    epsilon: float
    entries: list[tuple[int, int]]
    verdict: NetVerdict
    family: str = ""
    sample_size: int = 0
    seed: int = 0

    def to_json(self) -> dict:
        return {
            "function": self.function,
            "family": self.family,
            "epsilon": self.epsilon,
            "entries": [{"n": n, "netSize": k} for n, k in self.entries],
            "verdict": self.verdict.value,
            "sampleSize": self.sample_size,
            "seed": self.seed,
        }


def _net_verdict(v: cx.Verdict) -> NetVerdict:
    return {
        cx.Verdict.BOUNDED: NetVerdict.PRECOMPACT,
        cx.Verdict.UNBOUNDED: NetVerdict.NOT_PRECOMPACT,
    }.get(v, NetVerdict.INCONCLUSIVE)


def leader_net(vectors: np.ndarray, eps: float) -> np.ndarray:
    """Indices of a leader ``eps``-net in row order.

    A row becomes a leader when its empirical ``L^2`` distance to every
    earlier leader is at least ``eps``; the leaders chosen among the first
    ``k`` rows never depend on later rows.
    """
    n_pts = vectors.shape[1]
    thresh = eps * eps * n_pts
    sq = np.sum(np.abs(vectors) ** 2, axis=1)
    leaders: list[int] = []
    step = 256
    for start in range(0, vectors.shape[0], step):
        rows = np.arange(start, min(start + step, vectors.shape[0]))
        V = vectors[rows]
        covered = np.zeros(len(rows), dtype=bool)
        if leaders:
            lead = np.asarray(leaders)
            d2 = sq[rows, None] + sq[None, lead] - 2.0 * (V @ vectors[lead].conj().T).real
            covered |= (d2 < thresh).any(axis=1)
        inner = sq[rows, None] + sq[None, rows] - 2.0 * (V @ V.conj().T).real < thresh
        for i in range(len(rows)):
            if covered[i]:
                continue
            leaders.append(int(rows[i]))
            covered |= inner[i]
    return np.asarray(leaders, dtype=np.int64)


def _prefix_windows(spec: gr.GroupSpec, family: str, n_list: Sequence[int], step: float) -> list[gr.FolnerWindow]:
    wins = [gr.folner_window(spec, family, n, step=step) for n in sorted(n_list)]
    top = wins[-1].elements
    for w in wins:
        if tuple(top[: len(w)]) != tuple(w.elements):
            raise ValueError(f"family {family!r} is not nested by prefixes")
    return wins


def orbit_net_profile(
    system: DynamicalSystem,
    f: TestFunction,
    family: str,
    eps: float,
    n_list: Sequence[int],
    n_samples: int,
    seed: int,
    step: float = gr.DEFAULT_FLOW_STEP,
    theta: float = cx.DEFAULT_THETA,
    stability: int = cx.DEFAULT_STABILITY,
) -> OrbitNetReport:
    """Leader-net sizes of ``{f∘g : g in F_n}`` along one family."""
    wins = _prefix_windows(system.group, family, n_list, step)
    X = sample_measure(system, n_samples, seed).states
    vecs = _translates(system, f, wins[-1].elements, X)
    leaders = leader_net(vecs, eps)
    entries = [(w.n, int(np.count_nonzero(leaders < len(w)))) for w in wins]
    verdict = _net_verdict(cx.boundedness_verdict(entries, theta, stability))
    return OrbitNetReport(f.name, eps, entries, verdict, family, n_samples, seed)


# ---------------------------------------------------------------------------
# mean equicontinuity


@dataclass
class DeltaTrial:
    delta: float
    accepted_pairs: int
    proposals: int
    failure_mass: float
    passed: bool

    def to_json(self) -> dict:
        return {
            "delta": self.delta,
            "acceptedPairs": self.accepted_pairs,
            "proposals": self.proposals,
            "failureMass": self.failure_mass,
            "passed": self.passed,
        }


@dataclass
class EquicontinuityReport:
    mode: EquicontinuityMode
    epsilon: float
    family: str
    n_list: list[int]
    trials: list[DeltaTrial]
    outcome: Outcome
    delta_found: float | None
    excluded_mass: float | None
    shulman: float | None
    diagnostics: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "mode": self.mode.value,
            "epsilon": self.epsilon,
            "family": self.family,
            "nList": self.n_list,
            "trials": [t.to_json() for t in self.trials],
            "outcome": self.outcome.value,
            "deltaFound": self.delta_found,
            "excludedMass": self.excluded_mass,
            "shulmanConstant": self.shulman,
            "diagnostics": self.diagnostics,
        }


def geometric_n_list(spec: gr.GroupSpec, n_max: int) -> list[int]:
    """``1, 2, 4, ...`` up to ``n_max`` (always including ``n_max``)."""
    out = []
    n = 1
    while n < n_max:
        out.append(n)
        n *= 2
    out.append(n_max)
    return out


def window_means(
    system: DynamicalSystem, X, Y, wins: Sequence[gr.FolnerWindow]
) -> np.ndarray:
    """``d_{F_n}(x_i, y_i)`` for prefix-nested windows; shape ``(N, len(wins))``."""
    top = wins[-1].elements
    weights = [folner_measure(w).weight_array for w in wins]
    n = system.batch_len(X)
    out = np.empty((n, len(wins)))
    step = max(1, _CHUNK_ELEMS // max(len(top), 1))
    for start in range(0, n, step):
        idx = np.arange(start, min(n, start + step))
        D = system.orbit_distances(system.take(X, idx), system.take(Y, idx), top)
        for k, (w, wt) in enumerate(zip(wins, weights)):
            out[idx, k] = weighted_mean(D[:, : len(w)], wt)
    return out


def tempered_precheck(spec: gr.GroupSpec, family: str, n_max: int) -> tuple[float, bool]:
    """Prefix Shulman constant and whether its ratios look bounded.

    Ratios that grow by the same rule that flags unbounded complexity
    profiles count as a failed check.  A finite prefix can only refute.
    """
    res = gr.shulman_constant(spec, family, max(2, min(n_max, _SHULMAN_PREFIX)))
    if res.analytic:
        return res.constant, True
    growing = cx.boundedness_verdict(sorted(res.ratios.items())) is cx.Verdict.UNBOUNDED
    return res.constant, not growing


def _equicontinuity(
    mode: EquicontinuityMode,
    system: DynamicalSystem,
    family: str,
    eps: float,
    n_pairs: int,
    n_max: int,
    seed: int,
    levels: int = 4,
    n_list: Sequence[int] | None = None,
    step: float = gr.DEFAULT_FLOW_STEP,
    stop_at_first: bool = True,
) -> EquicontinuityReport:
    n_list = sorted(n_list) if n_list is not None else geometric_n_list(system.group, n_max)
    diag: list[str] = []
    C, tempered = tempered_precheck(system.group, family, n_list[-1])
    if not tempered:
        diag.append(f"prefix Shulman ratios keep growing (max {C:.3g}); family not tempered on this prefix")
        return EquicontinuityReport(mode, eps, family, list(n_list), [], Outcome.INCONCLUSIVE, None, None, C, diag)
    wins = _prefix_windows(system.group, family, n_list, step)
    rng = np.random.default_rng(seed)
    X = system.sample(n_pairs, rng)
    tail = max(1, math.ceil(len(wins) / 4))
    trials: list[DeltaTrial] = []
    found = None
    for k in range(levels):
        delta = eps / 2**k
        Y, ok, proposals = system.sample_near(X, delta, rng)
        idx = np.flatnonzero(ok)
        if idx.size == 0:
            diag.append(f"no close pairs found at delta={delta:.4g} after {proposals} proposals")
            continue
        means = window_means(system, system.take(X, idx), system.take(Y, idx), wins)
        stat = means[:, -tail:].max(axis=1) if mode is EquicontinuityMode.MEAN_LIMSUP else means.max(axis=1)
        mass = float(np.mean(stat > 2.0 * eps))
        passed = mass < eps
        trials.append(DeltaTrial(delta, int(idx.size), int(proposals), mass, passed))
        if passed and found is None:
            found = trials[-1]
            if stop_at_first:
                break
    if found is not None:
        return EquicontinuityReport(mode, eps, family, list(n_list), trials, Outcome.PASS, found.delta, found.failure_mass, C, diag)
    outcome = Outcome.FAIL if trials else Outcome.INCONCLUSIVE
    return EquicontinuityReport(mode, eps, family, list(n_list), trials, outcome, None, None, C, diag)


def mean_equicontinuity_test(system, family, eps, n_pairs, n_max, seed, **kw) -> EquicontinuityReport:
    """Close pairs whose late-window mean distance stays within ``2 eps``.

    ``delta`` runs over ``eps, eps/2, ...``; a level passes when the share of
    sampled ``delta``-close pairs with ``max`` over the top quartile of
    windows above ``2 eps`` is below ``eps``.
    """
    return _equicontinuity(EquicontinuityMode.MEAN_LIMSUP, system, family, eps, n_pairs, n_max, seed, **kw)


def equicontinuity_in_mean_test(system, family, eps, n_pairs, n_max, seed, **kw) -> EquicontinuityReport:
    """As :func:`mean_equicontinuity_test` but with the sup over every window."""
    return _equicontinuity(EquicontinuityMode.IN_THE_MEAN, system, family, eps, n_pairs, n_max, seed, **kw)


@dataclass
class BirkhoffReport:
    family: str
    n_list: list[int]
    averages: np.ndarray  # (pairs, windows)
    oscillation: np.ndarray  # per pair, over the last three windows

    @property
    def max_fluctuation(self) -> float:
        return float(self.oscillation.max())

    def quantile(self, q: float) -> float:
        return float(np.quantile(self.oscillation, q))

    def to_json(self) -> dict:
        return {
            "family": self.family,
            "nList": self.n_list,
            "maxFluctuation": self.max_fluctuation,
            "q95": self.quantile(0.95),
        }


def birkhoff_convergence_check(
    system: DynamicalSystem,
    family: str,
    f2: Callable | None = None,
    pair_count: int = 200,
    n_max: int = 256,
    seed: int = 0,
    n_list: Sequence[int] | None = None,
    step: float = gr.DEFAULT_FLOW_STEP,
) -> BirkhoffReport:
    """Ergodic averages of ``f2(g x, g y)`` over ``F_n`` for random pairs.

    ``f2(system, X, Y)`` returns one value per row; the default is the
    metric.  Reports the spread over the last three windows per pair.
    """
    n_list = sorted(n_list) if n_list is not None else geometric_n_list(system.group, n_max)
    wins = _prefix_windows(system.group, family, n_list, step)
    rng = np.random.default_rng(seed)
    X = system.sample(pair_count, rng)
    Y = system.sample(pair_count, rng)
    if f2 is None:
        avg = window_means(system, X, Y, wins)
    else:
        vals = np.stack(
            [np.asarray(f2(system, system.apply_batch(g, X), system.apply_batch(g, Y)), dtype=float) for g in wins[-1].elements],
            axis=1,
        )
        avg = np.stack([weighted_mean(vals[:, : len(w)], folner_measure(w).weight_array) for w in wins], axis=1)
    last = avg[:, -3:]
    return BirkhoffReport(family, list(n_list), avg, last.max(axis=1) - last.min(axis=1))


# ---------------------------------------------------------------------------
# cross validation


@dataclass
class CrossValidationConfig:
    """Scales and windows for one run of :func:`cross_validate`."""

    families: list[str]
    complexity_eps: float
    complexity_n_list: list[int]
    sample_size: int
    maxmean_budget: int = 50
    maxmean_sizes: list[int] = field(default_factory=lambda: list(cx.DEFAULT_SIZES))
    maxmean_sample_size: int | None = None
    net_eps: float = 0.3
    net_n_list: list[int] = field(default_factory=list)
    net_sample_size: int = 1000
    equicont_eps: float = 0.1
    equicont_n_max: int = 256
    equicont_pairs: int = 300
    seed: int = 0
    theta: float = cx.DEFAULT_THETA
    stability: int = cx.DEFAULT_STABILITY

    def to_json(self) -> dict:
        return {
            "families": self.families,
            "complexityEps": self.complexity_eps,
            "complexityNList": self.complexity_n_list,
            "sampleSize": self.sample_size,
            "maxmeanBudget": self.maxmean_budget,
            "maxmeanSizes": self.maxmean_sizes,
            "maxmeanSampleSize": self.maxmean_sample_size,
            "netEps": self.net_eps,
            "netNList": self.net_n_list,
            "netSampleSize": self.net_sample_size,
            "equicontEps": self.equicont_eps,
            "equicontNMax": self.equicont_n_max,
            "equicontPairs": self.equicont_pairs,
            "seed": self.seed,
            "theta": self.theta,
            "stability": self.stability,
        }


def default_config(system: DynamicalSystem, seed: int = 0) -> CrossValidationConfig:
    """Per-group scales at which every built-in system gives definite verdicts.

    Shift spaces over the larger groups have strongly concentrated mean
    metrics, so they are probed at a coarser complexity scale and on short
    window lists.
    """
    spec = system.group
    base = getattr(system, "base", system)
    fams = gr.families(spec)
    kind = spec.kind
    if kind is gr.GroupKind.INTEGER_LINE:
        if base.name == "bernoulli-shift":
            cfg = CrossValidationConfig(fams, 0.2, [2, 4, 8, 16], 4000, maxmean_sizes=[1, 2, 4, 8, 16, 32],
                                        net_eps=0.5, net_n_list=[2, 4, 8, 16, 32])
        else:
            cfg = CrossValidationConfig(fams, 0.2, [8, 16, 32, 64, 128, 256], 1000,
                                        net_eps=0.5, net_n_list=[256, 512, 1024, 2048])
    elif kind is gr.GroupKind.REAL_FLOW:
        cfg = CrossValidationConfig(fams, 0.2, [8, 16, 32, 64, 128, 256], 1000, net_n_list=[32, 64, 128, 256])
    elif kind is gr.GroupKind.INTEGER_LATTICE:
        if base.name == "bernoulli-shift":
            cfg = CrossValidationConfig(fams, 0.4, [1, 2, 4, 8], 2000, maxmean_sizes=[1, 2, 4, 8, 16, 32],
                                        net_eps=0.5, net_n_list=[1, 2, 4, 8], equicont_n_max=8)
        else:
            cfg = CrossValidationConfig(fams, 0.2, [8, 16, 32, 64, 128, 256], 1000,
                                        net_n_list=[16, 32, 48, 64], net_sample_size=500)
    else:
        n_list = [1, 2, 3, 4] if kind is gr.GroupKind.HEISENBERG else [1, 2, 3, 4, 5]
        cfg = CrossValidationConfig(fams, 0.4, n_list, 2000, maxmean_sizes=[1, 2, 4, 8, 16, 32],
                                    net_eps=0.5, net_n_list=n_list, equicont_n_max=n_list[-1])
    cfg.seed = seed
    return cfg


@dataclass
class ConsistencyReport:
    system: str
    ground_truth: GroundTruth
    components: dict
    verdicts: dict
    status: str  # Consistent | Inconsistent | Inconclusive
    notes: list[str]
    config: CrossValidationConfig

    @property
    def consistent(self) -> bool:
        return self.status == "Consistent"

    def to_json(self) -> dict:
        return {
            "system": self.system,
            "groundTruth": self.ground_truth.value,
            "verdicts": self.verdicts,
            "components": self.components,
            "status": self.status,
            "consistent": self.consistent,
            "notes": self.notes,
            "config": self.config.to_json(),
        }


# what each component reports for a system with discrete spectrum / without
_SPECTRAL_SIDE = {
    cx.Verdict.BOUNDED.value: True,
    cx.Verdict.UNBOUNDED.value: False,
    NetVerdict.PRECOMPACT.value: True,
    NetVerdict.NOT_PRECOMPACT.value: False,
    Outcome.PASS.value: True,
    Outcome.FAIL.value: False,
}


def aggregate_nets(reports: Sequence[OrbitNetReport]) -> NetVerdict:
    """One non-precompact orbit refutes; all precompact is needed to pass."""
    vs = [r.verdict for r in reports]
    if NetVerdict.NOT_PRECOMPACT in vs:
        return NetVerdict.NOT_PRECOMPACT
    if all(v is NetVerdict.PRECOMPACT for v in vs):
        return NetVerdict.PRECOMPACT
    return NetVerdict.INCONCLUSIVE


def judge(verdicts: dict, truth: GroundTruth) -> tuple[str, list[str]]:
    """Compare a verdict vector with itself and with the ground-truth label."""
    sides = {k: _SPECTRAL_SIDE.get(v) for k, v in verdicts.items()}
    notes = []
    undecided = [k for k, s in sides.items() if s is None]
    if undecided:
        notes.append("inconclusive components: " + ", ".join(undecided))
        return "Inconclusive", notes
    values = set(sides.values())
    if len(values) > 1:
        yes = [k for k, s in sides.items() if s]
        notes.append("components disagree; discrete-spectrum side: " + ", ".join(yes))
        return "Inconsistent", notes
    side = values.pop()
    if truth is GroundTruth.UNKNOWN:
        notes.append("no ground truth; components agree")
        return "Consistent", notes
    if side != (truth is GroundTruth.DISCRETE):
        notes.append(f"components agree with each other but contradict the label {truth.value}")
        return "Inconsistent", notes
    if side:
        notes.append("no obstruction to discrete spectrum found at the tested scales")
    return "Consistent", notes


def cross_validate(
    system: DynamicalSystem,
    config: CrossValidationConfig | None = None,
    ground_truth: GroundTruth | None = None,
) -> ConsistencyReport:
    """Run every diagnostic and check the verdicts against each other.

    ``ground_truth`` overrides the system's own label (useful to check that
    a mislabelled system is caught).
    """
    cfg = config or default_config(system)
    truth = ground_truth if ground_truth is not None else system.ground_truth
    seed = cfg.seed
    comps: dict = {}
    verdicts: dict = {}
    for i, fam in enumerate(cfg.families):
        prof = cx.folner_profile(
            system, fam, cfg.complexity_eps, cfg.complexity_n_list, cfg.sample_size, seed + i,
            theta=cfg.theta, stability=cfg.stability, with_packing=False,
        )
        comps[f"profile:{fam}"] = prof.to_json()
        verdicts[f"profile:{fam}"] = prof.verdict.value
    mm = cx.max_mean_search(
        system, cfg.complexity_eps, cfg.maxmean_budget, cfg.maxmean_sample_size or cfg.sample_size,
        seed + 17, sizes=cfg.maxmean_sizes, theta=cfg.theta, stability=cfg.stability,
    )
    comps["maxmean"] = mm.to_json(system.group)
    verdicts["maxmean"] = mm.verdict.value
    fam = cfg.families[0]
    nets = [
        orbit_net_profile(system, f, fam, cfg.net_eps, cfg.net_n_list, cfg.net_sample_size, seed + 31,
                          theta=cfg.theta, stability=cfg.stability)
        for f in system.test_functions()
    ]
    comps["orbitNets"] = [r.to_json() for r in nets]
    verdicts["orbitNets"] = aggregate_nets(nets).value
    for name, test in (("meanEquicontinuity", mean_equicontinuity_test), ("equicontinuityInMean", equicontinuity_in_mean_test)):
        rep = test(system, fam, cfg.equicont_eps, cfg.equicont_pairs, cfg.equicont_n_max, seed + 47)
        comps[name] = rep.to_json()
        verdicts[name] = rep.outcome.value
    status, notes = judge(verdicts, truth)
    return ConsistencyReport(system.spec_string, truth, comps, verdicts, status, notes, cfg)
