"""Concrete compact metric G-spaces with invariant measures.

Circle coordinates are stored as 64-bit fixed point turns (``u / 2**64``), so
integer actions compose exactly.  Shift spaces store a sampled configuration
as a 64-bit key; the bit at position ``k`` is a hash of the key and ``k``,
which makes every sampled point a genuine infinite configuration evaluated
lazily.  Shifts act on the left by ``(g x)_k = x_{k g}``; on ``Z`` this is
``(g x)_n = x_{n+g}``.

All metrics have diameter at most one.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Sequence

import numpy as np

from . import groups as gr
from .groups import GroupSpec

TWO64 = 2.0**64
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
SILVER = math.sqrt(2.0) - 1.0
_U64 = np.uint64


class GroundTruth(str, Enum):
    DISCRETE = "DiscreteSpectrum"
    NOT_DISCRETE = "NotDiscreteSpectrum"
    UNKNOWN = "Unknown"


class UnknownSystemError(KeyError):
    pass


def to_fixed(turns: float) -> int:
    """Real number of turns -> fixed point residue in ``[0, 2**64)``."""
    frac = math.fmod(float(turns), 1.0)
    if frac < 0:
        frac += 1.0
    return int(round(frac * TWO64)) & gr.MASK64


def turns_to_fixed(turns: np.ndarray) -> np.ndarray:
    """Vectorised :func:`to_fixed` at 53-bit resolution."""
    frac = np.mod(np.asarray(turns, dtype=np.float64), 1.0)
    return (frac * 2.0**53).astype(_U64) << _U64(11)


def from_fixed(u) -> float | np.ndarray:
    if isinstance(u, np.ndarray):
        return u.astype(np.float64) / TWO64
    return int(u) / TWO64


def _wrap(k: int) -> np.uint64:
    return _U64(k & gr.MASK64)


def circle_distance(u, v):
    """``2 * min(|u - v|, 1 - |u - v|)`` on fixed point arrays."""
    diff = np.asarray(u, dtype=_U64) - np.asarray(v, dtype=_U64)
    neg = ~diff + _U64(1)
    return np.minimum(diff, neg).astype(np.float64) * 2.0**-63


def _mix64_np(x: np.ndarray) -> np.ndarray:
    x = x + _U64(0x9E3779B97F4A7C15)
    x = (x ^ (x >> _U64(30))) * _U64(0xBF58476D1CE4E5B9)
    x = (x ^ (x >> _U64(27))) * _U64(0x94D049BB133111EB)
    return x ^ (x >> _U64(31))


@dataclass(frozen=True)
class OrbitFeatures:
    """Per-element features of a batch of orbit points.

    ``data[i, g, b, t]`` belongs to state ``i`` moved by the ``g``-th group
    element; the distance between two moved states is
    ``max_b sum_t coef[t] * phi(...)`` with ``phi`` fixed by ``kind``.
    Translation actions store ``data`` of shape ``(N, 1, B, T)`` plus
    ``offset[g, b, t]`` and leave the sum implicit.
    """

    kind: str  # "circle" | "bits" | "dyadic"
    data: np.ndarray
    coef: np.ndarray
    offset: np.ndarray | None = None

    @property
    def n_elements(self) -> int:
        return self.data.shape[1] if self.offset is None else self.offset.shape[0]

    def take(self, idx) -> "OrbitFeatures":
        return OrbitFeatures(self.kind, self.data[idx], self.coef, self.offset)

    def dense(self, rows=slice(None)) -> np.ndarray:
        if self.offset is None:
            return self.data[rows]
        return self.data[rows] + self.offset[None]

    def paired(self, other: "OrbitFeatures") -> np.ndarray:
        """Row-aligned per-element distances, shape ``(N, G)``."""
        n = len(self.data)
        out = np.empty((n, self.n_elements))
        step = max(1, (1 << 22) // max(self.data[0].size * self.n_elements // self.data.shape[1], 1))
        for start in range(0, n, step):
            rows = slice(start, start + step)
            out[rows] = self._paired(self.dense(rows), other.dense(rows))
        return out

    def _paired(self, a, b):
        if self.kind == "circle":
            diff = a - b
            m = np.minimum(diff, ~diff + _U64(1)).astype(np.float64) * 2.0**-63
        elif self.kind == "bits":
            m = (a != b).astype(np.float64)
        else:
            x = a ^ b
            low = x & (~x + _U64(1))
            m = np.zeros(x.shape)
            nz = x != 0
            m[nz] = 1.0 / low[nz].astype(np.float64)
        return (m * self.coef).sum(axis=-1).max(axis=-1)


@dataclass
class TestFunction:
    """A continuous observable evaluated on state batches (complex valued)."""

    name: str
    evaluate: Callable[[Any], np.ndarray]
    sup_norm: float

    __test__ = False  # not a pytest class


# ---------------------------------------------------------------------------
# base class


class DynamicalSystem:
    """A compact metric space with a G-action and an invariant measure.

    Subclasses work on *batches* of states; the single-state methods wrap a
    state into a batch of one.
    """

    name: str = ""
    group: GroupSpec
    ground_truth: GroundTruth = GroundTruth.UNKNOWN
    isometric: bool = False
    truncation_error: float = 0.0

    @property
    def params(self) -> dict:
        return {}

    @property
    def spec_string(self) -> str:
        extra = ",".join(f"{k}={v!r}" if isinstance(v, float) else f"{k}={v}" for k, v in self.params.items())
        return f"{self.name}:{extra}" if extra else self.name

    def describe(self) -> dict:
        return {
            "name": self.name,
            "spec": self.spec_string,
            "group": self.group.name,
            "params": self.params,
            "groundTruth": self.ground_truth.value,
            "isometric": self.isometric,
            "truncationError": self.truncation_error,
        }

    # batches -----------------------------------------------------------
    def sample(self, n: int, rng: np.random.Generator):
        raise NotImplementedError

    def batch_len(self, X) -> int:
        return len(X)

    def take(self, X, idx):
        return X[idx]

    def as_batch(self, x):
        return np.asarray(x, dtype=_U64).reshape(1, -1)

    def unbatch(self, X, i: int = 0):
        return X[i].copy()

    def repeat(self, x, n: int):
        return np.repeat(self.as_batch(x), n, axis=0)

    def apply_batch(self, g, X):
        raise NotImplementedError

    def features(self, X, elements: Sequence) -> OrbitFeatures:
        raise NotImplementedError

    def hamming_collapse(self, X, elements: Sequence, weights: np.ndarray):
        """Exact reduction of ``d_rho`` to one weighted Hamming sum, if any."""
        return None

    def max_factor_collapse(self, X, elements: Sequence, weights: np.ndarray):
        """Hamming reductions of factors whose metric is combined by ``max``.

        With factor mean metrics ``D_i`` this gives ``max_i D_i <= d_rho <= sum_i D_i``.
        """
        return None

    def propose_near(self, X, delta: float, rng: np.random.Generator):
        """States drawn from a region containing each ``delta``-ball of ``X``.

        The region is chosen so that rejection against ``d < delta`` yields an
        exact draw from the measure conditioned on the ball.  The default
        region is the whole space.
        """
        return self.sample(self.batch_len(X), rng)

    def test_functions(self) -> list[TestFunction]:
        raise NotImplementedError

    # single states -----------------------------------------------------
    def apply(self, g, x):
        gr.validate(self.group, g)
        return self.unbatch(self.apply_batch(g, self.as_batch(x)))

    def metric(self, x, y) -> float:
        return float(self.metric_batch(self.as_batch(x), self.as_batch(y))[0])

    def metric_batch(self, X, Y) -> np.ndarray:
        e = [gr.identity(self.group)]
        return self.features(X, e).paired(self.features(Y, e))[:, 0]

    def orbit_distances(self, X, Y, elements: Sequence) -> np.ndarray:
        """``d(g x_i, g y_i)`` for every ``g`` in ``elements``; shape (N, G)."""
        return self.features(X, elements).paired(self.features(Y, elements))

    def sample_near(self, X, delta: float, rng: np.random.Generator, max_rounds: int = 200):
        """For each ``x`` draw ``y ~ mu(. | d(x, y) < delta)`` by rejection.

        Returns ``(Y, accepted_mask, proposals)``; rows that never accepted
        keep ``Y = X`` and ``accepted = False``.
        """
        n = self.batch_len(X)
        accepted = np.zeros(n, dtype=bool)
        rows: list = [None] * n
        proposals = 0
        for _ in range(max_rounds):
            todo = np.flatnonzero(~accepted)
            if todo.size == 0:
                break
            Xt = self.take(X, todo)
            Yt = self.propose_near(Xt, delta, rng)
            proposals += todo.size
            ok = self.metric_batch(Xt, Yt) < delta
            for k in np.flatnonzero(ok):
                rows[todo[k]] = self.unbatch(Yt, int(k))
                accepted[todo[k]] = True
        for i in np.flatnonzero(~accepted):
            rows[i] = self.unbatch(X, int(i))
        return self.stack(rows), accepted, proposals

    def stack(self, states: list):
        return np.stack([np.asarray(s, dtype=_U64) for s in states])


# ---------------------------------------------------------------------------
# circle systems


class _CircleSystem(DynamicalSystem):
    isometric = True
    ground_truth = GroundTruth.DISCRETE
    dim = 1
    blocks = 1  # metric is the max over `blocks` groups of `dim // blocks` coordinates

    def sample(self, n, rng):
        return rng.integers(0, 2**64, size=(n, self.dim), dtype=_U64, endpoint=False)

    def from_turns(self, *coords: float) -> np.ndarray:
        return np.array([to_fixed(c) for c in coords], dtype=_U64)

    def shifts(self, elements) -> np.ndarray | None:
        """``(G, dim)`` offsets with ``g x = x + offset[g]``, for translations."""
        return None

    def features(self, X, elements):
        t = self.dim // self.blocks
        coef = np.full(t, 1.0 / t)
        off = self.shifts(elements)
        if off is not None:
            data = np.ascontiguousarray(X).reshape(len(X), 1, self.blocks, t)
            return OrbitFeatures("circle", data, coef, off.reshape(len(elements), self.blocks, t))
        out = np.empty((len(X), len(elements), self.dim), dtype=_U64)
        for j, g in enumerate(elements):
            out[:, j, :] = self.apply_batch(g, X)
        data = out.reshape(len(X), len(elements), self.blocks, t)
        return OrbitFeatures("circle", data, coef)

    def propose_near(self, X, delta, rng):
        # every coordinate of a point in the ball is within delta/2 turns
        half = min(delta / 2.0, 0.5)
        return X + turns_to_fixed(rng.uniform(-half, half, size=X.shape))

    def test_functions(self):
        def char(*k):
            ks = np.array(k, dtype=np.float64)

            def f(X):
                phase = (from_fixed(X) * ks).sum(axis=1)
                return np.exp(2j * np.pi * phase)

            return TestFunction("chi(" + ",".join(map(str, k)) + ")", f, 1.0)

        def bump(X):
            return np.exp(np.cos(2 * np.pi * from_fixed(X[:, 0])) - 1.0).astype(complex)

        def const(X):
            return np.ones(len(X), dtype=complex)

        if self.dim == 1:
            chars = [char(1), char(2), char(3)]
            cos = TestFunction("cos", lambda X: np.cos(2 * np.pi * from_fixed(X[:, 0])).astype(complex), 1.0)
            return chars + [cos, TestFunction("bump", bump, 1.0), TestFunction("const", const, 1.0)]
        return [
            char(1, 0),
            char(0, 1),
            char(1, 1),
            char(0, 2),
            TestFunction("bump", bump, 1.0),
            TestFunction("const", const, 1.0),
        ]


class Rotation(_CircleSystem):
    """``x -> x + alpha`` on the circle with ``d = 2 min(|x-y|, 1-|x-y|)``."""

    name = "rotation"

    def __init__(self, alpha: float = GOLDEN):
        self.group = gr.Z
        self.alpha = float(alpha)
        self._a = to_fixed(alpha)

    @property
    def params(self):
        return {"alpha": self.alpha}

    def apply_batch(self, g, X):
        return X + _wrap(g * self._a)

    def shifts(self, elements):
        return np.array([[_wrap(g * self._a)] for g in elements], dtype=_U64)


class TorusRotation(_CircleSystem):
    name = "torus-rotation"
    dim = 2
    blocks = 2

    def __init__(self, alpha1: float = GOLDEN, alpha2: float = SILVER):
        self.group = gr.Z2
        self.alpha1, self.alpha2 = float(alpha1), float(alpha2)
        self._a = (to_fixed(alpha1), to_fixed(alpha2))

    @property
    def params(self):
        return {"alpha1": self.alpha1, "alpha2": self.alpha2}

    def apply_batch(self, g, X):
        return X + self.shifts([g])[0]

    def shifts(self, elements):
        return np.array([[_wrap(g[0] * self._a[0]), _wrap(g[1] * self._a[1])] for g in elements], dtype=_U64)


class KroneckerFlow(_CircleSystem):
    """Linear flow ``t·(x, y) = (x + t w1, y + t w2)`` on the 2-torus."""

    name = "kronecker-flow"
    dim = 2
    blocks = 2

    def __init__(self, omega1: float = GOLDEN, omega2: float = SILVER):
        self.group = gr.RFLOW
        self.omega1, self.omega2 = float(omega1), float(omega2)

    @property
    def params(self):
        return {"omega1": self.omega1, "omega2": self.omega2}

    def apply_batch(self, t, X):
        return X + self.shifts([t])[0]

    def shifts(self, elements):
        t = np.asarray(elements, dtype=np.float64)
        return np.stack([turns_to_fixed(t * self.omega1), turns_to_fixed(t * self.omega2)], axis=1)


class SkewProduct(_CircleSystem):
    """Anzai skew product ``(x, y) -> (x + alpha, y + x)``.

    The metric is the mean of the two circle metrics, so ``dim = 2`` with a
    single block.
    """

    name = "skew-product"
    dim = 2
    blocks = 1
    isometric = False
    ground_truth = GroundTruth.NOT_DISCRETE

    def __init__(self, alpha: float = GOLDEN):
        self.group = gr.Z
        self.alpha = float(alpha)
        self._a = to_fixed(alpha)

    @property
    def params(self):
        return {"alpha": self.alpha}

    def apply_batch(self, n, X):
        # T^n(x, y) = (x + n a, y + n x + n(n-1)/2 a), exact in Z/2^64
        out = np.empty_like(X)
        out[:, 0] = X[:, 0] + _wrap(n * self._a)
        out[:, 1] = X[:, 1] + X[:, 0] * _wrap(n) + _wrap((n * (n - 1) // 2) * self._a)
        return out

    def propose_near(self, X, delta, rng):
        r = min(delta, 0.5)
        return X + turns_to_fixed(rng.uniform(-r, r, size=X.shape))


# ---------------------------------------------------------------------------
# odometer


class Odometer(DynamicalSystem):
    """The +1 adding machine on 64 binary digits (least significant first)."""

    name = "odometer"
    isometric = True
    ground_truth = GroundTruth.DISCRETE
    width = 64

    def __init__(self):
        self.group = gr.Z
        self.truncation_error = 2.0**-self.width

    def sample(self, n, rng):
        return rng.integers(0, 2**64, size=(n, 1), dtype=_U64, endpoint=False)

    def from_digits(self, digits: Sequence[int]) -> np.ndarray:
        return np.array([sum(int(b) << i for i, b in enumerate(digits))], dtype=_U64)

    def apply_batch(self, g, X):
        return X + _wrap(g)

    def features(self, X, elements):
        off = np.array([_wrap(g) for g in elements], dtype=_U64).reshape(-1, 1, 1)
        data = np.ascontiguousarray(X).reshape(len(X), 1, 1, 1)
        return OrbitFeatures("dyadic", data, np.ones(1), off)

    def propose_near(self, X, delta, rng):
        # d < delta forces agreement on digits 0..k-1 where 2**-k < delta
        k = 0
        while 2.0**-k >= delta and k < self.width:
            k += 1
        fresh = self.sample(len(X), rng)
        low = _U64((1 << k) - 1) if k < 64 else _U64(gr.MASK64)
        return (X & low) | (fresh & ~low)

    def test_functions(self):
        def digit(i):
            return TestFunction(
                f"spin{i}",
                lambda X: 1.0 - 2.0 * ((X[:, 0] >> _U64(i)) & _U64(1)).astype(np.float64) + 0j,
                1.0,
            )

        def char(m):
            return TestFunction(
                f"char{m}",
                lambda X: np.exp(2j * np.pi * (X[:, 0] % _U64(m)).astype(np.float64) / m),
                1.0,
            )

        const = TestFunction("const", lambda X: np.ones(len(X), dtype=complex), 1.0)
        return [digit(0), digit(1), digit(2), char(4), char(8), const]


# ---------------------------------------------------------------------------
# sequence metrics


def sequence_weights(spec: GroupSpec, L: int) -> tuple[list, np.ndarray, float]:
    """Ball elements, normalised weights ``2**-|h| / Z`` and ``Z``."""
    elems, lengths = zip(*gr.ball(spec, L))
    raw = np.array([2.0**-r for r in lengths])
    z = float(raw.sum())
    return list(elems), raw / z, z


class _SequenceSystem(DynamicalSystem):
    """Shared machinery for 0/1 configurations with the weighted metric."""

    L: int

    def _setup_metric(self, L: int):
        self.L = int(L)
        self._ball, self._coef, self._Z = sequence_weights(self.group, self.L)
        self.truncation_error = 2.0 ** (-self.L + 1) / self._Z

    @property
    def normaliser(self) -> float:
        return self._Z

    def positions(self, elements: Sequence) -> tuple[list, np.ndarray]:
        """Unique coordinates ``h·g`` read by ``d(g x, g y)`` and their index map."""
        kind = self.group.kind
        index: dict = {}
        pos: list = []
        table = np.empty((len(elements), len(self._ball)), dtype=np.int64)
        for j, g in enumerate(elements):
            for t, h in enumerate(self._ball):
                p = gr._compose(kind, h, g)
                k = index.get(p)
                if k is None:
                    k = index[p] = len(pos)
                    pos.append(p)
                table[j, t] = k
        return pos, table

    def bits_at(self, X, positions: Sequence) -> np.ndarray:
        raise NotImplementedError

    def features(self, X, elements):
        pos, table = self.positions(elements)
        bits = self.bits_at(X, pos)
        data = bits[:, table][:, :, None, :]
        return OrbitFeatures("bits", data, self._coef)

    def hamming_collapse(self, X, elements, weights):
        pos, table = self.positions(elements)
        W = np.zeros(len(pos))
        np.add.at(W, table, np.outer(weights, self._coef))
        return self.bits_at(X, pos), W

    def coordinate(self, h) -> TestFunction:
        def f(X):
            return self.bits_at(X, [h])[:, 0].astype(np.float64) + 0j

        return TestFunction(f"x[{gr.element_to_json(self.group, h)}]", f, 1.0)

    def test_functions(self):
        e = gr.identity(self.group)
        s = self.group.generators[0]
        near = self._ball[: min(len(self._ball), 1 + 2 * len(self.group.generators))]
        nw = np.array([2.0 ** -gr.word_length(self.group, h) for h in near])
        nw /= nw.sum()

        def prod(X):
            b = self.bits_at(X, [e, s]).astype(np.float64)
            return (b[:, 0] * b[:, 1]) + 0j

        def smooth(X):
            return (self.bits_at(X, near).astype(np.float64) @ nw) + 0j

        def spin(X):
            return 1.0 - 2.0 * self.bits_at(X, [e])[:, 0].astype(np.float64) + 0j

        const = TestFunction("const", lambda X: np.ones(self.batch_len(X), dtype=complex), 1.0)
        return [
            self.coordinate(e),
            self.coordinate(s),
            TestFunction("x[e]*x[s]", prod, 1.0),
            TestFunction("smoothed-cylinder", smooth, 1.0),
            TestFunction("spin", spin, 1.0),
            const,
        ]


class Sturmian(_SequenceSystem):
    """Shift on the Sturmian subshift coding the rotation by ``alpha``.

    A point is stored as the angle ``theta`` of the rotation orbit it codes;
    ``x_k = 1`` iff ``theta + k alpha mod 1`` lies in ``[1 - alpha, 1)``.
    The measure is the image of Lebesgue measure, which is the unique
    invariant measure.
    """

    name = "sturmian"
    ground_truth = GroundTruth.DISCRETE

    def __init__(self, alpha: float = GOLDEN, L: int = 12):
        self.group = gr.Z
        self.alpha = float(alpha)
        self._a = to_fixed(alpha)
        self._threshold = _wrap(-self._a)  # 2**64 - a
        self._setup_metric(L)

    @property
    def params(self):
        return {"alpha": self.alpha, "L": self.L}

    def sample(self, n, rng):
        return rng.integers(0, 2**64, size=(n, 1), dtype=_U64, endpoint=False)

    def from_angle(self, theta: float) -> np.ndarray:
        return np.array([to_fixed(theta)], dtype=_U64)

    def apply_batch(self, g, X):
        return X + _wrap(g * self._a)

    def shifts(self, elements):
        return np.array([[_wrap(g * self._a)] for g in elements], dtype=_U64)

    def bits_at(self, X, positions):
        shifts = np.array([_wrap(int(p) * self._a) for p in positions], dtype=_U64)
        return ((X[:, :1] + shifts[None, :]) >= self._threshold).astype(np.uint8)

    def propose_near(self, X, delta, rng):
        # d < delta forces agreement on every coordinate h with weight >= delta;
        # those codings cut the circle into arcs, sample inside theta's arc
        forced = [h for h, c in zip(self._ball, self._coef) if c >= delta]
        if not forced:
            return self.sample(len(X), rng)
        cuts = []
        for h in forced:
            cuts.append(_wrap(-h * self._a))  # theta + h a crosses 0
            cuts.append(_wrap(-h * self._a - self._a))  # ... crosses 1 - a
        cuts = sorted({int(c) for c in cuts})
        out = np.empty((len(X), 1), dtype=_U64)
        for i, theta in enumerate(X[:, 0].tolist()):
            k = np.searchsorted(cuts, theta, side="right")
            lo = cuts[(k - 1) % len(cuts)]
            width = (cuts[k % len(cuts)] - lo) % (1 << 64) or (1 << 64)
            out[i, 0] = (lo + int(rng.random() * width)) & gr.MASK64
        return out


@dataclass(frozen=True)
class Configuration:
    """One point of ``{0,1}^G``: hashed base bits, a shift and finite flips.

    ``x_k = base(k·shift) xor [k·shift in flips]`` where ``base`` is all zeros
    for ``key == 0``.  ``flips`` holds element codes.
    """

    key: int
    shift: Any
    flips: frozenset = frozenset()


@dataclass
class ConfigBatch:
    keys: np.ndarray  # uint64
    shift: Any
    flips: tuple | None = None  # per-row frozensets of element codes

    def __len__(self) -> int:
        return len(self.keys)


class BernoulliShift(_SequenceSystem):
    """Full 2-shift over ``G`` with i.i.d. fair bits."""

    name = "bernoulli-shift"
    ground_truth = GroundTruth.NOT_DISCRETE
    default_L = {"Z": 12, "Z^2": 6}

    def __init__(self, group: GroupSpec | str = "Z", L: int | None = None):
        spec = gr.parse_group(group) if isinstance(group, str) else group
        if not spec.discrete:
            raise ValueError("Bernoulli shifts need a discrete group")
        self.group = spec
        self._light_cache: dict = {}
        self._setup_metric(self.default_L.get(spec.name, 4) if L is None else L)

    @property
    def spec_string(self):
        base = f"{self.name}:{self.group.name}"
        if self.L != self.default_L.get(self.group.name, 4):
            base += f",L={self.L}"
        return base

    @property
    def params(self):
        return {"group": self.group.name, "L": self.L}

    # states
    def config(self, ones: Sequence = (), key: int = 0) -> Configuration:
        """Explicit configuration: all zeros (or hashed base) with ``ones`` lit."""
        codes = frozenset(gr.element_code(self.group, h) for h in ones)
        return Configuration(int(key), gr.identity(self.group), codes)

    def sample(self, n, rng):
        keys = rng.integers(1, 2**64, size=n, dtype=_U64, endpoint=False)
        return ConfigBatch(keys, gr.identity(self.group))

    def batch_len(self, X):
        return len(X.keys)

    def _row_flips(self, X, i):
        return X.flips[i] if X.flips is not None else frozenset()

    def take(self, X, idx):
        idx = np.asarray(idx)
        flips = None if X.flips is None else tuple(X.flips[int(i)] for i in np.atleast_1d(idx))
        return ConfigBatch(np.atleast_1d(X.keys[idx]), X.shift, flips)

    def as_batch(self, x):
        if isinstance(x, ConfigBatch):
            return x
        return ConfigBatch(np.array([x.key], dtype=_U64), x.shift, (x.flips,))

    def unbatch(self, X, i=0):
        return Configuration(int(X.keys[i]), X.shift, self._row_flips(X, i))

    def stack(self, states):
        shifts = {s.shift for s in states}
        if len(shifts) != 1:
            raise ValueError("cannot batch configurations with different shifts")
        keys = np.array([s.key for s in states], dtype=_U64)
        return ConfigBatch(keys, states[0].shift, tuple(s.flips for s in states))

    def repeat(self, x, n):
        return self.stack([x] * n)

    def apply_batch(self, g, X):
        return ConfigBatch(X.keys, gr._compose(self.group.kind, g, X.shift), X.flips)

    def bits_at(self, X, positions):
        kind = self.group.kind
        codes = [gr.element_code(self.group, gr._compose(kind, p, X.shift)) for p in positions]
        carr = np.array(codes, dtype=_U64)
        bits = (_mix64_np(X.keys[:, None] ^ carr[None, :]) & _U64(1)).astype(np.uint8)
        bits[X.keys == 0, :] = 0
        if X.flips is not None:
            col = {c: j for j, c in enumerate(codes)}
            for i, fl in enumerate(X.flips):
                for c in fl:
                    j = col.get(c)
                    if j is not None:
                        bits[i, j] ^= 1
        return bits

    def _light_sets(self, delta: float):
        """Table for drawing a uniform subset ``D`` of the ball with weight < delta.

        Weights are ``2**(L - |h|)`` in units of ``1 / (Z 2**L)``, so subset
        sums are integers and the count of light subsets is a small knapsack.
        """
        cached = self._light_cache.get(delta)
        if cached is not None:
            return cached
        w = [1 << (self.L - gr.word_length(self.group, h)) for h in self._ball]
        limit = math.ceil(delta * self._Z * 2**self.L) - 1
        # ways[i][s]: subsets of ball[i:] with weight exactly s
        ways = [[0] * (limit + 1) for _ in range(len(w) + 1)]
        ways[len(w)][0] = 1
        for i in range(len(w) - 1, -1, -1):
            nxt, cur = ways[i + 1], ways[i]
            for total in range(limit + 1):
                cur[total] = nxt[total] + (nxt[total - w[i]] if total >= w[i] else 0)
        self._light_cache[delta] = (w, limit, ways)
        return w, limit, ways

    def _draw_light(self, delta: float, rng: np.random.Generator) -> list[int]:
        w, limit, ways = self._light_sets(delta)
        if limit < 0:
            return []
        totals = ways[0]
        grand = sum(totals)
        # exact integer sampling from big counts: draw a uniform rank
        rank = int(rng.integers(0, 2**62)) * grand >> 62
        s = 0
        while rank >= totals[s]:
            rank -= totals[s]
            s += 1
        chosen = []
        for i, wi in enumerate(w):
            skip = ways[i + 1][s]
            if rank < skip:
                continue
            rank -= skip
            chosen.append(i)
            s -= wi
        return chosen

    def propose_near(self, X, delta, rng):
        # y = x on the ball except a uniformly drawn light disagreement set,
        # fresh bits elsewhere: exactly mu(. | d(x, .) < delta) given x
        fresh = ConfigBatch(self.sample(len(X), rng).keys, X.shift)
        want = self.bits_at(X, self._ball)
        have = self.bits_at(fresh, self._ball)
        kind = self.group.kind
        codes = [gr.element_code(self.group, gr._compose(kind, h, X.shift)) for h in self._ball]
        flips = []
        for i in range(len(X)):
            target = want[i].copy()
            for j in self._draw_light(delta, rng):
                target[j] ^= 1
            flips.append(frozenset(codes[j] for j in np.flatnonzero(target != have[i])))
        fresh.flips = tuple(flips)
        return fresh


# ---------------------------------------------------------------------------
# product lift


class ProductSystem(DynamicalSystem):
    """``X × X`` with the diagonal action and the max metric."""

    def __init__(self, base: DynamicalSystem):
        self.base = base
        self.group = base.group
        self.name = f"product({base.name})"
        self.isometric = base.isometric
        self.truncation_error = base.truncation_error
        # a product of a discrete-spectrum measure with itself has discrete
        # spectrum; a factor without it forces the same for the product
        self.ground_truth = base.ground_truth

    @property
    def params(self):
        return {"base": self.base.spec_string}

    @property
    def spec_string(self):
        return f"product({self.base.spec_string})"

    def sample(self, n, rng):
        return (self.base.sample(n, rng), self.base.sample(n, rng))

    def batch_len(self, X):
        return self.base.batch_len(X[0])

    def take(self, X, idx):
        return (self.base.take(X[0], idx), self.base.take(X[1], idx))

    def as_batch(self, x):
        return (self.base.as_batch(x[0]), self.base.as_batch(x[1]))

    def unbatch(self, X, i=0):
        return (self.base.unbatch(X[0], i), self.base.unbatch(X[1], i))

    def stack(self, states):
        return (self.base.stack([s[0] for s in states]), self.base.stack([s[1] for s in states]))

    def repeat(self, x, n):
        return (self.base.repeat(x[0], n), self.base.repeat(x[1], n))

    def apply_batch(self, g, X):
        return (self.base.apply_batch(g, X[0]), self.base.apply_batch(g, X[1]))

    def features(self, X, elements):
        a = self.base.features(X[0], elements)
        b = self.base.features(X[1], elements)
        if a.data.shape[-1] != b.data.shape[-1]:
            raise ValueError("factor feature widths differ")
        if a.offset is not None:
            data = np.concatenate([a.data, b.data], axis=2)
            return OrbitFeatures(a.kind, data, a.coef, np.concatenate([a.offset, b.offset], axis=1))
        return OrbitFeatures(a.kind, np.concatenate([a.data, b.data], axis=2), a.coef)

    def max_factor_collapse(self, X, elements, weights):
        parts = [self.base.hamming_collapse(Xi, elements, weights) for Xi in X]
        return None if any(p is None for p in parts) else parts

    def propose_near(self, X, delta, rng):
        return (self.base.propose_near(X[0], delta, rng), self.base.propose_near(X[1], delta, rng))

    def sample_near(self, X, delta, rng, max_rounds=200):
        # the max-metric ball is the product of the factor balls
        Y0, ok0, p0 = self.base.sample_near(X[0], delta, rng, max_rounds)
        Y1, ok1, p1 = self.base.sample_near(X[1], delta, rng, max_rounds)
        return (Y0, Y1), ok0 & ok1, p0 + p1

    def test_functions(self):
        out = []
        for f in self.base.test_functions():
            out.append(TestFunction(f"{f.name}∘pr1", (lambda F: lambda X: F.evaluate(X[0]))(f), f.sup_norm))
        return out


def product_lift(system: DynamicalSystem) -> ProductSystem:
    return ProductSystem(system)


# ---------------------------------------------------------------------------
# registry


_NAMED_CONSTANTS = {"golden": GOLDEN, "silver": SILVER, "sqrt2": math.sqrt(2.0)}


def _parse_value(text: str):
    text = text.strip()
    if text in _NAMED_CONSTANTS:
        return _NAMED_CONSTANTS[text]
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


_REGISTRY: dict[str, Callable[..., DynamicalSystem]] = {
    "rotation": Rotation,
    "torus-rotation": TorusRotation,
    "kronecker-flow": KroneckerFlow,
    "odometer": Odometer,
    "sturmian": Sturmian,
    "bernoulli-shift": BernoulliShift,
    "skew-product": SkewProduct,
}

BUILTIN_SYSTEMS = (
    "rotation",
    "torus-rotation",
    "kronecker-flow",
    "odometer",
    "sturmian",
    "bernoulli-shift:Z",
    "bernoulli-shift:Z^2",
    "bernoulli-shift:heis3",
    "bernoulli-shift:lamplighter",
    "skew-product",
)


def make_system(spec: str) -> DynamicalSystem:
    """Build a system from ``name[:param=value,...]``.

    Bare parameters are positional (``bernoulli-shift:Z^2``);
    ``product(<spec>)`` gives the product lift.
    """
    spec = spec.strip()
    if spec.startswith("product(") and spec.endswith(")"):
        return product_lift(make_system(spec[len("product(") : -1]))
    name, _, rest = spec.partition(":")
    if name not in _REGISTRY:
        raise UnknownSystemError(f"unknown system {name!r}")
    args, kwargs = [], {}
    for item in filter(None, (p.strip() for p in rest.split(","))):
        if "=" in item:
            k, _, v = item.partition("=")
            kwargs[k.strip()] = _parse_value(v)
        else:
            args.append(item if name == "bernoulli-shift" else _parse_value(item))
    try:
        return _REGISTRY[name](*args, **kwargs)
    except TypeError as exc:
        raise ValueError(f"bad parameters for {name}: {exc}") from None


def sample_measure(system: DynamicalSystem, n: int, seed: int) -> "PointSample":
    if n < 1:
        raise ValueError("sample size must be positive")
    rng = np.random.default_rng(seed)
    return PointSample(system.sample(n, rng), int(seed), int(n))


@dataclass
class PointSample:
    states: Any
    seed: int
    count: int

    def __len__(self) -> int:
        return self.count


def invariance_check(system: DynamicalSystem, g, f: TestFunction, n: int, seed: int) -> float:
    """``|mean f - mean f∘g|`` on one sample; above ``5/sqrt(n)`` is suspicious."""
    X = sample_measure(system, n, seed).states
    a = f.evaluate(X)
    b = f.evaluate(system.apply_batch(g, X))
    return float(abs(a.mean() - b.mean()))
