"""Built-in amenable groups, their Følner families and temperedness.

Elements are plain Python values so they hash and compare cheaply:

* ``Z``           -- ``int``
* ``Z^d``         -- ``tuple`` of ``d`` ints
* ``heis3``       -- ``(a, b, c)`` for the matrix ``[[1, a, c], [0, 1, b], [0, 0, 1]]``
* ``lamplighter`` -- ``(frozenset_of_lit_positions, cursor)``
* ``R-flow``      -- ``float``

Haar measure is counting measure on the discrete kinds and Lebesgue length
on ``R-flow``; flow windows carry a uniform quadrature grid.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Iterable, Sequence

MASK64 = (1 << 64) - 1


class EncodingError(ValueError):
    """An element does not encode a member of the given group."""


class UnknownFamilyError(KeyError):
    pass


class GroupKind(str, Enum):
    INTEGER_LINE = "IntegerLine"
    INTEGER_LATTICE = "IntegerLattice"
    HEISENBERG = "HeisenbergDiscrete"
    LAMPLIGHTER = "Lamplighter"
    REAL_FLOW = "RealLineFlow"


@dataclass(frozen=True)
class GroupSpec:
    kind: GroupKind
    dim: int = 1

    @property
    def name(self) -> str:
        return {
            GroupKind.INTEGER_LINE: "Z",
            GroupKind.INTEGER_LATTICE: f"Z^{self.dim}",
            GroupKind.HEISENBERG: "heis3",
            GroupKind.LAMPLIGHTER: "lamplighter",
            GroupKind.REAL_FLOW: "R-flow",
        }[self.kind]

    @property
    def discrete(self) -> bool:
        return self.kind is not GroupKind.REAL_FLOW

    @property
    def generators(self) -> tuple:
        return _generators(self)

    def __str__(self) -> str:
        return self.name


Z = GroupSpec(GroupKind.INTEGER_LINE)
Z2 = GroupSpec(GroupKind.INTEGER_LATTICE, 2)
HEIS = GroupSpec(GroupKind.HEISENBERG)
LAMPLIGHTER = GroupSpec(GroupKind.LAMPLIGHTER)
RFLOW = GroupSpec(GroupKind.REAL_FLOW)


def parse_group(name: str) -> GroupSpec:
    """Map a stable group name ("Z", "Z^2", "heis3", ...) to its spec."""
    name = name.strip()
    if name == "Z":
        return Z
    if name.startswith("Z^"):
        try:
            d = int(name[2:])
        except ValueError:
            raise ValueError(f"bad lattice name {name!r}") from None
        if d < 1:
            raise ValueError(f"lattice dimension must be positive: {name!r}")
        return Z if d == 1 else GroupSpec(GroupKind.INTEGER_LATTICE, d)
    table = {"heis3": HEIS, "lamplighter": LAMPLIGHTER, "R-flow": RFLOW, "R": RFLOW}
    if name not in table:
        raise ValueError(f"unknown group {name!r}")
    return table[name]


# ---------------------------------------------------------------------------
# arithmetic


def _is_int(v: Any) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def validate(spec: GroupSpec, g: Any) -> None:
    kind = spec.kind
    ok = False
    if kind is GroupKind.INTEGER_LINE:
        ok = _is_int(g)
    elif kind is GroupKind.INTEGER_LATTICE:
        ok = isinstance(g, tuple) and len(g) == spec.dim and all(_is_int(v) for v in g)
    elif kind is GroupKind.HEISENBERG:
        ok = isinstance(g, tuple) and len(g) == 3 and all(_is_int(v) for v in g)
    elif kind is GroupKind.LAMPLIGHTER:
        ok = (
            isinstance(g, tuple)
            and len(g) == 2
            and isinstance(g[0], frozenset)
            and all(_is_int(v) for v in g[0])
            and _is_int(g[1])
        )
    elif kind is GroupKind.REAL_FLOW:
        ok = isinstance(g, (int, float)) and not isinstance(g, bool) and math.isfinite(g)
    if not ok:
        raise EncodingError(f"{g!r} is not an element of {spec.name}")


def identity(spec: GroupSpec):
    kind = spec.kind
    if kind is GroupKind.INTEGER_LINE:
        return 0
    if kind is GroupKind.INTEGER_LATTICE:
        return (0,) * spec.dim
    if kind is GroupKind.HEISENBERG:
        return (0, 0, 0)
    if kind is GroupKind.LAMPLIGHTER:
        return (frozenset(), 0)
    return 0.0


def compose(spec: GroupSpec, g, h):
    """Group product ``g·h``.

    Heisenberg elements multiply as upper unitriangular matrices; lamplighter
    elements compose as in the wreath product: the lamps of ``h`` are shifted
    by the cursor of ``g`` and xor-ed into the lamps of ``g``.
    """
    validate(spec, g)
    validate(spec, h)
    return _compose(spec.kind, g, h)


def _compose(kind: GroupKind, g, h):
    if kind is GroupKind.INTEGER_LINE or kind is GroupKind.REAL_FLOW:
        return g + h
    if kind is GroupKind.INTEGER_LATTICE:
        return tuple(a + b for a, b in zip(g, h))
    if kind is GroupKind.HEISENBERG:
        return (g[0] + h[0], g[1] + h[1], g[2] + h[2] + g[0] * h[1])
    lamps_g, p = g
    lamps_h, q = h
    return (lamps_g ^ frozenset(x + p for x in lamps_h), p + q)


def inverse(spec: GroupSpec, g):
    validate(spec, g)
    return _inverse(spec.kind, g)


def _inverse(kind: GroupKind, g):
    if kind is GroupKind.INTEGER_LINE or kind is GroupKind.REAL_FLOW:
        return -g
    if kind is GroupKind.INTEGER_LATTICE:
        return tuple(-a for a in g)
    if kind is GroupKind.HEISENBERG:
        a, b, c = g
        return (-a, -b, a * b - c)
    lamps, p = g
    return (frozenset(x - p for x in lamps), -p)


def power(spec: GroupSpec, g, k: int):
    """``g**k`` by repeated squaring (``k`` may be negative)."""
    validate(spec, g)
    if k < 0:
        g, k = _inverse(spec.kind, g), -k
    result = identity(spec)
    base = g
    while k:
        if k & 1:
            result = _compose(spec.kind, result, base)
        base = _compose(spec.kind, base, base)
        k >>= 1
    return result


def _generators(spec: GroupSpec) -> tuple:
    kind = spec.kind
    if kind is GroupKind.INTEGER_LINE:
        return (1, -1)
    if kind is GroupKind.REAL_FLOW:
        return (1.0, -1.0)
    if kind is GroupKind.INTEGER_LATTICE:
        gens = []
        for i in range(spec.dim):
            e = [0] * spec.dim
            e[i] = 1
            gens.append(tuple(e))
            e[i] = -1
            gens.append(tuple(e))
        return tuple(gens)
    if kind is GroupKind.HEISENBERG:
        return ((1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0))
    return ((frozenset(), 1), (frozenset(), -1), (frozenset({0}), 0))


def ball(spec: GroupSpec, radius: int) -> list[tuple[Any, int]]:
    """Word-length ball ``{g : |g| <= radius}`` in BFS order, with lengths."""
    if not spec.discrete:
        raise EncodingError("word length is defined for discrete groups only")
    e = identity(spec)
    seen = {e: 0}
    order = [(e, 0)]
    queue = deque([e])
    gens = spec.generators
    while queue:
        g = queue.popleft()
        r = seen[g]
        if r == radius:
            continue
        for s in gens:
            h = _compose(spec.kind, g, s)
            if h not in seen:
                seen[h] = r + 1
                order.append((h, r + 1))
                queue.append(h)
    return order


def word_length(spec: GroupSpec, g, max_radius: int = 64) -> int:
    validate(spec, g)
    if spec.kind is GroupKind.INTEGER_LINE:
        return abs(g)
    if spec.kind is GroupKind.INTEGER_LATTICE:
        return sum(abs(v) for v in g)
    for r in range(max_radius + 1):
        for h, length in ball(spec, r):
            if h == g:
                return length
    raise ValueError(f"word length of {g!r} exceeds {max_radius}")


def check_generating(spec: GroupSpec) -> bool:
    """Generator set is symmetric and balls grow strictly for radii 1..3."""
    gens = spec.generators
    inv = {_inverse(spec.kind, s) for s in gens}
    if inv != set(gens):
        return False
    if not spec.discrete:
        return True
    sizes = [len(ball(spec, r)) for r in range(4)]
    return all(b > a for a, b in zip(sizes, sizes[1:]))


# ---------------------------------------------------------------------------
# canonical 64-bit codes (used to hash configurations of shift spaces)


def mix64(x: int) -> int:
    """splitmix64 finaliser on Python ints."""
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def element_code(spec: GroupSpec, g) -> int:
    kind = spec.kind
    if kind is GroupKind.INTEGER_LINE:
        return mix64(g & MASK64)
    if kind is GroupKind.INTEGER_LATTICE or kind is GroupKind.HEISENBERG:
        h = 0x243F6A8885A308D3
        for v in g:
            h = mix64(h ^ (v & MASK64))
        return h
    if kind is GroupKind.LAMPLIGHTER:
        h = mix64(0x13198A2E03707344 ^ (g[1] & MASK64))
        for v in sorted(g[0]):
            h = mix64(h ^ (v & MASK64))
        return h
    raise EncodingError("flow elements have no discrete code")


# ---------------------------------------------------------------------------
# JSON encoding of elements


def element_to_json(spec: GroupSpec, g):
    if spec.kind is GroupKind.LAMPLIGHTER:
        return {"lamps": sorted(g[0]), "cursor": g[1]}
    if isinstance(g, tuple):
        return list(g)
    return g


def element_from_json(spec: GroupSpec, obj):
    kind = spec.kind
    if kind is GroupKind.LAMPLIGHTER:
        g = (frozenset(int(v) for v in obj["lamps"]), int(obj["cursor"]))
    elif kind in (GroupKind.INTEGER_LATTICE, GroupKind.HEISENBERG):
        g = tuple(int(v) for v in obj)
    elif kind is GroupKind.REAL_FLOW:
        g = float(obj)
    else:
        g = int(obj)
    validate(spec, g)
    return g


# ---------------------------------------------------------------------------
# Følner families


@dataclass(frozen=True)
class FolnerWindow:
    """The ``n``-th set of a named Følner family.

    ``elements`` are listed so that, within one family, every smaller window
    is a prefix of every larger one.  Flow windows are the interval
    ``interval`` sampled on a uniform grid of spacing ``step``.
    """

    group: GroupSpec
    family: str
    n: int
    elements: tuple
    interval: tuple[float, float] | None = None
    step: float | None = None

    def __len__(self) -> int:
        return len(self.elements)

    @property
    def haar_size(self) -> float:
        """Counting measure, or Lebesgue length for flow windows."""
        if self.interval is not None:
            return self.interval[1] - self.interval[0]
        return float(len(self.elements))

    def quadrature_weights(self) -> list[float]:
        """Normalised Haar weights on ``elements`` (trapezoid rule on flows)."""
        m = len(self.elements)
        if self.interval is None:
            return [1.0 / m] * m
        if m == 1:
            return [1.0]
        return _trapezoid_weights(self.elements, self.step, self.haar_size)


def _trapezoid_weights(points: Sequence[float], step: float, length: float) -> list[float]:
    # endpoints of the interval get half weight; points are in |t| order
    lo, hi = min(points), max(points)
    return [(0.5 if t in (lo, hi) else 1.0) * step / length for t in points]


@dataclass(frozen=True)
class _Family:
    name: str
    build: Callable[[GroupSpec, int, float], FolnerWindow]
    aliases: tuple[str, ...] = field(default=())


def _z_intervals(spec, n, step):
    return FolnerWindow(spec, "intervals", n, tuple(range(n)))


def _z_sym_intervals(spec, n, step):
    els = [0]
    for k in range(1, n):
        els += [-k, k]
    return FolnerWindow(spec, "sym-intervals", n, tuple(els))


def _shell_order(points: Iterable[tuple], shell: Callable[[tuple], int]) -> tuple:
    return tuple(sorted(points, key=lambda p: (shell(p), p)))


def _lattice_boxes(spec, n, step):
    import itertools

    pts = itertools.product(range(n), repeat=spec.dim)
    return FolnerWindow(spec, "boxes", n, _shell_order(pts, max))


def _lattice_sym_boxes(spec, n, step):
    import itertools

    pts = itertools.product(range(-n + 1, n), repeat=spec.dim)
    return FolnerWindow(
        spec, "sym-boxes", n, _shell_order(pts, lambda p: max(abs(v) for v in p))
    )


def _heis_shell(p: tuple) -> int:
    a, b, c = p
    # smallest m with c < m*m, minus one, so shells match box index - 1
    return max(a, b, math.isqrt(c))


def _heis_boxes(spec, n, step):
    pts = ((a, b, c) for a in range(n) for b in range(n) for c in range(n * n))
    return FolnerWindow(spec, "heis-boxes", n, _shell_order(pts, _heis_shell))


def _lamp_std(spec, n, step):
    # inverse of {(A, p): p in [0, n), A within [0, n)}; the plain set is only
    # right-Følner under wreath composition, its inverse is left-Følner
    els = []
    for mask in range(1 << n):
        lamps = frozenset(i for i in range(n) if mask >> i & 1)
        for p in range(n):
            els.append((lamps, p))
    key = lambda g: (max([g[1], *g[0]]), g[1], sorted(g[0]))  # noqa: E731
    els.sort(key=key)
    kind = spec.kind
    return FolnerWindow(spec, "lamp-std", n, tuple(_inverse(kind, g) for g in els))


def _grid(lo_k: int, hi_k: int, step: float) -> tuple:
    ks = sorted(range(lo_k, hi_k + 1), key=lambda k: (abs(k), k))
    return tuple(k * step for k in ks)


def _flow_k(n: float, step: float) -> int:
    k = round(n / step)
    if not math.isclose(k * step, n, rel_tol=0, abs_tol=1e-9):
        raise ValueError(f"window length {n} is not a multiple of grid step {step}")
    return k


def _flow_intervals(spec, n, step):
    k = _flow_k(n, step)
    return FolnerWindow(spec, "intervals", n, _grid(0, k, step), (0.0, float(n)), step)


def _flow_sym_intervals(spec, n, step):
    k = _flow_k(n / 2, step)
    return FolnerWindow(
        spec, "sym-intervals", n, _grid(-k, k, step), (-n / 2, n / 2), step
    )


_FAMILIES: dict[GroupKind, list[_Family]] = {
    GroupKind.INTEGER_LINE: [
        _Family("intervals", _z_intervals),
        _Family("sym-intervals", _z_sym_intervals),
    ],
    GroupKind.INTEGER_LATTICE: [
        _Family("boxes", _lattice_boxes),
        _Family("sym-boxes", _lattice_sym_boxes),
    ],
    GroupKind.HEISENBERG: [_Family("heis-boxes", _heis_boxes, ("boxes",))],
    GroupKind.LAMPLIGHTER: [_Family("lamp-std", _lamp_std, ("standard",))],
    GroupKind.REAL_FLOW: [
        _Family("intervals", _flow_intervals),
        _Family("sym-intervals", _flow_sym_intervals),
    ],
}

DEFAULT_FLOW_STEP = 0.25


def families(spec: GroupSpec) -> list[str]:
    return [f.name for f in _FAMILIES[spec.kind]]


def default_family(spec: GroupSpec) -> str:
    return _FAMILIES[spec.kind][0].name


def _lookup(spec: GroupSpec, family: str) -> _Family:
    for fam in _FAMILIES[spec.kind]:
        if family == fam.name or family in fam.aliases:
            return fam
    raise UnknownFamilyError(f"family {family!r} is not registered for {spec.name}")


def folner_window(spec: GroupSpec, family: str, n: int, step: float = DEFAULT_FLOW_STEP) -> FolnerWindow:
    fam = _lookup(spec, family)
    if n < 1:
        raise ValueError(f"window index must be >= 1, got {n}")
    if not spec.discrete and step <= 0:
        raise ValueError("grid step must be positive")
    return fam.build(spec, n, step)


def folner_ratio(spec: GroupSpec, window: FolnerWindow, g) -> float:
    """``m(gF Δ F) / m(F)``; exact for intervals of the flow."""
    if len(window) == 0:
        raise ValueError("empty window")
    validate(spec, g)
    if window.interval is not None:
        length = window.haar_size
        return 2.0 * min(abs(g), length) / length
    base = set(window.elements)
    moved = {_compose(spec.kind, g, f) for f in window.elements}
    return len(base ^ moved) / len(base)


@dataclass(frozen=True)
class ShulmanResult:
    """Prefix temperedness constant ``max_n |U_{k<n} F_k^-1 F_n| / |F_n|``."""

    group: str
    family: str
    N: int
    constant: float
    argmax: int | None
    ratios: dict[int, float]
    analytic: bool = False

    def tempered(self, bound: float) -> bool:
        return self.constant <= bound


def shulman_constant(spec: GroupSpec, family: str, N: int) -> ShulmanResult:
    if N < 2:
        raise ValueError("N must be at least 2")
    _lookup(spec, family)
    if not spec.discrete:
        # intervals: the union of F_k^-1 F_n over k < n has length < 2 |F_n|
        return ShulmanResult(spec.name, family, N, 2.0, None, {}, analytic=True)
    windows = [folner_window(spec, family, n) for n in range(1, N + 1)]
    inverses: set = set()
    ratios = {}
    for n in range(2, N + 1):
        inverses.update(_inverse(spec.kind, a) for a in windows[n - 2].elements)
        fn = windows[n - 1].elements
        union = {_compose(spec.kind, a, b) for a in inverses for b in fn}
        ratios[n] = len(union) / len(fn)
    best = max(ratios, key=lambda n: (ratios[n], n))
    return ShulmanResult(spec.name, family, N, ratios[best], best, ratios)
