"""Independent reference computations used by the test-suite.

Nothing here imports folnerlab: each oracle rebuilds its quantity from the
definitions with plain Python or numpy so it can check the package from the
outside.  Frozen outputs live in ``FROZEN`` and are asserted in
``test_oracles.py`` before anything else relies on them.
"""
from __future__ import annotations

import cmath
import itertools
import math
from fractions import Fraction

import numpy as np


# ---------------------------------------------------------------------------
# covering counts with closed forms


def circle_cover_count(eps: float) -> int:
    """Fewest open arcs covering circle mass ``> 1 - eps``.

    With ``d = 2 * arc distance`` an ``eps``-ball is an arc of length ``eps``
    and every rotation-invariant mean metric equals ``d``.
    """
    e = Fraction(str(eps))
    return math.floor((1 - e) / e) + 1


def odometer_cover_count(eps: float) -> int:
    """Same for the 2-adic integers with ``d = 2**-v(x - y)``.

    A ball is a cylinder fixing the first ``k`` digits, ``k`` least with
    ``2**-k < eps``; balls are disjoint cylinders of mass ``2**-k``.
    """
    e = Fraction(str(eps))
    k = 0
    while Fraction(1, 2**k) >= e:
        k += 1
    return math.floor((1 - e) * 2**k) + 1


def rotation_l2(alpha: float, g: int, h: int) -> float:
    """``|| e(x + g alpha) - e(x + h alpha) ||_2`` for ``e(x) = exp(2 pi i x)``."""
    return abs(cmath.exp(2j * math.pi * g * alpha) - cmath.exp(2j * math.pi * h * alpha))


# ---------------------------------------------------------------------------
# temperedness by enumeration


def _heis_mul(p, q):
    # upper unitriangular 3x3 matrices [[1, a, c], [0, 1, b], [0, 0, 1]]
    return (p[0] + q[0], p[1] + q[1], p[2] + q[2] + p[0] * q[1])


def _heis_inv(p):
    a, b, c = p
    return (-a, -b, a * b - c)


def _window(group: str, n: int) -> list:
    if group == "Z":
        return list(range(n))
    if group.startswith("Z^"):
        d = int(group[2:])
        return list(itertools.product(range(n), repeat=d))
    if group == "heis3":
        return [(a, b, c) for a in range(n) for b in range(n) for c in range(n * n)]
    raise ValueError(group)


def _mul(group, p, q):
    if group == "Z":
        return p + q
    if group == "heis3":
        return _heis_mul(p, q)
    return tuple(a + b for a, b in zip(p, q))


def _inv(group, p):
    if group == "Z":
        return -p
    if group == "heis3":
        return _heis_inv(p)
    return tuple(-a for a in p)


def shulman_ratios(group: str, N: int) -> dict[int, Fraction]:
    """``|U_{k<n} F_k^-1 F_n| / |F_n|`` for ``n = 2..N`` on the box family."""
    out = {}
    for n in range(2, N + 1):
        inv = {_inv(group, a) for k in range(1, n) for a in _window(group, k)}
        fn = _window(group, n)
        union = {_mul(group, a, b) for a in inv for b in fn}
        out[n] = Fraction(len(union), len(fn))
    return out


# ---------------------------------------------------------------------------
# Bernoulli shift over Z on its finite factor


def bernoulli_coordinate_weights(L: int, n: int) -> np.ndarray:
    """Weights ``c_j`` with ``d_rho(x, y) = sum_j c_j [x_j != y_j]``.

    ``rho`` is uniform on ``{0, ..., n-1}``; the base metric puts weight
    proportional to ``2**-|h|`` on coordinate ``h`` for ``|h| <= L``, and
    ``(g x)_h = x_{h+g}``.  Coordinates run over ``j = -L .. L+n-1``.
    """
    ints, scale = bernoulli_integer_weights(L, n)
    return ints / scale


def bernoulli_integer_weights(L: int, n: int) -> tuple[np.ndarray, int]:
    """Integer numerators of ``c_j`` and their common denominator."""
    c = np.zeros(2 * L + n, dtype=np.int64)
    for g in range(n):
        for h in range(-L, L + 1):
            c[h + g + L] += 2 ** (L - abs(h))
    z = sum(2 ** (L - abs(h)) for h in range(-L, L + 1))
    return c, z * n


def _wht(a: np.ndarray) -> np.ndarray:
    a = a.astype(np.float64).copy()
    h = 1
    n = a.size
    while h < n:
        a = a.reshape(-1, 2, h)
        a = np.stack([a[:, 0] + a[:, 1], a[:, 0] - a[:, 1]], axis=1)
        h *= 2
    return a.reshape(n)


def bernoulli_ball(L: int, n: int, eps: float) -> np.ndarray:
    """Indicator of the open ``eps``-ball at 0 on ``{0,1}^M``, in exact integers."""
    c, scale = bernoulli_integer_weights(L, n)
    M = c.size
    v = np.arange(1 << M, dtype=np.int64)
    bits = (v[:, None] >> np.arange(M)) & 1
    e = Fraction(str(eps)) * scale
    # for an integer k, k < e  <=>  k < ceil(e)
    bound = math.ceil(e)
    return bits @ c < bound


def bernoulli_factor_greedy(L: int, n: int, eps: float) -> int:
    """Greedy cover of the whole finite factor with exact uniform mass.

    Balls are XOR translates of the ball at 0, so the newly covered mass of
    every candidate centre at once is a XOR convolution, done with the
    Walsh-Hadamard transform.  Centres range over all ``2**M`` points and the
    loop stops once the covered mass exceeds ``1 - eps``.
    """
    ball = bernoulli_ball(L, n, eps)
    P = ball.size
    ball_idx = np.flatnonzero(ball)
    fb = _wht(ball)
    uncovered = np.ones(P, dtype=bool)
    covered = 0
    count = 0
    target = Fraction(1) - Fraction(str(eps))
    while Fraction(covered, P) <= target:
        gain = _wht(_wht(uncovered) * fb) / P
        centre = int(np.argmax(np.rint(gain)))
        hit = centre ^ ball_idx
        covered += int(uncovered[hit].sum())
        uncovered[hit] = False
        count += 1
    return count


FROZEN = {
    "circle_0.1": 10,
    "circle_0.05": 20,
    "odometer_0.05": 31,
    "odometer_0.1": 15,
    "odometer_0.2": 7,
    "shulman_Z_10": Fraction(9, 5),
    "shulman_Z_2": Fraction(1),
    # bernoulli_factor_greedy(L=6, n, eps=0.2) for n = 1..4
    "bernoulli_L6_0.2": {1: 11, 2: 12, 3: 13, 4: 16},
}
