import math

import numpy as np
import pytest

from folnerlab import groups as gr
from folnerlab import systems as sy


def turns(system, *c):
    return system.from_turns(*c)


def test_circle_metric_values():
    r = sy.Rotation(0.3)
    assert r.metric(turns(r, 0.1), turns(r, 0.4)) == pytest.approx(0.6, abs=1e-12)
    assert r.metric(turns(r, 0.05), turns(r, 0.95)) == pytest.approx(0.2, abs=1e-12)
    assert r.metric(turns(r, 0.0), turns(r, 0.5)) == pytest.approx(1.0, abs=1e-12)


def test_rotation_action():
    r = sy.Rotation(0.3)
    y = r.apply(3, turns(r, 0.1))
    assert sy.from_fixed(y[0]) == pytest.approx(0.0, abs=1e-12) or sy.from_fixed(y[0]) == pytest.approx(1.0, abs=1e-12)
    assert sy.from_fixed(r.apply(-1, turns(r, 0.1))[0]) == pytest.approx(0.8, abs=1e-12)


@pytest.mark.parametrize("name,g", [("rotation", 7), ("torus-rotation", (3, -5)), ("kronecker-flow", 2.75), ("odometer", 11)])
def test_isometric_systems_preserve_distance(name, g):
    s = sy.make_system(name)
    assert s.isometric
    rng = np.random.default_rng(0)
    X, Y = s.sample(200, rng), s.sample(200, rng)
    before = s.metric_batch(X, Y)
    after = s.metric_batch(s.apply_batch(g, X), s.apply_batch(g, Y))
    assert np.max(np.abs(before - after)) <= 1e-12


def test_odometer_adds_with_carry():
    o = sy.Odometer()
    x = o.from_digits([1, 1, 1])
    assert int(o.apply(1, x)[0]) == 8
    assert o.metric(x, o.from_digits([1, 1, 1, 1])) == pytest.approx(2.0**-3)
    assert o.metric(x, x) == 0.0


def test_skew_product_matches_float_formula():
    s = sy.SkewProduct(0.3)
    X = np.array([[sy.to_fixed(0.2), sy.to_fixed(0.7)]], dtype=np.uint64)
    for n in (-3, 1, 5):
        Y = s.apply_batch(n, X)
        x = (0.2 + n * 0.3) % 1.0
        y = (0.7 + n * 0.2 + n * (n - 1) / 2 * 0.3) % 1.0
        assert sy.from_fixed(Y[0, 0]) == pytest.approx(x, abs=1e-9)
        assert sy.from_fixed(Y[0, 1]) == pytest.approx(y, abs=1e-9)


def test_skew_product_is_an_action():
    s = sy.SkewProduct()
    X = s.sample(50, np.random.default_rng(1))
    assert np.array_equal(s.apply_batch(3, s.apply_batch(4, X)), s.apply_batch(7, X))
    assert np.array_equal(s.apply_batch(-4, s.apply_batch(4, X)), X)


def test_sturmian_coding_matches_float_oracle():
    alpha = sy.GOLDEN
    s = sy.Sturmian(alpha, L=4)
    theta = 0.123456
    X = s.from_angle(theta).reshape(1, 1)
    ks = list(range(-10, 11))
    bits = s.bits_at(X, ks)[0]
    ref = [1 if (theta + k * alpha) % 1.0 >= 1 - alpha else 0 for k in ks]
    assert bits.tolist() == ref
    # the coding is balanced: density of ones is alpha
    many = s.bits_at(X, list(range(5000)))[0]
    assert many.mean() == pytest.approx(alpha, abs=2e-3)


def test_bernoulli_shift_action_and_metric():
    b = sy.BernoulliShift("Z", L=3)
    x = b.config(ones=[5])
    zero = b.config()
    moved = b.apply(5, x)
    assert b.bits_at(b.as_batch(moved), [0])[0, 0] == 1
    z = sum(2.0 ** -abs(h) for h in range(-3, 4))
    assert b.metric(x, zero) == 0.0
    assert b.metric(moved, zero) == pytest.approx(1.0 / z)
    assert b.metric(b.apply(3, x), zero) == pytest.approx(2.0**-2 / z)
    assert b.truncation_error == pytest.approx(2.0**-2 / z)


@pytest.mark.parametrize("group", ["Z", "Z^2", "heis3", "lamplighter"])
def test_bernoulli_bits_are_fair(group):
    b = sy.BernoulliShift(group, L=2)
    X = b.sample(4000, np.random.default_rng(2))
    assert b.bits_at(X, [gr.identity(b.group)]).mean() == pytest.approx(0.5, abs=0.03)


@pytest.mark.parametrize("name", sy.BUILTIN_SYSTEMS)
def test_measures_are_invariant(name):
    s = sy.make_system(name)
    g = s.group.generators[0]
    n = 4000
    for f in s.test_functions():
        assert sy.invariance_check(s, g, f, n, seed=3) < 5 / math.sqrt(n), f.name


@pytest.mark.parametrize("name", sy.BUILTIN_SYSTEMS)
def test_test_functions_respect_sup_norm(name):
    s = sy.make_system(name)
    X = s.sample(500, np.random.default_rng(4))
    for f in s.test_functions():
        assert np.max(np.abs(f.evaluate(X))) <= f.sup_norm + 1e-12


@pytest.mark.parametrize("name", ["rotation", "odometer", "sturmian", "bernoulli-shift:Z", "skew-product", "torus-rotation"])
def test_sample_near_respects_radius(name):
    s = sy.make_system(name)
    rng = np.random.default_rng(5)
    X = s.sample(100, rng)
    Y, ok, proposals = s.sample_near(X, 0.1, rng)
    assert ok.all() and proposals >= 100
    assert np.all(s.metric_batch(X, Y) < 0.1)


def test_rotation_sample_near_is_uniform_in_the_arc():
    r = sy.Rotation()
    rng = np.random.default_rng(6)
    X = np.zeros((20000, 1), dtype=np.uint64)
    Y, ok, _ = r.sample_near(X, 0.2, rng)
    off = sy.from_fixed(Y[:, 0])
    off = np.where(off > 0.5, off - 1.0, off)
    assert np.abs(off).max() < 0.1
    assert off.mean() == pytest.approx(0.0, abs=3e-3)
    assert np.mean(np.abs(off) < 0.05) == pytest.approx(0.5, abs=0.02)


def test_make_system_parsing():
    assert sy.make_system("rotation:alpha=0.3").alpha == 0.3
    b = sy.make_system("bernoulli-shift:Z^2,L=3")
    assert b.group.name == "Z^2" and b.L == 3
    assert sy.make_system("rotation:alpha=golden").alpha == sy.GOLDEN
    p = sy.make_system("product(rotation)")
    assert p.spec_string.startswith("product(rotation")
    with pytest.raises(sy.UnknownSystemError):
        sy.make_system("cat-map")
    with pytest.raises(ValueError):
        sy.make_system("rotation:beta=1")


def test_builtins_cover_the_required_systems():
    names = [sy.make_system(n).name for n in sy.BUILTIN_SYSTEMS]
    assert len(names) >= 7
    labels = {sy.make_system(n).ground_truth for n in sy.BUILTIN_SYSTEMS}
    assert labels == {sy.GroundTruth.DISCRETE, sy.GroundTruth.NOT_DISCRETE}


@pytest.mark.parametrize("name", ["rotation", "odometer", "bernoulli-shift:Z", "skew-product"])
def test_product_metric_is_max_of_factors(name):
    base = sy.make_system(name)
    p = sy.product_lift(base)
    assert p.isometric == base.isometric and p.ground_truth == base.ground_truth
    rng = np.random.default_rng(7)
    X, Y = p.sample(100, rng), p.sample(100, rng)
    ref = np.maximum(base.metric_batch(X[0], Y[0]), base.metric_batch(X[1], Y[1]))
    assert np.allclose(p.metric_batch(X, Y), ref, atol=1e-12)


def test_metric_lies_in_unit_interval():
    for name in sy.BUILTIN_SYSTEMS:
        s = sy.make_system(name)
        rng = np.random.default_rng(8)
        d = s.metric_batch(s.sample(200, rng), s.sample(200, rng))
        assert np.all((d >= 0) & (d <= 1 + 1e-12)), name
