import numpy as np
import pytest

from folnerlab import complexity as cx
from folnerlab import groups as gr
from folnerlab import meanmetric as mm
from folnerlab import systems as sy

import oracles as o


def brute_matrix(system, rho, X):
    """All-pairs ``d_rho`` through the numpy feature path, one row at a time."""
    n = system.batch_len(X)
    D = np.empty((n, n))
    for i in range(n):
        Xi = system.take(X, np.full(n, i))
        D[i] = mm.mean_distance_batch(system, rho, Xi, X)
    return D


def brute_greedy(D, eps):
    n = len(D)
    close = D < eps
    covered = np.zeros(n, dtype=bool)
    count = 0
    while covered.sum() <= (1 - eps) * n:
        gain = (close & ~covered[None, :]).sum(axis=1)
        c = int(np.argmax(gain))
        covered |= close[c]
        count += 1
    return count


CASES = [
    ("rotation", "intervals", 5),
    ("odometer", "intervals", 6),
    ("skew-product", "intervals", 7),
    ("sturmian", "sym-intervals", 4),
    ("bernoulli-shift:Z,L=4", "intervals", 3),
    ("bernoulli-shift:Z^2,L=2", "boxes", 2),
    ("bernoulli-shift:lamplighter,L=2", "lamp-std", 2),
    ("torus-rotation", "boxes", 3),
    ("kronecker-flow", "intervals", 2),
    ("product(skew-product)", "intervals", 3),
]


@pytest.mark.parametrize("name,family,n", CASES)
def test_greedy_count_matches_brute_route(name, family, n):
    s = sy.make_system(name)
    rho = mm.folner_measure(gr.folner_window(s.group, family, n))
    # distances of shift spaces and the odometer are dyadic rationals; a
    # threshold off that lattice keeps float rounding away from ties
    eps = 0.23
    sample = sy.sample_measure(s, 450, seed=11)
    est = cx.covering_estimate(s, rho, eps, sample)
    D = brute_matrix(s, rho, sample.states)
    assert est.upper_count == brute_greedy(D, eps)
    assert est.mass_covered > 1 - eps
    assert est.lower_count <= est.upper_count


@pytest.mark.parametrize("name,family,n", CASES[:4] + CASES[7:])
def test_pruned_close_mask_is_exact(name, family, n):
    s = sy.make_system(name)
    rho = mm.folner_measure(gr.folner_window(s.group, family, n))
    X = sy.sample_measure(s, 300, seed=12).states
    emb = cx.MeanMetricEmbedding(s, rho, X)
    D = brute_matrix(s, rho, X)
    rows = np.arange(300)
    for thr in (0.051, 0.21, 0.47):
        assert np.array_equal(emb.close_mask(rows, rows, thr), D < thr)
    assert np.allclose(emb.row(17), D[17], atol=1e-12)


def test_packing_is_separated_and_maximal():
    s = sy.SkewProduct()
    rho = mm.uniform_on(gr.Z, range(4))
    sample = sy.sample_measure(s, 300, seed=13)
    emb = cx.MeanMetricEmbedding(s, rho, sample.states)
    chosen = cx.greedy_packing(emb, np.arange(300), 0.4)
    D = brute_matrix(s, rho, sample.states)
    sub = D[np.ix_(chosen, chosen)]
    assert np.all(sub[~np.eye(len(chosen), dtype=bool)] >= 0.4)
    assert np.all((D[:, chosen] < 0.4).any(axis=1))


def test_sample_size_rule():
    assert cx.required_sample_size(0.1) == 1000
    assert cx.required_sample_size(0.3) == 334
    s = sy.Rotation()
    with pytest.raises(cx.SampleTooSmall):
        cx.covering_estimate(s, mm.dirac(gr.Z), 0.1, sy.sample_measure(s, 999, 0))
    with pytest.raises(ValueError):
        cx.covering_estimate(s, mm.dirac(gr.Z), 1.0, sy.sample_measure(s, 999, 0))


@pytest.mark.parametrize("eps", [0.1, 0.2])
def test_odometer_count_matches_cylinder_oracle(eps):
    s = sy.Odometer()
    est = cx.covering_estimate(s, mm.uniform_on(gr.Z, range(8)), eps, sy.sample_measure(s, 5000, 1))
    assert abs(est.upper_count - o.odometer_cover_count(eps)) <= 1


@pytest.mark.parametrize(
    "counts,verdict",
    [
        ([10, 10, 10, 10, 10, 10], cx.Verdict.BOUNDED),
        ([9, 10, 9, 10, 10, 9], cx.Verdict.BOUNDED),
        ([10, 20, 40, 80], cx.Verdict.UNBOUNDED),
        ([5, 5, 6, 9, 14, 20], cx.Verdict.UNBOUNDED),
        ([10, 11, 12, 13], cx.Verdict.INCONCLUSIVE),
        ([10, 10, 10, 12], cx.Verdict.INCONCLUSIVE),
        ([10, 10], cx.Verdict.INCONCLUSIVE),
        ([], cx.Verdict.INCONCLUSIVE),
    ],
)
def test_boundedness_rule(counts, verdict):
    entries = [(2**k, c) for k, c in enumerate(counts)]
    assert cx.boundedness_verdict(entries) is verdict


def test_saturation_blocks_bounded():
    assert cx.boundedness_verdict([(1, 5, False), (2, 5, True), (3, 5, False)]) is cx.Verdict.INCONCLUSIVE


def test_thresholds_are_configurable():
    counts = [(n, c) for n, c in zip(range(1, 6), [10, 10, 12, 12, 13])]
    assert cx.boundedness_verdict(counts) is cx.Verdict.BOUNDED
    assert cx.boundedness_verdict(counts, stability=1) is cx.Verdict.INCONCLUSIVE
    assert cx.boundedness_verdict(counts, theta=1.0) is cx.Verdict.INCONCLUSIVE


def test_rotation_profile_report():
    p = cx.folner_profile(sy.Rotation(), "intervals", 0.2, [8, 16, 32], 500, seed=3)
    assert p.verdict is cx.Verdict.BOUNDED
    d = p.to_json()
    assert d["verdict"] == "Bounded" and d["seeds"] == [3]
    assert [e["n"] for e in d["entries"]] == [8, 16, 32]
    assert d["thresholds"] == {"theta": 1.25, "stability": 2}
    assert len(p.csv_rows()) == 3


def test_candidate_sets():
    cands = cx.candidate_sets(gr.HEIS, 29, seed=0)
    assert len(cands) == 29 and cands[0].elements == ((0, 0, 0),)
    assert {c.family for c in cands[1:]} == set(cx.CANDIDATE_FAMILIES)
    for c in cands[1:]:
        if c.family != "translated-window":
            assert c.size == c.nominal
        else:
            assert c.size <= c.nominal
    assert [c.elements for c in cx.candidate_sets(gr.HEIS, 29, seed=0)] == [c.elements for c in cands]


def test_flow_candidates_are_valid_elements():
    for c in cx.candidate_sets(gr.RFLOW, 29, seed=1):
        for g in c.elements:
            gr.validate(gr.RFLOW, g)


def test_max_mean_on_rotation_is_flat():
    r = cx.max_mean_search(sy.Rotation(), 0.2, 29, 500, seed=4, sizes=(1, 2, 4, 8, 16, 32, 64))
    assert r.verdict is cx.Verdict.BOUNDED
    assert max(c for _, c, _ in r.by_size) - min(c for _, c, _ in r.by_size) <= 2
    d = r.to_json(gr.Z)
    assert d["identityCount"] == r.identity_count
    assert len(d["inventory"]) == 29


def test_translate_check_is_exact_for_rotation():
    a, b = cx.translate_invariance_check(sy.Rotation(), [0, 3, 10], 57, 0.1, 1000, seed=5)
    assert a == b


def test_coupled_translate_check_separates_left_from_right():
    s = sy.make_system("bernoulli-shift:heis3")
    E, h = [(0, 0, 0), (1, 0, 0), (0, 1, 0)], (0, 3, 0)
    a, b = cx.translate_invariance_check(s, E, h, 0.4, 250, seed=1, coupled=True)
    assert a == b
    X = sy.sample_measure(s, 250, 1)
    Y = sy.PointSample(s.apply_batch(gr.inverse(s.group, h), X.states), 1, 250)
    wrong_side = mm.uniform_on(s.group, [gr.compose(s.group, h, g) for g in E])
    assert cx.covering_estimate(s, wrong_side, 0.4, Y, with_packing=False).upper_count != a


@pytest.mark.parametrize("spec", ["bernoulli-shift:Z,L=3", "bernoulli-shift:heis3,L=1"])
def test_product_factor_bounds_match_the_dense_kernel(spec):
    s = sy.product_lift(sy.make_system(spec))
    X = sy.sample_measure(s, 300, 4).states
    rho = mm.folner_measure(gr.folner_window(s.group, gr.default_family(s.group), 2))
    emb = cx.MeanMetricEmbedding(s, rho, X)
    assert emb._factors is not None
    rows = np.arange(300)
    lo, hi = emb.factor_bounds(rows, rows)
    full = emb.block(rows, rows)
    assert np.all(lo <= full + 1e-12) and np.all(full <= hi + 1e-12)
    for thr in (0.21, 0.47):
        assert np.array_equal(emb.close_mask(rows, rows, thr), full < thr - cx._TIE_TOL)
