import itertools
import json
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from mpmath import mp

from pisot_measure.construction import (
    REFERENCE_PAIR,
    approximate_in_Y,
    build_paper_ifs,
    certify_separation,
    certify_ssc,
    hausdorff_dimension,
    ifs_from_json,
    ifs_to_json,
    make_ifs,
    similarity_dimension,
    y_element,
)
from pisot_measure.errors import CertificationError, SearchExhausted, SeparationInconclusive

# log 4 / log|theta_0| from mpmath.polyroots at 80 digits
DIMENSION = 1.2089053266905271301


def oracle_lambda(dps=80):
    with mp.workdps(dps):
        roots = mpmath.polyroots([1, 1, 10, 1], maxsteps=400, extraprec=3 * dps)
        theta = max(roots, key=lambda z: (abs(z), mpmath.im(z)))
        return 1 / theta


def oracle_ball_check(lam, translations, depth):
    """Pairwise ball-distance check by plain loops over all words."""
    t = [complex(x) for x in translations]
    R = max(abs(x) for x in t) / (1 - abs(lam))
    centers = []
    for word in itertools.product(range(len(t)), repeat=depth):
        centers.append(sum(lam**n * t[d] for n, d in enumerate(word)))
    gap = min(abs(a - b) for a, b in itertools.combinations(centers, 2)) - 2 * abs(lam) ** depth * R
    return gap


def test_zero_target_is_trivial(ctx):
    y = approximate_in_Y(ctx, 0, 0.5)
    assert (y.k, y.l) == (0, 0)


def test_exact_hit_on_power_of_lambda(ctx):
    target = complex(ctx.lam**3)
    y = approximate_in_Y(ctx, target, 1e-6)
    assert (y.k, y.l) == (1, 3)


def test_two_thirds_within_one_thousandth(ctx):
    y = approximate_in_Y(ctx, 2 / 3, 1e-3)
    lam = oracle_lambda()
    with mp.workdps(80):
        assert abs(y.k * lam**y.l - mpmath.mpf(2) / 3) < 1e-3


def test_smallest_l_against_bounded_brute_force(ctx):
    # oracle: every l <= 200 with k <= 10**7, floats from numpy's companion eigenvalues
    roots = np.roots([1, 1, 10, 1])
    lam = 1 / roots[np.argmax(np.abs(roots))]
    found = None
    for l in range(201):
        p = lam**l
        k = np.clip(np.round((2 / 3 * np.conj(p)).real / abs(p) ** 2), 1, 1e7)
        if abs(k * p - 2 / 3) < 1e-3 * (1 - 1e-9):
            found = l
            break
    y = approximate_in_Y(ctx, 2 / 3, 1e-3)
    if found is None:
        assert y.l > 200 or y.k > 10**7
    else:
        assert y.l <= found


def test_l_cap_exhaustion_reports_best(ctx):
    with pytest.raises(SearchExhausted) as info:
        approximate_in_Y(ctx, 2 / 3, 1e-3, l_cap=50)
    assert info.value.best is not None


@pytest.mark.parametrize("eps", [1e-1, 1e-2, 1e-3])
def test_random_targets_are_approximated(ctx, eps):
    rng = np.random.default_rng(17)
    lam = oracle_lambda(60)
    for _ in range(100):
        target = 2 * math.sqrt(rng.uniform()) * np.exp(2j * np.pi * rng.uniform())
        y = approximate_in_Y(ctx, target, eps)
        with mp.workdps(60):
            assert abs(y.k * lam**y.l - mpmath.mpc(target)) < eps


def test_y_element_value_within_radius(ctx):
    lam = oracle_lambda(100)
    for k, l in [(1, 0), (2, 1), (7, 13), (123456789, 30)]:
        y = y_element(ctx, k, l)
        with mp.workdps(100):
            assert abs(y.value - k * lam**l) <= y.radius


def test_y_element_rejects_non_integers(ctx):
    with pytest.raises(ValueError):
        y_element(ctx, 1.5, 0)
    with pytest.raises(ValueError):
        y_element(ctx, 1, -1)


def test_reference_pair_separated_at_depth_one(ctx):
    cert = certify_separation(complex(ctx.lam), [-2 / 3, -2j / 3, 2 / 3, 2j / 3], max_depth=1)
    assert cert.depth == 1 and cert.min_gap > 0
    assert abs(ctx.lam) < mpmath.mpf(1) / 3


def test_equal_translations_are_inconclusive(ctx):
    a = y_element(ctx, 1, 0)
    with pytest.raises(SeparationInconclusive):
        certify_ssc(make_ifs(ctx, a, a), max_depth=4)


def test_searched_pair_matches_exhaustive_check(ifs):
    cert = certify_ssc(ifs, max_depth=1)
    assert cert.depth == 1 and cert.min_gap > 0
    gap = oracle_ball_check(ifs.lam, ifs.translations(), 1)
    assert math.isclose(cert.min_gap, gap, rel_tol=1e-9)


@pytest.mark.parametrize("depth", [1, 2, 3, 4])
def test_certificate_persists_at_deeper_levels(ifs, depth):
    cert = certify_ssc(ifs, max_depth=depth, min_depth=depth)
    assert cert.depth == depth and cert.min_gap > 0
    if depth <= 3:
        assert math.isclose(cert.min_gap, oracle_ball_check(ifs.lam, ifs.translations(), depth), rel_tol=1e-9)


def test_default_build_is_smallest_certified_pair(ifs):
    assert ifs.key() == (1, 0, 2, 1)
    assert isinstance(ifs.a1.k, int) and isinstance(ifs.a2.l, int)
    assert ifs.ssc_certificate.depth == 1 and ifs.ssc_certificate.min_gap > 0


@pytest.mark.parametrize("bad", [0, 1, 1.5, -0.1])
def test_eps_fraction_validated(ctx, bad):
    with pytest.raises(ValueError):
        build_paper_ifs(ctx, bad)


def test_perturbation_strategy_also_certifies(ctx):
    cfg = build_paper_ifs(ctx, 0.25, strategy="perturb")
    assert cfg.ssc_certificate.min_gap > 0
    for y, target in zip((cfg.a1, cfg.a2), REFERENCE_PAIR):
        assert abs(complex(y.value) - target) < 0.25 * 0.33


def test_maps_keep_attractor_ball(ifs):
    R = ifs.attractor_radius
    assert R >= max(abs(complex(ifs.a1.value)), abs(complex(ifs.a2.value))) / (1 - abs(ifs.lam))
    signs = {}
    for (k, j), t in ifs.maps():
        assert abs(ifs.lam) * R + abs(t) <= R
        signs[(k, j)] = t
    assert signs[(1, 1)] == -signs[(2, 1)] and signs[(1, 2)] == -signs[(2, 2)]


def test_dimension_boundaries():
    assert similarity_dimension(4, 4) == pytest.approx(1.0, abs=1e-15)
    assert similarity_dimension(4, 2) == pytest.approx(2.0, abs=1e-15)


def test_dimension_of_example(ifs):
    est = hausdorff_dimension(ifs)
    assert abs(est.value - DIMENSION) <= est.error + 1e-15
    assert 1 < est.value < math.log(4) / math.log(3)


def test_dimension_needs_certificate(ctx):
    with pytest.raises(CertificationError):
        hausdorff_dimension(make_ifs(ctx, y_element(ctx, 1, 0), y_element(ctx, 2, 1)))


def test_json_round_trip_is_byte_identical(ifs, ctx):
    text = ifs_to_json(ifs)
    doc = json.loads(text)
    assert doc["a1"] == {"k": "1", "l": 0} and doc["polynomial"] == [1, 10, 1]
    assert isinstance(doc["certificate"]["min_gap"], str)
    again = ifs_from_json(text, ctx)
    assert ifs_to_json(again) == text
    assert ifs_to_json(build_paper_ifs(ctx)) == text


def test_tampered_certificate_rejected(ifs, ctx):
    doc = json.loads(ifs_to_json(ifs))
    doc["certificate"]["min_gap"] = "0.5"
    with pytest.raises(CertificationError):
        ifs_from_json(json.dumps(doc), ctx)


@settings(max_examples=25, deadline=None)
@given(
    st.complex_numbers(min_magnitude=0.05, max_magnitude=2),
    st.complex_numbers(min_magnitude=0.05, max_magnitude=2),
)
def test_separation_agrees_with_loop_oracle(a1, a2):
    lam = complex(oracle_lambda(30))
    t = [-a1, -a2, a1, a2]
    try:
        cert = certify_separation(lam, t, max_depth=3)
    except SeparationInconclusive:
        for depth in (1, 2, 3):
            assert oracle_ball_check(lam, t, depth) <= 1e-9
        return
    assert math.isclose(cert.min_gap, oracle_ball_check(lam, t, cert.depth), rel_tol=1e-9, abs_tol=1e-12)


@settings(max_examples=10, deadline=None)
@given(st.floats(0.05, 0.6))
def test_build_keeps_requested_fraction(ctx, frac):
    cfg = build_paper_ifs(ctx, frac)
    base = certify_separation(complex(ctx.lam), [-2 / 3, -2j / 3, 2 / 3, 2j / 3], max_depth=1).min_gap / (2 / 3)
    top = max(abs(complex(cfg.a1.value)), abs(complex(cfg.a2.value)))
    assert cfg.ssc_certificate.min_gap / top >= frac * base * (1 - 1e-12)
