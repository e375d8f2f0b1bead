import mpmath
import pytest
from hypothesis import given, settings, strategies as st
from mpmath import mp

from pisot_measure.algebraic import (
    MonicIntPolynomial,
    PowerSumSequence,
    build_context,
    default_polynomial,
    dist_two_re_power,
    find_roots,
    power_sum,
    reduced_trace_multiple,
    verify_complex_pisot,
    verify_dense_rotation_criterion,
)
from pisot_measure.errors import CriterionInapplicable, PrecisionError

# oracle: mpmath.polyroots at 80 digits, frozen
THETA_RE = "-0.44954218788963531404111812710107870287839979766185572698213705"
THETA_IM = "3.1156347925099517205017336751477093932041280011534156877090274"
ALPHA = "-0.10091562422072937191776374579784259424320040467628854603572590"
THETA_ABS_15 = "3.14789903570479"
FORWARD_SUMS = [3, -1, -19, 26, 165, -406, -1270, 5165, 7941, -58321, -26254]
BACKWARD_SUMS = [-10, 98, -973, 9642, -95545]  # n = -1 .. -5
DIST_5 = 1.0466272902552759983e-5
DIST_M5 = 0.0042493066888935520825
DIST_10 = 1.0954286847071017527e-10


def oracle_roots(coeffs, dps=120):
    with mp.workdps(dps):
        return mpmath.polyroots([1] + list(reversed(coeffs)), maxsteps=400, extraprec=2 * dps)


def test_parse_is_constant_term_first():
    p = MonicIntPolynomial.parse("1, 10, 1")
    assert p.coefficients == (1, 10, 1)
    assert str(p) == "X^3 + X^2 + 10*X + 1"
    assert p.full_coefficients() == [1, 10, 1, 1]


@pytest.mark.parametrize("text", ["", "1,,2", "1,x", "1.5,2"])
def test_parse_rejects_garbage(text):
    with pytest.raises(ValueError):
        MonicIntPolynomial.parse(text)


def test_degree_below_two_rejected():
    with pytest.raises(ValueError):
        MonicIntPolynomial((3,))


def test_roots_of_example_match_stated_approximations(ctx):
    assert abs(complex(ctx.theta) - (-0.45 + 3.11j)) < 0.01
    others = [complex(z) for z, _ in ctx.others()]
    assert len(others) == 1 and abs(others[0] - (-0.1)) < 0.005
    assert 3 < abs(complex(ctx.theta)) < 4


def test_roots_agree_with_independent_oracle(ctx):
    with mp.workdps(60):
        assert abs(mpmath.re(ctx.theta) - mpmath.mpf(THETA_RE)) < mpmath.mpf(10) ** -55
        assert abs(mpmath.im(ctx.theta) - mpmath.mpf(THETA_IM)) < mpmath.mpf(10) ** -55
        alpha = ctx.others()[0][0]
        assert abs(alpha - mpmath.mpf(ALPHA)) < mpmath.mpf(10) ** -55
    assert mpmath.nstr(abs(ctx.theta), 15) == THETA_ABS_15


def test_root_radii_meet_requested_precision():
    roots = find_roots(default_polynomial(), 30)
    assert len(roots) == 3
    assert all(r <= mpmath.mpf(10) ** -30 for _, r in roots)


def test_refining_precision_shrinks_radii():
    coarse = max(r for _, r in find_roots(default_polynomial(), 20))
    fine = max(r for _, r in find_roots(default_polynomial(), 60))
    assert fine < coarse


def test_factorable_quadratic_has_exact_roots():
    roots = sorted(float(mpmath.re(z)) for z, _ in find_roots(MonicIntPolynomial((-1, 0)), 30))
    assert roots == [-1.0, 1.0]


def test_non_squarefree_rejected():
    # (X - 1)^2 (X + 2) = X^3 - 3X + 2
    with pytest.raises(ValueError):
        find_roots(MonicIntPolynomial((2, -3, 0)), 30)


def test_example_is_complex_pisot(ctx):
    cert = verify_complex_pisot(ctx)
    assert cert.is_complex_pisot
    inside = [v for k, v in cert.margins.items() if k.startswith("conjugate_")]
    assert len(inside) == 1 and abs(float(inside[0]) - 0.9) < 0.01


@pytest.mark.parametrize("coeffs", [(1, -3), (-1, -1, 0)])
def test_real_examples_are_not_complex_pisot(coeffs):
    cert = verify_complex_pisot(build_context(MonicIntPolynomial(coeffs), 30))
    assert not cert.is_complex_pisot
    assert "nonreal" in cert.failed


@pytest.mark.parametrize("digits", [20, 30, 50, 80])
def test_pisot_certificate_is_precision_monotone(digits):
    assert verify_complex_pisot(build_context(default_polynomial(), digits)).is_complex_pisot


def test_dense_rotation_criterion_holds_for_example(ctx):
    cert = verify_dense_rotation_criterion(ctx, probe_n=64)
    assert cert.holds and cert.rational_root is None
    assert cert.probe_min_abs_im > 0


def test_dense_rotation_probe_against_direct_powering(ctx):
    with mp.workdps(120):
        theta = mpmath.mpc(mpmath.mpf(THETA_RE), mpmath.mpf(THETA_IM))
        direct = min(abs(mpmath.im(theta**n)) for n in range(1, 65))
    cert = verify_dense_rotation_criterion(ctx, probe_n=64)
    assert abs(float(cert.probe_min_abs_im) - float(direct)) < 1e-10 * float(direct)


def test_dense_rotation_finds_rational_root():
    cert = verify_dense_rotation_criterion(build_context(MonicIntPolynomial((-8, 0, 0)), 30))
    assert not cert.holds and cert.rational_root == 2


def test_dense_rotation_inapplicable_outside_degree_three():
    ctx4 = build_context(MonicIntPolynomial((1, 0, 10, 1)), 30)
    with pytest.raises(CriterionInapplicable):
        verify_dense_rotation_criterion(ctx4)


def test_power_sums_match_oracle():
    seq = PowerSumSequence(default_polynomial())
    assert [power_sum(seq, n) for n in range(11)] == FORWARD_SUMS
    assert [power_sum(seq, -n) for n in range(1, 6)] == BACKWARD_SUMS


def test_backward_sums_need_unit_constant_term():
    seq = PowerSumSequence(MonicIntPolynomial((2, 0, 1)))
    with mp.workdps(60):
        direct = int(mpmath.nint(mpmath.re(sum(z**3 for z in oracle_roots([2, 0, 1], 60)))))
    assert power_sum(seq, 3) == direct
    with pytest.raises(ValueError):
        power_sum(seq, -1)


def test_reciprocal_consistency():
    seq = PowerSumSequence(default_polynomial())
    recip = PowerSumSequence(default_polynomial().reciprocal())
    assert str(default_polynomial().reciprocal()) == "X^3 + 10*X^2 + X + 1"
    for n in range(1, 40):
        assert power_sum(seq, -n) == power_sum(recip, n)


def test_recurrence_agrees_with_direct_powering(ctx):
    roots = oracle_roots([1, 10, 1])
    top = max(abs(z) for z in roots)
    for n in range(61):
        with mp.workdps(120):
            direct = mpmath.re(sum(z**n for z in roots))
            tol = 3 * ctx.radius * n * (top + ctx.radius) ** max(n - 1, 0) + mpmath.mpf(10) ** -60
            assert abs(power_sum(ctx.power_sums, n) - direct) < tol


def test_distance_examples_match_direct_powering(ctx):
    d0 = dist_two_re_power(ctx, 0)
    assert d0.distance == 0 and d0.nearest == 2
    d5 = dist_two_re_power(ctx, 5)
    assert d5.nearest == -406 and abs(float(d5.distance) - DIST_5) < 1e-20
    assert d5.distance <= ctx.C * ctx.rho**5
    dm5 = dist_two_re_power(ctx, -5)
    assert dm5.nearest == 0 and abs(float(dm5.distance) - DIST_M5) < 1e-18
    assert dm5.distance <= 2 * abs(ctx.theta) ** -5
    assert abs(float(dist_two_re_power(ctx, 10).distance) - DIST_10) < 1e-24


@pytest.mark.parametrize("n", range(-40, 61))
def test_decay_bound_pointwise(ctx, n):
    assert dist_two_re_power(ctx, n).distance <= ctx.C * ctx.rho ** abs(n)


def test_decay_constants_cover_both_branches(ctx):
    assert 0 < ctx.rho < 1
    assert ctx.rho >= 1 / abs(ctx.theta)
    assert ctx.rho >= max(abs(z) for z, _ in ctx.others())
    with mp.workdps(ctx.dps):
        assert abs(ctx.lam * ctx.theta - 1) <= 10 * (ctx.lam_radius + ctx.theta_radius)


def test_reduced_trace_multiple_is_exact_mod_one(ctx):
    with mp.workdps(150):
        roots = oracle_roots([1, 10, 1], 150)
        theta = max(roots, key=lambda z: (abs(z), mpmath.im(z)))
        for m in (0, 3, 17, 45, -2, -20):
            for k in (1, 2, 7):
                x, err = reduced_trace_multiple(ctx, k, m)
                direct = k * 2 * mpmath.re(theta**m)
                frac = direct - mpmath.floor(direct)
                diff = abs(float((x - frac + mpmath.mpf(1) / 2) % 1 - mpmath.mpf(1) / 2))
                assert diff <= float(err) + 1e-40


cubics = st.tuples(
    st.integers(-12, 12).filter(lambda c: c != 0), st.integers(-12, 12), st.integers(-12, 12)
)


@settings(max_examples=40, deadline=None)
@given(cubics)
def test_roots_certified_for_random_cubics(coeffs):
    poly = MonicIntPolynomial(coeffs)
    if not poly.is_squarefree():
        with pytest.raises(ValueError):
            find_roots(poly, 25)
        return
    roots = find_roots(poly, 25)
    oracle = oracle_roots(list(coeffs), 60)
    for z, r in roots:
        assert r <= mpmath.mpf(10) ** -25
        assert min(abs(z - w) for w in oracle) <= r + mpmath.mpf(10) ** -40


@settings(max_examples=40, deadline=None)
@given(cubics)
def test_pisot_verdict_never_guesses(coeffs):
    poly = MonicIntPolynomial(coeffs)
    if not poly.is_squarefree():
        return
    ctx_r = build_context(poly, 30)
    try:
        cert = verify_complex_pisot(ctx_r)
    except PrecisionError:
        return
    oracle = oracle_roots(list(coeffs), 60)
    theta = max(oracle, key=lambda z: abs(z))
    expected = (
        abs(mpmath.im(theta)) > 1e-30
        and abs(theta) > 1
        and sum(1 for z in oracle if abs(z) >= 1) == 2
    )
    assert cert.is_complex_pisot == expected


@settings(max_examples=30, deadline=None)
@given(cubics, st.integers(0, 30))
def test_power_sum_recurrence_random(coeffs, n):
    seq = PowerSumSequence(MonicIntPolynomial(coeffs))
    with mp.workdps(100):
        direct = int(mpmath.nint(mpmath.re(sum(z**n for z in oracle_roots(list(coeffs), 100)))))
    assert power_sum(seq, n) == direct
