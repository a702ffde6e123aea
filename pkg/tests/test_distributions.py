import csv
from fractions import Fraction
import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from baseline_screen.distributions import (
    PValueDistribution,
    binomial_logpmf,
    cdf,
    conditional_distribution,
    curve_csv,
    curve_points,
    expectation,
    expected_mean_pvalue,
    pvalue_matrix,
    unconditional_distribution,
    uniform_mean_reference,
    Conditional,
)
from baseline_screen.exact_tests import Direction, TestKind
from baseline_screen.tables import EnumerationCapExceeded, Marginals


def _atoms(d):
    return [(round(p, 12), round(w, 12)) for p, w in d.atoms]


def test_conditional_examples():
    m = Marginals((2, 2), (2, 2))
    assert _atoms(conditional_distribution(m)) == [(round(1 / 3, 12), round(1 / 3, 12)), (1.0, round(2 / 3, 12))]
    rev = conditional_distribution(m, direction=Direction.REVERSE)
    assert _atoms(rev) == [(round(2 / 3, 12), round(2 / 3, 12)), (1.0, round(1 / 3, 12))]
    assert conditional_distribution(Marginals((4, 0), (2, 2))).atoms == [(1.0, 1.0)]


def test_conditional_rxc_allowed_for_fisher_only():
    m = Marginals((2, 2, 2), (3, 3))
    d = conditional_distribution(m)
    assert math.fsum(d.masses) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        conditional_distribution(m, TestKind.CHISQ)
    with pytest.raises(EnumerationCapExceeded):
        conditional_distribution(Marginals((10,) * 4, (10,) * 4), cap=50)


def test_unconditional_examples():
    assert unconditional_distribution(1, 1, 0.5).atoms == [(1.0, 1.0)]


def test_expectation_examples():
    assert expectation(conditional_distribution(Marginals((4, 0), (2, 2)))) == 1.0
    assert expectation(conditional_distribution(Marginals((2, 2), (2, 2)))) == pytest.approx(7 / 9, abs=1e-15)


def test_cdf_examples():
    d = conditional_distribution(Marginals((2, 2), (2, 2)))
    assert cdf(d, 1.0) == 1.0
    assert cdf(d, 0.0) == 0.0
    assert cdf(d, 0.5) == pytest.approx(1 / 3)
    with pytest.raises(ValueError):
        cdf(d, 1.5)


def test_curve_points_examples():
    single = conditional_distribution(Marginals((4, 0), (2, 2)))
    assert curve_points(single) == [(0.0, 0.0), (1.0, 1.0)]
    two = conditional_distribution(Marginals((2, 2), (2, 2)))
    pts = curve_points(two)
    assert [p for p, _ in pts] == [0.0, pytest.approx(1 / 3), 1.0]
    assert pts[1][1] == pytest.approx(1 / 3) and pts[2][1] == 1.0


@pytest.mark.parametrize("direction", list(Direction))
def test_curve_points_reconstruct_the_step_cdf(direction):
    d = unconditional_distribution(12, 9, 0.3, TestKind.FISHER, direction)
    pts = curve_points(d)
    first_at_zero = d.pvalues[0] == 0.0
    last_at_one = d.pvalues[-1] == 1.0
    assert len(pts) == len(d.pvalues) + (0 if first_at_zero else 1) + (0 if last_at_one else 1)
    xs = np.array([p for p, _ in pts])
    ys = np.array([v for _, v in pts])
    for alpha in np.linspace(0, 1, 501):
        idx = np.searchsorted(xs, alpha, side="right") - 1
        assert ys[idx] == pytest.approx(cdf(d, float(alpha)), abs=1e-12)


def test_curve_csv_format():
    d = conditional_distribution(Marginals((2, 2), (2, 2)))
    rows = list(csv.reader(io.StringIO(curve_csv(d))))
    assert rows[0] == ["alpha", "cdf", "reference"]
    assert [float(r[0]) for r in rows[1:]] == [float(r[2]) for r in rows[1:]]
    assert float(rows[-1][1]) == 1.0


def test_distribution_invariants_are_enforced():
    with pytest.raises(ValueError):
        PValueDistribution((0.5, 0.4), (0.5, 0.5), Conditional(Marginals((1, 1), (1, 1))), TestKind.FISHER,
                           Direction.STANDARD)
    with pytest.raises(ValueError):
        PValueDistribution((0.5,), (0.7,), Conditional(Marginals((1, 1), (1, 1))), TestKind.FISHER,
                           Direction.STANDARD)


@settings(max_examples=150, deadline=None)
@given(st.integers(1, 30), st.integers(1, 30), st.data())
def test_conditional_super_uniformity(n1, n2, data):
    s = data.draw(st.integers(0, min(30, n1 + n2)))
    m = Marginals((s, n1 + n2 - s), (n1, n2))
    for direction in (Direction.STANDARD, Direction.REVERSE):
        d = conditional_distribution(m, TestKind.FISHER, direction)
        for p in d.pvalues:
            assert cdf(d, p) <= p + 1e-10


@pytest.mark.parametrize("test", list(TestKind))
def test_naive_reverse_relation(test):
    std = unconditional_distribution(15, 15, 0.2, test, Direction.STANDARD)
    naive = unconditional_distribution(15, 15, 0.2, test, Direction.NAIVE_REVERSE)
    for alpha in sorted(set(naive.pvalues) | {0.0, 0.01, 0.5, 1.0}):
        strictly_below = math.fsum(w for p, w in std.atoms if p < 1 - alpha - 1e-12)
        assert cdf(naive, alpha) == pytest.approx(1 - strictly_below, abs=1e-10)


@pytest.mark.parametrize("n", [1, 3, 7, 12])
def test_mixture_identity(n):
    p_yes = 0.37
    uncond = unconditional_distribution(n, n, p_yes)
    mixture = {}
    for s in range(2 * n + 1):
        w_s = stats.binom.pmf(s, 2 * n, p_yes)
        for p, w in conditional_distribution(Marginals((s, 2 * n - s), (n, n))).atoms:
            key = round(p, 11)
            mixture[key] = mixture.get(key, 0.0) + w_s * w
    got = {round(p, 11): w for p, w in uncond.atoms}
    assert got.keys() == mixture.keys()
    for key in got:
        assert got[key] == pytest.approx(mixture[key], abs=1e-12)


def test_unconditional_against_exact_rational_enumeration():
    n1, n2, p_yes = 4, 3, Fraction(1, 3)

    def binom(k, n):
        return math.comb(n, k) * p_yes**k * (1 - p_yes) ** (n - k)

    total = Fraction(0)
    for k1 in range(n1 + 1):
        for k2 in range(n2 + 1):
            s = k1 + k2
            pmf = {k: Fraction(math.comb(n1, k) * math.comb(n2, s - k), math.comb(n1 + n2, s))
                   for k in range(max(0, s - n2), min(s, n1) + 1)}
            p = sum(v for v in pmf.values() if v <= pmf[k1])
            total += binom(k1, n1) * binom(k2, n2) * p
    assert expectation(unconditional_distribution(n1, n2, 1 / 3)) == pytest.approx(float(total), abs=1e-13)


def test_pvalue_matrix_shape_and_cap():
    mat = pvalue_matrix(3, 5)
    assert mat.shape == (4, 6)
    assert ((mat > 0) & (mat <= 1)).all()
    with pytest.raises(EnumerationCapExceeded):
        pvalue_matrix(4000, 4000)


def test_binomial_logpmf_matches_scipy():
    k = np.arange(0, 41)
    np.testing.assert_allclose(binomial_logpmf(k, 40, 0.3), stats.binom.logpmf(k, 40, 0.3), rtol=1e-12)


def test_unconditional_model_validation():
    with pytest.raises(ValueError):
        unconditional_distribution(5, 5, 0.0)
    with pytest.raises(ValueError):
        unconditional_distribution(5, 5, 1.0)


def test_expected_mean_pvalue_and_uniform_reference():
    ms = [Marginals((2, 2), (2, 2)), Marginals((4, 0), (2, 2))]
    assert expected_mean_pvalue(ms) == pytest.approx((7 / 9 + 1) / 2)
    mean, sd = uniform_mean_reference(22)
    assert mean == 0.5 and sd == pytest.approx(1 / math.sqrt(12 * 22))
