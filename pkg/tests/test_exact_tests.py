from fractions import Fraction
import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from baseline_screen.exact_tests import (
    ContinuousSummary,
    DegenerateTableError,
    Direction,
    TestKind,
    TieTolerance,
    chi_square_p,
    chi_square_pvalues,
    fisher_exact_p,
    fisher_exact_p_rxc,
    hypergeom_logpmf,
    hypergeom_logpmf_support,
    reverse_fisher_exact_p,
    support_pvalues_2x2,
    t_test_p,
    t_test_p_bounds,
)
from baseline_screen.numerics import chi_square_sf
from baseline_screen.tables import EnumerationCapExceeded, Marginals, Table2x2, TableRxC, marginals, support_2x2


def _exact_pmf(m):
    """Hypergeometric pmf over the support as exact fractions."""
    (s, _), (n1, n2) = m.row_totals, m.col_totals
    denom = math.comb(n1 + n2, s)
    return {k: Fraction(math.comb(n1, k) * math.comb(n2, s - k), denom) for k in support_2x2(m)}


def _oracle_p(t, direction):
    """Brute force: sort the support by exact pmf and sum the tail (exact ties only)."""
    pmf = _exact_pmf(marginals(t))
    obs = pmf[t.k1]
    if direction == "standard":
        return sum(v for v in pmf.values() if v <= obs)
    return sum(v for v in pmf.values() if v >= obs)


@st.composite
def tables_2x2(draw, max_n=30):
    n1 = draw(st.integers(1, max_n))
    n2 = draw(st.integers(1, max_n))
    return Table2x2(draw(st.integers(0, n1)), draw(st.integers(0, n2)), n1, n2)


def test_hypergeom_examples():
    assert hypergeom_logpmf(1, Marginals((2, 2), (2, 2))) == pytest.approx(math.log(4 / 6), abs=1e-15)
    assert hypergeom_logpmf(2, Marginals((4, 0), (2, 2))) == 0.0
    _, logpmf = hypergeom_logpmf_support(Marginals((10, 190), (100, 100)))
    assert math.fsum(np.exp(logpmf)) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        hypergeom_logpmf(3, Marginals((2, 2), (2, 2)))


@settings(max_examples=200, deadline=None)
@given(tables_2x2(60))
def test_hypergeom_against_scipy(t):
    m = marginals(t)
    expected = stats.hypergeom.logpmf(t.k1, t.n, t.n1, t.s)
    assert hypergeom_logpmf(t.k1, m) == pytest.approx(expected, abs=1e-10)


def test_fisher_examples():
    assert fisher_exact_p(Table2x2(1, 0, 1, 1)).value == 1.0
    assert fisher_exact_p(Table2x2(2, 0, 2, 2)).value == pytest.approx(1 / 3, abs=1e-15)
    assert fisher_exact_p(Table2x2(1, 1, 2, 2)).value == 1.0
    assert fisher_exact_p(Table2x2(1, 1, 2, 2)).direction is Direction.STANDARD


def test_reverse_fisher_examples():
    assert reverse_fisher_exact_p(Table2x2(1, 1, 2, 2)).value == pytest.approx(2 / 3, abs=1e-15)
    assert reverse_fisher_exact_p(Table2x2(2, 0, 2, 2)).value == 1.0
    assert reverse_fisher_exact_p(Table2x2(0, 0, 5, 5)).value == 1.0
    assert reverse_fisher_exact_p(Table2x2(0, 0, 5, 5)).direction is Direction.REVERSE


@settings(max_examples=1000, deadline=None)
@given(tables_2x2(25))
def test_fisher_against_brute_force_oracle(t):
    assert fisher_exact_p(t).value == pytest.approx(float(_oracle_p(t, "standard")), abs=1e-12)
    assert reverse_fisher_exact_p(t).value == pytest.approx(float(_oracle_p(t, "reverse")), abs=1e-12)


@settings(max_examples=300, deadline=None)
@given(tables_2x2(80))
def test_fisher_agrees_with_scipy(t):
    ours = fisher_exact_p(t).value
    theirs = stats.fisher_exact([[t.k1, t.k2], [t.n1 - t.k1, t.n2 - t.k2]]).pvalue
    assert ours == pytest.approx(min(1.0, theirs), abs=1e-9)


def test_tie_tolerance_validation():
    TieTolerance(0.0)
    with pytest.raises(ValueError):
        TieTolerance(1e-3)
    with pytest.raises(ValueError):
        TieTolerance(-1e-9)


def test_zero_tolerance_keeps_analytic_ties_when_exact():
    # Symmetric margins give bit-identical log pmfs for mirrored tables.
    assert fisher_exact_p(Table2x2(2, 0, 2, 2), TieTolerance(0.0)).value == pytest.approx(1 / 3)


@settings(max_examples=300, deadline=None)
@given(st.integers(1, 30), st.integers(1, 30), st.data())
def test_tie_identity_is_exact(n1, n2, data):
    s = data.draw(st.integers(0, min(30, n1 + n2)))
    m = Marginals((s, n1 + n2 - s), (n1, n2))
    pmf = _exact_pmf(m)
    k1, p_std, _ = support_pvalues_2x2(m, TestKind.FISHER, Direction.STANDARD)
    _, p_rev, _ = support_pvalues_2x2(m, TestKind.FISHER, Direction.REVERSE)
    for i, k in enumerate(k1):
        tie_mass = sum(v for v in pmf.values() if v == pmf[int(k)])
        assert tie_mass >= pmf[int(k)]
        assert p_std[i] + p_rev[i] == pytest.approx(1 + float(tie_mass), abs=1e-10)


def test_rxc_examples():
    assert fisher_exact_p_rxc(TableRxC([[1, 0], [0, 1]]), direction=Direction.REVERSE).value == 1.0
    assert fisher_exact_p_rxc(TableRxC([[2, 0], [0, 2]])).value == pytest.approx(1 / 3, abs=1e-15)


@settings(max_examples=100, deadline=None)
@given(tables_2x2(20))
def test_rxc_path_equals_2x2_path(t):
    rxc = TableRxC([[t.k1, t.k2], [t.n1 - t.k1, t.n2 - t.k2]])
    assert fisher_exact_p_rxc(rxc).value == pytest.approx(fisher_exact_p(t).value, abs=1e-12)
    assert fisher_exact_p_rxc(rxc, direction=Direction.REVERSE).value == pytest.approx(
        reverse_fisher_exact_p(t).value, abs=1e-12
    )


def _rxc_oracle(counts, direction):
    counts = np.asarray(counts)
    rows, cols = counts.sum(axis=1), counts.sum(axis=0)
    total = counts.sum()

    def prob(table):
        num = math.prod(math.factorial(int(v)) for v in list(rows) + list(cols))
        den = math.factorial(int(total)) * math.prod(math.factorial(int(v)) for v in table.ravel())
        return Fraction(num, den)

    tables = []
    r, c = counts.shape
    for cells in itertools.product(range(int(rows.max()) + 1), repeat=r * c):
        t = np.array(cells).reshape(r, c)
        if (t.sum(axis=1) == rows).all() and (t.sum(axis=0) == cols).all():
            tables.append(prob(t))
    obs = prob(counts)
    keep = (lambda v: v <= obs) if direction is Direction.STANDARD else (lambda v: v >= obs)
    return float(sum(v for v in tables if keep(v)))


@pytest.mark.parametrize(
    "counts",
    [
        [[3, 1], [1, 2], [0, 3]],
        [[2, 2, 1], [1, 0, 3]],
        [[1, 1], [1, 1], [1, 1]],
        [[4, 0], [0, 0], [0, 4]],
    ],
)
@pytest.mark.parametrize("direction", [Direction.STANDARD, Direction.REVERSE])
def test_rxc_against_exact_enumeration(counts, direction):
    got = fisher_exact_p_rxc(TableRxC(counts), direction=direction).value
    assert got == pytest.approx(_rxc_oracle(counts, direction), abs=1e-12)


def test_rxc_cap_propagates():
    t = TableRxC([[10, 10, 10]] * 4)
    with pytest.raises(EnumerationCapExceeded):
        fisher_exact_p_rxc(t, cap=100)


def test_chi_square_examples():
    assert chi_square_p(Table2x2(5, 5, 100, 100)).value == 1.0
    assert chi_square_p(Table2x2(5, 5, 100, 100), yates=True).value == 1.0
    # Rows (10, 190): E = 5 and 95 per group, so X2 = 2*(25/5 + 25/95) = 200/19.
    stat = 2 * (25 / 5 + 25 / 95)
    assert chi_square_p(Table2x2(10, 0, 100, 100)).value == pytest.approx(chi_square_sf(stat, 1), rel=1e-12)


@settings(max_examples=200, deadline=None)
@given(tables_2x2(60))
def test_chi_square_against_scipy(t):
    obs = np.array([[t.k1, t.k2], [t.n1 - t.k1, t.n2 - t.k2]])
    if (obs.sum(axis=0) == 0).any() or (obs.sum(axis=1) == 0).any():
        with pytest.raises(DegenerateTableError):
            chi_square_p(t)
        return
    for yates in (False, True):
        expected = stats.chi2_contingency(obs, correction=yates).pvalue
        assert chi_square_p(t, yates).value == pytest.approx(expected, rel=1e-9, abs=1e-14)


@settings(max_examples=50, deadline=None)
@given(tables_2x2(60))
def test_yates_never_smaller(t):
    if t.s in (0, t.n):
        return
    assert chi_square_p(t, True).value >= chi_square_p(t, False).value


def test_chi_square_vectorised_marks_degenerate():
    out = chi_square_pvalues(np.array([0, 1]), np.array([0, 1]), 3, 3)
    assert math.isnan(out[0]) and 0 < out[1] <= 1


def test_yates_and_fisher_rank_agreement():
    ks = [(k1, k2) for k1 in range(21) for k2 in range(21) if 0 < k1 + k2 <= 10]
    fisher = [fisher_exact_p(Table2x2(a, b, 20, 20)).value for a, b in ks]
    yates = [chi_square_p(Table2x2(a, b, 20, 20), True).value for a, b in ks]
    assert stats.spearmanr(fisher, yates).statistic > 0.99


def test_support_pvalues_naive_reverse_is_complement():
    m = Marginals((7, 13), (10, 10))
    for test in TestKind:
        _, std, _ = support_pvalues_2x2(m, test, Direction.STANDARD)
        _, naive, _ = support_pvalues_2x2(m, test, Direction.NAIVE_REVERSE)
        np.testing.assert_allclose(naive, 1.0 - std, rtol=0, atol=0)


def test_support_pvalues_chi_square_reverse_is_super_uniform():
    m = Marginals((9, 31), (20, 20))
    _, logpmf = hypergeom_logpmf_support(m)
    pmf = np.exp(logpmf)
    for test in (TestKind.CHISQ, TestKind.CHISQ_YATES):
        _, rev, _ = support_pvalues_2x2(m, test, Direction.REVERSE)
        for alpha in np.unique(rev):
            assert pmf[rev <= alpha].sum() <= alpha + 1e-12


def test_t_test_examples():
    same = ContinuousSummary((16, 16), (3.0, 3.0), (1.0, 4.0))
    assert t_test_p(same).value == 1.0
    s = ContinuousSummary((16, 16), (1.0, 2.0), (1.0, 1.0))
    expected = 2 * stats.t.sf(2 * math.sqrt(2), 30)
    assert t_test_p(s).value == pytest.approx(expected, rel=1e-10)
    # 0.0082 is the two-figure truncation of 0.008257.
    assert t_test_p(s).value == pytest.approx(0.0082, abs=1e-4)


def test_t_test_degenerate_sds():
    equal = t_test_p(ContinuousSummary((5, 5), (1.0, 1.0), (0.0, 0.0)))
    assert equal.value == 1.0 and equal.degenerate
    differ = t_test_p(ContinuousSummary((5, 5), (1.0, 2.0), (0.0, 0.0)))
    assert differ.value == 0.0 and differ.degenerate


@settings(max_examples=100, deadline=None)
@given(
    st.integers(2, 200),
    st.floats(-50, 50),
    st.floats(-50, 50),
    st.floats(0.1, 20),
)
def test_welch_equals_pooled_for_balanced_designs(n, m1, m2, sd):
    s = ContinuousSummary((n, n), (m1, m2), (sd, sd))
    assert t_test_p(s, False).value == pytest.approx(t_test_p(s, True).value, rel=1e-9, abs=1e-300)


@settings(max_examples=100, deadline=None)
@given(
    st.integers(2, 80), st.integers(2, 80),
    st.floats(-10, 10), st.floats(-10, 10),
    st.floats(0.1, 5), st.floats(0.1, 5),
    st.booleans(),
)
def test_t_test_against_scipy(n1, n2, m1, m2, s1, s2, equal_var):
    s = ContinuousSummary((n1, n2), (m1, m2), (s1, s2))
    expected = stats.ttest_ind_from_stats(m1, s1, n1, m2, s2, n2, equal_var=equal_var).pvalue
    assert t_test_p(s, equal_var).value == pytest.approx(expected, rel=1e-8, abs=1e-300)


def test_t_bounds_examples():
    lo, hi = t_test_p_bounds(ContinuousSummary((10, 10), (2.3, 2.3), (1.0, 1.2), decimals=1))
    assert hi.value == 1.0 and lo.value <= 1.0
    exact = ContinuousSummary((10, 10), (1.0, 1.5), (1.0, 1.0))
    lo, hi = t_test_p_bounds(exact)
    assert lo.value == hi.value == t_test_p(exact).value


def test_t_bounds_against_grid_search():
    s = ContinuousSummary((10, 10), (1.0, 1.5), (1.0, 1.0), decimals=1)
    lo, hi = t_test_p_bounds(s)
    grid = np.linspace(-0.05, 0.05, 11)
    ps = []
    for d1, d2, e1, e2 in itertools.product(grid, repeat=4):
        ps.append(stats.ttest_ind_from_stats(1.0 + d1, 1.0 + e1, 10, 1.5 + d2, 1.0 + e2, 10).pvalue)
    assert lo.value == pytest.approx(min(ps), rel=1e-9)
    assert hi.value == pytest.approx(max(ps), rel=1e-9)
    assert lo.value <= t_test_p(s).value <= hi.value


def test_continuous_summary_invariants():
    with pytest.raises(ValueError):
        ContinuousSummary((1, 5), (0.0, 0.0), (1.0, 1.0))
    with pytest.raises(ValueError):
        ContinuousSummary((5, 5), (0.0, 0.0), (-1.0, 1.0))
