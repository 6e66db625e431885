import csv
import io
import math
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from timedexec.analytics import (
    CSV_COLUMNS,
    SRParams,
    monotonicity_violations,
    monte_carlo_sr,
    rows_to_csv,
    schedule_success_rate,
    share_loss_prob,
    standard_grid,
    sweep,
)


def exact_sr(l, m, n, p):
    """Rational evaluation of the binomial tail, independent of the float path."""
    p = Fraction(p)
    loss = 1 - (1 - p) ** l
    tail = sum(math.comb(n, i) * loss**i * (1 - loss) ** (n - i) for i in range(n - m + 1, n + 1))
    return 1 - tail


def test_share_loss_values():
    assert share_loss_prob(0.0, 3) == 0.0
    assert share_loss_prob(1.0, 3) == 1.0
    assert share_loss_prob(0.05, 3) == pytest.approx(0.142625, abs=1e-12)
    assert Fraction(1) - Fraction(19, 20) ** 3 == Fraction(142625, 1_000_000)
    # tiny probabilities keep their leading digits
    assert share_loss_prob(1e-12, 4) == pytest.approx(4e-12, rel=1e-9)


@pytest.mark.parametrize("args", [(-0.1, 3), (1.1, 3), (0.5, 0)])
def test_share_loss_domain(args):
    with pytest.raises(ValueError):
        share_loss_prob(*args)


@pytest.mark.parametrize("args", [(1, 1, 1, 0.1), (3, 0, 5, 0.1), (3, 6, 5, 0.1), (3, 2, 5, 1.5), (3.0, 2, 5, 0.1)])
def test_params_validation(args):
    with pytest.raises(ValueError):
        SRParams(*args)


@pytest.mark.parametrize(
    "params,published",
    [(SRParams(3, 2, 5, 0.05), 0.9982), (SRParams(4, 4, 10, 0.05), 0.9995)],
)
def test_test_instance_rates(params, published):
    sr = schedule_success_rate(params)
    assert abs(sr - published) <= 1e-4
    assert sr == pytest.approx(float(exact_sr(params.l, params.m, params.n, Fraction(1, 20))), abs=1e-15)


def test_zero_misbehavior_always_succeeds():
    for cell in standard_grid():
        assert schedule_success_rate(SRParams(cell.l, cell.m, cell.n, 0.0)) == 1.0
    assert schedule_success_rate(SRParams(3, 1, 4, 1.0)) == 0.0


cells = st.integers(2, 6).flatmap(
    lambda l: st.integers(1, 40).flatmap(lambda n: st.tuples(st.just(l), st.integers(1, n), st.just(n)))
)
probs = st.fractions(0, 1, max_denominator=1000)


@settings(max_examples=200, deadline=None)
@given(cells, probs)
def test_matches_rational_evaluation(cell, p):
    l, m, n = cell
    assert schedule_success_rate(SRParams(l, m, n, float(p))) == pytest.approx(float(exact_sr(l, m, n, p)), abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(cells, st.floats(0, 1))
def test_boundary_identities(cell, p):
    l, _, n = cell
    loss = share_loss_prob(p, l)
    assert schedule_success_rate(SRParams(l, 1, n, p)) == pytest.approx(1 - loss**n, abs=1e-12)
    assert schedule_success_rate(SRParams(l, n, n, p)) == pytest.approx((1 - loss) ** n, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(cells, probs)
def test_monotone_in_m_l_and_n(cell, p):
    l, m, n = cell
    p = float(p)
    sr = schedule_success_rate(SRParams(l, m, n, p))
    tol = 1e-12
    if m < n:
        assert schedule_success_rate(SRParams(l, m + 1, n, p)) <= sr + tol
    assert schedule_success_rate(SRParams(l + 1, m, n, p)) <= sr + tol
    assert schedule_success_rate(SRParams(l, m, n + 1, p)) >= sr - tol


def test_standard_grid_shape_and_monotonicity():
    grid = standard_grid()
    assert len(grid) == 3 * 5 + 3 * 10
    rows = sweep(grid)
    assert monotonicity_violations(rows) == []
    # a deliberately broken table is caught
    broken = sweep([SRParams(3, 1, 5, 0.05), SRParams(3, 2, 5, 0.05)])
    object.__setattr__(broken[1], "sr_analytic", 1.5)
    assert monotonicity_violations(broken)


def test_sweep_single_cell_and_empty():
    params = SRParams(3, 2, 5, 0.05)
    (row,) = sweep([params])
    assert row.sr_analytic == schedule_success_rate(params) and row.mc is None
    assert sweep([(3, 2, 5, 0.05)])[0].params == params
    with pytest.raises(ValueError):
        sweep([])


def test_csv_columns():
    rows = sweep([SRParams(3, 2, 5, 0.05)], mc_runs=3, seed=7)
    table = list(csv.reader(io.StringIO(rows_to_csv(rows + sweep([SRParams(4, 4, 10, 0.05)])))))
    assert tuple(table[0]) == CSV_COLUMNS == ("l", "m", "n", "p_IM", "SR_analytic", "SR_mc", "stderr", "runs", "seed")
    assert table[1][:4] == ["3", "2", "5", "0.05"] and table[1][7:] == ["3", "7"]
    assert float(table[1][4]) == schedule_success_rate(SRParams(3, 2, 5, 0.05))
    assert table[2][5:] == ["", "", "0", ""]


def test_monte_carlo_trivial_cases():
    one = monte_carlo_sr(SRParams(3, 2, 5, 0.05), runs=1, seed=3)
    assert one.estimate in (0.0, 1.0) and one.runs == 1 and one.stderr == 0.0
    doomed = monte_carlo_sr(SRParams(2, 1, 2, 1.0), runs=5)
    assert doomed.estimate == 0.0 and doomed.successes == 0
    assert monte_carlo_sr(SRParams(2, 2, 2, 0.0), runs=5).estimate == 1.0
    with pytest.raises(ValueError):
        monte_carlo_sr(SRParams(2, 1, 2, 0.1), runs=0)


def test_monte_carlo_split_does_not_change_result():
    params = SRParams(2, 2, 3, 0.2)
    assert monte_carlo_sr(params, 40, seed=5) == monte_carlo_sr(params, 40, seed=5, workers=3)


def test_monte_carlo_consistency_small_cell():
    params = SRParams(2, 2, 2, 0.2)
    result = monte_carlo_sr(params, 10_000, seed=0)
    assert result.z_score(schedule_success_rate(params)) <= 4.0
