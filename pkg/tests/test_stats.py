import csv
import io
import json
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import binom, norm

from poq import stats
from poq.protocol import Tally


def test_quantumness_formula():
    assert stats.quantumness(1.0, 1.0, "lwe") == 1.0
    assert stats.quantumness(1.0, 0.75, "factoring") == 0.0
    assert stats.quantumness(0.5, 0.75, "lwe") == 0.0
    with pytest.raises(ValueError):
        stats.quantumness(1, 1, "rsa")


@pytest.mark.parametrize("n,p", [(10, 0.3), (500, 0.91), (4000, 0.5), (7, 0.0), (7, 1.0)])
def test_binom_logpmf_vs_scipy(n, p):
    ours = stats._binom_logpmf(n, p)
    ref = binom.logpmf(np.arange(n + 1), n, p)
    finite = np.isfinite(ref)
    assert np.array_equal(finite, np.isfinite(ours))
    assert np.allclose(ours[finite], ref[finite], atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(
    st.integers(1, 14),
    st.integers(1, 14),
    st.floats(-0.5, 1.0),
    st.floats(0.0, 1.0),
    st.sampled_from(["lwe", "factoring"]),
)
def test_log_pvalue_vs_exhaustive(N_A, N_B, q, pA, kind):
    fast = stats.log_pvalue_null(q, N_A, N_B, kind, pA)
    slow = stats.log_pvalue_null_exhaustive(q, N_A, N_B, kind, pA)
    if slow == -math.inf:
        assert fast == -math.inf or fast < -30
    else:
        assert fast == pytest.approx(slow, abs=1e-9)


def _mp_log_tail(q, N_A, N_B, c, pA):
    """Arbitrary-precision oracle for log P(q' >= q) under one null."""
    mpmath.mp.dps = 40
    pA = mpmath.mpf(pA)
    pB = 1 - pA / c
    pmf_b = [mpmath.binomial(N_B, k) * pB**k * (1 - pB) ** (N_B - k) for k in range(N_B + 1)]
    tail = [mpmath.mpf(0)] * (N_B + 2)
    for k in range(N_B, -1, -1):
        tail[k] = tail[k + 1] + pmf_b[k]
    total = mpmath.mpf(0)
    for ka in range(N_A + 1):
        need = math.ceil(N_B * (q + c - ka / N_A) / c - 1e-9 * N_B)
        if need > N_B:
            continue
        total += mpmath.binomial(N_A, ka) * pA**ka * (1 - pA) ** (N_A - ka) * tail[max(need, 0)]
    return float(mpmath.log(total))


def test_extreme_tail_vs_mpmath():
    # p-value far below the smallest double
    val = stats.log_pvalue_null(0.9, 2000, 2000, "lwe", 0.6)
    ref = _mp_log_tail(0.9, 2000, 2000, 2, 0.6)
    assert ref < -800
    assert val == pytest.approx(ref, rel=1e-9)


def test_max_over_boundary_vs_bruteforce():
    q, N_A, N_B = 0.3, 12, 10
    best, _ = stats.max_log_pvalue(q, N_A, N_B, "lwe", full_grid=True)
    brute = max(stats.log_pvalue_null_exhaustive(q, N_A, N_B, "lwe", p) for p in np.linspace(0, 1, 1001))
    assert best >= brute - 1e-12
    assert best == pytest.approx(brute, abs=1e-3)


@pytest.mark.parametrize("q,N_A,N_B,kind", [(0.1, 4096, 15267, "factoring"), (0.2, 8000, 7547, "lwe"), (0.5, 3000, 4000, "lwe")])
def test_coarse_search_equals_full_grid(q, N_A, N_B, kind):
    a, _ = stats.max_log_pvalue(q, N_A, N_B, kind)
    b, _ = stats.max_log_pvalue(q, N_A, N_B, kind, full_grid=True)
    assert a == pytest.approx(b, abs=1e-9)


@pytest.mark.parametrize("sigma", [0.5, 3.0, 8.0, 25.0, 60.0])
def test_sigma_inverse_vs_mpmath(sigma):
    mpmath.mp.dps = 50
    log_p = float(mpmath.log(mpmath.ncdf(-sigma)))
    assert stats.sigma_from_log_pvalue(log_p) == pytest.approx(sigma, rel=1e-9)


def test_sigma_moderate_vs_scipy():
    assert stats.sigma_from_log_pvalue(math.log(norm.sf(4.0))) == pytest.approx(4.0)


def test_sigma_floor():
    assert stats.sigma_from_log_pvalue(math.log(0.7)) == 0.0
    assert stats.significance_at(-0.1, 100, 100, "lwe") == 0.0
    assert stats.significance_at(0.0, 100, 100, "lwe") == 0.0


@settings(max_examples=10, deadline=None)
@given(st.floats(0.01, 0.3), st.floats(0.01, 0.3))
def test_significance_monotone_in_q(q1, q2):
    lo, hi = sorted((q1, q2))
    assert stats.significance_at(lo, 2000, 2000, "lwe") <= stats.significance_at(hi, 2000, 2000, "lwe") + 1e-9


def test_significance_grows_with_samples():
    assert stats.significance_at(0.05, 20000, 20000, "factoring") > stats.significance_at(0.05, 2000, 2000, "factoring")


def test_contour():
    q = stats.contour_q_for_sigma(4000, 4000, 5.0, "lwe")
    assert q is not None
    assert stats.significance_at(q, 4000, 4000, "lwe") >= 5.0
    assert stats.significance_at(q - 2e-3, 4000, 4000, "lwe") < 5.0
    assert stats.contour_q_for_sigma(3, 3, 40.0, "lwe") is None


def test_relative_performance():
    assert stats.relative_performance(1.0, 1.0, 0.5) == 1.0
    assert stats.relative_performance(0.5, 1.0, 0.5) == 0.0
    with pytest.raises(ValueError):
        stats.relative_performance(0.5, 0.5, 0.5)
    assert stats.branch_constants("factoring", "B") == (pytest.approx(math.cos(math.pi / 8) ** 2), 0.5)
    assert stats.branch_constants("lwe", "A", 32) == (1.0, 2 / 32)


def test_aggregate_pB_over_r():
    p, n = stats.aggregate_pB_over_r({"01": [100, 80], "10": [50, 45], "11": [200, 170]})
    assert p == pytest.approx((0.8 + 0.9 + 0.85) / 3)
    assert n == 150
    with pytest.raises(ValueError):
        stats.aggregate_pB_over_r({})


def test_analyze_and_report():
    t = Tally(N_A=1000, k_A=990, N_B=2000, k_B=1700, per_r={"01": [1000, 850], "10": [1000, 850]})
    res = stats.analyze_tally(t, "factoring")
    assert res.q == pytest.approx(0.99 + 4 * 0.85 - 4)
    rows = stats.report_rows("rabin15", "delayed", res, 8)
    parsed = list(csv.DictReader(io.StringIO(stats.rows_to_csv(rows))))
    assert tuple(parsed[0]) == stats.REPORT_COLUMNS
    assert [r["branch"] for r in parsed] == ["A", "B"]
    assert json.loads(stats.rows_to_json(rows))[1]["p_guess"] == 0.5
    with pytest.raises(ValueError):
        stats.analyze_tally(Tally(N_A=3, k_A=3), "lwe")


def test_stderr():
    se = stats.quantumness_stderr(0.9, 100, 0.8, 100, "lwe")
    assert se == pytest.approx(math.sqrt(0.09 / 100 + 4 * 0.16 / 100))
