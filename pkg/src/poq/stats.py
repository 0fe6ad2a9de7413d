"""Quantumness, significance against the classical boundary, and R.

Significance follows a least-rejected-null construction: every classical
null ``(pA_c, pB_c)`` on the boundary ``pA + c pB = c`` gives a p-value
for observing quantumness at least ``q'``; the reported p-value is the
largest of these.  Tail masses reach far below double-precision range
(60 sigma is about 1e-790), so everything is done in log space.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import gammaln, logsumexp, ndtri_exp

COEFF = {"lwe": 2, "factoring": 4}
GRID_STEP = 1e-3
BELL_P_IDEAL = math.cos(math.pi / 8) ** 2


def _c(kind: str) -> int:
    try:
        return COEFF[kind]
    except KeyError:
        raise ValueError(f"unknown protocol kind {kind!r}") from None


def quantumness(p_A: float, p_B: float, kind: str) -> float:
    c = _c(kind)
    return p_A + c * p_B - c


def quantumness_stderr(p_A: float, N_A: int, p_B: float, N_B: int, kind: str) -> float:
    c = _c(kind)
    return math.sqrt(p_A * (1 - p_A) / N_A + c * c * p_B * (1 - p_B) / N_B)


@lru_cache(maxsize=64)
def _log_binom_coeffs(n: int) -> np.ndarray:
    k = np.arange(n + 1)
    return gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)


def _binom_logpmf(n: int, p: float) -> np.ndarray:
    k = np.arange(n + 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        if p <= 0.0:
            out = np.full(n + 1, -np.inf)
            out[0] = 0.0
            return out
        if p >= 1.0:
            out = np.full(n + 1, -np.inf)
            out[n] = 0.0
            return out
        return _log_binom_coeffs(n) + k * math.log(p) + (n - k) * math.log1p(-p)


def _log_sf_table(logpmf: np.ndarray) -> np.ndarray:
    """``out[t] = log P(K >= t)`` for t = 0..n+1."""
    tail = np.logaddexp.accumulate(logpmf[::-1])[::-1]
    return np.append(tail, -np.inf)


def _thresholds(q_obs: float, N_A: int, N_B: int, c: int) -> np.ndarray:
    """Smallest k_B with q(k_A/N_A, k_B/N_B) >= q_obs, for each k_A."""
    k_a = np.arange(N_A + 1)
    need = N_B * (q_obs + c - k_a / N_A) / c
    t = np.ceil(need - 1e-9 * max(1, N_B)).astype(np.int64)
    return np.clip(t, 0, N_B + 1)


def log_pvalue_null(q_obs: float, N_A: int, N_B: int, kind: str, pA_c: float) -> float:
    """log P(q >= q_obs) under the boundary null with standard-branch rate ``pA_c``."""
    c = _c(kind)
    pB_c = 1 - pA_c / c
    la = _binom_logpmf(N_A, pA_c)
    sf_b = _log_sf_table(_binom_logpmf(N_B, pB_c))
    return float(logsumexp(la + sf_b[_thresholds(q_obs, N_A, N_B, c)]))


def log_pvalue_null_exhaustive(q_obs: float, N_A: int, N_B: int, kind: str, pA_c: float) -> float:
    """Double sum over all (k_A, k_B); small-N oracle for :func:`log_pvalue_null`."""
    c = _c(kind)
    pB_c = 1 - pA_c / c
    total = 0.0
    for ka in range(N_A + 1):
        for kb in range(N_B + 1):
            if ka / N_A + c * kb / N_B - c >= q_obs - 1e-12:
                total += (
                    math.comb(N_A, ka) * pA_c**ka * (1 - pA_c) ** (N_A - ka)
                    * math.comb(N_B, kb) * pB_c**kb * (1 - pB_c) ** (N_B - kb)
                )
    return math.log(total) if total > 0 else -math.inf


def max_log_pvalue(
    q_obs: float, N_A: int, N_B: int, kind: str, step: float = GRID_STEP, full_grid: bool = False
) -> tuple[float, float]:
    """Least-rejected null: ``(max log p-value, pA_c at the maximum)``.

    The boundary is scanned at ``step`` resolution around the best point of
    a 10x coarser scan (or everywhere with ``full_grid``), then refined by a
    bounded scalar search between the neighbouring grid points.
    """
    f = lambda p: log_pvalue_null(q_obs, N_A, N_B, kind, p)  # noqa: E731
    if full_grid:
        grid = np.linspace(0.0, 1.0, int(round(1 / step)) + 1)
    else:
        coarse = np.linspace(0.0, 1.0, int(round(0.1 / step)) + 1)
        c = float(coarse[int(np.argmax([f(p) for p in coarse]))])
        grid = np.arange(max(0.0, c - 20 * step), min(1.0, c + 20 * step) + step / 2, step)
    vals = np.array([f(p) for p in grid])
    i = int(np.argmax(vals))
    best_p, best = float(grid[i]), float(vals[i])
    if np.isfinite(best):
        lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
        if hi > lo:
            res = minimize_scalar(lambda p: -f(p), bounds=(lo, hi), method="bounded", options={"xatol": 1e-7})
            if -res.fun > best:
                best_p, best = float(res.x), float(-res.fun)
    return best, best_p


def sigma_from_log_pvalue(log_p: float) -> float:
    """One-sided Gaussian equivalent, floored at 0."""
    if log_p >= math.log(0.5):
        return 0.0
    if log_p == -math.inf:
        return math.inf
    return float(-ndtri_exp(log_p))


def significance_at(q_obs: float, N_A: int, N_B: int, kind: str) -> float:
    if q_obs <= 0:
        return 0.0
    log_p, _ = max_log_pvalue(q_obs, N_A, N_B, kind)
    return sigma_from_log_pvalue(log_p)


def significance(k_A: int, N_A: int, k_B: int, N_B: int, kind: str) -> float:
    if not (0 <= k_A <= N_A and 0 <= k_B <= N_B) or N_A == 0 or N_B == 0:
        raise ValueError("need 0 <= k <= N and N > 0 for both branches")
    return significance_at(quantumness(k_A / N_A, k_B / N_B, kind), N_A, N_B, kind)


def contour_q_for_sigma(N_A: int, N_B: int, sigma: float, kind: str, tol: float = 1e-4) -> float | None:
    """Smallest q' whose significance reaches ``sigma``; ``None`` if unreachable.

    The largest attainable quantumness is 1 (every shot accepted).
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if significance_at(1.0, N_A, N_B, kind) < sigma:
        return None
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = (lo + hi) / 2
        if significance_at(mid, N_A, N_B, kind) >= sigma:
            hi = mid
        else:
            lo = mid
    return hi


def relative_performance(p_exp: float, p_ideal: float, p_guess: float) -> float:
    if math.isclose(p_ideal, p_guess):
        raise ValueError("p_ideal and p_guess coincide")
    return (p_exp - p_guess) / (p_ideal - p_guess)


def branch_constants(kind: str, branch: str, domain_size: int | None = None) -> tuple[float, float]:
    """``(p_ideal, p_guess)`` used for R.

    Branch A guesses a uniformly random domain point, which hits one of the
    two preimages with probability ``2 / domain_size``.
    """
    if branch == "A":
        if not domain_size:
            raise ValueError("branch A needs the domain size")
        return 1.0, 2 / domain_size
    if kind == "lwe":
        return 1.0, 0.5
    return BELL_P_IDEAL, 0.5


def aggregate_pB_over_r(per_r: dict[str, Sequence[int]] | Iterable[Sequence[int]]) -> tuple[float, int]:
    """Uniform average of per-r pass rates and the fewest-shots effective N_B."""
    pairs = list(per_r.values()) if isinstance(per_r, dict) else list(per_r)
    if not pairs:
        raise ValueError("need at least one r value")
    if any(n <= 0 for n, _ in pairs):
        raise ValueError("every r value needs at least one shot")
    p_B = sum(k / n for n, k in pairs) / len(pairs)
    return p_B, min(n for n, _ in pairs) * len(pairs)


@dataclass
class QuantumnessResult:
    kind: str
    p_A: float
    p_B: float
    N_A: int
    N_B: int
    q: float
    sigma: float

    def to_json(self) -> dict:
        return asdict(self)


def analyze_tally(tally, kind: str) -> QuantumnessResult:
    """Score a tally; factoring B uses the per-r fewest-shots normalization."""
    if tally.N_A == 0 or tally.N_B == 0:
        raise ValueError("both branches need kept shots")
    p_A = tally.k_A / tally.N_A
    if kind == "factoring" and tally.per_r:
        p_B, N_B = aggregate_pB_over_r(tally.per_r)
    else:
        p_B, N_B = tally.k_B / tally.N_B, tally.N_B
    q = quantumness(p_A, p_B, kind)
    k_A, k_B = tally.k_A, round(p_B * N_B)
    sigma = significance(k_A, tally.N_A, k_B, N_B, kind) if q > 0 else 0.0
    return QuantumnessResult(kind, p_A, p_B, tally.N_A, N_B, q, sigma)


REPORT_COLUMNS = ("instance", "mode", "branch", "p", "N", "q", "sigma", "R")


def report_rows(instance: str, mode: str, result: QuantumnessResult, domain_size: int) -> list[dict]:
    rows = []
    for branch, p, n in (("A", result.p_A, result.N_A), ("B", result.p_B, result.N_B)):
        p_ideal, p_guess = branch_constants(result.kind, branch, domain_size)
        rows.append({
            "instance": instance,
            "mode": mode,
            "branch": branch,
            "p": p,
            "N": n,
            "q": result.q,
            "sigma": result.sigma,
            "R": relative_performance(p, p_ideal, p_guess),
            "p_ideal": p_ideal,
            "p_guess": p_guess,
        })
    return rows


def rows_to_csv(rows: Iterable[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=REPORT_COLUMNS, extrasaction="ignore", lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    return buf.getvalue()


def rows_to_json(rows: Iterable[dict]) -> str:
    return json.dumps(list(rows), indent=2, sort_keys=True)
