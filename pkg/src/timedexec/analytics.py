"""Schedule success rate: closed form, Monte Carlo estimate and grid sweeps.

A schedule with parameters ``(l, m, n)`` survives as long as at least ``m`` of
its ``n`` shares reach the execution half.  A share is lost when any of the
``l`` trustees on its path misbehaves, so with independent per-trustee
probability ``p_IM`` the per-share loss probability is ``P = 1 - (1 - p_IM)**l``
and the number of lost shares is Binomial(n, P).
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

__all__ = [
    "SRParams",
    "MonteCarloResult",
    "SweepRow",
    "share_loss_prob",
    "schedule_success_rate",
    "monte_carlo_sr",
    "sweep",
    "standard_grid",
    "monotonicity_violations",
    "rows_to_csv",
    "CSV_COLUMNS",
]

CSV_COLUMNS = ("l", "m", "n", "p_IM", "SR_analytic", "SR_mc", "stderr", "runs", "seed")


@dataclass(frozen=True)
class SRParams:
    l: int
    m: int
    n: int
    p_im: float

    def __post_init__(self) -> None:
        for name in ("l", "m", "n"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool):
                raise ValueError(f"{name} must be an integer")
        if self.l < 2:
            raise ValueError(f"l must be at least 2 (l={self.l})")
        if not 1 <= self.m <= self.n:
            raise ValueError(f"need 1 <= m <= n (m={self.m}, n={self.n})")
        if not 0.0 <= self.p_im <= 1.0:
            raise ValueError(f"p_IM must lie in [0, 1] (got {self.p_im})")

    @property
    def share_loss(self) -> float:
        return share_loss_prob(self.p_im, self.l)

    @property
    def success_rate(self) -> float:
        return schedule_success_rate(self)


def share_loss_prob(p_im: float, l: int) -> float:
    """P = 1 - (1 - p_IM)^l."""
    if not 0.0 <= p_im <= 1.0:
        raise ValueError(f"p_IM must lie in [0, 1] (got {p_im})")
    if l < 1:
        raise ValueError("l must be positive")
    # -expm1(l*log1p(-p)) keeps precision for tiny p_IM
    if p_im == 1.0:
        return 1.0
    return -math.expm1(l * math.log1p(-p_im))


def schedule_success_rate(params: SRParams) -> float:
    """1 - P[at least n-m+1 shares lost], summed smallest terms first."""
    p = share_loss_prob(params.p_im, params.l)
    n, m = params.n, params.m
    if p == 0.0:
        return 1.0
    if p == 1.0:
        return 0.0
    terms = sorted(math.comb(n, i) * p**i * (1.0 - p) ** (n - i) for i in range(n - m + 1, n + 1))
    return 1.0 - math.fsum(terms)


@dataclass(frozen=True)
class MonteCarloResult:
    estimate: float
    stderr: float
    runs: int
    successes: int
    seed: int

    def z_score(self, reference: float) -> float:
        """Distance from ``reference`` in standard errors (inf when stderr is 0 and they differ)."""
        delta = abs(self.estimate - reference)
        if self.stderr == 0.0:
            return 0.0 if delta == 0.0 else math.inf
        return delta / self.stderr


def _scenario_config(params: SRParams, seed: int):
    from .config import ScenarioConfig

    return ScenarioConfig(l=params.l, m=params.m, n=params.n, p_im=params.p_im, seed=seed)


def _count_successes(args: tuple[SRParams, int, int]) -> int:
    from .adversary import run_scenario

    params, start, stop = args
    return sum(run_scenario(_scenario_config(params, s)).executed for s in range(start, stop))


def monte_carlo_sr(params: SRParams, runs: int, seed: int = 0, workers: int = 1) -> MonteCarloResult:
    """Fraction of full simulated schedules that execute, seeds ``seed .. seed+runs-1``.

    Every trustee carries the inadvertent policy at ``params.p_im``; nothing
    else misbehaves.  ``workers > 1`` splits the seed range across processes;
    the result does not depend on the split.
    """
    if runs < 1:
        raise ValueError("runs must be at least 1")
    workers = max(1, min(workers, runs))
    if workers == 1:
        successes = _count_successes((params, seed, seed + runs))
    else:
        bounds = [seed + runs * k // workers for k in range(workers + 1)]
        chunks = [(params, bounds[k], bounds[k + 1]) for k in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            successes = sum(pool.map(_count_successes, chunks))
    estimate = successes / runs
    stderr = math.sqrt(estimate * (1.0 - estimate) / runs)
    return MonteCarloResult(estimate, stderr, runs, successes, seed)


@dataclass(frozen=True)
class SweepRow:
    params: SRParams
    sr_analytic: float
    mc: MonteCarloResult | None = None

    def as_tuple(self) -> tuple:
        p = self.params
        if self.mc is None:
            return (p.l, p.m, p.n, p.p_im, self.sr_analytic, "", "", 0, "")
        return (p.l, p.m, p.n, p.p_im, self.sr_analytic, self.mc.estimate, self.mc.stderr, self.mc.runs, self.mc.seed)


def _coerce(cell) -> SRParams:
    if isinstance(cell, SRParams):
        return cell
    return SRParams(*cell)


def sweep(grid: Iterable, mc_runs: int = 0, seed: int = 0, workers: int = 1) -> list[SweepRow]:
    """Analytic SR for every cell, plus a Monte Carlo estimate when ``mc_runs > 0``."""
    cells = [_coerce(c) for c in grid]
    if not cells:
        raise ValueError("sweep grid is empty")
    rows = []
    for cell in cells:
        mc = monte_carlo_sr(cell, mc_runs, seed, workers) if mc_runs > 0 else None
        rows.append(SweepRow(cell, schedule_success_rate(cell), mc))
    return rows


def standard_grid(n_values: Sequence[int] = (5, 10), l_values: Sequence[int] = (3, 4, 5), p_im: float = 0.05) -> list[SRParams]:
    """Panels per n, curves per l, m on the x-axis."""
    return [SRParams(l, m, n, p_im) for n in n_values for l in l_values for m in range(1, n + 1)]


def monotonicity_violations(rows: Sequence[SweepRow], tol: float = 0.0) -> list[str]:
    """Adjacent grid pairs where SR rises with m, rises with l, or falls with n."""
    table = {(r.params.l, r.params.m, r.params.n, r.params.p_im): r.sr_analytic for r in rows}
    problems = []
    for (l, m, n, p), sr in sorted(table.items()):
        nxt = table.get((l, m + 1, n, p))
        if nxt is not None and nxt > sr + tol:
            problems.append(f"SR increases with m at l={l}, n={n}: m={m} -> {m + 1}")
        nxt = table.get((l + 1, m, n, p))
        if nxt is not None and nxt > sr + tol:
            problems.append(f"SR increases with l at m={m}, n={n}: l={l} -> {l + 1}")
        larger = [k for k in table if k[0] == l and k[1] == m and k[3] == p and k[2] > n]
        if larger:
            n_next = min(k[2] for k in larger)
            if table[(l, m, n_next, p)] < sr - tol:
                problems.append(f"SR decreases with n at l={l}, m={m}: n={n} -> {n_next}")
    return problems


def rows_to_csv(rows: Sequence[SweepRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow([repr(v) if isinstance(v, float) else v for v in row.as_tuple()])
    return buf.getvalue()
