"""Frontier sweep: endpoints, a geometric CRB-threshold grid, per-threshold
solves and benchmark curves matched to the same grid."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .benchmarks import (
    NotApplicableError,
    best_at_crb,
    power_split_ep,
    power_split_sem,
    time_switching,
)
from .closed_form import crb_min_point, rate_max_point
from .metrics import CRPoint
from .scenario import ChannelMatrix, Scenario
from .solver import SolveReport, SolverSettings, solve_p1

__all__ = ["DEFAULT_SCHEMES", "SweepRow", "SweepResult", "sweep"]

DEFAULT_SCHEMES = ("optimal", "ep", "sem", "time_switch")

# When the rate-maximizing covariance is rank deficient the frontier has no
# finite right endpoint; the grid is then capped at this multiple of the
# minimum CRB (display convention, flagged by SweepResult.capped).
AUTO_CAP_FACTOR = 100.0


@dataclass
class SweepRow:
    scheme: str
    gamma_target: float
    crb: float
    rate: float
    mu: float = math.nan
    v: float = math.nan
    iterations: int = 0
    kkt_residual: float = math.nan
    status: str = "ok"


@dataclass
class SweepResult:
    rows: list[SweepRow]
    gammas: np.ndarray
    crb_min: float
    crb_cap: float
    capped: bool
    endpoint_min: CRPoint
    endpoint_max: CRPoint
    reports: list[SolveReport | None] = field(default_factory=list)

    def points(self, scheme: str) -> list[CRPoint]:
        """Finite rows of one scheme as CRPoints, grid order."""
        return [
            CRPoint(crb=row.crb, rate=row.rate, gamma_target=row.gamma_target,
                    scheme=row.scheme)
            for row in self.rows
            if row.scheme == scheme and math.isfinite(row.rate)
        ]


def _solve_row(H, scenario, gamma, settings) -> tuple[SweepRow, SolveReport | None]:
    try:
        rep = solve_p1(H, scenario, gamma, settings)
    except Exception as exc:  # annotate, never abort the sweep
        return SweepRow("optimal", gamma, math.nan, math.nan,
                        status=f"error: {exc}"), None
    if rep.allocation is None:
        return SweepRow("optimal", gamma, math.nan, math.nan, status=rep.status), rep
    a = rep.allocation
    return SweepRow("optimal", gamma, rep.achieved.crb, rep.achieved.rate,
                    mu=a.mu, v=a.v, iterations=a.iterations,
                    kkt_residual=a.kkt_residual, status=rep.status), rep


def sweep(H: ChannelMatrix, scenario: Scenario, n_points: int,
          crb_cap: float | str = "auto",
          schemes=DEFAULT_SCHEMES,
          settings: SolverSettings | None = None,
          workers: int = 1) -> SweepResult:
    """Trace the frontier and benchmark curves over a geometric CRB grid.

    The grid runs from the minimum CRB to the rate-maximization endpoint
    when that is finite, else to ``crb_cap`` (``"auto"`` = 100x the minimum).
    Benchmark rows report, for each grid threshold, the best sweep point
    whose CRB fits under it.  Per-threshold solves may run on ``workers``
    threads; results are reassembled in grid order.
    """
    if n_points < 2:
        raise ValueError("need at least two grid points")
    _, pt_min = crb_min_point(H, scenario)
    _, pt_max = rate_max_point(H, scenario)
    lo = pt_min.crb
    capped = not math.isfinite(pt_max.crb)
    if capped:
        hi = AUTO_CAP_FACTOR * lo if crb_cap == "auto" else float(crb_cap)
    else:
        hi = pt_max.crb if crb_cap == "auto" else min(pt_max.crb, float(crb_cap))
    hi = max(hi, lo)
    if hi > lo:
        gammas = np.geomspace(lo, hi, n_points)
    else:
        gammas = np.full(n_points, lo)

    rows: list[SweepRow] = []
    reports: list[SolveReport | None] = []
    if "optimal" in schemes:
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                solved = list(pool.map(
                    lambda g: _solve_row(H, scenario, g, settings), gammas))
        else:
            solved = [_solve_row(H, scenario, g, settings) for g in gammas]
        for row, rep in solved:
            rows.append(row)
            reports.append(rep)

    for scheme, maker in (("ep", power_split_ep), ("sem", power_split_sem)):
        if scheme not in schemes:
            continue
        bench = maker(H, scenario)
        for g in gammas:
            pt = best_at_crb(bench.points, g)
            if pt is None:
                rows.append(SweepRow(scheme, g, math.nan, math.nan,
                                     status="no_feasible_point"))
            else:
                rows.append(SweepRow(scheme, g, pt.crb, pt.rate))

    if "time_switch" in schemes:
        if capped:
            for g in gammas:
                rows.append(SweepRow("time_switch", g, math.nan, math.nan,
                                     status="not_applicable"))
        else:
            span = pt_max.crb - pt_min.crb
            taus = [0.0 if span == 0.0 else min(1.0, max(0.0, (g - pt_min.crb) / span))
                    for g in gammas]
            pts = time_switching(pt_max, pt_min, taus)
            for g, pt in zip(gammas, pts):
                rows.append(SweepRow("time_switch", g, pt.crb, pt.rate))

    return SweepResult(rows=rows, gammas=gammas, crb_min=lo, crb_cap=hi,
                       capped=capped, endpoint_min=pt_min, endpoint_max=pt_max,
                       reports=reports)
