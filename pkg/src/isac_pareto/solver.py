"""CRB-constrained rate maximization.

The problem is diagonalized by the channel SVD, reduced to a power
allocation over communication and dedicated sensing subchannels, and solved
through its Lagrange dual: a 2-D ellipsoid (cutting-plane) search over the
multipliers (mu, v), with per-subchannel stationary points from the real
roots of a cubic, and a final Newton polish of the two tight constraints.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .closed_form import PowerAllocation, waterfill
from .metrics import (
    LN2,
    CRPoint,
    TransmitCovariance,
    assemble_covariance,
    crb_trace,
    rate,
    trace_budget,
    crb_from_trace_budget,
)
from .scenario import ChannelMatrix, Scenario

__all__ = [
    "InactiveChannelError",
    "SolverSettings",
    "SolveReport",
    "feasibility_check",
    "cubic_real_roots",
    "cubic_stationary_root",
    "stationarity_residual",
    "sensing_power",
    "inner_allocation",
    "dual_subgradient",
    "default_dual_bound",
    "assemble_covariance",
    "solve_p1",
]

INV_LN2 = 1.0 / LN2


class InactiveChannelError(ValueError):
    """The stationarity equation has no positive root: with a zero CRB
    multiplier the water level sits below this channel's noise floor."""


@dataclass
class SolverSettings:
    kkt_tol: float = 1e-9
    max_ellipsoid_iters: int = 2000
    dual_box_initial: float | None = None
    rank_tol: float = 1e-9

    def __post_init__(self) -> None:
        if self.kkt_tol <= 0 or self.rank_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_ellipsoid_iters < 1:
            raise ValueError("iteration budget must be positive")
        if self.dual_box_initial is not None and self.dual_box_initial <= 0:
            raise ValueError("dual search bound must be positive")


@dataclass
class SolveReport:
    """Outcome of one CRB-constrained solve.

    ``status`` is one of ``optimal``, ``infeasible`` or ``iteration_limit``.
    On non-optimal statuses the remaining fields carry the best effort
    iterate (or ``None`` when infeasible).
    """

    allocation: PowerAllocation | None
    Q: TransmitCovariance | None
    achieved: CRPoint | None
    status: str
    gamma_tilde: float = math.nan


def feasibility_check(m: int, P: float, gamma_tilde: float, rtol: float = 1e-12) -> bool:
    """True iff the trace-inverse budget is achievable: gamma_tilde >= M^2/P.

    The minimum of sum 1/p_i under sum p_i <= P is M^2/P, attained by the
    equal allocation, so anything below that is infeasible.  A hair of
    relative tolerance absorbs round-trip conversion error.
    """
    if m < 1 or P <= 0.0:
        raise ValueError("need m >= 1 and P > 0")
    return gamma_tilde >= (m * m / P) * (1.0 - rtol)


def sensing_power(mu: float, v: float) -> float:
    """Stationary power of a dedicated sensing subchannel: sqrt(mu / v)."""
    if mu < 0 or v <= 0:
        raise ValueError("need mu >= 0 and v > 0")
    return math.sqrt(mu / v)


def stationarity_residual(p: float, lambda2_over_sigma2: float, mu: float, v: float) -> float:
    """Derivative of the per-channel Lagrangian at power p (zero at optimum)."""
    g = lambda2_over_sigma2
    res = INV_LN2 * g / (1.0 + g * p) - v
    if mu != 0.0:
        res += mu / (p * p)
    return res


def _cbrt(x: float) -> float:
    return math.copysign(abs(x) ** (1.0 / 3.0), x)


def cubic_real_roots(a: float, b: float, c: float, d: float) -> tuple[float, ...]:
    """All real roots of a x^3 + b x^2 + c x + d = 0 (a != 0).

    Radical (Cardano) branch for a positive discriminant, trigonometric
    branch when all three roots are real.
    """
    if a == 0.0:
        raise ValueError("leading coefficient must be non-zero")
    B = b / a
    C = c / a
    D = d / a
    p = C - B * B / 3.0
    q = D - B * C / 3.0 + 2.0 * B ** 3 / 27.0
    shift = -B / 3.0
    if p == 0.0:
        return (shift + _cbrt(-q),)
    disc = q * q / 4.0 + p ** 3 / 27.0
    if disc > 0.0:
        s = math.sqrt(disc)
        return (shift + _cbrt(-q / 2.0 + s) + _cbrt(-q / 2.0 - s),)
    if disc == 0.0:
        u = _cbrt(-q / 2.0)
        return (shift + 2.0 * u, shift - u)
    rho = 2.0 * math.sqrt(-p / 3.0)
    arg = 3.0 * q / (p * rho)
    arg = min(1.0, max(-1.0, arg))
    phi = math.acos(arg) / 3.0
    return tuple(
        shift + rho * math.cos(phi - 2.0 * math.pi * k / 3.0) for k in range(3)
    )


def _bisect_stationary(g: float, mu: float, v: float) -> float:
    # f(p) is strictly decreasing on p > 0 with f(0+) = +inf for mu > 0.
    hi = (INV_LN2 + math.sqrt(INV_LN2 * INV_LN2 + 4.0 * mu * v)) / (2.0 * v)
    for _ in range(60):
        if stationarity_residual(hi, g, mu, v) < 0.0:
            break
        hi *= 2.0
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if stationarity_residual(mid, g, mu, v) > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def cubic_stationary_root(lambda2_over_sigma2: float, mu: float, v: float) -> float:
    """Unique positive power solving the per-subchannel stationarity equation.

    For mu = 0 this degenerates to the water-filling form
    1/(v ln 2) - sigma_c2/lambda^2 and raises :class:`InactiveChannelError`
    when that is non-positive.  For mu > 0 the equation is cleared to the
    cubic  v p^3 + (v/g - 1/ln2) p^2 - mu p - mu/g = 0  with g the
    noise-normalized channel gain; the unique positive real root is selected
    and polished by a couple of Newton steps.
    """
    g = lambda2_over_sigma2
    if g <= 0.0:
        raise ValueError(f"channel gain must be positive, got {g}")
    if v <= 0.0:
        raise ValueError(f"power multiplier must be positive, got {v}")
    if mu < 0.0:
        raise ValueError(f"CRB multiplier must be non-negative, got {mu}")
    if mu == 0.0:
        x = INV_LN2 / v - 1.0 / g
        if x <= 0.0:
            raise InactiveChannelError(
                f"water level {INV_LN2 / v} below noise floor {1.0 / g}"
            )
        return x
    best = None
    best_res = math.inf
    for x in cubic_real_roots(v, v / g - INV_LN2, -mu, -mu / g):
        if x > 0.0:
            r = abs(stationarity_residual(x, g, mu, v))
            if r < best_res:
                best, best_res = x, r
    if best is None:
        best = _bisect_stationary(g, mu, v)
        best_res = abs(stationarity_residual(best, g, mu, v))
    x, fx = best, best_res
    for _ in range(8):
        if fx <= 1e-15 * max(1.0, v):
            break
        f = stationarity_residual(x, g, mu, v)
        gx = g * x
        fp = -INV_LN2 * g * g / ((1.0 + gx) * (1.0 + gx)) - 2.0 * mu / (x * x * x)
        y = x - f / fp
        if y <= 0.0:
            y = 0.5 * x
        fy = abs(stationarity_residual(y, g, mu, v))
        if fy >= fx:
            break
        x, fx = y, fy
    return x


def _inner_powers(gs: list[float], m: int, mu: float, v: float) -> list[float]:
    # Lagrangian maximizer at (mu, v); plain floats on the hot path.
    p = [0.0] * m
    for i, g in enumerate(gs):
        if mu > 0.0:
            p[i] = cubic_stationary_root(g, mu, v)
        else:
            x = INV_LN2 / v - 1.0 / g
            p[i] = x if x > 0.0 else 0.0
    r = len(gs)
    if m > r:
        ps = math.sqrt(mu / v)
        for i in range(r, m):
            p[i] = ps
    return p


def inner_allocation(lambdas2, m: int, sigma_c2: float, mu: float, v: float) -> np.ndarray:
    """Maximizer of the Lagrangian at multipliers (mu, v), length m.

    Communication subchannels solve the cubic stationarity equation; the
    m - r dedicated sensing subchannels all take sqrt(mu/v).  With mu = 0
    (only allowed for a full-rank channel) this is exactly water-filling at
    level 1/(v ln 2), including dry channels at zero.
    """
    lam2 = np.asarray(lambdas2, dtype=float)
    if v <= 0.0:
        raise ValueError("power multiplier must be positive")
    if lam2.size < m and mu <= 0.0:
        raise ValueError("rank-deficient channels need a positive CRB multiplier")
    gs = [float(x) / sigma_c2 for x in lam2]
    return np.asarray(_inner_powers(gs, m, mu, v))


def dual_subgradient(p, gamma_tilde: float, P: float) -> tuple[float, float]:
    """Subgradient of the dual function at the maximizer ``p``:
    (-(sum 1/p - gamma_tilde), -(sum p - P))."""
    pw = np.asarray(p, dtype=float)
    if np.any(pw <= 0.0):
        raise ValueError("all powers must be positive")
    return (
        -(float((1.0 / pw).sum()) - gamma_tilde),
        -(float(pw.sum()) - P),
    )


def default_dual_bound(lambdas2, sigma_c2: float, P: float, gamma_tilde: float) -> float:
    """Initial edge length of the dual search box over (mu, v).

    Heuristic; the searches double it and restart whenever the incumbent
    lands on the boundary, so it only needs to be in the right ballpark.
    """
    g_max = float(np.max(np.asarray(lambdas2, dtype=float))) / sigma_c2
    return 10.0 * (INV_LN2 * g_max + P * gamma_tilde)


def _dual_value(gs, p, mu, v, gamma_tilde, P):
    R = 0.0
    S = 0.0
    for g, x in zip(gs, p):
        R += math.log1p(g * x)
    R *= INV_LN2
    for x in p:
        S += x
    if mu > 0.0:
        cinv = 0.0
        for x in p:
            if x <= 0.0:
                return math.inf
            cinv += 1.0 / x
        return R - mu * (cinv - gamma_tilde) - v * (S - P)
    return R - v * (S - P)


def _newton_polish(gs, m, gamma_tilde, P, mu, v, max_iter=40):
    """Newton iteration on the two tight constraints (sum 1/p, sum p).

    The powers are an implicit smooth function of (mu, v) through the
    stationarity equations; positivity is preserved by backtracking.
    Returns (mu, v, converged).
    """
    r = len(gs)
    k_sense = m - r
    c_scale = max(1.0, gamma_tilde)
    p_scale = max(1.0, P)

    def residuals(mu_, v_):
        p_ = _inner_powers(gs, m, mu_, v_)
        f1 = sum(1.0 / x for x in p_) - gamma_tilde
        f2 = sum(p_) - P
        return p_, f1, f2

    try:
        p, f1, f2 = residuals(mu, v)
    except (InactiveChannelError, ValueError, ZeroDivisionError, OverflowError):
        return mu, v, False
    norm = max(abs(f1) / c_scale, abs(f2) / p_scale)
    for _ in range(max_iter):
        if norm <= 1e-13:
            return mu, v, True
        dc_dmu = dc_dv = ds_dmu = ds_dv = 0.0
        for g, x in zip(gs, p):
            gx = g * x
            fp = -INV_LN2 * g * g / ((1.0 + gx) * (1.0 + gx)) - 2.0 * mu / (x * x * x)
            dp_dmu = -(1.0 / (x * x)) / fp
            dp_dv = 1.0 / fp
            inv2 = 1.0 / (x * x)
            dc_dmu -= dp_dmu * inv2
            dc_dv -= dp_dv * inv2
            ds_dmu += dp_dmu
            ds_dv += dp_dv
        if k_sense:
            ps = math.sqrt(mu / v)
            dps_dmu = 0.5 / math.sqrt(mu * v)
            dps_dv = -0.5 * ps / v
            inv2 = 1.0 / (ps * ps)
            dc_dmu -= k_sense * dps_dmu * inv2
            dc_dv -= k_sense * dps_dv * inv2
            ds_dmu += k_sense * dps_dmu
            ds_dv += k_sense * dps_dv
        det = dc_dmu * ds_dv - dc_dv * ds_dmu
        if det == 0.0 or not math.isfinite(det):
            return mu, v, False
        dmu = (-f1 * ds_dv + dc_dv * f2) / det
        dv = (-dc_dmu * f2 + ds_dmu * f1) / det
        step = 1.0
        improved = False
        for _ in range(50):
            nmu, nv = mu + step * dmu, v + step * dv
            if nmu > 0.0 and nv > 0.0:
                try:
                    np_, nf1, nf2 = residuals(nmu, nv)
                except (InactiveChannelError, ValueError, ZeroDivisionError, OverflowError):
                    step *= 0.5
                    continue
                nnorm = max(abs(nf1) / c_scale, abs(nf2) / p_scale)
                if nnorm < norm:
                    mu, v, p, f1, f2, norm = nmu, nv, np_, nf1, nf2, nnorm
                    improved = True
                    break
            step *= 0.5
        if not improved:
            return mu, v, norm <= 1e-13
    return mu, v, norm <= 1e-13


@dataclass
class _DualResult:
    mu: float
    v: float
    iterations: int
    converged: bool
    hit_edge: bool = False


def _ellipsoid_once(gs, m, gamma_tilde, P, box, budget) -> _DualResult:
    """One ellipsoid run over the quadrant, starting from a ball that covers
    the box [0, box]^2.  Feasibility cuts push the center back to mu, v > 0;
    objective cuts use the dual subgradient.  Every few iterations the best
    iterate is handed to the Newton polish; success ends the run."""
    need_mu_pos = len(gs) < m
    cx = cy = 0.5 * box
    radius = 0.75 * box
    a11 = a22 = radius * radius
    a12 = 0.0
    best = None
    best_g = math.inf
    polish_every = 10
    k_used = 0
    collapsed = False
    for k in range(budget):
        k_used = k + 1
        mu, v = cx, cy
        if mu < 0.0 or (need_mu_pos and mu <= 0.0):
            g1, g2 = -1.0, 0.0
        elif v <= 0.0:
            g1, g2 = 0.0, -1.0
        else:
            p = _inner_powers(gs, m, mu, v)
            ssum = sum(p)
            cinv = 0.0
            for x in p:
                if x <= 0.0:
                    cinv = math.inf
                    break
                cinv += 1.0 / x
            if math.isinf(cinv):
                g1, g2 = -1.0, 0.0
            else:
                gval = _dual_value(gs, p, mu, v, gamma_tilde, P)
                if gval < best_g:
                    best_g, best = gval, (mu, v)
                g1 = gamma_tilde - cinv
                g2 = P - ssum
        if best is not None and k_used % polish_every == 0:
            pm, pv, ok = _newton_polish(gs, m, gamma_tilde, P, best[0], best[1])
            if ok:
                return _DualResult(pm, pv, k_used, True)
        a_g1 = a11 * g1 + a12 * g2
        a_g2 = a12 * g1 + a22 * g2
        denom2 = g1 * a_g1 + g2 * a_g2
        if not (denom2 > 0.0) or not math.isfinite(denom2):
            collapsed = True
            break
        den = math.sqrt(denom2)
        bx, by = a_g1 / den, a_g2 / den
        cx -= bx / 3.0
        cy -= by / 3.0
        a11 = (4.0 / 3.0) * (a11 - (2.0 / 3.0) * bx * bx)
        a12 = (4.0 / 3.0) * (a12 - (2.0 / 3.0) * bx * by)
        a22 = (4.0 / 3.0) * (a22 - (2.0 / 3.0) * by * by)
    if best is not None:
        # a collapsed ellipsoid has pinpointed the dual pair; an exhausted
        # budget has not, and must never be reported as converged
        if collapsed:
            pm, pv, ok = _newton_polish(gs, m, gamma_tilde, P, best[0], best[1])
            if ok:
                return _DualResult(pm, pv, k_used, True)
        hit = best[0] >= 0.8 * box or best[1] >= 0.8 * box
        return _DualResult(best[0], best[1], k_used, False, hit_edge=hit)
    return _DualResult(0.5 * box, 0.5 * box, k_used, False, hit_edge=True)


def _solve_dual(gs, m, gamma_tilde, P, settings: SolverSettings) -> _DualResult:
    box = settings.dual_box_initial
    if box is None:
        box = 10.0 * (INV_LN2 * max(gs) + P * gamma_tilde)
    used = 0
    last = None
    while used < settings.max_ellipsoid_iters:
        res = _ellipsoid_once(gs, m, gamma_tilde, P, box, settings.max_ellipsoid_iters - used)
        used += res.iterations
        res.iterations = used
        if res.converged:
            return res
        last = res
        if res.hit_edge:
            box *= 4.0
            continue
        break
    if last is None:
        last = _DualResult(math.nan, math.nan, used, False)
    last.iterations = used
    return last


def _certify(gs, m, p, mu, v, gamma_tilde, P, kkt_tol):
    """KKT certificate for a candidate (p, mu, v).

    Returns (ok, residual, relative_duality_gap).  The residual is the worst
    over stationarity, the sensing-power law, primal feasibility overshoot
    and complementary slackness.
    """
    r = len(gs)
    stat = 0.0
    for g, x in zip(gs, p[:r]):
        if x > 0.0:
            stat = max(stat, abs(stationarity_residual(x, g, mu, v)))
        else:
            # a dry channel is only consistent with mu = 0 and a water level
            # below its floor
            stat = max(stat, mu, max(0.0, INV_LN2 * g - v))
    sens = 0.0
    if m > r:
        ps = math.sqrt(mu / v) if (mu >= 0.0 and v > 0.0) else math.inf
        sens = max(abs(x - ps) for x in p[r:])
    ssum = float(sum(p))
    cinv = sum(1.0 / x for x in p) if all(x > 0.0 for x in p) else math.inf
    over_p = max(0.0, ssum - P)
    over_c = max(0.0, cinv - gamma_tilde) if math.isfinite(cinv) else math.inf
    comp_c = mu * abs(cinv - gamma_tilde) if math.isfinite(cinv) else math.inf
    comp_p = v * abs(ssum - P)
    gval = _dual_value(gs, p, mu, v, gamma_tilde, P)
    rate_val = INV_LN2 * sum(math.log1p(g * x) for g, x in zip(gs, p))
    gap_rel = abs(gval - rate_val) / max(1.0, abs(rate_val))
    slack_scale = kkt_tol * max(1.0, gamma_tilde, P)
    residual = max(stat, sens, over_p, over_c, comp_c, comp_p)
    ok = (
        stat <= kkt_tol
        and sens <= kkt_tol
        and over_p <= kkt_tol * max(1.0, P)
        and over_c <= kkt_tol * max(1.0, gamma_tilde)
        and comp_c <= slack_scale
        and comp_p <= slack_scale
        and gap_rel <= 1e-8
    )
    return ok, residual, gap_rel


def solve_p1(
    H: ChannelMatrix,
    scenario: Scenario,
    gamma: float | None = None,
    settings: SolverSettings | None = None,
    *,
    gamma_tilde: float | None = None,
) -> SolveReport:
    """Maximize the rate subject to CRB(Q) <= gamma and tr(Q) <= P.

    Exactly one of ``gamma`` (a CRB threshold) or ``gamma_tilde`` (the
    equivalent budget on tr(Q^-1)) must be given.

    Solution path:

    * infeasible budget -> status ``infeasible``;
    * budget exactly at the minimum M^2/P -> the unique feasible point, the
      equal allocation (the dual is degenerate there, so no multipliers are
      reported);
    * full-rank channel whose water-filling already satisfies the CRB
      budget -> water-filling with a zero CRB multiplier;
    * otherwise both constraints are tight and the dual pair is found by the
      ellipsoid search plus Newton polish, then certified against the KKT
      conditions.  ``optimal`` is only reported with a passing certificate.
    """
    if settings is None:
        settings = SolverSettings()
    if (gamma is None) == (gamma_tilde is None):
        raise ValueError("give exactly one of gamma or gamma_tilde")
    m, P, s2 = scenario.M, scenario.P, scenario.sigma_c2
    if H.shape != (scenario.Nc, scenario.M):
        raise ValueError(f"channel shape {H.shape} does not match scenario")
    if gamma_tilde is None:
        gamma_tilde = trace_budget(gamma, scenario.sigma_s2, scenario.Ns, scenario.L)
    else:
        gamma = crb_from_trace_budget(gamma_tilde, scenario.sigma_s2, scenario.Ns, scenario.L)

    lam = H.lambdas
    top = float(lam[0]) if lam.size else 0.0
    r = int(np.count_nonzero(lam > settings.rank_tol * top)) if top > 0.0 else 0
    lam2 = lam[:r] ** 2
    gs = [float(x) / s2 for x in lam2]

    if not feasibility_check(m, P, gamma_tilde):
        return SolveReport(None, None, None, "infeasible", gamma_tilde=gamma_tilde)

    min_trace_inv = m * m / P
    if gamma_tilde <= min_trace_inv * (1.0 + 1e-12):
        # unique feasible point; optimal by the AM-HM equality condition
        p = np.full(m, P / m)
        alloc = PowerAllocation(p=p, mu=math.nan, v=math.nan, iterations=0,
                                kkt_residual=0.0, duality_gap=0.0)
        return _finish(alloc, H, scenario, gamma, gamma_tilde, "optimal")

    if r == m:
        wf = waterfill(lam2, s2, P, m=m)
        if np.all(wf.p > 0.0):
            trace_inv = float((1.0 / wf.p).sum())
            if trace_inv <= gamma_tilde * (1.0 + 4e-12):
                ok, res, gap = _certify(gs, m, list(wf.p), 0.0, wf.v, gamma_tilde, P,
                                        settings.kkt_tol)
                alloc = PowerAllocation(p=wf.p, mu=0.0, v=wf.v,
                                        water_level=wf.water_level, iterations=0,
                                        kkt_residual=res, duality_gap=gap)
                return _finish(alloc, H, scenario, gamma, gamma_tilde,
                               "optimal" if ok else "iteration_limit")

    dual = _solve_dual(gs, m, gamma_tilde, P, settings)
    if not (dual.mu > 0.0 and dual.v > 0.0):
        return SolveReport(None, None, None, "iteration_limit", gamma_tilde=gamma_tilde)
    p = np.asarray(_inner_powers(gs, m, dual.mu, dual.v))
    ok, res, gap = _certify(gs, m, list(p), dual.mu, dual.v, gamma_tilde, P, settings.kkt_tol)
    status = "optimal" if (dual.converged and ok) else "iteration_limit"
    alloc = PowerAllocation(p=p, mu=dual.mu, v=dual.v, iterations=dual.iterations,
                            kkt_residual=res, duality_gap=gap)
    return _finish(alloc, H, scenario, gamma, gamma_tilde, status)


def _finish(alloc: PowerAllocation, H: ChannelMatrix, scenario: Scenario,
            gamma: float, gamma_tilde: float, status: str) -> SolveReport:
    Q = assemble_covariance(H.Vc, alloc.p, budget=scenario.P)
    achieved = CRPoint(
        crb=crb_trace(Q, scenario.sigma_s2, scenario.Ns, scenario.L),
        rate=rate(Q, H, scenario.sigma_c2),
        gamma_target=gamma,
        scheme="optimal",
    )
    return SolveReport(allocation=alloc, Q=Q, achieved=achieved, status=status,
                       gamma_tilde=gamma_tilde)
