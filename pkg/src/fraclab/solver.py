"""Solvers for the singular semilinear problem and the minimal branch.

The core routine solves A u = massw * ((u + eps)^{-q} + g) down a decreasing
regularization schedule ending at eps = 0, with a damped Newton method at
each stage.  The Jacobian A + diag(q massw (u+eps)^{-q-1}) is symmetric
positive definite, so each stage factorizes with Cholesky.

On top of it sit the pure singular solution (g = 0), supersolution
construction by a multiplier ladder over the torsion-like profile, and the
monotone iteration that climbs from the pure singular solution to the
minimal solution of the full problem.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import ConvergenceError, ParameterError
from .operator import DiscreteSystem, Field, ProblemParams, m_matrix_threshold, solve_dirichlet
from .variational import energy


@dataclass(frozen=True)
class SolveReport:
    """Outcome summary attached to every computed field."""

    residual: float
    iterations: int
    energy: float
    branch: str
    converged: bool


BRANCHES = ("pure-singular", "minimal", "mountain-pass", "extremal", "auxiliary")

# A solve counts as converged when its unregularized defect is this small,
# and Newton trial iterates must keep every node above the floor.
RESIDUAL_TOL = 1e-8
POSITIVITY_FLOOR = 1e-14


def default_schedule() -> list:
    """Regularization levels 0.1 * 4^{-k}; the tail is 1e-8 of the head."""
    return [0.1 * 4.0 ** (-k) for k in range(15)]


def weak_residual(system: DiscreteSystem, params: ProblemParams, u: Field) -> float:
    """Sup-norm of the nodal defect A u - massw (u^{-q} + lam u^{crit-1})."""
    u = np.asarray(u, dtype=float)
    r = system.stiffness @ u - system.massw * (
        u ** (-params.q) + params.lam * u ** (params.crit - 1.0)
    )
    return float(np.abs(r).max())


def _stage_newton(system, params, g, u, eps, tol, max_iter=60):
    """Damped Newton for one regularization stage.  Returns (u, iterations)."""
    A = system.stiffness
    mw = system.massw
    q = params.q
    for it in range(max_iter):
        r = A @ u - mw * ((u + eps) ** (-q) + g)
        cJ = cho_factor(A + np.diag(q * mw * (u + eps) ** (-q - 1.0)))
        du = cho_solve(cJ, -r)
        t = 1.0
        rn0 = np.linalg.norm(r)
        for _ in range(40):
            ut = u + t * du
            if ut.min() > POSITIVITY_FLOOR:
                rt = A @ ut - mw * ((ut + eps) ** (-q) + g)
                if np.linalg.norm(rt) < rn0:
                    break
            t *= 0.5
        else:
            raise ConvergenceError(
                f"line search stalled at eps={eps:g} after {it} Newton steps"
            )
        u = u + t * du
        if np.linalg.norm(t * du) <= tol * (1.0 + np.linalg.norm(u)):
            return u, it + 1
    return u, max_iter


def solve_singular_semilinear(
    system: DiscreteSystem,
    params: ProblemParams,
    g=0.0,
    schedule=None,
    start: Field | None = None,
    tol: float = 1e-12,
    trace: list | None = None,
):
    """Solve A u = massw (u^{-q} + g) by eps continuation.

    ``g`` is a frozen nonnegative source (scalar or nodal vector).  Without a
    ``start`` the full default schedule runs and its last level must be at
    most 1e-8 of the first; with a warm start a short tail is acceptable.
    Each stage appends a dict to ``trace`` when one is supplied.  The final
    stage always solves the unregularized equation (eps = 0).

    Returns the positive solution field and a SolveReport on the
    ``auxiliary`` branch (callers of record wrap it under their own label).
    """
    n = system.grid.n
    g = np.broadcast_to(np.asarray(g, dtype=float), (n,)).copy()
    if not np.all(np.isfinite(g)):
        raise ParameterError("source g has non-finite entries")
    if g.min() < 0.0:
        raise ParameterError(f"source g must be nonnegative, min is {g.min():g}")
    if schedule is None:
        schedule = default_schedule()
    schedule = [float(e) for e in schedule]
    if any(e <= 0.0 for e in schedule):
        raise ParameterError("schedule levels must be positive")
    if any(b >= a for a, b in zip(schedule, schedule[1:])):
        raise ParameterError("schedule must decrease strictly")
    if start is None and schedule[-1] > 1e-8 * schedule[0]:
        raise ParameterError("cold-start schedule must end at most 1e-8 of its head")

    u = None if start is None else np.asarray(start, dtype=float).copy()
    if u is not None and u.min() <= 0.0:
        raise ParameterError("start iterate must be strictly positive")

    total = 0
    for eps in schedule + [0.0]:
        if u is None:
            c = cho_factor(system.stiffness)
            u = cho_solve(c, system.massw * (eps ** (-params.q) + g))
        u, its = _stage_newton(system, params, g, u, eps, tol)
        total += its
        if trace is not None:
            r = system.stiffness @ u - system.massw * ((u + eps) ** (-params.q) + g)
            trace.append(
                {
                    "eps": eps,
                    "newton_iterations": its,
                    "stage_residual": float(np.abs(r).max()),
                    "values": u.copy(),
                }
            )
    if u.min() <= 0.0:
        raise ConvergenceError("solver left the positive cone")
    res = system.stiffness @ u - system.massw * (u ** (-params.q) + g)
    rmax = float(np.abs(res).max())
    report = SolveReport(
        residual=rmax,
        iterations=total,
        energy=energy(system, params, u),
        branch="auxiliary",
        converged=rmax <= RESIDUAL_TOL,
    )
    return u, report


def solve_pure_singular(system: DiscreteSystem, params: ProblemParams, **kw):
    """Solution of the problem without the critical term (lam = 0)."""
    base = params.with_lam(0.0)
    u, rep = solve_singular_semilinear(system, base, 0.0, **kw)
    report = SolveReport(
        residual=rep.residual,
        iterations=rep.iterations,
        energy=rep.energy,
        branch="pure-singular",
        converged=rep.converged,
    )
    return u, report


def default_multiplier_ladder() -> list:
    """Half-power ladder 2^{j/2}, j = -40..40, covering small lam as well."""
    return [2.0 ** (j / 2.0) for j in range(-40, 41)]


@dataclass(frozen=True)
class SupersolutionResult:
    """Nodewise defect verdict for a candidate ubar = w + M * z."""

    valid: bool
    multiplier: float | None
    values: Field | None
    worst_defect: float
    attempts: int


def build_supersolution(
    system: DiscreteSystem,
    params: ProblemParams,
    M: float,
    base: Field | None = None,
    slack: float = 1e-8,
) -> SupersolutionResult:
    """Check whether ubar = w + M z dominates the full problem nodewise.

    w is the pure singular solution, z solves the linear problem with unit
    source.  The candidate is valid when its defect
    A ubar - massw (ubar^{-q} + lam ubar^{crit-1}) is >= -slack at every
    node.  M = 0 is permitted (the check then reduces to whether w itself
    absorbs the critical term, true only at lam = 0); negative M is not.
    """
    if not M >= 0.0:
        raise ParameterError(f"multiplier must be nonnegative, got {M}")
    if base is None:
        base, _ = solve_pure_singular(system, params)
    z = solve_dirichlet(system, 1.0)
    ub = base + float(M) * z
    r = system.stiffness @ ub - system.massw * (
        ub ** (-params.q) + params.lam * ub ** (params.crit - 1.0)
    )
    worst = float(r.min())
    return SupersolutionResult(
        valid=worst >= -slack,
        multiplier=float(M),
        values=ub,
        worst_defect=worst,
        attempts=1,
    )


def scan_supersolution(
    system: DiscreteSystem,
    params: ProblemParams,
    base: Field | None = None,
    ladder=None,
    slack: float = 1e-8,
) -> SupersolutionResult:
    """Scan a multiplier ladder for the first valid supersolution.

    The first multiplier that validates wins; when none does, the result
    carries valid=False and ``worst_defect`` reports the best (largest)
    minimum defect seen across the ladder.
    """
    if ladder is None:
        ladder = default_multiplier_ladder()
    ladder = [float(M) for M in ladder]
    if any(M < 0.0 for M in ladder):
        raise ParameterError("multipliers must be nonnegative")
    if base is None:
        base, _ = solve_pure_singular(system, params)
    best = -np.inf
    for k, M in enumerate(ladder):
        res = build_supersolution(system, params, M, base=base, slack=slack)
        best = max(best, res.worst_defect)
        if res.valid:
            return SupersolutionResult(
                valid=True,
                multiplier=res.multiplier,
                values=res.values,
                worst_defect=res.worst_defect,
                attempts=k + 1,
            )
    return SupersolutionResult(
        valid=False,
        multiplier=None,
        values=None,
        worst_defect=best,
        attempts=len(ladder),
    )


def monotone_iteration(
    system: DiscreteSystem,
    params: ProblemParams,
    base: Field | None = None,
    bound: Field | None = None,
    cap: int = 500,
    tol: float = 1e-9,
    divergence_sup: float = 1e6,
    trace: list | None = None,
):
    """Iterate L(u_k) = lam u_{k-1}^{crit-1} upward from the pure singular w.

    Each step solves the frozen-source singular problem, warm-started from
    the previous iterate.  The sequence is nondecreasing; its limit, when
    the sup norms stay bounded, is the minimal solution.  ``bound`` may
    carry a validated supersolution, in which case every iterate is checked
    against it.  Divergence (sup norm beyond ``divergence_sup``) or hitting
    ``cap`` returns converged=False.
    """
    if params.lam < 0.0:
        raise ParameterError("lam must be nonnegative")
    if base is None:
        base, _ = solve_pure_singular(system, params)
    u = np.asarray(base, dtype=float).copy()
    if bound is not None and np.any(u > np.asarray(bound, dtype=float) + 1e-8):
        raise ParameterError("starting field must sit below the supersolution")
    ts = params.crit
    status = "cap"
    k = 0
    for k in range(1, cap + 1):
        g = params.lam * u ** (ts - 1.0)
        try:
            if k == 1:
                unew, _ = solve_singular_semilinear(system, params, g)
            else:
                unew, _ = solve_singular_semilinear(
                    system, params, g, schedule=[1e-8], start=u
                )
        except ConvergenceError:
            status = "inner-failure"
            break
        inc = unew - u
        if trace is not None:
            entry = {
                "k": k,
                "min_increment": float(inc.min()),
                "sup_change": float(np.abs(inc).max()),
                "sup": float(unew.max()),
            }
            if bound is not None:
                entry["below_bound"] = bool(np.all(unew <= bound + 1e-8))
            trace.append(entry)
        u = unew
        if bound is not None and np.any(u > bound + 1e-6 * (1.0 + np.abs(bound))):
            status = "escaped-bound"
            break
        if u.max() > divergence_sup:
            status = "diverged"
            break
        if np.abs(inc).max() <= tol:
            status = "converged"
            break
    converged = status == "converged"
    if converged or status == "cap":
        res = weak_residual(system, params, u)
        en = energy(system, params, u)
    else:
        res = np.inf
        en = np.inf
    report = SolveReport(
        residual=res,
        iterations=k,
        energy=en,
        branch="minimal",
        converged=converged,
    )
    return u, report


@dataclass(frozen=True)
class ComparisonReport:
    """Ordering verdict for two solutions with ordered sources."""

    ordered: bool
    indeterminate: bool
    worst_gap: float
    residual_low: float
    residual_high: float
    m_matrix: bool

    def __bool__(self):
        return self.ordered and not self.indeterminate


def comparison_check(
    system: DiscreteSystem,
    params: ProblemParams,
    u1: Field,
    u2: Field,
    g1,
    g2,
    slack: float = 1e-8,
    residual_tol: float = 1e-8,
) -> ComparisonReport:
    """Check u1 <= u2 nodewise for solutions driven by ordered sources.

    Each u_i must satisfy A u_i = massw (u_i^{-q} + g_i) to residual_tol in
    the sup norm; otherwise the verdict is flagged indeterminate (the
    ordering of non-solutions says nothing).  The report notes whether the
    matrix is in the M-matrix regime (s above the sign threshold), where
    the ordering is a theorem rather than an observation.
    """
    n = system.grid.n
    u1 = np.asarray(u1, dtype=float)
    u2 = np.asarray(u2, dtype=float)
    g1 = np.broadcast_to(np.asarray(g1, dtype=float), (n,))
    g2 = np.broadcast_to(np.asarray(g2, dtype=float), (n,))
    if np.any(g1 > g2):
        raise ParameterError("sources must satisfy g1 <= g2 nodewise")
    if u1.min() <= 0.0 or u2.min() <= 0.0:
        raise ParameterError("fields must be strictly positive")
    r1 = system.stiffness @ u1 - system.massw * (u1 ** (-params.q) + g1)
    r2 = system.stiffness @ u2 - system.massw * (u2 ** (-params.q) + g2)
    res1 = float(np.abs(r1).max())
    res2 = float(np.abs(r2).max())
    gap = float((u2 - u1).min())
    return ComparisonReport(
        ordered=gap >= -slack,
        indeterminate=res1 > residual_tol or res2 > residual_tol,
        worst_gap=gap,
        residual_low=res1,
        residual_high=res2,
        m_matrix=system.s >= m_matrix_threshold(),
    )


@dataclass(frozen=True)
class EnvelopeReport:
    """Two-sided envelope check for a solution of the full problem."""

    ok: bool
    lower_ok: bool
    upper_ok: bool
    worst_lower: float
    worst_upper: float
    lower_node: int
    upper_node: int
    max_u: float

    def __bool__(self):
        return self.ok


def envelope_check(
    system: DiscreteSystem,
    params: ProblemParams,
    u: Field,
    slack: float = 1e-8,
) -> EnvelopeReport:
    """Check w <= u <= z nodewise, localizing any violation.

    w is the pure singular solution; z solves the singular problem with the
    constant source lam * (sup u)^{crit-1}, the natural upper envelope for
    any positive solution of the full problem with that sup norm.
    """
    u = np.asarray(u, dtype=float)
    if u.min() <= 0.0:
        raise ParameterError("field must be strictly positive")
    w, _ = solve_pure_singular(system, params)
    g_top = params.lam * float(u.max()) ** (params.crit - 1.0)
    z, _ = solve_singular_semilinear(system, params, g_top)
    low = u - w
    high = z - u
    il = int(np.argmin(low))
    ih = int(np.argmin(high))
    lower_ok = bool(low[il] >= -slack)
    upper_ok = bool(high[ih] >= -slack)
    return EnvelopeReport(
        ok=lower_ok and upper_ok,
        lower_ok=lower_ok,
        upper_ok=upper_ok,
        worst_lower=float(low[il]),
        worst_upper=float(high[ih]),
        lower_node=il,
        upper_node=ih,
        max_u=float(u.max()),
    )
