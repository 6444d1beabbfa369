"""Energy functional, Sobolev quotient, concentration bubbles, second solution.

The functional

    I(u) = 1/2 <A u, u> - sum massw * P(u) - (lam/crit) sum massw * u^crit

uses the antiderivative P of the singular nonlinearity: u^{1-q}/(1-q) for
q != 1 and log u for q = 1.  Minimal solutions are local minimizers on the
cone above the pure singular solution; a second solution appears at a
mountain-pass level, which is located here by deforming a path of bubble
perturbations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, lu_factor, lu_solve

from .errors import ConvergenceError, ParameterError
from .grid import Grid
from .operator import (
    DiscreteSystem,
    Field,
    ProblemParams,
    kernel_constant,
    principal_eigenpair,
)


def energy(system: DiscreteSystem, params: ProblemParams, u: Field) -> float:
    """Value of the functional at a nonnegative field.

    Returns +inf when a zero node makes the singular term diverge (q >= 1).
    Negative fields are outside the domain of the functional and rejected.
    """
    u = np.asarray(u, dtype=float)
    if u.min() < 0.0:
        raise ParameterError("energy is defined on nonnegative fields")
    quad = 0.5 * u @ (system.stiffness @ u)
    q = params.q
    if u.min() == 0.0 and q >= 1.0:
        return math.inf
    with np.errstate(divide="ignore"):
        if q == 1.0:
            sing = float(np.sum(system.massw * np.log(u)))
        else:
            sing = float(np.sum(system.massw * u ** (1.0 - q)) / (1.0 - q))
    ts = params.crit
    critical = params.lam / ts * float(np.sum(system.massw * u ** ts))
    return float(quad) - sing - critical


def problem_gradient(system: DiscreteSystem, params: ProblemParams, u: Field) -> Field:
    """Nodal gradient A u - massw (u^{-q} + lam u^{crit-1})."""
    u = np.asarray(u, dtype=float)
    if u.min() <= 0.0:
        raise ParameterError("gradient needs a strictly positive field")
    return system.stiffness @ u - system.massw * (
        u ** (-params.q) + params.lam * u ** (params.crit - 1.0)
    )


def gateaux_derivative(
    system: DiscreteSystem, params: ProblemParams, u: Field, phi: Field
) -> float:
    """Directional derivative of the functional at u in direction phi."""
    phi = np.asarray(phi, dtype=float)
    return float(problem_gradient(system, params, u) @ phi)


def critical_quotient(system: DiscreteSystem, u: Field) -> float:
    """Rayleigh quotient of the critical embedding at u.

    (<A u, u> / cns) / (sum massw |u|^{crit})^{2/crit}; homogeneous of
    degree zero, so any rescaling of u leaves it unchanged.
    """
    u = np.asarray(u, dtype=float)
    if not np.any(u != 0.0):
        raise ParameterError("quotient undefined at the zero field")
    s = system.s
    ts = 2.0 / (1.0 - 2.0 * s)
    den = np.sum(system.massw * np.abs(u) ** ts) ** (2.0 / ts)
    return float((u @ (system.stiffness @ u) / kernel_constant(s)) / den)


def sobolev_constant(
    system: DiscreteSystem,
    max_iter: int = 2000,
    start: Field | None = None,
) -> float:
    """Best constant in the critical embedding on this grid.

    Minimizes (<A u, u> / cns) / |u|_{crit}^2 by preconditioned projected
    gradient descent from the principal eigenvector.  The discrete value
    decreases under refinement toward the continuum constant.
    """
    s = system.s
    ts = 2.0 / (1.0 - 2.0 * s)
    c = kernel_constant(s)
    A = system.stiffness
    mw = system.massw
    if start is None:
        start = principal_eigenpair(system).mode
    u = np.asarray(start, dtype=float).copy()
    cA = cho_factor(A)

    def quot(v):
        return critical_quotient(system, v)

    R = quot(u)
    alpha = 0.5
    for _ in range(max_iter):
        den = np.sum(mw * np.abs(u) ** ts)
        un = u / den ** (1.0 / ts)
        gR = 2.0 * (A @ un) / c - 2.0 * quot(u) * mw * np.sign(un) * np.abs(un) ** (ts - 1.0)
        d = cho_solve(cA, gR)
        ut = un - alpha * d
        Rt = quot(ut)
        while Rt > R and alpha > 1e-12:
            alpha *= 0.5
            ut = un - alpha * d
            Rt = quot(ut)
        done = abs(R - Rt) <= 1e-14 * max(1.0, R)
        u, R = ut, Rt
        if done:
            break
        alpha = min(alpha * 1.5, 1.0)
    return float(R)


def _quintic_taper(r: np.ndarray) -> np.ndarray:
    # C^2 transition from 1 to 0 over [0, 1]
    r = np.clip(r, 0.0, 1.0)
    return 1.0 - (10.0 * r ** 3 - 15.0 * r ** 4 + 6.0 * r ** 5)


@dataclass(frozen=True)
class Bubble:
    """Truncated concentration profile used to probe the critical level.

    ``alpha`` and ``beta`` put the untruncated core in closed form:
    alpha * (beta^2 + |x - center|^2)^{-(1-2s)/2} at every node where the
    cutoff equals one.
    """

    values: np.ndarray
    eps: float
    nu: float
    center: float
    sobolev: float
    alpha: float
    beta: float


def make_bubble(
    grid: Grid,
    params: ProblemParams,
    eps: float,
    sobolev: float,
    nu: float | None = None,
    center: float | None = None,
) -> Bubble:
    """Cutoff extremal profile concentrated at scale eps.

    The profile (1 + |y|^2)^{-(1-2s)/2}, normalized to unit critical norm
    (its norm is pi^{(1-2s)/2} exactly) and rescaled by the estimated best
    constant, is concentrated at scale eps and multiplied by a quintic taper
    that is 1 inside radius nu and 0 beyond 2 nu.  The default nu is a tenth
    of the interval length; the ball of radius 4 nu about the center must
    fit inside the interval.
    """
    if eps <= 0.0:
        raise ParameterError("eps must be positive")
    if sobolev <= 0.0:
        raise ParameterError("sobolev estimate must be positive")
    length = grid.b - grid.a
    if nu is None:
        nu = 0.1 * length
    if nu <= 0.0:
        raise ParameterError("nu must be positive")
    if center is None:
        center = 0.5 * (grid.a + grid.b)
    if center - 4.0 * nu < grid.a or center + 4.0 * nu > grid.b:
        raise ParameterError(
            f"need the 4*nu ball about {center:g} inside ({grid.a:g}, {grid.b:g})"
        )
    s = params.s
    d = np.abs(grid.nodes - center)
    zeta = np.where(
        d <= nu, 1.0, np.where(d >= 2.0 * nu, 0.0, _quintic_taper((d - nu) / nu))
    )
    pw = (1.0 - 2.0 * s) / 2.0
    unit = np.pi ** pw
    scale = sobolev ** (1.0 / (2.0 * s))
    y = d / (eps * scale)
    profile = (1.0 + y ** 2) ** (-pw) / unit
    values = zeta * eps ** (-pw) * profile
    return Bubble(
        values=values,
        eps=float(eps),
        nu=float(nu),
        center=float(center),
        sobolev=float(sobolev),
        alpha=float(eps ** pw * scale ** (2.0 * pw) / unit),
        beta=float(eps * scale),
    )


@dataclass(frozen=True)
class GapReport:
    """Peak levels along bubble rays versus the compactness threshold.

    ``ok`` reflects the smallest concentration scale tested (the regime the
    bound speaks about); ``all_below`` records whether every scale passed.
    """

    ok: bool
    all_below: bool
    sup_levels: tuple
    eps_ladder: tuple
    threshold: float
    threshold_unscaled: float
    base_level: float
    decreasing: bool

    def __bool__(self):
        return self.ok


def _ray_peak(system, params, base, direction, base_level):
    """Maximum of t -> I(base + t * direction) over t >= 0."""
    def level(t):
        return energy(system, params, base + t * direction)

    t_hi = 1.0
    while level(t_hi) > base_level - 10.0 and t_hi < 1e6:
        t_hi *= 2.0
    tg = np.linspace(0.0, t_hi, 800)
    vals = np.array([level(t) for t in tg])
    i = int(np.argmax(vals))
    lo = tg[max(i - 1, 0)]
    hi = tg[min(i + 1, len(tg) - 1)]
    gr = (math.sqrt(5.0) - 1.0) / 2.0
    a1, b1 = lo, hi
    c1 = b1 - gr * (b1 - a1)
    d1 = a1 + gr * (b1 - a1)
    while b1 - a1 > 1e-10 * max(1.0, b1):
        if level(c1) > level(d1):
            b1, d1 = d1, c1
            c1 = b1 - gr * (b1 - a1)
        else:
            a1, c1 = c1, d1
            d1 = a1 + gr * (b1 - a1)
    t_best = 0.5 * (a1 + b1)
    return max(level(t_best), base_level)


def energy_gap_check(
    system: DiscreteSystem,
    params: ProblemParams,
    first: Field,
    eps_ladder=(0.08, 0.04, 0.02),
    nu: float | None = None,
    sobolev: float | None = None,
) -> GapReport:
    """Compare peak levels along bubble rays with the compactness threshold.

    For each concentration scale the ray t -> first + t * bubble is maximized
    over t.  The report records whether every peak stays below

        I(first) + s * S^{1/(2s)} * lam^{-(1-2s)/(2s)}

    and also carries the unscaled variant (without the lam factor) for
    reference, plus whether the peaks decrease as eps shrinks.
    """
    if params.lam <= 0.0:
        raise ParameterError("the gap check needs lam > 0")
    if sobolev is None:
        sobolev = sobolev_constant(system)
    base_level = energy(system, params, first)
    s = params.s
    peaks = []
    for eps in eps_ladder:
        bub = make_bubble(system.grid, params, eps, sobolev, nu=nu)
        peaks.append(_ray_peak(system, params, first, bub.values, base_level))
    power = sobolev ** (1.0 / (2.0 * s))
    threshold = base_level + s * power * params.lam ** (-(1.0 - 2.0 * s) / (2.0 * s))
    threshold_unscaled = base_level + s * power
    peaks_t = tuple(float(p) for p in peaks)
    ladder_t = tuple(float(e) for e in eps_ladder)
    decreasing = all(b <= a + 1e-12 for a, b in zip(peaks_t, peaks_t[1:]))
    smallest = peaks_t[int(np.argmin(ladder_t))]
    return GapReport(
        ok=smallest < threshold,
        all_below=all(p < threshold for p in peaks_t),
        sup_levels=peaks_t,
        eps_ladder=ladder_t,
        threshold=float(threshold),
        threshold_unscaled=float(threshold_unscaled),
        base_level=float(base_level),
        decreasing=decreasing,
    )


def _shell_probe(system, params, first, sigma, cA, max_iter=200):
    """Minimize the energy over the cone slice at A-distance sigma from first.

    Projected descent: the A-preconditioned gradient loses its component
    along the shell normal, trial points are clipped to the cone above
    ``first`` and rescaled back to the shell.  Returns (field, level,
    residual); the caller judges whether the minimum is flat enough to count.
    """
    A = system.stiffness

    def anorm(v):
        return math.sqrt(max(v @ (A @ v), 0.0))

    def project(u):
        d = np.maximum(u, first) - first
        nd = anorm(d)
        if nd <= 1e-30:
            return None
        return first + (sigma / nd) * d

    z = cho_solve(cA, system.massw)
    u = project(first + z)
    if u is None:
        raise ConvergenceError("shell projection collapsed onto the base point")
    lev = energy(system, params, u)
    step = 1.0
    for _ in range(max_iter):
        r = u - first
        nr2 = max(r @ (A @ r), 1e-300)
        d = cho_solve(cA, problem_gradient(system, params, u))
        d = d - ((d @ (A @ r)) / nr2) * r
        if anorm(d) <= 1e-14 * max(1.0, sigma):
            break
        moved = False
        while step > 1e-12:
            cand = project(u - step * d)
            if cand is not None:
                lc = energy(system, params, cand)
                if lc < lev - 1e-15 * max(1.0, abs(lev)):
                    u, lev, moved = cand, lc, True
                    step = min(step * 1.3, 1.0)
                    break
            step *= 0.5
        if not moved:
            break
    residual = float(np.abs(problem_gradient(system, params, u)).max())
    return u, float(lev), residual


def _polish_critical_point(system, params, v0, floor, floor_level, distinct_tol):
    """Full Newton on the unregularized gradient, with acceptance gates.

    The Jacobian here is indefinite (the critical term pushes down), so the
    factorization is LU.  A candidate is accepted only if it stays in the
    cone above the floor, sits strictly above the floor level, and is
    A-distant from the floor; otherwise None.
    """
    A = system.stiffness
    mw = system.massw
    q = params.q
    ts = params.crit
    lam = params.lam
    v = v0.copy()
    floor_norm = math.sqrt(max(floor @ (A @ floor), 1e-300))
    for _ in range(60):
        F = problem_gradient(system, params, v)
        J = A + np.diag(q * mw * v ** (-q - 1.0) - lam * (ts - 1.0) * mw * v ** (ts - 2.0))
        try:
            dv = lu_solve(lu_factor(J), -F)
        except np.linalg.LinAlgError:
            return None
        t, n0 = 1.0, np.linalg.norm(F)
        for _ in range(40):
            vt = v + t * dv
            if vt.min() > 0 and np.linalg.norm(problem_gradient(system, params, vt)) < n0:
                break
            t *= 0.5
        else:
            return None
        v = v + t * dv
        if np.linalg.norm(problem_gradient(system, params, v)) < 1e-12:
            diff = v - floor
            dist = math.sqrt(max(diff @ (A @ diff), 0.0)) / floor_norm
            if (
                dist > distinct_tol
                and diff.min() >= -1e-8
                and energy(system, params, v) > floor_level
            ):
                return v
            return None
    return None


def mountain_pass_search(
    system: DiscreteSystem,
    params: ProblemParams,
    first: Field,
    bubble: Bubble | None = None,
    sobolev: float | None = None,
    eps: float = 0.02,
    nu: float | None = None,
    npts: int = 33,
    max_sweeps: int = 4000,
    newton_every: int = 10,
    grad_tol: float = 1e-6,
    distinct_tol: float = 1e-2,
    trace: list | None = None,
):
    """Locate a second solution above the minimal one at the same lam.

    A path from the minimal solution to a far point along a bubble direction
    is relaxed by a climbing elastic band: every interior sample moves down
    the A-preconditioned gradient with the component along the path tangent
    removed, except the highest sample, which moves up that component
    instead.  Steps are capped by a quarter of the sample spacing, samples
    are projected onto the cone above the minimal solution, and the path is
    rebalanced by A-arclength each sweep.  Every ``newton_every`` sweeps the
    highest sample seeds a full Newton polish; the first polished point that
    is distinct from the minimal solution, inside the cone, and above its
    level is returned.

    Returns the second solution and a report on the ``mountain-pass``
    branch.  Raises ConvergenceError when the budget runs out.
    """
    from .solver import SolveReport  # local import to avoid a cycle

    if params.lam <= 0.0:
        raise ParameterError("a second solution needs lam > 0")
    first = np.asarray(first, dtype=float)
    if first.min() <= 0.0:
        raise ParameterError("the base solution must be strictly positive")
    A = system.stiffness
    cA = cho_factor(A)
    if bubble is None:
        if sobolev is None:
            sobolev = sobolev_constant(system)
        bubble = make_bubble(system.grid, params, eps, sobolev, nu=nu)
    direction = bubble.values
    base_level = energy(system, params, first)

    def anorm(v):
        return math.sqrt(max(v @ (A @ v), 0.0))

    def level(u):
        return energy(system, params, u)

    # Stage one: probe for a zero-altitude minimizer on small shells around
    # the base point.  A flat minimum that already solves the equation wins
    # outright; the usual outcome is a decline and a fall-through to the
    # path deformation below.
    first_norm = anorm(first)
    for frac in (0.05, 0.1, 0.2):
        sigma = frac * first_norm
        v, lev, residual = _shell_probe(system, params, first, sigma, cA)
        accept = (
            lev <= base_level + 1e-8
            and residual <= 1e-6
            and anorm(v - first) / max(first_norm, 1e-30) > distinct_tol
        )
        if trace is not None:
            trace.append(
                {
                    "stage": "shell",
                    "sigma": float(sigma),
                    "level": float(lev),
                    "residual": float(residual),
                    "accepted": bool(accept),
                }
            )
        if accept:
            report = SolveReport(
                residual=residual,
                iterations=0,
                energy=lev,
                branch="mountain-pass",
                converged=True,
            )
            return v, report

    radius = 0.5
    while level(first + radius * direction) >= base_level and radius < 1e6:
        radius *= 2.0
    if radius >= 1e6:
        raise ConvergenceError("could not find a far endpoint below the base level")

    tgrid = np.linspace(0.0, 1.0, npts)
    path = [first + t * radius * direction for t in tgrid]
    spacing = anorm(radius * direction) / (npts - 1)

    def rebalance(p):
        arc = [0.0]
        for j in range(1, npts):
            arc.append(arc[-1] + anorm(p[j] - p[j - 1]))
        arc = np.array(arc)
        if arc[-1] <= 0.0:
            return p, 0.0
        rel = arc / arc[-1]
        out = [p[0]]
        for tj in tgrid[1:-1]:
            i = int(np.searchsorted(rel, tj, side="right")) - 1
            i = min(max(i, 0), npts - 2)
            fr = (tj - rel[i]) / max(rel[i + 1] - rel[i], 1e-30)
            out.append(np.maximum(p[i] * (1.0 - fr) + p[i + 1] * fr, first))
        out.append(p[-1])
        return out, arc[-1]

    found = None
    sweeps = 0
    levels = np.array([level(p) for p in path])
    for sweep in range(max_sweeps):
        sweeps = sweep + 1
        jmax = int(np.argmax(levels))
        peak_before = float(levels[jmax])
        accepted = False
        backtracks = 0
        scale = 1.0
        # A sweep is accepted only when it does not raise the path maximum;
        # otherwise the step caps shrink and the sweep reruns.
        for _ in range(8):
            newpath = [path[0]]
            for j in range(1, npts - 1):
                u = path[j]
                d = cho_solve(cA, problem_gradient(system, params, u))
                tau = path[j + 1] - path[j - 1]
                nt = anorm(tau)
                if nt > 0.0:
                    tau = tau / nt
                    comp = d @ (A @ tau)
                    d = d - 2.0 * comp * tau if j == jmax else d - comp * tau
                nd = anorm(d)
                cap = scale * 0.25 * spacing
                step = 1.0 if nd <= cap else cap / nd
                newpath.append(np.maximum(u - step * d, first))
            newpath.append(path[-1])
            cand_path, arclen = rebalance(newpath)
            cand_levels = np.array([level(p) for p in cand_path])
            if float(cand_levels.max()) <= peak_before + 1e-12 * max(1.0, abs(peak_before)):
                path = cand_path
                spacing = arclen / (npts - 1)
                levels = cand_levels
                accepted = True
                break
            scale *= 0.5
            backtracks += 1
        jmax = int(np.argmax(levels))
        g = problem_gradient(system, params, path[jmax])
        pg = anorm(cho_solve(cA, g))
        diff = path[jmax] - first
        distinct = anorm(diff) / max(anorm(first), 1e-30) > distinct_tol
        if trace is not None:
            trace.append(
                {
                    "stage": "deform",
                    "sweep": sweep,
                    "level": float(levels[jmax]),
                    "peak_index": jmax,
                    "projected_gradient": float(pg),
                    "distinct": bool(distinct),
                    "accepted": bool(accepted),
                    "backtracks": backtracks,
                }
            )
        if not accepted or (sweep + 1) % newton_every == 0:
            cand = _polish_critical_point(
                system, params, path[jmax], first, base_level, distinct_tol
            )
            if cand is not None:
                found = cand
                break
        if pg <= grad_tol and distinct:
            found = path[jmax]
            break
        if not accepted:
            raise ConvergenceError(
                f"deformation stalled at level {float(levels[jmax])!r} "
                f"after {sweeps} sweeps"
            )
    if found is None:
        raise ConvergenceError(
            f"no distinct critical point located within {max_sweeps} sweeps; "
            f"last level {float(levels.max())!r}"
        )
    res = float(np.abs(problem_gradient(system, params, found)).max())
    report = SolveReport(
        residual=res,
        iterations=sweeps,
        energy=level(found),
        branch="mountain-pass",
        converged=True,
    )
    return found, report
