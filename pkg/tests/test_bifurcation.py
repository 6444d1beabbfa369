"""Certificate, extremal-parameter bisection, branch sweeps, boundary exponents."""

import warnings

import numpy as np
import pytest

from fraclab import (
    ParameterError,
    ProblemParams,
    boundary_distance,
    boundary_profile,
    boundary_sandwich,
    build_grid,
    assemble,
    estimate_lambda_star,
    extremal_solution,
    holder_fit,
    lambda_certificate,
    principal_eigenpair,
    solve_pure_singular,
    sweep_lambda,
    weak_residual,
)

# closed form at unit eigenvalue, q = 2, order 1/4: the maximizer is
# (5/4)^(1/3) and the maximum 2 (5/4)^(-2/3) - (5/4)^(-5/3)
CERT_UNIT_Q2_S025 = 1.0341286512153042
CERT_128_S04_Q2 = 1.8291705963577758
LAMBDA_STAR_128 = 0.061292398522974786
LAMBDA_STAR_BRACKET_128 = (0.06118075480981818, 0.061404042236131384)


def test_certificate_closed_form():
    p = ProblemParams(s=0.25, q=2.0)
    assert lambda_certificate(p, 1.0) == pytest.approx(CERT_UNIT_Q2_S025, abs=1e-10)


def test_certificate_scan_never_beats_maximum():
    p = ProblemParams(s=0.25, q=2.0)
    cert = lambda_certificate(p, 1.0)
    t = np.geomspace(1e-2, 10.0, 5000)
    vals = (2.0 * t - t**-2.0) / t ** (p.crit - 1.0)
    assert vals.max() <= cert + 1e-10


def test_certificate_monotone_in_eigenvalue(params_s04q2):
    c1 = lambda_certificate(params_s04q2, 1.0)
    c2 = lambda_certificate(params_s04q2, 2.0)
    assert 0.0 < c1 < c2
    with pytest.raises(ParameterError):
        lambda_certificate(params_s04q2, 0.0)


def test_certificate_on_mesh(system128, params_s04q2):
    lam1 = principal_eigenpair(system128).value
    assert lambda_certificate(params_s04q2, lam1) == pytest.approx(
        CERT_128_S04_Q2, rel=1e-10
    )


def test_lambda_star_frozen(system128, params_s04q2, w128):
    res = estimate_lambda_star(system128, params_s04q2, base=w128)
    assert res.estimate == pytest.approx(LAMBDA_STAR_128, rel=1e-9)
    assert res.bracket[0] == pytest.approx(LAMBDA_STAR_BRACKET_128[0], rel=1e-9)
    assert res.bracket[1] == pytest.approx(LAMBDA_STAR_BRACKET_128[1], rel=1e-9)
    assert not res.flagged


def test_lambda_star_bracket_structure(system128, params_s04q2, w128):
    res = estimate_lambda_star(system128, params_s04q2, base=w128)
    lo, hi = res.bracket
    assert 0.0 <= lo < hi <= res.lambda_cert
    assert lo <= res.estimate <= hi
    assert (hi - lo) / res.estimate <= 1e-2
    assert res.evaluations
    feas = [e for e in res.evaluations if e[1]]
    infeas = [e for e in res.evaluations if not e[1]]
    assert feas and infeas
    assert all(e[2] is not None for e in feas)
    assert max(e[0] for e in feas) <= min(e[0] for e in infeas) + 1e-12


def test_sweep_minimal_branch(system64, rng):
    params = ProblemParams(s=0.4, q=2.0)
    lams = [0.0, 0.01, 0.03]
    rng.shuffle(lams)
    diagram = sweep_lambda(system64, params, lams)
    assert [e.lam for e in diagram.entries] == [0.0, 0.01, 0.03]
    assert diagram.entries[0].branch == "pure-singular"
    assert all(e.branch == "minimal" for e in diagram.entries[1:])
    assert all(e.converged for e in diagram.entries)
    sups = [e.sup for e in diagram.entries]
    assert sups[0] < sups[1] < sups[2]
    assert all(e.lam <= diagram.lambda_cert for e in diagram.entries if e.converged)
    assert diagram.lambda_star is None


def test_sweep_is_deterministic(system64):
    params = ProblemParams(s=0.4, q=2.0)
    d1 = sweep_lambda(system64, params, [0.01, 0.02])
    d2 = sweep_lambda(system64, params, [0.01, 0.02])
    assert d1.entries == d2.entries
    assert d1.lambda_cert == d2.lambda_cert


def test_sweep_second_branch(system64):
    params = ProblemParams(s=0.4, q=2.0)
    diagram = sweep_lambda(system64, params, [0.02], second=True, lambda_star=(0.06, 0.05, 0.07))
    branches = {e.branch for e in diagram.entries}
    assert branches == {"minimal", "mountain-pass"}
    by = {e.branch: e for e in diagram.entries}
    assert by["mountain-pass"].sup > by["minimal"].sup
    assert by["mountain-pass"].energy > by["minimal"].energy
    assert diagram.lambda_star == (0.06, 0.05, 0.07)


def test_sweep_records_divergence(system64, params_s04q2):
    lam1 = principal_eigenpair(system64).value
    cert = lambda_certificate(params_s04q2, lam1)
    diagram = sweep_lambda(system64, params_s04q2, [0.01, 2.0 * cert])
    good = diagram.entries[0]
    bad = diagram.entries[-1]
    assert good.converged
    assert not bad.converged
    assert np.isnan(bad.sup)
    with pytest.raises(ParameterError):
        sweep_lambda(system64, params_s04q2, [-0.01])


def test_extremal_ladder(system128, params_s04q2, w128):
    trace = []
    u, report = extremal_solution(
        system128, params_s04q2, lam_star=LAMBDA_STAR_128, trace=trace
    )
    assert report.branch == "extremal"
    assert report.converged
    assert report.iterations == 8
    assert len(trace) == 8
    lams = [t["lam"] for t in trace]
    assert all(b > a for a, b in zip(lams, lams[1:]))
    assert lams[-1] < LAMBDA_STAR_128
    values = [t["values"] for t in trace if t["converged"]]
    for prev, cur in zip(values, values[1:]):
        assert (cur - prev).min() >= -1e-8
    assert (u - w128).min() >= -1e-8
    assert report.residual <= 1e-4
    assert weak_residual(
        system128, params_s04q2.with_lam(LAMBDA_STAR_128), u
    ) == pytest.approx(report.residual, rel=1e-12)


def test_extremal_validation(system64, params_s04q2):
    with pytest.raises(ParameterError):
        extremal_solution(system64, params_s04q2, lam_star=0.05, rungs=0)
    with pytest.raises(ParameterError):
        extremal_solution(system64, params_s04q2, lam_star=-0.1)


def test_holder_fit_synthetic_power():
    """a pure power profile is recovered to two digits regardless of q"""
    grid = build_grid(-1.0, 1.0, 512)
    params = ProblemParams(s=0.3, q=3.0)
    u = 3.0 * boundary_distance(grid) ** 0.3
    fit = holder_fit(grid, params, u)
    assert fit.alpha_fit == pytest.approx(0.3, abs=0.01)
    assert fit.rsq >= 0.999
    assert fit.trusted
    assert not fit.log_correction
    assert fit.alpha_theory == pytest.approx(2.0 * 0.3 / 4.0, rel=1e-12)
    assert fit.n_nodes >= 6
    assert len(fit.regressor) == fit.n_nodes == len(fit.log_values)


def test_holder_fit_matches_theory_q2():
    grid = build_grid(-1.0, 1.0, 512)
    params = ProblemParams(s=0.4, q=2.0)
    system = assemble(grid, 0.4)
    w, rep = solve_pure_singular(system, params)
    assert rep.converged
    fit = holder_fit(grid, params, w)
    assert fit.trusted
    assert fit.rsq >= 0.99
    assert abs(fit.alpha_fit - fit.alpha_theory) <= 0.05
    assert fit.alpha_theory == pytest.approx(0.8 / 3.0, rel=1e-12)


@pytest.mark.xfail(
    strict=True,
    reason="for q < 1 the profile bends toward delta^s only in a boundary "
    "layer thinner than any usable fit window; the windowed slope "
    "undershoots the theoretical exponent by more than 0.05",
)
def test_holder_fit_matches_theory_mild_singularity():
    grid = build_grid(-1.0, 1.0, 512)
    params = ProblemParams(s=0.4, q=0.5)
    system = assemble(grid, 0.4)
    w, rep = solve_pure_singular(system, params)
    assert rep.converged
    fit = holder_fit(grid, params, w)
    assert fit.rsq >= 0.99
    assert abs(fit.alpha_fit - params.s) <= 0.05


def test_holder_fit_log_corrected_branch(system128, grid128):
    params = ProblemParams(s=0.4, q=1.0)
    w, rep = solve_pure_singular(system128, params)
    assert rep.converged
    fit = holder_fit(grid128, params, w)
    assert fit.log_correction
    assert fit.alpha_theory == pytest.approx(0.4, rel=1e-12)
    assert np.isfinite(fit.alpha_fit)
    assert fit.n_nodes >= 6


@pytest.mark.parametrize(
    "q,s,expected,logflag",
    [(0.5, 0.4, 0.4, False), (1.0, 0.4, 0.4, True), (3.0, 0.3, 0.15, False)],
)
def test_exponent_trichotomy(q, s, expected, logflag):
    grid = build_grid(-1.0, 1.0, 64)
    params = ProblemParams(s=s, q=q)
    u = boundary_distance(grid) ** 0.3
    fit = holder_fit(grid, params, u)
    assert fit.alpha_theory == pytest.approx(expected, rel=1e-12)
    assert fit.log_correction == logflag


def test_holder_fit_widens_sparse_window():
    grid = build_grid(-1.0, 1.0, 16)
    params = ProblemParams(s=0.4, q=2.0)
    u = boundary_distance(grid) ** 0.25
    with pytest.warns(UserWarning, match="widened"):
        fit = holder_fit(grid, params, u)
    assert fit.n_nodes >= 2


def test_boundary_profile_trichotomy(system64):
    phi = principal_eigenpair(system64).mode
    mild = boundary_profile(system64, ProblemParams(s=0.4, q=0.5))
    np.testing.assert_allclose(mild, phi, rtol=1e-12)
    logcase = boundary_profile(system64, ProblemParams(s=0.4, q=1.0))
    np.testing.assert_allclose(logcase, phi * np.sqrt(np.log(2.0 / phi)), rtol=1e-12)
    steep = boundary_profile(system64, ProblemParams(s=0.4, q=3.0))
    np.testing.assert_allclose(steep, phi**0.5, rtol=1e-12)
    for prof in (mild, logcase, steep):
        assert prof.min() > 0.0


def test_boundary_sandwich_brackets_baseline(system128, params_s04q2, w128):
    report = boundary_sandwich(system128, params_s04q2, w128)
    assert bool(report)
    assert 0.5 <= report.k_low <= report.k_high <= 3.0
    assert report.n_nodes >= 6
    assert report.width == pytest.approx(0.2, rel=1e-12)


def test_boundary_sandwich_detects_wrong_decay(system128, params_s04q2, w128):
    # a field with the wrong boundary exponent cannot be framed by tight
    # constants: its ratio spread is far wider than the true profile's
    flat = np.full(128, 0.7)
    wrong = boundary_sandwich(system128, params_s04q2, flat)
    good = boundary_sandwich(system128, params_s04q2, w128)
    assert wrong.k_high / wrong.k_low > 1.5 * good.k_high / good.k_low
