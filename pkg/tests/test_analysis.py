import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad_vec
from scipy.linalg import expm as scipy_expm

from regenstab.analysis import (
    ANALYTIC, EXACT, INCONCLUSIVE, MONTE_CARLO, STABLE, UNSTABLE, LiftedExpectation,
    analyze, cycle_transition, decide_stability, expected_lift, expected_lift_analytic,
    expected_lift_exact, expected_lift_mc, floquet_check, lifted_cycle_transition,
    maintenance_family, rho_bracket, threshold_sweep,
)
from regenstab.errors import AssumptionError
from regenstab.fixtures import paper_model, paper_system, rotation_model, rotation_system
from regenstab.lift import lift_matrix
from regenstab.process import (
    DISCRETE, POSITIVITY_ASSERTED, CallableCycleModel, Cycle, DiscreteMaintenanceModel,
    FiniteSupportModel, MaintenanceModel, PeriodicModel, SwitchedSystem, check_assumptions,
)

# E[lifted one-cycle transition], m = 2, for the failure-prone controller
# fixture (rate 1, jitter 10%); from scipy expm + adaptive quadrature of the
# double-integral form (cross-checked against the block form to 4e-15)
ORACLE = {
    0.5: np.array([
        [0.6646998707866018, 0.08477116448187186, 0.00549868795791892],
        [-0.07811447378387813, 0.5711753179891189, 0.07599832434218579],
        [0.00461822626335273, -0.06681085554308233, 0.5429707312063674]]),
    1.25: np.array([
        [0.34928682079965934, 0.12124165578308357, 0.02413917254511097],
        [-0.11380432629759749, 0.42160425681027813, 0.1931473130987804],
        [0.01945410752916682, -0.1599598624654646, 0.8239220635725849]]),
    2.0: np.array([
        [0.1724421711174212, 0.12862520688469525, 0.06501593667784214],
        [-0.13045728100240897, 0.36154701594918204, 0.4613291538975789],
        [0.05581498626938668, -0.38684376964520495, 1.6777800833474736]]),
}
ORACLE_RHO = {0.5: 0.6140938893931939, 1.25: 0.7450844115727859, 2.0: 1.5338586477576317}
# brentq on the oracle radius, xtol 1e-13
ORACLE_T_STAR = 1.5578817365946167


def conditional_oracle(A1, A2, m, T, delta, rate):
    """Average over R of the failure-time integral, lifting scipy's expm."""
    def given_R(t):
        g = lambda s: (rate * math.exp(-rate * s)
                       * lift_matrix(scipy_expm(A2 * (t - s)) @ scipy_expm(A1 * s), m))
        inner = quad_vec(g, 0, t, epsabs=1e-13, epsrel=1e-12)[0]
        return inner + math.exp(-rate * t) * lift_matrix(scipy_expm(A1 * t), m)

    if delta == 0:
        return given_R(T)
    a, b = (1 - delta) * T, (1 + delta) * T
    return quad_vec(given_R, a, b, epsabs=1e-13, epsrel=1e-12)[0] / (b - a)


@pytest.mark.parametrize("T", sorted(ORACLE))
def test_analytic_matches_frozen_oracle(T):
    E = expected_lift_analytic(paper_system(), paper_model(T), 2)
    np.testing.assert_allclose(E.estimate, ORACLE[T], rtol=1e-12, atol=1e-14)
    report = decide_stability(E)
    assert report.rho == pytest.approx(ORACLE_RHO[T], rel=1e-12)
    assert report.verdict == (STABLE if ORACLE_RHO[T] < 1 else UNSTABLE)


@pytest.mark.parametrize("m,T,delta,rate", [(1, 0.8, 0.3, 0.7), (3, 1.6, 0.0, 2.0),
                                            (2, 0.4, 0.5, 0.25)])
def test_analytic_general_parameters(m, T, delta, rate):
    s = paper_system()
    E = expected_lift_analytic(s, MaintenanceModel(T=T, delta=delta, rate=rate), m)
    oracle = conditional_oracle(s[1], s[2], m, T, delta, rate)
    np.testing.assert_allclose(E.estimate, oracle, rtol=1e-9, atol=1e-11)


def test_analytic_scalar_closed_form():
    a1, a2, lam, T, delta = -0.7, 0.4, 1.3, 2.0, 0.25
    s = SwitchedSystem({1: [[a1]], 2: [[a2]]})
    got = expected_lift_analytic(s, MaintenanceModel(T=T, delta=delta, rate=lam), 1)
    a, b = (1 - delta) * T, (1 + delta) * T
    k, c = a1 - lam, a1 - lam - a2
    integ = lambda r: (math.exp(r * b) - math.exp(r * a)) / r
    expected = (lam / c * (integ(k) - integ(a2)) + integ(k)) / (b - a)
    assert got.estimate[0, 0] == pytest.approx(expected, rel=1e-13)


def test_analytic_rejects_other_models():
    with pytest.raises(TypeError):
        expected_lift_analytic(paper_system(), PeriodicModel(Cycle(((1, 1.0),))), 2)
    with pytest.raises(ValueError):
        expected_lift_analytic(rotation_system().__class__(
            {1: np.eye(2), 2: np.eye(2), 3: np.eye(2)}), MaintenanceModel(T=1.0), 2)


def test_threshold_matches_oracle():
    res = threshold_sweep(paper_system(), maintenance_family(), 2, 0.1, 2.0, 39, tol=1e-12)
    assert res.crossings == 1
    assert res.threshold == pytest.approx(ORACLE_T_STAR, abs=1e-9)
    assert len(res.thetas) == 39 and res.thetas[0] == 0.1 and res.thetas[-1] == 2.0
    assert res.verdicts[0] == STABLE and res.verdicts[-1] == UNSTABLE


def test_sweep_without_crossing():
    res = threshold_sweep(paper_system(), maintenance_family(), 2, 0.2, 1.0, 5)
    assert res.threshold is None and res.crossings == 0
    with pytest.raises(ValueError):
        threshold_sweep(paper_system(), maintenance_family(), 2, 1.0, 0.5, 5)


def test_mc_agrees_with_analytic_and_is_worker_invariant():
    s, model = paper_system(), paper_model(1.25)
    E = expected_lift_mc(s, model, 2, 20_000, seed=2)
    z = (E.estimate - ORACLE[1.25]) / E.stderr
    assert np.abs(z).max() < 4.0
    assert E.samples == 20_000 and E.method == MONTE_CARLO and E.seed == 2
    E4 = expected_lift_mc(s, model, 2, 20_000, seed=2, workers=4)
    np.testing.assert_array_equal(E.estimate, E4.estimate)
    np.testing.assert_array_equal(E.stderr, E4.stderr)
    with pytest.raises(ValueError):
        expected_lift_mc(s, model, 2, 100, seed=None)


def test_mc_chunk_merge_matches_single_pass():
    # Chan's merge over chunks equals the plain two-pass statistics
    s, model = paper_system(), paper_model(0.5)
    E = expected_lift_mc(s, model, 2, 1000, seed=5, chunk_size=300)
    single = expected_lift_mc(s, model, 2, 1000, seed=5, chunk_size=1000)
    assert E.samples == single.samples == 1000
    # different chunking changes the draws, so compare each to its own samples
    from regenstab.analysis import lifted_batch
    from regenstab.process import draw_cycles, substream
    parts = [lifted_batch(s, draw_cycles(model, substream(5, i), n), 2)
             for i, n in enumerate([300, 300, 300, 100])]
    L = np.concatenate(parts)
    np.testing.assert_allclose(E.estimate, L.mean(axis=0), rtol=1e-13)
    np.testing.assert_allclose(E.stderr, L.std(axis=0, ddof=1) / math.sqrt(1000), rtol=1e-10)


def test_cycle_transition_order():
    s = rotation_system()
    c = Cycle(((1, 0.3), (2, 0.9), (1, 0.2)))
    M = cycle_transition(s, c).M
    oracle = scipy_expm(s[1] * 0.2) @ scipy_expm(s[2] * 0.9) @ scipy_expm(s[1] * 0.3)
    np.testing.assert_allclose(M, oracle, rtol=1e-13)
    np.testing.assert_allclose(lifted_cycle_transition(s, c, 3), lift_matrix(oracle, 3),
                               rtol=1e-11, atol=1e-13)
    with pytest.raises(KeyError):
        cycle_transition(s, Cycle(((7, 1.0),)))


def test_discrete_exact_enumeration_oracle():
    rng = np.random.default_rng(3)
    A = {1: rng.standard_normal((2, 2)) * 0.6, 2: rng.standard_normal((2, 2)) * 0.6}
    s = SwitchedSystem(A, time_kind=DISCRETE)
    cycles = [Cycle(((1, 2.0), (2, 1.0))), Cycle(((2, 3.0),)), Cycle(((1, 1.0), (2, 1.0), (1, 1.0)))]
    p = [0.2, 0.5, 0.3]
    model = FiniteSupportModel(cycles, p, time_kind=DISCRETE)
    mp = np.linalg.matrix_power
    Ms = [mp(A[2], 1) @ mp(A[1], 2), mp(A[2], 3), A[1] @ A[2] @ A[1]]
    for m in (1, 2, 3):
        oracle = sum(pi * lift_matrix(M, m) for pi, M in zip(p, Ms))
        E = expected_lift(s, model, m)
        assert E.method == EXACT
        np.testing.assert_allclose(E.estimate, oracle, rtol=1e-12, atol=1e-14)


def test_discrete_maintenance_exact_vs_mc():
    s = SwitchedSystem({1: [[0.5, 0.3], [-0.2, 0.7]], 2: [[1.05, 0.1], [0.0, 0.9]]},
                       time_kind=DISCRETE)
    model = DiscreteMaintenanceModel(T=4, delta=0.5, rate=0.5)
    exact = expected_lift_exact(s, model, 2)
    mc = expected_lift_mc(s, model, 2, 40_000, seed=11)
    z = (mc.estimate - exact.estimate) / np.maximum(mc.stderr, 1e-15)
    assert np.abs(z).max() < 4.0
    assert decide_stability(exact).verdict == decide_stability(mc).verdict


def test_decide_stability_boundary_and_bracket():
    ident = LiftedExpectation(m=2, n=2, estimate=np.eye(3), method=EXACT)
    rep = decide_stability(ident)
    assert rep.verdict == INCONCLUSIVE and any("boundary" in n for n in rep.notes)
    noisy = LiftedExpectation(m=2, n=2, estimate=0.99 * np.eye(3), method=MONTE_CARLO,
                              samples=10, stderr=np.full((3, 3), 0.01), seed=1)
    lo, hi = rho_bracket(noisy)
    assert lo < 0.99 < 1.0 < hi
    assert decide_stability(noisy).verdict == INCONCLUSIVE
    tight = LiftedExpectation(m=2, n=2, estimate=0.9 * np.eye(3), method=MONTE_CARLO,
                              samples=10, stderr=np.full((3, 3), 1e-4), seed=1)
    assert decide_stability(tight).verdict == STABLE
    with pytest.raises(ValueError):
        decide_stability(LiftedExpectation(m=1, n=1, estimate=np.array([[np.nan]]),
                                           method=EXACT))


def test_analyze_assumption_handling():
    s, model = paper_system(), paper_model(1.25)
    with pytest.raises(AssumptionError, match="A1"):
        analyze(s, model, 3)
    rep, E = analyze(s, model, 3, positivity=POSITIVITY_ASSERTED)
    assert rep.assumptions["A1"].status == "asserted" and rep.within_hypotheses
    rep, _ = analyze(s, model, 2)
    assert rep.method == ANALYTIC and rep.verdict == STABLE
    lines = dict(line.split(": ", 1) for line in rep.lines())
    assert lines["verdict"] == "stable" and lines["assumption_A1"].startswith("pass")
    unbounded = CallableCycleModel(lambda rng: Cycle(((1, 1.0), (2, 0.5))), r_max=None)
    rep, _ = analyze(s, unbounded, 2, samples=200, seed=0)
    assert not rep.within_hypotheses
    assert any("outside theorem hypotheses" in n for n in rep.notes)


def test_expected_lift_dispatch():
    s = paper_system()
    assert expected_lift(s, paper_model(1.0), 2).method == ANALYTIC
    per = PeriodicModel(Cycle(((1, 1.0), (2, 0.2))))
    assert expected_lift(s, per, 2).method == EXACT
    mc = expected_lift(s, rotation_model(), 2, samples=100, seed=1)
    assert mc.method == MONTE_CARLO
    with pytest.raises(ValueError):
        expected_lift(s, per, 2, method="bogus")
    with pytest.raises(ValueError):
        expected_lift(SwitchedSystem({1: np.eye(2)}, time_kind=DISCRETE), per, 2)


def test_floquet_check_rotation():
    s = SwitchedSystem({1: [[0.0, 1.0], [-1.0, 0.0]], 2: [[-0.5, 0.0], [0.0, -0.5]]})
    rep = floquet_check(s, Cycle(((1, 1.0), (2, 0.5))), 4)
    assert rep.rho_transition == pytest.approx(math.exp(-0.25), rel=1e-13)
    assert rep.rho_lifted == pytest.approx(math.exp(-1.0), rel=1e-12)
    assert rep.consistent and rep.verdicts_agree and rep.analyzer_verdict == STABLE


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31), st.integers(1, 4), st.integers(2, 3))
def test_exact_expectation_is_mean_of_lifted_transitions(seed, m, n):
    rng = np.random.default_rng(seed)
    s = SwitchedSystem({k: rng.standard_normal((n, n)) for k in (1, 2, 3)})
    cycles = [Cycle(tuple((int(rng.integers(1, 4)), float(rng.uniform(0.1, 1.0)))
                          for _ in range(rng.integers(1, 4)))) for _ in range(3)]
    p = rng.dirichlet(np.ones(3))
    E = expected_lift_exact(s, FiniteSupportModel(cycles, p), m)
    oracle = sum(pi * lift_matrix(cycle_transition(s, c).M, m) for pi, c in zip(p, cycles))
    scale = max(1.0, np.abs(oracle).max())
    np.testing.assert_allclose(E.estimate, oracle, atol=1e-9 * scale)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.1, 3.0), st.floats(0.0, 0.9), st.floats(0.1, 3.0))
def test_analytic_expectation_of_zero_system_is_identity(T, delta, rate):
    # both modes zero: every cycle transition is the identity
    s = SwitchedSystem({1: np.zeros((2, 2)), 2: np.zeros((2, 2))})
    E = expected_lift_analytic(s, MaintenanceModel(T=T, delta=delta, rate=rate), 2)
    np.testing.assert_allclose(E.estimate, np.eye(3), atol=1e-12)


def test_check_assumptions_wired_into_report():
    s = paper_system()
    rep = check_assumptions(s, paper_model(1.0), 2)
    report, _ = analyze(s, paper_model(1.0), 2)
    assert report.assumptions == rep
