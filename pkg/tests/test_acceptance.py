"""Acceptance criteria, one test each.

Every test prints a single ``PASS``/``FAIL`` line with the measured numbers
before asserting, so the summary is visible even when pytest captures output.
"""

import time

import numpy as np
import pytest

from regenstab import fixtures
from regenstab.analysis import (
    STABLE, UNSTABLE, decide_stability, expected_lift_analytic, expected_lift_exact,
    expected_lift_mc, floquet_check, maintenance_family, threshold_sweep,
)
from regenstab.cli import main
from regenstab.lift import infinitesimal_lift, lift_matrix, lift_vector
from regenstab.linalg import expm, spectral_radius
from regenstab.process import DISCRETE, Cycle, FiniteSupportModel, SwitchedSystem
from regenstab.simulate import ensemble_mean, simulate_paths

MC_SEED = 12345
MC_SAMPLES = 100_000
MC_TEMPS = (0.5, 1.25, 2.0)


@pytest.fixture
def verdict(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\n[criterion {number}] {'PASS' if ok else 'FAIL'}: {detail}")
        return ok
    return emit


def test_criterion_1_threshold(verdict):
    start = time.perf_counter()
    res = threshold_sweep(fixtures.paper_system(), maintenance_family(), fixtures.PAPER_DEGREE,
                          0.1, 2.0, 39)
    elapsed = time.perf_counter() - start
    ok = res.threshold is not None and abs(res.threshold - 1.55) <= 0.05 and elapsed < 10
    verdict(1, ok, f"T* = {res.threshold:.6f} (target 1.55 +- 0.05), {elapsed:.2f} s")
    assert ok


def test_criterion_2_sweep_shape(verdict):
    thetas = np.linspace(0.1, 2.0, 39)
    rhos = np.array([spectral_radius(expected_lift_analytic(
        fixtures.paper_system(), fixtures.paper_model(T), 2).estimate).radius for T in thetas])
    at = lambda T: rhos[np.argmin(np.abs(thetas - T))]
    finite = bool(np.all(np.isfinite(rhos)))
    window = thetas >= 0.5 - 1e-12
    steps = np.diff(rhos[window])
    monotone = bool(np.all(steps > 0))
    ok = finite and at(1.25) < 1 and at(2.0) > 1 and monotone
    detail = (f"finite={finite}, rho(1.25)={at(1.25):.5f}, rho(2.0)={at(2.0):.5f}, "
              f"monotone on [0.5, 2.0]={monotone}")
    if not monotone:
        down = thetas[window][1:][steps <= 0]
        detail += (f" (rho decreases up to T={down.max():.2f}; "
                   f"minimum {rhos.min():.5f} at T={thetas[np.argmin(rhos)]:.2f})")
    verdict(2, ok, detail)
    assert ok


def test_criterion_3_mc_vs_analytic(verdict):
    start = time.perf_counter()
    worst = {}
    for T in MC_TEMPS:
        s, model = fixtures.paper_system(), fixtures.paper_model(T)
        exact = expected_lift_analytic(s, model, 2).estimate
        mc = expected_lift_mc(s, model, 2, MC_SAMPLES, MC_SEED)
        worst[T] = float(np.max(np.abs(mc.estimate - exact) / mc.stderr))
    elapsed = time.perf_counter() - start
    ok = max(worst.values()) <= 3.0 and elapsed < 60
    detail = ", ".join(f"T={T}: max|z|={z:.2f}" for T, z in worst.items())
    verdict(3, ok, f"{detail}; N={MC_SAMPLES}, seed={MC_SEED}, {elapsed:.1f} s")
    assert ok


def test_criterion_4_lift_identities(verdict):
    rng = np.random.default_rng(4)
    worst = {"norm": 0.0, "product": 0.0, "exp": 0.0}
    for n in (2, 3):
        for m in (1, 2, 3, 4):
            for _ in range(200):
                x = rng.standard_normal(n)
                worst["norm"] = max(worst["norm"], abs(
                    np.linalg.norm(lift_vector(x, m)) - np.linalg.norm(x) ** m)
                    / np.linalg.norm(x) ** m)
                A, B = rng.standard_normal((2, n, n))
                lhs, rhs = lift_matrix(A @ B, m), lift_matrix(A, m) @ lift_matrix(B, m)
                worst["product"] = max(worst["product"],
                                       np.abs(lhs - rhs).max() / np.abs(rhs).max())
                t = rng.uniform(0, 1)
                lhs, rhs = expm(infinitesimal_lift(A, m), t), lift_matrix(expm(A, t), m)
                worst["exp"] = max(worst["exp"], np.abs(lhs - rhs).max() / np.abs(rhs).max())
    ok = worst["norm"] <= 1e-12 and worst["product"] <= 1e-10 and worst["exp"] <= 1e-9
    verdict(4, ok, "max relative error: norm {norm:.1e} (tol 1e-12), product {product:.1e} "
                   "(tol 1e-10), exponential {exp:.1e} (tol 1e-9); 200 draws per (n, m)"
            .format(**worst))
    assert ok


def _random_transition(rng, n):
    # spectral radius spread over [0.5, 1.5] but kept off the boundary
    while True:
        M = rng.standard_normal((n, n))
        target = rng.uniform(0.5, 1.5)
        if abs(target - 1) > 0.02:
            return M * target / spectral_radius(M).radius


def test_criterion_5_floquet(verdict):
    rng = np.random.default_rng(5)
    worst, mismatches, count = 0.0, 0, 0
    for k in range(100):
        n = 2 + k % 2
        if k % 2:
            # continuous time: monodromy of a two-segment cycle
            A1, A2 = rng.standard_normal((2, n, n)) * 0.5
            s = SwitchedSystem({1: A1, 2: A2})
            cyc = Cycle(((1, float(rng.uniform(0.2, 1.0))), (2, float(rng.uniform(0.2, 1.0)))))
        else:
            s = SwitchedSystem({1: _random_transition(rng, n)}, time_kind=DISCRETE)
            cyc = Cycle(((1, 1.0),))
        for m in (1, 2, 3, 4):
            rep = floquet_check(s, cyc, m)
            worst = max(worst, rep.relative_error)
            mismatches += not rep.verdicts_agree
            count += 1
    ok = worst <= 1e-8 and mismatches == 0
    verdict(5, ok, f"{count} cases: max relative error {worst:.1e} (tol 1e-8), "
                   f"{mismatches} verdict mismatches")
    assert ok


def _discrete_model(rng, n=2):
    mats = {s: rng.standard_normal((n, n)) * 0.9 for s in (1, 2, 3)}
    k = int(rng.integers(1, 4))
    cycles = [Cycle(tuple((int(rng.integers(1, 4)), float(rng.integers(1, 4)))
                          for _ in range(rng.integers(1, 4)))) for _ in range(k)]
    p = rng.dirichlet(np.ones(k))
    return SwitchedSystem(mats, time_kind=DISCRETE), FiniteSupportModel(cycles, p, DISCRETE)


def test_criterion_6_discrete_oracle(verdict):
    rng = np.random.default_rng(6)
    rows = []
    ok = True
    cases = [(1, STABLE), (1, UNSTABLE), (2, STABLE), (2, UNSTABLE), (3, STABLE), (3, UNSTABLE)]
    for m, target in cases:
        # draw until the exact verdict is the target and the radius is off the
        # boundary by more than N samples can resolve
        while True:
            s, model = _discrete_model(rng)
            exact = expected_lift_exact(s, model, m)
            rho = spectral_radius(exact.estimate).radius
            if abs(rho - 1) > 0.1 and decide_stability(exact).verdict == target:
                break
        mc = expected_lift_mc(s, model, m, MC_SAMPLES, MC_SEED)
        # entries that are identical on every cycle have zero spread; allow rounding only
        scale = np.maximum(1.0, np.abs(exact.estimate))
        err = np.abs(mc.estimate - exact.estimate)
        within = bool(np.all(err <= 3 * mc.stderr + 1e-12 * scale))
        v_exact = decide_stability(exact).verdict
        v_mc = decide_stability(mc).verdict
        ok &= within and v_exact == v_mc
        spread = mc.stderr > 1e-12 * scale
        z = (err[spread] / mc.stderr[spread]).max() if spread.any() else 0.0
        rows.append(f"m={m} cycles={len(model.cycles)} rho={rho:.3f} max|z|={z:.2f} "
                    f"{v_exact}/{v_mc}")
    verdict(6, ok, "; ".join(rows))
    assert ok


def test_criterion_7_simulation_concordance(verdict):
    s = fixtures.paper_system()
    x0 = np.ones(2) / np.sqrt(2)
    rows = []
    ok = True
    for T in (0.8, 1.25, 1.8, 2.0):
        model = fixtures.paper_model(T)
        report = decide_stability(expected_lift_analytic(s, model, 2))
        summary = ensemble_mean(s, model, x0, 30.0, 0.05, 2, 10_000, seed=7)
        empirical = STABLE if summary.beta_hat > 0 else UNSTABLE
        ok &= empirical == report.verdict
        # decay rate implied by the analyzer: rho per cycle of mean length T
        implied = -np.log(report.rho) / T
        rows.append(f"T={T}: beta={summary.beta_hat:+.3f} (implied {implied:+.3f}) "
                    f"{empirical}/{report.verdict}")
    verdict(7, ok, "; ".join(rows))
    assert ok


def test_criterion_8_positivity(verdict):
    rng = np.random.default_rng(8)
    s, model = fixtures.rotation_system(), fixtures.rotation_model(2.0)
    x0 = rng.uniform(0, 1, (100, 2))
    _, _, _, min_entry = simulate_paths(s, model, x0, 30.0, 0.05, 2, 1000, seed=8)
    ok = min_entry >= -1e-9
    verdict(8, ok, f"min state entry {min_entry:.3e} over 1000 paths from 100 initial states "
                   f"(required >= -1e-9)")
    assert ok


def test_criterion_9_determinism(verdict, tmp_path):
    identical = []
    for T in MC_TEMPS:
        outs = []
        for workers in (1, 8):
            out = tmp_path / f"T{T}-w{workers}"
            code = main(["run", "--fixture", "paper", "--task", "analyze",
                         "--method", "monte-carlo", "--T", str(T),
                         "--samples", str(MC_SAMPLES), "--seed", str(MC_SEED),
                         "--workers", str(workers), "--out", str(out), "--no-figures"])
            assert code == 0
            outs.append(out)
        identical.append(all((outs[0] / f).read_bytes() == (outs[1] / f).read_bytes()
                             for f in ("expectation.csv", "expectation_stderr.csv")))
    ok = all(identical)
    verdict(9, ok, f"CSV outputs byte-identical for workers 1 vs 8 at T={MC_TEMPS}: {identical}")
    assert ok
