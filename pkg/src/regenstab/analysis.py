"""Mean stability of regenerative switched linear systems.

The m-th mean stability of ``dx/dt = A_sigma(t) x`` (or its discrete-time
analogue) is decided by the spectral radius of the expected m-lift of the
one-cycle transition matrix: stable iff that radius is below one.
Three engines produce the expectation:

* ``analytic``: closed form for `MaintenanceModel`, built from nested
  block-matrix exponentials (no quadrature);
* ``exact``: enumeration over a finitely supported cycle law;
* ``monte-carlo``: chunked sampling with deterministic reduction.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import AssumptionError
from .lift import infinitesimal_lift, lift_basis, lift_dimension, lift_matrix
from .linalg import expm, expm_integral, spectral_radius
from .process import (
    CONTINUOUS, DISCRETE, POSITIVITY_CHECK, AssumptionReport, Cycle,
    CycleBatch, MaintenanceModel, PeriodicModel, check_assumptions,
    draw_cycles, substream,
)

ANALYTIC = "analytic"
EXACT = "exact"
MONTE_CARLO = "monte-carlo"

STABLE = "stable"
UNSTABLE = "unstable"
INCONCLUSIVE = "inconclusive"

# |rho - 1| at or below this counts as the (strict) stability boundary
BOUNDARY_TOL = 1e-9
# samples per Monte Carlo chunk; fixed so results never depend on worker count
CHUNK_SIZE = 8192
# random +-1 patterns used to bracket rho under Monte Carlo noise
N_SIGN_PATTERNS = 32


# -- one-cycle transitions -----------------------------------------------------

@dataclass(frozen=True)
class TransitionMatrix:
    M: np.ndarray
    cycle: Cycle


def cycle_transition(system, cycle):
    """Transition matrix of ``system`` across one cycle.

    Segments act right to left: ``M = F_k ... F_1`` where ``F_i`` is
    ``expm(A_s d)`` in continuous time and ``A_s ** d`` in discrete time.
    """
    M = np.eye(system.n)
    for mode, d in cycle.segments:
        if mode not in system.matrices:
            raise KeyError(f"unknown mode {mode}")
        A = system[mode]
        if system.time_kind == CONTINUOUS:
            M = expm(A, d) @ M
        else:
            if not float(d).is_integer():
                raise ValueError(f"discrete-time segment with non-integer duration {d}")
            M = np.linalg.matrix_power(A, int(d)) @ M
    return TransitionMatrix(M=M, cycle=cycle)


def _lifted_modes(system, m):
    # mode matrices lifted to degree m, padding slot last
    stack = system.stacked()
    if system.time_kind == CONTINUOUS:
        return infinitesimal_lift(stack, m)
    lifted = lift_matrix(stack, m)
    lifted[-1] = np.eye(lifted.shape[-1])
    return lifted


def lifted_batch(system, batch, m, lifted_modes=None):
    """Lifted one-cycle transitions for every cycle in a `CycleBatch`.

    Continuous time multiplies ``expm(infinitesimal_lift(A_s, m) d)``
    factors; discrete time multiplies powers of ``lift_matrix(A_s, m)``.
    """
    if lifted_modes is None:
        lifted_modes = _lifted_modes(system, m)
    size, width = batch.modes.shape
    dim = lifted_modes.shape[-1]
    out = np.broadcast_to(np.eye(dim), (size, dim, dim)).copy()
    for k in range(width):
        idx = system.mode_index(batch.modes[:, k])
        d = batch.durations[:, k]
        if system.time_kind == CONTINUOUS:
            out = expm(lifted_modes[idx] * d[:, None, None]) @ out
        else:
            keys = idx.astype(np.int64) * (1 << 32) + d.astype(np.int64)
            uniq, inverse = np.unique(keys, return_inverse=True)
            powers = np.stack([
                np.linalg.matrix_power(lifted_modes[key >> 32], int(key & 0xFFFFFFFF))
                for key in uniq])
            out = powers[inverse] @ out
    return out


def lifted_cycle_transition(system, cycle, m):
    """Lifted transition of a single cycle via the lifted generators."""
    return lifted_batch(system, CycleBatch.from_cycles([cycle]), m)[0]


# -- expectations --------------------------------------------------------------

@dataclass(frozen=True)
class LiftedExpectation:
    """Estimate of the expected lifted one-cycle transition."""

    m: int
    n: int
    estimate: np.ndarray
    method: str
    samples: int = None
    stderr: np.ndarray = None
    seed: int = None

    @property
    def dim(self):
        return self.estimate.shape[0]

    @property
    def basis(self):
        return lift_basis(self.n, self.m)


def _chunk_stats(system, model, m, seed, chunk, size, lifted_modes):
    rng = substream(seed, chunk)
    batch = draw_cycles(model, rng, size)
    L = lifted_batch(system, batch, m, lifted_modes)
    mean = L.mean(axis=0)
    dev = L - mean
    return size, mean, np.einsum("kij,kij->ij", dev, dev)


def expected_lift_mc(system, model, m, samples, seed, workers=1, chunk_size=CHUNK_SIZE):
    """Monte Carlo estimate of the expected lifted transition.

    Samples are split into fixed-size chunks, chunk ``i`` drawing from
    ``substream(seed, i)``. Chunk statistics are merged in chunk order, so
    the estimate is bit-identical for any ``workers``.
    """
    if samples < 2:
        raise ValueError(f"need at least 2 samples, got {samples}")
    if seed is None:
        raise ValueError("Monte Carlo estimation needs an explicit seed")
    _check_kind(system, model)
    lifted_modes = _lifted_modes(system, m)
    sizes = [chunk_size] * (samples // chunk_size)
    if samples % chunk_size:
        sizes.append(samples % chunk_size)

    def job(i):
        return _chunk_stats(system, model, m, seed, i, sizes[i], lifted_modes)

    if workers > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(job, range(len(sizes))))
    else:
        parts = [job(i) for i in range(len(sizes))]

    count, mean, m2 = parts[0]
    for c, mu, s2 in parts[1:]:
        total = count + c
        delta = mu - mean
        mean = mean + delta * (c / total)
        m2 = m2 + s2 + delta * delta * (count * c / total)
        count = total
    var = m2 / (count - 1)
    stderr = np.sqrt(var / count)
    return LiftedExpectation(m=m, n=system.n, estimate=mean, method=MONTE_CARLO,
                             samples=count, stderr=stderr, seed=int(seed))


def expected_lift_analytic(system, model, m):
    """Closed-form expected lifted transition for the maintenance model.

    With ``H``, ``F`` the lifted generators of the healthy and failed modes
    and failure rate ``lam``, conditioning on the cycle length ``t`` gives

        lam * int_0^t exp(F (t-s)) exp((H - lam I) s) ds + exp((H - lam I) t),

    whose first term is the top-right block of
    ``exp([[F, lam I], [0, H - lam I]] t)``. Averaging over ``t`` uniform on
    ``[(1-delta) T, (1+delta) T]`` is one more exponential integral.
    """
    if not isinstance(model, MaintenanceModel):
        raise TypeError(f"analytic engine needs a MaintenanceModel, got {type(model).__name__}")
    if system.time_kind != CONTINUOUS:
        raise ValueError("analytic engine is for continuous-time systems")
    for label in (model.healthy_mode, model.failed_mode):
        if label not in system.matrices:
            raise KeyError(f"system has no mode {label} required by the maintenance model")
    if set(system.labels) != {model.healthy_mode, model.failed_mode}:
        raise ValueError("maintenance model needs exactly the healthy and failed modes")

    H = infinitesimal_lift(system[model.healthy_mode], m)
    F = infinitesimal_lift(system[model.failed_mode], m)
    dim = H.shape[0]
    lam = model.rate
    ident = np.eye(dim)
    healthy = H - lam * ident
    block = np.zeros((2 * dim, 2 * dim))
    block[:dim, :dim] = F
    block[:dim, dim:] = lam * ident
    block[dim:, dim:] = healthy

    a = (1 - model.delta) * model.T
    b = (1 + model.delta) * model.T
    if a == b:
        # no jitter, or jitter below the resolution of T
        failed_part = expm(block, model.T)[:dim, dim:]
        survive_part = expm(healthy, model.T)
    else:
        failed_part = expm_integral(block, a, b)[:dim, dim:] / (b - a)
        survive_part = expm_integral(healthy, a, b) / (b - a)
    return LiftedExpectation(m=m, n=system.n, estimate=failed_part + survive_part,
                             method=ANALYTIC)


def expected_lift_exact(system, model, m):
    """Expected lifted transition by enumerating a finitely supported law."""
    support = model.support()
    if support is None:
        raise TypeError(f"{type(model).__name__} has no finite support to enumerate")
    _check_kind(system, model)
    probs = np.array([p for p, _ in support])
    batch = CycleBatch.from_cycles([c for _, c in support])
    L = lifted_batch(system, batch, m)
    return LiftedExpectation(m=m, n=system.n, estimate=np.einsum("k,kij->ij", probs, L),
                             method=EXACT)


def expected_lift(system, model, m, method="auto", samples=100_000, seed=None, workers=1):
    """Dispatch to an expectation engine.

    ``auto`` picks the analytic engine for `MaintenanceModel`, enumeration
    for finitely supported laws and Monte Carlo otherwise.
    """
    lift_dimension(system.n, m)
    if method == "auto":
        if isinstance(model, MaintenanceModel) and system.time_kind == CONTINUOUS:
            method = ANALYTIC
        elif model.support() is not None:
            method = EXACT
        else:
            method = MONTE_CARLO
    if method == ANALYTIC:
        return expected_lift_analytic(system, model, m)
    if method == EXACT:
        return expected_lift_exact(system, model, m)
    if method == MONTE_CARLO:
        return expected_lift_mc(system, model, m, samples, seed, workers=workers)
    raise ValueError(f"unknown method {method!r}")


def _check_kind(system, model):
    kind = getattr(model, "time_kind", CONTINUOUS)
    if kind != system.time_kind:
        raise ValueError(f"{system.time_kind} system paired with a {kind} cycle model")


# -- verdicts ------------------------------------------------------------------

@dataclass(frozen=True)
class StabilityReport:
    rho: float
    verdict: str
    method: str
    m: int
    dominant_eigenvalue: complex = 0j
    converged: bool = True
    rho_interval: tuple = None
    assumptions: AssumptionReport = None
    samples: int = None
    seed: int = None
    notes: tuple = field(default_factory=tuple)

    @property
    def margin(self):
        return self.rho - 1.0

    @property
    def within_hypotheses(self):
        return self.assumptions is None or self.assumptions.all_ok

    def lines(self):
        """``key: value`` lines for the text report."""
        out = [
            f"m: {self.m}",
            f"method: {self.method}",
            f"rho: {self.rho:.17g}",
            f"margin: {self.margin:.17g}",
            f"verdict: {self.verdict}",
            f"dominant_eigenvalue: {self.dominant_eigenvalue.real:.17g}"
            f"{self.dominant_eigenvalue.imag:+.17g}j",
            f"converged: {str(self.converged).lower()}",
        ]
        if self.rho_interval is not None:
            out.append(f"rho_lower: {self.rho_interval[0]:.17g}")
            out.append(f"rho_upper: {self.rho_interval[1]:.17g}")
        if self.samples is not None:
            out.append(f"samples: {self.samples}")
        if self.seed is not None:
            out.append(f"seed: {self.seed}")
        out.append(f"within_hypotheses: {str(self.within_hypotheses).lower()}")
        if self.assumptions is not None:
            for c in self.assumptions.checks:
                out.append(f"assumption_{c.name}: {c.status} ({c.message})")
        for note in self.notes:
            out.append(f"note: {note}")
        return out


def _verdict(lo, hi):
    if hi < 1 - BOUNDARY_TOL:
        return STABLE
    if lo > 1 + BOUNDARY_TOL:
        return UNSTABLE
    return INCONCLUSIVE


def rho_bracket(E, n_patterns=N_SIGN_PATTERNS):
    """Heuristic range of the spectral radius under Monte Carlo noise.

    Evaluates the radius at ``estimate + 3 * stderr * S`` for
    ``n_patterns`` random sign matrices ``S`` plus the all-plus and
    all-minus patterns.
    """
    rng = np.random.default_rng(0 if E.seed is None else E.seed)
    signs = rng.choice([-1.0, 1.0], size=(n_patterns,) + E.estimate.shape)
    signs = np.concatenate([signs, np.ones((1,) + E.estimate.shape),
                            -np.ones((1,) + E.estimate.shape)])
    radii = [spectral_radius(E.estimate + 3.0 * E.stderr * s).radius for s in signs]
    return min(radii), max(radii)


def decide_stability(E, assumptions=None):
    """Turn an expected lifted transition into a verdict.

    Stable iff the spectral radius is below one. Monte Carlo estimates
    must clear one with their whole noise bracket; anything within
    ``BOUNDARY_TOL`` of one, or a non-converged eigenvalue iteration, is
    inconclusive.
    """
    if not np.all(np.isfinite(E.estimate)):
        raise ValueError("expected lifted transition has non-finite entries")
    sr = spectral_radius(E.estimate)
    notes = []
    interval = None
    if not sr.converged:
        verdict = INCONCLUSIVE
        notes.append("eigenvalue iteration did not converge")
    elif E.method == MONTE_CARLO and E.stderr is not None:
        lo, hi = rho_bracket(E)
        interval = (min(lo, sr.radius), max(hi, sr.radius))
        verdict = _verdict(*interval)
    else:
        verdict = _verdict(sr.radius, sr.radius)
    if verdict == INCONCLUSIVE and sr.converged and abs(sr.radius - 1) <= BOUNDARY_TOL:
        notes.append("spectral radius on the stability boundary")
    if assumptions is not None and not assumptions.all_ok:
        failed = ", ".join(c.name for c in assumptions.failed())
        notes.append(f"outside theorem hypotheses ({failed} not satisfied)")
    return StabilityReport(
        rho=sr.radius, verdict=verdict, method=E.method, m=E.m,
        dominant_eigenvalue=sr.dominant_eigenvalue, converged=sr.converged,
        rho_interval=interval, assumptions=assumptions, samples=E.samples,
        seed=E.seed, notes=tuple(notes))


def analyze(system, model, m, method="auto", samples=100_000, seed=None,
            positivity=POSITIVITY_CHECK, workers=1):
    """Check hypotheses, estimate the expected lift and decide stability.

    Raises `AssumptionError` when ``m`` is odd and positivity is neither
    verified nor asserted. Returns ``(report, expectation)``.
    """
    assumptions = check_assumptions(system, model, m, positivity)
    a1 = assumptions["A1"]
    if not a1.ok:
        raise AssumptionError(f"A1 not satisfied: {a1.message}")
    E = expected_lift(system, model, m, method=method, samples=samples, seed=seed,
                      workers=workers)
    return decide_stability(E, assumptions), E


# -- parameter sweeps ------------------------------------------------------------

@dataclass(frozen=True)
class SweepResult:
    thetas: np.ndarray
    rhos: np.ndarray
    threshold: float = None
    threshold_rho: float = None
    crossings: int = 0

    @property
    def verdicts(self):
        return [_verdict(r, r) for r in self.rhos]


def maintenance_family(delta=0.1, rate=1.0):
    """Maintenance models indexed by the nominal period ``T``."""
    return lambda T: MaintenanceModel(T=T, delta=delta, rate=rate)


def threshold_sweep(system, family, m, lo, hi, steps, tol=1e-6, **expect_kwargs):
    """Tabulate the spectral radius over a parameter grid and bisect onto one.

    ``family(theta)`` returns a cycle model. The grid has ``steps`` points
    spanning ``[lo, hi]``. If ``rho - 1`` changes sign, the first crossing is
    refined by bisection until ``|rho - 1| < tol``. Assumes ``rho`` is
    continuous between the bracketing grid points.
    """
    if steps < 2:
        raise ValueError("a sweep needs at least two grid points")
    if not lo < hi:
        raise ValueError(f"need lo < hi, got [{lo}, {hi}]")

    def rho(theta):
        E = expected_lift(system, family(theta), m, **expect_kwargs)
        return spectral_radius(E.estimate).radius

    thetas = np.linspace(lo, hi, steps)
    rhos = np.array([rho(t) for t in thetas])
    sign = np.sign(rhos - 1.0)
    changes = np.nonzero(sign[:-1] * sign[1:] < 0)[0]
    exact_hits = np.nonzero(sign == 0)[0]
    crossings = len(changes) + len(exact_hits)
    if len(exact_hits) and (not len(changes) or exact_hits[0] <= changes[0]):
        k = exact_hits[0]
        return SweepResult(thetas, rhos, float(thetas[k]), float(rhos[k]), crossings)
    if not len(changes):
        return SweepResult(thetas, rhos, None, None, 0)

    k = changes[0]
    a, b = thetas[k], thetas[k + 1]
    fa = rhos[k] - 1.0
    mid, fm = a, fa
    for _ in range(200):
        mid = 0.5 * (a + b)
        fm = rho(mid) - 1.0
        if abs(fm) < tol or b - a < 1e-14 * max(1.0, abs(mid)):
            break
        if (fm < 0) == (fa < 0):
            a, fa = mid, fm
        else:
            b = mid
    return SweepResult(thetas, rhos, float(mid), float(fm + 1.0), crossings)


# -- periodic signals ------------------------------------------------------------

@dataclass(frozen=True)
class FloquetReport:
    rho_transition: float
    rho_lifted: float
    relative_error: float
    classical_verdict: str
    analyzer_verdict: str

    @property
    def consistent(self):
        return self.relative_error <= 1e-8

    @property
    def verdicts_agree(self):
        return self.classical_verdict == self.analyzer_verdict


def floquet_check(system, cycle, m):
    """Compare the lifted analysis of a periodic signal with Floquet's test.

    For a deterministic cycle the expected lift is the lift of the
    monodromy matrix ``M``, whose spectral radius must equal
    ``rho(M) ** m``; stability then reduces to ``rho(M) < 1``.
    """
    M = cycle_transition(system, cycle).M
    rho_m = spectral_radius(M).radius
    E = expected_lift_exact(system, PeriodicModel(cycle, time_kind=system.time_kind), m)
    rho_lift = spectral_radius(E.estimate).radius
    expected = rho_m ** m
    if expected == 0:
        rel = abs(rho_lift)
    else:
        rel = abs(rho_lift - expected) / expected
    classical = _verdict(rho_m, rho_m)
    verdict = decide_stability(E).verdict
    return FloquetReport(rho_transition=rho_m, rho_lifted=rho_lift, relative_error=rel,
                         classical_verdict=classical, analyzer_verdict=verdict)
