"""Switched systems and regenerative switching signals.

A regenerative signal is described here by its cycle law: a `CycleModel`
draws i.i.d. cycles, each a finite list of ``(mode, duration)`` segments.
Batched draws come back as a padded `CycleBatch` so downstream engines can
work on arrays; padding segments have duration zero.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
import math

import numpy as np

from .errors import DimensionError, ModelViolation

CONTINUOUS = "continuous"
DISCRETE = "discrete"
# slack when comparing a sampled cycle length against the declared bound
_RMAX_RTOL = 1e-12


# -- random streams -----------------------------------------------------------

def substream(seed, stream=0):
    """Independent generator for ``(seed, stream)``.

    Streams come from ``SeedSequence(seed, spawn_key=(stream,))``, so each
    pair reproduces the same draws regardless of how many workers run.
    """
    seed = int(seed)
    if not 0 <= seed < 2 ** 64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    ss = np.random.SeedSequence(seed, spawn_key=(int(stream),))
    return np.random.Generator(np.random.PCG64(ss))


# -- systems ------------------------------------------------------------------

class SwitchedSystem:
    """A finite family of real ``n x n`` mode matrices.

    Mode labels are positive integers (``1, 2, ...``). ``time_kind`` is
    ``"continuous"`` for ``dx/dt = A_s x`` and ``"discrete"`` for
    ``x(k+1) = A_s x(k)``.
    """

    def __init__(self, matrices, time_kind=CONTINUOUS):
        if time_kind not in (CONTINUOUS, DISCRETE):
            raise ValueError(f"time_kind must be 'continuous' or 'discrete', got {time_kind!r}")
        if not matrices:
            raise ValueError("a switched system needs at least one mode")
        mats = {}
        n = None
        for label, A in matrices.items():
            label = int(label)
            if label < 1:
                raise ValueError(f"mode labels must be positive integers, got {label}")
            A = np.array(A, dtype=float)
            if A.ndim != 2 or A.shape[0] != A.shape[1]:
                raise DimensionError(f"mode {label}: matrix is not square, shape {A.shape}")
            if n is None:
                n = A.shape[0]
            elif A.shape[0] != n:
                raise DimensionError(f"mode {label}: dimension {A.shape[0]} differs from {n}")
            if not np.all(np.isfinite(A)):
                raise ValueError(f"mode {label}: matrix has non-finite entries")
            A.setflags(write=False)
            mats[label] = A
        self.time_kind = time_kind
        self.matrices = mats
        self.n = n
        self.labels = tuple(sorted(mats))
        # stacked copy with a zero matrix appended for padding segments
        self._stack = np.stack([mats[s] for s in self.labels] + [np.zeros((n, n))])
        self._index = np.full(max(self.labels) + 2, len(self.labels), dtype=np.intp)
        for k, s in enumerate(self.labels):
            self._index[s] = k

    def __repr__(self):
        return f"SwitchedSystem(n={self.n}, modes={list(self.labels)}, time_kind={self.time_kind!r})"

    def __getitem__(self, label):
        return self.matrices[label]

    def stacked(self):
        """Mode matrices as an array; the last slot is a zero matrix."""
        return self._stack

    def mode_index(self, modes):
        """Map an array of mode labels (0 = padding) to rows of `stacked`."""
        modes = np.asarray(modes)
        if modes.size:
            if modes.min() < 0 or modes.max() >= len(self._index):
                bad = modes[(modes < 0) | (modes >= len(self._index))].flat[0]
                raise KeyError(f"unknown mode {bad}")
            unknown = (modes != 0) & (self._index[modes] == len(self.labels))
            if unknown.any():
                raise KeyError(f"unknown mode {modes[unknown].flat[0]}")
        return self._index[modes]


# -- cycles -------------------------------------------------------------------

@dataclass(frozen=True)
class Cycle:
    """One regenerative cycle: segments ``(mode, duration)`` filling ``[0, R)``."""

    segments: tuple
    length: float = None

    def __post_init__(self):
        segs = tuple((int(s), d) for s, d in self.segments)
        if not segs:
            raise ValueError("a cycle needs at least one segment")
        for s, d in segs:
            if not d > 0:
                raise ValueError(f"segment durations must be positive, got {d}")
        object.__setattr__(self, "segments", segs)
        total = math.fsum(d for _, d in segs)
        if self.length is None:
            object.__setattr__(self, "length", total)
        elif not math.isclose(self.length, total, rel_tol=4e-16, abs_tol=0.0):
            raise ValueError(f"segment durations sum to {total}, not R = {self.length}")

    @property
    def modes(self):
        return tuple(s for s, _ in self.segments)

    @property
    def durations(self):
        return tuple(d for _, d in self.segments)

    def is_integer(self):
        return all(float(d).is_integer() for d in self.durations)


@dataclass
class CycleBatch:
    """A stack of cycles padded to a common segment count.

    ``modes`` holds labels with 0 marking padding; padding durations are 0.
    """

    modes: np.ndarray
    durations: np.ndarray
    lengths: np.ndarray

    def __len__(self):
        return len(self.lengths)

    def cycle(self, i):
        keep = self.durations[i] > 0
        segs = zip(self.modes[i][keep].tolist(), self.durations[i][keep].tolist())
        return Cycle(tuple(segs), float(self.lengths[i]))

    @classmethod
    def from_cycles(cls, cycles):
        width = max(len(c.segments) for c in cycles)
        modes = np.zeros((len(cycles), width), dtype=np.int64)
        durs = np.zeros((len(cycles), width))
        for i, c in enumerate(cycles):
            k = len(c.segments)
            modes[i, :k] = c.modes
            durs[i, :k] = c.durations
        return cls(modes, durs, np.array([c.length for c in cycles], dtype=float))


# -- cycle models -------------------------------------------------------------

class CycleModel(ABC):
    """A law of i.i.d. regenerative cycles.

    Subclasses set ``time_kind`` and ``r_max`` (the essential bound on the
    cycle length, ``None`` when unbounded) and implement `sample_batch`.
    """

    time_kind = CONTINUOUS
    r_max = None

    @abstractmethod
    def sample_batch(self, rng, size):
        """Draw ``size`` cycles as a `CycleBatch`."""

    def sample(self, rng):
        return self.sample_batch(rng, 1).cycle(0)

    def support(self):
        """List of ``(probability, Cycle)`` when the law is finitely supported."""
        return None


def draw_cycles(model, rng, size):
    """Sample a batch and enforce the model's declared cycle-length bound."""
    batch = model.sample_batch(rng, size)
    if model.r_max is not None:
        limit = model.r_max * (1 + _RMAX_RTOL)
        over = batch.lengths > limit
        if over.any():
            raise ModelViolation(
                f"A2 violated: sampled cycle length {batch.lengths[over][0]!r} "
                f"exceeds declared bound R_max = {model.r_max!r}")
    if model.time_kind == DISCRETE and not np.all(np.mod(batch.durations, 1) == 0):
        raise ModelViolation("discrete-time cycle has non-integer segment durations")
    return batch


def sample_cycle(model, rng):
    """Draw one cycle, checking it against the declared bound."""
    return draw_cycles(model, rng, 1).cycle(0)


@dataclass(frozen=True)
class MaintenanceModel(CycleModel):
    """Failure-prone controller under jittered periodic maintenance.

    Each cycle starts in the healthy mode, fails after an exponential time
    with rate ``rate`` and stays failed until the next maintenance, which
    happens ``T + jitter`` after the previous one with jitter uniform on
    ``[-delta T, delta T]``. Maintenance always restores the healthy mode.
    """

    T: float
    delta: float = 0.1
    rate: float = 1.0
    healthy_mode: int = 1
    failed_mode: int = 2

    time_kind = CONTINUOUS

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError(f"T must be positive, got {self.T}")
        if not 0 <= self.delta < 1:
            raise ValueError(f"delta must lie in [0, 1), got {self.delta}")
        if not self.rate > 0:
            raise ValueError(f"failure rate must be positive, got {self.rate}")

    @property
    def r_max(self):
        return (1 + self.delta) * self.T

    def cycle_from_draws(self, jitter, failure_time):
        R = self.T + jitter
        h = min(failure_time, R)
        if h >= R:
            return Cycle(((self.healthy_mode, R),), R)
        return Cycle(((self.healthy_mode, h), (self.failed_mode, R - h)), R)

    def sample_batch(self, rng, size):
        jitter = rng.uniform(-self.delta * self.T, self.delta * self.T, size)
        failure = rng.exponential(1.0 / self.rate, size)
        R = self.T + jitter
        h = np.minimum(failure, R)
        modes = np.empty((size, 2), dtype=np.int64)
        modes[:, 0] = self.healthy_mode
        modes[:, 1] = self.failed_mode
        durs = np.stack([h, R - h], axis=1)
        modes[durs[:, 1] == 0, 1] = 0
        return CycleBatch(modes, durs, R)



@dataclass(frozen=True)
class DiscreteMaintenanceModel(CycleModel):
    """Discrete-time counterpart of `MaintenanceModel`.

    Cycle length is ``T + j`` with ``j`` uniform on the integers in
    ``[-floor(delta T), floor(delta T)]``; each step in the healthy mode
    fails independently with probability ``1 - exp(-rate)``.
    """

    T: int
    delta: float = 0.1
    rate: float = 1.0
    healthy_mode: int = 1
    failed_mode: int = 2

    time_kind = DISCRETE

    def __post_init__(self):
        if int(self.T) != self.T or self.T < 1:
            raise ValueError(f"T must be a positive integer, got {self.T}")
        if not 0 <= self.delta < 1:
            raise ValueError(f"delta must lie in [0, 1), got {self.delta}")
        if not self.rate > 0:
            raise ValueError(f"failure rate must be positive, got {self.rate}")

    @property
    def spread(self):
        return int(math.floor(self.delta * self.T))

    @property
    def r_max(self):
        return float(self.T + self.spread)

    @property
    def failure_probability(self):
        return -math.expm1(-self.rate)

    def sample_batch(self, rng, size):
        R = self.T + rng.integers(-self.spread, self.spread, size, endpoint=True)
        healthy_steps = rng.geometric(self.failure_probability, size) - 1
        h = np.minimum(healthy_steps, R)
        modes = np.empty((size, 2), dtype=np.int64)
        modes[:, 0] = self.healthy_mode
        modes[:, 1] = self.failed_mode
        durs = np.stack([h, R - h], axis=1).astype(float)
        # a cycle that fails immediately is all failed mode; shift it left
        first_empty = durs[:, 0] == 0
        modes[first_empty, 0] = self.failed_mode
        durs[first_empty, 0] = durs[first_empty, 1]
        durs[first_empty, 1] = 0
        modes[durs[:, 1] == 0, 1] = 0
        return CycleBatch(modes, durs, R.astype(float))

    def support(self):
        q = self.failure_probability
        out = []
        n_lengths = 2 * self.spread + 1
        for R in range(self.T - self.spread, self.T + self.spread + 1):
            pR = 1.0 / n_lengths
            for k in range(R):
                p = pR * q * (1 - q) ** k
                segs = ((self.healthy_mode, k),) if k else ()
                segs += ((self.failed_mode, R - k),)
                out.append((p, Cycle(segs, float(R))))
            out.append((pR * (1 - q) ** R, Cycle(((self.healthy_mode, R),), float(R))))
        return out



class FiniteSupportModel(CycleModel):
    """Cycles drawn from a finite list with given probabilities."""

    def __init__(self, cycles, probabilities, time_kind=CONTINUOUS):
        cycles = [c if isinstance(c, Cycle) else Cycle(tuple(c)) for c in cycles]
        p = np.asarray(probabilities, dtype=float)
        if len(cycles) != len(p) or not cycles:
            raise ValueError("need one probability per cycle")
        if np.any(p < 0) or not math.isclose(p.sum(), 1.0, abs_tol=1e-12):
            raise ValueError(f"probabilities must be nonnegative and sum to 1, got {p.tolist()}")
        if time_kind == DISCRETE and not all(c.is_integer() for c in cycles):
            raise ValueError("discrete-time cycles need integer durations")
        self.cycles = tuple(cycles)
        self.probabilities = p / p.sum()
        self.time_kind = time_kind
        self.r_max = max(c.length for c in cycles)
        self._table = CycleBatch.from_cycles(self.cycles)

    def __repr__(self):
        return f"FiniteSupportModel({len(self.cycles)} cycles, time_kind={self.time_kind!r})"

    def sample_batch(self, rng, size):
        if len(self.cycles) == 1:
            pick = np.zeros(size, dtype=np.intp)
        else:
            pick = rng.choice(len(self.cycles), size=size, p=self.probabilities)
        t = self._table
        return CycleBatch(t.modes[pick], t.durations[pick], t.lengths[pick])

    def support(self):
        return list(zip(self.probabilities.tolist(), self.cycles))


class PeriodicModel(FiniteSupportModel):
    """Deterministic signal repeating one cycle forever."""

    def __init__(self, cycle, time_kind=CONTINUOUS):
        super().__init__([cycle], [1.0], time_kind=time_kind)

    @property
    def cycle(self):
        return self.cycles[0]


class DelayedSwitchModel(CycleModel):
    """Mode 1 for a uniform time on ``[T, T + 1]``, then mode 2 until ``T + 1``.

    Every cycle has length exactly ``T + 1``.
    """

    def __init__(self, T, first_mode=1, second_mode=2):
        if not T > 0:
            raise ValueError(f"T must be positive, got {T}")
        self.T = float(T)
        self.first_mode = first_mode
        self.second_mode = second_mode
        self.r_max = self.T + 1.0

    def __repr__(self):
        return f"DelayedSwitchModel(T={self.T})"

    def sample_batch(self, rng, size):
        R = self.T + 1.0
        h = rng.uniform(self.T, R, size)
        modes = np.empty((size, 2), dtype=np.int64)
        modes[:, 0] = self.first_mode
        modes[:, 1] = self.second_mode
        durs = np.stack([h, R - h], axis=1)
        modes[durs[:, 1] == 0, 1] = 0
        return CycleBatch(modes, durs, np.full(size, R))


class CallableCycleModel(CycleModel):
    """Adapter for a user sampler ``rng -> Cycle``.

    ``r_max`` must be declared for the stability theorem to apply; pass
    ``None`` for unbounded laws (simulation still works, verdicts are marked
    as outside the theorem's hypotheses).
    """

    def __init__(self, sampler, r_max, time_kind=CONTINUOUS):
        self.sampler = sampler
        self.r_max = r_max
        self.time_kind = time_kind

    def sample_batch(self, rng, size):
        return CycleBatch.from_cycles([self.sampler(rng) for _ in range(size)])


# -- assumption checks -------------------------------------------------------

POSITIVITY_CHECK = "metzler-check"
POSITIVITY_ASSERTED = "user-asserted-positive"
POSITIVITY_NONE = "none"


@dataclass(frozen=True)
class AssumptionCheck:
    name: str
    status: str          # "pass", "fail", "asserted" or "n/a"
    message: str

    @property
    def ok(self):
        return self.status in ("pass", "asserted", "n/a")


@dataclass(frozen=True)
class AssumptionReport:
    checks: tuple = field(default_factory=tuple)

    def __getitem__(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    @property
    def all_ok(self):
        return all(c.ok for c in self.checks)

    def failed(self):
        return [c for c in self.checks if not c.ok]

    def lines(self):
        return [f"{c.name}: {c.status} ({c.message})" for c in self.checks]


def is_metzler(A):
    A = np.asarray(A)
    off = A[~np.eye(A.shape[0], dtype=bool)]
    return bool(np.all(off >= 0))


def check_assumptions(system, model, m, positivity=POSITIVITY_CHECK):
    """Report which stability-theorem hypotheses hold.

    A1: ``m`` even, or the system is positive (Metzler modes in continuous
    time, nonnegative modes in discrete time, or a caller assertion).
    A2: the cycle law declares an essential bound on the cycle length.
    A3: the set of mode matrices is bounded.
    A4 (discrete time only): every mode matrix is invertible.
    """
    if positivity not in (POSITIVITY_CHECK, POSITIVITY_ASSERTED, POSITIVITY_NONE):
        raise ValueError(f"unknown positivity option {positivity!r}")
    checks = []

    if m % 2 == 0:
        checks.append(AssumptionCheck("A1", "pass", f"m = {m} is even"))
    elif positivity == POSITIVITY_ASSERTED:
        checks.append(AssumptionCheck("A1", "asserted", "positivity asserted by the user"))
    else:
        if system.time_kind == CONTINUOUS:
            bad = [s for s in system.labels if not is_metzler(system[s])]
            kind = "Metzler"
        else:
            bad = [s for s in system.labels if np.any(system[s] < 0)]
            kind = "entrywise nonnegative"
        if positivity == POSITIVITY_CHECK and not bad:
            checks.append(AssumptionCheck("A1", "pass", f"m = {m} is odd and every mode is {kind}"))
        else:
            detail = (f"modes {bad} are not {kind}" if bad and positivity == POSITIVITY_CHECK
                      else "positivity was not checked")
            checks.append(AssumptionCheck(
                "A1", "fail",
                f"m = {m} is odd and {detail}; if the system is positive anyway, "
                "assert it (--assert-positive)"))

    r_max = getattr(model, "r_max", None)
    if r_max is None:
        checks.append(AssumptionCheck("A2", "fail", "cycle length has no declared essential bound"))
    elif math.isfinite(r_max):
        checks.append(AssumptionCheck("A2", "pass", f"cycle length bounded by {r_max:.17g}"))
    else:
        checks.append(AssumptionCheck("A2", "fail", "declared cycle length bound is infinite"))

    if all(np.all(np.isfinite(system[s])) for s in system.labels):
        norm = max(np.linalg.norm(system[s], 2) for s in system.labels)
        checks.append(AssumptionCheck("A3", "pass", f"max mode norm {norm:.6g}"))
    else:
        checks.append(AssumptionCheck("A3", "fail", "mode matrix with non-finite entries"))

    if system.time_kind == DISCRETE:
        rconds = {s: 1.0 / np.linalg.cond(system[s], 1) for s in system.labels}
        singular = [s for s, r in rconds.items() if not r > 1e-12]
        if singular:
            checks.append(AssumptionCheck(
                "A4", "fail", f"modes {singular} are singular (reciprocal condition <= 1e-12)"))
        else:
            checks.append(AssumptionCheck(
                "A4", "pass", f"min reciprocal condition {min(rconds.values()):.3g}"))
    else:
        checks.append(AssumptionCheck("A4", "n/a", "continuous time"))

    return AssumptionReport(tuple(checks))
