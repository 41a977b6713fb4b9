"""Finite-state continuous-time Markov chain machinery.

States are labeled 1..N throughout the public API. A chain is described by
its generator matrix (off-diagonal entries are switching rates, rows sum to
zero). The module provides generator validation, transition matrices via the
matrix exponential, exact path simulation with exponential holding times,
skeleton extraction on uniform grids, and the embedded-chain sampler driven
by cumulative-probability inversion.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ._timeutil import num_whole_steps, time_tolerance
from .errors import (
    InvalidRegimeError,
    JumpBudgetError,
    NegativeOffDiagonalError,
    NonSquareError,
    OutOfHorizonError,
    ReducibleError,
    RowSumViolationError,
)

ROW_SUM_TOL = 1e-12

# Pade [6/6] numerator coefficients of exp(x), scaled to integers.
_PADE6 = np.array([665280.0, 332640.0, 75600.0, 10080.0, 840.0, 42.0, 1.0])
_PADE6_THETA = 0.5


@dataclass(frozen=True)
class GeneratorMatrix:
    """Validated CTMC generator: nonnegative off-diagonals, zero row sums."""

    n_states: int
    rates: np.ndarray

    def __post_init__(self):
        self.rates.setflags(write=False)

    def exit_rate(self, i: int) -> float:
        """Rate of leaving state i (nonnegative; 0 for an absorbing state)."""
        return -float(self.rates[i - 1, i - 1])


@dataclass(frozen=True)
class TransitionMatrix:
    """One-step transition probabilities over a time step."""

    step: float
    probs: np.ndarray

    def __post_init__(self):
        probs = self.probs
        if np.any(probs < 0.0) or np.any(probs > 1.0):
            raise ValueError("transition probabilities must lie in [0, 1]")
        if np.max(np.abs(probs.sum(axis=1) - 1.0)) > ROW_SUM_TOL:
            raise ValueError("transition matrix rows must sum to 1")
        probs.setflags(write=False)


@dataclass(frozen=True)
class ChainPath:
    """One right-continuous sample path of the chain on [0, T].

    ``switch_times`` starts at 0 and lists the instants at which the recorded
    state changes; ``states[k]`` holds on [switch_times[k], switch_times[k+1])
    and the final state holds up to and including T.
    """

    horizon: float
    switch_times: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        times, states = self.switch_times, self.states
        if len(times) != len(states) or len(times) == 0:
            raise ValueError("switch_times and states must have equal, nonzero length")
        if times[0] != 0.0:
            raise ValueError("first switch time must be 0")
        if np.any(np.diff(times) <= 0.0):
            raise ValueError("switch times must be strictly increasing")
        if times[-1] >= self.horizon:
            raise ValueError("interior switch times must lie strictly before T")
        if np.any(states[:-1] == states[1:]):
            raise ValueError("consecutive states must differ")
        times.setflags(write=False)
        states.setflags(write=False)

    @property
    def n_segments(self) -> int:
        """Number of constant stretches of the path."""
        return len(self.states)

    def holding_times(self) -> np.ndarray:
        """Durations of the completed stretches (the final one is censored at T)."""
        return np.diff(self.switch_times)

    def to_csv(self, fileobj) -> None:
        """Write `time,state` rows plus a terminal (T, last state) row."""
        fileobj.write("time,state\n")
        for t, s in zip(self.switch_times, self.states):
            fileobj.write(f"{t:.17g},{int(s)}\n")
        fileobj.write(f"{self.horizon:.17g},{int(self.states[-1])}\n")


def validate_generator(rates) -> GeneratorMatrix:
    """Check generator structure and normalize the diagonal exactly.

    Off-diagonals must be nonnegative and each row must sum to zero within
    1e-12; the diagonal is then recomputed as minus the off-diagonal row sum
    so downstream arithmetic sees exact zero row sums.
    """
    mat = np.array(rates, dtype=np.float64)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise NonSquareError(f"rate matrix must be square, got shape {mat.shape}")
    n = mat.shape[0]
    for i in range(n):
        for j in range(n):
            if i != j and mat[i, j] < 0.0:
                raise NegativeOffDiagonalError(i + 1, j + 1, mat[i, j])
        row_sum = mat[i].sum()
        if abs(row_sum) > ROW_SUM_TOL * max(1.0, np.abs(mat[i]).max()):
            raise RowSumViolationError(i + 1, row_sum)
        mat[i, i] = 0.0
        mat[i, i] = -mat[i].sum()
    return GeneratorMatrix(n_states=n, rates=mat)


def generator_from_json(source) -> GeneratorMatrix:
    """Read a generator from JSON ``{"states": N, "rates": [[...], ...]}``."""
    if isinstance(source, (str, bytes)):
        data = json.loads(source)
    elif isinstance(source, dict):
        data = source
    else:
        data = json.load(source)
    rates = data["rates"]
    gen = validate_generator(rates)
    declared = int(data["states"])
    if declared != gen.n_states:
        raise NonSquareError(
            f"declared {declared} states but rate matrix is {gen.n_states}x{gen.n_states}"
        )
    return gen


def matrix_exponential(gen: GeneratorMatrix, t: float) -> TransitionMatrix:
    """Transition matrix exp(rates * t) by scaling and squaring.

    Uses a degree-6 Pade core after scaling the argument below 0.5 in the
    infinity norm, then repeatedly squares. Entries are clamped to [0, 1]
    and rows renormalized, so the result is a stochastic matrix even after
    rounding.
    """
    if t < 0.0:
        raise ValueError("time must be nonnegative")
    n = gen.n_states
    if t == 0.0:
        return TransitionMatrix(step=t, probs=np.eye(n))
    a = gen.rates * t
    norm = np.abs(a).sum(axis=1).max()
    squarings = 0
    if norm > _PADE6_THETA:
        squarings = int(np.ceil(np.log2(norm / _PADE6_THETA)))
        a = a / (2.0 ** squarings)
    ident = np.eye(n)
    a2 = a @ a
    a4 = a2 @ a2
    a6 = a2 @ a4
    b = _PADE6
    odd = a @ (b[1] * ident + b[3] * a2 + b[5] * a4)
    even = b[0] * ident + b[2] * a2 + b[4] * a4 + b[6] * a6
    p = np.linalg.solve(even - odd, even + odd)
    for _ in range(squarings):
        p = p @ p
    p = np.clip(p, 0.0, 1.0)
    p /= p.sum(axis=1, keepdims=True)
    return TransitionMatrix(step=t, probs=p)


def _closed_class_count(rates: np.ndarray) -> int:
    """Number of closed communicating classes of the jump structure."""
    n = rates.shape[0]
    adj = rates > 0.0
    np.fill_diagonal(adj, True)
    reach = adj.copy()
    for _ in range(max(1, int(np.ceil(np.log2(n)))) + 1):
        reach = reach | (reach.astype(np.int64) @ reach.astype(np.int64) > 0)
    comm = reach & reach.T
    seen = np.zeros(n, dtype=bool)
    closed = 0
    for i in range(n):
        if seen[i]:
            continue
        members = comm[i]
        seen |= members
        # closed iff nothing reachable from the class lies outside it
        if not np.any(reach[members] & ~members):
            closed += 1
    return closed


def stationary_distribution(gen: GeneratorMatrix) -> np.ndarray:
    """Probability vector pi with pi @ rates = 0, by direct linear solve.

    Raises ReducibleError when the generator has more than one closed
    communicating class (no unique stationary law).
    """
    if _closed_class_count(gen.rates) > 1:
        raise ReducibleError("generator has multiple closed communicating classes")
    n = gen.n_states
    system = np.vstack([gen.rates.T, np.ones((1, n))])
    rhs = np.zeros(n + 1)
    rhs[-1] = 1.0
    pi, *_ = np.linalg.lstsq(system, rhs, rcond=None)
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def simulate_exact_path(
    gen: GeneratorMatrix,
    initial: int,
    horizon: float,
    rng: np.random.Generator,
    max_switches: int = 10**6,
) -> ChainPath:
    """Simulate one exact chain path on [0, T].

    The hold in state i is log(1 - u) / rates[i, i] with u uniform on [0, 1)
    (an exponential with the state's exit rate); the landing state is chosen
    by comparing a second uniform draw against the cumulative rate fractions
    of the other states, the last positive-rate state absorbing residual
    rounding mass. Absorbing states (zero exit rate) hold forever, so the
    path is truncated at T. Exceeding ``max_switches`` raises
    JumpBudgetError and flags a pathological rate scale.
    """
    if horizon <= 0.0:
        raise ValueError("horizon must be positive")
    n = gen.n_states
    if not 1 <= initial <= n:
        raise InvalidRegimeError(f"initial state {initial} outside 1..{n}")

    # per-state candidate states (1-based) and cumulative jump thresholds
    candidates: list[np.ndarray] = []
    thresholds: list[np.ndarray] = []
    for i in range(n):
        exit_rate = -gen.rates[i, i]
        cand = np.array(
            [j for j in range(n) if j != i and gen.rates[i, j] > 0.0], dtype=np.int64
        )
        candidates.append(cand + 1)
        if exit_rate > 0.0:
            thresholds.append(np.cumsum(gen.rates[i, cand]) / exit_rate)
        else:
            thresholds.append(np.empty(0))

    times = [0.0]
    states = [int(initial)]
    t = 0.0
    state = int(initial)
    while True:
        gii = gen.rates[state - 1, state - 1]
        if gii == 0.0:
            break
        tau = 0.0
        while tau <= 0.0:  # u = 0 would yield a zero hold; redraw
            tau = np.log1p(-rng.random()) / gii
        t = t + tau
        if t >= horizon:
            break
        if len(times) - 1 >= max_switches:
            raise JumpBudgetError(
                f"more than {max_switches} switches before t={horizon}"
            )
        cum = thresholds[state - 1]
        k = int(np.searchsorted(cum, rng.random(), side="right"))
        if k >= len(cum):
            k = len(cum) - 1
        state = int(candidates[state - 1][k])
        times.append(t)
        states.append(state)

    return ChainPath(
        horizon=float(horizon),
        switch_times=np.array(times, dtype=np.float64),
        states=np.array(states, dtype=np.int64),
    )


def state_at(path: ChainPath, t: float) -> int:
    """Right-continuous state value at time t in [0, T]."""
    tol = time_tolerance(path.horizon)
    if t < -tol or t > path.horizon + tol:
        raise OutOfHorizonError(f"t={t} outside [0, {path.horizon}]")
    idx = int(np.searchsorted(path.switch_times, t, side="right")) - 1
    return int(path.states[max(idx, 0)])


def states_at(path: ChainPath, times: np.ndarray) -> np.ndarray:
    """Vectorized right-continuous lookup for sorted or unsorted times."""
    idx = np.searchsorted(path.switch_times, times, side="right") - 1
    return path.states[np.maximum(idx, 0)]


def skeleton_from_path(path: ChainPath, step: float) -> np.ndarray:
    """States read off the exact path at 0, step, 2*step, ... up to T.

    This is how the classical scheme observes the chain; switches that occur
    strictly inside a step are invisible to the result.
    """
    if step <= 0.0:
        raise ValueError("step must be positive")
    n = num_whole_steps(path.horizon, step)
    query = np.minimum(np.arange(n + 1, dtype=np.float64) * step, path.horizon)
    return states_at(path, query)


def embedded_chain_sample(
    pmat: TransitionMatrix,
    initial: int,
    steps: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Sample a discrete chain of ``steps`` transitions from P.

    Each transition compares one uniform draw against the cumulative row
    sums of P; the final state N absorbs the residual mass. Returns the
    sequence including the initial state (length steps + 1).
    """
    n = pmat.probs.shape[0]
    if not 1 <= initial <= n:
        raise InvalidRegimeError(f"initial state {initial} outside 1..{n}")
    if steps < 0:
        raise ValueError("steps must be nonnegative")
    cum = np.cumsum(pmat.probs, axis=1)
    out = np.empty(steps + 1, dtype=np.int64)
    out[0] = initial
    state = int(initial)
    for k in range(steps):
        u = rng.random()
        state = int(np.searchsorted(cum[state - 1, : n - 1], u, side="right")) + 1
        out[k + 1] = state
    return out
