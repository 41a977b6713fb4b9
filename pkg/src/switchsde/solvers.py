"""Euler-Maruyama schemes for hybrid SDEs and their continuous interpolants.

Two discretizations of the same equation:

* the classical scheme steps on a uniform grid and freezes both the state
  argument and the regime at the left gridpoint, observing the chain only
  through its uniform-grid skeleton;
* the switch-adapted scheme refines every uniform interval at the chain's
  actual switching times. Within an interval the state argument of the
  coefficients stays frozen at the last gridpoint value, but the regime
  argument follows the chain, so no switch is ever misattributed.

Both schemes consume pre-generated chain and Brownian paths and never draw
randomness, which is what makes coupled-error measurement possible. Each
returned SolutionPath carries its per-segment coefficients so the continuous
interpolant can be evaluated anywhere the Brownian path is realized, exactly
reproducing the discrete values at the solver's own event times.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._timeutil import match_indices, time_tolerance, uniform_points
from .brownian import BrownianPath
from .ctmc import ChainPath, states_at
from .errors import (
    ConfigError,
    GridMismatchError,
    LengthMismatchError,
    NonFiniteError,
    RegimeNotConstantError,
    TimeNotRealizedError,
)
from .model import HybridModel, LinearHybridModel

JUMP_ADAPTED = "jump-adapted"
CLASSICAL = "classical"
EXACT_LINEAR = "exact-linear"


@dataclass(frozen=True)
class RefinedGrid:
    """Event times for the switch-adapted scheme on one chain path.

    ``events`` holds every uniform gridpoint up to T, every interior
    switching time, and T itself, sorted and deduplicated. ``regimes[i]`` is
    the chain state on [events[i], events[i+1]); ``owner_interval[i]`` is the
    index k of the uniform interval [k*step, (k+1)*step) containing the
    event.
    """

    step: float
    horizon: float
    events: np.ndarray
    regimes: np.ndarray
    owner_interval: np.ndarray

    def __post_init__(self):
        self.events.setflags(write=False)
        self.regimes.setflags(write=False)
        self.owner_interval.setflags(write=False)

    def __len__(self) -> int:
        return len(self.events)


@dataclass(frozen=True)
class SolutionPath:
    """A discrete solution with enough segment data to interpolate it.

    ``values[k]`` approximates the state at ``times[k]``. For solver outputs
    the per-segment arrays record the frozen coefficient arguments actually
    used on [times[i], times[i+1]), which lets the continuous version of the
    scheme be evaluated off-grid; oracle paths carry no segment data.
    """

    times: np.ndarray
    values: np.ndarray
    scheme_tag: str
    step: float | None = None
    seg_drift: np.ndarray | None = None
    seg_diff: np.ndarray | None = None
    seg_frozen: np.ndarray | None = None

    def __post_init__(self):
        if self.values.shape[0] != len(self.times):
            raise ValueError("one value row per time required")
        for arr in (self.times, self.values, self.seg_drift, self.seg_diff, self.seg_frozen):
            if arr is not None:
                arr.setflags(write=False)

    @property
    def state_dim(self) -> int:
        return self.values.shape[1]

    def to_csv(self, fileobj) -> None:
        header = ",".join(["time"] + [f"z_{j + 1}" for j in range(self.state_dim)])
        fileobj.write(header + "\n")
        for t, row in zip(self.times, self.values):
            cells = ",".join(f"{v:.17g}" for v in row)
            fileobj.write(f"{t:.17g},{cells}\n")


def build_refined_grid(path: ChainPath, step: float, horizon: float | None = None) -> RefinedGrid:
    """Merge uniform gridpoints with the path's switching times.

    A switch landing within tolerance of a gridpoint is represented by the
    gridpoint alone (the regime there is already the post-switch state by
    right continuity). The event count never exceeds
    floor(T / step) + segments + 1.
    """
    horizon = path.horizon if horizon is None else float(horizon)
    if not 0.0 < step <= horizon:
        raise ConfigError(f"step must lie in (0, T], got {step}")
    tol = time_tolerance(horizon)
    multiples = uniform_points(horizon, step, include_horizon=False)
    base = multiples if abs(multiples[-1] - horizon) <= tol else np.append(multiples, horizon)

    switches = path.switch_times[1:]
    switches = switches[(switches > tol) & (switches < horizon - tol)]
    if len(switches):
        switches = switches[match_indices(base, switches, tol) < 0]
    if len(switches) > 1:  # collapse switches closer than the grid tolerance
        switches = switches[np.concatenate([[True], np.diff(switches) > tol])]
    events = np.sort(np.concatenate([base, switches]))

    regimes = states_at(path, events)
    owners = np.searchsorted(multiples, events, side="right") - 1
    return RefinedGrid(
        step=float(step),
        horizon=horizon,
        events=events,
        regimes=regimes.astype(np.int64),
        owner_interval=owners.astype(np.int64),
    )


def _event_values(bm: BrownianPath, times: np.ndarray, horizon: float) -> np.ndarray:
    idx = match_indices(bm.grid.points, times, time_tolerance(horizon))
    if np.any(idx < 0):
        missing = times[idx < 0][0]
        raise GridMismatchError(f"Brownian path lacks a value at t={missing}")
    return bm.values[idx]


def em_jump_adapted(model: HybridModel, grid: RefinedGrid, bm: BrownianPath) -> SolutionPath:
    """Run the switch-adapted Euler scheme over the refined events.

    The coefficients are evaluated at the frozen state (the value at the
    last uniform gridpoint) and the current regime; the frozen state
    advances only when an event crosses into the next uniform interval.
    The Brownian path may live on any grid containing every event.
    """
    bvals = _event_values(bm, grid.events, grid.horizon)
    ne = len(grid.events)
    ev = grid.events.tolist()
    reg = grid.regimes.tolist()
    own = grid.owner_interval.tolist()

    if model.is_scalar:
        drift, diffusion = model.drift, model.diffusion
        b = bvals[:, 0].tolist()
        z = float(model.initial_value[0])
        frozen = z
        vals = [z]
        seg_f, seg_g, seg_z = [], [], []
        for i in range(ne - 1):
            dt = ev[i + 1] - ev[i]
            db = b[i + 1] - b[i]
            f = drift(frozen, reg[i])
            g = diffusion(frozen, reg[i])
            z = z + f * dt + g * db
            vals.append(z)
            seg_f.append(f)
            seg_g.append(g)
            seg_z.append(frozen)
            if own[i + 1] != own[i]:
                frozen = z
        values = np.asarray(vals, dtype=np.float64).reshape(-1, 1)
        seg_drift = np.asarray(seg_f, dtype=np.float64).reshape(-1, 1)
        seg_diff = np.asarray(seg_g, dtype=np.float64).reshape(-1, 1, 1)
        seg_frozen = np.asarray(seg_z, dtype=np.float64).reshape(-1, 1)
    else:
        z = model.initial_value.copy()
        frozen = z
        values = np.empty((ne, model.state_dim))
        values[0] = z
        seg_drift = np.empty((ne - 1, model.state_dim))
        seg_diff = np.empty((ne - 1, model.state_dim, model.noise_dim))
        seg_frozen = np.empty((ne - 1, model.state_dim))
        for i in range(ne - 1):
            dt = ev[i + 1] - ev[i]
            db = bvals[i + 1] - bvals[i]
            f = np.asarray(model.drift(frozen, reg[i]), dtype=np.float64)
            g = np.asarray(model.diffusion(frozen, reg[i]), dtype=np.float64).reshape(
                model.state_dim, model.noise_dim
            )
            z = z + f * dt + g @ db
            values[i + 1] = z
            seg_drift[i] = f
            seg_diff[i] = g
            seg_frozen[i] = frozen
            if own[i + 1] != own[i]:
                frozen = z

    if not np.all(np.isfinite(values)):
        raise NonFiniteError("scheme produced non-finite values")
    return SolutionPath(
        times=grid.events,
        values=values,
        scheme_tag=JUMP_ADAPTED,
        step=grid.step,
        seg_drift=seg_drift,
        seg_diff=seg_diff,
        seg_frozen=seg_frozen,
    )


def em_classical(model: HybridModel, skeleton, step: float, bm: BrownianPath) -> SolutionPath:
    """Run the classical Euler scheme on the uniform grid of ``bm``.

    ``skeleton[k]`` is the regime frozen over the k-th step; its length must
    equal the step count (or exceed it by one when it also records the state
    at T).
    """
    pts = bm.grid.points
    m = len(pts) - 1
    skeleton = np.asarray(skeleton, dtype=np.int64)
    if len(skeleton) not in (m, m + 1):
        raise LengthMismatchError(
            f"skeleton has {len(skeleton)} states for {m} steps"
        )
    ev = pts.tolist()
    reg = skeleton.tolist()

    if model.is_scalar:
        drift, diffusion = model.drift, model.diffusion
        b = bm.values[:, 0].tolist()
        z = float(model.initial_value[0])
        vals = [z]
        seg_f, seg_g, seg_z = [], [], []
        for i in range(m):
            dt = ev[i + 1] - ev[i]
            db = b[i + 1] - b[i]
            f = drift(z, reg[i])
            g = diffusion(z, reg[i])
            seg_f.append(f)
            seg_g.append(g)
            seg_z.append(z)
            z = z + f * dt + g * db
            vals.append(z)
        values = np.asarray(vals, dtype=np.float64).reshape(-1, 1)
        seg_drift = np.asarray(seg_f, dtype=np.float64).reshape(-1, 1)
        seg_diff = np.asarray(seg_g, dtype=np.float64).reshape(-1, 1, 1)
        seg_frozen = np.asarray(seg_z, dtype=np.float64).reshape(-1, 1)
    else:
        z = model.initial_value.copy()
        values = np.empty((m + 1, model.state_dim))
        values[0] = z
        seg_drift = np.empty((m, model.state_dim))
        seg_diff = np.empty((m, model.state_dim, model.noise_dim))
        seg_frozen = np.empty((m, model.state_dim))
        for i in range(m):
            dt = ev[i + 1] - ev[i]
            db = bm.values[i + 1] - bm.values[i]
            f = np.asarray(model.drift(z, reg[i]), dtype=np.float64)
            g = np.asarray(model.diffusion(z, reg[i]), dtype=np.float64).reshape(
                model.state_dim, model.noise_dim
            )
            seg_drift[i] = f
            seg_diff[i] = g
            seg_frozen[i] = z
            z = z + f * dt + g @ db
            values[i + 1] = z

    if not np.all(np.isfinite(values)):
        raise NonFiniteError("scheme produced non-finite values")
    return SolutionPath(
        times=pts,
        values=values,
        scheme_tag=CLASSICAL,
        step=float(step),
        seg_drift=seg_drift,
        seg_diff=seg_diff,
        seg_frozen=seg_frozen,
    )


def _segment_index(times: np.ndarray, query: np.ndarray) -> np.ndarray:
    idx = np.searchsorted(times, query, side="right") - 1
    return np.clip(idx, 0, len(times) - 2)


def evaluate_path(solution: SolutionPath, bm: BrownianPath, times) -> np.ndarray:
    """Continuous-scheme values at arbitrary realized times, vectorized.

    For t in [times[i], times[i+1]) the value is the segment's left value
    plus its frozen drift times the elapsed time plus its frozen diffusion
    applied to the Brownian displacement. Requires solver segment data and
    B realized at every queried time.
    """
    if solution.seg_drift is None:
        raise ValueError("solution carries no segment data; use interpolant_eval")
    query = np.atleast_1d(np.asarray(times, dtype=np.float64))
    tol = time_tolerance(float(bm.grid.horizon))
    q_idx = match_indices(bm.grid.points, query, tol)
    if np.any(q_idx < 0):
        raise TimeNotRealizedError(f"no Brownian value at t={query[q_idx < 0][0]}")
    ev_idx = match_indices(bm.grid.points, solution.times, tol)
    if np.any(ev_idx < 0):
        raise TimeNotRealizedError("Brownian path does not cover the solution grid")
    seg = _segment_index(solution.times, query)
    dt = query - solution.times[seg]
    db = bm.values[q_idx] - bm.values[ev_idx[seg]]
    return (
        solution.values[seg]
        + solution.seg_drift[seg] * dt[:, None]
        + np.einsum("qnd,qd->qn", solution.seg_diff[seg], db)
    )


def frozen_at(solution: SolutionPath, times) -> np.ndarray:
    """Piecewise-constant frozen argument of the scheme at times strictly below T."""
    if solution.seg_frozen is None:
        raise ValueError("solution carries no segment data")
    query = np.atleast_1d(np.asarray(times, dtype=np.float64))
    return solution.seg_frozen[_segment_index(solution.times, query)]


def interpolant_eval(
    discrete: SolutionPath,
    model: HybridModel,
    path: ChainPath,
    bm: BrownianPath,
    t: float,
) -> np.ndarray:
    """Continuous-scheme value at a single time t in [0, T].

    At the solver's own event times the result equals the discrete value
    exactly (the drift and diffusion terms contribute exact zeros). Solutions
    without stored segment data are reconstructed from the model, the chain
    path, and the recorded uniform step.
    """
    if discrete.seg_drift is not None:
        return evaluate_path(discrete, bm, [t])[0]

    from .model import diffusion_eval, drift_eval  # local to avoid cycle at import

    if discrete.step is None:
        raise ValueError("solution has neither segment data nor a recorded step")
    horizon = float(discrete.times[-1])
    tol = time_tolerance(horizon)
    q_idx = match_indices(bm.grid.points, np.array([t]), tol)[0]
    if q_idx < 0:
        raise TimeNotRealizedError(f"no Brownian value at t={t}")
    seg = int(_segment_index(discrete.times, np.array([t]))[0])
    left = float(discrete.times[seg])
    multiples = uniform_points(horizon, discrete.step, include_horizon=False)
    owner = int(np.searchsorted(multiples, left, side="right")) - 1
    grid_idx = match_indices(discrete.times, np.array([multiples[owner]]), tol)[0]
    if grid_idx < 0:
        raise GridMismatchError("owner gridpoint missing from solution times")
    frozen = discrete.values[grid_idx]
    regime = states_at(path, np.array([left]))[0]
    f = drift_eval(model, frozen, int(regime))
    g = diffusion_eval(model, frozen, int(regime))
    left_idx = match_indices(bm.grid.points, np.array([left]), tol)[0]
    if left_idx < 0:
        raise TimeNotRealizedError(f"no Brownian value at segment start {left}")
    db = bm.values[q_idx] - bm.values[left_idx]
    return discrete.values[seg] + f * (t - left) + g @ db


def exact_linear_solution(
    model: LinearHybridModel, path: ChainPath, bm: BrownianPath
) -> SolutionPath:
    """Conditional closed-form solution of the linear model on the path grid.

    Over each grid interval with constant regime i the solution multiplies by
    exp((a_i - b_i^2 / 2) dt + b_i dB); the grid must therefore refine the
    switching times. Serves as the strong-error reference.
    """
    if not isinstance(model, LinearHybridModel):
        raise ConfigError("closed-form reference exists only for the linear model")
    pts = bm.grid.points
    tol = time_tolerance(float(pts[-1]))
    sw = path.switch_times[1:]
    inside_lo = np.searchsorted(sw, pts[:-1] + tol)
    inside_hi = np.searchsorted(sw, pts[1:] - tol)
    if np.any(inside_hi > inside_lo):
        k = int(np.argmax(inside_hi > inside_lo))
        raise RegimeNotConstantError(
            f"interval [{pts[k]}, {pts[k + 1]}] straddles a regime switch"
        )
    reg = states_at(path, pts[:-1])
    a = model.a[reg - 1]
    b = model.b[reg - 1]
    dt = np.diff(pts)
    db = np.diff(bm.values[:, 0])
    log_steps = (a - 0.5 * b * b) * dt + b * db
    log_path = np.concatenate([[0.0], np.cumsum(log_steps)])
    z0 = float(model.initial_value[0])
    values = (z0 * np.exp(log_path)).reshape(-1, 1)
    return SolutionPath(times=pts, values=values, scheme_tag=EXACT_LINEAR)
