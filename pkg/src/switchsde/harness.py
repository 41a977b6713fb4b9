"""Monte Carlo measurement of strong convergence for the hybrid EM schemes.

The estimation design couples everything through shared randomness: for each
sample index m a dedicated random stream (derived from the master seed and m
by a fixed, documented mixing rule) first draws one exact chain path, then
one Brownian path on the union grid containing the finest uniform gridpoints,
every coarser gridpoint, all switching times, and the reference grid. Every
scheme at every step size, and the reference solution itself, consume
aggregations of that single realization, so the measured error is pure
discretization error.

Per step size the root-L^p sup-error

    eps(delta) = ( mean_m sup_t |z(t) - Z(t)|^p )^(1/p)

is reported with a delta-method standard error, and the convergence order is
the least-squares slope of log2 eps against log2 delta. Results are
bit-identical regardless of worker-thread count: samples land in an indexed
buffer and the reduction runs in index order.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.stats

from .brownian import (
    TimeGrid,
    aggregate_increments,
    generate_increments,
    make_grid,
    merge_grids,
    uniform_grid,
)
from .ctmc import (
    ChainPath,
    GeneratorMatrix,
    matrix_exponential,
    simulate_exact_path,
    skeleton_from_path,
    stationary_distribution,
)
from .errors import ConfigError, DegenerateFitError, NonPositiveErrorValues
from .model import HybridModel, model_from_config
from .solvers import (
    CLASSICAL,
    JUMP_ADAPTED,
    SolutionPath,
    build_refined_grid,
    em_classical,
    em_jump_adapted,
    evaluate_path,
    exact_linear_solution,
    frozen_at,
)
from ._timeutil import match_indices, num_whole_steps, time_tolerance

REFERENCE_CLOSED_FORM = "closed-form"
REFERENCE_FINE_EM = "fine-em"

_DEFAULT_DELTAS = tuple(2.0 ** -k for k in range(4, 10))


def derive_stream(master_seed: int, index: int) -> np.random.Generator:
    """Per-task random stream: default_rng over SeedSequence(seed, spawn_key=(index,)).

    The mixing is numpy's stable SeedSequence hash, so (seed, index) pairs
    give reproducible, statistically independent streams that are safe to
    consume in parallel.
    """
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(index,)))


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a strong-error experiment needs.

    ``deltas`` must be a descending dyadic ladder (every entry a power-of-two
    multiple of the smallest); moment orders must be at least 2; ``samples``
    at least 2. The reference is the closed form when the model has one, or
    a fine jump-adapted run ``2**ref_refinement`` times finer than the
    smallest step.
    """

    model: HybridModel
    generator: GeneratorMatrix
    horizon: float
    p_values: tuple = (2,)
    deltas: tuple = _DEFAULT_DELTAS
    samples: int = 1000
    seed: int = 0
    reference: str = REFERENCE_CLOSED_FORM
    ref_refinement: int = 6
    schemes: tuple = (JUMP_ADAPTED,)

    def __post_init__(self):
        if self.horizon <= 0:
            raise ConfigError("horizon must be positive")
        if self.samples < 2:
            raise ConfigError("need at least 2 samples")
        if not self.p_values or any(p < 2 for p in self.p_values):
            raise ConfigError("moment orders must all be at least 2")
        if not self.deltas:
            raise ConfigError("empty step ladder")
        deltas = tuple(float(d) for d in self.deltas)
        if any(d <= 0 or d > self.horizon for d in deltas):
            raise ConfigError("steps must lie in (0, T]")
        if any(a <= b for a, b in zip(deltas, deltas[1:])):
            raise ConfigError("step ladder must be strictly descending")
        smallest = deltas[-1]
        for d in deltas:
            k = round(np.log2(d / smallest))
            if k < 0 or abs(d - smallest * 2.0 ** k) > 1e-12 * d:
                raise ConfigError(
                    f"step {d} is not a power-of-two multiple of {smallest}: "
                    "the ladder must be dyadic"
                )
        unknown = set(self.schemes) - {JUMP_ADAPTED, CLASSICAL}
        if unknown or not self.schemes:
            raise ConfigError(f"unknown schemes {sorted(unknown)}")
        if self.reference not in (REFERENCE_CLOSED_FORM, REFERENCE_FINE_EM):
            raise ConfigError(f"unknown reference mode {self.reference!r}")
        if self.reference == REFERENCE_CLOSED_FORM and not self.model.has_closed_form():
            raise ConfigError("closed-form reference requested for a model without one")
        if self.reference == REFERENCE_FINE_EM and self.ref_refinement < 1:
            raise ConfigError("refinement exponent must be at least 1")
        if self.model.regime_count != self.generator.n_states:
            raise ConfigError(
                f"model has {self.model.regime_count} regimes but the generator "
                f"has {self.generator.n_states} states"
            )

    @property
    def finest_step(self) -> float:
        return float(self.deltas[-1])

    @property
    def reference_step(self) -> float:
        if self.reference == REFERENCE_FINE_EM:
            return self.finest_step / 2.0 ** self.ref_refinement
        return self.finest_step


def config_from_dict(data: dict) -> ExperimentConfig:
    """Build an ExperimentConfig from a parsed JSON experiment description."""
    from .ctmc import generator_from_json

    try:
        gen = generator_from_json(data["generator"])
        model = model_from_config(data["model"], initial_regime=int(data.get("initial_regime", 1)))
        cfg = ExperimentConfig(
            model=model,
            generator=gen,
            horizon=float(data.get("horizon", 1.0)),
            p_values=tuple(int(p) for p in data.get("p", [2])),
            deltas=tuple(float(d) for d in data.get("deltas", _DEFAULT_DELTAS)),
            samples=int(data.get("samples", 1000)),
            seed=int(data.get("seed", 0)),
            reference=data.get("reference", REFERENCE_CLOSED_FORM
                               if model.has_closed_form() else REFERENCE_FINE_EM),
            ref_refinement=int(data.get("refinement_exponent", 6)),
            schemes=tuple(data.get("schemes", [JUMP_ADAPTED])),
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid experiment config: {exc}") from exc
    return cfg


@dataclass(frozen=True)
class ErrorPoint:
    scheme: str
    p: int
    delta: float
    eps: float
    stderr: float
    samples: int


@dataclass(frozen=True)
class OrderFit:
    scheme: str
    p: int
    slope: float
    intercept: float
    r2: float


@dataclass(frozen=True)
class ErrorReport:
    """Per-step errors and fitted convergence orders of one experiment."""

    points: tuple
    fits: tuple

    def points_for(self, scheme: str, p: int) -> list:
        return [pt for pt in self.points if pt.scheme == scheme and pt.p == p]

    def fit_for(self, scheme: str, p: int) -> OrderFit | None:
        for f in self.fits:
            if f.scheme == scheme and f.p == p:
                return f
        return None

    def write_errors_csv(self, fileobj) -> None:
        fileobj.write("scheme,p,delta,eps,stderr,M\n")
        for pt in self.points:
            fileobj.write(
                f"{pt.scheme},{pt.p},{pt.delta:.17g},{pt.eps:.17g},"
                f"{pt.stderr:.17g},{pt.samples}\n"
            )

    def write_fit_csv(self, fileobj) -> None:
        fileobj.write("scheme,p,slope,intercept,r2\n")
        for f in self.fits:
            fileobj.write(
                f"{f.scheme},{f.p},{f.slope:.17g},{f.intercept:.17g},{f.r2:.17g}\n"
            )


def estimate_order(errors) -> tuple:
    """Least-squares fit of log2(eps) = slope * log2(delta) + intercept.

    Returns (slope, intercept, r2). Rejects non-positive errors and ladders
    with fewer than two distinct step sizes. Flat data fits exactly, so its
    r2 is reported as 1.
    """
    pts = [(float(d), float(e)) for d, e in errors]
    if any(e <= 0.0 for _, e in pts):
        raise NonPositiveErrorValues("all error values must be positive")
    if len(pts) < 2 or len({d for d, _ in pts}) < 2:
        raise DegenerateFitError("need at least two distinct step sizes")
    x = np.log2([d for d, _ in pts])
    y = np.log2([e for _, e in pts])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_res = float(np.sum(resid**2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return float(slope), float(intercept), float(r2)


def _switch_grid(chain: ChainPath) -> TimeGrid:
    return make_grid(np.append(chain.switch_times, chain.horizon))


def _coupled_sample(config: ExperimentConfig, index: int, fine_step: float):
    """Chain path and Brownian path on the union grid for one sample index."""
    rng = derive_stream(config.seed, index)
    chain = simulate_exact_path(
        config.generator, config.model.initial_regime, config.horizon, rng
    )
    union = merge_grids(uniform_grid(config.horizon, fine_step), _switch_grid(chain))
    bm = generate_increments(union, config.model.noise_dim, rng)
    return chain, union, bm


def _reference_values(config: ExperimentConfig, chain, union, bm) -> np.ndarray:
    """Reference solution evaluated at every union-grid point."""
    if config.reference == REFERENCE_CLOSED_FORM:
        return exact_linear_solution(config.model, chain, bm).values
    grid = build_refined_grid(chain, config.reference_step, config.horizon)
    sol = em_jump_adapted(config.model, grid, bm)
    idx = match_indices(sol.times, union.points, time_tolerance(config.horizon))
    return sol.values[idx]


def _scheme_solution(config, scheme, delta, chain, bm) -> SolutionPath:
    if scheme == JUMP_ADAPTED:
        grid = build_refined_grid(chain, delta, config.horizon)
        return em_jump_adapted(config.model, grid, bm)
    ug = uniform_grid(config.horizon, delta)
    skeleton = skeleton_from_path(chain, delta)
    return em_classical(config.model, skeleton, delta, aggregate_increments(bm, ug))


def _sample_sup_errors(config: ExperimentConfig, index: int) -> dict:
    """sup_t |z - Z| over the union grid, per (scheme, delta), for one sample."""
    chain, union, bm = _coupled_sample(config, index, config.reference_step)
    ref = _reference_values(config, chain, union, bm)
    out = {}
    for delta in config.deltas:
        for scheme in config.schemes:
            sol = _scheme_solution(config, scheme, delta, chain, bm)
            approx = evaluate_path(sol, bm, union.points)
            gap = np.linalg.norm(ref - approx, axis=1)
            out[(scheme, delta)] = float(gap.max())
    return out


def _run_indexed(task, count: int, threads: int) -> list:
    """Evaluate task(i) for i in range(count) into an index-ordered buffer."""
    if threads <= 1:
        return [task(i) for i in range(count)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(task, range(count)))


def run_strong_error(config: ExperimentConfig, threads: int = 1) -> ErrorReport:
    """Estimate root-L^p sup-errors across the step ladder and fit the order.

    One coupled (chain, Brownian) realization per sample drives every scheme
    and step size as well as the reference, so differences are discretization
    error only. Step sizes whose estimate is exactly zero (schemes that are
    exact for the model) are reported but excluded from order fitting.
    """
    results = _run_indexed(lambda m: _sample_sup_errors(config, m), config.samples, threads)
    points = []
    fits = []
    m = config.samples
    for scheme in config.schemes:
        for p in config.p_values:
            ladder = []
            for delta in config.deltas:
                sups = np.array([results[k][(scheme, delta)] for k in range(m)])
                powered = sups**p
                mean_p = float(powered.mean())
                eps = mean_p ** (1.0 / p)
                if eps > 0.0:
                    sd = float(powered.std(ddof=1))
                    stderr = eps ** (1 - p) * sd / (p * np.sqrt(m))
                else:
                    stderr = 0.0
                points.append(ErrorPoint(scheme, p, delta, eps, float(stderr), m))
                ladder.append((delta, eps))
            if all(e > 0 for _, e in ladder) and len(ladder) >= 2:
                slope, intercept, r2 = estimate_order(ladder)
                fits.append(OrderFit(scheme, p, slope, intercept, r2))
    return ErrorReport(points=tuple(points), fits=tuple(fits))


def summary_text(report: ErrorReport) -> str:
    lines = ["strong-error summary", "===================="]
    for f in report.fits:
        lines.append(
            f"{f.scheme} p={f.p}: fitted order {f.slope:.4f} "
            f"(intercept {f.intercept:.4f}, r2 {f.r2:.6f})"
        )
    if not report.fits:
        lines.append("no order fits (zero or insufficient error data)")
    lines.append("")
    lines.append("scheme, p, delta, eps, stderr")
    for pt in report.points:
        lines.append(
            f"{pt.scheme}, {pt.p}, {pt.delta:.6g}, {pt.eps:.8g}, {pt.stderr:.4g}"
        )
    return "\n".join(lines) + "\n"


# --- moment stability -------------------------------------------------------


@dataclass(frozen=True)
class MomentPoint:
    p: int
    delta: float
    sup_moment: float


@dataclass(frozen=True)
class MomentReport:
    """Empirical E sup_t |Z(t)|^p across the step ladder."""

    points: tuple
    growth_flag_factor: float

    def points_for(self, p: int) -> list:
        return [pt for pt in self.points if pt.p == p]

    def max_ratio(self, p: int) -> float:
        vals = [pt.sup_moment for pt in self.points_for(p)]
        return max(vals) / min(vals)

    def all_finite(self) -> bool:
        return all(np.isfinite(pt.sup_moment) for pt in self.points)

    def flagged(self) -> list:
        """(p, ratio) pairs whose across-ladder variation exceeds the factor."""
        out = []
        for p in sorted({pt.p for pt in self.points}):
            ratio = self.max_ratio(p)
            if not np.isfinite(ratio) or ratio > self.growth_flag_factor:
                out.append((p, ratio))
        return out


def moment_check(config: ExperimentConfig, threads: int = 1,
                 growth_flag_factor: float = 2.0) -> MomentReport:
    """Estimate E sup_t |Z(t)|^p for the switch-adapted scheme across the ladder.

    Uses the same coupling as the error run, so across-ladder variation
    reflects discretization alone. Ratios beyond ``growth_flag_factor`` are
    reported by ``flagged()``.
    """

    def one(index: int) -> dict:
        chain, _, bm = _coupled_sample(config, index, config.finest_step)
        out = {}
        for delta in config.deltas:
            grid = build_refined_grid(chain, delta, config.horizon)
            sol = em_jump_adapted(config.model, grid, bm)
            out[delta] = float(np.linalg.norm(sol.values, axis=1).max())
        return out

    results = _run_indexed(one, config.samples, threads)
    points = []
    for p in config.p_values:
        for delta in config.deltas:
            sups = np.array([results[k][delta] for k in range(config.samples)])
            points.append(MomentPoint(p, delta, float(np.mean(sups**p))))
    return MomentReport(points=tuple(points), growth_flag_factor=growth_flag_factor)


# --- local (one-step) error scaling -----------------------------------------


@dataclass(frozen=True)
class LocalErrorPoint:
    p: int
    delta: float
    max_moment: float


@dataclass(frozen=True)
class LocalErrorReport:
    """Midpoint-measured sup_t E|Z(t) - frozen(t)|^p and its log-log slope."""

    points: tuple
    slopes: dict

    def points_for(self, p: int) -> list:
        return [pt for pt in self.points if pt.p == p]


def _piecewise_cumulants(sol: SolutionPath):
    """Cumulative drift integral and diffusion quadratic variation of the scheme.

    Returns evaluators F(t) = integral of the frozen drift and Q(t) =
    integral of the squared frozen diffusion over [0, t]; both are exact
    piecewise-linear functions of t for the frozen-coefficient scheme.
    """
    events = sol.times
    dt_seg = np.diff(events)
    q_seg = np.einsum("ind,ind->i", sol.seg_diff, sol.seg_diff)
    cum_f = np.vstack([np.zeros((1, sol.state_dim)),
                       np.cumsum(sol.seg_drift * dt_seg[:, None], axis=0)])
    cum_q = np.concatenate([[0.0], np.cumsum(q_seg * dt_seg)])

    def at(times: np.ndarray):
        seg = np.clip(np.searchsorted(events, times, side="right") - 1, 0, len(events) - 2)
        off = times - events[seg]
        return (
            cum_f[seg] + sol.seg_drift[seg] * off[:, None],
            cum_q[seg] + q_seg[seg] * off,
        )

    return at


def local_error_scaling(config: ExperimentConfig, threads: int = 1) -> LocalErrorReport:
    """Measure the gap between the continuous scheme and its frozen argument.

    At the midpoint m of a uniform interval starting at t_k, the scheme has
    moved away from the frozen value Z_k by the accumulated drift A plus a
    centered Gaussian with variance Q (the integrated squared diffusion),
    both known exactly given the chain and the path up to t_k. The per-cell
    moment E|Z(m) - Z_k|^p is therefore averaged with the Gaussian part
    integrated out analytically (|A|^2 + Q for p = 2; the matching Gaussian
    moment formula for p = 4), which removes the one-draw noise that would
    otherwise swamp the max over midpoints. The maximum over midpoints of
    the cell means should scale like delta^(p/2).
    """
    if any(p not in (2, 4) for p in config.p_values):
        raise ConfigError("local-error scaling supports moment orders 2 and 4")
    if config.model.state_dim != 1 and any(p == 4 for p in config.p_values):
        raise ConfigError("order-4 local error requires a scalar model")
    midpoints = {}
    starts = {}
    for delta in config.deltas:
        n_int = num_whole_steps(config.horizon, delta)
        if abs(n_int * delta - config.horizon) > time_tolerance(config.horizon):
            n_int = min(n_int, int(config.horizon / delta))
        starts[delta] = np.arange(n_int, dtype=np.float64) * delta
        midpoints[delta] = starts[delta] + 0.5 * delta

    def one(index: int) -> dict:
        chain, _, bm = _coupled_sample(config, index, config.finest_step)
        out = {}
        for delta in config.deltas:
            grid = build_refined_grid(chain, delta, config.horizon)
            sol = em_jump_adapted(config.model, grid, bm)
            at = _piecewise_cumulants(sol)
            f_lo, q_lo = at(starts[delta])
            f_hi, q_hi = at(midpoints[delta])
            drift2 = np.sum((f_hi - f_lo) ** 2, axis=1)
            var = q_hi - q_lo
            cells = {2: drift2 + var}
            if 4 in config.p_values:
                cells[4] = drift2**2 + 6.0 * drift2 * var + 3.0 * var**2
            out[delta] = cells
        return out

    results = _run_indexed(one, config.samples, threads)
    points = []
    slopes = {}
    for p in config.p_values:
        ladder = []
        for delta in config.deltas:
            stacked = np.stack([results[k][delta][p] for k in range(config.samples)])
            moment = float(stacked.mean(axis=0).max())
            points.append(LocalErrorPoint(p, delta, moment))
            ladder.append((delta, moment))
        if all(v > 0 for _, v in ladder) and len(ladder) >= 2:
            slope, _, _ = estimate_order(ladder)
            slopes[p] = slope
    return LocalErrorReport(points=tuple(points), slopes=slopes)


# --- chain statistical validation --------------------------------------------


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    statistic: float
    bound: float
    detail: str = ""


@dataclass(frozen=True)
class ChainValidationReport:
    checks: tuple

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def write_csv(self, fileobj) -> None:
        fileobj.write("check,statistic,bound,passed,detail\n")
        for c in self.checks:
            fileobj.write(
                f"{c.name},{c.statistic:.17g},{c.bound:.17g},"
                f"{int(c.passed)},{c.detail}\n"
            )


def _occupancy_batches(chain: ChainPath, n_states: int, n_batches: int) -> np.ndarray:
    """Per-window time fraction spent in each state, for batch-means errors."""
    horizon = chain.horizon
    bounds = np.linspace(0.0, horizon, n_batches + 1)
    seg_start = chain.switch_times
    seg_end = np.append(chain.switch_times[1:], horizon)
    occ = np.zeros((n_batches, n_states))
    for b in range(n_batches):
        lo, hi = bounds[b], bounds[b + 1]
        overlap = np.minimum(seg_end, hi) - np.maximum(seg_start, lo)
        overlap = np.clip(overlap, 0.0, None)
        np.add.at(occ[b], chain.states - 1, overlap)
        occ[b] /= hi - lo
    return occ


def validate_chain_statistics(
    gen: GeneratorMatrix,
    step: float,
    samples: int,
    seed: int,
    max_switches: int = 10**7,
) -> ChainValidationReport:
    """Statistical checks of the exact chain simulator against theory.

    Simulates one long path with ``samples`` skeleton steps and checks
    (a) skeleton one-step transition frequencies against exp(rates * step)
    entry-wise with 3-sigma binomial bounds, (b) completed holding times per
    state against the exponential law of the exit rate (KS at level 0.01),
    and (c) long-run occupancy against the stationary distribution with
    3-sigma batch-means bounds. Failures are report entries, not exceptions.
    """
    if samples < 1000:
        raise ConfigError("need at least 1000 skeleton samples")
    rng = derive_stream(seed, 0)
    horizon = samples * step
    chain = simulate_exact_path(gen, 1, horizon, rng, max_switches=max_switches)
    n = gen.n_states
    checks = []

    # (a) skeleton transition frequencies vs the matrix exponential
    skel = skeleton_from_path(chain, step)
    counts = np.zeros((n, n))
    np.add.at(counts, (skel[:-1] - 1, skel[1:] - 1), 1.0)
    row_totals = counts.sum(axis=1)
    probs = matrix_exponential(gen, step).probs
    for i in range(n):
        if row_totals[i] < 50:
            continue
        for j in range(n):
            p_theory = probs[i, j]
            freq = counts[i, j] / row_totals[i]
            bound = 3.0 * np.sqrt(p_theory * (1.0 - p_theory) / row_totals[i])
            checks.append(
                CheckResult(
                    name=f"transition_{i + 1}->{j + 1}",
                    passed=bool(abs(freq - p_theory) <= bound),
                    statistic=float(abs(freq - p_theory)),
                    bound=float(bound),
                    detail=f"freq={freq:.6g} theory={p_theory:.6g} n={int(row_totals[i])}",
                )
            )

    # (b) holding times vs the exponential law
    holds = chain.holding_times()
    hold_states = chain.states[:-1]
    for i in range(1, n + 1):
        rate = gen.exit_rate(i)
        if rate == 0.0:
            continue
        sample = holds[hold_states == i]
        if len(sample) < 50:
            continue
        stat, pvalue = scipy.stats.kstest(sample, "expon", args=(0.0, 1.0 / rate))
        checks.append(
            CheckResult(
                name=f"holding_ks_state_{i}",
                passed=bool(pvalue >= 0.01),
                statistic=float(pvalue),
                bound=0.01,
                detail=f"ks_stat={stat:.6g} n={len(sample)}",
            )
        )

    # (c) occupancy vs the stationary distribution
    try:
        pi = stationary_distribution(gen)
    except Exception:
        pi = None
    if pi is not None:
        batches = _occupancy_batches(chain, n, n_batches=20)
        occ = batches.mean(axis=0)
        se = batches.std(axis=0, ddof=1) / np.sqrt(batches.shape[0])
        for i in range(n):
            checks.append(
                CheckResult(
                    name=f"occupancy_state_{i + 1}",
                    passed=bool(abs(occ[i] - pi[i]) <= 3.0 * se[i]),
                    statistic=float(abs(occ[i] - pi[i])),
                    bound=float(3.0 * se[i]),
                    detail=f"occ={occ[i]:.6g} stationary={pi[i]:.6g}",
                )
            )

    return ChainValidationReport(checks=tuple(checks))
