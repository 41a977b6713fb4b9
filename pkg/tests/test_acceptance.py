"""Acceptance suite: one test per release criterion, at pinned tolerances.

Each test prints a single PASS/FAIL line (visible with `pytest -s` or on
failure) and then asserts. Statistical criteria run fixed seeds so the whole
suite is deterministic; the pinned seeds were chosen once and the bands are
the release contract, not tuned per run.
"""

import os

import numpy as np
import pytest

import switchsde as s
from switchsde.cli import main as cli_main
from switchsde.solvers import CLASSICAL, JUMP_ADAPTED

GEN = s.validate_generator([[-1.0, 1.0], [2.0, -2.0]])
DELTAS = tuple(2.0**-k for k in range(4, 10))


def default_model():
    return s.LinearHybridModel(a=[1.0, 2.0], b=[2.0, 1.0], z0=1.0, initial_regime=1)


def report_line(num, name, ok, detail):
    status = "PASS" if ok else "FAIL"
    print(f"ACCEPTANCE {num} ({name}): {status} -- {detail}")


@pytest.fixture(scope="module")
def p4_report():
    """Criterion 2/3 shared run: p=4, M=2000, both schemes, closed form."""
    cfg = s.ExperimentConfig(
        model=default_model(), generator=GEN, horizon=1.0,
        p_values=(4,), deltas=DELTAS, samples=2000, seed=0,
        reference="closed-form", schemes=(JUMP_ADAPTED, CLASSICAL),
    )
    return s.run_strong_error(cfg)


def test_criterion_1_convergence_order_p2():
    cfg = s.ExperimentConfig(
        model=default_model(), generator=GEN, horizon=1.0,
        p_values=(2,), deltas=DELTAS, samples=1000, seed=10,
        reference="closed-form", schemes=(JUMP_ADAPTED,),
    )
    fit = s.run_strong_error(cfg).fit_for(JUMP_ADAPTED, 2)
    ok = 0.40 <= fit.slope <= 0.60 and fit.r2 >= 0.98
    report_line(1, "convergence order p=2", ok,
                f"slope={fit.slope:.4f} in [0.40, 0.60], r2={fit.r2:.5f} >= 0.98")
    assert ok


def test_criterion_2_convergence_order_p4(p4_report):
    fit = p4_report.fit_for(JUMP_ADAPTED, 4)
    ok = 0.35 <= fit.slope <= 0.65
    report_line(2, "convergence order p=4", ok, f"slope={fit.slope:.4f} in [0.35, 0.65]")
    assert ok


def test_criterion_3_order_separation(p4_report):
    ja = p4_report.fit_for(JUMP_ADAPTED, 4).slope
    cl = p4_report.fit_for(CLASSICAL, 4).slope
    ok = ja >= cl - 0.05
    report_line(3, "order separation", ok,
                f"switch-adapted {ja:.4f} >= classical {cl:.4f} - 0.05")
    assert ok


def test_criterion_4_local_error_scaling():
    model = s.LinearHybridModel(a=[1.0, 2.0], b=[0.5, 0.25], z0=1.0, initial_regime=1)
    cfg = s.ExperimentConfig(
        model=model, generator=GEN, horizon=1.0,
        p_values=(2,), deltas=DELTAS, samples=1000, seed=0,
    )
    slope = s.local_error_scaling(cfg).slopes[2]
    ok = abs(slope - 1.0) <= 0.15
    report_line(4, "local-error scaling", ok, f"slope={slope:.4f} in [0.85, 1.15]")
    assert ok


def test_criterion_5_grid_count_bound():
    rng = np.random.default_rng(2024)
    violations = 0
    trials = 10**4
    for trial in range(trials):
        n = int(rng.integers(1, 7))
        rates = rng.uniform(0.0, 3.0, (n, n)) * (rng.random((n, n)) < 0.8)
        np.fill_diagonal(rates, 0.0)
        mat = rates.copy()
        np.fill_diagonal(mat, -rates.sum(axis=1))
        gen = s.validate_generator(mat)
        horizon = 1.0
        step = horizon * 2.0 ** -int(rng.integers(0, 9))
        path = s.simulate_exact_path(gen, int(rng.integers(1, n + 1)), horizon,
                                     s.derive_stream(555, trial))
        grid = s.build_refined_grid(path, step)
        if len(grid) > int(np.floor(horizon / step)) + path.n_segments + 1:
            violations += 1
    ok = violations == 0
    report_line(5, "grid-count bound", ok, f"{violations} violations in {trials} trials")
    assert ok


def test_criterion_6_interpolant_identity():
    rng = np.random.default_rng(77)
    mismatches = 0
    samples = 10**3
    for m in range(samples):
        a = rng.uniform(-2.0, 2.0, 2)
        b = rng.uniform(0.1, 2.0, 2)
        model = s.LinearHybridModel(a=a, b=b, z0=1.0)
        step = 2.0 ** -int(rng.integers(1, 7))
        stream = s.derive_stream(888, m)
        path = s.simulate_exact_path(GEN, 1, 1.0, stream)
        union = s.merge_grids(
            s.uniform_grid(1.0, min(step, 2.0**-6)),
            s.make_grid(np.append(path.switch_times, 1.0)),
        )
        bm = s.generate_increments(union, 1, stream)
        sol = s.em_jump_adapted(model, s.build_refined_grid(path, step), bm)
        if not np.array_equal(s.evaluate_path(sol, bm, sol.times), sol.values):
            mismatches += 1
    ok = mismatches == 0
    report_line(6, "interpolant identity", ok,
                f"{mismatches} mismatching samples out of {samples}")
    assert ok


def test_criterion_7_chain_statistics():
    report = s.validate_chain_statistics(GEN, step=0.1, samples=10**5, seed=0)
    failed = [c.name for c in report.checks if not c.passed]
    occ = {c.name: c for c in report.checks if c.name.startswith("occupancy")}
    detail = (
        f"{len(report.checks)} checks (transitions 3-sigma, holding KS at 0.01, "
        f"occupancy vs (2/3, 1/3)); failed: {failed or 'none'}; "
        f"occ1 gap {occ['occupancy_state_1'].statistic:.2e} <= {occ['occupancy_state_1'].bound:.2e}"
    )
    report_line(7, "chain statistics", report.passed, detail)
    assert report.passed


def test_criterion_8_degenerate_exactness():
    # zero diffusion, constant-per-regime drift: switch-adapted is exact
    const = s.HybridModel(
        state_dim=1, noise_dim=1, regime_count=2,
        drift=lambda z, i: 1.0 if i == 1 else -1.0,
        diffusion=lambda z, i: 0.0,
        initial_value=[0.0],
    )
    worst = 0.0
    for m in range(50):
        stream = s.derive_stream(31337, m)
        path = s.simulate_exact_path(GEN, 1, 1.0, stream)
        union = s.merge_grids(
            s.uniform_grid(1.0, DELTAS[-1]), s.make_grid(np.append(path.switch_times, 1.0))
        )
        bm = s.generate_increments(union, 1, stream)
        durations = np.diff(np.append(path.switch_times, 1.0))
        exact = float(np.sum(np.where(path.states == 1, 1.0, -1.0) * durations))
        for delta in DELTAS:
            sol = s.em_jump_adapted(const, s.build_refined_grid(path, delta), bm)
            worst = max(worst, abs(sol.values[-1, 0] - exact))
    exactness_ok = worst <= 1e-12

    # samples without interior switches: both schemes bitwise identical
    model = default_model()
    compared = 0
    bitwise_ok = True
    m = 0
    while compared < 25:
        stream = s.derive_stream(424242, m)
        m += 1
        path = s.simulate_exact_path(GEN, 1, 1.0, stream)
        if path.n_segments != 1:
            continue
        compared += 1
        bm = s.generate_increments(s.uniform_grid(1.0, DELTAS[-1]), 1, stream)
        for delta in DELTAS:
            jump = s.em_jump_adapted(model, s.build_refined_grid(path, delta), bm)
            ug = s.uniform_grid(1.0, delta)
            classical = s.em_classical(
                model, s.skeleton_from_path(path, delta), delta,
                s.aggregate_increments(bm, ug),
            )
            if not (np.array_equal(jump.times, classical.times)
                    and np.array_equal(jump.values, classical.values)):
                bitwise_ok = False
    ok = exactness_ok and bitwise_ok
    report_line(8, "degenerate exactness", ok,
                f"worst terminal error {worst:.2e} <= 1e-12; "
                f"{compared} switch-free samples bitwise identical: {bitwise_ok}")
    assert ok


def test_criterion_9_cli_determinism(tmp_path):
    import json

    cfg = {
        "schema_version": 1,
        "generator": {"states": 2, "rates": [[-1.0, 1.0], [2.0, -2.0]]},
        "model": {"model": "linear", "a": [1.0, 2.0], "b": [2.0, 1.0], "z0": 1.0},
        "horizon": 1.0,
        "deltas": list(DELTAS),
        "p": [2],
        "samples": 128,
        "seed": 0,
        "schemes": ["jump-adapted", "classical"],
    }
    cfg_path = tmp_path / "config.json"
    cfg_path.write_text(json.dumps(cfg))
    out1, out8 = str(tmp_path / "threads1"), str(tmp_path / "threads8")
    rc1 = cli_main(["converge", "--config", str(cfg_path), "--out", out1, "--threads", "1"])
    rc8 = cli_main(["converge", "--config", str(cfg_path), "--out", out8, "--threads", "8"])
    identical = True
    for name in ("errors.csv", "fit.csv"):
        with open(os.path.join(out1, name), "rb") as fh:
            b1 = fh.read()
        with open(os.path.join(out8, name), "rb") as fh:
            b8 = fh.read()
        identical = identical and b1 == b8
    ok = rc1 == 0 and rc8 == 0 and identical
    report_line(9, "determinism across thread counts", ok,
                f"exit codes ({rc1}, {rc8}); errors.csv and fit.csv byte-identical: {identical}")
    assert ok


def test_criterion_10_moment_stability():
    cfg = s.ExperimentConfig(
        model=default_model(), generator=GEN, horizon=1.0,
        p_values=(2, 4), deltas=DELTAS, samples=1000, seed=0,
    )
    report = s.moment_check(cfg)
    ratios = {p: report.max_ratio(p) for p in (2, 4)}
    ok = report.all_finite() and all(r < 2.0 for r in ratios.values())
    report_line(
        10, "moment stability", ok,
        f"finite={report.all_finite()}, max/min across ladder: "
        f"p=2 {ratios[2]:.3f}, p=4 {ratios[4]:.3f} (required < 2)",
    )
    assert ok, (
        "Euler moments of the default model genuinely vary beyond factor 2 "
        "across this ladder (see notes/decisions.md): the coarse-step scheme "
        "undershoots higher moments of the b=2 regime"
    )
