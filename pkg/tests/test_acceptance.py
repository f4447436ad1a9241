"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v -s`` to see the lines
inline; they are also echoed in the terminal summary.
"""

import json
import math
import time

import numpy as np
import pytest

from splinepn import (
    CoefficientPrior,
    ObservationModel,
    SolverConfig,
    TensorBasis,
    analytic_solution,
    bandwidth_of,
    derivative_operator,
    design_matrix,
    estimate_rate,
    eval_spline,
    fit_rate,
    grid_posterior,
    init_prior,
    joint_field_gaussian,
    joint_state_gaussian,
    make_clamped_knots,
    make_problem,
    make_quasi_uniform_grid,
    mixed_partial_operator,
    per_n_seed,
    quasi_uniformity_constant,
    solver_knots,
    tensor_eval,
)
from splinepn.cli import main

RESULTS = {}

NS = [10, 20, 40, 80, 160]


def report(number, title, ok, detail):
    line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    RESULTS[number] = line
    print(line)
    assert ok, line


def decay_problem():
    return make_problem("linear-decay", [1.0], [1.0], 2.0)


def rate_config(**overrides):
    # the rate experiment's solver settings: q=4, sigma^2=10, eps^2=1e-10, mean mode
    base = dict(N=NS[0], q=4, prior_scale=10.0, nugget=1e-10, mode="mean", seed=0)
    base.update(overrides)
    return SolverConfig(**base)


def test_criterion_01_convergence_rate(tmp_path):
    exact = analytic_solution("linear-decay", [1.0], [1.0])
    start = time.perf_counter()
    slopes = {}
    slopes["J=N+3"] = estimate_rate(decay_problem(), exact, NS, rate_config(J_offset=3)).slope
    slopes["J=N+2"] = estimate_rate(decay_problem(), exact, NS, rate_config()).slope
    cfg = {
        "command": "converge",
        "problem": {"name": "linear-decay", "theta": [1.0], "u0": [1.0], "L": 2.0},
        "grid": {"Ns": NS},
        "solver": {"nugget": 1e-10, "mode": "mean"},
    }
    path = tmp_path / "converge.json"
    path.write_text(json.dumps(cfg))
    code = main([str(path), "--output-dir", str(tmp_path / "out"), "--quiet"])
    slopes["cli"] = json.loads((tmp_path / "out" / "manifest.json").read_text())["summary"]["slope"]
    elapsed = time.perf_counter() - start
    ok = code == 0 and all(-1.3 <= s <= -0.8 for s in slopes.values()) and elapsed < 30
    detail = ", ".join(f"{k} slope {v:.4f}" for k, v in slopes.items()) + f"; {elapsed:.1f}s for all three"
    report(1, "O(1/N) rate on uniform grids, slope in [-1.3, -0.8]", ok, detail)


def test_criterion_02_quasi_uniform_robustness():
    exact = analytic_solution("linear-decay", [1.0], [1.0])
    seed = 7
    constants = [quasi_uniformity_constant(make_quasi_uniform_grid(N, 2.0, 2.0, per_n_seed(seed, N))) for N in NS]
    slopes = {}
    for label, cfg in (("J=N+3", rate_config(J_offset=3, seed=seed)), ("J=N+2", rate_config(seed=seed))):
        rep = estimate_rate(decay_problem(), exact, NS, cfg, C=2.0)
        slopes[label] = rep.slope
        constants.extend(rep.C_actual.tolist())
    ok = all(-1.3 <= s <= -0.8 for s in slopes.values()) and max(constants) <= 2.0
    detail = ", ".join(f"{k} slope {v:.4f}" for k, v in slopes.items()) + f"; max grid C {max(constants):.4f}"
    report(2, "rate on C=2 jittered grids", ok, detail)


def test_criterion_03_derivative_identity():
    rng = np.random.default_rng(3)
    h = 1e-4
    worst, failures = 0.0, 0
    for _ in range(100):
        kv = make_clamped_knots(1.0, int(rng.integers(4, 11)), 4)
        c = rng.standard_normal(kv.n_basis)
        op = derivative_operator(kv)
        dc = op(c)
        t = rng.uniform(h, 1.0 - h, 100)
        fd = (eval_spline(kv, c, t + h) - eval_spline(kv, c, t - h)) / (2 * h)
        exact = eval_spline(op.target_knots, dc, t)
        rel = np.abs(exact - fd) / np.maximum(np.abs(fd), np.abs(dc).max())
        worst = max(worst, float(rel.max()))
        failures += int(np.sum(rel > 1e-5))
    report(3, "derivative operator vs central differences", failures == 0, f"{failures} failures, worst relative {worst:.2e}")


def test_criterion_04_bandedness():
    N, J, q = 50, 53, 4
    kv = make_clamped_knots(1.0, J, q)
    pts = np.linspace(0.0, 1.0, N)
    g = joint_state_gaussian(kv, CoefficientPrior(1.0), pts, [])
    tau = kv.knots
    active = np.array([[tau[k] < s < tau[k + q] for k in range(J)] for s in pts])
    active[0, 0] = active[-1, -1] = True
    share = (active.astype(int) @ active.T.astype(int)) > 0
    leak = float(np.max(np.abs(g.cov[~share]), initial=0.0))
    i, j = np.nonzero(share)
    bound = int(np.max(np.abs(i - j)))
    b = bandwidth_of(g.cov, 1e-12)
    ok = leak <= 1e-12 and b == bound
    report(4, "banded covariance from support separation", ok, f"bandwidth {b}, geometric bound {bound}, max leak {leak:.1e}")


def test_criterion_05_initial_condition():
    rng = np.random.default_rng(5)
    worst_mean, worst_var = 0.0, 0.0
    for k in range(20):
        q = int(rng.integers(2, 6))
        N = int(rng.integers(max(2, q), 30))
        u0 = float(rng.uniform(-10, 10))
        structure = "integrated" if k % 2 else "diagonal"
        problem = make_problem("linear-decay", [1.0], [u0], float(rng.uniform(0.5, 5)))
        cfg = SolverConfig(N=N, q=q, prior_scale=float(rng.uniform(0.1, 20)), prior_structure=structure)
        kv = solver_knots(problem, cfg)
        (g,) = init_prior(problem, cfg, kv)
        u = g.linear(design_matrix(kv, [0.0]))
        worst_mean = max(worst_mean, abs(u.mean[0] - u0))
        worst_var = max(worst_var, u.cov[0, 0])
    ok = worst_mean <= 1e-10 and worst_var <= 1e-10
    report(5, "conditioning on u(0)", ok, f"max |mean-u0| {worst_mean:.1e}, max var {worst_var:.1e} over 20 configs")


def test_criterion_06_joint_normality():
    kv = make_clamped_knots(2.0, 9, 4)
    pts = np.linspace(0.0, 2.0, 10)
    sigma2 = 2.0
    g = joint_state_gaussian(kv, CoefficientPrior(sigma2), pts, pts)
    op = derivative_operator(kv)
    B = design_matrix(kv, pts)
    dB = design_matrix(op.target_knots, pts) @ op.matrix
    dense = sigma2 * np.block([[B @ B.T, B @ dB.T], [dB @ B.T, dB @ dB.T]])
    err = float(np.max(np.abs(g.cov - dense)))
    report(6, "joint (u, u_t) covariance vs dense assembly", err <= 1e-12, f"max entry difference {err:.1e}")


def test_criterion_07_tensor_structure():
    tb = TensorBasis(make_clamped_knots(1.0, 7, 4), make_clamped_knots(2.0, 6, 4))
    xs, ts = np.linspace(0.1, 0.9, 4), np.linspace(0.2, 1.8, 4)
    sigma2 = 1.5
    g = joint_field_gaussian(tb, sigma2, [(x, t) for x in xs for t in ts])
    Bx, Bt = design_matrix(tb.kx, xs), design_matrix(tb.kt, ts)
    kron_err = float(np.max(np.abs(g.cov - sigma2 * np.kron(Bx @ Bx.T, Bt @ Bt.T))))

    rng = np.random.default_rng(7)
    c = rng.standard_normal(tb.shape)
    Dx, Dt = derivative_operator(tb.kx).matrix, derivative_operator(tb.kt).matrix
    both = mixed_partial_operator(tb, 1, 1)(c).values
    x_first = mixed_partial_operator(tb, 1, 0)(c).values @ Dt.T
    t_first = Dx @ mixed_partial_operator(tb, 0, 1)(c).values
    commute = np.array_equal(both, x_first) and np.array_equal(Dx @ c @ Dt.T, both)
    commute_gap = float(np.max(np.abs(x_first - t_first)))

    h, worst = 1e-4, 0.0
    op = mixed_partial_operator(tb, 1, 1)
    dc = op(c)
    for x, t in zip(rng.uniform(0.05, 0.95, 20), rng.uniform(0.05, 1.95, 20)):
        fd = (
            tensor_eval(tb, c, x + h, t + h)
            - tensor_eval(tb, c, x + h, t - h)
            - tensor_eval(tb, c, x - h, t + h)
            + tensor_eval(tb, c, x - h, t - h)
        ) / (4 * h * h)
        exact = tensor_eval(op.basis, dc, x, t)
        worst = max(worst, abs(exact - fd) / max(abs(fd), np.abs(dc.values).max()))
    ok = kron_err <= 1e-12 and commute and commute_gap <= 1e-12 and worst <= 1e-4
    detail = f"Kronecker diff {kron_err:.1e}, partials commute {commute} (order gap {commute_gap:.1e}), 2-D FD worst relative {worst:.1e}"
    report(7, "tensor-product structure", ok, detail)


def test_criterion_08_inference():
    t = np.linspace(0.2, 2.0, 10)
    noise_sd = 1e-3
    y = np.exp(-t) + noise_sd * np.random.default_rng([8, 2]).standard_normal(t.size)
    candidates = [0.5, 0.75, 1.0, 1.25, 1.5]
    obs = ObservationModel.identity(t, noise_sd**2)
    lines, ok = [], True
    for mode in ("mean", "sample"):
        cfg = SolverConfig(N=40, mode=mode, seed=8)
        w = grid_posterior(lambda th: make_problem("linear-decay", th, [1.0], 2.0), candidates, obs, y, cfg)
        weights = np.array([x for _, x in w])
        best = candidates[int(np.argmax(weights))]
        total = abs(weights.sum() - 1.0)
        ok = ok and best == 1.0 and total <= 1e-12
        lines.append(f"{mode}: argmax {best}, |sum-1| {total:.1e}")
    report(8, "grid posterior recovers theta=1", ok, "; ".join(lines))


CLI_CONFIGS = {
    "solve": {
        "command": "solve",
        "problem": {"name": "logistic", "theta": [1.5, 2.0], "u0": [0.2], "L": 3.0},
        "grid": {"N": 30, "C": 1.5, "seed": 9},
        "solver": {"n_draws": 3},
    },
    "prior-sample": {"command": "prior-sample", "grid": {"N": 25, "L": 2.0, "seed": 9}},
    "pde-prior-sample": {"command": "pde-prior-sample", "grid": {"seed": 9}},
    "converge": {
        "command": "converge",
        "problem": {"name": "linear-decay", "theta": [1.0], "u0": [1.0], "L": 2.0},
        "grid": {"Ns": [10, 20, 40], "C": 2.0, "seed": 9},
    },
    "infer": {
        "command": "infer",
        "problem": {"name": "linear-decay", "u0": [1.0], "L": 2.0},
        "grid": {"N": 20, "seed": 9},
        "inference": {
            "theta_grid": [0.5, 1.0, 1.5],
            "obs_times": [0.5, 1.0, 1.5, 2.0],
            "noise_var": 1e-4,
            "simulate": True,
            "true_theta": [1.0],
        },
    },
}


def test_criterion_09_determinism(tmp_path):
    mismatches = []
    for command, cfg in CLI_CONFIGS.items():
        src = tmp_path / f"{command}.json"
        src.write_text(json.dumps(cfg))
        first, second = tmp_path / command / "first", tmp_path / command / "second"
        codes = (
            main([str(src), "--output-dir", str(first), "--quiet"]),
            main([str(first / "manifest.json"), "--output-dir", str(second), "--quiet"]),
        )
        if codes != (0, 0):
            mismatches.append(f"{command}: exit codes {codes}")
            continue
        for path in sorted(first.iterdir()):
            other = second / path.name
            if path.name == "manifest.json":
                a, b = json.loads(path.read_text()), json.loads(other.read_text())
                a.pop("wall_time_s"), b.pop("wall_time_s")
                same = a == b
            else:
                same = path.read_bytes() == other.read_bytes()
            if not same:
                mismatches.append(f"{command}/{path.name}")
    detail = "all outputs identical" if not mismatches else "differences: " + ", ".join(mismatches)
    report(9, f"manifest re-runs of {len(CLI_CONFIGS)} commands", not mismatches, detail)


def test_criterion_10_rate_calibration():
    worst = 0.0
    for p in (0.5, 1.0, 2.0):
        for c in (0.01, 1.0, 250.0):
            rep = fit_rate(NS, [c * n ** (-p) for n in NS])
            worst = max(worst, abs(rep.slope + p))
    report(10, "rate estimator on exact power laws", worst <= 1e-10, f"worst slope error {worst:.1e}")


@pytest.fixture(scope="module", autouse=True)
def _summary(request):
    yield
    if RESULTS:
        reporter = request.config.pluginmanager.get_plugin("terminalreporter")
        if reporter is not None:
            reporter.write_line("")
            reporter.write_sep("-", "acceptance criteria")
            for key in sorted(RESULTS):
                reporter.write_line(RESULTS[key])
