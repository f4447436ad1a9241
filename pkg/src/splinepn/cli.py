"""Command-line front end.

Usage::

    splinepn CONFIG.json [--output-dir DIR] [--quiet]

``CONFIG.json`` is either an experiment configuration or a ``manifest.json``
written by an earlier run; a manifest re-runs its recorded configuration.
Exit codes: 0 success, 2 configuration/validation error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import platform
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .bspline import make_clamped_knots
from .convergence import estimate_rate, make_quasi_uniform_grid
from .errors import ConfigError, InvalidBoundError, NumericalError, SplinePNError, ValidationError
from .gaussian import bandwidth_of, joint_state_gaussian, sample
from .pde import TensorBasis, joint_field_gaussian
from .problems import CATALOG, analytic_solution, make_problem
from .solver import ObservationModel, SolverConfig, grid_posterior, solve

log = logging.getLogger("splinepn")

__all__ = ["ExperimentConfig", "ResultBundle", "parse_config", "serialize", "run", "main"]

COMMANDS = ("solve", "prior-sample", "pde-prior-sample", "converge", "infer")
MANIFEST_KEY = "splinepn_manifest"

_REQUIRED = object()

# section -> key -> default (``_REQUIRED`` when the command needs it)
_SCHEMA = {
    "problem": {"name": _REQUIRED, "theta": [], "u0": _REQUIRED, "L": _REQUIRED},
    "solver": {
        "J": None,
        "J_offset": None,
        "q": 4,
        "prior_scale": 10.0,
        "nugget": None,
        "mode": "sample",
        "n_draws": None,
        "prior_structure": "integrated",
        "knots": "auto",
    },
    "grid": {"N": None, "C": 1.0, "seed": 0, "Ns": None, "L": None},
    "inference": {
        "theta_grid": _REQUIRED,
        "obs_times": None,
        "noise_var": _REQUIRED,
        "data_path": None,
        "simulate": False,
        "true_theta": None,
    },
    "pde": {
        "Jx": 8,
        "Jt": 8,
        "qx": 4,
        "qt": 4,
        "Lx": 1.0,
        "Lt": 1.0,
        "nx": 10,
        "nt": 10,
        "prior_scale": 1.0,
    },
    "output": {"dir": "results", "formats": ["csv", "json"]},
}

_SECTIONS_FOR = {
    "solve": ("problem", "solver", "grid", "output"),
    "prior-sample": ("solver", "grid", "output"),
    "pde-prior-sample": ("solver", "grid", "pde", "output"),
    "converge": ("problem", "solver", "grid", "output"),
    "infer": ("problem", "solver", "grid", "inference", "output"),
}

_DEFAULT_NS = [10, 20, 40, 80, 160]


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved configuration; ``defaulted`` lists the keys that were filled in."""

    command: str
    sections: dict
    defaulted: tuple = field(default=(), compare=False)

    def __getitem__(self, name):
        return self.sections[name]

    def to_dict(self) -> dict:
        return {"command": self.command, **copy.deepcopy(self.sections)}


@dataclass
class ResultBundle:
    tables: dict  # file stem -> (header, rows)
    manifest: dict
    output_dir: Path | None = None


def _fail(msg):
    raise ConfigError(msg)


def _number(value, where, *, integer=False, minimum=None, strict_min=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail(f"{where} must be a number, got {value!r}")
    if integer and not float(value).is_integer():
        _fail(f"{where} must be an integer, got {value!r}")
    if minimum is not None and (value <= minimum if strict_min else value < minimum):
        _fail(f"{where} must be {'>' if strict_min else '>='} {minimum}, got {value!r}")
    return int(value) if integer else float(value)


def _vector(value, where):
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        value = [value]
    if not isinstance(value, list):
        _fail(f"{where} must be a list of numbers")
    return [_number(v, f"{where}[{i}]") for i, v in enumerate(value)]


def _resolve_section(raw, name, command, defaulted):
    schema = _SCHEMA[name]
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        _fail(f"section {name!r} must be an object")
    for key in raw:
        if key not in schema:
            _fail(f"unknown key {name}.{key!r} (allowed: {sorted(schema)})")
    out = {}
    for key, default in schema.items():
        if key in raw and raw[key] is not None:
            out[key] = raw[key]
        elif default is _REQUIRED:
            _fail(f"missing required field {name}.{key} for command {command!r}")
        else:
            out[key] = copy.deepcopy(default)
            if key not in raw:
                defaulted.append(f"{name}.{key}")
    return out


def _validate_problem(p, command):
    if p["name"] not in CATALOG:
        _fail(f"problem.name must be one of {sorted(CATALOG)}, got {p['name']!r}")
    p["theta"] = _vector(p["theta"], "problem.theta")
    p["u0"] = _vector(p["u0"], "problem.u0")
    p["L"] = _number(p["L"], "problem.L", minimum=0, strict_min=True)
    n = CATALOG[p["name"]].n_theta
    # infer takes theta from inference.theta_grid
    if n and len(p["theta"]) != n and not (command == "infer" and not p["theta"]):
        _fail(f"problem {p['name']!r} needs {n} theta value(s), got {len(p['theta'])}")


def _validate_solver(s, command):
    for key in ("J", "J_offset"):
        if s[key] is not None:
            s[key] = _number(s[key], f"solver.{key}", integer=True)
    s["q"] = _number(s["q"], "solver.q", integer=True, minimum=2)
    s["prior_scale"] = _number(s["prior_scale"], "solver.prior_scale", minimum=0, strict_min=True)
    s["nugget"] = _number(s["nugget"], "solver.nugget", minimum=0) if s["nugget"] is not None else 1e-8 * s["prior_scale"]
    if s["mode"] not in ("sample", "mean"):
        _fail(f"solver.mode must be 'sample' or 'mean', got {s['mode']!r}")
    if s["prior_structure"] not in ("diagonal", "integrated"):
        _fail(f"solver.prior_structure must be 'diagonal' or 'integrated', got {s['prior_structure']!r}")
    if s["knots"] not in ("auto", "sites", "uniform"):
        _fail(f"solver.knots must be 'auto', 'sites' or 'uniform', got {s['knots']!r}")
    if s["n_draws"] is None:
        s["n_draws"] = 3 if command in ("prior-sample", "pde-prior-sample") else 0
    s["n_draws"] = _number(s["n_draws"], "solver.n_draws", integer=True, minimum=0)
    if command == "converge" and s["J"] is not None:
        _fail("solver.J is fixed per run; use solver.J_offset with command 'converge'")


def _validate_grid(g, command, problem):
    g["C"] = _number(g["C"], "grid.C")
    if g["C"] < 1:
        raise InvalidBoundError(f"grid.C must be >= 1 (quasi-uniformity bound), got {g['C']}")
    g["seed"] = _number(g["seed"], "grid.seed", integer=True, minimum=0)
    if command == "converge":
        g["Ns"] = [_number(n, "grid.Ns", integer=True, minimum=2) for n in (g["Ns"] or _DEFAULT_NS)]
        if len(g["Ns"]) < 3 or any(b <= a for a, b in zip(g["Ns"], g["Ns"][1:])):
            _fail("grid.Ns must be strictly increasing with at least three entries")
    elif g["Ns"] is not None:
        _fail(f"grid.Ns is only used by command 'converge', not {command!r}")
    if command in ("solve", "infer", "prior-sample"):
        if g["N"] is None:
            _fail(f"missing required field grid.N for command {command!r}")
        g["N"] = _number(g["N"], "grid.N", integer=True, minimum=2)
    if g["L"] is not None:
        g["L"] = _number(g["L"], "grid.L", minimum=0, strict_min=True)
    elif problem is not None:
        g["L"] = problem["L"]
    elif command == "prior-sample":
        _fail("missing required field grid.L for command 'prior-sample'")


def _validate_inference(inf, problem):
    n = CATALOG[problem["name"]].n_theta
    grid = inf["theta_grid"]
    if not isinstance(grid, list) or not grid:
        _fail("inference.theta_grid must be a non-empty list")
    inf["theta_grid"] = [_vector(th, f"inference.theta_grid[{i}]") for i, th in enumerate(grid)]
    if any(len(th) != n for th in inf["theta_grid"]):
        _fail(f"each inference.theta_grid entry needs {n} value(s)")
    inf["noise_var"] = _number(inf["noise_var"], "inference.noise_var", minimum=0, strict_min=True)
    if not isinstance(inf["simulate"], bool):
        _fail("inference.simulate must be true or false")
    if inf["simulate"] == (inf["data_path"] is not None):
        _fail("inference needs exactly one of simulate=true or data_path")
    if inf["simulate"]:
        if inf["obs_times"] is None or inf["true_theta"] is None:
            _fail("inference.simulate needs obs_times and true_theta")
        inf["obs_times"] = _vector(inf["obs_times"], "inference.obs_times")
        inf["true_theta"] = _vector(inf["true_theta"], "inference.true_theta")
        if any(t < 0 or t > problem["L"] for t in inf["obs_times"]):
            _fail("inference.obs_times must lie in [0, problem.L]")
    elif inf["obs_times"] is not None:
        _fail("inference.obs_times comes from the data file when data_path is given")


def _validate_pde(p):
    for key in ("Jx", "Jt", "qx", "qt", "nx", "nt"):
        p[key] = _number(p[key], f"pde.{key}", integer=True, minimum=1)
    for key in ("Lx", "Lt", "prior_scale"):
        p[key] = _number(p[key], f"pde.{key}", minimum=0, strict_min=True)


def _validate_output(o):
    if not isinstance(o["dir"], str):
        _fail("output.dir must be a string")
    if not isinstance(o["formats"], list) or not set(o["formats"]) <= {"csv", "json"}:
        _fail("output.formats must be a list drawn from ['csv', 'json']")


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a JSON configuration, filling in defaults."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(raw, dict):
        _fail("configuration must be a JSON object")
    inherited = None
    if MANIFEST_KEY in raw:
        # a manifest re-run keeps the original record of which fields were defaulted
        inherited = raw.get("defaulted")
        raw = raw.get("config")
        if not isinstance(raw, dict):
            _fail("manifest has no 'config' object")
    command = raw.get("command")
    if command is None:
        _fail("missing required field 'command'")
    if command not in COMMANDS:
        _fail(f"command must be one of {COMMANDS}, got {command!r}")
    allowed = _SECTIONS_FOR[command]
    for key in raw:
        if key != "command" and key not in allowed:
            _fail(f"unknown key {key!r} for command {command!r} (allowed: {list(allowed)})")
    for name in allowed:
        if _SCHEMA[name] and any(v is _REQUIRED for v in _SCHEMA[name].values()) and name not in raw:
            _fail(f"missing required field {name!r} for command {command!r}")
    defaulted: list[str] = []
    sections = {name: _resolve_section(raw.get(name), name, command, defaulted) for name in allowed}
    problem = sections.get("problem")
    if problem is not None:
        _validate_problem(problem, command)
    _validate_solver(sections["solver"], command)
    _validate_grid(sections["grid"], command, problem)
    if "inference" in sections:
        _validate_inference(sections["inference"], problem)
    if "pde" in sections:
        _validate_pde(sections["pde"])
    _validate_output(sections["output"])
    if isinstance(inherited, list):
        defaulted = [str(k) for k in inherited]
    config = ExperimentConfig(command, sections, tuple(defaulted))
    if command in ("solve", "infer"):
        _solver_config(config)  # surface invalid combinations before any work starts
    return config


def serialize(config: ExperimentConfig) -> str:
    return json.dumps(config.to_dict(), indent=2, sort_keys=True)


def _solver_config(config: ExperimentConfig, N=None, grid=None, mode=None) -> SolverConfig:
    s, g = config["solver"], config["grid"]
    return SolverConfig(
        N=N if N is not None else g["N"],
        J=s["J"],
        J_offset=s["J_offset"],
        q=s["q"],
        prior_scale=s["prior_scale"],
        nugget=s["nugget"],
        mode=mode or s["mode"],
        seed=g["seed"],
        grid=grid,
        n_draws=s["n_draws"],
        prior_structure=s["prior_structure"],
        knots=s["knots"],
    )


def _problem(config: ExperimentConfig, theta=None):
    p = config["problem"]
    return make_problem(p["name"], p["theta"] if theta is None else theta, p["u0"], p["L"])


def _run_solve(config):
    p, g = config["problem"], config["grid"]
    problem = _problem(config)
    grid = make_quasi_uniform_grid(g["N"], p["L"], g["C"], g["seed"])
    sol = solve(problem, _solver_config(config, grid=grid))
    t = grid.points
    mean, sd = sol.mean_at(t), sol.sd_at(t)
    d = sol.dim
    header = ["t"] + [f"mean_{i + 1}" for i in range(d)] + [f"sd_{i + 1}" for i in range(d)]
    cols = [t, *mean.T, *sd.T]
    for k, draw in enumerate(sol.draws or []):
        for i in range(d):
            header.append(f"draw_{k + 1}" if d == 1 else f"draw_{k + 1}_{i + 1}")
            cols.append(draw[:, i])
    exact = np.array([analytic_solution(p["name"], p["theta"], p["u0"])(ti) for ti in t])
    summary = {
        "N": g["N"],
        "J": sol.knots.n_basis,
        "max_abs_error_vs_analytic": float(np.max(np.abs(mean - exact))),
        "max_sd": float(sd.max()),
    }
    return {"trajectory": (header, list(zip(*cols)))}, summary


def _run_prior_sample(config):
    s, g = config["solver"], config["grid"]
    L, N = g["L"], g["N"]
    J = s["J"] if s["J"] is not None else N + (s["J_offset"] if s["J_offset"] is not None else 2)
    kv = make_clamped_knots(L, J, s["q"])
    t = L * np.arange(N) / (N - 1)
    prior = _solver_config(config).prior
    gauss = joint_state_gaussian(kv, prior, t, [])
    draws = sample(gauss, [g["seed"], 3], size=s["n_draws"]) if s["n_draws"] else np.zeros((0, N))
    header = ["t", "mean", "sd"] + [f"draw_{k + 1}" for k in range(len(draws))]
    cols = [t, gauss.mean, np.sqrt(np.clip(gauss.var, 0, None)), *draws]
    summary = {"J": J, "bandwidth": bandwidth_of(gauss.cov, 1e-12)}
    return {"trajectory": (header, list(zip(*cols)))}, summary


def _run_pde_prior_sample(config):
    p, s, g = config["pde"], config["solver"], config["grid"]
    tb = TensorBasis(make_clamped_knots(p["Lx"], p["Jx"], p["qx"]), make_clamped_knots(p["Lt"], p["Jt"], p["qt"]))
    xs = p["Lx"] * np.arange(p["nx"]) / max(p["nx"] - 1, 1)
    ts = p["Lt"] * np.arange(p["nt"]) / max(p["nt"] - 1, 1)
    pts = np.array([(x, t) for x in xs for t in ts])
    gauss = joint_field_gaussian(tb, p["prior_scale"], pts)
    draws = sample(gauss, [g["seed"], 4], size=s["n_draws"]) if s["n_draws"] else np.zeros((0, len(pts)))
    header = ["x", "t", "mean", "sd"] + [f"draw_{k + 1}" for k in range(len(draws))]
    cols = [pts[:, 0], pts[:, 1], gauss.mean, np.sqrt(np.clip(gauss.var, 0, None)), *draws]
    summary = {"n_points": len(pts), "bandwidth": bandwidth_of(gauss.cov, 1e-12)}
    return {"field": (header, list(zip(*cols)))}, summary


def _run_converge(config):
    p, g = config["problem"], config["grid"]
    problem = _problem(config)
    exact = analytic_solution(p["name"], p["theta"], p["u0"])
    report = estimate_rate(problem, exact, g["Ns"], _solver_config(config, N=g["Ns"][0], mode="mean"), C=g["C"])
    header = ["N", "h", "C_actual", "max_error"]
    return {"rate": (header, list(report.rows()))}, report.summary()


def _read_data(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["t", "y"]:
            _fail(f"data file {path} must have header 't,y'")
        rows = [(float(r[0]), float(r[1])) for r in reader if r]
    if not rows:
        _fail(f"data file {path} has no rows")
    t, y = map(np.array, zip(*rows))
    return t, y


def _run_infer(config):
    p, g, inf = config["problem"], config["grid"], config["inference"]
    if inf["simulate"]:
        t = np.array(inf["obs_times"])
        truth = analytic_solution(p["name"], inf["true_theta"], p["u0"])
        noise = np.random.default_rng([g["seed"], 2]).standard_normal(t.size)
        y = np.array([truth(ti)[0] for ti in t]) + np.sqrt(inf["noise_var"]) * noise
    else:
        t, y = _read_data(inf["data_path"])
        if np.any(t < 0) or np.any(t > p["L"]):
            _fail("observation times in the data file must lie in [0, problem.L]")
    obs = ObservationModel.identity(t, inf["noise_var"])
    grid = make_quasi_uniform_grid(g["N"], p["L"], g["C"], g["seed"])
    weights = grid_posterior(
        lambda th: _problem(config, th), inf["theta_grid"], obs, y, _solver_config(config, grid=grid)
    )
    n_theta = len(inf["theta_grid"][0])
    header = [f"theta_{i + 1}" for i in range(n_theta)] + ["weight"]
    rows = [(*th.tolist(), w) for th, w in weights]
    best = max(range(len(weights)), key=lambda i: weights[i][1])
    summary = {
        "argmax_theta": weights[best][0].tolist(),
        "weight_sum": float(sum(w for _, w in weights)),
    }
    tables = {"posterior": (header, rows), "observations": (["t", "y"], list(zip(t, y)))}
    return tables, summary


_RUNNERS = {
    "solve": _run_solve,
    "prior-sample": _run_prior_sample,
    "pde-prior-sample": _run_pde_prior_sample,
    "converge": _run_converge,
    "infer": _run_infer,
}


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return repr(float(value))


def _write_tables(tables, out: Path, formats):
    written = []
    for stem, (header, rows) in tables.items():
        if "csv" in formats:
            with open(out / f"{stem}.csv", "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(header)
                w.writerows([_fmt(v) for v in row] for row in rows)
            written.append(f"{stem}.csv")
        if "json" in formats:
            payload = {"columns": header, "rows": [[_to_json(v) for v in row] for row in rows]}
            (out / f"{stem}.json").write_text(json.dumps(payload) + "\n")
            written.append(f"{stem}.json")
    return written


def _to_json(v):
    return int(v) if isinstance(v, (int, np.integer)) else float(v)


def run(config: ExperimentConfig, output_dir=None) -> ResultBundle:
    """Execute ``config`` and write its outputs; errors propagate as exceptions."""
    start = time.perf_counter()
    log.info("running %s", config.command)
    tables, summary = _RUNNERS[config.command](config)
    out = Path(output_dir if output_dir is not None else config["output"]["dir"])
    out.mkdir(parents=True, exist_ok=True)
    files = _write_tables(tables, out, config["output"]["formats"])
    manifest = {
        MANIFEST_KEY: 1,
        "config": config.to_dict(),
        "defaulted": list(config.defaulted),
        "seeds": {
            "base": config["grid"]["seed"],
            "derivations": {
                "grid": "seed (converge: seed XOR N)",
                "solver_step_i": "[seed, 0, i]",
                "trajectory_draws_dim_d": "[seed, 1, d]",
                "simulated_noise": "[seed, 2]",
                "prior_sample": "[seed, 3]",
                "pde_prior_sample": "[seed, 4]",
            },
        },
        "versions": {
            "splinepn": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
        "summary": summary,
        "files": files,
        "wall_time_s": time.perf_counter() - start,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    log.info("wrote %s to %s", ", ".join(files + ["manifest.json"]), out)
    return ResultBundle(tables, manifest, out)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="splinepn", description=__doc__.split("\n\n")[0])
    parser.add_argument("config", help="experiment configuration or manifest (JSON)")
    parser.add_argument("--output-dir", help="write results here instead of output.dir")
    parser.add_argument("--quiet", action="store_true", help="suppress progress messages")
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        text = Path(args.config).read_text()
    except OSError as exc:
        print(f"error: cannot read {args.config}: {exc}", file=sys.stderr)
        return 2
    try:
        config = parse_config(text)
    except ValidationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        run(config, args.output_dir)
    except ValidationError as exc:
        print(f"validation error in {config.command}: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure in {config.command} ({type(exc).__name__}): {exc}", file=sys.stderr)
        return 3
    except SplinePNError as exc:
        print(f"error in {config.command}: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
