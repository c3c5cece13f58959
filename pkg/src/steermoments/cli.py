"""Command line front end for solves, scans, witnesses, and closed forms.

Configs and artifacts are JSON; one human-readable summary goes to
standard output while machine artifacts land in the output directory.
Written artifacts are byte-for-byte reproducible for identical config
and seed, so wall-clock timings are printed but masked in files.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .analytic import (
    PauliCorrelations,
    gaussian_det_criterion,
    gaussian_exists_completion,
    gaussian_wiseman_criterion,
    pauli_linear_witness,
    pauli_nonlinear_criterion,
    pauli_two_setting_criteria,
)
from .errors import BracketingError, ConfigurationError, NumericalTroubleError
from .moments import POLICIES, build_template, generate_level, named_string_set
from .operators import Operator
from .scenarios import (
    AssemblageSource,
    GaussianStdForm,
    Scenario,
    gaussian_scenario,
    noon_scenario,
    random_unsteerable_assemblage,
    two_mode_squeezed_std_form,
    werner_scenario,
)
from .sdp import DEFAULT_TOL, certify, problem_from_template, solve, steering_decision
from .witnesses import (
    ScanPoint,
    deserialize,
    evaluate,
    lossy_photon_witness,
    serialize,
    threshold_scan,
    witness_from_dual,
)

CONFIG_SCHEMA_VERSION = 1
REPORT_SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_BRACKETING = 4

#: Report decisions; the solver's completable verdict only means nothing
#: was detected at this relaxation level, not that the state is unsteerable.
_DECISION_NAMES = {"no-steering": "no-detection"}

#: An in-band solve still reports no-detection when the completion it
#: returned is positive semidefinite within this floor: the matrix in hand
#: proves nothing was detected, no matter how close lambda_star is to zero.
COMPLETION_PSD_FLOOR = -1e-10

#: Named witness fixtures reachable from `witness eval --fixture`.
_FIXTURES = {"lossy-photon": lossy_photon_witness}

_SCAN_PARAMS = {
    "werner": ("w",),
    "noon": ("eta",),
    "gaussian": ("r", "a", "b", "c1", "c2"),
}

_FAMILY_KEYS = {
    "werner": ({"family", "w"}, set()),
    "noon": ({"family", "N", "eta"}, {"d"}),
    "gaussian": ({"family"}, {"r", "a", "b", "c1", "c2"}),
    "random-unsteerable": (
        {"family", "n_inputs", "n_outcomes", "dim_b", "n_lambda"},
        {"n_bob_ops"},
    ),
}


def load_config(path, *, tol_override=None, seed_override=None) -> dict:
    """Read, validate, and normalize a run config document."""
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise ConfigurationError(f"cannot read config {path}: {err}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigurationError(f"config {path} is not valid JSON: {err}") from None
    return normalize_config(raw, tol_override=tol_override, seed_override=seed_override)


def normalize_config(raw, *, tol_override=None, seed_override=None) -> dict:
    if not isinstance(raw, dict):
        raise ConfigurationError("config must be a JSON object")
    known = {"version", "scenario", "strings", "policy", "tol", "seed"}
    extra = set(raw) - known
    if extra:
        raise ConfigurationError(f"unknown config keys: {sorted(extra)}")
    if raw.get("version") != CONFIG_SCHEMA_VERSION:
        raise ConfigurationError(
            f"unsupported config version {raw.get('version')!r}"
        )
    scenario = raw.get("scenario")
    if not isinstance(scenario, dict) or "family" not in scenario:
        raise ConfigurationError("config needs a scenario object with a family")
    family = scenario["family"]
    if family not in _FAMILY_KEYS:
        raise ConfigurationError(
            f"unknown scenario family {family!r}, expected one of "
            f"{sorted(_FAMILY_KEYS)}"
        )
    required, optional = _FAMILY_KEYS[family]
    keys = set(scenario)
    missing = required - keys
    unknown = keys - required - optional
    if missing:
        raise ConfigurationError(f"scenario is missing keys: {sorted(missing)}")
    if unknown:
        raise ConfigurationError(f"unknown scenario keys: {sorted(unknown)}")
    if family == "gaussian":
        have_r = "r" in keys
        have_form = {"a", "b", "c1", "c2"} <= keys
        if have_r == have_form:
            raise ConfigurationError(
                "gaussian scenario takes either r or the full (a, b, c1, c2) form"
            )
    strings = raw.get("strings")
    if not isinstance(strings, dict) or len(strings) != 1 or not (
        "named" in strings or "level" in strings
    ):
        raise ConfigurationError(
            'strings must be {"named": <set name>} or {"level": <k>}'
        )
    policy = raw.get("policy")
    if policy not in POLICIES:
        raise ConfigurationError(f"policy must be one of {POLICIES}, got {policy!r}")
    tol = raw.get("tol", DEFAULT_TOL)
    if tol_override is not None:
        tol = tol_override
    seed = raw.get("seed", 0)
    if seed_override is not None:
        seed = seed_override
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigurationError(f"seed must be an integer, got {seed!r}")
    return {
        "version": CONFIG_SCHEMA_VERSION,
        "scenario": dict(scenario),
        "strings": dict(strings),
        "policy": policy,
        "tol": float(tol),
        "seed": seed,
    }


def _random_observables(dim: int, count: int, seed: int):
    rng = np.random.default_rng([seed, 1])
    ops = []
    for _ in range(count):
        g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
        ops.append(Operator((g + g.conj().T) / 2))
    return tuple(ops)


def scenario_from_config(config: dict) -> Scenario:
    spec = config["scenario"]
    family = spec["family"]
    if family == "werner":
        return werner_scenario(spec["w"])
    if family == "noon":
        n = spec["N"]
        d = spec.get("d", 4 * n + 2)
        return noon_scenario(n, spec["eta"], d)
    if family == "gaussian":
        if "r" in spec:
            form = two_mode_squeezed_std_form(spec["r"])
        else:
            form = GaussianStdForm(spec["a"], spec["b"], spec["c1"], spec["c2"])
        return gaussian_scenario(form)
    assemblage, _ = random_unsteerable_assemblage(
        spec["n_inputs"],
        spec["n_outcomes"],
        spec["dim_b"],
        spec["n_lambda"],
        seed=config["seed"],
    )
    ops = _random_observables(
        spec["dim_b"], spec.get("n_bob_ops", 2), config["seed"]
    )
    return Scenario("random-unsteerable", AssemblageSource(assemblage), ops)


def string_set_from_config(config: dict, scenario: Scenario):
    strings = config["strings"]
    if "named" in strings:
        return named_string_set(strings["named"])
    return generate_level(
        scenario.source.n_inputs, len(scenario.bob_operators), strings["level"]
    )


def _write_artifact(out_dir, name: str, payload: dict) -> str:
    path = Path(out_dir) / name
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return str(path)


def _pipeline(config: dict):
    scenario = scenario_from_config(config)
    string_set = string_set_from_config(config, scenario)
    template = build_template(
        string_set, scenario.bob_operators, config["policy"], scenario.source
    )
    problem = problem_from_template(template)
    return scenario, template, problem


def cmd_solve(config: dict, out_dir) -> int:
    started = time.monotonic()
    scenario, template, problem = _pipeline(config)
    built = time.monotonic()
    solution = solve(problem, config["tol"])
    solved = time.monotonic()
    cert = certify(solution, problem)
    decision = steering_decision(solution.lambda_star, config["tol"])
    decision = _DECISION_NAMES.get(decision, decision)
    if decision == "inconclusive-margin":
        completion_floor = float(
            np.linalg.eigvalsh(problem.gamma_at(solution.t_star))[0]
        )
        if completion_floor >= COMPLETION_PSD_FLOOR:
            decision = "no-detection"
    report = {
        "version": REPORT_SCHEMA_VERSION,
        "config": config,
        "scenario_name": scenario.name,
        "lambda_star": solution.lambda_star,
        "beta_star": cert.beta,
        "duality_gap": solution.duality_gap,
        "iterations": solution.iterations,
        "decision": decision,
        "certificate": {
            "accepted": cert.accepted,
            "failures": list(cert.failures),
            "checks": {
                name: {"value": value, "ok": ok}
                for name, (value, ok) in cert.checks.items()
            },
        },
        "witness_path": None,
        "timings": {"build_seconds": None, "solve_seconds": None},
    }
    path = _write_artifact(out_dir, "report.json", report)
    print(
        f"{scenario.name}: decision {decision}, lambda_star {solution.lambda_star:.9g}, "
        f"gap {solution.duality_gap:.3g}, certificate "
        f"{'accepted' if cert.accepted else 'REJECTED'}"
    )
    print(
        f"report {path} (build {built - started:.2f}s, solve {solved - built:.2f}s)"
    )
    return EXIT_OK


def _scan_probe(payload):
    """Worker for grid pre-probes: one solve described by plain JSON data."""
    config, param, value = payload
    config = dict(config, scenario=dict(config["scenario"], **{param: value}))
    scenario, template, problem = _pipeline(config)
    solution = solve(problem, config["tol"])
    cert = certify(solution, problem)
    return {
        "param": value,
        "lambda_star": solution.lambda_star,
        "detected": steering_decision(solution.lambda_star, config["tol"]) == "steering",
        "certified": cert.accepted,
        "duality_gap": solution.duality_gap,
        "iterations": solution.iterations,
    }


def cmd_scan(config: dict, args, out_dir) -> int:
    family = config["scenario"]["family"]
    allowed = _SCAN_PARAMS.get(family, ())
    if args.param not in allowed:
        raise ConfigurationError(
            f"family {family!r} cannot scan {args.param!r}; choose from {allowed}"
        )
    if family == "gaussian" and args.param not in config["scenario"] and args.param != "r":
        raise ConfigurationError(
            f"scan parameter {args.param!r} requires the (a, b, c1, c2) config form"
        )
    lo, hi = float(args.min), float(args.max)
    if not lo < hi:
        raise ConfigurationError("scan range must satisfy --min < --max")
    if args.jobs < 1:
        raise ConfigurationError("--jobs must be at least 1")

    base = config["scenario"]

    def family_at(value):
        return scenario_from_config(
            dict(config, scenario=dict(base, **{args.param: value}))
        )

    scenario = family_at(lo)
    string_set = string_set_from_config(config, scenario)
    grid_points = []
    if args.jobs > 1:
        grid = np.linspace(lo, hi, args.jobs + 1)
        payloads = [(config, args.param, float(v)) for v in grid]
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            grid_points = list(pool.map(_scan_probe, payloads))
        flips = [
            i
            for i in range(len(grid) - 1)
            if grid_points[i]["detected"] != grid_points[i + 1]["detected"]
        ]
        if not flips:
            raise BracketingError(
                f"no threshold in range: detection does not change over "
                f"[{lo}, {hi}] on a {len(grid)}-point grid"
            )
        lo, hi = float(grid[flips[0]]), float(grid[flips[0] + 1])

    result = threshold_scan(
        family_at,
        lo,
        hi,
        string_set=string_set,
        policy=config["policy"],
        param_tol=float(args.tol),
        tol=config["tol"],
        param_name=args.param,
    )
    report = {
        "version": REPORT_SCHEMA_VERSION,
        "config": config,
        "param": args.param,
        "range": [float(args.min), float(args.max)],
        "param_tol": float(args.tol),
        "jobs": args.jobs,
        "grid_points": grid_points,
        "critical": result.critical,
        "bracket": list(result.bracket),
        "points": [p.as_dict() for p in result.points],
    }
    path = _write_artifact(out_dir, "scan.json", report)
    print(
        f"{config['scenario']['family']} {args.param}: critical "
        f"{result.critical:.6g} in [{result.bracket[0]:.6g}, {result.bracket[1]:.6g}] "
        f"after {len(result.points) + len(grid_points)} solves"
    )
    print(f"scan report {path}")
    return EXIT_OK


def cmd_witness_extract(config: dict, out_dir) -> int:
    scenario, template, problem = _pipeline(config)
    solution = solve(problem, config["tol"])
    witness = witness_from_dual(template, solution).normalized()
    witness.provenance.update(
        {
            "scenario": config["scenario"],
            "string_set": config["strings"],
            "tol": config["tol"],
        }
    )
    path = Path(out_dir) / "witness.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(serialize(witness))
    print(
        f"{scenario.name}: witness with {len(witness.terms)} terms, "
        f"constant {witness.constant:.6g}, written to {path}"
    )
    return EXIT_OK


def cmd_witness_eval(args) -> int:
    if (args.witness is None) == (args.fixture is None):
        raise ConfigurationError("pass exactly one of --witness PATH or --fixture NAME")
    if args.fixture is not None:
        if args.fixture not in _FIXTURES:
            raise ConfigurationError(
                f"unknown fixture {args.fixture!r}, expected one of {sorted(_FIXTURES)}"
            )
        witness = _FIXTURES[args.fixture]()
        label = args.fixture
    else:
        try:
            text = Path(args.witness).read_text()
        except OSError as err:
            raise ConfigurationError(f"cannot read witness {args.witness}: {err}") from None
        witness = deserialize(text)
        label = str(args.witness)
    config = load_config(args.config, tol_override=None, seed_override=args.seed)
    scenario = scenario_from_config(config)
    beta = evaluate(witness, scenario)
    print(
        json.dumps(
            {
                "witness": label,
                "scenario": config["scenario"],
                "beta": beta,
                "steering": bool(beta < -1e-7),
            },
            sort_keys=True,
        )
    )
    return EXIT_OK


def _correlations_from_args(args) -> PauliCorrelations:
    if (args.correlations is None) == (args.werner_w is None):
        raise ConfigurationError(
            "pass exactly one of --correlations CXX CYY CZZ or --werner-w W"
        )
    if args.werner_w is not None:
        w = args.werner_w
        return PauliCorrelations(-w, -w, -w)
    return PauliCorrelations(*args.correlations)


def _std_form_from_args(args) -> GaussianStdForm:
    if (args.tmsv_r is None) == (args.std_form is None):
        raise ConfigurationError(
            "pass exactly one of --tmsv-r R or --std-form A B C1 C2"
        )
    if args.tmsv_r is not None:
        return two_mode_squeezed_std_form(args.tmsv_r)
    return GaussianStdForm(*args.std_form)


def cmd_analytic(args) -> int:
    name = args.criterion
    if name == "pauli-linear":
        value, fired = pauli_linear_witness(_correlations_from_args(args))
        out = {"criterion": name, "value": value, "steering": fired}
    elif name == "pauli-nonlinear":
        value, fired = pauli_nonlinear_criterion(_correlations_from_args(args))
        out = {"criterion": name, "value": value, "steering": fired}
    elif name == "pauli-two-setting":
        pairs = pauli_two_setting_criteria(_correlations_from_args(args))
        out = {
            "criterion": name,
            "pairs": [
                {"axes": "".join(p.axes), "value": p.value, "steering": p.steering}
                for p in pairs
            ],
            "steering": any(p.steering for p in pairs),
        }
    elif name == "gaussian-det":
        value, fired = gaussian_det_criterion(_std_form_from_args(args))
        out = {"criterion": name, "value": value, "steering": fired}
    elif name == "gaussian-wiseman":
        value, fired = gaussian_wiseman_criterion(_std_form_from_args(args))
        out = {"criterion": name, "min_eigenvalue": value, "steering": fired}
    elif name == "gaussian-exists-r":
        completion = gaussian_exists_completion(_std_form_from_args(args))
        out = {
            "criterion": name,
            "exists": completion.exists,
            "best_r": completion.best_r,
            "min_eigenvalue": completion.min_eigenvalue,
            "steering": not completion.exists,
        }
    else:
        raise ConfigurationError(f"unknown criterion {name!r}")
    print(json.dumps(out, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="steermoments",
        description="Moment-matrix steering detection with dual witnesses.",
    )
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument(
        "--tol", type=float, default=None, help="override the solver tolerance"
    )
    parser.add_argument(
        "--out", default=".", help="directory for machine-readable artifacts"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="solve one scenario and report the decision")
    p_solve.add_argument("--config", required=True)

    p_scan = sub.add_parser("scan", help="bisect a scenario family for its threshold")
    p_scan.add_argument("--config", required=True)
    p_scan.add_argument("--param", required=True)
    p_scan.add_argument("--min", required=True, type=float)
    p_scan.add_argument("--max", required=True, type=float)
    p_scan.add_argument("--tol", required=True, type=float, dest="param_tolerance")
    p_scan.add_argument("--jobs", type=int, default=1)

    p_wit = sub.add_parser("witness", help="extract or evaluate steering witnesses")
    wit_sub = p_wit.add_subparsers(dest="witness_command", required=True)
    p_ext = wit_sub.add_parser("extract", help="solve and write the dual witness")
    p_ext.add_argument("--config", required=True)
    p_eval = wit_sub.add_parser("eval", help="evaluate a witness document on a scenario")
    p_eval.add_argument("--config", required=True)
    p_eval.add_argument("--witness", default=None)
    p_eval.add_argument("--fixture", default=None)

    p_ana = sub.add_parser("analytic", help="closed-form criteria")
    p_ana.add_argument(
        "criterion",
        choices=(
            "pauli-linear",
            "pauli-nonlinear",
            "pauli-two-setting",
            "gaussian-det",
            "gaussian-wiseman",
            "gaussian-exists-r",
        ),
    )
    p_ana.add_argument("--correlations", nargs=3, type=float, default=None)
    p_ana.add_argument("--werner-w", type=float, default=None)
    p_ana.add_argument("--tmsv-r", type=float, default=None)
    p_ana.add_argument("--std-form", nargs=4, type=float, default=None)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "solve":
            config = load_config(args.config, tol_override=args.tol, seed_override=args.seed)
            return cmd_solve(config, args.out)
        if args.command == "scan":
            config = load_config(args.config, tol_override=args.tol, seed_override=args.seed)
            scan_args = argparse.Namespace(
                param=args.param,
                min=args.min,
                max=args.max,
                tol=args.param_tolerance,
                jobs=args.jobs,
            )
            return cmd_scan(config, scan_args, args.out)
        if args.command == "witness":
            if args.witness_command == "extract":
                config = load_config(
                    args.config, tol_override=args.tol, seed_override=args.seed
                )
                return cmd_witness_extract(config, args.out)
            return cmd_witness_eval(args)
        return cmd_analytic(args)
    except ConfigurationError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalTroubleError as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL
    except BracketingError as err:
        print(f"bracketing failure: {err}", file=sys.stderr)
        return EXIT_BRACKETING


if __name__ == "__main__":
    sys.exit(main())
