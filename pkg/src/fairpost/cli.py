"""Command-line surface: dataset ingestion, solve/sweep/audit/calibrate/synth/eval.

Datasets are CSV files with header ``id,score[,y],g_<name>...`` (UTF-8,
comma-separated, dot decimal, LF or CRLF).  Exit codes: 0 success, 1 input
error, 2 guarantee miss, 3 budget exceeded.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .core import (
    CellDistribution,
    FairnessNotion,
    MixtureClassifier,
    BaseRates,
    build_cells,
)
from .metrics import base_rates, constraint_vector, surrogate_error, true_rates
from .multical import assignment_from_scores, audit, brier, calibrate, default_checks
from .oracle import enumerate_optimum
from .solver import BudgetExceededError, SolverConfig, run
from .synth import SplitMix64, SynthSpec, gen_instance

__all__ = ["main"]

TRAJECTORY_SCHEMA = "# schema: fairpost.trajectory.v1"
PARETO_SCHEMA = "# schema: fairpost.pareto.v1"
HISTORY_SCHEMA = "# schema: fairpost.calibration-history.v1"

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_GUARANTEE = 2
EXIT_BUDGET = 3


class InputError(ValueError):
    pass


def _fmt(x) -> str:
    if x is None:
        return ""
    return repr(float(x))


# ---------------------------------------------------------------- datasets

def read_dataset(path: str, grid_m: int) -> Tuple[CellDistribution, bool]:
    """Parse a dataset CSV into a cell distribution.

    Returns (distribution, has_labels).  A synthetic all-ones group I is
    prepended when no column covers every row.
    """
    try:
        fh = open(path, "r", encoding="utf-8-sig", newline="")
    except OSError as exc:
        raise InputError(f"cannot open dataset {path!r}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError("empty dataset: missing header")
        header = [h.strip() for h in header]
        if len(header) < 2 or header[0] != "id" or header[1] != "score":
            raise InputError("header must start with 'id,score'")
        has_y = len(header) > 2 and header[2] == "y"
        group_cols = list(range(3 if has_y else 2, len(header)))
        group_names = []
        for i in group_cols:
            if not header[i].startswith("g_"):
                raise InputError(f"column {header[i]!r} is not a group column (g_<name>)")
            group_names.append(header[i][2:])
        if not group_cols:
            raise InputError("dataset has no group columns")

        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(header):
                raise InputError(f"row {lineno}: expected {len(header)} fields, got {len(rec)}")
            try:
                score = float(rec[1])
            except ValueError:
                raise InputError(f"row {lineno}: score {rec[1]!r} is not a number")
            if not 0.0 <= score <= 1.0:
                raise InputError(f"row {lineno}: score {score!r} outside [0, 1]")
            label = None
            if has_y:
                if rec[2] not in ("0", "1"):
                    raise InputError(f"row {lineno}: y must be 0 or 1, got {rec[2]!r}")
                label = int(rec[2])
            bits = []
            for i in group_cols:
                if rec[i] not in ("0", "1"):
                    raise InputError(
                        f"row {lineno}: group {header[i]!r} must be 0 or 1, got {rec[i]!r}")
                bits.append(int(rec[i]))
            rows.append((score, tuple(bits), label))

    if not rows:
        raise InputError("empty dataset: no data rows")
    if not any(all(r[1][i] for r in rows) for i in range(len(group_names))):
        all_name = "I" if "I" not in group_names else "_all"
        group_names = [all_name] + group_names
        rows = [(s, (1,) + b, y) for s, b, y in rows]
    try:
        dist = build_cells(rows, grid_m, group_names=tuple(group_names))
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    return dist, has_y


def _write_dataset(path: Path, rows: List[tuple], group_names: Sequence[str],
                   with_labels: bool) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        cols = ["id", "score"] + (["y"] if with_labels else []) + [f"g_{n}" for n in group_names]
        fh.write(",".join(cols) + "\n")
        for i, (score, bits, y) in enumerate(rows):
            rec = [str(i), _fmt(score)]
            if with_labels:
                rec.append(str(y))
            rec.extend(str(b) for b in bits)
            fh.write(",".join(rec) + "\n")


# ---------------------------------------------------------------- manifests

def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_manifest(out_dir: Path, command: str, config: dict, input_path: Optional[str],
                    timings: dict, outputs: List[str], extra: Optional[dict] = None) -> None:
    manifest = {
        "command": command,
        "config": config,
        "input_sha256": _sha256(input_path) if input_path else None,
        "version": __version__,
        "timings_seconds": timings,
        "outputs": outputs,
    }
    if extra:
        manifest.update(extra)
    for name in outputs:
        if not (out_dir / name).exists():
            raise RuntimeError(f"manifest names missing output {name!r}")
    _write_json(out_dir / "manifest.json", manifest)


# ---------------------------------------------------------------- config

_CONFIG_KEYS = ("notion", "gamma", "C", "eta", "T", "projection", "beta_mode",
                "grid_m", "record_every", "seed", "work_cap")


def _load_config(args) -> dict:
    config = {
        "notion": "fp", "gamma": 0.05, "C": 10.0, "eta": "auto", "T": "auto",
        "projection": "euclidean", "beta_mode": "from_scores", "grid_m": 100,
        "record_every": 100, "seed": 0, "work_cap": 5e9,
    }
    if getattr(args, "config", None):
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                loaded = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read config {args.config!r}: {exc}") from exc
        for key, value in loaded.items():
            if key not in _CONFIG_KEYS:
                raise InputError(f"unknown config key {key!r}")
            config[key] = value
    for key in _CONFIG_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            config[key] = value
    return config


def _solver_config(config: dict) -> SolverConfig:
    projection = {"euclidean": "euclidean_l1", "euclidean_l1": "euclidean_l1",
                  "rescale": "rescale"}.get(config["projection"])
    if projection is None:
        raise InputError(f"unknown projection {config['projection']!r}")
    eta = config["eta"]
    T = config["T"]
    try:
        return SolverConfig(
            notion=config["notion"], gamma=float(config["gamma"]), C=float(config["C"]),
            eta=eta if eta == "auto" else float(eta),
            T=T if T == "auto" else int(T),
            projection_mode=projection, beta_mode=config["beta_mode"],
            record_every=int(config["record_every"]), work_cap=float(config["work_cap"]))
    except ValueError as exc:
        raise InputError(str(exc)) from exc


# ---------------------------------------------------------------- solve

def _write_trajectory(path: Path, trajectory) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(TRAJECTORY_SCHEMA + "\n")
        fh.write("t,err_hat,max_violation_hat,lambda_l1,duality_gap_estimate\n")
        for rec in trajectory:
            fh.write(f"{rec.t},{_fmt(rec.err_hat)},{_fmt(rec.max_violation_hat)},"
                     f"{_fmt(rec.lambda_l1)},{_fmt(rec.duality_gap_estimate)}\n")


def _mixture_payload(mixture: MixtureClassifier, dist: CellDistribution,
                     gamma: float) -> dict:
    return {
        "schema": "fairpost.mixture.v1",
        "notion": mixture.notion.value,
        "gamma": gamma,
        "grid_m": dist.grid_m,
        "group_names": list(dist.groups.names),
        "beta": [float(b) for b in mixture.base.beta],
        "w": [float(w) for w in mixture.base.w],
        "tiebreak_positive": mixture.tiebreak_positive,
        "lambdas": [[float(v) for v in row] for row in mixture.lambdas],
    }


def load_mixture(path: str) -> Tuple[MixtureClassifier, dict]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read mixture {path!r}: {exc}") from exc
    if payload.get("schema") != "fairpost.mixture.v1":
        raise InputError("unrecognized mixture schema")
    notion = FairnessNotion.coerce(payload["notion"])
    base = BaseRates(notion, np.array(payload["beta"]), np.array(payload["w"]))
    mixture = MixtureClassifier(np.array(payload["lambdas"], dtype=float), notion, base,
                                payload.get("tiebreak_positive", True))
    return mixture, payload


def _solve_report(result, dist: CellDistribution, has_labels: bool, gamma: float,
                  guarantee_tol: float) -> Tuple[dict, int]:
    p = result.mixture.positive_prob_vector(dist)
    notion = result.mixture.notion
    cons = constraint_vector(p, dist, notion, result.base)
    err_hat = surrogate_error(p, dist)
    bounds = result.theorem_bounds
    threshold = gamma + bounds["violation_slack"] + guarantee_tol
    max_viol = float(np.abs(cons).max())
    report = {
        "notion": notion.value,
        "gamma": gamma,
        "err_hat": err_hat,
        "per_group_constraint_abs": {
            name: abs(float(v)) for name, v in zip(dist.groups.names, cons)},
        "max_violation_hat": max_viol,
        "theorem_bounds": bounds,
        "iterations": result.T,
        "eta": result.eta,
        "guarantee_threshold": threshold,
    }
    if has_labels:
        rep = true_rates(p, dist, notion)
        report["true"] = {
            "err": rep.err,
            "max_violation": rep.max_violation,
            "violation_by_group": {
                name: float(v) for name, v in zip(dist.groups.names, rep.violation_by_group)},
        }
    # the gate watches the surrogate constraint report; true-rate transfer
    # additionally needs a calibrated score function
    report["guarantee_ok"] = max_viol <= threshold
    return report, EXIT_OK if report["guarantee_ok"] else EXIT_GUARANTEE


def cmd_solve(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    config = _load_config(args)
    solver_config = _solver_config(config)
    t0 = time.perf_counter()
    dist, has_labels = read_dataset(args.dataset, int(config["grid_m"]))
    t_parse = time.perf_counter() - t0
    try:
        result = run(dist, solver_config)
    except BudgetExceededError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    t_solve = time.perf_counter() - t0 - t_parse

    _write_trajectory(out_dir / "trajectory.csv", result.trajectory)
    _write_json(out_dir / "mixture.json",
                _mixture_payload(result.mixture, dist, solver_config.gamma))
    report, code = _solve_report(result, dist, has_labels, solver_config.gamma,
                                 args.guarantee_tol)
    report["exit_code"] = code
    _write_json(out_dir / "report.json", report)
    _write_manifest(
        out_dir, "solve", config, args.dataset,
        {"parse": t_parse, "solve": t_solve},
        ["mixture.json", "trajectory.csv", "report.json"],
        extra={"theorem_bounds": result.theorem_bounds})
    return code


# ---------------------------------------------------------------- sweep

def _sweep_one(dist, has_labels, config, gamma):
    cfg = dict(config)
    cfg["gamma"] = gamma
    solver_config = _solver_config(cfg)
    result = run(dist, solver_config)
    p = result.mixture.positive_prob_vector(dist)
    err_hat = surrogate_error(p, dist)
    cons = constraint_vector(p, dist, solver_config.notion, result.base)
    if has_labels:
        rep = true_rates(p, dist, solver_config.notion)
        return gamma, err_hat, rep.err, rep.max_violation, "ok"
    return gamma, err_hat, None, float(np.abs(cons).max()), "ok"


def cmd_sweep(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    config = _load_config(args)
    try:
        gammas = sorted(float(g) for g in args.gammas.split(","))
    except ValueError:
        print("error: --gammas must be a comma-separated list of numbers", file=sys.stderr)
        return EXIT_INPUT
    if any(g < 0 for g in gammas):
        print("error: gamma values must be nonnegative", file=sys.stderr)
        return EXIT_INPUT
    t0 = time.perf_counter()
    dist, has_labels = read_dataset(args.dataset, int(config["grid_m"]))

    workers = int(os.environ.get("FAIRPOST_WORKERS", "0")) or min(len(gammas), os.cpu_count() or 1)
    rows = []
    failures = 0
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = {g: pool.submit(_sweep_one, dist, has_labels, config, g) for g in gammas}
        for g in gammas:
            try:
                rows.append(futures[g].result())
            except BudgetExceededError as exc:
                message = str(exc).replace(",", ";")
                rows.append((g, None, None, None, f"error: {message}"))
                failures += 1
            except Exception as exc:  # per-row failure, reported in the csv
                message = str(exc).replace(",", ";").replace("\n", " ")
                rows.append((g, None, None, None, f"error: {message}"))
                failures += 1

    with open(out_dir / "pareto.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(PARETO_SCHEMA + "\n")
        fh.write("gamma,err_hat,true_err,max_violation,status\n")
        for g, err_hat, true_err, viol, status in rows:
            fh.write(f"{_fmt(g)},{_fmt(err_hat)},{_fmt(true_err)},{_fmt(viol)},{status}\n")
    outputs = ["pareto.csv"]
    if args.svg:
        _write_pareto_svg(out_dir / "pareto.svg", rows)
        outputs.append("pareto.svg")
    _write_manifest(out_dir, "sweep", config, args.dataset,
                    {"total": time.perf_counter() - t0}, outputs)
    return EXIT_OK if failures == 0 else EXIT_INPUT


def _write_pareto_svg(path: Path, rows) -> None:
    pts = [(r[0], r[1]) for r in rows if r[1] is not None]
    width, height, pad = 480, 320, 40
    if pts:
        xs, ys = zip(*pts)
        x0, x1 = min(xs), max(xs) or 1.0
        y0, y1 = min(ys), max(ys)
        xs_span = (x1 - x0) or 1.0
        ys_span = (y1 - y0) or 1.0
        coords = [
            (pad + (x - x0) / xs_span * (width - 2 * pad),
             height - pad - (y - y0) / ys_span * (height - 2 * pad))
            for x, y in pts
        ]
        polyline = " ".join(f"{x:.1f},{y:.1f}" for x, y in coords)
        circles = "".join(
            f'<circle cx="{x:.1f}" cy="{y:.1f}" r="3" fill="steelblue"/>' for x, y in coords)
        legend = f"gamma in [{min(xs):g}, {max(xs):g}]"
    else:
        polyline, circles, legend = "", "", "no data"
    svg = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">'
        f'<polyline fill="none" stroke="steelblue" points="{polyline}"/>{circles}'
        f'<text x="{width//2}" y="{height-8}" text-anchor="middle" font-size="12">gamma</text>'
        f'<text x="12" y="{height//2}" font-size="12" transform="rotate(-90 12 {height//2})">error</text>'
        f'<text x="{width-pad}" y="{pad}" text-anchor="end" font-size="12">{legend}</text>'
        "</svg>\n")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(svg)


# ---------------------------------------------------------------- audit / calibrate

def _build_checks(dist, args, trajectory_lambdas=None):
    base = base_rates(dist, FairnessNotion.FP,
                      "from_labels" if dist.has_labels() else "from_scores")
    return default_checks(dist, base, n_random=args.n_random_checks, C=args.check_C,
                          seed=args.seed, trajectory_lambdas=trajectory_lambdas)


def cmd_audit(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    dist, has_labels = read_dataset(args.dataset, args.grid_m)
    if not has_labels:
        print("error: audit requires labeled data (y column)", file=sys.stderr)
        return EXIT_INPUT
    checks = _build_checks(dist, args)
    assignment = assignment_from_scores(dist, args.grid_m)
    per_check, max_violation = audit(assignment, checks, dist)
    _write_json(out_dir / "audit.json", {
        "max_violation": max_violation,
        "per_check": [{"name": c.name or c.kind, "kind": c.kind, "violation": v}
                      for c, v in zip(checks, per_check)],
    })
    _write_manifest(out_dir, "audit",
                    {"grid_m": args.grid_m, "n_random_checks": args.n_random_checks,
                     "check_C": args.check_C, "seed": args.seed},
                    args.dataset, {"total": time.perf_counter() - t0}, ["audit.json"])
    return EXIT_OK


def cmd_calibrate(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    dist, has_labels = read_dataset(args.dataset, args.grid_m)
    if not has_labels:
        print("error: calibrate requires labeled data (y column)", file=sys.stderr)
        return EXIT_INPUT
    checks = _build_checks(dist, args)
    result = calibrate(dist.scores, checks, dist, args.alpha)
    with open(out_dir / "calibration_history.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(HISTORY_SCHEMA + "\n")
        fh.write("round,check,level,v_tilde,v_prime,potential,mass\n")
        for rec in result.history:
            name = checks[rec.check_index].name or checks[rec.check_index].kind
            fh.write(f"{rec.round},{name},{_fmt(rec.level)},{_fmt(rec.v_tilde)},"
                     f"{_fmt(rec.v_prime)},{_fmt(rec.potential)},{_fmt(rec.mass)}\n")
    per_check, max_violation = audit(result.assignment, checks, dist)
    _write_json(out_dir / "calibration.json", {
        "alpha": args.alpha,
        "rounds": result.rounds,
        "round_cap": int(4.0 / args.alpha ** 2),
        "initial_potential": brier(result.initial_assignment, dist),
        "final_potential": result.final_potential,
        "post_audit_max_violation": max_violation,
    })
    _write_manifest(out_dir, "calibrate",
                    {"alpha": args.alpha, "grid_m": args.grid_m,
                     "n_random_checks": args.n_random_checks,
                     "check_C": args.check_C, "seed": args.seed},
                    args.dataset, {"total": time.perf_counter() - t0},
                    ["calibration_history.csv", "calibration.json"])
    return EXIT_OK


# ---------------------------------------------------------------- synth / eval

def cmd_synth(args) -> int:
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    spec = SynthSpec(seed=args.seed, n_cells=args.n_cells, n_groups=args.n_groups,
                     grid_m=args.grid_m, bias_profile=args.profile,
                     miscalibration=args.miscalibration)
    exact, perturbed = gen_instance(spec)
    dist = exact if args.exact_scores else perturbed
    rng = SplitMix64((args.seed << 1) ^ 0xD1B54A32D192ED03)
    cum = np.cumsum(dist.masses)
    rows = []
    names = dist.groups.names
    for _ in range(args.samples):
        u = rng.uniform()
        idx = int(np.searchsorted(cum, u, side="right"))
        idx = min(idx, dist.n_cells - 1)
        cell = dist.cells[idx]
        y = int(rng.uniform() < cell.label_mean)
        bits = tuple((cell.groups >> i) & 1 for i in range(len(names)))
        rows.append((cell.score, bits, y))
    _write_dataset(out, rows, names, with_labels=not args.no_labels)
    return EXIT_OK


def cmd_eval(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    mixture, payload = load_mixture(args.mixture)
    dist, has_labels = read_dataset(args.dataset, payload["grid_m"])
    if list(dist.groups.names) != payload["group_names"]:
        raise InputError(
            f"dataset groups {list(dist.groups.names)} do not match mixture "
            f"groups {payload['group_names']}")
    p = mixture.positive_prob_vector(dist)
    report = {
        "err_hat": surrogate_error(p, dist),
        "max_violation_hat": float(np.abs(
            constraint_vector(p, dist, mixture.notion, mixture.base)).max()),
    }
    if has_labels:
        rep = true_rates(p, dist, mixture.notion)
        report["true"] = {"err": rep.err, "max_violation": rep.max_violation}
    if args.oracle:
        if dist.n_cells > args.max_cells:
            print(f"error: oracle guard: {dist.n_cells} cells > --max-cells "
                  f"{args.max_cells}", file=sys.stderr)
            return EXIT_INPUT
        gamma = args.gamma if args.gamma is not None else payload.get("gamma", 0.0)
        base = base_rates(dist, mixture.notion,
                          "from_labels" if has_labels else "from_scores")
        sol = enumerate_optimum(dist, mixture.notion, base, gamma,
                                max_cells=args.max_cells)
        report["oracle"] = {
            "gamma": gamma,
            "opt_value": sol.opt_value,
            "err_gap": report["err_hat"] - sol.opt_value,
            "support_size": len(sol.support),
        }
    _write_json(out_dir / "evaluation.json", report)
    _write_manifest(out_dir, "eval", {"mixture": args.mixture, "oracle": args.oracle},
                    args.dataset, {"total": time.perf_counter() - t0},
                    ["evaluation.json"])
    return EXIT_OK


# ---------------------------------------------------------------- parser

def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat JSON config file; flags override it")
    p.add_argument("--notion", choices=["fp", "fn", "err", "sp"])
    p.add_argument("--gamma", type=float)
    p.add_argument("--C", type=float, dest="C")
    p.add_argument("--eta")
    p.add_argument("--T", dest="T")
    p.add_argument("--projection", choices=["euclidean", "rescale"])
    p.add_argument("--beta-mode", dest="beta_mode", choices=["from_scores", "from_labels"])
    p.add_argument("--grid-m", dest="grid_m", type=int)
    p.add_argument("--record-every", dest="record_every", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--work-cap", dest="work_cap", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fairpost",
        description="Post-process regression scores into fairness-constrained "
                    "randomized classifiers.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="fit a constrained mixture on a dataset")
    p.add_argument("dataset")
    _add_config_flags(p)
    p.add_argument("--guarantee-tol", type=float, default=0.01)
    p.add_argument("--out-dir", default="out")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="pareto sweep over gamma values")
    p.add_argument("dataset")
    _add_config_flags(p)
    p.add_argument("--gammas", required=True, help="comma-separated gamma list")
    p.add_argument("--svg", action="store_true")
    p.add_argument("--out-dir", default="out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("audit", help="multicalibration audit of the scores")
    p.add_argument("dataset")
    p.add_argument("--grid-m", dest="grid_m", type=int, default=100)
    p.add_argument("--n-random-checks", type=int, default=64)
    p.add_argument("--check-C", type=float, default=10.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default="out")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("calibrate", help="patch scores toward joint multicalibration")
    p.add_argument("dataset")
    p.add_argument("--alpha", type=float, default=0.01)
    p.add_argument("--grid-m", dest="grid_m", type=int, default=100)
    p.add_argument("--n-random-checks", type=int, default=64)
    p.add_argument("--check-C", type=float, default=10.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default="out")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("synth", help="emit a sampled synthetic dataset")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--n-cells", type=int, default=8)
    p.add_argument("--n-groups", type=int, default=2)
    p.add_argument("--grid-m", type=int, default=20)
    p.add_argument("--profile", choices=["uniform", "two_group_bias", "adversarial_overlap"],
                   default="two_group_bias")
    p.add_argument("--miscalibration", type=float, default=0.0)
    p.add_argument("--samples", type=int, default=20000)
    p.add_argument("--no-labels", action="store_true")
    p.add_argument("--exact-scores", action="store_true",
                   help="emit the exact scores instead of the perturbed twin")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval", help="evaluate a saved mixture, optionally vs the oracle")
    p.add_argument("dataset")
    p.add_argument("--mixture", required=True)
    p.add_argument("--oracle", action="store_true")
    p.add_argument("--gamma", type=float)
    p.add_argument("--max-cells", type=int, default=16)
    p.add_argument("--out-dir", default="out")
    p.set_defaults(func=cmd_eval)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except BudgetExceededError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET


if __name__ == "__main__":
    sys.exit(main())
